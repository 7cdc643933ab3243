//! Acceptance suite: one PASS/FAIL line per criterion, nonzero exit on any failure.

use std::panic::{catch_unwind, AssertUnwindSafe};
use std::process::ExitCode;
use std::time::Instant;

use csflock_core::diagnostics::{
    collision_certificate, detect_bicluster, detect_flocking_with, dispersions, flocking_certificate,
    lyapunov_series, verify_dissipation, FlockingOptions,
};
use csflock_core::exp::scenario::{two_cluster, uniform_box};
use csflock_core::integrator::integrate_partial;
use csflock_core::line1d::{
    fit_sticking_exponent, regularity_exponents, sticking_rate_bounds, sticking_samples, two_body_closed_form,
};
use csflock_core::model::{max_speed, momentum_sum};
use csflock_core::{
    integrate, min_gap_trace, EventKind, GBounds, IntegratorConfig, Kernel, LineSystem, Params, State, Trajectory,
    VelocityControl,
};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

type Outcome = (bool, String);
type Criterion = (&'static str, fn() -> Outcome, f64);

fn random_control(rng: &mut ChaCha8Rng) -> VelocityControl {
    match rng.gen_range(0..3) {
        0 => VelocityControl::Identity,
        1 => VelocityControl::tanh(rng.gen_range(0.5..2.0)).unwrap(),
        _ => VelocityControl::relativistic(rng.gen_range(1.0..3.0)).unwrap(),
    }
}

fn random_regular_kernel(rng: &mut ChaCha8Rng) -> Kernel {
    let text = match rng.gen_range(0..3) {
        0 => format!("rational:beta={}", rng.gen_range(0.5..2.0)),
        1 => format!("classic:beta={}", rng.gen_range(0.5..2.0)),
        _ => format!("exp:lambda={}", rng.gen_range(0.1..1.0)),
    };
    text.parse().unwrap()
}

fn random_state(rng: &mut ChaCha8Rng, n_max: usize, min_sep: Option<f64>) -> State {
    let n = rng.gen_range(2..=n_max);
    let d = rng.gen_range(1..=3);
    let (q, p) = uniform_box(n, d, 1.0, 1.0, min_sep, rng.gen()).unwrap();
    State::new(0.0, n, d, q, p).unwrap()
}

/// `sqrt(Σ_{i,j} |x_i − x_j|²)` over ordered pairs.
fn pair_norm(d: usize, x: &[f64]) -> f64 {
    let n = x.len() / d;
    let mut s = 0.0;
    for i in 0..n {
        for j in 0..n {
            for a in 0..d {
                let v = x[i * d + a] - x[j * d + a];
                s += v * v;
            }
        }
    }
    s.sqrt()
}

fn crit1_closed_form() -> Outcome {
    let sys = LineSystem::from_initial(&[1.0, 0.0], &[-1.0, 1.0], &Kernel::power(0.5).unwrap(), 1.0, VelocityControl::Identity)
        .unwrap();
    let cfg = IntegratorConfig { output_interval: Some(1e-3), ..IntegratorConfig::with_t_end(3.0).with_tolerances(1e-11, 1e-14) };
    let (traj, log) = sys.simulate(&cfg).unwrap();
    let Some(stick) = log.stick_event(0, 1) else {
        return (false, "no StickStart event".into());
    };
    let t_star = stick.time;
    let mut worst: f64 = 0.0;
    for s in &traj.snapshots {
        if (s.t - 1.0).abs() < 1e-3 {
            continue;
        }
        let (a, b) = two_body_closed_form(1.0, 0.0, 1.0, s.t).unwrap();
        worst = worst.max((s.q[0] - a).abs()).max((s.q[1] - b).abs());
    }
    let ok = worst <= 1e-6 && (t_star - 1.0).abs() <= 1e-3;
    (ok, format!("max |Δq| = {worst:.2e} over {} snapshots, t* = {t_star:.9}", traj.snapshots.len()))
}

fn crit2_conservation() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let mut worst_drift: f64 = 0.0;
    let mut worst_rise: f64 = 0.0;
    for _ in 0..50 {
        let s0 = random_state(&mut rng, 16, None);
        let kernel = random_regular_kernel(&mut rng);
        let g = random_control(&mut rng);
        let params = Params::new(s0.n, s0.d, rng.gen_range(0.5..3.0)).unwrap();
        let t_end = 5.0;
        let cfg = IntegratorConfig { output_interval: Some(0.05), ..IntegratorConfig::with_t_end(t_end).with_tolerances(1e-10, 1e-13) };
        let traj = integrate(&s0, &kernel, &g, &params, &cfg).unwrap();
        let m0 = momentum_sum(&s0);
        for s in &traj.snapshots {
            let drift = momentum_sum(s).iter().zip(&m0).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
            if s.t > 0.0 {
                worst_drift = worst_drift.max(drift / s.t.max(1.0));
            }
        }
        for w in traj.snapshots.windows(2) {
            worst_rise = worst_rise.max(max_speed(&w[1]) - max_speed(&w[0]));
        }
    }
    let ok = worst_drift <= 1e-8 && worst_rise <= 1e-8;
    (ok, format!("max drift per unit time {worst_drift:.2e}, max speed rise {worst_rise:.2e}"))
}

fn crit3_flocking() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let opts = FlockingOptions::default();
    let (mut holding, mut failures, mut worst_lyap) = (0, Vec::new(), 0.0f64);
    let mut worst_ratio = f64::INFINITY;
    for run in 0..100 {
        let s0 = random_state(&mut rng, 8, None);
        let kernel = random_regular_kernel(&mut rng);
        let g = random_control(&mut rng);
        let kappa = rng.gen_range(0.5..3.0);
        let params = Params::new(s0.n, s0.d, kappa).unwrap();
        let gb = g.bounds(max_speed(&s0)).unwrap();
        let q0 = pair_norm(s0.d, &s0.q);
        let t_end = (20.0 / (kappa * gb.script_m * kernel.psi(2.0 * q0).unwrap())).min(2000.0);
        let cfg = IntegratorConfig { output_interval: Some(t_end / 400.0), ..IntegratorConfig::with_t_end(t_end) };
        let traj = integrate(&s0, &kernel, &g, &params, &cfg).unwrap();

        let lyap = lyapunov_series(&traj, &kernel, &g, kappa).unwrap();
        let mut lowest = lyap[0];
        for &l in &lyap {
            worst_lyap = worst_lyap.max(l - lowest);
            lowest = lowest.min(l);
        }

        if !flocking_certificate(&s0, &kernel, &g, kappa).unwrap().holds {
            continue;
        }
        holding += 1;
        let sup_q = traj.snapshots.iter().map(|s| pair_norm(s.d, &s.q)).fold(0.0, f64::max);
        let floor = kappa * gb.script_m * kernel.psi(sup_q).unwrap();
        let v = detect_flocking_with(&traj, &opts).unwrap();
        worst_ratio = worst_ratio.min(v.rate / floor);
        if !v.is_flocking || v.rate < 0.9 * floor {
            failures.push(format!("run {run}: {v:?}, floor {floor:.3e}"));
        }
    }
    let ok = failures.is_empty() && worst_lyap <= 1e-6 && holding > 0;
    (
        ok,
        format!(
            "{holding}/100 certified, {} failures, min rate/bound {worst_ratio:.2}, max ℒ rise {worst_lyap:.2e}{}",
            failures.len(),
            failures.first().map(|f| format!("; first: {f}")).unwrap_or_default()
        ),
    )
}

fn crit4_trichotomy() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let (mut pairs, mut mismatches) = (0, Vec::new());
    let mut counts = [0usize; 3];
    for run in 0..200 {
        let n = rng.gen_range(2..=6);
        let alpha = [0.25, 0.5, 0.75][rng.gen_range(0..3)];
        let mut q: Vec<f64> = Vec::new();
        while q.len() < n {
            let x: f64 = rng.gen_range(0.0..5.0);
            if q.iter().all(|y| (x - y).abs() > 0.05) {
                q.push(x);
            }
        }
        // Integer ν over a small range forces ties.
        let nu: Vec<f64> = (0..n).map(|_| rng.gen_range(-2..=2) as f64).collect();
        let kappa = rng.gen_range(0.5..2.0);
        let sys = LineSystem::new(q, nu, kappa, alpha, VelocityControl::Identity).unwrap();
        let predicted = sys.predict_pairwise();
        let (_, log) = sys.simulate(&IntegratorConfig::with_t_end(50.0)).unwrap();
        for i in 0..n {
            for j in i + 1..n {
                pairs += 1;
                let p = predicted[i][j];
                counts[match p {
                    Some(csflock_core::PairOutcome::NeverMeet) => 0,
                    Some(csflock_core::PairOutcome::CollideOnce) => 1,
                    _ => 2,
                }] += 1;
                if log.observed(i, j) != p {
                    mismatches.push(format!("run {run} pair ({i},{j}): predicted {p:?}, observed {:?}", log.observed(i, j)));
                }
            }
        }
    }
    let ok = mismatches.is_empty();
    (
        ok,
        format!(
            "{}/{pairs} pairs match (never {}, collide {}, stick {}){}",
            pairs - mismatches.len(),
            counts[0],
            counts[1],
            counts[2],
            mismatches.first().map(|m| format!("; first: {m}")).unwrap_or_default()
        ),
    )
}

/// Relative slack on the lower rate bound; for two agents it holds with equality.
const D1_REL_SLACK: f64 = 1e-6;

fn crit5_sticking_rate() -> Outcome {
    let kappa = 10.0;
    let window = (1e-4, 1e-2);
    let mut ok = true;
    let mut parts = Vec::new();
    for alpha in [0.4, 0.5, 0.6] {
        let sys = LineSystem::new(vec![1.0, 0.0], vec![0.0, 0.0], kappa, alpha, VelocityControl::Identity).unwrap();
        let t_star_exact = (1.0 - alpha) / (kappa * alpha);
        let cfg = IntegratorConfig {
            output_interval: Some(1e-5),
            ..IntegratorConfig::with_t_end(2.0 * t_star_exact).with_tolerances(1e-13, 1e-18)
        };
        let (traj, log) = sys.simulate(&cfg).unwrap();
        let Some(event) = log.stick_event(0, 1) else {
            ok = false;
            parts.push(format!("α={alpha}: no sticking"));
            continue;
        };
        let (slope, _) = fit_sticking_exponent(&traj, event, window).unwrap();
        let gb = GBounds::new(0.0, 1.0, 1.0);
        let (d1, d2) = sticking_rate_bounds(kappa, alpha, 2, &gb).unwrap();
        let (xs, ys) = sticking_samples(&traj, event.time, 0, 1, window);
        let mut lo: f64 = f64::INFINITY;
        let mut hi: f64 = 0.0;
        for (le, lg) in xs.iter().zip(&ys) {
            let scaled = lg.exp() / le.exp().powf(1.0 / alpha);
            lo = lo.min(scaled);
            hi = hi.max(scaled);
        }
        let slope_ok = (slope * alpha - 1.0).abs() <= 0.05;
        let band_ok = lo >= d1 * (1.0 - D1_REL_SLACK) && hi <= d2;
        ok &= slope_ok && band_ok && !xs.is_empty();
        parts.push(format!(
            "α={alpha}: slope {slope:.4} (1/α {:.4}), gap/ε^(1/α) ∈ [{lo:.6e}, {hi:.6e}] vs [{d1:.6e}, {d2:.6e}]",
            1.0 / alpha
        ));
    }
    (ok, parts.join("; "))
}

fn crit6_collision_avoidance() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(6);
    let (mut aborts, mut nonpositive, mut certified, mut violations) = (0, 0, 0, Vec::new());
    let mut inf_gap = f64::INFINITY;
    for run in 0..50 {
        let alpha = [1.25, 1.5, 2.5][rng.gen_range(0..3)];
        let kernel = Kernel::power(alpha).unwrap();
        let s0 = {
            let n = rng.gen_range(2..=8);
            let d = rng.gen_range(1..=3);
            let p_scale = [0.05, 0.3, 1.0][rng.gen_range(0..3)];
            let (q, p) = uniform_box(n, d, 1.0, p_scale, Some(0.1), rng.gen()).unwrap();
            State::new(0.0, n, d, q, p).unwrap()
        };
        let g = random_control(&mut rng);
        let kappa = rng.gen_range(1.0..20.0);
        let params = Params::new(s0.n, s0.d, kappa).unwrap();
        let cfg = IntegratorConfig::with_t_end(10.0);
        let out = integrate_partial(&s0, &kernel, &g, &params, &cfg).unwrap();
        if out.error.is_some() || out.trajectory.count(EventKind::StepFloorHit) > 0 {
            aborts += 1;
        }
        let observed = observed_min_gap(&out.trajectory);
        inf_gap = inf_gap.min(observed);
        if !(observed > 0.0) {
            nonpositive += 1;
        }
        let cert = collision_certificate(&s0, &kernel, &g, kappa).unwrap();
        if let (true, Some(bound)) = (cert.holds, cert.bound) {
            certified += 1;
            if observed < bound - 1e-6 {
                violations.push(format!("run {run}: gap {observed:.6e} < bound {bound:.6e}"));
            }
        }
    }
    let ok = aborts == 0 && nonpositive == 0 && violations.is_empty();
    (
        ok,
        format!(
            "inf gap {inf_gap:.3e}, {aborts} aborts, {certified} certified with {} bound violations{}",
            violations.len(),
            violations.first().map(|v| format!("; first: {v}")).unwrap_or_default()
        ),
    )
}

fn observed_min_gap(traj: &Trajectory) -> f64 {
    min_gap_trace(traj).iter().map(|x| x.1).fold(f64::INFINITY, f64::min)
}

fn crit7_dissipation() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let mut worst = f64::NEG_INFINITY;
    let mut checks = 0;
    for _ in 0..20 {
        let s0 = random_state(&mut rng, 10, None);
        let kernel = random_regular_kernel(&mut rng);
        let g = random_control(&mut rng);
        let params = Params::new(s0.n, s0.d, rng.gen_range(0.5..3.0)).unwrap();
        let cfg = IntegratorConfig { output_interval: Some(0.05), ..IntegratorConfig::with_t_end(10.0) };
        let traj = integrate(&s0, &kernel, &g, &params, &cfg).unwrap();
        let mut subsets = vec![(0..s0.n).collect::<Vec<_>>()];
        for _ in 0..3 {
            let l = rng.gen_range(1..=s0.n);
            let mut idx: Vec<usize> = (0..s0.n).collect();
            for k in 0..l {
                let r = rng.gen_range(k..s0.n);
                idx.swap(k, r);
            }
            idx.truncate(l);
            subsets.push(idx);
        }
        for s in &subsets {
            worst = worst.max(verify_dissipation(&traj, s, &kernel, &g, &params).unwrap());
            checks += 1;
        }
    }
    (worst <= 1e-4, format!("max violation {worst:.3e} over {checks} subset checks"))
}

fn crit8_bicluster() -> Outcome {
    let (n, d) = (6, 2);
    let (q, p) = two_cluster(n, d, 10.0, 0.5, 1.0, 0.1, 8).unwrap();
    let s0 = State::new(0.0, n, d, q, p).unwrap();
    let kernel = Kernel::rational(2.0).unwrap();
    let params = Params::new(n, d, 1.0).unwrap();
    let cfg = IntegratorConfig { output_interval: Some(0.5), ..IntegratorConfig::with_t_end(100.0) };
    let traj = integrate(&s0, &kernel, &VelocityControl::Identity, &params, &cfg).unwrap();
    let planted = (vec![0, 1, 2], vec![3, 4, 5]);
    let found = detect_bicluster(&traj);
    let last = traj.last().unwrap();
    let dp_a = dispersions(last, Some(&planted.0)).unwrap().d_p;
    let dp_b = dispersions(last, Some(&planted.1)).unwrap().d_p;
    let cross = |s: &State| {
        let mut m = f64::INFINITY;
        for &i in &planted.0 {
            for &j in &planted.1 {
                let v: f64 = (0..d).map(|a| (s.q[i * d + a] - s.q[j * d + a]).powi(2)).sum();
                m = m.min(v.sqrt());
            }
        }
        m
    };
    let (g0, g1) = (cross(&s0), cross(last));
    let ok = found.as_ref() == Some(&planted) && dp_a < 1e-3 && dp_b < 1e-3 && g1 >= 2.0 * g0;
    (ok, format!("partition {found:?}, in-group D_P {dp_a:.2e} / {dp_b:.2e}, cross gap {g0:.3} -> {g1:.3}"))
}

fn crit9_regularity() -> Outcome {
    let identity = GBounds::new(1.0, 1.0, 1.0);
    let (k, gamma) = regularity_exponents(2, 0.5, &identity).unwrap();
    let mut worst: f64 = (k - 0.5).abs().max((gamma - 2.0).abs());
    let mut monotone = true;
    let tanh = VelocityControl::tanh(1.0).unwrap().bounds(0.8).unwrap();
    for (n, gb) in [(2, identity), (3, identity), (4, tanh)] {
        let mut prev = f64::INFINITY;
        for step in 0..=999 {
            let alpha = 0.5 + 0.4995 * step as f64 / 999.0;
            let (k, gamma) = regularity_exponents(n, alpha, &gb).unwrap();
            let k_ref = gb.m_gprime * (2.0f64).powf(1.0 - 2.0 * alpha) * (1.0 - alpha) / (n as f64 * gb.big_m_gprime * alpha);
            let gamma_ref = 1.0 / f64::max(1.0 - k_ref, alpha);
            worst = worst.max((k - k_ref).abs()).max((gamma - gamma_ref).abs());
            monotone &= gamma <= prev;
            prev = gamma;
        }
        worst = worst.max(0.0);
        monotone &= (prev - 1.0).abs() < 1e-3;
    }
    let ok = worst <= 1e-12 && monotone;
    (ok, format!("K = {k}, γ_sup = {gamma}, max deviation {worst:.1e}, monotone to 1: {monotone}"))
}

fn main() -> ExitCode {
    let criteria: [Criterion; 9] = [
        ("closed-form two-body oracle", crit1_closed_form, 1.0),
        ("momentum conservation and speed monotonicity", crit2_conservation, 60.0),
        ("flocking certificate and Lyapunov decay", crit3_flocking, 300.0),
        ("line trichotomy", crit4_trichotomy, 120.0),
        ("sticking rate", crit5_sticking_rate, 60.0),
        ("collision avoidance", crit6_collision_avoidance, 300.0),
        ("subsystem dissipation", crit7_dissipation, 60.0),
        ("bi-cluster", crit8_bicluster, 60.0),
        ("regularity arithmetic", crit9_regularity, 60.0),
    ];
    let mut failed = 0;
    for (k, (name, f, budget)) in criteria.iter().enumerate() {
        let clock = Instant::now();
        let (ok, detail) = match catch_unwind(AssertUnwindSafe(f)) {
            Ok(r) => r,
            Err(e) => {
                let msg = e
                    .downcast_ref::<String>()
                    .cloned()
                    .or_else(|| e.downcast_ref::<&str>().map(|s| s.to_string()))
                    .unwrap_or_default();
                (false, format!("panicked: {msg}"))
            }
        };
        let secs = clock.elapsed().as_secs_f64();
        let ok = ok && secs <= *budget;
        println!("{} [{}] {name}: {detail} ({secs:.2}s, budget {budget}s)", if ok { "PASS" } else { "FAIL" }, k + 1);
        failed += usize::from(!ok);
    }
    println!("acceptance: {}/{} criteria passed", criteria.len() - failed, criteria.len());
    if failed == 0 {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
