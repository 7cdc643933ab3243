//! Dispersions, the Lyapunov functional, analytic certificates and empirical
//! detectors for flocking, bi-cluster flocking and collision avoidance.
//!
//! Norms follow the ordered-pair convention: `‖Q‖² = Σ_{i,j} |q_i − q_j|²`
//! sums over *ordered* pairs, so every unordered pair counts twice. Two agents
//! at distance 1 have `‖Q‖ = √2`. The certificate thresholds depend on this.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::gctrl::{GBounds, VelocityControl};
use crate::kernel::{Kernel, KernelClass};
use crate::line1d::regularity_exponents;
use crate::model::{self, max_speed, Params, State, Trajectory};
use crate::stats::{golden_max, linear_fit};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DispersionReport {
    /// `max |p_i − p_j|`.
    pub d_p: f64,
    /// `max |q_i − q_j|`.
    pub d_q: f64,
    pub norm_p: f64,
    pub norm_q: f64,
    /// Average momentum of the (sub)system.
    pub mean_momentum: Vec<f64>,
}

/// Max and ordered-pair Frobenius norm of pairwise differences over `idx`.
fn pair_stats(d: usize, x: &[f64], idx: &[usize]) -> (f64, f64) {
    let mut max: f64 = 0.0;
    let mut sum2 = 0.0;
    for (a, &i) in idx.iter().enumerate() {
        for &j in &idx[a + 1..] {
            let r = model::dist(&x[i * d..(i + 1) * d], &x[j * d..(j + 1) * d]);
            max = max.max(r);
            sum2 += 2.0 * r * r;
        }
    }
    (max, sum2.sqrt())
}

fn check_subset(n: usize, subset: &[usize]) -> Result<()> {
    if subset.is_empty() {
        return Err(Error::Domain("subset must be nonempty".into()));
    }
    if subset.iter().any(|&i| i >= n) {
        return Err(Error::Domain(format!("subset index out of range for {n} agents")));
    }
    let mut s = subset.to_vec();
    s.sort_unstable();
    s.dedup();
    if s.len() != subset.len() {
        return Err(Error::Domain("subset has repeated indices".into()));
    }
    Ok(())
}

/// Pair statistics over the whole system or a subset.
pub fn dispersions(state: &State, subset: Option<&[usize]>) -> Result<DispersionReport> {
    let all: Vec<usize>;
    let idx = match subset {
        Some(s) => {
            check_subset(state.n, s)?;
            s
        }
        None => {
            all = (0..state.n).collect();
            &all
        }
    };
    let (d_p, norm_p) = pair_stats(state.d, &state.p, idx);
    let (d_q, norm_q) = pair_stats(state.d, &state.q, idx);
    let mut mean = vec![0.0; state.d];
    for &i in idx {
        for (m, x) in mean.iter_mut().zip(state.pi(i)) {
            *m += x;
        }
    }
    mean.iter_mut().for_each(|m| *m /= idx.len() as f64);
    Ok(DispersionReport { d_p, d_q, norm_p, norm_q, mean_momentum: mean })
}

fn norms(state: &State) -> (f64, f64) {
    let idx: Vec<usize> = (0..state.n).collect();
    (pair_stats(state.d, &state.p, &idx).1, pair_stats(state.d, &state.q, &idx).1)
}

/// `ℒ = (𝓜κ/M_{G'}) ∫_{‖Q⁰‖}^{‖Q‖} ψ + ‖P‖`.
pub fn lyapunov(state: &State, q_norm_0: f64, kernel: &Kernel, gb: &GBounds, kappa: f64) -> f64 {
    let (np, nq) = norms(state);
    let c = gb.script_m * kappa / gb.big_m_gprime;
    let integral = if nq == q_norm_0 { 0.0 } else { kernel.integral(q_norm_0, nq) };
    c * integral + np
}

/// `ℒ` at every snapshot, with `G` bounds taken from the first snapshot.
pub fn lyapunov_series(traj: &Trajectory, kernel: &Kernel, g: &VelocityControl, kappa: f64) -> Result<Vec<f64>> {
    let first = traj.first().ok_or_else(|| Error::InsufficientData("empty trajectory".into()))?;
    let gb = g.bounds(max_speed(first))?;
    let q0 = norms(first).1;
    Ok(traj.snapshots.iter().map(|s| lyapunov(s, q0, kernel, &gb, kappa)).collect())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum CertificateKind {
    Flocking,
    CollisionAvoidance,
    Regularity,
}

/// An evaluated sufficient condition. `margin > 0` exactly when `holds`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Certificate {
    pub kind: CertificateKind,
    pub holds: bool,
    #[serde(with = "crate::fnum")]
    pub margin: f64,
    /// Explicit lower bound on pairwise distances, when one is available.
    #[serde(with = "crate::fnum::opt", default)]
    pub bound: Option<f64>,
    #[serde(with = "crate::fnum::map")]
    pub inputs: BTreeMap<String, f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub note: Option<String>,
}

fn inputs(pairs: &[(&str, f64)]) -> BTreeMap<String, f64> {
    pairs.iter().map(|(k, v)| (k.to_string(), *v)).collect()
}

/// `‖P⁰‖ < (𝓜κ/M_{G'}) ∫_{‖Q⁰‖}^∞ ψ`. Inconclusive (not a disproof) when it fails.
pub fn flocking_certificate(state0: &State, kernel: &Kernel, g: &VelocityControl, kappa: f64) -> Result<Certificate> {
    let gb = g.bounds(max_speed(state0))?;
    let (np, nq) = norms(state0);
    let tail = kernel.tail_integral(nq);
    let rhs = gb.script_m * kappa / gb.big_m_gprime * tail;
    let margin = rhs - np;
    Ok(Certificate {
        kind: CertificateKind::Flocking,
        holds: np < rhs,
        margin,
        bound: None,
        inputs: inputs(&[
            ("P_norm0", np),
            ("Q_norm0", nq),
            ("tail_integral", tail),
            ("kappa", kappa),
            ("P0_max", gb.p0_max),
            ("m_gprime", gb.m_gprime),
            ("M_gprime", gb.big_m_gprime),
            ("M_script", gb.script_m),
            ("rhs", rhs),
        ]),
        note: None,
    })
}

const M_GRID: usize = 256;
const M_SPAN_DECADES: f64 = 6.0;

/// Searches `M > ‖Q⁰‖` with
/// `M_{G'}‖P⁰‖/(κ𝓜) < min{∫_{‖Q⁰‖}^M ψ, ψ(M)·min_{i≠j}|q_i⁰ − q_j⁰|}`
/// and, when found, reports `min gap⁰ − M_{G'}‖P⁰‖/(κ𝓜ψ(M))` for the smallest
/// feasible `M` as a lower bound on all future pairwise distances.
pub fn collision_certificate(state0: &State, kernel: &Kernel, g: &VelocityControl, kappa: f64) -> Result<Certificate> {
    let gb = g.bounds(max_speed(state0))?;
    let (np, nq) = norms(state0);
    let (gap0, _) = model::min_pairwise_gap(state0.n, state0.d, &state0.q);
    let mut inp = inputs(&[
        ("P_norm0", np),
        ("Q_norm0", nq),
        ("min_gap0", gap0),
        ("kappa", kappa),
        ("P0_max", gb.p0_max),
        ("m_gprime", gb.m_gprime),
        ("M_gprime", gb.big_m_gprime),
        ("M_script", gb.script_m),
    ]);
    let fail = |inp, margin: f64, note: &str| Certificate {
        kind: CertificateKind::CollisionAvoidance,
        holds: false,
        margin,
        bound: None,
        inputs: inp,
        note: Some(note.to_string()),
    };
    if kernel.classify() == KernelClass::TypeII {
        return Ok(fail(inp, f64::NEG_INFINITY, "weakly singular kernels are not covered; use the line reduction"));
    }
    if state0.n < 2 {
        return Ok(Certificate {
            kind: CertificateKind::CollisionAvoidance,
            holds: true,
            margin: f64::INFINITY,
            bound: None,
            inputs: inp,
            note: Some("single agent".into()),
        });
    }
    if gap0 == 0.0 {
        return Ok(fail(inp, f64::NEG_INFINITY, "initial positions are not distinct"));
    }
    let lhs = gb.big_m_gprime * np / (kappa * gb.script_m);
    inp.insert("lhs".into(), lhs);
    let psi = |r: f64| kernel.psi(r).unwrap_or(f64::INFINITY);
    let margin_at = |m: f64| kernel.integral(nq, m).min(psi(m) * gap0) - lhs;

    let grid: Vec<f64> = (1..=M_GRID).map(|k| nq * 10f64.powf(M_SPAN_DECADES * k as f64 / M_GRID as f64)).collect();
    let (kbest, _) = grid
        .iter()
        .map(|&m| margin_at(m))
        .enumerate()
        .max_by(|a, b| a.1.total_cmp(&b.1))
        .expect("grid is nonempty");
    let lo = if kbest == 0 { nq } else { grid[kbest - 1] };
    let hi = grid[(kbest + 1).min(M_GRID - 1)];
    let (log_m, _) = golden_max(|x| margin_at(x.exp()), lo.ln(), hi.ln(), 80);
    let (mut m_best, mut margin) = (log_m.exp(), margin_at(log_m.exp()));
    if margin_at(grid[kbest]) > margin {
        m_best = grid[kbest];
        margin = margin_at(m_best);
    }
    inp.insert("M_best".into(), m_best);
    if !(margin > 0.0) {
        return Ok(fail(inp, margin, "no feasible M on the search grid"));
    }
    // the feasible set is an interval; its left end gives the largest bound
    let (mut a, mut b) = (nq, m_best);
    for _ in 0..200 {
        let mid = 0.5 * (a + b);
        if mid <= a || mid >= b {
            break;
        }
        if margin_at(mid) > 0.0 {
            b = mid;
        } else {
            a = mid;
        }
    }
    let bound = gap0 - gb.big_m_gprime * np / (kappa * gb.script_m * psi(b));
    inp.insert("M_bound".into(), b);
    Ok(Certificate {
        kind: CertificateKind::CollisionAvoidance,
        holds: true,
        margin,
        bound: Some(bound),
        inputs: inp,
        note: None,
    })
}

/// Regularity exponents `K` and `γ_sup` for sticking solutions on the line.
pub fn regularity_certificate(n: usize, alpha: f64, gb: &GBounds) -> Result<Certificate> {
    let (k, gamma_sup) = regularity_exponents(n, alpha, gb)?;
    Ok(Certificate {
        kind: CertificateKind::Regularity,
        holds: true,
        margin: gamma_sup - 1.0,
        bound: None,
        inputs: inputs(&[
            ("n_agents", n as f64),
            ("alpha", alpha),
            ("m_gprime", gb.m_gprime),
            ("M_gprime", gb.big_m_gprime),
            ("K", k),
            ("gamma_sup", gamma_sup),
        ]),
        note: Some("K uses the two-agent cluster bound".into()),
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct FlockingOptions {
    /// Trailing fraction of the time span used for the tests.
    pub tail_fraction: f64,
    /// `D_P` must shrink at least by this factor across the tail window.
    pub min_decay_factor: f64,
    /// `D_P` below `noise_floor_rel · P⁰_M` counts as converged.
    pub noise_floor_rel: f64,
    /// Allowed growth of `D_Q` across the tail, relative to its overall sup.
    pub growth_tol: f64,
}

impl Default for FlockingOptions {
    fn default() -> Self {
        Self { tail_fraction: 0.5, min_decay_factor: 2.0, noise_floor_rel: 1e-8, growth_tol: 0.05 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FlockingVerdict {
    pub is_flocking: bool,
    /// Fitted exponential decay constant of `D_P`.
    #[serde(with = "crate::fnum")]
    pub rate: f64,
    pub bounded: bool,
    pub decaying: bool,
}

/// `(is_flocking, rate)` with default options and the given tail fraction.
pub fn detect_flocking(traj: &Trajectory, tail_fraction: f64) -> Result<(bool, f64)> {
    let v = detect_flocking_with(traj, &FlockingOptions { tail_fraction, ..FlockingOptions::default() })?;
    Ok((v.is_flocking, v.rate))
}

fn tail_start(times: &[f64], fraction: f64) -> usize {
    let (t0, t1) = (times[0], times[times.len() - 1]);
    let cut = t1 - fraction * (t1 - t0);
    times.iter().position(|&t| t >= cut).unwrap_or(times.len() - 1)
}

/// Bounded `D_Q` with no growth trend over the tail, and `D_P` decaying
/// exponentially. A failed analytic certificate says nothing here.
pub fn detect_flocking_with(traj: &Trajectory, opts: &FlockingOptions) -> Result<FlockingVerdict> {
    let first = traj.first().ok_or_else(|| Error::InsufficientData("empty trajectory".into()))?;
    if !(opts.tail_fraction > 0.0 && opts.tail_fraction <= 1.0) {
        return Err(Error::Domain("tail_fraction must lie in (0, 1]".into()));
    }
    if first.n == 1 {
        return Ok(FlockingVerdict { is_flocking: true, rate: f64::INFINITY, bounded: true, decaying: true });
    }
    let times = traj.times();
    let start = tail_start(&times, opts.tail_fraction);
    if times.len() - start < 16 {
        return Err(Error::InsufficientData(format!("{} tail samples, need 16", times.len() - start)));
    }
    let reports: Vec<(f64, f64)> = traj
        .snapshots
        .iter()
        .map(|s| {
            let idx: Vec<usize> = (0..s.n).collect();
            (pair_stats(s.d, &s.p, &idx).0, pair_stats(s.d, &s.q, &idx).0)
        })
        .collect();
    let sup_dq = reports.iter().map(|r| r.1).fold(0.0, f64::max);
    let growth = reports[reports.len() - 1].1 - reports[start].1;
    let bounded = growth <= opts.growth_tol * sup_dq + 1e-12;

    let floor = (opts.noise_floor_rel * max_speed(first)).max(1e-14);
    let (rate, decaying) = decay_fit(&times, &reports.iter().map(|r| r.0).collect::<Vec<_>>(), start, floor, opts);
    Ok(FlockingVerdict { is_flocking: bounded && decaying, rate, bounded, decaying })
}

/// Decay constant of `series` over the tail, ignoring values under `floor`.
fn decay_fit(times: &[f64], series: &[f64], start: usize, floor: f64, opts: &FlockingOptions) -> (f64, bool) {
    let span = times[times.len() - 1] - times[start];
    let rate_min = opts.min_decay_factor.ln() / span.max(f64::MIN_POSITIVE);
    let above: Vec<usize> = (start..times.len()).filter(|&k| series[k] > floor).collect();
    let window: Vec<usize> = if above.len() >= 8 {
        above
    } else {
        // converged before the tail: fit the last stretch above the floor
        let all: Vec<usize> = (0..times.len()).filter(|&k| series[k] > floor).collect();
        if all.len() < 4 {
            return (f64::INFINITY, true);
        }
        let from = all.len().saturating_sub(16).min(all.len() / 2);
        all[from..].to_vec()
    };
    let xs: Vec<f64> = window.iter().map(|&k| times[k]).collect();
    let ys: Vec<f64> = window.iter().map(|&k| series[k].max(1e-14).ln()).collect();
    match linear_fit(&xs, &ys) {
        Some((slope, _)) => {
            let rate = -slope;
            let converged = series[series.len() - 1] <= floor;
            (rate, rate >= rate_min || converged)
        }
        None => (f64::INFINITY, true),
    }
}

/// Splits the final configuration at the longest edge of its minimum spanning
/// tree and keeps the split if the two groups look like a bi-cluster flock on
/// the tail window: each group has bounded position spread and decaying
/// momentum spread, and the cross-group distance grows and at least doubles
/// over the run. Finite runs can only witness growth, not divergence.
pub fn detect_bicluster(traj: &Trajectory) -> Option<(Vec<usize>, Vec<usize>)> {
    let last = traj.last()?;
    let first = traj.first()?;
    if last.n < 2 || traj.snapshots.len() < 4 {
        return None;
    }
    let (s, c) = mst_split(last);
    let times = traj.times();
    let start = tail_start(&times, 0.5);
    let cross = |st: &State| {
        let mut best = f64::INFINITY;
        for &i in &s {
            for &j in &c {
                best = best.min(model::dist(st.qi(i), st.qi(j)));
            }
        }
        best
    };
    let (c0, c_tail, c_end) = (cross(first), cross(&traj.snapshots[start]), cross(last));
    if !(c_end > 1.05 * c_tail && c_end >= 2.0 * c0) {
        return None;
    }
    let floor = (1e-8 * max_speed(first)).max(1e-14);
    for group in [&s, &c] {
        if group.len() < 2 {
            continue;
        }
        let series: Vec<(f64, f64)> = traj
            .snapshots
            .iter()
            .map(|st| (pair_stats(st.d, &st.p, group).0, pair_stats(st.d, &st.q, group).0))
            .collect();
        let sup_dq = series.iter().map(|r| r.1).fold(0.0, f64::max);
        let growth = series[series.len() - 1].1 - series[start].1;
        if growth > 0.05 * sup_dq + 1e-12 {
            return None;
        }
        let (dp_tail, dp_end) = (series[start].0, series[series.len() - 1].0);
        if !(dp_end <= floor || dp_end <= 0.5 * dp_tail) {
            return None;
        }
    }
    Some((s, c))
}

/// Two single-linkage clusters; the one containing agent 0 comes first.
fn mst_split(st: &State) -> (Vec<usize>, Vec<usize>) {
    let n = st.n;
    let mut in_tree = vec![false; n];
    let mut best = vec![f64::INFINITY; n];
    let mut parent = vec![usize::MAX; n];
    best[0] = 0.0;
    let mut edges = Vec::with_capacity(n - 1);
    for _ in 0..n {
        let u = (0..n).filter(|&k| !in_tree[k]).min_by(|&a, &b| best[a].total_cmp(&best[b])).expect("vertex left");
        in_tree[u] = true;
        if parent[u] != usize::MAX {
            edges.push((best[u], parent[u], u));
        }
        for v in 0..n {
            if !in_tree[v] {
                let r = model::dist(st.qi(u), st.qi(v));
                if r < best[v] {
                    best[v] = r;
                    parent[v] = u;
                }
            }
        }
    }
    let cut = edges.iter().enumerate().max_by(|a, b| a.1 .0.total_cmp(&b.1 .0)).map(|(k, _)| k).expect("n >= 2");
    // connected components of the tree without the cut edge
    let mut comp: Vec<usize> = (0..n).collect();
    fn root(c: &mut [usize], mut x: usize) -> usize {
        while c[x] != x {
            c[x] = c[c[x]];
            x = c[x];
        }
        x
    }
    for (k, &(_, a, b)) in edges.iter().enumerate() {
        if k != cut {
            let (ra, rb) = (root(&mut comp, a), root(&mut comp, b));
            comp[ra] = rb;
        }
    }
    let r0 = root(&mut comp, 0);
    let (mut s, mut c) = (Vec::new(), Vec::new());
    for i in 0..n {
        if root(&mut comp, i) == r0 {
            s.push(i);
        } else {
            c.push(i);
        }
    }
    (s, c)
}

/// Checks the subsystem dissipation inequalities at every snapshot:
///
/// ```text
/// d/dt ‖P‖_S ≤ −(κ𝓜l/N) ψ(‖Q‖_S) ‖P‖_S + (2κM(N−l)P⁰_M L/N) ‖Q‖_S
/// d/dt ‖P‖_S ≤ −(κ𝓜l/N) ψ(‖Q‖_S) ‖P‖_S + (4κP⁰_M M l(N−l)/N) max_{i∈S, j∉S} ψ_ij
/// |d/dt ‖Q‖²_S| ≤ 2M ‖P‖_S ‖Q‖_S
/// ```
///
/// with `L` the Lipschitz constant of ψ beyond the closest cross distance.
/// Time derivatives come from the right-hand side at the snapshot. Returns the
/// largest `lhs − rhs`; nonpositive means all three hold.
pub fn verify_dissipation(
    traj: &Trajectory,
    subset: &[usize],
    kernel: &Kernel,
    g: &VelocityControl,
    params: &Params,
) -> Result<f64> {
    let first = traj.first().ok_or_else(|| Error::InsufficientData("empty trajectory".into()))?;
    check_subset(first.n, subset)?;
    let gb = g.bounds(max_speed(first))?;
    let (n, l) = (first.n as f64, subset.len() as f64);
    let kappa = params.kappa;
    let outside: Vec<usize> = (0..first.n).filter(|i| !subset.contains(i)).collect();
    let mut worst = f64::NEG_INFINITY;
    for s in &traj.snapshots {
        let der = model::rhs(s, kernel, g, params)?;
        let d = s.d;
        let mut p2 = 0.0;
        let mut q2 = 0.0;
        let mut dp2 = 0.0;
        let mut dq2 = 0.0;
        let mut pdot_sq = 0.0;
        for &i in subset {
            for &j in subset {
                if i == j {
                    continue;
                }
                for a in 0..d {
                    let (ki, kj) = (i * d + a, j * d + a);
                    let (pij, qij) = (s.p[ki] - s.p[kj], s.q[ki] - s.q[kj]);
                    let (vp, vq) = (der.dp[ki] - der.dp[kj], der.dq[ki] - der.dq[kj]);
                    p2 += pij * pij;
                    q2 += qij * qij;
                    dp2 += 2.0 * pij * vp;
                    dq2 += 2.0 * qij * vq;
                    pdot_sq += vp * vp;
                }
            }
        }
        let (np, nq) = (p2.sqrt(), q2.sqrt());
        let lhs = if np > 0.0 { dp2 / (2.0 * np) } else { pdot_sq.sqrt() };
        let decay = -(kappa * gb.script_m * l / n) * kernel.psi(nq).unwrap_or(f64::INFINITY) * np;
        let decay = if decay.is_nan() { 0.0 } else { decay };
        let (cross_term1, cross_term2) = if outside.is_empty() {
            (0.0, 0.0)
        } else {
            let mut q_l = f64::INFINITY;
            for &i in subset {
                for &j in &outside {
                    q_l = q_l.min(model::dist(s.qi(i), s.qi(j)));
                }
            }
            let lip = kernel.lipschitz_tail(q_l);
            let psi_max = kernel.psi(q_l)?;
            (
                2.0 * kappa * gb.big_m_gprime * (n - l) * gb.p0_max * lip / n * nq,
                4.0 * kappa * gb.p0_max * gb.big_m_gprime * l * (n - l) / n * psi_max,
            )
        };
        let tol = 1e-12 * (1.0 + lhs.abs() + decay.abs());
        worst = worst.max(lhs - (decay + cross_term1) - tol);
        worst = worst.max(lhs - (decay + cross_term2) - tol);
        let q_rhs = 2.0 * gb.big_m_gprime * np * nq;
        worst = worst.max(dq2.abs() - q_rhs - 1e-12 * (1.0 + q_rhs));
    }
    Ok(worst)
}
