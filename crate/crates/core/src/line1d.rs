//! First-order reduction on the real line for weakly singular kernels.
//!
//! With `ψ(r) = r^{-α}`, `0 < α < 1`, and `Ψ` its odd antiderivative, the
//! quantities `ν_i = p_i − (κ/N) Σ_k Ψ(q_k − q_i)` are conserved, so positions
//! obey the first-order system `q̇_i = G(ν_i + (κ/N) Σ_k Ψ(q_k − q_i))` whose
//! right-hand side is continuous even through collisions. The ordering of ν
//! decides whether two agents never meet, cross once, or stick.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::gctrl::{GBounds, VelocityControl};
use crate::integrator::{error_norm, DenseStep, Dopri5, IntegratorConfig, PiController, EVENT_TIME_TOL};
use crate::kernel::{Kernel, KernelClass};
use crate::model::{EventKind, EventRecord, State, Trajectory};
use crate::stats::linear_fit;

/// Relative tolerance under which two ν values count as equal.
pub const NU_TIE_REL: f64 = 1e-9;
/// Relative gap under which a ν-tied pair is merged.
pub const GAP_MERGE_REL: f64 = 1e-9;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum PairOutcome {
    NeverMeet,
    CollideOnce,
    Stick,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct LineEventLog {
    /// `Collision` and `StickStart` records in time order.
    pub events: Vec<EventRecord>,
    /// Distinct sticking times.
    pub sticking_times: Vec<f64>,
}

impl LineEventLog {
    pub fn crossings(&self, i: usize, j: usize) -> usize {
        let key = (i.min(j), i.max(j));
        self.events.iter().filter(|e| e.kind == EventKind::Collision && e.pair == key).count()
    }

    pub fn stick_event(&self, i: usize, j: usize) -> Option<&EventRecord> {
        let key = (i.min(j), i.max(j));
        self.events.iter().find(|e| e.kind == EventKind::StickStart && e.pair == key)
    }

    /// Observed outcome per pair; `None` for more than one crossing, which
    /// the dynamics rule out.
    pub fn observed(&self, i: usize, j: usize) -> Option<PairOutcome> {
        if self.stick_event(i, j).is_some() {
            return Some(PairOutcome::Stick);
        }
        match self.crossings(i, j) {
            0 => Some(PairOutcome::NeverMeet),
            1 => Some(PairOutcome::CollideOnce),
            _ => None,
        }
    }
}

/// `ν_i = p_i − (κ/N) Σ_k Ψ(q_k − q_i)`.
pub fn nu_from_initial(q0: &[f64], p0: &[f64], kernel: &Kernel, kappa: f64) -> Result<Vec<f64>> {
    if q0.len() != p0.len() || q0.is_empty() {
        return Err(Error::Domain("q0 and p0 must be nonempty and of equal length".into()));
    }
    let n = q0.len();
    let c = kappa / n as f64;
    let mut nu = Vec::with_capacity(n);
    for i in 0..n {
        let mut s = 0.0;
        for &qk in q0 {
            s += kernel.antiderivative(qk - q0[i])?;
        }
        nu.push(p0[i] - c * s);
    }
    Ok(nu)
}

/// Pairwise outcomes predicted from the initial order and ν; the diagonal is `None`.
pub fn predict_pairwise(q0: &[f64], nu: &[f64]) -> Vec<Vec<Option<PairOutcome>>> {
    let n = q0.len();
    let mut out = vec![vec![None; n]; n];
    for i in 0..n {
        for j in 0..n {
            if i == j {
                continue;
            }
            let (hi, lo) = if q0[i] >= q0[j] { (i, j) } else { (j, i) };
            out[i][j] = Some(if nu_tied(nu[hi], nu[lo]) {
                PairOutcome::Stick
            } else if q0[hi] == q0[lo] || nu[hi] > nu[lo] {
                PairOutcome::NeverMeet
            } else {
                PairOutcome::CollideOnce
            });
        }
    }
    out
}

fn nu_tied(a: f64, b: f64) -> bool {
    (a - b).abs() < NU_TIE_REL * (1.0 + a.abs().max(b.abs()))
}

/// Makes near-equal ν values exactly equal (groups chained in sorted order).
fn snap_ties(nu: &mut [f64]) {
    let mut order: Vec<usize> = (0..nu.len()).collect();
    order.sort_by(|&a, &b| nu[a].total_cmp(&nu[b]));
    let mut start = 0;
    while start < order.len() {
        let mut end = start + 1;
        while end < order.len() && nu_tied(nu[order[end - 1]], nu[order[end]]) {
            end += 1;
        }
        if end - start > 1 {
            let mean = order[start..end].iter().map(|&k| nu[k]).sum::<f64>() / (end - start) as f64;
            for &k in &order[start..end] {
                nu[k] = mean;
            }
        }
        start = end;
    }
}

/// Positions of the symmetric two-body sticking solution with `α = 1/2`,
/// `G = identity` and `ν₁ = ν₂ = 0`: the gap is `κ²(t* − t)²` until
/// `t* = √(q₁⁰ − q₂⁰)/κ`, after which both agents sit at the midpoint.
pub fn two_body_closed_form(q1_0: f64, q2_0: f64, kappa: f64, t: f64) -> Result<(f64, f64)> {
    if q1_0 < q2_0 || !(kappa > 0.0) || t < 0.0 {
        return Err(Error::Domain("need q1_0 >= q2_0, kappa > 0 and t >= 0".into()));
    }
    let mid = 0.5 * (q1_0 + q2_0);
    let t_star = (q1_0 - q2_0).sqrt() / kappa;
    if t >= t_star {
        return Ok((mid, mid));
    }
    let half = 0.5 * kappa * kappa * (t - t_star) * (t - t_star);
    Ok((mid + half, mid - half))
}

/// `(D₁, D₂)` with `D₁ ε^{1/α} ≤ gap(t* − ε) ≤ D₂ ε^{1/α}` for a sticking pair.
pub fn sticking_rate_bounds(kappa: f64, alpha: f64, n: usize, gb: &GBounds) -> Result<(f64, f64)> {
    check_alpha(alpha)?;
    let d1 = (2.0 * kappa * gb.m_gprime * alpha / (n as f64 * (1.0 - alpha))).powf(1.0 / alpha);
    let d2 = (kappa * gb.big_m_gprime * 2f64.powf(alpha) * alpha / (1.0 - alpha)).powf(1.0 / alpha);
    Ok((d1, d2))
}

/// `K = m 2^{1−2α}(1−α)/(N M α)` and `γ_sup = 1/max{1−K, α}`.
pub fn regularity_exponents(n: usize, alpha: f64, gb: &GBounds) -> Result<(f64, f64)> {
    check_alpha(alpha)?;
    let k = gb.m_gprime * 2f64.powf(1.0 - 2.0 * alpha) * (1.0 - alpha) / (n as f64 * gb.big_m_gprime * alpha);
    Ok((k, 1.0 / (1.0 - k).max(alpha)))
}

fn check_alpha(alpha: f64) -> Result<()> {
    if alpha > 0.0 && alpha < 1.0 {
        Ok(())
    } else {
        Err(Error::Domain(format!("alpha must lie in (0, 1), got {alpha}")))
    }
}

/// Least-squares slope and intercept of `log gap(t* − ε)` against `log ε`
/// over snapshots with `ε ∈ [eps_min, eps_max]`, for a `StickStart` event.
pub fn fit_sticking_exponent(traj: &Trajectory, event: &EventRecord, window: (f64, f64)) -> Result<(f64, f64)> {
    if event.kind != EventKind::StickStart {
        return Err(Error::Domain("exponent fits need a StickStart event".into()));
    }
    let (i, j) = event.pair;
    let (xs, ys) = sticking_samples(traj, event.time, i, j, window);
    if xs.len() < 8 {
        return Err(Error::InsufficientData(format!("{} samples in the fit window, need 8", xs.len())));
    }
    linear_fit(&xs, &ys).ok_or_else(|| Error::InsufficientData("degenerate fit window".into()))
}

/// `(log ε, log gap)` samples preceding a sticking time.
pub fn sticking_samples(traj: &Trajectory, t_star: f64, i: usize, j: usize, window: (f64, f64)) -> (Vec<f64>, Vec<f64>) {
    let mut xs = Vec::new();
    let mut ys = Vec::new();
    for s in &traj.snapshots {
        let eps = t_star - s.t;
        if eps < window.0 || eps > window.1 {
            continue;
        }
        let gap = (s.q[i * s.d] - s.q[j * s.d]).abs();
        if gap > 0.0 {
            xs.push(eps.ln());
            ys.push(gap.ln());
        }
    }
    (xs, ys)
}

/// Positions, conserved ν and the current sticking partition.
#[derive(Debug, Clone)]
pub struct LineSystem {
    pub t: f64,
    pub q: Vec<f64>,
    pub nu: Vec<f64>,
    pub kappa: f64,
    pub alpha: f64,
    pub g: VelocityControl,
    /// Partition of the agents into stuck groups, each sorted, ordered by first member.
    pub clusters: Vec<Vec<usize>>,
}

impl LineSystem {
    /// Builds the system from positions and ν directly. Near-equal ν values are
    /// snapped together and coincident agents with equal ν start merged.
    pub fn new(q: Vec<f64>, mut nu: Vec<f64>, kappa: f64, alpha: f64, g: VelocityControl) -> Result<Self> {
        check_alpha(alpha)?;
        if q.is_empty() || q.len() != nu.len() {
            return Err(Error::Domain("q and nu must be nonempty and of equal length".into()));
        }
        if !(kappa >= 0.0 && kappa.is_finite()) {
            return Err(Error::Domain(format!("kappa must be nonnegative, got {kappa}")));
        }
        if q.iter().chain(&nu).any(|x| !x.is_finite()) {
            return Err(Error::Domain("non-finite line data".into()));
        }
        snap_ties(&mut nu);
        let n = q.len();
        let mut cid: Vec<usize> = (0..n).collect();
        for i in 0..n {
            for j in 0..i {
                if q[i] == q[j] && nu[i] == nu[j] {
                    cid[i] = cid[j];
                    break;
                }
            }
        }
        Ok(Self { t: 0.0, q, nu, kappa, alpha, g, clusters: clusters_from_ids(&cid) })
    }

    /// Builds the system from second-order initial data; the kernel must be weakly singular.
    pub fn from_initial(q0: &[f64], p0: &[f64], kernel: &Kernel, kappa: f64, g: VelocityControl) -> Result<Self> {
        if kernel.classify() != KernelClass::TypeII {
            return Err(match kernel.alpha() {
                Some(alpha) => Error::NonIntegrable { alpha },
                None => Error::InvalidKernel("the line reduction needs a power kernel with 0 < alpha < 1".into()),
            });
        }
        let nu = nu_from_initial(q0, p0, kernel, kappa)?;
        Self::new(q0.to_vec(), nu, kappa, kernel.alpha().expect("power kernel"), g)
    }

    pub fn at_time(mut self, t: f64) -> Self {
        self.t = t;
        self
    }

    pub fn n(&self) -> usize {
        self.q.len()
    }

    #[inline]
    fn big_psi(&self, x: f64) -> f64 {
        x.signum() * x.abs().powf(1.0 - self.alpha) / (1.0 - self.alpha)
    }

    fn coupling(&self, q: &[f64], i: usize) -> f64 {
        let c = self.kappa / q.len() as f64;
        c * q.iter().map(|&qk| self.big_psi(qk - q[i])).sum::<f64>()
    }

    /// `p_i = ν_i + (κ/N) Σ_k Ψ(q_k − q_i)` at the given positions.
    pub fn recover_momentum(&self, q: &[f64]) -> Vec<f64> {
        (0..q.len()).map(|i| self.nu[i] + self.coupling(q, i)).collect()
    }

    pub fn velocity_into(&self, q: &[f64], out: &mut [f64]) {
        for (i, o) in out.iter_mut().enumerate() {
            *o = self.g.apply_scalar(self.nu[i] + self.coupling(q, i));
        }
    }

    pub fn predict_pairwise(&self) -> Vec<Vec<Option<PairOutcome>>> {
        predict_pairwise(&self.q, &self.nu)
    }

    fn snapshot(&self, t: f64, q: &[f64]) -> State {
        State { t, n: q.len(), d: 1, q: q.to_vec(), p: self.recover_momentum(q) }
    }

    /// Integrates the positions up to `cfg.t_end`, merging ν-tied pairs when they
    /// meet and logging transversal crossings.
    pub fn simulate(&self, cfg: &IntegratorConfig) -> Result<(Trajectory, LineEventLog)> {
        cfg.validate()?;
        if !(cfg.t_end > self.t) {
            return Err(Error::Config(format!("t_end {} must exceed the start time {}", cfg.t_end, self.t)));
        }
        LineRun::new(self.clone(), cfg).run()
    }
}

fn clusters_from_ids(cid: &[usize]) -> Vec<Vec<usize>> {
    let mut groups: Vec<Vec<usize>> = Vec::new();
    for (i, &c) in cid.iter().enumerate() {
        match groups.iter_mut().find(|g| cid[g[0]] == c) {
            Some(g) => g.push(i),
            None => groups.push(vec![i]),
        }
    }
    groups
}

struct LineRun<'a> {
    sys: LineSystem,
    cfg: &'a IntegratorConfig,
    cid: Vec<usize>,
    /// Sign of `q_i − q_j` when it was last nonzero, row-major upper triangle.
    last_sign: Vec<f64>,
    /// Pairs with equal ν, any cluster.
    tied: Vec<(usize, usize)>,
    /// Per tied pair, the last two `(t, φ)` samples at which `φ = sgn(g)|g|^α`
    /// had halved; the sticking time is extrapolated from them.
    anchors: Vec<[(f64, f64); 2]>,
    traj: Trajectory,
    log: LineEventLog,
    next_out: f64,
}

impl<'a> LineRun<'a> {
    fn new(sys: LineSystem, cfg: &'a IntegratorConfig) -> Self {
        let n = sys.n();
        let mut cid = vec![0; n];
        for (k, c) in sys.clusters.iter().enumerate() {
            for &i in c {
                cid[i] = k;
            }
        }
        let mut last_sign = vec![0.0; n * n];
        let mut tied = Vec::new();
        for i in 0..n {
            for j in (i + 1)..n {
                last_sign[i * n + j] = sign(sys.q[i] - sys.q[j]);
                if sys.nu[i] == sys.nu[j] {
                    tied.push((i, j));
                }
            }
        }
        let alpha = sys.alpha;
        let anchors = tied.iter().map(|&(i, j)| [(sys.t, phi(sys.q[i] - sys.q[j], alpha)); 2]).collect();
        let first = sys.snapshot(sys.t, &sys.q);
        let next_out = sys.t + cfg.output_interval.unwrap_or(0.0);
        Self {
            sys,
            cfg,
            cid,
            last_sign,
            tied,
            anchors,
            traj: Trajectory { snapshots: vec![first], events: Vec::new() },
            log: LineEventLog::default(),
            next_out,
        }
    }

    fn run(mut self) -> Result<(Trajectory, LineEventLog)> {
        let cfg = self.cfg;
        let n = self.sys.n();
        let mut t = self.sys.t;
        let mut y = self.sys.q.clone();
        let mut f = vec![0.0; n];
        self.sys.velocity_into(&y, &mut f);
        let (mut y1, mut f1, mut err) = (vec![0.0; n], vec![0.0; n], vec![0.0; n]);
        let mut stepper = Dopri5::new(n);
        let mut ctrl = PiController::new();
        let mut h = cfg.dt_init;
        let mut steps = 0usize;
        let sys = self.sys.clone();
        let mut rhs = |_t: f64, q: &[f64], out: &mut [f64]| {
            sys.velocity_into(q, out);
            Ok(())
        };

        while t < cfg.t_end {
            steps += 1;
            if steps > cfg.max_steps {
                return Err(Error::Domain(format!("max_steps {} exceeded at t = {t}", cfg.max_steps)));
            }
            let remaining = cfg.t_end - t;
            let mut trial = h.min(cfg.dt_max);
            let last = trial >= remaining;
            if last {
                trial = remaining;
            }
            stepper.step(&mut rhs, t, trial, &y, &f, &mut y1, &mut f1, &mut err)?;
            let e = error_norm(&y, &y1, &err, cfg.rel_tol, cfg.abs_tol).max(self.tied_gap_error(&y, &y1, &err));
            if e > 1.0 || y1.iter().any(|x| !x.is_finite()) {
                if trial <= cfg.dt_min * (1.0 + 1e-12) {
                    return Err(Error::StepFloorHit { t, dt_min: cfg.dt_min });
                }
                h = (trial * ctrl.reject(e)).max(cfg.dt_min);
                continue;
            }
            let t1 = if last { cfg.t_end } else { t + trial };
            self.record_crossings(&DenseStep { t0: t, h: trial, y0: &y, f0: &f, y1: &y1, f1: &f1 });
            if self.merge_ties(t, trial, &y, &mut y1) {
                self.sys.velocity_into(&y1, &mut f1);
            }
            self.update_anchors(t1, &y1);
            self.output(&DenseStep { t0: t, h: trial, y0: &y, f0: &f, y1: &y1, f1: &f1 }, t1);
            std::mem::swap(&mut y, &mut y1);
            std::mem::swap(&mut f, &mut f1);
            t = t1;
            h = trial * ctrl.accept(e);
        }
        if self.traj.last().is_some_and(|s| s.t < t) {
            let snap = self.sys.snapshot(t, &y);
            self.traj.snapshots.push(snap);
        }
        self.log.events.sort_by(|a, b| a.time.total_cmp(&b.time));
        self.log.sticking_times.sort_by(f64::total_cmp);
        self.log.sticking_times.dedup();
        self.traj.events = self.log.events.clone();
        Ok((self.traj, self.log))
    }

    /// Relative error of the gap of each tied pair that has not merged yet.
    fn tied_gap_error(&self, y: &[f64], y1: &[f64], err: &[f64]) -> f64 {
        let mut worst: f64 = 0.0;
        for &(i, j) in &self.tied {
            if self.cid[i] == self.cid[j] {
                continue;
            }
            let gap = (y[i] - y[j]).abs().max((y1[i] - y1[j]).abs());
            let scale = self.cfg.rel_tol * gap + f64::MIN_POSITIVE;
            worst = worst.max((err[i] - err[j]).abs() / scale);
        }
        worst
    }

    fn record_crossings(&mut self, step: &DenseStep<'_>) {
        let n = self.sys.n();
        for i in 0..n {
            for j in (i + 1)..n {
                if self.cid[i] == self.cid[j] {
                    continue;
                }
                let s1 = sign(step.y1[i] - step.y1[j]);
                let prev = self.last_sign[i * n + j];
                if s1 == 0.0 {
                    continue;
                }
                self.last_sign[i * n + j] = s1;
                if prev != 0.0 && prev != s1 && self.sys.nu[i] != self.sys.nu[j] {
                    let time = bisect_sign(step, i, j, prev);
                    self.log.events.push(EventRecord { time, kind: EventKind::Collision, pair: (i, j), value: 0.0 });
                }
            }
        }
    }

    /// Merges tied pairs that met during the step; returns whether anything changed.
    fn merge_ties(&mut self, t0: f64, h: f64, y0: &[f64], y1: &mut [f64]) -> bool {
        let n = self.sys.n();
        let mut changed = false;
        for k in 0..self.tied.len() {
            let (i, j) = self.tied[k];
            if self.cid[i] == self.cid[j] {
                continue;
            }
            let g0 = y0[i] - y0[j];
            let g1 = y1[i] - y1[j];
            let tol = GAP_MERGE_REL * (1.0 + y1[i].abs().max(y1[j].abs()));
            let crossed = sign(g0) != 0.0 && sign(g1) != sign(g0);
            if !(crossed || g1.abs() < tol) {
                continue;
            }
            let time = if crossed { self.stick_time(t0, t0 + h, g0, g1) } else { self.extrapolated_stick_time(k, t0 + h, g1) };
            let (a, b) = (self.cid[i], self.cid[j]);
            let members: Vec<usize> = (0..n).filter(|&m| self.cid[m] == a || self.cid[m] == b).collect();
            let mean = members.iter().map(|&m| y1[m]).sum::<f64>() / members.len() as f64;
            for &m in &members {
                y1[m] = mean;
            }
            for &u in &members {
                for &v in &members {
                    if u < v && self.cid[u] == a && self.cid[v] == b || u < v && self.cid[u] == b && self.cid[v] == a {
                        self.log.events.push(EventRecord { time, kind: EventKind::StickStart, pair: (u, v), value: 0.0 });
                    }
                }
            }
            for &m in &members {
                self.cid[m] = a;
            }
            self.log.sticking_times.push(time);
            changed = true;
        }
        if changed {
            self.sys.clusters = clusters_from_ids(&self.cid);
        }
        changed
    }

    /// Root of the linear interpolant of `sgn(g)|g|^α`, which is affine in time
    /// near sticking.
    fn stick_time(&self, t0: f64, t1: f64, g0: f64, g1: f64) -> f64 {
        let alpha = self.sys.alpha;
        let (a, b) = (phi(g0, alpha), phi(g1, alpha));
        let root = if a == b { t1 } else { t0 + (t1 - t0) * a / (a - b) };
        root.clamp(t0, self.cfg.t_end)
    }

    /// Root of the line through the older anchor of tied pair `k` and `(t1, φ(g1))`.
    fn extrapolated_stick_time(&self, k: usize, t1: f64, g1: f64) -> f64 {
        let (ta, pa) = self.anchors[k][0];
        let p1 = phi(g1, self.sys.alpha);
        let root = if pa == p1 || ta >= t1 { t1 } else { t1 + (t1 - ta) * p1 / (pa - p1) };
        root.clamp(t1, self.cfg.t_end)
    }

    fn update_anchors(&mut self, t1: f64, y1: &[f64]) {
        for (k, &(i, j)) in self.tied.iter().enumerate() {
            if self.cid[i] == self.cid[j] {
                continue;
            }
            let p1 = phi(y1[i] - y1[j], self.sys.alpha);
            let a = &mut self.anchors[k];
            if p1.abs() <= 0.5 * a[1].1.abs() {
                a[0] = a[1];
                a[1] = (t1, p1);
            }
        }
    }

    fn output(&mut self, step: &DenseStep<'_>, t1: f64) {
        let y1 = step.y1;
        match self.cfg.output_interval {
            None => {
                let s = self.sys.snapshot(t1, y1);
                self.traj.snapshots.push(s);
            }
            Some(dt_out) => {
                let mut buf = vec![0.0; y1.len()];
                while self.next_out < t1 {
                    step.values_into(self.next_out, &mut buf);
                    let s = self.sys.snapshot(self.next_out, &buf);
                    self.traj.snapshots.push(s);
                    self.next_out += dt_out;
                }
                if self.next_out == t1 {
                    let s = self.sys.snapshot(t1, y1);
                    self.traj.snapshots.push(s);
                    self.next_out += dt_out;
                }
            }
        }
    }
}

fn phi(g: f64, alpha: f64) -> f64 {
    g.signum() * g.abs().powf(alpha)
}

#[inline]
fn sign(x: f64) -> f64 {
    if x > 0.0 {
        1.0
    } else if x < 0.0 {
        -1.0
    } else {
        0.0
    }
}

fn bisect_sign(step: &DenseStep<'_>, i: usize, j: usize, before: f64) -> f64 {
    let (mut lo, mut hi) = (step.t0, step.t0 + step.h);
    while hi - lo > EVENT_TIME_TOL {
        let mid = 0.5 * (lo + hi);
        if mid <= lo || mid >= hi {
            break;
        }
        if sign(step.value(i, mid) - step.value(j, mid)) == before {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    0.5 * (lo + hi)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn half() -> Kernel {
        Kernel::power(0.5).unwrap()
    }

    #[test]
    fn sticking_time_is_sharp_under_tight_tolerances() {
        for alpha in [0.4, 0.5, 0.6] {
            let sys = LineSystem::new(vec![1.0, 0.0], vec![0.0, 0.0], 10.0, alpha, VelocityControl::Identity).unwrap();
            let exact = (1.0 - alpha) / (10.0 * alpha);
            for tol in [1e-9, 1e-13] {
                let cfg = IntegratorConfig::with_t_end(2.0 * exact).with_tolerances(tol, 1e-18);
                let (_, log) = sys.simulate(&cfg).unwrap();
                let t = log.stick_event(0, 1).unwrap().time;
                assert!((t - exact).abs() < 5e-10, "alpha {alpha} tol {tol}: {t} vs {exact}");
            }
        }
    }

    #[test]
    fn nu_examples() {
        let nu = nu_from_initial(&[1.0, 0.0], &[-1.0, 1.0], &half(), 1.0).unwrap();
        assert_eq!(nu, vec![0.0, 0.0]);
        let shifted = nu_from_initial(&[11.0, 10.0], &[-1.0, 1.0], &half(), 1.0).unwrap();
        assert_eq!(shifted, nu);
        assert_eq!(nu_from_initial(&[1.0, 0.0, 4.0], &[0.5, 1.0, 2.0], &half(), 0.0).unwrap(), vec![0.5, 1.0, 2.0]);
        assert!(matches!(
            nu_from_initial(&[1.0, 0.0], &[0.0, 0.0], &Kernel::power(1.5).unwrap(), 1.0),
            Err(Error::NonIntegrable { .. })
        ));
    }

    #[test]
    fn trichotomy_examples() {
        let get = |nu: [f64; 2]| predict_pairwise(&[1.0, 0.0], &nu)[0][1].unwrap();
        assert_eq!(get([1.0, 0.0]), PairOutcome::NeverMeet);
        assert_eq!(get([0.0, 1.0]), PairOutcome::CollideOnce);
        assert_eq!(get([0.0, 0.0]), PairOutcome::Stick);
        let m = predict_pairwise(&[1.0, 0.0], &[0.0, 1.0]);
        assert_eq!(m[1][0], m[0][1]);
        assert!(m[0][0].is_none());
    }

    #[test]
    fn closed_form_examples() {
        assert_eq!(two_body_closed_form(1.0, 0.0, 1.0, 0.0).unwrap(), (1.0, 0.0));
        assert_eq!(two_body_closed_form(1.0, 0.0, 1.0, 0.5).unwrap(), (0.625, 0.375));
        assert_eq!(two_body_closed_form(1.0, 0.0, 1.0, 2.0).unwrap(), (0.5, 0.5));
        assert!(two_body_closed_form(0.0, 1.0, 1.0, 0.0).is_err());
    }

    #[test]
    fn recover_momentum_examples() {
        let sys = LineSystem::from_initial(&[1.0, 0.0], &[-1.0, 1.0], &half(), 1.0, VelocityControl::Identity).unwrap();
        assert_eq!(sys.recover_momentum(&[1.0, 0.0]), vec![-1.0, 1.0]);
        assert_eq!(sys.recover_momentum(&[0.5, 0.5]), vec![0.0, 0.0]);
        let free = LineSystem::new(vec![0.0, 3.0], vec![0.25, -1.0], 0.0, 0.5, VelocityControl::Identity).unwrap();
        assert_eq!(free.recover_momentum(&[2.0, -7.0]), vec![0.25, -1.0]);
    }

    #[test]
    fn rate_bounds_and_regularity_examples() {
        let id = GBounds::new(1.0, 1.0, 1.0);
        let (a, b) = sticking_rate_bounds(1.0, 0.5, 2, &id).unwrap();
        assert!((a - 1.0).abs() < 1e-15 && (b - 2.0).abs() < 1e-14);
        let (a, b) = sticking_rate_bounds(2.0, 0.5, 2, &id).unwrap();
        assert!((a - 4.0).abs() < 1e-12 && (b - 8.0).abs() < 1e-12);
        assert_eq!(regularity_exponents(2, 0.5, &id).unwrap(), (0.5, 2.0));
        let (k, gs) = regularity_exponents(2, 0.25, &id).unwrap();
        assert!((k - 1.5 * 2f64.sqrt()).abs() < 1e-12);
        assert_eq!(gs, 4.0);
        assert!(regularity_exponents(2, 1.0, &id).is_err());
    }

    #[test]
    fn tie_snapping() {
        let sys = LineSystem::new(vec![0.0, 1.0, 2.0], vec![1.0, 1.0 + 1e-12, 3.0], 1.0, 0.5, VelocityControl::Identity).unwrap();
        assert_eq!(sys.nu[0], sys.nu[1]);
        assert_eq!(sys.nu[2], 3.0);
    }

    #[test]
    fn stationary_cluster_has_no_events() {
        let sys = LineSystem::new(vec![0.3; 3], vec![0.0; 3], 1.0, 0.5, VelocityControl::Identity).unwrap();
        assert_eq!(sys.clusters, vec![vec![0, 1, 2]]);
        let (traj, log) = sys.simulate(&IntegratorConfig::with_t_end(2.0)).unwrap();
        assert!(log.events.is_empty());
        assert!(traj.snapshots.iter().all(|s| s.q == vec![0.3; 3]));
    }

    #[test]
    fn two_body_sticking_matches_closed_form() {
        let sys = LineSystem::from_initial(&[1.0, 0.0], &[-1.0, 1.0], &half(), 1.0, VelocityControl::Identity).unwrap();
        let cfg = IntegratorConfig::with_t_end(3.0).with_tolerances(1e-10, 1e-13);
        let (traj, log) = sys.simulate(&cfg).unwrap();
        assert_eq!(log.sticking_times.len(), 1);
        assert!((log.sticking_times[0] - 1.0).abs() < 1e-3);
        for s in &traj.snapshots {
            if (s.t - 1.0).abs() < 1e-3 {
                continue;
            }
            let (a, b) = two_body_closed_form(1.0, 0.0, 1.0, s.t).unwrap();
            assert!((s.q[0] - a).abs() <= 1e-6 && (s.q[1] - b).abs() <= 1e-6, "t={}", s.t);
        }
        let last = traj.last().unwrap();
        assert_eq!(last.q[0], last.q[1]);
        assert!(last.p.iter().all(|p| p.abs() < 1e-12));
    }

    #[test]
    fn single_collision_then_separation() {
        let sys = LineSystem::new(vec![1.0, 0.0], vec![0.0, 1.0], 1.0, 0.5, VelocityControl::Identity).unwrap();
        let (traj, log) = sys.simulate(&IntegratorConfig::with_t_end(10.0)).unwrap();
        assert_eq!(log.crossings(0, 1), 1);
        assert_eq!(log.observed(0, 1), Some(PairOutcome::CollideOnce));
        let tc = log.events[0].time;
        let late: Vec<f64> = traj.snapshots.iter().filter(|s| s.t > tc + 1.0).map(|s| (s.q[0] - s.q[1]).abs()).collect();
        assert!(late.windows(2).all(|w| w[1] >= w[0]));
        assert!(late[0] > 0.0);
    }

    #[test]
    fn fit_exponent_on_exact_power_data() {
        let snaps: Vec<State> = (0..20)
            .map(|k| {
                let eps = 1e-2 * 0.7f64.powi(k);
                State { t: 1.0 - eps, n: 2, d: 1, q: vec![eps.powi(3), 0.0], p: vec![0.0, 0.0] }
            })
            .collect();
        let traj = Trajectory { snapshots: snaps, events: vec![] };
        let ev = EventRecord { time: 1.0, kind: EventKind::StickStart, pair: (0, 1), value: 0.0 };
        let (slope, _) = fit_sticking_exponent(&traj, &ev, (1e-6, 1.0)).unwrap();
        assert!((slope - 3.0).abs() < 1e-12);
        assert!(matches!(fit_sticking_exponent(&traj, &ev, (1e-3, 2e-3)), Err(Error::InsufficientData(_))));
    }

    #[test]
    fn example_fit_slope_is_two() {
        let sys = LineSystem::from_initial(&[1.0, 0.0], &[-1.0, 1.0], &half(), 1.0, VelocityControl::Identity).unwrap();
        let cfg = IntegratorConfig::with_t_end(1.5).with_tolerances(1e-10, 1e-13);
        let (traj, log) = sys.simulate(&cfg).unwrap();
        let ev = log.stick_event(0, 1).unwrap();
        let (slope, _) = fit_sticking_exponent(&traj, ev, (1e-4, 1e-2)).unwrap();
        assert!((slope - 2.0).abs() < 0.02, "{slope}");
    }
}
