//! Adaptive integration of the second-order system.
//!
//! Dormand–Prince 5(4) with PI step control, cubic Hermite dense output and
//! detection of local minima of pairwise distances. For strongly singular
//! kernels every step is additionally capped by
//! `gap_safety · min_gap / (2 M_{G'} P⁰_M)`: relative speeds never exceed
//! `2 M_{G'} P⁰_M`, so an accepted step cannot close the smallest gap.

mod dense;
mod dopri;

pub(crate) use dense::DenseStep;
pub(crate) use dopri::{error_norm, Dopri5, PiController};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::gctrl::VelocityControl;
use crate::kernel::{Kernel, KernelClass};
use crate::line1d::LineSystem;
use crate::model::{self, EventKind, EventRecord, Params, RhsWork, State, Trajectory};

/// Bisection tolerance for event times.
pub const EVENT_TIME_TOL: f64 = 1e-10;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct IntegratorConfig {
    pub rel_tol: f64,
    pub abs_tol: f64,
    pub dt_init: f64,
    pub dt_min: f64,
    pub dt_max: f64,
    /// Fraction of the worst-case closing time allowed per step (type III only).
    pub gap_safety: f64,
    /// Absolute end time.
    pub t_end: f64,
    /// Records a [`EventKind::GapBelowThreshold`] when the minimum gap drops below this.
    pub gap_threshold: Option<f64>,
    /// Snapshot spacing; `None` stores every accepted step.
    pub output_interval: Option<f64>,
    pub record_gap_minima: bool,
    pub max_steps: usize,
}

impl Default for IntegratorConfig {
    fn default() -> Self {
        Self {
            rel_tol: 1e-9,
            abs_tol: 1e-12,
            dt_init: 1e-3,
            dt_min: 1e-14,
            dt_max: 1.0,
            gap_safety: 0.5,
            t_end: 10.0,
            gap_threshold: None,
            output_interval: None,
            record_gap_minima: true,
            max_steps: 50_000_000,
        }
    }
}

impl IntegratorConfig {
    pub fn with_t_end(t_end: f64) -> Self {
        Self { t_end, ..Self::default() }
    }

    pub fn with_tolerances(mut self, rel_tol: f64, abs_tol: f64) -> Self {
        self.rel_tol = rel_tol;
        self.abs_tol = abs_tol;
        self
    }

    pub fn validate(&self) -> Result<()> {
        let pos = |x: f64| x.is_finite() && x > 0.0;
        if !(pos(self.rel_tol) && pos(self.abs_tol)) {
            return Err(Error::Config("tolerances must be positive".into()));
        }
        if !(pos(self.dt_min) && pos(self.dt_init) && pos(self.dt_max)) {
            return Err(Error::Config("step sizes must be positive".into()));
        }
        if !(self.dt_min <= self.dt_init && self.dt_init <= self.dt_max) {
            return Err(Error::Config("need dt_min <= dt_init <= dt_max".into()));
        }
        if !(self.gap_safety > 0.0 && self.gap_safety <= 1.0) {
            return Err(Error::Config("gap_safety must lie in (0, 1]".into()));
        }
        if !pos(self.t_end) {
            return Err(Error::Config("t_end must be positive".into()));
        }
        if matches!(self.output_interval, Some(h) if !pos(h)) {
            return Err(Error::Config("output_interval must be positive".into()));
        }
        if matches!(self.gap_threshold, Some(h) if !pos(h)) {
            return Err(Error::Config("gap_threshold must be positive".into()));
        }
        Ok(())
    }
}

/// Result of a run that may have been cut short.
#[derive(Debug, Clone)]
pub struct Outcome {
    pub trajectory: Trajectory,
    /// The abort reason, if the run did not reach `t_end`.
    pub error: Option<Error>,
}

/// Integrates from `state0` to `cfg.t_end`.
pub fn integrate(
    state0: &State,
    kernel: &Kernel,
    g: &VelocityControl,
    params: &Params,
    cfg: &IntegratorConfig,
) -> Result<Trajectory> {
    let out = integrate_partial(state0, kernel, g, params, cfg)?;
    match out.error {
        Some(e) => Err(e),
        None => Ok(out.trajectory),
    }
}

/// Like [`integrate`] but keeps the partial trajectory when a run aborts.
///
/// Invalid inputs still return `Err`.
pub fn integrate_partial(
    state0: &State,
    kernel: &Kernel,
    g: &VelocityControl,
    params: &Params,
    cfg: &IntegratorConfig,
) -> Result<Outcome> {
    cfg.validate()?;
    params.validate()?;
    state0.validate()?;
    state0.check_params(params)?;
    if !(cfg.t_end > state0.t) {
        return Err(Error::Config(format!("t_end {} must exceed the initial time {}", cfg.t_end, state0.t)));
    }
    let class = kernel.classify();
    if class == KernelClass::TypeII {
        if state0.d >= 2 {
            return Err(Error::OutOfScope("weak solutions in d≥2".into()));
        }
        let sys = LineSystem::from_initial(&state0.q, &state0.p, kernel, params.kappa, g.clone())?.at_time(state0.t);
        let (trajectory, _) = sys.simulate(cfg)?;
        return Ok(Outcome { trajectory, error: None });
    }
    if kernel.is_singular() && model::min_pairwise_gap(state0.n, state0.d, &state0.q).0 == 0.0 {
        return Err(Error::Domain("singular kernel needs pairwise distinct initial positions".into()));
    }
    Ok(Runner::new(state0, kernel, g, params, cfg)?.run())
}

struct Runner<'a> {
    kernel: &'a Kernel,
    g: &'a VelocityControl,
    kappa: f64,
    cfg: &'a IntegratorConfig,
    n: usize,
    d: usize,
    /// `2 M_{G'} P⁰_M` when the gap ceiling applies.
    speed_bound: Option<f64>,
    traj: Trajectory,
    t: f64,
    y: Vec<f64>,
    f: Vec<f64>,
    work: RhsWork,
    next_out: f64,
}

impl<'a> Runner<'a> {
    fn new(
        state0: &State,
        kernel: &'a Kernel,
        g: &'a VelocityControl,
        params: &Params,
        cfg: &'a IntegratorConfig,
    ) -> Result<Self> {
        let speed_bound = if kernel.classify() == KernelClass::TypeIII {
            let gb = g.bounds(model::max_speed(state0))?;
            let b = 2.0 * gb.big_m_gprime * gb.p0_max;
            (b > 0.0).then_some(b)
        } else {
            None
        };
        let y: Vec<f64> = state0.q.iter().chain(&state0.p).copied().collect();
        let mut work = RhsWork::default();
        let mut f = vec![0.0; y.len()];
        eval(&mut work, state0.n, state0.d, kernel, g, params.kappa, &y, &mut f).map_err(|e| with_time(e, state0.t))?;
        Ok(Self {
            kernel,
            g,
            kappa: params.kappa,
            cfg,
            n: state0.n,
            d: state0.d,
            speed_bound,
            traj: Trajectory { snapshots: vec![state0.clone()], events: Vec::new() },
            t: state0.t,
            y,
            f,
            work,
            next_out: state0.t + cfg.output_interval.unwrap_or(0.0),
        })
    }

    fn nd(&self) -> usize {
        self.n * self.d
    }

    fn run(mut self) -> Outcome {
        let cfg = self.cfg;
        let len = self.y.len();
        let mut stepper = Dopri5::new(len);
        let mut ctrl = PiController::new();
        let (mut y1, mut f1, mut err) = (vec![0.0; len], vec![0.0; len], vec![0.0; len]);
        let mut h = cfg.dt_init;
        let mut steps = 0usize;
        let (n, d, kernel, g, kappa) = (self.n, self.d, self.kernel, self.g, self.kappa);
        let mut work = std::mem::take(&mut self.work);
        let mut rhs = |_t: f64, y: &[f64], out: &mut [f64]| eval(&mut work, n, d, kernel, g, kappa, y, out);

        while self.t < cfg.t_end {
            steps += 1;
            if steps > cfg.max_steps {
                let e = Error::Domain(format!("max_steps {} exceeded at t = {}", cfg.max_steps, self.t));
                return self.abort(e);
            }
            let remaining = cfg.t_end - self.t;
            let mut trial = h.min(cfg.dt_max);
            if let Some(speed) = self.speed_bound {
                let (gap, _) = model::min_pairwise_gap(n, d, &self.y[..n * d]);
                let ceiling = cfg.gap_safety * gap / speed;
                if ceiling < cfg.dt_min && ceiling < remaining {
                    let e = Error::StepFloorHit { t: self.t, dt_min: cfg.dt_min };
                    return self.abort(e);
                }
                trial = trial.min(ceiling);
            }
            let last = trial >= remaining;
            if last {
                trial = remaining;
            }
            let res = stepper.step(&mut rhs, self.t, trial, &self.y, &self.f, &mut y1, &mut f1, &mut err);
            let e = match res {
                Ok(()) => error_norm(&self.y, &y1, &err, cfg.rel_tol, cfg.abs_tol),
                Err(Error::SingularEvaluation) | Err(Error::NonFinite { .. }) => f64::INFINITY,
                Err(e) => return self.abort(e),
            };
            if e <= 1.0 {
                let t1 = if last { cfg.t_end } else { self.t + trial };
                self.accept(t1, trial, &y1, &f1);
                std::mem::swap(&mut self.y, &mut y1);
                std::mem::swap(&mut self.f, &mut f1);
                self.t = t1;
                h = trial * ctrl.accept(e);
            } else {
                if trial <= cfg.dt_min * (1.0 + 1e-12) {
                    let kind = if e.is_finite() {
                        Error::StepFloorHit { t: self.t, dt_min: cfg.dt_min }
                    } else {
                        Error::NonFinite { t: self.t }
                    };
                    return self.abort(kind);
                }
                h = (trial * ctrl.reject(e)).max(cfg.dt_min);
            }
        }
        self.finish_output();
        Outcome { trajectory: self.traj, error: None }
    }

    fn accept(&mut self, t1: f64, h: f64, y1: &[f64], f1: &[f64]) {
        let (y0, f0) = (std::mem::take(&mut self.y), std::mem::take(&mut self.f));
        let step = DenseStep { t0: self.t, h, y0: &y0, f0: &f0, y1, f1 };
        let mut events = Vec::new();
        if self.cfg.record_gap_minima {
            gap_minima(&step, self.n, self.d, &mut events);
        }
        if let Some(th) = self.cfg.gap_threshold {
            threshold_crossing(&step, self.n, self.d, th, &mut events);
        }
        events.sort_by(|a, b| a.time.total_cmp(&b.time));
        self.traj.events.extend(events);

        let nd = self.nd();
        match self.cfg.output_interval {
            None => self.push_snapshot(t1, &y1[..nd], &y1[nd..]),
            Some(dt_out) => {
                let mut buf = vec![0.0; y1.len()];
                while self.next_out < t1 {
                    step.values_into(self.next_out, &mut buf);
                    let t = self.next_out;
                    self.push_snapshot(t, &buf[..nd], &buf[nd..]);
                    self.next_out = t + dt_out;
                }
                if self.next_out == t1 {
                    self.push_snapshot(t1, &y1[..nd], &y1[nd..]);
                    self.next_out = t1 + dt_out;
                }
            }
        }
        self.y = y0;
        self.f = f0;
    }

    fn push_snapshot(&mut self, t: f64, q: &[f64], p: &[f64]) {
        if self.traj.last().is_some_and(|s| s.t >= t) {
            return;
        }
        self.traj.snapshots.push(State { t, n: self.n, d: self.d, q: q.to_vec(), p: p.to_vec() });
    }

    fn finish_output(&mut self) {
        let nd = self.nd();
        let y = std::mem::take(&mut self.y);
        self.push_snapshot(self.t, &y[..nd], &y[nd..]);
        self.y = y;
    }

    fn abort(mut self, e: Error) -> Outcome {
        self.finish_output();
        if matches!(e, Error::StepFloorHit { .. }) {
            let (gap, pair) = model::min_pairwise_gap(self.n, self.d, &self.y[..self.nd()]);
            self.traj.events.push(EventRecord { time: self.t, kind: EventKind::StepFloorHit, pair, value: gap });
        }
        Outcome { trajectory: self.traj, error: Some(e) }
    }
}

#[allow(clippy::too_many_arguments)]
fn eval(
    work: &mut RhsWork,
    n: usize,
    d: usize,
    kernel: &Kernel,
    g: &VelocityControl,
    kappa: f64,
    y: &[f64],
    out: &mut [f64],
) -> Result<()> {
    let nd = n * d;
    let (dq, dp) = out.split_at_mut(nd);
    model::rhs_into(n, d, &y[..nd], &y[nd..], kernel, g, kappa, dq, dp, work)
}

fn with_time(e: Error, t: f64) -> Error {
    match e {
        Error::NonFinite { .. } => Error::NonFinite { t },
        e => e,
    }
}

/// `(q_i − q_j)·(q̇_i − q̇_j)` from the dense output, half the derivative of the squared gap.
fn gap_rate(step: &DenseStep<'_>, d: usize, i: usize, j: usize, t: f64) -> f64 {
    (0..d)
        .map(|a| {
            let (ki, kj) = (i * d + a, j * d + a);
            (step.value(ki, t) - step.value(kj, t)) * (step.deriv(ki, t) - step.deriv(kj, t))
        })
        .sum()
}

fn dense_min_gap(step: &DenseStep<'_>, n: usize, d: usize, t: f64) -> (f64, (usize, usize)) {
    let q: Vec<f64> = (0..n * d).map(|k| step.value(k, t)).collect();
    model::min_pairwise_gap(n, d, &q)
}

fn bisect<F: Fn(f64) -> bool>(mut lo: f64, mut hi: f64, after: F) -> f64 {
    while hi - lo > EVENT_TIME_TOL {
        let mid = 0.5 * (lo + hi);
        if mid <= lo || mid >= hi {
            break;
        }
        if after(mid) {
            hi = mid;
        } else {
            lo = mid;
        }
    }
    0.5 * (lo + hi)
}

fn gap_minima(step: &DenseStep<'_>, n: usize, d: usize, events: &mut Vec<EventRecord>) {
    let (t0, t1) = (step.t0, step.t0 + step.h);
    for i in 0..n {
        for j in (i + 1)..n {
            let s0 = gap_rate(step, d, i, j, t0);
            let s1 = gap_rate(step, d, i, j, t1);
            if s0 < 0.0 && s1 >= 0.0 {
                let tm = bisect(t0, t1, |t| gap_rate(step, d, i, j, t) >= 0.0);
                let (gap, _) = dense_min_gap(step, n, d, tm);
                events.push(EventRecord { time: tm, kind: EventKind::GapMinimum, pair: (i, j), value: gap });
            }
        }
    }
}

fn threshold_crossing(step: &DenseStep<'_>, n: usize, d: usize, th: f64, events: &mut Vec<EventRecord>) {
    let (t0, t1) = (step.t0, step.t0 + step.h);
    let (g0, _) = dense_min_gap(step, n, d, t0);
    let (g1, _) = dense_min_gap(step, n, d, t1);
    if g0 >= th && g1 < th {
        let tc = bisect(t0, t1, |t| dense_min_gap(step, n, d, t).0 < th);
        let (gap, pair) = dense_min_gap(step, n, d, tc);
        events.push(EventRecord { time: tc, kind: EventKind::GapBelowThreshold, pair, value: gap });
    }
}

/// Minimum pairwise distance over time: one point per snapshot plus one per
/// gap event, sorted by time. A single agent gives `+∞` throughout.
pub fn min_gap_trace(traj: &Trajectory) -> Vec<(f64, f64)> {
    let mut out: Vec<(f64, f64)> =
        traj.snapshots.iter().map(|s| (s.t, model::min_pairwise_gap(s.n, s.d, &s.q).0)).collect();
    out.extend(
        traj.events
            .iter()
            .filter(|e| matches!(e.kind, EventKind::GapMinimum | EventKind::Collision | EventKind::StickStart))
            .map(|e| (e.time, e.value)),
    );
    out.sort_by(|a, b| a.0.total_cmp(&b.0));
    out
}
