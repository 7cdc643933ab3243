//! Agent state, trajectories and the right-hand side of the second-order system.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::gctrl::VelocityControl;
use crate::kernel::Kernel;

/// Population size, ambient dimension and coupling strength κ.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Params {
    pub n_agents: usize,
    pub dim: usize,
    pub kappa: f64,
}

impl Params {
    pub fn new(n_agents: usize, dim: usize, kappa: f64) -> Result<Self> {
        let p = Self { n_agents, dim, kappa };
        p.validate()?;
        Ok(p)
    }

    pub fn validate(&self) -> Result<()> {
        if self.n_agents == 0 || self.dim == 0 {
            return Err(Error::Config("n_agents and dim must be at least 1".into()));
        }
        if !(self.kappa.is_finite() && self.kappa > 0.0) {
            return Err(Error::Config(format!("kappa must be positive, got {}", self.kappa)));
        }
        Ok(())
    }
}

/// Positions and momenta at time `t`, stored row-major as `N×d`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct State {
    pub t: f64,
    pub n: usize,
    pub d: usize,
    pub q: Vec<f64>,
    pub p: Vec<f64>,
}

impl State {
    pub fn new(t: f64, n: usize, d: usize, q: Vec<f64>, p: Vec<f64>) -> Result<Self> {
        let s = Self { t, n, d, q, p };
        s.validate()?;
        Ok(s)
    }

    pub fn validate(&self) -> Result<()> {
        if self.n == 0 || self.d == 0 {
            return Err(Error::Domain("state needs at least one agent and one dimension".into()));
        }
        if self.q.len() != self.n * self.d || self.p.len() != self.n * self.d {
            return Err(Error::Domain(format!(
                "state arrays must have {} entries (got q: {}, p: {})",
                self.n * self.d,
                self.q.len(),
                self.p.len()
            )));
        }
        if !self.t.is_finite() || self.q.iter().chain(&self.p).any(|x| !x.is_finite()) {
            return Err(Error::Domain("state contains non-finite entries".into()));
        }
        Ok(())
    }

    #[inline]
    pub fn qi(&self, i: usize) -> &[f64] {
        &self.q[i * self.d..(i + 1) * self.d]
    }

    #[inline]
    pub fn pi(&self, i: usize) -> &[f64] {
        &self.p[i * self.d..(i + 1) * self.d]
    }

    /// Checks that the state matches `params`.
    pub fn check_params(&self, params: &Params) -> Result<()> {
        if self.n != params.n_agents || self.d != params.dim {
            return Err(Error::Domain(format!(
                "state is {}x{} but params say {}x{}",
                self.n, self.d, params.n_agents, params.dim
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum EventKind {
    /// Local minimum of a pairwise distance.
    GapMinimum,
    /// The global minimum gap dropped below the configured threshold.
    GapBelowThreshold,
    /// The step size floor was reached.
    StepFloorHit,
    /// Transversal crossing of two agents on the line.
    Collision,
    /// Two agents on the line met with equal ν and merged.
    StickStart,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EventRecord {
    pub time: f64,
    pub kind: EventKind,
    pub pair: (usize, usize),
    /// Minimum pairwise distance at `time` (pair gap for line events).
    #[serde(with = "crate::fnum")]
    pub value: f64,
}

/// Snapshots at strictly increasing times plus the events between them.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct Trajectory {
    pub snapshots: Vec<State>,
    pub events: Vec<EventRecord>,
}

impl Trajectory {
    pub fn first(&self) -> Option<&State> {
        self.snapshots.first()
    }

    pub fn last(&self) -> Option<&State> {
        self.snapshots.last()
    }

    pub fn times(&self) -> Vec<f64> {
        self.snapshots.iter().map(|s| s.t).collect()
    }

    pub fn count(&self, kind: EventKind) -> usize {
        self.events.iter().filter(|e| e.kind == kind).count()
    }

    /// Checks the ordering invariants.
    pub fn validate(&self) -> Result<()> {
        if self.snapshots.windows(2).any(|w| !(w[1].t > w[0].t)) {
            return Err(Error::Domain("snapshot times are not strictly increasing".into()));
        }
        if let (Some(a), Some(b)) = (self.first(), self.last()) {
            if self.events.iter().any(|e| e.time < a.t || e.time > b.t) {
                return Err(Error::Domain("event outside the snapshot window".into()));
            }
        }
        Ok(())
    }
}

/// Time derivative of a [`State`].
#[derive(Debug, Clone, PartialEq)]
pub struct Derivative {
    pub dq: Vec<f64>,
    pub dp: Vec<f64>,
}

/// Scratch space for [`rhs_into`].
#[derive(Debug, Default, Clone)]
pub struct RhsWork {
    velocity: Vec<f64>,
    terms: Vec<Vec<f64>>,
}

/// Evaluates `dq_i = G(p_i)`, `dp_i = (κ/N) Σ_k ψ(|q_k − q_i|)(G(p_k) − G(p_i))`.
///
/// Each pair increment is computed once and applied with opposite signs; the
/// per-agent sums are then taken in value-sorted order so that relabelling
/// agents permutes the output exactly.
#[allow(clippy::too_many_arguments)]
pub fn rhs_into(
    n: usize,
    d: usize,
    q: &[f64],
    p: &[f64],
    kernel: &Kernel,
    g: &VelocityControl,
    kappa: f64,
    dq: &mut [f64],
    dp: &mut [f64],
    work: &mut RhsWork,
) -> Result<()> {
    work.velocity.resize(n * d, 0.0);
    for i in 0..n {
        g.apply_into(&p[i * d..(i + 1) * d], &mut work.velocity[i * d..(i + 1) * d]);
    }
    dq.copy_from_slice(&work.velocity);

    let c = kappa / n as f64;
    if work.terms.len() < n * d {
        work.terms.resize(n * d, Vec::new());
    }
    for t in work.terms.iter_mut().take(n * d) {
        t.clear();
    }
    for i in 0..n {
        for j in (i + 1)..n {
            let mut r2 = 0.0;
            for a in 0..d {
                let diff = q[j * d + a] - q[i * d + a];
                r2 += diff * diff;
            }
            let w = c * kernel.psi(r2.sqrt())?;
            for a in 0..d {
                let inc = w * (work.velocity[j * d + a] - work.velocity[i * d + a]);
                work.terms[i * d + a].push(inc);
                work.terms[j * d + a].push(-inc);
            }
        }
    }
    for (slot, terms) in dp.iter_mut().zip(work.terms.iter_mut()) {
        terms.sort_unstable_by(f64::total_cmp);
        *slot = terms.iter().sum();
    }
    if dp.iter().chain(dq.iter()).any(|x| !x.is_finite()) {
        return Err(Error::NonFinite { t: f64::NAN });
    }
    Ok(())
}

/// Right-hand side of the second-order system at `state`.
pub fn rhs(state: &State, kernel: &Kernel, g: &VelocityControl, params: &Params) -> Result<Derivative> {
    state.check_params(params)?;
    let mut dq = vec![0.0; state.q.len()];
    let mut dp = vec![0.0; state.p.len()];
    let mut work = RhsWork::default();
    rhs_into(state.n, state.d, &state.q, &state.p, kernel, g, params.kappa, &mut dq, &mut dp, &mut work)
        .map_err(|e| match e {
            Error::NonFinite { .. } => Error::NonFinite { t: state.t },
            e => e,
        })?;
    Ok(Derivative { dq, dp })
}

/// `Σ_k p_k`.
pub fn momentum_sum(state: &State) -> Vec<f64> {
    let mut s = vec![0.0; state.d];
    for i in 0..state.n {
        for (acc, x) in s.iter_mut().zip(state.pi(i)) {
            *acc += x;
        }
    }
    s
}

/// `max_i |p_i|`.
pub fn max_speed(state: &State) -> f64 {
    (0..state.n)
        .map(|i| state.pi(i).iter().map(|x| x * x).sum::<f64>().sqrt())
        .fold(0.0, f64::max)
}

/// Smallest pairwise distance, `+∞` for a single agent.
pub fn min_pairwise_gap(n: usize, d: usize, q: &[f64]) -> (f64, (usize, usize)) {
    let mut best = (f64::INFINITY, (0, 0));
    for i in 0..n {
        for j in (i + 1)..n {
            let r = dist(&q[i * d..(i + 1) * d], &q[j * d..(j + 1) * d]);
            if r < best.0 {
                best = (r, (i, j));
            }
        }
    }
    best
}

#[inline]
pub(crate) fn dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum::<f64>().sqrt()
}
