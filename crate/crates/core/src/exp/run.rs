//! Run orchestration and summaries.

use std::collections::BTreeMap;
use std::time::Instant;

use serde::{Deserialize, Serialize};

use crate::diagnostics::{
    collision_certificate, detect_bicluster, detect_flocking_with, dispersions, flocking_certificate,
    regularity_certificate, Certificate, DispersionReport, FlockingVerdict,
};
use crate::error::{Error, Result};
use crate::gctrl::GBounds;
use crate::integrator::{integrate_partial, min_gap_trace};
use crate::kernel::KernelClass;
use crate::line1d::{sticking_rate_bounds, LineEventLog, LineSystem};
use crate::model::{max_speed, momentum_sum, EventKind, EventRecord, Trajectory};

use super::config::{Analysis, Prepared, RunConfig};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunSummary {
    /// `ok`, `step_floor_hit` or `aborted`.
    pub status: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
    pub kernel: String,
    pub gctrl: String,
    pub n_agents: usize,
    pub dim: usize,
    pub kappa: f64,
    pub t_start: f64,
    pub t_final: f64,
    /// Snapshots produced by the solver.
    pub snapshots: usize,
    /// Lines in `trajectory.jsonl` after striding.
    pub snapshots_written: usize,
    pub final_dispersion: DispersionReport,
    #[serde(with = "crate::fnum")]
    pub min_gap: f64,
    /// `max_t |Σp(t) − Σp(0)|_∞`.
    pub momentum_drift: f64,
    pub certificates: Vec<Certificate>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub flocking: Option<FlockingVerdict>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub flocking_error: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub bicluster: Option<(Vec<usize>, Vec<usize>)>,
    pub event_counts: BTreeMap<String, usize>,
    pub events: Vec<EventRecord>,
    pub sticking_times: Vec<f64>,
    pub wall_time_s: f64,
}

#[derive(Debug, Clone)]
pub struct RunOutput {
    pub trajectory: Trajectory,
    pub line_log: Option<LineEventLog>,
    pub summary: RunSummary,
    /// Why the run stopped early, if it did.
    pub abort: Option<Error>,
}

/// Exit code convention of the command-line tool.
pub fn exit_code(e: &Error) -> i32 {
    match e {
        Error::Config(_) | Error::InvalidKernel(_) | Error::InvalidControl(_) | Error::OutOfScope(_) => 2,
        Error::StepFloorHit { .. } => 3,
        _ => 1,
    }
}

/// Indices kept with the given stride; the first and last snapshots always are.
pub fn stride_indices(len: usize, stride: usize) -> Vec<usize> {
    let mut idx: Vec<usize> = (0..len).step_by(stride.max(1)).collect();
    if len > 0 && idx.last() != Some(&(len - 1)) {
        idx.push(len - 1);
    }
    idx
}

/// Simulates a configuration without writing anything.
///
/// Invalid configurations return `Err`; a run cut short by the step floor
/// returns its partial trajectory with `abort` set.
pub fn execute(cfg: &RunConfig) -> Result<RunOutput> {
    let prep = cfg.prepare()?;
    let clock = Instant::now();
    let Prepared { params, kernel, g, state0 } = &prep;
    let (trajectory, line_log, abort) = if kernel.classify() == KernelClass::TypeII {
        let sys = LineSystem::from_initial(&state0.q, &state0.p, kernel, params.kappa, g.clone())?;
        let (traj, log) = sys.simulate(&cfg.integrator)?;
        (traj, Some(log), None)
    } else {
        let out = integrate_partial(state0, kernel, g, params, &cfg.integrator)?;
        (out.trajectory, None, out.error)
    };
    let summary = summarize(cfg, &prep, &trajectory, line_log.as_ref(), abort.as_ref(), clock.elapsed().as_secs_f64())?;
    Ok(RunOutput { trajectory, line_log, summary, abort })
}

fn summarize(
    cfg: &RunConfig,
    prep: &Prepared,
    traj: &Trajectory,
    line_log: Option<&LineEventLog>,
    abort: Option<&Error>,
    wall: f64,
) -> Result<RunSummary> {
    let Prepared { params, kernel, g, state0 } = prep;
    let last = traj.last().unwrap_or(state0);
    let m0 = momentum_sum(state0);
    let drift = traj
        .snapshots
        .iter()
        .map(|s| momentum_sum(s).iter().zip(&m0).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max))
        .fold(0.0, f64::max);
    let mut summary = RunSummary {
        status: match abort {
            None => "ok".into(),
            Some(Error::StepFloorHit { .. }) => "step_floor_hit".into(),
            Some(_) => "aborted".into(),
        },
        error: abort.map(|e| e.to_string()),
        kernel: kernel.to_string(),
        gctrl: g.to_string(),
        n_agents: params.n_agents,
        dim: params.dim,
        kappa: params.kappa,
        t_start: state0.t,
        t_final: last.t,
        snapshots: traj.snapshots.len(),
        snapshots_written: stride_indices(traj.snapshots.len(), cfg.output.stride).len(),
        final_dispersion: dispersions(last, None)?,
        min_gap: min_gap_trace(traj).iter().map(|x| x.1).fold(f64::INFINITY, f64::min),
        momentum_drift: drift,
        certificates: Vec::new(),
        flocking: None,
        flocking_error: None,
        bicluster: None,
        event_counts: BTreeMap::new(),
        events: traj.events.clone(),
        sticking_times: line_log.map(|l| l.sticking_times.clone()).unwrap_or_default(),
        wall_time_s: wall,
    };
    for e in &traj.events {
        *summary.event_counts.entry(format!("{:?}", e.kind)).or_insert(0) += 1;
    }
    let mut analyses = cfg.analyses.clone();
    analyses.sort();
    analyses.dedup();
    for a in analyses {
        match a {
            Analysis::FlockingCertificate => {
                summary.certificates.push(flocking_certificate(state0, kernel, g, params.kappa)?)
            }
            Analysis::CollisionCertificate => {
                summary.certificates.push(collision_certificate(state0, kernel, g, params.kappa)?)
            }
            Analysis::Regularity => {
                if kernel.classify() == KernelClass::TypeII {
                    let gb = g.bounds(max_speed(state0))?;
                    let alpha = kernel.alpha().expect("power kernel");
                    summary.certificates.push(regularity_certificate(params.n_agents, alpha, &gb)?);
                }
            }
            Analysis::DetectFlocking => match detect_flocking_with(traj, &cfg.flocking) {
                Ok(v) => summary.flocking = Some(v),
                Err(e) => summary.flocking_error = Some(e.to_string()),
            },
            Analysis::DetectBicluster => summary.bicluster = detect_bicluster(traj),
        }
    }
    Ok(summary)
}

/// Analytic certificates for a configuration, without simulating.
#[derive(Debug, Clone, Serialize)]
pub struct CertifyReport {
    pub kernel: String,
    pub kernel_class: KernelClass,
    pub gctrl: String,
    pub bounds: GBounds,
    pub flocking: Certificate,
    pub collision: Certificate,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub regularity: Option<Certificate>,
    /// `(D₁, D₂)` for weakly singular kernels.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub sticking_rate_bounds: Option<(f64, f64)>,
}

pub fn certify(cfg: &RunConfig) -> Result<CertifyReport> {
    let prep = cfg.prepare()?;
    let Prepared { params, kernel, g, state0 } = &prep;
    let gb = g.bounds(max_speed(state0))?;
    let (regularity, rates) = match (kernel.classify(), kernel.alpha()) {
        (KernelClass::TypeII, Some(alpha)) => (
            Some(regularity_certificate(params.n_agents, alpha, &gb)?),
            Some(sticking_rate_bounds(params.kappa, alpha, params.n_agents, &gb)?),
        ),
        _ => (None, None),
    };
    Ok(CertifyReport {
        kernel: kernel.to_string(),
        kernel_class: kernel.classify(),
        gctrl: g.to_string(),
        bounds: gb,
        flocking: flocking_certificate(state0, kernel, g, params.kappa)?,
        collision: collision_certificate(state0, kernel, g, params.kappa)?,
        regularity,
        sticking_rate_bounds: rates,
    })
}

/// Event counts in a fixed order, for tables.
pub fn count_events(events: &[EventRecord]) -> [usize; 5] {
    let kinds = [
        EventKind::GapMinimum,
        EventKind::GapBelowThreshold,
        EventKind::StepFloorHit,
        EventKind::Collision,
        EventKind::StickStart,
    ];
    kinds.map(|k| events.iter().filter(|e| e.kind == k).count())
}
