//! Cartesian parameter sweeps.

use std::collections::BTreeMap;
use std::io::Write;

use rayon::prelude::*;

use crate::error::{Error, Result};

use super::config::{Analysis, RunConfig};
use super::io::fmt_f64;
use super::run::{count_events, execute};

pub const MAX_SWEEP_PARAMS: usize = 3;

#[derive(Debug, Clone, PartialEq)]
pub struct SweepRow {
    pub params: Vec<(String, f64)>,
    /// `ok`, `step_floor_hit`, `aborted` or `error`.
    pub status: String,
    pub is_flocking: Option<bool>,
    pub rate: Option<f64>,
    pub min_gap: Option<f64>,
    pub event_counts: [usize; 5],
    pub error: Option<String>,
}

impl SweepRow {
    pub fn failed(&self) -> bool {
        self.status != "ok"
    }
}

/// Grid points in key order, last key varying fastest.
pub fn grid(cfg: &RunConfig) -> Result<Vec<Vec<(String, f64)>>> {
    let spec = cfg.sweep.as_ref().ok_or_else(|| Error::Config("no [sweep] section".into()))?;
    if spec.params.is_empty() || spec.params.values().any(Vec::is_empty) {
        return Err(Error::Config("sweep grid is empty".into()));
    }
    if spec.params.len() > MAX_SWEEP_PARAMS {
        return Err(Error::Config(format!("at most {MAX_SWEEP_PARAMS} sweep parameters")));
    }
    let total: usize = spec.params.values().map(Vec::len).product();
    if total > spec.max_runs {
        return Err(Error::Config(format!("sweep has {total} runs, max_runs is {}", spec.max_runs)));
    }
    let mut points: Vec<Vec<(String, f64)>> = vec![Vec::new()];
    for (key, values) in &spec.params {
        points = points
            .into_iter()
            .flat_map(|p| {
                values.iter().map(move |&v| {
                    let mut q = p.clone();
                    q.push((key.clone(), v));
                    q
                })
            })
            .collect();
    }
    // Surface bad keys before spending time on runs.
    for (key, v) in &points[0] {
        cfg.with_override(key, *v)?;
    }
    Ok(points)
}

fn run_point(base: &RunConfig, point: &[(String, f64)]) -> SweepRow {
    let mut row = SweepRow {
        params: point.to_vec(),
        status: "error".into(),
        is_flocking: None,
        rate: None,
        min_gap: None,
        event_counts: [0; 5],
        error: None,
    };
    let result = point
        .iter()
        .try_fold(base.clone(), |c, (k, v)| c.with_override(k, *v))
        .and_then(|c| execute(&c));
    match result {
        Ok(out) => {
            let s = out.summary;
            row.status = s.status;
            row.error = s.error.or(s.flocking_error);
            row.is_flocking = s.flocking.map(|f| f.is_flocking);
            row.rate = s.flocking.map(|f| f.rate);
            row.min_gap = Some(s.min_gap);
            row.event_counts = count_events(&s.events);
        }
        Err(e) => row.error = Some(e.to_string()),
    }
    row
}

/// Runs every grid point, in parallel on `workers` threads (rayon's default if `None`).
pub fn run_sweep(cfg: &RunConfig, workers: Option<usize>) -> Result<Vec<SweepRow>> {
    let points = grid(cfg)?;
    let mut base = cfg.clone();
    base.analyses = vec![Analysis::DetectFlocking];
    base.sweep = None;
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(workers.unwrap_or(0))
        .build()
        .map_err(|e| Error::Config(e.to_string()))?;
    Ok(pool.install(|| points.par_iter().map(|p| run_point(&base, p)).collect()))
}

const EVENT_COLUMNS: [&str; 5] =
    ["n_gap_minimum", "n_gap_below_threshold", "n_step_floor_hit", "n_collision", "n_stick_start"];

pub fn write_sweep_csv<W: Write>(rows: &[SweepRow], w: W) -> Result<()> {
    let mut csv = csv::Writer::from_writer(w);
    let err = |e: csv::Error| Error::Io(e.to_string());
    let keys: Vec<&str> = rows.first().map(|r| r.params.iter().map(|(k, _)| k.as_str()).collect()).unwrap_or_default();
    let mut header: Vec<&str> = keys.clone();
    header.extend(["status", "is_flocking", "rate", "min_gap"]);
    header.extend(EVENT_COLUMNS);
    header.push("error");
    csv.write_record(&header).map_err(err)?;
    let opt = |x: Option<f64>| x.map(fmt_f64).unwrap_or_default();
    for r in rows {
        let mut rec: Vec<String> = r.params.iter().map(|(_, v)| fmt_f64(*v)).collect();
        rec.push(r.status.clone());
        rec.push(r.is_flocking.map(|b| b.to_string()).unwrap_or_default());
        rec.push(opt(r.rate));
        rec.push(opt(r.min_gap));
        rec.extend(r.event_counts.iter().map(usize::to_string));
        rec.push(r.error.clone().unwrap_or_default());
        csv.write_record(&rec).map_err(err)?;
    }
    csv.flush()?;
    Ok(())
}

/// Counts of rows per status.
pub fn status_counts(rows: &[SweepRow]) -> BTreeMap<String, usize> {
    let mut m = BTreeMap::new();
    for r in rows {
        *m.entry(r.status.clone()).or_insert(0) += 1;
    }
    m
}

#[cfg(test)]
mod tests {
    use super::*;

    const BASE: &str = r#"
n_agents = 4
dim = 2
kappa = 1.0
kernel = "rational:beta=1"
[initial]
generator = "uniform"
seed = 1
[integrator]
t_end = 20.0
output_interval = 0.2
[sweep.params]
kappa = [0.5, 2.0]
seed = [1, 2, 3]
"#;

    #[test]
    fn grid_order() {
        let cfg = RunConfig::from_toml(BASE).unwrap();
        let g = grid(&cfg).unwrap();
        assert_eq!(g.len(), 6);
        assert_eq!(g[0], vec![("kappa".to_string(), 0.5), ("seed".to_string(), 1.0)]);
        assert_eq!(g[1], vec![("kappa".to_string(), 0.5), ("seed".to_string(), 2.0)]);
        assert_eq!(g[5], vec![("kappa".to_string(), 2.0), ("seed".to_string(), 3.0)]);
    }

    #[test]
    fn grid_rejects_bad_input() {
        let empty = BASE.replace("kappa = [0.5, 2.0]\nseed = [1, 2, 3]", "kappa = []");
        assert!(grid(&RunConfig::from_toml(&empty).unwrap()).is_err());
        let unknown = BASE.replace("seed = [1, 2, 3]", "bogus = [1]");
        assert!(grid(&RunConfig::from_toml(&unknown).unwrap()).is_err());
        let big = BASE.replace("[sweep.params]", "[sweep]\nmax_runs = 5\n[sweep.params]");
        assert!(grid(&RunConfig::from_toml(&big).unwrap()).is_err());
    }

    #[test]
    fn sweep_is_worker_independent() {
        let cfg = RunConfig::from_toml(BASE).unwrap();
        let a = run_sweep(&cfg, Some(1)).unwrap();
        let b = run_sweep(&cfg, Some(3)).unwrap();
        assert_eq!(a, b);
        assert!(a.iter().all(|r| !r.failed()));
        assert!(a[3..].iter().all(|r| r.is_flocking == Some(true)), "{a:?}");
        let mut buf = Vec::new();
        write_sweep_csv(&a, &mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert_eq!(text.lines().count(), 7);
        assert!(text.starts_with("kappa,seed,status,is_flocking"));
    }
}
