//! Output files: `trajectory.jsonl`, `summary.json`, `plot.csv`.
//!
//! Every float is written with 17 significant digits so values read back
//! bit-identically; non-finite values are the strings `"inf"`, `"-inf"`, `"nan"`.

use std::fs::{self, File};
use std::io::{self, BufRead, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use serde_json::ser::{CompactFormatter, Formatter, PrettyFormatter};

use crate::diagnostics::{dispersions, lyapunov_series};
use crate::error::{Error, Result};
use crate::model::{min_pairwise_gap, State, Trajectory};

use super::config::Prepared;
use super::run::{stride_indices, RunOutput, RunSummary};

pub const TRAJECTORY_FILE: &str = "trajectory.jsonl";
pub const SUMMARY_FILE: &str = "summary.json";
pub const PLOT_FILE: &str = "plot.csv";

/// `{:.16e}`, i.e. 17 significant digits.
pub fn fmt_f64(x: f64) -> String {
    if x.is_finite() {
        format!("{x:.16e}")
    } else {
        crate::fnum::spelling(x).to_string()
    }
}

/// Wraps a JSON formatter so floats get 17 significant digits.
struct Sig17<F>(F);

impl<F: Formatter> Formatter for Sig17<F> {
    fn write_f64<W: ?Sized + Write>(&mut self, w: &mut W, v: f64) -> io::Result<()> {
        w.write_all(format!("{v:.16e}").as_bytes())
    }
    fn write_f32<W: ?Sized + Write>(&mut self, w: &mut W, v: f32) -> io::Result<()> {
        self.write_f64(w, v as f64)
    }
    fn begin_array<W: ?Sized + Write>(&mut self, w: &mut W) -> io::Result<()> {
        self.0.begin_array(w)
    }
    fn end_array<W: ?Sized + Write>(&mut self, w: &mut W) -> io::Result<()> {
        self.0.end_array(w)
    }
    fn begin_array_value<W: ?Sized + Write>(&mut self, w: &mut W, first: bool) -> io::Result<()> {
        self.0.begin_array_value(w, first)
    }
    fn end_array_value<W: ?Sized + Write>(&mut self, w: &mut W) -> io::Result<()> {
        self.0.end_array_value(w)
    }
    fn begin_object<W: ?Sized + Write>(&mut self, w: &mut W) -> io::Result<()> {
        self.0.begin_object(w)
    }
    fn end_object<W: ?Sized + Write>(&mut self, w: &mut W) -> io::Result<()> {
        self.0.end_object(w)
    }
    fn begin_object_key<W: ?Sized + Write>(&mut self, w: &mut W, first: bool) -> io::Result<()> {
        self.0.begin_object_key(w, first)
    }
    fn end_object_key<W: ?Sized + Write>(&mut self, w: &mut W) -> io::Result<()> {
        self.0.end_object_key(w)
    }
    fn begin_object_value<W: ?Sized + Write>(&mut self, w: &mut W) -> io::Result<()> {
        self.0.begin_object_value(w)
    }
    fn end_object_value<W: ?Sized + Write>(&mut self, w: &mut W) -> io::Result<()> {
        self.0.end_object_value(w)
    }
}

fn json_err(e: serde_json::Error) -> Error {
    Error::Io(e.to_string())
}

/// Compact JSON with 17-digit floats.
pub fn to_json_line<T: Serialize>(value: &T) -> Result<String> {
    let mut buf = Vec::new();
    let mut ser = serde_json::Serializer::with_formatter(&mut buf, Sig17(CompactFormatter));
    value.serialize(&mut ser).map_err(json_err)?;
    Ok(String::from_utf8(buf).expect("json is utf-8"))
}

/// Indented JSON with 17-digit floats.
pub fn to_json_pretty<T: Serialize>(value: &T) -> Result<String> {
    let mut buf = Vec::new();
    let mut ser = serde_json::Serializer::with_formatter(&mut buf, Sig17(PrettyFormatter::new()));
    value.serialize(&mut ser).map_err(json_err)?;
    Ok(String::from_utf8(buf).expect("json is utf-8"))
}

/// One line of `trajectory.jsonl`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SnapshotRecord {
    pub t: f64,
    /// Positions, one array per agent.
    pub q: Vec<Vec<f64>>,
    pub p: Vec<Vec<f64>>,
    #[serde(with = "crate::fnum")]
    pub min_gap: f64,
    pub d_p: f64,
    pub d_q: f64,
    #[serde(with = "crate::fnum")]
    pub lyapunov: f64,
}

impl SnapshotRecord {
    pub fn new(state: &State, lyapunov: f64) -> Result<Self> {
        let rep = dispersions(state, None)?;
        let per_agent = |x: &[f64]| x.chunks(state.d).map(<[f64]>::to_vec).collect();
        let min_gap = if state.n < 2 { f64::INFINITY } else { min_pairwise_gap(state.n, state.d, &state.q).0 };
        Ok(Self {
            t: state.t,
            q: per_agent(&state.q),
            p: per_agent(&state.p),
            min_gap,
            d_p: rep.d_p,
            d_q: rep.d_q,
            lyapunov,
        })
    }

    pub fn to_state(&self) -> Result<State> {
        let n = self.q.len();
        let d = self.q.first().map_or(0, Vec::len);
        State::new(self.t, n, d, self.q.concat(), self.p.concat())
    }
}

/// Snapshot records for the strided trajectory.
pub fn snapshot_records(out: &RunOutput, prep: &Prepared, stride: usize) -> Result<Vec<SnapshotRecord>> {
    let traj = &out.trajectory;
    let lyap = lyapunov_series(traj, &prep.kernel, &prep.g, prep.params.kappa)
        .unwrap_or_else(|_| vec![f64::NAN; traj.snapshots.len()]);
    stride_indices(traj.snapshots.len(), stride)
        .into_iter()
        .map(|i| SnapshotRecord::new(&traj.snapshots[i], lyap[i]))
        .collect()
}

/// Writes the three output files into `dir` and returns their paths.
pub fn write_run(out: &RunOutput, prep: &Prepared, stride: usize, dir: &Path) -> Result<Vec<PathBuf>> {
    fs::create_dir_all(dir)?;
    let records = snapshot_records(out, prep, stride)?;

    let traj_path = dir.join(TRAJECTORY_FILE);
    let mut w = BufWriter::new(File::create(&traj_path)?);
    for r in &records {
        writeln!(w, "{}", to_json_line(r)?)?;
    }
    w.flush()?;

    let summary_path = dir.join(SUMMARY_FILE);
    fs::write(&summary_path, to_json_pretty(&out.summary)? + "\n")?;

    let plot_path = dir.join(PLOT_FILE);
    write_plot_csv(&records, File::create(&plot_path)?)?;
    Ok(vec![traj_path, summary_path, plot_path])
}

fn csv_err(e: csv::Error) -> Error {
    Error::Io(e.to_string())
}

/// `t,d_p,d_q,min_gap,lyapunov` per snapshot.
pub fn write_plot_csv<W: Write>(records: &[SnapshotRecord], w: W) -> Result<()> {
    let mut csv = csv::Writer::from_writer(w);
    csv.write_record(["t", "d_p", "d_q", "min_gap", "lyapunov"]).map_err(csv_err)?;
    for r in records {
        csv.write_record([r.t, r.d_p, r.d_q, r.min_gap, r.lyapunov].map(fmt_f64)).map_err(csv_err)?;
    }
    csv.flush()?;
    Ok(())
}

pub fn read_snapshots(path: &Path) -> Result<Vec<SnapshotRecord>> {
    let reader = BufReader::new(File::open(path)?);
    let mut out = Vec::new();
    for (k, line) in reader.lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let rec: SnapshotRecord = serde_json::from_str(&line)
            .map_err(|e| Error::Io(format!("{}:{}: {e}", path.display(), k + 1)))?;
        out.push(rec);
    }
    Ok(out)
}

/// Loads `trajectory.jsonl`; events come from the summary if one is given.
pub fn read_trajectory(path: &Path, summary: Option<&RunSummary>) -> Result<Trajectory> {
    let snapshots = read_snapshots(path)?.iter().map(SnapshotRecord::to_state).collect::<Result<Vec<_>>>()?;
    let events = summary.map(|s| s.events.clone()).unwrap_or_default();
    Ok(Trajectory { snapshots, events })
}

pub fn read_summary(path: &Path) -> Result<RunSummary> {
    let text = fs::read_to_string(path)?;
    serde_json::from_str(&text).map_err(|e| Error::Io(format!("{}: {e}", path.display())))
}
