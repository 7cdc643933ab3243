use std::fs::File;
use std::io::{self, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use csflock_core::exp::io::{read_summary, read_trajectory, to_json_pretty, write_run, SUMMARY_FILE};
use csflock_core::exp::{certify, execute, exit_code, run_sweep, write_sweep_csv, RunConfig};
use csflock_core::line1d::{fit_sticking_exponent, sticking_samples};
use csflock_core::{Error, EventKind};
use serde_json::json;

#[derive(Parser)]
#[command(name = "csflock", version, about = "Cucker–Smale flocking with velocity control")]
struct Cli {
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Integrate a configuration and write trajectory.jsonl, summary.json and plot.csv.
    Simulate {
        config: PathBuf,
        /// Output directory (overrides `output.dir`).
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Print the analytic certificates for a configuration as JSON.
    Certify { config: PathBuf },
    /// Run the `[sweep]` grid of a configuration and write a CSV table.
    Sweep {
        config: PathBuf,
        /// CSV destination; stdout if omitted.
        #[arg(long)]
        out: Option<PathBuf>,
        #[arg(long, env = "CSFLOCK_WORKERS")]
        workers: Option<usize>,
    },
    /// Fit log gap against log(t* − t) before a sticking event.
    FitExponent {
        trajectory: PathBuf,
        /// Agent pair `i,j`.
        #[arg(long, value_parser = parse_pair)]
        pair: (usize, usize),
        /// summary.json holding the events; defaults to the one next to the trajectory.
        #[arg(long)]
        summary: Option<PathBuf>,
        #[arg(long, default_value_t = 1e-4)]
        eps_min: f64,
        #[arg(long, default_value_t = 1e-2)]
        eps_max: f64,
    },
}

fn parse_pair(s: &str) -> Result<(usize, usize), String> {
    let (a, b) = s.split_once(',').ok_or("expected i,j")?;
    let i = a.trim().parse().map_err(|e| format!("{e}"))?;
    let j = b.trim().parse().map_err(|e| format!("{e}"))?;
    if i == j {
        return Err("pair needs two different agents".into());
    }
    Ok((i, j))
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let code = match run(cli.cmd) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            exit_code(&e)
        }
    };
    ExitCode::from(code as u8)
}

/// Writes to stdout; a closed pipe (e.g. `| head`) is not an error.
fn emit(text: &str) -> Result<(), Error> {
    let mut out = io::stdout().lock();
    match out.write_all(text.as_bytes()).and_then(|_| out.flush()) {
        Err(e) if e.kind() != io::ErrorKind::BrokenPipe => Err(e.into()),
        _ => Ok(()),
    }
}

fn load(path: &Path) -> Result<RunConfig, Error> {
    RunConfig::from_path(path)
}

fn run(cmd: Cmd) -> Result<i32, Error> {
    match cmd {
        Cmd::Simulate { config, out } => {
            let cfg = load(&config)?;
            let prep = cfg.prepare()?;
            let result = execute(&cfg)?;
            let dir = out.unwrap_or_else(|| cfg.output_dir());
            let files = write_run(&result, &prep, cfg.output.stride, &dir)?;
            let s = &result.summary;
            let mut text = format!(
                "{}: t = {} .. {}, {} snapshots, min gap {:e}\n",
                s.status, s.t_start, s.t_final, s.snapshots_written, s.min_gap
            );
            for f in files {
                text += &format!("wrote {}\n", f.display());
            }
            emit(&text)?;
            match &result.abort {
                Some(e) => {
                    eprintln!("error: {e}");
                    Ok(exit_code(e))
                }
                None => Ok(0),
            }
        }
        Cmd::Certify { config } => {
            let report = certify(&load(&config)?)?;
            emit(&(to_json_pretty(&report)? + "\n"))?;
            Ok(0)
        }
        Cmd::Sweep { config, out, workers } => {
            let cfg = load(&config)?;
            let rows = run_sweep(&cfg, workers)?;
            match out {
                Some(path) => write_sweep_csv(&rows, File::create(path)?)?,
                None => {
                    let mut buf = Vec::new();
                    write_sweep_csv(&rows, &mut buf)?;
                    emit(&String::from_utf8_lossy(&buf))?;
                }
            }
            let failed = rows.iter().filter(|r| r.failed()).count();
            if failed > 0 {
                eprintln!("{failed} of {} runs failed", rows.len());
                return Ok(1);
            }
            Ok(0)
        }
        Cmd::FitExponent { trajectory, pair, summary, eps_min, eps_max } => {
            if !(0.0 < eps_min && eps_min < eps_max) {
                return Err(Error::Config("need 0 < eps-min < eps-max".into()));
            }
            let summary_path = summary.unwrap_or_else(|| {
                trajectory.parent().map(Path::to_path_buf).unwrap_or_default().join(SUMMARY_FILE)
            });
            let summary = read_summary(&summary_path)?;
            let traj = read_trajectory(&trajectory, Some(&summary))?;
            let (i, j) = pair;
            let event = traj
                .events
                .iter()
                .find(|e| e.kind == EventKind::StickStart && (e.pair == (i, j) || e.pair == (j, i)))
                .ok_or_else(|| Error::InsufficientData(format!("no sticking event for pair {i},{j}")))?;
            let (slope, intercept) = fit_sticking_exponent(&traj, event, (eps_min, eps_max))?;
            let samples = sticking_samples(&traj, event.time, i, j, (eps_min, eps_max)).0.len();
            let report = json!({
                "pair": [i, j],
                "t_star": event.time,
                "slope": slope,
                "intercept": intercept,
                "samples": samples,
                "eps_min": eps_min,
                "eps_max": eps_max,
            });
            emit(&(to_json_pretty(&report)? + "\n"))?;
            Ok(0)
        }
    }
}
