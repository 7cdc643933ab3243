//! Run configuration files.
//!
//! Configurations are TOML documents:
//!
//! ```toml
//! n_agents = 2
//! dim = 1
//! kappa = 1.0
//! kernel = "power:alpha=0.5"      # power:alpha=, rational:beta=, classic:beta=, exp:lambda=
//! gctrl = "identity"              # identity, relativistic:c=, tanh:eps=
//! analyses = ["flocking_certificate", "detect_flocking"]
//!
//! [initial]
//! q = [1.0, 0.0]                  # flat row-major or one array per agent
//! p = [-1.0, 1.0]
//!
//! [integrator]
//! t_end = 3.0
//! rel_tol = 1e-10
//!
//! [output]
//! dir = "out"                     # relative to the config file
//! stride = 1
//! ```
//!
//! Generated initial data replaces `q`/`p` with `generator = "uniform"` or
//! `generator = "two_cluster"` plus a mandatory `seed`. A `[sweep]` table
//! lists up to three parameters to vary (see [`super::sweep`]).

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::diagnostics::FlockingOptions;
use crate::error::{Error, Result};
use crate::gctrl::VelocityControl;
use crate::integrator::IntegratorConfig;
use crate::kernel::{parse_spec, Kernel, KernelClass};
use crate::model::{Params, State};

use super::scenario;

/// Flat or per-agent nested numeric array.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum Array {
    Flat(Vec<f64>),
    Nested(Vec<Vec<f64>>),
}

impl Array {
    fn flatten(&self, n: usize, d: usize, what: &str) -> Result<Vec<f64>> {
        let flat = match self {
            Self::Flat(v) => v.clone(),
            Self::Nested(rows) => {
                if rows.iter().any(|r| r.len() != d) {
                    return Err(Error::Config(format!("every row of {what} needs {d} entries")));
                }
                rows.concat()
            }
        };
        if flat.len() != n * d {
            return Err(Error::Config(format!("{what} needs {} entries, got {}", n * d, flat.len())));
        }
        Ok(flat)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Generator {
    /// Positions uniform in `[-box, box]^d`, momenta uniform in `[-p_scale, p_scale]^d`.
    Uniform,
    /// Two groups around `0` and `separation·e₁` with mean momenta `∓momentum·e₁`.
    TwoCluster,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct InitialSpec {
    pub q: Option<Array>,
    pub p: Option<Array>,
    pub generator: Option<Generator>,
    pub seed: Option<u64>,
    #[serde(rename = "box", default = "one")]
    pub box_size: f64,
    #[serde(default = "one")]
    pub p_scale: f64,
    /// Minimum initial pairwise distance enforced by rejection sampling.
    pub min_separation: Option<f64>,
    #[serde(default = "ten")]
    pub separation: f64,
    #[serde(default = "half")]
    pub spread: f64,
    #[serde(default = "one")]
    pub momentum: f64,
    #[serde(default = "tenth")]
    pub noise: f64,
}

fn one() -> f64 {
    1.0
}
fn ten() -> f64 {
    10.0
}
fn half() -> f64 {
    0.5
}
fn tenth() -> f64 {
    0.1
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct OutputSpec {
    /// Output directory; relative paths are resolved against the config file.
    pub dir: Option<PathBuf>,
    /// Keep every `stride`-th snapshot (first and last are always kept).
    pub stride: usize,
}

impl Default for OutputSpec {
    fn default() -> Self {
        Self { dir: None, stride: 1 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Analysis {
    FlockingCertificate,
    CollisionCertificate,
    Regularity,
    DetectFlocking,
    DetectBicluster,
}

impl Analysis {
    pub const ALL: [Analysis; 5] = [
        Analysis::FlockingCertificate,
        Analysis::CollisionCertificate,
        Analysis::Regularity,
        Analysis::DetectFlocking,
        Analysis::DetectBicluster,
    ];
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepSpec {
    /// Parameter name → values. Names: `kappa`, `n_agents`, `dim`, `seed`,
    /// `t_end`, `kernel.<key>`, `gctrl.<key>`, `initial.<field>`.
    pub params: BTreeMap<String, Vec<f64>>,
    #[serde(default = "default_max_runs")]
    pub max_runs: usize,
}

fn default_max_runs() -> usize {
    1000
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub n_agents: usize,
    pub dim: usize,
    pub kappa: f64,
    pub kernel: String,
    #[serde(default = "identity")]
    pub gctrl: String,
    pub initial: InitialSpec,
    #[serde(default)]
    pub integrator: IntegratorConfig,
    #[serde(default)]
    pub output: OutputSpec,
    #[serde(default = "all_analyses")]
    pub analyses: Vec<Analysis>,
    #[serde(default)]
    pub flocking: FlockingOptions,
    pub sweep: Option<SweepSpec>,
    /// Directory of the file the config came from.
    #[serde(skip)]
    pub base_dir: Option<PathBuf>,
}

fn identity() -> String {
    "identity".into()
}

fn all_analyses() -> Vec<Analysis> {
    Analysis::ALL.to_vec()
}

/// Everything needed to start a run.
#[derive(Debug, Clone)]
pub struct Prepared {
    pub params: Params,
    pub kernel: Kernel,
    pub g: VelocityControl,
    pub state0: State,
}

impl RunConfig {
    pub fn from_toml(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| Error::Config(e.to_string()))
    }

    pub fn from_path(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::Config(format!("{}: {e}", path.display())))?;
        let mut cfg = Self::from_toml(&text)?;
        cfg.base_dir = Some(path.parent().map(Path::to_path_buf).unwrap_or_default());
        if cfg.output.dir.is_none() {
            let stem = path.file_stem().and_then(|s| s.to_str()).unwrap_or("run");
            cfg.output.dir = Some(PathBuf::from(format!("{stem}_out")));
        }
        Ok(cfg)
    }

    pub fn to_toml(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| Error::Config(e.to_string()))
    }

    /// Output directory with relative paths resolved against the config location.
    pub fn output_dir(&self) -> PathBuf {
        let dir = self.output.dir.clone().unwrap_or_else(|| PathBuf::from("run_out"));
        match &self.base_dir {
            Some(base) if dir.is_relative() => base.join(dir),
            _ => dir,
        }
    }

    /// Validates the configuration and builds the initial state.
    pub fn prepare(&self) -> Result<Prepared> {
        let params = Params::new(self.n_agents, self.dim, self.kappa)?;
        let kernel: Kernel = self.kernel.parse()?;
        let g: VelocityControl = self.gctrl.parse()?;
        self.integrator.validate()?;
        if self.output.stride == 0 {
            return Err(Error::Config("output.stride must be at least 1".into()));
        }
        if kernel.classify() == KernelClass::TypeII && self.dim >= 2 {
            return Err(Error::OutOfScope("weak solutions in d≥2".into()));
        }
        let state0 = self.initial_state()?;
        if kernel.is_singular() && crate::model::min_pairwise_gap(state0.n, state0.d, &state0.q).0 == 0.0 {
            return Err(Error::Config("singular kernels need pairwise distinct initial positions".into()));
        }
        if !(self.integrator.t_end > state0.t) {
            return Err(Error::Config("integrator.t_end must be positive".into()));
        }
        Ok(Prepared { params, kernel, g, state0 })
    }

    fn initial_state(&self) -> Result<State> {
        let (n, d) = (self.n_agents, self.dim);
        let init = &self.initial;
        let (q, p) = match (&init.q, &init.p, init.generator) {
            (Some(q), Some(p), None) => (q.flatten(n, d, "initial.q")?, p.flatten(n, d, "initial.p")?),
            (None, None, Some(gen)) => {
                let seed = init.seed.ok_or_else(|| Error::Config("generated initial data needs a seed".into()))?;
                match gen {
                    Generator::Uniform => {
                        scenario::uniform_box(n, d, init.box_size, init.p_scale, init.min_separation, seed)?
                    }
                    Generator::TwoCluster => {
                        scenario::two_cluster(n, d, init.separation, init.spread, init.momentum, init.noise, seed)?
                    }
                }
            }
            (None, None, None) => return Err(Error::Config("initial needs q and p or a generator".into())),
            _ => return Err(Error::Config("initial takes either both q and p, or a generator".into())),
        };
        State::new(0.0, n, d, q, p).map_err(|e| Error::Config(e.to_string()))
    }

    /// Sets one sweepable parameter.
    pub fn with_override(&self, key: &str, value: f64) -> Result<Self> {
        let mut c = self.clone();
        let as_count = |v: f64| -> Result<usize> {
            if v >= 1.0 && v.fract() == 0.0 {
                Ok(v as usize)
            } else {
                Err(Error::Config(format!("{key} must be a positive integer, got {v}")))
            }
        };
        match key {
            "kappa" => c.kappa = value,
            "n_agents" => c.n_agents = as_count(value)?,
            "dim" => c.dim = as_count(value)?,
            "t_end" => c.integrator.t_end = value,
            "seed" => {
                if value < 0.0 || value.fract() != 0.0 {
                    return Err(Error::Config(format!("seed must be a nonnegative integer, got {value}")));
                }
                c.initial.seed = Some(value as u64)
            }
            _ => {
                if let Some(k) = key.strip_prefix("kernel.") {
                    c.kernel = replace_param(&c.kernel, k, value)?;
                } else if let Some(k) = key.strip_prefix("gctrl.") {
                    c.gctrl = replace_param(&c.gctrl, k, value)?;
                } else if let Some(k) = key.strip_prefix("initial.") {
                    match k {
                        "box" => c.initial.box_size = value,
                        "p_scale" => c.initial.p_scale = value,
                        "separation" => c.initial.separation = value,
                        "spread" => c.initial.spread = value,
                        "momentum" => c.initial.momentum = value,
                        "noise" => c.initial.noise = value,
                        "min_separation" => c.initial.min_separation = Some(value),
                        _ => return Err(Error::Config(format!("unknown sweep parameter {key:?}"))),
                    }
                } else {
                    return Err(Error::Config(format!("unknown sweep parameter {key:?}")));
                }
            }
        }
        Ok(c)
    }
}

/// Replaces (or adds) one `key=value` in a spec string.
fn replace_param(spec: &str, key: &str, value: f64) -> Result<String> {
    let (name, mut params) = parse_spec(spec).map_err(Error::Config)?;
    match params.iter_mut().find(|(k, _)| k == key) {
        Some(slot) => slot.1 = value,
        None => return Err(Error::Config(format!("{spec:?} has no parameter {key:?}"))),
    }
    let body: Vec<String> = params.iter().map(|(k, v)| format!("{k}={v}")).collect();
    Ok(format!("{name}:{}", body.join(",")))
}
