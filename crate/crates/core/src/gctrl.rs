//! Radial velocity control maps `G(p) = g(|p|) p/|p|`.
//!
//! `g` is C¹, vanishes at 0, has a positive derivative on compact sets and is
//! either convex or concave on ℝ₊. Spec strings: `identity`,
//! `relativistic:c=<c>`, `tanh:eps=<ε>`.

use std::fmt;
use std::str::FromStr;
use std::sync::Arc;

use serde::Serialize;

use crate::error::{Error, Result};
use crate::kernel::{parse_spec, single_param};
use crate::stats::golden_max;

/// Below this modulus `g(r)/r` is replaced by `g'(0)`.
const SERIES_RADIUS: f64 = 1e-12;

/// Stopping tolerance for the relativistic inversion.
const ROOT_TOL: f64 = 1e-12;

/// Declared curvature of a custom radial profile.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum Curvature {
    Convex,
    Concave,
}

pub type ScalarFn = Arc<dyn Fn(f64) -> f64 + Send + Sync>;

#[derive(Clone)]
pub enum VelocityControl {
    Identity,
    /// `g` is the inverse of `v ↦ Γ(1 + Γ/c²) v`, `Γ = (1 − v²/c²)^-1/2`.
    Relativistic { c: f64 },
    /// `g(v) = tanh(v/ε)`.
    SaturatingTanh { eps: f64 },
    CustomRadial {
        g: ScalarFn,
        g_prime: ScalarFn,
        shape: Curvature,
    },
}

/// Derivative bounds of `g` on `[0, P⁰_M]`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct GBounds {
    pub p0_max: f64,
    /// `min g'` on `[0, P⁰_M]`.
    pub m_gprime: f64,
    /// `max g'` on `[0, P⁰_M]`.
    #[serde(rename = "M_gprime")]
    pub big_m_gprime: f64,
    /// `min{m, m²/M}`, the monotonicity constant of `G` on the ball.
    #[serde(rename = "M_script")]
    pub script_m: f64,
}

impl GBounds {
    pub fn new(p0_max: f64, m_gprime: f64, big_m_gprime: f64) -> Self {
        let script_m = m_gprime.min(m_gprime * m_gprime / big_m_gprime);
        Self { p0_max, m_gprime, big_m_gprime, script_m }
    }
}

impl fmt::Debug for VelocityControl {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Self::Identity => write!(f, "Identity"),
            Self::Relativistic { c } => write!(f, "Relativistic {{ c: {c} }}"),
            Self::SaturatingTanh { eps } => write!(f, "SaturatingTanh {{ eps: {eps} }}"),
            Self::CustomRadial { shape, .. } => write!(f, "CustomRadial {{ shape: {shape:?} }}"),
        }
    }
}

impl fmt::Display for VelocityControl {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Self::Identity => write!(f, "identity"),
            Self::Relativistic { c } => write!(f, "relativistic:c={c}"),
            Self::SaturatingTanh { eps } => write!(f, "tanh:eps={eps}"),
            Self::CustomRadial { shape, .. } => write!(f, "custom:{shape:?}"),
        }
    }
}

impl VelocityControl {
    pub fn relativistic(c: f64) -> Result<Self> {
        if !(c.is_finite() && c > 0.0) {
            return Err(Error::InvalidControl(format!("relativistic speed ceiling must be positive, got {c}")));
        }
        Ok(Self::Relativistic { c })
    }

    pub fn tanh(eps: f64) -> Result<Self> {
        if !(eps.is_finite() && eps > 0.0) {
            return Err(Error::InvalidControl(format!("tanh scale must be positive, got {eps}")));
        }
        Ok(Self::SaturatingTanh { eps })
    }

    /// Custom profile, sample-checked for `g(0) = 0`, `g' > 0` and the declared curvature.
    pub fn custom<G, D>(g: G, g_prime: D, shape: Curvature) -> Result<Self>
    where
        G: Fn(f64) -> f64 + Send + Sync + 'static,
        D: Fn(f64) -> f64 + Send + Sync + 'static,
    {
        if g(0.0).abs() > 1e-12 {
            return Err(Error::InvalidControl(format!("g(0) must vanish, got {}", g(0.0))));
        }
        let mut grid: Vec<f64> = (0..=1000).map(|k| k as f64 * 0.01).collect();
        grid.extend((1..=200).map(|k| 10f64.powf(1.0 + 2.0 * k as f64 / 200.0)));
        let mut prev: Option<f64> = None;
        for &s in &grid {
            let d = g_prime(s);
            if !(d.is_finite() && d > 0.0) {
                return Err(Error::InvalidControl(format!("g'({s}) = {d} is not positive")));
            }
            if let Some(d0) = prev {
                let slack = 1e-12 * d0.abs().max(d.abs());
                let bad = match shape {
                    Curvature::Convex => d < d0 - slack,
                    Curvature::Concave => d > d0 + slack,
                };
                if bad {
                    return Err(Error::InvalidControl(format!(
                        "g' is not monotone as declared ({shape:?}) near s = {s}"
                    )));
                }
            }
            prev = Some(d);
        }
        Ok(Self::CustomRadial { g: Arc::new(g), g_prime: Arc::new(g_prime), shape })
    }

    pub fn curvature(&self) -> Curvature {
        match self {
            Self::Identity => Curvature::Convex,
            Self::Relativistic { .. } | Self::SaturatingTanh { .. } => Curvature::Concave,
            Self::CustomRadial { shape, .. } => *shape,
        }
    }

    /// Proper velocity `u = Γv/c` solving `c·u·(1 + √(1+u²)/c²) = s`.
    fn relativistic_u(c: f64, s: f64) -> f64 {
        let h = |u: f64| c * u + u * (1.0 + u * u).sqrt() / c;
        let dh = |u: f64| {
            let w = (1.0 + u * u).sqrt();
            c + (1.0 + 2.0 * u * u) / (c * w)
        };
        // h is convex with h(0) = 0, so the tangent at 0 over-estimates the root
        // and Newton decreases monotonically from there.
        let mut u = s / dh(0.0);
        for _ in 0..200 {
            let step = (h(u) - s) / dh(u);
            u -= step;
            if step.abs() <= ROOT_TOL * u.abs() || u == 0.0 {
                break;
            }
        }
        u.max(0.0)
    }

    /// Radial profile `g(s)`, `s ≥ 0`.
    pub fn g(&self, s: f64) -> f64 {
        match self {
            Self::Identity => s,
            Self::SaturatingTanh { eps } => (s / eps).tanh(),
            Self::Relativistic { c } => {
                let u = Self::relativistic_u(*c, s);
                c * u / (1.0 + u * u).sqrt()
            }
            Self::CustomRadial { g, .. } => g(s),
        }
    }

    /// Derivative `g'(s)`, `s ≥ 0`.
    pub fn g_prime(&self, s: f64) -> f64 {
        match self {
            Self::Identity => 1.0,
            Self::SaturatingTanh { eps } => {
                let t = (s / eps).tanh();
                (1.0 - t * t) / eps
            }
            Self::Relativistic { c } => {
                let u = Self::relativistic_u(*c, s);
                let w = (1.0 + u * u).sqrt();
                let dv_du = c / (w * w * w);
                let dh_du = c + (1.0 + 2.0 * u * u) / (c * w);
                dv_du / dh_du
            }
            Self::CustomRadial { g_prime, .. } => g_prime(s),
        }
    }

    /// `g(s)/s`, continued by `g'(0)` at the origin.
    #[inline]
    pub fn ratio(&self, s: f64) -> f64 {
        match self {
            Self::Identity => 1.0,
            _ if s < SERIES_RADIUS => self.g_prime(0.0),
            _ => self.g(s) / s,
        }
    }

    /// `G(p)` written into `out`.
    #[inline]
    pub fn apply_into(&self, p: &[f64], out: &mut [f64]) {
        if let Self::Identity = self {
            out.copy_from_slice(p);
            return;
        }
        let r = p.iter().map(|x| x * x).sum::<f64>().sqrt();
        if r == 0.0 {
            out.iter_mut().for_each(|o| *o = 0.0);
            return;
        }
        let k = self.ratio(r);
        for (o, x) in out.iter_mut().zip(p) {
            *o = k * x;
        }
    }

    pub fn apply(&self, p: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; p.len()];
        self.apply_into(p, &mut out);
        out
    }

    /// `G` on the real line: `g(|p|) sgn(p)`.
    #[inline]
    pub fn apply_scalar(&self, p: f64) -> f64 {
        match self {
            Self::Identity => p,
            _ if p == 0.0 => 0.0,
            _ => self.g(p.abs()).copysign(p),
        }
    }

    /// Eigenvalues of the Jacobian of `G` at `p`: the transverse value `g(|p|)/|p|`
    /// and the radial value `g'(|p|)`.
    pub fn jacobian_eigs(&self, p: &[f64]) -> (f64, f64) {
        let r = p.iter().map(|x| x * x).sum::<f64>().sqrt();
        if r == 0.0 {
            let d = self.g_prime(0.0);
            return (d, d);
        }
        (self.ratio(r), self.g_prime(r))
    }

    /// `m_{G'}`, `M_{G'}` and `𝓜` on the ball of radius `p0_max`.
    pub fn bounds(&self, p0_max: f64) -> Result<GBounds> {
        if !(p0_max >= 0.0) || !p0_max.is_finite() {
            return Err(Error::Domain(format!("p0_max must be finite and nonnegative, got {p0_max}")));
        }
        let (lo, hi) = match self {
            Self::Identity => (1.0, 1.0),
            Self::Relativistic { .. } | Self::SaturatingTanh { .. } => (self.g_prime(p0_max), self.g_prime(0.0)),
            Self::CustomRadial { .. } => self.grid_extrema(p0_max),
        };
        Ok(GBounds::new(p0_max, lo, hi))
    }

    fn grid_extrema(&self, p0_max: f64) -> (f64, f64) {
        if p0_max == 0.0 {
            let d = self.g_prime(0.0);
            return (d, d);
        }
        const N: usize = 1000;
        let h = p0_max / N as f64;
        let samples: Vec<(f64, f64)> = (0..=N).map(|k| (k as f64 * h, self.g_prime(k as f64 * h))).collect();
        let refine = |sign: f64| {
            let (k, _) = samples
                .iter()
                .enumerate()
                .max_by(|a, b| (sign * a.1 .1).total_cmp(&(sign * b.1 .1)))
                .expect("non-empty grid");
            let a = (samples[k].0 - h).max(0.0);
            let b = (samples[k].0 + h).min(p0_max);
            let (_, v) = golden_max(|s| sign * self.g_prime(s), a, b, 60);
            sign * v.max(sign * samples[k].1)
        };
        (refine(-1.0), refine(1.0))
    }
}

impl FromStr for VelocityControl {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let (name, params) = parse_spec(s).map_err(Error::InvalidControl)?;
        let get = |key: &str| single_param(&name, &params, key).map_err(Error::InvalidControl);
        match name.as_str() {
            "identity" if params.is_empty() => Ok(Self::Identity),
            "identity" => Err(Error::InvalidControl("identity takes no parameters".into())),
            "relativistic" => Self::relativistic(get("c")?),
            "tanh" => Self::tanh(get("eps")?),
            other => Err(Error::InvalidControl(format!("unknown velocity control {other:?}"))),
        }
    }
}
