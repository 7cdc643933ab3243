//! Communication weights ψ.
//!
//! Three classes are distinguished by the behaviour at the origin:
//!
//! * type I: bounded, Lipschitz and nonincreasing (the [`RegularFamily`] kernels),
//! * type II: `ψ(r) = r^-α` with `0 < α < 1`, singular but integrable at 0,
//! * type III: `ψ(r) = r^-α` with `α ≥ 1`, not integrable at 0.
//!
//! Spec strings (used by run configurations):
//!
//! ```text
//! power:alpha=<α>      ψ(r) = r^-α
//! rational:beta=<β>    ψ(r) = (1 + r)^-β
//! classic:beta=<β>     ψ(r) = (1 + r²)^(-β/2)
//! exp:lambda=<λ>       ψ(r) = exp(-λ r)
//! ```

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::quad;

/// Relative tolerance of the quadrature fallback.
pub const QUAD_REL_TOL: f64 = 1e-10;

/// Number of points in the geometric validation grid for regular kernels.
const VALIDATION_POINTS: usize = 1000;

/// Closed-form regular (type I) kernel families.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum RegularFamily {
    /// `ψ(s) = (1 + s)^-β`, β > 0.
    Rational { beta: f64 },
    /// `ψ(s) = (1 + s²)^(-β/2)`, β > 0 (the original Cucker–Smale weight).
    Classic { beta: f64 },
    /// `ψ(s) = exp(-λ s)`, λ > 0.
    Exponential { lambda: f64 },
}

#[derive(Debug, Clone, Copy, PartialEq)]
enum Variant {
    Regular(RegularFamily),
    PowerLaw { alpha: f64 },
}

/// Regularity class of a kernel at the origin.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum KernelClass {
    TypeI,
    TypeII,
    TypeIII,
}

/// A validated communication weight.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Kernel {
    variant: Variant,
}

impl Kernel {
    /// Singular power law `r^-α`.
    pub fn power(alpha: f64) -> Result<Self> {
        if !(alpha.is_finite() && alpha > 0.0) {
            return Err(Error::InvalidKernel(format!("power law needs alpha > 0, got {alpha}")));
        }
        Ok(Self { variant: Variant::PowerLaw { alpha } })
    }

    /// Regular closed-form kernel; the type I axioms are checked on a sample grid.
    pub fn regular(family: RegularFamily) -> Result<Self> {
        let param = match family {
            RegularFamily::Rational { beta } | RegularFamily::Classic { beta } => beta,
            RegularFamily::Exponential { lambda } => lambda,
        };
        if !(param.is_finite() && param > 0.0) {
            return Err(Error::InvalidKernel(format!("{family:?}: parameter must be positive")));
        }
        let kernel = Self { variant: Variant::Regular(family) };
        kernel.validate_regular()?;
        Ok(kernel)
    }

    /// `ψ(s) = (1 + s)^-β`.
    pub fn rational(beta: f64) -> Result<Self> {
        Self::regular(RegularFamily::Rational { beta })
    }

    fn validate_regular(&self) -> Result<()> {
        let lip = self.lipschitz_tail(0.0);
        let mut grid = Vec::with_capacity(VALIDATION_POINTS + 1);
        grid.push(0.0);
        for k in 0..VALIDATION_POINTS {
            let e = -6.0 + 12.0 * k as f64 / (VALIDATION_POINTS - 1) as f64;
            grid.push(10f64.powf(e));
        }
        let mut prev: Option<(f64, f64)> = None;
        for &s in &grid {
            let v = self.psi(s)?;
            if !v.is_finite() || v < 0.0 {
                return Err(Error::InvalidKernel(format!("psi({s}) = {v} is not a finite nonnegative value")));
            }
            if let Some((s0, v0)) = prev {
                if v > v0 {
                    return Err(Error::InvalidKernel(format!("psi increases between {s0} and {s}")));
                }
                let slope = (v0 - v) / (s - s0);
                if slope > lip * (1.0 + 1e-9) + 1e-300 {
                    return Err(Error::InvalidKernel(format!(
                        "slope {slope} on [{s0}, {s}] exceeds Lipschitz bound {lip}"
                    )));
                }
            }
            prev = Some((s, v));
        }
        Ok(())
    }

    pub fn classify(&self) -> KernelClass {
        match self.variant {
            Variant::Regular(_) => KernelClass::TypeI,
            Variant::PowerLaw { alpha } if alpha < 1.0 => KernelClass::TypeII,
            Variant::PowerLaw { .. } => KernelClass::TypeIII,
        }
    }

    pub fn is_singular(&self) -> bool {
        matches!(self.variant, Variant::PowerLaw { .. })
    }

    /// Power-law exponent, if this is a singular kernel.
    pub fn alpha(&self) -> Option<f64> {
        match self.variant {
            Variant::PowerLaw { alpha } => Some(alpha),
            Variant::Regular(_) => None,
        }
    }

    pub fn family(&self) -> Option<RegularFamily> {
        match self.variant {
            Variant::Regular(f) => Some(f),
            Variant::PowerLaw { .. } => None,
        }
    }

    /// Weight at distance `r ≥ 0`. Regular kernels are extended to `r = 0` by continuity.
    #[inline]
    pub fn psi(&self, r: f64) -> Result<f64> {
        if r < 0.0 || r.is_nan() {
            return Err(Error::Domain(format!("kernel distance must be nonnegative, got {r}")));
        }
        Ok(match self.variant {
            Variant::PowerLaw { alpha } => {
                if r == 0.0 {
                    return Err(Error::SingularEvaluation);
                }
                if alpha == 1.0 {
                    1.0 / r
                } else {
                    r.powf(-alpha)
                }
            }
            Variant::Regular(RegularFamily::Rational { beta }) => (1.0 + r).powf(-beta),
            Variant::Regular(RegularFamily::Classic { beta }) => (1.0 + r * r).powf(-0.5 * beta),
            Variant::Regular(RegularFamily::Exponential { lambda }) => (-lambda * r).exp(),
        })
    }

    /// `Ψ(x) = ∫₀ˣ ψ(|r|) dr`, an odd increasing function.
    pub fn antiderivative(&self, x: f64) -> Result<f64> {
        if x == 0.0 {
            return Ok(0.0);
        }
        let s = x.abs();
        let v = match self.variant {
            Variant::PowerLaw { alpha } => {
                if alpha >= 1.0 {
                    return Err(Error::NonIntegrable { alpha });
                }
                s.powf(1.0 - alpha) / (1.0 - alpha)
            }
            Variant::Regular(RegularFamily::Rational { beta }) => {
                if beta == 1.0 {
                    s.ln_1p()
                } else {
                    (1.0 - (1.0 + s).powf(1.0 - beta)) / (beta - 1.0)
                }
            }
            Variant::Regular(RegularFamily::Exponential { lambda }) => -(-lambda * s).exp_m1() / lambda,
            Variant::Regular(RegularFamily::Classic { .. }) => {
                quad::adaptive_simpson(&|r| self.psi(r).unwrap_or(0.0), 0.0, s, QUAD_REL_TOL)
            }
        };
        Ok(v.copysign(x))
    }

    /// Signed `∫_a^b ψ(s) ds` for `a, b ≥ 0`; may be `±∞` for type III kernels touching 0.
    pub fn integral(&self, a: f64, b: f64) -> f64 {
        if a == b {
            return 0.0;
        }
        if b < a {
            return -self.integral(b, a);
        }
        match self.variant {
            Variant::PowerLaw { alpha } => {
                if a == 0.0 && alpha >= 1.0 {
                    f64::INFINITY
                } else if alpha == 1.0 {
                    (b / a).ln()
                } else {
                    (b.powf(1.0 - alpha) - a.powf(1.0 - alpha)) / (1.0 - alpha)
                }
            }
            Variant::Regular(RegularFamily::Classic { .. }) => {
                quad::adaptive_simpson(&|r| self.psi(r).unwrap_or(0.0), a, b, QUAD_REL_TOL)
            }
            Variant::Regular(_) => {
                // closed-form antiderivatives never fail for regular kernels
                self.antiderivative(b).unwrap_or(f64::NAN) - self.antiderivative(a).unwrap_or(f64::NAN)
            }
        }
    }

    /// `∫_a^∞ ψ(s) ds`, or `+∞` when the tail diverges.
    pub fn tail_integral(&self, a: f64) -> f64 {
        let a = a.max(0.0);
        match self.variant {
            Variant::PowerLaw { alpha } => {
                if alpha > 1.0 && a > 0.0 {
                    a.powf(1.0 - alpha) / (alpha - 1.0)
                } else {
                    f64::INFINITY
                }
            }
            Variant::Regular(RegularFamily::Rational { beta }) => {
                if beta > 1.0 {
                    (1.0 + a).powf(1.0 - beta) / (beta - 1.0)
                } else {
                    f64::INFINITY
                }
            }
            Variant::Regular(RegularFamily::Exponential { lambda }) => (-lambda * a).exp() / lambda,
            Variant::Regular(RegularFamily::Classic { beta }) => {
                if beta > 1.0 {
                    quad::tail(&|r| self.psi(r).unwrap_or(0.0), a, QUAD_REL_TOL)
                } else {
                    f64::INFINITY
                }
            }
        }
    }

    /// Upper bound of `|ψ(r) − ψ(s)| / |r − s|` over `r, s ≥ r0`.
    pub fn lipschitz_tail(&self, r0: f64) -> f64 {
        let r0 = r0.max(0.0);
        match self.variant {
            Variant::PowerLaw { alpha } => {
                if r0 == 0.0 {
                    f64::INFINITY
                } else {
                    alpha * r0.powf(-alpha - 1.0)
                }
            }
            Variant::Regular(RegularFamily::Rational { beta }) => beta * (1.0 + r0).powf(-beta - 1.0),
            Variant::Regular(RegularFamily::Exponential { lambda }) => lambda * (-lambda * r0).exp(),
            Variant::Regular(RegularFamily::Classic { beta }) => {
                // |ψ'| = β s (1+s²)^(-β/2-1) peaks at s = 1/√(β+1)
                let s = r0.max(1.0 / (beta + 1.0).sqrt());
                beta * s * (1.0 + s * s).powf(-0.5 * beta - 1.0)
            }
        }
    }
}

impl fmt::Display for Kernel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self.variant {
            Variant::PowerLaw { alpha } => write!(f, "power:alpha={alpha}"),
            Variant::Regular(RegularFamily::Rational { beta }) => write!(f, "rational:beta={beta}"),
            Variant::Regular(RegularFamily::Classic { beta }) => write!(f, "classic:beta={beta}"),
            Variant::Regular(RegularFamily::Exponential { lambda }) => write!(f, "exp:lambda={lambda}"),
        }
    }
}

/// Parses `name:key=value[,key=value...]` spec strings.
pub(crate) fn parse_spec(s: &str) -> std::result::Result<(String, Vec<(String, f64)>), String> {
    let s = s.trim();
    let (name, rest) = match s.split_once(':') {
        Some((n, r)) => (n.trim(), r.trim()),
        None => (s, ""),
    };
    if name.is_empty() {
        return Err(format!("empty spec name in {s:?}"));
    }
    let mut params = Vec::new();
    if !rest.is_empty() {
        for part in rest.split(',') {
            let (k, v) = part
                .split_once('=')
                .ok_or_else(|| format!("expected key=value in {part:?}"))?;
            let v: f64 = v.trim().parse().map_err(|_| format!("bad number {v:?} for {k}"))?;
            params.push((k.trim().to_string(), v));
        }
    }
    Ok((name.to_string(), params))
}

pub(crate) fn single_param(
    name: &str,
    params: &[(String, f64)],
    key: &str,
) -> std::result::Result<f64, String> {
    match params {
        [(k, v)] if k == key => Ok(*v),
        _ => Err(format!("{name} expects exactly one parameter `{key}`")),
    }
}

impl FromStr for Kernel {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let (name, params) = parse_spec(s).map_err(Error::InvalidKernel)?;
        let get = |key: &str| single_param(&name, &params, key).map_err(Error::InvalidKernel);
        match name.as_str() {
            "power" => Kernel::power(get("alpha")?),
            "rational" => Kernel::regular(RegularFamily::Rational { beta: get("beta")? }),
            "classic" => Kernel::regular(RegularFamily::Classic { beta: get("beta")? }),
            "exp" => Kernel::regular(RegularFamily::Exponential { lambda: get("lambda")? }),
            other => Err(Error::InvalidKernel(format!("unknown kernel family {other:?}"))),
        }
    }
}
