//! Cucker–Smale flocking with a velocity control function.
//!
//! The crate simulates
//!
//! ```text
//! dq_i/dt = G(p_i)
//! dp_i/dt = (κ/N) Σ_k ψ(|q_k − q_i|) (G(p_k) − G(p_i))
//! ```
//!
//! for regular (type I), weakly singular (type II) and strongly singular
//! (type III) communication weights ψ, and evaluates the analytic
//! flocking / collision-avoidance certificates that come with the model.
//!
//! Module map:
//!
//! * [`kernel`]: communication weights, antiderivatives, tail integrals.
//! * [`gctrl`]: radial velocity control maps `G(p) = g(|p|) p/|p|`.
//! * [`model`]: state, trajectory and right-hand side.
//! * [`integrator`]: adaptive Dormand–Prince stepping with gap events.
//! * [`line1d`]: first-order reduction on the real line (type II kernels).
//! * [`diagnostics`]: dispersions, Lyapunov functional, certificates, detectors.
//! * [`exp`]: run configuration, scenario generators, orchestration and I/O.

pub mod diagnostics;
pub mod error;
pub mod exp;
pub mod fnum;
pub mod gctrl;
pub mod integrator;
pub mod kernel;
pub mod line1d;
pub mod model;
pub mod quad;
pub mod stats;

pub use diagnostics::{Certificate, CertificateKind, DispersionReport};
pub use error::{Error, Result};
pub use gctrl::{Curvature, GBounds, VelocityControl};
pub use integrator::{integrate, min_gap_trace, IntegratorConfig};
pub use kernel::{Kernel, KernelClass, RegularFamily};
pub use line1d::{LineEventLog, LineSystem, PairOutcome};
pub use model::{EventKind, EventRecord, Params, State, Trajectory};
