//! Meshfree iterative neural solver for high-dimensional parabolic partial
//! integro-differential equations (PIDEs).
//!
//! The solver replaces the nonlocal jump integral of a PIDE with a single
//! sampled jump and turns the solve into a sequence of least-squares
//! regressions against frozen targets. A DGM network wrapped in a hard
//! terminal constraint represents the solution on the whole space-time
//! domain.
//!
//! Module map:
//!
//! * [`autodiff`]: second-order jets and a reverse-mode scalar tape.
//! * [`network`]: DGM network, hard-constraint wrapper, directional operators, checkpoints.
//! * [`problems`]: PIDE definitions and the four benchmark instances.
//! * [`target`]: single-jump regression target and jump sampling.
//! * [`sampler`]: uniform, residual-adaptive and path-based collocation.
//! * [`trainer`]: the outer/inner training loop with Polyak block distillation.
//! * [`oracle`]: independent Monte Carlo reference solvers.

pub mod autodiff;
pub mod error;
pub mod field;
pub mod network;
pub mod oracle;
pub mod problems;
pub mod rng;
pub mod sampler;
pub mod target;
pub mod trainer;

pub use error::{Error, Result};
pub use field::{Field, RealField, SpaceTimePoint};
