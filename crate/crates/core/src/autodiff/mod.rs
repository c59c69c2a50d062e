//! Minimal scalar automatic differentiation.
//!
//! Two independent mechanisms live here:
//!
//! * [`Jet2`] carries a value with its first and second derivative along a
//!   single scalar seed. It is what the directional operators use to get
//!   `ψ''(0)` in one forward pass.
//! * [`Tape`] records a scalar program and sweeps it backwards to obtain
//!   gradients with respect to many inputs at once ([`grad_params`]).
//!
//! Both implement [`Real`], so numeric code written once against that trait
//! runs on plain `f64`, on jets, and on tape variables.

mod jet;
mod real;
mod tape;

pub use jet::{jet_eval, Jet2};
pub use real::{Coeff, Real};
pub use tape::{grad_check, grad_params, OpKind, Tape, Var};
