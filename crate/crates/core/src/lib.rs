//! Stationary laws of open autocatalytic reaction networks.
//!
//! Species `A_1..A_d` convert each other through autocatalytic steps
//! `A_i + A_j -> 2 A_i` (rate `kappa_i`), flow in at rates `lambda_i` and flow out
//! at a common per-molecule rate `delta`. The crate provides
//!
//! * [`specfun`]: log-space special functions and the terminating `2F1`;
//! * [`model`]: parameters, states and the chain's transition structure;
//! * [`stationary`]: the Poisson / weighted Dirichlet-multinomial product law and
//!   its two-species forms, regime classification and mode search;
//! * [`balance`]: the balance functional `B*(a) = (A* pi)(a) / pi(a)` by direct
//!   summation and in closed form;
//! * [`ssa`]: Gillespie simulation with occupation-time accounting;
//! * [`ode`]: the mean-field ODE and its fixed point;
//! * [`oracle`]: exact stationary solves of truncated chains;
//! * [`io`]: CSV and JSON interchange.

// Coefficient tables and reference values are written to full precision.
#![allow(clippy::excessive_precision)]
// `!(x > 0.0)` style guards are deliberate: they also reject NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod balance;
pub mod error;
pub mod io;
pub mod model;
pub mod ode;
pub mod oracle;
pub mod par;
pub mod specfun;
pub mod ssa;
pub mod stationary;

pub use error::{Error, Result};
