//! Continuous-measurement discrimination of two non-orthogonal qubit states,
//! with and without real-time feedback.
//!
//! Information quantities are in nats; time is in the same units as `1/γ`.

// `!(x > 0.0)` style guards are deliberate: they also reject NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod bloch;
pub mod closed_form;
pub mod density;
pub mod error;
pub mod exec;
pub mod info;
pub mod quad;
pub mod rng;
pub mod search;
pub mod stats;
pub mod trajectory;
pub mod weak;

pub use bloch::{BlochState, CodingEnsemble, coding_states, mixture, optimal_mutual_info, rotate_xz, shannon_entropy};
pub use error::{Error, Result};
pub use exec::Execution;
pub use trajectory::{Integrator, SimConfig, TrajectoryState};
