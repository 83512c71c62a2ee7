//! Smoothed policy iteration for discounted Markov decision processes on
//! finite structured grids.
//!
//! Each iteration evaluates the current policy, replaces its value by the
//! lower semicontinuous envelope and improves greedily against that
//! envelope. The crate also provides value iteration, best-improvement
//! policy iteration on argmin-restricted models, Lyapunov growth
//! certificates, a Monte Carlo cross-check and benchmark generators.
//!
//! ```
//! use howard_lsc::bench::make_threshold_model;
//! use howard_lsc::solvers::{smoothed_policy_iteration, value_iteration, PiOptions};
//! use howard_lsc::lyapunov::w_dist;
//!
//! let m = make_threshold_model(11, 1.0, 0.9).unwrap();
//! let (trace, _policy) = smoothed_policy_iteration(&m, &m.first_policy(), &PiOptions::default()).unwrap();
//! let v_star = value_iteration(&m, 1e-10).unwrap().value;
//! assert!(w_dist(trace.final_value(), &v_star, &m.weight) < 1e-8);
//! ```

// `!(x > 0.0)` style checks are deliberate: they also reject NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod bench;
pub mod envelope;
pub mod error;
pub mod format;
pub mod lyapunov;
pub mod model;
pub mod montecarlo;
pub mod operators;
pub mod solvers;

pub use error::{Error, Result};
pub use model::{Action, ActionId, GridFunction, ModelSpec, Node, NodeId, NodeKind, Policy, StructuredGrid};
