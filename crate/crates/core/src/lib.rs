//! Finite-control-set model predictive control for switched affine systems
//! that tracks an optimal periodic steady state (limit cycle).
//!
//! The offline pipeline is
//! [`model::discretize_zoh`] → [`cycle::synthesize_optimal_cycle`] →
//! [`lyap::solve_periodic_lyapunov`] → [`tube::polytopic_tube`] /
//! [`tube::ellipsoidal_tube`] → [`feasible`], after which [`mpc::Controller`]
//! runs online and [`sim`] drives closed-loop experiments.

pub mod config;
pub mod cycle;
pub mod error;
pub mod feasible;
pub mod geometry;
pub mod io;
pub mod linalg;
pub mod lp;
pub mod lyap;
pub mod maxdet;
pub mod model;
pub mod mpc;
pub mod pipeline;
pub mod sim;
pub mod tube;

pub use error::{Error, Result};
