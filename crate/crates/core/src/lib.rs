//! High-relative-degree stochastic control barrier and Lyapunov chains with
//! a CLF-CBF quadratic-program controller, Euler–Maruyama simulation and a
//! Monte Carlo harness.

#![allow(clippy::neg_cmp_op_on_partial_ord, clippy::needless_range_loop)]

pub mod autodiff;
pub mod benchmarks;
pub mod chain;
pub mod harness;
pub mod qp;
pub mod sde;
