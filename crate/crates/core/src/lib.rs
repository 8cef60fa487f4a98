//! Numerical toolkit for the degenerate Hamilton-Jacobi-Bellman obstacle
//! problem of optimal learning: a monotone solver for the value function, a
//! Monte-Carlo simulator of the belief dynamics and a verification harness
//! for the comparison principle and its barrier construction.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod cli;
pub mod config;
pub mod error;
pub mod grid;
pub mod io;
pub mod model;
pub mod operator;
pub mod reduce;
pub mod simulator;
pub mod solver;
pub mod verify;

pub use error::{Error, Result, SpecViolation};
pub use grid::{Action, FieldSpace, Grid, PolicyField, ValueField};
pub use model::{DiffusionCoeffs, PayoffRealization, ProblemSpec};
pub use operator::{Branch, Jet, OperatorValue, SymMatrix};
pub use solver::{Init, SolveOptions, SolveReport};
