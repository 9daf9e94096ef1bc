//! Two-scale finite element solver for a distributed-microstructure
//! reaction-diffusion system.
//!
//! A macroscopic concentration `U` diffuses on a 2D domain; every macro point
//! carries a micro cell on which two further concentrations `u`, `v` diffuse
//! and react. The scales are coupled through a nonlinear mass-transfer law
//! `b(U - u)` on the reactive part of the micro-cell boundary. The crate
//! provides P1 finite elements on both scales, a tensor-product two-scale
//! space, a semi-implicit time integrator with decoupled per-node micro
//! solves, and a verification harness that measures empirical convergence
//! orders against manufactured solutions and monitors the solution's
//! positivity and boundedness structure.
//!
//! All numerics are generic over the floating-point scalar ([`Scalar`]);
//! `f64` aliases for the main types are re-exported at the crate root.

// index-based loops over matrix/vector entries are the local idiom
#![allow(clippy::needless_range_loop)]

pub mod cli;
pub mod config;
pub mod coupling;
pub mod error;
pub mod expr;
pub mod fem;
pub mod mesh;
pub mod model;
pub mod scalar;
pub mod solver;
pub mod twoscale;
pub mod verify;

pub use error::{Error, Result};
pub use scalar::Scalar;

/// Default scalar used by the CLI, the acceptance suite and the aliases below.
pub type Real = f64;

pub type Mesh2D = mesh::Mesh2D<Real>;
pub type P1Space = fem::P1Space<Real>;
pub type SparseOperator = fem::SparseOperator<Real>;
pub type TwoScaleField = twoscale::TwoScaleField<Real>;
pub type ModelParams = model::ModelParams<Real>;
pub type TransferFn = model::TransferFn<Real>;
pub type ReactionFactorFn = model::ReactionFactorFn<Real>;
pub type CoupledOperators = coupling::CoupledOperators<Real>;
pub type State = solver::State<Real>;
pub type SolverConfig = solver::SolverConfig<Real>;
