//! Mixed finite element solver for fully dynamic poroelasticity.
//!
//! The library discretizes the coupled momentum / mass / Darcy system on
//! triangulated planar domains with continuous piecewise-linear
//! displacements, lowest-order face-based fluxes and piecewise-constant
//! pressures, integrates in time with an implicit weighted scheme (backward
//! Euler as the unit-weight member), and solves each implicit stage problem
//! either monolithically or with an iteratively coupled splitting whose
//! contraction number `x / (c0 + x)` is available a priori.
//!
//! Crate layout:
//! - [`model`]: material tensors, stage weights, and the contraction theory.
//! - [`mesh`] / [`dofmap`] / [`quadrature`] / [`assemble`]: discretization.
//! - [`energy`]: the convex stage energy, its gradients and norms.
//! - [`linalg`] / [`coupling`]: SPD solves, the monolithic stage solver and
//!   the two equivalent coupled iterations with convergence records.
//! - [`timestep`]: history handling and the time loop.
//! - [`scenario`]: configuration-driven experiment runs for the CLI.
#![doc = include_str!("../../../README.md")]

pub mod assemble;
pub mod coupling;
pub mod dofmap;
pub mod energy;
pub mod error;
pub mod linalg;
pub mod loads;
pub mod mesh;
pub mod model;
pub mod quadrature;
pub mod scenario;
pub mod timestep;

pub use dofmap::{BcSpec, DisplacementBc, DofMap, FlowBc, SideBc};
pub use error::{Error, Result};
pub use model::{BiotTensor, ElasticityTensor, MaterialField, PermeabilityTensor, ThetaParams};
