//! Exact numerical laboratory for one-dimensional balanced random walks in quenched
//! environments.
//!
//! The walk sits on `Z`, jumps to each neighbour with probability `ω_k` and holds with
//! probability `1 − 2ω_k`. This crate evolves its distribution exactly, solves the
//! associated heat equation with diffusivity `ω`, and measures the quantities that govern
//! its local limit behaviour.
//!
//! Kernels are generic over [`Scalar`] (`f32` or `f64`); the aliases at the crate root fix
//! `f64`, which is what the diagnostics and the command-line tool use.

pub mod diagnostics;
pub mod environment;
pub mod error;
pub mod evolution;
pub mod hexfloat;
pub mod lattice;
pub mod llt;
pub mod markov;
pub mod scalar;
pub mod svg;

pub use environment::{Law, Window, GENERATOR_NAME};
pub use error::{Error, Result};
pub use evolution::{KernelKind, KernelTime, Truncation};
pub use scalar::Scalar;

pub type Environment = environment::Environment<f64>;
pub type LatticeFunction = lattice::LatticeFunction<f64>;
pub type KernelSnapshot = evolution::KernelSnapshot<f64>;
pub type Evolution<'e> = evolution::Evolution<'e, f64>;

pub type EnvironmentF32 = environment::Environment<f32>;
pub type LatticeFunctionF32 = lattice::LatticeFunction<f32>;
pub type KernelSnapshotF32 = evolution::KernelSnapshot<f32>;
