//! Quantum dynamics on metric graphs and the minimal graph process.
//!
//! The pipeline is: a [`graph::MetricGraph`] is discretized by a
//! [`grid::Grid`], the Hamiltonian is assembled in
//! [`hamiltonian::HamiltonianMatrix`], states are propagated by
//! [`propagator::CrankNicolson`], and [`currents`] turns the resulting
//! [`propagator::EvolutionRecord`] into densities, currents and vertex
//! fluxes. The trajectory samplers in [`sampler`] and [`bell`] consume those.

pub mod error;
pub mod graph;
pub mod grid;
pub mod hamiltonian;
pub mod linalg;
pub mod almost_markov;
pub mod bell;
pub mod currents;
pub mod propagator;
pub mod sampler;
pub mod scenario;
pub mod experiments;

pub use error::{Error, Result};
