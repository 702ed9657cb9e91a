//! Ising measures on locally tree-like graphs, at desk scale.
//!
//! The crate provides the constructive side of the theory end to end:
//! configuration-model and multi-type Galton-Watson ensembles, exact Ising
//! computations on trees with plus/minus/field boundaries, population dynamics
//! for the distributional cavity recursion, Glauber MCMC with sign
//! conditioning, continuous-time random-walk occupation functionals, capacity
//! bounds on trees, and edge-expansion certificates, plus a CLI harness that
//! runs the limit statements as seeded, reproducible experiments.

pub mod canon;
pub mod capacity;
pub mod ensembles;
pub mod error;
pub mod expander;
pub mod experiments;
pub mod graph;
pub mod ising;
pub mod limits;
pub mod mcmc;
pub mod rng;
pub mod srw;

pub use error::{Error, Result};
