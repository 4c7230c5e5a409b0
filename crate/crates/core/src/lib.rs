//! Graphical representations of the Ising and Potts models on finite graphs.
//!
//! The crate covers the random-cluster (FK) model, the loop O(1) model with
//! sources, the single random current, uniform even subgraphs and the
//! `Z/qZ` flow model, together with:
//!
//! * an exact enumeration oracle for small graphs ([`oracle`]),
//! * exact cycle-space samplers ([`cyclespace`]),
//! * heat-bath Markov chains for FK with optional `F_A` conditioning and the
//!   derived loop / current / flow samplers ([`mcmc`]),
//! * the exploration coupling and a grand coupling for MCMC scale ([`coupling`]),
//! * desk-scale experiment drivers ([`experiments`]).
//!
//! Randomness is always drawn from [`rng::StreamRng`], a counter-based
//! generator keyed by `(master seed, replica index)`, so that parallel
//! replica runs are independent of the worker count.

pub mod config;
pub mod coupling;
pub mod cyclespace;
mod error;
pub mod experiments;
pub mod graph;
pub mod mcmc;
pub mod oracle;
pub mod rng;
pub mod stats;
mod unionfind;

pub use config::{BondConfig, BoundaryCondition, CurrentConfig, FlowConfig, SourceSpec};
pub use error::{Error, Result};
pub use graph::{BoxSpec, FiniteGraph};
pub use rng::StreamRng;
pub use unionfind::UnionFind;
