//! Counting and sampling for the random cluster and Potts models on discrete
//! tori and simply connected lattice regions.
//!
//! The library has three layers:
//!
//! * exact desk-scale oracles ([`oracle`]): partition functions and
//!   distributions by exhaustive enumeration, in rational arithmetic where
//!   the edge probability is rational;
//! * approximation machinery: abstract polymer models and truncated cluster
//!   expansions ([`polymer`]), the high-temperature polymer representation
//!   ([`ht`]), contour geometry on the dual half-lattice ([`contour`]), and
//!   contour-model counting with inductive weight tables and flip sums
//!   ([`pscount`]);
//! * samplers ([`sampler`]): self-reducible polymer and contour sampling,
//!   Glauber dynamics, simulated annealing, and the Edwards–Sokal coupling.

pub mod bitset;
pub mod contour;
pub mod error;
pub mod ht;
pub mod lattice;
pub mod logsum;
pub mod oracle;
pub mod polymer;
pub mod pscount;
pub mod records;
pub mod rng;
pub mod sampler;
pub mod verify;

pub use bitset::BitSet;
pub use error::Error;
pub use lattice::{EdgeConfig, SimpleGraph, TorusGraph};

/// Crate-wide result type.
pub type Result<T> = std::result::Result<T, Error>;
