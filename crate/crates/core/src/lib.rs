//! Numerical engine for the soft-core Widom-Rowlinson model on Cayley trees.
//!
//! The model lives on the Cayley tree of order `d` (every vertex has `d + 1`
//! neighbours) with single-site state space `{-1, 0, +1}`: occupied sites carry
//! a sign, holes are empty. Neighbouring particles of opposite sign pay a
//! repulsion energy `beta`, occupation is rewarded by an activity `lambda`.
//!
//! The crate provides
//!
//! * finite rooted truncations of the tree with breadth-first indexing
//!   ([`tree`]),
//! * the spin-flip-symmetric ("intermediate") boundary law of the static
//!   model, its transition matrix, spectral classifiers and exact small-volume
//!   marginals ([`model`]),
//! * the single-site spin-flip time evolution and its exponential-field form
//!   ([`dynamics`]),
//! * the two-layer boundary-field recursion, fixed-point analysis of the
//!   inner/outer field maps, critical-parameter scans and the essential
//!   discontinuity certificate for subtree configurations ([`fields`]),
//! * occupation-measure analysis: Galton-Watson subtree recursions, activity
//!   thresholds and seeded Monte Carlo cluster statistics ([`percolation`]),
//! * regime classification of the `(beta, lambda, t, d)` parameter space
//!   ([`regime`]).
//!
//! Everything is deterministic: Monte Carlo uses a documented counter-based
//! generator ([`rng`]) keyed by `(seed, stream)` so results are reproducible
//! across platforms and thread schedules.

pub mod config;
pub mod dynamics;
mod error;
pub mod fields;
pub mod model;
pub mod percolation;
pub mod regime;
pub mod rng;
pub mod rootfind;
pub mod tree;

pub use error::{Error, Result};
