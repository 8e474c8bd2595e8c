//! Explains labeled anomalies in a numerical dataset by discovering a small
//! set of low-dimensional, axis-aligned ellipsoid patterns ("packs"), each
//! with per-feature interval rules.
//!
//! The pipeline runs in three stages:
//!
//! 1. [`density`] + [`lattice`]: per-feature density estimation seeds
//!    1-d intervals, grown bottom-up into hyper-rectangles that hold many
//!    anomalies and few normal points;
//! 2. [`refine`]: each rectangle becomes a family of candidate ellipsoids
//!    by solving a slack-penalized discrimination program over a penalty
//!    grid, reduced to its (mass, impurity) Pareto frontier;
//! 3. [`mdl`] + [`select`]: a minimum-description-length objective scores
//!    subsets of candidates and a randomized greedy picks the packing that
//!    describes the anomalies in the fewest bits.
//!
//! The selected packing doubles as a signature set: [`evaluate`] scores new
//! instances against it and measures detection quality.

pub mod dataset;
pub mod density;
pub mod error;
pub mod evaluate;
pub mod lattice;
pub mod lp;
pub mod mdl;
pub mod refine;
pub mod select;

pub use dataset::LabeledDataset;
pub use error::{Error, Result};
pub use refine::Pack;
