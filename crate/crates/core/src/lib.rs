//! Isotropic PCA and the Unravel algorithm for clustering Gaussian mixtures in an
//! affine-invariant way.
//!
//! The crate is organized around a handful of modules:
//!
//! * [`mixture`]: mixture parameters, affine maps, samplers and instance generators.
//! * [`isotropy`]: empirical moments and whitening.
//! * [`reweighting`]: Gaussian-reweighted moments, sampled and exact.
//! * [`fisher`]: Fisher discriminant, overlap and subspace checks.
//! * [`separator`]: direction choice (mean shift or spectral).
//! * [`clusterer`]: the recursive partitioning algorithm and classification.
//! * [`evaluation`]: error against ground truth and experiment harnesses.
//! * [`io`]: JSON and CSV formats.

pub mod clusterer;
pub mod demo;
pub mod error;
pub mod evaluation;
pub mod fisher;
pub mod io;
pub mod isotropy;
pub mod linalg;
pub mod mixture;
pub mod reweighting;
pub mod rng;
pub mod separator;

pub use clusterer::{classify, unravel, PolyhedralPartition, UnravelConfig};
pub use error::{Error, Result};
pub use evaluation::{partition_error, ErrorReport};
pub use fisher::{fisher_subspace, overlap, OverlapReport};
pub use mixture::{AffineMap, GaussianMixture, LabeledSample};
pub use reweighting::{exact_mixture_moments, sample_reweighted_moments, ReweightedMoments};
pub use separator::{choose_direction, DirectionChoice, Method};
