//! Graph connection Laplacians from sampled manifolds.
//!
//! The crate builds graph Laplacians, graph connection Laplacians, and
//! Z2-orientation Laplacians from point clouds — with analytic or estimated
//! (local PCA + Procrustes) bundle structure — and ships the experiment
//! harness that checks their pointwise and spectral behavior against
//! analytic reference spectra.
//!
//! Pipeline sketch:
//!
//! ```text
//! manifolds::sample -> kernels::normalized_kernel -> graph::build_affinity
//!     -> graph::attach_connection (trivial | analytic | pca | z2)
//!     -> graph::assemble_operator (S | D | D-S | I-D^{-1}S | D^{-1/2}SD^{-1/2})
//!     -> spectral::eigendecompose -> spectral::rescale_eigenvalues
//!     -> experiments::{pointwise_error, spectral_error, ...}
//! ```
//!
//! The numeric core is generic over the scalar type (`f32` / `f64`) through
//! [`Scalar`]; the aliases below pin the common instantiations.

// Index-style loops are the house style in the block/linear-algebra kernels,
// where row/column symmetry matters more than iterator chaining.
#![allow(clippy::needless_range_loop)]

pub mod error;
pub mod experiments;
pub mod graph;
pub mod io;
pub mod kernels;
pub mod manifolds;
pub mod rng;
pub mod scalar;
pub mod sparse;
pub mod spectral;
pub mod tangent;

pub use error::{Error, Result};
pub use scalar::Scalar;

/// `f64` instantiations of the core types.
pub type PointCloud64 = manifolds::PointCloud<f64>;
pub type Frame64 = manifolds::Frame<f64>;
pub type DensityEstimate64 = kernels::DensityEstimate<f64>;
pub type AffinityGraph64 = graph::AffinityGraph<f64>;
pub type ConnectionGraph64 = graph::ConnectionGraph<f64>;
pub type BlockOperator64 = graph::BlockOperator<f64>;
pub type SpectralDecomposition64 = spectral::SpectralDecomposition<f64>;
pub type VdmEmbedding64 = spectral::VdmEmbedding<f64>;

/// `f32` instantiations, for callers trading precision for footprint.
pub type PointCloud32 = manifolds::PointCloud<f32>;
pub type Frame32 = manifolds::Frame<f32>;
pub type AffinityGraph32 = graph::AffinityGraph<f32>;
pub type ConnectionGraph32 = graph::ConnectionGraph<f32>;
pub type BlockOperator32 = graph::BlockOperator<f32>;
pub type SpectralDecomposition32 = spectral::SpectralDecomposition<f32>;
