//! Simulation and analysis toolkit for self-similar fragmentation processes
//! with negative index.
//!
//! The crate is organized around the standard pipeline for these processes:
//!
//! 1. [`partitions`] — mass partitions, finite set partitions, and Kingman's
//!    paintbox construction linking the two.
//! 2. [`dislocation`] — dislocation measures ν (finite atom lists or built-in
//!    countable families with certified tail bounds).
//! 3. [`fragmentation`] — exact event-driven simulation of homogeneous
//!    fragmentations restricted to finitely many labels, erosion, and the
//!    Lamperti time change producing the self-similar process.
//! 4. [`malthus`] — the analytic layer: ψ/φ/φ*, the Malthusian exponent p*,
//!    integrability hypotheses, and additive martingales.
//! 5. [`tree`] — genealogy trees built from self-similar paths, ℓ¹
//!    stick-breaking embeddings, natural measures, and pre-ball queries.
//! 6. [`tilted`] — the spine (size-biased) change of measure, exponential
//!    functionals, martingale leaf-measure approximations, and the Frostman
//!    energy factorization.
//! 7. [`reduced`] — the truncation operator on mass partitions and measures
//!    with its monotone-approximation structure.
//! 8. [`dimension`] — box-counting dimension estimation of the leaf set and
//!    the ε-stopping-line covering functional.
//! 9. [`gw`] — possibly-infinite Galton-Watson processes and their coupling
//!    to fragmentation trees with geometric edge rescaling.
//!
//! All simulators take an external RNG stream; [`seeds`] derives independent
//! per-replicate streams from a single master seed.

/// Crate version, for run manifests.
pub const VERSION: &str = env!("CARGO_PKG_VERSION");

pub mod dimension;
pub mod dislocation;
pub mod fragmentation;
pub mod gw;
pub mod malthus;
pub mod partitions;
pub mod reduced;
pub mod seeds;
pub mod stats;
pub mod tilted;
pub mod tree;

pub use dislocation::DislocationMeasure;
pub use fragmentation::{FragmentationParams, FragmentationPath, Horizon};
pub use malthus::MalthusReport;
pub use partitions::{MassPartition, SetPartition};
pub use tree::GenealogyTree;
