//! Spatially varying coefficient regression with a Bayesian group lasso
//! prior on tensor-product B-spline surfaces.
//!
//! Each predictor's coefficient surface is expanded in a shared 2-D B-spline
//! basis; the group lasso prior shrinks entire surfaces of irrelevant
//! predictors toward zero while a blocked Gibbs sampler delivers full
//! posterior uncertainty. Downstream summaries include pointwise credible
//! intervals, per-predictor spatial significance maps, spatial coverage
//! probabilities, and held-out predictive intervals.
//!
//! The crate is organized along the pipeline: [`basis`] builds the spline
//! system, [`data`] and [`io`] handle datasets and artifacts, [`simulate`]
//! generates benchmark data with known surfaces, [`sampler`] runs the MCMC,
//! [`diagnostics`] checks convergence, [`inference`] turns pooled draws into
//! maps and metrics, and [`tuning`] selects hyperparameters by k-fold CV.

pub mod basis;
pub mod data;
pub mod diagnostics;
pub mod error;
pub mod inference;
pub mod io;
pub mod rng;
pub mod sampler;
pub mod simulate;
pub mod tuning;

pub use basis::{BasisConfig, BasisSystem, Bbox};
pub use data::{FitConfig, Hyperparameters, SpatialDataset, StandardizeRecord};
pub use diagnostics::{ConvergenceReport, EssEstimate};
pub use error::{Error, Result};
pub use inference::{InferenceGrid, Predictions, SignificanceMap, SurfaceDraws, SurfaceSummary};
pub use sampler::{ChainSamples, DesignBlocks, GibbsChain, SamplerState};
pub use simulate::SimConfig;
pub use tuning::{BestConfig, TuningGrid, TuningTable};
