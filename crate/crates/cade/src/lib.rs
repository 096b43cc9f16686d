//! Toolkit for treating cognitive-appraisal evaluation as distribution
//! estimation.
//!
//! Human raters disagree: the same situation draws different Likert-scale
//! ratings on each appraisal dimension (suddenness, pleasantness,
//! responsibility, ...). This crate models that disagreement directly. It
//! builds empirical rating distributions from repeated human annotations,
//! obtains predicted distributions (by sampling an LLM, loading a
//! prediction file, or running a reference baseline), optionally calibrates
//! them, and scores them with the Wasserstein-1 distance plus mean and
//! variance absolute errors.
//!
//! # Modules
//!
//! - [`dataset`]: canonical schema, dimension unification, rating
//!   multisets.
//! - [`distributions`]: pmfs over the 5-point scale, moments,
//!   Wasserstein-1, modality, label smoothing.
//! - [`metrics`]: scoring, reports, Random and Majority baselines,
//!   prediction-file IO.
//! - [`persona`]: annotator profiles and the four prompt variants.
//! - [`sampler`]: chat endpoints, reply cache, rating collection,
//!   temperature grid search.
//! - [`calibration`]: Avg-Conf and Pair-Rank post-hoc calibrators.
//! - [`analysis`]: dimension rankings, group variance, significance tests,
//!   correlations.
//! - [`pipeline`] and [`config`]: the end-to-end experiment runner behind
//!   the `cade` binary.
//!
//! The `examples/` directory has one runnable example per capability;
//! start with `distribution_metrics`.

pub mod analysis;
pub mod calibration;
pub mod config;
pub mod dataset;
pub mod distributions;
pub mod error;
pub mod metrics;
pub mod persona;
pub mod pipeline;
pub mod sampler;

pub use dataset::{AppraisalRecord, DimensionId, Rating, RatingMultiset};
pub use distributions::{wasserstein1, RatingDistribution};
pub use error::{Error, Result};
pub use metrics::{EvalReport, PredictionSet};
pub use persona::{PersonaProfile, PromptBundle, Variant};
