//! # divaudit
//!
//! Estimates how unevenly a binary protected attribute is represented in a
//! collection of unlabeled embeddings, using only a small labeled control
//! set.
//!
//! For each element the estimator asks whether it looks more like the
//! group-0 or the group-1 part of the control set (mean cosine similarity),
//! averages over the collection, and rescales by the control set's own
//! within- and cross-group similarity levels. Cost is `O(|S| |T|)` and only
//! `|T|` elements need labels.
//!
//! ## Modules
//!
//! | Module | Contents |
//! |--------|----------|
//! | [`types`] | feature vectors, collections, control sets |
//! | [`similarity`] | metric contract, cosine + 1, pairwise means, exact disparity, gamma |
//! | [`divscore`] | the estimator, incremental updates, concentration bounds |
//! | [`adaptive`] | adaptive control sets (separation scores + MMR selection) |
//! | [`baselines`] | random samplers, IID-Measure, SS-ST |
//! | [`synthgen`] | two-Gaussian synthetic data with known labels |
//! | [`harness`] | seeded sweeps over fraction and control size |
//! | [`io`] | delimited feature files |
//!
//! ## Quick start
//!
//! ```
//! use divaudit::{divscore, Collection, ControlSet, CosinePlusOne, DivScoreConfig, FeatureVector};
//!
//! let v = |x: f64, y: f64| FeatureVector::new(vec![x, y]).unwrap();
//! let control = ControlSet::new(vec![v(1.0, 0.0), v(1.0, 0.0)], vec![v(0.0, 1.0), v(0.0, 1.0)]).unwrap();
//! let collection = Collection::new(vec![v(1.0, 0.0), v(1.0, 0.0), v(1.0, 0.0), v(0.0, 1.0)]).unwrap();
//!
//! let report = divscore(&collection, &control, &CosinePlusOne, &DivScoreConfig::default()).unwrap();
//! assert!((report.estimate - 0.5).abs() < 1e-12);
//! ```

pub mod adaptive;
pub mod baselines;
pub mod divscore;
pub mod error;
pub mod harness;
pub mod io;
pub mod rng;
pub mod similarity;
pub mod synthgen;
pub mod types;

pub use adaptive::{
    build_adaptive_control, gamma_of_control, per_element_gamma, select_adaptive_indices, AdaptiveConfig,
    AuxiliarySet, TieBreak,
};
pub use baselines::{
    iid_measure, sample_control, sample_random_balanced, sample_random_proportional, ss_st, SamplerConfig,
    SamplingMode, DEFAULT_SS_ST_K,
};
pub use divscore::{
    divscore, incremental_update, lemma1_success_probability, norm_stats, theorem_delta, BoundInputs,
    DisparityReport, DivScoreConfig, LogBase, Method, RunningSums, SuccessProbability, TheoremBound,
};
pub use error::{AuditError, Result};
pub use rng::{derived_rng, seeded_rng, AuditRng};
pub use similarity::{
    cosine_plus_one, estimate_gamma, mean_sim_set_to_set, mean_sim_to_set, true_disparity, CosinePlusOne,
    GammaEstimate, Metric, SimilarityMetric,
};
pub use synthgen::{expected_gamma, generate_collection, tune_sigma, SyntheticModel, SyntheticSpec};
pub use types::{Collection, ControlSet, FeatureVector, Group, LabeledExample, NormStats};
