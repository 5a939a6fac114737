//! Similarity metrics and the pairwise-mean kernels built on them.
//!
//! All sums run sequentially in input order, so identical inputs always give
//! bit-identical results.

use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{AuditError, Result};
use crate::types::{FeatureVector, Group, LabeledExample};

/// A pairwise similarity with values in `[0, upper_bound()]`; larger means
/// more similar.
pub trait SimilarityMetric {
    fn similarity(&self, a: &FeatureVector, b: &FeatureVector) -> Result<f64>;

    fn upper_bound(&self) -> f64;
}

impl<M: SimilarityMetric + ?Sized> SimilarityMetric for &M {
    fn similarity(&self, a: &FeatureVector, b: &FeatureVector) -> Result<f64> {
        (**self).similarity(a, b)
    }

    fn upper_bound(&self) -> f64 {
        (**self).upper_bound()
    }
}

/// Cosine similarity shifted by one, so values lie in `[0, 2]`.
pub fn cosine_plus_one(a: &FeatureVector, b: &FeatureVector) -> Result<f64> {
    if a.dim() != b.dim() {
        return Err(AuditError::DimensionMismatch {
            expected: a.dim(),
            found: b.dim(),
        });
    }
    if a.norm() == 0.0 || b.norm() == 0.0 {
        return Err(AuditError::ZeroVector);
    }
    let cos = a.dot(b) / (a.norm() * b.norm());
    Ok((1.0 + cos).clamp(0.0, 2.0))
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct CosinePlusOne;

impl SimilarityMetric for CosinePlusOne {
    fn similarity(&self, a: &FeatureVector, b: &FeatureVector) -> Result<f64> {
        cosine_plus_one(a, b)
    }

    fn upper_bound(&self) -> f64 {
        2.0
    }
}

/// Named metrics selectable from configuration files and the command line.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Metric {
    #[default]
    Cosine1,
}

impl SimilarityMetric for Metric {
    fn similarity(&self, a: &FeatureVector, b: &FeatureVector) -> Result<f64> {
        match self {
            Metric::Cosine1 => cosine_plus_one(a, b),
        }
    }

    fn upper_bound(&self) -> f64 {
        match self {
            Metric::Cosine1 => 2.0,
        }
    }
}

impl FromStr for Metric {
    type Err = AuditError;

    fn from_str(s: &str) -> Result<Metric> {
        match s {
            "cosine1" => Ok(Metric::Cosine1),
            other => Err(AuditError::InvalidParameter(format!(
                "unknown metric {other:?} (expected cosine1)"
            ))),
        }
    }
}

/// Sum of `metric(x, y)` over `y` in `ts`.
pub(crate) fn sim_sum_to_set<M: SimilarityMetric>(
    x: &FeatureVector,
    ts: &[FeatureVector],
    metric: &M,
) -> Result<f64> {
    let mut sum = 0.0;
    for y in ts {
        sum += metric.similarity(x, y)?;
    }
    Ok(sum)
}

/// Mean similarity of `x` to the members of `ts`.
pub fn mean_sim_to_set<M: SimilarityMetric>(
    x: &FeatureVector,
    ts: &[FeatureVector],
    metric: &M,
) -> Result<f64> {
    if ts.is_empty() {
        return Err(AuditError::EmptySet("reference set"));
    }
    Ok(sim_sum_to_set(x, ts, metric)? / ts.len() as f64)
}

/// Mean similarity over all pairs of `s × ts`.
pub fn mean_sim_set_to_set<M: SimilarityMetric>(
    s: &[FeatureVector],
    ts: &[FeatureVector],
    metric: &M,
) -> Result<f64> {
    if s.is_empty() {
        return Err(AuditError::EmptySet("collection"));
    }
    if ts.is_empty() {
        return Err(AuditError::EmptySet("reference set"));
    }
    let mut total = 0.0;
    for x in s {
        total += sim_sum_to_set(x, ts, metric)?;
    }
    Ok(total / (s.len() as f64 * ts.len() as f64))
}

/// Fraction of group-0 labels minus fraction of group-1 labels.
pub fn true_disparity(labels: &[Group]) -> Result<f64> {
    if labels.is_empty() {
        return Err(AuditError::EmptySet("labels"));
    }
    let zeros = labels.iter().filter(|&&z| z == Group::Zero).count() as f64;
    let ones = labels.len() as f64 - zeros;
    Ok((zeros - ones) / labels.len() as f64)
}

/// Empirical separation of a metric on labeled data.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GammaEstimate {
    /// Mean over unordered same-label pairs, pooled across both groups.
    pub mu_same: f64,
    /// Mean over cross-label pairs.
    pub mu_diff: f64,
    pub gamma: f64,
    pub mu_same0: f64,
    pub mu_same1: f64,
}

fn within_pair_sum<M: SimilarityMetric>(xs: &[&FeatureVector], metric: &M) -> Result<f64> {
    let mut sum = 0.0;
    for (i, a) in xs.iter().enumerate() {
        for b in &xs[i + 1..] {
            sum += metric.similarity(a, b)?;
        }
    }
    Ok(sum)
}

/// Estimates `mu_same`, `mu_diff` and `gamma = mu_same - mu_diff` by brute
/// force over every pair. Gamma may come out negative.
pub fn estimate_gamma<M: SimilarityMetric>(
    labeled: &[LabeledExample],
    metric: &M,
) -> Result<GammaEstimate> {
    let g0: Vec<&FeatureVector> = labeled.iter().filter(|e| e.z == Group::Zero).map(|e| &e.x).collect();
    let g1: Vec<&FeatureVector> = labeled.iter().filter(|e| e.z == Group::One).map(|e| &e.x).collect();
    for (label, g) in [(0u8, &g0), (1u8, &g1)] {
        if g.len() < 2 {
            return Err(AuditError::InsufficientClassExamples {
                label,
                required: 2,
                found: g.len(),
            });
        }
    }
    let pairs = |n: usize| (n * (n - 1) / 2) as f64;
    let same0 = within_pair_sum(&g0, metric)?;
    let same1 = within_pair_sum(&g1, metric)?;
    let mut diff = 0.0;
    for a in &g0 {
        for b in &g1 {
            diff += metric.similarity(a, b)?;
        }
    }
    let mu_same = (same0 + same1) / (pairs(g0.len()) + pairs(g1.len()));
    let mu_diff = diff / (g0.len() as f64 * g1.len() as f64);
    Ok(GammaEstimate {
        mu_same,
        mu_diff,
        gamma: mu_same - mu_diff,
        mu_same0: same0 / pairs(g0.len()),
        mu_same1: same1 / pairs(g1.len()),
    })
}
