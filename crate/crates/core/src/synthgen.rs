//! Two-cluster Gaussian data with a known protected attribute.
//!
//! Group `z` is drawn from `N(mu_z, sigma² I)`. The angle between the two
//! centers and the spread control how well cosine similarity separates the
//! groups, which lets tests dial the separation `gamma` from about 0 up to 1
//! (orthogonal point masses) or 2 (antipodal point masses).

use rand::seq::SliceRandom;
use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{AuditError, Result};
use crate::rng::{seeded_rng, AuditRng};
use crate::similarity::{estimate_gamma, SimilarityMetric};
use crate::types::{Collection, FeatureVector, Group, LabeledExample};

#[derive(Debug, Clone, PartialEq)]
pub struct SyntheticModel {
    mu0: FeatureVector,
    mu1: FeatureVector,
    sigma: f64,
    pub seed: u64,
}

/// Serializable description of a [`SyntheticModel`] built from the angle
/// between its centers.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SyntheticSpec {
    pub dim: usize,
    /// Angle between the two centers, in degrees.
    pub angle: f64,
    pub sigma: f64,
    #[serde(default)]
    pub seed: u64,
}

impl SyntheticSpec {
    pub fn build(&self) -> Result<SyntheticModel> {
        SyntheticModel::from_angle(self.dim, self.angle, self.sigma, self.seed)
    }
}

impl SyntheticModel {
    pub fn new(mu0: FeatureVector, mu1: FeatureVector, sigma: f64, seed: u64) -> Result<Self> {
        if mu0.dim() != mu1.dim() {
            return Err(AuditError::DimensionMismatch {
                expected: mu0.dim(),
                found: mu1.dim(),
            });
        }
        if mu0.norm() == 0.0 || mu1.norm() == 0.0 {
            return Err(AuditError::ZeroVector);
        }
        if !(sigma >= 0.0 && sigma.is_finite()) {
            return Err(AuditError::InvalidParameter(format!(
                "sigma must be finite and nonnegative, got {sigma}"
            )));
        }
        Ok(SyntheticModel { mu0, mu1, sigma, seed })
    }

    /// Unit centers `e_0` and `cos(θ) e_0 + sin(θ) e_1` in `dim` dimensions.
    pub fn from_angle(dim: usize, angle_degrees: f64, sigma: f64, seed: u64) -> Result<Self> {
        if dim < 2 {
            return Err(AuditError::InvalidParameter(format!(
                "dimension must be at least 2, got {dim}"
            )));
        }
        if !angle_degrees.is_finite() {
            return Err(AuditError::InvalidParameter("angle must be finite".into()));
        }
        let theta = angle_degrees.to_radians();
        let mut mu0 = vec![0.0; dim];
        mu0[0] = 1.0;
        let mut mu1 = vec![0.0; dim];
        mu1[0] = theta.cos();
        mu1[1] = theta.sin();
        SyntheticModel::new(FeatureVector::new(mu0)?, FeatureVector::new(mu1)?, sigma, seed)
    }

    pub fn dim(&self) -> usize {
        self.mu0.dim()
    }

    pub fn sigma(&self) -> f64 {
        self.sigma
    }

    pub fn center(&self, group: Group) -> &FeatureVector {
        match group {
            Group::Zero => &self.mu0,
            Group::One => &self.mu1,
        }
    }

    pub fn with_sigma(&self, sigma: f64) -> Result<Self> {
        SyntheticModel::new(self.mu0.clone(), self.mu1.clone(), sigma, self.seed)
    }

    /// Generator seeded from the model's own seed.
    pub fn rng(&self) -> AuditRng {
        seeded_rng(self.seed)
    }

    /// One draw from the group's Gaussian. Zero vectors (probability zero for
    /// `sigma > 0`) are redrawn so the sample is always usable under cosine.
    pub fn sample<R: Rng + ?Sized>(&self, group: Group, rng: &mut R) -> FeatureVector {
        let center = self.center(group);
        loop {
            let values: Vec<f64> = center
                .values()
                .iter()
                .map(|&c| {
                    let z: f64 = rng.sample(StandardNormal);
                    c + self.sigma * z
                })
                .collect();
            let v = FeatureVector::new(values).expect("finite center and sigma");
            if v.norm() > 0.0 {
                return v;
            }
        }
    }

    /// `n0` group-0 draws followed by `n1` group-1 draws, unshuffled.
    pub fn sample_labeled<R: Rng + ?Sized>(&self, n0: usize, n1: usize, rng: &mut R) -> Vec<LabeledExample> {
        let mut out = Vec::with_capacity(n0 + n1);
        for _ in 0..n0 {
            out.push(LabeledExample::new(self.sample(Group::Zero, rng), Group::Zero));
        }
        for _ in 0..n1 {
            out.push(LabeledExample::new(self.sample(Group::One, rng), Group::One));
        }
        out
    }
}

/// Number of group-0 elements in a collection of size `n` with group-0
/// fraction `f`, rounding halves up.
pub fn group_zero_count(n: usize, f: f64) -> Result<usize> {
    if !(0.0..=1.0).contains(&f) {
        return Err(AuditError::InvalidParameter(format!("fraction must lie in [0, 1], got {f}")));
    }
    // The small slack keeps products like 0.7 * 5 = 3.4999999999999996
    // rounding as the exact decimal would.
    let count = (f * n as f64 + 0.5 + 1e-9).floor() as usize;
    Ok(count.min(n))
}

/// Collection of `n` elements, `round(f n)` of them from group 0, in random
/// order. Labels are kept as hidden labels.
pub fn generate_collection<R: Rng + ?Sized>(
    model: &SyntheticModel,
    n: usize,
    f: f64,
    rng: &mut R,
) -> Result<Collection> {
    if n == 0 {
        return Err(AuditError::InvalidParameter("collection size must be at least 1".into()));
    }
    let n0 = group_zero_count(n, f)?;
    let mut examples = model.sample_labeled(n0, n - n0, rng);
    examples.shuffle(rng);
    Collection::from_labeled(examples)
}

/// Monte-Carlo estimate of the model's `mu_same - mu_diff` from `n_mc` fresh
/// draws per group.
pub fn expected_gamma<M: SimilarityMetric, R: Rng + ?Sized>(
    model: &SyntheticModel,
    n_mc: usize,
    metric: &M,
    rng: &mut R,
) -> Result<f64> {
    if n_mc < 100 {
        return Err(AuditError::InvalidParameter(format!(
            "at least 100 Monte-Carlo draws per group are required, got {n_mc}"
        )));
    }
    let sample = model.sample_labeled(n_mc, n_mc, rng);
    Ok(estimate_gamma(&sample, metric)?.gamma)
}

/// Finds the spread at which [`expected_gamma`] of `model` (with its sigma
/// replaced) hits `target`, by bisection with common random numbers.
///
/// The target must lie strictly between the gamma of the widest spread tried
/// (`sigma_max`) and the point-mass gamma.
pub fn tune_sigma<M: SimilarityMetric>(
    model: &SyntheticModel,
    target: f64,
    n_mc: usize,
    sigma_max: f64,
    metric: &M,
) -> Result<f64> {
    let gamma_at = |sigma: f64| -> Result<f64> {
        let mut rng = seeded_rng(model.seed);
        expected_gamma(&model.with_sigma(sigma)?, n_mc, metric, &mut rng)
    };
    let (mut lo, mut hi) = (0.0, sigma_max);
    let (g_lo, g_hi) = (gamma_at(lo)?, gamma_at(hi)?);
    if !(g_hi < target && target < g_lo) {
        return Err(AuditError::InvalidParameter(format!(
            "target gamma {target} outside reachable range ({g_hi}, {g_lo})"
        )));
    }
    for _ in 0..50 {
        let mid = 0.5 * (lo + hi);
        if gamma_at(mid)? > target {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    Ok(0.5 * (lo + hi))
}
