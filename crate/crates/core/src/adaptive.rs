//! Adaptive control sets: per-element separation scores plus a greedy,
//! redundancy-penalized (maximal marginal relevance) selection.

use serde::{Deserialize, Serialize};

use crate::error::{AuditError, Result};
use crate::similarity::{sim_sum_to_set, SimilarityMetric};
use crate::types::{ControlSet, FeatureVector, Group, LabeledExample};

/// Labeled pool from which adaptive control sets are drawn.
#[derive(Debug, Clone, PartialEq)]
pub struct AuxiliarySet {
    u0: Vec<FeatureVector>,
    u1: Vec<FeatureVector>,
}

impl AuxiliarySet {
    pub fn new(u0: Vec<FeatureVector>, u1: Vec<FeatureVector>) -> Result<Self> {
        for (group, u) in [(0u8, &u0), (1u8, &u1)] {
            if u.len() < 2 {
                return Err(AuditError::GroupTooSmall { group, size: u.len() });
            }
        }
        crate::types::check_uniform_dim(u0.iter().chain(&u1), None)?;
        Ok(AuxiliarySet { u0, u1 })
    }

    pub fn from_labeled(examples: &[LabeledExample]) -> Result<Self> {
        let pick = |g: Group| examples.iter().filter(|e| e.z == g).map(|e| e.x.clone()).collect();
        AuxiliarySet::new(pick(Group::Zero), pick(Group::One))
    }

    pub fn group(&self, group: Group) -> &[FeatureVector] {
        match group {
            Group::Zero => &self.u0,
            Group::One => &self.u1,
        }
    }

    #[allow(clippy::len_without_is_empty)]
    pub fn len(&self) -> usize {
        self.u0.len() + self.u1.len()
    }
}

/// Rule for choosing between candidates with equal selection scores.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TieBreak {
    #[default]
    LowestIndex,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AdaptiveConfig {
    /// Total control size; `m / 2` elements are taken from each group.
    pub m: usize,
    /// Weight of the redundancy penalty.
    pub alpha: f64,
    #[serde(default)]
    pub tie_break: TieBreak,
}

impl AdaptiveConfig {
    /// Redundancy weight suited to image embeddings.
    pub const ALPHA_IMAGE: f64 = 1.0;
    /// Redundancy weight suited to averaged word embeddings.
    pub const ALPHA_TEXT: f64 = 0.1;

    pub fn new(m: usize, alpha: f64) -> Self {
        AdaptiveConfig {
            m,
            alpha,
            tie_break: TieBreak::LowestIndex,
        }
    }

    fn validate(&self, u: &AuxiliarySet) -> Result<()> {
        if self.m < 2 || !self.m.is_multiple_of(2) {
            return Err(AuditError::InfeasibleConfig(format!(
                "control size must be even and at least 2, got {}",
                self.m
            )));
        }
        if !(self.alpha >= 0.0 && self.alpha.is_finite()) {
            return Err(AuditError::InfeasibleConfig(format!(
                "alpha must be a finite nonnegative number, got {}",
                self.alpha
            )));
        }
        for g in Group::BOTH {
            if u.group(g).len() < self.m / 2 {
                return Err(AuditError::InfeasibleConfig(format!(
                    "group {} has {} candidates but {} are requested",
                    g.index(),
                    u.group(g).len(),
                    self.m / 2
                )));
            }
        }
        Ok(())
    }
}

impl Default for AdaptiveConfig {
    fn default() -> Self {
        AdaptiveConfig::new(50, AdaptiveConfig::ALPHA_IMAGE)
    }
}

fn group_scores<M: SimilarityMetric>(
    own: &[FeatureVector],
    other: &[FeatureVector],
    metric: &M,
) -> Result<Vec<f64>> {
    own.iter()
        .enumerate()
        .map(|(i, y)| {
            let mut same = 0.0;
            for (j, x) in own.iter().enumerate() {
                if i != j {
                    same += metric.similarity(x, y)?;
                }
            }
            let diff = sim_sum_to_set(y, other, metric)?;
            Ok(same / (own.len() - 1) as f64 - diff / other.len() as f64)
        })
        .collect()
}

/// For each candidate: mean similarity to its own group's other members minus
/// mean similarity to the whole opposite group.
pub fn per_element_gamma<M: SimilarityMetric>(
    u: &AuxiliarySet,
    metric: &M,
) -> Result<(Vec<f64>, Vec<f64>)> {
    Ok((
        group_scores(&u.u0, &u.u1, metric)?,
        group_scores(&u.u1, &u.u0, metric)?,
    ))
}

/// Greedy pick of `count` candidates maximizing
/// `score[x] - alpha * max_{y selected} sim(x, y)`. The penalty is zero
/// while nothing is selected; ties go to the lowest index.
fn greedy_select<M: SimilarityMetric>(
    candidates: &[FeatureVector],
    scores: &[f64],
    count: usize,
    alpha: f64,
    metric: &M,
) -> Result<Vec<usize>> {
    let mut redundancy = vec![0.0f64; candidates.len()];
    let mut taken = vec![false; candidates.len()];
    let mut selected = Vec::with_capacity(count);
    while selected.len() < count {
        let mut best: Option<(usize, f64)> = None;
        for (i, &score) in scores.iter().enumerate() {
            if taken[i] {
                continue;
            }
            let value = score - alpha * redundancy[i];
            if best.is_none_or(|(_, b)| value > b) {
                best = Some((i, value));
            }
        }
        let (pick, _) = best.expect("feasibility checked before selection");
        taken[pick] = true;
        selected.push(pick);
        if alpha > 0.0 {
            for (i, x) in candidates.iter().enumerate() {
                if !taken[i] {
                    let s = metric.similarity(x, &candidates[pick])?;
                    if s > redundancy[i] {
                        redundancy[i] = s;
                    }
                }
            }
        }
    }
    Ok(selected)
}

/// Indices into `U_0` and `U_1` of the adaptive control set, in selection order.
pub fn select_adaptive_indices<M: SimilarityMetric>(
    u: &AuxiliarySet,
    cfg: &AdaptiveConfig,
    metric: &M,
) -> Result<(Vec<usize>, Vec<usize>)> {
    cfg.validate(u)?;
    let (scores0, scores1) = per_element_gamma(u, metric)?;
    let half = cfg.m / 2;
    Ok((
        greedy_select(&u.u0, &scores0, half, cfg.alpha, metric)?,
        greedy_select(&u.u1, &scores1, half, cfg.alpha, metric)?,
    ))
}

/// Builds a balanced control set of size `cfg.m` from `u`.
pub fn build_adaptive_control<M: SimilarityMetric>(
    u: &AuxiliarySet,
    cfg: &AdaptiveConfig,
    metric: &M,
) -> Result<ControlSet> {
    let (idx0, idx1) = select_adaptive_indices(u, cfg, metric)?;
    ControlSet::new(
        idx0.iter().map(|&i| u.u0[i].clone()).collect(),
        idx1.iter().map(|&i| u.u1[i].clone()).collect(),
    )
}

/// Held-out estimate of a control set's separation power: the average over
/// both groups `i` of how much more similar `T_i` is to held-out members of
/// group `i` than to held-out members of the other group.
pub fn gamma_of_control<M: SimilarityMetric>(
    t: &ControlSet,
    holdout: &[LabeledExample],
    metric: &M,
) -> Result<f64> {
    for g in Group::BOTH {
        if t.group(g).is_empty() {
            return Err(AuditError::EmptySet("control partition"));
        }
        let found = holdout.iter().filter(|e| e.z == g).count();
        if found == 0 {
            return Err(AuditError::InsufficientClassExamples {
                label: g.index() as u8,
                required: 1,
                found,
            });
        }
    }
    // mean_sim[i][j]: mean over held-out group j of sim(x, T_i).
    let mut sums = [[0.0f64; 2]; 2];
    let mut counts = [0usize; 2];
    for e in holdout {
        counts[e.z.index()] += 1;
        for g in Group::BOTH {
            let ts = t.group(g);
            sums[g.index()][e.z.index()] += sim_sum_to_set(&e.x, ts, metric)? / ts.len() as f64;
        }
    }
    let mean = |i: usize, j: usize| sums[i][j] / counts[j] as f64;
    Ok(((mean(0, 0) - mean(0, 1)) + (mean(1, 1) - mean(1, 0))) / 2.0)
}
