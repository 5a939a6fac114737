//! The proxy disparity estimator and its concentration bounds.
//!
//! The estimator compares the mean similarity of the collection to each
//! control partition and rescales both by the partition's own within-group
//! and cross-group similarity levels:
//!
//! ```text
//! s_i = (sim(S, T_i) - l) / (u_i - l),    estimate = s_0 - s_1
//! ```

use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{AuditError, Result};
use crate::similarity::{sim_sum_to_set, SimilarityMetric};
use crate::types::{validate_removals, Collection, ControlSet, FeatureVector, Group, NormStats};

/// Which estimator produced a report.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Method {
    Divscore,
    Iid,
    SsSt,
    True,
}

impl Method {
    pub fn as_str(self) -> &'static str {
        match self {
            Method::Divscore => "divscore",
            Method::Iid => "iid",
            Method::SsSt => "ss_st",
            Method::True => "true",
        }
    }
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Method {
    type Err = AuditError;

    fn from_str(s: &str) -> Result<Method> {
        match s {
            "divscore" => Ok(Method::Divscore),
            "iid" => Ok(Method::Iid),
            "ss-st" | "ss_st" => Ok(Method::SsSt),
            "true" => Ok(Method::True),
            other => Err(AuditError::InvalidParameter(format!("unknown method {other:?}"))),
        }
    }
}

/// Base of the logarithm in the control-size bound.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum LogBase {
    #[default]
    Natural,
    Two,
    Ten,
}

impl LogBase {
    pub fn log(self, x: f64) -> f64 {
        match self {
            LogBase::Natural => x.ln(),
            LogBase::Two => x.log2(),
            LogBase::Ten => x.log10(),
        }
    }
}

impl FromStr for LogBase {
    type Err = AuditError;

    fn from_str(s: &str) -> Result<LogBase> {
        match s {
            "e" | "natural" | "ln" => Ok(LogBase::Natural),
            "2" | "two" => Ok(LogBase::Two),
            "10" | "ten" => Ok(LogBase::Ten),
            other => Err(AuditError::InvalidParameter(format!("unknown log base {other:?}"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct DivScoreConfig {
    /// Smallest accepted `|u_i - l|`.
    pub eps_norm: f64,
    /// Clip the estimate to `[-1, 1]`.
    pub clip: bool,
    /// Attach the control-size bound (`delta`, additive error, success
    /// probability) to the diagnostics.
    pub bounds: bool,
    pub log_base: LogBase,
}

impl Default for DivScoreConfig {
    fn default() -> Self {
        DivScoreConfig {
            eps_norm: 1e-6,
            clip: false,
            bounds: false,
            log_base: LogBase::Natural,
        }
    }
}

/// Sums kept in a divscore report so that the collection can be edited
/// without rescanning it.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RunningSums {
    pub n: usize,
    pub t0_len: usize,
    pub t1_len: usize,
    /// Sum of `sim(x, y)` over `x ∈ S`, `y ∈ T_0`.
    pub sum_t0: f64,
    pub sum_t1: f64,
    pub config: DivScoreConfig,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DisparityReport {
    pub estimate: f64,
    pub method: Method,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub norm_stats: Option<NormStats>,
    /// `sim(S, T_0) - sim(S, T_1)` before normalization.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub raw_dhat: Option<f64>,
    pub diagnostics: BTreeMap<String, f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub running: Option<RunningSums>,
}

impl DisparityReport {
    pub(crate) fn simple(method: Method, estimate: f64) -> Self {
        DisparityReport {
            estimate,
            method,
            norm_stats: None,
            raw_dhat: None,
            diagnostics: BTreeMap::new(),
            running: None,
        }
    }

    pub fn diagnostic(&self, name: &str) -> Option<f64> {
        self.diagnostics.get(name).copied()
    }
}

fn ordered_within_mean<M: SimilarityMetric>(ts: &[FeatureVector], metric: &M) -> Result<f64> {
    let mut sum = 0.0;
    for (i, x) in ts.iter().enumerate() {
        for (j, y) in ts.iter().enumerate() {
            if i != j {
                sum += metric.similarity(x, y)?;
            }
        }
    }
    Ok(sum / (ts.len() * (ts.len() - 1)) as f64)
}

/// Cross-group mean `l` and within-group means `u0`, `u1` (self-pairs
/// excluded) of a control set.
pub fn norm_stats<M: SimilarityMetric>(t: &ControlSet, metric: &M) -> Result<NormStats> {
    for g in Group::BOTH {
        let size = t.group(g).len();
        if size < 2 {
            return Err(AuditError::GroupTooSmall {
                group: g.index() as u8,
                size,
            });
        }
    }
    let mut cross = 0.0;
    for x in t.t0() {
        cross += sim_sum_to_set(x, t.t1(), metric)?;
    }
    Ok(NormStats {
        l: cross / (t.t0().len() * t.t1().len()) as f64,
        u0: ordered_within_mean(t.t0(), metric)?,
        u1: ordered_within_mean(t.t1(), metric)?,
    })
}

/// Pooled within-group mean recovered from `u0`, `u1` and the partition sizes.
pub(crate) fn pooled_same(stats: &NormStats, t0_len: usize, t1_len: usize) -> f64 {
    let p0 = (t0_len * (t0_len - 1)) as f64;
    let p1 = (t1_len * (t1_len - 1)) as f64;
    (stats.u0 * p0 + stats.u1 * p1) / (p0 + p1)
}

fn finish(stats: NormStats, running: RunningSums) -> Result<DisparityReport> {
    let cfg = running.config;
    let mu_same = pooled_same(&stats, running.t0_len, running.t1_len);
    let gamma_hat = mu_same - stats.l;
    for g in Group::BOTH {
        let gap = stats.u(g) - stats.l;
        if gap.abs() < cfg.eps_norm {
            return Err(AuditError::DegenerateNormalization {
                group: g.index() as u8,
                gap,
                gamma_hat,
            });
        }
    }
    if running.n == 0 {
        return Err(AuditError::EmptySet("collection"));
    }
    let sim0 = running.sum_t0 / (running.n * running.t0_len) as f64;
    let sim1 = running.sum_t1 / (running.n * running.t1_len) as f64;
    let s0 = (sim0 - stats.l) / (stats.u0 - stats.l);
    let s1 = (sim1 - stats.l) / (stats.u1 - stats.l);
    let unclipped = s0 - s1;

    let mut diagnostics = BTreeMap::new();
    diagnostics.insert("gamma_hat".to_string(), gamma_hat);
    diagnostics.insert("mu_same_hat".to_string(), mu_same);
    diagnostics.insert("mu_diff_hat".to_string(), stats.l);
    diagnostics.insert("sim_s_t0".to_string(), sim0);
    diagnostics.insert("sim_s_t1".to_string(), sim1);
    diagnostics.insert("s0".to_string(), s0);
    diagnostics.insert("s1".to_string(), s1);
    if cfg.clip {
        diagnostics.insert("unclipped_estimate".to_string(), unclipped);
    }
    if cfg.bounds {
        let inputs = BoundInputs {
            n: running.n,
            t: running.t0_len + running.t1_len,
            mu_diff: stats.l,
            gamma: gamma_hat,
            mu_same: Some(mu_same),
            delta: None,
        };
        // Bounds need a positive gamma estimate; otherwise they are omitted.
        if let Ok(b) = theorem_delta(&inputs, cfg.log_base) {
            diagnostics.insert("delta".to_string(), b.delta);
            diagnostics.insert("additive_error".to_string(), b.additive_error);
            diagnostics.insert("success_probability".to_string(), b.success_probability);
        }
    }

    Ok(DisparityReport {
        estimate: if cfg.clip { unclipped.clamp(-1.0, 1.0) } else { unclipped },
        method: Method::Divscore,
        norm_stats: Some(stats),
        raw_dhat: Some(sim0 - sim1),
        diagnostics,
        running: Some(running),
    })
}

/// Estimates the disparity of `s` from the control set `t`.
///
/// Cached normalization statistics on `t` are reused when present.
pub fn divscore<M: SimilarityMetric>(
    s: &Collection,
    t: &ControlSet,
    metric: &M,
    cfg: &DivScoreConfig,
) -> Result<DisparityReport> {
    if s.is_empty() {
        return Err(AuditError::EmptySet("collection"));
    }
    if let (Some(ds), Some(dt)) = (s.dim(), t.dim()) {
        if ds != dt {
            return Err(AuditError::DimensionMismatch {
                expected: dt,
                found: ds,
            });
        }
    }
    let stats = match t.stats() {
        Some(stats) => stats,
        None => norm_stats(t, metric)?,
    };
    let mut sum_t0 = 0.0;
    let mut sum_t1 = 0.0;
    for x in s.elements() {
        sum_t0 += sim_sum_to_set(x, t.t0(), metric)?;
        sum_t1 += sim_sum_to_set(x, t.t1(), metric)?;
    }
    finish(
        stats,
        RunningSums {
            n: s.len(),
            t0_len: t.t0().len(),
            t1_len: t.t1().len(),
            sum_t0,
            sum_t1,
            config: *cfg,
        },
    )
}

/// Updates a divscore report after removing `removed_indices` (indices into
/// `s`) and appending `added`, touching only the changed elements.
///
/// The result matches `divscore` on `s.with_update(added, removed_indices)`.
pub fn incremental_update<M: SimilarityMetric>(
    report: &DisparityReport,
    added: &[FeatureVector],
    removed_indices: &[usize],
    s: &Collection,
    t: &ControlSet,
    metric: &M,
) -> Result<DisparityReport> {
    let (Some(stats), Some(mut running)) = (report.norm_stats, report.running) else {
        return Err(AuditError::InvalidParameter(
            "report carries no running sums (not a divscore report)".into(),
        ));
    };
    if running.n != s.len() || running.t0_len != t.t0().len() || running.t1_len != t.t1().len() {
        return Err(AuditError::InvalidParameter(
            "report does not match the given collection and control set".into(),
        ));
    }
    let removed = validate_removals(removed_indices, s.len())?;
    for &i in &removed {
        let x = &s.elements()[i];
        running.sum_t0 -= sim_sum_to_set(x, t.t0(), metric)?;
        running.sum_t1 -= sim_sum_to_set(x, t.t1(), metric)?;
    }
    for x in added {
        running.sum_t0 += sim_sum_to_set(x, t.t0(), metric)?;
        running.sum_t1 += sim_sum_to_set(x, t.t1(), metric)?;
    }
    running.n = running.n - removed.len() + added.len();
    finish(stats, running)
}

/// Parameters of the concentration bounds.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BoundInputs {
    /// Collection size.
    pub n: usize,
    /// Control set size.
    pub t: usize,
    pub mu_diff: f64,
    pub gamma: f64,
    /// Defaults to `mu_diff + gamma`.
    pub mu_same: Option<f64>,
    pub delta: Option<f64>,
}

impl BoundInputs {
    pub fn new(n: usize, t: usize, mu_diff: f64, gamma: f64) -> Self {
        BoundInputs {
            n,
            t,
            mu_diff,
            gamma,
            mu_same: None,
            delta: None,
        }
    }

    fn validate(&self) -> Result<()> {
        if self.n < 1 {
            return Err(AuditError::InvalidParameter("collection size must be >= 1".into()));
        }
        if self.t < 2 {
            return Err(AuditError::InvalidParameter("control size must be >= 2".into()));
        }
        if !(self.mu_diff > 0.0 && self.mu_diff.is_finite()) {
            return Err(AuditError::InvalidParameter(format!(
                "mu_diff must be positive, got {}",
                self.mu_diff
            )));
        }
        if !(self.gamma > 0.0 && self.gamma.is_finite()) {
            return Err(AuditError::InvalidParameter(format!(
                "gamma must be positive, got {}",
                self.gamma
            )));
        }
        Ok(())
    }

    pub fn mu_same(&self) -> f64 {
        self.mu_same.unwrap_or(self.mu_diff + self.gamma)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SuccessProbability {
    /// The closed form as written; can be negative for small `delta`.
    pub raw: f64,
    /// `raw` clamped to `[0, 1]`.
    pub clamped: f64,
}

/// Probability that a single element's similarity gap to the two control
/// partitions lands within `delta` of its expectation:
/// `1 - 2 exp(-δ² μ_diff |T| / 6) (1 + exp(-δ² γ |T| / 6))`.
pub fn lemma1_success_probability(inputs: &BoundInputs) -> Result<SuccessProbability> {
    inputs.validate()?;
    let delta = inputs
        .delta
        .ok_or_else(|| AuditError::InvalidParameter("delta is required".into()))?;
    if delta.is_nan() || delta < 0.0 {
        return Err(AuditError::InvalidParameter(format!(
            "delta must be nonnegative, got {delta}"
        )));
    }
    let t = inputs.t as f64;
    let d2 = delta * delta;
    let raw = 1.0 - 2.0 * (-d2 * inputs.mu_diff * t / 6.0).exp() * (1.0 + (-d2 * inputs.gamma * t / 6.0).exp());
    Ok(SuccessProbability {
        raw,
        clamped: raw.clamp(0.0, 1.0),
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TheoremBound {
    pub delta: f64,
    /// Half-width of the interval around the normalized estimate that
    /// contains the true disparity.
    pub additive_error: f64,
    pub success_probability: f64,
}

/// Collection-wide bound: `δ = sqrt(6 log(20|S|) / (|T| min(μ_diff, γ)))`.
///
/// The success probability is `1 - 2|S| e^{-L} (1 + e^{-L})` with
/// `L = log(20|S|)`, which for the natural log is `0.9 - 1/(200|S|)`.
pub fn theorem_delta(inputs: &BoundInputs, base: LogBase) -> Result<TheoremBound> {
    inputs.validate()?;
    let n = inputs.n as f64;
    let log_term = base.log(20.0 * n);
    let delta = (6.0 * log_term / (inputs.t as f64 * inputs.mu_diff.min(inputs.gamma))).sqrt();
    let mu_same = inputs.mu_same();
    if mu_same.is_nan() || mu_same <= inputs.mu_diff {
        return Err(AuditError::InvalidParameter(format!(
            "mu_same ({mu_same}) must exceed mu_diff ({})",
            inputs.mu_diff
        )));
    }
    let additive_error = delta * (mu_same + inputs.mu_diff) / (mu_same - inputs.mu_diff);
    let tail = (-log_term).exp();
    let success_probability = 1.0 - 2.0 * n * tail * (1.0 + tail);
    Ok(TheoremBound {
        delta,
        additive_error,
        success_probability,
    })
}
