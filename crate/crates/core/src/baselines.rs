//! Comparison estimators and random control-set samplers.

use std::fmt;
use std::str::FromStr;

use rand::seq::index;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::divscore::{DisparityReport, Method};
use crate::error::{AuditError, Result};
use crate::rng::{seeded_rng, AuditRng};
use crate::similarity::{sim_sum_to_set, SimilarityMetric};
use crate::types::{Collection, ControlSet, Group, LabeledExample};

/// Default SS-ST batch size.
pub const DEFAULT_SS_ST_K: usize = 5;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SamplingMode {
    /// `m / 2` uniform draws from each group of a labeled pool.
    Balanced,
    /// `m` uniform draws from the collection itself.
    Proportional,
}

impl fmt::Display for SamplingMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            SamplingMode::Balanced => "balanced",
            SamplingMode::Proportional => "proportional",
        })
    }
}

impl FromStr for SamplingMode {
    type Err = AuditError;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "balanced" | "random-balanced" => Ok(SamplingMode::Balanced),
            "proportional" | "random-proportional" => Ok(SamplingMode::Proportional),
            other => Err(AuditError::InvalidParameter(format!("unknown sampling mode {other:?}"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct SamplerConfig {
    pub size: usize,
    pub mode: SamplingMode,
    pub seed: u64,
}

impl SamplerConfig {
    pub fn rng(&self) -> AuditRng {
        seeded_rng(self.seed)
    }
}

/// Samples a control set according to `cfg.mode`, seeding the generator from
/// `cfg.seed`.
pub fn sample_control(pool: &[LabeledExample], cfg: &SamplerConfig) -> Result<ControlSet> {
    let mut rng = cfg.rng();
    match cfg.mode {
        SamplingMode::Balanced => sample_random_balanced(pool, cfg, &mut rng),
        SamplingMode::Proportional => sample_random_proportional(pool, cfg, &mut rng),
    }
}

/// Sorted indices of `amount` distinct positions out of `len`.
fn draw_sorted<R: Rng + ?Sized>(rng: &mut R, len: usize, amount: usize) -> Vec<usize> {
    let mut picked = index::sample(rng, len, amount).into_vec();
    picked.sort_unstable();
    picked
}

/// `m / 2` draws without replacement from each group of `pool`. Members keep
/// their pool order.
pub fn sample_random_balanced<R: Rng + ?Sized>(
    pool: &[LabeledExample],
    cfg: &SamplerConfig,
    rng: &mut R,
) -> Result<ControlSet> {
    if cfg.size < 2 || !cfg.size.is_multiple_of(2) {
        return Err(AuditError::InvalidParameter(format!(
            "balanced control size must be even and at least 2, got {}",
            cfg.size
        )));
    }
    let half = cfg.size / 2;
    let mut parts = Vec::with_capacity(2);
    for g in Group::BOTH {
        let members: Vec<&LabeledExample> = pool.iter().filter(|e| e.z == g).collect();
        if members.len() < half {
            return Err(AuditError::InsufficientClassExamples {
                label: g.index() as u8,
                required: half,
                found: members.len(),
            });
        }
        parts.push(
            draw_sorted(rng, members.len(), half)
                .into_iter()
                .map(|i| members[i].x.clone())
                .collect(),
        );
    }
    let t1 = parts.pop().unwrap_or_default();
    let t0 = parts.pop().unwrap_or_default();
    ControlSet::new(t0, t1)
}

/// `m` draws without replacement from the labeled collection, split by
/// label. Either partition may come out empty.
pub fn sample_random_proportional<R: Rng + ?Sized>(
    collection_labeled: &[LabeledExample],
    cfg: &SamplerConfig,
    rng: &mut R,
) -> Result<ControlSet> {
    if cfg.size == 0 || cfg.size > collection_labeled.len() {
        return Err(AuditError::InsufficientExamples {
            required: cfg.size.max(1),
            found: collection_labeled.len(),
        });
    }
    let picked: Vec<LabeledExample> = draw_sorted(rng, collection_labeled.len(), cfg.size)
        .into_iter()
        .map(|i| collection_labeled[i].clone())
        .collect();
    ControlSet::from_labeled(&picked)
}

/// Disparity of the control set itself: `(|T_0| - |T_1|) / |T|`.
pub fn iid_measure(t: &ControlSet) -> Result<DisparityReport> {
    if t.is_empty() {
        return Err(AuditError::EmptySet("control set"));
    }
    let n0 = t.t0().len() as f64;
    let n1 = t.t1().len() as f64;
    let mut report = DisparityReport::simple(Method::Iid, (n0 - n1) / (n0 + n1));
    report.diagnostics.insert("t0".into(), n0);
    report.diagnostics.insert("t1".into(), n1);
    Ok(report)
}

/// Semi-supervised self-training baseline.
///
/// Each round scores every remaining element by
/// `s(x) = sim(x, T_0) - sim(x, T_1)`, removes the `k` elements with the
/// largest `|s(x)|` (ties to the earliest element), counts them towards group
/// 0 when `s(x) > 0` and group 1 when `s(x) < 0`, and adds them to the
/// matching control partition. Elements with `s(x) = 0` are removed without
/// being counted or absorbed. The result is `(n_0 - n_1) / N` for the
/// original collection size `N`.
///
/// Per-element sums against the control partitions are updated as elements
/// are absorbed, so each round costs `O(|S| k)` similarity evaluations.
pub fn ss_st<M: SimilarityMetric>(
    s: &Collection,
    t: &ControlSet,
    metric: &M,
    k: usize,
) -> Result<DisparityReport> {
    if k == 0 {
        return Err(AuditError::InvalidParameter("k must be positive".into()));
    }
    for g in Group::BOTH {
        if t.group(g).is_empty() {
            return Err(AuditError::EmptySet("control partition"));
        }
    }
    if let (Some(ds), Some(dt)) = (s.dim(), t.dim()) {
        if ds != dt {
            return Err(AuditError::DimensionMismatch {
                expected: dt,
                found: ds,
            });
        }
    }
    let xs = s.elements();
    let n = xs.len();

    let mut sums = Vec::with_capacity(n);
    for x in xs {
        sums.push([sim_sum_to_set(x, t.t0(), metric)?, sim_sum_to_set(x, t.t1(), metric)?]);
    }
    let mut sizes = [t.t0().len() as f64, t.t1().len() as f64];
    let mut remaining: Vec<usize> = (0..n).collect();
    let mut counts = [0usize; 2];
    let mut unassigned = 0usize;
    let mut iterations = 0usize;
    let mut scored: Vec<(usize, f64)> = Vec::with_capacity(n);
    let mut absorbed = vec![false; n];

    while !remaining.is_empty() {
        iterations += 1;
        scored.clear();
        scored.extend(
            remaining
                .iter()
                .map(|&i| (i, sums[i][0] / sizes[0] - sums[i][1] / sizes[1])),
        );
        // `remaining` stays in input order, so comparing indices breaks ties
        // towards the earliest element.
        let by_confidence =
            |a: &(usize, f64), b: &(usize, f64)| b.1.abs().total_cmp(&a.1.abs()).then(a.0.cmp(&b.0));
        if scored.len() > k {
            scored.select_nth_unstable_by(k - 1, by_confidence);
            scored.truncate(k);
        }
        scored.sort_unstable_by(by_confidence);

        let mut batch: [Vec<usize>; 2] = [Vec::new(), Vec::new()];
        for &(i, score) in &scored {
            absorbed[i] = true;
            if score > 0.0 {
                batch[0].push(i);
            } else if score < 0.0 {
                batch[1].push(i);
            } else {
                unassigned += 1;
            }
        }
        counts[0] += batch[0].len();
        counts[1] += batch[1].len();
        remaining.retain(|&i| !absorbed[i]);

        for g in 0..2 {
            if batch[g].is_empty() {
                continue;
            }
            for &i in &remaining {
                let mut add = 0.0;
                for &j in &batch[g] {
                    add += metric.similarity(&xs[i], &xs[j])?;
                }
                sums[i][g] += add;
            }
            sizes[g] += batch[g].len() as f64;
        }
    }

    let estimate = if n == 0 {
        0.0
    } else {
        (counts[0] as f64 - counts[1] as f64) / n as f64
    };
    let mut report = DisparityReport::simple(Method::SsSt, estimate);
    report.diagnostics.insert("iterations".into(), iterations as f64);
    report.diagnostics.insert("n0".into(), counts[0] as f64);
    report.diagnostics.insert("n1".into(), counts[1] as f64);
    report.diagnostics.insert("unassigned".into(), unassigned as f64);
    report.diagnostics.insert("k".into(), k as f64);
    Ok(report)
}
