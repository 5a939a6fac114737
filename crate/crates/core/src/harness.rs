//! Repeated, seeded evaluation of the estimators on collections with a
//! controlled group-0 fraction `f`.
//!
//! One repetition:
//!
//! 1. draws a labeled data pool (fresh synthetic draws, or a shuffle of a
//!    feature file) and splits it into an auxiliary part and an evaluation
//!    part;
//! 2. builds the random-balanced and adaptive control sets of every
//!    configured size from the auxiliary part (shared by all `f`);
//! 3. for every `f`, samples a collection of the configured size with
//!    `round(f n)` group-0 elements from the evaluation part and runs every
//!    configured method on it.
//!
//! Repetition `r` draws from stream `r` of the master seed (see
//! [`derived_rng`]), so adding repetitions never perturbs earlier ones.
//! Failures inside a cell are recorded with their error kind and do not stop
//! the sweep.

use std::collections::BTreeMap;
use std::fmt;
use std::fs;
use std::path::{Path, PathBuf};
use std::str::FromStr;
use std::time::Instant;

use rand::seq::SliceRandom;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::adaptive::{build_adaptive_control, gamma_of_control, AdaptiveConfig, AuxiliarySet};
use crate::baselines::{iid_measure, sample_random_balanced, sample_random_proportional, ss_st, SamplerConfig, SamplingMode};
use crate::divscore::{divscore, norm_stats, pooled_same, DivScoreConfig};
use crate::error::{AuditError, Result};
use crate::io::read_feature_file;
use crate::rng::derived_rng;
use crate::similarity::{true_disparity, Metric};
use crate::synthgen::{group_zero_count, SyntheticSpec};
use crate::types::{Collection, ControlSet, Group, LabeledExample};

/// Estimators a sweep can run.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SweepMethod {
    DivscoreRandomBalanced,
    DivscoreAdaptive,
    DivscoreRandomProportional,
    Iid,
    SsSt,
}

impl SweepMethod {
    pub const ALL: [SweepMethod; 5] = [
        SweepMethod::DivscoreRandomBalanced,
        SweepMethod::DivscoreAdaptive,
        SweepMethod::DivscoreRandomProportional,
        SweepMethod::Iid,
        SweepMethod::SsSt,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            SweepMethod::DivscoreRandomBalanced => "divscore-random-balanced",
            SweepMethod::DivscoreAdaptive => "divscore-adaptive",
            SweepMethod::DivscoreRandomProportional => "divscore-random-proportional",
            SweepMethod::Iid => "iid",
            SweepMethod::SsSt => "ss-st",
        }
    }
}

impl fmt::Display for SweepMethod {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for SweepMethod {
    type Err = AuditError;

    fn from_str(s: &str) -> Result<Self> {
        SweepMethod::ALL
            .into_iter()
            .find(|m| m.as_str() == s)
            .ok_or_else(|| AuditError::InvalidParameter(format!("unknown sweep method {s:?}")))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DataSource {
    Synthetic(SyntheticSpec),
    File {
        path: PathBuf,
        #[serde(default = "default_delimiter")]
        delimiter: char,
    },
}

fn default_delimiter() -> char {
    ','
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Split {
    pub aux_size: usize,
    pub eval_pool_size: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ControlParams {
    /// Control set size `m`.
    pub size: usize,
    #[serde(default = "default_alpha")]
    pub alpha: f64,
    /// SS-ST batch size.
    #[serde(default = "default_k")]
    pub k: usize,
}

fn default_alpha() -> f64 {
    AdaptiveConfig::ALPHA_IMAGE
}

fn default_k() -> usize {
    crate::baselines::DEFAULT_SS_ST_K
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentConfig {
    pub data_source: DataSource,
    pub split: Split,
    /// Group-0 fractions to evaluate.
    pub sweep: Vec<f64>,
    pub collection_size: usize,
    pub control: ControlParams,
    pub methods: Vec<SweepMethod>,
    pub repetitions: usize,
    pub seed: u64,
    #[serde(default)]
    pub metric: Metric,
    #[serde(default)]
    pub divscore: DivScoreConfig,
}

impl ExperimentConfig {
    pub fn from_json_file<P: AsRef<Path>>(path: P) -> Result<Self> {
        let cfg: ExperimentConfig = serde_json::from_str(&fs::read_to_string(path)?)?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        if self.repetitions == 0 {
            return Err(AuditError::InvalidParameter("repetitions must be at least 1".into()));
        }
        if self.sweep.is_empty() {
            return Err(AuditError::InvalidParameter("sweep needs at least one fraction".into()));
        }
        if let Some(f) = self.sweep.iter().find(|f| !(0.0..=1.0).contains(*f)) {
            return Err(AuditError::InvalidParameter(format!("sweep value {f} outside [0, 1]")));
        }
        if self.collection_size == 0 {
            return Err(AuditError::InvalidParameter("collection_size must be at least 1".into()));
        }
        if self.methods.is_empty() {
            return Err(AuditError::InvalidParameter("no methods configured".into()));
        }
        if self.split.eval_pool_size == 0 {
            return Err(AuditError::InvalidParameter("eval_pool_size must be at least 1".into()));
        }
        Ok(())
    }
}

/// Outcome of one method on one collection.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TrialRecord {
    pub repetition: usize,
    pub f: f64,
    pub control_size: usize,
    pub method: SweepMethod,
    pub true_disparity: Option<f64>,
    pub estimate: Option<f64>,
    /// Error kind when the method failed.
    pub error: Option<String>,
    /// Gamma of the control set estimated from its own pairs.
    pub gamma_hat: Option<f64>,
    /// Held-out separation power of the control set.
    pub gamma_t: Option<f64>,
    pub wall_time_s: f64,
}

/// Aggregate of one `(f, control size, method)` cell over repetitions.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CellSummary {
    pub f: f64,
    pub control_size: usize,
    pub method: SweepMethod,
    /// Repetitions that produced an estimate.
    pub repetitions: usize,
    pub failures: BTreeMap<String, usize>,
    pub mean_estimate: Option<f64>,
    pub std_dev: Option<f64>,
    /// `std_dev / sqrt(repetitions)`; reported as 0 for a single repetition.
    pub std_error: Option<f64>,
    pub mean_true_disparity: Option<f64>,
    pub mean_abs_error: Option<f64>,
    pub mean_gamma_hat: Option<f64>,
    pub mean_gamma_t: Option<f64>,
    pub mean_wall_time_s: f64,
    /// Set when the standard error rests on a single repetition.
    pub single_repetition: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SweepResult {
    pub cells: Vec<CellSummary>,
    pub records: Vec<TrialRecord>,
}

impl SweepResult {
    pub fn cell(&self, f: f64, control_size: usize, method: SweepMethod) -> Option<&CellSummary> {
        self.cells
            .iter()
            .find(|c| c.f == f && c.control_size == control_size && c.method == method)
    }

    pub fn records_for(&self, control_size: usize, method: SweepMethod) -> impl Iterator<Item = &TrialRecord> {
        self.records
            .iter()
            .filter(move |r| r.control_size == control_size && r.method == method)
    }
}

/// Sum of values after sorting, so the result does not depend on the order
/// in which repetitions finished.
fn stable_mean(values: &[f64]) -> Option<f64> {
    if values.is_empty() {
        return None;
    }
    let mut sorted = values.to_vec();
    sorted.sort_by(f64::total_cmp);
    Some(sorted.iter().sum::<f64>() / sorted.len() as f64)
}

fn sample_std_dev(values: &[f64]) -> Option<f64> {
    let mean = stable_mean(values)?;
    if values.len() < 2 {
        return Some(0.0);
    }
    let sq: Vec<f64> = values.iter().map(|v| (v - mean).powi(2)).collect();
    let mut sorted = sq;
    sorted.sort_by(f64::total_cmp);
    Some((sorted.iter().sum::<f64>() / (values.len() - 1) as f64).sqrt())
}

fn summarize(f: f64, control_size: usize, method: SweepMethod, records: &[&TrialRecord]) -> CellSummary {
    let ok: Vec<&&TrialRecord> = records.iter().filter(|r| r.estimate.is_some()).collect();
    let estimates: Vec<f64> = ok.iter().filter_map(|r| r.estimate).collect();
    let truths: Vec<f64> = records.iter().filter_map(|r| r.true_disparity).collect();
    let abs_errors: Vec<f64> = ok
        .iter()
        .filter_map(|r| Some((r.estimate? - r.true_disparity?).abs()))
        .collect();
    let gamma_hat: Vec<f64> = ok.iter().filter_map(|r| r.gamma_hat).collect();
    let gamma_t: Vec<f64> = ok.iter().filter_map(|r| r.gamma_t).collect();
    let times: Vec<f64> = records.iter().map(|r| r.wall_time_s).collect();
    let mut failures = BTreeMap::new();
    for r in records {
        if let Some(e) = &r.error {
            *failures.entry(e.clone()).or_insert(0) += 1;
        }
    }
    let std_dev = sample_std_dev(&estimates);
    CellSummary {
        f,
        control_size,
        method,
        repetitions: estimates.len(),
        failures,
        mean_estimate: stable_mean(&estimates),
        std_dev,
        std_error: std_dev.map(|sd| sd / (estimates.len() as f64).sqrt()),
        mean_true_disparity: stable_mean(&truths),
        mean_abs_error: stable_mean(&abs_errors),
        mean_gamma_hat: stable_mean(&gamma_hat),
        mean_gamma_t: stable_mean(&gamma_t),
        mean_wall_time_s: stable_mean(&times).unwrap_or(0.0),
        single_repetition: estimates.len() == 1,
    }
}

/// Labeled auxiliary and evaluation pools for one repetition.
struct Pools {
    aux: Vec<LabeledExample>,
    eval: [Vec<LabeledExample>; 2],
}

fn split_by_group(examples: Vec<LabeledExample>) -> [Vec<LabeledExample>; 2] {
    let (g0, g1) = examples.into_iter().partition(|e| e.z == Group::Zero);
    [g0, g1]
}

fn draw_pools<R: Rng + ?Sized>(cfg: &ExperimentConfig, file: Option<&[LabeledExample]>, rng: &mut R) -> Result<Pools> {
    let Split { aux_size, eval_pool_size } = cfg.split;
    match (&cfg.data_source, file) {
        (DataSource::Synthetic(spec), _) => {
            let model = spec.build()?;
            let aux = model.sample_labeled(aux_size / 2, aux_size - aux_size / 2, rng);
            let eval = model.sample_labeled(eval_pool_size / 2, eval_pool_size - eval_pool_size / 2, rng);
            Ok(Pools {
                aux,
                eval: split_by_group(eval),
            })
        }
        (DataSource::File { .. }, Some(rows)) => {
            if aux_size + eval_pool_size > rows.len() {
                return Err(AuditError::InsufficientExamples {
                    required: aux_size + eval_pool_size,
                    found: rows.len(),
                });
            }
            let mut shuffled = rows.to_vec();
            shuffled.shuffle(rng);
            let eval = shuffled[aux_size..aux_size + eval_pool_size].to_vec();
            shuffled.truncate(aux_size);
            Ok(Pools {
                aux: shuffled,
                eval: split_by_group(eval),
            })
        }
        (DataSource::File { path, .. }, None) => Err(AuditError::InvalidParameter(format!(
            "feature file {} was not loaded",
            path.display()
        ))),
    }
}

fn draw_collection<R: Rng + ?Sized>(eval: &[Vec<LabeledExample>; 2], n: usize, f: f64, rng: &mut R) -> Result<Collection> {
    let n0 = group_zero_count(n, f)?;
    let mut picked = Vec::with_capacity(n);
    for (g, count) in [(0usize, n0), (1usize, n - n0)] {
        if eval[g].len() < count {
            return Err(AuditError::InsufficientClassExamples {
                label: g as u8,
                required: count,
                found: eval[g].len(),
            });
        }
        picked.extend(
            rand::seq::index::sample(rng, eval[g].len(), count)
                .into_iter()
                .map(|i| eval[g][i].clone()),
        );
    }
    picked.shuffle(rng);
    Collection::from_labeled(picked)
}

/// A prepared control set with its diagnostics, or the error that prevented
/// building it.
struct PreparedControl {
    control: Kinded<ControlSet>,
    gamma_hat: Option<f64>,
    gamma_t: Option<f64>,
}

/// Result whose error is reduced to its [`AuditError::kind`] tag.
type Kinded<T> = std::result::Result<T, &'static str>;

fn kinded<T>(r: Result<T>) -> Kinded<T> {
    r.map_err(|e| e.kind())
}

fn prepare(control: Result<ControlSet>, holdout: &[LabeledExample], metric: &Metric) -> PreparedControl {
    let control = kinded(control.and_then(|t| {
        let stats = norm_stats(&t, metric)?;
        Ok(t.with_stats(stats))
    }));
    let (gamma_hat, gamma_t) = match &control {
        Ok(t) => {
            let stats = t.stats().expect("stats attached above");
            let mu_same = pooled_same(&stats, t.t0().len(), t.t1().len());
            (Some(mu_same - stats.l), gamma_of_control(t, holdout, metric).ok())
        }
        Err(_) => (None, None),
    };
    PreparedControl {
        control,
        gamma_hat,
        gamma_t,
    }
}

fn run_repetition(
    cfg: &ExperimentConfig,
    sizes: &[usize],
    file: Option<&[LabeledExample]>,
    repetition: usize,
    out: &mut Vec<TrialRecord>,
) {
    let metric = cfg.metric;
    let mut rng = derived_rng(cfg.seed, repetition as u64);
    let pools = match draw_pools(cfg, file, &mut rng) {
        Ok(p) => p,
        Err(e) => {
            for &m in sizes {
                for &f in &cfg.sweep {
                    for &method in &cfg.methods {
                        out.push(failed(repetition, f, m, method, None, e.kind()));
                    }
                }
            }
            return;
        }
    };
    let holdout: Vec<LabeledExample> = pools.eval.iter().flatten().cloned().collect();
    let aux_set = kinded(AuxiliarySet::from_labeled(&pools.aux));
    let wants_adaptive = cfg.methods.contains(&SweepMethod::DivscoreAdaptive);

    let mut balanced = Vec::with_capacity(sizes.len());
    let mut adaptive = Vec::with_capacity(sizes.len());
    for &m in sizes {
        let sampler = SamplerConfig {
            size: m,
            mode: SamplingMode::Balanced,
            seed: cfg.seed,
        };
        balanced.push(prepare(sample_random_balanced(&pools.aux, &sampler, &mut rng), &holdout, &metric));
        adaptive.push(wants_adaptive.then(|| match &aux_set {
            Ok(u) => prepare(
                build_adaptive_control(u, &AdaptiveConfig::new(m, cfg.control.alpha), &metric),
                &holdout,
                &metric,
            ),
            Err(kind) => PreparedControl {
                control: Err(kind),
                gamma_hat: None,
                gamma_t: None,
            },
        }));
    }

    for &f in &cfg.sweep {
        let collection = kinded(draw_collection(&pools.eval, cfg.collection_size, f, &mut rng));
        for (si, &m) in sizes.iter().enumerate() {
            let collection = match &collection {
                Ok(c) => c,
                Err(e) => {
                    for &method in &cfg.methods {
                        out.push(failed(repetition, f, m, method, None, e));
                    }
                    continue;
                }
            };
            let truth = collection.hidden_labels().and_then(|l| true_disparity(l).ok());
            let labeled = collection.labeled_examples().unwrap_or_default();
            let proportional = if cfg.methods.iter().any(|m| {
                matches!(m, SweepMethod::DivscoreRandomProportional | SweepMethod::Iid)
            }) {
                let sampler = SamplerConfig {
                    size: m,
                    mode: SamplingMode::Proportional,
                    seed: cfg.seed,
                };
                Some(kinded(sample_random_proportional(&labeled, &sampler, &mut rng)))
            } else {
                None
            };

            for &method in &cfg.methods {
                let start = Instant::now();
                let (outcome, gamma_hat, gamma_t) = match method {
                    SweepMethod::DivscoreRandomBalanced | SweepMethod::DivscoreAdaptive | SweepMethod::SsSt => {
                        let prepared = if method == SweepMethod::DivscoreAdaptive {
                            adaptive[si].as_ref().expect("built when configured")
                        } else {
                            &balanced[si]
                        };
                        let outcome = match &prepared.control {
                            Ok(t) if method == SweepMethod::SsSt => kinded(ss_st(collection, t, &metric, cfg.control.k)),
                            Ok(t) => kinded(divscore(collection, t, &metric, &cfg.divscore)),
                            Err(kind) => Err(*kind),
                        };
                        (outcome, prepared.gamma_hat, prepared.gamma_t)
                    }
                    SweepMethod::DivscoreRandomProportional => match proportional.as_ref().expect("sampled above") {
                        Ok(t) => {
                            let out = kinded(divscore(collection, t, &metric, &cfg.divscore));
                            let gh = out.as_ref().ok().and_then(|r| r.diagnostic("gamma_hat"));
                            (out, gh, None)
                        }
                        Err(kind) => (Err(*kind), None, None),
                    },
                    SweepMethod::Iid => match proportional.as_ref().expect("sampled above") {
                        Ok(t) => (kinded(iid_measure(t)), None, None),
                        Err(kind) => (Err(*kind), None, None),
                    },
                };
                let wall_time_s = start.elapsed().as_secs_f64();
                out.push(match outcome {
                    Ok(report) => TrialRecord {
                        repetition,
                        f,
                        control_size: m,
                        method,
                        true_disparity: truth,
                        estimate: Some(report.estimate),
                        error: None,
                        gamma_hat,
                        gamma_t,
                        wall_time_s,
                    },
                    Err(kind) => TrialRecord {
                        wall_time_s,
                        ..failed(repetition, f, m, method, truth, kind)
                    },
                });
            }
        }
    }
}

fn failed(repetition: usize, f: f64, control_size: usize, method: SweepMethod, truth: Option<f64>, kind: &str) -> TrialRecord {
    TrialRecord {
        repetition,
        f,
        control_size,
        method,
        true_disparity: truth,
        estimate: None,
        error: Some(kind.to_string()),
        gamma_hat: None,
        gamma_t: None,
        wall_time_s: 0.0,
    }
}

fn load_file_rows(cfg: &ExperimentConfig) -> Result<Option<Vec<LabeledExample>>> {
    match &cfg.data_source {
        DataSource::Synthetic(_) => Ok(None),
        DataSource::File { path, delimiter } => {
            let delimiter = u8::try_from(*delimiter)
                .map_err(|_| AuditError::InvalidParameter(format!("delimiter {delimiter:?} is not ASCII")))?;
            Ok(Some(read_feature_file(path, delimiter)?.labeled()?))
        }
    }
}

fn run_cells(cfg: &ExperimentConfig, sizes: &[usize]) -> Result<SweepResult> {
    cfg.validate()?;
    if sizes.is_empty() {
        return Err(AuditError::InvalidParameter("no control sizes given".into()));
    }
    let file = load_file_rows(cfg)?;
    let mut records = Vec::new();
    for repetition in 0..cfg.repetitions {
        run_repetition(cfg, sizes, file.as_deref(), repetition, &mut records);
    }

    let mut cells = Vec::new();
    for &m in sizes {
        for &f in &cfg.sweep {
            for &method in &cfg.methods {
                let group: Vec<&TrialRecord> = records
                    .iter()
                    .filter(|r| r.control_size == m && r.f == f && r.method == method)
                    .collect();
                cells.push(summarize(f, m, method, &group));
            }
        }
    }
    Ok(SweepResult { cells, records })
}

/// Runs every configured method at every fraction in `cfg.sweep` with the
/// configured control size.
pub fn run_sweep(cfg: &ExperimentConfig) -> Result<SweepResult> {
    run_cells(cfg, &[cfg.control.size])
}

/// Like [`run_sweep`], once per control size in `sizes`. Within a repetition
/// all sizes see the same collections, so results can be compared pairwise.
pub fn control_size_sweep(cfg: &ExperimentConfig, sizes: &[usize]) -> Result<SweepResult> {
    run_cells(cfg, sizes)
}

fn fmt_opt(v: Option<f64>) -> String {
    v.map(|x| x.to_string()).unwrap_or_default()
}

/// Long-format results: one row per `(f, control size, method, statistic)`.
/// Contains no timing data, so reruns with the same config are
/// byte-identical.
pub fn results_csv(result: &SweepResult) -> Result<String> {
    let mut wtr = csv::Writer::from_writer(Vec::new());
    wtr.write_record(["f", "control_size", "method", "statistic", "value", "note"])?;
    for c in &result.cells {
        let mut row = |stat: &str, value: String, note: &str| {
            wtr.write_record([
                c.f.to_string().as_str(),
                c.control_size.to_string().as_str(),
                c.method.as_str(),
                stat,
                value.as_str(),
                note,
            ])
        };
        row("repetitions", c.repetitions.to_string(), "")?;
        row("mean_estimate", fmt_opt(c.mean_estimate), "")?;
        row("std_dev", fmt_opt(c.std_dev), "")?;
        row(
            "std_error",
            fmt_opt(c.std_error),
            if c.single_repetition { "single_repetition" } else { "" },
        )?;
        row("true_disparity", fmt_opt(c.mean_true_disparity), "")?;
        row("mean_abs_error", fmt_opt(c.mean_abs_error), "")?;
        row("gamma_hat", fmt_opt(c.mean_gamma_hat), "")?;
        row("gamma_t", fmt_opt(c.mean_gamma_t), "")?;
        for (kind, count) in &c.failures {
            row("failures", count.to_string(), kind)?;
        }
    }
    let bytes = wtr.into_inner().map_err(|e| AuditError::Io(e.into_error()))?;
    Ok(String::from_utf8(bytes).expect("csv output is UTF-8"))
}

fn timings_csv(result: &SweepResult) -> Result<String> {
    let mut wtr = csv::Writer::from_writer(Vec::new());
    wtr.write_record(["f", "control_size", "method", "mean_wall_time_s"])?;
    for c in &result.cells {
        wtr.write_record([
            c.f.to_string(),
            c.control_size.to_string(),
            c.method.to_string(),
            c.mean_wall_time_s.to_string(),
        ])?;
    }
    let bytes = wtr.into_inner().map_err(|e| AuditError::Io(e.into_error()))?;
    Ok(String::from_utf8(bytes).expect("csv output is UTF-8"))
}

#[derive(Debug, Serialize)]
struct Manifest<'a> {
    tool: &'static str,
    version: &'static str,
    config: &'a ExperimentConfig,
    control_sizes: &'a [usize],
    rng: &'static str,
    seed_derivation: &'static str,
    repetition_streams: Vec<u64>,
    failed_trials: usize,
    outputs: [&'static str; 2],
}

/// Writes `results.csv`, `timings.csv` and `manifest.json` into `out_dir`.
pub fn write_outputs(result: &SweepResult, cfg: &ExperimentConfig, control_sizes: &[usize], out_dir: &Path) -> Result<()> {
    fs::create_dir_all(out_dir)?;
    fs::write(out_dir.join("results.csv"), results_csv(result)?)?;
    fs::write(out_dir.join("timings.csv"), timings_csv(result)?)?;
    let manifest = Manifest {
        tool: env!("CARGO_PKG_NAME"),
        version: env!("CARGO_PKG_VERSION"),
        config: cfg,
        control_sizes,
        rng: "ChaCha8",
        seed_derivation: "repetition r uses stream r of ChaCha8 seeded with the master seed",
        repetition_streams: (0..cfg.repetitions as u64).collect(),
        failed_trials: result.records.iter().filter(|r| r.error.is_some()).count(),
        outputs: ["results.csv", "timings.csv"],
    };
    fs::write(out_dir.join("manifest.json"), serde_json::to_string_pretty(&manifest)? + "\n")?;
    Ok(())
}
