//! Command-line front end for `divaudit`.

use std::io::Write;
use std::path::PathBuf;

use anyhow::{bail, Context, Result};
use clap::{Parser, Subcommand, ValueEnum};
use divaudit::harness::{control_size_sweep, run_sweep, write_outputs, ExperimentConfig};
use divaudit::io::{read_feature_file, write_feature_file, FeatureTable};
use divaudit::{
    build_adaptive_control, divscore, generate_collection, iid_measure, lemma1_success_probability, sample_control,
    seeded_rng, ss_st, theorem_delta, true_disparity, AdaptiveConfig, AuxiliarySet, BoundInputs, DisparityReport,
    DivScoreConfig, LogBase, Method, Metric, SamplerConfig, SamplingMode, SyntheticModel, DEFAULT_SS_ST_K,
};

#[derive(Parser, Debug)]
#[command(name = "divaudit", version)]
#[command(about = "Estimate protected-attribute disparity of unlabeled embeddings from a small labeled control set")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Estimate the disparity of a collection
    Audit(AuditArgs),
    /// Build a control set from a labeled auxiliary pool
    BuildControl(BuildControlArgs),
    /// Write a synthetic two-Gaussian collection
    Synth(SynthArgs),
    /// Run a seeded experiment sweep from a JSON config
    Sweep(SweepArgs),
    /// Print concentration bound quantities
    Bounds(BoundsArgs),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
enum OutFormat {
    Json,
    Csv,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
enum ControlMode {
    RandomBalanced,
    RandomProportional,
    Adaptive,
}

#[derive(clap::Args, Debug)]
struct AuditArgs {
    /// Feature file of the collection (labels, if present, are only used to report the true disparity)
    #[arg(long)]
    collection: PathBuf,
    /// Labeled feature file of the control set
    #[arg(long)]
    control: PathBuf,
    #[arg(long, default_value = "cosine1")]
    metric: Metric,
    /// divscore, iid or ss-st
    #[arg(long, default_value = "divscore")]
    method: Method,
    /// SS-ST batch size
    #[arg(long, default_value_t = DEFAULT_SS_ST_K)]
    k: usize,
    /// Clip the estimate to [-1, 1]
    #[arg(long)]
    clip: bool,
    /// Attach delta, additive error and success probability
    #[arg(long)]
    bounds: bool,
    #[arg(long, default_value = "e")]
    log_base: LogBase,
    /// Smallest accepted normalization gap
    #[arg(long, default_value_t = 1e-6)]
    eps_norm: f64,
    #[arg(long, value_enum, default_value_t = OutFormat::Json)]
    out: OutFormat,
    #[arg(long, default_value_t = ',')]
    delimiter: char,
}

#[derive(clap::Args, Debug)]
struct BuildControlArgs {
    /// Labeled feature file to select from
    #[arg(long)]
    aux: PathBuf,
    /// Control set size m
    #[arg(long)]
    size: usize,
    /// Redundancy weight for adaptive selection
    #[arg(long, default_value_t = AdaptiveConfig::ALPHA_IMAGE)]
    alpha: f64,
    #[arg(long, value_enum, default_value_t = ControlMode::Adaptive)]
    mode: ControlMode,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, default_value = "cosine1")]
    metric: Metric,
    /// Output labeled feature file, usable as `audit --control`
    #[arg(long)]
    out: PathBuf,
    #[arg(long, default_value_t = ',')]
    delimiter: char,
}

#[derive(clap::Args, Debug)]
struct SynthArgs {
    #[arg(long)]
    dim: usize,
    /// Angle between the two group centers, in degrees
    #[arg(long)]
    angle: f64,
    #[arg(long)]
    sigma: f64,
    #[arg(long)]
    n: usize,
    /// Fraction of group-0 elements
    #[arg(long)]
    f: f64,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long)]
    out: PathBuf,
    #[arg(long, default_value_t = ',')]
    delimiter: char,
}

#[derive(clap::Args, Debug)]
struct SweepArgs {
    #[arg(long)]
    config: PathBuf,
    #[arg(long)]
    out_dir: PathBuf,
    /// Comma-separated control sizes; runs a control-size sweep instead of the configured size
    #[arg(long, value_delimiter = ',')]
    sizes: Vec<usize>,
}

#[derive(clap::Args, Debug)]
struct BoundsArgs {
    /// Collection size |S|
    #[arg(long)]
    n: usize,
    /// Control set size |T|
    #[arg(long)]
    t: usize,
    #[arg(long)]
    mu_diff: f64,
    #[arg(long)]
    gamma: f64,
    /// Defaults to mu_diff + gamma
    #[arg(long)]
    mu_same: Option<f64>,
    /// Per-element deviation for the single-element probability; defaults to the collection-wide delta
    #[arg(long)]
    delta: Option<f64>,
    #[arg(long, default_value = "e")]
    log_base: LogBase,
}

fn delimiter_byte(c: char) -> Result<u8> {
    if !c.is_ascii() {
        bail!("delimiter must be a single ASCII character, got {c:?}");
    }
    Ok(c as u8)
}

fn audit(args: AuditArgs) -> Result<()> {
    let delim = delimiter_byte(args.delimiter)?;
    let collection = read_feature_file(&args.collection, delim)
        .with_context(|| format!("reading {}", args.collection.display()))?
        .to_collection()?;
    let control = read_feature_file(&args.control, delim)
        .with_context(|| format!("reading {}", args.control.display()))?
        .to_control_set()?;
    let cfg = DivScoreConfig {
        eps_norm: args.eps_norm,
        clip: args.clip,
        bounds: args.bounds,
        log_base: args.log_base,
    };
    let mut report = match args.method {
        Method::Divscore => divscore(&collection, &control, &args.metric, &cfg)?,
        Method::Iid => iid_measure(&control)?,
        Method::SsSt => ss_st(&collection, &control, &args.metric, args.k)?,
        Method::True => bail!("method `true` needs labels only; use divscore, iid or ss-st"),
    };
    if let Some(labels) = collection.hidden_labels() {
        report.diagnostics.insert("true_disparity".into(), true_disparity(labels)?);
    }
    let mut stdout = std::io::stdout().lock();
    match args.out {
        OutFormat::Json => writeln!(stdout, "{}", serde_json::to_string_pretty(&report)?)?,
        OutFormat::Csv => write_report_csv(&mut stdout, &report)?,
    }
    Ok(())
}

fn write_report_csv<W: Write>(mut w: W, report: &DisparityReport) -> Result<()> {
    writeln!(w, "field,value")?;
    writeln!(w, "method,{}", report.method)?;
    writeln!(w, "estimate,{}", report.estimate)?;
    if let Some(stats) = report.norm_stats {
        writeln!(w, "l,{}", stats.l)?;
        writeln!(w, "u0,{}", stats.u0)?;
        writeln!(w, "u1,{}", stats.u1)?;
    }
    if let Some(raw) = report.raw_dhat {
        writeln!(w, "raw_dhat,{raw}")?;
    }
    for (name, value) in &report.diagnostics {
        writeln!(w, "{name},{value}")?;
    }
    Ok(())
}

fn build_control(args: BuildControlArgs) -> Result<()> {
    let delim = delimiter_byte(args.delimiter)?;
    let aux = read_feature_file(&args.aux, delim)
        .with_context(|| format!("reading {}", args.aux.display()))?
        .labeled()?;
    let control = match args.mode {
        ControlMode::Adaptive => build_adaptive_control(
            &AuxiliarySet::from_labeled(&aux)?,
            &AdaptiveConfig::new(args.size, args.alpha),
            &args.metric,
        )?,
        ControlMode::RandomBalanced | ControlMode::RandomProportional => {
            let mode = if args.mode == ControlMode::RandomBalanced {
                SamplingMode::Balanced
            } else {
                SamplingMode::Proportional
            };
            sample_control(
                &aux,
                &SamplerConfig {
                    size: args.size,
                    mode,
                    seed: args.seed,
                },
            )?
        }
    };
    write_feature_file(&args.out, &FeatureTable::from_labeled(&control.to_labeled()), delim)?;
    eprintln!(
        "wrote {} ({} group-0, {} group-1)",
        args.out.display(),
        control.t0().len(),
        control.t1().len()
    );
    Ok(())
}

fn synth(args: SynthArgs) -> Result<()> {
    let delim = delimiter_byte(args.delimiter)?;
    let model = SyntheticModel::from_angle(args.dim, args.angle, args.sigma, args.seed)?;
    let collection = generate_collection(&model, args.n, args.f, &mut seeded_rng(args.seed))?;
    write_feature_file(&args.out, &FeatureTable::from_collection(&collection), delim)?;
    Ok(())
}

fn sweep(args: SweepArgs) -> Result<()> {
    let cfg = ExperimentConfig::from_json_file(&args.config)
        .with_context(|| format!("loading {}", args.config.display()))?;
    let result = if args.sizes.is_empty() {
        run_sweep(&cfg)?
    } else {
        control_size_sweep(&cfg, &args.sizes)?
    };
    write_outputs(&result, &cfg, &args.sizes, &args.out_dir)?;
    let failed = result.records.iter().filter(|r| r.error.is_some()).count();
    eprintln!(
        "{} trials in {} cells ({failed} failed), outputs in {}",
        result.records.len(),
        result.cells.len(),
        args.out_dir.display()
    );
    Ok(())
}

fn bounds(args: BoundsArgs) -> Result<()> {
    let mut inputs = BoundInputs::new(args.n, args.t, args.mu_diff, args.gamma);
    inputs.mu_same = args.mu_same;
    let theorem = theorem_delta(&inputs, args.log_base)?;
    inputs.delta = Some(args.delta.unwrap_or(theorem.delta));
    let lemma = lemma1_success_probability(&inputs)?;
    let out = serde_json::json!({
        "inputs": inputs,
        "mu_same": inputs.mu_same(),
        "log_base": args.log_base,
        "theorem": theorem,
        "lemma": lemma,
    });
    println!("{}", serde_json::to_string_pretty(&out)?);
    Ok(())
}

fn main() -> Result<()> {
    match Cli::parse().command {
        Command::Audit(args) => audit(args),
        Command::BuildControl(args) => build_control(args),
        Command::Synth(args) => synth(args),
        Command::Sweep(args) => sweep(args),
        Command::Bounds(args) => bounds(args),
    }
}
