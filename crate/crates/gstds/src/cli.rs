//! Command-line interface.
//!
//! Exit status: 0 on success (including `--help`), 1 on usage errors, 2 on
//! runtime errors.

use std::error::Error;
use std::ffi::OsString;
use std::io::Write as _;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use gstds_core::data::partition_batches;
use gstds_core::learner::{train_reference_probe, ProbeConfig};
use gstds_core::rng::{self, Domain};
use gstds_core::schedule::{build_schedule, calibrate_sigmoid, PolicyKind, RatioTargets, DEFAULT_STEEPNESS_SCALE};
use gstds_core::selection::{compute_weights, full_select, select_batch, ScoredBatch, WeightsMode};
use gstds_core::spectral::score_batch;
use gstds_core::train::{Method, SelectionRecord};

use crate::config::ExperimentConfig;
use crate::export;
use crate::format::{load_featureset, save_featureset, write_output, Format};
use crate::harness::{self, Comparison};
use crate::synth::{self, SynthParams};

type DynResult<T> = Result<T, Box<dyn Error + Send + Sync>>;

#[derive(Debug, Parser)]
#[command(name = "gstds", version, about = "Spectral batch selection: schedules, selection, training and comparisons")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Print a filter-ratio schedule as `step,ratio` CSV
    Schedule(ScheduleArgs),
    /// Fit the sigmoid schedule to mean/max/min targets and print its parameters
    Calibrate(CalibrateArgs),
    /// Score and select every batch of a feature file once
    Select(SelectArgs),
    /// Train one method on one seed and write its reports
    Train(TrainArgs),
    /// Run every configured method on every configured seed
    Compare(CompareArgs),
    /// Re-export a saved report.json as JSON or per-epoch CSV
    Report(ReportArgs),
    /// Generate a synthetic Gaussian-cluster feature file
    Synth(SynthArgs),
}

#[derive(Debug, Args)]
pub struct ConfigArgs {
    /// Experiment config file (INI)
    #[arg(long, value_name = "PATH")]
    pub config: Option<PathBuf>,
    /// Override a config value, e.g. `--set train.epochs=10`; repeatable
    #[arg(long = "set", value_name = "SECTION.KEY=VALUE")]
    pub overrides: Vec<String>,
}

impl ConfigArgs {
    fn load(&self) -> DynResult<ExperimentConfig> {
        let mut cfg = match &self.config {
            Some(p) => ExperimentConfig::load(p)?,
            None => ExperimentConfig::default(),
        };
        for o in &self.overrides {
            cfg.apply_override(o)?;
        }
        Ok(cfg)
    }
}

#[derive(Debug, Args)]
pub struct ScheduleArgs {
    #[command(flatten)]
    pub config: ConfigArgs,
    /// constant, sigmoid, sinc, sinusoid, gamma, aimd_mellow or aimd_aggressive
    #[arg(long)]
    pub policy: Option<PolicyKind>,
    /// Target mean ratio
    #[arg(long)]
    pub mean: Option<f64>,
    /// Upper ratio bound
    #[arg(long)]
    pub max: Option<f64>,
    /// Lower ratio bound
    #[arg(long)]
    pub min: Option<f64>,
    /// Total number of steps
    #[arg(long, default_value_t = 1000)]
    pub steps: usize,
    /// Sigmoid steepness scale; k = scale / steps
    #[arg(long)]
    pub steepness: Option<f64>,
    /// Output file, `-` for stdout
    #[arg(long, default_value = "-")]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct CalibrateArgs {
    #[arg(long, default_value_t = 0.3)]
    pub mean: f64,
    #[arg(long, default_value_t = 0.88)]
    pub max: f64,
    #[arg(long, default_value_t = 0.18)]
    pub min: f64,
    /// Total number of steps
    #[arg(long, default_value_t = 1000)]
    pub steps: usize,
    /// Sigmoid steepness scale; k = scale / steps
    #[arg(long, default_value_t = DEFAULT_STEEPNESS_SCALE)]
    pub steepness: f64,
    /// Output file, `-` for stdout
    #[arg(long, default_value = "-")]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct SelectArgs {
    /// Feature file (binary container or CSV)
    #[arg(long, value_name = "PATH")]
    pub features: PathBuf,
    /// Input format; guessed from the extension when omitted
    #[arg(long)]
    pub format: Option<Format>,
    #[arg(long, default_value_t = 64)]
    pub batch_size: usize,
    /// Filter ratio in (0, 1]
    #[arg(long, default_value_t = 0.3)]
    pub ratio: f64,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// inverse_ref_loss or abs_fiedler
    #[arg(long, default_value_t = WeightsMode::InverseRefLoss)]
    pub weights_mode: WeightsMode,
    #[arg(long, default_value_t = gstds_core::selection::DEFAULT_EPSILON)]
    pub epsilon: f64,
    /// Zero out negative similarities before building the Laplacian
    #[arg(long)]
    pub clamp_negative: bool,
    /// Also write similarity, Laplacian and Fiedler vector of every batch
    #[arg(long, value_name = "PATH")]
    pub dump_spectral: Option<PathBuf>,
    /// Output JSONL file, `-` for stdout
    #[arg(long, default_value = "-")]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct TrainArgs {
    #[command(flatten)]
    pub config: ConfigArgs,
    /// standard, gstds or random_filter
    #[arg(long, default_value_t = Method::Gstds)]
    pub method: Method,
    /// Seed; defaults to `train.seed` from the config
    #[arg(long)]
    pub seed: Option<u64>,
    /// Output directory
    #[arg(long, default_value = "out")]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct CompareArgs {
    #[command(flatten)]
    pub config: ConfigArgs,
    /// Comma-separated seeds; overrides `harness.seeds`
    #[arg(long, value_delimiter = ',')]
    pub seeds: Vec<u64>,
    /// Also write 2-D projections of every seed's first batch
    #[arg(long)]
    pub with_projection: bool,
    /// Output directory
    #[arg(long, default_value = "out")]
    pub out: PathBuf,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, clap::ValueEnum)]
pub enum ReportFormat {
    Json,
    Csv,
}

#[derive(Debug, Args)]
pub struct ReportArgs {
    /// A report.json written by `train` or `compare`
    #[arg(long, value_name = "PATH")]
    pub input: PathBuf,
    #[arg(long, value_enum, default_value_t = ReportFormat::Json)]
    pub format: ReportFormat,
    /// Output file, `-` for stdout
    #[arg(long, default_value = "-")]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct SynthArgs {
    #[arg(long, default_value_t = 20)]
    pub classes: u32,
    #[arg(long, default_value_t = 300)]
    pub per_class: usize,
    #[arg(long, default_value_t = 64)]
    pub dim: usize,
    /// Scale of the class means
    #[arg(long, default_value_t = 3.0)]
    pub separation: f64,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Output format; guessed from the extension when omitted
    #[arg(long)]
    pub format: Option<Format>,
    #[arg(long, value_name = "PATH")]
    pub out: PathBuf,
}

/// Parses `args` (including the program name) and runs the subcommand.
pub fn main_with<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { 1 } else { 0 };
        }
    };
    match run(cli.command) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e}");
            2
        }
    }
}

fn run(command: Command) -> DynResult<()> {
    match command {
        Command::Schedule(a) => schedule(a),
        Command::Calibrate(a) => calibrate(a),
        Command::Select(a) => select(a),
        Command::Train(a) => train(a),
        Command::Compare(a) => compare(a),
        Command::Report(a) => report(a),
        Command::Synth(a) => synth_cmd(a),
    }
}

fn schedule(a: ScheduleArgs) -> DynResult<()> {
    let mut cfg = a.config.load()?.schedule;
    if let Some(p) = a.policy {
        cfg.policy = p;
    }
    cfg.mean_target = a.mean.unwrap_or(cfg.mean_target);
    cfg.max_target = a.max.unwrap_or(cfg.max_target);
    cfg.min_target = a.min.unwrap_or(cfg.min_target);
    cfg.steepness_scale = a.steepness.unwrap_or(cfg.steepness_scale);
    let policy = cfg.policy(a.steps)?;
    if policy.is_reactive() {
        eprintln!("warning: {} reacts to validation loss; printing its starting ratio", policy.kind());
    }
    let s = build_schedule(policy, 1, a.steps)?;
    let mut out = String::from("step,ratio\n");
    for (i, r) in s.values.iter().enumerate() {
        out.push_str(&format!("{i},{r}\n"));
    }
    write_output(&a.out, out.as_bytes())?;
    Ok(())
}

fn calibrate(a: CalibrateArgs) -> DynResult<()> {
    let targets = RatioTargets { mean: a.mean, max: a.max, min: a.min };
    let p = calibrate_sigmoid(targets, a.steps, a.steepness)?;
    let last = p.eval((a.steps - 1) as f64);
    let summary = serde_json::json!({
        "tool": "gstds",
        "version": env!("CARGO_PKG_VERSION"),
        "targets": targets,
        "steps": a.steps,
        "steepness_scale": a.steepness,
        "params": p,
        "discrete_mean": p.discrete_mean(a.steps),
        "first": p.eval(0.0),
        "last": last,
        "saturation_gap": (a.max - last) / (a.max - a.min),
    });
    let mut text = serde_json::to_string_pretty(&summary)?;
    text.push('\n');
    write_output(&a.out, text.as_bytes())?;
    Ok(())
}

fn select(a: SelectArgs) -> DynResult<()> {
    let format = a.format.unwrap_or_else(|| Format::from_path(&a.features));
    let fs = load_featureset(&a.features, format)?;
    if !(a.ratio > 0.0 && a.ratio <= 1.0) {
        return Err(format!("ratio must lie in (0, 1], got {}", a.ratio).into());
    }
    let losses: Option<Vec<f64>> = match (fs.ref_losses(), a.weights_mode) {
        (Some(l), _) => Some(l.iter().map(|&v| v as f64).collect()),
        (None, WeightsMode::InverseRefLoss) => {
            Some(train_reference_probe(&fs, a.seed, ProbeConfig::default())?.losses(&fs)?)
        }
        (None, WeightsMode::AbsFiedler) => None,
    };
    let plan = partition_batches(&fs, a.batch_size.min(fs.len()), a.seed)?;
    let mut lines = Vec::new();
    let mut dump = String::new();
    for (b, members) in plan.batches.iter().enumerate() {
        let stream = rng::stream_id(0, b as u64);
        let selection = if members.len() < 2 {
            let mut s = full_select(b, members);
            s.ratio_applied = a.ratio;
            s
        } else {
            let spectrum = score_batch(&fs.gather(members), fs.dim(), a.clamp_negative)?;
            let batch_losses: Option<Vec<f64>> = losses.as_ref().map(|l| members.iter().map(|&i| l[i]).collect());
            let weights = compute_weights(a.weights_mode, batch_losses.as_deref(), &spectrum.scores, a.epsilon)?;
            if a.dump_spectral.is_some() {
                let ids: Vec<u64> = members.iter().map(|&i| fs.ids()[i]).collect();
                dump.push_str(&export::spectral_dump(b, &ids, &spectrum));
            }
            let scored = ScoredBatch {
                index: b,
                members,
                scores: &spectrum.scores,
                ranking: &spectrum.ranking,
                weights: &weights,
            };
            let mut r = rng::stream(a.seed, Domain::Selection, 0, b as u64);
            select_batch(scored, a.ratio, &mut r, stream)?
        };
        let ids = |v: &[usize]| v.iter().map(|&i| fs.ids()[i]).collect();
        lines.push(SelectionRecord {
            method: Method::Gstds,
            seed: a.seed,
            epoch: 0,
            batch: b,
            step: b,
            ratio: selection.ratio_applied,
            n: selection.n_selected,
            batch_ids: ids(members),
            exploit_ids: ids(&selection.exploit),
            explore_ids: ids(&selection.explore),
            strategy: selection.strategy,
            weights_mode: Some(a.weights_mode),
            lambda2: selection.lambda2,
            lambda2_repeated: selection.lambda2_repeated,
            rng_stream: stream,
        });
    }
    if let Some(path) = &a.dump_spectral {
        write_output(path, dump.as_bytes())?;
    }
    write_output(&a.out, export::selections_jsonl(&lines).as_bytes())?;
    Ok(())
}

fn threads() -> DynResult<usize> {
    match std::env::var("GSTDS_THREADS") {
        Ok(v) => v.trim().parse().map_err(|_| format!("GSTDS_THREADS must be a nonnegative integer, got `{v}`").into()),
        Err(_) => Ok(0),
    }
}

fn execute(cfg: &ExperimentConfig, out: &Path, require_pair: bool) -> DynResult<Comparison> {
    let data = harness::load_data(&cfg.data)?;
    for w in &data.warnings {
        eprintln!("warning: {w}");
    }
    let comparison = harness::with_threads(threads()?, || {
        if require_pair {
            harness::run_comparison(cfg, &data.features)
        } else {
            harness::run_methods(cfg, &data.features)
        }
    })??;
    export::write_comparison(out, &comparison)?;
    print_summary(&comparison);
    Ok(comparison)
}

fn print_summary(c: &Comparison) {
    let mut out = std::io::stdout().lock();
    let _ = writeln!(out, "{:<14} {:>5} {:>9} {:>9} {:>11} {:>16}", "method", "seeds", "test_acc", "std", "data_usage", "total_flops");
    for a in &c.report.aggregates {
        let m = |k: &str| a.metrics[k];
        let _ = writeln!(
            out,
            "{:<14} {:>5} {:>9.2} {:>9.2} {:>11.4} {:>16.0}",
            a.method.as_str(),
            a.seeds,
            m("test_acc").mean,
            m("test_acc").std,
            m("data_usage").mean,
            m("total_flops").mean
        );
    }
}

fn train(a: TrainArgs) -> DynResult<()> {
    let mut cfg = a.config.load()?;
    cfg.harness.methods = vec![a.method];
    cfg.harness.seeds = vec![a.seed.unwrap_or(cfg.train.seed)];
    execute(&cfg, &a.out, false)?;
    Ok(())
}

fn compare(a: CompareArgs) -> DynResult<()> {
    let mut cfg = a.config.load()?;
    if !a.seeds.is_empty() {
        cfg.harness.seeds = a.seeds;
    }
    cfg.harness.with_projection |= a.with_projection;
    execute(&cfg, &a.out, true)?;
    Ok(())
}

fn report(a: ReportArgs) -> DynResult<()> {
    let r = export::read_report(&a.input)?;
    let bytes = match a.format {
        ReportFormat::Json => export::report_json(&r),
        ReportFormat::Csv => export::metrics_csv(&r).into_bytes(),
    };
    write_output(&a.out, &bytes)?;
    Ok(())
}

fn synth_cmd(a: SynthArgs) -> DynResult<()> {
    let params = SynthParams {
        classes: a.classes,
        per_class: a.per_class,
        dim: a.dim,
        separation: a.separation,
        seed: a.seed,
    };
    let s = synth::generate(&params)?;
    for w in &s.warnings {
        eprintln!("warning: {w}");
    }
    let format = a.format.unwrap_or_else(|| Format::from_path(&a.out));
    save_featureset(&s.features, &a.out, format)?;
    Ok(())
}
