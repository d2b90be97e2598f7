//! Multi-method, multi-seed experiments.
//!
//! Per seed the data are split, batched and (when needed) scored once, then
//! every method trains on exactly those splits and batches. Runs are
//! independent and execute on a rayon pool; results are collected in
//! (method, seed) order, so reports do not depend on scheduling.

use std::collections::{BTreeMap, HashMap};

use gstds_core::data::{partition_batches, split, BatchPlan, FeatureSet, SplitSpec};
use gstds_core::flops::FLOPS_CONVENTION;
use gstds_core::learner::{evaluate, train_reference_probe, Evaluation, ProbeConfig};
use gstds_core::pca::project_2d;
use gstds_core::schedule::{build_schedule, Policy};
use gstds_core::selection::WeightsMode;
use gstds_core::train::{
    EpochMetrics, Method, SelectionRecord, SpectralCache, TrainConfig, Trainer, TrainingData,
};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::config::{ConfigError, DataConfig, ExperimentConfig, Regime};
use crate::format::{load_featureset, Format, FormatError};
use crate::synth;

#[derive(Debug, thiserror::Error)]
pub enum HarnessError {
    #[error(transparent)]
    Core(#[from] gstds_core::Error),
    #[error(transparent)]
    Format(#[from] FormatError),
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error("sample id {0} appears in the selection log but has no label")]
    MissingLabel(u64),
    #[error("selection log is empty")]
    EmptyLog,
    #[error("evaluation data differ between methods for seed {0}")]
    InconsistentData(u64),
    #[error("a comparison needs at least two methods, got {0}")]
    TooFewMethods(usize),
    #[error("thread pool: {0}")]
    ThreadPool(String),
}

pub type Result<T> = std::result::Result<T, HarnessError>;

/// Loaded or generated corpus plus anything worth telling the user.
#[derive(Debug, Clone)]
pub struct Dataset {
    pub features: FeatureSet,
    pub warnings: Vec<String>,
}

pub fn load_data(cfg: &DataConfig) -> Result<Dataset> {
    match &cfg.path {
        Some(path) => {
            let format = cfg.format.unwrap_or_else(|| Format::from_path(path));
            Ok(Dataset { features: load_featureset(path, format)?, warnings: Vec::new() })
        }
        None => {
            let s = synth::generate(&cfg.synth)?;
            Ok(Dataset { features: s.features, warnings: s.warnings })
        }
    }
}

/// Everything a seed's runs share.
#[derive(Debug, Clone)]
pub struct SeedData {
    pub seed: u64,
    pub train: FeatureSet,
    pub val: FeatureSet,
    pub test: FeatureSet,
    pub plan: BatchPlan,
    /// Indexed like `train`.
    pub ref_losses: Option<Vec<f64>>,
    pub spectra: Option<SpectralCache>,
    /// SHA-256 over validation and test ids, labels and feature bits.
    pub eval_hash: String,
}

fn hash_sets(sets: &[&FeatureSet]) -> String {
    let mut h = Sha256::new();
    for fs in sets {
        h.update((fs.len() as u64).to_le_bytes());
        for id in fs.ids() {
            h.update(id.to_le_bytes());
        }
        for l in fs.labels() {
            h.update(l.to_le_bytes());
        }
        for v in fs.features() {
            h.update(v.to_bits().to_le_bytes());
        }
    }
    hex::encode(h.finalize())
}

/// Splits, batches and scores the corpus for one seed.
pub fn prepare_seed(full: &FeatureSet, cfg: &ExperimentConfig, seed: u64) -> Result<SeedData> {
    let spec = SplitSpec {
        train_fraction: cfg.data.train_fraction,
        val_fraction: cfg.data.val_fraction,
        test_fraction: cfg.data.test_fraction,
        seed,
    };
    let (train, val, test) = split(full, &spec)?;
    let plan = partition_batches(&train, cfg.train.batch_size.min(train.len()), seed)?;
    let needs_spectra = cfg.harness.methods.contains(&Method::Gstds);
    let needs_losses = needs_spectra && cfg.selection.weights_mode == WeightsMode::InverseRefLoss;
    let ref_losses = match train.ref_losses() {
        Some(l) => Some(l.iter().map(|&v| v as f64).collect()),
        None if needs_losses => {
            let probe = ProbeConfig { iterations: cfg.train.probe_iterations, step: cfg.train.probe_step };
            Some(train_reference_probe(&train, seed, probe)?.losses(&train)?)
        }
        None => None,
    };
    let spectra = if needs_spectra {
        Some(SpectralCache::build(&train, &plan, &cfg.selection, ref_losses.as_deref())?)
    } else {
        None
    };
    let eval_hash = hash_sets(&[&val, &test]);
    Ok(SeedData { seed, train, val, test, plan, ref_losses, spectra, eval_hash })
}

/// Per-label selection accounting.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClassFrequency {
    pub label: u32,
    pub selection_count: u64,
    pub exposure_count: u64,
    pub frequency: f64,
    /// Mean filter ratio of the batches this label was selected in, one term
    /// per selected sample.
    pub mean_ratio_when_selected: f64,
}

pub fn selection_frequency_by_class(
    records: &[SelectionRecord],
    label_of: &HashMap<u64, u32>,
    class_count: u32,
) -> Result<Vec<ClassFrequency>> {
    if records.is_empty() {
        return Err(HarnessError::EmptyLog);
    }
    let mut selected = vec![0u64; class_count as usize];
    let mut exposed = vec![0u64; class_count as usize];
    let mut ratio_sum = vec![0.0; class_count as usize];
    let label = |id: &u64| label_of.get(id).map(|&l| l as usize).ok_or(HarnessError::MissingLabel(*id));
    for r in records {
        for id in &r.batch_ids {
            exposed[label(id)?] += 1;
        }
        for id in r.exploit_ids.iter().chain(&r.explore_ids) {
            let l = label(id)?;
            selected[l] += 1;
            ratio_sum[l] += r.ratio;
        }
    }
    Ok((0..class_count as usize)
        .map(|c| ClassFrequency {
            label: c as u32,
            selection_count: selected[c],
            exposure_count: exposed[c],
            frequency: if exposed[c] == 0 { 0.0 } else { selected[c] as f64 / exposed[c] as f64 },
            mean_ratio_when_selected: if selected[c] == 0 { 0.0 } else { ratio_sum[c] / selected[c] as f64 },
        })
        .collect())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunReport {
    pub method: Method,
    pub seed: u64,
    pub train_config: TrainConfig,
    pub policy: Policy,
    pub layer_dims: Vec<usize>,
    pub epochs: Vec<EpochMetrics>,
    pub final_train: Evaluation,
    pub final_val: Evaluation,
    pub final_test: Evaluation,
    pub total_flops: u64,
    pub samples_processed: u64,
    pub samples_exposed: u64,
    /// Realized `samples_processed / samples_exposed`.
    pub data_usage: f64,
    pub budget_exhausted: bool,
    pub class_frequency: Vec<ClassFrequency>,
    pub eval_hash: String,
    pub selection_log: Option<String>,
}

#[derive(Debug, Clone)]
pub struct RunOutput {
    pub report: RunReport,
    pub records: Vec<SelectionRecord>,
}

fn label_map(fs: &FeatureSet) -> HashMap<u64, u32> {
    fs.ids().iter().copied().zip(fs.labels().iter().copied()).collect()
}

/// Trains one method on one seed's data and evaluates on the test split.
pub fn run_experiment(
    cfg: &ExperimentConfig,
    method: Method,
    data: &SeedData,
    flops_budget: Option<u64>,
) -> Result<RunOutput> {
    let train_config = TrainConfig {
        method,
        learning_rate: cfg.train.learning_rate,
        batch_size: data.plan.batch_size,
        n_epochs: cfg.train.epochs,
        seed: data.seed,
        hidden_units: cfg.train.hidden_units,
        selection: cfg.selection,
        flops_budget,
    };
    let steps = cfg.train.epochs * data.plan.len();
    let policy = cfg.schedule.policy(steps)?;
    let schedule = build_schedule(policy, cfg.train.epochs, data.plan.len())?;
    let inputs = TrainingData {
        train: &data.train,
        val: &data.val,
        plan: &data.plan,
        schedule: &schedule,
        spectra: data.spectra.as_ref(),
    };
    let mut trainer = Trainer::new(train_config, inputs)?;
    let mut epochs = Vec::new();
    let mut records = Vec::new();
    for epoch in 0..cfg.train.epochs {
        let out = trainer.train_epoch(epoch)?;
        epochs.extend(out.metrics);
        records.extend(out.records);
        if out.budget_exhausted {
            break;
        }
    }
    let budget_exhausted = trainer.budget_exhausted();
    let total_flops = trainer.ledger().cumulative;
    let model = trainer.into_model();
    let samples_processed = epochs.iter().map(|m| m.samples_processed).sum();
    let samples_exposed: u64 = epochs.iter().map(|m| m.samples_exposed).sum();
    let class_frequency = if records.is_empty() {
        Vec::new()
    } else {
        selection_frequency_by_class(&records, &label_map(&data.train), data.train.class_count())?
    };
    let report = RunReport {
        method,
        seed: data.seed,
        train_config,
        policy,
        layer_dims: model.layer_dims(),
        epochs,
        final_train: evaluate(&model, &data.train)?,
        final_val: evaluate(&model, &data.val)?,
        final_test: evaluate(&model, &data.test)?,
        total_flops,
        samples_processed,
        samples_exposed,
        data_usage: if samples_exposed == 0 { 0.0 } else { samples_processed as f64 / samples_exposed as f64 },
        budget_exhausted,
        class_frequency,
        eval_hash: data.eval_hash.clone(),
        selection_log: None,
    };
    Ok(RunOutput { report, records })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MeanStd {
    pub mean: f64,
    /// Sample standard deviation; 0 for a single seed.
    pub std: f64,
}

impl MeanStd {
    pub fn of(values: &[f64]) -> Self {
        let n = values.len() as f64;
        let mean = values.iter().sum::<f64>() / n;
        let var = if values.len() > 1 {
            values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0)
        } else {
            0.0
        };
        Self { mean, std: var.sqrt() }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MethodAggregate {
    pub method: Method,
    pub seeds: usize,
    pub metrics: BTreeMap<String, MeanStd>,
}

type Field = (&'static str, fn(&RunReport) -> f64);

fn aggregate(method: Method, runs: &[&RunReport]) -> MethodAggregate {
    let fields: [Field; 10] = [
        ("train_acc", |r| r.final_train.accuracy),
        ("val_acc", |r| r.final_val.accuracy),
        ("test_acc", |r| r.final_test.accuracy),
        ("train_loss", |r| r.final_train.loss),
        ("val_loss", |r| r.final_val.loss),
        ("test_loss", |r| r.final_test.loss),
        ("total_flops", |r| r.total_flops as f64),
        ("data_usage", |r| r.data_usage),
        ("samples_processed", |r| r.samples_processed as f64),
        ("epochs_completed", |r| r.epochs.len() as f64),
    ];
    let metrics = fields
        .iter()
        .map(|(name, get)| {
            let values: Vec<f64> = runs.iter().map(|r| get(r)).collect();
            (name.to_string(), MeanStd::of(&values))
        })
        .collect();
    MethodAggregate { method, seeds: runs.len(), metrics }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SeedBudget {
    pub seed: u64,
    pub flops: u64,
}

/// Full provenance plus per-run reports and per-method aggregates.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ComparisonReport {
    pub tool: String,
    pub version: String,
    pub flops_convention: String,
    pub config: ExperimentConfig,
    pub regime: Regime,
    pub epochs: usize,
    /// Per-seed FLOPs budgets; empty in the fixed-epoch regime without an
    /// explicit budget.
    pub flops_budgets: Vec<SeedBudget>,
    pub runs: Vec<RunReport>,
    pub aggregates: Vec<MethodAggregate>,
}

/// One point of a 2-D projection of a batch.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProjectionRow {
    pub method: Method,
    pub seed: u64,
    pub epoch: usize,
    pub batch: usize,
    pub id: u64,
    pub label: u32,
    pub selected: bool,
    pub pc1: f64,
    pub pc2: f64,
}

#[derive(Debug, Clone)]
pub struct Comparison {
    pub report: ComparisonReport,
    /// Selection logs in the order of `report.runs`.
    pub records: Vec<Vec<SelectionRecord>>,
    pub projections: Vec<ProjectionRow>,
}

/// Runs `f` on a pool capped at `threads` workers (0 = rayon's default).
pub fn with_threads<T: Send>(threads: usize, f: impl FnOnce() -> T + Send) -> Result<T> {
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(threads)
        .build()
        .map_err(|e| HarnessError::ThreadPool(e.to_string()))?;
    Ok(pool.install(f))
}

/// Runs every configured method on every seed.
///
/// In the fixed-FLOPs regime each seed's budget is the explicit
/// `harness.flops_budget`, or else the smallest fixed-epoch total among the
/// methods, and every method is rerun under it.
pub fn run_comparison(cfg: &ExperimentConfig, full: &FeatureSet) -> Result<Comparison> {
    cfg.validate()?;
    let methods = &cfg.harness.methods;
    if methods.len() < 2 {
        return Err(HarnessError::TooFewMethods(methods.len()));
    }
    run_methods(cfg, full)
}

/// Like [`run_comparison`] without the two-method minimum; `train` uses it
/// for single runs.
pub fn run_methods(cfg: &ExperimentConfig, full: &FeatureSet) -> Result<Comparison> {
    cfg.validate()?;
    let methods = &cfg.harness.methods;
    let seeds = &cfg.harness.seeds;
    let prepared: Vec<SeedData> = seeds
        .par_iter()
        .map(|&s| prepare_seed(full, cfg, s))
        .collect::<Result<_>>()?;
    let jobs: Vec<(Method, usize)> =
        methods.iter().flat_map(|&m| (0..prepared.len()).map(move |k| (m, k))).collect();

    let budgets: Vec<Option<u64>> = match (cfg.harness.regime, cfg.harness.flops_budget) {
        (_, Some(b)) => vec![Some(b); prepared.len()],
        (Regime::FixedEpochs, None) => vec![None; prepared.len()],
        (Regime::FixedFlops, None) => {
            let reference: Vec<u64> = jobs
                .par_iter()
                .map(|&(m, k)| run_experiment(cfg, m, &prepared[k], None).map(|o| o.report.total_flops))
                .collect::<Result<_>>()?;
            (0..prepared.len())
                .map(|k| {
                    jobs.iter()
                        .zip(&reference)
                        .filter(|((_, kk), _)| *kk == k)
                        .map(|(_, &f)| f)
                        .min()
                })
                .collect()
        }
    };

    let outputs: Vec<RunOutput> = jobs
        .par_iter()
        .map(|&(m, k)| run_experiment(cfg, m, &prepared[k], budgets[k]))
        .collect::<Result<_>>()?;

    for out in &outputs {
        let data = prepared.iter().find(|d| d.seed == out.report.seed).expect("seed prepared");
        if out.report.eval_hash != data.eval_hash {
            return Err(HarnessError::InconsistentData(data.seed));
        }
    }

    let projections = if cfg.harness.with_projection {
        projections(&prepared, &outputs)?
    } else {
        Vec::new()
    };

    let runs: Vec<RunReport> = outputs.iter().map(|o| o.report.clone()).collect();
    let aggregates = methods
        .iter()
        .map(|&m| aggregate(m, &runs.iter().filter(|r| r.method == m).collect::<Vec<_>>()))
        .collect();
    let flops_budgets = prepared
        .iter()
        .zip(&budgets)
        .filter_map(|(d, b)| b.map(|flops| SeedBudget { seed: d.seed, flops }))
        .collect();
    let report = ComparisonReport {
        tool: "gstds".to_owned(),
        version: env!("CARGO_PKG_VERSION").to_owned(),
        flops_convention: FLOPS_CONVENTION.to_owned(),
        config: cfg.clone(),
        regime: cfg.harness.regime,
        epochs: cfg.train.epochs,
        flops_budgets,
        runs,
        aggregates,
    };
    Ok(Comparison { report, records: outputs.into_iter().map(|o| o.records).collect(), projections })
}

/// PCA coordinates of each seed's first batch, with the selected points of
/// every run and epoch marked.
fn projections(prepared: &[SeedData], outputs: &[RunOutput]) -> Result<Vec<ProjectionRow>> {
    let mut rows = Vec::new();
    for data in prepared {
        let Some(members) = data.plan.batches.first() else { continue };
        let coords = project_2d(&data.train.gather(members), data.train.dim())?;
        for out in outputs.iter().filter(|o| o.report.seed == data.seed) {
            for rec in out.records.iter().filter(|r| r.batch == 0) {
                for (&i, xy) in members.iter().zip(&coords) {
                    let id = data.train.ids()[i];
                    rows.push(ProjectionRow {
                        method: out.report.method,
                        seed: data.seed,
                        epoch: rec.epoch,
                        batch: 0,
                        id,
                        label: data.train.labels()[i],
                        selected: rec.exploit_ids.contains(&id) || rec.explore_ids.contains(&id),
                        pc1: xy[0],
                        pc2: xy[1],
                    });
                }
            }
        }
    }
    Ok(rows)
}
