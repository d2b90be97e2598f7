//! Experiment configuration.
//!
//! An INI file with sections `[data]`, `[train]`, `[schedule]`,
//! `[selection]` and `[harness]`. Every key can also be overridden as
//! `section.key=value`; unknown sections or keys are errors.

use std::path::{Path, PathBuf};
use std::str::FromStr;

use gstds_core::schedule::{
    calibrate_sigmoid, AimdParams, Policy, PolicyKind, RatioTargets, DEFAULT_STEEPNESS_SCALE,
};
use gstds_core::selection::WeightsMode;
use gstds_core::train::{Method, SelectionConfig};
use ini::Ini;
use serde::{Deserialize, Serialize};

use crate::format::Format;
use crate::synth::SynthParams;

#[derive(Debug, thiserror::Error)]
pub enum ConfigError {
    #[error("{path}: {message}")]
    Read { path: PathBuf, message: String },
    #[error("unknown section `[{0}]`")]
    UnknownSection(String),
    #[error("unknown key `{section}.{key}`")]
    UnknownKey { section: String, key: String },
    #[error("`{key}`: cannot use `{value}`: {reason}")]
    BadValue { key: String, value: String, reason: String },
    #[error("override `{0}` is not of the form section.key=value")]
    BadOverride(String),
    #[error(transparent)]
    Core(#[from] gstds_core::Error),
}

pub type Result<T> = std::result::Result<T, ConfigError>;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Regime {
    FixedEpochs,
    FixedFlops,
}

impl FromStr for Regime {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, String> {
        match s {
            "fixed_epochs" => Ok(Regime::FixedEpochs),
            "fixed_flops" => Ok(Regime::FixedFlops),
            _ => Err("expected fixed_epochs or fixed_flops".to_owned()),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DataConfig {
    /// Feature file; the synthetic generator is used when absent.
    pub path: Option<PathBuf>,
    pub format: Option<Format>,
    pub synth: SynthParams,
    pub train_fraction: f64,
    pub val_fraction: f64,
    pub test_fraction: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainSection {
    pub learning_rate: f64,
    pub batch_size: usize,
    pub epochs: usize,
    pub seed: u64,
    pub hidden_units: usize,
    pub probe_iterations: usize,
    pub probe_step: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScheduleConfig {
    pub policy: PolicyKind,
    pub mean_target: f64,
    pub max_target: f64,
    pub min_target: f64,
    pub steepness_scale: f64,
    pub constant: f64,
    pub sinc_scale: f64,
    pub sinusoid_center: f64,
    pub sinusoid_amplitude: f64,
    pub sinusoid_cycles: f64,
    pub gamma_exponent: f64,
    pub aimd_delta_add: f64,
    /// `None` picks 1.5 for the mellow and 2.0 for the aggressive variant.
    pub aimd_beta_mult: Option<f64>,
    pub aimd_streak_limit: u32,
}

impl ScheduleConfig {
    /// Fully parameterized policy for a run of `total_steps` steps.
    pub fn policy(&self, total_steps: usize) -> gstds_core::Result<Policy> {
        let (r_min, r_max) = (self.min_target, self.max_target);
        let aimd = |default_beta: f64| AimdParams {
            delta_add: self.aimd_delta_add,
            beta_mult: self.aimd_beta_mult.unwrap_or(default_beta),
            streak_limit: self.aimd_streak_limit,
            r_min,
            r_max,
        };
        Ok(match self.policy {
            PolicyKind::Constant => Policy::Constant { value: self.constant },
            PolicyKind::Sigmoid => Policy::Sigmoid(calibrate_sigmoid(
                RatioTargets { mean: self.mean_target, max: r_max, min: r_min },
                total_steps,
                self.steepness_scale,
            )?),
            PolicyKind::Sinc => Policy::Sinc { r_min, r_peak: r_max, scale: self.sinc_scale },
            PolicyKind::Sinusoid => Policy::Sinusoid {
                center: self.sinusoid_center,
                amplitude: self.sinusoid_amplitude,
                cycles: self.sinusoid_cycles,
                r_min,
                r_max,
            },
            PolicyKind::Gamma => Policy::Gamma { r_min, r_max, exponent: self.gamma_exponent },
            PolicyKind::AimdMellow => Policy::AimdMellow(aimd(AimdParams::mellow().beta_mult)),
            PolicyKind::AimdAggressive => Policy::AimdAggressive(aimd(AimdParams::aggressive().beta_mult)),
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HarnessConfig {
    pub methods: Vec<Method>,
    pub regime: Regime,
    pub seeds: Vec<u64>,
    /// Explicit FLOPs budget; in the fixed-FLOPs regime it defaults to the
    /// cheapest method's fixed-epoch total.
    pub flops_budget: Option<u64>,
    pub with_projection: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentConfig {
    pub data: DataConfig,
    pub train: TrainSection,
    pub schedule: ScheduleConfig,
    pub selection: SelectionConfig,
    pub harness: HarnessConfig,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        let mellow = AimdParams::mellow();
        Self {
            data: DataConfig {
                path: None,
                format: None,
                synth: SynthParams::default(),
                // 200 / 50 / 50 of every 300
                train_fraction: 2.0 / 3.0,
                val_fraction: 1.0 / 6.0,
                test_fraction: 1.0 / 6.0,
            },
            train: TrainSection {
                learning_rate: 0.001,
                batch_size: 64,
                epochs: 25,
                seed: 0,
                hidden_units: 64,
                probe_iterations: 200,
                probe_step: 0.1,
            },
            schedule: ScheduleConfig {
                policy: PolicyKind::Sigmoid,
                mean_target: 0.3,
                max_target: 0.88,
                min_target: 0.18,
                steepness_scale: DEFAULT_STEEPNESS_SCALE,
                constant: 1.0,
                sinc_scale: 8.0,
                sinusoid_center: 0.25,
                sinusoid_amplitude: 0.63,
                sinusoid_cycles: 3.0,
                gamma_exponent: 4.0,
                aimd_delta_add: mellow.delta_add,
                aimd_beta_mult: None,
                aimd_streak_limit: mellow.streak_limit,
            },
            selection: SelectionConfig::default(),
            harness: HarnessConfig {
                methods: Method::ALL.to_vec(),
                regime: Regime::FixedEpochs,
                seeds: vec![0, 1, 2, 3, 4],
                flops_budget: None,
                with_projection: false,
            },
        }
    }
}

fn parse<T: FromStr>(key: &str, value: &str) -> Result<T>
where
    T::Err: std::fmt::Display,
{
    value.trim().parse().map_err(|e: T::Err| ConfigError::BadValue {
        key: key.to_owned(),
        value: value.to_owned(),
        reason: e.to_string(),
    })
}

fn parse_list<T: FromStr>(key: &str, value: &str) -> Result<Vec<T>>
where
    T::Err: std::fmt::Display,
{
    let items: Vec<T> = value
        .split(',')
        .map(str::trim)
        .filter(|s| !s.is_empty())
        .map(|s| parse(key, s))
        .collect::<Result<_>>()?;
    if items.is_empty() {
        return Err(ConfigError::BadValue { key: key.to_owned(), value: value.to_owned(), reason: "empty list".to_owned() });
    }
    Ok(items)
}

fn parse_optional_u64(key: &str, value: &str) -> Result<Option<u64>> {
    match value.trim() {
        "" | "none" => Ok(None),
        v => parse(key, v).map(Some),
    }
}

impl ExperimentConfig {
    pub fn load(path: &Path) -> Result<Self> {
        let ini = Ini::load_from_file(path)
            .map_err(|e| ConfigError::Read { path: path.to_owned(), message: e.to_string() })?;
        let mut config = Self::default();
        let base = path.parent().unwrap_or(Path::new("."));
        for (section, props) in ini.iter() {
            let section = section.unwrap_or("");
            for (key, value) in props.iter() {
                config.set(section, key, value)?;
            }
        }
        // data paths are relative to the config file
        if let Some(p) = &config.data.path {
            if p.is_relative() {
                config.data.path = Some(base.join(p));
            }
        }
        Ok(config)
    }

    /// Applies `section.key=value`.
    pub fn apply_override(&mut self, assignment: &str) -> Result<()> {
        let (lhs, value) = assignment
            .split_once('=')
            .ok_or_else(|| ConfigError::BadOverride(assignment.to_owned()))?;
        let (section, key) = lhs
            .trim()
            .split_once('.')
            .ok_or_else(|| ConfigError::BadOverride(assignment.to_owned()))?;
        self.set(section, key, value)
    }

    pub fn set(&mut self, section: &str, key: &str, value: &str) -> Result<()> {
        let full = format!("{section}.{key}");
        let k = full.as_str();
        let value = value.trim();
        match (section, key) {
            ("data", "path") => self.data.path = (!value.is_empty()).then(|| PathBuf::from(value)),
            ("data", "format") => self.data.format = Some(parse(k, value)?),
            ("data", "train_fraction") => self.data.train_fraction = parse(k, value)?,
            ("data", "val_fraction") => self.data.val_fraction = parse(k, value)?,
            ("data", "test_fraction") => self.data.test_fraction = parse(k, value)?,
            ("data", "synthetic.classes") => self.data.synth.classes = parse(k, value)?,
            ("data", "synthetic.per_class") => self.data.synth.per_class = parse(k, value)?,
            ("data", "synthetic.dim") => self.data.synth.dim = parse(k, value)?,
            ("data", "synthetic.separation") => self.data.synth.separation = parse(k, value)?,
            ("data", "synthetic.seed") => self.data.synth.seed = parse(k, value)?,

            ("train", "learning_rate" | "lr") => self.train.learning_rate = parse(k, value)?,
            ("train", "batch_size") => self.train.batch_size = parse(k, value)?,
            ("train", "epochs") => self.train.epochs = parse(k, value)?,
            ("train", "seed") => self.train.seed = parse(k, value)?,
            ("train", "hidden_units") => self.train.hidden_units = parse(k, value)?,
            ("train", "probe_iterations") => self.train.probe_iterations = parse(k, value)?,
            ("train", "probe_step") => self.train.probe_step = parse(k, value)?,

            ("schedule", "policy") => self.schedule.policy = parse(k, value)?,
            ("schedule", "mean_target") => self.schedule.mean_target = parse(k, value)?,
            ("schedule", "max_target") => self.schedule.max_target = parse(k, value)?,
            ("schedule", "min_target") => self.schedule.min_target = parse(k, value)?,
            ("schedule", "steepness_scale") => self.schedule.steepness_scale = parse(k, value)?,
            ("schedule", "constant") => self.schedule.constant = parse(k, value)?,
            ("schedule", "sinc.scale") => self.schedule.sinc_scale = parse(k, value)?,
            ("schedule", "sinusoid.center") => self.schedule.sinusoid_center = parse(k, value)?,
            ("schedule", "sinusoid.amplitude") => self.schedule.sinusoid_amplitude = parse(k, value)?,
            ("schedule", "sinusoid.cycles") => self.schedule.sinusoid_cycles = parse(k, value)?,
            ("schedule", "gamma.exponent") => self.schedule.gamma_exponent = parse(k, value)?,
            ("schedule", "aimd.delta_add") => self.schedule.aimd_delta_add = parse(k, value)?,
            ("schedule", "aimd.beta_mult") => self.schedule.aimd_beta_mult = Some(parse(k, value)?),
            ("schedule", "aimd.streak_limit") => self.schedule.aimd_streak_limit = parse(k, value)?,

            ("selection", "weights_mode") => self.selection.weights_mode = parse::<WeightsMode>(k, value)?,
            ("selection", "epsilon") => self.selection.epsilon = parse(k, value)?,
            ("selection", "clamp_negative_similarity") => {
                self.selection.clamp_negative_similarity = parse(k, value)?
            }

            ("harness", "methods") => self.harness.methods = parse_list(k, value)?,
            ("harness", "regime") => self.harness.regime = parse(k, value)?,
            ("harness", "seeds") => self.harness.seeds = parse_list(k, value)?,
            ("harness", "flops_budget") => self.harness.flops_budget = parse_optional_u64(k, value)?,
            ("harness", "with_projection") => self.harness.with_projection = parse(k, value)?,

            ("data" | "train" | "schedule" | "selection" | "harness", _) => {
                return Err(ConfigError::UnknownKey { section: section.to_owned(), key: key.to_owned() })
            }
            _ => return Err(ConfigError::UnknownSection(section.to_owned())),
        }
        Ok(())
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |key: &str, value: String, reason: &str| {
            Err(ConfigError::BadValue { key: key.to_owned(), value, reason: reason.to_owned() })
        };
        if self.harness.methods.is_empty() {
            return bad("harness.methods", String::new(), "at least one method is required");
        }
        if self.harness.seeds.is_empty() {
            return bad("harness.seeds", String::new(), "at least one seed is required");
        }
        if self.harness.flops_budget == Some(0) {
            return bad("harness.flops_budget", "0".to_owned(), "budget must be positive");
        }
        if self.train.epochs == 0 {
            return bad("train.epochs", "0".to_owned(), "must be positive");
        }
        Ok(())
    }
}
