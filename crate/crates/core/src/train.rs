//! Schedule-driven training loop.
//!
//! Global step `g = epoch * batches + batch` reads its filter ratio from the
//! schedule (or from the AIMD controller for reactive policies), a subset of
//! the batch is selected, and the learner takes one SGD step on the mean
//! cross-entropy of that subset. FLOPs are charged for selected samples only.

use alloc::format;
use alloc::vec::Vec;
use core::fmt;
use core::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::data::{BatchPlan, FeatureSet};
use crate::flops::FlopsLedger;
use crate::learner::{evaluate, LearnerModel};
use crate::rng::{self, Domain};
use crate::schedule::{AimdState, Feedback, Schedule};
use crate::selection::{
    compute_weights, full_select, select_batch, uniform_select, ScoredBatch, SelectionResult,
    SelectionWeights, Strategy, WeightsMode, DEFAULT_EPSILON,
};
use crate::spectral::{score_batch, FiedlerScores, Ranking};
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Method {
    /// Every batch in full.
    Standard,
    /// Spectral exploit set plus weighted explore set.
    Gstds,
    /// Uniform subsets with the same per-batch sizes as `Gstds`.
    RandomFilter,
}

impl Method {
    pub const ALL: [Method; 3] = [Method::Standard, Method::Gstds, Method::RandomFilter];

    pub fn as_str(self) -> &'static str {
        match self {
            Method::Standard => "standard",
            Method::Gstds => "gstds",
            Method::RandomFilter => "random_filter",
        }
    }
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Method {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Method::ALL
            .into_iter()
            .find(|m| m.as_str() == s)
            .ok_or_else(|| Error::InvalidParameter(format!("unknown method `{s}`")))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SelectionConfig {
    pub weights_mode: WeightsMode,
    pub epsilon: f64,
    pub clamp_negative_similarity: bool,
}

impl Default for SelectionConfig {
    fn default() -> Self {
        Self {
            weights_mode: WeightsMode::InverseRefLoss,
            epsilon: DEFAULT_EPSILON,
            clamp_negative_similarity: false,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub method: Method,
    pub learning_rate: f64,
    pub batch_size: usize,
    pub n_epochs: usize,
    pub seed: u64,
    /// Width of the single hidden layer; 0 gives a linear softmax model.
    pub hidden_units: usize,
    pub selection: SelectionConfig,
    pub flops_budget: Option<u64>,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            method: Method::Gstds,
            learning_rate: 0.001,
            batch_size: 64,
            n_epochs: 25,
            seed: 0,
            hidden_units: 64,
            selection: SelectionConfig::default(),
            flops_budget: None,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return Err(Error::InvalidParameter("learning rate must be positive".into()));
        }
        if self.batch_size == 0 || self.n_epochs == 0 {
            return Err(Error::InvalidParameter("batch size and epochs must be positive".into()));
        }
        if self.flops_budget == Some(0) {
            return Err(Error::InvalidParameter("FLOPs budget must be positive".into()));
        }
        Ok(())
    }

    pub fn layer_dims(&self, input_dim: usize, classes: usize) -> Vec<usize> {
        if self.hidden_units == 0 {
            alloc::vec![input_dim, classes]
        } else {
            alloc::vec![input_dim, self.hidden_units, classes]
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochMetrics {
    pub epoch: usize,
    pub train_acc: f64,
    pub val_acc: f64,
    pub train_loss: f64,
    pub val_loss: f64,
    pub samples_processed: u64,
    pub samples_exposed: u64,
    pub flops_this_epoch: u64,
    pub mean_ratio_this_epoch: f64,
    pub batches: usize,
}

/// One line of the selection log. Ids are sample ids, not row indices.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SelectionRecord {
    pub method: Method,
    pub seed: u64,
    pub epoch: usize,
    pub batch: usize,
    pub step: usize,
    pub ratio: f64,
    pub n: usize,
    pub batch_ids: Vec<u64>,
    pub exploit_ids: Vec<u64>,
    pub explore_ids: Vec<u64>,
    pub strategy: Strategy,
    pub weights_mode: Option<WeightsMode>,
    pub lambda2: Option<f64>,
    pub lambda2_repeated: bool,
    pub rng_stream: u64,
}

#[derive(Debug, Clone, PartialEq)]
struct CachedBatch {
    scores: FiedlerScores,
    ranking: Ranking,
    weights: SelectionWeights,
}

/// Fiedler scores, rankings and weights for every batch of a plan.
///
/// Selection depends only on reference features and losses, never on the
/// learner, and batch membership is fixed for the whole run, so each batch is
/// scored once. Single-point batches have no graph and are stored as `None`.
#[derive(Debug, Clone, PartialEq)]
pub struct SpectralCache {
    batches: Vec<Option<CachedBatch>>,
}

impl SpectralCache {
    /// `ref_losses` is indexed like `train`.
    pub fn build(
        train: &FeatureSet,
        plan: &BatchPlan,
        selection: &SelectionConfig,
        ref_losses: Option<&[f64]>,
    ) -> Result<Self> {
        if let Some(l) = ref_losses {
            if l.len() != train.len() {
                return Err(Error::LengthMismatch { what: "reference losses", expected: train.len(), found: l.len() });
            }
        }
        let batches = plan
            .batches
            .iter()
            .map(|members| {
                if members.len() < 2 {
                    return Ok(None);
                }
                let spectrum = score_batch(
                    &train.gather(members),
                    train.dim(),
                    selection.clamp_negative_similarity,
                )?;
                let losses: Option<Vec<f64>> =
                    ref_losses.map(|l| members.iter().map(|&i| l[i]).collect());
                let weights = compute_weights(
                    selection.weights_mode,
                    losses.as_deref(),
                    &spectrum.scores,
                    selection.epsilon,
                )?;
                Ok(Some(CachedBatch { scores: spectrum.scores, ranking: spectrum.ranking, weights }))
            })
            .collect::<Result<_>>()?;
        Ok(Self { batches })
    }

    pub fn len(&self) -> usize {
        self.batches.len()
    }

    pub fn is_empty(&self) -> bool {
        self.batches.is_empty()
    }

    pub fn scores(&self, batch: usize) -> Option<&FiedlerScores> {
        self.batches.get(batch).and_then(|b| b.as_ref()).map(|b| &b.scores)
    }
}

/// Borrowed inputs of a training run.
#[derive(Debug, Clone, Copy)]
pub struct TrainingData<'a> {
    pub train: &'a FeatureSet,
    pub val: &'a FeatureSet,
    pub plan: &'a BatchPlan,
    pub schedule: &'a Schedule,
    /// Required for [`Method::Gstds`].
    pub spectra: Option<&'a SpectralCache>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct EpochOutcome {
    /// `None` when the budget ran out before the epoch's first batch.
    pub metrics: Option<EpochMetrics>,
    pub records: Vec<SelectionRecord>,
    pub budget_exhausted: bool,
}

pub struct Trainer<'a> {
    config: TrainConfig,
    data: TrainingData<'a>,
    model: LearnerModel,
    aimd: Option<AimdState>,
    prev_val_loss: Option<f64>,
    ledger: FlopsLedger,
    exhausted: bool,
}

impl<'a> Trainer<'a> {
    pub fn new(config: TrainConfig, data: TrainingData<'a>) -> Result<Self> {
        config.validate()?;
        if data.train.dim() != data.val.dim() {
            return Err(Error::InvalidParameter("train and validation dimensions differ".into()));
        }
        if config.method == Method::Gstds {
            let cache = data.spectra.ok_or_else(|| {
                Error::InvalidParameter("gstds training needs a spectral cache".into())
            })?;
            if cache.len() != data.plan.len() {
                return Err(Error::LengthMismatch { what: "spectral cache", expected: data.plan.len(), found: cache.len() });
            }
        }
        let dims = config.layer_dims(data.train.dim(), data.train.class_count() as usize);
        let model = LearnerModel::init(&dims, &mut rng::stream(config.seed, Domain::Init, 0, 0))?;
        let aimd = match (config.method, data.schedule.policy.aimd_params()) {
            (Method::Standard, _) | (_, None) => None,
            (_, Some(p)) => Some(AimdState::new(p)?),
        };
        Ok(Self {
            config,
            data,
            model,
            aimd,
            prev_val_loss: None,
            ledger: FlopsLedger::new(&dims),
            exhausted: false,
        })
    }

    pub fn model(&self) -> &LearnerModel {
        &self.model
    }

    pub fn into_model(self) -> LearnerModel {
        self.model
    }

    pub fn ledger(&self) -> FlopsLedger {
        self.ledger
    }

    pub fn budget_exhausted(&self) -> bool {
        self.exhausted
    }

    fn select(&self, epoch: usize, batch: usize, ratio: f64) -> Result<SelectionResult> {
        let members = &self.data.plan.batches[batch];
        let stream = rng::stream_id(epoch as u64, batch as u64);
        match self.config.method {
            Method::Standard => Ok(full_select(batch, members)),
            Method::RandomFilter => {
                let mut r = rng::stream(self.config.seed, Domain::RandomFilter, epoch as u64, batch as u64);
                Ok(uniform_select(batch, members, ratio, &mut r, stream))
            }
            Method::Gstds => {
                let cache = self.data.spectra.expect("checked in Trainer::new");
                match &cache.batches[batch] {
                    Some(c) => {
                        let mut r = rng::stream(self.config.seed, Domain::Selection, epoch as u64, batch as u64);
                        let scored = ScoredBatch {
                            index: batch,
                            members,
                            scores: &c.scores,
                            ranking: &c.ranking,
                            weights: &c.weights,
                        };
                        select_batch(scored, ratio, &mut r, stream)
                    }
                    None => {
                        // lone point: it is the whole selection at any ratio
                        let mut res = full_select(batch, members);
                        res.ratio_applied = ratio;
                        res.strategy = Strategy::Spectral;
                        res.weights_mode = Some(self.config.selection.weights_mode);
                        res.rng_stream_id = stream;
                        Ok(res)
                    }
                }
            }
        }
    }

    fn ratio_for(&self, step: usize) -> Result<f64> {
        if self.config.method == Method::Standard {
            return Ok(1.0);
        }
        let placeholder = self.data.schedule.ratio_at(step)?;
        Ok(self.aimd.map_or(placeholder, |a| a.ratio))
    }

    /// Trains one pass over the batch plan.
    ///
    /// With a FLOPs budget the pass stops before the first batch whose cost
    /// would push the cumulative total over it.
    pub fn train_epoch(&mut self, epoch: usize) -> Result<EpochOutcome> {
        let m = self.data.plan.len();
        let mut records = Vec::new();
        let (mut processed, mut exposed, mut flops, mut ratio_sum, mut batches) = (0u64, 0u64, 0u64, 0.0, 0usize);

        for batch in 0..m {
            if self.exhausted {
                break;
            }
            let step = epoch * m + batch;
            let ratio = self.ratio_for(step)?;
            let selection = self.select(epoch, batch, ratio)?;
            let cost = self.ledger.train_cost(selection.n_selected);
            if let Some(budget) = self.config.flops_budget {
                if self.ledger.cumulative + cost > budget {
                    self.exhausted = true;
                    break;
                }
            }

            let chosen: Vec<usize> = selection.selected().collect();
            let (loss, grad) = self.model.loss_and_gradient(self.data.train, &chosen)?;
            if !loss.is_finite() || grad.iter().any(|g| !g.is_finite()) {
                return Err(Error::Divergence { epoch, batch });
            }
            self.model.sgd_step(&grad, self.config.learning_rate)?;
            if !self.model.is_finite() {
                return Err(Error::Divergence { epoch, batch });
            }
            flops += self.ledger.charge(chosen.len());

            if let Some(state) = self.aimd.as_mut() {
                let all: Vec<usize> = (0..self.data.val.len()).collect();
                let val_loss = self.model.mean_loss(self.data.val, &all)?;
                if let Some(prev) = self.prev_val_loss {
                    let feedback = if val_loss > prev { Feedback::Degraded } else { Feedback::Improved };
                    state.step(feedback);
                }
                self.prev_val_loss = Some(val_loss);
            }

            processed += chosen.len() as u64;
            exposed += self.data.plan.batches[batch].len() as u64;
            ratio_sum += ratio;
            batches += 1;
            records.push(self.record(epoch, step, &selection));
        }

        let metrics = if batches > 0 {
            let train = evaluate(&self.model, self.data.train)?;
            let val = evaluate(&self.model, self.data.val)?;
            Some(EpochMetrics {
                epoch,
                train_acc: train.accuracy,
                val_acc: val.accuracy,
                train_loss: train.loss,
                val_loss: val.loss,
                samples_processed: processed,
                samples_exposed: exposed,
                flops_this_epoch: flops,
                mean_ratio_this_epoch: ratio_sum / batches as f64,
                batches,
            })
        } else {
            None
        };
        Ok(EpochOutcome { metrics, records, budget_exhausted: self.exhausted })
    }

    fn record(&self, epoch: usize, step: usize, s: &SelectionResult) -> SelectionRecord {
        let ids = self.data.train.ids();
        let to_ids = |v: &[usize]| v.iter().map(|&i| ids[i]).collect();
        SelectionRecord {
            method: self.config.method,
            seed: self.config.seed,
            epoch,
            batch: s.batch_index,
            step,
            ratio: s.ratio_applied,
            n: s.n_selected,
            batch_ids: to_ids(&self.data.plan.batches[s.batch_index]),
            exploit_ids: to_ids(&s.exploit),
            explore_ids: to_ids(&s.explore),
            strategy: s.strategy,
            weights_mode: s.weights_mode,
            lambda2: s.lambda2,
            lambda2_repeated: s.lambda2_repeated,
            rng_stream: s.rng_stream_id,
        }
    }
}
