//! Hybrid exploit/explore subset choice for one batch.
//!
//! `n = max(1, floor(ratio * |B|))` points are kept. The first `ceil(n / 2)`
//! come straight from the top of the Fiedler ranking; the remaining
//! `floor(n / 2)` are drawn without replacement from the rest of the batch,
//! with probabilities proportional to per-point weights.

use alloc::format;
use alloc::vec::Vec;
use core::fmt;
use core::str::FromStr;

use rand::seq::index;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::spectral::{FiedlerScores, Ranking};
use crate::{Error, Result};

pub const DEFAULT_EPSILON: f64 = 1e-8;

/// Selected-point counts for one batch.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct SelectionCount {
    pub total: usize,
    pub exploit: usize,
    pub explore: usize,
}

/// `total = max(1, floor(ratio * batch_size))`, split `ceil / floor` between
/// exploit and explore. Ratios are clamped to `(0, 1]`.
pub fn selection_count(ratio: f64, batch_size: usize) -> SelectionCount {
    let ratio = if ratio.is_nan() { 1.0 } else { ratio.clamp(0.0, 1.0) };
    // the slack absorbs representation error in products such as 0.29 * 100
    let floor = libm::floor(ratio * batch_size as f64 + 1e-9) as usize;
    let total = floor.clamp(1, batch_size.max(1));
    let exploit = total.div_ceil(2);
    SelectionCount { total, exploit, explore: total - exploit }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum WeightsMode {
    /// `w_j = 1 / (loss_j + eps)` from the reference model's point-wise loss.
    #[default]
    InverseRefLoss,
    /// `w_j = |phi_j| + eps`.
    AbsFiedler,
}

impl WeightsMode {
    pub fn as_str(self) -> &'static str {
        match self {
            WeightsMode::InverseRefLoss => "inverse_ref_loss",
            WeightsMode::AbsFiedler => "abs_fiedler",
        }
    }
}

impl fmt::Display for WeightsMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for WeightsMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "inverse_ref_loss" => Ok(WeightsMode::InverseRefLoss),
            "abs_fiedler" => Ok(WeightsMode::AbsFiedler),
            _ => Err(Error::InvalidParameter(format!("unknown weights mode `{s}`"))),
        }
    }
}

/// Unnormalized per-point weights, aligned with batch positions.
#[derive(Debug, Clone, PartialEq)]
pub struct SelectionWeights {
    pub mode: WeightsMode,
    pub raw: Vec<f64>,
    pub epsilon: f64,
}

impl SelectionWeights {
    /// Weights of `positions`, normalized to sum to one.
    pub fn probabilities(&self, positions: &[usize]) -> Vec<f64> {
        let total: f64 = positions.iter().map(|&p| self.raw[p]).sum();
        positions.iter().map(|&p| self.raw[p] / total).collect()
    }
}

/// Builds selection weights for one batch.
///
/// `ref_losses` is required in [`WeightsMode::InverseRefLoss`] and ignored
/// otherwise.
pub fn compute_weights(
    mode: WeightsMode,
    ref_losses: Option<&[f64]>,
    scores: &FiedlerScores,
    epsilon: f64,
) -> Result<SelectionWeights> {
    if !(epsilon > 0.0 && epsilon.is_finite()) {
        return Err(Error::InvalidParameter(format!("epsilon must be positive, got {epsilon}")));
    }
    let raw = match mode {
        WeightsMode::InverseRefLoss => {
            let losses = ref_losses.ok_or(Error::MissingRefLosses)?;
            if losses.len() != scores.phi.len() {
                return Err(Error::LengthMismatch {
                    what: "reference losses",
                    expected: scores.phi.len(),
                    found: losses.len(),
                });
            }
            if let Some(row) = losses.iter().position(|l| !(l.is_finite() && *l >= 0.0)) {
                return Err(Error::InvalidLoss { row });
            }
            losses.iter().map(|l| 1.0 / (l + epsilon)).collect()
        }
        WeightsMode::AbsFiedler => scores.phi.iter().map(|p| libm::fabs(*p) + epsilon).collect(),
    };
    Ok(SelectionWeights { mode, raw, epsilon })
}

/// Draws `k` distinct entries of `remainder` without replacement.
///
/// `weights[j]` belongs to `remainder[j]`. Each entry gets the key
/// `u^(1/p_j)` with `u ~ U(0, 1)` and `p_j` its normalized weight; the `k`
/// largest keys win, in key order. This has the same law as drawing one point
/// at a time and renormalizing the weights of the points left.
pub fn explore_select<R: Rng + ?Sized>(
    remainder: &[usize],
    weights: &[f64],
    k: usize,
    rng: &mut R,
) -> Result<Vec<usize>> {
    if k > remainder.len() {
        return Err(Error::SampleTooLarge { k, available: remainder.len() });
    }
    if weights.len() != remainder.len() {
        return Err(Error::LengthMismatch {
            what: "explore weights",
            expected: remainder.len(),
            found: weights.len(),
        });
    }
    if let Some(j) = weights.iter().position(|w| !(w.is_finite() && *w > 0.0)) {
        return Err(Error::InvalidParameter(format!("weight {j} is not positive and finite")));
    }
    if k == 0 {
        return Ok(Vec::new());
    }
    let total: f64 = weights.iter().sum();
    // log-keys ln(u) / p keep the ordering of u^(1/p) without underflow
    let mut keyed: Vec<(f64, usize)> = weights
        .iter()
        .enumerate()
        .map(|(j, w)| (libm::log(open_unit(rng)) / (w / total), j))
        .collect();
    keyed.sort_by(|a, b| b.0.total_cmp(&a.0).then(a.1.cmp(&b.1)));
    Ok(keyed[..k].iter().map(|&(_, j)| remainder[j]).collect())
}

/// Uniform draw from the open interval (0, 1).
fn open_unit<R: Rng + ?Sized>(rng: &mut R) -> f64 {
    ((rng.next_u64() >> 11) as f64 + 0.5) * (1.0 / (1u64 << 53) as f64)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Strategy {
    /// Whole batch, no scoring.
    Full,
    Spectral,
    /// Uniform draws of the same sizes as the spectral selection.
    Uniform,
}

/// Chosen subset of one batch. Indices refer to the training set.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SelectionResult {
    pub batch_index: usize,
    pub ratio_applied: f64,
    pub n_selected: usize,
    pub exploit: Vec<usize>,
    pub explore: Vec<usize>,
    pub strategy: Strategy,
    pub weights_mode: Option<WeightsMode>,
    pub lambda2: Option<f64>,
    pub lambda2_repeated: bool,
    pub rng_stream_id: u64,
}

impl SelectionResult {
    pub fn selected(&self) -> impl Iterator<Item = usize> + '_ {
        self.exploit.iter().chain(&self.explore).copied()
    }
}

/// One scored batch, ready for selection. `members[p]` is the training-set
/// index of batch position `p`.
#[derive(Debug, Clone, Copy)]
pub struct ScoredBatch<'a> {
    pub index: usize,
    pub members: &'a [usize],
    pub scores: &'a FiedlerScores,
    pub ranking: &'a Ranking,
    pub weights: &'a SelectionWeights,
}

/// Exploit set from the ranking head, explore set by weighted sampling over
/// the rest of the ranking.
pub fn select_batch<R: Rng + ?Sized>(
    batch: ScoredBatch<'_>,
    ratio: f64,
    rng: &mut R,
    rng_stream_id: u64,
) -> Result<SelectionResult> {
    let n = batch.members.len();
    if batch.scores.phi.len() != n || batch.ranking.order.len() != n || batch.weights.raw.len() != n {
        return Err(Error::LengthMismatch {
            what: "batch scores",
            expected: n,
            found: batch.scores.phi.len(),
        });
    }
    let count = selection_count(ratio, n);
    let (head, rest) = batch.ranking.order.split_at(count.exploit);
    let probs = batch.weights.probabilities(rest);
    let picked = explore_select(rest, &probs, count.explore, rng)?;
    Ok(SelectionResult {
        batch_index: batch.index,
        ratio_applied: ratio,
        n_selected: count.total,
        exploit: head.iter().map(|&p| batch.members[p]).collect(),
        explore: picked.into_iter().map(|p| batch.members[p]).collect(),
        strategy: Strategy::Spectral,
        weights_mode: Some(batch.weights.mode),
        lambda2: Some(batch.scores.lambda2),
        lambda2_repeated: batch.scores.lambda2_repeated,
        rng_stream_id,
    })
}

/// Same counts as [`select_batch`], but both parts drawn uniformly.
pub fn uniform_select<R: Rng + ?Sized>(
    batch_index: usize,
    members: &[usize],
    ratio: f64,
    rng: &mut R,
    rng_stream_id: u64,
) -> SelectionResult {
    let count = selection_count(ratio, members.len());
    let drawn: Vec<usize> = index::sample(rng, members.len(), count.total)
        .into_iter()
        .map(|p| members[p])
        .collect();
    let (exploit, explore) = drawn.split_at(count.exploit);
    SelectionResult {
        batch_index,
        ratio_applied: ratio,
        n_selected: count.total,
        exploit: exploit.to_vec(),
        explore: explore.to_vec(),
        strategy: Strategy::Uniform,
        weights_mode: None,
        lambda2: None,
        lambda2_repeated: false,
        rng_stream_id,
    }
}

/// The whole batch, as standard training uses it.
pub fn full_select(batch_index: usize, members: &[usize]) -> SelectionResult {
    SelectionResult {
        batch_index,
        ratio_applied: 1.0,
        n_selected: members.len(),
        exploit: members.to_vec(),
        explore: Vec::new(),
        strategy: Strategy::Full,
        weights_mode: None,
        lambda2: None,
        lambda2_repeated: false,
        rng_stream_id: 0,
    }
}
