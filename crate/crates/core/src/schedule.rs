//! Filter-ratio schedules.
//!
//! A schedule assigns a filter ratio in `(0, 1]` to every global step
//! `g = epoch * batches_per_epoch + batch`. Six policies are available; the
//! AIMD ones are reactive and produce their values online through
//! [`AimdState::step`].

use alloc::format;
use alloc::vec::Vec;
use core::f64::consts::PI;
use core::fmt;
use core::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::{Error, Result};

/// Default multiplier for `k = steepness_scale / total_steps`.
pub const DEFAULT_STEEPNESS_SCALE: f64 = 30.0;

const BISECTION_ITERATIONS: usize = 200;
const CALIBRATION_TOLERANCE: f64 = 1e-3;

/// Parameters of `f(x) = a + (b - a) / (1 + exp(-k (x - x0)))`, with `x` the
/// global step index.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SigmoidParams {
    pub a: f64,
    pub b: f64,
    pub k: f64,
    pub x0: f64,
}

impl SigmoidParams {
    pub fn eval(&self, x: f64) -> f64 {
        self.a + (self.b - self.a) / (1.0 + libm::exp(-self.k * (x - self.x0)))
    }

    /// `(1/T) * sum_{i in 0..T} f(i)`.
    pub fn discrete_mean(&self, total_steps: usize) -> f64 {
        discrete_mean(self.a, self.b, self.k, self.x0, total_steps)
    }

    fn validate(&self, total_steps: usize) -> Result<()> {
        let ok = 0.0 < self.a
            && self.a < self.b
            && self.b <= 1.0
            && self.k > 0.0
            && self.x0 >= 0.0
            && self.x0 <= total_steps as f64;
        if ok && self.k.is_finite() {
            Ok(())
        } else {
            Err(Error::InvalidParameter(format!(
                "sigmoid parameters {self:?} violate 0 < a < b <= 1, k > 0, 0 <= x0 <= {total_steps}"
            )))
        }
    }
}

fn discrete_mean(a: f64, b: f64, k: f64, x0: f64, total_steps: usize) -> f64 {
    let sum: f64 = (0..total_steps)
        .map(|i| 1.0 / (1.0 + libm::exp(-k * (i as f64 - x0))))
        .sum();
    a + (b - a) * sum / total_steps as f64
}

/// Targets for sigmoid calibration.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RatioTargets {
    pub mean: f64,
    pub max: f64,
    pub min: f64,
}

impl Default for RatioTargets {
    fn default() -> Self {
        Self { mean: 0.3, max: 0.88, min: 0.18 }
    }
}

/// Fits a sigmoid to a mean/max/min triple.
///
/// `a` and `b` are pinned to the bounds and `k = steepness_scale / T`; the
/// midpoint is found by bisection on `[0, T]`, where the discrete mean is
/// strictly decreasing in `x0`.
pub fn calibrate_sigmoid(
    targets: RatioTargets,
    total_steps: usize,
    steepness_scale: f64,
) -> Result<SigmoidParams> {
    let RatioTargets { mean, max, min } = targets;
    if !(0.0 < min && min < mean && mean < max && max <= 1.0) {
        return Err(Error::Infeasible(format!(
            "need 0 < min < mean < max <= 1, got min={min}, mean={mean}, max={max}"
        )));
    }
    if total_steps < 2 {
        return Err(Error::InvalidParameter(format!("total_steps must be >= 2, got {total_steps}")));
    }
    if !(steepness_scale > 0.0 && steepness_scale.is_finite()) {
        return Err(Error::InvalidParameter("steepness_scale must be positive".into()));
    }
    let t = total_steps as f64;
    let k = steepness_scale / t;
    let mean_at = |x0: f64| discrete_mean(min, max, k, x0, total_steps);

    let (mut lo, mut hi) = (0.0, t);
    let (upper, lower) = (mean_at(lo), mean_at(hi));
    if mean > upper + CALIBRATION_TOLERANCE || mean < lower - CALIBRATION_TOLERANCE {
        return Err(Error::Infeasible(format!(
            "mean {mean} outside the reachable range [{lower:.6}, {upper:.6}] for x0 in [0, {t}]"
        )));
    }
    for _ in 0..BISECTION_ITERATIONS {
        let mid = 0.5 * (lo + hi);
        if mean_at(mid) > mean {
            lo = mid;
        } else {
            hi = mid;
        }
        if hi - lo <= 1e-12 * t {
            break;
        }
    }
    let x0 = 0.5 * (lo + hi);
    let achieved = mean_at(x0);
    if libm::fabs(achieved - mean) >= CALIBRATION_TOLERANCE {
        return Err(Error::Numerical(format!(
            "bisection reached mean {achieved} for target {mean}"
        )));
    }
    Ok(SigmoidParams { a: min, b: max, k, x0 })
}

/// Parameters of the reactive AIMD controller.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AimdParams {
    pub delta_add: f64,
    pub beta_mult: f64,
    pub streak_limit: u32,
    pub r_min: f64,
    pub r_max: f64,
}

impl AimdParams {
    pub fn mellow() -> Self {
        Self { delta_add: 0.005, beta_mult: 1.5, streak_limit: 3, r_min: 0.18, r_max: 0.88 }
    }

    pub fn aggressive() -> Self {
        Self { beta_mult: 2.0, ..Self::mellow() }
    }

    fn validate(&self) -> Result<()> {
        let ok = 0.0 < self.r_min
            && self.r_min <= self.r_max
            && self.r_max <= 1.0
            && self.delta_add >= 0.0
            && self.beta_mult >= 1.0
            && self.streak_limit >= 1;
        if ok {
            Ok(())
        } else {
            Err(Error::InvalidParameter(format!("invalid AIMD parameters {self:?}")))
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Feedback {
    Improved,
    Degraded,
}

/// AIMD controller state.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AimdState {
    pub ratio: f64,
    pub degrade_streak: u32,
    /// Running mean of every ratio emitted so far.
    pub history_mean: f64,
    pub emitted: u64,
    pub params: AimdParams,
}

impl AimdState {
    /// Starts at `r_min`, which counts as the first emitted ratio.
    pub fn new(params: AimdParams) -> Result<Self> {
        params.validate()?;
        Ok(Self {
            ratio: params.r_min,
            degrade_streak: 0,
            history_mean: params.r_min,
            emitted: 1,
            params,
        })
    }

    /// Applies one feedback signal and returns the next ratio.
    ///
    /// Improvement lowers the ratio additively. Degradation raises it
    /// multiplicatively, except that the `streak_limit`-th consecutive
    /// degradation resets it to the historical mean.
    pub fn step(&mut self, feedback: Feedback) -> f64 {
        let p = self.params;
        match feedback {
            Feedback::Improved => {
                self.ratio = (self.ratio - p.delta_add).max(p.r_min);
                self.degrade_streak = 0;
            }
            Feedback::Degraded if self.degrade_streak + 1 >= p.streak_limit => {
                self.ratio = self.history_mean.clamp(p.r_min, p.r_max);
                self.degrade_streak = 0;
            }
            Feedback::Degraded => {
                self.ratio = (self.ratio * p.beta_mult).min(p.r_max);
                self.degrade_streak += 1;
            }
        }
        self.emitted += 1;
        self.history_mean += (self.ratio - self.history_mean) / self.emitted as f64;
        self.ratio
    }
}

pub fn aimd_step(state: &AimdState, feedback: Feedback) -> (AimdState, f64) {
    let mut next = *state;
    let ratio = next.step(feedback);
    (next, ratio)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PolicyKind {
    Constant,
    Sigmoid,
    Sinc,
    Sinusoid,
    Gamma,
    AimdMellow,
    AimdAggressive,
}

impl PolicyKind {
    pub const ALL: [PolicyKind; 7] = [
        PolicyKind::Constant,
        PolicyKind::Sigmoid,
        PolicyKind::Sinc,
        PolicyKind::Sinusoid,
        PolicyKind::Gamma,
        PolicyKind::AimdMellow,
        PolicyKind::AimdAggressive,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            PolicyKind::Constant => "constant",
            PolicyKind::Sigmoid => "sigmoid",
            PolicyKind::Sinc => "sinc",
            PolicyKind::Sinusoid => "sinusoid",
            PolicyKind::Gamma => "gamma",
            PolicyKind::AimdMellow => "aimd_mellow",
            PolicyKind::AimdAggressive => "aimd_aggressive",
        }
    }
}

impl fmt::Display for PolicyKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for PolicyKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        PolicyKind::ALL
            .into_iter()
            .find(|k| k.as_str() == s)
            .ok_or_else(|| Error::InvalidParameter(format!("unknown schedule policy `{s}`")))
    }
}

/// A fully parameterized policy.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "policy", rename_all = "snake_case")]
pub enum Policy {
    Constant { value: f64 },
    Sigmoid(SigmoidParams),
    /// `r_min + (r_peak - r_min) * |sinc(scale * (i - T/2) / T)|`.
    Sinc { r_min: f64, r_peak: f64, scale: f64 },
    /// `center + amplitude * sin(2 pi cycles i / T)`, clipped to `[r_min, r_max]`.
    Sinusoid { center: f64, amplitude: f64, cycles: f64, r_min: f64, r_max: f64 },
    /// `r_min + (r_max - r_min) * (i / (T - 1))^exponent`.
    Gamma { r_min: f64, r_max: f64, exponent: f64 },
    AimdMellow(AimdParams),
    AimdAggressive(AimdParams),
}

impl Policy {
    pub fn kind(&self) -> PolicyKind {
        match self {
            Policy::Constant { .. } => PolicyKind::Constant,
            Policy::Sigmoid(_) => PolicyKind::Sigmoid,
            Policy::Sinc { .. } => PolicyKind::Sinc,
            Policy::Sinusoid { .. } => PolicyKind::Sinusoid,
            Policy::Gamma { .. } => PolicyKind::Gamma,
            Policy::AimdMellow(_) => PolicyKind::AimdMellow,
            Policy::AimdAggressive(_) => PolicyKind::AimdAggressive,
        }
    }

    pub fn is_reactive(&self) -> bool {
        matches!(self, Policy::AimdMellow(_) | Policy::AimdAggressive(_))
    }

    pub fn aimd_params(&self) -> Option<AimdParams> {
        match self {
            Policy::AimdMellow(p) | Policy::AimdAggressive(p) => Some(*p),
            _ => None,
        }
    }

    fn validate(&self, total_steps: usize) -> Result<()> {
        let bounds = |lo: f64, hi: f64| {
            if 0.0 < lo && lo < hi && hi <= 1.0 {
                Ok(())
            } else {
                Err(Error::InvalidParameter(format!(
                    "{} bounds must satisfy 0 < lower < upper <= 1, got ({lo}, {hi})",
                    self.kind()
                )))
            }
        };
        match *self {
            Policy::Constant { value } if value > 0.0 && value <= 1.0 => Ok(()),
            Policy::Constant { value } => Err(Error::InvalidParameter(format!(
                "constant ratio must lie in (0, 1], got {value}"
            ))),
            Policy::Sigmoid(p) => p.validate(total_steps),
            Policy::Sinc { r_min, r_peak, scale } => {
                bounds(r_min, r_peak)?;
                positive("sinc scale", scale)
            }
            Policy::Sinusoid { amplitude, cycles, r_min, r_max, center } => {
                bounds(r_min, r_max)?;
                positive("sinusoid cycles", cycles)?;
                if amplitude < 0.0 || !center.is_finite() {
                    return Err(Error::InvalidParameter("sinusoid needs a finite center and nonnegative amplitude".into()));
                }
                Ok(())
            }
            Policy::Gamma { r_min, r_max, exponent } => {
                bounds(r_min, r_max)?;
                positive("gamma exponent", exponent)
            }
            Policy::AimdMellow(p) | Policy::AimdAggressive(p) => p.validate(),
        }
    }

    /// Closed-form value at step `i` of `total_steps`; `None` for reactive policies.
    pub fn value_at(&self, i: usize, total_steps: usize) -> Option<f64> {
        let x = i as f64;
        let t = total_steps as f64;
        let v = match *self {
            Policy::Constant { value } => value,
            Policy::Sigmoid(p) => p.eval(x),
            Policy::Sinc { r_min, r_peak, scale } => {
                r_min + (r_peak - r_min) * libm::fabs(sinc(scale * (x - t / 2.0) / t))
            }
            Policy::Sinusoid { center, amplitude, cycles, r_min, r_max } => {
                (center + amplitude * libm::sin(2.0 * PI * cycles * x / t)).clamp(r_min, r_max)
            }
            Policy::Gamma { r_min, r_max, exponent } => {
                let span = if total_steps > 1 { t - 1.0 } else { 1.0 };
                r_min + (r_max - r_min) * libm::pow(x / span, exponent)
            }
            Policy::AimdMellow(_) | Policy::AimdAggressive(_) => return None,
        };
        Some(v)
    }
}

fn positive(what: &str, v: f64) -> Result<()> {
    if v > 0.0 && v.is_finite() {
        Ok(())
    } else {
        Err(Error::InvalidParameter(format!("{what} must be positive, got {v}")))
    }
}

/// Normalized sinc, `sin(pi x) / (pi x)`.
fn sinc(x: f64) -> f64 {
    if libm::fabs(x) < 1e-12 {
        1.0
    } else {
        libm::sin(PI * x) / (PI * x)
    }
}

/// The global filter-ratio sequence for a run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Schedule {
    pub values: Vec<f64>,
    pub policy: Policy,
    pub reactive: bool,
}

impl Schedule {
    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn ratio_at(&self, step: usize) -> Result<f64> {
        self.values
            .get(step)
            .copied()
            .ok_or(Error::ScheduleExhausted { step, len: self.values.len() })
    }

    pub fn mean(&self) -> f64 {
        self.values.iter().sum::<f64>() / self.values.len() as f64
    }
}

/// Evaluates `policy` at every one of the `n_epochs * m_batches` steps.
///
/// Reactive policies get `r_min` placeholders.
pub fn build_schedule(policy: Policy, n_epochs: usize, m_batches: usize) -> Result<Schedule> {
    if n_epochs == 0 || m_batches == 0 {
        return Err(Error::InvalidParameter(format!(
            "schedule needs at least one epoch and one batch, got {n_epochs} x {m_batches}"
        )));
    }
    let total = n_epochs * m_batches;
    policy.validate(total)?;
    let values = match policy.aimd_params() {
        Some(p) => alloc::vec![p.r_min; total],
        None => (0..total)
            .map(|i| policy.value_at(i, total).expect("non-reactive"))
            .collect(),
    };
    Ok(Schedule { values, policy, reactive: policy.is_reactive() })
}
