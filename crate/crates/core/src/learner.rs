//! Feature-space classifier: softmax regression or a ReLU MLP with a softmax
//! head, trained with plain SGD on mean cross-entropy.

use alloc::format;
use alloc::vec;
use alloc::vec::Vec;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::data::FeatureSet;
use crate::{Error, Result};

/// Probabilities are floored here before taking logs.
pub const PROB_FLOOR: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Dense {
    pub inputs: usize,
    pub outputs: usize,
    /// Row-major `outputs x inputs`.
    pub weights: Vec<f64>,
    pub bias: Vec<f64>,
}

impl Dense {
    fn param_count(&self) -> usize {
        self.weights.len() + self.bias.len()
    }

    fn apply(&self, input: &[f64], out: &mut Vec<f64>) {
        out.clear();
        for o in 0..self.outputs {
            let row = &self.weights[o * self.inputs..(o + 1) * self.inputs];
            out.push(self.bias[o] + row.iter().zip(input).map(|(w, x)| w * x).sum::<f64>());
        }
    }
}

/// Layers `dims[0] -> dims[1] -> ... -> dims[last]`, ReLU between layers and
/// softmax on the output.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LearnerModel {
    layers: Vec<Dense>,
}

impl LearnerModel {
    pub fn zeros(dims: &[usize]) -> Result<Self> {
        validate_dims(dims)?;
        let layers = dims
            .windows(2)
            .map(|w| Dense {
                inputs: w[0],
                outputs: w[1],
                weights: vec![0.0; w[0] * w[1]],
                bias: vec![0.0; w[1]],
            })
            .collect();
        Ok(Self { layers })
    }

    /// He-uniform weights, zero biases.
    pub fn init<R: Rng + ?Sized>(dims: &[usize], rng: &mut R) -> Result<Self> {
        let mut model = Self::zeros(dims)?;
        for layer in &mut model.layers {
            let bound = libm::sqrt(6.0 / layer.inputs as f64);
            for w in &mut layer.weights {
                *w = rng.random_range(-bound..bound);
            }
        }
        Ok(model)
    }

    pub fn layer_dims(&self) -> Vec<usize> {
        let mut dims = vec![self.layers[0].inputs];
        dims.extend(self.layers.iter().map(|l| l.outputs));
        dims
    }

    pub fn input_dim(&self) -> usize {
        self.layers[0].inputs
    }

    pub fn class_count(&self) -> usize {
        self.layers[self.layers.len() - 1].outputs
    }

    pub fn layers(&self) -> &[Dense] {
        &self.layers
    }

    pub fn param_count(&self) -> usize {
        self.layers.iter().map(Dense::param_count).sum()
    }

    /// Flat parameters: per layer, weights then bias.
    pub fn params(&self) -> Vec<f64> {
        let mut out = Vec::with_capacity(self.param_count());
        for l in &self.layers {
            out.extend_from_slice(&l.weights);
            out.extend_from_slice(&l.bias);
        }
        out
    }

    pub fn set_params(&mut self, params: &[f64]) -> Result<()> {
        if params.len() != self.param_count() {
            return Err(Error::LengthMismatch {
                what: "parameters",
                expected: self.param_count(),
                found: params.len(),
            });
        }
        let mut at = 0;
        for l in &mut self.layers {
            let (w, b) = (l.weights.len(), l.bias.len());
            l.weights.copy_from_slice(&params[at..at + w]);
            l.bias.copy_from_slice(&params[at + w..at + w + b]);
            at += w + b;
        }
        Ok(())
    }

    /// Activations of every layer for one input; the last entry holds logits.
    fn forward_trace(&self, input: &[f32]) -> Vec<Vec<f64>> {
        let mut trace = Vec::with_capacity(self.layers.len() + 1);
        trace.push(input.iter().map(|&v| v as f64).collect::<Vec<f64>>());
        let last = self.layers.len() - 1;
        for (k, layer) in self.layers.iter().enumerate() {
            let mut out = Vec::with_capacity(layer.outputs);
            layer.apply(&trace[k], &mut out);
            if k < last {
                for v in &mut out {
                    *v = v.max(0.0);
                }
            }
            trace.push(out);
        }
        trace
    }

    pub fn logits(&self, input: &[f32]) -> Vec<f64> {
        self.forward_trace(input).pop().expect("at least one layer")
    }

    pub fn predict_proba(&self, input: &[f32]) -> Vec<f64> {
        softmax(&self.logits(input))
    }

    /// Most probable class; ties go to the lowest index.
    pub fn predict(&self, input: &[f32]) -> usize {
        argmax(&self.logits(input))
    }

    fn check_input(&self, fs: &FeatureSet) -> Result<()> {
        if fs.dim() != self.input_dim() {
            return Err(Error::InvalidParameter(format!(
                "model expects {} features, data has {}",
                self.input_dim(),
                fs.dim()
            )));
        }
        Ok(())
    }

    fn check_label(&self, row: usize, label: u32) -> Result<()> {
        if label as usize >= self.class_count() {
            return Err(Error::LabelOutOfRange {
                row,
                label,
                classes: self.class_count() as u32,
            });
        }
        Ok(())
    }

    /// Mean cross-entropy over `indices` and its gradient in [`Self::params`]
    /// layout.
    pub fn loss_and_gradient(&self, fs: &FeatureSet, indices: &[usize]) -> Result<(f64, Vec<f64>)> {
        self.check_input(fs)?;
        if indices.is_empty() {
            return Err(Error::Empty("gradient batch"));
        }
        let mut grads: Vec<(Vec<f64>, Vec<f64>)> = self
            .layers
            .iter()
            .map(|l| (vec![0.0; l.weights.len()], vec![0.0; l.bias.len()]))
            .collect();
        let mut total = 0.0;
        for &i in indices {
            let label = fs.labels()[i];
            self.check_label(i, label)?;
            let trace = self.forward_trace(fs.row(i));
            let mut delta = softmax(&trace[trace.len() - 1]);
            total += -libm::log(delta[label as usize].max(PROB_FLOOR));
            delta[label as usize] -= 1.0;

            for k in (0..self.layers.len()).rev() {
                let layer = &self.layers[k];
                let input = &trace[k];
                let (gw, gb) = &mut grads[k];
                for o in 0..layer.outputs {
                    let d = delta[o];
                    gb[o] += d;
                    if d != 0.0 {
                        let row = &mut gw[o * layer.inputs..(o + 1) * layer.inputs];
                        for (g, x) in row.iter_mut().zip(input) {
                            *g += d * x;
                        }
                    }
                }
                if k > 0 {
                    let mut back = vec![0.0; layer.inputs];
                    for o in 0..layer.outputs {
                        let row = &layer.weights[o * layer.inputs..(o + 1) * layer.inputs];
                        for (b, w) in back.iter_mut().zip(row) {
                            *b += w * delta[o];
                        }
                    }
                    // relu'(z) = 1 iff the stored activation is positive
                    for (b, a) in back.iter_mut().zip(input) {
                        if *a <= 0.0 {
                            *b = 0.0;
                        }
                    }
                    delta = back;
                }
            }
        }
        let scale = 1.0 / indices.len() as f64;
        let mut flat = Vec::with_capacity(self.param_count());
        for (gw, gb) in grads {
            flat.extend(gw.into_iter().map(|g| g * scale));
            flat.extend(gb.into_iter().map(|g| g * scale));
        }
        Ok((total * scale, flat))
    }

    /// Mean cross-entropy over `indices`.
    pub fn mean_loss(&self, fs: &FeatureSet, indices: &[usize]) -> Result<f64> {
        self.check_input(fs)?;
        if indices.is_empty() {
            return Err(Error::Empty("loss batch"));
        }
        let mut total = 0.0;
        for &i in indices {
            total += self.sample_loss(fs, i)?;
        }
        Ok(total / indices.len() as f64)
    }

    fn sample_loss(&self, fs: &FeatureSet, i: usize) -> Result<f64> {
        let label = fs.labels()[i];
        self.check_label(i, label)?;
        let p = self.predict_proba(fs.row(i));
        Ok(-libm::log(p[label as usize].max(PROB_FLOOR)))
    }

    /// `params -= learning_rate * gradient`.
    pub fn sgd_step(&mut self, gradient: &[f64], learning_rate: f64) -> Result<()> {
        if gradient.len() != self.param_count() {
            return Err(Error::LengthMismatch {
                what: "gradient",
                expected: self.param_count(),
                found: gradient.len(),
            });
        }
        let mut at = 0;
        for l in &mut self.layers {
            for w in l.weights.iter_mut().chain(l.bias.iter_mut()) {
                *w -= learning_rate * gradient[at];
                at += 1;
            }
        }
        Ok(())
    }

    pub fn is_finite(&self) -> bool {
        self.layers
            .iter()
            .all(|l| l.weights.iter().chain(&l.bias).all(|v| v.is_finite()))
    }
}

fn validate_dims(dims: &[usize]) -> Result<()> {
    if dims.len() < 2 || dims.contains(&0) {
        return Err(Error::InvalidParameter(format!(
            "layer dims need at least two positive entries, got {dims:?}"
        )));
    }
    Ok(())
}

pub fn softmax(logits: &[f64]) -> Vec<f64> {
    let max = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let exps: Vec<f64> = logits.iter().map(|z| libm::exp(z - max)).collect();
    let sum: f64 = exps.iter().sum();
    exps.into_iter().map(|e| e / sum).collect()
}

fn argmax(values: &[f64]) -> usize {
    let mut best = 0;
    for (i, v) in values.iter().enumerate() {
        if *v > values[best] {
            best = i;
        }
    }
    best
}

/// Per-sample `-ln p(label)`, with `p` floored at [`PROB_FLOOR`].
pub fn pointwise_loss(model: &LearnerModel, fs: &FeatureSet) -> Result<Vec<f64>> {
    model.check_input(fs)?;
    (0..fs.len()).map(|i| model.sample_loss(fs, i)).collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Evaluation {
    /// Percent correct, in `[0, 100]`.
    pub accuracy: f64,
    pub loss: f64,
}

pub fn evaluate(model: &LearnerModel, fs: &FeatureSet) -> Result<Evaluation> {
    if fs.is_empty() {
        return Err(Error::Empty("evaluation set"));
    }
    let losses = pointwise_loss(model, fs)?;
    let correct = (0..fs.len())
        .filter(|&i| model.predict(fs.row(i)) == fs.labels()[i] as usize)
        .count();
    Ok(Evaluation {
        accuracy: 100.0 * correct as f64 / fs.len() as f64,
        loss: losses.iter().sum::<f64>() / fs.len() as f64,
    })
}

/// Recipe for the frozen reference probe.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ProbeConfig {
    pub iterations: usize,
    pub step: f64,
}

impl Default for ProbeConfig {
    fn default() -> Self {
        Self { iterations: 200, step: 0.1 }
    }
}

/// Frozen linear softmax classifier supplying reference losses.
#[derive(Debug, Clone, PartialEq)]
pub struct ProbeModel(LearnerModel);

impl ProbeModel {
    pub fn model(&self) -> &LearnerModel {
        &self.0
    }

    pub fn losses(&self, fs: &FeatureSet) -> Result<Vec<f64>> {
        pointwise_loss(&self.0, fs)
    }
}

/// Full-batch gradient descent from zero weights.
///
/// The recipe is deterministic, so `_seed` only documents the call contract.
pub fn train_reference_probe(train: &FeatureSet, _seed: u64, config: ProbeConfig) -> Result<ProbeModel> {
    let classes = train.class_count() as usize;
    if classes < 2 || train.class_counts().iter().filter(|&&c| c > 0).count() < 2 {
        return Err(Error::SingleClass);
    }
    let mut model = LearnerModel::zeros(&[train.dim(), classes])?;
    let all: Vec<usize> = (0..train.len()).collect();
    for _ in 0..config.iterations {
        let (_, grad) = model.loss_and_gradient(train, &all)?;
        model.sgd_step(&grad, config.step)?;
    }
    if !model.is_finite() {
        return Err(Error::Numerical("reference probe parameters became non-finite".into()));
    }
    Ok(ProbeModel(model))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::{self, Domain};

    fn fs(rows: &[[f32; 2]], labels: &[u32], classes: u32) -> FeatureSet {
        FeatureSet::new(
            (0..rows.len() as u64).collect(),
            rows.iter().flatten().copied().collect(),
            2,
            labels.to_vec(),
            None,
            classes,
        )
        .unwrap()
    }

    #[test]
    fn uniform_predictor_losses() {
        let data = fs(&[[1.0, 0.0], [0.0, 1.0]], &[0, 9], 10);
        let model = LearnerModel::zeros(&[2, 10]).unwrap();
        for l in pointwise_loss(&model, &data).unwrap() {
            assert!((l - libm::log(10.0)).abs() < 1e-12);
        }
        // all logits tie, so class 0 wins
        let e = evaluate(&model, &data).unwrap();
        assert_eq!(e.accuracy, 50.0);
    }

    #[test]
    fn confident_predictor_has_zero_loss() {
        let data = fs(&[[1.0, 0.0], [0.0, 1.0]], &[0, 1], 2);
        let mut model = LearnerModel::zeros(&[2, 2]).unwrap();
        model.set_params(&[1000.0, 0.0, 0.0, 1000.0, 0.0, 0.0]).unwrap();
        let losses = pointwise_loss(&model, &data).unwrap();
        assert!(losses.iter().all(|&l| l < 1e-12));
        assert_eq!(evaluate(&model, &data).unwrap().accuracy, 100.0);
    }

    #[test]
    fn label_out_of_range() {
        let data = fs(&[[1.0, 0.0]], &[2], 3);
        let model = LearnerModel::zeros(&[2, 2]).unwrap();
        assert!(matches!(pointwise_loss(&model, &data), Err(Error::LabelOutOfRange { .. })));
    }

    #[test]
    fn zero_iteration_probe_is_uniform() {
        let data = fs(&[[1.0, 0.5], [-1.0, 0.2], [0.3, 0.3]], &[0, 1, 1], 2);
        let probe = train_reference_probe(&data, 0, ProbeConfig { iterations: 0, step: 0.1 }).unwrap();
        for l in probe.losses(&data).unwrap() {
            assert!((l - core::f64::consts::LN_2).abs() < 1e-12);
        }
    }

    #[test]
    fn probe_rejects_single_class() {
        let data = fs(&[[1.0, 0.5], [-1.0, 0.2]], &[1, 1], 2);
        assert_eq!(
            train_reference_probe(&data, 0, ProbeConfig::default()),
            Err(Error::SingleClass)
        );
    }

    #[test]
    fn evaluation_is_pure() {
        let data = fs(&[[1.0, 0.5], [-1.0, 0.2]], &[0, 1], 2);
        let model = LearnerModel::init(&[2, 4, 2], &mut rng::stream(1, Domain::Init, 0, 0)).unwrap();
        let before = model.clone();
        evaluate(&model, &data).unwrap();
        assert_eq!(model, before);
    }

    #[test]
    fn sgd_reduces_loss() {
        let data = fs(&[[1.0, 0.5], [-1.0, 0.2], [0.8, -0.3], [-0.6, -0.9]], &[0, 1, 0, 1], 2);
        let mut model = LearnerModel::init(&[2, 8, 2], &mut rng::stream(2, Domain::Init, 0, 0)).unwrap();
        let idx = [0, 1, 2, 3];
        let start = model.mean_loss(&data, &idx).unwrap();
        for _ in 0..50 {
            let (_, g) = model.loss_and_gradient(&data, &idx).unwrap();
            model.sgd_step(&g, 0.1).unwrap();
        }
        assert!(model.mean_loss(&data, &idx).unwrap() < start);
    }
}
