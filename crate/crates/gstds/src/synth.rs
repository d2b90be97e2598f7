//! Synthetic many-class benchmark: unit-variance Gaussian clusters.
//!
//! Class means are `separation * z_c` with `z_c ~ N(0, I)`, so mean gaps grow
//! with both the separation and the dimension.

use gstds_core::data::FeatureSet;
use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SynthParams {
    pub classes: u32,
    pub per_class: usize,
    pub dim: usize,
    pub separation: f64,
    pub seed: u64,
}

impl Default for SynthParams {
    fn default() -> Self {
        Self { classes: 20, per_class: 300, dim: 64, separation: 3.0, seed: 0 }
    }
}

#[derive(Debug, Clone)]
pub struct Synthetic {
    pub features: FeatureSet,
    pub warnings: Vec<String>,
}

pub fn generate(p: &SynthParams) -> gstds_core::Result<Synthetic> {
    if p.classes < 2 || p.per_class == 0 || p.dim == 0 {
        return Err(gstds_core::Error::InvalidParameter(format!(
            "synthetic data needs classes >= 2, per_class >= 1, dim >= 1; got {}, {}, {}",
            p.classes, p.per_class, p.dim
        )));
    }
    if !(p.separation >= 0.0 && p.separation.is_finite()) {
        return Err(gstds_core::Error::InvalidParameter(format!(
            "separation must be finite and nonnegative, got {}",
            p.separation
        )));
    }
    let mut warnings = Vec::new();
    if p.separation == 0.0 {
        warnings.push("separation is 0: all classes share one distribution".to_owned());
    }

    let mut rng = ChaCha8Rng::seed_from_u64(p.seed);
    let mut normal = move || rng.sample::<f64, _>(StandardNormal);
    let means: Vec<Vec<f64>> =
        (0..p.classes).map(|_| (0..p.dim).map(|_| p.separation * normal()).collect()).collect();

    let n = p.classes as usize * p.per_class;
    let mut features = Vec::with_capacity(n * p.dim);
    let mut labels = Vec::with_capacity(n);
    for (c, mean) in means.iter().enumerate() {
        for _ in 0..p.per_class {
            features.extend(mean.iter().map(|m| (m + normal()) as f32));
            labels.push(c as u32);
        }
    }
    let ids = (0..n as u64).collect();
    let features = FeatureSet::new(ids, features, p.dim, labels, None, p.classes)?;
    Ok(Synthetic { features, warnings })
}
