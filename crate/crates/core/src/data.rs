//! Feature corpus, stratified splitting and disjoint batching.

use alloc::collections::BTreeMap;
use alloc::format;
use alloc::vec;
use alloc::vec::Vec;

use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use crate::rng::{self, Domain};
use crate::{Error, Result};

/// Indexed corpus of pre-extracted feature vectors.
///
/// Immutable after construction; every row is finite and nonzero, ids are
/// unique and labels are below `class_count`.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureSet {
    ids: Vec<u64>,
    features: Vec<f32>,
    dim: usize,
    labels: Vec<u32>,
    ref_losses: Option<Vec<f32>>,
    class_count: u32,
}

impl FeatureSet {
    /// Validates and wraps row-major `features` (`ids.len()` rows of `dim`).
    pub fn new(
        ids: Vec<u64>,
        features: Vec<f32>,
        dim: usize,
        labels: Vec<u32>,
        ref_losses: Option<Vec<f32>>,
        class_count: u32,
    ) -> Result<Self> {
        let n = ids.len();
        if n == 0 {
            return Err(Error::Empty("feature set"));
        }
        if dim == 0 {
            return Err(Error::InvalidParameter("feature dimension must be positive".into()));
        }
        if class_count == 0 {
            return Err(Error::InvalidParameter("class count must be positive".into()));
        }
        if features.len() != n * dim {
            return Err(Error::LengthMismatch {
                what: "features",
                expected: n * dim,
                found: features.len(),
            });
        }
        if labels.len() != n {
            return Err(Error::LengthMismatch {
                what: "labels",
                expected: n,
                found: labels.len(),
            });
        }
        if let Some(losses) = &ref_losses {
            if losses.len() != n {
                return Err(Error::LengthMismatch {
                    what: "ref_losses",
                    expected: n,
                    found: losses.len(),
                });
            }
        }

        let mut seen = BTreeMap::new();
        for row in 0..n {
            let values = &features[row * dim..(row + 1) * dim];
            if let Some(col) = values.iter().position(|v| !v.is_finite()) {
                return Err(Error::NonFinite { row, col });
            }
            if values.iter().all(|&v| v == 0.0) {
                return Err(Error::ZeroRow { row });
            }
            if labels[row] >= class_count {
                return Err(Error::LabelOutOfRange {
                    row,
                    label: labels[row],
                    classes: class_count,
                });
            }
            if let Some(losses) = &ref_losses {
                if !(losses[row].is_finite() && losses[row] >= 0.0) {
                    return Err(Error::InvalidLoss { row });
                }
            }
            if seen.insert(ids[row], row).is_some() {
                return Err(Error::DuplicateId { row, id: ids[row] });
            }
        }

        Ok(Self {
            ids,
            features,
            dim,
            labels,
            ref_losses,
            class_count,
        })
    }

    pub fn len(&self) -> usize {
        self.ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ids.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn class_count(&self) -> u32 {
        self.class_count
    }

    pub fn ids(&self) -> &[u64] {
        &self.ids
    }

    pub fn labels(&self) -> &[u32] {
        &self.labels
    }

    /// Row-major feature matrix.
    pub fn features(&self) -> &[f32] {
        &self.features
    }

    pub fn row(&self, index: usize) -> &[f32] {
        &self.features[index * self.dim..(index + 1) * self.dim]
    }

    pub fn ref_losses(&self) -> Option<&[f32]> {
        self.ref_losses.as_deref()
    }

    /// Replaces the reference losses, revalidating them.
    pub fn with_ref_losses(self, losses: Option<Vec<f32>>) -> Result<Self> {
        Self::new(self.ids, self.features, self.dim, self.labels, losses, self.class_count)
    }

    /// Rows at `indices`, in that order. Ids travel with their rows.
    pub fn subset(&self, indices: &[usize]) -> Result<Self> {
        if indices.is_empty() {
            return Err(Error::Empty("subset"));
        }
        let mut features = Vec::with_capacity(indices.len() * self.dim);
        for &i in indices {
            features.extend_from_slice(self.row(i));
        }
        Self::new(
            indices.iter().map(|&i| self.ids[i]).collect(),
            features,
            self.dim,
            indices.iter().map(|&i| self.labels[i]).collect(),
            self.ref_losses
                .as_ref()
                .map(|l| indices.iter().map(|&i| l[i]).collect()),
            self.class_count,
        )
    }

    /// Contiguous features of the given rows.
    pub fn gather(&self, indices: &[usize]) -> Vec<f32> {
        let mut out = Vec::with_capacity(indices.len() * self.dim);
        for &i in indices {
            out.extend_from_slice(self.row(i));
        }
        out
    }

    pub fn class_counts(&self) -> Vec<usize> {
        let mut counts = vec![0; self.class_count as usize];
        for &l in &self.labels {
            counts[l as usize] += 1;
        }
        counts
    }
}

/// Train/validation/test fractions plus the shuffle seed.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SplitSpec {
    pub train_fraction: f64,
    pub val_fraction: f64,
    pub test_fraction: f64,
    pub seed: u64,
}

impl SplitSpec {
    pub fn validate(&self) -> Result<()> {
        let fractions = self.fractions();
        if fractions.iter().any(|f| !(f.is_finite() && *f > 0.0 && *f < 1.0)) {
            return Err(Error::InvalidSplit(format!(
                "fractions must lie in (0, 1), got {fractions:?}"
            )));
        }
        let sum: f64 = fractions.iter().sum();
        if libm::fabs(sum - 1.0) > 1e-9 {
            return Err(Error::InvalidSplit(format!("fractions sum to {sum}, expected 1")));
        }
        Ok(())
    }

    fn fractions(&self) -> [f64; 3] {
        [self.train_fraction, self.val_fraction, self.test_fraction]
    }
}

// Absorbs representation error in products like 0.29 * 100.
const FLOOR_SLACK: f64 = 1e-9;

fn floor_count(x: f64) -> usize {
    libm::floor(x + FLOOR_SLACK) as usize
}

/// Largest-remainder apportionment of `total` over `fractions`.
fn apportion(total: usize, fractions: &[f64; 3]) -> [usize; 3] {
    let mut counts = [0usize; 3];
    let mut rema = [(0.0f64, 0usize); 3];
    for s in 0..3 {
        let exact = total as f64 * fractions[s];
        counts[s] = floor_count(exact);
        rema[s] = (exact - counts[s] as f64, s);
    }
    let mut left = total.saturating_sub(counts.iter().sum());
    rema.sort_by(|a, b| b.0.total_cmp(&a.0).then(a.1.cmp(&b.1)));
    for &(_, s) in rema.iter().cycle() {
        if left == 0 {
            break;
        }
        counts[s] += 1;
        left -= 1;
    }
    counts
}

/// Gives class `c` one more extra sample, moving other classes' extras
/// between splits along a shortest path if needed.
fn augment(c: usize, alloc: &mut [[usize; 3]], extra: &mut [[bool; 3]], deficit: &mut [usize; 3]) -> bool {
    const START: usize = usize::MAX;
    // parent[s] = (previous split, class moved into s)
    let mut parent = [None::<(usize, usize)>; 3];
    let mut queue = Vec::new();
    for s in 0..3 {
        if !extra[c][s] {
            parent[s] = Some((START, c));
            queue.push(s);
        }
    }
    let mut head = 0;
    while head < queue.len() {
        let s = queue[head];
        head += 1;
        if deficit[s] > 0 {
            let mut at = s;
            while let Some((prev, cls)) = parent[at] {
                extra[cls][at] = true;
                alloc[cls][at] += 1;
                if prev == START {
                    break;
                }
                extra[cls][prev] = false;
                alloc[cls][prev] -= 1;
                at = prev;
            }
            deficit[s] -= 1;
            return true;
        }
        for (other, flags) in extra.iter().enumerate() {
            if !flags[s] {
                continue;
            }
            for next in 0..3 {
                if !flags[next] && parent[next].is_none() {
                    parent[next] = Some((s, other));
                    queue.push(next);
                }
            }
        }
    }
    false
}

/// Stratified three-way split.
///
/// Split sizes follow largest-remainder apportionment of `N`; each class gets
/// either the floor or the ceiling of its proportional share in every split.
/// Indices inside each output keep their original relative order.
pub fn split(fs: &FeatureSet, spec: &SplitSpec) -> Result<(FeatureSet, FeatureSet, FeatureSet)> {
    spec.validate()?;
    let fractions = spec.fractions();
    let n = fs.len();
    let counts = fs.class_counts();
    let starved = |min: usize| -> Vec<u32> {
        counts
            .iter()
            .enumerate()
            .filter(|&(_, &c)| c > 0 && c < min)
            .map(|(c, _)| c as u32)
            .collect()
    };
    if n < 3 {
        return Err(Error::SplitTooSmall {
            classes: starved(3),
            detail: format!("{n} samples cannot fill three splits"),
        });
    }
    let targets = apportion(n, &fractions);
    if let Some(s) = targets.iter().position(|&t| t == 0) {
        return Err(Error::SplitTooSmall {
            classes: starved(3),
            detail: format!("split {s} would be empty"),
        });
    }

    // per-class floors, then hand out leftovers to the largest remainders
    let classes = counts.len();
    let mut alloc = vec![[0usize; 3]; classes];
    let mut extra_given = vec![[false; 3]; classes];
    let mut leftover = vec![0usize; classes];
    let mut deficit = targets;
    let mut candidates = Vec::new();
    for (c, &nc) in counts.iter().enumerate() {
        for s in 0..3 {
            let exact = nc as f64 * fractions[s];
            alloc[c][s] = floor_count(exact);
            deficit[s] -= alloc[c][s];
            candidates.push((exact - alloc[c][s] as f64, c, s));
        }
        leftover[c] = nc - alloc[c].iter().sum::<usize>();
    }
    candidates.sort_by(|a, b| b.0.total_cmp(&a.0).then(a.1.cmp(&b.1)).then(a.2.cmp(&b.2)));
    for &(_, c, s) in &candidates {
        if leftover[c] > 0 && deficit[s] > 0 && !extra_given[c][s] {
            alloc[c][s] += 1;
            extra_given[c][s] = true;
            leftover[c] -= 1;
            deficit[s] -= 1;
        }
    }
    // greedy can paint itself into a corner; augmenting paths finish the
    // assignment as a unit-capacity flow from classes to splits
    for c in 0..classes {
        while leftover[c] > 0 && augment(c, &mut alloc, &mut extra_given, &mut deficit) {
            leftover[c] -= 1;
        }
    }
    // only if no flow exists: a class takes two extras in one split
    for c in 0..classes {
        while leftover[c] > 0 {
            let s = (0..3).find(|&s| deficit[s] > 0).expect("deficits cover leftovers");
            alloc[c][s] += 1;
            leftover[c] -= 1;
            deficit[s] -= 1;
        }
    }

    let no_train: Vec<u32> = (0..classes)
        .filter(|&c| counts[c] > 0 && alloc[c][0] == 0)
        .map(|c| c as u32)
        .collect();
    if !no_train.is_empty() {
        return Err(Error::SplitTooSmall {
            classes: no_train,
            detail: "classes without training samples".into(),
        });
    }

    let mut members = vec![Vec::new(); classes];
    for (i, &l) in fs.labels().iter().enumerate() {
        members[l as usize].push(i);
    }
    let mut parts: [Vec<usize>; 3] = [Vec::new(), Vec::new(), Vec::new()];
    for (c, idx) in members.iter_mut().enumerate() {
        let mut rng = rng::stream(spec.seed, Domain::Split, c as u64, 0);
        idx.shuffle(&mut rng);
        let mut start = 0;
        for s in 0..3 {
            parts[s].extend_from_slice(&idx[start..start + alloc[c][s]]);
            start += alloc[c][s];
        }
    }
    for p in parts.iter_mut() {
        p.sort_unstable();
    }
    Ok((fs.subset(&parts[0])?, fs.subset(&parts[1])?, fs.subset(&parts[2])?))
}

/// Ordered disjoint batches covering `0..N`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct BatchPlan {
    pub batches: Vec<Vec<usize>>,
    pub batch_size: usize,
    pub seed: u64,
}

impl BatchPlan {
    pub fn len(&self) -> usize {
        self.batches.len()
    }

    pub fn is_empty(&self) -> bool {
        self.batches.is_empty()
    }
}

/// Shuffles `0..N` with `seed` and cuts it into `ceil(N / batch_size)` batches.
pub fn partition_batches(fs: &FeatureSet, batch_size: usize, seed: u64) -> Result<BatchPlan> {
    partition_indices(fs.len(), batch_size, seed)
}

pub fn partition_indices(n: usize, batch_size: usize, seed: u64) -> Result<BatchPlan> {
    if batch_size == 0 || batch_size > n {
        return Err(Error::InvalidBatchSize { batch_size, n });
    }
    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(&mut rng::stream(seed, Domain::Batching, 0, 0));
    Ok(BatchPlan {
        batches: order.chunks(batch_size).map(|c| c.to_vec()).collect(),
        batch_size,
        seed,
    })
}
