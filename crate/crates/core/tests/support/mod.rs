//! Reference implementations used as test oracles. Nothing here calls the
//! code under test.

#![allow(dead_code)]

use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// `n x d` standard normal rows, row-major.
pub fn gaussian_rows(rng: &mut ChaCha8Rng, n: usize, d: usize) -> Vec<f32> {
    (0..n * d).map(|_| rng.sample::<f64, _>(StandardNormal) as f32).collect()
}

/// Dense cosine-similarity Laplacian built the long way round, in f64.
pub fn naive_laplacian(rows: &[f32], d: usize, clamp: bool) -> Vec<Vec<f64>> {
    let n = rows.len() / d;
    let v: Vec<Vec<f64>> = rows.chunks(d).map(|r| r.iter().map(|&x| x as f64).collect()).collect();
    let norm = |a: &[f64]| a.iter().map(|x| x * x).sum::<f64>().sqrt();
    let mut s = vec![vec![0.0; n]; n];
    for i in 0..n {
        for j in 0..n {
            let c = v[i].iter().zip(&v[j]).map(|(a, b)| a * b).sum::<f64>() / (norm(&v[i]) * norm(&v[j]));
            s[i][j] = if i == j { 1.0 } else if clamp { c.max(0.0) } else { c };
        }
    }
    let mut l = vec![vec![0.0; n]; n];
    for i in 0..n {
        let deg: f64 = s[i].iter().sum();
        for j in 0..n {
            l[i][j] = if i == j { deg } else { 0.0 } - s[i][j];
        }
    }
    l
}

/// Number of eigenvalues of symmetric `a` strictly below `x`, by Sylvester's
/// law of inertia: the count of negative pivots of an LDL^T factorization of
/// `a - x I`.
///
/// Unpivoted LDL^T breaks down near the eigenvalues of leading submatrices,
/// so every cyclic shift of the index order (inertia is invariant under
/// symmetric permutation) is tried and the one with the best-conditioned
/// pivots wins.
pub fn count_below(a: &[Vec<f64>], x: f64) -> usize {
    let scale = a.iter().flatten().map(|v| v.abs()).fold(1.0, f64::max);
    match best_inertia(a, x, scale) {
        (smallest, count) if smallest > 1e-12 * scale => count,
        // every ordering hits a (near) zero pivot; step off it
        _ => best_inertia(a, x + 1e-13 * scale, scale).1,
    }
}

fn best_inertia(a: &[Vec<f64>], x: f64, scale: f64) -> (f64, usize) {
    let n = a.len();
    let mut best = (f64::NEG_INFINITY, 0);
    for shift in 0..n {
        let order: Vec<usize> = (0..n).map(|i| (i + shift) % n).collect();
        let (smallest, negatives) = ldl_pivots(a, x, &order);
        if smallest > best.0 {
            best = (smallest, negatives);
        }
        if smallest > 1e-6 * scale {
            break;
        }
    }
    best
}

/// Smallest pivot magnitude and negative-pivot count of `P (a - x I) P^T`.
fn ldl_pivots(a: &[Vec<f64>], x: f64, order: &[usize]) -> (f64, usize) {
    let n = a.len();
    let mut m: Vec<Vec<f64>> = order
        .iter()
        .map(|&i| order.iter().map(|&j| a[i][j] - if i == j { x } else { 0.0 }).collect())
        .collect();
    let mut smallest = f64::INFINITY;
    let mut negatives = 0;
    for k in 0..n {
        let pivot = m[k][k];
        smallest = smallest.min(pivot.abs());
        if pivot <= 0.0 {
            negatives += 1;
        }
        if pivot == 0.0 {
            return (0.0, negatives);
        }
        for i in k + 1..n {
            let f = m[i][k] / pivot;
            for j in k + 1..n {
                m[i][j] -= f * m[k][j];
            }
        }
    }
    (smallest, negatives)
}

/// The `k`-th smallest eigenvalue (0-based) by bisection on the inertia count.
pub fn eigenvalue_by_bisection(a: &[Vec<f64>], k: usize) -> f64 {
    // Gershgorin bounds
    let mut lo = f64::INFINITY;
    let mut hi = f64::NEG_INFINITY;
    for (i, row) in a.iter().enumerate() {
        let r: f64 = row.iter().enumerate().filter(|&(j, _)| j != i).map(|(_, v)| v.abs()).sum();
        lo = lo.min(row[i] - r);
        hi = hi.max(row[i] + r);
    }
    lo -= 1.0;
    hi += 1.0;
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if mid <= lo || mid >= hi {
            break;
        }
        if count_below(a, mid) > k {
            hi = mid;
        } else {
            lo = mid;
        }
    }
    0.5 * (lo + hi)
}

/// Solves `m x = b` by Gaussian elimination with partial pivoting.
pub fn solve(m: &[Vec<f64>], b: &[f64]) -> Vec<f64> {
    let n = m.len();
    let mut a: Vec<Vec<f64>> = m.iter().zip(b).map(|(r, &v)| {
        let mut r = r.clone();
        r.push(v);
        r
    }).collect();
    for k in 0..n {
        let p = (k..n).max_by(|&i, &j| a[i][k].abs().total_cmp(&a[j][k].abs())).unwrap();
        a.swap(k, p);
        if a[k][k].abs() < 1e-300 {
            a[k][k] = 1e-300;
        }
        for i in k + 1..n {
            let f = a[i][k] / a[k][k];
            for j in k..=n {
                a[i][j] -= f * a[k][j];
            }
        }
    }
    let mut x = vec![0.0; n];
    for i in (0..n).rev() {
        let s: f64 = (i + 1..n).map(|j| a[i][j] * x[j]).sum();
        x[i] = (a[i][n] - s) / a[i][i];
    }
    x
}

/// Unit eigenvector for the eigenvalue near `lambda`, by inverse iteration
/// with a slightly shifted `lambda`.
pub fn inverse_iteration(a: &[Vec<f64>], lambda: f64) -> Vec<f64> {
    let n = a.len();
    let shift = lambda + 1e-10 * lambda.abs().max(1.0);
    let mut m = a.to_vec();
    for (i, row) in m.iter_mut().enumerate() {
        row[i] -= shift;
    }
    let mut x: Vec<f64> = (0..n).map(|i| 1.0 + 0.37 * i as f64).collect();
    for _ in 0..8 {
        x = solve(&m, &x);
        let norm = x.iter().map(|v| v * v).sum::<f64>().sqrt();
        x.iter_mut().for_each(|v| *v /= norm);
    }
    x
}

/// Probability of each ordered draw sequence under one-at-a-time sampling
/// with renormalization after every draw.
pub fn sequential_sequence_probability(weights: &[f64], sequence: &[usize]) -> f64 {
    let mut left: f64 = weights.iter().sum();
    let mut p = 1.0;
    for &j in sequence {
        p *= weights[j] / left;
        left -= weights[j];
    }
    p
}

/// Straight-line sampler: draw one point at a time, renormalizing the weights
/// of the points left.
pub fn sequential_sample(weights: &[f64], k: usize, rng: &mut ChaCha8Rng) -> Vec<usize> {
    let mut alive: Vec<usize> = (0..weights.len()).collect();
    let mut out = Vec::new();
    for _ in 0..k {
        let total: f64 = alive.iter().map(|&j| weights[j]).sum();
        let mut u = rng.random::<f64>() * total;
        let mut pick = alive.len() - 1;
        for (slot, &j) in alive.iter().enumerate() {
            if u < weights[j] {
                pick = slot;
                break;
            }
            u -= weights[j];
        }
        out.push(alive.remove(pick));
    }
    out
}

/// Classic perceptron; returns whether it separated the data.
pub fn perceptron_separates(rows: &[[f64; 2]], positive: &[bool]) -> bool {
    let mut w = [0.0; 3];
    for _ in 0..1000 {
        let mut mistakes = 0;
        for (x, &y) in rows.iter().zip(positive) {
            let t = if y { 1.0 } else { -1.0 };
            if t * (w[0] * x[0] + w[1] * x[1] + w[2]) <= 0.0 {
                w[0] += t * x[0];
                w[1] += t * x[1];
                w[2] += t;
                mistakes += 1;
            }
        }
        if mistakes == 0 {
            return true;
        }
    }
    false
}

/// Trapezoid-rule integral of `f` over `[lo, hi]` with `steps` panels.
pub fn trapezoid(f: impl Fn(f64) -> f64, lo: f64, hi: f64, steps: usize) -> f64 {
    let h = (hi - lo) / steps as f64;
    let inner: f64 = (1..steps).map(|i| f(lo + i as f64 * h)).sum();
    h * (0.5 * f(lo) + inner + 0.5 * f(hi))
}
