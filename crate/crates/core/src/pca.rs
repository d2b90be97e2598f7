//! Two-component PCA by power iteration, used to export plot coordinates.

use alloc::vec;
use alloc::vec::Vec;

use crate::{Error, Result};

const TOLERANCE: f64 = 1e-9;
const MAX_ITERATIONS: usize = 20_000;

/// Projects centered rows onto the top two principal directions.
///
/// One-dimensional input yields a zero second coordinate. If power iteration
/// has not met the tolerance after its iteration cap the current estimate is
/// used; the directions stay orthonormal either way.
pub fn project_2d(features: &[f32], dim: usize) -> Result<Vec<[f64; 2]>> {
    if dim == 0 || !features.len().is_multiple_of(dim) {
        return Err(Error::LengthMismatch { what: "projection input", expected: dim, found: features.len() });
    }
    let n = features.len() / dim;
    if n == 0 {
        return Err(Error::Empty("projection input"));
    }
    let mut mean = vec![0.0; dim];
    for row in features.chunks_exact(dim) {
        for (m, &v) in mean.iter_mut().zip(row) {
            *m += v as f64;
        }
    }
    for m in &mut mean {
        *m /= n as f64;
    }
    let centered: Vec<Vec<f64>> = features
        .chunks_exact(dim)
        .map(|r| r.iter().zip(&mean).map(|(&v, m)| v as f64 - m).collect())
        .collect();
    let mut cov = vec![0.0; dim * dim];
    for r in &centered {
        for i in 0..dim {
            for j in 0..dim {
                cov[i * dim + j] += r[i] * r[j];
            }
        }
    }

    let first = dominant_direction(&cov, dim, &[]);
    let second = if dim > 1 {
        let lambda = rayleigh(&cov, dim, &first);
        let mut deflated = cov.clone();
        for i in 0..dim {
            for j in 0..dim {
                deflated[i * dim + j] -= lambda * first[i] * first[j];
            }
        }
        dominant_direction(&deflated, dim, &[&first])
    } else {
        vec![0.0]
    };

    Ok(centered
        .iter()
        .map(|r| [dot(r, &first), if dim > 1 { dot(r, &second) } else { 0.0 }])
        .collect())
}

fn dominant_direction(m: &[f64], dim: usize, against: &[&[f64]]) -> Vec<f64> {
    let mut v: Vec<f64> = (0..dim).map(|i| 1.0 + 0.01 * i as f64).collect();
    orthonormalize(&mut v, against);
    for _ in 0..MAX_ITERATIONS {
        let mut w = matvec(m, dim, &v);
        orthonormalize(&mut w, against);
        if norm(&w) == 0.0 {
            // v spans a null direction already
            return v;
        }
        let delta: f64 = w.iter().zip(&v).map(|(a, b)| (a - b) * (a - b)).sum();
        v = w;
        if libm::sqrt(delta) < TOLERANCE {
            break;
        }
    }
    v
}

/// Removes components along `against` and normalizes; falls back to a basis
/// vector if nothing is left.
fn orthonormalize(v: &mut Vec<f64>, against: &[&[f64]]) {
    let strip = |v: &mut Vec<f64>| {
        for u in against {
            let p = dot(v, u);
            for (x, y) in v.iter_mut().zip(u.iter()) {
                *x -= p * y;
            }
        }
    };
    strip(v);
    let n = norm(v);
    if n > 1e-12 {
        for x in v.iter_mut() {
            *x /= n;
        }
        return;
    }
    for k in 0..v.len() {
        let mut e = vec![0.0; v.len()];
        e[k] = 1.0;
        strip(&mut e);
        let n = norm(&e);
        if n > 1e-6 {
            for (x, y) in v.iter_mut().zip(e) {
                *x = y / n;
            }
            return;
        }
    }
    for x in v.iter_mut() {
        *x = 0.0;
    }
}

fn matvec(m: &[f64], dim: usize, v: &[f64]) -> Vec<f64> {
    (0..dim).map(|i| dot(&m[i * dim..(i + 1) * dim], v)).collect()
}

fn rayleigh(m: &[f64], dim: usize, v: &[f64]) -> f64 {
    dot(v, &matvec(m, dim, v))
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn norm(v: &[f64]) -> f64 {
    libm::sqrt(dot(v, v))
}
