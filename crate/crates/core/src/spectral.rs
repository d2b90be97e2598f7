//! Per-batch similarity graph and Fiedler-vector ranking.
//!
//! For a batch of `n` feature vectors:
//!
//! ```text
//! S_ij = v_i . v_j / (|v_i| |v_j|)      cosine similarity, S_ii = 1
//! D_ii = sum_j S_ij                      degree (includes the diagonal)
//! L    = D - S                           Laplacian, zero row sums
//! ```
//!
//! The Fiedler vector is the eigenvector of the second-smallest eigenvalue of
//! `L`, obtained from a dense cyclic Jacobi eigensolve. Batch sizes stay in the
//! hundreds, where the O(n^3) dense method is both fast enough and robust.

use alloc::vec;
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use crate::{Error, Result};

const JACOBI_MAX_SWEEPS: usize = 100;
const JACOBI_TOLERANCE: f64 = 1e-10;
const SIGN_THRESHOLD: f64 = 1e-9;
const TIE_TOLERANCE: f64 = 1e-9;

/// Dense symmetric matrix, row-major.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SymMatrix {
    n: usize,
    data: Vec<f64>,
}

impl SymMatrix {
    pub fn zeros(n: usize) -> Self {
        Self { n, data: vec![0.0; n * n] }
    }

    /// Wraps row-major entries, symmetrizing as `(A + A^T) / 2`.
    pub fn from_rows(n: usize, data: Vec<f64>) -> Result<Self> {
        if data.len() != n * n {
            return Err(Error::LengthMismatch { what: "matrix", expected: n * n, found: data.len() });
        }
        let mut m = Self { n, data };
        for i in 0..n {
            for j in i + 1..n {
                let avg = 0.5 * (m.get(i, j) + m.get(j, i));
                m.set(i, j, avg);
                m.set(j, i, avg);
            }
        }
        Ok(m)
    }

    pub fn n(&self) -> usize {
        self.n
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.data[i * self.n + j]
    }

    #[inline]
    fn set(&mut self, i: usize, j: usize, v: f64) {
        self.data[i * self.n + j] = v;
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.n..(i + 1) * self.n]
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }

    pub fn frobenius_norm(&self) -> f64 {
        libm::sqrt(self.data.iter().map(|v| v * v).sum())
    }

    fn off_diagonal_norm(&self) -> f64 {
        let mut s = 0.0;
        for i in 0..self.n {
            for j in 0..self.n {
                if i != j {
                    s += self.get(i, j) * self.get(i, j);
                }
            }
        }
        libm::sqrt(s)
    }
}

/// Cosine similarity matrix of a batch.
#[derive(Debug, Clone, PartialEq)]
pub struct SimilarityMatrix(pub SymMatrix);

impl SimilarityMatrix {
    pub fn n(&self) -> usize {
        self.0.n
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.0.get(i, j)
    }

    /// Zeroes negative similarities, which makes the Laplacian PSD.
    pub fn clamp_negative(mut self) -> Self {
        for v in self.0.data.iter_mut() {
            if *v < 0.0 {
                *v = 0.0;
            }
        }
        self
    }
}

/// Graph Laplacian `D - S`.
#[derive(Debug, Clone, PartialEq)]
pub struct LaplacianMatrix(pub SymMatrix);

impl LaplacianMatrix {
    pub fn n(&self) -> usize {
        self.0.n
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.0.get(i, j)
    }
}

/// Cosine similarities of the `n = features.len() / dim` row-major rows.
pub fn cosine_similarity(features: &[f32], dim: usize) -> Result<SimilarityMatrix> {
    if dim == 0 || !features.len().is_multiple_of(dim) {
        return Err(Error::LengthMismatch {
            what: "batch features",
            expected: dim,
            found: features.len(),
        });
    }
    let n = features.len() / dim;
    if n < 2 {
        return Err(Error::BatchTooSmall(n));
    }
    let rows: Vec<Vec<f64>> = features
        .chunks_exact(dim)
        .map(|r| r.iter().map(|&v| v as f64).collect())
        .collect();
    let mut norms = Vec::with_capacity(n);
    for (row, r) in rows.iter().enumerate() {
        if let Some(col) = r.iter().position(|v| !v.is_finite()) {
            return Err(Error::NonFinite { row, col });
        }
        let norm = libm::sqrt(dot(r, r));
        if norm == 0.0 {
            return Err(Error::ZeroRow { row });
        }
        norms.push(norm);
    }
    let mut m = SymMatrix::zeros(n);
    for i in 0..n {
        m.set(i, i, 1.0);
        for j in i + 1..n {
            let s = dot(&rows[i], &rows[j]) / (norms[i] * norms[j]);
            m.set(i, j, s);
            m.set(j, i, s);
        }
    }
    Ok(SimilarityMatrix(m))
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// `L = D - S` with `D_ii = sum_j S_ij`.
///
/// The diagonal is accumulated from the off-diagonal entries (the `S_ii`
/// terms of `D` and `S` cancel), so every row sums to zero up to the
/// rounding of one summation.
pub fn laplacian(s: &SimilarityMatrix) -> LaplacianMatrix {
    let n = s.n();
    let mut l = SymMatrix::zeros(n);
    for i in 0..n {
        let mut degree = 0.0;
        for j in 0..n {
            if i != j {
                let v = s.get(i, j);
                l.set(i, j, -v);
                degree += v;
            }
        }
        l.set(i, i, degree);
    }
    LaplacianMatrix(l)
}

/// Eigenpairs sorted by ascending eigenvalue.
#[derive(Debug, Clone, PartialEq)]
pub struct Eigen {
    pub values: Vec<f64>,
    /// Row-major `n x n`; column `k` is the eigenvector of `values[k]`.
    pub vectors: Vec<f64>,
    pub sweeps: usize,
}

impl Eigen {
    pub fn vector(&self, k: usize) -> Vec<f64> {
        let n = self.values.len();
        (0..n).map(|i| self.vectors[i * n + k]).collect()
    }
}

/// Full eigendecomposition of a symmetric matrix by cyclic Jacobi rotations.
///
/// Stops once the off-diagonal Frobenius norm drops below
/// `1e-10 * max(1, |A|_F)`. Equal eigenvalues keep their column order.
pub fn symmetric_eigen(a: &SymMatrix) -> Result<Eigen> {
    let n = a.n;
    let mut m = a.clone();
    let mut v = SymMatrix::zeros(n);
    for i in 0..n {
        v.set(i, i, 1.0);
    }
    let tol = JACOBI_TOLERANCE * a.frobenius_norm().max(1.0);

    let mut sweeps = 0;
    let mut residual = m.off_diagonal_norm();
    while residual >= tol {
        if sweeps == JACOBI_MAX_SWEEPS {
            return Err(Error::NoConvergence { sweeps, residual });
        }
        for p in 0..n {
            for q in p + 1..n {
                rotate(&mut m, &mut v, p, q);
            }
        }
        sweeps += 1;
        residual = m.off_diagonal_norm();
    }

    let raw: Vec<f64> = (0..n).map(|i| m.get(i, i)).collect();
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&x, &y| raw[x].total_cmp(&raw[y]));
    let values = order.iter().map(|&k| raw[k]).collect();
    let mut vectors = vec![0.0; n * n];
    for (dst, &src) in order.iter().enumerate() {
        for i in 0..n {
            vectors[i * n + dst] = v.get(i, src);
        }
    }
    Ok(Eigen { values, vectors, sweeps })
}

/// Annihilates `m[p][q]` with the rotation `m <- J^T m J`, accumulating `v <- v J`.
fn rotate(m: &mut SymMatrix, v: &mut SymMatrix, p: usize, q: usize) {
    let apq = m.get(p, q);
    if apq == 0.0 {
        return;
    }
    let n = m.n;
    let theta = (m.get(q, q) - m.get(p, p)) / (2.0 * apq);
    let t = if libm::fabs(theta) > 1e150 {
        0.5 / theta
    } else {
        let t = 1.0 / (libm::fabs(theta) + libm::sqrt(theta * theta + 1.0));
        if theta < 0.0 { -t } else { t }
    };
    let c = 1.0 / libm::sqrt(t * t + 1.0);
    let s = t * c;

    for k in 0..n {
        let (mkp, mkq) = (m.get(k, p), m.get(k, q));
        m.set(k, p, c * mkp - s * mkq);
        m.set(k, q, s * mkp + c * mkq);
    }
    for k in 0..n {
        let (mpk, mqk) = (m.get(p, k), m.get(q, k));
        m.set(p, k, c * mpk - s * mqk);
        m.set(q, k, s * mpk + c * mqk);
    }
    m.set(p, q, 0.0);
    m.set(q, p, 0.0);
    for k in 0..n {
        let (vkp, vkq) = (v.get(k, p), v.get(k, q));
        v.set(k, p, c * vkp - s * vkq);
        v.set(k, q, s * vkp + c * vkq);
    }
}

/// Fiedler eigenpair with a fixed sign.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FiedlerScores {
    /// Unit-norm scores, one per batch point.
    pub phi: Vec<f64>,
    pub lambda2: f64,
    /// Whether the raw eigenvector was negated by the sign convention.
    pub sign_flipped: bool,
    /// `lambda2` coincides with a neighbouring eigenvalue, so `phi` is one
    /// basis vector of a larger eigenspace.
    pub lambda2_repeated: bool,
}

/// Second eigenpair of `L`.
///
/// When the two smallest eigenvalues tie, the vector of that eigenspace
/// orthogonal to the constant vector is used.
///
/// Sign convention: `sum(phi) > 0`; when the sum is within `1e-9` of zero the
/// first coordinate with magnitude above `1e-9` is made positive.
pub fn fiedler_vector(l: &LaplacianMatrix) -> Result<FiedlerScores> {
    let n = l.n();
    if n < 2 {
        return Err(Error::BatchTooSmall(n));
    }
    let eig = symmetric_eigen(&l.0)?;
    let lambda2 = eig.values[1];
    let close = |other: f64| libm::fabs(other - lambda2) <= TIE_TOLERANCE * libm::fabs(lambda2).max(1.0);
    let tied_below = close(eig.values[0]);
    let lambda2_repeated = tied_below || eig.values.get(2).is_some_and(|&v| close(v));
    let mut phi = if tied_below {
        orthogonal_to_constant(&eig, (0..n).filter(|&k| close(eig.values[k])))
    } else {
        eig.vector(1)
    };
    let norm = libm::sqrt(dot(&phi, &phi));
    for x in phi.iter_mut() {
        *x /= norm;
    }
    let sum: f64 = phi.iter().sum();
    let flip = if libm::fabs(sum) > SIGN_THRESHOLD {
        sum < 0.0
    } else {
        phi.iter()
            .find(|x| libm::fabs(**x) > SIGN_THRESHOLD)
            .is_some_and(|&x| x < 0.0)
    };
    if flip {
        for x in phi.iter_mut() {
            *x = -*x;
        }
    }
    Ok(FiedlerScores { phi, lambda2, sign_flipped: flip, lambda2_repeated })
}

/// Picks a direction orthogonal to the constant vector inside a repeated
/// bottom eigenspace.
///
/// `L 1 = 0` always holds, so when the two smallest eigenvalues coincide the
/// constant vector usually lies in their eigenspace and the solver's basis is
/// arbitrary. The cluster vector with the largest component orthogonal to
/// `1` (first index on ties) is projected off `1`.
fn orthogonal_to_constant(eig: &Eigen, cluster: impl Iterator<Item = usize>) -> Vec<f64> {
    let n = eig.values.len();
    let u = 1.0 / libm::sqrt(n as f64);
    let mut best: Option<(f64, Vec<f64>)> = None;
    for k in cluster {
        let mut v = eig.vector(k);
        let along: f64 = v.iter().map(|x| x * u).sum();
        for x in v.iter_mut() {
            *x -= along * u;
        }
        let norm = libm::sqrt(dot(&v, &v));
        if best.as_ref().is_none_or(|(b, _)| norm > *b + 1e-12) {
            best = Some((norm, v));
        }
    }
    match best {
        Some((norm, v)) if norm > 1e-6 => v,
        _ => eig.vector(1),
    }
}

/// Permutation of batch positions by descending Fiedler score.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Ranking {
    pub order: Vec<usize>,
}

/// Stable descending argsort; equal scores keep index order.
pub fn rank_descending(scores: &FiedlerScores) -> Ranking {
    let phi = &scores.phi;
    let mut order: Vec<usize> = (0..phi.len()).collect();
    order.sort_by(|&a, &b| phi[b].total_cmp(&phi[a]));
    Ranking { order }
}

/// Everything computed for one batch.
#[derive(Debug, Clone, PartialEq)]
pub struct BatchSpectrum {
    pub similarity: SimilarityMatrix,
    pub laplacian: LaplacianMatrix,
    pub scores: FiedlerScores,
    pub ranking: Ranking,
}

/// Runs the whole pipeline on one batch's row-major features.
pub fn score_batch(features: &[f32], dim: usize, clamp_negative: bool) -> Result<BatchSpectrum> {
    let mut similarity = cosine_similarity(features, dim)?;
    if clamp_negative {
        similarity = similarity.clamp_negative();
    }
    let laplacian = laplacian(&similarity);
    let scores = fiedler_vector(&laplacian)?;
    let ranking = rank_descending(&scores);
    Ok(BatchSpectrum { similarity, laplacian, scores, ranking })
}

#[cfg(test)]
mod tests {
    use super::*;

    const R: f64 = core::f64::consts::FRAC_1_SQRT_2;

    fn close(a: f64, b: f64, tol: f64) -> bool {
        libm::fabs(a - b) <= tol
    }

    #[test]
    fn cosine_basics() {
        let s = cosine_similarity(&[1.0, 0.0, 0.0, 1.0], 2).unwrap();
        assert_eq!(s.0.as_slice(), &[1.0, 0.0, 0.0, 1.0]);
        let s = cosine_similarity(&[1.0, 2.0, 2.0, 4.0], 2).unwrap();
        assert!(close(s.get(0, 1), 1.0, 1e-15));
        let s = cosine_similarity(&[1.0, 0.0, -1.0, 0.0], 2).unwrap();
        assert_eq!(s.get(0, 1), -1.0);
    }

    #[test]
    fn cosine_errors() {
        assert_eq!(cosine_similarity(&[1.0, 0.0], 2), Err(Error::BatchTooSmall(1)));
        assert_eq!(
            cosine_similarity(&[1.0, 0.0, 0.0, 0.0], 2),
            Err(Error::ZeroRow { row: 1 })
        );
    }

    #[test]
    fn laplacian_of_ones() {
        let s = SimilarityMatrix(SymMatrix::from_rows(2, vec![1.0; 4]).unwrap());
        let l = laplacian(&s);
        assert_eq!(l.0.as_slice(), &[1.0, -1.0, -1.0, 1.0]);
    }

    #[test]
    fn laplacian_three_points() {
        let x = R as f32;
        let s = cosine_similarity(&[1.0, 0.0, 0.0, 1.0, x, x], 2).unwrap();
        assert!(close(s.get(0, 1), 0.0, 1e-12));
        assert!(close(s.get(0, 2), 0.70711, 1e-5));
        assert!(close(s.get(1, 2), 0.70711, 1e-5));
        let l = laplacian(&s);
        // D = diag(1.70711, 1.70711, 2.41421); L = D - S
        assert!(close(l.get(0, 0), 1.70711 - 1.0, 1e-5));
        assert!(close(l.get(1, 1), 1.70711 - 1.0, 1e-5));
        assert!(close(l.get(2, 2), 2.41421 - 1.0, 1e-5));
        assert!(close(l.get(0, 2), -0.70711, 1e-5));
        for i in 0..3 {
            assert!(l.0.row(i).iter().sum::<f64>().abs() < 1e-12);
        }
    }

    #[test]
    fn fiedler_two_points() {
        let l = LaplacianMatrix(SymMatrix::from_rows(2, vec![1.0, -1.0, -1.0, 1.0]).unwrap());
        let f = fiedler_vector(&l).unwrap();
        assert!(close(f.lambda2, 2.0, 1e-12));
        // sum is zero, so the first coordinate decides the sign
        assert!(close(f.phi[0], R, 1e-9) && close(f.phi[1], -R, 1e-9));
        assert_eq!(rank_descending(&f).order, vec![0, 1]);
    }

    #[test]
    fn fiedler_complete_graph() {
        let s = SimilarityMatrix(SymMatrix::from_rows(3, vec![1.0; 9]).unwrap());
        let f = fiedler_vector(&laplacian(&s)).unwrap();
        assert!(close(f.lambda2, 3.0, 1e-10));
        assert!(f.lambda2_repeated);
        assert!(f.phi.iter().sum::<f64>().abs() < 1e-9);
        assert!(close(f.phi.iter().map(|x| x * x).sum::<f64>(), 1.0, 1e-12));
    }

    #[test]
    fn fiedler_two_components() {
        let mut rows = vec![0.0; 16];
        for (i, j) in [(0, 1), (1, 0), (2, 3), (3, 2)] {
            rows[i * 4 + j] = 1.0;
        }
        for i in 0..4 {
            rows[i * 4 + i] = 1.0;
        }
        let s = SimilarityMatrix(SymMatrix::from_rows(4, rows).unwrap());
        let f = fiedler_vector(&laplacian(&s)).unwrap();
        assert!(f.lambda2.abs() < 1e-9);
        assert!(close(f.phi[0], f.phi[1], 1e-9));
        assert!(close(f.phi[2], f.phi[3], 1e-9));
        assert!(f.phi[0] * f.phi[2] < 0.0);
    }

    #[test]
    fn ranking_is_stable() {
        let scores = |phi: Vec<f64>| FiedlerScores { phi, lambda2: 0.0, sign_flipped: false, lambda2_repeated: false };
        assert_eq!(rank_descending(&scores(vec![0.9, -0.2, 0.5])).order, vec![0, 2, 1]);
        assert_eq!(rank_descending(&scores(vec![0.5; 4])).order, vec![0, 1, 2, 3]);
    }

    #[test]
    fn jacobi_diagonal_input() {
        let m = SymMatrix::from_rows(3, vec![3.0, 0.0, 0.0, 0.0, 1.0, 0.0, 0.0, 0.0, 2.0]).unwrap();
        let e = symmetric_eigen(&m).unwrap();
        assert_eq!(e.values, vec![1.0, 2.0, 3.0]);
        assert_eq!(e.sweeps, 0);
        assert_eq!(e.vector(0), vec![0.0, 1.0, 0.0]);
    }
}
