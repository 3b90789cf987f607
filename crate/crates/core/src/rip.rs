//! Empirical restricted-isometry statistics.
//!
//! For each sparsity `k`, `k²N` random column subsets of a column-normalized
//! sensing matrix are drawn and the extreme eigenvalues of each `k×k`
//! sub-Gram matrix `Φ_K^H Φ_K` are recorded. A matrix with small restricted
//! isometry constant keeps these eigenvalues close to one.

use std::fmt::Write as _;

use nalgebra::{DMatrix, SymmetricEigen};
use num_complex::Complex64;
use rand::seq::index;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::sensing::{build_phi, SensingMatrix};
use crate::util::mix_seed;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RipRow {
    pub k: usize,
    pub avg_max_eig: f64,
    pub avg_min_eig: f64,
    pub extreme_max_eig: f64,
    pub extreme_min_eig: f64,
    pub num_submatrices: usize,
}

impl RipRow {
    /// Mean distance between the average extreme eigenvalues.
    pub fn spread(&self) -> f64 {
        self.avg_max_eig - self.avg_min_eig
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RipReport {
    pub rows: Vec<RipRow>,
}

impl RipReport {
    pub fn row(&self, k: usize) -> Option<&RipRow> {
        self.rows.iter().find(|r| r.k == k)
    }

    pub fn k_range(&self) -> Vec<usize> {
        self.rows.iter().map(|r| r.k).collect()
    }

    /// `k,avg_max,avg_min,extreme_max,extreme_min`
    pub fn to_csv(&self) -> String {
        let mut out = String::from("k,avg_max,avg_min,extreme_max,extreme_min\n");
        for r in &self.rows {
            let _ = writeln!(
                out,
                "{},{},{},{},{}",
                r.k,
                crate::util::fmt_sig(r.avg_max_eig),
                crate::util::fmt_sig(r.avg_min_eig),
                crate::util::fmt_sig(r.extreme_max_eig),
                crate::util::fmt_sig(r.extreme_min_eig)
            );
        }
        out
    }
}

/// Default sparsity levels.
pub fn default_k_range() -> Vec<usize> {
    (2..=12).collect()
}

/// Eigenvalues of the Hermitian matrix `Φ_K^H Φ_K`, ascending.
pub fn subgram_eigenvalues(matrix: &SensingMatrix, cols: &[usize]) -> Vec<f64> {
    let sub = matrix.columns(cols);
    let gram: DMatrix<Complex64> = sub.adjoint() * &sub;
    let mut eig: Vec<f64> = SymmetricEigen::new(gram).eigenvalues.iter().copied().collect();
    eig.sort_by(f64::total_cmp);
    eig
}

/// `count` uniformly random `k`-subsets of `0..n`, drawn with replacement
/// across draws.
pub fn draw_subsets<R: Rng + ?Sized>(rng: &mut R, n: usize, k: usize, count: usize) -> Vec<Vec<usize>> {
    (0..count)
        .map(|_| index::sample(rng, n, k).into_vec())
        .collect()
}

/// Reduces per-subset eigenvalues into one report row.
pub fn summarize(k: usize, matrix: &SensingMatrix, subsets: &[Vec<usize>]) -> RipRow {
    let mut sum_max = 0.0;
    let mut sum_min = 0.0;
    let mut ext_max = f64::NEG_INFINITY;
    let mut ext_min = f64::INFINITY;
    for cols in subsets {
        let eig = subgram_eigenvalues(matrix, cols);
        let (lo, hi) = (eig[0], eig[eig.len() - 1]);
        sum_max += hi;
        sum_min += lo;
        ext_max = ext_max.max(hi);
        ext_min = ext_min.min(lo);
    }
    let count = subsets.len().max(1) as f64;
    RipRow {
        k,
        avg_max_eig: sum_max / count,
        avg_min_eig: sum_min / count,
        extreme_max_eig: ext_max,
        extreme_min_eig: ext_min,
        num_submatrices: subsets.len(),
    }
}

/// Samples `k²N` sub-Gram matrices per sparsity level. Each `k` draws from
/// its own stream derived from `(seed, k)`, so rows are computed in parallel.
pub fn sample_subgram_eigs(matrix: &SensingMatrix, k_range: &[usize], seed: u64) -> Result<RipReport> {
    if !matrix.is_normalized() {
        return Err(Error::InvalidArgument("sensing matrix must be column-normalized".into()));
    }
    let n = matrix.n();
    if let Some(&k) = k_range.iter().find(|&&k| k > matrix.rows() || k > n || k == 0) {
        return Err(Error::SparsityTooLarge { k, rows: matrix.rows() });
    }
    let rows = k_range
        .par_iter()
        .map(|&k| {
            let mut rng = ChaCha8Rng::seed_from_u64(mix_seed(seed, &[k as u64]));
            let subsets = draw_subsets(&mut rng, n, k, k * k * n);
            summarize(k, matrix, &subsets)
        })
        .collect();
    Ok(RipReport { rows })
}

/// `M` distinct rows of the `N×N` Fourier matrix chosen uniformly at random,
/// in ascending order (unnormalized).
pub fn random_partial_fourier(m: usize, n: usize, seed: u64) -> Result<SensingMatrix> {
    if m == 0 || m > n {
        return Err(Error::InvalidArgument(format!("need 1 <= M <= N (M={m}, N={n})")));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut offsets: Vec<u64> = index::sample(&mut rng, n, m)
        .into_iter()
        .map(|i| i as u64)
        .collect();
    offsets.sort_unstable();
    build_phi(&offsets, n)
}
