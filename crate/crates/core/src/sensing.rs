//! Partial-Fourier sensing matrices.
//!
//! Row `m` of `Φ` is `exp(j 2π n o_m / N)` for grid index `n = 0..N`, i.e.
//! the row of the `N×N` Fourier matrix picked by the offset `o_m mod N`.

use std::collections::{HashMap, HashSet};
use std::f64::consts::PI;
use std::fmt::Write as _;
use std::sync::{Arc, RwLock};

use nalgebra::DMatrix;
use num_complex::Complex64;

use crate::error::{Error, Result};

/// `exp(j 2π k / n)` for `k = 0..n`.
pub(crate) fn roots_of_unity(n: usize) -> Vec<Complex64> {
    (0..n)
        .map(|k| Complex64::from_polar(1.0, 2.0 * PI * k as f64 / n as f64))
        .collect()
}

#[derive(Debug, Clone, PartialEq)]
pub struct SensingMatrix {
    entries: DMatrix<Complex64>,
    offsets: Vec<u64>,
    n: usize,
    normalized: bool,
}

impl SensingMatrix {
    pub fn entries(&self) -> &DMatrix<Complex64> {
        &self.entries
    }

    pub fn offsets(&self) -> &[u64] {
        &self.offsets
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn rows(&self) -> usize {
        self.offsets.len()
    }

    pub fn is_normalized(&self) -> bool {
        self.normalized
    }

    /// `Φ^H Φ`.
    pub fn gram(&self) -> DMatrix<Complex64> {
        self.entries.adjoint() * &self.entries
    }

    /// Columns `cols` of `Φ` as a dense `M×k` matrix.
    pub fn columns(&self, cols: &[usize]) -> DMatrix<Complex64> {
        self.entries.select_columns(cols)
    }

    /// Permutes columns: column `j` of the result is column `perm[j]` here.
    pub fn permute_columns(&self, perm: &[usize]) -> Self {
        Self {
            entries: self.entries.select_columns(perm),
            ..self.clone()
        }
    }

    /// Debug dump, one matrix row per line as `re,im` pairs.
    pub fn to_csv(&self) -> String {
        let mut out = String::new();
        for row in self.entries.row_iter() {
            let line: Vec<String> = row.iter().map(|z| format!("{},{}", z.re, z.im)).collect();
            let _ = writeln!(out, "{}", line.join(","));
        }
        out
    }
}

/// Builds `Φ` for the given window offsets on a grid of `n` points.
pub fn build_phi(offsets: &[u64], n: usize) -> Result<SensingMatrix> {
    if offsets.is_empty() || n == 0 {
        return Err(Error::InvalidArgument("need at least one offset and N >= 1".into()));
    }
    let mut seen = HashSet::with_capacity(offsets.len());
    for &o in offsets {
        if !seen.insert(o % n as u64) {
            return Err(Error::DuplicateRows { window: 0, offset: o });
        }
    }
    let roots = roots_of_unity(n);
    let entries = DMatrix::from_fn(offsets.len(), n, |m, col| {
        let k = (offsets[m] % n as u64) as usize * col % n;
        roots[k]
    });
    Ok(SensingMatrix {
        entries,
        offsets: offsets.to_vec(),
        n,
        normalized: false,
    })
}

/// Scales every column to unit Euclidean norm (global `1/√M`).
pub fn normalize_columns(matrix: &SensingMatrix) -> Result<SensingMatrix> {
    if matrix.normalized {
        return Err(Error::AlreadyNormalized);
    }
    let scale = 1.0 / (matrix.rows() as f64).sqrt();
    Ok(SensingMatrix {
        entries: matrix.entries.map(|z| z * scale),
        normalized: true,
        ..matrix.clone()
    })
}

/// Shared store of unnormalized matrices keyed by offsets modulo `N`.
#[derive(Debug)]
pub struct SensingCache {
    n: usize,
    map: RwLock<HashMap<Vec<u64>, Arc<SensingMatrix>>>,
}

impl SensingCache {
    pub fn new(n: usize) -> Self {
        Self {
            n,
            map: RwLock::new(HashMap::new()),
        }
    }

    pub fn get_or_build(&self, offsets: &[u64]) -> Result<Arc<SensingMatrix>> {
        let key: Vec<u64> = offsets.iter().map(|o| o % self.n as u64).collect();
        if let Some(hit) = self.map.read().unwrap().get(&key) {
            return Ok(Arc::clone(hit));
        }
        let built = Arc::new(build_phi(&key, self.n)?);
        let mut map = self.map.write().unwrap();
        Ok(Arc::clone(map.entry(key).or_insert(built)))
    }

    pub fn len(&self) -> usize {
        self.map.read().unwrap().len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}
