//! Deterministic coprime sub-Nyquist sampling and multitask windowing.
//!
//! Three channels keep every `p`-th, `q`-th and `r`-th Nyquist sample. The
//! union of their sample times, in chronological order, is cut into `L`
//! overlapping windows of `M` consecutive samples; each window becomes one
//! task of the multitask model.

use std::collections::HashSet;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::signal::SampleRecord;

fn gcd(a: u64, b: u64) -> u64 {
    if b == 0 {
        a
    } else {
        gcd(b, a % b)
    }
}

/// Undersampling ratios of the acquisition channels.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(try_from = "Vec<u64>", into = "Vec<u64>")]
pub struct CoprimeScheme {
    ratios: Vec<u64>,
}

impl TryFrom<Vec<u64>> for CoprimeScheme {
    type Error = Error;

    fn try_from(ratios: Vec<u64>) -> Result<Self> {
        Self::from_ratios(ratios)
    }
}

impl From<CoprimeScheme> for Vec<u64> {
    fn from(s: CoprimeScheme) -> Self {
        s.ratios
    }
}

impl CoprimeScheme {
    /// Three-channel scheme with `1 < p < q < r`, pairwise coprime.
    pub fn new(p: u64, q: u64, r: u64) -> Result<Self> {
        Self::from_ratios(vec![p, q, r])
    }

    /// Two-channel scheme. Works on some spectra but recovers less reliably
    /// than three channels; see [`CoprimeScheme::warning`].
    pub fn pair(p: u64, q: u64) -> Result<Self> {
        Self::from_ratios(vec![p, q])
    }

    pub fn from_ratios(ratios: Vec<u64>) -> Result<Self> {
        if !(2..=3).contains(&ratios.len()) {
            return Err(Error::InvalidScheme(format!(
                "expected 2 or 3 ratios, got {}",
                ratios.len()
            )));
        }
        if ratios[0] < 2 || ratios.windows(2).any(|w| w[0] >= w[1]) {
            return Err(Error::InvalidScheme(format!(
                "ratios {ratios:?} must satisfy 1 < p < q < r"
            )));
        }
        for i in 0..ratios.len() {
            for j in 0..i {
                if gcd(ratios[i], ratios[j]) != 1 {
                    return Err(Error::InvalidScheme(format!(
                        "{} and {} are not coprime",
                        ratios[j], ratios[i]
                    )));
                }
            }
        }
        Ok(Self { ratios })
    }

    pub fn ratios(&self) -> &[u64] {
        &self.ratios
    }

    pub fn largest(&self) -> u64 {
        *self.ratios.last().unwrap()
    }

    pub fn warning(&self) -> Option<&'static str> {
        (self.ratios.len() == 2)
            .then_some("two-ratio schemes recover some spectra but fail more often than three ratios")
    }

    /// Length of one repetition block of the index pattern, `lcm(p, q, r)`
    /// (the product, since the ratios are coprime).
    pub fn block_span(&self) -> u64 {
        self.ratios.iter().product()
    }

    /// Number of sample times inside one block; window offset patterns
    /// repeat with this period.
    pub fn block_len(&self) -> usize {
        count_up_to(self, self.block_span()) as usize
    }

    /// Infinite chronological stream of sample times.
    pub fn stream(&self) -> IndexStream {
        IndexStream {
            next: self.ratios.clone(),
            ratios: self.ratios.clone(),
        }
    }

    /// The first `count` sample times.
    pub fn first_indices(&self, count: usize) -> Vec<u64> {
        self.stream().take(count).collect()
    }

    pub fn label(&self) -> String {
        self.ratios
            .iter()
            .map(u64::to_string)
            .collect::<Vec<_>>()
            .join("-")
    }
}

/// Merge of the multiples of each ratio, without duplicates.
#[derive(Debug, Clone)]
pub struct IndexStream {
    ratios: Vec<u64>,
    next: Vec<u64>,
}

impl Iterator for IndexStream {
    type Item = u64;

    fn next(&mut self) -> Option<u64> {
        let t = *self.next.iter().min()?;
        for (n, &r) in self.next.iter_mut().zip(&self.ratios) {
            if *n == t {
                *n += r;
            }
        }
        Some(t)
    }
}

/// Sorted union `{p, 2p, …} ∪ {q, 2q, …} ∪ {r, 2r, …}` up to `horizon`.
pub fn generate_indices(scheme: &CoprimeScheme, horizon: u64) -> Vec<u64> {
    scheme.stream().take_while(|&t| t <= horizon).collect()
}

/// Inclusion–exclusion count of sample times in `1..=horizon`.
pub fn count_up_to(scheme: &CoprimeScheme, horizon: u64) -> u64 {
    let r = scheme.ratios();
    let mut total: i64 = 0;
    for mask in 1u32..(1 << r.len()) {
        let prod: u64 = (0..r.len())
            .filter(|i| mask & (1 << i) != 0)
            .map(|i| r[i])
            .product();
        let term = (horizon / prod) as i64;
        if mask.count_ones() % 2 == 1 {
            total += term;
        } else {
            total -= term;
        }
    }
    total as u64
}

/// Admissibility rule for a window of `M` sample times.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum WindowRule {
    /// Every offset `t_{l+m} - t_l` is below `N`: the rows of `Φ_l` are
    /// taken from the `N×N` Fourier matrix without wrapping.
    #[default]
    WithinGrid,
    /// Offsets are pairwise distinct modulo `N`: no duplicate rows in `Φ_l`.
    DistinctModN,
}

/// Longest admissible prefix of the window starting at `times[0]`.
fn window_limit(times: &[u64], n: usize, rule: WindowRule) -> usize {
    let t0 = times[0];
    match rule {
        WindowRule::WithinGrid => times
            .iter()
            .take_while(|&&t| t - t0 < n as u64)
            .count(),
        WindowRule::DistinctModN => {
            let mut seen = HashSet::with_capacity(n);
            times
                .iter()
                .take_while(|&&t| seen.insert((t - t0) % n as u64))
                .count()
        }
    }
}

/// Largest `M` such that all `L` windows starting at the first sample are
/// admissible under `rule`.
pub fn max_valid_window(
    scheme: &CoprimeScheme,
    n: usize,
    l: usize,
    rule: WindowRule,
) -> Result<usize> {
    max_valid_window_from(scheme, n, l, 1, rule)
}

/// As [`max_valid_window`] with windows starting at the `start`-th sample
/// (1-based).
pub fn max_valid_window_from(
    scheme: &CoprimeScheme,
    n: usize,
    l: usize,
    start: usize,
    rule: WindowRule,
) -> Result<usize> {
    if n < 2 || l == 0 || start == 0 {
        return Err(Error::InvalidArgument(format!(
            "need N >= 2, L >= 1, start >= 1 (got N={n}, L={l}, start={start})"
        )));
    }
    // A window never holds more than N admissible samples.
    let times = scheme.first_indices(start - 1 + l + n + 1);
    let best = (0..l)
        .map(|i| window_limit(&times[start - 1 + i..], n, rule).min(n))
        .min()
        .unwrap_or(0);
    if best < 2 {
        return Err(Error::NoValidWindow { n, l });
    }
    Ok(best)
}

/// One task: `M` consecutive samples and their offsets from the first one.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TaskWindow {
    pub values: Vec<Complex64>,
    pub offsets: Vec<u64>,
    pub start_index: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TaskSet {
    windows: Vec<TaskWindow>,
    m: usize,
    n: usize,
}

fn check_window(window: &TaskWindow, pos: usize, m: usize, n: usize) -> Result<()> {
    if window.values.len() != m || window.offsets.len() != m {
        return Err(Error::InvalidArgument(format!(
            "window {pos} has {} values and {} offsets, expected {m}",
            window.values.len(),
            window.offsets.len()
        )));
    }
    if window.offsets[0] != 0 || window.offsets.windows(2).any(|w| w[1] <= w[0]) {
        return Err(Error::InvalidArgument(format!(
            "window {pos} offsets must start at 0 and increase"
        )));
    }
    let mut seen = HashSet::with_capacity(m);
    for &o in &window.offsets {
        if !seen.insert(o % n as u64) {
            return Err(Error::DuplicateRows {
                window: pos,
                offset: o,
            });
        }
    }
    Ok(())
}

impl TaskSet {
    /// Assembles a task set from arbitrary windows, validating every one.
    pub fn from_windows(windows: Vec<TaskWindow>, m: usize, n: usize) -> Result<Self> {
        if windows.is_empty() || m == 0 || n < 2 {
            return Err(Error::InvalidArgument(
                "task set needs L >= 1, M >= 1, N >= 2".into(),
            ));
        }
        for (pos, w) in windows.iter().enumerate() {
            check_window(w, pos, m, n)?;
        }
        Ok(Self { windows, m, n })
    }

    pub fn windows(&self) -> &[TaskWindow] {
        &self.windows
    }

    /// Number of tasks `L`.
    pub fn l(&self) -> usize {
        self.windows.len()
    }

    /// Window length `M`.
    pub fn m(&self) -> usize {
        self.m
    }

    /// Grid size `N`.
    pub fn n(&self) -> usize {
        self.n
    }

    /// Distinct sample times touched by any window.
    pub fn distinct_indices(&self) -> Vec<u64> {
        let mut all: Vec<u64> = self
            .windows
            .iter()
            .flat_map(|w| w.offsets.iter().map(move |o| w.start_index + o))
            .collect();
        all.sort_unstable();
        all.dedup();
        all
    }

    /// Multiplies every sample by `factor`.
    pub fn scaled(&self, factor: Complex64) -> Self {
        let mut out = self.clone();
        for w in &mut out.windows {
            for v in &mut w.values {
                *v *= factor;
            }
        }
        out
    }
}

/// Slides `L` windows of `M` consecutive samples over the record, the first
/// starting at the `start`-th sample (1-based).
pub fn build_tasks(
    record: &SampleRecord,
    m: usize,
    l: usize,
    n: usize,
    start: usize,
) -> Result<TaskSet> {
    if m == 0 || l == 0 || start == 0 {
        return Err(Error::InvalidArgument("M, L and start must be >= 1".into()));
    }
    let needed = start + l + m - 2;
    if record.len() < needed {
        return Err(Error::InsufficientSamples {
            needed,
            available: record.len(),
        });
    }
    let times = record.indices();
    let values = record.values();
    let windows = (0..l)
        .map(|i| {
            let lo = start - 1 + i;
            let t0 = times[lo];
            TaskWindow {
                values: values[lo..lo + m].to_vec(),
                offsets: times[lo..lo + m].iter().map(|t| t - t0).collect(),
                start_index: t0,
            }
        })
        .collect();
    TaskSet::from_windows(windows, m, n)
}
