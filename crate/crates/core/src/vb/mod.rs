//! Complex-valued multitask variational Bayesian line spectral estimator.
//!
//! Each task `l` observes `y_l = Φ_l s_l + ε_l` with complex white noise of
//! precision `β`. All `s_l` share one sparsity profile through the
//! per-bin prior precisions `α_i`:
//!
//! ```text
//! s_l | α ~ CN(0, diag(α)^{-1})     α_i ~ Gamma(a, b)     β ~ Gamma(c, d)
//! ```
//!
//! The mean-field posterior `q(S) q(α) q(β)` is fitted by coordinate ascent:
//!
//! 1. start from `⟨α⟩ = 1`, `⟨β⟩ = 1 / var(y)` and one pass of step 3;
//! 2. refresh `q(α) = Π Gamma(a + L, b + Σ_l ⟨|s_{l,i}|²⟩)` and
//!    `q(β) = Gamma(c + LM, d + Σ_l ⟨‖y_l − Φ_l s_l‖²⟩)`;
//! 3. refresh `q(s_l) = CN(μ_l, Σ_l)` with
//!    `Σ_l = (⟨β⟩Φ_l^HΦ_l + diag⟨α⟩)^{-1}`, `μ_l = ⟨β⟩Σ_lΦ_l^H y_l`;
//! 4. repeat from 2 until the iteration cap or the bound stalls.
//!
//! Bins whose `⟨α_i⟩` stays small carry the spectral lines. `Σ_l` depends
//! on `Φ_l` only, so it is computed once per distinct offset pattern.

mod bound;
mod pattern;

use std::collections::HashMap;
use std::fmt::Write as _;

use nalgebra::DMatrix;
use num_complex::Complex64;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::sampling::TaskSet;
use crate::util::{fmt_sig, top_peaks};

pub use pattern::PatternPosterior;
use pattern::{PatternFailure, Transforms};

/// Gamma hyperprior parameters (shape `a`, rate `b` for `α`; `c`, `d` for `β`).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Hyperparams {
    pub a: f64,
    pub b: f64,
    pub c: f64,
    pub d: f64,
}

impl Default for Hyperparams {
    fn default() -> Self {
        Self {
            a: 1e-6,
            b: 1e-6,
            c: 1e-6,
            d: 1e-6,
        }
    }
}

impl Hyperparams {
    pub fn validate(&self) -> Result<()> {
        for (name, v) in [("a", self.a), ("b", self.b), ("c", self.c), ("d", self.d)] {
            if !(v > 0.0 && v.is_finite()) {
                return Err(Error::InvalidArgument(format!("hyperparameter {name} = {v} must be positive")));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RunOptions {
    pub max_iter: usize,
    /// Relative change of the bound below which the run stops.
    pub tol: f64,
}

impl Default for RunOptions {
    fn default() -> Self {
        Self {
            max_iter: 200,
            tol: 1e-6,
        }
    }
}

/// Variational posterior after some number of sweeps.
#[derive(Debug, Clone)]
pub struct VbState {
    /// Posterior means `μ_l`, one length-`N` vector per task.
    pub mu: Vec<Vec<Complex64>>,
    pub alpha_expect: Vec<f64>,
    pub beta_expect: f64,
    pub alpha_shape: f64,
    pub alpha_rate: Vec<f64>,
    pub beta_shape: f64,
    pub beta_rate: f64,
    pub iteration: usize,
    /// Bound recorded at the end of the last sweep; `-inf` before the first.
    pub bound: f64,
    posteriors: Vec<PatternPosterior>,
    residuals: Vec<f64>,
}

impl VbState {
    pub fn posteriors(&self) -> &[PatternPosterior] {
        &self.posteriors
    }

    /// `‖y_l − Φ_l μ_l‖²` per task.
    pub fn residuals(&self) -> &[f64] {
        &self.residuals
    }

    pub fn noise_variance(&self) -> f64 {
        1.0 / self.beta_expect
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Detection {
    pub frequency: f64,
    pub power: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SpectrumEstimate {
    /// Mean posterior second moment `(1/L) Σ_l ⟨|s_{l,i}|²⟩` per grid bin.
    pub grid_power: Vec<f64>,
    /// `⟨α_i⟩`; empty for estimators without a prior.
    pub alpha_expect: Vec<f64>,
    /// Local maxima of `grid_power`, strongest first.
    pub detected: Vec<Detection>,
    pub converged: bool,
    pub iterations_used: usize,
    /// `1/⟨β⟩`, when the estimator models noise.
    pub noise_variance: Option<f64>,
}

impl SpectrumEstimate {
    /// Wraps a bare power profile (e.g. a pseudo-spectrum).
    pub fn from_power(grid_power: Vec<f64>) -> Self {
        let n = grid_power.len();
        let detected = local_maxima(&grid_power)
            .into_iter()
            .map(|i| Detection {
                frequency: i as f64 / n as f64,
                power: grid_power[i],
            })
            .collect();
        Self {
            grid_power,
            alpha_expect: Vec::new(),
            detected,
            converged: true,
            iterations_used: 0,
            noise_variance: None,
        }
    }

    pub fn n(&self) -> usize {
        self.grid_power.len()
    }

    /// `grid_frequency,power,alpha_expect`, one row per bin.
    pub fn to_csv(&self) -> String {
        let n = self.n();
        let mut out = String::from("grid_frequency,power,alpha_expect\n");
        for i in 0..n {
            let alpha = self.alpha_expect.get(i).map(|&a| fmt_sig(a)).unwrap_or_default();
            let _ = writeln!(
                out,
                "{},{},{}",
                fmt_sig(i as f64 / n as f64),
                fmt_sig(self.grid_power[i]),
                alpha
            );
        }
        out
    }
}

fn local_maxima(power: &[f64]) -> Vec<usize> {
    let n = power.len();
    let mut idx: Vec<usize> = (0..n)
        .filter(|&i| n < 3 || (power[i] > power[(i + n - 1) % n] && power[i] >= power[(i + 1) % n]))
        .collect();
    idx.sort_by(|a, b| power[*b].total_cmp(&power[*a]).then(a.cmp(b)));
    idx
}

/// Grid frequencies `n/N` of the `k` strongest spectral peaks, strongest
/// first. Peaks are circular local maxima of the grid power; when there are
/// fewer than `k` of them the largest remaining bins fill in.
pub fn extract_frequencies(est: &SpectrumEstimate, k: usize) -> Result<Vec<f64>> {
    let n = est.n();
    if k > n {
        return Err(Error::InvalidArgument(format!("K = {k} exceeds grid size {n}")));
    }
    Ok(top_peaks(&est.grid_power, k)
        .into_iter()
        .map(|i| i as f64 / n as f64)
        .collect())
}

/// Shape `a + L` and rates `b + Σ_l ⟨|s_{l,i}|²⟩` of `q(α)`.
pub fn alpha_posterior(hp: &Hyperparams, l: usize, moments: &[f64]) -> (f64, Vec<f64>) {
    (hp.a + l as f64, moments.iter().map(|s| hp.b + s).collect())
}

/// Shape `c + LM` and rate `d + Σ_l ⟨‖y_l − Φ_l s_l‖²⟩` of `q(β)`.
pub fn beta_posterior(hp: &Hyperparams, l: usize, m: usize, expected_residual: f64) -> (f64, f64) {
    (hp.c + (l * m) as f64, hp.d + expected_residual)
}

/// A multitask problem prepared for repeated sweeps.
pub struct VbSolver {
    hp: Hyperparams,
    n: usize,
    m: usize,
    values: Vec<Vec<Complex64>>,
    patterns: Vec<Vec<usize>>,
    task_pattern: Vec<usize>,
    fft: Transforms,
}

impl VbSolver {
    pub fn new(tasks: &TaskSet, hp: Hyperparams) -> Result<Self> {
        hp.validate()?;
        let n = tasks.n();
        let mut lookup: HashMap<Vec<usize>, usize> = HashMap::new();
        let mut patterns = Vec::new();
        let mut task_pattern = Vec::with_capacity(tasks.l());
        for w in tasks.windows() {
            let key: Vec<usize> = w.offsets.iter().map(|&o| (o % n as u64) as usize).collect();
            let id = *lookup.entry(key.clone()).or_insert_with(|| {
                patterns.push(key);
                patterns.len() - 1
            });
            task_pattern.push(id);
        }
        Ok(Self {
            hp,
            n,
            m: tasks.m(),
            values: tasks.windows().iter().map(|w| w.values.clone()).collect(),
            patterns,
            task_pattern,
            fft: Transforms::new(n),
        })
    }

    pub fn hyperparams(&self) -> &Hyperparams {
        &self.hp
    }

    pub fn l(&self) -> usize {
        self.values.len()
    }

    pub fn m(&self) -> usize {
        self.m
    }

    pub fn n(&self) -> usize {
        self.n
    }

    /// Number of distinct sensing matrices among the tasks.
    pub fn distinct_patterns(&self) -> usize {
        self.patterns.len()
    }

    pub fn pattern_of(&self, task: usize) -> usize {
        self.task_pattern[task]
    }

    /// Dense `Σ_l` for one task.
    pub fn covariance(&self, state: &VbState, task: usize) -> DMatrix<Complex64> {
        let p = self.task_pattern[task];
        state.posteriors[p].covariance(&self.patterns[p])
    }

    /// Step 1: prior expectations `⟨α⟩ = 1`, `⟨β⟩ = 1/var(y)` (100 for
    /// constant data), encoded as Gamma factors with the final shapes, then
    /// one `q(S)` refresh.
    pub fn init_state(&self) -> Result<VbState> {
        let l = self.l() as f64;
        let all: Vec<Complex64> = self.values.iter().flatten().copied().collect();
        let mean = all.iter().sum::<Complex64>() / all.len() as f64;
        let var = all.iter().map(|v| (v - mean).norm_sqr()).sum::<f64>() / all.len() as f64;
        let beta = if var > 0.0 { 1.0 / var } else { 100.0 };

        let alpha_shape = self.hp.a + l;
        let beta_shape = self.hp.c + l * self.m as f64;
        let mut state = VbState {
            mu: vec![vec![Complex64::new(0.0, 0.0); self.n]; self.l()],
            alpha_expect: vec![1.0; self.n],
            beta_expect: beta,
            alpha_shape,
            alpha_rate: vec![alpha_shape; self.n],
            beta_shape,
            beta_rate: beta_shape / beta,
            iteration: 0,
            bound: f64::NEG_INFINITY,
            posteriors: Vec::new(),
            residuals: Vec::new(),
        };
        self.update_s(&mut state)?;
        Ok(state)
    }

    /// Step 3: `q(s_l)` for every task from the current `⟨α⟩`, `⟨β⟩`.
    pub fn update_s(&self, state: &mut VbState) -> Result<()> {
        let weights: Vec<f64> = state.alpha_expect.iter().map(|a| 1.0 / a).collect();
        let mut g: Vec<Complex64> = weights.iter().map(|&w| Complex64::new(w, 0.0)).collect();
        self.fft.inverse(&mut g);
        let beta = state.beta_expect;
        let iteration = state.iteration;
        let breakdown = |task: usize, f: PatternFailure| Error::NumericalBreakdown {
            iteration,
            task,
            detail: match f {
                PatternFailure::NotPositiveDefinite => "noise-plus-prior covariance is not positive definite".into(),
                PatternFailure::NonFinite(what) => format!("non-finite {what}"),
            },
        };
        let first_task = |p: usize| self.task_pattern.iter().position(|&q| q == p).unwrap_or(0);

        let posteriors = self
            .patterns
            .par_iter()
            .enumerate()
            .map(|(p, offsets)| {
                PatternPosterior::compute(offsets, &weights, &g, beta, &self.fft)
                    .map_err(|f| breakdown(first_task(p), f))
            })
            .collect::<Result<Vec<_>>>()?;

        let means = self
            .values
            .par_iter()
            .enumerate()
            .map(|(l, y)| {
                let p = self.task_pattern[l];
                posteriors[p]
                    .mean(&self.patterns[p], y, &self.fft)
                    .map_err(|f| breakdown(l, f))
            })
            .collect::<Result<Vec<_>>>()?;

        let (mu, residuals) = means.into_iter().unzip();
        state.mu = mu;
        state.residuals = residuals;
        state.posteriors = posteriors;
        Ok(())
    }

    /// `Σ_l ⟨|s_{l,i}|²⟩ = Σ_l |μ_{l,i}|² + [Σ_l]_{ii}` per bin.
    pub fn second_moments(&self, state: &VbState) -> Vec<f64> {
        let mut acc = vec![0.0; self.n];
        for (l, mu) in state.mu.iter().enumerate() {
            let diag = &state.posteriors[self.task_pattern[l]].sigma_diag;
            for i in 0..self.n {
                acc[i] += mu[i].norm_sqr() + diag[i];
            }
        }
        acc
    }

    /// Step 2, `α` half.
    pub fn update_alpha(&self, state: &mut VbState) {
        let (shape, rate) = alpha_posterior(&self.hp, self.l(), &self.second_moments(state));
        state.alpha_expect = rate.iter().map(|r| shape / r).collect();
        state.alpha_shape = shape;
        state.alpha_rate = rate;
    }

    /// `Σ_l ⟨‖y_l − Φ_l s_l‖²⟩ = Σ_l ‖y_l − Φ_l μ_l‖² + tr(Φ_l Σ_l Φ_l^H)`.
    pub fn expected_residual(&self, state: &VbState) -> f64 {
        state
            .residuals
            .iter()
            .zip(&self.task_pattern)
            .map(|(r, &p)| r + state.posteriors[p].phi_sigma_trace)
            .sum()
    }

    /// Step 2, `β` half.
    pub fn update_beta(&self, state: &mut VbState) {
        let (shape, rate) =
            beta_posterior(&self.hp, self.l(), self.m, self.expected_residual(state));
        state.beta_shape = shape;
        state.beta_rate = rate;
        state.beta_expect = shape / rate;
    }

    /// Evidence lower bound of the current factorized posterior.
    pub fn variational_bound(&self, state: &VbState) -> f64 {
        bound::evidence_lower_bound(self, state)
    }

    /// One full sweep: step 2 then step 3.
    pub fn sweep(&self, state: &mut VbState) -> Result<()> {
        state.iteration += 1;
        self.update_alpha(state);
        self.update_beta(state);
        self.update_s(state)
    }

    pub fn estimate(&self, state: &VbState, converged: bool) -> SpectrumEstimate {
        let l = self.l() as f64;
        let grid_power: Vec<f64> = self.second_moments(state).into_iter().map(|s| s / l).collect();
        SpectrumEstimate {
            alpha_expect: state.alpha_expect.clone(),
            converged,
            iterations_used: state.iteration,
            noise_variance: Some(state.noise_variance()),
            ..SpectrumEstimate::from_power(grid_power)
        }
    }

    /// Runs sweeps until `max_iter` or until the relative change of the bound
    /// drops below `tol`.
    pub fn solve(&self, opts: RunOptions) -> Result<(VbState, SpectrumEstimate)> {
        if opts.max_iter == 0 {
            return Err(Error::InvalidArgument("max_iter must be at least 1".into()));
        }
        if !(opts.tol >= 0.0) {
            return Err(Error::InvalidArgument("tol must be non-negative".into()));
        }
        let mut state = self.init_state()?;
        let mut converged = false;
        while state.iteration < opts.max_iter {
            self.sweep(&mut state)?;
            let bound = self.variational_bound(&state);
            let previous = state.bound;
            state.bound = bound;
            if previous.is_finite() && (bound - previous).abs() < opts.tol * bound.abs() {
                converged = true;
                break;
            }
        }
        let est = self.estimate(&state, converged);
        Ok((state, est))
    }
}

/// Fits the multitask model to `tasks` and returns the grid spectrum.
pub fn run(tasks: &TaskSet, hp: Hyperparams, max_iter: usize, tol: f64) -> Result<SpectrumEstimate> {
    let solver = VbSolver::new(tasks, hp)?;
    Ok(solver.solve(RunOptions { max_iter, tol })?.1)
}

#[cfg(test)]
mod tests;
