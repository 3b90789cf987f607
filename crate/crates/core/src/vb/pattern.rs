//! Posterior of `s_l` for one distinct offset pattern.
//!
//! With `W = diag(1/⟨α⟩)` and `ε = 1/⟨β⟩`, the push-through identity gives
//!
//! ```text
//! Σ = (⟨β⟩Φ^HΦ + ⟨A⟩)^{-1} = W − WΦ^H C^{-1} ΦW,   C = ΦWΦ^H + εI   (M×M)
//! μ = ⟨β⟩ΣΦ^H y           = WΦ^H C^{-1} y
//! ```
//!
//! Rows of `Φ` are Fourier rows, so `(ΦWΦ^H)[m,m'] = g[(o_m − o_m') mod N]`
//! where `g` is the unnormalized inverse DFT of the diagonal of `W`. Every
//! quantity the updates need then reduces to `M×M` algebra plus length-`N`
//! transforms:
//!
//! * `Σ_ii = w_i − w_i² Σ_{m,m'} C^{-1}[m,m'] e^{j2πi(o_m' − o_m)/N}`
//! * `ln det Σ = Σ ln w_i − M ln⟨β⟩ − ln det C`
//! * `tr(ΦΣΦ^H) = ε tr(C^{-1}ΦWΦ^H)`
//! * `‖y − Φμ‖² = ε² ‖C^{-1}y‖²`

use std::sync::Arc;

use nalgebra::{Cholesky, DMatrix, DVector, Dyn};
use num_complex::Complex64;
use rustfft::Fft;

/// Transforms shared by all patterns of one problem.
#[derive(Clone)]
pub(crate) struct Transforms {
    pub forward: Arc<dyn Fft<f64>>,
    pub inverse: Arc<dyn Fft<f64>>,
}

impl Transforms {
    pub fn new(n: usize) -> Self {
        let mut planner = rustfft::FftPlanner::new();
        Self {
            forward: planner.plan_fft_forward(n),
            inverse: planner.plan_fft_inverse(n),
        }
    }

    /// `out[d] = Σ_n x[n] e^{+j2πnd/N}`.
    pub fn inverse(&self, x: &mut [Complex64]) {
        self.inverse.process(x);
    }

    /// `out[d] = Σ_n x[n] e^{−j2πnd/N}`.
    pub fn forward(&self, x: &mut [Complex64]) {
        self.forward.process(x);
    }
}

#[derive(Debug, Clone)]
pub struct PatternPosterior {
    /// Diagonal of `Σ`.
    pub sigma_diag: Vec<f64>,
    /// `ln det Σ`.
    pub log_det: f64,
    /// `tr(Φ Σ Φ^H)`.
    pub phi_sigma_trace: f64,
    /// Prior variances `1/⟨α_i⟩` the posterior was computed with.
    pub(crate) weights: Vec<f64>,
    pub(crate) beta: f64,
    pub(crate) c_inv: DMatrix<Complex64>,
    pub(crate) chol: Cholesky<Complex64, Dyn>,
}

pub(crate) enum PatternFailure {
    NotPositiveDefinite,
    NonFinite(&'static str),
}

fn factor(mut c: DMatrix<Complex64>) -> Result<Cholesky<Complex64, Dyn>, PatternFailure> {
    if let Some(ch) = Cholesky::new(c.clone()) {
        return Ok(ch);
    }
    let m = c.nrows();
    let jitter = 1e-12 * c.trace().re / m as f64;
    for i in 0..m {
        c[(i, i)] += jitter;
    }
    Cholesky::new(c).ok_or(PatternFailure::NotPositiveDefinite)
}

impl PatternPosterior {
    /// `g` is the inverse DFT of `weights`.
    pub(crate) fn compute(
        offsets: &[usize],
        weights: &[f64],
        g: &[Complex64],
        beta: f64,
        fft: &Transforms,
    ) -> Result<Self, PatternFailure> {
        let n = weights.len();
        let m = offsets.len();
        let eps = 1.0 / beta;
        let diff = |a: usize, b: usize| (a + n - b) % n;

        let c = DMatrix::from_fn(m, m, |i, j| {
            let mut z = g[diff(offsets[i], offsets[j])];
            if i == j {
                z.re += eps;
                z.im = 0.0;
            }
            z
        });
        let chol = factor(c)?;
        let c_inv = chol.inverse();
        let log_det_c: f64 = 2.0 * chol.l_dirty().diagonal().iter().map(|z| z.re.ln()).sum::<f64>();

        // h[d] = Σ_{o_m' − o_m ≡ d} C^{-1}[m,m']
        let mut h = vec![Complex64::new(0.0, 0.0); n];
        for i in 0..m {
            for j in 0..m {
                h[diff(offsets[j], offsets[i])] += c_inv[(i, j)];
            }
        }
        let trace_inner: f64 = h.iter().zip(g).map(|(a, b)| (a * b).re).sum();
        let phi_sigma_trace = eps * trace_inner;

        fft.inverse(&mut h);
        let sigma_diag: Vec<f64> = weights
            .iter()
            .zip(&h)
            .map(|(&w, q)| (w - w * w * q.re).max(0.0))
            .collect();

        let log_det = weights.iter().map(|w| w.ln()).sum::<f64>() - m as f64 * beta.ln() - log_det_c;

        if !log_det.is_finite() {
            return Err(PatternFailure::NonFinite("log-determinant"));
        }
        if !phi_sigma_trace.is_finite() || sigma_diag.iter().any(|v| !v.is_finite()) {
            return Err(PatternFailure::NonFinite("posterior covariance"));
        }
        Ok(Self {
            sigma_diag,
            log_det,
            phi_sigma_trace,
            weights: weights.to_vec(),
            beta,
            c_inv,
            chol,
        })
    }

    /// Posterior mean and squared residual for one task of this pattern.
    pub(crate) fn mean(
        &self,
        offsets: &[usize],
        y: &[Complex64],
        fft: &Transforms,
    ) -> Result<(Vec<Complex64>, f64), PatternFailure> {
        let n = self.weights.len();
        let v = self.chol.solve(&DVector::from_column_slice(y));
        let residual = v.norm_squared() / (self.beta * self.beta);
        let mut buf = vec![Complex64::new(0.0, 0.0); n];
        for (&o, z) in offsets.iter().zip(v.iter()) {
            buf[o] += z;
        }
        fft.forward(&mut buf);
        for (z, &w) in buf.iter_mut().zip(&self.weights) {
            *z *= w;
        }
        if !residual.is_finite() || buf.iter().any(|z| !z.is_finite()) {
            return Err(PatternFailure::NonFinite("posterior mean"));
        }
        Ok((buf, residual))
    }

    /// Dense `N×N` covariance `W − WΦ^H C^{-1} ΦW`.
    pub fn covariance(&self, offsets: &[usize]) -> DMatrix<Complex64> {
        let n = self.weights.len();
        let roots = crate::sensing::roots_of_unity(n);
        // ΦW
        let phi_w = DMatrix::from_fn(offsets.len(), n, |m, i| {
            roots[offsets[m] * i % n] * self.weights[i]
        });
        let correction = phi_w.adjoint() * &self.c_inv * &phi_w;
        DMatrix::from_fn(n, n, |i, j| {
            let diag = if i == j { self.weights[i] } else { 0.0 };
            Complex64::new(diag, 0.0) - correction[(i, j)]
        })
    }
}
