//! Reference estimators: MUSIC on consecutive Nyquist-rate samples, and the
//! multitask solver fed with randomly placed samples.

use std::f64::consts::PI;

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use num_complex::Complex64;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::sampling::{build_tasks, TaskSet, TaskWindow};
use crate::signal::{complex_noise, LineSpectrum, SampleRecord};
use crate::util::{mix_seed, top_peaks};
use crate::vb::{Hyperparams, RunOptions, SpectrumEstimate, VbSolver};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MusicConfig {
    /// Subarray length; `None` picks `⌊(count + 1)/2⌋`.
    pub subarray_length: Option<usize>,
    /// Scan grid size.
    pub grid_n: usize,
    /// Model order.
    pub k: usize,
}

impl MusicConfig {
    pub fn new(grid_n: usize, k: usize) -> Self {
        Self {
            subarray_length: None,
            grid_n,
            k,
        }
    }

    fn resolve(&self, count: usize) -> Result<usize> {
        let len = self.subarray_length.unwrap_or((count + 1) / 2);
        if self.grid_n == 0 {
            return Err(Error::InvalidArgument("scan grid must be non-empty".into()));
        }
        if len > count || len == 0 {
            return Err(Error::InsufficientSamples {
                needed: len.max(1),
                available: count,
            });
        }
        if self.k >= len {
            return Err(Error::SparsityTooLarge { k: self.k, rows: len });
        }
        if self.k > self.grid_n {
            return Err(Error::InvalidArgument(format!(
                "K = {} exceeds grid size {}",
                self.k, self.grid_n
            )));
        }
        Ok(len)
    }
}

/// Forward–backward smoothed covariance of all length-`len` subarrays.
pub fn smoothed_covariance(samples: &[Complex64], len: usize) -> DMatrix<Complex64> {
    let count = samples.len() - len + 1;
    let mut r = DMatrix::<Complex64>::zeros(len, len);
    for s in 0..count {
        let x = DVector::from_column_slice(&samples[s..s + len]);
        r += &x * x.adjoint();
    }
    // backward: J conj(R) J
    let fb = DMatrix::from_fn(len, len, |i, j| {
        r[(i, j)] + r[(len - 1 - i, len - 1 - j)].conj()
    });
    fb / Complex64::new(2.0 * count as f64, 0.0)
}

/// `P(f) = 1/‖E_n^H a(f)‖²` on the grid `n/grid_N`.
pub fn music_pseudospectrum(samples: &[Complex64], cfg: &MusicConfig) -> Result<Vec<f64>> {
    let len = cfg.resolve(samples.len())?;
    let eig = SymmetricEigen::new(smoothed_covariance(samples, len));
    let mut order: Vec<usize> = (0..len).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[a].total_cmp(&eig.eigenvalues[b]));
    let noise: Vec<usize> = order[..len - cfg.k].to_vec();

    let n = cfg.grid_n;
    let spectrum = (0..n)
        .map(|g| {
            let steer: Vec<Complex64> = (0..len)
                .map(|m| Complex64::from_polar(1.0, 2.0 * PI * (g * m % n) as f64 / n as f64))
                .collect();
            let proj: f64 = noise
                .iter()
                .map(|&c| {
                    let col = eig.eigenvectors.column(c);
                    col.iter()
                        .zip(&steer)
                        .map(|(e, a)| e.conj() * a)
                        .sum::<Complex64>()
                        .norm_sqr()
                })
                .sum();
            1.0 / proj.max(f64::MIN_POSITIVE)
        })
        .collect();
    Ok(spectrum)
}

/// Pseudo-spectrum wrapped in the estimator output type.
pub fn music_spectrum(samples: &[Complex64], cfg: &MusicConfig) -> Result<SpectrumEstimate> {
    Ok(SpectrumEstimate::from_power(music_pseudospectrum(samples, cfg)?))
}

/// The `K` strongest pseudo-spectrum peaks as grid frequencies.
pub fn music_estimate(samples: &[Complex64], cfg: &MusicConfig) -> Result<Vec<f64>> {
    let p = music_pseudospectrum(samples, cfg)?;
    Ok(top_peaks(&p, cfg.k)
        .into_iter()
        .map(|i| i as f64 / cfg.grid_n as f64)
        .collect())
}

/// Consecutive Nyquist-rate samples `t = 0..count` of `spec` plus noise.
pub fn nyquist_samples(spec: &LineSpectrum, count: usize, noise_variance: f64, seed: u64) -> Vec<Complex64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let noise = complex_noise(&mut rng, count, noise_variance);
    (0..count as u64).zip(noise).map(|(t, e)| spec.evaluate(t) + e).collect()
}

/// How random sample positions are laid out over the tasks.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum RandomWindowMode {
    /// Each task draws its own `M` distinct positions from `[N]`; `L·M`
    /// samples in total.
    #[default]
    Independent,
    /// One random stream of `L + M − 1` samples with i.i.d. gaps in
    /// `1..=⌊(N−1)/(M−1)⌋`, windowed like the coprime stream.
    Sliding,
}

/// Random-sampling tasks for `spec`.
pub fn random_tasks(
    spec: &LineSpectrum,
    m: usize,
    l: usize,
    n: usize,
    noise_variance: f64,
    mode: RandomWindowMode,
    seed: u64,
) -> Result<TaskSet> {
    if m < 1 || l < 1 || m > n {
        return Err(Error::InvalidArgument(format!(
            "need 1 <= M <= N and L >= 1 (got M={m}, N={n}, L={l})"
        )));
    }
    if !(noise_variance >= 0.0) {
        return Err(Error::NegativeNoiseVariance(noise_variance));
    }
    let mut place = ChaCha8Rng::seed_from_u64(mix_seed(seed, &[0]));
    let mut noise_rng = ChaCha8Rng::seed_from_u64(mix_seed(seed, &[1]));
    match mode {
        RandomWindowMode::Independent => {
            let windows = (0..l)
                .map(|task| {
                    let mut pos = rand::seq::index::sample(&mut place, n, m).into_vec();
                    pos.sort_unstable();
                    let base = (task * n) as u64 + 1;
                    let times: Vec<u64> = pos.iter().map(|&p| base + p as u64).collect();
                    let noise = complex_noise(&mut noise_rng, m, noise_variance);
                    TaskWindow {
                        values: times.iter().zip(noise).map(|(&t, e)| spec.evaluate(t) + e).collect(),
                        offsets: times.iter().map(|t| t - times[0]).collect(),
                        start_index: times[0],
                    }
                })
                .collect();
            TaskSet::from_windows(windows, m, n)
        }
        RandomWindowMode::Sliding => {
            use rand::Rng;
            let max_gap = if m > 1 { ((n - 1) / (m - 1)).max(1) } else { 1 } as u64;
            let mut t = 0u64;
            let times: Vec<u64> = (0..l + m - 1)
                .map(|_| {
                    t += place.random_range(1..=max_gap);
                    t
                })
                .collect();
            let noise = complex_noise(&mut noise_rng, times.len(), noise_variance);
            let values = times.iter().zip(noise).map(|(&t, e)| spec.evaluate(t) + e).collect();
            let record = SampleRecord::new(times, values, noise_variance)?;
            build_tasks(&record, m, l, n, 1)
        }
    }
}

/// Runs the multitask solver on randomly placed samples of `spec`.
#[allow(clippy::too_many_arguments)]
pub fn random_sampling_estimate(
    spec: &LineSpectrum,
    m: usize,
    l: usize,
    n: usize,
    noise_variance: f64,
    hp: Hyperparams,
    opts: RunOptions,
    mode: RandomWindowMode,
    seed: u64,
) -> Result<SpectrumEstimate> {
    let tasks = random_tasks(spec, m, l, n, noise_variance, mode, seed)?;
    Ok(VbSolver::new(&tasks, hp)?.solve(opts)?.1)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn three_tones() -> LineSpectrum {
        LineSpectrum::from_polar(vec![0.18, 0.35, 0.61], &[1.0, 0.7, 0.5], &[0.3, -1.2, 2.0]).unwrap()
    }

    #[test]
    fn single_tone_is_exact() {
        let spec = LineSpectrum::from_polar(vec![0.23], &[1.0], &[0.9]).unwrap();
        let x = nyquist_samples(&spec, 58, 0.0, 0);
        assert_eq!(music_estimate(&x, &MusicConfig::new(100, 1)).unwrap(), vec![0.23]);
    }

    #[test]
    fn three_tones_at_high_snr() {
        let x = nyquist_samples(&three_tones(), 61, 1e-3, 4);
        let mut f = music_estimate(&x, &MusicConfig::new(100, 3)).unwrap();
        f.sort_by(f64::total_cmp);
        assert_eq!(f, vec![0.18, 0.35, 0.61]);
    }

    #[test]
    fn forward_backward_symmetry() {
        let x = nyquist_samples(&three_tones(), 40, 0.1, 9);
        // reversed conjugate has the same smoothed covariance
        let y: Vec<Complex64> = x.iter().rev().map(|z| z.conj()).collect();
        let len = 20;
        let (rx, ry) = (smoothed_covariance(&x, len), smoothed_covariance(&y, len));
        assert!((&rx - &ry).norm() < 1e-12 * rx.norm());
        let cfg = MusicConfig::new(100, 3);
        assert_eq!(music_estimate(&x, &cfg).unwrap(), music_estimate(&y, &cfg).unwrap());
    }

    #[test]
    fn phase_and_scale_keep_peaks() {
        let x = nyquist_samples(&three_tones(), 50, 0.05, 2);
        let cfg = MusicConfig::new(100, 3);
        let base = music_estimate(&x, &cfg).unwrap();
        let rot = Complex64::from_polar(2.5, 1.1);
        let y: Vec<Complex64> = x.iter().map(|z| z * rot).collect();
        assert_eq!(music_estimate(&y, &cfg).unwrap(), base);
        let (p, q) = (music_pseudospectrum(&x, &cfg).unwrap(), music_pseudospectrum(&y, &cfg).unwrap());
        let argmax = |v: &[f64]| (0..v.len()).max_by(|&a, &b| v[a].total_cmp(&v[b])).unwrap();
        assert_eq!(argmax(&p), argmax(&q));
    }

    #[test]
    fn music_input_errors() {
        let x = nyquist_samples(&three_tones(), 10, 0.0, 0);
        let short = MusicConfig { subarray_length: Some(11), ..MusicConfig::new(100, 3) };
        assert!(matches!(music_estimate(&x, &short), Err(Error::InsufficientSamples { .. })));
        let deficient = MusicConfig { subarray_length: Some(3), ..MusicConfig::new(100, 3) };
        assert!(matches!(music_estimate(&x, &deficient), Err(Error::SparsityTooLarge { .. })));
    }

    #[test]
    fn random_tasks_shapes() {
        let spec = three_tones();
        let t = random_tasks(&spec, 27, 30, 100, 0.0, RandomWindowMode::Independent, 5).unwrap();
        assert_eq!((t.l(), t.m()), (30, 27));
        for w in t.windows() {
            assert_eq!(w.offsets[0], 0);
            assert!(w.offsets.windows(2).all(|p| p[0] < p[1]));
            assert!(*w.offsets.last().unwrap() < 100);
        }
        let s = random_tasks(&spec, 27, 30, 100, 0.0, RandomWindowMode::Sliding, 5).unwrap();
        assert_eq!(s.distinct_indices().len(), 30 + 27 - 1);
    }

    #[test]
    fn random_sampling_is_deterministic() {
        let spec = three_tones();
        let run = |seed| {
            random_sampling_estimate(
                &spec,
                27,
                10,
                100,
                1e-3,
                Hyperparams::default(),
                RunOptions::default(),
                RandomWindowMode::Independent,
                seed,
            )
            .unwrap()
        };
        assert_eq!(run(3), run(3));
        assert_ne!(run(3).grid_power, run(4).grid_power);
    }
}
