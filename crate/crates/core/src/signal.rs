//! Frequency-sparse complex signals.
//!
//! A [`LineSpectrum`] is a sum of `K` complex sinusoids with normalized
//! frequencies `f_k` in cycles per sample. [`synthesize`] evaluates it at
//! integer sample times and adds circularly-symmetric complex Gaussian
//! noise.

use std::f64::consts::PI;

use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Circular distance between two normalized frequencies, in cycles/sample.
pub fn circular_distance(a: f64, b: f64) -> f64 {
    let d = (a - b).rem_euclid(1.0);
    d.min(1.0 - d)
}

/// `exp(j 2π f t)` with the phase reduced modulo one cycle before scaling.
pub(crate) fn tone(freq: f64, t: u64) -> Complex64 {
    let cycles = (freq * t as f64).rem_euclid(1.0);
    Complex64::from_polar(1.0, 2.0 * PI * cycles)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "SpectrumRepr", into = "SpectrumRepr")]
pub struct LineSpectrum {
    freqs: Vec<f64>,
    amps: Vec<Complex64>,
}

#[derive(Serialize, Deserialize)]
struct SpectrumRepr {
    k: usize,
    freqs: Vec<f64>,
    amps: Vec<Complex64>,
}

impl TryFrom<SpectrumRepr> for LineSpectrum {
    type Error = Error;

    fn try_from(repr: SpectrumRepr) -> Result<Self> {
        if repr.k != repr.freqs.len() {
            return Err(Error::InvalidSpectrum(format!(
                "k = {} but {} frequencies given",
                repr.k,
                repr.freqs.len()
            )));
        }
        LineSpectrum::new(repr.freqs, repr.amps)
    }
}

impl From<LineSpectrum> for SpectrumRepr {
    fn from(spec: LineSpectrum) -> Self {
        SpectrumRepr {
            k: spec.freqs.len(),
            freqs: spec.freqs,
            amps: spec.amps,
        }
    }
}

impl LineSpectrum {
    pub fn new(freqs: Vec<f64>, amps: Vec<Complex64>) -> Result<Self> {
        if freqs.is_empty() {
            return Err(Error::InvalidSpectrum("at least one component required".into()));
        }
        if freqs.len() != amps.len() {
            return Err(Error::InvalidSpectrum(format!(
                "{} frequencies but {} amplitudes",
                freqs.len(),
                amps.len()
            )));
        }
        for (i, &f) in freqs.iter().enumerate() {
            if !(0.0..1.0).contains(&f) {
                return Err(Error::InvalidSpectrum(format!("frequency {f} outside [0, 1)")));
            }
            if freqs[..i].contains(&f) {
                return Err(Error::InvalidSpectrum(format!("frequency {f} repeated")));
            }
        }
        if let Some(c) = amps.iter().find(|c| !(c.norm() > 0.0) || !c.is_finite()) {
            return Err(Error::InvalidSpectrum(format!("amplitude {c} must be finite and non-zero")));
        }
        Ok(Self { freqs, amps })
    }

    /// Builds a spectrum from amplitude moduli and phases in radians.
    pub fn from_polar(freqs: Vec<f64>, moduli: &[f64], phases: &[f64]) -> Result<Self> {
        if moduli.len() != phases.len() {
            return Err(Error::InvalidSpectrum("moduli and phases differ in length".into()));
        }
        let amps = moduli
            .iter()
            .zip(phases)
            .map(|(&r, &p)| Complex64::from_polar(r, p))
            .collect();
        Self::new(freqs, amps)
    }

    pub fn len(&self) -> usize {
        self.freqs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.freqs.is_empty()
    }

    pub fn freqs(&self) -> &[f64] {
        &self.freqs
    }

    pub fn amps(&self) -> &[Complex64] {
        &self.amps
    }

    /// Mean signal power `Σ|c_k|²`.
    pub fn power(&self) -> f64 {
        self.amps.iter().map(|c| c.norm_sqr()).sum()
    }

    /// Noiseless value at integer time `t`.
    pub fn evaluate(&self, t: u64) -> Complex64 {
        self.freqs
            .iter()
            .zip(&self.amps)
            .map(|(&f, &c)| c * tone(f, t))
            .sum()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RecordRepr")]
pub struct SampleRecord {
    indices: Vec<u64>,
    values: Vec<Complex64>,
    noise_variance: f64,
}

#[derive(Deserialize)]
struct RecordRepr {
    indices: Vec<u64>,
    values: Vec<Complex64>,
    #[serde(default)]
    noise_variance: f64,
}

impl TryFrom<RecordRepr> for SampleRecord {
    type Error = Error;

    fn try_from(repr: RecordRepr) -> Result<Self> {
        SampleRecord::new(repr.indices, repr.values, repr.noise_variance)
    }
}

fn check_indices(indices: &[u64]) -> Result<()> {
    if indices.is_empty() {
        return Err(Error::EmptyIndices);
    }
    if indices[0] == 0 {
        return Err(Error::InvalidRecord("sample indices must be positive".into()));
    }
    if let Some(w) = indices.windows(2).find(|w| w[1] <= w[0]) {
        return Err(Error::InvalidRecord(format!(
            "indices not strictly increasing at {} -> {}",
            w[0], w[1]
        )));
    }
    Ok(())
}

impl SampleRecord {
    pub fn new(indices: Vec<u64>, values: Vec<Complex64>, noise_variance: f64) -> Result<Self> {
        check_indices(&indices)?;
        if indices.len() != values.len() {
            return Err(Error::InvalidRecord(format!(
                "{} indices but {} values",
                indices.len(),
                values.len()
            )));
        }
        if !(noise_variance >= 0.0) {
            return Err(Error::NegativeNoiseVariance(noise_variance));
        }
        Ok(Self {
            indices,
            values,
            noise_variance,
        })
    }

    pub fn indices(&self) -> &[u64] {
        &self.indices
    }

    pub fn values(&self) -> &[Complex64] {
        &self.values
    }

    pub fn noise_variance(&self) -> f64 {
        self.noise_variance
    }

    pub fn len(&self) -> usize {
        self.indices.len()
    }

    pub fn is_empty(&self) -> bool {
        self.indices.is_empty()
    }

    /// Looks up the value recorded at sample time `t`.
    pub fn value_at(&self, t: u64) -> Option<Complex64> {
        self.indices
            .binary_search(&t)
            .ok()
            .map(|pos| self.values[pos])
    }
}

/// Draws `n` circularly-symmetric complex Gaussian samples of total variance
/// `variance`.
pub fn complex_noise<R: Rng + ?Sized>(rng: &mut R, n: usize, variance: f64) -> Vec<Complex64> {
    let scale = (variance / 2.0).sqrt();
    (0..n)
        .map(|_| {
            let re: f64 = rng.sample(StandardNormal);
            let im: f64 = rng.sample(StandardNormal);
            Complex64::new(re * scale, im * scale)
        })
        .collect()
}

/// Samples `spec` at the given times and adds complex white noise.
pub fn synthesize(
    spec: &LineSpectrum,
    indices: &[u64],
    noise_variance: f64,
    seed: u64,
) -> Result<SampleRecord> {
    if !(noise_variance >= 0.0) {
        return Err(Error::NegativeNoiseVariance(noise_variance));
    }
    check_indices(indices)?;
    let mut values: Vec<Complex64> = indices.iter().map(|&t| spec.evaluate(t)).collect();
    if noise_variance > 0.0 {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        for (v, e) in values
            .iter_mut()
            .zip(complex_noise(&mut rng, indices.len(), noise_variance))
        {
            *v += e;
        }
    }
    SampleRecord::new(indices.to_vec(), values, noise_variance)
}

/// Noise variance giving `snr_db` against the total power `Σ|c_k|²`.
pub fn noise_variance_for_snr(spec: &LineSpectrum, snr_db: f64) -> f64 {
    spec.power() / 10f64.powf(snr_db / 10.0)
}

/// Range of amplitude moduli for random spectra.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AmplitudeRange {
    pub min: f64,
    pub max: f64,
}

impl Default for AmplitudeRange {
    fn default() -> Self {
        Self { min: 0.2, max: 1.0 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RandomSpectrumConfig {
    pub k: usize,
    pub grid_n: usize,
    pub min_separation: f64,
    pub on_grid: bool,
    #[serde(default)]
    pub amplitude: AmplitudeRange,
}

const MAX_RESTARTS: usize = 10_000;

/// Draws a random spectrum: frequencies uniform (optionally snapped to the
/// grid `n/grid_n`) with pairwise circular gaps of at least `min_separation`,
/// moduli uniform over the amplitude range, phases uniform on `[0, 2π)`.
pub fn random_spectrum(cfg: &RandomSpectrumConfig, seed: u64) -> Result<LineSpectrum> {
    let infeasible = || Error::InfeasibleSpectrum {
        k: cfg.k,
        min_separation: cfg.min_separation,
    };
    if cfg.k == 0 || cfg.grid_n == 0 {
        return Err(Error::InvalidArgument("k and grid_n must be positive".into()));
    }
    if !(cfg.min_separation >= 0.0) || cfg.k as f64 * cfg.min_separation >= 1.0 {
        return Err(infeasible());
    }
    let AmplitudeRange { min, max } = cfg.amplitude;
    if !(min > 0.0 && max >= min && max.is_finite()) {
        return Err(Error::InvalidArgument(format!(
            "amplitude range [{min}, {max}] must be positive and ordered"
        )));
    }
    if cfg.on_grid {
        if cfg.k > 1 && cfg.min_separation < 2.0 / cfg.grid_n as f64 {
            return Err(Error::InvalidArgument(format!(
                "on-grid spectra need min_separation >= 2/N = {}",
                2.0 / cfg.grid_n as f64
            )));
        }
        // Smallest grid step honouring the separation.
        let step = (cfg.min_separation * cfg.grid_n as f64 - 1e-9).ceil().max(1.0) as usize;
        if cfg.k * step > cfg.grid_n {
            return Err(infeasible());
        }
    }

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut freqs: Vec<f64> = Vec::with_capacity(cfg.k);
    let mut restarts = 0;
    while freqs.len() < cfg.k {
        let mut placed = false;
        for _ in 0..1000 {
            let f = if cfg.on_grid {
                rng.random_range(0..cfg.grid_n) as f64 / cfg.grid_n as f64
            } else {
                rng.random::<f64>()
            };
            if freqs
                .iter()
                .all(|&g| circular_distance(f, g) >= cfg.min_separation - 1e-12 && f != g)
            {
                freqs.push(f);
                placed = true;
                break;
            }
        }
        if !placed {
            restarts += 1;
            if restarts > MAX_RESTARTS {
                return Err(infeasible());
            }
            freqs.clear();
        }
    }
    let moduli: Vec<f64> = (0..cfg.k).map(|_| rng.random_range(min..=max)).collect();
    let phases: Vec<f64> = (0..cfg.k).map(|_| rng.random_range(0.0..2.0 * PI)).collect();
    LineSpectrum::from_polar(freqs, &moduli, &phases)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    fn unit(f: f64) -> LineSpectrum {
        LineSpectrum::new(vec![f], vec![Complex64::new(1.0, 0.0)]).unwrap()
    }

    #[test]
    fn quarter_cycle_tone() {
        let rec = synthesize(&unit(0.25), &[1, 2, 3, 4], 0.0, 0).unwrap();
        let expect = [
            Complex64::new(0.0, 1.0),
            Complex64::new(-1.0, 0.0),
            Complex64::new(0.0, -1.0),
            Complex64::new(1.0, 0.0),
        ];
        for (v, e) in rec.values().iter().zip(expect) {
            assert_abs_diff_eq!((v - e).norm(), 0.0, epsilon = 1e-12);
        }
    }

    #[test]
    fn dc_component() {
        let spec = LineSpectrum::new(vec![0.0], vec![Complex64::new(2.0, 0.0)]).unwrap();
        let rec = synthesize(&spec, &[3, 7, 1000, 123456], 0.0, 5).unwrap();
        assert!(rec.values().iter().all(|v| (v - 2.0).norm() < 1e-12));
    }

    #[test]
    fn three_tone_matches_scalar_sum() {
        let moduli = [0.2, 0.4, 0.8];
        let phases = [0.3, -1.1, 2.5];
        let freqs = [0.178, 0.353, 0.372];
        let spec = LineSpectrum::from_polar(freqs.to_vec(), &moduli, &phases).unwrap();
        let rec = synthesize(&spec, &[9], 0.0, 0).unwrap();
        // independent evaluation: c_k exp(j ω_k m) with ω_k = 2π f_k
        let mut re = 0.0;
        let mut im = 0.0;
        for k in 0..3 {
            let arg = phases[k] + 2.0 * PI * freqs[k] * 9.0;
            re += moduli[k] * arg.cos();
            im += moduli[k] * arg.sin();
        }
        assert_abs_diff_eq!(rec.values()[0].re, re, epsilon = 1e-12);
        assert_abs_diff_eq!(rec.values()[0].im, im, epsilon = 1e-12);
    }

    #[test]
    fn snr_calibration() {
        assert_abs_diff_eq!(noise_variance_for_snr(&unit(0.1), 0.0), 1.0);
        let spec =
            LineSpectrum::from_polar(vec![0.1, 0.2, 0.3], &[0.2, 0.4, 0.8], &[0.0; 3]).unwrap();
        assert_abs_diff_eq!(noise_variance_for_snr(&spec, 20.0), 0.0084, epsilon = 1e-15);
        assert_eq!(noise_variance_for_snr(&unit(0.1), f64::INFINITY), 0.0);
    }

    #[test]
    fn rejects_bad_inputs() {
        assert!(matches!(
            synthesize(&unit(0.1), &[1, 2], -1.0, 0),
            Err(Error::NegativeNoiseVariance(_))
        ));
        assert!(matches!(synthesize(&unit(0.1), &[], 0.0, 0), Err(Error::EmptyIndices)));
        assert!(synthesize(&unit(0.1), &[2, 2], 0.0, 0).is_err());
        assert!(LineSpectrum::new(vec![1.0], vec![Complex64::new(1.0, 0.0)]).is_err());
        assert!(LineSpectrum::new(vec![0.1, 0.1], vec![Complex64::new(1.0, 0.0); 2]).is_err());
        assert!(LineSpectrum::new(vec![0.1], vec![Complex64::new(0.0, 0.0)]).is_err());
    }

    #[test]
    fn noise_variance_is_calibrated() {
        // zero-amplitude spectra are rejected, so measure pure noise directly
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let v = 0.37;
        let noise = complex_noise(&mut rng, 10_000, v);
        let est = noise.iter().map(|e| e.norm_sqr()).sum::<f64>() / noise.len() as f64;
        assert!((est - v).abs() / v < 0.05, "empirical {est}");

        let spec = unit(0.05);
        let idx: Vec<u64> = (1..=10_000).collect();
        let clean = synthesize(&spec, &idx, 0.0, 3).unwrap();
        let noisy = synthesize(&spec, &idx, v, 3).unwrap();
        let est = clean
            .values()
            .iter()
            .zip(noisy.values())
            .map(|(a, b)| (b - a).norm_sqr())
            .sum::<f64>()
            / idx.len() as f64;
        assert!((est - v).abs() / v < 0.05, "empirical {est}");
    }

    #[test]
    fn aliasing_and_linearity() {
        let idx: Vec<u64> = (1..50).map(|i| i * 7).collect();
        let a = synthesize(&unit(0.3), &idx, 0.0, 0).unwrap();
        for (&t, v) in idx.iter().zip(a.values()) {
            let alias = Complex64::from_polar(1.0, 2.0 * PI * 1.3 * t as f64);
            assert!((alias - v).norm() < 1e-9);
        }
        let s1 = LineSpectrum::new(vec![0.1], vec![Complex64::new(0.5, 0.2)]).unwrap();
        let s2 = LineSpectrum::new(vec![0.7], vec![Complex64::new(-0.1, 0.9)]).unwrap();
        let both = LineSpectrum::new(vec![0.1, 0.7], vec![s1.amps()[0], s2.amps()[0]]).unwrap();
        let (r1, r2, r12) = (
            synthesize(&s1, &idx, 0.0, 0).unwrap(),
            synthesize(&s2, &idx, 0.0, 0).unwrap(),
            synthesize(&both, &idx, 0.0, 0).unwrap(),
        );
        for i in 0..idx.len() {
            assert!((r1.values()[i] + r2.values()[i] - r12.values()[i]).norm() < 1e-12);
        }
    }

    #[test]
    fn random_spectrum_contracts() {
        let cfg = RandomSpectrumConfig {
            k: 1,
            grid_n: 100,
            min_separation: 0.02,
            on_grid: true,
            amplitude: AmplitudeRange::default(),
        };
        let s = random_spectrum(&cfg, 9).unwrap();
        let scaled = s.freqs()[0] * 100.0;
        assert_abs_diff_eq!(scaled, scaled.round(), epsilon = 1e-9);

        let cfg = RandomSpectrumConfig {
            k: 3,
            on_grid: false,
            ..cfg
        };
        for seed in 0..50 {
            let s = random_spectrum(&cfg, seed).unwrap();
            let f = s.freqs();
            for i in 0..3 {
                for j in 0..i {
                    assert!(circular_distance(f[i], f[j]) >= 0.02 - 1e-12);
                }
            }
            assert_eq!(s, random_spectrum(&cfg, seed).unwrap());
        }
    }

    #[test]
    fn random_spectrum_rejects_infeasible() {
        let cfg = RandomSpectrumConfig {
            k: 10,
            grid_n: 100,
            min_separation: 0.1,
            on_grid: false,
            amplitude: AmplitudeRange::default(),
        };
        assert!(matches!(random_spectrum(&cfg, 0), Err(Error::InfeasibleSpectrum { .. })));
        let cfg = RandomSpectrumConfig {
            k: 3,
            min_separation: 0.01,
            on_grid: true,
            ..cfg
        };
        assert!(random_spectrum(&cfg, 0).is_err());
    }

    #[test]
    fn json_uses_pairs_for_complex() {
        let spec = LineSpectrum::new(vec![0.25], vec![Complex64::new(1.5, -2.0)]).unwrap();
        let json = serde_json::to_string(&spec).unwrap();
        assert_eq!(json, r#"{"k":1,"freqs":[0.25],"amps":[[1.5,-2.0]]}"#);
        let back: LineSpectrum = serde_json::from_str(&json).unwrap();
        assert_eq!(back, spec);
        assert!(serde_json::from_str::<LineSpectrum>(r#"{"k":2,"freqs":[0.25],"amps":[[1,0]]}"#)
            .is_err());
    }
}
