//! Seeded Monte-Carlo sweeps, success scoring and spectrum demos.
//!
//! Every trial is a pure function of `(config, method, snr, trial)`. The
//! spectrum drawn for a trial depends on `(seed, snr, trial)` only, so all
//! methods see the same scenario, while each method draws its noise from a
//! stream keyed by its own id.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};
use std::time::Instant;

use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::baselines::{music_spectrum, nyquist_samples, random_sampling_estimate, MusicConfig, RandomWindowMode};
use crate::error::{Error, Result};
use crate::sampling::{build_tasks, max_valid_window, CoprimeScheme, WindowRule};
use crate::signal::{
    circular_distance, noise_variance_for_snr, random_spectrum, synthesize, AmplitudeRange, LineSpectrum,
    RandomSpectrumConfig,
};
use crate::util::{fmt_sig, mix_seed};
use crate::vb::{extract_frequencies, Hyperparams, RunOptions, SpectrumEstimate, VbSolver};

/// Version of the JSON configuration schema.
pub const SCHEMA_VERSION: u32 = 1;

const SCENARIO_STREAM: u64 = 0;

/// `git describe`-style version, taken from `LSE_GIT_DESCRIBE` at build time
/// when set.
pub fn version_string() -> String {
    option_env!("LSE_GIT_DESCRIBE")
        .map(str::to_owned)
        .unwrap_or_else(|| format!("v{}", env!("CARGO_PKG_VERSION")))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Method {
    Proposed,
    Music,
    RandomCs,
}

impl Method {
    /// Stable stream id; never renumber.
    pub fn id(self) -> u64 {
        match self {
            Method::Proposed => 1,
            Method::Music => 2,
            Method::RandomCs => 3,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Method::Proposed => "proposed",
            Method::Music => "music",
            Method::RandomCs => "random-cs",
        }
    }

    pub fn parse(s: &str) -> Result<Self> {
        match s {
            "proposed" => Ok(Method::Proposed),
            "music" => Ok(Method::Music),
            "random-cs" => Ok(Method::RandomCs),
            _ => Err(Error::InvalidArgument(format!("unknown method '{s}'"))),
        }
    }
}

/// Window length: a number, or `"auto"` for the largest valid one.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum WindowSize {
    Fixed(usize),
    Auto(AutoTag),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum AutoTag {
    #[serde(rename = "auto")]
    Auto,
}

impl WindowSize {
    pub const AUTO: WindowSize = WindowSize::Auto(AutoTag::Auto);
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "policy", rename_all = "kebab-case")]
pub enum FrequencyPolicy {
    Fixed { freqs: Vec<f64> },
    Random { min_separation: f64, on_grid: bool },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "policy", rename_all = "kebab-case")]
pub enum AmplitudePolicy {
    Fixed { moduli: Vec<f64> },
    Uniform { min: f64, max: f64 },
}

impl Default for AmplitudePolicy {
    fn default() -> Self {
        let r = AmplitudeRange::default();
        AmplitudePolicy::Uniform { min: r.min, max: r.max }
    }
}

fn default_schema() -> u32 {
    SCHEMA_VERSION
}

fn default_output() -> PathBuf {
    PathBuf::from("out")
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentConfig {
    #[serde(default = "default_schema")]
    pub schema_version: u32,
    pub scheme: CoprimeScheme,
    pub n: usize,
    pub m: WindowSize,
    #[serde(default)]
    pub window_rule: WindowRule,
    pub l: usize,
    /// Task counts for the spectrum demo.
    #[serde(default)]
    pub l_values: Vec<usize>,
    pub k: usize,
    pub snr_db: Vec<f64>,
    pub trials: usize,
    pub frequencies: FrequencyPolicy,
    #[serde(default)]
    pub amplitudes: AmplitudePolicy,
    pub seed: u64,
    pub methods: Vec<Method>,
    #[serde(default = "default_output")]
    pub output_dir: PathBuf,
    #[serde(default)]
    pub hyperparams: Hyperparams,
    #[serde(default)]
    pub run: RunOptions,
    #[serde(default)]
    pub random_mode: RandomWindowMode,
    #[serde(default)]
    pub music_subarray: Option<usize>,
}

impl ExperimentConfig {
    /// Three fixed lines `{0.178, 0.353, 0.372}` with moduli
    /// `{0.2, 0.4, 0.8}` under scheme (9,10,11), `N = 100`, `M = 27`.
    pub fn three_lines() -> Self {
        Self {
            schema_version: SCHEMA_VERSION,
            scheme: CoprimeScheme::new(9, 10, 11).expect("coprime"),
            n: 100,
            m: WindowSize::Fixed(27),
            window_rule: WindowRule::WithinGrid,
            l: 30,
            l_values: vec![1, 10, 30],
            k: 3,
            snr_db: vec![20.0],
            trials: 50,
            frequencies: FrequencyPolicy::Fixed {
                freqs: vec![0.178, 0.353, 0.372],
            },
            amplitudes: AmplitudePolicy::Fixed {
                moduli: vec![0.2, 0.4, 0.8],
            },
            seed: 2017,
            methods: vec![Method::Proposed],
            output_dir: default_output(),
            hyperparams: Hyperparams::default(),
            run: RunOptions::default(),
            random_mode: RandomWindowMode::default(),
            music_subarray: None,
        }
    }

    /// Random on-grid triples, scheme (7,8,9), `M = 32`, SNR 10 to 30 dB.
    pub fn snr_sweep() -> Self {
        Self {
            scheme: CoprimeScheme::new(7, 8, 9).expect("coprime"),
            m: WindowSize::Fixed(32),
            l_values: Vec::new(),
            snr_db: vec![10.0, 15.0, 20.0, 25.0, 30.0],
            trials: 100,
            frequencies: FrequencyPolicy::Random {
                min_separation: 0.02,
                on_grid: true,
            },
            amplitudes: AmplitudePolicy::default(),
            methods: vec![Method::Proposed, Method::Music, Method::RandomCs],
            ..Self::three_lines()
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::InvalidArgument(msg));
        if self.schema_version != SCHEMA_VERSION {
            return bad(format!(
                "config schema {} is not supported (expected {SCHEMA_VERSION})",
                self.schema_version
            ));
        }
        if self.trials == 0 {
            return bad("trials must be at least 1".into());
        }
        if self.methods.is_empty() {
            return bad("at least one method is required".into());
        }
        if self.k == 0 || self.l == 0 || self.n < 2 {
            return bad(format!("need K >= 1, L >= 1, N >= 2 (got K={}, L={}, N={})", self.k, self.l, self.n));
        }
        if self.snr_db.is_empty() || self.snr_db.iter().any(|s| !s.is_finite()) {
            return bad("snr_db must be a non-empty list of finite values".into());
        }
        if let FrequencyPolicy::Fixed { freqs } = &self.frequencies {
            if freqs.len() != self.k {
                return bad(format!("{} fixed frequencies for K = {}", freqs.len(), self.k));
            }
        }
        if let AmplitudePolicy::Fixed { moduli } = &self.amplitudes {
            if moduli.len() != self.k {
                return bad(format!("{} fixed moduli for K = {}", moduli.len(), self.k));
            }
        }
        if self.l_values.contains(&0) {
            return bad("task counts must be positive".into());
        }
        self.hyperparams.validate()?;
        self.resolve_m()?;
        Ok(())
    }

    /// Non-fatal remarks, e.g. fixed lines closer than `2/N`.
    pub fn warnings(&self) -> Vec<String> {
        let mut out: Vec<String> = self.scheme.warning().map(str::to_owned).into_iter().collect();
        if let FrequencyPolicy::Fixed { freqs } = &self.frequencies {
            let limit = 2.0 / self.n as f64;
            for (i, &a) in freqs.iter().enumerate() {
                for &b in &freqs[i + 1..] {
                    if circular_distance(a, b) < limit - 1e-12 {
                        out.push(format!("frequencies {a} and {b} are closer than 2/N = {limit}"));
                    }
                }
            }
        }
        out
    }

    pub fn resolve_m(&self) -> Result<usize> {
        match self.m {
            WindowSize::Fixed(m) if m >= 1 => Ok(m),
            WindowSize::Fixed(_) => Err(Error::InvalidArgument("M must be positive".into())),
            WindowSize::Auto(_) => max_valid_window(&self.scheme, self.n, self.l.max(self.max_l()), self.window_rule),
        }
    }

    fn max_l(&self) -> usize {
        self.l_values.iter().copied().max().unwrap_or(self.l)
    }

    /// Scenario for one `(snr, trial)` cell.
    pub fn draw_spectrum(&self, seed: u64) -> Result<LineSpectrum> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        match &self.frequencies {
            FrequencyPolicy::Random { min_separation, on_grid } => {
                let amplitude = match self.amplitudes {
                    AmplitudePolicy::Uniform { min, max } => AmplitudeRange { min, max },
                    AmplitudePolicy::Fixed { .. } => AmplitudeRange::default(),
                };
                let drawn = random_spectrum(
                    &RandomSpectrumConfig {
                        k: self.k,
                        grid_n: self.n,
                        min_separation: *min_separation,
                        on_grid: *on_grid,
                        amplitude,
                    },
                    rng.random(),
                )?;
                match &self.amplitudes {
                    AmplitudePolicy::Fixed { moduli } => {
                        let phases: Vec<f64> = drawn.amps().iter().map(|c| c.arg()).collect();
                        LineSpectrum::from_polar(drawn.freqs().to_vec(), moduli, &phases)
                    }
                    AmplitudePolicy::Uniform { .. } => Ok(drawn),
                }
            }
            FrequencyPolicy::Fixed { freqs } => {
                let moduli = match &self.amplitudes {
                    AmplitudePolicy::Fixed { moduli } => moduli.clone(),
                    AmplitudePolicy::Uniform { min, max } => {
                        if !(*min > 0.0 && max >= min) {
                            return Err(Error::InvalidArgument(format!(
                                "amplitude range [{min}, {max}] must be positive and ordered"
                            )));
                        }
                        (0..self.k).map(|_| rng.random_range(*min..=*max)).collect()
                    }
                };
                let phases: Vec<f64> = (0..self.k)
                    .map(|_| rng.random_range(0.0..std::f64::consts::TAU))
                    .collect();
                LineSpectrum::from_polar(freqs.clone(), &moduli, &phases)
            }
        }
    }
}

fn snr_label(snr_db: f64) -> u64 {
    snr_db.to_bits()
}

/// Seed of the scenario (spectrum) shared by all methods.
pub fn scenario_seed(master: u64, snr_db: f64, trial: usize) -> u64 {
    mix_seed(master, &[SCENARIO_STREAM, snr_label(snr_db), trial as u64])
}

/// Seed of one method's noise and sampling stream.
pub fn method_seed(master: u64, method: Method, snr_db: f64, trial: usize) -> u64 {
    mix_seed(master, &[method.id(), snr_label(snr_db), trial as u64])
}

/// True iff some one-to-one matching puts every estimate within `0.5/N`
/// (circularly) of its true frequency.
pub fn is_success(truth: &[f64], estimate: &[f64], n: usize) -> Result<bool> {
    if truth.len() != estimate.len() {
        return Err(Error::CountMismatch {
            truth: truth.len(),
            estimated: estimate.len(),
        });
    }
    let tol = 0.5 / n as f64 + 1e-12;
    let close: Vec<Vec<bool>> = truth
        .iter()
        .map(|&t| estimate.iter().map(|&e| circular_distance(t, e) <= tol).collect())
        .collect();
    fn assign(row: usize, close: &[Vec<bool>], used: &mut [bool]) -> bool {
        if row == close.len() {
            return true;
        }
        for j in 0..used.len() {
            if close[row][j] && !used[j] {
                used[j] = true;
                if assign(row + 1, close, used) {
                    return true;
                }
                used[j] = false;
            }
        }
        false
    }
    Ok(assign(0, &close, &mut vec![false; estimate.len()]))
}

/// Sample budget `L + M − 1` shared by all methods.
fn budget(l: usize, m: usize) -> usize {
    l + m - 1
}

/// Runs one method on one scenario and returns its grid spectrum.
#[allow(clippy::too_many_arguments)]
pub fn estimate_with(
    cfg: &ExperimentConfig,
    method: Method,
    spec: &LineSpectrum,
    m: usize,
    l: usize,
    noise_variance: f64,
    seed: u64,
) -> Result<SpectrumEstimate> {
    match method {
        Method::Proposed => {
            let indices = cfg.scheme.first_indices(budget(l, m));
            let record = synthesize(spec, &indices, noise_variance, seed)?;
            let tasks = build_tasks(&record, m, l, cfg.n, 1)?;
            Ok(VbSolver::new(&tasks, cfg.hyperparams)?.solve(cfg.run)?.1)
        }
        Method::Music => {
            let samples: Vec<Complex64> = nyquist_samples(spec, budget(l, m), noise_variance, seed);
            let music = MusicConfig {
                subarray_length: cfg.music_subarray,
                grid_n: cfg.n,
                k: cfg.k,
            };
            music_spectrum(&samples, &music)
        }
        Method::RandomCs => random_sampling_estimate(
            spec,
            m,
            l,
            cfg.n,
            noise_variance,
            cfg.hyperparams,
            cfg.run,
            cfg.random_mode,
            seed,
        ),
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrialOutcome {
    pub method: Method,
    pub snr_db: f64,
    pub trial: usize,
    pub success: bool,
    /// Why the trial failed to produce an estimate, if it did.
    pub error: Option<String>,
    pub runtime_s: f64,
}

fn run_trial(cfg: &ExperimentConfig, m: usize, method: Method, snr_db: f64, trial: usize) -> TrialOutcome {
    let start = Instant::now();
    let result = (|| {
        let spec = cfg.draw_spectrum(scenario_seed(cfg.seed, snr_db, trial))?;
        let noise = noise_variance_for_snr(&spec, snr_db);
        let est = estimate_with(cfg, method, &spec, m, cfg.l, noise, method_seed(cfg.seed, method, snr_db, trial))?;
        is_success(spec.freqs(), &extract_frequencies(&est, cfg.k)?, cfg.n)
    })();
    let (success, error) = match result {
        Ok(s) => (s, None),
        Err(e) => (false, Some(e.to_string())),
    };
    TrialOutcome {
        method,
        snr_db,
        trial,
        success,
        error,
        runtime_s: start.elapsed().as_secs_f64(),
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SuccessPoint {
    pub method: Method,
    pub snr_db: f64,
    pub trials: usize,
    pub successes: usize,
}

impl SuccessPoint {
    pub fn success_rate(&self) -> f64 {
        self.successes as f64 / self.trials as f64
    }
}

/// Success counts per `(method, snr)`, in configuration order.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SuccessCurve {
    pub points: Vec<SuccessPoint>,
}

const CURVE_HEADER: [&str; 5] = ["method", "snr_db", "trials", "successes", "success_rate"];

impl SuccessCurve {
    pub fn point(&self, method: Method, snr_db: f64) -> Option<&SuccessPoint> {
        self.points.iter().find(|p| p.method == method && p.snr_db == snr_db)
    }

    /// Rates of one method in SNR order of the configuration.
    pub fn rates(&self, method: Method) -> Vec<f64> {
        self.points
            .iter()
            .filter(|p| p.method == method)
            .map(SuccessPoint::success_rate)
            .collect()
    }

    pub fn to_csv(&self) -> String {
        let mut out = CURVE_HEADER.join(",");
        out.push('\n');
        for p in &self.points {
            let _ = writeln!(
                out,
                "{},{},{},{},{}",
                p.method.name(),
                fmt_sig(p.snr_db),
                p.trials,
                p.successes,
                fmt_sig(p.success_rate())
            );
        }
        out
    }

    pub fn from_csv(text: &str) -> Result<Self> {
        let mut reader = csv::Reader::from_reader(text.as_bytes());
        if reader.headers()?.iter().ne(CURVE_HEADER) {
            return Err(Error::InvalidArgument("unexpected success-curve header".into()));
        }
        let parse_err = |what: &str, v: &str| Error::InvalidArgument(format!("bad {what} '{v}'"));
        let mut points = Vec::new();
        for row in reader.records() {
            let row = row?;
            let field = |i: usize| row.get(i).unwrap_or("");
            let point = SuccessPoint {
                method: Method::parse(field(0))?,
                snr_db: field(1).parse().map_err(|_| parse_err("snr", field(1)))?,
                trials: field(2).parse().map_err(|_| parse_err("trial count", field(2)))?,
                successes: field(3).parse().map_err(|_| parse_err("success count", field(3)))?,
            };
            if point.trials == 0 || point.successes > point.trials {
                return Err(Error::InvalidArgument(format!(
                    "{} successes out of {} trials",
                    point.successes, point.trials
                )));
            }
            points.push(point);
        }
        Ok(Self { points })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MonteCarloOutcome {
    pub curve: SuccessCurve,
    /// Mean wall time per trial, aligned with `curve.points`.
    pub mean_runtime_s: Vec<f64>,
    /// All trials in `(method, snr, trial)` order.
    pub trials: Vec<TrialOutcome>,
}

impl MonteCarloOutcome {
    pub fn errors(&self) -> impl Iterator<Item = &TrialOutcome> {
        self.trials.iter().filter(|t| t.error.is_some())
    }

    /// `method,snr_db,trial,success,error` per trial.
    pub fn trials_csv(&self) -> String {
        let mut w = csv::Writer::from_writer(Vec::new());
        let _ = w.write_record(["method", "snr_db", "trial", "success", "error"]);
        for t in &self.trials {
            let _ = w.write_record([
                t.method.name().to_owned(),
                fmt_sig(t.snr_db),
                t.trial.to_string(),
                t.success.to_string(),
                t.error.clone().unwrap_or_default(),
            ]);
        }
        String::from_utf8(w.into_inner().unwrap_or_default()).unwrap_or_default()
    }
}

/// Runs every `(method, snr, trial)` cell. Trials run in parallel and are
/// gathered in configuration order; a failing trial counts as a miss.
pub fn run_monte_carlo(cfg: &ExperimentConfig) -> Result<MonteCarloOutcome> {
    cfg.validate()?;
    let m = cfg.resolve_m()?;
    let cells: Vec<(Method, f64, usize)> = cfg
        .methods
        .iter()
        .flat_map(|&method| {
            cfg.snr_db
                .iter()
                .flat_map(move |&snr| (0..cfg.trials).map(move |t| (method, snr, t)))
        })
        .collect();
    let trials: Vec<TrialOutcome> = cells
        .par_iter()
        .map(|&(method, snr, t)| run_trial(cfg, m, method, snr, t))
        .collect();

    let mut points = Vec::new();
    let mut mean_runtime_s = Vec::new();
    for chunk in trials.chunks(cfg.trials) {
        points.push(SuccessPoint {
            method: chunk[0].method,
            snr_db: chunk[0].snr_db,
            trials: chunk.len(),
            successes: chunk.iter().filter(|t| t.success).count(),
        });
        mean_runtime_s.push(chunk.iter().map(|t| t.runtime_s).sum::<f64>() / chunk.len() as f64);
    }
    Ok(MonteCarloOutcome {
        curve: SuccessCurve { points },
        mean_runtime_s,
        trials,
    })
}

/// One panel of the spectrum demo.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DemoSpectrum {
    pub method: Method,
    pub l: usize,
    pub estimate: SpectrumEstimate,
}

impl DemoSpectrum {
    pub fn file_name(&self) -> String {
        format!("spectrum_{}_L{}.csv", self.method.name(), self.l)
    }
}

/// Grid spectra of the first scenario (first SNR, trial 0) for every task
/// count in `l_values` and every method.
pub fn run_spectrum_demo(cfg: &ExperimentConfig) -> Result<Vec<DemoSpectrum>> {
    cfg.validate()?;
    if cfg.l_values.is_empty() {
        return Err(Error::InvalidArgument("the spectrum demo needs at least one L value".into()));
    }
    if !matches!(cfg.frequencies, FrequencyPolicy::Fixed { .. }) {
        return Err(Error::InvalidArgument("the spectrum demo needs a fixed frequency list".into()));
    }
    let m = cfg.resolve_m()?;
    let snr = cfg.snr_db[0];
    let spec = cfg.draw_spectrum(scenario_seed(cfg.seed, snr, 0))?;
    let noise = noise_variance_for_snr(&spec, snr);
    let panels: Vec<(Method, usize)> = cfg
        .methods
        .iter()
        .flat_map(|&method| cfg.l_values.iter().map(move |&l| (method, l)))
        .collect();
    panels
        .par_iter()
        .map(|&(method, l)| {
            let estimate = estimate_with(cfg, method, &spec, m, l, noise, method_seed(cfg.seed, method, snr, 0))?;
            Ok(DemoSpectrum { method, l, estimate })
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub version: String,
    pub command: String,
    pub config: ExperimentConfig,
    pub outputs: Vec<String>,
    #[serde(default)]
    pub notes: serde_json::Value,
}

impl Manifest {
    pub fn new(command: &str, config: &ExperimentConfig) -> Self {
        Self {
            version: version_string(),
            command: command.to_owned(),
            config: config.clone(),
            outputs: Vec::new(),
            notes: serde_json::Value::Null,
        }
    }

    pub fn write(&self, dir: &Path) -> Result<PathBuf> {
        let path = dir.join("manifest.json");
        fs::write(&path, serde_json::to_string_pretty(self)?)?;
        Ok(path)
    }
}

/// Writes `success_curve.csv`, `trials.csv` and `manifest.json` to `dir`.
pub fn write_monte_carlo(cfg: &ExperimentConfig, outcome: &MonteCarloOutcome, dir: &Path) -> Result<Vec<PathBuf>> {
    fs::create_dir_all(dir)?;
    let curve = dir.join("success_curve.csv");
    fs::write(&curve, outcome.curve.to_csv())?;
    let trials = dir.join("trials.csv");
    fs::write(&trials, outcome.trials_csv())?;
    let mut manifest = Manifest::new("montecarlo", cfg);
    manifest.outputs = vec!["success_curve.csv".into(), "trials.csv".into()];
    manifest.notes = serde_json::json!({
        "mean_runtime_s": outcome.mean_runtime_s,
        "failed_trials": outcome.errors().count(),
        "warnings": cfg.warnings(),
    });
    let m = manifest.write(dir)?;
    Ok(vec![curve, trials, m])
}

/// Writes one CSV per panel plus `manifest.json` to `dir`.
pub fn write_spectrum_demo(cfg: &ExperimentConfig, panels: &[DemoSpectrum], dir: &Path) -> Result<Vec<PathBuf>> {
    fs::create_dir_all(dir)?;
    let mut manifest = Manifest::new("spectrum-demo", cfg);
    let mut paths = Vec::new();
    for panel in panels {
        let path = dir.join(panel.file_name());
        fs::write(&path, panel.estimate.to_csv())?;
        manifest.outputs.push(panel.file_name());
        paths.push(path);
    }
    manifest.notes = serde_json::json!({ "warnings": cfg.warnings() });
    paths.push(manifest.write(dir)?);
    Ok(paths)
}
