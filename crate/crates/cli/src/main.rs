use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Serialize;

use lse_core::baselines::{music_spectrum, nyquist_samples, random_sampling_estimate, MusicConfig, RandomWindowMode};
use lse_core::experiments::{
    run_monte_carlo, run_spectrum_demo, version_string, write_monte_carlo, write_spectrum_demo, ExperimentConfig,
    Method, WindowSize,
};
use lse_core::rip::{default_k_range, random_partial_fourier, sample_subgram_eigs};
use lse_core::sampling::{build_tasks, max_valid_window, CoprimeScheme, WindowRule};
use lse_core::sensing::{build_phi, normalize_columns};
use lse_core::signal::{noise_variance_for_snr, synthesize, LineSpectrum, SampleRecord};
use lse_core::vb::{extract_frequencies, Hyperparams, RunOptions, SpectrumEstimate, VbSolver};

#[derive(Parser)]
#[command(name = "lse", version = env!("CARGO_PKG_VERSION"), about = "Line spectral estimation from coprime samples")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Show the index stream and the largest valid window for a scheme.
    Plan(PlanArgs),
    /// Sample a line spectrum on the coprime stream.
    Synthesize(SynthArgs),
    /// Run the multitask estimator on a sample record.
    Estimate(EstimateArgs),
    /// Run a reference estimator on a known spectrum.
    Baseline(BaselineArgs),
    /// Sub-Gram eigenvalue statistics of a sensing matrix.
    Rip(RipArgs),
    /// Success rates over seeded trials.
    Montecarlo(ExperimentArgs),
    /// Grid spectra for a list of task counts.
    SpectrumDemo(ExperimentArgs),
}

fn parse_scheme(s: &str) -> Result<CoprimeScheme, String> {
    let ratios: Vec<u64> = s
        .split(',')
        .map(|x| x.trim().parse::<u64>().map_err(|e| format!("'{x}': {e}")))
        .collect::<Result<_, _>>()?;
    CoprimeScheme::from_ratios(ratios).map_err(|e| e.to_string())
}

fn parse_m(s: &str) -> Result<WindowSize, String> {
    if s == "auto" {
        return Ok(WindowSize::AUTO);
    }
    s.parse().map(WindowSize::Fixed).map_err(|_| format!("expected a number or 'auto', got '{s}'"))
}

#[derive(Clone, Copy, ValueEnum)]
enum Rule {
    WithinGrid,
    DistinctModN,
}

impl From<Rule> for WindowRule {
    fn from(r: Rule) -> Self {
        match r {
            Rule::WithinGrid => WindowRule::WithinGrid,
            Rule::DistinctModN => WindowRule::DistinctModN,
        }
    }
}

#[derive(Args)]
struct PlanArgs {
    #[arg(long, value_parser = parse_scheme, default_value = "9,10,11")]
    scheme: CoprimeScheme,
    #[arg(long, default_value_t = 100)]
    n: usize,
    #[arg(long, default_value_t = 30)]
    l: usize,
    #[arg(long, value_enum, default_value = "within-grid")]
    rule: Rule,
    /// How many leading indices to list.
    #[arg(long, default_value_t = 20)]
    count: usize,
}

/// A spectrum from a JSON file or from inline lists.
#[derive(Args)]
struct SpectrumArgs {
    /// JSON file with `freqs` and `amps` ([re, im] pairs).
    #[arg(long, conflicts_with_all = ["freqs", "moduli", "phases"])]
    spectrum: Option<PathBuf>,
    #[arg(long, value_delimiter = ',')]
    freqs: Vec<f64>,
    /// Amplitude moduli; defaults to 1 for every line.
    #[arg(long, value_delimiter = ',')]
    moduli: Vec<f64>,
    /// Phases in radians; default 0.
    #[arg(long, value_delimiter = ',')]
    phases: Vec<f64>,
}

impl SpectrumArgs {
    fn load(&self) -> Result<LineSpectrum> {
        if let Some(path) = &self.spectrum {
            return Ok(serde_json::from_str(&read(path)?)?);
        }
        if self.freqs.is_empty() {
            bail!("give --spectrum <file> or --freqs");
        }
        let k = self.freqs.len();
        let moduli = if self.moduli.is_empty() { vec![1.0; k] } else { self.moduli.clone() };
        let phases = if self.phases.is_empty() { vec![0.0; k] } else { self.phases.clone() };
        Ok(LineSpectrum::from_polar(self.freqs.clone(), &moduli, &phases)?)
    }
}

#[derive(Args)]
struct NoiseArgs {
    /// SNR in dB against the total line power.
    #[arg(long, conflicts_with = "noise_variance")]
    snr_db: Option<f64>,
    #[arg(long)]
    noise_variance: Option<f64>,
    #[arg(long, default_value_t = 0)]
    seed: u64,
}

impl NoiseArgs {
    fn variance(&self, spec: &LineSpectrum) -> f64 {
        match (self.snr_db, self.noise_variance) {
            (Some(snr), _) => noise_variance_for_snr(spec, snr),
            (None, Some(v)) => v,
            (None, None) => 0.0,
        }
    }
}

#[derive(Args)]
struct SynthArgs {
    #[arg(long, value_parser = parse_scheme, default_value = "9,10,11")]
    scheme: CoprimeScheme,
    /// Number of samples from the start of the stream.
    #[arg(long)]
    count: usize,
    #[command(flatten)]
    spectrum: SpectrumArgs,
    #[command(flatten)]
    noise: NoiseArgs,
    /// Output file; stdout when omitted.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct SolverArgs {
    #[arg(long, default_value_t = 100)]
    n: usize,
    /// Window length, or `auto`.
    #[arg(long, value_parser = parse_m, default_value = "auto")]
    m: WindowSize,
    #[arg(long, default_value_t = 30)]
    l: usize,
    /// Number of lines to report.
    #[arg(long, default_value_t = 3)]
    k: usize,
    #[arg(long, default_value_t = 200)]
    max_iter: usize,
    #[arg(long, default_value_t = 1e-6)]
    tol: f64,
    #[arg(long)]
    out_dir: Option<PathBuf>,
}

impl SolverArgs {
    fn options(&self) -> RunOptions {
        RunOptions {
            max_iter: self.max_iter,
            tol: self.tol,
        }
    }
}

#[derive(Args)]
struct EstimateArgs {
    /// Sample record JSON, as written by `synthesize`.
    #[arg(long)]
    record: PathBuf,
    /// Scheme used to size `--m auto`.
    #[arg(long, value_parser = parse_scheme)]
    scheme: Option<CoprimeScheme>,
    #[command(flatten)]
    solver: SolverArgs,
}

#[derive(Clone, Copy, ValueEnum)]
enum BaselineMethod {
    Music,
    RandomCs,
}

#[derive(Args)]
struct BaselineArgs {
    #[arg(long, value_enum)]
    method: BaselineMethod,
    #[command(flatten)]
    spectrum: SpectrumArgs,
    #[command(flatten)]
    noise: NoiseArgs,
    #[command(flatten)]
    solver: SolverArgs,
    /// Scheme whose window size `--m auto` refers to.
    #[arg(long, value_parser = parse_scheme, default_value = "9,10,11")]
    scheme: CoprimeScheme,
    #[arg(long)]
    subarray: Option<usize>,
    #[arg(long, value_enum, default_value = "independent")]
    random_mode: RandomMode,
}

#[derive(Clone, Copy, ValueEnum)]
enum RandomMode {
    Independent,
    Sliding,
}

#[derive(Args)]
struct RipArgs {
    #[arg(long, value_parser = parse_scheme, default_value = "9,10,11")]
    scheme: CoprimeScheme,
    #[arg(long, default_value_t = 100)]
    n: usize,
    #[arg(long, default_value_t = 27)]
    m: usize,
    /// Use a random partial Fourier matrix instead of the first window.
    #[arg(long)]
    random: bool,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Clone, Copy, ValueEnum)]
enum Preset {
    ThreeLines,
    SnrSweep,
}

#[derive(Args)]
struct ExperimentArgs {
    /// JSON experiment configuration.
    #[arg(long, conflicts_with = "preset")]
    config: Option<PathBuf>,
    #[arg(long, value_enum)]
    preset: Option<Preset>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    trials: Option<usize>,
    #[arg(long, value_delimiter = ',')]
    snr_db: Vec<f64>,
    #[arg(long, value_delimiter = ',')]
    methods: Vec<String>,
    #[arg(long)]
    l: Option<usize>,
    #[arg(long, value_delimiter = ',')]
    l_values: Vec<usize>,
    #[arg(long)]
    out_dir: Option<PathBuf>,
}

impl ExperimentArgs {
    fn config(&self, fallback: Preset) -> Result<ExperimentConfig> {
        let mut cfg = match (&self.config, self.preset.unwrap_or(fallback)) {
            (Some(path), _) => serde_json::from_str(&read(path)?).with_context(|| format!("parsing {}", path.display()))?,
            (None, Preset::ThreeLines) => ExperimentConfig::three_lines(),
            (None, Preset::SnrSweep) => ExperimentConfig::snr_sweep(),
        };
        if let Some(s) = self.seed {
            cfg.seed = s;
        }
        if let Some(t) = self.trials {
            cfg.trials = t;
        }
        if !self.snr_db.is_empty() {
            cfg.snr_db = self.snr_db.clone();
        }
        if !self.methods.is_empty() {
            cfg.methods = self.methods.iter().map(|m| Method::parse(m)).collect::<Result<_, _>>()?;
        }
        if let Some(l) = self.l {
            cfg.l = l;
        }
        if !self.l_values.is_empty() {
            cfg.l_values = self.l_values.clone();
        }
        if let Some(dir) = &self.out_dir {
            cfg.output_dir = dir.clone();
        }
        cfg.validate()?;
        for w in cfg.warnings() {
            eprintln!("warning: {w}");
        }
        Ok(cfg)
    }
}

fn read(path: &Path) -> Result<String> {
    fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))
}

fn emit(out: Option<&Path>, text: &str) -> Result<()> {
    match out {
        Some(path) => fs::write(path, text).with_context(|| format!("writing {}", path.display())),
        None => {
            print!("{text}");
            Ok(())
        }
    }
}

#[derive(Serialize)]
struct EstimateSummary<'a> {
    version: String,
    command: &'a str,
    frequencies: Vec<f64>,
    m: usize,
    l: usize,
    n: usize,
    estimate: &'a SpectrumEstimate,
}

/// Writes `spectrum.csv` and `estimate.json` to `dir`, or the JSON to stdout.
fn write_estimate(args: &SolverArgs, command: &str, m: usize, est: &SpectrumEstimate) -> Result<()> {
    let summary = EstimateSummary {
        version: version_string(),
        command,
        frequencies: extract_frequencies(est, args.k)?,
        m,
        l: args.l,
        n: args.n,
        estimate: est,
    };
    let json = serde_json::to_string_pretty(&summary)?;
    match &args.out_dir {
        Some(dir) => {
            fs::create_dir_all(dir)?;
            fs::write(dir.join("spectrum.csv"), est.to_csv())?;
            fs::write(dir.join("estimate.json"), json)?;
        }
        None => println!("{json}"),
    }
    Ok(())
}

fn resolve_m(m: WindowSize, scheme: Option<&CoprimeScheme>, n: usize, l: usize) -> Result<usize> {
    match (m, scheme) {
        (WindowSize::Fixed(m), _) => Ok(m),
        (WindowSize::Auto(_), Some(s)) => Ok(max_valid_window(s, n, l, WindowRule::WithinGrid)?),
        (WindowSize::Auto(_), None) => bail!("--m auto needs --scheme"),
    }
}

fn plan(a: PlanArgs) -> Result<()> {
    let m = max_valid_window(&a.scheme, a.n, a.l, a.rule.into())?;
    let out = serde_json::json!({
        "scheme": a.scheme,
        "first_indices": a.scheme.first_indices(a.count),
        "block_span": a.scheme.block_span(),
        "block_len": a.scheme.block_len(),
        "n": a.n,
        "l": a.l,
        "max_window": m,
        "samples_needed": a.l + m - 1,
        "warning": a.scheme.warning(),
    });
    println!("{}", serde_json::to_string_pretty(&out)?);
    Ok(())
}

fn synthesize_cmd(a: SynthArgs) -> Result<()> {
    let spec = a.spectrum.load()?;
    let record = synthesize(&spec, &a.scheme.first_indices(a.count), a.noise.variance(&spec), a.noise.seed)?;
    emit(a.out.as_deref(), &serde_json::to_string_pretty(&record)?)
}

fn estimate(a: EstimateArgs) -> Result<()> {
    let record: SampleRecord = serde_json::from_str(&read(&a.record)?)?;
    let s = &a.solver;
    let m = resolve_m(s.m, a.scheme.as_ref(), s.n, s.l)?;
    let tasks = build_tasks(&record, m, s.l, s.n, 1)?;
    let (_, est) = VbSolver::new(&tasks, Hyperparams::default())?.solve(s.options())?;
    write_estimate(s, "estimate", m, &est)
}

fn baseline(a: BaselineArgs) -> Result<()> {
    let spec = a.spectrum.load()?;
    let noise = a.noise.variance(&spec);
    let s = &a.solver;
    let m = resolve_m(s.m, Some(&a.scheme), s.n, s.l)?;
    let est = match a.method {
        BaselineMethod::Music => {
            let samples = nyquist_samples(&spec, s.l + m - 1, noise, a.noise.seed);
            let cfg = MusicConfig {
                subarray_length: a.subarray,
                grid_n: s.n,
                k: s.k,
            };
            music_spectrum(&samples, &cfg)?
        }
        BaselineMethod::RandomCs => {
            let mode = match a.random_mode {
                RandomMode::Independent => RandomWindowMode::Independent,
                RandomMode::Sliding => RandomWindowMode::Sliding,
            };
            random_sampling_estimate(&spec, m, s.l, s.n, noise, Hyperparams::default(), s.options(), mode, a.noise.seed)?
        }
    };
    let name = match a.method {
        BaselineMethod::Music => "baseline-music",
        BaselineMethod::RandomCs => "baseline-random-cs",
    };
    write_estimate(s, name, m, &est)
}

fn rip(a: RipArgs) -> Result<()> {
    let matrix = if a.random {
        random_partial_fourier(a.m, a.n, a.seed)?
    } else {
        let idx = a.scheme.first_indices(a.m);
        let offsets: Vec<u64> = idx.iter().map(|t| t - idx[0]).collect();
        build_phi(&offsets, a.n)?
    };
    let report = sample_subgram_eigs(&normalize_columns(&matrix)?, &default_k_range(), a.seed)?;
    emit(a.out.as_deref(), &report.to_csv())
}

fn montecarlo(a: ExperimentArgs) -> Result<()> {
    let cfg = a.config(Preset::SnrSweep)?;
    let outcome = run_monte_carlo(&cfg)?;
    for t in outcome.errors() {
        eprintln!(
            "trial {} ({}, {} dB) failed: {}",
            t.trial,
            t.method.name(),
            t.snr_db,
            t.error.as_deref().unwrap_or("")
        );
    }
    write_monte_carlo(&cfg, &outcome, &cfg.output_dir)?;
    print!("{}", outcome.curve.to_csv());
    Ok(())
}

fn spectrum_demo(a: ExperimentArgs) -> Result<()> {
    let cfg = a.config(Preset::ThreeLines)?;
    let panels = run_spectrum_demo(&cfg)?;
    let paths = write_spectrum_demo(&cfg, &panels, &cfg.output_dir)?;
    for p in paths {
        println!("{}", p.display());
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Plan(a) => plan(a),
        Command::Synthesize(a) => synthesize_cmd(a),
        Command::Estimate(a) => estimate(a),
        Command::Baseline(a) => baseline(a),
        Command::Rip(a) => rip(a),
        Command::Montecarlo(a) => montecarlo(a),
        Command::SpectrumDemo(a) => spectrum_demo(a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}
