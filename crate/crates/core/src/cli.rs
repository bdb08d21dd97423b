//! Command-line driver. Exit codes: 0 success, 1 runtime failure, 2 usage
//! error (bad flags, invalid values, unreadable settings file).

use std::ffi::OsString;
use std::io::Write;
use std::path::PathBuf;

use clap::{Args, Parser, Subcommand};
use rayon::prelude::*;

use crate::bcd::multistart_fit;
use crate::error::Error;
use crate::io::{
    format_float, read_dataset, read_result, read_settings, write_bode_csv, write_dataset, write_result, write_table,
    BodeRow, ResultDoc, Settings, TruthMetrics,
};
use crate::metrics::{compare_models, default_grid, frequency_response, mode_fit, model_tfs, system_tfs};
use crate::model::{FitConfig, FitResult, ModeSequence, SampledDataset};
use crate::rng::mix_seed;
use crate::simulator::{benchmark_system, generate_benchmark_dataset, measured_snr_db, BenchmarkSpec, NoiseLevel};

#[derive(Parser, Debug)]
#[command(name = "ctlss", version, about = "Continuous-time switched state-space identification")]
pub struct Cli {
    /// Settings file (`key = value` lines); flags override its values.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Subcommand, Debug)]
pub enum Command {
    /// Simulate the two-mode benchmark and write a dataset with ground truth.
    Generate(GenerateArgs),
    /// Identify a switched model from a dataset.
    Fit(FitArgs),
    /// Transfer functions, errors and Bode data of a fitted model.
    Evaluate(EvaluateArgs),
    /// Mode fit over a grid of transition-loss weights and noise levels.
    SweepTau(SweepArgs),
    /// Repeated fits on fresh benchmark realizations.
    MonteCarlo(MonteCarloArgs),
}

#[derive(Args, Debug, Default)]
pub struct DataFlags {
    /// Number of samples.
    #[arg(long)]
    pub n: Option<usize>,
    /// Sampling time in seconds.
    #[arg(long)]
    pub dt: Option<f64>,
    /// Markov switch probability.
    #[arg(long)]
    pub pi: Option<f64>,
    /// Output noise standard deviation.
    #[arg(long, conflicts_with = "snr_db")]
    pub sigma_eta: Option<f64>,
    /// Target signal-to-noise ratio in dB (replaces --sigma-eta).
    #[arg(long)]
    pub snr_db: Option<f64>,
    #[arg(long)]
    pub seed: Option<u64>,
}

#[derive(Args, Debug)]
pub struct GenerateArgs {
    #[command(flatten)]
    pub data: DataFlags,
    /// RK4 sub-steps per sampling interval.
    #[arg(long)]
    pub substeps: Option<usize>,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Args, Debug, Default)]
pub struct FitFlags {
    /// Number of modes.
    #[arg(long)]
    pub k: Option<usize>,
    /// State dimension.
    #[arg(long)]
    pub nx: Option<usize>,
    #[arg(long)]
    pub alpha: Option<f64>,
    #[arg(long)]
    pub tau: Option<f64>,
    #[arg(long)]
    pub restarts: Option<usize>,
    #[arg(long)]
    pub n_max: Option<usize>,
    #[arg(long)]
    pub eps: Option<f64>,
    #[arg(long)]
    pub sigma_x: Option<f64>,
    /// Use `+τ log π` for the switch cost instead of `−τ log π`.
    #[arg(long, alias = "literal-eq12")]
    pub literal_sign: bool,
}

#[derive(Args, Debug)]
pub struct FitArgs {
    #[arg(long)]
    pub data: PathBuf,
    #[command(flatten)]
    pub fit: FitFlags,
    /// Markov switch probability of the transition loss.
    #[arg(long)]
    pub pi: Option<f64>,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Args, Debug)]
pub struct EvaluateArgs {
    /// Result document written by `fit`.
    #[arg(long)]
    pub result: PathBuf,
    /// Compare against the benchmark system.
    #[arg(long)]
    pub benchmark_truth: bool,
    /// Dataset with true modes, for the mode fit.
    #[arg(long)]
    pub data: Option<PathBuf>,
    /// Bode CSV output.
    #[arg(long)]
    pub bode: Option<PathBuf>,
}

#[derive(Args, Debug)]
pub struct SweepArgs {
    /// Comma-separated τ values [default: 1e-9,1e-8,...,1e-1].
    #[arg(long, value_delimiter = ',')]
    pub taus: Option<Vec<f64>>,
    /// Comma-separated noise standard deviations.
    #[arg(long, value_delimiter = ',', default_value = "0.02,0.03,0.05,0.08")]
    pub sigmas: Vec<f64>,
    #[arg(long)]
    pub n: Option<usize>,
    #[arg(long)]
    pub dt: Option<f64>,
    #[arg(long)]
    pub pi: Option<f64>,
    #[arg(long)]
    pub seed: Option<u64>,
    #[command(flatten)]
    pub fit: FitFlags,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Args, Debug)]
pub struct MonteCarloArgs {
    #[arg(long, default_value_t = 50)]
    pub runs: usize,
    /// Average signal-to-noise ratio of each run in dB.
    #[arg(long, default_value_t = 30.0)]
    pub snr_db: f64,
    #[arg(long)]
    pub n: Option<usize>,
    #[arg(long)]
    pub dt: Option<f64>,
    #[arg(long)]
    pub pi: Option<f64>,
    #[arg(long)]
    pub seed: Option<u64>,
    #[command(flatten)]
    pub fit: FitFlags,
    #[arg(long)]
    pub out: PathBuf,
}

/// Default τ grid of the sweep.
pub fn default_taus() -> Vec<f64> {
    (-9..=-1).map(|e| 10f64.powi(e)).collect()
}

/// Monte-Carlo default transition-loss weight.
pub const MONTE_CARLO_TAU: f64 = 3e-7;

#[derive(Debug)]
enum Failure {
    Usage(String),
    Runtime(Error),
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        match e {
            Error::InvalidParameter { .. } | Error::Config { .. } => Failure::Usage(e.to_string()),
            e => Failure::Runtime(e),
        }
    }
}

type CliResult<T> = std::result::Result<T, Failure>;

/// Parse arguments, run the command and return the process exit code.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { 2 } else { 0 };
        }
    };
    match execute(&cli) {
        Ok(()) => 0,
        Err(Failure::Usage(msg)) => {
            eprintln!("error: {msg}\n\nFor more information, try '--help'.");
            2
        }
        Err(Failure::Runtime(e)) => {
            eprintln!("error: {e}");
            1
        }
    }
}

fn execute(cli: &Cli) -> CliResult<()> {
    let settings = match &cli.config {
        Some(p) => read_settings(p).map_err(|e| match e {
            Error::Io(io) => Failure::Usage(format!("{}: {io}", p.display())),
            e => Failure::Usage(e.to_string()),
        })?,
        None => Settings::default(),
    };
    match &cli.command {
        Command::Generate(a) => generate(a, settings),
        Command::Fit(a) => fit(a, settings),
        Command::Evaluate(a) => evaluate(a),
        Command::SweepTau(a) => sweep(a, settings),
        Command::MonteCarlo(a) => monte_carlo(a, settings),
    }
}

fn apply_data(s: &mut Settings, d: &DataFlags) {
    s.n = d.n.unwrap_or(s.n);
    s.dt = d.dt.unwrap_or(s.dt);
    s.pi = d.pi.unwrap_or(s.pi);
    s.seed = d.seed.unwrap_or(s.seed);
    if let Some(v) = d.sigma_eta {
        s.sigma_eta = v;
        s.snr_db = None;
    }
    if d.snr_db.is_some() {
        s.snr_db = d.snr_db;
    }
}

fn apply_fit(s: &mut Settings, f: &FitFlags) {
    s.k = f.k.unwrap_or(s.k);
    s.nx = f.nx.unwrap_or(s.nx);
    s.alpha = f.alpha.unwrap_or(s.alpha);
    s.tau = f.tau.unwrap_or(s.tau);
    s.restarts = f.restarts.unwrap_or(s.restarts);
    s.n_max = f.n_max.unwrap_or(s.n_max);
    s.eps = f.eps.unwrap_or(s.eps);
    s.sigma_x = f.sigma_x.unwrap_or(s.sigma_x);
    s.literal_sign |= f.literal_sign;
}

fn check_data(s: &Settings) -> CliResult<()> {
    let bad = |m: String| Err(Failure::Usage(m));
    if s.n < 2 {
        return bad(format!("--n must be at least 2, got {}", s.n));
    }
    if !(s.dt > 0.0 && s.dt.is_finite()) {
        return bad(format!("--dt must be positive, got {}", s.dt));
    }
    if !(0.0..=1.0).contains(&s.pi) {
        return bad(format!("--pi must lie in [0, 1], got {}", s.pi));
    }
    if !(s.sigma_eta >= 0.0 && s.sigma_eta.is_finite()) {
        return bad(format!("--sigma-eta must be non-negative, got {}", s.sigma_eta));
    }
    if s.snr_db.is_some_and(|v| !v.is_finite()) {
        return bad("--snr-db must be finite".into());
    }
    if s.substeps == 0 {
        return bad("--substeps must be at least 1".into());
    }
    Ok(())
}

fn generate(a: &GenerateArgs, mut s: Settings) -> CliResult<()> {
    apply_data(&mut s, &a.data);
    s.substeps = a.substeps.unwrap_or(s.substeps);
    check_data(&s)?;
    let ds = generate_benchmark_dataset(&s.benchmark_spec())?;
    write_dataset(&ds, &a.out)?;
    let snr = measured_snr_db(ds.noise_free.as_ref().expect("generator attaches truth"), &ds.y)[0];
    println!(
        "wrote {} samples to {} (switches {}, SNR {:.2} dB)",
        ds.len(),
        a.out.display(),
        ds.true_modes.as_ref().map_or(0, ModeSequence::switches),
        snr
    );
    Ok(())
}

fn truth_metrics(fit: &FitResult, ds: &SampledDataset) -> CliResult<TruthMetrics> {
    let Some(truth) = &ds.true_modes else {
        return Ok(TruthMetrics::default());
    };
    let matched = mode_fit(&fit.modes, truth, true)?;
    let literal = mode_fit(&fit.modes, truth, false)?;
    Ok(TruthMetrics {
        mode_fit: Some(matched.percent),
        mode_fit_literal: Some(literal.percent),
        permutation: Some(matched.permutation),
    })
}

fn fit(a: &FitArgs, mut s: Settings) -> CliResult<()> {
    apply_fit(&mut s, &a.fit);
    s.pi = a.pi.unwrap_or(s.pi);
    s.seed = a.seed.unwrap_or(s.seed);
    let config = s.fit_config()?;
    let ds = read_dataset(&a.data)?;
    let ms = multistart_fit(&ds, &config)?;
    let truth = truth_metrics(&ms.best, &ds)?;
    let doc = ResultDoc::new(&ms.best, &config, truth.clone());
    write_result(&doc, &a.out)?;
    let mf = truth.mode_fit.map_or("n/a".to_string(), |v| format!("{v:.2}%"));
    println!(
        "BFR {:.2}% | mode fit {} | iterations {} | J {:.6e} | restart {}/{}",
        ms.best.bfr,
        mf,
        ms.best.iterations,
        ms.best.cost.total,
        ms.best_index + 1,
        config.restarts
    );
    Ok(())
}

fn evaluate(a: &EvaluateArgs) -> CliResult<()> {
    let doc = read_result(&a.result)?;
    let fit = doc.fit_result()?;
    let est_tfs = model_tfs(&fit.model)?;
    let mut out = std::io::stdout().lock();
    let mut say = |line: String| {
        let _ = writeln!(out, "{line}");
    };
    match doc.metrics.bfr {
        Some(v) => say(format!("BFR (open loop) {v:.2}%")),
        None => say("BFR (open loop) undefined: simulation diverged".into()),
    }
    let mut permutation: Vec<usize> = (1..=fit.model.num_modes()).collect();
    if let Some(path) = &a.data {
        let ds = read_dataset(path)?;
        let truth = ds
            .true_modes
            .as_ref()
            .ok_or_else(|| Failure::Usage(format!("{} has no `s` column", path.display())))?;
        let m = mode_fit(&fit.modes, truth, true)?;
        let lit = mode_fit(&fit.modes, truth, false)?;
        say(format!(
            "mode fit {:.2}% matched (permutation {:?}), {:.2}% literal",
            m.percent, m.permutation, lit.percent
        ));
        permutation = m.permutation;
    } else if let Some(p) = &doc.metrics.truth.permutation {
        permutation = p.clone();
    }
    let grid = default_grid();
    let mut rows = Vec::new();
    for (i, tf) in est_tfs.iter().enumerate() {
        say(format!("estimated mode {}: {tf}", i + 1));
        rows.extend(frequency_response(tf, &grid)?.into_iter().map(|point| BodeRow {
            point,
            mode: i + 1,
            which: "estimated",
        }));
    }
    if a.benchmark_truth {
        let truth = benchmark_system();
        if truth.num_modes() != fit.model.num_modes() {
            return Err(Failure::Usage(format!(
                "the benchmark has {} modes, the result {}",
                truth.num_modes(),
                fit.model.num_modes()
            )));
        }
        say(format!("permutation (estimated label -> true label) {permutation:?}"));
        for cmp in compare_models(&fit.model, &truth, &permutation)? {
            say(format!("true mode {}: {}", cmp.true_label, cmp.truth));
            say(format!(
                "  estimated label {}; relative coefficient errors {}; max {:.3}%",
                cmp.estimated_label,
                cmp.errors.iter().map(|e| format!("{:.3}%", 100.0 * e)).collect::<Vec<_>>().join(" "),
                100.0 * cmp.max_error()
            ));
        }
        for (i, tf) in system_tfs(&truth)?.iter().enumerate() {
            let dc = frequency_response(tf, &[1e-4])?[0].mag_db;
            say(format!("true mode {} DC gain {dc:.4} dB", i + 1));
            // Bode rows of the truth carry the estimated label they map to
            let est_label = permutation.iter().position(|&p| p == i + 1).map_or(i + 1, |j| j + 1);
            rows.extend(frequency_response(tf, &grid)?.into_iter().map(|point| BodeRow {
                point,
                mode: est_label,
                which: "true",
            }));
        }
    }
    if let Some(path) = &a.bode {
        write_bode_csv(&rows, path)?;
        say(format!("wrote {} Bode rows to {}", rows.len(), path.display()));
    }
    Ok(())
}

fn check_fit(s: &Settings) -> CliResult<FitConfig> {
    s.fit_config().map_err(Failure::from)
}

/// One cell of the τ sweep.
#[derive(Clone, Debug, PartialEq)]
pub struct SweepCell {
    pub tau: f64,
    pub sigma_eta: f64,
    pub snr_db: f64,
    pub mode_fit: f64,
    pub switches: usize,
    /// Largest label frequency of the true sequence.
    pub majority: f64,
}

/// Fit every (τ, σ) pair on the same input and switching realization.
pub fn sweep_cells(base: &Settings, taus: &[f64], sigmas: &[f64]) -> crate::Result<Vec<SweepCell>> {
    let cells: Vec<(usize, usize)> = (0..sigmas.len())
        .flat_map(|j| (0..taus.len()).map(move |i| (j, i)))
        .collect();
    cells
        .par_iter()
        .map(|&(j, i)| {
            let mut s = base.clone();
            s.tau = taus[i];
            s.sigma_eta = sigmas[j];
            s.snr_db = None;
            let ds = generate_benchmark_dataset(&s.benchmark_spec())?;
            let ms = multistart_fit(&ds, &s.fit_config()?)?;
            let truth = ds.true_modes.as_ref().expect("generator attaches truth");
            Ok(SweepCell {
                tau: taus[i],
                sigma_eta: sigmas[j],
                snr_db: measured_snr_db(ds.noise_free.as_ref().expect("generator attaches truth"), &ds.y)[0],
                mode_fit: mode_fit(&ms.best.modes, truth, true)?.percent,
                switches: ms.best.modes.switches(),
                majority: truth.label_frequencies().into_iter().fold(0.0, f64::max) * 100.0,
            })
        })
        .collect()
}

fn sweep(a: &SweepArgs, mut s: Settings) -> CliResult<()> {
    apply_fit(&mut s, &a.fit);
    s.n = a.n.unwrap_or(s.n);
    s.dt = a.dt.unwrap_or(s.dt);
    s.pi = a.pi.unwrap_or(s.pi);
    s.seed = a.seed.unwrap_or(s.seed);
    let taus = a.taus.clone().unwrap_or_else(default_taus);
    if taus.is_empty() || a.sigmas.is_empty() {
        return Err(Failure::Usage("--taus and --sigmas need at least one value".into()));
    }
    if let Some(t) = taus.iter().find(|t| !(**t >= 0.0 && t.is_finite())) {
        return Err(Failure::Usage(format!("--taus: {t} is not a non-negative number")));
    }
    if let Some(v) = a.sigmas.iter().find(|v| !(**v >= 0.0 && v.is_finite())) {
        return Err(Failure::Usage(format!("--sigmas: {v} is not a non-negative number")));
    }
    check_data(&s)?;
    check_fit(&s)?;
    let cells = sweep_cells(&s, &taus, &a.sigmas)?;
    write_table(
        &a.out,
        &["tau", "sigma_eta", "snr_db", "mode_fit", "switches", "majority"],
        cells.iter().map(|c| {
            vec![
                format_float(c.tau),
                format_float(c.sigma_eta),
                format_float(c.snr_db),
                format_float(c.mode_fit),
                c.switches.to_string(),
                format_float(c.majority),
            ]
        }),
    )?;
    for sigma in &a.sigmas {
        let best = cells
            .iter()
            .filter(|c| c.sigma_eta == *sigma)
            .max_by(|x, y| x.mode_fit.total_cmp(&y.mode_fit).then(y.tau.total_cmp(&x.tau)))
            .expect("non-empty grid");
        println!("sigma {sigma}: best mode fit {:.2}% at tau {:e}", best.mode_fit, best.tau);
    }
    println!("wrote {} cells to {}", cells.len(), a.out.display());
    Ok(())
}

/// Outcome of one Monte-Carlo run.
#[derive(Clone, Debug, PartialEq)]
pub struct MonteCarloRun {
    pub run: usize,
    pub seed: u64,
    pub snr_db: f64,
    pub bfr: f64,
    pub mode_fit: f64,
    pub mode_fit_literal: f64,
}

/// Seed of Monte-Carlo run `r`.
pub fn monte_carlo_seed(master: u64, run: usize) -> u64 {
    mix_seed(master ^ 0x6d63_7275_6e73, run as u64)
}

/// Fit `runs` fresh benchmark realizations; results come back in run order.
pub fn monte_carlo_runs(base: &Settings, runs: usize, snr_db: f64) -> crate::Result<Vec<MonteCarloRun>> {
    let config = base.fit_config()?;
    (0..runs)
        .into_par_iter()
        .map(|r| {
            let seed = monte_carlo_seed(base.seed, r);
            let spec = BenchmarkSpec {
                noise: NoiseLevel::TargetSnrDb(snr_db),
                seed,
                ..base.benchmark_spec()
            };
            let ds = generate_benchmark_dataset(&spec)?;
            let ms = multistart_fit(&ds, &FitConfig { seed, ..config.clone() })?;
            let truth = ds.true_modes.as_ref().expect("generator attaches truth");
            Ok(MonteCarloRun {
                run: r + 1,
                seed,
                snr_db: measured_snr_db(ds.noise_free.as_ref().expect("generator attaches truth"), &ds.y)[0],
                bfr: ms.best.bfr,
                mode_fit: mode_fit(&ms.best.modes, truth, true)?.percent,
                mode_fit_literal: mode_fit(&ms.best.modes, truth, false)?.percent,
            })
        })
        .collect()
}

/// Minimum, median and maximum (median of an even count averages the two
/// middle values).
pub fn summary(values: &[f64]) -> (f64, f64, f64) {
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    let n = v.len();
    let median = if n % 2 == 1 { v[n / 2] } else { 0.5 * (v[n / 2 - 1] + v[n / 2]) };
    (v[0], median, v[n - 1])
}

fn monte_carlo(a: &MonteCarloArgs, mut s: Settings) -> CliResult<()> {
    if a.fit.tau.is_none() {
        s.tau = MONTE_CARLO_TAU;
    }
    apply_fit(&mut s, &a.fit);
    s.n = a.n.unwrap_or(s.n);
    s.dt = a.dt.unwrap_or(s.dt);
    s.pi = a.pi.unwrap_or(s.pi);
    s.seed = a.seed.unwrap_or(s.seed);
    if a.runs == 0 {
        return Err(Failure::Usage("--runs must be at least 1".into()));
    }
    if !a.snr_db.is_finite() {
        return Err(Failure::Usage("--snr-db must be finite".into()));
    }
    check_data(&s)?;
    check_fit(&s)?;
    let runs = monte_carlo_runs(&s, a.runs, a.snr_db)?;
    write_table(
        &a.out,
        &["run", "seed", "snr_db", "bfr", "mode_fit", "mode_fit_literal"],
        runs.iter().map(|r| {
            vec![
                r.run.to_string(),
                r.seed.to_string(),
                format_float(r.snr_db),
                format_float(r.bfr),
                format_float(r.mode_fit),
                format_float(r.mode_fit_literal),
            ]
        }),
    )?;
    let bfr: Vec<f64> = runs.iter().map(|r| r.bfr).collect();
    let mf: Vec<f64> = runs.iter().map(|r| r.mode_fit).collect();
    let (lo, med, hi) = summary(&bfr);
    println!("BFR       min {lo:.2}  median {med:.2}  max {hi:.2}");
    let (lo, med, hi) = summary(&mf);
    println!("mode fit  min {lo:.2}  median {med:.2}  max {hi:.2}");
    println!("wrote {} runs to {}", runs.len(), a.out.display());
    Ok(())
}

