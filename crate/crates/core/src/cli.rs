//! Command-line front end: `simulate`, `fit`, `test-sa` and `bench`.

use crate::calibration::{fit_calibration, Backend, CalibrationFit, CalibrationSpec};
use crate::data::Dataset;
use crate::error::{Error, Result};
use crate::marginal::{Bandwidth, MarginalFit};
use crate::rng::substream;
use crate::sa_tests::{fit_margins, run_sa_check, training_pairs, SaConfig, SaReport};
use crate::sim::{gen_scenario, run_bench, write_bench_csv, BenchMethod, BenchResult, BenchSpec, Scenario, ScenarioId};
use clap::{Args, Parser, Subcommand};
use serde::Serialize;
use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

/// Below this many rows `test-sa` still runs but warns.
pub const RECOMMENDED_MIN_ROWS: usize = 100;
const GRID_BUDGET: f64 = 1000.0;
const GRID_MAX_AXIS: usize = 11;

#[derive(Parser, Debug)]
#[command(name = "sacheck", version, about = "Checks of the simplifying assumption for conditional Clayton copulas")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Subcommand, Debug)]
pub enum Command {
    /// Draw a dataset from a simulation scenario and write it as CSV.
    Simulate(SimulateArgs),
    /// Fit both margins and the calibration function; print a JSON summary.
    Fit(FitArgs),
    /// Run both split-sample tests on a dataset; print a JSON report.
    TestSa(TestSaArgs),
    /// Monte Carlo rejection-rate tables.
    Bench(BenchArgs),
}

#[derive(Args, Debug)]
pub struct SimulateArgs {
    #[arg(long)]
    pub scenario: ScenarioId,
    #[arg(long)]
    pub n: usize,
    #[arg(long, default_value_t = 1)]
    pub seed: u64,
    #[arg(long, default_value_t = 0.25)]
    pub beta: f64,
    /// Append three irrelevant uniform covariates.
    #[arg(long)]
    pub pad: bool,
    /// Output file; standard output when absent.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Args, Debug)]
pub struct FitArgs {
    /// Dataset CSV with header `x1,..,xq,y1,y2`.
    pub input: PathBuf,
    #[arg(long, default_value_t = Backend::SingleIndex)]
    pub backend: Backend,
    #[arg(long, default_value_t = 1)]
    pub seed: u64,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Args, Debug)]
pub struct TestSaArgs {
    pub input: PathBuf,
    #[arg(long, default_value_t = 3)]
    pub k: usize,
    #[arg(long, default_value_t = 500)]
    pub j: usize,
    #[arg(long, default_value_t = 0.05)]
    pub alpha: f64,
    #[arg(long, default_value_t = 0.65)]
    pub split_fraction: f64,
    #[arg(long, default_value_t = Backend::SingleIndex)]
    pub backend: Backend,
    #[arg(long, default_value_t = 1)]
    pub seed: u64,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Args, Debug)]
pub struct BenchArgs {
    /// Full benchmark spec as JSON; the grid flags below are then ignored.
    #[arg(long)]
    pub spec: Option<PathBuf>,
    #[arg(long, value_delimiter = ',', default_value = "sc1,sc2,sc3")]
    pub scenarios: Vec<ScenarioId>,
    #[arg(long, value_delimiter = ',', default_value = "500,1000")]
    pub sizes: Vec<usize>,
    #[arg(long, value_delimiter = ',', default_value = "permutation,chisq")]
    pub methods: Vec<BenchMethod>,
    #[arg(long = "k", value_delimiter = ',', default_value = "2,3")]
    pub ks: Vec<usize>,
    #[arg(long, default_value_t = 100)]
    pub replicates: usize,
    #[arg(long, default_value_t = 1)]
    pub seed: u64,
    #[arg(long, default_value_t = 0.25)]
    pub beta: f64,
    #[arg(long)]
    pub pad: bool,
    #[arg(long, default_value_t = 500)]
    pub j: usize,
    #[arg(long, default_value_t = 0.05)]
    pub alpha: f64,
    #[arg(long, default_value_t = 0.65)]
    pub split_fraction: f64,
    #[arg(long, default_value_t = Backend::SingleIndex)]
    pub backend: Backend,
    /// Bootstrap draws per replicate for CVML, CCVML and WAIC.
    #[arg(long, default_value_t = 50)]
    pub bootstrap_draws: usize,
    /// Worker threads; does not affect the output.
    #[arg(long)]
    pub threads: Option<usize>,
    /// JSONL file of finished replicates; an existing file is resumed.
    #[arg(long)]
    pub checkpoint: Option<PathBuf>,
    /// CSV table; standard output when absent.
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// JSON table with the spec echo.
    #[arg(long)]
    pub json: Option<PathBuf>,
}

/// Runs one parsed command.
pub fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Simulate(a) => cmd_simulate(&a),
        Command::Fit(a) => cmd_fit(&a),
        Command::TestSa(a) => cmd_test_sa(&a),
        Command::Bench(a) => cmd_bench(&a),
    }
}

/// Exit status for an error: 2 for I/O and parse failures, 1 otherwise.
pub fn exit_code(e: &Error) -> i32 {
    if e.is_input_error() {
        2
    } else {
        1
    }
}

fn open_out(path: Option<&Path>) -> Result<Box<dyn Write>> {
    Ok(match path {
        Some(p) => Box::new(BufWriter::new(File::create(p).map_err(|e| io_at(p, e))?)),
        None => Box::new(std::io::stdout().lock()),
    })
}

fn io_at(p: &Path, e: std::io::Error) -> Error {
    Error::Io(format!("{}: {e}", p.display()))
}

fn write_json<T: Serialize>(value: &T, path: Option<&Path>) -> Result<()> {
    let mut out = open_out(path)?;
    serde_json::to_writer_pretty(&mut out, value).map_err(|e| Error::Io(e.to_string()))?;
    writeln!(out)?;
    out.flush()?;
    Ok(())
}

pub fn cmd_simulate(a: &SimulateArgs) -> Result<()> {
    let s = Scenario::new(a.scenario, a.beta)?.padded(a.pad);
    let d = gen_scenario(&s, a.n, &mut substream(a.seed, "data", &[]))?;
    let mut out = open_out(a.out.as_deref())?;
    d.write_csv(&mut out)?;
    out.flush()?;
    Ok(())
}

#[derive(Debug, Serialize)]
pub struct EtaGrid {
    pub points_per_axis: usize,
    pub lower: Vec<f64>,
    pub upper: Vec<f64>,
    /// Row-major grid points, first covariate varying slowest.
    pub x: Vec<Vec<f64>>,
    pub eta: Vec<f64>,
    pub min: f64,
    pub max: f64,
    pub mean: f64,
}

#[derive(Debug, Serialize)]
pub struct FitReport {
    pub n: usize,
    pub q: usize,
    pub seed: u64,
    pub margins: [MarginalFit; 2],
    pub calibration: CalibrationFit,
    pub eta_grid: EtaGrid,
}

/// Evaluates `η̂` on a regular grid spanning the observed covariate box.
pub fn eta_grid(d: &Dataset, fit: &CalibrationFit) -> EtaGrid {
    let q = d.q();
    let m = (GRID_BUDGET.powf(1.0 / q as f64).floor() as usize).clamp(2, GRID_MAX_AXIS);
    let mut lower = vec![f64::INFINITY; q];
    let mut upper = vec![f64::NEG_INFINITY; q];
    for i in 0..d.n() {
        for (k, &v) in d.row(i).iter().enumerate() {
            lower[k] = lower[k].min(v);
            upper[k] = upper[k].max(v);
        }
    }
    let total = m.pow(q as u32);
    let mut x = Vec::with_capacity(total);
    let mut eta = Vec::with_capacity(total);
    for flat in 0..total {
        let mut rem = flat;
        let mut pt = vec![0.0; q];
        for k in (0..q).rev() {
            let step = rem % m;
            rem /= m;
            pt[k] = lower[k] + (upper[k] - lower[k]) * step as f64 / (m - 1) as f64;
        }
        eta.push(fit.predict_eta(&pt));
        x.push(pt);
    }
    let min = eta.iter().copied().fold(f64::INFINITY, f64::min);
    let max = eta.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let mean = eta.iter().sum::<f64>() / eta.len() as f64;
    EtaGrid { points_per_axis: m, lower, upper, x, eta, min, max, mean }
}

pub fn fit_report(d: &Dataset, backend: Backend, seed: u64) -> Result<FitReport> {
    let margins = fit_margins(d, &Bandwidth::Auto)?;
    let pairs = training_pairs(d, &margins)?;
    let calibration = fit_calibration(
        &CalibrationSpec::default_for(backend),
        d.covariates(),
        d.q(),
        &pairs,
        &mut substream(seed, "calibration", &[]),
    )?;
    let eta_grid = eta_grid(d, &calibration);
    Ok(FitReport { n: d.n(), q: d.q(), seed, margins, calibration, eta_grid })
}

pub fn cmd_fit(a: &FitArgs) -> Result<()> {
    let d = Dataset::read_csv(&a.input)?;
    let report = fit_report(&d, a.backend, a.seed)?;
    write_json(&report, a.out.as_deref())
}

/// Settings echoed in the `test-sa` report.
#[derive(Debug, Clone, Serialize)]
pub struct ConfigEcho {
    #[serde(rename = "K")]
    pub k: usize,
    #[serde(rename = "J")]
    pub j: usize,
    pub alpha: f64,
    pub split_fraction: f64,
    pub backend: Backend,
    pub seed: u64,
}

#[derive(Debug, Serialize)]
pub struct TestSaReport {
    pub n: usize,
    pub q: usize,
    pub seed: u64,
    pub config: ConfigEcho,
    #[serde(flatten)]
    pub report: SaReport,
    pub warnings: Vec<String>,
}

pub fn cmd_test_sa(a: &TestSaArgs) -> Result<()> {
    let d = Dataset::read_csv(&a.input)?;
    let mut warnings = Vec::new();
    if d.n() < RECOMMENDED_MIN_ROWS {
        let w = format!("only {} rows; at least {RECOMMENDED_MIN_ROWS} are recommended", d.n());
        eprintln!("warning: {w}");
        warnings.push(w);
    }
    let cfg = SaConfig {
        train_frac: a.split_fraction,
        k: a.k,
        permutations: a.j,
        alpha: a.alpha,
        calibration: CalibrationSpec::default_for(a.backend),
        margin_bandwidth: Bandwidth::Auto,
    };
    let report = run_sa_check(&d, &cfg, a.seed)?;
    let out = TestSaReport {
        n: d.n(),
        q: d.q(),
        seed: a.seed,
        config: ConfigEcho {
            k: a.k,
            j: a.j,
            alpha: a.alpha,
            split_fraction: a.split_fraction,
            backend: a.backend,
            seed: a.seed,
        },
        report,
        warnings,
    };
    write_json(&out, a.out.as_deref())
}

#[derive(Debug, Serialize)]
pub struct BenchReport<'a> {
    pub spec: &'a BenchSpec,
    pub results: &'a [BenchResult],
}

pub fn bench_spec(a: &BenchArgs) -> Result<BenchSpec> {
    if let Some(p) = &a.spec {
        let text = std::fs::read_to_string(p).map_err(|e| io_at(p, e))?;
        return serde_json::from_str(&text).map_err(|e| Error::Parse {
            line: e.line() as u64,
            message: e.to_string(),
        });
    }
    Ok(BenchSpec {
        scenarios: a.scenarios.clone(),
        beta: a.beta,
        pad: a.pad,
        sizes: a.sizes.clone(),
        methods: a.methods.clone(),
        ks: a.ks.clone(),
        replicates: a.replicates,
        seed: a.seed,
        sa: SaConfig {
            train_frac: a.split_fraction,
            permutations: a.j,
            alpha: a.alpha,
            calibration: CalibrationSpec::default_for(a.backend),
            ..SaConfig::default()
        },
        bootstrap_draws: a.bootstrap_draws,
    })
}

pub fn cmd_bench(a: &BenchArgs) -> Result<()> {
    let spec = bench_spec(a)?;
    let mut pool = rayon::ThreadPoolBuilder::new();
    if let Some(t) = a.threads {
        if t == 0 {
            return Err(Error::Config("--threads must be positive".into()));
        }
        pool = pool.num_threads(t);
    }
    let pool = pool.build().map_err(|e| Error::Config(e.to_string()))?;
    let results = pool.install(|| run_bench(&spec, a.checkpoint.as_deref()))?;
    let mut out = open_out(a.out.as_deref())?;
    write_bench_csv(&results, &mut out)?;
    out.flush()?;
    if let Some(p) = &a.json {
        write_json(&BenchReport { spec: &spec, results: &results }, Some(p))?;
    }
    Ok(())
}
