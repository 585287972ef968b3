//! Command-line front end. Exit codes: 0 success, 1 runtime failure,
//! 2 usage error.

pub mod commands;
pub mod formats;

use std::ffi::OsString;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};

use crate::error::Error;
use crate::hamsim::{Provenance, DEFAULT_EPS_FRAC, DEFAULT_TAU};
use crate::stoq::{EditPosition, StoqParams};
use commands::{AnalyzeConfig, HamsimJob, StoqJob, StoqTarget};
use formats::{parse_noise, ExperimentManifest, ModelChoice};

pub const EXIT_OK: i32 = 0;
pub const EXIT_FAILURE: i32 = 1;
pub const EXIT_USAGE: i32 = 2;

#[derive(Parser, Debug)]
#[command(name = "ravkit", version, about = "Randomized analog verification and cross-entropy benchmarking")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Generate RAV sequences and matched XEB sequences from a manifest.
    Generate(GenerateArgs),
    /// Sample measurement outcomes for generated circuits.
    Simulate(SimulateArgs),
    /// Fit decays and summarize fidelity estimates across runs.
    Analyze(AnalyzeArgs),
    /// Compile a target unitary and record cost traces.
    Stoq(StoqArgs),
    /// Compare STOQ, Trotter and QDRIFT for Ising time evolution.
    Hamsim(HamsimArgs),
}

#[derive(Args, Debug)]
struct GenerateArgs {
    #[arg(long)]
    manifest: PathBuf,
    /// Overrides the plan seed.
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args, Debug)]
struct SimulateArgs {
    /// Defaults for noise, shots and seed.
    #[arg(long)]
    manifest: Option<PathBuf>,
    /// Directory holding `index.csv`; defaults to `--out`.
    #[arg(long)]
    circuits: Option<PathBuf>,
    /// `none`, `global:λ`, `pergate:r` or `overrot:δ`.
    #[arg(long)]
    noise: Option<String>,
    #[arg(long)]
    shots: Option<usize>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args, Debug)]
struct AnalyzeArgs {
    #[arg(long)]
    manifest: Option<PathBuf>,
    /// Directory holding `index.csv`; defaults to `--out`.
    #[arg(long)]
    circuits: Option<PathBuf>,
    /// Defaults to `<out>/shots.csv`.
    #[arg(long)]
    shots: Option<PathBuf>,
    /// Shots per run, comma separated.
    #[arg(long, value_delimiter = ',')]
    k: Option<Vec<usize>>,
    #[arg(long, value_enum)]
    model: Option<ModelArg>,
    #[arg(long)]
    bin_size: Option<usize>,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Clone, Copy, Debug, ValueEnum)]
enum ModelArg {
    Exp,
    Gauss,
    Auto,
}

impl From<ModelArg> for ModelChoice {
    fn from(m: ModelArg) -> Self {
        match m {
            ModelArg::Exp => ModelChoice::Exp,
            ModelArg::Gauss => ModelChoice::Gauss,
            ModelArg::Auto => ModelChoice::Auto,
        }
    }
}

#[derive(Clone, Copy, Debug, ValueEnum)]
enum TargetArg {
    Ising,
    Haar,
}

#[derive(Args, Debug, Clone)]
struct AnnealArgs {
    #[arg(long, default_value_t = 10_000)]
    iterations: usize,
    #[arg(long, default_value_t = 0.01)]
    delta_beta: f64,
    #[arg(long, default_value_t = 0.5)]
    p_append: f64,
    /// uniform or end
    #[arg(long, default_value = "uniform")]
    edit: EditPosition,
}

impl AnnealArgs {
    fn params(&self) -> StoqParams {
        StoqParams { num_iterations: self.iterations, delta_beta: self.delta_beta, p_append: self.p_append, edit: self.edit }
    }
}

#[derive(Args, Debug)]
struct StoqArgs {
    /// JSON job file; flags are ignored when given.
    #[arg(long)]
    manifest: Option<PathBuf>,
    #[arg(long, value_enum, default_value = "ising")]
    target: TargetArg,
    #[arg(long, default_value_t = 2)]
    n: usize,
    #[command(flatten)]
    anneal: AnnealArgs,
    #[arg(long, default_value_t = 16)]
    runs: usize,
    #[arg(long, default_value_t = DEFAULT_TAU)]
    tau: f64,
    #[arg(long, default_value_t = DEFAULT_EPS_FRAC)]
    eps_frac: f64,
    /// Exit with status 1 if any run ends above this cost.
    #[arg(long)]
    max_cost: Option<f64>,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Clone, Copy, Debug, ValueEnum)]
enum MethodArg {
    Trotter,
    Qdrift,
    Stoq,
    All,
}

#[derive(Args, Debug)]
struct HamsimArgs {
    /// JSON job file; flags are ignored when given.
    #[arg(long)]
    manifest: Option<PathBuf>,
    #[arg(long, default_value_t = 2)]
    n: usize,
    #[arg(long, value_enum, default_value = "all")]
    method: MethodArg,
    #[arg(long, default_value_t = DEFAULT_TAU)]
    tau: f64,
    #[arg(long, default_value_t = 10)]
    steps: usize,
    #[arg(long, default_value_t = 1000)]
    reps: usize,
    #[command(flatten)]
    anneal: AnnealArgs,
    #[arg(long, default_value_t = DEFAULT_EPS_FRAC)]
    eps_frac: f64,
    #[arg(long, default_value_t = 1)]
    runs: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long)]
    out: PathBuf,
}

enum Failure {
    Usage(String),
    Runtime(String),
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        Failure::Runtime(e.to_string())
    }
}

fn usage(e: Error) -> Failure {
    Failure::Usage(e.to_string())
}

fn load_manifest(path: &Path) -> Result<ExperimentManifest, Failure> {
    let m = ExperimentManifest::load(path).map_err(|e| Failure::Usage(format!("{}: {e}", path.display())))?;
    m.validate().map_err(usage)?;
    Ok(m)
}

fn load_json<T: serde::de::DeserializeOwned>(path: &Path) -> Result<T, Failure> {
    let text = std::fs::read_to_string(path).map_err(|e| Failure::Usage(format!("{}: {e}", path.display())))?;
    serde_json::from_str(&text).map_err(|e| Failure::Usage(format!("{}: {e}", path.display())))
}

/// Parse `args` (including the program name) and run. Returns the exit code.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_USAGE } else { EXIT_OK };
            let _ = e.print();
            return code;
        }
    };
    match dispatch(cli.command) {
        Ok(code) => code,
        Err(Failure::Usage(msg)) => {
            eprintln!("error: {msg}");
            EXIT_USAGE
        }
        Err(Failure::Runtime(msg)) => {
            eprintln!("error: {msg}");
            EXIT_FAILURE
        }
    }
}

fn dispatch(cmd: Command) -> Result<i32, Failure> {
    match cmd {
        Command::Generate(a) => {
            let mut manifest = load_manifest(&a.manifest)?;
            if let Some(seed) = a.seed {
                manifest.plan.seed = seed;
            }
            let s = commands::generate(&manifest, &a.out)?;
            println!("generated {} pair(s), {} failed", s.pairs - s.failed, s.failed);
            Ok(if s.failed > 0 { EXIT_FAILURE } else { EXIT_OK })
        }
        Command::Simulate(a) => {
            let manifest = a.manifest.as_deref().map(load_manifest).transpose()?;
            let noise = match (&a.noise, &manifest) {
                (Some(s), _) => parse_noise(s).map_err(usage)?,
                (None, Some(m)) => m.noise,
                (None, None) => crate::noisesim::NoiseModel::Noiseless,
            };
            let shots = a.shots.or(manifest.as_ref().map(|m| m.shots)).unwrap_or(500);
            if shots == 0 {
                return Err(Failure::Usage("shots must be at least 1".into()));
            }
            let seed = a.seed.or(manifest.as_ref().map(|m| m.simulate_seed)).unwrap_or(0);
            let circuits = a.circuits.unwrap_or_else(|| a.out.clone());
            let series = commands::simulate_dir(&circuits, &noise, shots, seed, &a.out)?;
            println!("simulated {} sequence(s), {shots} shot(s) each", series.len());
            Ok(EXIT_OK)
        }
        Command::Analyze(a) => {
            let manifest = a.manifest.as_deref().map(load_manifest).transpose()?;
            let k_schedule = a
                .k
                .or(manifest.as_ref().map(|m| m.k_schedule.clone()))
                .ok_or_else(|| Failure::Usage("no K values given (--k or --manifest)".into()))?;
            let model = a.model.map(ModelChoice::from).or(manifest.as_ref().map(|m| m.model)).unwrap_or(ModelChoice::Exp);
            let bin_size = a.bin_size.or(manifest.as_ref().map(|m| m.bin_size)).unwrap_or(crate::analysis::DEFAULT_BIN_SIZE);
            if bin_size == 0 || k_schedule.is_empty() || k_schedule.contains(&0) {
                return Err(Failure::Usage("K values and bin size must be positive".into()));
            }
            let circuits = a.circuits.unwrap_or_else(|| a.out.clone());
            let shots = a.shots.unwrap_or_else(|| a.out.join("shots.csv"));
            let cfg = AnalyzeConfig { k_schedule, model, bin_size };
            let report = commands::analyze_dir(&circuits, &shots, &cfg, &a.out)?;
            for row in &report.stats.rows {
                let mean = |g: &Option<crate::analysis::GroupStats>| g.as_ref().map_or("-".into(), |g| g.mean.to_string());
                println!("K={} rav_loss={} xeb_loss={}", row.shots, mean(&row.rav), mean(&row.xeb));
            }
            Ok(EXIT_OK)
        }
        Command::Stoq(a) => {
            let job = match &a.manifest {
                Some(p) => load_json::<StoqJob>(p)?,
                None => StoqJob {
                    target: match a.target {
                        TargetArg::Ising => StoqTarget::Ising,
                        TargetArg::Haar => StoqTarget::Haar,
                    },
                    n_qubits: a.n,
                    params: a.anneal.params(),
                    runs: a.runs,
                    tau: a.tau,
                    eps_frac: a.eps_frac,
                    seed: a.seed,
                },
            };
            job.params.validate().map_err(usage)?;
            let runs = commands::stoq_job(&job, &a.out)?;
            let mean = runs.iter().map(|r| r.final_cost).sum::<f64>() / runs.len() as f64;
            println!("mean final cost {mean} over {} run(s)", runs.len());
            if let Some(limit) = a.max_cost {
                if runs.iter().any(|r| r.final_cost > limit) {
                    eprintln!("error: a run ended above cost {limit}");
                    return Ok(EXIT_FAILURE);
                }
            }
            Ok(EXIT_OK)
        }
        Command::Hamsim(a) => {
            let job = match &a.manifest {
                Some(p) => load_json::<HamsimJob>(p)?,
                None => HamsimJob {
                    n_qubits: a.n,
                    tau: a.tau,
                    methods: match a.method {
                        MethodArg::Trotter => vec![Provenance::Trotter],
                        MethodArg::Qdrift => vec![Provenance::Qdrift],
                        MethodArg::Stoq => vec![Provenance::Stoq],
                        MethodArg::All => vec![Provenance::Stoq, Provenance::Trotter, Provenance::Qdrift],
                    },
                    steps: a.steps,
                    reps: a.reps,
                    params: a.anneal.params(),
                    eps_frac: a.eps_frac,
                    runs: a.runs,
                    seed: a.seed,
                },
            };
            job.params.validate().map_err(usage)?;
            let runs = commands::hamsim_job(&job, &a.out)?;
            for &m in &job.methods {
                let of: Vec<_> = runs.iter().filter(|r| r.method == m).collect();
                let k = of.len() as f64;
                println!(
                    "{}: final_cost={} mean_path_distance={} exec_time={}",
                    m.name(),
                    of.iter().map(|r| r.final_cost).sum::<f64>() / k,
                    of.iter().map(|r| r.mean_path_distance).sum::<f64>() / k,
                    of.iter().map(|r| r.exec_time).sum::<f64>() / k
                );
            }
            Ok(EXIT_OK)
        }
    }
}
