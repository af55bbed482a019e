//! Command-line front end.
//!
//! Every successful run writes a [`RunManifest`] holding the resolved
//! invocation, input and output hashes, so it can be replayed with
//! [`replay`] and checked for bit-identical outputs.

mod commands;
mod manifest;

pub use manifest::{replay, FileHash, RunManifest};

use std::ffi::OsString;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use serde::{Deserialize, Serialize};

use crate::error::Result;
use crate::imitation::Algorithm;

pub const EXIT_OK: i32 = 0;
pub const EXIT_USAGE: i32 = 1;
pub const EXIT_DATA: i32 = 2;

#[derive(Clone, Debug, Parser, Serialize, Deserialize)]
#[command(
    name = "cut-transfer",
    version,
    about = "Align force trials, fit periodic GP disturbances, simulate cuts and train imitation policies"
)]
pub struct Cli {
    #[command(flatten)]
    pub global: GlobalArgs,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Clone, Debug, Args, Serialize, Deserialize)]
pub struct GlobalArgs {
    /// Base seed for every random stream.
    #[arg(long, global = true, default_value_t = 0)]
    pub seed: u64,
    /// Worker threads (defaults to the number of cores).
    #[arg(long, global = true)]
    pub threads: Option<usize>,
    /// Increase log verbosity (-v info, -vv debug).
    #[arg(short, long, global = true, action = clap::ArgAction::Count)]
    pub verbose: u8,
    /// Output file or directory, depending on the subcommand.
    #[arg(long, global = true)]
    pub out: Option<PathBuf>,
}

#[derive(Clone, Debug, Subcommand, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Command {
    /// Normalize and align the force trials in a directory of CSV files.
    Align(AlignArgs),
    /// Fit the periodic GP disturbance model to an aligned dataset.
    FitGp(FitGpArgs),
    /// Posterior mean, standard deviation and samples at given times.
    GpPredict(GpPredictArgs),
    /// Roll out a policy in the cutting environment.
    Simulate(SimulateArgs),
    /// Train a policy with behavioural cloning or DAgger.
    Imitate(ImitateArgs),
    /// Evaluate strategies on shared seeds and compare them.
    Evaluate(EvaluateArgs),
    /// Rebuild comparison tables from saved strategy reports.
    Report(ReportArgs),
    /// Generate synthetic force trials with known ground truth.
    Synth(SynthArgs),
}

#[derive(Clone, Debug, Args, Serialize, Deserialize)]
pub struct AlignArgs {
    /// Directory of trial CSV files (`t,fx,fy,fz`).
    #[arg(long)]
    pub input: PathBuf,
    /// `auto` (longest trial) or a trial index in file-name order.
    #[arg(long, default_value = "auto")]
    pub reference: String,
    /// Open-ended DTW (the default).
    #[arg(long, conflicts_with = "closed")]
    pub open_ended: bool,
    /// Require warp paths to end on the last query sample.
    #[arg(long)]
    pub closed: bool,
    /// Optional Sakoe-Chiba band half-width (samples).
    #[arg(long)]
    pub window: Option<usize>,
    /// Nominal sample rate (Hz) for jitter repair.
    #[arg(long, default_value_t = crate::timeseries::NOMINAL_RATE_HZ)]
    pub rate: f64,
}

#[derive(Clone, Debug, Args, Serialize, Deserialize)]
pub struct FitGpArgs {
    #[arg(long)]
    pub dataset: PathBuf,
    /// Mechanistic force on the reference time base; without it the
    /// recordings are treated as free-running.
    #[arg(long)]
    pub mechanistic: Option<PathBuf>,
    #[arg(long, default_value_t = 8)]
    pub restarts: usize,
    #[arg(long, default_value_t = 0.01)]
    pub noise_init: f64,
    #[arg(long, default_value_t = 1500)]
    pub max_points: usize,
    #[arg(long, default_value_t = 200)]
    pub max_iters: usize,
}

#[derive(Clone, Debug, Args, Serialize, Deserialize)]
pub struct GpPredictArgs {
    #[arg(long)]
    pub model: PathBuf,
    /// CSV whose first column holds the query times (s).
    #[arg(long)]
    pub times: PathBuf,
    #[arg(long, default_value_t = 0)]
    pub samples: usize,
}

#[derive(Clone, Debug, Args, Serialize, Deserialize)]
pub struct SimulateArgs {
    /// Environment config JSON (defaults apply when absent).
    #[arg(long)]
    pub env: Option<PathBuf>,
    /// GP model enabling augmentation; overrides the env config's path.
    #[arg(long)]
    pub gp: Option<PathBuf>,
    /// `expert`, `regulator`, `baseline` or a policy JSON file.
    #[arg(long, default_value = "expert")]
    pub policy: String,
    #[arg(long, default_value_t = 1)]
    pub episodes: usize,
}

#[derive(Clone, Debug, Args, Serialize, Deserialize)]
pub struct ImitateArgs {
    #[arg(long)]
    pub env: Option<PathBuf>,
    /// GP model supplying the observation correction.
    #[arg(long)]
    pub gp: Option<PathBuf>,
    /// Imitation config JSON; the flags below override it.
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long, value_parser = parse_algorithm)]
    pub algo: Option<Algorithm>,
    #[arg(long)]
    pub episodes: Option<usize>,
    #[arg(long)]
    pub lr: Option<f64>,
    #[arg(long)]
    pub batch: Option<usize>,
    /// Sensor noise added to the correction (N); defaults to the env config.
    #[arg(long)]
    pub sensor_sigma: Option<f64>,
    /// `expert` or `regulator`.
    #[arg(long, default_value = "expert")]
    pub expert: String,
}

fn parse_algorithm(s: &str) -> std::result::Result<Algorithm, String> {
    s.parse().map_err(|e: crate::Error| e.to_string())
}

#[derive(Clone, Debug, Args, Serialize, Deserialize)]
pub struct EvaluateArgs {
    #[arg(long)]
    pub env: Option<PathBuf>,
    #[arg(long)]
    pub gp: Option<PathBuf>,
    /// Comma-separated policy files or builtins (`expert`, `regulator`).
    #[arg(long, value_delimiter = ',', default_value = "expert")]
    pub policies: Vec<String>,
    /// Add the fixed-parameter baseline.
    #[arg(long)]
    pub baseline: bool,
    #[arg(long, default_value_t = 50)]
    pub episodes: usize,
    /// First episode seed (defaults to `--seed`).
    #[arg(long)]
    pub seed_base: Option<u64>,
}

#[derive(Clone, Debug, Args, Serialize, Deserialize)]
pub struct ReportArgs {
    /// Directory holding `*.report.json` files.
    #[arg(long = "in")]
    pub input: PathBuf,
    #[arg(long, value_parser = ["csv", "json"], default_value = "json")]
    pub format: String,
}

#[derive(Clone, Debug, Args, Serialize, Deserialize)]
pub struct SynthArgs {
    /// Generator config JSON (defaults apply when absent).
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long)]
    pub trials: Option<usize>,
    #[arg(long)]
    pub samples: Option<usize>,
}

fn absolute(p: &mut PathBuf) {
    if let Ok(a) = std::path::absolute(&*p) {
        *p = a;
    }
}

fn absolute_opt(p: &mut Option<PathBuf>) {
    if let Some(p) = p {
        absolute(p);
    }
}

impl Cli {
    /// Make every path absolute so the invocation can be replayed from any
    /// working directory. Builtin policy names are left alone.
    pub fn absolutize(&mut self) {
        absolute_opt(&mut self.global.out);
        match &mut self.command {
            Command::Align(a) => absolute(&mut a.input),
            Command::FitGp(a) => {
                absolute(&mut a.dataset);
                absolute_opt(&mut a.mechanistic);
            }
            Command::GpPredict(a) => {
                absolute(&mut a.model);
                absolute(&mut a.times);
            }
            Command::Simulate(a) => {
                absolute_opt(&mut a.env);
                absolute_opt(&mut a.gp);
                if !commands::is_builtin(&a.policy) {
                    a.policy = std::path::absolute(&a.policy).map_or(a.policy.clone(), |p| p.display().to_string());
                }
            }
            Command::Imitate(a) => {
                absolute_opt(&mut a.env);
                absolute_opt(&mut a.gp);
                absolute_opt(&mut a.config);
            }
            Command::Evaluate(a) => {
                absolute_opt(&mut a.env);
                absolute_opt(&mut a.gp);
                for p in a.policies.iter_mut().filter(|p| !commands::is_builtin(p)) {
                    *p = std::path::absolute(&*p).map_or(p.clone(), |q| q.display().to_string());
                }
            }
            Command::Report(a) => absolute(&mut a.input),
            Command::Synth(a) => absolute_opt(&mut a.config),
        }
    }

    pub fn name(&self) -> &'static str {
        match self.command {
            Command::Align(_) => "align",
            Command::FitGp(_) => "fit-gp",
            Command::GpPredict(_) => "gp-predict",
            Command::Simulate(_) => "simulate",
            Command::Imitate(_) => "imitate",
            Command::Evaluate(_) => "evaluate",
            Command::Report(_) => "report",
            Command::Synth(_) => "synth",
        }
    }
}

/// Run a parsed invocation and write its manifest.
pub fn run(cli: &Cli) -> Result<RunManifest> {
    let mut invocation = cli.clone();
    invocation.absolutize();
    manifest::execute(invocation)
}

/// Parse `args` (program name first), run, and map the outcome to an exit
/// code. Messages go to stdout for help and stderr otherwise.
pub fn main_with_args<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            use clap::error::ErrorKind;
            let _ = e.print();
            return match e.kind() {
                ErrorKind::DisplayHelp | ErrorKind::DisplayVersion => EXIT_OK,
                _ => EXIT_USAGE,
            };
        }
    };
    let level = match cli.global.verbose {
        0 => log::LevelFilter::Warn,
        1 => log::LevelFilter::Info,
        _ => log::LevelFilter::Debug,
    };
    let _ = env_logger::Builder::new().filter_level(level).try_init();
    match run(&cli) {
        Ok(m) => {
            log::info!("{} finished, manifest {}", m.command, m.location.display());
            EXIT_OK
        }
        Err(e) => {
            eprintln!("error: {e}");
            EXIT_DATA
        }
    }
}

pub fn main() -> i32 {
    main_with_args(std::env::args_os())
}

fn stem(path: &Path) -> String {
    path.file_stem().map_or_else(|| "output".into(), |s| s.to_string_lossy().into_owned())
}
