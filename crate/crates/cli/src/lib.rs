//! Command-line front end for data-driven dissipativity certification.
//!
//! The binary decides, from recorded input/state/output data and a declared
//! noise model, whether **every** linear system consistent with the data is
//! dissipative with respect to a quadratic supply rate — and backs the
//! verdict with an auditable artifact: a storage-function certificate, a
//! constructive counterexample, or a dual infeasibility witness.
//!
//! Exit codes are a stable contract:
//!
//! | code | meaning                                                |
//! |------|--------------------------------------------------------|
//! | 0    | informative (check/report) or verification passed      |
//! | 1    | not informative                                        |
//! | 2    | inconclusive, or an assumption fails for the input     |
//! | 64   | unusable input (unreadable/unparsable files, bad dims) |
//! | 65   | certificate does not match the problem files           |
//! | 66   | certificate contents fail re-validation                |
//! | 70   | internal numerical failure                             |

pub mod certificate;
pub mod commands;
pub mod error;
pub mod format;

use std::path::PathBuf;

use clap::{Args, Parser, Subcommand};

use dissipacert_core::informativity::DEFAULT_PIPELINE_SEED;
use dissipacert_core::Tolerances;

use crate::error::CliError;

#[derive(Debug, Parser)]
#[command(
    name = "dissipacert",
    version,
    about = "Decide dissipativity of all linear systems consistent with recorded data"
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Decide informativity for a data/supply/noise file triple and write a
    /// certificate.
    Check(CheckArgs),
    /// Re-validate a certificate against its problem files (no solver).
    Verify(VerifyArgs),
    /// Build the problem files for a scenario config.
    Generate(GenerateArgs),
    /// Rewrite a quadratic noise model in the equivalent other form.
    ConvertNoise(ConvertNoiseArgs),
    /// Render a certificate as human-readable text.
    Report(ReportArgs),
}

/// Tolerance overrides shared by the numerical commands.  Every flag falls
/// back to an environment variable and then to the library default.
#[derive(Debug, Args, Clone)]
pub struct ToleranceArgs {
    /// Slack below zero tolerated in positive-semidefiniteness checks.
    #[arg(long, env = "DISSIPACERT_EPS_PSD")]
    pub eps_psd: Option<f64>,
    /// Margin above zero required in strict-definiteness checks.
    #[arg(long, env = "DISSIPACERT_EPS_STRICT")]
    pub eps_strict: Option<f64>,
    /// Relative singular-value threshold for rank decisions.
    #[arg(long, env = "DISSIPACERT_RTOL_RANK")]
    pub rtol_rank: Option<f64>,
}

impl ToleranceArgs {
    pub fn resolve(&self) -> Result<Tolerances, CliError> {
        let mut tol = Tolerances::default();
        if let Some(v) = self.eps_psd {
            tol.eps_psd = v;
        }
        if let Some(v) = self.eps_strict {
            tol.eps_strict = v;
        }
        if let Some(v) = self.rtol_rank {
            tol.rtol_rank = v;
        }
        for (name, v) in [
            ("--eps-psd", tol.eps_psd),
            ("--eps-strict", tol.eps_strict),
            ("--rtol-rank", tol.rtol_rank),
        ] {
            if !v.is_finite() || v <= 0.0 {
                return Err(CliError::Usage(format!(
                    "{name} must be a positive finite number, got {v}"
                )));
            }
        }
        Ok(tol)
    }
}

#[derive(Debug, Args)]
pub struct CheckArgs {
    /// Trajectory CSV (channels u<i>, x<i>, y<i>).
    #[arg(long)]
    pub data: PathBuf,
    /// Supply-rate JSON.
    #[arg(long)]
    pub supply: PathBuf,
    /// Noise-model JSON.
    #[arg(long)]
    pub noise: PathBuf,
    /// Where to write the certificate.
    #[arg(long, default_value = "certificate.json")]
    pub out: PathBuf,
    /// Seed for the pipeline's internal sampling.
    #[arg(long, default_value_t = DEFAULT_PIPELINE_SEED)]
    pub seed: u64,
    #[command(flatten)]
    pub tolerances: ToleranceArgs,
}

#[derive(Debug, Args)]
pub struct VerifyArgs {
    /// Certificate to re-validate.
    #[arg(long)]
    pub certificate: PathBuf,
    /// Trajectory CSV the certificate claims to be about.
    #[arg(long)]
    pub data: PathBuf,
    /// Supply-rate JSON.
    #[arg(long)]
    pub supply: PathBuf,
    /// Noise-model JSON.
    #[arg(long)]
    pub noise: PathBuf,
}

#[derive(Debug, Args)]
pub struct GenerateArgs {
    /// Scenario config JSON.
    #[arg(long)]
    pub config: PathBuf,
    /// Directory receiving data.csv, supply.json, noise.json, system.json.
    #[arg(long)]
    pub out_dir: PathBuf,
    #[command(flatten)]
    pub tolerances: ToleranceArgs,
}

#[derive(Debug, Args)]
pub struct ConvertNoiseArgs {
    /// Quadratic noise-model JSON to convert.
    #[arg(long)]
    pub noise: PathBuf,
    /// Where to write the converted model.
    #[arg(long)]
    pub out: PathBuf,
    #[command(flatten)]
    pub tolerances: ToleranceArgs,
}

#[derive(Debug, Args)]
pub struct ReportArgs {
    /// Certificate to render.
    #[arg(long)]
    pub certificate: PathBuf,
}

/// Runs a parsed command line, returning the process exit code.  Errors are
/// printed to stderr; normal command output goes to stdout.
pub fn run(cli: &Cli) -> i32 {
    match run_inner(cli) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}

fn run_inner(cli: &Cli) -> Result<i32, CliError> {
    match &cli.command {
        Command::Check(args) => {
            let tol = args.tolerances.resolve()?;
            let (code, doc) = commands::cmd_check(
                &args.data,
                &args.supply,
                &args.noise,
                &args.out,
                args.seed,
                &tol,
            )?;
            let verdict = match &doc.verdict {
                certificate::VerdictSection::Informative { .. } => "informative",
                certificate::VerdictSection::NotInformative { .. } => "not informative",
                certificate::VerdictSection::Inconclusive { .. } => "inconclusive",
            };
            println!("verdict: {verdict}");
            println!("certificate: {}", args.out.display());
            Ok(code)
        }
        Command::Verify(args) => {
            let code = commands::cmd_verify(&args.certificate, &args.data, &args.supply, &args.noise)?;
            println!("certificate verified");
            Ok(code)
        }
        Command::Generate(args) => {
            let tol = args.tolerances.resolve()?;
            let written = commands::cmd_generate(&args.config, &args.out_dir, &tol)?;
            for path in written {
                println!("wrote {}", path.display());
            }
            Ok(0)
        }
        Command::ConvertNoise(args) => {
            let tol = args.tolerances.resolve()?;
            let converted = commands::cmd_convert_noise(&args.noise, &args.out, &tol)?;
            let form = match converted {
                dissipacert_core::sysmodel::NoiseSpec::N1 { .. } => "N1",
                dissipacert_core::sysmodel::NoiseSpec::N2 { .. } => "N2",
                dissipacert_core::sysmodel::NoiseSpec::N0 => "N0",
            };
            println!("wrote {} ({form})", args.out.display());
            Ok(0)
        }
        Command::Report(args) => {
            let (code, text) = commands::cmd_report(&args.certificate)?;
            print!("{text}");
            Ok(code)
        }
    }
}
