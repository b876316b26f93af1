//! `pdp`: seeded multi-trial experiments for the partial-dp mechanisms.
//!
//! Exit codes: 0 on success, 2 for bad flags, configs or failed
//! preconditions (all checked before the first trial), 1 for runtime errors.

pub mod config;
pub mod error;
pub mod experiments;
pub mod report;
pub mod sweep;
pub mod synth;

use std::ffi::OsString;
use std::path::PathBuf;

use clap::{Args, Parser, Subcommand};
use partial_dp::accountant::{zcdp_epsilon_simple, zcdp_to_approx_dp_tight};
use partial_dp::{NoiseConfig, RngStream};
use serde_json::json;

use config::{read_json, Mechanism, SweepConfig};
use error::CliError;
use experiments::{plan, run_experiment, RunOptions};
use report::{csv_err, finish_csv, fmt_num, pretty, Format};

#[derive(Debug, Parser)]
#[command(name = "pdp", version, about = "Per-attribute partial DP mechanisms: accounting and seeded experiments")]
pub struct Cli {
    #[command(flatten)]
    pub global: GlobalArgs,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Clone, Debug, Args)]
pub struct GlobalArgs {
    /// JSON experiment config.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    #[arg(long, global = true, default_value_t = 0)]
    pub seed: u64,
    #[arg(long, global = true, default_value_t = 1)]
    pub trials: usize,
    /// Write the report here instead of stdout.
    #[arg(long, global = true)]
    pub out: Option<PathBuf>,
    #[arg(long, global = true, value_enum, default_value_t = Format::Json)]
    pub format: Format,
    /// Replace all noise by zero and selections by argmax. Needs --test-harness.
    #[arg(long, global = true)]
    pub zero_noise: bool,
    /// Allow debugging switches that void the privacy guarantee.
    #[arg(long, global = true)]
    pub test_harness: bool,
    /// Maximum number of trials run concurrently.
    #[arg(long, global = true)]
    pub jobs: Option<usize>,
    /// Include wall-clock times (makes reports non-reproducible).
    #[arg(long, global = true)]
    pub timing: bool,
}

#[derive(Clone, Debug, Subcommand)]
pub enum Command {
    /// Convert a zCDP guarantee to (ε, δ)-DP.
    Account(AccountArgs),
    /// Gaussian noise on k-way marginals, projected onto achievable answers.
    MarginalsProjection,
    /// Multiplicative weights with ℓ disjoint queries per round.
    Mwem,
    /// Private histogram through heavy hitters.
    HeavyHitters,
    /// Private learner for point functions.
    LearnPoint,
    /// Private learner for thresholds.
    LearnThreshold,
    /// Private sparse distribution estimate.
    EstimateDist,
    /// Private robust halfspace learner.
    LearnHalfspace,
    /// Grid of runs of one mechanism along one parameter.
    Sweep,
}

#[derive(Clone, Debug, Args)]
pub struct AccountArgs {
    /// Per-person zCDP parameter.
    #[arg(long, conflicts_with = "eps0")]
    pub rho: Option<f64>,
    #[arg(long, default_value_t = 1e-6)]
    pub delta: f64,
    /// Per-attribute parameter of an ε0-∇0CDP release; needs --d.
    #[arg(long, requires = "d")]
    pub eps0: Option<f64>,
    /// Number of attributes, used with --eps0.
    #[arg(long, requires = "eps0")]
    pub d: Option<usize>,
}

fn account(a: &AccountArgs, format: Format) -> Result<String, CliError> {
    let rho = match (a.rho, a.eps0, a.d) {
        (Some(rho), _, _) => rho,
        (None, Some(eps0), Some(d)) => 0.5 * (d as f64 * eps0).powi(2),
        _ => return Err(CliError::config("account needs --rho, or --eps0 together with --d")),
    };
    if !(rho > 0.0 && rho.is_finite()) {
        return Err(CliError::config(format!("rho must be positive and finite, got {rho}")));
    }
    if !(a.delta > 0.0 && a.delta < 1.0) {
        return Err(CliError::config(format!("delta must lie in (0, 1), got {}", a.delta)));
    }
    let tight = zcdp_to_approx_dp_tight(rho, a.delta)?;
    let simple = zcdp_epsilon_simple(rho, a.delta)?;
    match format {
        Format::Json => {
            let mut v = json!({
                "command": "account",
                "rho": rho,
                "delta": a.delta,
                "epsilon_tight": tight,
                "epsilon_simple": simple,
            });
            if let (Some(eps0), Some(d)) = (a.eps0, a.d) {
                v["eps0"] = json!(eps0);
                v["d"] = json!(d);
            }
            Ok(pretty(&v))
        }
        Format::Csv => {
            let mut w = csv::Writer::from_writer(Vec::new());
            w.write_record(["rho", "delta", "epsilon_tight", "epsilon_simple"]).map_err(csv_err)?;
            w.write_record([fmt_num(rho), fmt_num(a.delta), fmt_num(tight), fmt_num(simple)])
                .map_err(csv_err)?;
            finish_csv(w)
        }
    }
}

fn mechanism_of(c: &Command) -> Option<Mechanism> {
    Some(match c {
        Command::MarginalsProjection => Mechanism::MarginalsProjection,
        Command::Mwem => Mechanism::Mwem,
        Command::HeavyHitters => Mechanism::HeavyHitters,
        Command::LearnPoint => Mechanism::LearnPoint,
        Command::LearnThreshold => Mechanism::LearnThreshold,
        Command::EstimateDist => Mechanism::EstimateDist,
        Command::LearnHalfspace => Mechanism::LearnHalfspace,
        Command::Account(_) | Command::Sweep => return None,
    })
}

fn dispatch(cli: &Cli) -> Result<String, CliError> {
    let g = &cli.global;
    if let Command::Account(a) = &cli.command {
        return account(a, g.format);
    }
    let path = g
        .config
        .as_ref()
        .ok_or_else(|| CliError::config("this subcommand needs --config <path>"))?;
    let value = read_json(path)?;
    let opts = RunOptions {
        trials: g.trials,
        noise: NoiseConfig {
            zero_noise: g.zero_noise,
        },
        timing: g.timing,
    };
    match mechanism_of(&cli.command) {
        Some(m) => {
            let exp = plan(&m.parse_config(value)?)?;
            run_experiment(exp.as_ref(), &RngStream::new(g.seed), opts)?.render(g.format)
        }
        None => {
            let cfg: SweepConfig =
                serde_json::from_value(value).map_err(|e| CliError::config(format!("invalid sweep config: {e}")))?;
            sweep::run_sweep(&cfg, g.seed, opts)?.render(g.format)
        }
    }
}

/// Parses nothing; runs an already-parsed command and returns the rendered report.
pub fn execute(cli: &Cli) -> Result<String, CliError> {
    let g = &cli.global;
    if g.zero_noise && !g.test_harness {
        return Err(CliError::config("--zero-noise is only accepted together with --test-harness"));
    }
    if g.trials == 0 {
        return Err(CliError::config("--trials must be at least 1"));
    }
    match g.jobs {
        Some(0) => Err(CliError::config("--jobs must be at least 1")),
        Some(j) => rayon::ThreadPoolBuilder::new()
            .num_threads(j)
            .build()
            .map_err(|e| CliError::runtime(format!("cannot start worker pool: {e}")))?
            .install(|| dispatch(cli)),
        None => dispatch(cli),
    }
}

/// Entry point shared by the binary and the tests; returns the exit code.
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
    let text = match execute(&cli) {
        Ok(text) => text,
        Err(e) => {
            eprintln!("error: {e}");
            return e.exit_code();
        }
    };
    let written = match &cli.global.out {
        Some(path) => std::fs::write(path, text).map_err(|e| format!("cannot write {}: {e}", path.display())),
        None => {
            use std::io::Write;
            std::io::stdout().write_all(text.as_bytes()).map_err(|e| e.to_string())
        }
    };
    match written {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e}");
            1
        }
    }
}
