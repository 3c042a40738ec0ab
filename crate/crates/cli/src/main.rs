//! `bran` — latency and attack-survivability experiments for
//! blockchain-assisted radio access networks.

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use bran_cli::config::{self, GiveUpValue, Mode, Overrides};
use bran_cli::experiment::{run_experiment, RunError};
use bran_cli::output::write_output;

#[derive(Parser)]
#[command(
    name = "bran",
    version,
    about = "Model a blockchain-assisted radio access network: closed forms, steady-state chain solving, event simulation and attack races",
    after_help = "Values resolve as: flags, then the config file, then BRAN_SIM_SEED (seed only), then defaults."
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Closed-form latency report for one parameter set
    Analytic(CommonArgs),
    /// Exact steady state of the truncated chain with Little's-law latency
    SteadyState(CommonArgs),
    /// One event-driven simulation run
    Simulate(CommonArgs),
    /// Attack success probability: closed form plus Monte Carlo
    Attack(CommonArgs),
    /// Latency vs traffic intensity (analytic bounds + simulation)
    SweepRho(CommonArgs),
    /// Latency vs required confirmations
    SweepConfirmations(CommonArgs),
    /// Attack success probability vs relative mining rate
    SweepAttack(CommonArgs),
}

impl Command {
    fn mode(&self) -> Mode {
        match self {
            Command::Analytic(_) => Mode::Analytic,
            Command::SteadyState(_) => Mode::SteadyState,
            Command::Simulate(_) => Mode::Simulate,
            Command::Attack(_) => Mode::Attack,
            Command::SweepRho(_) => Mode::SweepRho,
            Command::SweepConfirmations(_) => Mode::SweepConfirmations,
            Command::SweepAttack(_) => Mode::SweepAttack,
        }
    }

    fn args(&self) -> &CommonArgs {
        match self {
            Command::Analytic(a)
            | Command::SteadyState(a)
            | Command::Simulate(a)
            | Command::Attack(a)
            | Command::SweepRho(a)
            | Command::SweepConfirmations(a)
            | Command::SweepAttack(a) => a,
        }
    }
}

#[derive(Args)]
struct CommonArgs {
    /// Config file (flat key = value document)
    #[arg(long)]
    config: Option<PathBuf>,

    /// Request arrival rate
    #[arg(long)]
    lambda_a: Option<f64>,
    /// Block mining rate
    #[arg(long)]
    lambda_b: Option<f64>,
    /// Per-link service rate
    #[arg(long)]
    lambda_c: Option<f64>,
    /// Rejection-event rate
    #[arg(long)]
    lambda_r: Option<f64>,
    /// Maximum requests per block
    #[arg(long)]
    k: Option<u32>,
    /// Requests removed per rejection event
    #[arg(long)]
    r: Option<u32>,
    /// Parallel access links
    #[arg(long)]
    s: Option<u32>,
    /// Required confirmations
    #[arg(long)]
    n_conf: Option<u32>,

    /// Attacker mining rate relative to the chain
    #[arg(long)]
    beta: Option<f64>,
    /// Give-up deficit: an integer or "unbounded"
    #[arg(long)]
    n_g: Option<String>,
    /// What the rho axis controls: "block" or "service"
    #[arg(long)]
    rho_definition: Option<String>,
    /// Confirmation counting in the attack race: "inclusive" or "exclusive"
    #[arg(long)]
    conf_counting: Option<String>,

    /// Sweep axis variable (fixed per mode; accepted for explicitness)
    #[arg(long)]
    sweep_variable: Option<String>,
    /// Sweep axis start
    #[arg(long)]
    sweep_start: Option<f64>,
    /// Sweep axis stop
    #[arg(long)]
    sweep_stop: Option<f64>,
    /// Sweep axis point count
    #[arg(long)]
    sweep_points: Option<u32>,
    /// Sweep axis scale: "linear" or "log"
    #[arg(long)]
    sweep_scale: Option<String>,

    /// Monte Carlo trials per attack estimate
    #[arg(long)]
    trials: Option<u64>,
    /// Requests generated per simulation run
    #[arg(long)]
    num_arrivals: Option<u64>,
    /// Warm-up fraction dropped from simulation statistics
    #[arg(long)]
    warmup_fraction: Option<f64>,
    /// PRNG seed (also BRAN_SIM_SEED, lowest precedence)
    #[arg(long)]
    seed: Option<u64>,
    /// Output path; stdout when omitted
    #[arg(long, short)]
    output: Option<PathBuf>,
    /// Output format: "csv" or "json"
    #[arg(long)]
    format: Option<String>,
}

impl CommonArgs {
    fn overrides(&self) -> Result<Overrides, config::ConfigError> {
        Ok(Overrides {
            lambda_a: self.lambda_a,
            lambda_b: self.lambda_b,
            lambda_c: self.lambda_c,
            lambda_r: self.lambda_r,
            k: self.k,
            r: self.r,
            s: self.s,
            n_conf: self.n_conf,
            beta: self.beta,
            n_g: self.n_g.as_deref().map(GiveUpValue::parse).transpose()?,
            rho_definition: self.rho_definition.clone(),
            conf_counting: self.conf_counting.clone(),
            sweep_variable: self.sweep_variable.clone(),
            sweep_start: self.sweep_start,
            sweep_stop: self.sweep_stop,
            sweep_points: self.sweep_points,
            sweep_scale: self.sweep_scale.clone(),
            trials: self.trials,
            num_arrivals: self.num_arrivals,
            warmup_fraction: self.warmup_fraction,
            seed: self.seed,
            output: self
                .output
                .as_ref()
                .map(|p| p.to_string_lossy().into_owned()),
            format: self.format.clone(),
        })
    }
}

const EXIT_RUNTIME: u8 = 1;
const EXIT_CONFIG: u8 = 2;
const EXIT_UNSTABLE: u8 = 3;

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    match run(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(code) => ExitCode::from(code),
    }
}

fn run(cli: &Cli) -> Result<(), u8> {
    let mode = cli.command.mode();
    let args = cli.command.args();

    let file = match &args.config {
        Some(path) => {
            let text = std::fs::read_to_string(path).map_err(|e| {
                eprintln!("error: cannot read config {}: {e}", path.display());
                EXIT_CONFIG
            })?;
            config::parse_config(&text).map_err(|e| {
                eprintln!("error: {e}");
                EXIT_CONFIG
            })?
        }
        None => config::FileConfig::default(),
    };

    let flags = args.overrides().map_err(|e| {
        eprintln!("error: {e}");
        EXIT_CONFIG
    })?;

    let env_seed = match std::env::var("BRAN_SIM_SEED") {
        Ok(text) => Some(text.parse::<u64>().map_err(|_| {
            eprintln!("error: BRAN_SIM_SEED must be an unsigned integer, got `{text}`");
            EXIT_CONFIG
        })?),
        Err(_) => None,
    };

    let experiment = config::resolve(mode, &file, &flags, env_seed).map_err(|e| {
        eprintln!("error: {e}");
        EXIT_CONFIG
    })?;

    let table = run_experiment(&experiment).map_err(|e| {
        eprintln!("error: {e}");
        match e {
            RunError::Unstable { .. } => EXIT_UNSTABLE,
            RunError::Invalid(_) => EXIT_CONFIG,
            RunError::Solve(_) | RunError::Io(_) => EXIT_RUNTIME,
        }
    })?;

    let rendered = table.render(experiment.format);
    write_output(experiment.output.as_deref(), &rendered).map_err(|e| {
        eprintln!("error: cannot write output: {e}");
        EXIT_RUNTIME
    })
}
