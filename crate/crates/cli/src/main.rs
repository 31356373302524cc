use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use d2lab::experiment::{cmd_run, cmd_sweep};
use d2lab::{load_config, CliError};
use d2lab_core::agent::pretrain_discriminator;
use d2lab_core::demos::{generate_demos, load_demos, save_demos, subsample};
use d2lab_core::envs::{calibrate_expert, expert_mean_return, make_env, ExpertController, Stochasticity, ENV_IDS};
use d2lab_core::tabular::verify::{verify_suite, Fault, VerifyConfig};
use serde_json::json;

#[derive(Parser)]
#[command(name = "d2lab", version, about = "Imitation learning experiments with a discriminator-routed replay")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Property suite over random tabular MDPs; JSON report on stdout.
    VerifyTabular(VerifyArgs),
    /// Create, subsample and inspect demonstration files.
    #[command(subcommand)]
    Demos(DemosCommand),
    /// Discriminator utilities.
    #[command(subcommand)]
    Disc(DiscCommand),
    /// Train every configured seed and write per-seed and aggregate CSVs.
    Run(ConfigArgs),
    /// Run once per trajectory count and tabulate final returns.
    Sweep(SweepArgs),
    /// Environment metadata and expert calibration.
    #[command(subcommand)]
    Envs(EnvsCommand),
}

#[derive(Args)]
struct VerifyArgs {
    #[arg(long, default_value_t = 100)]
    n: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Skip the TD convergence check.
    #[arg(long)]
    no_td: bool,
    #[arg(long, default_value_t = 200_000)]
    td_steps: usize,
    #[arg(long, default_value_t = 0.5)]
    td_gamma: f64,
    /// Inject a deliberate solver bug.
    #[arg(long, value_parser = ["sign-flip"])]
    fault: Option<String>,
    /// Also write the report here.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Subcommand)]
enum DemosCommand {
    Generate {
        #[arg(long)]
        env: String,
        #[arg(long, default_value_t = 20)]
        n: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Gaussian action noise (fraction of the action half-range).
        #[arg(long)]
        noise: Option<f64>,
        #[arg(long)]
        out: PathBuf,
    },
    Subsample {
        #[arg(long)]
        input: PathBuf,
        #[arg(long)]
        k: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        out: PathBuf,
    },
    Inspect { path: PathBuf },
}

#[derive(Subcommand)]
enum DiscCommand {
    /// Pretrain on `--demos` with the config's disc section and save the network.
    Pretrain {
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Where to write the trained network.
        #[arg(long)]
        save: PathBuf,
        #[command(flatten)]
        config: ConfigArgs,
    },
}

#[derive(Args)]
struct ConfigArgs {
    /// Experiment JSON file.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Override a config key, e.g. `--set d2.gamma=0.95`. Repeatable.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    overrides: Vec<String>,
    #[arg(long)]
    method: Option<String>,
    #[arg(long)]
    env: Option<String>,
    #[arg(long)]
    demos: Option<PathBuf>,
    /// Comma-separated seeds.
    #[arg(long, value_delimiter = ',')]
    seeds: Option<Vec<u64>>,
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long)]
    total_steps: Option<usize>,
    #[arg(long)]
    eval_interval: Option<usize>,
    #[arg(long)]
    n_trajectories: Option<usize>,
}

#[derive(Args)]
struct SweepArgs {
    #[command(flatten)]
    config: ConfigArgs,
    /// Comma-separated trajectory counts.
    #[arg(long, value_delimiter = ',')]
    counts: Option<Vec<usize>>,
}

#[derive(Subcommand)]
enum EnvsCommand {
    Describe { env: Option<String> },
    Calibrate {
        env: Option<String>,
        #[arg(long, default_value_t = 100)]
        episodes: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
}

impl ConfigArgs {
    /// Flags become overrides applied after any `--set`.
    fn overrides(&self) -> Vec<String> {
        let mut out = self.overrides.clone();
        let mut push = |k: &str, v: String| out.push(format!("{k}={v}"));
        if let Some(m) = &self.method {
            push("method", json!(m).to_string());
        }
        if let Some(e) = &self.env {
            push("env_id", json!(e).to_string());
        }
        if let Some(p) = &self.demos {
            push("demo_path", json!(p).to_string());
        }
        if let Some(s) = &self.seeds {
            push("seeds", json!(s).to_string());
        }
        if let Some(p) = &self.out {
            push("output_dir", json!(p).to_string());
        }
        if let Some(n) = self.total_steps {
            push("total_steps", n.to_string());
        }
        if let Some(n) = self.eval_interval {
            push("eval_interval", n.to_string());
        }
        if let Some(n) = self.n_trajectories {
            push("n_trajectories", n.to_string());
        }
        out
    }

    fn load(&self, extra: &[String]) -> Result<d2lab::ExperimentConfig, CliError> {
        let mut overrides = self.overrides();
        overrides.extend_from_slice(extra);
        load_config(self.config.as_deref(), &overrides)
    }
}

fn print_json(value: &impl serde::Serialize) -> Result<(), CliError> {
    let text = serde_json::to_string_pretty(value).map_err(|e| CliError::Failure(e.to_string()))?;
    println!("{text}");
    Ok(())
}

fn check_env(env: &str) -> Result<(), CliError> {
    if ENV_IDS.contains(&env) {
        Ok(())
    } else {
        Err(CliError::Config(format!("unknown env {env:?}; expected one of {ENV_IDS:?}")))
    }
}

fn envs_or_all(env: &Option<String>) -> Result<Vec<String>, CliError> {
    match env {
        Some(e) => check_env(e).map(|_| vec![e.clone()]),
        None => Ok(ENV_IDS.iter().map(|s| s.to_string()).collect()),
    }
}

fn write_file(path: &Path, text: &str) -> Result<(), CliError> {
    std::fs::write(path, text).map_err(|e| CliError::Failure(format!("{}: {e}", path.display())))
}

fn verify(args: &VerifyArgs) -> Result<(), CliError> {
    let cfg = VerifyConfig {
        n_instances: args.n,
        seed: args.seed,
        td: !args.no_td,
        td_steps: args.td_steps,
        td_gamma: args.td_gamma,
        fault: args.fault.as_ref().map(|_| Fault::SignFlip),
        ..VerifyConfig::default()
    };
    let report = verify_suite(&cfg)?;
    let text = serde_json::to_string_pretty(&report).map_err(|e| CliError::Failure(e.to_string()))?;
    if let Some(path) = &args.out {
        write_file(path, &text)?;
    }
    println!("{text}");
    if report.pass {
        Ok(())
    } else {
        Err(CliError::Failure(format!("{} tabular propert{} failed", report.failures, if report.failures == 1 { "y" } else { "ies" })))
    }
}

fn demos(cmd: &DemosCommand) -> Result<(), CliError> {
    match cmd {
        DemosCommand::Generate { env, n, seed, noise, out } => {
            check_env(env)?;
            let stochasticity = match noise {
                Some(sigma) => Stochasticity::Gaussian { sigma: *sigma },
                None => Stochasticity::Deterministic,
            };
            let expert = ExpertController::for_env(env, stochasticity)?;
            let set = generate_demos(env, &expert, *n, *seed)?;
            save_demos(&set, out)?;
            print_json(&set.header())
        }
        DemosCommand::Subsample { input, k, seed, out } => {
            let set = subsample(&load_demos(input)?, *k, *seed)?;
            save_demos(&set, out)?;
            print_json(&set.header())
        }
        DemosCommand::Inspect { path } => {
            let set = load_demos(path)?;
            let lengths: Vec<usize> = set.trajectories.iter().map(|t| t.len()).collect();
            print_json(&json!({
                "header": set.header(),
                "n_pairs": set.n_pairs(),
                "min_length": lengths.iter().min(),
                "max_length": lengths.iter().max(),
            }))
        }
    }
}

fn disc(cmd: &DiscCommand) -> Result<(), CliError> {
    let DiscCommand::Pretrain { seed, save, config } = cmd;
    let cfg = config.load(&[])?;
    let path = cfg.demo_path.as_ref().ok_or_else(|| CliError::Config("--demos is required".into()))?;
    let set = load_demos(path)?;
    let (disc, report) = pretrain_discriminator(&set, &cfg.disc, *seed)?;
    disc.save(save)?;
    print_json(&json!({
        "env_id": set.env_id,
        "final_loss": report.final_loss,
        "train_accuracy": report.train_accuracy,
        "warnings": report.warnings,
        "threshold": disc.threshold(),
    }))
}

fn envs(cmd: &EnvsCommand) -> Result<(), CliError> {
    match cmd {
        EnvsCommand::Describe { env } => {
            let mut out = Vec::new();
            for id in envs_or_all(env)? {
                let e = make_env(&id)?;
                let constants: serde_json::Map<String, serde_json::Value> =
                    e.constants().into_iter().map(|(k, v)| (k.to_string(), json!(v))).collect();
                out.push(json!({"spec": e.spec(), "constants": constants, "expert_mean_return": expert_mean_return(&id)}));
            }
            print_json(&out)
        }
        EnvsCommand::Calibrate { env, episodes, seed } => {
            let mut out = Vec::new();
            for id in envs_or_all(env)? {
                let (mean, std) = calibrate_expert(&id, *episodes, *seed)?;
                out.push(json!({"env_id": id, "episodes": episodes, "seed": seed, "mean": mean, "std": std,
                    "committed_mean": expert_mean_return(&id)}));
            }
            print_json(&out)
        }
    }
}

fn dispatch(cli: Cli) -> Result<(), CliError> {
    match cli.command {
        Command::VerifyTabular(args) => verify(&args),
        Command::Demos(cmd) => demos(&cmd),
        Command::Disc(cmd) => disc(&cmd),
        Command::Run(args) => {
            let cfg = args.load(&[])?;
            let result = cmd_run(&cfg)?;
            print_json(&result.aggregate)
        }
        Command::Sweep(args) => {
            let extra: Vec<String> = args.counts.iter().map(|c| format!("sweep_counts={}", json!(c))).collect();
            let cfg = args.config.load(&extra)?;
            print_json(&cmd_sweep(&cfg)?)
        }
        Command::Envs(cmd) => envs(&cmd),
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    match dispatch(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
