use std::path::PathBuf;
use std::process::ExitCode;

use ccsim_cli::{eval, live, simulate, train, EvalArgs, FileConfig, LiveArgs, SimulateArgs, TrainArgs};
use ccsim_core::scenarios::UseCase;
use ccsim_core::sim::Mode;
use clap::{Args, Parser, Subcommand};

/// Chamber simulator with a DQN-controlled mobile gNB.
#[derive(Parser)]
#[command(name = "ccsim", version)]
struct Cli {
    /// TOML config; omitted sections take their defaults.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    #[arg(long, global = true, default_value_t = 1)]
    seed: u64,
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct ServeOpts {
    /// Serve the websocket control interface on this address.
    #[arg(long, value_name = "ADDR:PORT")]
    serve: Option<String>,
    /// Simulated seconds per wall-clock second when serving; 0 = unpaced.
    #[arg(long, default_value_t = 1.0)]
    speed: f64,
}

#[derive(Subcommand)]
enum Command {
    /// Train a policy over the scenario schedule.
    Train {
        /// Policy file to write; also the checkpoint on Ctrl-C.
        #[arg(long, default_value = "policy.json")]
        out: PathBuf,
        /// Per-step training log CSV.
        #[arg(long)]
        log: Option<PathBuf>,
        #[command(flatten)]
        serve: ServeOpts,
    },
    /// Run one use case headless, or serve an interactive simulation.
    Simulate {
        #[arg(long)]
        policy: Option<PathBuf>,
        #[arg(long = "use-case", default_value = "S")]
        use_case: UseCase,
        /// Initial mode when serving.
        #[arg(long, default_value = "simulation")]
        mode: Mode,
        /// Trace CSV to write (headless only); stdout otherwise.
        #[arg(long)]
        out: Option<PathBuf>,
        #[command(flatten)]
        serve: ServeOpts,
    },
    /// Run in real time, exporting path loss to the RF emulator.
    Live {
        #[arg(long)]
        policy: Option<PathBuf>,
        #[arg(long = "use-case", default_value = "S")]
        use_case: UseCase,
        #[arg(long = "rf-host")]
        rf_host: Option<String>,
        #[arg(long = "rf-port")]
        rf_port: Option<u16>,
        /// Stop after this many ticks (default: until Ctrl-C).
        #[arg(long)]
        ticks: Option<usize>,
        #[arg(long, value_name = "ADDR:PORT")]
        serve: Option<String>,
    },
    /// Evaluate a policy on every use case against the static baseline.
    Eval {
        #[arg(long)]
        policy: PathBuf,
        /// Output directory for traces and report.json.
        #[arg(long, default_value = "eval")]
        out: PathBuf,
        /// Subset of use cases (default: all).
        #[arg(long = "use-case")]
        use_cases: Vec<UseCase>,
    },
}

fn run(cli: Cli) -> ccsim_cli::Result<()> {
    let cfg = FileConfig::load(cli.config.as_deref())?;
    match cli.command {
        Command::Train { out, log, serve } => train(
            &cfg,
            &TrainArgs {
                seed: cli.seed,
                out,
                log,
                serve: serve.serve,
                speed: serve.speed,
            },
        ),
        Command::Simulate {
            policy,
            use_case,
            mode,
            out,
            serve,
        } => simulate(
            &cfg,
            &SimulateArgs {
                policy,
                seed: cli.seed,
                use_case,
                mode,
                serve: serve.serve,
                speed: serve.speed,
                out,
            },
        ),
        Command::Live {
            policy,
            use_case,
            rf_host,
            rf_port,
            ticks,
            serve,
        } => live(
            &cfg,
            &LiveArgs {
                policy,
                seed: cli.seed,
                use_case,
                rf_host,
                rf_port,
                serve,
                ticks,
            },
        ),
        Command::Eval { policy, out, use_cases } => {
            let use_cases = if use_cases.is_empty() {
                UseCase::ALL.to_vec()
            } else {
                use_cases
            };
            let table = eval(
                &cfg,
                &EvalArgs {
                    policy,
                    seed: cli.seed,
                    out,
                    use_cases,
                },
            )?;
            print!("{table}");
            Ok(())
        }
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}
