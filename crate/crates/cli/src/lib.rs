//! Configuration loading and subcommand implementations for `ccsim`.

use std::fs;
use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicBool, Ordering};
use std::sync::Arc;
use std::time::Duration;

use ccsim_core::agent::PolicyFile;
use ccsim_core::config::SimConfig;
use ccsim_core::exec::Execution;
use ccsim_core::metrics::{report_json, report_table};
use ccsim_core::scenarios::UseCase;
use ccsim_core::sim::{evaluate, evaluate_suite, validate_benchmarks, Controller, Mode, SimCommand, Simulation};
use ccsim_core::training::{run_training, TrainingOptions};
use ccsim_net::bridge::{BridgeConfig, BridgeHandle};
use ccsim_net::pacing::{max_jitter, Pacer};
use ccsim_net::server::{serve_until, ServerConfig};

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("{0}")]
    Usage(String),
    #[error("config {path}: {reason}")]
    Config { path: String, reason: String },
    #[error(transparent)]
    Sim(#[from] ccsim_core::Error),
    #[error(transparent)]
    Net(#[from] ccsim_net::NetError),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T, E = CliError> = std::result::Result<T, E>;

/// Everything a config file may hold: the simulator sections plus an
/// optional `[bridge]` table for the RF emulator.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct FileConfig {
    pub sim: SimConfig,
    pub bridge: Option<BridgeConfig>,
}

impl FileConfig {
    pub fn from_toml_str(text: &str) -> Result<Self, String> {
        let mut table: toml::Table = text.parse().map_err(|e: toml::de::Error| e.to_string())?;
        let bridge = match table.remove("bridge") {
            Some(v) => Some(v.try_into::<BridgeConfig>().map_err(|e| format!("[bridge]: {e}"))?),
            None => None,
        };
        if let Some(b) = &bridge {
            b.validate().map_err(|e| e.to_string())?;
        }
        let rest = toml::to_string(&table).map_err(|e| e.to_string())?;
        let sim = SimConfig::from_toml_str(&rest).map_err(|e| e.to_string())?;
        Ok(Self { sim, bridge })
    }

    pub fn load(path: Option<&Path>) -> Result<Self> {
        let Some(path) = path else {
            return Ok(Self::default());
        };
        let err = |reason: String| CliError::Config {
            path: path.display().to_string(),
            reason,
        };
        let text = fs::read_to_string(path).map_err(|e| err(e.to_string()))?;
        Self::from_toml_str(&text).map_err(err)
    }

    /// Bridge settings with command-line overrides applied.
    pub fn bridge_with(&self, host: Option<&str>, port: Option<u16>) -> Option<BridgeConfig> {
        if self.bridge.is_none() && host.is_none() && port.is_none() {
            return None;
        }
        let mut b = self.bridge.clone().unwrap_or_default();
        if let Some(h) = host {
            b.host = h.to_string();
        }
        if let Some(p) = port {
            b.port = p;
        }
        Some(b)
    }
}

/// Stop flag raised by Ctrl-C. Installing twice is harmless.
pub fn interrupt_flag() -> Arc<AtomicBool> {
    let flag = Arc::new(AtomicBool::new(false));
    let f = Arc::clone(&flag);
    if let Err(e) = ctrlc::set_handler(move || f.store(true, Ordering::SeqCst)) {
        log::warn!("Ctrl-C handler not installed: {e}");
    }
    flag
}

fn wait_for(flag: &AtomicBool) {
    while !flag.load(Ordering::SeqCst) {
        std::thread::sleep(Duration::from_millis(50));
    }
}

fn load_policy(path: &Path) -> Result<PolicyFile> {
    PolicyFile::load(path).map_err(|e| CliError::Usage(format!("policy {}: {e}", path.display())))
}

fn policy_id(path: &Path) -> String {
    path.file_stem()
        .map_or_else(|| "policy".into(), |s| s.to_string_lossy().into_owned())
}

pub struct TrainArgs {
    pub seed: u64,
    pub out: PathBuf,
    pub log: Option<PathBuf>,
    pub serve: Option<String>,
    pub speed: f64,
}

pub fn train(cfg: &FileConfig, args: &TrainArgs) -> Result<()> {
    let stop = interrupt_flag();
    if let Some(addr) = &args.serve {
        let mut sim = Simulation::new(cfg.sim.clone(), args.seed)?;
        sim.apply(SimCommand::SetMode { mode: Mode::Training })?;
        let server = serve_until(sim, server_config(addr, args.speed), Arc::clone(&stop))?;
        println!("serving training on {}; Ctrl-C to stop", server.url());
        wait_for(&stop);
        let sim = server
            .shutdown()
            .ok_or_else(|| CliError::Usage("simulation thread panicked".into()))?;
        if let Some(p) = sim.policy() {
            PolicyFile::from_network(p, (&cfg.sim.chamber).into()).save(&args.out)?;
            println!("policy written to {}", args.out.display());
        }
        return Ok(());
    }
    let outcome = run_training(
        &cfg.sim,
        args.seed,
        &TrainingOptions {
            stop: Some(stop),
            checkpoint: Some(args.out.clone()),
            keep_step_log: args.log.is_some(),
            exec: None,
        },
    )?;
    outcome.policy_file().save(&args.out)?;
    if let Some(log_path) = &args.log {
        outcome.record.write_csv(fs::File::create(log_path)?)?;
    }
    for e in &outcome.record.episodes {
        println!(
            "episode {}: {} steps, mean reward {:.4}, NLoS steps {}",
            e.episode, e.steps, e.mean_reward, e.nlos_steps
        );
    }
    let state = if outcome.interrupted {
        "interrupted; checkpoint"
    } else {
        "policy"
    };
    println!("{state} written to {}", args.out.display());
    Ok(())
}

fn server_config(addr: &str, speed: f64) -> ServerConfig {
    ServerConfig {
        bind: addr.to_string(),
        speed,
        ..ServerConfig::default()
    }
}

pub struct SimulateArgs {
    pub policy: Option<PathBuf>,
    pub seed: u64,
    pub use_case: UseCase,
    pub mode: Mode,
    pub serve: Option<String>,
    pub speed: f64,
    pub out: Option<PathBuf>,
}

pub fn simulate(cfg: &FileConfig, args: &SimulateArgs) -> Result<()> {
    if let Some(addr) = &args.serve {
        let mut sim = Simulation::new(cfg.sim.clone(), args.seed)?;
        if let Some(p) = &args.policy {
            sim = sim.with_policy_file(&load_policy(p)?)?;
        }
        if let Some(b) = cfg.bridge_with(None, None) {
            sim = sim.with_sink(Box::new(BridgeHandle::start(b)?));
        }
        sim.apply(SimCommand::ResetScenario {
            name: args.use_case.to_string(),
        })?;
        sim.apply(SimCommand::SetMode { mode: args.mode })?;
        let stop = interrupt_flag();
        let server = serve_until(sim, server_config(addr, args.speed), Arc::clone(&stop))?;
        println!("serving on {}; Ctrl-C to stop", server.url());
        wait_for(&stop);
        server.shutdown();
        return Ok(());
    }
    let controller = match &args.policy {
        Some(p) => {
            let file = load_policy(p)?;
            Controller::policy(file.to_network()?, file.normalization)
        }
        None => Controller::Static,
    };
    let id = args.policy.as_deref().map_or_else(|| "static".into(), policy_id);
    let ev = evaluate(&cfg.sim, args.use_case, &controller, &id, args.seed)?;
    match &args.out {
        Some(path) => {
            ev.controlled.write_csv(fs::File::create(path)?)?;
            println!("trace written to {}", path.display());
        }
        None => print!("{}", ev.controlled.to_csv_string()?),
    }
    Ok(())
}

pub struct LiveArgs {
    pub policy: Option<PathBuf>,
    pub seed: u64,
    pub use_case: UseCase,
    pub rf_host: Option<String>,
    pub rf_port: Option<u16>,
    pub serve: Option<String>,
    pub ticks: Option<usize>,
}

pub fn live(cfg: &FileConfig, args: &LiveArgs) -> Result<()> {
    let bridge_cfg = cfg.bridge_with(args.rf_host.as_deref(), args.rf_port).ok_or_else(|| {
        CliError::Usage("bridge not configured: pass --rf-host/--rf-port or a [bridge] section".into())
    })?;
    let bridge = BridgeHandle::start(bridge_cfg)?;
    let mut sim = Simulation::new(cfg.sim.clone(), args.seed)?;
    if let Some(p) = &args.policy {
        sim = sim.with_policy_file(&load_policy(p)?)?;
    }
    sim = sim.with_sink(Box::new(bridge));
    sim.apply(SimCommand::ResetScenario {
        name: args.use_case.to_string(),
    })?;
    sim.apply(SimCommand::SetMode { mode: Mode::Live })?;
    let stop = interrupt_flag();
    if let Some(addr) = &args.serve {
        let server = serve_until(sim, server_config(addr, 1.0), Arc::clone(&stop))?;
        println!("serving live on {}; Ctrl-C to stop", server.url());
        wait_for(&stop);
        server.shutdown();
        return Ok(());
    }
    let ticks = args.ticks.unwrap_or(usize::MAX);
    let period = Duration::from_secs_f64(cfg.sim.chamber.tick);
    let mut pacer = Pacer::new(period);
    let mut times = Vec::new();
    while times.len() < ticks && !stop.load(Ordering::SeqCst) {
        times.push(pacer.wait());
        sim.tick()?;
        for ev in sim.drain_events() {
            log::info!("{ev:?}");
        }
    }
    let ran = times.len();
    println!(
        "{ran} ticks; final path loss {:.1} dB; max tick jitter {:.2} ms; mode {}",
        sim.world().path_loss,
        max_jitter(&times, period).as_secs_f64() * 1e3,
        sim.mode()
    );
    Ok(())
}

pub struct EvalArgs {
    pub policy: PathBuf,
    pub seed: u64,
    pub out: PathBuf,
    pub use_cases: Vec<UseCase>,
}

/// Runs the use-case suite, writing `<test>_rl.csv`, `<test>_static.csv`
/// and `report.json` into `args.out`. Returns the report table.
pub fn eval(cfg: &FileConfig, args: &EvalArgs) -> Result<String> {
    validate_benchmarks(&cfg.sim)?;
    let file = load_policy(&args.policy)?;
    let controller = Controller::policy(file.to_network()?, file.normalization);
    let evals = evaluate_suite(
        &cfg.sim,
        &args.use_cases,
        &controller,
        &policy_id(&args.policy),
        args.seed,
        Execution::default(),
    )?;
    fs::create_dir_all(&args.out)?;
    let mut reports = Vec::new();
    for ev in &evals {
        let stem = ev.use_case.to_string();
        ev.controlled
            .write_csv(fs::File::create(args.out.join(format!("{stem}_rl.csv")))?)?;
        ev.baseline
            .write_csv(fs::File::create(args.out.join(format!("{stem}_static.csv")))?)?;
        reports.push(ev.report()?);
    }
    fs::write(args.out.join("report.json"), report_json(&reports)?)?;
    Ok(report_table(&reports))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn splits_bridge_section() {
        let cfg = FileConfig::from_toml_str(
            "[chamber]\nnlos_attenuation = 15.0\n[bridge]\nport = 5000\nmin_interval = 0.5\n",
        )
        .unwrap();
        assert_eq!(cfg.sim.chamber.nlos_attenuation, 15.0);
        let b = cfg.bridge.unwrap();
        assert_eq!((b.port, b.min_interval), (5000, 0.5));
        assert_eq!(b.host, "127.0.0.1");
    }

    #[test]
    fn rejects_bad_sections() {
        assert!(FileConfig::from_toml_str("[bridge]\ncommand_template = \"x\"\n").is_err());
        assert!(FileConfig::from_toml_str("[bridge]\nbogus = 1\n").is_err());
        assert!(FileConfig::from_toml_str("[nonsense]\na = 1\n").is_err());
        assert_eq!(FileConfig::from_toml_str("").unwrap(), FileConfig::default());
    }

    #[test]
    fn flags_override_bridge() {
        let cfg = FileConfig::default();
        assert!(cfg.bridge_with(None, None).is_none());
        let b = cfg.bridge_with(Some("10.0.0.2"), None).unwrap();
        assert_eq!((b.host.as_str(), b.port), ("10.0.0.2", 9090));
    }
}
