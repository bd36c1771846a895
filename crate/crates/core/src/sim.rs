//! Running controllers in the chamber: offline use-case evaluation and the
//! interactive, command-driven simulator shared by every operating mode.

use std::fmt;
use std::str::FromStr;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::agent::{
    apply_action, encode_state, evaluate_reward, greedy_action, Action, Normalizer, PolicyFile, QNetwork, RewardParams,
};
use crate::chamber::{advance, ChamberState, EntityKind, LosStatus, MotionModel};
use crate::config::SimConfig;
use crate::error::{Error, Result};
use crate::exec::Execution;
use crate::geometry::Vec2;
use crate::metrics::{compare, ComparisonReport, RunTrace, TraceMeta, TraceRecord};
use crate::scenarios::{
    build_use_case, episode_origin, instantiate_scenario, EpisodeSchedule, ScenarioId, UseCase, UseCaseSpec,
};
use crate::training::Trainer;

/// Decides the gNB's action each tick.
#[derive(Debug, Clone)]
pub enum Controller {
    /// Baseline: the gNB never moves.
    Static,
    Policy {
        network: Arc<QNetwork>,
        normalizer: Normalizer,
    },
}

impl Controller {
    pub fn policy(network: QNetwork, normalizer: Normalizer) -> Self {
        Controller::Policy {
            network: Arc::new(network),
            normalizer,
        }
    }

    /// Next gNB velocity and the action that produced it (none for the baseline).
    pub fn decide(&self, state: &ChamberState, spec: &UseCaseSpec) -> Result<(f64, Option<Action>)> {
        match self {
            Controller::Static => Ok((0.0, None)),
            Controller::Policy { network, normalizer } => {
                let a = greedy_action(network, &encode_state(state).normalized(normalizer))?;
                Ok((apply_action(state.gnb.velocity.x, a, &spec.chamber), Some(a)))
            }
        }
    }
}

fn record_of(state: &ChamberState, action: Option<Action>, reward: f64) -> TraceRecord {
    TraceRecord {
        tick: state.tick_index,
        gnb_x: state.gnb.position.x,
        ue_x: state.ue.position.x,
        ue_y: state.ue.position.y,
        obs_x: state.obstacle.position.x,
        obs_y: state.obstacle.position.y,
        los: state.los.flag(),
        path_loss: state.path_loss,
        action: action.map(|a| a.id() as u8),
        reward,
    }
}

fn describe_initial(s: &ChamberState) -> String {
    format!(
        "gnb_x:{} ue:({},{}) obstacle:({},{}) obstacle_half:({},{})",
        s.gnb.position.x,
        s.ue.position.x,
        s.ue.position.y,
        s.obstacle.position.x,
        s.obstacle.position.y,
        s.obstacle.half_size.x,
        s.obstacle.half_size.y
    )
}

/// Runs `controller` from the use case's initial world for `run_ticks`
/// records (tick 0 is the initial state).
pub fn run_use_case(spec: &UseCaseSpec, controller: &Controller, reward: &RewardParams) -> Result<Vec<TraceRecord>> {
    let mut state = spec.initial.clone();
    let mut records = Vec::with_capacity(spec.run_ticks);
    records.push(record_of(&state, None, evaluate_reward(&state, reward)));
    for _ in 1..spec.run_ticks {
        let (v, action) = controller.decide(&state, spec)?;
        state = advance(&state, v, &spec.chamber);
        records.push(record_of(&state, action, evaluate_reward(&state, reward)));
    }
    Ok(records)
}

/// A controlled run and its static baseline on the same use case.
#[derive(Debug, Clone)]
pub struct Evaluation {
    pub use_case: UseCase,
    pub controlled: RunTrace,
    pub baseline: RunTrace,
}

impl Evaluation {
    pub fn report(&self) -> Result<ComparisonReport> {
        compare(&self.controlled, &self.baseline)
    }
}

pub fn evaluate(
    cfg: &SimConfig,
    use_case: UseCase,
    policy: &Controller,
    policy_id: &str,
    seed: u64,
) -> Result<Evaluation> {
    let spec = build_use_case(use_case, cfg)?;
    let reward = RewardParams::new(&cfg.training, &cfg.chamber);
    let meta = |policy_id: &str| TraceMeta {
        use_case: use_case.to_string(),
        policy_id: policy_id.to_string(),
        seed,
        config_hash: cfg.hash(),
        tick_seconds: cfg.chamber.tick,
        initial: describe_initial(&spec.initial),
    };
    Ok(Evaluation {
        use_case,
        controlled: RunTrace {
            meta: meta(policy_id),
            records: run_use_case(&spec, policy, &reward)?,
        },
        baseline: RunTrace {
            meta: meta("static"),
            records: run_use_case(&spec, &Controller::Static, &reward)?,
        },
    })
}

pub fn evaluate_suite(
    cfg: &SimConfig,
    use_cases: &[UseCase],
    policy: &Controller,
    policy_id: &str,
    seed: u64,
    exec: Execution,
) -> Result<Vec<Evaluation>> {
    exec.map(use_cases, |&uc| evaluate(cfg, uc, policy, policy_id, seed))
        .into_iter()
        .collect()
}

/// Rejects configurations whose O/U baselines never lose LoS, which would
/// make the comparison vacuous.
pub fn validate_benchmarks(cfg: &SimConfig) -> Result<()> {
    let reward = RewardParams::new(&cfg.training, &cfg.chamber);
    for uc in UseCase::COMPARISONS {
        let spec = build_use_case(uc, cfg)?;
        let trace = run_use_case(&spec, &Controller::Static, &reward)?;
        if !trace.iter().any(|r| r.los == 1) {
            return Err(Error::Benchmark(format!(
                "static baseline for {uc} is never obstructed"
            )));
        }
    }
    Ok(())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Mode {
    Training,
    Simulation,
    Live,
}

impl fmt::Display for Mode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Mode::Training => "training",
            Mode::Simulation => "simulation",
            Mode::Live => "live",
        })
    }
}

impl FromStr for Mode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "training" | "train" => Ok(Mode::Training),
            "simulation" | "simulate" => Ok(Mode::Simulation),
            "live" => Ok(Mode::Live),
            other => Err(Error::Command(format!("unknown mode `{other}`"))),
        }
    }
}

/// Receives path loss values for export (the RF bridge in live mode).
/// Implementations must not block.
pub trait PathLossSink: Send {
    fn offer(&self, value_db: f64, tick: u64);

    /// Link status changes since the last call, oldest first.
    fn drain_status(&self) -> Vec<String> {
        Vec::new()
    }

    /// True once the sink has given up on its endpoint.
    fn is_failed(&self) -> bool {
        false
    }
}

/// Operator commands; applied between ticks.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum SimCommand {
    SetVelocity { entity: EntityKind, vx: f64 },
    SetMotionModel { entity: EntityKind, motion: MotionModel },
    Pause,
    Resume,
    StepOnce,
    SetMode { mode: Mode },
    LoadPolicy { path: String },
    SetActionOverride { action: Action },
    ResetScenario { name: String },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum SimEvent {
    ScenarioTransition {
        scenario: String,
    },
    ModeChanged {
        mode: Mode,
    },
    TrainingComplete {
        episodes: usize,
    },
    BridgeStatus {
        status: String,
    },
    /// A transport discarded snapshots for a slow client.
    SnapshotsDropped {
        count: u64,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EntityView {
    pub id: String,
    pub kind: EntityKind,
    pub position: [f64; 2],
    pub velocity: [f64; 2],
    pub half_size: [f64; 2],
}

/// Per-tick view of the simulator, streamed to operators.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Snapshot {
    pub tick: u64,
    pub mode: Mode,
    pub paused: bool,
    pub scenario: String,
    pub entities: Vec<EntityView>,
    pub los: LosStatus,
    pub path_loss: f64,
    pub d_ue: f64,
    pub d_oc_norm: Option<f64>,
    pub reward: f64,
    pub last_action: Option<Action>,
    pub epsilon: Option<f64>,
}

fn view(kind: EntityKind, state: &ChamberState) -> EntityView {
    let e = state.entity(kind);
    EntityView {
        id: kind.as_str().to_string(),
        kind,
        position: [e.position.x, e.position.y],
        velocity: [e.velocity.x, e.velocity.y],
        half_size: [e.half_size.x, e.half_size.y],
    }
}

/// The interactive simulator. One thread owns it; commands and ticks are
/// interleaved by the caller, so every command lands on a tick boundary.
pub struct Simulation {
    cfg: SimConfig,
    seed: u64,
    mode: Mode,
    world: ChamberState,
    label: String,
    spec_chamber: crate::config::ChamberConfig,
    policy: Option<Arc<QNetwork>>,
    normalizer: Normalizer,
    reward: RewardParams,
    trainer: Option<Box<Trainer>>,
    override_action: Option<Action>,
    paused: bool,
    pending_steps: usize,
    sink: Option<Box<dyn PathLossSink>>,
    last_action: Option<Action>,
    last_reward: f64,
    events: Vec<SimEvent>,
}

impl Simulation {
    /// Starts in simulation mode on use case S with no policy loaded.
    pub fn new(cfg: SimConfig, seed: u64) -> Result<Self> {
        cfg.validate()?;
        let spec = build_use_case(UseCase::S, &cfg)?;
        let reward = RewardParams::new(&cfg.training, &cfg.chamber);
        Ok(Self {
            seed,
            mode: Mode::Simulation,
            last_reward: evaluate_reward(&spec.initial, &reward),
            world: spec.initial,
            label: UseCase::S.to_string(),
            spec_chamber: cfg.chamber.clone(),
            policy: None,
            normalizer: Normalizer::from(&cfg.chamber),
            reward,
            trainer: None,
            override_action: None,
            paused: false,
            pending_steps: 0,
            sink: None,
            last_action: None,
            events: Vec::new(),
            cfg,
        })
    }

    pub fn with_policy(mut self, policy: QNetwork) -> Self {
        self.policy = Some(Arc::new(policy));
        self
    }

    /// Uses the policy and its recorded input normalization.
    pub fn with_policy_file(mut self, file: &PolicyFile) -> Result<Self> {
        self.install_policy(file)?;
        Ok(self)
    }

    fn install_policy(&mut self, file: &PolicyFile) -> Result<()> {
        let net = file.to_network()?;
        if net.input_dim() != crate::agent::STATE_DIM || net.output_dim() != crate::agent::NUM_ACTIONS {
            return Err(Error::Policy("network must map 11 inputs to 3 outputs".into()));
        }
        self.policy = Some(Arc::new(net));
        self.normalizer = file.normalization;
        Ok(())
    }

    pub fn with_sink(mut self, sink: Box<dyn PathLossSink>) -> Self {
        self.sink = Some(sink);
        self
    }

    pub fn config(&self) -> &SimConfig {
        &self.cfg
    }

    pub fn mode(&self) -> Mode {
        self.mode
    }

    pub fn is_paused(&self) -> bool {
        self.paused
    }

    pub fn world(&self) -> &ChamberState {
        match &self.trainer {
            Some(t) if self.mode == Mode::Training => t.world(),
            _ => &self.world,
        }
    }

    fn world_mut(&mut self) -> &mut ChamberState {
        match &mut self.trainer {
            Some(t) if self.mode == Mode::Training => t.world_mut(),
            _ => &mut self.world,
        }
    }

    pub fn policy(&self) -> Option<&QNetwork> {
        self.policy.as_deref()
    }

    pub fn has_sink(&self) -> bool {
        self.sink.is_some()
    }

    pub fn drain_events(&mut self) -> Vec<SimEvent> {
        if let Some(sink) = &self.sink {
            let statuses = sink.drain_status();
            self.events
                .extend(statuses.into_iter().map(|status| SimEvent::BridgeStatus { status }));
        }
        std::mem::take(&mut self.events)
    }

    /// Whether the driver should run a tick now.
    pub fn wants_tick(&self) -> bool {
        !self.paused || self.pending_steps > 0
    }

    pub fn apply(&mut self, cmd: SimCommand) -> Result<()> {
        match cmd {
            SimCommand::SetVelocity { entity, vx } => self.set_velocity(entity, vx),
            SimCommand::SetMotionModel { entity, motion } => {
                if entity == EntityKind::Gnb && motion != MotionModel::Controlled {
                    return Err(Error::Command("the gNB only supports controlled motion".into()));
                }
                motion.validate(&self.cfg.chamber)?;
                let w = self.world_mut();
                let e = w.entity(entity).clone();
                *w.entity_mut(entity) = e.with_motion(motion, 1.0);
                self.refresh_world();
                Ok(())
            }
            SimCommand::Pause => {
                self.paused = true;
                self.pending_steps = 0;
                Ok(())
            }
            SimCommand::Resume => {
                self.paused = false;
                Ok(())
            }
            SimCommand::StepOnce => {
                if !self.paused {
                    return Err(Error::Command("step_once requires a paused simulation".into()));
                }
                self.pending_steps += 1;
                Ok(())
            }
            SimCommand::SetMode { mode } => self.set_mode(mode),
            SimCommand::LoadPolicy { path } => {
                let file = PolicyFile::load(&path).map_err(|e| Error::Policy(format!("{path}: {e}")))?;
                self.install_policy(&file)
            }
            SimCommand::SetActionOverride { action } => {
                self.override_action = Some(action);
                Ok(())
            }
            SimCommand::ResetScenario { name } => self.reset(&name),
        }
    }

    fn refresh_world(&mut self) {
        let chamber = self.spec_chamber.clone();
        self.world_mut().refresh(&chamber);
    }

    fn set_velocity(&mut self, entity: EntityKind, vx: f64) -> Result<()> {
        let c = self.cfg.chamber.clone();
        if !vx.is_finite() {
            return Err(Error::Command("velocity must be finite".into()));
        }
        let limit = if entity == EntityKind::Gnb {
            c.v_gnb_max
        } else {
            c.v_object_max
        };
        if vx.abs() > limit + 1e-12 {
            return Err(Error::Command(format!(
                "|vx| = {} exceeds the {limit} m/s limit for {}",
                vx.abs(),
                entity.as_str()
            )));
        }
        let w = self.world_mut();
        let e = w.entity(entity).clone();
        *w.entity_mut(entity) = match entity {
            EntityKind::Gnb => {
                let mut g = e;
                g.velocity = Vec2::new(vx, 0.0);
                g
            }
            _ if vx == 0.0 => e.with_motion(MotionModel::Static, 1.0),
            _ => {
                let hx = e.half_size.x;
                e.with_motion(
                    MotionModel::BounceX {
                        speed: vx.abs(),
                        min_x: hx,
                        max_x: c.width - hx,
                    },
                    vx,
                )
            }
        };
        Ok(())
    }

    fn set_mode(&mut self, mode: Mode) -> Result<()> {
        if mode == self.mode {
            return Ok(());
        }
        match mode {
            Mode::Live if self.sink.is_none() => return Err(Error::Command("bridge not configured".into())),
            Mode::Training => {
                self.trainer = Some(Box::new(Trainer::new(&self.cfg, self.seed)?));
                self.label = ScenarioId::A.to_string();
            }
            Mode::Simulation | Mode::Live => {
                if let Some(t) = self.trainer.take() {
                    self.world = t.world().clone();
                    self.policy = Some(Arc::new(t.policy().clone()));
                }
            }
        }
        self.mode = mode;
        self.events.push(SimEvent::ModeChanged { mode });
        Ok(())
    }

    fn reset(&mut self, name: &str) -> Result<()> {
        if self.mode == Mode::Training {
            return Err(Error::Command(
                "scenarios are scheduled automatically in training mode".into(),
            ));
        }
        if let Ok(uc) = name.parse::<UseCase>() {
            let spec = build_use_case(uc, &self.cfg)?;
            self.world = spec.initial;
        } else {
            let id: ScenarioId = name.parse()?;
            let schedule = EpisodeSchedule::from_config(&self.cfg);
            let spec = schedule
                .specs()
                .iter()
                .find(|s| s.id == id)
                .expect("every scenario is scheduled");
            let mut rng = <rand_chacha::ChaCha8Rng as rand::SeedableRng>::seed_from_u64(self.seed);
            self.world = instantiate_scenario(spec, &episode_origin(&self.cfg)?, &self.cfg.chamber, &mut rng);
        }
        self.label = name.to_string();
        self.last_action = None;
        self.last_reward = evaluate_reward(&self.world, &self.reward);
        self.events.push(SimEvent::ScenarioTransition {
            scenario: name.to_string(),
        });
        Ok(())
    }

    /// Advances one tick in the current mode.
    pub fn tick(&mut self) -> Result<()> {
        if self.paused {
            self.pending_steps = self.pending_steps.saturating_sub(1);
        }
        let forced = self.override_action.take();
        if self.mode == Mode::Training {
            let trainer = self.trainer.as_mut().expect("training mode has a trainer");
            let t = trainer.step(forced)?;
            if let Some(s) = t.entered {
                self.label = s.to_string();
                self.events.push(SimEvent::ScenarioTransition {
                    scenario: s.to_string(),
                });
            }
            self.last_action = Some(t.action);
            self.last_reward = t.reward;
            if trainer.is_finished() {
                let episodes = trainer.record().episodes.len();
                self.events.push(SimEvent::TrainingComplete { episodes });
                self.set_mode(Mode::Simulation)?;
            }
            return Ok(());
        }
        let action = match (forced, &self.policy) {
            (Some(a), _) => Some(a),
            (None, Some(p)) => Some(greedy_action(
                p,
                &encode_state(&self.world).normalized(&self.normalizer),
            )?),
            (None, None) => None,
        };
        let v = match action {
            Some(a) => apply_action(self.world.gnb.velocity.x, a, &self.cfg.chamber),
            None => self.world.gnb.velocity.x,
        };
        self.world = advance(&self.world, v, &self.cfg.chamber);
        self.last_action = action;
        self.last_reward = evaluate_reward(&self.world, &self.reward);
        if self.mode == Mode::Live {
            if let Some(sink) = &self.sink {
                if sink.is_failed() {
                    log::warn!("rf bridge unreachable; falling back to simulation mode");
                    self.mode = Mode::Simulation;
                    self.events.push(SimEvent::ModeChanged { mode: Mode::Simulation });
                } else {
                    sink.offer(self.world.path_loss, self.world.tick_index);
                }
            }
        }
        Ok(())
    }

    pub fn snapshot(&self) -> Snapshot {
        let w = self.world();
        let (tick, epsilon) = match (&self.trainer, self.mode) {
            (Some(t), Mode::Training) => (t.global_step(), Some(t.epsilon())),
            _ => (w.tick_index, None),
        };
        Snapshot {
            tick,
            mode: self.mode,
            paused: self.paused,
            scenario: self.label.clone(),
            entities: [EntityKind::Gnb, EntityKind::Ue, EntityKind::Obstacle]
                .into_iter()
                .map(|k| view(k, w))
                .collect(),
            los: w.los,
            path_loss: w.path_loss,
            d_ue: w.d_ue,
            d_oc_norm: w.d_oc_norm,
            reward: self.last_reward,
            last_action: self.last_action,
            epsilon,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::chamber::path_loss;
    use std::sync::Mutex;

    #[derive(Clone, Default)]
    struct Recorder(Arc<Mutex<Vec<(f64, u64)>>>);

    impl PathLossSink for Recorder {
        fn offer(&self, value_db: f64, tick: u64) {
            self.0.lock().unwrap().push((value_db, tick));
        }
    }

    fn cfg() -> SimConfig {
        SimConfig::default()
    }

    #[test]
    fn baseline_stays_put() {
        let spec = build_use_case(UseCase::O1, &cfg()).unwrap();
        let reward = RewardParams::new(&cfg().training, &cfg().chamber);
        let recs = run_use_case(&spec, &Controller::Static, &reward).unwrap();
        assert_eq!(recs.len(), 75);
        assert!(recs.iter().all(|r| r.gnb_x == 4.0 && r.action.is_none()));
        assert!(recs.iter().any(|r| r.los == 1));
        assert_eq!(
            recs.iter().map(|r| r.tick).collect::<Vec<_>>(),
            (0..75).collect::<Vec<u64>>()
        );
    }

    #[test]
    fn default_benchmarks_are_not_vacuous() {
        validate_benchmarks(&cfg()).unwrap();
        let mut c = cfg();
        c.world.obstacle.y = 4.5;
        c.world.ue.y = 3.0;
        assert!(validate_benchmarks(&c).is_err());
    }

    #[test]
    fn evaluation_is_deterministic() {
        let mut rng = <rand_chacha::ChaCha8Rng as rand::SeedableRng>::seed_from_u64(1);
        let ctl = Controller::policy(QNetwork::new(&mut rng), Normalizer::from(&cfg().chamber));
        let a = evaluate_suite(&cfg(), &UseCase::ALL, &ctl, "p", 1, Execution::Parallel).unwrap();
        let b = evaluate_suite(&cfg(), &UseCase::ALL, &ctl, "p", 1, Execution::Sequential).unwrap();
        for (x, y) in a.iter().zip(&b) {
            assert_eq!(
                x.controlled.to_csv_string().unwrap(),
                y.controlled.to_csv_string().unwrap()
            );
        }
    }

    #[test]
    fn action_override_takes_precedence() {
        let mut rng = <rand_chacha::ChaCha8Rng as rand::SeedableRng>::seed_from_u64(1);
        // Output biases make the policy always pick decrement.
        let mut net = QNetwork::new(&mut rng);
        let last = net.layers_mut().len() - 1;
        let out = &mut net.layers_mut()[last];
        out.weights.iter_mut().for_each(|w| *w = 0.0);
        out.biases = vec![0.0, 0.0, 5.0];
        let mut sim = Simulation::new(cfg(), 1).unwrap().with_policy(net);
        sim.apply(SimCommand::SetActionOverride {
            action: Action::Increment,
        })
        .unwrap();
        sim.tick().unwrap();
        assert_eq!(sim.snapshot().last_action, Some(Action::Increment));
        sim.tick().unwrap();
        assert_eq!(sim.snapshot().last_action, Some(Action::Decrement));
    }

    #[test]
    fn live_requires_sink() {
        let mut sim = Simulation::new(cfg(), 1).unwrap();
        let err = sim.apply(SimCommand::SetMode { mode: Mode::Live }).unwrap_err();
        assert!(err.to_string().contains("bridge not configured"));
        let rec = Recorder::default();
        let mut sim = Simulation::new(cfg(), 1).unwrap().with_sink(Box::new(rec.clone()));
        sim.apply(SimCommand::SetMode { mode: Mode::Live }).unwrap();
        sim.tick().unwrap();
        sim.tick().unwrap();
        let got = rec.0.lock().unwrap().clone();
        assert_eq!(got.len(), 2);
        assert_eq!(got[1], (sim.world().path_loss, 2));
    }

    struct Dead;

    impl PathLossSink for Dead {
        fn offer(&self, _: f64, _: u64) {}

        fn is_failed(&self) -> bool {
            true
        }
    }

    #[test]
    fn failed_sink_degrades_to_simulation() {
        let mut sim = Simulation::new(cfg(), 1).unwrap().with_sink(Box::new(Dead));
        sim.apply(SimCommand::SetMode { mode: Mode::Live }).unwrap();
        sim.tick().unwrap();
        assert_eq!(sim.mode(), Mode::Simulation);
        assert!(sim
            .drain_events()
            .contains(&SimEvent::ModeChanged { mode: Mode::Simulation }));
    }

    #[test]
    fn set_velocity_starts_bounce() {
        let mut sim = Simulation::new(cfg(), 1).unwrap();
        sim.apply(SimCommand::SetVelocity {
            entity: EntityKind::Ue,
            vx: 0.6,
        })
        .unwrap();
        let x0 = sim.world().ue.position.x;
        sim.tick().unwrap();
        assert!((sim.world().ue.position.x - x0 - 0.12).abs() < 1e-12);
        assert!(sim
            .apply(SimCommand::SetVelocity {
                entity: EntityKind::Ue,
                vx: 0.7
            })
            .is_err());
        assert!(sim
            .apply(SimCommand::SetVelocity {
                entity: EntityKind::Gnb,
                vx: 1.5
            })
            .is_err());
    }

    #[test]
    fn pause_and_step_once() {
        let mut sim = Simulation::new(cfg(), 1).unwrap();
        assert!(sim.apply(SimCommand::StepOnce).is_err());
        sim.apply(SimCommand::Pause).unwrap();
        assert!(!sim.wants_tick());
        sim.apply(SimCommand::StepOnce).unwrap();
        assert!(sim.wants_tick());
        sim.tick().unwrap();
        assert!(!sim.wants_tick());
        sim.apply(SimCommand::Resume).unwrap();
        assert!(sim.wants_tick());
    }

    #[test]
    fn nlos_snapshot_includes_attenuation() {
        let sim = Simulation::new(cfg(), 1).unwrap();
        let snap = sim.snapshot();
        assert_eq!(snap.tick, 0);
        assert_eq!(snap.los, LosStatus::Nlos);
        let c = &cfg().chamber;
        assert!((snap.path_loss - path_loss(snap.d_ue, LosStatus::Los, c) - c.nlos_attenuation).abs() < 1e-12);
    }

    #[test]
    fn training_mode_reports_epsilon_and_scenarios() {
        let mut c = cfg();
        c.training.episodes = 1;
        c.training.episode_step_limit = 40;
        c.scenarios.durations = [10, 10, 10, 10];
        let mut sim = Simulation::new(c, 1).unwrap();
        sim.apply(SimCommand::SetMode { mode: Mode::Training }).unwrap();
        sim.tick().unwrap();
        assert!(sim.snapshot().epsilon.is_some());
        let mut events = sim.drain_events();
        for _ in 1..40 {
            sim.tick().unwrap();
            events.extend(sim.drain_events());
        }
        let scen: Vec<&SimEvent> = events
            .iter()
            .filter(|e| matches!(e, SimEvent::ScenarioTransition { .. }))
            .collect();
        assert_eq!(scen.len(), 4);
        assert!(events.contains(&SimEvent::TrainingComplete { episodes: 1 }));
        assert_eq!(sim.mode(), Mode::Simulation);
        assert!(sim.policy().is_some());
    }

    #[test]
    fn reset_scenario_by_name() {
        let mut sim = Simulation::new(cfg(), 1).unwrap();
        sim.apply(SimCommand::ResetScenario { name: "U.2".into() }).unwrap();
        assert_eq!(sim.world().ue.position.x, 6.0);
        sim.apply(SimCommand::ResetScenario { name: "B".into() }).unwrap();
        assert!(matches!(sim.world().obstacle.motion, MotionModel::BounceX { .. }));
        assert!(sim.apply(SimCommand::ResetScenario { name: "Z".into() }).is_err());
    }
}
