//! The episode-structured DQN training loop.

use std::io::Write;
use std::path::PathBuf;
use std::sync::atomic::{AtomicBool, Ordering};
use std::sync::Arc;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::agent::{
    apply_action, encode_state, epsilon_at, evaluate_reward, select_action, sync_due, Action, DqnLearner, Normalizer,
    PolicyFile, QNetwork, ReplayBuffer, RewardParams, Transition,
};
use crate::chamber::{advance, ChamberState};
use crate::config::SimConfig;
use crate::error::Result;
use crate::exec::Execution;
use crate::scenarios::{episode_origin, instantiate_scenario, EpisodeSchedule, ScenarioId};

/// One row of the per-step training log.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TrainingLogRow {
    pub step: u64,
    pub episode: usize,
    pub scenario: ScenarioId,
    pub epsilon: f64,
    pub action: u8,
    pub reward: f64,
    pub loss: Option<f64>,
    pub los: u8,
    pub path_loss: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EpisodeSummary {
    pub episode: usize,
    pub steps: usize,
    pub total_reward: f64,
    pub mean_reward: f64,
    pub nlos_steps: usize,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct TrainingRecord {
    pub seed: u64,
    pub config_hash: String,
    pub rows: Vec<TrainingLogRow>,
    pub episodes: Vec<EpisodeSummary>,
}

impl TrainingRecord {
    pub fn episode_means(&self) -> Vec<f64> {
        self.episodes.iter().map(|e| e.mean_reward).collect()
    }

    /// CSV with columns step, episode, scenario, epsilon, action, reward,
    /// loss, los, path_loss.
    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        for row in &self.rows {
            w.serialize(row)?;
        }
        w.flush()?;
        Ok(())
    }
}

/// What a single training tick did.
#[derive(Debug, Clone, PartialEq)]
pub struct TrainTick {
    pub global_step: u64,
    pub episode: usize,
    pub scenario: ScenarioId,
    /// Set when this tick entered a new scenario.
    pub entered: Option<ScenarioId>,
    pub epsilon: f64,
    pub action: Action,
    pub reward: f64,
    pub loss: Option<f64>,
    pub synced: bool,
    pub episode_done: bool,
}

/// Step-wise trainer. `run_training` drives it to completion; the
/// interactive simulator drives it one tick at a time.
#[derive(Debug, Clone)]
pub struct Trainer {
    cfg: SimConfig,
    schedule: EpisodeSchedule,
    learner: DqnLearner,
    buffer: ReplayBuffer,
    rng: ChaCha8Rng,
    reward: RewardParams,
    world: ChamberState,
    episode: usize,
    step_in_episode: usize,
    global_step: u64,
    record: TrainingRecord,
    episode_reward: f64,
    episode_nlos: usize,
    keep_rows: bool,
}

impl Trainer {
    pub fn new(cfg: &SimConfig, seed: u64) -> Result<Self> {
        cfg.validate()?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let online = QNetwork::new(&mut rng);
        let learner = DqnLearner::new(online, &cfg.training, Normalizer::from(&cfg.chamber));
        Ok(Self {
            schedule: EpisodeSchedule::from_config(cfg),
            buffer: ReplayBuffer::new(cfg.training.replay_capacity),
            reward: RewardParams::new(&cfg.training, &cfg.chamber),
            world: episode_origin(cfg)?,
            learner,
            rng,
            episode: 0,
            step_in_episode: 0,
            global_step: 0,
            record: TrainingRecord {
                seed,
                config_hash: cfg.hash(),
                ..Default::default()
            },
            episode_reward: 0.0,
            episode_nlos: 0,
            keep_rows: true,
            cfg: cfg.clone(),
        })
    }

    /// Drops the per-step log to save memory; episode summaries are kept.
    pub fn without_step_log(mut self) -> Self {
        self.keep_rows = false;
        self
    }

    pub fn with_execution(mut self, exec: Execution) -> Self {
        self.learner.exec = exec;
        self
    }

    pub fn total_steps(&self) -> usize {
        self.cfg.training.total_steps()
    }

    pub fn is_finished(&self) -> bool {
        self.episode >= self.cfg.training.episodes
    }

    pub fn global_step(&self) -> u64 {
        self.global_step
    }

    pub fn epsilon(&self) -> f64 {
        epsilon_at(self.global_step as usize, &self.cfg.training, self.total_steps())
    }

    pub fn world(&self) -> &ChamberState {
        &self.world
    }

    pub fn world_mut(&mut self) -> &mut ChamberState {
        &mut self.world
    }

    pub fn policy(&self) -> &QNetwork {
        &self.learner.online
    }

    pub fn record(&self) -> &TrainingRecord {
        &self.record
    }

    pub fn current_scenario(&self) -> ScenarioId {
        self.schedule
            .scenario_at(self.step_in_episode)
            .map(|s| s.id)
            .unwrap_or(ScenarioId::D)
    }

    /// Runs one control tick: observe, act, advance, reward, store, learn.
    /// `forced` replaces the ε-greedy choice for this tick.
    pub fn step(&mut self, forced: Option<Action>) -> Result<TrainTick> {
        let chamber = self.cfg.chamber.clone();
        if self.step_in_episode == 0 {
            self.world = episode_origin(&self.cfg)?;
        }
        let mut entered = None;
        if let Some(spec) = self.schedule.starting_at(self.step_in_episode) {
            self.world = instantiate_scenario(spec, &self.world, &chamber, &mut self.rng);
            entered = Some(spec.id);
        }
        let scenario = self.schedule.scenario_at(self.step_in_episode)?.id;

        let s = encode_state(&self.world);
        let epsilon = self.epsilon();
        let action = match forced {
            Some(a) => a,
            None => select_action(
                &self.learner.online,
                &s.normalized(&self.learner.normalizer),
                epsilon,
                &mut self.rng,
            )?,
        };
        let v = apply_action(self.world.gnb.velocity.x, action, &chamber);
        let next = advance(&self.world, v, &chamber);
        let reward = evaluate_reward(&next, &self.reward);
        let done = self.step_in_episode + 1 == self.schedule.episode_length();
        self.buffer.push(Transition {
            s,
            a: action,
            r: reward,
            s_next: encode_state(&next),
            done,
        });
        let loss = self.learner.train_step(&self.buffer, &mut self.rng);
        self.global_step += 1;
        let synced = sync_due(self.global_step, self.cfg.training.target_update_every);
        if synced {
            self.learner.sync_target()?;
        }

        if self.keep_rows {
            self.record.rows.push(TrainingLogRow {
                step: self.global_step,
                episode: self.episode + 1,
                scenario,
                epsilon,
                action: action.id() as u8,
                reward,
                loss,
                los: next.los.flag(),
                path_loss: next.path_loss,
            });
        }
        self.episode_reward += reward;
        self.episode_nlos += usize::from(next.los.is_nlos());
        self.world = next;
        self.step_in_episode += 1;

        let tick = TrainTick {
            global_step: self.global_step,
            episode: self.episode + 1,
            scenario,
            entered,
            epsilon,
            action,
            reward,
            loss,
            synced,
            episode_done: done,
        };
        if done {
            let steps = self.step_in_episode;
            self.record.episodes.push(EpisodeSummary {
                episode: self.episode + 1,
                steps,
                total_reward: self.episode_reward,
                mean_reward: self.episode_reward / steps as f64,
                nlos_steps: self.episode_nlos,
            });
            log::info!(
                "seed {} episode {} mean reward {:.4} nlos steps {}",
                self.record.seed,
                self.episode + 1,
                self.episode_reward / steps as f64,
                self.episode_nlos
            );
            self.episode += 1;
            self.step_in_episode = 0;
            self.episode_reward = 0.0;
            self.episode_nlos = 0;
        }
        Ok(tick)
    }

    pub fn into_outcome(self, interrupted: bool) -> TrainingOutcome {
        TrainingOutcome {
            normalizer: self.learner.normalizer,
            policy: self.learner.online,
            record: self.record,
            interrupted,
        }
    }
}

#[derive(Debug, Clone)]
pub struct TrainingOutcome {
    pub policy: QNetwork,
    pub normalizer: Normalizer,
    pub record: TrainingRecord,
    pub interrupted: bool,
}

impl TrainingOutcome {
    pub fn policy_file(&self) -> PolicyFile {
        PolicyFile::from_network(&self.policy, self.normalizer)
    }
}

#[derive(Debug, Clone, Default)]
pub struct TrainingOptions {
    /// Checked every tick; when set, training stops early.
    pub stop: Option<Arc<AtomicBool>>,
    /// Where the policy is written on completion or interruption.
    pub checkpoint: Option<PathBuf>,
    pub keep_step_log: bool,
    pub exec: Option<Execution>,
}

/// Trains a fresh controller for `episodes × episode_step_limit` ticks.
pub fn run_training(cfg: &SimConfig, seed: u64, opts: &TrainingOptions) -> Result<TrainingOutcome> {
    let mut trainer = Trainer::new(cfg, seed)?;
    if !opts.keep_step_log {
        trainer = trainer.without_step_log();
    }
    if let Some(exec) = opts.exec {
        trainer = trainer.with_execution(exec);
    }
    let mut interrupted = false;
    while !trainer.is_finished() {
        if opts.stop.as_ref().is_some_and(|s| s.load(Ordering::Relaxed)) {
            interrupted = true;
            log::warn!("training interrupted at step {}", trainer.global_step());
            break;
        }
        trainer.step(None)?;
    }
    let outcome = trainer.into_outcome(interrupted);
    if let Some(path) = &opts.checkpoint {
        outcome.policy_file().save(path)?;
    }
    Ok(outcome)
}

/// Trains one controller per seed. Seeds are independent, so they run
/// concurrently under `Execution::Parallel`.
pub fn train_seeds(cfg: &SimConfig, seeds: &[u64], exec: Execution) -> Result<Vec<TrainingOutcome>> {
    let opts = TrainingOptions::default();
    exec.map(seeds, |&seed| run_training(cfg, seed, &opts))
        .into_iter()
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn short_config() -> SimConfig {
        let mut cfg = SimConfig::default();
        cfg.training.episodes = 2;
        cfg.training.episode_step_limit = 200;
        cfg.scenarios.durations = [20, 40, 40, 100];
        cfg
    }

    #[test]
    fn runs_all_steps_and_logs() {
        let cfg = short_config();
        let out = run_training(
            &cfg,
            1,
            &TrainingOptions {
                keep_step_log: true,
                ..Default::default()
            },
        )
        .unwrap();
        assert_eq!(out.record.rows.len(), 400);
        assert_eq!(out.record.episodes.len(), 2);
        assert_eq!(out.record.rows.last().unwrap().step, 400);
        // Loss appears once the buffer holds a batch.
        assert!(out.record.rows[62].loss.is_none());
        assert!(out.record.rows[63].loss.is_some());
        let eps: Vec<f64> = out.record.rows.iter().map(|r| r.epsilon).collect();
        assert!(eps.windows(2).all(|w| w[1] <= w[0]));
        let scen: Vec<ScenarioId> = out.record.rows.iter().map(|r| r.scenario).collect();
        assert_eq!(scen[19], ScenarioId::A);
        assert_eq!(scen[20], ScenarioId::B);
        assert_eq!(scen[100], ScenarioId::D);
        assert_eq!(scen[200], ScenarioId::A);
    }

    #[test]
    fn identical_seed_identical_log() {
        let cfg = short_config();
        let opts = TrainingOptions {
            keep_step_log: true,
            ..Default::default()
        };
        let a = run_training(&cfg, 5, &opts).unwrap();
        let b = run_training(&cfg, 5, &opts).unwrap();
        assert_eq!(a.record, b.record);
        assert_eq!(a.policy, b.policy);
        let c = run_training(&cfg, 6, &opts).unwrap();
        assert_ne!(a.record.rows, c.record.rows);
    }

    #[test]
    fn execution_strategy_does_not_change_results() {
        let cfg = short_config();
        let seq = run_training(
            &cfg,
            3,
            &TrainingOptions {
                exec: Some(Execution::Sequential),
                ..Default::default()
            },
        )
        .unwrap();
        let par = run_training(
            &cfg,
            3,
            &TrainingOptions {
                exec: Some(Execution::Parallel),
                ..Default::default()
            },
        )
        .unwrap();
        assert_eq!(seq.policy, par.policy);
    }

    #[test]
    fn interruption_writes_checkpoint() {
        let cfg = short_config();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("ckpt.json");
        let stop = Arc::new(AtomicBool::new(true));
        let out = run_training(
            &cfg,
            1,
            &TrainingOptions {
                stop: Some(stop),
                checkpoint: Some(path.clone()),
                ..Default::default()
            },
        )
        .unwrap();
        assert!(out.interrupted);
        let back = PolicyFile::load(&path).unwrap().to_network().unwrap();
        assert_eq!(back, out.policy);
    }

    #[test]
    fn training_csv_columns() {
        let cfg = short_config();
        let out = run_training(
            &cfg,
            2,
            &TrainingOptions {
                keep_step_log: true,
                ..Default::default()
            },
        )
        .unwrap();
        let mut buf = Vec::new();
        out.record.write_csv(&mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert_eq!(
            text.lines().next().unwrap(),
            "step,episode,scenario,epsilon,action,reward,loss,los,path_loss"
        );
        assert_eq!(text.lines().count(), 401);
    }

    #[test]
    fn velocity_stays_bounded() {
        let cfg = short_config();
        let mut t = Trainer::new(&cfg, 9).unwrap();
        while !t.is_finished() {
            t.step(None).unwrap();
            assert!(t.world().gnb.velocity.x.abs() <= cfg.chamber.v_gnb_max);
        }
    }
}
