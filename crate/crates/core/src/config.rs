//! Configuration for the chamber, the initial world, training and evaluation.
//!
//! Every section deserializes from TOML with all keys optional; missing keys
//! take the defaults below. See `docs/config.md` at the repository root for
//! the full key listing with units.

use std::path::Path;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::geometry::Vec2;

/// Physical chamber parameters shared by every mode.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ChamberConfig {
    /// x-extent (m).
    pub width: f64,
    /// y-extent (m).
    pub depth: f64,
    /// Control period Δt (s).
    pub tick: f64,
    /// Carrier frequency (MHz).
    pub carrier_frequency: f64,
    /// Extra loss applied when the link is obstructed (dB).
    pub nlos_attenuation: f64,
    /// Fixed y of the gNB rail (m).
    pub gnb_track_y: f64,
    /// Maximum gNB speed along the rail (m/s).
    pub v_gnb_max: f64,
    /// Velocity increment per action δ (m/s).
    pub velocity_step: f64,
    /// Distance floor used by the path loss model (m).
    pub min_distance: f64,
    /// Velocity scale for UE and obstacle features (m/s).
    pub v_object_max: f64,
}

impl Default for ChamberConfig {
    fn default() -> Self {
        Self {
            width: 8.0,
            depth: 5.0,
            tick: 0.2,
            carrier_frequency: 3500.0,
            nlos_attenuation: 20.0,
            gnb_track_y: 0.5,
            v_gnb_max: 1.0,
            velocity_step: 0.35,
            min_distance: 0.1,
            v_object_max: 0.6,
        }
    }
}

impl ChamberConfig {
    pub fn validate(&self) -> Result<()> {
        let positive = [
            ("width", self.width),
            ("depth", self.depth),
            ("tick", self.tick),
            ("carrier_frequency", self.carrier_frequency),
            ("v_gnb_max", self.v_gnb_max),
            ("velocity_step", self.velocity_step),
            ("min_distance", self.min_distance),
            ("v_object_max", self.v_object_max),
        ];
        for (name, value) in positive {
            if !(value.is_finite() && value > 0.0) {
                return Err(Error::Config(format!("{name} must be > 0, got {value}")));
            }
        }
        if self.velocity_step > 2.0 * self.v_gnb_max {
            return Err(Error::Config(format!(
                "velocity_step {} exceeds 2 * v_gnb_max",
                self.velocity_step
            )));
        }
        if !(self.nlos_attenuation.is_finite() && self.nlos_attenuation >= 0.0) {
            return Err(Error::Config("nlos_attenuation must be >= 0".into()));
        }
        if !(0.0..=self.depth).contains(&self.gnb_track_y) {
            return Err(Error::Config("gnb_track_y must lie inside the chamber".into()));
        }
        Ok(())
    }

    pub fn diagonal(&self) -> f64 {
        self.width.hypot(self.depth)
    }

    pub fn contains(&self, p: Vec2) -> bool {
        (0.0..=self.width).contains(&p.x) && (0.0..=self.depth).contains(&p.y)
    }
}

/// Initial placement of the three entities.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct WorldConfig {
    pub gnb_x: f64,
    pub ue: Vec2,
    pub obstacle: Vec2,
    pub obstacle_half_size: Vec2,
}

impl Default for WorldConfig {
    fn default() -> Self {
        Self {
            gnb_x: 4.0,
            ue: Vec2::new(4.0, 3.5),
            obstacle: Vec2::new(4.0, 2.0),
            obstacle_half_size: Vec2::new(0.4, 0.2),
        }
    }
}

/// DQN hyperparameters and reward constants.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainingConfig {
    pub batch_size: usize,
    pub learning_rate: f64,
    pub epsilon_initial: f64,
    pub epsilon_final: f64,
    pub gamma: f64,
    pub target_update_every: u64,
    pub episodes: usize,
    pub episode_step_limit: usize,
    pub replay_capacity: usize,
    /// Reward gain k on the LoS branch.
    pub reward_gain: f64,
    /// Distance mapped to 1 by the LoS reward (m).
    pub d_min_map: f64,
    /// Distance mapped to 0 by the LoS reward (m); chamber diagonal if unset.
    pub d_max_map: Option<f64>,
}

impl Default for TrainingConfig {
    fn default() -> Self {
        Self {
            batch_size: 64,
            learning_rate: 1e-3,
            epsilon_initial: 0.9,
            epsilon_final: 0.1,
            gamma: 0.9,
            target_update_every: 100,
            episodes: 3,
            episode_step_limit: 3000,
            replay_capacity: 1000,
            reward_gain: 1.0,
            d_min_map: 0.5,
            d_max_map: None,
        }
    }
}

impl TrainingConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.gamma > 0.0 && self.gamma < 1.0) {
            return Err(Error::Config(format!("gamma must be in (0, 1), got {}", self.gamma)));
        }
        if !(0.0 <= self.epsilon_final && self.epsilon_final <= self.epsilon_initial && self.epsilon_initial <= 1.0) {
            return Err(Error::Config(
                "require 0 <= epsilon_final <= epsilon_initial <= 1".into(),
            ));
        }
        if self.batch_size == 0 || self.replay_capacity < self.batch_size {
            return Err(Error::Config("replay_capacity must be >= batch_size > 0".into()));
        }
        if !(self.learning_rate > 0.0) || self.target_update_every == 0 {
            return Err(Error::Config(
                "learning_rate and target_update_every must be > 0".into(),
            ));
        }
        if !(self.reward_gain > 0.0) {
            return Err(Error::Config("reward_gain must be > 0".into()));
        }
        if let Some(d_max) = self.d_max_map {
            if !(d_max > self.d_min_map) {
                return Err(Error::Config("d_max_map must exceed d_min_map".into()));
            }
        }
        Ok(())
    }

    pub fn total_steps(&self) -> usize {
        self.episodes * self.episode_step_limit
    }
}

/// Training-episode layout: scenario durations and object speeds.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ScenarioConfig {
    /// Durations of scenarios A, B, C, D in ticks.
    pub durations: [usize; 4],
    /// Bounce speed of the UE and obstacle (m/s).
    pub object_speed: f64,
    /// Obstacle bounce speed in scenario D (m/s).
    pub d_obstacle_speed: f64,
    /// Obstacle start x at the beginning of scenario D (m).
    pub d_obstacle_start_x: f64,
}

impl Default for ScenarioConfig {
    fn default() -> Self {
        Self {
            durations: [100, 450, 450, 2000],
            object_speed: 0.6,
            d_obstacle_speed: 0.45,
            d_obstacle_start_x: 2.0,
        }
    }
}

/// Evaluation use-case settings.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EvaluationConfig {
    /// Length of each evaluation run in ticks.
    pub run_ticks: usize,
    /// Movement-pattern endpoints (m) and speed (m/s).
    pub mp_from_x: f64,
    pub mp_to_x: f64,
    pub mp_speed: f64,
}

impl Default for EvaluationConfig {
    fn default() -> Self {
        Self {
            run_ticks: 75,
            mp_from_x: 2.0,
            mp_to_x: 6.0,
            mp_speed: 0.6,
        }
    }
}

/// Everything the simulator needs, as loaded from one config file.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SimConfig {
    pub chamber: ChamberConfig,
    pub world: WorldConfig,
    pub training: TrainingConfig,
    pub scenarios: ScenarioConfig,
    pub evaluation: EvaluationConfig,
}

impl SimConfig {
    pub fn from_toml_str(text: &str) -> Result<Self> {
        let cfg: SimConfig = toml::from_str(text)?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        Self::from_toml_str(&std::fs::read_to_string(path)?)
    }

    pub fn validate(&self) -> Result<()> {
        self.chamber.validate()?;
        self.training.validate()?;
        let c = &self.chamber;
        let w = &self.world;
        if !(0.0..=c.width).contains(&w.gnb_x) {
            return Err(Error::Config("world.gnb_x outside the chamber".into()));
        }
        if !c.contains(w.ue) || !c.contains(w.obstacle) {
            return Err(Error::Config("world placements must lie inside the chamber".into()));
        }
        if !(w.obstacle_half_size.x > 0.0 && w.obstacle_half_size.y > 0.0) {
            return Err(Error::Config("obstacle half sizes must be > 0".into()));
        }
        let s = &self.scenarios;
        if s.durations.iter().sum::<usize>() != self.training.episode_step_limit {
            return Err(Error::Config(format!(
                "scenario durations sum to {} but the episode step limit is {}",
                s.durations.iter().sum::<usize>(),
                self.training.episode_step_limit
            )));
        }
        if !(s.object_speed > 0.0 && s.d_obstacle_speed > 0.0) {
            return Err(Error::Config("scenario speeds must be > 0".into()));
        }
        let e = &self.evaluation;
        if e.run_ticks == 0 || !(e.mp_speed > 0.0) || e.mp_from_x == e.mp_to_x {
            return Err(Error::Config(
                "evaluation needs run_ticks > 0, mp_speed > 0 and distinct endpoints".into(),
            ));
        }
        Ok(())
    }

    /// Short stable digest of the canonical JSON form, for trace headers.
    pub fn hash(&self) -> String {
        let canonical = serde_json::to_string(self).expect("config serializes");
        let digest = Sha256::digest(canonical.as_bytes());
        digest[..8].iter().map(|b| format!("{b:02x}")).collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_validate() {
        SimConfig::default().validate().unwrap();
    }

    #[test]
    fn partial_toml_fills_defaults() {
        let cfg = SimConfig::from_toml_str("[chamber]\nnlos_attenuation = 15.0\n").unwrap();
        assert_eq!(cfg.chamber.nlos_attenuation, 15.0);
        assert_eq!(cfg.chamber.width, 8.0);
        assert_eq!(cfg.training.batch_size, 64);
    }

    #[test]
    fn rejects_bad_values() {
        assert!(SimConfig::from_toml_str("[chamber]\nwidth = -1.0\n").is_err());
        assert!(SimConfig::from_toml_str("[chamber]\nvelocity_step = 2.5\n").is_err());
        assert!(SimConfig::from_toml_str("[training]\ngamma = 1.0\n").is_err());
        assert!(SimConfig::from_toml_str("[scenarios]\ndurations = [100, 100, 100, 100]\n").is_err());
        assert!(SimConfig::from_toml_str("[chamber]\nbogus = 1\n").is_err());
    }

    #[test]
    fn hash_tracks_content() {
        let a = SimConfig::default();
        let mut b = a.clone();
        assert_eq!(a.hash(), b.hash());
        b.chamber.nlos_attenuation = 10.0;
        assert_ne!(a.hash(), b.hash());
        assert_eq!(a.hash().len(), 16);
    }
}
