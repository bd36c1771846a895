//! The DQN mobility controller: observation encoding, the discrete action
//! set, the reward, exploration, and the learning machinery.

mod adam;
mod dqn;
mod network;
mod policy;
mod replay;

pub use adam::Adam;
pub use dqn::{batch_loss, huber, loss_and_gradient, sync_due, td_targets, DqnLearner};
pub use network::{Dense, QNetwork, Q_LAYOUT};
pub use policy::{PolicyFile, POLICY_FORMAT_VERSION};
pub use replay::{ReplayBuffer, Transition};

use std::str::FromStr;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::chamber::{ChamberState, LosStatus};
use crate::config::{ChamberConfig, TrainingConfig};
use crate::error::{Error, Result};

pub const STATE_DIM: usize = 11;
pub const NUM_ACTIONS: usize = 3;

/// The agent's raw observation, feature order fixed.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StateVector {
    pub x_gnb: f64,
    pub x_gnb_ue: f64,
    pub y_gnb_ue: f64,
    pub x_gnb_obs: f64,
    pub y_gnb_obs: f64,
    pub vx_gnb: f64,
    pub vx_ue: f64,
    pub vy_ue: f64,
    pub vx_obs: f64,
    pub vy_obs: f64,
    pub los_status: f64,
}

impl StateVector {
    pub fn features(&self) -> [f64; STATE_DIM] {
        [
            self.x_gnb,
            self.x_gnb_ue,
            self.y_gnb_ue,
            self.x_gnb_obs,
            self.y_gnb_obs,
            self.vx_gnb,
            self.vx_ue,
            self.vy_ue,
            self.vx_obs,
            self.vy_obs,
            self.los_status,
        ]
    }

    pub fn normalized(&self, n: &Normalizer) -> [f64; STATE_DIM] {
        [
            self.x_gnb / n.width * 2.0 - 1.0,
            self.x_gnb_ue / n.width,
            self.y_gnb_ue / n.depth,
            self.x_gnb_obs / n.width,
            self.y_gnb_obs / n.depth,
            self.vx_gnb / n.v_gnb_max,
            self.vx_ue / n.v_object_max,
            self.vy_ue / n.v_object_max,
            self.vx_obs / n.v_object_max,
            self.vy_obs / n.v_object_max,
            self.los_status,
        ]
    }
}

/// Scales raw features into roughly [-1, 1] for the network.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Normalizer {
    pub width: f64,
    pub depth: f64,
    pub v_gnb_max: f64,
    pub v_object_max: f64,
}

impl From<&ChamberConfig> for Normalizer {
    fn from(cfg: &ChamberConfig) -> Self {
        Self {
            width: cfg.width,
            depth: cfg.depth,
            v_gnb_max: cfg.v_gnb_max,
            v_object_max: cfg.v_object_max,
        }
    }
}

pub fn encode_state(cs: &ChamberState) -> StateVector {
    let g = cs.gnb.position;
    let ue = cs.ue.position.sub(g);
    let obs = cs.obstacle.position.sub(g);
    StateVector {
        x_gnb: g.x,
        x_gnb_ue: ue.x,
        y_gnb_ue: ue.y,
        x_gnb_obs: obs.x,
        y_gnb_obs: obs.y,
        vx_gnb: cs.gnb.velocity.x,
        vx_ue: cs.ue.velocity.x,
        vy_ue: cs.ue.velocity.y,
        vx_obs: cs.obstacle.velocity.x,
        vy_obs: cs.obstacle.velocity.y,
        los_status: f64::from(cs.los.flag()),
    }
}

/// Serialized as its numeric id; also parsed from its snake_case name.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Action {
    Maintain = 0,
    Increment = 1,
    Decrement = 2,
}

impl Action {
    pub const ALL: [Action; NUM_ACTIONS] = [Action::Maintain, Action::Increment, Action::Decrement];

    pub fn id(self) -> usize {
        self as usize
    }

    pub fn from_id(id: usize) -> Option<Self> {
        Self::ALL.get(id).copied()
    }
}

impl FromStr for Action {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "maintain" => Ok(Action::Maintain),
            "increment" => Ok(Action::Increment),
            "decrement" => Ok(Action::Decrement),
            other => other
                .parse::<u8>()
                .map_err(|_| Error::Command(format!("unknown action `{other}`")))
                .and_then(Action::try_from),
        }
    }
}

impl Serialize for Action {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        s.serialize_u8(self.id() as u8)
    }
}

impl<'de> Deserialize<'de> for Action {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        #[derive(Deserialize)]
        #[serde(untagged)]
        enum Repr {
            Id(u8),
            Name(String),
        }
        match Repr::deserialize(d)? {
            Repr::Id(id) => Action::try_from(id),
            Repr::Name(name) => name.parse(),
        }
        .map_err(serde::de::Error::custom)
    }
}

impl TryFrom<u8> for Action {
    type Error = Error;

    fn try_from(id: u8) -> Result<Self> {
        Action::from_id(id as usize).ok_or_else(|| Error::Command(format!("action id {id} not in 0..=2")))
    }
}

/// New gNB velocity after applying `action`, clamped to ±v_gnb_max.
pub fn apply_action(vx_gnb: f64, action: Action, cfg: &ChamberConfig) -> f64 {
    let v = match action {
        Action::Maintain => vx_gnb,
        Action::Increment => vx_gnb + cfg.velocity_step,
        Action::Decrement => vx_gnb - cfg.velocity_step,
    };
    v.clamp(-cfg.v_gnb_max, cfg.v_gnb_max)
}

/// Resolved reward constants.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RewardParams {
    pub gain: f64,
    pub d_min: f64,
    pub d_max: f64,
}

impl RewardParams {
    pub fn new(tc: &TrainingConfig, cfg: &ChamberConfig) -> Self {
        Self {
            gain: tc.reward_gain,
            d_min: tc.d_min_map,
            d_max: tc.d_max_map.unwrap_or_else(|| cfg.diagonal()),
        }
    }

    /// Normalized inverse distance in [0, 1].
    pub fn map(&self, d: f64) -> f64 {
        ((self.d_max - d) / (self.d_max - self.d_min)).clamp(0.0, 1.0)
    }
}

/// Reward of the post-action state: an obstruction penalty growing toward
/// −1 as the ray nears the obstacle center, else a proximity bonus.
pub fn evaluate_reward(cs_next: &ChamberState, params: &RewardParams) -> f64 {
    match cs_next.los {
        LosStatus::Nlos => -1.0 + cs_next.d_oc_norm.unwrap_or(0.0),
        LosStatus::Los => params.gain * params.map(cs_next.d_ue).powi(2),
    }
}

/// Linear decay from `epsilon_initial` at step 0 to `epsilon_final` at
/// `total_steps`, flat afterwards.
pub fn epsilon_at(global_step: usize, tc: &TrainingConfig, total_steps: usize) -> f64 {
    if total_steps == 0 || global_step >= total_steps {
        return tc.epsilon_final;
    }
    let frac = global_step as f64 / total_steps as f64;
    tc.epsilon_initial + (tc.epsilon_final - tc.epsilon_initial) * frac
}

/// Index of the largest value; ties go to the lowest index.
pub fn argmax(q: &[f64]) -> usize {
    let mut best = 0;
    for (i, &v) in q.iter().enumerate().skip(1) {
        if v > q[best] {
            best = i;
        }
    }
    best
}

pub fn greedy_action(q: &QNetwork, normalized: &[f64; STATE_DIM]) -> Result<Action> {
    let values = q.forward(normalized)?;
    Ok(Action::ALL[argmax(&values)])
}

/// ε-greedy selection over the network's Q-values.
pub fn select_action<R: Rng + ?Sized>(
    q: &QNetwork,
    normalized: &[f64; STATE_DIM],
    epsilon: f64,
    rng: &mut R,
) -> Result<Action> {
    if rng.gen::<f64>() < epsilon {
        return Ok(Action::ALL[rng.gen_range(0..NUM_ACTIONS)]);
    }
    greedy_action(q, normalized)
}
