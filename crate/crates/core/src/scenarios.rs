//! Training scenarios A–D, the episode schedule, and the evaluation use
//! cases (S, O.1, O.2, U.1, U.2).

use std::fmt;
use std::str::FromStr;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::chamber::{ChamberState, Entity, MotionModel, Waypoint};
use crate::config::{ChamberConfig, SimConfig};
use crate::error::{Error, Result};
use crate::geometry::Vec2;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum ScenarioId {
    A,
    B,
    C,
    D,
}

impl ScenarioId {
    pub const ALL: [ScenarioId; 4] = [ScenarioId::A, ScenarioId::B, ScenarioId::C, ScenarioId::D];

    pub fn as_str(self) -> &'static str {
        match self {
            ScenarioId::A => "A",
            ScenarioId::B => "B",
            ScenarioId::C => "C",
            ScenarioId::D => "D",
        }
    }
}

impl fmt::Display for ScenarioId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for ScenarioId {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim() {
            "A" | "a" => Ok(ScenarioId::A),
            "B" | "b" => Ok(ScenarioId::B),
            "C" | "c" => Ok(ScenarioId::C),
            "D" | "d" => Ok(ScenarioId::D),
            other => Err(Error::UnknownScenario(other.to_string())),
        }
    }
}

/// Motion of the UE or obstacle within one scenario.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum ObjectMotion {
    Static,
    /// Bounce across the chamber at `speed` (m/s).
    Bounce {
        speed: f64,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScenarioSpec {
    pub id: ScenarioId,
    pub duration: usize,
    pub ue_motion: ObjectMotion,
    pub obstacle_motion: ObjectMotion,
    /// Placement on entry; `None` keeps the position carried over.
    pub ue_start: Option<Vec2>,
    pub obstacle_start: Option<Vec2>,
}

/// The four scenarios an episode steps through, in order.
#[derive(Debug, Clone, PartialEq)]
pub struct EpisodeSchedule {
    specs: Vec<ScenarioSpec>,
}

impl EpisodeSchedule {
    pub fn from_config(cfg: &SimConfig) -> Self {
        let w = &cfg.world;
        let s = &cfg.scenarios;
        let [a, b, c, d] = s.durations;
        let specs = vec![
            // Static obstacle in front of the UE.
            ScenarioSpec {
                id: ScenarioId::A,
                duration: a,
                ue_motion: ObjectMotion::Static,
                obstacle_motion: ObjectMotion::Static,
                ue_start: Some(w.ue),
                obstacle_start: Some(w.obstacle),
            },
            ScenarioSpec {
                id: ScenarioId::B,
                duration: b,
                ue_motion: ObjectMotion::Static,
                obstacle_motion: ObjectMotion::Bounce { speed: s.object_speed },
                ue_start: None,
                obstacle_start: None,
            },
            ScenarioSpec {
                id: ScenarioId::C,
                duration: c,
                ue_motion: ObjectMotion::Bounce { speed: s.object_speed },
                obstacle_motion: ObjectMotion::Static,
                ue_start: None,
                obstacle_start: Some(w.obstacle),
            },
            ScenarioSpec {
                id: ScenarioId::D,
                duration: d,
                ue_motion: ObjectMotion::Bounce { speed: s.object_speed },
                obstacle_motion: ObjectMotion::Bounce {
                    speed: s.d_obstacle_speed,
                },
                ue_start: None,
                obstacle_start: Some(Vec2::new(s.d_obstacle_start_x, w.obstacle.y)),
            },
        ];
        Self { specs }
    }

    pub fn specs(&self) -> &[ScenarioSpec] {
        &self.specs
    }

    pub fn episode_length(&self) -> usize {
        self.specs.iter().map(|s| s.duration).sum()
    }

    /// The scenario active at `step` (0-based within the episode).
    pub fn scenario_at(&self, step: usize) -> Result<&ScenarioSpec> {
        let mut end = 0;
        for spec in &self.specs {
            end += spec.duration;
            if step < end {
                return Ok(spec);
            }
        }
        Err(Error::OutOfEpisode { step, limit: end })
    }

    /// The scenario that begins exactly at `step`, if any.
    pub fn starting_at(&self, step: usize) -> Option<&ScenarioSpec> {
        let mut start = 0;
        for spec in &self.specs {
            if start == step {
                return Some(spec);
            }
            start += spec.duration;
        }
        None
    }
}

impl Default for EpisodeSchedule {
    fn default() -> Self {
        Self::from_config(&SimConfig::default())
    }
}

/// Scenario lookup under the default schedule.
pub fn scenario_at(step_in_episode: usize) -> Result<ScenarioId> {
    EpisodeSchedule::default().scenario_at(step_in_episode).map(|s| s.id)
}

fn motion_for(entity: &Entity, motion: ObjectMotion, cfg: &ChamberConfig) -> MotionModel {
    match motion {
        ObjectMotion::Static => MotionModel::Static,
        ObjectMotion::Bounce { speed } => {
            let hx = entity.half_size.x;
            MotionModel::BounceX {
                speed,
                min_x: hx,
                max_x: cfg.width - hx,
            }
        }
    }
}

fn assign<R: Rng + ?Sized>(
    entity: &Entity,
    start: Option<Vec2>,
    motion: ObjectMotion,
    cfg: &ChamberConfig,
    rng: &mut R,
) -> Entity {
    let mut e = entity.clone();
    if let Some(p) = start {
        e.position = p;
    }
    let model = motion_for(&e, motion, cfg);
    if let MotionModel::BounceX { min_x, max_x, .. } = model {
        e.position.x = e.position.x.clamp(min_x, max_x);
    }
    let heading = if rng.gen_bool(0.5) { 1.0 } else { -1.0 };
    e.with_motion(model, heading)
}

/// Enters `spec` from `carryover`: motion models are swapped and placements
/// applied, while the gNB keeps its position and velocity. Bounce headings
/// are drawn from `rng`.
pub fn instantiate_scenario<R: Rng + ?Sized>(
    spec: &ScenarioSpec,
    carryover: &ChamberState,
    cfg: &ChamberConfig,
    rng: &mut R,
) -> ChamberState {
    let mut next = carryover.clone();
    next.ue = assign(&carryover.ue, spec.ue_start, spec.ue_motion, cfg, rng);
    next.obstacle = assign(&carryover.obstacle, spec.obstacle_start, spec.obstacle_motion, cfg, rng);
    next.refresh(cfg);
    next
}

/// World at the start of an episode, before scenario A is instantiated.
pub fn episode_origin(cfg: &SimConfig) -> Result<ChamberState> {
    let c = &cfg.chamber;
    let w = &cfg.world;
    ChamberState::new(
        Entity::gnb(w.gnb_x, c),
        Entity::ue(w.ue),
        Entity::obstacle(w.obstacle, w.obstacle_half_size),
        c,
    )
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum UseCaseId {
    /// Static obstacle, static UE.
    S,
    /// Mobile obstacle, static UE.
    O,
    /// Mobile UE, static obstacle.
    U,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum MovementPattern {
    /// Mobile node traverses from the low x endpoint to the high one.
    Mp1,
    /// Reverse traversal.
    Mp2,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct UseCase {
    pub id: UseCaseId,
    pub pattern: Option<MovementPattern>,
}

impl UseCase {
    pub const S: UseCase = UseCase {
        id: UseCaseId::S,
        pattern: None,
    };
    pub const O1: UseCase = UseCase {
        id: UseCaseId::O,
        pattern: Some(MovementPattern::Mp1),
    };
    pub const O2: UseCase = UseCase {
        id: UseCaseId::O,
        pattern: Some(MovementPattern::Mp2),
    };
    pub const U1: UseCase = UseCase {
        id: UseCaseId::U,
        pattern: Some(MovementPattern::Mp1),
    };
    pub const U2: UseCase = UseCase {
        id: UseCaseId::U,
        pattern: Some(MovementPattern::Mp2),
    };

    /// The four baseline-comparison tests, in report order.
    pub const COMPARISONS: [UseCase; 4] = [UseCase::O1, UseCase::O2, UseCase::U1, UseCase::U2];
    pub const ALL: [UseCase; 5] = [UseCase::S, UseCase::O1, UseCase::O2, UseCase::U1, UseCase::U2];

    pub fn new(id: UseCaseId, pattern: Option<MovementPattern>) -> Result<Self> {
        match (id, pattern) {
            (UseCaseId::S, None) | (UseCaseId::O, Some(_)) | (UseCaseId::U, Some(_)) => Ok(Self { id, pattern }),
            _ => Err(Error::InvalidUseCase(format!("{id:?} with {pattern:?}"))),
        }
    }
}

impl fmt::Display for UseCase {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let id = match self.id {
            UseCaseId::S => "S",
            UseCaseId::O => "O",
            UseCaseId::U => "U",
        };
        match self.pattern {
            None => f.write_str(id),
            Some(MovementPattern::Mp1) => write!(f, "{id}.1"),
            Some(MovementPattern::Mp2) => write!(f, "{id}.2"),
        }
    }
}

impl FromStr for UseCase {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let s = s.trim();
        let (id, mp) = match s.split_once('.') {
            Some((id, mp)) => (id, Some(mp)),
            None => (s, None),
        };
        let id = match id {
            "S" => UseCaseId::S,
            "O" => UseCaseId::O,
            "U" => UseCaseId::U,
            _ => return Err(Error::UnknownScenario(s.to_string())),
        };
        let pattern = match mp {
            None => None,
            Some("1") => Some(MovementPattern::Mp1),
            Some("2") => Some(MovementPattern::Mp2),
            Some(_) => return Err(Error::UnknownScenario(s.to_string())),
        };
        UseCase::new(id, pattern)
    }
}

/// A fully specified evaluation world.
#[derive(Debug, Clone, PartialEq)]
pub struct UseCaseSpec {
    pub use_case: UseCase,
    pub chamber: ChamberConfig,
    pub initial: ChamberState,
    pub run_ticks: usize,
}

fn traversal(from_x: f64, to_x: f64, y: f64, speed: f64) -> MotionModel {
    MotionModel::Scripted {
        waypoints: vec![
            Waypoint {
                time: 0.0,
                x: from_x,
                y,
            },
            Waypoint {
                time: (to_x - from_x).abs() / speed,
                x: to_x,
                y,
            },
        ],
    }
}

pub fn build_use_case(use_case: UseCase, cfg: &SimConfig) -> Result<UseCaseSpec> {
    let use_case = UseCase::new(use_case.id, use_case.pattern)?;
    let c = &cfg.chamber;
    let w = &cfg.world;
    let e = &cfg.evaluation;
    let (from_x, to_x) = match use_case.pattern {
        Some(MovementPattern::Mp2) => (e.mp_to_x, e.mp_from_x),
        _ => (e.mp_from_x, e.mp_to_x),
    };
    let mut ue = Entity::ue(w.ue);
    let mut obstacle = Entity::obstacle(w.obstacle, w.obstacle_half_size);
    match use_case.id {
        UseCaseId::S => {}
        UseCaseId::O => obstacle = obstacle.with_motion(traversal(from_x, to_x, w.obstacle.y, e.mp_speed), 1.0),
        UseCaseId::U => ue = ue.with_motion(traversal(from_x, to_x, w.ue.y, e.mp_speed), 1.0),
    }
    let initial = ChamberState::new(Entity::gnb(w.gnb_x, c), ue, obstacle, c)?;
    if use_case.id == UseCaseId::S && !initial.los.is_nlos() {
        return Err(Error::Config(
            "use case S must start obstructed; adjust the world placements".into(),
        ));
    }
    Ok(UseCaseSpec {
        use_case,
        chamber: c.clone(),
        initial,
        run_ticks: e.run_ticks,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::chamber::{advance, LosStatus};
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn schedule_boundaries() {
        assert_eq!(scenario_at(0).unwrap(), ScenarioId::A);
        assert_eq!(scenario_at(99).unwrap(), ScenarioId::A);
        assert_eq!(scenario_at(100).unwrap(), ScenarioId::B);
        assert_eq!(scenario_at(549).unwrap(), ScenarioId::B);
        assert_eq!(scenario_at(550).unwrap(), ScenarioId::C);
        assert_eq!(scenario_at(1000).unwrap(), ScenarioId::D);
        assert_eq!(scenario_at(2999).unwrap(), ScenarioId::D);
        assert!(matches!(
            scenario_at(3000),
            Err(Error::OutOfEpisode {
                step: 3000,
                limit: 3000
            })
        ));
        assert_eq!(EpisodeSchedule::default().episode_length(), 3000);
    }

    #[test]
    fn starting_points() {
        let s = EpisodeSchedule::default();
        let starts: Vec<(usize, ScenarioId)> = (0..3000)
            .filter_map(|i| s.starting_at(i).map(|sp| (i, sp.id)))
            .collect();
        assert_eq!(
            starts,
            vec![
                (0, ScenarioId::A),
                (100, ScenarioId::B),
                (550, ScenarioId::C),
                (1000, ScenarioId::D)
            ]
        );
    }

    #[test]
    fn scenario_speeds() {
        let s = EpisodeSchedule::default();
        let sp = s.specs();
        assert_eq!(sp[1].obstacle_motion, ObjectMotion::Bounce { speed: 0.6 });
        assert_eq!(sp[2].ue_motion, ObjectMotion::Bounce { speed: 0.6 });
        assert_eq!(sp[3].ue_motion, ObjectMotion::Bounce { speed: 0.6 });
        assert_eq!(sp[3].obstacle_motion, ObjectMotion::Bounce { speed: 0.45 });
    }

    #[test]
    fn a_to_b_keeps_gnb_and_starts_obstacle() {
        let cfg = SimConfig::default();
        let sched = EpisodeSchedule::from_config(&cfg);
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let mut world = instantiate_scenario(
            &sched.specs()[0],
            &episode_origin(&cfg).unwrap(),
            &cfg.chamber,
            &mut rng,
        );
        for _ in 0..99 {
            world = advance(&world, 0.35, &cfg.chamber);
        }
        let before = world.gnb.clone();
        let b = instantiate_scenario(&sched.specs()[1], &world, &cfg.chamber, &mut rng);
        assert_eq!(b.gnb, before);
        assert!(matches!(b.obstacle.motion, MotionModel::BounceX { speed, .. } if speed == 0.6));
        assert_eq!(b.obstacle.velocity.x.abs(), 0.6);
        assert_eq!(b.ue.motion, MotionModel::Static);
    }

    #[test]
    fn d_has_distinct_speeds() {
        let cfg = SimConfig::default();
        let sched = EpisodeSchedule::from_config(&cfg);
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let d = instantiate_scenario(
            &sched.specs()[3],
            &episode_origin(&cfg).unwrap(),
            &cfg.chamber,
            &mut rng,
        );
        assert_eq!(d.ue.velocity.x.abs(), 0.6);
        assert_eq!(d.obstacle.velocity.x.abs(), 0.45);
        assert_ne!(d.ue.position.x, d.obstacle.position.x);
    }

    #[test]
    fn use_case_labels() {
        for label in ["S", "O.1", "O.2", "U.1", "U.2"] {
            assert_eq!(label.parse::<UseCase>().unwrap().to_string(), label);
        }
        assert!("S.1".parse::<UseCase>().is_err());
        assert!("O".parse::<UseCase>().is_err());
        assert!("X.1".parse::<UseCase>().is_err());
        assert!(UseCase::new(UseCaseId::U, None).is_err());
    }

    #[test]
    fn uc_s_starts_obstructed() {
        let spec = build_use_case(UseCase::S, &SimConfig::default()).unwrap();
        assert_eq!(spec.initial.los, LosStatus::Nlos);
        assert_eq!(spec.initial.ue.motion, MotionModel::Static);
        assert_eq!(spec.initial.obstacle.motion, MotionModel::Static);
    }

    #[test]
    fn movement_patterns() {
        let cfg = SimConfig::default();
        let o1 = build_use_case(UseCase::O1, &cfg).unwrap().initial;
        assert_eq!(o1.obstacle.position.x, 2.0);
        assert!((o1.obstacle.velocity.x - 0.6).abs() < 1e-12);
        assert_eq!(o1.ue.motion, MotionModel::Static);
        let u2 = build_use_case(UseCase::U2, &cfg).unwrap().initial;
        assert_eq!(u2.ue.position.x, 6.0);
        assert!((u2.ue.velocity.x + 0.6).abs() < 1e-12);
        assert_eq!(u2.obstacle.motion, MotionModel::Static);
    }

    #[test]
    fn traversal_completes_within_run() {
        let cfg = SimConfig::default();
        let spec = build_use_case(UseCase::U1, &cfg).unwrap();
        let mut w = spec.initial.clone();
        // 4 m at 0.6 m/s is 6.67 s, i.e. 34 ticks to settle.
        for _ in 0..34 {
            w = advance(&w, 0.0, &cfg.chamber);
        }
        assert!((w.ue.position.x - 6.0).abs() < 1e-12);
        assert!(34 < spec.run_ticks);
    }
}
