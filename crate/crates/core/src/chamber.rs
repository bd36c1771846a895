//! Discrete-time chamber model: entity kinematics, LoS and path loss.

use serde::{Deserialize, Serialize};

use crate::config::ChamberConfig;
use crate::error::{Error, Result};
use crate::geometry::{occlusion, Aabb, Vec2};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum EntityKind {
    Gnb,
    Ue,
    Obstacle,
}

impl EntityKind {
    pub fn as_str(self) -> &'static str {
        match self {
            EntityKind::Gnb => "gnb",
            EntityKind::Ue => "ue",
            EntityKind::Obstacle => "obstacle",
        }
    }
}

impl std::str::FromStr for EntityKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "gnb" => Ok(EntityKind::Gnb),
            "ue" => Ok(EntityKind::Ue),
            "obstacle" | "obs" => Ok(EntityKind::Obstacle),
            other => Err(Error::Command(format!("unknown entity `{other}`"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Waypoint {
    /// Seconds since the motion model was assigned.
    pub time: f64,
    pub x: f64,
    pub y: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "model", rename_all = "snake_case")]
pub enum MotionModel {
    Static,
    /// Constant-speed lateral motion reflecting off `min_x` and `max_x`.
    BounceX {
        speed: f64,
        min_x: f64,
        max_x: f64,
    },
    /// Piecewise-linear path; holds the last waypoint once exhausted.
    Scripted {
        waypoints: Vec<Waypoint>,
    },
    /// Velocity set externally each tick (the gNB).
    Controlled,
}

impl MotionModel {
    pub fn validate(&self, cfg: &ChamberConfig) -> Result<()> {
        match self {
            MotionModel::Static | MotionModel::Controlled => Ok(()),
            MotionModel::BounceX { speed, min_x, max_x } => {
                if !(*speed > 0.0) {
                    return Err(Error::Config("bounce speed must be > 0".into()));
                }
                if !(min_x < max_x && *min_x >= 0.0 && *max_x <= cfg.width) {
                    return Err(Error::Config(format!(
                        "bounce range [{min_x}, {max_x}] invalid for a {}-m chamber",
                        cfg.width
                    )));
                }
                Ok(())
            }
            MotionModel::Scripted { waypoints } => {
                if waypoints.is_empty() {
                    return Err(Error::Config("scripted motion needs waypoints".into()));
                }
                if waypoints.windows(2).any(|w| w[1].time <= w[0].time) {
                    return Err(Error::Config("waypoint times must be strictly increasing".into()));
                }
                if waypoints.iter().any(|w| !cfg.contains(Vec2::new(w.x, w.y))) {
                    return Err(Error::Config("waypoint outside the chamber".into()));
                }
                Ok(())
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Entity {
    pub kind: EntityKind,
    pub position: Vec2,
    pub velocity: Vec2,
    /// Half-extents of the footprint; zero for point entities.
    pub half_size: Vec2,
    pub motion: MotionModel,
    /// Seconds elapsed under the current motion model.
    pub motion_time: f64,
}

impl Entity {
    pub fn gnb(x: f64, cfg: &ChamberConfig) -> Self {
        Self {
            kind: EntityKind::Gnb,
            position: Vec2::new(x, cfg.gnb_track_y),
            velocity: Vec2::ZERO,
            half_size: Vec2::ZERO,
            motion: MotionModel::Controlled,
            motion_time: 0.0,
        }
    }

    pub fn ue(position: Vec2) -> Self {
        Self {
            kind: EntityKind::Ue,
            position,
            velocity: Vec2::ZERO,
            half_size: Vec2::ZERO,
            motion: MotionModel::Static,
            motion_time: 0.0,
        }
    }

    pub fn obstacle(position: Vec2, half_size: Vec2) -> Self {
        Self {
            kind: EntityKind::Obstacle,
            position,
            velocity: Vec2::ZERO,
            half_size,
            motion: MotionModel::Static,
            motion_time: 0.0,
        }
    }

    /// Assigns a new motion model, restarting its clock and seeding the
    /// velocity the model implies at t = 0. `direction` picks the initial
    /// heading of a bounce (positive or negative x).
    pub fn with_motion(mut self, motion: MotionModel, direction: f64) -> Self {
        self.velocity = match &motion {
            MotionModel::Static => Vec2::ZERO,
            MotionModel::BounceX { speed, .. } => Vec2::new(speed.copysign(direction), 0.0),
            MotionModel::Scripted { waypoints } => {
                let (pos, vel) = scripted_at(waypoints, 0.0);
                self.position = pos;
                vel
            }
            MotionModel::Controlled => Vec2::new(self.velocity.x, 0.0),
        };
        self.motion = motion;
        self.motion_time = 0.0;
        self
    }

    pub fn footprint(&self) -> Aabb {
        Aabb::new(self.position, self.half_size)
    }

    pub fn validate(&self, cfg: &ChamberConfig) -> Result<()> {
        if !cfg.contains(self.position) {
            return Err(Error::Config(format!("{} outside the chamber", self.kind.as_str())));
        }
        match self.kind {
            EntityKind::Gnb => {
                if self.velocity.y != 0.0 || self.position.y != cfg.gnb_track_y {
                    return Err(Error::Config("gNB must stay on its rail".into()));
                }
            }
            EntityKind::Obstacle => {
                if !(self.half_size.x > 0.0 && self.half_size.y > 0.0) {
                    return Err(Error::Config("obstacle half sizes must be > 0".into()));
                }
            }
            EntityKind::Ue => {}
        }
        self.motion.validate(cfg)
    }
}

/// Position and velocity along a piecewise-linear script at time `t`.
fn scripted_at(waypoints: &[Waypoint], t: f64) -> (Vec2, Vec2) {
    let first = waypoints[0];
    let last = waypoints[waypoints.len() - 1];
    if t < first.time {
        return (Vec2::new(first.x, first.y), Vec2::ZERO);
    }
    for w in waypoints.windows(2) {
        let (a, b) = (w[0], w[1]);
        if t < b.time {
            let span = b.time - a.time;
            let frac = (t - a.time) / span;
            let pa = Vec2::new(a.x, a.y);
            let pb = Vec2::new(b.x, b.y);
            return (pa.lerp(pb, frac), pb.sub(pa).scale(1.0 / span));
        }
    }
    (Vec2::new(last.x, last.y), Vec2::ZERO)
}

fn reflect_into(mut x: f64, mut vx: f64, min_x: f64, max_x: f64) -> (f64, f64) {
    // Loops only when a single step spans the whole range.
    loop {
        if x > max_x {
            x = 2.0 * max_x - x;
            vx = -vx.abs();
        } else if x < min_x {
            x = 2.0 * min_x - x;
            vx = vx.abs();
        } else {
            return (x, vx);
        }
    }
}

/// Advances one entity by one tick under its motion model.
pub fn step_entity(e: &Entity, cfg: &ChamberConfig) -> Entity {
    let dt = cfg.tick;
    let mut next = e.clone();
    next.motion_time = e.motion_time + dt;
    match &e.motion {
        MotionModel::Static => return e.clone(),
        MotionModel::BounceX { speed, min_x, max_x } => {
            let heading = if e.velocity.x < 0.0 { -1.0 } else { 1.0 };
            let vx = heading * speed;
            let (x, vx) = reflect_into(e.position.x + vx * dt, vx, *min_x, *max_x);
            next.position.x = x;
            next.velocity = Vec2::new(vx, 0.0);
        }
        MotionModel::Scripted { waypoints } => {
            let (pos, vel) = scripted_at(waypoints, next.motion_time);
            next.position = pos;
            next.velocity = vel;
        }
        MotionModel::Controlled => {
            next.position.x = (e.position.x + e.velocity.x * dt).clamp(0.0, cfg.width);
            next.position.y = cfg.gnb_track_y;
            next.velocity.y = 0.0;
        }
    }
    next
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum LosStatus {
    Los = 0,
    Nlos = 1,
}

impl LosStatus {
    pub fn flag(self) -> u8 {
        self as u8
    }

    pub fn is_nlos(self) -> bool {
        self == LosStatus::Nlos
    }

    pub fn from_flag(flag: u8) -> Option<Self> {
        match flag {
            0 => Some(LosStatus::Los),
            1 => Some(LosStatus::Nlos),
            _ => None,
        }
    }
}

impl Serialize for LosStatus {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        s.serialize_u8(self.flag())
    }
}

impl<'de> Deserialize<'de> for LosStatus {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let flag = u8::deserialize(d)?;
        LosStatus::from_flag(flag).ok_or_else(|| serde::de::Error::custom("los must be 0 or 1"))
    }
}

/// LoS test of the gNB→UE segment against the obstacle footprint. Returns the
/// normalized chord-midpoint offset alongside an NLoS verdict.
pub fn compute_los(gnb: Vec2, ue: Vec2, obstacle: &Entity) -> (LosStatus, Option<f64>) {
    debug_assert_eq!(obstacle.kind, EntityKind::Obstacle);
    match occlusion(gnb, ue, &obstacle.footprint()) {
        Some(o) => (LosStatus::Nlos, Some(o.d_oc_norm)),
        None => (LosStatus::Los, None),
    }
}

/// Free-space path loss in dB, plus the NLoS attenuation when obstructed.
pub fn path_loss(d_ue: f64, los: LosStatus, cfg: &ChamberConfig) -> f64 {
    let d_km = d_ue.max(cfg.min_distance) / 1000.0;
    let fspl = 32.44 + 20.0 * d_km.log10() + 20.0 * cfg.carrier_frequency.log10();
    match los {
        LosStatus::Los => fspl,
        LosStatus::Nlos => fspl + cfg.nlos_attenuation,
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChamberState {
    pub tick_index: u64,
    pub gnb: Entity,
    pub ue: Entity,
    pub obstacle: Entity,
    pub los: LosStatus,
    pub path_loss: f64,
    pub d_ue: f64,
    /// Defined only when the link is obstructed.
    pub d_oc_norm: Option<f64>,
}

impl ChamberState {
    pub fn new(gnb: Entity, ue: Entity, obstacle: Entity, cfg: &ChamberConfig) -> Result<Self> {
        gnb.validate(cfg)?;
        ue.validate(cfg)?;
        obstacle.validate(cfg)?;
        if gnb.kind != EntityKind::Gnb || ue.kind != EntityKind::Ue || obstacle.kind != EntityKind::Obstacle {
            return Err(Error::Config("entity kinds out of order".into()));
        }
        let mut state = Self {
            tick_index: 0,
            gnb,
            ue,
            obstacle,
            los: LosStatus::Los,
            path_loss: 0.0,
            d_ue: 0.0,
            d_oc_norm: None,
        };
        state.refresh(cfg);
        Ok(state)
    }

    /// Recomputes LoS, distances and path loss from the entity positions.
    pub fn refresh(&mut self, cfg: &ChamberConfig) {
        let (los, d_oc_norm) = compute_los(self.gnb.position, self.ue.position, &self.obstacle);
        self.los = los;
        self.d_oc_norm = d_oc_norm;
        self.d_ue = self.gnb.position.distance(self.ue.position);
        self.path_loss = path_loss(self.d_ue, los, cfg);
    }

    pub fn entity(&self, kind: EntityKind) -> &Entity {
        match kind {
            EntityKind::Gnb => &self.gnb,
            EntityKind::Ue => &self.ue,
            EntityKind::Obstacle => &self.obstacle,
        }
    }

    pub fn entity_mut(&mut self, kind: EntityKind) -> &mut Entity {
        match kind {
            EntityKind::Gnb => &mut self.gnb,
            EntityKind::Ue => &mut self.ue,
            EntityKind::Obstacle => &mut self.obstacle,
        }
    }
}

/// Applies `gnb_velocity`, steps every entity by one tick and recomputes the
/// derived link quantities.
pub fn advance(state: &ChamberState, gnb_velocity: f64, cfg: &ChamberConfig) -> ChamberState {
    debug_assert!(gnb_velocity.abs() <= cfg.v_gnb_max + 1e-12);
    let mut gnb = state.gnb.clone();
    gnb.velocity = Vec2::new(gnb_velocity.clamp(-cfg.v_gnb_max, cfg.v_gnb_max), 0.0);
    let mut next = ChamberState {
        tick_index: state.tick_index + 1,
        gnb: step_entity(&gnb, cfg),
        ue: step_entity(&state.ue, cfg),
        obstacle: step_entity(&state.obstacle, cfg),
        ..state.clone()
    };
    next.refresh(cfg);
    next
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    fn cfg() -> ChamberConfig {
        ChamberConfig::default()
    }

    fn bounce(x: f64, vx: f64, max_x: f64) -> Entity {
        let mut e = Entity::ue(Vec2::new(x, 3.0));
        e.motion = MotionModel::BounceX {
            speed: vx.abs(),
            min_x: 2.0,
            max_x,
        };
        e.velocity = Vec2::new(vx, 0.0);
        e
    }

    #[test]
    fn static_entity_is_fixed() {
        let e = Entity::ue(Vec2::new(3.0, 2.0));
        assert_eq!(step_entity(&e, &cfg()), e);
    }

    #[test]
    fn bounce_reflects_about_bound() {
        let next = step_entity(&bounce(5.9, 0.6, 6.0), &cfg());
        assert_abs_diff_eq!(next.position.x, 5.98, epsilon = 1e-12);
        assert_eq!(next.velocity.x, -0.6);
    }

    #[test]
    fn controlled_integrates_and_clamps() {
        let mut g = Entity::gnb(4.0, &cfg());
        g.velocity.x = 0.35;
        assert_abs_diff_eq!(step_entity(&g, &cfg()).position.x, 4.07, epsilon = 1e-12);
        g.position.x = 7.9;
        g.velocity.x = 1.0;
        assert_eq!(step_entity(&g, &cfg()).position.x, 8.0);
    }

    #[test]
    fn scripted_holds_final_waypoint() {
        let c = cfg();
        let script = MotionModel::Scripted {
            waypoints: vec![
                Waypoint {
                    time: 0.0,
                    x: 2.0,
                    y: 2.0,
                },
                Waypoint {
                    time: 1.0,
                    x: 2.6,
                    y: 2.0,
                },
            ],
        };
        let mut e = Entity::obstacle(Vec2::new(0.0, 0.0), Vec2::new(0.3, 0.3)).with_motion(script, 1.0);
        assert_eq!(e.position, Vec2::new(2.0, 2.0));
        assert_abs_diff_eq!(e.velocity.x, 0.6, epsilon = 1e-12);
        for _ in 0..10 {
            e = step_entity(&e, &c);
        }
        assert_abs_diff_eq!(e.position.x, 2.6, epsilon = 1e-12);
        assert_eq!(e.velocity, Vec2::ZERO);
    }

    #[test]
    fn fspl_values() {
        let c = cfg();
        assert_abs_diff_eq!(path_loss(1.0, LosStatus::Los, &c), 43.3207, epsilon = 1e-3);
        assert_abs_diff_eq!(path_loss(1.0, LosStatus::Nlos, &c), 63.3207, epsilon = 1e-3);
        let step = path_loss(2.0, LosStatus::Los, &c) - path_loss(1.0, LosStatus::Los, &c);
        assert_abs_diff_eq!(step, 20.0 * 2f64.log10(), epsilon = 1e-12);
        assert_eq!(path_loss(0.0, LosStatus::Los, &c), path_loss(0.1, LosStatus::Los, &c));
    }

    #[test]
    fn compute_los_examples() {
        let obs = |cx, cy| Entity::obstacle(Vec2::new(cx, cy), Vec2::new(0.3, 0.3));
        let (los, d) = compute_los(Vec2::new(0.0, 2.0), Vec2::new(6.0, 2.0), &obs(3.0, 2.0));
        assert_eq!((los, d), (LosStatus::Nlos, Some(0.0)));
        let (los, d) = compute_los(Vec2::new(0.0, 0.0), Vec2::new(6.0, 0.0), &obs(3.0, 3.0));
        assert_eq!((los, d), (LosStatus::Los, None));
        let (los, d) = compute_los(Vec2::new(0.0, 2.0), Vec2::new(6.0, 2.0), &obs(3.0, 2.25));
        assert_eq!(los, LosStatus::Nlos);
        assert_abs_diff_eq!(d.unwrap(), 0.25 / 0.18_f64.sqrt(), epsilon = 1e-12);
    }

    fn world(c: &ChamberConfig) -> ChamberState {
        ChamberState::new(
            Entity::gnb(2.0, c),
            Entity::ue(Vec2::new(2.0, 3.5)),
            Entity::obstacle(Vec2::new(4.0, 2.0), Vec2::new(0.4, 0.2)),
            c,
        )
        .unwrap()
    }

    #[test]
    fn advance_fixed_point() {
        let c = cfg();
        let s = world(&c);
        let n = advance(&s, 0.0, &c);
        assert_eq!(n.tick_index, 1);
        assert_eq!(
            (n.gnb.position, n.ue.position, n.obstacle.position),
            (s.gnb.position, s.ue.position, s.obstacle.position)
        );
    }

    #[test]
    fn advance_moves_only_bouncing_ue() {
        let c = cfg();
        let mut s = world(&c);
        s.ue = s.ue.clone().with_motion(
            MotionModel::BounceX {
                speed: 0.6,
                min_x: 0.0,
                max_x: 8.0,
            },
            1.0,
        );
        let n = advance(&s, 0.0, &c);
        assert_abs_diff_eq!(n.ue.position.x, 2.12, epsilon = 1e-12);
        assert_eq!(n.gnb.position, s.gnb.position);
        assert_eq!(n.obstacle.position, s.obstacle.position);
    }

    #[test]
    fn obstacle_entering_segment_adds_attenuation() {
        let c = cfg();
        let mut s = world(&c);
        // Leading edge at x = 2.5, moving left 0.6 m/s: 0.12 m per tick.
        s.obstacle.position.x = 2.5;
        s.obstacle = s.obstacle.clone().with_motion(
            MotionModel::BounceX {
                speed: 0.6,
                min_x: 0.4,
                max_x: 7.6,
            },
            -1.0,
        );
        s.obstacle.position.x = 2.5;
        s.refresh(&c);
        assert_eq!(s.los, LosStatus::Los);
        let mut prev = s;
        loop {
            let next = advance(&prev, 0.0, &c);
            if next.los == LosStatus::Nlos {
                // gNB and UE are static so the distance term is unchanged.
                assert_abs_diff_eq!(next.path_loss - prev.path_loss, c.nlos_attenuation, epsilon = 1e-12);
                let (oracle, _) = compute_los(next.gnb.position, next.ue.position, &next.obstacle);
                assert_eq!(oracle, LosStatus::Nlos);
                break;
            }
            prev = next;
        }
    }
}
