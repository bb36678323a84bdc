use std::sync::Arc;

use crate::error::Result;
use crate::sim::geometry::{wrap_angle, Vec2};
use crate::sim::grid::DistanceField;
use crate::sim::render::{render, CameraConfig, Image, Pose};
use crate::sim::world::{WorldMap, AGENT_RADIUS};

pub const V_LIN_MAX: f64 = 0.25;
pub const V_ANG_MAX_DEG: f64 = 15.0;

pub fn v_ang_max() -> f64 {
    V_ANG_MAX_DEG.to_radians()
}

/// Physical command: forward speed in m/s, yaw rate in rad/s (positive turns
/// left).
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct Action {
    pub v_lin: f64,
    pub v_ang: f64,
}

impl Action {
    /// Clamps into `[0, 0.25] x [-15 deg/s, 15 deg/s]`.
    pub fn new(v_lin: f64, v_ang: f64) -> Self {
        let w = v_ang_max();
        Action {
            v_lin: v_lin.clamp(0.0, V_LIN_MAX),
            v_ang: v_ang.clamp(-w, w),
        }
    }

    pub fn normalized(&self) -> NormalizedAction {
        NormalizedAction {
            lin: 2.0 * self.v_lin / V_LIN_MAX - 1.0,
            ang: self.v_ang / v_ang_max(),
        }
    }
}

/// Policy-side action in `[-1, 1]^2`, affinely mapped to [`Action`].
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct NormalizedAction {
    pub lin: f64,
    pub ang: f64,
}

impl NormalizedAction {
    pub fn new(lin: f64, ang: f64) -> Self {
        NormalizedAction {
            lin: lin.clamp(-1.0, 1.0),
            ang: ang.clamp(-1.0, 1.0),
        }
    }

    pub fn physical(&self) -> Action {
        Action::new((self.lin + 1.0) * 0.5 * V_LIN_MAX, self.ang * v_ang_max())
    }

    pub fn to_array(&self) -> [f64; 2] {
        [self.lin, self.ang]
    }
}

pub const STOP_V_LIN: f64 = 0.025;
pub const STOP_V_ANG_DEG: f64 = 1.5;

/// Early-termination rule: both speeds strictly below their thresholds.
pub fn is_stop(a: &Action) -> bool {
    a.v_lin < STOP_V_LIN && a.v_ang.abs() < STOP_V_ANG_DEG.to_radians()
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct AgentState {
    pub position: Vec2,
    pub heading: f64,
    pub time_step: usize,
}

impl AgentState {
    pub fn pose(&self) -> Pose {
        Pose {
            position: self.position,
            heading: self.heading,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct RewardParams {
    pub success_distance: f64,
    pub success_angle_deg: f64,
    pub success_reward: f64,
    pub slack: f64,
}

impl Default for RewardParams {
    fn default() -> Self {
        RewardParams {
            success_distance: 1.0,
            success_angle_deg: 25.0,
            success_reward: 2.5,
            slack: -0.01,
        }
    }
}

impl RewardParams {
    pub fn is_success(&self, d: f64, alpha_deg: f64) -> bool {
        d <= self.success_distance && alpha_deg <= self.success_angle_deg
    }
}

pub fn compute_reward(d_t: f64, d_prev: f64, alpha_deg: f64, p: &RewardParams) -> f64 {
    let bonus = if p.is_success(d_t, alpha_deg) {
        p.success_reward
    } else {
        0.0
    };
    (d_prev - d_t) + bonus + p.slack
}

/// Heading error in degrees, in `[0, 180]`.
pub fn heading_error_deg(heading: f64, goal_heading: f64) -> f64 {
    wrap_angle(heading - goal_heading).abs().to_degrees()
}

/// Pushes `p` out of every penetrated obstacle and wall. Returns `None`
/// when four sweeps do not reach free space.
fn resolve(world: &WorldMap, mut p: Vec2) -> Option<Vec2> {
    let target = AGENT_RADIUS + 1e-9;
    for _ in 0..4 {
        if world.is_free(p) {
            return Some(p);
        }
        for o in &world.obstacles {
            let sd = o.shape.signed_distance(p);
            if sd < AGENT_RADIUS {
                p = p + o.shape.normal(p) * (target - sd);
            }
        }
        let b = &world.bounds;
        p.x = p.x.clamp(b.min.x + target, b.max.x - target);
        p.y = p.y.clamp(b.min.y + target, b.max.y - target);
    }
    world.is_free(p).then_some(p)
}

/// Unicycle update with sliding contact. The flag is true when the
/// commanded displacement would have penetrated an inflated obstacle.
pub fn integrate(state: &AgentState, action: &Action, world: &WorldMap, dt: f64) -> (AgentState, bool) {
    let a = Action::new(action.v_lin, action.v_ang);
    let delta = Vec2::new(a.v_lin * state.heading.cos() * dt, a.v_lin * state.heading.sin() * dt);
    let target = state.position + delta;
    let heading = wrap_angle(state.heading + a.v_ang * dt);
    let (position, collision) = if world.is_free(target) {
        (target, false)
    } else {
        (resolve(world, target).unwrap_or(state.position), true)
    };
    (
        AgentState {
            position,
            heading,
            time_step: state.time_step + 1,
        },
        collision,
    )
}

#[derive(Clone, Debug, PartialEq)]
pub struct Observation {
    pub current: Arc<Image>,
    pub goal: Arc<Image>,
    pub depth: Vec<f64>,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct StepInfo {
    pub distance: f64,
    pub heading_error_deg: f64,
    pub success: bool,
    pub stopped: bool,
    pub timeout: bool,
}

#[derive(Clone, Debug, PartialEq)]
pub struct StepResult {
    pub observation: Observation,
    pub reward: f64,
    pub done: bool,
    pub collision: bool,
    pub info: StepInfo,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct EnvConfig {
    pub dt: f64,
    pub max_steps: usize,
    pub camera: CameraConfig,
    pub reward: RewardParams,
    /// Grid geodesic distance to the goal; straight-line distance otherwise.
    pub geodesic: bool,
}

impl Default for EnvConfig {
    fn default() -> Self {
        EnvConfig {
            dt: 0.1,
            max_steps: 500,
            camera: CameraConfig::default(),
            reward: RewardParams::default(),
            geodesic: true,
        }
    }
}

/// One navigation episode at a time in a fixed world.
#[derive(Clone, Debug)]
pub struct NavEnv {
    world: Arc<WorldMap>,
    pub config: EnvConfig,
    state: AgentState,
    goal: Pose,
    goal_image: Arc<Image>,
    field: Option<DistanceField>,
    prev_distance: f64,
    path_length: f64,
    done: bool,
}

impl NavEnv {
    pub fn new(world: Arc<WorldMap>, config: EnvConfig) -> Self {
        let cam = config.camera;
        NavEnv {
            world,
            config,
            state: AgentState {
                position: Vec2::default(),
                heading: 0.0,
                time_step: 0,
            },
            goal: Pose::new(0.0, 0.0, 0.0),
            goal_image: Arc::new(Image::filled(3, cam.height, cam.rays, 0.0)),
            field: None,
            prev_distance: 0.0,
            path_length: 0.0,
            done: true,
        }
    }

    pub fn world(&self) -> &Arc<WorldMap> {
        &self.world
    }

    pub fn state(&self) -> &AgentState {
        &self.state
    }

    pub fn goal(&self) -> &Pose {
        &self.goal
    }

    pub fn path_length(&self) -> f64 {
        self.path_length
    }

    pub fn is_done(&self) -> bool {
        self.done
    }

    pub fn reset(&mut self, start: Pose, goal: Pose) -> Result<Observation> {
        self.goal = goal;
        self.field = if self.config.geodesic {
            Some(self.world.distance_field(goal.position)?)
        } else {
            None
        };
        self.state = AgentState {
            position: start.position,
            heading: wrap_angle(start.heading),
            time_step: 0,
        };
        self.goal_image = Arc::new(render(&self.world, &goal, &self.config.camera).0);
        self.prev_distance = self.distance_to_goal()?;
        self.path_length = 0.0;
        self.done = false;
        Ok(self.observe())
    }

    pub fn distance_to_goal(&self) -> Result<f64> {
        match &self.field {
            Some(f) => f.distance(self.world.grid(), self.state.position),
            None => Ok(self.state.position.dist(self.goal.position)),
        }
    }

    pub fn observe(&self) -> Observation {
        let (img, depth) = render(&self.world, &self.state.pose(), &self.config.camera);
        Observation {
            current: Arc::new(img),
            goal: Arc::clone(&self.goal_image),
            depth,
        }
    }

    pub fn step(&mut self, action: &Action) -> Result<StepResult> {
        let (next, collision) = integrate(&self.state, action, &self.world, self.config.dt);
        self.path_length += next.position.dist(self.state.position);
        self.state = next;
        let d = self.distance_to_goal()?;
        let alpha = heading_error_deg(self.state.heading, self.goal.heading);
        let reward = compute_reward(d, self.prev_distance, alpha, &self.config.reward);
        self.prev_distance = d;
        let success = self.config.reward.is_success(d, alpha);
        let stopped = is_stop(&Action::new(action.v_lin, action.v_ang));
        let timeout = self.state.time_step >= self.config.max_steps;
        self.done = stopped || success || timeout;
        Ok(StepResult {
            observation: self.observe(),
            reward,
            done: self.done,
            collision,
            info: StepInfo {
                distance: d,
                heading_error_deg: alpha,
                success,
                stopped,
                timeout,
            },
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn normalized_round_trip() {
        for &(l, a) in &[(-1.0, -1.0), (1.0, 1.0), (0.0, 0.0), (0.3, -0.7)] {
            let n = NormalizedAction::new(l, a);
            let back = n.physical().normalized();
            assert!((back.lin - l).abs() < 1e-12 && (back.ang - a).abs() < 1e-12);
        }
        let mid = NormalizedAction::new(0.0, 0.0).physical();
        assert_eq!(mid.v_lin, 0.125);
        assert_eq!(mid.v_ang, 0.0);
    }

    #[test]
    fn reward_examples() {
        let p = RewardParams::default();
        assert!((compute_reward(1.9, 2.0, 90.0, &p) - 0.09).abs() < 1e-12);
        assert!((compute_reward(0.5, 0.5, 10.0, &p) - 2.49).abs() < 1e-12);
        assert_eq!(compute_reward(5.0, 5.0, 180.0, &p), -0.01);
    }

    #[test]
    fn stop_thresholds_are_strict() {
        assert!(is_stop(&Action::new(0.02, 1f64.to_radians())));
        assert!(!is_stop(&Action::new(0.2, 0.0)));
        assert!(!is_stop(&Action::new(0.0, 1.5f64.to_radians())));
        assert!(!is_stop(&Action::new(0.025, 0.0)));
    }

    #[test]
    fn straight_move_in_open_space() {
        let world = WorldMap::open(6.0, 6.0);
        let s = AgentState {
            position: Vec2::new(3.0, 3.0),
            heading: 0.0,
            time_step: 0,
        };
        let (n, c) = integrate(&s, &Action::new(0.25, 0.0), &world, 0.1);
        assert!(!c);
        assert_eq!(n.position.x, 3.0 + 0.025);
        assert_eq!(n.position.y, 3.0);
        assert_eq!(n.time_step, 1);
    }

    #[test]
    fn turn_in_place() {
        let world = WorldMap::open(6.0, 6.0);
        let s = AgentState {
            position: Vec2::new(3.0, 3.0),
            heading: 0.2,
            time_step: 0,
        };
        let (n, c) = integrate(&s, &Action::new(0.0, v_ang_max()), &world, 0.1);
        assert!(!c);
        assert_eq!(n.position, s.position);
        assert!((n.heading - 0.2 - 1.5f64.to_radians()).abs() < 1e-15);
    }

    #[test]
    fn wall_contact_slides() {
        let world = WorldMap::open(6.0, 6.0);
        // 0.01 m from touching the east wall, heading into it at 45 degrees
        let s = AgentState {
            position: Vec2::new(6.0 - AGENT_RADIUS - 0.01, 3.0),
            heading: std::f64::consts::FRAC_PI_4,
            time_step: 0,
        };
        let (n, c) = integrate(&s, &Action::new(0.25, 0.0), &world, 0.1);
        assert!(c);
        assert!(world.is_free(n.position));
        let dy = 0.025 * std::f64::consts::FRAC_PI_4.sin();
        assert!((n.position.y - 3.0 - dy).abs() < 1e-12);
    }
}
