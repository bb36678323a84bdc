//! Planar navigation worlds: procedural layouts, occupancy and geodesic
//! distance, unicycle motion with sliding contact, and a ray-cast camera.

pub mod env;
pub mod episode;
pub mod geometry;
pub mod grid;
pub mod render;
pub mod world;

pub use env::{
    compute_reward, heading_error_deg, integrate, is_stop, v_ang_max, Action, AgentState, EnvConfig, NavEnv,
    NormalizedAction, Observation, RewardParams, StepInfo, StepResult, STOP_V_ANG_DEG, STOP_V_LIN, V_ANG_MAX_DEG,
    V_LIN_MAX,
};
pub use episode::{read_episodes, sample_free_pose, sample_start_goal, write_episodes, Difficulty, EpisodeSpec};
pub use geometry::{wrap_angle, Aabb, Rgb, Shape, Vec2};
pub use grid::{DistanceField, OccupancyGrid};
pub use render::{depth_rays, render, CameraConfig, Image, Pose};
pub use world::{generate_world, AGENT_RADIUS, GRID_RESOLUTION, generate_with_params, Obstacle, Profile, ProfileParams, WallSegment, WorldMap};

use crate::error::Result;

/// Grid geodesic distance between two points of `world`.
pub fn geodesic_distance(p: Vec2, q: Vec2, world: &WorldMap) -> Result<f64> {
    world.distance_field(q)?.distance(world.grid(), p)
}
