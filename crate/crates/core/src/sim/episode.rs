use std::fmt;
use std::path::Path;
use std::str::FromStr;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::sim::geometry::Vec2;
use crate::sim::render::Pose;
use crate::sim::world::{Profile, WorldMap, AGENT_RADIUS};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Difficulty {
    Easy,
    Medium,
    Hard,
}

impl Difficulty {
    /// Half-open geodesic distance range `[lo, hi)` in meters.
    pub fn range(self) -> (f64, f64) {
        match self {
            Difficulty::Easy => (1.5, 3.0),
            Difficulty::Medium => (3.0, 5.0),
            Difficulty::Hard => (5.0, 10.0),
        }
    }

    pub fn contains(self, d: f64) -> bool {
        let (lo, hi) = self.range();
        d >= lo && d < hi
    }

    pub fn name(self) -> &'static str {
        match self {
            Difficulty::Easy => "easy",
            Difficulty::Medium => "medium",
            Difficulty::Hard => "hard",
        }
    }
}

impl fmt::Display for Difficulty {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Difficulty {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "easy" => Ok(Difficulty::Easy),
            "medium" => Ok(Difficulty::Medium),
            "hard" => Ok(Difficulty::Hard),
            _ => Err(Error::invalid("difficulty", format!("unknown difficulty `{s}`"))),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct EpisodeSpec {
    pub world_seed: u64,
    pub profile: Profile,
    pub start: Pose,
    pub goal: Pose,
    pub difficulty: Difficulty,
    pub optimal_length: f64,
}

#[derive(Serialize, Deserialize)]
struct EpisodeRecord {
    world_seed: u64,
    profile: String,
    difficulty: Difficulty,
    start_x: f64,
    start_y: f64,
    start_theta: f64,
    goal_x: f64,
    goal_y: f64,
    goal_theta: f64,
    optimal_length: f64,
}

pub fn write_episodes(path: &Path, episodes: &[EpisodeSpec]) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    for e in episodes {
        w.serialize(EpisodeRecord {
            world_seed: e.world_seed,
            profile: e.profile.to_string(),
            difficulty: e.difficulty,
            start_x: e.start.position.x,
            start_y: e.start.position.y,
            start_theta: e.start.heading,
            goal_x: e.goal.position.x,
            goal_y: e.goal.position.y,
            goal_theta: e.goal.heading,
            optimal_length: e.optimal_length,
        })?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_episodes(path: &Path) -> Result<Vec<EpisodeSpec>> {
    let mut r = csv::Reader::from_path(path)?;
    let mut out = Vec::new();
    for rec in r.deserialize() {
        let rec: EpisodeRecord = rec?;
        out.push(EpisodeSpec {
            world_seed: rec.world_seed,
            profile: rec.profile.parse()?,
            difficulty: rec.difficulty,
            start: Pose::new(rec.start_x, rec.start_y, rec.start_theta),
            goal: Pose::new(rec.goal_x, rec.goal_y, rec.goal_theta),
            optimal_length: rec.optimal_length,
        });
    }
    Ok(out)
}

/// Margin beyond the agent radius kept around sampled poses.
pub const POSE_MARGIN: f64 = 0.1;

/// Uniform pose in free space with a uniform heading.
pub fn sample_free_pose<R: Rng + ?Sized>(world: &WorldMap, rng: &mut R) -> Result<Pose> {
    let b = &world.bounds;
    for _ in 0..10_000 {
        let p = Vec2::new(rng.random_range(b.min.x..b.max.x), rng.random_range(b.min.y..b.max.y));
        let on_free_cell = world
            .grid()
            .cell_of(p)
            .is_some_and(|(c, r)| !world.grid().is_occupied(c, r));
        if on_free_cell && world.clearance(p) >= AGENT_RADIUS + POSE_MARGIN {
            let heading = rng.random_range(-std::f64::consts::PI..std::f64::consts::PI);
            return Ok(Pose {
                position: p,
                heading,
            });
        }
    }
    Err(Error::Sampling("no free pose found".into()))
}

/// Start/goal pair whose geodesic distance lies in `[lo, hi)`; returns the
/// pair and that distance.
pub fn sample_start_goal<R: Rng + ?Sized>(
    world: &WorldMap,
    range: (f64, f64),
    rng: &mut R,
) -> Result<(Pose, Pose, f64)> {
    for _ in 0..200 {
        let goal = sample_free_pose(world, rng)?;
        let field = world.distance_field(goal.position)?;
        for _ in 0..50 {
            let start = sample_free_pose(world, rng)?;
            let d = field.distance(world.grid(), start.position)?;
            if d.is_finite() && d >= range.0 && d < range.1 {
                return Ok((start, goal, d));
            }
        }
    }
    Err(Error::Sampling(format!(
        "no start/goal pair in [{}, {}) m in world {}",
        range.0, range.1, world.seed
    )))
}
