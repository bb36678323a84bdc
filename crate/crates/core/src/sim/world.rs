use std::fmt::{self, Write as _};
use std::str::FromStr;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::sim::geometry::{ray_segment, Aabb, Rgb, Shape, Vec2};
use crate::sim::grid::{DistanceField, OccupancyGrid};

pub const GRID_RESOLUTION: f64 = 0.1;
pub const AGENT_RADIUS: f64 = 0.15;
pub const MAX_GENERATION_ATTEMPTS: usize = 100;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Profile {
    Sparse,
    Cluttered,
    Poles,
}

impl Profile {
    pub fn params(self) -> ProfileParams {
        match self {
            Profile::Sparse => ProfileParams {
                arena: 8.0,
                count: (4, 7),
                circle_fraction: 0.5,
                circle_radius: (0.2, 0.5),
                box_half: (0.2, 0.6),
                clearance: 0.6,
                placement: None,
            },
            Profile::Cluttered => ProfileParams {
                arena: 8.0,
                count: (10, 16),
                circle_fraction: 0.5,
                circle_radius: (0.2, 0.45),
                box_half: (0.2, 0.5),
                clearance: 0.55,
                placement: None,
            },
            Profile::Poles => ProfileParams {
                arena: 10.0,
                count: (6, 12),
                circle_fraction: 1.0,
                circle_radius: (0.15, 0.3),
                box_half: (0.0, 0.0),
                clearance: 0.8,
                placement: Some(Aabb::new(Vec2::new(2.5, 1.5), Vec2::new(7.5, 8.5))),
            },
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Profile::Sparse => "sparse",
            Profile::Cluttered => "cluttered",
            Profile::Poles => "poles",
        }
    }
}

impl fmt::Display for Profile {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Profile {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "sparse" => Ok(Profile::Sparse),
            "cluttered" => Ok(Profile::Cluttered),
            "poles" => Ok(Profile::Poles),
            _ => Err(Error::invalid("profile", format!("unknown profile `{s}`"))),
        }
    }
}

/// Knobs of the procedural generator. Arena is square, `[0, arena]^2`.
#[derive(Clone, Debug, PartialEq)]
pub struct ProfileParams {
    pub arena: f64,
    pub count: (usize, usize),
    pub circle_fraction: f64,
    pub circle_radius: (f64, f64),
    pub box_half: (f64, f64),
    /// Minimum gap between obstacles and between an obstacle and the walls.
    pub clearance: f64,
    /// Region obstacle centers are drawn from; the whole arena when `None`.
    pub placement: Option<Aabb>,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Obstacle {
    pub shape: Shape,
    pub color: Rgb,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct WallSegment {
    pub a: Vec2,
    pub b: Vec2,
    pub color: Rgb,
}

#[derive(Clone, Debug, PartialEq)]
pub struct WorldMap {
    pub seed: u64,
    pub profile: Option<Profile>,
    pub bounds: Aabb,
    pub obstacles: Vec<Obstacle>,
    pub walls: Vec<WallSegment>,
    grid: OccupancyGrid,
}

impl WorldMap {
    pub fn new(
        seed: u64,
        profile: Option<Profile>,
        bounds: Aabb,
        obstacles: Vec<Obstacle>,
        walls: Vec<WallSegment>,
    ) -> Self {
        let grid = OccupancyGrid::build(
            &bounds,
            GRID_RESOLUTION,
            AGENT_RADIUS,
            obstacles.iter().map(|o| &o.shape),
        );
        WorldMap {
            seed,
            profile,
            bounds,
            obstacles,
            walls,
            grid,
        }
    }

    /// Walled arena with no obstacles, walls split into grey-scale segments.
    pub fn open(width: f64, height: f64) -> Self {
        let bounds = Aabb::new(Vec2::new(0.0, 0.0), Vec2::new(width, height));
        let mut shade = 0.0;
        let walls = perimeter_segments(&bounds, || {
            shade += 0.13;
            let v = 0.4 + 0.5 * (shade % 1.0);
            Rgb([v as f32, v as f32, v as f32])
        });
        WorldMap::new(0, None, bounds, Vec::new(), walls)
    }

    pub fn grid(&self) -> &OccupancyGrid {
        &self.grid
    }

    /// Distance from `p` to the nearest obstacle surface or wall.
    pub fn clearance(&self, p: Vec2) -> f64 {
        let b = &self.bounds;
        let wall = (p.x - b.min.x)
            .min(b.max.x - p.x)
            .min(p.y - b.min.y)
            .min(b.max.y - p.y);
        self.obstacles
            .iter()
            .map(|o| o.shape.signed_distance(p))
            .fold(wall, f64::min)
    }

    /// True when an agent disc centered at `p` touches nothing.
    pub fn is_free(&self, p: Vec2) -> bool {
        self.clearance(p) >= AGENT_RADIUS
    }

    /// Nearest surface hit along a unit ray: distance and surface color.
    pub fn cast_ray(&self, origin: Vec2, dir: Vec2) -> Option<(f64, Rgb)> {
        let mut best: Option<(f64, Rgb)> = None;
        let mut consider = |t: f64, c: Rgb| {
            if best.is_none_or(|(bt, _)| t < bt) {
                best = Some((t, c));
            }
        };
        for o in &self.obstacles {
            if let Some(t) = o.shape.ray_hit(origin, dir) {
                consider(t, o.color);
            }
        }
        for w in &self.walls {
            if let Some(t) = ray_segment(origin, dir, w.a, w.b) {
                consider(t, w.color);
            }
        }
        best
    }

    pub fn distance_field(&self, target: Vec2) -> Result<DistanceField> {
        DistanceField::new(&self.grid, target, DistanceField::DEFAULT_SNAP)
    }

    /// Line-oriented text form; `from_text` restores an equal map.
    pub fn to_text(&self) -> String {
        let mut s = String::from("# imagenav world v1\n");
        let _ = writeln!(s, "seed = {}", self.seed);
        if let Some(p) = self.profile {
            let _ = writeln!(s, "profile = {p}");
        }
        let b = &self.bounds;
        let _ = writeln!(s, "bounds = {} {} {} {}", b.min.x, b.min.y, b.max.x, b.max.y);
        for o in &self.obstacles {
            let [r, g, bl] = o.color.0;
            match o.shape {
                Shape::Circle { center, radius } => {
                    let _ = writeln!(
                        s,
                        "obstacle = circle {} {} {} {r} {g} {bl}",
                        center.x, center.y, radius
                    );
                }
                Shape::Rect(bx) => {
                    let _ = writeln!(
                        s,
                        "obstacle = box {} {} {} {} {r} {g} {bl}",
                        bx.min.x, bx.min.y, bx.max.x, bx.max.y
                    );
                }
            }
        }
        for w in &self.walls {
            let [r, g, bl] = w.color.0;
            let _ = writeln!(s, "wall = {} {} {} {} {r} {g} {bl}", w.a.x, w.a.y, w.b.x, w.b.y);
        }
        s
    }

    pub fn from_text(text: &str) -> Result<Self> {
        let mut seed = None;
        let mut profile = None;
        let mut bounds = None;
        let mut obstacles = Vec::new();
        let mut walls = Vec::new();
        for (i, raw) in text.lines().enumerate() {
            let line_no = i + 1;
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (key, value) = line
                .split_once('=')
                .ok_or_else(|| Error::parse(line_no, "expected `key = value`"))?;
            let value = value.trim();
            match key.trim() {
                "seed" => {
                    seed = Some(value.parse().map_err(|_| Error::parse(line_no, "bad seed"))?);
                }
                "profile" => {
                    profile = Some(value.parse().map_err(|e: Error| Error::parse(line_no, e.to_string()))?);
                }
                "bounds" => {
                    let v = floats(value, 4, line_no)?;
                    bounds = Some(Aabb::new(Vec2::new(v[0], v[1]), Vec2::new(v[2], v[3])));
                }
                "obstacle" => {
                    let (kind, rest) = value
                        .split_once(char::is_whitespace)
                        .ok_or_else(|| Error::parse(line_no, "obstacle needs a kind"))?;
                    let obstacle = match kind {
                        "circle" => {
                            let v = floats(rest, 6, line_no)?;
                            Obstacle {
                                shape: Shape::Circle {
                                    center: Vec2::new(v[0], v[1]),
                                    radius: v[2],
                                },
                                color: color(&v[3..]),
                            }
                        }
                        "box" => {
                            let v = floats(rest, 7, line_no)?;
                            Obstacle {
                                shape: Shape::Rect(Aabb::new(Vec2::new(v[0], v[1]), Vec2::new(v[2], v[3]))),
                                color: color(&v[4..]),
                            }
                        }
                        other => return Err(Error::parse(line_no, format!("unknown obstacle kind `{other}`"))),
                    };
                    obstacles.push(obstacle);
                }
                "wall" => {
                    let v = floats(value, 7, line_no)?;
                    walls.push(WallSegment {
                        a: Vec2::new(v[0], v[1]),
                        b: Vec2::new(v[2], v[3]),
                        color: color(&v[4..]),
                    });
                }
                other => return Err(Error::parse(line_no, format!("unknown key `{other}`"))),
            }
        }
        let bounds = bounds.ok_or_else(|| Error::parse(0, "missing `bounds`"))?;
        Ok(WorldMap::new(seed.unwrap_or(0), profile, bounds, obstacles, walls))
    }
}

fn floats(s: &str, n: usize, line: usize) -> Result<Vec<f64>> {
    let v: Vec<f64> = s
        .split_whitespace()
        .map(|t| t.parse::<f64>())
        .collect::<std::result::Result<_, _>>()
        .map_err(|e| Error::parse(line, e.to_string()))?;
    if v.len() != n {
        return Err(Error::parse(line, format!("expected {n} numbers, found {}", v.len())));
    }
    Ok(v)
}

fn color(v: &[f64]) -> Rgb {
    Rgb([v[0] as f32, v[1] as f32, v[2] as f32])
}

/// Splits the arena boundary into segments of at most 1 m, counter-clockwise.
fn perimeter_segments(bounds: &Aabb, mut next_color: impl FnMut() -> Rgb) -> Vec<WallSegment> {
    let corners = [
        bounds.min,
        Vec2::new(bounds.max.x, bounds.min.y),
        bounds.max,
        Vec2::new(bounds.min.x, bounds.max.y),
    ];
    let mut out = Vec::new();
    for i in 0..4 {
        let (a, b) = (corners[i], corners[(i + 1) % 4]);
        let n = a.dist(b).ceil().max(1.0) as usize;
        for k in 0..n {
            out.push(WallSegment {
                a: a + (b - a) * (k as f64 / n as f64),
                b: a + (b - a) * ((k + 1) as f64 / n as f64),
                color: next_color(),
            });
        }
    }
    out
}

/// Deterministic procedural world for `(seed, profile)`.
pub fn generate_world(seed: u64, profile: Profile) -> Result<WorldMap> {
    let mut world = generate_with_params(seed, &profile.params())?;
    world.profile = Some(profile);
    Ok(world)
}

/// Rejection sampler: draws obstacle layouts until the free space of the
/// occupancy grid is one connected component.
pub fn generate_with_params(seed: u64, params: &ProfileParams) -> Result<WorldMap> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let bounds = Aabb::new(Vec2::new(0.0, 0.0), Vec2::new(params.arena, params.arena));
    for _ in 0..MAX_GENERATION_ATTEMPTS {
        let obstacles = sample_layout(&mut rng, &bounds, params);
        let walls = perimeter_segments(&bounds, || {
            Rgb::from_hsv(rng.random::<f64>(), rng.random_range(0.25..0.7), rng.random_range(0.55..1.0))
        });
        let world = WorldMap::new(seed, None, bounds, obstacles, walls);
        if world.grid.is_connected() {
            return Ok(world);
        }
    }
    Err(Error::WorldGeneration {
        seed,
        attempts: MAX_GENERATION_ATTEMPTS,
    })
}

fn sample_layout(rng: &mut ChaCha8Rng, bounds: &Aabb, p: &ProfileParams) -> Vec<Obstacle> {
    let target = rng.random_range(p.count.0..=p.count.1);
    let region = p.placement.unwrap_or(*bounds);
    let mut out: Vec<Obstacle> = Vec::with_capacity(target);
    let mut tries = 0;
    while out.len() < target && tries < 200 * target {
        tries += 1;
        let center = Vec2::new(
            rng.random_range(region.min.x..=region.max.x),
            rng.random_range(region.min.y..=region.max.y),
        );
        let shape = if rng.random::<f64>() < p.circle_fraction {
            Shape::Circle {
                center,
                radius: rng.random_range(p.circle_radius.0..=p.circle_radius.1),
            }
        } else {
            let hx = rng.random_range(p.box_half.0..=p.box_half.1);
            let hy = rng.random_range(p.box_half.0..=p.box_half.1);
            Shape::Rect(Aabb::new(
                Vec2::new(center.x - hx, center.y - hy),
                Vec2::new(center.x + hx, center.y + hy),
            ))
        };
        let bb = shape.bounding_box();
        let inside = bb.min.x - bounds.min.x >= p.clearance
            && bb.min.y - bounds.min.y >= p.clearance
            && bounds.max.x - bb.max.x >= p.clearance
            && bounds.max.y - bb.max.y >= p.clearance;
        if !inside || out.iter().any(|o| o.shape.gap(&shape) < p.clearance) {
            continue;
        }
        let color = Rgb::from_hsv(rng.random::<f64>(), rng.random_range(0.5..0.95), rng.random_range(0.45..0.95));
        out.push(Obstacle { shape, color });
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn same_seed_same_map() {
        assert_eq!(
            generate_world(42, Profile::Sparse).unwrap(),
            generate_world(42, Profile::Sparse).unwrap()
        );
        assert_ne!(
            generate_world(42, Profile::Sparse).unwrap(),
            generate_world(43, Profile::Sparse).unwrap()
        );
    }

    #[test]
    fn poles_are_small_circles_in_ten_meter_arena() {
        let w = generate_world(1, Profile::Poles).unwrap();
        assert_eq!(w.bounds.max, Vec2::new(10.0, 10.0));
        assert!((6..=12).contains(&w.obstacles.len()));
        for o in &w.obstacles {
            match o.shape {
                Shape::Circle { radius, .. } => assert!((0.15..=0.3).contains(&radius)),
                Shape::Rect(_) => panic!("box in poles world"),
            }
        }
    }

    #[test]
    fn obstacles_strictly_inside_bounds() {
        for seed in 0..20 {
            for profile in [Profile::Sparse, Profile::Cluttered, Profile::Poles] {
                let w = generate_world(seed, profile).unwrap();
                for o in &w.obstacles {
                    let bb = o.shape.bounding_box();
                    assert!(bb.min.x > w.bounds.min.x && bb.max.x < w.bounds.max.x);
                    assert!(bb.min.y > w.bounds.min.y && bb.max.y < w.bounds.max.y);
                }
            }
        }
    }

    #[test]
    fn impossible_profile_reports_generation_error() {
        // wall inflation alone fills a 0.3 m arena
        let params = ProfileParams {
            arena: 0.3,
            count: (0, 0),
            circle_fraction: 1.0,
            circle_radius: (0.1, 0.1),
            box_half: (0.1, 0.1),
            clearance: 0.0,
            placement: None,
        };
        match generate_with_params(5, &params) {
            Err(Error::WorldGeneration { seed: 5, attempts }) => assert_eq!(attempts, MAX_GENERATION_ATTEMPTS),
            other => panic!("expected generation error, got {other:?}"),
        }
    }

    #[test]
    fn text_round_trip() {
        let w = generate_world(9, Profile::Cluttered).unwrap();
        let back = WorldMap::from_text(&w.to_text()).unwrap();
        assert_eq!(back, w);
    }

    #[test]
    fn parse_error_names_line() {
        let err = WorldMap::from_text("bounds = 0 0 8 8\nobstacle = circle 1 2\n").unwrap_err();
        assert!(matches!(err, Error::Parse { line: 2, .. }), "{err}");
    }
}
