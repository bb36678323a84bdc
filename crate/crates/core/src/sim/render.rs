use crate::sim::geometry::{Rgb, Vec2};
use crate::sim::world::WorldMap;

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Pose {
    pub position: Vec2,
    pub heading: f64,
}

impl Pose {
    pub fn new(x: f64, y: f64, heading: f64) -> Self {
        Pose {
            position: Vec2::new(x, y),
            heading,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct CameraConfig {
    pub fov: f64,
    pub rays: usize,
    pub height: usize,
    pub max_depth: f64,
}

impl Default for CameraConfig {
    fn default() -> Self {
        CameraConfig {
            fov: 90f64.to_radians(),
            rays: 64,
            height: 16,
            max_depth: 3.0,
        }
    }
}

pub const CEILING: Rgb = Rgb([0.82, 0.84, 0.88]);
pub const FLOOR: Rgb = Rgb([0.36, 0.32, 0.28]);

/// Channel-major `C x H x W` image with values in `[0, 1]`.
#[derive(Clone, Debug, PartialEq)]
pub struct Image {
    pub channels: usize,
    pub height: usize,
    pub width: usize,
    pub data: Vec<f32>,
}

impl Image {
    pub fn filled(channels: usize, height: usize, width: usize, value: f32) -> Self {
        Image {
            channels,
            height,
            width,
            data: vec![value; channels * height * width],
        }
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn at(&self, c: usize, y: usize, x: usize) -> f32 {
        self.data[(c * self.height + y) * self.width + x]
    }

    pub fn set(&mut self, c: usize, y: usize, x: usize, v: f32) {
        self.data[(c * self.height + y) * self.width + x] = v;
    }
}

/// Heading of ray `i`; ray 0 is the leftmost image column.
pub fn ray_angle(heading: f64, i: usize, cam: &CameraConfig) -> f64 {
    heading + cam.fov / 2.0 - (i as f64 + 0.5) * cam.fov / cam.rays as f64
}

/// Depth rays only, clipped to `max_depth`.
pub fn depth_rays(world: &WorldMap, pose: &Pose, cam: &CameraConfig) -> Vec<f64> {
    (0..cam.rays)
        .map(|i| {
            let dir = Vec2::from_angle(ray_angle(pose.heading, i, cam));
            world
                .cast_ray(pose.position, dir)
                .map_or(cam.max_depth, |(t, _)| t.clamp(0.0, cam.max_depth))
        })
        .collect()
}

/// Renders the color strip and the clipped depth rays seen from `pose`.
///
/// Each image column is one ray. The hit surface occupies a band around the
/// horizon whose half height shrinks with distance, shaded by `1 / (1 + d/4)`;
/// rows above and below show ceiling and floor.
pub fn render(world: &WorldMap, pose: &Pose, cam: &CameraConfig) -> (Image, Vec<f64>) {
    let (w, h) = (cam.rays, cam.height);
    let mut img = Image::filled(3, h, w, 0.0);
    let mut depth = Vec::with_capacity(w);
    let half = h as f64 / 2.0;
    for i in 0..w {
        let dir = Vec2::from_angle(ray_angle(pose.heading, i, cam));
        let hit = world.cast_ray(pose.position, dir);
        let (band, color, shade) = match hit {
            Some((t, c)) => (
                (half * 0.5 / t.max(1e-6)).min(half),
                c,
                (1.0 / (1.0 + 0.25 * t)) as f32,
            ),
            None => (0.0, CEILING, 1.0),
        };
        depth.push(hit.map_or(cam.max_depth, |(t, _)| t.clamp(0.0, cam.max_depth)));
        for y in 0..h {
            let offset = (y as f64 + 0.5 - half).abs();
            let px = if offset < band {
                color.0.map(|v| v * shade)
            } else if (y as f64) < half {
                CEILING.0
            } else {
                FLOOR.0
            };
            for (c, v) in px.iter().enumerate() {
                img.set(c, y, i, v.clamp(0.0, 1.0));
            }
        }
    }
    (img, depth)
}
