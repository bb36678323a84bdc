use std::ops::{Add, Mul, Neg, Sub};

#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct Vec2 {
    pub x: f64,
    pub y: f64,
}

impl Vec2 {
    pub const fn new(x: f64, y: f64) -> Self {
        Vec2 { x, y }
    }

    pub fn from_angle(theta: f64) -> Self {
        Vec2::new(theta.cos(), theta.sin())
    }

    pub fn dot(self, o: Vec2) -> f64 {
        self.x * o.x + self.y * o.y
    }

    pub fn cross(self, o: Vec2) -> f64 {
        self.x * o.y - self.y * o.x
    }

    pub fn norm(self) -> f64 {
        self.x.hypot(self.y)
    }

    pub fn dist(self, o: Vec2) -> f64 {
        (self - o).norm()
    }
}

impl Add for Vec2 {
    type Output = Vec2;
    fn add(self, o: Vec2) -> Vec2 {
        Vec2::new(self.x + o.x, self.y + o.y)
    }
}

impl Sub for Vec2 {
    type Output = Vec2;
    fn sub(self, o: Vec2) -> Vec2 {
        Vec2::new(self.x - o.x, self.y - o.y)
    }
}

impl Mul<f64> for Vec2 {
    type Output = Vec2;
    fn mul(self, s: f64) -> Vec2 {
        Vec2::new(self.x * s, self.y * s)
    }
}

impl Neg for Vec2 {
    type Output = Vec2;
    fn neg(self) -> Vec2 {
        Vec2::new(-self.x, -self.y)
    }
}

/// Wraps an angle into `(-pi, pi]`.
pub fn wrap_angle(theta: f64) -> f64 {
    let two_pi = 2.0 * std::f64::consts::PI;
    let a = theta.rem_euclid(two_pi);
    if a > std::f64::consts::PI {
        a - two_pi
    } else {
        a
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Rgb(pub [f32; 3]);

impl Rgb {
    /// HSV to RGB with all components in `[0, 1]`.
    pub fn from_hsv(h: f64, s: f64, v: f64) -> Self {
        let h6 = (h.rem_euclid(1.0)) * 6.0;
        let i = h6.floor() as i32 % 6;
        let f = h6 - h6.floor();
        let p = v * (1.0 - s);
        let q = v * (1.0 - f * s);
        let t = v * (1.0 - (1.0 - f) * s);
        let (r, g, b) = match i {
            0 => (v, t, p),
            1 => (q, v, p),
            2 => (p, v, t),
            3 => (p, q, v),
            4 => (t, p, v),
            _ => (v, p, q),
        };
        Rgb([r as f32, g as f32, b as f32])
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Aabb {
    pub min: Vec2,
    pub max: Vec2,
}

impl Aabb {
    pub fn new(min: Vec2, max: Vec2) -> Self {
        Aabb { min, max }
    }

    pub fn width(&self) -> f64 {
        self.max.x - self.min.x
    }

    pub fn height(&self) -> f64 {
        self.max.y - self.min.y
    }

    pub fn contains(&self, p: Vec2) -> bool {
        p.x >= self.min.x && p.x <= self.max.x && p.y >= self.min.y && p.y <= self.max.y
    }

    /// Gap between two boxes (0 when they overlap).
    pub fn gap(&self, o: &Aabb) -> f64 {
        let dx = (self.min.x - o.max.x).max(o.min.x - self.max.x).max(0.0);
        let dy = (self.min.y - o.max.y).max(o.min.y - self.max.y).max(0.0);
        dx.hypot(dy)
    }

    /// Distance from a point to the box (0 inside).
    pub fn point_gap(&self, p: Vec2) -> f64 {
        let dx = (self.min.x - p.x).max(p.x - self.max.x).max(0.0);
        let dy = (self.min.y - p.y).max(p.y - self.max.y).max(0.0);
        dx.hypot(dy)
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub enum Shape {
    Circle { center: Vec2, radius: f64 },
    Rect(Aabb),
}

impl Shape {
    /// Signed distance: positive outside, negative inside.
    pub fn signed_distance(&self, p: Vec2) -> f64 {
        match self {
            Shape::Circle { center, radius } => p.dist(*center) - radius,
            Shape::Rect(b) => {
                let c = Vec2::new((b.min.x + b.max.x) * 0.5, (b.min.y + b.max.y) * 0.5);
                let half = Vec2::new(b.width() * 0.5, b.height() * 0.5);
                let qx = (p.x - c.x).abs() - half.x;
                let qy = (p.y - c.y).abs() - half.y;
                let outside = Vec2::new(qx.max(0.0), qy.max(0.0)).norm();
                outside + qx.max(qy).min(0.0)
            }
        }
    }

    /// Unit outward normal of the distance field at `p`.
    pub fn normal(&self, p: Vec2) -> Vec2 {
        match self {
            Shape::Circle { center, .. } => {
                let d = p - *center;
                let n = d.norm();
                if n > 0.0 {
                    d * (1.0 / n)
                } else {
                    Vec2::new(1.0, 0.0)
                }
            }
            Shape::Rect(b) => {
                let cx = p.x.clamp(b.min.x, b.max.x);
                let cy = p.y.clamp(b.min.y, b.max.y);
                let d = p - Vec2::new(cx, cy);
                let n = d.norm();
                if n > 0.0 {
                    return d * (1.0 / n);
                }
                // inside: leave through the nearest face
                let faces = [
                    (p.x - b.min.x, Vec2::new(-1.0, 0.0)),
                    (b.max.x - p.x, Vec2::new(1.0, 0.0)),
                    (p.y - b.min.y, Vec2::new(0.0, -1.0)),
                    (b.max.y - p.y, Vec2::new(0.0, 1.0)),
                ];
                faces
                    .iter()
                    .fold(faces[0], |acc, f| if f.0 < acc.0 { *f } else { acc })
                    .1
            }
        }
    }

    pub fn bounding_box(&self) -> Aabb {
        match self {
            Shape::Circle { center, radius } => Aabb::new(
                Vec2::new(center.x - radius, center.y - radius),
                Vec2::new(center.x + radius, center.y + radius),
            ),
            Shape::Rect(b) => *b,
        }
    }

    /// Distance between the shape and an axis-aligned cell (0 on overlap).
    pub fn cell_gap(&self, cell: &Aabb) -> f64 {
        match self {
            Shape::Circle { center, radius } => (cell.point_gap(*center) - radius).max(0.0),
            Shape::Rect(b) => b.gap(cell),
        }
    }

    /// Separation between two shapes (0 on overlap).
    pub fn gap(&self, other: &Shape) -> f64 {
        match (self, other) {
            (Shape::Circle { center: a, radius: ra }, Shape::Circle { center: b, radius: rb }) => {
                (a.dist(*b) - ra - rb).max(0.0)
            }
            (Shape::Circle { center, radius }, Shape::Rect(b))
            | (Shape::Rect(b), Shape::Circle { center, radius }) => (b.point_gap(*center) - radius).max(0.0),
            (Shape::Rect(a), Shape::Rect(b)) => a.gap(b),
        }
    }

    /// First non-negative hit distance along a unit-length ray.
    pub fn ray_hit(&self, origin: Vec2, dir: Vec2) -> Option<f64> {
        match self {
            Shape::Circle { center, radius } => {
                let oc = origin - *center;
                let b = oc.dot(dir);
                let c = oc.dot(oc) - radius * radius;
                let disc = b * b - c;
                if disc < 0.0 {
                    return None;
                }
                let s = disc.sqrt();
                let t0 = -b - s;
                let t1 = -b + s;
                if t0 >= 0.0 {
                    Some(t0)
                } else if t1 >= 0.0 {
                    Some(t1)
                } else {
                    None
                }
            }
            Shape::Rect(bx) => {
                let mut t_min = f64::NEG_INFINITY;
                let mut t_max = f64::INFINITY;
                for (o, d, lo, hi) in [
                    (origin.x, dir.x, bx.min.x, bx.max.x),
                    (origin.y, dir.y, bx.min.y, bx.max.y),
                ] {
                    if d.abs() < 1e-15 {
                        if o < lo || o > hi {
                            return None;
                        }
                    } else {
                        let a = (lo - o) / d;
                        let b = (hi - o) / d;
                        t_min = t_min.max(a.min(b));
                        t_max = t_max.min(a.max(b));
                    }
                }
                if t_max < t_min || t_max < 0.0 {
                    None
                } else if t_min >= 0.0 {
                    Some(t_min)
                } else {
                    Some(t_max)
                }
            }
        }
    }
}

/// Hit distance of a unit ray against segment `a-b`.
pub fn ray_segment(origin: Vec2, dir: Vec2, a: Vec2, b: Vec2) -> Option<f64> {
    let e = b - a;
    let denom = dir.cross(e);
    if denom.abs() < 1e-15 {
        return None;
    }
    let ao = a - origin;
    let t = ao.cross(e) / denom;
    let u = ao.cross(dir) / denom;
    if t >= 0.0 && (0.0..=1.0).contains(&u) {
        Some(t)
    } else {
        None
    }
}
