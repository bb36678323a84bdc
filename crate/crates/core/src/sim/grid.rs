use std::cmp::Ordering;
use std::collections::{BinaryHeap, VecDeque};

use crate::error::{Error, Result};
use crate::sim::geometry::{Aabb, Shape, Vec2};

/// Boolean occupancy over the arena. A cell is occupied iff it intersects an
/// obstacle (or the boundary walls) inflated by the agent radius.
#[derive(Clone, Debug, PartialEq)]
pub struct OccupancyGrid {
    pub origin: Vec2,
    pub resolution: f64,
    pub cols: usize,
    pub rows: usize,
    occupied: Vec<bool>,
}

impl OccupancyGrid {
    pub fn build<'a>(
        bounds: &Aabb,
        resolution: f64,
        inflation: f64,
        shapes: impl Iterator<Item = &'a Shape> + Clone,
    ) -> Self {
        let cols = (bounds.width() / resolution).round().max(1.0) as usize;
        let rows = (bounds.height() / resolution).round().max(1.0) as usize;
        let mut occupied = vec![false; cols * rows];
        for r in 0..rows {
            for c in 0..cols {
                let cell = Aabb::new(
                    Vec2::new(
                        bounds.min.x + c as f64 * resolution,
                        bounds.min.y + r as f64 * resolution,
                    ),
                    Vec2::new(
                        bounds.min.x + (c + 1) as f64 * resolution,
                        bounds.min.y + (r + 1) as f64 * resolution,
                    ),
                );
                let near_wall = cell.min.x <= bounds.min.x + inflation
                    || cell.max.x >= bounds.max.x - inflation
                    || cell.min.y <= bounds.min.y + inflation
                    || cell.max.y >= bounds.max.y - inflation;
                occupied[r * cols + c] =
                    near_wall || shapes.clone().any(|s| s.cell_gap(&cell) <= inflation);
            }
        }
        OccupancyGrid {
            origin: bounds.min,
            resolution,
            cols,
            rows,
            occupied,
        }
    }

    pub fn len(&self) -> usize {
        self.occupied.len()
    }

    pub fn is_empty(&self) -> bool {
        self.occupied.is_empty()
    }

    pub fn index(&self, col: usize, row: usize) -> usize {
        row * self.cols + col
    }

    pub fn is_occupied(&self, col: usize, row: usize) -> bool {
        self.occupied[self.index(col, row)]
    }

    pub fn is_free_index(&self, idx: usize) -> bool {
        !self.occupied[idx]
    }

    pub fn cell_center(&self, col: usize, row: usize) -> Vec2 {
        Vec2::new(
            self.origin.x + (col as f64 + 0.5) * self.resolution,
            self.origin.y + (row as f64 + 0.5) * self.resolution,
        )
    }

    pub fn center_of_index(&self, idx: usize) -> Vec2 {
        self.cell_center(idx % self.cols, idx / self.cols)
    }

    /// Cell containing `p`, or `None` outside the grid.
    pub fn cell_of(&self, p: Vec2) -> Option<(usize, usize)> {
        let c = ((p.x - self.origin.x) / self.resolution).floor();
        let r = ((p.y - self.origin.y) / self.resolution).floor();
        if c < 0.0 || r < 0.0 || c >= self.cols as f64 || r >= self.rows as f64 {
            None
        } else {
            Some((c as usize, r as usize))
        }
    }

    pub fn free_count(&self) -> usize {
        self.occupied.iter().filter(|o| !**o).count()
    }

    /// Free cells whose centers lie within `radius` of `p`, with distances.
    pub fn free_cells_near(&self, p: Vec2, radius: f64) -> Vec<(usize, f64)> {
        let span = (radius / self.resolution).ceil() as i64 + 1;
        let c0 = ((p.x - self.origin.x) / self.resolution).floor() as i64;
        let r0 = ((p.y - self.origin.y) / self.resolution).floor() as i64;
        let mut out = Vec::new();
        for r in (r0 - span).max(0)..=(r0 + span).min(self.rows as i64 - 1) {
            for c in (c0 - span).max(0)..=(c0 + span).min(self.cols as i64 - 1) {
                let idx = self.index(c as usize, r as usize);
                if self.occupied[idx] {
                    continue;
                }
                let d = self.center_of_index(idx).dist(p);
                if d <= radius {
                    out.push((idx, d));
                }
            }
        }
        out
    }

    /// Component label per cell (4-connectivity over free cells, `usize::MAX`
    /// for occupied cells) and the number of components.
    pub fn components(&self) -> (Vec<usize>, usize) {
        let mut label = vec![usize::MAX; self.len()];
        let mut count = 0;
        let mut queue = VecDeque::new();
        for start in 0..self.len() {
            if self.occupied[start] || label[start] != usize::MAX {
                continue;
            }
            label[start] = count;
            queue.push_back(start);
            while let Some(idx) = queue.pop_front() {
                let (c, r) = (idx % self.cols, idx / self.cols);
                let mut visit = |nc: usize, nr: usize| {
                    let n = self.index(nc, nr);
                    if !self.occupied[n] && label[n] == usize::MAX {
                        label[n] = count;
                        queue.push_back(n);
                    }
                };
                if c > 0 {
                    visit(c - 1, r);
                }
                if c + 1 < self.cols {
                    visit(c + 1, r);
                }
                if r > 0 {
                    visit(c, r - 1);
                }
                if r + 1 < self.rows {
                    visit(c, r + 1);
                }
            }
            count += 1;
        }
        (label, count)
    }

    pub fn is_connected(&self) -> bool {
        self.free_count() > 0 && self.components().1 == 1
    }
}

#[derive(PartialEq)]
struct Entry(f64, usize);

impl Eq for Entry {}

impl PartialOrd for Entry {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl Ord for Entry {
    fn cmp(&self, other: &Self) -> Ordering {
        other.0.total_cmp(&self.0).then(other.1.cmp(&self.1))
    }
}

/// Shortest-path distances to a fixed target over the 8-connected grid.
/// Diagonal moves cost `sqrt(2) * resolution` and may not cut occupied
/// corners.
#[derive(Clone, Debug)]
pub struct DistanceField {
    target: Vec2,
    snap: f64,
    dist: Vec<f64>,
}

impl DistanceField {
    pub const DEFAULT_SNAP: f64 = 0.3;

    pub fn new(grid: &OccupancyGrid, target: Vec2, snap: f64) -> Result<Self> {
        let seeds = grid.free_cells_near(target, snap);
        if seeds.is_empty() {
            return Err(Error::Snap {
                x: target.x,
                y: target.y,
                max_snap: snap,
            });
        }
        let mut dist = vec![f64::INFINITY; grid.len()];
        let mut heap = BinaryHeap::new();
        for (idx, d) in seeds {
            dist[idx] = d;
            heap.push(Entry(d, idx));
        }
        let straight = grid.resolution;
        let diagonal = grid.resolution * std::f64::consts::SQRT_2;
        while let Some(Entry(d, idx)) = heap.pop() {
            if d > dist[idx] {
                continue;
            }
            let (c, r) = ((idx % grid.cols) as i64, (idx / grid.cols) as i64);
            for (dc, dr) in [(-1, 0), (1, 0), (0, -1), (0, 1), (-1, -1), (-1, 1), (1, -1), (1, 1)] {
                let (nc, nr) = (c + dc, r + dr);
                if nc < 0 || nr < 0 || nc >= grid.cols as i64 || nr >= grid.rows as i64 {
                    continue;
                }
                let n = grid.index(nc as usize, nr as usize);
                if !grid.is_free_index(n) {
                    continue;
                }
                let cost = if dc != 0 && dr != 0 {
                    if grid.is_occupied(nc as usize, r as usize) || grid.is_occupied(c as usize, nr as usize) {
                        continue;
                    }
                    diagonal
                } else {
                    straight
                };
                let nd = d + cost;
                if nd < dist[n] {
                    dist[n] = nd;
                    heap.push(Entry(nd, n));
                }
            }
        }
        Ok(DistanceField { target, snap, dist })
    }

    pub fn target(&self) -> Vec2 {
        self.target
    }

    /// Geodesic distance from `p` to the target. `f64::INFINITY` when `p`
    /// cannot reach it.
    pub fn distance(&self, grid: &OccupancyGrid, p: Vec2) -> Result<f64> {
        let near = grid.free_cells_near(p, self.snap);
        if near.is_empty() {
            return Err(Error::Snap {
                x: p.x,
                y: p.y,
                max_snap: self.snap,
            });
        }
        let mut best = near
            .iter()
            .map(|&(idx, d)| self.dist[idx] + d)
            .fold(f64::INFINITY, f64::min);
        let direct = p.dist(self.target);
        if direct <= self.snap {
            best = best.min(direct);
        }
        Ok(best)
    }
}
