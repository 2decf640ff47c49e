//! Grid search front-end and conversion of its polyline into an optimizer seed.

mod jps;
mod seed;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::grid_world::OccupancyGrid;

pub use seed::{seed_trajectory, InitialGuess, SeedParams};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum PathError {
    #[error("{which} point ({x:.3}, {y:.3}) is outside the map or inside an obstacle")]
    InvalidEndpoint { which: &'static str, x: f64, y: f64 },
    #[error("no collision-free grid path between start and goal")]
    NoPath,
    #[error("path needs at least two points, got {0}")]
    TooShort(usize),
}

/// Polyline in world coordinates. `length` is the sum of segment lengths.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GridPath {
    pub points: Vec<[f64; 2]>,
    pub length: f64,
    /// Octile grid cost in meters between the start and goal cells.
    pub grid_cost: f64,
}

impl GridPath {
    pub fn from_points(points: Vec<[f64; 2]>) -> Self {
        let length = polyline_length(&points);
        GridPath { points, length, grid_cost: length }
    }

    /// Point at arc length `s` (clamped to the path).
    pub fn point_at(&self, s: f64) -> [f64; 2] {
        self.sample(s).0
    }

    /// Point and unit tangent at arc length `s`. At a vertex the outgoing
    /// segment's tangent is used.
    pub fn sample(&self, s: f64) -> ([f64; 2], [f64; 2]) {
        let pts = &self.points;
        let mut acc = 0.0;
        let mut last_dir = [1.0, 0.0];
        for w in pts.windows(2) {
            let d = [w[1][0] - w[0][0], w[1][1] - w[0][1]];
            let l = d[0].hypot(d[1]);
            if l <= 1e-12 {
                continue;
            }
            let dir = [d[0] / l, d[1] / l];
            last_dir = dir;
            if s < acc + l {
                let u = (s - acc).max(0.0);
                return ([w[0][0] + dir[0] * u, w[0][1] + dir[1] * u], dir);
            }
            acc += l;
        }
        (*pts.last().unwrap_or(&[0.0, 0.0]), last_dir)
    }

    /// Prefix of the path up to arc length `len`; the whole path when it is
    /// shorter.
    pub fn truncated(&self, len: f64) -> GridPath {
        if len >= self.length {
            return self.clone();
        }
        let mut out = vec![self.points[0]];
        let mut acc = 0.0;
        for w in self.points.windows(2) {
            let l = (w[1][0] - w[0][0]).hypot(w[1][1] - w[0][1]);
            if acc + l >= len {
                break;
            }
            acc += l;
            out.push(w[1]);
        }
        out.push(self.point_at(len));
        GridPath::from_points(out)
    }

    /// `prefix` followed by this path. The joint point is not duplicated.
    pub fn prepended(&self, prefix: &[[f64; 2]]) -> GridPath {
        let mut pts: Vec<[f64; 2]> = prefix.to_vec();
        for &p in &self.points {
            if pts.last().is_some_and(|q| (q[0] - p[0]).hypot(q[1] - p[1]) < 1e-9) {
                continue;
            }
            pts.push(p);
        }
        GridPath::from_points(pts)
    }
}

fn polyline_length(points: &[[f64; 2]]) -> f64 {
    points.windows(2).map(|w| (w[1][0] - w[0][0]).hypot(w[1][1] - w[0][1])).sum()
}

/// Shortest 8-connected grid path (no corner cutting) between two world
/// points. Interior points are jump-point cell centers with collinear
/// points removed; the endpoints are the exact query points.
pub fn jps_search(grid: &OccupancyGrid, start: [f64; 2], goal: [f64; 2]) -> Result<GridPath, PathError> {
    let cell = |p: [f64; 2], which: &'static str| -> Result<(i64, i64), PathError> {
        let err = PathError::InvalidEndpoint { which, x: p[0], y: p[1] };
        let (ix, iy) = grid.world_to_cell(p).ok_or(err.clone())?;
        if grid.is_occupied(ix, iy) {
            return Err(err);
        }
        Ok((ix as i64, iy as i64))
    };
    let s = cell(start, "start")?;
    let g = cell(goal, "goal")?;
    let (cells, cost) = jps::search_cells(grid, s, g).ok_or(PathError::NoPath)?;

    let mut corners: Vec<(i64, i64)> = Vec::with_capacity(cells.len());
    for &c in &cells {
        if corners.len() >= 2 {
            let a = corners[corners.len() - 2];
            let b = corners[corners.len() - 1];
            let d1 = ((b.0 - a.0).signum(), (b.1 - a.1).signum());
            let d2 = ((c.0 - b.0).signum(), (c.1 - b.1).signum());
            if d1 == d2 {
                corners.pop();
            }
        }
        corners.push(c);
    }
    let mut points = Vec::with_capacity(corners.len() + 1);
    points.push(start);
    if corners.len() > 2 {
        for &c in &corners[1..corners.len() - 1] {
            points.push(grid.cell_center(c.0 as usize, c.1 as usize));
        }
    }
    points.push(goal);
    let length = polyline_length(&points);
    Ok(GridPath { points, length, grid_cost: cost * grid.resolution() })
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;
    use std::cmp::Reverse;
    use std::collections::BinaryHeap;

    /// Plain Dijkstra over all 8 neighbors with the same corner rule.
    fn dijkstra(grid: &OccupancyGrid, s: (i64, i64), g: (i64, i64)) -> Option<f64> {
        let w = grid.width();
        let idx = |c: (i64, i64)| c.1 as usize * w + c.0 as usize;
        let mut dist = vec![f64::INFINITY; w * grid.height()];
        let mut heap = BinaryHeap::new();
        dist[idx(s)] = 0.0;
        heap.push(Reverse((0f64.to_bits(), s)));
        while let Some(Reverse((d, c))) = heap.pop() {
            let d = f64::from_bits(d);
            if d > dist[idx(c)] {
                continue;
            }
            if c == g {
                return Some(d);
            }
            for dy in -1..=1i64 {
                for dx in -1..=1i64 {
                    if (dx, dy) == (0, 0) || !grid.is_free_i(c.0 + dx, c.1 + dy) {
                        continue;
                    }
                    if dx != 0 && dy != 0 && !(grid.is_free_i(c.0 + dx, c.1) && grid.is_free_i(c.0, c.1 + dy)) {
                        continue;
                    }
                    let n = (c.0 + dx, c.1 + dy);
                    let nd = d + if dx != 0 && dy != 0 { std::f64::consts::SQRT_2 } else { 1.0 };
                    if nd < dist[idx(n)] {
                        dist[idx(n)] = nd;
                        heap.push(Reverse((nd.to_bits(), n)));
                    }
                }
            }
        }
        None
    }

    fn segment_visible(grid: &OccupancyGrid, a: [f64; 2], b: [f64; 2]) -> bool {
        let l = (b[0] - a[0]).hypot(b[1] - a[1]);
        let n = (l / (grid.resolution() * 0.05)).ceil() as usize + 1;
        (0..=n).all(|k| {
            let u = k as f64 / n as f64;
            let p = [a[0] + u * (b[0] - a[0]), a[1] + u * (b[1] - a[1])];
            grid.world_to_cell(p).is_some_and(|(x, y)| !grid.is_occupied(x, y))
        })
    }

    #[test]
    fn straight_diagonal_on_empty_grid() {
        let grid = OccupancyGrid::new(0.1, [0.0, 0.0], 10, 10).unwrap();
        let p = jps_search(&grid, grid.cell_center(0, 0), grid.cell_center(9, 9)).unwrap();
        assert!((p.length - 9.0 * 2f64.sqrt() * 0.1).abs() < 1e-12);
        assert_eq!(p.points.len(), 2);
    }

    #[test]
    fn sealed_goal_is_no_path() {
        let mut grid = OccupancyGrid::new(1.0, [0.0, 0.0], 10, 10).unwrap();
        for i in 3..8 {
            grid.set(i, 3, true);
            grid.set(i, 7, true);
            grid.set(3, i, true);
            grid.set(7, i, true);
        }
        let r = jps_search(&grid, [0.5, 0.5], [5.5, 5.5]);
        assert_eq!(r, Err(PathError::NoPath));
    }

    #[test]
    fn occupied_endpoint_is_rejected() {
        let mut grid = OccupancyGrid::new(1.0, [0.0, 0.0], 5, 5).unwrap();
        grid.set(2, 2, true);
        assert!(matches!(
            jps_search(&grid, [2.5, 2.5], [0.5, 0.5]),
            Err(PathError::InvalidEndpoint { which: "start", .. })
        ));
        assert!(matches!(
            jps_search(&grid, [0.5, 0.5], [9.5, 0.5]),
            Err(PathError::InvalidEndpoint { which: "goal", .. })
        ));
    }

    #[test]
    fn matches_dijkstra_on_random_grids() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let mut checked = 0;
        for _ in 0..300 {
            let mut grid = OccupancyGrid::new(0.1, [0.0, 0.0], 32, 32).unwrap();
            let density = rng.random_range(0.1..0.4);
            for y in 0..32 {
                for x in 0..32 {
                    grid.set(x, y, rng.random_bool(density));
                }
            }
            let s = (rng.random_range(0..32i64), rng.random_range(0..32i64));
            let g = (rng.random_range(0..32i64), rng.random_range(0..32i64));
            grid.set(s.0 as usize, s.1 as usize, false);
            grid.set(g.0 as usize, g.1 as usize, false);
            let sp = grid.cell_center(s.0 as usize, s.1 as usize);
            let gp = grid.cell_center(g.0 as usize, g.1 as usize);
            let reference = dijkstra(&grid, s, g);
            match (jps_search(&grid, sp, gp), reference) {
                (Ok(p), Some(d)) => {
                    assert!((p.grid_cost - d * 0.1).abs() < 1e-9, "jps {} vs dijkstra {}", p.grid_cost, d * 0.1);
                    assert!((p.length - p.grid_cost).abs() < 1e-9);
                    for w in p.points.windows(2) {
                        assert!(segment_visible(&grid, w[0], w[1]));
                    }
                    checked += 1;
                }
                (Err(PathError::NoPath), None) => {}
                (r, d) => panic!("mismatch {r:?} vs {d:?}"),
            }
        }
        assert!(checked > 100);
    }

    #[test]
    fn truncation_and_prefix() {
        let p = GridPath::from_points(vec![[0.0, 0.0], [3.0, 0.0], [3.0, 4.0]]);
        let t = p.truncated(5.0);
        assert!((t.length - 5.0).abs() < 1e-12);
        assert_eq!(*t.points.last().unwrap(), [3.0, 2.0]);
        assert_eq!(p.truncated(10.0), p);
        let q = p.prepended(&[[-1.0, 0.0], [0.0, 0.0]]);
        assert_eq!(q.points.len(), 4);
        assert!((q.length - 8.0).abs() < 1e-12);
    }
}
