use std::path::PathBuf;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::{GridError, OccupancyGrid};

const WORLD_SIZE: f64 = 20.0;
const RESOLUTION: f64 = 0.1;
const SPIRAL_CHANNEL: f64 = 1.2;
const SPIRAL_WALL: f64 = 0.3;

/// Procedural benchmark worlds.
#[derive(Debug, Clone, PartialEq)]
pub enum WorldKind {
    /// 65 squares of 1 m.
    Sparse,
    /// 213 squares of 0.5 m.
    Dense,
    /// Single rectangular channel winding inward to the center.
    Spiral,
    /// `count` squares of side `size` meters.
    Random {
        count: usize,
        size: f64,
    },
    FromFile(PathBuf),
}

impl WorldKind {
    pub fn parse(name: &str) -> Option<Self> {
        match name {
            "sparse" => Some(Self::Sparse),
            "dense" => Some(Self::Dense),
            "spiral" => Some(Self::Spiral),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ObstacleRect {
    pub min: [f64; 2],
    pub max: [f64; 2],
}

impl ObstacleRect {
    fn overlaps(&self, o: &ObstacleRect) -> bool {
        self.min[0] < o.max[0] && o.min[0] < self.max[0] && self.min[1] < o.max[1] && o.min[1] < self.max[1]
    }
}

#[derive(Debug, Clone)]
pub struct GeneratedWorld {
    pub grid: OccupancyGrid,
    /// Obstacle placements (empty for the spiral and file worlds).
    pub obstacles: Vec<ObstacleRect>,
    /// Suggested start, where the world has a natural one.
    pub start_hint: Option<[f64; 2]>,
    /// Suggested goal, where the world has a natural one.
    pub goal_hint: Option<[f64; 2]>,
}

/// Build a world. Deterministic in `seed`; file worlds ignore it.
pub fn generate_world(kind: &WorldKind, seed: u64) -> Result<GeneratedWorld, GridError> {
    match kind {
        WorldKind::Sparse => random_squares(65, 1.0, seed),
        WorldKind::Dense => random_squares(213, 0.5, seed),
        WorldKind::Random { count, size } => random_squares(*count, *size, seed),
        WorldKind::Spiral => Ok(spiral()),
        WorldKind::FromFile(path) => Ok(GeneratedWorld {
            grid: OccupancyGrid::load(path)?,
            obstacles: Vec::new(),
            start_hint: None,
            goal_hint: None,
        }),
    }
}

fn snap(v: f64) -> f64 {
    (v / RESOLUTION).round() * RESOLUTION
}

/// Non-overlapping axis-aligned squares inside a one-cell border wall.
fn random_squares(count: usize, size: f64, seed: u64) -> Result<GeneratedWorld, GridError> {
    if !(size > 0.0) || size >= WORLD_SIZE {
        return Err(GridError::Invalid(format!("obstacle size {size} out of range")));
    }
    let mut grid = OccupancyGrid::with_extent(RESOLUTION, [0.0, 0.0], [WORLD_SIZE, WORLD_SIZE])?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut obstacles: Vec<ObstacleRect> = Vec::with_capacity(count);
    let mut attempts = 0usize;
    while obstacles.len() < count {
        attempts += 1;
        if attempts > 1000 * count.max(1) {
            return Err(GridError::Invalid(format!(
                "could not place {count} obstacles of size {size} without overlap"
            )));
        }
        let x = snap(rng.random_range(0.0..WORLD_SIZE - size));
        let y = snap(rng.random_range(0.0..WORLD_SIZE - size));
        let r = ObstacleRect { min: [x, y], max: [x + size, y + size] };
        if obstacles.iter().any(|o| o.overlaps(&r)) {
            continue;
        }
        obstacles.push(r);
    }
    for o in &obstacles {
        grid.fill_rect(o.min, o.max, true);
    }
    add_border(&mut grid);
    Ok(GeneratedWorld { grid, obstacles, start_hint: None, goal_hint: None })
}

fn add_border(grid: &mut OccupancyGrid) {
    let (w, h) = (grid.width(), grid.height());
    for ix in 0..w {
        grid.set(ix, 0, true);
        grid.set(ix, h - 1, true);
    }
    for iy in 0..h {
        grid.set(0, iy, true);
        grid.set(w - 1, iy, true);
    }
}

/// Centerline corners of the spiral channel, from the entrance on the left
/// edge to the innermost turn.
fn spiral_centerline() -> Vec<[f64; 2]> {
    let pitch = SPIRAL_CHANNEL + SPIRAL_WALL;
    let inset = |k: usize| SPIRAL_WALL + 0.5 * SPIRAL_CHANNEL + pitch * k as f64;
    let l = WORLD_SIZE;
    let mut pts = vec![[0.0, inset(0)]];
    let mut k = 0;
    loop {
        let c = inset(k);
        let next = inset(k + 1);
        if l - 2.0 * c < pitch {
            break;
        }
        pts.push([l - c, c]);
        pts.push([l - c, l - c]);
        pts.push([c, l - c]);
        if l - 2.0 * next < pitch {
            break;
        }
        pts.push([c, next]);
        k += 1;
    }
    pts
}

fn spiral() -> GeneratedWorld {
    let mut grid = OccupancyGrid::with_extent(RESOLUTION, [0.0, 0.0], [WORLD_SIZE, WORLD_SIZE])
        .expect("fixed spiral extent is valid");
    grid.fill(true);
    let half = 0.5 * SPIRAL_CHANNEL;
    let pts = spiral_centerline();
    for w in pts.windows(2) {
        let min = [w[0][0].min(w[1][0]) - half, w[0][1].min(w[1][1]) - half];
        let max = [w[0][0].max(w[1][0]) + half, w[0][1].max(w[1][1]) + half];
        grid.fill_rect(min, max, false);
    }
    let last = *pts.last().expect("spiral has corners");
    GeneratedWorld { grid, obstacles: Vec::new(), start_hint: Some([1.0, pts[0][1]]), goal_hint: Some(last) }
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::collections::VecDeque;

    fn reachable(grid: &OccupancyGrid, a: [f64; 2], b: [f64; 2]) -> bool {
        let (sx, sy) = grid.world_to_cell(a).unwrap();
        let goal = grid.world_to_cell(b).unwrap();
        let mut seen = vec![false; grid.width() * grid.height()];
        let mut q = VecDeque::from([(sx, sy)]);
        seen[grid.index(sx, sy)] = true;
        while let Some((x, y)) = q.pop_front() {
            if (x, y) == goal {
                return true;
            }
            for (dx, dy) in [(1i64, 0i64), (-1, 0), (0, 1), (0, -1)] {
                let (nx, ny) = (x as i64 + dx, y as i64 + dy);
                if grid.is_free_i(nx, ny) && !seen[grid.index(nx as usize, ny as usize)] {
                    seen[grid.index(nx as usize, ny as usize)] = true;
                    q.push_back((nx as usize, ny as usize));
                }
            }
        }
        false
    }

    #[test]
    fn sparse_is_deterministic() {
        let a = generate_world(&WorldKind::Sparse, 42).unwrap();
        let b = generate_world(&WorldKind::Sparse, 42).unwrap();
        assert_eq!(a.grid, b.grid);
        assert_eq!(a.obstacles, b.obstacles);
        let c = generate_world(&WorldKind::Sparse, 43).unwrap();
        assert_ne!(a.grid, c.grid);
    }

    #[test]
    fn obstacle_counts_and_sizes() {
        for seed in [0, 1, 99] {
            let d = generate_world(&WorldKind::Dense, seed).unwrap();
            assert_eq!(d.obstacles.len(), 213);
            assert!(d.obstacles.iter().all(|o| ((o.max[0] - o.min[0]) - 0.5).abs() < 1e-9));
            let s = generate_world(&WorldKind::Sparse, seed).unwrap();
            assert_eq!(s.obstacles.len(), 65);
        }
    }

    #[test]
    fn sparse_squares_cover_whole_cells() {
        let w = generate_world(&WorldKind::Sparse, 5).unwrap();
        let border = 2 * 200 + 2 * 198;
        // overlapping the border wall is allowed, so this is an upper bound
        assert!(w.grid.occupied_count() <= border + 65 * 100);
        assert!(w.grid.occupied_count() > border + 50 * 100);
    }

    #[test]
    fn spiral_entrance_reaches_center() {
        let w = generate_world(&WorldKind::Spiral, 0).unwrap();
        let (s, g) = (w.start_hint.unwrap(), w.goal_hint.unwrap());
        assert!(reachable(&w.grid, s, g));
        assert!((g[0] - 10.0).abs() < 3.0 && (g[1] - 10.0).abs() < 3.0);
    }

    #[test]
    fn spiral_walls_separate_rings() {
        let w = generate_world(&WorldKind::Spiral, 0).unwrap();
        // cutting straight across from the first ring to the second hits the wall
        let g = &w.grid;
        assert!(!g.is_occupied(100, 9)); // ring 0 at y = 0.9
        assert!(g.is_occupied(100, 16)); // wall at y in [1.5, 1.8]
        assert!(!g.is_occupied(100, 24)); // ring 1 at y = 2.4
    }
}
