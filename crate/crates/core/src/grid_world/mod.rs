//! Occupancy grids, the plain-text map format, the Euclidean signed distance
//! field, and the procedural benchmark worlds.

mod esdf;
mod worlds;

pub use esdf::{build_esdf, EsdfMap, EsdfSample, FREE_SPACE_CAP};
pub use worlds::{generate_world, GeneratedWorld, ObstacleRect, WorldKind};

use std::fmt::Write as _;
use std::path::Path;

use thiserror::Error;

#[derive(Debug, Error)]
pub enum GridError {
    #[error("invalid grid: {0}")]
    Invalid(String),
    #[error("map parse error at line {line}, column {column}: {message}")]
    Parse { line: usize, column: usize, message: String },
    #[error("i/o error reading map: {0}")]
    Io(#[from] std::io::Error),
}

/// Boolean occupancy grid. Cell `(ix, iy)` covers the square with lower-left
/// corner `origin + (ix, iy) * resolution`; its center sits half a cell inward.
#[derive(Debug, Clone, PartialEq)]
pub struct OccupancyGrid {
    resolution: f64,
    origin: [f64; 2],
    width: usize,
    height: usize,
    cells: Vec<bool>,
}

impl OccupancyGrid {
    pub fn new(resolution: f64, origin: [f64; 2], width: usize, height: usize) -> Result<Self, GridError> {
        if !(resolution > 0.0) || !resolution.is_finite() {
            return Err(GridError::Invalid(format!("resolution must be positive, got {resolution}")));
        }
        if width == 0 || height == 0 {
            return Err(GridError::Invalid(format!("grid must be nonempty, got {width}x{height}")));
        }
        Ok(Self { resolution, origin, width, height, cells: vec![false; width * height] })
    }

    /// Grid spanning `[origin, origin + size]` in both axes.
    pub fn with_extent(resolution: f64, origin: [f64; 2], size: [f64; 2]) -> Result<Self, GridError> {
        let w = (size[0] / resolution).round() as usize;
        let h = (size[1] / resolution).round() as usize;
        Self::new(resolution, origin, w, h)
    }

    pub fn resolution(&self) -> f64 {
        self.resolution
    }
    pub fn origin(&self) -> [f64; 2] {
        self.origin
    }
    pub fn width(&self) -> usize {
        self.width
    }
    pub fn height(&self) -> usize {
        self.height
    }
    pub fn cells(&self) -> &[bool] {
        &self.cells
    }

    /// World extent `[max_x, max_y]`.
    pub fn upper_corner(&self) -> [f64; 2] {
        [self.origin[0] + self.width as f64 * self.resolution, self.origin[1] + self.height as f64 * self.resolution]
    }

    #[inline]
    pub fn index(&self, ix: usize, iy: usize) -> usize {
        iy * self.width + ix
    }

    #[inline]
    pub fn in_bounds(&self, ix: i64, iy: i64) -> bool {
        ix >= 0 && iy >= 0 && (ix as usize) < self.width && (iy as usize) < self.height
    }

    #[inline]
    pub fn is_occupied(&self, ix: usize, iy: usize) -> bool {
        self.cells[self.index(ix, iy)]
    }

    /// Out-of-bounds cells count as occupied.
    #[inline]
    pub fn is_free_i(&self, ix: i64, iy: i64) -> bool {
        self.in_bounds(ix, iy) && !self.cells[self.index(ix as usize, iy as usize)]
    }

    pub fn set(&mut self, ix: usize, iy: usize, occupied: bool) {
        let i = self.index(ix, iy);
        self.cells[i] = occupied;
    }

    pub fn fill(&mut self, occupied: bool) {
        self.cells.iter_mut().for_each(|c| *c = occupied);
    }

    /// Cell containing `p`, or `None` outside the grid.
    pub fn world_to_cell(&self, p: [f64; 2]) -> Option<(usize, usize)> {
        let fx = ((p[0] - self.origin[0]) / self.resolution).floor();
        let fy = ((p[1] - self.origin[1]) / self.resolution).floor();
        if fx < 0.0 || fy < 0.0 {
            return None;
        }
        let (ix, iy) = (fx as usize, fy as usize);
        (ix < self.width && iy < self.height).then_some((ix, iy))
    }

    pub fn cell_center(&self, ix: usize, iy: usize) -> [f64; 2] {
        [self.origin[0] + (ix as f64 + 0.5) * self.resolution, self.origin[1] + (iy as f64 + 0.5) * self.resolution]
    }

    /// Mark every cell whose center lies inside the axis-aligned rectangle.
    pub fn fill_rect(&mut self, min: [f64; 2], max: [f64; 2], occupied: bool) {
        let r = self.resolution;
        let lo_x = (((min[0] - self.origin[0]) / r) - 0.5).ceil().max(0.0) as usize;
        let lo_y = (((min[1] - self.origin[1]) / r) - 0.5).ceil().max(0.0) as usize;
        let hi_x = (((max[0] - self.origin[0]) / r) - 0.5).floor();
        let hi_y = (((max[1] - self.origin[1]) / r) - 0.5).floor();
        if hi_x < 0.0 || hi_y < 0.0 {
            return;
        }
        let hi_x = (hi_x as usize).min(self.width - 1);
        let hi_y = (hi_y as usize).min(self.height - 1);
        for iy in lo_y..=hi_y {
            for ix in lo_x..=hi_x {
                self.set(ix, iy, occupied);
            }
        }
    }

    /// Mark every cell whose center lies within `radius` of `c`.
    pub fn fill_disk(&mut self, c: [f64; 2], radius: f64, occupied: bool) {
        for iy in 0..self.height {
            for ix in 0..self.width {
                let p = self.cell_center(ix, iy);
                if (p[0] - c[0]).hypot(p[1] - c[1]) <= radius {
                    self.set(ix, iy, occupied);
                }
            }
        }
    }

    pub fn occupied_count(&self) -> usize {
        self.cells.iter().filter(|&&c| c).count()
    }

    /// True when the disk of `radius` around `p` overlaps any occupied cell square
    /// or leaves the grid.
    pub fn disk_collides(&self, p: [f64; 2], radius: f64) -> bool {
        let r = self.resolution;
        let lo = [
            ((p[0] - radius - self.origin[0]) / r).floor() as i64,
            ((p[1] - radius - self.origin[1]) / r).floor() as i64,
        ];
        let hi = [
            ((p[0] + radius - self.origin[0]) / r).floor() as i64,
            ((p[1] + radius - self.origin[1]) / r).floor() as i64,
        ];
        for iy in lo[1]..=hi[1] {
            for ix in lo[0]..=hi[0] {
                if self.is_free_i(ix, iy) {
                    continue;
                }
                let x0 = self.origin[0] + ix as f64 * r;
                let y0 = self.origin[1] + iy as f64 * r;
                let cx = p[0].clamp(x0, x0 + r);
                let cy = p[1].clamp(y0, y0 + r);
                if (p[0] - cx).hypot(p[1] - cy) < radius {
                    return true;
                }
            }
        }
        false
    }

    /// Parse the plain-text map format:
    ///
    /// ```text
    /// resolution width height origin_x origin_y
    /// <height rows of width chars, '#' occupied, '.' free; first row is the top (max y)>
    /// ```
    pub fn parse(text: &str) -> Result<Self, GridError> {
        let mut lines = text.lines().enumerate().filter(|(_, l)| !l.trim().is_empty());
        let (hline, header) =
            lines.next().ok_or(GridError::Parse { line: 1, column: 1, message: "missing header".into() })?;
        let fields: Vec<&str> = header.split_whitespace().collect();
        if fields.len() != 5 {
            return Err(GridError::Parse {
                line: hline + 1,
                column: 1,
                message: format!("header needs 5 fields, found {}", fields.len()),
            });
        }
        let num = |k: usize| -> Result<f64, GridError> {
            fields[k].parse::<f64>().map_err(|e| GridError::Parse {
                line: hline + 1,
                column: header.find(fields[k]).unwrap_or(0) + 1,
                message: format!("bad number '{}': {e}", fields[k]),
            })
        };
        let int = |k: usize| -> Result<usize, GridError> {
            fields[k].parse::<usize>().map_err(|e| GridError::Parse {
                line: hline + 1,
                column: header.find(fields[k]).unwrap_or(0) + 1,
                message: format!("bad integer '{}': {e}", fields[k]),
            })
        };
        let mut grid = Self::new(num(0)?, [num(3)?, num(4)?], int(1)?, int(2)?).map_err(|e| GridError::Parse {
            line: hline + 1,
            column: 1,
            message: e.to_string(),
        })?;
        let mut rows = 0;
        for (lno, line) in lines {
            if rows == grid.height {
                return Err(GridError::Parse {
                    line: lno + 1,
                    column: 1,
                    message: format!("more than {} rows", grid.height),
                });
            }
            let row = line.trim_end();
            let iy = grid.height - 1 - rows;
            let mut count = 0;
            for (col, ch) in row.chars().enumerate() {
                let occ = match ch {
                    '#' => true,
                    '.' => false,
                    other => {
                        return Err(GridError::Parse {
                            line: lno + 1,
                            column: col + 1,
                            message: format!("unexpected character '{other}'"),
                        })
                    }
                };
                if col >= grid.width {
                    return Err(GridError::Parse {
                        line: lno + 1,
                        column: col + 1,
                        message: format!("row longer than width {}", grid.width),
                    });
                }
                grid.set(col, iy, occ);
                count += 1;
            }
            if count != grid.width {
                return Err(GridError::Parse {
                    line: lno + 1,
                    column: count + 1,
                    message: format!("row has {count} cells, expected {}", grid.width),
                });
            }
            rows += 1;
        }
        if rows != grid.height {
            return Err(GridError::Parse {
                line: text.lines().count() + 1,
                column: 1,
                message: format!("expected {} rows, found {rows}", grid.height),
            });
        }
        Ok(grid)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self, GridError> {
        Self::parse(&std::fs::read_to_string(path)?)
    }

    pub fn to_text(&self) -> String {
        let mut s = String::with_capacity((self.width + 1) * (self.height + 1) + 64);
        let _ = writeln!(s, "{} {} {} {} {}", self.resolution, self.width, self.height, self.origin[0], self.origin[1]);
        for iy in (0..self.height).rev() {
            for ix in 0..self.width {
                s.push(if self.is_occupied(ix, iy) { '#' } else { '.' });
            }
            s.push('\n');
        }
        s
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rejects_bad_dimensions() {
        assert!(OccupancyGrid::new(0.0, [0.0, 0.0], 3, 3).is_err());
        assert!(OccupancyGrid::new(0.1, [0.0, 0.0], 0, 3).is_err());
    }

    #[test]
    fn world_cell_round_trip() {
        let g = OccupancyGrid::new(0.1, [-1.0, 2.0], 30, 20).unwrap();
        for iy in 0..20 {
            for ix in 0..30 {
                assert_eq!(g.world_to_cell(g.cell_center(ix, iy)), Some((ix, iy)));
            }
        }
        assert_eq!(g.world_to_cell([-1.01, 2.5]), None);
        assert_eq!(g.world_to_cell([2.0 + 1e-9, 2.5]), None);
    }

    #[test]
    fn text_round_trip() {
        let mut g = OccupancyGrid::new(0.25, [1.0, -2.0], 5, 3).unwrap();
        g.set(0, 0, true);
        g.set(4, 2, true);
        let t = g.to_text();
        assert_eq!(t.lines().nth(1).unwrap(), "....#");
        assert_eq!(OccupancyGrid::parse(&t).unwrap(), g);
    }

    #[test]
    fn parse_errors_name_the_location() {
        let err = OccupancyGrid::parse("0.1 3 2 0 0\n...\n.x.\n").unwrap_err();
        match err {
            GridError::Parse { line, column, .. } => assert_eq!((line, column), (3, 2)),
            e => panic!("unexpected {e}"),
        }
        let err = OccupancyGrid::parse("0.1 3 2 0 0\n...\n").unwrap_err();
        assert!(matches!(err, GridError::Parse { .. }));
        let err = OccupancyGrid::parse("0.1 three 2 0 0\n").unwrap_err();
        assert!(matches!(err, GridError::Parse { line: 1, .. }));
    }

    #[test]
    fn disk_collision() {
        let mut g = OccupancyGrid::new(0.1, [0.0, 0.0], 20, 20).unwrap();
        g.set(10, 10, true); // square [1.0, 1.1]^2
        assert!(g.disk_collides([0.95, 1.05], 0.06));
        assert!(!g.disk_collides([0.85, 1.05], 0.14));
        assert!(g.disk_collides([0.05, 0.05], 0.1)); // leaves the grid
    }
}
