use std::cmp::Reverse;
use std::collections::BinaryHeap;

use crate::grid_world::OccupancyGrid;

const SQRT2: f64 = std::f64::consts::SQRT_2;

/// Octile distance in cells.
#[inline]
pub(super) fn octile(a: (i64, i64), b: (i64, i64)) -> f64 {
    let dx = (a.0 - b.0).abs() as f64;
    let dy = (a.1 - b.1).abs() as f64;
    dx.max(dy) + (SQRT2 - 1.0) * dx.min(dy)
}

struct Search<'a> {
    grid: &'a OccupancyGrid,
    goal: (i64, i64),
}

impl Search<'_> {
    #[inline]
    fn free(&self, x: i64, y: i64) -> bool {
        self.grid.is_free_i(x, y)
    }

    /// Follow direction `(dx, dy)` from `(x, y)` until a jump point, the goal,
    /// or a dead end. Diagonal steps need both adjacent orthogonal cells free.
    fn jump(&self, mut x: i64, mut y: i64, dx: i64, dy: i64) -> Option<(i64, i64)> {
        loop {
            if !self.free(x, y) {
                return None;
            }
            if (x, y) == self.goal {
                return Some((x, y));
            }
            if dx != 0 && dy != 0 {
                if self.jump(x + dx, y, dx, 0).is_some() || self.jump(x, y + dy, 0, dy).is_some() {
                    return Some((x, y));
                }
            } else if dx != 0 {
                if (self.free(x, y - 1) && !self.free(x - dx, y - 1))
                    || (self.free(x, y + 1) && !self.free(x - dx, y + 1))
                {
                    return Some((x, y));
                }
            } else if (self.free(x - 1, y) && !self.free(x - 1, y - dy))
                || (self.free(x + 1, y) && !self.free(x + 1, y - dy))
            {
                return Some((x, y));
            }
            if !(self.free(x + dx, y) && self.free(x, y + dy)) {
                return None;
            }
            x += dx;
            y += dy;
        }
    }

    /// Pruned successor directions of `(x, y)` reached from `parent`.
    fn directions(&self, x: i64, y: i64, parent: Option<(i64, i64)>, out: &mut Vec<(i64, i64)>) {
        out.clear();
        let Some((px, py)) = parent else {
            for dy in -1..=1 {
                for dx in -1..=1 {
                    if (dx, dy) == (0, 0) || !self.free(x + dx, y + dy) {
                        continue;
                    }
                    if dx != 0 && dy != 0 && !(self.free(x + dx, y) && self.free(x, y + dy)) {
                        continue;
                    }
                    out.push((dx, dy));
                }
            }
            return;
        };
        let dx = (x - px).signum();
        let dy = (y - py).signum();
        if dx != 0 && dy != 0 {
            let v = self.free(x, y + dy);
            let h = self.free(x + dx, y);
            if v {
                out.push((0, dy));
            }
            if h {
                out.push((dx, 0));
            }
            if v && h {
                out.push((dx, dy));
            }
        } else if dx != 0 {
            let next = self.free(x + dx, y);
            let up = self.free(x, y + 1);
            let down = self.free(x, y - 1);
            if next {
                out.push((dx, 0));
                if up {
                    out.push((dx, 1));
                }
                if down {
                    out.push((dx, -1));
                }
            }
            if up {
                out.push((0, 1));
            }
            if down {
                out.push((0, -1));
            }
        } else {
            let next = self.free(x, y + dy);
            let right = self.free(x + 1, y);
            let left = self.free(x - 1, y);
            if next {
                out.push((0, dy));
                if right {
                    out.push((1, dy));
                }
                if left {
                    out.push((-1, dy));
                }
            }
            if right {
                out.push((1, 0));
            }
            if left {
                out.push((-1, 0));
            }
        }
    }
}

/// Jump point search on an 8-connected grid without corner cutting. Returns
/// the jump points from `start` to `goal` inclusive and the cost in cells.
pub(super) fn search_cells(
    grid: &OccupancyGrid,
    start: (i64, i64),
    goal: (i64, i64),
) -> Option<(Vec<(i64, i64)>, f64)> {
    let w = grid.width();
    let idx = |c: (i64, i64)| c.1 as usize * w + c.0 as usize;
    let n = w * grid.height();
    let mut g = vec![f64::INFINITY; n];
    let mut parent: Vec<Option<(i64, i64)>> = vec![None; n];
    let mut closed = vec![false; n];
    let s = Search { grid, goal };
    let mut open = BinaryHeap::new();
    g[idx(start)] = 0.0;
    open.push(Reverse((octile(start, goal).to_bits(), 0u64, start)));
    let mut dirs = Vec::with_capacity(8);
    let mut tie = 0u64;
    while let Some(Reverse((_, _, cur))) = open.pop() {
        let ci = idx(cur);
        if closed[ci] {
            continue;
        }
        closed[ci] = true;
        if cur == goal {
            let mut path = vec![cur];
            let mut c = cur;
            while let Some(p) = parent[idx(c)] {
                path.push(p);
                c = p;
            }
            path.reverse();
            return Some((path, g[ci]));
        }
        s.directions(cur.0, cur.1, parent[ci], &mut dirs);
        for &(dx, dy) in &dirs {
            let Some(jp) = s.jump(cur.0 + dx, cur.1 + dy, dx, dy) else {
                continue;
            };
            let ji = idx(jp);
            if closed[ji] {
                continue;
            }
            let ng = g[ci] + octile(cur, jp);
            if ng < g[ji] {
                g[ji] = ng;
                parent[ji] = Some(cur);
                tie += 1;
                // tie-break toward deeper nodes for fewer expansions
                open.push(Reverse(((ng + octile(jp, goal)).to_bits(), u64::MAX - tie, jp)));
            }
        }
    }
    None
}
