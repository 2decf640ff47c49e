use super::OccupancyGrid;

/// Distance reported when the grid contains no obstacle (or no free cell).
pub const FREE_SPACE_CAP: f64 = 1e6;

const FAR: f64 = 1e20;

/// Signed distance field over an [`OccupancyGrid`].
///
/// Free cells store the exact distance from their center to the nearest
/// occupied cell center. Occupied cells store `-(d_free - resolution)`, where
/// `d_free` is the distance to the nearest free cell center, so boundary
/// obstacle cells read `0` and the field decreases further inside.
#[derive(Debug, Clone)]
pub struct EsdfMap {
    grid: OccupancyGrid,
    dist: Vec<f64>,
}

/// Result of a bilinear field query.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EsdfSample {
    pub value: f64,
    pub gradient: [f64; 2],
    /// The query point was outside the interpolation domain and was clamped.
    pub clamped: bool,
}

/// Lower envelope of parabolas, one row/column at a time.
fn transform_1d(f: &[f64], d: &mut [f64], v: &mut [usize], z: &mut [f64]) {
    let n = f.len();
    let mut k = 0usize;
    v[0] = 0;
    z[0] = f64::NEG_INFINITY;
    z[1] = f64::INFINITY;
    for q in 1..n {
        let qf = q as f64;
        let mut s;
        loop {
            let vk = v[k] as f64;
            s = ((f[q] + qf * qf) - (f[v[k]] + vk * vk)) / (2.0 * qf - 2.0 * vk);
            if s <= z[k] && k > 0 {
                k -= 1;
            } else {
                break;
            }
        }
        if s <= z[k] {
            // k == 0 and the new parabola dominates everywhere.
            v[0] = q;
            z[1] = f64::INFINITY;
            continue;
        }
        k += 1;
        v[k] = q;
        z[k] = s;
        z[k + 1] = f64::INFINITY;
    }
    k = 0;
    for q in 0..n {
        while z[k + 1] < q as f64 {
            k += 1;
        }
        let dq = q as f64 - v[k] as f64;
        d[q] = dq * dq + f[v[k]];
    }
}

/// Squared distance (in cells) from each cell center to the nearest site.
fn squared_distance(width: usize, height: usize, site: impl Fn(usize) -> bool) -> Vec<f64> {
    let mut g = vec![FAR; width * height];
    let n = width.max(height);
    let mut f = vec![0.0; n];
    let mut d = vec![0.0; n];
    let mut v = vec![0usize; n];
    let mut z = vec![0.0; n + 1];
    // columns
    for ix in 0..width {
        for iy in 0..height {
            f[iy] = if site(iy * width + ix) { 0.0 } else { FAR };
        }
        transform_1d(&f[..height], &mut d[..height], &mut v, &mut z);
        for iy in 0..height {
            g[iy * width + ix] = d[iy];
        }
    }
    // rows
    for iy in 0..height {
        let row = &mut g[iy * width..(iy + 1) * width];
        f[..width].copy_from_slice(row);
        transform_1d(&f[..width], &mut d[..width], &mut v, &mut z);
        row.copy_from_slice(&d[..width]);
    }
    g
}

/// Exact two-pass Euclidean distance transform of the grid.
pub fn build_esdf(grid: OccupancyGrid) -> EsdfMap {
    let (w, h, res) = (grid.width(), grid.height(), grid.resolution());
    let cells = grid.cells();
    let to_occ = squared_distance(w, h, |i| cells[i]);
    let to_free = squared_distance(w, h, |i| !cells[i]);
    let dist = (0..w * h)
        .map(|i| {
            if cells[i] {
                if to_free[i] >= FAR * 0.5 {
                    -FREE_SPACE_CAP
                } else {
                    -(to_free[i].sqrt() * res - res)
                }
            } else if to_occ[i] >= FAR * 0.5 {
                FREE_SPACE_CAP
            } else {
                to_occ[i].sqrt() * res
            }
        })
        .collect();
    EsdfMap { grid, dist }
}

/// Interpolation coordinate along one axis: lower index, upper index, fraction,
/// and the clamp direction (-1 below the domain, +1 above, 0 inside).
fn axis(u: f64, n: usize) -> (usize, usize, f64, i8) {
    let dir = if u < 0.0 {
        -1
    } else if u > (n - 1) as f64 {
        1
    } else {
        0
    };
    if n == 1 {
        return (0, 0, 0.0, dir);
    }
    let uc = u.clamp(0.0, (n - 1) as f64);
    let i0 = (uc.floor() as usize).min(n - 2);
    (i0, i0 + 1, uc - i0 as f64, dir)
}

impl EsdfMap {
    pub fn grid(&self) -> &OccupancyGrid {
        &self.grid
    }

    pub fn into_grid(self) -> OccupancyGrid {
        self.grid
    }

    /// Raw per-cell distance in meters.
    #[inline]
    pub fn cell_distance(&self, ix: usize, iy: usize) -> f64 {
        self.dist[iy * self.grid.width() + ix]
    }

    pub fn distances(&self) -> &[f64] {
        &self.dist
    }

    /// Bilinear value and analytic gradient at world point `p`.
    pub fn at(&self, p: [f64; 2]) -> EsdfSample {
        let g = &self.grid;
        let res = g.resolution();
        let o = g.origin();
        let u = (p[0] - o[0]) / res - 0.5;
        let v = (p[1] - o[1]) / res - 0.5;
        let (x0, x1, fx, cx) = axis(u, g.width());
        let (y0, y1, fy, cy) = axis(v, g.height());
        let d00 = self.cell_distance(x0, y0);
        let d10 = self.cell_distance(x1, y0);
        let d01 = self.cell_distance(x0, y1);
        let d11 = self.cell_distance(x1, y1);

        let value = (1.0 - fy) * ((1.0 - fx) * d00 + fx * d10) + fy * ((1.0 - fx) * d01 + fx * d11);

        let mut gx = ((1.0 - fy) * (d10 - d00) + fy * (d11 - d01)) / res;
        let mut gy = ((1.0 - fx) * (d01 - d00) + fx * (d11 - d10)) / res;
        // On a node line the patch derivative is one-sided; average both sides.
        if cx == 0 && fx == 0.0 && x0 > 0 {
            let l0 = self.cell_distance(x0 - 1, y0);
            let l1 = self.cell_distance(x0 - 1, y1);
            let left = ((1.0 - fy) * (d00 - l0) + fy * (d01 - l1)) / res;
            gx = 0.5 * (gx + left);
        }
        if cy == 0 && fy == 0.0 && y0 > 0 {
            let b0 = self.cell_distance(x0, y0 - 1);
            let b1 = self.cell_distance(x1, y0 - 1);
            let below = ((1.0 - fx) * (d00 - b0) + fx * (d10 - b1)) / res;
            gy = 0.5 * (gy + below);
        }
        if cx != 0 {
            gx = -(cx as f64);
        }
        if cy != 0 {
            gy = -(cy as f64);
        }
        EsdfSample { value, gradient: [gx, gy], clamped: cx != 0 || cy != 0 }
    }

    /// Value only.
    #[inline]
    pub fn value(&self, p: [f64; 2]) -> f64 {
        self.at(p).value
    }
}
