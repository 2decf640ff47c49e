//! Minimum-jerk map from sparse parameters (boundary states, junction values,
//! durations, free final arc length) to quintic coefficients, and the adjoint
//! that carries coefficient gradients back to those parameters.
//!
//! Both channels share one `6M x 6M` system. Rows are ordered so that the
//! matrix has lower and upper bandwidth 6:
//!
//! ```text
//! 0..3            initial value, rate, acceleration
//! 3+6i .. 9+6i    junction i: jerk cont, snap cont, waypoint, pos cont, vel cont, acc cont
//! 6M-3 .. 6M      final value, rate, acceleration
//! ```

use nalgebra::{DMatrix, DVector};
use thiserror::Error;

use crate::ms_trajectory::{basis, falling, poly_eval, SegmentCoeffs, ARC, NCOEF, THETA};

const BAND: usize = 6;
const PIVOT_FLOOR: f64 = 1e-12;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum MincoError {
    #[error("segment {index} has non-positive or non-finite duration {value}")]
    InvalidDuration { index: usize, value: f64 },
    #[error("linear solve failed near segment {segment}")]
    SolveFailed { segment: usize },
    #[error("shape mismatch: {0}")]
    Shape(String),
}

/// Fixed boundary data. The final arc length itself is a free parameter and
/// is passed separately.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct BoundaryConditions {
    /// `(θ, θ̇, θ̈)` at the start.
    pub theta0: [f64; 3],
    /// `(s, ṡ, s̈)` at the start; `s` is normally 0.
    pub s0: [f64; 3],
    /// `(θ, θ̇, θ̈)` at the end.
    pub theta_f: [f64; 3],
    /// `(ṡ, s̈)` at the end.
    pub s_f_rates: [f64; 2],
}

impl BoundaryConditions {
    /// Rest-to-rest from heading `theta0` to `theta_f`.
    pub fn rest(theta0: f64, theta_f: f64) -> Self {
        Self { theta0: [theta0, 0.0, 0.0], s0: [0.0; 3], theta_f: [theta_f, 0.0, 0.0], s_f_rates: [0.0; 2] }
    }
}

/// Gradients with respect to the sparse parameters.
#[derive(Debug, Clone, PartialEq)]
pub struct SparseGradient {
    /// `[θ', s']` per interior junction.
    pub waypoints: Vec<[f64; 2]>,
    pub durations: Vec<f64>,
    pub s_f: f64,
}

/// Row-major band storage for a square matrix with lower/upper bandwidth `BAND`.
#[derive(Debug, Clone)]
struct BandMatrix {
    n: usize,
    data: Vec<f64>,
}

impl BandMatrix {
    const W: usize = 2 * BAND + 1;

    fn zeros(n: usize) -> Self {
        Self { n, data: vec![0.0; n * Self::W] }
    }

    #[inline]
    fn idx(&self, i: usize, j: usize) -> usize {
        debug_assert!(j + BAND >= i && j <= i + BAND, "({i},{j}) outside band");
        i * Self::W + (j + BAND - i)
    }

    #[inline]
    fn get(&self, i: usize, j: usize) -> f64 {
        self.data[self.idx(i, j)]
    }

    #[inline]
    fn set(&mut self, i: usize, j: usize, v: f64) {
        let k = self.idx(i, j);
        self.data[k] = v;
    }

    /// In-place LU without pivoting. Returns the first row whose pivot is tiny.
    fn factorize(&mut self) -> Result<(), usize> {
        let n = self.n;
        for k in 0..n {
            let piv = self.get(k, k);
            if !(piv.abs() >= PIVOT_FLOOR) {
                return Err(k);
            }
            let iend = (k + BAND).min(n - 1);
            let jend = (k + BAND).min(n - 1);
            for i in k + 1..=iend {
                let l = self.get(i, k) / piv;
                if l == 0.0 {
                    continue;
                }
                self.set(i, k, l);
                for j in k + 1..=jend {
                    let v = self.get(i, j) - l * self.get(k, j);
                    self.set(i, j, v);
                }
            }
        }
        Ok(())
    }

    /// Solve `A x = b` in place for two right-hand sides.
    fn solve(&self, b: &mut [[f64; 2]]) {
        let n = self.n;
        for i in 0..n {
            let lo = i.saturating_sub(BAND);
            for j in lo..i {
                let l = self.get(i, j);
                b[i][0] -= l * b[j][0];
                b[i][1] -= l * b[j][1];
            }
        }
        for i in (0..n).rev() {
            let hi = (i + BAND).min(n - 1);
            for j in i + 1..=hi {
                let u = self.get(i, j);
                b[i][0] -= u * b[j][0];
                b[i][1] -= u * b[j][1];
            }
            let d = self.get(i, i);
            b[i][0] /= d;
            b[i][1] /= d;
        }
    }

    /// Solve `Aᵀ x = b` in place for two right-hand sides.
    fn solve_transpose(&self, b: &mut [[f64; 2]]) {
        let n = self.n;
        // Uᵀ is lower triangular.
        for i in 0..n {
            let d = self.get(i, i);
            b[i][0] /= d;
            b[i][1] /= d;
            let hi = (i + BAND).min(n - 1);
            for j in i + 1..=hi {
                let u = self.get(i, j);
                b[j][0] -= u * b[i][0];
                b[j][1] -= u * b[i][1];
            }
        }
        // Lᵀ is unit upper triangular.
        for i in (0..n).rev() {
            let lo = i.saturating_sub(BAND);
            for j in lo..i {
                let l = self.get(i, j);
                b[j][0] -= l * b[i][0];
                b[j][1] -= l * b[i][1];
            }
        }
    }
}

#[derive(Debug, Clone)]
enum Factor {
    Band(BandMatrix),
    Dense(DMatrix<f64>),
}

/// Visit every nonzero of `K(T)` as `(row, col, value)`.
fn assemble<F: FnMut(usize, usize, f64)>(durations: &[f64], mut put: F) {
    let m = durations.len();
    for d in 0..3 {
        put(d, d, falling(d, d));
    }
    for i in 0..m - 1 {
        let t = durations[i];
        let r = 3 + 6 * i;
        let (ci, cn) = (NCOEF * i, NCOEF * (i + 1));
        let mut continuity = |row: usize, d: usize| {
            let b = basis(t, d);
            for k in d..NCOEF {
                put(row, ci + k, b[k]);
            }
            put(row, cn + d, -falling(d, d));
        };
        continuity(r, 3);
        continuity(r + 1, 4);
        continuity(r + 3, 0);
        continuity(r + 4, 1);
        continuity(r + 5, 2);
        let b = basis(t, 0);
        for k in 0..NCOEF {
            put(r + 2, ci + k, b[k]);
        }
    }
    let t = durations[m - 1];
    let ci = NCOEF * (m - 1);
    for d in 0..3 {
        let b = basis(t, d);
        for k in d..NCOEF {
            put(6 * m - 3 + d, ci + k, b[k]);
        }
    }
}

/// Dense copy of `K(T)`.
pub fn dense_matrix(durations: &[f64]) -> DMatrix<f64> {
    let n = NCOEF * durations.len();
    let mut k = DMatrix::zeros(n, n);
    assemble(durations, |i, j, v| k[(i, j)] = v);
    k
}

/// Solved system: coefficients plus the factorization kept for the adjoint.
#[derive(Debug, Clone)]
pub struct Minco {
    durations: Vec<f64>,
    coeffs: Vec<SegmentCoeffs>,
    factor: Factor,
}

fn validate(waypoints: &[[f64; 2]], durations: &[f64]) -> Result<(), MincoError> {
    if durations.is_empty() {
        return Err(MincoError::Shape("need at least one segment".into()));
    }
    if waypoints.len() + 1 != durations.len() {
        return Err(MincoError::Shape(format!("{} waypoints for {} segments", waypoints.len(), durations.len())));
    }
    for (index, &value) in durations.iter().enumerate() {
        if !(value > 0.0) || !value.is_finite() {
            return Err(MincoError::InvalidDuration { index, value });
        }
    }
    Ok(())
}

/// Build the right-hand side, one column per channel.
fn rhs(bc: &BoundaryConditions, waypoints: &[[f64; 2]], s_f: f64) -> Vec<[f64; 2]> {
    let m = waypoints.len() + 1;
    let mut b = vec![[0.0; 2]; NCOEF * m];
    for d in 0..3 {
        b[d] = [bc.theta0[d], bc.s0[d]];
    }
    for (i, q) in waypoints.iter().enumerate() {
        b[5 + 6 * i] = *q;
    }
    let f = 6 * m - 3;
    b[f] = [bc.theta_f[0], s_f];
    b[f + 1] = [bc.theta_f[1], bc.s_f_rates[0]];
    b[f + 2] = [bc.theta_f[2], bc.s_f_rates[1]];
    b
}

/// Solve `K(T) c = b` for both channels.
pub fn assemble_and_solve(
    bc: &BoundaryConditions,
    waypoints: &[[f64; 2]],
    s_f: f64,
    durations: &[f64],
) -> Result<Minco, MincoError> {
    validate(waypoints, durations)?;
    let n = NCOEF * durations.len();
    let mut band = BandMatrix::zeros(n);
    assemble(durations, |i, j, v| band.set(i, j, v));
    let mut x = rhs(bc, waypoints, s_f);
    let factor = match band.factorize() {
        Ok(()) => {
            band.solve(&mut x);
            Factor::Band(band)
        }
        Err(row) => {
            let k = dense_matrix(durations);
            let lu = k.clone().lu();
            for ch in 0..2 {
                let col = DVector::from_iterator(n, x.iter().map(|r| r[ch]));
                let sol = lu.solve(&col).ok_or(MincoError::SolveFailed { segment: row.saturating_sub(3) / 6 })?;
                for (r, v) in x.iter_mut().zip(sol.iter()) {
                    r[ch] = *v;
                }
            }
            Factor::Dense(k)
        }
    };
    if x.iter().any(|r| !r[0].is_finite() || !r[1].is_finite()) {
        return Err(MincoError::SolveFailed { segment: 0 });
    }
    let coeffs = x
        .chunks_exact(NCOEF)
        .map(|blk| {
            let mut c = [[0.0; NCOEF]; 2];
            for k in 0..NCOEF {
                c[THETA][k] = blk[k][0];
                c[ARC][k] = blk[k][1];
            }
            c
        })
        .collect();
    Ok(Minco { durations: durations.to_vec(), coeffs, factor })
}

impl Minco {
    pub fn coeffs(&self) -> &[SegmentCoeffs] {
        &self.coeffs
    }

    pub fn into_coeffs(self) -> Vec<SegmentCoeffs> {
        self.coeffs
    }

    pub fn durations(&self) -> &[f64] {
        &self.durations
    }

    /// True when the banded factorization was used.
    pub fn is_banded(&self) -> bool {
        matches!(self.factor, Factor::Band(_))
    }

    fn solve_transpose(&self, g: &mut [[f64; 2]]) -> Result<(), MincoError> {
        match &self.factor {
            Factor::Band(b) => b.solve_transpose(g),
            Factor::Dense(k) => {
                let n = g.len();
                let lu = k.transpose().lu();
                for ch in 0..2 {
                    let col = DVector::from_iterator(n, g.iter().map(|r| r[ch]));
                    let sol = lu.solve(&col).ok_or(MincoError::SolveFailed { segment: 0 })?;
                    for (r, v) in g.iter_mut().zip(sol.iter()) {
                        r[ch] = *v;
                    }
                }
            }
        }
        Ok(())
    }

    /// Adjoint of the solve. `dj_dc` uses the coefficient layout; `dj_dt`
    /// holds explicit duration dependence of the objective.
    pub fn backprop(&self, dj_dc: &[SegmentCoeffs], dj_dt: &[f64]) -> Result<SparseGradient, MincoError> {
        let m = self.durations.len();
        if dj_dc.len() != m || dj_dt.len() != m {
            return Err(MincoError::Shape(format!(
                "gradient sizes {} / {} for {m} segments",
                dj_dc.len(),
                dj_dt.len()
            )));
        }
        let mut g: Vec<[f64; 2]> = Vec::with_capacity(NCOEF * m);
        for c in dj_dc {
            for k in 0..NCOEF {
                g.push([c[THETA][k], c[ARC][k]]);
            }
        }
        self.solve_transpose(&mut g)?;

        let waypoints = (0..m - 1).map(|i| g[5 + 6 * i]).collect();
        let s_f = g[6 * m - 3][1];

        let mut durations = dj_dt.to_vec();
        for i in 0..m {
            let t = self.durations[i];
            let c = &self.coeffs[i];
            let d = |k: usize| [poly_eval(&c[THETA], t, k), poly_eval(&c[ARC], t, k)];
            // rows touched by T_i and the derivative order they pick up
            let rows: &[(usize, usize)] =
                if i + 1 < m { &[(3, 4), (4, 5), (5, 1), (6, 1), (7, 2), (8, 3)] } else { &[(3, 1), (4, 2), (5, 3)] };
            let base = if i + 1 < m { 6 * i } else { 6 * m - 6 };
            let mut acc = 0.0;
            for &(off, order) in rows {
                let r = base + off;
                let dv = d(order);
                acc += g[r][0] * dv[0] + g[r][1] * dv[1];
            }
            durations[i] -= acc;
        }
        Ok(SparseGradient { waypoints, durations, s_f })
    }
}

/// Closed-form `∫ (d³p/dt³)² dt` over one channel of one segment, with
/// gradients with respect to its coefficients and duration.
pub fn jerk_energy(c: &[f64; NCOEF], t: f64) -> (f64, [f64; NCOEF], f64) {
    let (c3, c4, c5) = (c[3], c[4], c[5]);
    let t2 = t * t;
    let t3 = t2 * t;
    let t4 = t3 * t;
    let t5 = t4 * t;
    let v = 36.0 * c3 * c3 * t
        + 144.0 * c3 * c4 * t2
        + (192.0 * c4 * c4 + 240.0 * c3 * c5) * t3
        + 720.0 * c4 * c5 * t4
        + 720.0 * c5 * c5 * t5;
    let mut g = [0.0; NCOEF];
    g[3] = 72.0 * c3 * t + 144.0 * c4 * t2 + 240.0 * c5 * t3;
    g[4] = 144.0 * c3 * t2 + 384.0 * c4 * t3 + 720.0 * c5 * t4;
    g[5] = 240.0 * c3 * t3 + 720.0 * c4 * t4 + 1440.0 * c5 * t5;
    let gt = 36.0 * c3 * c3
        + 288.0 * c3 * c4 * t
        + 3.0 * (192.0 * c4 * c4 + 240.0 * c3 * c5) * t2
        + 2880.0 * c4 * c5 * t3
        + 3600.0 * c5 * c5 * t4;
    (v, g, gt)
}
