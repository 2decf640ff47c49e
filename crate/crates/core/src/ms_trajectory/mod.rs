//! Piecewise-quintic trajectories over heading `θ` and forward arc length `s`,
//! with Simpson-rule position integration and its gradient cache.

mod cache;
mod quadrature;

pub use cache::IntegrationCache;
pub use quadrature::{integrate_span, reference_final_position, reference_position_at, simpson_error_bound};

use std::sync::atomic::{AtomicU64, Ordering};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::kinematics::{IcrParams, Pose2};

/// Control-effort order; segments are polynomials of degree `2H - 1`.
pub const H: usize = 3;
/// Coefficients per channel per segment.
pub const NCOEF: usize = 2 * H;
/// Channel index of the heading polynomial.
pub const THETA: usize = 0;
/// Channel index of the arc-length polynomial.
pub const ARC: usize = 1;
/// Default Simpson intervals per segment.
pub const DEFAULT_INTERVALS: usize = 10;

const DOMAIN_TOL: f64 = 1e-9;

/// Coefficients of one segment, `[channel][power]`, in local time.
pub type SegmentCoeffs = [[f64; NCOEF]; 2];

#[derive(Debug, Error, Clone, PartialEq)]
pub enum TrajectoryError {
    #[error("time {t} outside trajectory domain [0, {total}]")]
    OutOfDomain { t: f64, total: f64 },
    #[error("integration cache is stale for this trajectory")]
    StaleCache,
    #[error("segment {index} has non-positive or non-finite duration {value}")]
    InvalidDuration { index: usize, value: f64 },
    #[error("shape mismatch: {0}")]
    Shape(String),
}

static NEXT_VERSION: AtomicU64 = AtomicU64::new(1);

fn fresh_version() -> u64 {
    NEXT_VERSION.fetch_add(1, Ordering::Relaxed)
}

/// `θ` and `s` with their first three time derivatives.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct MotionState {
    pub theta: [f64; 4],
    pub s: [f64; 4],
}

impl MotionState {
    /// Body forward speed.
    pub fn v(&self) -> f64 {
        self.s[1]
    }
    /// Yaw rate.
    pub fn omega(&self) -> f64 {
        self.theta[1]
    }
}

#[derive(Debug, Clone)]
pub struct MsTrajectory {
    coeffs: Vec<SegmentCoeffs>,
    durations: Vec<f64>,
    start_pose: Pose2,
    icr: IcrParams,
    version: u64,
}

impl PartialEq for MsTrajectory {
    fn eq(&self, o: &Self) -> bool {
        self.coeffs == o.coeffs && self.durations == o.durations && self.start_pose == o.start_pose && self.icr == o.icr
    }
}

/// Value of `d`-th derivative of `Σ c_k t^k`.
#[inline]
pub fn poly_eval(c: &[f64; NCOEF], t: f64, d: usize) -> f64 {
    let mut acc = 0.0;
    for k in (d..NCOEF).rev() {
        acc = acc * t + c[k] * falling(k, d);
    }
    acc
}

/// `k! / (k-d)!`
#[inline]
pub fn falling(k: usize, d: usize) -> f64 {
    let mut f = 1.0;
    for m in 0..d {
        f *= (k - m) as f64;
    }
    f
}

/// `d`-th derivative of the monomial basis at `t`.
#[inline]
pub fn basis(t: f64, d: usize) -> [f64; NCOEF] {
    let mut b = [0.0; NCOEF];
    for k in d..NCOEF {
        b[k] = falling(k, d) * t.powi((k - d) as i32);
    }
    b
}

fn check_durations(durations: &[f64]) -> Result<(), TrajectoryError> {
    for (index, &value) in durations.iter().enumerate() {
        if !(value > 0.0) || !value.is_finite() {
            return Err(TrajectoryError::InvalidDuration { index, value });
        }
    }
    Ok(())
}

impl MsTrajectory {
    pub fn new(
        start_pose: Pose2,
        icr: IcrParams,
        coeffs: Vec<SegmentCoeffs>,
        durations: Vec<f64>,
    ) -> Result<Self, TrajectoryError> {
        if coeffs.is_empty() || coeffs.len() != durations.len() {
            return Err(TrajectoryError::Shape(format!(
                "{} coefficient blocks for {} durations",
                coeffs.len(),
                durations.len()
            )));
        }
        check_durations(&durations)?;
        Ok(Self { coeffs, durations, start_pose, icr, version: fresh_version() })
    }

    /// Replace coefficients and durations; invalidates every cache built so far.
    pub fn set_segments(&mut self, coeffs: Vec<SegmentCoeffs>, durations: Vec<f64>) -> Result<(), TrajectoryError> {
        if coeffs.is_empty() || coeffs.len() != durations.len() {
            return Err(TrajectoryError::Shape("segment count mismatch".into()));
        }
        check_durations(&durations)?;
        self.coeffs = coeffs;
        self.durations = durations;
        self.version = fresh_version();
        Ok(())
    }

    pub fn set_icr(&mut self, icr: IcrParams) {
        self.icr = icr;
        self.version = fresh_version();
    }

    pub fn num_segments(&self) -> usize {
        self.durations.len()
    }
    pub fn coeffs(&self) -> &[SegmentCoeffs] {
        &self.coeffs
    }
    pub fn durations(&self) -> &[f64] {
        &self.durations
    }
    pub fn start_pose(&self) -> Pose2 {
        self.start_pose
    }
    pub fn icr(&self) -> IcrParams {
        self.icr
    }
    pub fn version(&self) -> u64 {
        self.version
    }

    pub fn total_duration(&self) -> f64 {
        self.durations.iter().sum()
    }

    /// Segment index and local time for global `t`. Junctions belong to the
    /// later segment; values within `1e-9` outside the domain are clamped.
    pub fn locate(&self, t: f64) -> Result<(usize, f64), TrajectoryError> {
        let total = self.total_duration();
        if !(t >= -DOMAIN_TOL && t <= total + DOMAIN_TOL) {
            return Err(TrajectoryError::OutOfDomain { t, total });
        }
        let mut rem = t.max(0.0);
        let last = self.durations.len() - 1;
        for (i, &d) in self.durations.iter().enumerate() {
            if i == last || rem < d {
                return Ok((i, rem.min(d)));
            }
            rem -= d;
        }
        unreachable!("durations nonempty")
    }

    /// Derivatives `0..=order` of both channels at `t` (higher entries zero).
    pub fn eval_state(&self, t: f64, order: usize) -> Result<MotionState, TrajectoryError> {
        let (i, tau) = self.locate(t)?;
        Ok(self.eval_local(i, tau, order))
    }

    /// Same as [`eval_state`](Self::eval_state) at local time of segment `i`.
    pub fn eval_local(&self, i: usize, tau: f64, order: usize) -> MotionState {
        let c = &self.coeffs[i];
        let mut st = MotionState::default();
        for d in 0..=order.min(3) {
            st.theta[d] = poly_eval(&c[THETA], tau, d);
            st.s[d] = poly_eval(&c[ARC], tau, d);
        }
        st
    }

    /// Full motion state at the start of segment `i` (or the end when `i == M`).
    pub fn junction_state(&self, i: usize) -> MotionState {
        if i == self.num_segments() {
            let l = i - 1;
            self.eval_local(l, self.durations[l], 3)
        } else {
            self.eval_local(i, 0.0, 3)
        }
    }

    /// Final `θ` and `s`.
    pub fn final_state(&self) -> MotionState {
        self.junction_state(self.num_segments())
    }

    /// Body-frame position integrand `(f_x, f_y)` at local time of segment `i`.
    #[inline]
    pub fn integrand(&self, i: usize, tau: f64) -> [f64; 2] {
        let c = &self.coeffs[i];
        let th = poly_eval(&c[THETA], tau, 0);
        let dth = poly_eval(&c[THETA], tau, 1);
        let ds = poly_eval(&c[ARC], tau, 1);
        let (sn, cs) = th.sin_cos();
        let xv = self.icr.x_iv;
        [ds * cs + xv * dth * sn, ds * sn - xv * dth * cs]
    }

    /// Build the Simpson integration cache with `n` intervals per segment.
    pub fn integrate(&self, n: usize) -> IntegrationCache {
        IntegrationCache::build(self, n)
    }

    pub fn to_file(&self) -> TrajectoryFile {
        TrajectoryFile {
            h: H,
            m: self.num_segments(),
            durations: self.durations.clone(),
            coeffs: self.coeffs.iter().map(|c| [c[0].to_vec(), c[1].to_vec()]).collect(),
            start_pose: self.start_pose,
            icr: self.icr,
        }
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(&self.to_file()).expect("trajectory serializes")
    }

    pub fn from_json(text: &str) -> Result<Self, TrajectoryError> {
        let f: TrajectoryFile = serde_json::from_str(text).map_err(|e| TrajectoryError::Shape(e.to_string()))?;
        Self::try_from(f)
    }
}

/// On-disk trajectory layout; see `docs/format.md`.
#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
#[serde(deny_unknown_fields)]
pub struct TrajectoryFile {
    pub h: usize,
    #[serde(rename = "M")]
    pub m: usize,
    pub durations: Vec<f64>,
    /// `coeffs[segment][channel][power]`, channel 0 is `θ`, channel 1 is `s`.
    pub coeffs: Vec<[Vec<f64>; 2]>,
    pub start_pose: Pose2,
    pub icr: IcrParams,
}

impl TryFrom<TrajectoryFile> for MsTrajectory {
    type Error = TrajectoryError;

    fn try_from(f: TrajectoryFile) -> Result<Self, Self::Error> {
        if f.h != H {
            return Err(TrajectoryError::Shape(format!("h = {} unsupported, expected {H}", f.h)));
        }
        if f.m != f.coeffs.len() || f.m != f.durations.len() {
            return Err(TrajectoryError::Shape(format!(
                "M = {} but {} coefficient blocks and {} durations",
                f.m,
                f.coeffs.len(),
                f.durations.len()
            )));
        }
        let mut coeffs = Vec::with_capacity(f.m);
        for (i, block) in f.coeffs.iter().enumerate() {
            let mut c = [[0.0; NCOEF]; 2];
            for ch in 0..2 {
                if block[ch].len() != NCOEF {
                    return Err(TrajectoryError::Shape(format!(
                        "segment {i} channel {ch} has {} coefficients, expected {NCOEF}",
                        block[ch].len()
                    )));
                }
                c[ch].copy_from_slice(&block[ch]);
            }
            coeffs.push(c);
        }
        if !f.icr.is_valid() {
            return Err(TrajectoryError::Shape("invalid ICR parameters".into()));
        }
        MsTrajectory::new(f.start_pose, f.icr, coeffs, f.durations)
    }
}
