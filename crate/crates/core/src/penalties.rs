//! Inequality penalties, final-position residuals, and the anchor term.
//!
//! Sampled constraints are evaluated at the `n + 1` interval boundaries of
//! every segment and integrated with trapezoid weights `(T_i / n) ν_j`.
//! Position-dependent gradients are collected per sample and pushed back to
//! coefficients and durations through [`IntegrationCache::backprop_into`].

use serde::{Deserialize, Serialize};

use crate::grid_world::EsdfMap;
use crate::ms_trajectory::{basis, IntegrationCache, MsTrajectory, SegmentCoeffs, TrajectoryError, ARC, NCOEF, THETA};

/// Smoothing width of [`relax_l1`].
pub const L1_DELTA: f64 = 1e-3;

/// C² relaxation of `max(x, 0)`; returns value and slope.
#[inline]
pub fn relax_l1(x: f64) -> (f64, f64) {
    const D: f64 = L1_DELTA;
    if x <= 0.0 {
        (0.0, 0.0)
    } else if x <= D {
        let x2 = x * x;
        (x2 * x / (D * D) - x2 * x2 / (2.0 * D * D * D), 3.0 * x2 / (D * D) - 2.0 * x2 * x / (D * D * D))
    } else {
        (x - 0.5 * D, 1.0)
    }
}

/// Kinematic and geometric limits.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct Limits {
    /// Max forward speed, m/s.
    pub v_max: f64,
    /// Max reverse speed, m/s, signed (`<= 0`; `0` forbids reversing).
    pub v_rev: f64,
    /// Max yaw rate at standstill, rad/s.
    pub omega_max: f64,
    /// Max linear acceleration, m/s².
    pub a_max: f64,
    /// Max yaw acceleration, rad/s².
    pub alpha_max: f64,
    /// Clearance each contour point must keep from obstacles, m.
    pub d_s: f64,
    pub eps_low: f64,
    pub eps_upp: f64,
    /// Body-frame contour points.
    pub contour: Vec<[f64; 2]>,
}

impl Default for Limits {
    fn default() -> Self {
        Self {
            v_max: 3.0,
            v_rev: -3.0,
            omega_max: 4.0,
            a_max: 3.0,
            alpha_max: 6.0,
            d_s: 0.3,
            eps_low: 0.5,
            eps_upp: 2.0,
            contour: vec![[0.0, 0.0]],
        }
    }
}

impl Limits {
    pub fn validate(&self) -> Result<(), String> {
        let ok = self.v_max > 0.0
            && self.v_rev <= 0.0
            && self.omega_max > 0.0
            && self.a_max > 0.0
            && self.alpha_max > 0.0
            && self.d_s >= 0.0
            && (0.0..1.0).contains(&self.eps_low)
            && self.eps_upp > 1.0
            && !self.contour.is_empty();
        if ok {
            Ok(())
        } else {
            Err(format!("invalid limits: {self:?}"))
        }
    }

    /// Four corners and four edge midpoints of a `length x width` rectangle
    /// centered on the body origin.
    pub fn rectangle_contour(length: f64, width: f64) -> Vec<[f64; 2]> {
        let (a, b) = (0.5 * length, 0.5 * width);
        vec![[a, b], [a, -b], [-a, b], [-a, -b], [a, 0.0], [-a, 0.0], [0.0, b], [0.0, -b]]
    }
}

/// Per-family penalty weights `ς_d`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ConstraintWeights {
    pub forward: f64,
    pub reverse: f64,
    pub accel: f64,
    pub yaw_accel: f64,
    pub safety: f64,
    pub t_low: f64,
    pub t_upp: f64,
    pub anchor: f64,
}

impl Default for ConstraintWeights {
    fn default() -> Self {
        Self::uniform(1e4)
    }
}

impl ConstraintWeights {
    pub fn uniform(w: f64) -> Self {
        Self { forward: w, reverse: w, accel: w, yaw_accel: w, safety: w, t_low: w, t_upp: w, anchor: w }
    }

    fn get(&self, f: Family) -> f64 {
        match f {
            Family::Forward => self.forward,
            Family::Reverse => self.reverse,
            Family::Accel => self.accel,
            Family::YawAccel => self.yaw_accel,
            Family::Safety => self.safety,
            Family::TLow => self.t_low,
            Family::TUpp => self.t_upp,
            Family::Anchor => self.anchor,
        }
    }
}

/// Constraint families, in report order.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Family {
    Forward,
    Reverse,
    Accel,
    YawAccel,
    Safety,
    TLow,
    TUpp,
    Anchor,
}

impl Family {
    pub const ALL: [Family; 8] = [
        Family::Forward,
        Family::Reverse,
        Family::Accel,
        Family::YawAccel,
        Family::Safety,
        Family::TLow,
        Family::TUpp,
        Family::Anchor,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Family::Forward => "forward",
            Family::Reverse => "reverse",
            Family::Accel => "accel",
            Family::YawAccel => "yaw_accel",
            Family::Safety => "safety",
            Family::TLow => "t_low",
            Family::TUpp => "t_upp",
            Family::Anchor => "anchor",
        }
    }
}

/// Violation with gradient `[∂/∂v, ∂/∂ω]`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct VelocityViolation {
    pub value: f64,
    pub grad: [f64; 2],
}

/// Forward (`[0..2]`) and reverse (`[2..4]`) envelope violations for
/// `η = +1, -1`. Nonpositive means feasible.
pub fn velocity_coupling(v: f64, omega: f64, l: &Limits) -> [VelocityViolation; 4] {
    let mut out = [VelocityViolation { value: 0.0, grad: [0.0; 2] }; 4];
    for (k, eta) in [1.0, -1.0].into_iter().enumerate() {
        out[k] = VelocityViolation {
            value: eta * omega * l.v_max + l.omega_max * v - l.v_max * l.omega_max,
            grad: [l.omega_max, eta * l.v_max],
        };
        out[2 + k] = VelocityViolation {
            value: -eta * omega * l.v_rev - l.omega_max * v + l.v_rev * l.omega_max,
            grad: [-l.omega_max, -eta * l.v_rev],
        };
    }
    out
}

/// `(s̈² - a_M², θ̈² - α_M²)`; gradients are `2 s̈` and `2 θ̈`.
pub fn accel_penalties(s_dd: f64, theta_dd: f64, l: &Limits) -> ([f64; 2], [f64; 2]) {
    ([s_dd * s_dd - l.a_max * l.a_max, theta_dd * theta_dd - l.alpha_max * l.alpha_max], [2.0 * s_dd, 2.0 * theta_dd])
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SafetyViolation {
    pub value: f64,
    /// `[∂/∂x, ∂/∂y, ∂/∂θ]`
    pub grad: [f64; 3],
    pub clamped: bool,
}

/// `d_s - E(p + R(θ) χ)` for each contour point.
pub fn safety_penalty(x: f64, y: f64, theta: f64, esdf: &EsdfMap, l: &Limits) -> Vec<SafetyViolation> {
    let mut out = Vec::with_capacity(l.contour.len());
    safety_into(x, y, theta, esdf, l, |v| out.push(v));
    out
}

#[inline]
fn safety_into(x: f64, y: f64, theta: f64, esdf: &EsdfMap, l: &Limits, mut f: impl FnMut(SafetyViolation)) {
    let (sn, cs) = theta.sin_cos();
    for chi in &l.contour {
        let p = [x + cs * chi[0] - sn * chi[1], y + sn * chi[0] + cs * chi[1]];
        let dp = [-sn * chi[0] - cs * chi[1], cs * chi[0] - sn * chi[1]];
        let e = esdf.at(p);
        f(SafetyViolation {
            value: l.d_s - e.value,
            grad: [-e.gradient[0], -e.gradient[1], -(e.gradient[0] * dp[0] + e.gradient[1] * dp[1])],
            clamped: e.clamped,
        });
    }
}

/// Duration-balance violations `(low, upp)` per segment.
pub fn duration_balance(t: &[f64], l: &Limits) -> (Vec<f64>, Vec<f64>) {
    let mean = t.iter().sum::<f64>() / t.len() as f64;
    (t.iter().map(|&ti| l.eps_low * mean - ti).collect(), t.iter().map(|&ti| ti - l.eps_upp * mean).collect())
}

/// Sum of squared distances between segment end points and anchors, with the
/// gradient on each end point.
pub fn anchor_penalty(cache: &IntegrationCache, anchors: &[[f64; 2]]) -> (f64, Vec<[f64; 2]>) {
    let mut total = 0.0;
    let grads = anchors
        .iter()
        .enumerate()
        .map(|(i, a)| {
            let p = cache.segment_end(i);
            let d = [p[0] - a[0], p[1] - a[1]];
            total += d[0] * d[0] + d[1] * d[1];
            [2.0 * d[0], 2.0 * d[1]]
        })
        .collect();
    (total, grads)
}

/// `(x̃_f - x_f, ỹ_f - y_f)`. The gradient of each component with respect to
/// the integrated end point is the unit vector; use
/// [`GradientBuffer::add_final_position`] to chain it.
pub fn final_position_residual(cache: &IntegrationCache, goal: [f64; 2]) -> [f64; 2] {
    let p = cache.final_position();
    [p[0] - goal[0], p[1] - goal[1]]
}

/// Gradient accumulator over coefficients, durations and sampled positions.
#[derive(Debug, Clone)]
pub struct GradientBuffer {
    pub coeffs: Vec<SegmentCoeffs>,
    pub durations: Vec<f64>,
    pub positions: Vec<[f64; 2]>,
    n: usize,
}

impl GradientBuffer {
    pub fn new(m: usize, n: usize) -> Self {
        Self { coeffs: vec![[[0.0; NCOEF]; 2]; m], durations: vec![0.0; m], positions: vec![[0.0; 2]; m * (n + 1)], n }
    }

    pub fn add_position(&mut self, i: usize, j: usize, g: [f64; 2]) {
        let k = i * (self.n + 1) + j;
        self.positions[k][0] += g[0];
        self.positions[k][1] += g[1];
    }

    pub fn add_final_position(&mut self, g: [f64; 2]) {
        let k = self.positions.len() - 1;
        self.positions[k][0] += g[0];
        self.positions[k][1] += g[1];
    }

    /// Move position gradients into coefficients and durations.
    pub fn resolve(&mut self, cache: &IntegrationCache) {
        cache.backprop_into(&self.positions, &mut self.coeffs, &mut self.durations);
        self.positions.iter_mut().for_each(|g| *g = [0.0; 2]);
    }
}

/// Max sampled violation and violating-sample count per family.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize)]
pub struct FamilyStats {
    pub penalty: f64,
    pub max_violation: f64,
    pub violating: usize,
    pub samples: usize,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct PenaltyReport {
    pub total: f64,
    pub families: [FamilyStats; 8],
}

impl PenaltyReport {
    pub fn family(&self, f: Family) -> &FamilyStats {
        &self.families[f as usize]
    }

    /// Largest sampled violation across the given families.
    pub fn max_violation(&self, families: &[Family]) -> f64 {
        families.iter().map(|&f| self.family(f).max_violation).fold(f64::NEG_INFINITY, f64::max)
    }

    fn record(&mut self, f: Family, weight: f64, value: f64, penalty: f64) {
        let s = &mut self.families[f as usize];
        s.samples += 1;
        if s.samples == 1 || value > s.max_violation {
            s.max_violation = value;
        }
        if value > 0.0 {
            s.violating += 1;
        }
        s.penalty += weight * penalty;
        self.total += weight * penalty;
    }
}

/// Everything the accumulator reads besides the trajectory.
#[derive(Debug, Clone, Copy)]
pub struct PenaltyInputs<'a> {
    pub limits: &'a Limits,
    pub weights: &'a ConstraintWeights,
    /// `None` drops the safety family.
    pub esdf: Option<&'a EsdfMap>,
    /// `None` drops the anchor family.
    pub anchors: Option<&'a [[f64; 2]]>,
}

/// Penalty value with gradients in coefficient/duration layout.
#[derive(Debug, Clone)]
pub struct PenaltyEval {
    pub report: PenaltyReport,
    pub grad_coeffs: Vec<SegmentCoeffs>,
    pub grad_durations: Vec<f64>,
}

/// Evaluate all penalty families and their full gradients.
pub fn accumulate(
    traj: &MsTrajectory,
    cache: &IntegrationCache,
    inputs: &PenaltyInputs,
) -> Result<PenaltyEval, TrajectoryError> {
    let mut buf = GradientBuffer::new(traj.num_segments(), cache.n());
    let report = accumulate_into(traj, cache, inputs, &mut buf)?;
    buf.resolve(cache);
    Ok(PenaltyEval { report, grad_coeffs: buf.coeffs, grad_durations: buf.durations })
}

/// Accumulating form: adds to `buf` without resolving position gradients.
pub fn accumulate_into(
    traj: &MsTrajectory,
    cache: &IntegrationCache,
    inputs: &PenaltyInputs,
    buf: &mut GradientBuffer,
) -> Result<PenaltyReport, TrajectoryError> {
    cache.check(traj)?;
    let n = cache.n();
    let l = inputs.limits;
    let w = inputs.weights;
    let mut report = PenaltyReport::default();

    for i in 0..traj.num_segments() {
        let t = traj.durations()[i];
        for j in 0..=n {
            let alpha = j as f64 / n as f64;
            let tau = alpha * t;
            let nu = if j == 0 || j == n { 0.5 } else { 1.0 };
            let wt = t / n as f64 * nu;
            let st = traj.eval_local(i, tau, 3);
            // gradient on (channel, derivative order) of the sampled state
            let mut gs = [[0.0; 4]; 2];
            let mut direct_t = 0.0;
            let mut add = |f: Family, value: f64, report: &mut PenaltyReport| -> f64 {
                let (p, dp) = relax_l1(value);
                let s = w.get(f);
                report.record(f, s * wt, value, p);
                direct_t += s * nu / n as f64 * p;
                s * wt * dp
            };

            let vel = velocity_coupling(st.v(), st.omega(), l);
            for (k, vv) in vel.iter().enumerate() {
                let fam = if k < 2 { Family::Forward } else { Family::Reverse };
                let g = add(fam, vv.value, &mut report);
                gs[ARC][1] += g * vv.grad[0];
                gs[THETA][1] += g * vv.grad[1];
            }
            let (acc, dacc) = accel_penalties(st.s[2], st.theta[2], l);
            let g = add(Family::Accel, acc[0], &mut report);
            gs[ARC][2] += g * dacc[0];
            let g = add(Family::YawAccel, acc[1], &mut report);
            gs[THETA][2] += g * dacc[1];

            if let Some(esdf) = inputs.esdf {
                let p = cache.sample_position(i, j);
                let mut gp = [0.0; 2];
                safety_into(p[0], p[1], st.theta[0], esdf, l, |sv| {
                    let g = add(Family::Safety, sv.value, &mut report);
                    gp[0] += g * sv.grad[0];
                    gp[1] += g * sv.grad[1];
                    gs[THETA][0] += g * sv.grad[2];
                });
                if gp != [0.0, 0.0] {
                    buf.add_position(i, j, gp);
                }
            }

            buf.durations[i] += direct_t;
            let bases = [basis(tau, 0), basis(tau, 1), basis(tau, 2)];
            let mut chain_t = 0.0;
            for ch in [THETA, ARC] {
                let c = &traj.coeffs()[i][ch];
                for order in 0..3 {
                    let g = gs[ch][order];
                    if g == 0.0 {
                        continue;
                    }
                    for k in 0..NCOEF {
                        buf.coeffs[i][ch][k] += g * bases[order][k];
                    }
                    chain_t += g * crate::ms_trajectory::poly_eval(c, tau, order + 1);
                }
            }
            buf.durations[i] += chain_t * alpha;
        }
    }

    let durs = traj.durations();
    let m = durs.len() as f64;
    let (low, upp) = duration_balance(durs, l);
    let mut mean_grad = 0.0;
    for (i, (&cl, &cu)) in low.iter().zip(&upp).enumerate() {
        let (p, dp) = relax_l1(cl);
        report.record(Family::TLow, w.t_low, cl, p);
        buf.durations[i] -= w.t_low * dp;
        mean_grad += w.t_low * dp * l.eps_low / m;
        let (p, dp) = relax_l1(cu);
        report.record(Family::TUpp, w.t_upp, cu, p);
        buf.durations[i] += w.t_upp * dp;
        mean_grad -= w.t_upp * dp * l.eps_upp / m;
    }
    buf.durations.iter_mut().for_each(|g| *g += mean_grad);

    if let Some(anchors) = inputs.anchors {
        if anchors.len() != traj.num_segments() {
            return Err(TrajectoryError::Shape(format!(
                "{} anchors for {} segments",
                anchors.len(),
                traj.num_segments()
            )));
        }
        let (val, grads) = anchor_penalty(cache, anchors);
        for (i, g) in grads.iter().enumerate() {
            let p = cache.segment_end(i);
            let d2 = (p[0] - anchors[i][0]).powi(2) + (p[1] - anchors[i][1]).powi(2);
            report.families[Family::Anchor as usize].samples += 1;
            let s = &mut report.families[Family::Anchor as usize];
            s.max_violation = s.max_violation.max(d2.sqrt());
            buf.add_position(i, n, [w.anchor * g[0], w.anchor * g[1]]);
        }
        report.families[Family::Anchor as usize].penalty = w.anchor * val;
        report.total += w.anchor * val;
    }
    Ok(report)
}
