//! ICR-based kinematics shared by the planner, simulator, estimator and tracker.
//!
//! A differential-drive body is described by three instantaneous centers of
//! rotation: the left and right track ICRs at lateral offsets `y_il` and
//! `y_ir`, and the body ICR at longitudinal offset `x_iv`. The standard
//! two-wheeled robot is the special case `y_il = -y_ir = d_wb / 2`,
//! `x_iv = 0`. A nonzero `x_iv` produces lateral slip `v_y = -omega * x_iv`.

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Below this yaw increment the arc update degenerates to a straight line.
const ARC_EPS: f64 = 1e-9;

#[derive(Debug, Error, PartialEq)]
pub enum KinematicsError {
    #[error("ICR offsets must satisfy y_il > y_ir (got y_il = {y_il}, y_ir = {y_ir})")]
    InvalidIcr { y_il: f64, y_ir: f64 },
}

/// Instantaneous-center-of-rotation parameters, in meters, body frame.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct IcrParams {
    pub y_il: f64,
    pub y_ir: f64,
    pub x_iv: f64,
}

impl IcrParams {
    pub fn new(y_il: f64, y_ir: f64, x_iv: f64) -> Result<Self, KinematicsError> {
        if !(y_il - y_ir > 0.0) {
            return Err(KinematicsError::InvalidIcr { y_il, y_ir });
        }
        Ok(Self { y_il, y_ir, x_iv })
    }

    /// Standard differential drive with wheelbase `d_wb` and no slip.
    pub fn standard(d_wb: f64) -> Self {
        Self { y_il: 0.5 * d_wb, y_ir: -0.5 * d_wb, x_iv: 0.0 }
    }

    /// Effective track separation `y_il - y_ir`.
    #[inline]
    pub fn separation(&self) -> f64 {
        self.y_il - self.y_ir
    }

    pub fn is_valid(&self) -> bool {
        self.separation() > 0.0 && self.y_il.is_finite() && self.y_ir.is_finite() && self.x_iv.is_finite()
    }
}

impl Default for IcrParams {
    fn default() -> Self {
        Self::standard(0.5)
    }
}

/// Planar pose in the world frame.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct Pose2 {
    pub x: f64,
    pub y: f64,
    pub theta: f64,
}

impl Pose2 {
    pub const fn new(x: f64, y: f64, theta: f64) -> Self {
        Self { x, y, theta }
    }

    pub fn position(&self) -> [f64; 2] {
        [self.x, self.y]
    }

    pub fn distance_to(&self, p: [f64; 2]) -> f64 {
        (self.x - p[0]).hypot(self.y - p[1])
    }
}

/// Body-frame twist.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct Twist {
    pub vx: f64,
    pub vy: f64,
    pub omega: f64,
}

impl Twist {
    pub const fn new(vx: f64, vy: f64, omega: f64) -> Self {
        Self { vx, vy, omega }
    }

    /// Twist produced by commanding `(vx, omega)` on a body with the given ICRs.
    pub fn with_slip(vx: f64, omega: f64, icr: &IcrParams) -> Self {
        Self { vx, vy: -omega * icr.x_iv, omega }
    }
}

/// Pose plus the most recent twist, if known.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct RobotState {
    pub pose: Pose2,
    pub twist: Option<Twist>,
}

impl RobotState {
    pub fn at_rest(pose: Pose2) -> Self {
        Self { pose, twist: None }
    }

    pub fn step(&self, twist: Twist, dt: f64) -> RobotState {
        RobotState { pose: step(self.pose, twist, dt), twist: Some(twist) }
    }
}

/// Body twist from left/right wheel (or track) speeds.
pub fn twist_from_wheels(v_l: f64, v_r: f64, icr: &IcrParams) -> Twist {
    let omega = (v_r - v_l) / icr.separation();
    let vx = 0.5 * (v_r + v_l) - omega * 0.5 * (icr.y_il + icr.y_ir);
    Twist { vx, vy: -omega * icr.x_iv, omega }
}

/// Wheel speeds `(v_l, v_r)` that realize `(vx, omega)`. The lateral component
/// is implied by the ICRs and is not a free input.
pub fn wheels_from_twist(vx: f64, omega: f64, icr: &IcrParams) -> (f64, f64) {
    (vx + omega * icr.y_ir, vx + omega * icr.y_il)
}

/// `sin(a/2) / (a/2)` and its derivative with respect to `a`.
fn half_sinc(a: f64) -> (f64, f64) {
    if a.abs() < 1e-4 {
        let a2 = a * a;
        (1.0 - a2 / 24.0 + a2 * a2 / 1920.0, -a / 12.0 + a2 * a / 480.0)
    } else {
        let h = 0.5 * a;
        let s = h.sin() / h;
        let ds = (h.cos() * h - h.sin()) / (2.0 * h * h);
        (s, ds)
    }
}

/// Exact constant-twist integration over `dt`.
pub fn step(pose: Pose2, twist: Twist, dt: f64) -> Pose2 {
    let a = twist.omega * dt;
    let (dx, dy) = if a.abs() < ARC_EPS {
        let (s, c) = pose.theta.sin_cos();
        ((twist.vx * c - twist.vy * s) * dt, (twist.vx * s + twist.vy * c) * dt)
    } else {
        // Chord of the arc: rotate the body displacement by the mid heading.
        let (s, _) = half_sinc(a);
        let (sm, cm) = (pose.theta + 0.5 * a).sin_cos();
        let ca = dt * cm * s;
        let cb = -dt * sm * s;
        (twist.vx * ca + twist.vy * cb, -twist.vx * cb + twist.vy * ca)
    };
    Pose2 { x: pose.x + dx, y: pose.y + dy, theta: pose.theta + a }
}

/// Partial derivatives of [`step`]: `d_pose[r][c] = d out_r / d pose_c` over
/// `(x, y, theta)` and `d_twist[r][c] = d out_r / d twist_c` over `(vx, vy, omega)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StepJacobian {
    pub d_pose: [[f64; 3]; 3],
    pub d_twist: [[f64; 3]; 3],
}

pub fn step_with_jacobian(pose: Pose2, twist: Twist, dt: f64) -> (Pose2, StepJacobian) {
    let a = twist.omega * dt;
    let (s, ds) = half_sinc(a);
    let phi = pose.theta + 0.5 * a;
    let (sm, cm) = phi.sin_cos();
    let ca = dt * cm * s;
    let cb = -dt * sm * s;
    // d/d omega of the chord factors
    let dca = dt * (-sm * 0.5 * dt * s + cm * ds * dt);
    let dcb = -dt * (cm * 0.5 * dt * s + sm * ds * dt);

    let dx = twist.vx * ca + twist.vy * cb;
    let dy = -twist.vx * cb + twist.vy * ca;
    let out = Pose2 { x: pose.x + dx, y: pose.y + dy, theta: pose.theta + a };

    // d ca / d theta = cb, d cb / d theta = -ca
    let d_pose =
        [[1.0, 0.0, twist.vx * cb - twist.vy * ca], [0.0, 1.0, twist.vx * ca + twist.vy * cb], [0.0, 0.0, 1.0]];
    let d_twist =
        [[ca, cb, twist.vx * dca + twist.vy * dcb], [-cb, ca, -twist.vx * dcb + twist.vy * dca], [0.0, 0.0, dt]];
    (out, StepJacobian { d_pose, d_twist })
}

/// Partials of [`twist_from_wheels`] with respect to `(y_il, y_ir, x_iv)`,
/// laid out as `[d vx, d vy, d omega][param]`.
pub fn twist_icr_jacobian(v_l: f64, v_r: f64, icr: &IcrParams) -> [[f64; 3]; 3] {
    let d = icr.separation();
    let omega = (v_r - v_l) / d;
    let w_d = omega / d;
    [[w_d * icr.y_ir, -w_d * icr.y_il, 0.0], [icr.x_iv * w_d, -icr.x_iv * w_d, -omega], [-w_d, w_d, 0.0]]
}

/// Partials of [`twist_from_wheels`] with respect to `(v_l, v_r)`,
/// laid out as `[d vx, d vy, d omega][wheel]`.
pub fn twist_wheel_jacobian(icr: &IcrParams) -> [[f64; 2]; 3] {
    let d = icr.separation();
    let kx = 0.5 * (icr.y_il + icr.y_ir) / d;
    [[0.5 + kx, 0.5 - kx], [icr.x_iv / d, -icr.x_iv / d], [-1.0 / d, 1.0 / d]]
}

/// Wrap an angle to `(-pi, pi]`.
pub fn wrap_angle(a: f64) -> f64 {
    use std::f64::consts::PI;
    let mut r = a.rem_euclid(2.0 * PI);
    if r > PI {
        r -= 2.0 * PI;
    }
    r
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::PI;

    fn rk4(pose: Pose2, tw: Twist, dt: f64, substeps: usize) -> Pose2 {
        let f = |p: [f64; 3]| -> [f64; 3] {
            let (s, c) = p[2].sin_cos();
            [tw.vx * c - tw.vy * s, tw.vx * s + tw.vy * c, tw.omega]
        };
        let h = dt / substeps as f64;
        let mut p = [pose.x, pose.y, pose.theta];
        for _ in 0..substeps {
            let k1 = f(p);
            let k2 = f([0, 1, 2].map(|i| p[i] + 0.5 * h * k1[i]));
            let k3 = f([0, 1, 2].map(|i| p[i] + 0.5 * h * k2[i]));
            let k4 = f([0, 1, 2].map(|i| p[i] + h * k3[i]));
            for i in 0..3 {
                p[i] += h / 6.0 * (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i]);
            }
        }
        Pose2::new(p[0], p[1], p[2])
    }

    #[test]
    fn straight_wheels_give_pure_forward_twist() {
        let t = twist_from_wheels(1.0, 1.0, &IcrParams::standard(0.6));
        assert_eq!(t, Twist::new(1.0, 0.0, 0.0));
    }

    #[test]
    fn tracked_spin_has_lateral_slip() {
        let icr = IcrParams::new(0.3, -0.3, 0.2).unwrap();
        let t = twist_from_wheels(-0.3, 0.3, &icr);
        assert!((t.omega - 1.0).abs() < 1e-15);
        assert!(t.vx.abs() < 1e-15);
        assert!((t.vy + 0.2).abs() < 1e-15);
    }

    #[test]
    fn wheel_inverse() {
        let icr = IcrParams::standard(0.6);
        assert_eq!(wheels_from_twist(1.0, 0.0, &icr), (1.0, 1.0));
        let (l, r) = wheels_from_twist(0.0, 1.0, &icr);
        assert!((l + 0.3).abs() < 1e-15 && (r - 0.3).abs() < 1e-15);

        let asym = IcrParams::new(0.41, -0.27, 0.13).unwrap();
        for &(vx, w) in &[(0.7, -1.3), (-2.0, 0.4), (0.0, 3.0)] {
            let (l, r) = wheels_from_twist(vx, w, &asym);
            let t = twist_from_wheels(l, r, &asym);
            assert!((t.vx - vx).abs() < 1e-12 && (t.omega - w).abs() < 1e-12);
            assert!((t.vy + w * asym.x_iv).abs() < 1e-12);
        }
    }

    #[test]
    fn invalid_icr_rejected() {
        assert!(IcrParams::new(-0.1, 0.1, 0.0).is_err());
        assert!(IcrParams::new(0.1, 0.1, 0.0).is_err());
    }

    #[test]
    fn straight_step() {
        let p = step(Pose2::new(1.0, 2.0, PI / 2.0), Twist::new(1.0, 0.0, 0.0), 2.0);
        assert!((p.x - 1.0).abs() < 1e-12 && (p.y - 4.0).abs() < 1e-12);
    }

    #[test]
    fn slip_circle_closes() {
        let start = Pose2::new(0.4, -0.7, 0.3);
        let p = step(start, Twist::new(0.0, -0.2, 1.0), 2.0 * PI);
        assert!((p.x - start.x).abs() < 1e-12 && (p.y - start.y).abs() < 1e-12);
        assert!((p.theta - start.theta - 2.0 * PI).abs() < 1e-12);
    }

    #[test]
    fn exact_step_matches_fine_rk4() {
        let cases = [
            (Pose2::new(0.0, 0.0, 0.0), Twist::new(1.0, 0.0, 0.5)),
            (Pose2::new(1.0, -2.0, 2.0), Twist::new(-0.7, 0.3, -2.5)),
            (Pose2::new(-3.0, 0.5, -1.0), Twist::new(2.0, -0.4, 4.0)),
        ];
        for (p, tw) in cases {
            let exact = step(p, tw, 0.5);
            let fine = rk4(p, tw, 0.5, 1000);
            assert!((exact.x - fine.x).abs() < 1e-8 && (exact.y - fine.y).abs() < 1e-8);
        }
    }

    #[test]
    fn step_is_time_reversible() {
        let p = Pose2::new(0.3, 0.1, 0.7);
        let tw = Twist::new(0.9, -0.15, 1.7);
        let q = step(p, tw, 0.37);
        let back = step(q, Twist::new(-tw.vx, -tw.vy, -tw.omega), 0.37);
        assert!((back.x - p.x).abs() < 1e-12);
        assert!((back.y - p.y).abs() < 1e-12);
        assert!((back.theta - p.theta).abs() < 1e-12);
    }

    #[test]
    fn step_jacobian_matches_finite_differences() {
        let h = 1e-6;
        for (p, tw) in [
            (Pose2::new(0.2, 0.3, 0.9), Twist::new(1.1, -0.2, 0.8)),
            (Pose2::new(0.0, 0.0, -2.0), Twist::new(-0.5, 0.1, 1e-6)),
            (Pose2::new(1.0, 1.0, 3.0), Twist::new(0.3, 0.05, -6.0)),
        ] {
            let (_, jac) = step_with_jacobian(p, tw, 0.1);
            let f = |p: Pose2, t: Twist| {
                let o = step(p, t, 0.1);
                [o.x, o.y, o.theta]
            };
            for c in 0..3 {
                let (mut pp, mut pm) = (p, p);
                match c {
                    0 => {
                        pp.x += h;
                        pm.x -= h;
                    }
                    1 => {
                        pp.y += h;
                        pm.y -= h;
                    }
                    _ => {
                        pp.theta += h;
                        pm.theta -= h;
                    }
                }
                let (a, b) = (f(pp, tw), f(pm, tw));
                for r in 0..3 {
                    let fd = (a[r] - b[r]) / (2.0 * h);
                    assert!((fd - jac.d_pose[r][c]).abs() < 1e-7, "pose r{r} c{c}");
                }
                let (mut tp, mut tm) = (tw, tw);
                match c {
                    0 => {
                        tp.vx += h;
                        tm.vx -= h;
                    }
                    1 => {
                        tp.vy += h;
                        tm.vy -= h;
                    }
                    _ => {
                        tp.omega += h;
                        tm.omega -= h;
                    }
                }
                let (a, b) = (f(p, tp), f(p, tm));
                for r in 0..3 {
                    let fd = (a[r] - b[r]) / (2.0 * h);
                    assert!((fd - jac.d_twist[r][c]).abs() < 1e-7, "twist r{r} c{c}");
                }
            }
        }
    }

    #[test]
    fn icr_jacobians_match_finite_differences() {
        let icr = IcrParams::new(0.32, -0.27, 0.18).unwrap();
        let (vl, vr) = (0.4, 1.3);
        let jac = twist_icr_jacobian(vl, vr, &icr);
        let h = 1e-7;
        for c in 0..3 {
            let mut p = icr;
            let mut m = icr;
            match c {
                0 => {
                    p.y_il += h;
                    m.y_il -= h;
                }
                1 => {
                    p.y_ir += h;
                    m.y_ir -= h;
                }
                _ => {
                    p.x_iv += h;
                    m.x_iv -= h;
                }
            }
            let (a, b) = (twist_from_wheels(vl, vr, &p), twist_from_wheels(vl, vr, &m));
            let fd = [(a.vx - b.vx), (a.vy - b.vy), (a.omega - b.omega)].map(|d| d / (2.0 * h));
            for r in 0..3 {
                assert!((fd[r] - jac[r][c]).abs() < 1e-6);
            }
        }
        let wj = twist_wheel_jacobian(&icr);
        let base = twist_from_wheels(vl, vr, &icr);
        let dl = twist_from_wheels(vl + 1.0, vr, &icr);
        assert!((dl.vx - base.vx - wj[0][0]).abs() < 1e-12);
        assert!((dl.vy - base.vy - wj[1][0]).abs() < 1e-12);
        assert!((dl.omega - base.omega - wj[2][0]).abs() < 1e-12);
    }

    #[test]
    fn wrap() {
        assert!((wrap_angle(3.0 * PI) - PI).abs() < 1e-12);
        assert!((wrap_angle(-PI) - PI).abs() < 1e-12);
        assert!(wrap_angle(0.1).abs() - 0.1 < 1e-15);
    }
}
