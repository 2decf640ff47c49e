//! Extended Kalman filter over `[x, y, θ, y_Il, y_Ir, x_Iv]` driven by wheel
//! speeds and corrected by pose observations.

use std::io::Write;

use nalgebra::{SMatrix, SVector};
use serde::{Deserialize, Serialize};

use crate::kinematics::{step_with_jacobian, twist_from_wheels, twist_icr_jacobian, wrap_angle, IcrParams, Pose2};

pub type Vec6 = SVector<f64, 6>;
pub type Mat6 = SMatrix<f64, 6, 6>;

/// 99% quantile of χ² with 3 degrees of freedom.
pub const CHI2_GATE_3DOF: f64 = 11.345;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EkfConfig {
    /// Process noise spectral density per state, per second.
    pub process_noise: [f64; 6],
    /// Observation noise variances for `[x, y, θ]`.
    pub observation_noise: [f64; 3],
    /// Mahalanobis gate on the innovation.
    pub gate: f64,
    /// Lower bound on `y_Il - y_Ir`, meters.
    pub min_separation: f64,
}

impl Default for EkfConfig {
    fn default() -> Self {
        EkfConfig {
            process_noise: [1e-4, 1e-4, 1e-4, 1e-6, 1e-6, 1e-6],
            observation_noise: [1e-4; 3],
            gate: CHI2_GATE_3DOF,
            min_separation: 0.02,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum UpdateOutcome {
    Accepted { mahalanobis: f64 },
    Rejected { mahalanobis: f64 },
}

/// Mean propagation and its Jacobian with respect to all six states.
pub fn propagate(mean: &Vec6, v_l: f64, v_r: f64, dt: f64) -> (Vec6, Mat6) {
    let icr = IcrParams { y_il: mean[3], y_ir: mean[4], x_iv: mean[5] };
    let pose = Pose2::new(mean[0], mean[1], mean[2]);
    let twist = twist_from_wheels(v_l, v_r, &icr);
    let (next, jac) = step_with_jacobian(pose, twist, dt);
    let dtw = twist_icr_jacobian(v_l, v_r, &icr);
    let mut f = Mat6::identity();
    for r in 0..3 {
        for c in 0..3 {
            f[(r, c)] = jac.d_pose[r][c];
            f[(r, 3 + c)] = (0..3).map(|k| jac.d_twist[r][k] * dtw[k][c]).sum();
        }
    }
    let out = Vec6::new(next.x, next.y, next.theta, mean[3], mean[4], mean[5]);
    (out, f)
}

#[derive(Debug, Clone, PartialEq)]
pub struct IcrEstimator {
    mean: Vec6,
    cov: Mat6,
    config: EkfConfig,
    accepted: usize,
    rejected: usize,
}

impl IcrEstimator {
    /// Start from `pose` and `icr` with per-state prior standard deviations.
    pub fn new(pose: Pose2, icr: IcrParams, prior_std: [f64; 6], config: EkfConfig) -> Self {
        let mean = Vec6::new(pose.x, pose.y, pose.theta, icr.y_il, icr.y_ir, icr.x_iv);
        let cov = Mat6::from_diagonal(&Vec6::from_iterator(prior_std.iter().map(|s| s * s)));
        IcrEstimator { mean, cov, config, accepted: 0, rejected: 0 }
    }

    pub fn mean(&self) -> &Vec6 {
        &self.mean
    }

    pub fn covariance(&self) -> &Mat6 {
        &self.cov
    }

    pub fn pose(&self) -> Pose2 {
        Pose2::new(self.mean[0], self.mean[1], self.mean[2])
    }

    pub fn icr(&self) -> IcrParams {
        IcrParams { y_il: self.mean[3], y_ir: self.mean[4], x_iv: self.mean[5] }
    }

    pub fn accepted(&self) -> usize {
        self.accepted
    }

    pub fn rejected(&self) -> usize {
        self.rejected
    }

    pub fn predict(&mut self, v_l: f64, v_r: f64, dt: f64) {
        debug_assert!(dt > 0.0);
        let (mean, f) = propagate(&self.mean, v_l, v_r, dt);
        let q = Mat6::from_diagonal(&Vec6::from_iterator(self.config.process_noise.iter().map(|v| v * dt)));
        self.mean = mean;
        self.cov = f * self.cov * f.transpose() + q;
        self.symmetrize();
    }

    /// Pose correction with a Joseph-form covariance update. Observations
    /// beyond the gate leave the state untouched.
    pub fn update(&mut self, obs: Pose2) -> UpdateOutcome {
        let nu =
            SVector::<f64, 3>::new(obs.x - self.mean[0], obs.y - self.mean[1], wrap_angle(obs.theta - self.mean[2]));
        let r = SMatrix::<f64, 3, 3>::from_diagonal(&SVector::<f64, 3>::from(self.config.observation_noise));
        let p_ht = self.cov.fixed_columns::<3>(0).into_owned();
        let s = self.cov.fixed_view::<3, 3>(0, 0).into_owned() + r;
        let Some(s_inv) = s.try_inverse() else {
            self.rejected += 1;
            return UpdateOutcome::Rejected { mahalanobis: f64::INFINITY };
        };
        let d2 = (nu.transpose() * s_inv * nu)[(0, 0)];
        if !(d2 <= self.config.gate) {
            self.rejected += 1;
            return UpdateOutcome::Rejected { mahalanobis: d2 };
        }
        let k = p_ht * s_inv;
        self.mean += k * nu;
        let mut ikh = Mat6::identity();
        for rr in 0..6 {
            for c in 0..3 {
                ikh[(rr, c)] -= k[(rr, c)];
            }
        }
        self.cov = ikh * self.cov * ikh.transpose() + k * r * k.transpose();
        self.symmetrize();
        self.clamp_separation();
        self.accepted += 1;
        UpdateOutcome::Accepted { mahalanobis: d2 }
    }

    fn symmetrize(&mut self) {
        self.cov = 0.5 * (self.cov + self.cov.transpose());
    }

    fn clamp_separation(&mut self) {
        let gap = self.mean[3] - self.mean[4];
        if gap < self.config.min_separation {
            let mid = 0.5 * (self.mean[3] + self.mean[4]);
            self.mean[3] = mid + 0.5 * self.config.min_separation;
            self.mean[4] = mid - 0.5 * self.config.min_separation;
        }
    }

    pub fn log_row(&self, t: f64, rejected: bool) -> EstimatorLogRow {
        EstimatorLogRow { t, mean: self.mean.into(), cov_diag: self.cov.diagonal().into(), rejected }
    }
}

/// One row of the estimator log.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EstimatorLogRow {
    pub t: f64,
    pub mean: [f64; 6],
    pub cov_diag: [f64; 6],
    pub rejected: bool,
}

pub const ESTIMATOR_LOG_HEADER: [&str; 14] = [
    "t",
    "x",
    "y",
    "theta",
    "y_il",
    "y_ir",
    "x_iv",
    "var_x",
    "var_y",
    "var_theta",
    "var_y_il",
    "var_y_ir",
    "var_x_iv",
    "rejected",
];

pub fn write_estimator_log<W: Write>(rows: &[EstimatorLogRow], out: W) -> csv::Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(ESTIMATOR_LOG_HEADER)?;
    for r in rows {
        let mut rec: Vec<String> = Vec::with_capacity(14);
        rec.push(r.t.to_string());
        rec.extend(r.mean.iter().chain(&r.cov_diag).map(|v| v.to_string()));
        rec.push(u8::from(r.rejected).to_string());
        w.write_record(&rec)?;
    }
    w.flush()?;
    Ok(())
}

/// Wheel-speed excitation tracing a figure eight: constant forward speed,
/// sinusoidal yaw rate.
pub fn figure_eight_wheels(t: f64, speed: f64, yaw_amplitude: f64, period: f64, icr: &IcrParams) -> (f64, f64) {
    let omega = yaw_amplitude * (2.0 * std::f64::consts::PI * t / period).sin();
    crate::kinematics::wheels_from_twist(speed, omega, icr)
}
