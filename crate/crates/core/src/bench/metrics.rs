use serde::{Deserialize, Serialize};

use crate::ms_trajectory::{MsTrajectory, ARC, THETA};

/// Per-run quality metrics. Means are `(1/T) ∫ |q| dt`, integrated with
/// composite Simpson over `n` intervals per segment.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct RunMetrics {
    /// Computation time, s.
    pub ct: f64,
    /// Travelled length `∫ |ṡ| dt`, m.
    pub tl: f64,
    /// Duration, s.
    pub td: f64,
    /// Mean speed `TL / TD`, m/s.
    pub mv: f64,
    pub success: bool,
    /// Mean `|s̈|`, m/s².
    pub mla: f64,
    /// Mean `|s⃛|`, m/s³.
    pub mlj: f64,
    /// Mean `|θ̈|`, rad/s².
    pub mya: f64,
    /// Mean `|θ⃛|`, rad/s³.
    pub myj: f64,
    /// Final-position error, m.
    pub final_error: f64,
}

/// `∫ |d^order q_channel / dt^order| dt` over the whole trajectory.
fn abs_integral(traj: &MsTrajectory, channel: usize, order: usize, n: usize) -> f64 {
    let n = n + n % 2;
    let mut total = 0.0;
    for (i, &t) in traj.durations().iter().enumerate() {
        let h = t / n as f64;
        let mut acc = 0.0;
        for j in 0..=n {
            let st = traj.eval_local(i, j as f64 * h, order);
            let q = if channel == THETA { st.theta[order] } else { st.s[order] };
            let w = if j == 0 || j == n {
                1.0
            } else if j % 2 == 1 {
                4.0
            } else {
                2.0
            };
            acc += w * q.abs();
        }
        total += acc * h / 3.0;
    }
    total
}

impl RunMetrics {
    pub fn compute(traj: &MsTrajectory, n: usize, ct: f64, success: bool, final_error: f64) -> Self {
        let td = traj.total_duration();
        let mean = |channel, order| if td > 0.0 { abs_integral(traj, channel, order, n) / td } else { 0.0 };
        let tl = abs_integral(traj, ARC, 1, n);
        RunMetrics {
            ct,
            tl,
            td,
            mv: if td > 0.0 { tl / td } else { 0.0 },
            success,
            mla: mean(ARC, 2),
            mlj: mean(ARC, 3),
            mya: mean(THETA, 2),
            myj: mean(THETA, 3),
            final_error,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::kinematics::{IcrParams, Pose2};

    fn poly(theta: [f64; 6], s: [f64; 6], t: f64) -> MsTrajectory {
        MsTrajectory::new(Pose2::default(), IcrParams::default(), vec![[theta, s]], vec![t]).unwrap()
    }

    #[test]
    fn constant_velocity_line_has_zero_higher_means() {
        let m = RunMetrics::compute(
            &poly([0.3, 0.0, 0.0, 0.0, 0.0, 0.0], [0.0, 2.0, 0.0, 0.0, 0.0, 0.0], 3.0),
            10,
            0.0,
            true,
            0.0,
        );
        assert!((m.tl - 6.0).abs() < 1e-12 && (m.mv - 2.0).abs() < 1e-12);
        assert_eq!((m.mla, m.mlj, m.mya, m.myj), (0.0, 0.0, 0.0, 0.0));
    }

    #[test]
    fn constant_acceleration_and_yaw_jerk() {
        let m = RunMetrics::compute(
            &poly([0.0, 0.0, 0.0, 0.5, 0.0, 0.0], [0.0, 0.0, 1.5, 0.0, 0.0, 0.0], 2.0),
            10,
            0.0,
            true,
            0.0,
        );
        assert!((m.mla - 3.0).abs() < 1e-12);
        assert!(m.mlj.abs() < 1e-12);
        assert!((m.myj - 3.0).abs() < 1e-12);
        // θ̈ = 3t on [0, 2] has mean 3
        assert!((m.mya - 3.0).abs() < 1e-12);
    }

    #[test]
    fn reversing_counts_absolute_length() {
        // ṡ = 1 - t on [0, 2]: forward 0.5 m then back 0.5 m
        let m = RunMetrics::compute(&poly([0.0; 6], [0.0, 1.0, -0.5, 0.0, 0.0, 0.0], 2.0), 200, 0.0, true, 0.0);
        assert!((m.tl - 1.0).abs() < 1e-4, "{}", m.tl);
    }
}
