use super::{MsTrajectory, TrajectoryError};

// 5-point Gauss-Legendre nodes and weights on [-1, 1].
const GL_NODES: [f64; 5] =
    [0.0, -0.538_469_310_105_683_1, 0.538_469_310_105_683_1, -0.906_179_845_938_664, 0.906_179_845_938_664];
const GL_WEIGHTS: [f64; 5] = [
    0.568_888_888_888_888_9,
    0.478_628_670_499_366_5,
    0.478_628_670_499_366_5,
    0.236_926_885_056_189_1,
    0.236_926_885_056_189_1,
];

/// Worst-case composite Simpson error: `interval^5 / (180 n^4) * f4_max`.
pub fn simpson_error_bound(f4_max: f64, interval: f64, n: usize) -> f64 {
    interval.powi(5) / (180.0 * (n as f64).powi(4)) * f4_max
}

fn gauss_segment(traj: &MsTrajectory, i: usize, a: f64, b: f64, panels: usize) -> [f64; 2] {
    let mut acc = [0.0; 2];
    let h = (b - a) / panels as f64;
    for p in 0..panels {
        let mid = a + (p as f64 + 0.5) * h;
        for (x, w) in GL_NODES.iter().zip(GL_WEIGHTS.iter()) {
            let f = traj.integrand(i, mid + 0.5 * h * x);
            acc[0] += 0.5 * h * w * f[0];
            acc[1] += 0.5 * h * w * f[1];
        }
    }
    acc
}

/// High-accuracy final position using `panels` Gauss-Legendre panels per
/// segment. Independent of the Simpson cache; used as an accuracy reference.
pub fn reference_final_position(traj: &MsTrajectory, panels: usize) -> [f64; 2] {
    let mut p = traj.start_pose().position();
    for (i, &t) in traj.durations().iter().enumerate() {
        let d = gauss_segment(traj, i, 0.0, t, panels);
        p[0] += d[0];
        p[1] += d[1];
    }
    p
}

/// High-accuracy position at global time `t`.
pub fn reference_position_at(traj: &MsTrajectory, t: f64, panels: usize) -> Result<[f64; 2], TrajectoryError> {
    let (seg, tau) = traj.locate(t)?;
    let mut p = traj.start_pose().position();
    for i in 0..seg {
        let d = gauss_segment(traj, i, 0.0, traj.durations()[i], panels);
        p[0] += d[0];
        p[1] += d[1];
    }
    if tau > 0.0 {
        let d = gauss_segment(traj, seg, 0.0, tau, panels);
        p[0] += d[0];
        p[1] += d[1];
    }
    Ok(p)
}

/// Displacement between global times `t0 <= t1`, Gauss-Legendre with panels
/// no wider than `max_panel` seconds, split at segment junctions.
pub fn integrate_span(traj: &MsTrajectory, t0: f64, t1: f64, max_panel: f64) -> Result<[f64; 2], TrajectoryError> {
    let (mut seg, mut tau) = traj.locate(t0)?;
    let (end_seg, end_tau) = traj.locate(t1)?;
    let mut acc = [0.0; 2];
    loop {
        let b = if seg == end_seg { end_tau } else { traj.durations()[seg] };
        if b > tau {
            let panels = ((b - tau) / max_panel).ceil().max(1.0) as usize;
            let d = gauss_segment(traj, seg, tau, b, panels);
            acc[0] += d[0];
            acc[1] += d[1];
        }
        if seg >= end_seg {
            return Ok(acc);
        }
        seg += 1;
        tau = 0.0;
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::kinematics::{IcrParams, Pose2};
    use crate::ms_trajectory::tests::random_traj;
    use crate::ms_trajectory::NCOEF;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn bound_formula() {
        assert_eq!(simpson_error_bound(0.0, 0.8, 10), 0.0);
        let b = simpson_error_bound(100.0, 0.8, 10);
        assert!((b - 0.8f64.powi(5) * 100.0 / 1.8e6).abs() < 1e-18);
        assert!((b - 1.82e-5).abs() < 1e-7);
        let ratio = simpson_error_bound(3.0, 1.3, 5) / simpson_error_bound(3.0, 1.3, 10);
        assert!((ratio - 16.0).abs() < 1e-12);
    }

    #[test]
    fn reference_quarter_circle_is_exact() {
        let mut th = [0.0; NCOEF];
        th[1] = 1.0;
        let mut s = [0.0; NCOEF];
        s[1] = 1.0;
        let tr =
            MsTrajectory::new(Pose2::default(), IcrParams::default(), vec![[th, s]], vec![std::f64::consts::FRAC_PI_2])
                .unwrap();
        let p = reference_final_position(&tr, 100);
        assert!((p[0] - 1.0).abs() < 1e-14 && (p[1] - 1.0).abs() < 1e-14);
    }

    #[test]
    fn simpson_agrees_with_reference() {
        let mut rng = ChaCha8Rng::seed_from_u64(10);
        for _ in 0..20 {
            // mild enough for n = 10 to sit in the asymptotic regime
            let raw = random_traj(&mut rng, 4, 0.2);
            let co = raw.coeffs().iter().map(|c| c.map(|ch| ch.map(|v| 0.3 * v))).collect();
            let tr = MsTrajectory::new(raw.start_pose(), raw.icr(), co, raw.durations().to_vec()).unwrap();
            let a = tr.integrate(10).final_position();
            let b = reference_final_position(&tr, 1000);
            assert!((a[0] - b[0]).hypot(a[1] - b[1]) < 1e-3);
            let c = tr.integrate(20).final_position();
            let (ea, ec) = ((a[0] - b[0]).hypot(a[1] - b[1]), (c[0] - b[0]).hypot(c[1] - b[1]));
            assert!(ec < ea / 8.0 || ec < 1e-13);
        }
    }

    #[test]
    fn reference_position_at_matches_final() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let tr = random_traj(&mut rng, 3, 0.1);
        let a = reference_position_at(&tr, tr.total_duration(), 50).unwrap();
        let b = reference_final_position(&tr, 50);
        assert!((a[0] - b[0]).abs() < 1e-12 && (a[1] - b[1]).abs() < 1e-12);
    }
}
