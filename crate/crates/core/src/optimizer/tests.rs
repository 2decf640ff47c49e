use super::*;
use crate::global_path::{seed_trajectory, GridPath};
use crate::grid_world::{build_esdf, generate_world, OccupancyGrid, WorldKind};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn straight_problem(cfg: &ProblemConfig, length: f64) -> (Problem<'_>, InitialGuess) {
    let path = GridPath::from_points(vec![[0.0, 0.0], [length, 0.0]]);
    let guess = seed_trajectory(&path, 0.0, Some(0.0), &cfg.seed).unwrap();
    let problem = Problem {
        config: cfg,
        start: Pose2::new(0.0, 0.0, 0.0),
        icr: IcrParams::default(),
        bc: BoundaryConditions::rest(0.0, guess.theta_f),
        goal: [length, 0.0],
        esdf: None,
    };
    (problem, guess)
}

fn random_decision(rng: &mut ChaCha8Rng, m: usize) -> Vec<f64> {
    let mut x = Vec::with_capacity(DecisionVector::len_for(m));
    for i in 0..m - 1 {
        x.push(rng.random_range(-0.6..0.6) + 0.1 * i as f64);
    }
    for i in 0..m - 1 {
        x.push((i + 1) as f64 * rng.random_range(0.6..1.2));
    }
    for _ in 0..m {
        x.push(rng.random_range(-0.5..0.5));
    }
    x.push(m as f64 * rng.random_range(0.7..1.1));
    x
}

/// Max absolute gradient error relative to the largest FD component.
fn fd_error(problem: &Problem, stage: &Stage, x: &[f64]) -> f64 {
    let mut g = vec![0.0; x.len()];
    objective(problem, stage, x, &mut g).unwrap();
    let mut scratch = vec![0.0; x.len()];
    let mut fd = vec![0.0; x.len()];
    for k in 0..x.len() {
        let h = 1e-6 * x[k].abs().max(1.0);
        let mut xp = x.to_vec();
        xp[k] += h;
        let fp = objective(problem, stage, &xp, &mut scratch).unwrap().value;
        xp[k] -= 2.0 * h;
        let fm = objective(problem, stage, &xp, &mut scratch).unwrap().value;
        fd[k] = (fp - fm) / (2.0 * h);
    }
    let scale = fd.iter().fold(1.0f64, |m, v| m.max(v.abs()));
    g.iter().zip(&fd).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max) / scale
}

#[test]
fn decision_vector_round_trip() {
    let wps = vec![[0.3, 1.0], [0.5, 2.0]];
    let durs = vec![0.4, 1.0, 2.5];
    let dv = DecisionVector::pack(&wps, &durs, 3.2);
    assert_eq!(dv.x.len(), 8);
    let u = dv.unpack();
    assert_eq!(u.waypoints, wps);
    assert_eq!(u.s_f, 3.2);
    for (a, b) in u.durations.iter().zip(&durs) {
        assert!((a - b).abs() < 1e-12 * b);
    }
    assert_eq!(DecisionVector::segments_for(8), Some(3));
    assert_eq!(DecisionVector::segments_for(7), None);
}

#[test]
fn gradient_matches_finite_differences() {
    let mut cfg = ProblemConfig::default();
    cfg.limits.contour = Limits::rectangle_contour(0.6, 0.4);
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    for kind in [WorldKind::Sparse, WorldKind::Dense, WorldKind::Spiral] {
        let world = generate_world(&kind, 3).unwrap();
        let esdf = build_esdf(world.grid);
        let start = world.start_hint.unwrap_or([2.0, 2.0]);
        for trial in 0..6 {
            let m = rng.random_range(1..6);
            let x = random_decision(&mut rng, m);
            let theta0 = rng.random_range(-1.0..1.0);
            let mut bc = BoundaryConditions::rest(theta0, theta0 + rng.random_range(-1.0..1.0));
            bc.s0 = [0.0, rng.random_range(-0.5..1.0), rng.random_range(-0.5..0.5)];
            bc.theta0[1] = rng.random_range(-0.5..0.5);
            let problem = Problem {
                config: &cfg,
                start: Pose2::new(start[0], start[1], theta0),
                icr: IcrParams::new(0.3, -0.3, rng.random_range(-0.1..0.1)).unwrap(),
                bc,
                goal: [start[0] + 3.0, start[1] + 1.0],
                esdf: Some(&esdf),
            };
            let anchors: Vec<[f64; 2]> = (0..m).map(|i| [start[0] + i as f64, start[1] + 0.2]).collect();
            let stages = [
                Stage::Alm { lambda: [rng.random_range(-3.0..3.0), rng.random_range(-3.0..3.0)], rho: 7.0 },
                Stage::Preprocess { anchors: &anchors },
            ];
            for stage in &stages {
                let err = fd_error(&problem, stage, &x);
                assert!(err < 1e-5, "{kind:?} trial {trial} m {m}: relative error {err:e}");
            }
        }
    }
}

#[test]
fn rest_problem_has_zero_effort() {
    let cfg = ProblemConfig::default();
    let problem = Problem {
        config: &cfg,
        start: Pose2::new(1.0, 1.0, 0.5),
        icr: IcrParams::default(),
        bc: BoundaryConditions::rest(0.5, 0.5),
        goal: [1.0, 1.0],
        esdf: None,
    };
    let guess =
        InitialGuess { waypoints: vec![], durations: vec![0.8], s_f: 0.0, anchors: vec![[1.0, 1.0]], theta_f: 0.5 };
    let mut g = vec![0.0; 2];
    let e =
        objective(&problem, &Stage::Alm { lambda: [0.0; 2], rho: 1.0 }, &DecisionVector::from_guess(&guess).x, &mut g)
            .unwrap();
    assert!(e.effort.abs() < 1e-20 && e.residual_norm() < 1e-15);
    let r = alm_solve(&problem, &guess, false).unwrap();
    assert_eq!(r.status, SolveStatus::Converged);
    assert!(r.effort < 1e-12);
}

#[test]
fn straight_line_converges() {
    let cfg = ProblemConfig::default();
    let (problem, guess) = straight_problem(&cfg, 5.0);
    let pre = preprocess(&problem, &guess).unwrap();
    let r = alm_solve(&problem, &pre, false).unwrap();
    assert_eq!(r.status, SolveStatus::Converged, "{r:?}");
    assert!(r.residual < 0.01);
    assert!(r.max_violation() <= 1e-3);
    let rho: Vec<f64> = r.rounds.iter().map(|k| k.rho).collect();
    assert!(rho.windows(2).all(|w| w[1] >= w[0]) && rho.iter().all(|&p| p <= cfg.solver.rho_max));
}

#[test]
fn time_weight_trades_duration() {
    let mut totals = Vec::new();
    for eps in [4.0, 32.0, 256.0] {
        let cfg = ProblemConfig { time_weight: eps, ..Default::default() };
        let (problem, guess) = straight_problem(&cfg, 4.0);
        let r = alm_solve(&problem, &guess, false).unwrap();
        assert!(r.residual < 0.01);
        totals.push(r.trajectory.total_duration());
    }
    assert!(totals.windows(2).all(|w| w[1] < w[0]), "{totals:?}");
}

#[test]
fn phr_update_matches_hand_iteration() {
    let params = SolverParams { rho0: 2.0, rho_growth: 0.5, rho_max: 5.0, ..Default::default() };
    let mut s = AlmState::new(&params, false);
    let cs = [[0.3, -0.1], [0.2, 0.05], [-0.1, 0.0], [0.01, 0.02]];
    let (mut lam, mut rho) = ([0.0f64; 2], 2.0f64);
    for c in cs {
        s.update(c);
        lam = [lam[0] + rho * c[0], lam[1] + rho * c[1]];
        rho = (1.5 * rho).min(5.0);
        assert_eq!(s.lambda, lam);
        assert_eq!(s.rho, rho);
    }
    assert_eq!(s.rho, 5.0);
    assert_eq!(AlmState::new(&params, true).e_max, 0.1);
}

#[test]
fn goal_inside_obstacle_is_not_success() {
    let mut grid = OccupancyGrid::new(0.1, [0.0, 0.0], 100, 60).unwrap();
    grid.fill_rect([6.0, 2.0], [8.0, 4.0], true);
    let esdf = build_esdf(grid);
    let cfg = ProblemConfig::default();
    let path = GridPath::from_points(vec![[1.0, 3.0], [7.0, 3.0]]);
    let guess = seed_trajectory(&path, 0.0, None, &cfg.seed).unwrap();
    let problem = Problem {
        config: &cfg,
        start: Pose2::new(1.0, 3.0, 0.0),
        icr: IcrParams::default(),
        bc: BoundaryConditions::rest(0.0, 0.0),
        goal: [7.0, 3.0],
        esdf: Some(&esdf),
    };
    let r = alm_solve(&problem, &guess, false).unwrap();
    assert_ne!(r.status, SolveStatus::Converged);
}

#[test]
fn preprocess_fixed_point_and_anchor_fit() {
    let cfg = ProblemConfig::default();
    // U-shaped polyline
    let path = GridPath::from_points(vec![[0.0, 0.0], [4.0, 0.0], [4.0, 3.0], [0.0, 3.0]]);
    let guess = seed_trajectory(&path, 0.0, None, &cfg.seed).unwrap();
    let problem = Problem {
        config: &cfg,
        start: Pose2::new(0.0, 0.0, 0.0),
        icr: IcrParams::default(),
        bc: BoundaryConditions::rest(0.0, guess.theta_f),
        goal: [0.0, 3.0],
        esdf: None,
    };
    let pre = preprocess(&problem, &guess).unwrap();
    let x = DecisionVector::from_guess(&pre);
    let mut g = vec![0.0; x.x.len()];
    let e = objective(&problem, &Stage::Preprocess { anchors: &pre.anchors }, &x.x, &mut g).unwrap();
    let cache = e.trajectory.integrate(cfg.intervals);
    for (i, a) in pre.anchors.iter().enumerate() {
        let p = cache.segment_end(i);
        assert!((p[0] - a[0]).hypot(p[1] - a[1]) < 0.5, "segment {i}: {p:?} vs {a:?}");
    }
    let again = preprocess(&problem, &pre).unwrap();
    let drift = again
        .waypoints
        .iter()
        .zip(&pre.waypoints)
        .map(|(a, b)| (a[0] - b[0]).abs() + (a[1] - b[1]).abs())
        .fold(0.0, f64::max);
    assert!(drift < 0.05, "drift {drift}");
}
