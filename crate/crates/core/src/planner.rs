//! Front-to-back planning: grid search, seeding, preprocessing, and the
//! constrained solve, with per-stage wall-clock timings.

use std::time::Instant;

use rand::Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::global_path::{jps_search, seed_trajectory, GridPath, InitialGuess, PathError};
use crate::grid_world::{EsdfMap, OccupancyGrid};
use crate::kinematics::{IcrParams, Pose2};
use crate::minco::BoundaryConditions;
use crate::optimizer::{
    alm_solve_observed, preprocess_observed, IterationRecord, Problem, ProblemConfig, SolveError, SolveResult,
};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum PlanError {
    #[error(transparent)]
    Path(#[from] PathError),
    #[error(transparent)]
    Solve(#[from] SolveError),
}

/// Pose plus the heading and arc-length rates the plan must start from.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize)]
pub struct StartState {
    pub pose: Pose2,
    /// `(θ̇, θ̈)`.
    pub theta_rates: [f64; 2],
    /// `(ṡ, s̈)`.
    pub s_rates: [f64; 2],
}

impl StartState {
    pub fn at_rest(pose: Pose2) -> Self {
        StartState { pose, ..Default::default() }
    }
}

#[derive(Debug, Clone, Copy)]
pub struct PlanRequest<'a> {
    pub esdf: &'a EsdfMap,
    pub config: &'a ProblemConfig,
    pub icr: IcrParams,
    pub start: StartState,
    pub goal: [f64; 2],
    pub goal_heading: Option<f64>,
    /// Use the looser final-position tolerance of a truncated replan.
    pub truncated: bool,
}

/// Wall-clock time per pipeline stage, seconds.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct StageTimings {
    pub search: f64,
    pub seed: f64,
    pub preprocess: f64,
    pub optimize: f64,
}

impl StageTimings {
    pub fn total(&self) -> f64 {
        self.search + self.seed + self.preprocess + self.optimize
    }
}

#[derive(Debug, Clone)]
pub struct Plan {
    pub path: GridPath,
    pub seed: InitialGuess,
    pub preprocessed: InitialGuess,
    pub result: SolveResult,
    pub timings: StageTimings,
}

/// Occupancy where every cell closer than `clearance` to an obstacle is blocked.
pub fn inflate(esdf: &EsdfMap, clearance: f64) -> OccupancyGrid {
    let mut grid = esdf.grid().clone();
    for iy in 0..grid.height() {
        for ix in 0..grid.width() {
            if esdf.cell_distance(ix, iy) < clearance {
                grid.set(ix, iy, true);
            }
        }
    }
    grid
}

/// Grid search with clearance `d_s + margin`, then `d_s`, then none. A
/// level is skipped when an endpoint lies inside its inflation or no path
/// exists at that clearance.
pub fn search(esdf: &EsdfMap, d_s: f64, margin: f64, start: [f64; 2], goal: [f64; 2]) -> Result<GridPath, PathError> {
    for clearance in [d_s + margin, d_s] {
        if clearance <= 0.0 {
            continue;
        }
        match jps_search(&inflate(esdf, clearance), start, goal) {
            Ok(p) => return Ok(p),
            Err(PathError::InvalidEndpoint { .. }) | Err(PathError::NoPath) => {}
            Err(e) => return Err(e),
        }
    }
    jps_search(esdf.grid(), start, goal)
}

pub fn boundary_conditions(start: &StartState, theta_f: f64) -> BoundaryConditions {
    BoundaryConditions {
        theta0: [start.pose.theta, start.theta_rates[0], start.theta_rates[1]],
        s0: [0.0, start.s_rates[0], start.s_rates[1]],
        theta_f: [theta_f, 0.0, 0.0],
        s_f_rates: [0.0, 0.0],
    }
}

pub fn plan(req: &PlanRequest) -> Result<Plan, PlanError> {
    plan_observed(req, &mut |_| {})
}

/// [`plan`] with an iteration trace callback.
pub fn plan_observed(req: &PlanRequest, observe: &mut dyn FnMut(&IterationRecord)) -> Result<Plan, PlanError> {
    let cfg = req.config;
    let t = Instant::now();
    let path = search(req.esdf, cfg.limits.d_s, cfg.seed.search_margin, req.start.pose.position(), req.goal)?;
    let elapsed = t.elapsed().as_secs_f64();
    let mut plan = plan_along(req, path, observe)?;
    plan.timings.search = elapsed;
    Ok(plan)
}

/// Seed, preprocess and solve along a given reference path. The path must
/// start at the request's start position; its end replaces `req.goal`.
pub fn plan_along(
    req: &PlanRequest,
    path: GridPath,
    observe: &mut dyn FnMut(&IterationRecord),
) -> Result<Plan, PlanError> {
    let cfg = req.config;
    let mut timings = StageTimings::default();
    let goal = *path.points.last().ok_or(PathError::TooShort(0))?;
    let t = Instant::now();
    let seed = seed_trajectory(&path, req.start.pose.theta, req.goal_heading, &cfg.seed)?;
    timings.seed = t.elapsed().as_secs_f64();

    let problem = Problem {
        config: cfg,
        start: req.start.pose,
        icr: req.icr,
        bc: boundary_conditions(&req.start, seed.theta_f),
        goal,
        esdf: Some(req.esdf),
    };
    let t = Instant::now();
    let preprocessed = preprocess_observed(&problem, &seed, observe)?;
    timings.preprocess = t.elapsed().as_secs_f64();

    let t = Instant::now();
    let result = alm_solve_observed(&problem, &preprocessed, req.truncated, observe)?;
    timings.optimize = t.elapsed().as_secs_f64();
    Ok(Plan { path, seed, preprocessed, result, timings })
}

/// Random free point with at least `clearance` to every obstacle.
pub fn sample_free_point<R: Rng>(esdf: &EsdfMap, clearance: f64, rng: &mut R) -> Option<[f64; 2]> {
    let g = esdf.grid();
    let lo = g.origin();
    let hi = g.upper_corner();
    (0..10_000).find_map(|_| {
        let p = [rng.random_range(lo[0]..hi[0]), rng.random_range(lo[1]..hi[1])];
        (esdf.value(p) >= clearance).then_some(p)
    })
}

/// Random start/goal sampling policy.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct QueryParams {
    /// Minimum obstacle distance of both endpoints, m.
    pub clearance: f64,
    /// Minimum straight-line start/goal distance, m.
    pub min_distance: f64,
    /// Maximum grid path length, m.
    pub max_path_length: f64,
}

impl Default for QueryParams {
    fn default() -> Self {
        QueryParams { clearance: 0.5, min_distance: 5.0, max_path_length: 20.0 }
    }
}

/// Random start pose and goal, both with `clearance` to obstacles, connected
/// on the grid inflated by `clearance`. Returns the pose, the goal and the
/// grid path length.
pub fn sample_query<R: Rng>(esdf: &EsdfMap, q: &QueryParams, rng: &mut R) -> Option<(Pose2, [f64; 2], f64)> {
    let inflated = inflate(esdf, q.clearance);
    for _ in 0..1000 {
        let s = sample_free_point(esdf, q.clearance, rng)?;
        let g = sample_free_point(esdf, q.clearance, rng)?;
        if (s[0] - g[0]).hypot(s[1] - g[1]) < q.min_distance {
            continue;
        }
        match jps_search(&inflated, s, g) {
            Ok(p) if p.length <= q.max_path_length => {
                let theta = rng.random_range(-std::f64::consts::PI..std::f64::consts::PI);
                return Some((Pose2::new(s[0], s[1], theta), g, p.length));
            }
            _ => {}
        }
    }
    None
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid_world::build_esdf;

    #[test]
    fn plans_around_a_wall() {
        let mut grid = OccupancyGrid::new(0.1, [0.0, 0.0], 100, 60).unwrap();
        grid.fill_rect([4.0, 0.0], [4.5, 4.0], true);
        let esdf = build_esdf(grid);
        let cfg = ProblemConfig::default();
        let req = PlanRequest {
            esdf: &esdf,
            config: &cfg,
            icr: IcrParams::default(),
            start: StartState::at_rest(Pose2::new(1.0, 1.0, 0.0)),
            goal: [8.0, 1.0],
            goal_heading: None,
            truncated: false,
        };
        let plan = plan(&req).unwrap();
        assert!(plan.result.succeeded(), "{:?} residual {}", plan.result.status, plan.result.residual);
        assert!(plan.timings.total() > 0.0);
        let traj = &plan.result.trajectory;
        let cache = traj.integrate(50);
        for p in cache.positions() {
            assert!(esdf.value(*p) > cfg.limits.d_s - 0.02, "{p:?}");
        }
    }

    #[test]
    fn inflated_search_keeps_clearance() {
        let mut grid = OccupancyGrid::new(0.1, [0.0, 0.0], 50, 50).unwrap();
        grid.fill_rect([2.0, 0.0], [2.5, 2.2], true);
        let esdf = build_esdf(grid);
        let p = search(&esdf, 0.3, 0.0, [1.0, 1.0], [4.0, 1.0]).unwrap();
        for w in p.points.windows(2) {
            for k in 0..=100 {
                let u = k as f64 / 100.0;
                let q = [w[0][0] + u * (w[1][0] - w[0][0]), w[0][1] + u * (w[1][1] - w[0][1])];
                assert!(esdf.value(q) >= 0.25, "{q:?}");
            }
        }
    }
}
