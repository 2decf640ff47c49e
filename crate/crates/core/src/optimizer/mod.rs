//! Decision-vector objective, PHR augmented-Lagrangian outer loop, and the
//! anchor-fitting preprocessing pass.

pub mod lbfgs;
pub mod time_map;

use std::cell::RefCell;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::global_path::{InitialGuess, SeedParams};
use crate::grid_world::EsdfMap;
use crate::kinematics::{IcrParams, Pose2};
use crate::minco::{assemble_and_solve, jerk_energy, BoundaryConditions, MincoError};
use crate::ms_trajectory::{MsTrajectory, TrajectoryError, ARC, DEFAULT_INTERVALS, NCOEF, THETA};
use crate::penalties::{
    accumulate_into, final_position_residual, ConstraintWeights, Family, GradientBuffer, Limits, PenaltyInputs,
    PenaltyReport,
};

pub use lbfgs::{lbfgs_minimize, IterationInfo, LbfgsParams, LbfgsResult, LbfgsStatus};
pub use time_map::{time_backward, time_forward};

/// Families that must be satisfied for a solve to count as feasible.
pub const HARD_FAMILIES: [Family; 7] =
    [Family::Forward, Family::Reverse, Family::Accel, Family::YawAccel, Family::Safety, Family::TLow, Family::TUpp];

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SolveError {
    #[error("non-finite {term} near segment {segment}")]
    NonFinite { segment: usize, term: &'static str },
    #[error(transparent)]
    Minco(#[from] MincoError),
    #[error(transparent)]
    Trajectory(#[from] TrajectoryError),
    #[error("invalid configuration: {0}")]
    Config(String),
}

/// Outer-loop and inner-minimizer settings.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SolverParams {
    pub rho0: f64,
    /// Penalty growth `ϱ`: `ρ ← min((1 + ϱ)ρ, ρ_max)`.
    pub rho_growth: f64,
    pub rho_max: f64,
    /// Final-position tolerance for full plans, meters.
    pub e_max: f64,
    /// Final-position tolerance for truncated replans, meters.
    pub e_max_truncated: f64,
    pub outer_max: usize,
    pub inner_max: usize,
    pub g_tol: f64,
    pub f_tol: f64,
    pub memory: usize,
    /// Max sampled violation accepted by the feasibility check.
    pub feasibility_tol: f64,
    pub preprocess_max: usize,
    pub preprocess_g_tol: f64,
    pub preprocess_f_tol: f64,
    /// Extra clearance added to `d_s` while optimizing, meters.
    pub safety_margin: f64,
    /// Relative shrink of velocity and acceleration limits while optimizing.
    pub limit_margin: f64,
}

impl Default for SolverParams {
    fn default() -> Self {
        SolverParams {
            rho0: 100.0,
            rho_growth: 1.0,
            rho_max: 1e5,
            e_max: 0.01,
            e_max_truncated: 0.1,
            outer_max: 12,
            inner_max: 300,
            g_tol: 1e-5,
            f_tol: 1e-7,
            memory: 16,
            feasibility_tol: 1e-3,
            preprocess_max: 80,
            preprocess_g_tol: 1e-2,
            preprocess_f_tol: 1e-4,
            safety_margin: 0.03,
            limit_margin: 0.02,
        }
    }
}

impl SolverParams {
    fn inner(&self) -> LbfgsParams {
        LbfgsParams {
            memory: self.memory,
            g_tol: self.g_tol,
            f_tol: self.f_tol,
            max_iter: self.inner_max,
            ..Default::default()
        }
    }

    fn preprocess(&self) -> LbfgsParams {
        LbfgsParams {
            memory: self.memory,
            g_tol: self.preprocess_g_tol,
            f_tol: self.preprocess_f_tol,
            max_iter: self.preprocess_max,
            ..Default::default()
        }
    }
}

/// All tunables of one planning problem.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ProblemConfig {
    pub limits: Limits,
    pub weights: ConstraintWeights,
    /// Control-effort weights `[θ, s]`.
    pub control_weight: [f64; 2],
    /// Time regularization `ε_T`.
    pub time_weight: f64,
    /// Simpson intervals per segment.
    pub intervals: usize,
    pub seed: SeedParams,
    pub solver: SolverParams,
}

impl Default for ProblemConfig {
    fn default() -> Self {
        ProblemConfig {
            limits: Limits::default(),
            weights: ConstraintWeights::default(),
            control_weight: [1.0, 1.0],
            time_weight: 32.0,
            intervals: DEFAULT_INTERVALS,
            seed: SeedParams::default(),
            solver: SolverParams::default(),
        }
    }
}

impl ProblemConfig {
    pub fn validate(&self) -> Result<(), SolveError> {
        self.limits.validate().map_err(SolveError::Config)?;
        let s = &self.solver;
        let checks = [
            (self.intervals >= 1, "intervals must be at least 1"),
            (self.control_weight.iter().all(|w| *w >= 0.0), "control weights must be non-negative"),
            (self.time_weight >= 0.0, "time weight must be non-negative"),
            (s.rho0 > 0.0 && s.rho_max >= s.rho0, "need 0 < rho0 <= rho_max"),
            (s.rho_growth > 0.0, "rho growth must be positive"),
            (s.e_max > 0.0 && s.e_max_truncated > 0.0, "e_max must be positive"),
            (s.memory >= 1, "memory must be at least 1"),
            (s.safety_margin >= 0.0, "safety margin must be non-negative"),
            ((0.0..0.5).contains(&s.limit_margin), "limit margin must lie in [0, 0.5)"),
            (self.seed.segment_length > 0.0 && self.seed.initial_duration > 0.0, "seed lengths must be positive"),
        ];
        for (ok, msg) in checks {
            if !ok {
                return Err(SolveError::Config(msg.into()));
            }
        }
        Ok(())
    }

    /// Copy with limits tightened by the solver margins.
    pub fn tightened(&self) -> ProblemConfig {
        let k = 1.0 - self.solver.limit_margin;
        let mut c = self.clone();
        let l = &mut c.limits;
        l.v_max *= k;
        l.v_rev *= k;
        l.omega_max *= k;
        l.a_max *= k;
        l.alpha_max *= k;
        l.d_s += self.solver.safety_margin;
        c
    }
}

/// Fixed data of one solve.
#[derive(Debug, Clone, Copy)]
pub struct Problem<'a> {
    pub config: &'a ProblemConfig,
    /// Trajectory origin; only the position is used, the heading lives in `bc`.
    pub start: Pose2,
    pub icr: IcrParams,
    pub bc: BoundaryConditions,
    pub goal: [f64; 2],
    pub esdf: Option<&'a EsdfMap>,
}

/// Flat unconstrained parameters `[θ'(M-1), s'(M-1), τ(M), s_f]`.
#[derive(Debug, Clone, PartialEq)]
pub struct DecisionVector {
    pub m: usize,
    pub x: Vec<f64>,
}

/// Natural parameters recovered from a [`DecisionVector`].
#[derive(Debug, Clone, PartialEq)]
pub struct Unpacked {
    pub waypoints: Vec<[f64; 2]>,
    pub durations: Vec<f64>,
    /// `dT/dτ` per segment.
    pub dt_dtau: Vec<f64>,
    pub s_f: f64,
}

impl DecisionVector {
    pub fn len_for(m: usize) -> usize {
        3 * m - 1
    }

    pub fn segments_for(len: usize) -> Option<usize> {
        ((len + 1).is_multiple_of(3) && len >= 2).then_some((len + 1) / 3)
    }

    pub fn pack(waypoints: &[[f64; 2]], durations: &[f64], s_f: f64) -> Self {
        let m = durations.len();
        debug_assert_eq!(waypoints.len() + 1, m);
        let mut x = Vec::with_capacity(Self::len_for(m));
        x.extend(waypoints.iter().map(|w| w[0]));
        x.extend(waypoints.iter().map(|w| w[1]));
        x.extend(durations.iter().map(|&t| time_backward(t)));
        x.push(s_f);
        DecisionVector { m, x }
    }

    pub fn from_guess(g: &InitialGuess) -> Self {
        Self::pack(&g.waypoints, &g.durations, g.s_f)
    }

    pub fn unpack(&self) -> Unpacked {
        unpack(&self.x, self.m)
    }
}

fn unpack(x: &[f64], m: usize) -> Unpacked {
    let k = m - 1;
    let waypoints = (0..k).map(|i| [x[i], x[k + i]]).collect();
    let (durations, dt_dtau) = x[2 * k..2 * k + m].iter().map(|&tau| time_forward(tau)).unzip();
    Unpacked { waypoints, durations, dt_dtau, s_f: x[3 * m - 2] }
}

/// Which extra terms join the objective.
#[derive(Debug, Clone, Copy)]
pub enum Stage<'a> {
    /// Anchor fitting without safety or final-position terms.
    Preprocess { anchors: &'a [[f64; 2]] },
    /// Full problem with the augmented-Lagrangian term.
    Alm { lambda: [f64; 2], rho: f64 },
}

/// Objective breakdown at one decision vector.
#[derive(Debug, Clone)]
pub struct Evaluation {
    pub value: f64,
    /// Weighted control effort without the time term.
    pub effort: f64,
    pub total_time: f64,
    pub report: PenaltyReport,
    /// Integrated end point minus goal.
    pub residual: [f64; 2],
    pub trajectory: MsTrajectory,
}

impl Evaluation {
    pub fn residual_norm(&self) -> f64 {
        self.residual[0].hypot(self.residual[1])
    }
}

/// Objective value and analytic gradient over the decision vector.
pub fn objective(problem: &Problem, stage: &Stage, x: &[f64], grad: &mut [f64]) -> Result<Evaluation, SolveError> {
    let cfg = problem.config;
    let m = DecisionVector::segments_for(x.len())
        .ok_or_else(|| SolveError::Config(format!("decision vector length {} is not 3M-1", x.len())))?;
    if grad.len() != x.len() {
        return Err(SolveError::Config("gradient length mismatch".into()));
    }
    if let Some(i) = x.iter().position(|v| !v.is_finite()) {
        return Err(SolveError::NonFinite { segment: i.min(m - 1), term: "decision" });
    }
    let p = unpack(x, m);
    let minco = assemble_and_solve(&problem.bc, &p.waypoints, p.s_f, &p.durations)?;
    let traj = MsTrajectory::new(problem.start, problem.icr, minco.coeffs().to_vec(), p.durations.clone())?;
    let cache = traj.integrate(cfg.intervals);
    let mut buf = GradientBuffer::new(m, cfg.intervals);

    let mut effort = 0.0;
    for (i, c) in traj.coeffs().iter().enumerate() {
        for ch in [THETA, ARC] {
            let w = cfg.control_weight[ch];
            let (v, g, gt) = jerk_energy(&c[ch], p.durations[i]);
            if !v.is_finite() {
                return Err(SolveError::NonFinite { segment: i, term: "control effort" });
            }
            effort += w * v;
            for k in 0..NCOEF {
                buf.coeffs[i][ch][k] += w * g[k];
            }
            buf.durations[i] += w * gt;
        }
        buf.durations[i] += cfg.time_weight;
    }
    let total_time: f64 = p.durations.iter().sum();
    let mut value = effort + cfg.time_weight * total_time;

    let (esdf, anchors) = match stage {
        Stage::Preprocess { anchors } => (None, Some(*anchors)),
        Stage::Alm { .. } => (problem.esdf, None),
    };
    let inputs = PenaltyInputs { limits: &cfg.limits, weights: &cfg.weights, esdf, anchors };
    let report = accumulate_into(&traj, &cache, &inputs, &mut buf)?;
    if !report.total.is_finite() {
        let seg = buf.durations.iter().position(|g| !g.is_finite()).unwrap_or(0);
        return Err(SolveError::NonFinite { segment: seg, term: "penalty" });
    }
    value += report.total;

    let residual = final_position_residual(&cache, problem.goal);
    if let Stage::Alm { lambda, rho } = *stage {
        let a = [residual[0] + lambda[0] / rho, residual[1] + lambda[1] / rho];
        value += 0.5 * rho * (a[0] * a[0] + a[1] * a[1]);
        buf.add_final_position([rho * a[0], rho * a[1]]);
    }
    buf.resolve(&cache);
    let sg = minco.backprop(&buf.coeffs, &buf.durations)?;

    let k = m - 1;
    for i in 0..k {
        grad[i] = sg.waypoints[i][0];
        grad[k + i] = sg.waypoints[i][1];
    }
    for i in 0..m {
        grad[2 * k + i] = sg.durations[i] * p.dt_dtau[i];
    }
    grad[3 * m - 2] = sg.s_f;
    if !value.is_finite() {
        return Err(SolveError::NonFinite { segment: 0, term: "objective" });
    }
    if let Some(i) = grad.iter().position(|g| !g.is_finite()) {
        let segment = if i < 2 * k { (i % k.max(1)).min(m - 1) } else { (i - 2 * k).min(m - 1) };
        return Err(SolveError::NonFinite { segment, term: "gradient" });
    }
    Ok(Evaluation { value, effort, total_time, report, residual, trajectory: traj })
}

/// Dual variables and penalty weight of the outer loop.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct AlmState {
    pub lambda: [f64; 2],
    pub rho: f64,
    pub growth: f64,
    pub rho_max: f64,
    pub e_max: f64,
    pub iteration: usize,
}

impl AlmState {
    pub fn new(params: &SolverParams, truncated: bool) -> Self {
        AlmState {
            lambda: [0.0; 2],
            rho: params.rho0,
            growth: params.rho_growth,
            rho_max: params.rho_max,
            e_max: if truncated { params.e_max_truncated } else { params.e_max },
            iteration: 0,
        }
    }

    /// `λ ← λ + ρC`, then `ρ ← min((1 + ϱ)ρ, ρ_max)`.
    pub fn update(&mut self, c: [f64; 2]) {
        self.lambda[0] += self.rho * c[0];
        self.lambda[1] += self.rho * c[1];
        self.rho = ((1.0 + self.growth) * self.rho).min(self.rho_max);
        self.iteration += 1;
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum SolveStatus {
    Converged,
    /// Outer cap reached with the final-position error at or above `e_max`.
    Incomplete,
    /// Some constraint family is violated beyond the feasibility tolerance.
    Infeasible,
}

impl SolveStatus {
    pub fn name(self) -> &'static str {
        match self {
            SolveStatus::Converged => "converged",
            SolveStatus::Incomplete => "incomplete",
            SolveStatus::Infeasible => "infeasible",
        }
    }
}

/// Summary of one outer round.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AlmRound {
    pub rho: f64,
    pub lambda: [f64; 2],
    /// Final-position error after the inner solve.
    pub residual: f64,
    pub inner_iterations: usize,
    pub inner_status: LbfgsStatus,
    pub value: f64,
}

/// One row of the iteration trace.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct IterationRecord {
    pub stage: &'static str,
    pub outer: usize,
    pub iteration: usize,
    pub value: f64,
    pub grad_norm: f64,
    pub residual: f64,
    pub rho: f64,
}

#[derive(Debug, Clone)]
pub struct SolveResult {
    pub status: SolveStatus,
    pub trajectory: MsTrajectory,
    pub decision: DecisionVector,
    /// Final-position error, meters.
    pub residual: f64,
    pub report: PenaltyReport,
    pub effort: f64,
    pub alm: AlmState,
    pub rounds: Vec<AlmRound>,
    pub outer_iterations: usize,
    pub inner_iterations: usize,
    pub evaluations: usize,
}

impl SolveResult {
    pub fn succeeded(&self) -> bool {
        self.status == SolveStatus::Converged
    }

    pub fn max_violation(&self) -> f64 {
        self.report.max_violation(&HARD_FAMILIES)
    }
}

/// Labels attached to trace rows of one inner run.
struct TraceTag {
    stage: &'static str,
    outer: usize,
    rho: f64,
}

/// Run one inner minimization; the last objective error, if any, is returned
/// when the minimizer could not start.
fn minimize(
    problem: &Problem,
    stage: &Stage,
    x0: &[f64],
    params: &LbfgsParams,
    tag: TraceTag,
    observe: &mut dyn FnMut(&IterationRecord),
) -> Result<LbfgsResult, SolveError> {
    let last_err: RefCell<Option<SolveError>> = RefCell::new(None);
    let last_residual = RefCell::new(f64::NAN);
    let res = lbfgs_minimize(
        |x, g| match objective(problem, stage, x, g) {
            Ok(e) => {
                *last_residual.borrow_mut() = e.residual_norm();
                e.value
            }
            Err(err) => {
                *last_err.borrow_mut() = Some(err);
                f64::INFINITY
            }
        },
        x0,
        params,
        |info| {
            observe(&IterationRecord {
                stage: tag.stage,
                outer: tag.outer,
                iteration: info.iteration,
                value: info.f,
                grad_norm: info.grad_norm,
                residual: *last_residual.borrow(),
                rho: tag.rho,
            })
        },
    );
    if res.status == LbfgsStatus::NonFinite {
        return Err(last_err.into_inner().unwrap_or(SolveError::NonFinite { segment: 0, term: "objective" }));
    }
    Ok(res)
}

/// Fit the seed to its anchors under kinematic penalties. Returns the guess
/// with updated waypoints, durations and final arc length.
pub fn preprocess(problem: &Problem, seed: &InitialGuess) -> Result<InitialGuess, SolveError> {
    preprocess_observed(problem, seed, &mut |_| {})
}

pub fn preprocess_observed(
    problem: &Problem,
    seed: &InitialGuess,
    observe: &mut dyn FnMut(&IterationRecord),
) -> Result<InitialGuess, SolveError> {
    let tight = problem.config.tightened();
    let problem = &Problem { config: &tight, ..*problem };
    let x0 = DecisionVector::from_guess(seed);
    let stage = Stage::Preprocess { anchors: &seed.anchors };
    let res = minimize(
        problem,
        &stage,
        &x0.x,
        &problem.config.solver.preprocess(),
        TraceTag { stage: "preprocess", outer: 0, rho: 0.0 },
        observe,
    )?;
    let p = unpack(&res.x, x0.m);
    Ok(InitialGuess { waypoints: p.waypoints, durations: p.durations, s_f: p.s_f, ..seed.clone() })
}

/// Penalty report of `traj` against the untightened limits.
pub fn nominal_report(problem: &Problem, traj: &MsTrajectory) -> Result<PenaltyReport, SolveError> {
    let cfg = problem.config;
    let cache = traj.integrate(cfg.intervals);
    let inputs = PenaltyInputs { limits: &cfg.limits, weights: &cfg.weights, esdf: problem.esdf, anchors: None };
    Ok(crate::penalties::accumulate(traj, &cache, &inputs)?.report)
}

/// Augmented-Lagrangian solve from `guess`.
pub fn alm_solve(problem: &Problem, guess: &InitialGuess, truncated: bool) -> Result<SolveResult, SolveError> {
    alm_solve_observed(problem, guess, truncated, &mut |_| {})
}

pub fn alm_solve_observed(
    problem: &Problem,
    guess: &InitialGuess,
    truncated: bool,
    observe: &mut dyn FnMut(&IterationRecord),
) -> Result<SolveResult, SolveError> {
    problem.config.validate()?;
    let tight = problem.config.tightened();
    let nominal = problem;
    let problem = &Problem { config: &tight, ..*nominal };
    let params = &problem.config.solver;
    let inner = params.inner();
    let mut dv = DecisionVector::from_guess(guess);
    let mut alm = AlmState::new(params, truncated);
    let mut rounds = Vec::new();
    let mut inner_iterations = 0;
    let mut evaluations = 0;
    let mut grad = vec![0.0; dv.x.len()];
    let mut outer = 0;
    let final_eval = loop {
        let stage = Stage::Alm { lambda: alm.lambda, rho: alm.rho };
        let res = minimize(problem, &stage, &dv.x, &inner, TraceTag { stage: "alm", outer, rho: alm.rho }, observe)?;
        inner_iterations += res.iterations;
        evaluations += res.evaluations;
        dv.x = res.x;
        outer += 1;
        let eval = objective(problem, &stage, &dv.x, &mut grad)?;
        rounds.push(AlmRound {
            rho: alm.rho,
            lambda: alm.lambda,
            residual: eval.residual_norm(),
            inner_iterations: res.iterations,
            inner_status: res.status,
            value: eval.value,
        });
        if eval.residual_norm() < alm.e_max || outer >= params.outer_max {
            break eval;
        }
        alm.update(eval.residual);
    };
    let residual = final_eval.residual_norm();
    let report = nominal_report(nominal, &final_eval.trajectory)?;
    let feasible = report.max_violation(&HARD_FAMILIES) <= params.feasibility_tol;
    let status = if residual >= alm.e_max {
        SolveStatus::Incomplete
    } else if !feasible {
        SolveStatus::Infeasible
    } else {
        SolveStatus::Converged
    };
    Ok(SolveResult {
        status,
        trajectory: final_eval.trajectory,
        decision: dv,
        residual,
        report,
        effort: final_eval.effort,
        alm,
        rounds,
        outer_iterations: outer,
        inner_iterations,
        evaluations,
    })
}

#[cfg(test)]
mod tests;
