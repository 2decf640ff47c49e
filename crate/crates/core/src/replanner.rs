//! Replanning decisions for the closed loop: start-state selection, safe-point
//! search along the active trajectory, truncation of long goals, and the
//! outcome of each tick.

use std::time::Instant;

use serde::{Deserialize, Serialize};

use crate::global_path::PathError;
use crate::grid_world::EsdfMap;
use crate::kinematics::{IcrParams, Pose2};
use crate::ms_trajectory::{MsTrajectory, TrajectoryError};
use crate::optimizer::ProblemConfig;
use crate::planner::{plan_along, search, PlanError, PlanRequest, StageTimings, StartState};
use crate::tracker::ReferenceTable;

/// Maximum map age, in ticks, that a replan may use.
pub const MAX_MAP_AGE: u32 = 2;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ReplanPolicy {
    /// Expected compute time `T_R`; plans start this far ahead of the tick.
    pub t_r: f64,
    pub rate_hz: f64,
    /// Forward window `T_J` searched for the last safe point.
    pub t_j: f64,
    /// Paths longer than this are truncated, m.
    pub l_max: f64,
    /// Final-position tolerance of truncated solves, m.
    pub e_max_relaxed: f64,
    /// Sampling step of safety checks along the trajectory, s.
    pub check_dt: f64,
    /// Obstacle distance below which a trajectory point counts as unsafe, m.
    pub collision_clearance: f64,
    /// A non-final trajectory is extended once less than this much of it
    /// remains, s.
    pub refresh_time: f64,
    /// Stop when a conflict lies this close ahead and no plan succeeded, s.
    pub stop_horizon: f64,
}

impl Default for ReplanPolicy {
    fn default() -> Self {
        ReplanPolicy {
            t_r: 0.02,
            rate_hz: 12.5,
            t_j: 1.0,
            l_max: 8.0,
            e_max_relaxed: 0.1,
            check_dt: 0.05,
            collision_clearance: 0.15,
            refresh_time: 2.0,
            stop_horizon: 1.5,
        }
    }
}

impl ReplanPolicy {
    pub fn validate(&self, e_max: f64) -> Result<(), String> {
        let ok = self.t_r > 0.0
            && self.rate_hz > 0.0
            && self.t_j >= 0.0
            && self.l_max > 0.0
            && self.e_max_relaxed >= e_max
            && self.check_dt > 0.0
            && self.collision_clearance >= 0.0;
        if ok {
            Ok(())
        } else {
            Err("replan policy needs t_r, rate_hz, l_max, check_dt > 0 and e_max_relaxed >= e_max".into())
        }
    }

    pub fn period(&self) -> f64 {
        1.0 / self.rate_hz
    }
}

/// A trajectory anchored at a global start time, with its reference table.
#[derive(Debug, Clone)]
pub struct ActiveTrajectory {
    pub table: ReferenceTable,
    /// Global time of the trajectory's `t = 0`.
    pub t0: f64,
    /// Whether the trajectory ends at the mission goal (not truncated).
    pub final_leg: bool,
}

impl ActiveTrajectory {
    pub fn new(traj: &MsTrajectory, t0: f64, final_leg: bool) -> Result<Self, TrajectoryError> {
        Ok(ActiveTrajectory { table: ReferenceTable::preintegrate(traj, 0.1)?, t0, final_leg })
    }

    pub fn trajectory(&self) -> &MsTrajectory {
        self.table.trajectory()
    }

    pub fn end_time(&self) -> f64 {
        self.t0 + self.table.duration()
    }

    pub fn position_at(&self, t: f64) -> [f64; 2] {
        self.table.reference_at(t - self.t0).pose.position()
    }

    /// Full motion state at global time `t`, clamped to the trajectory;
    /// rates vanish past the end.
    pub fn state_at(&self, t: f64) -> StartState {
        let local = t - self.t0;
        let r = self.table.reference_at(local);
        if local >= self.table.duration() {
            return StartState::at_rest(r.pose);
        }
        let st = self.trajectory().eval_state(local.max(0.0), 2).expect("clamped time in domain");
        StartState { pose: r.pose, theta_rates: [st.theta[1], st.theta[2]], s_rates: [st.s[1], st.s[2]] }
    }

    /// First sampled time in `[from, end]` closer than `clearance` to an
    /// obstacle.
    pub fn first_conflict(&self, esdf: &EsdfMap, from: f64, clearance: f64, dt: f64) -> Option<f64> {
        let end = self.end_time();
        let mut t = from.max(self.t0);
        loop {
            if esdf.value(self.position_at(t)) < clearance {
                return Some(t);
            }
            if t >= end {
                return None;
            }
            t = (t + dt).min(end);
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum KeepReason {
    /// The active trajectory is safe and needs no extension yet.
    Safe,
    SolveFailed,
    GoalUnreachable,
}

#[derive(Debug, Clone)]
pub enum PlanOutcome {
    Keep(KeepReason),
    /// Activate `trajectory` at `switch_time`.
    New {
        trajectory: Box<ActiveTrajectory>,
        switch_time: f64,
    },
    /// Command zero twist and drop the active trajectory.
    EmergencyStop,
    /// The map snapshot is too old to plan on.
    SkipTick,
}

impl PlanOutcome {
    pub fn name(&self) -> &'static str {
        match self {
            PlanOutcome::Keep(_) => "keep",
            PlanOutcome::New { .. } => "new",
            PlanOutcome::EmergencyStop => "emergency_stop",
            PlanOutcome::SkipTick => "skip_tick",
        }
    }
}

/// One line of the scenario event log.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ReplanEvent {
    pub tick: u64,
    pub t: f64,
    pub outcome: &'static str,
    pub reason: Option<KeepReason>,
    /// Wall time spent in this tick, s.
    pub solve_time: f64,
    pub residual: Option<f64>,
    pub truncated: bool,
    /// Path length handed to the optimizer, m.
    pub path_length: Option<f64>,
    pub timings: Option<StageTimings>,
    /// Whether the solve took longer than `T_R`.
    pub late: bool,
}

/// Everything a tick reads.
#[derive(Debug, Clone, Copy)]
pub struct TickInput<'a> {
    pub tick: u64,
    pub t_c: f64,
    pub active: Option<&'a ActiveTrajectory>,
    /// Pose used when there is no active trajectory.
    pub robot: Pose2,
    pub esdf: &'a EsdfMap,
    /// Ticks since the map snapshot was taken.
    pub map_age: u32,
    pub goal: [f64; 2],
    pub config: &'a ProblemConfig,
    pub icr: IcrParams,
}

/// Decide what to do at tick time `t_c`.
pub fn replan_tick(input: &TickInput, policy: &ReplanPolicy) -> (PlanOutcome, ReplanEvent) {
    let clock = Instant::now();
    let mut event = ReplanEvent {
        tick: input.tick,
        t: input.t_c,
        outcome: "",
        reason: None,
        solve_time: 0.0,
        residual: None,
        truncated: false,
        path_length: None,
        timings: None,
        late: false,
    };
    let outcome = decide(input, policy, &mut event);
    event.outcome = outcome.name();
    if let PlanOutcome::Keep(r) = outcome {
        event.reason = Some(r);
    }
    event.solve_time = clock.elapsed().as_secs_f64();
    event.late = event.timings.is_some() && event.solve_time > policy.t_r;
    (outcome, event)
}

fn decide(input: &TickInput, policy: &ReplanPolicy, event: &mut ReplanEvent) -> PlanOutcome {
    if input.map_age > MAX_MAP_AGE {
        return PlanOutcome::SkipTick;
    }
    let t_sw = input.t_c + policy.t_r;
    let clearance = policy.collision_clearance;
    let conflict = input.active.and_then(|a| a.first_conflict(input.esdf, input.t_c, clearance, policy.check_dt));
    if let Some(a) = input.active {
        let expiring = !a.final_leg && a.end_time() - input.t_c < policy.refresh_time;
        if conflict.is_none() && !expiring {
            return PlanOutcome::Keep(KeepReason::Safe);
        }
    }
    let imminent = conflict.is_some_and(|t| t < input.t_c + policy.stop_horizon);
    let fail = |reason| if imminent { PlanOutcome::EmergencyStop } else { PlanOutcome::Keep(reason) };

    let (start, prefix) = match input.active {
        Some(a) => {
            let start = a.state_at(t_sw);
            (start, safe_prefix(a, input.esdf, t_sw, input.config.limits.d_s, policy))
        }
        None => (StartState::at_rest(input.robot), vec![input.robot.position()]),
    };
    let p_j = *prefix.last().expect("prefix holds the start");
    let cfg = input.config;
    let t = Instant::now();
    let tail = match search(input.esdf, cfg.limits.d_s, cfg.seed.search_margin, p_j, input.goal) {
        Ok(p) => p,
        Err(PathError::TooShort(_)) if prefix.len() > 1 => crate::global_path::GridPath::from_points(vec![p_j]),
        Err(_) => return fail(KeepReason::GoalUnreachable),
    };
    let search_time = t.elapsed().as_secs_f64();
    let full = tail.prepended(&prefix);
    let truncated = full.length > policy.l_max;
    let path = if truncated { full.truncated(policy.l_max) } else { full };
    event.truncated = truncated;
    event.path_length = Some(path.length);

    let mut cfg = cfg.clone();
    cfg.solver.e_max_truncated = policy.e_max_relaxed;
    let req = PlanRequest {
        esdf: input.esdf,
        config: &cfg,
        icr: input.icr,
        start,
        goal: input.goal,
        goal_heading: None,
        truncated,
    };
    let plan = match plan_along(&req, path, &mut |_| {}) {
        Ok(p) => p,
        Err(PlanError::Path(_)) | Err(PlanError::Solve(_)) => return fail(KeepReason::SolveFailed),
    };
    let mut timings = plan.timings;
    timings.search = search_time;
    event.timings = Some(timings);
    event.residual = Some(plan.result.residual);
    if !plan.result.succeeded() {
        return fail(KeepReason::SolveFailed);
    }
    match ActiveTrajectory::new(&plan.result.trajectory, t_sw, !truncated) {
        Ok(a) => PlanOutcome::New { trajectory: Box::new(a), switch_time: t_sw },
        Err(_) => fail(KeepReason::SolveFailed),
    }
}

/// Trajectory positions from `t_sw` up to the last sample within the forward
/// window that keeps `clearance`.
fn safe_prefix(
    a: &ActiveTrajectory,
    esdf: &EsdfMap,
    t_sw: f64,
    clearance: f64,
    policy: &ReplanPolicy,
) -> Vec<[f64; 2]> {
    let mut out = vec![a.position_at(t_sw)];
    let end = (t_sw + policy.t_j).min(a.end_time());
    let mut t = t_sw;
    while t < end {
        t = (t + policy.check_dt).min(end);
        let p = a.position_at(t);
        if esdf.value(p) < clearance {
            break;
        }
        out.push(p);
    }
    out
}
