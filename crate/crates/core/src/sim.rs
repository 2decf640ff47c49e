//! Closed-loop simulation: progressive map reveal inside a sensing disk,
//! replanning, receding-horizon tracking and a kinematic plant with
//! optional actuation noise.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::export::CsvRecord;
use crate::grid_world::{build_esdf, EsdfMap, OccupancyGrid};
use crate::kinematics::{step, twist_from_wheels, IcrParams, Pose2, Twist};
use crate::ms_trajectory::{MsTrajectory, TrajectoryError};
use crate::optimizer::ProblemConfig;
use crate::replanner::{replan_tick, ActiveTrajectory, PlanOutcome, ReplanEvent, ReplanPolicy, TickInput};
use crate::tracker::{solve_horizon, ControlLogRow, HorizonConfig, HorizonSolution, InputModel, ReferenceTable};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SimConfig {
    /// Plant integration step, s.
    pub dt: f64,
    /// Controller period, s; a multiple of `dt`.
    pub control_dt: f64,
    pub sensing_range: f64,
    /// Collision radius of the robot body, m.
    pub robot_radius: f64,
    pub max_time: f64,
    pub goal_tolerance: f64,
    /// Standard deviation of additive noise on the two commanded inputs.
    pub actuation_noise: [f64; 2],
}

impl Default for SimConfig {
    fn default() -> Self {
        SimConfig {
            dt: 0.01,
            control_dt: 0.05,
            sensing_range: 7.0,
            robot_radius: 0.15,
            max_time: 60.0,
            goal_tolerance: 0.2,
            actuation_noise: [0.02, 0.02],
        }
    }
}

/// Obstacle that materializes once the robot comes within `trigger_distance`
/// of its center.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PopUp {
    pub min: [f64; 2],
    pub max: [f64; 2],
    pub trigger_distance: f64,
}

impl PopUp {
    fn center(&self) -> [f64; 2] {
        [0.5 * (self.min[0] + self.max[0]), 0.5 * (self.min[1] + self.max[1])]
    }
}

#[derive(Debug, Clone)]
pub struct Scenario {
    pub name: String,
    /// Ground-truth occupancy; the robot only sees it within the sensing disk.
    pub truth: OccupancyGrid,
    pub start: Pose2,
    pub goal: [f64; 2],
    pub popups: Vec<PopUp>,
    /// Reveal the whole static map up front.
    pub fully_known: bool,
}

fn bordered(width: f64, height: f64) -> OccupancyGrid {
    let mut g = OccupancyGrid::with_extent(0.1, [0.0, 0.0], [width, height]).expect("positive extent");
    g.fill_rect([0.0, 0.0], [width, 0.1], true);
    g.fill_rect([0.0, height - 0.1], [width, height], true);
    g.fill_rect([0.0, 0.0], [0.1, height], true);
    g.fill_rect([width - 0.1, 0.0], [width, height], true);
    g
}

impl Scenario {
    /// A U-shaped trap opening toward the start, with the goal behind it.
    pub fn u_shape(seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut g = bordered(30.0, 14.0);
        g.fill_rect([16.0, 3.0], [16.4, 11.0], true);
        g.fill_rect([12.0, 3.0], [16.4, 3.4], true);
        g.fill_rect([12.0, 10.6], [16.4, 11.0], true);
        Scenario {
            name: "u_shape".into(),
            truth: g,
            start: Pose2::new(3.0, 7.0 + rng.random_range(-1.0..1.0), rng.random_range(-0.5..0.5)),
            goal: [26.0, 7.0 + rng.random_range(-1.0..1.0)],
            popups: Vec::new(),
            fully_known: false,
        }
    }

    /// Open corridor with a block that appears ahead of the robot.
    pub fn pop_up(seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let g = bordered(30.0, 10.0);
        let cx = rng.random_range(9.0..18.0);
        let cy = 5.0 + rng.random_range(-0.3..0.3);
        Scenario {
            name: "pop_up".into(),
            truth: g,
            start: Pose2::new(2.0, 5.0, 0.0),
            goal: [27.0, 5.0],
            popups: vec![PopUp {
                min: [cx - 0.5, cy - 0.8],
                max: [cx + 0.5, cy + 0.8],
                trigger_distance: rng.random_range(4.0..5.0),
            }],
            fully_known: false,
        }
    }

    pub fn custom(truth: OccupancyGrid, start: Pose2, goal: [f64; 2]) -> Self {
        Scenario { name: "custom".into(), truth, start, goal, popups: Vec::new(), fully_known: true }
    }
}

/// Parameters of a closed-loop run.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct ClosedLoopParams {
    pub sim: SimConfig,
    pub tracker: HorizonConfig,
    pub policy: ReplanPolicy,
    pub problem: ProblemConfig,
    /// ICRs used by the planner and controller.
    pub model_icr: IcrParams,
    /// ICRs of the simulated plant.
    pub plant_icr: IcrParams,
}

/// Per-plan stage timings, milliseconds.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct TimingRow {
    pub tick: u64,
    pub t: f64,
    pub jps: f64,
    /// Seeding plus preprocessing.
    pub preprocess: f64,
    pub optimization: f64,
    pub total: f64,
}

impl CsvRecord for TimingRow {
    const COLUMNS: &'static [&'static str] = &["tick", "t", "jps", "preprocess", "optimization", "total"];
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SimResult {
    pub scenario: String,
    pub seed: u64,
    pub success: bool,
    /// Time of the first collision with the true map.
    pub collision_time: Option<f64>,
    pub final_time: f64,
    pub goal_error: f64,
    pub mean_tracking_error: f64,
    pub max_tracking_error: f64,
    pub replans: usize,
    pub emergency_stops: usize,
}

#[derive(Debug, Clone)]
pub struct SimLog {
    pub control: Vec<ControlLogRow>,
    pub events: Vec<ReplanEvent>,
    pub timings: Vec<TimingRow>,
    pub result: SimResult,
}

/// Copy truth into `known` within `range` of `p`. Returns whether anything
/// changed.
fn reveal(known: &mut OccupancyGrid, truth: &OccupancyGrid, p: [f64; 2], range: f64) -> bool {
    let r = truth.resolution();
    let o = truth.origin();
    let lo_x = (((p[0] - range - o[0]) / r).floor().max(0.0)) as usize;
    let lo_y = (((p[1] - range - o[1]) / r).floor().max(0.0)) as usize;
    let hi_x = ((((p[0] + range - o[0]) / r).ceil()) as usize).min(truth.width().saturating_sub(1));
    let hi_y = ((((p[1] + range - o[1]) / r).ceil()) as usize).min(truth.height().saturating_sub(1));
    let mut changed = false;
    for iy in lo_y..=hi_y {
        for ix in lo_x..=hi_x {
            let c = truth.cell_center(ix, iy);
            if (c[0] - p[0]).hypot(c[1] - p[1]) > range {
                continue;
            }
            let occ = truth.is_occupied(ix, iy);
            if known.is_occupied(ix, iy) != occ {
                known.set(ix, iy, occ);
                changed = true;
            }
        }
    }
    changed
}

fn actuate(model: InputModel, u: [f64; 2], icr: &IcrParams) -> Twist {
    match model {
        InputModel::Twist => Twist::with_slip(u[0], u[1], icr),
        InputModel::Wheel => twist_from_wheels(u[0], u[1], icr),
    }
}

/// Run one scenario to completion, collision or timeout. Deterministic in
/// `seed` apart from the recorded wall-clock timings.
pub fn run_closed_loop(scenario: &Scenario, params: &ClosedLoopParams, seed: u64) -> SimLog {
    let sim = &params.sim;
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x5eed);
    let noise = [
        Normal::new(0.0, sim.actuation_noise[0].max(0.0)).expect("finite std"),
        Normal::new(0.0, sim.actuation_noise[1].max(0.0)).expect("finite std"),
    ];
    let ctrl_every = ((sim.control_dt / sim.dt).round() as u64).max(1);
    let plan_every = ((params.policy.period() / sim.dt).round() as u64).max(1);
    let steps = (sim.max_time / sim.dt).ceil() as u64;

    let mut truth = scenario.truth.clone();
    let mut known = if scenario.fully_known {
        truth.clone()
    } else {
        let mut g = truth.clone();
        g.fill(false);
        g
    };
    reveal(&mut known, &truth, scenario.start.position(), sim.sensing_range);
    let mut esdf: EsdfMap = build_esdf(known.clone());
    let mut triggered = vec![false; scenario.popups.len()];

    let mut pose = scenario.start;
    let mut active: Option<ActiveTrajectory> = None;
    let mut pending: Option<(ActiveTrajectory, f64)> = None;
    let mut warm: Option<HorizonSolution> = None;
    let mut command = Twist::default();
    let mut control = Vec::new();
    let mut events = Vec::new();
    let mut timings = Vec::new();
    let mut result = SimResult {
        scenario: scenario.name.clone(),
        seed,
        success: false,
        collision_time: None,
        final_time: 0.0,
        goal_error: f64::NAN,
        mean_tracking_error: 0.0,
        max_tracking_error: 0.0,
        replans: 0,
        emergency_stops: 0,
    };

    for k in 0..=steps {
        let t = k as f64 * sim.dt;
        for (p, done) in scenario.popups.iter().zip(triggered.iter_mut()) {
            if !*done && pose.distance_to(p.center()) <= p.trigger_distance {
                truth.fill_rect(p.min, p.max, true);
                *done = true;
            }
        }
        if k % plan_every == 0 {
            if reveal(&mut known, &truth, pose.position(), sim.sensing_range) {
                esdf = build_esdf(known.clone());
            }
            let reference = pending.as_ref().map(|(a, _)| a).or(active.as_ref());
            let input = TickInput {
                tick: k / plan_every,
                t_c: t,
                active: reference,
                robot: pose,
                esdf: &esdf,
                map_age: 0,
                goal: scenario.goal,
                config: &params.problem,
                icr: params.model_icr,
            };
            let (outcome, event) = replan_tick(&input, &params.policy);
            if let Some(s) = event.timings {
                timings.push(TimingRow {
                    tick: event.tick,
                    t,
                    jps: 1e3 * s.search,
                    preprocess: 1e3 * (s.seed + s.preprocess),
                    optimization: 1e3 * s.optimize,
                    total: 1e3 * s.total(),
                });
            }
            events.push(event);
            match outcome {
                PlanOutcome::New { trajectory, switch_time } => {
                    result.replans += 1;
                    pending = Some((*trajectory, switch_time));
                }
                PlanOutcome::EmergencyStop => {
                    result.emergency_stops += 1;
                    active = None;
                    pending = None;
                    warm = None;
                }
                PlanOutcome::Keep(_) | PlanOutcome::SkipTick => {}
            }
        }
        if pending.as_ref().is_some_and(|(_, ts)| t >= ts - 1e-9) {
            active = pending.take().map(|(a, _)| a);
        }
        if k % ctrl_every == 0 {
            command = match &active {
                Some(a) => {
                    let sol =
                        solve_horizon(pose, t - a.t0, &a.table, &params.tracker, &params.model_icr, warm.as_ref());
                    let row = ControlLogRow::new(t, pose, &sol);
                    let u = [sol.u0[0] + noise[0].sample(&mut rng), sol.u0[1] + noise[1].sample(&mut rng)];
                    control.push(row);
                    warm = Some(sol);
                    actuate(params.tracker.model, u, &params.plant_icr)
                }
                None => Twist::default(),
            };
        }
        if truth.disk_collides(pose.position(), sim.robot_radius) {
            result.collision_time = Some(t);
            result.final_time = t;
            break;
        }
        let at_goal = pose.distance_to(scenario.goal) <= sim.goal_tolerance;
        if at_goal && active.as_ref().is_some_and(|a| a.final_leg && t >= a.end_time()) {
            result.success = true;
            result.final_time = t;
            break;
        }
        result.final_time = t;
        pose = step(pose, command, sim.dt);
    }
    result.goal_error = pose.distance_to(scenario.goal);
    if !control.is_empty() {
        let errs: Vec<f64> = control.iter().map(|r| r.position_error()).collect();
        result.mean_tracking_error = errs.iter().sum::<f64>() / errs.len() as f64;
        result.max_tracking_error = errs.iter().fold(0.0, |m: f64, e| m.max(*e));
    }
    SimLog { control, events, timings, result }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct TrackingStats {
    pub mean_error: f64,
    pub max_error: f64,
    pub final_error: f64,
}

/// Track a fixed trajectory from its start pose with the horizon controller
/// on a plant with `plant_icr`, for the trajectory's duration plus `extra`
/// seconds. Errors are measured against the trajectory's own positions.
pub fn track_trajectory(
    traj: &MsTrajectory,
    tracker: &HorizonConfig,
    model_icr: &IcrParams,
    plant_icr: &IcrParams,
    extra: f64,
) -> Result<TrackingStats, TrajectoryError> {
    let table = ReferenceTable::preintegrate(traj, 0.1)?;
    let mut pose = traj.start_pose();
    let mut warm: Option<HorizonSolution> = None;
    let steps = ((traj.total_duration() + extra) / tracker.dt).ceil() as usize;
    let (mut sum, mut max) = (0.0, 0.0f64);
    for k in 0..=steps {
        let t = k as f64 * tracker.dt;
        let e = pose.distance_to(table.reference_at(t).pose.position());
        sum += e;
        max = max.max(e);
        if k == steps {
            return Ok(TrackingStats { mean_error: sum / (steps + 1) as f64, max_error: max, final_error: e });
        }
        let sol = solve_horizon(pose, t, &table, tracker, model_icr, warm.as_ref());
        pose = step(pose, actuate(tracker.model, sol.u0, plant_icr), tracker.dt);
        warm = Some(sol);
    }
    unreachable!("loop returns on its last step")
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn reveal_is_limited_to_the_disk() {
        let truth = bordered(20.0, 10.0);
        let mut known = truth.clone();
        known.fill(false);
        assert!(reveal(&mut known, &truth, [2.0, 5.0], 7.0));
        assert!(known.is_occupied(0, 50));
        assert!(!known.is_occupied(199, 50));
        assert!(!reveal(&mut known, &truth, [2.0, 5.0], 7.0));
    }

    #[test]
    fn scenarios_are_seeded() {
        let a = Scenario::pop_up(3);
        let b = Scenario::pop_up(3);
        assert_eq!(a.popups, b.popups);
        assert_ne!(a.popups, Scenario::pop_up(4).popups);
        let u = Scenario::u_shape(1);
        assert!(!u.truth.disk_collides(u.start.position(), 0.5));
        assert!(!u.truth.disk_collides(u.goal, 0.5));
    }

    #[test]
    fn u_shape_reaches_goal() {
        let log = run_closed_loop(&Scenario::u_shape(0), &ClosedLoopParams::default(), 0);
        let r = &log.result;
        assert!(r.success && r.collision_time.is_none(), "{r:?}");
        assert!(!log.timings.is_empty());
    }

    #[test]
    fn pop_up_is_avoided() {
        let log = run_closed_loop(&Scenario::pop_up(0), &ClosedLoopParams::default(), 0);
        let r = &log.result;
        assert!(r.success && r.collision_time.is_none(), "{r:?}");
    }
}
