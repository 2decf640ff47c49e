use std::path::Path;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{BenchError, Experiment, RunMetrics, ScenarioConfig, ScenarioName, WorldName};
use crate::export::{write_csv_file, write_json_file, write_json_lines_file, CsvRecord};
use crate::grid_world::{build_esdf, generate_world, EsdfMap, WorldKind};
use crate::kinematics::{IcrParams, Pose2};
use crate::ms_trajectory::{reference_final_position, MsTrajectory, TrajectoryFile};
use crate::optimizer::{AlmRound, IterationRecord};
use crate::planner::{plan_observed, sample_query, Plan, PlanRequest, QueryParams, StageTimings, StartState};
use crate::replanner::ReplanEvent;
use crate::sim::{run_closed_loop, track_trajectory, ClosedLoopParams, Scenario, SimResult, TimingRow};
use crate::tracker::ControlLogRow;

/// Derive an independent stream seed from a base seed and indices.
pub fn stream_seed(base: u64, parts: &[u64]) -> u64 {
    let mut z = base;
    for &p in parts {
        z = z.wrapping_add(0x9E37_79B9_7F4A_7C15).wrapping_add(p);
        z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
        z = (z ^ (z >> 27)).wrapping_mul(0x94D4_9BCA_133E_11EB);
        z ^= z >> 31;
    }
    z
}

fn wall(cfg: &ScenarioConfig, seconds: f64) -> f64 {
    if cfg.record_timings {
        seconds
    } else {
        0.0
    }
}

fn request<'a>(
    cfg: &'a ScenarioConfig,
    esdf: &'a EsdfMap,
    icr: IcrParams,
    start: Pose2,
    goal: [f64; 2],
) -> PlanRequest<'a> {
    PlanRequest {
        esdf,
        config: &cfg.problem,
        icr,
        start: StartState::at_rest(start),
        goal,
        goal_heading: cfg.plan.goal_heading,
        truncated: false,
    }
}

fn final_error(plan: &Plan, n: usize, goal: [f64; 2]) -> f64 {
    let p = plan.result.trajectory.integrate(n).final_position();
    (p[0] - goal[0]).hypot(p[1] - goal[1])
}

impl CsvRecord for IterationRecord {
    const COLUMNS: &'static [&'static str] = &["stage", "outer", "iteration", "value", "grad_norm", "residual", "rho"];
}

// ---------------------------------------------------------------- plan

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PlanReport {
    pub world: String,
    pub start: Pose2,
    pub goal: [f64; 2],
    pub status: String,
    pub residual: f64,
    pub max_violation: f64,
    pub segments: usize,
    pub path_length: f64,
    pub metrics: RunMetrics,
    pub timings: StageTimings,
    pub rounds: Vec<AlmRound>,
}

/// Single solve; the start and goal come from `cfg.plan` or are sampled.
pub fn run_plan(
    cfg: &ScenarioConfig,
    observe: &mut dyn FnMut(&IterationRecord),
) -> Result<(PlanReport, MsTrajectory), BenchError> {
    let world = cfg.world.build(0)?;
    let esdf = build_esdf(world.grid);
    let mut rng = ChaCha8Rng::seed_from_u64(stream_seed(cfg.seed, &[0]));
    let (start, goal) = match (cfg.plan.start, cfg.plan.goal) {
        (Some(s), Some(g)) => (Pose2::new(s[0], s[1], s[2]), g),
        (s, g) => {
            let (ps, pg, _) = sample_query(&esdf, &cfg.query, &mut rng)
                .ok_or_else(|| BenchError::Config("no feasible start/goal found".into()))?;
            (s.map_or(ps, |s| Pose2::new(s[0], s[1], s[2])), g.unwrap_or(pg))
        }
    };
    let plan = plan_observed(&request(cfg, &esdf, cfg.icr, start, goal), observe)?;
    let n = cfg.problem.intervals;
    let err = final_error(&plan, n, goal);
    let traj = plan.result.trajectory.clone();
    let mut timings = plan.timings;
    if !cfg.record_timings {
        timings = StageTimings::default();
    }
    let report = PlanReport {
        world: cfg.world.kind.as_str().into(),
        start,
        goal,
        status: plan.result.status.name().into(),
        residual: plan.result.residual,
        max_violation: plan.result.max_violation(),
        segments: traj.num_segments(),
        path_length: plan.path.length,
        metrics: RunMetrics::compute(&traj, n, timings.total(), plan.result.succeeded(), err),
        timings,
        rounds: plan.result.rounds.clone(),
    };
    Ok((report, traj))
}

// ---------------------------------------------------------------- integral

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IntegralRow {
    pub world: String,
    pub run: usize,
    pub world_seed: u64,
    pub path_length: f64,
    pub length: f64,
    pub duration: f64,
    pub segments: usize,
    /// Simpson final position at `n` vs the oracle, m.
    pub error: f64,
    /// Same at `2n`.
    pub error_2n: f64,
    /// Solve attempts spent on this run.
    pub attempts: usize,
}

impl CsvRecord for IntegralRow {
    const COLUMNS: &'static [&'static str] = &[
        "world",
        "run",
        "world_seed",
        "path_length",
        "length",
        "duration",
        "segments",
        "error",
        "error_2n",
        "attempts",
    ];
}

/// Box-plot summary; outliers lie beyond 1.5 IQR from the quartiles.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BoxSummary {
    pub world: String,
    pub count: usize,
    /// Runs dropped after exhausting their attempts.
    pub dropped: usize,
    pub min: Option<f64>,
    pub q1: Option<f64>,
    pub median: Option<f64>,
    pub q3: Option<f64>,
    pub max: Option<f64>,
    pub lower_whisker: Option<f64>,
    pub upper_whisker: Option<f64>,
    pub outliers: usize,
    /// Fraction of runs with error below 1e-5 m.
    pub frac_below_1e5: Option<f64>,
    /// Median of `error / error_2n` over runs whose error exceeds 1e-13 m.
    pub median_ratio: Option<f64>,
}

impl CsvRecord for BoxSummary {
    const COLUMNS: &'static [&'static str] = &[
        "world",
        "count",
        "dropped",
        "min",
        "q1",
        "median",
        "q3",
        "max",
        "lower_whisker",
        "upper_whisker",
        "outliers",
        "frac_below_1e5",
        "median_ratio",
    ];
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IntegralReport {
    pub rows: Vec<IntegralRow>,
    pub summary: Vec<BoxSummary>,
}

/// Linear-interpolation quantile of sorted data.
pub fn quantile(sorted: &[f64], q: f64) -> Option<f64> {
    if sorted.is_empty() {
        return None;
    }
    let pos = q * (sorted.len() - 1) as f64;
    let lo = pos.floor() as usize;
    let hi = pos.ceil() as usize;
    Some(sorted[lo] + (pos - lo as f64) * (sorted[hi] - sorted[lo]))
}

fn sorted(mut v: Vec<f64>) -> Vec<f64> {
    v.sort_by(f64::total_cmp);
    v
}

pub fn box_summary(world: &str, rows: &[&IntegralRow], dropped: usize) -> BoxSummary {
    let e = sorted(rows.iter().map(|r| r.error).collect());
    let (q1, median, q3) = (quantile(&e, 0.25), quantile(&e, 0.5), quantile(&e, 0.75));
    let inside: Vec<f64> = match (q1, q3) {
        (Some(a), Some(b)) => {
            let iqr = b - a;
            e.iter().copied().filter(|v| (a - 1.5 * iqr..=b + 1.5 * iqr).contains(v)).collect()
        }
        _ => Vec::new(),
    };
    let ratios =
        sorted(rows.iter().filter(|r| r.error > 1e-13).map(|r| r.error / r.error_2n.max(f64::MIN_POSITIVE)).collect());
    BoxSummary {
        world: world.into(),
        count: e.len(),
        dropped,
        min: e.first().copied(),
        q1,
        median,
        q3,
        max: e.last().copied(),
        lower_whisker: inside.first().copied(),
        upper_whisker: inside.last().copied(),
        outliers: e.len() - inside.len(),
        frac_below_1e5: (!e.is_empty()).then(|| e.iter().filter(|v| **v < 1e-5).count() as f64 / e.len() as f64),
        median_ratio: quantile(&ratios, 0.5),
    }
}

fn world_kind(cfg: &ScenarioConfig, name: WorldName) -> Result<WorldKind, BenchError> {
    cfg.world.kind_for(name)
}

/// Solve random queries per world and compare the Simpson final position with
/// a refined Gauss-Legendre oracle of the same polynomials.
pub fn run_integral_error_experiment(cfg: &ScenarioConfig) -> Result<IntegralReport, BenchError> {
    let n = cfg.problem.intervals;
    let panels = cfg.integral.oracle_factor * n;
    let mut rows = Vec::new();
    let mut summary = Vec::new();
    for (wi, &name) in cfg.integral.worlds.iter().enumerate() {
        let kind = world_kind(cfg, name)?;
        let fixed = matches!(kind, WorldKind::Spiral | WorldKind::FromFile(_));
        let shared = if fixed { Some(build_esdf(generate_world(&kind, cfg.world.seed)?.grid)) } else { None };
        let first = rows.len();
        let mut dropped = 0;
        for run in 0..cfg.integral.runs {
            let world_seed = cfg.world.seed.wrapping_add(run as u64);
            let owned;
            let esdf = match &shared {
                Some(e) => e,
                None => {
                    owned = build_esdf(generate_world(&kind, world_seed)?.grid);
                    &owned
                }
            };
            let mut rng = ChaCha8Rng::seed_from_u64(stream_seed(cfg.seed, &[1, wi as u64, run as u64]));
            let mut done = false;
            for attempt in 1..=cfg.integral.max_attempts {
                let Some((start, goal, path_length)) = sample_query(esdf, &cfg.query, &mut rng) else { break };
                let Ok(plan) = plan_observed(&request(cfg, esdf, cfg.icr, start, goal), &mut |_| {}) else { continue };
                if !plan.result.succeeded() {
                    continue;
                }
                let traj = &plan.result.trajectory;
                let oracle = reference_final_position(traj, panels);
                let err = |k: usize| {
                    let p = traj.integrate(k).final_position();
                    (p[0] - oracle[0]).hypot(p[1] - oracle[1])
                };
                let m = RunMetrics::compute(traj, n, 0.0, true, 0.0);
                rows.push(IntegralRow {
                    world: name.as_str().into(),
                    run,
                    world_seed: if fixed { cfg.world.seed } else { world_seed },
                    path_length,
                    length: m.tl,
                    duration: m.td,
                    segments: traj.num_segments(),
                    error: err(n),
                    error_2n: err(2 * n),
                    attempts: attempt,
                });
                done = true;
                break;
            }
            if !done {
                dropped += 1;
            }
        }
        let mine: Vec<&IntegralRow> = rows[first..].iter().collect();
        summary.push(box_summary(name.as_str(), &mine, dropped));
    }
    Ok(IntegralReport { rows, summary })
}

// ---------------------------------------------------------------- benchmark

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BenchRow {
    pub obstacles: usize,
    pub bucket: String,
    pub run: usize,
    pub world_seed: u64,
    pub path_length: f64,
    pub status: String,
    pub max_violation: Option<f64>,
    pub ct: f64,
    pub tl: f64,
    pub td: f64,
    pub mv: f64,
    pub success: bool,
    pub mla: f64,
    pub mlj: f64,
    pub mya: f64,
    pub myj: f64,
    pub final_error: Option<f64>,
    /// Mean tracking error of the slip-aware plan on the slipping plant.
    pub track_aware: Option<f64>,
    /// Same for the plan made without lateral slip.
    pub track_naive: Option<f64>,
}

impl CsvRecord for BenchRow {
    const COLUMNS: &'static [&'static str] = &[
        "obstacles",
        "bucket",
        "run",
        "world_seed",
        "path_length",
        "status",
        "max_violation",
        "ct",
        "tl",
        "td",
        "mv",
        "success",
        "mla",
        "mlj",
        "mya",
        "myj",
        "final_error",
        "track_aware",
        "track_naive",
    ];
}

/// Per (obstacle count, bucket) aggregate; metric means are over successes.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BenchSummary {
    pub obstacles: usize,
    pub bucket: String,
    pub runs: usize,
    pub sr: Option<f64>,
    pub ct: Option<f64>,
    pub tl: Option<f64>,
    pub td: Option<f64>,
    pub mv: Option<f64>,
    pub mla: Option<f64>,
    pub mlj: Option<f64>,
    pub mya: Option<f64>,
    pub myj: Option<f64>,
    pub track_aware: Option<f64>,
    pub track_naive: Option<f64>,
}

impl CsvRecord for BenchSummary {
    const COLUMNS: &'static [&'static str] = &[
        "obstacles",
        "bucket",
        "runs",
        "sr",
        "ct",
        "tl",
        "td",
        "mv",
        "mla",
        "mlj",
        "mya",
        "myj",
        "track_aware",
        "track_naive",
    ];
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BenchReport {
    pub rows: Vec<BenchRow>,
    pub summary: Vec<BenchSummary>,
}

fn bucket_label(lo: f64, hi: f64) -> String {
    if hi.is_finite() {
        format!("{lo}-{hi}")
    } else {
        format!("{lo}+")
    }
}

fn mean(v: impl Iterator<Item = f64>) -> Option<f64> {
    let (s, c) = v.fold((0.0, 0usize), |(s, c), x| (s + x, c + 1));
    (c > 0).then(|| s / c as f64)
}

/// Mean tracking errors of the slip-aware plan and of a plan for the same
/// query made without lateral slip, both tracked on the slipping plant.
pub fn slip_tracking_pair(
    cfg: &ScenarioConfig,
    esdf: &EsdfMap,
    aware: &MsTrajectory,
    start: Pose2,
    goal: [f64; 2],
) -> Option<(f64, f64)> {
    let icr = cfg.icr;
    let naive_icr = IcrParams { x_iv: 0.0, ..icr };
    let naive = plan_observed(&request(cfg, esdf, naive_icr, start, goal), &mut |_| {}).ok()?;
    if !naive.result.succeeded() {
        return None;
    }
    let hz = cfg.tracker.wheel(&icr);
    let a = track_trajectory(aware, &hz, &icr, &icr, 1.0).ok()?;
    let b = track_trajectory(&naive.result.trajectory, &hz, &icr, &icr, 1.0).ok()?;
    Some((a.mean_error, b.mean_error))
}

/// Success rate and trajectory quality per obstacle count and path-length
/// bucket on random-square worlds.
pub fn run_planning_benchmark(cfg: &ScenarioConfig) -> Result<BenchReport, BenchError> {
    let n = cfg.problem.intervals;
    let mut edges = vec![0.0];
    edges.extend(&cfg.bench.bucket_edges);
    edges.push(f64::INFINITY);
    let mut rows = Vec::new();
    let mut summary = Vec::new();
    for (ci, &count) in cfg.bench.obstacle_counts.iter().enumerate() {
        for (bi, w) in edges.windows(2).enumerate() {
            let (lo, hi) = (w[0], w[1]);
            let label = bucket_label(lo, hi);
            let first = rows.len();
            let query = QueryParams { max_path_length: hi, ..cfg.query };
            for run in 0..cfg.bench.runs_per_bucket {
                let world_seed = stream_seed(cfg.world.seed, &[ci as u64, bi as u64, run as u64]);
                let kind = WorldKind::Random { count, size: cfg.bench.obstacle_size };
                let esdf = build_esdf(generate_world(&kind, world_seed)?.grid);
                let mut rng = ChaCha8Rng::seed_from_u64(stream_seed(cfg.seed, &[2, ci as u64, bi as u64, run as u64]));
                let picked = (0..cfg.bench.max_attempts)
                    .filter_map(|_| sample_query(&esdf, &query, &mut rng))
                    .find(|q| q.2 >= lo);
                let Some((start, goal, path_length)) = picked else { continue };
                let mut row = BenchRow {
                    obstacles: count,
                    bucket: label.clone(),
                    run,
                    world_seed,
                    path_length,
                    status: "error".into(),
                    max_violation: None,
                    ct: 0.0,
                    tl: 0.0,
                    td: 0.0,
                    mv: 0.0,
                    success: false,
                    mla: 0.0,
                    mlj: 0.0,
                    mya: 0.0,
                    myj: 0.0,
                    final_error: None,
                    track_aware: None,
                    track_naive: None,
                };
                if let Ok(plan) = plan_observed(&request(cfg, &esdf, cfg.icr, start, goal), &mut |_| {}) {
                    let traj = &plan.result.trajectory;
                    let m = RunMetrics::compute(
                        traj,
                        n,
                        wall(cfg, plan.timings.total()),
                        plan.result.succeeded(),
                        final_error(&plan, n, goal),
                    );
                    row = BenchRow {
                        status: plan.result.status.name().into(),
                        max_violation: Some(plan.result.max_violation()),
                        ct: m.ct,
                        tl: m.tl,
                        td: m.td,
                        mv: m.mv,
                        success: m.success,
                        mla: m.mla,
                        mlj: m.mlj,
                        mya: m.mya,
                        myj: m.myj,
                        final_error: Some(m.final_error),
                        ..row
                    };
                    if cfg.bench.compare_tracking && m.success {
                        if let Some((a, b)) = slip_tracking_pair(cfg, &esdf, traj, start, goal) {
                            row.track_aware = Some(a);
                            row.track_naive = Some(b);
                        }
                    }
                }
                rows.push(row);
            }
            let mine = &rows[first..];
            let ok: Vec<&BenchRow> = mine.iter().filter(|r| r.success).collect();
            let pairs: Vec<(f64, f64)> = mine.iter().filter_map(|r| Some((r.track_aware?, r.track_naive?))).collect();
            summary.push(BenchSummary {
                obstacles: count,
                bucket: label,
                runs: mine.len(),
                sr: (!mine.is_empty()).then(|| ok.len() as f64 / mine.len() as f64),
                ct: mean(ok.iter().map(|r| r.ct)),
                tl: mean(ok.iter().map(|r| r.tl)),
                td: mean(ok.iter().map(|r| r.td)),
                mv: mean(ok.iter().map(|r| r.mv)),
                mla: mean(ok.iter().map(|r| r.mla)),
                mlj: mean(ok.iter().map(|r| r.mlj)),
                mya: mean(ok.iter().map(|r| r.mya)),
                myj: mean(ok.iter().map(|r| r.myj)),
                track_aware: mean(pairs.iter().map(|p| p.0)),
                track_naive: mean(pairs.iter().map(|p| p.1)),
            });
        }
    }
    Ok(BenchReport { rows, summary })
}

// ---------------------------------------------------------------- closed loop

impl CsvRecord for SimResult {
    const COLUMNS: &'static [&'static str] = &[
        "scenario",
        "seed",
        "success",
        "collision_time",
        "final_time",
        "goal_error",
        "mean_tracking_error",
        "max_tracking_error",
        "replans",
        "emergency_stops",
    ];
}

/// Timing row tagged with its run seed.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct RunTimingRow {
    pub seed: u64,
    pub tick: u64,
    pub t: f64,
    pub jps: f64,
    pub preprocess: f64,
    pub optimization: f64,
    pub total: f64,
}

impl CsvRecord for RunTimingRow {
    const COLUMNS: &'static [&'static str] = &["seed", "tick", "t", "jps", "preprocess", "optimization", "total"];
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RunEvent {
    pub seed: u64,
    #[serde(flatten)]
    pub event: ReplanEvent,
}

#[derive(Debug, Clone)]
pub struct ClosedLoopReport {
    pub results: Vec<SimResult>,
    pub timings: Vec<RunTimingRow>,
    pub events: Vec<RunEvent>,
    /// Control logs by run seed.
    pub control: Vec<(u64, Vec<ControlLogRow>)>,
}

impl ClosedLoopReport {
    pub fn collisions(&self) -> usize {
        self.results.iter().filter(|r| r.collision_time.is_some()).count()
    }

    /// Mean of each timing column, ms: `[jps, preprocess, optimization, total]`.
    pub fn mean_timings(&self) -> [Option<f64>; 4] {
        [
            mean(self.timings.iter().map(|r| r.jps)),
            mean(self.timings.iter().map(|r| r.preprocess)),
            mean(self.timings.iter().map(|r| r.optimization)),
            mean(self.timings.iter().map(|r| r.total)),
        ]
    }
}

pub fn closed_loop_params(cfg: &ScenarioConfig) -> ClosedLoopParams {
    ClosedLoopParams {
        sim: cfg.sim,
        tracker: cfg.tracker,
        policy: cfg.policy,
        problem: cfg.problem.clone(),
        model_icr: cfg.icr,
        plant_icr: cfg.closed_loop.plant_icr.unwrap_or(cfg.icr),
    }
}

pub fn build_scenario(cfg: &ScenarioConfig, seed: u64) -> Result<Scenario, BenchError> {
    Ok(match cfg.closed_loop.scenario {
        ScenarioName::UShape => Scenario::u_shape(seed),
        ScenarioName::PopUp => Scenario::pop_up(seed),
        ScenarioName::Custom => {
            let (Some(s), Some(g)) = (cfg.plan.start, cfg.plan.goal) else {
                return Err(BenchError::Config("custom scenario needs plan.start and plan.goal".into()));
            };
            Scenario::custom(cfg.world.build(0)?.grid, Pose2::new(s[0], s[1], s[2]), g)
        }
    })
}

/// Closed-loop runs with seeds `cfg.seed .. cfg.seed + runs`.
pub fn run_closed_loop_experiment(cfg: &ScenarioConfig) -> Result<ClosedLoopReport, BenchError> {
    let params = closed_loop_params(cfg);
    let mut report =
        ClosedLoopReport { results: Vec::new(), timings: Vec::new(), events: Vec::new(), control: Vec::new() };
    for k in 0..cfg.closed_loop.runs as u64 {
        let seed = cfg.seed.wrapping_add(k);
        let scenario = build_scenario(cfg, seed)?;
        let log = run_closed_loop(&scenario, &params, seed);
        report.timings.extend(log.timings.iter().map(|r: &TimingRow| RunTimingRow {
            seed,
            tick: r.tick,
            t: r.t,
            jps: wall(cfg, r.jps),
            preprocess: wall(cfg, r.preprocess),
            optimization: wall(cfg, r.optimization),
            total: wall(cfg, r.total),
        }));
        report.events.extend(log.events.into_iter().map(|mut e| {
            e.solve_time = wall(cfg, e.solve_time);
            if !cfg.record_timings {
                e.timings = e.timings.map(|_| StageTimings::default());
                e.late = false;
            }
            RunEvent { seed, event: e }
        }));
        if cfg.closed_loop.control_logs {
            report.control.push((seed, log.control));
        }
        report.results.push(log.result);
    }
    Ok(report)
}

// ---------------------------------------------------------------- export

/// Write the outputs of `experiment` into `dir`. Returns the names of the
/// files written there; the iteration trace goes to `dump_iterations` as
/// given.
pub fn run_and_export(
    cfg: &ScenarioConfig,
    experiment: Experiment,
    dir: &Path,
    dump_iterations: Option<&Path>,
) -> Result<Vec<String>, BenchError> {
    let mut written = Vec::new();
    let mut put = |name: &str| {
        written.push(name.to_string());
        dir.join(name)
    };
    match experiment {
        Experiment::Plan => {
            let mut trace = Vec::new();
            let (report, traj) = run_plan(cfg, &mut |r| trace.push(*r))?;
            write_json_file(&traj.to_file(), &put("trajectory.json"))?;
            write_json_file(&report, &put("plan.json"))?;
            if let Some(path) = dump_iterations {
                write_csv_file(&trace, path)?;
            }
        }
        Experiment::Integral => {
            let r = run_integral_error_experiment(cfg)?;
            write_csv_file(&r.rows, &put("integral.csv"))?;
            write_csv_file(&r.summary, &put("integral_summary.csv"))?;
            write_json_file(&r, &put("integral.json"))?;
        }
        Experiment::Bench => {
            let r = run_planning_benchmark(cfg)?;
            write_csv_file(&r.rows, &put("bench_runs.csv"))?;
            write_csv_file(&r.summary, &put("bench_summary.csv"))?;
            write_json_file(&r, &put("bench.json"))?;
        }
        Experiment::Sim => {
            let r = run_closed_loop_experiment(cfg)?;
            write_csv_file(&r.results, &put("sim_results.csv"))?;
            write_csv_file(&r.timings, &put("timing.csv"))?;
            write_json_lines_file(&r.events, &put("events.jsonl"))?;
            for (seed, rows) in &r.control {
                write_csv_file(rows, &put(&format!("control_{seed}.csv")))?;
            }
        }
    }
    Ok(written)
}

/// Trajectory file written by the `plan` experiment.
pub fn load_trajectory(path: &Path) -> Result<MsTrajectory, BenchError> {
    let text = std::fs::read_to_string(path).map_err(|e| BenchError::Config(format!("{}: {e}", path.display())))?;
    let file: TrajectoryFile = serde_json::from_str(&text).map_err(|e| BenchError::Config(e.to_string()))?;
    Ok(MsTrajectory::try_from(file)?)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small() -> ScenarioConfig {
        let mut cfg = ScenarioConfig { record_timings: false, ..Default::default() };
        cfg.integral.runs = 3;
        cfg.integral.worlds = vec![WorldName::Sparse];
        cfg.bench.obstacle_counts = vec![50];
        cfg.bench.runs_per_bucket = 1;
        cfg.closed_loop.runs = 1;
        cfg.closed_loop.scenario = ScenarioName::PopUp;
        cfg
    }

    #[test]
    fn quantiles_and_box() {
        let v = [1.0, 2.0, 3.0, 4.0, 100.0];
        assert_eq!(quantile(&v, 0.5), Some(3.0));
        assert_eq!(quantile(&v, 0.25), Some(2.0));
        assert_eq!(quantile(&[], 0.5), None);
        let rows: Vec<IntegralRow> = v
            .iter()
            .map(|&e| IntegralRow {
                world: "w".into(),
                run: 0,
                world_seed: 0,
                path_length: 0.0,
                length: 0.0,
                duration: 0.0,
                segments: 1,
                error: e,
                error_2n: e / 16.0,
                attempts: 1,
            })
            .collect();
        let b = box_summary("w", &rows.iter().collect::<Vec<_>>(), 0);
        assert_eq!((b.outliers, b.upper_whisker, b.median_ratio), (1, Some(4.0), Some(16.0)));
    }

    #[test]
    fn stream_seeds_differ() {
        assert_ne!(stream_seed(0, &[1, 2]), stream_seed(0, &[2, 1]));
        assert_eq!(stream_seed(5, &[1]), stream_seed(5, &[1]));
    }

    #[test]
    fn exports_are_byte_identical_under_a_seed() {
        let cfg = small();
        let read_all = |dir: &Path, names: &[String]| -> Vec<Vec<u8>> {
            names.iter().map(|n| std::fs::read(dir.join(n)).unwrap()).collect()
        };
        for exp in [Experiment::Integral, Experiment::Bench, Experiment::Sim, Experiment::Plan] {
            let a = tempfile::tempdir().unwrap();
            let b = tempfile::tempdir().unwrap();
            let na = run_and_export(&cfg, exp, a.path(), None).unwrap();
            let nb = run_and_export(&cfg, exp, b.path(), None).unwrap();
            assert_eq!(na, nb);
            assert_eq!(read_all(a.path(), &na), read_all(b.path(), &nb), "{exp:?}");
        }
    }

    #[test]
    fn reports_round_trip_through_json() {
        let cfg = small();
        let r = run_integral_error_experiment(&cfg).unwrap();
        assert_eq!(r.rows.len(), 3);
        let back: IntegralReport = serde_json::from_str(&serde_json::to_string(&r).unwrap()).unwrap();
        assert_eq!(back, r);
        let b = run_planning_benchmark(&cfg).unwrap();
        let back: BenchReport = serde_json::from_str(&serde_json::to_string(&b).unwrap()).unwrap();
        assert_eq!(back.rows.len(), b.rows.len());
    }

    #[test]
    fn plan_trajectory_round_trips() {
        let cfg = small();
        let dir = tempfile::tempdir().unwrap();
        let dump = dir.path().join("iters.csv");
        run_and_export(&cfg, Experiment::Plan, dir.path(), Some(&dump)).unwrap();
        let traj = load_trajectory(&dir.path().join("trajectory.json")).unwrap();
        let report: PlanReport =
            serde_json::from_str(&std::fs::read_to_string(dir.path().join("plan.json")).unwrap()).unwrap();
        assert_eq!(traj.num_segments(), report.segments);
        let trace = std::fs::read_to_string(dump).unwrap();
        assert!(trace.starts_with("stage,outer,iteration"));
        assert!(trace.lines().count() > 2);
    }
}
