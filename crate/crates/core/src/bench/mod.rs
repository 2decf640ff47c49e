//! Experiment harness: scenario configuration, batch experiments and
//! plot-ready exports.

mod experiments;
mod metrics;

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::grid_world::{generate_world, GeneratedWorld, GridError, WorldKind};
use crate::kinematics::IcrParams;
use crate::optimizer::ProblemConfig;
use crate::planner::QueryParams;
use crate::replanner::ReplanPolicy;
use crate::sim::SimConfig;
use crate::tracker::HorizonConfig;

pub use experiments::*;
pub use metrics::RunMetrics;

#[derive(Debug, Error)]
pub enum BenchError {
    #[error("config: {0}")]
    Config(String),
    #[error(transparent)]
    Grid(#[from] GridError),
    #[error(transparent)]
    Export(#[from] crate::export::ExportError),
    #[error(transparent)]
    Plan(#[from] crate::planner::PlanError),
    #[error(transparent)]
    Trajectory(#[from] crate::ms_trajectory::TrajectoryError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Experiment {
    Plan,
    Bench,
    Integral,
    Sim,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum WorldName {
    Sparse,
    Dense,
    Spiral,
    Random,
    File,
}

impl WorldName {
    pub fn as_str(self) -> &'static str {
        match self {
            WorldName::Sparse => "sparse",
            WorldName::Dense => "dense",
            WorldName::Spiral => "spiral",
            WorldName::Random => "random",
            WorldName::File => "file",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct WorldConfig {
    pub kind: WorldName,
    /// Base seed of generated worlds.
    pub seed: u64,
    /// Obstacle count of `random` worlds.
    pub count: usize,
    /// Obstacle side length of `random` worlds, m.
    pub size: f64,
    /// Map file of `file` worlds.
    pub map: Option<PathBuf>,
}

impl Default for WorldConfig {
    fn default() -> Self {
        WorldConfig { kind: WorldName::Sparse, seed: 0, count: 100, size: 0.8, map: None }
    }
}

impl WorldConfig {
    pub fn kind_for(&self, name: WorldName) -> Result<WorldKind, BenchError> {
        Ok(match name {
            WorldName::Sparse => WorldKind::Sparse,
            WorldName::Dense => WorldKind::Dense,
            WorldName::Spiral => WorldKind::Spiral,
            WorldName::Random => WorldKind::Random { count: self.count, size: self.size },
            WorldName::File => WorldKind::FromFile(
                self.map.clone().ok_or_else(|| BenchError::Config("world.kind = \"file\" needs world.map".into()))?,
            ),
        })
    }

    /// The configured world with seed offset `offset`.
    pub fn build(&self, offset: u64) -> Result<GeneratedWorld, BenchError> {
        Ok(generate_world(&self.kind_for(self.kind)?, self.seed.wrapping_add(offset))?)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct IntegralConfig {
    pub worlds: Vec<WorldName>,
    pub runs: usize,
    /// Oracle refinement: Gauss-Legendre panels per segment = factor × n.
    pub oracle_factor: usize,
    /// Solve attempts per run before it is dropped.
    pub max_attempts: usize,
}

impl Default for IntegralConfig {
    fn default() -> Self {
        IntegralConfig {
            worlds: vec![WorldName::Sparse, WorldName::Dense, WorldName::Spiral],
            runs: 300,
            oracle_factor: 100,
            max_attempts: 5,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct BenchConfig {
    pub obstacle_counts: Vec<usize>,
    pub obstacle_size: f64,
    /// Path-length bucket edges, m; buckets are `[0, e0), [e0, e1), …, [e_last, ∞)`.
    pub bucket_edges: Vec<f64>,
    pub runs_per_bucket: usize,
    /// Also plan without lateral slip and track both plans on the slipping
    /// plant.
    pub compare_tracking: bool,
    /// Query samples tried per run before the bucket is left short.
    pub max_attempts: usize,
}

impl Default for BenchConfig {
    fn default() -> Self {
        BenchConfig {
            obstacle_counts: vec![50, 100, 200],
            obstacle_size: 0.8,
            bucket_edges: vec![10.0, 20.0],
            runs_per_bucket: 20,
            compare_tracking: false,
            max_attempts: 200,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ScenarioName {
    UShape,
    PopUp,
    /// The configured world with `plan.start` and `plan.goal`.
    Custom,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ClosedLoopConfig {
    pub scenario: ScenarioName,
    pub runs: usize,
    /// Plant ICRs; defaults to the model ICRs.
    pub plant_icr: Option<IcrParams>,
    /// Write per-run control logs.
    pub control_logs: bool,
}

impl Default for ClosedLoopConfig {
    fn default() -> Self {
        ClosedLoopConfig { scenario: ScenarioName::UShape, runs: 20, plant_icr: None, control_logs: true }
    }
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PlanConfig {
    /// `[x, y, θ]`; sampled when absent.
    pub start: Option<[f64; 3]>,
    pub goal: Option<[f64; 2]>,
    pub goal_heading: Option<f64>,
}

/// Top-level experiment configuration (TOML or JSON).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ScenarioConfig {
    pub experiment: Option<Experiment>,
    pub seed: u64,
    pub out: PathBuf,
    /// Write wall-clock columns; when false they are zero so outputs are
    /// byte-identical across runs.
    pub record_timings: bool,
    pub world: WorldConfig,
    pub problem: ProblemConfig,
    pub icr: IcrParams,
    pub policy: ReplanPolicy,
    pub tracker: HorizonConfig,
    pub sim: SimConfig,
    pub query: QueryParams,
    pub integral: IntegralConfig,
    pub bench: BenchConfig,
    pub closed_loop: ClosedLoopConfig,
    pub plan: PlanConfig,
}

impl Default for ScenarioConfig {
    fn default() -> Self {
        ScenarioConfig {
            experiment: None,
            seed: 0,
            out: PathBuf::from("out"),
            record_timings: true,
            world: WorldConfig::default(),
            problem: ProblemConfig::default(),
            icr: IcrParams::default(),
            policy: ReplanPolicy::default(),
            tracker: HorizonConfig::default(),
            sim: SimConfig::default(),
            query: QueryParams::default(),
            integral: IntegralConfig::default(),
            bench: BenchConfig::default(),
            closed_loop: ClosedLoopConfig::default(),
            plan: PlanConfig::default(),
        }
    }
}

impl ScenarioConfig {
    /// Parse TOML, or JSON when `is_json`.
    pub fn parse(text: &str, is_json: bool) -> Result<Self, BenchError> {
        let cfg: ScenarioConfig = if is_json {
            serde_json::from_str(text).map_err(|e| BenchError::Config(e.to_string()))?
        } else {
            toml::from_str(text).map_err(|e| BenchError::Config(e.to_string()))?
        };
        cfg.validate()?;
        Ok(cfg)
    }

    /// Load by extension: `.json` is JSON, anything else TOML.
    pub fn load(path: &Path) -> Result<Self, BenchError> {
        let text = std::fs::read_to_string(path).map_err(|e| BenchError::Config(format!("{}: {e}", path.display())))?;
        let is_json = path.extension().is_some_and(|e| e.eq_ignore_ascii_case("json"));
        Self::parse(&text, is_json)
    }

    pub fn validate(&self) -> Result<(), BenchError> {
        let err = |m: String| Err(BenchError::Config(m));
        self.problem.validate().map_err(|e| BenchError::Config(e.to_string()))?;
        if !self.icr.is_valid() {
            return err(format!("icr needs y_il > y_ir, got {:?}", self.icr));
        }
        if let Some(p) = self.closed_loop.plant_icr.filter(|p| !p.is_valid()) {
            return err(format!("closed_loop.plant_icr needs y_il > y_ir, got {p:?}"));
        }
        self.policy.validate(self.problem.solver.e_max).map_err(BenchError::Config)?;
        self.tracker.validate().map_err(BenchError::Config)?;
        if !(self.sim.dt > 0.0 && self.sim.control_dt >= self.sim.dt && self.sim.max_time > 0.0) {
            return err("sim needs 0 < dt <= control_dt and max_time > 0".into());
        }
        if self.world.kind == WorldName::File && self.world.map.is_none() {
            return err("world.kind = \"file\" needs world.map".into());
        }
        if self.integral.oracle_factor == 0 || self.integral.max_attempts == 0 {
            return err("integral.oracle_factor and integral.max_attempts must be positive".into());
        }
        if self.bench.bucket_edges.windows(2).any(|w| w[0] >= w[1]) || self.bench.bucket_edges.iter().any(|e| *e <= 0.0)
        {
            return err("bench.bucket_edges must be positive and increasing".into());
        }
        if !(self.query.clearance >= 0.0 && self.query.max_path_length > 0.0) {
            return err("query needs clearance >= 0 and max_path_length > 0".into());
        }
        Ok(())
    }
}
