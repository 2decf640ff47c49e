//! One start/goal query on the sparse world, start to finish.

use ddopt::bench::RunMetrics;
use ddopt::grid_world::{build_esdf, generate_world, WorldKind};
use ddopt::kinematics::IcrParams;
use ddopt::optimizer::ProblemConfig;
use ddopt::planner::{plan, sample_query, PlanRequest, QueryParams, StartState};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let esdf = build_esdf(generate_world(&WorldKind::Sparse, 4)?.grid);
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let (start, goal, path_len) = sample_query(&esdf, &QueryParams::default(), &mut rng).ok_or("no query")?;
    let config = ProblemConfig::default();
    let req = PlanRequest {
        esdf: &esdf,
        config: &config,
        icr: IcrParams::new(0.3, -0.3, 0.1)?,
        start: StartState::at_rest(start),
        goal,
        goal_heading: None,
        truncated: false,
    };
    let p = plan(&req)?;
    let r = &p.result;
    let traj = &r.trajectory;
    println!("grid path {path_len:.2} m, {} segments", traj.num_segments());
    println!("status {}, final error {:.2e} m, max violation {:.2e}", r.status.name(), r.residual, r.max_violation());
    let m = RunMetrics::compute(traj, config.intervals, p.timings.total(), r.succeeded(), r.residual);
    println!("duration {:.2} s, length {:.2} m, mean speed {:.2} m/s, solve {:.1} ms", m.td, m.tl, m.mv, 1e3 * m.ct);
    let json = traj.to_json();
    let back = ddopt::ms_trajectory::MsTrajectory::from_json(&json)?;
    println!("trajectory JSON {} bytes, round trip exact: {}", json.len(), back.coeffs() == traj.coeffs());
    Ok(())
}
