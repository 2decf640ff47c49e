//! Track a planned trajectory on a slipping robot with the wheel-input NMPC,
//! once with the slip-aware plan and once with a plan that ignores slip.

use ddopt::grid_world::{build_esdf, generate_world, WorldKind};
use ddopt::kinematics::{IcrParams, Pose2};
use ddopt::optimizer::ProblemConfig;
use ddopt::planner::{plan, PlanRequest, StartState};
use ddopt::sim::track_trajectory;
use ddopt::tracker::HorizonConfig;

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let world = generate_world(&WorldKind::Sparse, 11)?;
    let esdf = build_esdf(world.grid);
    let config = ProblemConfig::default();
    let truth = IcrParams::new(0.3, -0.3, 0.2)?;
    let start = StartState::at_rest(Pose2::new(3.0, 3.0, 0.0));
    let goal = [14.0, 9.0];
    let tracker = HorizonConfig::default().wheel(&truth);
    for (label, icr) in [("slip-aware", truth), ("no slip", IcrParams { x_iv: 0.0, ..truth })] {
        let req = PlanRequest { esdf: &esdf, config: &config, icr, start, goal, goal_heading: None, truncated: false };
        let p = plan(&req)?;
        let stats = track_trajectory(&p.result.trajectory, &tracker, &truth, &truth, 1.0)?;
        println!(
            "{label:10}: plan {}, tracking error mean {:.4} m, max {:.4} m",
            p.result.status.name(),
            stats.mean_error,
            stats.max_error
        );
    }
    Ok(())
}
