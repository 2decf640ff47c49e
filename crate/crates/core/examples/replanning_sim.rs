//! Closed-loop run through the pop-up obstacle scenario.

use ddopt::replanner::KeepReason;
use ddopt::sim::{run_closed_loop, ClosedLoopParams, Scenario};

fn main() {
    let log = run_closed_loop(&Scenario::pop_up(3), &ClosedLoopParams::default(), 3);
    let r = &log.result;
    println!(
        "reached goal: {}, collision: {:?}, time {:.1} s, replans {}, emergency stops {}",
        r.success, r.collision_time, r.final_time, r.replans, r.emergency_stops
    );
    println!("tracking error mean {:.4} m, max {:.4} m", r.mean_tracking_error, r.max_tracking_error);
    for e in
        log.events.iter().filter(|e| e.outcome != "keep" || e.reason.is_some_and(|r| r != KeepReason::Safe)).take(8)
    {
        println!("  t = {:5.2}  {}  {:?}", e.t, e.outcome, e.reason);
    }
}
