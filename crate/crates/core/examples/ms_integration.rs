//! Position recovery of a motion-state trajectory: composite Simpson against
//! a fine Gauss-Legendre reference.

use ddopt::kinematics::{IcrParams, Pose2};
use ddopt::ms_trajectory::{reference_final_position, MsTrajectory, ARC, THETA};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    // two quintic segments: a left turn, then an S-bend, driving at about 1.5 m/s
    let mut a = [[0.0; 6]; 2];
    a[THETA] = [0.0, 0.6, 0.0, -0.05, 0.0, 0.0];
    a[ARC] = [0.0, 1.5, 0.0, 0.0, 0.0, 0.0];
    let mut b = [[0.0; 6]; 2];
    b[THETA] = [0.7, -0.2, 0.3, -0.1, 0.0, 0.0];
    b[ARC] = [3.0, 1.5, 0.1, 0.0, 0.0, 0.0];
    let icr = IcrParams::new(0.3, -0.3, 0.2)?;
    let traj = MsTrajectory::new(Pose2::new(1.0, 2.0, 0.0), icr, vec![a, b], vec![2.0, 2.5])?;

    let oracle = reference_final_position(&traj, 1000);
    println!("reference endpoint ({:.9}, {:.9})", oracle[0], oracle[1]);
    for n in [2, 4, 10, 20, 40] {
        let p = traj.integrate(n).final_position();
        println!("n = {n:2}: error {:.3e} m", (p[0] - oracle[0]).hypot(p[1] - oracle[1]));
    }

    let cache = traj.integrate(10);
    for t in [0.5, 2.0, 3.7] {
        let p = cache.position_at(&traj, t)?;
        let st = traj.eval_state(t, 1)?;
        println!("t = {t}: ({:.3}, {:.3}) heading {:.3} speed {:.2}", p[0], p[1], st.theta[0], st.v());
    }
    Ok(())
}
