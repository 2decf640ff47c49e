//! Minimum-jerk coefficients through intermediate motion states.

use ddopt::minco::{assemble_and_solve, BoundaryConditions};
use ddopt::ms_trajectory::{poly_eval, ARC, THETA};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let bc = BoundaryConditions::rest(0.0, 1.2);
    // (θ, s) at the end of each inner segment
    let waypoints = [[0.4, 1.5], [0.9, 3.5]];
    let durations = [1.2, 1.5, 1.3];
    let m = assemble_and_solve(&bc, &waypoints, 5.0, &durations)?;
    println!("banded factorization: {}", m.is_banded());
    for (i, (c, t)) in m.coeffs().iter().zip(m.durations()).enumerate() {
        println!(
            "segment {i}: θ(T) = {:.4}, s(T) = {:.4}, ṡ(T) = {:.4}",
            poly_eval(&c[THETA], *t, 0),
            poly_eval(&c[ARC], *t, 0),
            poly_eval(&c[ARC], *t, 1)
        );
    }
    Ok(())
}
