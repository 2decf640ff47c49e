//! Online ICR estimation from noisy pose fixes while driving a figure eight.

use ddopt::icr_estimator::{figure_eight_wheels, EkfConfig, IcrEstimator};
use ddopt::kinematics::{step, twist_from_wheels, IcrParams, Pose2};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let truth = IcrParams::new(0.3, -0.3, 0.2)?;
    let noise = Normal::new(0.0, 0.01)?;
    let mut rng = ChaCha8Rng::seed_from_u64(0);
    let mut pose = Pose2::default();
    let mut ekf =
        IcrEstimator::new(pose, IcrParams::standard(0.5), [0.01, 0.01, 0.01, 0.1, 0.1, 0.1], EkfConfig::default());
    let dt = 0.02;
    for k in 0..3000 {
        let t = k as f64 * dt;
        let (vl, vr) = figure_eight_wheels(t, 1.0, 1.5, 8.0, &truth);
        pose = step(pose, twist_from_wheels(vl, vr, &truth), dt);
        ekf.predict(vl, vr, dt);
        ekf.update(Pose2::new(
            pose.x + noise.sample(&mut rng),
            pose.y + noise.sample(&mut rng),
            pose.theta + noise.sample(&mut rng),
        ));
        if k % 500 == 499 {
            let e = ekf.icr();
            println!("t = {:4.0} s: y_il {:.4}  y_ir {:.4}  x_iv {:.4}", t + dt, e.y_il, e.y_ir, e.x_iv);
        }
    }
    println!("accepted {}, rejected {}", ekf.accepted(), ekf.rejected());
    Ok(())
}
