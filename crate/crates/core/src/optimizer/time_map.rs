//! Smooth bijection between unconstrained `τ` and positive durations `T`.

/// `T(τ)` and `dT/dτ`.
#[inline]
pub fn time_forward(tau: f64) -> (f64, f64) {
    if tau >= 0.0 {
        let a = tau + 1.0;
        (0.5 * (a * a + 1.0), a)
    } else {
        let a = 1.0 - tau;
        let den = a * a + 1.0;
        (2.0 / den, 4.0 * a / (den * den))
    }
}

/// Inverse of [`time_forward`]. `t` must be positive.
#[inline]
pub fn time_backward(t: f64) -> f64 {
    debug_assert!(t > 0.0);
    if t >= 1.0 {
        (2.0 * t - 1.0).sqrt() - 1.0
    } else {
        1.0 - (2.0 / t - 1.0).sqrt()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn branch_junction() {
        assert_eq!(time_forward(0.0), (1.0, 1.0));
        assert_eq!(time_backward(1.0), 0.0);
        let below = time_forward(-1e-12);
        assert!((below.0 - 1.0).abs() < 1e-11 && (below.1 - 1.0).abs() < 1e-11);
    }

    #[test]
    fn known_value() {
        assert!((time_backward(2.0) - (3f64.sqrt() - 1.0)).abs() < 1e-15);
    }

    #[test]
    fn round_trip_grid() {
        let mut t = 1e-4;
        while t < 1e3 {
            let back = time_forward(time_backward(t)).0;
            assert!(((back - t) / t).abs() < 1e-12, "{t}");
            t *= 1.01;
        }
    }

    proptest! {
        #[test]
        fn round_trip(log_t in -9.2f64..6.9) {
            let t = log_t.exp();
            let back = time_forward(time_backward(t)).0;
            prop_assert!(((back - t) / t).abs() < 1e-12);
        }

        #[test]
        fn derivative(tau in -20.0f64..20.0) {
            let h = 1e-7;
            let fd = (time_forward(tau + h).0 - time_forward(tau - h).0) / (2.0 * h);
            let d = time_forward(tau).1;
            prop_assert!((fd - d).abs() <= 1e-6 * d.abs().max(1e-3));
            prop_assert!(d > 0.0);
        }
    }
}
