use super::{basis, poly_eval, MsTrajectory, SegmentCoeffs, TrajectoryError, ARC, NCOEF, THETA};

/// Partials of one Simpson summand with respect to the 12 coefficients of its
/// segment, `θ` powers first then `s` powers.
pub type CoeffPartials = [f64; 2 * NCOEF];

/// Simpson summands, sampled positions, and their analytic partials.
///
/// Each segment owns `n` intervals and `2n + 1` integrand samples; positions
/// are kept at the `n + 1` interval boundaries. Segment `i + 1` starts at the
/// position where segment `i` ends.
#[derive(Debug, Clone)]
pub struct IntegrationCache {
    version: u64,
    n: usize,
    durations: Vec<f64>,
    positions: Vec<[f64; 2]>,
    gamma: Vec<[f64; 2]>,
    dgamma_dc: Vec<[CoeffPartials; 2]>,
    dgamma_dt: Vec<[f64; 2]>,
}

/// Integrand value and its partials at one sample.
struct Sample {
    f: [f64; 2],
    df_dc: [CoeffPartials; 2],
    /// Total time derivative of the integrand.
    fdot: [f64; 2],
}

fn sample(c: &SegmentCoeffs, tau: f64, x_iv: f64) -> Sample {
    let th = poly_eval(&c[THETA], tau, 0);
    let dth = poly_eval(&c[THETA], tau, 1);
    let ddth = poly_eval(&c[THETA], tau, 2);
    let ds = poly_eval(&c[ARC], tau, 1);
    let dds = poly_eval(&c[ARC], tau, 2);
    let (sn, cs) = th.sin_cos();
    let b0 = basis(tau, 0);
    let b1 = basis(tau, 1);

    let f = [ds * cs + x_iv * dth * sn, ds * sn - x_iv * dth * cs];
    let mut df_dc = [[0.0; 2 * NCOEF]; 2];
    let gx_th = -ds * sn + x_iv * dth * cs;
    let gy_th = ds * cs + x_iv * dth * sn;
    for k in 0..NCOEF {
        df_dc[0][k] = gx_th * b0[k] + x_iv * sn * b1[k];
        df_dc[1][k] = gy_th * b0[k] - x_iv * cs * b1[k];
        df_dc[0][NCOEF + k] = cs * b1[k];
        df_dc[1][NCOEF + k] = sn * b1[k];
    }
    let fdot = [
        dds * cs - ds * dth * sn + x_iv * (ddth * sn + dth * dth * cs),
        dds * sn + ds * dth * cs - x_iv * (ddth * cs - dth * dth * sn),
    ];
    Sample { f, df_dc, fdot }
}

impl IntegrationCache {
    pub(super) fn build(traj: &MsTrajectory, n: usize) -> Self {
        assert!(n >= 1, "need at least one interval per segment");
        let m = traj.num_segments();
        let x_iv = traj.icr().x_iv;
        let start = traj.start_pose().position();
        let mut positions = Vec::with_capacity(m * (n + 1));
        let mut gamma = Vec::with_capacity(m * n);
        let mut dgamma_dc = Vec::with_capacity(m * n);
        let mut dgamma_dt = Vec::with_capacity(m * n);
        let mut samples = Vec::with_capacity(2 * n + 1);
        let mut p = start;
        for (i, c) in traj.coeffs().iter().enumerate() {
            let t = traj.durations()[i];
            samples.clear();
            for l in 0..=2 * n {
                samples.push(sample(c, t * l as f64 / (2 * n) as f64, x_iv));
            }
            positions.push(p);
            for j in 0..n {
                let (a, mid, b) = (&samples[2 * j], &samples[2 * j + 1], &samples[2 * j + 2]);
                let al = |l: usize| l as f64 / (2 * n) as f64;
                let (aa, am, ab) = (al(2 * j), al(2 * j + 1), al(2 * j + 2));
                let mut g = [0.0; 2];
                let mut gc = [[0.0; 2 * NCOEF]; 2];
                let mut gt = [0.0; 2];
                for ax in 0..2 {
                    g[ax] = a.f[ax] + 4.0 * mid.f[ax] + b.f[ax];
                    for k in 0..2 * NCOEF {
                        gc[ax][k] = a.df_dc[ax][k] + 4.0 * mid.df_dc[ax][k] + b.df_dc[ax][k];
                    }
                    gt[ax] = aa * a.fdot[ax] + 4.0 * am * mid.fdot[ax] + ab * b.fdot[ax];
                }
                let w = t / (6 * n) as f64;
                p = [p[0] + w * g[0], p[1] + w * g[1]];
                positions.push(p);
                gamma.push(g);
                dgamma_dc.push(gc);
                dgamma_dt.push(gt);
            }
        }
        Self {
            version: traj.version(),
            n,
            durations: traj.durations().to_vec(),
            positions,
            gamma,
            dgamma_dc,
            dgamma_dt,
        }
    }

    pub fn version(&self) -> u64 {
        self.version
    }

    /// Intervals per segment.
    pub fn n(&self) -> usize {
        self.n
    }

    pub fn num_segments(&self) -> usize {
        self.durations.len()
    }

    /// Fails when `traj` changed after this cache was built.
    pub fn check(&self, traj: &MsTrajectory) -> Result<(), TrajectoryError> {
        if traj.version() == self.version {
            Ok(())
        } else {
            Err(TrajectoryError::StaleCache)
        }
    }

    /// Position at interval boundary `j` (0..=n) of segment `i`.
    #[inline]
    pub fn sample_position(&self, i: usize, j: usize) -> [f64; 2] {
        self.positions[i * (self.n + 1) + j]
    }

    pub fn positions(&self) -> &[[f64; 2]] {
        &self.positions
    }

    /// Integrated end point of segment `i`.
    pub fn segment_end(&self, i: usize) -> [f64; 2] {
        self.sample_position(i, self.n)
    }

    pub fn final_position(&self) -> [f64; 2] {
        *self.positions.last().expect("cache nonempty")
    }

    /// Summand `Γ_{i,j}` for interval `j` (0-based) of segment `i`.
    pub fn gamma(&self, i: usize, j: usize) -> [f64; 2] {
        self.gamma[i * self.n + j]
    }

    pub fn gamma_coeff_partials(&self, i: usize, j: usize) -> &[CoeffPartials; 2] {
        &self.dgamma_dc[i * self.n + j]
    }

    pub fn gamma_duration_partials(&self, i: usize, j: usize) -> [f64; 2] {
        self.dgamma_dt[i * self.n + j]
    }

    /// Position at global time `t`: the cached boundary at or before `t` plus a
    /// 3-point Simpson rule over the remainder.
    pub fn position_at(&self, traj: &MsTrajectory, t: f64) -> Result<[f64; 2], TrajectoryError> {
        self.check(traj)?;
        let (i, tau) = traj.locate(t)?;
        let h = self.durations[i] / self.n as f64;
        let j = ((tau / h).floor() as usize).min(self.n);
        let a = j as f64 * h;
        let p = self.sample_position(i, j);
        let rem = tau - a;
        if rem <= 0.0 {
            return Ok(p);
        }
        let fa = traj.integrand(i, a);
        let fm = traj.integrand(i, a + 0.5 * rem);
        let fb = traj.integrand(i, tau);
        let w = rem / 6.0;
        Ok([p[0] + w * (fa[0] + 4.0 * fm[0] + fb[0]), p[1] + w * (fa[1] + 4.0 * fm[1] + fb[1])])
    }

    /// Chain gradients on sampled positions back to coefficients and durations.
    ///
    /// `g[i * (n + 1) + j]` is the gradient with respect to the position at
    /// boundary `j` of segment `i`. Returns gradients in the layout of
    /// [`MsTrajectory::coeffs`] and per-segment durations.
    pub fn backprop(&self, g: &[[f64; 2]]) -> (Vec<SegmentCoeffs>, Vec<f64>) {
        let m = self.num_segments();
        let n = self.n;
        assert_eq!(g.len(), m * (n + 1), "position gradient length");
        let mut gc = vec![[[0.0; NCOEF]; 2]; m];
        let mut gt = vec![0.0; m];
        self.backprop_into(g, &mut gc, &mut gt);
        (gc, gt)
    }

    /// Accumulating variant of [`backprop`](Self::backprop).
    pub fn backprop_into(&self, g: &[[f64; 2]], gc: &mut [SegmentCoeffs], gt: &mut [f64]) {
        let n = self.n;
        let inv6n = 1.0 / (6 * n) as f64;
        // Suffix sum of position gradients: every interval feeds all later samples.
        let mut acc = [0.0; 2];
        for i in (0..self.num_segments()).rev() {
            let w = self.durations[i] * inv6n;
            for j in (1..=n).rev() {
                let gs = g[i * (n + 1) + j];
                acc[0] += gs[0];
                acc[1] += gs[1];
                if acc == [0.0, 0.0] {
                    continue;
                }
                let q = i * n + j - 1;
                let dc = &self.dgamma_dc[q];
                for k in 0..NCOEF {
                    gc[i][THETA][k] += w * (acc[0] * dc[0][k] + acc[1] * dc[1][k]);
                    gc[i][ARC][k] += w * (acc[0] * dc[0][NCOEF + k] + acc[1] * dc[1][NCOEF + k]);
                }
                let ga = self.gamma[q];
                let gtq = self.dgamma_dt[q];
                gt[i] += acc[0] * (ga[0] * inv6n + w * gtq[0]) + acc[1] * (ga[1] * inv6n + w * gtq[1]);
            }
            let gs = g[i * (n + 1)];
            acc[0] += gs[0];
            acc[1] += gs[1];
        }
    }
}

#[cfg(test)]
mod tests {
    use super::super::tests::random_traj;
    use super::super::*;
    use crate::kinematics::{IcrParams, Pose2};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;
    use std::f64::consts::{FRAC_PI_2, PI};

    fn single(theta: [f64; NCOEF], s: [f64; NCOEF], t: f64, x_iv: f64) -> MsTrajectory {
        let icr = IcrParams::new(0.3, -0.3, x_iv).unwrap();
        MsTrajectory::new(Pose2::default(), icr, vec![[theta, s]], vec![t]).unwrap()
    }

    #[test]
    fn straight_line() {
        let tr = single([0.0; 6], [0.0, 1.0, 0.0, 0.0, 0.0, 0.0], 2.0, 0.0);
        let c = tr.integrate(10);
        let p = c.final_position();
        assert!((p[0] - 2.0).abs() < 1e-14 && p[1].abs() < 1e-14);
    }

    #[test]
    fn quarter_circle() {
        let tr = single([0.0, 1.0, 0.0, 0.0, 0.0, 0.0], [0.0, 1.0, 0.0, 0.0, 0.0, 0.0], FRAC_PI_2, 0.0);
        let c = tr.integrate(10);
        let p = c.final_position();
        assert!((p[0] - 1.0).abs() < 1e-6 && (p[1] - 1.0).abs() < 1e-6, "{p:?}");
        // between samples
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        for _ in 0..100 {
            let t = rng.random_range(0.0..FRAC_PI_2);
            let q = c.position_at(&tr, t).unwrap();
            assert!((q[0] - t.sin()).abs() < 1e-6 && (q[1] - (1.0 - t.cos())).abs() < 1e-6);
        }
    }

    #[test]
    fn slip_spin_closes() {
        let tr = single([0.0, 1.0, 0.0, 0.0, 0.0, 0.0], [0.0; 6], 2.0 * PI, 0.2);
        let p = tr.integrate(10).final_position();
        assert!(p[0].abs() < 1e-9 && p[1].abs() < 1e-9, "{p:?}");
    }

    #[test]
    fn position_at_endpoints_and_samples() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let tr = random_traj(&mut rng, 3, 0.2);
        let c = tr.integrate(10);
        assert_eq!(c.position_at(&tr, 0.0).unwrap(), tr.start_pose().position());
        assert_eq!(c.position_at(&tr, tr.total_duration()).unwrap(), c.final_position());
        let t = tr.durations()[0] + 3.0 * tr.durations()[1] / 10.0;
        let p = c.position_at(&tr, t).unwrap();
        let q = c.sample_position(1, 3);
        assert!((p[0] - q[0]).abs() < 1e-12 && (p[1] - q[1]).abs() < 1e-12);
    }

    #[test]
    fn stale_cache_rejected() {
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        let mut tr = random_traj(&mut rng, 2, 0.0);
        let c = tr.integrate(10);
        tr.set_segments(tr.coeffs().to_vec(), vec![1.0, 1.0]).unwrap();
        assert_eq!(c.position_at(&tr, 0.5), Err(TrajectoryError::StaleCache));
    }

    #[test]
    fn gamma_partials_match_finite_differences() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let h = 1e-6;
        for _ in 0..100 {
            let xv = rng.random_range(-0.3..0.3);
            let tr = random_traj(&mut rng, 1, xv);
            let n = 4;
            let c = tr.integrate(n);
            let j = rng.random_range(0..n);
            let k = rng.random_range(0..2 * NCOEF);
            let (ch, pw) = (k / NCOEF, k % NCOEF);
            let bump = |d: f64| {
                let mut co = tr.coeffs().to_vec();
                co[0][ch][pw] += d;
                let t2 = MsTrajectory::new(tr.start_pose(), tr.icr(), co, tr.durations().to_vec()).unwrap();
                t2.integrate(n).gamma(0, j)
            };
            let (p, m) = (bump(h), bump(-h));
            let dc = c.gamma_coeff_partials(0, j);
            for ax in 0..2 {
                let fd = (p[ax] - m[ax]) / (2.0 * h);
                assert!((fd - dc[ax][k]).abs() <= 1e-5 * fd.abs().max(1.0), "coef {k} ax {ax}: {fd} vs {}", dc[ax][k]);
            }
            let bump_t = |d: f64| {
                let t2 =
                    MsTrajectory::new(tr.start_pose(), tr.icr(), tr.coeffs().to_vec(), vec![tr.durations()[0] + d])
                        .unwrap();
                t2.integrate(n).gamma(0, j)
            };
            let (p, m) = (bump_t(h), bump_t(-h));
            let dt = c.gamma_duration_partials(0, j);
            for ax in 0..2 {
                let fd = (p[ax] - m[ax]) / (2.0 * h);
                assert!((fd - dt[ax]).abs() <= 1e-5 * fd.abs().max(1.0));
            }
        }
    }

    #[test]
    fn backprop_matches_finite_differences() {
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let n = 5;
        for _ in 0..20 {
            let tr = random_traj(&mut rng, 3, 0.2);
            let weights: Vec<[f64; 2]> =
                (0..3 * (n + 1)).map(|_| [rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0)]).collect();
            let loss = |t: &MsTrajectory| -> f64 {
                let c = t.integrate(n);
                c.positions().iter().zip(&weights).map(|(p, w)| p[0] * w[0] + p[1] * w[1]).sum()
            };
            let (gc, gt) = tr.integrate(n).backprop(&weights);
            let h = 1e-6;
            for i in 0..3 {
                for ch in 0..2 {
                    for pw in 0..NCOEF {
                        let mut a = tr.coeffs().to_vec();
                        let mut b = a.clone();
                        a[i][ch][pw] += h;
                        b[i][ch][pw] -= h;
                        let ta = MsTrajectory::new(tr.start_pose(), tr.icr(), a, tr.durations().to_vec()).unwrap();
                        let tb = MsTrajectory::new(tr.start_pose(), tr.icr(), b, tr.durations().to_vec()).unwrap();
                        let fd = (loss(&ta) - loss(&tb)) / (2.0 * h);
                        assert!((fd - gc[i][ch][pw]).abs() <= 1e-5 * fd.abs().max(1.0));
                    }
                }
                let mut da = tr.durations().to_vec();
                let mut db = da.clone();
                da[i] += h;
                db[i] -= h;
                let ta = MsTrajectory::new(tr.start_pose(), tr.icr(), tr.coeffs().to_vec(), da).unwrap();
                let tb = MsTrajectory::new(tr.start_pose(), tr.icr(), tr.coeffs().to_vec(), db).unwrap();
                let fd = (loss(&ta) - loss(&tb)) / (2.0 * h);
                assert!((fd - gt[i]).abs() <= 1e-5 * fd.abs().max(1.0));
            }
        }
    }

    #[test]
    fn reversal_negates_displacement() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        for _ in 0..20 {
            let tr = random_traj(&mut rng, 3, 0.0);
            // s -> -s with θ unchanged drives the same headings backwards
            let neg: Vec<SegmentCoeffs> = tr
                .coeffs()
                .iter()
                .map(|c| {
                    let mut d = *c;
                    d[ARC].iter_mut().for_each(|v| *v = -*v);
                    d
                })
                .collect();
            let tn = MsTrajectory::new(tr.start_pose(), tr.icr(), neg, tr.durations().to_vec()).unwrap();
            let p0 = tr.start_pose().position();
            let a = tr.integrate(10).final_position();
            let b = tn.integrate(10).final_position();
            assert!((a[0] - p0[0] + (b[0] - p0[0])).abs() < 1e-12);
            assert!((a[1] - p0[1] + (b[1] - p0[1])).abs() < 1e-12);
        }
    }
}
