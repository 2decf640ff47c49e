//! Receding-horizon tracking of an MS trajectory: a pre-integrated reference
//! table and a single-shooting horizon solver with projected quasi-Newton
//! steps.

use std::collections::VecDeque;

use serde::{Deserialize, Serialize};

use crate::export::CsvRecord;
use crate::kinematics::{
    step_with_jacobian, twist_from_wheels, twist_wheel_jacobian, wheels_from_twist, wrap_angle, IcrParams, Pose2, Twist,
};
use crate::ms_trajectory::{integrate_span, MsTrajectory, TrajectoryError};

/// Panel width of the reference integrator, seconds.
const PANEL: f64 = 0.01;

/// Reference pose and feed-forward twist at one instant.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ReferencePoint {
    pub pose: Pose2,
    /// `ṡ`.
    pub v: f64,
    /// `θ̇`.
    pub omega: f64,
}

/// Poses pre-integrated at a fixed interval; lookups integrate forward from
/// the nearest earlier sample.
#[derive(Debug, Clone)]
pub struct ReferenceTable {
    interval: f64,
    samples: Vec<[f64; 2]>,
    traj: MsTrajectory,
}

impl ReferenceTable {
    pub fn preintegrate(traj: &MsTrajectory, interval: f64) -> Result<Self, TrajectoryError> {
        assert!(interval > 0.0);
        let total = traj.total_duration();
        let count = (total / interval).floor() as usize;
        let mut samples = Vec::with_capacity(count + 1);
        let mut p = traj.start_pose().position();
        samples.push(p);
        for j in 1..=count {
            let d = integrate_span(traj, (j - 1) as f64 * interval, j as f64 * interval, PANEL)?;
            p = [p[0] + d[0], p[1] + d[1]];
            samples.push(p);
        }
        Ok(ReferenceTable { interval, samples, traj: traj.clone() })
    }

    pub fn interval(&self) -> f64 {
        self.interval
    }

    pub fn samples(&self) -> &[[f64; 2]] {
        &self.samples
    }

    pub fn trajectory(&self) -> &MsTrajectory {
        &self.traj
    }

    pub fn version(&self) -> u64 {
        self.traj.version()
    }

    pub fn duration(&self) -> f64 {
        self.traj.total_duration()
    }

    /// Reference at `t`. Beyond the end, holds the final pose with zero twist;
    /// before the start, holds the initial pose.
    pub fn reference_at(&self, t: f64) -> ReferencePoint {
        let total = self.duration();
        let tc = t.clamp(0.0, total);
        let j = ((tc / self.interval).floor() as usize).min(self.samples.len() - 1);
        let tj = j as f64 * self.interval;
        let mut p = self.samples[j];
        if tc > tj {
            let d = integrate_span(&self.traj, tj, tc, PANEL).expect("clamped time in domain");
            p = [p[0] + d[0], p[1] + d[1]];
        }
        let st = self.traj.eval_state(tc, 1).expect("clamped time in domain");
        let moving = t < total;
        ReferencePoint {
            pose: Pose2::new(p[0], p[1], st.theta[0]),
            v: if moving { st.s[1] } else { 0.0 },
            omega: if moving { st.theta[1] } else { 0.0 },
        }
    }
}

/// Actuation model of the horizon problem.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum InputModel {
    /// `u = (v, ω)`; lateral slip follows from the ICR parameters.
    Twist,
    /// `u = (V_l, V_r)`.
    Wheel,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct HorizonConfig {
    pub dt: f64,
    pub horizon: f64,
    pub w_p: [f64; 3],
    pub w_u: [f64; 2],
    pub u_min: [f64; 2],
    pub u_max: [f64; 2],
    pub model: InputModel,
    pub max_iter: usize,
    /// Stop when the projected-gradient infinity norm falls below this.
    pub g_tol: f64,
    pub memory: usize,
}

impl Default for HorizonConfig {
    fn default() -> Self {
        HorizonConfig {
            dt: 0.05,
            horizon: 1.5,
            w_p: [10.0, 10.0, 4.0],
            w_u: [0.1, 0.1],
            u_min: [-3.5, -4.5],
            u_max: [3.5, 4.5],
            model: InputModel::Twist,
            max_iter: 40,
            g_tol: 1e-6,
            memory: 8,
        }
    }
}

impl HorizonConfig {
    pub fn steps(&self) -> usize {
        ((self.horizon / self.dt).round() as usize).max(1)
    }

    /// Wheel-speed variant with bounds derived from twist bounds.
    pub fn wheel(self, icr: &IcrParams) -> Self {
        let reach =
            self.u_max[0] + self.u_max[1] * 0.5 * icr.separation() + self.u_max[1] * 0.5 * (icr.y_il + icr.y_ir).abs();
        HorizonConfig { model: InputModel::Wheel, u_min: [-reach; 2], u_max: [reach; 2], ..self }
    }

    pub fn validate(&self) -> Result<(), String> {
        if !(self.dt > 0.0 && self.horizon >= self.dt) {
            return Err("need 0 < dt <= horizon".into());
        }
        if self.w_p.iter().chain(&self.w_u).any(|w| *w < 0.0) {
            return Err("weights must be non-negative".into());
        }
        if (0..2).any(|k| self.u_min[k] >= self.u_max[k]) {
            return Err("u_min must be below u_max".into());
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum HorizonStatus {
    Ok,
    /// The solve produced non-finite values; the previous first input was
    /// halved instead.
    Degraded,
}

#[derive(Debug, Clone, PartialEq)]
pub struct HorizonSolution {
    pub inputs: Vec<[f64; 2]>,
    pub u0: [f64; 2],
    pub cost: f64,
    pub initial_cost: f64,
    pub iterations: usize,
    pub status: HorizonStatus,
    /// Reference at the current time (stage 0).
    pub reference: ReferencePoint,
}

fn model_twist(model: InputModel, u: [f64; 2], icr: &IcrParams) -> Twist {
    match model {
        InputModel::Twist => Twist::with_slip(u[0], u[1], icr),
        InputModel::Wheel => twist_from_wheels(u[0], u[1], icr),
    }
}

/// `∂twist/∂u` as `[vx, vy, ω][input]`.
fn model_jacobian(model: InputModel, icr: &IcrParams) -> [[f64; 2]; 3] {
    match model {
        InputModel::Twist => [[1.0, 0.0], [0.0, -icr.x_iv], [0.0, 1.0]],
        InputModel::Wheel => twist_wheel_jacobian(icr),
    }
}

/// Reference input of one stage.
pub fn reference_input(model: InputModel, r: &ReferencePoint, icr: &IcrParams) -> [f64; 2] {
    match model {
        InputModel::Twist => [r.v, r.omega],
        InputModel::Wheel => {
            let (l, rr) = wheels_from_twist(r.v, r.omega, icr);
            [l, rr]
        }
    }
}

struct Horizon<'a> {
    cfg: &'a HorizonConfig,
    icr: IcrParams,
    start: Pose2,
    refs: Vec<ReferencePoint>,
    u_ref: Vec<[f64; 2]>,
}

impl Horizon<'_> {
    fn error(&self, p: &Pose2, i: usize) -> [f64; 3] {
        let r = &self.refs[i].pose;
        [p.x - r.x, p.y - r.y, wrap_angle(p.theta - r.theta)]
    }

    /// Horizon cost and its gradient with respect to the flattened inputs.
    fn cost(&self, u: &[f64], grad: &mut [f64]) -> f64 {
        let n = self.u_ref.len();
        let jac_u = model_jacobian(self.cfg.model, &self.icr);
        let wp = self.cfg.w_p;
        let wu = self.cfg.w_u;
        let mut poses = Vec::with_capacity(n + 1);
        let mut jacs = Vec::with_capacity(n);
        poses.push(self.start);
        let mut total = 0.0;
        for i in 0..n {
            let ui = [u[2 * i], u[2 * i + 1]];
            let tw = model_twist(self.cfg.model, ui, &self.icr);
            let (next, jac) = step_with_jacobian(poses[i], tw, self.cfg.dt);
            if i > 0 {
                let e = self.error(&poses[i], i);
                total += (0..3).map(|k| wp[k] * e[k] * e[k]).sum::<f64>();
            }
            let du = [ui[0] - self.u_ref[i][0], ui[1] - self.u_ref[i][1]];
            total += wu[0] * du[0] * du[0] + wu[1] * du[1] * du[1];
            poses.push(next);
            jacs.push(jac);
        }
        let e = self.error(&poses[n], n);
        // terminal term counted on top of the last stage
        total += 2.0 * (0..3).map(|k| wp[k] * e[k] * e[k]).sum::<f64>();

        let mut lam = [4.0 * wp[0] * e[0], 4.0 * wp[1] * e[1], 4.0 * wp[2] * e[2]];
        for i in (0..n).rev() {
            let j = &jacs[i];
            let ui = [u[2 * i], u[2 * i + 1]];
            for c in 0..2 {
                let mut g = 2.0 * wu[c] * (ui[c] - self.u_ref[i][c]);
                for r in 0..3 {
                    let dp_du: f64 = (0..3).map(|k| j.d_twist[r][k] * jac_u[k][c]).sum();
                    g += lam[r] * dp_du;
                }
                grad[2 * i + c] = g;
            }
            if i > 0 {
                let e = self.error(&poses[i], i);
                let mut next = [0.0; 3];
                for c in 0..3 {
                    next[c] = 2.0 * wp[c] * e[c] + (0..3).map(|r| lam[r] * j.d_pose[r][c]).sum::<f64>();
                }
                lam = next;
            }
        }
        total
    }

    fn project(&self, u: &mut [f64]) {
        for (k, v) in u.iter_mut().enumerate() {
            *v = v.clamp(self.cfg.u_min[k % 2], self.cfg.u_max[k % 2]);
        }
    }

    /// Components of the gradient that are not blocked by an active bound.
    fn free_mask(&self, u: &[f64], g: &[f64]) -> Vec<bool> {
        u.iter()
            .zip(g)
            .enumerate()
            .map(|(k, (&v, &gk))| {
                let lo = self.cfg.u_min[k % 2];
                let hi = self.cfg.u_max[k % 2];
                !((v <= lo && gk > 0.0) || (v >= hi && gk < 0.0))
            })
            .collect()
    }
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Solve the tracking horizon starting at `t` from `current`. `warm` is the
/// previous solution's input sequence (shifted by one stage here).
pub fn solve_horizon(
    current: Pose2,
    t: f64,
    table: &ReferenceTable,
    cfg: &HorizonConfig,
    icr: &IcrParams,
    warm: Option<&HorizonSolution>,
) -> HorizonSolution {
    let n = cfg.steps();
    let refs: Vec<ReferencePoint> = (0..=n).map(|i| table.reference_at(t + i as f64 * cfg.dt)).collect();
    let u_ref: Vec<[f64; 2]> = refs[..n].iter().map(|r| reference_input(cfg.model, r, icr)).collect();
    let hz = Horizon { cfg, icr: *icr, start: current, refs, u_ref };

    let mut u: Vec<f64> = match warm {
        Some(w) if w.inputs.len() == n && w.status == HorizonStatus::Ok => {
            let mut q: VecDeque<[f64; 2]> = w.inputs.iter().copied().collect();
            q.pop_front();
            q.push_back(*w.inputs.last().unwrap());
            q.into_iter().flatten().collect()
        }
        _ => hz.u_ref.iter().flatten().copied().collect(),
    };
    hz.project(&mut u);
    let dim = u.len();
    let mut g = vec![0.0; dim];
    let mut f = hz.cost(&u, &mut g);
    let initial_cost = f;
    let degraded = |prev: Option<&HorizonSolution>, reference: ReferencePoint| {
        let u0 = prev.map_or([0.0; 2], |p| [0.5 * p.u0[0], 0.5 * p.u0[1]]);
        HorizonSolution {
            inputs: vec![u0; n],
            u0,
            cost: f64::NAN,
            initial_cost: f64::NAN,
            iterations: 0,
            status: HorizonStatus::Degraded,
            reference,
        }
    };
    if !f.is_finite() || g.iter().any(|v| !v.is_finite()) {
        return degraded(warm, hz.refs[0]);
    }

    let mut mem: VecDeque<(Vec<f64>, Vec<f64>, f64)> = VecDeque::new();
    let mut trial = vec![0.0; dim];
    let mut g_trial = vec![0.0; dim];
    let mut iterations = 0;
    for _ in 0..cfg.max_iter {
        let mask = hz.free_mask(&u, &g);
        let pg: Vec<f64> = g.iter().zip(&mask).map(|(v, &m)| if m { *v } else { 0.0 }).collect();
        if pg.iter().fold(0.0f64, |m, v| m.max(v.abs())) < cfg.g_tol {
            break;
        }
        // two-loop recursion restricted to free components
        let mut d: Vec<f64> = pg.iter().map(|v| -v).collect();
        let mut alphas = vec![0.0; mem.len()];
        for (k, (s, y, rho)) in mem.iter().enumerate().rev() {
            alphas[k] = rho * dot(s, &d);
            d.iter_mut().zip(y).for_each(|(di, yi)| *di -= alphas[k] * yi);
        }
        if let Some((s, y, _)) = mem.back() {
            let gamma = dot(s, y) / dot(y, y);
            d.iter_mut().for_each(|di| *di *= gamma);
        } else {
            let scale = 1.0 / pg.iter().fold(1.0f64, |m, v| m.max(v.abs()));
            d.iter_mut().for_each(|di| *di *= scale);
        }
        for (k, (s, y, rho)) in mem.iter().enumerate() {
            let b = rho * dot(y, &d);
            d.iter_mut().zip(s).for_each(|(di, si)| *di += (alphas[k] - b) * si);
        }
        d.iter_mut().zip(&mask).for_each(|(di, &m)| {
            if !m {
                *di = 0.0
            }
        });
        if dot(&d, &pg) >= 0.0 {
            mem.clear();
            d = pg.iter().map(|v| -v).collect();
        }
        // projected backtracking with sufficient decrease on the actual step
        let mut alpha = 1.0;
        let mut accepted = false;
        for _ in 0..30 {
            for k in 0..dim {
                trial[k] = u[k] + alpha * d[k];
            }
            hz.project(&mut trial);
            let ft = hz.cost(&trial, &mut g_trial);
            let decrease: f64 = g.iter().zip(trial.iter().zip(&u)).map(|(gk, (a, b))| gk * (a - b)).sum();
            if ft.is_finite() && ft <= f + 1e-4 * decrease && ft < f {
                accepted = true;
                break;
            }
            alpha *= 0.5;
        }
        if !accepted {
            break;
        }
        let s: Vec<f64> = trial.iter().zip(&u).map(|(a, b)| a - b).collect();
        let y: Vec<f64> = g_trial.iter().zip(&g).map(|(a, b)| a - b).collect();
        let sy = dot(&s, &y);
        if sy > 1e-12 {
            if mem.len() == cfg.memory {
                mem.pop_front();
            }
            mem.push_back((s, y, 1.0 / sy));
        }
        u.copy_from_slice(&trial);
        g.copy_from_slice(&g_trial);
        f = hz.cost(&u, &mut g);
        iterations += 1;
    }
    if !f.is_finite() {
        return degraded(warm, hz.refs[0]);
    }
    let inputs: Vec<[f64; 2]> = u.chunks_exact(2).map(|c| [c[0], c[1]]).collect();
    HorizonSolution {
        u0: inputs[0],
        inputs,
        cost: f,
        initial_cost,
        iterations,
        status: HorizonStatus::Ok,
        reference: hz.refs[0],
    }
}

/// One row of the control log.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ControlLogRow {
    pub t: f64,
    pub x: f64,
    pub y: f64,
    pub theta: f64,
    pub ref_x: f64,
    pub ref_y: f64,
    pub ref_theta: f64,
    pub u0: f64,
    pub u1: f64,
    /// Horizon cost of the returned solution.
    pub cost: f64,
    pub status: HorizonStatus,
}

impl ControlLogRow {
    pub fn new(t: f64, pose: Pose2, sol: &HorizonSolution) -> Self {
        let r = sol.reference.pose;
        ControlLogRow {
            t,
            x: pose.x,
            y: pose.y,
            theta: pose.theta,
            ref_x: r.x,
            ref_y: r.y,
            ref_theta: r.theta,
            u0: sol.u0[0],
            u1: sol.u0[1],
            cost: sol.cost,
            status: sol.status,
        }
    }

    pub fn position_error(&self) -> f64 {
        (self.x - self.ref_x).hypot(self.y - self.ref_y)
    }
}

impl CsvRecord for ControlLogRow {
    const COLUMNS: &'static [&'static str] =
        &["t", "x", "y", "theta", "ref_x", "ref_y", "ref_theta", "u0", "u1", "cost", "status"];
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::kinematics::step;
    use crate::minco::{assemble_and_solve, BoundaryConditions};
    use crate::ms_trajectory::reference_position_at;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn curvy_traj(x_iv: f64) -> MsTrajectory {
        let bc = BoundaryConditions::rest(0.3, 1.5);
        let wps = [[0.6, 1.0], [1.0, 2.2], [1.3, 3.1]];
        let durs = [1.0, 0.9, 1.1, 1.2];
        let m = assemble_and_solve(&bc, &wps, 4.0, &durs).unwrap();
        MsTrajectory::new(
            Pose2::new(1.0, -2.0, 0.3),
            IcrParams::new(0.3, -0.3, x_iv).unwrap(),
            m.into_coeffs(),
            durs.to_vec(),
        )
        .unwrap()
    }

    fn straight_traj(length: f64, duration: f64) -> MsTrajectory {
        let bc = BoundaryConditions {
            s0: [0.0, length / duration, 0.0],
            s_f_rates: [length / duration, 0.0],
            ..BoundaryConditions::rest(0.0, 0.0)
        };
        let m = assemble_and_solve(&bc, &[], length, &[duration]).unwrap();
        MsTrajectory::new(Pose2::new(0.0, 0.0, 0.0), IcrParams::default(), m.into_coeffs(), vec![duration]).unwrap()
    }

    #[test]
    fn table_matches_full_integration() {
        let traj = curvy_traj(0.2);
        let table = ReferenceTable::preintegrate(&traj, 0.1).unwrap();
        for (j, s) in table.samples().iter().enumerate() {
            let r = table.reference_at(j as f64 * 0.1);
            assert_eq!(r.pose.position(), *s);
        }
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        for _ in 0..1000 {
            let t = rng.random_range(0.0..traj.total_duration());
            let r = table.reference_at(t);
            let o = reference_position_at(&traj, t, 400).unwrap();
            assert!((r.pose.x - o[0]).hypot(r.pose.y - o[1]) < 1e-9);
        }
    }

    #[test]
    fn beyond_end_holds_goal() {
        let traj = curvy_traj(0.0);
        let table = ReferenceTable::preintegrate(&traj, 0.1).unwrap();
        let end = table.reference_at(traj.total_duration());
        let past = table.reference_at(traj.total_duration() + 3.0);
        assert_eq!(end.pose, past.pose);
        assert_eq!((past.v, past.omega), (0.0, 0.0));
    }

    #[test]
    fn horizon_gradient_matches_finite_differences() {
        let traj = curvy_traj(0.2);
        let table = ReferenceTable::preintegrate(&traj, 0.1).unwrap();
        let icr = traj.icr();
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        for model in [InputModel::Twist, InputModel::Wheel] {
            let cfg = HorizonConfig { model, horizon: 0.5, ..Default::default() };
            let n = cfg.steps();
            let refs: Vec<_> = (0..=n).map(|i| table.reference_at(0.7 + i as f64 * cfg.dt)).collect();
            let u_ref = refs[..n].iter().map(|r| reference_input(model, r, &icr)).collect();
            let hz = Horizon { cfg: &cfg, icr, start: Pose2::new(1.1, -2.0, 0.5), refs, u_ref };
            let u: Vec<f64> = (0..2 * n).map(|_| rng.random_range(-1.0..1.0)).collect();
            let mut g = vec![0.0; 2 * n];
            hz.cost(&u, &mut g);
            let mut scratch = vec![0.0; 2 * n];
            for k in 0..2 * n {
                let h = 1e-6;
                let mut a = u.clone();
                a[k] += h;
                let mut b = u.clone();
                b[k] -= h;
                let fd = (hz.cost(&a, &mut scratch) - hz.cost(&b, &mut scratch)) / (2.0 * h);
                assert!((fd - g[k]).abs() < 1e-6 * fd.abs().max(1.0), "{model:?} {k}: {} vs {fd}", g[k]);
            }
        }
    }

    #[test]
    fn perfect_tracking_is_a_fixed_point() {
        let traj = straight_traj(3.0, 3.0);
        let table = ReferenceTable::preintegrate(&traj, 0.1).unwrap();
        let cfg = HorizonConfig { w_u: [0.0, 0.0], ..Default::default() };
        let sol = solve_horizon(Pose2::new(0.6, 0.0, 0.0), 0.6, &table, &cfg, &traj.icr(), None);
        assert!(sol.cost < 1e-12, "{}", sol.cost);
        assert!((sol.u0[0] - 1.0).abs() < 1e-3 && sol.u0[1].abs() < 1e-3);
    }

    #[test]
    fn cost_never_increases_and_bounds_hold() {
        let traj = curvy_traj(0.2);
        let table = ReferenceTable::preintegrate(&traj, 0.1).unwrap();
        let cfg = HorizonConfig { u_min: [-0.5, -0.5], u_max: [0.5, 0.5], ..Default::default() };
        let sol = solve_horizon(Pose2::new(1.3, -2.2, 0.0), 0.5, &table, &cfg, &traj.icr(), None);
        assert!(sol.cost <= sol.initial_cost);
        assert!(sol.inputs.iter().all(|u| u.iter().all(|v| (-0.5..=0.5).contains(v))));
    }

    #[test]
    fn lateral_offset_converges() {
        let traj = straight_traj(6.0, 6.0);
        let table = ReferenceTable::preintegrate(&traj, 0.1).unwrap();
        let cfg = HorizonConfig::default();
        let icr = traj.icr();
        let mut pose = Pose2::new(0.0, 0.1, 0.0);
        let mut warm: Option<HorizonSolution> = None;
        let mut t = 0.0;
        while t < 2.0 - 1e-9 {
            let sol = solve_horizon(pose, t, &table, &cfg, &icr, warm.as_ref());
            pose = step(pose, model_twist(cfg.model, sol.u0, &icr), cfg.dt);
            warm = Some(sol);
            t += cfg.dt;
        }
        let r = table.reference_at(t);
        assert!(pose.distance_to(r.pose.position()) < 0.02, "{pose:?} vs {:?}", r.pose);
    }

    #[test]
    fn control_log_has_fixed_columns() {
        let mut buf = Vec::new();
        crate::export::write_csv::<ControlLogRow, _>(&[], &mut buf).unwrap();
        let empty = String::from_utf8(buf).unwrap();
        let traj = straight_traj(3.0, 3.0);
        let table = ReferenceTable::preintegrate(&traj, 0.1).unwrap();
        let sol = solve_horizon(Pose2::default(), 0.0, &table, &HorizonConfig::default(), &traj.icr(), None);
        let mut buf = Vec::new();
        crate::export::write_csv(&[ControlLogRow::new(0.0, Pose2::default(), &sol)], &mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert_eq!(text.lines().next(), empty.lines().next());
        assert!(text.lines().nth(1).unwrap().ends_with(",ok"));
    }
}
