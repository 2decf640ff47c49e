//! Limited-memory BFGS with a strong-Wolfe line search.

use std::collections::VecDeque;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LbfgsParams {
    pub memory: usize,
    /// Stop when `‖∇f‖_∞` falls below this.
    pub g_tol: f64,
    /// Stop when the relative decrease over the last few iterations falls below this.
    pub f_tol: f64,
    pub max_iter: usize,
    pub c1: f64,
    pub c2: f64,
    pub max_linesearch: usize,
}

impl Default for LbfgsParams {
    fn default() -> Self {
        Self { memory: 16, g_tol: 1e-5, f_tol: 1e-7, max_iter: 300, c1: 1e-4, c2: 0.9, max_linesearch: 40 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LbfgsStatus {
    GradientTol,
    FunctionTol,
    MaxIter,
    LineSearchFail,
    /// The objective was not finite at the start point.
    NonFinite,
}

impl LbfgsStatus {
    pub fn converged(self) -> bool {
        matches!(self, Self::GradientTol | Self::FunctionTol)
    }
}

#[derive(Debug, Clone)]
pub struct LbfgsResult {
    pub x: Vec<f64>,
    pub f: f64,
    pub grad_norm: f64,
    pub status: LbfgsStatus,
    pub iterations: usize,
    pub evaluations: usize,
}

/// Per-iteration progress passed to the observer.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct IterationInfo {
    pub iteration: usize,
    pub f: f64,
    pub grad_norm: f64,
    pub step: f64,
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn inf_norm(a: &[f64]) -> f64 {
    a.iter().fold(0.0, |m, v| m.max(v.abs()))
}

/// Minimizer of the cubic through `(a, fa, da)` and `(b, fb, db)`, safeguarded
/// to the inner 80% of the bracket.
fn interpolate(a: f64, fa: f64, da: f64, b: f64, fb: f64, db: f64) -> f64 {
    let (lo, hi) = if a < b { (a, b) } else { (b, a) };
    let guard = 0.1 * (hi - lo);
    let d1 = da + db - 3.0 * (fa - fb) / (a - b);
    let disc = d1 * d1 - da * db;
    let mut t = 0.5 * (a + b);
    if disc >= 0.0 && fa.is_finite() && fb.is_finite() {
        let d2 = (b - a).signum() * disc.sqrt();
        let den = db - da + 2.0 * d2;
        if den != 0.0 {
            let c = b - (b - a) * (db + d2 - d1) / den;
            if c.is_finite() {
                t = c;
            }
        }
    }
    t.clamp(lo + guard, hi - guard)
}

#[derive(Clone, Copy)]
struct Probe {
    alpha: f64,
    f: f64,
    d: f64,
}

/// Minimize `f` from `x0`. `f(x, g)` returns the value and writes the gradient.
/// `observe` is called after every accepted step.
pub fn lbfgs_minimize<F, O>(mut f: F, x0: &[f64], p: &LbfgsParams, mut observe: O) -> LbfgsResult
where
    F: FnMut(&[f64], &mut [f64]) -> f64,
    O: FnMut(&IterationInfo),
{
    let n = x0.len();
    let mut x = x0.to_vec();
    let mut g = vec![0.0; n];
    let mut fx = f(&x, &mut g);
    let mut evals = 1;
    if !fx.is_finite() || g.iter().any(|v| !v.is_finite()) {
        return LbfgsResult {
            x,
            f: fx,
            grad_norm: f64::NAN,
            status: LbfgsStatus::NonFinite,
            iterations: 0,
            evaluations: evals,
        };
    }
    let mut mem: VecDeque<(Vec<f64>, Vec<f64>, f64)> = VecDeque::with_capacity(p.memory);
    let mut history: VecDeque<f64> = VecDeque::from([fx]);
    const PAST: usize = 3;
    let mut d = vec![0.0; n];
    let mut xt = vec![0.0; n];
    let mut gt = vec![0.0; n];
    let mut alpha_buf = vec![0.0; p.memory];
    let mut status = LbfgsStatus::MaxIter;
    let mut iter = 0;
    let mut restarted = false;

    while iter < p.max_iter {
        let gn = inf_norm(&g);
        if gn < p.g_tol {
            status = LbfgsStatus::GradientTol;
            break;
        }
        // two-loop recursion
        d.iter_mut().zip(&g).for_each(|(di, gi)| *di = -gi);
        for (k, (s, y, rho)) in mem.iter().enumerate().rev() {
            let a = rho * dot(s, &d);
            alpha_buf[k] = a;
            d.iter_mut().zip(y).for_each(|(di, yi)| *di -= a * yi);
        }
        if let Some((s, y, _)) = mem.back() {
            let gamma = dot(s, y) / dot(y, y);
            d.iter_mut().for_each(|di| *di *= gamma);
        }
        for (k, (s, y, rho)) in mem.iter().enumerate() {
            let b = rho * dot(y, &d);
            let a = alpha_buf[k];
            d.iter_mut().zip(s).for_each(|(di, si)| *di += (a - b) * si);
        }
        let mut dphi0 = dot(&g, &d);
        if !(dphi0 < 0.0) {
            mem.clear();
            d.iter_mut().zip(&g).for_each(|(di, gi)| *di = -gi);
            dphi0 = dot(&g, &d);
        }
        let alpha0 = if mem.is_empty() { (1.0 / inf_norm(&d)).min(1.0) } else { 1.0 };

        // strong-Wolfe line search
        let phi0 = fx;
        let mut eval = |alpha: f64, xt: &mut [f64], gt: &mut [f64]| -> Probe {
            for i in 0..n {
                xt[i] = x[i] + alpha * d[i];
            }
            let v = f(xt, gt);
            evals += 1;
            let dv = dot(gt, &d);
            if v.is_finite() && dv.is_finite() {
                Probe { alpha, f: v, d: dv }
            } else {
                Probe { alpha, f: f64::INFINITY, d: f64::NAN }
            }
        };
        let armijo = |pr: &Probe| pr.f <= phi0 + p.c1 * pr.alpha * dphi0;
        let curvature = |pr: &Probe| pr.d.abs() <= -p.c2 * dphi0;

        let mut accepted: Option<Probe> = None;
        let mut prev = Probe { alpha: 0.0, f: phi0, d: dphi0 };
        let mut alpha = alpha0;
        let mut bracket: Option<(Probe, Probe)> = None;
        let mut tries = 0;
        while tries < p.max_linesearch {
            tries += 1;
            let cur = eval(alpha, &mut xt, &mut gt);
            if !armijo(&cur) || (prev.alpha > 0.0 && cur.f >= prev.f) {
                bracket = Some((prev, cur));
                break;
            }
            if curvature(&cur) {
                accepted = Some(cur);
                break;
            }
            if cur.d >= 0.0 {
                bracket = Some((cur, prev));
                break;
            }
            prev = cur;
            alpha *= 2.0;
        }
        // xt/gt hold the last probe; recompute on acceptance from zoom
        let mut best_lo: Option<f64> = None;
        if accepted.is_none() {
            if let Some((mut lo, mut hi)) = bracket {
                while tries < p.max_linesearch {
                    tries += 1;
                    let a = if hi.f.is_finite() && hi.d.is_finite() {
                        interpolate(lo.alpha, lo.f, lo.d, hi.alpha, hi.f, hi.d)
                    } else {
                        0.5 * (lo.alpha + hi.alpha)
                    };
                    let cur = eval(a, &mut xt, &mut gt);
                    if !armijo(&cur) || cur.f >= lo.f {
                        hi = cur;
                    } else {
                        if curvature(&cur) {
                            accepted = Some(cur);
                            break;
                        }
                        if cur.d * (hi.alpha - lo.alpha) >= 0.0 {
                            hi = lo;
                        }
                        lo = cur;
                    }
                    if (hi.alpha - lo.alpha).abs() <= 1e-16 * lo.alpha.max(1.0) {
                        break;
                    }
                }
                if accepted.is_none() && lo.alpha > 0.0 && lo.f < phi0 {
                    best_lo = Some(lo.alpha);
                }
            } else if prev.alpha > 0.0 && prev.f < phi0 {
                best_lo = Some(prev.alpha);
            }
        }

        let (step, f_step) = match (&accepted, best_lo) {
            (Some(a), _) => (a.alpha, a.f),
            (None, Some(a)) => {
                // weak step: sufficient decrease only
                let pr = eval(a, &mut xt, &mut gt);
                if pr.f < phi0 {
                    (a, pr.f)
                } else {
                    (f64::NAN, f64::NAN)
                }
            }
            (None, None) => (f64::NAN, f64::NAN),
        };
        if !step.is_finite() {
            if !restarted && !mem.is_empty() {
                mem.clear();
                restarted = true;
                continue;
            }
            status = LbfgsStatus::LineSearchFail;
            break;
        }
        restarted = false;

        // xt, gt hold the accepted point
        let s: Vec<f64> = xt.iter().zip(&x).map(|(a, b)| a - b).collect();
        let y: Vec<f64> = gt.iter().zip(&g).map(|(a, b)| a - b).collect();
        let sy = dot(&s, &y);
        x.copy_from_slice(&xt);
        g.copy_from_slice(&gt);
        fx = f_step;
        if sy > 1e-12 * dot(&s, &s).sqrt() * dot(&y, &y).sqrt() {
            if mem.len() == p.memory {
                mem.pop_front();
            }
            mem.push_back((s, y, 1.0 / sy));
        }
        iter += 1;
        observe(&IterationInfo { iteration: iter, f: fx, grad_norm: inf_norm(&g), step });

        history.push_back(fx);
        if history.len() > PAST + 1 {
            history.pop_front();
        }
        if history.len() == PAST + 1 {
            let old = history[0];
            if (old - fx) / fx.abs().max(1.0) < p.f_tol {
                status = LbfgsStatus::FunctionTol;
                break;
            }
        }
    }
    LbfgsResult { grad_norm: inf_norm(&g), x, f: fx, status, iterations: iter, evaluations: evals }
}
