//! Deterministic first-order optimizers: limited-memory BFGS with a strong
//! Wolfe line search (Nocedal & Wright, ch. 3 and 7) and Adam.
//!
//! The L-BFGS line search only ever accepts points satisfying the Armijo
//! condition, so the sequence of accepted objective values is non-increasing;
//! callers rely on this for monotone-acceptance guarantees.

use alloc::collections::VecDeque;
use alloc::vec;
use alloc::vec::Vec;

use crate::numeric;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum OptimError {
    /// Objective or gradient was non-finite at the initial point.
    NonFiniteObjective,
}

impl core::fmt::Display for OptimError {
    fn fmt(&self, f: &mut core::fmt::Formatter<'_>) -> core::fmt::Result {
        match self {
            OptimError::NonFiniteObjective => f.write_str("non-finite objective"),
        }
    }
}

#[cfg(feature = "std")]
impl std::error::Error for OptimError {}

#[derive(Debug, Clone)]
pub struct LbfgsConfig {
    /// Number of curvature pairs kept.
    pub memory: usize,
    pub max_iter: usize,
    /// Convergence threshold on the gradient infinity norm.
    pub tol: f64,
    /// Armijo (sufficient decrease) constant.
    pub c1: f64,
    /// Curvature constant.
    pub c2: f64,
    pub max_line_search: usize,
}

impl Default for LbfgsConfig {
    fn default() -> Self {
        LbfgsConfig {
            memory: 10,
            max_iter: 200,
            tol: 1e-6,
            c1: 1e-4,
            c2: 0.9,
            max_line_search: 40,
        }
    }
}

#[derive(Debug, Clone)]
pub struct LbfgsOutcome {
    pub x: Vec<f64>,
    pub value: f64,
    pub grad_norm: f64,
    pub iterations: usize,
    pub converged: bool,
    /// Accepted objective values, starting with the initial one.
    pub trace: Vec<f64>,
}

struct Pair {
    s: Vec<f64>,
    y: Vec<f64>,
    rho: f64,
}

/// Two-loop recursion computing -H g.
fn search_direction(history: &VecDeque<Pair>, grad: &[f64]) -> Vec<f64> {
    let mut q: Vec<f64> = grad.to_vec();
    let mut alphas = vec![0.0; history.len()];
    for (i, p) in history.iter().enumerate().rev() {
        let a = p.rho * numeric::dot(&p.s, &q);
        alphas[i] = a;
        for (qj, yj) in q.iter_mut().zip(&p.y) {
            *qj -= a * yj;
        }
    }
    if let Some(last) = history.back() {
        let gamma = numeric::dot(&last.s, &last.y) / numeric::dot(&last.y, &last.y);
        for qj in q.iter_mut() {
            *qj *= gamma;
        }
    }
    for (i, p) in history.iter().enumerate() {
        let b = p.rho * numeric::dot(&p.y, &q);
        for (qj, sj) in q.iter_mut().zip(&p.s) {
            *qj += (alphas[i] - b) * sj;
        }
    }
    for qj in q.iter_mut() {
        *qj = -*qj;
    }
    q
}

/// Minimize `f` (which returns the value and fills the gradient) from `x0`.
pub fn lbfgs<F>(mut f: F, x0: Vec<f64>, cfg: &LbfgsConfig) -> Result<LbfgsOutcome, OptimError>
where
    F: FnMut(&[f64], &mut [f64]) -> f64,
{
    let n = x0.len();
    let mut x = x0;
    let mut grad = vec![0.0; n];
    let mut fx = f(&x, &mut grad);
    if !fx.is_finite() || !numeric::all_finite(&grad) {
        return Err(OptimError::NonFiniteObjective);
    }
    let mut trace = vec![fx];
    let mut history: VecDeque<Pair> = VecDeque::new();
    let mut converged = false;
    let mut iterations = 0;

    for iter in 0..cfg.max_iter {
        if numeric::norm_inf(&grad) < cfg.tol {
            converged = true;
            break;
        }
        iterations = iter + 1;

        let mut dir = search_direction(&history, &grad);
        let mut dg = numeric::dot(&grad, &dir);
        if dg >= 0.0 {
            // not a descent direction; restart from steepest descent
            history.clear();
            dir = grad.iter().map(|g| -g).collect();
            dg = -numeric::dot(&grad, &grad);
            if dg == 0.0 {
                converged = true;
                break;
            }
        }

        let alpha0 = if history.is_empty() {
            numeric::min(1.0, 1.0 / numeric::max(numeric::norm2(&grad), 1e-12))
        } else {
            1.0
        };
        match wolfe_search(&mut f, &x, fx, &dir, dg, alpha0, cfg) {
            Some(step) => {
                let s: Vec<f64> = step.x.iter().zip(&x).map(|(a, b)| a - b).collect();
                let y: Vec<f64> = step.grad.iter().zip(&grad).map(|(a, b)| a - b).collect();
                let sy = numeric::dot(&s, &y);
                if sy > 1e-10 * numeric::norm2(&s) * numeric::norm2(&y) {
                    if history.len() == cfg.memory {
                        history.pop_front();
                    }
                    history.push_back(Pair {
                        s,
                        y,
                        rho: 1.0 / sy,
                    });
                }
                x = step.x;
                fx = step.value;
                grad = step.grad;
                trace.push(fx);
            }
            // no acceptable step: stop at the best point seen
            None => break,
        }
    }

    let grad_norm = numeric::norm_inf(&grad);
    if grad_norm < cfg.tol {
        converged = true;
    }
    Ok(LbfgsOutcome {
        x,
        value: fx,
        grad_norm,
        iterations,
        converged,
        trace,
    })
}

struct Step {
    x: Vec<f64>,
    value: f64,
    grad: Vec<f64>,
}

struct Probe {
    alpha: f64,
    value: f64,
    slope: f64,
    x: Vec<f64>,
    grad: Vec<f64>,
}

/// Strong Wolfe line search: bracketing stage followed by bisection zoom.
fn wolfe_search<F>(
    f: &mut F,
    x: &[f64],
    fx: f64,
    dir: &[f64],
    dg: f64,
    alpha0: f64,
    cfg: &LbfgsConfig,
) -> Option<Step>
where
    F: FnMut(&[f64], &mut [f64]) -> f64,
{
    let n = x.len();
    let mut probe = |alpha: f64| -> Probe {
        let xa: Vec<f64> = x.iter().zip(dir).map(|(xi, di)| xi + alpha * di).collect();
        let mut ga = vec![0.0; n];
        let va = f(&xa, &mut ga);
        let slope = numeric::dot(&ga, dir);
        Probe {
            alpha,
            value: va,
            slope,
            x: xa,
            grad: ga,
        }
    };
    let armijo = |alpha: f64, value: f64| value <= fx + cfg.c1 * alpha * dg;
    let curvature = |slope: f64| numeric::abs(slope) <= cfg.c2 * numeric::abs(dg);

    let mut prev_alpha = 0.0;
    let mut prev_value = fx;
    let mut alpha = alpha0;
    let mut bracket: Option<(f64, f64, f64)> = None; // (lo, f_lo, hi)
    let mut lo_probe: Option<Probe> = None;

    for i in 0..cfg.max_line_search {
        let p = probe(alpha);
        if !p.value.is_finite() || !armijo(alpha, p.value) || (i > 0 && p.value >= prev_value) {
            bracket = Some((prev_alpha, prev_value, alpha));
            break;
        }
        if curvature(p.slope) {
            return Some(Step {
                x: p.x,
                value: p.value,
                grad: p.grad,
            });
        }
        if p.slope >= 0.0 {
            let a = p.alpha;
            let v = p.value;
            lo_probe = Some(p);
            bracket = Some((a, v, prev_alpha));
            break;
        }
        prev_alpha = alpha;
        prev_value = p.value;
        lo_probe = Some(p);
        alpha *= 2.0;
    }

    let (mut lo, mut f_lo, mut hi) = bracket?;
    let mut best = lo_probe.filter(|p| p.alpha == lo && armijo(lo, p.value));

    for _ in 0..cfg.max_line_search {
        let mid = 0.5 * (lo + hi);
        let p = probe(mid);
        if !p.value.is_finite() || !armijo(mid, p.value) || p.value >= f_lo {
            hi = mid;
        } else {
            if curvature(p.slope) {
                return Some(Step {
                    x: p.x,
                    value: p.value,
                    grad: p.grad,
                });
            }
            if p.slope * (hi - lo) >= 0.0 {
                hi = lo;
            }
            lo = mid;
            f_lo = p.value;
            best = Some(p);
        }
        if numeric::abs(hi - lo) < 1e-14 {
            break;
        }
    }

    // zoom exhausted: fall back to the best Armijo point found, if any
    best.map(|p| Step {
        x: p.x,
        value: p.value,
        grad: p.grad,
    })
}

#[derive(Debug, Clone, Copy)]
pub struct AdamConfig {
    pub learning_rate: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
}

impl AdamConfig {
    pub fn with_learning_rate(learning_rate: f64) -> Self {
        AdamConfig {
            learning_rate,
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-8,
        }
    }
}

/// Adam optimizer state (Kingma & Ba).
#[derive(Debug, Clone)]
pub struct Adam {
    cfg: AdamConfig,
    m: Vec<f64>,
    v: Vec<f64>,
    t: u64,
}

impl Adam {
    pub fn new(cfg: AdamConfig, n: usize) -> Self {
        Adam {
            cfg,
            m: vec![0.0; n],
            v: vec![0.0; n],
            t: 0,
        }
    }

    pub fn step(&mut self, params: &mut [f64], grad: &[f64]) {
        debug_assert_eq!(params.len(), self.m.len());
        debug_assert_eq!(params.len(), grad.len());
        self.t += 1;
        let b1 = self.cfg.beta1;
        let b2 = self.cfg.beta2;
        let bc1 = 1.0 - numeric::powf(b1, self.t as f64);
        let bc2 = 1.0 - numeric::powf(b2, self.t as f64);
        for i in 0..params.len() {
            self.m[i] = b1 * self.m[i] + (1.0 - b1) * grad[i];
            self.v[i] = b2 * self.v[i] + (1.0 - b2) * grad[i] * grad[i];
            let mhat = self.m[i] / bc1;
            let vhat = self.v[i] / bc2;
            params[i] -= self.cfg.learning_rate * mhat / (numeric::sqrt(vhat) + self.cfg.epsilon);
        }
    }
}
