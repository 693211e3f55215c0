//! Limited-memory BFGS with a strong Wolfe line search.
//!
//! Two-loop recursion for the quasi-Newton direction (Nocedal's compact
//! form), scaled by `s.y / y.y`, with bracketing + zoom line search
//! enforcing the strong Wolfe conditions. A fixed step at learning rate 1
//! diverges on stiff residual surfaces, so every accepted step satisfies
//! sufficient decrease.

use std::collections::VecDeque;

use crate::Result;

const WOLFE_C1: f64 = 1e-4;
const WOLFE_C2: f64 = 0.9;
const MAX_LINE_SEARCH_STEPS: usize = 25;

#[derive(Debug, Clone, Copy)]
pub struct LbfgsOptions {
    /// Initial trial step length of every line search.
    pub learning_rate: f64,
    /// Maximum quasi-Newton iterations per call.
    pub max_iterations: usize,
    /// Number of curvature pairs retained.
    pub history_size: usize,
    /// Stop when the gradient max-norm falls below this.
    pub grad_tolerance: f64,
}

impl Default for LbfgsOptions {
    fn default() -> Self {
        Self {
            learning_rate: 1.0,
            max_iterations: 20,
            history_size: 20,
            grad_tolerance: 1e-12,
        }
    }
}

#[derive(Debug)]
pub struct LbfgsOutcome {
    pub theta: Vec<f64>,
    pub loss: f64,
    pub grad_norm: f64,
    pub iterations: usize,
    pub function_evals: usize,
    /// Every accepted step satisfied the sufficient-decrease condition.
    pub monotone: bool,
}

/// Optimizer state carried across bounded calls on the same objective:
/// curvature history plus the last accepted evaluation. Reset whenever the
/// objective changes (e.g. the training batch is resampled).
#[derive(Debug, Default)]
pub struct LbfgsState {
    history: VecDeque<(Vec<f64>, Vec<f64>, f64)>,
    cached: Option<(Vec<f64>, f64, Vec<f64>)>,
}

impl LbfgsState {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn reset(&mut self) {
        self.history.clear();
        self.cached = None;
    }
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn max_norm(v: &[f64]) -> f64 {
    v.iter().fold(0.0f64, |m, x| m.max(x.abs()))
}

/// Minimizes `objective` starting from `theta0` with fresh optimizer state.
pub fn minimize<F>(options: &LbfgsOptions, theta0: Vec<f64>, objective: F) -> Result<LbfgsOutcome>
where
    F: FnMut(&[f64], &mut [f64]) -> Result<f64>,
{
    minimize_with_state(options, &mut LbfgsState::new(), theta0, objective)
}

/// Minimizes `objective` starting from `theta0`, reusing curvature pairs and
/// the cached evaluation in `state`.
///
/// `objective(theta, grad)` returns the loss and fills `grad` with the full
/// gradient; it may return a non-finite loss for bad trial points, which the
/// line search treats as an overshoot.
pub fn minimize_with_state<F>(
    options: &LbfgsOptions,
    state: &mut LbfgsState,
    theta0: Vec<f64>,
    mut objective: F,
) -> Result<LbfgsOutcome>
where
    F: FnMut(&[f64], &mut [f64]) -> Result<f64>,
{
    let n = theta0.len();
    let mut theta = theta0;
    let mut grad = vec![0.0; n];
    let mut evals = 0usize;
    let mut f = match state.cached.take() {
        Some((cached_theta, cached_f, cached_grad))
            if cached_theta.len() == n
                && cached_theta
                    .iter()
                    .zip(&theta)
                    .all(|(a, b)| a.to_bits() == b.to_bits()) =>
        {
            grad = cached_grad;
            cached_f
        }
        _ => {
            let f = objective(&theta, &mut grad)?;
            evals += 1;
            f
        }
    };

    let history = &mut state.history;
    let mut iterations = 0usize;
    let mut monotone = true;

    for _ in 0..options.max_iterations {
        let gnorm = max_norm(&grad);
        if gnorm <= options.grad_tolerance || !f.is_finite() {
            break;
        }

        // two-loop recursion: d = -H g
        let mut direction: Vec<f64> = grad.iter().map(|g| -g).collect();
        let mut alphas = Vec::with_capacity(history.len());
        for (s, y, rho) in history.iter().rev() {
            let alpha = rho * dot(s, &direction);
            for (d, yi) in direction.iter_mut().zip(y) {
                *d -= alpha * yi;
            }
            alphas.push(alpha);
        }
        if let Some((s, y, _)) = history.back() {
            let gamma = dot(s, y) / dot(y, y);
            for d in direction.iter_mut() {
                *d *= gamma;
            }
        }
        for ((s, y, rho), alpha) in history.iter().zip(alphas.iter().rev()) {
            let beta = rho * dot(y, &direction);
            for (d, si) in direction.iter_mut().zip(s) {
                *d += (alpha - beta) * si;
            }
        }

        let mut dg = dot(&grad, &direction);
        if dg >= 0.0 {
            // not a descent direction; fall back to steepest descent
            history.clear();
            for (d, g) in direction.iter_mut().zip(&grad) {
                *d = -g;
            }
            dg = -dot(&grad, &grad);
            if dg >= 0.0 {
                break;
            }
        }

        match line_search(
            &mut objective,
            &theta,
            f,
            &grad,
            &direction,
            dg,
            options.learning_rate,
            &mut evals,
        )? {
            Some(step) => {
                if step.f > f + WOLFE_C1 * step.alpha * dg + 1e-14 {
                    monotone = false;
                }
                let s: Vec<f64> = step
                    .theta
                    .iter()
                    .zip(&theta)
                    .map(|(a, b)| a - b)
                    .collect();
                let y: Vec<f64> = step.grad.iter().zip(&grad).map(|(a, b)| a - b).collect();
                let sy = dot(&s, &y);
                let s_norm = dot(&s, &s).sqrt();
                let y_norm = dot(&y, &y).sqrt();
                if sy > 1e-10 * s_norm * y_norm {
                    if history.len() >= options.history_size {
                        history.pop_front();
                    }
                    history.push_back((s, y, 1.0 / sy));
                }
                theta = step.theta;
                grad = step.grad;
                f = step.f;
                iterations += 1;
            }
            None => break, // no acceptable step along this direction
        }
    }

    let grad_norm = max_norm(&grad);
    Ok(LbfgsOutcome {
        theta,
        loss: f,
        grad_norm,
        iterations,
        function_evals: evals,
        monotone,
    })
}

struct LineSearchStep {
    alpha: f64,
    theta: Vec<f64>,
    grad: Vec<f64>,
    f: f64,
}

/// Strong Wolfe line search: bracketing phase plus bisection zoom.
#[allow(clippy::too_many_arguments)]
fn line_search<F>(
    objective: &mut F,
    theta: &[f64],
    f0: f64,
    _grad0: &[f64],
    direction: &[f64],
    dg0: f64,
    first_step: f64,
    evals: &mut usize,
) -> Result<Option<LineSearchStep>>
where
    F: FnMut(&[f64], &mut [f64]) -> Result<f64>,
{
    let n = theta.len();
    let mut probe = |alpha: f64, grad: &mut Vec<f64>| -> Result<(f64, Vec<f64>)> {
        let trial: Vec<f64> = theta
            .iter()
            .zip(direction)
            .map(|(t, d)| t + alpha * d)
            .collect();
        let f = objective(&trial, grad)?;
        *evals += 1;
        Ok((f, trial))
    };

    let mut alpha_prev = 0.0;
    let mut f_prev = f0;
    let mut dg_prev = dg0;
    let mut alpha = first_step;
    let mut grad_buf = vec![0.0; n];

    let mut bracket: Option<(f64, f64, f64, f64, f64, f64)> = None; // (lo, f_lo, dg_lo, hi, f_hi, dg_hi)
    for _ in 0..MAX_LINE_SEARCH_STEPS {
        let (f_a, trial) = probe(alpha, &mut grad_buf)?;
        let dg_a = if f_a.is_finite() {
            dot(&grad_buf, direction)
        } else {
            f64::INFINITY
        };
        if !f_a.is_finite() || f_a > f0 + WOLFE_C1 * alpha * dg0 || (f_a >= f_prev && alpha_prev > 0.0)
        {
            bracket = Some((alpha_prev, f_prev, dg_prev, alpha, f_a, dg_a));
            break;
        }
        if dg_a.abs() <= -WOLFE_C2 * dg0 {
            return Ok(Some(LineSearchStep {
                alpha,
                theta: trial,
                grad: grad_buf,
                f: f_a,
            }));
        }
        if dg_a >= 0.0 {
            bracket = Some((alpha, f_a, dg_a, alpha_prev, f_prev, dg_prev));
            break;
        }
        alpha_prev = alpha;
        f_prev = f_a;
        dg_prev = dg_a;
        alpha *= 2.0;
    }

    let Some((mut lo, mut f_lo, mut dg_lo, mut hi, mut f_hi, _dg_hi)) = bracket else {
        return Ok(None);
    };

    // zoom by bisection with a safeguarded quadratic trial
    for _ in 0..MAX_LINE_SEARCH_STEPS {
        let mid = if f_hi.is_finite() && dg_lo.is_finite() && (hi - lo).abs() > 1e-16 {
            // quadratic interpolation through (lo, f_lo, dg_lo) and (hi, f_hi)
            let denom = 2.0 * (f_hi - f_lo - dg_lo * (hi - lo));
            let cand = if denom.abs() > 1e-300 {
                lo - dg_lo * (hi - lo) * (hi - lo) / denom
            } else {
                0.5 * (lo + hi)
            };
            let (a, b) = if lo < hi { (lo, hi) } else { (hi, lo) };
            let margin = 0.1 * (b - a);
            if cand.is_finite() && cand > a + margin && cand < b - margin {
                cand
            } else {
                0.5 * (lo + hi)
            }
        } else {
            0.5 * (lo + hi)
        };

        let (f_m, trial) = probe(mid, &mut grad_buf)?;
        let dg_m = if f_m.is_finite() {
            dot(&grad_buf, direction)
        } else {
            f64::INFINITY
        };
        if !f_m.is_finite() || f_m > f0 + WOLFE_C1 * mid * dg0 || f_m >= f_lo {
            hi = mid;
            f_hi = f_m;
        } else {
            if dg_m.abs() <= -WOLFE_C2 * dg0 {
                return Ok(Some(LineSearchStep {
                    alpha: mid,
                    theta: trial,
                    grad: grad_buf,
                    f: f_m,
                }));
            }
            if dg_m * (hi - lo) >= 0.0 {
                hi = lo;
                f_hi = f_lo;
            }
            lo = mid;
            f_lo = f_m;
            dg_lo = dg_m;
        }
        if (hi - lo).abs() <= 1e-14 * lo.abs().max(1.0) {
            break;
        }
    }

    // Accept the best sufficient-decrease point found, if any.
    if f_lo < f0 + WOLFE_C1 * lo * dg0 && lo > 0.0 {
        let (f_a, trial) = probe(lo, &mut grad_buf)?;
        return Ok(Some(LineSearchStep {
            alpha: lo,
            theta: trial,
            grad: grad_buf,
            f: f_a,
        }));
    }
    Ok(None)
}
