//! Box-constrained limited-memory quasi-Newton minimization.
//!
//! Each step fixes variables sitting on a bound with the gradient pushing
//! outward, takes an L-BFGS direction in the remaining ones and runs an
//! Armijo backtracking search along the projected path. Iterates never
//! leave the box.

use std::collections::VecDeque;
use std::time::Instant;

#[derive(Debug, Clone, Copy)]
pub struct BoxOptions {
    pub max_iter: usize,
    /// Stop when `‖P(x - ∇f) - x‖∞` falls below this.
    pub pg_tol: f64,
    pub memory: usize,
}

impl Default for BoxOptions {
    fn default() -> Self {
        Self {
            max_iter: 500,
            pg_tol: 1e-6,
            memory: 8,
        }
    }
}

#[derive(Debug, Clone)]
pub struct BoxResult {
    pub x: Vec<f64>,
    pub value: f64,
    pub iterations: usize,
    pub pg_norm: f64,
    pub converged: bool,
    pub timed_out: bool,
    /// A non-finite value or gradient was produced.
    pub non_finite: bool,
}

pub fn project(x: &mut [f64], lower: &[f64], upper: &[f64]) {
    for ((v, lo), hi) in x.iter_mut().zip(lower).zip(upper) {
        *v = v.clamp(*lo, *hi);
    }
}

pub fn projected_gradient_norm(x: &[f64], g: &[f64], lower: &[f64], upper: &[f64]) -> f64 {
    x.iter()
        .zip(g)
        .zip(lower.iter().zip(upper))
        .map(|((&xi, &gi), (&lo, &hi))| ((xi - gi).clamp(lo, hi) - xi).abs())
        .fold(0.0, f64::max)
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Minimizes `f` over `[lower, upper]` starting from `x0` (projected first).
/// `f` writes the gradient into its second argument and returns the value.
pub fn minimize_box<F>(
    mut f: F,
    x0: &[f64],
    lower: &[f64],
    upper: &[f64],
    opts: &BoxOptions,
    deadline: Option<Instant>,
) -> BoxResult
where
    F: FnMut(&[f64], &mut [f64]) -> f64,
{
    let n = x0.len();
    let mut x = x0.to_vec();
    project(&mut x, lower, upper);
    let mut g = vec![0.0; n];
    let mut fx = f(&x, &mut g);
    let mut result = BoxResult {
        x: x.clone(),
        value: fx,
        iterations: 0,
        pg_norm: f64::INFINITY,
        converged: false,
        timed_out: false,
        non_finite: false,
    };
    if !fx.is_finite() || g.iter().any(|v| !v.is_finite()) {
        result.non_finite = true;
        return result;
    }

    let mut mem: VecDeque<(Vec<f64>, Vec<f64>, f64)> = VecDeque::with_capacity(opts.memory);
    let mut d = vec![0.0; n];
    let mut free = vec![true; n];
    let mut x_new = vec![0.0; n];
    let mut g_new = vec![0.0; n];
    let mut alpha_buf = vec![0.0; opts.memory.max(1)];

    for iter in 0..opts.max_iter {
        let pg = projected_gradient_norm(&x, &g, lower, upper);
        result.pg_norm = pg;
        result.iterations = iter;
        if pg <= opts.pg_tol {
            result.converged = true;
            break;
        }
        if let Some(t) = deadline {
            if Instant::now() >= t {
                result.timed_out = true;
                break;
            }
        }

        for i in 0..n {
            let fixed = lower[i] == upper[i]
                || (x[i] <= lower[i] && g[i] > 0.0)
                || (x[i] >= upper[i] && g[i] < 0.0);
            free[i] = !fixed;
        }

        // two-loop recursion restricted to the free variables
        for i in 0..n {
            d[i] = if free[i] { -g[i] } else { 0.0 };
        }
        if !mem.is_empty() {
            for (k, (s, y, rho)) in mem.iter().enumerate().rev() {
                let a = rho * dot(s, &d);
                alpha_buf[k] = a;
                for i in 0..n {
                    d[i] -= a * y[i];
                }
            }
            let (s, y, _) = mem.back().expect("non-empty");
            let gamma = dot(s, y) / dot(y, y);
            for v in d.iter_mut() {
                *v *= gamma;
            }
            for (k, (s, y, rho)) in mem.iter().enumerate() {
                let b = rho * dot(y, &d);
                for i in 0..n {
                    d[i] += (alpha_buf[k] - b) * s[i];
                }
            }
            for i in 0..n {
                if !free[i] {
                    d[i] = 0.0;
                }
            }
        }
        let mut slope = dot(&d, &g);
        let dnorm = d.iter().fold(0.0f64, |m, v| m.max(v.abs()));
        if !(slope < 0.0) || dnorm == 0.0 {
            mem.clear();
            for i in 0..n {
                d[i] = if free[i] { -g[i] } else { 0.0 };
            }
            slope = dot(&d, &g);
            if !(slope < 0.0) {
                // nothing descends inside the box
                result.converged = true;
                break;
            }
        }
        let dnorm = d.iter().fold(0.0f64, |m, v| m.max(v.abs()));
        let mut step = if mem.is_empty() { (1.0 / dnorm).min(1.0) } else { 1.0 };

        let mut accepted = false;
        for _ in 0..50 {
            for i in 0..n {
                x_new[i] = (x[i] + step * d[i]).clamp(lower[i], upper[i]);
            }
            let decrease: f64 = x_new
                .iter()
                .zip(&x)
                .zip(&g)
                .map(|((a, b), gi)| (a - b) * gi)
                .sum();
            let f_new = f(&x_new, &mut g_new);
            if f_new.is_finite() && f_new <= fx + 1e-4 * decrease.min(0.0) && decrease <= 0.0 {
                if !g_new.iter().all(|v| v.is_finite()) {
                    break;
                }
                let s: Vec<f64> = x_new.iter().zip(&x).map(|(a, b)| a - b).collect();
                let y: Vec<f64> = g_new.iter().zip(&g).map(|(a, b)| a - b).collect();
                let sy = dot(&s, &y);
                if sy > 1e-12 * dot(&s, &s).sqrt() * dot(&y, &y).sqrt() && sy > 0.0 {
                    if mem.len() == opts.memory {
                        mem.pop_front();
                    }
                    mem.push_back((s, y, 1.0 / sy));
                }
                std::mem::swap(&mut x, &mut x_new);
                std::mem::swap(&mut g, &mut g_new);
                fx = f_new;
                accepted = true;
                break;
            }
            step *= 0.5;
        }
        if !accepted {
            if mem.is_empty() {
                // steepest descent failed too: numerically stationary
                break;
            }
            mem.clear();
        }
        result.iterations = iter + 1;
    }

    result.pg_norm = projected_gradient_norm(&x, &g, lower, upper);
    if result.pg_norm <= opts.pg_tol {
        result.converged = true;
    }
    result.x = x;
    result.value = fx;
    result
}
