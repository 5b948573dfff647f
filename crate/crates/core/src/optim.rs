//! Smooth unconstrained and inequality-constrained minimization: BFGS with a
//! strong-Wolfe line search, and an augmented-Lagrangian outer loop.

use nalgebra::{DMatrix, DVector};

use crate::{Error, Result};

#[derive(Debug, Clone, Copy)]
pub struct BfgsOptions {
    pub max_iterations: usize,
    /// Stop once successive objective values differ by less than this and
    /// the gradient is below `loose_gradient_tol`.
    pub f_tol: f64,
    /// Stop unconditionally once the largest gradient component is below this.
    pub gradient_tol: f64,
    pub loose_gradient_tol: f64,
}

impl Default for BfgsOptions {
    fn default() -> Self {
        Self {
            max_iterations: 500,
            f_tol: 1e-10,
            gradient_tol: 1e-8,
            loose_gradient_tol: 1e-5,
        }
    }
}

#[derive(Debug, Clone)]
pub struct OptimResult {
    pub x: Vec<f64>,
    pub f: f64,
    pub gradient_norm: f64,
    pub iterations: usize,
    pub evaluations: usize,
    pub converged: bool,
    /// Objective after every accepted step, starting with the initial point.
    pub trace: Vec<f64>,
}

fn inf_norm(g: &DVector<f64>) -> f64 {
    g.iter().fold(0.0, |m, v| m.max(v.abs()))
}

struct Counted<F> {
    f: F,
    evaluations: usize,
}

impl<F> Counted<F>
where
    F: FnMut(&[f64]) -> Result<(f64, Vec<f64>)>,
{
    fn eval(&mut self, x: &DVector<f64>) -> Result<(f64, DVector<f64>)> {
        self.evaluations += 1;
        let (v, g) = (self.f)(x.as_slice())?;
        if !v.is_finite() || g.iter().any(|x| !x.is_finite()) {
            return Err(Error::NonFinite);
        }
        Ok((v, DVector::from_vec(g)))
    }
}

/// Minimizes a smooth function given as `x -> (f, ∇f)`.
pub fn bfgs<F>(f: F, x0: &[f64], opts: &BfgsOptions) -> Result<OptimResult>
where
    F: FnMut(&[f64]) -> Result<(f64, Vec<f64>)>,
{
    let n = x0.len();
    let mut fun = Counted { f, evaluations: 0 };
    let mut x = DVector::from_column_slice(x0);
    let (mut fx, mut g) = fun.eval(&x)?;
    let mut hinv = DMatrix::<f64>::identity(n, n);
    let mut trace = vec![fx];
    let mut converged = inf_norm(&g) <= opts.gradient_tol;
    let mut iterations = 0;
    let mut fresh_hessian = true;

    while !converged && iterations < opts.max_iterations {
        iterations += 1;
        let mut p = -(&hinv * &g);
        let mut slope = p.dot(&g);
        if !(slope < 0.0) {
            hinv = DMatrix::identity(n, n);
            fresh_hessian = true;
            p = -g.clone();
            slope = p.dot(&g);
        }
        let initial = if fresh_hessian {
            (1.0 / inf_norm(&g).max(1e-300)).min(1.0)
        } else {
            1.0
        };
        let step = match line_search(&mut fun, &x, fx, &p, slope, initial)? {
            Some(s) => s,
            None if !fresh_hessian => {
                hinv = DMatrix::identity(n, n);
                fresh_hessian = true;
                continue;
            }
            None => break,
        };
        let (alpha, f_new, g_new) = step;
        let s = &p * alpha;
        let y = &g_new - &g;
        let sy = s.dot(&y);
        x += &s;
        let df = (fx - f_new).abs();
        fx = f_new;
        g = g_new;
        trace.push(fx);
        if sy > 1e-14 * s.norm() * y.norm() {
            if fresh_hessian {
                // Scale the initial inverse Hessian before the first update.
                hinv *= sy / y.dot(&y);
                fresh_hessian = false;
            }
            let rho = 1.0 / sy;
            let hy = &hinv * &y;
            let yhy = y.dot(&hy);
            hinv += (&s * s.transpose()) * ((1.0 + rho * yhy) * rho)
                - (&hy * s.transpose() + &s * hy.transpose()) * rho;
            hinv = (&hinv + hinv.transpose()) * 0.5;
        }
        let gn = inf_norm(&g);
        if gn <= opts.gradient_tol || (df < opts.f_tol && gn <= opts.loose_gradient_tol) {
            converged = true;
        }
    }
    Ok(OptimResult {
        gradient_norm: inf_norm(&g),
        x: x.as_slice().to_vec(),
        f: fx,
        iterations,
        evaluations: fun.evaluations,
        converged,
        trace,
    })
}

type Step = (f64, f64, DVector<f64>);

/// Strong-Wolfe line search (bracketing then zoom with cubic interpolation).
fn line_search<F>(
    fun: &mut Counted<F>,
    x: &DVector<f64>,
    f0: f64,
    p: &DVector<f64>,
    d0: f64,
    initial: f64,
) -> Result<Option<Step>>
where
    F: FnMut(&[f64]) -> Result<(f64, Vec<f64>)>,
{
    const C1: f64 = 1e-4;
    const C2: f64 = 0.9;
    let mut eval = |a: f64| -> Result<(f64, DVector<f64>, f64)> {
        let (v, g) = fun.eval(&(x + p * a))?;
        let d = g.dot(p);
        Ok((v, g, d))
    };
    let mut a_prev = 0.0;
    let (mut f_prev, mut d_prev) = (f0, d0);
    let mut a = initial;
    for i in 0..30 {
        let (fa, ga, da) = eval(a)?;
        if fa > f0 + C1 * a * d0 || (i > 0 && fa >= f_prev) {
            return zoom(&mut eval, f0, d0, (a_prev, f_prev, d_prev), (a, fa, da));
        }
        if da.abs() <= -C2 * d0 {
            return Ok(Some((a, fa, ga)));
        }
        if da >= 0.0 {
            return zoom(&mut eval, f0, d0, (a, fa, da), (a_prev, f_prev, d_prev));
        }
        a_prev = a;
        f_prev = fa;
        d_prev = da;
        a *= 2.0;
    }
    Ok(None)
}

fn cubic_min(a: (f64, f64, f64), b: (f64, f64, f64)) -> Option<f64> {
    let (x0, f0, d0) = a;
    let (x1, f1, d1) = b;
    let d1_ = d0 + d1 - 3.0 * (f0 - f1) / (x0 - x1);
    let disc = d1_ * d1_ - d0 * d1;
    if disc < 0.0 {
        return None;
    }
    let d2 = (x1 - x0).signum() * disc.sqrt();
    let t = x1 - (x1 - x0) * (d1 + d2 - d1_) / (d1 - d0 + 2.0 * d2);
    t.is_finite().then_some(t)
}

fn zoom<E>(
    eval: &mut E,
    f0: f64,
    d0: f64,
    mut lo: (f64, f64, f64),
    mut hi: (f64, f64, f64),
) -> Result<Option<Step>>
where
    E: FnMut(f64) -> Result<(f64, DVector<f64>, f64)>,
{
    const C1: f64 = 1e-4;
    const C2: f64 = 0.9;
    let mut best: Option<Step> = None;
    for _ in 0..40 {
        let (a_lo, a_hi) = (lo.0.min(hi.0), lo.0.max(hi.0));
        let width = a_hi - a_lo;
        if width <= 1e-16 * a_hi.max(1.0) {
            break;
        }
        let mut a = cubic_min(lo, hi).unwrap_or(0.5 * (lo.0 + hi.0));
        if a < a_lo + 0.1 * width || a > a_hi - 0.1 * width {
            a = 0.5 * (lo.0 + hi.0);
        }
        let (fa, ga, da) = eval(a)?;
        if fa < f0 && best.as_ref().is_none_or(|b| fa < b.1) {
            best = Some((a, fa, ga.clone()));
        }
        if fa > f0 + C1 * a * d0 || fa >= lo.1 {
            hi = (a, fa, da);
        } else {
            if da.abs() <= -C2 * d0 {
                return Ok(Some((a, fa, ga)));
            }
            if da * (hi.0 - lo.0) >= 0.0 {
                hi = lo;
            }
            lo = (a, fa, da);
        }
    }
    // Accept any decrease found; the curvature update is skipped if unsuitable.
    Ok(best)
}

#[derive(Debug, Clone, Copy)]
pub struct AugmentedLagrangianOptions {
    pub inner: BfgsOptions,
    pub max_outer: usize,
    pub initial_penalty: f64,
    pub penalty_growth: f64,
    pub max_penalty: f64,
    /// Feasibility tolerance on every constraint value.
    pub feasibility_tol: f64,
}

impl Default for AugmentedLagrangianOptions {
    fn default() -> Self {
        Self {
            inner: BfgsOptions::default(),
            max_outer: 30,
            initial_penalty: 10.0,
            penalty_growth: 10.0,
            max_penalty: 1e10,
            feasibility_tol: 1e-8,
        }
    }
}

#[derive(Debug, Clone)]
pub struct ConstrainedResult {
    pub x: Vec<f64>,
    pub f: f64,
    pub constraints: Vec<f64>,
    pub multipliers: Vec<f64>,
    pub outer_iterations: usize,
    pub inner_iterations: usize,
    pub converged: bool,
    pub trace: Vec<f64>,
}

/// Value of the problem: objective, its gradient, constraint values and
/// their gradients. Constraints are of the form `c(x) ≤ 0`.
pub struct ConstrainedEval {
    pub f: f64,
    pub grad: Vec<f64>,
    pub c: Vec<f64>,
    pub c_grad: Vec<Vec<f64>>,
}

/// Minimizes `f` subject to `c_i(x) ≤ 0` by an augmented Lagrangian whose
/// inequality terms are clipped where the multiplier would turn negative.
pub fn augmented_lagrangian<F>(
    mut problem: F,
    x0: &[f64],
    opts: &AugmentedLagrangianOptions,
) -> Result<ConstrainedResult>
where
    F: FnMut(&[f64]) -> Result<ConstrainedEval>,
{
    let first = problem(x0)?;
    let m = first.c.len();
    let mut mu = vec![0.0; m];
    let mut rho = opts.initial_penalty;
    let mut x = x0.to_vec();
    let mut last = first;
    let mut trace = vec![last.f];
    let mut inner_iterations = 0;
    let mut previous_violation = f64::INFINITY;
    let mut converged = false;
    let mut outer = 0;

    while outer < opts.max_outer {
        outer += 1;
        let (mu_k, rho_k) = (mu.clone(), rho);
        let res = bfgs(
            |y: &[f64]| {
                let ev = problem(y)?;
                let mut v = ev.f;
                let mut g = ev.grad.clone();
                for i in 0..m {
                    let c = ev.c[i];
                    if c >= -mu_k[i] / rho_k {
                        v += mu_k[i] * c + 0.5 * rho_k * c * c;
                        let w = mu_k[i] + rho_k * c;
                        for (gj, cj) in g.iter_mut().zip(&ev.c_grad[i]) {
                            *gj += w * cj;
                        }
                    } else {
                        v -= mu_k[i] * mu_k[i] / (2.0 * rho_k);
                    }
                }
                Ok((v, g))
            },
            &x,
            &opts.inner,
        )?;
        inner_iterations += res.iterations;
        x = res.x;
        last = problem(&x)?;
        trace.push(last.f);
        let violation = last.c.iter().fold(0.0_f64, |a, &c| a.max(c));
        for i in 0..m {
            mu[i] = (mu[i] + rho * last.c[i]).max(0.0);
        }
        if violation <= opts.feasibility_tol && res.converged {
            converged = true;
            break;
        }
        if violation > 0.25 * previous_violation {
            rho = (rho * opts.penalty_growth).min(opts.max_penalty);
        }
        previous_violation = violation;
    }
    Ok(ConstrainedResult {
        x,
        f: last.f,
        constraints: last.c,
        multipliers: mu,
        outer_iterations: outer,
        inner_iterations,
        converged,
        trace,
    })
}
