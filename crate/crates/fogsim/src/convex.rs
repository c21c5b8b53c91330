//! Small dense convex solver and the fractional-programming loop.
//!
//! [`solve_convex`] minimizes a smooth convex objective over a box subject to
//! smooth convex inequality constraints `g_i(x) <= 0`. Inequalities go
//! through a log-barrier; each barrier subproblem is minimized by spectral
//! projected gradient (Barzilai-Borwein steps with an Armijo backtracking
//! safeguard) on variables rescaled to the unit box, so wildly different
//! variable magnitudes (Hz next to W next to slack seconds) cost nothing.
//! The barrier parameter grows geometrically until the duality-gap proxy
//! `m / t_bar` falls below the tolerance.
//!
//! [`minimize_fractional`] wraps a solve in the quadratic-transform loop for
//! problems containing a single ratio `A(x)/B(x)` with `A` convex positive
//! and `B` concave positive: for a fixed multiplier `t` the surrogate
//! `t A^2 + 1/(4 t B^2)` is convex and upper-bounds the ratio, with equality
//! at `t = 1/(2 A B)`; alternating solves with the closed-form multiplier
//! update drives `t` to a fixed point while the true objective descends
//! monotonically.

use thiserror::Error;

/// Smooth function: returns the value at `x` and, when a buffer is supplied,
/// writes the gradient into it.
pub type Func<'a> = Box<dyn Fn(&[f64], Option<&mut [f64]>) -> f64 + Send + Sync + 'a>;

/// A convex minimization instance. The caller guarantees convexity of the
/// objective and every constraint on the box; debug builds spot-check it on
/// random midpoints.
pub struct ConvexProblem<'a> {
    pub objective: Func<'a>,
    /// Inequality constraints `g_i(x) <= 0`.
    pub constraints: Vec<Func<'a>>,
    pub lower: Vec<f64>,
    pub upper: Vec<f64>,
}

#[derive(Debug, Clone)]
pub struct SolverOptions {
    /// Stationarity / duality-gap tolerance.
    pub tol: f64,
    /// Iteration cap per barrier subproblem.
    pub max_inner: usize,
    /// Cap on barrier continuation rounds.
    pub max_barrier_rounds: usize,
    /// Geometric growth factor of the barrier parameter.
    pub barrier_mult: f64,
    /// Relative change of `t` at which the quadratic-transform loop stops.
    pub fractional_tol: f64,
    /// Cap on quadratic-transform outer iterations.
    pub max_fractional_outer: usize,
}

impl Default for SolverOptions {
    fn default() -> Self {
        Self {
            tol: 1e-8,
            max_inner: 10_000,
            max_barrier_rounds: 60,
            barrier_mult: 20.0,
            fractional_tol: 1e-6,
            max_fractional_outer: 100,
        }
    }
}

/// Result of a [`solve_convex`] call.
#[derive(Debug, Clone)]
pub struct Solution {
    pub x: Vec<f64>,
    pub objective: f64,
    /// Scaled projected-gradient residual at the final iterate.
    pub stationarity: f64,
    /// Total inner iterations across barrier rounds.
    pub iterations: usize,
}

/// Result of a [`minimize_fractional`] call.
#[derive(Debug, Clone)]
pub struct FractionalSolution {
    pub x: Vec<f64>,
    /// Converged quadratic-transform multiplier.
    pub t: f64,
    pub outer_iterations: usize,
    /// True (non-surrogate) objective at each outer iterate, starting point
    /// included.
    pub objective_trace: Vec<f64>,
}

#[derive(Debug, Error)]
pub enum ConvexError {
    #[error("dimension mismatch: {0}")]
    Dimension(String),
    #[error("infeasible start: constraint {index} evaluates to {value:.6e} >= 0")]
    InfeasibleStart { index: usize, value: f64 },
    #[error("surrogate_ratio needs positive inputs, got a={a}, b={b}, t={t}")]
    SurrogateDomain { a: f64, b: f64, t: f64 },
    #[error("barrier continuation exhausted {rounds} rounds")]
    MaxIterations { rounds: usize, best: Solution },
    #[error("quadratic-transform loop did not converge in {outer} iterations")]
    FractionalNonConvergence {
        outer: usize,
        best: Box<FractionalSolution>,
    },
}

/// Quadratic-transform surrogate `t a^2 + 1/(4 t b^2)` of the ratio `a/b`.
///
/// Majorizes `a/b` for every `t > 0` and equals it exactly at the matched
/// multiplier `t = 1/(2ab)`.
pub fn surrogate_ratio(a: f64, b: f64, t: f64) -> Result<f64, ConvexError> {
    if !(a > 0.0 && b > 0.0 && t > 0.0) {
        return Err(ConvexError::SurrogateDomain { a, b, t });
    }
    Ok(t * a * a + 1.0 / (4.0 * t * b * b))
}

/// Matched multiplier `1/(2ab)` of the quadratic transform.
pub fn surrogate_multiplier(a: f64, b: f64) -> f64 {
    debug_assert!(a > 0.0 && b > 0.0);
    1.0 / (2.0 * a * b)
}

// ---------------------------------------------------------------------------
// Barrier + SPG machinery
// ---------------------------------------------------------------------------

struct Scaled<'p, 'a> {
    problem: &'p ConvexProblem<'a>,
    lower: Vec<f64>,
    widths: Vec<f64>,
    x_buf: Vec<f64>,
    grad_buf: Vec<f64>,
}

impl<'p, 'a> Scaled<'p, 'a> {
    fn new(problem: &'p ConvexProblem<'a>) -> Self {
        let n = problem.lower.len();
        let widths = problem
            .lower
            .iter()
            .zip(&problem.upper)
            .map(|(lo, hi)| hi - lo)
            .collect();
        Self {
            problem,
            lower: problem.lower.clone(),
            widths,
            x_buf: vec![0.0; n],
            grad_buf: vec![0.0; n],
        }
    }

    fn to_x(&mut self, u: &[f64]) {
        for j in 0..u.len() {
            self.x_buf[j] = self.lower[j] + self.widths[j] * u[j];
        }
    }

    fn to_u(&self, x: &[f64]) -> Vec<f64> {
        x.iter()
            .enumerate()
            .map(|(j, &v)| {
                if self.widths[j] > 0.0 {
                    ((v - self.lower[j]) / self.widths[j]).clamp(0.0, 1.0)
                } else {
                    0.0
                }
            })
            .collect()
    }

    fn objective_at(&mut self, u: &[f64]) -> f64 {
        self.to_x(u);
        (self.problem.objective)(&self.x_buf, None)
    }

    /// Barrier function `t_bar * f0(x(u)) - sum ln(-g_i(x(u)))`; infinite
    /// outside the strictly feasible region.
    fn barrier(&mut self, t_bar: f64, u: &[f64], grad: Option<&mut [f64]>) -> f64 {
        self.to_x(u);
        match grad {
            None => {
                let mut v = t_bar * (self.problem.objective)(&self.x_buf, None);
                for c in &self.problem.constraints {
                    let gi = c(&self.x_buf, None);
                    if gi >= 0.0 || !gi.is_finite() {
                        return f64::INFINITY;
                    }
                    v -= (-gi).ln();
                }
                v
            }
            Some(gout) => {
                let n = u.len();
                let f0 = (self.problem.objective)(&self.x_buf, Some(&mut self.grad_buf));
                for j in 0..n {
                    gout[j] = t_bar * self.grad_buf[j] * self.widths[j];
                }
                let mut v = t_bar * f0;
                for c in &self.problem.constraints {
                    let gi = c(&self.x_buf, Some(&mut self.grad_buf));
                    if gi >= 0.0 || !gi.is_finite() {
                        return f64::INFINITY;
                    }
                    v -= (-gi).ln();
                    let w = 1.0 / (-gi);
                    for j in 0..n {
                        gout[j] += w * self.grad_buf[j] * self.widths[j];
                    }
                }
                v
            }
        }
    }
}

/// Scaled projected-gradient residual `||u - P(u - g/(1+t_bar))||_inf`; the
/// `1 + t_bar` normalization keeps the measure comparable across barrier
/// rounds.
fn pg_residual(u: &[f64], g: &[f64], t_bar: f64) -> f64 {
    let s = 1.0 + t_bar;
    u.iter()
        .zip(g)
        .map(|(&uj, &gj)| (uj - (uj - gj / s).clamp(0.0, 1.0)).abs())
        .fold(0.0, f64::max)
}

/// One SPG run on the barrier subproblem at fixed `t_bar`.
/// Returns (iterations used, final residual).
fn spg(
    scaled: &mut Scaled,
    t_bar: f64,
    u: &mut [f64],
    eps: f64,
    max_iter: usize,
) -> (usize, f64) {
    let n = u.len();
    let mut g = vec![0.0; n];
    let mut g_new = vec![0.0; n];
    let mut trial = vec![0.0; n];
    let mut phi = scaled.barrier(t_bar, u, Some(&mut g));
    debug_assert!(phi.is_finite(), "barrier infinite at start");
    let g_inf = g.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    let mut alpha = if g_inf > 0.0 { (1.0 / g_inf).clamp(1e-14, 1e14) } else { 1.0 };
    let mut residual = pg_residual(u, &g, t_bar);
    let mut stagnant = 0u32;

    for it in 0..max_iter {
        if residual <= eps {
            return (it, residual);
        }
        let mut gtd = 0.0;
        let mut d_inf = 0.0f64;
        for j in 0..n {
            trial[j] = (u[j] - alpha * g[j]).clamp(0.0, 1.0);
            let dj = trial[j] - u[j];
            gtd += g[j] * dj;
            d_inf = d_inf.max(dj.abs());
        }
        if d_inf <= 1e-16 {
            return (it, residual);
        }

        // Armijo backtracking along the projected direction
        let mut lam = 1.0;
        let mut phi_try = f64::INFINITY;
        let mut accepted = false;
        for _ in 0..60 {
            for j in 0..n {
                g_new[j] = u[j] + lam * (trial[j] - u[j]); // reuse g_new as x-try
            }
            phi_try = scaled.barrier(t_bar, &g_new, None);
            if phi_try.is_finite() && phi_try <= phi + 1e-4 * lam * gtd {
                accepted = true;
                break;
            }
            lam *= 0.5;
        }
        if !accepted {
            return (it, residual); // numeric floor reached
        }

        // accept: compute new gradient, BB step, bookkeeping
        let mut s_dot_s = 0.0;
        let mut s_dot_y = 0.0;
        for j in 0..n {
            let uj_new = u[j] + lam * (trial[j] - u[j]);
            trial[j] = uj_new; // trial now holds the accepted point
        }
        let phi_new = scaled.barrier(t_bar, &trial, Some(&mut g_new));
        for j in 0..n {
            let sj = trial[j] - u[j];
            let yj = g_new[j] - g[j];
            s_dot_s += sj * sj;
            s_dot_y += sj * yj;
        }
        alpha = if s_dot_y > 1e-300 {
            (s_dot_s / s_dot_y).clamp(1e-14, 1e14)
        } else {
            (alpha * 10.0).min(1e14)
        };
        if phi - phi_new <= 1e-14 * (1.0 + phi_new.abs()) {
            stagnant += 1;
        } else {
            stagnant = 0;
        }
        u.copy_from_slice(&trial);
        std::mem::swap(&mut g, &mut g_new);
        phi = phi_new;
        residual = pg_residual(u, &g, t_bar);
        if stagnant >= 3 {
            return (it + 1, residual);
        }
    }
    (max_iter, residual)
}

#[cfg(debug_assertions)]
fn spot_check_convexity(scaled: &mut Scaled, problem: &ConvexProblem) {
    // two deterministic pseudo-random segment checks per function
    let n = problem.lower.len();
    let mut state = 0x9e3779b97f4a7c15u64 ^ (n as u64);
    let mut next = || {
        state = state.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
        ((state >> 11) as f64) / ((1u64 << 53) as f64)
    };
    for _ in 0..2 {
        let a: Vec<f64> = (0..n).map(|_| 0.05 + 0.9 * next()).collect();
        let b: Vec<f64> = (0..n).map(|_| 0.05 + 0.9 * next()).collect();
        let mid: Vec<f64> = a.iter().zip(&b).map(|(x, y)| 0.5 * (x + y)).collect();
        let eval = |scaled: &mut Scaled, func: &Func, u: &[f64]| {
            scaled.to_x(u);
            func(&scaled.x_buf, None)
        };
        let funcs: Vec<&Func> = std::iter::once(&problem.objective)
            .chain(problem.constraints.iter())
            .collect();
        for (idx, func) in funcs.into_iter().enumerate() {
            let fa = eval(scaled, func, &a);
            let fb = eval(scaled, func, &b);
            let fm = eval(scaled, func, &mid);
            if fa.is_finite() && fb.is_finite() && fm.is_finite() {
                let bound = 0.5 * (fa + fb);
                let scale = fa.abs().max(fb.abs()).max(1.0);
                debug_assert!(
                    fm <= bound + 1e-6 * scale,
                    "function {idx} fails midpoint convexity: f(mid)={fm} > {bound}"
                );
            }
        }
    }
}

/// Minimize `problem` starting from the strictly feasible `x0`.
///
/// Deterministic for fixed inputs. Returns the iterate once the barrier gap
/// proxy and the scaled stationarity fall under `opts.tol` (relative to the
/// objective magnitude).
pub fn solve_convex(
    problem: &ConvexProblem,
    x0: &[f64],
    opts: &SolverOptions,
) -> Result<Solution, ConvexError> {
    let n = problem.lower.len();
    if problem.upper.len() != n || x0.len() != n {
        return Err(ConvexError::Dimension(format!(
            "lower/upper/x0 lengths {}/{}/{}",
            n,
            problem.upper.len(),
            x0.len()
        )));
    }
    for j in 0..n {
        if !(problem.lower[j] <= problem.upper[j]) {
            return Err(ConvexError::Dimension(format!(
                "bounds[{j}] inverted: [{}, {}]",
                problem.lower[j], problem.upper[j]
            )));
        }
    }

    let mut scaled = Scaled::new(problem);
    #[cfg(debug_assertions)]
    spot_check_convexity(&mut scaled, problem);

    let mut u = scaled.to_u(x0);

    // strict feasibility at the start point
    scaled.to_x(&u);
    for (i, c) in problem.constraints.iter().enumerate() {
        let v = c(&scaled.x_buf, None);
        if v >= 0.0 || !v.is_finite() {
            return Err(ConvexError::InfeasibleStart { index: i, value: v });
        }
    }

    let m = problem.constraints.len();
    let mut total_iters = 0usize;

    if m == 0 {
        let (iters, residual) = spg(&mut scaled, 0.0, &mut u, opts.tol, opts.max_inner);
        total_iters += iters;
        let objective = scaled.objective_at(&u);
        scaled.to_x(&u);
        return Ok(Solution {
            x: scaled.x_buf.clone(),
            objective,
            stationarity: residual,
            iterations: total_iters,
        });
    }

    let f0_init = scaled.objective_at(&u);
    let mut t_bar = (m as f64 / (1.0 + f0_init.abs())).max(1.0);
    let mut last_residual = f64::INFINITY;
    for _round in 0..opts.max_barrier_rounds {
        let (iters, residual) = spg(&mut scaled, t_bar, &mut u, opts.tol, opts.max_inner);
        total_iters += iters;
        last_residual = residual;
        let f0_now = scaled.objective_at(&u);
        let gap = m as f64 / t_bar;
        if gap <= opts.tol * (1.0 + f0_now.abs()) {
            scaled.to_x(&u);
            return Ok(Solution {
                x: scaled.x_buf.clone(),
                objective: f0_now,
                stationarity: residual,
                iterations: total_iters,
            });
        }
        t_bar *= opts.barrier_mult;
    }
    let objective = scaled.objective_at(&u);
    scaled.to_x(&u);
    Err(ConvexError::MaxIterations {
        rounds: opts.max_barrier_rounds,
        best: Solution {
            x: scaled.x_buf.clone(),
            objective,
            stationarity: last_residual,
            iterations: total_iters,
        },
    })
}

// ---------------------------------------------------------------------------
// Quadratic-transform loop (Algorithm 1)
// ---------------------------------------------------------------------------

/// A problem containing one ratio `A(x)/B(x)` handled by the quadratic
/// transform. `build(t)` must return the convex instance with the ratio
/// replaced by its surrogate at multiplier `t` (in the objective or inside a
/// constraint, whichever the caller needs).
pub struct FractionalProblem<'a> {
    pub build: Box<dyn Fn(f64) -> ConvexProblem<'a> + 'a>,
    /// `A(x)`, convex and positive on the feasible set.
    pub ratio_num: Box<dyn Fn(&[f64]) -> f64 + 'a>,
    /// `B(x)`, concave and positive on the feasible set.
    pub ratio_den: Box<dyn Fn(&[f64]) -> f64 + 'a>,
    /// True objective without the surrogate, used for the descent trace.
    pub true_objective: Box<dyn Fn(&[f64]) -> f64 + 'a>,
}

/// Alternate convex solves at fixed `t` with the closed-form update
/// `t = 1/(2 A(x) B(x))` until the relative change of `t` drops below
/// `opts.fractional_tol`.
pub fn minimize_fractional(
    fp: &FractionalProblem,
    x0: &[f64],
    opts: &SolverOptions,
) -> Result<FractionalSolution, ConvexError> {
    let mut x = x0.to_vec();
    let mut t = surrogate_multiplier((fp.ratio_num)(&x), (fp.ratio_den)(&x));
    let mut trace = vec![(fp.true_objective)(&x)];
    for q in 1..=opts.max_fractional_outer {
        let problem = (fp.build)(t);
        let sol = solve_convex(&problem, &x, opts)?;
        let moved = x
            .iter()
            .zip(&sol.x)
            .map(|(a, b)| (a - b).abs())
            .fold(0.0f64, f64::max);
        x = sol.x;
        trace.push((fp.true_objective)(&x));
        let t_new = surrogate_multiplier((fp.ratio_num)(&x), (fp.ratio_den)(&x));
        let rel = (t_new - t).abs() / t;
        t = t_new;
        if rel <= opts.fractional_tol || moved == 0.0 {
            return Ok(FractionalSolution {
                x,
                t,
                outer_iterations: q,
                objective_trace: trace,
            });
        }
    }
    Err(ConvexError::FractionalNonConvergence {
        outer: opts.max_fractional_outer,
        best: Box::new(FractionalSolution {
            x,
            t,
            outer_iterations: opts.max_fractional_outer,
            objective_trace: trace,
        }),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn opts() -> SolverOptions {
        SolverOptions::default()
    }

    fn quadratic_problem<'a>() -> ConvexProblem<'a> {
        ConvexProblem {
            objective: Box::new(|x, grad| {
                if let Some(g) = grad {
                    g[0] = 2.0 * (x[0] - 3.0);
                }
                (x[0] - 3.0) * (x[0] - 3.0)
            }),
            constraints: vec![],
            lower: vec![0.0],
            upper: vec![10.0],
        }
    }

    #[test]
    fn unconstrained_quadratic() {
        let sol = solve_convex(&quadratic_problem(), &[9.0], &opts()).unwrap();
        assert!((sol.x[0] - 3.0).abs() < 1e-7, "x = {}", sol.x[0]);
    }

    #[test]
    fn start_invariance_on_strictly_convex_instance() {
        let a = solve_convex(&quadratic_problem(), &[0.1], &opts()).unwrap();
        let b = solve_convex(&quadratic_problem(), &[9.9], &opts()).unwrap();
        let c = solve_convex(&quadratic_problem(), &[3.0], &opts()).unwrap();
        for s in [&b, &c] {
            assert!((a.x[0] - s.x[0]).abs() < 10.0 * opts().tol);
        }
    }

    #[test]
    fn linear_objective_on_disk() {
        // min x1 + x2 s.t. x1^2 + x2^2 <= 1 -> (-sqrt(1/2), -sqrt(1/2))
        let problem = ConvexProblem {
            objective: Box::new(|x, grad| {
                if let Some(g) = grad {
                    g[0] = 1.0;
                    g[1] = 1.0;
                }
                x[0] + x[1]
            }),
            constraints: vec![Box::new(|x, grad| {
                if let Some(g) = grad {
                    g[0] = 2.0 * x[0];
                    g[1] = 2.0 * x[1];
                }
                x[0] * x[0] + x[1] * x[1] - 1.0
            })],
            lower: vec![-2.0, -2.0],
            upper: vec![2.0, 2.0],
        };
        let sol = solve_convex(&problem, &[0.0, 0.0], &opts()).unwrap();
        let root = -(0.5f64).sqrt();
        assert!((sol.x[0] - root).abs() < 1e-6, "x0 = {}", sol.x[0]);
        assert!((sol.x[1] - root).abs() < 1e-6, "x1 = {}", sol.x[1]);
    }

    #[test]
    fn infeasible_start_is_reported() {
        let problem = ConvexProblem {
            objective: Box::new(|x, grad| {
                if let Some(g) = grad {
                    g[0] = 1.0;
                }
                x[0]
            }),
            constraints: vec![Box::new(|x, grad| {
                if let Some(g) = grad {
                    g[0] = 1.0;
                }
                x[0] - 0.5
            })],
            lower: vec![0.0],
            upper: vec![2.0],
        };
        match solve_convex(&problem, &[1.5], &opts()) {
            Err(ConvexError::InfeasibleStart { index: 0, value }) => assert!(value > 0.0),
            other => panic!("expected infeasible start, got {other:?}"),
        }
    }

    #[test]
    fn surrogate_exact_at_matched_multiplier() {
        let (a, b) = (0.37, 4.2);
        let t = surrogate_multiplier(a, b);
        let s = surrogate_ratio(a, b, t).unwrap();
        assert!((s - a / b).abs() / (a / b) < 1e-12);
    }

    #[test]
    fn surrogate_majorizes_at_unit_point() {
        let s = surrogate_ratio(1.0, 1.0, 1.0).unwrap();
        assert!((s - 1.25).abs() < 1e-15);
        assert!(s >= 1.0);
    }

    #[test]
    fn surrogate_domain_errors() {
        assert!(surrogate_ratio(0.0, 1.0, 1.0).is_err());
        assert!(surrogate_ratio(1.0, -1.0, 1.0).is_err());
        assert!(surrogate_ratio(1.0, 1.0, 0.0).is_err());
    }

    proptest! {
        #[test]
        fn surrogate_majorizes_everywhere(
            a in 1e-6f64..1e6,
            b in 1e-6f64..1e6,
            t in 1e-9f64..1e9,
        ) {
            let s = surrogate_ratio(a, b, t).unwrap();
            prop_assert!(s >= a / b * (1.0 - 1e-12));
        }

        #[test]
        fn surrogate_equality_iff_matched(
            a in 1e-3f64..1e3,
            b in 1e-3f64..1e3,
            bump in prop::sample::select(vec![0.5f64, 0.9, 1.1, 2.0]),
        ) {
            let t_star = surrogate_multiplier(a, b);
            let tight = surrogate_ratio(a, b, t_star).unwrap();
            prop_assert!((tight - a / b).abs() <= 1e-12 * (a / b));
            let off = surrogate_ratio(a, b, t_star * bump).unwrap();
            prop_assert!(off > a / b * (1.0 + 1e-9));
        }
    }

    /// Rate-shaped 1-D fractional instance: minimize
    /// `k2 * p/B(p) + k1/B(p)` with `B(p) = c * ln(1 + s p)`.
    fn ratio_instance() -> (impl Fn(f64) -> f64, FractionalProblem<'static>) {
        let s = 1e3;
        let c = 5.0;
        let (k1, k2) = (3.0, 11.1);
        let den = move |p: f64| c * (1.0 + s * p).ln();
        let den_deriv = move |p: f64| c * s / (1.0 + s * p);
        let truth = move |p: f64| (k1 + k2 * p) / den(p);
        let fp = FractionalProblem {
            build: Box::new(move |t| ConvexProblem {
                objective: Box::new(move |x, grad| {
                    let p = x[0];
                    let b = den(p);
                    let db = den_deriv(p);
                    if let Some(g) = grad {
                        g[0] = k2 * (2.0 * t * p - db / (2.0 * t * b * b * b))
                            - k1 * db / (b * b);
                    }
                    k2 * (t * p * p + 1.0 / (4.0 * t * b * b)) + k1 / b
                }),
                constraints: vec![],
                lower: vec![1e-4],
                upper: vec![3.0],
            }),
            ratio_num: Box::new(|x| x[0]),
            ratio_den: Box::new(move |x| den(x[0])),
            true_objective: Box::new(move |x| truth(x[0])),
        };
        (truth, fp)
    }

    #[test]
    fn fractional_matches_grid_search() {
        let (truth, fp) = ratio_instance();
        let sol = minimize_fractional(&fp, &[1.0], &opts()).unwrap();
        // oracle: exhaustive 1e4-point log grid
        let n = 10_000;
        let (lo, hi) = (1e-4f64, 3.0f64);
        let mut best = (f64::INFINITY, 0.0);
        for i in 0..n {
            let p = lo * (hi / lo).powf(i as f64 / (n - 1) as f64);
            let v = truth(p);
            if v < best.0 {
                best = (v, p);
            }
        }
        let cell = (hi / lo).powf(1.0 / (n - 1) as f64);
        assert!(
            sol.x[0] <= best.1 * cell * 1.001 && sol.x[0] >= best.1 / cell / 1.001,
            "solver {} vs grid {}",
            sol.x[0],
            best.1
        );
        assert!(truth(sol.x[0]) <= best.0 * (1.0 + 1e-9));
    }

    #[test]
    fn fractional_descent_and_tightness() {
        let (truth, fp) = ratio_instance();
        let sol = minimize_fractional(&fp, &[2.5], &opts()).unwrap();
        for w in sol.objective_trace.windows(2) {
            assert!(w[1] <= w[0] + 1e-9 * (1.0 + w[0].abs()), "trace not descending: {w:?}");
        }
        // tightness at the converged multiplier: surrogate objective equals
        // the true one
        let problem = (fp.build)(sol.t);
        let surr_val = (problem.objective)(&sol.x, None);
        let true_val = truth(sol.x[0]);
        assert!((surr_val - true_val).abs() / true_val < 1e-6);
    }

    #[test]
    fn fractional_converges_fast_without_ratio() {
        // ratio coefficient zero: pure convex problem, loop exits immediately
        let fp = FractionalProblem {
            build: Box::new(|_t| ConvexProblem {
                objective: Box::new(|x, grad| {
                    if let Some(g) = grad {
                        g[0] = 2.0 * (x[0] - 1.0);
                    }
                    (x[0] - 1.0) * (x[0] - 1.0)
                }),
                constraints: vec![],
                lower: vec![0.5],
                upper: vec![4.0],
            }),
            ratio_num: Box::new(|x| x[0]),
            ratio_den: Box::new(|_| 2.0),
            true_objective: Box::new(|x| (x[0] - 1.0) * (x[0] - 1.0)),
        };
        let sol = minimize_fractional(&fp, &[3.0], &opts()).unwrap();
        assert!((sol.x[0] - 1.0).abs() < 1e-6);
        assert!(sol.outer_iterations <= 2, "{} outer iterations", sol.outer_iterations);
    }

    #[test]
    fn fractional_tightness_at_converged_t() {
        let (_, fp) = ratio_instance();
        let sol = minimize_fractional(&fp, &[0.5], &opts()).unwrap();
        let a = (fp.ratio_num)(&sol.x);
        let b = (fp.ratio_den)(&sol.x);
        let surr = surrogate_ratio(a, b, sol.t).unwrap();
        assert!((surr - a / b).abs() / (a / b) < 1e-10);
    }
}
