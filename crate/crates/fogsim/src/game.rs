//! Cooperative Nash-bargaining allocation across devices.
//!
//! Devices share the fog CPU budget, so their epigraph slacks `y_k` couple
//! through `sum f_k <= f̄0`. The bargaining objective is the product of the
//! slacks; introducing multipliers `mu` with `prod mu_k >= 1` turns it into
//! the weighted sum `sum mu_k y_k`, minimized by block coordinate descent:
//!
//! * the `mu` block has the closed-form optimum `mu_k = G / y_k` with `G`
//!   the geometric mean of `y` (so `prod mu_k = 1` exactly),
//! * the `psi` block is one coupled convex solve over all `(f_k, p_k, y_k)`,
//!   with each device's energy constraint convexified by its own matched
//!   quadratic-transform multiplier.
//!
//! Iteration stops when the fractional change of the objective drops below
//! [`BCD_REL_TOL`]. The equal-share baseline (`f_k = f̄0/K`, `p_k = p̄_k`)
//! is the non-optimized reference the experiments compare against.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

use crate::convex::{solve_convex, ConvexError, ConvexProblem, Func, SolverOptions};
use crate::device_opt::{strictify_slack, Eta, IdealPoint, F_MIN_FRACTION};
use crate::metrics::{latency_energy, Allocation, DeviceCoeffs, LatencyEnergy, MetricsError, P_MIN_FRACTION};
use crate::scenario::{Device, NetworkConfig};

/// Slacks below this are floored before the closed-form `mu` update; a zero
/// slack (device at both ideals simultaneously) would degenerate the product.
pub const Y_FLOOR: f64 = 1e-12;

/// Cap on block-coordinate-descent rounds.
pub const BCD_MAX_ITERATIONS: usize = 500;

/// Fractional-change threshold on `sum mu_k y_k` that stops the descent.
pub const BCD_REL_TOL: f64 = 1e-6;

/// Joint state of the bargaining problem.
#[derive(Debug, Clone, PartialEq)]
pub struct GameState {
    pub allocation: Allocation,
    /// Epigraph slacks from the last psi solve.
    pub y: Vec<f64>,
    /// Multipliers from the last mu step.
    pub mu: Vec<f64>,
}

/// Equilibrium outcome with per-device metrics and the descent trace.
#[derive(Debug, Clone)]
pub struct EquilibriumReport {
    pub state: GameState,
    /// Slacks recomputed from plain (non-surrogate) metrics at the final
    /// allocation.
    pub y_true: Vec<f64>,
    /// Product of the true slacks.
    pub product_utility: f64,
    pub per_device: Vec<LatencyEnergy>,
    /// BCD rounds executed.
    pub iterations: u32,
    /// `sum mu_k y_k` after each round.
    pub objective_trace: Vec<f64>,
    pub converged: bool,
    /// Some slack hit [`Y_FLOOR`] during the run.
    pub slack_floored: bool,
    /// Some psi step returned its iterate without full multiplier
    /// convergence.
    pub psi_warning: bool,
}

/// Equal-share reference allocation and its metrics.
#[derive(Debug, Clone)]
pub struct BaselineReport {
    pub allocation: Allocation,
    pub per_device: Vec<LatencyEnergy>,
}

#[derive(Debug, Error)]
pub enum GameError {
    #[error("slack vector has a non-positive entry: y[{index}] = {value}")]
    DegenerateSlack { index: usize, value: f64 },
    #[error("dimension mismatch: {0}")]
    Dimension(String),
    #[error("psi step solver failure: {source}")]
    Solver {
        #[from]
        source: ConvexError,
    },
    #[error("psi-step multiplier loop did not converge")]
    PsiNonConvergence { best: Box<GameState> },
    #[error("BCD did not converge in {iterations} rounds")]
    NonConvergence {
        iterations: usize,
        best: Box<EquilibriumReport>,
    },
    #[error(transparent)]
    Metrics(#[from] MetricsError),
}

/// Closed-form minimizer of `sum mu_k y_k` over `prod mu_k >= 1, mu >= 0`:
/// `mu_k = G / y_k` with `G = (prod y_j)^(1/K)`, so `prod mu_k = 1`.
///
/// Slacks in `(0, Y_FLOOR)` are floored first; non-positive or non-finite
/// slacks are an error.
pub fn mu_step(y: &[f64]) -> Result<Vec<f64>, GameError> {
    if y.is_empty() {
        return Err(GameError::Dimension("empty slack vector".into()));
    }
    for (index, &value) in y.iter().enumerate() {
        if !value.is_finite() || value <= 0.0 {
            return Err(GameError::DegenerateSlack { index, value });
        }
    }
    let floored: Vec<f64> = y.iter().map(|&v| v.max(Y_FLOOR)).collect();
    let log_mean = floored.iter().map(|v| v.ln()).sum::<f64>() / floored.len() as f64;
    let g = log_mean.exp();
    Ok(floored.iter().map(|&v| g / v).collect())
}

/// True (plain-metrics) epigraph slack of one device at `(f, p)`.
fn true_slack(co: &DeviceCoeffs, f: f64, p: f64, eta: f64, ideal: &IdealPoint) -> f64 {
    let dev_t = eta * (co.latency(f, p) - ideal.t_min_s);
    let dev_e = (1.0 - eta) * (co.energy_plain(f, p) - ideal.e_min_j);
    dev_t.max(dev_e).max(0.0)
}

struct PsiInstance {
    coeffs: Vec<DeviceCoeffs>,
    eta: f64,
    cap: f64,
    f_min: f64,
    p_min: Vec<f64>,
    p_max: Vec<f64>,
}

impl PsiInstance {
    fn new(devices: &[Device], cfg: &NetworkConfig, eta: Eta) -> Self {
        Self {
            coeffs: devices.iter().map(|d| DeviceCoeffs::new(d, cfg)).collect(),
            eta: eta.get(),
            cap: cfg.cpu_cap_hz,
            f_min: cfg.cpu_cap_hz * F_MIN_FRACTION,
            p_min: devices.iter().map(|d| d.max_power_w * P_MIN_FRACTION).collect(),
            p_max: devices.iter().map(|d| d.max_power_w).collect(),
        }
    }

    fn k(&self) -> usize {
        self.coeffs.len()
    }

    /// Convex instance of the psi block at the given per-device multipliers.
    fn build<'a>(
        &self,
        mu: &[f64],
        ts: &[f64],
        ideals: &[IdealPoint],
        y_hi: &[f64],
    ) -> ConvexProblem<'a> {
        let k = self.k();
        let eta = self.eta;
        let mu = mu.to_vec();
        let mut lower = vec![self.f_min; k];
        let mut upper = vec![self.cap; k];
        lower.extend_from_slice(&self.p_min);
        upper.extend_from_slice(&self.p_max);
        lower.extend(std::iter::repeat(0.0).take(k));
        upper.extend_from_slice(y_hi);

        let objective: Func<'a> = Box::new(move |x, grad| {
            if let Some(g) = grad {
                g.fill(0.0);
                for i in 0..k {
                    g[2 * k + i] = mu[i];
                }
            }
            (0..k).map(|i| mu[i] * x[2 * k + i]).sum()
        });

        let mut constraints: Vec<Func<'a>> = Vec::with_capacity(2 * k + 1);
        if k > 1 {
            let cap = self.cap;
            constraints.push(Box::new(move |x, grad| {
                if let Some(g) = grad {
                    g.fill(0.0);
                    for j in 0..k {
                        g[j] = 1.0;
                    }
                }
                x[..k].iter().sum::<f64>() - cap
            }));
        }
        for i in 0..k {
            let co = self.coeffs[i];
            let (t_ref, e_ref) = (ideals[i].t_min_s, ideals[i].e_min_j);
            let t_i = ts[i];
            constraints.push(Box::new(move |x, grad| {
                let (f, p) = (x[i], x[k + i]);
                if let Some(g) = grad {
                    g.fill(0.0);
                    let (df, dp) = co.latency_grad(f, p);
                    g[i] = eta * df;
                    g[k + i] = eta * dp;
                    g[2 * k + i] = -1.0;
                }
                eta * (co.latency(f, p) - t_ref) - x[2 * k + i]
            }));
            constraints.push(Box::new(move |x, grad| {
                let (f, p) = (x[i], x[k + i]);
                if let Some(g) = grad {
                    g.fill(0.0);
                    let (df, dp) = co.energy_surrogate_grad(f, p, t_i);
                    g[i] = (1.0 - eta) * df;
                    g[k + i] = (1.0 - eta) * dp;
                    g[2 * k + i] = -1.0;
                }
                (1.0 - eta) * (co.energy_surrogate(f, p, t_i) - e_ref) - x[2 * k + i]
            }));
        }
        ConvexProblem {
            objective,
            constraints,
            lower,
            upper,
        }
    }

    /// Strictly feasible start from an allocation: clamp into the box, back
    /// off the CPU coupling if tight, lift slacks above the active
    /// constraints.
    fn start_point(&self, alloc: &Allocation, ts: &[f64], ideals: &[IdealPoint]) -> Vec<f64> {
        let k = self.k();
        let mut f: Vec<f64> = (0..k)
            .map(|i| alloc.freqs_hz[i].clamp(self.f_min, self.cap))
            .collect();
        if k > 1 {
            let sum: f64 = f.iter().sum();
            if sum >= self.cap * (1.0 - 1e-9) {
                let scale = self.cap * (1.0 - 1e-7) / sum;
                for v in &mut f {
                    *v = (*v * scale).max(self.f_min);
                }
                if f.iter().sum::<f64>() >= self.cap * (1.0 - 1e-9) {
                    let share = (self.cap * (1.0 - 1e-6) / k as f64).max(self.f_min);
                    f.iter_mut().for_each(|v| *v = share);
                }
            }
        }
        let p: Vec<f64> = (0..k)
            .map(|i| alloc.powers_w[i].clamp(self.p_min[i], self.p_max[i]))
            .collect();
        let mut x = f;
        x.extend_from_slice(&p);
        for i in 0..k {
            let dev_t = self.eta * (self.coeffs[i].latency(x[i], x[k + i]) - ideals[i].t_min_s);
            let dev_e = (1.0 - self.eta)
                * (self.coeffs[i].energy_surrogate(x[i], x[k + i], ts[i]) - ideals[i].e_min_j);
            x.push(strictify_slack(dev_t.max(dev_e).max(0.0)));
        }
        x
    }
}

/// Minimize `sum mu_k y_k` over the coupled feasible set, warm-started from
/// `prev`, with each device's energy constraint convexified at its own
/// multiplier `t_k = 1/(2 p_k R_k(p_k))` updated until convergence.
pub fn psi_step(
    mu: &[f64],
    prev: &GameState,
    devices: &[Device],
    cfg: &NetworkConfig,
    eta: Eta,
    ideals: &[IdealPoint],
    opts: &SolverOptions,
) -> Result<GameState, GameError> {
    let k = devices.len();
    if mu.len() != k || ideals.len() != k || prev.allocation.freqs_hz.len() != k {
        return Err(GameError::Dimension(format!(
            "K mismatch: {} devices, {} mu, {} ideals",
            k,
            mu.len(),
            ideals.len()
        )));
    }
    let inst = PsiInstance::new(devices, cfg, eta);
    let mut ts: Vec<f64> = (0..k)
        .map(|i| {
            let p = prev.allocation.powers_w[i].clamp(inst.p_min[i], inst.p_max[i]);
            inst.coeffs[i].matched_multiplier(p)
        })
        .collect();
    let mut x = inst.start_point(&prev.allocation, &ts, ideals);
    let y_hi: Vec<f64> = (0..k).map(|i| x[2 * k + i] * 10.0 + 1e-6).collect();

    let state_of = |x: &[f64], mu: &[f64]| GameState {
        allocation: Allocation {
            freqs_hz: x[..k].to_vec(),
            powers_w: x[k..2 * k].to_vec(),
        },
        y: x[2 * k..].to_vec(),
        mu: mu.to_vec(),
    };

    for _outer in 0..opts.max_fractional_outer {
        let problem = inst.build(mu, &ts, ideals, &y_hi);
        let sol = solve_convex(&problem, &x, opts)?;
        x = sol.x;
        let mut rel = 0.0f64;
        for i in 0..k {
            let t_new = inst.coeffs[i].matched_multiplier(x[k + i]);
            rel = rel.max((t_new - ts[i]).abs() / ts[i]);
            ts[i] = t_new;
        }
        if rel <= opts.fractional_tol {
            return Ok(state_of(&x, mu));
        }
    }
    Err(GameError::PsiNonConvergence {
        best: Box::new(state_of(&x, mu)),
    })
}

/// Run block coordinate descent to the cooperative equilibrium.
///
/// Initialization draws each `p_k` uniformly in `(0, p̄_k]` (ChaCha8 seeded
/// with `seed`) and splits the CPU equally; a warm state skips the draw.
/// Non-convergence after [`BCD_MAX_ITERATIONS`] rounds returns the best
/// report inside the error so sweeps can continue with a warning.
pub fn solve_nbs(
    devices: &[Device],
    cfg: &NetworkConfig,
    eta: Eta,
    ideals: &[IdealPoint],
    seed: u64,
    opts: &SolverOptions,
    warm: Option<&GameState>,
) -> Result<EquilibriumReport, GameError> {
    let k = devices.len();
    if k == 0 || ideals.len() != k {
        return Err(GameError::Dimension(format!(
            "{} devices, {} ideals",
            k,
            ideals.len()
        )));
    }
    let inst = PsiInstance::new(devices, cfg, eta);
    let mut state = match warm {
        Some(w) => w.clone(),
        None => {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let powers: Vec<f64> = devices
                .iter()
                .map(|d| (rng.random::<f64>() * d.max_power_w).max(d.max_power_w * P_MIN_FRACTION))
                .collect();
            GameState {
                allocation: Allocation {
                    freqs_hz: vec![cfg.cpu_cap_hz / k as f64; k],
                    powers_w: powers,
                },
                y: vec![0.0; k],
                mu: vec![1.0; k],
            }
        }
    };

    let slacks_at = |alloc: &Allocation| -> Vec<f64> {
        (0..k)
            .map(|i| {
                true_slack(
                    &inst.coeffs[i],
                    alloc.freqs_hz[i].clamp(inst.f_min, inst.cap),
                    alloc.powers_w[i].clamp(inst.p_min[i], inst.p_max[i]),
                    eta.get(),
                    &ideals[i],
                )
            })
            .collect()
    };

    let mut y = slacks_at(&state.allocation);
    let mut slack_floored = false;
    let mut psi_warning = false;
    let mut trace: Vec<f64> = Vec::new();
    let mut converged = false;
    let mut iterations = 0u32;

    for round in 0..BCD_MAX_ITERATIONS {
        iterations = round as u32 + 1;
        slack_floored |= y.iter().any(|&v| v < Y_FLOOR);
        let floored: Vec<f64> = y.iter().map(|&v| v.max(Y_FLOOR)).collect();
        let mu = mu_step(&floored)?;
        state.y = floored;
        state = match psi_step(&mu, &state, devices, cfg, eta, ideals, opts) {
            Ok(s) => s,
            Err(GameError::PsiNonConvergence { best }) => {
                psi_warning = true;
                *best
            }
            Err(e) => return Err(e),
        };
        y = state.y.clone();
        let obj: f64 = mu.iter().zip(&y).map(|(m, v)| m * v).sum();
        trace.push(obj);
        if round >= 1 {
            let prev = trace[round - 1];
            if (obj - prev).abs() <= BCD_REL_TOL * prev.abs().max(f64::MIN_POSITIVE) {
                converged = true;
                break;
            }
        }
    }

    let per_device: Vec<LatencyEnergy> = devices
        .iter()
        .enumerate()
        .map(|(i, d)| {
            latency_energy(
                d,
                state.allocation.freqs_hz[i],
                state.allocation.powers_w[i],
                cfg,
            )
        })
        .collect::<Result<_, _>>()?;
    let y_true = slacks_at(&state.allocation);
    let product_utility = y_true.iter().product();
    let report = EquilibriumReport {
        state,
        y_true,
        product_utility,
        per_device,
        iterations,
        objective_trace: trace,
        converged,
        slack_floored,
        psi_warning,
    };
    if converged {
        Ok(report)
    } else {
        Err(GameError::NonConvergence {
            iterations: BCD_MAX_ITERATIONS,
            best: Box::new(report),
        })
    }
}

/// Non-optimized reference: CPU split equally, every device at max power.
pub fn equal_share_baseline(
    devices: &[Device],
    cfg: &NetworkConfig,
) -> Result<BaselineReport, MetricsError> {
    let k = devices.len();
    let allocation = Allocation {
        freqs_hz: vec![cfg.cpu_cap_hz / k as f64; k],
        powers_w: devices.iter().map(|d| d.max_power_w).collect(),
    };
    let per_device = devices
        .iter()
        .enumerate()
        .map(|(i, d)| latency_energy(d, allocation.freqs_hz[i], allocation.powers_w[i], cfg))
        .collect::<Result<_, _>>()?;
    Ok(BaselineReport {
        allocation,
        per_device,
    })
}
