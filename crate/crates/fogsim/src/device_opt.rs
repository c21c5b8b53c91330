//! Per-device ideal points and the Tchebyshev epigraph problem.
//!
//! The two single-objective minima anchor the trade-off: the latency minimum
//! has the closed form "run flat out" (full CPU budget, full power), while
//! the energy minimum needs the quadratic-transform loop because of the
//! `p/R(p)` term. The Tchebyshev problem then minimizes the larger of the
//! two weighted deviations from those anchors via its epigraph slack `y`,
//! which traces the Pareto boundary as the weight `eta` sweeps (0, 1).

use thiserror::Error;

use crate::convex::{
    minimize_fractional, ConvexError, ConvexProblem, FractionalProblem, SolverOptions,
};
use crate::metrics::{DeviceCoeffs, P_MIN_FRACTION};
use crate::scenario::{Device, NetworkConfig};

/// Solver frequencies are kept at or above this fraction of the CPU cap;
/// the energy objective can otherwise chase `f -> 0` under the unrealistic
/// model, where nothing rewards finishing early.
pub const F_MIN_FRACTION: f64 = 1e-6;

/// Tchebyshev weight, restricted to the open interval (0, 1). The endpoints
/// degenerate to the single-objective problems and are routed to the
/// dedicated ideal-point solvers by the CLI instead.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Eta(f64);

#[derive(Debug, Error)]
#[error("eta must lie strictly inside (0, 1), got {0}")]
pub struct EtaRangeError(pub f64);

impl Eta {
    pub fn new(value: f64) -> Result<Self, EtaRangeError> {
        if value > 0.0 && value < 1.0 {
            Ok(Self(value))
        } else {
            Err(EtaRangeError(value))
        }
    }

    pub fn get(self) -> f64 {
        self.0
    }
}

/// Single-objective minima of one device, plus the energy argmin.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct IdealPoint {
    /// T̲: latency at (full CPU budget, max power).
    pub t_min_s: f64,
    /// E̲: minimum achievable energy.
    pub e_min_j: f64,
    /// (f, p) achieving `e_min_j`.
    pub argmin_f_hz: f64,
    pub argmin_p_w: f64,
    /// True when the energy argmin sits on the frequency floor, which
    /// happens when nothing in the model rewards higher CPU speed
    /// (unrealistic preset: no idle power).
    pub f_clamped: bool,
}

/// State `(f, p, y)` of one device in the epigraph problem.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DeviceState {
    pub f_hz: f64,
    pub p_w: f64,
    pub y: f64,
}

/// Closed-form latency minimum: latency decreases in both variables, so the
/// optimum sits at the (f_budget, p̄) corner.
pub fn ideal_latency_with_budget(device: &Device, f_budget_hz: f64, cfg: &NetworkConfig) -> f64 {
    let co = DeviceCoeffs::new(device, cfg);
    co.latency(f_budget_hz, device.max_power_w)
}

/// Closed-form latency minimum with the full CPU cap as the budget.
pub fn ideal_latency(device: &Device, cfg: &NetworkConfig) -> f64 {
    ideal_latency_with_budget(device, cfg.cpu_cap_hz, cfg)
}

/// Energy minimum over the `(f, p)` box, solved with the quadratic-transform
/// loop around a box-constrained convex solve.
pub fn ideal_energy(
    device: &Device,
    cfg: &NetworkConfig,
    opts: &SolverOptions,
) -> Result<IdealPoint, ConvexError> {
    let co = DeviceCoeffs::new(device, cfg);
    let f_min = cfg.cpu_cap_hz * F_MIN_FRACTION;
    let f_max = cfg.cpu_cap_hz;
    let p_min = device.max_power_w * P_MIN_FRACTION;
    let p_max = device.max_power_w;

    let fp = FractionalProblem {
        build: Box::new(move |t| ConvexProblem {
            objective: Box::new(move |x, grad| {
                if let Some(g) = grad {
                    let (df, dp) = co.energy_surrogate_grad(x[0], x[1], t);
                    g[0] = df;
                    g[1] = dp;
                }
                co.energy_surrogate(x[0], x[1], t)
            }),
            constraints: vec![],
            lower: vec![f_min, p_min],
            upper: vec![f_max, p_max],
        }),
        ratio_num: Box::new(|x| x[1]),
        ratio_den: Box::new(move |x| co.rate(x[1])),
        true_objective: Box::new(move |x| co.energy_plain(x[0], x[1])),
    };
    let x0 = [0.5 * (f_min + f_max), 0.5 * (p_min + p_max)];
    let sol = minimize_fractional(&fp, &x0, opts)?;
    let (f_star, p_star) = (sol.x[0], sol.x[1]);
    Ok(IdealPoint {
        t_min_s: ideal_latency(device, cfg),
        e_min_j: co.energy_plain(f_star, p_star),
        argmin_f_hz: f_star,
        argmin_p_w: p_star,
        f_clamped: f_star <= f_min * (1.0 + 1e-6),
    })
}

/// Lift a raw slack to a strictly feasible one for the barrier start.
pub(crate) fn strictify_slack(y: f64) -> f64 {
    y * (1.0 + 1e-9) + 1e-12 * (1.0 + y)
}

/// Solve the single-device Tchebyshev epigraph problem at weight `eta` with
/// CPU budget `f_budget_hz`.
///
/// The energy constraint is convexified by the quadratic transform with the
/// multiplier matched to the current iterate; the loop inherits strict
/// feasibility between multiplier updates because the refreshed surrogate
/// can only shrink at the incumbent point.
pub fn solve_tchebyshev_single(
    device: &Device,
    eta: Eta,
    f_budget_hz: f64,
    cfg: &NetworkConfig,
    ideal: &IdealPoint,
    opts: &SolverOptions,
    warm: Option<&DeviceState>,
) -> Result<DeviceState, ConvexError> {
    let co = DeviceCoeffs::new(device, cfg);
    let e = eta.get();
    let (t_ref, e_ref) = (ideal.t_min_s, ideal.e_min_j);
    let f_min = cfg.cpu_cap_hz * F_MIN_FRACTION;
    let p_min = device.max_power_w * P_MIN_FRACTION;
    let p_max = device.max_power_w;

    let (f0, p0) = match warm {
        Some(w) => (w.f_hz.clamp(f_min, f_budget_hz), w.p_w.clamp(p_min, p_max)),
        None => (f_budget_hz, p_max),
    };
    let t0 = co.matched_multiplier(p0);
    let dev_t = e * (co.latency(f0, p0) - t_ref);
    let dev_e = (1.0 - e) * (co.energy_surrogate(f0, p0, t0) - e_ref);
    let y0 = strictify_slack(dev_t.max(dev_e).max(0.0));
    let y_hi = y0 * 10.0 + 1e-6;

    let fp = FractionalProblem {
        build: Box::new(move |t| ConvexProblem {
            objective: Box::new(|x, grad| {
                if let Some(g) = grad {
                    g[0] = 0.0;
                    g[1] = 0.0;
                    g[2] = 1.0;
                }
                x[2]
            }),
            constraints: vec![
                Box::new(move |x, grad| {
                    if let Some(g) = grad {
                        let (df, dp) = co.latency_grad(x[0], x[1]);
                        g[0] = e * df;
                        g[1] = e * dp;
                        g[2] = -1.0;
                    }
                    e * (co.latency(x[0], x[1]) - t_ref) - x[2]
                }),
                Box::new(move |x, grad| {
                    if let Some(g) = grad {
                        let (df, dp) = co.energy_surrogate_grad(x[0], x[1], t);
                        g[0] = (1.0 - e) * df;
                        g[1] = (1.0 - e) * dp;
                        g[2] = -1.0;
                    }
                    (1.0 - e) * (co.energy_surrogate(x[0], x[1], t) - e_ref) - x[2]
                }),
            ],
            lower: vec![f_min, p_min, 0.0],
            upper: vec![f_budget_hz, p_max, y_hi],
        }),
        ratio_num: Box::new(|x| x[1]),
        ratio_den: Box::new(move |x| co.rate(x[1])),
        true_objective: Box::new(|x| x[2]),
    };

    let sol = minimize_fractional(&fp, &[f0, p0, y0], opts)?;
    Ok(DeviceState {
        f_hz: sol.x[0],
        p_w: sol.x[1],
        y: sol.x[2],
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::metrics::{energy, latency};
    use crate::scenario::{db_to_linear, dbm_to_w, PowerModelKind};

    fn cfg(model: PowerModelKind, lambda: f64) -> NetworkConfig {
        NetworkConfig {
            bandwidth_hz: 0.1e6,
            noise_density_w_per_hz: dbm_to_w(-174.0),
            pathloss_beta: db_to_linear(-90.0),
            pathloss_alpha: 3.5,
            cpu_cap_hz: 1.2e9,
            cpu_energy_lambda: lambda,
            power_model: model,
            device_count: 1,
        }
    }

    fn device(cfg: &NetworkConfig) -> Device {
        Device::new(0.05, 4e6, 100.0, 2.0, 2.5, cfg).unwrap()
    }

    #[test]
    fn ideal_latency_reference_value() {
        let c = cfg(PowerModelKind::Practical, 1e-27);
        let d = device(&c);
        let t = ideal_latency(&d, &c);
        let expected = latency(&d, c.cpu_cap_hz, d.max_power_w, &c).unwrap().2;
        assert_eq!(t, expected);
        assert!((t - 1.40).abs() / 1.40 < 5e-3, "t = {t}");
    }

    #[test]
    fn ideal_latency_beats_every_grid_point() {
        let c = cfg(PowerModelKind::Practical, 1e-27);
        let d = device(&c);
        let t_min = ideal_latency(&d, &c);
        let n = 200;
        let mut grid_best = f64::INFINITY;
        let mut arg = (0.0, 0.0);
        for i in 0..n {
            for j in 0..n {
                let f = c.cpu_cap_hz * (i + 1) as f64 / n as f64;
                let p = d.max_power_w * (j + 1) as f64 / n as f64;
                let t = latency(&d, f, p, &c).unwrap().2;
                if t < grid_best {
                    grid_best = t;
                    arg = (f, p);
                }
            }
        }
        // the corner is on the grid, so the closed form is the exact minimum
        assert_eq!(arg, (c.cpu_cap_hz, d.max_power_w));
        assert!((t_min - grid_best).abs() <= 1e-12 * grid_best);
    }

    #[test]
    fn ideal_latency_improves_with_cpu_cap() {
        let c = cfg(PowerModelKind::Practical, 1e-27);
        let mut c2 = c.clone();
        c2.cpu_cap_hz *= 2.0;
        let d = device(&c);
        assert!(ideal_latency(&d, &c2) < ideal_latency(&d, &c));
    }

    #[test]
    fn ideal_energy_matches_fine_grid() {
        let c = cfg(PowerModelKind::Practical, 1e-25);
        let d = device(&c);
        let ideal = ideal_energy(&d, &c, &SolverOptions::default()).unwrap();
        // oracle: exhaustive 300x300 grid over the same box
        let n = 300;
        let f_lo = c.cpu_cap_hz * F_MIN_FRACTION;
        let p_lo = d.max_power_w * P_MIN_FRACTION;
        let mut best = (f64::INFINITY, 0.0, 0.0);
        for i in 0..n {
            for j in 0..n {
                let f = f_lo * (c.cpu_cap_hz / f_lo).powf(i as f64 / (n - 1) as f64);
                let p = p_lo * (d.max_power_w / p_lo).powf(j as f64 / (n - 1) as f64);
                let e = energy(&d, f, p, &c, None).unwrap().3;
                if e < best.0 {
                    best = (e, f, p);
                }
            }
        }
        // solver must do at least as well as the grid, and land in the
        // argmin's neighborhood
        assert!(ideal.e_min_j <= best.0 * (1.0 + 1e-9));
        let f_cell = (c.cpu_cap_hz / f_lo).powf(1.0 / (n - 1) as f64);
        let p_cell = (d.max_power_w / p_lo).powf(1.0 / (n - 1) as f64);
        assert!(ideal.argmin_f_hz <= best.1 * f_cell * 1.01 && ideal.argmin_f_hz >= best.1 / f_cell / 1.01);
        assert!(ideal.argmin_p_w <= best.2 * p_cell * 1.01 && ideal.argmin_p_w >= best.2 / p_cell / 1.01);
    }

    #[test]
    fn ideal_energy_not_above_latency_corner() {
        for model in [PowerModelKind::Practical, PowerModelKind::Unrealistic] {
            let c = cfg(model, 1e-25);
            let d = device(&c);
            let ideal = ideal_energy(&d, &c, &SolverOptions::default()).unwrap();
            let corner = energy(&d, c.cpu_cap_hz, d.max_power_w, &c, None).unwrap().3;
            assert!(ideal.e_min_j <= corner * (1.0 + 1e-12));
        }
    }

    #[test]
    fn unrealistic_energy_argmin_hits_frequency_floor() {
        // no idle power: energy only grows with f, the infimum sits at the
        // floor and gets flagged
        let c = cfg(PowerModelKind::Unrealistic, 1e-25);
        let d = device(&c);
        let ideal = ideal_energy(&d, &c, &SolverOptions::default()).unwrap();
        assert!(ideal.f_clamped);
        assert!(ideal.argmin_f_hz <= c.cpu_cap_hz * F_MIN_FRACTION * (1.0 + 1e-6));
    }

    #[test]
    fn practical_energy_argmin_is_interior_in_f() {
        // idle power rewards finishing early: f* = (P_on / (2 lambda))^(1/3)
        let c = cfg(PowerModelKind::Practical, 1e-25);
        let d = device(&c);
        let ideal = ideal_energy(&d, &c, &SolverOptions::default()).unwrap();
        let expected = (d.idle_power_w / (2.0 * c.cpu_energy_lambda)).cbrt();
        assert!(!ideal.f_clamped);
        assert!(
            (ideal.argmin_f_hz - expected).abs() / expected < 1e-3,
            "f* = {} vs stationary point {expected}",
            ideal.argmin_f_hz
        );
    }

    fn solve_at(eta: f64, c: &NetworkConfig, d: &Device, ideal: &IdealPoint) -> DeviceState {
        solve_tchebyshev_single(
            d,
            Eta::new(eta).unwrap(),
            c.cpu_cap_hz,
            c,
            ideal,
            &SolverOptions::default(),
            None,
        )
        .unwrap()
    }

    #[test]
    fn eta_near_zero_recovers_energy_ideal() {
        let c = cfg(PowerModelKind::Practical, 1e-25);
        let d = device(&c);
        let ideal = ideal_energy(&d, &c, &SolverOptions::default()).unwrap();
        let st = solve_at(1e-3, &c, &d, &ideal);
        let e = energy(&d, st.f_hz, st.p_w, &c, None).unwrap().3;
        assert!((e - ideal.e_min_j) / ideal.e_min_j < 0.01, "E = {e} vs E_min = {}", ideal.e_min_j);
    }

    #[test]
    fn eta_near_one_recovers_latency_ideal() {
        let c = cfg(PowerModelKind::Practical, 1e-25);
        let d = device(&c);
        let ideal = ideal_energy(&d, &c, &SolverOptions::default()).unwrap();
        let st = solve_at(1.0 - 1e-3, &c, &d, &ideal);
        let t = latency(&d, st.f_hz, st.p_w, &c).unwrap().2;
        assert!((t - ideal.t_min_s) / ideal.t_min_s < 0.01, "T = {t} vs T_min = {}", ideal.t_min_s);
    }

    #[test]
    fn both_constraints_active_at_interior_eta() {
        let c = cfg(PowerModelKind::Practical, 1e-25);
        let d = device(&c);
        let ideal = ideal_energy(&d, &c, &SolverOptions::default()).unwrap();
        let st = solve_at(0.5, &c, &d, &ideal);
        let t = latency(&d, st.f_hz, st.p_w, &c).unwrap().2;
        let e = energy(&d, st.f_hz, st.p_w, &c, None).unwrap().3;
        let dev_t = 0.5 * (t - ideal.t_min_s);
        let dev_e = 0.5 * (e - ideal.e_min_j);
        let scale = st.y.max(1e-9);
        assert!((dev_t - st.y).abs() / scale < 1e-3, "latency deviation {dev_t} vs y {}", st.y);
        assert!((dev_e - st.y).abs() / scale < 1e-3, "energy deviation {dev_e} vs y {}", st.y);
    }

    #[test]
    fn pareto_sweep_is_monotone() {
        let c = cfg(PowerModelKind::Practical, 1e-25);
        let d = device(&c);
        let ideal = ideal_energy(&d, &c, &SolverOptions::default()).unwrap();
        let mut warm: Option<DeviceState> = None;
        let mut prev: Option<(f64, f64)> = None;
        for i in 0..20 {
            let eta = 1e-3 + (1.0 - 2e-3) * (i as f64 + 0.5) / 20.0;
            let st = solve_tchebyshev_single(
                &d,
                Eta::new(eta).unwrap(),
                c.cpu_cap_hz,
                &c,
                &ideal,
                &SolverOptions::default(),
                warm.as_ref(),
            )
            .unwrap();
            assert!(st.y >= 0.0);
            let t = latency(&d, st.f_hz, st.p_w, &c).unwrap().2;
            let e = energy(&d, st.f_hz, st.p_w, &c, None).unwrap().3;
            if let Some((tp, ep)) = prev {
                assert!(t <= tp * (1.0 + 1e-7), "T not non-increasing at eta={eta}");
                assert!(e >= ep * (1.0 - 1e-7), "E not non-decreasing at eta={eta}");
            }
            prev = Some((t, e));
            warm = Some(st);
        }
    }

    #[test]
    fn solution_invariant_to_start() {
        let c = cfg(PowerModelKind::Practical, 1e-25);
        let d = device(&c);
        let ideal = ideal_energy(&d, &c, &SolverOptions::default()).unwrap();
        let a = solve_at(0.3, &c, &d, &ideal);
        let warm = DeviceState { f_hz: 0.2e9, p_w: 0.01, y: 1.0 };
        let b = solve_tchebyshev_single(
            &d,
            Eta::new(0.3).unwrap(),
            c.cpu_cap_hz,
            &c,
            &ideal,
            &SolverOptions::default(),
            Some(&warm),
        )
        .unwrap();
        assert!((a.f_hz - b.f_hz).abs() / c.cpu_cap_hz < 1e-5);
        assert!((a.p_w - b.p_w).abs() / d.max_power_w < 1e-5);
        assert!((a.y - b.y).abs() <= 1e-5 * (1.0 + a.y));
    }

    #[test]
    fn eta_endpoints_rejected() {
        assert!(Eta::new(0.0).is_err());
        assert!(Eta::new(1.0).is_err());
        assert!(Eta::new(-0.2).is_err());
        assert!(Eta::new(0.5).is_ok());
    }
}
