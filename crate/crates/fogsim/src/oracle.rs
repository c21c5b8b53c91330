//! Brute-force grid searches over allocations.
//!
//! These are the independent references the solvers are tested against: they
//! evaluate the true (never the surrogate) objectives exhaustively over a
//! grid, so agreement with the convex path is meaningful. Grids stay small
//! (guarded at 1e8 points) and the product search is limited to K <= 3 —
//! beyond that the grid blows up combinatorially and the oracle stops being
//! an oracle.

use thiserror::Error;

use crate::device_opt::{Eta, IdealPoint};
use crate::metrics::{Allocation, DeviceCoeffs};
use crate::parallel;
use crate::scenario::{Device, NetworkConfig};

/// Hard cap on the total number of grid points an oracle call may visit.
pub const GRID_GUARD: u128 = 100_000_000;

/// Largest K the product oracle accepts.
pub const MAX_PRODUCT_DEVICES: usize = 3;

#[derive(Debug, Error)]
pub enum OracleError {
    #[error("grid of {points} points exceeds the {GRID_GUARD}-point guard")]
    GridTooLarge { points: u128 },
    #[error("points_per_axis must be at least 10, got {0}")]
    GridTooCoarse(usize),
    #[error("product oracle supports at most {MAX_PRODUCT_DEVICES} devices, got {0}")]
    TooManyDevices(usize),
    #[error("axis range inverted: [{lo}, {hi}]")]
    BadAxis { lo: f64, hi: f64 },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum AxisScale {
    Linear,
    Log,
}

/// One grid axis; log axes need positive endpoints.
#[derive(Debug, Clone, Copy)]
pub struct GridAxis {
    pub lo: f64,
    pub hi: f64,
    pub scale: AxisScale,
}

impl GridAxis {
    pub fn linear(lo: f64, hi: f64) -> Self {
        Self { lo, hi, scale: AxisScale::Linear }
    }

    pub fn log(lo: f64, hi: f64) -> Self {
        Self { lo, hi, scale: AxisScale::Log }
    }

    fn validate(&self) -> Result<(), OracleError> {
        let ok = match self.scale {
            AxisScale::Linear => self.lo <= self.hi,
            AxisScale::Log => 0.0 < self.lo && self.lo <= self.hi,
        };
        if ok {
            Ok(())
        } else {
            Err(OracleError::BadAxis { lo: self.lo, hi: self.hi })
        }
    }

    fn point(&self, i: usize, n: usize) -> f64 {
        let s = if n > 1 { i as f64 / (n - 1) as f64 } else { 0.0 };
        match self.scale {
            AxisScale::Linear => self.lo + (self.hi - self.lo) * s,
            AxisScale::Log => self.lo * (self.hi / self.lo).powf(s),
        }
    }

    fn points(&self, n: usize) -> Vec<f64> {
        (0..n).map(|i| self.point(i, n)).collect()
    }
}

/// Grid over one device's `(f, p)` box. By default the frequency axis is
/// linear and the power axis logarithmic, since the rate is log-like in `p`.
#[derive(Debug, Clone, Copy)]
pub struct GridSpec {
    pub points_per_axis: usize,
    pub f_axis: GridAxis,
    pub p_axis: GridAxis,
}

impl GridSpec {
    /// Default box for a device: `f` linear over `[0.02, 1] * f_budget`,
    /// `p` log over `[0.005, 1] * p̄`.
    pub fn for_device(device: &Device, f_budget_hz: f64, points_per_axis: usize) -> Self {
        Self {
            points_per_axis,
            f_axis: GridAxis::linear(0.02 * f_budget_hz, f_budget_hz),
            p_axis: GridAxis::log(0.005 * device.max_power_w, device.max_power_w),
        }
    }

    fn validate(&self, devices: usize) -> Result<(), OracleError> {
        if self.points_per_axis < 10 {
            return Err(OracleError::GridTooCoarse(self.points_per_axis));
        }
        self.f_axis.validate()?;
        self.p_axis.validate()?;
        let per_device = (self.points_per_axis as u128).pow(2);
        let total = per_device.checked_pow(devices as u32).unwrap_or(u128::MAX);
        if total > GRID_GUARD {
            return Err(OracleError::GridTooLarge { points: total });
        }
        Ok(())
    }
}

/// Objective selector for [`grid_min_single`].
#[derive(Debug, Clone, Copy)]
pub enum GridObjective {
    Energy,
    Latency,
    /// True Tchebyshev slack `max(eta (T - T̲), (1-eta) (E - E̲))` against
    /// the supplied anchors.
    TchebyshevY { eta: Eta, ideal: IdealPoint },
}

fn objective_value(co: &DeviceCoeffs, f: f64, p: f64, objective: &GridObjective) -> f64 {
    match objective {
        GridObjective::Energy => co.energy_plain(f, p),
        GridObjective::Latency => co.latency(f, p),
        GridObjective::TchebyshevY { eta, ideal } => {
            let dev_t = eta.get() * (co.latency(f, p) - ideal.t_min_s);
            let dev_e = (1.0 - eta.get()) * (co.energy_plain(f, p) - ideal.e_min_j);
            dev_t.max(dev_e).max(0.0)
        }
    }
}

/// Exhaustive minimum of the chosen true objective over the grid.
/// Returns the best value and its `(f, p)` location.
pub fn grid_min_single(
    device: &Device,
    cfg: &NetworkConfig,
    objective: GridObjective,
    grid: &GridSpec,
) -> Result<(f64, (f64, f64)), OracleError> {
    grid.validate(1)?;
    let co = DeviceCoeffs::new(device, cfg);
    let n = grid.points_per_axis;
    let f_points = grid.f_axis.points(n);
    let p_points = grid.p_axis.points(n);
    // parallel over frequency rows, min-reduced
    let row_best = parallel::map_indexed(n, |i| {
        let f = f_points[i];
        let mut best = (f64::INFINITY, (f, p_points[0]));
        for &p in &p_points {
            let v = objective_value(&co, f, p, &objective);
            if v < best.0 {
                best = (v, (f, p));
            }
        }
        best
    });
    Ok(row_best
        .into_iter()
        .min_by(|a, b| a.0.total_cmp(&b.0))
        .expect("grid has at least one row"))
}

/// Exhaustive minimum of the slack product `prod y_k` over the joint grid,
/// restricted to allocations satisfying `sum f_k <= f̄0`.
///
/// Slacks come from the true objectives against the supplied anchors, so the
/// search is fully independent of the convex machinery.
pub fn grid_min_product(
    devices: &[Device],
    cfg: &NetworkConfig,
    eta: Eta,
    ideals: &[IdealPoint],
    grid: &GridSpec,
) -> Result<(f64, Allocation), OracleError> {
    let k = devices.len();
    if k > MAX_PRODUCT_DEVICES {
        return Err(OracleError::TooManyDevices(k));
    }
    assert_eq!(ideals.len(), k, "one ideal point per device");
    grid.validate(k)?;

    let coeffs: Vec<DeviceCoeffs> = devices.iter().map(|d| DeviceCoeffs::new(d, cfg)).collect();
    let n = grid.points_per_axis;
    let f_points = grid.f_axis.points(n);
    let p_points = grid.p_axis.points(n);

    // per-device table of the best slack for a given frequency: for fixed f
    // the slack can be minimized over p independently per device, because
    // only the frequencies couple. This collapses the 2K-dim scan to a
    // K-dim scan over frequency choices.
    let slack_table: Vec<Vec<(f64, f64)>> = (0..k)
        .map(|d| {
            parallel::map_indexed(n, |i| {
                let f = f_points[i];
                let mut best = (f64::INFINITY, p_points[0]);
                for &p in &p_points {
                    let y = objective_value(
                        &coeffs[d],
                        f,
                        p,
                        &GridObjective::TchebyshevY { eta, ideal: ideals[d] },
                    );
                    if y < best.0 {
                        best = (y, p);
                    }
                }
                best
            })
        })
        .collect();

    let cap = cfg.cpu_cap_hz;
    let mut best_val = f64::INFINITY;
    let mut best_idx = vec![0usize; k];
    let mut idx = vec![0usize; k];
    'outer: loop {
        let sum_f: f64 = idx.iter().map(|&i| f_points[i]).sum();
        if sum_f <= cap {
            let mut prod = 1.0;
            for d in 0..k {
                prod *= slack_table[d][idx[d]].0;
            }
            if prod < best_val {
                best_val = prod;
                best_idx.copy_from_slice(&idx);
            }
        }
        // odometer increment
        for d in 0..k {
            idx[d] += 1;
            if idx[d] < n {
                continue 'outer;
            }
            idx[d] = 0;
        }
        break;
    }

    let allocation = Allocation {
        freqs_hz: best_idx.iter().map(|&i| f_points[i]).collect(),
        powers_w: (0..k).map(|d| slack_table[d][best_idx[d]].1).collect(),
    };
    Ok((best_val, allocation))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::convex::SolverOptions;
    use crate::device_opt::{ideal_energy, ideal_latency};
    use crate::scenario::{db_to_linear, dbm_to_w, PowerModelKind};

    fn cfg(k: usize) -> NetworkConfig {
        NetworkConfig {
            bandwidth_hz: 0.2e6,
            noise_density_w_per_hz: dbm_to_w(-174.0),
            pathloss_beta: db_to_linear(-90.0),
            pathloss_alpha: 3.5,
            cpu_cap_hz: 1.2e9,
            cpu_energy_lambda: 1e-25,
            power_model: PowerModelKind::Practical,
            device_count: k,
        }
    }

    fn device(c: &NetworkConfig) -> Device {
        Device::new(0.05, 4e6, 100.0, 2.0, 2.5, c).unwrap()
    }

    #[test]
    fn latency_argmin_at_max_corner() {
        let c = cfg(1);
        let d = device(&c);
        let grid = GridSpec::for_device(&d, c.cpu_cap_hz, 40);
        let (v, (f, p)) = grid_min_single(&d, &c, GridObjective::Latency, &grid).unwrap();
        assert_eq!(f, c.cpu_cap_hz);
        assert_eq!(p, d.max_power_w);
        assert!((v - ideal_latency(&d, &c)).abs() / v < 1e-12);
    }

    #[test]
    fn refining_never_raises_the_minimum() {
        // a 2x-refined grid that keeps the endpoints is a superset only for
        // odd-ish counts; use explicit nesting: n and 2n-1 share all points
        let c = cfg(1);
        let d = device(&c);
        let coarse = GridSpec::for_device(&d, c.cpu_cap_hz, 41);
        let fine = GridSpec { points_per_axis: 81, ..coarse };
        let (v_coarse, _) = grid_min_single(&d, &c, GridObjective::Energy, &coarse).unwrap();
        let (v_fine, _) = grid_min_single(&d, &c, GridObjective::Energy, &fine).unwrap();
        assert!(v_fine <= v_coarse * (1.0 + 1e-12));
    }

    #[test]
    fn energy_grid_brackets_solver_ideal() {
        let c = cfg(1);
        let d = device(&c);
        let grid = GridSpec::for_device(&d, c.cpu_cap_hz, 150);
        let (v, _) = grid_min_single(&d, &c, GridObjective::Energy, &grid).unwrap();
        let ideal = ideal_energy(&d, &c, &SolverOptions::default()).unwrap();
        assert!(ideal.e_min_j <= v * (1.0 + 1e-9), "solver {} vs grid {v}", ideal.e_min_j);
        assert!(v <= ideal.e_min_j * 1.02, "grid more than 2% above solver");
    }

    #[test]
    fn grid_guard_fires() {
        let c = cfg(3);
        let d = device(&c);
        let grid = GridSpec::for_device(&d, c.cpu_cap_hz, 600);
        let devices = vec![d.clone(), d.clone(), d];
        let ideals = vec![
            IdealPoint { t_min_s: 1.0, e_min_j: 1.0, argmin_f_hz: 1.0, argmin_p_w: 1.0, f_clamped: false };
            3
        ];
        match grid_min_product(&devices, &c, Eta::new(0.5).unwrap(), &ideals, &grid) {
            Err(OracleError::GridTooLarge { .. }) => {}
            other => panic!("expected guard, got {other:?}"),
        }
    }

    #[test]
    fn coarse_grid_rejected() {
        let c = cfg(1);
        let d = device(&c);
        let grid = GridSpec::for_device(&d, c.cpu_cap_hz, 5);
        assert!(matches!(
            grid_min_single(&d, &c, GridObjective::Latency, &grid),
            Err(OracleError::GridTooCoarse(5))
        ));
    }

    #[test]
    fn product_reduces_to_single_for_one_device() {
        let c = cfg(1);
        let d = device(&c);
        let eta = Eta::new(0.5).unwrap();
        let ideal = ideal_energy(&d, &c, &SolverOptions::default()).unwrap();
        let grid = GridSpec::for_device(&d, c.cpu_cap_hz, 30);
        let (single, _) =
            grid_min_single(&d, &c, GridObjective::TchebyshevY { eta, ideal }, &grid).unwrap();
        let (product, _) =
            grid_min_product(std::slice::from_ref(&d), &c, eta, &[ideal], &grid).unwrap();
        assert!((single - product).abs() / single.max(1e-300) < 1e-12);
    }

    #[test]
    fn symmetric_instance_symmetric_argmin() {
        let c = cfg(2);
        let d = device(&c);
        let devices = vec![d.clone(), d];
        let eta = Eta::new(0.5).unwrap();
        let ideal = ideal_energy(&devices[0], &c, &SolverOptions::default()).unwrap();
        let grid = GridSpec::for_device(&devices[0], c.cpu_cap_hz, 30);
        let (_, alloc) = grid_min_product(&devices, &c, eta, &[ideal, ideal], &grid).unwrap();
        assert_eq!(alloc.freqs_hz[0], alloc.freqs_hz[1]);
        assert_eq!(alloc.powers_w[0], alloc.powers_w[1]);
    }

    #[test]
    fn product_argmin_respects_cpu_cap() {
        let c = cfg(2);
        let devices = vec![
            Device::new(0.04, 3e6, 80.0, 2.0, 2.2, &c).unwrap(),
            Device::new(0.06, 6e6, 180.0, 2.0, 3.0, &c).unwrap(),
        ];
        let eta = Eta::new(0.7).unwrap();
        let ideals: Vec<IdealPoint> = devices
            .iter()
            .map(|d| ideal_energy(d, &c, &SolverOptions::default()).unwrap())
            .collect();
        let grid = GridSpec::for_device(&devices[0], c.cpu_cap_hz, 30);
        let (v, alloc) = grid_min_product(&devices, &c, eta, &ideals, &grid).unwrap();
        assert!(v.is_finite());
        assert!(alloc.freqs_hz.iter().sum::<f64>() <= c.cpu_cap_hz);
    }
}
