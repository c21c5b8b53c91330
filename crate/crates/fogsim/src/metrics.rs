//! Latency and energy of a device under an allocation.
//!
//! Latency is transmission plus execution time; energy is the transmit-chain
//! draw over the transmission, the CPU-cycle energy on the fog node and the
//! keep-alive draw over the whole service time:
//!
//! ```text
//! T = D/R(p) + C*D/f
//! E = (P_c + P_BB(R) + P_RF(p) + p) * D/R(p) + lambda f^2 C D + P_on * T
//! ```
//!
//! Regrouping the transmit term exposes the lone non-convex piece:
//! `E_tx = D (K1 + K2 p)/R(p) + c_bb D`, so only the ratio `p/R(p)` needs the
//! quadratic-transform surrogate. [`energy`] can evaluate either the plain
//! form or, given a multiplier `t`, the convex surrogate form used inside the
//! solvers.

use thiserror::Error;

use crate::power::{baseband_power_w, cpu_cycle_energy_j, rf_power_w, CircuitPowerModel};
use crate::radio;
use crate::scenario::{Device, NetworkConfig};

/// Transmit powers are kept at or above this fraction of the cap inside
/// solvers so the rate never degenerates to zero.
pub const P_MIN_FRACTION: f64 = 1e-9;

#[derive(Debug, Error)]
pub enum MetricsError {
    #[error("data rate is zero at p = {power_w} W; latency undefined")]
    DegenerateRate { power_w: f64 },
    #[error("allocation invalid: {0}")]
    InvalidAllocation(String),
}

/// Decision variables for all K devices.
#[derive(Debug, Clone, PartialEq)]
pub struct Allocation {
    pub freqs_hz: Vec<f64>,
    pub powers_w: Vec<f64>,
}

impl Allocation {
    /// Check box and coupling constraints: `0 < p_k <= p̄_k`, `f_k > 0`,
    /// `sum f_k <= f̄0` (with a tiny relative slack for solver output).
    pub fn validate(&self, devices: &[Device], cfg: &NetworkConfig) -> Result<(), MetricsError> {
        if self.freqs_hz.len() != devices.len() || self.powers_w.len() != devices.len() {
            return Err(MetricsError::InvalidAllocation(format!(
                "expected {} entries, got {} freqs / {} powers",
                devices.len(),
                self.freqs_hz.len(),
                self.powers_w.len()
            )));
        }
        for (k, (&f, &p)) in self.freqs_hz.iter().zip(&self.powers_w).enumerate() {
            if !(f > 0.0) {
                return Err(MetricsError::InvalidAllocation(format!(
                    "f[{k}] = {f} must be positive"
                )));
            }
            if !(p > 0.0) || p > devices[k].max_power_w * (1.0 + 1e-12) {
                return Err(MetricsError::InvalidAllocation(format!(
                    "p[{k}] = {p} outside (0, {}]",
                    devices[k].max_power_w
                )));
            }
        }
        let total: f64 = self.freqs_hz.iter().sum();
        if total > cfg.cpu_cap_hz * (1.0 + 1e-9) {
            return Err(MetricsError::InvalidAllocation(format!(
                "sum of freqs {total} exceeds CPU cap {}",
                cfg.cpu_cap_hz
            )));
        }
        Ok(())
    }
}

/// Full latency/energy breakdown of one device.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LatencyEnergy {
    pub t_tx_s: f64,
    pub t_ex_s: f64,
    pub t_total_s: f64,
    pub e_tx_j: f64,
    pub e_ex_j: f64,
    pub e_on_j: f64,
    pub e_total_j: f64,
}

/// Constants of the regrouped transmit energy
/// `E_tx(p) = D (K1 + K2 p)/R(p) + c_bb D`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EtxDecomposition {
    /// `P_c + P_BB(0) + P_RF(0)` [W].
    pub k1_w: f64,
    /// `1 + rf_slope` (dimensionless).
    pub k2: f64,
    /// Baseband slope [J/bit].
    pub c_bb_j_per_bit: f64,
}

/// Constants of the transmit-energy regrouping for the configured model.
pub fn energy_ratio_decomposition(cfg: &NetworkConfig) -> EtxDecomposition {
    let model = cfg.circuit_model();
    EtxDecomposition {
        k1_w: model.p_connected_w + model.bb_const_w() + model.rf_const_w,
        k2: 1.0 + model.rf_slope_w_per_w,
        c_bb_j_per_bit: model.bb_slope_j_per_bit(),
    }
}

/// `(t_tx, t_ex, t_total)` of a device at `(f, p)`.
pub fn latency(
    device: &Device,
    f_hz: f64,
    p_w: f64,
    cfg: &NetworkConfig,
) -> Result<(f64, f64, f64), MetricsError> {
    let rate = radio::data_rate(p_w, device.gain, cfg);
    if rate <= 0.0 {
        return Err(MetricsError::DegenerateRate { power_w: p_w });
    }
    let t_tx = device.task_bits / rate;
    let t_ex = device.task_cycles() / f_hz;
    Ok((t_tx, t_ex, t_tx + t_ex))
}

/// `(e_tx, e_ex, e_on, e_total)` of a device at `(f, p)`.
///
/// With `t_for_fractional = Some(t)` the `p/R` ratio inside the transmit
/// energy is replaced by its quadratic-transform surrogate at multiplier `t`,
/// which upper-bounds the plain value and matches it exactly at
/// `t = 1/(2 p R(p))`.
pub fn energy(
    device: &Device,
    f_hz: f64,
    p_w: f64,
    cfg: &NetworkConfig,
    t_for_fractional: Option<f64>,
) -> Result<(f64, f64, f64, f64), MetricsError> {
    let model = cfg.circuit_model();
    let rate = radio::data_rate(p_w, device.gain, cfg);
    if rate <= 0.0 {
        return Err(MetricsError::DegenerateRate { power_w: p_w });
    }
    let (t_tx, _, t_total) = latency(device, f_hz, p_w, cfg)?;
    let e_tx = match t_for_fractional {
        None => {
            (model.p_connected_w + baseband_power_w(rate, &model) + rf_power_w(p_w, &model) + p_w)
                * t_tx
        }
        Some(t) => {
            let dec = energy_ratio_decomposition(cfg);
            let d = device.task_bits;
            let surrogate = t * p_w * p_w + 1.0 / (4.0 * t * rate * rate);
            d * dec.k1_w / rate + d * dec.k2 * surrogate + dec.c_bb_j_per_bit * d
        }
    };
    let e_ex = cpu_cycle_energy_j(f_hz, cfg.cpu_energy_lambda) * device.task_cycles();
    let e_on = cfg.effective_idle_power_w(device) * t_total;
    Ok((e_tx, e_ex, e_on, e_tx + e_ex + e_on))
}

/// Combined [`latency`] and plain [`energy`] breakdown.
pub fn latency_energy(
    device: &Device,
    f_hz: f64,
    p_w: f64,
    cfg: &NetworkConfig,
) -> Result<LatencyEnergy, MetricsError> {
    let (t_tx_s, t_ex_s, t_total_s) = latency(device, f_hz, p_w, cfg)?;
    let (e_tx_j, e_ex_j, e_on_j, e_total_j) = energy(device, f_hz, p_w, cfg, None)?;
    Ok(LatencyEnergy {
        t_tx_s,
        t_ex_s,
        t_total_s,
        e_tx_j,
        e_ex_j,
        e_on_j,
        e_total_j,
    })
}

// ---------------------------------------------------------------------------
// Solver-facing coefficient bundle
// ---------------------------------------------------------------------------

/// Per-device constants pre-baked for the solvers' objective and constraint
/// closures. `k1_eff` folds the idle power into the 1/R coefficient since
/// `E_on`'s transmit part shares that shape.
#[derive(Debug, Clone, Copy)]
pub(crate) struct DeviceCoeffs {
    /// Task bits D.
    pub d: f64,
    /// Task cycles C*D.
    pub cd: f64,
    /// SNR slope `l/(B N0)` [1/W].
    pub s: f64,
    /// `B / ln 2`.
    pub b_over_ln2: f64,
    /// `K1 + P_on_eff` [W].
    pub k1_eff: f64,
    /// `1 + rf_slope`.
    pub k2: f64,
    /// `c_bb * D` [J].
    pub cbb_d: f64,
    /// `lambda * C * D` [J s^2 / cycle^2].
    pub lam_cd: f64,
    /// Effective idle power [W].
    pub pon: f64,
}

impl DeviceCoeffs {
    pub fn new(device: &Device, cfg: &NetworkConfig) -> Self {
        let dec = energy_ratio_decomposition(cfg);
        let pon = cfg.effective_idle_power_w(device);
        Self {
            d: device.task_bits,
            cd: device.task_cycles(),
            s: device.gain / cfg.noise_floor_w(),
            b_over_ln2: cfg.bandwidth_hz / std::f64::consts::LN_2,
            k1_eff: dec.k1_w + pon,
            k2: dec.k2,
            cbb_d: dec.c_bb_j_per_bit * device.task_bits,
            lam_cd: cfg.cpu_energy_lambda * device.task_cycles(),
            pon,
        }
    }

    /// `R(p)` [bit/s].
    pub fn rate(&self, p: f64) -> f64 {
        self.b_over_ln2 * (1.0 + self.s * p).ln()
    }

    /// `dR/dp`.
    pub fn rate_deriv(&self, p: f64) -> f64 {
        self.b_over_ln2 * self.s / (1.0 + self.s * p)
    }

    /// `T(f, p)` and its gradient.
    pub fn latency(&self, f: f64, p: f64) -> f64 {
        self.d / self.rate(p) + self.cd / f
    }

    pub fn latency_grad(&self, f: f64, p: f64) -> (f64, f64) {
        let r = self.rate(p);
        (-self.cd / (f * f), -self.d * self.rate_deriv(p) / (r * r))
    }

    /// Plain total energy; equals Eq.-by-Eq. evaluation of the model.
    pub fn energy_plain(&self, f: f64, p: f64) -> f64 {
        let r = self.rate(p);
        self.lam_cd * f * f
            + (self.k1_eff + self.k2 * p) * self.d / r
            + self.cbb_d
            + self.pon * self.cd / f
    }

    pub fn energy_plain_grad(&self, f: f64, p: f64) -> (f64, f64) {
        let r = self.rate(p);
        let dr = self.rate_deriv(p);
        let df = 2.0 * self.lam_cd * f - self.pon * self.cd / (f * f);
        let dp = self.k2 * self.d / r - (self.k1_eff + self.k2 * p) * self.d * dr / (r * r);
        (df, dp)
    }

    /// Total energy with the `p/R` ratio replaced by its surrogate at `t`.
    pub fn energy_surrogate(&self, f: f64, p: f64, t: f64) -> f64 {
        let r = self.rate(p);
        let surr = t * p * p + 1.0 / (4.0 * t * r * r);
        self.lam_cd * f * f
            + self.k1_eff * self.d / r
            + self.k2 * self.d * surr
            + self.cbb_d
            + self.pon * self.cd / f
    }

    pub fn energy_surrogate_grad(&self, f: f64, p: f64, t: f64) -> (f64, f64) {
        let r = self.rate(p);
        let dr = self.rate_deriv(p);
        let df = 2.0 * self.lam_cd * f - self.pon * self.cd / (f * f);
        let dp = -self.k1_eff * self.d * dr / (r * r)
            + self.k2 * self.d * (2.0 * t * p - dr / (2.0 * t * r * r * r));
        (df, dp)
    }

    /// Matched quadratic-transform multiplier `1/(2 p R(p))`.
    pub fn matched_multiplier(&self, p: f64) -> f64 {
        1.0 / (2.0 * p * self.rate(p))
    }
}
