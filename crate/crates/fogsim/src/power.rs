//! Circuit-power models and CPU-cycle energy.
//!
//! The transmit-chain power draw of a device splits into a connected-mode
//! constant, a baseband part that grows with the uplink rate and an RF part
//! that grows with the radiated power. The coefficients are data, not code:
//! the `practical` preset carries the measured values, the `unrealistic`
//! preset zeroes every term so the classical "free electronics" assumption
//! stays one configuration switch away.
//!
//! Unit discipline: everything at module boundaries is SI (W, J, bit/s, Hz).
//! Milliwatts and Mbit/s exist only inside the baseband evaluation, where the
//! underlying measurement campaign reported them.

/// Coefficients of the circuit-power model.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CircuitPowerModel {
    /// Connected-mode power of the active transmission chain [W].
    pub p_connected_w: f64,
    /// Baseband constant term [mW].
    pub bb_const_mw: f64,
    /// Baseband slope [mW per Mbit/s].
    pub bb_slope_mw_per_mbps: f64,
    /// RF constant term [W].
    pub rf_const_w: f64,
    /// RF slope [W per radiated W].
    pub rf_slope_w_per_w: f64,
}

impl CircuitPowerModel {
    /// Measured coefficients of an LTE transmit chain.
    pub fn practical() -> Self {
        Self {
            p_connected_w: 1.35,
            bb_const_mw: 2110.0,
            bb_slope_mw_per_mbps: 0.87,
            rf_const_w: 0.6,
            rf_slope_w_per_w: 10.1,
        }
    }

    /// All-zero model: circuit electronics consume nothing.
    pub fn unrealistic() -> Self {
        Self {
            p_connected_w: 0.0,
            bb_const_mw: 0.0,
            bb_slope_mw_per_mbps: 0.0,
            rf_const_w: 0.0,
            rf_slope_w_per_w: 0.0,
        }
    }

    /// Baseband constant term in W.
    pub fn bb_const_w(&self) -> f64 {
        self.bb_const_mw * 1e-3
    }

    /// Baseband slope in J/bit (mW per Mbit/s is the same thing scaled).
    pub fn bb_slope_j_per_bit(&self) -> f64 {
        self.bb_slope_mw_per_mbps * 1e-3 / 1e6
    }
}

/// Baseband power draw at the given uplink rate [W].
///
/// The model is affine in the rate expressed in Mbit/s and yields mW; both
/// conversions happen here.
pub fn baseband_power_w(rate_bps: f64, model: &CircuitPowerModel) -> f64 {
    debug_assert!(rate_bps >= 0.0);
    (model.bb_const_mw + model.bb_slope_mw_per_mbps * rate_bps / 1e6) * 1e-3
}

/// RF power draw at the given radiated power [W].
pub fn rf_power_w(power_w: f64, model: &CircuitPowerModel) -> f64 {
    debug_assert!(power_w >= 0.0);
    model.rf_const_w + model.rf_slope_w_per_w * power_w
}

/// Energy per CPU cycle at frequency `freq_hz` [J/cycle]: `lambda * f^2`.
pub fn cpu_cycle_energy_j(freq_hz: f64, lambda: f64) -> f64 {
    debug_assert!(freq_hz > 0.0 && lambda > 0.0);
    lambda * freq_hz * freq_hz
}
