//! Large-scale channel gain and uplink data rate.
//!
//! The channel model keeps only the distance-dependent component: the gain at
//! distance `d` km is `beta / d^alpha`, and the rate is the bandlimited
//! Shannon form `B log2(1 + p l / (B N0))`. Fading realizations are out of
//! scope; the rate is exactly zero at zero power and strictly concave in it,
//! which the optimization layers rely on.

use thiserror::Error;

use crate::scenario::NetworkConfig;

#[derive(Debug, Error)]
pub enum RadioError {
    #[error("distance must be positive, got {0} km")]
    NonPositiveDistance(f64),
}

/// A (power, rate) pair on the rate curve.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RatePoint {
    pub power_w: f64,
    pub rate_bps: f64,
}

impl RatePoint {
    pub fn at(power_w: f64, gain: f64, cfg: &NetworkConfig) -> Self {
        Self {
            power_w,
            rate_bps: data_rate(power_w, gain, cfg),
        }
    }
}

/// Large-scale gain `beta / d^alpha` at distance `d` [km].
pub fn pathloss_gain(distance_km: f64, cfg: &NetworkConfig) -> Result<f64, RadioError> {
    if !(distance_km > 0.0) {
        return Err(RadioError::NonPositiveDistance(distance_km));
    }
    Ok(cfg.pathloss_beta / distance_km.powf(cfg.pathloss_alpha))
}

/// Uplink rate `B log2(1 + p l / (B N0))` [bit/s]; exactly 0 at p = 0.
pub fn data_rate(power_w: f64, gain: f64, cfg: &NetworkConfig) -> f64 {
    debug_assert!(power_w >= 0.0, "negative transmit power {power_w}");
    if power_w <= 0.0 {
        return 0.0;
    }
    let snr = power_w * gain / cfg.noise_floor_w();
    cfg.bandwidth_hz * (1.0 + snr).log2()
}

/// Derivative of [`data_rate`] with respect to the transmit power.
pub fn data_rate_derivative(power_w: f64, gain: f64, cfg: &NetworkConfig) -> f64 {
    let s = gain / cfg.noise_floor_w();
    cfg.bandwidth_hz / std::f64::consts::LN_2 * s / (1.0 + s * power_w)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::scenario::{dbm_to_w, PowerModelKind};

    fn cfg() -> NetworkConfig {
        NetworkConfig {
            bandwidth_hz: 0.1e6,
            noise_density_w_per_hz: dbm_to_w(-174.0),
            pathloss_beta: 1e-9,
            pathloss_alpha: 3.5,
            cpu_cap_hz: 1.2e9,
            cpu_energy_lambda: 1e-27,
            power_model: PowerModelKind::Practical,
            device_count: 1,
        }
    }

    #[test]
    fn gain_at_reference_distance_is_beta() {
        let c = cfg();
        assert_eq!(pathloss_gain(1.0, &c).unwrap(), c.pathloss_beta);
    }

    #[test]
    fn gain_at_50m() {
        let c = cfg();
        let g = pathloss_gain(0.05, &c).unwrap();
        let expected = 1e-9 / 0.05f64.powf(3.5);
        assert!((g - expected).abs() / expected < 1e-15);
        assert!((g - 3.58e-5).abs() / 3.58e-5 < 5e-3);
    }

    #[test]
    fn gain_decreases_with_distance() {
        let c = cfg();
        assert!(pathloss_gain(0.05, &c).unwrap() > pathloss_gain(0.07, &c).unwrap());
    }

    #[test]
    fn gain_rejects_nonpositive_distance() {
        let c = cfg();
        assert!(pathloss_gain(0.0, &c).is_err());
        assert!(pathloss_gain(-1.0, &c).is_err());
    }

    #[test]
    fn rate_zero_at_zero_power() {
        let c = cfg();
        assert_eq!(data_rate(0.0, 3.58e-5, &c), 0.0);
    }

    #[test]
    fn rate_at_one_watt() {
        let c = cfg();
        let gain = 3.58e-5;
        let r = data_rate(1.0, gain, &c);
        let expected = c.bandwidth_hz * (1.0 + gain / c.noise_floor_w()).log2();
        assert_eq!(r, expected);
        assert!((r - 3.64e6).abs() / 3.64e6 < 5e-3, "rate {r}");
    }

    #[test]
    fn doubling_bandwidth_less_than_doubles_rate() {
        // at high SNR the per-Hz efficiency drops as B grows
        let c = cfg();
        let mut c2 = cfg();
        c2.bandwidth_hz *= 2.0;
        let gain = 3.58e-5;
        let r1 = data_rate(1.0, gain, &c);
        let r2 = data_rate(1.0, gain, &c2);
        assert!(r2 > r1);
        assert!(r2 < 2.0 * r1);
    }

    #[test]
    fn rate_strictly_increasing_in_power() {
        let c = cfg();
        let gain = pathloss_gain(0.05, &c).unwrap();
        let mut prev = data_rate(1e-9, gain, &c);
        for i in 1..200 {
            let p = 1e-9 * (2e9f64).powf(i as f64 / 199.0);
            let r = data_rate(p, gain, &c);
            assert!(r > prev, "rate not increasing at p={p}");
            prev = r;
        }
    }

    #[test]
    fn rate_concave_in_power() {
        // second central differences of R on a log-spaced grid stay below a
        // small relative tolerance
        let c = cfg();
        let gain = pathloss_gain(0.05, &c).unwrap();
        for i in 0..60 {
            let p = 1e-6 * (2e6f64).powf(i as f64 / 59.0);
            let h = p * 1e-4;
            let d2 = data_rate(p + h, gain, &c) - 2.0 * data_rate(p, gain, &c)
                + data_rate(p - h, gain, &c);
            assert!(d2 / data_rate(p, gain, &c) <= 1e-9, "R not concave at p={p}");
        }
    }

    #[test]
    fn reciprocal_rate_convex_in_power() {
        let c = cfg();
        let gain = pathloss_gain(0.05, &c).unwrap();
        for i in 0..60 {
            let p = 1e-6 * (2e6f64).powf(i as f64 / 59.0);
            let h = p * 1e-4;
            let inv = |x: f64| 1.0 / data_rate(x, gain, &c);
            let d2 = inv(p + h) - 2.0 * inv(p) + inv(p - h);
            assert!(d2 >= -1e-9 * inv(p), "1/R not convex at p={p}");
        }
    }

    #[test]
    fn rate_derivative_matches_finite_difference() {
        let c = cfg();
        let gain = pathloss_gain(0.06, &c).unwrap();
        for p in [1e-6, 1e-3, 0.1, 1.0, 2.0] {
            let h = p * 1e-6;
            let fd = (data_rate(p + h, gain, &c) - data_rate(p - h, gain, &c)) / (2.0 * h);
            let an = data_rate_derivative(p, gain, &c);
            assert!((fd - an).abs() / an < 1e-6, "derivative mismatch at p={p}");
        }
    }
}
