//! Joint dimming: the target brightness fixes how many LEDs glow (spatial
//! dimming) and the common DC bias they share (analog dimming). The bias in
//! turn bounds the modulation amplitude each LED can carry without clipping.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Default relative tolerance of the dimming-level check.
pub const DIMMING_TOLERANCE: f64 = 1e-6;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DimmingConfig {
    /// Target dimming level in (0, 1].
    pub target_level: f64,
    pub n_leds: usize,
    /// Lowest permissible LED drive current (A).
    pub current_min: f64,
    /// Highest permissible LED drive current (A).
    pub current_max: f64,
}

impl DimmingConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.target_level > 0.0 && self.target_level <= 1.0) {
            return Err(Error::InvalidConfig(format!("dimming level must lie in (0, 1], got {}", self.target_level)));
        }
        if self.n_leds == 0 {
            return Err(Error::InvalidConfig("at least one LED is required".into()));
        }
        if !(self.current_min < self.current_max) {
            return Err(Error::InvalidConfig(format!(
                "current_min ({}) must be below current_max ({})",
                self.current_min, self.current_max
            )));
        }
        Ok(())
    }

    /// Bias that gives full brightness with every LED on: the midpoint of the
    /// current range.
    pub fn nominal_bias(&self) -> f64 {
        0.5 * (self.current_min + self.current_max)
    }
}

/// Operating point derived from a [`DimmingConfig`].
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DimmingState {
    pub n_active: usize,
    pub dc_bias: f64,
    pub amplitude_budget: f64,
    /// The unclamped bias fell outside the current range and was clipped.
    pub bias_clamped: bool,
}

impl DimmingState {
    pub fn from_config(config: &DimmingConfig) -> Result<Self> {
        config.validate()?;
        let n_active = active_led_count(config);
        let bias = dc_bias(config, n_active)?;
        Ok(Self {
            n_active,
            dc_bias: bias.value,
            amplitude_budget: amplitude_budget(bias.value, config),
            bias_clamped: bias.clamped,
        })
    }
}

/// Number of glowing LEDs, `round(eta * N)` with ties away from zero, kept
/// within `1..=N`.
pub fn active_led_count(config: &DimmingConfig) -> usize {
    let raw = (config.target_level * config.n_leds as f64).round();
    (raw as usize).clamp(1, config.n_leds.max(1))
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BiasLevel {
    pub value: f64,
    pub clamped: bool,
}

/// Uniform DC bias `eta * N * (I0 - Il) / Na + Il`, clipped into `[Il, Ih]`.
pub fn dc_bias(config: &DimmingConfig, n_active: usize) -> Result<BiasLevel> {
    if n_active == 0 {
        return Err(Error::Domain("DC bias is undefined with zero active LEDs".into()));
    }
    let il = config.current_min;
    let raw = config.target_level * config.n_leds as f64 * (config.nominal_bias() - il) / n_active as f64 + il;
    let value = raw.clamp(il, config.current_max);
    Ok(BiasLevel { value, clamped: value != raw })
}

/// Largest per-LED modulation amplitude that keeps the drive current inside
/// `[Il, Ih]`.
pub fn amplitude_budget(dc_bias: f64, config: &DimmingConfig) -> f64 {
    (dc_bias - config.current_min).min(config.current_max - dc_bias).max(0.0)
}

/// Dimming level actually produced by `n_active` LEDs at `dc_bias`.
pub fn achieved_level(n_active: usize, dc_bias: f64, config: &DimmingConfig) -> f64 {
    let il = config.current_min;
    n_active as f64 * (dc_bias - il) / (config.n_leds as f64 * (config.nominal_bias() - il))
}

pub fn verify_dimming_constraint(n_active: usize, dc_bias: f64, config: &DimmingConfig) -> bool {
    verify_dimming_constraint_with(n_active, dc_bias, config, DIMMING_TOLERANCE)
}

pub fn verify_dimming_constraint_with(n_active: usize, dc_bias: f64, config: &DimmingConfig, rel_tol: f64) -> bool {
    (achieved_level(n_active, dc_bias, config) - config.target_level).abs() <= rel_tol * config.target_level
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn cfg(eta: f64) -> DimmingConfig {
        DimmingConfig { target_level: eta, n_leds: 6, current_min: 0.0, current_max: 10e-3 }
    }

    #[test]
    fn led_counts() {
        assert_eq!(active_led_count(&cfg(0.5)), 3);
        assert_eq!(active_led_count(&cfg(0.66)), 4);
        assert_eq!(active_led_count(&cfg(1.0)), 6);
        assert_eq!(active_led_count(&cfg(0.01)), 1);
        // 0.25 * 6 = 1.5 -> 2 (half away from zero)
        assert_eq!(active_led_count(&cfg(0.25)), 2);
    }

    #[test]
    fn bias_values() {
        assert_relative_eq!(dc_bias(&cfg(0.5), 3).unwrap().value, 5e-3, max_relative = 1e-12);
        assert_relative_eq!(dc_bias(&cfg(0.66), 4).unwrap().value, 4.95e-3, max_relative = 1e-12);
        let full = dc_bias(&cfg(1.0), 6).unwrap();
        assert_eq!(full.value, cfg(1.0).nominal_bias());
        assert!(!full.clamped);
        assert!(dc_bias(&cfg(0.5), 0).is_err());
    }

    #[test]
    fn bias_above_range_is_clamped_and_flagged() {
        let b = dc_bias(&cfg(1.0), 1).unwrap();
        assert_eq!(b.value, 10e-3);
        assert!(b.clamped);
        assert!(!verify_dimming_constraint(1, b.value, &cfg(1.0)));
    }

    #[test]
    fn budget_values() {
        let c = cfg(0.5);
        assert_relative_eq!(amplitude_budget(5e-3, &c), 5e-3);
        assert_eq!(amplitude_budget(0.0, &c), 0.0);
        assert_relative_eq!(amplitude_budget(4.95e-3, &c), 4.95e-3);
    }

    #[test]
    fn dimming_check() {
        assert!(verify_dimming_constraint(3, 5e-3, &cfg(0.5)));
        assert!(verify_dimming_constraint(4, 4.95e-3, &cfg(0.66)));
        assert!(!verify_dimming_constraint(3, 6e-3, &cfg(0.5)));
    }

    #[test]
    fn round_trip_over_fine_grid() {
        for i in 1..=1000 {
            let c = cfg(i as f64 / 1000.0);
            let s = DimmingState::from_config(&c).unwrap();
            assert!(s.amplitude_budget >= 0.0);
            assert!(!s.bias_clamped);
            assert!(verify_dimming_constraint(s.n_active, s.dc_bias, &c), "eta = {}", c.target_level);
        }
    }

    #[test]
    fn count_nondecreasing_and_budget_peaks_at_nominal() {
        let mut prev = 0;
        for i in 1..=1000 {
            let n = active_led_count(&cfg(i as f64 / 1000.0));
            assert!(n >= prev);
            prev = n;
        }
        let c = cfg(1.0);
        let peak = amplitude_budget(c.nominal_bias(), &c);
        for i in 0..=100 {
            assert!(amplitude_budget(i as f64 * 1e-4, &c) <= peak);
        }
    }
}
