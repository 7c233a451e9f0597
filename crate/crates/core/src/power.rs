//! Energy harvested by the users from the DC component of the light, the
//! transmitter's net power draw, and the resulting energy efficiency.

use serde::{Deserialize, Serialize};

use crate::channel::ChannelMatrix;
use crate::error::{Error, Result};
use crate::rates::{Beamformers, Selection};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct HarvestingConstants {
    pub fill_factor: f64,
    /// Thermal voltage (V).
    pub thermal_voltage: f64,
    /// Dark saturation current (A).
    pub dark_saturation: f64,
}

impl HarvestingConstants {
    pub fn validate(&self) -> Result<()> {
        if !(self.fill_factor > 0.0 && self.fill_factor <= 1.0) {
            return Err(Error::InvalidConfig(format!("fill_factor must lie in (0, 1], got {}", self.fill_factor)));
        }
        if !(self.thermal_voltage > 0.0) || !(self.dark_saturation > 0.0) {
            return Err(Error::InvalidConfig("thermal_voltage and dark_saturation must be positive".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PowerConstants {
    /// Amplifier inefficiency factor, at least 1.
    pub amplifier_factor: f64,
    /// Conversion from drive current to consumed power (W/A).
    pub conversion_factor: f64,
}

impl PowerConstants {
    pub fn validate(&self) -> Result<()> {
        if !(self.amplifier_factor >= 1.0) || !(self.conversion_factor > 0.0) {
            return Err(Error::InvalidConfig(format!(
                "need amplifier_factor >= 1 and conversion_factor > 0, got {} and {}",
                self.amplifier_factor, self.conversion_factor
            )));
        }
        Ok(())
    }
}

/// How beam weights enter the modulation power term.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum PowerTermMode {
    /// Signed weights; negative weights lower the total.
    AsPrinted,
    #[default]
    Absolute,
    Squared,
}

impl PowerTermMode {
    fn apply(self, w: f64) -> f64 {
        match self {
            PowerTermMode::AsPrinted => w,
            PowerTermMode::Absolute => w.abs(),
            PowerTermMode::Squared => w * w,
        }
    }
}

/// Power harvested by user `k` from the DC bias of the active LEDs.
///
/// The logarithm's argument sums the incident DC photocurrent over every LED
/// unless `log_active_only` restricts it to the active ones.
pub fn harvested_power(
    k: usize,
    channels: &ChannelMatrix,
    selection: &Selection,
    dc_bias: f64,
    constants: &HarvestingConstants,
    log_active_only: bool,
) -> f64 {
    let h = channels.row(k);
    let active: f64 = h.iter().zip(&selection.0).filter(|(_, &a)| a).map(|(g, _)| g * dc_bias).sum();
    if active == 0.0 {
        return 0.0;
    }
    let incident = if log_active_only { active } else { h.iter().map(|g| g * dc_bias).sum() };
    constants.fill_factor * constants.thermal_voltage * active * (incident / constants.dark_saturation).ln_1p()
}

/// Net power drawn by the transmitter: amplified modulation, DC bias, minus
/// what the users harvest back.
pub fn total_power(
    beams: &Beamformers,
    selection: &Selection,
    dc_bias: f64,
    n_active: usize,
    harvested: &[f64],
    constants: &PowerConstants,
    mode: PowerTermMode,
) -> f64 {
    let modulation: f64 = (0..beams.n_leds())
        .filter(|&n| selection.is_active(n))
        .map(|n| mode.apply(beams.common[n]) + beams.private.iter().map(|w| mode.apply(w[n])).sum::<f64>())
        .sum();
    constants.amplifier_factor * modulation + constants.conversion_factor * n_active as f64 * dc_bias
        - harvested.iter().sum::<f64>()
}

pub fn energy_efficiency(aggregate_rate: f64, total_power: f64) -> Result<f64> {
    if total_power > 0.0 {
        Ok(aggregate_rate / total_power)
    } else {
        Err(Error::NonPositivePower(total_power))
    }
}
