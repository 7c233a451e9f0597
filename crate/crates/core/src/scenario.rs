//! Static description of a deployment plus every tunable knob, stored as a
//! sectioned key-value (TOML) file.

use std::path::Path;

use rand::Rng;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::channel::{build_channel_matrix, DeviceConstants, Mount, Vec3};
use crate::dimming::{DimmingConfig, DimmingState};
use crate::env::{Instance, ModelOptions, RewardMode, Scheme, Thresholds};
use crate::error::{Error, Result};
use crate::power::{HarvestingConstants, PowerConstants, PowerTermMode};
use crate::ppo::{Optimizer, PpoConfig};
use crate::sweep::SweepSpec;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LedSpec {
    pub position: Vec3,
    #[serde(default = "down")]
    pub orientation: Vec3,
}

fn down() -> Vec3 {
    Vec3::DOWN
}

fn up() -> Vec3 {
    Vec3::UP
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct UserSpec {
    pub count: usize,
    /// Lower corner of the box users are drawn from.
    pub min: Vec3,
    /// Upper corner; equal to `min` on an axis pins that coordinate.
    pub max: Vec3,
    #[serde(default = "up")]
    pub orientation: Vec3,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NoiseSpec {
    /// Receiver noise variance shared by all users.
    pub variance: f64,
    /// Optional per-user override.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub per_user: Option<Vec<f64>>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DimmingSpec {
    pub target_level: f64,
    pub current_min: f64,
    pub current_max: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EnvironmentSpec {
    pub episode_len: usize,
    pub reward_mode: RewardMode,
    pub penalty_weight: f64,
    pub power_term_mode: PowerTermMode,
    pub eh_log_active_only: bool,
    pub augment_state_with_channels: bool,
    /// Relative slack applied to every inequality constraint.
    pub constraint_tolerance: f64,
    /// Rate (bits/s/Hz) credited per unit of raw split output.
    pub split_scale: f64,
}

impl Default for EnvironmentSpec {
    fn default() -> Self {
        Self {
            episode_len: 64,
            reward_mode: RewardMode::AsPaper,
            penalty_weight: 1.0,
            power_term_mode: PowerTermMode::Absolute,
            eh_log_active_only: false,
            augment_state_with_channels: false,
            constraint_tolerance: 1e-9,
            split_scale: 1.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OracleSpec {
    /// Grid points per beam dimension on each LED's amplitude simplex.
    pub beam_points: usize,
    /// Grid points per user on the common-rate split simplex.
    pub split_points: usize,
    pub max_evaluations: u64,
    pub random_budget: usize,
}

impl Default for OracleSpec {
    fn default() -> Self {
        Self { beam_points: 11, split_points: 11, max_evaluations: 10_000_000, random_budget: 100_000 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Scenario {
    pub seed: u64,
    /// Room extents (m); the origin is a floor corner.
    pub room: Vec3,
    pub leds: Vec<LedSpec>,
    pub users: UserSpec,
    pub device: DeviceConstants,
    pub harvesting: HarvestingConstants,
    pub power: PowerConstants,
    pub noise: NoiseSpec,
    pub thresholds: Thresholds,
    pub dimming: DimmingSpec,
    #[serde(default)]
    pub environment: EnvironmentSpec,
    #[serde(default)]
    pub ppo: PpoConfig,
    #[serde(default)]
    pub oracle: OracleSpec,
    #[serde(default)]
    pub sweep: SweepSpec,
}

impl Scenario {
    pub fn n_leds(&self) -> usize {
        self.leds.len()
    }

    pub fn n_users(&self) -> usize {
        self.users.count
    }

    pub fn dimming_config(&self) -> DimmingConfig {
        DimmingConfig {
            target_level: self.dimming.target_level,
            n_leds: self.leds.len(),
            current_min: self.dimming.current_min,
            current_max: self.dimming.current_max,
        }
    }

    pub fn led_mounts(&self) -> Vec<Mount> {
        self.leds.iter().map(|l| Mount { position: l.position, orientation: l.orientation }).collect()
    }

    pub fn noise_vars(&self) -> Vec<f64> {
        match &self.noise.per_user {
            Some(v) => v.clone(),
            None => vec![self.noise.variance; self.users.count],
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::InvalidConfig(msg));
        if !self.room.is_finite() || self.room.x <= 0.0 || self.room.y <= 0.0 || self.room.z <= 0.0 {
            return bad(format!("room extents must be positive, got {:?}", self.room));
        }
        if self.leds.is_empty() {
            return bad("at least one LED is required".into());
        }
        let inside = |p: Vec3| {
            p.is_finite()
                && (0.0..=self.room.x).contains(&p.x)
                && (0.0..=self.room.y).contains(&p.y)
                && (0.0..=self.room.z).contains(&p.z)
        };
        for (i, led) in self.leds.iter().enumerate() {
            if !inside(led.position) {
                return bad(format!("LED {i} at {:?} lies outside the room", led.position));
            }
            if led.orientation.normalized().is_none() {
                return bad(format!("LED {i} has a degenerate orientation"));
            }
        }
        if self.users.count == 0 {
            return bad("at least one user is required".into());
        }
        let (lo, hi) = (self.users.min, self.users.max);
        if !inside(lo) || !inside(hi) || lo.x > hi.x || lo.y > hi.y || lo.z > hi.z {
            return bad("user bounds must be an ordered box inside the room".into());
        }
        if self.users.orientation.normalized().is_none() {
            return bad("user orientation is degenerate".into());
        }
        self.device.validate()?;
        self.harvesting.validate()?;
        self.power.validate()?;
        self.dimming_config().validate()?;
        let noise = self.noise_vars();
        if noise.len() != self.users.count || noise.iter().any(|&s| !(s > 0.0)) {
            return bad("noise variances must be positive, one per user".into());
        }
        let t = &self.thresholds;
        if !(t.qos >= 0.0) || !(t.p_max > 0.0) || !(t.p_har_min >= 0.0) {
            return bad("thresholds must be non-negative with a positive power budget".into());
        }
        let e = &self.environment;
        if e.episode_len == 0 || !(e.constraint_tolerance >= 0.0) || !(e.split_scale > 0.0) {
            return bad("environment needs episode_len >= 1, tolerance >= 0, split_scale > 0".into());
        }
        self.ppo.validate()?;
        self.sweep.validate()?;
        Ok(())
    }

    /// Draw user positions uniformly from the configured box.
    pub fn sample_users<R: Rng + ?Sized>(&self, rng: &mut R) -> Vec<Mount> {
        let (lo, hi) = (self.users.min, self.users.max);
        let mut draw = |a: f64, b: f64| if a < b { rng.random_range(a..=b) } else { a };
        (0..self.users.count)
            .map(|_| {
                let x = draw(lo.x, hi.x);
                let y = draw(lo.y, hi.y);
                let z = draw(lo.z, hi.z);
                Mount { position: Vec3::new(x, y, z), orientation: self.users.orientation }
            })
            .collect()
    }

    pub fn model_options(&self, scheme: Scheme) -> ModelOptions {
        ModelOptions {
            scheme,
            power_term_mode: self.environment.power_term_mode,
            eh_log_active_only: self.environment.eh_log_active_only,
            tolerance: self.environment.constraint_tolerance,
        }
    }

    /// Freeze the scenario with concrete user placements.
    pub fn instance(&self, users: &[Mount], scheme: Scheme) -> Result<Instance> {
        let dimming = self.dimming_config();
        let unit = |m: &Mount| Mount { orientation: m.orientation.normalized().unwrap_or(m.orientation), ..*m };
        let leds: Vec<Mount> = self.led_mounts().iter().map(unit).collect();
        let users: Vec<Mount> = users.iter().map(unit).collect();
        Ok(Instance {
            channels: build_channel_matrix(&leds, &users, &self.device)?,
            dimming,
            dimming_state: DimmingState::from_config(&dimming)?,
            harvesting: self.harvesting,
            power: self.power,
            noise_vars: self.noise_vars(),
            thresholds: self.thresholds,
            options: self.model_options(scheme),
        })
    }

    pub fn to_toml(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| Error::InvalidConfig(e.to_string()))
    }

    pub fn from_toml(text: &str) -> Result<Self> {
        let s: Scenario = toml::from_str(text).map_err(|e| Error::InvalidConfig(e.to_string()))?;
        s.validate()?;
        Ok(s)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::InvalidConfig(format!("cannot read {}: {e}", path.display())))?;
        Self::from_toml(&text)
    }

    /// Short content hash of the serialized configuration.
    pub fn config_hash(&self) -> String {
        let text = self.to_toml().unwrap_or_default();
        hex::encode(&Sha256::digest(text.as_bytes())[..8])
    }
}

/// The full-size deployment: an 8 x 8 x 3 m room lit by six ceiling LEDs.
///
/// LEDs sharing a y coordinate sit 2 m apart, LEDs sharing an x coordinate
/// 4 m apart, and the grid is centred in the room: x in {2, 4, 6},
/// y in {2, 6}, z = 3.
pub fn default_scenario() -> Scenario {
    let leds = [2.0, 6.0]
        .iter()
        .flat_map(|&y| [2.0, 4.0, 6.0].map(|x| LedSpec { position: Vec3::new(x, y, 3.0), orientation: Vec3::DOWN }))
        .collect();
    Scenario {
        seed: 7,
        room: Vec3::new(8.0, 8.0, 3.0),
        leds,
        users: UserSpec { count: 4, min: Vec3::new(0.0, 0.0, 0.0), max: Vec3::new(8.0, 8.0, 1.0), orientation: Vec3::UP },
        device: DeviceConstants { fov_semi_angle: 60.0, half_power_semi_angle: 60.0, pd_area: 1e-4, refractive_index: 1.5 },
        harvesting: HarvestingConstants { fill_factor: 0.75, thermal_voltage: 25e-3, dark_saturation: 1e-9 },
        power: PowerConstants { amplifier_factor: 1.2, conversion_factor: 1.0 },
        noise: NoiseSpec { variance: 1e-16, per_user: None },
        thresholds: Thresholds { qos: 3.0, p_max: 20.0, p_har_min: 1e-8 },
        dimming: DimmingSpec { target_level: 1.0, current_min: 0.0, current_max: 10e-3 },
        environment: EnvironmentSpec::default(),
        // plain SGD with a single pass barely moves the policy in 500 episodes
        ppo: PpoConfig { optimizer: Optimizer::Adam, update_epochs: 10, ..PpoConfig::default() },
        oracle: OracleSpec::default(),
        sweep: SweepSpec::default(),
    }
}

/// Two LEDs, one user pinned between them, full brightness and thresholds
/// loose enough that every constraint can be met.
pub fn tiny_scenario() -> Scenario {
    let mut s = default_scenario();
    s.leds = vec![
        LedSpec { position: Vec3::new(3.0, 4.0, 3.0), orientation: Vec3::DOWN },
        LedSpec { position: Vec3::new(5.0, 4.0, 3.0), orientation: Vec3::DOWN },
    ];
    s.users = UserSpec { count: 1, min: Vec3::new(3.5, 4.0, 0.5), max: Vec3::new(3.5, 4.0, 0.5), orientation: Vec3::UP };
    s.thresholds = Thresholds { qos: 0.1, p_max: 20.0, p_har_min: 0.0 };
    s.dimming.target_level = 1.0;
    s
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dimming::active_led_count;
    use approx::assert_relative_eq;
    use rand::SeedableRng;

    #[test]
    fn default_matches_table_values() {
        let s = default_scenario();
        s.validate().unwrap();
        assert_eq!(s.n_leds(), 6);
        let d = s.dimming_config();
        assert_eq!(active_led_count(&d), 6);
        assert_eq!(d.nominal_bias(), 5e-3);
        let mut s66 = s.clone();
        s66.dimming.target_level = 0.66;
        let st = DimmingState::from_config(&s66.dimming_config()).unwrap();
        assert_relative_eq!(st.dc_bias, 4.95e-3, max_relative = 1e-12);
    }

    #[test]
    fn led_grid_spacing() {
        let s = default_scenario();
        for a in &s.leds {
            for b in &s.leds {
                let (pa, pb) = (a.position, b.position);
                if pa.y == pb.y && pa.x != pb.x && (pa.x - pb.x).abs() < 2.5 {
                    assert_eq!((pa.x - pb.x).abs(), 2.0);
                }
                if pa.x == pb.x && pa.y != pb.y {
                    assert_eq!((pa.y - pb.y).abs(), 4.0);
                }
            }
        }
    }

    #[test]
    fn toml_round_trip() {
        for s in [default_scenario(), tiny_scenario()] {
            let text = s.to_toml().unwrap();
            assert_eq!(Scenario::from_toml(&text).unwrap(), s);
        }
    }

    #[test]
    fn rejects_led_outside_room() {
        let mut s = default_scenario();
        s.leds[0].position.z = 4.0;
        assert!(s.validate().is_err());
    }

    #[test]
    fn pinned_users_do_not_move() {
        let s = tiny_scenario();
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(1);
        let u = s.sample_users(&mut rng);
        assert_eq!(u[0].position, Vec3::new(3.5, 4.0, 0.5));
    }
}
