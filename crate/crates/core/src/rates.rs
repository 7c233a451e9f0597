//! Achievable rates under rate-splitting multiple access, plus a conventional
//! SIC-based NOMA baseline for comparison.
//!
//! Every user first decodes the shared common stream treating all private
//! streams as noise, then its own private stream treating the other private
//! streams as noise. Rates are spectral efficiencies in bits/s/Hz.

use serde::{Deserialize, Serialize};

use crate::channel::ChannelMatrix;
use crate::error::{Error, Result};
use crate::geq_with_slack;

/// Binary LED on/off pattern (the diagonal of the selection matrix).
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Selection(pub Vec<bool>);

impl Selection {
    pub fn all(n: usize) -> Self {
        Self(vec![true; n])
    }

    /// The first `n_active` of `n` LEDs switched on.
    pub fn first(n: usize, n_active: usize) -> Self {
        Self((0..n).map(|i| i < n_active).collect())
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn count_active(&self) -> usize {
        self.0.iter().filter(|&&a| a).count()
    }

    pub fn is_active(&self, led: usize) -> bool {
        self.0[led]
    }
}

/// Common beamformer and one private beamformer per user, all real-valued
/// drive-current amplitudes (A).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Beamformers {
    pub common: Vec<f64>,
    /// `private[k][n]`: weight of user k's stream on LED n.
    pub private: Vec<Vec<f64>>,
}

impl Beamformers {
    pub fn zeros(n_users: usize, n_leds: usize) -> Self {
        Self { common: vec![0.0; n_leds], private: vec![vec![0.0; n_leds]; n_users] }
    }

    pub fn n_leds(&self) -> usize {
        self.common.len()
    }

    pub fn n_users(&self) -> usize {
        self.private.len()
    }

    /// `|w_c[n]| + sum_k |w_k[n]|`, the peak modulation swing on LED n.
    pub fn led_amplitude(&self, led: usize) -> f64 {
        std::iter::once(self.common[led]).chain(self.private.iter().map(|w| w[led])).map(f64::abs).sum()
    }

    /// Common weights followed by the private rows, user-major.
    pub fn flatten(&self) -> Vec<f64> {
        let mut out = self.common.clone();
        for w in &self.private {
            out.extend_from_slice(w);
        }
        out
    }
}

/// Portion of the common stream's rate credited to each user (bits/s/Hz).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RateSplit(pub Vec<f64>);

impl RateSplit {
    pub fn zeros(n_users: usize) -> Self {
        Self(vec![0.0; n_users])
    }

    pub fn total(&self) -> f64 {
        self.0.iter().sum()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RateReport {
    pub common_rates: Vec<f64>,
    pub private_rates: Vec<f64>,
    pub aggregate: f64,
    pub common_decodable: bool,
}

/// Received amplitude `h_k^T A w`.
fn effective_amplitude(h: &[f64], selection: &Selection, w: &[f64]) -> f64 {
    h.iter()
        .zip(w)
        .zip(&selection.0)
        .filter(|(_, &a)| a)
        .map(|((h, w), _)| h * w)
        .sum()
}

fn check_noise(noise_var: f64) -> Result<()> {
    if noise_var > 0.0 {
        Ok(())
    } else {
        Err(Error::NonPositiveNoise(noise_var))
    }
}

/// Rate at which user `k` decodes the common stream.
pub fn common_rate(
    k: usize,
    channels: &ChannelMatrix,
    selection: &Selection,
    beams: &Beamformers,
    noise_var: f64,
) -> Result<f64> {
    check_noise(noise_var)?;
    let h = channels.row(k);
    let signal = effective_amplitude(h, selection, &beams.common).powi(2);
    let interference: f64 = beams.private.iter().map(|w| effective_amplitude(h, selection, w).powi(2)).sum();
    Ok((signal / (interference + noise_var)).ln_1p() / std::f64::consts::LN_2)
}

/// Rate at which user `k` decodes its own private stream after removing the
/// common stream.
pub fn private_rate(
    k: usize,
    channels: &ChannelMatrix,
    selection: &Selection,
    beams: &Beamformers,
    noise_var: f64,
) -> Result<f64> {
    check_noise(noise_var)?;
    let h = channels.row(k);
    let mut signal = 0.0;
    let mut interference = 0.0;
    for (j, w) in beams.private.iter().enumerate() {
        let p = effective_amplitude(h, selection, w).powi(2);
        if j == k {
            signal = p;
        } else {
            interference += p;
        }
    }
    Ok((signal / (interference + noise_var)).ln_1p() / std::f64::consts::LN_2)
}

/// The common stream is decodable by everyone when the weakest user's common
/// rate covers the sum of the credited portions.
pub fn common_split_feasible(common_rates: &[f64], split: &RateSplit) -> bool {
    common_split_feasible_with(common_rates, split, 0.0)
}

pub fn common_split_feasible_with(common_rates: &[f64], split: &RateSplit, rel_tol: f64) -> bool {
    let weakest = common_rates.iter().copied().fold(f64::INFINITY, f64::min);
    let demand = split.total();
    demand <= 0.0 || geq_with_slack(weakest, demand, rel_tol)
}

pub fn aggregate_rate(split: &RateSplit, private_rates: &[f64]) -> f64 {
    split.0.iter().sum::<f64>() + private_rates.iter().sum::<f64>()
}

/// Full RSMA report. The common portions count toward the aggregate only when
/// the common stream is decodable; otherwise it carries nothing.
pub fn rsma_rates(
    channels: &ChannelMatrix,
    selection: &Selection,
    beams: &Beamformers,
    split: &RateSplit,
    noise_vars: &[f64],
    rel_tol: f64,
) -> Result<RateReport> {
    let k_users = channels.n_users();
    if noise_vars.len() != k_users {
        return Err(Error::DimensionMismatch { expected: k_users, got: noise_vars.len() });
    }
    let common_rates =
        (0..k_users).map(|k| common_rate(k, channels, selection, beams, noise_vars[k])).collect::<Result<Vec<_>>>()?;
    let private_rates =
        (0..k_users).map(|k| private_rate(k, channels, selection, beams, noise_vars[k])).collect::<Result<Vec<_>>>()?;
    let common_decodable = common_split_feasible_with(&common_rates, split, rel_tol);
    let aggregate = if common_decodable {
        aggregate_rate(split, &private_rates)
    } else {
        private_rates.iter().sum()
    };
    Ok(RateReport { common_rates, private_rates, aggregate, common_decodable })
}

/// Decoding order for NOMA: strongest effective channel energy `||A h_k||^2`
/// first, ties broken by lower user index.
pub fn noma_order(channels: &ChannelMatrix, selection: &Selection) -> Vec<usize> {
    let energy: Vec<f64> = channels
        .rows()
        .map(|h| h.iter().zip(&selection.0).filter(|(_, &a)| a).map(|(g, _)| g * g).sum())
        .collect();
    let mut order: Vec<usize> = (0..channels.n_users()).collect();
    order.sort_by(|&a, &b| energy[b].total_cmp(&energy[a]).then(a.cmp(&b)));
    order
}

/// SIC-based NOMA baseline with one stream per user and no common stream.
///
/// A user decodes and removes every weaker-ordered user's stream before its
/// own, treating stronger-ordered streams as noise. A stream's rate is the
/// minimum over all users that must decode it.
pub fn noma_rates(
    channels: &ChannelMatrix,
    selection: &Selection,
    private_beams: &[Vec<f64>],
    noise_vars: &[f64],
) -> Result<RateReport> {
    let k_users = channels.n_users();
    if noise_vars.len() != k_users {
        return Err(Error::DimensionMismatch { expected: k_users, got: noise_vars.len() });
    }
    if private_beams.len() != k_users {
        return Err(Error::DimensionMismatch { expected: k_users, got: private_beams.len() });
    }
    for &s in noise_vars {
        check_noise(s)?;
    }
    let order = noma_order(channels, selection);
    let mut rank = vec![0; k_users];
    for (r, &k) in order.iter().enumerate() {
        rank[k] = r;
    }
    // received[i][j]: power of stream j at user i
    let received: Vec<Vec<f64>> = (0..k_users)
        .map(|i| private_beams.iter().map(|w| effective_amplitude(channels.row(i), selection, w).powi(2)).collect())
        .collect();

    let private_rates: Vec<f64> = (0..k_users)
        .map(|j| {
            (0..k_users)
                .filter(|&i| rank[i] <= rank[j])
                .map(|i| {
                    let interference: f64 =
                        (0..k_users).filter(|&l| rank[l] < rank[j]).map(|l| received[i][l]).sum();
                    (received[i][j] / (interference + noise_vars[i])).ln_1p() / std::f64::consts::LN_2
                })
                .fold(f64::INFINITY, f64::min)
        })
        .collect();
    Ok(RateReport {
        common_rates: vec![0.0; k_users],
        aggregate: private_rates.iter().sum(),
        private_rates,
        common_decodable: true,
    })
}
