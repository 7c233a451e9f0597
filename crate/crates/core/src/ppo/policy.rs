//! Hybrid action distribution: independent Gaussians over beam weights and
//! rate split, and a Plackett-Luce (Gumbel-top-k) draw over which LEDs glow.

use std::f64::consts::PI;

use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::env::top_k;

pub const LOG_STD_MIN: f64 = -5.0;
pub const LOG_STD_MAX: f64 = 2.0;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ActorOutput {
    pub mean: Vec<f64>,
    pub log_std: Vec<f64>,
    /// One score per LED.
    pub logits: Vec<f64>,
}

/// A draw from the policy, kept in the form needed to re-score it later.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SampledAction {
    /// Unconstrained action vector handed to the environment.
    pub raw: Vec<f64>,
    pub continuous: Vec<f64>,
    /// LEDs in the order they were drawn.
    pub selection_order: Vec<usize>,
    pub log_prob: f64,
}

/// Gradient of a scalar with respect to each part of an [`ActorOutput`].
#[derive(Debug, Clone, PartialEq)]
pub struct OutputGrad {
    pub mean: Vec<f64>,
    pub log_std: Vec<f64>,
    pub logits: Vec<f64>,
}

impl OutputGrad {
    pub fn zeros(continuous: usize, logits: usize) -> Self {
        Self { mean: vec![0.0; continuous], log_std: vec![0.0; continuous], logits: vec![0.0; logits] }
    }
}

fn log_sum_exp(values: impl Iterator<Item = f64> + Clone) -> f64 {
    let m = values.clone().fold(f64::NEG_INFINITY, f64::max);
    if m == f64::NEG_INFINITY {
        return m;
    }
    m + values.map(|v| (v - m).exp()).sum::<f64>().ln()
}

fn selection_raw(n_leds: usize, chosen: &[usize]) -> Vec<f64> {
    let mut v = vec![0.0; n_leds];
    for &i in chosen {
        v[i] = 1.0;
    }
    v
}

/// Draw an action. Continuous coordinates are Gaussian; the LED subset comes
/// from perturbing the logits with Gumbel noise and taking the top `n_active`.
pub fn policy_sample<R: Rng + ?Sized>(output: &ActorOutput, n_active: usize, rng: &mut R) -> SampledAction {
    let continuous: Vec<f64> = output
        .mean
        .iter()
        .zip(&output.log_std)
        .map(|(m, ls)| m + ls.exp() * rng.sample::<f64, _>(StandardNormal))
        .collect();
    let perturbed: Vec<f64> = output
        .logits
        .iter()
        .map(|l| {
            let u: f64 = rng.random_range(f64::MIN_POSITIVE..1.0);
            l - (-u.ln()).ln()
        })
        .collect();
    let mut order: Vec<usize> = (0..perturbed.len()).collect();
    order.sort_by(|&a, &b| perturbed[b].total_cmp(&perturbed[a]).then(a.cmp(&b)));
    order.truncate(n_active);

    let mut raw = continuous.clone();
    raw.extend(selection_raw(output.logits.len(), &order));
    let log_prob = log_prob(output, &continuous, &order);
    SampledAction { raw, continuous, selection_order: order, log_prob }
}

/// Deterministic action: Gaussian means and the top-scoring LEDs.
pub fn greedy_action(output: &ActorOutput) -> Vec<f64> {
    let mut raw = output.mean.clone();
    raw.extend_from_slice(&output.logits);
    raw
}

/// Greedy LED subset for a given count.
pub fn greedy_selection(output: &ActorOutput, n_active: usize) -> Vec<usize> {
    top_k(&output.logits, n_active)
}

pub fn gaussian_log_density(x: f64, mean: f64, log_std: f64) -> f64 {
    let z = (x - mean) / log_std.exp();
    -0.5 * z * z - log_std - 0.5 * (2.0 * PI).ln()
}

/// Log-probability of drawing `order` (in that order) without replacement
/// from the softmax over `logits`. Selecting every LED is certain and scores 0.
fn ordered_selection_log_prob(logits: &[f64], order: &[usize]) -> f64 {
    if order.len() >= logits.len() {
        return 0.0;
    }
    let mut remaining: Vec<usize> = (0..logits.len()).collect();
    let mut lp = 0.0;
    for &s in order {
        lp += logits[s] - log_sum_exp(remaining.iter().map(|&i| logits[i]));
        remaining.retain(|&i| i != s);
    }
    lp
}

pub fn log_prob(output: &ActorOutput, continuous: &[f64], order: &[usize]) -> f64 {
    let gauss: f64 = continuous
        .iter()
        .zip(&output.mean)
        .zip(&output.log_std)
        .map(|((x, m), ls)| gaussian_log_density(*x, *m, *ls))
        .sum();
    gauss + ordered_selection_log_prob(&output.logits, order)
}

/// Log-probability and its gradient with respect to the actor output.
pub fn log_prob_with_grad(output: &ActorOutput, continuous: &[f64], order: &[usize]) -> (f64, OutputGrad) {
    let mut grad = OutputGrad::zeros(output.mean.len(), output.logits.len());
    for (i, ((x, m), ls)) in continuous.iter().zip(&output.mean).zip(&output.log_std).enumerate() {
        let sigma = ls.exp();
        let z = (x - m) / sigma;
        grad.mean[i] = z / sigma;
        grad.log_std[i] = z * z - 1.0;
    }
    if order.len() < output.logits.len() {
        let mut remaining: Vec<usize> = (0..output.logits.len()).collect();
        for &s in order {
            let lse = log_sum_exp(remaining.iter().map(|&i| output.logits[i]));
            grad.logits[s] += 1.0;
            for &i in &remaining {
                grad.logits[i] -= (output.logits[i] - lse).exp();
            }
            remaining.retain(|&i| i != s);
        }
    }
    (log_prob(output, continuous, order), grad)
}

/// Entropy of the Gaussian head plus the entropy of the single-draw softmax
/// over LEDs, and its gradient.
pub fn entropy_with_grad(output: &ActorOutput, include_selection: bool) -> (f64, OutputGrad) {
    let mut grad = OutputGrad::zeros(output.mean.len(), output.logits.len());
    let mut h: f64 = output.log_std.iter().map(|ls| ls + 0.5 * (1.0 + (2.0 * PI).ln())).sum();
    grad.log_std.iter_mut().for_each(|g| *g = 1.0);
    if include_selection && !output.logits.is_empty() {
        let lse = log_sum_exp(output.logits.iter().copied());
        let logp: Vec<f64> = output.logits.iter().map(|l| l - lse).collect();
        let hs: f64 = -logp.iter().map(|lp| lp.exp() * lp).sum::<f64>();
        for (g, lp) in grad.logits.iter_mut().zip(&logp) {
            *g = -lp.exp() * (lp + hs);
        }
        h += hs;
    }
    (h, grad)
}
