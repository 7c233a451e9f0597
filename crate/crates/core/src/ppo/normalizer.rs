use serde::{Deserialize, Serialize};

const CLIP: f64 = 5.0;

/// Per-coordinate running mean and variance (Welford), used to put rates,
/// harvested watts and beam amperes on a comparable scale.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunningNorm {
    count: u64,
    mean: Vec<f64>,
    m2: Vec<f64>,
    pub frozen: bool,
}

impl RunningNorm {
    pub fn new(dim: usize) -> Self {
        Self { count: 0, mean: vec![0.0; dim], m2: vec![0.0; dim], frozen: false }
    }

    pub fn dim(&self) -> usize {
        self.mean.len()
    }

    pub fn count(&self) -> u64 {
        self.count
    }

    pub fn update(&mut self, x: &[f64]) {
        if self.frozen {
            return;
        }
        self.count += 1;
        let n = self.count as f64;
        for ((m, s), &v) in self.mean.iter_mut().zip(self.m2.iter_mut()).zip(x) {
            let delta = v - *m;
            *m += delta / n;
            *s += delta * (v - *m);
        }
    }

    /// Standardize `x`; coordinates that have not varied relative to their
    /// magnitude map to zero.
    pub fn normalize(&self, x: &[f64]) -> Vec<f64> {
        if self.count == 0 {
            return x.to_vec();
        }
        let n = self.count as f64;
        x.iter()
            .zip(&self.mean)
            .zip(&self.m2)
            .map(|((&v, &m), &s)| {
                let std = (s / n).sqrt();
                if std > 1e-9 * m.abs() && std > 0.0 {
                    ((v - m) / std).clamp(-CLIP, CLIP)
                } else {
                    0.0
                }
            })
            .collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn standardizes_and_handles_constants() {
        let mut n = RunningNorm::new(2);
        for i in 0..100 {
            n.update(&[i as f64 * 1e-9, 3.0]);
        }
        let z = n.normalize(&[49.5e-9, 3.0]);
        assert!(z[0].abs() < 1e-9);
        assert_eq!(z[1], 0.0);
        let hi = n.normalize(&[99e-9, 3.0])[0];
        assert!(hi > 1.6 && hi < 1.8);
    }

    #[test]
    fn frozen_ignores_updates() {
        let mut n = RunningNorm::new(1);
        n.update(&[1.0]);
        n.update(&[3.0]);
        n.frozen = true;
        n.update(&[100.0]);
        assert_eq!(n.normalize(&[2.0]), vec![0.0]);
        assert_eq!(n.count(), 2);
    }
}
