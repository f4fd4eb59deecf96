//! Switching over a set of models: a Bayesian mixture over model *sequences*
//! under a run-length prior, maintained in `O(|M|)` per step as a normalized
//! weight vector.
//!
//! With `|M| = n` models at round `t`, the prior keeps the current model with
//! probability `(t-1)/t` and switches to each other model with probability
//! `1/(t(n-1))`. The weight recursion is
//!
//! ```text
//! u' = 1/((t+1)(n-1)) + (t n - t - 1)/((t+1)(n-1)) * u rho / tau
//! ```
//!
//! followed by renormalization. A single model is passed through unchanged.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Mixture weights over `|M|` models and the current round `t` (starting at 1).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SwitchingMixture {
    u: Vec<f64>,
    t: u64,
}

fn check_preds(mix: &SwitchingMixture, preds: &[f64]) -> Result<()> {
    if preds.len() != mix.u.len() {
        return Err(Error::Dimension {
            what: "switching predictions",
            expected: mix.u.len(),
            got: preds.len(),
        });
    }
    match preds.iter().find(|p| !(**p >= 0.0 && **p <= 1.0)) {
        Some(&p) => Err(Error::Domain {
            op: "switching prediction",
            value: p,
        }),
        None => Ok(()),
    }
}

impl SwitchingMixture {
    pub fn new(models: usize) -> Result<Self> {
        if models == 0 {
            return Err(Error::config("switching needs at least one model"));
        }
        Ok(SwitchingMixture {
            u: vec![1.0 / models as f64; models],
            t: 1,
        })
    }

    pub fn weights(&self) -> &[f64] {
        &self.u
    }

    pub fn models(&self) -> usize {
        self.u.len()
    }

    /// Round whose outcome is predicted next.
    pub fn round(&self) -> u64 {
        self.t
    }

    /// Index of the heaviest model (lowest index on ties).
    pub fn leader(&self) -> usize {
        self.u
            .iter()
            .enumerate()
            .fold((0, f64::NEG_INFINITY), |best, (i, &w)| {
                if w > best.1 {
                    (i, w)
                } else {
                    best
                }
            })
            .0
    }

    /// Mixture probability that the next outcome is 1.
    pub fn predict(&self, preds: &[f64]) -> Result<f64> {
        check_preds(self, preds)?;
        Ok(self.mix(preds))
    }

    fn mix(&self, preds: &[f64]) -> f64 {
        self.u
            .iter()
            .zip(preds)
            .map(|(u, p)| u * p)
            .sum::<f64>()
            .clamp(0.0, 1.0)
    }

    /// Observes outcome `x` given each model's prediction for it, and returns the
    /// mixture's probability of `x` before the update.
    pub fn update(&mut self, preds: &[f64], x: bool) -> Result<f64> {
        check_preds(self, preds)?;
        let lik = |p: f64| if x { p } else { 1.0 - p };
        let tau: f64 = self.u.iter().zip(preds).map(|(&u, &p)| u * lik(p)).sum();
        let n = self.u.len();
        if n == 1 {
            self.t += 1;
            return Ok(lik(preds[0]));
        }
        if !(tau > 0.0) {
            return Err(Error::Domain {
                op: "switching update (mixture assigns zero probability)",
                value: tau,
            });
        }
        let t = self.t as f64;
        let m = n as f64;
        let floor = 1.0 / ((t + 1.0) * (m - 1.0));
        let keep = (t * m - t - 1.0) / ((t + 1.0) * (m - 1.0));
        for (u, &p) in self.u.iter_mut().zip(preds) {
            *u = floor + keep * *u * lik(p) / tau;
        }
        let total: f64 = self.u.iter().sum();
        for u in &mut self.u {
            *u /= total;
        }
        self.t += 1;
        Ok(tau)
    }
}

/// Mixture probability of outcome 1.
pub fn switch_predict(mix: &SwitchingMixture, preds: &[f64]) -> Result<f64> {
    mix.predict(preds)
}

/// Functional form of [`SwitchingMixture::update`].
pub fn switch_update(mix: &SwitchingMixture, preds: &[f64], x: bool) -> Result<SwitchingMixture> {
    let mut next = mix.clone();
    next.update(preds, x)?;
    Ok(next)
}

/// Prior mass of the model sequence `nu` under the run-length prior over
/// `models` models, evaluated by its recursive definition.
pub fn switch_prior_mass(nu: &[usize], models: usize) -> f64 {
    match nu.len() {
        0 => 1.0,
        1 => 1.0 / models as f64,
        n => {
            let nf = n as f64;
            let step = if nu[n - 1] == nu[n - 2] {
                (nf - 1.0) / nf
            } else {
                1.0 / (nf * (models as f64 - 1.0))
            };
            switch_prior_mass(&nu[..n - 1], models) * step
        }
    }
}

/// Number of positions where consecutive models differ.
pub fn switch_count(nu: &[usize]) -> usize {
    nu.windows(2).filter(|w| w[0] != w[1]).count()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::oracle;
    use crate::rng::RandomSource;

    fn with_weights(u: Vec<f64>, t: u64) -> SwitchingMixture {
        SwitchingMixture { u, t }
    }

    #[test]
    fn predict_examples() {
        let m = SwitchingMixture::new(2).unwrap();
        assert_eq!(switch_predict(&m, &[0.2, 0.8]).unwrap(), 0.5);
        let m = with_weights(vec![0.0, 1.0, 0.0], 1);
        assert_eq!(switch_predict(&m, &[0.1, 0.35, 0.9]).unwrap(), 0.35);
        let m = with_weights(vec![0.25, 0.75], 1);
        assert!((switch_predict(&m, &[0.4, 0.8]).unwrap() - 0.7).abs() < 1e-15);
        assert!(switch_predict(&m, &[0.4]).is_err());
    }

    #[test]
    fn first_update_is_uniform() {
        let m = SwitchingMixture::new(2).unwrap();
        let next = switch_update(&m, &[0.9, 0.1], true).unwrap();
        assert_eq!(next.weights(), &[0.5, 0.5]);
        assert_eq!(next.round(), 2);
    }

    #[test]
    fn second_update_follows_posterior() {
        // t = 2: u' = 1/3 + (1/3) * posterior.
        let m = with_weights(vec![0.5, 0.5], 2);
        let next = switch_update(&m, &[0.9, 0.1], true).unwrap();
        assert!((next.weights()[0] - (1.0 / 3.0 + 0.9 / 3.0)).abs() < 1e-15);
    }

    #[test]
    fn equal_predictions_keep_uniform_weights() {
        let u = SwitchingMixture::new(4).unwrap();
        assert_eq!(
            switch_update(&u, &[0.3; 4], true).unwrap().weights(),
            &[0.25; 4]
        );
        // From non-uniform weights, equal evidence only applies the prior's pull
        // towards uniform: order is kept and the mass stays normalized.
        let mut m = with_weights(vec![0.2, 0.3, 0.5], 5);
        m.update(&[0.7, 0.7, 0.7], true).unwrap();
        let w = m.weights();
        assert!(w[0] < w[1] && w[1] < w[2]);
        assert!(w[0] > 0.2 && w[2] < 0.5);
        assert!((w.iter().sum::<f64>() - 1.0).abs() < 1e-15);
    }

    #[test]
    fn single_model_passes_through() {
        let mut m = SwitchingMixture::new(1).unwrap();
        for x in [true, false, true] {
            assert_eq!(m.predict(&[0.3]).unwrap(), 0.3);
            m.update(&[0.3], x).unwrap();
            assert_eq!(m.weights(), &[1.0]);
        }
    }

    #[test]
    fn prior_mass_examples() {
        assert_eq!(switch_prior_mass(&[], 3), 1.0);
        assert_eq!(switch_prior_mass(&[2], 3), 1.0 / 3.0);
        assert!((switch_prior_mass(&[1; 5], 3) - 1.0 / 15.0).abs() < 1e-15);
        assert!((switch_prior_mass(&[0, 1], 3) - 1.0 / 12.0).abs() < 1e-15);
    }

    #[test]
    fn prior_recursion_matches_product() {
        for m in 2..=3 {
            for len in 0..=6 {
                oracle::for_each_sequence(m, len, |nu| {
                    let a = switch_prior_mass(nu, m);
                    let b = oracle::switching_prior(nu, m);
                    assert!((a - b).abs() <= 1e-15 * b.max(1.0));
                });
            }
        }
    }

    #[test]
    fn normalization_survives_long_fuzz() {
        let mut rng = RandomSource::new(3);
        let mut m = SwitchingMixture::new(5).unwrap();
        for _ in 0..100_000 {
            let preds: Vec<f64> = (0..5).map(|_| rng.uniform(0.01, 0.99)).collect();
            m.update(&preds, rng.bernoulli(0.5)).unwrap();
            let total: f64 = m.weights().iter().sum();
            assert!((total - 1.0).abs() <= 1e-12);
            assert!(m.weights().iter().all(|&u| u >= 0.0));
        }
    }

    #[test]
    fn marginals_match_small_enumeration() {
        let mut rng = RandomSource::new(17);
        let preds: Vec<Vec<f64>> = (0..5)
            .map(|_| (0..3).map(|_| rng.uniform(0.05, 0.95)).collect())
            .collect();
        let xs = [true, false, false, true, true];
        let mut m = SwitchingMixture::new(3).unwrap();
        let mut product = 1.0;
        for (p, &x) in preds.iter().zip(&xs) {
            product *= m.update(p, x).unwrap();
        }
        let brute = oracle::switching_marginal(&preds, &xs);
        assert!((product - brute).abs() <= 1e-12);
    }

    #[test]
    fn state_serializes() {
        let mut m = SwitchingMixture::new(3).unwrap();
        m.update(&[0.2, 0.5, 0.9], true).unwrap();
        m.update(&[0.2, 0.5, 0.9], true).unwrap();
        let back: SwitchingMixture =
            serde_json::from_str(&serde_json::to_string(&m).unwrap()).unwrap();
        assert_eq!(back, m);
        assert_eq!(m.leader(), 2);
    }
}
