//! Base predictors feeding a network's first layer.
//!
//! The zero-redundancy (ZR) estimator mixes the Krichevsky–Trofimov (KT)
//! estimator with point masses on the two deterministic sequences:
//! `P(x_1:n) = KT(x_1:n)/2 + [x = 0^n]/4 + [x = 1^n]/4`. Predictions are the
//! sequential ratios of that marginal. Once both symbols have been seen the
//! deterministic parts are dead and the prediction is the KT rule
//! `(ones + 1/2) / (n + 1)`.

use serde::{Deserialize, Serialize};

use crate::context::{ContextFunction, SideInfo};
use crate::error::{Error, Result};
use crate::math::{sigmoid, Clip, Probability};

/// Sequential zero-redundancy estimator state for one context.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct ZRCounter {
    zeros: u32,
    ones: u32,
    /// `ln KT` of the history; only consulted while the history is constant.
    ln_kt: f64,
}

impl ZRCounter {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn zeros(&self) -> u32 {
        self.zeros
    }

    pub fn ones(&self) -> u32 {
        self.ones
    }

    fn n(&self) -> f64 {
        f64::from(self.zeros) + f64::from(self.ones)
    }

    /// Probability that the next symbol is `x`.
    pub fn prob(&self, x: bool) -> f64 {
        let n = self.n();
        let (same, other) = if x {
            (self.ones, self.zeros)
        } else {
            (self.zeros, self.ones)
        };
        let kt_next = (f64::from(same) + 0.5) / (n + 1.0);
        match (self.zeros, self.ones) {
            (0, 0) => 0.5,
            (a, b) if a > 0 && b > 0 => kt_next,
            _ => {
                // The history is constant; mass 1/4 sits on continuing it.
                let kt = self.ln_kt.exp();
                let denom = 0.5 * kt + 0.25;
                if other == 0 {
                    // `x` continues the run: 1 - P(break).
                    let p_break = 0.5 * kt * (0.5 / (n + 1.0)) / denom;
                    1.0 - p_break
                } else {
                    0.5 * kt * kt_next / denom
                }
            }
        }
    }

    pub fn observe(&mut self, x: bool) {
        let n = self.n();
        let same = if x { self.ones } else { self.zeros };
        if self.zeros == 0 || self.ones == 0 {
            self.ln_kt += ((f64::from(same) + 0.5) / (n + 1.0)).ln();
        }
        if x {
            self.ones = self.ones.saturating_add(1);
        } else {
            self.zeros = self.zeros.saturating_add(1);
        }
    }
}

/// ZR probability that the next symbol is 1.
pub fn zr_predict(c: &ZRCounter) -> Probability {
    Probability::clipped(c.prob(true), Clip::new(1e-15).expect("valid epsilon"))
}

/// Counter after observing `x`.
pub fn zr_update(c: &ZRCounter, x: bool) -> ZRCounter {
    let mut next = *c;
    next.observe(x);
    next
}

/// A context function over causal pixels with one ZR counter per context.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SkipGramBaseModel {
    context: ContextFunction,
    table: Vec<ZRCounter>,
}

impl SkipGramBaseModel {
    pub fn new(context: ContextFunction) -> Self {
        let table = vec![ZRCounter::new(); context.size()];
        SkipGramBaseModel { context, table }
    }

    pub fn context(&self) -> &ContextFunction {
        &self.context
    }

    pub fn counter(&self, id: usize) -> &ZRCounter {
        &self.table[id]
    }

    /// Context id for `z`, checked.
    pub fn select(&self, z: SideInfo<'_>) -> Result<usize> {
        self.context.try_eval(z)
    }

    /// Probability that the current pixel is on, given the preceding pixels in `z`.
    pub fn predict(&self, z: SideInfo<'_>) -> Result<f64> {
        Ok(self.table[self.select(z)?].prob(true))
    }

    pub fn update(&mut self, z: SideInfo<'_>, x: bool) -> Result<()> {
        let c = self.select(z)?;
        self.table[c].observe(x);
        Ok(())
    }

    /// Prediction and update for a context id computed by the caller.
    #[inline]
    pub fn predict_at(&self, id: usize) -> f64 {
        self.table[id].prob(true)
    }

    #[inline]
    pub fn update_at(&mut self, id: usize, x: bool) {
        self.table[id].observe(x);
    }
}

/// Componentwise sigmoid of raw features, clipped.
pub fn feature_base(z: &[f64], clip: Clip) -> Vec<f64> {
    z.iter().map(|&v| clip.apply(sigmoid(v))).collect()
}

/// [`feature_base`] writing into an existing buffer.
pub fn feature_base_into(z: &[f64], clip: Clip, out: &mut Vec<f64>) {
    out.clear();
    out.extend(z.iter().map(|&v| clip.apply(sigmoid(v))));
}

/// A base predictor that always answers `alpha`.
pub fn constant_base(alpha: f64) -> Result<Probability> {
    Probability::new(alpha).map_err(|_| Error::Domain {
        op: "constant base prediction",
        value: alpha,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::context::SkipGramContext;
    use crate::math::{logit, DEFAULT_BIAS};
    use crate::oracle;

    fn counter(zeros: u32, ones: u32) -> ZRCounter {
        let mut c = ZRCounter::new();
        for _ in 0..zeros {
            c.observe(false);
        }
        for _ in 0..ones {
            c.observe(true);
        }
        c
    }

    #[test]
    fn zr_examples() {
        assert_eq!(zr_predict(&ZRCounter::new()).get(), 0.5);
        let p = zr_predict(&counter(0, 3)).get();
        assert!((p - 99.0 / 104.0).abs() < 1e-15, "{p}");
        assert!((zr_predict(&counter(1, 1)).get() - 0.5).abs() < 1e-15);
    }

    #[test]
    fn update_counts() {
        let c = zr_update(&ZRCounter::new(), true);
        assert_eq!((c.zeros(), c.ones()), (0, 1));
        let c = zr_update(&c, false);
        assert_eq!((c.zeros(), c.ones()), (1, 1));
    }

    #[test]
    fn kt_rule_once_both_symbols_seen() {
        for a in 1..20 {
            for b in 1..20 {
                let expected = (f64::from(b) + 0.5) / f64::from(a + b + 1);
                assert!((counter(a, b).prob(true) - expected).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn sequential_ratios_match_marginals() {
        for n in 0..=10usize {
            oracle::for_each_sequence(2, n, |bits| {
                let xs: Vec<bool> = bits.iter().map(|&b| b == 1).collect();
                let mut c = ZRCounter::new();
                let mut p = 1.0;
                for &x in &xs {
                    p *= c.prob(x);
                    c.observe(x);
                }
                let brute = oracle::zr_marginal(&xs);
                assert!((p - brute).abs() <= 1e-12, "{xs:?}: {p} vs {brute}");
            });
        }
    }

    #[test]
    fn predictions_sum_to_one() {
        for a in 0..30 {
            for b in 0..30 {
                let c = counter(a, b);
                assert!((c.prob(true) + c.prob(false) - 1.0).abs() < 1e-15);
                assert!(c.prob(true) > 0.0 && c.prob(true) < 1.0);
            }
        }
    }

    #[test]
    fn deterministic_runs_cost_at_most_ln4() {
        let mut c = ZRCounter::new();
        let mut loss = 0.0;
        for _ in 0..10_000 {
            loss -= c.prob(false).ln();
            c.observe(false);
            assert!(loss <= 4f64.ln() + 1e-12);
        }
    }

    #[test]
    fn skipgram_model_learns_per_context() {
        let ctx = ContextFunction::SkipGram(SkipGramContext::new(vec![0]).unwrap());
        let mut m = SkipGramBaseModel::new(ctx);
        for _ in 0..20 {
            m.update(&[1.0, 0.0], true).unwrap();
        }
        assert!(m.predict(&[1.0]).unwrap() > 0.95);
        assert_eq!(m.predict(&[0.0]).unwrap(), 0.5);
        assert!(m.predict(&[]).is_err());
    }

    #[test]
    fn feature_base_examples() {
        let clip = Clip::default();
        assert_eq!(feature_base(&[0.0, 0.0], clip), vec![0.5, 0.5]);
        assert!((feature_base(&[1.0], clip)[0] - DEFAULT_BIAS).abs() < 1e-15);
        assert_eq!(feature_base(&[50.0, -50.0], clip), vec![0.99, 0.01]);
    }

    #[test]
    fn constant_base_examples() {
        assert_eq!(constant_base(0.5).unwrap().get(), 0.5);
        assert!((logit(constant_base(DEFAULT_BIAS).unwrap().get()).unwrap() - 1.0).abs() < 1e-15);
        assert!(constant_base(1.0).is_err());
        assert!(constant_base(0.0).is_err());
    }
}
