//! Scalar primitives shared by every other module.
//!
//! All logarithms are natural; losses are reported in nats.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Default clipping parameter for probabilities entering a mixer.
pub const DEFAULT_EPSILON: f64 = 0.01;

/// `e / (1 + e)`, the bias input whose logit is exactly one.
pub const DEFAULT_BIAS: f64 = std::f64::consts::E / (1.0 + std::f64::consts::E);

/// Dot product with a fixed summation order.
#[inline]
pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    debug_assert_eq!(a.len(), b.len());
    let n = a.len().min(b.len());
    let (a, b) = (&a[..n], &b[..n]);
    // Four interleaved accumulators let the compiler vectorize; the order is fixed.
    let mut acc = [0.0f64; 4];
    let (ca, cb) = (a.chunks_exact(4), b.chunks_exact(4));
    let tail: f64 = ca
        .remainder()
        .iter()
        .zip(cb.remainder())
        .map(|(x, y)| x * y)
        .sum();
    for (x, y) in ca.zip(cb) {
        for i in 0..4 {
            acc[i] += x[i] * y[i];
        }
    }
    (acc[0] + acc[1]) + (acc[2] + acc[3]) + tail
}

/// Logistic function `1 / (1 + e^{-x})`, evaluated without overflow for large `|x|`.
#[inline]
pub fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

/// Inverse of [`sigmoid`]. Fails outside the open unit interval.
pub fn logit(p: f64) -> Result<f64> {
    if p > 0.0 && p < 1.0 {
        Ok(logit_unchecked(p))
    } else {
        Err(Error::Domain {
            op: "logit",
            value: p,
        })
    }
}

/// [`logit`] for callers that have already clipped `p` into `(0, 1)`.
#[inline]
pub fn logit_unchecked(p: f64) -> f64 {
    debug_assert!(p > 0.0 && p < 1.0, "logit of {p}");
    p.ln() - (-p).ln_1p()
}

/// Clamp `p` into `[eps, 1 - eps]`.
pub fn clip_probability(p: f64, eps: f64) -> Result<f64> {
    Ok(Clip::new(eps)?.apply(p))
}

/// A validated clipping parameter `eps` in `(0, 1/2)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "f64", into = "f64")]
pub struct Clip {
    eps: f64,
}

impl Clip {
    pub fn new(eps: f64) -> Result<Self> {
        if eps > 0.0 && eps < 0.5 {
            Ok(Clip { eps })
        } else {
            Err(Error::config(format!(
                "probability clipping epsilon must lie in (0, 1/2), got {eps}"
            )))
        }
    }

    #[inline]
    pub fn epsilon(self) -> f64 {
        self.eps
    }

    #[inline]
    pub fn apply(self, p: f64) -> f64 {
        p.max(self.eps).min(1.0 - self.eps)
    }

    /// Largest absolute logit a clipped probability can have, `ln((1-eps)/eps)`.
    pub fn max_logit(self) -> f64 {
        ((1.0 - self.eps) / self.eps).ln()
    }
}

impl Default for Clip {
    fn default() -> Self {
        Clip {
            eps: DEFAULT_EPSILON,
        }
    }
}

impl TryFrom<f64> for Clip {
    type Error = Error;

    fn try_from(eps: f64) -> Result<Self> {
        Clip::new(eps)
    }
}

impl From<Clip> for f64 {
    fn from(c: Clip) -> f64 {
        c.eps
    }
}

/// A probability strictly inside `(0, 1)`.
#[derive(Debug, Clone, Copy, PartialEq, PartialOrd, Serialize, Deserialize)]
pub struct Probability(f64);

impl Probability {
    pub fn new(p: f64) -> Result<Self> {
        if p > 0.0 && p < 1.0 {
            Ok(Probability(p))
        } else {
            Err(Error::Domain {
                op: "probability",
                value: p,
            })
        }
    }

    pub fn clipped(p: f64, clip: Clip) -> Self {
        Probability(clip.apply(p))
    }

    #[inline]
    pub fn get(self) -> f64 {
        self.0
    }

    pub fn logit(self) -> f64 {
        logit_unchecked(self.0)
    }

    /// Probability assigned to the binary outcome `x`.
    pub fn of(self, x: bool) -> f64 {
        if x {
            self.0
        } else {
            1.0 - self.0
        }
    }
}

/// Log loss `-ln q(x)` of a prediction `q = P(x = 1)`.
#[inline]
pub fn log_loss(q: f64, x: bool) -> f64 {
    if x {
        -q.ln()
    } else {
        -(-q).ln_1p()
    }
}

/// Bernoulli KL divergence `D(p || q)` with `0 ln 0 = 0`.
pub fn bernoulli_kl(p: f64, q: f64) -> Result<f64> {
    if !(0.0..=1.0).contains(&p) {
        return Err(Error::Domain {
            op: "bernoulli_kl (p)",
            value: p,
        });
    }
    if !(q > 0.0 && q < 1.0) {
        return Err(Error::Domain {
            op: "bernoulli_kl (q)",
            value: q,
        });
    }
    let term = |a: f64, b: f64| if a == 0.0 { 0.0 } else { a * (a / b).ln() };
    Ok((term(p, q) + term(1.0 - p, 1.0 - q)).max(0.0))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::RandomSource;

    const E: f64 = std::f64::consts::E;

    #[test]
    fn sigmoid_values() {
        assert_eq!(sigmoid(0.0), 0.5);
        assert!((sigmoid(1.0) - E / (1.0 + E)).abs() < 1e-15);
        assert!((sigmoid(logit(0.3).unwrap()) - 0.3).abs() < 1e-15);
        assert!(sigmoid(-800.0) >= 0.0 && sigmoid(800.0) <= 1.0);
        assert!(sigmoid(-1.0) < sigmoid(-0.5));
    }

    #[test]
    fn logit_values() {
        assert_eq!(logit(0.5).unwrap(), 0.0);
        assert!((logit(DEFAULT_BIAS).unwrap() - 1.0).abs() < 1e-15);
        assert!((logit(0.9).unwrap() - 9f64.ln()).abs() < 1e-14);
        assert!((logit(0.9).unwrap() - 2.197_224_577_336_219).abs() < 1e-12);
    }

    #[test]
    fn logit_rejects_boundary() {
        for p in [0.0, 1.0, -0.1, 1.5, f64::NAN] {
            assert!(matches!(logit(p), Err(Error::Domain { .. })), "{p}");
        }
    }

    #[test]
    fn logit_inverts_sigmoid() {
        // Round-trip error is bounded by the conditioning of logit at sigmoid(x),
        // which grows like e^|x|.
        let mut x = -30.0;
        while x <= 30.0 {
            let err = (logit_unchecked(sigmoid(x)) - x).abs();
            let tol = 4.0 * f64::EPSILON * (1.0 + x.abs().exp());
            assert!(err <= tol, "x={x} err={err} tol={tol}");
            x += 0.01;
        }
    }

    #[test]
    fn sigmoid_inverts_logit_on_random_probabilities() {
        let mut rng = RandomSource::new(11);
        for _ in 0..10_000 {
            let p = 1e-6 + rng.next_f64() * (1.0 - 2e-6);
            assert!((sigmoid(logit(p).unwrap()) - p).abs() <= 1e-12);
        }
    }

    #[test]
    fn clip_values() {
        assert_eq!(clip_probability(0.5, 0.01).unwrap(), 0.5);
        assert_eq!(clip_probability(0.0, 0.01).unwrap(), 0.01);
        assert_eq!(clip_probability(1.2, 0.05).unwrap(), 0.95);
        assert!(clip_probability(0.3, 0.5).is_err());
        assert!(clip_probability(0.3, 0.0).is_err());
        assert!(clip_probability(0.3, -1.0).is_err());
    }

    #[test]
    fn clip_is_idempotent() {
        let mut rng = RandomSource::new(3);
        for _ in 0..1000 {
            let eps = 0.001 + rng.next_f64() * 0.4;
            let p = rng.next_f64() * 3.0 - 1.0;
            let once = clip_probability(p, eps).unwrap();
            assert_eq!(clip_probability(once, eps).unwrap(), once);
            assert!(once >= eps && once <= 1.0 - eps);
        }
    }

    #[test]
    fn kl_values() {
        assert_eq!(bernoulli_kl(0.3, 0.3).unwrap(), 0.0);
        let beta = E / (1.0 + E);
        // Only the (1 - p) term survives at p = 0: ln(1 / (1 - beta)) = ln(1 + e).
        assert!((bernoulli_kl(0.0, beta).unwrap() - (-(1.0 - beta).ln())).abs() < 1e-15);
        assert!((bernoulli_kl(0.0, beta).unwrap() - 1.313_261_687_518_222_8).abs() < 1e-12);
        let expected = 0.5 * 2f64.ln() + 0.5 * (2.0f64 / 3.0).ln();
        assert!((bernoulli_kl(0.5, 0.25).unwrap() - expected).abs() < 1e-15);
        assert!((expected - 0.143_841_036_225_890_2).abs() < 1e-12);
        assert!(bernoulli_kl(0.5, 0.0).is_err());
        assert!(bernoulli_kl(0.5, 1.0).is_err());
        assert!(bernoulli_kl(1.5, 0.5).is_err());
    }

    #[test]
    fn kl_dominates_pinsker() {
        let mut rng = RandomSource::new(5);
        for _ in 0..10_000 {
            let p = rng.next_f64();
            let q = 1e-9 + rng.next_f64() * (1.0 - 2e-9);
            let d = bernoulli_kl(p, q).unwrap();
            assert!(d + 1e-12 >= 2.0 * (p - q) * (p - q), "p={p} q={q}");
        }
    }

    #[test]
    fn log_loss_matches_definition() {
        assert!((log_loss(0.9, true) + 0.9f64.ln()).abs() < 1e-15);
        assert!((log_loss(0.9, false) + 0.1f64.ln()).abs() < 1e-14);
    }

    #[test]
    fn clip_serde_validates() {
        assert!(serde_json::from_str::<Clip>("0.7").is_err());
        let c: Clip = serde_json::from_str("0.01").unwrap();
        assert_eq!(c.epsilon(), 0.01);
    }
}
