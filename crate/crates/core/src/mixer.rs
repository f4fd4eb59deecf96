//! Geometric mixing of binary predictions, its log loss and gradient, and the
//! projected online gradient descent step.
//!
//! A mixer with weights `w` combines input probabilities `p` as
//! `sigmoid(w . logit(p))`. Inputs are expected to be clipped already; the
//! mixer never sees pre-clipping values.

use serde::{Deserialize, Serialize};

use crate::context::SideInfo;
use crate::error::{Error, Result};
use crate::math::{dot, log_loss, logit_unchecked, sigmoid};
use crate::network::Neuron;

fn check_probabilities(p: &[f64]) -> Result<()> {
    if p.is_empty() {
        return Err(Error::Dimension {
            what: "mixer input",
            expected: 1,
            got: 0,
        });
    }
    match p.iter().find(|&&v| !(v > 0.0 && v < 1.0)) {
        Some(&v) => Err(Error::Domain {
            op: "mixer input probability",
            value: v,
        }),
        None => Ok(()),
    }
}

fn check_dims(what: &'static str, expected: usize, got: usize) -> Result<()> {
    if expected == got {
        Ok(())
    } else {
        Err(Error::Dimension {
            what,
            expected,
            got,
        })
    }
}

/// Logits of a vector of probabilities.
pub fn logits(p: &[f64]) -> Vec<f64> {
    p.iter().map(|&v| logit_unchecked(v)).collect()
}

/// `sigmoid(w . logits)` for callers that already hold the input logits.
#[inline]
pub fn geo_mix_logits(w: &[f64], logits: &[f64]) -> f64 {
    sigmoid(dot(w, logits))
}

/// Geometric mixture `P(x = 1)` of the input probabilities `p` under weights `w`.
pub fn geo_mix(w: &[f64], p: &[f64]) -> Result<f64> {
    check_probabilities(p)?;
    check_dims("geo_mix weights", p.len(), w.len())?;
    Ok(geo_mix_logits(w, &logits(p)))
}

/// Log loss of the geometric mixture on outcome `x`.
pub fn geo_loss(w: &[f64], p: &[f64], x: bool) -> Result<f64> {
    Ok(log_loss(geo_mix(w, p)?, x))
}

/// Gradient of [`geo_loss`] with respect to `w`: `(geo_mix - x) * logit(p)`.
pub fn geo_gradient(w: &[f64], p: &[f64], x: bool) -> Result<Vec<f64>> {
    let q = geo_mix(w, p)?;
    let residual = q - f64::from(u8::from(x));
    Ok(p.iter().map(|&v| residual * logit_unchecked(v)).collect())
}

/// A weight vector constrained to the hypercube `[-bound, bound]^m`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WeightVector {
    w: Vec<f64>,
    bound: f64,
}

impl WeightVector {
    /// Builds a weight vector, projecting `w` into the hypercube. `bound` must be at least one
    /// so every unit basis vector is a feasible weight.
    pub fn new(w: Vec<f64>, bound: f64) -> Result<Self> {
        check_bound(bound)?;
        let w = w.into_iter().map(|v| v.clamp(-bound, bound)).collect();
        Ok(WeightVector { w, bound })
    }

    pub fn zeros(m: usize, bound: f64) -> Result<Self> {
        WeightVector::new(vec![0.0; m], bound)
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.w
    }

    pub fn bound(&self) -> f64 {
        self.bound
    }

    pub fn len(&self) -> usize {
        self.w.len()
    }

    pub fn is_empty(&self) -> bool {
        self.w.is_empty()
    }

    pub fn mix(&self, p: &[f64]) -> Result<f64> {
        geo_mix(&self.w, p)
    }

    /// One projected gradient step: `clamp(w - eta * grad, -b, b)` componentwise.
    pub fn ogd_step(&mut self, grad: &[f64], eta: f64) -> Result<()> {
        check_dims("ogd_step gradient", self.w.len(), grad.len())?;
        if !(eta > 0.0) {
            return Err(Error::config(format!(
                "learning rate must be positive, got {eta}"
            )));
        }
        let b = self.bound;
        for (w, g) in self.w.iter_mut().zip(grad) {
            *w = (*w - eta * g).clamp(-b, b);
        }
        Ok(())
    }
}

/// Functional form of [`WeightVector::ogd_step`].
pub fn ogd_step(w: &WeightVector, grad: &[f64], eta: f64) -> Result<WeightVector> {
    let mut next = w.clone();
    next.ogd_step(grad, eta)?;
    Ok(next)
}

pub(crate) fn check_bound(bound: f64) -> Result<()> {
    if bound >= 1.0 && bound.is_finite() {
        Ok(())
    } else {
        Err(Error::config(format!(
            "weight bound must be finite and at least 1, got {bound}"
        )))
    }
}

/// Step-size schedule as a function of the round index `t >= 1`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum LearningRate {
    Constant {
        rate: f64,
    },
    /// `scale / t`
    Inverse {
        scale: f64,
    },
    /// `min(scale / t, cap)`
    InverseCapped {
        scale: f64,
        cap: f64,
    },
    /// `scale / sqrt(t)`; with `scale = D / G` this is the schedule behind the `3DG sqrt(n) / 2` regret bound.
    InverseSqrt {
        scale: f64,
    },
}

impl LearningRate {
    #[inline]
    pub fn at(&self, t: u64) -> f64 {
        let t = t.max(1) as f64;
        match *self {
            LearningRate::Constant { rate } => rate,
            LearningRate::Inverse { scale } => scale / t,
            LearningRate::InverseCapped { scale, cap } => (scale / t).min(cap),
            LearningRate::InverseSqrt { scale } => scale / t.sqrt(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        let ok = match *self {
            LearningRate::Constant { rate } => rate > 0.0,
            LearningRate::Inverse { scale } | LearningRate::InverseSqrt { scale } => scale > 0.0,
            LearningRate::InverseCapped { scale, cap } => scale > 0.0 && cap > 0.0,
        };
        if ok {
            Ok(())
        } else {
            Err(Error::config(format!(
                "learning rate parameters must be positive: {self:?}"
            )))
        }
    }
}

/// Which round counter feeds the learning-rate schedule.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TimeIndex {
    /// Global example counter.
    #[default]
    Global,
    /// Number of times the selected weight row has been used, plus one.
    PerContext,
}

/// Per-context bank of weight rows for one gated mixer: `rows x cols`, row-major.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WeightBank {
    rows: usize,
    cols: usize,
    bound: f64,
    weights: Vec<f64>,
    /// Update count per row, for per-context learning-rate indexing.
    visits: Vec<u64>,
}

impl WeightBank {
    pub fn new(rows: usize, cols: usize, bound: f64, init: f64) -> Result<Self> {
        check_bound(bound)?;
        if rows == 0 || cols == 0 {
            return Err(Error::config(
                "weight bank needs at least one row and one column",
            ));
        }
        Ok(WeightBank {
            rows,
            cols,
            bound,
            weights: vec![init.clamp(-bound, bound); rows * cols],
            visits: vec![0; rows],
        })
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn bound(&self) -> f64 {
        self.bound
    }

    #[inline]
    pub fn row(&self, context: usize) -> &[f64] {
        &self.weights[context * self.cols..(context + 1) * self.cols]
    }

    /// Overwrites a row, projecting it into the hypercube.
    pub fn set_row(&mut self, context: usize, w: &[f64]) -> Result<()> {
        if context >= self.rows {
            return Err(Error::ContextOutOfRange {
                id: context,
                size: self.rows,
            });
        }
        check_dims("weight row", self.cols, w.len())?;
        let b = self.bound;
        for (dst, &src) in self.weights[context * self.cols..(context + 1) * self.cols]
            .iter_mut()
            .zip(w)
        {
            *dst = src.clamp(-b, b);
        }
        Ok(())
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn visits(&self, context: usize) -> u64 {
        self.visits[context]
    }

    /// Gated geometric mixture using row `context`.
    #[inline]
    pub fn mix_logits(&self, context: usize, logits: &[f64]) -> f64 {
        geo_mix_logits(self.row(context), logits)
    }

    /// Projected gradient step on row `context`, given the row's own prediction `q`
    /// on inputs with the given logits, and counts the visit.
    #[inline]
    pub fn ogd_update(&mut self, context: usize, logits: &[f64], q: f64, x: bool, eta: f64) {
        debug_assert_eq!(logits.len(), self.cols);
        let step = eta * (q - f64::from(u8::from(x)));
        let b = self.bound;
        let row = &mut self.weights[context * self.cols..(context + 1) * self.cols];
        for (w, &l) in row.iter_mut().zip(logits) {
            *w = (*w - step * l).clamp(-b, b);
        }
        self.visits[context] += 1;
    }
}

/// Gated geometric mixture of a neuron: the row selected by the neuron's context on `z`
/// mixes the (already clipped) input probabilities `p`.
pub fn gated_geo_mix(neuron: &Neuron, p: &[f64], z: SideInfo<'_>) -> Result<f64> {
    check_probabilities(p)?;
    check_dims("gated_geo_mix input", neuron.bank().cols(), p.len())?;
    let c = neuron.context().try_eval(z)?;
    if c >= neuron.bank().rows() {
        return Err(Error::ContextOutOfRange {
            id: c,
            size: neuron.bank().rows(),
        });
    }
    Ok(neuron.bank().mix_logits(c, &logits(p)))
}
