//! Exact-arithmetic checks of the building blocks against independent
//! brute-force computations.

use serde::{Deserialize, Serialize};

use crate::base_models::ZRCounter;
use crate::context::ContextFunction;
use crate::error::Result;
use crate::math::{log_loss, Clip};
use crate::mixer::{geo_gradient, LearningRate};
use crate::network::{init_network, NetworkSpec};
use crate::oracle;
use crate::rng::RandomSource;
use crate::switching::{switch_count, switch_prior_mass, SwitchingMixture};

/// Outcome of one check: the measured quantity against its threshold.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CheckOutcome {
    pub name: String,
    pub measured: f64,
    pub threshold: f64,
    pub passed: bool,
}

impl CheckOutcome {
    fn at_most(name: &str, measured: f64, threshold: f64) -> Self {
        CheckOutcome {
            name: name.to_owned(),
            measured,
            threshold,
            passed: measured <= threshold,
        }
    }
}

/// Largest relative error between the analytic mixing gradient and central
/// finite differences with step `h`, over `samples` random cases with 1 to 8
/// inputs. Errors are relative to the gradient's max-norm, floored at `1e-4`.
pub fn gradient_error(samples: usize, h: f64, seed: u64) -> Result<f64> {
    let mut rng = RandomSource::new(seed);
    let mut worst = 0.0f64;
    for _ in 0..samples {
        let m = 1 + rng.below(8);
        let w: Vec<f64> = (0..m).map(|_| rng.uniform(-2.0, 2.0)).collect();
        let p: Vec<f64> = (0..m).map(|_| rng.uniform(0.01, 0.99)).collect();
        let x = rng.bernoulli(0.5);
        let g = geo_gradient(&w, &p, x)?;
        let fd = oracle::finite_difference_gradient(&w, &p, x, h);
        let scale = g.iter().fold(1e-4f64, |a, v| a.max(v.abs()));
        let err = g
            .iter()
            .zip(&fd)
            .fold(0.0f64, |a, (u, v)| a.max((u - v).abs()));
        worst = worst.max(err / scale);
    }
    Ok(worst)
}

/// Largest absolute difference between the layerwise forward pass and the
/// explicit product of context-selected weight matrices, over `nets` random
/// small networks with weights small enough that no clipping is active.
pub fn matrix_identity_error(nets: usize, seed: u64) -> Result<f64> {
    let mut rng = RandomSource::new(seed);
    let mut worst = 0.0f64;
    for _ in 0..nets {
        let dim = 1 + rng.below(4);
        let depth = 1 + rng.below(3);
        let mut widths: Vec<usize> = (0..depth - 1).map(|_| 1 + rng.below(4)).collect();
        widths.push(1);
        let base_width = 1 + rng.below(4);
        let spec = NetworkSpec::new(base_width, widths, LearningRate::Constant { rate: 0.1 });
        let mut net = init_network(spec, &mut rng, |_, _, rng| {
            ContextFunction::sample_halfspaces(rng, dim, 2, 1.0, 0.5)
        })?;
        for l in 0..net.layers().len() {
            for k in 0..net.layers()[l].len() {
                let bank = net.neuron_mut(l + 1, k).bank_mut();
                for c in 0..bank.rows() {
                    let row: Vec<f64> = (0..bank.cols()).map(|_| rng.uniform(-0.4, 0.4)).collect();
                    bank.set_row(c, &row)?;
                }
            }
        }
        for _ in 0..5 {
            let z: Vec<f64> = (0..dim).map(|_| rng.normal()).collect();
            let base: Vec<f64> = (0..base_width).map(|_| rng.uniform(0.1, 0.9)).collect();
            let trace = net.forward(&base, &z)?;
            let clip = net.spec().clip;
            let unclipped = trace
                .raw_outputs()
                .iter()
                .flatten()
                .all(|&q| clip.apply(q) == q);
            if !unclipped {
                continue;
            }
            let direct = trace.raw_outputs().last().expect("layers")[0];
            let product = oracle::matrix_product_forward(&net, &base, &z)?;
            worst = worst.max((direct - product).abs());
        }
    }
    Ok(worst)
}

/// Switching check over every binary sequence of length `1..=max_len` and
/// `|M| in models`: the largest difference between the incremental marginal
/// and brute-force enumeration, and the largest value of
/// `-ln w(nu) - (s + 1)(ln |M| + ln n)` over all model sequences `nu`
/// (non-positive, up to rounding, when the prior bound holds).
pub fn switching_errors(max_len: usize, models: &[usize], seed: u64) -> Result<(f64, f64)> {
    let mut rng = RandomSource::new(seed);
    let mut worst_marginal = 0.0f64;
    let mut worst_bound = f64::NEG_INFINITY;
    for &m in models {
        let preds: Vec<Vec<f64>> = (0..max_len)
            .map(|_| (0..m).map(|_| rng.uniform(0.05, 0.95)).collect())
            .collect();
        for n in 1..=max_len {
            let mut failure = None;
            oracle::for_each_sequence(2, n, |bits| {
                if failure.is_some() {
                    return;
                }
                let xs: Vec<bool> = bits.iter().map(|&b| b == 1).collect();
                let mut mix = SwitchingMixture::new(m).expect("m >= 1");
                let mut product = 1.0;
                for (p, &x) in preds.iter().zip(&xs) {
                    match mix.update(p, x) {
                        Ok(tau) => product *= tau,
                        Err(e) => {
                            failure = Some(e);
                            return;
                        }
                    }
                }
                let brute = oracle::switching_marginal(&preds[..n], &xs);
                worst_marginal = worst_marginal.max((product - brute).abs());
            });
            if let Some(e) = failure {
                return Err(e);
            }
            let cap = (m as f64).ln() + (n as f64).ln();
            oracle::for_each_sequence(m, n, |nu| {
                let excess = -switch_prior_mass(nu, m).ln() - (switch_count(nu) + 1) as f64 * cap;
                worst_bound = worst_bound.max(excess);
            });
        }
    }
    Ok((worst_marginal, worst_bound))
}

/// ZR check: the largest difference between sequential conditionals and the
/// brute-force marginal over all sequences of length `<= max_len`, and the
/// largest code length of an all-zeros run of length up to `run_len`.
pub fn zr_errors(max_len: usize, run_len: usize) -> (f64, f64) {
    let mut worst = 0.0f64;
    for n in 0..=max_len {
        oracle::for_each_sequence(2, n, |bits| {
            let mut c = ZRCounter::new();
            let mut p = 1.0;
            for &b in bits {
                p *= c.prob(b == 1);
                c.observe(b == 1);
            }
            let xs: Vec<bool> = bits.iter().map(|&b| b == 1).collect();
            worst = worst.max((p - oracle::zr_marginal(&xs)).abs());
        });
    }
    let mut c = ZRCounter::new();
    let (mut loss, mut max_loss) = (0.0, 0.0f64);
    for _ in 0..run_len {
        loss -= c.prob(false).ln();
        c.observe(false);
        max_loss = max_loss.max(loss);
    }
    (worst, max_loss)
}

/// Single-neuron regret experiment.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RegretReport {
    pub rounds: usize,
    pub loss: f64,
    /// Best fixed-weight loss found by grid search.
    pub best_fixed: f64,
    /// `3 D G sqrt(n) / 2` with `D = 2 b sqrt(m)` and `G = sqrt(m) ln(1/eps)`.
    pub bound: f64,
}

impl RegretReport {
    pub fn regret(&self) -> f64 {
        self.loss - self.best_fixed
    }
}

/// Runs one ungated two-input neuron with projected gradient descent at rate
/// `D / (G sqrt(t))` on an iid stream and compares its loss with the best fixed
/// weight vector in hindsight.
pub fn single_neuron_regret(
    rounds: usize,
    bound: f64,
    epsilon: f64,
    seed: u64,
) -> Result<RegretReport> {
    let m = 2usize;
    let clip = Clip::new(epsilon)?;
    let d = 2.0 * bound * (m as f64).sqrt();
    let g = (m as f64).sqrt() * (1.0 / epsilon).ln();
    let lr = LearningRate::InverseSqrt { scale: d / g };

    let mut rng = RandomSource::new(seed);
    // Two experts of different quality on a fixed-bias source.
    let stream: Vec<(Vec<f64>, bool)> = (0..rounds)
        .map(|_| {
            let x = rng.bernoulli(0.7);
            let good = if x {
                rng.uniform(0.55, 0.95)
            } else {
                rng.uniform(0.05, 0.45)
            };
            let noisy = rng.uniform(0.05, 0.95);
            (vec![clip.apply(good), clip.apply(noisy)], x)
        })
        .collect();

    let mut w = crate::mixer::WeightVector::zeros(m, bound)?;
    let mut loss = 0.0;
    for (t, (p, x)) in stream.iter().enumerate() {
        let q = w.mix(p)?;
        loss += log_loss(q, *x);
        let grad = geo_gradient(w.as_slice(), p, *x)?;
        w.ogd_step(&grad, lr.at(t as u64 + 1))?;
    }
    let best_fixed = oracle::best_fixed_weight_loss(&stream, bound, 200);
    Ok(RegretReport {
        rounds,
        loss,
        best_fixed,
        bound: 1.5 * d * g * (rounds as f64).sqrt(),
    })
}

/// Slack for checks of bounds that hold with equality in exact arithmetic.
pub const BOUND_ROUNDING: f64 = 1e-12;

/// Runs every check at the default sizes and tolerances.
pub fn oracle_suite(seed: u64) -> Result<Vec<CheckOutcome>> {
    let (switch_marginal, switch_bound) = switching_errors(8, &[2, 3], seed)?;
    let (zr_marginal, zr_run) = zr_errors(10, 10_000);
    let regret = single_neuron_regret(2_000, 5.0, 0.01, seed)?;
    Ok(vec![
        CheckOutcome::at_most(
            "gradient vs finite differences (relative)",
            gradient_error(10_000, 1e-6, seed)?,
            1e-5,
        ),
        CheckOutcome::at_most(
            "layerwise vs matrix product",
            matrix_identity_error(100, seed)?,
            1e-10,
        ),
        CheckOutcome::at_most("switching marginal vs enumeration", switch_marginal, 1e-9),
        // The bound is tight (e.g. n = 1), so allow rounding.
        CheckOutcome::at_most("switching prior bound excess", switch_bound, BOUND_ROUNDING),
        CheckOutcome::at_most("ZR marginal vs enumeration", zr_marginal, 1e-12),
        CheckOutcome::at_most("ZR all-zeros code length", zr_run, 4f64.ln()),
        CheckOutcome::at_most("single-neuron regret", regret.regret(), regret.bound),
    ])
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn small_suite_passes() {
        assert!(gradient_error(500, 1e-6, 1).unwrap() <= 1e-5);
        assert!(matrix_identity_error(10, 1).unwrap() <= 1e-10);
        let (m, b) = switching_errors(5, &[2, 3], 1).unwrap();
        assert!(m <= 1e-12 && b <= BOUND_ROUNDING, "{m} {b}");
        let (z, r) = zr_errors(6, 100);
        assert!(z <= 1e-12 && r <= 4f64.ln());
    }

    #[test]
    fn regret_within_bound() {
        let r = single_neuron_regret(500, 5.0, 0.01, 3).unwrap();
        assert!(r.regret() <= r.bound, "{r:?}");
        assert!(r.loss.is_finite() && r.best_fixed > 0.0);
    }
}
