//! Slow, independent reference computations used to cross-check the fast
//! implementations: product-form mixing, finite differences, an explicit
//! matrix-product forward pass, exhaustive switching and ZR marginals, and
//! numerical quadrature.

use crate::context::SideInfo;
use crate::error::Result;
use crate::network::GatedLinearNetwork;

/// Geometric mixture in product form:
/// `prod p_i^{w_i} / (prod p_i^{w_i} + prod (1 - p_i)^{w_i})`.
pub fn geo_mix_product(w: &[f64], p: &[f64]) -> f64 {
    let on: f64 = w.iter().zip(p).map(|(&wi, &pi)| pi.powf(wi)).product();
    let off: f64 = w
        .iter()
        .zip(p)
        .map(|(&wi, &pi)| (1.0 - pi).powf(wi))
        .product();
    on / (on + off)
}

/// Log loss of the product-form mixture, `ln(on + off) - ln(selected)`, with
/// both products kept in the log domain so that confident mixtures do not
/// cancel.
pub fn geo_loss_product(w: &[f64], p: &[f64], x: bool) -> f64 {
    let ln_on: f64 = w.iter().zip(p).map(|(&wi, &pi)| wi * pi.ln()).sum();
    let ln_off: f64 = w.iter().zip(p).map(|(&wi, &pi)| wi * (1.0 - pi).ln()).sum();
    let hi = ln_on.max(ln_off);
    let ln_total = hi + ((ln_on - hi).exp() + (ln_off - hi).exp()).ln();
    ln_total - if x { ln_on } else { ln_off }
}

/// Central finite differences of the product-form loss with step `h`.
pub fn finite_difference_gradient(w: &[f64], p: &[f64], x: bool, h: f64) -> Vec<f64> {
    (0..w.len())
        .map(|j| {
            let mut plus = w.to_vec();
            let mut minus = w.to_vec();
            plus[j] += h;
            minus[j] -= h;
            (geo_loss_product(&plus, p, x) - geo_loss_product(&minus, p, x)) / (2.0 * h)
        })
        .collect()
}

fn matvec(m: &[Vec<f64>], v: &[f64]) -> Vec<f64> {
    m.iter()
        .map(|row| row.iter().zip(v).map(|(a, b)| a * b).sum())
        .collect()
}

fn matmul(a: &[Vec<f64>], b: &[Vec<f64>]) -> Vec<Vec<f64>> {
    let inner = b.len();
    let cols = b[0].len();
    a.iter()
        .map(|row| {
            (0..cols)
                .map(|j| (0..inner).map(|k| row[k] * b[k][j]).sum())
                .collect()
        })
        .collect()
}

/// Unclipped output of the network's first top neuron, computed as
/// `sigmoid(e_1 . M_L ... M_1 . logit(p_0))`, where `M_i` is layer `i`'s
/// context-selected weight matrix augmented with a row that carries the bias
/// logit through unchanged. Valid whenever no intermediate clipping is active.
pub fn matrix_product_forward(
    net: &GatedLinearNetwork,
    base: &[f64],
    z: SideInfo<'_>,
) -> Result<f64> {
    let spec = net.spec();
    let bias_logit = (spec.bias / (1.0 - spec.bias)).ln();
    let mut input = vec![bias_logit];
    input.extend(base.iter().map(|&p| (p / (1.0 - p)).ln()));

    let mut product: Option<Vec<Vec<f64>>> = None;
    for layer in net.layers() {
        let cols = layer[0].bank().cols();
        let mut m = Vec::with_capacity(layer.len() + 1);
        let mut carry = vec![0.0; cols];
        carry[0] = 1.0;
        m.push(carry);
        for n in layer {
            let c = n.context().try_eval(z)?;
            m.push(n.bank().row(c).to_vec());
        }
        product = Some(match product {
            None => m,
            Some(acc) => matmul(&m, &acc),
        });
    }
    let top = matvec(&product.expect("network has at least one layer"), &input);
    Ok(1.0 / (1.0 + (-top[1]).exp()))
}

/// Run-length prior of a model sequence, evaluated as an explicit product.
pub fn switching_prior(nu: &[usize], models: usize) -> f64 {
    if nu.is_empty() {
        return 1.0;
    }
    let mut w = 1.0 / models as f64;
    for t in 2..=nu.len() {
        let tf = t as f64;
        w *= if nu[t - 1] == nu[t - 2] {
            (tf - 1.0) / tf
        } else {
            1.0 / (tf * (models as f64 - 1.0))
        };
    }
    w
}

/// Calls `f` with every sequence in `{0..base}^len`, in lexicographic order.
pub fn for_each_sequence(base: usize, len: usize, mut f: impl FnMut(&[usize])) {
    let mut seq = vec![0usize; len];
    loop {
        f(&seq);
        let mut i = len;
        loop {
            if i == 0 {
                return;
            }
            i -= 1;
            seq[i] += 1;
            if seq[i] < base {
                break;
            }
            seq[i] = 0;
        }
    }
}

/// Switching mixture marginal `sum_nu w(nu) prod_t rho_{nu_t}(x_t)` by exhaustive
/// enumeration. `preds[t][i]` is model `i`'s probability that `x_t = 1`.
pub fn switching_marginal(preds: &[Vec<f64>], xs: &[bool]) -> f64 {
    let models = preds.first().map_or(1, Vec::len);
    let mut total = 0.0;
    for_each_sequence(models, xs.len(), |nu| {
        let likelihood: f64 = nu
            .iter()
            .zip(xs)
            .enumerate()
            .map(|(t, (&i, &x))| if x { preds[t][i] } else { 1.0 - preds[t][i] })
            .product();
        total += switching_prior(nu, models) * likelihood;
    });
    total
}

/// Krichevsky–Trofimov marginal of a sequence with `zeros` zeros and `ones` ones:
/// `prod_{i<zeros}(i + 1/2) prod_{j<ones}(j + 1/2) / n!`.
pub fn kt_marginal(zeros: u32, ones: u32) -> f64 {
    let num: f64 = (0..zeros).map(|i| f64::from(i) + 0.5).product::<f64>()
        * (0..ones).map(|j| f64::from(j) + 0.5).product::<f64>();
    let den: f64 = (1..=zeros + ones).map(f64::from).product();
    num / den
}

/// Zero-redundancy marginal `KT/2 + [all zeros]/4 + [all ones]/4`.
pub fn zr_marginal(xs: &[bool]) -> f64 {
    let ones = xs.iter().filter(|&&x| x).count() as u32;
    let zeros = xs.len() as u32 - ones;
    let mut p = 0.5 * kt_marginal(zeros, ones);
    if ones == 0 {
        p += 0.25;
    }
    if zeros == 0 {
        p += 0.25;
    }
    p
}

/// Composite Simpson quadrature of `f` over `[a, b]` with `intervals` (even) panels.
pub fn simpson(f: impl Fn(f64) -> f64, a: f64, b: f64, intervals: usize) -> f64 {
    let n = intervals + intervals % 2;
    let h = (b - a) / n as f64;
    let mut s = f(a) + f(b);
    for i in 1..n {
        let x = a + i as f64 * h;
        s += if i % 2 == 1 { 4.0 } else { 2.0 } * f(x);
    }
    s * h / 3.0
}

/// Best cumulative loss of a fixed weight vector over a uniform grid on
/// `[-bound, bound]^m`, with `steps + 1` points per axis.
pub fn best_fixed_weight_loss(stream: &[(Vec<f64>, bool)], bound: f64, steps: usize) -> f64 {
    let m = stream.first().map_or(0, |(p, _)| p.len());
    let axis: Vec<f64> = (0..=steps)
        .map(|i| -bound + 2.0 * bound * i as f64 / steps as f64)
        .collect();
    let mut best = f64::INFINITY;
    for_each_sequence(axis.len(), m, |idx| {
        let w: Vec<f64> = idx.iter().map(|&i| axis[i]).collect();
        let loss: f64 = stream
            .iter()
            .map(|(p, x)| geo_loss_product(&w, p, *x))
            .sum();
        best = best.min(loss);
    });
    best
}
