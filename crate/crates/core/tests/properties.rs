//! Randomized and behavioural properties of the library as a whole.

use proptest::prelude::*;

use gln::context::{ContextFunction, HalfSpaceContext};
use gln::data::{image_set, IdxTensor};
use gln::math::{log_loss, Clip};
use gln::mixer::{LearningRate, TimeIndex};
use gln::network::{init_network, NetworkSpec};
use gln::oracle::best_fixed_weight_loss;
use gln::switching::SwitchingMixture;
use gln::tasks::{
    run_density, run_gaussian, run_mnist_classify, run_spiral, GaussianConfig, MnistClassifyConfig,
    MnistDensityConfig, SpiralConfig,
};
use gln::RandomSource;

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn idx_round_trips(dims in prop::collection::vec(1u32..6, 1..4), seed in any::<u64>()) {
        let len: u32 = dims.iter().product();
        let mut rng = RandomSource::new(seed);
        let payload: Vec<u8> = (0..len).map(|_| rng.below(256) as u8).collect();
        let t = IdxTensor::new(dims, payload).unwrap();
        prop_assert_eq!(IdxTensor::parse(&t.to_bytes()).unwrap(), t);
    }

    #[test]
    fn weights_never_leave_the_hypercube(seed in any::<u64>(), bound in 1.0f64..5.0, rate in 0.01f64..50.0) {
        let mut rng = RandomSource::new(seed);
        let mut spec = NetworkSpec::new(3, vec![3, 2, 1], LearningRate::Constant { rate });
        spec.weight_bound = bound;
        let mut net = init_network(spec, &mut rng, |_, _, rng| {
            ContextFunction::sample_halfspaces(rng, 2, 2, 1.0, 0.5)
        })
        .unwrap();
        for t in 1..=300 {
            let base: Vec<f64> = (0..3).map(|_| rng.uniform(0.01, 0.99)).collect();
            let z = [rng.normal(), rng.normal()];
            let trace = net.forward(&base, &z).unwrap();
            net.learn(&trace, rng.bernoulli(0.5), t).unwrap();
        }
        for layer in net.layers() {
            for n in layer {
                prop_assert!(n.bank().weights().iter().all(|w| w.abs() <= bound));
            }
        }
    }

    #[test]
    fn switching_stays_normalized_and_tracks_best_expert(
        seed in any::<u64>(),
        models in 2usize..6,
        rounds in 1usize..300,
    ) {
        let mut rng = RandomSource::new(seed);
        let mut mix = SwitchingMixture::new(models).unwrap();
        let mut total = 0.0;
        let mut experts = vec![0.0; models];
        for _ in 0..rounds {
            let x = rng.bernoulli(0.6);
            let preds: Vec<f64> = (0..models).map(|_| rng.uniform(0.02, 0.98)).collect();
            for (e, &p) in experts.iter_mut().zip(&preds) {
                *e += log_loss(p, x);
            }
            total -= mix.update(&preds, x).unwrap().ln();
            let sum: f64 = mix.weights().iter().sum();
            prop_assert!((sum - 1.0).abs() <= 1e-12);
            prop_assert!(mix.weights().iter().all(|&u| u >= 0.0));
        }
        let best = experts.iter().cloned().fold(f64::INFINITY, f64::min);
        let slack = (models as f64).ln() + (rounds as f64).ln() + 1.0;
        prop_assert!(total <= best + slack, "{total} > {best} + {slack}");
    }
}

/// A gated neuron with two inputs and two contexts stays within
/// `3 b K sqrt(|C| n) ln(1/eps)` of the best fixed weight row per context.
#[test]
fn gated_neuron_regret_per_context() {
    let (b, eps, n): (f64, f64, usize) = (2.0, 0.01, 2000);
    let k = 3.0; // bias plus two inputs
    let contexts = 2.0;
    let d = 2.0 * b * f64::sqrt(k);
    let g = f64::sqrt(k) * (1.0 / eps).ln();
    let mut spec = NetworkSpec::new(2, vec![1], LearningRate::InverseSqrt { scale: d / g });
    spec.weight_bound = b;
    spec.clip = Clip::new(eps).unwrap();
    spec.time_index = TimeIndex::PerContext;
    let beta = spec.bias;
    let mut net = init_network(spec, &mut RandomSource::new(1), |_, _, _| {
        Ok(ContextFunction::HalfSpace(HalfSpaceContext::new(
            vec![1.0],
            0.0,
        )))
    })
    .unwrap();

    let mut rng = RandomSource::new(2);
    let mut loss = 0.0;
    let mut per_context: [Vec<(Vec<f64>, bool)>; 2] = [Vec::new(), Vec::new()];
    for t in 1..=n {
        let z = rng.normal();
        let x = rng.bernoulli(if z > 0.0 { 0.8 } else { 0.3 });
        let informed = if x {
            rng.uniform(0.5, 0.9)
        } else {
            rng.uniform(0.1, 0.5)
        };
        let base = [informed, rng.uniform(0.05, 0.95)];
        let trace = net.forward(&base, &[z]).unwrap();
        loss += log_loss(trace.output(), x);
        per_context[trace.contexts()[0][0]].push((vec![beta, base[0], base[1]], x));
        net.learn(&trace, x, t as u64).unwrap();
    }
    let best: f64 = per_context
        .iter()
        .filter(|s| !s.is_empty())
        .map(|s| best_fixed_weight_loss(s, b, 40))
        .sum();
    let bound = 3.0 * b * k * (contexts * n as f64).sqrt() * (1.0 / eps).ln();
    assert!(
        loss <= best + bound,
        "loss {loss}, best {best}, bound {bound}"
    );
    assert!(loss.is_finite() && best > 0.0);
}

/// Deeper layers of the six-layer Gaussian network are no worse than the
/// layers beneath them (time-averaged loss of each layer's best neuron).
#[test]
fn deeper_layers_improve_on_the_gaussian_task() {
    let cfg = GaussianConfig {
        rounds: 100_000,
        snapshots: vec![],
        ..GaussianConfig::switching()
    };
    let run = run_gaussian(&cfg, None).unwrap();
    let s = run.report.switching.expect("switching enabled");
    let mut offset = 0;
    let mut best = Vec::new();
    for &w in &cfg.layer_widths {
        let layer = &s.neuron_loss_nats[offset..offset + w];
        best.push(layer.iter().cloned().fold(f64::INFINITY, f64::min) / cfg.rounds as f64);
        offset += w;
    }
    for i in 1..best.len() {
        assert!(best[i] <= best[i - 1] + 0.01, "layer best losses {best:?}");
    }
}

#[test]
fn one_pass_over_the_data() {
    let cfg = SpiralConfig {
        points_per_class: 50,
        eval_points_per_class: 10,
        ..SpiralConfig::default()
    };
    let run = run_spiral(&cfg, None).unwrap();
    assert_eq!(run.classifier.examples_learned(), 150);

    let mut rng = RandomSource::new(4);
    let n = 12u32;
    let images: Vec<u8> = (0..n * 784).map(|_| rng.below(256) as u8).collect();
    let labels: Vec<u8> = (0..n).map(|i| (i % 10) as u8).collect();
    let set = image_set(
        IdxTensor::new(vec![n, 28, 28], images).unwrap(),
        IdxTensor::new(vec![n], labels).unwrap(),
    )
    .unwrap();
    let cfg = MnistClassifyConfig {
        layer_widths: vec![4, 1],
        test_limit: 5,
        ..MnistClassifyConfig::small()
    };
    let run = run_mnist_classify(&cfg, &set, &set, None).unwrap();
    assert_eq!(run.classifier.examples_learned(), 12);
    assert_eq!(run.report.train_examples, 12);
    assert_eq!(run.report.test_examples, 5);

    let binary: Vec<Vec<u8>> = (0..3)
        .map(|_| (0..784).map(|_| rng.below(2) as u8).collect())
        .collect();
    let cfg = MnistDensityConfig {
        layer_widths: vec![2, 1],
        base_models: 4,
        ..MnistDensityConfig::small()
    };
    let run = run_density(
        &cfg,
        gln::context::ImageGeometry::MNIST,
        &binary,
        &binary[..1],
        None,
    )
    .unwrap();
    assert_eq!(run.model.images_learned(), 4);
}
