//! One-vs-all classification with one network per class.

use serde::{Deserialize, Serialize};

use super::config::{MnistClassifyConfig, SpiralConfig};
use super::metrics::{emit, BlockStats, MetricsWriter};
use crate::base_models::feature_base_into;
use crate::context::ContextFunction;
use crate::data::{self, nearest_arm, spiral_dataset, ImageSet, LabeledExample, RunningMean};
use crate::error::{Error, Result};
use crate::math::{log_loss, Clip};
use crate::network::{init_network, ForwardTrace, GatedLinearNetwork, NetworkSpec};
use crate::rng::RandomSource;

/// Feature preprocessing: scaling, optional deskewing, optional subtraction of
/// the running mean of the training features.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeaturePipeline {
    pub dim: usize,
    pub scale: f64,
    /// Image shape `(rows, cols)` when deskewing.
    pub deskew: Option<(usize, usize)>,
    pub mean: Option<RunningMean>,
}

impl FeaturePipeline {
    pub fn identity(dim: usize) -> Self {
        FeaturePipeline {
            dim,
            scale: 1.0,
            deskew: None,
            mean: None,
        }
    }

    /// Greyscale bytes scaled to `[0, 1]`, then optionally deskewed and centred.
    pub fn image(rows: usize, cols: usize, deskew: bool, mean_subtract: bool) -> Self {
        let dim = rows * cols;
        FeaturePipeline {
            dim,
            scale: 1.0 / 255.0,
            deskew: deskew.then_some((rows, cols)),
            mean: mean_subtract.then(|| RunningMean::new(dim)),
        }
    }

    /// Transforms `raw` into `out`. The running mean absorbs the example first
    /// when `learn` is set and is left untouched otherwise.
    pub fn transform(&mut self, raw: &[f64], learn: bool, out: &mut Vec<f64>) -> Result<()> {
        if raw.len() != self.dim {
            return Err(Error::Dimension {
                what: "feature vector",
                expected: self.dim,
                got: raw.len(),
            });
        }
        out.clear();
        out.extend(raw.iter().map(|v| v * self.scale));
        if let Some((rows, cols)) = self.deskew {
            *out = data::deskew(out, rows, cols)?;
        }
        if let Some(mean) = &mut self.mean {
            if learn {
                mean.observe(out);
            }
            mean.subtract(out);
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Default)]
struct Scratch {
    z: Vec<f64>,
    base: Vec<f64>,
    traces: Vec<ForwardTrace>,
}

/// One gated linear network per class, trained against `label == class`.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct OneVsAllClassifier {
    pipeline: FeaturePipeline,
    nets: Vec<GatedLinearNetwork>,
    /// Examples learned so far; the learning-rate round index.
    learned: u64,
    #[serde(skip)]
    scratch: Scratch,
}

/// Result of one classification step.
#[derive(Debug, Clone, PartialEq)]
pub struct OvaOutcome {
    pub predicted: usize,
    pub probs: Vec<f64>,
    /// Per-class log loss (nats) against the one-vs-all targets.
    pub losses: Vec<f64>,
}

/// Index of the largest value, lowest index on ties.
pub fn argmax(values: &[f64]) -> usize {
    let mut best = 0;
    for (i, &v) in values.iter().enumerate() {
        if v > values[best] {
            best = i;
        }
    }
    best
}

impl OneVsAllClassifier {
    /// Builds `classes` networks from `spec`. Class `c` draws its contexts from
    /// `rng.derive(c)` via `context_for(layer, index, rng)`.
    pub fn new<F>(
        classes: usize,
        spec: &NetworkSpec,
        pipeline: FeaturePipeline,
        rng: &RandomSource,
        mut context_for: F,
    ) -> Result<Self>
    where
        F: FnMut(usize, usize, &mut RandomSource) -> Result<ContextFunction>,
    {
        if classes < 2 {
            return Err(Error::config("one-vs-all needs at least two classes"));
        }
        if spec.base_width != pipeline.dim {
            return Err(Error::Dimension {
                what: "network base width",
                expected: pipeline.dim,
                got: spec.base_width,
            });
        }
        let nets = (0..classes)
            .map(|c| init_network(spec.clone(), &mut rng.derive(c as u64), &mut context_for))
            .collect::<Result<Vec<_>>>()?;
        Ok(OneVsAllClassifier {
            pipeline,
            nets,
            learned: 0,
            scratch: Scratch::default(),
        })
    }

    pub fn classes(&self) -> usize {
        self.nets.len()
    }

    pub fn nets(&self) -> &[GatedLinearNetwork] {
        &self.nets
    }

    pub fn pipeline(&self) -> &FeaturePipeline {
        &self.pipeline
    }

    pub fn examples_learned(&self) -> u64 {
        self.learned
    }

    /// Traces of the last step, one per class.
    pub fn traces(&self) -> &[ForwardTrace] {
        &self.scratch.traces
    }

    /// Class predicted by neuron `k` of `layer` alone in the last step.
    pub fn neuron_vote(&self, layer: usize, k: usize) -> usize {
        let outs: Vec<f64> = self
            .scratch
            .traces
            .iter()
            .map(|t| t.neuron_output(layer, k))
            .collect();
        argmax(&outs)
    }

    fn clip(&self) -> Clip {
        self.nets[0].spec().clip
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string(self)?)
    }

    pub fn from_json(json: &str) -> Result<Self> {
        let clf: OneVsAllClassifier = serde_json::from_str(json)?;
        if clf.nets.len() < 2 {
            return Err(Error::config("one-vs-all needs at least two classes"));
        }
        let nets = clf
            .nets
            .into_iter()
            .map(|n| GatedLinearNetwork::from_parts(n.spec().clone(), n.layers().to_vec()))
            .collect::<Result<Vec<_>>>()?;
        Ok(OneVsAllClassifier { nets, ..clf })
    }
}

/// Predicts `example`, and learns from it when `learn` is set.
pub fn ova_step(
    clf: &mut OneVsAllClassifier,
    example: &LabeledExample,
    learn: bool,
) -> Result<OvaOutcome> {
    if example.label >= clf.classes() {
        return Err(Error::config(format!(
            "label {} out of range for {} classes",
            example.label,
            clf.classes()
        )));
    }
    let clip = clf.clip();
    let mut s = std::mem::take(&mut clf.scratch);
    let result = (|| {
        clf.pipeline.transform(&example.features, learn, &mut s.z)?;
        feature_base_into(&s.z, clip, &mut s.base);
        s.traces.resize_with(clf.nets.len(), ForwardTrace::default);
        let mut probs = Vec::with_capacity(clf.nets.len());
        for (net, trace) in clf.nets.iter().zip(&mut s.traces) {
            net.forward_into(&s.base, &s.z, trace)?;
            probs.push(trace.output());
        }
        let losses = probs
            .iter()
            .enumerate()
            .map(|(c, &p)| log_loss(p, c == example.label))
            .collect();
        if learn {
            clf.learned += 1;
            for (c, (net, trace)) in clf.nets.iter_mut().zip(&s.traces).enumerate() {
                net.learn(trace, c == example.label, clf.learned)?;
            }
        }
        Ok(OvaOutcome {
            predicted: argmax(&probs),
            probs,
            losses,
        })
    })();
    clf.scratch = s;
    result
}

/// Summary of a spiral run.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SpiralReport {
    /// Accuracy of predictions made before each update during the single pass.
    pub online_accuracy: f64,
    /// Accuracy of the final, frozen classifier on the training points.
    pub train_accuracy: f64,
    /// Accuracy of the frozen classifier on a fresh sample.
    pub eval_accuracy: f64,
    /// Mean one-vs-all accuracy of the neurons of each layer on the fresh sample.
    pub layer_accuracy: Vec<f64>,
}

pub struct SpiralRun {
    pub classifier: OneVsAllClassifier,
    pub report: SpiralReport,
}

fn spiral_classifier(cfg: &SpiralConfig, rng: &RandomSource) -> Result<OneVsAllClassifier> {
    let spec = cfg.network.spec(2, &cfg.layer_widths)?;
    let (sn, so) = (cfg.sigma_normal, cfg.sigma_offset);
    OneVsAllClassifier::new(
        cfg.spiral.classes,
        &spec,
        FeaturePipeline::identity(2),
        rng,
        |_, _, rng| ContextFunction::sample_halfspaces(rng, 2, 1, sn, so),
    )
}

/// Trains on a single pass over a spiral sample and evaluates the frozen result.
pub fn run_spiral(cfg: &SpiralConfig, mut sink: Option<&mut MetricsWriter>) -> Result<SpiralRun> {
    let root = RandomSource::new(cfg.seed);
    let train = spiral_dataset(cfg.points_per_class, &cfg.spiral, &mut root.derive(1))?;
    let eval = spiral_dataset(cfg.eval_points_per_class, &cfg.spiral, &mut root.derive(2))?;
    let mut clf = spiral_classifier(cfg, &root.derive(3))?;

    let mut block = BlockStats::default();
    let mut online_correct = 0usize;
    for (i, ex) in train.iter().enumerate() {
        let out = ova_step(&mut clf, ex, true)?;
        let correct = out.predicted == ex.label;
        online_correct += usize::from(correct);
        block.add(out.losses[ex.label], Some(correct));
        if (i as u64 + 1) % cfg.record_every.max(1) == 0 || i + 1 == train.len() {
            emit(&mut sink, block.take(i as u64 + 1, "train", true))?;
        }
    }

    let mut train_correct = 0usize;
    for ex in &train {
        train_correct += usize::from(ova_step(&mut clf, ex, false)?.predicted == ex.label);
    }

    let depth = cfg.layer_widths.len();
    let mut layer_hits = vec![0usize; depth];
    let mut eval_correct = 0usize;
    let mut eval_block = BlockStats::default();
    for ex in &eval {
        let out = ova_step(&mut clf, ex, false)?;
        eval_correct += usize::from(out.predicted == ex.label);
        eval_block.add(out.losses[ex.label], Some(out.predicted == ex.label));
        for (i, hits) in layer_hits.iter_mut().enumerate() {
            for k in 0..cfg.layer_widths[i] {
                *hits += usize::from(clf.neuron_vote(i + 1, k) == ex.label);
            }
        }
    }
    emit(&mut sink, eval_block.take(train.len() as u64, "eval", true))?;

    let n_eval = eval.len() as f64;
    let report = SpiralReport {
        online_accuracy: online_correct as f64 / train.len() as f64,
        train_accuracy: train_correct as f64 / train.len() as f64,
        eval_accuracy: eval_correct as f64 / n_eval,
        layer_accuracy: layer_hits
            .iter()
            .zip(&cfg.layer_widths)
            .map(|(&h, &w)| h as f64 / (n_eval * w as f64))
            .collect(),
    };
    Ok(SpiralRun {
        classifier: clf,
        report,
    })
}

/// Frozen predictions on a `points x points` grid over `[-extent, extent]^2`:
/// `(x, y, nearest arm, prediction, vote of the first neuron of each layer)`.
pub fn decision_grid(
    clf: &mut OneVsAllClassifier,
    cfg: &SpiralConfig,
    extent: f64,
) -> Result<Vec<(f64, f64, usize, usize, Vec<usize>)>> {
    let n = cfg.grid_points.max(2);
    let mut out = Vec::with_capacity(n * n);
    for i in 0..n {
        for j in 0..n {
            let x = -extent + 2.0 * extent * j as f64 / (n - 1) as f64;
            let y = -extent + 2.0 * extent * i as f64 / (n - 1) as f64;
            let ex = LabeledExample {
                features: vec![x, y],
                label: 0,
            };
            let predicted = ova_step(clf, &ex, false)?.predicted;
            let layers = (1..=cfg.layer_widths.len())
                .map(|l| clf.neuron_vote(l, 0))
                .collect();
            out.push((x, y, nearest_arm(&cfg.spiral, &[x, y]), predicted, layers));
        }
    }
    Ok(out)
}

/// Summary of an MNIST classification run.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct MnistClassifyReport {
    pub train_examples: usize,
    pub test_examples: usize,
    /// Accuracy of predictions made before each update on the training pass.
    pub train_online_accuracy: f64,
    pub test_accuracy: f64,
    pub test_loss_nats: f64,
}

pub struct MnistClassifyRun {
    pub classifier: OneVsAllClassifier,
    pub report: MnistClassifyReport,
}

fn image_example(set: &ImageSet, i: usize) -> LabeledExample {
    LabeledExample {
        features: set.image(i).iter().map(|&p| f64::from(p)).collect(),
        label: usize::from(set.labels[i]),
    }
}

fn limit(n: usize, cap: usize) -> usize {
    if cap == 0 {
        n
    } else {
        n.min(cap)
    }
}

/// A single online pass over the training images followed by the test images.
pub fn run_mnist_classify(
    cfg: &MnistClassifyConfig,
    train: &ImageSet,
    test: &ImageSet,
    mut sink: Option<&mut MetricsWriter>,
) -> Result<MnistClassifyRun> {
    let dim = train.rows * train.cols;
    if test.rows * test.cols != dim {
        return Err(Error::Dimension {
            what: "test image size",
            expected: dim,
            got: test.rows * test.cols,
        });
    }
    let spec = cfg.network.spec(dim, &cfg.layer_widths)?;
    let pipeline = FeaturePipeline::image(train.rows, train.cols, cfg.deskew, cfg.mean_subtract);
    let (bits, sn, so) = (cfg.context_bits, cfg.sigma_normal, cfg.sigma_offset);
    let root = RandomSource::new(cfg.seed);
    let mut clf = OneVsAllClassifier::new(10, &spec, pipeline, &root.derive(1), |_, _, rng| {
        ContextFunction::sample_halfspaces(rng, dim, bits, sn, so)
    })?;

    let n_train = limit(train.len(), cfg.train_limit);
    let n_test = limit(test.len(), cfg.test_limit);
    let every = cfg.record_every.max(1);

    let mut block = BlockStats::default();
    let mut correct = 0usize;
    for i in 0..n_train {
        let ex = image_example(train, i);
        let out = ova_step(&mut clf, &ex, true)?;
        let hit = out.predicted == ex.label;
        correct += usize::from(hit);
        block.add(out.losses[ex.label], Some(hit));
        if (i as u64 + 1) % every == 0 || i + 1 == n_train {
            emit(&mut sink, block.take(i as u64 + 1, "train", true))?;
        }
    }

    let mut test_stats = BlockStats::default();
    let mut test_correct = 0usize;
    let mut test_loss = 0.0;
    for i in 0..n_test {
        let ex = image_example(test, i);
        let out = ova_step(&mut clf, &ex, cfg.learn_on_test)?;
        let hit = out.predicted == ex.label;
        test_correct += usize::from(hit);
        test_loss += out.losses[ex.label];
        test_stats.add(out.losses[ex.label], Some(hit));
        let seen = (n_train + i) as u64 + 1;
        if (i as u64 + 1) % every == 0 || i + 1 == n_test {
            emit(&mut sink, test_stats.take(seen, "test", true))?;
        }
    }

    let report = MnistClassifyReport {
        train_examples: n_train,
        test_examples: n_test,
        train_online_accuracy: correct as f64 / n_train.max(1) as f64,
        test_accuracy: test_correct as f64 / n_test.max(1) as f64,
        test_loss_nats: test_loss / n_test.max(1) as f64,
    };
    Ok(MnistClassifyRun {
        classifier: clf,
        report,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mixer::LearningRate;
    use crate::tasks::config::NetParams;

    fn tiny(classes: usize) -> OneVsAllClassifier {
        let spec = NetParams::new(LearningRate::Constant { rate: 0.05 }, 50.0)
            .spec(2, &[4, 1])
            .unwrap();
        OneVsAllClassifier::new(
            classes,
            &spec,
            FeaturePipeline::identity(2),
            &RandomSource::new(1),
            |_, _, rng| ContextFunction::sample_halfspaces(rng, 2, 1, 1.0, 0.5),
        )
        .unwrap()
    }

    #[test]
    fn zero_init_ties_pick_lowest_class() {
        let mut clf = tiny(3);
        let out = ova_step(
            &mut clf,
            &LabeledExample {
                features: vec![0.3, -0.2],
                label: 2,
            },
            false,
        )
        .unwrap();
        assert_eq!(out.probs, vec![0.5; 3]);
        assert_eq!(out.predicted, 0);
        assert!((out.losses[2] - 2f64.ln()).abs() < 1e-15);
    }

    #[test]
    fn frozen_steps_do_not_mutate() {
        let mut clf = tiny(3);
        let mut rng = RandomSource::new(2);
        for _ in 0..100 {
            let ex = LabeledExample {
                features: vec![rng.normal(), rng.normal()],
                label: rng.below(3),
            };
            ova_step(&mut clf, &ex, true).unwrap();
        }
        let before = clf.to_json().unwrap();
        for _ in 0..100 {
            let ex = LabeledExample {
                features: vec![rng.normal(), rng.normal()],
                label: rng.below(3),
            };
            ova_step(&mut clf, &ex, false).unwrap();
        }
        assert_eq!(clf.to_json().unwrap(), before);
        assert_eq!(clf.examples_learned(), 100);
    }

    #[test]
    fn rejects_bad_examples() {
        let mut clf = tiny(2);
        assert!(ova_step(
            &mut clf,
            &LabeledExample {
                features: vec![0.0; 3],
                label: 0
            },
            true
        )
        .is_err());
        assert!(ova_step(
            &mut clf,
            &LabeledExample {
                features: vec![0.0; 2],
                label: 5
            },
            true
        )
        .is_err());
    }

    #[test]
    fn argmax_ties() {
        assert_eq!(argmax(&[0.2, 0.7, 0.7]), 1);
        assert_eq!(argmax(&[0.5, 0.5]), 0);
    }

    #[test]
    fn pipeline_mean_only_moves_when_learning() {
        let mut p = FeaturePipeline::image(2, 2, false, true);
        let mut out = Vec::new();
        p.transform(&[255.0, 0.0, 0.0, 0.0], true, &mut out)
            .unwrap();
        assert_eq!(out, vec![0.0; 4]);
        p.transform(&[0.0; 4], false, &mut out).unwrap();
        assert_eq!(out, vec![-1.0, 0.0, 0.0, 0.0]);
        assert_eq!(p.mean.as_ref().unwrap().count(), 1);
    }

    #[test]
    fn classifier_checkpoint_round_trips() {
        let mut clf = tiny(3);
        let mut rng = RandomSource::new(4);
        for _ in 0..50 {
            let ex = LabeledExample {
                features: vec![rng.normal(), rng.normal()],
                label: rng.below(3),
            };
            ova_step(&mut clf, &ex, true).unwrap();
        }
        let back = OneVsAllClassifier::from_json(&clf.to_json().unwrap()).unwrap();
        assert_eq!(back.nets(), clf.nets());
        assert_eq!(back.examples_learned(), 50);
    }

    #[test]
    fn small_spiral_run_learns() {
        let cfg = SpiralConfig {
            points_per_class: 300,
            eval_points_per_class: 100,
            layer_widths: vec![10, 5, 1],
            ..SpiralConfig::default()
        };
        let run = run_spiral(&cfg, None).unwrap();
        assert!(run.report.train_accuracy > 0.5, "{:?}", run.report);
        assert_eq!(run.report.layer_accuracy.len(), 3);
    }
}
