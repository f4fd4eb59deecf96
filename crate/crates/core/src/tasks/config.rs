//! Experiment configurations and their presets.

use std::path::PathBuf;

use serde::{Deserialize, Serialize};

use crate::data::SpiralParams;
use crate::error::Result;
use crate::math::{Clip, DEFAULT_BIAS};
use crate::mixer::{LearningRate, TimeIndex};
use crate::network::{InitScheme, NetworkSpec};

/// Network hyperparameters shared by every experiment.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NetParams {
    pub bias: f64,
    pub epsilon: f64,
    pub weight_bound: f64,
    pub init: InitScheme,
    pub learning_rate: LearningRate,
    #[serde(default)]
    pub time_index: TimeIndex,
}

impl NetParams {
    pub fn new(learning_rate: LearningRate, weight_bound: f64) -> Self {
        NetParams {
            bias: DEFAULT_BIAS,
            epsilon: crate::math::DEFAULT_EPSILON,
            weight_bound,
            init: InitScheme::Zero,
            learning_rate,
            time_index: TimeIndex::Global,
        }
    }

    pub fn clip(&self) -> Result<Clip> {
        Clip::new(self.epsilon)
    }

    pub fn spec(&self, base_width: usize, layer_widths: &[usize]) -> Result<NetworkSpec> {
        let spec = NetworkSpec {
            base_width,
            layer_widths: layer_widths.to_vec(),
            bias: self.bias,
            clip: self.clip()?,
            weight_bound: self.weight_bound,
            init: self.init,
            learning_rate: self.learning_rate,
            time_index: self.time_index,
        };
        spec.validate()?;
        Ok(spec)
    }
}

/// Placement of the 1-D half-space offsets in the Gaussian task.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum OffsetScheme {
    /// Independent `U[-range, range)` offsets.
    Random { range: f64 },
    /// First-layer offsets evenly spaced strictly inside `(-range, range)`.
    Even { range: f64 },
}

/// Network fitting `exp(-z^2/2)` from a constant base prediction and 1-D
/// half-space contexts.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GaussianConfig {
    pub seed: u64,
    pub rounds: u64,
    pub layer_widths: Vec<usize>,
    /// Constant base prediction.
    pub alpha: f64,
    pub offsets: OffsetScheme,
    /// Whether the top layer is gated too (otherwise it uses a single context).
    pub top_context: bool,
    pub grid_points: usize,
    /// Track a switching mixture over all neurons.
    pub switching: bool,
    /// Rounds after which grid fits are recorded.
    pub snapshots: Vec<u64>,
    pub record_every: u64,
    pub network: NetParams,
}

impl GaussianConfig {
    /// Six layers of widths 3/2/2/2/2/1 with random offsets.
    pub fn six_layer() -> Self {
        GaussianConfig {
            seed: 7,
            rounds: 200_000,
            layer_widths: vec![3, 2, 2, 2, 2, 1],
            alpha: 0.3,
            offsets: OffsetScheme::Random { range: 2.5 },
            top_context: true,
            grid_points: 601,
            switching: false,
            snapshots: vec![],
            record_every: 1000,
            network: NetParams::new(
                LearningRate::InverseCapped {
                    scale: 100.0,
                    cap: 0.1,
                },
                200.0,
            ),
        }
    }

    /// Two layers: 100 evenly spaced half-spaces under one ungated output neuron.
    pub fn two_layer_wide() -> Self {
        GaussianConfig {
            layer_widths: vec![100, 1],
            offsets: OffsetScheme::Even { range: 3.0 },
            top_context: false,
            ..GaussianConfig::six_layer()
        }
    }

    /// Six-layer network with a switching mixture and fit snapshots.
    pub fn switching() -> Self {
        GaussianConfig {
            switching: true,
            snapshots: vec![100, 1_000, 10_000, 100_000],
            ..GaussianConfig::six_layer()
        }
    }
}

/// The exclusive-or negative control.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct XorConfig {
    pub seed: u64,
    pub rounds: u64,
    pub layer_widths: Vec<usize>,
    pub alpha: f64,
    /// Grid points per axis for the output report.
    pub grid_points: usize,
    pub record_every: u64,
    pub network: NetParams,
}

impl Default for XorConfig {
    fn default() -> Self {
        XorConfig {
            seed: 11,
            rounds: 200_000,
            layer_widths: vec![2, 2, 2, 2, 1],
            alpha: 0.3,
            grid_points: 41,
            record_every: 1000,
            network: NetParams::new(
                LearningRate::InverseCapped {
                    scale: 100.0,
                    cap: 0.1,
                },
                200.0,
            ),
        }
    }
}

/// Three-class spiral with a one-vs-all ensemble of half-space gated networks.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SpiralConfig {
    pub seed: u64,
    pub points_per_class: usize,
    pub spiral: SpiralParams,
    pub layer_widths: Vec<usize>,
    pub sigma_normal: f64,
    pub sigma_offset: f64,
    /// Fresh points per class for per-layer evaluation.
    pub eval_points_per_class: usize,
    /// Grid points per axis for decision-boundary output.
    pub grid_points: usize,
    pub record_every: u64,
    pub network: NetParams,
}

impl Default for SpiralConfig {
    fn default() -> Self {
        SpiralConfig {
            seed: 3,
            points_per_class: 4000,
            spiral: SpiralParams::default(),
            layer_widths: vec![50, 25, 1],
            sigma_normal: 6.0,
            sigma_offset: 3.0,
            eval_points_per_class: 1000,
            grid_points: 101,
            record_every: 100,
            network: NetParams::new(LearningRate::Constant { rate: 0.01 }, 200.0),
        }
    }
}

/// MNIST one-vs-all classification.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MnistClassifyConfig {
    pub seed: u64,
    pub data_dir: PathBuf,
    /// Use at most this many training / test images (0 = all).
    pub train_limit: usize,
    pub test_limit: usize,
    pub layer_widths: Vec<usize>,
    /// Half-spaces composed per neuron (`2^bits` weight rows).
    pub context_bits: usize,
    pub sigma_normal: f64,
    pub sigma_offset: f64,
    pub deskew: bool,
    pub mean_subtract: bool,
    /// Keep learning on the test segment (otherwise weights are frozen there).
    pub learn_on_test: bool,
    pub record_every: u64,
    pub network: NetParams,
}

impl MnistClassifyConfig {
    /// Desk-scale preset: 128-128-1 with 4 composed half-spaces per neuron.
    pub fn small() -> Self {
        MnistClassifyConfig {
            seed: 1,
            data_dir: PathBuf::from("data/mnist"),
            train_limit: 0,
            test_limit: 0,
            layer_widths: vec![128, 128, 1],
            context_bits: 4,
            sigma_normal: 0.1,
            sigma_offset: 0.0,
            deskew: true,
            mean_subtract: true,
            learn_on_test: false,
            record_every: 1000,
            network: NetParams::new(
                LearningRate::InverseCapped {
                    scale: 8000.0,
                    cap: 0.3,
                },
                200.0,
            ),
        }
    }

    /// Full-size preset: 1500-1500-1 with 6 composed half-spaces per neuron.
    pub fn full() -> Self {
        MnistClassifyConfig {
            layer_widths: vec![1500, 1500, 1],
            context_bits: 6,
            learn_on_test: true,
            ..MnistClassifyConfig::small()
        }
    }
}

/// Source of binary MNIST images.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Binarization {
    /// Threshold the greyscale IDX files.
    Threshold { threshold: u8 },
    /// Pre-binarized `binarized_mnist_{train,valid,test}.amat` files.
    Amat,
}

/// Autoregressive MNIST density model.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MnistDensityConfig {
    pub seed: u64,
    pub data_dir: PathBuf,
    pub binarization: Binarization,
    /// Use at most this many training / test images (0 = all).
    pub train_limit: usize,
    pub test_limit: usize,
    pub layer_widths: Vec<usize>,
    /// Skip-gram base models per pixel, filled from the preset library first
    /// and then with random causal skip-grams.
    pub base_models: usize,
    pub random_skipgram_min: usize,
    pub random_skipgram_max: usize,
    pub random_skipgram_radius: i32,
    /// Gating patterns with more contexts than this are not used by neurons.
    pub gating_max_contexts: usize,
    /// Predict with a switching mixture over all neurons of each pixel network.
    pub switching: bool,
    pub record_every: u64,
    pub network: NetParams,
}

impl MnistDensityConfig {
    /// Desk-scale preset: 8-16-8-16 plus an output neuron, 50 base models.
    pub fn small() -> Self {
        MnistDensityConfig {
            seed: 1,
            data_dir: PathBuf::from("data/mnist"),
            binarization: Binarization::Threshold { threshold: 128 },
            train_limit: 0,
            test_limit: 0,
            layer_widths: vec![8, 16, 8, 16, 1],
            base_models: 50,
            random_skipgram_min: 3,
            random_skipgram_max: 8,
            random_skipgram_radius: 4,
            gating_max_contexts: 64,
            switching: false,
            record_every: 1000,
            network: NetParams {
                epsilon: 0.001,
                ..NetParams::new(
                    LearningRate::InverseCapped {
                        scale: 25.0,
                        cap: 0.005,
                    },
                    200.0,
                )
            },
        }
    }

    /// Full-size preset: 35-60-35-70 predicting through a switching mixture,
    /// up to 600 base models, pre-binarized data (long run).
    pub fn full() -> Self {
        MnistDensityConfig {
            layer_widths: vec![35, 60, 35, 70],
            base_models: 600,
            binarization: Binarization::Amat,
            switching: true,
            ..MnistDensityConfig::small()
        }
    }
}
