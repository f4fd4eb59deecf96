//! The gated linear network: layers of gated geometric mixers.
//!
//! Every layer sees a constant bias entry `β` prepended to the previous
//! layer's outputs, so a neuron in layer `i` carries `K_{i-1} + 1` weights per
//! context, column 0 being the bias weight. Neuron outputs are clipped to
//! `[ε, 1-ε]` before they feed the next layer. Learning is local: each neuron
//! takes one projected gradient step on its own log loss against the shared
//! target, using exactly the inputs it saw during the forward pass.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::context::{ContextFunction, SideInfo};
use crate::error::{Error, Result};
use crate::math::{log_loss, logit_unchecked, Clip, Probability, DEFAULT_BIAS};
use crate::mixer::{check_bound, geo_mix_logits, LearningRate, TimeIndex, WeightBank};
use crate::rng::RandomSource;

const CHECKPOINT_FORMAT: &str = "gln-network";
const CHECKPOINT_VERSION: u32 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum InitScheme {
    /// All weights zero: every neuron starts at 1/2.
    #[default]
    Zero,
    /// Every weight `1 / K_{i-1}`, the bias column included.
    GeometricAverage,
}

/// Shape and hyperparameters of a network.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NetworkSpec {
    /// Number of base predictions `K_0`.
    pub base_width: usize,
    /// Non-bias neurons per layer, bottom to top.
    pub layer_widths: Vec<usize>,
    /// Bias input `β`.
    pub bias: f64,
    pub clip: Clip,
    pub weight_bound: f64,
    pub init: InitScheme,
    pub learning_rate: LearningRate,
    #[serde(default)]
    pub time_index: TimeIndex,
}

impl NetworkSpec {
    pub fn new(base_width: usize, layer_widths: Vec<usize>, learning_rate: LearningRate) -> Self {
        NetworkSpec {
            base_width,
            layer_widths,
            bias: DEFAULT_BIAS,
            clip: Clip::default(),
            weight_bound: 200.0,
            init: InitScheme::Zero,
            learning_rate,
            time_index: TimeIndex::Global,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.base_width == 0 {
            return Err(Error::config("base width must be at least 1"));
        }
        if self.layer_widths.is_empty() || self.layer_widths.contains(&0) {
            return Err(Error::config(format!(
                "layer widths must be non-empty and positive, got {:?}",
                self.layer_widths
            )));
        }
        if !(self.bias > 0.0 && self.bias < 1.0) || self.bias == 0.5 {
            return Err(Error::config(format!(
                "bias must lie in (0, 1) and differ from 1/2, got {}",
                self.bias
            )));
        }
        if self.clip.apply(self.bias) != self.bias {
            return Err(Error::config(format!(
                "bias {} lies outside the clipping range [{e}, 1 - {e}]",
                self.bias,
                e = self.clip.epsilon()
            )));
        }
        check_bound(self.weight_bound)?;
        self.learning_rate.validate()
    }

    /// Fan-in (bias excluded) of layer `i`.
    pub fn fan_in(&self, layer: usize) -> usize {
        if layer == 0 {
            self.base_width
        } else {
            self.layer_widths[layer - 1]
        }
    }

    fn init_weight(&self, layer: usize) -> f64 {
        match self.init {
            InitScheme::Zero => 0.0,
            InitScheme::GeometricAverage => 1.0 / self.fan_in(layer) as f64,
        }
    }
}

/// One gated geometric mixer with a weight row per context.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawNeuron")]
pub struct Neuron {
    context: ContextFunction,
    bank: WeightBank,
}

impl Neuron {
    /// `inputs` counts every input column, the bias entry included.
    pub fn new(context: ContextFunction, inputs: usize, bound: f64, init: f64) -> Result<Self> {
        let bank = WeightBank::new(context.size(), inputs, bound, init)?;
        Ok(Neuron { context, bank })
    }

    pub fn context(&self) -> &ContextFunction {
        &self.context
    }

    pub fn bank(&self) -> &WeightBank {
        &self.bank
    }

    pub fn bank_mut(&mut self) -> &mut WeightBank {
        &mut self.bank
    }
}

#[derive(Deserialize)]
struct RawNeuron {
    context: ContextFunction,
    bank: WeightBank,
}

impl TryFrom<RawNeuron> for Neuron {
    type Error = Error;

    fn try_from(raw: RawNeuron) -> Result<Self> {
        if raw.bank.rows() != raw.context.size() {
            return Err(Error::Dimension {
                what: "weight rows per context",
                expected: raw.context.size(),
                got: raw.bank.rows(),
            });
        }
        if raw.bank.weights().len() != raw.bank.rows() * raw.bank.cols()
            || raw
                .bank
                .weights()
                .iter()
                .any(|w| !(w.abs() <= raw.bank.bound()))
        {
            return Err(Error::config("corrupt weight bank"));
        }
        Ok(Neuron {
            context: raw.context,
            bank: raw.bank,
        })
    }
}

/// Everything a forward pass computed, as needed by [`GatedLinearNetwork::update`].
#[derive(Debug, Clone, Default, PartialEq)]
pub struct ForwardTrace {
    /// `activations[i]` is `p_i(z)`: `β` followed by the clipped outputs of
    /// layer `i` (`i = 0` holds the base predictions).
    activations: Vec<Vec<f64>>,
    /// Elementwise logits of `activations`.
    logits: Vec<Vec<f64>>,
    /// Unclipped neuron outputs per layer (index 0 is layer 1).
    raw: Vec<Vec<f64>>,
    /// Selected context id per neuron (index 0 is layer 1).
    contexts: Vec<Vec<usize>>,
}

impl ForwardTrace {
    pub fn activations(&self) -> &[Vec<f64>] {
        &self.activations
    }

    pub fn raw_outputs(&self) -> &[Vec<f64>] {
        &self.raw
    }

    pub fn contexts(&self) -> &[Vec<usize>] {
        &self.contexts
    }

    /// Clipped output of neuron `k` in layer `layer` (1-based layers).
    pub fn neuron_output(&self, layer: usize, k: usize) -> f64 {
        self.activations[layer][k + 1]
    }

    /// Clipped output of the first neuron of the top layer.
    pub fn output(&self) -> f64 {
        self.activations.last().map_or(0.5, |a| a[1])
    }
}

/// A layered gated linear network.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GatedLinearNetwork {
    spec: NetworkSpec,
    layers: Vec<Vec<Neuron>>,
}

/// Builds a network whose neuron contexts come from `context_for(layer, index, rng)`,
/// called bottom-up and left to right (`layer` is 1-based).
pub fn init_network<F>(
    spec: NetworkSpec,
    rng: &mut RandomSource,
    mut context_for: F,
) -> Result<GatedLinearNetwork>
where
    F: FnMut(usize, usize, &mut RandomSource) -> Result<ContextFunction>,
{
    spec.validate()?;
    let mut layers = Vec::with_capacity(spec.layer_widths.len());
    for (i, &width) in spec.layer_widths.iter().enumerate() {
        let cols = spec.fan_in(i) + 1;
        let init = spec.init_weight(i);
        let layer = (0..width)
            .map(|k| Neuron::new(context_for(i + 1, k, rng)?, cols, spec.weight_bound, init))
            .collect::<Result<Vec<_>>>()?;
        layers.push(layer);
    }
    Ok(GatedLinearNetwork { spec, layers })
}

#[derive(Serialize, Deserialize)]
struct Checkpoint<T> {
    format: String,
    version: u32,
    network: T,
}

impl GatedLinearNetwork {
    /// Assembles a network from explicit neurons, checking every shape against `spec`.
    pub fn from_parts(spec: NetworkSpec, layers: Vec<Vec<Neuron>>) -> Result<Self> {
        spec.validate()?;
        if layers.len() != spec.layer_widths.len() {
            return Err(Error::Dimension {
                what: "layer count",
                expected: spec.layer_widths.len(),
                got: layers.len(),
            });
        }
        for (i, layer) in layers.iter().enumerate() {
            if layer.len() != spec.layer_widths[i] {
                return Err(Error::Dimension {
                    what: "layer width",
                    expected: spec.layer_widths[i],
                    got: layer.len(),
                });
            }
            for n in layer {
                if n.bank.cols() != spec.fan_in(i) + 1 {
                    return Err(Error::Dimension {
                        what: "neuron input columns",
                        expected: spec.fan_in(i) + 1,
                        got: n.bank.cols(),
                    });
                }
                if n.bank.bound() != spec.weight_bound {
                    return Err(Error::config(
                        "neuron weight bound differs from the network's",
                    ));
                }
            }
        }
        Ok(GatedLinearNetwork { spec, layers })
    }

    pub fn spec(&self) -> &NetworkSpec {
        &self.spec
    }

    pub fn layers(&self) -> &[Vec<Neuron>] {
        &self.layers
    }

    pub fn neuron(&self, layer: usize, k: usize) -> &Neuron {
        &self.layers[layer - 1][k]
    }

    pub fn neuron_mut(&mut self, layer: usize, k: usize) -> &mut Neuron {
        &mut self.layers[layer - 1][k]
    }

    /// Total number of non-bias neurons.
    pub fn neuron_count(&self) -> usize {
        self.layers.iter().map(Vec::len).sum()
    }

    pub fn forward(&self, base: &[f64], z: SideInfo<'_>) -> Result<ForwardTrace> {
        let mut trace = ForwardTrace::default();
        self.forward_into(base, z, &mut trace)?;
        Ok(trace)
    }

    /// [`forward`](Self::forward) reusing the buffers of `trace`.
    ///
    /// Base predictions are clipped on entry, which is a no-op for inputs that
    /// already respect the clipping range.
    pub fn forward_into(
        &self,
        base: &[f64],
        z: SideInfo<'_>,
        trace: &mut ForwardTrace,
    ) -> Result<()> {
        if base.len() != self.spec.base_width {
            return Err(Error::Dimension {
                what: "base predictions",
                expected: self.spec.base_width,
                got: base.len(),
            });
        }
        if let Some(&bad) = base.iter().find(|p| !(**p >= 0.0 && **p <= 1.0)) {
            return Err(Error::Domain {
                op: "base prediction",
                value: bad,
            });
        }
        let clip = self.spec.clip;
        let depth = self.layers.len();
        trace.activations.resize_with(depth + 1, Vec::new);
        trace.logits.resize_with(depth + 1, Vec::new);
        trace.raw.resize_with(depth, Vec::new);
        trace.contexts.resize_with(depth, Vec::new);

        let bias_logit = logit_unchecked(self.spec.bias);
        {
            let (act, lg) = (&mut trace.activations[0], &mut trace.logits[0]);
            act.clear();
            lg.clear();
            act.push(self.spec.bias);
            lg.push(bias_logit);
            for &p in base {
                let p = clip.apply(p);
                act.push(p);
                lg.push(logit_unchecked(p));
            }
        }
        for (i, layer) in self.layers.iter().enumerate() {
            let (below, above) = trace.logits.split_at_mut(i + 1);
            let inputs = &below[i];
            let (raw, ctx) = (&mut trace.raw[i], &mut trace.contexts[i]);
            raw.clear();
            ctx.clear();
            let act = &mut trace.activations[i + 1];
            let lg = &mut above[0];
            act.clear();
            lg.clear();
            act.push(self.spec.bias);
            lg.push(bias_logit);
            for n in layer {
                let c = n.context.try_eval(z)?;
                if c >= n.bank.rows() {
                    return Err(Error::ContextOutOfRange {
                        id: c,
                        size: n.bank.rows(),
                    });
                }
                let q = geo_mix_logits(n.bank.row(c), inputs);
                let clipped = clip.apply(q);
                ctx.push(c);
                raw.push(q);
                act.push(clipped);
                lg.push(logit_unchecked(clipped));
            }
        }
        Ok(())
    }

    /// Top-neuron prediction without learning.
    pub fn predict(&self, base: &[f64], z: SideInfo<'_>) -> Result<Probability> {
        let trace = self.forward(base, z)?;
        Probability::new(trace.output())
    }

    fn check_trace(&self, trace: &ForwardTrace) -> Result<()> {
        let shape_ok = trace.contexts.len() == self.layers.len()
            && trace
                .contexts
                .iter()
                .zip(&self.layers)
                .all(|(c, l)| c.len() == l.len())
            && trace.logits.len() == self.layers.len() + 1
            && trace.logits[0].len() == self.spec.base_width + 1;
        if shape_ok {
            Ok(())
        } else {
            Err(Error::config("forward trace does not match this network"))
        }
    }

    fn step_size(&self, bank: &WeightBank, c: usize, t: u64) -> f64 {
        let index = match self.spec.time_index {
            TimeIndex::Global => t,
            TimeIndex::PerContext => bank.visits(c) + 1,
        };
        self.spec.learning_rate.at(index)
    }

    /// Local learning step for target `x` at round `t >= 1`. Returns each neuron's
    /// log loss (nats) of its clipped output, computed before the update.
    ///
    /// `trace` must come from [`forward`](Self::forward) on the current weights.
    pub fn update(&mut self, trace: &ForwardTrace, x: bool, t: u64) -> Result<Vec<Vec<f64>>> {
        self.check_trace(trace)?;
        let losses = trace
            .activations
            .iter()
            .skip(1)
            .map(|a| a[1..].iter().map(|&q| log_loss(q, x)).collect())
            .collect();
        self.apply_updates(trace, x, t);
        Ok(losses)
    }

    /// [`update`](Self::update) without reporting losses.
    pub fn learn(&mut self, trace: &ForwardTrace, x: bool, t: u64) -> Result<()> {
        self.check_trace(trace)?;
        self.apply_updates(trace, x, t);
        Ok(())
    }

    fn apply_updates(&mut self, trace: &ForwardTrace, x: bool, t: u64) {
        for i in 0..self.layers.len() {
            let inputs = &trace.logits[i];
            for k in 0..self.layers[i].len() {
                let c = trace.contexts[i][k];
                let q = trace.raw[i][k];
                let eta = self.step_size(&self.layers[i][k].bank, c, t);
                self.layers[i][k].bank.ogd_update(c, inputs, q, x, eta);
            }
        }
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string(&Checkpoint {
            format: CHECKPOINT_FORMAT.into(),
            version: CHECKPOINT_VERSION,
            network: self,
        })?)
    }

    pub fn from_json(json: &str) -> Result<Self> {
        let cp: Checkpoint<GatedLinearNetwork> = serde_json::from_str(json)?;
        if cp.format != CHECKPOINT_FORMAT {
            return Err(Error::config(format!(
                "not a network checkpoint: {:?}",
                cp.format
            )));
        }
        if cp.version != CHECKPOINT_VERSION {
            return Err(Error::UnsupportedVersion {
                what: "network checkpoint",
                found: cp.version,
            });
        }
        GatedLinearNetwork::from_parts(cp.network.spec, cp.network.layers)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_json()?).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_json(&text)
    }
}
