//! Low-dimensional demonstrations: fitting a Gaussian bump from half-space
//! gating, the exclusive-or negative control, and switching over neurons.

use serde::{Deserialize, Serialize};

use super::config::{GaussianConfig, OffsetScheme, XorConfig};
use super::metrics::{emit, BlockStats, MetricsWriter};
use crate::context::{ContextFunction, HalfSpaceContext};
use crate::data::{gaussian_target, gaussian_task_sample, xor_task_sample};
use crate::error::{Error, Result};
use crate::math::log_loss;
use crate::network::{init_network, ForwardTrace, GatedLinearNetwork};
use crate::oracle::simpson;
use crate::rng::RandomSource;
use crate::switching::SwitchingMixture;

/// Domain of the Gaussian task.
pub const GAUSSIAN_DOMAIN: (f64, f64) = (-3.0, 3.0);

/// Every neuron's prediction on a grid of `z` values.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GridFit {
    pub z: Vec<f64>,
    pub target: Vec<f64>,
    /// `neurons[layer][k][j]`: neuron `(layer + 1, k)` at `z[j]`.
    pub neurons: Vec<Vec<Vec<f64>>>,
}

impl GridFit {
    pub fn top(&self) -> &[f64] {
        &self.neurons.last().expect("at least one layer")[0]
    }

    /// Mean absolute error of the top neuron against the target.
    pub fn top_mae(&self) -> f64 {
        let top = self.top();
        top.iter()
            .zip(&self.target)
            .map(|(p, f)| (p - f).abs())
            .sum::<f64>()
            / top.len() as f64
    }
}

fn grid(n: usize, (lo, hi): (f64, f64)) -> Vec<f64> {
    let n = n.max(2);
    (0..n)
        .map(|j| lo + (hi - lo) * j as f64 / (n - 1) as f64)
        .collect()
}

fn outputs_of(trace: &ForwardTrace, out: &mut Vec<f64>) {
    out.clear();
    for a in &trace.activations()[1..] {
        out.extend_from_slice(&a[1..]);
    }
}

/// Grid predictions of the frozen network with constant base `alpha`.
pub fn gaussian_grid_fit(net: &GatedLinearNetwork, alpha: f64, points: usize) -> Result<GridFit> {
    let z = grid(points, GAUSSIAN_DOMAIN);
    let widths = &net.spec().layer_widths;
    let mut neurons: Vec<Vec<Vec<f64>>> = widths
        .iter()
        .map(|&w| vec![Vec::with_capacity(z.len()); w])
        .collect();
    let mut trace = ForwardTrace::default();
    for &zj in &z {
        net.forward_into(&[alpha], &[zj], &mut trace)?;
        for (l, layer) in neurons.iter_mut().enumerate() {
            for (k, col) in layer.iter_mut().enumerate() {
                col.push(trace.neuron_output(l + 1, k));
            }
        }
    }
    Ok(GridFit {
        target: z.iter().map(|&v| gaussian_target(v)).collect(),
        z,
        neurons,
    })
}

/// One side of a first-layer neuron's half-space, with the value the neuron
/// should converge to there: the average of the target over the cell.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CellCheck {
    pub neuron: usize,
    pub lo: f64,
    pub hi: f64,
    pub expected: f64,
    pub predicted: f64,
}

impl CellCheck {
    pub fn deviation(&self) -> f64 {
        (self.predicted - self.expected).abs()
    }
}

/// Compares each first-layer neuron with the per-cell averages of the target.
/// Valid when the first layer mixes only the bias and the constant base.
pub fn first_layer_cells(net: &GatedLinearNetwork, alpha: f64) -> Result<Vec<CellCheck>> {
    let (lo, hi) = GAUSSIAN_DOMAIN;
    let mut out = Vec::new();
    for (k, neuron) in net.layers()[0].iter().enumerate() {
        let cut = match neuron.context() {
            ContextFunction::HalfSpace(h) if h.normal() == [1.0] => h.offset(),
            _ => {
                return Err(Error::config(
                    "first-layer cells need 1-D half-space contexts",
                ))
            }
        };
        for (a, b) in [(lo, cut.min(hi)), (cut.max(lo), hi)] {
            if b - a <= 1e-9 {
                continue;
            }
            let expected = simpson(gaussian_target, a, b, 2000) / (b - a);
            let mid = 0.5 * (a + b);
            let trace = net.forward(&[alpha], &[mid])?;
            out.push(CellCheck {
                neuron: k,
                lo: a,
                hi: b,
                expected,
                predicted: trace.neuron_output(1, k),
            });
        }
    }
    Ok(out)
}

fn halfspace_1d(offset: f64) -> ContextFunction {
    ContextFunction::HalfSpace(HalfSpaceContext::new(vec![1.0], offset))
}

/// The network of the Gaussian task, before any learning.
pub fn gaussian_network(cfg: &GaussianConfig) -> Result<GatedLinearNetwork> {
    if cfg.layer_widths.is_empty() {
        return Err(Error::config("gaussian task needs at least one layer"));
    }
    let spec = cfg.network.spec(1, &cfg.layer_widths)?;
    let depth = cfg.layer_widths.len();
    let k1 = cfg.layer_widths[0];
    let (range, even) = match cfg.offsets {
        OffsetScheme::Random { range } => (range, false),
        OffsetScheme::Even { range } => (range, true),
    };
    if !(range > 0.0) {
        return Err(Error::config("offset range must be positive"));
    }
    let mut rng = RandomSource::new(cfg.seed).derive(1);
    init_network(spec, &mut rng, |layer, k, rng| {
        Ok(if layer == depth && !cfg.top_context {
            ContextFunction::Constant
        } else if layer == 1 && even {
            halfspace_1d(-range + 2.0 * range * (k + 1) as f64 / (k1 + 1) as f64)
        } else {
            halfspace_1d(rng.uniform(-range, range))
        })
    })
}

/// Switching statistics over all neurons of a network.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SwitchingSummary {
    /// `(round, weights)` after every `record_every` rounds; weights are listed
    /// layer by layer.
    pub trajectory: Vec<(u64, Vec<f64>)>,
    /// Cumulative log loss of the switching mixture.
    pub loss_nats: f64,
    /// Cumulative log loss of each neuron's clipped output, layer by layer.
    pub neuron_loss_nats: Vec<f64>,
    /// Layer (1-based) holding the most mixture weight at the end.
    pub leader_layer: usize,
    /// `(round, layer of the heaviest neuron)` at every trajectory record.
    pub leader_layers: Vec<(u64, usize)>,
    /// Regret bound against any single neuron: `ln |M| + ln n`.
    pub bound_nats: f64,
}

impl SwitchingSummary {
    pub fn best_neuron_loss(&self) -> f64 {
        self.neuron_loss_nats
            .iter()
            .copied()
            .fold(f64::INFINITY, f64::min)
    }

    /// Mean leader layer over consecutive windows of `window` records.
    pub fn smoothed_leader_layers(&self, window: usize) -> Vec<f64> {
        self.leader_layers
            .chunks(window.max(1))
            .map(|c| c.iter().map(|&(_, l)| l as f64).sum::<f64>() / c.len() as f64)
            .collect()
    }
}

/// 1-based layer of the neuron at flat index `i` (neurons listed layer by layer).
fn layer_of(widths: &[usize], i: usize) -> usize {
    let mut end = 0;
    for (l, &w) in widths.iter().enumerate() {
        end += w;
        if i < end {
            return l + 1;
        }
    }
    widths.len()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Snapshot {
    pub round: u64,
    pub fit: GridFit,
    /// Switching mixture prediction on the grid, when switching is tracked.
    pub mixture: Option<Vec<f64>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GaussianReport {
    pub rounds: u64,
    pub top_mae: f64,
    /// First-layer per-cell checks (empty when not applicable).
    pub cells: Vec<CellCheck>,
    pub snapshots: Vec<Snapshot>,
    pub switching: Option<SwitchingSummary>,
}

impl GaussianReport {
    pub fn max_cell_deviation(&self) -> f64 {
        self.cells
            .iter()
            .map(CellCheck::deviation)
            .fold(0.0, f64::max)
    }
}

pub struct GaussianRun {
    pub network: GatedLinearNetwork,
    pub fit: GridFit,
    pub report: GaussianReport,
}

fn mixture_grid(
    net: &GatedLinearNetwork,
    mix: &SwitchingMixture,
    alpha: f64,
    z: &[f64],
) -> Result<Vec<f64>> {
    let mut trace = ForwardTrace::default();
    let mut outs = Vec::new();
    z.iter()
        .map(|&zj| {
            net.forward_into(&[alpha], &[zj], &mut trace)?;
            outputs_of(&trace, &mut outs);
            mix.predict(&outs)
        })
        .collect()
}

/// Trains on `cfg.rounds` samples of the Gaussian task.
pub fn run_gaussian(
    cfg: &GaussianConfig,
    mut sink: Option<&mut MetricsWriter>,
) -> Result<GaussianRun> {
    let mut net = gaussian_network(cfg)?;
    let mut data = RandomSource::new(cfg.seed).derive(2);
    let neurons = net.neuron_count();
    let mut mix = if cfg.switching {
        Some(SwitchingMixture::new(neurons)?)
    } else {
        None
    };
    let mut neuron_loss = vec![0.0; neurons];
    let mut mix_loss = 0.0;
    let mut trajectory = Vec::new();
    let mut snapshots = Vec::new();
    let every = cfg.record_every.max(1);

    let mut trace = ForwardTrace::default();
    let mut outs = Vec::new();
    let mut block = BlockStats::default();
    for t in 1..=cfg.rounds {
        let (z, x) = gaussian_task_sample(&mut data);
        net.forward_into(&[cfg.alpha], &[z], &mut trace)?;
        let loss = match &mut mix {
            Some(m) => {
                outputs_of(&trace, &mut outs);
                for (acc, &p) in neuron_loss.iter_mut().zip(&outs) {
                    *acc += log_loss(p, x);
                }
                let l = -m.update(&outs, x)?.ln();
                mix_loss += l;
                l
            }
            None => log_loss(trace.output(), x),
        };
        net.learn(&trace, x, t)?;
        block.add(loss, None);
        if t % every == 0 || t == cfg.rounds {
            emit(&mut sink, block.take(t, "train", false))?;
            if let Some(m) = &mix {
                trajectory.push((t, m.weights().to_vec()));
            }
        }
        if cfg.snapshots.contains(&t) {
            let fit = gaussian_grid_fit(&net, cfg.alpha, cfg.grid_points)?;
            let mixture = match &mix {
                Some(m) => Some(mixture_grid(&net, m, cfg.alpha, &fit.z)?),
                None => None,
            };
            snapshots.push(Snapshot {
                round: t,
                fit,
                mixture,
            });
        }
    }

    let fit = gaussian_grid_fit(&net, cfg.alpha, cfg.grid_points)?;
    let cells = if cfg.layer_widths.len() > 1 || cfg.top_context {
        first_layer_cells(&net, cfg.alpha)?
    } else {
        Vec::new()
    };
    let switching = mix.map(|m| {
        let mut mass = Vec::new();
        let mut i = 0;
        for &w in &cfg.layer_widths {
            mass.push(m.weights()[i..i + w].iter().sum::<f64>());
            i += w;
        }
        let leader_layers = trajectory
            .iter()
            .map(|(t, u)| (*t, layer_of(&cfg.layer_widths, crate::tasks::argmax(u))))
            .collect();
        SwitchingSummary {
            leader_layers,
            trajectory,
            loss_nats: mix_loss,
            neuron_loss_nats: neuron_loss,
            leader_layer: 1 + crate::tasks::argmax(&mass),
            bound_nats: (neurons as f64).ln() + (cfg.rounds.max(1) as f64).ln(),
        }
    });
    let report = GaussianReport {
        rounds: cfg.rounds,
        top_mae: fit.top_mae(),
        cells,
        snapshots,
        switching,
    };
    Ok(GaussianRun {
        network: net,
        fit,
        report,
    })
}

/// The exclusive-or network: neuron `k` of every layer is gated by the sign of
/// coordinate `k mod 2`.
pub fn xor_network(cfg: &XorConfig) -> Result<GatedLinearNetwork> {
    let spec = cfg.network.spec(1, &cfg.layer_widths)?;
    let mut rng = RandomSource::new(cfg.seed).derive(1);
    init_network(spec, &mut rng, |_, k, _| {
        let mut normal = vec![0.0; 2];
        normal[k % 2] = 1.0;
        Ok(ContextFunction::HalfSpace(HalfSpaceContext::new(
            normal, 0.0,
        )))
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct XorReport {
    pub rounds: u64,
    /// Largest `|p - 1/2|` over the grid and the neurons of each layer.
    pub layer_max_deviation: Vec<f64>,
    /// `(z1, z2, top output)` on the grid.
    pub grid: Vec<(f64, f64, f64)>,
}

pub struct XorRun {
    pub network: GatedLinearNetwork,
    pub report: XorReport,
}

/// Trains on `cfg.rounds` samples of the exclusive-or task.
pub fn run_xor(cfg: &XorConfig, mut sink: Option<&mut MetricsWriter>) -> Result<XorRun> {
    let mut net = xor_network(cfg)?;
    let mut data = RandomSource::new(cfg.seed).derive(2);
    let mut trace = ForwardTrace::default();
    let mut block = BlockStats::default();
    let every = cfg.record_every.max(1);
    for t in 1..=cfg.rounds {
        let (z, x) = xor_task_sample(&mut data);
        net.forward_into(&[cfg.alpha], &z, &mut trace)?;
        block.add(log_loss(trace.output(), x), None);
        net.learn(&trace, x, t)?;
        if t % every == 0 || t == cfg.rounds {
            emit(&mut sink, block.take(t, "train", false))?;
        }
    }

    let axis = grid(cfg.grid_points, (-1.0, 1.0));
    let mut dev = vec![0.0f64; cfg.layer_widths.len()];
    let mut points = Vec::with_capacity(axis.len() * axis.len());
    for &a in &axis {
        for &b in &axis {
            net.forward_into(&[cfg.alpha], &[a, b], &mut trace)?;
            for (l, d) in dev.iter_mut().enumerate() {
                for k in 0..cfg.layer_widths[l] {
                    *d = d.max((trace.neuron_output(l + 1, k) - 0.5).abs());
                }
            }
            points.push((a, b, trace.output()));
        }
    }
    Ok(XorRun {
        network: net,
        report: XorReport {
            rounds: cfg.rounds,
            layer_max_deviation: dev,
            grid: points,
        },
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn short(mut cfg: GaussianConfig, rounds: u64) -> GaussianConfig {
        cfg.rounds = rounds;
        cfg.grid_points = 61;
        cfg
    }

    #[test]
    fn even_offsets_are_strictly_inside() {
        let net = gaussian_network(&GaussianConfig::two_layer_wide()).unwrap();
        let offsets: Vec<f64> = net.layers()[0]
            .iter()
            .map(|n| match n.context() {
                ContextFunction::HalfSpace(h) => h.offset(),
                _ => unreachable!(),
            })
            .collect();
        assert_eq!(offsets.len(), 100);
        assert!(offsets.windows(2).all(|w| w[0] < w[1]));
        assert!(offsets[0] > -3.0 && offsets[99] < 3.0);
        assert_eq!(net.layers()[1][0].context(), &ContextFunction::Constant);
    }

    #[test]
    fn untrained_grid_is_flat() {
        let cfg = GaussianConfig::six_layer();
        let fit = gaussian_grid_fit(&gaussian_network(&cfg).unwrap(), cfg.alpha, 11).unwrap();
        assert!(fit.neurons.iter().flatten().flatten().all(|&p| p == 0.5));
        assert_eq!(fit.z.first(), Some(&-3.0));
        assert_eq!(fit.z.last(), Some(&3.0));
    }

    #[test]
    fn first_layer_tracks_cell_averages() {
        let run = run_gaussian(&short(GaussianConfig::six_layer(), 30_000), None).unwrap();
        assert!(
            run.report.max_cell_deviation() < 0.08,
            "{:?}",
            run.report.cells
        );
    }

    #[test]
    fn switching_respects_single_neuron_bound() {
        let mut cfg = short(GaussianConfig::switching(), 5_000);
        cfg.snapshots = vec![100, 1000];
        let run = run_gaussian(&cfg, None).unwrap();
        let s = run.report.switching.as_ref().unwrap();
        assert!(s.loss_nats <= s.best_neuron_loss() + s.bound_nats + 1e-9);
        assert_eq!(run.report.snapshots.len(), 2);
        assert_eq!(s.trajectory.last().unwrap().1.len(), 12);
        assert!(run.report.snapshots[0].mixture.is_some());
        for (_, u) in &s.trajectory {
            assert!((u.iter().sum::<f64>() - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn switching_leader_moves_up_the_network() {
        let mut cfg = GaussianConfig::switching();
        cfg.record_every = 100;
        cfg.grid_points = 61;
        let run = run_gaussian(&cfg, None).unwrap();
        let s = run.report.switching.unwrap();
        assert!(s.leader_layers[0].1 <= 3, "{:?}", &s.leader_layers[..5]);
        assert_eq!(s.leader_layer, 6);
        let smooth = s.smoothed_leader_layers(100);
        assert!(smooth.windows(2).all(|w| w[0] <= w[1]), "{smooth:?}");
        assert!(s.loss_nats <= s.best_neuron_loss() + s.bound_nats);
    }

    #[test]
    fn xor_outputs_stay_near_half() {
        let cfg = XorConfig {
            rounds: 20_000,
            grid_points: 11,
            ..XorConfig::default()
        };
        let run = run_xor(&cfg, None).unwrap();
        assert_eq!(run.report.grid.len(), 121);
        assert!(
            run.report.layer_max_deviation.iter().all(|&d| d < 0.1),
            "{:?}",
            run.report
        );
    }
}
