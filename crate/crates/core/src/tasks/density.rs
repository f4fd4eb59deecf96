//! Autoregressive density modelling of binary images.
//!
//! Pixels are predicted in row-major order. Pixel `i` has its own network whose
//! base predictions come from ZR-estimating skip-gram models over the pixels
//! before it, and whose neurons are gated by causal image contexts. The loss of
//! an image is the sum over its pixels, in nats.

use serde::{Deserialize, Serialize};

use super::config::{Binarization, MnistDensityConfig};
use super::metrics::{emit, BlockStats, MetricRecord, MetricsWriter};
use crate::base_models::{SkipGramBaseModel, ZRCounter};
use crate::context::{parse_presets, ContextPattern, ImageGeometry, PatternKind, DEFAULT_PRESETS};
use crate::data::{binarize, load_amat, load_mnist, MnistSplit};
use crate::error::{Error, Result};
use crate::math::log_loss;
use crate::network::{init_network, ForwardTrace, GatedLinearNetwork};
use crate::rng::RandomSource;
use crate::switching::SwitchingMixture;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
struct PixelModel {
    bases: Vec<SkipGramBaseModel>,
    net: GatedLinearNetwork,
    switch: Option<SwitchingMixture>,
}

/// Per-pixel networks over a fixed image geometry.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct AutoregressiveDensityModel {
    geometry: ImageGeometry,
    base_patterns: Vec<ContextPattern>,
    gating_patterns: Vec<ContextPattern>,
    pixels: Vec<PixelModel>,
    images_learned: u64,
    #[serde(skip)]
    scratch: Scratch,
}

#[derive(Debug, Clone, Default)]
struct Scratch {
    z: Vec<f64>,
    base: Vec<f64>,
    ids: Vec<usize>,
    outputs: Vec<f64>,
    trace: ForwardTrace,
}

/// Base-model patterns: the preset skip-grams, an empty (marginal) skip-gram,
/// then random causal skip-grams until `cfg.base_models` patterns exist.
pub fn base_patterns(
    cfg: &MnistDensityConfig,
    presets: &[ContextPattern],
    rng: &mut RandomSource,
) -> Result<Vec<ContextPattern>> {
    if cfg.base_models == 0 {
        return Err(Error::config("density model needs at least one base model"));
    }
    if cfg.random_skipgram_min == 0 || cfg.random_skipgram_min > cfg.random_skipgram_max {
        return Err(Error::config("random skip-gram size range is empty"));
    }
    let mut out = vec![ContextPattern::new(
        "marginal",
        PatternKind::SkipGram { offsets: vec![] },
    )?];
    out.extend(
        presets
            .iter()
            .filter(|p| matches!(p.kind, PatternKind::SkipGram { .. }))
            .cloned(),
    );
    out.truncate(cfg.base_models);
    let span = cfg.random_skipgram_max - cfg.random_skipgram_min + 1;
    while out.len() < cfg.base_models {
        let count = cfg.random_skipgram_min + rng.below(span);
        let name = format!("random{}", out.len());
        out.push(ContextPattern::random_skipgram(
            rng,
            name,
            count,
            cfg.random_skipgram_radius,
        )?);
    }
    Ok(out)
}

impl AutoregressiveDensityModel {
    /// Builds the model from `cfg`, using the shipped preset library.
    pub fn new(cfg: &MnistDensityConfig, geometry: ImageGeometry) -> Result<Self> {
        Self::with_presets(cfg, geometry, &parse_presets(DEFAULT_PRESETS)?)
    }

    /// Builds the model with an explicit pattern library. Every neuron `(l, k)`
    /// uses the same gating pattern at every pixel.
    pub fn with_presets(
        cfg: &MnistDensityConfig,
        geometry: ImageGeometry,
        presets: &[ContextPattern],
    ) -> Result<Self> {
        let root = RandomSource::new(cfg.seed);
        let base_patterns = base_patterns(cfg, presets, &mut root.derive(1))?;
        let pool: Vec<&ContextPattern> = presets
            .iter()
            .filter(|p| p.max_size() <= cfg.gating_max_contexts)
            .collect();
        if pool.is_empty() {
            return Err(Error::config(format!(
                "no gating pattern has at most {} contexts",
                cfg.gating_max_contexts
            )));
        }
        let mut pick = root.derive(2);
        let choice: Vec<Vec<usize>> = cfg
            .layer_widths
            .iter()
            .map(|&w| (0..w).map(|_| pick.below(pool.len())).collect())
            .collect();
        let mut gating_patterns = Vec::new();
        let mut slot = Vec::new();
        for layer in &choice {
            let mut row = Vec::new();
            for &c in layer {
                let pos = match gating_patterns
                    .iter()
                    .position(|p: &ContextPattern| *p == *pool[c])
                {
                    Some(pos) => pos,
                    None => {
                        gating_patterns.push(pool[c].clone());
                        gating_patterns.len() - 1
                    }
                };
                row.push(pos);
            }
            slot.push(row);
        }

        let spec = cfg.network.spec(base_patterns.len(), &cfg.layer_widths)?;
        let neurons = spec.layer_widths.iter().sum();
        let mut pixels = Vec::with_capacity(geometry.pixels());
        for cursor in 0..geometry.pixels() {
            let bases = base_patterns
                .iter()
                .map(|p| Ok(SkipGramBaseModel::new(p.instantiate(geometry, cursor)?)))
                .collect::<Result<Vec<_>>>()?;
            let net = init_network(spec.clone(), &mut root.derive(3), |l, k, _| {
                gating_patterns[slot[l - 1][k]].instantiate(geometry, cursor)
            })?;
            let switch = if cfg.switching {
                Some(SwitchingMixture::new(neurons)?)
            } else {
                None
            };
            pixels.push(PixelModel { bases, net, switch });
        }
        Ok(AutoregressiveDensityModel {
            geometry,
            base_patterns,
            gating_patterns,
            pixels,
            images_learned: 0,
            scratch: Scratch::default(),
        })
    }

    pub fn geometry(&self) -> ImageGeometry {
        self.geometry
    }

    pub fn base_patterns(&self) -> &[ContextPattern] {
        &self.base_patterns
    }

    pub fn gating_patterns(&self) -> &[ContextPattern] {
        &self.gating_patterns
    }

    pub fn images_learned(&self) -> u64 {
        self.images_learned
    }

    /// Network of pixel `i`.
    pub fn network(&self, i: usize) -> &GatedLinearNetwork {
        &self.pixels[i].net
    }

    /// Probability that pixel `i` is on, given `image` (only pixels before `i` are read).
    pub fn pixel_prob(&mut self, image: &[u8], i: usize) -> Result<f64> {
        self.check(image)?;
        let mut s = std::mem::take(&mut self.scratch);
        load_pixels(image, &mut s.z);
        let p = pixel_forward(&self.pixels[i], &mut s);
        self.scratch = s;
        p
    }

    fn check(&self, image: &[u8]) -> Result<()> {
        if image.len() != self.geometry.pixels() {
            return Err(Error::Dimension {
                what: "binary image",
                expected: self.geometry.pixels(),
                got: image.len(),
            });
        }
        match image.iter().find(|&&v| v > 1) {
            Some(&v) => Err(Error::Domain {
                op: "binary pixel",
                value: f64::from(v),
            }),
            None => Ok(()),
        }
    }
}

fn load_pixels(image: &[u8], z: &mut Vec<f64>) {
    z.clear();
    z.extend(image.iter().map(|&v| f64::from(v)));
}

/// Forward pass for one pixel; leaves the trace and base ids in `s`.
fn pixel_forward(px: &PixelModel, s: &mut Scratch) -> Result<f64> {
    s.ids.clear();
    s.base.clear();
    for b in &px.bases {
        let id = b.context().eval(&s.z);
        s.ids.push(id);
        s.base.push(b.predict_at(id));
    }
    px.net.forward_into(&s.base, &s.z, &mut s.trace)?;
    match &px.switch {
        None => Ok(s.trace.output()),
        Some(mix) => {
            s.outputs.clear();
            for a in &s.trace.activations()[1..] {
                s.outputs.extend_from_slice(&a[1..]);
            }
            mix.predict(&s.outputs)
        }
    }
}

/// Code length of `image` in nats; learns from it when `learn` is set.
pub fn density_step(
    model: &mut AutoregressiveDensityModel,
    image: &[u8],
    learn: bool,
) -> Result<f64> {
    model.check(image)?;
    let t = model.images_learned + 1;
    let mut s = std::mem::take(&mut model.scratch);
    load_pixels(image, &mut s.z);
    let result = (|| {
        let mut nats = 0.0;
        for (px, &v) in model.pixels.iter_mut().zip(image) {
            let x = v == 1;
            let p = pixel_forward(px, &mut s)?;
            nats += log_loss(p, x);
            if learn {
                px.net.learn(&s.trace, x, t)?;
                for (b, &id) in px.bases.iter_mut().zip(&s.ids) {
                    b.update_at(id, x);
                }
                if let Some(mix) = &mut px.switch {
                    mix.update(&s.outputs, x)?;
                }
            }
        }
        Ok(nats)
    })();
    model.scratch = s;
    if learn && result.is_ok() {
        model.images_learned = t;
    }
    result
}

/// Independent ZR estimator per pixel position, ignoring all context.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ZrBaseline {
    counters: Vec<ZRCounter>,
}

impl ZrBaseline {
    pub fn new(pixels: usize) -> Self {
        ZrBaseline {
            counters: vec![ZRCounter::new(); pixels],
        }
    }

    /// Code length of `image` in nats; learns from it when `learn` is set.
    pub fn step(&mut self, image: &[u8], learn: bool) -> Result<f64> {
        if image.len() != self.counters.len() {
            return Err(Error::Dimension {
                what: "binary image",
                expected: self.counters.len(),
                got: image.len(),
            });
        }
        let mut nats = 0.0;
        for (c, &v) in self.counters.iter_mut().zip(image) {
            let x = v == 1;
            nats -= c.prob(x).ln();
            if learn {
                c.observe(x);
            }
        }
        Ok(nats)
    }
}

/// Summary of a density run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DensityReport {
    pub train_images: usize,
    pub test_images: usize,
    /// Mean code length per image over the training segment (nats).
    pub train_loss_nats: f64,
    /// Mean code length per image over the test segment (nats).
    pub test_loss_nats: f64,
    pub baseline_train_loss_nats: f64,
    pub baseline_test_loss_nats: f64,
    /// `(images seen, cumulative mean training loss)` every `record_every` images.
    pub train_curve: Vec<(u64, f64)>,
}

pub struct DensityRun {
    pub model: AutoregressiveDensityModel,
    pub report: DensityReport,
}

/// Loads the binary training and test streams named by `cfg`, truncated to
/// the configured limits. With pre-binarized files the validation split is
/// appended to the training stream.
pub fn load_density_data(cfg: &MnistDensityConfig) -> Result<(Vec<Vec<u8>>, Vec<Vec<u8>>)> {
    let cap = |mut v: Vec<Vec<u8>>, n: usize| {
        if n > 0 {
            v.truncate(n);
        }
        v
    };
    let pixels = ImageGeometry::MNIST.pixels();
    let (train, test) = match cfg.binarization {
        Binarization::Threshold { threshold } => {
            let load = |split| -> Result<Vec<Vec<u8>>> {
                let set = load_mnist(&cfg.data_dir, split)?;
                (0..set.len())
                    .map(|i| binarize(set.image(i), threshold))
                    .collect()
            };
            (load(MnistSplit::Train)?, load(MnistSplit::Test)?)
        }
        Binarization::Amat => {
            let file = |name: &str| cfg.data_dir.join(format!("binarized_mnist_{name}.amat"));
            let mut train = load_amat(&file("train"), pixels)?;
            train.extend(load_amat(&file("valid"), pixels)?);
            (train, load_amat(&file("test"), pixels)?)
        }
    };
    Ok((cap(train, cfg.train_limit), cap(test, cfg.test_limit)))
}

/// A single online pass over `train` then `test`, learning throughout, with the
/// ZR baseline run alongside on the same stream. Test-segment losses are
/// measured before the model learns from each image.
pub fn run_density(
    cfg: &MnistDensityConfig,
    geometry: ImageGeometry,
    train: &[Vec<u8>],
    test: &[Vec<u8>],
    mut sink: Option<&mut MetricsWriter>,
) -> Result<DensityRun> {
    let mut model = AutoregressiveDensityModel::new(cfg, geometry)?;
    let mut baseline = ZrBaseline::new(geometry.pixels());
    let every = cfg.record_every.max(1);

    let mut curve = Vec::new();
    let (mut train_total, mut base_train) = (0.0, 0.0);
    let mut block = BlockStats::default();
    let mut base_block = BlockStats::default();
    for (i, img) in train.iter().enumerate() {
        let nats = density_step(&mut model, img, true)?;
        let b = baseline.step(img, true)?;
        train_total += nats;
        base_train += b;
        block.add(nats, None);
        base_block.add(b, None);
        let seen = i as u64 + 1;
        if seen % every == 0 || i + 1 == train.len() {
            curve.push((seen, train_total / seen as f64));
            emit(&mut sink, block.take(seen, "train", false))?;
            emit(&mut sink, base_block.take(seen, "baseline_train", false))?;
        }
    }

    let (mut test_total, mut base_test) = (0.0, 0.0);
    for (i, img) in test.iter().enumerate() {
        let nats = density_step(&mut model, img, true)?;
        let b = baseline.step(img, true)?;
        test_total += nats;
        base_test += b;
        block.add(nats, None);
        base_block.add(b, None);
        if (i as u64 + 1) % every == 0 || i + 1 == test.len() {
            let seen = (train.len() + i) as u64 + 1;
            emit(&mut sink, block.take(seen, "test", false))?;
            emit(&mut sink, base_block.take(seen, "baseline_test", false))?;
        }
    }
    if !test.is_empty() {
        let seen = (train.len() + test.len()) as u64;
        emit(
            &mut sink,
            MetricRecord {
                example: seen,
                segment: "test_mean".into(),
                loss_nats: test_total / test.len() as f64,
                accuracy: None,
            },
        )?;
    }

    let mean = |total: f64, n: usize| if n == 0 { 0.0 } else { total / n as f64 };
    let report = DensityReport {
        train_images: train.len(),
        test_images: test.len(),
        train_loss_nats: mean(train_total, train.len()),
        test_loss_nats: mean(test_total, test.len()),
        baseline_train_loss_nats: mean(base_train, train.len()),
        baseline_test_loss_nats: mean(base_test, test.len()),
        train_curve: curve,
    };
    Ok(DensityRun { model, report })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn tiny_cfg() -> MnistDensityConfig {
        MnistDensityConfig {
            layer_widths: vec![2, 1],
            base_models: 6,
            gating_max_contexts: 16,
            ..MnistDensityConfig::small()
        }
    }

    const GEO: ImageGeometry = ImageGeometry { rows: 6, cols: 6 };

    fn random_image(rng: &mut RandomSource) -> Vec<u8> {
        (0..GEO.pixels())
            .map(|_| u8::from(rng.bernoulli(0.3)))
            .collect()
    }

    #[test]
    fn pixel_predictions_ignore_the_future() {
        let mut model = AutoregressiveDensityModel::new(&tiny_cfg(), GEO).unwrap();
        let mut rng = RandomSource::new(5);
        for _ in 0..30 {
            let img = random_image(&mut rng);
            density_step(&mut model, &img, true).unwrap();
        }
        for _ in 0..20 {
            let img = random_image(&mut rng);
            for i in 0..GEO.pixels() {
                let p = model.pixel_prob(&img, i).unwrap();
                let mut other = img.clone();
                for v in &mut other[i..] {
                    *v = u8::from(rng.bernoulli(0.5));
                }
                assert_eq!(model.pixel_prob(&other, i).unwrap(), p, "pixel {i}");
            }
        }
    }

    #[test]
    fn untrained_model_codes_half_per_pixel() {
        let mut model = AutoregressiveDensityModel::new(&tiny_cfg(), GEO).unwrap();
        let nats = density_step(&mut model, &[0; 36], false).unwrap();
        assert!((nats - 36.0 * 2f64.ln()).abs() < 1e-9);
        assert_eq!(model.images_learned(), 0);
    }

    #[test]
    fn frozen_steps_do_not_mutate() {
        let mut model = AutoregressiveDensityModel::new(&tiny_cfg(), GEO).unwrap();
        let mut rng = RandomSource::new(6);
        for _ in 0..5 {
            density_step(&mut model, &random_image(&mut rng), true).unwrap();
        }
        let before = serde_json::to_string(&model).unwrap();
        density_step(&mut model, &random_image(&mut rng), false).unwrap();
        assert_eq!(serde_json::to_string(&model).unwrap(), before);
    }

    #[test]
    fn learns_a_repeated_image() {
        let mut cfg = tiny_cfg();
        cfg.switching = true;
        let mut model = AutoregressiveDensityModel::new(&cfg, GEO).unwrap();
        let img: Vec<u8> = (0..36).map(|i| u8::from(i % 7 < 3)).collect();
        let first = density_step(&mut model, &img, true).unwrap();
        let mut last = first;
        for _ in 0..50 {
            last = density_step(&mut model, &img, true).unwrap();
        }
        assert!(last < 0.25 * first, "{first} -> {last}");
    }

    #[test]
    fn rejects_bad_images() {
        let mut model = AutoregressiveDensityModel::new(&tiny_cfg(), GEO).unwrap();
        assert!(density_step(&mut model, &[0; 35], true).is_err());
        let mut img = vec![0; 36];
        img[3] = 2;
        assert!(density_step(&mut model, &img, true).is_err());
    }

    #[test]
    fn baseline_on_constant_images() {
        let mut zr = ZrBaseline::new(4);
        let mut total = 0.0;
        for _ in 0..1000 {
            total += zr.step(&[0, 0, 1, 1], true).unwrap();
        }
        assert!(total <= 4.0 * 4f64.ln() + 1e-9);
    }

    #[test]
    fn base_patterns_fill_up_to_count() {
        let mut cfg = tiny_cfg();
        cfg.base_models = 40;
        let presets = parse_presets(DEFAULT_PRESETS).unwrap();
        let pats = base_patterns(&cfg, &presets, &mut RandomSource::new(1)).unwrap();
        assert_eq!(pats.len(), 40);
        assert_eq!(pats[0].max_size(), 1);
        assert!(pats
            .iter()
            .all(|p| matches!(p.kind, PatternKind::SkipGram { .. })));
    }
}
