//! Context functions: fixed maps from side information to a context id that
//! selects a weight row.
//!
//! Side information is a slice of reals. Binary readers (skip-gram, max-pool,
//! distance) treat a value as active when it is at least one half.
//! Multi-bit contexts encode their bits big-endian in declaration order.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::math::dot;
use crate::rng::RandomSource;

mod patterns;

pub use patterns::{
    parse_presets, render_presets, ContextPattern, ImageGeometry, PatternKind, PixelOffset,
    DEFAULT_PRESETS,
};

/// Side information handed to context functions.
pub type SideInfo<'a> = &'a [f64];

#[inline]
fn active(v: f64) -> bool {
    v >= 0.5
}

fn check_index(index: usize, z: SideInfo<'_>) -> Result<()> {
    if index < z.len() {
        Ok(())
    } else {
        Err(Error::IndexOutOfBounds {
            index,
            len: z.len(),
        })
    }
}

/// Indicator of the half-space `{z : z . normal >= offset}`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HalfSpaceContext {
    normal: Vec<f64>,
    offset: f64,
}

impl HalfSpaceContext {
    pub fn new(normal: Vec<f64>, offset: f64) -> Self {
        HalfSpaceContext { normal, offset }
    }

    pub fn normal(&self) -> &[f64] {
        &self.normal
    }

    pub fn offset(&self) -> f64 {
        self.offset
    }

    #[inline]
    pub fn eval(&self, z: SideInfo<'_>) -> usize {
        usize::from(dot(&self.normal, z) >= self.offset)
    }
}

/// Evaluate a half-space context, checking dimensions.
pub fn eval_halfspace(ctx: &HalfSpaceContext, z: SideInfo<'_>) -> Result<usize> {
    if z.len() != ctx.normal.len() {
        return Err(Error::Dimension {
            what: "half-space side information",
            expected: ctx.normal.len(),
            got: z.len(),
        });
    }
    Ok(ctx.eval(z))
}

/// Draws a half-space with `normal ~ N(0, sigma_normal^2)^dim` and
/// `offset ~ N(0, sigma_offset^2)`, in that order.
pub fn sample_halfspace(
    rng: &mut RandomSource,
    dim: usize,
    sigma_normal: f64,
    sigma_offset: f64,
) -> Result<HalfSpaceContext> {
    if !(sigma_normal >= 0.0 && sigma_offset >= 0.0) {
        return Err(Error::config(
            "half-space standard deviations must be non-negative",
        ));
    }
    let normal = (0..dim).map(|_| sigma_normal * rng.normal()).collect();
    let offset = sigma_offset * rng.normal();
    Ok(HalfSpaceContext::new(normal, offset))
}

/// Reads the listed binary coordinates as a big-endian number.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SkipGramContext {
    indices: Vec<usize>,
}

impl SkipGramContext {
    pub fn new(indices: Vec<usize>) -> Result<Self> {
        if indices.len() > 24 {
            return Err(Error::config(
                "skip-gram contexts are limited to 24 coordinates",
            ));
        }
        Ok(SkipGramContext { indices })
    }

    pub fn indices(&self) -> &[usize] {
        &self.indices
    }

    pub fn size(&self) -> usize {
        1 << self.indices.len()
    }

    #[inline]
    pub fn eval(&self, z: SideInfo<'_>) -> usize {
        self.indices
            .iter()
            .fold(0, |acc, &i| (acc << 1) | usize::from(active(z[i])))
    }
}

pub fn eval_skipgram(ctx: &SkipGramContext, z: SideInfo<'_>) -> Result<usize> {
    for &i in &ctx.indices {
        check_index(i, z)?;
    }
    Ok(ctx.eval(z))
}

/// Mixed-radix composition `sum_i c_i(z) * prod_{j > i} |C_j|`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ComposedContext {
    parts: Vec<ContextFunction>,
    size: usize,
}

impl ComposedContext {
    pub fn new(parts: Vec<ContextFunction>) -> Result<Self> {
        let size = parts
            .iter()
            .try_fold(1usize, |acc, p| acc.checked_mul(p.size()));
        match size {
            Some(size) if size <= 1 << 24 => Ok(ComposedContext { parts, size }),
            _ => Err(Error::config("composed context space is too large")),
        }
    }

    pub fn parts(&self) -> &[ContextFunction] {
        &self.parts
    }

    #[inline]
    pub fn eval(&self, z: SideInfo<'_>) -> usize {
        self.parts
            .iter()
            .fold(0, |acc, p| acc * p.size() + p.eval(z))
    }
}

pub fn compose(parts: &[ContextFunction], z: SideInfo<'_>) -> Result<usize> {
    let mut acc = 0usize;
    for p in parts {
        acc = acc
            .checked_mul(p.size())
            .ok_or_else(|| Error::config("composed context space is too large"))?
            + p.try_eval(z)?;
    }
    Ok(acc)
}

fn check_causal(pixel: usize, cursor: usize) -> Result<()> {
    if pixel < cursor {
        Ok(())
    } else {
        Err(Error::NonCausal { pixel, cursor })
    }
}

/// One bit per region: the max of the region's binary pixels. Regions refer to
/// pixels strictly before `cursor`; an empty region always reads zero.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(try_from = "RawMaxPool")]
pub struct MaxPoolContext {
    cursor: usize,
    regions: Vec<Vec<usize>>,
}

impl MaxPoolContext {
    pub fn new(cursor: usize, regions: Vec<Vec<usize>>) -> Result<Self> {
        if regions.len() > 24 {
            return Err(Error::config("max-pool contexts are limited to 24 regions"));
        }
        for &p in regions.iter().flatten() {
            check_causal(p, cursor)?;
        }
        Ok(MaxPoolContext { cursor, regions })
    }

    pub fn cursor(&self) -> usize {
        self.cursor
    }

    pub fn regions(&self) -> &[Vec<usize>] {
        &self.regions
    }

    pub fn size(&self) -> usize {
        1 << self.regions.len()
    }

    #[inline]
    pub fn eval(&self, z: SideInfo<'_>) -> usize {
        self.regions.iter().fold(0, |acc, region| {
            (acc << 1) | usize::from(region.iter().any(|&i| active(z[i])))
        })
    }
}

#[derive(Deserialize)]
struct RawMaxPool {
    cursor: usize,
    regions: Vec<Vec<usize>>,
}

impl TryFrom<RawMaxPool> for MaxPoolContext {
    type Error = Error;

    fn try_from(raw: RawMaxPool) -> Result<Self> {
        MaxPoolContext::new(raw.cursor, raw.regions)
    }
}

pub fn eval_maxpool(ctx: &MaxPoolContext, image: SideInfo<'_>) -> Result<usize> {
    for &p in ctx.regions.iter().flatten() {
        check_index(p, image)?;
    }
    Ok(ctx.eval(image))
}

/// Index (1-based) of the first active probe, or 0 when none is active. Probes
/// that fall outside the image are `None` and never fire.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(try_from = "RawDistance")]
pub struct DistanceContext {
    cursor: usize,
    probes: Vec<Option<usize>>,
}

impl DistanceContext {
    pub fn new(cursor: usize, probes: Vec<Option<usize>>) -> Result<Self> {
        for &p in probes.iter().flatten() {
            check_causal(p, cursor)?;
        }
        Ok(DistanceContext { cursor, probes })
    }

    pub fn cursor(&self) -> usize {
        self.cursor
    }

    pub fn probes(&self) -> &[Option<usize>] {
        &self.probes
    }

    pub fn size(&self) -> usize {
        self.probes.len() + 1
    }

    #[inline]
    pub fn eval(&self, z: SideInfo<'_>) -> usize {
        self.probes
            .iter()
            .position(|p| p.is_some_and(|i| active(z[i])))
            .map_or(0, |k| k + 1)
    }
}

#[derive(Deserialize)]
struct RawDistance {
    cursor: usize,
    probes: Vec<Option<usize>>,
}

impl TryFrom<RawDistance> for DistanceContext {
    type Error = Error;

    fn try_from(raw: RawDistance) -> Result<Self> {
        DistanceContext::new(raw.cursor, raw.probes)
    }
}

pub fn eval_distance(ctx: &DistanceContext, image: SideInfo<'_>) -> Result<usize> {
    for &p in ctx.probes.iter().flatten() {
        check_index(p, image)?;
    }
    Ok(ctx.eval(image))
}

/// A context function of any supported family.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ContextFunction {
    /// Single context: gating is switched off.
    Constant,
    HalfSpace(HalfSpaceContext),
    SkipGram(SkipGramContext),
    Composed(ComposedContext),
    MaxPool(MaxPoolContext),
    Distance(DistanceContext),
}

impl ContextFunction {
    /// Number of context ids this function can return.
    pub fn size(&self) -> usize {
        match self {
            ContextFunction::Constant => 1,
            ContextFunction::HalfSpace(_) => 2,
            ContextFunction::SkipGram(c) => c.size(),
            ContextFunction::Composed(c) => c.size,
            ContextFunction::MaxPool(c) => c.size(),
            ContextFunction::Distance(c) => c.size(),
        }
    }

    /// Evaluate without bounds validation. Callers validate `z` once with
    /// [`ContextFunction::validate`] or use [`ContextFunction::try_eval`].
    #[inline]
    pub fn eval(&self, z: SideInfo<'_>) -> usize {
        match self {
            ContextFunction::Constant => 0,
            ContextFunction::HalfSpace(c) => c.eval(z),
            ContextFunction::SkipGram(c) => c.eval(z),
            ContextFunction::Composed(c) => c.eval(z),
            ContextFunction::MaxPool(c) => c.eval(z),
            ContextFunction::Distance(c) => c.eval(z),
        }
    }

    /// Checks that `z` has the shape this function reads.
    pub fn validate(&self, z: SideInfo<'_>) -> Result<()> {
        match self {
            ContextFunction::Constant => Ok(()),
            ContextFunction::HalfSpace(c) => eval_halfspace(c, z).map(drop),
            ContextFunction::SkipGram(c) => eval_skipgram(c, z).map(drop),
            ContextFunction::Composed(c) => c.parts.iter().try_for_each(|p| p.validate(z)),
            ContextFunction::MaxPool(c) => eval_maxpool(c, z).map(drop),
            ContextFunction::Distance(c) => eval_distance(c, z).map(drop),
        }
    }

    /// Checked evaluation: every shape and causality check of [`validate`](Self::validate),
    /// evaluating the function once.
    pub fn try_eval(&self, z: SideInfo<'_>) -> Result<usize> {
        match self {
            ContextFunction::Constant => Ok(0),
            ContextFunction::HalfSpace(c) => eval_halfspace(c, z),
            ContextFunction::SkipGram(c) => eval_skipgram(c, z),
            ContextFunction::Composed(c) => compose(&c.parts, z),
            ContextFunction::MaxPool(c) => eval_maxpool(c, z),
            ContextFunction::Distance(c) => eval_distance(c, z),
        }
    }

    /// Composition of `bits` independently sampled half-spaces (`2^bits` contexts).
    pub fn sample_halfspaces(
        rng: &mut RandomSource,
        dim: usize,
        bits: usize,
        sigma_normal: f64,
        sigma_offset: f64,
    ) -> Result<ContextFunction> {
        if bits == 0 {
            return Ok(ContextFunction::Constant);
        }
        let parts = (0..bits)
            .map(|_| {
                sample_halfspace(rng, dim, sigma_normal, sigma_offset)
                    .map(ContextFunction::HalfSpace)
            })
            .collect::<Result<Vec<_>>>()?;
        if bits == 1 {
            return Ok(parts.into_iter().next().expect("one part"));
        }
        Ok(ContextFunction::Composed(ComposedContext::new(parts)?))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn hs(v: &[f64], b: f64) -> ContextFunction {
        ContextFunction::HalfSpace(HalfSpaceContext::new(v.to_vec(), b))
    }

    #[test]
    fn halfspace_examples() {
        let c = HalfSpaceContext::new(vec![1.0, 0.0], 0.0);
        assert_eq!(eval_halfspace(&c, &[3.0, -5.0]).unwrap(), 1);
        assert_eq!(eval_halfspace(&c, &[-1.0, 7.0]).unwrap(), 0);
        let r = 0.5f64.sqrt();
        let c = HalfSpaceContext::new(vec![r, r], 1.0);
        assert_eq!(eval_halfspace(&c, &[1.0, 1.0]).unwrap(), 1);
        assert!(matches!(
            eval_halfspace(&c, &[1.0]),
            Err(Error::Dimension { .. })
        ));
    }

    #[test]
    fn halfspace_boundary_is_inclusive() {
        let c = HalfSpaceContext::new(vec![2.0], 1.0);
        assert_eq!(c.eval(&[0.5]), 1);
    }

    #[test]
    fn skipgram_examples() {
        let z = [0.0, 1.0, 0.0, 1.0, 0.0];
        let c = SkipGramContext::new(vec![3]).unwrap();
        assert_eq!(eval_skipgram(&c, &z).unwrap(), 1);
        let c = SkipGramContext::new(vec![0, 1]).unwrap();
        assert_eq!(eval_skipgram(&c, &[1.0, 0.0, 0.0]).unwrap(), 2);
        assert_eq!(eval_skipgram(&c, &[0.0, 0.0, 0.0]).unwrap(), 0);
        assert_eq!(c.size(), 4);
        let c = SkipGramContext::new(vec![7]).unwrap();
        assert!(matches!(
            eval_skipgram(&c, &z),
            Err(Error::IndexOutOfBounds { index: 7, len: 5 })
        ));
    }

    #[test]
    fn skipgram_thresholds_real_values() {
        let c = SkipGramContext::new(vec![0, 1, 2]).unwrap();
        assert_eq!(c.eval(&[0.49, 0.5, 0.93]), 0b011);
    }

    #[test]
    fn compose_examples() {
        let parts: Vec<_> = (0..4).map(|i| hs(&[1.0], i as f64)).collect();
        let c = ComposedContext::new(parts).unwrap();
        assert_eq!(ContextFunction::Composed(c.clone()).size(), 16);
        assert_eq!(c.eval(&[-10.0]), 0);

        let parts = vec![
            hs(&[1.0, 0.0, 0.0], 0.0),
            hs(&[0.0, 1.0, 0.0], 0.0),
            hs(&[0.0, 0.0, 1.0], 0.0),
        ];
        assert_eq!(compose(&parts, &[1.0, -1.0, 1.0]).unwrap(), 5);
        assert_eq!(
            ComposedContext::new(parts).unwrap().eval(&[1.0, -1.0, 1.0]),
            5
        );
    }

    #[test]
    fn compose_is_a_bijection() {
        // Sizes (2, 3, 2): a half-space, a 3-way distance context, a half-space.
        let parts = vec![
            hs(&[1.0, 0.0, 0.0, 0.0], 0.5),
            ContextFunction::Distance(DistanceContext::new(4, vec![Some(1), Some(2)]).unwrap()),
            hs(&[0.0, 0.0, 0.0, 1.0], 0.5),
        ];
        let composed = ComposedContext::new(parts.clone()).unwrap();
        assert_eq!(composed.size, 12);
        let mut seen = std::collections::HashMap::new();
        for a in 0..2 {
            for d in 0..3 {
                for c in 0..2 {
                    let mut z = [0.0; 4];
                    z[0] = a as f64;
                    if d == 1 {
                        z[1] = 1.0;
                    } else if d == 2 {
                        z[2] = 1.0;
                    }
                    z[3] = c as f64;
                    let tuple: Vec<usize> = parts.iter().map(|p| p.eval(&z)).collect();
                    assert_eq!(tuple, vec![a, d, c]);
                    let id = composed.eval(&z);
                    assert!(id < 12);
                    assert_eq!(id, a * 6 + d * 2 + c);
                    assert!(seen.insert(id, (a, d, c)).is_none());
                }
            }
        }
        assert_eq!(seen.len(), 12);
    }

    #[test]
    fn maxpool_examples() {
        let image = vec![0.0; 10];
        let c = MaxPoolContext::new(9, vec![vec![0, 1], vec![2, 3]]).unwrap();
        assert_eq!(eval_maxpool(&c, &image).unwrap(), 0);
        let mut image = image;
        image[1] = 1.0;
        assert_eq!(eval_maxpool(&c, &image).unwrap(), 2);
        let c = MaxPoolContext::new(9, vec![vec![1], vec![1, 4], vec![0, 1]]).unwrap();
        assert_eq!(c.eval(&image), 7);
        assert!(matches!(
            MaxPoolContext::new(3, vec![vec![1, 3]]),
            Err(Error::NonCausal {
                pixel: 3,
                cursor: 3
            })
        ));
    }

    #[test]
    fn distance_examples() {
        let probes: Vec<_> = (0..5).map(Some).collect();
        let c = DistanceContext::new(6, probes).unwrap();
        assert_eq!(c.size(), 6);
        let mut image = vec![0.0; 8];
        assert_eq!(eval_distance(&c, &image).unwrap(), 0);
        image[2] = 1.0;
        image[4] = 1.0;
        assert_eq!(c.eval(&image), 3);
        image[0] = 1.0;
        assert_eq!(c.eval(&image), 1);
        assert!(DistanceContext::new(2, vec![Some(1), Some(2)]).is_err());
    }

    #[test]
    fn distance_skips_missing_probes() {
        let c = DistanceContext::new(5, vec![None, Some(3)]).unwrap();
        assert_eq!(c.eval(&[1.0, 1.0, 1.0, 1.0, 1.0]), 2);
    }

    #[test]
    fn sample_halfspace_is_deterministic() {
        let a = sample_halfspace(&mut RandomSource::new(5), 2, 6.0, 3.0).unwrap();
        let b = sample_halfspace(&mut RandomSource::new(5), 2, 6.0, 3.0).unwrap();
        assert_eq!(a, b);
        let m = sample_halfspace(&mut RandomSource::new(5), 784, 0.1, 0.0).unwrap();
        assert_eq!(m.normal().len(), 784);
        assert_eq!(m.offset(), 0.0);
        assert!(sample_halfspace(&mut RandomSource::new(5), 2, -1.0, 0.0).is_err());
    }

    #[test]
    fn sampled_halfspace_scales() {
        let mut rng = RandomSource::new(12);
        let mut sum_sq = 0.0;
        let mut off_sq = 0.0;
        let n = 4000;
        for _ in 0..n {
            let c = sample_halfspace(&mut rng, 2, 6.0, 3.0).unwrap();
            sum_sq += c.normal().iter().map(|v| v * v).sum::<f64>() / 2.0;
            off_sq += c.offset() * c.offset();
        }
        assert!((sum_sq / n as f64 - 36.0).abs() < 3.0);
        assert!((off_sq / n as f64 - 9.0).abs() < 0.8);
    }

    #[test]
    fn contexts_are_pure() {
        let mut rng = RandomSource::new(77);
        let c = ContextFunction::sample_halfspaces(&mut rng, 5, 3, 1.0, 0.5).unwrap();
        assert_eq!(c.size(), 8);
        let z = [0.3, -0.2, 0.9, 1.1, -0.7];
        let first = c.eval(&z);
        for _ in 0..1000 {
            assert_eq!(c.eval(&z), first);
        }
    }

    #[test]
    fn deserialization_rechecks_causality() {
        let bad = r#"{"kind":"max_pool","cursor":2,"regions":[[0,2]]}"#;
        assert!(serde_json::from_str::<ContextFunction>(bad).is_err());
        let bad = r#"{"kind":"distance","cursor":1,"probes":[5]}"#;
        assert!(serde_json::from_str::<ContextFunction>(bad).is_err());
    }

    #[test]
    fn serde_round_trip() {
        let c = ContextFunction::Composed(
            ComposedContext::new(vec![
                hs(&[0.1, -0.25], 0.3),
                ContextFunction::SkipGram(SkipGramContext::new(vec![0, 1]).unwrap()),
                ContextFunction::MaxPool(
                    MaxPoolContext::new(3, vec![vec![0], vec![1, 2]]).unwrap(),
                ),
                ContextFunction::Distance(DistanceContext::new(3, vec![None, Some(2)]).unwrap()),
                ContextFunction::Constant,
            ])
            .unwrap(),
        );
        let json = serde_json::to_string(&c).unwrap();
        let back: ContextFunction = serde_json::from_str(&json).unwrap();
        assert_eq!(back, c);
    }
}
