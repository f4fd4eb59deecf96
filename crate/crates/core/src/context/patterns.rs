//! Pixel patterns for image contexts, expressed as offsets relative to the
//! current pixel and instantiated per pixel position.
//!
//! Preset file format (version 1), one entry per line:
//!
//! ```text
//! # comment
//! format = gln-context-presets
//! version = 1
//! skipgram.<name> = dr,dc dr,dc ...
//! maxpool.<name>  = dr,dc dr,dc | dr,dc ...      # '|' separates regions
//! distance.<name> = dr,dc dr,dc ...              # probe order 1..L
//! ```
//!
//! Offsets must be causal in row-major order: `dr < 0`, or `dr == 0` and
//! `dc < 0`. Offsets that land outside the image are dropped when a pattern
//! is instantiated (they read as inactive pixels).

use std::fmt::{self, Write as _};

use serde::{Deserialize, Serialize};

use super::{ContextFunction, DistanceContext, MaxPoolContext, SkipGramContext};
use crate::error::{Error, Result};
use crate::rng::RandomSource;

/// The preset library shipped with the crate.
pub const DEFAULT_PRESETS: &str = include_str!("../../presets/contexts.txt");

const FORMAT_TAG: &str = "gln-context-presets";
const FORMAT_VERSION: u32 = 1;

/// Row/column offset from the current pixel.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct PixelOffset {
    pub dr: i32,
    pub dc: i32,
}

impl PixelOffset {
    pub fn new(dr: i32, dc: i32) -> Self {
        PixelOffset { dr, dc }
    }

    /// Strictly before the current pixel in row-major order.
    pub fn is_causal(self) -> bool {
        self.dr < 0 || (self.dr == 0 && self.dc < 0)
    }
}

impl fmt::Display for PixelOffset {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{},{}", self.dr, self.dc)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ImageGeometry {
    pub rows: usize,
    pub cols: usize,
}

impl ImageGeometry {
    pub const MNIST: ImageGeometry = ImageGeometry { rows: 28, cols: 28 };

    pub fn pixels(self) -> usize {
        self.rows * self.cols
    }

    /// Absolute index of `offset` applied at `cursor`, if it lies inside the image.
    pub fn resolve(self, cursor: usize, offset: PixelOffset) -> Option<usize> {
        let r = (cursor / self.cols) as i64 + i64::from(offset.dr);
        let c = (cursor % self.cols) as i64 + i64::from(offset.dc);
        if r < 0 || c < 0 || r >= self.rows as i64 || c >= self.cols as i64 {
            None
        } else {
            Some(r as usize * self.cols + c as usize)
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum PatternKind {
    SkipGram { offsets: Vec<PixelOffset> },
    MaxPool { regions: Vec<Vec<PixelOffset>> },
    Distance { probes: Vec<PixelOffset> },
}

impl PatternKind {
    fn prefix(&self) -> &'static str {
        match self {
            PatternKind::SkipGram { .. } => "skipgram",
            PatternKind::MaxPool { .. } => "maxpool",
            PatternKind::Distance { .. } => "distance",
        }
    }

    fn offsets(&self) -> Box<dyn Iterator<Item = &PixelOffset> + '_> {
        match self {
            PatternKind::SkipGram { offsets } => Box::new(offsets.iter()),
            PatternKind::MaxPool { regions } => Box::new(regions.iter().flatten()),
            PatternKind::Distance { probes } => Box::new(probes.iter()),
        }
    }
}

/// A named relative pattern.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ContextPattern {
    pub name: String,
    pub kind: PatternKind,
}

impl ContextPattern {
    pub fn new(name: impl Into<String>, kind: PatternKind) -> Result<Self> {
        let name = name.into();
        if name.is_empty() || name.contains(char::is_whitespace) || name.contains('=') {
            return Err(Error::config(format!("invalid pattern name {name:?}")));
        }
        if let Some(bad) = kind.offsets().find(|o| !o.is_causal()) {
            return Err(Error::config(format!(
                "pattern {name}: offset {bad} is not causal"
            )));
        }
        Ok(ContextPattern { name, kind })
    }

    /// `count` distinct causal offsets drawn uniformly from the window
    /// `dr in [-radius, 0]`, `dc in [-radius, radius]`, kept in draw order.
    pub fn random_skipgram(
        rng: &mut RandomSource,
        name: impl Into<String>,
        count: usize,
        radius: i32,
    ) -> Result<Self> {
        let window: Vec<PixelOffset> = (-radius..=0)
            .flat_map(|dr| (-radius..=radius).map(move |dc| PixelOffset::new(dr, dc)))
            .filter(|o| o.is_causal())
            .collect();
        if count > window.len() {
            return Err(Error::config(format!(
                "cannot draw {count} distinct offsets from a window of {}",
                window.len()
            )));
        }
        let mut pool = window;
        let mut offsets = Vec::with_capacity(count);
        for _ in 0..count {
            let k = rng.below(pool.len());
            offsets.push(pool.swap_remove(k));
        }
        ContextPattern::new(name, PatternKind::SkipGram { offsets })
    }

    /// Absolute-index context function for the pixel at `cursor`.
    pub fn instantiate(&self, geometry: ImageGeometry, cursor: usize) -> Result<ContextFunction> {
        let at = |o: &PixelOffset| geometry.resolve(cursor, *o);
        Ok(match &self.kind {
            PatternKind::SkipGram { offsets } => ContextFunction::SkipGram(SkipGramContext::new(
                offsets.iter().filter_map(at).collect(),
            )?),
            PatternKind::MaxPool { regions } => ContextFunction::MaxPool(MaxPoolContext::new(
                cursor,
                regions
                    .iter()
                    .map(|r| r.iter().filter_map(at).collect())
                    .collect(),
            )?),
            PatternKind::Distance { probes } => ContextFunction::Distance(DistanceContext::new(
                cursor,
                probes.iter().map(at).collect(),
            )?),
        })
    }

    /// Largest context-space size over all pixel positions.
    pub fn max_size(&self) -> usize {
        match &self.kind {
            PatternKind::SkipGram { offsets } => 1 << offsets.len(),
            PatternKind::MaxPool { regions } => 1 << regions.len(),
            PatternKind::Distance { probes } => probes.len() + 1,
        }
    }
}

fn parse_offset(tok: &str, line: usize) -> Result<PixelOffset> {
    let err = || Error::Parse {
        line,
        msg: format!("expected `dr,dc`, found {tok:?}"),
    };
    let (a, b) = tok.split_once(',').ok_or_else(err)?;
    Ok(PixelOffset::new(
        a.trim().parse().map_err(|_| err())?,
        b.trim().parse().map_err(|_| err())?,
    ))
}

fn parse_offsets(s: &str, line: usize) -> Result<Vec<PixelOffset>> {
    s.split_whitespace()
        .map(|t| parse_offset(t, line))
        .collect()
}

/// Parses a preset file.
pub fn parse_presets(text: &str) -> Result<Vec<ContextPattern>> {
    let mut format_seen = false;
    let mut version = None;
    let mut out: Vec<ContextPattern> = Vec::new();
    for (idx, raw) in text.lines().enumerate() {
        let line = idx + 1;
        let content = raw.split('#').next().unwrap_or("").trim();
        if content.is_empty() {
            continue;
        }
        let (key, value) = content.split_once('=').ok_or_else(|| Error::Parse {
            line,
            msg: "expected `key = value`".into(),
        })?;
        let (key, value) = (key.trim(), value.trim());
        match key {
            "format" => {
                if value != FORMAT_TAG {
                    return Err(Error::Parse {
                        line,
                        msg: format!("unknown format {value:?}"),
                    });
                }
                format_seen = true;
                continue;
            }
            "version" => {
                let v: u32 = value.parse().map_err(|_| Error::Parse {
                    line,
                    msg: format!("bad version {value:?}"),
                })?;
                if v != FORMAT_VERSION {
                    return Err(Error::UnsupportedVersion {
                        what: "context preset file",
                        found: v,
                    });
                }
                version = Some(v);
                continue;
            }
            _ => {}
        }
        if !format_seen || version.is_none() {
            return Err(Error::Parse {
                line,
                msg: "`format` and `version` must precede the first pattern".into(),
            });
        }
        let (kind, name) = key.split_once('.').ok_or_else(|| Error::Parse {
            line,
            msg: format!("expected `<kind>.<name>`, found {key:?}"),
        })?;
        let kind = match kind {
            "skipgram" => PatternKind::SkipGram {
                offsets: parse_offsets(value, line)?,
            },
            "maxpool" => PatternKind::MaxPool {
                regions: value
                    .split('|')
                    .map(|r| parse_offsets(r, line))
                    .collect::<Result<_>>()?,
            },
            "distance" => PatternKind::Distance {
                probes: parse_offsets(value, line)?,
            },
            other => {
                return Err(Error::Parse {
                    line,
                    msg: format!("unknown pattern kind {other:?}"),
                })
            }
        };
        if out
            .iter()
            .any(|p| p.name == name && p.kind.prefix() == kind.prefix())
        {
            return Err(Error::Parse {
                line,
                msg: format!("duplicate pattern {key}"),
            });
        }
        let pattern = ContextPattern::new(name, kind).map_err(|e| Error::Parse {
            line,
            msg: e.to_string(),
        })?;
        out.push(pattern);
    }
    if !format_seen || version.is_none() {
        return Err(Error::Parse {
            line: 0,
            msg: "missing `format` or `version` header".into(),
        });
    }
    Ok(out)
}

fn join(offsets: &[PixelOffset]) -> String {
    offsets
        .iter()
        .map(ToString::to_string)
        .collect::<Vec<_>>()
        .join(" ")
}

/// Writes patterns in the preset file format; [`parse_presets`] reads it back.
pub fn render_presets(patterns: &[ContextPattern]) -> String {
    let mut s = format!("format = {FORMAT_TAG}\nversion = {FORMAT_VERSION}\n");
    for p in patterns {
        let body = match &p.kind {
            PatternKind::SkipGram { offsets } => join(offsets),
            PatternKind::MaxPool { regions } => regions
                .iter()
                .map(|r| join(r))
                .collect::<Vec<_>>()
                .join(" | "),
            PatternKind::Distance { probes } => join(probes),
        };
        let _ = writeln!(s, "{}.{} = {}", p.kind.prefix(), p.name, body);
    }
    s
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn default_presets_parse() {
        let presets = parse_presets(DEFAULT_PRESETS).unwrap();
        let count = |prefix| presets.iter().filter(|p| p.kind.prefix() == prefix).count();
        assert!(count("skipgram") >= 10);
        assert!(count("maxpool") >= 4);
        assert!(count("distance") >= 4);
        assert!(presets.iter().all(|p| p.max_size() <= 1 << 12));
    }

    #[test]
    fn presets_round_trip() {
        let presets = parse_presets(DEFAULT_PRESETS).unwrap();
        let again = parse_presets(&render_presets(&presets)).unwrap();
        assert_eq!(presets, again);
    }

    #[test]
    fn rejects_non_causal_offsets() {
        let text = "format = gln-context-presets\nversion = 1\nskipgram.bad = 0,1\n";
        assert!(matches!(
            parse_presets(text),
            Err(Error::Parse { line: 3, .. })
        ));
        let text = "format = gln-context-presets\nversion = 1\ndistance.bad = -1,0 0,0\n";
        assert!(parse_presets(text).is_err());
    }

    #[test]
    fn rejects_bad_headers() {
        assert!(parse_presets("skipgram.w = 0,-1\n").is_err());
        assert!(matches!(
            parse_presets("format = gln-context-presets\nversion = 2\n"),
            Err(Error::UnsupportedVersion { found: 2, .. })
        ));
        assert!(parse_presets("format = other\nversion = 1\n").is_err());
        assert!(
            parse_presets("format = gln-context-presets\nversion = 1\nweird.x = 0,-1\n").is_err()
        );
        assert!(
            parse_presets("format = gln-context-presets\nversion = 1\nskipgram.x = 0;-1\n")
                .is_err()
        );
    }

    #[test]
    fn instantiation_drops_off_image_pixels() {
        let g = ImageGeometry { rows: 4, cols: 4 };
        let p = ContextPattern::new(
            "t",
            PatternKind::SkipGram {
                offsets: vec![PixelOffset::new(0, -1), PixelOffset::new(-1, 0)],
            },
        )
        .unwrap();
        match p.instantiate(g, 0).unwrap() {
            ContextFunction::SkipGram(s) => assert!(s.indices().is_empty()),
            other => panic!("{other:?}"),
        }
        match p.instantiate(g, 5).unwrap() {
            ContextFunction::SkipGram(s) => assert_eq!(s.indices(), &[4, 1]),
            other => panic!("{other:?}"),
        }
        // Column wrap-around is an off-image position, not the previous row.
        match p.instantiate(g, 4).unwrap() {
            ContextFunction::SkipGram(s) => assert_eq!(s.indices(), &[0]),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn instantiated_presets_are_causal_everywhere() {
        let g = ImageGeometry::MNIST;
        for p in parse_presets(DEFAULT_PRESETS).unwrap() {
            for cursor in 0..g.pixels() {
                let c = p.instantiate(g, cursor).unwrap();
                let mut image = vec![0.0; g.pixels()];
                let before = c.eval(&image);
                for v in &mut image[cursor..] {
                    *v = 1.0;
                }
                assert_eq!(c.eval(&image), before, "{} at {cursor}", p.name);
            }
        }
    }

    #[test]
    fn random_skipgrams_are_causal_and_distinct() {
        let mut rng = RandomSource::new(3);
        for i in 0..50 {
            let p = ContextPattern::random_skipgram(&mut rng, format!("r{i}"), 4, 3).unwrap();
            let PatternKind::SkipGram { offsets } = &p.kind else {
                unreachable!()
            };
            assert_eq!(offsets.len(), 4);
            let set: std::collections::HashSet<_> = offsets.iter().collect();
            assert_eq!(set.len(), 4);
        }
        assert!(ContextPattern::random_skipgram(&mut rng, "x", 100, 1).is_err());
    }
}
