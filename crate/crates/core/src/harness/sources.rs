//! Clean sources for synthetic experiments.

use std::path::PathBuf;

use rand::Rng;
use serde::{Deserialize, Serialize};

use super::image::test_image;
use crate::error::{Error, Result};
use crate::io::Image;
use crate::rng::SeedStream;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case", tag = "kind")]
pub enum SourceSpec {
    Constant { value: f64 },
    /// iid draws: `high` with probability `p`, else `low`.
    TwoPoint { low: f64, high: f64, p: f64 },
    /// The pattern repeated to length n.
    Periodic { pattern: Vec<f64> },
    /// Stays on its state, jumping to a uniformly chosen other state with
    /// probability `switch`.
    MarkovChain { states: Vec<f64>, switch: f64 },
    ImageFile { path: PathBuf },
    /// Built-in 64x64 synthetic crop.
    TestImage,
}

/// A clean signal: a sequence or a raster.
#[derive(Debug, Clone, PartialEq)]
pub enum CleanSignal {
    Sequence(Vec<f64>),
    Image(Image),
}

impl CleanSignal {
    pub fn values(&self) -> &[f64] {
        match self {
            CleanSignal::Sequence(v) => v,
            CleanSignal::Image(img) => &img.pixels,
        }
    }
}

impl SourceSpec {
    pub fn is_image(&self) -> bool {
        matches!(self, SourceSpec::ImageFile { .. } | SourceSpec::TestImage)
    }

    pub fn validate(&self, lo: f64, hi: f64) -> Result<()> {
        let inside = |v: f64| v >= lo && v <= hi;
        let bad = |what: &str| Err(Error::Config(format!("{what} outside the clean range [{lo}, {hi}]")));
        match self {
            SourceSpec::Constant { value } if !inside(*value) => bad("constant value"),
            SourceSpec::TwoPoint { low, high, p } => {
                if !inside(*low) || !inside(*high) {
                    return bad("two-point values");
                }
                if !(0.0..=1.0).contains(p) {
                    return Err(Error::Config(format!("two-point probability {p} outside [0, 1]")));
                }
                Ok(())
            }
            SourceSpec::Periodic { pattern } | SourceSpec::MarkovChain { states: pattern, .. } => {
                if pattern.is_empty() {
                    return Err(Error::Config("source needs at least one value".into()));
                }
                if pattern.iter().any(|v| !inside(*v)) {
                    return bad("source value");
                }
                if let SourceSpec::MarkovChain { switch, .. } = self {
                    if !(0.0..=1.0).contains(switch) {
                        return Err(Error::Config(format!("switch probability {switch} outside [0, 1]")));
                    }
                }
                Ok(())
            }
            SourceSpec::ImageFile { path } if !path.is_file() => {
                Err(Error::Config(format!("image file {} does not exist", path.display())))
            }
            _ => Ok(()),
        }
    }

    /// Clean signal of length `n`; images ignore `n`.
    pub fn generate(&self, n: usize, seeds: SeedStream) -> Result<CleanSignal> {
        let mut rng = seeds.rng(n as u64);
        Ok(CleanSignal::Sequence(match self {
            SourceSpec::Constant { value } => vec![*value; n],
            SourceSpec::TwoPoint { low, high, p } => {
                (0..n).map(|_| if rng.random::<f64>() < *p { *high } else { *low }).collect()
            }
            SourceSpec::Periodic { pattern } => pattern.iter().cycle().take(n).cloned().collect(),
            SourceSpec::MarkovChain { states, switch } => {
                let mut s = 0usize;
                (0..n)
                    .map(|_| {
                        if states.len() > 1 && rng.random::<f64>() < *switch {
                            s = (s + rng.random_range(1..states.len())) % states.len();
                        }
                        states[s]
                    })
                    .collect()
            }
            SourceSpec::ImageFile { path } => return Ok(CleanSignal::Image(Image::load(path)?)),
            SourceSpec::TestImage => return Ok(CleanSignal::Image(test_image())),
        }))
    }
}
