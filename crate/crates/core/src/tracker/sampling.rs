use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use super::bbox::{iou, BBox};
use crate::error::{Error, Result};

/// Gaussian candidate generator around the previous target box.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ParticleConfig {
    pub count: usize,
    /// Translation std as a fraction of `mean(w, h)`.
    pub translation_std: f64,
    /// Std of the log-scale exponent `s`; both axes scale by `scale_base^s`.
    pub scale_std: f64,
    pub scale_base: f64,
}

impl Default for ParticleConfig {
    fn default() -> Self {
        ParticleConfig {
            count: 300,
            translation_std: 0.3,
            scale_std: 0.5,
            scale_base: 1.05,
        }
    }
}

impl ParticleConfig {
    pub fn validate(&self) -> Result<()> {
        if self.count == 0 {
            return Err(Error::Config("particle count must be >= 1".into()));
        }
        if !(self.translation_std >= 0.0 && self.scale_std >= 0.0) {
            return Err(Error::Config("particle stds must be >= 0".into()));
        }
        if !(self.scale_base > 0.0) {
            return Err(Error::Config("scale base must be positive".into()));
        }
        Ok(())
    }
}

/// Smallest extent a sampled box may shrink to.
pub const MIN_EXTENT: f64 = 1.0;

fn gaussian_jitter<R: Rng + ?Sized>(prev: &BBox, t_std: f64, s_std: f64, base: f64, rng: &mut R) -> BBox {
    let zx: f64 = rng.sample(StandardNormal);
    let zy: f64 = rng.sample(StandardNormal);
    let zs: f64 = rng.sample(StandardNormal);
    let size = 0.5 * (prev.w + prev.h);
    let (dx, dy) = (zx * t_std * size, zy * t_std * size);
    let factor = base.powf(zs * s_std);
    let w = (prev.w * factor).max(MIN_EXTENT);
    let h = (prev.h * factor).max(MIN_EXTENT);
    // Centre-preserving rescale; zero noise reproduces `prev` exactly.
    BBox::new(prev.x + dx - (w - prev.w) / 2.0, prev.y + dy - (h - prev.h) / 2.0, w, h)
}

/// `cfg.count` candidates around `prev`.
pub fn sample_candidates<R: Rng + ?Sized>(prev: &BBox, cfg: &ParticleConfig, rng: &mut R) -> Vec<BBox> {
    (0..cfg.count)
        .map(|_| gaussian_jitter(prev, cfg.translation_std, cfg.scale_std, cfg.scale_base, rng))
        .collect()
}

/// IoU rules for labelling collected samples.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SampleThresholds {
    /// Positive when IoU ≥ this.
    pub positive: f64,
    /// Negative when IoU ≤ this.
    pub negative: f64,
}

impl Default for SampleThresholds {
    fn default() -> Self {
        SampleThresholds {
            positive: 0.7,
            negative: 0.3,
        }
    }
}

impl SampleThresholds {
    pub fn is_positive(&self, overlap: f64) -> bool {
        overlap >= self.positive
    }

    pub fn is_negative(&self, overlap: f64) -> bool {
        overlap <= self.negative
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SampleCounts {
    pub positives: usize,
    pub negatives: usize,
}

/// Rejection sampling gives up after this many draws per requested sample.
pub const ATTEMPTS_PER_SAMPLE: usize = 50;

fn rejection<R: Rng + ?Sized>(
    label: &'static str,
    wanted: usize,
    rng: &mut R,
    mut draw: impl FnMut(&mut R, usize) -> BBox,
    accept: impl Fn(&BBox) -> bool,
) -> Result<Vec<BBox>> {
    let cap = wanted * ATTEMPTS_PER_SAMPLE;
    let mut out = Vec::with_capacity(wanted);
    let mut attempts = 0;
    while out.len() < wanted {
        if attempts == cap {
            return Err(Error::SamplingExhausted {
                label,
                wanted,
                got: out.len(),
                attempts,
            });
        }
        let b = draw(rng, attempts);
        attempts += 1;
        if b.is_valid() && accept(&b) {
            out.push(b);
        }
    }
    Ok(out)
}

/// Positive jitter: translation std 0.1·size, scale `1.05^(0.5·z)`.
const POS_TRANSLATION: f64 = 0.1;
const POS_SCALE: f64 = 0.5;

/// Draws labelled training boxes around `bbox`. Positives are Gaussian
/// jitters; negatives alternate between a local uniform neighbourhood and
/// uniform positions over the whole frame.
pub fn collect_training_samples<R: Rng + ?Sized>(
    frame_size: (usize, usize),
    bbox: &BBox,
    counts: SampleCounts,
    thresholds: &SampleThresholds,
    rng: &mut R,
) -> Result<(Vec<BBox>, Vec<BBox>)> {
    if !bbox.is_valid() {
        return Err(Error::Geometry(format!("invalid sampling box {bbox:?}")));
    }
    let (fw, fh) = (frame_size.0 as f64, frame_size.1 as f64);
    let positives = rejection(
        "positive",
        counts.positives,
        rng,
        |rng, _| gaussian_jitter(bbox, POS_TRANSLATION, POS_SCALE, 1.05, rng),
        |b| thresholds.is_positive(iou(b, bbox)),
    )?;
    let negatives = rejection(
        "negative",
        counts.negatives,
        rng,
        |rng, attempt| {
            let s: f64 = rng.random_range(-1.0..=1.0);
            let factor = 1.05f64.powf(s);
            let (w, h) = ((bbox.w * factor).max(MIN_EXTENT), (bbox.h * factor).max(MIN_EXTENT));
            if attempt % 2 == 0 {
                let (cx, cy) = bbox.center();
                let dx = rng.random_range(-1.0..=1.0) * bbox.w;
                let dy = rng.random_range(-1.0..=1.0) * bbox.h;
                BBox::from_center(cx + dx, cy + dy, w, h)
            } else {
                let x = rng.random_range(0.0..=(fw - w).max(0.0));
                let y = rng.random_range(0.0..=(fh - h).max(0.0));
                BBox::new(x, y, w, h)
            }
        },
        |b| thresholds.is_negative(iou(b, bbox)),
    )?;
    Ok((positives, negatives))
}

/// Boxes for fitting the regressor: wider jitter, accepted at IoU ≥ `min_iou`.
pub fn regression_samples<R: Rng + ?Sized>(bbox: &BBox, count: usize, min_iou: f64, rng: &mut R) -> Result<Vec<BBox>> {
    rejection(
        "regression",
        count,
        rng,
        |rng, _| gaussian_jitter(bbox, 0.3, 2.0, 1.05, rng),
        |b| iou(b, bbox) >= min_iou,
    )
}
