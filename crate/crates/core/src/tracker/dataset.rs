use rand::Rng;

use super::sampling::{collect_training_samples, SampleCounts, SampleThresholds};
use crate::error::{Error, Result};
use crate::io::{crop_resize_patch, Sequence};
use crate::model::{DomainDataset, Sanet};
use crate::scalar::Scalar;

/// Labelled, normalised patches from `frames` evenly spaced frames of a
/// fully annotated sequence.
pub fn domain_dataset<T: Scalar, R: Rng + ?Sized>(
    net: &Sanet<T>,
    seq: &Sequence,
    frames: usize,
    counts: SampleCounts,
    thresholds: &SampleThresholds,
    rng: &mut R,
) -> Result<DomainDataset<T>> {
    if !seq.has_full_groundtruth() {
        return Err(Error::Config(format!(
            "sequence {:?} needs ground truth on every frame for training",
            seq.name
        )));
    }
    let n = seq.len();
    let frames = frames.clamp(1, n);
    let size = net.config().input_size;
    let mut data = DomainDataset::default();
    for i in 0..frames {
        let f = i * n / frames;
        let img = &seq.frames[f];
        let gt = &seq.groundtruth[f];
        let (pos, neg) = collect_training_samples((img.width(), img.height()), gt, counts, thresholds, rng)?;
        for (boxes, out) in [(pos, &mut data.positives), (neg, &mut data.negatives)] {
            for b in boxes {
                out.push(net.normalize_patch(&crop_resize_patch(img, &b, size)?));
            }
        }
    }
    Ok(data)
}
