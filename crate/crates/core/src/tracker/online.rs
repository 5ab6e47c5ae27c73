use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::bbox::BBox;
use super::regression::RegressionModel;
use super::sampling::{
    collect_training_samples, regression_samples, sample_candidates, ParticleConfig, SampleCounts, SampleThresholds,
};
use super::store::SampleStore;
use super::trajectory::{Trajectory, TrajectoryRecord};
use crate::error::{Error, Result};
use crate::eval::ReinitTracker;
use crate::io::{crop_resize_patch, Image, Sequence};
use crate::model::{
    head_backward_and_step, sample_indices, select_top_m, MinibatchConfig, OptimConfig, Sanet, Sgd, BACKGROUND, TARGET,
};
use crate::scalar::Scalar;
use crate::tensor::Tensor;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TrackerConfig {
    pub particles: ParticleConfig,
    /// Positive-score threshold gating refinement, collection and updates.
    pub theta: f64,
    pub short_horizon: usize,
    pub long_horizon: usize,
    pub long_update_period: usize,
    pub thresholds: SampleThresholds,
    pub first_frame_samples: SampleCounts,
    pub online_samples: SampleCounts,
    pub first_frame_iterations: usize,
    pub online_iterations: usize,
    pub minibatch: MinibatchConfig,
    /// Learning rate and momentum for head fine-tuning; `lr_cnn` applies.
    pub optim: OptimConfig,
    pub refine: bool,
    /// Regressor training boxes; `None` means twice the feature length.
    pub regression_samples: Option<usize>,
    pub regression_min_iou: f64,
    pub regression_lambda: f64,
    pub seed: u64,
}

impl Default for TrackerConfig {
    fn default() -> Self {
        TrackerConfig {
            particles: ParticleConfig::default(),
            theta: 0.5,
            short_horizon: 20,
            long_horizon: 100,
            long_update_period: 10,
            thresholds: SampleThresholds::default(),
            first_frame_samples: SampleCounts {
                positives: 500,
                negatives: 5000,
            },
            online_samples: SampleCounts {
                positives: 50,
                negatives: 200,
            },
            first_frame_iterations: 30,
            online_iterations: 10,
            minibatch: MinibatchConfig {
                positives: 32,
                negative_pool: 1024,
                mined: 96,
            },
            optim: OptimConfig {
                lr_cnn: 1e-3,
                ..OptimConfig::default()
            },
            refine: true,
            regression_samples: None,
            regression_min_iou: 0.6,
            regression_lambda: 1.0,
            seed: 0,
        }
    }
}

impl TrackerConfig {
    /// Smaller sample counts for the tiny network.
    pub fn tiny() -> Self {
        TrackerConfig {
            first_frame_samples: SampleCounts {
                positives: 100,
                negatives: 400,
            },
            online_samples: SampleCounts {
                positives: 20,
                negatives: 60,
            },
            minibatch: MinibatchConfig {
                positives: 16,
                negative_pool: 128,
                mined: 32,
            },
            optim: OptimConfig {
                lr_cnn: 1e-2,
                ..OptimConfig::default()
            },
            ..TrackerConfig::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.particles.validate()?;
        if !(self.theta > 0.0 && self.theta < 1.0) {
            return Err(Error::Config(format!("theta must lie in (0, 1), got {}", self.theta)));
        }
        if self.short_horizon == 0 || self.short_horizon > self.long_horizon {
            return Err(Error::Config("horizons must satisfy 1 <= short <= long".into()));
        }
        if self.long_update_period == 0 {
            return Err(Error::Config("long update period must be >= 1".into()));
        }
        if self.minibatch.mined > self.minibatch.negative_pool {
            return Err(Error::Config("mined negatives exceed the negative pool".into()));
        }
        if self.first_frame_samples.positives == 0 || self.first_frame_samples.negatives == 0 {
            return Err(Error::Config("first frame needs positive and negative samples".into()));
        }
        Ok(())
    }
}

/// Crops, normalises and embeds every box.
pub fn patch_features<T: Scalar>(net: &Sanet<T>, frame: &Image, boxes: &[BBox]) -> Result<Vec<Tensor<T>>> {
    let size = net.config().input_size;
    boxes
        .par_iter()
        .map(|b| {
            let raw = crop_resize_patch::<T>(frame, b, size)?;
            net.features(&net.normalize_patch(&raw))
        })
        .collect()
}

/// Index of the highest score; the lowest index wins ties.
pub fn select_best<T: Scalar>(scores: &[T]) -> Option<usize> {
    let mut best: Option<usize> = None;
    for (i, &s) in scores.iter().enumerate() {
        if best.is_none_or(|b| s > scores[b]) {
            best = Some(i);
        }
    }
    best
}

#[derive(Debug, Clone, PartialEq)]
pub struct Selection {
    pub index: usize,
    pub bbox: BBox,
    pub score: f64,
    pub scores: Vec<f64>,
}

/// Scores every candidate with `branch` and picks the most target-like.
pub fn score_and_select<T: Scalar>(net: &Sanet<T>, frame: &Image, candidates: &[BBox], branch: usize) -> Result<Selection> {
    if candidates.is_empty() {
        return Err(Error::Empty("candidate set".into()));
    }
    let size = net.config().input_size;
    let patches = candidates
        .par_iter()
        .map(|b| crop_resize_patch::<T>(frame, b, size).map(|p| net.normalize_patch(&p)))
        .collect::<Result<Vec<_>>>()?;
    let scores = net.forward_scores(&patches, branch)?.positive;
    let index = select_best(&scores).expect("non-empty");
    Ok(Selection {
        index,
        bbox: candidates[index],
        score: scores[index].as_f64(),
        scores: scores.iter().map(|s| s.as_f64()).collect(),
    })
}

/// One fine-tuning minibatch of feature vectors.
#[derive(Debug, Clone)]
pub struct UpdateBatch<T> {
    pub features: Vec<Tensor<T>>,
    pub labels: Vec<usize>,
    /// Indices into the negatives passed to [`build_update_batch`].
    pub pool: Vec<usize>,
    /// Positions within `pool` of the mined negatives, hardest first.
    pub mined: Vec<usize>,
}

/// Samples positives, draws a negative pool and keeps its hardest members
/// under the current head.
pub fn build_update_batch<T: Scalar, R: Rng + ?Sized>(
    net: &Sanet<T>,
    positives: &[&Tensor<T>],
    negatives: &[&Tensor<T>],
    mb: &MinibatchConfig,
    rng: &mut R,
) -> Result<UpdateBatch<T>> {
    if positives.is_empty() || negatives.is_empty() {
        return Err(Error::Empty("update samples".into()));
    }
    let pos = sample_indices(positives.len(), mb.positives, rng);
    let pool = sample_indices(negatives.len(), mb.negative_pool.min(negatives.len()), rng);
    let pool_feats: Vec<Tensor<T>> = pool.iter().map(|&i| negatives[i].clone()).collect();
    let m = mb.mined.min(pool.len());
    let scores = net.head_scores(&pool_feats, 0)?;
    let mined = select_top_m(&scores.positive, m)?;
    let mut features: Vec<Tensor<T>> = pos.iter().map(|&i| positives[i].clone()).collect();
    let mut labels = vec![TARGET; features.len()];
    features.extend(mined.iter().map(|&j| pool_feats[j].clone()));
    labels.extend(std::iter::repeat_n(BACKGROUND, mined.len()));
    Ok(UpdateBatch {
        features,
        labels,
        pool,
        mined,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum UpdateKind {
    Short,
    Long,
}

/// Everything carried from one frame to the next.
#[derive(Debug, Clone)]
pub struct TrackerState<T> {
    pub bbox: BBox,
    /// Frames since the last (re)initialisation.
    pub frame: usize,
    pub positives: SampleStore<Tensor<T>>,
    pub negatives: SampleStore<Tensor<T>>,
    pub regressor: Option<RegressionModel>,
    pub rng: ChaCha8Rng,
}

#[derive(Debug, Clone, PartialEq)]
pub struct FrameOutcome {
    pub bbox: BBox,
    /// Selected candidate before refinement.
    pub raw: BBox,
    pub score: f64,
    pub refined: bool,
    pub collected: bool,
    pub update: Option<UpdateKind>,
}

/// Online tracker around a specialised single-branch network. Every
/// initialisation restarts from the network it was built with.
#[derive(Debug, Clone)]
pub struct Tracker<T> {
    base: Sanet<T>,
    net: Sanet<T>,
    cfg: TrackerConfig,
    state: Option<TrackerState<T>>,
    inits: u64,
}

fn with_intercept<T: Scalar>(f: &Tensor<T>) -> Vec<f64> {
    let mut v: Vec<f64> = f.data().iter().map(|x| x.as_f64()).collect();
    v.push(1.0);
    v
}

impl<T: Scalar> Tracker<T> {
    pub fn new(net: Sanet<T>, cfg: TrackerConfig) -> Result<Self> {
        cfg.validate()?;
        if net.num_branches() != 1 {
            return Err(Error::Config(format!(
                "tracking needs a specialised single-branch network, got {} branches",
                net.num_branches()
            )));
        }
        Ok(Tracker {
            net: net.clone(),
            base: net,
            cfg,
            state: None,
            inits: 0,
        })
    }

    pub fn config(&self) -> &TrackerConfig {
        &self.cfg
    }

    pub fn net(&self) -> &Sanet<T> {
        &self.net
    }

    pub fn state(&self) -> Option<&TrackerState<T>> {
        self.state.as_ref()
    }

    fn fine_tune(&mut self, positives: &[&Tensor<T>], negatives: &[&Tensor<T>], iterations: usize, rng: &mut ChaCha8Rng) -> Result<()> {
        let mut sgd = Sgd::new(&self.net, self.cfg.optim.clone());
        for _ in 0..iterations {
            let batch = build_update_batch(&self.net, positives, negatives, &self.cfg.minibatch, rng)?;
            head_backward_and_step(&mut self.net, &mut sgd, &batch.features, &batch.labels, 0)?;
        }
        Ok(())
    }

    /// Resets to the base network, fine-tunes on samples around `gt` and
    /// fits the regressor. Returns the positive score of `gt` afterwards.
    pub fn initialize(&mut self, frame: &Image, gt: BBox) -> Result<f64> {
        if !gt.is_valid() {
            return Err(Error::Geometry(format!("invalid initial box {gt:?}")));
        }
        self.net = self.base.clone();
        let mut rng = ChaCha8Rng::seed_from_u64(self.cfg.seed.wrapping_add(self.inits.wrapping_mul(0x9e37_79b9_7f4a_7c15)));
        self.inits += 1;
        let size = (frame.width(), frame.height());
        let (pos, neg) = collect_training_samples(size, &gt, self.cfg.first_frame_samples, &self.cfg.thresholds, &mut rng)?;
        let pos_f = patch_features(&self.net, frame, &pos)?;
        let neg_f = patch_features(&self.net, frame, &neg)?;
        {
            let p: Vec<&Tensor<T>> = pos_f.iter().collect();
            let n: Vec<&Tensor<T>> = neg_f.iter().collect();
            self.fine_tune(&p, &n, self.cfg.first_frame_iterations, &mut rng)?;
        }
        let regressor = if self.cfg.refine {
            let dim = self.net.feature_dim() + 1;
            let count = self.cfg.regression_samples.unwrap_or(2 * dim);
            let boxes = regression_samples(&gt, count, self.cfg.regression_min_iou, &mut rng)?;
            let feats: Vec<Vec<f64>> = patch_features(&self.net, frame, &boxes)?.iter().map(with_intercept).collect();
            Some(RegressionModel::train(&feats, &boxes, &gt, self.cfg.regression_lambda)?)
        } else {
            None
        };
        let gt_feat = patch_features(&self.net, frame, &[gt])?;
        let score = self.net.head_scores(&gt_feat, 0)?.positive[0].as_f64();
        let mut positives = SampleStore::new();
        positives.extend(0, pos_f);
        let mut negatives = SampleStore::new();
        negatives.extend(0, neg_f);
        self.state = Some(TrackerState {
            bbox: gt,
            frame: 0,
            positives,
            negatives,
            regressor,
            rng,
        });
        Ok(score)
    }

    /// Processes the next frame.
    pub fn track(&mut self, frame: &Image) -> Result<FrameOutcome> {
        let mut st = self
            .state
            .take()
            .ok_or_else(|| Error::Config("tracker used before initialize".into()))?;
        let out = self.step(frame, &mut st);
        self.state = Some(st);
        out
    }

    fn step(&mut self, frame: &Image, st: &mut TrackerState<T>) -> Result<FrameOutcome> {
        let cfg = self.cfg.clone();
        let t = st.frame + 1;
        let (fw, fh) = (frame.width() as f64, frame.height() as f64);
        let candidates: Vec<BBox> = sample_candidates(&st.bbox, &cfg.particles, &mut st.rng)
            .into_iter()
            .map(|b| b.clamp_center(fw, fh))
            .collect();
        let feats = patch_features(&self.net, frame, &candidates)?;
        let scores = self.net.head_scores(&feats, 0)?.positive;
        let best = select_best(&scores).ok_or_else(|| Error::Empty("candidate set".into()))?;
        let raw = candidates[best];
        let score = scores[best].as_f64();

        let mut bbox = raw;
        let mut refined = false;
        if score > cfg.theta {
            if let Some(reg) = &st.regressor {
                match reg.apply(&raw, &with_intercept(&feats[best])) {
                    Ok(b) => {
                        bbox = b;
                        refined = true;
                    }
                    Err(e) => log::warn!("frame {t}: refinement skipped: {e}"),
                }
            }
        }

        let mut collected = false;
        if score >= cfg.theta {
            let size = (frame.width(), frame.height());
            match collect_training_samples(size, &bbox, cfg.online_samples, &cfg.thresholds, &mut st.rng) {
                Ok((pos, neg)) => {
                    st.positives.extend(t, patch_features(&self.net, frame, &pos)?);
                    st.negatives.extend(t, patch_features(&self.net, frame, &neg)?);
                    collected = true;
                }
                Err(e @ Error::SamplingExhausted { .. }) => log::warn!("frame {t}: sample collection skipped: {e}"),
                Err(e) => return Err(e),
            }
        }

        let update = if score < cfg.theta {
            Some((UpdateKind::Short, cfg.short_horizon))
        } else if t % cfg.long_update_period == 0 {
            Some((UpdateKind::Long, cfg.long_horizon))
        } else {
            None
        };
        let mut applied = None;
        if let Some((kind, pos_horizon)) = update {
            let pos = st.positives.recent(t, pos_horizon);
            let neg = st.negatives.recent(t, cfg.short_horizon);
            if pos.is_empty() || neg.is_empty() {
                log::warn!("frame {t}: {kind:?} update skipped: empty sample store");
            } else {
                self.fine_tune(&pos, &neg, cfg.online_iterations, &mut st.rng)?;
                applied = Some(kind);
            }
        }
        st.positives.trim(t, cfg.long_horizon);
        st.negatives.trim(t, cfg.short_horizon);
        st.bbox = bbox;
        st.frame = t;
        Ok(FrameOutcome {
            bbox,
            raw,
            score,
            refined,
            collected,
            update: applied,
        })
    }
}

impl<T: Scalar> ReinitTracker<Image> for Tracker<T> {
    fn initialize(&mut self, frame: &Image, bbox: BBox) -> Result<()> {
        Tracker::initialize(self, frame, bbox).map(|_| ())
    }

    fn track(&mut self, frame: &Image) -> Result<BBox> {
        Tracker::track(self, frame).map(|o| o.bbox)
    }
}

/// Tracks a whole sequence from its first ground-truth box. Frame 0 of the
/// trajectory is that box with its post-initialisation score.
pub fn run_tracker<T: Scalar>(net: &Sanet<T>, seq: &Sequence, cfg: &TrackerConfig) -> Result<Trajectory> {
    run_tracker_detailed(net, seq, cfg).map(|(t, _)| t)
}

/// [`run_tracker`] plus the per-frame outcomes of frames 1.. .
pub fn run_tracker_detailed<T: Scalar>(
    net: &Sanet<T>,
    seq: &Sequence,
    cfg: &TrackerConfig,
) -> Result<(Trajectory, Vec<FrameOutcome>)> {
    if seq.frames.len() < 2 {
        return Err(Error::Config(format!(
            "sequence {:?} has {} frame(s); tracking needs at least 2",
            seq.name,
            seq.frames.len()
        )));
    }
    let gt = *seq
        .groundtruth
        .first()
        .ok_or_else(|| Error::Empty(format!("ground truth of {:?}", seq.name)))?;
    let mut tracker = Tracker::new(net.clone(), cfg.clone())?;
    let score = tracker.initialize(&seq.frames[0], gt)?;
    let mut traj = Trajectory::default();
    traj.push(TrajectoryRecord {
        frame: 0,
        bbox: gt,
        score: Some(score),
    })?;
    let mut outcomes = Vec::with_capacity(seq.frames.len() - 1);
    for (i, frame) in seq.frames.iter().enumerate().skip(1) {
        let o = tracker.track(frame)?;
        traj.push(TrajectoryRecord {
            frame: i,
            bbox: o.bbox,
            score: Some(o.score),
        })?;
        outcomes.push(o);
    }
    Ok((traj, outcomes))
}
