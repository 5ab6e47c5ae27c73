//! Synthetic multi-domain training and tracking at desk scale: the pipeline
//! behind the `train` and `demo` commands.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::eval::MetricReport;
use crate::io::{synth_sequence, Sequence, SynthSpec};
use crate::model::{train_multidomain, DomainDataset, IterationRecord, Sanet, SanetConfig, TrainConfig, TrainLog};
use crate::scalar::Scalar;
use crate::tracker::{domain_dataset, run_tracker, SampleCounts, SampleThresholds, TrackerConfig, Trajectory};

/// How training data is drawn from each domain sequence.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct DataConfig {
    /// Number of synthetic training domains when no sequences are given.
    pub domains: usize,
    /// Evenly spaced frames sampled per domain.
    pub frames_per_domain: usize,
    /// Samples per sampled frame.
    pub samples: SampleCounts,
    pub thresholds: SampleThresholds,
    /// `SynthSpec::variant` index of the tracking sequence.
    pub test_variant: usize,
    /// Replace the network's input mean with the per-channel pixel mean of
    /// the training sequences.
    pub fit_input_mean: bool,
}

impl Default for DataConfig {
    fn default() -> Self {
        DataConfig {
            domains: 3,
            frames_per_domain: 10,
            samples: SampleCounts {
                positives: 20,
                negatives: 60,
            },
            thresholds: SampleThresholds::default(),
            test_variant: 0,
            fit_input_mean: true,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ExperimentConfig {
    pub network: SanetConfig,
    pub training: TrainConfig,
    pub tracker: TrackerConfig,
    pub data: DataConfig,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        ExperimentConfig::tiny()
    }
}

impl ExperimentConfig {
    pub fn tiny() -> Self {
        ExperimentConfig {
            network: SanetConfig::tiny(),
            training: TrainConfig::default(),
            tracker: TrackerConfig::tiny(),
            data: DataConfig::default(),
        }
    }

    /// Copy with the DAG-RNNs removed.
    pub fn ablate_rnn(mut self) -> Self {
        self.network = self.network.ablate_rnn();
        self
    }
}

/// Independent stream `k` of a run seed.
pub fn derive_seed(seed: u64, k: u64) -> u64 {
    let mut z = seed ^ k.wrapping_add(1).wrapping_mul(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

const NET_STREAM: u64 = 1;
const TRAIN_STREAM: u64 = 2;
const DATA_STREAM: u64 = 3;
const BRANCH_STREAM: u64 = 4;
const TRACK_STREAM: u64 = 5;
const SYNTH_STREAM: u64 = 16;

/// Training domains `1..=domains` of the synthetic scene.
pub fn domain_sequences(data: &DataConfig, seed: u64) -> Result<Vec<Sequence>> {
    if data.domains == 0 {
        return Err(Error::Config("at least one training domain is required".into()));
    }
    (0..data.domains)
        .map(|k| {
            let variant = (data.test_variant + 1 + k) % 9;
            synth_sequence(&SynthSpec::variant(variant, derive_seed(seed, SYNTH_STREAM + k as u64)))
        })
        .collect()
}

/// The held-out tracking sequence.
pub fn test_sequence(data: &DataConfig, seed: u64) -> Result<Sequence> {
    synth_sequence(&SynthSpec::variant(data.test_variant, seed))
}

pub fn build_datasets<T: Scalar>(
    net: &Sanet<T>,
    sequences: &[Sequence],
    data: &DataConfig,
    seed: u64,
) -> Result<Vec<DomainDataset<T>>> {
    let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(seed, DATA_STREAM));
    sequences
        .iter()
        .map(|s| domain_dataset(net, s, data.frames_per_domain, data.samples, &data.thresholds, &mut rng))
        .collect()
}

/// Per-channel mean over every pixel of every frame.
pub fn channel_mean(sequences: &[Sequence]) -> Result<[f64; 3]> {
    let mut sum = [0.0f64; 3];
    let mut count = 0usize;
    for frame in sequences.iter().flat_map(|s| &s.frames) {
        for px in frame.data().chunks_exact(3) {
            for (acc, &v) in sum.iter_mut().zip(px) {
                *acc += f64::from(v);
            }
        }
        count += frame.width() * frame.height();
    }
    if count == 0 {
        return Err(Error::Empty("training frames".into()));
    }
    Ok(sum.map(|v| v / count as f64))
}

/// A trained network with its log and training data.
#[derive(Debug, Clone)]
pub struct Trained<T> {
    pub net: Sanet<T>,
    pub log: TrainLog,
    pub datasets: Vec<DomainDataset<T>>,
}

/// Builds a network with one branch per sequence and trains it.
pub fn train_on_sequences<T: Scalar>(
    cfg: &ExperimentConfig,
    sequences: &[Sequence],
    seed: u64,
    observer: impl FnMut(&IterationRecord, &Sanet<T>),
) -> Result<Trained<T>> {
    let mut network = SanetConfig {
        num_domains: sequences.len(),
        ..cfg.network.clone()
    };
    if cfg.data.fit_input_mean {
        network.input_mean = channel_mean(sequences)?;
    }
    let mut net = Sanet::<T>::build(network, derive_seed(seed, NET_STREAM))?;
    let datasets = build_datasets(&net, sequences, &cfg.data, seed)?;
    let training = TrainConfig {
        seed: derive_seed(seed, TRAIN_STREAM),
        ..cfg.training.clone()
    };
    let log = train_multidomain(&mut net, &datasets, &training, observer)?;
    Ok(Trained { net, log, datasets })
}

/// Single-branch tracking network from a multi-domain one.
pub fn specialize_for_tracking<T: Scalar>(net: &Sanet<T>, seed: u64) -> Sanet<T> {
    net.specialize(derive_seed(seed, BRANCH_STREAM))
}

/// Tracker settings for a run seed.
pub fn tracker_config(cfg: &ExperimentConfig, seed: u64) -> TrackerConfig {
    TrackerConfig {
        seed: derive_seed(seed, TRACK_STREAM),
        ..cfg.tracker.clone()
    }
}

#[derive(Debug, Clone)]
pub struct DemoOutcome<T> {
    pub trained: Trained<T>,
    pub sequence: Sequence,
    pub trajectory: Trajectory,
    pub report: MetricReport,
}

/// Synthetic domains → multi-domain training → specialisation → tracking
/// on the held-out sequence → metrics.
pub fn run_demo<T: Scalar>(cfg: &ExperimentConfig, seed: u64) -> Result<DemoOutcome<T>> {
    let domains = domain_sequences(&cfg.data, seed)?;
    let trained = train_on_sequences::<T>(cfg, &domains, seed, |_, _| {})?;
    let sequence = test_sequence(&cfg.data, seed)?;
    let net = specialize_for_tracking(&trained.net, seed);
    let trajectory = run_tracker(&net, &sequence, &tracker_config(cfg, seed))?;
    let gt = Trajectory::from_boxes(&sequence.groundtruth);
    let report = MetricReport::compute(&trajectory, &gt)?;
    Ok(DemoOutcome {
        trained,
        sequence,
        trajectory,
        report,
    })
}
