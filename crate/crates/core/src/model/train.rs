use rand::seq::index::sample;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::config::{MinibatchConfig, OptimConfig};
use super::mining::mine_hard_negatives;
use super::network::{Gradients, ParamGroup, Sanet};
use crate::error::{Error, Result};
use crate::layers::{softmax_cross_entropy, softmax_cross_entropy_backward};
use crate::scalar::Scalar;
use crate::tensor::Tensor;

/// Label of the background class.
pub const BACKGROUND: usize = 0;
/// Label of the target class.
pub const TARGET: usize = 1;

/// Normalised patches with binary labels, drawn from one domain.
#[derive(Debug, Clone)]
pub struct TrainBatch<T> {
    pub patches: Vec<Tensor<T>>,
    pub labels: Vec<usize>,
    pub domain: usize,
}

/// Positive and negative patches of one training domain.
#[derive(Debug, Clone, Default)]
pub struct DomainDataset<T> {
    pub positives: Vec<Tensor<T>>,
    pub negatives: Vec<Tensor<T>>,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StepStats {
    pub loss: f64,
    pub accuracy: f64,
}

/// Which parameters an update may touch.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum UpdateScope {
    /// Shared layers plus the active branch.
    Full,
    /// Fully-connected layers plus the active branch.
    Head,
}

impl UpdateScope {
    fn allows(self, group: ParamGroup, branch: usize) -> bool {
        match group {
            ParamGroup::Branch(k) => k == branch,
            ParamGroup::Fc => true,
            ParamGroup::Conv | ParamGroup::Rnn => self == UpdateScope::Full,
        }
    }
}

/// SGD with momentum and weight decay:
/// `v ← μ·v − lr·(g + λ·p)`, `p ← p + v`.
#[derive(Debug, Clone)]
pub struct Sgd<T> {
    optim: OptimConfig,
    velocity: Vec<Tensor<T>>,
}

impl<T: Scalar> Sgd<T> {
    pub fn new(net: &Sanet<T>, optim: OptimConfig) -> Self {
        Sgd {
            optim,
            velocity: net.tensors().into_iter().map(Tensor::zeros_like).collect(),
        }
    }

    pub fn optim(&self) -> &OptimConfig {
        &self.optim
    }

    /// Applies one update to every parameter allowed by `scope`; all other
    /// tensors, and their momentum, are left untouched.
    pub fn step(&mut self, net: &mut Sanet<T>, grads: &Gradients<T>, branch: usize, scope: UpdateScope, epoch: usize) {
        let info = net.param_info();
        let mu = T::of(self.optim.momentum);
        let wd = T::of(self.optim.weight_decay);
        let lr_cnn = T::of(self.optim.lr_cnn);
        let lr_rnn = T::of(self.optim.rnn_lr_at(epoch));
        for (i, p) in net.tensors_mut().into_iter().enumerate() {
            let group = info[i].group;
            if !scope.allows(group, branch) {
                continue;
            }
            let lr = if group == ParamGroup::Rnn { lr_rnn } else { lr_cnn };
            let v = self.velocity[i].data_mut();
            for ((pv, vv), &g) in p.data_mut().iter_mut().zip(v).zip(grads.tensors[i].data()) {
                *vv = mu * *vv - lr * (g + wd * *pv);
                *pv += *vv;
            }
        }
    }
}

/// Samples are processed in fixed-size chunks and the partial sums combined
/// in order, so results do not depend on the thread count.
const REDUCE_CHUNK: usize = 4;

fn reduce<T: Scalar>(
    net: &Sanet<T>,
    n: usize,
    per_sample: impl Fn(usize, &mut Gradients<T>) -> Result<(f64, bool)> + Sync,
) -> Result<(StepStats, Gradients<T>)> {
    if n == 0 {
        return Err(Error::Empty("training batch".into()));
    }
    let idx: Vec<usize> = (0..n).collect();
    let partials = idx
        .par_chunks(REDUCE_CHUNK)
        .map(|chunk| {
            let mut g = Gradients::zeros_like(net);
            let mut loss = 0.0;
            let mut correct = 0usize;
            for &i in chunk {
                let (l, ok) = per_sample(i, &mut g)?;
                loss += l;
                correct += usize::from(ok);
            }
            Ok((loss, correct, g))
        })
        .collect::<Result<Vec<_>>>()?;
    let mut total = Gradients::zeros_like(net);
    let (mut loss, mut correct) = (0.0, 0);
    for (l, c, g) in &partials {
        loss += l;
        correct += c;
        total.add_assign(g);
    }
    total.scale(T::of(1.0 / n as f64));
    Ok((
        StepStats {
            loss: loss / n as f64,
            accuracy: correct as f64 / n as f64,
        },
        total,
    ))
}

fn check_labels(n: usize, labels: &[usize]) -> Result<()> {
    if n != labels.len() {
        return Err(Error::Config(format!(
            "{n} samples but {} labels",
            labels.len()
        )));
    }
    if let Some(&bad) = labels.iter().find(|&&l| l > TARGET) {
        return Err(Error::OutOfRange {
            what: "binary label",
            index: bad,
            len: 2,
        });
    }
    Ok(())
}

/// Mean cross-entropy and its gradient over a batch of patches.
pub fn compute_gradients<T: Scalar>(
    net: &Sanet<T>,
    patches: &[Tensor<T>],
    labels: &[usize],
    branch: usize,
) -> Result<(StepStats, Gradients<T>)> {
    check_labels(patches.len(), labels)?;
    reduce(net, patches.len(), |i, g| {
        let trace = net.forward(&patches[i], branch)?;
        let (loss, probs) = softmax_cross_entropy(&trace.head.logits, labels[i])?;
        if !loss.is_finite() {
            let layers = net.non_finite_layers(&trace);
            return Err(Error::NonFinite(format!(
                "loss at sample {i}; offending layers: {}",
                if layers.is_empty() { "loss".to_string() } else { layers.join(", ") }
            )));
        }
        let dlogits = softmax_cross_entropy_backward(&probs, labels[i])?;
        net.backward(&trace, branch, &dlogits, g)?;
        let predicted = usize::from(probs.data()[TARGET] > probs.data()[BACKGROUND]);
        Ok((loss.as_f64(), predicted == labels[i]))
    })
}

/// Same as [`compute_gradients`] for precomputed feature vectors; only the
/// head receives gradients.
pub fn compute_head_gradients<T: Scalar>(
    net: &Sanet<T>,
    features: &[Tensor<T>],
    labels: &[usize],
    branch: usize,
) -> Result<(StepStats, Gradients<T>)> {
    check_labels(features.len(), labels)?;
    reduce(net, features.len(), |i, g| {
        let head = net.forward_head(&features[i], branch)?;
        let (loss, probs) = softmax_cross_entropy(&head.logits, labels[i])?;
        if !loss.is_finite() {
            return Err(Error::NonFinite(format!("head loss at sample {i}")));
        }
        let dlogits = softmax_cross_entropy_backward(&probs, labels[i])?;
        net.backward_head(&head, branch, &dlogits, g)?;
        let predicted = usize::from(probs.data()[TARGET] > probs.data()[BACKGROUND]);
        Ok((loss.as_f64(), predicted == labels[i]))
    })
}

/// One SGD step on `batch`, updating the shared layers and the batch's
/// domain branch. `epoch` drives the RNN learning-rate decay.
pub fn backward_and_step<T: Scalar>(
    net: &mut Sanet<T>,
    sgd: &mut Sgd<T>,
    batch: &TrainBatch<T>,
    epoch: usize,
) -> Result<StepStats> {
    let (stats, grads) = compute_gradients(net, &batch.patches, &batch.labels, batch.domain)?;
    sgd.step(net, &grads, batch.domain, UpdateScope::Full, epoch);
    Ok(stats)
}

/// One SGD step on the fully-connected head from feature vectors.
pub fn head_backward_and_step<T: Scalar>(
    net: &mut Sanet<T>,
    sgd: &mut Sgd<T>,
    features: &[Tensor<T>],
    labels: &[usize],
    branch: usize,
) -> Result<StepStats> {
    let (stats, grads) = compute_head_gradients(net, features, labels, branch)?;
    sgd.step(net, &grads, branch, UpdateScope::Head, 0);
    Ok(stats)
}

/// `k` indices below `n`: without replacement when possible.
pub(crate) fn sample_indices<R: Rng + ?Sized>(n: usize, k: usize, rng: &mut R) -> Vec<usize> {
    if k <= n {
        sample(rng, n, k).into_vec()
    } else {
        (0..k).map(|_| rng.random_range(0..n)).collect()
    }
}

/// Draws `P` positives and the `M` hardest of `B` sampled negatives.
pub fn draw_minibatch<T: Scalar, R: Rng + ?Sized>(
    net: &Sanet<T>,
    data: &DomainDataset<T>,
    domain: usize,
    mb: &MinibatchConfig,
    rng: &mut R,
) -> Result<TrainBatch<T>> {
    if data.positives.is_empty() || data.negatives.is_empty() {
        return Err(Error::Empty(format!("domain {domain} dataset")));
    }
    let pos = sample_indices(data.positives.len(), mb.positives, rng);
    let pool_idx = sample_indices(data.negatives.len(), mb.negative_pool, rng);
    let pool: Vec<Tensor<T>> = pool_idx.iter().map(|&i| data.negatives[i].clone()).collect();
    let negatives = if mb.mined == pool.len() {
        pool
    } else {
        mine_hard_negatives(net, &pool, domain, mb.mined)?
            .into_iter()
            .map(|i| pool[i].clone())
            .collect()
    };
    let mut patches: Vec<Tensor<T>> = pos.iter().map(|&i| data.positives[i].clone()).collect();
    let mut labels = vec![TARGET; patches.len()];
    labels.extend(std::iter::repeat_n(BACKGROUND, negatives.len()));
    patches.extend(negatives);
    Ok(TrainBatch {
        patches,
        labels,
        domain,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TrainConfig {
    pub max_iterations: usize,
    /// Iterations per learning-rate epoch; `None` means one pass over the K
    /// domains.
    pub iterations_per_epoch: Option<usize>,
    pub convergence_window: usize,
    pub convergence_tol: f64,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            max_iterations: 600,
            iterations_per_epoch: None,
            convergence_window: 50,
            convergence_tol: 1e-4,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct IterationRecord {
    pub iteration: usize,
    pub domain: usize,
    pub loss: f64,
    pub accuracy: f64,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct TrainLog {
    pub records: Vec<IterationRecord>,
    pub converged: bool,
}

impl TrainLog {
    /// `iteration,domain,loss,accuracy` rows with a header.
    pub fn to_csv(&self) -> String {
        let mut s = String::from("iteration,domain,loss,accuracy\n");
        for r in &self.records {
            s.push_str(&format!(
                "{},{},{:.6},{:.4}\n",
                r.iteration, r.domain, r.loss, r.accuracy
            ));
        }
        s
    }

    /// Relative change between the means of the last two windows.
    fn window_converged(&self, window: usize, tol: f64) -> bool {
        let n = self.records.len();
        if window == 0 || n < 2 * window {
            return false;
        }
        let mean = |r: &[IterationRecord]| r.iter().map(|x| x.loss).sum::<f64>() / r.len() as f64;
        let prev = mean(&self.records[n - 2 * window..n - window]);
        let last = mean(&self.records[n - window..]);
        (last - prev).abs() / prev.abs().max(1e-12) < tol
    }
}

/// Multi-domain training: iteration `t` draws a minibatch from domain
/// `t mod K` and updates the shared layers plus that domain's branch only.
/// `observer` sees every record together with the updated network.
pub fn train_multidomain<T: Scalar>(
    net: &mut Sanet<T>,
    datasets: &[DomainDataset<T>],
    cfg: &TrainConfig,
    mut observer: impl FnMut(&IterationRecord, &Sanet<T>),
) -> Result<TrainLog> {
    let k = datasets.len();
    if k == 0 {
        return Err(Error::Empty("no training domains".into()));
    }
    if k != net.num_branches() {
        return Err(Error::Config(format!(
            "{k} domain datasets for a network with {} branches",
            net.num_branches()
        )));
    }
    for (d, data) in datasets.iter().enumerate() {
        if data.positives.is_empty() || data.negatives.is_empty() {
            return Err(Error::Empty(format!("domain {d} dataset")));
        }
    }
    let per_epoch = cfg.iterations_per_epoch.unwrap_or(k).max(1);
    let mb = net.config().minibatch.clone();
    let mut sgd = Sgd::new(net, net.config().optim.clone());
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut log = TrainLog::default();
    for t in 0..cfg.max_iterations {
        let domain = t % k;
        let batch = draw_minibatch(net, &datasets[domain], domain, &mb, &mut rng)?;
        let stats = backward_and_step(net, &mut sgd, &batch, t / per_epoch)?;
        let rec = IterationRecord {
            iteration: t,
            domain,
            loss: stats.loss,
            accuracy: stats.accuracy,
        };
        log.records.push(rec);
        observer(&rec, net);
        if log.window_converged(cfg.convergence_window, cfg.convergence_tol) {
            log.converged = true;
            break;
        }
    }
    Ok(log)
}

/// Fraction of a domain's samples classified correctly by `branch`.
pub fn domain_accuracy<T: Scalar>(net: &Sanet<T>, data: &DomainDataset<T>, branch: usize) -> Result<f64> {
    let pos = net.forward_scores(&data.positives, branch)?;
    let neg = net.forward_scores(&data.negatives, branch)?;
    let half = T::of(0.5);
    let correct = pos.positive.iter().filter(|&&p| p > half).count()
        + neg.positive.iter().filter(|&&p| p <= half).count();
    Ok(correct as f64 / (data.positives.len() + data.negatives.len()) as f64)
}
