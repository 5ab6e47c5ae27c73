use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use super::config::{SanetConfig, StageGeometry};
use crate::dagrnn::{dagrnn_backward, dagrnn_forward, DagRnnActivations, DagRnnParams, DagSet};
use crate::error::{Error, Result};
use crate::init::{uniform_fan_in, uniform_scaled};
use crate::layers::{
    concat_channels, conv2d_backward, conv2d_forward, fc_backward, fc_forward, maxpool_backward,
    maxpool_forward, softmax, split_channels, Activation, Conv2dParams, FcParams, PoolRecord,
};
use crate::scalar::Scalar;
use crate::tensor::Tensor;

/// Which learning-rate group a parameter tensor belongs to.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ParamGroup {
    Conv,
    Rnn,
    Fc,
    Branch(usize),
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ParamInfo {
    pub name: String,
    pub group: ParamGroup,
    /// Conv/RNN stage owning the tensor; `None` for the head.
    pub stage: Option<usize>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Stage<T> {
    pub conv: Conv2dParams<T>,
    pub pool_window: usize,
    pub pool_stride: usize,
    pub rnn: Option<DagRnnParams<T>>,
    dags: Option<DagSet>,
}

impl<T: Scalar> Stage<T> {
    pub fn dags(&self) -> Option<&DagSet> {
        self.dags.as_ref()
    }
}

/// The full network: fused conv stages, shared fully-connected layers and one
/// two-way classification branch per domain.
#[derive(Debug, Clone, PartialEq)]
pub struct Sanet<T> {
    config: SanetConfig,
    geometry: Vec<StageGeometry>,
    pub stages: Vec<Stage<T>>,
    pub fcs: Vec<FcParams<T>>,
    pub branches: Vec<FcParams<T>>,
    seed: u64,
}

/// Gradients laid out in [`Sanet::tensors`] order.
#[derive(Debug, Clone)]
pub struct Gradients<T> {
    pub tensors: Vec<Tensor<T>>,
}

impl<T: Scalar> Gradients<T> {
    pub fn zeros_like(net: &Sanet<T>) -> Self {
        Gradients {
            tensors: net.tensors().into_iter().map(Tensor::zeros_like).collect(),
        }
    }

    pub fn add_assign(&mut self, other: &Gradients<T>) {
        for (a, b) in self.tensors.iter_mut().zip(&other.tensors) {
            a.add_assign(b).expect("gradient layouts agree");
        }
    }

    pub fn scale(&mut self, factor: T) {
        for t in &mut self.tensors {
            for v in t.data_mut() {
                *v *= factor;
            }
        }
    }

    pub fn norm_sq(&self, indices: impl IntoIterator<Item = usize>) -> T {
        indices
            .into_iter()
            .fold(T::zero(), |acc, i| acc + self.tensors[i].norm_sq())
    }
}

/// Intermediate values of one stage, kept for backward.
#[derive(Debug, Clone)]
pub struct StageTrace<T> {
    pub input: Tensor<T>,
    pub conv: Tensor<T>,
    pub pool: PoolRecord,
    pub pooled: Tensor<T>,
    pub rnn: Option<DagRnnActivations<T>>,
    pub output: Tensor<T>,
}

/// Values of the fully-connected head, kept for backward.
#[derive(Debug, Clone)]
pub struct HeadTrace<T> {
    /// Input to each shared fc layer, then to the branch.
    pub inputs: Vec<Tensor<T>>,
    pub logits: Tensor<T>,
}

#[derive(Debug, Clone)]
pub struct Trace<T> {
    pub stages: Vec<StageTrace<T>>,
    pub head: HeadTrace<T>,
}

/// Batched classifier output.
#[derive(Debug, Clone, PartialEq)]
pub struct Scores<T> {
    pub logits: Vec<[T; 2]>,
    /// Softmax probability of the target class.
    pub positive: Vec<T>,
}

const SEED_STREAM_SHARED: u64 = 0x5a4e_4554;
const SEED_STREAM_BRANCH: u64 = 0xb4a7_c400;

fn branch_params<T: Scalar>(in_dim: usize, rng: &mut ChaCha8Rng) -> FcParams<T> {
    FcParams {
        weights: uniform_fan_in(&[2, in_dim], in_dim, rng),
        bias: Tensor::zeros(&[2]),
    }
}

impl<T: Scalar> Sanet<T> {
    /// Builds and seeds a network. Shared layers and each branch draw from
    /// separate RNG streams, so the shared weights do not depend on `K`.
    pub fn build(config: SanetConfig, seed: u64) -> Result<Self> {
        let geometry = config.geometry()?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed ^ SEED_STREAM_SHARED);
        let gain = match config.activation {
            Activation::Relu => std::f64::consts::SQRT_2,
            _ => 1.0,
        };
        let mut stages = Vec::with_capacity(config.stages.len());
        for (sc, g) in config.stages.iter().zip(&geometry) {
            let cin = g.input[2];
            let fan_in = sc.kernel * sc.kernel * cin;
            let conv = Conv2dParams {
                kernels: uniform_scaled(&[sc.kernel, sc.kernel, cin, sc.channels], fan_in, gain, &mut rng),
                bias: Tensor::zeros(&[sc.channels]),
                stride: sc.stride,
                padding: sc.padding,
            };
            let (rnn, dags) = if sc.fuse {
                let hidden = sc.rnn_hidden();
                let params = DagRnnParams::init(
                    sc.channels,
                    hidden,
                    hidden,
                    config.connectivity.max_predecessors(),
                    config.rnn_phi,
                    config.rnn_sigma,
                    &mut rng,
                );
                let dags = DagSet::new(g.pooled[0], g.pooled[1], config.connectivity)?;
                (Some(params), Some(dags))
            } else {
                (None, None)
            };
            stages.push(Stage {
                conv,
                pool_window: sc.pool_window,
                pool_stride: sc.pool_stride,
                rnn,
                dags,
            });
        }
        let mut fcs = Vec::with_capacity(config.fc_widths.len());
        let mut in_dim = config.feature_dim()?;
        for &w in &config.fc_widths {
            fcs.push(FcParams {
                weights: uniform_scaled(&[w, in_dim], in_dim, gain, &mut rng),
                bias: Tensor::zeros(&[w]),
            });
            in_dim = w;
        }
        let branches = (0..config.num_domains)
            .map(|k| {
                let mut r = ChaCha8Rng::seed_from_u64(seed ^ SEED_STREAM_BRANCH ^ (k as u64) << 32);
                branch_params(in_dim, &mut r)
            })
            .collect();
        Ok(Sanet {
            config,
            geometry,
            stages,
            fcs,
            branches,
            seed,
        })
    }

    pub fn config(&self) -> &SanetConfig {
        &self.config
    }

    pub fn geometry(&self) -> &[StageGeometry] {
        &self.geometry
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn num_branches(&self) -> usize {
        self.branches.len()
    }

    pub fn feature_dim(&self) -> usize {
        let o = self.geometry.last().expect("non-empty").output;
        o[0] * o[1] * o[2]
    }

    pub fn head_input_dim(&self) -> usize {
        self.config.fc_widths.last().copied().unwrap_or_else(|| self.feature_dim())
    }

    /// Replaces the K domain branches with one fresh branch seeded from
    /// `seed`. Shared layers are copied unchanged.
    pub fn specialize(&self, seed: u64) -> Self {
        let mut net = self.clone();
        let mut rng = ChaCha8Rng::seed_from_u64(seed ^ SEED_STREAM_BRANCH);
        net.branches = vec![branch_params(self.head_input_dim(), &mut rng)];
        net.config.num_domains = 1;
        net
    }

    /// Every parameter tensor in canonical order.
    pub fn tensors(&self) -> Vec<&Tensor<T>> {
        let mut out = Vec::new();
        for s in &self.stages {
            out.push(&s.conv.kernels);
            out.push(&s.conv.bias);
            if let Some(r) = &s.rnn {
                for d in &r.dirs {
                    out.extend([&d.u, &d.w, &d.v, &d.b]);
                }
                out.push(&r.c);
            }
        }
        for f in self.fcs.iter().chain(&self.branches) {
            out.push(&f.weights);
            out.push(&f.bias);
        }
        out
    }

    pub fn tensors_mut(&mut self) -> Vec<&mut Tensor<T>> {
        let mut out = Vec::new();
        for s in &mut self.stages {
            out.push(&mut s.conv.kernels);
            out.push(&mut s.conv.bias);
            if let Some(r) = &mut s.rnn {
                for d in &mut r.dirs {
                    out.push(&mut d.u);
                    out.push(&mut d.w);
                    out.push(&mut d.v);
                    out.push(&mut d.b);
                }
                out.push(&mut r.c);
            }
        }
        for f in self.fcs.iter_mut().chain(self.branches.iter_mut()) {
            out.push(&mut f.weights);
            out.push(&mut f.bias);
        }
        out
    }

    /// Names and groups matching [`Sanet::tensors`].
    pub fn param_info(&self) -> Vec<ParamInfo> {
        let mut out = Vec::new();
        let mut push = |name: String, group, stage| out.push(ParamInfo { name, group, stage });
        for (i, s) in self.stages.iter().enumerate() {
            push(format!("stage{i}.conv.kernels"), ParamGroup::Conv, Some(i));
            push(format!("stage{i}.conv.bias"), ParamGroup::Conv, Some(i));
            if s.rnn.is_some() {
                for d in crate::dagrnn::Direction::ALL {
                    for p in ["u", "w", "v", "b"] {
                        push(format!("stage{i}.rnn.{d}.{p}"), ParamGroup::Rnn, Some(i));
                    }
                }
                push(format!("stage{i}.rnn.c"), ParamGroup::Rnn, Some(i));
            }
        }
        for (j, _) in self.fcs.iter().enumerate() {
            push(format!("fc{j}.weights"), ParamGroup::Fc, None);
            push(format!("fc{j}.bias"), ParamGroup::Fc, None);
        }
        for (k, _) in self.branches.iter().enumerate() {
            push(format!("branch{k}.weights"), ParamGroup::Branch(k), None);
            push(format!("branch{k}.bias"), ParamGroup::Branch(k), None);
        }
        out
    }

    pub fn param_count(&self) -> usize {
        self.tensors().iter().map(|t| t.len()).sum()
    }

    /// Raw 0..255 pixels to network input: `(x − mean) · scale`.
    pub fn normalize_patch(&self, raw: &Tensor<T>) -> Tensor<T> {
        let mean = self.config.input_mean.map(T::of);
        let scale = T::of(self.config.input_scale);
        let mut out = raw.clone();
        for px in out.data_mut().chunks_exact_mut(3) {
            for (v, &m) in px.iter_mut().zip(&mean) {
                *v = (*v - m) * scale;
            }
        }
        out
    }

    fn check_branch(&self, branch: usize) -> Result<()> {
        if branch >= self.branches.len() {
            return Err(Error::OutOfRange {
                what: "branch",
                index: branch,
                len: self.branches.len(),
            });
        }
        Ok(())
    }

    fn check_patch(&self, patch: &Tensor<T>) -> Result<()> {
        let s = self.config.input_size;
        if patch.dims() != [s, s, 3] {
            return Err(Error::Geometry(format!(
                "patch {} does not match the {s}x{s}x3 network input",
                patch.shape()
            )));
        }
        Ok(())
    }

    /// Runs the conv/RNN stages, keeping everything backward needs.
    pub fn forward_stages(&self, patch: &Tensor<T>) -> Result<Vec<StageTrace<T>>> {
        self.check_patch(patch)?;
        self.forward_stages_from(0, patch.clone())
    }

    /// Runs stages `first..` on the input of stage `first`.
    pub fn forward_stages_from(&self, first: usize, input: Tensor<T>) -> Result<Vec<StageTrace<T>>> {
        if first >= self.stages.len() {
            return Err(Error::OutOfRange {
                what: "stage",
                index: first,
                len: self.stages.len(),
            });
        }
        let want = self.geometry[first].input;
        if input.dims() != want {
            return Err(Error::Geometry(format!(
                "stage {first} input {} does not match {want:?}",
                input.shape()
            )));
        }
        let act = self.config.activation;
        let mut x = input;
        let mut traces = Vec::with_capacity(self.stages.len() - first);
        for s in &self.stages[first..] {
            let conv = act.forward(&conv2d_forward(&x, &s.conv)?);
            let (pooled, pool) = maxpool_forward(&conv, s.pool_window, s.pool_stride)?;
            let (rnn, output) = match (&s.rnn, &s.dags) {
                (Some(p), Some(d)) => {
                    let a = dagrnn_forward(&pooled, d, p)?;
                    let fused = concat_channels(&pooled, &a.output)?;
                    (Some(a), fused)
                }
                _ => (None, pooled.clone()),
            };
            traces.push(StageTrace {
                input: x,
                conv,
                pool,
                pooled,
                rnn,
                output: output.clone(),
            });
            x = output;
        }
        Ok(traces)
    }

    /// Flattened final stage output for one normalised patch.
    pub fn features(&self, patch: &Tensor<T>) -> Result<Tensor<T>> {
        let traces = self.forward_stages(patch)?;
        Ok(traces.last().expect("non-empty").output.flatten())
    }

    /// Fully-connected layers and the chosen branch on a feature vector.
    pub fn forward_head(&self, features: &Tensor<T>, branch: usize) -> Result<HeadTrace<T>> {
        self.check_branch(branch)?;
        let act = self.config.activation;
        let mut inputs = Vec::with_capacity(self.fcs.len() + 1);
        let mut x = features.flatten();
        for f in &self.fcs {
            let y = act.forward(&fc_forward(&x, f)?);
            inputs.push(x);
            x = y;
        }
        let logits = fc_forward(&x, &self.branches[branch])?;
        inputs.push(x);
        Ok(HeadTrace { inputs, logits })
    }

    pub fn forward(&self, patch: &Tensor<T>, branch: usize) -> Result<Trace<T>> {
        self.check_branch(branch)?;
        let stages = self.forward_stages(patch)?;
        let head = self.forward_head(&stages.last().expect("non-empty").output, branch)?;
        Ok(Trace { stages, head })
    }

    /// Scores a set of normalised patches. Evaluation is per sample, so batch
    /// results equal the single-sample loop exactly.
    pub fn forward_scores(&self, patches: &[Tensor<T>], branch: usize) -> Result<Scores<T>> {
        self.check_branch(branch)?;
        let logits = patches
            .par_iter()
            .map(|p| self.forward(p, branch).map(|t| t.head.logits))
            .collect::<Result<Vec<_>>>()?;
        Ok(scores_from_logits(logits))
    }

    /// Scores precomputed feature vectors through the head only.
    pub fn head_scores(&self, features: &[Tensor<T>], branch: usize) -> Result<Scores<T>> {
        self.check_branch(branch)?;
        let logits = features
            .par_iter()
            .map(|f| self.forward_head(f, branch).map(|t| t.logits))
            .collect::<Result<Vec<_>>>()?;
        Ok(scores_from_logits(logits))
    }

    /// Backward through the head only. Returns the gradient with respect to
    /// the feature vector and accumulates parameter gradients into `grads`.
    pub fn backward_head(
        &self,
        head: &HeadTrace<T>,
        branch: usize,
        dlogits: &Tensor<T>,
        grads: &mut Gradients<T>,
    ) -> Result<Tensor<T>> {
        let layout = self.layout();
        let act = self.config.activation;
        let bi = layout.branch + 2 * branch;
        let bx = head.inputs.last().expect("branch input");
        let g = fc_backward(bx, &self.branches[branch], dlogits)?;
        grads.tensors[bi].add_assign(&g.weights)?;
        grads.tensors[bi + 1].add_assign(&g.bias)?;
        let mut up = g.input;
        for (j, f) in self.fcs.iter().enumerate().rev() {
            // Output of fc j is the input of layer j + 1.
            let out = &head.inputs[j + 1];
            let dpre = act.backward(out, &up);
            let g = fc_backward(&head.inputs[j], f, &dpre)?;
            grads.tensors[layout.fc + 2 * j].add_assign(&g.weights)?;
            grads.tensors[layout.fc + 2 * j + 1].add_assign(&g.bias)?;
            up = g.input;
        }
        Ok(up)
    }

    /// Full backward for one sample given `dL/dlogits`.
    pub fn backward(&self, trace: &Trace<T>, branch: usize, dlogits: &Tensor<T>, grads: &mut Gradients<T>) -> Result<()> {
        let layout = self.layout();
        let last = trace.stages.last().expect("non-empty");
        let dfeat = self.backward_head(&trace.head, branch, dlogits, grads)?;
        let mut up = dfeat.reshape(last.output.dims())?;
        let act = self.config.activation;
        for (i, (s, t)) in self.stages.iter().zip(&trace.stages).enumerate().rev() {
            let base = layout.stages[i];
            let dpooled = match (&s.rnn, &s.dags, &t.rnn) {
                (Some(p), Some(d), Some(a)) => {
                    let (dpool, drnn) = split_channels(&up, t.pooled.dims()[2])?;
                    let g = dagrnn_backward(&t.pooled, a, d, p, &drnn)?;
                    for (m, gd) in g.dirs.iter().enumerate() {
                        let at = base + 2 + 4 * m;
                        grads.tensors[at].add_assign(&gd.u)?;
                        grads.tensors[at + 1].add_assign(&gd.w)?;
                        grads.tensors[at + 2].add_assign(&gd.v)?;
                        grads.tensors[at + 3].add_assign(&gd.b)?;
                    }
                    grads.tensors[base + 18].add_assign(&g.c)?;
                    dpool.add(&g.input)?
                }
                _ => up,
            };
            let dconv = act.backward(&t.conv, &maxpool_backward(&t.pool, &dpooled)?);
            let g = conv2d_backward(&t.input, &s.conv, &dconv)?;
            grads.tensors[base].add_assign(&g.kernels)?;
            grads.tensors[base + 1].add_assign(&g.bias)?;
            up = g.input;
        }
        Ok(())
    }

    /// First tensor index of each stage, the fc block and the branch block.
    pub(crate) fn layout(&self) -> Layout {
        let mut stages = Vec::with_capacity(self.stages.len());
        let mut at = 0;
        for s in &self.stages {
            stages.push(at);
            at += 2 + if s.rnn.is_some() { 17 } else { 0 };
        }
        let fc = at;
        Layout {
            stages,
            fc,
            branch: fc + 2 * self.fcs.len(),
        }
    }

    /// Names of layers whose forward output is non-finite, in network order.
    pub fn non_finite_layers(&self, trace: &Trace<T>) -> Vec<String> {
        let mut bad = Vec::new();
        for (i, t) in trace.stages.iter().enumerate() {
            if !t.conv.is_finite() {
                bad.push(format!("stage{i}.conv"));
            }
            if let Some(a) = &t.rnn {
                if !a.output.is_finite() {
                    bad.push(format!("stage{i}.rnn"));
                }
            }
        }
        for (j, x) in trace.head.inputs.iter().enumerate().skip(1) {
            if !x.is_finite() {
                bad.push(format!("fc{}", j - 1));
            }
        }
        if !trace.head.logits.is_finite() {
            bad.push("branch".into());
        }
        bad
    }
}

pub(crate) struct Layout {
    pub stages: Vec<usize>,
    pub fc: usize,
    pub branch: usize,
}

fn scores_from_logits<T: Scalar>(logits: Vec<Tensor<T>>) -> Scores<T> {
    let positive = logits.iter().map(|l| softmax(l).data()[1]).collect();
    let logits = logits.iter().map(|l| [l.data()[0], l.data()[1]]).collect();
    Scores { logits, positive }
}

