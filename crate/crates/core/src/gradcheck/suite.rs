//! The finite-difference suite run by the `gradcheck` command and the
//! acceptance tests. Every check is 64-bit and reports the largest relative
//! error per gradient tensor.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::Serialize;

use super::wide::Wide;
use super::{central_differences, finite_diff_gradient, max_rel_err, DEFAULT_STEP};
use crate::dagrnn::{dagrnn_backward, dagrnn_forward, Connectivity, DagRnnParams, DagSet};
use crate::error::{Error, Result};
use crate::layers::{
    concat_channels, conv2d_backward, conv2d_forward, fc_backward, fc_forward, maxpool_backward, maxpool_forward,
    softmax_cross_entropy, softmax_cross_entropy_backward, split_channels, Activation, Conv2dParams, FcParams,
};
use crate::model::{compute_gradients, Sanet, SanetConfig};
use crate::scalar::Scalar;
use crate::tensor::Tensor;

/// Outcome of one gradient tensor comparison.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Check {
    pub name: String,
    pub max_rel_err: f64,
    pub tolerance: f64,
    pub coordinates: usize,
}

impl Check {
    pub fn passed(&self) -> bool {
        self.max_rel_err < self.tolerance
    }

    fn new(name: impl Into<String>, analytic: &[f64], numeric: &[f64], tolerance: f64) -> Self {
        Check {
            name: name.into(),
            max_rel_err: max_rel_err(analytic, numeric),
            tolerance,
            coordinates: analytic.len(),
        }
    }
}

pub const LAYER_TOL: f64 = 1e-5;
pub const DAGRNN_TOL: f64 = 1e-5;
pub const END_TO_END_TOL: f64 = 1e-4;

fn random(extents: &[usize], rng: &mut ChaCha8Rng) -> Tensor<f64> {
    let n = extents.iter().product();
    Tensor::new(extents, (0..n).map(|_| rng.random_range(-1.0..1.0)).collect()).expect("valid extents")
}

/// `Σ r ∘ y`: a linear probe whose gradient with respect to `y` is `r`.
fn probe(r: &Tensor<f64>, y: &Tensor<f64>) -> f64 {
    r.dot(y).expect("probe shape")
}

fn dir_tensor(p: &mut DagRnnParams<f64>, m: usize, k: usize) -> &mut Tensor<f64> {
    let d = &mut p.dirs[m];
    match k {
        0 => &mut d.u,
        1 => &mut d.w,
        2 => &mut d.v,
        _ => &mut d.b,
    }
}

/// Gradients of `Σ r ∘ y` over `x` and every parameter of a four-direction
/// DAG-RNN on an `h × w` lattice.
pub fn dagrnn_checks(
    h: usize,
    w: usize,
    input: usize,
    hidden: usize,
    connectivity: Connectivity,
    phi: Activation,
    sigma: Activation,
    seed: u64,
) -> Result<Vec<Check>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let dags = DagSet::new(h, w, connectivity)?;
    let mut params = DagRnnParams::init(input, hidden, hidden, connectivity.max_predecessors(), phi, sigma, &mut rng);
    for d in &mut params.dirs {
        d.b = random(&[hidden], &mut rng);
    }
    params.c = random(&[hidden], &mut rng);
    let x = random(&[h, w, input], &mut rng);
    let r = random(&[h, w, hidden], &mut rng);
    let acts = dagrnn_forward(&x, &dags, &params)?;
    let g = dagrnn_backward(&x, &acts, &dags, &params, &r)?;
    let tag = format!("dagrnn {h}x{w} {connectivity:?}");
    let loss = |x: &Tensor<f64>, p: &DagRnnParams<f64>| probe(&r, &dagrnn_forward(x, &dags, p).expect("forward").output);

    let mut out = Vec::new();
    let n = finite_diff_gradient(|xp| loss(xp, &params), &x, DEFAULT_STEP)?;
    out.push(Check::new(format!("{tag} input"), g.input.data(), n.data(), DAGRNN_TOL));
    for (m, dir) in crate::dagrnn::Direction::ALL.iter().enumerate() {
        for (k, name) in ["u", "w", "v", "b"].iter().enumerate() {
            let analytic = {
                let gd = &g.dirs[m];
                [&gd.u, &gd.w, &gd.v, &gd.b][k].data().to_vec()
            };
            let mut p = params.clone();
            let len = analytic.len();
            let numeric = central_differences(len, DEFAULT_STEP, |i, delta| {
                let t = dir_tensor(&mut p, m, k);
                let orig = t.data()[i];
                t.data_mut()[i] = orig + delta;
                let v = loss(&x, &p);
                dir_tensor(&mut p, m, k).data_mut()[i] = orig;
                v
            })?;
            out.push(Check::new(format!("{tag} {dir}.{name}"), &analytic, &numeric, DAGRNN_TOL));
        }
    }
    let mut p = params.clone();
    let numeric = central_differences(hidden, DEFAULT_STEP, |i, delta| {
        let orig = p.c.data()[i];
        p.c.data_mut()[i] = orig + delta;
        let v = loss(&x, &p);
        p.c.data_mut()[i] = orig;
        v
    })?;
    out.push(Check::new(format!("{tag} c"), g.c.data(), &numeric, DAGRNN_TOL));
    Ok(out)
}

/// Finite-difference checks of every layer's backward pass.
pub fn layer_checks(seed: u64) -> Result<Vec<Check>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut out = Vec::new();

    // conv2d: 6×6×2 input, 3×3×2×2 kernel, stride 1, padding 1.
    let x = random(&[6, 6, 2], &mut rng);
    let params = Conv2dParams {
        kernels: random(&[3, 3, 2, 2], &mut rng),
        bias: random(&[2], &mut rng),
        stride: 1,
        padding: 1,
    };
    let y = conv2d_forward(&x, &params)?;
    let r = random(y.dims(), &mut rng);
    let g = conv2d_backward(&x, &params, &r)?;
    let n = finite_diff_gradient(|xp| probe(&r, &conv2d_forward(xp, &params).expect("conv")), &x, DEFAULT_STEP)?;
    out.push(Check::new("conv2d input", g.input.data(), n.data(), LAYER_TOL));
    let n = finite_diff_gradient(
        |k| {
            let p = Conv2dParams {
                kernels: k.clone(),
                ..params.clone()
            };
            probe(&r, &conv2d_forward(&x, &p).expect("conv"))
        },
        &params.kernels,
        DEFAULT_STEP,
    )?;
    out.push(Check::new("conv2d kernels", g.kernels.data(), n.data(), LAYER_TOL));
    let n = finite_diff_gradient(
        |b| {
            let p = Conv2dParams {
                bias: b.clone(),
                ..params.clone()
            };
            probe(&r, &conv2d_forward(&x, &p).expect("conv"))
        },
        &params.bias,
        DEFAULT_STEP,
    )?;
    out.push(Check::new("conv2d bias", g.bias.data(), n.data(), LAYER_TOL));

    // maxpool: redraw until every window's winner leads by > 1e-3.
    let x = loop {
        let x = random(&[6, 6, 2], &mut rng);
        if pool_margin(&x, 3, 2) > 1e-3 {
            break x;
        }
    };
    let (y, rec) = maxpool_forward(&x, 3, 2)?;
    let r = random(y.dims(), &mut rng);
    let g = maxpool_backward(&rec, &r)?;
    let n = finite_diff_gradient(|xp| probe(&r, &maxpool_forward(xp, 3, 2).expect("pool").0), &x, DEFAULT_STEP)?;
    out.push(Check::new("maxpool input", g.data(), n.data(), LAYER_TOL));

    // fully connected 8 → 5.
    let x = random(&[8], &mut rng);
    let fc = FcParams {
        weights: random(&[5, 8], &mut rng),
        bias: random(&[5], &mut rng),
    };
    let r = random(&[5], &mut rng);
    let g = fc_backward(&x, &fc, &r)?;
    let n = finite_diff_gradient(|xp| probe(&r, &fc_forward(xp, &fc).expect("fc")), &x, DEFAULT_STEP)?;
    out.push(Check::new("fc input", g.input.data(), n.data(), LAYER_TOL));
    let n = finite_diff_gradient(
        |wt| {
            let p = FcParams {
                weights: wt.clone(),
                bias: fc.bias.clone(),
            };
            probe(&r, &fc_forward(&x, &p).expect("fc"))
        },
        &fc.weights,
        DEFAULT_STEP,
    )?;
    out.push(Check::new("fc weights", g.weights.data(), n.data(), LAYER_TOL));
    let n = finite_diff_gradient(
        |b| {
            let p = FcParams {
                weights: fc.weights.clone(),
                bias: b.clone(),
            };
            probe(&r, &fc_forward(&x, &p).expect("fc"))
        },
        &fc.bias,
        DEFAULT_STEP,
    )?;
    out.push(Check::new("fc bias", g.bias.data(), n.data(), LAYER_TOL));

    // Activations; ReLU inputs are kept away from the kink.
    for act in [Activation::Tanh, Activation::Sigmoid, Activation::Relu] {
        let mut x = random(&[10], &mut rng);
        for v in x.data_mut() {
            if v.abs() < 0.05 {
                *v += 0.1_f64.copysign(*v);
            }
        }
        let r = random(&[10], &mut rng);
        let y = act.forward(&x);
        let g = act.backward(&y, &r);
        let n = finite_diff_gradient(|xp| probe(&r, &act.forward(xp)), &x, DEFAULT_STEP)?;
        out.push(Check::new(format!("activation {act:?}"), g.data(), n.data(), LAYER_TOL));
    }

    // Softmax cross-entropy on two-class logits.
    for label in 0..2 {
        let z = random(&[2], &mut rng).scale(3.0);
        let (_, probs) = softmax_cross_entropy(&z, label)?;
        let g = softmax_cross_entropy_backward(&probs, label)?;
        let n = finite_diff_gradient(|zp| softmax_cross_entropy(zp, label).expect("loss").0, &z, DEFAULT_STEP)?;
        out.push(Check::new(format!("softmax cross-entropy label {label}"), g.data(), n.data(), LAYER_TOL));
    }

    // Channel concatenation.
    let a = random(&[4, 4, 3], &mut rng);
    let b = random(&[4, 4, 2], &mut rng);
    let r = random(&[4, 4, 5], &mut rng);
    let (ga, gb) = split_channels(&r, 3)?;
    let n = finite_diff_gradient(|ap| probe(&r, &concat_channels(ap, &b).expect("concat")), &a, DEFAULT_STEP)?;
    out.push(Check::new("concat first", ga.data(), n.data(), LAYER_TOL));
    let n = finite_diff_gradient(|bp| probe(&r, &concat_channels(&a, bp).expect("concat")), &b, DEFAULT_STEP)?;
    out.push(Check::new("concat second", gb.data(), n.data(), LAYER_TOL));
    Ok(out)
}

/// Smallest gap between a window's maximum and its runner-up.
pub fn pool_margin(x: &Tensor<f64>, window: usize, stride: usize) -> f64 {
    let d = x.dims();
    let (h, w, c) = (d[0], d[1], d[2]);
    let mut margin = f64::INFINITY;
    for oy in 0..(h - window) / stride + 1 {
        for ox in 0..(w - window) / stride + 1 {
            for ch in 0..c {
                let mut v: Vec<f64> = (0..window * window)
                    .map(|k| x.at(&[oy * stride + k / window, ox * stride + k % window, ch]))
                    .collect();
                v.sort_by(|a, b| b.total_cmp(a));
                margin = margin.min(v[0] - v[1]);
            }
        }
    }
    margin
}

/// The tiny fused network with every non-linearity set to tanh.
pub fn tanh_tiny_config() -> SanetConfig {
    SanetConfig {
        activation: Activation::Tanh,
        rnn_phi: Activation::Tanh,
        rnn_sigma: Activation::Tanh,
        ..SanetConfig::tiny()
    }
}

/// Mean cross-entropy with the stages before `first` replaced by cached
/// inputs; `first == None` starts at the head from cached features.
fn mean_loss_from<S: Scalar>(net: &Sanet<S>, first: Option<usize>, cached: &[Tensor<S>], labels: &[usize]) -> S {
    let total = cached.iter().zip(labels).fold(S::zero(), |acc, (x, &l)| {
        let features = match first {
            Some(s) => {
                let traces = net.forward_stages_from(s, x.clone()).expect("forward");
                traces.last().expect("non-empty").output.clone()
            }
            None => x.clone(),
        };
        let head = net.forward_head(&features, 0).expect("head");
        acc + softmax_cross_entropy(&head.logits, l).expect("loss").0
    });
    total / S::of(cached.len() as f64)
}

/// Copy of `net` in another scalar type.
fn widen<S: Scalar>(net: &Sanet<f64>) -> Result<Sanet<S>> {
    let mut wide = Sanet::<S>::build(net.config().clone(), 0)?;
    for (dst, src) in wide.tensors_mut().into_iter().zip(net.tensors()) {
        *dst = src.cast();
    }
    Ok(wide)
}

/// Minimum lead of every pooling window's winner over its runner-up in the
/// test patches: ten finite-difference steps.
const E2E_POOL_MARGIN: f64 = 1e-4;
const PATCH_DRAWS: usize = 1000;

fn network_pool_margin(net: &Sanet<f64>, patch: &Tensor<f64>) -> f64 {
    let traces = net.forward_stages(patch).expect("forward");
    traces
        .iter()
        .zip(&net.stages)
        .map(|(t, st)| pool_margin(&t.conv, st.pool_window, st.pool_stride))
        .fold(f64::INFINITY, f64::min)
}

/// Mean cross-entropy of two random patches (one per class) through the
/// whole network, checked for every parameter tensor. Backward runs in
/// `f64`; the finite-difference reference runs in double-double.
pub fn end_to_end_checks(config: SanetConfig, seed: u64) -> Result<Vec<Check>> {
    let net = Sanet::<f64>::build(config, seed)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x00e2_e000);
    let s = net.config().input_size;
    let patches = (0..PATCH_DRAWS)
        .map(|_| vec![random(&[s, s, 3], &mut rng), random(&[s, s, 3], &mut rng)])
        .find(|p| p.iter().all(|x| network_pool_margin(&net, x) > E2E_POOL_MARGIN))
        .ok_or_else(|| Error::Config(format!("no patch pair clear of max-pool ties in {PATCH_DRAWS} draws")))?;
    let labels = [1, 0];
    let (_, grads) = compute_gradients(&net, &patches, &labels, 0)?;
    let wide = widen::<Wide>(&net)?;
    let traces: Vec<_> = patches
        .iter()
        .map(|p| wide.forward_stages(&p.cast()))
        .collect::<Result<_>>()?;
    let stage_inputs = |s: usize| -> Vec<Tensor<Wide>> { traces.iter().map(|t| t[s].input.clone()).collect() };
    let features: Vec<Tensor<Wide>> = traces
        .iter()
        .map(|t| t.last().expect("non-empty").output.clone())
        .collect();
    let step = Wide::of(DEFAULT_STEP);
    let info = net.param_info();
    info.par_iter()
        .enumerate()
        .map(|(ti, pi)| {
            let cached = match pi.stage {
                Some(s) => stage_inputs(s),
                None => features.clone(),
            };
            let mut probe_net = wide.clone();
            let len = grads.tensors[ti].len();
            let numeric = central_differences(len, step, |i, delta| {
                let orig = probe_net.tensors()[ti].data()[i];
                probe_net.tensors_mut()[ti].data_mut()[i] = orig + delta;
                let v = mean_loss_from(&probe_net, pi.stage, &cached, &labels);
                probe_net.tensors_mut()[ti].data_mut()[i] = orig;
                v
            })?;
            Ok(Check::new(pi.name.clone(), grads.tensors[ti].data(), &numeric, END_TO_END_TOL))
        })
        .collect()
}

/// Everything: layers, DAG-RNNs of both connectivities and the end-to-end
/// network.
pub fn full_suite(seed: u64) -> Result<Vec<Check>> {
    let mut out = layer_checks(seed)?;
    for conn in [Connectivity::Four, Connectivity::Eight] {
        out.extend(dagrnn_checks(4, 5, 3, 2, conn, Activation::Tanh, Activation::Tanh, seed)?);
    }
    out.extend(end_to_end_checks(tanh_tiny_config(), seed)?);
    Ok(out)
}
