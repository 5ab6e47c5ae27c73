use std::hash::{DefaultHasher, Hasher};

use rand::Rng;

use super::lattice::{DagSet, Direction};
use crate::error::{Error, Result};
use crate::init::uniform_fan_in;
use crate::layers::Activation;
use crate::scalar::Scalar;
use crate::tensor::{matvec_into, matvec_t_into, outer_add, Shape, Tensor};

/// Parameters of one sweep: `U` (hidden × input), `W` (hidden × hidden),
/// `V` (output × hidden) and the hidden bias `b`. The same struct carries
/// their gradients.
#[derive(Debug, Clone, PartialEq)]
pub struct DirectionParams<T> {
    pub u: Tensor<T>,
    pub w: Tensor<T>,
    pub v: Tensor<T>,
    pub b: Tensor<T>,
}

impl<T: Scalar> DirectionParams<T> {
    fn zeros_like(other: &Self) -> Self {
        DirectionParams {
            u: Tensor::zeros_like(&other.u),
            w: Tensor::zeros_like(&other.w),
            v: Tensor::zeros_like(&other.v),
            b: Tensor::zeros_like(&other.b),
        }
    }
}

/// Four sweep parameter sets plus the shared output bias `c`.
#[derive(Debug, Clone, PartialEq)]
pub struct DagRnnParams<T> {
    /// Indexed by [`Direction::index`].
    pub dirs: [DirectionParams<T>; 4],
    pub c: Tensor<T>,
    /// Hidden non-linearity φ.
    pub phi: Activation,
    /// Output non-linearity σ.
    pub sigma: Activation,
}

impl<T: Scalar> DagRnnParams<T> {
    /// Seeded uniform fan-in initialisation; biases start at zero. The
    /// recurrent matrix sees up to `max_predecessors` summed hidden states, so
    /// its fan-in counts all of them.
    pub fn init<R: Rng + ?Sized>(
        input: usize,
        hidden: usize,
        output: usize,
        max_predecessors: usize,
        phi: Activation,
        sigma: Activation,
        rng: &mut R,
    ) -> Self {
        let dirs = std::array::from_fn(|_| DirectionParams {
            u: uniform_fan_in(&[hidden, input], input, rng),
            w: uniform_fan_in(&[hidden, hidden], hidden * max_predecessors, rng),
            v: uniform_fan_in(&[output, hidden], 4 * hidden, rng),
            b: Tensor::zeros(&[hidden]),
        });
        DagRnnParams {
            dirs,
            c: Tensor::zeros(&[output]),
            phi,
            sigma,
        }
    }

    pub fn input_dim(&self) -> usize {
        self.dirs[0].u.dims()[1]
    }

    pub fn hidden_dim(&self) -> usize {
        self.dirs[0].u.dims()[0]
    }

    pub fn output_dim(&self) -> usize {
        self.c.len()
    }

    pub fn direction(&self, d: Direction) -> &DirectionParams<T> {
        &self.dirs[d.index()]
    }

    fn validate(&self) -> Result<()> {
        let (i, h, o) = (self.input_dim(), self.hidden_dim(), self.output_dim());
        for p in &self.dirs {
            let ok = p.u.dims() == [h, i]
                && p.w.dims() == [h, h]
                && p.v.dims() == [o, h]
                && p.b.dims() == [h];
            if !ok {
                return Err(Error::Config(format!(
                    "DAG-RNN parameter dims disagree across directions (input {i}, hidden {h}, output {o})"
                )));
            }
        }
        Ok(())
    }

    fn fingerprint(&self, hasher: &mut DefaultHasher) {
        for p in &self.dirs {
            for t in [&p.u, &p.w, &p.v, &p.b] {
                for &x in t.data() {
                    hasher.write_u64(x.bits());
                }
            }
        }
        for &x in self.c.data() {
            hasher.write_u64(x.bits());
        }
    }
}

/// Forward results retained for the backward pass.
#[derive(Debug, Clone)]
pub struct DagRnnActivations<T> {
    /// Per-direction hidden maps `(H, W, hidden)`, indexed by direction.
    pub hidden: [Tensor<T>; 4],
    /// Combined output `(H, W, output)`.
    pub output: Tensor<T>,
    input_shape: Shape,
    fingerprint: u64,
}

/// Gradients with respect to the input map and every parameter.
#[derive(Debug, Clone)]
pub struct DagRnnGrads<T> {
    pub input: Tensor<T>,
    pub dirs: [DirectionParams<T>; 4],
    pub c: Tensor<T>,
}

fn fingerprint<T: Scalar>(x: &Tensor<T>, params: &DagRnnParams<T>) -> u64 {
    let mut h = DefaultHasher::new();
    for &d in x.dims() {
        h.write_usize(d);
    }
    for &v in x.data() {
        h.write_u64(v.bits());
    }
    params.fingerprint(&mut h);
    h.finish()
}

fn check_inputs<T: Scalar>(x: &Tensor<T>, dags: &DagSet, params: &DagRnnParams<T>) -> Result<()> {
    params.validate()?;
    let d = x.dims();
    if d.len() != 3 || d[0] != dags.height() || d[1] != dags.width() || d[2] != params.input_dim() {
        return Err(Error::Geometry(format!(
            "DAG-RNN input {} does not match lattice {}x{} with {} input channels",
            x.shape(),
            dags.height(),
            dags.width(),
            params.input_dim()
        )));
    }
    for (m, dag) in dags.dags().iter().enumerate() {
        if dag.direction() != Direction::ALL[m] {
            return Err(Error::Geometry("direction set incomplete".into()));
        }
    }
    Ok(())
}

/// Runs the four sweeps in topological order and combines them:
/// `h_m(v) = φ(U_m·x(v) + W_m·Σ_{u∈pred_m(v)} h_m(u) + b_m)`,
/// `y(v) = σ(Σ_m V_m·h_m(v) + c)`.
pub fn dagrnn_forward<T: Scalar>(
    x: &Tensor<T>,
    dags: &DagSet,
    params: &DagRnnParams<T>,
) -> Result<DagRnnActivations<T>> {
    check_inputs(x, dags, params)?;
    let (h, w) = (dags.height(), dags.width());
    let n = h * w;
    let (cin, hid, out) = (params.input_dim(), params.hidden_dim(), params.output_dim());
    let xd = x.data();

    let mut hidden: [Vec<T>; 4] = std::array::from_fn(|_| Vec::new());
    for (m, dag) in dags.dags().iter().enumerate() {
        let p = &params.dirs[m];
        let mut hm = vec![T::zero(); n * hid];
        let mut pre = vec![T::zero(); hid];
        let mut agg = vec![T::zero(); hid];
        for &v in dag.topo_order() {
            pre.copy_from_slice(p.b.data());
            matvec_into(p.u.data(), hid, cin, &xd[v * cin..(v + 1) * cin], &mut pre);
            let preds = dag.predecessors(v);
            if !preds.is_empty() {
                agg.fill(T::zero());
                for &u in preds {
                    for (a, &hv) in agg.iter_mut().zip(&hm[u * hid..(u + 1) * hid]) {
                        *a += hv;
                    }
                }
                matvec_into(p.w.data(), hid, hid, &agg, &mut pre);
            }
            for (dst, &s) in hm[v * hid..(v + 1) * hid].iter_mut().zip(&pre) {
                *dst = params.phi.eval(s);
            }
        }
        hidden[m] = hm;
    }

    let mut y = vec![T::zero(); n * out];
    for v in 0..n {
        let cell = &mut y[v * out..(v + 1) * out];
        cell.copy_from_slice(params.c.data());
        for (m, hm) in hidden.iter().enumerate() {
            matvec_into(params.dirs[m].v.data(), out, hid, &hm[v * hid..(v + 1) * hid], cell);
        }
        for z in cell.iter_mut() {
            *z = params.sigma.eval(*z);
        }
    }

    let mut maps = hidden.into_iter().map(|hm| Tensor::new(&[h, w, hid], hm));
    let hidden = [
        maps.next().unwrap()?,
        maps.next().unwrap()?,
        maps.next().unwrap()?,
        maps.next().unwrap()?,
    ];
    Ok(DagRnnActivations {
        hidden,
        output: Tensor::new(&[h, w, out], y)?,
        input_shape: x.shape().clone(),
        fingerprint: fingerprint(x, params),
    })
}

/// Reverse-topological backward pass. Each vertex's hidden error combines the
/// direct term `V_mᵀ·dz(v)` with `W_mᵀ·δ(k)` from every successor `k`, where
/// `δ = dh ∘ φ′(h)`; the input error is `Σ_m U_mᵀ·δ_m(v)`.
pub fn dagrnn_backward<T: Scalar>(
    x: &Tensor<T>,
    acts: &DagRnnActivations<T>,
    dags: &DagSet,
    params: &DagRnnParams<T>,
    upstream: &Tensor<T>,
) -> Result<DagRnnGrads<T>> {
    check_inputs(x, dags, params)?;
    if acts.input_shape != *x.shape() || acts.fingerprint != fingerprint(x, params) {
        return Err(Error::StaleCache(
            "activations were produced from different inputs or parameters".into(),
        ));
    }
    if upstream.shape() != acts.output.shape() {
        return Err(Error::ShapeMismatch {
            op: "dagrnn backward",
            lhs: upstream.shape().clone(),
            rhs: acts.output.shape().clone(),
        });
    }
    let n = dags.height() * dags.width();
    let (cin, hid, out) = (params.input_dim(), params.hidden_dim(), params.output_dim());
    let xd = x.data();

    // dL/dz at the output pre-activation.
    let mut dz = upstream.data().to_vec();
    if params.sigma != Activation::Identity {
        for (g, &y) in dz.iter_mut().zip(acts.output.data()) {
            *g *= params.sigma.derivative_from_output(y);
        }
    }
    let mut gc = vec![T::zero(); out];
    for cell in dz.chunks_exact(out) {
        for (a, &g) in gc.iter_mut().zip(cell) {
            *a += g;
        }
    }

    let mut gx = vec![T::zero(); xd.len()];
    let mut gdirs: [DirectionParams<T>; 4] =
        std::array::from_fn(|m| DirectionParams::zeros_like(&params.dirs[m]));

    for (m, dag) in dags.dags().iter().enumerate() {
        let p = &params.dirs[m];
        let g = &mut gdirs[m];
        let hm = acts.hidden[m].data();
        // W_mᵀ·δ(k), cached per vertex for its predecessors to collect.
        let mut wt_delta = vec![T::zero(); n * hid];
        let mut dh = vec![T::zero(); hid];
        let mut agg = vec![T::zero(); hid];
        for &v in dag.topo_order().iter().rev() {
            let hv = &hm[v * hid..(v + 1) * hid];
            let dzv = &dz[v * out..(v + 1) * out];
            outer_add(g.v.data_mut(), dzv, hv);

            dh.fill(T::zero());
            matvec_t_into(p.v.data(), out, hid, dzv, &mut dh);
            for &k in dag.successors(v) {
                for (a, &t) in dh.iter_mut().zip(&wt_delta[k * hid..(k + 1) * hid]) {
                    *a += t;
                }
            }
            // δ(v), stored in place of dh.
            for (d, &hval) in dh.iter_mut().zip(hv) {
                *d *= params.phi.derivative_from_output(hval);
            }
            let delta = &dh;

            matvec_t_into(p.w.data(), hid, hid, delta, &mut wt_delta[v * hid..(v + 1) * hid]);
            let xv = &xd[v * cin..(v + 1) * cin];
            outer_add(g.u.data_mut(), delta, xv);
            for (b, &d) in g.b.data_mut().iter_mut().zip(delta) {
                *b += d;
            }
            matvec_t_into(p.u.data(), hid, cin, delta, &mut gx[v * cin..(v + 1) * cin]);
            let preds = dag.predecessors(v);
            if !preds.is_empty() {
                agg.fill(T::zero());
                for &u in preds {
                    for (a, &hu) in agg.iter_mut().zip(&hm[u * hid..(u + 1) * hid]) {
                        *a += hu;
                    }
                }
                outer_add(g.w.data_mut(), delta, &agg);
            }
        }
    }

    Ok(DagRnnGrads {
        input: Tensor::from_shape(x.shape().clone(), gx)?,
        dirs: gdirs,
        c: Tensor::vector(gc)?,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dagrnn::{Connectivity, LatticeDag};
    use crate::gradcheck::{finite_diff_gradient, max_rel_err};
    use crate::layers::testutil::{random, rng};
    use crate::layers::{fc_backward, fc_forward, FcParams};

    fn random_params(
        cin: usize,
        hid: usize,
        out: usize,
        phi: Activation,
        sigma: Activation,
        seed: u64,
    ) -> DagRnnParams<f64> {
        let mut r = rng(seed);
        DagRnnParams {
            dirs: std::array::from_fn(|_| DirectionParams {
                u: random(&[hid, cin], &mut r),
                w: random(&[hid, hid], &mut r).scale(0.5),
                v: random(&[out, hid], &mut r),
                b: random(&[hid], &mut r),
            }),
            c: random(&[out], &mut r),
            phi,
            sigma,
        }
    }

    #[test]
    fn zero_upstream_gives_zero_gradients() {
        let dags = DagSet::new(3, 4, Connectivity::Eight).unwrap();
        let p = random_params(2, 3, 2, Activation::Tanh, Activation::Tanh, 1);
        let x = random(&[3, 4, 2], &mut rng(2));
        let acts = dagrnn_forward(&x, &dags, &p).unwrap();
        let g = dagrnn_backward(&x, &acts, &dags, &p, &Tensor::zeros(&[3, 4, 2])).unwrap();
        assert!(g.input.data().iter().all(|&v| v == 0.0));
        assert!(g.c.data().iter().all(|&v| v == 0.0));
        for d in &g.dirs {
            for t in [&d.u, &d.w, &d.v, &d.b] {
                assert!(t.data().iter().all(|&v| v == 0.0));
            }
        }
    }

    #[test]
    fn stale_cache_detected() {
        let dags = DagSet::new(2, 3, Connectivity::Four).unwrap();
        let p = random_params(2, 2, 2, Activation::Tanh, Activation::Tanh, 3);
        let x = random(&[2, 3, 2], &mut rng(4));
        let acts = dagrnn_forward(&x, &dags, &p).unwrap();
        let mut other = x.clone();
        other.data_mut()[0] += 1.0;
        let up = Tensor::filled(&[2, 3, 2], 1.0);
        assert!(matches!(
            dagrnn_backward(&other, &acts, &dags, &p, &up),
            Err(Error::StaleCache(_))
        ));
        let mut p2 = p.clone();
        p2.c.data_mut()[0] += 1.0;
        assert!(matches!(
            dagrnn_backward(&x, &acts, &dags, &p2, &up),
            Err(Error::StaleCache(_))
        ));
    }

    #[test]
    fn dimension_mismatch_rejected() {
        let dags = DagSet::new(2, 3, Connectivity::Four).unwrap();
        let p = random_params(2, 2, 2, Activation::Tanh, Activation::Tanh, 3);
        assert!(dagrnn_forward(&Tensor::zeros(&[2, 3, 3]), &dags, &p).is_err());
        assert!(dagrnn_forward(&Tensor::zeros(&[3, 3, 2]), &dags, &p).is_err());
    }

    #[test]
    fn zero_recurrence_is_pointwise_two_layer_map() {
        let dags = DagSet::new(3, 3, Connectivity::Eight).unwrap();
        let mut p = random_params(3, 4, 2, Activation::Relu, Activation::Identity, 5);
        for d in &mut p.dirs {
            d.w = Tensor::zeros(&[4, 4]);
        }
        let x = random(&[3, 3, 3], &mut rng(6));
        let acts = dagrnn_forward(&x, &dags, &p).unwrap();
        for r in 0..3 {
            for c in 0..3 {
                let xv = Tensor::vector((0..3).map(|k| x.at(&[r, c, k])).collect()).unwrap();
                let mut y = p.c.clone();
                for d in &p.dirs {
                    let h = d.u.matvec(&xv).unwrap().add(&d.b).unwrap().map(|v| v.max(0.0));
                    y = y.add(&d.v.matvec(&h).unwrap()).unwrap();
                }
                for k in 0..2 {
                    assert!((acts.output.at(&[r, c, k]) - y.data()[k]).abs() < 1e-12);
                }
            }
        }
    }

    #[test]
    fn zero_recurrence_input_gradient_matches_fc_composition() {
        let dags = DagSet::new(2, 3, Connectivity::Eight).unwrap();
        let mut p = random_params(3, 4, 2, Activation::Tanh, Activation::Tanh, 7);
        for d in &mut p.dirs {
            d.w = Tensor::zeros(&[4, 4]);
        }
        let mut r = rng(8);
        let x = random(&[2, 3, 3], &mut r);
        let up = random(&[2, 3, 2], &mut r);
        let acts = dagrnn_forward(&x, &dags, &p).unwrap();
        let g = dagrnn_backward(&x, &acts, &dags, &p, &up).unwrap();

        for v in 0..6 {
            let xv = Tensor::vector(x.data()[v * 3..v * 3 + 3].to_vec()).unwrap();
            let hs: Vec<_> = p
                .dirs
                .iter()
                .map(|d| {
                    let pre = fc_forward(&xv, &FcParams { weights: d.u.clone(), bias: d.b.clone() }).unwrap();
                    Activation::Tanh.forward(&pre)
                })
                .collect();
            let mut z = p.c.clone();
            for (d, h) in p.dirs.iter().zip(&hs) {
                z = z.add(&d.v.matvec(h).unwrap()).unwrap();
            }
            let y = Activation::Tanh.forward(&z);
            let gy = Tensor::vector(up.data()[v * 2..v * 2 + 2].to_vec()).unwrap();
            let gz = Activation::Tanh.backward(&y, &gy);
            let mut expect = Tensor::zeros(&[3]);
            for (d, h) in p.dirs.iter().zip(&hs) {
                let out_layer = FcParams { weights: d.v.clone(), bias: Tensor::zeros(&[2]) };
                let gh = fc_backward(h, &out_layer, &gz).unwrap().input;
                let gpre = Activation::Tanh.backward(h, &gh);
                let in_layer = FcParams { weights: d.u.clone(), bias: d.b.clone() };
                expect = expect.add(&fc_backward(&xv, &in_layer, &gpre).unwrap().input).unwrap();
            }
            for k in 0..3 {
                assert!((g.input.data()[v * 3 + k] - expect.data()[k]).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn order_independence() {
        let p = random_params(2, 3, 2, Activation::Tanh, Activation::Tanh, 9);
        let x = random(&[4, 5, 2], &mut rng(10));
        let up = random(&[4, 5, 2], &mut rng(11));
        let dags = DagSet::new(4, 5, Connectivity::Eight).unwrap();
        let waves = dags.dags().clone().map(|d| {
            let o = d.wavefront_order();
            d.with_order(o).unwrap()
        });
        let alt = DagSet::from_dags(waves).unwrap();
        let a = dagrnn_forward(&x, &dags, &p).unwrap();
        let b = dagrnn_forward(&x, &alt, &p).unwrap();
        for (u, v) in a.output.data().iter().zip(b.output.data()) {
            assert!((u - v).abs() < 1e-12);
        }
        let ga = dagrnn_backward(&x, &a, &dags, &p, &up).unwrap();
        let gb = dagrnn_backward(&x, &b, &alt, &p, &up).unwrap();
        assert!(max_rel_err(ga.input.data(), gb.input.data()) < 1e-10);
    }

    #[test]
    fn small_gradient_check() {
        let dags = DagSet::new(3, 3, Connectivity::Eight).unwrap();
        let p = random_params(2, 2, 2, Activation::Tanh, Activation::Tanh, 12);
        let x = random(&[3, 3, 2], &mut rng(13));
        let up = random(&[3, 3, 2], &mut rng(14));
        let acts = dagrnn_forward(&x, &dags, &p).unwrap();
        let g = dagrnn_backward(&x, &acts, &dags, &p, &up).unwrap();
        let n = finite_diff_gradient(
            |t| dagrnn_forward(t, &dags, &p).unwrap().output.dot(&up).unwrap(),
            &x,
            1e-5,
        )
        .unwrap();
        assert!(max_rel_err(g.input.data(), n.data()) < 1e-5);
        let _ = LatticeDag::new(1, 1, Direction::SE, Connectivity::Four).unwrap();
    }
}
