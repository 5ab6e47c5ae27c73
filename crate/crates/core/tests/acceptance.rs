//! Acceptance criteria. Each test prints one `PASS`/`FAIL` line.

use std::collections::BTreeSet;
use std::path::Path;
use std::time::{Duration, Instant};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use sanet_core::dagrnn::{dagrnn_forward, Connectivity, DagRnnParams, DagSet, Direction, LatticeDag};
use sanet_core::eval::{precision_metrics, success_metrics, vot_style_eval, ReinitTracker, VotConfig};
use sanet_core::experiment::{
    domain_sequences, run_demo, specialize_for_tracking, tracker_config, train_on_sequences, ExperimentConfig,
};
use sanet_core::gradcheck::suite::{
    dagrnn_checks, end_to_end_checks, layer_checks, tanh_tiny_config, Check, DAGRNN_TOL, END_TO_END_TOL, LAYER_TOL,
};
use sanet_core::io::{decode_checkpoint, encode_checkpoint, load_checkpoint, parse_groundtruth, save_checkpoint};
use sanet_core::io::{synth_sequence, Image, SynthSpec};
use sanet_core::layers::Activation;
use sanet_core::model::{domain_accuracy, select_top_m, Sanet, SanetConfig};
use sanet_core::tracker::{iou, run_tracker_detailed, BBox, TrackerConfig, Trajectory, TrajectoryRecord};
use sanet_core::{Error, Result, Tensor};

fn verdict(criterion: &str, pass: bool, detail: impl std::fmt::Display) {
    println!("{} {criterion}: {detail}", if pass { "PASS" } else { "FAIL" });
    assert!(pass, "{criterion}: {detail}");
}

fn worst(checks: &[Check]) -> &Check {
    checks
        .iter()
        .max_by(|a, b| a.max_rel_err.total_cmp(&b.max_rel_err))
        .expect("non-empty check list")
}

fn summarize(checks: &[Check]) -> String {
    let failed: Vec<String> = checks
        .iter()
        .filter(|c| !c.passed())
        .map(|c| format!("{} {:.2e}", c.name, c.max_rel_err))
        .collect();
    let w = worst(checks);
    format!(
        "{} tensors, worst {} {:.2e}, failing [{}]",
        checks.len(),
        w.name,
        w.max_rel_err,
        failed.join(", ")
    )
}

#[test]
fn dagrnn_gradients() {
    let start = Instant::now();
    let mut checks = Vec::new();
    for conn in [Connectivity::Four, Connectivity::Eight] {
        let c = dagrnn_checks(4, 5, 3, 2, conn, Activation::Tanh, Activation::Tanh, 11).unwrap();
        checks.extend(c);
    }
    let elapsed = start.elapsed();
    let all_dirs = Direction::ALL.iter().all(|d| checks.iter().any(|c| c.name.contains(&format!(" {d}."))));
    let tol_ok = checks.iter().all(|c| c.tolerance == DAGRNN_TOL && c.passed());
    verdict(
        "dagrnn gradients",
        all_dirs && tol_ok && elapsed < Duration::from_secs(60),
        format!("{} in {elapsed:.1?} (< 1e-5, < 60 s)", summarize(&checks)),
    );
}

#[test]
fn layer_gradients() {
    let start = Instant::now();
    let checks = layer_checks(5).unwrap();
    let elapsed = start.elapsed();
    let covered = ["conv", "pool", "fc", "activation", "softmax", "concat"]
        .iter()
        .all(|k| checks.iter().any(|c| c.name.contains(k)));
    let tol_ok = checks.iter().all(|c| c.tolerance == LAYER_TOL && c.passed());
    verdict(
        "layer gradients",
        covered && tol_ok && elapsed < Duration::from_secs(60),
        format!("{} in {elapsed:.1?} (< 1e-5, < 60 s)", summarize(&checks)),
    );
}

#[test]
fn end_to_end_gradients() {
    let start = Instant::now();
    let config = tanh_tiny_config();
    let checks = end_to_end_checks(config.clone(), 0).unwrap();
    let elapsed = start.elapsed();
    let net = Sanet::<f64>::build(config, 0).unwrap();
    let every_tensor = checks.len() == net.tensors().len();
    let tol_ok = checks.iter().all(|c| c.tolerance == END_TO_END_TOL && c.passed());
    verdict(
        "end-to-end gradients",
        every_tensor && tol_ok && elapsed < Duration::from_secs(300),
        format!("{} in {elapsed:.1?} (< 1e-4, < 5 min)", summarize(&checks)),
    );
}

/// Predecessors by exhaustive pair enumeration: `u` feeds `v` when the step
/// from `u` to `v` is one of the direction's upstream steps.
fn brute_predecessors(h: usize, w: usize, dir: Direction, conn: Connectivity) -> Vec<BTreeSet<usize>> {
    let (sy, sx) = dir.flow();
    let mut preds = vec![BTreeSet::new(); h * w];
    for v in 0..h * w {
        let (vr, vc) = ((v / w) as isize, (v % w) as isize);
        for u in 0..h * w {
            let (ur, uc) = ((u / w) as isize, (u % w) as isize);
            let step = (vr - ur, vc - uc);
            let feeds = step == (sy, 0) || step == (0, sx) || (conn == Connectivity::Eight && step == (sy, sx));
            if feeds {
                preds[v].insert(u);
            }
        }
    }
    preds
}

fn kahn_is_acyclic(dag: &LatticeDag) -> bool {
    let n = dag.len();
    let mut indeg: Vec<usize> = (0..n).map(|v| dag.predecessors(v).len()).collect();
    let mut ready: Vec<usize> = (0..n).filter(|&v| indeg[v] == 0).collect();
    let mut seen = 0;
    while let Some(v) = ready.pop() {
        seen += 1;
        for &s in dag.successors(v) {
            indeg[s] -= 1;
            if indeg[s] == 0 {
                ready.push(s);
            }
        }
    }
    seen == n
}

/// No vertex reaches itself along successor edges.
fn no_self_reach(dag: &LatticeDag) -> bool {
    (0..dag.len()).all(|start| {
        let mut seen = vec![false; dag.len()];
        let mut stack: Vec<usize> = dag.successors(start).to_vec();
        while let Some(v) = stack.pop() {
            if v == start {
                return false;
            }
            if !std::mem::replace(&mut seen[v], true) {
                stack.extend_from_slice(dag.successors(v));
            }
        }
        true
    })
}

#[test]
fn dag_structure() {
    let mut cases = 0;
    let mut problems = Vec::new();
    for h in 1..=6 {
        for w in 1..=6 {
            for conn in [Connectivity::Four, Connectivity::Eight] {
                let mut union = BTreeSet::new();
                for dir in Direction::ALL {
                    cases += 1;
                    let dag = LatticeDag::new(h, w, dir, conn).unwrap();
                    let preds = brute_predecessors(h, w, dir, conn);
                    for v in 0..h * w {
                        let got: BTreeSet<usize> = dag.predecessors(v).iter().copied().collect();
                        if got != preds[v] {
                            problems.push(format!("{h}x{w} {conn:?} {dir} preds of {v}"));
                        }
                        let succ: BTreeSet<usize> = (0..h * w).filter(|&s| preds[s].contains(&v)).collect();
                        let got: BTreeSet<usize> = dag.successors(v).iter().copied().collect();
                        if got != succ {
                            problems.push(format!("{h}x{w} {conn:?} {dir} succs of {v}"));
                        }
                        for &u in dag.predecessors(v) {
                            union.insert((u.min(v), u.max(v)));
                        }
                    }
                    if !(kahn_is_acyclic(&dag) && no_self_reach(&dag)) {
                        problems.push(format!("{h}x{w} {conn:?} {dir} has a cycle"));
                    }
                    let mut pos = vec![usize::MAX; h * w];
                    for (i, &v) in dag.topo_order().iter().enumerate() {
                        pos[v] = i;
                    }
                    let order_ok = pos.iter().all(|&p| p != usize::MAX)
                        && (0..h * w).all(|v| dag.predecessors(v).iter().all(|&u| pos[u] < pos[v]));
                    if !order_ok {
                        problems.push(format!("{h}x{w} {conn:?} {dir} topological order"));
                    }
                }
                let mut neighbours = BTreeSet::new();
                for a in 0..h * w {
                    for b in a + 1..h * w {
                        let dr = (a / w).abs_diff(b / w);
                        let dc = (a % w).abs_diff(b % w);
                        let adjacent = match conn {
                            Connectivity::Four => dr + dc == 1,
                            Connectivity::Eight => dr.max(dc) == 1,
                        };
                        if adjacent {
                            neighbours.insert((a, b));
                        }
                    }
                }
                if union != neighbours {
                    problems.push(format!("{h}x{w} {conn:?} union of edges"));
                }
            }
        }
    }
    verdict(
        "dag structure",
        problems.is_empty(),
        format!("{cases} lattices checked, mismatches {problems:?}"),
    );
}

fn matvec(m: &Tensor<f64>, x: &[f64]) -> Vec<f64> {
    let cols = x.len();
    m.data()
        .chunks(cols)
        .map(|row| row.iter().zip(x).map(|(a, b)| a * b).sum())
        .collect()
}

#[test]
fn chain_degeneracy() {
    let (len, cin, hid, out) = (16, 3, 4, 2);
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let x = Tensor::new(&[1, len, cin], (0..len * cin).map(|_| rng.random_range(-1.0..1.0)).collect()).unwrap();
    let mut worst_gap = 0.0f64;
    for conn in [Connectivity::Four, Connectivity::Eight] {
        let dags = DagSet::new(1, len, conn).unwrap();
        for active in Direction::ALL {
            let mut params =
                DagRnnParams::<f64>::init(cin, hid, out, conn.max_predecessors(), Activation::Tanh, Activation::Tanh, &mut rng);
            for d in Direction::ALL {
                let p = &mut params.dirs[d.index()];
                if d != active {
                    p.v.data_mut().fill(0.0);
                }
                for b in p.b.data_mut() {
                    *b = rng.random_range(-0.5..0.5);
                }
            }
            for c in params.c.data_mut() {
                *c = rng.random_range(-0.5..0.5);
            }
            let y = dagrnn_forward(&x, &dags, &params).unwrap().output;

            let p = &params.dirs[active.index()];
            let cols: Vec<usize> = if active.flow().1 > 0 {
                (0..len).collect()
            } else {
                (0..len).rev().collect()
            };
            let mut state = vec![0.0; hid];
            for (i, &col) in cols.iter().enumerate() {
                let xc = &x.data()[col * cin..(col + 1) * cin];
                let ux = matvec(&p.u, xc);
                let wh = if i == 0 { vec![0.0; hid] } else { matvec(&p.w, &state) };
                state = (0..hid).map(|k| (ux[k] + wh[k] + p.b.data()[k]).tanh()).collect();
                let vh = matvec(&p.v, &state);
                for k in 0..out {
                    let expect = (vh[k] + params.c.data()[k]).tanh();
                    worst_gap = worst_gap.max((y.data()[col * out + k] - expect).abs());
                }
            }
        }
    }
    verdict(
        "chain degeneracy",
        worst_gap <= 1e-12,
        format!("1x16 lattice, max |dag − sequential| = {worst_gap:.2e} (≤ 1e-12)"),
    );
}

#[test]
fn multidomain_isolation() {
    let start = Instant::now();
    let cfg = ExperimentConfig::tiny();
    let seqs = domain_sequences(&cfg.data, 0).unwrap();
    let k = seqs.len();
    let mut violations = Vec::new();
    let mut iterations = 0;
    let snapshot = |net: &Sanet<f32>| -> Vec<Vec<u64>> {
        net.branches
            .iter()
            .map(|b| b.weights.data().iter().chain(b.bias.data()).map(|v| v.to_bits() as u64).collect())
            .collect()
    };
    let initial = Sanet::<f32>::build(
        SanetConfig {
            num_domains: k,
            ..cfg.network.clone()
        },
        sanet_core::experiment::derive_seed(0, 1),
    )
    .unwrap();
    let mut previous = snapshot(&initial);
    let trained = train_on_sequences::<f32>(&cfg, &seqs, 0, |rec, net| {
        iterations += 1;
        let now = snapshot(net);
        let prev = &previous;
        if rec.domain != rec.iteration % k {
            violations.push(format!("iteration {} trained domain {}", rec.iteration, rec.domain));
        }
        for b in 0..k {
            if b != rec.domain && now[b] != prev[b] {
                violations.push(format!("iteration {} moved branch {b}", rec.iteration));
            }
        }
        previous = now;
    })
    .unwrap();
    let elapsed = start.elapsed();
    let accs: Vec<f64> = trained
        .datasets
        .iter()
        .enumerate()
        .map(|(b, d)| domain_accuracy(&trained.net, d, b).unwrap())
        .collect();
    let accurate = accs.iter().all(|&a| a >= 0.95);
    verdict(
        "multidomain isolation",
        violations.is_empty() && accurate && iterations <= 600 && elapsed < Duration::from_secs(600),
        format!(
            "K = {k}, {iterations} iterations in {elapsed:.1?}, per-domain accuracy {accs:?} (≥ 0.95, < 10 min), violations {violations:?}"
        ),
    );
}

/// Full sort by score, highest first, ties by ascending index.
fn sorted_top_m(scores: &[f64], m: usize) -> Vec<usize> {
    let mut idx: Vec<usize> = (0..scores.len()).collect();
    idx.sort_by(|&a, &b| scores[b].partial_cmp(&scores[a]).unwrap().then(a.cmp(&b)));
    idx.truncate(m);
    idx
}

#[test]
fn hard_mining() {
    let mut rng = ChaCha8Rng::seed_from_u64(17);
    let mut mismatches = Vec::new();
    for pool in 0..50 {
        let n = rng.random_range(1..=256);
        let m = rng.random_range(0..=n);
        let scores: Vec<f64> = match pool % 5 {
            0 => vec![0.5; n],
            1 => (0..n).map(|_| rng.random_range(0..4) as f64 / 4.0).collect(),
            _ => (0..n).map(|_| rng.random_range(0.0..1.0)).collect(),
        };
        if select_top_m(&scores, m).unwrap() != sorted_top_m(&scores, m) {
            mismatches.push(pool);
        }
        let as32: Vec<f32> = scores.iter().map(|&s| s as f32).collect();
        if select_top_m(&as32, m).unwrap() != sorted_top_m(&scores, m) {
            mismatches.push(pool);
        }
    }
    let all_ties = select_top_m(&[0.25f64; 7], 3).unwrap();
    verdict(
        "hard mining",
        mismatches.is_empty() && all_ties == vec![0, 1, 2],
        format!("50 pools against a full sort, mismatching pools {mismatches:?}, all-ties pick {all_ties:?}"),
    );
}

fn tracker_net() -> Sanet<f32> {
    Sanet::build(
        SanetConfig {
            num_domains: 1,
            ..SanetConfig::tiny()
        },
        21,
    )
    .unwrap()
}

#[test]
fn tracker_determinism_and_gating() {
    let cfg = ExperimentConfig::tiny();
    let seqs = domain_sequences(&cfg.data, 0).unwrap();
    let trained = train_on_sequences::<f32>(&cfg, &seqs, 0, |_, _| {}).unwrap();
    let net = specialize_for_tracking(&trained.net, 0);
    let seq = synth_sequence(&SynthSpec::variant(0, 5)).unwrap();
    let cfg = tracker_config(&cfg, 9);
    let (a, outcomes) = run_tracker_detailed(&net, &seq, &cfg).unwrap();
    let (b, _) = run_tracker_detailed(&net, &seq, &cfg).unwrap();
    let identical = a.to_csv().as_bytes() == b.to_csv().as_bytes();

    // An untrained head scores below the threshold, so both sides of the gate
    // are exercised.
    let short = synth_sequence(&SynthSpec {
        length: 12,
        ..SynthSpec::variant(2, 5)
    })
    .unwrap();
    let (_, cold) = run_tracker_detailed(&tracker_net(), &short, &cfg).unwrap();
    let outcomes: Vec<_> = outcomes.into_iter().chain(cold).collect();
    let gated: Vec<_> = outcomes.iter().filter(|o| o.score <= cfg.theta).collect();
    let leaks = gated.iter().filter(|o| o.refined || o.bbox != o.raw).count();
    let refined = outcomes.iter().filter(|o| o.refined).count();

    let still = synth_sequence(&SynthSpec {
        length: 12,
        target_velocity: [0.0, 0.0],
        distractor_layout: None,
        motion_jitter: 0,
        noise: 0,
        ..SynthSpec::default()
    })
    .unwrap();
    let mut still_cfg = TrackerConfig::tiny();
    still_cfg.particles.translation_std = 0.0;
    still_cfg.particles.scale_std = 0.0;
    still_cfg.refine = false;
    let (traj, _) = run_tracker_detailed(&tracker_net(), &still, &still_cfg).unwrap();
    let ious: Vec<f64> = traj.boxes().iter().zip(&still.groundtruth).map(|(p, g)| iou(p, g)).collect();
    let perfect = ious.iter().all(|&o| o == 1.0);

    verdict(
        "tracker determinism and gating",
        identical && leaks == 0 && perfect,
        format!(
            "repeat run identical {identical}, {} of {} frames at or below threshold with {leaks} refined, {refined} refined above, static-target IoU min {:.3}",
            gated.len(),
            outcomes.len(),
            ious.iter().cloned().fold(f64::INFINITY, f64::min)
        ),
    );
}

#[test]
fn distractor_ablation() {
    let start = Instant::now();
    let fused = ExperimentConfig::tiny();
    let cnn_only = ExperimentConfig::tiny().ablate_rnn();
    let mut rows = Vec::new();
    for seed in 0..5 {
        let a = run_demo::<f32>(&fused, seed).unwrap().report.success_auc;
        let b = run_demo::<f32>(&cnn_only, seed).unwrap().report.success_auc;
        rows.push((a, b));
    }
    let elapsed = start.elapsed();
    let mean = |f: fn(&(f64, f64)) -> f64| rows.iter().map(f).sum::<f64>() / rows.len() as f64;
    let (fused_auc, cnn_auc) = (mean(|r| r.0), mean(|r| r.1));
    verdict(
        "distractor ablation",
        fused_auc >= cnn_auc && elapsed < Duration::from_secs(1800),
        format!(
            "mean success AUC fused {fused_auc:.4} vs cnn-only {cnn_auc:.4} over 5 seeds {rows:?} in {elapsed:.1?} (< 30 min)"
        ),
    );
}

fn traj(boxes: &[BBox]) -> Trajectory {
    Trajectory::new(
        boxes
            .iter()
            .enumerate()
            .map(|(frame, &bbox)| TrajectoryRecord {
                frame,
                bbox,
                score: None,
            })
            .collect(),
    )
    .unwrap()
}

/// Replays scripted boxes and records which frames it was asked about.
struct Scripted {
    gt: Vec<BBox>,
    far: Vec<usize>,
    partial: Vec<usize>,
    inits: Vec<usize>,
    tracked: Vec<usize>,
}

impl ReinitTracker<usize> for Scripted {
    fn initialize(&mut self, frame: &usize, _bbox: BBox) -> Result<()> {
        self.inits.push(*frame);
        Ok(())
    }

    fn track(&mut self, frame: &usize) -> Result<BBox> {
        self.tracked.push(*frame);
        let g = self.gt[*frame];
        Ok(if self.far.contains(frame) {
            g.translated(100.0, 0.0)
        } else if self.partial.contains(frame) {
            g.translated(g.w / 2.0, 0.0)
        } else {
            g
        })
    }
}

#[test]
fn metrics() {
    let gt = [
        BBox::new(0.0, 0.0, 10.0, 10.0),
        BBox::new(10.0, 10.0, 10.0, 10.0),
        BBox::new(20.0, 20.0, 10.0, 10.0),
        BBox::new(30.0, 30.0, 10.0, 10.0),
    ];
    let out = [
        BBox::new(0.0, 0.0, 10.0, 10.0),
        BBox::new(15.0, 10.0, 10.0, 10.0),
        BBox::new(20.0, 20.0, 20.0, 20.0),
        BBox::new(60.0, 30.0, 10.0, 10.0),
    ];
    // Centre errors 0, 5, √50, 30; overlaps 1, 1/3, 1/4, 0.
    let (pc, p20) = precision_metrics(&traj(&out), &traj(&gt)).unwrap();
    let (sc, auc) = success_metrics(&traj(&out), &traj(&gt)).unwrap();
    let hand_precision = p20 == 0.75 && pc[5].value == 0.5 && pc[7].value == 0.5 && pc[8].value == 0.75 && pc[30].value == 1.0;
    let hand_success = auc == 8.0 / 21.0 && sc[0].value == 0.75 && sc[5].value == 0.5 && sc[20].value == 0.0;

    let mut rng = ChaCha8Rng::seed_from_u64(23);
    let mut non_monotone = 0;
    for _ in 0..100 {
        let n = rng.random_range(1..40);
        let rand_box = |rng: &mut ChaCha8Rng| {
            BBox::new(
                rng.random_range(0.0..80.0),
                rng.random_range(0.0..80.0),
                rng.random_range(2.0..30.0),
                rng.random_range(2.0..30.0),
            )
        };
        let g: Vec<BBox> = (0..n).map(|_| rand_box(&mut rng)).collect();
        let p: Vec<BBox> = g
            .iter()
            .map(|b| {
                if rng.random_bool(0.3) {
                    rand_box(&mut rng)
                } else {
                    b.translated(rng.random_range(-8.0..8.0), rng.random_range(-8.0..8.0))
                }
            })
            .collect();
        let (pc, _) = precision_metrics(&traj(&p), &traj(&g)).unwrap();
        let (sc, auc) = success_metrics(&traj(&p), &traj(&g)).unwrap();
        let up = pc.windows(2).all(|w| w[0].value <= w[1].value);
        let down = sc.windows(2).all(|w| w[0].value >= w[1].value);
        let bounded = pc.iter().chain(&sc).all(|c| (0.0..=1.0).contains(&c.value)) && (0.0..=1.0).contains(&auc);
        if !(up && down && bounded) {
            non_monotone += 1;
        }
    }

    // Failures at 3, 10 (inside a burn-in) and 30; frame 27 half-overlaps.
    let n = 40;
    let vgt: Vec<BBox> = (0..n).map(|i| BBox::new(i as f64, 5.0, 10.0, 10.0)).collect();
    let mut scripted = Scripted {
        gt: vgt.clone(),
        far: vec![3, 10, 30],
        partial: vec![27],
        inits: Vec::new(),
        tracked: Vec::new(),
    };
    let frames: Vec<usize> = (0..n).collect();
    let vot = vot_style_eval(&mut scripted, &frames, &vgt, &VotConfig::default()).unwrap();
    let expected_tracked: Vec<usize> = [1, 2, 3, 9, 10]
        .into_iter()
        .chain(16..=30)
        .chain(36..40)
        .collect();
    let hand_vot = vot.failures == 3
        && vot.failure_frames == vec![3, 10, 30]
        && vot.initializations == vec![0, 8, 15, 35]
        && scripted.inits == vec![0, 8, 15, 35]
        && scripted.tracked == expected_tracked
        && vot.scored_frames == 4
        && vot.accuracy == Some((1.0 + 1.0 / 3.0 + 1.0 + 1.0) / 4.0);

    verdict(
        "metrics",
        hand_precision && hand_success && non_monotone == 0 && hand_vot,
        format!(
            "precision@20 {p20}, auc {auc} (hand 0.75, 8/21), {non_monotone} of 100 random curves non-monotone, vot failures {} at {:?}, inits {:?}, accuracy {:?} (hand 5/6)",
            vot.failures, vot.failure_frames, vot.initializations, vot.accuracy
        ),
    );
}

fn bits(net: &Sanet<f32>) -> Vec<u32> {
    net.tensors().iter().flat_map(|t| t.data().iter().map(|v| v.to_bits())).collect()
}

fn parse_error_line(text: &str) -> Option<usize> {
    match parse_groundtruth(text, Path::new("groundtruth_rect.txt")) {
        Err(Error::Parse { line, .. }) => Some(line),
        _ => None,
    }
}

#[test]
fn persistence() {
    let mut net = tracker_net();
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    for t in net.tensors_mut() {
        for v in t.data_mut() {
            *v += rng.random_range(-1e-3f32..1e-3);
        }
    }
    let bytes = encode_checkpoint(&net, 42).unwrap();
    let (back, meta) = decode_checkpoint::<f32>(&bytes).unwrap();
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("net.ckpt");
    save_checkpoint(&net, 42, &path).unwrap();
    let (from_disk, _) = load_checkpoint::<f32>(&path).unwrap();
    let checkpoint_ok = bits(&back) == bits(&net)
        && bits(&from_disk) == bits(&net)
        && back.config() == net.config()
        && meta.iterations == 42
        && encode_checkpoint(&back, 42).unwrap() == bytes;

    let (w, h) = (13, 7);
    let pixels: Vec<u8> = (0..w * h * 3).map(|_| rng.random()).collect();
    let img = Image::new(w, h, pixels).unwrap();
    let p6 = img.encode_p6();
    let decoded = Image::decode_p6(&p6).unwrap();
    let p6_ok = decoded == img && decoded.encode_p6() == p6;

    let cases = [
        ("1,2,3,4\n5,6,x,8\n", 2),
        ("1,2,3,4\n\n1,2,3\n", 3),
        ("1 2 3 0\n", 1),
        ("1,2,3,4\n1,2,3,4\n1,2,3,4\n1,2,nan,4\n", 4),
    ];
    let lines: Vec<Option<usize>> = cases.iter().map(|(t, _)| parse_error_line(t)).collect();
    let parse_ok = cases.iter().zip(&lines).all(|((_, want), got)| *got == Some(*want));
    let message = parse_groundtruth("1,2,3,4\n5,6,x,8\n", Path::new("gt.txt")).unwrap_err().to_string();

    verdict(
        "persistence",
        checkpoint_ok && p6_ok && parse_ok && message.starts_with("gt.txt:2:"),
        format!(
            "checkpoint bit-exact {checkpoint_ok}, P6 round trip {p6_ok}, error lines {lines:?}, message {message:?}"
        ),
    );
}
