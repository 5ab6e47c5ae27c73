use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::error::ErrorKind;
use clap::{Args, Parser, Subcommand};
use serde::Serialize;

use sanet_core::eval::{curve_csv, MetricReport};
use sanet_core::experiment::{
    domain_sequences, run_demo, specialize_for_tracking, test_sequence, tracker_config, train_on_sequences,
    ExperimentConfig,
};
use sanet_core::gradcheck::suite::full_suite;
use sanet_core::io::{
    config_hash, load_checkpoint, load_sequence, parse_groundtruth, read_json, save_checkpoint, save_sequence,
    synth_sequence, write_json, write_text, RunManifest, Sequence, SynthSpec, TrajectoryDocument, GROUNDTRUTH_FILE,
};
use sanet_core::tracker::{run_tracker, Trajectory};

#[derive(Parser, Debug)]
#[command(name = "sanet", version, about = "Structure-aware visual tracking on synthetic and OTB-style sequences")]
struct Cli {
    #[command(flatten)]
    common: Common,
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Debug, Clone)]
struct Common {
    /// Experiment configuration (JSON); unknown keys are rejected.
    #[arg(long, global = true, value_name = "FILE")]
    config: Option<PathBuf>,
    #[arg(long, global = true, default_value_t = 0)]
    seed: u64,
    /// Output directory.
    #[arg(long, global = true, value_name = "DIR", default_value = "out")]
    out: PathBuf,
    /// Drop the DAG-RNNs (CNN-only network).
    #[arg(long, global = true)]
    ablate_rnn: bool,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Render a synthetic sequence to `<out>/sequence`.
    Synth {
        /// Scene variant; defaults to the configured test variant.
        #[arg(long)]
        variant: Option<usize>,
        /// Full scene description (JSON) instead of a variant.
        #[arg(long, value_name = "FILE", conflicts_with = "variant")]
        spec: Option<PathBuf>,
    },
    /// Multi-domain training; one domain per sequence directory, or
    /// synthetic domains when none are given.
    Train {
        sequences: Vec<PathBuf>,
    },
    /// Track a sequence with a trained checkpoint.
    Track {
        #[arg(long, value_name = "FILE")]
        checkpoint: PathBuf,
        /// Sequence directory; the synthetic test sequence when omitted.
        sequence: Option<PathBuf>,
    },
    /// Score a trajectory (CSV or JSON) against ground truth.
    Eval {
        #[arg(long, value_name = "FILE")]
        trajectory: PathBuf,
        /// Sequence directory or ground-truth file.
        #[arg(long, value_name = "PATH")]
        groundtruth: PathBuf,
    },
    /// Finite-difference gradient checks.
    Gradcheck,
    /// Synthesise, train, track and score at tiny scale.
    Demo,
}

enum Failure {
    Usage(String),
    Runtime(String),
    Check(String),
}

impl From<sanet_core::Error> for Failure {
    fn from(e: sanet_core::Error) -> Self {
        Failure::Runtime(e.to_string())
    }
}

type Outcome<T> = std::result::Result<T, Failure>;

fn load_config(common: &Common) -> Outcome<ExperimentConfig> {
    let mut cfg = match &common.config {
        Some(path) => read_json::<ExperimentConfig>(path)
            .map_err(|e| Failure::Usage(format!("config {}: {e}", path.display())))?,
        None => ExperimentConfig::tiny(),
    };
    if common.ablate_rnn {
        cfg = cfg.ablate_rnn();
    }
    Ok(cfg)
}

fn finish<S: Serialize>(common: &Common, command: &str, config: &S, artifacts: Vec<String>) -> Outcome<()> {
    let manifest = RunManifest::new(command, common.seed, config, artifacts)?;
    write_json(&common.out.join("run.json"), &manifest)?;
    Ok(())
}

fn write_trajectory(out: &Path, seq: &str, seed: u64, hash: &str, traj: &Trajectory) -> Outcome<Vec<String>> {
    write_text(&out.join("trajectory.csv"), &traj.to_csv())?;
    write_json(
        &out.join("trajectory.json"),
        &TrajectoryDocument::new(seq, seed, hash.to_string(), traj),
    )?;
    Ok(vec!["trajectory.csv".into(), "trajectory.json".into()])
}

fn write_report(out: &Path, report: &MetricReport) -> Outcome<Vec<String>> {
    write_json(&out.join("metrics.json"), report)?;
    write_text(&out.join("precision.csv"), &curve_csv(&report.precision_curve))?;
    write_text(&out.join("success.csv"), &curve_csv(&report.success_curve))?;
    Ok(vec!["metrics.json".into(), "precision.csv".into(), "success.csv".into()])
}

fn summary(report: &MetricReport) -> String {
    format!(
        "precision@20 {:.4}  success AUC {:.4}  failures {}",
        report.precision_at_20, report.success_auc, report.failures
    )
}

fn synth(common: &Common, variant: Option<usize>, spec: Option<&Path>) -> Outcome<()> {
    let cfg = load_config(common)?;
    let spec = match spec {
        Some(p) => read_json::<SynthSpec>(p).map_err(|e| Failure::Usage(format!("scene {}: {e}", p.display())))?,
        None => SynthSpec::variant(variant.unwrap_or(cfg.data.test_variant), common.seed),
    };
    let seq = synth_sequence(&spec)?;
    save_sequence(&seq, &common.out.join("sequence"))?;
    write_json(&common.out.join("scene.json"), &spec)?;
    println!("wrote {} frames to {}", seq.len(), common.out.join("sequence").display());
    finish(common, "synth", &spec, vec!["sequence".into(), "scene.json".into()])
}

fn train(common: &Common, dirs: &[PathBuf]) -> Outcome<()> {
    let cfg = load_config(common)?;
    let sequences = if dirs.is_empty() {
        domain_sequences(&cfg.data, common.seed)?
    } else {
        dirs.iter().map(|d| load_sequence(d)).collect::<sanet_core::Result<Vec<Sequence>>>()?
    };
    let trained = train_on_sequences::<f32>(&cfg, &sequences, common.seed, |rec, _| {
        log::debug!("iteration {} domain {} loss {:.4}", rec.iteration, rec.domain, rec.loss);
    })?;
    let iterations = trained.log.records.len();
    save_checkpoint(&trained.net, iterations, &common.out.join("model.ckpt"))?;
    write_text(&common.out.join("train_log.csv"), &trained.log.to_csv())?;
    let last = trained.log.records.last().map_or(f64::NAN, |r| r.loss);
    println!(
        "trained {} domains for {iterations} iterations, final loss {last:.4}, converged {}",
        sequences.len(),
        trained.log.converged
    );
    finish(common, "train", &cfg, vec!["model.ckpt".into(), "train_log.csv".into()])
}

fn track(common: &Common, checkpoint: &Path, sequence: Option<&Path>) -> Outcome<()> {
    let cfg = load_config(common)?;
    let (net, _) = load_checkpoint::<f32>(checkpoint)?;
    let net = if net.num_branches() == 1 {
        net
    } else {
        specialize_for_tracking(&net, common.seed)
    };
    let seq = match sequence {
        Some(dir) => load_sequence(dir)?,
        None => test_sequence(&cfg.data, common.seed)?,
    };
    let traj = run_tracker(&net, &seq, &tracker_config(&cfg, common.seed))?;
    let hash = config_hash(&cfg)?;
    let mut artifacts = write_trajectory(&common.out, &seq.name, common.seed, &hash, &traj)?;
    if seq.has_full_groundtruth() {
        let report = MetricReport::compute(&traj, &Trajectory::from_boxes(&seq.groundtruth))?;
        println!("{}", summary(&report));
        artifacts.extend(write_report(&common.out, &report)?);
    }
    println!("tracked {} frames of {}", traj.len(), seq.name);
    finish(common, "track", &cfg, artifacts)
}

fn read_trajectory(path: &Path) -> Outcome<Trajectory> {
    let text = std::fs::read_to_string(path).map_err(|e| Failure::Runtime(format!("{}: {e}", path.display())))?;
    let traj = if path.extension().is_some_and(|e| e == "json") {
        serde_json::from_str::<TrajectoryDocument>(&text)
            .map_err(|e| Failure::Runtime(format!("{}: {e}", path.display())))?
            .trajectory()?
    } else {
        Trajectory::from_csv(&text)?
    };
    Ok(traj)
}

fn eval(common: &Common, trajectory: &Path, groundtruth: &Path) -> Outcome<()> {
    let traj = read_trajectory(trajectory)?;
    let gt_file = if groundtruth.is_dir() {
        groundtruth.join(GROUNDTRUTH_FILE)
    } else {
        groundtruth.to_path_buf()
    };
    let text =
        std::fs::read_to_string(&gt_file).map_err(|e| Failure::Runtime(format!("{}: {e}", gt_file.display())))?;
    let gt = Trajectory::from_boxes(&parse_groundtruth(&text, &gt_file)?);
    let report = MetricReport::compute(&traj, &gt)?;
    println!("{}", summary(&report));
    let artifacts = write_report(&common.out, &report)?;
    let inputs = serde_json::json!({
        "trajectory": trajectory.display().to_string(),
        "groundtruth": gt_file.display().to_string(),
    });
    finish(common, "eval", &inputs, artifacts)
}

fn gradcheck(common: &Common) -> Outcome<()> {
    let checks = full_suite(common.seed)?;
    for c in &checks {
        println!(
            "{} {:<48} {:.3e} (tol {:.0e}, {} coords)",
            if c.passed() { "ok  " } else { "FAIL" },
            c.name,
            c.max_rel_err,
            c.tolerance,
            c.coordinates
        );
    }
    write_json(&common.out.join("gradcheck.json"), &checks)?;
    finish(common, "gradcheck", &serde_json::json!({ "suite": "full" }), vec!["gradcheck.json".into()])?;
    let failed = checks.iter().filter(|c| !c.passed()).count();
    if failed > 0 {
        return Err(Failure::Check(format!("{failed} of {} gradient checks failed", checks.len())));
    }
    println!("all {} gradient checks passed", checks.len());
    Ok(())
}

fn demo(common: &Common) -> Outcome<()> {
    let cfg = load_config(common)?;
    let out = run_demo::<f32>(&cfg, common.seed)?;
    let hash = config_hash(&cfg)?;
    let mut artifacts = write_trajectory(&common.out, &out.sequence.name, common.seed, &hash, &out.trajectory)?;
    artifacts.extend(write_report(&common.out, &out.report)?);
    save_checkpoint(&out.trained.net, out.trained.log.records.len(), &common.out.join("model.ckpt"))?;
    write_text(&common.out.join("train_log.csv"), &out.trained.log.to_csv())?;
    artifacts.extend(["model.ckpt".to_string(), "train_log.csv".to_string()]);
    println!("{}", summary(&out.report));
    finish(common, "demo", &cfg, artifacts)
}

fn run(cli: Cli) -> Outcome<()> {
    let common = &cli.common;
    match &cli.command {
        Command::Synth { variant, spec } => synth(common, *variant, spec.as_deref()),
        Command::Train { sequences } => train(common, sequences),
        Command::Track { checkpoint, sequence } => track(common, checkpoint, sequence.as_deref()),
        Command::Eval {
            trajectory,
            groundtruth,
        } => eval(common, trajectory, groundtruth),
        Command::Gradcheck => gradcheck(common),
        Command::Demo => demo(common),
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return match e.kind() {
                ErrorKind::DisplayHelp | ErrorKind::DisplayVersion => ExitCode::SUCCESS,
                _ => ExitCode::from(1),
            };
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Usage(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(1)
        }
        Err(Failure::Runtime(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(2)
        }
        Err(Failure::Check(msg)) => {
            eprintln!("check failed: {msg}");
            ExitCode::from(3)
        }
    }
}
