//! Precision and success curves, and a VOT-style reinitialisation protocol.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::tracker::{iou, BBox, Trajectory};

/// Centre-error thresholds 0, 1, …, 50 px.
pub const PRECISION_THRESHOLDS: usize = 51;
/// Overlap thresholds 0, 0.05, …, 1.
pub const SUCCESS_THRESHOLDS: usize = 21;
pub const PRECISION_REPORT_PX: f64 = 20.0;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CurvePoint {
    pub threshold: f64,
    pub value: f64,
}

fn aligned(traj: &Trajectory, gt: &Trajectory) -> Result<Vec<(BBox, BBox)>> {
    if traj.len() != gt.len() {
        return Err(Error::Config(format!(
            "trajectory has {} frames, ground truth {}",
            traj.len(),
            gt.len()
        )));
    }
    if traj.is_empty() {
        return Err(Error::Empty("trajectory".into()));
    }
    traj.records()
        .iter()
        .zip(gt.records())
        .map(|(a, b)| {
            if a.frame != b.frame {
                return Err(Error::Config(format!(
                    "frame {} of the trajectory is paired with ground-truth frame {}",
                    a.frame, b.frame
                )));
            }
            Ok((a.bbox, b.bbox))
        })
        .collect()
}

pub fn center_errors(traj: &Trajectory, gt: &Trajectory) -> Result<Vec<f64>> {
    Ok(aligned(traj, gt)?.iter().map(|(a, b)| a.center_distance(b)).collect())
}

pub fn overlaps(traj: &Trajectory, gt: &Trajectory) -> Result<Vec<f64>> {
    Ok(aligned(traj, gt)?.iter().map(|(a, b)| iou(a, b)).collect())
}

fn fraction(values: &[f64], pass: impl Fn(f64) -> bool) -> f64 {
    values.iter().filter(|&&v| pass(v)).count() as f64 / values.len() as f64
}

/// Fraction of frames with centre error ≤ τ for τ = 0..50 px, and the value
/// at 20 px.
pub fn precision_metrics(traj: &Trajectory, gt: &Trajectory) -> Result<(Vec<CurvePoint>, f64)> {
    let err = center_errors(traj, gt)?;
    let curve: Vec<CurvePoint> = (0..PRECISION_THRESHOLDS)
        .map(|t| {
            let threshold = t as f64;
            CurvePoint {
                threshold,
                value: fraction(&err, |e| e <= threshold),
            }
        })
        .collect();
    let at20 = curve[PRECISION_REPORT_PX as usize].value;
    Ok((curve, at20))
}

/// Fraction of frames with IoU strictly above u on the 21-point grid, and
/// the grid mean.
pub fn success_metrics(traj: &Trajectory, gt: &Trajectory) -> Result<(Vec<CurvePoint>, f64)> {
    let ov = overlaps(traj, gt)?;
    let curve: Vec<CurvePoint> = (0..SUCCESS_THRESHOLDS)
        .map(|i| {
            let threshold = i as f64 / (SUCCESS_THRESHOLDS - 1) as f64;
            CurvePoint {
                threshold,
                value: fraction(&ov, |o| o > threshold),
            }
        })
        .collect();
    let auc = curve.iter().map(|p| p.value).sum::<f64>() / curve.len() as f64;
    Ok((curve, auc))
}

/// Reinitialisation protocol constants.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct VotConfig {
    /// Frames between a failure and the reinitialisation.
    pub skip: usize,
    /// Frames after each (re)initialisation left out of accuracy.
    pub burn_in: usize,
}

impl Default for VotConfig {
    fn default() -> Self {
        VotConfig { skip: 5, burn_in: 10 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VotReport {
    pub failures: usize,
    /// Mean IoU over scored frames; `None` when no frame was scored.
    pub accuracy: Option<f64>,
    pub scored_frames: usize,
    /// Frames at which the tracker was (re)initialised.
    pub initializations: Vec<usize>,
    pub failure_frames: Vec<usize>,
}

/// A tracker that can be restarted from a ground-truth box.
pub trait ReinitTracker<F> {
    fn initialize(&mut self, frame: &F, bbox: BBox) -> Result<()>;
    fn track(&mut self, frame: &F) -> Result<BBox>;
}

/// Runs `tracker` over `frames`. A frame with zero overlap is a failure; the
/// tracker restarts from ground truth `skip` frames later. Frames within
/// `burn_in` of any (re)initialisation, the initialisation frames and
/// failures are excluded from accuracy. Failures are counted everywhere.
pub fn vot_style_eval<F, R: ReinitTracker<F>>(
    tracker: &mut R,
    frames: &[F],
    gt: &[BBox],
    cfg: &VotConfig,
) -> Result<VotReport> {
    if frames.len() != gt.len() {
        return Err(Error::Config(format!(
            "{} frames with {} ground-truth boxes",
            frames.len(),
            gt.len()
        )));
    }
    let mut report = VotReport {
        failures: 0,
        accuracy: None,
        scored_frames: 0,
        initializations: Vec::new(),
        failure_frames: Vec::new(),
    };
    let mut sum = 0.0;
    let mut t = 0;
    while t < frames.len() {
        tracker.initialize(&frames[t], gt[t])?;
        report.initializations.push(t);
        let init = t;
        t += 1;
        while t < frames.len() {
            let o = iou(&tracker.track(&frames[t])?, &gt[t]);
            if o == 0.0 {
                report.failures += 1;
                report.failure_frames.push(t);
                t += cfg.skip.max(1);
                break;
            }
            if t > init + cfg.burn_in {
                sum += o;
                report.scored_frames += 1;
            }
            t += 1;
        }
    }
    if report.scored_frames > 0 {
        report.accuracy = Some(sum / report.scored_frames as f64);
    }
    Ok(report)
}

/// Everything `eval` reports for one trajectory.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricReport {
    pub frames: usize,
    pub precision_curve: Vec<CurvePoint>,
    pub precision_at_20: f64,
    pub success_curve: Vec<CurvePoint>,
    pub success_auc: f64,
    /// Zero-overlap frames of the uninterrupted run.
    pub failures: usize,
    /// Mean IoU over the non-failure frames.
    pub mean_overlap: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub vot: Option<VotReport>,
}

impl MetricReport {
    pub fn compute(traj: &Trajectory, gt: &Trajectory) -> Result<Self> {
        let (precision_curve, precision_at_20) = precision_metrics(traj, gt)?;
        let (success_curve, success_auc) = success_metrics(traj, gt)?;
        let ov = overlaps(traj, gt)?;
        let hits: Vec<f64> = ov.iter().copied().filter(|&o| o > 0.0).collect();
        Ok(MetricReport {
            frames: ov.len(),
            precision_curve,
            precision_at_20,
            success_curve,
            success_auc,
            failures: ov.len() - hits.len(),
            mean_overlap: (!hits.is_empty()).then(|| hits.iter().sum::<f64>() / hits.len() as f64),
            vot: None,
        })
    }
}

/// Two-column `threshold,value` CSV.
pub fn curve_csv(curve: &[CurvePoint]) -> String {
    let mut s = String::from("threshold,value\n");
    for p in curve {
        s.push_str(&format!("{:.2},{:.6}\n", p.threshold, p.value));
    }
    s
}

#[cfg(test)]
mod tests {
    use super::*;

    fn traj(boxes: &[BBox]) -> Trajectory {
        Trajectory::from_boxes(boxes)
    }

    #[test]
    fn perfect_trajectory() {
        let gt = traj(&[BBox::new(1.0, 2.0, 10.0, 10.0), BBox::new(3.0, 2.0, 10.0, 12.0)]);
        let (p, at20) = precision_metrics(&gt, &gt).unwrap();
        assert!(p.iter().all(|c| c.value == 1.0));
        assert_eq!(at20, 1.0);
        let (_, auc) = success_metrics(&gt, &gt).unwrap();
        assert_eq!(auc, 20.0 / 21.0);
    }

    #[test]
    fn center_errors_five_and_twenty_five() {
        let gt = traj(&[BBox::new(0.0, 0.0, 10.0, 10.0); 2]);
        let tr = traj(&[BBox::new(3.0, 4.0, 10.0, 10.0), BBox::new(15.0, 20.0, 10.0, 10.0)]);
        let (curve, at20) = precision_metrics(&tr, &gt).unwrap();
        assert_eq!(at20, 0.5);
        assert_eq!(curve[4].value, 0.0);
        assert_eq!(curve[5].value, 0.5);
        assert_eq!(curve[25].value, 1.0);
    }

    #[test]
    fn disjoint_boxes_score_zero() {
        let gt = traj(&[BBox::new(0.0, 0.0, 5.0, 5.0); 3]);
        let tr = traj(&[BBox::new(50.0, 50.0, 5.0, 5.0); 3]);
        let (_, auc) = success_metrics(&tr, &gt).unwrap();
        assert_eq!(auc, 0.0);
    }

    #[test]
    fn mismatched_frames_rejected() {
        let gt = traj(&[BBox::new(0.0, 0.0, 5.0, 5.0); 3]);
        let tr = traj(&[BBox::new(0.0, 0.0, 5.0, 5.0); 2]);
        assert!(precision_metrics(&tr, &gt).is_err());
    }
}
