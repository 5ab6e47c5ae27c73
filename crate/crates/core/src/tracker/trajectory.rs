use serde::{Deserialize, Serialize};

use super::bbox::BBox;
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TrajectoryRecord {
    pub frame: usize,
    pub bbox: BBox,
    /// Positive score of the chosen box, when the tracker produced it.
    pub score: Option<f64>,
}

/// Per-frame boxes with strictly increasing frame indices.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct Trajectory {
    records: Vec<TrajectoryRecord>,
}

impl Trajectory {
    pub fn new(records: Vec<TrajectoryRecord>) -> Result<Self> {
        if let Some(w) = records.windows(2).find(|w| w[1].frame <= w[0].frame) {
            return Err(Error::Config(format!(
                "trajectory frame indices must increase strictly ({} then {})",
                w[0].frame, w[1].frame
            )));
        }
        Ok(Trajectory { records })
    }

    /// Frames `0..boxes.len()` without scores, e.g. ground truth.
    pub fn from_boxes(boxes: &[BBox]) -> Self {
        Trajectory {
            records: boxes
                .iter()
                .enumerate()
                .map(|(frame, &bbox)| TrajectoryRecord {
                    frame,
                    bbox,
                    score: None,
                })
                .collect(),
        }
    }

    pub fn push(&mut self, record: TrajectoryRecord) -> Result<()> {
        if let Some(last) = self.records.last() {
            if record.frame <= last.frame {
                return Err(Error::Config(format!(
                    "frame {} does not follow frame {}",
                    record.frame, last.frame
                )));
            }
        }
        self.records.push(record);
        Ok(())
    }

    pub fn records(&self) -> &[TrajectoryRecord] {
        &self.records
    }

    pub fn boxes(&self) -> Vec<BBox> {
        self.records.iter().map(|r| r.bbox).collect()
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    /// `frame,x,y,w,h,score` with two decimals for geometry and four for the
    /// score; a missing score is an empty field.
    pub fn to_csv(&self) -> String {
        let mut s = String::from("frame,x,y,w,h,score\n");
        for r in &self.records {
            let b = r.bbox;
            s.push_str(&format!("{},{:.2},{:.2},{:.2},{:.2},", r.frame, b.x, b.y, b.w, b.h));
            if let Some(p) = r.score {
                s.push_str(&format!("{p:.4}"));
            }
            s.push('\n');
        }
        s
    }

    pub fn from_csv(text: &str) -> Result<Self> {
        let parse_err = |line: usize, msg: String| Error::Parse {
            path: "<trajectory csv>".into(),
            line,
            msg,
        };
        let mut records = Vec::new();
        for (i, line) in text.lines().enumerate() {
            let line = line.trim();
            if i == 0 || line.is_empty() {
                continue;
            }
            let f: Vec<&str> = line.split(',').map(str::trim).collect();
            if f.len() != 6 {
                return Err(parse_err(i + 1, format!("expected 6 fields, got {}", f.len())));
            }
            let num = |s: &str| s.parse::<f64>().map_err(|e| parse_err(i + 1, format!("{s:?}: {e}")));
            let frame = f[0]
                .parse::<usize>()
                .map_err(|e| parse_err(i + 1, format!("{:?}: {e}", f[0])))?;
            let bbox = BBox::new(num(f[1])?, num(f[2])?, num(f[3])?, num(f[4])?);
            let score = if f[5].is_empty() { None } else { Some(num(f[5])?) };
            records.push(TrajectoryRecord { frame, bbox, score });
        }
        Trajectory::new(records)
    }
}
