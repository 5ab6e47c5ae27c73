use std::path::{Path, PathBuf};

use super::image::Image;
use crate::error::{Error, Result};
use crate::tracker::BBox;

/// Frames of one video with ground truth for every frame or only the first.
#[derive(Debug, Clone, PartialEq)]
pub struct Sequence {
    pub name: String,
    pub frames: Vec<Image>,
    pub groundtruth: Vec<BBox>,
}

impl Sequence {
    pub fn new(name: impl Into<String>, frames: Vec<Image>, groundtruth: Vec<BBox>) -> Result<Self> {
        let s = Sequence {
            name: name.into(),
            frames,
            groundtruth,
        };
        s.validate()?;
        Ok(s)
    }

    pub fn validate(&self) -> Result<()> {
        let first = self
            .frames
            .first()
            .ok_or_else(|| Error::Empty(format!("sequence {:?} has no frames", self.name)))?;
        if let Some((i, f)) = self
            .frames
            .iter()
            .enumerate()
            .find(|(_, f)| (f.width(), f.height()) != (first.width(), first.height()))
        {
            return Err(Error::Geometry(format!(
                "frame {i} is {}x{}, frame 0 is {}x{}",
                f.width(),
                f.height(),
                first.width(),
                first.height()
            )));
        }
        let n = self.groundtruth.len();
        if n != 1 && n != self.frames.len() {
            return Err(Error::Config(format!(
                "{n} ground-truth boxes for {} frames",
                self.frames.len()
            )));
        }
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.frames.len()
    }

    pub fn is_empty(&self) -> bool {
        self.frames.is_empty()
    }

    pub fn has_full_groundtruth(&self) -> bool {
        self.groundtruth.len() == self.frames.len()
    }
}

pub const GROUNDTRUTH_FILE: &str = "groundtruth_rect.txt";
const FRAME_EXTENSIONS: [&str; 4] = ["ppm", "png", "jpg", "jpeg"];

/// Parses `x,y,w,h` lines (comma, tab or whitespace separated, 1-based) into
/// 0-based boxes. Blank lines are skipped.
pub fn parse_groundtruth(text: &str, path: &Path) -> Result<Vec<BBox>> {
    let mut out = Vec::new();
    for (i, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() {
            continue;
        }
        let err = |msg: String| Error::Parse {
            path: path.to_path_buf(),
            line: i + 1,
            msg,
        };
        let fields: Vec<&str> = line
            .split(|c: char| c == ',' || c.is_whitespace())
            .filter(|f| !f.is_empty())
            .collect();
        if fields.len() != 4 {
            return Err(err(format!("expected 4 values, found {}", fields.len())));
        }
        let mut v = [0.0; 4];
        for (slot, f) in v.iter_mut().zip(&fields) {
            *slot = f.parse::<f64>().map_err(|_| err(format!("not a number: {f:?}")))?;
            if !slot.is_finite() {
                return Err(err(format!("not a finite number: {f:?}")));
            }
        }
        if v[2] <= 0.0 || v[3] <= 0.0 {
            return Err(err(format!("non-positive extent {}x{}", v[2], v[3])));
        }
        out.push(BBox::new(v[0] - 1.0, v[1] - 1.0, v[2], v[3]));
    }
    if out.is_empty() {
        return Err(Error::Parse {
            path: path.to_path_buf(),
            line: 1,
            msg: "no ground-truth boxes".into(),
        });
    }
    Ok(out)
}

/// 0-based boxes back to the 1-based on-disk form.
pub fn format_groundtruth(boxes: &[BBox]) -> String {
    boxes
        .iter()
        .map(|b| format!("{},{},{},{}\n", b.x + 1.0, b.y + 1.0, b.w, b.h))
        .collect()
}

fn frame_paths(dir: &Path) -> Result<Vec<PathBuf>> {
    let entries = std::fs::read_dir(dir).map_err(|e| Error::io(dir, e))?;
    let mut paths = Vec::new();
    for entry in entries {
        let p = entry.map_err(|e| Error::io(dir, e))?.path();
        let ext = p.extension().and_then(|e| e.to_str()).map(str::to_ascii_lowercase);
        if ext.is_some_and(|e| FRAME_EXTENSIONS.contains(&e.as_str())) {
            paths.push(p);
        }
    }
    // Zero-padded numbering makes lexicographic order the frame order.
    paths.sort();
    Ok(paths)
}

/// Loads an OTB-style directory: `img/` frames plus `groundtruth_rect.txt`.
pub fn load_sequence(dir: &Path) -> Result<Sequence> {
    let gt_path = dir.join(GROUNDTRUTH_FILE);
    let text = std::fs::read_to_string(&gt_path).map_err(|e| Error::io(&gt_path, e))?;
    let groundtruth = parse_groundtruth(&text, &gt_path)?;
    let paths = frame_paths(&dir.join("img"))?;
    if paths.is_empty() {
        return Err(Error::Empty(format!("no frames in {}", dir.join("img").display())));
    }
    let frames = paths
        .iter()
        .enumerate()
        .map(|(i, p)| Image::read(p).map_err(|e| Error::Image(format!("frame {i} ({}): {e}", p.display()))))
        .collect::<Result<Vec<_>>>()?;
    let name = dir
        .file_name()
        .map_or_else(|| "sequence".to_string(), |n| n.to_string_lossy().into_owned());
    Sequence::new(name, frames, groundtruth)
}

/// Writes `img/0001.ppm …` and `groundtruth_rect.txt` under `dir`.
pub fn save_sequence(seq: &Sequence, dir: &Path) -> Result<()> {
    let img = dir.join("img");
    std::fs::create_dir_all(&img).map_err(|e| Error::io(&img, e))?;
    for (i, f) in seq.frames.iter().enumerate() {
        f.write_ppm(&img.join(format!("{:04}.ppm", i + 1)))?;
    }
    let gt = dir.join(GROUNDTRUTH_FILE);
    std::fs::write(&gt, format_groundtruth(&seq.groundtruth)).map_err(|e| Error::io(&gt, e))
}
