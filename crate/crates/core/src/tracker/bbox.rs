use serde::{Deserialize, Serialize};

/// Axis-aligned box: top-left corner and extents, in pixels.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BBox {
    pub x: f64,
    pub y: f64,
    pub w: f64,
    pub h: f64,
}

impl BBox {
    pub const fn new(x: f64, y: f64, w: f64, h: f64) -> Self {
        BBox { x, y, w, h }
    }

    pub fn from_center(cx: f64, cy: f64, w: f64, h: f64) -> Self {
        BBox::new(cx - w / 2.0, cy - h / 2.0, w, h)
    }

    pub fn center(&self) -> (f64, f64) {
        (self.x + self.w / 2.0, self.y + self.h / 2.0)
    }

    pub fn area(&self) -> f64 {
        self.w * self.h
    }

    pub fn is_finite(&self) -> bool {
        self.x.is_finite() && self.y.is_finite() && self.w.is_finite() && self.h.is_finite()
    }

    pub fn is_valid(&self) -> bool {
        self.is_finite() && self.w > 0.0 && self.h > 0.0
    }

    pub fn translated(&self, dx: f64, dy: f64) -> Self {
        BBox::new(self.x + dx, self.y + dy, self.w, self.h)
    }

    /// Moves the centre into `[0, width] × [0, height]`, keeping the extents.
    pub fn clamp_center(&self, width: f64, height: f64) -> Self {
        let (cx, cy) = self.center();
        let (nx, ny) = (cx.clamp(0.0, width), cy.clamp(0.0, height));
        if nx == cx && ny == cy {
            *self
        } else {
            BBox::from_center(nx, ny, self.w, self.h)
        }
    }

    /// Euclidean distance between centres.
    pub fn center_distance(&self, other: &BBox) -> f64 {
        let (a, b) = (self.center(), other.center());
        (a.0 - b.0).hypot(a.1 - b.1)
    }
}

/// Intersection over union; 0 when either box is degenerate.
pub fn iou(a: &BBox, b: &BBox) -> f64 {
    let iw = (a.x + a.w).min(b.x + b.w) - a.x.max(b.x);
    let ih = (a.y + a.h).min(b.y + b.h) - a.y.max(b.y);
    if iw <= 0.0 || ih <= 0.0 {
        return 0.0;
    }
    let inter = iw * ih;
    let union = a.area() + b.area() - inter;
    if union <= 0.0 {
        0.0
    } else {
        (inter / union).clamp(0.0, 1.0)
    }
}
