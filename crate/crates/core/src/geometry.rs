//! Axis-aligned boxes in top-left/width/height form.
//!
//! Boxes are stored the way MOT files store them; the center/area/aspect
//! view used by the motion model is derived on demand.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Axis-aligned box in pixel coordinates: left edge, top edge, width, height.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BBox {
    pub x: f64,
    pub y: f64,
    pub w: f64,
    pub h: f64,
}

/// Center/area/aspect view of a box: `(cx, cy, s = w*h, r = w/h)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CenterForm {
    pub cx: f64,
    pub cy: f64,
    pub s: f64,
    pub r: f64,
}

impl BBox {
    pub const fn new(x: f64, y: f64, w: f64, h: f64) -> Self {
        Self { x, y, w, h }
    }

    /// Checked constructor; rejects non-finite fields and non-positive sizes.
    pub fn try_new(x: f64, y: f64, w: f64, h: f64) -> Result<Self> {
        let b = Self { x, y, w, h };
        b.validate()?;
        Ok(b)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.x.is_finite() && self.y.is_finite() && self.w.is_finite() && self.h.is_finite()) {
            return Err(Error::invalid(format!("non-finite box {self:?}")));
        }
        if self.w <= 0.0 || self.h <= 0.0 {
            return Err(Error::invalid(format!("box with non-positive size {self:?}")));
        }
        Ok(())
    }

    pub fn is_valid(&self) -> bool {
        self.validate().is_ok()
    }

    pub fn area(&self) -> f64 {
        self.w * self.h
    }

    pub fn right(&self) -> f64 {
        self.x + self.w
    }

    pub fn bottom(&self) -> f64 {
        self.y + self.h
    }

    pub fn center(&self) -> (f64, f64) {
        (self.x + self.w / 2.0, self.y + self.h / 2.0)
    }

    pub fn translate(&self, dx: f64, dy: f64) -> Self {
        Self::new(self.x + dx, self.y + dy, self.w, self.h)
    }

    pub fn center_form(&self) -> Result<CenterForm> {
        self.validate()?;
        let (cx, cy) = self.center();
        Ok(CenterForm {
            cx,
            cy,
            s: self.w * self.h,
            r: self.w / self.h,
        })
    }
}

impl CenterForm {
    /// Inverse of [`BBox::center_form`]: `w = sqrt(s*r)`, `h = s / w`.
    pub fn to_bbox(&self) -> Result<BBox> {
        if !(self.s > 0.0 && self.r > 0.0) || !self.cx.is_finite() || !self.cy.is_finite() {
            return Err(Error::invalid(format!("degenerate center form {self:?}")));
        }
        let w = (self.s * self.r).sqrt();
        let h = self.s / w;
        BBox::try_new(self.cx - w / 2.0, self.cy - h / 2.0, w, h)
    }
}

/// Intersection-over-union. Boxes touching only along an edge score 0.
pub fn iou(a: &BBox, b: &BBox) -> Result<f64> {
    a.validate()?;
    b.validate()?;
    Ok(iou_unchecked(a, b))
}

/// IoU without validation, for hot loops over boxes already known to be valid.
pub(crate) fn iou_unchecked(a: &BBox, b: &BBox) -> f64 {
    let iw = a.right().min(b.right()) - a.x.max(b.x);
    let ih = a.bottom().min(b.bottom()) - a.y.max(b.y);
    if iw <= 0.0 || ih <= 0.0 {
        return 0.0;
    }
    let inter = iw * ih;
    // areas from edges, so a box compared with itself gives exactly 1
    let area = |r: &BBox| (r.right() - r.x) * (r.bottom() - r.y);
    let union = area(a) + area(b) - inter;
    (inter / union).clamp(0.0, 1.0)
}
