//! Axis-aligned pixel boxes.
//!
//! Coordinates are real-valued with the origin at the top-left corner of the
//! image and `y` growing downward. Detectors emit fractional corners; any
//! operation that touches pixels rounds outward so that no covered pixel is
//! lost.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Corner-format rectangle `(x_min, y_min) .. (x_max, y_max)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BBox {
    pub x_min: f64,
    pub y_min: f64,
    pub x_max: f64,
    pub y_max: f64,
}

/// Integer pixel span `[x0, x1) x [y0, y1)`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct PixelRect {
    pub x0: u32,
    pub y0: u32,
    pub x1: u32,
    pub y1: u32,
}

impl PixelRect {
    pub fn width(&self) -> u32 {
        self.x1 - self.x0
    }

    pub fn height(&self) -> u32 {
        self.y1 - self.y0
    }

    pub fn contains(&self, x: u32, y: u32) -> bool {
        x >= self.x0 && x < self.x1 && y >= self.y0 && y < self.y1
    }
}

impl BBox {
    /// Validating constructor: finite, non-negative, strictly positive area.
    pub fn new(x_min: f64, y_min: f64, x_max: f64, y_max: f64) -> Result<Self> {
        let b = BBox {
            x_min,
            y_min,
            x_max,
            y_max,
        };
        b.validate()?;
        Ok(b)
    }

    pub fn validate(&self) -> Result<()> {
        let coords = [self.x_min, self.y_min, self.x_max, self.y_max];
        if coords.iter().any(|c| !c.is_finite()) {
            return Err(Error::input(format!("non-finite box coordinates {self:?}")));
        }
        if coords.iter().any(|&c| c < 0.0) {
            return Err(Error::input(format!("negative box coordinates {self:?}")));
        }
        if !(self.x_min < self.x_max && self.y_min < self.y_max) {
            return Err(Error::input(format!("box has no area {self:?}")));
        }
        Ok(())
    }

    pub fn width(&self) -> f64 {
        self.x_max - self.x_min
    }

    pub fn height(&self) -> f64 {
        self.y_max - self.y_min
    }

    pub fn fits_within(&self, width: u32, height: u32) -> bool {
        self.x_max <= width as f64 && self.y_max <= height as f64
    }

    pub fn translate(&self, dx: f64, dy: f64) -> BBox {
        BBox {
            x_min: self.x_min + dx,
            y_min: self.y_min + dy,
            x_max: self.x_max + dx,
            y_max: self.y_max + dy,
        }
    }

    /// Intersect with the image rectangle; `None` if nothing with area remains.
    pub fn clamp_to(&self, width: u32, height: u32) -> Option<BBox> {
        let b = BBox {
            x_min: self.x_min.max(0.0),
            y_min: self.y_min.max(0.0),
            x_max: self.x_max.min(width as f64),
            y_max: self.y_max.min(height as f64),
        };
        (b.x_min < b.x_max && b.y_min < b.y_max).then_some(b)
    }

    /// Outward-rounded pixel span grown by `padding` and clamped to the image.
    pub fn pixel_rect(&self, padding: u32, width: u32, height: u32) -> PixelRect {
        let pad = padding as f64;
        let x0 = (self.x_min.floor() - pad).max(0.0) as u32;
        let y0 = (self.y_min.floor() - pad).max(0.0) as u32;
        let x1 = ((self.x_max.ceil() + pad) as u64).min(width as u64) as u32;
        let y1 = ((self.y_max.ceil() + pad) as u64).min(height as u64) as u32;
        PixelRect {
            x0: x0.min(x1),
            y0: y0.min(y1),
            x1,
            y1,
        }
    }
}

pub fn box_area(b: &BBox) -> f64 {
    b.width() * b.height()
}

pub fn box_iou(a: &BBox, b: &BBox) -> f64 {
    let iw = (a.x_max.min(b.x_max) - a.x_min.max(b.x_min)).max(0.0);
    let ih = (a.y_max.min(b.y_max) - a.y_min.max(b.y_min)).max(0.0);
    let inter = iw * ih;
    if inter == 0.0 {
        return 0.0;
    }
    if a == b {
        return 1.0;
    }
    let union = box_area(a) + box_area(b) - inter;
    (inter / union).clamp(0.0, 1.0)
}
