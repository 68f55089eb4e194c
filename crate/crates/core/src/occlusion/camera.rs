use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Full-frame sensor width assumed when converting focal lengths.
pub const SENSOR_WIDTH_MM: f64 = 36.0;

/// Focal length in millimeters for a focal length of `fx` pixels on an image
/// `image_width` pixels wide: `fx · 36 / W`.
pub fn focal_convert(fx: f64, image_width: f64) -> f64 {
    fx * SENSOR_WIDTH_MM / image_width
}

/// Pinhole camera looking down `+z`, `x` right and `y` down. Pixel `(row,
/// col)` covers `u ∈ [col, col + 1)`, `v ∈ [row, row + 1)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase", deny_unknown_fields)]
pub struct Camera {
    pub fx: f64,
    pub fy: f64,
    pub cx: f64,
    pub cy: f64,
    pub width: usize,
    pub height: usize,
}

/// Points closer than this are treated as behind the camera.
pub const NEAR_PLANE: f64 = 1e-4;

impl Camera {
    pub fn validate(&self) -> Result<()> {
        if !(self.fx > 0.0 && self.fy > 0.0 && self.fx.is_finite() && self.fy.is_finite()) {
            return Err(Error::InvalidInput(format!(
                "focal lengths must be positive, got fx={} fy={}",
                self.fx, self.fy
            )));
        }
        if self.width == 0 || self.height == 0 {
            return Err(Error::InvalidInput("camera image size must be positive".into()));
        }
        let inside = (0.0..=self.width as f64).contains(&self.cx) && (0.0..=self.height as f64).contains(&self.cy);
        if !inside {
            return Err(Error::InvalidInput(format!(
                "principal point ({}, {}) lies outside the {}x{} image",
                self.cx, self.cy, self.width, self.height
            )));
        }
        Ok(())
    }

    /// `(u, v, z)` for a camera-frame point in front of the near plane.
    pub fn project(&self, p: [f64; 3]) -> Option<[f64; 3]> {
        (p[2] > NEAR_PLANE).then(|| [self.fx * p[0] / p[2] + self.cx, self.fy * p[1] / p[2] + self.cy, p[2]])
    }

    /// Pixel `(row, col)` containing image point `(u, v)`.
    pub fn pixel(&self, u: f64, v: f64) -> Option<(usize, usize)> {
        let inside = u >= 0.0 && v >= 0.0 && u < self.width as f64 && v < self.height as f64;
        inside.then_some((v as usize, u as usize))
    }

    /// Camera-frame direction through the center of pixel `(row, col)`,
    /// scaled to unit depth.
    pub fn pixel_ray(&self, row: usize, col: usize) -> [f64; 3] {
        [
            (col as f64 + 0.5 - self.cx) / self.fx,
            (row as f64 + 0.5 - self.cy) / self.fy,
            1.0,
        ]
    }
}
