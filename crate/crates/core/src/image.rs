//! Real-valued images and binary masks.

use ndarray::{Array2, Array3, ArrayView2, Axis};

use crate::error::{shape_err, Error, Result};

/// `H×W×C` image with values in `[0, 1]`, `C` being 1 or 3.
#[derive(Debug, Clone, PartialEq)]
pub struct ImageBuffer {
    data: Array3<f64>,
}

impl ImageBuffer {
    pub fn new(data: Array3<f64>) -> Result<Self> {
        let (h, w, c) = data.dim();
        if h == 0 || w == 0 {
            return Err(Error::InvalidInput(format!("image has zero extent ({h}x{w})")));
        }
        if c != 1 && c != 3 {
            return Err(Error::InvalidInput(format!("image has {c} channels, expected 1 or 3")));
        }
        if let Some(v) = data.iter().find(|v| !(0.0..=1.0).contains(*v)) {
            return Err(Error::InvalidInput(format!("image value {v} outside [0, 1]")));
        }
        Ok(Self { data })
    }

    pub fn filled(height: usize, width: usize, rgb: [f64; 3]) -> Result<Self> {
        Self::new(Array3::from_shape_fn((height, width, 3), |(_, _, c)| rgb[c]))
    }

    /// From interleaved 8-bit samples, `channels` per pixel.
    pub fn from_u8(height: usize, width: usize, channels: usize, bytes: &[u8]) -> Result<Self> {
        if bytes.len() != height * width * channels {
            return Err(shape_err("image bytes", height * width * channels, bytes.len()));
        }
        let data = Array3::from_shape_fn((height, width, channels), |(y, x, c)| {
            bytes[(y * width + x) * channels + c] as f64 / 255.0
        });
        Self::new(data)
    }

    /// Interleaved 8-bit samples, rounded to nearest.
    pub fn to_u8(&self) -> Vec<u8> {
        self.data.iter().map(|v| (v * 255.0).round() as u8).collect()
    }

    pub fn height(&self) -> usize {
        self.data.dim().0
    }

    pub fn width(&self) -> usize {
        self.data.dim().1
    }

    pub fn channels(&self) -> usize {
        self.data.dim().2
    }

    pub fn data(&self) -> &Array3<f64> {
        &self.data
    }

    pub fn into_data(self) -> Array3<f64> {
        self.data
    }

    pub fn channel(&self, c: usize) -> ArrayView2<'_, f64> {
        self.data.index_axis(Axis(2), c)
    }

    /// Mean over channels.
    pub fn luminance(&self) -> Array2<f64> {
        self.data.mean_axis(Axis(2)).expect("at least one channel")
    }

    pub fn pixel(&self, y: usize, x: usize) -> Vec<f64> {
        (0..self.channels()).map(|c| self.data[[y, x, c]]).collect()
    }
}

/// `H×W` binary mask.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct MaskBuffer {
    data: Array2<bool>,
}

impl MaskBuffer {
    pub fn new(data: Array2<bool>) -> Self {
        Self { data }
    }

    pub fn empty(height: usize, width: usize) -> Self {
        Self::new(Array2::from_elem((height, width), false))
    }

    pub fn full(height: usize, width: usize) -> Self {
        Self::new(Array2::from_elem((height, width), true))
    }

    /// Accepts only exact 0/1 values; soft masks are an error.
    pub fn from_values(values: &Array2<f64>) -> Result<Self> {
        if let Some(v) = values.iter().find(|&&v| v != 0.0 && v != 1.0) {
            return Err(Error::InvalidInput(format!("mask value {v} is not binary")));
        }
        Ok(Self::new(values.mapv(|v| v == 1.0)))
    }

    /// 8-bit grayscale, foreground above 127.
    pub fn from_gray8(height: usize, width: usize, bytes: &[u8]) -> Result<Self> {
        if bytes.len() != height * width {
            return Err(shape_err("mask bytes", height * width, bytes.len()));
        }
        Ok(Self::new(Array2::from_shape_fn((height, width), |(y, x)| {
            bytes[y * width + x] > 127
        })))
    }

    pub fn to_gray8(&self) -> Vec<u8> {
        self.data.iter().map(|&b| if b { 255 } else { 0 }).collect()
    }

    pub fn dim(&self) -> (usize, usize) {
        self.data.dim()
    }

    pub fn get(&self, y: usize, x: usize) -> bool {
        self.data[[y, x]]
    }

    pub fn data(&self) -> &Array2<bool> {
        &self.data
    }

    pub fn count(&self) -> usize {
        self.data.iter().filter(|&&b| b).count()
    }

    pub fn and_not(&self, other: &MaskBuffer) -> MaskBuffer {
        let mut out = self.data.clone();
        out.zip_mut_with(&other.data, |a, &b| *a = *a && !b);
        MaskBuffer::new(out)
    }

    pub fn union(&self, other: &MaskBuffer) -> MaskBuffer {
        let mut out = self.data.clone();
        out.zip_mut_with(&other.data, |a, &b| *a = *a || b);
        MaskBuffer::new(out)
    }

    /// True when every foreground pixel of `self` is foreground in `other`.
    pub fn is_subset_of(&self, other: &MaskBuffer) -> bool {
        self.data.iter().zip(other.data.iter()).all(|(&a, &b)| !a || b)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;

    #[test]
    fn soft_masks_are_rejected() {
        assert!(MaskBuffer::from_values(&array![[0.0, 1.0], [1.0, 0.0]]).is_ok());
        assert!(MaskBuffer::from_values(&array![[0.0, 0.5]]).is_err());
    }

    #[test]
    fn gray8_threshold_is_strictly_above_127() {
        let m = MaskBuffer::from_gray8(1, 4, &[0, 127, 128, 255]).unwrap();
        assert_eq!(m.data(), &array![[false, false, true, true]]);
    }

    #[test]
    fn u8_round_trip() {
        let bytes: Vec<u8> = (0..2 * 3 * 3).map(|i| (i * 13) as u8).collect();
        let img = ImageBuffer::from_u8(2, 3, 3, &bytes).unwrap();
        assert_eq!(img.to_u8(), bytes);
    }

    #[test]
    fn out_of_range_values_are_rejected() {
        assert!(ImageBuffer::new(Array3::from_elem((2, 2, 3), 1.5)).is_err());
        assert!(ImageBuffer::new(Array3::from_elem((2, 2, 2), 0.5)).is_err());
    }
}
