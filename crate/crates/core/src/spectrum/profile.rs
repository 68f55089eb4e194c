//! Radial band statistics of log-amplitude spectra across an image corpus.
//!
//! Each image is reduced to its luminance, transformed, and its zero-centered
//! `log10(1 + |A|)` is averaged inside equal-width rings of normalized radial
//! frequency `r = √((p/H)² + (q/W)²) ∈ [0, √2/2]`. The profile reports, per
//! band, the mean of these per-image values and their variance across images.

use ndarray::Array2;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::fft::{fft2, fftshift};
use crate::error::{Error, Result};
use crate::image::ImageBuffer;

pub const DEFAULT_BANDS: usize = 32;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct SpectrumProfile {
    /// `B + 1` increasing edges from 0 to `√2/2`.
    pub band_edges: Vec<f64>,
    pub mean_amplitude: Vec<f64>,
    /// Sample variance (`n − 1` denominator) across images.
    pub variance_across_images: Vec<f64>,
    pub image_count: usize,
    /// Set when only one image was profiled, in which case every variance is 0.
    pub single_image: bool,
    /// Bands that contain no frequency bin at this resolution.
    pub empty_bands: Vec<usize>,
}

fn max_radius() -> f64 {
    0.5 * std::f64::consts::SQRT_2
}

/// Band index of every centered frequency bin, `None` never occurs.
fn band_map(h: usize, w: usize, bands: usize) -> Array2<usize> {
    let r_max = max_radius();
    Array2::from_shape_fn((h, w), |(y, x)| {
        let p = (y as f64 - (h / 2) as f64) / h as f64;
        let q = (x as f64 - (w / 2) as f64) / w as f64;
        let r = (p * p + q * q).sqrt();
        ((r / r_max * bands as f64) as usize).min(bands - 1)
    })
}

/// Per-band mean of the centered log-amplitude of one image. Empty bands
/// yield `None`.
pub fn image_band_profile(image: &ImageBuffer, bands: usize) -> Vec<Option<f64>> {
    let (h, w) = (image.height(), image.width());
    let spectrum = fftshift(&fft2(image.luminance().view()));
    let map = band_map(h, w, bands);
    let mut sums = vec![0.0; bands];
    let mut counts = vec![0usize; bands];
    for (c, &b) in spectrum.iter().zip(map.iter()) {
        sums[b] += (1.0 + c.norm()).log10();
        counts[b] += 1;
    }
    sums.iter()
        .zip(&counts)
        .map(|(&s, &n)| (n > 0).then(|| s / n as f64))
        .collect()
}

/// Profiles a corpus. Per-image work runs in parallel; the reduction runs in
/// input order so the result does not depend on scheduling.
pub fn band_variance(images: &[ImageBuffer], bands: usize) -> Result<SpectrumProfile> {
    if bands == 0 {
        return Err(Error::InvalidInput("band count must be positive".into()));
    }
    let Some(first) = images.first() else {
        return Err(Error::InvalidInput("cannot profile an empty corpus".into()));
    };
    let dim = (first.height(), first.width());
    if let Some((i, img)) = images
        .iter()
        .enumerate()
        .find(|(_, img)| (img.height(), img.width()) != dim)
    {
        return Err(Error::InvalidInput(format!(
            "image {i} is {}x{}, corpus is {}x{}",
            img.height(),
            img.width(),
            dim.0,
            dim.1
        )));
    }
    let per_image: Vec<Vec<Option<f64>>> = images.par_iter().map(|img| image_band_profile(img, bands)).collect();

    let n = images.len();
    let mut mean = vec![0.0; bands];
    let mut variance = vec![0.0; bands];
    let mut empty_bands = Vec::new();
    for b in 0..bands {
        if per_image[0][b].is_none() {
            empty_bands.push(b);
            continue;
        }
        let values: Vec<f64> = per_image.iter().map(|p| p[b].expect("same size, same bins")).collect();
        let m = values.iter().sum::<f64>() / n as f64;
        mean[b] = m;
        if n > 1 {
            variance[b] = values.iter().map(|v| (v - m) * (v - m)).sum::<f64>() / (n - 1) as f64;
        }
    }
    let band_edges = (0..=bands).map(|i| max_radius() * i as f64 / bands as f64).collect();
    Ok(SpectrumProfile {
        band_edges,
        mean_amplitude: mean,
        variance_across_images: variance,
        image_count: n,
        single_image: n == 1,
        empty_bands,
    })
}

impl SpectrumProfile {
    /// Delimited text, one band per line.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("band,lower,upper,mean_log_amplitude,variance\n");
        for b in 0..self.mean_amplitude.len() {
            out.push_str(&format!(
                "{b},{},{},{},{}\n",
                self.band_edges[b],
                self.band_edges[b + 1],
                self.mean_amplitude[b],
                self.variance_across_images[b]
            ));
        }
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn ramp(shift: f64) -> ImageBuffer {
        ImageBuffer::new(ndarray::Array3::from_shape_fn((16, 16, 1), |(y, x, _)| {
            (((y * 16 + x) % 7) as f64 / 10.0 + shift).min(1.0)
        }))
        .unwrap()
    }

    #[test]
    fn constant_corpus_has_zero_variance() {
        let imgs = vec![ramp(0.0); 4];
        let p = band_variance(&imgs, DEFAULT_BANDS).unwrap();
        assert!(p.variance_across_images.iter().all(|&v| v == 0.0));
        assert_eq!(p.band_edges.len(), DEFAULT_BANDS + 1);
        assert!(p.band_edges.windows(2).all(|w| w[0] < w[1]));
    }

    #[test]
    fn single_image_is_flagged() {
        let p = band_variance(&[ramp(0.0)], 8).unwrap();
        assert!(p.single_image);
        assert!(p.variance_across_images.iter().all(|&v| v == 0.0));
    }

    #[test]
    fn mixed_sizes_are_rejected() {
        let small = ImageBuffer::filled(8, 8, [0.5; 3]).unwrap();
        assert!(band_variance(&[ramp(0.0), small], 8).is_err());
    }

    #[test]
    fn brightness_change_only_moves_the_dc_band() {
        let p = band_variance(&[ramp(0.0), ramp(0.2)], 8).unwrap();
        assert!(p.variance_across_images[0] > 0.0);
        for v in &p.variance_across_images[1..] {
            assert!(*v < 1e-20, "{v}");
        }
    }
}
