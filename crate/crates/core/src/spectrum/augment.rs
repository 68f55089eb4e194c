//! Amplitude spectrum augmentation.
//!
//! Each frequency's amplitude is multiplied by `λ ~ N(1, σ²)` where `σ` grows
//! with radial frequency, and the image is rebuilt from the perturbed
//! amplitude and the original phase. One `λ` field is drawn per image and
//! shared by its channels.

use ndarray::{Array2, Array3, Axis};
use num_complex::Complex64;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use super::fft::{fft2, fftshift, ifft2, ifftshift};
use crate::error::{shape_err, Error, Result};
use crate::image::ImageBuffer;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase", deny_unknown_fields)]
pub struct AmpAugParams {
    /// Severity scale.
    pub alpha: f64,
    /// Radial exponent.
    pub k: f64,
    /// Baseline standard deviation at DC.
    pub beta: f64,
    /// Clamp `λ` to `max(λ, 0)` so no frequency has its phase flipped.
    pub clamp_nonneg: bool,
    pub seed: u64,
}

impl Default for AmpAugParams {
    fn default() -> Self {
        Self {
            alpha: 3.0,
            k: 2.0,
            beta: 0.25,
            clamp_nonneg: true,
            seed: 0,
        }
    }
}

impl AmpAugParams {
    pub fn validate(&self) -> Result<()> {
        for (name, v) in [("alpha", self.alpha), ("k", self.k), ("beta", self.beta)] {
            if !(v.is_finite() && v >= 0.0) {
                return Err(Error::InvalidInput(format!(
                    "{name} must be finite and nonnegative, got {v}"
                )));
            }
        }
        Ok(())
    }
}

/// `σ` at zero-centered frequency `(p, q)` of an `h×w` spectrum.
pub fn sigma_at(p: f64, q: f64, h: usize, w: usize, params: &AmpAugParams) -> f64 {
    let hh = h as f64;
    let ww = w as f64;
    let radius = ((p * p + q * q) / (hh * hh + ww * ww)).sqrt();
    (2.0 * params.alpha * radius).powf(params.k) + params.beta
}

/// `σ` over the centered spectrum: entry `(y, x)` is frequency
/// `(y − h/2, x − w/2)`.
pub fn sigma_field(h: usize, w: usize, params: &AmpAugParams) -> Array2<f64> {
    Array2::from_shape_fn((h, w), |(y, x)| {
        let p = y as f64 - (h / 2) as f64;
        let q = x as f64 - (w / 2) as f64;
        sigma_at(p, q, h, w, params)
    })
}

/// Draws the centered `λ` field from `params.seed`, in row-major order.
pub fn sample_lambda(h: usize, w: usize, params: &AmpAugParams) -> Array2<f64> {
    let sigma = sigma_field(h, w, params);
    let mut rng = ChaCha8Rng::seed_from_u64(params.seed);
    sigma.mapv(|s| {
        let n: f64 = StandardNormal.sample(&mut rng);
        let lambda = 1.0 + s * n;
        if params.clamp_nonneg {
            lambda.max(0.0)
        } else {
            lambda
        }
    })
}

/// Scales the centered amplitude of `spectrum` by `lambda` and recombines it
/// with the original phase.
pub fn perturb_spectrum(spectrum: &Array2<Complex64>, lambda: &Array2<f64>) -> Array2<Complex64> {
    let amplitude = fftshift(&spectrum.mapv(|c| c.norm()));
    let phase = spectrum.mapv(|c| c.arg());
    let scaled = ifftshift(&(amplitude * lambda));
    let mut out = phase.mapv(|p| Complex64::from_polar(1.0, p));
    out.zip_mut_with(&scaled, |c, &a| *c *= a);
    out
}

/// Augments `image` with an explicit centered `λ` field.
pub fn amp_augment_with_lambda(image: &ImageBuffer, lambda: &Array2<f64>) -> Result<ImageBuffer> {
    let (h, w) = (image.height(), image.width());
    if h < 2 || w < 2 {
        return Err(Error::InvalidInput(format!(
            "amplitude augmentation needs at least 2x2 pixels, got {h}x{w}"
        )));
    }
    if lambda.dim() != (h, w) {
        return Err(shape_err(
            "lambda field",
            format!("{h}x{w}"),
            format!("{}x{}", lambda.nrows(), lambda.ncols()),
        ));
    }
    let mut out = Array3::zeros((h, w, image.channels()));
    for c in 0..image.channels() {
        let spectrum = fft2(image.channel(c));
        let rebuilt = ifft2(&perturb_spectrum(&spectrum, lambda));
        out.index_axis_mut(Axis(2), c)
            .assign(&rebuilt.mapv(|v| v.re.clamp(0.0, 1.0)));
    }
    ImageBuffer::new(out)
}

/// Augments `image` with a `λ` field drawn from `params`.
pub fn amp_augment(image: &ImageBuffer, params: &AmpAugParams) -> Result<ImageBuffer> {
    params.validate()?;
    let lambda = sample_lambda(image.height(), image.width(), params);
    amp_augment_with_lambda(image, &lambda)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn sigma_constants() {
        let p = AmpAugParams::default();
        let s = sigma_field(64, 64, &p);
        assert_eq!(s[[32, 32]], 0.25);
        assert!((s[[0, 0]] - 9.25).abs() < 1e-12);
        assert!((sigma_at(32.0, 32.0, 64, 64, &p) - 9.25).abs() < 1e-12);
        let flat = AmpAugParams { alpha: 0.0, ..p };
        assert!(sigma_field(5, 8, &flat).iter().all(|&v| v == 0.25));
    }

    #[test]
    fn unit_lambda_is_identity() {
        let img = ImageBuffer::new(Array3::from_shape_fn((6, 5, 3), |(y, x, c)| {
            ((y * 5 + x) * 3 + c) as f64 / 90.0
        }))
        .unwrap();
        let out = amp_augment_with_lambda(&img, &Array2::ones((6, 5))).unwrap();
        for (a, b) in out.data().iter().zip(img.data().iter()) {
            assert!((a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn seeds_are_reproducible() {
        let p = AmpAugParams {
            seed: 9,
            ..Default::default()
        };
        assert_eq!(sample_lambda(8, 8, &p), sample_lambda(8, 8, &p));
        let q = AmpAugParams { seed: 10, ..p };
        assert_ne!(sample_lambda(8, 8, &p), sample_lambda(8, 8, &q));
    }

    #[test]
    fn clamping_removes_negative_lambda() {
        let p = AmpAugParams::default();
        assert!(sample_lambda(32, 32, &p).iter().all(|&l| l >= 0.0));
        let raw = AmpAugParams {
            clamp_nonneg: false,
            ..p
        };
        assert!(sample_lambda(32, 32, &raw).iter().any(|&l| l < 0.0));
    }

    #[test]
    fn tiny_images_are_rejected() {
        let img = ImageBuffer::filled(1, 4, [0.5; 3]).unwrap();
        assert!(amp_augment(&img, &AmpAugParams::default()).is_err());
    }
}
