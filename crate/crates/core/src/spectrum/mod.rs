//! Frequency-domain augmentation and corpus statistics.

mod augment;
pub mod fft;
mod profile;

pub use augment::{
    amp_augment, amp_augment_with_lambda, perturb_spectrum, sample_lambda, sigma_at, sigma_field, AmpAugParams,
};
pub use profile::{band_variance, image_band_profile, SpectrumProfile, DEFAULT_BANDS};
