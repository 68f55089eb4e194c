//! Mask-based composition of real arm and object pixels into synthetic hand
//! images, and the randomized-fill variant used to ablate what the pasted
//! content contributes.
//!
//! Where both masks are set the object wins: the arm mask is trimmed to
//! `M_arm ∧ ¬M_obj` before anything else, which keeps the composition a
//! per-pixel selection.

use ndarray::{Array3, Zip};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::image::{ImageBuffer, MaskBuffer};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub enum CompositionMode {
    /// Paste real pixels under both masks.
    Segmented,
    /// Arm gets the mean hand color, object gets one random color.
    RandomFill,
}

#[derive(Debug, Clone)]
pub struct CompositionJob {
    pub syn: ImageBuffer,
    pub real: ImageBuffer,
    pub object_mask: MaskBuffer,
    pub arm_mask: MaskBuffer,
    /// Needed by [`random_fill`] when the arm mask is not empty.
    pub hand_mask: Option<MaskBuffer>,
    pub mode: CompositionMode,
    pub seed: u64,
}

impl CompositionJob {
    fn check(&self) -> Result<()> {
        let dim = (self.syn.height(), self.syn.width());
        let real = (self.real.height(), self.real.width());
        if real != dim {
            return Err(Error::InvalidInput(format!(
                "real image is {}x{}, synthetic image is {}x{}",
                real.0, real.1, dim.0, dim.1
            )));
        }
        if self.real.channels() != self.syn.channels() {
            return Err(Error::InvalidInput(
                "real and synthetic images differ in channel count".into(),
            ));
        }
        let masks = [
            ("object mask", Some(&self.object_mask)),
            ("arm mask", Some(&self.arm_mask)),
            ("hand mask", self.hand_mask.as_ref()),
        ];
        for (name, m) in masks {
            if let Some(m) = m {
                if m.dim() != dim {
                    return Err(Error::InvalidInput(format!(
                        "{name} is {}x{}, images are {}x{}",
                        m.dim().0,
                        m.dim().1,
                        dim.0,
                        dim.1
                    )));
                }
            }
        }
        Ok(())
    }

    /// Arm mask after object precedence.
    pub fn effective_arm_mask(&self) -> MaskBuffer {
        self.arm_mask.and_not(&self.object_mask)
    }
}

/// `(1 − M_obj − M_arm)·I_syn + M_obj·I_real + M_arm·I_real`.
pub fn compose(job: &CompositionJob) -> Result<ImageBuffer> {
    job.check()?;
    let arm = job.effective_arm_mask();
    let c = job.syn.channels();
    let mut out = job.syn.data().clone();
    for ((y, x), &obj) in job.object_mask.data().indexed_iter() {
        let m_obj = f64::from(u8::from(obj));
        let m_arm = f64::from(u8::from(arm.get(y, x)));
        for ch in 0..c {
            let syn = job.syn.data()[[y, x, ch]];
            let real = job.real.data()[[y, x, ch]];
            out[[y, x, ch]] = (1.0 - m_obj - m_arm) * syn + m_obj * real + m_arm * real;
        }
    }
    ImageBuffer::new(out)
}

/// Mean color of `image` over `mask`.
pub fn masked_mean(image: &ImageBuffer, mask: &MaskBuffer) -> Result<Vec<f64>> {
    let n = mask.count();
    if n == 0 {
        return Err(Error::InvalidInput(
            "hand mask is empty, cannot take its mean color".into(),
        ));
    }
    let mut sum = vec![0.0; image.channels()];
    for ((y, x), &m) in mask.data().indexed_iter() {
        if m {
            for (c, s) in sum.iter_mut().enumerate() {
                *s += image.data()[[y, x, c]];
            }
        }
    }
    Ok(sum.into_iter().map(|s| s / n as f64).collect())
}

/// The object fill color for a seed: one uniform draw per channel.
pub fn object_fill_color(seed: u64, channels: usize) -> Vec<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..channels).map(|_| rng.random::<f64>()).collect()
}

/// Arm pixels take the mean hand color of the synthetic image, object
/// pixels take a seeded random color, everything else stays synthetic.
pub fn random_fill(job: &CompositionJob) -> Result<ImageBuffer> {
    job.check()?;
    let arm = job.effective_arm_mask();
    let c = job.syn.channels();
    let arm_color = if arm.count() > 0 {
        let hand = job
            .hand_mask
            .as_ref()
            .ok_or_else(|| Error::InvalidInput("arm fill needs a hand mask".into()))?;
        masked_mean(&job.syn, hand)?
    } else {
        vec![0.0; c]
    };
    let object_color = object_fill_color(job.seed, c);
    let mut out: Array3<f64> = job.syn.data().clone();
    Zip::indexed(job.object_mask.data()).for_each(|(y, x), &obj| {
        let fill = if obj {
            Some(&object_color)
        } else if arm.get(y, x) {
            Some(&arm_color)
        } else {
            None
        };
        if let Some(color) = fill {
            for ch in 0..c {
                out[[y, x, ch]] = color[ch];
            }
        }
    });
    ImageBuffer::new(out)
}

/// Dispatches on `job.mode`.
pub fn run_job(job: &CompositionJob) -> Result<ImageBuffer> {
    match job.mode {
        CompositionMode::Segmented => compose(job),
        CompositionMode::RandomFill => random_fill(job),
    }
}

/// Runs every job in parallel; results keep the input order.
pub fn run_batch(jobs: &[CompositionJob]) -> Vec<Result<ImageBuffer>> {
    jobs.par_iter().map(run_job).collect()
}

/// Index of the `k`-th synthetic copy of real pose `i` (1-based) among `n`:
/// `j = k·n + i`.
pub fn synth_index(k: u64, i: u64, n: u64) -> Result<u64> {
    if i < 1 || i > n {
        return Err(Error::InvalidInput(format!("pose index {i} outside [1, {n}]")));
    }
    k.checked_mul(n)
        .and_then(|kn| kn.checked_add(i))
        .ok_or_else(|| Error::InvalidInput(format!("synthetic index overflows for k={k}, n={n}")))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn job(h: usize, w: usize) -> CompositionJob {
        CompositionJob {
            syn: ImageBuffer::filled(h, w, [0.2, 0.4, 0.6]).unwrap(),
            real: ImageBuffer::filled(h, w, [0.9, 0.1, 0.3]).unwrap(),
            object_mask: MaskBuffer::empty(h, w),
            arm_mask: MaskBuffer::empty(h, w),
            hand_mask: None,
            mode: CompositionMode::Segmented,
            seed: 0,
        }
    }

    #[test]
    fn empty_masks_keep_the_synthetic_image() {
        let j = job(4, 5);
        assert_eq!(compose(&j).unwrap(), j.syn);
    }

    #[test]
    fn full_object_mask_gives_the_real_image() {
        let mut j = job(4, 5);
        j.object_mask = MaskBuffer::full(4, 5);
        j.arm_mask = MaskBuffer::full(4, 5);
        assert_eq!(compose(&j).unwrap(), j.real);
    }

    #[test]
    fn size_mismatch_is_rejected() {
        let mut j = job(4, 5);
        j.arm_mask = MaskBuffer::empty(4, 4);
        assert!(compose(&j).is_err());
    }

    #[test]
    fn synth_index_formula() {
        assert_eq!(synth_index(0, 1, 100).unwrap(), 1);
        assert_eq!(synth_index(3, 7, 100).unwrap(), 307);
        assert!(synth_index(0, 0, 100).is_err());
        assert!(synth_index(0, 101, 100).is_err());
    }

    #[test]
    fn arm_fill_needs_a_nonempty_hand_mask() {
        let mut j = job(3, 3);
        j.mode = CompositionMode::RandomFill;
        j.arm_mask = MaskBuffer::full(3, 3);
        assert!(random_fill(&j).is_err());
        j.hand_mask = Some(MaskBuffer::empty(3, 3));
        assert!(random_fill(&j).is_err());
        j.hand_mask = Some(MaskBuffer::full(3, 3));
        let out = random_fill(&j).unwrap();
        for (a, b) in out.pixel(1, 1).iter().zip([0.2, 0.4, 0.6]) {
            assert!((a - b).abs() < 1e-15);
        }
    }

    #[test]
    fn object_fill_is_reproducible() {
        let mut j = job(3, 3);
        j.object_mask = MaskBuffer::full(3, 3);
        j.seed = 77;
        let a = random_fill(&j).unwrap();
        let b = random_fill(&j).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.pixel(0, 0), object_fill_color(77, 3));
    }
}
