use handsynth_core::compose::{compose, object_fill_color, random_fill, run_batch, CompositionJob, CompositionMode};
use handsynth_core::image::{ImageBuffer, MaskBuffer};
use ndarray::{Array2, Array3};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn scene(seed: u64, h: usize, w: usize) -> CompositionJob {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let density: f64 = rng.random();
    let img = |rng: &mut ChaCha8Rng| {
        ImageBuffer::new(Array3::from_shape_simple_fn((h, w, 3), || {
            (rng.random_range(0..=255u8) as f64) / 255.0
        }))
        .unwrap()
    };
    let syn = img(&mut rng);
    let real = img(&mut rng);
    let mask =
        |rng: &mut ChaCha8Rng| MaskBuffer::new(Array2::from_shape_simple_fn((h, w), || rng.random_bool(density)));
    let object_mask = mask(&mut rng);
    let arm_mask = mask(&mut rng);
    let hand_mask = Some(
        mask(&mut rng).union(&MaskBuffer::new(Array2::from_shape_fn((h, w), |(y, x)| {
            y == 0 && x == 0
        }))),
    );
    CompositionJob {
        syn,
        real,
        object_mask,
        arm_mask,
        hand_mask,
        mode: CompositionMode::Segmented,
        seed,
    }
}

/// Per-pixel selection written out independently of the library.
fn oracle(job: &CompositionJob) -> Array3<f64> {
    let (h, w, c) = job.syn.data().dim();
    let mut out = Array3::zeros((h, w, c));
    for y in 0..h {
        for x in 0..w {
            let from_real = job.object_mask.get(y, x) || job.arm_mask.get(y, x);
            for ch in 0..c {
                out[[y, x, ch]] = if from_real {
                    job.real.data()[[y, x, ch]]
                } else {
                    job.syn.data()[[y, x, ch]]
                };
            }
        }
    }
    out
}

#[test]
fn compose_matches_the_brute_force_oracle() {
    for seed in 0..100 {
        let job = scene(seed, 17 + (seed as usize % 5), 23);
        assert_eq!(compose(&job).unwrap().data(), &oracle(&job), "scene {seed}");
    }
}

#[test]
fn identity_cases() {
    let mut job = scene(1, 8, 8);
    job.object_mask = MaskBuffer::empty(8, 8);
    job.arm_mask = MaskBuffer::empty(8, 8);
    assert_eq!(compose(&job).unwrap(), job.syn);
    job.object_mask = MaskBuffer::full(8, 8);
    assert_eq!(compose(&job).unwrap(), job.real);
    job.object_mask = MaskBuffer::empty(8, 8);
    job.arm_mask = MaskBuffer::full(8, 8);
    assert_eq!(compose(&job).unwrap(), job.real);
}

#[test]
fn random_fill_colors_each_region() {
    let job = scene(5, 12, 9);
    let out = random_fill(&job).unwrap();
    let hand = job.hand_mask.as_ref().unwrap();
    let mut mean = [0.0; 3];
    for ((y, x), &m) in hand.data().indexed_iter() {
        if m {
            for (c, m) in mean.iter_mut().enumerate() {
                *m += job.syn.data()[[y, x, c]];
            }
        }
    }
    let n = hand.count() as f64;
    let mean = mean.map(|s| s / n);
    let object = object_fill_color(job.seed, 3);
    for y in 0..12 {
        for x in 0..9 {
            let px = out.pixel(y, x);
            if job.object_mask.get(y, x) {
                assert_eq!(px, object);
            } else if job.arm_mask.get(y, x) {
                for c in 0..3 {
                    assert!((px[c] - mean[c]).abs() < 1e-12);
                }
            } else {
                assert_eq!(px, job.syn.pixel(y, x));
            }
        }
    }
}

#[test]
fn batch_keeps_order_and_reports_failures_per_job() {
    let mut jobs: Vec<CompositionJob> = (0..6).map(|s| scene(s, 6, 7)).collect();
    jobs[3].arm_mask = MaskBuffer::empty(5, 7);
    let results = run_batch(&jobs);
    for (i, r) in results.iter().enumerate() {
        if i == 3 {
            assert!(r.is_err());
        } else {
            assert_eq!(r.as_ref().unwrap(), &compose(&jobs[i]).unwrap());
        }
    }
}

proptest! {
    #[test]
    fn untouched_pixels_stay_synthetic_and_object_wins(seed in any::<u64>(), h in 1usize..12, w in 1usize..12) {
        let job = scene(seed, h, w);
        let out = compose(&job).unwrap();
        for y in 0..h {
            for x in 0..w {
                let expect = if job.object_mask.get(y, x) || job.arm_mask.get(y, x) {
                    job.real.pixel(y, x)
                } else {
                    job.syn.pixel(y, x)
                };
                prop_assert_eq!(out.pixel(y, x), expect);
            }
        }
        let trimmed = job.effective_arm_mask();
        prop_assert!(trimmed.is_subset_of(&job.arm_mask));
        prop_assert_eq!(trimmed.data().iter().zip(job.object_mask.data().iter()).filter(|(a, b)| **a && **b).count(), 0);
    }
}
