use handsynth_core::prior::{
    kl_divergence, refine, train_prior, Normalization, PriorModel, PriorTrainConfig, ToyManifold,
};
use handsynth_core::Error;
use ndarray::Array2;
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn small_config(seed: u64) -> PriorTrainConfig {
    PriorTrainConfig {
        batch_size: 16,
        learning_rate: 1e-3,
        epochs: 3,
        latent_dim: 4,
        hidden_dim: 16,
        seed,
        ..Default::default()
    }
}

fn toy(n: usize, seed: u64) -> Vec<Array2<f64>> {
    ToyManifold::new().unwrap().sample(n, seed).unwrap()
}

#[test]
fn fixed_seed_gives_a_bit_identical_model() {
    let poses = toy(64, 1);
    let (a, ra) = train_prior(&poses, &small_config(7)).unwrap();
    let (b, rb) = train_prior(&poses, &small_config(7)).unwrap();
    assert_eq!(a, b);
    assert_eq!(a.to_json().unwrap(), b.to_json().unwrap());
    assert_eq!(ra, rb);
    let (c, _) = train_prior(&poses, &small_config(8)).unwrap();
    assert_ne!(a, c);
}

#[test]
fn reported_total_is_the_weighted_sum_at_every_step() {
    let poses = toy(64, 2);
    let cfg = PriorTrainConfig {
        lambda_kl: 0.37,
        ..small_config(3)
    };
    let (_, report) = train_prior(&poses, &cfg).unwrap();
    assert_eq!(report.steps.len(), 3 * 4);
    for s in &report.steps {
        assert!((s.loss.total - (0.37 * s.loss.kl + s.loss.recon)).abs() <= 1e-12);
        assert!(s.loss.kl >= 0.0);
    }
}

#[test]
fn pure_autoencoder_reconstruction_improves_every_early_epoch() {
    let poses = toy(1024, 3);
    let cfg = PriorTrainConfig {
        lambda_kl: 0.0,
        mask_rate: 0.0,
        epochs: 5,
        ..Default::default()
    };
    let (_, report) = train_prior(&poses, &cfg).unwrap();
    let rms = &report.epoch_recon_rms;
    assert_eq!(rms.len(), 5);
    for w in rms.windows(2) {
        assert!(w[1] < w[0], "{rms:?}");
    }
}

#[test]
fn divergence_reports_epoch_and_step() {
    let poses = toy(32, 4);
    let cfg = PriorTrainConfig {
        learning_rate: 1e300,
        ..small_config(0)
    };
    match train_prior(&poses, &cfg) {
        Err(Error::Training { epoch, step, .. }) => assert_eq!((epoch, step), (0, 1)),
        other => panic!("expected a training error, got {other:?}"),
    }
}

#[test]
fn saved_model_round_trips_through_a_file() {
    let dir = std::env::temp_dir().join(format!("handsynth-prior-{}", std::process::id()));
    std::fs::create_dir_all(&dir).unwrap();
    let path = dir.join("prior.json");
    let m = PriorModel::new(
        21,
        8,
        16,
        Normalization {
            root_joint: 0,
            scale: 0.04,
        },
        2,
    )
    .unwrap();
    m.save(&path).unwrap();
    assert_eq!(PriorModel::load(&path).unwrap(), m);
    std::fs::remove_dir_all(dir).unwrap();
}

proptest! {
    #[test]
    fn kl_is_nonnegative(values in proptest::collection::vec((-5.0f64..5.0, -5.0f64..5.0), 1..16)) {
        let mu = Array2::from_shape_vec((1, values.len()), values.iter().map(|v| v.0).collect()).unwrap();
        let lv = Array2::from_shape_vec((1, values.len()), values.iter().map(|v| v.1).collect()).unwrap();
        prop_assert!(kl_divergence(&mu, &lv).unwrap() >= 0.0);
    }

    #[test]
    fn refine_never_touches_visible_joints(seed in any::<u64>(), visible in proptest::collection::vec(any::<bool>(), 21)) {
        let model = PriorModel::new(21, 4, 12, Normalization { root_joint: 0, scale: 0.05 }, seed).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let pose = Array2::from_shape_simple_fn((21, 3), || rng.random_range(-0.2..0.2));
        let out = refine(&model, &pose, &visible).unwrap();
        for j in 0..21 {
            if visible[j] {
                for a in 0..3 {
                    prop_assert_eq!(out.pose[[j, a]].to_bits(), pose[[j, a]].to_bits());
                }
            }
        }
        prop_assert_eq!(out.all_hidden, visible.iter().all(|v| !v));
    }
}
