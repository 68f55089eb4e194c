use std::hint::black_box;

use criterion::{criterion_group, criterion_main, Criterion};
use handsynth_core::diffmath::rotation::rodrigues;
use handsynth_core::fitting::{Objective, Stage};
use handsynth_core::handmodel::{build_desk_hand, lbs_forward, DeskHandSpec, HandModel, PoseState};
use handsynth_core::image::{ImageBuffer, MaskBuffer};
use handsynth_core::metrics::{pa_mpjpe, SimilarityTransform};
use handsynth_core::occlusion::{label_occlusion, rasterize, Camera, Mesh, OcclusionConfig};
use handsynth_core::prior::{parameters, vae_loss, Normalization, PriorModel};
use handsynth_core::spectrum::{amp_augment, band_variance, AmpAugParams};
use ndarray::{Array2, Array3};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn hand() -> HandModel {
    HandModel::from_asset(build_desk_hand(&DeskHandSpec::default())).unwrap()
}

fn posed(model: &HandModel, rng: &mut ChaCha8Rng) -> PoseState {
    PoseState {
        pose: (0..model.pose_dim()).map(|_| rng.random_range(-0.3..0.3)).collect(),
        shape: (0..model.shape_dim()).map(|_| rng.random_range(-1.0..1.0)).collect(),
        rotation: [0.3, -0.2, 0.1],
        translation: [0.0, 0.0, 0.45],
    }
}

fn image(rng: &mut ChaCha8Rng, size: usize) -> ImageBuffer {
    ImageBuffer::new(Array3::from_shape_simple_fn((size, size, 3), || rng.random::<f64>())).unwrap()
}

fn hand_model(c: &mut Criterion) {
    let model = hand();
    let mut rng = ChaCha8Rng::seed_from_u64(0);
    let state = posed(&model, &mut rng);
    c.bench_function("lbs_forward", |b| {
        b.iter(|| lbs_forward(&model, black_box(&state)).unwrap())
    });

    let target = lbs_forward(&model, &posed(&model, &mut rng)).unwrap();
    let stage = Stage::Fine {
        lambda_pose: 50.0,
        lambda_shape: 50.0,
    };
    let mut objective = Objective::new(&model, stage, &target.vertices, Some(&target.joints)).unwrap();
    c.bench_function("fine_objective_with_gradient", |b| {
        b.iter(|| objective.eval(black_box(&state)).unwrap())
    });
}

fn spectrum(c: &mut Criterion) {
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let img = image(&mut rng, 224);
    let params = AmpAugParams::default();
    c.bench_function("amp_augment_224", |b| {
        b.iter(|| amp_augment(black_box(&img), &params).unwrap())
    });
    let corpus: Vec<ImageBuffer> = (0..32).map(|_| image(&mut rng, 64)).collect();
    c.bench_function("band_variance_32x64", |b| {
        b.iter(|| band_variance(black_box(&corpus), 32).unwrap())
    });
}

fn occlusion(c: &mut Criterion) {
    let model = hand();
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let vertices = lbs_forward(&model, &posed(&model, &mut rng)).unwrap().vertices;
    let mesh = Mesh {
        vertices: &vertices,
        faces: model.faces(),
        vertex_parts: model.part_labels(),
        face_parts: model.face_parts(),
    };
    let camera = Camera {
        fx: 600.0,
        fy: 600.0,
        cx: 128.0,
        cy: 128.0,
        width: 256,
        height: 256,
    };
    let mask = MaskBuffer::new(Array2::from_shape_fn((256, 256), |(y, x)| x > 100 && y > 120));
    c.bench_function("rasterize_256", |b| {
        b.iter(|| rasterize(black_box(&mesh), &camera).unwrap())
    });
    c.bench_function("label_occlusion_256", |b| {
        b.iter(|| label_occlusion(black_box(&mesh), &camera, &mask, &OcclusionConfig::default()).unwrap())
    });
}

fn metrics(c: &mut Criterion) {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let gt = Array2::from_shape_simple_fn((21, 3), || rng.random_range(-0.1..0.1));
    let t = SimilarityTransform {
        scale: 1.3,
        rotation: rodrigues([0.4, 1.0, -0.7]),
        translation: [0.1, 0.2, 0.3],
    };
    let pred = t.apply(&(&gt + &Array2::from_shape_simple_fn((21, 3), || rng.random_range(-0.01..0.01))));
    c.bench_function("pa_mpjpe_21", |b| b.iter(|| pa_mpjpe(black_box(&pred), &gt).unwrap()));
}

fn prior(c: &mut Criterion) {
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let model = PriorModel::new(
        21,
        64,
        512,
        Normalization {
            root_joint: 0,
            scale: 0.05,
        },
        0,
    )
    .unwrap();
    let params = parameters(&model);
    let x = Array2::from_shape_simple_fn((128, 63), || rng.random_range(-1.0..1.0));
    let mask = Array2::from_shape_simple_fn((128, 63), || f64::from(u8::from(rng.random_bool(0.75))));
    let eps = Array2::from_shape_simple_fn((128, 64), || rng.random_range(-1.0..1.0));
    let mut group = c.benchmark_group("prior");
    group.sample_size(20);
    group.bench_function("vae_loss_batch_128", |b| {
        b.iter(|| vae_loss(&model, black_box(&params), &x, &mask, &eps, 0.01).unwrap())
    });
    group.finish();
}

criterion_group!(benches, hand_model, spectrum, occlusion, metrics, prior);
criterion_main!(benches);
