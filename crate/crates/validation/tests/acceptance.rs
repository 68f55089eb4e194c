//! The nine acceptance criteria, run one after another with their stated
//! tolerances and time budgets. Prints one line per criterion and exits
//! nonzero if any fails. `cargo test -p handsynth-validation --test acceptance -- 4 7`
//! runs a subset.

use std::panic::{catch_unwind, AssertUnwindSafe};
use std::time::{Duration, Instant};

use handsynth_core::compose::{compose, CompositionJob, CompositionMode};
use handsynth_core::diffmath::rotation::rodrigues;
use handsynth_core::fitting::{fit_batch, FitConfig, FitTarget, Objective, Stage};
use handsynth_core::handmodel::{build_desk_hand, lbs_forward, DeskHandSpec, DeskLayout, HandModel, Part, PoseState};
use handsynth_core::image::{ImageBuffer, MaskBuffer};
use handsynth_core::metrics::{evaluate, mpjpe, pa_mpjpe, PoseRecord, SimilarityTransform};
use handsynth_core::occlusion::{label_occlusion, Camera, Mesh, OcclusionConfig};
use handsynth_core::prior::{
    fill_hidden, mean_pose, parameters, refine, train_prior, vae_loss, Normalization, PriorModel, PriorTrainConfig,
    ToyManifold,
};
use handsynth_core::spectrum::{amp_augment, amp_augment_with_lambda, band_variance, sigma_field, AmpAugParams};
use handsynth_core::Error;
use handsynth_validation::{run_pipeline, tree};
use ndarray::{Array2, Array3};
use rand::seq::index::sample;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

type Outcome = Result<String, String>;

fn ensure(cond: bool, msg: impl FnOnce() -> String) -> Result<(), String> {
    if cond {
        Ok(())
    } else {
        Err(msg())
    }
}

fn desk_hand() -> HandModel {
    HandModel::from_asset(build_desk_hand(&DeskHandSpec::default())).unwrap()
}

fn random_image(rng: &mut ChaCha8Rng, h: usize, w: usize, c: usize) -> ImageBuffer {
    ImageBuffer::new(Array3::from_shape_simple_fn((h, w, c), || rng.random::<f64>())).unwrap()
}

// 1 ---------------------------------------------------------------------

fn augmentation_fidelity() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(100);
    let mut worst: f64 = 0.0;
    let flat = AmpAugParams {
        alpha: 0.0,
        beta: 0.0,
        ..Default::default()
    };
    for i in 0..10 {
        let img = random_image(&mut rng, 64, 64, if i % 2 == 0 { 3 } else { 1 });
        let explicit = amp_augment_with_lambda(&img, &Array2::ones((64, 64))).map_err(|e| e.to_string())?;
        let drawn = amp_augment(&img, &AmpAugParams { seed: i, ..flat }).map_err(|e| e.to_string())?;
        for out in [&explicit, &drawn] {
            for (a, b) in out.data().iter().zip(img.data()) {
                worst = worst.max((a - b).abs());
            }
        }
    }
    ensure(worst <= 1e-6, || format!("round trip error {worst:e}"))?;
    let sigma = sigma_field(64, 64, &AmpAugParams::default());
    let dc = sigma[[32, 32]];
    let corner = sigma[[0, 0]];
    ensure((dc - 0.25).abs() < 1e-12, || format!("sigma at DC {dc}"))?;
    ensure((corner - 9.25).abs() < 1e-12, || format!("sigma at corner {corner}"))?;
    Ok(format!(
        "max round-trip error {worst:.1e}, sigma DC {dc}, corner {corner}"
    ))
}

// 2 ---------------------------------------------------------------------

fn box_blur(img: &ImageBuffer) -> ImageBuffer {
    let (h, w, c) = img.data().dim();
    let d = img.data();
    let out = Array3::from_shape_fn((h, w, c), |(y, x, ch)| {
        let mut sum = 0.0;
        for dy in -1i64..=1 {
            for dx in -1i64..=1 {
                let yy = (y as i64 + dy).clamp(0, h as i64 - 1) as usize;
                let xx = (x as i64 + dx).clamp(0, w as i64 - 1) as usize;
                sum += d[[yy, xx, ch]];
            }
        }
        sum / 9.0
    });
    ImageBuffer::new(out).unwrap()
}

fn blur_lowers_spectrum_variance() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(200);
    let noise: Vec<ImageBuffer> = (0..200).map(|_| random_image(&mut rng, 64, 64, 3)).collect();
    let blurred: Vec<ImageBuffer> = noise.iter().map(box_blur).collect();
    let a = band_variance(&noise, 32).map_err(|e| e.to_string())?;
    let b = band_variance(&blurred, 32).map_err(|e| e.to_string())?;
    let top_noise = a.mean_amplitude[31];
    let top_blur = b.mean_amplitude[31];
    ensure(top_blur < top_noise, || {
        format!("top band mean {top_blur} vs {top_noise}")
    })?;
    let lower = (0..32)
        .filter(|&k| b.variance_across_images[k] < a.variance_across_images[k])
        .count();
    ensure(lower >= 30, || format!("variance lower in only {lower} of 32 bands"))?;
    Ok(format!(
        "top band mean {top_blur:.4} < {top_noise:.4}, variance lower in {lower}/32 bands"
    ))
}

// 3 ---------------------------------------------------------------------

fn random_mask(rng: &mut ChaCha8Rng, h: usize, w: usize) -> MaskBuffer {
    let density: f64 = rng.random();
    MaskBuffer::new(Array2::from_shape_simple_fn((h, w), || rng.random_bool(density)))
}

/// Per pixel: object first, then arm, else synthetic.
fn compose_oracle(job: &CompositionJob) -> Array3<f64> {
    let (h, w, c) = job.syn.data().dim();
    Array3::from_shape_fn((h, w, c), |(y, x, ch)| {
        if job.object_mask.get(y, x) || job.arm_mask.get(y, x) {
            job.real.data()[[y, x, ch]]
        } else {
            job.syn.data()[[y, x, ch]]
        }
    })
}

fn compositing_matches_oracle() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(300);
    for scene in 0..100 {
        let h = rng.random_range(1..40);
        let w = rng.random_range(1..40);
        let c = if rng.random_bool(0.5) { 3 } else { 1 };
        let job = CompositionJob {
            syn: random_image(&mut rng, h, w, c),
            real: random_image(&mut rng, h, w, c),
            object_mask: random_mask(&mut rng, h, w),
            arm_mask: random_mask(&mut rng, h, w),
            hand_mask: None,
            mode: CompositionMode::Segmented,
            seed: scene,
        };
        let out = compose(&job).map_err(|e| e.to_string())?;
        ensure(*out.data() == compose_oracle(&job), || {
            format!("scene {scene} differs from the oracle")
        })?;

        let mut empty = job.clone();
        empty.object_mask = MaskBuffer::empty(h, w);
        empty.arm_mask = MaskBuffer::empty(h, w);
        ensure(compose(&empty).unwrap() == job.syn, || {
            format!("scene {scene}: zero masks changed the image")
        })?;
        let mut full = job.clone();
        full.object_mask = MaskBuffer::full(h, w);
        ensure(compose(&full).unwrap() == job.real, || {
            format!("scene {scene}: full mask is not the real image")
        })?;
    }
    Ok("100 scenes exact, identity cases exact".into())
}

// 4 ---------------------------------------------------------------------

/// Learning rate from the schedule's definition, counting whole decay
/// windows since the start of the current epoch.
fn expected_lr(initial: f64, iteration: usize, per_epoch: usize, every: usize, factor: f64) -> f64 {
    let mut i = iteration;
    while i >= per_epoch {
        i -= per_epoch;
    }
    let mut k = 0;
    while i >= every {
        i -= every;
        k += 1;
    }
    initial / factor.powi(k)
}

fn fit_target(model: &HandModel, seed: u64) -> FitTarget {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut u = |s: f64| rng.random_range(-s..s);
    let truth = PoseState {
        pose: (0..model.pose_dim()).map(|_| u(0.05)).collect(),
        shape: (0..model.shape_dim()).map(|_| u(0.5)).collect(),
        rotation: [u(0.5), u(0.5), u(0.5)],
        translation: [u(0.03), u(0.03), u(0.03)],
    };
    let out = lbs_forward(model, &truth).unwrap();
    FitTarget {
        vertices: out.vertices,
        joints: out.joints,
    }
}

fn fitting_recovers_targets() -> Outcome {
    let model = desk_hand();
    let cfg = FitConfig::default();
    let targets: Vec<FitTarget> = (0..20).map(|i| fit_target(&model, 400 + i)).collect();
    let reports = fit_batch(&model, &targets, &cfg);
    let mut recovered = 0;
    let mut rms = Vec::new();
    let every = cfg.schedule.decay_every;
    let factor = cfg.schedule.decay_factor;
    for (i, r) in reports.iter().enumerate() {
        let r = r.as_ref().map_err(|e| format!("target {i}: {e}"))?;
        rms.push(r.vertex_rms);
        recovered += usize::from(r.vertex_rms < 5e-3);
        let coarse = r.coarse.as_ref().ok_or("coarse stage missing")?;
        let fine = r.fine.as_ref().ok_or("fine stage missing")?;
        ensure(
            coarse.lr.len() == cfg.coarse.epochs * cfg.coarse.iters_per_epoch,
            || "coarse trace length".into(),
        )?;
        ensure(fine.lr.len() == cfg.fine.epochs * cfg.fine.iters_per_epoch, || {
            "fine trace length".into()
        })?;
        for (it, lrs) in coarse.lr.iter().enumerate() {
            let per = cfg.coarse.iters_per_epoch;
            let want = [cfg.coarse.lr_rot, cfg.coarse.lr_trans].map(|l| expected_lr(l, it, per, every, factor));
            ensure(lrs[..] == want[..], || {
                format!("target {i}: coarse lr at {it} is {lrs:?}, want {want:?}")
            })?;
        }
        for (it, lrs) in fine.lr.iter().enumerate() {
            let per = cfg.fine.iters_per_epoch;
            for (g, &lr) in fine.lr_groups.iter().zip(lrs) {
                let initial = match g.as_str() {
                    "pose" => cfg.fine.lr_pose,
                    "shape" => cfg.fine.lr_shape,
                    "rotation" => cfg.fine.lr_rot,
                    "translation" => cfg.fine.lr_trans,
                    other => return Err(format!("unknown group {other}")),
                };
                let want = expected_lr(initial, it, per, every, factor);
                ensure(lr == want, || {
                    format!("target {i}: fine {g} lr at {it} is {lr}, want {want}")
                })?;
            }
        }
    }
    rms.sort_by(f64::total_cmp);
    ensure(recovered >= 18, || {
        let listed: Vec<String> = rms.iter().map(|r| format!("{r:.2e}")).collect();
        format!("only {recovered}/20 below 5e-3 m, sorted RMS [{}]", listed.join(", "))
    })?;
    Ok(format!(
        "{recovered}/20 below 5e-3 m (median {:.1e}, worst {:.1e}), lr traces exact",
        rms[10], rms[19]
    ))
}

// 5 ---------------------------------------------------------------------

const FD_STEP: f64 = 1e-6;

fn relative_error(analytic: &[f64], numeric: &[f64]) -> f64 {
    let norm = |v: &[f64]| v.iter().map(|x| x * x).sum::<f64>().sqrt();
    let diff: Vec<f64> = analytic.iter().zip(numeric).map(|(a, b)| a - b).collect();
    let denom = norm(analytic).max(norm(numeric));
    if denom == 0.0 {
        0.0
    } else {
        norm(&diff) / denom
    }
}

fn random_state(model: &HandModel, rng: &mut ChaCha8Rng) -> PoseState {
    let mut u = |s: f64| rng.random_range(-s..s);
    PoseState {
        pose: (0..model.pose_dim()).map(|_| u(0.4)).collect(),
        shape: (0..model.shape_dim()).map(|_| u(1.0)).collect(),
        rotation: [u(1.0), u(1.0), u(1.0)],
        translation: [u(0.05), u(0.05), u(0.05)],
    }
}

fn state_vec(s: &PoseState) -> Vec<f64> {
    s.pose
        .iter()
        .chain(&s.shape)
        .chain(&s.rotation)
        .chain(&s.translation)
        .copied()
        .collect()
}

fn vec_state(template: &PoseState, v: &[f64]) -> PoseState {
    let (p, rest) = v.split_at(template.pose.len());
    let (s, rest) = rest.split_at(template.shape.len());
    PoseState {
        pose: p.to_vec(),
        shape: s.to_vec(),
        rotation: [rest[0], rest[1], rest[2]],
        translation: [rest[3], rest[4], rest[5]],
    }
}

fn fitting_fd_error(model: &HandModel, stage: Stage, seed: u64) -> f64 {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let target = lbs_forward(model, &random_state(model, &mut rng)).unwrap();
    let mut objective = Objective::new(model, stage, &target.vertices, Some(&target.joints)).unwrap();
    let at = random_state(model, &mut rng);
    let (_, g) = objective.eval(&at).unwrap();
    let grad = state_vec(&PoseState {
        pose: g.pose,
        shape: g.shape,
        rotation: g.rotation,
        translation: g.translation,
    });
    let x = state_vec(&at);
    let free = match stage {
        Stage::Coarse { .. } => x.len() - 6..x.len(),
        Stage::Fine { .. } => 0..x.len(),
    };
    let mut analytic = Vec::new();
    let mut numeric = Vec::new();
    for i in free {
        let mut v = x.clone();
        v[i] = x[i] + FD_STEP;
        let fp = objective.eval(&vec_state(&at, &v)).unwrap().0;
        v[i] = x[i] - FD_STEP;
        let fm = objective.eval(&vec_state(&at, &v)).unwrap().0;
        numeric.push((fp - fm) / (2.0 * FD_STEP));
        analytic.push(grad[i]);
    }
    relative_error(&analytic, &numeric)
}

fn vae_fd_error(seed: u64, lambda: f64) -> f64 {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let (joints, latent, batch) = (2, 2, 3);
    let model = PriorModel::new(
        joints,
        latent,
        6,
        Normalization {
            root_joint: 0,
            scale: 1.0,
        },
        seed,
    )
    .unwrap();
    let x = Array2::from_shape_simple_fn((batch, 3 * joints), || rng.random_range(-1.0..1.0));
    let mask = Array2::from_shape_simple_fn((batch, 3 * joints), || f64::from(u8::from(rng.random_bool(0.7))));
    let eps = Array2::from_shape_simple_fn((batch, latent), || StandardNormal.sample(&mut rng));
    let params = parameters(&model);
    let loss = |p: &[Array2<f64>]| vae_loss(&model, p, &x, &mask, &eps, lambda).unwrap().0.total;
    let (_, grads) = vae_loss(&model, &params, &x, &mask, &eps, lambda).unwrap();
    let mut analytic = Vec::new();
    let mut numeric = Vec::new();
    for (idx, g) in grads.iter().enumerate() {
        for k in 0..g.len() {
            let mut shifted = params.clone();
            let base = shifted[idx].as_slice().unwrap()[k];
            shifted[idx].as_slice_mut().unwrap()[k] = base + FD_STEP;
            let fp = loss(&shifted);
            shifted[idx].as_slice_mut().unwrap()[k] = base - FD_STEP;
            let fm = loss(&shifted);
            numeric.push((fp - fm) / (2.0 * FD_STEP));
            analytic.push(g.as_slice().unwrap()[k]);
        }
    }
    relative_error(&analytic, &numeric)
}

fn gradient_suite() -> Outcome {
    let model = desk_hand();
    let mut worst = [0.0f64; 3];
    for seed in 0..100 {
        let coarse = fitting_fd_error(&model, Stage::Coarse { lambda_vert: 0.1 }, seed);
        let fine = fitting_fd_error(
            &model,
            Stage::Fine {
                lambda_pose: 50.0,
                lambda_shape: 50.0,
            },
            seed,
        );
        let vae = vae_fd_error(seed, 0.01).max(vae_fd_error(seed, 1.0));
        for (w, e) in worst.iter_mut().zip([coarse, fine, vae]) {
            *w = w.max(e);
        }
        ensure(coarse < 1e-4 && fine < 1e-4 && vae < 1e-4, || {
            format!("seed {seed}: coarse {coarse:.1e}, fine {fine:.1e}, vae {vae:.1e}")
        })?;
    }
    Ok(format!(
        "100 seeds, worst relative error coarse {:.1e}, fine {:.1e}, vae {:.1e}",
        worst[0], worst[1], worst[2]
    ))
}

// 6 ---------------------------------------------------------------------

fn occlusion_camera() -> Camera {
    Camera {
        fx: 600.0,
        fy: 600.0,
        cx: 128.0,
        cy: 128.0,
        width: 256,
        height: 256,
    }
}

fn disk(cam: &Camera, center: (f64, f64), radius: f64) -> MaskBuffer {
    MaskBuffer::new(Array2::from_shape_fn((cam.height, cam.width), |(y, x)| {
        let dy = y as f64 + 0.5 - center.0;
        let dx = x as f64 + 0.5 - center.1;
        dx * dx + dy * dy <= radius * radius
    }))
}

fn occlusion_scene(model: &HandModel, seed: u64) -> (Array2<f64>, MaskBuffer) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let state = PoseState {
        pose: (0..model.pose_dim()).map(|_| rng.random_range(-0.5..0.5)).collect(),
        shape: (0..model.shape_dim()).map(|_| rng.random_range(-1.0..1.0)).collect(),
        rotation: [
            rng.random_range(-3.0..3.0),
            rng.random_range(-3.0..3.0),
            rng.random_range(-3.0..3.0),
        ],
        translation: [
            rng.random_range(-0.03..0.03),
            rng.random_range(-0.03..0.03),
            rng.random_range(0.35..0.6),
        ],
    };
    let mask = disk(
        &occlusion_camera(),
        (rng.random_range(60.0..200.0), rng.random_range(60.0..200.0)),
        rng.random_range(0.0..60.0),
    );
    (lbs_forward(model, &state).unwrap().vertices, mask)
}

fn hand_mesh<'a>(model: &'a HandModel, vertices: &'a Array2<f64>) -> Mesh<'a> {
    Mesh {
        vertices,
        faces: model.faces(),
        vertex_parts: model.part_labels(),
        face_parts: model.face_parts(),
    }
}

/// Möller–Trumbore from the camera center; hit distance along a ray with
/// unit depth component, which is the hit depth.
fn ray_hit(dir: [f64; 3], t: [[f64; 3]; 3]) -> Option<f64> {
    let sub = |a: [f64; 3], b: [f64; 3]| [a[0] - b[0], a[1] - b[1], a[2] - b[2]];
    let cross = |a: [f64; 3], b: [f64; 3]| {
        [
            a[1] * b[2] - a[2] * b[1],
            a[2] * b[0] - a[0] * b[2],
            a[0] * b[1] - a[1] * b[0],
        ]
    };
    let dot = |a: [f64; 3], b: [f64; 3]| a[0] * b[0] + a[1] * b[1] + a[2] * b[2];
    let (e1, e2) = (sub(t[1], t[0]), sub(t[2], t[0]));
    let p = cross(dir, e2);
    let det = dot(e1, p);
    if det.abs() < 1e-18 {
        return None;
    }
    let s = sub([0.0; 3], t[0]);
    let u = dot(s, p) / det;
    let q = cross(s, e1);
    let v = dot(dir, q) / det;
    let hit = dot(e2, q) / det;
    (u >= 0.0 && v >= 0.0 && u + v <= 1.0 && hit > 0.0).then_some(hit)
}

/// Per-part occluded-vertex counts by casting a ray through every vertex's
/// pixel center against every face.
fn oracle_counts(model: &HandModel, verts: &Array2<f64>, mask: &MaskBuffer, cam: &Camera, tol: f64) -> [usize; 6] {
    let v = |i: usize| [verts[[i, 0]], verts[[i, 1]], verts[[i, 2]]];
    let mut counts = [0; 6];
    for i in 0..verts.nrows() {
        let p = v(i);
        if p[2] <= 1e-4 {
            continue;
        }
        let u = cam.fx * p[0] / p[2] + cam.cx;
        let w = cam.fy * p[1] / p[2] + cam.cy;
        if !(u >= 0.0 && w >= 0.0 && u < cam.width as f64 && w < cam.height as f64) {
            continue;
        }
        let (row, col) = (w.floor() as usize, u.floor() as usize);
        let dir = [
            (col as f64 + 0.5 - cam.cx) / cam.fx,
            (row as f64 + 0.5 - cam.cy) / cam.fy,
            1.0,
        ];
        let nearest = model
            .faces()
            .iter()
            .filter_map(|f| ray_hit(dir, [v(f[0]), v(f[1]), v(f[2])]))
            .fold(f64::INFINITY, f64::min);
        if mask.get(row, col) || p[2] > nearest + tol {
            counts[model.part_labels()[i].index()] += 1;
        }
    }
    counts
}

fn occlusion_labeling() -> Outcome {
    let model = desk_hand();
    let cam = occlusion_camera();
    let cfg = OcclusionConfig::default();
    ensure(cfg.threshold == 40, || format!("default threshold {}", cfg.threshold))?;
    let mut levels = [0usize; 7];
    for seed in 0..50 {
        let (verts, mask) = occlusion_scene(&model, 600 + seed);
        let label = label_occlusion(&hand_mesh(&model, &verts), &cam, &mask, &cfg).map_err(|e| e.to_string())?;
        let counts = oracle_counts(&model, &verts, &mask, &cam, cfg.depth_tolerance);
        let level = counts.iter().filter(|&&c| c >= 40).count() as u8;
        ensure(label.occluded_vertex_counts == counts, || {
            format!(
                "scene {seed}: counts {:?}, oracle {counts:?}",
                label.occluded_vertex_counts
            )
        })?;
        ensure(label.level == level, || {
            format!("scene {seed}: level {} vs oracle {level}", label.level)
        })?;
        levels[level as usize] += 1;
    }

    // Exactly 39, 40 and 41 masked vertices of one part, each alone in its pixel.
    let n = 100;
    let cloud = Array2::from_shape_fn((n, 3), |(i, a)| match a {
        0 => ((i % 50) as f64 * 2.0 + 10.5 - 128.0) / 600.0,
        1 => ((i / 50) as f64 * 2.0 + 10.5 - 128.0) / 600.0,
        _ => 1.0,
    });
    let parts = vec![Part::Ring; n];
    let cloud_mesh = Mesh {
        vertices: &cloud,
        faces: &[],
        vertex_parts: &parts,
        face_parts: &[],
    };
    for covered in [39usize, 40, 41] {
        let mask = MaskBuffer::new(Array2::from_shape_fn((256, 256), |(y, x)| {
            y >= 10 && x >= 10 && (y - 10) % 2 == 0 && (x - 10) % 2 == 0 && (x - 10) / 2 < 50 && {
                (y - 10) / 2 * 50 + (x - 10) / 2 < covered
            }
        }));
        let label = label_occlusion(&cloud_mesh, &cam, &mask, &cfg).map_err(|e| e.to_string())?;
        let flagged = label.per_part_occluded[Part::Ring.index()];
        ensure(flagged == (covered >= 40), || {
            format!("{covered} occluded vertices flagged={flagged}")
        })?;
    }

    for seed in 0..10 {
        let (verts, _) = occlusion_scene(&model, 700 + seed);
        let mut prev = (0u8, [0usize; 6]);
        for radius in [0.0, 5.0, 15.0, 30.0, 60.0, 120.0, 400.0] {
            let label = label_occlusion(
                &hand_mesh(&model, &verts),
                &cam,
                &disk(&cam, (128.0, 128.0), radius),
                &cfg,
            )
            .map_err(|e| e.to_string())?;
            let counts = label.occluded_vertex_counts;
            ensure(label.level >= prev.0 && (0..6).all(|p| counts[p] >= prev.1[p]), || {
                format!("scene {seed}: growing the mask to radius {radius} lowered a count")
            })?;
            prev = (label.level, counts);
        }
    }
    Ok(format!(
        "50 scenes match the ray oracle (levels seen {levels:?}), 39/40/41 threshold, monotone"
    ))
}

// 7 ---------------------------------------------------------------------

fn hidden_rms(estimate: &Array2<f64>, truth: &Array2<f64>, visible: &[bool]) -> (f64, usize) {
    let mut sum = 0.0;
    let mut n = 0;
    for (j, &vis) in visible.iter().enumerate() {
        if !vis {
            sum += (0..3).map(|a| (estimate[[j, a]] - truth[[j, a]]).powi(2)).sum::<f64>();
            n += 1;
        }
    }
    (sum, n)
}

fn prior_refinement() -> Outcome {
    let toy = ToyManifold::new().map_err(|e| e.to_string())?;
    let train = toy.sample(6144, 1).map_err(|e| e.to_string())?;
    let test = toy.sample(200, 2).map_err(|e| e.to_string())?;
    let cfg = PriorTrainConfig {
        epochs: 20,
        ..Default::default()
    };
    ensure(
        cfg.latent_dim == 64 && cfg.batch_size == 128 && cfg.learning_rate == 1e-4 && cfg.lambda_kl == 0.01,
        || "default prior config drifted".into(),
    )?;
    let (model, _) = train_prior(&train, &cfg).map_err(|e| e.to_string())?;
    let mean = mean_pose(&train, 0).map_err(|e| e.to_string())?;
    let joints = test[0].nrows();
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let (mut refined_sq, mut baseline_sq, mut count) = (0.0, 0.0, 0);
    for pose in &test {
        let mut visible = vec![true; joints];
        for j in sample(&mut rng, joints - 1, 6) {
            visible[j + 1] = false;
        }
        // Hidden joints carry garbage so nothing leaks from the truth.
        let mut observed = pose.clone();
        for (j, &vis) in visible.iter().enumerate() {
            if !vis {
                observed.row_mut(j).fill(1e3);
            }
        }
        let r = refine(&model, &observed, &visible).map_err(|e| e.to_string())?;
        for (j, &vis) in visible.iter().enumerate() {
            if vis {
                let same = (0..3).all(|a| r.pose[[j, a]].to_bits() == observed[[j, a]].to_bits());
                ensure(same, || format!("visible joint {j} was altered"))?;
            }
        }
        let base = fill_hidden(&observed, &visible, &mean, 0).map_err(|e| e.to_string())?;
        let (rs, n) = hidden_rms(&r.pose, pose, &visible);
        let (bs, _) = hidden_rms(&base, pose, &visible);
        refined_sq += rs;
        baseline_sq += bs;
        count += n;
    }
    let refined = (refined_sq / count as f64).sqrt();
    let baseline = (baseline_sq / count as f64).sqrt();
    let gain = 1.0 - refined / baseline;
    ensure(gain >= 0.2, || {
        format!(
            "hidden-joint RMS {refined:.4e} vs mean-pose {baseline:.4e}, improvement {:.1}%",
            100.0 * gain
        )
    })?;
    Ok(format!(
        "hidden-joint RMS {:.2} mm vs mean pose {:.2} mm ({:.1}% better, 6/{joints} hidden), visible joints bit-exact",
        refined * 1e3,
        baseline * 1e3,
        100.0 * gain
    ))
}

// 8 ---------------------------------------------------------------------

fn random_similarity(rng: &mut ChaCha8Rng) -> SimilarityTransform {
    SimilarityTransform {
        scale: rng.random_range(0.2..5.0),
        rotation: rodrigues([
            rng.random_range(-3.0..3.0),
            rng.random_range(-3.0..3.0),
            rng.random_range(-3.0..3.0),
        ]),
        translation: [
            rng.random_range(-1.0..1.0),
            rng.random_range(-1.0..1.0),
            rng.random_range(-1.0..1.0),
        ],
    }
}

fn metric_properties() -> Outcome {
    let toy = ToyManifold::new().map_err(|e| e.to_string())?;
    let poses = toy.sample(1000, 8).map_err(|e| e.to_string())?;
    let mut rng = ChaCha8Rng::seed_from_u64(800);
    let noise = |rng: &mut ChaCha8Rng, n: usize, s: f64| {
        Array2::from_shape_simple_fn((n, 3), || s * rng.random_range(-1.0..1.0))
    };

    let gt = &poses[0];
    let pred = gt + &noise(&mut rng, gt.nrows(), 0.01);
    let base = pa_mpjpe(&pred, gt).map_err(|e| e.to_string())?;
    let mut drift: f64 = 0.0;
    for _ in 0..1000 {
        let moved = random_similarity(&mut rng).apply(&pred);
        drift = drift.max((pa_mpjpe(&moved, gt).map_err(|e| e.to_string())? - base).abs());
    }
    ensure(drift <= 1e-9, || format!("PA-MPJPE moved by {drift:e} cm"))?;

    // The ordering is checked on several families of pairs and every
    // violation is counted, so a failure shows where the property breaks.
    let families = [
        "moved and perturbed",
        "iid noise",
        "unrelated",
        "neighbouring pose",
        "one displaced joint",
    ];
    let mut violations = [0usize; 5];
    let mut worst = [1.0f64; 5];
    for (i, gt) in poses.iter().enumerate() {
        let j = gt.nrows();
        let mut one_off = gt.clone();
        one_off[[rng.random_range(0..j), rng.random_range(0..3)]] += 0.02;
        let preds = [
            random_similarity(&mut rng).apply(&(gt + &noise(&mut rng, j, 0.02))),
            gt + &noise(&mut rng, j, 0.01),
            noise(&mut rng, j, 0.1),
            poses[(i + 1) % poses.len()].clone(),
            one_off,
        ];
        for (f, p) in preds.iter().enumerate() {
            let pa = pa_mpjpe(p, gt).map_err(|e| e.to_string())?;
            let raw = mpjpe(p, gt).map_err(|e| e.to_string())?;
            if pa > raw {
                violations[f] += 1;
                worst[f] = worst[f].max(pa / raw);
            }
        }
    }
    let ordering: Vec<String> = families
        .iter()
        .zip(violations.iter().zip(worst))
        .map(|(name, (&v, w))| {
            if v == 0 {
                format!("{name} 0")
            } else {
                format!("{name} {v} (worst PA/MPJPE {w:.2})")
            }
        })
        .collect();
    let ordering = format!(
        "PA > MPJPE in {} of {} pairs: {}",
        violations.iter().sum::<usize>(),
        5 * poses.len(),
        ordering.join(", ")
    );

    let layout = DeskLayout::new(true);
    let map = layout.topology_map();
    let carpal = HandModel::from_asset(build_desk_hand(&DeskHandSpec {
        extra_carpal_joints: true,
        ..Default::default()
    }))
    .map_err(|e| e.to_string())?;
    let mut preds = Vec::new();
    let mut truth = Vec::new();
    let mut levels = Vec::new();
    for i in 0..10 {
        let mut state = PoseState::zeros(&carpal);
        state.pose.iter_mut().for_each(|p| *p = rng.random_range(-0.2..0.2));
        let j25 = lbs_forward(&carpal, &state).map_err(|e| e.to_string())?.joints;
        let j21 = Array2::from_shape_fn((map.len(), 3), |(r, a)| j25[[map[r], a]]);
        let id = format!("s{i}");
        preds.push(PoseRecord {
            id: id.clone(),
            joints: &j25 + &noise(&mut rng, 25, 0.005),
            vertices: None,
        });
        truth.push(PoseRecord {
            id: id.clone(),
            joints: j21,
            vertices: None,
        });
        levels.push((id, (i % 7) as u8));
    }
    match evaluate(&preds, &truth, &levels, None) {
        Err(e @ Error::TopologyRequired { .. }) => ensure(e.to_string().contains("label adaptation"), || {
            format!("unexpected message: {e}")
        })?,
        other => return Err(format!("25 vs 21 joints without a map gave {other:?}")),
    }
    let adapted = evaluate(&preds, &truth, &levels, Some(&map)).map_err(|e| e.to_string())?;
    ensure(adapted.topology_adapted, || "report does not flag adaptation".into())?;
    let direct: f64 = preds
        .iter()
        .zip(&truth)
        .map(|(p, t)| {
            let a = Array2::from_shape_fn((map.len(), 3), |(r, c)| p.joints[[map[r], c]]);
            pa_mpjpe(&a, &t.joints).unwrap()
        })
        .sum::<f64>()
        / preds.len() as f64;
    ensure((adapted.overall.pa_mpjpe - direct).abs() < 1e-12, || {
        "adapted metrics disagree".into()
    })?;
    let summary = format!(
        "invariance drift {drift:.1e} cm over 1000 transforms, 25->21 adaptation required and applied; {ordering}"
    );
    ensure(violations.iter().all(|&v| v == 0), || summary.clone())?;
    Ok(summary)
}

// 9 ---------------------------------------------------------------------

fn pipeline_determinism() -> Outcome {
    let default_fit = serde_json::to_string(&FitConfig::default()).unwrap();
    let a = tempfile::tempdir().map_err(|e| e.to_string())?;
    let b = tempfile::tempdir().map_err(|e| e.to_string())?;
    let run = |root: &std::path::Path| {
        run_pipeline(root, 9, &default_fit, 4).and_then(|out| tree(&out).map_err(|e| e.to_string()))
    };
    let first = run(a.path())?;
    let second = run(b.path())?;
    let names = |t: &[(std::path::PathBuf, Vec<u8>)]| t.iter().map(|(p, _)| p.clone()).collect::<Vec<_>>();
    ensure(names(&first) == names(&second), || {
        "the runs wrote different file sets".into()
    })?;
    for ((path, x), (_, y)) in first.iter().zip(&second) {
        ensure(x == y, || format!("{} differs between runs", path.display()))?;
    }
    let bytes: usize = first.iter().map(|(_, d)| d.len()).sum();
    Ok(format!(
        "{} files, {bytes} bytes, identical across two runs",
        first.len()
    ))
}

// ----------------------------------------------------------------------

struct Criterion {
    number: usize,
    name: &'static str,
    budget: Duration,
    run: fn() -> Outcome,
}

fn main() {
    let criteria = [
        Criterion {
            number: 1,
            name: "augmentation round trip and sigma constants",
            budget: Duration::from_secs(1),
            run: augmentation_fidelity,
        },
        Criterion {
            number: 2,
            name: "blur lowers spectrum statistics",
            budget: Duration::from_secs(30),
            run: blur_lowers_spectrum_variance,
        },
        Criterion {
            number: 3,
            name: "compositing equals per-pixel oracle",
            budget: Duration::from_secs(10),
            run: compositing_matches_oracle,
        },
        Criterion {
            number: 4,
            name: "two-stage fit and learning-rate schedule",
            budget: Duration::from_secs(600),
            run: fitting_recovers_targets,
        },
        Criterion {
            number: 5,
            name: "gradients match finite differences",
            budget: Duration::from_secs(60),
            run: gradient_suite,
        },
        Criterion {
            number: 6,
            name: "occlusion labels, threshold, monotonicity",
            budget: Duration::from_secs(60),
            run: occlusion_labeling,
        },
        Criterion {
            number: 7,
            name: "prior refinement beats the mean pose",
            budget: Duration::from_secs(300),
            run: prior_refinement,
        },
        Criterion {
            number: 8,
            name: "metric invariance, ordering, topology",
            budget: Duration::from_secs(30),
            run: metric_properties,
        },
        Criterion {
            number: 9,
            name: "pipeline is byte-for-byte deterministic",
            budget: Duration::from_secs(900),
            run: pipeline_determinism,
        },
    ];
    let selected: Vec<usize> = std::env::args().skip(1).filter_map(|a| a.parse().ok()).collect();
    let mut failed = 0;
    for c in criteria
        .iter()
        .filter(|c| selected.is_empty() || selected.contains(&c.number))
    {
        let start = Instant::now();
        let outcome = catch_unwind(AssertUnwindSafe(c.run)).unwrap_or_else(|panic| {
            let msg = panic
                .downcast_ref::<String>()
                .cloned()
                .or_else(|| panic.downcast_ref::<&str>().map(|s| s.to_string()))
                .unwrap_or_default();
            Err(format!("panicked: {msg}"))
        });
        let elapsed = start.elapsed();
        let outcome = match outcome {
            Ok(detail) if elapsed > c.budget => Err(format!("{detail}; over the {:?} budget", c.budget)),
            other => other,
        };
        let (status, detail) = match &outcome {
            Ok(d) => ("PASS", d),
            Err(d) => ("FAIL", d),
        };
        failed += usize::from(outcome.is_err());
        println!(
            "criterion {} {status} [{:>7.2}s / {:>4}s] {}: {detail}",
            c.number,
            elapsed.as_secs_f64(),
            c.budget.as_secs(),
            c.name
        );
    }
    if failed > 0 {
        println!("{failed} acceptance criteria failed");
        std::process::exit(1);
    }
}
