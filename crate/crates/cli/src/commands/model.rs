use std::path::Path;

use anyhow::{anyhow, Context};
use handsynth_core::fitting::{fit_batch, FitConfig, FitReport, FitTarget};
use handsynth_core::handmodel::{build_desk_hand, lbs_forward, DeskHandSpec, HandModel, Part, PoseState};
use handsynth_core::image::{ImageBuffer, MaskBuffer};
use handsynth_core::occlusion::{rasterize, Mesh};
use handsynth_core::prior::ToyManifold;
use handsynth_core::seed::derive_seed;
use ndarray::{Array2, Array3};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::Serialize;
use serde_json::json;

use super::output;
use crate::args::{BuildAssetArgs, FitArgs, ToyDataArgs};
use crate::io::{
    array_to_points, points_to_array, read_json, write_image, write_json, write_jsonl, write_mask, PoseFile, PoseLine,
};
use crate::manifest::{load_manifest, CameraSpec, Field, MaskPaths, Record};
use crate::summary::{Failure, Run};

pub fn build_asset(args: &BuildAssetArgs, out: &Path) -> anyhow::Result<Run> {
    let spec = DeskHandSpec {
        extra_carpal_joints: args.carpal,
        shape_components: args.shape_components,
        ..Default::default()
    };
    let asset = build_desk_hand(&spec);
    // Validate before writing.
    HandModel::from_asset(asset.clone())?;
    let mut run = Run {
        config: json!({ "carpal": args.carpal, "shapeComponents": args.shape_components }),
        ..Default::default()
    };
    let path = output(&mut run.outputs, out, &args.name);
    std::fs::write(&path, serde_json::to_string(&asset)?).with_context(|| format!("writing {}", path.display()))?;
    Ok(run)
}

const PALETTE: [[f64; 3]; 6] = [
    [0.85, 0.55, 0.45],
    [0.80, 0.60, 0.50],
    [0.75, 0.58, 0.48],
    [0.82, 0.62, 0.52],
    [0.78, 0.56, 0.46],
    [0.88, 0.66, 0.56],
];

struct ToyFrame {
    record: Record,
    pose: PoseFile,
    syn: ImageBuffer,
    real: ImageBuffer,
    object: MaskBuffer,
    arm: MaskBuffer,
    hand: MaskBuffer,
}

fn toy_frame(model: &HandModel, id: &str, seed: u64, size: usize) -> anyhow::Result<ToyFrame> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let state = PoseState {
        pose: (0..model.pose_dim()).map(|_| rng.random_range(-0.05..0.05)).collect(),
        shape: (0..model.shape_dim()).map(|_| rng.random_range(-0.5..0.5)).collect(),
        rotation: [
            rng.random_range(-0.6..0.6),
            rng.random_range(-0.6..0.6),
            rng.random_range(-0.6..0.6),
        ],
        translation: [
            rng.random_range(-0.02..0.02),
            rng.random_range(-0.02..0.02),
            rng.random_range(-0.02..0.02),
        ],
    };
    let posed = lbs_forward(model, &state)?;
    let v = &posed.vertices;
    let centroid: Vec<f64> = (0..3).map(|a| v.column(a).mean().unwrap_or(0.0)).collect();
    let extent = v
        .rows()
        .into_iter()
        .map(|r| (0..3).map(|a| (r[a] - centroid[a]).powi(2)).sum::<f64>().sqrt())
        .fold(0.0, f64::max);
    let f = size as f64;
    let depth = extent / 0.35;
    let camera = CameraSpec {
        fx: f,
        fy: f,
        cx: f / 2.0,
        cy: f / 2.0,
        width: size,
        height: size,
        rotation: [0.0; 3],
        translation: [-centroid[0], -centroid[1], depth - centroid[2]],
    };
    let cam_verts = Array2::from_shape_fn(v.dim(), |(i, a)| {
        camera.to_camera_frame([v[[i, 0]], v[[i, 1]], v[[i, 2]]])[a]
    });
    let mesh = Mesh {
        vertices: &cam_verts,
        faces: model.faces(),
        vertex_parts: model.part_labels(),
        face_parts: model.face_parts(),
    };
    let render = rasterize(&mesh, &camera.intrinsics())?;
    let hand = MaskBuffer::new(render.part_id.mapv(|p| p.is_some()));

    let near = render.depth.iter().cloned().fold(f64::INFINITY, f64::min);
    let syn = Array3::from_shape_fn((size, size, 3), |(y, x, c)| match render.part_id[[y, x]] {
        Some(p) => {
            let shade = (1.0 - 4.0 * (render.depth[[y, x]] - near)).clamp(0.5, 1.0);
            PALETTE[Part::index(p)][c] * shade
        }
        None => 0.25 + 0.1 * ((x + 2 * y + c) % 7) as f64 / 7.0,
    });
    let tint: [f64; 3] = [rng.random(), rng.random(), rng.random()];
    let real = Array3::from_shape_fn((size, size, 3), |(y, x, c)| {
        let ramp = 0.5 * (x as f64 / f) + 0.3 * (y as f64 / f);
        (0.15 + 0.5 * tint[c] * ramp + 0.2 * rng.random::<f64>()).clamp(0.0, 1.0)
    });

    let covered: Vec<(usize, usize)> = hand.data().indexed_iter().filter(|(_, &m)| m).map(|(i, _)| i).collect();
    let center = if covered.is_empty() {
        (size / 2, size / 2)
    } else {
        covered[rng.random_range(0..covered.len())]
    };
    let radius = rng.random_range(0.05..0.25) * f;
    let object = MaskBuffer::new(Array2::from_shape_fn((size, size), |(y, x)| {
        let dy = y as f64 - center.0 as f64;
        let dx = x as f64 - center.1 as f64;
        dx * dx + dy * dy <= radius * radius
    }));
    let arm = MaskBuffer::new(Array2::from_shape_fn((size, size), |(y, x)| {
        y as f64 >= 0.8 * f && (x as f64 - f / 2.0).abs() <= 0.12 * f
    }));

    let record = Record {
        id: id.to_string(),
        image: Some(format!("images/{id}_syn.png")),
        syn: Some(format!("images/{id}_syn.png")),
        real: Some(format!("images/{id}_real.png")),
        masks: MaskPaths {
            object: Some(format!("masks/{id}_object.png")),
            arm: Some(format!("masks/{id}_arm.png")),
            hand: Some(format!("masks/{id}_hand.png")),
        },
        pose: Some(format!("targets/{id}.json")),
        camera: Some(camera),
        split: Some("test".into()),
        mode: None,
        seed: None,
    };
    Ok(ToyFrame {
        record,
        pose: PoseFile {
            joints: array_to_points(&posed.joints),
            vertices: Some(array_to_points(v)),
        },
        syn: ImageBuffer::new(syn)?,
        real: ImageBuffer::new(real)?,
        object,
        arm,
        hand,
    })
}

pub fn toy_data(args: &ToyDataArgs, out: &Path, seed: u64) -> anyhow::Result<Run> {
    let model = HandModel::load(&args.model).with_context(|| format!("loading {}", args.model.display()))?;
    if args.image_size < 16 {
        return Err(anyhow!("image size {} is too small", args.image_size));
    }
    let ids: Vec<String> = (0..args.count).map(|i| format!("frame{i:04}")).collect();
    let frames: Vec<ToyFrame> = ids
        .par_iter()
        .map(|id| toy_frame(&model, id, derive_seed(seed, id), args.image_size))
        .collect::<anyhow::Result<_>>()?;

    let mut run = Run {
        config: json!({ "count": args.count, "priorPoses": args.prior_poses, "imageSize": args.image_size }),
        inputs: vec![args.model.clone()],
        ..Default::default()
    };
    for fr in &frames {
        let r = &fr.record;
        let id = &r.id;
        write_json(&output(&mut run.outputs, out, r.pose.as_ref().expect("set")), &fr.pose)?;
        write_image(&output(&mut run.outputs, out, format!("images/{id}_syn.png")), &fr.syn)?;
        write_image(
            &output(&mut run.outputs, out, format!("images/{id}_real.png")),
            &fr.real,
        )?;
        write_mask(
            &output(&mut run.outputs, out, format!("masks/{id}_object.png")),
            &fr.object,
        )?;
        write_mask(&output(&mut run.outputs, out, format!("masks/{id}_arm.png")), &fr.arm)?;
        write_mask(&output(&mut run.outputs, out, format!("masks/{id}_hand.png")), &fr.hand)?;
    }
    let records: Vec<&Record> = frames.iter().map(|f| &f.record).collect();
    write_jsonl(&output(&mut run.outputs, out, "manifest.jsonl"), &records)?;
    let truth: Vec<PoseLine> = frames
        .iter()
        .map(|f| PoseLine {
            id: f.record.id.clone(),
            joints: f.pose.joints.clone(),
            vertices: f.pose.vertices.clone(),
        })
        .collect();
    write_jsonl(&output(&mut run.outputs, out, "ground_truth.jsonl"), &truth)?;

    let toy = ToyManifold::new()?;
    let poses = toy.sample(args.prior_poses, derive_seed(seed, "prior-poses"))?;
    let lines: Vec<PoseLine> = poses
        .iter()
        .enumerate()
        .map(|(i, p)| PoseLine {
            id: format!("pose{i:05}"),
            joints: array_to_points(p),
            vertices: None,
        })
        .collect();
    write_jsonl(&output(&mut run.outputs, out, "prior_poses.jsonl"), &lines)?;
    Ok(run)
}

#[derive(Serialize)]
#[serde(rename_all = "camelCase")]
struct FitOutput<'a> {
    id: &'a str,
    #[serde(flatten)]
    report: &'a FitReport,
}

pub fn fit(args: &FitArgs, out: &Path) -> anyhow::Result<Run> {
    let model = HandModel::load(&args.model).with_context(|| format!("loading {}", args.model.display()))?;
    let manifest = load_manifest(&args.manifest, &[Field::Pose])?;
    let cfg: FitConfig = match &args.config {
        Some(p) => read_json(p)?,
        None => FitConfig::default(),
    };
    cfg.validate()?;
    let mut run = Run {
        config: serde_json::to_value(cfg)?,
        inputs: vec![args.model.clone(), args.manifest.clone()],
        ..Default::default()
    };
    if let Some(p) = &args.config {
        run.inputs.push(p.clone());
    }

    let mut targets = Vec::new();
    let mut ids = Vec::new();
    for r in &manifest.records {
        let path = manifest.resolve(r.pose.as_deref().expect("required"));
        run.inputs.push(path.clone());
        let pose: PoseFile = read_json(&path)?;
        let vertices = pose
            .vertices
            .ok_or_else(|| anyhow!("record {:?}: target {} has no vertices", r.id, path.display()))?;
        targets.push(FitTarget {
            vertices: points_to_array(&vertices),
            joints: points_to_array(&pose.joints),
        });
        ids.push(r.id.clone());
    }

    let results = fit_batch(&model, &targets, &cfg);
    let mut predictions = Vec::new();
    for (id, result) in ids.iter().zip(results) {
        match result.and_then(|rep| lbs_forward(&model, &rep.state).map(|posed| (rep, posed))) {
            Ok((report, posed)) => {
                let path = output(&mut run.outputs, out, format!("fits/{id}.json"));
                crate::io::create_parent(&path)?;
                std::fs::write(&path, serde_json::to_string(&FitOutput { id, report: &report })?)?;
                predictions.push(PoseLine {
                    id: id.clone(),
                    joints: array_to_points(&posed.joints),
                    vertices: Some(array_to_points(&posed.vertices)),
                });
            }
            Err(e) => run.failures.push(Failure {
                id: id.clone(),
                error: e.to_string(),
            }),
        }
    }
    write_jsonl(&output(&mut run.outputs, out, "predictions.jsonl"), &predictions)?;
    Ok(run)
}
