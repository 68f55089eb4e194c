use std::path::Path;

use anyhow::{anyhow, Context};
use handsynth_core::handmodel::HandModel;
use handsynth_core::occlusion::{label_frame, Mesh, OcclusionConfig, OcclusionLabel};
use ndarray::Array2;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::output;
use crate::args::LabelOcclusionArgs;
use crate::io::{points_to_array, read_json, read_mask, write_jsonl, PoseFile};
use crate::manifest::{load_manifest, CameraSpec, Field};
use crate::summary::{Failure, Run};

/// One line of `labels.jsonl`.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct LabelLine {
    pub id: String,
    #[serde(flatten)]
    pub label: OcclusionLabel,
}

fn to_camera(camera: &CameraSpec, points: &Array2<f64>) -> Array2<f64> {
    let mut out = Array2::zeros(points.dim());
    for (i, p) in points.rows().into_iter().enumerate() {
        let c = camera.to_camera_frame([p[0], p[1], p[2]]);
        for a in 0..3 {
            out[[i, a]] = c[a];
        }
    }
    out
}

pub fn label_occlusion(args: &LabelOcclusionArgs, out: &Path) -> anyhow::Result<Run> {
    let model = HandModel::load(&args.model).with_context(|| format!("loading {}", args.model.display()))?;
    let manifest = load_manifest(&args.manifest, &[Field::Pose, Field::Camera, Field::ObjectMask])?;
    let cfg = OcclusionConfig {
        threshold: args.threshold,
        auto_scale: args.auto_scale,
        depth_tolerance: args.depth_tolerance,
    };
    let mut run = Run {
        config: serde_json::to_value(cfg)?,
        inputs: vec![args.model.clone(), args.manifest.clone()],
        ..Default::default()
    };
    for r in &manifest.records {
        run.inputs.push(manifest.resolve(r.pose.as_deref().expect("required")));
        run.inputs
            .push(manifest.resolve(r.masks.object.as_deref().expect("required")));
    }

    let results: Vec<anyhow::Result<OcclusionLabel>> = manifest
        .records
        .par_iter()
        .map(|r| {
            let pose: PoseFile = read_json(&manifest.resolve(r.pose.as_deref().expect("required")))?;
            let vertices = pose.vertices.ok_or_else(|| anyhow!("pose file has no vertices"))?;
            if vertices.len() != model.num_vertices() {
                return Err(anyhow!(
                    "pose has {} vertices, model has {}",
                    vertices.len(),
                    model.num_vertices()
                ));
            }
            let camera = r.camera.as_ref().expect("required");
            let verts = to_camera(camera, &points_to_array(&vertices));
            let joints = to_camera(camera, &points_to_array(&pose.joints));
            let mask = read_mask(&manifest.resolve(r.masks.object.as_deref().expect("required")))?;
            let mesh = Mesh {
                vertices: &verts,
                faces: model.faces(),
                vertex_parts: model.part_labels(),
                face_parts: model.face_parts(),
            };
            Ok(label_frame(&mesh, &joints, &camera.intrinsics(), &mask, &cfg)?)
        })
        .collect();

    let mut lines = Vec::new();
    for (r, result) in manifest.records.iter().zip(results) {
        match result {
            Ok(label) => {
                if !label.joints_outside_image.is_empty() {
                    run.warnings.push(format!(
                        "{}: joints {:?} project outside the image",
                        r.id, label.joints_outside_image
                    ));
                }
                lines.push(LabelLine {
                    id: r.id.clone(),
                    label,
                });
            }
            Err(e) => run.failures.push(Failure {
                id: r.id.clone(),
                error: format!("{e:#}"),
            }),
        }
    }
    write_jsonl(&output(&mut run.outputs, out, "labels.jsonl"), &lines)?;
    Ok(run)
}
