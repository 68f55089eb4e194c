use std::collections::HashMap;
use std::path::Path;

use anyhow::{anyhow, bail, Context};
use handsynth_core::handmodel::{adapt_joints, HandModel};
use handsynth_core::metrics::evaluate as evaluate_poses;
use handsynth_core::prior::{refine as refine_pose, train_prior as fit_prior, PriorModel, PriorTrainConfig, Refined};
use ndarray::Array2;
use rayon::prelude::*;
use serde_json::json;

use super::labels::LabelLine;
use super::output;
use crate::args::{EvaluateArgs, RefineArgs, TrainPriorArgs};
use crate::io::{array_to_points, points_to_array, read_json, read_jsonl, write_json, write_jsonl, PoseLine};
use crate::summary::{Failure, Run};

pub fn train_prior(args: &TrainPriorArgs, out: &Path, seed: u64) -> anyhow::Result<Run> {
    let mut cfg: PriorTrainConfig = match &args.config {
        Some(p) => read_json(p)?,
        None => PriorTrainConfig::default(),
    };
    cfg.seed = seed;
    if let Some(e) = args.epochs {
        cfg.epochs = e;
    }
    if let Some(b) = args.batch_size {
        cfg.batch_size = b;
    }
    let lines: Vec<PoseLine> = read_jsonl(&args.poses)?;
    let poses: Vec<_> = lines.iter().map(|l| points_to_array(&l.joints)).collect();
    let (model, report) = fit_prior(&poses, &cfg)?;

    let mut run = Run {
        config: serde_json::to_value(cfg)?,
        inputs: vec![args.poses.clone()],
        ..Default::default()
    };
    run.inputs.extend(args.config.iter().cloned());
    let path = output(&mut run.outputs, out, "prior.json");
    model.save(&path)?;
    let path = output(&mut run.outputs, out, "prior_report.json");
    std::fs::write(&path, serde_json::to_string(&report)? + "\n")
        .with_context(|| format!("writing {}", path.display()))?;
    Ok(run)
}

/// The topology map from `--model` or `--topology-map`, recording the file
/// as an input.
fn load_topology_map(model: Option<&Path>, map: Option<&Path>, run: &mut Run) -> anyhow::Result<Option<Vec<usize>>> {
    if let Some(m) = model {
        run.inputs.push(m.to_path_buf());
        let model = HandModel::load(m).with_context(|| format!("loading {}", m.display()))?;
        let map = model
            .topology_map()
            .ok_or_else(|| anyhow!("model {} has no topology map", m.display()))?;
        Ok(Some(map.to_vec()))
    } else if let Some(p) = map {
        run.inputs.push(p.to_path_buf());
        Ok(Some(read_json(p)?))
    } else {
        Ok(None)
    }
}

/// Refines `pose`, first reducing it to the prior's skeleton through `map`
/// when it is larger. The refined joints go back to their source rows; joints
/// outside the map are passed through.
fn refine_adapted(
    prior: &PriorModel,
    pose: &Array2<f64>,
    visible: &[bool],
    map: Option<&[usize]>,
) -> anyhow::Result<Refined> {
    if pose.nrows() == prior.num_joints {
        return Ok(refine_pose(prior, pose, visible)?);
    }
    let Some(map) = map.filter(|m| m.len() == prior.num_joints) else {
        bail!(
            "prediction has {} joints, prior has {}; pass --model or --topology-map to adapt",
            pose.nrows(),
            prior.num_joints
        );
    };
    if visible.len() != pose.nrows() {
        bail!(
            "visibility has {} entries, prediction has {} joints",
            visible.len(),
            pose.nrows()
        );
    }
    let reduced = adapt_joints(pose, map)?;
    let reduced_visible: Vec<bool> = map.iter().map(|&j| visible[j]).collect();
    let r = refine_pose(prior, &reduced, &reduced_visible)?;
    let mut full = pose.clone();
    for (row, &j) in map.iter().enumerate() {
        full.row_mut(j).assign(&r.pose.row(row));
    }
    Ok(Refined { pose: full, ..r })
}

fn labels_by_id(lines: Vec<LabelLine>) -> anyhow::Result<HashMap<String, LabelLine>> {
    let mut map = HashMap::with_capacity(lines.len());
    for l in lines {
        if let Some(prev) = map.insert(l.id.clone(), l) {
            bail!("duplicate label id {:?}", prev.id);
        }
    }
    Ok(map)
}

pub fn refine(args: &RefineArgs, out: &Path) -> anyhow::Result<Run> {
    let prior = PriorModel::load(&args.prior).with_context(|| format!("loading {}", args.prior.display()))?;
    let predictions: Vec<PoseLine> = read_jsonl(&args.predictions)?;
    let labels = labels_by_id(read_jsonl(&args.labels)?)?;
    let mut run = Run {
        config: json!({}),
        inputs: vec![args.prior.clone(), args.predictions.clone(), args.labels.clone()],
        ..Default::default()
    };

    let map = load_topology_map(args.model.as_deref(), args.topology_map.as_deref(), &mut run)?;

    let mut kept = Vec::new();
    for p in &predictions {
        match labels.get(&p.id) {
            Some(l) if l.label.per_joint_visible.is_empty() => run.failures.push(Failure {
                id: p.id.clone(),
                error: "label has no joint visibility".into(),
            }),
            Some(l) => kept.push((p, l.label.per_joint_visible.clone())),
            None => run.failures.push(Failure {
                id: p.id.clone(),
                error: "no occlusion label for this id".into(),
            }),
        }
    }
    let results: Vec<_> = kept
        .par_iter()
        .map(|(p, visible)| refine_adapted(&prior, &points_to_array(&p.joints), visible, map.as_deref()))
        .collect();

    let mut lines = Vec::new();
    for ((p, _), result) in kept.iter().zip(results) {
        match result {
            Ok(r) => {
                if r.all_hidden {
                    run.warnings
                        .push(format!("{}: every joint is hidden, refined from the origin", p.id));
                }
                lines.push(PoseLine {
                    id: p.id.clone(),
                    joints: array_to_points(&r.pose),
                    vertices: None,
                });
            }
            Err(e) => run.failures.push(Failure {
                id: p.id.clone(),
                error: e.to_string(),
            }),
        }
    }
    write_jsonl(&output(&mut run.outputs, out, "refined.jsonl"), &lines)?;
    Ok(run)
}

pub fn evaluate(args: &EvaluateArgs, out: &Path) -> anyhow::Result<Run> {
    let predictions: Vec<PoseLine> = read_jsonl(&args.predictions)?;
    let truth: Vec<PoseLine> = read_jsonl(&args.ground_truth)?;
    let labels = labels_by_id(read_jsonl(&args.labels)?)?;
    let mut run = Run {
        config: json!({}),
        inputs: vec![args.predictions.clone(), args.ground_truth.clone(), args.labels.clone()],
        ..Default::default()
    };

    let map = load_topology_map(args.model.as_deref(), args.topology_map.as_deref(), &mut run)?;

    let levels = truth
        .iter()
        .map(|t| {
            labels
                .get(&t.id)
                .map(|l| (t.id.clone(), l.label.level))
                .ok_or_else(|| anyhow!("no occlusion label for ground-truth id {:?}", t.id))
        })
        .collect::<anyhow::Result<Vec<_>>>()?;
    let preds = predictions
        .iter()
        .map(PoseLine::to_record)
        .collect::<anyhow::Result<Vec<_>>>()?;
    let gt = truth
        .iter()
        .map(PoseLine::to_record)
        .collect::<anyhow::Result<Vec<_>>>()?;
    let report = evaluate_poses(&preds, &gt, &levels, map.as_deref())?;

    write_json(&output(&mut run.outputs, out, "eval.json"), &report)?;
    let csv = output(&mut run.outputs, out, "eval.csv");
    std::fs::write(&csv, report.to_csv()).with_context(|| format!("writing {}", csv.display()))?;
    Ok(run)
}
