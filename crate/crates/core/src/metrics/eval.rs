//! Joint and vertex errors in centimeters, overall and per occlusion level.

use ndarray::Array2;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::procrustes::{procrustes_align, SimilarityTransform};
use crate::error::{shape_err, Error, Result};
use crate::handmodel::adapt_joints;

const CM_PER_M: f64 = 100.0;
pub const LEVELS: usize = 7;

fn check_pair(what: &'static str, pred: &Array2<f64>, gt: &Array2<f64>) -> Result<()> {
    if pred.dim() != gt.dim() || pred.ncols() != 3 {
        return Err(shape_err(
            what,
            format!("{}x3 (ground truth)", gt.nrows()),
            format!("{}x{}", pred.nrows(), pred.ncols()),
        ));
    }
    if pred.nrows() == 0 {
        return Err(Error::InvalidInput(format!("{what}: no points")));
    }
    Ok(())
}

fn mean_distance(a: &Array2<f64>, b: &Array2<f64>) -> f64 {
    let total: f64 = a
        .rows()
        .into_iter()
        .zip(b.rows())
        .map(|(x, y)| {
            let d = [x[0] - y[0], x[1] - y[1], x[2] - y[2]];
            (d[0] * d[0] + d[1] * d[1] + d[2] * d[2]).sqrt()
        })
        .sum();
    total / a.nrows() as f64
}

/// Mean joint error without alignment, cm.
pub fn mpjpe(pred: &Array2<f64>, gt: &Array2<f64>) -> Result<f64> {
    check_pair("mpjpe", pred, gt)?;
    Ok(CM_PER_M * mean_distance(pred, gt))
}

/// Mean vertex error without alignment, cm.
pub fn mpvpe(pred: &Array2<f64>, gt: &Array2<f64>) -> Result<f64> {
    check_pair("mpvpe", pred, gt)?;
    Ok(CM_PER_M * mean_distance(pred, gt))
}

/// Mean joint error after aligning `pred` onto `gt`, cm.
pub fn pa_mpjpe(pred: &Array2<f64>, gt: &Array2<f64>) -> Result<f64> {
    check_pair("pa_mpjpe", pred, gt)?;
    let t = procrustes_align(pred, gt)?;
    Ok(CM_PER_M * mean_distance(&t.apply(pred), gt))
}

/// Mean vertex error after applying a joint-derived alignment, cm.
pub fn pa_mpvpe(
    pred_vertices: &Array2<f64>,
    gt_vertices: &Array2<f64>,
    joint_alignment: &SimilarityTransform,
) -> Result<f64> {
    check_pair("pa_mpvpe", pred_vertices, gt_vertices)?;
    Ok(CM_PER_M * mean_distance(&joint_alignment.apply(pred_vertices), gt_vertices))
}

/// One predicted or ground-truth sample.
#[derive(Debug, Clone, PartialEq)]
pub struct PoseRecord {
    pub id: String,
    /// `J×3`, meters.
    pub joints: Array2<f64>,
    pub vertices: Option<Array2<f64>>,
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct MetricSet {
    pub pa_mpjpe: f64,
    pub mpjpe: f64,
    /// Present when every sample in the group has vertices.
    pub pa_mpvpe: Option<f64>,
    pub mpvpe: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct LevelBreakdown {
    pub level: u8,
    pub count: usize,
    /// `None` when no sample has this level.
    pub metrics: Option<MetricSet>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct EvalReport {
    pub sample_count: usize,
    pub overall: MetricSet,
    pub per_level: Vec<LevelBreakdown>,
    /// Whether predictions were mapped onto the ground-truth skeleton.
    pub topology_adapted: bool,
}

#[derive(Debug, Clone, Copy)]
struct SampleErrors {
    pa_mpjpe: f64,
    mpjpe: f64,
    vertex: Option<(f64, f64)>,
}

fn aggregate(samples: &[&SampleErrors]) -> MetricSet {
    let n = samples.len() as f64;
    let all_vertices = samples.iter().all(|s| s.vertex.is_some());
    MetricSet {
        pa_mpjpe: samples.iter().map(|s| s.pa_mpjpe).sum::<f64>() / n,
        mpjpe: samples.iter().map(|s| s.mpjpe).sum::<f64>() / n,
        pa_mpvpe: all_vertices.then(|| samples.iter().map(|s| s.vertex.expect("checked").0).sum::<f64>() / n),
        mpvpe: all_vertices.then(|| samples.iter().map(|s| s.vertex.expect("checked").1).sum::<f64>() / n),
    }
}

fn sample_errors(pred: &PoseRecord, gt: &PoseRecord, map: Option<&[usize]>) -> Result<(SampleErrors, bool)> {
    let mut joints = pred.joints.clone();
    let mut adapted = false;
    if joints.nrows() != gt.joints.nrows() {
        match map {
            Some(m) if m.len() == gt.joints.nrows() => {
                joints = adapt_joints(&joints, m)?;
                adapted = true;
            }
            Some(m) => {
                return Err(Error::TopologyRequired(format!(
                    "sample {}: topology map has {} entries but ground truth has {} joints",
                    pred.id,
                    m.len(),
                    gt.joints.nrows()
                )))
            }
            None => {
                return Err(Error::TopologyRequired(format!(
                    "sample {}: prediction has {} joints, ground truth has {}; label adaptation is required \
                     before evaluation (supply a topology map)",
                    pred.id,
                    joints.nrows(),
                    gt.joints.nrows()
                )))
            }
        }
    }
    let align = procrustes_align(&joints, &gt.joints)?;
    let pa = CM_PER_M * mean_distance(&align.apply(&joints), &gt.joints);
    let raw = mpjpe(&joints, &gt.joints)?;
    let vertex = match (&pred.vertices, &gt.vertices) {
        (Some(pv), Some(gv)) => Some((pa_mpvpe(pv, gv, &align)?, mpvpe(pv, gv)?)),
        _ => None,
    };
    Ok((
        SampleErrors {
            pa_mpjpe: pa,
            mpjpe: raw,
            vertex,
        },
        adapted,
    ))
}

/// Aggregates all four metrics overall and per occlusion level. Inputs are
/// matched by position and their ids must agree.
pub fn evaluate(
    predictions: &[PoseRecord],
    ground_truth: &[PoseRecord],
    levels: &[(String, u8)],
    topology_map: Option<&[usize]>,
) -> Result<EvalReport> {
    if predictions.len() != ground_truth.len() {
        return Err(Error::InvalidInput(format!(
            "{} predictions for {} ground-truth samples",
            predictions.len(),
            ground_truth.len()
        )));
    }
    if levels.len() != ground_truth.len() {
        return Err(Error::InvalidInput(format!(
            "{} occlusion labels for {} samples",
            levels.len(),
            ground_truth.len()
        )));
    }
    if predictions.is_empty() {
        return Err(Error::InvalidInput("nothing to evaluate".into()));
    }
    for (i, ((p, g), (id, level))) in predictions.iter().zip(ground_truth).zip(levels).enumerate() {
        if p.id != g.id || g.id != *id {
            return Err(Error::InvalidInput(format!(
                "sample {i}: ids disagree (prediction {}, ground truth {}, label {id})",
                p.id, g.id
            )));
        }
        if usize::from(*level) >= LEVELS {
            return Err(Error::InvalidInput(format!(
                "sample {}: occlusion level {level} above 6",
                p.id
            )));
        }
    }

    let per_sample: Vec<(SampleErrors, bool)> = predictions
        .par_iter()
        .zip(ground_truth)
        .map(|(p, g)| sample_errors(p, g, topology_map))
        .collect::<Result<_>>()?;

    let all: Vec<&SampleErrors> = per_sample.iter().map(|(e, _)| e).collect();
    let per_level = (0..LEVELS as u8)
        .map(|level| {
            let group: Vec<&SampleErrors> = per_sample
                .iter()
                .zip(levels)
                .filter(|(_, (_, l))| *l == level)
                .map(|((e, _), _)| e)
                .collect();
            LevelBreakdown {
                level,
                count: group.len(),
                metrics: (!group.is_empty()).then(|| aggregate(&group)),
            }
        })
        .collect();
    Ok(EvalReport {
        sample_count: predictions.len(),
        overall: aggregate(&all),
        per_level,
        topology_adapted: per_sample.iter().any(|(_, a)| *a),
    })
}

impl EvalReport {
    /// Delimited table: one overall row, then one row per level.
    pub fn to_csv(&self) -> String {
        fn opt(v: Option<f64>) -> String {
            v.map(|x| x.to_string()).unwrap_or_default()
        }
        let mut out = String::from("group,count,pa_mpjpe_cm,pa_mpvpe_cm,mpjpe_cm,mpvpe_cm\n");
        let m = &self.overall;
        out.push_str(&format!(
            "all,{},{},{},{},{}\n",
            self.sample_count,
            m.pa_mpjpe,
            opt(m.pa_mpvpe),
            m.mpjpe,
            opt(m.mpvpe)
        ));
        for l in &self.per_level {
            match &l.metrics {
                Some(m) => out.push_str(&format!(
                    "level{},{},{},{},{},{}\n",
                    l.level,
                    l.count,
                    m.pa_mpjpe,
                    opt(m.pa_mpvpe),
                    m.mpjpe,
                    opt(m.mpvpe)
                )),
                None => out.push_str(&format!("level{},0,,,,\n", l.level)),
            }
        }
        out
    }
}
