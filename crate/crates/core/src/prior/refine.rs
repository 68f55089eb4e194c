//! Single-pass refinement of occluded joints through the prior.

use ndarray::{Array1, Array2, Axis};
use rayon::prelude::*;

use super::model::PriorModel;
use crate::error::{shape_err, Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct Refined {
    pub pose: Array2<f64>,
    /// Set when no joint was visible; the pose is then the decoding of the
    /// all-zero input.
    pub all_hidden: bool,
}

fn check(model: &PriorModel, pose: &Array2<f64>, visible: &[bool]) -> Result<()> {
    if pose.dim() != (model.num_joints, 3) {
        return Err(shape_err(
            "refine pose",
            format!("{}x3", model.num_joints),
            format!("{:?}", pose.dim()),
        ));
    }
    if visible.len() != model.num_joints {
        return Err(shape_err("refine visibility", model.num_joints, visible.len()));
    }
    if pose.iter().any(|v| !v.is_finite()) {
        return Err(Error::InvalidInput("predicted pose is not finite".into()));
    }
    Ok(())
}

/// Root position used to place filled-in joints: the predicted root when it
/// is visible, the origin otherwise.
fn anchor(pose: &Array2<f64>, visible: &[bool], root: usize) -> Array1<f64> {
    if visible[root] {
        pose.row(root).to_owned()
    } else {
        Array1::zeros(3)
    }
}

/// Encodes `pose` with hidden joints zeroed, decodes the posterior mean and
/// replaces only the hidden joints. Visible joints are copied bit for bit.
pub fn refine(model: &PriorModel, pose: &Array2<f64>, visible: &[bool]) -> Result<Refined> {
    check(model, pose, visible)?;
    let norm = model.normalization;
    let origin = anchor(pose, visible, norm.root_joint);
    let mut input = Array2::zeros((1, model.input_dim()));
    for (j, &vis) in visible.iter().enumerate() {
        if vis {
            for a in 0..3 {
                input[[0, 3 * j + a]] = (pose[[j, a]] - origin[a]) / norm.scale;
            }
        }
    }
    let (mean, _) = model.encode(&input);
    let decoded = norm.decode(&model.decode(&mean));
    let mut out = pose.clone();
    for (j, &vis) in visible.iter().enumerate() {
        if !vis {
            for a in 0..3 {
                out[[j, a]] = decoded[[j, a]] + origin[a];
            }
        }
    }
    Ok(Refined {
        pose: out,
        all_hidden: !visible.iter().any(|&v| v),
    })
}

/// [`refine`] over many poses in parallel; output order follows input order.
pub fn refine_batch(model: &PriorModel, poses: &[Array2<f64>], visibility: &[Vec<bool>]) -> Result<Vec<Refined>> {
    if poses.len() != visibility.len() {
        return Err(shape_err("refine_batch", poses.len(), visibility.len()));
    }
    poses
        .par_iter()
        .zip(visibility)
        .map(|(p, v)| refine(model, p, v))
        .collect()
}

/// Root-centered mean pose.
pub fn mean_pose(poses: &[Array2<f64>], root_joint: usize) -> Result<Array2<f64>> {
    let first = poses
        .first()
        .ok_or_else(|| Error::InvalidInput("no poses to average".into()))?;
    let mut sum = Array2::zeros(first.dim());
    for p in poses {
        if p.dim() != first.dim() {
            return Err(shape_err(
                "mean_pose",
                format!("{:?}", first.dim()),
                format!("{:?}", p.dim()),
            ));
        }
        sum += &super::model::root_center(p, root_joint);
    }
    Ok(sum / poses.len() as f64)
}

/// Baseline: hidden joints taken from a root-centered `fill` pose, placed by
/// the same anchor rule as [`refine`].
pub fn fill_hidden(pose: &Array2<f64>, visible: &[bool], fill: &Array2<f64>, root_joint: usize) -> Result<Array2<f64>> {
    if pose.dim() != fill.dim() || visible.len() != pose.nrows() {
        return Err(shape_err(
            "fill_hidden",
            format!("{:?}", pose.dim()),
            format!("{:?}", fill.dim()),
        ));
    }
    let origin = anchor(pose, visible, root_joint).insert_axis(Axis(0));
    let mut out = pose.clone();
    for (j, &vis) in visible.iter().enumerate() {
        if !vis {
            let v = &fill.row(j) + &origin.row(0);
            out.row_mut(j).assign(&v);
        }
    }
    Ok(out)
}
