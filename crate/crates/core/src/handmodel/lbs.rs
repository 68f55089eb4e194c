//! Linear blend skinning.
//!
//! Shape (and optional pose) blendshapes are added to the rest mesh, rest
//! joints are regressed from the shaped mesh, per-joint rotations are chained
//! down the kinematic tree, vertices are skinned, and finally the global
//! rotation and translation are applied. Joints are regressed from the posed
//! vertices.

use std::sync::Arc;

use ndarray::{Array2, Axis};
use serde::{Deserialize, Serialize};

use super::HandModel;
use crate::diffmath::rotation::{self, Mat3};
use crate::diffmath::{row, SparseMatrix, Tape, Var};
use crate::error::{shape_err, Error, Result};

/// Parameters of a posed hand.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PoseState {
    /// Axis-angle per non-root joint, stacked (`3·(J−1)`).
    pub pose: Vec<f64>,
    pub shape: Vec<f64>,
    /// Global axis-angle rotation.
    pub rotation: [f64; 3],
    /// Global translation, meters.
    pub translation: [f64; 3],
}

impl PoseState {
    pub fn zeros(model: &HandModel) -> Self {
        Self {
            pose: vec![0.0; model.pose_dim()],
            shape: vec![0.0; model.shape_dim()],
            rotation: [0.0; 3],
            translation: [0.0; 3],
        }
    }

    pub fn validate(&self, model: &HandModel) -> Result<()> {
        if self.pose.len() != model.pose_dim() {
            return Err(shape_err("pose", model.pose_dim(), self.pose.len()));
        }
        if self.shape.len() != model.shape_dim() {
            return Err(shape_err("shape", model.shape_dim(), self.shape.len()));
        }
        let finite = self
            .pose
            .iter()
            .chain(&self.shape)
            .chain(&self.rotation)
            .chain(&self.translation)
            .all(|x| x.is_finite());
        if !finite {
            return Err(Error::InvalidInput("pose state contains non-finite values".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone)]
pub struct LbsOutput {
    /// `V×3`, meters.
    pub vertices: Array2<f64>,
    /// `J×3`, regressed from `vertices`.
    pub joints: Array2<f64>,
}

fn unflatten(flat: ndarray::ArrayView1<f64>, v: usize) -> Array2<f64> {
    flat.to_owned().into_shape_with_order((v, 3)).expect("flattened V×3")
}

/// Per-joint skinning transforms (`J×12`: row-major rotation then translation)
/// mapping rest-pose points to posed points.
fn skinning_transforms(model: &HandModel, pose: &[f64], rest_joints: &Array2<f64>) -> Array2<f64> {
    let j = model.num_joints();
    let mut world_rot: Vec<Mat3> = Vec::with_capacity(j);
    let mut world_trans: Vec<[f64; 3]> = Vec::with_capacity(j);
    let mut out = Array2::zeros((j, 12));
    for k in 0..j {
        let jk = [rest_joints[[k, 0]], rest_joints[[k, 1]], rest_joints[[k, 2]]];
        let (rg, tg) = match model.parents()[k] {
            None => (rotation::IDENTITY, jk),
            Some(p) => {
                let local = rotation::rodrigues([pose[3 * (k - 1)], pose[3 * (k - 1) + 1], pose[3 * (k - 1) + 2]]);
                let offset = [
                    jk[0] - rest_joints[[p, 0]],
                    jk[1] - rest_joints[[p, 1]],
                    jk[2] - rest_joints[[p, 2]],
                ];
                let moved = rotation::apply3(&world_rot[p], offset);
                let tp = world_trans[p];
                (
                    rotation::matmul3(&world_rot[p], &local),
                    [tp[0] + moved[0], tp[1] + moved[1], tp[2] + moved[2]],
                )
            }
        };
        let rj = rotation::apply3(&rg, jk);
        for a in 0..3 {
            for b in 0..3 {
                out[[k, 3 * a + b]] = rg[a][b];
            }
            out[[k, 9 + a]] = tg[a] - rj[a];
        }
        world_rot.push(rg);
        world_trans.push(tg);
    }
    out
}

/// Posed vertices and regressed joints in the world frame.
pub fn lbs_forward(model: &HandModel, state: &PoseState) -> Result<LbsOutput> {
    state.validate(model)?;
    let v = model.num_vertices();
    let shape = Array2::from_shape_vec((1, state.shape.len()), state.shape.clone()).expect("row");
    let mut shaped = model.rest_vertices().clone();
    if model.shape_dim() > 0 {
        shaped += &unflatten(shape.dot(model.shape_basis()).row(0), v);
    }
    let rest_joints = model.joint_regressor().dot(&shaped);
    let mut posed_rest = shaped;
    if let Some(basis) = model.pose_basis() {
        let pose = row(&state.pose);
        posed_rest += &unflatten(pose.dot(basis).row(0), v);
    }

    let transforms = model
        .skin_weights()
        .dot(&skinning_transforms(model, &state.pose, &rest_joints));
    let global = rotation::rodrigues(state.rotation);
    let mut vertices = Array2::zeros((v, 3));
    for ((t, x), mut out) in transforms
        .axis_iter(Axis(0))
        .zip(posed_rest.axis_iter(Axis(0)))
        .zip(vertices.axis_iter_mut(Axis(0)))
    {
        let mut local = [0.0; 3];
        for a in 0..3 {
            local[a] = t[3 * a] * x[0] + t[3 * a + 1] * x[1] + t[3 * a + 2] * x[2] + t[9 + a];
        }
        let world = rotation::apply3(&global, local);
        for a in 0..3 {
            out[a] = world[a] + state.translation[a];
        }
    }
    let joints = model.joint_regressor().dot(&vertices);
    Ok(LbsOutput { vertices, joints })
}

/// Tape handles for the four parameter blocks of a [`PoseState`].
#[derive(Debug, Clone, Copy)]
pub struct PoseVars {
    pub pose: Var,
    pub shape: Var,
    pub rotation: Var,
    pub translation: Var,
}

/// Model matrices placed on a tape once and reused across forward passes
/// built on the same tape. The regressor and skinning weights are mostly
/// zero and enter as sparse operands.
#[derive(Debug, Clone)]
pub struct ModelConstants {
    rest_flat: Var,
    shape_basis: Var,
    pose_basis: Option<Var>,
    regressor: Arc<SparseMatrix>,
    weights: Arc<SparseMatrix>,
}

impl ModelConstants {
    pub fn new(tape: &mut Tape, model: &HandModel) -> Self {
        let v = model.num_vertices();
        let rest_flat = tape.constant(
            model
                .rest_vertices()
                .clone()
                .into_shape_with_order((1, 3 * v))
                .expect("rest"),
        );
        Self {
            rest_flat,
            shape_basis: tape.constant(model.shape_basis().clone()),
            pose_basis: model.pose_basis().map(|b| tape.constant(b.clone())),
            regressor: Arc::new(SparseMatrix::from_dense(model.joint_regressor())),
            weights: Arc::new(SparseMatrix::from_dense(model.skin_weights())),
        }
    }
}

/// Differentiable [`lbs_forward`]; returns `(vertices V×3, joints J×3)`.
pub fn lbs_on_tape(tape: &mut Tape, model: &HandModel, consts: &ModelConstants, vars: PoseVars) -> (Var, Var) {
    let v = model.num_vertices();
    let j = model.num_joints();

    let mut flat = consts.rest_flat;
    if model.shape_dim() > 0 {
        let delta = tape.matmul(vars.shape, consts.shape_basis);
        flat = tape.add(flat, delta);
    }
    let shaped = tape.reshape(flat, v, 3);
    let rest_joints = tape.sparse_matmul(&consts.regressor, shaped);
    if let Some(basis) = consts.pose_basis {
        let delta = tape.matmul(vars.pose, basis);
        flat = tape.add(flat, delta);
    }
    let posed_rest = tape.reshape(flat, v, 3);

    let joint_rows: Vec<Var> = (0..j).map(|k| tape.slice_rows(rest_joints, k, k + 1)).collect();

    let mut world_rot: Vec<Option<Var>> = Vec::with_capacity(j);
    let mut world_trans: Vec<Var> = Vec::with_capacity(j);
    let mut rows = Vec::with_capacity(j);
    for k in 0..j {
        let (rg, tg) = match model.parents()[k] {
            None => (None, joint_rows[k]),
            Some(p) => {
                let axis = tape.slice_cols(vars.pose, 3 * (k - 1), 3 * k);
                let local = tape.rodrigues(axis);
                let offset = tape.sub(joint_rows[k], joint_rows[p]);
                let (rg, moved) = match world_rot[p] {
                    None => (local, offset),
                    Some(rp) => {
                        let rg = tape.matmul(rp, local);
                        let rpt = tape.transpose(rp);
                        (rg, tape.matmul(offset, rpt))
                    }
                };
                (Some(rg), tape.add(world_trans[p], moved))
            }
        };
        let row12 = match rg {
            None => {
                let ident = tape.constant(row(&[1.0, 0.0, 0.0, 0.0, 1.0, 0.0, 0.0, 0.0, 1.0]));
                let zero = tape.constant(Array2::zeros((1, 3)));
                tape.hstack(&[ident, zero])
            }
            Some(rg) => {
                let rgt = tape.transpose(rg);
                let rotated_joint = tape.matmul(joint_rows[k], rgt);
                let trans = tape.sub(tg, rotated_joint);
                let flat_rot = tape.reshape(rg, 1, 9);
                tape.hstack(&[flat_rot, trans])
            }
        };
        rows.push(row12);
        world_rot.push(rg);
        world_trans.push(tg);
    }
    let per_joint = tape.vstack(&rows);
    let per_vertex = tape.sparse_matmul(&consts.weights, per_joint);
    let skinned = tape.skin_apply(per_vertex, posed_rest);

    let global = tape.rodrigues(vars.rotation);
    let global_t = tape.transpose(global);
    let rotated = tape.matmul(skinned, global_t);
    let vertices = tape.add_row(rotated, vars.translation);
    let joints = tape.sparse_matmul(&consts.regressor, vertices);
    (vertices, joints)
}

/// Puts a state on the tape as four parameter rows.
pub fn pose_params(tape: &mut Tape, state: &PoseState) -> PoseVars {
    PoseVars {
        pose: tape.param_row(&state.pose),
        shape: tape.param_row(&state.shape),
        rotation: tape.param_row(&state.rotation),
        translation: tape.param_row(&state.translation),
    }
}
