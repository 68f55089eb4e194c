//! Two-stage fitting of a [`HandModel`] to a target mesh.
//!
//! The coarse stage moves only the global rotation and translation against a
//! joint loss plus a down-weighted vertex loss. The fine stage then frees pose
//! and shape as well, against the vertex loss plus squared-norm regularizers.
//! Both stages run a fixed number of Adam iterations; every learning rate is
//! divided by a constant factor every `decay_every` iterations and reset at
//! each epoch boundary.

use std::f64::consts::PI;

use ndarray::Array2;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::diffmath::rotation::{log_map, rodrigues};
use crate::diffmath::{row, AdamConfig, AdamState, Tape, Var};
use crate::error::{shape_err, Error, Result};
use crate::handmodel::{lbs_forward, lbs_on_tape, HandModel, ModelConstants, PoseState, PoseVars};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase", deny_unknown_fields)]
pub struct LrSchedule {
    pub decay_every: usize,
    pub decay_factor: f64,
}

impl LrSchedule {
    /// Learning rate at global iteration `iter` of a stage.
    pub fn lr_at(&self, initial: f64, iter: usize, iters_per_epoch: usize) -> f64 {
        let within = iter % iters_per_epoch;
        initial / self.decay_factor.powi((within / self.decay_every) as i32)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase", deny_unknown_fields)]
pub struct CoarseConfig {
    pub lr_rot: f64,
    pub lr_trans: f64,
    pub epochs: usize,
    pub iters_per_epoch: usize,
    pub lambda_vert: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase", deny_unknown_fields)]
pub struct FineConfig {
    pub lr_pose: f64,
    pub lr_shape: f64,
    pub lr_rot: f64,
    pub lr_trans: f64,
    pub epochs: usize,
    pub iters_per_epoch: usize,
    pub lambda_pose: f64,
    pub lambda_shape: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase", deny_unknown_fields)]
pub struct FitConfig {
    pub coarse: CoarseConfig,
    pub fine: FineConfig,
    /// Shared by both stages.
    pub schedule: LrSchedule,
}

impl Default for FitConfig {
    fn default() -> Self {
        Self {
            coarse: CoarseConfig {
                lr_rot: 1.0,
                lr_trans: 1.0,
                epochs: 2,
                iters_per_epoch: 3000,
                lambda_vert: 0.1,
            },
            fine: FineConfig {
                lr_pose: 1e-3,
                lr_shape: 1e-3,
                lr_rot: 1e-2,
                lr_trans: 1e-2,
                epochs: 4,
                iters_per_epoch: 3000,
                lambda_pose: 50.0,
                lambda_shape: 50.0,
            },
            schedule: LrSchedule {
                decay_every: 1000,
                decay_factor: 10.0,
            },
        }
    }
}

impl FitConfig {
    pub fn validate(&self) -> Result<()> {
        let c = &self.coarse;
        let f = &self.fine;
        let positive = [
            ("coarse.lrRot", c.lr_rot),
            ("coarse.lrTrans", c.lr_trans),
            ("coarse.lambdaVert", c.lambda_vert),
            ("fine.lrPose", f.lr_pose),
            ("fine.lrShape", f.lr_shape),
            ("fine.lrRot", f.lr_rot),
            ("fine.lrTrans", f.lr_trans),
            ("fine.lambdaPose", f.lambda_pose),
            ("fine.lambdaShape", f.lambda_shape),
            ("schedule.decayFactor", self.schedule.decay_factor),
        ];
        for (name, v) in positive {
            if !(v.is_finite() && v > 0.0) {
                return Err(Error::InvalidInput(format!("{name} must be positive, got {v}")));
            }
        }
        let counts = [
            ("coarse.epochs", c.epochs),
            ("coarse.itersPerEpoch", c.iters_per_epoch),
            ("fine.epochs", f.epochs),
            ("fine.itersPerEpoch", f.iters_per_epoch),
            ("schedule.decayEvery", self.schedule.decay_every),
        ];
        for (name, v) in counts {
            if v == 0 {
                return Err(Error::InvalidInput(format!("{name} must be positive")));
            }
        }
        for (name, iters) in [("coarse", c.iters_per_epoch), ("fine", f.iters_per_epoch)] {
            if iters % self.schedule.decay_every != 0 {
                return Err(Error::InvalidInput(format!(
                    "{name}.itersPerEpoch ({iters}) is not a multiple of schedule.decayEvery ({})",
                    self.schedule.decay_every
                )));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct StageReport {
    /// Loss before each update, one entry per iteration.
    pub loss: Vec<f64>,
    /// Names of the parameter groups, in the column order of `lr`.
    pub lr_groups: Vec<String>,
    /// Learning rates used for each update.
    pub lr: Vec<Vec<f64>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct FitReport {
    pub state: PoseState,
    pub coarse: Option<StageReport>,
    pub fine: Option<StageReport>,
    /// Root-mean-square vertex distance to the target, meters.
    pub vertex_rms: f64,
}

impl FitReport {
    /// Concatenated loss trace of the stages that ran.
    pub fn loss_trace(&self) -> Vec<f64> {
        self.coarse
            .iter()
            .chain(&self.fine)
            .flat_map(|s| s.loss.iter().copied())
            .collect()
    }
}

/// Which terms enter the objective.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Stage {
    /// `L_joint + λ_vert·L_vert` over rotation and translation.
    Coarse { lambda_vert: f64 },
    /// `L_vert + λ_pose·‖θ‖² + λ_shape·‖β‖²` over all parameters.
    Fine { lambda_pose: f64, lambda_shape: f64 },
}

impl Stage {
    fn name(self) -> &'static str {
        match self {
            Stage::Coarse { .. } => "coarse",
            Stage::Fine { .. } => "fine",
        }
    }
}

/// Gradient of a fitting loss with respect to each block of a [`PoseState`].
/// Blocks that a stage holds fixed are zero.
#[derive(Debug, Clone, PartialEq)]
pub struct StateGradient {
    pub pose: Vec<f64>,
    pub shape: Vec<f64>,
    pub rotation: [f64; 3],
    pub translation: [f64; 3],
}

/// A fitting loss with the model and targets already on a tape.
pub struct Objective<'a> {
    model: &'a HandModel,
    stage: Stage,
    tape: Tape,
    consts: ModelConstants,
    target_verts: Var,
    target_joints: Option<Var>,
    base: usize,
}

fn check_target(what: &'static str, a: &Array2<f64>, rows: usize) -> Result<()> {
    if a.dim() != (rows, 3) {
        return Err(shape_err(
            what,
            format!("{rows}x3"),
            format!("{}x{}", a.nrows(), a.ncols()),
        ));
    }
    if a.iter().any(|x| !x.is_finite()) {
        return Err(Error::InvalidInput(format!("{what} contains non-finite values")));
    }
    Ok(())
}

impl<'a> Objective<'a> {
    pub fn new(
        model: &'a HandModel,
        stage: Stage,
        target_verts: &Array2<f64>,
        target_joints: Option<&Array2<f64>>,
    ) -> Result<Self> {
        check_target("target vertices", target_verts, model.num_vertices())?;
        if let Some(j) = target_joints {
            check_target("target joints", j, model.num_joints())?;
        }
        if matches!(stage, Stage::Coarse { .. }) && target_joints.is_none() {
            return Err(Error::InvalidInput("coarse stage needs target joints".into()));
        }
        let mut tape = Tape::new();
        let consts = ModelConstants::new(&mut tape, model);
        let target_verts = tape.constant(target_verts.clone());
        let target_joints = target_joints.map(|j| tape.constant(j.clone()));
        let base = tape.len();
        Ok(Self {
            model,
            stage,
            tape,
            consts,
            target_verts,
            target_joints,
            base,
        })
    }

    /// Loss and gradient at `state`.
    pub fn eval(&mut self, state: &PoseState) -> Result<(f64, StateGradient)> {
        state.validate(self.model)?;
        self.tape.truncate(self.base);
        let tape = &mut self.tape;
        let free = matches!(self.stage, Stage::Fine { .. });
        let block = |tape: &mut Tape, values: &[f64]| {
            if free {
                tape.param_row(values)
            } else {
                tape.constant(row(values))
            }
        };
        let vars = PoseVars {
            pose: block(tape, &state.pose),
            shape: block(tape, &state.shape),
            rotation: tape.param_row(&state.rotation),
            translation: tape.param_row(&state.translation),
        };
        let (verts, joints) = lbs_on_tape(tape, self.model, &self.consts, vars);
        let vert_sq = tape.squared_distance(verts, self.target_verts);
        let l_vert = tape.scale(vert_sq, 1.0 / self.model.num_vertices() as f64);
        let loss = match self.stage {
            Stage::Coarse { lambda_vert } => {
                let target = self.target_joints.expect("checked in new");
                let joint_sq = tape.squared_distance(joints, target);
                let l_joint = tape.scale(joint_sq, 1.0 / self.model.num_joints() as f64);
                let weighted = tape.scale(l_vert, lambda_vert);
                tape.add(l_joint, weighted)
            }
            Stage::Fine {
                lambda_pose,
                lambda_shape,
            } => {
                let mut loss = l_vert;
                if !state.pose.is_empty() {
                    let sq = tape.square(vars.pose);
                    let l_pose = tape.sum(sq);
                    let weighted = tape.scale(l_pose, lambda_pose);
                    loss = tape.add(loss, weighted);
                }
                if !state.shape.is_empty() {
                    let sq = tape.square(vars.shape);
                    let l_shape = tape.sum(sq);
                    let weighted = tape.scale(l_shape, lambda_shape);
                    loss = tape.add(loss, weighted);
                }
                loss
            }
        };
        let grads = tape.backward(loss)?;
        let three = |v: Var| {
            let g = grads.wrt(v);
            [g[[0, 0]], g[[0, 1]], g[[0, 2]]]
        };
        let flat = |v: Var| grads.wrt(v).iter().copied().collect::<Vec<_>>();
        Ok((
            tape.scalar(loss),
            StateGradient {
                pose: flat(vars.pose),
                shape: flat(vars.shape),
                rotation: three(vars.rotation),
                translation: three(vars.translation),
            },
        ))
    }
}

struct Group {
    name: &'static str,
    lr: f64,
    get: fn(&PoseState) -> Vec<f64>,
    set: fn(&mut PoseState, &[f64]),
    grad: fn(&StateGradient) -> Vec<f64>,
    /// Axis-angle block that is folded back to `|r| ≤ π` after each update.
    wraps: bool,
}

fn rotation_group(lr: f64) -> Group {
    Group {
        name: "rotation",
        lr,
        get: |s| s.rotation.to_vec(),
        set: |s, v| s.rotation.copy_from_slice(v),
        grad: |g| g.rotation.to_vec(),
        wraps: true,
    }
}

fn translation_group(lr: f64) -> Group {
    Group {
        name: "translation",
        lr,
        get: |s| s.translation.to_vec(),
        set: |s, v| s.translation.copy_from_slice(v),
        grad: |g| g.translation.to_vec(),
        wraps: false,
    }
}

/// Same rotation, principal branch. Large learning rates can push the global
/// axis-angle far past π, where the exponential map flattens out and the fit
/// stalls.
fn wrap_axis_angle(r: &mut [f64]) {
    let n = (r[0] * r[0] + r[1] * r[1] + r[2] * r[2]).sqrt();
    if n > PI {
        let w = log_map(&rodrigues([r[0], r[1], r[2]]));
        r.copy_from_slice(&w);
    }
}

fn run_stage(
    objective: &mut Objective<'_>,
    mut state: PoseState,
    groups: &[Group],
    epochs: usize,
    iters_per_epoch: usize,
    schedule: LrSchedule,
) -> Result<(PoseState, StageReport)> {
    let mut params: Vec<Array2<f64>> = groups.iter().map(|g| row(&(g.get)(&state))).collect();
    let initial: Vec<f64> = groups.iter().map(|g| g.lr).collect();
    let mut adam = AdamState::for_params(&params, &initial, AdamConfig::default());
    let total = epochs * iters_per_epoch;
    let mut report = StageReport {
        loss: Vec::with_capacity(total),
        lr_groups: groups.iter().map(|g| g.name.to_string()).collect(),
        lr: Vec::with_capacity(total),
    };
    let stage = objective.stage.name();
    for iter in 0..total {
        let wrap = |e: Error| Error::Fit {
            stage,
            iteration: iter,
            source: Box::new(e),
        };
        let (loss, grad) = objective.eval(&state).map_err(wrap)?;
        if !loss.is_finite() {
            return Err(wrap(Error::NonFinite { node: 0, op: "loss" }));
        }
        let lrs: Vec<f64> = initial
            .iter()
            .map(|&lr| schedule.lr_at(lr, iter, iters_per_epoch))
            .collect();
        for (i, &lr) in lrs.iter().enumerate() {
            adam.set_lr(i, lr);
        }
        let grads: Vec<Array2<f64>> = groups.iter().map(|g| row(&(g.grad)(&grad))).collect();
        adam.step(&mut params, &grads).map_err(wrap)?;
        for (g, p) in groups.iter().zip(params.iter_mut()) {
            if g.wraps {
                wrap_axis_angle(p.as_slice_mut().expect("row is contiguous"));
            }
            (g.set)(&mut state, p.as_slice().expect("row is contiguous"));
        }
        report.loss.push(loss);
        report.lr.push(lrs);
    }
    Ok((state, report))
}

fn vertex_rms(model: &HandModel, state: &PoseState, target: &Array2<f64>) -> Result<f64> {
    let out = lbs_forward(model, state)?;
    let sq: f64 = (&out.vertices - target).iter().map(|d| d * d).sum();
    Ok((sq / model.num_vertices() as f64).sqrt())
}

/// Coarse stage from the identity state: only `r` and `t` move.
pub fn fit_coarse(
    model: &HandModel,
    target_verts: &Array2<f64>,
    target_joints: &Array2<f64>,
    cfg: &FitConfig,
) -> Result<FitReport> {
    cfg.validate()?;
    let c = cfg.coarse;
    let mut objective = Objective::new(
        model,
        Stage::Coarse {
            lambda_vert: c.lambda_vert,
        },
        target_verts,
        Some(target_joints),
    )?;
    let groups = [rotation_group(c.lr_rot), translation_group(c.lr_trans)];
    let (state, report) = run_stage(
        &mut objective,
        PoseState::zeros(model),
        &groups,
        c.epochs,
        c.iters_per_epoch,
        cfg.schedule,
    )?;
    Ok(FitReport {
        vertex_rms: vertex_rms(model, &state, target_verts)?,
        state,
        coarse: Some(report),
        fine: None,
    })
}

/// Fine stage starting from `init` rotation and translation with zero pose
/// and shape.
pub fn fit_fine(
    model: &HandModel,
    target_verts: &Array2<f64>,
    init: ([f64; 3], [f64; 3]),
    cfg: &FitConfig,
) -> Result<FitReport> {
    cfg.validate()?;
    let f = cfg.fine;
    let mut objective = Objective::new(
        model,
        Stage::Fine {
            lambda_pose: f.lambda_pose,
            lambda_shape: f.lambda_shape,
        },
        target_verts,
        None,
    )?;
    let mut start = PoseState::zeros(model);
    start.rotation = init.0;
    start.translation = init.1;
    let mut groups = Vec::with_capacity(4);
    if model.pose_dim() > 0 {
        groups.push(Group {
            name: "pose",
            lr: f.lr_pose,
            get: |s| s.pose.clone(),
            set: |s, v| s.pose.copy_from_slice(v),
            grad: |g| g.pose.clone(),
            wraps: false,
        });
    }
    if model.shape_dim() > 0 {
        groups.push(Group {
            name: "shape",
            lr: f.lr_shape,
            get: |s| s.shape.clone(),
            set: |s, v| s.shape.copy_from_slice(v),
            grad: |g| g.shape.clone(),
            wraps: false,
        });
    }
    groups.push(rotation_group(f.lr_rot));
    groups.push(translation_group(f.lr_trans));
    let (state, report) = run_stage(
        &mut objective,
        start,
        &groups,
        f.epochs,
        f.iters_per_epoch,
        cfg.schedule,
    )?;
    Ok(FitReport {
        vertex_rms: vertex_rms(model, &state, target_verts)?,
        state,
        coarse: None,
        fine: Some(report),
    })
}

/// Coarse then fine.
pub fn fit(
    model: &HandModel,
    target_verts: &Array2<f64>,
    target_joints: &Array2<f64>,
    cfg: &FitConfig,
) -> Result<FitReport> {
    let coarse = fit_coarse(model, target_verts, target_joints, cfg)?;
    let init = (coarse.state.rotation, coarse.state.translation);
    let fine = fit_fine(model, target_verts, init, cfg)?;
    Ok(FitReport {
        coarse: coarse.coarse,
        ..fine
    })
}

/// A target mesh with its joints.
#[derive(Debug, Clone, PartialEq)]
pub struct FitTarget {
    pub vertices: Array2<f64>,
    pub joints: Array2<f64>,
}

/// Independent fits in parallel; results keep the input order.
pub fn fit_batch(model: &HandModel, targets: &[FitTarget], cfg: &FitConfig) -> Vec<Result<FitReport>> {
    targets
        .par_iter()
        .map(|t| fit(model, &t.vertices, &t.joints, cfg))
        .collect()
}
