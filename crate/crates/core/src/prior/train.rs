//! Masked VAE training with the KL-plus-reconstruction objective.

use ndarray::{s, Array2};
use rand::seq::{index, SliceRandom};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use super::model::{Activation, Normalization, PriorModel, DEFAULT_HIDDEN_DIM, DEFAULT_LATENT_DIM};
use crate::diffmath::{AdamConfig, AdamState, Tape, Var};
use crate::error::{shape_err, Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase", default, deny_unknown_fields)]
pub struct PriorTrainConfig {
    pub batch_size: usize,
    pub learning_rate: f64,
    pub epochs: usize,
    #[serde(rename = "lambdaKL")]
    pub lambda_kl: f64,
    /// Fraction of joints zeroed per sample, rounded to a whole count.
    pub mask_rate: f64,
    pub seed: u64,
    pub latent_dim: usize,
    pub hidden_dim: usize,
}

impl Default for PriorTrainConfig {
    fn default() -> Self {
        Self {
            batch_size: 128,
            learning_rate: 1e-4,
            epochs: 160,
            lambda_kl: 0.01,
            mask_rate: 0.25,
            seed: 0,
            latent_dim: DEFAULT_LATENT_DIM,
            hidden_dim: DEFAULT_HIDDEN_DIM,
        }
    }
}

impl PriorTrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.batch_size == 0 || self.epochs == 0 || self.latent_dim == 0 || self.hidden_dim == 0 {
            return Err(Error::InvalidInput(
                "batch size, epochs and layer widths must be positive".into(),
            ));
        }
        if !(self.learning_rate.is_finite() && self.learning_rate > 0.0) {
            return Err(Error::InvalidInput(format!(
                "learning rate {} must be positive",
                self.learning_rate
            )));
        }
        if !(self.lambda_kl.is_finite() && self.lambda_kl >= 0.0) {
            return Err(Error::InvalidInput(format!(
                "KL weight {} must be non-negative",
                self.lambda_kl
            )));
        }
        if !(0.0..1.0).contains(&self.mask_rate) {
            return Err(Error::InvalidInput(format!(
                "mask rate {} outside [0, 1)",
                self.mask_rate
            )));
        }
        Ok(())
    }

    /// Joints masked per sample for a skeleton of `num_joints`.
    pub fn masked_joints(&self, num_joints: usize) -> usize {
        ((self.mask_rate * num_joints as f64).round() as usize).min(num_joints)
    }
}

/// Closed-form `KL(N(μ, e^logvar) ‖ N(0, I))`, summed over latent dimensions
/// and averaged over rows.
pub fn kl_divergence(mean: &Array2<f64>, log_var: &Array2<f64>) -> Result<f64> {
    if mean.dim() != log_var.dim() {
        return Err(shape_err(
            "kl_divergence",
            format!("{:?}", mean.dim()),
            format!("{:?}", log_var.dim()),
        ));
    }
    let rows = mean.nrows().max(1) as f64;
    let total: f64 = mean
        .iter()
        .zip(log_var)
        .map(|(&m, &lv)| -0.5 * (1.0 + lv - m * m - lv.exp()))
        .sum();
    Ok(total / rows)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct LossTerms {
    pub kl: f64,
    /// Squared error summed over coordinates, averaged over the batch.
    pub recon: f64,
    /// `λ·kl + recon`.
    pub total: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct StepRecord {
    pub epoch: usize,
    pub step: usize,
    #[serde(flatten)]
    pub loss: LossTerms,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct TrainReport {
    pub steps_per_epoch: usize,
    pub steps: Vec<StepRecord>,
    /// Per epoch, RMS reconstruction error per coordinate in meters.
    pub epoch_recon_rms: Vec<f64>,
}

/// Flattened weights and biases, layer by layer (encoder first).
pub fn parameters(model: &PriorModel) -> Vec<Array2<f64>> {
    model
        .layers()
        .flat_map(|l| [l.weight.clone(), l.bias.clone()])
        .collect()
}

pub fn set_parameters(model: &mut PriorModel, params: &[Array2<f64>]) -> Result<()> {
    let expected = 2 * (model.encoder.len() + model.decoder.len());
    if params.len() != expected {
        return Err(shape_err("prior parameters", expected, params.len()));
    }
    for (layer, pair) in model.layers_mut().zip(params.chunks(2)) {
        if pair[0].dim() != layer.weight.dim() || pair[1].dim() != layer.bias.dim() {
            return Err(shape_err(
                "prior parameters",
                format!("{:?}", layer.weight.dim()),
                format!("{:?}", pair[0].dim()),
            ));
        }
        layer.weight.assign(&pair[0]);
        layer.bias.assign(&pair[1]);
    }
    Ok(())
}

struct Graph {
    params: Vec<Var>,
    kl: Var,
    recon: Var,
    total: Var,
}

fn mlp(tape: &mut Tape, input: Var, activations: &[Activation], params: &[Var]) -> Var {
    let mut h = input;
    for (act, pair) in activations.iter().zip(params.chunks(2)) {
        let xw = tape.matmul(h, pair[0]);
        h = tape.add_row(xw, pair[1]);
        if *act == Activation::Relu {
            h = tape.relu(h);
        }
    }
    h
}

fn build_graph(
    tape: &mut Tape,
    model: &PriorModel,
    params: &[Array2<f64>],
    x: &Array2<f64>,
    mask: &Array2<f64>,
    eps: &Array2<f64>,
    lambda: f64,
) -> Graph {
    let vars: Vec<Var> = params.iter().map(|p| tape.param(p.clone())).collect();
    let enc_acts: Vec<Activation> = model.encoder.iter().map(|l| l.activation).collect();
    let dec_acts: Vec<Activation> = model.decoder.iter().map(|l| l.activation).collect();
    let (enc_params, dec_params) = vars.split_at(2 * enc_acts.len());
    let batch = x.nrows() as f64;
    let l = model.latent_dim;

    let target = tape.constant(x.clone());
    let masked = tape.constant(x * mask);
    let eps = tape.constant(eps.clone());

    let head = mlp(tape, masked, &enc_acts, enc_params);
    let mu = tape.slice_cols(head, 0, l);
    let log_var = tape.slice_cols(head, l, 2 * l);
    let half = tape.scale(log_var, 0.5);
    let std = tape.exp(half);
    let noise = tape.mul(std, eps);
    let z = tape.add(mu, noise);
    let recon_x = mlp(tape, z, &dec_acts, dec_params);

    let sq_err = tape.squared_distance(recon_x, target);
    let recon = tape.scale(sq_err, 1.0 / batch);
    let one_plus = tape.offset(log_var, 1.0);
    let mu_sq = tape.square(mu);
    let var = tape.exp(log_var);
    let a = tape.sub(one_plus, mu_sq);
    let b = tape.sub(a, var);
    let s = tape.sum(b);
    let kl = tape.scale(s, -0.5 / batch);
    let weighted = tape.scale(kl, lambda);
    let total = tape.add(weighted, recon);
    Graph {
        params: vars,
        kl,
        recon,
        total,
    }
}

/// Loss terms and gradients with respect to [`parameters`] order, for a
/// normalized batch `x` (`B×3J`), a 0/1 keep-mask of the same shape and
/// reparameterization noise `eps` (`B×latent`).
pub fn vae_loss(
    model: &PriorModel,
    params: &[Array2<f64>],
    x: &Array2<f64>,
    mask: &Array2<f64>,
    eps: &Array2<f64>,
    lambda: f64,
) -> Result<(LossTerms, Vec<Array2<f64>>)> {
    if x.ncols() != model.input_dim() || mask.dim() != x.dim() {
        return Err(shape_err(
            "vae_loss batch",
            format!("Bx{}", model.input_dim()),
            format!("x {:?}, mask {:?}", x.dim(), mask.dim()),
        ));
    }
    if eps.dim() != (x.nrows(), model.latent_dim) {
        return Err(shape_err(
            "vae_loss noise",
            format!("{}x{}", x.nrows(), model.latent_dim),
            format!("{:?}", eps.dim()),
        ));
    }
    let mut tape = Tape::new();
    let g = build_graph(&mut tape, model, params, x, mask, eps, lambda);
    let loss = LossTerms {
        kl: tape.scalar(g.kl),
        recon: tape.scalar(g.recon),
        total: tape.scalar(g.total),
    };
    if !loss.total.is_finite() {
        return Err(Error::NonFinite {
            node: g.total.index(),
            op: "vae_loss",
        });
    }
    let grads = tape.backward(g.total)?;
    Ok((loss, g.params.iter().map(|&v| grads.wrt(v)).collect()))
}

fn check_poses(poses: &[Array2<f64>]) -> Result<usize> {
    let j = poses.first().map(|p| p.nrows()).unwrap_or(0);
    for (i, p) in poses.iter().enumerate() {
        if p.dim() != (j, 3) {
            return Err(shape_err(
                "training pose",
                format!("{j}x3"),
                format!("pose {i}: {:?}", p.dim()),
            ));
        }
        if p.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidInput(format!("training pose {i} is not finite")));
        }
    }
    Ok(j)
}

/// Trains a prior on `J×3` poses (meters). Training is single-threaded and
/// fully determined by `cfg.seed`. Each epoch visits a fresh permutation in
/// whole batches; a trailing partial batch is skipped.
pub fn train_prior(poses: &[Array2<f64>], cfg: &PriorTrainConfig) -> Result<(PriorModel, TrainReport)> {
    cfg.validate()?;
    if poses.len() < cfg.batch_size {
        return Err(Error::InvalidInput(format!(
            "{} training poses, fewer than the batch size {}",
            poses.len(),
            cfg.batch_size
        )));
    }
    let j = check_poses(poses)?;
    let normalization = Normalization::fit(poses, 0)?;
    let mut model = PriorModel::new(j, cfg.latent_dim, cfg.hidden_dim, normalization, cfg.seed)?;
    let dim = model.input_dim();

    let mut data = Array2::zeros((poses.len(), dim));
    for (mut row, p) in data.rows_mut().into_iter().zip(poses) {
        row.assign(&normalization.encode(p).row(0));
    }

    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    rng.set_stream(1);
    let mut params = parameters(&model);
    let mut adam = AdamState::for_params(&params, &vec![cfg.learning_rate; params.len()], AdamConfig::default());
    let masked = cfg.masked_joints(j);
    let steps_per_epoch = poses.len() / cfg.batch_size;
    let mut order: Vec<usize> = (0..poses.len()).collect();
    let mut report = TrainReport {
        steps_per_epoch,
        steps: Vec::with_capacity(cfg.epochs * steps_per_epoch),
        epoch_recon_rms: Vec::with_capacity(cfg.epochs),
    };

    for epoch in 0..cfg.epochs {
        order.shuffle(&mut rng);
        let mut recon_sum = 0.0;
        for step in 0..steps_per_epoch {
            let rows = &order[step * cfg.batch_size..(step + 1) * cfg.batch_size];
            let mut x = Array2::zeros((rows.len(), dim));
            let mut mask = Array2::ones((rows.len(), dim));
            for (b, &r) in rows.iter().enumerate() {
                x.row_mut(b).assign(&data.row(r));
                for joint in index::sample(&mut rng, j, masked) {
                    mask.slice_mut(s![b, 3 * joint..3 * joint + 3]).fill(0.0);
                }
            }
            let eps = Array2::from_shape_simple_fn((rows.len(), cfg.latent_dim), || StandardNormal.sample(&mut rng));
            let wrap = |e: Error| Error::Training {
                epoch,
                step,
                source: Box::new(e),
            };
            let (loss, grads) = vae_loss(&model, &params, &x, &mask, &eps, cfg.lambda_kl).map_err(wrap)?;
            adam.step(&mut params, &grads).map_err(wrap)?;
            recon_sum += loss.recon;
            report.steps.push(StepRecord { epoch, step, loss });
        }
        let mean_recon = recon_sum / steps_per_epoch as f64;
        report
            .epoch_recon_rms
            .push((mean_recon / dim as f64).sqrt() * normalization.scale);
    }
    set_parameters(&mut model, &params)?;
    Ok((model, report))
}
