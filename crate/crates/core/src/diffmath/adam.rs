use ndarray::Array2;

use crate::error::{shape_err, Result};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AdamConfig {
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        Self {
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
        }
    }
}

/// Adam moments for a fixed list of parameters, each with its own learning
/// rate.
#[derive(Debug, Clone)]
pub struct AdamState {
    pub config: AdamConfig,
    lrs: Vec<f64>,
    first: Vec<Array2<f64>>,
    second: Vec<Array2<f64>>,
    step: u64,
}

impl AdamState {
    pub fn new(shapes: &[(usize, usize)], lrs: &[f64], config: AdamConfig) -> Self {
        assert_eq!(shapes.len(), lrs.len(), "one learning rate per parameter");
        Self {
            config,
            lrs: lrs.to_vec(),
            first: shapes.iter().map(|&s| Array2::zeros(s)).collect(),
            second: shapes.iter().map(|&s| Array2::zeros(s)).collect(),
            step: 0,
        }
    }

    pub fn for_params(params: &[Array2<f64>], lrs: &[f64], config: AdamConfig) -> Self {
        let shapes: Vec<_> = params.iter().map(|p| p.dim()).collect();
        Self::new(&shapes, lrs, config)
    }

    pub fn step_count(&self) -> u64 {
        self.step
    }

    pub fn lr(&self, group: usize) -> f64 {
        self.lrs[group]
    }

    pub fn set_lr(&mut self, group: usize, lr: f64) {
        self.lrs[group] = lr;
    }

    pub fn first_moment(&self, group: usize) -> &Array2<f64> {
        &self.first[group]
    }

    pub fn second_moment(&self, group: usize) -> &Array2<f64> {
        &self.second[group]
    }

    /// One bias-corrected Adam update of `params` in place.
    pub fn step(&mut self, params: &mut [Array2<f64>], grads: &[Array2<f64>]) -> Result<()> {
        if params.len() != self.first.len() || grads.len() != self.first.len() {
            return Err(shape_err(
                "adam_step",
                format!("{} parameters", self.first.len()),
                format!("{} parameters, {} gradients", params.len(), grads.len()),
            ));
        }
        for (i, (p, g)) in params.iter().zip(grads).enumerate() {
            if p.dim() != self.first[i].dim() || g.dim() != self.first[i].dim() {
                return Err(shape_err(
                    "adam_step",
                    format!("{:?}", self.first[i].dim()),
                    format!("param {:?}, grad {:?}", p.dim(), g.dim()),
                ));
            }
        }

        self.step += 1;
        let AdamConfig { beta1, beta2, eps } = self.config;
        let t = self.step as i32;
        let c1 = 1.0 - beta1.powi(t);
        let c2 = 1.0 - beta2.powi(t);
        for (i, (p, g)) in params.iter_mut().zip(grads).enumerate() {
            let lr = self.lrs[i];
            let m = &mut self.first[i];
            let v = &mut self.second[i];
            ndarray::Zip::from(p).and(m).and(v).and(g).for_each(|p, m, v, &g| {
                *m = beta1 * *m + (1.0 - beta1) * g;
                *v = beta2 * *v + (1.0 - beta2) * g * g;
                let m_hat = *m / c1;
                let v_hat = *v / c2;
                *p -= lr * m_hat / (v_hat.sqrt() + eps);
            });
        }
        Ok(())
    }
}
