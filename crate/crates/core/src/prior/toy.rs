//! A two-factor pose manifold on the desk hand, for training and testing
//! the prior without any external pose corpus.

use std::f64::consts::TAU;

use ndarray::Array2;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use super::model::root_center;
use crate::error::Result;
use crate::handmodel::{
    build_desk_hand, curl_spread_pose, lbs_forward, DeskHandSpec, DeskLayout, HandModel, PoseState,
};

pub struct ToyManifold {
    model: HandModel,
    layout: DeskLayout,
}

impl ToyManifold {
    pub fn new() -> Result<Self> {
        let spec = DeskHandSpec::default();
        Ok(Self {
            model: HandModel::from_asset(build_desk_hand(&spec))?,
            layout: DeskLayout::new(spec.extra_carpal_joints),
        })
    }

    pub fn model(&self) -> &HandModel {
        &self.model
    }

    /// Pose parameters for factors `u, v ∈ [0, 1)`.
    pub fn state(&self, u: f64, v: f64) -> PoseState {
        let curl = 0.7 + 0.6 * (TAU * u).sin();
        let spread = 0.3 * (TAU * v).sin();
        PoseState {
            pose: curl_spread_pose(&self.layout, curl, spread),
            ..PoseState::zeros(&self.model)
        }
    }

    /// Root-centered `21×3` joints for factors `u, v`.
    pub fn joints(&self, u: f64, v: f64) -> Result<Array2<f64>> {
        let out = lbs_forward(&self.model, &self.state(u, v))?;
        Ok(root_center(&out.joints, 0))
    }

    /// `n` poses with uniformly drawn factors.
    pub fn sample(&self, n: usize, seed: u64) -> Result<Vec<Array2<f64>>> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let factors: Vec<(f64, f64)> = (0..n).map(|_| (rng.random(), rng.random())).collect();
        factors.par_iter().map(|&(u, v)| self.joints(u, v)).collect()
    }
}
