//! VAE occlusion prior over 3D hand poses: masked training and refinement
//! of hidden joints from visible ones.

mod model;
mod refine;
mod toy;
mod train;

pub use model::{
    root_center, Activation, Linear, Normalization, PriorModel, DEFAULT_HIDDEN_DIM, DEFAULT_LATENT_DIM, PRIOR_SCHEMA,
};
pub use refine::{fill_hidden, mean_pose, refine, refine_batch, Refined};
pub use toy::ToyManifold;
pub use train::{
    kl_divergence, parameters, set_parameters, train_prior, vae_loss, LossTerms, PriorTrainConfig, StepRecord,
    TrainReport,
};
