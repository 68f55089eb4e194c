//! Loadable parametric hand model: linear blend skinning, joint regression
//! and skeleton topology adaptation.

pub mod builder;
mod lbs;
mod model;

pub use builder::{build_desk_hand, curl_spread_pose, two_bone_asset, DeskHandSpec, DeskLayout};
pub use lbs::{lbs_forward, lbs_on_tape, pose_params, LbsOutput, ModelConstants, PoseState, PoseVars};
pub use model::{adapt_joints, HandModel, ModelAsset, Part, MODEL_SCHEMA};
