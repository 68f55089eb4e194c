//! Occlusion labels by render-and-compare against object masks.

mod camera;
mod label;
mod raster;

pub use camera::{focal_convert, Camera, NEAR_PLANE, SENSOR_WIDTH_MM};
pub use label::{
    joint_visibility, joint_visibility_from_buffers, label_frame, label_occlusion, part_names, vertex_occlusion,
    JointVisibility, OcclusionConfig, OcclusionLabel, VertexOcclusion, DEFAULT_THRESHOLD, REFERENCE_VERTEX_COUNT,
};
pub use raster::{rasterize, Mesh, RenderBuffers};
