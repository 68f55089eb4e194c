//! Render-and-compare occlusion labels and joint visibility.

use ndarray::Array2;
use serde::{Deserialize, Serialize};

use super::camera::Camera;
use super::raster::{rasterize, Mesh, RenderBuffers};
use crate::error::{shape_err, Result};
use crate::handmodel::Part;
use crate::image::MaskBuffer;

/// Occluded-vertex count at which a part is flagged, for a mesh of
/// [`REFERENCE_VERTEX_COUNT`] vertices.
pub const DEFAULT_THRESHOLD: usize = 40;
pub const REFERENCE_VERTEX_COUNT: usize = 5990;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase", deny_unknown_fields)]
pub struct OcclusionConfig {
    pub threshold: usize,
    /// Scale `threshold` by `V / 5990` for meshes coarser or finer than the
    /// reference.
    pub auto_scale: bool,
    /// Meters a point may lie behind the rendered surface and still count
    /// as seen.
    pub depth_tolerance: f64,
}

impl Default for OcclusionConfig {
    fn default() -> Self {
        Self {
            threshold: DEFAULT_THRESHOLD,
            auto_scale: false,
            depth_tolerance: 0.005,
        }
    }
}

impl OcclusionConfig {
    pub fn effective_threshold(&self, vertex_count: usize) -> usize {
        if self.auto_scale {
            let scaled = self.threshold as f64 * vertex_count as f64 / REFERENCE_VERTEX_COUNT as f64;
            (scaled.round() as usize).max(1)
        } else {
            self.threshold
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct OcclusionLabel {
    /// Thumb, index, middle, ring, pinky, palm.
    pub per_part_occluded: [bool; 6],
    /// Number of flagged parts, 0 to 6.
    pub level: u8,
    /// Empty when no joints were supplied.
    pub per_joint_visible: Vec<bool>,
    /// Joints whose projection falls outside the image.
    pub joints_outside_image: Vec<usize>,
    /// Vertices occluded for either reason, per part.
    pub occluded_vertex_counts: [usize; 6],
    /// Vertices hidden behind the hand's own surface, per part.
    pub self_occluded_counts: [usize; 6],
    /// Vertices under the object mask, per part.
    pub mask_occluded_counts: [usize; 6],
    pub threshold: usize,
}

/// Why a single vertex counts as occluded.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct VertexOcclusion {
    pub behind_surface: bool,
    pub under_mask: bool,
}

impl VertexOcclusion {
    pub fn occluded(self) -> bool {
        self.behind_surface || self.under_mask
    }
}

fn check_mask(camera: &Camera, mask: &MaskBuffer) -> Result<()> {
    if mask.dim() != (camera.height, camera.width) {
        return Err(shape_err(
            "object mask",
            format!("{}x{}", camera.height, camera.width),
            format!("{}x{}", mask.dim().0, mask.dim().1),
        ));
    }
    Ok(())
}

/// Per-vertex occlusion against rendered buffers. Vertices that fall
/// outside the image or behind the camera are not occluded.
pub fn vertex_occlusion(
    mesh: &Mesh<'_>,
    buffers: &RenderBuffers,
    camera: &Camera,
    mask: &MaskBuffer,
    depth_tolerance: f64,
) -> Vec<VertexOcclusion> {
    (0..mesh.vertices.nrows())
        .map(|i| {
            let Some([u, v, z]) = camera.project(mesh.vertex(i)) else {
                return VertexOcclusion::default();
            };
            let Some((row, col)) = camera.pixel(u, v) else {
                return VertexOcclusion::default();
            };
            VertexOcclusion {
                behind_surface: z > buffers.depth[[row, col]] + depth_tolerance,
                under_mask: mask.get(row, col),
            }
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct JointVisibility {
    pub visible: Vec<bool>,
    pub outside_image: Vec<usize>,
}

/// A joint is visible when it projects inside the image, off the object
/// mask, and no deeper than `depth_tolerance` behind the rendered surface.
pub fn joint_visibility_from_buffers(
    joints: &Array2<f64>,
    buffers: &RenderBuffers,
    camera: &Camera,
    mask: &MaskBuffer,
    depth_tolerance: f64,
) -> JointVisibility {
    let mut outside_image = Vec::new();
    let visible = (0..joints.nrows())
        .map(|j| {
            let p = [joints[[j, 0]], joints[[j, 1]], joints[[j, 2]]];
            let pixel = camera
                .project(p)
                .and_then(|[u, v, z]| camera.pixel(u, v).map(|px| (px, z)));
            let Some(((row, col), z)) = pixel else {
                outside_image.push(j);
                return false;
            };
            !mask.get(row, col) && z <= buffers.depth[[row, col]] + depth_tolerance
        })
        .collect();
    JointVisibility { visible, outside_image }
}

pub fn joint_visibility(
    mesh: &Mesh<'_>,
    joints: &Array2<f64>,
    camera: &Camera,
    mask: &MaskBuffer,
    depth_tolerance: f64,
) -> Result<JointVisibility> {
    check_mask(camera, mask)?;
    let buffers = rasterize(mesh, camera)?;
    Ok(joint_visibility_from_buffers(
        joints,
        &buffers,
        camera,
        mask,
        depth_tolerance,
    ))
}

fn label_with_buffers(
    mesh: &Mesh<'_>,
    buffers: &RenderBuffers,
    camera: &Camera,
    mask: &MaskBuffer,
    cfg: &OcclusionConfig,
) -> OcclusionLabel {
    let mut label = OcclusionLabel {
        per_part_occluded: [false; 6],
        level: 0,
        per_joint_visible: Vec::new(),
        joints_outside_image: Vec::new(),
        occluded_vertex_counts: [0; 6],
        self_occluded_counts: [0; 6],
        mask_occluded_counts: [0; 6],
        threshold: cfg.effective_threshold(mesh.vertices.nrows()),
    };
    let states = vertex_occlusion(mesh, buffers, camera, mask, cfg.depth_tolerance);
    for (state, part) in states.iter().zip(mesh.vertex_parts) {
        let p = part.index();
        label.self_occluded_counts[p] += usize::from(state.behind_surface);
        label.mask_occluded_counts[p] += usize::from(state.under_mask);
        label.occluded_vertex_counts[p] += usize::from(state.occluded());
    }
    for p in 0..6 {
        label.per_part_occluded[p] = label.occluded_vertex_counts[p] >= label.threshold;
    }
    label.level = label.per_part_occluded.iter().filter(|&&b| b).count() as u8;
    label
}

/// Part flags and level; `per_joint_visible` is left empty.
pub fn label_occlusion(
    mesh: &Mesh<'_>,
    camera: &Camera,
    mask: &MaskBuffer,
    cfg: &OcclusionConfig,
) -> Result<OcclusionLabel> {
    check_mask(camera, mask)?;
    let buffers = rasterize(mesh, camera)?;
    Ok(label_with_buffers(mesh, &buffers, camera, mask, cfg))
}

/// Part flags, level and joint visibility from a single render.
pub fn label_frame(
    mesh: &Mesh<'_>,
    joints: &Array2<f64>,
    camera: &Camera,
    mask: &MaskBuffer,
    cfg: &OcclusionConfig,
) -> Result<OcclusionLabel> {
    check_mask(camera, mask)?;
    let buffers = rasterize(mesh, camera)?;
    let mut label = label_with_buffers(mesh, &buffers, camera, mask, cfg);
    let vis = joint_visibility_from_buffers(joints, &buffers, camera, mask, cfg.depth_tolerance);
    label.per_joint_visible = vis.visible;
    label.joints_outside_image = vis.outside_image;
    Ok(label)
}

/// Parts in the order used by the per-part arrays.
pub fn part_names() -> [&'static str; 6] {
    Part::ALL.map(Part::name)
}
