//! Z-buffer rasterization with a part-id buffer.

use ndarray::Array2;

use super::camera::Camera;
use crate::error::{Error, Result};
use crate::handmodel::Part;

/// Camera-frame triangle mesh with per-vertex and per-face part labels.
#[derive(Debug, Clone, Copy)]
pub struct Mesh<'a> {
    /// `V×3`, meters, camera frame.
    pub vertices: &'a Array2<f64>,
    pub faces: &'a [[usize; 3]],
    pub vertex_parts: &'a [Part],
    pub face_parts: &'a [Part],
}

impl Mesh<'_> {
    pub fn validate(&self) -> Result<()> {
        let v = self.vertices.nrows();
        if self.vertices.ncols() != 3 {
            return Err(Error::InvalidInput("mesh vertices must be Vx3".into()));
        }
        if self.vertex_parts.len() != v {
            return Err(Error::InvalidInput(format!(
                "{} vertex part labels for {v} vertices",
                self.vertex_parts.len()
            )));
        }
        if self.face_parts.len() != self.faces.len() {
            return Err(Error::InvalidInput(format!(
                "{} face part labels for {} faces",
                self.face_parts.len(),
                self.faces.len()
            )));
        }
        if let Some((i, f)) = self.faces.iter().enumerate().find(|(_, f)| f.iter().any(|&k| k >= v)) {
            return Err(Error::InvalidInput(format!("face {i} {f:?} indexes past {v} vertices")));
        }
        Ok(())
    }

    pub fn vertex(&self, i: usize) -> [f64; 3] {
        [self.vertices[[i, 0]], self.vertices[[i, 1]], self.vertices[[i, 2]]]
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RenderBuffers {
    /// Part of the nearest surface per pixel, `None` for background.
    pub part_id: Array2<Option<Part>>,
    /// Depth of the nearest surface, `+∞` for background.
    pub depth: Array2<f64>,
    /// Faces skipped for zero projected area.
    pub degenerate_faces: usize,
    /// Faces skipped for having a vertex behind the near plane.
    pub clipped_faces: usize,
}

fn edge(a: [f64; 2], b: [f64; 2], p: [f64; 2]) -> f64 {
    (b[0] - a[0]) * (p[1] - a[1]) - (b[1] - a[1]) * (p[0] - a[0])
}

/// Pixel centers inside the triangle (boundary included), with their
/// perspective-correct depth.
pub(crate) fn for_each_covered(
    camera: &Camera,
    tri: [[f64; 3]; 3],
    mut visit: impl FnMut(usize, usize, f64),
) -> Option<()> {
    let s = [[tri[0][0], tri[0][1]], [tri[1][0], tri[1][1]], [tri[2][0], tri[2][1]]];
    let area = edge(s[0], s[1], s[2]);
    if !area.is_finite() || area.abs() < 1e-12 {
        return None;
    }
    let min_u = s.iter().map(|p| p[0]).fold(f64::INFINITY, f64::min);
    let max_u = s.iter().map(|p| p[0]).fold(f64::NEG_INFINITY, f64::max);
    let min_v = s.iter().map(|p| p[1]).fold(f64::INFINITY, f64::min);
    let max_v = s.iter().map(|p| p[1]).fold(f64::NEG_INFINITY, f64::max);
    let col0 = (min_u - 0.5).ceil().max(0.0);
    let col1 = (max_u - 0.5).floor().min(camera.width as f64 - 1.0);
    let row0 = (min_v - 0.5).ceil().max(0.0);
    let row1 = (max_v - 0.5).floor().min(camera.height as f64 - 1.0);
    if col0 > col1 || row0 > row1 {
        return Some(());
    }
    let inv_z = [1.0 / tri[0][2], 1.0 / tri[1][2], 1.0 / tri[2][2]];
    for row in row0 as usize..=row1 as usize {
        for col in col0 as usize..=col1 as usize {
            let p = [col as f64 + 0.5, row as f64 + 0.5];
            let w0 = edge(s[1], s[2], p) / area;
            let w1 = edge(s[2], s[0], p) / area;
            let w2 = edge(s[0], s[1], p) / area;
            if w0 >= 0.0 && w1 >= 0.0 && w2 >= 0.0 {
                let z = 1.0 / (w0 * inv_z[0] + w1 * inv_z[1] + w2 * inv_z[2]);
                visit(row, col, z);
            }
        }
    }
    Some(())
}

/// Renders part ids and depth. Ties in depth go to the lower part index, so
/// the buffers do not depend on face order.
pub fn rasterize(mesh: &Mesh<'_>, camera: &Camera) -> Result<RenderBuffers> {
    camera.validate()?;
    mesh.validate()?;
    let mut part_id = Array2::from_elem((camera.height, camera.width), None::<Part>);
    let mut depth = Array2::from_elem((camera.height, camera.width), f64::INFINITY);
    let mut degenerate_faces = 0;
    let mut clipped_faces = 0;
    for (face, &part) in mesh.faces.iter().zip(mesh.face_parts) {
        let projected: Option<Vec<[f64; 3]>> = face.iter().map(|&i| camera.project(mesh.vertex(i))).collect();
        let Some(p) = projected else {
            clipped_faces += 1;
            continue;
        };
        let covered = for_each_covered(camera, [p[0], p[1], p[2]], |row, col, z| {
            let cur = depth[[row, col]];
            let wins = z < cur || (z == cur && part_id[[row, col]].is_none_or(|q: Part| part.index() < q.index()));
            if wins {
                depth[[row, col]] = z;
                part_id[[row, col]] = Some(part);
            }
        });
        if covered.is_none() {
            degenerate_faces += 1;
        }
    }
    Ok(RenderBuffers {
        part_id,
        depth,
        degenerate_faces,
        clipped_faces,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;

    fn camera() -> Camera {
        Camera {
            fx: 50.0,
            fy: 50.0,
            cx: 16.0,
            cy: 16.0,
            width: 32,
            height: 32,
        }
    }

    #[test]
    fn empty_mesh_is_background() {
        let v = Array2::zeros((0, 3));
        let mesh = Mesh {
            vertices: &v,
            faces: &[],
            vertex_parts: &[],
            face_parts: &[],
        };
        let r = rasterize(&mesh, &camera()).unwrap();
        assert!(r.part_id.iter().all(Option::is_none));
        assert!(r.depth.iter().all(|d| d.is_infinite()));
    }

    #[test]
    fn degenerate_and_clipped_faces_are_counted() {
        let v = array![[0.0, 0.0, 1.0], [0.1, 0.0, 1.0], [0.2, 0.0, 1.0], [0.0, 0.1, -1.0]];
        let faces = [[0, 1, 2], [0, 1, 3]];
        let parts = [Part::Palm; 4];
        let mesh = Mesh {
            vertices: &v,
            faces: &faces,
            vertex_parts: &parts,
            face_parts: &parts[..2],
        };
        let r = rasterize(&mesh, &camera()).unwrap();
        assert_eq!((r.degenerate_faces, r.clipped_faces), (1, 1));
    }

    #[test]
    fn bad_face_index_is_rejected() {
        let v = array![[0.0, 0.0, 1.0]];
        let mesh = Mesh {
            vertices: &v,
            faces: &[[0, 0, 1]],
            vertex_parts: &[Part::Palm],
            face_parts: &[Part::Palm],
        };
        assert!(rasterize(&mesh, &camera()).is_err());
    }
}
