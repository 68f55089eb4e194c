use std::path::Path;

use ndarray::Array2;
use serde::{Deserialize, Serialize};

use crate::error::{shape_err, Error, Result};

/// Hand part a vertex, face or joint belongs to.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Part {
    Thumb,
    Index,
    Middle,
    Ring,
    Pinky,
    Palm,
}

impl Part {
    pub const ALL: [Part; 6] = [
        Part::Thumb,
        Part::Index,
        Part::Middle,
        Part::Ring,
        Part::Pinky,
        Part::Palm,
    ];

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn from_index(i: usize) -> Option<Part> {
        Self::ALL.get(i).copied()
    }

    pub fn name(self) -> &'static str {
        match self {
            Part::Thumb => "thumb",
            Part::Index => "index",
            Part::Middle => "middle",
            Part::Ring => "ring",
            Part::Pinky => "pinky",
            Part::Palm => "palm",
        }
    }
}

/// On-disk model document. Field names are the schema; see
/// `docs/model-schema.md`.
#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
#[serde(rename_all = "camelCase", deny_unknown_fields)]
pub struct ModelAsset {
    pub schema: String,
    #[serde(default)]
    pub name: String,
    pub rest_vertices: Vec<[f64; 3]>,
    pub faces: Vec<[usize; 3]>,
    /// `V×J`.
    pub skin_weights: Vec<Vec<f64>>,
    /// Parent joint per joint, `-1` for the root.
    pub kinematic_tree: Vec<i64>,
    /// `V×3×S`.
    pub shape_blend: Vec<Vec<Vec<f64>>>,
    /// `V×3×P`, optional.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub pose_blend: Option<Vec<Vec<Vec<f64>>>>,
    /// `J×V`.
    pub joint_regressor: Vec<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub topology_map: Option<Vec<usize>>,
    pub part_labels: Vec<u8>,
}

pub const MODEL_SCHEMA: &str = "handsynth.model/1";

const WEIGHT_SUM_TOL: f64 = 1e-6;

/// Validated linear-blend-skinning hand model. Immutable after construction.
#[derive(Debug, Clone)]
pub struct HandModel {
    name: String,
    rest: Array2<f64>,
    faces: Vec<[usize; 3]>,
    weights: Array2<f64>,
    parents: Vec<Option<usize>>,
    shape_basis: Array2<f64>,
    pose_basis: Option<Array2<f64>>,
    regressor: Array2<f64>,
    topology_map: Option<Vec<usize>>,
    part_labels: Vec<Part>,
    face_parts: Vec<Part>,
}

fn blend_to_basis(blend: &[Vec<Vec<f64>>], v: usize, field: &str) -> Result<Array2<f64>> {
    if blend.len() != v {
        return Err(Error::Schema(format!(
            "{field} has {} vertex entries, expected {v}",
            blend.len()
        )));
    }
    let count = blend.first().and_then(|r| r.first()).map_or(0, Vec::len);
    let mut basis = Array2::zeros((count, 3 * v));
    for (i, per_vertex) in blend.iter().enumerate() {
        if per_vertex.len() != 3 {
            return Err(Error::Schema(format!("{field}[{i}] must have 3 coordinate rows")));
        }
        for (c, coeffs) in per_vertex.iter().enumerate() {
            if coeffs.len() != count {
                return Err(Error::Schema(format!(
                    "{field}[{i}][{c}] has {} components, expected {count}",
                    coeffs.len()
                )));
            }
            for (k, &x) in coeffs.iter().enumerate() {
                basis[[k, 3 * i + c]] = x;
            }
        }
    }
    Ok(basis)
}

fn basis_to_blend(basis: &Array2<f64>, v: usize) -> Vec<Vec<Vec<f64>>> {
    (0..v)
        .map(|i| (0..3).map(|c| basis.column(3 * i + c).to_vec()).collect())
        .collect()
}

fn all_finite(values: impl IntoIterator<Item = f64>) -> bool {
    values.into_iter().all(f64::is_finite)
}

impl HandModel {
    pub fn from_asset(asset: ModelAsset) -> Result<Self> {
        if asset.schema != MODEL_SCHEMA {
            return Err(Error::Schema(format!(
                "unsupported schema {:?}, expected {MODEL_SCHEMA:?}",
                asset.schema
            )));
        }
        let v = asset.rest_vertices.len();
        let j = asset.kinematic_tree.len();
        if v == 0 {
            return Err(Error::Schema("restVertices is empty".into()));
        }
        if j == 0 {
            return Err(Error::Schema("kinematicTree is empty".into()));
        }
        if !all_finite(asset.rest_vertices.iter().flatten().copied()) {
            return Err(Error::Schema("restVertices contains non-finite values".into()));
        }
        let rest = Array2::from_shape_fn((v, 3), |(i, c)| asset.rest_vertices[i][c]);

        for (f, face) in asset.faces.iter().enumerate() {
            if let Some(&bad) = face.iter().find(|&&idx| idx >= v) {
                return Err(Error::Schema(format!(
                    "faces[{f}] references vertex {bad}, but there are only {v} vertices"
                )));
            }
        }

        let mut parents = Vec::with_capacity(j);
        for (k, &p) in asset.kinematic_tree.iter().enumerate() {
            if k == 0 {
                if p != -1 {
                    return Err(Error::Schema("kinematicTree[0] must be -1 (root)".into()));
                }
                parents.push(None);
            } else if p < 0 || p as usize >= k {
                return Err(Error::Schema(format!(
                    "kinematicTree[{k}] = {p}: every non-root joint needs a parent with a smaller index"
                )));
            } else {
                parents.push(Some(p as usize));
            }
        }

        if asset.skin_weights.len() != v {
            return Err(Error::Schema(format!(
                "skinWeights has {} rows, expected {v}",
                asset.skin_weights.len()
            )));
        }
        let mut weights = Array2::zeros((v, j));
        for (i, row) in asset.skin_weights.iter().enumerate() {
            if row.len() != j {
                return Err(Error::Schema(format!(
                    "skinWeights[{i}] has {} entries, expected {j}",
                    row.len()
                )));
            }
            if row.iter().any(|w| !w.is_finite() || *w < 0.0) {
                return Err(Error::Schema(format!(
                    "skinWeights[{i}] has a negative or non-finite weight"
                )));
            }
            let total: f64 = row.iter().sum();
            if (total - 1.0).abs() > WEIGHT_SUM_TOL {
                return Err(Error::Schema(format!(
                    "skinWeights[{i}] sums to {total}, expected 1 ± {WEIGHT_SUM_TOL}"
                )));
            }
            for (k, &w) in row.iter().enumerate() {
                weights[[i, k]] = w;
            }
        }

        let shape_basis = blend_to_basis(&asset.shape_blend, v, "shapeBlend")?;
        if !all_finite(shape_basis.iter().copied()) {
            return Err(Error::Schema("shapeBlend contains non-finite values".into()));
        }
        let pose_dim = 3 * (j - 1);
        let pose_basis = match &asset.pose_blend {
            Some(blend) => {
                let basis = blend_to_basis(blend, v, "poseBlend")?;
                if basis.nrows() != pose_dim {
                    return Err(Error::Schema(format!(
                        "poseBlend has {} components, expected 3·(J−1) = {pose_dim}",
                        basis.nrows()
                    )));
                }
                if !all_finite(basis.iter().copied()) {
                    return Err(Error::Schema("poseBlend contains non-finite values".into()));
                }
                Some(basis)
            }
            None => None,
        };

        if asset.joint_regressor.len() != j {
            return Err(Error::Schema(format!(
                "jointRegressor has {} rows, expected {j}",
                asset.joint_regressor.len()
            )));
        }
        let mut regressor = Array2::zeros((j, v));
        for (k, row) in asset.joint_regressor.iter().enumerate() {
            if row.len() != v {
                return Err(Error::Schema(format!(
                    "jointRegressor[{k}] has {} entries, expected {v}",
                    row.len()
                )));
            }
            if !all_finite(row.iter().copied()) {
                return Err(Error::Schema(format!("jointRegressor[{k}] contains non-finite values")));
            }
            for (i, &w) in row.iter().enumerate() {
                regressor[[k, i]] = w;
            }
        }

        if let Some(map) = &asset.topology_map {
            let mut seen = vec![false; j];
            for &idx in map {
                if idx >= j {
                    return Err(Error::Schema(format!(
                        "topologyMap entry {idx} is out of range for {j} joints"
                    )));
                }
                if std::mem::replace(&mut seen[idx], true) {
                    return Err(Error::Schema(format!("topologyMap repeats joint {idx}")));
                }
            }
        }

        if asset.part_labels.len() != v {
            return Err(Error::Schema(format!(
                "partLabels has {} entries, expected {v}",
                asset.part_labels.len()
            )));
        }
        let part_labels = asset
            .part_labels
            .iter()
            .enumerate()
            .map(|(i, &p)| {
                Part::from_index(p as usize)
                    .ok_or_else(|| Error::Schema(format!("partLabels[{i}] = {p} is not in 0..=5")))
            })
            .collect::<Result<Vec<_>>>()?;
        let face_parts = asset
            .faces
            .iter()
            .map(|f| face_part(f.map(|i| part_labels[i])))
            .collect();

        Ok(Self {
            name: asset.name,
            rest,
            faces: asset.faces,
            weights,
            parents,
            shape_basis,
            pose_basis,
            regressor,
            topology_map: asset.topology_map,
            part_labels,
            face_parts,
        })
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        let asset: ModelAsset = serde_json::from_str(&text)?;
        Self::from_asset(asset)
    }

    pub fn to_asset(&self) -> ModelAsset {
        let v = self.num_vertices();
        ModelAsset {
            schema: MODEL_SCHEMA.to_string(),
            name: self.name.clone(),
            rest_vertices: self.rest.rows().into_iter().map(|r| [r[0], r[1], r[2]]).collect(),
            faces: self.faces.clone(),
            skin_weights: self.weights.rows().into_iter().map(|r| r.to_vec()).collect(),
            kinematic_tree: self.parents.iter().map(|p| p.map_or(-1, |p| p as i64)).collect(),
            shape_blend: basis_to_blend(&self.shape_basis, v),
            pose_blend: self.pose_basis.as_ref().map(|b| basis_to_blend(b, v)),
            joint_regressor: self.regressor.rows().into_iter().map(|r| r.to_vec()).collect(),
            topology_map: self.topology_map.clone(),
            part_labels: self.part_labels.iter().map(|p| p.index() as u8).collect(),
        }
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn num_vertices(&self) -> usize {
        self.rest.nrows()
    }

    pub fn num_joints(&self) -> usize {
        self.parents.len()
    }

    /// Length of the pose vector: axis-angle for every non-root joint.
    pub fn pose_dim(&self) -> usize {
        3 * (self.num_joints() - 1)
    }

    pub fn shape_dim(&self) -> usize {
        self.shape_basis.nrows()
    }

    pub fn rest_vertices(&self) -> &Array2<f64> {
        &self.rest
    }

    pub fn faces(&self) -> &[[usize; 3]] {
        &self.faces
    }

    pub fn skin_weights(&self) -> &Array2<f64> {
        &self.weights
    }

    pub fn parents(&self) -> &[Option<usize>] {
        &self.parents
    }

    /// `S×3V`, row `k` is the flattened displacement of shape component `k`.
    pub fn shape_basis(&self) -> &Array2<f64> {
        &self.shape_basis
    }

    pub fn pose_basis(&self) -> Option<&Array2<f64>> {
        self.pose_basis.as_ref()
    }

    pub fn joint_regressor(&self) -> &Array2<f64> {
        &self.regressor
    }

    pub fn topology_map(&self) -> Option<&[usize]> {
        self.topology_map.as_deref()
    }

    pub fn part_labels(&self) -> &[Part] {
        &self.part_labels
    }

    pub fn face_parts(&self) -> &[Part] {
        &self.face_parts
    }

    /// `joints = jointRegressor · vertices`.
    pub fn regress_joints(&self, vertices: &Array2<f64>) -> Result<Array2<f64>> {
        if vertices.dim() != (self.num_vertices(), 3) {
            return Err(shape_err(
                "regress_joints",
                format!("{}x3", self.num_vertices()),
                format!("{}x{}", vertices.nrows(), vertices.ncols()),
            ));
        }
        Ok(self.regressor.dot(vertices))
    }

    /// Keeps the joints listed in the topology map, in map order.
    pub fn adapt_topology(&self, joints: &Array2<f64>) -> Result<Array2<f64>> {
        let map = self.topology_map.as_deref().ok_or_else(|| {
            Error::TopologyRequired(format!(
                "model {:?} has no topologyMap; label adaptation to the evaluation skeleton is required before evaluation",
                self.name
            ))
        })?;
        adapt_joints(joints, map)
    }
}

/// Selects `map` rows of `joints`.
pub fn adapt_joints(joints: &Array2<f64>, map: &[usize]) -> Result<Array2<f64>> {
    if joints.ncols() != 3 {
        return Err(shape_err(
            "adapt_topology",
            "Jx3",
            format!("{}x{}", joints.nrows(), joints.ncols()),
        ));
    }
    if let Some(&bad) = map.iter().find(|&&i| i >= joints.nrows()) {
        return Err(shape_err(
            "adapt_topology",
            format!("more than {bad} joints"),
            joints.nrows(),
        ));
    }
    Ok(joints.select(ndarray::Axis(0), map))
}

/// Majority part of a face's three vertices; the first vertex breaks a
/// three-way tie.
fn face_part(parts: [Part; 3]) -> Part {
    if parts[1] == parts[2] {
        parts[1]
    } else {
        parts[0]
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn face_part_majority() {
        use Part::*;
        assert_eq!(face_part([Index, Index, Palm]), Index);
        assert_eq!(face_part([Palm, Index, Index]), Index);
        assert_eq!(face_part([Thumb, Index, Palm]), Thumb);
        assert_eq!(face_part([Ring, Ring, Ring]), Ring);
    }
}
