//! Deterministic procedural hand asset.
//!
//! A slab palm plus one tube per finger, rigged with 21 joints in the common
//! wrist / thumb / index / middle / ring / pinky order (four joints per digit),
//! or 25 joints when `extra_carpal_joints` adds a carpometacarpal joint at the
//! base of each non-thumb finger. Finger radii and the palm half-thickness are
//! kept below 5 mm so every joint lies within 5 mm of the visible surface when
//! the hand is seen face-on.

use std::f64::consts::PI;

use super::model::{ModelAsset, Part, MODEL_SCHEMA};

#[derive(Debug, Clone, PartialEq)]
pub struct DeskHandSpec {
    /// Vertices around each finger ring.
    pub ring_vertices: usize,
    /// Rings per finger segment.
    pub stations_per_segment: usize,
    /// Palm grid resolution across (x) and along (y) the palm, per face.
    pub palm_grid: (usize, usize),
    pub extra_carpal_joints: bool,
    /// Number of shape components, at most 10.
    pub shape_components: usize,
}

impl Default for DeskHandSpec {
    fn default() -> Self {
        Self {
            ring_vertices: 12,
            stations_per_segment: 4,
            palm_grid: (9, 10),
            extra_carpal_joints: false,
            shape_components: 10,
        }
    }
}

pub const MAX_SHAPE_COMPONENTS: usize = 10;

const PALM_HALF_WIDTH: f64 = 0.04;
const PALM_LENGTH: f64 = 0.09;
const PALM_HALF_THICKNESS: f64 = 0.004;
const BLEND_HALF_WIDTH: f64 = 0.005;

struct Digit {
    part: Part,
    base: [f64; 3],
    dir: [f64; 3],
    lengths: [f64; 3],
    radius: f64,
}

fn normalize(v: [f64; 3]) -> [f64; 3] {
    let n = (v[0] * v[0] + v[1] * v[1] + v[2] * v[2]).sqrt();
    [v[0] / n, v[1] / n, v[2] / n]
}

fn digits() -> [Digit; 5] {
    let up = [0.0, 1.0, 0.0];
    [
        Digit {
            part: Part::Thumb,
            base: [-0.030, 0.015, 0.0],
            dir: normalize([-0.55, 1.0, 0.0]),
            lengths: [0.038, 0.030, 0.024],
            radius: 0.0044,
        },
        Digit {
            part: Part::Index,
            base: [-0.027, PALM_LENGTH, 0.0],
            dir: up,
            lengths: [0.040, 0.024, 0.020],
            radius: 0.0040,
        },
        Digit {
            part: Part::Middle,
            base: [-0.009, PALM_LENGTH, 0.0],
            dir: up,
            lengths: [0.044, 0.028, 0.021],
            radius: 0.0040,
        },
        Digit {
            part: Part::Ring,
            base: [0.009, PALM_LENGTH, 0.0],
            dir: up,
            lengths: [0.041, 0.026, 0.020],
            radius: 0.0038,
        },
        Digit {
            part: Part::Pinky,
            base: [0.027, PALM_LENGTH, 0.0],
            dir: up,
            lengths: [0.032, 0.020, 0.018],
            radius: 0.0035,
        },
    ]
}

/// Joint index layout of the desk hand.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct DeskLayout {
    pub num_joints: usize,
    /// Per digit (thumb first): the three articulated joints followed by the tip.
    pub digit_joints: [[usize; 4]; 5],
    /// Carpometacarpal joint per non-thumb finger when present.
    pub carpal_joints: Option<[usize; 4]>,
    pub parents: Vec<i64>,
}

impl DeskLayout {
    pub fn new(extra_carpal_joints: bool) -> Self {
        let mut parents = vec![-1i64];
        let mut digit_joints = [[0usize; 4]; 5];
        let mut carpal = [0usize; 4];
        for d in 0..5 {
            let mut parent = 0i64;
            if extra_carpal_joints && d > 0 {
                parents.push(0);
                carpal[d - 1] = parents.len() - 1;
                parent = (parents.len() - 1) as i64;
            }
            for slot in &mut digit_joints[d] {
                parents.push(parent);
                *slot = parents.len() - 1;
                parent = (parents.len() - 1) as i64;
            }
        }
        Self {
            num_joints: parents.len(),
            digit_joints,
            carpal_joints: extra_carpal_joints.then_some(carpal),
            parents,
        }
    }

    /// Joints kept when reducing to the 21-joint skeleton, in order.
    pub fn topology_map(&self) -> Vec<usize> {
        let mut map = vec![0];
        for d in &self.digit_joints {
            map.extend_from_slice(d);
        }
        map
    }
}

struct Mesh {
    vertices: Vec<[f64; 3]>,
    faces: Vec<[usize; 3]>,
    parts: Vec<Part>,
    weights: Vec<Vec<(usize, f64)>>,
    shape: Vec<Vec<[f64; 3]>>,
}

impl Mesh {
    fn push(&mut self, p: [f64; 3], part: Part, weights: Vec<(usize, f64)>, shape: Vec<[f64; 3]>) -> usize {
        self.vertices.push(p);
        self.parts.push(part);
        self.weights.push(weights);
        self.shape.push(shape);
        self.vertices.len() - 1
    }
}

fn add(a: [f64; 3], b: [f64; 3]) -> [f64; 3] {
    [a[0] + b[0], a[1] + b[1], a[2] + b[2]]
}

fn scale(a: [f64; 3], s: f64) -> [f64; 3] {
    [a[0] * s, a[1] * s, a[2] * s]
}

/// Shape displacement fields for a palm vertex.
fn palm_shape(p: [f64; 3]) -> Vec<[f64; 3]> {
    let mut fields = vec![[0.0; 3]; MAX_SHAPE_COMPONENTS];
    fields[0] = scale(p, 0.03);
    fields[3] = [0.06 * p[0], 0.0, 0.0];
    fields[4] = [0.0, 0.05 * p[1], 0.0];
    fields[5] = [0.0, 0.0, 0.25 * p[2]];
    fields
}

/// Shape displacement fields for a finger vertex at arclength `s` with radial
/// unit offset `radial`.
fn digit_shape(d: &Digit, p: [f64; 3], s: f64, radial: [f64; 3]) -> Vec<[f64; 3]> {
    let mut fields = vec![[0.0; 3]; MAX_SHAPE_COMPONENTS];
    fields[0] = scale(p, 0.03);
    if d.part != Part::Thumb {
        fields[1] = scale(d.dir, 0.08 * s);
        fields[3] = [0.06 * d.base[0], 0.0, 0.0];
        fields[4] = [0.0, 0.05 * PALM_LENGTH, 0.0];
        fields[8] = [0.1 * d.base[0], 0.0, 0.0];
    } else {
        fields[6] = scale(d.dir, 0.1 * s);
        fields[9] = [-0.003, -0.002, 0.0];
    }
    fields[2] = scale(radial, 0.001);
    match d.part {
        Part::Index => fields[7] = scale(d.dir, 0.08 * s),
        Part::Pinky => fields[7] = scale(d.dir, -0.08 * s),
        _ => {}
    }
    fields
}

/// Weights along a digit: each segment follows its proximal joint, blended
/// linearly across each inner joint.
fn digit_weights(joints: &[usize; 4], lengths: &[f64; 3], s: f64) -> Vec<(usize, f64)> {
    let b1 = lengths[0];
    let b2 = lengths[0] + lengths[1];
    for (boundary, lower, upper) in [(b1, joints[0], joints[1]), (b2, joints[1], joints[2])] {
        if (s - boundary).abs() < BLEND_HALF_WIDTH {
            let t = (s - boundary + BLEND_HALF_WIDTH) / (2.0 * BLEND_HALF_WIDTH);
            return vec![(lower, 1.0 - t), (upper, t)];
        }
    }
    let seg = if s < b1 {
        joints[0]
    } else if s < b2 {
        joints[1]
    } else {
        joints[2]
    };
    vec![(seg, 1.0)]
}

/// Builds the desk hand asset.
pub fn build_desk_hand(spec: &DeskHandSpec) -> ModelAsset {
    assert!(spec.ring_vertices >= 3, "ring needs at least 3 vertices");
    assert!(spec.stations_per_segment >= 1);
    assert!(spec.palm_grid.0 >= 2 && spec.palm_grid.1 >= 2);
    assert!(spec.shape_components <= MAX_SHAPE_COMPONENTS);
    let layout = DeskLayout::new(spec.extra_carpal_joints);
    let mut mesh = Mesh {
        vertices: vec![],
        faces: vec![],
        parts: vec![],
        weights: vec![],
        shape: vec![],
    };

    // Palm: two grids (front z = -h, back z = +h) joined by side walls.
    let (nx, ny) = spec.palm_grid;
    let grid_x = |i: usize| -PALM_HALF_WIDTH + 2.0 * PALM_HALF_WIDTH * i as f64 / (nx - 1) as f64;
    let grid_y = |k: usize| PALM_LENGTH * k as f64 / (ny - 1) as f64;
    let mut palm_index = [vec![0usize; nx * ny], vec![0usize; nx * ny]];
    for (side, z) in [(0usize, -PALM_HALF_THICKNESS), (1, PALM_HALF_THICKNESS)] {
        for k in 0..ny {
            for i in 0..nx {
                let p = [grid_x(i), grid_y(k), z];
                palm_index[side][k * nx + i] = mesh.push(p, Part::Palm, vec![(0, 1.0)], palm_shape(p));
            }
        }
    }
    for (side, index) in palm_index.iter().enumerate() {
        for k in 0..ny - 1 {
            for i in 0..nx - 1 {
                let a = index[k * nx + i];
                let b = index[k * nx + i + 1];
                let c = index[(k + 1) * nx + i + 1];
                let d = index[(k + 1) * nx + i];
                if side == 0 {
                    mesh.faces.push([a, c, b]);
                    mesh.faces.push([a, d, c]);
                } else {
                    mesh.faces.push([a, b, c]);
                    mesh.faces.push([a, c, d]);
                }
            }
        }
    }
    let mut boundary = Vec::new();
    boundary.extend(0..nx);
    boundary.extend((1..ny).map(|k| k * nx + nx - 1));
    boundary.extend((0..nx - 1).rev().map(|i| (ny - 1) * nx + i));
    boundary.extend((1..ny - 1).rev().map(|k| k * nx));
    for e in 0..boundary.len() {
        let (u, w) = (boundary[e], boundary[(e + 1) % boundary.len()]);
        let (fu, fw, bu, bw) = (palm_index[0][u], palm_index[0][w], palm_index[1][u], palm_index[1][w]);
        mesh.faces.push([fu, fw, bw]);
        mesh.faces.push([fu, bw, bu]);
    }

    // Digits.
    let ring = spec.ring_vertices;
    let mut digit_rings: Vec<Vec<Vec<usize>>> = Vec::new();
    let mut joint_ring_index: Vec<[usize; 4]> = Vec::new();
    for (d, digit) in digits().iter().enumerate() {
        let joints = layout.digit_joints[d];
        let side = [0.0, 0.0, 1.0];
        let across = normalize([
            digit.dir[1] * side[2] - digit.dir[2] * side[1],
            digit.dir[2] * side[0] - digit.dir[0] * side[2],
            digit.dir[0] * side[1] - digit.dir[1] * side[0],
        ]);
        let mut stations = Vec::new();
        let mut at_joint = [0usize; 4];
        let mut start = 0.0;
        for (seg, &len) in digit.lengths.iter().enumerate() {
            at_joint[seg] = stations.len();
            for i in 0..spec.stations_per_segment {
                stations.push(start + len * i as f64 / spec.stations_per_segment as f64);
            }
            start += len;
        }
        at_joint[3] = stations.len();
        stations.push(start);

        let mut rings = Vec::new();
        for &s in &stations {
            let center = add(digit.base, scale(digit.dir, s));
            let weights = digit_weights(&joints, &digit.lengths, s);
            let ids = (0..ring)
                .map(|a| {
                    let phi = 2.0 * PI * a as f64 / ring as f64;
                    let radial = add(scale(side, phi.cos()), scale(across, phi.sin()));
                    let p = add(center, scale(radial, digit.radius));
                    mesh.push(p, digit.part, weights.clone(), digit_shape(digit, p, s, radial))
                })
                .collect::<Vec<_>>();
            rings.push(ids);
        }
        for w in rings.windows(2) {
            for a in 0..ring {
                let b = (a + 1) % ring;
                mesh.faces.push([w[0][a], w[0][b], w[1][b]]);
                mesh.faces.push([w[0][a], w[1][b], w[1][a]]);
            }
        }
        let s_tip = start + 0.6 * digit.radius;
        let tip = add(digit.base, scale(digit.dir, s_tip));
        let cap = mesh.push(
            tip,
            digit.part,
            vec![(joints[2], 1.0)],
            digit_shape(digit, tip, s_tip, [0.0; 3]),
        );
        let last = rings.last().expect("rings");
        for a in 0..ring {
            let b = (a + 1) % ring;
            mesh.faces.push([last[a], last[b], cap]);
        }
        joint_ring_index.push(at_joint);
        digit_rings.push(rings);
    }

    let v = mesh.vertices.len();
    let j = layout.num_joints;

    let mut regressor = vec![vec![0.0; v]; j];
    let palm_point = |x: f64, y: f64, row: &mut Vec<f64>| {
        let fx = (x + PALM_HALF_WIDTH) / (2.0 * PALM_HALF_WIDTH) * (nx - 1) as f64;
        let fy = y / PALM_LENGTH * (ny - 1) as f64;
        let i0 = (fx.floor() as usize).min(nx - 2);
        let k0 = (fy.floor() as usize).min(ny - 2);
        let (tx, ty) = (fx - i0 as f64, fy - k0 as f64);
        for side in 0..2 {
            for (di, dk, w) in [
                (0, 0, (1.0 - tx) * (1.0 - ty)),
                (1, 0, tx * (1.0 - ty)),
                (0, 1, (1.0 - tx) * ty),
                (1, 1, tx * ty),
            ] {
                row[palm_index[side][(k0 + dk) * nx + i0 + di]] += 0.5 * w;
            }
        }
    };
    palm_point(0.0, 0.0, &mut regressor[0]);
    let all_digits = digits();
    if let Some(carpal) = layout.carpal_joints {
        for (f, &jc) in carpal.iter().enumerate() {
            palm_point(all_digits[f + 1].base[0], 0.3 * PALM_LENGTH, &mut regressor[jc]);
        }
    }
    for d in 0..5 {
        for k in 0..4 {
            let ids = &digit_rings[d][joint_ring_index[d][k]];
            for &id in ids {
                regressor[layout.digit_joints[d][k]][id] = 1.0 / ring as f64;
            }
        }
    }

    let skin_weights = mesh
        .weights
        .iter()
        .map(|ws| {
            let mut row = vec![0.0; j];
            for &(k, w) in ws {
                row[k] += w;
            }
            row
        })
        .collect();

    let shape_blend = mesh
        .shape
        .iter()
        .map(|fields| {
            (0..3)
                .map(|c| fields[..spec.shape_components].iter().map(|f| f[c]).collect())
                .collect()
        })
        .collect();

    let topology_map = if spec.extra_carpal_joints {
        layout.topology_map()
    } else {
        (0..j).collect()
    };

    ModelAsset {
        schema: MODEL_SCHEMA.to_string(),
        name: if spec.extra_carpal_joints {
            "desk-hand-25".into()
        } else {
            "desk-hand-21".into()
        },
        rest_vertices: mesh.vertices,
        faces: mesh.faces,
        skin_weights,
        kinematic_tree: layout.parents.clone(),
        shape_blend,
        pose_blend: None,
        joint_regressor: regressor,
        topology_map: Some(topology_map),
        part_labels: mesh.parts.iter().map(|p| p.index() as u8).collect(),
    }
}

/// Pose vector for the desk hand driven by two factors: `curl` flexes every
/// articulated digit joint towards the palm normal and `spread` fans the
/// fingers apart at their base. Both are in radians.
pub fn curl_spread_pose(layout: &DeskLayout, curl: f64, spread: f64) -> Vec<f64> {
    let mut pose = vec![0.0; 3 * (layout.num_joints - 1)];
    let fan = [0.0, -1.0, -0.35, 0.35, 1.0];
    for (d, joints) in layout.digit_joints.iter().enumerate() {
        for (k, &jk) in joints[..3].iter().enumerate() {
            let base = 3 * (jk - 1);
            // Flexion about the digit's across axis (x for straight fingers).
            let flex = if d == 0 { 0.6 * curl } else { curl * [1.0, 1.1, 0.8][k] };
            pose[base] += flex;
            if k == 0 {
                pose[base + 2] += spread * fan[d];
            }
        }
    }
    pose
}

/// Minimal two-joint asset: a root quad at `y = 0` and a child quad at
/// `y = 1`, each rigidly bound to its own joint. No shape components.
pub fn two_bone_asset() -> ModelAsset {
    let mut rest_vertices = Vec::new();
    for y in [0.0, 1.0] {
        for (x, z) in [(-0.1, -0.1), (0.1, -0.1), (0.1, 0.1), (-0.1, 0.1)] {
            rest_vertices.push([x, y, z]);
        }
    }
    let skin_weights = (0..8)
        .map(|i| if i < 4 { vec![1.0, 0.0] } else { vec![0.0, 1.0] })
        .collect();
    let joint_regressor = vec![
        (0..8).map(|i| if i < 4 { 0.25 } else { 0.0 }).collect(),
        (0..8).map(|i| if i < 4 { 0.0 } else { 0.25 }).collect(),
    ];
    let faces = vec![
        [0, 1, 5],
        [0, 5, 4],
        [1, 2, 6],
        [1, 6, 5],
        [2, 3, 7],
        [2, 7, 6],
        [3, 0, 4],
        [3, 4, 7],
    ];
    ModelAsset {
        schema: MODEL_SCHEMA.to_string(),
        name: "two-bone".into(),
        rest_vertices,
        faces,
        skin_weights,
        kinematic_tree: vec![-1, 0],
        shape_blend: vec![vec![vec![]; 3]; 8],
        pose_blend: None,
        joint_regressor,
        topology_map: Some(vec![0, 1]),
        part_labels: vec![5, 5, 5, 5, 1, 1, 1, 1],
    }
}
