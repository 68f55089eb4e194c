//! Similarity (scaled orthogonal Procrustes) alignment.

use nalgebra::{Matrix3, Vector3};
use ndarray::Array2;
use serde::{Deserialize, Serialize};

use crate::error::{shape_err, Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct SimilarityTransform {
    pub scale: f64,
    /// Row-major proper rotation.
    pub rotation: [[f64; 3]; 3],
    pub translation: [f64; 3],
}

impl SimilarityTransform {
    pub fn identity() -> Self {
        Self {
            scale: 1.0,
            rotation: [[1.0, 0.0, 0.0], [0.0, 1.0, 0.0], [0.0, 0.0, 1.0]],
            translation: [0.0; 3],
        }
    }

    /// `s·R·x + t` for every row `x`.
    pub fn apply(&self, points: &Array2<f64>) -> Array2<f64> {
        let r = &self.rotation;
        let mut out = Array2::zeros(points.dim());
        for (src, mut dst) in points.rows().into_iter().zip(out.rows_mut()) {
            for a in 0..3 {
                let rx = r[a][0] * src[0] + r[a][1] * src[1] + r[a][2] * src[2];
                dst[a] = self.scale * rx + self.translation[a];
            }
        }
        out
    }
}

fn to_vectors(a: &Array2<f64>) -> Vec<Vector3<f64>> {
    a.rows().into_iter().map(|r| Vector3::new(r[0], r[1], r[2])).collect()
}

fn centered(points: &[Vector3<f64>]) -> (Vector3<f64>, Vec<Vector3<f64>>) {
    let mean = points.iter().sum::<Vector3<f64>>() / points.len() as f64;
    (mean, points.iter().map(|p| p - mean).collect())
}

fn spread(points: &[Vector3<f64>]) -> Matrix3<f64> {
    points.iter().map(|p| p * p.transpose()).sum()
}

/// Relative size below which a singular value counts as zero.
const RANK_TOLERANCE: f64 = 1e-10;

fn rank(points: &[Vector3<f64>]) -> usize {
    let sv = spread(points).singular_values();
    let top = sv.max();
    if top <= f64::MIN_POSITIVE {
        return 0;
    }
    sv.iter().filter(|&&s| s > RANK_TOLERANCE * top).count()
}

/// Similarity transform minimizing `Σ‖s·R·source_k + t − target_k‖²` over
/// proper rotations.
pub fn procrustes_align(source: &Array2<f64>, target: &Array2<f64>) -> Result<SimilarityTransform> {
    if source.dim() != target.dim() || source.ncols() != 3 {
        return Err(shape_err(
            "procrustes",
            format!("two Kx3 arrays, source {:?}", source.dim()),
            format!("target {:?}", target.dim()),
        ));
    }
    let k = source.nrows();
    if k < 3 {
        return Err(Error::Degenerate(format!("alignment needs at least 3 points, got {k}")));
    }
    if source.iter().chain(target.iter()).any(|v| !v.is_finite()) {
        return Err(Error::InvalidInput("alignment input contains non-finite values".into()));
    }
    let (mu_s, xs) = centered(&to_vectors(source));
    let (mu_t, xt) = centered(&to_vectors(target));
    let source_rank = rank(&xs);
    if source_rank < 2 {
        return Err(Error::Degenerate(format!(
            "source points have rank {source_rank} after centering (need 2: not all collinear)"
        )));
    }
    if rank(&xt) == 0 {
        return Err(Error::Degenerate("target points all coincide (rank 0)".into()));
    }

    let var_s: f64 = xs.iter().map(|p| p.norm_squared()).sum::<f64>();
    let cov: Matrix3<f64> = xt.iter().zip(&xs).map(|(t, s)| t * s.transpose()).sum();
    let svd = cov.svd(true, true);
    let u = svd.u.expect("requested U");
    let v_t = svd.v_t.expect("requested Vᵀ");
    let d = (u * v_t).determinant().signum();
    let fix = Matrix3::from_diagonal(&Vector3::new(1.0, 1.0, d));
    let rot = u * fix * v_t;
    let trace = svd.singular_values[0] + svd.singular_values[1] + d * svd.singular_values[2];
    let scale = trace / var_s;
    let t = mu_t - scale * rot * mu_s;
    Ok(SimilarityTransform {
        scale,
        rotation: [
            [rot[(0, 0)], rot[(0, 1)], rot[(0, 2)]],
            [rot[(1, 0)], rot[(1, 1)], rot[(1, 2)]],
            [rot[(2, 0)], rot[(2, 1)], rot[(2, 2)]],
        ],
        translation: [t[0], t[1], t[2]],
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;

    fn square() -> Array2<f64> {
        array![[0.0, 0.0, 0.0], [1.0, 0.0, 0.0], [1.0, 1.0, 0.0], [0.0, 1.0, 0.3]]
    }

    #[test]
    fn identity_alignment() {
        let t = procrustes_align(&square(), &square()).unwrap();
        assert!((t.scale - 1.0).abs() < 1e-12);
        let id = SimilarityTransform::identity();
        for a in 0..3 {
            assert!((t.translation[a]).abs() < 1e-12);
            for b in 0..3 {
                assert!((t.rotation[a][b] - id.rotation[a][b]).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn recovers_a_constructed_transform() {
        let truth = SimilarityTransform {
            scale: 2.0,
            rotation: [[0.0, -1.0, 0.0], [1.0, 0.0, 0.0], [0.0, 0.0, 1.0]],
            translation: [1.0, 0.0, 0.0],
        };
        let src = square();
        let dst = truth.apply(&src);
        let t = procrustes_align(&src, &dst).unwrap();
        let residual: f64 = (&t.apply(&src) - &dst).iter().map(|d| d * d).sum::<f64>().sqrt();
        assert!(residual < 1e-9);
        assert!((t.scale - 2.0).abs() < 1e-12);
    }

    #[test]
    fn collinear_source_is_degenerate() {
        let line = array![[0.0, 0.0, 0.0], [1.0, 1.0, 1.0], [2.0, 2.0, 2.0]];
        let err = procrustes_align(&line, &square().slice(ndarray::s![..3, ..]).to_owned()).unwrap_err();
        assert!(err.to_string().contains("rank 1"), "{err}");
        assert!(procrustes_align(&square(), &Array2::zeros((4, 3))).is_err());
    }
}
