//! Axis-angle rotations and their derivatives.

pub type Mat3 = [[f64; 3]; 3];

pub const IDENTITY: Mat3 = [[1.0, 0.0, 0.0], [0.0, 1.0, 0.0], [0.0, 0.0, 1.0]];

// Below this angle the closed forms lose precision to cancellation.
const SERIES_ANGLE: f64 = 0.05;

/// Coefficients of `R = I + a K + b K^2` and their radial derivatives
/// `(da/dθ)/θ`, `(db/dθ)/θ`, as functions of θ².
fn coefficients(theta2: f64) -> (f64, f64, f64, f64) {
    if theta2 < SERIES_ANGLE * SERIES_ANGLE {
        let t = theta2;
        let a = 1.0 - t / 6.0 + t * t / 120.0 - t * t * t / 5040.0 + t * t * t * t / 362_880.0;
        let b = 0.5 - t / 24.0 + t * t / 720.0 - t * t * t / 40_320.0 + t * t * t * t / 3_628_800.0;
        let da = -1.0 / 3.0 + t / 30.0 - t * t / 840.0 + t * t * t / 45_360.0;
        let db = -1.0 / 12.0 + t / 180.0 - t * t / 6720.0 + t * t * t / 453_600.0;
        (a, b, da, db)
    } else {
        let theta = theta2.sqrt();
        let (s, c) = theta.sin_cos();
        let half = (0.5 * theta).sin();
        let one_minus_cos = 2.0 * half * half;
        let a = s / theta;
        let b = one_minus_cos / theta2;
        let da = (theta * c - s) / (theta2 * theta);
        let db = (theta * s - 2.0 * one_minus_cos) / (theta2 * theta2);
        (a, b, da, db)
    }
}

pub fn skew(v: [f64; 3]) -> Mat3 {
    [[0.0, -v[2], v[1]], [v[2], 0.0, -v[0]], [-v[1], v[0], 0.0]]
}

pub fn matmul3(a: &Mat3, b: &Mat3) -> Mat3 {
    let mut out = [[0.0; 3]; 3];
    for i in 0..3 {
        for j in 0..3 {
            out[i][j] = a[i][0] * b[0][j] + a[i][1] * b[1][j] + a[i][2] * b[2][j];
        }
    }
    out
}

pub fn transpose3(a: &Mat3) -> Mat3 {
    let mut out = [[0.0; 3]; 3];
    for i in 0..3 {
        for j in 0..3 {
            out[i][j] = a[j][i];
        }
    }
    out
}

pub fn apply3(m: &Mat3, v: [f64; 3]) -> [f64; 3] {
    [
        m[0][0] * v[0] + m[0][1] * v[1] + m[0][2] * v[2],
        m[1][0] * v[0] + m[1][1] * v[1] + m[1][2] * v[2],
        m[2][0] * v[0] + m[2][1] * v[1] + m[2][2] * v[2],
    ]
}

/// Rotation matrix for an axis-angle vector (Rodrigues' formula).
pub fn rodrigues(r: [f64; 3]) -> Mat3 {
    let theta2 = r[0] * r[0] + r[1] * r[1] + r[2] * r[2];
    let (a, b, _, _) = coefficients(theta2);
    let k = skew(r);
    let k2 = matmul3(&k, &k);
    let mut out = IDENTITY;
    for i in 0..3 {
        for j in 0..3 {
            out[i][j] += a * k[i][j] + b * k2[i][j];
        }
    }
    out
}

/// `∂R/∂r_i` for each of the three axis-angle components.
pub fn rodrigues_jacobian(r: [f64; 3]) -> [Mat3; 3] {
    let theta2 = r[0] * r[0] + r[1] * r[1] + r[2] * r[2];
    let (a, b, da, db) = coefficients(theta2);
    let k = skew(r);
    let k2 = matmul3(&k, &k);
    let mut out = [[[0.0; 3]; 3]; 3];
    for (i, d) in out.iter_mut().enumerate() {
        let mut e = [0.0; 3];
        e[i] = 1.0;
        let ei = skew(e);
        let ek = matmul3(&ei, &k);
        let ke = matmul3(&k, &ei);
        for p in 0..3 {
            for q in 0..3 {
                d[p][q] = da * r[i] * k[p][q] + a * ei[p][q] + db * r[i] * k2[p][q] + b * (ek[p][q] + ke[p][q]);
            }
        }
    }
    out
}

/// Axis-angle vector of a rotation matrix (inverse of [`rodrigues`]),
/// with angle in `[0, π]`.
pub fn log_map(m: &Mat3) -> [f64; 3] {
    let trace = m[0][0] + m[1][1] + m[2][2];
    let cos = ((trace - 1.0) * 0.5).clamp(-1.0, 1.0);
    let w = [m[2][1] - m[1][2], m[0][2] - m[2][0], m[1][0] - m[0][1]];
    let sin2 = (w[0] * w[0] + w[1] * w[1] + w[2] * w[2]).sqrt(); // 2 sin θ
    let theta = (0.5 * sin2).atan2(cos);
    if theta < 1e-8 {
        return [0.5 * w[0], 0.5 * w[1], 0.5 * w[2]];
    }
    if std::f64::consts::PI - theta > 1e-6 {
        let f = theta / sin2;
        return [f * w[0], f * w[1], f * w[2]];
    }
    // Near π: recover the axis from the symmetric part.
    let mut axis = [0.0; 3];
    let diag = [m[0][0], m[1][1], m[2][2]];
    let i = (0..3).max_by(|&a, &b| diag[a].total_cmp(&diag[b])).unwrap_or(0);
    let j = (i + 1) % 3;
    let k = (i + 2) % 3;
    let ai = ((diag[i] - diag[j] - diag[k] + 1.0) * 0.5).max(0.0).sqrt();
    axis[i] = ai;
    if ai > 1e-12 {
        axis[j] = (m[i][j] + m[j][i]) / (4.0 * ai);
        axis[k] = (m[i][k] + m[k][i]) / (4.0 * ai);
    }
    let n = (axis[0] * axis[0] + axis[1] * axis[1] + axis[2] * axis[2]).sqrt();
    // Orient the axis to agree with the antisymmetric part where it is informative.
    let sign = if axis[0] * w[0] + axis[1] * w[1] + axis[2] * w[2] < 0.0 {
        -1.0
    } else {
        1.0
    };
    [
        sign * theta * axis[0] / n,
        sign * theta * axis[1] / n,
        sign * theta * axis[2] / n,
    ]
}

#[cfg(test)]
mod tests {
    use super::*;

    fn close(a: &Mat3, b: &Mat3, tol: f64) -> bool {
        (0..3).all(|i| (0..3).all(|j| (a[i][j] - b[i][j]).abs() <= tol))
    }

    #[test]
    fn quarter_turn_about_z() {
        let r = rodrigues([0.0, 0.0, std::f64::consts::FRAC_PI_2]);
        let expected = [[0.0, -1.0, 0.0], [1.0, 0.0, 0.0], [0.0, 0.0, 1.0]];
        assert!(close(&r, &expected, 1e-15));
    }

    #[test]
    fn series_and_closed_form_agree_at_the_switch() {
        let below = [0.0, SERIES_ANGLE * (1.0 - 1e-9), 0.0];
        let above = [0.0, SERIES_ANGLE * (1.0 + 1e-9), 0.0];
        let (ra, rb) = (rodrigues(below), rodrigues(above));
        assert!(close(&ra, &rb, 1e-9));
        let (ja, jb) = (rodrigues_jacobian(below), rodrigues_jacobian(above));
        for i in 0..3 {
            assert!(close(&ja[i], &jb[i], 1e-9));
        }
    }

    #[test]
    fn jacobian_matches_finite_differences() {
        let h = 1e-6;
        for r in [[0.3, -0.2, 0.9], [1e-4, 2e-4, -1e-4], [0.0, 0.0, 0.0], [2.0, 1.0, -2.5]] {
            let jac = rodrigues_jacobian(r);
            for i in 0..3 {
                let mut rp = r;
                let mut rm = r;
                rp[i] += h;
                rm[i] -= h;
                let (p, m) = (rodrigues(rp), rodrigues(rm));
                for a in 0..3 {
                    for b in 0..3 {
                        let fd = (p[a][b] - m[a][b]) / (2.0 * h);
                        assert!((fd - jac[i][a][b]).abs() < 1e-8, "r={r:?} i={i}");
                    }
                }
            }
        }
    }

    #[test]
    fn log_map_inverts_rodrigues() {
        for r in [[0.3, -0.2, 0.9], [1e-9, 0.0, 0.0], [0.0, 3.1, 0.0], [-1.0, 1.0, 1.0]] {
            let back = log_map(&rodrigues(r));
            assert!(close(&rodrigues(back), &rodrigues(r), 1e-9), "{r:?} -> {back:?}");
        }
    }
}
