use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

pub type Mat3 = [[f64; 3]; 3];

/// Six-parameter rigid map from moving-volume physical space to fixed-volume
/// physical space:
///
/// `x_fixed = R * (x_moving - center) + center + translation`
///
/// with `R = Rz(rz) * Ry(ry) * Rx(rx)` (rotate about x first, then y, then z).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RigidTransform {
    /// `(rx, ry, rz)` in radians, each wrapped into `(-pi, pi]`.
    pub rotation: [f64; 3],
    /// Millimetres.
    pub translation: [f64; 3],
    /// Rotation centre in fixed-volume physical coordinates (mm).
    pub center: [f64; 3],
}

/// Wrap an angle into `(-pi, pi]`.
pub fn wrap_angle(a: f64) -> f64 {
    let mut x = a % (2.0 * PI);
    if x <= -PI {
        x += 2.0 * PI;
    } else if x > PI {
        x -= 2.0 * PI;
    }
    x
}

pub fn rotation_matrix(r: [f64; 3]) -> Mat3 {
    let (sx, cx) = r[0].sin_cos();
    let (sy, cy) = r[1].sin_cos();
    let (sz, cz) = r[2].sin_cos();
    [
        [cz * cy, cz * sy * sx - sz * cx, cz * sy * cx + sz * sx],
        [sz * cy, sz * sy * sx + cz * cx, sz * sy * cx - cz * sx],
        [-sy, cy * sx, cy * cx],
    ]
}

/// Angles `(rx, ry, rz)` with `rotation_matrix(angles) == m`.
pub fn matrix_to_angles(m: &Mat3) -> [f64; 3] {
    let sy = (-m[2][0]).clamp(-1.0, 1.0);
    let ry = sy.asin();
    if sy.abs() < 1.0 - 1e-12 {
        let rx = m[2][1].atan2(m[2][2]);
        let rz = m[1][0].atan2(m[0][0]);
        [wrap_angle(rx), wrap_angle(ry), wrap_angle(rz)]
    } else {
        // Gimbal lock: only rz - rx (or rz + rx) is determined; put it all in rz.
        let rz = (-m[0][1]).atan2(m[1][1]);
        [0.0, wrap_angle(ry), wrap_angle(rz)]
    }
}

#[inline]
pub fn mat_vec(m: &Mat3, v: [f64; 3]) -> [f64; 3] {
    std::array::from_fn(|r| m[r][0] * v[0] + m[r][1] * v[1] + m[r][2] * v[2])
}

#[inline]
pub fn transpose(m: &Mat3) -> Mat3 {
    std::array::from_fn(|r| std::array::from_fn(|c| m[c][r]))
}

impl RigidTransform {
    pub fn identity(center: [f64; 3]) -> Self {
        Self {
            rotation: [0.0; 3],
            translation: [0.0; 3],
            center,
        }
    }

    pub fn new(rotation: [f64; 3], translation: [f64; 3], center: [f64; 3]) -> Self {
        Self {
            rotation: rotation.map(wrap_angle),
            translation,
            center,
        }
    }

    /// `[rx, ry, rz, tx, ty, tz]`
    pub fn params(&self) -> [f64; 6] {
        [
            self.rotation[0],
            self.rotation[1],
            self.rotation[2],
            self.translation[0],
            self.translation[1],
            self.translation[2],
        ]
    }

    pub fn from_params(p: [f64; 6], center: [f64; 3]) -> Self {
        Self::new([p[0], p[1], p[2]], [p[3], p[4], p[5]], center)
    }

    pub fn is_valid(&self) -> bool {
        self.rotation
            .iter()
            .all(|&a| a.is_finite() && a > -PI && a <= PI)
            && self.translation.iter().all(|t| t.is_finite())
            && self.center.iter().all(|c| c.is_finite())
    }

    pub fn matrix(&self) -> Mat3 {
        rotation_matrix(self.rotation)
    }

    /// Moving -> fixed.
    pub fn apply(&self, p: [f64; 3]) -> [f64; 3] {
        let r = self.matrix();
        let d = std::array::from_fn(|a| p[a] - self.center[a]);
        let q = mat_vec(&r, d);
        std::array::from_fn(|a| q[a] + self.center[a] + self.translation[a])
    }

    /// Fixed -> moving.
    pub fn apply_inverse(&self, p: [f64; 3]) -> [f64; 3] {
        let rt = transpose(&self.matrix());
        let d = std::array::from_fn(|a| p[a] - self.center[a] - self.translation[a]);
        let q = mat_vec(&rt, d);
        std::array::from_fn(|a| q[a] + self.center[a])
    }

    /// Analytic inverse about the same centre.
    pub fn inverse(&self) -> RigidTransform {
        let rt = transpose(&self.matrix());
        let t = mat_vec(&rt, self.translation);
        RigidTransform {
            rotation: matrix_to_angles(&rt),
            translation: t.map(|v| -v),
            center: self.center,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn close(a: [f64; 3], b: [f64; 3], tol: f64) -> bool {
        (0..3).all(|i| (a[i] - b[i]).abs() <= tol)
    }

    #[test]
    fn rotation_about_z() {
        let t = RigidTransform::new([0.0, 0.0, PI / 2.0], [0.0; 3], [0.0; 3]);
        assert!(close(t.apply([1.0, 0.0, 0.0]), [0.0, 1.0, 0.0], 1e-12));
    }

    #[test]
    fn order_is_x_then_y_then_z() {
        let r = rotation_matrix([0.3, -0.2, 0.7]);
        let rx = rotation_matrix([0.3, 0.0, 0.0]);
        let ry = rotation_matrix([0.0, -0.2, 0.0]);
        let rz = rotation_matrix([0.0, 0.0, 0.7]);
        let v = [1.0, 2.0, 3.0];
        let composed = mat_vec(&rz, mat_vec(&ry, mat_vec(&rx, v)));
        assert!(close(mat_vec(&r, v), composed, 1e-12));
    }

    #[test]
    fn wrap() {
        assert!((wrap_angle(PI) - PI).abs() < 1e-15);
        assert!((wrap_angle(-PI) - PI).abs() < 1e-15);
        assert!((wrap_angle(3.0 * PI / 2.0) + PI / 2.0).abs() < 1e-12);
    }

    proptest! {
        #[test]
        fn inverse_roundtrip(rx in -1.4f64..1.4, ry in -1.4f64..1.4, rz in -3.0f64..3.0,
                             t in prop::array::uniform3(-50.0f64..50.0),
                             c in prop::array::uniform3(-100.0f64..100.0),
                             p in prop::array::uniform3(-100.0f64..100.0)) {
            let tr = RigidTransform::new([rx, ry, rz], t, c);
            let inv = tr.inverse();
            prop_assert!(inv.is_valid());
            prop_assert!(close(inv.apply(tr.apply(p)), p, 1e-8));
            prop_assert!(close(tr.apply_inverse(tr.apply(p)), p, 1e-8));
            prop_assert!(close(inv.apply(p), tr.apply_inverse(p), 1e-8));
        }

        #[test]
        fn angles_roundtrip(rx in -3.0f64..3.0, ry in -1.5f64..1.5, rz in -3.0f64..3.0) {
            let m = rotation_matrix([rx, ry, rz]);
            let back = rotation_matrix(matrix_to_angles(&m));
            for r in 0..3 {
                for c in 0..3 {
                    prop_assert!((m[r][c] - back[r][c]).abs() < 1e-9);
                }
            }
        }
    }
}
