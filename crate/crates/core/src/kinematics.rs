//! Gimbal and slide kinematics shared by the plant and the wire model.
//!
//! The leg hangs from the body origin through a roll-then-pitch gimbal:
//! `R_leg = R_body * Rx(q_r) * Ry(q_p)`. Points on the leg are given in leg
//! coordinates measured from the foot tip along the leg axis, so a leg point
//! `c` sits at `Rx(q_r) Ry(q_p) (c + (q_s - foot_offset) e_z)` in the body
//! frame. Increasing `q_s` retracts the leg (the foot moves toward the body).

use nalgebra::{Matrix3, Vector3};

pub fn rot_x(a: f64) -> Matrix3<f64> {
    let (s, c) = a.sin_cos();
    Matrix3::new(1.0, 0.0, 0.0, 0.0, c, -s, 0.0, s, c)
}

pub fn rot_y(a: f64) -> Matrix3<f64> {
    let (s, c) = a.sin_cos();
    Matrix3::new(c, 0.0, s, 0.0, 1.0, 0.0, -s, 0.0, c)
}

pub fn skew(v: &Vector3<f64>) -> Matrix3<f64> {
    Matrix3::new(0.0, -v.z, v.y, v.z, 0.0, -v.x, -v.y, v.x, 0.0)
}

/// Leg orientation relative to the body.
pub fn gimbal_rotation(q: &Vector3<f64>) -> Matrix3<f64> {
    rot_x(q.x) * rot_y(q.y)
}

/// Body-frame position of a point fixed on the leg.
pub fn leg_point_in_body(q: &Vector3<f64>, point: &Vector3<f64>, foot_offset: f64) -> Vector3<f64> {
    gimbal_rotation(q) * (point + Vector3::z() * (q.z - foot_offset))
}

/// Partial derivatives of [`leg_point_in_body`] with respect to `(q_r, q_p, q_s)`, one per column.
pub fn leg_point_jacobian(q: &Vector3<f64>, point: &Vector3<f64>, foot_offset: f64) -> Matrix3<f64> {
    let rx = rot_x(q.x);
    let ry = rot_y(q.y);
    let rho = point + Vector3::z() * (q.z - foot_offset);
    let ry_rho = ry * rho;
    let d_roll = Vector3::x().cross(&(rx * ry_rho));
    let d_pitch = rx * Vector3::y().cross(&ry_rho);
    let d_slide = rx * ry * Vector3::z();
    Matrix3::from_columns(&[d_roll, d_pitch, d_slide])
}

/// Re-orthonormalizes a near-rotation matrix by Gram-Schmidt on its first two columns.
pub fn orthonormalize(r: &Matrix3<f64>) -> Matrix3<f64> {
    let x = r.column(0).normalize();
    let y0 = r.column(1).into_owned();
    let y = (y0 - x * x.dot(&y0)).normalize();
    let z = x.cross(&y);
    Matrix3::from_columns(&[x, y, z])
}

/// Body roll/pitch (x-then-y Euler, extracted from a ZYX decomposition) used for posture feedback.
pub fn tilt_angles(r: &Matrix3<f64>) -> (f64, f64) {
    let roll = r[(2, 1)].atan2(r[(2, 2)]);
    let pitch = (-r[(2, 0)]).clamp(-1.0, 1.0).asin();
    (roll, pitch)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn jacobian_matches_central_differences() {
        let c = 1.063;
        let point = Vector3::new(0.03, -0.04, 1.05);
        for q in [
            Vector3::new(0.3, -0.2, 0.5),
            Vector3::new(-0.7, 0.6, 0.15),
            Vector3::new(0.0, 0.0, 0.9),
        ] {
            let j = leg_point_jacobian(&q, &point, c);
            let h = 1e-6;
            for k in 0..3 {
                let mut qp = q;
                let mut qm = q;
                qp[k] += h;
                qm[k] -= h;
                let fd = (leg_point_in_body(&qp, &point, c) - leg_point_in_body(&qm, &point, c)) / (2.0 * h);
                assert!((fd - j.column(k)).amax() < 1e-8, "column {k}");
            }
        }
    }

    #[test]
    fn orthonormalize_restores_rotation() {
        let mut r = rot_x(0.4) * rot_y(-1.1);
        r[(0, 1)] += 1e-6;
        r[(2, 2)] -= 3e-7;
        let o = orthonormalize(&r);
        assert!((o.transpose() * o - Matrix3::identity()).amax() < 1e-14);
        assert!((o.determinant() - 1.0).abs() < 1e-14);
    }
}
