use nalgebra::{Matrix3, UnitQuaternion, Vector3};

pub type Rotation = UnitQuaternion<f64>;

/// Skew matrix with `hat(a) b = a × b`.
pub fn hat(v: &Vector3<f64>) -> Matrix3<f64> {
    Matrix3::new(0.0, -v.z, v.y, v.z, 0.0, -v.x, -v.y, v.x, 0.0)
}

pub fn exp_map(v: &Vector3<f64>) -> Rotation {
    Rotation::from_scaled_axis(*v)
}

pub fn log_map(q: &Rotation) -> Vector3<f64> {
    q.scaled_axis()
}

/// Right Jacobian: `exp(φ + δ) ≈ exp(φ) exp(J_r(φ) δ)`.
pub fn right_jacobian(phi: &Vector3<f64>) -> Matrix3<f64> {
    let t2 = phi.norm_squared();
    let t = t2.sqrt();
    let (a, b) = if t < 1e-4 {
        (0.5 - t2 / 24.0, 1.0 / 6.0 - t2 / 120.0)
    } else {
        ((1.0 - t.cos()) / t2, (t - t.sin()) / (t2 * t))
    };
    let k = hat(phi);
    Matrix3::identity() - k * a + k * k * b
}

pub fn right_jacobian_inv(phi: &Vector3<f64>) -> Matrix3<f64> {
    let t2 = phi.norm_squared();
    let t = t2.sqrt();
    let c = if t < 1e-4 {
        1.0 / 12.0 + t2 / 720.0
    } else {
        1.0 / t2 - (1.0 + t.cos()) / (2.0 * t * t.sin())
    };
    let k = hat(phi);
    Matrix3::identity() + k * 0.5 + k * k * c
}
