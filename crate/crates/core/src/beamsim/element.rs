//! Two-node geodesic beam element.
//!
//! Rotations are interpolated along the geodesic between the nodal frames, so
//! the curvature is constant per element, and the shear/axial strain is taken
//! at the midpoint frame. Both measures are invariant under rigid motions.
//! Nodal variations are spatial: `δr` and `R ← exp(θ) R`.

use nalgebra::{Matrix3, SMatrix, Vector3};

use super::rotation::{exp_map, hat, log_map, right_jacobian, right_jacobian_inv, Rotation};
use crate::section::StrainState;

/// `∂p/∂(δr_a, θ_a, δr_b, θ_b)`.
pub type StrainJacobian = SMatrix<f64, 6, 12>;

pub fn element_strain(ra: &Vector3<f64>, qa: &Rotation, rb: &Vector3<f64>, qb: &Rotation, h: f64) -> StrainState {
    let phi = log_map(&(qa.inverse() * qb));
    let qm = qa * exp_map(&(phi * 0.5));
    let eps = qm.inverse() * ((rb - ra) / h) - Vector3::z();
    StrainState {
        eps,
        kappa: phi / h,
    }
}

pub fn element_kinematics(
    ra: &Vector3<f64>,
    qa: &Rotation,
    rb: &Vector3<f64>,
    qb: &Rotation,
    h: f64,
) -> (StrainState, StrainJacobian) {
    let phi = log_map(&(qa.inverse() * qb));
    let qm = qa * exp_map(&(phi * 0.5));
    let rm_t = qm.inverse().to_rotation_matrix().into_inner();
    let rb_t = qb.inverse().to_rotation_matrix().into_inner();
    let stretch = rm_t * ((rb - ra) / h);
    let p = StrainState {
        eps: stretch - Vector3::z(),
        kappa: phi / h,
    };
    // δΦ = Jinv R_bᵀ (θ_b − θ_a)
    let dphi = right_jacobian_inv(&phi) * rb_t;
    // Midpoint material spin: w_m = R_mᵀ θ_a + ½ J_r(Φ/2) δΦ
    let half = right_jacobian(&(phi * 0.5)) * dphi * 0.5;
    let wa: Matrix3<f64> = rm_t - half;
    let wb: Matrix3<f64> = half;
    let s = hat(&stretch);
    let mut b = StrainJacobian::zeros();
    b.fixed_view_mut::<3, 3>(0, 0).copy_from(&(-rm_t / h));
    b.fixed_view_mut::<3, 3>(0, 6).copy_from(&(rm_t / h));
    b.fixed_view_mut::<3, 3>(0, 3).copy_from(&(s * wa));
    b.fixed_view_mut::<3, 3>(0, 9).copy_from(&(s * wb));
    b.fixed_view_mut::<3, 3>(3, 3).copy_from(&(-dphi / h));
    b.fixed_view_mut::<3, 3>(3, 9).copy_from(&(dphi / h));
    (p, b)
}
