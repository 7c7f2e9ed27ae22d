//! Transversely isotropic strain invariants and the point-symmetry reflection.

use nalgebra::{Matrix6, SMatrix, SVector};

use crate::section::StrainState;

pub type Invariants = SVector<f64, 7>;
pub type InvariantJacobian = SMatrix<f64, 7, 6>;

/// Strain components negated by the point-symmetry map.
pub const MIRRORED: [usize; 4] = [0, 1, 3, 4];

/// Sign pattern of the point-symmetry map.
pub const MIRROR_SIGNS: [f64; 6] = [-1.0, -1.0, 1.0, -1.0, -1.0, 1.0];

/// Linear functional whose sign selects the half-space of the reflection.
pub fn hyperplane(p: &StrainState) -> f64 {
    p.eps.x + p.eps.y + p.kappa.x + p.kappa.y
}

/// Maps `p` into the half-space `f ≥ 0`; returns whether it was reflected.
pub fn reflect(p: &StrainState) -> (StrainState, bool) {
    if hyperplane(p) < 0.0 {
        (p.mirrored(), true)
    } else {
        (*p, false)
    }
}

/// `(ε_αε_α, ε₃, (ε_ακ_α)², κ_ακ_α, ε₁κ₂−ε₂κ₁, κ₃², ε_ακ_α κ₃)`.
pub fn ti_invariants(p: &StrainState) -> Invariants {
    let [e1, e2, e3, k1, k2, k3] = p.to_array();
    let ek = e1 * k1 + e2 * k2;
    Invariants::from([e1 * e1 + e2 * e2, e3, ek * ek, k1 * k1 + k2 * k2, e1 * k2 - e2 * k1, k3 * k3, ek * k3])
}

/// Invariants with their Jacobian and the Hessian of every entry.
pub fn ti_invariants_with_derivatives(p: &StrainState) -> (Invariants, InvariantJacobian, [Matrix6<f64>; 7]) {
    let [e1, e2, _, k1, k2, k3] = p.to_array();
    let ek = e1 * k1 + e2 * k2;
    // Gradient of ε_ακ_α.
    let dek = [k1, k2, 0.0, e1, e2, 0.0];
    let mut j = InvariantJacobian::zeros();
    let rows: [[f64; 6]; 7] = [
        [2.0 * e1, 2.0 * e2, 0.0, 0.0, 0.0, 0.0],
        [0.0, 0.0, 1.0, 0.0, 0.0, 0.0],
        dek.map(|d| 2.0 * ek * d),
        [0.0, 0.0, 0.0, 2.0 * k1, 2.0 * k2, 0.0],
        [k2, -k1, 0.0, -e2, e1, 0.0],
        [0.0, 0.0, 0.0, 0.0, 0.0, 2.0 * k3],
        [k3 * k1, k3 * k2, 0.0, k3 * e1, k3 * e2, ek],
    ];
    for (r, row) in rows.iter().enumerate() {
        for (c, v) in row.iter().enumerate() {
            j[(r, c)] = *v;
        }
    }
    // Hessian of ε_ακ_α.
    let mut hek = Matrix6::zeros();
    for (a, b) in [(0, 3), (1, 4)] {
        hek[(a, b)] = 1.0;
        hek[(b, a)] = 1.0;
    }
    let mut h = [Matrix6::zeros(); 7];
    h[0][(0, 0)] = 2.0;
    h[0][(1, 1)] = 2.0;
    for a in 0..6 {
        for b in 0..6 {
            h[2][(a, b)] = 2.0 * dek[a] * dek[b] + 2.0 * ek * hek[(a, b)];
        }
    }
    h[3][(3, 3)] = 2.0;
    h[3][(4, 4)] = 2.0;
    h[4][(0, 4)] = 1.0;
    h[4][(4, 0)] = 1.0;
    h[4][(1, 3)] = -1.0;
    h[4][(3, 1)] = -1.0;
    h[5][(5, 5)] = 2.0;
    h[6] = hek * k3;
    for a in 0..6 {
        h[6][(a, 5)] += dek[a];
        h[6][(5, a)] += dek[a];
    }
    (ti_invariants(p), j, h)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn reflection_rule() {
        let p = StrainState::from_array([0.1, -0.2, 0.3, 0.4, -0.5, 0.6]);
        let (r, flag) = reflect(&p);
        assert!(flag);
        assert_eq!(r.to_array(), [-0.1, 0.2, 0.3, -0.4, 0.5, 0.6]);
        assert_eq!(reflect(&r), (r, false));
        let on_plane = StrainState::from_array([0.5, -0.5, 0.1, 0.25, -0.25, 0.0]);
        assert_eq!(hyperplane(&on_plane), 0.0);
        assert_eq!(reflect(&on_plane), (on_plane, false));
    }

    #[test]
    fn invariant_examples() {
        let i = ti_invariants(&StrainState::from_array([0.0, 0.0, 0.3, 0.0, 0.0, 0.7]));
        assert_eq!(i.as_slice(), &[0.0, 0.3, 0.0, 0.0, 0.0, 0.7 * 0.7, 0.0]);
        let i = ti_invariants(&StrainState::from_array([1.0, 0.0, 0.0, 0.0, 1.0, 0.0]));
        assert_eq!(i[4], 1.0);
    }

    #[test]
    fn derivatives_match_finite_differences() {
        let p = [0.13, -0.21, 0.05, 0.33, 0.17, -0.4];
        let (_, j, h) = ti_invariants_with_derivatives(&StrainState::from_array(p));
        let step = 1e-6;
        for c in 0..6 {
            let (mut a, mut b) = (p, p);
            a[c] += step;
            b[c] -= step;
            let (ia, ja, _) = ti_invariants_with_derivatives(&StrainState::from_array(a));
            let (ib, jb, _) = ti_invariants_with_derivatives(&StrainState::from_array(b));
            let fd = (ia - ib) / (2.0 * step);
            let fdj = (ja - jb) / (2.0 * step);
            for r in 0..7 {
                assert!((fd[r] - j[(r, c)]).abs() < 1e-8, "J[{r},{c}]");
                for k in 0..6 {
                    assert!((fdj[(r, k)] - h[r][(c, k)]).abs() < 1e-8, "H{r}[{c},{k}]");
                }
            }
        }
    }
}
