//! Neo-Hookean material law and beam-induced deformation gradients.
//!
//! The rotational part of the deformation gradient is dropped, so `F` maps
//! the section reference frame onto itself. Fourth-order tangents are stored
//! as 9×9 matrices with the row-major flattening `F_iJ ↦ 3i + J`.

use nalgebra::{Matrix3, Matrix3x2, SMatrix, Vector2, Vector3};

use crate::error::{Error, Result};
use crate::section::{MaterialParams, StrainState};

pub type Tangent = SMatrix<f64, 9, 9>;

/// Smallest admissible `det F`.
pub const MIN_DET: f64 = 1e-12;

/// A point of the cross-section with its (possibly deformed) embedding.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct CrossSectionPoint {
    pub x: Vector2<f64>,
    pub xhat: Vector3<f64>,
    pub grad: Matrix3x2<f64>,
}

impl CrossSectionPoint {
    /// Identity embedding `X̂ = (X₁, X₂, 0)`.
    pub fn rigid(x: Vector2<f64>) -> Self {
        Self {
            x,
            xhat: Vector3::new(x.x, x.y, 0.0),
            grad: Matrix3x2::new(1.0, 0.0, 0.0, 1.0, 0.0, 0.0),
        }
    }
}

/// `κ × X̂`.
#[inline]
pub fn cross(a: &Vector3<f64>, b: &Vector3<f64>) -> Vector3<f64> {
    a.cross(b)
}

pub fn defgrad_rigid(p: &StrainState, x: &Vector2<f64>) -> Matrix3<f64> {
    defgrad_deformable(p, &CrossSectionPoint::rigid(*x))
}

pub fn defgrad_deformable(p: &StrainState, pt: &CrossSectionPoint) -> Matrix3<f64> {
    let c3 = p.eps + Vector3::z() + p.kappa.cross(&pt.xhat);
    Matrix3::from_columns(&[pt.grad.column(0).into_owned(), pt.grad.column(1).into_owned(), c3])
}

/// Index of `F_iJ` in the flattened 9-vector.
#[inline]
pub fn flat(i: usize, j: usize) -> usize {
    3 * i + j
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct NeoHookean {
    pub mu: f64,
    pub lambda: f64,
}

impl NeoHookean {
    pub fn new(mat: &MaterialParams) -> Self {
        Self {
            mu: mat.lame_mu(),
            lambda: mat.lame_lambda(),
        }
    }

    fn check(f: &Matrix3<f64>) -> Result<(f64, Matrix3<f64>)> {
        let det = f.determinant();
        if !(det > MIN_DET) {
            return Err(Error::Singular { det });
        }
        let inv = f.try_inverse().ok_or(Error::Singular { det })?;
        Ok((det, inv))
    }

    pub fn energy(&self, f: &Matrix3<f64>) -> Result<f64> {
        let (det, _) = Self::check(f)?;
        let lnj = det.ln();
        let i1 = f.norm_squared();
        Ok(0.5 * self.mu * (i1 - 2.0 * lnj - 3.0) + 0.5 * self.lambda * lnj * lnj)
    }

    pub fn stress(&self, f: &Matrix3<f64>) -> Result<Matrix3<f64>> {
        let (det, inv) = Self::check(f)?;
        let fit = inv.transpose();
        Ok(self.mu * f + (self.lambda * det.ln() - self.mu) * fit)
    }

    /// Energy, first Piola-Kirchhoff stress and `∂P/∂F` in one pass.
    pub fn evaluate(&self, f: &Matrix3<f64>) -> Result<(f64, Matrix3<f64>, Tangent)> {
        let (det, inv) = Self::check(f)?;
        let lnj = det.ln();
        let fit = inv.transpose();
        let psi = 0.5 * self.mu * (f.norm_squared() - 2.0 * lnj - 3.0) + 0.5 * self.lambda * lnj * lnj;
        let c = self.lambda * lnj - self.mu;
        let p = self.mu * f + c * fit;
        let mut a = Tangent::zeros();
        for i in 0..3 {
            for jj in 0..3 {
                for k in 0..3 {
                    for l in 0..3 {
                        let mut v = self.lambda * fit[(i, jj)] * fit[(k, l)] - c * inv[(jj, k)] * inv[(l, i)];
                        if i == k && jj == l {
                            v += self.mu;
                        }
                        a[(flat(i, jj), flat(k, l))] = v;
                    }
                }
            }
        }
        Ok((psi, p, a))
    }

    pub fn tangent(&self, f: &Matrix3<f64>) -> Result<Tangent> {
        self.evaluate(f).map(|(_, _, a)| a)
    }
}

pub fn nh_energy(f: &Matrix3<f64>, mat: &MaterialParams) -> Result<f64> {
    NeoHookean::new(mat).energy(f)
}

pub fn nh_stress(f: &Matrix3<f64>, mat: &MaterialParams) -> Result<Matrix3<f64>> {
    NeoHookean::new(mat).stress(f)
}

pub fn nh_tangent(f: &Matrix3<f64>, mat: &MaterialParams) -> Result<Tangent> {
    NeoHookean::new(mat).tangent(f)
}
