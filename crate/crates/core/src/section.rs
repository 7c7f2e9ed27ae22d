//! Beam strain/stress types, circular section geometry and the linear elastic
//! beam model.
//!
//! Storage order is fixed everywhere as `(ε₁, ε₂, ε₃, κ₁, κ₂, κ₃)` for strains
//! and `(n₁, n₂, n₃, m₁, m₂, m₃)` for the conjugate resultants.

use std::f64::consts::PI;

use nalgebra::{Matrix3, Matrix6, Vector3, Vector6};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Default shear correction factor for circular sections.
pub const SHEAR_CORRECTION: f64 = 5.0 / 6.0;

/// Beam strain measures: shear/axial strain `eps` and curvature/twist `kappa`.
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct StrainState {
    pub eps: Vector3<f64>,
    pub kappa: Vector3<f64>,
}

impl StrainState {
    pub fn new(eps: [f64; 3], kappa: [f64; 3]) -> Self {
        Self {
            eps: Vector3::from(eps),
            kappa: Vector3::from(kappa),
        }
    }

    pub fn zero() -> Self {
        Self::default()
    }

    pub fn from_array(p: [f64; 6]) -> Self {
        Self::new([p[0], p[1], p[2]], [p[3], p[4], p[5]])
    }

    pub fn to_array(&self) -> [f64; 6] {
        [
            self.eps.x,
            self.eps.y,
            self.eps.z,
            self.kappa.x,
            self.kappa.y,
            self.kappa.z,
        ]
    }

    pub fn to_vector(&self) -> Vector6<f64> {
        Vector6::from(self.to_array())
    }

    pub fn from_vector(v: &Vector6<f64>) -> Self {
        Self::from_array([v[0], v[1], v[2], v[3], v[4], v[5]])
    }

    pub fn is_finite(&self) -> bool {
        self.to_array().iter().all(|v| v.is_finite())
    }

    pub fn norm(&self) -> f64 {
        self.to_vector().norm()
    }

    pub fn scaled(&self, a: f64) -> Self {
        Self {
            eps: self.eps * a,
            kappa: self.kappa * a,
        }
    }

    /// Point-symmetric counterpart `(−ε₁, −ε₂, ε₃, −κ₁, −κ₂, κ₃)`.
    pub fn mirrored(&self) -> Self {
        let p = self.to_array();
        Self::from_array([-p[0], -p[1], p[2], -p[3], -p[4], p[5]])
    }
}

/// Section forces `n` and moments `m` in the material frame.
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct StressResultants {
    pub n: Vector3<f64>,
    pub m: Vector3<f64>,
}

impl StressResultants {
    pub fn new(n: [f64; 3], m: [f64; 3]) -> Self {
        Self {
            n: Vector3::from(n),
            m: Vector3::from(m),
        }
    }

    pub fn zero() -> Self {
        Self::default()
    }

    pub fn from_array(q: [f64; 6]) -> Self {
        Self::new([q[0], q[1], q[2]], [q[3], q[4], q[5]])
    }

    pub fn to_array(&self) -> [f64; 6] {
        [self.n.x, self.n.y, self.n.z, self.m.x, self.m.y, self.m.z]
    }

    pub fn to_vector(&self) -> Vector6<f64> {
        Vector6::from(self.to_array())
    }

    pub fn from_vector(v: &Vector6<f64>) -> Self {
        Self::from_array([v[0], v[1], v[2], v[3], v[4], v[5]])
    }

    /// Sign pattern of the point symmetry applied to `(n₁, n₂, m₁, m₂)`.
    pub fn mirrored(&self) -> Self {
        let q = self.to_array();
        Self::from_array([-q[0], -q[1], q[2], -q[3], -q[4], q[5]])
    }

    pub fn is_finite(&self) -> bool {
        self.to_array().iter().all(|v| v.is_finite())
    }
}

/// 6×6 section stiffness `[[C_εε, C_εκ], [C_κε, C_κκ]]`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct StiffnessMatrix(pub Matrix6<f64>);

impl StiffnessMatrix {
    pub fn zero() -> Self {
        Self(Matrix6::zeros())
    }

    pub fn eps_eps(&self) -> Matrix3<f64> {
        self.0.fixed_view::<3, 3>(0, 0).into_owned()
    }

    pub fn kappa_kappa(&self) -> Matrix3<f64> {
        self.0.fixed_view::<3, 3>(3, 3).into_owned()
    }

    pub fn eps_kappa(&self) -> Matrix3<f64> {
        self.0.fixed_view::<3, 3>(0, 3).into_owned()
    }

    /// Symmetry within `tol · ‖C‖`.
    pub fn is_symmetric(&self, tol: f64) -> bool {
        let scale = self.0.norm().max(f64::MIN_POSITIVE);
        (self.0 - self.0.transpose()).norm() <= tol * scale
    }
}

/// Circular or ring-shaped cross-section.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SectionGeometry {
    pub outer_radius: f64,
    pub inner_radius: f64,
}

impl SectionGeometry {
    pub fn new(outer_radius: f64, inner_radius: f64) -> Result<Self> {
        if !(outer_radius.is_finite() && inner_radius.is_finite()) {
            return Err(Error::InvalidGeometry("radii must be finite".into()));
        }
        if inner_radius < 0.0 {
            return Err(Error::InvalidGeometry(format!(
                "inner radius {inner_radius} is negative"
            )));
        }
        if inner_radius >= outer_radius {
            return Err(Error::InvalidGeometry(format!(
                "inner radius {inner_radius} must be smaller than outer radius {outer_radius}"
            )));
        }
        Ok(Self {
            outer_radius,
            inner_radius,
        })
    }

    pub fn disc(radius: f64) -> Result<Self> {
        Self::new(radius, 0.0)
    }

    /// Ring with outer radius `radius` and `P = R_i / R`.
    pub fn with_ratio(radius: f64, ratio: f64) -> Result<Self> {
        if !(0.0..1.0).contains(&ratio) {
            return Err(Error::InvalidGeometry(format!(
                "ratio P = {ratio} outside [0, 1)"
            )));
        }
        Self::new(radius, ratio * radius)
    }

    pub fn ratio(&self) -> f64 {
        self.inner_radius / self.outer_radius
    }

    pub fn is_disc(&self) -> bool {
        self.inner_radius == 0.0
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct MaterialParams {
    pub youngs: f64,
    pub poisson: f64,
}

impl MaterialParams {
    pub fn new(youngs: f64, poisson: f64) -> Result<Self> {
        if !(youngs > 0.0 && youngs.is_finite()) {
            return Err(Error::InvalidMaterial(format!(
                "Young's modulus {youngs} must be positive"
            )));
        }
        if !(poisson > -1.0 && poisson < 0.5) {
            return Err(Error::InvalidMaterial(format!(
                "Poisson ratio {poisson} outside (-1, 0.5)"
            )));
        }
        Ok(Self { youngs, poisson })
    }

    /// Thermoplastic polyurethane used throughout the studies: E = 70, ν = 0.4.
    pub fn tpu() -> Self {
        Self {
            youngs: 70.0,
            poisson: 0.4,
        }
    }

    pub fn shear_modulus(&self) -> f64 {
        self.youngs / (2.0 * (1.0 + self.poisson))
    }

    /// Lamé μ̄ (equal to the shear modulus).
    pub fn lame_mu(&self) -> f64 {
        self.shear_modulus()
    }

    /// Lamé λ̄.
    pub fn lame_lambda(&self) -> f64 {
        self.youngs * self.poisson / ((1.0 + self.poisson) * (1.0 - 2.0 * self.poisson))
    }
}

impl Default for MaterialParams {
    fn default() -> Self {
        Self::tpu()
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SectionProperties {
    pub area: f64,
    pub i1: f64,
    pub i2: f64,
    pub j: f64,
}

pub fn section_properties(geom: &SectionGeometry) -> SectionProperties {
    let (r, ri) = (geom.outer_radius, geom.inner_radius);
    let area = PI * (r * r - ri * ri);
    let i = PI / 4.0 * (r.powi(4) - ri.powi(4));
    SectionProperties {
        area,
        i1: i,
        i2: i,
        j: 2.0 * i,
    }
}

/// Linear elastic beam model with diagonal constitutive blocks.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Lem {
    pub geom: SectionGeometry,
    pub mat: MaterialParams,
    pub shear_correction: [f64; 2],
}

impl Lem {
    pub fn new(geom: SectionGeometry, mat: MaterialParams) -> Self {
        Self {
            geom,
            mat,
            shear_correction: [SHEAR_CORRECTION; 2],
        }
    }

    pub fn with_shear_correction(mut self, k1: f64, k2: f64) -> Self {
        self.shear_correction = [k1, k2];
        self
    }

    /// Diagonal of the 6×6 stiffness.
    pub fn diagonal(&self) -> [f64; 6] {
        let s = section_properties(&self.geom);
        let (e, g) = (self.mat.youngs, self.mat.shear_modulus());
        [
            self.shear_correction[0] * g * s.area,
            self.shear_correction[1] * g * s.area,
            e * s.area,
            e * s.i1,
            e * s.i2,
            g * s.j,
        ]
    }

    pub fn potential(&self, p: &StrainState) -> f64 {
        let d = self.diagonal();
        let p = p.to_array();
        0.5 * (0..6).map(|i| d[i] * p[i] * p[i]).sum::<f64>()
    }

    pub fn stress(&self, p: &StrainState) -> StressResultants {
        let d = self.diagonal();
        let p = p.to_array();
        StressResultants::from_array(std::array::from_fn(|i| d[i] * p[i]))
    }

    pub fn stiffness(&self) -> StiffnessMatrix {
        StiffnessMatrix(Matrix6::from_diagonal(&Vector6::from(self.diagonal())))
    }
}

pub fn lem_potential(p: &StrainState, geom: &SectionGeometry, mat: &MaterialParams) -> f64 {
    Lem::new(*geom, *mat).potential(p)
}

pub fn lem_stress(p: &StrainState, geom: &SectionGeometry, mat: &MaterialParams) -> StressResultants {
    Lem::new(*geom, *mat).stress(p)
}

pub fn lem_stiffness(geom: &SectionGeometry, mat: &MaterialParams) -> StiffnessMatrix {
    Lem::new(*geom, *mat).stiffness()
}
