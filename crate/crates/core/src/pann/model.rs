use std::fmt;
use std::path::Path;
use std::str::FromStr;

use nalgebra::{DMatrix, Matrix6};
use serde::{Deserialize, Serialize};

use super::invariants::{hyperplane, reflect, ti_invariants_with_derivatives, MIRROR_SIGNS};
use super::mlp::{Mlp, Workspace};
use crate::error::{Error, Result};
use crate::section::{StiffnessMatrix, StrainState, StressResultants};

/// Stiffness queries this close to the reflection plane use the `f ≥ 0` branch.
pub const PLANE_TOL: f64 = 1e-12;

pub const MODEL_VERSION: u32 = 1;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Variant {
    #[serde(rename = "plain")]
    Plain,
    #[serde(rename = "sym")]
    PointSymmetric,
    #[serde(rename = "ti")]
    TransverselyIsotropic,
}

impl Variant {
    pub fn name(&self) -> &'static str {
        match self {
            Variant::Plain => "plain",
            Variant::PointSymmetric => "sym",
            Variant::TransverselyIsotropic => "ti",
        }
    }

    /// Width of the preprocessed strain input.
    pub fn strain_inputs(&self) -> usize {
        match self {
            Variant::TransverselyIsotropic => 7,
            _ => 6,
        }
    }

    /// Inputs whose first-order term is removed by the stress projection.
    fn projected(&self) -> &'static [usize] {
        match self {
            Variant::TransverselyIsotropic => &[1],
            _ => &[0, 1, 2, 3, 4, 5],
        }
    }
}

impl fmt::Display for Variant {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Variant {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "plain" => Ok(Variant::Plain),
            "sym" => Ok(Variant::PointSymmetric),
            "ti" => Ok(Variant::TransverselyIsotropic),
            other => Err(Error::Config(format!("unknown variant '{other}' (plain, sym, ti)"))),
        }
    }
}

/// Ring ratio handling: a fixed geometry, or `P` as an extra network input.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum RatioMode {
    Fixed(f64),
    Input([f64; 2]),
}

/// Energy and gradient offsets of the normalization projection.
#[derive(Clone, Debug, PartialEq)]
pub struct Offsets {
    pub energy: f64,
    /// One entry per projected input.
    pub stress: Vec<f64>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct PannModel {
    variant: Variant,
    mlp: Mlp,
    r_ref: f64,
    ratio: RatioMode,
    offsets: Option<Offsets>,
}

/// Preprocessed strain: network input and its derivatives with respect to `p`.
struct Preprocessed {
    x: Vec<f64>,
    /// `∂x/∂p`, `dx × 6`.
    jac: DMatrix<f64>,
    hess: Option<[Matrix6<f64>; 7]>,
}

impl PannModel {
    /// Glorot-initialized model with the given hidden widths.
    pub fn new(variant: Variant, hidden: &[usize], r_ref: f64, ratio: RatioMode, seed: u64) -> Result<Self> {
        let extra = matches!(ratio, RatioMode::Input(_)) as usize;
        let mut dims = vec![variant.strain_inputs() + extra];
        dims.extend_from_slice(hidden);
        dims.push(1);
        Self::from_mlp(variant, Mlp::glorot(&dims, seed)?, r_ref, ratio)
    }

    pub fn from_mlp(variant: Variant, mlp: Mlp, r_ref: f64, ratio: RatioMode) -> Result<Self> {
        if !(r_ref > 0.0 && r_ref.is_finite()) {
            return Err(Error::InvalidGeometry(format!("reference radius {r_ref} must be positive")));
        }
        let extra = matches!(ratio, RatioMode::Input(_)) as usize;
        if mlp.input_dim() != variant.strain_inputs() + extra {
            return Err(Error::Dimension {
                expected: variant.strain_inputs() + extra,
                got: mlp.input_dim(),
            });
        }
        let mut m = Self {
            variant,
            mlp,
            r_ref,
            ratio,
            offsets: None,
        };
        m.refresh_offsets();
        Ok(m)
    }

    /// Default hidden widths: one layer of 32, two for ring-parameterized models.
    pub fn default_hidden(parameterized: bool) -> Vec<usize> {
        if parameterized {
            vec![32, 32]
        } else {
            vec![32]
        }
    }

    pub fn variant(&self) -> Variant {
        self.variant
    }

    pub fn mlp(&self) -> &Mlp {
        &self.mlp
    }

    pub fn r_ref(&self) -> f64 {
        self.r_ref
    }

    pub fn ratio_mode(&self) -> RatioMode {
        self.ratio
    }

    pub fn is_parameterized(&self) -> bool {
        matches!(self.ratio, RatioMode::Input(_))
    }

    pub fn params(&self) -> &[f64] {
        self.mlp.params()
    }

    /// Replaces the network parameters and recomputes the projection offsets.
    pub fn set_params(&mut self, theta: &[f64]) -> Result<()> {
        self.mlp.set_params(theta)?;
        self.refresh_offsets();
        Ok(())
    }

    fn refresh_offsets(&mut self) {
        self.offsets = match self.ratio {
            RatioMode::Fixed(_) => Some(self.compute_offsets(None)),
            RatioMode::Input(_) => None,
        };
    }

    pub(crate) fn projected_inputs(&self) -> &'static [usize] {
        self.variant.projected()
    }

    /// Network input at zero strain.
    pub(crate) fn origin_input(&self, ratio: Option<f64>) -> Vec<f64> {
        let mut u = vec![0.0; self.variant.strain_inputs()];
        if let Some(r) = ratio {
            u.push(r);
        }
        u
    }

    fn compute_offsets(&self, ratio: Option<f64>) -> Offsets {
        let u0 = self.origin_input(ratio);
        let mut g = vec![0.0; u0.len()];
        let energy = self.mlp.value_grad_with(&u0, &mut g, &mut Workspace::default());
        Offsets {
            energy,
            stress: self.variant.projected().iter().map(|&i| g[i]).collect(),
        }
    }

    /// Projection offsets for the ratio `P` (ignored for fixed-geometry models).
    pub fn offsets(&self, ratio: Option<f64>) -> Result<Offsets> {
        match (&self.offsets, self.ratio_input(ratio)?) {
            (Some(o), _) => Ok(o.clone()),
            (None, r) => Ok(self.compute_offsets(r)),
        }
    }

    /// The ratio fed to the network, if any.
    pub(crate) fn ratio_input(&self, ratio: Option<f64>) -> Result<Option<f64>> {
        match self.ratio {
            RatioMode::Fixed(_) => Ok(None),
            RatioMode::Input(_) => ratio.map(Some).ok_or(Error::MissingRatio),
        }
    }

    fn preprocess(&self, p: &StrainState, reflected: bool, second: bool) -> Preprocessed {
        match self.variant {
            Variant::Plain => Preprocessed {
                x: p.to_array().to_vec(),
                jac: DMatrix::identity(6, 6),
                hess: None,
            },
            Variant::PointSymmetric => {
                let (x, jac) = if reflected {
                    (p.mirrored(), DMatrix::from_diagonal(&nalgebra::DVector::from_row_slice(&MIRROR_SIGNS)))
                } else {
                    (*p, DMatrix::identity(6, 6))
                };
                Preprocessed {
                    x: x.to_array().to_vec(),
                    jac,
                    hess: None,
                }
            }
            Variant::TransverselyIsotropic => {
                let (i, j, h) = ti_invariants_with_derivatives(p);
                Preprocessed {
                    x: i.as_slice().to_vec(),
                    jac: DMatrix::from_fn(7, 6, |r, c| j[(r, c)]),
                    hess: second.then_some(h),
                }
            }
        }
    }

    fn is_reflected(&self, p: &StrainState) -> bool {
        self.variant == Variant::PointSymmetric && reflect(p).1
    }

    fn network_input(x: &[f64], ratio: Option<f64>) -> Vec<f64> {
        let mut u = x.to_vec();
        if let Some(r) = ratio {
            u.push(r);
        }
        u
    }

    pub fn energy(&self, p: &StrainState, ratio: Option<f64>) -> Result<f64> {
        let ratio = self.ratio_input(ratio)?;
        let off = self.offsets(ratio)?;
        let pre = self.preprocess(p, self.is_reflected(p), false);
        let y = self.mlp.value(&Self::network_input(&pre.x, ratio))?;
        let lin: f64 = self.variant.projected().iter().zip(&off.stress).map(|(&i, c)| c * pre.x[i]).sum();
        Ok(y - off.energy - lin)
    }

    /// Gradient of the projected potential with respect to the preprocessed input.
    fn projected_gradient(&self, g: &[f64], off: &Offsets) -> Vec<f64> {
        let mut gx = g[..self.variant.strain_inputs()].to_vec();
        for (&i, c) in self.variant.projected().iter().zip(&off.stress) {
            gx[i] -= c;
        }
        gx
    }

    pub fn stress(&self, p: &StrainState, ratio: Option<f64>) -> Result<StressResultants> {
        let ratio = self.ratio_input(ratio)?;
        let off = self.offsets(ratio)?;
        let pre = self.preprocess(p, self.is_reflected(p), false);
        let (_, g) = self.mlp.value_grad(&Self::network_input(&pre.x, ratio))?;
        let gx = self.projected_gradient(g.as_slice(), &off);
        let q = pre.jac.transpose() * nalgebra::DVector::from_vec(gx);
        Ok(StressResultants::from_array(std::array::from_fn(|i| q[i])))
    }

    fn evaluate_branch(&self, p: &StrainState, ratio: Option<f64>, off: &Offsets, reflected: bool) -> Result<(f64, StressResultants, StiffnessMatrix)> {
        let pre = self.preprocess(p, reflected, true);
        let (y, g, h) = self.mlp.eval(&Self::network_input(&pre.x, ratio))?;
        let dx = self.variant.strain_inputs();
        let lin: f64 = self.variant.projected().iter().zip(&off.stress).map(|(&i, c)| c * pre.x[i]).sum();
        let psi = y - off.energy - lin;
        let gx = nalgebra::DVector::from_vec(self.projected_gradient(g.as_slice(), off));
        let q = pre.jac.transpose() * &gx;
        let hxx = h.view((0, 0), (dx, dx));
        let mut c = pre.jac.transpose() * hxx * &pre.jac;
        if let Some(hs) = &pre.hess {
            for (k, hk) in hs.iter().enumerate() {
                for a in 0..6 {
                    for b in 0..6 {
                        c[(a, b)] += gx[k] * hk[(a, b)];
                    }
                }
            }
        }
        let c = Matrix6::from_fn(|a, b| 0.5 * (c[(a, b)] + c[(b, a)]));
        Ok((psi, StressResultants::from_array(std::array::from_fn(|i| q[i])), StiffnessMatrix(c)))
    }

    /// Potential, stress resultants and stiffness at `p`.
    pub fn evaluate(&self, p: &StrainState, ratio: Option<f64>) -> Result<(f64, StressResultants, StiffnessMatrix)> {
        self.evaluate_on(p, ratio, None)
    }

    /// Side of the reflection plane that `p` maps to (point-symmetric models only).
    pub fn branch(&self, p: &StrainState) -> Option<bool> {
        (self.variant == Variant::PointSymmetric).then(|| self.is_reflected(p))
    }

    /// Like [`Self::evaluate`], with the reflection forced by `reflected` when given.
    ///
    /// The forced branch is the smooth continuation of one half-space across the plane.
    pub fn evaluate_on(
        &self,
        p: &StrainState,
        ratio: Option<f64>,
        reflected: Option<bool>,
    ) -> Result<(f64, StressResultants, StiffnessMatrix)> {
        let ratio = self.ratio_input(ratio)?;
        let off = self.offsets(ratio)?;
        if let (Some(r), Variant::PointSymmetric) = (reflected, self.variant) {
            return self.evaluate_branch(p, ratio, &off, r);
        }
        let reflected = self.is_reflected(p);
        let (psi, q, c) = self.evaluate_branch(p, ratio, &off, reflected)?;
        if reflected && hyperplane(p) > -PLANE_TOL {
            let (_, _, c) = self.evaluate_branch(p, ratio, &off, false)?;
            return Ok((psi, q, c));
        }
        Ok((psi, q, c))
    }

    pub fn stiffness(&self, p: &StrainState, ratio: Option<f64>) -> Result<StiffnessMatrix> {
        Ok(self.evaluate(p, ratio)?.2)
    }

    /// Evaluation for a section scaled by `λ` relative to the reference radius.
    ///
    /// `ψ_λ(p_λ) = λ² ψ(ε_λ, λ κ_λ)`, so forces scale with `λ²`, moments with
    /// `λ³` and the stiffness blocks with `λ²`, `λ³`, `λ⁴`.
    pub fn scaled_eval(&self, p: &StrainState, lambda: f64, ratio: Option<f64>) -> Result<(f64, StressResultants, StiffnessMatrix)> {
        self.scaled_eval_on(p, lambda, ratio, None)
    }

    /// [`Self::scaled_eval`] with an optional forced reflection branch.
    pub fn scaled_eval_on(
        &self,
        p: &StrainState,
        lambda: f64,
        ratio: Option<f64>,
        reflected: Option<bool>,
    ) -> Result<(f64, StressResultants, StiffnessMatrix)> {
        if !(lambda > 0.0 && lambda.is_finite()) {
            return Err(Error::InvalidScale(lambda));
        }
        let (psi, q, c) = self.evaluate_on(&reference_strain(p, lambda), ratio, reflected)?;
        let l2 = lambda * lambda;
        let l3 = l2 * lambda;
        let q = StressResultants {
            n: q.n * l2,
            m: q.m * l3,
        };
        let c = Matrix6::from_fn(|a, b| c.0[(a, b)] * lambda.powi(2 + (a >= 3) as i32 + (b >= 3) as i32));
        Ok((l2 * psi, q, StiffnessMatrix(c)))
    }

    /// Stress map for training: the predicted resultants equal `map · ∇ₓΦ(u)`,
    /// where `u` is the returned network input and `map` is `6 × dx` row-major.
    pub(crate) fn stress_map(&self, p: &StrainState, lambda: f64, ratio: Option<f64>) -> (Vec<f64>, Vec<f64>) {
        let pr = reference_strain(p, lambda);
        let pre = self.preprocess(&pr, self.is_reflected(&pr), false);
        let dx = self.variant.strain_inputs();
        let mut map = vec![0.0; 6 * dx];
        for i in 0..6 {
            let s = if i < 3 { lambda * lambda } else { lambda * lambda * lambda };
            for k in 0..dx {
                map[i * dx + k] = s * pre.jac[(k, i)];
            }
        }
        (Self::network_input(&pre.x, ratio), map)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let text = serde_json::to_string_pretty(&self.to_file())?;
        std::fs::write(path, text)?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        Self::from_json(&text)
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(&self.to_file())?)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let file: ModelFile = serde_json::from_str(text).map_err(|e| Error::Schema(e.to_string()))?;
        file.into_model()
    }

    fn to_file(&self) -> ModelFile {
        let n = self.mlp.n_layers();
        ModelFile {
            version: MODEL_VERSION,
            variant: self.variant,
            layer_dims: self.mlp.dims().to_vec(),
            weights: (0..n).map(|l| self.mlp.weights(l).to_vec()).collect(),
            biases: (0..n).map(|l| self.mlp.biases(l).to_vec()).collect(),
            norm_energy: self.offsets.as_ref().map(|o| o.energy),
            norm_stress: self.offsets.as_ref().map(|o| o.stress.clone()),
            r_ref: self.r_ref,
            p_mode: self.ratio,
        }
    }
}

/// Maps a scaled-section strain to the reference section: `(ε, λκ)`.
pub fn reference_strain(p: &StrainState, lambda: f64) -> StrainState {
    StrainState {
        eps: p.eps,
        kappa: p.kappa * lambda,
    }
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct ModelFile {
    version: u32,
    variant: Variant,
    layer_dims: Vec<usize>,
    weights: Vec<Vec<f64>>,
    biases: Vec<Vec<f64>>,
    norm_energy: Option<f64>,
    norm_stress: Option<Vec<f64>>,
    #[serde(rename = "R_ref")]
    r_ref: f64,
    #[serde(rename = "P_mode")]
    p_mode: RatioMode,
}

impl ModelFile {
    fn into_model(self) -> Result<PannModel> {
        if self.version != MODEL_VERSION {
            return Err(Error::Schema(format!("unsupported model version {}", self.version)));
        }
        let mlp = Mlp::from_layers(&self.layer_dims, &self.weights, &self.biases)
            .map_err(|e| Error::Schema(e.to_string()))?;
        let model = PannModel::from_mlp(self.variant, mlp, self.r_ref, self.p_mode)
            .map_err(|e| Error::Schema(e.to_string()))?;
        let stored = match (self.norm_energy, self.norm_stress) {
            (Some(e), Some(s)) => Some(Offsets { energy: e, stress: s }),
            (None, None) => None,
            _ => return Err(Error::Schema("normalization offsets are incomplete".into())),
        };
        if stored != model.offsets {
            return Err(Error::Schema("stored normalization offsets do not match the weights".into()));
        }
        Ok(model)
    }
}
