use nalgebra::{DMatrix, DVector, SMatrix, Vector3};

use super::element::{element_kinematics, element_strain};
use super::rotation::{exp_map, Rotation};
use crate::error::{Error, Result};
use crate::pann::{reference_strain, PannModel};
use crate::section::{Lem, StiffnessMatrix, StrainState, StressResultants};

/// Section response used by the beam solver.
pub trait BeamConstitutive: Sync {
    fn evaluate(&self, p: &StrainState) -> Result<(f64, StressResultants, StiffnessMatrix)>;

    /// Smooth piece of a piecewise-defined law that `p` falls on; `None` for smooth laws.
    fn branch(&self, _p: &StrainState) -> Option<bool> {
        None
    }

    /// Evaluation on a given piece, continued smoothly past its boundary.
    fn evaluate_on(&self, p: &StrainState, _branch: Option<bool>) -> Result<(f64, StressResultants, StiffnessMatrix)> {
        self.evaluate(p)
    }
}

impl BeamConstitutive for Lem {
    fn evaluate(&self, p: &StrainState) -> Result<(f64, StressResultants, StiffnessMatrix)> {
        Ok((self.potential(p), self.stress(p), self.stiffness()))
    }
}

/// A trained potential, optionally scaled and with a ring ratio.
#[derive(Clone, Debug)]
pub struct PannConstitutive<'a> {
    pub model: &'a PannModel,
    pub ratio: Option<f64>,
    pub lambda: f64,
}

impl<'a> PannConstitutive<'a> {
    pub fn new(model: &'a PannModel) -> Self {
        Self {
            model,
            ratio: None,
            lambda: 1.0,
        }
    }
}

impl BeamConstitutive for PannConstitutive<'_> {
    fn evaluate(&self, p: &StrainState) -> Result<(f64, StressResultants, StiffnessMatrix)> {
        self.model.scaled_eval(p, self.lambda, self.ratio)
    }

    fn branch(&self, p: &StrainState) -> Option<bool> {
        self.model.branch(&reference_strain(p, self.lambda))
    }

    fn evaluate_on(&self, p: &StrainState, branch: Option<bool>) -> Result<(f64, StressResultants, StiffnessMatrix)> {
        self.model.scaled_eval_on(p, self.lambda, self.ratio, branch)
    }
}

/// Nodal centerline positions and frames on a uniform grid.
#[derive(Clone, Debug, PartialEq)]
pub struct BeamState {
    pub s: Vec<f64>,
    pub r: Vec<Vector3<f64>>,
    pub q: Vec<Rotation>,
}

impl BeamState {
    /// Stress-free configuration with constant initial curvature starting
    /// at the origin along `E₃`.
    pub fn initial(length: f64, n_elements: usize, curvature: Vector3<f64>) -> Self {
        let n = n_elements + 1;
        let s: Vec<f64> = (0..n).map(|i| length * i as f64 / n_elements as f64).collect();
        // Exact helix/arc: integrate r' = R E₃ with R(s) = exp(s κ) in closed form.
        let k = curvature.norm();
        let r = s
            .iter()
            .map(|&si| {
                if k < 1e-14 {
                    Vector3::z() * si
                } else {
                    let axis = curvature / k;
                    let e3 = Vector3::z();
                    let par = axis * axis.dot(&e3);
                    let perp = e3 - par;
                    let t = k * si;
                    par * si + (perp * t.sin() + axis.cross(&perp) * (1.0 - t.cos())) / k
                }
            })
            .collect();
        let q = s.iter().map(|&si| exp_map(&(curvature * si))).collect();
        Self { s, r, q }
    }

    pub fn n_elements(&self) -> usize {
        self.s.len() - 1
    }

    pub fn element_length(&self, e: usize) -> f64 {
        self.s[e + 1] - self.s[e]
    }

    /// Strain measures of element `e`.
    pub fn strain(&self, e: usize) -> StrainState {
        element_strain(&self.r[e], &self.q[e], &self.r[e + 1], &self.q[e + 1], self.element_length(e))
    }

    /// Rigid motion `x ↦ g x + t` of the whole configuration.
    pub fn transformed(&self, g: &Rotation, t: &Vector3<f64>) -> Self {
        Self {
            s: self.s.clone(),
            r: self.r.iter().map(|x| g * x + t).collect(),
            q: self.q.iter().map(|q| g * q).collect(),
        }
    }

    fn apply_increment(&mut self, du: &DVector<f64>) {
        for i in 0..self.r.len() {
            self.r[i] += du.fixed_rows::<3>(6 * i);
            let th: Vector3<f64> = du.fixed_rows::<3>(6 * i + 3).into_owned();
            let mut q = exp_map(&th) * self.q[i];
            q.renormalize();
            self.q[i] = q;
        }
    }
}

/// Cantilever clamped at `s = 0`; the end `s = L` is loaded by a dead force
/// and moment, or has its position (and optionally its frame) prescribed.
#[derive(Clone, Debug, PartialEq)]
pub struct BeamBvp {
    pub length: f64,
    pub n_elements: usize,
    /// Stress-free initial curvature.
    pub initial_curvature: Vector3<f64>,
    pub tip_force: Vector3<f64>,
    pub tip_moment: Vector3<f64>,
    /// Prescribed end displacement at full load.
    pub tip_displacement: Option<Vector3<f64>>,
    /// Keeps the end frame at its initial orientation.
    pub tip_rotation_fixed: bool,
    pub steps: usize,
}

impl BeamBvp {
    pub fn cantilever(length: f64) -> Self {
        Self {
            length,
            n_elements: 16,
            initial_curvature: Vector3::zeros(),
            tip_force: Vector3::zeros(),
            tip_moment: Vector3::zeros(),
            tip_displacement: None,
            tip_rotation_fixed: false,
            steps: 20,
        }
    }

    fn validate(&self) -> Result<()> {
        if !(self.length > 0.0) || self.n_elements == 0 || self.steps == 0 {
            return Err(Error::Config("beam length, element count and steps must be positive".into()));
        }
        if self.tip_displacement.is_some() && self.tip_force != Vector3::zeros() {
            return Err(Error::Config("tip force and tip displacement are exclusive".into()));
        }
        if self.tip_rotation_fixed && self.tip_moment != Vector3::zeros() {
            return Err(Error::Config("tip moment and fixed tip rotation are exclusive".into()));
        }
        Ok(())
    }
}

#[derive(Clone, Debug)]
pub struct SolverConfig {
    pub rel_tol: f64,
    pub max_iterations: usize,
    pub max_bisections: usize,
}

impl Default for SolverConfig {
    fn default() -> Self {
        Self {
            rel_tol: 1e-8,
            max_iterations: 30,
            max_bisections: 4,
        }
    }
}

/// Converged configuration at one load level.
#[derive(Clone, Debug)]
pub struct LoadStep {
    pub load_factor: f64,
    pub state: BeamState,
    /// Element strains `p` (the constitutive argument is `p − p₀`).
    pub strains: Vec<StrainState>,
    pub resultants: Vec<StressResultants>,
    /// Spatial force and moment the support exerts at `s = 0`.
    pub base_reaction: [Vector3<f64>; 2],
    /// Spatial force and moment acting on the beam at `s = L`.
    pub tip_load: [Vector3<f64>; 2],
    pub internal_energy: f64,
    pub iterations: usize,
    /// Elements whose strain ended on the other side of a piecewise law's
    /// boundary than the piece they were evaluated on.
    pub off_branch: usize,
}

#[derive(Clone, Debug)]
pub struct BeamSolution {
    pub reference_strains: Vec<StrainState>,
    pub steps: Vec<LoadStep>,
}

impl BeamSolution {
    pub fn last(&self) -> &LoadStep {
        self.steps.last().expect("solution has at least the initial step")
    }
}

struct Assembly {
    residual: DVector<f64>,
    tangent: DMatrix<f64>,
    energy: f64,
    strains: Vec<StrainState>,
    resultants: Vec<StressResultants>,
}

/// Constitutive arguments `p − p₀` of every element.
fn element_arguments(state: &BeamState, p0: &[StrainState]) -> Vec<StrainState> {
    (0..state.n_elements())
        .map(|e| StrainState::from_vector(&(state.strain(e).to_vector() - p0[e].to_vector())))
        .collect()
}

fn branches(state: &BeamState, p0: &[StrainState], law: &dyn BeamConstitutive) -> Vec<Option<bool>> {
    element_arguments(state, p0).iter().map(|p| law.branch(p)).collect()
}

fn assemble(
    state: &BeamState,
    p0: &[StrainState],
    law: &dyn BeamConstitutive,
    branch: &[Option<bool>],
    with_tangent: bool,
) -> Result<Assembly> {
    let n = state.r.len() * 6;
    let mut residual = DVector::zeros(n);
    let mut tangent = DMatrix::zeros(if with_tangent { n } else { 0 }, if with_tangent { n } else { 0 });
    let mut energy = 0.0;
    let mut strains = Vec::with_capacity(state.n_elements());
    let mut resultants = Vec::with_capacity(state.n_elements());
    for e in 0..state.n_elements() {
        let h = state.element_length(e);
        let (ra, qa, rb, qb) = (&state.r[e], &state.q[e], &state.r[e + 1], &state.q[e + 1]);
        let (p, b) = element_kinematics(ra, qa, rb, qb, h);
        let arg = StrainState::from_vector(&(p.to_vector() - p0[e].to_vector()));
        let (psi, q, c) = law.evaluate_on(&arg, branch[e])?;
        let qv = q.to_vector();
        energy += h * psi;
        let f = b.transpose() * qv * h;
        for k in 0..12 {
            residual[6 * e + k] += f[k];
        }
        if with_tangent {
            let mut ke = b.transpose() * c.0 * b * h;
            // Geometric part: derivative of Bᵀ with the resultants frozen.
            let d = 1e-7;
            for j in 0..12 {
                let col = |sign: f64| {
                    let (mut a, mut qa, mut bb, mut qb) = (*ra, *qa, *rb, *qb);
                    let mut v = Vector3::zeros();
                    v[j % 3] = sign * d;
                    match j / 3 {
                        0 => a += v,
                        1 => qa = exp_map(&v) * qa,
                        2 => bb += v,
                        _ => qb = exp_map(&v) * qb,
                    }
                    element_kinematics(&a, &qa, &bb, &qb, h).1
                };
                let db: SMatrix<f64, 6, 12> = (col(1.0) - col(-1.0)) / (2.0 * d);
                let g = db.transpose() * qv * h;
                for i in 0..12 {
                    ke[(i, j)] += g[i];
                }
            }
            for i in 0..12 {
                for j in 0..12 {
                    tangent[(6 * e + i, 6 * e + j)] += ke[(i, j)];
                }
            }
        }
        strains.push(p);
        resultants.push(q);
    }
    Ok(Assembly {
        residual,
        tangent,
        energy,
        strains,
        resultants,
    })
}

const LINE_SEARCH_HALVINGS: usize = 6;
const BRANCH_ROUNDS: usize = 3;

fn free_norm(r: &DVector<f64>, free: &[usize]) -> f64 {
    free.iter().map(|&i| r[i] * r[i]).sum::<f64>().sqrt()
}

/// Incremental Newton solution over uniform load steps with step bisection.
pub fn solve_bvp(bvp: &BeamBvp, law: &dyn BeamConstitutive, cfg: &SolverConfig) -> Result<BeamSolution> {
    bvp.validate()?;
    let init = BeamState::initial(bvp.length, bvp.n_elements, bvp.initial_curvature);
    let p0: Vec<StrainState> = (0..bvp.n_elements).map(|e| init.strain(e)).collect();
    let nn = init.r.len();
    let tip = nn - 1;
    let ndof = 6 * nn;
    let mut fixed = vec![false; ndof];
    fixed[..6].fill(true);
    if bvp.tip_displacement.is_some() {
        fixed[6 * tip..6 * tip + 3].fill(true);
    }
    if bvp.tip_rotation_fixed {
        fixed[6 * tip + 3..6 * tip + 6].fill(true);
    }
    let free: Vec<usize> = (0..ndof).filter(|&i| !fixed[i]).collect();
    let tip0 = init.r[tip];

    let external = |lf: f64| {
        let mut f = DVector::zeros(ndof);
        f.fixed_rows_mut::<3>(6 * tip).copy_from(&(bvp.tip_force * lf));
        f.fixed_rows_mut::<3>(6 * tip + 3).copy_from(&(bvp.tip_moment * lf));
        f
    };
    let record = |state: &BeamState, lf: f64, iterations: usize, branch: &[Option<bool>]| -> Result<LoadStep> {
        let a = assemble(state, &p0, law, branch, false)?;
        let r = &a.residual - external(lf);
        let base = [-Vector3::from(r.fixed_rows::<3>(0)), -Vector3::from(r.fixed_rows::<3>(3))];
        let tip_load = [
            Vector3::from(a.residual.fixed_rows::<3>(6 * tip)),
            Vector3::from(a.residual.fixed_rows::<3>(6 * tip + 3)),
        ];
        let actual = branches(state, &p0, law);
        Ok(LoadStep {
            load_factor: lf,
            state: state.clone(),
            strains: a.strains,
            resultants: a.resultants,
            base_reaction: base,
            tip_load,
            internal_energy: a.energy,
            iterations,
            off_branch: actual.iter().zip(branch).filter(|(a, b)| a != b).count(),
        })
    };

    let newton = |state: &mut BeamState, lf: f64, branch: &[Option<bool>]| -> Result<usize> {
        if let Some(u) = bvp.tip_displacement {
            state.r[tip] = tip0 + u * lf;
        }
        let fext = external(lf);
        let mut reference = fext.norm();
        let mut last = f64::NAN;
        for it in 0..=cfg.max_iterations {
            let a = assemble(state, &p0, law, branch, true)?;
            let r = &a.residual - &fext;
            let rf = DVector::from_iterator(free.len(), free.iter().map(|&i| r[i]));
            let norm = rf.norm();
            last = norm;
            if !norm.is_finite() {
                break;
            }
            // Scale of the interior forces: the reactions carry it under displacement control.
            let scale = a.residual.iter().map(|v| v.abs()).fold(0.0, f64::max);
            reference = reference.max(scale);
            if norm <= cfg.rel_tol * reference.max(f64::MIN_POSITIVE) || norm == 0.0 {
                return Ok(it);
            }
            if it == cfg.max_iterations {
                break;
            }
            let kff = DMatrix::from_fn(free.len(), free.len(), |i, j| a.tangent[(free[i], free[j])]);
            let du = kff
                .lu()
                .solve(&(-rf))
                .ok_or_else(|| Error::LinearSolve("singular beam tangent".into()))?;
            let mut full = DVector::zeros(ndof);
            for (k, &i) in free.iter().enumerate() {
                full[i] = du[k];
            }
            // Backtracking on the free residual norm; the full step if nothing decreases it.
            let mut step = None;
            let mut alpha = 1.0;
            for _ in 0..=LINE_SEARCH_HALVINGS {
                let mut trial = state.clone();
                trial.apply_increment(&(&full * alpha));
                let decreased = assemble(&trial, &p0, law, branch, false)
                    .map(|t| free_norm(&(t.residual - &fext), &free) < norm)
                    .unwrap_or(false);
                if decreased {
                    step = Some(trial);
                    break;
                }
                alpha *= 0.5;
            }
            match step {
                Some(t) => *state = t,
                None => state.apply_increment(&full),
            }
        }
        Err(Error::NoConvergence {
            iterations: cfg.max_iterations,
            residual: last,
        })
    };

    // Pieces of a piecewise law are frozen per element during an increment,
    // then updated to where the converged strains lie and the increment is redone.
    let solve_increment = |state: &mut BeamState, lf: f64, branch: &mut Vec<Option<bool>>| -> Result<usize> {
        let mut its = 0;
        for _ in 0..BRANCH_ROUNDS {
            its += newton(state, lf, branch)?;
            let actual = branches(state, &p0, law);
            if actual == *branch {
                break;
            }
            *branch = actual;
        }
        Ok(its)
    };

    let mut state = init.clone();
    let mut branch = branches(&state, &p0, law);
    let mut steps = vec![record(&state, 0.0, 0, &branch)?];
    let dlf = 1.0 / bvp.steps as f64;
    for k in 1..=bvp.steps {
        let target = k as f64 * dlf;
        let mut lf = target - dlf;
        let mut depth = 0;
        let mut its = 0;
        // Sub-stepping towards `target`; the step size halves on failure.
        let mut h = dlf;
        while lf < target - 1e-14 {
            let next = (lf + h).min(target);
            let mut trial = state.clone();
            let mut trial_branch = branch.clone();
            match solve_increment(&mut trial, next, &mut trial_branch) {
                Ok(n) => {
                    state = trial;
                    branch = trial_branch;
                    lf = next;
                    its += n;
                }
                Err(e) if e.is_numerical() && depth < cfg.max_bisections => {
                    depth += 1;
                    h *= 0.5;
                }
                Err(e) => return Err(e),
            }
        }
        steps.push(record(&state, target, its, &branch)?);
    }
    Ok(BeamSolution {
        reference_strains: p0,
        steps,
    })
}
