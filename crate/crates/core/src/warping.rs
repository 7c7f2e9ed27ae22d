//! Deformable-section ground truth: the constrained warping problem.
//!
//! For a prescribed strain state the nodal positions `X̂` of the cross-section
//! mesh minimize the integrated Neo-Hookean energy subject to three
//! translational and four rotational integral constraints. Newton's method
//! is applied to the saddle-point system of the Lagrange functional.
//!
//! The constraint rows are dense, so the saddle-point matrix is never
//! factorized directly. Instead the sparse stiffness is made regular by a
//! rank-four diagonal pin and the bordered system is closed with a small
//! dense Schur complement (Sherman-Morrison-Woodbury).

use std::sync::OnceLock;

use faer::linalg::solvers::Solve;
use faer::sparse::linalg::solvers::{Lu, SymbolicLu};
use faer::sparse::{SparseColMat, Triplet};
use faer::Mat;
use nalgebra::{DMatrix, DVector, Matrix3, SMatrix, SVector, Vector2, Vector3, Vector4};

use crate::continuum::{flat, NeoHookean};
use crate::error::{Error, Result};
use crate::mesh::{CrossSectionMesh, Quadrature, TriangleGeometry};
use crate::section::{MaterialParams, StrainState, StressResultants};

type Mat9 = SMatrix<f64, 9, 9>;
type Vec9 = SVector<f64, 9>;

const N_CONSTRAINTS: usize = 7;

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct WarpingConfig {
    pub rule: Quadrature,
    /// Convergence when the residual drops below `rel_tol` times the first residual...
    pub rel_tol: f64,
    /// ...or below `abs_tol · E · R³`.
    pub abs_tol: f64,
    pub max_iterations: usize,
    pub max_halvings: usize,
    /// Active rotational constraints (components of 𝔪).
    pub rotational: [bool; 4],
}

impl Default for WarpingConfig {
    fn default() -> Self {
        Self {
            rule: Quadrature::Centroid,
            rel_tol: 1e-9,
            abs_tol: 1e-12,
            max_iterations: 50,
            max_halvings: 20,
            rotational: [true; 4],
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct WarpingSolution {
    pub xhat: Vec<Vector3<f64>>,
    pub lambda: Vector3<f64>,
    pub mu: Vector4<f64>,
    pub converged: bool,
    pub residual_norm: f64,
    pub iterations: usize,
}

impl WarpingSolution {
    /// Reference embedding `X̂ = (X₁, X₂, 0)` with zero multipliers.
    pub fn identity(mesh: &CrossSectionMesh) -> Self {
        Self {
            xhat: mesh.nodes.iter().map(|x| Vector3::new(x.x, x.y, 0.0)).collect(),
            lambda: Vector3::zeros(),
            mu: Vector4::zeros(),
            converged: false,
            residual_norm: f64::INFINITY,
            iterations: 0,
        }
    }

    /// Nodal displacements `u = X̂ − (X₁, X₂, 0)`.
    pub fn displacements(&self, mesh: &CrossSectionMesh) -> Vec<Vector3<f64>> {
        self.xhat
            .iter()
            .zip(&mesh.nodes)
            .map(|(xh, x)| xh - Vector3::new(x.x, x.y, 0.0))
            .collect()
    }

    pub fn max_abs_warping(&self, mesh: &CrossSectionMesh) -> f64 {
        self.displacements(mesh).iter().map(|u| u.z.abs()).fold(0.0, f64::max)
    }

    pub fn max_abs_in_plane(&self, mesh: &CrossSectionMesh) -> f64 {
        self.displacements(mesh)
            .iter()
            .map(|u| u.x.hypot(u.y))
            .fold(0.0, f64::max)
    }
}

/// Values assembled at one iterate.
struct Assembly {
    /// Gradient of the Lagrangian with respect to the nodal positions.
    grad: DVector<f64>,
    constraints: [f64; N_CONSTRAINTS],
    /// Dense constraint Jacobian rows.
    jac: Vec<DVector<f64>>,
    triplets: Vec<Triplet<usize, usize, f64>>,
    diag_scale: f64,
}

/// A warping problem bound to one mesh and material, reusable across strain states.
pub struct WarpingSolver<'a> {
    pub mesh: &'a CrossSectionMesh,
    pub mat: MaterialParams,
    pub cfg: WarpingConfig,
    nh: NeoHookean,
    tri: Vec<TriangleGeometry>,
    pins: [usize; 4],
    symbolic: OnceLock<SymbolicLu<usize>>,
}

fn skew(k: &Vector3<f64>) -> Matrix3<f64> {
    Matrix3::new(0.0, -k.z, k.y, k.z, 0.0, -k.x, -k.y, k.x, 0.0)
}

/// Signed angle from `x` to `xh` in the plane, in (−π, π].
fn angle_between(x: &Vector2<f64>, xh: &Vector3<f64>) -> f64 {
    let cross = x.x * xh.y - x.y * xh.x;
    let dot = x.x * xh.x + x.y * xh.y;
    cross.atan2(dot)
}

impl<'a> WarpingSolver<'a> {
    pub fn new(mesh: &'a CrossSectionMesh, mat: &MaterialParams, cfg: WarpingConfig) -> Self {
        let tri = (0..mesh.n_triangles()).map(|t| mesh.triangle_geometry(t)).collect();
        let n = mesh.n_nodes();
        let key = |i: &usize| (mesh.nodes[*i].x, mesh.nodes[*i].y.abs());
        let by = |a: (f64, f64), b: (f64, f64)| a.partial_cmp(&b).unwrap_or(std::cmp::Ordering::Equal);
        let right = (0..n).max_by(|a, b| by((key(a).0, -key(a).1), (key(b).0, -key(b).1))).unwrap_or(0);
        let left = (0..n).min_by(|a, b| by(key(a), key(b))).unwrap_or(0);
        Self {
            mesh,
            mat: *mat,
            cfg,
            nh: NeoHookean::new(mat),
            tri,
            pins: [3 * right, 3 * right + 1, 3 * right + 2, 3 * left + 1],
            symbolic: OnceLock::new(),
        }
    }

    fn n_dof(&self) -> usize {
        3 * self.mesh.n_nodes()
    }

    fn active(&self) -> Vec<usize> {
        (0..3)
            .chain((0..4).filter(|&k| self.cfg.rotational[k]).map(|k| 3 + k))
            .collect()
    }

    fn abs_floor(&self) -> f64 {
        self.cfg.abs_tol * self.mat.youngs * self.mesh.geom.outer_radius.powi(3)
    }

    fn quad_points(&self, t: usize) -> impl Iterator<Item = (usize, [f64; 3], f64)> + '_ {
        let area = self.tri[t].area;
        self.cfg
            .rule
            .points()
            .iter()
            .enumerate()
            .map(move |(q, (bary, w))| (q, *bary, w * area))
    }

    fn reference_point(&self, t: usize, bary: &[f64; 3]) -> Vector2<f64> {
        let tri = self.mesh.triangles[t];
        (0..3).map(|a| self.mesh.nodes[tri[a]] * bary[a]).sum()
    }

    /// Deformation gradient and interpolated position at a quadrature point.
    fn kinematics(&self, p: &StrainState, xhat: &[Vector3<f64>], t: usize, bary: &[f64; 3]) -> (Matrix3<f64>, Vector3<f64>) {
        let tri = self.mesh.triangles[t];
        let g = &self.tri[t].grads;
        let mut c0 = Vector3::zeros();
        let mut c1 = Vector3::zeros();
        let mut xq = Vector3::zeros();
        for a in 0..3 {
            let x = xhat[tri[a]];
            c0 += x * g[a].x;
            c1 += x * g[a].y;
            xq += x * bary[a];
        }
        let c2 = p.eps + Vector3::z() + p.kappa.cross(&xq);
        (Matrix3::from_columns(&[c0, c1, c2]), xq)
    }

    fn inadmissible(&self, t: usize, q: usize, bary: &[f64; 3], det: f64) -> Error {
        let x = self.reference_point(t, bary);
        Error::Inadmissible {
            point: t * self.cfg.rule.points().len() + q,
            x: x.x,
            y: x.y,
            det,
        }
    }

    /// Energy of the section for given nodal positions.
    pub fn energy(&self, p: &StrainState, xhat: &[Vector3<f64>]) -> Result<f64> {
        let mut psi = 0.0;
        for t in 0..self.mesh.n_triangles() {
            for (q, bary, w) in self.quad_points(t) {
                let (f, _) = self.kinematics(p, xhat, t, &bary);
                psi += w * self
                    .nh
                    .energy(&f)
                    .map_err(|_| self.inadmissible(t, q, &bary, f.determinant()))?;
            }
        }
        Ok(psi)
    }

    /// Values of the seven constraint integrals.
    pub fn constraint_values(&self, xhat: &[Vector3<f64>]) -> [f64; N_CONSTRAINTS] {
        let mut c = [0.0; N_CONSTRAINTS];
        for t in 0..self.mesh.n_triangles() {
            let tri = self.mesh.triangles[t];
            let skip_angle = self.mesh.touches_origin(t);
            for (_, bary, w) in self.quad_points(t) {
                let xq: Vector3<f64> = (0..3).map(|a| xhat[tri[a]] * bary[a]).sum();
                c[0] += w * xq.x;
                c[1] += w * xq.y;
                c[2] += w * xq.z;
                c[3] += w * xq.y * xq.z;
                c[4] += w * xq.x * xq.z;
                c[5] += w * xq.x * xq.y;
                if !skip_angle {
                    c[6] += w * angle_between(&self.reference_point(t, &bary), &xq);
                }
            }
        }
        c
    }

    fn assemble(&self, p: &StrainState, sol: &WarpingSolution) -> Result<Assembly> {
        let n = self.n_dof();
        let xhat = &sol.xhat;
        let mult = [
            sol.lambda.x,
            sol.lambda.y,
            sol.lambda.z,
            sol.mu[0],
            sol.mu[1],
            sol.mu[2],
            sol.mu[3],
        ];
        let mut grad = DVector::zeros(n);
        let mut constraints = [0.0; N_CONSTRAINTS];
        let mut jac = vec![DVector::zeros(n); N_CONSTRAINTS];
        let mut triplets = Vec::with_capacity(81 * self.mesh.n_triangles());
        let kx = skew(&p.kappa);
        let mut diag_sum = 0.0;

        for t in 0..self.mesh.n_triangles() {
            let tri = self.mesh.triangles[t];
            let g = &self.tri[t].grads;
            let skip_angle = self.mesh.touches_origin(t);
            let mut ke = Mat9::zeros();
            let mut re = Vec9::zeros();
            for (q, bary, w) in self.quad_points(t) {
                let (f, xq) = self.kinematics(p, xhat, t, &bary);
                let (_, pk, a) = self
                    .nh
                    .evaluate(&f)
                    .map_err(|_| self.inadmissible(t, q, &bary, f.determinant()))?;
                let mut b = Mat9::zeros();
                for node in 0..3 {
                    for k in 0..3 {
                        b[(flat(k, 0), 3 * node + k)] = g[node].x;
                        b[(flat(k, 1), 3 * node + k)] = g[node].y;
                        for i in 0..3 {
                            b[(flat(i, 2), 3 * node + k)] = bary[node] * kx[(i, k)];
                        }
                    }
                }
                let pv = Vec9::from_fn(|r, _| pk[(r / 3, r % 3)]);
                re += w * b.transpose() * pv;
                ke += w * b.transpose() * a * b;

                // Constraint values, gradients and multiplier-weighted Hessians.
                let (x1, x2, x3) = (xq.x, xq.y, xq.z);
                let mut grads_q: [Vector3<f64>; N_CONSTRAINTS] = [
                    Vector3::x(),
                    Vector3::y(),
                    Vector3::z(),
                    Vector3::new(0.0, x3, x2),
                    Vector3::new(x3, 0.0, x1),
                    Vector3::new(x2, x1, 0.0),
                    Vector3::zeros(),
                ];
                let vals = [x1, x2, x3, x2 * x3, x1 * x3, x1 * x2];
                for k in 0..6 {
                    constraints[k] += w * vals[k];
                }
                let mut hq = Matrix3::zeros();
                hq[(1, 2)] += mult[3];
                hq[(2, 1)] += mult[3];
                hq[(0, 2)] += mult[4];
                hq[(2, 0)] += mult[4];
                hq[(0, 1)] += mult[5];
                hq[(1, 0)] += mult[5];
                if !skip_angle {
                    let r2 = x1 * x1 + x2 * x2;
                    constraints[6] += w * angle_between(&self.reference_point(t, &bary), &xq);
                    grads_q[6] = Vector3::new(-x2 / r2, x1 / r2, 0.0);
                    let r4 = r2 * r2;
                    let m4 = mult[6];
                    hq[(0, 0)] += m4 * 2.0 * x1 * x2 / r4;
                    hq[(1, 1)] -= m4 * 2.0 * x1 * x2 / r4;
                    hq[(0, 1)] += m4 * (x2 * x2 - x1 * x1) / r4;
                    hq[(1, 0)] += m4 * (x2 * x2 - x1 * x1) / r4;
                }
                for an in 0..3 {
                    for k in 0..N_CONSTRAINTS {
                        let gk = grads_q[k] * (w * bary[an]);
                        for c in 0..3 {
                            jac[k][3 * tri[an] + c] += gk[c];
                        }
                    }
                    for bn in 0..3 {
                        let h = hq * (w * bary[an] * bary[bn]);
                        let mut blk = ke.fixed_view_mut::<3, 3>(3 * an, 3 * bn);
                        blk += h;
                    }
                }
            }
            for an in 0..3 {
                for c in 0..3 {
                    grad[3 * tri[an] + c] += re[3 * an + c];
                }
            }
            for an in 0..3 {
                for bn in 0..3 {
                    for c in 0..3 {
                        for d in 0..3 {
                            let v = ke[(3 * an + c, 3 * bn + d)];
                            if an == bn && c == d {
                                diag_sum += v.abs();
                            }
                            triplets.push(Triplet::new(3 * tri[an] + c, 3 * tri[bn] + d, v));
                        }
                    }
                }
            }
        }
        for k in 0..N_CONSTRAINTS {
            grad.axpy(mult[k], &jac[k], 1.0);
        }
        Ok(Assembly {
            grad,
            constraints,
            jac,
            triplets,
            diag_scale: diag_sum / n as f64,
        })
    }

    fn residual_norm(&self, asm: &Assembly) -> f64 {
        let c2: f64 = self.active().iter().map(|&k| asm.constraints[k].powi(2)).sum();
        (asm.grad.norm_squared() + c2).sqrt()
    }

    /// Newton direction for nodal positions and active multipliers.
    fn newton_step(&self, asm: Assembly) -> Result<(DVector<f64>, Vec<f64>)> {
        let n = self.n_dof();
        let active = self.active();
        let m = active.len();
        let rho = asm.diag_scale.max(f64::MIN_POSITIVE);
        let mut triplets = asm.triplets;
        for &d in &self.pins {
            triplets.push(Triplet::new(d, d, rho));
        }
        let h = SparseColMat::<usize, f64>::try_new_from_triplets(n, n, &triplets)
            .map_err(|e| Error::LinearSolve(format!("{e:?}")))?;
        let symbolic = match self.symbolic.get() {
            Some(s) => s.clone(),
            None => {
                let s = SymbolicLu::try_new(h.symbolic()).map_err(|e| Error::LinearSolve(format!("{e:?}")))?;
                self.symbolic.get_or_init(|| s).clone()
            }
        };
        let lu = Lu::try_new_with_symbolic(symbolic, h.as_ref()).map_err(|e| Error::LinearSolve(format!("{e:?}")))?;

        let np = self.pins.len();
        let mut rhs = Mat::<f64>::zeros(n, 1 + m + np);
        for i in 0..n {
            rhs[(i, 0)] = asm.grad[i];
            for (j, &k) in active.iter().enumerate() {
                rhs[(i, 1 + j)] = asm.jac[k][i];
            }
        }
        for (j, &d) in self.pins.iter().enumerate() {
            rhs[(d, 1 + m + j)] = 1.0;
        }
        let z = lu.solve(&rhs);
        let col = |c: usize| DVector::from_fn(n, |i, _| z[(i, c)]);
        let zg = col(0);
        let zc: Vec<_> = (0..m).map(|j| col(1 + j)).collect();
        let ze: Vec<_> = (0..np).map(|j| col(1 + m + j)).collect();

        // Unknowns: multiplier increments (m) and pinned displacement components (np).
        let dim = m + np;
        let mut s = DMatrix::<f64>::zeros(dim, dim);
        let mut b = DVector::<f64>::zeros(dim);
        for (i, &d) in self.pins.iter().enumerate() {
            let row = i;
            for j in 0..m {
                s[(row, j)] = zc[j][d];
            }
            for j in 0..np {
                s[(row, m + j)] = if i == j { 1.0 } else { 0.0 } - rho * ze[j][d];
            }
            b[row] = -zg[d];
        }
        for (i, &k) in active.iter().enumerate() {
            let row = np + i;
            let ck = &asm.jac[k];
            for j in 0..m {
                s[(row, j)] = ck.dot(&zc[j]);
            }
            for j in 0..np {
                s[(row, m + j)] = -rho * ck.dot(&ze[j]);
            }
            b[row] = asm.constraints[k] - ck.dot(&zg);
        }
        let sol = s
            .lu()
            .solve(&b)
            .ok_or_else(|| Error::LinearSolve("singular bordered system".into()))?;
        let mut dx = -zg;
        for j in 0..m {
            dx.axpy(-sol[j], &zc[j], 1.0);
        }
        for j in 0..np {
            dx.axpy(rho * sol[m + j], &ze[j], 1.0);
        }
        if !dx.iter().all(|v| v.is_finite()) || !sol.iter().all(|v| v.is_finite()) {
            return Err(Error::LinearSolve("non-finite Newton step".into()));
        }
        Ok((dx, sol.as_slice()[..m].to_vec()))
    }

    fn apply(&self, sol: &WarpingSolution, dx: &DVector<f64>, dm: &[f64], alpha: f64) -> WarpingSolution {
        let mut next = sol.clone();
        for (i, x) in next.xhat.iter_mut().enumerate() {
            *x += alpha * Vector3::new(dx[3 * i], dx[3 * i + 1], dx[3 * i + 2]);
        }
        for (j, &k) in self.active().iter().enumerate() {
            if k < 3 {
                next.lambda[k] += alpha * dm[j];
            } else {
                next.mu[k - 3] += alpha * dm[j];
            }
        }
        next
    }

    pub fn solve(&self, p: &StrainState, init: Option<&WarpingSolution>) -> Result<WarpingSolution> {
        let mut sol = match init {
            Some(s) => {
                if s.xhat.len() != self.mesh.n_nodes() {
                    return Err(Error::Dimension {
                        expected: self.mesh.n_nodes(),
                        got: s.xhat.len(),
                    });
                }
                s.clone()
            }
            None => WarpingSolution::identity(self.mesh),
        };
        let mut asm = self.assemble(p, &sol)?;
        let r0 = self.residual_norm(&asm);
        let tol = (self.cfg.rel_tol * r0).max(self.abs_floor());
        let mut res = r0;
        let mut it = 0;
        while res > tol {
            if it == self.cfg.max_iterations {
                return Err(Error::NoConvergence {
                    iterations: it,
                    residual: res,
                });
            }
            let (dx, dm) = self.newton_step(asm)?;
            let mut alpha = 1.0;
            let mut halvings = 0;
            loop {
                let trial = self.apply(&sol, &dx, &dm, alpha);
                match self.assemble(p, &trial) {
                    Ok(a) => {
                        sol = trial;
                        asm = a;
                        break;
                    }
                    Err(e @ Error::Inadmissible { .. }) => {
                        if halvings == self.cfg.max_halvings {
                            return Err(e);
                        }
                        halvings += 1;
                        alpha *= 0.5;
                    }
                    Err(e) => return Err(e),
                }
            }
            it += 1;
            res = self.residual_norm(&asm);
            if !res.is_finite() {
                return Err(Error::NoConvergence {
                    iterations: it,
                    residual: res,
                });
            }
        }
        sol.converged = true;
        sol.residual_norm = res;
        sol.iterations = it;
        Ok(sol)
    }

    /// Beam potential and stress resultants of a converged solution.
    pub fn resultants(&self, sol: &WarpingSolution, p: &StrainState) -> Result<(f64, StressResultants)> {
        if !sol.converged {
            return Err(Error::Unconverged);
        }
        let mut psi = 0.0;
        let mut n = Vector3::zeros();
        let mut m = Vector3::zeros();
        for t in 0..self.mesh.n_triangles() {
            for (q, bary, w) in self.quad_points(t) {
                let (f, xq) = self.kinematics(p, &sol.xhat, t, &bary);
                let (e, pk, _) = self
                    .nh
                    .evaluate(&f)
                    .map_err(|_| self.inadmissible(t, q, &bary, f.determinant()))?;
                let t3 = pk.column(2).into_owned();
                psi += w * e;
                n += w * t3;
                m += w * xq.cross(&t3);
            }
        }
        Ok((psi, StressResultants { n, m }))
    }

    /// Solves `p` starting from `(p_from, base)`, bisecting failed steps up to `depth` times.
    fn advance(&self, base: &WarpingSolution, p_from: &StrainState, p_to: &StrainState, depth: usize) -> Result<WarpingSolution> {
        match self.solve(p_to, Some(base)) {
            Ok(s) => Ok(s),
            Err(e) if depth == 0 || !e.is_numerical() => Err(e),
            Err(_) => {
                let mid = StrainState::from_vector(&(0.5 * (p_from.to_vector() + p_to.to_vector())));
                let s_mid = self.advance(base, p_from, &mid, depth - 1)?;
                self.advance(&s_mid, &mid, p_to, depth - 1)
            }
        }
    }

    pub fn trace(&self, path: &[StrainState]) -> Result<PathTrace> {
        let mut rows = Vec::with_capacity(path.len());
        let mut base = WarpingSolution::identity(self.mesh);
        base.converged = true;
        let mut p_prev = StrainState::zero();
        let mut truncated_at = None;
        let mut max_warping: f64 = 0.0;
        for (i, p) in path.iter().enumerate() {
            let attempt = self
                .advance(&base, &p_prev, p, TRACE_BISECTIONS)
                .and_then(|s| self.resultants(&s, p).map(|r| (s, r)));
            match attempt {
                Ok((s, (psi, q))) => {
                    max_warping = max_warping.max(s.max_abs_warping(self.mesh));
                    rows.push(TraceRow { p: *p, psi, q });
                    base = s;
                    p_prev = *p;
                }
                Err(e) if i == 0 => return Err(Error::PathAbandoned(e.to_string())),
                Err(e) if e.is_numerical() => {
                    truncated_at = Some(i);
                    break;
                }
                Err(e) => return Err(e),
            }
        }
        Ok(PathTrace {
            rows,
            truncated_at,
            last: base,
            max_warping,
        })
    }
}

/// Maximum number of step bisections during continuation.
pub const TRACE_BISECTIONS: usize = 4;

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct TraceRow {
    pub p: StrainState,
    pub psi: f64,
    pub q: StressResultants,
}

#[derive(Clone, Debug)]
pub struct PathTrace {
    pub rows: Vec<TraceRow>,
    /// Index of the first state that could not be solved.
    pub truncated_at: Option<usize>,
    /// Solution at the last converged state.
    pub last: WarpingSolution,
    /// Largest out-of-plane displacement seen along the path.
    pub max_warping: f64,
}

pub fn solve_warping(
    p: &StrainState,
    mesh: &CrossSectionMesh,
    mat: &MaterialParams,
    init: Option<&WarpingSolution>,
) -> Result<WarpingSolution> {
    WarpingSolver::new(mesh, mat, WarpingConfig::default()).solve(p, init)
}

pub fn dhm_resultants(
    sol: &WarpingSolution,
    p: &StrainState,
    mesh: &CrossSectionMesh,
    mat: &MaterialParams,
) -> Result<(f64, StressResultants)> {
    WarpingSolver::new(mesh, mat, WarpingConfig::default()).resultants(sol, p)
}

pub fn trace_load_path(path: &[StrainState], mesh: &CrossSectionMesh, mat: &MaterialParams) -> Result<PathTrace> {
    WarpingSolver::new(mesh, mat, WarpingConfig::default()).trace(path)
}

/// Convenience: solve from the reference embedding and return `(ψ, q)`.
pub fn dhm_evaluate(p: &StrainState, mesh: &CrossSectionMesh, mat: &MaterialParams) -> Result<(f64, StressResultants)> {
    let solver = WarpingSolver::new(mesh, mat, WarpingConfig::default());
    let sol = solver.solve(p, None)?;
    solver.resultants(&sol, p)
}
