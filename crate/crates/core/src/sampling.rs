//! Concentric strain-space sampling.
//!
//! Directions are spread over the unit sphere in strain space by Riesz-energy
//! descent; each direction is walked outward along an amplitude ladder, every
//! point receives an independent random perturbation, and states outside the
//! strain box or violating impenetrability are dropped.

use nalgebra::{DVector, Vector2, Vector6};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use crate::continuum::defgrad_rigid;
use crate::section::{SectionGeometry, StrainState};

/// Beam length defining the curvature limits (a full turn over the length).
pub const REFERENCE_LENGTH: f64 = 10.0;

/// Cosine above which two directions count as duplicates.
const DUPLICATE_COS: f64 = 0.999;

#[derive(Clone, Debug, PartialEq)]
pub struct SamplingConfig {
    pub n_directions: usize,
    pub amplitudes: Vec<f64>,
    pub perturbation: f64,
    /// Lower and upper bound per strain component.
    pub limits: [(f64, f64); 6],
    pub seed: u64,
    pub riesz_iterations: usize,
}

impl SamplingConfig {
    pub fn new(n_directions: usize, seed: u64) -> Self {
        Self {
            n_directions,
            amplitudes: uniform_amplitudes(0.02, 0.6, 31),
            perturbation: 0.1,
            limits: default_limits(),
            seed,
            riesz_iterations: 300,
        }
    }

    pub fn with_perturbation(mut self, eps: f64) -> Self {
        self.perturbation = eps;
        self
    }

    pub fn with_amplitudes(mut self, amplitudes: Vec<f64>) -> Self {
        self.amplitudes = amplitudes;
        self
    }

    pub fn within_limits(&self, p: &StrainState) -> bool {
        p.to_array()
            .iter()
            .zip(&self.limits)
            .all(|(v, (lo, hi))| *v >= *lo && *v <= *hi)
    }
}

/// `ε₁, ε₂ ∈ [−0.2, 0.2]`, `ε₃ ∈ [−0.2, 0.5]`, `κᵢ ∈ [−2π/L, 2π/L]`.
pub fn default_limits() -> [(f64, f64); 6] {
    let k = 2.0 * std::f64::consts::PI / REFERENCE_LENGTH;
    [(-0.2, 0.2), (-0.2, 0.2), (-0.2, 0.5), (-k, k), (-k, k), (-k, k)]
}

/// `n` equally spaced amplitudes from `t_min` to `t_max` inclusive.
pub fn uniform_amplitudes(t_min: f64, t_max: f64, n: usize) -> Vec<f64> {
    match n {
        0 => vec![],
        1 => vec![t_max],
        _ => (0..n)
            .map(|i| t_min + (t_max - t_min) * i as f64 / (n - 1) as f64)
            .collect(),
    }
}

fn random_unit(rng: &mut ChaCha8Rng, dim: usize) -> DVector<f64> {
    loop {
        let v = DVector::from_fn(dim, |_, _| rng.sample::<f64, _>(StandardNormal));
        let n = v.norm();
        if n > 1e-12 {
            return v / n;
        }
    }
}

fn relax(points: &mut [DVector<f64>], iterations: usize) {
    let n = points.len();
    if n < 2 {
        return;
    }
    let dim = points[0].len();
    let s = (dim as f64 - 1.0).max(1.0);
    let mut step = 0.5;
    for _ in 0..iterations {
        let forces: Vec<DVector<f64>> = (0..n)
            .map(|i| {
                let mut f = DVector::zeros(dim);
                for j in 0..n {
                    if i != j {
                        let d = &points[i] - &points[j];
                        let r = d.norm().max(1e-9);
                        f += d * (s / r.powf(s + 2.0));
                    }
                }
                // Keep only the tangential part.
                let radial = f.dot(&points[i]);
                f - &points[i] * radial
            })
            .collect();
        let fmax = forces.iter().map(|f| f.norm()).fold(0.0, f64::max);
        if fmax < 1e-15 {
            break;
        }
        let spacing = (4.0 * std::f64::consts::PI / n as f64).powf(1.0 / (dim as f64 - 1.0).max(1.0));
        for (p, f) in points.iter_mut().zip(&forces) {
            *p += f * (step * spacing / fmax);
            let norm = p.norm();
            *p /= norm;
        }
        step *= 0.99;
    }
}

/// Quasi-uniform unit vectors in `dim` dimensions from seeded Riesz-energy descent.
pub fn sample_directions_with(n: usize, dim: usize, seed: u64, iterations: usize) -> Vec<DVector<f64>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut points: Vec<_> = (0..n).map(|_| random_unit(&mut rng, dim)).collect();
    relax(&mut points, iterations);
    for _ in 0..100 {
        let mut clean = true;
        for i in 1..points.len() {
            if (0..i).any(|j| points[i].dot(&points[j]) > DUPLICATE_COS) {
                points[i] = random_unit(&mut rng, dim);
                clean = false;
            }
        }
        if clean {
            break;
        }
        relax(&mut points, iterations / 4);
    }
    points
}

pub fn sample_directions(n: usize, dim: usize, seed: u64) -> Vec<DVector<f64>> {
    sample_directions_with(n, dim, seed, 300)
}

/// One concentric load path.
#[derive(Clone, Debug, PartialEq)]
pub struct LoadPath {
    pub direction: Vector6<f64>,
    pub amplitudes: Vec<f64>,
    pub states: Vec<StrainState>,
}

/// Builds one path per direction; states failing the box or impenetrability are dropped.
pub fn build_paths(cfg: &SamplingConfig, geom: &SectionGeometry) -> Vec<LoadPath> {
    let dirs = sample_directions_with(cfg.n_directions, 6, cfg.seed, cfg.riesz_iterations);
    let mut ts = cfg.amplitudes.clone();
    ts.sort_by(|a, b| a.total_cmp(b));
    dirs.iter()
        .enumerate()
        .map(|(k, d)| {
            let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
            rng.set_stream(k as u64 + 1);
            let dir = Vector6::from_iterator(d.iter().cloned());
            let mut amplitudes = Vec::new();
            let mut states = Vec::new();
            for &t in &ts {
                let mut p = dir * t;
                if cfg.perturbation > 0.0 {
                    let nr = random_unit(&mut rng, 6);
                    p += Vector6::from_iterator(nr.iter().cloned()) * (p.norm() * cfg.perturbation);
                }
                let s = StrainState::from_vector(&p);
                if cfg.within_limits(&s) && admissible(&s, geom) {
                    amplitudes.push(t);
                    states.push(s);
                }
            }
            LoadPath {
                direction: dir,
                amplitudes,
                states,
            }
        })
        .collect()
}

/// Smallest rigid-section `det F` over the corners of the bounding square.
pub fn corner_min_det(p: &StrainState, geom: &SectionGeometry) -> f64 {
    let r = geom.outer_radius;
    [(r, r), (r, -r), (-r, r), (-r, -r)]
        .iter()
        .map(|&(x, y)| defgrad_rigid(p, &Vector2::new(x, y)).determinant())
        .fold(f64::INFINITY, f64::min)
}

pub fn admissible(p: &StrainState, geom: &SectionGeometry) -> bool {
    corner_min_det(p, geom) > 0.0
}

#[cfg(test)]
mod tests {
    use super::*;

    fn min_angle(v: &[DVector<f64>]) -> f64 {
        let mut best = f64::INFINITY;
        for i in 0..v.len() {
            for j in 0..i {
                best = best.min(v[i].dot(&v[j]).clamp(-1.0, 1.0).acos());
            }
        }
        best
    }

    fn median(mut v: Vec<f64>) -> f64 {
        v.sort_by(|a, b| a.total_cmp(b));
        v[v.len() / 2]
    }

    #[test]
    fn two_directions() {
        let d = sample_directions(2, 6, 1);
        assert_eq!(d.len(), 2);
        for v in &d {
            assert!((v.norm() - 1.0).abs() < 1e-12);
        }
        assert!(d[0].dot(&d[1]) < 0.0);
    }

    #[test]
    fn riesz_spreads_better_than_iid() {
        let mut relaxed = Vec::new();
        let mut iid = Vec::new();
        let mut balance = Vec::new();
        for seed in 0..10 {
            let d = sample_directions(64, 6, seed);
            relaxed.push(min_angle(&d));
            balance.push(d.iter().sum::<DVector<f64>>().norm() / 64.0);
            let mut rng = ChaCha8Rng::seed_from_u64(1000 + seed);
            let r: Vec<_> = (0..64).map(|_| random_unit(&mut rng, 6)).collect();
            iid.push(min_angle(&r));
        }
        assert!(median(relaxed) > median(iid));
        assert!(balance.iter().all(|&b| b < 0.15), "{balance:?}");
    }

    #[test]
    fn unperturbed_paths_are_rays() {
        let g = SectionGeometry::disc(1.0).unwrap();
        let cfg = SamplingConfig::new(8, 3).with_perturbation(0.0);
        let dirs = sample_directions_with(8, 6, 3, cfg.riesz_iterations);
        for (path, d) in build_paths(&cfg, &g).iter().zip(&dirs) {
            for (t, s) in path.amplitudes.iter().zip(&path.states) {
                let expect = Vector6::from_iterator(d.iter().cloned()) * *t;
                assert_eq!(s.to_vector(), expect);
            }
        }
    }

    #[test]
    fn perturbed_norms_and_limits() {
        let g = SectionGeometry::disc(1.0).unwrap();
        let cfg = SamplingConfig::new(16, 9);
        for path in build_paths(&cfg, &g) {
            assert!(path.amplitudes.windows(2).all(|w| w[0] < w[1]));
            for (t, s) in path.amplitudes.iter().zip(&path.states) {
                let n = s.norm();
                assert!(n >= (1.0 - cfg.perturbation) * t - 1e-12 && n <= (1.0 + cfg.perturbation) * t + 1e-12);
                assert!(cfg.within_limits(s));
                assert!(admissible(s, &g));
            }
        }
    }

    #[test]
    fn deterministic_and_separable() {
        let g = SectionGeometry::disc(1.0).unwrap();
        let a = build_paths(&SamplingConfig::new(6, 42), &g);
        let b = build_paths(&SamplingConfig::new(6, 42), &g);
        assert_eq!(a, b);
        let c = build_paths(&SamplingConfig::new(6, 42).with_amplitudes(vec![0.1, 0.2]), &g);
        let da: Vec<_> = a.iter().map(|p| p.direction).collect();
        let dc: Vec<_> = c.iter().map(|p| p.direction).collect();
        assert_eq!(da, dc);
    }

    #[test]
    fn corner_determinants() {
        let g = SectionGeometry::disc(1.0).unwrap();
        assert!(admissible(&StrainState::zero(), &g));
        let p = StrainState::new([0.0, 0.0, -0.99], [0.0; 3]);
        assert!((corner_min_det(&p, &g) - 0.01).abs() < 1e-12);
        assert!(admissible(&p, &g));
        assert!(!admissible(&StrainState::new([0.0, 0.0, -1.1], [0.0; 3]), &g));
        let k = 2.0 * std::f64::consts::PI / 10.0;
        let p = StrainState::new([0.0; 3], [k, 0.0, 0.0]);
        assert!((corner_min_det(&p, &g) - (1.0 - k)).abs() < 1e-12);
        assert!(admissible(&p, &g));
        assert!(!admissible(&StrainState::new([0.0; 3], [1.0, 0.1, 0.0]), &g));
    }
}
