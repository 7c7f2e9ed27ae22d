//! Physics-augmented neural beam potentials.
//!
//! A softplus network is wrapped with projection terms so that energy and
//! stress vanish at zero strain. Variants feed the network with the raw
//! strains, with strains reflected into one half-space (point symmetry), or
//! with transversely isotropic invariants. Ring sections may pass `P` as an
//! additional input.

pub mod invariants;
pub mod mlp;
pub mod model;

pub use invariants::{reflect, ti_invariants, ti_invariants_with_derivatives};
pub use mlp::{logistic, softplus, Mlp};
pub use model::{reference_strain, Offsets, PannModel, RatioMode, Variant};

#[cfg(test)]
mod tests {
    use super::*;
    use crate::error::Error;
    use crate::section::StrainState;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    const VARIANTS: [Variant; 3] = [Variant::Plain, Variant::PointSymmetric, Variant::TransverselyIsotropic];

    /// Model with biases and weights moved away from the Glorot start.
    fn model(variant: Variant, ratio: RatioMode, seed: u64) -> PannModel {
        let hidden = PannModel::default_hidden(matches!(ratio, RatioMode::Input(_)));
        let mut m = PannModel::new(variant, &hidden, 1.0, ratio, seed).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(seed + 100);
        let theta: Vec<f64> = m.params().iter().map(|t| t + rng.random_range(-0.2..0.2)).collect();
        m.set_params(&theta).unwrap();
        m
    }

    fn random_strain(rng: &mut ChaCha8Rng) -> StrainState {
        StrainState::from_array(std::array::from_fn(|_| rng.random_range(-0.5..0.5)))
    }

    #[test]
    fn normalization_for_every_variant_and_ratio() {
        for v in VARIANTS {
            let m = model(v, RatioMode::Fixed(0.0), 1);
            let (psi, q, _) = m.evaluate(&StrainState::zero(), None).unwrap();
            assert_eq!(psi, 0.0);
            assert!(q.to_vector().norm() < 1e-12);
            let pm = model(v, RatioMode::Input([0.0, 0.5]), 2);
            for k in 0..11 {
                let r = 0.05 * k as f64;
                assert_eq!(pm.energy(&StrainState::zero(), Some(r)).unwrap(), 0.0);
                assert!(pm.stress(&StrainState::zero(), Some(r)).unwrap().to_vector().norm() < 1e-12);
            }
            assert!(matches!(pm.energy(&StrainState::zero(), None), Err(Error::MissingRatio)));
        }
    }

    #[test]
    fn ti_axial_offset_only() {
        let m = model(Variant::TransverselyIsotropic, RatioMode::Fixed(0.0), 3);
        assert_eq!(m.offsets(None).unwrap().stress.len(), 1);
        let h = 1e-6;
        let up = m.energy(&StrainState::new([0.0, 0.0, h], [0.0; 3]), None).unwrap();
        let dn = m.energy(&StrainState::new([0.0, 0.0, -h], [0.0; 3]), None).unwrap();
        assert!(((up - dn) / (2.0 * h)).abs() < 1e-8);
    }

    #[test]
    fn derivatives_match_finite_differences() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        for v in VARIANTS {
            for ratio in [RatioMode::Fixed(0.0), RatioMode::Input([0.0, 0.5])] {
                let m = model(v, ratio, 5);
                let r = Some(0.3);
                for _ in 0..10 {
                    let p = random_strain(&mut rng);
                    if invariants::hyperplane(&p).abs() < 1e-2 {
                        continue;
                    }
                    let (_, q, c) = m.evaluate(&p, r).unwrap();
                    assert!(c.is_symmetric(1e-14));
                    let (q, c) = (q.to_array(), c.0);
                    let h = 1e-6;
                    for i in 0..6 {
                        let mut a = p.to_array();
                        let mut b = a;
                        a[i] += h;
                        b[i] -= h;
                        let (pa, pb) = (StrainState::from_array(a), StrainState::from_array(b));
                        let fd = (m.energy(&pa, r).unwrap() - m.energy(&pb, r).unwrap()) / (2.0 * h);
                        assert!((fd - q[i]).abs() <= 1e-5 * q[i].abs().max(1e-3), "{v} q{i}: {fd} vs {}", q[i]);
                        let (qa, qb) = (m.stress(&pa, r).unwrap().to_array(), m.stress(&pb, r).unwrap().to_array());
                        for j in 0..6 {
                            let fd = (qa[j] - qb[j]) / (2.0 * h);
                            assert!((fd - c[(j, i)]).abs() <= 1e-5 * c[(j, i)].abs().max(1e-2), "{v} C{j}{i}");
                        }
                    }
                }
            }
        }
    }

    #[test]
    fn point_symmetry_is_exact() {
        let m = model(Variant::PointSymmetric, RatioMode::Fixed(0.0), 6);
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        for _ in 0..50 {
            let p = random_strain(&mut rng);
            let (psi, q, c) = m.evaluate(&p, None).unwrap();
            let (psi_m, q_m, c_m) = m.evaluate(&p.mirrored(), None).unwrap();
            assert_eq!(psi, psi_m);
            assert_eq!(q_m, q.mirrored());
            let s = invariants::MIRROR_SIGNS;
            for a in 0..6 {
                for b in 0..6 {
                    assert_eq!(c_m.0[(a, b)], s[a] * s[b] * c.0[(a, b)]);
                }
            }
        }
    }

    #[test]
    fn ti_symmetries() {
        let m = model(Variant::TransverselyIsotropic, RatioMode::Fixed(0.0), 8);
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        for _ in 0..20 {
            let p = random_strain(&mut rng);
            let psi = m.energy(&p, None).unwrap();
            assert!((m.energy(&p.mirrored(), None).unwrap() - psi).abs() < 1e-10);
            let t: f64 = rng.random_range(0.0..std::f64::consts::TAU);
            let (c, s) = (t.cos(), t.sin());
            let [e1, e2, e3, k1, k2, k3] = p.to_array();
            let rot = StrainState::from_array([c * e1 - s * e2, s * e1 + c * e2, e3, c * k1 - s * k2, s * k1 + c * k2, k3]);
            assert!((m.energy(&rot, None).unwrap() - psi).abs() < 1e-10);
        }
    }

    #[test]
    fn scaling_wrapper() {
        let m = model(Variant::Plain, RatioMode::Fixed(0.0), 10);
        let p = StrainState::from_array([0.1, -0.05, 0.08, 0.3, 0.2, -0.1]);
        assert_eq!(m.scaled_eval(&p, 1.0, None).unwrap(), m.evaluate(&p, None).unwrap());
        for lambda in [0.1, 0.3, 2.5] {
            let (psi_l, _, _) = m.scaled_eval(&p, lambda, None).unwrap();
            let psi = m.energy(&reference_strain(&p, lambda), None).unwrap();
            assert_eq!(psi_l, lambda * lambda * psi);
        }
        assert_eq!(m.scaled_eval(&StrainState::zero(), 0.1, None).unwrap().0, 0.0);
        assert!(matches!(m.scaled_eval(&p, 0.0, None), Err(Error::InvalidScale(_))));
        assert!(matches!(m.scaled_eval(&p, -1.0, None), Err(Error::InvalidScale(_))));
    }

    #[test]
    fn file_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for v in VARIANTS {
            for ratio in [RatioMode::Fixed(0.25), RatioMode::Input([0.0, 0.5])] {
                let m = model(v, ratio, 12);
                let path = dir.path().join("m.json");
                m.save(&path).unwrap();
                let back = PannModel::load(&path).unwrap();
                assert_eq!(back, m);
                for _ in 0..100 {
                    let p = random_strain(&mut rng);
                    let r = Some(rng.random_range(0.0..0.5));
                    assert_eq!(back.evaluate(&p, r).unwrap(), m.evaluate(&p, r).unwrap());
                }
            }
        }
        let text = model(Variant::Plain, RatioMode::Fixed(0.0), 1).to_json().unwrap();
        assert!(matches!(PannModel::from_json(&text[..text.len() / 2]), Err(Error::Schema(_))));
        let bad = text.replace("\"plain\"", "\"quadratic\"");
        assert!(matches!(PannModel::from_json(&bad), Err(Error::Schema(_))));
    }

    #[test]
    fn forced_branch_matches_natural_side() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let m = model(Variant::PointSymmetric, RatioMode::Fixed(0.0), 4);
        let plain = model(Variant::Plain, RatioMode::Fixed(0.0), 4);
        for _ in 0..20 {
            let p = random_strain(&mut rng);
            let side = m.branch(&p).unwrap();
            assert_eq!(m.evaluate_on(&p, None, Some(side)).unwrap(), m.evaluate(&p, None).unwrap());
            // The other piece is the mirrored continuation, smooth through the plane.
            let (psi, q, _) = m.evaluate_on(&p, None, Some(!side)).unwrap();
            let (psi_m, q_m, _) = m.evaluate_on(&p.mirrored(), None, Some(side)).unwrap();
            assert_eq!(psi, psi_m);
            assert!((q.to_vector() - q_m.mirrored().to_vector()).norm() < 1e-12);
            assert_eq!(plain.branch(&p), None);
        }
    }
}
