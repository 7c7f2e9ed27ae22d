//! Hyperelastic beam model with a rigid cross-section.

use nalgebra::{Vector2, Vector3};

use crate::continuum::{defgrad_rigid, NeoHookean};
use crate::error::{Error, Result};
use crate::mesh::{CrossSectionMesh, Quadrature};
use crate::section::{MaterialParams, StrainState, StressResultants};

/// Integrates the Neo-Hookean energy over the rigidly embedded section.
pub fn rhm_evaluate_with(
    p: &StrainState,
    mesh: &CrossSectionMesh,
    mat: &MaterialParams,
    rule: Quadrature,
) -> Result<(f64, StressResultants)> {
    let nh = NeoHookean::new(mat);
    let mut psi = 0.0;
    let mut n = Vector3::zeros();
    let mut m = Vector3::zeros();
    let mut point = 0;
    for (t, tri) in mesh.triangles.iter().enumerate() {
        let area = mesh.signed_area(t);
        for (bary, w) in rule.points() {
            let x: Vector2<f64> = (0..3).map(|a| mesh.nodes[tri[a]] * bary[a]).sum();
            let f = defgrad_rigid(p, &x);
            let (e, pk) = match (nh.energy(&f), nh.stress(&f)) {
                (Ok(e), Ok(pk)) => (e, pk),
                _ => {
                    return Err(Error::Inadmissible {
                        point,
                        x: x.x,
                        y: x.y,
                        det: f.determinant(),
                    })
                }
            };
            let wa = w * area;
            let t3 = pk.column(2).into_owned();
            psi += wa * e;
            n += wa * t3;
            m += wa * Vector3::new(x.x, x.y, 0.0).cross(&t3);
            point += 1;
        }
    }
    Ok((psi, StressResultants { n, m }))
}

pub fn rhm_evaluate(p: &StrainState, mesh: &CrossSectionMesh, mat: &MaterialParams) -> Result<(f64, StressResultants)> {
    rhm_evaluate_with(p, mesh, mat, Quadrature::Centroid)
}
