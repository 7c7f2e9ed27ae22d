use std::f64::consts::PI;
use std::io::Write;
use std::path::Path;

use nalgebra::Vector3;

use super::solver::{BeamBvp, BeamSolution};
use crate::error::Result;

/// Cantilever of length `length` under an end moment `moment` about `E₁`.
pub fn bending_bvp(length: f64, moment: f64, steps: usize) -> BeamBvp {
    BeamBvp {
        tip_moment: Vector3::new(moment, 0.0, 0.0),
        steps,
        ..BeamBvp::cantilever(length)
    }
}

/// Default imperfection curvature for the compression case.
pub fn buckling_imperfection(length: f64) -> f64 {
    1e-3 * PI / length
}

/// Beam with both end frames held, the far end pushed axially by
/// `shortening`; a small initial curvature selects the buckling direction.
pub fn compression_bvp(length: f64, shortening: f64, steps: usize) -> BeamBvp {
    BeamBvp {
        initial_curvature: Vector3::new(buckling_imperfection(length), 0.0, 0.0),
        tip_displacement: Some(Vector3::new(0.0, 0.0, -shortening)),
        tip_rotation_fixed: true,
        steps,
        ..BeamBvp::cantilever(length)
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct BendingSummary {
    /// End rotation about `E₁` in degrees, accumulated along the beam.
    pub tip_rotation_deg: f64,
    pub mean_kappa1: f64,
    pub min_kappa1: f64,
    pub max_kappa1: f64,
    pub max_eps3: f64,
    pub max_abs_eps3: f64,
}

pub fn bending_summary(sol: &BeamSolution) -> BendingSummary {
    let last = sol.last();
    let k: Vec<f64> = last.strains.iter().map(|p| p.kappa.x).collect();
    let e3: Vec<f64> = last.strains.iter().map(|p| p.eps.z).collect();
    let turn: f64 = (0..last.strains.len()).map(|e| last.state.element_length(e) * k[e]).sum();
    BendingSummary {
        tip_rotation_deg: turn.to_degrees(),
        mean_kappa1: k.iter().sum::<f64>() / k.len() as f64,
        min_kappa1: k.iter().cloned().fold(f64::INFINITY, f64::min),
        max_kappa1: k.iter().cloned().fold(f64::NEG_INFINITY, f64::max),
        max_eps3: e3.iter().cloned().fold(f64::NEG_INFINITY, f64::max),
        max_abs_eps3: e3.iter().map(|v| v.abs()).fold(0.0, f64::max),
    }
}

/// Largest distance of any node from the straight line through the supports.
pub fn max_transverse_deflection(sol: &BeamSolution, step: usize) -> f64 {
    let r = &sol.steps[step].state.r;
    r.iter().map(|x| (x.x * x.x + x.y * x.y).sqrt()).fold(0.0, f64::max)
}

/// Node table: `s, r1, r2, r3, qw, qx, qy, qz`.
pub fn write_state_csv(sol: &BeamSolution, step: usize, path: &Path, comments: &[String]) -> Result<()> {
    let st = &sol.steps[step];
    let mut w = header(path, comments)?;
    w.write_record(["s", "r1", "r2", "r3", "qw", "qx", "qy", "qz"])?;
    for ((s, r), q) in st.state.s.iter().zip(&st.state.r).zip(&st.state.q) {
        let q = q.quaternion();
        w.write_record([*s, r.x, r.y, r.z, q.w, q.i, q.j, q.k].map(|v| format!("{v:?}")))?;
    }
    w.flush()?;
    Ok(())
}

/// Element table at the element midpoints: strains and resultants.
pub fn write_strains_csv(sol: &BeamSolution, step: usize, path: &Path, comments: &[String]) -> Result<()> {
    let st = &sol.steps[step];
    let mut w = header(path, comments)?;
    w.write_record([
        "s", "eps1", "eps2", "eps3", "kappa1", "kappa2", "kappa3", "n1", "n2", "n3", "m1", "m2", "m3",
    ])?;
    for (e, (p, q)) in st.strains.iter().zip(&st.resultants).enumerate() {
        let s = 0.5 * (st.state.s[e] + st.state.s[e + 1]);
        let rec: Vec<String> = std::iter::once(s)
            .chain(p.to_array())
            .chain(q.to_array())
            .map(|v| format!("{v:?}"))
            .collect();
        w.write_record(&rec)?;
    }
    w.flush()?;
    Ok(())
}

/// Load history: end displacement, end loads and base reactions per step.
pub fn write_history_csv(sol: &BeamSolution, path: &Path, comments: &[String]) -> Result<()> {
    let mut w = header(path, comments)?;
    w.write_record([
        "step", "load_factor", "u1", "u2", "u3", "tip_rotation_deg", "f1", "f2", "f3", "M1", "M2", "M3", "max_deflection",
        "max_eps3", "energy", "off_branch",
    ])?;
    let r0 = sol.steps[0].state.r.last().copied().unwrap_or_default();
    for (k, st) in sol.steps.iter().enumerate() {
        let u = st.state.r.last().copied().unwrap_or_default() - r0;
        let angle = st.state.q.last().map(|q| q.angle().to_degrees()).unwrap_or(0.0);
        let max_e3 = st.strains.iter().map(|p| p.eps.z).fold(f64::NEG_INFINITY, f64::max);
        let [f, m] = st.tip_load;
        let vals = [
            st.load_factor,
            u.x,
            u.y,
            u.z,
            angle,
            f.x,
            f.y,
            f.z,
            m.x,
            m.y,
            m.z,
            max_transverse_deflection(sol, k),
            max_e3,
            st.internal_energy,
        ];
        let rec: Vec<String> = std::iter::once(k.to_string())
            .chain(vals.iter().map(|v| format!("{v:?}")))
            .chain(std::iter::once(st.off_branch.to_string()))
            .collect();
        w.write_record(&rec)?;
    }
    w.flush()?;
    Ok(())
}

fn header(path: &Path, comments: &[String]) -> Result<csv::Writer<std::io::BufWriter<std::fs::File>>> {
    let mut f = std::io::BufWriter::new(std::fs::File::create(path)?);
    for c in comments {
        writeln!(f, "# {c}")?;
    }
    Ok(csv::Writer::from_writer(f))
}
