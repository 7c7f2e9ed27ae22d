//! Linear-triangle meshes of discs and annuli.
//!
//! Nodes sit on concentric rings. Ring `k` carries a multiple of four equally
//! spaced nodes starting at angle zero, roughly proportional to its radius.
//! Neighbouring rings are stitched in the first quadrant by merging their
//! angular sequences and the result is mirrored about both axes, so the mesh
//! is symmetric under `X₁ ↦ −X₁`, `X₂ ↦ −X₂` and `X ↦ −X`. A full disc gets
//! one node at the origin and a central fan.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use nalgebra::{Matrix2, Vector2};

use crate::error::{Error, Result};
use crate::section::SectionGeometry;

#[derive(Clone, Debug, PartialEq)]
pub struct CrossSectionMesh {
    pub nodes: Vec<Vector2<f64>>,
    pub triangles: Vec<[usize; 3]>,
    pub geom: SectionGeometry,
    /// Index of the node at the origin (full discs only).
    pub origin: Option<usize>,
}

/// Precomputed linear-triangle data.
#[derive(Clone, Copy, Debug)]
pub struct TriangleGeometry {
    pub area: f64,
    pub centroid: Vector2<f64>,
    /// Rows are `∂N_a/∂X` for the three vertices.
    pub grads: [Vector2<f64>; 3],
}

/// Triangle quadrature rule.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub enum Quadrature {
    #[default]
    Centroid,
    ThreePoint,
}

impl Quadrature {
    /// Barycentric coordinates and weights (fractions of the triangle area).
    pub fn points(self) -> &'static [([f64; 3], f64)] {
        const C: [([f64; 3], f64); 1] = [([1.0 / 3.0, 1.0 / 3.0, 1.0 / 3.0], 1.0)];
        const T: [([f64; 3], f64); 3] = [
            ([2.0 / 3.0, 1.0 / 6.0, 1.0 / 6.0], 1.0 / 3.0),
            ([1.0 / 6.0, 2.0 / 3.0, 1.0 / 6.0], 1.0 / 3.0),
            ([1.0 / 6.0, 1.0 / 6.0, 2.0 / 3.0], 1.0 / 3.0),
        ];
        match self {
            Quadrature::Centroid => &C,
            Quadrature::ThreePoint => &T,
        }
    }
}

impl CrossSectionMesh {
    pub fn n_nodes(&self) -> usize {
        self.nodes.len()
    }

    pub fn n_triangles(&self) -> usize {
        self.triangles.len()
    }

    pub fn signed_area(&self, t: usize) -> f64 {
        let [a, b, c] = self.triangles[t];
        let (a, b, c) = (self.nodes[a], self.nodes[b], self.nodes[c]);
        0.5 * ((b - a).perp(&(c - a)))
    }

    pub fn triangle_geometry(&self, t: usize) -> TriangleGeometry {
        let [ia, ib, ic] = self.triangles[t];
        let (a, b, c) = (self.nodes[ia], self.nodes[ib], self.nodes[ic]);
        let jac = Matrix2::from_columns(&[b - a, c - a]);
        let det = jac.determinant();
        let inv_t = Matrix2::new(jac[(1, 1)], -jac[(1, 0)], -jac[(0, 1)], jac[(0, 0)]) / det;
        let g1 = inv_t.column(0).into_owned();
        let g2 = inv_t.column(1).into_owned();
        TriangleGeometry {
            area: 0.5 * det,
            centroid: (a + b + c) / 3.0,
            grads: [-g1 - g2, g1, g2],
        }
    }

    pub fn total_area(&self) -> f64 {
        (0..self.n_triangles()).map(|t| self.signed_area(t)).sum()
    }

    pub fn touches_origin(&self, t: usize) -> bool {
        self.origin.is_some_and(|o| self.triangles[t].contains(&o))
    }

    /// Largest sagitta of boundary edges relative to the circle(s) they approximate.
    pub fn boundary_chord_error(&self) -> f64 {
        let mut counts = std::collections::HashMap::<(usize, usize), u32>::new();
        for tri in &self.triangles {
            for e in 0..3 {
                let (a, b) = (tri[e], tri[(e + 1) % 3]);
                *counts.entry((a.min(b), a.max(b))).or_default() += 1;
            }
        }
        counts
            .into_iter()
            .filter(|&(_, c)| c == 1)
            .map(|((a, b), _)| {
                let r = 0.5 * (self.nodes[a].norm() + self.nodes[b].norm());
                let mid = 0.5 * (self.nodes[a] + self.nodes[b]);
                r - mid.norm()
            })
            .fold(0.0, f64::max)
    }

    /// Checks orientation, connectivity bounds, node uniqueness and the origin flag.
    pub fn validate(&self) -> Result<()> {
        if self.nodes.len() < 3 || self.triangles.is_empty() {
            return Err(Error::InvalidGeometry("mesh needs at least 3 nodes and one triangle".into()));
        }
        for (t, tri) in self.triangles.iter().enumerate() {
            if tri.iter().any(|&i| i >= self.nodes.len()) {
                return Err(Error::InvalidGeometry(format!("triangle {t} references a missing node")));
            }
            if !(self.signed_area(t) > 0.0) {
                return Err(Error::InvalidGeometry(format!("triangle {t} is not positively oriented")));
            }
        }
        let mut sorted: Vec<_> = self.nodes.iter().map(|v| (v.x, v.y)).collect();
        sorted.sort_by(|a, b| a.partial_cmp(b).unwrap_or(std::cmp::Ordering::Equal));
        let tol = 1e-12 * self.geom.outer_radius;
        if sorted
            .windows(2)
            .any(|w| (w[0].0 - w[1].0).abs() <= tol && (w[0].1 - w[1].1).abs() <= tol)
        {
            return Err(Error::InvalidGeometry("duplicate nodes".into()));
        }
        let at_origin: Vec<_> = (0..self.nodes.len()).filter(|&i| self.nodes[i].norm() <= tol).collect();
        match (self.geom.is_disc(), self.origin) {
            (true, Some(o)) if at_origin == [o] => Ok(()),
            (false, None) if at_origin.is_empty() => Ok(()),
            _ => Err(Error::InvalidGeometry("origin node flag inconsistent with geometry".into())),
        }
    }

    pub fn to_text(&self) -> String {
        let mut s = format!("nodes {} triangles {}\n", self.nodes.len(), self.triangles.len());
        for v in &self.nodes {
            let _ = writeln!(s, "{:?} {:?}", v.x, v.y);
        }
        for t in &self.triangles {
            let _ = writeln!(s, "{} {} {}", t[0], t[1], t[2]);
        }
        s
    }

    pub fn write(&self, path: &Path) -> Result<()> {
        fs::write(path, self.to_text())?;
        Ok(())
    }

    pub fn read(path: &Path) -> Result<Self> {
        Self::parse(&fs::read_to_string(path)?, path)
    }

    /// Parses the text format; radii are recovered from the node cloud.
    pub fn parse(text: &str, path: &Path) -> Result<Self> {
        let err = |line: usize, msg: &str| Error::Parse {
            path: path.to_path_buf(),
            line,
            msg: msg.to_string(),
        };
        let mut lines = text.lines().enumerate().filter(|(_, l)| !l.trim().is_empty());
        let (hl, header) = lines.next().ok_or_else(|| err(1, "empty file"))?;
        let h: Vec<_> = header.split_whitespace().collect();
        let (n, m) = match h.as_slice() {
            ["nodes", n, "triangles", m] => (
                n.parse::<usize>().map_err(|_| err(hl + 1, "bad node count"))?,
                m.parse::<usize>().map_err(|_| err(hl + 1, "bad triangle count"))?,
            ),
            _ => return Err(err(hl + 1, "expected 'nodes N triangles M'")),
        };
        let mut nodes = Vec::with_capacity(n);
        for _ in 0..n {
            let (ln, l) = lines.next().ok_or_else(|| err(hl + 2 + nodes.len(), "missing node line"))?;
            let v: Vec<f64> = l
                .split_whitespace()
                .map(|s| s.parse::<f64>())
                .collect::<std::result::Result<_, _>>()
                .map_err(|_| err(ln + 1, "bad coordinate"))?;
            if v.len() != 2 || !v.iter().all(|x| x.is_finite()) {
                return Err(err(ln + 1, "expected 'x y'"));
            }
            nodes.push(Vector2::new(v[0], v[1]));
        }
        let mut triangles = Vec::with_capacity(m);
        for _ in 0..m {
            let (ln, l) = lines.next().ok_or_else(|| err(hl + 2 + n + triangles.len(), "missing triangle line"))?;
            let v: Vec<usize> = l
                .split_whitespace()
                .map(|s| s.parse::<usize>())
                .collect::<std::result::Result<_, _>>()
                .map_err(|_| err(ln + 1, "bad index"))?;
            if v.len() != 3 || v.iter().any(|&i| i >= n) {
                return Err(err(ln + 1, "expected three valid node indices"));
            }
            triangles.push([v[0], v[1], v[2]]);
        }
        if let Some((ln, _)) = lines.next() {
            return Err(err(ln + 1, "trailing content"));
        }
        let radii: Vec<f64> = nodes.iter().map(|v| v.norm()).collect();
        let r = radii.iter().cloned().fold(0.0, f64::max);
        let ri = radii.iter().cloned().fold(f64::INFINITY, f64::min);
        let origin = radii.iter().position(|&x| x <= 1e-12 * r);
        let geom = SectionGeometry::new(r, if origin.is_some() { 0.0 } else { ri })
            .map_err(|e| err(1, &e.to_string()))?;
        let mesh = Self {
            nodes,
            triangles,
            geom,
            origin,
        };
        mesh.validate().map_err(|e| err(1, &e.to_string()))?;
        Ok(mesh)
    }
}

fn ring_count(x: f64) -> usize {
    ((0.25 * x).round() as usize).max(1) * 4
}

/// Ring radii and node counts for `m` radial layers and density `c` (nodes per unit radius).
fn ring_counts(geom: &SectionGeometry, m: usize, c: f64) -> (Vec<f64>, Vec<usize>) {
    let (r, ri) = (geom.outer_radius, geom.inner_radius);
    let h = (r - ri) / m as f64;
    let first = if geom.is_disc() { 1 } else { 0 };
    let radii: Vec<f64> = (first..=m).map(|k| ri + k as f64 * h).collect();
    let counts = radii.iter().map(|&rk| ring_count(c * rk)).collect();
    (radii, counts)
}

fn triangle_count(geom: &SectionGeometry, counts: &[usize]) -> usize {
    let fan = if geom.is_disc() { counts[0] } else { 0 };
    fan + counts.windows(2).map(|w| w[0] + w[1]).sum::<usize>()
}

/// Builds a ring mesh with roughly `target_elements` triangles (within ±10%).
pub fn mesh_section(geom: &SectionGeometry, target_elements: usize) -> Result<CrossSectionMesh> {
    if target_elements < 16 {
        return Err(Error::InvalidGeometry(format!(
            "target of {target_elements} elements is below the minimum of 16"
        )));
    }
    let geom = SectionGeometry::new(geom.outer_radius, geom.inner_radius)?;
    let (r, ri) = (geom.outer_radius, geom.inner_radius);
    let target = target_elements as f64;
    let r_mean = 0.5 * (r + ri);
    let m0 = (target * (r - ri) / (4.0 * std::f64::consts::PI * r_mean)).sqrt().round().max(1.0) as usize;

    let mut best: Option<(f64, usize, f64)> = None;
    for m in [m0, m0 + 1, m0.saturating_sub(1), m0 + 2, m0.saturating_sub(2)] {
        if m == 0 {
            continue;
        }
        let (mut lo, mut hi) = (1e-9, 8.0 * target / r);
        for _ in 0..100 {
            let mid = 0.5 * (lo + hi);
            let (_, counts) = ring_counts(&geom, m, mid);
            if (triangle_count(&geom, &counts) as f64) < target {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        for c in [lo, hi] {
            let (_, counts) = ring_counts(&geom, m, c);
            let dev = (triangle_count(&geom, &counts) as f64 - target).abs() / target;
            if best.is_none_or(|b| dev < b.0) {
                best = Some((dev, m, c));
            }
        }
        if best.is_some_and(|b| b.0 <= 0.02) {
            break;
        }
    }
    let (dev, m, c) = best.expect("at least one layer count tried");
    if dev > 0.1 {
        return Err(Error::InvalidGeometry(format!(
            "cannot reach {target_elements} elements within 10%"
        )));
    }
    let (radii, counts) = ring_counts(&geom, m, c);
    Ok(build(geom, &radii, &counts))
}

fn build(geom: SectionGeometry, radii: &[f64], counts: &[usize]) -> CrossSectionMesh {
    let mut nodes = Vec::new();
    let mut triangles = Vec::new();
    let origin = if geom.is_disc() {
        nodes.push(Vector2::zeros());
        Some(0)
    } else {
        None
    };
    let mut starts = Vec::with_capacity(radii.len());
    for (&rk, &sk) in radii.iter().zip(counts) {
        starts.push(nodes.len());
        for j in 0..sk {
            let th = 2.0 * std::f64::consts::PI * j as f64 / sk as f64;
            nodes.push(Vector2::new(rk * th.cos(), rk * th.sin()));
        }
    }
    let mut push = |tri: [usize; 3], nodes: &[Vector2<f64>]| {
        let [a, b, c] = tri;
        if (nodes[b] - nodes[a]).perp(&(nodes[c] - nodes[a])) > 0.0 {
            triangles.push(tri);
        } else {
            triangles.push([a, c, b]);
        }
    };
    if let Some(o) = origin {
        let (s0, n0) = (starts[0], counts[0]);
        for j in 0..n0 {
            push([o, s0 + j, s0 + (j + 1) % n0], &nodes);
        }
    }
    for k in 0..radii.len() - 1 {
        let (sa, na, sb, nb) = (starts[k], counts[k], starts[k + 1], counts[k + 1]);
        let (qa, qb) = (na / 4, nb / 4);
        // Stitch the first quadrant, then mirror it into the other three.
        let mut quadrant = Vec::with_capacity(qa + qb);
        let (mut i, mut j) = (0usize, 0usize);
        while i < qa || j < qb {
            // Compare next angles (i+1)/qa and (j+1)/qb exactly; ties advance the inner ring.
            if j == qb || (i < qa && (i + 1) * qb <= (j + 1) * qa) {
                quadrant.push([(0, i), (1, j), (0, i + 1)]);
                i += 1;
            } else {
                quadrant.push([(0, i), (1, j), (1, j + 1)]);
                j += 1;
            }
        }
        let maps: [fn(usize, usize) -> usize; 4] = [
            |j, _| j,
            |j, n| n / 2 - j,
            |j, n| n / 2 + j,
            |j, n| (n - j) % n,
        ];
        for map in maps {
            for tri in &quadrant {
                let idx = tri.map(|(ring, j)| {
                    if ring == 0 {
                        sa + map(j, na) % na
                    } else {
                        sb + map(j, nb) % nb
                    }
                });
                push(idx, &nodes);
            }
        }
    }
    CrossSectionMesh {
        nodes,
        triangles,
        geom,
        origin,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::PI;

    #[test]
    fn disc_with_800_elements() {
        let g = SectionGeometry::disc(1.0).unwrap();
        let m = mesh_section(&g, 2089).unwrap();
        m.validate().unwrap();
        let n = m.n_triangles() as f64;
        assert!((n - 2089.0).abs() <= 0.1 * 2089.0, "{n}");
        assert_eq!(m.origin, Some(0));
        assert!(m.boundary_chord_error() < 1e-3);
        assert!((m.total_area() - PI).abs() < 5e-3 * PI);
    }

    #[test]
    fn annulus_has_no_origin() {
        let g = SectionGeometry::new(1.0, 0.5).unwrap();
        let m = mesh_section(&g, 2000).unwrap();
        m.validate().unwrap();
        assert!(m.origin.is_none());
        assert!((m.n_triangles() as f64 - 2000.0).abs() <= 200.0);
        let exact = PI * 0.75;
        assert!((m.total_area() - exact).abs() < 5e-3 * exact);
    }

    #[test]
    fn element_counts_track_targets() {
        for (ri, target) in [(0.0, 16), (0.0, 100), (0.0, 800), (0.25, 800), (0.5, 64), (0.9, 500)] {
            let g = SectionGeometry::new(1.0, ri).unwrap();
            let m = mesh_section(&g, target).unwrap();
            m.validate().unwrap();
            let dev = (m.n_triangles() as f64 - target as f64).abs() / target as f64;
            assert!(dev <= 0.1, "ri={ri} target={target} got {}", m.n_triangles());
        }
        assert!(mesh_section(&SectionGeometry::disc(1.0).unwrap(), 15).is_err());
    }

    #[test]
    fn mirror_symmetric_triangulation() {
        for ri in [0.0, 0.4] {
            let m = mesh_section(&SectionGeometry::new(1.0, ri).unwrap(), 600).unwrap();
            let centroids: Vec<_> = (0..m.n_triangles()).map(|t| m.triangle_geometry(t).centroid).collect();
            for c in &centroids {
                for image in [Vector2::new(-c.x, c.y), Vector2::new(c.x, -c.y), -c] {
                    assert!(centroids.iter().any(|d| (d - image).norm() < 1e-12));
                }
            }
        }
    }

    #[test]
    fn shape_gradients_reproduce_linear_fields() {
        let m = mesh_section(&SectionGeometry::new(2.0, 0.3).unwrap(), 200).unwrap();
        for t in 0..m.n_triangles() {
            let g = m.triangle_geometry(t);
            let mut gx = Vector2::zeros();
            let mut gy = Vector2::zeros();
            for (a, &n) in m.triangles[t].iter().enumerate() {
                gx += g.grads[a] * m.nodes[n].x;
                gy += g.grads[a] * m.nodes[n].y;
            }
            assert!((gx - Vector2::x()).norm() < 1e-10);
            assert!((gy - Vector2::y()).norm() < 1e-10);
        }
    }

    #[test]
    fn text_round_trip() {
        let m = mesh_section(&SectionGeometry::new(1.5, 0.5).unwrap(), 300).unwrap();
        let back = CrossSectionMesh::parse(&m.to_text(), Path::new("mem")).unwrap();
        assert_eq!(back.nodes, m.nodes);
        assert_eq!(back.triangles, m.triangles);
        assert_eq!(back.origin, None);
        assert!((back.geom.inner_radius - 0.5).abs() < 1e-12);

        let bad = "nodes 3 triangles 1\n0 0\n1 0\n0 1\n0 2 1\n";
        assert!(CrossSectionMesh::parse(bad, Path::new("mem")).is_err());
        let short = "nodes 3 triangles 1\n0 0\n1 0\n";
        match CrossSectionMesh::parse(short, Path::new("mem")) {
            Err(Error::Parse { .. }) => {}
            other => panic!("{other:?}"),
        }
    }
}
