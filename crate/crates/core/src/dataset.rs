//! Strain/stress datasets, loss weights and path-level splits.

use std::collections::BTreeMap;
use std::fs::File;
use std::io::{BufRead, BufReader, Write};
use std::path::Path;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::mesh::CrossSectionMesh;
use crate::sampling::{build_paths, SamplingConfig};
use crate::section::{MaterialParams, StrainState, StressResultants};
use crate::warping::{WarpingConfig, WarpingSolver};

pub const CSV_HEADER: [&str; 17] = [
    "path_id", "step_id", "R", "P", "eps1", "eps2", "eps3", "kappa1", "kappa2", "kappa3", "n1", "n2", "n3", "m1",
    "m2", "m3", "psi",
];

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct DatasetRow {
    pub path_id: usize,
    pub step_id: usize,
    pub radius: f64,
    pub ratio: f64,
    pub p: StrainState,
    pub q: StressResultants,
    pub psi: f64,
}

impl DatasetRow {
    pub fn group(&self) -> GroupKey {
        GroupKey::new(self.radius, self.ratio)
    }

    /// Point-symmetric image of the row (strain and resultants reflected).
    pub fn mirrored(&self) -> Self {
        Self {
            p: self.p.mirrored(),
            q: self.q.mirrored(),
            ..*self
        }
    }

    fn is_valid(&self) -> bool {
        self.p.is_finite()
            && self.q.is_finite()
            && self.psi.is_finite()
            && self.radius > 0.0
            && self.radius.is_finite()
            && (0.0..1.0).contains(&self.ratio)
    }
}

/// Exact `(R, P)` group identity.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct GroupKey(u64, u64);

impl GroupKey {
    pub fn new(radius: f64, ratio: f64) -> Self {
        Self(radius.to_bits(), ratio.to_bits())
    }

    pub fn radius(&self) -> f64 {
        f64::from_bits(self.0)
    }

    pub fn ratio(&self) -> f64 {
        f64::from_bits(self.1)
    }
}

/// Path identity within a dataset that may mix geometries.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct PathKey {
    pub group: GroupKey,
    pub path_id: usize,
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct Dataset {
    pub rows: Vec<DatasetRow>,
}

impl Dataset {
    pub fn new(rows: Vec<DatasetRow>) -> Self {
        Self { rows }
    }

    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }

    pub fn groups(&self) -> Vec<GroupKey> {
        let mut g: Vec<_> = self.rows.iter().map(|r| r.group()).collect();
        g.sort();
        g.dedup();
        g
    }

    /// Row indices per path, in order of first appearance.
    pub fn paths(&self) -> Vec<(PathKey, Vec<usize>)> {
        let mut order = Vec::new();
        let mut map: BTreeMap<PathKey, Vec<usize>> = BTreeMap::new();
        for (i, r) in self.rows.iter().enumerate() {
            let key = PathKey {
                group: r.group(),
                path_id: r.path_id,
            };
            let e = map.entry(key).or_default();
            if e.is_empty() {
                order.push(key);
            }
            e.push(i);
        }
        order
            .into_iter()
            .map(|k| {
                let v = map.remove(&k).unwrap_or_default();
                (k, v)
            })
            .collect()
    }

    pub fn n_paths(&self) -> usize {
        self.paths().len()
    }

    pub fn filter(&self, f: impl Fn(&DatasetRow) -> bool) -> Dataset {
        Dataset::new(self.rows.iter().filter(|r| f(r)).cloned().collect())
    }

    /// Keeps every `k`-th load step of each path (steps `k−1, 2k−1, …`).
    pub fn every_nth_step(&self, k: usize) -> Dataset {
        let k = k.max(1);
        self.filter(|r| (r.step_id + 1) % k == 0)
    }

    pub fn mirrored(&self) -> Dataset {
        Dataset::new(self.rows.iter().map(|r| r.mirrored()).collect())
    }

    pub fn extend(&mut self, other: Dataset) {
        self.rows.extend(other.rows);
    }

    /// Writes the CSV with optional `#` comment lines before the header.
    pub fn write_csv(&self, path: &Path, comments: &[String]) -> Result<()> {
        let mut f = std::io::BufWriter::new(File::create(path)?);
        for c in comments {
            writeln!(f, "# {c}")?;
        }
        let mut w = csv::Writer::from_writer(f);
        w.write_record(CSV_HEADER)?;
        for r in &self.rows {
            let mut rec = vec![r.path_id.to_string(), r.step_id.to_string()];
            let floats = [r.radius, r.ratio]
                .into_iter()
                .chain(r.p.to_array())
                .chain(r.q.to_array())
                .chain([r.psi]);
            rec.extend(floats.map(|v| format!("{v:?}")));
            w.write_record(&rec)?;
        }
        w.flush()?;
        Ok(())
    }

    pub fn read_csv(path: &Path) -> Result<Dataset> {
        let file = File::open(path)?;
        let mut comment_lines = 0;
        {
            let mut reader = BufReader::new(File::open(path)?);
            let mut line = String::new();
            while reader.read_line(&mut line)? > 0 {
                if !line.starts_with('#') {
                    break;
                }
                comment_lines += 1;
                line.clear();
            }
        }
        let err = |line: u64, msg: String| Error::Parse {
            path: path.to_path_buf(),
            line: line as usize,
            msg,
        };
        let mut rdr = csv::ReaderBuilder::new()
            .comment(Some(b'#'))
            .has_headers(true)
            .from_reader(file);
        let header = rdr.headers().map_err(|e| err(comment_lines + 1, e.to_string()))?;
        if header.iter().collect::<Vec<_>>() != CSV_HEADER {
            return Err(err(comment_lines + 1, format!("unexpected header, expected {}", CSV_HEADER.join(","))));
        }
        let mut rows = Vec::new();
        for rec in rdr.records() {
            let rec = rec.map_err(|e| {
                let line = e.position().map(|p| p.line()).unwrap_or(0);
                err(line, e.to_string())
            })?;
            let line = rec.position().map(|p| p.line()).unwrap_or(0);
            if rec.len() != CSV_HEADER.len() {
                return Err(err(line, format!("expected {} fields, found {}", CSV_HEADER.len(), rec.len())));
            }
            let int = |i: usize| {
                rec[i]
                    .trim()
                    .parse::<usize>()
                    .map_err(|_| err(line, format!("bad integer in column {}", CSV_HEADER[i])))
            };
            let mut v = [0.0; 15];
            for (k, slot) in v.iter_mut().enumerate() {
                *slot = rec[k + 2]
                    .trim()
                    .parse::<f64>()
                    .map_err(|_| err(line, format!("bad number in column {}", CSV_HEADER[k + 2])))?;
            }
            let row = DatasetRow {
                path_id: int(0)?,
                step_id: int(1)?,
                radius: v[0],
                ratio: v[1],
                p: StrainState::from_array([v[2], v[3], v[4], v[5], v[6], v[7]]),
                q: StressResultants::from_array([v[8], v[9], v[10], v[11], v[12], v[13]]),
                psi: v[14],
            };
            if !row.is_valid() {
                return Err(err(line, "non-finite value or invalid geometry".into()));
            }
            rows.push(row);
        }
        Ok(Dataset { rows })
    }
}

/// One weight per stress component and `(R, P)` group.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct LossWeights {
    pub groups: BTreeMap<GroupKey, [f64; 6]>,
}

impl LossWeights {
    pub fn get(&self, radius: f64, ratio: f64) -> Result<&[f64; 6]> {
        self.groups
            .get(&GroupKey::new(radius, ratio))
            .ok_or(Error::MissingWeight { r: radius, p: ratio })
    }

    pub fn scaled(&self, a: f64) -> Self {
        Self {
            groups: self.groups.iter().map(|(k, w)| (*k, w.map(|x| x * a))).collect(),
        }
    }
}

/// Relative floor applied to vanishing group mean squares.
pub const WEIGHT_FLOOR: f64 = 1e-12;

/// Inverse mean-square weights `w_ij = 1 / max(mean_k q_i², floor)`.
pub fn compute_weights(ds: &Dataset) -> Result<LossWeights> {
    if ds.is_empty() {
        return Err(Error::EmptyDataset("cannot compute loss weights"));
    }
    let mut acc: BTreeMap<GroupKey, ([f64; 6], usize)> = BTreeMap::new();
    for r in &ds.rows {
        let e = acc.entry(r.group()).or_insert(([0.0; 6], 0));
        for (s, q) in e.0.iter_mut().zip(r.q.to_array()) {
            *s += q * q;
        }
        e.1 += 1;
    }
    let mut means = BTreeMap::new();
    for (k, (sum, n)) in acc {
        if n == 0 {
            return Err(Error::EmptyGroup {
                r: k.radius(),
                p: k.ratio(),
            });
        }
        means.insert(k, sum.map(|s| s / n as f64));
    }
    let max = means.values().flat_map(|m| m.iter().cloned()).fold(0.0, f64::max);
    let floor = if max > 0.0 { WEIGHT_FLOOR * max } else { 1.0 };
    Ok(LossWeights {
        groups: means.into_iter().map(|(k, m)| (k, m.map(|x| 1.0 / x.max(floor)))).collect(),
    })
}

/// Numbers of validation and test paths; the remainder trains.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct SplitSpec {
    pub val_paths: usize,
    pub test_paths: usize,
    pub seed: u64,
}

/// Splits at path granularity after a seeded shuffle of the paths.
pub fn split(ds: &Dataset, spec: &SplitSpec) -> Result<(Dataset, Dataset, Dataset)> {
    let mut paths = ds.paths();
    if spec.val_paths + spec.test_paths > paths.len() {
        return Err(Error::Config(format!(
            "cannot take {} validation and {} test paths from {} paths",
            spec.val_paths,
            spec.test_paths,
            paths.len()
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    paths.shuffle(&mut rng);
    let take = |range: &[(PathKey, Vec<usize>)]| {
        let mut idx: Vec<usize> = range.iter().flat_map(|(_, v)| v.iter().cloned()).collect();
        idx.sort_unstable();
        Dataset::new(idx.into_iter().map(|i| ds.rows[i]).collect())
    };
    let (val, rest) = paths.split_at(spec.val_paths);
    let (test, train) = rest.split_at(spec.test_paths);
    Ok((take(train), take(val), take(test)))
}


/// Outcome of tracing a batch of load paths.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct GenerationReport {
    pub paths: usize,
    pub abandoned: usize,
    pub truncated: usize,
    pub rows: usize,
}

/// Traces each path with the deformable-section model, in parallel over paths.
///
/// Rows keep the path order and the step order within each path. Paths whose
/// first state cannot be solved are dropped and counted as abandoned.
pub fn trace_paths(
    paths: &[Vec<StrainState>],
    mesh: &CrossSectionMesh,
    mat: &MaterialParams,
    cfg: WarpingConfig,
) -> Result<(Dataset, GenerationReport)> {
    let solver = WarpingSolver::new(mesh, mat, cfg);
    let (radius, ratio) = (mesh.geom.outer_radius, mesh.geom.ratio());
    let traces: Vec<_> = paths
        .par_iter()
        .map(|path| if path.is_empty() { Ok(None) } else { solver.trace(path).map(Some) })
        .collect();
    let mut report = GenerationReport {
        paths: paths.len(),
        ..Default::default()
    };
    let mut rows = Vec::new();
    for (path_id, t) in traces.into_iter().enumerate() {
        let trace = match t {
            Ok(Some(t)) => t,
            Ok(None) => continue,
            Err(Error::PathAbandoned(_)) => {
                report.abandoned += 1;
                continue;
            }
            Err(e) => return Err(e),
        };
        if trace.truncated_at.is_some() {
            report.truncated += 1;
        }
        rows.extend(trace.rows.iter().enumerate().map(|(step_id, r)| DatasetRow {
            path_id,
            step_id,
            radius,
            ratio,
            p: r.p,
            q: r.q,
            psi: r.psi,
        }));
    }
    report.rows = rows.len();
    Ok((Dataset::new(rows), report))
}

/// Samples concentric load paths for the mesh's geometry and traces them.
pub fn generate(
    sampling: &SamplingConfig,
    mesh: &CrossSectionMesh,
    mat: &MaterialParams,
) -> Result<(Dataset, GenerationReport)> {
    let paths: Vec<_> = build_paths(sampling, &mesh.geom).into_iter().map(|p| p.states).collect();
    trace_paths(&paths, mesh, mat, WarpingConfig::default())
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::Rng;

    fn random_rows(n: usize, seed: u64) -> Dataset {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut v = |s: f64| rng.random_range(-s..s);
        Dataset::new(
            (0..n)
                .map(|i| DatasetRow {
                    path_id: i / 7,
                    step_id: i % 7,
                    radius: if i % 3 == 0 { 0.3 } else { 1.0 },
                    ratio: if i % 2 == 0 { 0.0 } else { 0.25 },
                    p: StrainState::from_array(std::array::from_fn(|_| v(0.5))),
                    q: StressResultants::from_array(std::array::from_fn(|_| v(100.0) * 10f64.powi((i % 5) as i32 - 2))),
                    psi: v(1.0).abs() / 3.0,
                })
                .collect(),
        )
    }

    #[test]
    fn csv_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("d.csv");
        let empty = Dataset::default();
        empty.write_csv(&path, &[]).unwrap();
        assert_eq!(Dataset::read_csv(&path).unwrap(), empty);

        let ds = random_rows(1000, 1);
        ds.write_csv(&path, &["pannbeam test".into(), "seed=1".into()]).unwrap();
        let back = Dataset::read_csv(&path).unwrap();
        assert_eq!(back, ds);
        let text = std::fs::read_to_string(&path).unwrap();
        assert!(text.starts_with("# pannbeam test\n# seed=1\npath_id,step_id,R,P,eps1"));
    }

    #[test]
    fn one_row_text_is_stable() {
        let dir = tempfile::tempdir().unwrap();
        let (a, b) = (dir.path().join("a.csv"), dir.path().join("b.csv"));
        let ds = random_rows(1, 5);
        ds.write_csv(&a, &[]).unwrap();
        Dataset::read_csv(&a).unwrap().write_csv(&b, &[]).unwrap();
        assert_eq!(std::fs::read_to_string(&a).unwrap(), std::fs::read_to_string(&b).unwrap());
    }

    #[test]
    fn malformed_rows_report_lines() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("bad.csv");
        let mut text = format!("# c\n{}\n", CSV_HEADER.join(","));
        text.push_str("0,0,1.0,0.0,0,0,0,0,0,0,0,0,0,0,0,0,0\n");
        text.push_str("0,1,1.0,0.0,0,0,x,0,0,0,0,0,0,0,0,0,0\n");
        std::fs::write(&path, text).unwrap();
        match Dataset::read_csv(&path) {
            Err(Error::Parse { line, .. }) => assert_eq!(line, 4),
            other => panic!("{other:?}"),
        }
        std::fs::write(&path, "a,b\n1,2\n").unwrap();
        assert!(matches!(Dataset::read_csv(&path), Err(Error::Parse { .. })));
    }

    fn constant_group(q: [f64; 6], radius: f64) -> Vec<DatasetRow> {
        (0..4)
            .map(|i| DatasetRow {
                path_id: 0,
                step_id: i,
                radius,
                ratio: 0.0,
                p: StrainState::zero(),
                q: StressResultants::from_array(q),
                psi: 0.0,
            })
            .collect()
    }

    #[test]
    fn weight_rules() {
        let ds = Dataset::new(constant_group([1.0, 0.0, 2.0, 3.0, 1.0, 1.0], 1.0));
        let w = compute_weights(&ds).unwrap();
        let g = w.get(1.0, 0.0).unwrap();
        assert_eq!(g[2], 0.25);
        assert_eq!(g[1], 1.0 / (WEIGHT_FLOOR * 9.0));
        assert!(matches!(w.get(2.0, 0.0), Err(Error::MissingWeight { .. })));
        assert!(compute_weights(&Dataset::default()).is_err());

        let mut rows = constant_group([1.0, 2.0, 3.0, 4.0, 5.0, 6.0], 1.0);
        rows.extend(constant_group([10.0, 20.0, 30.0, 40.0, 50.0, 60.0], 0.5));
        let w = compute_weights(&Dataset::new(rows)).unwrap();
        let (a, b) = (w.get(1.0, 0.0).unwrap(), w.get(0.5, 0.0).unwrap());
        for i in 0..6 {
            assert!((b[i] / a[i] - 1e-2).abs() < 1e-14);
        }
    }

    #[test]
    fn weights_ignore_row_order() {
        let ds = random_rows(200, 2);
        let mut rev = ds.clone();
        rev.rows.reverse();
        let (a, b) = (compute_weights(&ds).unwrap(), compute_weights(&rev).unwrap());
        for (k, w) in &a.groups {
            for i in 0..6 {
                assert!((w[i] - b.groups[k][i]).abs() <= 1e-12 * w[i]);
            }
        }
    }

    #[test]
    fn path_level_split() {
        let ds = random_rows(700, 3);
        let n_paths = ds.n_paths();
        let spec = SplitSpec {
            val_paths: 5,
            test_paths: 7,
            seed: 9,
        };
        let (tr, va, te) = split(&ds, &spec).unwrap();
        assert_eq!(va.n_paths(), 5);
        assert_eq!(te.n_paths(), 7);
        assert_eq!(tr.n_paths(), n_paths - 12);
        assert_eq!(tr.len() + va.len() + te.len(), ds.len());
        let keys = |d: &Dataset| d.paths().into_iter().map(|(k, _)| k).collect::<Vec<_>>();
        for k in keys(&va) {
            assert!(!keys(&tr).contains(&k) && !keys(&te).contains(&k));
        }
        let mut union: Vec<_> = tr.rows.iter().chain(&va.rows).chain(&te.rows).map(|r| (r.group(), r.path_id, r.step_id)).collect();
        let mut all: Vec<_> = ds.rows.iter().map(|r| (r.group(), r.path_id, r.step_id)).collect();
        union.sort();
        all.sort();
        assert_eq!(union, all);
        assert_eq!(split(&ds, &spec).unwrap(), (tr, va, te));
        assert!(split(&ds, &SplitSpec { val_paths: n_paths, test_paths: 1, seed: 0 }).is_err());
    }

    #[test]
    fn generation_is_ordered_and_deterministic() {
        let mesh = crate::mesh::mesh_section(&crate::section::SectionGeometry::disc(1.0).unwrap(), 200).unwrap();
        let mat = MaterialParams::tpu();
        let cfg = SamplingConfig::new(3, 7).with_amplitudes(vec![0.05, 0.1, 0.15]);
        let (a, rep) = generate(&cfg, &mesh, &mat).unwrap();
        let (b, _) = generate(&cfg, &mesh, &mat).unwrap();
        assert_eq!(a, b);
        assert_eq!(rep.rows, a.len());
        assert_eq!(rep.paths, 3);
        for w in a.rows.windows(2) {
            assert!((w[0].path_id, w[0].step_id) < (w[1].path_id, w[1].step_id));
        }
        assert!(a.rows.iter().all(|r| r.radius == 1.0 && r.ratio == 0.0 && r.psi > 0.0));

        let (z, rep) = trace_paths(&[vec![StrainState::zero()]], &mesh, &mat, WarpingConfig::default()).unwrap();
        assert_eq!((z.len(), rep.abandoned), (1, 0));
        assert!(z.rows[0].psi.abs() < 1e-12 && z.rows[0].q.to_vector().norm() < 1e-9);
    }

    #[test]
    fn subsampling() {
        let ds = random_rows(70, 4);
        let sub = ds.every_nth_step(4);
        assert!(sub.rows.iter().all(|r| r.step_id == 3));
    }
}
