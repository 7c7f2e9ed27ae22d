use std::f64::consts::PI;
use std::io::Write;
use std::path::Path;
use std::str::FromStr;

use pannbeam::beamsim::scenarios::{write_history_csv, write_state_csv, write_strains_csv};
use pannbeam::beamsim::{
    bending_bvp, bending_summary, compression_bvp, max_transverse_deflection, solve_bvp, BeamConstitutive, BeamSolution,
    PannConstitutive, SolverConfig,
};
use pannbeam::dataset::{compute_weights, split, trace_paths, Dataset, SplitSpec};
use pannbeam::mesh::mesh_section;
use pannbeam::pann::{PannModel, RatioMode, Variant};
use pannbeam::sampling::{build_paths, uniform_amplitudes, SamplingConfig};
use pannbeam::section::Lem;
use pannbeam::training::{sobolev_loss, train as fit, TrainConfig, TrainReport};
use pannbeam::warping::WarpingConfig;
use pannbeam::{Error, MaterialParams, Result, SectionGeometry, StrainState};

use crate::{
    EvalArgs, GendataArgs, MeshArgs, PredictArgs, Scenario, SimulateArgs, SweepArgs, SweepAxis, TrainArgs, TrainOptions,
    VariantArg,
};

pub fn set_jobs(n: usize) -> Result<()> {
    if n == 0 {
        return Err(Error::Config("--jobs must be positive".into()));
    }
    rayon::ThreadPoolBuilder::new()
        .num_threads(n)
        .build_global()
        .map_err(|e| Error::Config(e.to_string()))
}

/// Comment lines written at the top of every CSV.
fn provenance(seed: Option<u64>) -> Vec<String> {
    let mut v = vec![
        format!("pannbeam {}", env!("CARGO_PKG_VERSION")),
        format!("command: {}", std::env::args().collect::<Vec<_>>().join(" ")),
    ];
    v.push(match seed {
        Some(s) => format!("seed: {s}"),
        None => "seed: none".into(),
    });
    v
}

fn parse_list<T: FromStr>(s: &str, what: &str) -> Result<Vec<T>> {
    s.split(',')
        .map(str::trim)
        .filter(|t| !t.is_empty())
        .map(|t| t.parse().map_err(|_| Error::Config(format!("invalid {what} entry `{t}`"))))
        .collect()
}

fn parse_amplitudes(s: &str) -> Result<Vec<f64>> {
    let parts: Vec<&str> = s.split(':').collect();
    match parts.as_slice() {
        [a, b, n] => {
            let bad = || Error::Config(format!("invalid amplitude ladder `{s}`"));
            let (a, b): (f64, f64) = (a.trim().parse().map_err(|_| bad())?, b.trim().parse().map_err(|_| bad())?);
            let n: usize = n.trim().parse().map_err(|_| bad())?;
            if n == 0 || !(b >= a) {
                return Err(bad());
            }
            Ok(uniform_amplitudes(a, b, n))
        }
        [_] => parse_list(s, "amplitude"),
        _ => Err(Error::Config(format!("invalid amplitude ladder `{s}`"))),
    }
}

fn parse_geometry(s: &str) -> Result<Vec<SectionGeometry>> {
    s.split(',')
        .map(str::trim)
        .filter(|t| !t.is_empty())
        .map(|t| {
            let bad = || Error::Config(format!("invalid geometry `{t}`, expected R:P"));
            let (r, p) = t.split_once(':').unwrap_or((t, "0"));
            SectionGeometry::with_ratio(r.trim().parse().map_err(|_| bad())?, p.trim().parse().map_err(|_| bad())?)
        })
        .collect()
}

/// Fails early with the offending path instead of a bare I/O message.
fn input(path: &Path) -> Result<&Path> {
    if path.is_file() {
        Ok(path)
    } else {
        Err(Error::Config(format!("input file {} not found", path.display())))
    }
}

fn fmt(v: f64) -> String {
    format!("{v:?}")
}

pub fn mesh(a: MeshArgs) -> Result<()> {
    let geom = SectionGeometry::new(a.radius, a.inner_radius)?;
    let m = mesh_section(&geom, a.elements)?;
    m.write(&a.out)?;
    println!(
        "{} nodes, {} triangles, area {:.6}, chord error {:.3e}",
        m.n_nodes(),
        m.n_triangles(),
        m.total_area(),
        m.boundary_chord_error()
    );
    Ok(())
}

pub fn gendata(a: GendataArgs) -> Result<()> {
    let mat = MaterialParams::new(a.youngs, a.poisson)?;
    let amplitudes = parse_amplitudes(&a.amplitudes)?;
    let sampling = SamplingConfig::new(a.paths, a.seed)
        .with_perturbation(a.perturb)
        .with_amplitudes(amplitudes);
    let mut all = Dataset::default();
    let mut path_offset = 0;
    for geom in parse_geometry(&a.geometry)? {
        let mesh = mesh_section(&geom, a.elements)?;
        let paths: Vec<_> = build_paths(&sampling, &geom).into_iter().map(|p| p.states).collect();
        let (mut ds, rep) = trace_paths(&paths, &mesh, &mat, WarpingConfig::default())?;
        for r in &mut ds.rows {
            r.path_id += path_offset;
        }
        path_offset += paths.len();
        eprintln!(
            "R = {}, P = {}: {} paths, {} abandoned, {} truncated, {} rows",
            geom.outer_radius,
            geom.ratio(),
            rep.paths,
            rep.abandoned,
            rep.truncated,
            rep.rows
        );
        all.extend(ds);
    }
    all.write_csv(&a.out, &provenance(Some(a.seed)))?;
    println!("{} rows written to {}", all.len(), a.out.display());
    Ok(())
}

fn variant(v: VariantArg) -> Variant {
    match v {
        VariantArg::Plain => Variant::Plain,
        VariantArg::Sym => Variant::PointSymmetric,
        VariantArg::Ti => Variant::TransverselyIsotropic,
    }
}

/// Training, validation and test sets as selected by the options.
fn prepare(data: &Dataset, o: &TrainOptions) -> Result<(Dataset, Dataset, Dataset)> {
    if o.every == 0 {
        return Err(Error::Config("--every must be positive".into()));
    }
    let (train, val, test) = if o.val_paths + o.test_paths > 0 {
        split(
            data,
            &SplitSpec {
                val_paths: o.val_paths,
                test_paths: o.test_paths,
                seed: o.seed,
            },
        )?
    } else {
        (data.clone(), Dataset::default(), Dataset::default())
    };
    let val = match &o.val {
        Some(p) => {
            if o.val_paths > 0 {
                return Err(Error::Config("--val and --val-paths are exclusive".into()));
            }
            Dataset::read_csv(input(p)?)?
        }
        None => val,
    };
    Ok((train.every_nth_step(o.every), val.every_nth_step(o.every), test))
}

fn initial_model(train: &Dataset, o: &TrainOptions, seed: u64, hidden: &[usize]) -> Result<PannModel> {
    let r_ref = match o.r_ref {
        Some(r) => r,
        None => train.rows.iter().map(|r| r.radius).fold(0.0, f64::max),
    };
    let ratios: Vec<f64> = train.groups().iter().map(|g| g.ratio()).collect();
    let lo = ratios.iter().cloned().fold(f64::INFINITY, f64::min);
    let hi = ratios.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let mode = if o.param_ring {
        RatioMode::Input([lo, hi])
    } else if lo == hi {
        RatioMode::Fixed(lo)
    } else {
        return Err(Error::Config(
            "data spans several ring ratios; pass --param-ring to feed P to the model".into(),
        ));
    };
    PannModel::new(variant(o.variant), hidden, r_ref, mode, seed)
}

fn hidden(o: &TrainOptions) -> Result<Vec<usize>> {
    match &o.hidden {
        Some(h) => parse_list(h, "hidden width"),
        None => Ok(PannModel::default_hidden(o.param_ring)),
    }
}

fn train_config(o: &TrainOptions, seed: u64) -> TrainConfig {
    TrainConfig {
        learning_rate: o.lr,
        batch_size: o.batch,
        max_epochs: o.epochs,
        patience: o.patience,
        seed,
    }
}

/// Weighted loss with weights taken from the evaluated data itself.
fn self_weighted_loss(model: &PannModel, ds: &Dataset) -> Result<f64> {
    sobolev_loss(model, ds, &compute_weights(ds)?)
}

fn run_training(train: &Dataset, val: &Dataset, test: &Dataset, o: &TrainOptions, seed: u64, hidden: &[usize]) -> Result<(PannModel, TrainReport)> {
    let weights = compute_weights(train)?;
    let model = initial_model(train, o, seed, hidden)?;
    let (model, mut report) = fit(&model, train, val, &weights, &train_config(o, seed))?;
    if !test.is_empty() {
        report.test_loss = Some(self_weighted_loss(&model, test)?);
    }
    Ok((model, report))
}

pub fn train(a: TrainArgs) -> Result<()> {
    let data = Dataset::read_csv(input(&a.data)?)?;
    let (train, val, test) = prepare(&data, &a.opts)?;
    let (model, report) = run_training(&train, &val, &test, &a.opts, a.opts.seed, &hidden(&a.opts)?)?;
    model.save(&a.out_model)?;
    if let Some(path) = &a.report {
        report.write_history_csv(path, &provenance(Some(a.opts.seed)))?;
        std::fs::write(path.with_extension("json"), report.metrics_json()?)?;
    }
    println!("epochs {}", report.history.last().map_or(0, |r| r.epoch));
    println!("best_epoch {}", report.best_epoch);
    println!("train_loss {}", fmt(report.final_train_loss));
    println!("val_loss {}", fmt(report.best_val_loss));
    if let Some(t) = report.test_loss {
        println!("test_loss {}", fmt(t));
    }
    Ok(())
}

pub fn eval(a: EvalArgs) -> Result<()> {
    let data = Dataset::read_csv(input(&a.data)?)?;
    let weights = compute_weights(&data)?;
    let models = a.model.iter().map(|p| PannModel::load(input(p)?)).collect::<Result<Vec<_>>>()?;
    let paths = data.paths();
    // losses[m][k]: model m on path k; the last column is the whole dataset.
    let mut losses = Vec::with_capacity(models.len());
    for m in &models {
        let mut row = Vec::with_capacity(paths.len() + 1);
        for (_, idx) in &paths {
            let sub = Dataset::new(idx.iter().map(|&i| data.rows[i]).collect());
            row.push(sobolev_loss(m, &sub, &weights)?);
        }
        row.push(sobolev_loss(m, &data, &weights)?);
        losses.push(row);
    }
    let stats = |k: usize| {
        let v: Vec<f64> = losses.iter().map(|r| r[k]).collect();
        let min = v.iter().cloned().fold(f64::INFINITY, f64::min);
        let max = v.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        (min, max, v.iter().sum::<f64>() / v.len() as f64)
    };
    if let Some(out) = &a.out {
        let mut f = std::io::BufWriter::new(std::fs::File::create(out)?);
        for c in provenance(None) {
            writeln!(f, "# {c}")?;
        }
        let mut w = csv::Writer::from_writer(f);
        let mut head = vec!["radius".to_string(), "ratio".into(), "path_id".into(), "rows".into()];
        head.extend((0..models.len()).map(|m| format!("loss_{m}")));
        head.extend(["min".into(), "max".into(), "mean".into()]);
        w.write_record(&head)?;
        for (k, (key, idx)) in paths.iter().enumerate() {
            let (lo, hi, mean) = stats(k);
            let mut rec = vec![
                fmt(key.group.radius()),
                fmt(key.group.ratio()),
                key.path_id.to_string(),
                idx.len().to_string(),
            ];
            rec.extend(losses.iter().map(|r| fmt(r[k])));
            rec.extend([fmt(lo), fmt(hi), fmt(mean)]);
            w.write_record(&rec)?;
        }
        w.flush()?;
    }
    let (lo, hi, mean) = stats(paths.len());
    for (p, r) in a.model.iter().zip(&losses) {
        println!("loss {} {}", fmt(r[paths.len()]), p.display());
    }
    if models.len() > 1 {
        println!("ensemble min {} max {} mean {}", fmt(lo), fmt(hi), fmt(mean));
    }
    Ok(())
}

pub fn predict(a: PredictArgs) -> Result<()> {
    let model = PannModel::load(input(&a.model)?)?;
    let v: Vec<f64> = parse_list(&a.strain, "strain")?;
    let p: [f64; 6] = v
        .try_into()
        .map_err(|v: Vec<f64>| Error::Config(format!("--strain needs 6 components, got {}", v.len())))?;
    let lambda = a.scale.unwrap_or(1.0);
    let (psi, q, c) = model.scaled_eval(&StrainState::from_array(p), lambda, a.ratio)?;
    println!("psi {}", fmt(psi));
    println!("q {}", q.to_array().map(fmt).join(" "));
    for i in 0..6 {
        let row: Vec<String> = (0..6).map(|j| fmt(c.0[(i, j)])).collect();
        println!("C{} {}", i + 1, row.join(" "));
    }
    Ok(())
}

pub fn simulate(a: SimulateArgs) -> Result<()> {
    let geom = SectionGeometry::disc(a.radius)?;
    let lem = Lem::new(geom, MaterialParams::tpu());
    let model = if a.constitutive == "lem" {
        None
    } else {
        Some(PannModel::load(input(Path::new(&a.constitutive))?)?)
    };
    let pann = model.as_ref().map(|m| PannConstitutive {
        lambda: a.radius / m.r_ref(),
        ..PannConstitutive::new(m)
    });
    let law: &dyn BeamConstitutive = match &pann {
        Some(p) => p,
        None => &lem,
    };
    let mut bvp = match a.scenario {
        Scenario::Bend => {
            let m = a.moment.unwrap_or(lem.diagonal()[3] * PI / a.length);
            bending_bvp(a.length, m, a.steps.unwrap_or(20))
        }
        Scenario::Compress => compression_bvp(a.length, a.shortening.unwrap_or(0.3 * a.length), a.steps.unwrap_or(50)),
    };
    bvp.n_elements = a.elements;
    let sol = solve_bvp(&bvp, law, &SolverConfig::default())?;
    std::fs::create_dir_all(&a.out)?;
    let head = provenance(None);
    let last = sol.steps.len() - 1;
    write_history_csv(&sol, &a.out.join("history.csv"), &head)?;
    write_state_csv(&sol, last, &a.out.join("state.csv"), &head)?;
    write_strains_csv(&sol, last, &a.out.join("strains.csv"), &head)?;
    report_simulation(a.scenario, &sol);
    Ok(())
}

fn report_simulation(scenario: Scenario, sol: &BeamSolution) {
    println!("steps {}", sol.steps.len() - 1);
    match scenario {
        Scenario::Bend => {
            let s = bending_summary(sol);
            println!("tip_rotation_deg {}", fmt(s.tip_rotation_deg));
            println!("kappa1 mean {} min {} max {}", fmt(s.mean_kappa1), fmt(s.min_kappa1), fmt(s.max_kappa1));
            println!("eps3 max {} max_abs {}", fmt(s.max_eps3), fmt(s.max_abs_eps3));
        }
        Scenario::Compress => {
            let last = sol.steps.len() - 1;
            println!("max_deflection {}", fmt(max_transverse_deflection(sol, last)));
            let peak = sol.steps.iter().map(|s| -s.tip_load[0].z).fold(f64::NEG_INFINITY, f64::max);
            println!("peak_axial_force {}", fmt(peak));
        }
    }
}

pub fn sweep(a: SweepArgs) -> Result<()> {
    let data = Dataset::read_csv(input(&a.data)?)?;
    let (train, val, test) = prepare(&data, &a.opts)?;
    let grid: Vec<usize> = parse_list(&a.grid, "grid")?;
    if grid.is_empty() || a.runs == 0 {
        return Err(Error::Config("sweep needs a non-empty grid and at least one run".into()));
    }
    let base_hidden = hidden(&a.opts)?;
    let train_paths = train.paths();
    let mut f = std::io::BufWriter::new(std::fs::File::create(&a.out)?);
    for c in provenance(Some(a.opts.seed)) {
        writeln!(f, "# {c}")?;
    }
    let mut w = csv::Writer::from_writer(f);
    let axis = match a.axis {
        SweepAxis::Nodes => "nodes",
        SweepAxis::Paths => "paths",
    };
    w.write_record([axis, "seed", "train_rows", "epochs", "best_epoch", "train_loss", "val_loss", "test_loss"])?;
    for &g in &grid {
        let (sub, hidden) = match a.axis {
            SweepAxis::Nodes => (train.clone(), vec![g; base_hidden.len().max(1)]),
            SweepAxis::Paths => {
                if g == 0 || g > train_paths.len() {
                    return Err(Error::Config(format!("{g} paths requested, {} available", train_paths.len())));
                }
                let mut idx: Vec<usize> = train_paths[..g].iter().flat_map(|(_, v)| v.iter().cloned()).collect();
                idx.sort_unstable();
                (Dataset::new(idx.into_iter().map(|i| train.rows[i]).collect()), base_hidden.clone())
            }
        };
        for seed in a.opts.seed..a.opts.seed + a.runs {
            let (_, rep) = run_training(&sub, &val, &test, &a.opts, seed, &hidden)?;
            w.write_record([
                g.to_string(),
                seed.to_string(),
                sub.len().to_string(),
                rep.history.last().map_or(0, |r| r.epoch).to_string(),
                rep.best_epoch.to_string(),
                fmt(rep.final_train_loss),
                fmt(rep.best_val_loss),
                rep.test_loss.map(fmt).unwrap_or_default(),
            ])?;
            w.flush()?;
            eprintln!("{axis} {g} seed {seed}: train {:.3e}", rep.final_train_loss);
        }
    }
    Ok(())
}
