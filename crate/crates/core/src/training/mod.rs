//! Calibration of neural beam potentials on stress-resultant data.

pub mod adam;
pub mod loss;

use std::io::Write;
use std::path::Path;
use std::time::Instant;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::dataset::{Dataset, LossWeights};
use crate::error::{Error, Result};
use crate::pann::PannModel;

pub use adam::Adam;
pub use loss::{loss_and_gradient, predictions, row_factors, sobolev_loss};

#[derive(Clone, Debug, PartialEq)]
pub struct TrainConfig {
    pub learning_rate: f64,
    pub batch_size: usize,
    pub max_epochs: usize,
    /// Epochs without validation improvement before stopping.
    pub patience: usize,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            learning_rate: 0.002,
            batch_size: 32,
            max_epochs: 10_000,
            patience: 500,
            seed: 0,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return Err(Error::Config(format!("learning rate {} must be positive", self.learning_rate)));
        }
        if self.batch_size == 0 || self.max_epochs == 0 || self.patience == 0 {
            return Err(Error::Config("batch size, epochs and patience must be positive".into()));
        }
        Ok(())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct EpochRecord {
    pub epoch: usize,
    pub train_loss: f64,
    pub val_loss: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct TrainReport {
    pub history: Vec<EpochRecord>,
    /// Epoch of the returned snapshot (0 is the initial model).
    pub best_epoch: usize,
    pub best_val_loss: f64,
    /// Training loss of the returned snapshot.
    pub final_train_loss: f64,
    pub test_loss: Option<f64>,
    pub wall_time_s: f64,
}

impl TrainReport {
    pub fn write_history_csv(&self, path: &Path, comments: &[String]) -> Result<()> {
        let mut f = std::io::BufWriter::new(std::fs::File::create(path)?);
        for c in comments {
            writeln!(f, "# {c}")?;
        }
        let mut w = csv::Writer::from_writer(f);
        w.write_record(["epoch", "train_loss", "val_loss"])?;
        for r in &self.history {
            w.write_record([r.epoch.to_string(), format!("{:?}", r.train_loss), format!("{:?}", r.val_loss)])?;
        }
        w.flush()?;
        Ok(())
    }

    pub fn metrics_json(&self) -> Result<String> {
        #[derive(Serialize)]
        struct Metrics {
            epochs: usize,
            best_epoch: usize,
            best_val_loss: f64,
            final_train_loss: f64,
            test_loss: Option<f64>,
            wall_time_s: f64,
        }
        Ok(serde_json::to_string_pretty(&Metrics {
            epochs: self.history.len(),
            best_epoch: self.best_epoch,
            best_val_loss: self.best_val_loss,
            final_train_loss: self.final_train_loss,
            test_loss: self.test_loss,
            wall_time_s: self.wall_time_s,
        })?)
    }
}

/// Mini-batch Adam training with early stopping on the validation loss.
///
/// When `val` is empty the training loss drives the snapshot selection.
/// Returns the parameters with the lowest monitored loss.
pub fn train(
    model: &PannModel,
    train_ds: &Dataset,
    val: &Dataset,
    weights: &LossWeights,
    cfg: &TrainConfig,
) -> Result<(PannModel, TrainReport)> {
    cfg.validate()?;
    if train_ds.is_empty() {
        return Err(Error::EmptyDataset("training set"));
    }
    let start = Instant::now();
    let mut model = model.clone();
    let factors = row_factors(train_ds);
    let n = train_ds.len();
    let mut order: Vec<usize> = (0..n).collect();
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut adam = Adam::new(model.params().len(), cfg.learning_rate);
    let mut theta = model.params().to_vec();

    let monitor = |m: &PannModel| -> Result<(f64, f64)> {
        let t = sobolev_loss(m, train_ds, weights)?;
        let v = if val.is_empty() { t } else { sobolev_loss(m, val, weights)? };
        Ok((t, v))
    };
    let (t0, v0) = monitor(&model)?;
    let mut best = (v0, 0, theta.clone(), t0);
    let mut history = Vec::new();
    for epoch in 1..=cfg.max_epochs {
        order.shuffle(&mut rng);
        for batch in order.chunks(cfg.batch_size) {
            let scale = n as f64 / batch.len() as f64;
            let (_, grad) = loss_and_gradient(&model, train_ds, batch, &factors, scale, weights, false)?;
            adam.step(&mut theta, &grad);
            model.set_params(&theta)?;
        }
        let (t, v) = monitor(&model)?;
        if !(t.is_finite() && v.is_finite()) {
            return Err(Error::NoConvergence {
                iterations: epoch,
                residual: t,
            });
        }
        history.push(EpochRecord {
            epoch,
            train_loss: t,
            val_loss: v,
        });
        if v < best.0 {
            best = (v, epoch, theta.clone(), t);
        } else if epoch - best.1 > cfg.patience {
            break;
        }
    }
    model.set_params(&best.2)?;
    Ok((
        model,
        TrainReport {
            history,
            best_epoch: best.1,
            best_val_loss: best.0,
            final_train_loss: best.3,
            test_loss: None,
            wall_time_s: start.elapsed().as_secs_f64(),
        },
    ))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dataset::{compute_weights, DatasetRow};
    use crate::pann::{RatioMode, Variant};
    use crate::section::{Lem, SectionGeometry, StrainState};
    use crate::MaterialParams;
    use rand::Rng;

    fn lem_data(n: usize, seed: u64) -> Dataset {
        let lem = Lem::new(SectionGeometry::disc(1.0).unwrap(), MaterialParams::tpu());
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        Dataset::new(
            (0..n)
                .map(|k| {
                    let p = StrainState::from_array(std::array::from_fn(|_| rng.random_range(-0.1..0.1)));
                    DatasetRow {
                        path_id: k,
                        step_id: 0,
                        radius: 1.0,
                        ratio: 0.0,
                        p,
                        q: lem.stress(&p),
                        psi: lem.potential(&p),
                    }
                })
                .collect(),
        )
    }

    fn quick(seed: u64) -> TrainConfig {
        TrainConfig {
            max_epochs: 30,
            seed,
            ..Default::default()
        }
    }

    #[test]
    fn deterministic_and_best_snapshot() {
        let ds = lem_data(64, 1);
        let val = lem_data(16, 2);
        let w = compute_weights(&ds).unwrap();
        let m = PannModel::new(Variant::Plain, &[8], 1.0, RatioMode::Fixed(0.0), 3).unwrap();
        let (a, ra) = train(&m, &ds, &val, &w, &quick(4)).unwrap();
        let (b, rb) = train(&m, &ds, &val, &w, &quick(4)).unwrap();
        assert_eq!(a, b);
        assert_eq!(ra.history, rb.history);
        let min = ra.history.iter().map(|r| r.val_loss).fold(f64::INFINITY, f64::min);
        assert_eq!(ra.best_val_loss, min.min(ra.best_val_loss));
        assert_eq!(sobolev_loss(&a, &val, &w).unwrap(), ra.best_val_loss);
        assert_eq!(sobolev_loss(&a, &ds, &w).unwrap(), ra.final_train_loss);
        let (c, _) = train(&m, &ds, &val, &w, &quick(5)).unwrap();
        assert_ne!(a, c);
    }

    #[test]
    fn loss_decreases_early() {
        let ds = lem_data(64, 6);
        let w = compute_weights(&ds).unwrap();
        let m = PannModel::new(Variant::Plain, &[32], 1.0, RatioMode::Fixed(0.0), 7).unwrap();
        let (_, r) = train(&m, &ds, &Dataset::default(), &w, &TrainConfig { max_epochs: 10, ..quick(8) }).unwrap();
        assert!(r.history.windows(2).all(|p| p[1].train_loss < p[0].train_loss), "{:?}", r.history);
    }

    #[test]
    fn early_stopping_respects_patience() {
        let ds = lem_data(32, 9);
        let w = compute_weights(&ds).unwrap();
        let m = PannModel::new(Variant::Plain, &[4], 1.0, RatioMode::Fixed(0.0), 1).unwrap();
        let cfg = TrainConfig {
            learning_rate: 0.5,
            max_epochs: 400,
            patience: 5,
            ..quick(2)
        };
        let (_, r) = train(&m, &ds, &lem_data(8, 10), &w, &cfg).unwrap();
        let last = r.history.last().unwrap().epoch;
        assert!(last < 400 && last - r.best_epoch == 6, "last {last}, best {}", r.best_epoch);
    }

    #[test]
    fn rejects_bad_inputs() {
        let ds = lem_data(4, 1);
        let w = compute_weights(&ds).unwrap();
        let m = PannModel::new(Variant::Plain, &[4], 1.0, RatioMode::Fixed(0.0), 1).unwrap();
        assert!(matches!(train(&m, &Dataset::default(), &ds, &w, &quick(0)), Err(Error::EmptyDataset(_))));
        let cfg = TrainConfig { batch_size: 0, ..quick(0) };
        assert!(matches!(train(&m, &ds, &ds, &w, &cfg), Err(Error::Config(_))));
    }
}
