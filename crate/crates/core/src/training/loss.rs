//! Weighted stress-resultant loss and its exact parameter gradient.

use std::collections::BTreeMap;

use crate::dataset::{Dataset, DatasetRow, GroupKey, LossWeights};
use crate::error::{Error, Result};
use crate::pann::mlp::Workspace;
use crate::pann::{Offsets, PannModel};

/// Deepest network the parameter gradient supports.
pub const MAX_HIDDEN_LAYERS: usize = 2;

/// Per-row loss factors `1 / (n · m_j)`: each `(R, P)` group contributes its
/// mean squared error and the groups are averaged.
pub fn row_factors(ds: &Dataset) -> Vec<f64> {
    let mut counts: BTreeMap<GroupKey, usize> = BTreeMap::new();
    for r in &ds.rows {
        *counts.entry(r.group()).or_default() += 1;
    }
    let n = counts.len() as f64;
    ds.rows.iter().map(|r| 1.0 / (n * counts[&r.group()] as f64)).collect()
}

/// Scale between a row's radius and the model's reference radius.
pub fn row_scale(model: &PannModel, row: &DatasetRow) -> f64 {
    row.radius / model.r_ref()
}

/// Offsets per ratio, computed once per distinct `P`.
struct OffsetCache(BTreeMap<Option<u64>, Offsets>);

impl OffsetCache {
    fn new() -> Self {
        Self(BTreeMap::new())
    }

    fn get(&mut self, model: &PannModel, ratio: Option<f64>) -> Result<&Offsets> {
        let key = ratio.map(f64::to_bits);
        match self.0.entry(key) {
            std::collections::btree_map::Entry::Occupied(e) => Ok(e.into_mut()),
            std::collections::btree_map::Entry::Vacant(e) => Ok(e.insert(model.offsets(ratio)?)),
        }
    }
}

/// Prediction of one row: `(network input, map, ∇ₓΦ, q)`.
fn predict(
    model: &PannModel,
    row: &DatasetRow,
    cache: &mut OffsetCache,
    ws: &mut Workspace,
    g: &mut Vec<f64>,
) -> Result<(Vec<f64>, Vec<f64>, Vec<f64>, [f64; 6])> {
    let ratio = model.ratio_input(Some(row.ratio))?;
    let (u, map) = model.stress_map(&row.p, row_scale(model, row), ratio);
    g.resize(u.len(), 0.0);
    model.mlp().value_grad_with(&u, g, ws);
    let dx = model.variant().strain_inputs();
    let mut gx = g[..dx].to_vec();
    let off = cache.get(model, ratio)?;
    for (&i, c) in model.projected_inputs().iter().zip(&off.stress) {
        gx[i] -= c;
    }
    let q = std::array::from_fn(|i| (0..dx).map(|k| map[i * dx + k] * gx[k]).sum());
    Ok((u, map, gx, q))
}

/// Predicted stress resultants for every row, as fed to the loss.
pub fn predictions(model: &PannModel, ds: &Dataset) -> Result<Vec<[f64; 6]>> {
    let mut cache = OffsetCache::new();
    let mut ws = Workspace::default();
    let mut g = Vec::new();
    ds.rows
        .iter()
        .map(|r| predict(model, r, &mut cache, &mut ws, &mut g).map(|p| p.3))
        .collect()
}

/// `L = 1/(6n) Σ_j 1/m_j Σ_k Σ_i w_ij (q_i^{jk} − q_i(p^{jk}))²`.
pub fn sobolev_loss(model: &PannModel, ds: &Dataset, weights: &LossWeights) -> Result<f64> {
    if ds.is_empty() {
        return Err(Error::EmptyDataset("loss of an empty dataset"));
    }
    let factors = row_factors(ds);
    let preds = predictions(model, ds)?;
    let mut loss = 0.0;
    for ((row, f), q) in ds.rows.iter().zip(&factors).zip(&preds) {
        let w = weights.get(row.radius, row.ratio)?;
        let t = row.q.to_array();
        let e: f64 = (0..6).map(|i| w[i] * (q[i] - t[i]).powi(2)).sum();
        loss += f * e / 6.0;
    }
    Ok(loss)
}

/// Loss over the rows `idx` with factors `scale · factors[r]`, and its exact
/// gradient with respect to all network parameters.
///
/// With `offsets_frozen` the projection offsets are treated as constants.
pub fn loss_and_gradient(
    model: &PannModel,
    ds: &Dataset,
    idx: &[usize],
    factors: &[f64],
    scale: f64,
    weights: &LossWeights,
    offsets_frozen: bool,
) -> Result<(f64, Vec<f64>)> {
    let hidden = model.mlp().hidden_layers();
    if hidden > MAX_HIDDEN_LAYERS {
        return Err(Error::UnsupportedDepth(hidden));
    }
    let dx = model.variant().strain_inputs();
    let mut grad = vec![0.0; model.mlp().n_params()];
    let mut cache = OffsetCache::new();
    let mut ws = Workspace::default();
    let mut g = Vec::new();
    // Accumulated offset sensitivities per ratio.
    let mut origin: BTreeMap<Option<u64>, Vec<f64>> = BTreeMap::new();
    let mut loss = 0.0;
    for &k in idx {
        let row = &ds.rows[k];
        let w = weights.get(row.radius, row.ratio)?;
        let (u, map, _, q) = predict(model, row, &mut cache, &mut ws, &mut g)?;
        let t = row.q.to_array();
        let f = scale * factors[k] / 6.0;
        let mut dq = [0.0; 6];
        for i in 0..6 {
            let e = q[i] - t[i];
            loss += f * w[i] * e * e;
            dq[i] = 2.0 * f * w[i] * e;
        }
        let mut v = vec![0.0; u.len()];
        for (kk, vk) in v.iter_mut().enumerate().take(dx) {
            *vk = (0..6).map(|i| map[i * dx + kk] * dq[i]).sum();
        }
        model.mlp().tangent_param_grad(&u, &v, 1.0, &mut grad, &mut ws);
        if !offsets_frozen {
            let ratio = model.ratio_input(Some(row.ratio))?;
            let acc = origin.entry(ratio.map(f64::to_bits)).or_insert_with(|| vec![0.0; u.len()]);
            for &i in model.projected_inputs() {
                acc[i] += v[i];
            }
        }
    }
    for (key, v) in origin {
        let u0 = model.origin_input(key.map(f64::from_bits));
        model.mlp().tangent_param_grad(&u0, &v, -1.0, &mut grad, &mut ws);
    }
    Ok((loss, grad))
}
