//! Fully connected softplus network with a scalar linear output.
//!
//! Parameters live in one flat vector, layer by layer, each layer storing its
//! weight matrix row-major followed by its bias.

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};

/// `ln(1 + eˣ)` without overflow.
pub fn softplus(x: f64) -> f64 {
    x.max(0.0) + (-x.abs()).exp().ln_1p()
}

/// First derivative of softplus (the logistic function).
pub fn logistic(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

/// Second derivative of softplus.
pub fn logistic_prime(x: f64) -> f64 {
    let s = logistic(x);
    s * (1.0 - s)
}

#[derive(Clone, Debug, PartialEq)]
pub struct Mlp {
    dims: Vec<usize>,
    theta: Vec<f64>,
}

/// Scratch buffers reused across evaluations.
#[derive(Clone, Debug, Default)]
pub struct Workspace {
    z: Vec<Vec<f64>>,
    a: Vec<Vec<f64>>,
    zd: Vec<Vec<f64>>,
    ad: Vec<Vec<f64>>,
    bar: Vec<f64>,
    bar_d: Vec<f64>,
    next: Vec<f64>,
    next_d: Vec<f64>,
}

impl Workspace {
    fn fit(&mut self, dims: &[usize]) {
        let n = dims.len() - 1;
        if self.z.len() != n || self.z.iter().zip(&dims[1..]).any(|(v, &d)| v.len() != d) {
            let make = || dims[1..].iter().map(|&d| vec![0.0; d]).collect::<Vec<_>>();
            self.z = make();
            self.a = make();
            self.zd = make();
            self.ad = make();
        }
    }
}

impl Mlp {
    /// Network with all parameters zero. `dims` runs from input to output width 1.
    pub fn zeros(dims: &[usize]) -> Result<Self> {
        if dims.len() < 2 || dims.contains(&0) {
            return Err(Error::Config(format!("invalid layer dimensions {dims:?}")));
        }
        if *dims.last().unwrap() != 1 {
            return Err(Error::Config("output dimension must be 1".into()));
        }
        let n = dims.windows(2).map(|w| w[1] * (w[0] + 1)).sum();
        Ok(Self {
            dims: dims.to_vec(),
            theta: vec![0.0; n],
        })
    }

    /// Uniform Glorot weights and zero biases.
    pub fn glorot(dims: &[usize], seed: u64) -> Result<Self> {
        let mut m = Self::zeros(dims)?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        for l in 0..m.n_layers() {
            let (rows, cols) = (m.dims[l + 1], m.dims[l]);
            let limit = (6.0 / (rows + cols) as f64).sqrt();
            let off = m.weight_offset(l);
            for w in &mut m.theta[off..off + rows * cols] {
                *w = rng.random_range(-limit..limit);
            }
        }
        Ok(m)
    }

    pub fn from_layers(dims: &[usize], weights: &[Vec<f64>], biases: &[Vec<f64>]) -> Result<Self> {
        let mut m = Self::zeros(dims)?;
        let n = m.n_layers();
        if weights.len() != n || biases.len() != n {
            return Err(Error::Schema(format!("expected {n} weight and bias blocks")));
        }
        for l in 0..n {
            let (rows, cols) = (dims[l + 1], dims[l]);
            if weights[l].len() != rows * cols || biases[l].len() != rows {
                return Err(Error::Schema(format!("layer {l} has wrong parameter counts")));
            }
            let off = m.weight_offset(l);
            m.theta[off..off + rows * cols].copy_from_slice(&weights[l]);
            m.theta[off + rows * cols..off + rows * (cols + 1)].copy_from_slice(&biases[l]);
        }
        Ok(m)
    }

    pub fn dims(&self) -> &[usize] {
        &self.dims
    }

    pub fn input_dim(&self) -> usize {
        self.dims[0]
    }

    pub fn n_layers(&self) -> usize {
        self.dims.len() - 1
    }

    pub fn hidden_layers(&self) -> usize {
        self.dims.len() - 2
    }

    pub fn n_params(&self) -> usize {
        self.theta.len()
    }

    pub fn params(&self) -> &[f64] {
        &self.theta
    }

    pub fn set_params(&mut self, theta: &[f64]) -> Result<()> {
        if theta.len() != self.theta.len() {
            return Err(Error::Dimension {
                expected: self.theta.len(),
                got: theta.len(),
            });
        }
        self.theta.copy_from_slice(theta);
        Ok(())
    }

    #[cfg(test)]
    pub(crate) fn params_mut(&mut self) -> &mut [f64] {
        &mut self.theta
    }

    fn weight_offset(&self, layer: usize) -> usize {
        self.dims.windows(2).take(layer).map(|w| w[1] * (w[0] + 1)).sum()
    }

    pub fn weights(&self, layer: usize) -> &[f64] {
        let off = self.weight_offset(layer);
        &self.theta[off..off + self.dims[layer] * self.dims[layer + 1]]
    }

    pub fn biases(&self, layer: usize) -> &[f64] {
        let off = self.weight_offset(layer) + self.dims[layer] * self.dims[layer + 1];
        &self.theta[off..off + self.dims[layer + 1]]
    }

    fn check(&self, u: &[f64]) -> Result<()> {
        if u.len() != self.dims[0] {
            return Err(Error::Dimension {
                expected: self.dims[0],
                got: u.len(),
            });
        }
        Ok(())
    }

    /// Forward pass; with `v` also propagates the tangent along `v`.
    fn forward(&self, u: &[f64], v: Option<&[f64]>, ws: &mut Workspace) {
        ws.fit(&self.dims);
        let n = self.n_layers();
        for l in 0..n {
            let (rows, cols) = (self.dims[l + 1], self.dims[l]);
            let off = self.weight_offset(l);
            let w = &self.theta[off..off + rows * cols];
            let b = &self.theta[off + rows * cols..off + rows * (cols + 1)];
            let (prev_a, rest_a) = ws.a.split_at_mut(l);
            let (prev_ad, rest_ad) = ws.ad.split_at_mut(l);
            let input: &[f64] = if l == 0 { u } else { &prev_a[l - 1] };
            let input_d: Option<&[f64]> = match v {
                None => None,
                Some(v) if l == 0 => Some(v),
                Some(_) => Some(&prev_ad[l - 1]),
            };
            let hidden = l + 1 < n;
            for r in 0..rows {
                let row = &w[r * cols..(r + 1) * cols];
                let z = b[r] + dot(row, input);
                ws.z[l][r] = z;
                if hidden {
                    rest_a[0][r] = softplus(z);
                }
                if let Some(id) = input_d {
                    let zd = dot(row, id);
                    ws.zd[l][r] = zd;
                    if hidden {
                        rest_ad[0][r] = logistic(z) * zd;
                    }
                }
            }
        }
    }

    /// Network output.
    pub fn value(&self, u: &[f64]) -> Result<f64> {
        self.check(u)?;
        let mut ws = Workspace::default();
        self.forward(u, None, &mut ws);
        Ok(ws.z[self.n_layers() - 1][0])
    }

    /// Output and input gradient, writing the gradient into `g`.
    pub fn value_grad_with(&self, u: &[f64], g: &mut [f64], ws: &mut Workspace) -> f64 {
        self.forward(u, None, ws);
        let n = self.n_layers();
        ws.bar.clear();
        ws.bar.extend_from_slice(self.weights(n - 1));
        for l in (0..n - 1).rev() {
            for (b, z) in ws.bar.iter_mut().zip(&ws.z[l]) {
                *b *= logistic(*z);
            }
            let (rows, cols) = (self.dims[l + 1], self.dims[l]);
            let w = self.weights(l);
            ws.next.clear();
            ws.next.resize(cols, 0.0);
            for r in 0..rows {
                let br = ws.bar[r];
                for (nx, wv) in ws.next.iter_mut().zip(&w[r * cols..(r + 1) * cols]) {
                    *nx += br * wv;
                }
            }
            std::mem::swap(&mut ws.bar, &mut ws.next);
        }
        g.copy_from_slice(&ws.bar);
        ws.z[n - 1][0]
    }

    pub fn value_grad(&self, u: &[f64]) -> Result<(f64, DVector<f64>)> {
        self.check(u)?;
        let mut g = vec![0.0; u.len()];
        let y = self.value_grad_with(u, &mut g, &mut Workspace::default());
        Ok((y, DVector::from_vec(g)))
    }

    /// Output, input gradient and input Hessian.
    pub fn eval(&self, u: &[f64]) -> Result<(f64, DVector<f64>, DMatrix<f64>)> {
        self.check(u)?;
        let d = u.len();
        let n = self.n_layers();
        let mut ws = Workspace::default();
        let (y, g) = {
            let mut g = vec![0.0; d];
            let y = self.value_grad_with(u, &mut g, &mut ws);
            (y, DVector::from_vec(g))
        };
        // Pre-activation Jacobians.
        let mut jz: Vec<DMatrix<f64>> = Vec::with_capacity(n);
        for l in 0..n {
            let w = DMatrix::from_row_slice(self.dims[l + 1], self.dims[l], self.weights(l));
            let j = if l == 0 {
                w
            } else {
                let mut ja = jz[l - 1].clone();
                for (r, z) in ws.z[l - 1].iter().enumerate() {
                    ja.row_mut(r).scale_mut(logistic(*z));
                }
                w * ja
            };
            jz.push(j);
        }
        // Output sensitivities to each hidden activation, back to front.
        let mut beta: Vec<DVector<f64>> = vec![DVector::zeros(0); n - 1];
        let mut b = DVector::from_row_slice(self.weights(n - 1));
        for l in (0..n - 1).rev() {
            beta[l] = b.clone();
            if l > 0 {
                let w = DMatrix::from_row_slice(self.dims[l + 1], self.dims[l], self.weights(l));
                let delta = b.component_mul(&DVector::from_iterator(b.len(), ws.z[l].iter().map(|z| logistic(*z))));
                b = w.transpose() * delta;
            }
        }
        let mut h = DMatrix::zeros(d, d);
        for l in 0..n - 1 {
            let mut scaled = jz[l].clone();
            for (r, z) in ws.z[l].iter().enumerate() {
                scaled.row_mut(r).scale_mut(beta[l][r] * logistic_prime(*z));
            }
            h += jz[l].transpose() * scaled;
        }
        Ok((y, g, h))
    }

    /// Accumulates `c · ∂/∂θ (vᵀ ∇ᵤ y(u))` into `grad`.
    pub fn tangent_param_grad(&self, u: &[f64], v: &[f64], c: f64, grad: &mut [f64], ws: &mut Workspace) {
        self.forward(u, Some(v), ws);
        let n = self.n_layers();
        // Output layer is linear: only the tangent path carries sensitivity.
        {
            let l = n - 1;
            let cols = self.dims[l];
            let off = self.weight_offset(l);
            let input_d: &[f64] = if l == 0 { v } else { &ws.ad[l - 1] };
            for (gw, x) in grad[off..off + cols].iter_mut().zip(input_d) {
                *gw += c * x;
            }
            ws.bar.clear();
            ws.bar.resize(cols, 0.0);
            ws.bar_d.clear();
            ws.bar_d.extend(self.weights(l).iter().map(|w| c * w));
        }
        for l in (0..n - 1).rev() {
            let (rows, cols) = (self.dims[l + 1], self.dims[l]);
            for r in 0..rows {
                let z = ws.z[l][r];
                let (s1, s2) = (logistic(z), logistic_prime(z));
                let zbar = ws.bar[r] * s1 + ws.bar_d[r] * s2 * ws.zd[l][r];
                let zdbar = ws.bar_d[r] * s1;
                ws.bar[r] = zbar;
                ws.bar_d[r] = zdbar;
            }
            let off = self.weight_offset(l);
            {
                let input: &[f64] = if l == 0 { u } else { &ws.a[l - 1] };
                let input_d: &[f64] = if l == 0 { v } else { &ws.ad[l - 1] };
                for r in 0..rows {
                    let (zb, zdb) = (ws.bar[r], ws.bar_d[r]);
                    let gw = &mut grad[off + r * cols..off + (r + 1) * cols];
                    for ((g, x), xd) in gw.iter_mut().zip(input).zip(input_d) {
                        *g += zb * x + zdb * xd;
                    }
                    grad[off + rows * cols + r] += zb;
                }
            }
            if l > 0 {
                let w = self.weights(l);
                ws.next.clear();
                ws.next.resize(cols, 0.0);
                ws.next_d.clear();
                ws.next_d.resize(cols, 0.0);
                for r in 0..rows {
                    let (zb, zdb) = (ws.bar[r], ws.bar_d[r]);
                    for ((nx, nd), wv) in ws.next.iter_mut().zip(ws.next_d.iter_mut()).zip(&w[r * cols..(r + 1) * cols]) {
                        *nx += zb * wv;
                        *nd += zdb * wv;
                    }
                }
                std::mem::swap(&mut ws.bar, &mut ws.next);
                std::mem::swap(&mut ws.bar_d, &mut ws.next_d);
            }
        }
    }
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn softplus_values() {
        assert!((softplus(0.0) - std::f64::consts::LN_2).abs() < 1e-15);
        assert!((softplus(50.0) - 50.0).abs() < 1e-15);
        assert!(softplus(800.0).is_finite() && softplus(-800.0) >= 0.0);
        assert_eq!(logistic(0.0), 0.5);
        assert_eq!(logistic_prime(0.0), 0.25);
        let h = 1e-5;
        for x in [-3.0, -0.2, 0.7, 4.0] {
            assert!(((softplus(x + h) - softplus(x - h)) / (2.0 * h) - logistic(x)).abs() < 1e-9);
            assert!(((logistic(x + h) - logistic(x - h)) / (2.0 * h) - logistic_prime(x)).abs() < 1e-9);
        }
    }

    #[test]
    fn zero_weights() {
        let mut m = Mlp::zeros(&[6, 8, 1]).unwrap();
        let n = m.n_params();
        m.params_mut()[n - 1] = 0.3;
        let (y, g, h) = m.eval(&[0.1, 0.2, 0.3, 0.4, 0.5, 0.6]).unwrap();
        assert_eq!(y, 0.3);
        assert_eq!(g.norm(), 0.0);
        assert_eq!(h.norm(), 0.0);
    }

    #[test]
    fn single_neuron() {
        let mut w1 = vec![0.0; 6];
        w1[0] = 1.0;
        let m = Mlp::from_layers(&[6, 1, 1], &[w1, vec![1.0]], &[vec![0.0], vec![0.0]]).unwrap();
        let x = [0.7, -1.0, 2.0, 0.0, 0.0, 0.0];
        let (y, g, _) = m.eval(&x).unwrap();
        assert_eq!(y, softplus(0.7));
        assert_eq!(g[0], logistic(0.7));
        assert!(g.iter().skip(1).all(|v| *v == 0.0));
    }

    #[test]
    fn dimension_mismatch() {
        let m = Mlp::glorot(&[6, 4, 1], 0).unwrap();
        assert!(matches!(m.eval(&[0.0; 5]), Err(Error::Dimension { expected: 6, got: 5 })));
        assert!(Mlp::zeros(&[6, 4, 2]).is_err());
    }

    fn perturbed(m: &Mlp, seed: u64) -> Mlp {
        let mut m = m.clone();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        for p in m.params_mut() {
            *p += rng.random_range(-0.3..0.3);
        }
        m
    }

    #[test]
    fn input_derivatives_match_finite_differences() {
        for dims in [vec![6, 32, 1], vec![7, 8, 5, 1], vec![3, 4, 4, 4, 1]] {
            let m = perturbed(&Mlp::glorot(&dims, 11).unwrap(), 12);
            let d = dims[0];
            let mut rng = ChaCha8Rng::seed_from_u64(3);
            for _ in 0..5 {
                let x: Vec<f64> = (0..d).map(|_| rng.random_range(-1.0..1.0)).collect();
                let (_, g, hess) = m.eval(&x).unwrap();
                let h = 1e-5;
                for i in 0..d {
                    let (mut a, mut b) = (x.clone(), x.clone());
                    a[i] += h;
                    b[i] -= h;
                    let fd = (m.value(&a).unwrap() - m.value(&b).unwrap()) / (2.0 * h);
                    assert!((fd - g[i]).abs() <= 1e-6 * g[i].abs().max(1e-2), "{dims:?} g{i}");
                    let (ga, gb) = (m.value_grad(&a).unwrap().1, m.value_grad(&b).unwrap().1);
                    for j in 0..d {
                        let fd = (ga[j] - gb[j]) / (2.0 * h);
                        assert!((fd - hess[(i, j)]).abs() <= 1e-4 * hess[(i, j)].abs().max(1e-2), "{dims:?} H{i}{j}");
                    }
                }
                assert!((hess.clone() - hess.transpose()).norm() < 1e-12 * hess.norm().max(1.0));
            }
        }
    }

    #[test]
    fn tangent_gradient_matches_finite_differences() {
        for dims in [vec![6, 4, 1], vec![7, 5, 3, 1]] {
            let m = perturbed(&Mlp::glorot(&dims, 5).unwrap(), 6);
            let d = dims[0];
            let mut rng = ChaCha8Rng::seed_from_u64(8);
            let u: Vec<f64> = (0..d).map(|_| rng.random_range(-1.0..1.0)).collect();
            let v: Vec<f64> = (0..d).map(|_| rng.random_range(-1.0..1.0)).collect();
            let mut grad = vec![0.0; m.n_params()];
            m.tangent_param_grad(&u, &v, 1.5, &mut grad, &mut Workspace::default());
            let f = |m: &Mlp| 1.5 * m.value_grad(&u).unwrap().1.iter().zip(&v).map(|(a, b)| a * b).sum::<f64>();
            let h = 1e-6;
            for k in 0..m.n_params() {
                let (mut a, mut b) = (m.clone(), m.clone());
                a.params_mut()[k] += h;
                b.params_mut()[k] -= h;
                let fd = (f(&a) - f(&b)) / (2.0 * h);
                assert!((fd - grad[k]).abs() <= 1e-6 * fd.abs().max(1e-3), "{dims:?} param {k}: {fd} vs {}", grad[k]);
            }
        }
    }
}
