//! Tanh MLPs over a flat parameter vector.
//!
//! Layer `k` stores its weight matrix row-major (`out x in`) followed by its
//! bias. Batches are column matrices: one sample per column.

use nalgebra::DMatrix;
use rand::Rng;
use rand_distr::{Distribution, StandardNormal};

pub const HIDDEN: [usize; 2] = [256, 128];
pub const LOG_STD_MIN: f64 = -5.0;
pub const LOG_STD_MAX: f64 = 2.0;
pub const ACTION_DIM: usize = 3;

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct MlpLayout {
    pub sizes: Vec<usize>,
    pub offset: usize,
}

/// Activations kept for the backward pass; `acts[0]` is the input.
pub struct ForwardCache {
    pub acts: Vec<DMatrix<f64>>,
}

impl ForwardCache {
    pub fn output(&self) -> &DMatrix<f64> {
        self.acts.last().expect("non-empty cache")
    }
}

impl MlpLayout {
    pub fn new(sizes: Vec<usize>, offset: usize) -> Self {
        assert!(sizes.len() >= 2);
        Self { sizes, offset }
    }

    pub fn n_params(&self) -> usize {
        self.sizes.windows(2).map(|w| w[0] * w[1] + w[1]).sum()
    }

    pub fn end(&self) -> usize {
        self.offset + self.n_params()
    }

    fn layers(&self) -> impl Iterator<Item = (usize, usize, usize)> + '_ {
        let mut off = self.offset;
        self.sizes.windows(2).map(move |w| {
            let start = off;
            off += w[0] * w[1] + w[1];
            (start, w[0], w[1])
        })
    }

    pub fn forward(&self, params: &[f64], x: &DMatrix<f64>) -> DMatrix<f64> {
        let n_layers = self.sizes.len() - 1;
        let mut h = x.clone();
        for (k, (off, n_in, n_out)) in self.layers().enumerate() {
            h = affine(params, off, n_in, n_out, &h);
            if k + 1 < n_layers {
                h.apply(|v| *v = v.tanh());
            }
        }
        h
    }

    pub fn forward_cached(&self, params: &[f64], x: &DMatrix<f64>) -> ForwardCache {
        let n_layers = self.sizes.len() - 1;
        let mut acts = Vec::with_capacity(n_layers + 1);
        acts.push(x.clone());
        for (k, (off, n_in, n_out)) in self.layers().enumerate() {
            let mut h = affine(params, off, n_in, n_out, acts.last().unwrap());
            if k + 1 < n_layers {
                h.apply(|v| *v = v.tanh());
            }
            acts.push(h);
        }
        ForwardCache { acts }
    }

    /// Accumulates `dL/dparams` into `grad` given `dL/doutput`.
    pub fn backward(&self, params: &[f64], cache: &ForwardCache, d_out: &DMatrix<f64>, grad: &mut [f64]) {
        let layers: Vec<_> = self.layers().collect();
        let mut dz = d_out.clone();
        for (k, &(off, n_in, n_out)) in layers.iter().enumerate().rev() {
            let a_prev = &cache.acts[k];
            let dw = &dz * a_prev.transpose();
            for r in 0..n_out {
                for c in 0..n_in {
                    grad[off + r * n_in + c] += dw[(r, c)];
                }
                grad[off + n_in * n_out + r] += dz.row(r).sum();
            }
            if k == 0 {
                break;
            }
            let w = DMatrix::from_row_slice(n_out, n_in, &params[off..off + n_in * n_out]);
            let mut da = w.transpose() * &dz;
            da.zip_apply(a_prev, |d, h| *d *= 1.0 - h * h);
            dz = da;
        }
    }

    /// Orthogonal weights scaled by `gain` (hidden) and `out_gain` (last layer), zero biases.
    pub fn init_orthogonal<R: Rng + ?Sized>(&self, params: &mut [f64], gain: f64, out_gain: f64, rng: &mut R) {
        let n_layers = self.sizes.len() - 1;
        for (k, (off, n_in, n_out)) in self.layers().enumerate() {
            let g = if k + 1 == n_layers { out_gain } else { gain };
            let w = orthogonal(n_out, n_in, rng) * g;
            for r in 0..n_out {
                for c in 0..n_in {
                    params[off + r * n_in + c] = w[(r, c)];
                }
            }
            params[off + n_in * n_out..off + n_in * n_out + n_out].fill(0.0);
        }
    }
}

fn affine(params: &[f64], off: usize, n_in: usize, n_out: usize, x: &DMatrix<f64>) -> DMatrix<f64> {
    let w = DMatrix::from_row_slice(n_out, n_in, &params[off..off + n_in * n_out]);
    let b = &params[off + n_in * n_out..off + n_in * n_out + n_out];
    let mut z = w * x;
    for mut col in z.column_iter_mut() {
        for (v, bi) in col.iter_mut().zip(b) {
            *v += bi;
        }
    }
    z
}

/// Random matrix with orthonormal rows or columns (whichever is fewer).
pub fn orthogonal<R: Rng + ?Sized>(rows: usize, cols: usize, rng: &mut R) -> DMatrix<f64> {
    let (big, small) = (rows.max(cols), rows.min(cols));
    let a = DMatrix::<f64>::from_fn(big, small, |_, _| StandardNormal.sample(rng));
    let qr = a.qr();
    let mut q = qr.q();
    let r = qr.r();
    for j in 0..small {
        if r[(j, j)] < 0.0 {
            q.column_mut(j).neg_mut();
        }
    }
    if rows >= cols {
        q
    } else {
        q.transpose()
    }
}

/// Gaussian policy and value function sharing one parameter vector:
/// `[policy MLP | log_std | value MLP]`.
#[derive(Debug, Clone, PartialEq)]
pub struct ActorCritic {
    pub input_dim: usize,
    pub policy: MlpLayout,
    pub value: MlpLayout,
    pub log_std_offset: usize,
    pub params: Vec<f64>,
}

impl ActorCritic {
    pub fn zeros(input_dim: usize, hidden: &[usize]) -> Self {
        let mut sizes = vec![input_dim];
        sizes.extend_from_slice(hidden);
        let mut p_sizes = sizes.clone();
        p_sizes.push(ACTION_DIM);
        let mut v_sizes = sizes;
        v_sizes.push(1);
        let policy = MlpLayout::new(p_sizes, 0);
        let log_std_offset = policy.end();
        let value = MlpLayout::new(v_sizes, log_std_offset + ACTION_DIM);
        let params = vec![0.0; value.end()];
        Self { input_dim, policy, value, log_std_offset, params }
    }

    pub fn new<R: Rng + ?Sized>(input_dim: usize, hidden: &[usize], log_std_init: f64, rng: &mut R) -> Self {
        let mut net = Self::zeros(input_dim, hidden);
        let sqrt2 = std::f64::consts::SQRT_2;
        net.policy.init_orthogonal(&mut net.params, sqrt2, 0.01, rng);
        net.value.init_orthogonal(&mut net.params, sqrt2, 1.0, rng);
        net.params[net.log_std_offset..net.log_std_offset + ACTION_DIM].fill(log_std_init);
        net
    }

    pub fn n_params(&self) -> usize {
        self.params.len()
    }

    /// Raw (unclamped) log standard deviations.
    pub fn raw_log_std(&self) -> &[f64] {
        &self.params[self.log_std_offset..self.log_std_offset + ACTION_DIM]
    }

    pub fn log_std(&self) -> [f64; ACTION_DIM] {
        let raw = self.raw_log_std();
        std::array::from_fn(|i| raw[i].clamp(LOG_STD_MIN, LOG_STD_MAX))
    }

    /// Action means, `ACTION_DIM x B`.
    pub fn policy_mean(&self, obs: &DMatrix<f64>) -> DMatrix<f64> {
        self.policy.forward(&self.params, obs)
    }

    /// State values, `1 x B`.
    pub fn values(&self, obs: &DMatrix<f64>) -> DMatrix<f64> {
        self.value.forward(&self.params, obs)
    }
}

/// Diagonal Gaussian log density of each column of `actions`.
pub fn log_prob(mean: &DMatrix<f64>, log_std: &[f64; ACTION_DIM], actions: &DMatrix<f64>) -> Vec<f64> {
    let half_log_2pi = 0.5 * (2.0 * std::f64::consts::PI).ln();
    (0..mean.ncols())
        .map(|j| {
            (0..ACTION_DIM)
                .map(|i| {
                    let z = (actions[(i, j)] - mean[(i, j)]) / log_std[i].exp();
                    -0.5 * z * z - log_std[i] - half_log_2pi
                })
                .sum()
        })
        .collect()
}

/// Stacks observation rows into a `dim x B` matrix.
pub fn batch_matrix(rows: &[&[f64]]) -> DMatrix<f64> {
    let dim = rows.first().map_or(0, |r| r.len());
    DMatrix::from_fn(dim, rows.len(), |i, j| rows[j][i])
}
