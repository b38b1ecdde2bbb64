//! Independent reference implementations used as test oracles.
#![allow(dead_code)]

use cbn_core::fourier::Grid;
use cbn_core::linalg::{ConvFilter, PoolingKind, PoolingSpec, Signal};
use cbn_core::network::NetworkParams;
use nalgebra::DMatrix;
use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use std::f64::consts::PI;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn random_vec(rng: &mut ChaCha8Rng, len: usize) -> Vec<f64> {
    (0..len).map(|_| rng.random_range(-1.0..1.0)).collect()
}

pub fn random_filter(rng: &mut ChaCha8Rng, grid: Grid, c_out: usize, c_in: usize) -> ConvFilter {
    let w = random_vec(rng, grid.pixels() * c_out * c_in);
    let b = random_vec(rng, c_out);
    ConvFilter::new(grid, c_out, c_in, w, b).unwrap()
}

pub fn random_signal(rng: &mut ChaCha8Rng, grid: Grid, c: usize) -> Signal {
    Signal::new(grid, c, random_vec(rng, grid.pixels() * c)).unwrap()
}

pub fn random_net(rng: &mut ChaCha8Rng, pooling: PoolingSpec, widths: &[usize]) -> NetworkParams {
    let g = pooling.grid;
    let layers = widths
        .windows(2)
        .map(|w| random_filter(rng, g, w[1], w[0]))
        .collect();
    NetworkParams::new(pooling, layers).unwrap()
}

pub fn blend(grid: Grid, beta: f64) -> PoolingSpec {
    PoolingSpec::new(PoolingKind::BlendAvg3 { beta }, grid).unwrap()
}

/// Direct DFT `X_t = sum_j x_j exp(-2 pi i <t, j> / n)` with explicit trig.
pub fn naive_dft(grid: Grid, x: &[Complex64], sign: f64) -> Vec<Complex64> {
    let n = grid.side() as f64;
    (0..grid.pixels())
        .map(|t| {
            let tc = grid.coords(t);
            (0..grid.pixels())
                .map(|j| {
                    let jc = grid.coords(j);
                    let ang = sign * 2.0 * PI * ((tc[0] * jc[0] + tc[1] * jc[1]) as f64) / n;
                    x[j] * Complex64::from_polar(1.0, ang)
                })
                .sum()
        })
        .collect()
}

/// Spatial-domain layer: `ᾱ_{i,k} = sum_{j,s} w_{j,k,s} x_{i+j,s} + b_k`.
pub fn direct_layer(f: &ConvFilter, x: &[f64]) -> Vec<f64> {
    let g = f.grid();
    let (co, ci) = (f.c_out(), f.c_in());
    let mut out = vec![0.0; g.pixels() * co];
    for i in 0..g.pixels() {
        for k in 0..co {
            let mut acc = f.bias()[k];
            for j in 0..g.pixels() {
                let src = g.add(i, j);
                for s in 0..ci {
                    acc += f.w(j, k, s) * x[src * ci + s];
                }
            }
            out[i * co + k] = acc;
        }
    }
    out
}

/// Spatial-domain pooling `(m * a)_i = sum_j m_j a_{i+j}` per channel.
pub fn direct_pool(grid: Grid, m: &[f64], a: &[f64], c: usize) -> Vec<f64> {
    let mut out = vec![0.0; a.len()];
    for i in 0..grid.pixels() {
        for k in 0..c {
            out[i * c + k] = (0..grid.pixels()).map(|j| m[j] * a[grid.add(i, j) * c + k]).sum();
        }
    }
    out
}

/// Reference forward pass (no downsampling) built from the defining sums.
pub fn direct_forward(params: &NetworkParams, x: &Signal) -> Vec<f64> {
    let depth = params.depth();
    let g = params.input_grid();
    let mut a = x.data().to_vec();
    for (l, f) in params.layers.iter().enumerate() {
        let pre = direct_layer(f, &a);
        a = if l + 1 < depth {
            direct_pool(g, &params.pooling.m, &pre, f.c_out())
                .into_iter()
                .map(|v| v.max(0.0))
                .collect()
        } else {
            pre
        };
    }
    a
}

/// Minimum `|M ᾱ_l|` over hidden units, from the reference forward pass.
pub fn direct_min_pooled(params: &NetworkParams, x: &Signal) -> f64 {
    let depth = params.depth();
    let g = params.input_grid();
    let mut a = x.data().to_vec();
    let mut min = f64::INFINITY;
    for (l, f) in params.layers.iter().enumerate() {
        let pre = direct_layer(f, &a);
        if l + 1 < depth {
            let pooled = direct_pool(g, &params.pooling.m, &pre, f.c_out());
            min = pooled.iter().fold(min, |m, v| m.min(v.abs()));
            a = pooled.into_iter().map(|v| v.max(0.0)).collect();
        }
    }
    min
}

/// Central-difference Jacobian of `f` at `x` with step `h`.
pub fn fd_jacobian(f: impl Fn(&[f64]) -> Vec<f64>, x: &[f64], h: f64) -> DMatrix<f64> {
    let m = f(x).len();
    let mut j = DMatrix::zeros(m, x.len());
    let mut xp = x.to_vec();
    for c in 0..x.len() {
        xp[c] = x[c] + h;
        let up = f(&xp);
        xp[c] = x[c] - h;
        let dn = f(&xp);
        xp[c] = x[c];
        for r in 0..m {
            j[(r, c)] = (up[r] - dn[r]) / (2.0 * h);
        }
    }
    j
}

/// Dense real SVD singular values, sorted descending.
pub fn dense_singular_values(a: &DMatrix<f64>) -> Vec<f64> {
    let mut s: Vec<f64> = a.clone().singular_values().iter().copied().collect();
    s.sort_by(|a, b| b.total_cmp(a));
    s
}

pub fn rel_err(a: f64, b: f64) -> f64 {
    (a - b).abs() / a.abs().max(b.abs()).max(1e-300)
}
