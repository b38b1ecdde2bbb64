use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fourier::Grid;
use crate::linalg::Signal;

/// Weights `w[j][k][s]` (offset `j`, output channel `k`, input channel `s`)
/// and bias `b[k]` of one convolutional layer.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConvFilter {
    grid: Grid,
    c_out: usize,
    c_in: usize,
    w: Vec<f64>,
    b: Vec<f64>,
}

impl ConvFilter {
    pub fn new(grid: Grid, c_out: usize, c_in: usize, w: Vec<f64>, b: Vec<f64>) -> Result<Self> {
        if c_out == 0 || c_in == 0 {
            return Err(Error::arg("filters need at least one channel on each side"));
        }
        if w.len() != grid.pixels() * c_out * c_in {
            return Err(Error::dim(format!(
                "filter has {} weights, expected {} x {} x {}",
                w.len(),
                grid.pixels(),
                c_out,
                c_in
            )));
        }
        if b.len() != c_out {
            return Err(Error::dim(format!("bias has {} entries, expected {c_out}", b.len())));
        }
        if w.iter().chain(&b).any(|v| !v.is_finite()) {
            return Err(Error::arg("non-finite filter entry"));
        }
        Ok(ConvFilter {
            grid,
            c_out,
            c_in,
            w,
            b,
        })
    }

    pub fn zeros(grid: Grid, c_out: usize, c_in: usize) -> Self {
        ConvFilter {
            grid,
            c_out,
            c_in,
            w: vec![0.0; grid.pixels() * c_out * c_in],
            b: vec![0.0; c_out],
        }
    }

    /// Per-channel impulse `w_{:,k,s} = delta_{k=s} e_0`, zero bias.
    pub fn impulse(grid: Grid, c: usize) -> Self {
        let mut f = ConvFilter::zeros(grid, c, c);
        for k in 0..c {
            f.set_w(0, k, k, 1.0);
        }
        f
    }

    pub fn from_fn(
        grid: Grid,
        c_out: usize,
        c_in: usize,
        mut f: impl FnMut(usize, usize, usize) -> f64,
    ) -> Self {
        let mut w = Vec::with_capacity(grid.pixels() * c_out * c_in);
        for j in 0..grid.pixels() {
            for k in 0..c_out {
                for s in 0..c_in {
                    w.push(f(j, k, s));
                }
            }
        }
        ConvFilter {
            grid,
            c_out,
            c_in,
            w,
            b: vec![0.0; c_out],
        }
    }

    pub fn grid(&self) -> Grid {
        self.grid
    }

    pub fn c_out(&self) -> usize {
        self.c_out
    }

    pub fn c_in(&self) -> usize {
        self.c_in
    }

    pub fn weights(&self) -> &[f64] {
        &self.w
    }

    pub fn weights_mut(&mut self) -> &mut [f64] {
        &mut self.w
    }

    pub fn bias(&self) -> &[f64] {
        &self.b
    }

    pub fn bias_mut(&mut self) -> &mut [f64] {
        &mut self.b
    }

    pub fn with_bias(mut self, b: Vec<f64>) -> Result<Self> {
        if b.len() != self.c_out {
            return Err(Error::dim(format!("bias has {} entries, expected {}", b.len(), self.c_out)));
        }
        self.b = b;
        Ok(self)
    }

    fn idx(&self, j: usize, k: usize, s: usize) -> usize {
        (j * self.c_out + k) * self.c_in + s
    }

    pub fn w(&self, j: usize, k: usize, s: usize) -> f64 {
        self.w[self.idx(j, k, s)]
    }

    pub fn set_w(&mut self, j: usize, k: usize, s: usize, v: f64) {
        let i = self.idx(j, k, s);
        self.w[i] = v;
    }

    /// The scalar filter `w_{:,k,s}` over offsets.
    pub fn tap(&self, k: usize, s: usize) -> Vec<f64> {
        (0..self.grid.pixels()).map(|j| self.w(j, k, s)).collect()
    }

    /// `||w||_F^2` (filter norm, without the pixel factor).
    pub fn weight_norm_sq(&self) -> f64 {
        self.w.iter().map(|v| v * v).sum()
    }

    pub fn bias_norm_sq(&self) -> f64 {
        self.b.iter().map(|v| v * v).sum()
    }

    /// `||W||_F^2 = n ||w||_F^2` for the equivalent dense matrix.
    pub fn matrix_norm_sq(&self) -> f64 {
        self.grid.pixels() as f64 * self.weight_norm_sq()
    }
}

/// Cyclic convolution `(a * b)_i = sum_j a_j b_{i + j}` on a 1D ring.
pub fn cyclic_conv(a: &[f64], b: &[f64]) -> Result<Vec<f64>> {
    if a.len() != b.len() {
        return Err(Error::dim(format!("lengths {} and {}", a.len(), b.len())));
    }
    cyclic_conv_on(Grid::line(a.len().max(1)), a, b)
}

/// Cyclic convolution on an arbitrary grid (index sums wrap per axis).
pub fn cyclic_conv_on(grid: Grid, a: &[f64], b: &[f64]) -> Result<Vec<f64>> {
    let p = grid.pixels();
    if a.len() != p || b.len() != p {
        return Err(Error::dim(format!(
            "lengths {} and {} on a grid of {p} pixels",
            a.len(),
            b.len()
        )));
    }
    Ok((0..p)
        .map(|i| (0..p).map(|j| a[j] * b[grid.add(i, j)]).sum())
        .collect())
}

/// `out_{:,k} = sum_s w_{:,k,s} * x_{:,s}` (no bias).
pub fn cross_channel_conv(f: &ConvFilter, x: &Signal) -> Result<Signal> {
    if f.grid() != x.grid() || f.c_in() != x.channels() {
        return Err(Error::dim(format!(
            "filter {:?} with {} input channels applied to signal {:?} with {} channels",
            f.grid(),
            f.c_in(),
            x.grid(),
            x.channels()
        )));
    }
    let g = f.grid();
    let p = g.pixels();
    let mut out = Signal::zeros(g, f.c_out());
    for i in 0..p {
        for j in 0..p {
            let src = g.add(i, j);
            for k in 0..f.c_out() {
                let mut acc = 0.0;
                for s in 0..f.c_in() {
                    acc += f.w(j, k, s) * x.get(src, s);
                }
                let cur = out.get(i, k);
                out.set(i, k, cur + acc);
            }
        }
    }
    Ok(out)
}
