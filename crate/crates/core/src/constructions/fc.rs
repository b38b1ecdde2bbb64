//! Compiling a fully-connected ReLU network into a translation-equivariant CNN.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fourier::Grid;
use crate::linalg::{ConvFilter, PoolingSpec, Signal};
use crate::network::NetworkParams;

/// One affine map `v -> A v + d` with `A` stored row-major.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FcLayer {
    pub rows: usize,
    pub cols: usize,
    pub a: Vec<f64>,
    pub d: Vec<f64>,
}

impl FcLayer {
    pub fn new(rows: usize, cols: usize, a: Vec<f64>, d: Vec<f64>) -> Result<Self> {
        if rows == 0 || cols == 0 {
            return Err(Error::arg("fully-connected layers need positive sizes"));
        }
        if a.len() != rows * cols || d.len() != rows {
            return Err(Error::dim(format!(
                "layer {rows}x{cols} got {} weights and {} biases",
                a.len(),
                d.len()
            )));
        }
        Ok(FcLayer { rows, cols, a, d })
    }

    pub fn apply(&self, v: &[f64]) -> Vec<f64> {
        (0..self.rows)
            .map(|r| self.d[r] + self.a[r * self.cols..(r + 1) * self.cols].iter().zip(v).map(|(a, x)| a * x).sum::<f64>())
            .collect()
    }
}

/// Fully-connected network with ReLU between layers and a linear last layer.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FCNetwork {
    pub layers: Vec<FcLayer>,
}

impl FCNetwork {
    pub fn new(layers: Vec<FcLayer>) -> Result<Self> {
        if layers.is_empty() {
            return Err(Error::arg("fully-connected network needs a layer"));
        }
        for (l, w) in layers.windows(2).enumerate() {
            if w[0].rows != w[1].cols {
                return Err(Error::dim(format!(
                    "layer {} outputs {} values but layer {} takes {}",
                    l + 1,
                    w[0].rows,
                    l + 2,
                    w[1].cols
                )));
            }
        }
        Ok(FCNetwork { layers })
    }

    /// Uniform `[-1, 1)` weights and biases for `widths = [d_0, ..., d_L]`.
    pub fn random(widths: &[usize], seed: u64) -> Result<Self> {
        if widths.len() < 2 {
            return Err(Error::arg("widths must list at least input and output sizes"));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let layers = widths
            .windows(2)
            .map(|w| {
                let a = (0..w[0] * w[1]).map(|_| rng.random_range(-1.0..1.0)).collect();
                let d = (0..w[1]).map(|_| rng.random_range(-1.0..1.0)).collect();
                FcLayer::new(w[1], w[0], a, d)
            })
            .collect::<Result<Vec<_>>>()?;
        FCNetwork::new(layers)
    }

    pub fn input_dim(&self) -> usize {
        self.layers[0].cols
    }

    pub fn output_dim(&self) -> usize {
        self.layers[self.layers.len() - 1].rows
    }

    pub fn evaluate(&self, v: &[f64]) -> Result<Vec<f64>> {
        if v.len() != self.input_dim() {
            return Err(Error::dim(format!("input has {} values, expected {}", v.len(), self.input_dim())));
        }
        let mut a = v.to_vec();
        for (l, layer) in self.layers.iter().enumerate() {
            a = layer.apply(&a);
            if l + 1 < self.layers.len() {
                a.iter_mut().for_each(|x| *x = x.max(0.0));
            }
        }
        Ok(a)
    }
}

/// `vec(T_{-p} x)`: the signal re-centred at pixel `p`, flattened pixel-major.
pub fn recentred(x: &Signal, p: usize) -> Vec<f64> {
    let g = x.grid();
    let c = x.channels();
    let mut v = Vec::with_capacity(g.pixels() * c);
    for i in 0..g.pixels() {
        let src = g.add(i, p);
        v.extend((0..c).map(|s| x.get(src, s)));
    }
    v
}

/// No-pooling CNN whose output at pixel `p` is `fc(vec(T_{-p} x))`.
///
/// The first layer copies every translate into its own channel
/// (`alpha_1(x)_{p,(i,s)} = x_{i+p,s}`), which passes the ReLU unchanged for
/// nonnegative inputs; the remaining layers apply `A_l, d_l` pixel by pixel.
pub fn fc_to_cnn(fc: &FCNetwork, grid: Grid, c_in: usize) -> Result<NetworkParams> {
    let p = grid.pixels();
    let width = p * c_in;
    if fc.input_dim() != width {
        return Err(Error::dim(format!(
            "fully-connected input has {} values, signals have {width}",
            fc.input_dim()
        )));
    }
    let mut layers = Vec::with_capacity(fc.layers.len() + 1);
    layers.push(ConvFilter::from_fn(grid, width, c_in, |j, q, s| {
        if q == j * c_in + s {
            1.0
        } else {
            0.0
        }
    }));
    for layer in &fc.layers {
        let f = ConvFilter::from_fn(grid, layer.rows, layer.cols, |j, k, s| {
            if j == 0 {
                layer.a[k * layer.cols + s]
            } else {
                0.0
            }
        });
        layers.push(f.with_bias(layer.d.clone())?);
    }
    NetworkParams::new(PoolingSpec::identity(grid), layers)
}

/// Rejects samples with a negative entry and recommends the shift that makes
/// every sample nonnegative.
pub fn check_positive_domain(samples: &[Signal]) -> Result<()> {
    let worst = samples
        .iter()
        .enumerate()
        .map(|(i, x)| (i, x.min_value()))
        .min_by(|a, b| a.1.total_cmp(&b.1));
    match worst {
        Some((sample, value)) if value < 0.0 => Err(Error::NegativeDomain {
            sample,
            value,
            recommended_shift: -value,
        }),
        _ => Ok(()),
    }
}
