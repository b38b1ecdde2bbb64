use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use crate::error::{Error, Result};
use crate::fourier::Grid;
use crate::linalg::{ConvFilter, PoolingSpec};

/// Parameters `theta = (w_1, b_1, ..., w_L, b_L)` of a cyclic CNN.
///
/// `downsample[l]` is the stride applied to the input of layer `l` (1 means
/// none); the pooling of coarser layers is the truncation of `pooling`.
#[derive(Debug, Clone, PartialEq)]
pub struct NetworkParams {
    pub pooling: PoolingSpec,
    pub layers: Vec<ConvFilter>,
    pub downsample: Vec<usize>,
}

impl NetworkParams {
    pub fn new(pooling: PoolingSpec, layers: Vec<ConvFilter>) -> Result<Self> {
        let strides = vec![1; layers.len()];
        Self::with_downsampling(pooling, layers, strides)
    }

    pub fn with_downsampling(
        pooling: PoolingSpec,
        layers: Vec<ConvFilter>,
        downsample: Vec<usize>,
    ) -> Result<Self> {
        if layers.is_empty() {
            return Err(Error::arg("a network needs at least one layer"));
        }
        if downsample.len() != layers.len() {
            return Err(Error::dim("one downsampling stride per layer"));
        }
        let mut grid = pooling.grid;
        for (l, (f, &s)) in layers.iter().zip(&downsample).enumerate() {
            if s == 0 {
                return Err(Error::arg("downsampling stride must be positive"));
            }
            if s > 1 {
                grid = Grid::new(grid.side() / s, grid.dims())?;
            }
            if f.grid() != grid {
                return Err(Error::dim(format!(
                    "layer {} lives on {:?}, expected {:?}",
                    l + 1,
                    f.grid(),
                    grid
                )));
            }
            if l > 0 && layers[l - 1].c_out() != f.c_in() {
                return Err(Error::dim(format!(
                    "layer {} outputs {} channels but layer {} expects {}",
                    l,
                    layers[l - 1].c_out(),
                    l + 1,
                    f.c_in()
                )));
            }
        }
        Ok(NetworkParams {
            pooling,
            layers,
            downsample,
        })
    }

    /// Gaussian filters with standard deviation `init_scale / sqrt(n c_in)`, zero biases.
    pub fn random(
        pooling: PoolingSpec,
        widths: &[usize],
        init_scale: f64,
        seed: u64,
    ) -> Result<Self> {
        let strides = vec![1; widths.len().saturating_sub(1)];
        Self::random_with_downsampling(pooling, widths, &strides, init_scale, seed)
    }

    pub fn random_with_downsampling(
        pooling: PoolingSpec,
        widths: &[usize],
        downsample: &[usize],
        init_scale: f64,
        seed: u64,
    ) -> Result<Self> {
        if widths.len() < 2 {
            return Err(Error::arg("widths must list c_0..c_L with L >= 1"));
        }
        if downsample.len() != widths.len() - 1 {
            return Err(Error::dim("one downsampling stride per layer"));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut grid = pooling.grid;
        let mut layers = Vec::with_capacity(widths.len() - 1);
        for l in 0..widths.len() - 1 {
            if downsample[l] > 1 {
                grid = Grid::new(grid.side() / downsample[l], grid.dims())?;
            }
            let (c_in, c_out) = (widths[l], widths[l + 1]);
            let std = init_scale / ((grid.pixels() * c_in) as f64).sqrt();
            let normal = Normal::new(0.0, std).map_err(|e| Error::arg(e.to_string()))?;
            layers.push(ConvFilter::from_fn(grid, c_out, c_in, |_, _, _| normal.sample(&mut rng)));
        }
        Self::with_downsampling(pooling, layers, downsample.to_vec())
    }

    pub fn depth(&self) -> usize {
        self.layers.len()
    }

    /// Channel counts `c_0, ..., c_L`.
    pub fn widths(&self) -> Vec<usize> {
        std::iter::once(self.layers[0].c_in())
            .chain(self.layers.iter().map(|f| f.c_out()))
            .collect()
    }

    pub fn input_grid(&self) -> Grid {
        self.pooling.grid
    }

    pub fn output_grid(&self) -> Grid {
        self.layers.last().expect("nonempty").grid()
    }

    pub fn is_downsampled(&self) -> bool {
        self.downsample.iter().any(|&s| s > 1)
    }

    /// Pooling acting on the grid of layer `l` (0-based).
    pub fn layer_pooling(&self, l: usize) -> Result<PoolingSpec> {
        self.pooling.truncated(self.layers[l].grid())
    }

    /// `||theta||^2 = sum_l ||W_l||_F^2 + ||b_l||^2` with `||W_l||_F^2 = n ||w_l||_F^2`.
    pub fn norm_sq(&self) -> f64 {
        self.layers
            .iter()
            .map(|f| f.matrix_norm_sq() + f.bias_norm_sq())
            .sum()
    }

    /// `sum_l ||W_l||_F^2` without the biases.
    pub fn weight_norm_sq(&self) -> f64 {
        self.layers.iter().map(|f| f.matrix_norm_sq()).sum()
    }

    /// Per-layer `||W_l||_F^2 + ||b_l||^2`.
    pub fn layer_norms(&self) -> Vec<f64> {
        self.layers
            .iter()
            .map(|f| f.matrix_norm_sq() + f.bias_norm_sq())
            .collect()
    }

    pub fn num_parameters(&self) -> usize {
        self.layers
            .iter()
            .map(|f| f.weights().len() + f.bias().len())
            .sum()
    }

    /// Flattened parameters: per layer the filter `w[j][k][s]` then the bias.
    pub fn to_flat(&self) -> Vec<f64> {
        let mut v = Vec::with_capacity(self.num_parameters());
        for f in &self.layers {
            v.extend_from_slice(f.weights());
            v.extend_from_slice(f.bias());
        }
        v
    }

    pub fn set_flat(&mut self, v: &[f64]) -> Result<()> {
        if v.len() != self.num_parameters() {
            return Err(Error::dim(format!(
                "{} values for {} parameters",
                v.len(),
                self.num_parameters()
            )));
        }
        let mut pos = 0;
        for f in &mut self.layers {
            let nw = f.weights().len();
            f.weights_mut().copy_from_slice(&v[pos..pos + nw]);
            pos += nw;
            let nb = f.bias().len();
            f.bias_mut().copy_from_slice(&v[pos..pos + nb]);
            pos += nb;
        }
        Ok(())
    }

    /// Same architecture with all parameters zero.
    pub fn zeros_like(&self) -> NetworkParams {
        NetworkParams {
            pooling: self.pooling.clone(),
            layers: self
                .layers
                .iter()
                .map(|f| ConvFilter::zeros(f.grid(), f.c_out(), f.c_in()))
                .collect(),
            downsample: self.downsample.clone(),
        }
    }
}

/// `||W_l||^2 + ||b_l||^2 - ||W_{l+1}||^2` for `l = 1..L-1`, in matrix norm.
pub fn balancedness_residuals(params: &NetworkParams) -> Result<Vec<f64>> {
    if params.depth() < 2 {
        return Err(Error::arg("balancedness needs at least two layers"));
    }
    Ok(params
        .layers
        .windows(2)
        .map(|w| w[0].matrix_norm_sq() + w[0].bias_norm_sq() - w[1].matrix_norm_sq())
        .collect())
}
