use nalgebra::DMatrix;
use num_complex::Complex64;

use crate::error::{Error, Result};
use crate::fourier::Grid;
use crate::linalg::{frequency_blocks, te_matrix, ConvFilter, FreqSvd, PoolingSpec, Signal};
use crate::network::{forward, ForwardTrace, NetworkParams};
use crate::EPS_KINK;

/// Dense input Jacobian with a kink-proximity diagnostic.
#[derive(Debug, Clone)]
pub struct InputJacobian {
    pub matrix: DMatrix<f64>,
    /// Smallest `|M ᾱ_l|` over hidden units.
    pub min_abs_pooled: f64,
    /// True when some hidden unit sits within `EPS_KINK` of the ReLU kink.
    pub near_kink: bool,
}

/// Dense matrix of `M` acting channel-wise on `c` channels.
pub fn pooling_matrix(pooling: &PoolingSpec, c: usize) -> DMatrix<f64> {
    let f = ConvFilter::from_fn(pooling.grid, c, c, |j, k, s| if k == s { pooling.m[j] } else { 0.0 });
    te_matrix(&f).dense
}

/// Dense `Down_s` from `fine` to its coarsening on `c` channels.
pub fn downsample_matrix(fine: Grid, s: usize, c: usize) -> Result<DMatrix<f64>> {
    let coarse = Grid::new(fine.side() / s, fine.dims())?;
    let mut d = DMatrix::zeros(coarse.pixels() * c, fine.pixels() * c);
    for i in 0..coarse.pixels() {
        let cc = coarse.coords(i);
        let j = fine.index([cc[0] * s, cc[1] * s]);
        for k in 0..c {
            d[(i * c + k, j * c + k)] = 1.0;
        }
    }
    Ok(d)
}

fn mask_rows(mut a: DMatrix<f64>, mask: &[bool]) -> DMatrix<f64> {
    for (r, &on) in mask.iter().enumerate() {
        if !on {
            a.row_mut(r).fill(0.0);
        }
    }
    a
}

/// Per-layer Jacobian factors: `D_l M W_l S_l` for hidden layers and
/// `W_L S_L` for the last one (`S_l` is the input downsampling, if any).
pub fn layer_jacobians(params: &NetworkParams, trace: &ForwardTrace) -> Result<Vec<DMatrix<f64>>> {
    let depth = params.depth();
    let mut prev_grid = params.input_grid();
    let mut out = Vec::with_capacity(depth);
    for (l, f) in params.layers.iter().enumerate() {
        let mut a = te_matrix(f).dense;
        if params.downsample[l] > 1 {
            a = &a * downsample_matrix(prev_grid, params.downsample[l], f.c_in())?;
        }
        if l + 1 < depth {
            a = pooling_matrix(&params.layer_pooling(l)?, f.c_out()) * a;
            a = mask_rows(a, &trace.relu_masks[l]);
        }
        out.push(a);
        prev_grid = f.grid();
    }
    Ok(out)
}

/// `Jf(x) = W_L D_{L-1} M W_{L-1} ... D_1 M W_1` using the masks of the forward pass.
pub fn input_jacobian(params: &NetworkParams, x: &Signal) -> Result<InputJacobian> {
    let trace = forward(params, x)?;
    let factors = layer_jacobians(params, &trace)?;
    let mut j = factors[0].clone();
    for f in &factors[1..] {
        j = f * j;
    }
    let min_abs_pooled = trace.min_abs_pooled();
    Ok(InputJacobian {
        matrix: j,
        min_abs_pooled,
        near_kink: min_abs_pooled < EPS_KINK,
    })
}

/// Jacobians `J(ᾱ_l -> α_L)` of the output with respect to each pre-activation.
pub fn pre_activation_jacobians(params: &NetworkParams, trace: &ForwardTrace) -> Result<Vec<DMatrix<f64>>> {
    let depth = params.depth();
    let factors = layer_jacobians(params, trace)?;
    let n_out = factors[depth - 1].nrows();
    let mut out = vec![DMatrix::zeros(0, 0); depth];
    out[depth - 1] = DMatrix::identity(n_out, n_out);
    // suffix = F_L ... F_{l+2}, the map from α_{l+1} to the output
    let mut suffix = DMatrix::identity(n_out, n_out);
    for l in (0..depth - 1).rev() {
        suffix = &suffix * &factors[l + 1];
        let f = &params.layers[l];
        let dm = mask_rows(pooling_matrix(&params.layer_pooling(l)?, f.c_out()), &trace.relu_masks[l]);
        out[l] = &suffix * dm;
    }
    Ok(out)
}

fn require_constant_input(params: &NetworkParams, x0: &Signal) -> Result<()> {
    if params.is_downsampled() {
        return Err(Error::Hypothesis(
            "frequency Jacobians need a network without downsampling".into(),
        ));
    }
    let tol = 1e-12 * (1.0 + x0.max_abs());
    if !x0.is_channel_constant(tol) {
        return Err(Error::Hypothesis("probe is not constant along its channels".into()));
    }
    Ok(())
}

/// Frequency blocks `J_t = B^L_t D_{L-1} m~_t B^{L-1}_t ... D_1 m~_t B^1_t` of the
/// Jacobian at a channel-constant input.
pub fn constant_input_jacobian_blocks(params: &NetworkParams, x0: &Signal) -> Result<Vec<DMatrix<Complex64>>> {
    require_constant_input(params, x0)?;
    let trace = forward(params, x0)?;
    let depth = params.depth();
    let p = params.input_grid().pixels();
    let all_blocks: Vec<Vec<DMatrix<Complex64>>> = params.layers.iter().map(frequency_blocks).collect();
    let mt = &params.pooling.m_tilde;
    let mut out = Vec::with_capacity(p);
    for t in 0..p {
        let mut j = all_blocks[0][t].clone();
        for l in 0..depth - 1 {
            let c = params.layers[l].c_out();
            let mask = &trace.relu_masks[l][..c];
            let mut d = j * mt[t];
            for (r, &on) in mask.iter().enumerate() {
                if !on {
                    d.row_mut(r).fill(Complex64::new(0.0, 0.0));
                }
            }
            j = &all_blocks[l + 1][t] * d;
        }
        out.push(j);
    }
    Ok(out)
}

/// Frequency-indexed SVD of `Jf(x0)` at a channel-constant input.
pub fn constant_input_jacobian_svd(params: &NetworkParams, x0: &Signal) -> Result<FreqSvd> {
    let blocks = constant_input_jacobian_blocks(params, x0)?;
    FreqSvd::from_blocks(params.input_grid(), &blocks)
}

/// `M^{L-1} W_L D_{L-1} W_{L-1} ... D_1 W_1` at a channel-constant input, where
/// the masks commute with the pooling.
pub fn constant_input_jacobian_factored(params: &NetworkParams, x0: &Signal) -> Result<DMatrix<f64>> {
    require_constant_input(params, x0)?;
    let trace = forward(params, x0)?;
    let depth = params.depth();
    let mut j = te_matrix(&params.layers[0]).dense;
    for l in 1..depth {
        j = mask_rows(j, &trace.relu_masks[l - 1]);
        j = te_matrix(&params.layers[l]).dense * j;
    }
    let m = pooling_matrix(&params.pooling, params.layers[depth - 1].c_out());
    for _ in 0..depth - 1 {
        j = &m * j;
    }
    Ok(j)
}
