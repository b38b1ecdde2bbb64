//! Networks with a single Fourier down/up-sampling stage.

use crate::constructions::layers::identity_network;
use crate::constructions::resample::{downsample, upsample};
use crate::error::{Error, Result};
use crate::fourier::Grid;
use crate::linalg::{ConvFilter, PoolingSpec, Signal};
use crate::network::{evaluate, NetworkParams};

/// Stride `s`, outer side `n`, inner side `n' = n / s` and the inner pooling.
#[derive(Debug, Clone, PartialEq)]
pub struct StrideSpec {
    pub s: usize,
    pub n: usize,
    pub inner_n: usize,
    pub inner_pooling: PoolingSpec,
}

impl StrideSpec {
    /// Inner pooling defaults to `outer` truncated to the low frequencies.
    pub fn new(s: usize, outer: &PoolingSpec) -> Result<Self> {
        let grid = outer.grid;
        if s < 2 {
            return Err(Error::arg(format!("stride must be >= 2, got {s}")));
        }
        if grid.side() % s != 0 {
            return Err(Error::arg(format!("stride {s} does not divide side {}", grid.side())));
        }
        let inner = Grid::new(grid.side() / s, grid.dims())?;
        Ok(StrideSpec {
            s,
            n: grid.side(),
            inner_n: inner.side(),
            inner_pooling: outer.truncated(inner)?,
        })
    }

    pub fn with_inner_pooling(mut self, pooling: PoolingSpec) -> Result<Self> {
        if pooling.grid.side() != self.inner_n {
            return Err(Error::dim("inner pooling must live on the inner grid"));
        }
        self.inner_pooling = pooling;
        Ok(self)
    }
}

/// `f2 o Up_s o inner o Down_s o f1`.
#[derive(Debug, Clone, PartialEq)]
pub struct StrideNetwork {
    pub f1: NetworkParams,
    pub inner: NetworkParams,
    pub f2: NetworkParams,
    pub spec: StrideSpec,
}

pub fn stride_network(
    f1: NetworkParams,
    inner: NetworkParams,
    f2: NetworkParams,
    spec: StrideSpec,
) -> Result<StrideNetwork> {
    let outer = f1.input_grid();
    if outer.side() != spec.n || f1.output_grid() != outer || f2.input_grid() != outer {
        return Err(Error::dim(format!("outer networks must live on side {}", spec.n)));
    }
    if inner.input_grid().side() != spec.inner_n || inner.output_grid() != inner.input_grid() {
        return Err(Error::dim(format!("inner network must live on side {}", spec.inner_n)));
    }
    if inner.input_grid().dims() != outer.dims() {
        return Err(Error::dim("inner and outer grids differ in dimension"));
    }
    let (w1, wi, w2) = (f1.widths(), inner.widths(), f2.widths());
    if w1[w1.len() - 1] != wi[0] || wi[wi.len() - 1] != w2[0] {
        return Err(Error::dim("channel counts do not chain across the resamplers"));
    }
    if inner.pooling.m.iter().zip(&spec.inner_pooling.m).any(|(a, b)| (a - b).abs() > 1e-12) {
        return Err(Error::dim("inner network does not use the spec's inner pooling"));
    }
    Ok(StrideNetwork { f1, inner, f2, spec })
}

impl StrideNetwork {
    pub fn evaluate(&self, x: &Signal) -> Result<Signal> {
        let a = evaluate(&self.f1, x)?;
        let d = downsample(&a, self.spec.s)?;
        let h = evaluate(&self.inner, &d)?;
        let u = upsample(&h, self.spec.s)?;
        evaluate(&self.f2, &u)
    }

    pub fn depth(&self) -> usize {
        self.f1.depth() + self.inner.depth() + self.f2.depth()
    }

    pub fn norm_sq(&self) -> f64 {
        self.f1.norm_sq() + self.inner.norm_sq() + self.f2.norm_sq()
    }
}

/// Impulse layers around an inner identity network: the identity on
/// band-limited signals with entries in `[-bound, bound]`.
pub fn stride_identity_witness(
    c: usize,
    outer: &PoolingSpec,
    s: usize,
    inner_depth: usize,
    bound: f64,
) -> Result<StrideNetwork> {
    let spec = StrideSpec::new(s, outer)?;
    let g = outer.grid;
    let single = |p: &PoolingSpec| NetworkParams::new(p.clone(), vec![ConvFilter::impulse(g, c)]);
    let inner = identity_network(c, inner_depth, &spec.inner_pooling, bound)?;
    stride_network(single(outer)?, inner, single(outer)?, spec)
}
