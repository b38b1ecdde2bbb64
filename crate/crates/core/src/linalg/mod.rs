//! Signals, convolution filters and the block-circulant algebra they generate.

mod filter;
mod pooling;
mod signal;
mod te;

pub use filter::{cross_channel_conv, cyclic_conv, cyclic_conv_on, ConvFilter};
pub use pooling::{filter_from_eigenvalues, pooling_operator, PoolingKind, PoolingSpec, EPS_INV};
pub use signal::Signal;
pub use te::{
    circulant_eigenvalues, filter_from_blocks, filter_from_te_dense, frequency_blocks, frequency_svd, log_pseudo_det,
    pseudo_det, te_matrix, FreqComponent, FreqEntry, FreqSvd, TeMatrix,
};
pub(crate) use te::sorted_svd;
