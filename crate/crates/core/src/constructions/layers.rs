//! Identity layers, parallel stacking and composition of networks.

use nalgebra::DMatrix;
use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{filter_from_blocks, frequency_blocks, ConvFilter, PoolingSpec};
use crate::network::NetworkParams;

/// Per-channel `m^{-1}` filter: `M (W x) = x` for every `x`.
pub fn identity_layer(pooling: &PoolingSpec, c: usize) -> Result<ConvFilter> {
    let inv = pooling.inverse_filter()?;
    let mut f = ConvFilter::zeros(pooling.grid, c, c);
    for k in 0..c {
        for (j, &v) in inv.iter().enumerate() {
            f.set_w(j, k, k, v);
        }
    }
    Ok(f)
}

/// Conjugate closure of a frequency set, sorted.
pub fn conjugate_closure(pooling: &PoolingSpec, set: &[usize]) -> Vec<usize> {
    let g = pooling.grid;
    let mut out: Vec<usize> = set.iter().flat_map(|&t| [t, g.conjugate_frequency(t)]).collect();
    out.sort_unstable();
    out.dedup();
    out
}

/// Identity layer restricted to per-channel frequency sets: eigenvalue
/// `1 / m~_t` on the conjugate closure of `sets[k]`, zero elsewhere.
pub fn support_identity_layer(pooling: &PoolingSpec, sets: &[Vec<usize>]) -> Result<ConvFilter> {
    let g = pooling.grid;
    let c = sets.len();
    if c == 0 {
        return Err(Error::arg("support needs at least one channel"));
    }
    let mut blocks = vec![DMatrix::<Complex64>::zeros(c, c); g.pixels()];
    for (k, set) in sets.iter().enumerate() {
        for t in conjugate_closure(pooling, set) {
            if t >= g.pixels() {
                return Err(Error::arg(format!("frequency index {t} out of range")));
            }
            let z = pooling.m_tilde[t];
            if !(pooling.abs(t) > crate::linalg::EPS_INV) {
                return Err(Error::NonInvertiblePooling {
                    min_abs: pooling.abs(t),
                    threshold: crate::linalg::EPS_INV,
                });
            }
            blocks[t][(k, k)] = z.inv();
        }
    }
    filter_from_blocks(g, &blocks)
}

fn first_bias(pooling: &PoolingSpec, bound: f64) -> Result<f64> {
    let m0 = pooling.m_tilde[0].re;
    if m0.abs() <= crate::linalg::EPS_INV {
        return Err(Error::NonInvertiblePooling {
            min_abs: m0.abs(),
            threshold: crate::linalg::EPS_INV,
        });
    }
    Ok(bound / m0)
}

fn check_bound(bound: f64) -> Result<()> {
    if !(bound >= 0.0) || !bound.is_finite() {
        return Err(Error::arg(format!("domain bound must be finite and >= 0, got {bound}")));
    }
    Ok(())
}

/// Network computing the identity on signals with entries in `[-bound, bound]`.
///
/// Layers `1..L-1` are `m^{-1}` filters (the first adds `bound / m~_0` so
/// every hidden activation is nonnegative); the last, unpooled layer is the
/// impulse with bias `-bound`. Depth 1 gives a single impulse layer.
pub fn identity_network(c: usize, depth: usize, pooling: &PoolingSpec, bound: f64) -> Result<NetworkParams> {
    if depth == 0 || c == 0 {
        return Err(Error::arg("identity network needs depth >= 1 and c >= 1"));
    }
    check_bound(bound)?;
    pooling.require_invertible()?;
    let g = pooling.grid;
    if depth == 1 {
        return NetworkParams::new(pooling.clone(), vec![ConvFilter::impulse(g, c)]);
    }
    let b1 = first_bias(pooling, bound)?;
    let mut layers = Vec::with_capacity(depth);
    for l in 0..depth - 1 {
        let f = identity_layer(pooling, c)?;
        layers.push(if l == 0 { f.with_bias(vec![b1; c])? } else { f });
    }
    layers.push(ConvFilter::impulse(g, c).with_bias(vec![-bound; c])?);
    NetworkParams::new(pooling.clone(), layers)
}

/// Like [`identity_network`] but each hidden layer keeps only the frequencies
/// in `sets[k]` (closed under conjugation) for channel `k`; it is the identity
/// on nonnegative-shifted signals supported there. With `bound > 0` every set
/// must contain the constant frequency.
pub fn support_identity_network(
    sets: &[Vec<usize>],
    depth: usize,
    pooling: &PoolingSpec,
    bound: f64,
) -> Result<NetworkParams> {
    if depth == 0 {
        return Err(Error::arg("identity network needs depth >= 1"));
    }
    check_bound(bound)?;
    if bound > 0.0 && sets.iter().any(|s| !s.contains(&0)) {
        return Err(Error::arg("a nonzero domain shift needs the constant frequency in every support"));
    }
    let c = sets.len();
    let g = pooling.grid;
    if depth == 1 {
        return NetworkParams::new(pooling.clone(), vec![ConvFilter::impulse(g, c)]);
    }
    let b1 = first_bias(pooling, bound)?;
    let mut layers = Vec::with_capacity(depth);
    for l in 0..depth - 1 {
        let f = support_identity_layer(pooling, sets)?;
        layers.push(if l == 0 { f.with_bias(vec![b1; c])? } else { f });
    }
    layers.push(ConvFilter::impulse(g, c).with_bias(vec![-bound; c])?);
    NetworkParams::new(pooling.clone(), layers)
}

/// Closed-form parameter norm of [`identity_network`].
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct IdentityAccounting {
    /// `c M_bar` for each `m^{-1}` layer.
    pub per_hidden_layer: f64,
    /// `c n` for the final impulse layer.
    pub last_layer: f64,
    pub weights: f64,
    pub biases: f64,
    pub total: f64,
}

pub fn identity_accounting(c: usize, depth: usize, pooling: &PoolingSpec, bound: f64) -> Result<IdentityAccounting> {
    if depth == 0 {
        return Err(Error::arg("depth must be >= 1"));
    }
    let cf = c as f64;
    let per_hidden_layer = cf * pooling.m_bar;
    let last_layer = cf * pooling.grid.pixels() as f64;
    let weights = (depth - 1) as f64 * per_hidden_layer + last_layer;
    let biases = if depth == 1 {
        0.0
    } else {
        let b1 = first_bias(pooling, bound)?;
        cf * (b1 * b1 + bound * bound)
    };
    Ok(IdentityAccounting {
        per_hidden_layer,
        last_layer,
        weights,
        biases,
        total: weights + biases,
    })
}

fn same_pooling(a: &PoolingSpec, b: &PoolingSpec) -> bool {
    a.grid == b.grid && a.m.len() == b.m.len() && a.m.iter().zip(&b.m).all(|(x, y)| (x - y).abs() <= 1e-12)
}

/// Network computing `f_a + f_b`: hidden channels are stacked side by side
/// with block-disjoint filters and the output biases add.
///
/// Weights are exactly additive; the total norm picks up the cross term
/// `2 <b_a, b_b>` of the summed output biases (zero when either is zero).
pub fn parallel_sum(a: &NetworkParams, b: &NetworkParams) -> Result<NetworkParams> {
    if a.depth() != b.depth() {
        return Err(Error::dim(format!("depths {} and {} differ", a.depth(), b.depth())));
    }
    if !same_pooling(&a.pooling, &b.pooling) || a.downsample != b.downsample {
        return Err(Error::dim("networks use different pooling or downsampling"));
    }
    let (wa, wb) = (a.widths(), b.widths());
    let depth = a.depth();
    if wa[0] != wb[0] || wa[depth] != wb[depth] {
        return Err(Error::dim("input or output channels differ"));
    }
    let mut layers = Vec::with_capacity(depth);
    for l in 0..depth {
        let (fa, fb) = (&a.layers[l], &b.layers[l]);
        let g = fa.grid();
        let first = l == 0;
        let last = l + 1 == depth;
        if depth == 1 {
            let w = fa.weights().iter().zip(fb.weights()).map(|(x, y)| x + y).collect();
            let bias = fa.bias().iter().zip(fb.bias()).map(|(x, y)| x + y).collect();
            layers.push(ConvFilter::new(g, fa.c_out(), fa.c_in(), w, bias)?);
            break;
        }
        let co = if last { fa.c_out() } else { fa.c_out() + fb.c_out() };
        let ci = if first { fa.c_in() } else { fa.c_in() + fb.c_in() };
        // Channel offsets of `b` inside the stacked layer.
        let (ko, so) = (if last { 0 } else { fa.c_out() }, if first { 0 } else { fa.c_in() });
        let mut f = ConvFilter::zeros(g, co, ci);
        for j in 0..g.pixels() {
            for k in 0..fa.c_out() {
                for s in 0..fa.c_in() {
                    f.set_w(j, k, s, fa.w(j, k, s));
                }
            }
            for k in 0..fb.c_out() {
                for s in 0..fb.c_in() {
                    f.set_w(j, k + ko, s + so, fb.w(j, k, s));
                }
            }
        }
        let bias = if last {
            fa.bias().iter().zip(fb.bias()).map(|(x, y)| x + y).collect()
        } else {
            fa.bias().iter().chain(fb.bias()).copied().collect()
        };
        layers.push(f.with_bias(bias)?);
    }
    NetworkParams::with_downsampling(a.pooling.clone(), layers, a.downsample.clone())
}

/// Norm bookkeeping of [`compose`].
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CompositionAccounting {
    pub first_norm_sq: f64,
    pub second_norm_sq: f64,
    /// Change of the norm of `first`'s last layer from the `m^{-1}` glue and shift,
    /// computed per frequency as `sum_t |m~_t|^{-2} ||B_t||^2 + ||(b + K)/m~_0||^2 - ||B||^2 - ||b||^2`.
    pub glue_first: f64,
    /// Change of the norm of `second`'s first bias, `||b - K r||^2 - ||b||^2`.
    pub glue_second: f64,
    pub total: f64,
}

/// Network computing `second(first(x))` for inputs where every output entry
/// of `first` is at least `-bound`. Depth adds.
///
/// `first`'s last layer `(B, b)` becomes the hidden layer
/// `(m^{-1} B, (b + bound) / m~_0)` so that pooling and ReLU pass
/// `first(x) + bound` through unchanged; `second`'s first bias subtracts
/// `bound` times the row sums of its constant-frequency block.
pub fn compose(
    first: &NetworkParams,
    second: &NetworkParams,
    bound: f64,
) -> Result<(NetworkParams, CompositionAccounting)> {
    check_bound(bound)?;
    let l1 = first.depth();
    let glue_pool = first.layer_pooling(l1 - 1)?;
    glue_pool.require_invertible()?;
    if first.output_grid() != second.input_grid() {
        return Err(Error::dim(format!(
            "first ends on {:?} but second starts on {:?}",
            first.output_grid(),
            second.input_grid()
        )));
    }
    if !same_pooling(&glue_pool, &second.pooling) {
        return Err(Error::dim("second network's pooling differs from the pooling at the junction"));
    }
    let c_mid = first.layers[l1 - 1].c_out();
    if c_mid != second.layers[0].c_in() {
        return Err(Error::dim(format!(
            "first outputs {c_mid} channels but second expects {}",
            second.layers[0].c_in()
        )));
    }
    let last = &first.layers[l1 - 1];
    let m0 = glue_pool.m_tilde[0].re;
    let mut blocks = frequency_blocks(last);
    let mut scaled_sq = 0.0;
    for (t, b) in blocks.iter_mut().enumerate() {
        scaled_sq += glue_pool.inv_sq(t) * b.iter().map(|z| z.norm_sqr()).sum::<f64>();
        *b *= glue_pool.m_tilde[t].inv();
    }
    let new_bias: Vec<f64> = last.bias().iter().map(|b| (b + bound) / m0).collect();
    let glued = filter_from_blocks(last.grid(), &blocks)?.with_bias(new_bias.clone())?;
    let glue_first = scaled_sq + new_bias.iter().map(|v| v * v).sum::<f64>()
        - last.matrix_norm_sq()
        - last.bias_norm_sq();

    let head = &second.layers[0];
    let rowsum: Vec<f64> = (0..head.c_out())
        .map(|k| (0..head.c_in()).map(|s| head.tap(k, s).iter().sum::<f64>()).sum())
        .collect();
    let shifted: Vec<f64> = head.bias().iter().zip(&rowsum).map(|(b, r)| b - bound * r).collect();
    let glue_second = shifted.iter().map(|v| v * v).sum::<f64>() - head.bias_norm_sq();

    let mut layers: Vec<ConvFilter> = first.layers[..l1 - 1].to_vec();
    layers.push(glued);
    layers.push(head.clone().with_bias(shifted)?);
    layers.extend(second.layers[1..].iter().cloned());
    let mut strides = first.downsample.clone();
    strides.extend(second.downsample.iter().copied());
    let net = NetworkParams::with_downsampling(first.pooling.clone(), layers, strides)?;
    let first_norm_sq = first.norm_sq();
    let second_norm_sq = second.norm_sq();
    Ok((
        net,
        CompositionAccounting {
            first_norm_sq,
            second_norm_sq,
            glue_first,
            glue_second,
            total: first_norm_sq + second_norm_sq + glue_first + glue_second,
        },
    ))
}

/// Norm bookkeeping of [`bottleneck_witness`].
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct WitnessAccounting {
    pub g_norm_sq: f64,
    pub h_norm_sq: f64,
    pub middle_layers: usize,
    /// `k sum_t |m~_t|^{-2}` for each middle identity layer.
    pub middle_per_layer: f64,
    /// Bias and `m^{-1}` adjustments at the two junctions.
    pub glue: f64,
    pub total: f64,
}

/// Network `h o g` with `middle` identity layers in between:
/// `||theta||^2 = ||theta_g||^2 + ||theta_h||^2 + middle * k sum_t |m~_t|^{-2} + glue`,
/// where the glue term does not depend on `middle`. `bound` must bound `-g(x)`
/// entrywise from above on the domain.
pub fn bottleneck_witness(
    g: &NetworkParams,
    h: &NetworkParams,
    middle: usize,
    bound: f64,
) -> Result<(NetworkParams, WitnessAccounting)> {
    if middle == 0 {
        return Err(Error::arg("the witness needs at least one middle layer"));
    }
    let pool = g.layer_pooling(g.depth() - 1)?;
    let k = g.layers[g.depth() - 1].c_out();
    let id = identity_network(k, middle, &pool, bound)?;
    let id_acc = identity_accounting(k, middle, &pool, bound)?;
    let (gi, acc1) = compose(g, &id, bound)?;
    let (net, acc2) = compose(&gi, h, bound)?;
    let middle_per_layer = k as f64 * pool.m_bar;
    let g_norm_sq = acc1.first_norm_sq;
    let h_norm_sq = acc2.second_norm_sq;
    let total = g_norm_sq
        + h_norm_sq
        + id_acc.total
        + acc1.glue_first
        + acc1.glue_second
        + acc2.glue_first
        + acc2.glue_second;
    Ok((
        net,
        WitnessAccounting {
            g_norm_sq,
            h_norm_sq,
            middle_layers: middle,
            middle_per_layer,
            glue: total - g_norm_sq - h_norm_sq - middle as f64 * middle_per_layer,
            total,
        },
    ))
}
