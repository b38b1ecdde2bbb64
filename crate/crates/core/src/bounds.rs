//! Pooling-weighted ranks, representation-cost bounds and their certificates.

use nalgebra::DMatrix;
use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{frequency_blocks, log_pseudo_det, sorted_svd, FreqSvd, PoolingSpec, Signal};
use crate::network::{
    balancedness_residuals, constant_input_jacobian_svd, forward, input_jacobian, ntk_trace, NetworkParams,
};

/// Per-channel sets of supported frequencies (0-based flat indices).
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FrequencySupport {
    pub sets: Vec<Vec<usize>>,
}

impl FrequencySupport {
    pub fn new(sets: Vec<Vec<usize>>, frequencies: usize) -> Result<Self> {
        for (c, s) in sets.iter().enumerate() {
            if s.is_empty() {
                return Err(Error::arg(format!("channel {} has an empty support", c + 1)));
            }
            if let Some(t) = s.iter().find(|&&t| t >= frequencies) {
                return Err(Error::arg(format!("frequency index {t} out of range")));
            }
        }
        Ok(FrequencySupport { sets })
    }

    pub fn channels(&self) -> usize {
        self.sets.len()
    }
}

/// `sum_{c,t} |m~_t|^{-2} 1[s_{t,c} > tau s_max]`; infinite when a retained
/// frequency has a vanishing pooling eigenvalue.
pub fn rank_m(svd: &FreqSvd, pooling: &PoolingSpec, tau: f64) -> Result<f64> {
    if svd.grid != pooling.grid {
        return Err(Error::dim("spectrum and pooling live on different grids"));
    }
    Ok(svd.nonzero_entries(tau).iter().map(|e| pooling.inv_sq(e.freq)).sum())
}

/// `sum_c sum_{t in I_c} |m~_t|^{-2}` for the given decomposition support.
pub fn cbn_upper_bound(support: &FrequencySupport, pooling: &PoolingSpec) -> Result<f64> {
    let p = pooling.grid.pixels();
    let mut total = 0.0;
    for set in &support.sets {
        for &t in set {
            if t >= p {
                return Err(Error::arg(format!("frequency index {t} out of range")));
            }
            total += pooling.inv_sq(t);
        }
    }
    Ok(total)
}

/// `2 sum_{s_{t,c} > 0} |m~_t|^{-2} log(s_{t,c} |m~_t|)`.
pub fn r1_lower_bound(jac_svd: &FreqSvd, pooling: &PoolingSpec, tau: f64) -> Result<f64> {
    if jac_svd.grid != pooling.grid {
        return Err(Error::dim("spectrum and pooling live on different grids"));
    }
    Ok(2.0
        * jac_svd
            .nonzero_entries(tau)
            .iter()
            .map(|e| pooling.inv_sq(e.freq) * (e.value * pooling.abs(e.freq)).ln())
            .sum::<f64>())
}

fn dense_rank(a: &DMatrix<f64>, tau: f64) -> usize {
    if a.is_empty() {
        return 0;
    }
    let s = a.clone().singular_values();
    let smax = s.max();
    if smax <= 0.0 {
        return 0;
    }
    s.iter().filter(|&&v| v > tau * smax).count()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct JacobianLowerBounds {
    /// `max_x Rank(Jf(x)) / max(m~_max^2, 1)` over all probes.
    pub bound_general: f64,
    pub max_rank: usize,
    /// `max(m~_max^2, 1)`.
    pub guard: f64,
    /// `max rank_m(Jf(x))` over channel-constant probes; absent without such probes.
    pub bound_constant: Option<f64>,
    /// Index of the probe attaining `bound_constant`.
    pub best_constant_probe: Option<usize>,
    pub constant_probes: usize,
    pub probes_near_kink: usize,
}

/// Jacobian-rank lower bounds on the depth-normalized representation cost.
pub fn jacobian_lower_bounds(params: &NetworkParams, probes: &[Signal], tau: f64) -> Result<JacobianLowerBounds> {
    if probes.is_empty() {
        return Err(Error::arg("at least one probe is required"));
    }
    let guard = params.pooling.max_abs().powi(2).max(1.0);
    let mut max_rank = 0;
    let mut near_kink = 0;
    let mut bound_constant: Option<f64> = None;
    let mut best = None;
    let mut constant_probes = 0;
    for (i, x) in probes.iter().enumerate() {
        let jac = input_jacobian(params, x)?;
        near_kink += usize::from(jac.near_kink);
        max_rank = max_rank.max(dense_rank(&jac.matrix, tau));
        let is_constant = x.is_channel_constant(1e-12 * (1.0 + x.max_abs()));
        if is_constant && !params.is_downsampled() {
            constant_probes += 1;
            let svd = constant_input_jacobian_svd(params, x)?;
            let r = rank_m(&svd, &params.pooling, tau)?;
            if bound_constant.is_none_or(|b| r > b) {
                bound_constant = Some(r);
                best = Some(i);
            }
        }
    }
    Ok(JacobianLowerBounds {
        bound_general: max_rank as f64 / guard,
        max_rank,
        guard,
        bound_constant,
        best_constant_probe: best,
        constant_probes,
        probes_near_kink: near_kink,
    })
}

/// Default probes: per-channel means of the inputs plus a grid of constants.
pub fn default_probes(inputs: &[Signal], levels: &[f64]) -> Vec<Signal> {
    let Some(first) = inputs.first() else {
        return Vec::new();
    };
    let (g, c) = (first.grid(), first.channels());
    let mut probes: Vec<Signal> = inputs.iter().map(|x| Signal::constant(g, &x.channel_means())).collect();
    for &v in levels {
        probes.push(Signal::constant(g, &vec![v; c]));
    }
    probes
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LayerFractionCheck {
    pub p: f64,
    /// `rhs / (p L)`.
    pub threshold: f64,
    pub layers_within: usize,
    /// `ceil((1 - p) L)`.
    pub required: usize,
    pub holds: bool,
}

/// Weight-bottleneck certificate at a channel-constant input.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WeightBottleneckReport {
    pub tau_rank: f64,
    /// `Rank Jf(x0)`.
    pub kappa: usize,
    /// Retained count `n_t` per frequency.
    pub retained: Vec<usize>,
    pub rank_m: f64,
    pub norm_sq: f64,
    /// `||theta||^2 - L rank_m(Jf(x0))`.
    pub c1: f64,
    /// `2 sum |m~_t|^{-2} log(s_{t,c} |m~_t|)`.
    pub log_term: f64,
    pub rhs: f64,
    pub residuals: Vec<f64>,
    pub total: f64,
    pub slack: f64,
    pub holds: bool,
    pub layer_fractions: Vec<LayerFractionCheck>,
    pub degenerate: bool,
}

/// Orthogonal projector onto the column space of `a` (singular values above
/// `tol` times the largest).
fn range_projector(a: &DMatrix<Complex64>, tol: f64) -> DMatrix<Complex64> {
    let rows = a.nrows();
    if a.ncols() == 0 {
        return DMatrix::zeros(rows, rows);
    }
    let (s, u, _) = sorted_svd(a);
    let smax = s.first().copied().unwrap_or(0.0);
    let mut p = DMatrix::zeros(rows, rows);
    if smax <= 0.0 {
        return p;
    }
    for (i, &v) in s.iter().enumerate() {
        if v > tol * smax {
            let col = u.column(i);
            p += &col * col.adjoint();
        }
    }
    p
}

fn diag_mask(mask: &[bool]) -> DMatrix<Complex64> {
    DMatrix::from_fn(mask.len(), mask.len(), |r, c| {
        if r == c && mask[r] {
            Complex64::new(1.0, 0.0)
        } else {
            Complex64::new(0.0, 0.0)
        }
    })
}

/// Low-rank factorization residuals `sum_l ||W_l - U_l S_l V_l^T||^2 + ||b_l||^2`
/// checked against `c1 - 2 sum |m~_t|^{-2} log(s |m~_t|)`.
///
/// Per frequency `t`, layer inputs are projected onto the range of the forward
/// Jacobian into that layer (built from the already projected earlier layers),
/// outputs onto the row space of the projected backward Jacobian; the top
/// `n_t` singular directions of the result give `U_l, V_l` and `S_l = |m~_t|^{-1}`.
pub fn weight_bottleneck_residual(params: &NetworkParams, x0: &Signal, tau: f64) -> Result<WeightBottleneckReport> {
    let svd = constant_input_jacobian_svd(params, x0)?;
    let pooling = &params.pooling;
    pooling.require_invertible()?;
    let trace = forward(params, x0)?;
    let depth = params.depth();
    let p = params.input_grid().pixels();
    let smax = svd.s_max();
    let retained: Vec<usize> = svd
        .components
        .iter()
        .map(|c| if smax > 0.0 { c.values.iter().filter(|&&v| v > tau * smax).count() } else { 0 })
        .collect();
    let kappa: usize = retained.iter().sum();
    let blocks: Vec<Vec<DMatrix<Complex64>>> = params.layers.iter().map(frequency_blocks).collect();
    let masks: Vec<DMatrix<Complex64>> = (0..depth - 1)
        .map(|l| diag_mask(&trace.relu_masks[l][..params.layers[l].c_out()]))
        .collect();
    let mut residuals: Vec<f64> = params.layers.iter().map(|f| f.bias_norm_sq()).collect();
    for t in 0..p {
        let mt = pooling.m_tilde[t];
        let s_inv = 1.0 / mt.norm();
        // forward: projected layers and the input projectors
        let mut b_hat = Vec::with_capacity(depth);
        let c0 = params.layers[0].c_in();
        let mut c_fwd = DMatrix::<Complex64>::identity(c0, c0);
        for l in 0..depth {
            let pin = range_projector(&c_fwd, tau);
            let bh = &blocks[l][t] * pin;
            if l + 1 < depth {
                c_fwd = &masks[l] * (&bh * &c_fwd) * mt;
            }
            b_hat.push(bh);
        }
        // backward: A_L = I, A_l = A_{l+1} B^_{l+1} D_l m~_t
        let cl = params.layers[depth - 1].c_out();
        let mut a_bwd = DMatrix::<Complex64>::identity(cl, cl);
        let mut p_out = vec![DMatrix::<Complex64>::zeros(0, 0); depth];
        for l in (0..depth).rev() {
            if l + 1 < depth {
                a_bwd = &a_bwd * &b_hat[l + 1] * &masks[l] * mt;
            }
            p_out[l] = range_projector(&a_bwd.adjoint(), tau);
        }
        for l in 0..depth {
            let w_bar = &p_out[l] * &b_hat[l];
            let (_, u, v) = sorted_svd(&w_bar);
            let k = retained[t].min(u.ncols());
            let approx = if k > 0 {
                u.columns(0, k) * v.columns(0, k).adjoint() * Complex64::new(s_inv, 0.0)
            } else {
                DMatrix::zeros(blocks[l][t].nrows(), blocks[l][t].ncols())
            };
            residuals[l] += (&blocks[l][t] - approx).norm_squared();
        }
    }
    let rank_m_value = rank_m(&svd, pooling, tau)?;
    let norm_sq = params.norm_sq();
    let c1 = norm_sq - depth as f64 * rank_m_value;
    let log_term = r1_lower_bound(&svd, pooling, tau)?;
    let rhs = c1 - log_term;
    let total: f64 = residuals.iter().sum();
    let slack = 1e-6 * norm_sq;
    let layer_fractions = [0.1, 0.25, 0.5]
        .iter()
        .map(|&pf| {
            let threshold = rhs / (pf * depth as f64);
            let within = residuals
                .iter()
                .filter(|&&r| r <= threshold + slack / (pf * depth as f64))
                .count();
            let required = ((1.0 - pf) * depth as f64 - 1e-9).ceil() as usize;
            LayerFractionCheck {
                p: pf,
                threshold,
                layers_within: within,
                required,
                holds: within >= required,
            }
        })
        .collect();
    Ok(WeightBottleneckReport {
        tau_rank: tau,
        kappa,
        retained,
        rank_m: rank_m_value,
        norm_sq,
        c1,
        log_term,
        rhs,
        total,
        slack,
        holds: total <= rhs + slack,
        residuals,
        layer_fractions,
        degenerate: kappa == 0,
    })
}

/// Activation-norm certificate for networks without pooling.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ActivationProfileReport {
    /// `||α_{l-1}(x0)||^2` for `l = 1..L`.
    pub activation_norms: Vec<f64>,
    pub sum: f64,
    /// `ntk_trace(x0) / L`.
    pub c: f64,
    /// `Rank Jf(x0)`.
    pub k: usize,
    pub log_pdet: f64,
    pub c1: f64,
    /// `c e^{c1/k} / (k |Jf|_+^{2/k})`; absent when `k = 0`.
    pub rhs: Option<f64>,
    /// The same bound with the extra factor `e^{L(m~_max R / k - 1)}` and
    /// `e^{c1/R}`, `R = rank_m`; equal to `rhs` without pooling.
    pub rhs_pooled: Option<f64>,
    /// Fraction of layers with `||α_{l-1}||^2 <= rhs / p` for `p = 0.1, 0.5`.
    pub fractions_below: Vec<(f64, f64)>,
    pub holds: Option<bool>,
    pub balancedness: Vec<f64>,
    /// Max `|residual|` is at most `1e-3` times the mean layer norm.
    pub balanced: bool,
}

/// Activation profile along the depth at `x0`; refuses networks with pooling.
pub fn activation_profile(params: &NetworkParams, x0: &Signal, tau: f64) -> Result<ActivationProfileReport> {
    if !params.pooling.is_identity() {
        return Err(Error::Hypothesis(
            "activation bound is stated for networks without pooling; use identity pooling".into(),
        ));
    }
    let depth = params.depth();
    let trace = forward(params, x0)?;
    let activation_norms: Vec<f64> = trace.inputs.iter().map(|a| a.norm_sq()).collect();
    let sum: f64 = activation_norms.iter().sum();
    let c = ntk_trace(params, x0)? / depth as f64;
    let (k, log_pdet, r) = if !params.is_downsampled() && x0.is_channel_constant(1e-12 * (1.0 + x0.max_abs())) {
        let svd = constant_input_jacobian_svd(params, x0)?;
        (svd.rank(tau), log_pseudo_det(&svd, tau), rank_m(&svd, &params.pooling, tau)?)
    } else {
        let jac = input_jacobian(params, x0)?.matrix;
        let s = jac.singular_values();
        let smax = s.max();
        let kept: Vec<f64> = s.iter().copied().filter(|&v| smax > 0.0 && v > tau * smax).collect();
        let k = kept.len();
        (k, kept.iter().map(|v| v.ln()).sum(), k as f64)
    };
    let c1 = params.norm_sq() - depth as f64 * r;
    let (rhs, rhs_pooled) = if k == 0 {
        (None, None)
    } else {
        let kf = k as f64;
        let log_rhs = c.ln() + c1 / kf - kf.ln() - 2.0 * log_pdet / kf;
        let m_max = params.pooling.max_abs();
        let log_pooled = c.ln() + c1 / r - kf.ln() - 2.0 * log_pdet / kf + depth as f64 * (m_max * r / kf - 1.0);
        (Some(log_rhs.exp()), Some(log_pooled.exp()))
    };
    let fractions_below = [0.1, 0.5]
        .iter()
        .map(|&p| {
            let frac = rhs.map_or(0.0, |b| {
                activation_norms.iter().filter(|&&a| a <= b / p).count() as f64 / depth as f64
            });
            (p, frac)
        })
        .collect();
    let (balancedness, balanced) = if depth >= 2 {
        let res = balancedness_residuals(params)?;
        let mean_norm = params.layer_norms().iter().sum::<f64>() / depth as f64;
        let worst = res.iter().fold(0.0f64, |m, r| m.max(r.abs()));
        (res, worst <= 1e-3 * mean_norm)
    } else {
        (Vec::new(), true)
    };
    Ok(ActivationProfileReport {
        holds: rhs.map(|b| sum <= b * depth as f64),
        activation_norms,
        sum,
        c,
        k,
        log_pdet,
        c1,
        rhs,
        rhs_pooled,
        fractions_below,
        balancedness,
        balanced,
    })
}

/// One frequency-indexed singular value of a pooled layer `M W_l`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SpectrumRow {
    /// 1-based layer.
    pub layer: usize,
    /// 1-based frequency indices (the second is 1 on 1D grids).
    pub freq_index_1: usize,
    pub freq_index_2: usize,
    /// 0-based flat frequency index.
    pub freq: usize,
    /// 1-based rank within the frequency.
    pub channel: usize,
    pub singular_value: f64,
    pub m_tilde_abs: f64,
}

/// Frequency-indexed singular values of `M W_l` for every layer, ordered by
/// layer, frequency and descending value.
pub fn layer_spectrum_report(params: &NetworkParams) -> Result<Vec<SpectrumRow>> {
    let mut rows = Vec::new();
    for (l, f) in params.layers.iter().enumerate() {
        let pool = params.layer_pooling(l)?;
        let svd = pooled_layer_svd(f, &pool)?;
        for comp in &svd.components {
            let (f1, f2) = f.grid().frequency_label(comp.freq);
            for (c, &s) in comp.values.iter().enumerate() {
                rows.push(SpectrumRow {
                    layer: l + 1,
                    freq_index_1: f1,
                    freq_index_2: f2,
                    freq: comp.freq,
                    channel: c + 1,
                    singular_value: s,
                    m_tilde_abs: pool.abs(comp.freq),
                });
            }
        }
    }
    Ok(rows)
}

/// Frequency SVD of `M W` (blocks `m~_t B_t`).
pub fn pooled_layer_svd(f: &crate::linalg::ConvFilter, pooling: &PoolingSpec) -> Result<FreqSvd> {
    if f.grid() != pooling.grid {
        return Err(Error::dim("pooling and filter grids differ"));
    }
    let blocks: Vec<DMatrix<Complex64>> = frequency_blocks(f)
        .into_iter()
        .enumerate()
        .map(|(t, b)| b * pooling.m_tilde[t])
        .collect();
    FreqSvd::from_blocks(f.grid(), &blocks)
}

pub fn spectrum_csv(rows: &[SpectrumRow]) -> String {
    let mut s = String::from("layer,freq_index_1,freq_index_2,channel,singular_value,m_tilde_abs\n");
    for r in rows {
        s.push_str(&format!(
            "{},{},{},{},{:.17e},{:.17e}\n",
            r.layer, r.freq_index_1, r.freq_index_2, r.channel, r.singular_value, r.m_tilde_abs
        ));
    }
    s
}

/// Spectral-mass concentration of one layer: the minimal number of
/// frequency-channel singular values carrying `mass` of `sum s^2`, and the
/// conjugate-pair-canonical frequencies involved.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LayerConcentration {
    pub layer: usize,
    pub entries_needed: usize,
    pub frequencies: Vec<usize>,
    /// Fraction of `sum s^2` at non-constant frequencies.
    pub nonconstant_mass: f64,
    pub total_mass: f64,
}

pub fn layer_concentration(params: &NetworkParams, mass: f64) -> Result<Vec<LayerConcentration>> {
    let rows = layer_spectrum_report(params)?;
    let mut out = Vec::with_capacity(params.depth());
    for l in 0..params.depth() {
        let grid = params.layers[l].grid();
        let mut layer_rows: Vec<&SpectrumRow> = rows.iter().filter(|r| r.layer == l + 1).collect();
        layer_rows.sort_by(|a, b| b.singular_value.total_cmp(&a.singular_value).then(a.freq.cmp(&b.freq)));
        let total: f64 = layer_rows.iter().map(|r| r.singular_value.powi(2)).sum();
        let nonconst: f64 = layer_rows
            .iter()
            .filter(|r| r.freq != 0)
            .map(|r| r.singular_value.powi(2))
            .sum();
        let mut acc = 0.0;
        let mut needed = 0;
        let mut freqs = Vec::new();
        for r in &layer_rows {
            if total <= 0.0 || acc >= mass * total {
                break;
            }
            acc += r.singular_value.powi(2);
            needed += 1;
            let f = grid.canonical_frequency(r.freq);
            if !freqs.contains(&f) {
                freqs.push(f);
            }
        }
        freqs.sort_unstable();
        out.push(LayerConcentration {
            layer: l + 1,
            entries_needed: needed,
            frequencies: freqs,
            nonconstant_mass: if total > 0.0 { nonconst / total } else { 0.0 },
            total_mass: total,
        });
    }
    Ok(out)
}

/// All computed bounds for one network.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BoundsReport {
    pub tau_rank: f64,
    pub depth: usize,
    pub norm_sq: f64,
    pub norm_sq_per_layer: f64,
    pub m_bar: f64,
    /// `rank_m(Jf(x0))` at the best channel-constant probe.
    pub rank_m: Option<f64>,
    pub cbn_upper: Option<f64>,
    pub lower: JacobianLowerBounds,
    pub r1_lower: Option<f64>,
    pub weight_bottleneck: Option<WeightBottleneckReport>,
    pub activation_profile: Option<ActivationProfileReport>,
    pub notes: Vec<String>,
}

/// Evaluates every bound that applies to `params` on the given probes.
pub fn bounds_report(
    params: &NetworkParams,
    probes: &[Signal],
    support: Option<&FrequencySupport>,
    tau: f64,
) -> Result<BoundsReport> {
    let lower = jacobian_lower_bounds(params, probes, tau)?;
    let mut notes = vec![
        "general lower bound divides by max(m~_max^2, 1)".to_string(),
        "upper and lower bounds are reported separately; their equality is not claimed".to_string(),
    ];
    let x0 = lower.best_constant_probe.map(|i| &probes[i]);
    let (rank_m_value, r1, bottleneck) = match x0 {
        Some(x0) if params.pooling.invertible => {
            let svd = constant_input_jacobian_svd(params, x0)?;
            (
                Some(rank_m(&svd, &params.pooling, tau)?),
                Some(r1_lower_bound(&svd, &params.pooling, tau)?),
                Some(weight_bottleneck_residual(params, x0, tau)?),
            )
        }
        Some(_) => {
            notes.push("pooling is not invertible; constant-probe bounds skipped".into());
            (None, None, None)
        }
        None => {
            notes.push("no channel-constant probe; constant-probe bounds absent".into());
            (None, None, None)
        }
    };
    let profile = match x0 {
        Some(x0) if params.pooling.is_identity() => {
            notes.push("activation bound evaluated at the rank-maximizing constant probe".into());
            Some(activation_profile(params, x0, tau)?)
        }
        _ => None,
    };
    let cbn_upper = support.map(|s| cbn_upper_bound(s, &params.pooling)).transpose()?;
    let norm_sq = params.norm_sq();
    Ok(BoundsReport {
        tau_rank: tau,
        depth: params.depth(),
        norm_sq,
        norm_sq_per_layer: norm_sq / params.depth() as f64,
        m_bar: params.pooling.m_bar,
        rank_m: rank_m_value,
        cbn_upper,
        lower,
        r1_lower: r1,
        weight_bottleneck: bottleneck,
        activation_profile: profile,
        notes,
    })
}
