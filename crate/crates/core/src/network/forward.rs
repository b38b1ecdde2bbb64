use crate::error::{Error, Result};
use crate::linalg::Signal;
use crate::network::engine::Engine;
use crate::network::NetworkParams;

/// All intermediate values of one forward pass.
#[derive(Debug, Clone)]
pub struct ForwardTrace {
    /// Input of each layer (after downsampling, if any).
    pub inputs: Vec<Signal>,
    /// Pre-activations `ᾱ_l = W_l α_{l-1} + 1 b_l^T`.
    pub pre_activations: Vec<Signal>,
    /// `M ᾱ_l` for hidden layers; equal to `ᾱ_L` on the last layer.
    pub pooled: Vec<Signal>,
    /// `α_l = ReLU(M ᾱ_l)` for hidden layers, `α_L = ᾱ_L`.
    pub activations: Vec<Signal>,
    /// ReLU masks `D_l` of the hidden layers.
    pub relu_masks: Vec<Vec<bool>>,
}

impl ForwardTrace {
    pub fn output(&self) -> &Signal {
        self.activations.last().expect("at least one layer")
    }

    /// Smallest `|M ᾱ_l|` over hidden units (infinite for a single layer).
    pub fn min_abs_pooled(&self) -> f64 {
        let hidden = self.pooled.len().saturating_sub(1);
        self.pooled[..hidden]
            .iter()
            .flat_map(|s| s.data().iter())
            .fold(f64::INFINITY, |m, v| m.min(v.abs()))
    }
}

pub(crate) fn check_input(params: &NetworkParams, x: &Signal) -> Result<()> {
    let c0 = params.layers[0].c_in();
    if x.grid() != params.input_grid() || x.channels() != c0 {
        return Err(Error::dim(format!(
            "input {:?}x{} does not match network input {:?}x{}",
            x.grid(),
            x.channels(),
            params.input_grid(),
            c0
        )));
    }
    Ok(())
}

pub fn forward(params: &NetworkParams, x: &Signal) -> Result<ForwardTrace> {
    check_input(params, x)?;
    let engine = Engine::new(params)?;
    let raw = engine.run(x, true)?;
    let depth = params.depth();
    let mut trace = ForwardTrace {
        inputs: Vec::with_capacity(depth),
        pre_activations: Vec::with_capacity(depth),
        pooled: Vec::with_capacity(depth),
        activations: Vec::with_capacity(depth),
        relu_masks: Vec::with_capacity(depth.saturating_sub(1)),
    };
    for (l, layer) in engine.layers.iter().enumerate() {
        trace
            .inputs
            .push(Signal::new(layer.grid, layer.c_in, raw.inputs[l].clone())?);
        trace
            .pre_activations
            .push(Signal::new(layer.grid, layer.c_out, raw.pre[l].clone())?);
        let pooled = Signal::new(layer.grid, layer.c_out, raw.pooled[l].clone())?;
        if l + 1 < depth {
            trace.relu_masks.push(pooled.data().iter().map(|&v| v > 0.0).collect());
            let act: Vec<f64> = pooled.data().iter().map(|v| v.max(0.0)).collect();
            trace.activations.push(Signal::new(layer.grid, layer.c_out, act)?);
        } else {
            trace.activations.push(pooled.clone());
        }
        trace.pooled.push(pooled);
    }
    Ok(trace)
}

/// Network output `f_theta(x)`.
pub fn evaluate(params: &NetworkParams, x: &Signal) -> Result<Signal> {
    check_input(params, x)?;
    let engine = Engine::new(params)?;
    let raw = engine.run(x, false)?;
    Signal::new(params.output_grid(), params.layers[params.depth() - 1].c_out(), raw.output)
}

/// Evaluates many inputs with one compiled network.
pub fn evaluate_batch(params: &NetworkParams, xs: &[Signal]) -> Result<Vec<Signal>> {
    let engine = Engine::new(params)?;
    let (grid, c) = (params.output_grid(), params.layers[params.depth() - 1].c_out());
    xs.iter()
        .map(|x| {
            check_input(params, x)?;
            Signal::new(grid, c, engine.run(x, false)?.output)
        })
        .collect()
}
