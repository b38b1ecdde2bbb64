use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::Signal;
use crate::network::engine::Engine;
use crate::network::forward::check_input;
use crate::network::NetworkParams;

/// Objective values above this abort training.
pub const DIVERGENCE_LIMIT: f64 = 1e12;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum Targets {
    Signals(Vec<Signal>),
    Labels { labels: Vec<usize>, classes: usize },
}

impl Targets {
    pub fn len(&self) -> usize {
        match self {
            Targets::Signals(s) => s.len(),
            Targets::Labels { labels, .. } => labels.len(),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LossKind {
    /// `(1/N) sum_i ||f(x_i) - y_i||^2`.
    Mse,
    /// Cross-entropy of the pixel-averaged outputs (global average head).
    SoftmaxXent,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Optimizer {
    Gd,
    GdMomentum { mu: f64 },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub lambda: f64,
    pub lr: f64,
    pub steps: usize,
    pub optimizer: Optimizer,
    pub seed: u64,
    pub init_scale: f64,
    pub loss: LossKind,
    /// Record history every this many steps (the last step is always recorded).
    #[serde(default = "default_log_every")]
    pub log_every: usize,
}

fn default_log_every() -> usize {
    10
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            lambda: 1e-3,
            lr: 1e-2,
            steps: 1000,
            optimizer: Optimizer::GdMomentum { mu: 0.9 },
            seed: 0,
            init_scale: 1.0,
            loss: LossKind::Mse,
            log_every: default_log_every(),
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.lambda >= 0.0) || !self.lambda.is_finite() {
            return Err(Error::arg(format!("lambda must be >= 0, got {}", self.lambda)));
        }
        if !(self.lr > 0.0) || !self.lr.is_finite() {
            return Err(Error::arg(format!("learning rate must be > 0, got {}", self.lr)));
        }
        if let Optimizer::GdMomentum { mu } = self.optimizer {
            if !(0.0..1.0).contains(&mu) {
                return Err(Error::arg(format!("momentum must lie in [0, 1), got {mu}")));
            }
        }
        if self.log_every == 0 {
            return Err(Error::arg("log_every must be positive"));
        }
        Ok(())
    }
}

/// Objective split into its parts.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LossValue {
    pub objective: f64,
    pub data_loss: f64,
    pub norm_sq: f64,
}

fn check_batch(params: &NetworkParams, inputs: &[Signal], targets: &Targets, loss: LossKind) -> Result<()> {
    if inputs.is_empty() {
        return Err(Error::arg("empty batch"));
    }
    if inputs.len() != targets.len() {
        return Err(Error::dim(format!("{} inputs and {} targets", inputs.len(), targets.len())));
    }
    let c_out = params.layers[params.depth() - 1].c_out();
    match (targets, loss) {
        (Targets::Signals(ys), LossKind::Mse) => {
            for y in ys {
                if y.grid() != params.output_grid() || y.channels() != c_out {
                    return Err(Error::dim("target shape differs from the network output"));
                }
            }
        }
        (Targets::Labels { labels, classes }, LossKind::SoftmaxXent) => {
            if *classes != c_out {
                return Err(Error::dim(format!("{classes} classes but {c_out} output channels")));
            }
            if let Some(l) = labels.iter().find(|&&l| l >= *classes) {
                return Err(Error::arg(format!("label {l} out of range")));
            }
        }
        _ => return Err(Error::arg("loss kind does not match the target type")),
    }
    for x in inputs {
        check_input(params, x)?;
    }
    Ok(())
}

/// Per-sample loss and its gradient with respect to the network output.
fn output_loss(out: &[f64], c: usize, targets: &Targets, i: usize, n_samples: f64) -> (f64, Vec<f64>) {
    match targets {
        Targets::Signals(ys) => {
            let y = ys[i].data();
            let mut l = 0.0;
            let g = out
                .iter()
                .zip(y)
                .map(|(a, b)| {
                    let d = a - b;
                    l += d * d;
                    2.0 * d / n_samples
                })
                .collect();
            (l / n_samples, g)
        }
        Targets::Labels { labels, .. } => {
            let pixels = out.len() / c;
            let mut logits = vec![0.0; c];
            for i_px in 0..pixels {
                for k in 0..c {
                    logits[k] += out[i_px * c + k];
                }
            }
            logits.iter_mut().for_each(|z| *z /= pixels as f64);
            let zmax = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
            let lse = zmax + logits.iter().map(|z| (z - zmax).exp()).sum::<f64>().ln();
            let y = labels[i];
            let probs: Vec<f64> = logits.iter().map(|z| (z - lse).exp()).collect();
            let mut g = vec![0.0; out.len()];
            for i_px in 0..pixels {
                for k in 0..c {
                    let d = probs[k] - if k == y { 1.0 } else { 0.0 };
                    g[i_px * c + k] = d / (pixels as f64 * n_samples);
                }
            }
            ((lse - logits[y]) / n_samples, g)
        }
    }
}

fn evaluate_objective(
    params: &NetworkParams,
    engine: &Engine,
    inputs: &[Signal],
    targets: &Targets,
    lambda: f64,
    want_grad: bool,
) -> Result<(LossValue, Option<NetworkParams>)> {
    let n = inputs.len() as f64;
    let c_out = params.layers[params.depth() - 1].c_out();
    let (mut hw, mut hb) = engine.zero_accumulators();
    let mut data_loss = 0.0;
    for (i, x) in inputs.iter().enumerate() {
        let trace = engine.run(x, false)?;
        let (l, g) = output_loss(&trace.output, c_out, targets, i, n);
        data_loss += l;
        if want_grad {
            engine.backward(&trace, g, &mut hw, &mut hb)?;
        }
    }
    let norm_sq = params.norm_sq();
    let value = LossValue {
        objective: data_loss + lambda * norm_sq,
        data_loss,
        norm_sq,
    };
    if !want_grad {
        return Ok((value, None));
    }
    let gw = engine.weight_gradients(&hw);
    let mut grad = params.zeros_like();
    for (l, f) in grad.layers.iter_mut().enumerate() {
        let src = &params.layers[l];
        let pix = src.grid().pixels() as f64;
        for ((g, d), w) in f.weights_mut().iter_mut().zip(&gw[l]).zip(src.weights()) {
            *g = d + 2.0 * lambda * pix * w;
        }
        for ((g, d), b) in f.bias_mut().iter_mut().zip(&hb[l]).zip(src.bias()) {
            *g = d + 2.0 * lambda * b;
        }
    }
    Ok((value, Some(grad)))
}

/// Objective `L(f_theta) + lambda ||theta||^2` and its gradient.
pub fn loss_and_gradients(
    params: &NetworkParams,
    inputs: &[Signal],
    targets: &Targets,
    config: &TrainConfig,
) -> Result<(LossValue, NetworkParams)> {
    check_batch(params, inputs, targets, config.loss)?;
    let engine = Engine::new(params)?;
    let (value, grad) = evaluate_objective(params, &engine, inputs, targets, config.lambda, true)?;
    if !value.objective.is_finite() {
        return Err(Error::NonFinite {
            step: 0,
            detail: format!("objective {}", value.objective),
        });
    }
    Ok((value, grad.expect("gradient requested")))
}

/// Objective value only.
pub fn objective(params: &NetworkParams, inputs: &[Signal], targets: &Targets, config: &TrainConfig) -> Result<LossValue> {
    check_batch(params, inputs, targets, config.loss)?;
    let engine = Engine::new(params)?;
    Ok(evaluate_objective(params, &engine, inputs, targets, config.lambda, false)?.0)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HistoryRecord {
    pub step: usize,
    pub objective: f64,
    pub data_loss: f64,
    pub norm_sq: f64,
    pub layer_norms: Vec<f64>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct History {
    pub records: Vec<HistoryRecord>,
}

impl History {
    pub fn last(&self) -> Option<&HistoryRecord> {
        self.records.last()
    }

    /// CSV with header `step,objective,data_loss,norm_sq,layer_1,...`.
    pub fn to_csv(&self) -> String {
        let layers = self.records.first().map_or(0, |r| r.layer_norms.len());
        let mut s = String::from("step,objective,data_loss,norm_sq");
        for l in 1..=layers {
            s.push_str(&format!(",layer_{l}"));
        }
        s.push('\n');
        for r in &self.records {
            s.push_str(&format!("{},{:e},{:e},{:e}", r.step, r.objective, r.data_loss, r.norm_sq));
            for v in &r.layer_norms {
                s.push_str(&format!(",{v:e}"));
            }
            s.push('\n');
        }
        s
    }
}

/// Full-batch gradient descent (optionally with heavy-ball momentum) on
/// `L(f_theta) + lambda ||theta||^2`, starting from `params`.
pub fn train(
    params: &NetworkParams,
    inputs: &[Signal],
    targets: &Targets,
    config: &TrainConfig,
) -> Result<(NetworkParams, History)> {
    config.validate()?;
    check_batch(params, inputs, targets, config.loss)?;
    let mut current = params.clone();
    let mut theta = current.to_flat();
    let mut velocity = vec![0.0; theta.len()];
    let mut history = History::default();
    for step in 0..=config.steps {
        let engine = Engine::new(&current)?;
        let (value, grad) = evaluate_objective(&current, &engine, inputs, targets, config.lambda, step < config.steps)?;
        if !value.objective.is_finite() {
            return Err(Error::NonFinite {
                step,
                detail: format!("objective {} (data loss {})", value.objective, value.data_loss),
            });
        }
        if value.objective > DIVERGENCE_LIMIT {
            return Err(Error::Diverged {
                step,
                loss: value.objective,
            });
        }
        if step % config.log_every == 0 || step == config.steps {
            history.records.push(HistoryRecord {
                step,
                objective: value.objective,
                data_loss: value.data_loss,
                norm_sq: value.norm_sq,
                layer_norms: current.layer_norms(),
            });
        }
        let Some(grad) = grad else { break };
        let g = grad.to_flat();
        match config.optimizer {
            Optimizer::Gd => {
                for (t, gi) in theta.iter_mut().zip(&g) {
                    *t -= config.lr * gi;
                }
            }
            Optimizer::GdMomentum { mu } => {
                for ((t, v), gi) in theta.iter_mut().zip(velocity.iter_mut()).zip(&g) {
                    *v = mu * *v - config.lr * gi;
                    *t += *v;
                }
            }
        }
        current.set_flat(&theta)?;
    }
    Ok((current, history))
}
