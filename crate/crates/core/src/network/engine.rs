//! Frequency-domain evaluation shared by the forward pass, backpropagation and training.

use num_complex::Complex64;

use crate::constructions::{downsample, downsample_adjoint};
use crate::error::Result;
use crate::fourier::{DftPlan, Grid};
use crate::linalg::Signal;
use crate::network::NetworkParams;

const ZERO: Complex64 = Complex64 { re: 0.0, im: 0.0 };

pub(crate) struct LayerEngine {
    pub grid: Grid,
    pub prev_grid: Grid,
    pub stride: usize,
    pub c_in: usize,
    pub c_out: usize,
    pub plan: DftPlan,
    /// `blocks[(t * c_out + k) * c_in + s] = lambda_t(w_{:,k,s})`.
    pub blocks: Vec<Complex64>,
    pub bias: Vec<f64>,
    /// Pooling eigenvalues on this layer's grid; `None` for the linear last layer.
    pub m_tilde: Option<Vec<Complex64>>,
}

pub(crate) struct Engine {
    pub layers: Vec<LayerEngine>,
}

/// Per-sample intermediate values kept for backpropagation.
pub(crate) struct SampleTrace {
    /// Layer inputs (after downsampling), pixel-major.
    pub inputs: Vec<Vec<f64>>,
    /// Spectra of the layer inputs, frequency-major.
    pub input_spectra: Vec<Vec<Complex64>>,
    /// `ᾱ_l` (only when requested).
    pub pre: Vec<Vec<f64>>,
    /// Pooled pre-activations `M ᾱ_l` (equal to `ᾱ_L` on the last layer).
    pub pooled: Vec<Vec<f64>>,
    pub output: Vec<f64>,
}

impl Engine {
    pub fn new(params: &NetworkParams) -> Result<Engine> {
        let depth = params.depth();
        let mut prev_grid = params.input_grid();
        let mut layers = Vec::with_capacity(depth);
        for (l, f) in params.layers.iter().enumerate() {
            let grid = f.grid();
            let plan = DftPlan::new(grid);
            let (c_out, c_in) = (f.c_out(), f.c_in());
            let p = grid.pixels();
            let mut blocks = vec![ZERO; p * c_out * c_in];
            for k in 0..c_out {
                for s in 0..c_in {
                    let lam = plan.eigenvalues(&f.tap(k, s));
                    for (t, z) in lam.into_iter().enumerate() {
                        blocks[(t * c_out + k) * c_in + s] = z;
                    }
                }
            }
            let m_tilde = if l + 1 < depth {
                Some(params.layer_pooling(l)?.m_tilde)
            } else {
                None
            };
            layers.push(LayerEngine {
                grid,
                prev_grid,
                stride: params.downsample[l],
                c_in,
                c_out,
                plan,
                blocks,
                bias: f.bias().to_vec(),
                m_tilde,
            });
            prev_grid = grid;
        }
        Ok(Engine { layers })
    }

    pub fn run(&self, x: &Signal, keep_pre: bool) -> Result<SampleTrace> {
        let depth = self.layers.len();
        let mut trace = SampleTrace {
            inputs: Vec::with_capacity(depth),
            input_spectra: Vec::with_capacity(depth),
            pre: Vec::new(),
            pooled: Vec::with_capacity(depth),
            output: Vec::new(),
        };
        let mut act = x.data().to_vec();
        for layer in &self.layers {
            if layer.stride > 1 {
                let sig = Signal::new(layer.prev_grid, layer.c_in, act)?;
                act = downsample(&sig, layer.stride)?.into_data();
            }
            let p = layer.grid.pixels();
            let (co, ci) = (layer.c_out, layer.c_in);
            let xs = layer.plan.forward_channels(&act, ci);
            let mut y = vec![ZERO; p * co];
            for t in 0..p {
                let xt = &xs[t * ci..(t + 1) * ci];
                for k in 0..co {
                    let row = &layer.blocks[(t * co + k) * ci..(t * co + k + 1) * ci];
                    let mut acc = ZERO;
                    for s in 0..ci {
                        acc += row[s] * xt[s];
                    }
                    y[t * co + k] = acc;
                }
            }
            for k in 0..co {
                y[k] += layer.bias[k] * p as f64;
            }
            if keep_pre {
                trace.pre.push(layer.plan.inverse_channels_real(&y, co));
            }
            let pooled = match &layer.m_tilde {
                Some(mt) => {
                    for t in 0..p {
                        for k in 0..co {
                            y[t * co + k] *= mt[t];
                        }
                    }
                    layer.plan.inverse_channels_real(&y, co)
                }
                None => match keep_pre {
                    true => trace.pre.last().expect("just pushed").clone(),
                    false => layer.plan.inverse_channels_real(&y, co),
                },
            };
            trace.inputs.push(act);
            trace.input_spectra.push(xs);
            act = if layer.m_tilde.is_some() {
                pooled.iter().map(|v| v.max(0.0)).collect()
            } else {
                pooled.clone()
            };
            trace.pooled.push(pooled);
        }
        trace.output = act;
        Ok(trace)
    }

    /// Accumulates parameter gradients for one sample given `g = dL/d(output)`.
    /// `grad_w[l]` holds frequency-domain sums `conj(G_k) X_s`; `grad_b[l]` is final.
    pub fn backward(
        &self,
        trace: &SampleTrace,
        mut g: Vec<f64>,
        grad_w: &mut [Vec<Complex64>],
        grad_b: &mut [Vec<f64>],
    ) -> Result<()> {
        for l in (0..self.layers.len()).rev() {
            let layer = &self.layers[l];
            let p = layer.grid.pixels();
            let (co, ci) = (layer.c_out, layer.c_in);
            if layer.m_tilde.is_some() {
                for (gv, pv) in g.iter_mut().zip(&trace.pooled[l]) {
                    if *pv <= 0.0 {
                        *gv = 0.0;
                    }
                }
            }
            let mut gs = layer.plan.forward_channels(&g, co);
            if let Some(mt) = &layer.m_tilde {
                for t in 0..p {
                    let c = mt[t].conj();
                    for k in 0..co {
                        gs[t * co + k] *= c;
                    }
                }
            }
            for k in 0..co {
                grad_b[l][k] += gs[k].re;
            }
            let xs = &trace.input_spectra[l];
            let hw = &mut grad_w[l];
            for t in 0..p {
                let xt = &xs[t * ci..(t + 1) * ci];
                for k in 0..co {
                    let gc = gs[t * co + k].conj();
                    let row = &mut hw[(t * co + k) * ci..(t * co + k + 1) * ci];
                    for s in 0..ci {
                        row[s] += gc * xt[s];
                    }
                }
            }
            if l == 0 {
                break;
            }
            let mut gin = vec![ZERO; p * ci];
            for t in 0..p {
                for k in 0..co {
                    let gv = gs[t * co + k];
                    let row = &layer.blocks[(t * co + k) * ci..(t * co + k + 1) * ci];
                    for s in 0..ci {
                        gin[t * ci + s] += row[s].conj() * gv;
                    }
                }
            }
            g = layer.plan.inverse_channels_real(&gin, ci);
            if layer.stride > 1 {
                let sig = Signal::new(layer.grid, ci, g)?;
                g = downsample_adjoint(&sig, layer.prev_grid, layer.stride)?.into_data();
            }
        }
        Ok(())
    }

    /// Converts accumulated frequency sums into filter gradients `w[j][k][s]`.
    pub fn weight_gradients(&self, grad_w: &[Vec<Complex64>]) -> Vec<Vec<f64>> {
        self.layers
            .iter()
            .zip(grad_w)
            .map(|(layer, h)| {
                let p = layer.grid.pixels();
                let (co, ci) = (layer.c_out, layer.c_in);
                let mut out = vec![0.0; p * co * ci];
                let mut buf = vec![ZERO; p];
                for k in 0..co {
                    for s in 0..ci {
                        for t in 0..p {
                            buf[t] = h[(t * co + k) * ci + s];
                        }
                        layer.plan.inverse_in_place(&mut buf);
                        for j in 0..p {
                            out[(j * co + k) * ci + s] = buf[j].re;
                        }
                    }
                }
                out
            })
            .collect()
    }

    pub fn zero_accumulators(&self) -> (Vec<Vec<Complex64>>, Vec<Vec<f64>>) {
        let w = self
            .layers
            .iter()
            .map(|l| vec![ZERO; l.grid.pixels() * l.c_out * l.c_in])
            .collect();
        let b = self.layers.iter().map(|l| vec![0.0; l.c_out]).collect();
        (w, b)
    }
}
