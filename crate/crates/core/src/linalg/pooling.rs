use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fourier::{DftPlan, Grid};
use crate::linalg::{cyclic_conv_on, Signal};

/// Default invertibility threshold on `|m~_t|`.
pub const EPS_INV: f64 = 1e-9;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum PoolingKind {
    Identity,
    /// `(1 - beta) I + beta A`, with `A` the 3-point (3x3 in 2D) cyclic average.
    BlendAvg3 { beta: f64 },
    Custom { m: Vec<f64> },
}

impl PoolingKind {
    pub fn name(&self) -> &'static str {
        match self {
            PoolingKind::Identity => "identity",
            PoolingKind::BlendAvg3 { .. } => "blend_avg3",
            PoolingKind::Custom { .. } => "custom",
        }
    }

    pub fn beta(&self) -> Option<f64> {
        match self {
            PoolingKind::BlendAvg3 { beta } => Some(*beta),
            _ => None,
        }
    }
}

/// A pooling filter `m` with its circulant eigenvalues `m~`.
#[derive(Debug, Clone, PartialEq)]
pub struct PoolingSpec {
    pub kind: PoolingKind,
    pub grid: Grid,
    pub m: Vec<f64>,
    pub m_tilde: Vec<Complex64>,
    pub invertible: bool,
    /// `sum_t |m~_t|^{-2}`, infinite for non-invertible filters.
    pub m_bar: f64,
}

fn blend_filter(grid: Grid, beta: f64) -> Vec<f64> {
    let p = grid.pixels();
    let mut m = vec![0.0; p];
    let n = grid.side();
    let offsets: Vec<usize> = [0, 1, n - 1].iter().map(|&o| o % n).collect();
    let (count, pairs): (f64, Vec<[usize; 2]>) = if grid.dims() == 1 {
        (3.0, offsets.iter().map(|&a| [a, 0]).collect())
    } else {
        (
            9.0,
            offsets
                .iter()
                .flat_map(|&a| offsets.iter().map(move |&b| [a, b]))
                .collect(),
        )
    };
    // On tiny rings the offsets -1, 0, 1 coincide; accumulating keeps the
    // filter equal to the sum of the three shifted impulses.
    for c in pairs {
        m[grid.index(c)] += beta / count;
    }
    m[0] += 1.0 - beta;
    m
}

impl PoolingSpec {
    /// Builds the spec and flags invertibility; never rejects a valid kind.
    pub fn new(kind: PoolingKind, grid: Grid) -> Result<Self> {
        let m = match &kind {
            PoolingKind::Identity => {
                let mut m = vec![0.0; grid.pixels()];
                m[0] = 1.0;
                m
            }
            PoolingKind::BlendAvg3 { beta } => {
                if !(0.0..=1.0).contains(beta) {
                    return Err(Error::arg(format!("blend beta {beta} outside [0, 1]")));
                }
                blend_filter(grid, *beta)
            }
            PoolingKind::Custom { m } => {
                if m.len() != grid.pixels() {
                    return Err(Error::dim(format!(
                        "pooling filter of length {} on a grid of {} pixels",
                        m.len(),
                        grid.pixels()
                    )));
                }
                if m.iter().any(|v| !v.is_finite()) {
                    return Err(Error::arg("non-finite pooling filter"));
                }
                m.clone()
            }
        };
        let m_tilde = DftPlan::new(grid).eigenvalues(&m);
        let min_abs = m_tilde.iter().map(|z| z.norm()).fold(f64::INFINITY, f64::min);
        let invertible = min_abs > EPS_INV;
        let m_bar = if invertible {
            m_tilde.iter().map(|z| z.norm_sqr().recip()).sum()
        } else {
            f64::INFINITY
        };
        Ok(PoolingSpec {
            kind,
            grid,
            m,
            m_tilde,
            invertible,
            m_bar,
        })
    }

    pub fn identity(grid: Grid) -> Self {
        PoolingSpec::new(PoolingKind::Identity, grid).expect("identity pooling")
    }

    pub fn is_identity(&self) -> bool {
        self.m_tilde.iter().all(|z| (z - 1.0).norm() < 1e-15)
    }

    pub fn min_abs(&self) -> f64 {
        self.m_tilde.iter().map(|z| z.norm()).fold(f64::INFINITY, f64::min)
    }

    pub fn max_abs(&self) -> f64 {
        self.m_tilde.iter().map(|z| z.norm()).fold(0.0, f64::max)
    }

    pub fn require_invertible(&self) -> Result<()> {
        if self.invertible {
            Ok(())
        } else {
            Err(Error::NonInvertiblePooling {
                min_abs: self.min_abs(),
                threshold: EPS_INV,
            })
        }
    }

    /// `|m~_t|`.
    pub fn abs(&self, t: usize) -> f64 {
        self.m_tilde[t].norm()
    }

    /// `|m~_t|^{-2}`, infinite at non-invertible frequencies.
    pub fn inv_sq(&self, t: usize) -> f64 {
        let a = self.abs(t);
        if a > EPS_INV {
            a.powi(-2)
        } else {
            f64::INFINITY
        }
    }

    /// Filter `m^{-1}` whose eigenvalues are `1 / m~_t`.
    pub fn inverse_filter(&self) -> Result<Vec<f64>> {
        self.require_invertible()?;
        let inv: Vec<Complex64> = self.m_tilde.iter().map(|z| z.inv()).collect();
        Ok(filter_from_eigenvalues(self.grid, &inv))
    }

    /// Ratio `max |m~| / min |m~|`.
    pub fn condition_number(&self) -> f64 {
        self.max_abs() / self.min_abs()
    }

    /// Applies `M` to every channel.
    pub fn apply(&self, x: &Signal) -> Result<Signal> {
        if x.grid() != self.grid {
            return Err(Error::dim("pooling grid differs from the signal grid"));
        }
        let mut out = Signal::zeros(self.grid, x.channels());
        for k in 0..x.channels() {
            let y = cyclic_conv_on(self.grid, &self.m, &x.channel(k))?;
            for (i, v) in y.into_iter().enumerate() {
                out.set(i, k, v);
            }
        }
        Ok(out)
    }

    /// Pooling for a coarser grid: keeps the eigenvalues at signed frequencies
    /// `|u| < n'/2` per axis and symmetrizes the Nyquist slot of even sides.
    pub fn truncated(&self, coarse: Grid) -> Result<Self> {
        if coarse.dims() != self.grid.dims() || coarse.side() > self.grid.side() {
            return Err(Error::dim(format!(
                "cannot truncate pooling on {:?} to {:?}",
                self.grid, coarse
            )));
        }
        if coarse == self.grid {
            return Ok(self.clone());
        }
        let fine = self.grid;
        let n = fine.side() as i64;
        let lift = |u: i64| -> usize { u.rem_euclid(n) as usize };
        let mt: Vec<Complex64> = (0..coarse.pixels())
            .map(|t| {
                let u = coarse.signed_frequency(t);
                let idx = if fine.dims() == 1 {
                    fine.index([lift(u[0]), 0])
                } else {
                    fine.index([lift(u[0]), lift(u[1])])
                };
                let conj_idx = fine.conjugate_frequency(idx);
                // Real filters need a conjugate-symmetric spectrum on the coarse grid.
                let z = self.m_tilde[idx];
                if coarse.conjugate_frequency(t) == t {
                    Complex64::new(0.5 * (z + self.m_tilde[conj_idx].conj()).re, 0.0)
                } else {
                    z
                }
            })
            .collect();
        let m = filter_from_eigenvalues(coarse, &mt);
        PoolingSpec::new(PoolingKind::Custom { m }, coarse)
    }
}

/// Real filter `v` with circulant eigenvalues `lam` (imaginary residue dropped).
pub fn filter_from_eigenvalues(grid: Grid, lam: &[Complex64]) -> Vec<f64> {
    let plan = DftPlan::new(grid);
    let scale = 1.0 / grid.pixels() as f64;
    plan.forward(lam).iter().map(|z| z.re * scale).collect()
}

/// Builds a pooling spec and rejects it unless every `|m~_t| > EPS_INV`.
pub fn pooling_operator(kind: PoolingKind, grid: Grid) -> Result<PoolingSpec> {
    let spec = PoolingSpec::new(kind, grid)?;
    spec.require_invertible()?;
    Ok(spec)
}
