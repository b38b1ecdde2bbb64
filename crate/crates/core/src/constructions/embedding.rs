//! Low-frequency embedding of a translationally unique domain.

use std::f64::consts::PI;

use crate::bounds::FrequencySupport;
use crate::error::{Error, Result};
use crate::fourier::{DftPlan, Grid};
use crate::linalg::{ConvFilter, PoolingSpec, Signal};
use crate::network::{evaluate, NetworkParams};

const MATCH_TOL: f64 = 1e-12;

/// The map `G(T_p x)_i = (vec(x), cos(2 pi (p - i) / n))` on the translates of
/// a finite domain, with a 3-layer no-pooling CNN computing its inverse.
#[derive(Debug, Clone, PartialEq)]
pub struct UniqueEmbedding {
    pub grid: Grid,
    pub c_in: usize,
    pub samples: Vec<Signal>,
    /// Coordinate-wise upper bound of the domain (at least 1).
    pub z: f64,
    /// `max_{i != p} cos(2 pi (p - i) / n)`.
    pub epsilon: f64,
    pub inverse: NetworkParams,
}

/// First pair `(a, b, p)` with `T_p x_a = x_b` (`p != 0` when `a == b`).
pub fn find_collision(samples: &[Signal], tol: f64) -> Option<(usize, usize, usize)> {
    for (a, xa) in samples.iter().enumerate() {
        let n = xa.grid().pixels();
        for p in 0..n {
            let shifted = xa.translate(p);
            for (b, xb) in samples.iter().enumerate().skip(a) {
                if a == b && p == 0 {
                    continue;
                }
                if shifted.grid() == xb.grid()
                    && shifted.channels() == xb.channels()
                    && shifted.max_abs_diff(xb) <= tol
                {
                    return Some((a, b, p));
                }
            }
        }
    }
    None
}

pub fn unique_embedding(samples: Vec<Signal>, grid: Grid, c_in: usize, z: f64) -> Result<UniqueEmbedding> {
    if grid.dims() != 1 {
        return Err(Error::arg("the embedding is defined on 1D rings"));
    }
    let n = grid.side();
    if n < 2 || c_in == 0 {
        return Err(Error::arg("the embedding needs n >= 2 and c_in >= 1"));
    }
    if !(z >= 1.0) || !z.is_finite() {
        return Err(Error::arg(format!("domain bound Z must be >= 1, got {z}")));
    }
    if samples.is_empty() {
        return Err(Error::arg("no domain samples"));
    }
    for (i, x) in samples.iter().enumerate() {
        if x.grid() != grid || x.channels() != c_in {
            return Err(Error::dim(format!("sample {i} has the wrong shape")));
        }
        let lo = x.min_value();
        if lo < 0.0 {
            return Err(Error::NegativeDomain {
                sample: i,
                value: lo,
                recommended_shift: -lo,
            });
        }
        if x.max_abs() > z {
            return Err(Error::arg(format!("sample {i} exceeds the bound Z = {z}")));
        }
    }
    if let Some((first, second, shift)) = find_collision(&samples, MATCH_TOL) {
        return Err(Error::NotTranslationallyUnique { first, second, shift });
    }
    let epsilon = (2.0 * PI / n as f64).cos();
    let inverse = inverse_network(grid, c_in, z, epsilon)?;
    Ok(UniqueEmbedding {
        grid,
        c_in,
        samples,
        z,
        epsilon,
        inverse,
    })
}

fn inverse_network(grid: Grid, c_in: usize, z: f64, epsilon: f64) -> Result<NetworkParams> {
    let n = grid.side();
    let q = n * c_in;
    // Keeps the flat channels and isolates the pixel where the phase peaks.
    let mut bias1 = vec![0.0; q + 1];
    bias1[q] = -epsilon;
    let l1 = ConvFilter::impulse(grid, q + 1).with_bias(bias1)?;
    // Zeroes the flat channels away from that pixel.
    let l2 = ConvFilter::from_fn(grid, q, q + 1, |j, k, s| {
        if j != 0 {
            0.0
        } else if s == k {
            1.0
        } else if s == q {
            z / (1.0 - epsilon)
        } else {
            0.0
        }
    })
    .with_bias(vec![-z; q])?;
    // Scatters flat channel (i, s) back to offset i from the peak pixel.
    let l3 = ConvFilter::from_fn(grid, c_in, q, |j, k, s| {
        let (i_q, s_q) = (s / c_in, s % c_in);
        if s_q == k && i_q == grid.neg(j) {
            1.0
        } else {
            0.0
        }
    });
    NetworkParams::new(PoolingSpec::identity(grid), vec![l1, l2, l3])
}

impl UniqueEmbedding {
    pub fn channels(&self) -> usize {
        self.grid.side() * self.c_in + 1
    }

    /// `G(T_p x_a)` for sample `a`.
    pub fn encode_shift(&self, a: usize, p: usize) -> Result<Signal> {
        let x = self
            .samples
            .get(a)
            .ok_or_else(|| Error::arg(format!("no sample {a}")))?;
        let n = self.grid.side();
        let q = n * self.c_in;
        let flat = x.data().to_vec();
        Ok(Signal::from_fn(self.grid, q + 1, |i, k| {
            if k < q {
                flat[k]
            } else {
                let d = (p % n) as f64 - i as f64;
                (2.0 * PI * d / n as f64).cos()
            }
        }))
    }

    /// `G(y)` for a translate `y` of some domain sample.
    pub fn encode(&self, y: &Signal) -> Result<Signal> {
        for (a, x) in self.samples.iter().enumerate() {
            for p in 0..self.grid.pixels() {
                if x.translate(p).max_abs_diff(y) <= MATCH_TOL {
                    return self.encode_shift(a, p);
                }
            }
        }
        Err(Error::arg("signal is not a translate of a domain sample"))
    }

    /// Runs the inverse CNN.
    pub fn decode(&self, g: &Signal) -> Result<Signal> {
        evaluate(&self.inverse, g)
    }

    /// Largest `|decode(encode(T_p x)) - T_p x|` over all samples and shifts.
    pub fn max_recovery_error(&self) -> Result<f64> {
        let mut worst = 0.0f64;
        for (a, x) in self.samples.iter().enumerate() {
            for p in 0..self.grid.pixels() {
                let back = self.decode(&self.encode_shift(a, p)?)?;
                worst = worst.max(back.max_abs_diff(&x.translate(p)));
            }
        }
        Ok(worst)
    }

    /// Canonical per-channel support: the constant frequency for the flat
    /// channels and frequency 1 (paired with its conjugate) for the phase channel.
    pub fn support(&self) -> Result<FrequencySupport> {
        let q = self.grid.side() * self.c_in;
        let mut sets = vec![vec![0]; q];
        sets.push(vec![1]);
        FrequencySupport::new(sets, self.grid.pixels())
    }

    /// Largest DFT magnitude of `G(T_p x_a)` outside the claimed support,
    /// with conjugate frequencies counted as supported.
    pub fn off_support_magnitude(&self, a: usize, p: usize) -> Result<f64> {
        let g = self.encode_shift(a, p)?;
        let support = self.support()?;
        let plan = DftPlan::new(self.grid);
        let c = g.channels();
        let spec = plan.forward_channels(g.data(), c);
        let mut worst = 0.0f64;
        for t in 0..self.grid.pixels() {
            let canon = self.grid.canonical_frequency(t);
            for k in 0..c {
                if !support.sets[k].contains(&canon) {
                    worst = worst.max(spec[t * c + k].norm());
                }
            }
        }
        Ok(worst)
    }
}
