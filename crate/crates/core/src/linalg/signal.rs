use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fourier::Grid;

/// A multi-channel signal on a cyclic grid, stored pixel-major: `data[i * c + k]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Signal {
    grid: Grid,
    channels: usize,
    data: Vec<f64>,
}

impl Signal {
    pub fn new(grid: Grid, channels: usize, data: Vec<f64>) -> Result<Self> {
        if channels == 0 {
            return Err(Error::arg("signal needs at least one channel"));
        }
        if data.len() != grid.pixels() * channels {
            return Err(Error::dim(format!(
                "signal data has {} entries, expected {} x {}",
                data.len(),
                grid.pixels(),
                channels
            )));
        }
        if let Some(pos) = data.iter().position(|v| !v.is_finite()) {
            return Err(Error::arg(format!("non-finite signal entry at {pos}")));
        }
        Ok(Signal {
            grid,
            channels,
            data,
        })
    }

    pub fn zeros(grid: Grid, channels: usize) -> Self {
        Signal {
            grid,
            channels,
            data: vec![0.0; grid.pixels() * channels],
        }
    }

    /// Builds a signal from `f(pixel, channel)`.
    pub fn from_fn(grid: Grid, channels: usize, mut f: impl FnMut(usize, usize) -> f64) -> Self {
        let mut data = Vec::with_capacity(grid.pixels() * channels);
        for i in 0..grid.pixels() {
            for k in 0..channels {
                data.push(f(i, k));
            }
        }
        Signal {
            grid,
            channels,
            data,
        }
    }

    /// Signal that takes the value `values[k]` everywhere on channel `k`.
    pub fn constant(grid: Grid, values: &[f64]) -> Self {
        Signal::from_fn(grid, values.len(), |_, k| values[k])
    }

    pub fn grid(&self) -> Grid {
        self.grid
    }

    pub fn channels(&self) -> usize {
        self.channels
    }

    pub fn pixels(&self) -> usize {
        self.grid.pixels()
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn into_data(self) -> Vec<f64> {
        self.data
    }

    pub fn get(&self, i: usize, k: usize) -> f64 {
        self.data[i * self.channels + k]
    }

    pub fn set(&mut self, i: usize, k: usize, v: f64) {
        self.data[i * self.channels + k] = v;
    }

    /// Channel `k` as a contiguous vector over pixels.
    pub fn channel(&self, k: usize) -> Vec<f64> {
        (0..self.pixels()).map(|i| self.get(i, k)).collect()
    }

    /// Cyclic translation `(T_p x)_i = x_{i - p}`.
    pub fn translate(&self, p: usize) -> Signal {
        let g = self.grid;
        Signal::from_fn(g, self.channels, |i, k| self.get(g.sub(i, p), k))
    }

    pub fn norm_sq(&self) -> f64 {
        self.data.iter().map(|v| v * v).sum()
    }

    pub fn max_abs_diff(&self, other: &Signal) -> f64 {
        assert_eq!(self.data.len(), other.data.len(), "signal shape mismatch");
        self.data
            .iter()
            .zip(&other.data)
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max)
    }

    pub fn max_abs(&self) -> f64 {
        self.data.iter().fold(0.0, |m, v| m.max(v.abs()))
    }

    pub fn min_value(&self) -> f64 {
        self.data.iter().copied().fold(f64::INFINITY, f64::min)
    }

    /// Per-channel mean over pixels.
    pub fn channel_means(&self) -> Vec<f64> {
        let mut means = vec![0.0; self.channels];
        for i in 0..self.pixels() {
            for (k, m) in means.iter_mut().enumerate() {
                *m += self.get(i, k);
            }
        }
        let p = self.pixels() as f64;
        means.iter_mut().for_each(|m| *m /= p);
        means
    }

    /// True when every channel is constant up to `tol` (membership in the
    /// channel-constant input set).
    pub fn is_channel_constant(&self, tol: f64) -> bool {
        (0..self.pixels()).all(|i| {
            (0..self.channels).all(|k| (self.get(i, k) - self.get(0, k)).abs() <= tol)
        })
    }

    pub fn scaled(&self, a: f64) -> Signal {
        Signal {
            grid: self.grid,
            channels: self.channels,
            data: self.data.iter().map(|v| v * a).collect(),
        }
    }

    pub fn add(&self, other: &Signal) -> Result<Signal> {
        self.check_same_shape(other)?;
        Ok(Signal {
            grid: self.grid,
            channels: self.channels,
            data: self.data.iter().zip(&other.data).map(|(a, b)| a + b).collect(),
        })
    }

    pub fn check_same_shape(&self, other: &Signal) -> Result<()> {
        if self.grid != other.grid || self.channels != other.channels {
            return Err(Error::dim(format!(
                "signals of shape {:?}x{} and {:?}x{}",
                self.grid, self.channels, other.grid, other.channels
            )));
        }
        Ok(())
    }

    /// Stacks the channels of several signals on the same grid.
    pub fn concat_channels(parts: &[&Signal]) -> Result<Signal> {
        let first = parts
            .first()
            .ok_or_else(|| Error::arg("no signals to concatenate"))?;
        let grid = first.grid;
        if parts.iter().any(|s| s.grid != grid) {
            return Err(Error::dim("concatenated signals must share a grid"));
        }
        let channels: usize = parts.iter().map(|s| s.channels).sum();
        let mut data = Vec::with_capacity(grid.pixels() * channels);
        for i in 0..grid.pixels() {
            for s in parts {
                data.extend_from_slice(&s.data[i * s.channels..(i + 1) * s.channels]);
            }
        }
        Ok(Signal {
            grid,
            channels,
            data,
        })
    }

    /// Channels `range` of this signal.
    pub fn select_channels(&self, range: std::ops::Range<usize>) -> Signal {
        let start = range.start;
        Signal::from_fn(self.grid, range.len(), |i, k| self.get(i, start + k))
    }
}
