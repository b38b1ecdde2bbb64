//! Cyclic grids and discrete Fourier transforms over them.
//!
//! Conventions used throughout the crate:
//!
//! * the forward transform is unnormalized with a negative exponent,
//!   `X_t = sum_j x_j w^{-t j}`, `w = exp(2 pi i / n)`;
//! * the inverse transform carries the `1/n` factor;
//! * circulant eigenvalues use the positive exponent,
//!   `lambda_t(v) = sum_j v_j w^{t j}`, so that `dft(v * x)_t = lambda_t(v) dft(x)_t`
//!   for the correlation-style cyclic convolution of [`crate::linalg::cyclic_conv`].
//!
//! Frequencies and pixels are stored with 0-based flat indices. Reports convert
//! to the 1-based numbering (`t = 1` is the constant frequency).

use num_complex::Complex64;
use serde::{Deserialize, Serialize};
use std::f64::consts::PI;

use crate::error::{Error, Result};

/// A square cyclic grid `Z_n^dims` with `dims` in `{1, 2}`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Grid {
    n: usize,
    dims: usize,
}

impl Grid {
    pub fn new(n: usize, dims: usize) -> Result<Self> {
        if n == 0 {
            return Err(Error::arg("grid side must be positive"));
        }
        if dims != 1 && dims != 2 {
            return Err(Error::arg(format!("grid dims must be 1 or 2, got {dims}")));
        }
        Ok(Grid { n, dims })
    }

    pub fn line(n: usize) -> Self {
        Grid::new(n, 1).expect("positive side")
    }

    pub fn square(n: usize) -> Self {
        Grid::new(n, 2).expect("positive side")
    }

    /// Side length.
    pub fn side(&self) -> usize {
        self.n
    }

    pub fn dims(&self) -> usize {
        self.dims
    }

    /// Number of pixels (and of frequencies).
    pub fn pixels(&self) -> usize {
        self.n.pow(self.dims as u32)
    }

    pub fn coords(&self, i: usize) -> [usize; 2] {
        if self.dims == 1 {
            [i, 0]
        } else {
            [i / self.n, i % self.n]
        }
    }

    pub fn index(&self, c: [usize; 2]) -> usize {
        if self.dims == 1 {
            c[0] % self.n
        } else {
            (c[0] % self.n) * self.n + (c[1] % self.n)
        }
    }

    /// `i + p` with per-axis wrap-around.
    pub fn add(&self, i: usize, p: usize) -> usize {
        let (a, b) = (self.coords(i), self.coords(p));
        self.index([(a[0] + b[0]) % self.n, (a[1] + b[1]) % self.n])
    }

    /// `i - p` with per-axis wrap-around.
    pub fn sub(&self, i: usize, p: usize) -> usize {
        let (a, b) = (self.coords(i), self.coords(p));
        self.index([
            (a[0] + self.n - b[0]) % self.n,
            (a[1] + self.n - b[1]) % self.n,
        ])
    }

    pub fn neg(&self, i: usize) -> usize {
        self.sub(0, i)
    }

    /// Frequency paired with `t` by complex conjugation for real signals.
    pub fn conjugate_frequency(&self, t: usize) -> usize {
        self.neg(t)
    }

    /// Representative of the conjugate pair `{t, -t}` (the smaller flat index).
    pub fn canonical_frequency(&self, t: usize) -> usize {
        t.min(self.neg(t))
    }

    /// Signed per-axis frequency in `(-n/2, n/2]`.
    pub fn signed_frequency(&self, t: usize) -> [i64; 2] {
        let c = self.coords(t);
        let n = self.n as i64;
        let signed = |v: usize| {
            let v = v as i64;
            if 2 * v > n {
                v - n
            } else {
                v
            }
        };
        if self.dims == 1 {
            [signed(c[0]), 0]
        } else {
            [signed(c[0]), signed(c[1])]
        }
    }

    /// 1-based frequency pair used in reports; the second index is 1 on 1D grids.
    pub fn frequency_label(&self, t: usize) -> (usize, usize) {
        let c = self.coords(t);
        (c[0] + 1, c[1] + 1)
    }

    /// `exp(2 pi i <t, j> / n)`.
    pub fn phase(&self, t: usize, j: usize) -> Complex64 {
        let (a, b) = (self.coords(t), self.coords(j));
        let k = (a[0] * b[0] + a[1] * b[1]) % self.n;
        Complex64::from_polar(1.0, 2.0 * PI * k as f64 / self.n as f64)
    }
}

/// Transform algorithm selection; `Auto` uses the radix-2 FFT when the side
/// is a power of two.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Algorithm {
    Auto,
    Direct,
}

#[derive(Debug, Clone)]
struct AxisPlan {
    n: usize,
    /// `exp(2 pi i k / n)` for `k in 0..n`.
    roots: Vec<Complex64>,
    bitrev: Option<Vec<usize>>,
}

impl AxisPlan {
    fn new(n: usize, algorithm: Algorithm) -> Self {
        let roots = (0..n)
            .map(|k| Complex64::from_polar(1.0, 2.0 * PI * k as f64 / n as f64))
            .collect();
        let bitrev = (algorithm == Algorithm::Auto && n.is_power_of_two() && n > 1).then(|| {
            let bits = n.trailing_zeros();
            (0..n)
                .map(|i| i.reverse_bits() >> (usize::BITS - bits))
                .collect()
        });
        AxisPlan { n, roots, bitrev }
    }

    fn root(&self, k: usize, positive: bool) -> Complex64 {
        let w = self.roots[k % self.n];
        if positive {
            w
        } else {
            w.conj()
        }
    }

    /// Unnormalized transform with exponent sign `+` when `positive`.
    fn transform(&self, buf: &mut [Complex64], scratch: &mut Vec<Complex64>, positive: bool) {
        let n = self.n;
        debug_assert_eq!(buf.len(), n);
        if n == 1 {
            return;
        }
        match &self.bitrev {
            Some(rev) => {
                for i in 0..n {
                    let j = rev[i];
                    if i < j {
                        buf.swap(i, j);
                    }
                }
                let mut len = 2;
                while len <= n {
                    let half = len / 2;
                    let step = n / len;
                    for start in (0..n).step_by(len) {
                        for j in 0..half {
                            let w = self.root(j * step, positive);
                            let u = buf[start + j];
                            let v = buf[start + j + half] * w;
                            buf[start + j] = u + v;
                            buf[start + j + half] = u - v;
                        }
                    }
                    len <<= 1;
                }
            }
            None => {
                scratch.clear();
                scratch.extend_from_slice(buf);
                for (t, out) in buf.iter_mut().enumerate() {
                    let mut acc = Complex64::new(0.0, 0.0);
                    for (j, x) in scratch.iter().enumerate() {
                        acc += x * self.root(t * j, positive);
                    }
                    *out = acc;
                }
            }
        }
    }
}

/// Reusable DFT plan for a grid.
#[derive(Debug, Clone)]
pub struct DftPlan {
    grid: Grid,
    axis: AxisPlan,
}

impl DftPlan {
    pub fn new(grid: Grid) -> Self {
        Self::with_algorithm(grid, Algorithm::Auto)
    }

    pub fn with_algorithm(grid: Grid, algorithm: Algorithm) -> Self {
        DftPlan {
            grid,
            axis: AxisPlan::new(grid.side(), algorithm),
        }
    }

    pub fn grid(&self) -> Grid {
        self.grid
    }

    fn transform_in_place(&self, buf: &mut [Complex64], positive: bool) {
        let n = self.grid.side();
        let mut scratch = Vec::with_capacity(n);
        if self.grid.dims() == 1 {
            self.axis.transform(buf, &mut scratch, positive);
            return;
        }
        for row in buf.chunks_mut(n) {
            self.axis.transform(row, &mut scratch, positive);
        }
        let mut col = vec![Complex64::new(0.0, 0.0); n];
        for c in 0..n {
            for r in 0..n {
                col[r] = buf[r * n + c];
            }
            self.axis.transform(&mut col, &mut scratch, positive);
            for r in 0..n {
                buf[r * n + c] = col[r];
            }
        }
    }

    /// Forward transform `X_t = sum_j x_j w^{-t j}` in place.
    pub fn forward_in_place(&self, buf: &mut [Complex64]) {
        self.transform_in_place(buf, false);
    }

    /// Inverse transform `x_j = (1/n) sum_t X_t w^{t j}` in place.
    pub fn inverse_in_place(&self, buf: &mut [Complex64]) {
        self.transform_in_place(buf, true);
        let scale = 1.0 / self.grid.pixels() as f64;
        for v in buf.iter_mut() {
            *v *= scale;
        }
    }

    pub fn forward(&self, x: &[Complex64]) -> Vec<Complex64> {
        let mut buf = x.to_vec();
        self.forward_in_place(&mut buf);
        buf
    }

    pub fn inverse(&self, x: &[Complex64]) -> Vec<Complex64> {
        let mut buf = x.to_vec();
        self.inverse_in_place(&mut buf);
        buf
    }

    pub fn forward_real(&self, x: &[f64]) -> Vec<Complex64> {
        let mut buf: Vec<Complex64> = x.iter().map(|&v| Complex64::new(v, 0.0)).collect();
        self.forward_in_place(&mut buf);
        buf
    }

    /// Circulant eigenvalues `lambda_t = sum_j v_j w^{+t j}` (no normalization).
    pub fn eigenvalues(&self, v: &[f64]) -> Vec<Complex64> {
        let mut buf: Vec<Complex64> = v.iter().map(|&x| Complex64::new(x, 0.0)).collect();
        self.transform_in_place(&mut buf, true);
        buf
    }

    /// Per-channel forward transform of pixel-major data `data[i * c + k]`;
    /// the result is frequency-major `out[t * c + k]`.
    pub fn forward_channels(&self, data: &[f64], channels: usize) -> Vec<Complex64> {
        let p = self.grid.pixels();
        debug_assert_eq!(data.len(), p * channels);
        let mut out = vec![Complex64::new(0.0, 0.0); p * channels];
        let mut buf = vec![Complex64::new(0.0, 0.0); p];
        for k in 0..channels {
            for i in 0..p {
                buf[i] = Complex64::new(data[i * channels + k], 0.0);
            }
            self.forward_in_place(&mut buf);
            for t in 0..p {
                out[t * channels + k] = buf[t];
            }
        }
        out
    }

    /// Per-channel inverse transform keeping the real part.
    pub fn inverse_channels_real(&self, spec: &[Complex64], channels: usize) -> Vec<f64> {
        let p = self.grid.pixels();
        debug_assert_eq!(spec.len(), p * channels);
        let mut out = vec![0.0; p * channels];
        let mut buf = vec![Complex64::new(0.0, 0.0); p];
        for k in 0..channels {
            for t in 0..p {
                buf[t] = spec[t * channels + k];
            }
            self.inverse_in_place(&mut buf);
            for i in 0..p {
                out[i * channels + k] = buf[i].re;
            }
        }
        out
    }
}
