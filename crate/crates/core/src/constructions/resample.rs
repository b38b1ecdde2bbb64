//! Subsampling and Fourier upsampling between a grid and its `s`-coarsening.

use num_complex::Complex64;

use crate::error::{Error, Result};
use crate::fourier::{DftPlan, Grid};
use crate::linalg::Signal;

fn coarse_grid(grid: Grid, s: usize) -> Result<Grid> {
    if s == 0 {
        return Err(Error::arg("stride must be positive"));
    }
    if grid.side() / s == 0 {
        return Err(Error::arg(format!("stride {s} exceeds side {}", grid.side())));
    }
    Grid::new(grid.side() / s, grid.dims())
}

/// `(Down_s x)_i = x_{s i}` per axis (0-based), on the grid of side `floor(n / s)`.
pub fn downsample(x: &Signal, s: usize) -> Result<Signal> {
    let fine = x.grid();
    let coarse = coarse_grid(fine, s)?;
    Ok(Signal::from_fn(coarse, x.channels(), |i, k| {
        let c = coarse.coords(i);
        x.get(fine.index([c[0] * s, c[1] * s]), k)
    }))
}

/// Adjoint of [`downsample`]: scatters coarse values back to pixels `s i`, zero elsewhere.
pub fn downsample_adjoint(y: &Signal, fine: Grid, s: usize) -> Result<Signal> {
    let coarse = coarse_grid(fine, s)?;
    if y.grid() != coarse {
        return Err(Error::dim("signal does not live on the coarse grid"));
    }
    let mut out = Signal::zeros(fine, y.channels());
    for i in 0..coarse.pixels() {
        let c = coarse.coords(i);
        let j = fine.index([c[0] * s, c[1] * s]);
        for k in 0..y.channels() {
            out.set(j, k, y.get(i, k));
        }
    }
    Ok(out)
}

/// Fine-grid slots (with weights) receiving one signed coarse frequency along an axis.
fn placements(u: i64, coarse_side: usize, fine_side: usize) -> Vec<(usize, f64)> {
    let n = fine_side as i64;
    if coarse_side % 2 == 0 && 2 * u == coarse_side as i64 {
        vec![(u.rem_euclid(n) as usize, 0.5), ((-u).rem_euclid(n) as usize, 0.5)]
    } else {
        vec![(u.rem_euclid(n) as usize, 1.0)]
    }
}

/// Fourier upsampling to side `n' s`: every coarse coefficient is placed at the
/// same signed frequency on the fine grid and scaled by `s` per axis; the
/// Nyquist coefficient of an even coarse side is split between `+-n'/2` so real
/// inputs give real outputs.
pub fn upsample(x: &Signal, s: usize) -> Result<Signal> {
    if s == 0 {
        return Err(Error::arg("stride must be positive"));
    }
    let coarse = x.grid();
    let fine = Grid::new(coarse.side() * s, coarse.dims())?;
    let cplan = DftPlan::new(coarse);
    let fplan = DftPlan::new(fine);
    let spec = cplan.forward_channels(x.data(), x.channels());
    let scale = (s as f64).powi(coarse.dims() as i32);
    let c = x.channels();
    let mut out = vec![Complex64::new(0.0, 0.0); fine.pixels() * c];
    for t in 0..coarse.pixels() {
        let u = coarse.signed_frequency(t);
        let ax0 = placements(u[0], coarse.side(), fine.side());
        let ax1 = if coarse.dims() == 2 {
            placements(u[1], coarse.side(), fine.side())
        } else {
            vec![(0, 1.0)]
        };
        for &(a, wa) in &ax0 {
            for &(b, wb) in &ax1 {
                let f = fine.index([a, b]);
                for k in 0..c {
                    out[f * c + k] += spec[t * c + k] * (scale * wa * wb);
                }
            }
        }
    }
    Signal::new(fine, c, fplan.inverse_channels_real(&out, c))
}

/// The unsymmetrized operator: coarse coefficient `t` goes to fine slot `t`
/// (per axis) scaled by `s`; returns complex pixel-major values.
pub fn upsample_literal(x: &Signal, s: usize) -> Result<Vec<Complex64>> {
    if s == 0 {
        return Err(Error::arg("stride must be positive"));
    }
    let coarse = x.grid();
    let fine = Grid::new(coarse.side() * s, coarse.dims())?;
    let spec = DftPlan::new(coarse).forward_channels(x.data(), x.channels());
    let scale = (s as f64).powi(coarse.dims() as i32);
    let c = x.channels();
    let mut out = vec![Complex64::new(0.0, 0.0); fine.pixels() * c];
    for t in 0..coarse.pixels() {
        let f = fine.index(coarse.coords(t));
        for k in 0..c {
            out[f * c + k] = spec[t * c + k] * scale;
        }
    }
    let fplan = DftPlan::new(fine);
    let mut buf = vec![Complex64::new(0.0, 0.0); fine.pixels()];
    let mut res = vec![Complex64::new(0.0, 0.0); fine.pixels() * c];
    for k in 0..c {
        for t in 0..fine.pixels() {
            buf[t] = out[t * c + k];
        }
        fplan.inverse_in_place(&mut buf);
        for i in 0..fine.pixels() {
            res[i * c + k] = buf[i];
        }
    }
    Ok(res)
}

/// True when every coefficient at a signed frequency with `|u| >= n / (2 s)` on
/// some axis is below `tol`.
pub fn is_band_limited(x: &Signal, s: usize, tol: f64) -> bool {
    let g = x.grid();
    let limit = (g.side() / s) as i64;
    let spec = DftPlan::new(g).forward_channels(x.data(), x.channels());
    (0..g.pixels()).all(|t| {
        let u = g.signed_frequency(t);
        let inside = u.iter().all(|v| 2 * v.abs() < limit);
        inside || (0..x.channels()).all(|k| spec[t * x.channels() + k].norm() <= tol)
    })
}
