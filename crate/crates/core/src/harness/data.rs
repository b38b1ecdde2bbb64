//! Synthetic datasets.

use std::f64::consts::PI;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fourier::{DftPlan, Grid};
use crate::linalg::Signal;
use crate::network::Targets;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetMeta {
    pub source: String,
    pub params: serde_json::Value,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Dataset {
    pub inputs: Vec<Signal>,
    pub targets: Targets,
    pub meta: DatasetMeta,
}

impl Dataset {
    pub fn new(inputs: Vec<Signal>, targets: Targets, meta: DatasetMeta) -> Result<Self> {
        if inputs.is_empty() {
            return Err(Error::arg("dataset is empty"));
        }
        if inputs.len() != targets.len() {
            return Err(Error::dim(format!("{} inputs and {} targets", inputs.len(), targets.len())));
        }
        let (g, c) = (inputs[0].grid(), inputs[0].channels());
        if inputs.iter().any(|x| x.grid() != g || x.channels() != c) {
            return Err(Error::dim("inputs of different shapes"));
        }
        if let Targets::Signals(ys) = &targets {
            let (gy, cy) = (ys[0].grid(), ys[0].channels());
            if ys.iter().any(|y| y.grid() != gy || y.channels() != cy) {
                return Err(Error::dim("targets of different shapes"));
            }
        }
        Ok(Dataset { inputs, targets, meta })
    }

    pub fn len(&self) -> usize {
        self.inputs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.inputs.is_empty()
    }

    pub fn grid(&self) -> Grid {
        self.inputs[0].grid()
    }

    pub fn channels(&self) -> usize {
        self.inputs[0].channels()
    }

    /// Autoencoding dataset whose targets are the inputs.
    pub fn autoencode(inputs: Vec<Signal>, meta: DatasetMeta) -> Result<Self> {
        let targets = Targets::Signals(inputs.clone());
        Dataset::new(inputs, targets, meta)
    }
}

/// Bump profile `cos^2(pi d / (2 w))` for `|d| < w`, zero elsewhere; width 1 is an impulse.
pub fn bump_profile(d: f64, width: usize) -> f64 {
    let w = width as f64;
    if d.abs() < w {
        (PI * d / (2.0 * w)).cos().powi(2)
    } else {
        0.0
    }
}

fn cyclic_distance(a: usize, b: usize, n: usize) -> f64 {
    let d = (a as i64 - b as i64).rem_euclid(n as i64) as usize;
    d.min(n - d) as f64
}

/// Amplitude-scaled bump centred at pixel `pos` of a 1D ring.
pub fn bump(n: usize, pos: usize, width: usize, amplitude: f64) -> Signal {
    let g = Grid::line(n);
    Signal::from_fn(g, 1, |i, _| amplitude * bump_profile(cyclic_distance(i, pos, n), width))
}

fn sample_positions(rng: &mut ChaCha8Rng, count: usize, n: usize) -> Vec<usize> {
    let mut out = Vec::with_capacity(count);
    let mut pool: Vec<usize> = Vec::new();
    while out.len() < count {
        if pool.is_empty() {
            pool = (0..n).collect();
            pool.shuffle(rng);
        }
        out.push(pool.pop().expect("refilled"));
    }
    out
}

/// Single-channel bumps at integer positions on a ring of size `n`, with
/// random amplitudes in `[0.5, 1]` so that no sample is a translate of another.
/// Positions cycle through all pixels before repeating.
pub fn gen_translated_bumps(count: usize, n: usize, width: usize, seed: u64) -> Result<Dataset> {
    if width == 0 || width >= n {
        return Err(Error::arg(format!("bump width {width} must lie in 1..{n}")));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let positions = sample_positions(&mut rng, count, n);
    let inputs: Vec<Signal> = positions
        .iter()
        .map(|&p| bump(n, p, width, rng.random_range(0.5..1.0)))
        .collect();
    Dataset::autoencode(
        inputs,
        DatasetMeta {
            source: "translated_bumps".into(),
            params: serde_json::json!({"count": count, "n": n, "width": width, "seed": seed}),
        },
    )
}

/// Bump dataset labelled by the parity of the bump position (two classes).
pub fn gen_bump_parity(count: usize, n: usize, width: usize, seed: u64) -> Result<Dataset> {
    if n % 2 != 0 {
        return Err(Error::arg("parity labels need an even ring"));
    }
    if width == 0 || width >= n {
        return Err(Error::arg(format!("bump width {width} must lie in 1..{n}")));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let positions = sample_positions(&mut rng, count, n);
    let inputs = positions
        .iter()
        .map(|&p| bump(n, p, width, rng.random_range(0.5..1.0)))
        .collect();
    let labels = positions.iter().map(|p| p % 2).collect();
    Dataset::new(
        inputs,
        Targets::Labels { labels, classes: 2 },
        DatasetMeta {
            source: "bump_parity".into(),
            params: serde_json::json!({"count": count, "n": n, "width": width, "seed": seed}),
        },
    )
}

/// Smooth nonnegative shape times a single-frequency sinusoid with random phase.
///
/// The shape is `1 + sum_{0 < |u| <= shape_max_freq} a_u cos(2 pi <u, x>/n + phi_u)`
/// with coefficients scaled so it stays nonnegative; `pattern_freq` gives the
/// sinusoid frequency per axis.
pub fn gen_shape_pattern(
    count: usize,
    grid: Grid,
    shape_max_freq: usize,
    pattern_freq: [usize; 2],
    seed: u64,
) -> Result<Dataset> {
    let n = grid.side();
    if pattern_freq.iter().take(grid.dims()).any(|&f| 2 * f > n) {
        return Err(Error::arg(format!("pattern frequency {pattern_freq:?} above Nyquist for side {n}")));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let modes: Vec<[i64; 2]> = {
        let r = shape_max_freq as i64;
        let second = if grid.dims() == 2 { -r..=r } else { 0..=0 };
        let mut v = Vec::new();
        for a in -r..=r {
            for b in second.clone() {
                // one representative per conjugate pair
                if (a, b) > (0, 0) && a.abs().max(b.abs()) <= r {
                    v.push([a, b]);
                }
            }
        }
        v
    };
    let mut inputs = Vec::with_capacity(count);
    for _ in 0..count {
        let coeffs: Vec<(f64, f64)> = modes
            .iter()
            .map(|_| (rng.random_range(0.0..1.0), rng.random_range(0.0..2.0 * PI)))
            .collect();
        let total: f64 = coeffs.iter().map(|c| c.0).sum::<f64>().max(1.0);
        let phase = rng.random_range(0.0..2.0 * PI);
        let sig = Signal::from_fn(grid, 1, |i, _| {
            let c = grid.coords(i);
            let shape = 1.0
                + modes
                    .iter()
                    .zip(&coeffs)
                    .map(|(u, (a, ph))| {
                        let arg = 2.0 * PI * (u[0] as f64 * c[0] as f64 + u[1] as f64 * c[1] as f64) / n as f64;
                        a / total * (arg + ph).cos()
                    })
                    .sum::<f64>();
            let parg = 2.0 * PI * (pattern_freq[0] * c[0] + pattern_freq[1] * c[1]) as f64 / n as f64;
            shape * (parg + phase).cos()
        });
        inputs.push(sig);
    }
    Dataset::autoencode(
        inputs,
        DatasetMeta {
            source: "shape_pattern".into(),
            params: serde_json::json!({
                "count": count, "n": n, "dims": grid.dims(),
                "shape_max_freq": shape_max_freq, "pattern_freq": pattern_freq, "seed": seed
            }),
        },
    )
}

/// Energy fraction of a dataset's spectrum at signed frequencies within
/// `radius` (per axis, Chebyshev) of `+-centre`.
pub fn spectral_concentration(data: &Dataset, centre: [usize; 2], radius: usize) -> f64 {
    let g = data.grid();
    let plan = DftPlan::new(g);
    let n = g.side() as i64;
    let near = |t: usize| {
        let u = g.signed_frequency(t);
        [1i64, -1].iter().any(|&sgn| {
            (0..g.dims()).all(|a| {
                let d = (u[a] - sgn * centre[a] as i64).rem_euclid(n);
                d.min(n - d) <= radius as i64
            })
        })
    };
    let (mut inside, mut total) = (0.0, 0.0);
    for x in &data.inputs {
        let spec = plan.forward_channels(x.data(), x.channels());
        for (t, z) in spec.iter().enumerate() {
            let e = z.norm_sqr();
            total += e;
            if near(t / x.channels()) {
                inside += e;
            }
        }
    }
    if total == 0.0 {
        1.0
    } else {
        inside / total
    }
}

/// Ball position at frame `t`: `p0 + t v + t^2 g / 2` wrapped to the ring.
pub fn ball_position(p0: f64, v: f64, gravity: f64, t: usize, n: usize) -> f64 {
    let t = t as f64;
    (p0 + t * v + 0.5 * gravity * t * t).rem_euclid(n as f64)
}

/// Frames of a ball under constant acceleration on a 1D ring; each frame is a
/// one-hot dot at the nearest pixel, frames stacked as channels.
pub fn gen_ball_trajectory(
    count: usize,
    n: usize,
    frames_in: usize,
    frames_out: usize,
    gravity: f64,
    seed: u64,
) -> Result<Dataset> {
    if frames_in == 0 || frames_out == 0 {
        return Err(Error::arg("frames must be at least 1"));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let g = Grid::line(n);
    let frame_pixel = |p: f64| (p.round() as usize) % n;
    let mut inputs = Vec::with_capacity(count);
    let mut targets = Vec::with_capacity(count);
    let vmax = (n / 8).max(1) as i64;
    for _ in 0..count {
        let p0 = rng.random_range(0..n) as f64;
        let v = rng.random_range(-vmax..=vmax) as f64;
        let pix: Vec<usize> = (0..frames_in + frames_out)
            .map(|t| frame_pixel(ball_position(p0, v, gravity, t, n)))
            .collect();
        inputs.push(Signal::from_fn(g, frames_in, |i, k| f64::from(u8::from(pix[k] == i))));
        targets.push(Signal::from_fn(g, frames_out, |i, k| f64::from(u8::from(pix[frames_in + k] == i))));
    }
    Dataset::new(
        inputs,
        Targets::Signals(targets),
        DatasetMeta {
            source: "ball_trajectory".into(),
            params: serde_json::json!({
                "count": count, "n": n, "frames_in": frames_in, "frames_out": frames_out,
                "gravity": gravity, "seed": seed
            }),
        },
    )
}
