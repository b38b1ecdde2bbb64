//! Self-check suite: each invariant is recomputed against a dense or direct
//! oracle on random instances.

use nalgebra::DMatrix;
use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::bounds::layer_spectrum_report;
use crate::constructions::{
    downsample, fc_to_cnn, identity_network, is_band_limited, parallel_sum, recentred, unique_embedding, upsample,
    FCNetwork,
};
use crate::error::Result;
use crate::fourier::{DftPlan, Grid};
use crate::harness::checkpoint::{from_bytes, to_bytes};
use crate::harness::data::gen_translated_bumps;
use crate::linalg::{cyclic_conv, frequency_svd, te_matrix, ConvFilter, PoolingKind, PoolingSpec, Signal};
use crate::network::{evaluate, loss_and_gradients, objective, pooling_matrix, NetworkParams, Targets, TrainConfig};

#[derive(Debug, Clone, PartialEq)]
pub struct CheckResult {
    pub name: &'static str,
    pub passed: bool,
    pub detail: String,
}

type Check = fn(&mut ChaCha8Rng, usize) -> Result<(bool, String)>;

fn random_filter(r: &mut ChaCha8Rng, grid: Grid, max_c: usize) -> ConvFilter {
    let (co, ci) = (r.random_range(1..=max_c), r.random_range(1..=max_c));
    ConvFilter::from_fn(grid, co, ci, |_, _, _| r.random_range(-1.0..1.0))
        .with_bias((0..co).map(|_| r.random_range(-1.0..1.0)).collect())
        .expect("bias length")
}

fn random_signal(r: &mut ChaCha8Rng, grid: Grid, c: usize, lo: f64, hi: f64) -> Signal {
    Signal::from_fn(grid, c, |_, _| r.random_range(lo..hi))
}

fn random_grid(r: &mut ChaCha8Rng, max_side: usize) -> Grid {
    if r.random_bool(0.7) {
        Grid::line(r.random_range(1..=max_side))
    } else {
        Grid::square(r.random_range(1..=4))
    }
}

fn te_shift_invariance(r: &mut ChaCha8Rng, reps: usize) -> Result<(bool, String)> {
    for _ in 0..reps {
        let g = random_grid(r, 8);
        let f = random_filter(r, g, 3);
        if !te_matrix(&f).is_shift_invariant(0.0) {
            return Ok((false, format!("shift invariance broken on {g:?}")));
        }
    }
    Ok((true, format!("{reps} filters")))
}

fn freq_svd_matches_dense(r: &mut ChaCha8Rng, reps: usize) -> Result<(bool, String)> {
    let mut worst = 0.0f64;
    for _ in 0..reps {
        let g = random_grid(r, 12);
        let f = random_filter(r, g, 4);
        let mut fast = frequency_svd(&f).values_sorted();
        let mut dense: Vec<f64> = te_matrix(&f).dense.singular_values().iter().copied().collect();
        fast.sort_by(|a, b| b.total_cmp(a));
        dense.sort_by(|a, b| b.total_cmp(a));
        for (a, b) in fast.iter().zip(&dense) {
            worst = worst.max((a - b).abs());
        }
    }
    Ok((worst <= 1e-9, format!("max deviation {worst:.2e}")))
}

fn norm_factor(r: &mut ChaCha8Rng, reps: usize) -> Result<(bool, String)> {
    let mut worst = 0.0f64;
    for _ in 0..reps {
        let g = random_grid(r, 12);
        let f = random_filter(r, g, 3);
        let dense = te_matrix(&f).dense.norm_squared();
        let want = g.pixels() as f64 * f.weight_norm_sq();
        worst = worst.max((dense - want).abs() / want.max(1e-300));
        worst = worst.max((f.matrix_norm_sq() - dense).abs() / dense.max(1e-300));
    }
    Ok((worst <= 1e-12, format!("max relative deviation {worst:.2e}")))
}

fn convolution_theorem(r: &mut ChaCha8Rng, reps: usize) -> Result<(bool, String)> {
    let mut worst = 0.0f64;
    for _ in 0..reps {
        let n = r.random_range(1..=16);
        let a: Vec<f64> = (0..n).map(|_| r.random_range(-1.0..1.0)).collect();
        let b: Vec<f64> = (0..n).map(|_| r.random_range(-1.0..1.0)).collect();
        let direct = cyclic_conv(&a, &b)?;
        let plan = DftPlan::new(Grid::line(n));
        let prod: Vec<Complex64> = plan
            .eigenvalues(&a)
            .iter()
            .zip(plan.forward_real(&b))
            .map(|(x, y)| x * y)
            .collect();
        let back = plan.inverse(&prod);
        for (d, v) in direct.iter().zip(back) {
            worst = worst.max((d - v.re).abs());
        }
    }
    Ok((worst <= 1e-12, format!("max deviation {worst:.2e}")))
}

fn pooling_symmetry(r: &mut ChaCha8Rng, _reps: usize) -> Result<(bool, String)> {
    for n in [3, 4, 7, 8, 16] {
        for g in [Grid::line(n), Grid::square(n.min(6))] {
            let beta = r.random_range(0.0..1.0);
            let p = PoolingSpec::new(PoolingKind::BlendAvg3 { beta }, g)?;
            for t in 0..g.pixels() {
                let c = g.conjugate_frequency(t);
                if (p.m_tilde[t] - p.m_tilde[c].conj()).norm() > 1e-12 {
                    return Ok((false, format!("m~ not conjugate symmetric at t = {t}")));
                }
            }
        }
    }
    Ok((true, "blend pooling, 1D and 2D".into()))
}

fn gradient_check(r: &mut ChaCha8Rng, reps: usize) -> Result<(bool, String)> {
    let g = Grid::line(4);
    let pooling = PoolingSpec::new(PoolingKind::BlendAvg3 { beta: 0.5 }, g)?;
    let params = NetworkParams::random(pooling, &[3, 3, 3, 3], 1.0, r.random())?;
    let inputs: Vec<Signal> = (0..3).map(|_| random_signal(r, g, 3, -1.0, 1.0)).collect();
    let targets = Targets::Signals((0..3).map(|_| random_signal(r, g, 3, -1.0, 1.0)).collect());
    let config = TrainConfig {
        lambda: 0.1,
        ..TrainConfig::default()
    };
    let (_, grad) = loss_and_gradients(&params, &inputs, &targets, &config)?;
    let flat = params.to_flat();
    let gflat = grad.to_flat();
    let stride = if reps >= flat.len() { 1 } else { flat.len().div_ceil(reps.max(1)) };
    let h = 1e-5;
    let mut worst = 0.0f64;
    let mut probe = params.clone();
    for i in (0..flat.len()).step_by(stride) {
        let mut v = flat.clone();
        v[i] = flat[i] + h;
        probe.set_flat(&v)?;
        let up = objective(&probe, &inputs, &targets, &config)?.objective;
        v[i] = flat[i] - h;
        probe.set_flat(&v)?;
        let down = objective(&probe, &inputs, &targets, &config)?.objective;
        let fd = (up - down) / (2.0 * h);
        worst = worst.max((fd - gflat[i]).abs() / (1.0 + gflat[i].abs()));
    }
    Ok((worst <= 1e-6, format!("max relative error {worst:.2e}")))
}

fn identity_recovery(r: &mut ChaCha8Rng, reps: usize) -> Result<(bool, String)> {
    let g = Grid::line(8);
    let pooling = PoolingSpec::new(PoolingKind::BlendAvg3 { beta: 0.5 }, g)?;
    let net = identity_network(3, 5, &pooling, 1.0)?;
    let mut worst = 0.0f64;
    for _ in 0..reps {
        let x = random_signal(r, g, 3, -1.0, 1.0);
        worst = worst.max(evaluate(&net, &x)?.max_abs_diff(&x));
    }
    let hidden = 3.0 * pooling.m_bar;
    let layer_dev = net.layers[..4]
        .iter()
        .map(|f| (f.matrix_norm_sq() - hidden).abs() / hidden)
        .fold(0.0, f64::max);
    Ok((
        worst <= 1e-8 && layer_dev <= 1e-12,
        format!("recovery {worst:.2e}, identity-layer norm deviation {layer_dev:.2e}"),
    ))
}

fn parallel_additivity(r: &mut ChaCha8Rng, reps: usize) -> Result<(bool, String)> {
    let g = Grid::line(6);
    let pooling = PoolingSpec::new(PoolingKind::BlendAvg3 { beta: 0.3 }, g)?;
    let a = NetworkParams::random(pooling.clone(), &[2, 3, 2], 1.0, r.random())?;
    let b = NetworkParams::random(pooling, &[2, 4, 2], 1.0, r.random())?;
    let sum = parallel_sum(&a, &b)?;
    let want = a.weight_norm_sq() + b.weight_norm_sq();
    let norm_dev = (sum.weight_norm_sq() - want).abs() / want;
    let mut worst = 0.0f64;
    for _ in 0..reps {
        let x = random_signal(r, g, 2, -1.0, 1.0);
        let y = evaluate(&a, &x)?.add(&evaluate(&b, &x)?)?;
        worst = worst.max(evaluate(&sum, &x)?.max_abs_diff(&y));
    }
    Ok((
        norm_dev <= 1e-12 && worst <= 1e-10,
        format!("weight norm deviation {norm_dev:.2e}, function deviation {worst:.2e}"),
    ))
}

fn fc_equivalence(r: &mut ChaCha8Rng, reps: usize) -> Result<(bool, String)> {
    let g = Grid::line(4);
    let fc = FCNetwork::random(&[8, 5, 3], r.random())?;
    let cnn = fc_to_cnn(&fc, g, 2)?;
    let mut worst = 0.0f64;
    for _ in 0..reps {
        let x = random_signal(r, g, 2, 0.0, 1.0);
        let y = evaluate(&cnn, &x)?;
        for p in 0..g.pixels() {
            for (k, w) in fc.evaluate(&recentred(&x, p))?.iter().enumerate() {
                worst = worst.max((y.get(p, k) - w).abs());
            }
        }
    }
    Ok((worst <= 1e-9, format!("max deviation {worst:.2e}")))
}

fn nyquist_and_aliasing(r: &mut ChaCha8Rng, reps: usize) -> Result<(bool, String)> {
    let mut round = 0.0f64;
    let mut alias = 0.0f64;
    for _ in 0..reps {
        for (n, s) in [(8, 2), (12, 3), (16, 4)] {
            let g = Grid::line(n);
            let m = n / s;
            // Band-limited: random coefficients on |u| < m / 2, Hermitian.
            let mut spec = vec![Complex64::new(0.0, 0.0); n];
            spec[0] = Complex64::new(r.random_range(-1.0..1.0), 0.0);
            for u in 1..m.div_ceil(2) {
                let z = Complex64::new(r.random_range(-1.0..1.0), r.random_range(-1.0..1.0));
                spec[u] = z;
                spec[n - u] = z.conj();
            }
            let plan = DftPlan::new(g);
            let data: Vec<f64> = plan.inverse(&spec).iter().map(|z| z.re).collect();
            let x = Signal::new(g, 1, data)?;
            if !is_band_limited(&x, s, 1e-9) {
                return Ok((false, "generated signal not band-limited".into()));
            }
            round = round.max(upsample(&downsample(&x, s)?, s)?.max_abs_diff(&x));

            let x = random_signal(r, g, 1, -1.0, 1.0);
            let y = downsample(&x, s)?;
            let xt = plan.forward_real(x.data());
            let yt = DftPlan::new(y.grid()).forward_real(y.data());
            for i in 0..m {
                let sum: Complex64 = (0..s).map(|j| xt[(i + j * m) % n]).sum();
                alias = alias.max((yt[i] - sum / s as f64).norm());
            }
        }
    }
    Ok((
        round <= 1e-10 && alias <= 1e-10,
        format!("round trip {round:.2e}, aliasing {alias:.2e}"),
    ))
}

fn embedding_recovery(_r: &mut ChaCha8Rng, reps: usize) -> Result<(bool, String)> {
    let count = reps.clamp(4, 64);
    let data = gen_translated_bumps(count, 16, 3, 5)?;
    let emb = unique_embedding(data.inputs, Grid::line(16), 1, 1.0)?;
    let err = emb.max_recovery_error()?;
    let mut off = 0.0f64;
    for a in 0..count.min(8) {
        for p in 0..16 {
            off = off.max(emb.off_support_magnitude(a, p)?);
        }
    }
    Ok((
        err <= 1e-9 && off <= 1e-10,
        format!("{count} samples, recovery {err:.2e}, off-support {off:.2e}"),
    ))
}

fn checkpoint_round_trip(r: &mut ChaCha8Rng, _reps: usize) -> Result<(bool, String)> {
    let pooling = PoolingSpec::new(PoolingKind::BlendAvg3 { beta: 0.4 }, Grid::square(4))?;
    let net = NetworkParams::random_with_downsampling(pooling, &[1, 3, 2, 2], &[1, 2, 1], 1.0, r.random())?;
    let bytes = to_bytes(&net, Some(3))?;
    let back = from_bytes(&bytes)?;
    let again = to_bytes(&back.params, back.seed)?;
    Ok((again == bytes && back.params == net, format!("{} bytes", bytes.len())))
}

fn spectrum_totals(r: &mut ChaCha8Rng, _reps: usize) -> Result<(bool, String)> {
    let g = Grid::line(6);
    let pooling = PoolingSpec::new(PoolingKind::BlendAvg3 { beta: 0.6 }, g)?;
    let net = NetworkParams::random(pooling.clone(), &[2, 3, 3, 1], 1.0, r.random())?;
    let rows = layer_spectrum_report(&net)?;
    let mut worst = 0.0f64;
    for (l, f) in net.layers.iter().enumerate() {
        let total: f64 = rows.iter().filter(|row| row.layer == l + 1).map(|row| row.singular_value.powi(2)).sum();
        let pm: DMatrix<f64> = pooling_matrix(&pooling, f.c_out());
        let dense = (pm * te_matrix(f).dense).norm_squared();
        worst = worst.max((total - dense).abs());
    }
    Ok((worst <= 1e-9, format!("max deviation {worst:.2e}")))
}

fn generator_determinism(_r: &mut ChaCha8Rng, _reps: usize) -> Result<(bool, String)> {
    let a = gen_translated_bumps(8, 16, 3, 11)?;
    let b = gen_translated_bumps(8, 16, 3, 11)?;
    let same = a.inputs.iter().zip(&b.inputs).all(|(x, y)| {
        x.data().iter().zip(y.data()).all(|(u, v)| u.to_bits() == v.to_bits())
    });
    Ok((same, "bump generator, fixed seed".into()))
}

const CHECKS: &[(&str, Check, usize, usize)] = &[
    ("te_shift_invariance", te_shift_invariance, 20, 200),
    ("frequency_svd_vs_dense", freq_svd_matches_dense, 50, 1000),
    ("matrix_norm_factor", norm_factor, 50, 500),
    ("convolution_theorem", convolution_theorem, 50, 500),
    ("pooling_conjugate_symmetry", pooling_symmetry, 1, 1),
    ("gradient_central_difference", gradient_check, 40, usize::MAX),
    ("identity_network", identity_recovery, 20, 200),
    ("parallel_sum_additivity", parallel_additivity, 20, 200),
    ("fc_to_cnn_equivalence", fc_equivalence, 20, 100),
    ("nyquist_and_aliasing", nyquist_and_aliasing, 5, 50),
    ("unique_embedding", embedding_recovery, 8, 64),
    ("checkpoint_round_trip", checkpoint_round_trip, 1, 1),
    ("spectrum_csv_totals", spectrum_totals, 1, 1),
    ("generator_determinism", generator_determinism, 1, 1),
];

/// Runs every invariant; `fast` shrinks the number of random instances.
pub fn run_checks(fast: bool, seed: u64) -> Vec<CheckResult> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    CHECKS
        .iter()
        .map(|&(name, check, quick, full)| {
            let reps = if fast { quick } else { full };
            match check(&mut rng, reps) {
                Ok((passed, detail)) => CheckResult { name, passed, detail },
                Err(e) => CheckResult {
                    name,
                    passed: false,
                    detail: format!("error: {e}"),
                },
            }
        })
        .collect()
}

/// Fixed-width pass/fail table.
pub fn format_table(results: &[CheckResult]) -> String {
    let width = results.iter().map(|r| r.name.len()).max().unwrap_or(0);
    let mut s = String::new();
    for r in results {
        let status = if r.passed { "PASS" } else { "FAIL" };
        s.push_str(&format!("{:<width$}  {status}  {}\n", r.name, r.detail));
    }
    let passed = results.iter().filter(|r| r.passed).count();
    s.push_str(&format!("{passed}/{} checks passed\n", results.len()));
    s
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn fast_suite_passes() {
        let results = run_checks(true, 0);
        let table = format_table(&results);
        assert!(results.iter().all(|r| r.passed), "{table}");
    }
}
