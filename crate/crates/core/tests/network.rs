mod common;

use cbn_core::fourier::Grid;
use cbn_core::linalg::{ConvFilter, PoolingSpec, Signal};
use cbn_core::network::*;
use common::*;

#[test]
fn forward_matches_direct_sums() {
    let mut r = rng(1);
    for (grid, widths) in [
        (Grid::line(8), vec![2, 3, 3, 1]),
        (Grid::line(5), vec![1, 4, 2]),
        (Grid::square(4), vec![2, 3, 2]),
    ] {
        let net = random_net(&mut r, blend(grid, 0.5), &widths);
        let x = random_signal(&mut r, grid, widths[0]);
        let out = evaluate(&net, &x).unwrap();
        let reference = direct_forward(&net, &x);
        for (a, b) in out.data().iter().zip(&reference) {
            assert!((a - b).abs() < 1e-12, "{a} vs {b}");
        }
    }
}

#[test]
fn trace_satisfies_recursion() {
    let mut r = rng(2);
    let g = Grid::line(6);
    let net = random_net(&mut r, blend(g, 0.3), &[2, 3, 2]);
    let x = random_signal(&mut r, g, 2);
    let t = forward(&net, &x).unwrap();
    let pooled = net.pooling.apply(&t.pre_activations[0]).unwrap();
    assert!(pooled.max_abs_diff(&t.pooled[0]) < 1e-12);
    for (a, p) in t.activations[0].data().iter().zip(pooled.data()) {
        assert!((a - p.max(0.0)).abs() < 1e-12);
    }
    assert_eq!(t.output(), &t.pre_activations[1]);
    assert_eq!(t.relu_masks.len(), 1);
}

#[test]
fn single_impulse_layer_is_identity() {
    let g = Grid::square(3);
    let net = NetworkParams::new(blend(g, 0.7), vec![ConvFilter::impulse(g, 2)]).unwrap();
    let x = random_signal(&mut rng(3), g, 2);
    assert!(evaluate(&net, &x).unwrap().max_abs_diff(&x) < 1e-14);
}

#[test]
fn forward_is_translation_equivariant() {
    let mut r = rng(4);
    for trial in 0..200 {
        let grid = if trial % 2 == 0 { Grid::line(7) } else { Grid::square(4) };
        let net = random_net(&mut r, blend(grid, 0.4), &[2, 3, 2]);
        let x = random_signal(&mut r, grid, 2);
        let p = trial % grid.pixels();
        let a = evaluate(&net, &x.translate(p)).unwrap();
        let b = evaluate(&net, &x).unwrap().translate(p);
        assert!(a.max_abs_diff(&b) < 1e-9);
    }
}

fn mse_targets(r: &mut rand_chacha::ChaCha8Rng, grid: Grid, c: usize, count: usize) -> (Vec<Signal>, Targets) {
    let xs = (0..count).map(|_| random_signal(r, grid, c)).collect();
    let ys = (0..count).map(|_| random_signal(r, grid, c)).collect();
    (xs, Targets::Signals(ys))
}

#[test]
fn gradients_match_central_differences() {
    let mut r = rng(5);
    let g = Grid::line(4);
    let net = random_net(&mut r, blend(g, 0.5), &[3, 3, 3, 3]);
    let (xs, ts) = mse_targets(&mut r, g, 3, 3);
    let cfg = TrainConfig {
        lambda: 0.01,
        ..TrainConfig::default()
    };
    let (_, grad) = loss_and_gradients(&net, &xs, &ts, &cfg).unwrap();
    let theta = net.to_flat();
    let gflat = grad.to_flat();
    let h = 1e-6;
    let mut work = net.clone();
    for i in 0..theta.len() {
        let mut tp = theta.clone();
        tp[i] += h;
        work.set_flat(&tp).unwrap();
        let up = objective(&work, &xs, &ts, &cfg).unwrap().objective;
        tp[i] -= 2.0 * h;
        work.set_flat(&tp).unwrap();
        let dn = objective(&work, &xs, &ts, &cfg).unwrap().objective;
        let fd = (up - dn) / (2.0 * h);
        assert!(
            (fd - gflat[i]).abs() <= 1e-6 * fd.abs().max(gflat[i].abs()).max(1.0),
            "param {i}: fd {fd} vs {}",
            gflat[i]
        );
    }
}

#[test]
fn softmax_gradients_match_central_differences() {
    let mut r = rng(6);
    let pool = PoolingSpec::identity(Grid::square(4));
    let widths = [1, 3, 3, 4];
    let net = NetworkParams::random_with_downsampling(pool, &widths, &[1, 2, 1], 1.0, 9).unwrap();
    let xs: Vec<Signal> = (0..4).map(|_| random_signal(&mut r, Grid::square(4), 1)).collect();
    let ts = Targets::Labels {
        labels: vec![0, 3, 1, 2],
        classes: 4,
    };
    let cfg = TrainConfig {
        lambda: 0.003,
        loss: LossKind::SoftmaxXent,
        ..TrainConfig::default()
    };
    let (_, grad) = loss_and_gradients(&net, &xs, &ts, &cfg).unwrap();
    let theta = net.to_flat();
    let gflat = grad.to_flat();
    let mut work = net.clone();
    for i in 0..theta.len() {
        let mut tp = theta.clone();
        tp[i] += 1e-6;
        work.set_flat(&tp).unwrap();
        let up = objective(&work, &xs, &ts, &cfg).unwrap().objective;
        tp[i] -= 2e-6;
        work.set_flat(&tp).unwrap();
        let dn = objective(&work, &xs, &ts, &cfg).unwrap().objective;
        let fd = (up - dn) / 2e-6;
        assert!((fd - gflat[i]).abs() <= 1e-6 * fd.abs().max(1.0), "param {i}");
    }
}

#[test]
fn zero_problem_has_zero_gradient() {
    let g = Grid::line(4);
    let net = NetworkParams::random(PoolingSpec::identity(g), &[2, 2, 2], 1.0, 0)
        .unwrap()
        .zeros_like();
    let xs = vec![random_signal(&mut rng(7), g, 2)];
    let ts = Targets::Signals(vec![Signal::zeros(g, 2)]);
    let cfg = TrainConfig {
        lambda: 0.0,
        ..TrainConfig::default()
    };
    let (v, grad) = loss_and_gradients(&net, &xs, &ts, &cfg).unwrap();
    assert_eq!(v.objective, 0.0);
    assert!(grad.to_flat().iter().all(|&v| v == 0.0));
}

#[test]
fn pure_regularizer_gradient() {
    let mut r = rng(8);
    let g = Grid::line(4);
    let net = random_net(&mut r, blend(g, 0.2), &[2, 2, 2]);
    let xs: Vec<Signal> = (0..2).map(|_| random_signal(&mut r, g, 2)).collect();
    let ys = evaluate_batch(&net, &xs).unwrap();
    let lambda = 0.25;
    let cfg = TrainConfig {
        lambda,
        ..TrainConfig::default()
    };
    let (v, grad) = loss_and_gradients(&net, &xs, &Targets::Signals(ys), &cfg).unwrap();
    assert!(v.data_loss < 1e-28);
    for (gf, f) in grad.layers.iter().zip(&net.layers) {
        let n = f.grid().pixels() as f64;
        for (a, w) in gf.weights().iter().zip(f.weights()) {
            assert!((a - 2.0 * lambda * n * w).abs() < 1e-12);
        }
        for (a, b) in gf.bias().iter().zip(f.bias()) {
            assert!((a - 2.0 * lambda * b).abs() < 1e-12);
        }
    }
}

#[test]
fn input_jacobian_matches_finite_differences() {
    let mut r = rng(9);
    let g = Grid::line(8);
    let mut checked = 0;
    while checked < 5 {
        let net = random_net(&mut r, blend(g, 0.5), &[2, 3, 3, 2]);
        let x = random_signal(&mut r, g, 2);
        if direct_min_pooled(&net, &x) < 1e-4 {
            continue;
        }
        let jac = input_jacobian(&net, &x).unwrap();
        assert!(!jac.near_kink);
        let fd = fd_jacobian(
            |v| direct_forward(&net, &Signal::new(g, 2, v.to_vec()).unwrap()),
            x.data(),
            1e-6,
        );
        let err = (&jac.matrix - &fd).norm() / fd.norm();
        assert!(err < 1e-5, "relative error {err}");
        checked += 1;
    }
}

#[test]
fn jacobian_is_product_of_layer_factors() {
    let mut r = rng(10);
    let g = Grid::line(6);
    let net = random_net(&mut r, blend(g, 0.5), &[2, 4, 3, 2]);
    let x = random_signal(&mut r, g, 2);
    let trace = forward(&net, &x).unwrap();
    let f = layer_jacobians(&net, &trace).unwrap();
    let chain = &f[2] * (&f[1] * &f[0]);
    assert_eq!(chain, input_jacobian(&net, &x).unwrap().matrix);
}

#[test]
fn constant_inputs_commute_with_pooling() {
    let mut r = rng(11);
    for grid in [Grid::line(8), Grid::square(4)] {
        let net = random_net(&mut r, blend(grid, 0.5), &[2, 3, 3, 2]);
        let x0 = Signal::constant(grid, &[0.7, -0.4]);
        let interleaved = input_jacobian(&net, &x0).unwrap().matrix;
        let factored = constant_input_jacobian_factored(&net, &x0).unwrap();
        assert!((&interleaved - &factored).norm() < 1e-9);
        let svd = constant_input_jacobian_svd(&net, &x0).unwrap();
        assert!((svd.reconstruct() - &interleaved).norm() < 1e-9);
    }
}

#[test]
fn frequency_jacobian_refuses_nonconstant_probe() {
    let mut r = rng(12);
    let g = Grid::line(4);
    let net = random_net(&mut r, blend(g, 0.5), &[1, 2, 1]);
    let x = random_signal(&mut r, g, 1);
    assert!(constant_input_jacobian_svd(&net, &x).is_err());
}

/// Output derivative with respect to one entry of a dense layer matrix or a
/// per-pixel bias, by central differences on a dense reference network.
fn dense_parameter_ntk(net: &NetworkParams, x: &Signal) -> f64 {
    use cbn_core::linalg::te_matrix;
    let g = net.input_grid();
    let depth = net.depth();
    let mats: Vec<nalgebra::DMatrix<f64>> = net.layers.iter().map(|f| te_matrix(f).dense).collect();
    let biases: Vec<Vec<f64>> = net
        .layers
        .iter()
        .map(|f| (0..g.pixels()).flat_map(|_| f.bias().to_vec()).collect())
        .collect();
    let run = |mats: &[nalgebra::DMatrix<f64>], biases: &[Vec<f64>]| -> Vec<f64> {
        let mut a = nalgebra::DVector::from_column_slice(x.data());
        for l in 0..depth {
            let pre = &mats[l] * &a + nalgebra::DVector::from_column_slice(&biases[l]);
            a = if l + 1 < depth {
                let c = net.layers[l].c_out();
                let pooled = direct_pool(g, &net.pooling.m, pre.as_slice(), c);
                nalgebra::DVector::from_iterator(pooled.len(), pooled.into_iter().map(|v| v.max(0.0)))
            } else {
                pre
            };
        }
        a.as_slice().to_vec()
    };
    let h = 1e-4;
    let mut total = 0.0;
    for l in 0..depth {
        for idx in 0..mats[l].len() {
            let mut m = mats.clone();
            m[l].as_mut_slice()[idx] += h;
            let up = run(&m, &biases);
            m[l].as_mut_slice()[idx] -= 2.0 * h;
            let dn = run(&m, &biases);
            total += up.iter().zip(&dn).map(|(a, b)| ((a - b) / (2.0 * h)).powi(2)).sum::<f64>();
        }
        for idx in 0..biases[l].len() {
            let mut b = biases.clone();
            b[l][idx] += h;
            let up = run(&mats, &b);
            b[l][idx] -= 2.0 * h;
            let dn = run(&mats, &b);
            total += up.iter().zip(&dn).map(|(a, b)| ((a - b) / (2.0 * h)).powi(2)).sum::<f64>();
        }
    }
    total
}

#[test]
fn ntk_trace_matches_brute_force() {
    let mut r = rng(13);
    let g = Grid::line(4);
    let mut checked = 0;
    while checked < 4 {
        let net = random_net(&mut r, blend(g, 0.5), &[1, 2, 2, 1]);
        let x = random_signal(&mut r, g, 1);
        if direct_min_pooled(&net, &x) < 1e-2 {
            continue;
        }
        let a = ntk_trace(&net, &x).unwrap();
        let b = dense_parameter_ntk(&net, &x);
        assert!(rel_err(a, b) < 1e-8, "{a} vs {b}");
        checked += 1;
    }
}

#[test]
fn ntk_of_single_linear_layer() {
    let mut r = rng(14);
    let g = Grid::line(5);
    let net = random_net(&mut r, PoolingSpec::identity(g), &[2, 3]);
    let x = random_signal(&mut r, g, 2);
    let expect = (x.norm_sq() + 1.0) * 5.0 * 3.0;
    assert!(rel_err(ntk_trace(&net, &x).unwrap(), expect) < 1e-12);
}

#[test]
fn training_fits_linear_regression_and_regularizer_shrinks_norm() {
    let mut r = rng(15);
    let g = Grid::line(8);
    let teacher = random_net(&mut r, PoolingSpec::identity(g), &[2, 2]);
    let xs: Vec<Signal> = (0..12).map(|_| random_signal(&mut r, g, 2)).collect();
    let ys = Targets::Signals(evaluate_batch(&teacher, &xs).unwrap());
    let init = NetworkParams::random(PoolingSpec::identity(g), &[2, 2], 0.5, 3).unwrap();
    let cfg = TrainConfig {
        lambda: 0.0,
        lr: 0.02,
        steps: 1500,
        optimizer: Optimizer::GdMomentum { mu: 0.9 },
        ..TrainConfig::default()
    };
    let (free, hist) = train(&init, &xs, &ys, &cfg).unwrap();
    assert!(hist.last().unwrap().data_loss < 1e-10);
    let reg = TrainConfig { lambda: 0.05, ..cfg.clone() };
    let (shrunk, _) = train(&init, &xs, &ys, &reg).unwrap();
    assert!(shrunk.norm_sq() < free.norm_sq());
    let (again, _) = train(&init, &xs, &ys, &reg).unwrap();
    assert_eq!(again, shrunk);
}

#[test]
fn divergence_is_reported() {
    let mut r = rng(16);
    let g = Grid::line(4);
    let net = random_net(&mut r, PoolingSpec::identity(g), &[1, 2, 1]);
    let (xs, ts) = mse_targets(&mut r, g, 1, 2);
    let cfg = TrainConfig {
        lr: 50.0,
        steps: 500,
        optimizer: Optimizer::Gd,
        ..TrainConfig::default()
    };
    let err = train(&net, &xs, &ts, &cfg).unwrap_err();
    assert!(matches!(
        err,
        cbn_core::Error::Diverged { .. } | cbn_core::Error::NonFinite { .. }
    ));
}

#[test]
fn balanced_equal_layers_have_zero_residual() {
    let g = Grid::line(4);
    let f = ConvFilter::impulse(g, 2);
    let net = NetworkParams::new(PoolingSpec::identity(g), vec![f.clone(), f.clone(), f]).unwrap();
    assert_eq!(balancedness_residuals(&net).unwrap(), vec![0.0, 0.0]);
}
