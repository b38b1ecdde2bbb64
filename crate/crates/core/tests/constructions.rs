mod common;

use cbn_core::bounds::cbn_upper_bound;
use cbn_core::constructions::*;
use cbn_core::fourier::{DftPlan, Grid};
use cbn_core::harness::data::{bump, gen_translated_bumps};
use cbn_core::linalg::{te_matrix, ConvFilter, PoolingSpec, Signal};
use cbn_core::network::{evaluate, NetworkParams};
use cbn_core::Error;
use common::*;
use proptest::prelude::*;
use rand::Rng;

fn bounded_signal(r: &mut rand_chacha::ChaCha8Rng, g: Grid, c: usize, k: f64) -> Signal {
    Signal::new(g, c, (0..g.pixels() * c).map(|_| r.random_range(-k..k)).collect()).unwrap()
}

#[test]
fn identity_network_with_identity_pooling_has_norm_depth_c_n() {
    let g = Grid::line(2);
    let pool = PoolingSpec::identity(g);
    let net = identity_network(3, 5, &pool, 0.0).unwrap();
    assert_eq!(net.weight_norm_sq(), 30.0);
    assert_eq!(net.norm_sq(), 5.0 * 3.0 * pool.m_bar);
    let x = random_signal(&mut rng(1), g, 3).scaled(0.0);
    assert_eq!(evaluate(&net, &x).unwrap(), x);
}

#[test]
fn identity_network_reproduces_bounded_inputs() {
    let mut r = rng(2);
    for (g, beta) in [(Grid::line(8), 0.5), (Grid::line(7), 0.3), (Grid::square(4), 0.5)] {
        let pool = blend(g, beta);
        for depth in [1, 2, 4] {
            let net = identity_network(2, depth, &pool, 1.5).unwrap();
            for _ in 0..20 {
                let x = bounded_signal(&mut r, g, 2, 1.5);
                let y = evaluate(&net, &x).unwrap();
                assert!(y.max_abs_diff(&x) <= 1e-8, "depth {depth}: {}", y.max_abs_diff(&x));
            }
        }
    }
}

#[test]
fn identity_network_norm_matches_accounting() {
    let g = Grid::line(8);
    let pool = blend(g, 0.5);
    for depth in 1..6 {
        let net = identity_network(3, depth, &pool, 2.0).unwrap();
        let acc = identity_accounting(3, depth, &pool, 2.0).unwrap();
        assert!(rel_err(net.norm_sq(), acc.total) < 1e-12);
        assert!(rel_err(net.weight_norm_sq(), acc.weights) < 1e-12);
        // Each hidden layer costs exactly c M_bar.
        for f in &net.layers[..depth - 1] {
            assert!(rel_err(f.matrix_norm_sq(), 3.0 * pool.m_bar) < 1e-12);
        }
    }
}

#[test]
fn identity_network_rejects_singular_pooling() {
    let g = Grid::line(3);
    let pool = blend(g, 1.0);
    assert!(!pool.invertible);
    assert!(matches!(
        identity_network(1, 3, &pool, 1.0),
        Err(Error::NonInvertiblePooling { .. })
    ));
}

#[test]
fn support_identity_layers_keep_supported_signals() {
    let g = Grid::line(8);
    let pool = blend(g, 0.5);
    let sets = vec![vec![0, 1], vec![0, 2]];
    let net = support_identity_network(&sets, 4, &pool, 3.0).unwrap();
    let x = Signal::from_fn(g, 2, |i, k| {
        let f = if k == 0 { 1.0 } else { 2.0 };
        0.5 + (2.0 * std::f64::consts::PI * f * i as f64 / 8.0).cos()
    });
    assert!(evaluate(&net, &x).unwrap().max_abs_diff(&x) < 1e-9);
    let per_layer: f64 = sets
        .iter()
        .map(|s| conjugate_closure(&pool, s).iter().map(|&t| pool.inv_sq(t)).sum::<f64>())
        .sum();
    assert!(rel_err(net.layers[1].matrix_norm_sq(), per_layer) < 1e-12);
    assert!(support_identity_network(&[vec![1]], 3, &pool, 1.0).is_err());
}

#[test]
fn parallel_sum_adds_functions_and_norms() {
    let mut r = rng(3);
    let g = Grid::line(6);
    let pool = blend(g, 0.4);
    let a = random_net(&mut r, pool.clone(), &[2, 3, 4, 1]);
    let b = random_net(&mut r, pool.clone(), &[2, 2, 5, 1]);
    let s = parallel_sum(&a, &b).unwrap();
    assert_eq!(s.widths(), vec![2, 5, 9, 1]);
    for _ in 0..100 {
        let x = random_signal(&mut r, g, 2);
        let want = evaluate(&a, &x).unwrap().add(&evaluate(&b, &x).unwrap()).unwrap();
        assert!(evaluate(&s, &x).unwrap().max_abs_diff(&want) < 1e-12);
    }
    assert!(rel_err(s.weight_norm_sq(), a.weight_norm_sq() + b.weight_norm_sq()) < 1e-14);
    let (ba, bb) = (a.layers[2].bias()[0], b.layers[2].bias()[0]);
    assert!((s.norm_sq() - (a.norm_sq() + b.norm_sq() + 2.0 * ba * bb)).abs() < 1e-12);
}

#[test]
fn parallel_sum_with_zero_and_self() {
    let mut r = rng(4);
    let g = Grid::line(5);
    let pool = blend(g, 0.6);
    let a = random_net(&mut r, pool.clone(), &[1, 3, 2]);
    let zero = a.zeros_like();
    let s = parallel_sum(&a, &zero).unwrap();
    assert_eq!(s.norm_sq(), a.norm_sq());
    let twice = parallel_sum(&a, &a).unwrap();
    for _ in 0..100 {
        let x = random_signal(&mut r, g, 1);
        let fa = evaluate(&a, &x).unwrap();
        assert!(evaluate(&s, &x).unwrap().max_abs_diff(&fa) < 1e-12);
        assert!(evaluate(&twice, &x).unwrap().max_abs_diff(&fa.scaled(2.0)) < 1e-12);
    }
    let other = random_net(&mut r, pool, &[1, 2]);
    assert!(matches!(parallel_sum(&a, &other), Err(Error::Dimension(_))));
}

#[test]
fn compose_evaluates_second_after_first() {
    let mut r = rng(5);
    let g = Grid::line(8);
    let pool = blend(g, 0.5);
    let first = random_net(&mut r, pool.clone(), &[2, 3, 2]);
    let second = random_net(&mut r, pool.clone(), &[2, 4, 1]);
    let xs: Vec<Signal> = (0..50).map(|_| random_signal(&mut r, g, 2)).collect();
    let bound = xs
        .iter()
        .map(|x| -evaluate(&first, x).unwrap().min_value())
        .fold(0.0f64, f64::max);
    let (net, acc) = compose(&first, &second, bound).unwrap();
    assert_eq!(net.depth(), 4);
    for x in &xs {
        let want = evaluate(&second, &evaluate(&first, x).unwrap()).unwrap();
        assert!(evaluate(&net, x).unwrap().max_abs_diff(&want) < 1e-9);
    }
    assert!(rel_err(net.norm_sq(), acc.total) < 1e-9);
}

#[test]
fn compose_with_identity_adds_c_mbar_per_layer() {
    let mut r = rng(6);
    let g = Grid::line(8);
    let pool = PoolingSpec::identity(g);
    let f = random_net(&mut r, pool.clone(), &[1, 3, 2]);
    let xs: Vec<Signal> = (0..30).map(|_| random_signal(&mut r, g, 1)).collect();
    let mut prev: Option<f64> = None;
    for depth in 2..6 {
        let id = identity_network(1, depth, &pool, 1.0).unwrap();
        let (net, _) = compose(&id, &f, 1.0).unwrap();
        for x in &xs {
            assert!(evaluate(&net, x).unwrap().max_abs_diff(&evaluate(&f, x).unwrap()) < 1e-12);
        }
        if let Some(p) = prev {
            assert!((net.norm_sq() - p - pool.m_bar).abs() < 1e-9);
        }
        prev = Some(net.norm_sq());
    }
}

#[test]
fn composing_two_linear_layers_multiplies_te_matrices() {
    let mut r = rng(7);
    let g = Grid::line(5);
    let pool = PoolingSpec::identity(g);
    let a = random_filter(&mut r, g, 2, 2).with_bias(vec![0.0; 2]).unwrap();
    let b = random_filter(&mut r, g, 1, 2).with_bias(vec![0.0]).unwrap();
    let na = NetworkParams::new(pool.clone(), vec![a.clone()]).unwrap();
    let nb = NetworkParams::new(pool, vec![b.clone()]).unwrap();
    let x = random_signal(&mut r, g, 2);
    let bound = -evaluate(&na, &x).unwrap().min_value().min(0.0);
    let (net, _) = compose(&na, &nb, bound).unwrap();
    let prod = &te_matrix(&b).dense * &te_matrix(&a).dense;
    let want = &prod * nalgebra::DVector::from_column_slice(x.data());
    let got = evaluate(&net, &x).unwrap();
    for (u, v) in got.data().iter().zip(want.iter()) {
        assert!((u - v).abs() < 1e-10);
    }
}

#[test]
fn witness_accounting_has_linear_middle_term() {
    let mut r = rng(8);
    let g = Grid::line(8);
    for pool in [blend(g, 0.5), PoolingSpec::identity(g)] {
        let gnet = random_net(&mut r, pool.clone(), &[1, 3, 2]);
        let hnet = random_net(&mut r, pool.clone(), &[2, 3, 1]);
        let xs: Vec<Signal> = (0..30).map(|_| random_signal(&mut r, g, 1)).collect();
        let bound = xs
            .iter()
            .map(|x| -evaluate(&gnet, x).unwrap().min_value())
            .fold(0.0f64, f64::max);
        let mut glue: Option<f64> = None;
        for middle in [1, 2, 5] {
            let (net, acc) = bottleneck_witness(&gnet, &hnet, middle, bound).unwrap();
            assert_eq!(net.depth(), 4 + middle);
            assert!(rel_err(net.norm_sq(), acc.total) < 1e-9);
            assert!((acc.middle_per_layer - 2.0 * pool.m_bar).abs() < 1e-12);
            for x in &xs {
                let want = evaluate(&hnet, &evaluate(&gnet, x).unwrap()).unwrap();
                assert!(evaluate(&net, x).unwrap().max_abs_diff(&want) < 1e-8);
            }
            if let Some(gl) = glue {
                assert!((acc.glue - gl).abs() < 1e-9);
            }
            glue = Some(acc.glue);
        }
    }
}

#[test]
fn fc_to_cnn_hand_built_witnesses() {
    let g = Grid::line(4);
    // Picks coordinate (pixel 0, channel 0).
    let pick = FCNetwork::new(vec![FcLayer::new(1, 8, {
        let mut a = vec![0.0; 8];
        a[0] = 1.0;
        a
    }, vec![0.0])
    .unwrap()])
    .unwrap();
    let relu = FCNetwork::new(vec![
        FcLayer::new(1, 8, {
            let mut a = vec![0.0; 8];
            a[0] = 1.0;
            a
        }, vec![-0.5])
        .unwrap(),
        FcLayer::new(1, 1, vec![1.0], vec![0.0]).unwrap(),
    ])
    .unwrap();
    let cp = fc_to_cnn(&pick, g, 2).unwrap();
    let cr = fc_to_cnn(&relu, g, 2).unwrap();
    let mut r = rng(9);
    for _ in 0..20 {
        let x = Signal::new(g, 2, (0..8).map(|_| r.random_range(0.0..1.0)).collect()).unwrap();
        let yp = evaluate(&cp, &x).unwrap();
        let yr = evaluate(&cr, &x).unwrap();
        for p in 0..4 {
            assert!((yp.get(p, 0) - x.get(p, 0)).abs() < 1e-15);
            assert!((yr.get(p, 0) - (x.get(p, 0) - 0.5).max(0.0)).abs() < 1e-15);
        }
    }
}

#[test]
fn fc_to_cnn_matches_fc_at_every_shift() {
    let mut r = rng(10);
    for (trial, g) in [Grid::line(4), Grid::line(3), Grid::square(2)].into_iter().enumerate() {
        let fc = FCNetwork::random(&[g.pixels() * 2, 6, 5, 3], trial as u64).unwrap();
        let cnn = fc_to_cnn(&fc, g, 2).unwrap();
        assert_eq!(cnn.depth(), 4);
        for _ in 0..50 {
            let x = Signal::new(g, 2, (0..g.pixels() * 2).map(|_| r.random_range(0.0..2.0)).collect()).unwrap();
            let y = evaluate(&cnn, &x).unwrap();
            for p in 0..g.pixels() {
                let want = fc.evaluate(&recentred(&x, p)).unwrap();
                for (k, w) in want.iter().enumerate() {
                    assert!((y.get(p, k) - w).abs() <= 1e-9);
                }
            }
        }
    }
}

#[test]
fn negative_domain_is_reported_with_shift() {
    let g = Grid::line(3);
    let xs = vec![
        Signal::new(g, 1, vec![0.1, 0.2, 0.3]).unwrap(),
        Signal::new(g, 1, vec![0.1, -0.7, 0.3]).unwrap(),
    ];
    match check_positive_domain(&xs) {
        Err(Error::NegativeDomain {
            sample,
            recommended_shift,
            ..
        }) => {
            assert_eq!(sample, 1);
            assert!((recommended_shift - 0.7).abs() < 1e-15);
        }
        other => panic!("unexpected {other:?}"),
    }
    assert!(check_positive_domain(&xs[..1]).is_ok());
}

#[test]
fn stride_identity_witness_is_identity_on_band_limited_inputs() {
    let g = Grid::line(8);
    let pool = blend(g, 0.5);
    let net = stride_identity_witness(2, &pool, 2, 4, 3.0).unwrap();
    let x = Signal::from_fn(g, 2, |i, k| {
        let th = 2.0 * std::f64::consts::PI * i as f64 / 8.0;
        0.3 * k as f64 + th.cos() - 0.5 * th.sin()
    });
    assert!(is_band_limited(&x, 2, 1e-12));
    assert!(net.evaluate(&x).unwrap().max_abs_diff(&x) < 1e-9);
    assert!(rel_err(
        net.norm_sq(),
        net.f1.norm_sq() + net.inner.norm_sq() + net.f2.norm_sq()
    ) < 1e-15);
}

#[test]
fn stride_network_is_only_s_equivariant() {
    let mut r = rng(11);
    let g = Grid::line(8);
    let pool = blend(g, 0.5);
    let spec = StrideSpec::new(2, &pool).unwrap();
    let f1 = random_net(&mut r, pool.clone(), &[1, 2]);
    let inner = random_net(&mut r, spec.inner_pooling.clone(), &[2, 3, 2]);
    let f2 = random_net(&mut r, pool.clone(), &[2, 1]);
    let net = stride_network(f1, inner, f2, spec).unwrap();
    let x = random_signal(&mut r, g, 1);
    let y = net.evaluate(&x).unwrap();
    for p in [2, 4, 6] {
        assert!(net.evaluate(&x.translate(p)).unwrap().max_abs_diff(&y.translate(p)) < 1e-10);
    }
    let odd = net.evaluate(&x.translate(1)).unwrap().max_abs_diff(&y.translate(1));
    assert!(odd > 1e-6, "odd shifts should break equivariance, got {odd}");
}

#[test]
fn stride_witness_norm_per_layer_approaches_inner_cost() {
    let g = Grid::line(8);
    let pool = blend(g, 0.5);
    let net = stride_identity_witness(1, &pool, 2, 32, 0.0).unwrap();
    let target = net.spec.inner_pooling.m_bar;
    let per_layer = net.norm_sq() / net.depth() as f64;
    assert!((per_layer - target).abs() / target < 0.1, "{per_layer} vs {target}");
}

#[test]
fn stride_spec_validation() {
    let pool = blend(Grid::line(9), 0.5);
    assert!(StrideSpec::new(2, &pool).is_err());
    assert!(StrideSpec::new(1, &pool).is_err());
    let spec = StrideSpec::new(3, &pool).unwrap();
    assert_eq!(spec.inner_n, 3);
}

#[test]
fn unique_embedding_recovers_every_translate() {
    let data = gen_translated_bumps(64, 16, 3, 5).unwrap();
    let g = Grid::line(16);
    let emb = unique_embedding(data.inputs.clone(), g, 1, 1.0).unwrap();
    assert_eq!(emb.inverse.depth(), 3);
    assert!(emb.max_recovery_error().unwrap() <= 1e-9);
    for a in [0, 17, 63] {
        for p in [0, 5, 15] {
            assert!(emb.off_support_magnitude(a, p).unwrap() < 1e-10);
            let y = data.inputs[a].translate(p);
            assert_eq!(emb.encode(&y).unwrap(), emb.encode_shift(a, p).unwrap());
        }
    }
}

#[test]
fn single_bump_embedding_and_support_bound() {
    let g = Grid::line(8);
    let x = bump(8, 2, 2, 1.0);
    let emb = unique_embedding(vec![x], g, 1, 1.0).unwrap();
    assert!(emb.max_recovery_error().unwrap() <= 1e-9);
    let pool = blend(g, 0.5);
    let bound = cbn_upper_bound(&emb.support().unwrap(), &pool).unwrap();
    let want = pool.inv_sq(1) + 8.0 * pool.inv_sq(0);
    assert!(rel_err(bound, want) < 1e-12);
}

#[test]
fn embedding_rejects_non_unique_domains() {
    let g = Grid::line(6);
    let c = Signal::constant(g, &[0.5]);
    assert!(matches!(
        unique_embedding(vec![c], g, 1, 1.0),
        Err(Error::NotTranslationallyUnique { first: 0, second: 0, shift: 1 })
    ));
    let x = bump(6, 1, 2, 0.8);
    match unique_embedding(vec![x.clone(), x.translate(2)], g, 1, 1.0) {
        Err(Error::NotTranslationallyUnique { first, second, shift }) => {
            assert_eq!((first, second, shift), (0, 1, 2));
        }
        other => panic!("unexpected {other:?}"),
    }
}

#[test]
fn upsample_of_downsample_on_constant_is_exact() {
    let g = Grid::line(8);
    let x = Signal::constant(g, &[1.25, -0.5]);
    let y = upsample(&downsample(&x, 2).unwrap(), 2).unwrap();
    assert!(y.max_abs_diff(&x) < 1e-14);
}

#[test]
fn aliasing_identity_on_arbitrary_signals() {
    let mut r = rng(12);
    for (n, s) in [(8, 2), (12, 3), (16, 4)] {
        let g = Grid::line(n);
        let x = random_signal(&mut r, g, 1);
        let y = downsample(&x, s).unwrap();
        let xt = DftPlan::new(g).forward_real(x.data());
        let yt = DftPlan::new(y.grid()).forward_real(y.data());
        let m = n / s;
        for i in 0..m {
            let sum: num_complex::Complex64 = (0..s).map(|j| xt[(i + j * m) % n]).sum();
            assert!((yt[i] - sum / s as f64).norm() < 1e-10);
        }
    }
}

#[test]
fn downsample_example() {
    let x = Signal::new(Grid::line(4), 1, vec![1.0, 2.0, 3.0, 4.0]).unwrap();
    assert_eq!(downsample(&x, 2).unwrap().data(), &[1.0, 3.0]);
}

#[test]
fn frequency_two_survives_round_trip() {
    let g = Grid::line(8);
    let x = Signal::from_fn(g, 1, |i, _| (2.0 * std::f64::consts::PI * 2.0 * i as f64 / 8.0).cos());
    // Frequency 2 sits at the Nyquist slot of the coarse grid, so only the
    // cosine phase survives; the sine phase aliases to zero.
    let y = upsample(&downsample(&x, 2).unwrap(), 2).unwrap();
    assert!(y.max_abs_diff(&x) < 1e-12);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn nyquist_round_trip(seed in 0u64..10_000, ni in 0usize..3, si in 0usize..2) {
        let n = [4, 8, 16][ni];
        let s = [2, 4][si];
        prop_assume!(n / s >= 1);
        let g = Grid::line(n);
        let mut r = rng(seed);
        let coarse = Grid::line(n / s);
        let small = random_signal(&mut r, coarse, 2);
        // Band-limit strictly below the coarse Nyquist frequency.
        let plan = DftPlan::new(coarse);
        let mut spec = plan.forward_channels(small.data(), 2);
        if (n / s) % 2 == 0 {
            let ny = n / s / 2;
            for k in 0..2 { spec[ny * 2 + k] = num_complex::Complex64::new(0.0, 0.0); }
        }
        let small = Signal::new(coarse, 2, plan.inverse_channels_real(&spec, 2)).unwrap();
        let x = upsample(&small, s).unwrap();
        prop_assert!(is_band_limited(&x, s, 1e-9));
        let back = upsample(&downsample(&x, s).unwrap(), s).unwrap();
        prop_assert!(back.max_abs_diff(&x) <= 1e-10);
        let _ = g;
    }

    #[test]
    fn parallel_sum_weights_are_additive(seed in 0u64..10_000) {
        let mut r = rng(seed);
        let g = Grid::line(4);
        let pool = blend(g, 0.5);
        let a = random_net(&mut r, pool.clone(), &[1, 2, 2, 1]);
        let b = random_net(&mut r, pool, &[1, 3, 1, 1]);
        let s = parallel_sum(&a, &b).unwrap();
        // Equal up to the order of floating-point summation.
        prop_assert!(rel_err(s.weight_norm_sq(), a.weight_norm_sq() + b.weight_norm_sq()) < 1e-14);
    }

    #[test]
    fn identity_layer_inverts_pooling(seed in 0u64..10_000, beta in 0.0f64..0.7) {
        let g = Grid::line(6);
        let pool = blend(g, beta);
        let f = identity_layer(&pool, 1).unwrap();
        let x = random_signal(&mut rng(seed), g, 1);
        let net = NetworkParams::new(PoolingSpec::identity(g), vec![f]).unwrap();
        let y = pool.apply(&evaluate(&net, &x).unwrap()).unwrap();
        prop_assert!(y.max_abs_diff(&x) < 1e-9);
    }
}

#[test]
fn single_layer_identity_network_is_impulse() {
    let g = Grid::line(4);
    let net = identity_network(2, 1, &blend(g, 0.5), 1.0).unwrap();
    assert_eq!(net.layers, vec![ConvFilter::impulse(g, 2)]);
}
