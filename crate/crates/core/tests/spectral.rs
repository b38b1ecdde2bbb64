mod common;

use cbn_core::fourier::Grid;
use cbn_core::linalg::*;
use common::*;
use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;
use proptest::prelude::*;
use std::f64::consts::PI;

#[test]
fn circulant_eigenvalue_examples() {
    let l = circulant_eigenvalues(&[1.0, 0.0, 0.0, 0.0]);
    assert!(l.iter().all(|z| (z - Complex64::new(1.0, 0.0)).norm() < 1e-15));

    let mut v = vec![0.0; 8];
    v[..3].fill(1.0 / 3.0);
    for (t, z) in circulant_eigenvalues(&v).iter().enumerate() {
        // Not symmetric, so only the modulus follows the cosine formula;
        // the phase is exp(2 pi i t / 8).
        let want = (1.0 + 2.0 * (2.0 * PI * t as f64 / 8.0).cos()) / 3.0;
        let phase = Complex64::from_polar(1.0, 2.0 * PI * t as f64 / 8.0);
        assert!((z - phase * want).norm() < 1e-14, "t = {t}");
    }
}

#[test]
fn eigenvalues_diagonalize_the_dense_circulant() {
    let mut r = rng(1);
    for n in [1, 2, 5, 8, 12] {
        let v = random_vec(&mut r, n);
        let f = ConvFilter::new(Grid::line(n), 1, 1, v.clone(), vec![0.0]).unwrap();
        let a = te_matrix(&f).dense.map(|x| Complex64::new(x, 0.0));
        for (t, lam) in circulant_eigenvalues(&v).iter().enumerate() {
            // Fourier vector with entries omega^{t j}.
            let u = DVector::from_fn(n, |j, _| Complex64::from_polar(1.0, 2.0 * PI * (t * j) as f64 / n as f64));
            assert!((&a * &u - &u * *lam).norm() < 1e-12);
        }
        let back = filter_from_eigenvalues(Grid::line(n), &circulant_eigenvalues(&v));
        for (x, y) in back.iter().zip(&v) {
            assert!((x - y).abs() < 1e-13);
        }
    }
}

#[test]
fn cyclic_conv_examples() {
    let b = [5.0, -1.0, 2.5, 7.0];
    assert_eq!(cyclic_conv(&[1.0, 0.0, 0.0, 0.0], &b).unwrap(), b.to_vec());
    assert_eq!(cyclic_conv(&[0.0, 1.0, 0.0, 0.0], &b).unwrap(), vec![-1.0, 2.5, 7.0, 5.0]);
    assert!(cyclic_conv(&[1.0], &b).is_err());
}

#[test]
fn cyclic_conv_matches_dense_circulant() {
    let mut r = rng(2);
    let (a, b) = (random_vec(&mut r, 16), random_vec(&mut r, 16));
    let f = ConvFilter::new(Grid::line(16), 1, 1, a.clone(), vec![0.0]).unwrap();
    let want = te_matrix(&f).dense * DVector::from_vec(b.clone());
    for (x, y) in cyclic_conv(&a, &b).unwrap().iter().zip(want.iter()) {
        assert!((x - y).abs() < 1e-12);
    }
}

#[test]
fn cross_channel_conv_matches_te_matrix() {
    let mut r = rng(3);
    for g in [Grid::line(7), Grid::square(3)] {
        let f = random_filter(&mut r, g, 3, 2);
        let x = random_signal(&mut r, g, 2);
        let y = cross_channel_conv(&f, &x).unwrap();
        let want = te_matrix(&f).dense * DVector::from_column_slice(x.data());
        for (a, b) in y.data().iter().zip(want.iter()) {
            assert!((a - b).abs() < 1e-12);
        }
        let id = ConvFilter::impulse(g, 2);
        assert_eq!(cross_channel_conv(&id, &x).unwrap().data(), x.data());
    }
}

#[test]
fn te_matrix_of_two_point_filter() {
    let f = ConvFilter::new(Grid::line(2), 1, 1, vec![3.0, -2.0], vec![0.0]).unwrap();
    let w = te_matrix(&f).dense;
    assert_eq!(w, DMatrix::from_row_slice(2, 2, &[3.0, -2.0, -2.0, 3.0]));
    let id = te_matrix(&ConvFilter::impulse(Grid::line(5), 3)).dense;
    assert_eq!(id, DMatrix::identity(15, 15));
}

#[test]
fn frequency_blocks_hold_eigenvalues_of_each_tap() {
    let mut r = rng(4);
    let g = Grid::line(6);
    let f = random_filter(&mut r, g, 2, 3);
    let blocks = frequency_blocks(&f);
    for k in 0..2 {
        for s in 0..3 {
            let lam = circulant_eigenvalues(&f.tap(k, s));
            for t in 0..6 {
                assert!((blocks[t][(k, s)] - lam[t]).norm() < 1e-13);
            }
        }
    }
    let single = random_filter(&mut r, g, 1, 1);
    let lam = circulant_eigenvalues(single.weights());
    for (t, b) in frequency_blocks(&single).iter().enumerate() {
        assert!((b[(0, 0)] - lam[t]).norm() < 1e-13);
    }
}

#[test]
fn frequency_svd_reconstructs_and_matches_dense() {
    let mut r = rng(5);
    let f = random_filter(&mut r, Grid::line(8), 3, 3);
    let svd = frequency_svd(&f);
    let dense = te_matrix(&f).dense;
    assert!((svd.reconstruct() - &dense).amax() < 1e-9);
    let mut fast = svd.values_sorted();
    fast.sort_by(|a, b| b.total_cmp(a));
    for (a, b) in fast.iter().zip(dense_singular_values(&dense)) {
        assert!((a - b).abs() < 1e-9);
    }
    for comp in &svd.components {
        assert!(comp.values.windows(2).all(|w| w[0] >= w[1]));
    }
}

#[test]
fn pooling_filter_spectrum_is_eigenvalue_modulus() {
    let g = Grid::line(8);
    let p = blend(g, 0.4);
    let f = ConvFilter::new(g, 1, 1, p.m.clone(), vec![0.0]).unwrap();
    for comp in &frequency_svd(&f).components {
        assert!((comp.values[0] - p.abs(comp.freq)).abs() < 1e-14);
    }
    assert!(frequency_svd(&ConvFilter::zeros(g, 2, 2)).values_sorted().iter().all(|&v| v == 0.0));
}

#[test]
fn block_diagonal_filter_concatenates_spectra() {
    let mut r = rng(6);
    let g = Grid::line(5);
    let a = random_filter(&mut r, g, 1, 1);
    let b = random_filter(&mut r, g, 1, 1);
    let both = ConvFilter::from_fn(g, 2, 2, |j, k, s| match (k, s) {
        (0, 0) => a.w(j, 0, 0),
        (1, 1) => b.w(j, 0, 0),
        _ => 0.0,
    });
    let mut want: Vec<f64> = frequency_svd(&a)
        .values_sorted()
        .into_iter()
        .chain(frequency_svd(&b).values_sorted())
        .collect();
    want.sort_by(|x, y| y.total_cmp(x));
    let mut got = frequency_svd(&both).values_sorted();
    got.sort_by(|x, y| y.total_cmp(x));
    for (x, y) in got.iter().zip(&want) {
        assert!((x - y).abs() < 1e-12);
    }
}

#[test]
fn pseudo_det_matches_dense_determinant() {
    let mut r = rng(7);
    let f = random_filter(&mut r, Grid::line(4), 2, 2);
    let det = te_matrix(&f).dense.determinant().abs();
    assert!(rel_err(pseudo_det(&frequency_svd(&f), 1e-12), det) < 1e-6);
    let id = ConvFilter::impulse(Grid::line(4), 2);
    assert!((pseudo_det(&frequency_svd(&id), 1e-6) - 1.0).abs() < 1e-14);
    assert_eq!(pseudo_det(&frequency_svd(&ConvFilter::zeros(Grid::line(3), 1, 1)), 1e-6), 1.0);
}

#[test]
fn pooling_operator_examples() {
    let id = pooling_operator(PoolingKind::Identity, Grid::line(6)).unwrap();
    assert!(id.m_tilde.iter().all(|z| (z - Complex64::new(1.0, 0.0)).norm() < 1e-15));
    assert!((id.m_bar - 6.0).abs() < 1e-14);

    let p = pooling_operator(PoolingKind::BlendAvg3 { beta: 0.5 }, Grid::line(8)).unwrap();
    for t in 0..8 {
        let want = 0.5 + 0.5 * (1.0 + 2.0 * (2.0 * PI * t as f64 / 8.0).cos()) / 3.0;
        assert!((p.abs(t) - want.abs()).abs() < 1e-14);
    }
    let zero = pooling_operator(PoolingKind::BlendAvg3 { beta: 0.0 }, Grid::line(8)).unwrap();
    assert!(zero.m_tilde.iter().all(|z| (z - Complex64::new(1.0, 0.0)).norm() < 1e-15));

    assert!(matches!(
        pooling_operator(PoolingKind::BlendAvg3 { beta: 1.0 }, Grid::line(9)),
        Err(cbn_core::Error::NonInvertiblePooling { .. })
    ));
}

fn filter_strategy() -> impl Strategy<Value = ConvFilter> {
    (1usize..=8, 1usize..=3, 1usize..=3, any::<u64>()).prop_map(|(n, co, ci, seed)| {
        let mut r = rng(seed);
        random_filter(&mut r, Grid::line(n), co, ci)
    })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn te_matrix_is_shift_invariant(f in filter_strategy()) {
        prop_assert!(te_matrix(&f).is_shift_invariant(0.0));
    }

    #[test]
    fn matrix_norm_is_grid_size_times_filter_norm(f in filter_strategy()) {
        let dense = te_matrix(&f).dense.norm_squared();
        let want = f.grid().pixels() as f64 * f.weight_norm_sq();
        prop_assert!(rel_err(dense, want) < 1e-12);
    }

    #[test]
    fn conjugate_frequencies_share_singular_values(f in filter_strategy()) {
        let svd = frequency_svd(&f);
        let g = f.grid();
        for c in &svd.components {
            let other = &svd.components[g.conjugate_frequency(c.freq)];
            for (a, b) in c.values.iter().zip(&other.values) {
                prop_assert!((a - b).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn blocks_round_trip_to_filter(f in filter_strategy()) {
        let back = filter_from_blocks(f.grid(), &frequency_blocks(&f)).unwrap();
        for (a, b) in back.weights().iter().zip(f.weights()) {
            prop_assert!((a - b).abs() < 1e-12);
        }
    }
}
