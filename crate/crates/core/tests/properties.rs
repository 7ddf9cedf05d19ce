//! Property tests for the algebraic invariants of the core crate.

use std::sync::Arc;

use proptest::prelude::*;
use twoscale_core::ergodics::AveragedCoeffs;
use twoscale_core::integrator::simulate_coupled;
use twoscale_core::khasminskii::*;
use twoscale_core::linalg::{frobenius, sqrt_spd};
use twoscale_core::model::*;
use twoscale_core::rng::StreamSeed;
use twoscale_core::spectral::*;
use twoscale_core::stats::Welford;
use twoscale_core::FieldCoeffs;

fn coeffs(n: usize) -> impl Strategy<Value = Vec<f64>> {
    prop::collection::vec(-5.0..5.0f64, n)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn grid_round_trip_and_parseval(n in 1usize..24, factor in 1usize..4, seed in coeffs(24)) {
        let t = SineTransform::new(n, factor * n, core::f64::consts::PI).unwrap();
        let u = FieldCoeffs::from_vec(seed[..n].to_vec());
        let g = t.to_grid(&u).unwrap();
        let back = t.from_grid(&g).unwrap();
        let err: f64 = u.iter().zip(back.iter()).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
        prop_assert!(err <= 1e-12 * (1.0 + u.norm()));
        prop_assert!((g.l2_norm() - u.norm()).abs() <= 1e-10 * (1.0 + u.norm()));
    }

    #[test]
    fn semigroup_property(t in 0.0..2.0f64, s in 0.0..2.0f64, seed in coeffs(8)) {
        let b = build_basis(BasisKind::DirichletLaplacian, 8, core::f64::consts::PI, 0.0).unwrap();
        let u = FieldCoeffs::from_vec(seed);
        let once = apply_semigroup(&b, &u, t + s).unwrap();
        let twice = apply_semigroup(&b, &apply_semigroup(&b, &u, s).unwrap(), t).unwrap();
        for (a, c) in once.iter().zip(twice.iter()) {
            prop_assert!((a - c).abs() <= 1e-13 * (1.0 + a.abs()));
        }
        prop_assert!(once.norm() <= u.norm() * (-(t + s)).exp() * (1.0 + 1e-12));
    }

    #[test]
    fn m0_is_monotone(l1 in 0.0..0.99f64, dl in 0.0..0.5f64, g1 in 0.0..1.0f64, dg in 0.0..1.0f64) {
        let m = CatalogModel::Bistable.build(&BasisParams::default().with_modes(16)).unwrap();
        let report = check_hypothesis_h1(m.slow(), m.fast(), (0.75, 0.75), (Exponent::Infinite, Exponent::Infinite)).unwrap();
        let base = m0_from_constants(l1, g1, &report).unwrap().m0;
        prop_assert!(m0_from_constants(l1 + dl, g1, &report).unwrap().m0 >= base);
        prop_assert!(m0_from_constants(l1, g1 + dg, &report).unwrap().m0 >= base);
    }

    #[test]
    fn sqrt_spd_reconstructs(entries in prop::collection::vec(-3.0..3.0f64, 25)) {
        let n = 5;
        let a: Vec<Vec<f64>> = (0..n)
            .map(|i| (0..n).map(|j| (0..n).map(|k| entries[k * n + i] * entries[k * n + j]).sum::<f64>() + if i == j { 1e-3 } else { 0.0 }).collect())
            .collect();
        let r = sqrt_spd(&a).unwrap();
        let resid: Vec<Vec<f64>> = (0..n).map(|i| (0..n).map(|j| (0..n).map(|k| r[i][k] * r[k][j]).sum::<f64>() - a[i][j]).collect()).collect();
        prop_assert!(frobenius(&resid) <= 1e-10 * frobenius(&a));
    }

    #[test]
    fn partition_algebra(eps in 1e-4..0.3f64, k1 in 0.1..2.0f64, k2 in 0.1..3.0f64, max_dt in 1e-5..1e-3f64) {
        let t_end = 100.0;
        let p = build_partition(eps, k1, k2, t_end).unwrap();
        prop_assert!((p.delta / eps - p.zeta).abs() <= 1e-12 * p.zeta);
        prop_assert!((p.zeta - (k2 * (1.0 / eps).ln()).powf(k1)).abs() <= 1e-12 * p.zeta);
        prop_assert_eq!(build_partition(eps, k1, k2, t_end).unwrap(), p);
        prop_assert!(p.intervals as f64 * p.delta >= t_end);
        let dt = p.aligned_dt(max_dt);
        prop_assert!(dt <= max_dt * (1.0 + 1e-12));
        prop_assert!(p.steps_per_block(dt).is_ok());
    }

    #[test]
    fn welford_matches_two_pass(xs in prop::collection::vec(-1e3..1e3f64, 2..200)) {
        let w: Welford = xs.iter().copied().collect();
        let n = xs.len() as f64;
        let mean = xs.iter().sum::<f64>() / n;
        let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0);
        prop_assert!((w.mean() - mean).abs() <= 1e-9 * (1.0 + mean.abs()));
        prop_assert!((w.variance() - var).abs() <= 1e-9 * (1.0 + var));
    }

    #[test]
    fn generator_matches_finite_differences(x in coeffs(4), y in coeffs(4), c in prop::collection::vec(-1.0..1.0f64, 2)) {
        let m = CatalogModel::Bistable.build(&BasisParams::default().with_modes(4)).unwrap();
        let bump = GaussianBump { center: c, width: 1.5 };
        let anchors = vec![FieldCoeffs::unit(4, 1), FieldCoeffs::unit(4, 2)];
        let phi = CylindricalFn::new(Arc::new(bump), anchors, 4).unwrap();
        let (x, y) = (FieldCoeffs::from_vec(x), FieldCoeffs::from_vec(y));
        let exact = eval_l_sl_with(&phi, &m, &x, &y, Derivatives::Exact).unwrap();
        let fd = eval_l_sl_with(&phi, &m, &x, &y, Derivatives::FiniteDifference(1e-4)).unwrap();
        prop_assert!((exact - fd).abs() <= 1e-6 * (1.0 + exact.abs()), "{} vs {}", exact, fd);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(12))]

    #[test]
    fn remainder_is_linear_in_h(a in -3.0..3.0f64, h1 in coeffs(4), h2 in coeffs(4), seed in 0u64..1000) {
        let n = 4;
        let m = CatalogModel::LinearTestModel(LinearParams::default()).build(&BasisParams::default().with_modes(n)).unwrap();
        let avg = AveragedCoeffs::analytic(&m).unwrap();
        let tr = simulate_coupled(&m, &FieldCoeffs::unit(n, 1), &FieldCoeffs::zeros(n), 0.05, 0.2, 5e-3, false, StreamSeed::root(seed)).unwrap();
        let (h1, h2) = (FieldCoeffs::from_vec(h1), FieldCoeffs::from_vec(h2));
        let combo = FieldCoeffs::from_vec(h1.iter().zip(h2.iter()).map(|(p, q)| a * p + q).collect());
        let r1 = remainder_path(&m, &tr, &avg, &h1).unwrap();
        let r2 = remainder_path(&m, &tr, &avg, &h2).unwrap();
        let rc = remainder_path(&m, &tr, &avg, &combo).unwrap();
        for ((x, y), z) in r1.iter().zip(&r2).zip(&rc) {
            prop_assert!((a * x + y - z).abs() <= 1e-10 * (1.0 + z.abs()));
        }
    }
}
