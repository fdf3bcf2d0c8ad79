mod common;

use common::{random_matrix, random_spd, rng, to_na};
use mbda_core::eigen::{
    canonical_sign, solve_generalized, solve_with_config, sym_eig, weight_by_sqrt_eigenvalues,
};
use mbda_core::{EigenConfig, Matrix, Regularizer};
use proptest::prelude::*;

#[test]
fn randomized_generalized_suite() {
    let started = std::time::Instant::now();
    let summary = common::check_eigen_suite(100, 21).unwrap();
    assert!(started.elapsed().as_secs_f64() < 10.0, "{summary}");
}

#[test]
fn hand_analytic_pairs() {
    let sy = Matrix::from_rows(&[vec![3.0, 1.0], vec![1.0, 3.0]]).unwrap();
    let r = sym_eig(&sy).unwrap();
    assert!((r.eigenvalues[0] - 4.0).abs() < 1e-12 && (r.eigenvalues[1] - 2.0).abs() < 1e-12);
    let h = std::f64::consts::FRAC_1_SQRT_2;
    assert!((r.vector(0)[0] - h).abs() < 1e-12 && (r.vector(0)[1] - h).abs() < 1e-12);

    let g = solve_generalized(&sy, &Matrix::identity(2).scale(2.0), 2, 0.0).unwrap();
    assert!((g.eigenvalues[0] - 2.0).abs() < 1e-12 && (g.eigenvalues[1] - 1.0).abs() < 1e-12);
    let v1 = g.vector(1);
    assert!((v1[0].abs() - h).abs() < 1e-12 && (v1[0] + v1[1]).abs() < 1e-12);
}

#[test]
fn symmetric_reconstruction() {
    let mut r = rng(4);
    let b = random_matrix(&mut r, 10, 10);
    let s = b.add(&b.transpose()).unwrap();
    let e = sym_eig(&s).unwrap();
    let v = &e.eigenvectors;
    let rebuilt = v
        .matmul(&Matrix::diagonal(&e.eigenvalues))
        .unwrap()
        .matmul(&v.transpose())
        .unwrap();
    assert!(rebuilt.sub(&s).unwrap().frobenius_norm() <= 1e-8 * s.frobenius_norm());
}

#[test]
fn singular_right_side_matches_dense_inverse() {
    let mut r = rng(5);
    let n = 6;
    let low = random_matrix(&mut r, n, 2);
    let sx = low.matmul(&low.transpose()).unwrap();
    let sy = random_spd(&mut r, n, 0.0);
    let eps = 1e-6;
    let got = solve_generalized(&sy, &sx, n, eps).unwrap();
    assert_eq!(got.eps, eps);

    let dense = to_na(&sx.add_identity(eps)).try_inverse().unwrap() * to_na(&sy);
    let mut want: Vec<f64> = dense.complex_eigenvalues().iter().map(|c| c.re).collect();
    want.sort_by(|a, b| b.total_cmp(a));
    for (g, w) in got.eigenvalues.iter().zip(&want) {
        assert!((g - w).abs() <= 1e-6 * w.abs().max(1.0), "{g} vs {w}");
    }
    for (i, &lambda) in got.eigenvalues.iter().enumerate() {
        let a = got.vector(i);
        let lhs = sy.matvec(&a).unwrap();
        let rhs = sx.add_identity(eps).matvec(&a).unwrap();
        let res: f64 = lhs.iter().zip(&rhs).map(|(l, x)| (l - lambda * x).powi(2)).sum::<f64>().sqrt();
        let bound = sy.frobenius_norm() + lambda.abs() * sx.add_identity(eps).frobenius_norm();
        assert!(res <= 1e-8 * bound, "pair {i}: lambda {lambda:e}, residual ratio {:e}", res / bound);
    }
}

#[test]
fn auto_ridge_scales_with_positive_scatter() {
    let sx = Matrix::identity(4).scale(8.0);
    let sy = Matrix::identity(4);
    assert!((Regularizer::Auto.resolve(&sy, &sx) - 8e-6).abs() < 1e-18);
    assert!((Regularizer::Relative(0.5).resolve(&sy, &sx) - 4.0).abs() < 1e-12);
    assert_eq!(Regularizer::Fixed(0.25).resolve(&sy, &sx), 0.25);
    let zero = Matrix::zeros(4, 4);
    assert!((Regularizer::Auto.resolve(&sy, &zero) - 1e-6).abs() < 1e-18);
}

#[test]
fn discount_scales_eigenvalues() {
    let mut r = rng(6);
    let sy = random_spd(&mut r, 5, 0.0);
    let sx = random_spd(&mut r, 5, 1.0);
    let fixed = |discount| EigenConfig {
        regularizer: Regularizer::Fixed(0.0),
        discount,
        sqrt_weighting: false,
    };
    let full = solve_with_config(&sy, &sx, 5, &fixed(1.0)).unwrap();
    let half = solve_with_config(&sy, &sx, 5, &fixed(0.5)).unwrap();
    for (a, b) in full.eigenvalues.iter().zip(&half.eigenvalues) {
        assert!((0.5 * a - b).abs() <= 1e-10 * a.abs());
    }
    assert!(solve_with_config(&sy, &sx, 5, &fixed(0.0)).is_err());
    assert!(solve_with_config(&sy, &sx, 5, &fixed(1.5)).is_err());
}

#[test]
fn sqrt_weighting_keeps_ranking() {
    let mut r = rng(7);
    let sy = random_spd(&mut r, 6, 0.0);
    let sx = random_spd(&mut r, 6, 1.0);
    let e = solve_generalized(&sy, &sx, 6, 0.0).unwrap();
    let (weighted, clamped) = weight_by_sqrt_eigenvalues(&e);
    assert!(!clamped);
    let quotient = |a: &[f64]| {
        let num: f64 = a.iter().zip(sy.matvec(a).unwrap()).map(|(x, y)| x * y).sum();
        let den: f64 = a.iter().zip(sx.matvec(a).unwrap()).map(|(x, y)| x * y).sum();
        num / den
    };
    let plain: Vec<f64> = (0..6).map(|i| quotient(&e.vector(i))).collect();
    let scaled: Vec<f64> = (0..6).map(|i| quotient(&weighted.column(i))).collect();
    let argmax = |v: &[f64]| (0..v.len()).max_by(|&a, &b| v[a].total_cmp(&v[b])).unwrap();
    assert_eq!(argmax(&plain), argmax(&scaled));
    assert_eq!(argmax(&plain), 0);
}

#[test]
fn largest_entry_is_positive() {
    let mut v = vec![0.2, -0.9, 0.1];
    canonical_sign(&mut v);
    assert_eq!(v, vec![-0.2, 0.9, -0.1]);
}

#[test]
fn rejects_mismatched_input() {
    let a = Matrix::identity(3);
    assert!(solve_generalized(&a, &Matrix::identity(2), 1, 0.0).is_err());
    assert!(solve_generalized(&a, &a, 4, 0.0).is_err());
    assert!(sym_eig(&Matrix::zeros(2, 3)).is_err());
}

proptest! {
    #[test]
    fn scaling_left_side_scales_eigenvalues(seed in any::<u64>(), n in 1usize..8, c in 0.1f64..10.0) {
        let mut r = rng(seed);
        let sy = random_spd(&mut r, n, 0.0);
        let sx = random_spd(&mut r, n, 0.5);
        let base = solve_generalized(&sy, &sx, n, 0.0).unwrap();
        let scaled = solve_generalized(&sy.scale(c), &sx, n, 0.0).unwrap();
        let top = base.eigenvalues[0].abs().max(1e-300);
        for (a, b) in base.eigenvalues.iter().zip(&scaled.eigenvalues) {
            prop_assert!((c * a - b).abs() <= 1e-9 * c * top);
        }
        let gap = base.eigenvalues.windows(2).all(|w| w[0] - w[1] > 1e-6 * top);
        if gap {
            for i in 0..n {
                let cos: f64 = base.vector(i).iter().zip(scaled.vector(i)).map(|(x, y)| x * y).sum();
                prop_assert!((cos.abs() - 1.0).abs() < 1e-6);
            }
        }
    }

    #[test]
    fn eigenvectors_are_unit_with_positive_peak(seed in any::<u64>(), n in 1usize..10) {
        let mut r = rng(seed);
        let e = solve_generalized(&random_spd(&mut r, n, 0.0), &random_spd(&mut r, n, 0.5), n, 0.0).unwrap();
        for i in 0..n {
            let v = e.vector(i);
            let norm: f64 = v.iter().map(|x| x * x).sum::<f64>().sqrt();
            prop_assert!((norm - 1.0).abs() < 1e-10);
            let peak = v.iter().copied().fold(0.0f64, |m, x| if x.abs() > m.abs() { x } else { m });
            prop_assert!(peak > 0.0);
        }
        prop_assert!(e.eigenvalues.windows(2).all(|w| w[0] >= w[1]));
    }
}
