use nalgebra::{DMatrix, DVector};
use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use super::*;
use crate::stats::pearson;

fn gaussian(rng: &mut ChaCha8Rng, rows: usize, cols: usize) -> DMatrix<f64> {
    DMatrix::from_fn(rows, cols, |_, _| StandardNormal.sample(rng))
}

fn center_rows(a: &DMatrix<f64>) -> DMatrix<f64> {
    let mut c = a.clone();
    for mut row in c.row_iter_mut() {
        let m = row.mean();
        row.add_scalar_mut(-m);
    }
    c
}

/// Unregularized CCA from covariance matrices: top singular value of
/// `Lx⁻¹ Sxy Ly⁻ᵀ` where `S = LLᵀ` are Cholesky factors.
fn input_space_cca(x: &DMatrix<f64>, y: &DMatrix<f64>) -> f64 {
    let (xc, yc) = (center_rows(x), center_rows(y));
    let sxx = &xc * xc.transpose();
    let syy = &yc * yc.transpose();
    let sxy = &xc * yc.transpose();
    let lx = sxx.cholesky().unwrap().l();
    let ly = syy.cholesky().unwrap().l();
    let t = lx.solve_lower_triangular(&sxy).unwrap();
    let m = ly.solve_lower_triangular(&t.transpose()).unwrap();
    m.singular_values().max()
}

fn centered_kernels(x: &DMatrix<f64>, y: &DMatrix<f64>) -> (DMatrix<f64>, DMatrix<f64>) {
    let (kx, _) = center_kernel(&linear_kernel(x).unwrap());
    let (ky, _) = center_kernel(&linear_kernel(y).unwrap());
    (kx, ky)
}

#[test]
fn linear_kernel_of_identity() {
    let k = linear_kernel(&DMatrix::identity(2, 2)).unwrap();
    assert_eq!(k, DMatrix::identity(2, 2));
}

#[test]
fn linear_kernel_of_orthogonal_columns() {
    let a = DMatrix::from_column_slice(3, 2, &[2.0, 0.0, 0.0, 0.0, 0.0, -3.0]);
    let k = linear_kernel(&a).unwrap();
    assert_eq!(k, DMatrix::from_row_slice(2, 2, &[4.0, 0.0, 0.0, 9.0]));
    assert!(matches!(
        linear_kernel(&DMatrix::zeros(3, 1)),
        Err(Error::TooFewSamples(1))
    ));
}

#[test]
fn linear_kernel_matches_naive_loop() {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let a = gaussian(&mut rng, 5, 40);
    let k = linear_kernel(&a).unwrap();
    for i in 0..40 {
        for j in 0..40 {
            let mut dot = 0.0;
            for r in 0..5 {
                dot += a[(r, i)] * a[(r, j)];
            }
            assert!((k[(i, j)] - dot).abs() < 1e-12);
        }
    }
    assert_eq!(k, k.transpose());
}

#[test]
fn centering_annihilates_constants() {
    let a = DMatrix::from_element(3, 6, 2.5);
    let (c, _) = center_kernel(&linear_kernel(&a).unwrap());
    assert!(c.abs().max() < 1e-12);
}

#[test]
fn centering_is_idempotent_on_centered_data() {
    let mut rng = ChaCha8Rng::seed_from_u64(12);
    let a = center_rows(&gaussian(&mut rng, 4, 30));
    let k = linear_kernel(&a).unwrap();
    let (c, _) = center_kernel(&k);
    assert!((c - k).abs().max() < 1e-12);
}

#[test]
fn centered_rows_sum_to_zero() {
    let mut rng = ChaCha8Rng::seed_from_u64(13);
    let a = gaussian(&mut rng, 4, 50).add_scalar(3.0);
    let (c, _) = center_kernel(&linear_kernel(&a).unwrap());
    for row in c.row_iter() {
        assert!(row.sum().abs() < 1e-8 * 50.0);
    }
}

#[test]
fn cross_centering_matches_feature_centering() {
    let mut rng = ChaCha8Rng::seed_from_u64(14);
    let train = gaussian(&mut rng, 3, 20).add_scalar(1.0);
    let test = gaussian(&mut rng, 3, 7).add_scalar(1.0);
    let (_, centering) = center_kernel(&linear_kernel(&train).unwrap());
    let cross = center_cross(&train.tr_mul(&test), &centering);
    let mean = DVector::from_iterator(3, train.row_iter().map(|r| r.mean()));
    let shift = |m: &DMatrix<f64>| {
        let mut s = m.clone();
        for mut col in s.column_iter_mut() {
            col -= &mean;
        }
        s
    };
    let oracle = shift(&train).tr_mul(&shift(&test));
    assert!((cross - oracle).abs().max() < 1e-12);
}

#[test]
fn self_correlation_is_one() {
    let signal = DMatrix::from_fn(1, 60, |_, t| ((t as f64) * 0.37).sin() + 0.1 * t as f64);
    let (kx, ky) = centered_kernels(&signal, &signal);
    let model = solve_kcca(&kx, &ky, 1e-6).unwrap();
    assert!(model.lambda >= 0.999, "lambda {}", model.lambda);
    assert!(model.eigenvalue >= 0.999, "eigenvalue {}", model.eigenvalue);
}

#[test]
fn white_noise_matches_input_space_oracle() {
    let mut rng = ChaCha8Rng::seed_from_u64(15);
    let x = gaussian(&mut rng, 4, 200);
    let y = gaussian(&mut rng, 2, 200);
    let (kx, ky) = centered_kernels(&x, &y);
    let model = solve_kcca(&kx, &ky, 1e-2).unwrap();
    let oracle = input_space_cca(&x, &y);
    assert!(model.lambda < 0.35, "noise correlation too large: {}", model.lambda);
    assert!((model.lambda - oracle).abs() < 1e-4, "{} vs {oracle}", model.lambda);
}

#[test]
fn oracle_is_invariant_to_linear_transforms() {
    let mut rng = ChaCha8Rng::seed_from_u64(16);
    let x = gaussian(&mut rng, 3, 120);
    let y = &x.rows(0, 2) * 0.5 + gaussian(&mut rng, 2, 120);
    let a = gaussian(&mut rng, 3, 3) + DMatrix::identity(3, 3) * 3.0;
    let b = gaussian(&mut rng, 2, 2) + DMatrix::identity(2, 2) * 3.0;
    let base = input_space_cca(&x, &y);
    let transformed = input_space_cca(&(&a * &x), &(&b * &y));
    assert!((base - transformed).abs() < 1e-10);
}

#[test]
fn kappa_below_floor_is_singular() {
    let mut rng = ChaCha8Rng::seed_from_u64(17);
    let (kx, ky) = centered_kernels(&gaussian(&mut rng, 2, 10), &gaussian(&mut rng, 2, 10));
    assert!(matches!(solve_kcca(&kx, &ky, 1e-9), Err(Error::SingularRhs { .. })));
    assert!(matches!(solve_kcca(&kx, &ky, f64::NAN), Err(Error::SingularRhs { .. })));
    let small = DMatrix::zeros(9, 9);
    assert!(matches!(solve_kcca(&kx, &small, 1.0), Err(Error::ShapeMismatch(_))));
}

#[test]
fn zero_kernel_is_degenerate() {
    let mut rng = ChaCha8Rng::seed_from_u64(18);
    let (kx, _) = centered_kernels(&gaussian(&mut rng, 2, 10), &gaussian(&mut rng, 2, 10));
    let zero = DMatrix::zeros(10, 10);
    assert!(solve_kcca(&kx, &zero, 1e-3).is_err());
}

#[test]
fn projecting_training_block_reproduces_lambda() {
    let mut rng = ChaCha8Rng::seed_from_u64(19);
    let x = gaussian(&mut rng, 3, 80);
    let y = &x.rows(1, 2) * 0.8 + gaussian(&mut rng, 2, 80);
    let (kx, ky) = centered_kernels(&x, &y);
    let model = solve_kcca(&kx, &ky, 1.0).unwrap();
    let (u, v) = project(&model, &kx, &ky).unwrap();
    let r = pearson(u.as_slice(), v.as_slice()).unwrap();
    assert!((r - model.lambda).abs() < 1e-6);
    assert!((u.norm() - model.u_norm).abs() < 1e-9 * model.u_norm);
    // the regularized eigenvalue is a lower bound on the realized correlation
    assert!(model.eigenvalue <= model.lambda + 1e-12);
}

#[test]
fn projection_with_unit_alpha() {
    let mut rng = ChaCha8Rng::seed_from_u64(20);
    let (kx, ky) = centered_kernels(&gaussian(&mut rng, 2, 12), &gaussian(&mut rng, 2, 12));
    let mut model = solve_kcca(&kx, &ky, 1e-3).unwrap();
    model.alpha = DVector::from_fn(12, |i, _| if i == 0 { 1.0 } else { 0.0 });
    let (u, _) = project(&model, &kx, &ky).unwrap();
    assert_eq!(u.transpose(), kx.row(0).into_owned());
    assert!(matches!(
        project(&model, &kx.columns(0, 3).into_owned(), &ky),
        Err(Error::ShapeMismatch(_))
    ));
}

#[test]
fn sign_convention() {
    let mut rng = ChaCha8Rng::seed_from_u64(21);
    let x = gaussian(&mut rng, 3, 50);
    let y = -(&x.rows(0, 2)) + gaussian(&mut rng, 2, 50) * 0.3;
    let (kx, ky) = centered_kernels(&x, &y);
    let model = solve_kcca(&kx, &ky, 1e-3).unwrap();
    assert!(model.beta[argmax_abs(&model.beta)] > 0.0);
    assert!(model.lambda > 0.0);
}

#[test]
fn solve_is_deterministic() {
    let mut rng = ChaCha8Rng::seed_from_u64(22);
    let (kx, ky) = centered_kernels(&gaussian(&mut rng, 3, 40), &gaussian(&mut rng, 3, 40));
    let a = solve_kcca(&kx, &ky, 1e-2).unwrap();
    let b = solve_kcca(&kx, &ky, 1e-2).unwrap();
    assert_eq!(a, b);
}

fn embedded_pair(seed: u64, w: usize, lags: usize, n: usize) -> (DMatrix<f64>, DMatrix<f64>) {
    // x̃ carries lags of a W-dim series; y depends on lag 2
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let raw = gaussian(&mut rng, w, n + lags);
    let xt = DMatrix::from_fn(w * lags, n, |r, j| raw[(r % w, j + r / w)]);
    let lag2 = DMatrix::from_fn(w, n, |r, j| raw[(r, j + lags - 2)]);
    let y = lag2 * 0.7 + gaussian(&mut rng, w, n);
    (xt, y)
}

#[test]
fn feature_route_matches_dual_route() {
    let (xt, y) = embedded_pair(23, 2, 3, 90);
    let (xc, yc) = (center_rows(&xt), center_rows(&y));
    let (kx, ky) = centered_kernels(&xt, &y);
    let problem = ScatterProblem::new(&xc * xc.transpose(), &yc * yc.transpose(), &xc * yc.transpose()).unwrap();
    for kappa in [1e-5, 1e-2, 1.0, 10.0] {
        let dual = solve_kcca(&kx, &ky, kappa).unwrap();
        let primal = problem.solve(kappa).unwrap();
        assert!((dual.eigenvalue - primal.eigenvalue).abs() < 1e-8, "kappa {kappa}");
        assert!((dual.lambda - primal.lambda).abs() < 1e-8, "kappa {kappa}");
        let alpha = xc.tr_mul(&primal.g);
        let beta = yc.tr_mul(&primal.h);
        let sign = alpha.dot(&dual.alpha).signum();
        assert_eq!(sign, beta.dot(&dual.beta).signum());
        let rel = |a: &DVector<f64>, b: &DVector<f64>| (a * sign - b).norm() / b.norm();
        assert!(rel(&alpha, &dual.alpha) < 1e-6, "alpha mismatch at kappa {kappa}");
        assert!(rel(&beta, &dual.beta) < 1e-6, "beta mismatch at kappa {kappa}");
    }
}

#[test]
fn shared_spectrum_matches_direct_solve() {
    let (xt, y) = embedded_pair(25, 3, 2, 60);
    let (kx, ky) = centered_kernels(&xt, &y);
    let problem = GramProblem::new(&kx, &ky).unwrap();
    assert_eq!(problem.n_samples(), 60);
    for kappa in [1e-5, 1e-1, 10.0] {
        let direct = solve_kcca(&kx, &ky, kappa).unwrap();
        let shared = problem.solve(kappa).unwrap();
        assert!((direct.eigenvalue - shared.eigenvalue).abs() < 1e-8);
        assert!((direct.lambda - shared.lambda).abs() < 1e-8);
        assert!((&direct.alpha - &shared.alpha).norm() < 1e-6 * direct.alpha.norm());
        assert!((&direct.beta - &shared.beta).norm() < 1e-6 * direct.beta.norm());
        assert!((direct.u_norm - shared.u_norm).abs() < 1e-8 * direct.u_norm);
    }
    assert!(matches!(problem.solve(0.0), Err(Error::SingularRhs { .. })));
}

#[test]
fn primal_recovery_reproduces_dual_projections() {
    let lags = 3;
    let (xt, y) = embedded_pair(24, 2, lags, 70);
    let (kx, ky) = centered_kernels(&xt, &y);
    let model = solve_kcca(&kx, &ky, 1e-2)
        .unwrap()
        .with_context(lags, (0..70).collect());
    let weights = recover_primal(&model, &FeatureMatrix::from_dense(&xt), &FeatureMatrix::from_dense(&y)).unwrap();
    let u_primal = center_rows(&xt).tr_mul(&weights.stacked_x());
    let v_primal = center_rows(&y).tr_mul(&weights.w_y);
    let u = &kx * &model.alpha;
    let v = &ky * &model.beta;
    assert!((u_primal - &u).norm() <= 1e-8 * u.norm());
    assert!((v_primal - &v).norm() <= 1e-8 * v.norm());
    // lag blocks: column τ−1 holds rows of the lag-τ block
    let stacked = weights.stacked_x();
    for lag in 1..=lags {
        let rows = crate::embedding::lag_rows(2, lags, lag);
        assert_eq!(weights.lag(lag).as_slice(), &stacked.as_slice()[rows]);
    }

    let mut foreign = model.clone();
    foreign.kernel = "rbf".into();
    assert!(matches!(
        recover_primal(
            &foreign,
            &FeatureMatrix::from_dense(&xt),
            &FeatureMatrix::from_dense(&y)
        ),
        Err(Error::NonLinearKernel(_))
    ));
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn lambda_bounds_and_monotone_eigenvalue(seed in any::<u64>(), n in 15usize..60) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let x = gaussian(&mut rng, 3, n);
        let y = &x.rows(0, 2) * 0.4 + gaussian(&mut rng, 2, n);
        let (kx, ky) = centered_kernels(&x, &y);
        let mut previous = f64::INFINITY;
        for exp in -5..=1 {
            let kappa = 10f64.powi(exp);
            let model = solve_kcca(&kx, &ky, kappa).unwrap();
            prop_assert!(model.lambda >= -1e-8 && model.lambda <= 1.0 + 1e-8);
            prop_assert!(model.eigenvalue >= -1e-8 && model.eigenvalue <= 1.0 + 1e-8);
            prop_assert!(model.eigenvalue <= previous + 1e-10);
            previous = model.eigenvalue;
        }
    }
}
