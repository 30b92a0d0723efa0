use super::*;
use crate::stats::Welford;
use approx::assert_relative_eq;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

fn gaussian(rows: usize, cols: usize, seed: u64) -> DMatrix<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    DMatrix::from_fn(rows, cols, |_, _| StandardNormal.sample(&mut rng))
}

fn moments(w: &DMatrix<f64>) -> (f64, f64) {
    let n = w.len() as f64;
    (
        w.iter().map(|v| v * v).sum::<f64>() / n,
        w.iter().map(|v| v.powi(4)).sum::<f64>() / n,
    )
}

#[test]
fn weight_laws_have_their_moments() {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let w = sample_weights(WeightLaw::BernoulliPm1, 100, 100, &mut rng).unwrap();
    assert_eq!(moments(&w).0, 1.0);

    let w = sample_weights(WeightLaw::Gaussian, 1000, 1000, &mut rng).unwrap();
    let (m2, m4) = moments(&w);
    assert!((m2 - 1.0).abs() < 0.01);
    assert!((m4 - 3.0).abs() < 0.02, "m4 = {m4}");

    let w = sample_weights(WeightLaw::StudentT { nu: 7.0 }, 1000, 1000, &mut rng).unwrap();
    let (m2, m4) = moments(&w);
    assert!((m2 - 1.0).abs() < 0.01);
    assert!((m4 - 5.0).abs() < 0.1, "m4 = {m4}");

    let w = sample_weights(WeightLaw::UniformPm1, 1000, 100, &mut rng).unwrap();
    let (m2, m4) = moments(&w);
    assert!((m2 - 1.0 / 3.0).abs() < 0.005);
    assert!((m4 - 0.2).abs() < 0.005);
}

#[test]
fn weight_errors() {
    let mut rng = ChaCha8Rng::seed_from_u64(0);
    assert!(sample_weights(WeightLaw::StudentT { nu: 4.0 }, 2, 2, &mut rng).is_err());
    assert!(sample_weights(WeightLaw::Gaussian, 0, 2, &mut rng).is_err());
}

#[test]
fn feature_examples() {
    let w = gaussian(3, 4, 1);
    let x = gaussian(4, 5, 2);
    assert_eq!(features(&w, &x, Activation::Linear).unwrap(), &w * &x);
    let minus_i = -DMatrix::<f64>::identity(4, 4);
    let relu = features(&minus_i, &DMatrix::identity(4, 4), Activation::Relu).unwrap();
    assert!(relu.iter().all(|&v| v == 0.0));
    let poly = Activation::Poly2 {
        zeta2: -0.5,
        zeta1: 0.0,
        zeta0: 1.0,
    };
    let ones = features(&w, &DMatrix::zeros(4, 5), poly).unwrap();
    assert!(ones.iter().all(|&v| v == 1.0));
    assert!(features(&w, &gaussian(3, 5, 3), Activation::Linear).is_err());
}

#[test]
fn primal_and_dual_solutions_agree() {
    for &(n, t) in &[(10, 30), (30, 10), (20, 20)] {
        let sigma = gaussian(n, t, 4);
        let y = gaussian(2, t, 5);
        let a = ridge_fit_primal(&sigma, &y, 0.07).unwrap();
        let b = ridge_fit_dual(&sigma, &y, 0.07).unwrap();
        assert!((&a - &b).amax() <= 1e-9 * a.amax().max(1.0));
        // gamma beta + (1/T) Sigma (Sigma' beta - Y') = 0
        let beta = ridge_fit(&sigma, &y, 0.07).unwrap();
        let resid = &beta * 0.07 + &sigma * (sigma.tr_mul(&beta) - y.transpose()) / t as f64;
        assert!(resid.norm() <= 1e-8 * beta.norm());
    }
}

#[test]
fn ridge_limits() {
    let sigma = gaussian(8, 12, 6);
    assert!(ridge_fit(&sigma, &DMatrix::zeros(1, 12), 0.1)
        .unwrap()
        .iter()
        .all(|&v| v == 0.0));
    let y = gaussian(1, 12, 7);
    let gamma = 1e3;
    let beta = ridge_fit(&sigma, &y, gamma).unwrap();
    let bound = sigma.norm() * y.norm() / (12.0 * gamma);
    assert!(beta.norm() <= bound);
    assert!(ridge_fit(&sigma, &y, 0.0).is_err());
}

#[test]
fn error_identities() {
    let sigma = gaussian(15, 25, 8);
    let y = gaussian(2, 25, 9);
    let (train, test) = empirical_errors(&sigma, &sigma, &y, &y, 0.3).unwrap();
    assert_eq!(train, test);
    assert_relative_eq!(
        train,
        e_train_resolvent(&sigma, &y, 0.3).unwrap(),
        max_relative = 1e-8
    );
    let (big, _) = empirical_errors(&sigma, &sigma, &y, &y, 1e8).unwrap();
    assert_relative_eq!(big, y.norm_squared() / 25.0, max_relative = 1e-4);
}

#[test]
fn ridge_path_matches_direct_fit() {
    for &(n, t) in &[(12, 30), (40, 20)] {
        let sigma = gaussian(n, t, 10);
        let sigma_test = gaussian(n, 7, 11);
        let y = gaussian(2, t, 12);
        let y_test = gaussian(2, 7, 13);
        let path = RidgePath::new(&sigma, &sigma_test, &y, &y_test).unwrap();
        for &g in &[1e-4, 0.1, 10.0] {
            let (a, b) = path.errors(g).unwrap();
            let (c, d) = empirical_errors(&sigma, &sigma_test, &y, &y_test, g).unwrap();
            assert_relative_eq!(a, c, max_relative = 1e-7);
            assert_relative_eq!(b, d, max_relative = 1e-7);
        }
    }
}

#[test]
fn mixture_statistics() {
    let ds = gaussian_mixture(64, 2048, 16, 3).unwrap();
    assert_eq!(ds.y.iter().sum::<f64>(), 0.0);
    let norms: Welford = ds.x.column_iter().map(|c| c.norm_squared()).collect();
    assert!((norms.mean() - 2.5).abs() < 3.0 * norms.standard_error());
    let cross: Welford = (0..1024)
        .map(|j| ds.x.column(j).dot(&ds.x.column(1024 + j)))
        .collect();
    assert!(cross.mean().abs() < 3.0 * cross.standard_error());
    assert_eq!(ds.x_test.as_ref().unwrap().ncols(), 16);
    assert!(gaussian_mixture(63, 10, 0, 0).is_err());
    assert!(gaussian_mixture(64, 11, 0, 0).is_err());
}

#[test]
fn center_scale_examples() {
    let ds = gaussian_mixture(8, 40, 10, 4).unwrap();
    let cs = center_scale(&ds).unwrap();
    assert_relative_eq!(cs.x.norm_squared() / 40.0, 1.0, max_relative = 1e-12);
    assert!(cs.x.column_mean().amax() < 1e-12);
    assert!(cs.x_test.as_ref().unwrap().column_mean().amax() > 1e-6);
    let again = center_scale(&cs).unwrap();
    assert!((&again.x - &cs.x).amax() < 1e-12);
    let mut constant = ds.clone();
    constant.x.fill(3.0);
    assert!(center_scale(&constant).is_err());
    constant.x.fill(0.0);
    assert!(center_scale(&constant).is_err());
}

#[test]
fn csv_round_trip() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("train.csv");
    std::fs::write(&path, "a,b,label\n1,2,0.5\n3,4,-1\n5,6,2\n").unwrap();
    let ds = load_csv(&path, Some(&path), 2).unwrap();
    assert_eq!(
        ds.x,
        DMatrix::from_row_slice(2, 3, &[1.0, 3.0, 5.0, 2.0, 4.0, 6.0])
    );
    assert_eq!(ds.y, DMatrix::from_row_slice(1, 3, &[0.5, -1.0, 2.0]));
    assert!(load_csv(&path, None, 3).is_err());
    assert!(load_csv(&dir.path().join("missing.csv"), None, 2).is_err());
}

#[test]
fn trials_are_reproducible() {
    let ds = gaussian_mixture(8, 20, 10, 5).unwrap();
    let gammas = [0.01, 1.0];
    let plan = TrialPlan {
        x: &ds.x,
        y: &ds.y,
        x_test: ds.x_test.as_ref().unwrap(),
        y_test: ds.y_test.as_ref().unwrap(),
        activation: Activation::Relu,
        law: WeightLaw::Gaussian,
        neurons: 16,
        gammas: &gammas,
        trials: 4,
        seed: 42,
    };
    let (a, ra) = run_trials(&plan).unwrap();
    let (b, rb) = run_trials(&plan).unwrap();
    assert_eq!(a, b);
    for (x, y) in ra.iter().zip(&rb) {
        assert_eq!((x.e_train, x.e_test), (y.e_train, y.e_test));
    }
    assert_eq!(ra.len(), 8);
    assert_eq!(a[0].train.count(), 4);
    let other = run_trials(&TrialPlan {
        seed: 43,
        ..plan.clone()
    })
    .unwrap()
    .0;
    assert_ne!(a[0].train.mean(), other[0].train.mean());
}

#[test]
fn cos_and_sin_features_give_gaussian_difference_kernel() {
    let (p, t, n) = (16, 30, 4096);
    let x = gaussian(p, t, 20) / (p as f64).sqrt();
    let mut rng = ChaCha8Rng::seed_from_u64(21);
    let w = sample_weights(WeightLaw::Gaussian, n, p, &mut rng).unwrap();
    let half = n / 2;
    let mut sigma = features(&w, &x, Activation::Cos).unwrap();
    let sin = features(&w.rows(half, half).into_owned(), &x, Activation::Sin).unwrap();
    sigma.rows_mut(half, half).copy_from(&sin);
    let gram = sigma.tr_mul(&sigma) * (2.0 / n as f64);
    let mut worst = 0.0_f64;
    for k in 0..100 {
        let (i, j) = (k % t, (7 * k + 3) % t);
        let target = (-0.5 * (x.column(i) - x.column(j)).norm_squared()).exp();
        worst = worst.max((gram[(i, j)] - target).abs());
    }
    assert!(worst <= 0.05, "max deviation {worst}");
}
