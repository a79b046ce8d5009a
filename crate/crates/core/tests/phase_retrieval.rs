use proptest::prelude::*;
use reboot_core::glm::Dataset;
use reboot_core::numerics::{leading_eigenpair, sample_standard_normal, DenseMatrix, DenseVector, SeededRng};
use reboot_core::phase_retrieval::{
    fit_local, pr_gradient, pr_loss, sample_pr_response, sample_pr_response_with_noise, spectral_init,
    spectral_matrix, wirtinger_flow, PrConfig,
};

fn instance(rng: &mut SeededRng, n: usize, beta: &DenseVector, noise_sd: f64) -> Dataset {
    let p = beta.len();
    let x = DenseMatrix::from_col_major(n, p, sample_standard_normal(rng, n * p).into_vec()).unwrap();
    let y: Vec<f64> = (0..n)
        .map(|i| sample_pr_response_with_noise(rng, &x.row(i), beta, noise_sd))
        .collect();
    Dataset::new(x, DenseVector::new(y).unwrap()).unwrap()
}

fn dist_dagger(a: &DenseVector, b: &DenseVector) -> f64 {
    a.distance(b).min(a.add_scaled(1.0, b).norm())
}

#[test]
fn gradient_is_quarter_of_loss_derivative() {
    let mut rng = SeededRng::new(200);
    for _ in 0..100 {
        let truth = sample_standard_normal(&mut rng, 3);
        let data = instance(&mut rng, 30, &truth, 1.0);
        let beta = sample_standard_normal(&mut rng, 3);
        let g = pr_gradient(&data, &beta).unwrap();
        let h = 1e-5;
        let scale = g.iter().fold(1.0_f64, |m, v| m.max(v.abs()));
        for j in 0..3 {
            let mut up = beta.as_slice().to_vec();
            let mut down = up.clone();
            up[j] += h;
            down[j] -= h;
            let fd = (pr_loss(&data, &DenseVector::new(up).unwrap()).unwrap()
                - pr_loss(&data, &DenseVector::new(down).unwrap()).unwrap())
                / (2.0 * h)
                / 4.0;
            assert!((fd - g[j]).abs() < 1e-6 * scale, "{fd} vs {}", g[j]);
        }
    }
}

#[test]
fn spectral_norm_is_eigenvalue_root() {
    let mut rng = SeededRng::new(201);
    for _ in 0..10 {
        let data = instance(&mut rng, 200, &DenseVector::filled(4, 1.0), 1.0);
        let (lambda, _) = leading_eigenpair(&spectral_matrix(&data), 1e-10, 10_000).unwrap();
        let init = spectral_init(&data).unwrap();
        assert!((init.norm() - (lambda / 3.0).sqrt()).abs() < 1e-12 * init.norm());
    }
}

#[test]
fn spectral_initializer_radius() {
    let p = 5;
    let truth = DenseVector::filled(p, 1.0);
    let within = |n: usize| {
        (0..100)
            .filter(|&seed| {
                let data = instance(&mut SeededRng::new(seed), n, &truth, 1.0);
                dist_dagger(&spectral_init(&data).unwrap(), &truth) <= truth.norm() / 13.0
            })
            .count()
    };
    assert!(within(800 * p * p) >= 95);
}

#[test]
fn spectral_error_scales_as_root_n() {
    let p = 5;
    let truth = DenseVector::filled(p, 1.0);
    let mean_error = |n: usize| {
        (0..50)
            .map(|seed| {
                let data = instance(&mut SeededRng::new(seed), n, &truth, 1.0);
                dist_dagger(&spectral_init(&data).unwrap(), &truth)
            })
            .sum::<f64>()
            / 50.0
    };
    let ratio = mean_error(1250) / mean_error(5000);
    assert!((1.6..2.5).contains(&ratio), "{ratio}");
}

#[test]
fn error_shrinks_with_sample_size() {
    let p = 5;
    let truth = DenseVector::filled(p, 1.0);
    let cfg = PrConfig::local_default(p);
    let mean_error = |n: usize| {
        (0..40)
            .map(|seed| {
                let data = instance(&mut SeededRng::new(1000 + seed), n, &truth, 1.0);
                dist_dagger(&fit_local(&data, &cfg).unwrap().beta, &truth)
            })
            .sum::<f64>()
            / 40.0
    };
    let (small, large) = (mean_error(200), mean_error(800));
    assert!(small / large >= 1.6, "{small} / {large}");
    // Error of order (p/n)^{1/2}.
    assert!(large < 2.0 * (p as f64 / 800.0).sqrt(), "{large}");
}

#[test]
fn small_steps_never_increase_loss() {
    let mut rng = SeededRng::new(202);
    let data = instance(&mut rng, 300, &DenseVector::filled(3, 1.0), 1.0);
    let mut beta = spectral_init(&data).unwrap();
    let mut loss = pr_loss(&data, &beta).unwrap();
    for _ in 0..200 {
        beta = wirtinger_flow(&data, &beta, &PrConfig::new(1, 1e-4)).unwrap().beta;
        let next = pr_loss(&data, &beta).unwrap();
        assert!(next <= loss);
        loss = next;
    }
}

#[test]
fn pure_noise_response_is_centred() {
    let mut rng = SeededRng::new(203);
    let x = DenseVector::new(vec![0.3, -1.0]).unwrap();
    let zero = DenseVector::zeros(2);
    let n = 100_000;
    let mean = (0..n).map(|_| sample_pr_response(&mut rng, &x, &zero)).sum::<f64>() / n as f64;
    assert!(mean.abs() < 0.05);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn loss_even_gradient_odd(seed in any::<u64>()) {
        let mut rng = SeededRng::new(seed);
        let truth = sample_standard_normal(&mut rng, 3);
        let data = instance(&mut rng, 20, &truth, 1.0);
        let beta = sample_standard_normal(&mut rng, 3);
        let neg = beta.scale(-1.0);
        prop_assert_eq!(pr_loss(&data, &beta).unwrap(), pr_loss(&data, &neg).unwrap());
        prop_assert_eq!(pr_gradient(&data, &neg).unwrap(), pr_gradient(&data, &beta).unwrap().scale(-1.0));
    }

    #[test]
    fn response_is_even_in_beta(seed in any::<u64>()) {
        let mut rng = SeededRng::new(seed);
        let x = sample_standard_normal(&mut rng, 4);
        let beta = sample_standard_normal(&mut rng, 4);
        let a = sample_pr_response(&mut rng.clone(), &x, &beta);
        let b = sample_pr_response(&mut rng, &x, &beta.scale(-1.0));
        prop_assert_eq!(a, b);
    }

    #[test]
    fn loss_is_nonnegative(seed in any::<u64>()) {
        let mut rng = SeededRng::new(seed);
        let truth = sample_standard_normal(&mut rng, 2);
        let data = instance(&mut rng, 15, &truth, 2.0);
        prop_assert!(pr_loss(&data, &sample_standard_normal(&mut rng, 2)).unwrap() >= 0.0);
    }
}
