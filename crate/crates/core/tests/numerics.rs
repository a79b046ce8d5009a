use proptest::prelude::*;
use reboot_core::numerics::{
    ar1_covariance, cholesky_solve, leading_eigenpair, sample_mvn_ar1, sample_standard_normal, standard_normal,
    Ar1Normal, DenseMatrix, DenseVector, SeededRng,
};

/// Cyclic Jacobi rotations; returns the eigenvalues in descending order and
/// the matching eigenvectors as columns.
fn jacobi_eigen(a: &[Vec<f64>]) -> (Vec<f64>, Vec<Vec<f64>>) {
    let n = a.len();
    let mut a = a.to_vec();
    let mut v: Vec<Vec<f64>> = (0..n).map(|i| (0..n).map(|j| f64::from(i == j)).collect()).collect();
    for _sweep in 0..100 {
        let off: f64 = (0..n)
            .flat_map(|i| (0..n).filter(move |&j| j != i).map(move |j| (i, j)))
            .map(|(i, j)| a[i][j] * a[i][j])
            .sum();
        if off < 1e-30 {
            break;
        }
        for p in 0..n {
            for q in p + 1..n {
                if a[p][q].abs() < 1e-300 {
                    continue;
                }
                let theta = (a[q][q] - a[p][p]) / (2.0 * a[p][q]);
                let t = theta.signum() / (theta.abs() + (theta * theta + 1.0).sqrt());
                let t = if theta == 0.0 { 1.0 } else { t };
                let c = 1.0 / (t * t + 1.0).sqrt();
                let s = t * c;
                for k in 0..n {
                    let (akp, akq) = (a[k][p], a[k][q]);
                    a[k][p] = c * akp - s * akq;
                    a[k][q] = s * akp + c * akq;
                }
                for k in 0..n {
                    let (apk, aqk) = (a[p][k], a[q][k]);
                    a[p][k] = c * apk - s * aqk;
                    a[q][k] = s * apk + c * aqk;
                }
                for row in v.iter_mut() {
                    let (vp, vq) = (row[p], row[q]);
                    row[p] = c * vp - s * vq;
                    row[q] = s * vp + c * vq;
                }
            }
        }
    }
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&i, &j| a[j][j].partial_cmp(&a[i][i]).unwrap());
    let values = order.iter().map(|&i| a[i][i]).collect();
    let vectors = order.iter().map(|&i| (0..n).map(|k| v[k][i]).collect()).collect();
    (values, vectors)
}

fn random_matrix(rng: &mut SeededRng, rows: usize, cols: usize) -> DenseMatrix {
    DenseMatrix::from_col_major(rows, cols, sample_standard_normal(rng, rows * cols).into_vec()).unwrap()
}

fn random_spd(rng: &mut SeededRng, n: usize) -> DenseMatrix {
    let m = random_matrix(rng, n, n);
    m.transpose().matmul(&m).add(&DenseMatrix::identity(n))
}

fn random_symmetric(rng: &mut SeededRng, n: usize) -> DenseMatrix {
    let m = random_matrix(rng, n, n);
    m.add(&m.transpose()).scale(0.5)
}

fn to_rows(m: &DenseMatrix) -> Vec<Vec<f64>> {
    (0..m.rows()).map(|i| (0..m.cols()).map(|j| m.get(i, j)).collect()).collect()
}

#[test]
fn cholesky_residual_oracle() {
    let mut rng = SeededRng::new(11);
    for _ in 0..20 {
        let a = random_spd(&mut rng, 6);
        let b = sample_standard_normal(&mut rng, 6);
        let x = cholesky_solve(&a, &b).unwrap();
        let resid = a.mul_vec(&x).sub(&b).norm();
        assert!(resid < 1e-8 * (1.0 + b.norm()), "residual {resid}");
    }
}

#[test]
fn eigenpair_matches_jacobi() {
    let mut rng = SeededRng::new(12);
    for _ in 0..20 {
        let s = random_symmetric(&mut rng, 5);
        let (values, vectors) = jacobi_eigen(&to_rows(&s));
        let (lambda, v) = leading_eigenpair(&s, 1e-12, 100_000).unwrap();
        assert!((lambda - values[0]).abs() < 1e-8, "{lambda} vs {}", values[0]);
        let align: f64 = v.iter().zip(&vectors[0]).map(|(a, b)| a * b).sum();
        assert!((align.abs() - 1.0).abs() < 1e-8);
    }
}

#[test]
fn population_spectral_matrix() {
    // E Y = ‖β‖² I + 2ββᵀ with β = (1, 0).
    let s = DenseMatrix::diagonal(&[3.0, 1.0]);
    let (lambda, v) = leading_eigenpair(&s, 1e-10, 10_000).unwrap();
    assert!((lambda - 3.0).abs() < 1e-9);
    assert!((v[0] - 1.0).abs() < 1e-9);
}

#[test]
fn eigenpair_residual_contract() {
    let mut rng = SeededRng::new(13);
    for _ in 0..20 {
        let s = random_symmetric(&mut rng, 4);
        let tol = 1e-10;
        let (lambda, v) = leading_eigenpair(&s, tol, 10_000).unwrap();
        assert!((v.norm() - 1.0).abs() < 1e-12);
        let resid = s.mul_vec(&v).add_scaled(-lambda, &v).norm();
        assert!(resid <= tol * s.frobenius_norm());
    }
}

#[test]
fn golden_normal_values() {
    let mut rng = SeededRng::new(42);
    let v = sample_standard_normal(&mut rng, 3);
    assert_eq!(v[0].to_bits(), 0xbfd3458a757dd6b1);
    assert_eq!(v[1].to_bits(), 0x3fa8502ac7603b3c);
    assert_eq!(v[2].to_bits(), 0x3fefddc0b09bd89d);
}

#[test]
fn normal_moments() {
    let n = 1_000_000;
    let v = sample_standard_normal(&mut SeededRng::new(5), n);
    let mean = v.iter().sum::<f64>() / n as f64;
    let var = v.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1) as f64;
    assert!(mean.abs() < 4.0 / (n as f64).sqrt(), "mean {mean}");
    assert!((var - 1.0).abs() < 0.01, "variance {var}");
}

#[test]
fn ar1_covariance_is_recovered() {
    let rho = 0.5;
    let p = 3;
    let sampler = Ar1Normal::new(p, rho).unwrap();
    let mut rng = SeededRng::new(6);
    let n = 200_000;
    let mut acc = [[0.0; 3]; 3];
    for _ in 0..n {
        let x = sampler.sample(&mut rng, p);
        for i in 0..p {
            for j in 0..p {
                acc[i][j] += x[i] * x[j];
            }
        }
    }
    let cov = ar1_covariance(p, rho);
    for i in 0..p {
        for j in 0..p {
            assert!((acc[i][j] / n as f64 - cov.get(i, j)).abs() < 0.02);
        }
    }
}

#[test]
fn determinism_across_threads() {
    let draw = |seed: u64| sample_standard_normal(&mut SeededRng::new(seed).substream(3), 1000);
    let here = draw(9);
    let there = std::thread::spawn(move || draw(9)).join().unwrap();
    assert_eq!(here, there);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn solve_inverts_multiply(seed in any::<u64>(), n in 1usize..7) {
        let mut rng = SeededRng::new(seed);
        let a = random_spd(&mut rng, n);
        let x = sample_standard_normal(&mut rng, n);
        let b = a.mul_vec(&x);
        let back = cholesky_solve(&a, &b).unwrap();
        prop_assert!(back.sub(&x).norm() <= 1e-8 * (1.0 + x.norm()));
    }

    #[test]
    fn eigenvalue_dominates_rayleigh_quotients(seed in any::<u64>(), n in 1usize..6) {
        let mut rng = SeededRng::new(seed);
        let s = random_symmetric(&mut rng, n);
        let tol = 1e-10;
        let (lambda, _) = leading_eigenpair(&s, tol, 100_000).unwrap();
        for _ in 0..5 {
            let probe = sample_standard_normal(&mut rng, n);
            let rq = probe.dot(&s.mul_vec(&probe)) / probe.norm_squared();
            prop_assert!(lambda >= rq - tol * s.frobenius_norm().max(1.0));
        }
    }

    #[test]
    fn ar1_zero_rho_is_standard_normal(seed in any::<u64>(), p in 1usize..8) {
        let a = sample_mvn_ar1(&mut SeededRng::new(seed), p, 0.0).unwrap();
        let b = sample_standard_normal(&mut SeededRng::new(seed), p);
        prop_assert_eq!(a, b);
    }

    #[test]
    fn samplers_repeat_for_equal_state(seed in any::<u64>(), stream in 0u64..1000) {
        let mut a = SeededRng::new(seed).substream(stream);
        let mut b = a.clone();
        for _ in 0..16 {
            prop_assert_eq!(standard_normal(&mut a).to_bits(), standard_normal(&mut b).to_bits());
        }
    }

    #[test]
    fn vectors_reject_non_finite(x in prop::collection::vec(-1e6f64..1e6, 1..5), bad in prop::sample::select(vec![f64::NAN, f64::INFINITY, f64::NEG_INFINITY])) {
        let mut entries = x.clone();
        prop_assert!(DenseVector::new(entries.clone()).is_ok());
        entries.push(bad);
        prop_assert!(DenseVector::new(entries).is_err());
    }
}
