//! Distribution samplers driven by [`SeededRng`].

use super::linalg::{Cholesky, DenseMatrix, DenseVector};
use super::rng::SeededRng;
use super::NumericsError;
use rand_distr::{Distribution, Poisson, StandardNormal};

/// Below this mean Poisson draws use sequential inversion.
const POISSON_INVERSION_LIMIT: f64 = 30.0;

pub fn sample_uniform01(rng: &mut SeededRng) -> f64 {
    rng.next_f64()
}

/// One standard normal draw (ziggurat).
pub fn standard_normal(rng: &mut SeededRng) -> f64 {
    StandardNormal.sample(rng)
}

/// `n` i.i.d. standard normals.
pub fn sample_standard_normal(rng: &mut SeededRng, n: usize) -> DenseVector {
    DenseVector::from_vec_unchecked((0..n).map(|_| standard_normal(rng)).collect())
}

/// Always consumes exactly one uniform.
pub fn sample_bernoulli(rng: &mut SeededRng, prob: f64) -> Result<u8, NumericsError> {
    if !(0.0..=1.0).contains(&prob) {
        return Err(NumericsError::Domain(format!("bernoulli probability {prob} outside [0, 1]")));
    }
    Ok(u8::from(rng.next_f64() < prob))
}

pub fn sample_poisson(rng: &mut SeededRng, mean: f64) -> Result<u64, NumericsError> {
    if !(mean >= 0.0) || !mean.is_finite() {
        return Err(NumericsError::Domain(format!("poisson mean {mean} must be finite and nonnegative")));
    }
    if mean == 0.0 {
        return Ok(0);
    }
    if mean < POISSON_INVERSION_LIMIT {
        let u = rng.next_f64();
        let mut k = 0u64;
        let mut term = (-mean).exp();
        let mut cdf = term;
        // Rounding can leave the cdf a hair below 1; the cap is far in the tail.
        while u >= cdf && k < 1000 {
            k += 1;
            term *= mean / k as f64;
            cdf += term;
        }
        return Ok(k);
    }
    let dist = Poisson::new(mean).map_err(|e| NumericsError::Domain(e.to_string()))?;
    Ok(dist.sample(rng) as u64)
}

/// Sampler for `N(0, Σ)` with `Σᵢⱼ = ρ^|i−j|`. The Cholesky factor of `Σ`
/// is computed once at construction.
#[derive(Clone, Debug)]
pub struct Ar1Normal {
    rho: f64,
    factor: Option<DenseMatrix>,
}

impl Ar1Normal {
    pub fn new(p: usize, rho: f64) -> Result<Self, NumericsError> {
        if p == 0 {
            return Err(NumericsError::EmptyDimension);
        }
        if !(rho.abs() < 1.0) {
            return Err(NumericsError::Domain(format!("AR(1) correlation {rho} must satisfy |rho| < 1")));
        }
        if rho == 0.0 {
            return Ok(Self { rho, factor: None });
        }
        let cov = ar1_covariance(p, rho);
        let factor = Cholesky::factor(&cov)?.lower().clone();
        Ok(Self {
            rho,
            factor: Some(factor),
        })
    }

    pub fn rho(&self) -> f64 {
        self.rho
    }

    /// Lower Cholesky factor of `Σ`; `None` when `Σ = I`.
    pub fn factor(&self) -> Option<&DenseMatrix> {
        self.factor.as_ref()
    }

    /// Writes one draw into `out`; consumes exactly `out.len()` normals.
    pub fn sample_into(&self, rng: &mut SeededRng, out: &mut [f64]) {
        for o in out.iter_mut() {
            *o = standard_normal(rng);
        }
        if let Some(l) = &self.factor {
            let p = out.len();
            // x = L z, in place from the bottom row up.
            for i in (0..p).rev() {
                let mut s = 0.0;
                for (k, &zk) in out.iter().enumerate().take(i + 1) {
                    s += l.get(i, k) * zk;
                }
                out[i] = s;
            }
        }
    }

    pub fn sample(&self, rng: &mut SeededRng, p: usize) -> DenseVector {
        let mut out = vec![0.0; p];
        self.sample_into(rng, &mut out);
        DenseVector::from_vec_unchecked(out)
    }
}

pub fn ar1_covariance(p: usize, rho: f64) -> DenseMatrix {
    let mut cov = DenseMatrix::zeros(p, p);
    for i in 0..p {
        for j in 0..p {
            cov.set(i, j, rho.powi((i as i32 - j as i32).abs()));
        }
    }
    cov
}

/// One draw from `N(0, Σ)` with `Σᵢⱼ = ρ^|i−j|`. Build an [`Ar1Normal`]
/// instead when drawing repeatedly.
pub fn sample_mvn_ar1(rng: &mut SeededRng, p: usize, rho: f64) -> Result<DenseVector, NumericsError> {
    Ok(Ar1Normal::new(p, rho)?.sample(rng, p))
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand_core::RngCore;

    #[test]
    fn degenerate_bernoulli() {
        let mut rng = SeededRng::new(0);
        for _ in 0..1000 {
            assert_eq!(sample_bernoulli(&mut rng, 0.0).unwrap(), 0);
            assert_eq!(sample_bernoulli(&mut rng, 1.0).unwrap(), 1);
        }
    }

    #[test]
    fn domain_errors() {
        let mut rng = SeededRng::new(0);
        assert!(sample_bernoulli(&mut rng, 1.5).is_err());
        assert!(sample_bernoulli(&mut rng, f64::NAN).is_err());
        assert!(sample_poisson(&mut rng, -1.0).is_err());
        assert!(Ar1Normal::new(3, 1.0).is_err());
    }

    #[test]
    fn poisson_zero_mean() {
        let mut rng = SeededRng::new(0);
        assert_eq!(sample_poisson(&mut rng, 0.0).unwrap(), 0);
    }

    #[test]
    fn poisson_mean_five() {
        let mut rng = SeededRng::new(21);
        let n = 100_000;
        let total: u64 = (0..n).map(|_| sample_poisson(&mut rng, 5.0).unwrap()).sum();
        let mean = total as f64 / n as f64;
        assert!((mean - 5.0).abs() < 0.1, "{mean}");
    }

    #[test]
    fn poisson_large_mean_uses_rejection_path() {
        let mut rng = SeededRng::new(22);
        let n = 20_000;
        let total: u64 = (0..n).map(|_| sample_poisson(&mut rng, 80.0).unwrap()).sum();
        let mean = total as f64 / n as f64;
        // sd of the mean is √(80/20000) ≈ 0.063
        assert!((mean - 80.0).abs() < 0.3, "{mean}");
    }

    #[test]
    fn closed_form_two_by_two_factor() {
        let s = Ar1Normal::new(2, 0.5).unwrap();
        let l = s.factor().unwrap();
        assert!((l.get(0, 0) - 1.0).abs() < 1e-15);
        assert_eq!(l.get(0, 1), 0.0);
        assert!((l.get(1, 0) - 0.5).abs() < 1e-15);
        assert!((l.get(1, 1) - 0.75_f64.sqrt()).abs() < 1e-15);
    }

    #[test]
    fn ar1_with_zero_rho_matches_standard_normal_bitwise() {
        let mut a = SeededRng::new(99);
        let mut b = SeededRng::new(99);
        for _ in 0..50 {
            let x = sample_mvn_ar1(&mut a, 5, 0.0).unwrap();
            let z = sample_standard_normal(&mut b, 5);
            assert_eq!(x, z);
        }
        assert_eq!(a.next_u64(), b.next_u64());
    }

    #[test]
    fn ar1_lag_one_correlation() {
        let sampler = Ar1Normal::new(3, 0.8).unwrap();
        let mut rng = SeededRng::new(5);
        let n = 100_000;
        let (mut s11, mut s22, mut s12) = (0.0, 0.0, 0.0);
        for _ in 0..n {
            let x = sampler.sample(&mut rng, 3);
            s11 += x[0] * x[0];
            s22 += x[1] * x[1];
            s12 += x[0] * x[1];
        }
        let corr = s12 / (s11 * s22).sqrt();
        assert!((corr - 0.8).abs() < 0.02, "{corr}");
    }
}
