//! Noisy real phase retrieval, `Y = (xᵀβ*)² + ε`.
//!
//! The loss is the square loss `{Y − (xᵀβ)²}²`. Gradients here follow the
//! Wirtinger Flow convention and are a quarter of the derivative of that
//! loss; the factor is absorbed into the step size `μ`.

use crate::glm::{Dataset, EstimatorOutput, FitStatus};
use crate::numerics::{blocked_sum, dot, leading_eigenpair, standard_normal, DenseMatrix, DenseVector, NumericsError, SeededRng};
use thiserror::Error;

/// Final-gradient threshold for reporting convergence.
const CONVERGED_GRAD_NORM: f64 = 1e-6;
const DIVERGENCE_NORM: f64 = 1e6;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum PrError {
    #[error("leading eigenvalue {lambda} of the spectral matrix is not positive")]
    BadSpectrum { lambda: f64 },
    #[error("dimension mismatch: expected {expected}, found {found}")]
    DimensionMismatch { expected: usize, found: usize },
    #[error(transparent)]
    Numerics(#[from] NumericsError),
}

/// Fixed-step gradient descent settings.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PrConfig {
    pub t_max: usize,
    pub mu: f64,
}

impl PrConfig {
    pub fn new(t_max: usize, mu: f64) -> Self {
        assert!(mu > 0.0 && mu.is_finite(), "step size must be positive");
        Self { t_max, mu }
    }

    /// Local-solver defaults: 500 steps, `μ = 0.002` for `p ≤ 5` and
    /// `μ = 0.001` above.
    pub fn local_default(p: usize) -> Self {
        Self::new(500, if p <= 5 { 0.002 } else { 0.001 })
    }

    /// Refit on the pooled bootstrap sample.
    pub fn refit_default() -> Self {
        Self::new(500, 0.01)
    }
}

fn check_dim(data: &Dataset, beta: &DenseVector) -> Result<(), PrError> {
    if data.dim() != beta.len() {
        return Err(PrError::DimensionMismatch {
            expected: data.dim(),
            found: beta.len(),
        });
    }
    Ok(())
}

/// `(1/N) Σ {yᵢ − (xᵢᵀβ)²}²`.
pub fn pr_loss(data: &Dataset, beta: &DenseVector) -> Result<f64, PrError> {
    check_dim(data, beta)?;
    let eta = data.linear_predictor(beta.as_slice());
    let y = data.response().as_slice();
    let total = blocked_sum(eta.len(), |i| {
        let r = y[i] - eta[i] * eta[i];
        r * r
    });
    Ok(total / eta.len() as f64)
}

/// `(1/N) Σ {(xᵢᵀβ)² − yᵢ}(xᵢᵀβ) xᵢ`, one quarter of `∇ pr_loss`.
pub fn pr_gradient(data: &Dataset, beta: &DenseVector) -> Result<DenseVector, PrError> {
    check_dim(data, beta)?;
    let eta = data.linear_predictor(beta.as_slice());
    let y = data.response().as_slice();
    let w: Vec<f64> = eta.iter().zip(y).map(|(&e, &yi)| (e * e - yi) * e).collect();
    Ok(data.design().transpose_mul_slice(&w).scale(1.0 / eta.len() as f64))
}

/// `Y = (1/N) Σ yᵢ xᵢ xᵢᵀ`.
pub fn spectral_matrix(data: &Dataset) -> DenseMatrix {
    let n = data.n_rows() as f64;
    data.design().weighted_gram(data.response().as_slice()).scale(1.0 / n)
}

/// `(λ̂/3)^{1/2} v̂` from the top eigenpair of the spectral matrix; `v̂` has
/// its first nonzero entry positive.
pub fn spectral_init(data: &Dataset) -> Result<DenseVector, PrError> {
    let y = spectral_matrix(data);
    let (lambda, v) = leading_eigenpair(&y, 1e-10, 10_000)?;
    if !(lambda > 0.0) {
        return Err(PrError::BadSpectrum { lambda });
    }
    Ok(v.scale((lambda / 3.0).sqrt()))
}

/// Exactly `t_max` fixed steps `β ← β − μ g(β)` from `init`.
pub fn gradient_descent<G>(mut grad: G, init: &DenseVector, cfg: &PrConfig) -> Result<EstimatorOutput, PrError>
where
    G: FnMut(&DenseVector) -> Result<DenseVector, PrError>,
{
    let mut beta = init.clone();
    for t in 0..cfg.t_max {
        let g = grad(&beta)?;
        let next = beta.add_scaled(-cfg.mu, &g);
        if !next.is_all_finite() || next.norm() > DIVERGENCE_NORM {
            return Ok(EstimatorOutput {
                grad_norm: g.norm(),
                beta,
                iterations: t,
                status: FitStatus::Diverged,
            });
        }
        beta = next;
    }
    let grad_norm = grad(&beta)?.norm();
    let status = if grad_norm <= CONVERGED_GRAD_NORM {
        FitStatus::Converged
    } else {
        FitStatus::MaxIter
    };
    Ok(EstimatorOutput {
        beta,
        iterations: cfg.t_max,
        grad_norm,
        status,
    })
}

/// Wirtinger Flow descent on the phase-retrieval loss from `init`.
pub fn wirtinger_flow(data: &Dataset, init: &DenseVector, cfg: &PrConfig) -> Result<EstimatorOutput, PrError> {
    check_dim(data, init)?;
    gradient_descent(|b| pr_gradient(data, b), init, cfg)
}

/// Spectral initialization followed by Wirtinger Flow.
pub fn fit_local(data: &Dataset, cfg: &PrConfig) -> Result<EstimatorOutput, PrError> {
    let init = spectral_init(data)?;
    wirtinger_flow(data, &init, cfg)
}

/// `(xᵀβ)² + ε`, `ε ~ N(0, 1)`.
pub fn sample_pr_response(rng: &mut SeededRng, x: &DenseVector, beta: &DenseVector) -> f64 {
    sample_pr_response_with_noise(rng, x, beta, 1.0)
}

/// `(xᵀβ)² + noise_sd·z`. Consumes one normal draw even when `noise_sd = 0`.
pub fn sample_pr_response_with_noise(rng: &mut SeededRng, x: &DenseVector, beta: &DenseVector, noise_sd: f64) -> f64 {
    let eta = dot(x.as_slice(), beta.as_slice());
    eta * eta + noise_sd * standard_normal(rng)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn v(x: &[f64]) -> DenseVector {
        DenseVector::new(x.to_vec()).unwrap()
    }

    fn data(rows: &[&[f64]], y: &[f64]) -> Dataset {
        Dataset::new(DenseMatrix::from_rows(rows).unwrap(), v(y)).unwrap()
    }

    #[test]
    fn loss_examples() {
        assert_eq!(pr_loss(&data(&[&[1.0]], &[0.0]), &v(&[1.0])).unwrap(), 1.0);
        let d = data(&[&[1.0, 2.0], &[-1.0, 0.5]], &[25.0, 0.0]);
        assert_eq!(pr_loss(&d, &v(&[1.0, 2.0])).unwrap(), 0.0);
        assert_eq!(
            pr_loss(&d, &v(&[0.3, -0.7])).unwrap(),
            pr_loss(&d, &v(&[-0.3, 0.7])).unwrap()
        );
    }

    #[test]
    fn gradient_zero_at_noiseless_truth_and_odd() {
        let beta = v(&[1.0, -0.5]);
        let rows: &[&[f64]] = &[&[0.3, 1.0], &[-1.1, 0.2], &[2.0, 0.7]];
        let x = DenseMatrix::from_rows(rows).unwrap();
        let y: Vec<f64> = x.mul_vec(&beta).iter().map(|e| e * e).collect();
        let d = Dataset::new(x, v(&y)).unwrap();
        assert!(pr_gradient(&d, &beta).unwrap().norm() < 1e-15);
        let probe = v(&[0.4, 0.9]);
        let g = pr_gradient(&d, &probe).unwrap();
        let g_neg = pr_gradient(&d, &probe.scale(-1.0)).unwrap();
        assert_eq!(g, g_neg.scale(-1.0));
    }

    #[test]
    fn one_by_one_spectral_init() {
        let d = data(&[&[1.0], &[1.0], &[1.0]], &[4.0, 4.0, 4.0]);
        let b = spectral_init(&d).unwrap();
        assert!((b[0] - (4.0_f64 / 3.0).sqrt()).abs() < 1e-12);
    }

    #[test]
    fn negative_spectrum_is_rejected() {
        let d = data(&[&[1.0], &[1.0]], &[-1.0, -2.0]);
        assert!(matches!(spectral_init(&d), Err(PrError::BadSpectrum { .. })));
    }

    #[test]
    fn single_step_matches_hand_computation() {
        // x = (1), (2); y = 1, 3; β₀ = 0.5.
        // g₀ = ½[(0.25 − 1)(0.5)(1) + (1 − 3)(1)(2)] = ½[−0.375 − 4] = −2.1875
        let d = data(&[&[1.0], &[2.0]], &[1.0, 3.0]);
        let out = wirtinger_flow(&d, &v(&[0.5]), &PrConfig::new(1, 0.1)).unwrap();
        assert!((out.beta[0] - (0.5 + 0.1 * 2.1875)).abs() < 1e-15);
        assert_eq!(out.iterations, 1);
    }

    #[test]
    fn truth_is_a_fixed_point() {
        let beta = v(&[0.7, -1.3]);
        let x = DenseMatrix::from_rows(&[[1.0, 0.0], [0.5, 2.0], [-1.0, 1.0]]).unwrap();
        let y: Vec<f64> = x.mul_vec(&beta).iter().map(|e| e * e).collect();
        let d = Dataset::new(x, v(&y)).unwrap();
        let out = wirtinger_flow(&d, &beta, &PrConfig::new(50, 0.01)).unwrap();
        assert_eq!(out.beta, beta);
        assert_eq!(out.status, FitStatus::Converged);
    }

    #[test]
    fn runaway_steps_are_diverged() {
        let d = data(&[&[1.0], &[2.0]], &[1.0, 3.0]);
        let out = wirtinger_flow(&d, &v(&[5.0]), &PrConfig::new(100, 10.0)).unwrap();
        assert_eq!(out.status, FitStatus::Diverged);
    }

    #[test]
    fn noiseless_response() {
        let mut rng = SeededRng::new(0);
        assert_eq!(sample_pr_response_with_noise(&mut rng, &v(&[2.0]), &v(&[3.0]), 0.0), 36.0);
    }
}
