//! Canonical-link generalized linear models.
//!
//! The response density is `c(y) exp{(yη − b(η))/φ}` with `η = xᵀβ`, so the
//! per-observation loss is `−yη + b(η)`, the mean is `b′(η)` and the
//! variance is `φ b″(η)`. Losses, gradients and Hessians are averages over
//! the rows of a [`Dataset`].

use crate::numerics::{
    blocked_sum, cholesky_solve, sample_bernoulli, sample_poisson, standard_normal, DenseMatrix,
    DenseVector, NumericsError, SeededRng,
};
use thiserror::Error;

/// `e^η` overflows shortly after this.
const MAX_EXP_ETA: f64 = 700.0;

/// Iterates beyond this norm are reported as divergent.
const DIVERGENCE_NORM: f64 = 1e6;

/// Smallest line-search step before giving up.
const MIN_STEP: f64 = 1.0 / (1u64 << 30) as f64;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum GlmError {
    #[error("linear predictor {eta} overflows the cumulant function")]
    Overflow { eta: f64 },
    #[error("dimension mismatch: expected {expected}, found {found}")]
    DimensionMismatch { expected: usize, found: usize },
    #[error("dataset has no rows")]
    Empty,
    #[error(transparent)]
    Numerics(#[from] NumericsError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum FamilyKind {
    Logistic,
    Poisson,
    Gaussian,
}

/// One exponential-family model with canonical link.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GlmFamily {
    kind: FamilyKind,
    dispersion: f64,
}

impl GlmFamily {
    pub const fn logistic() -> Self {
        Self {
            kind: FamilyKind::Logistic,
            dispersion: 1.0,
        }
    }

    pub const fn poisson() -> Self {
        Self {
            kind: FamilyKind::Poisson,
            dispersion: 1.0,
        }
    }

    /// Normal responses with variance `dispersion`.
    pub fn gaussian(dispersion: f64) -> Self {
        assert!(dispersion > 0.0 && dispersion.is_finite(), "dispersion must be positive");
        Self {
            kind: FamilyKind::Gaussian,
            dispersion,
        }
    }

    pub fn kind(&self) -> FamilyKind {
        self.kind
    }

    pub fn dispersion(&self) -> f64 {
        self.dispersion
    }

    pub fn name(&self) -> &'static str {
        match self.kind {
            FamilyKind::Logistic => "logistic",
            FamilyKind::Poisson => "poisson",
            FamilyKind::Gaussian => "gaussian",
        }
    }

    /// Cumulant function `b(η)`.
    pub fn b(&self, eta: f64) -> f64 {
        match self.kind {
            FamilyKind::Logistic => {
                if eta > 0.0 {
                    eta + (-eta).exp().ln_1p()
                } else {
                    eta.exp().ln_1p()
                }
            }
            FamilyKind::Poisson => eta.exp(),
            FamilyKind::Gaussian => 0.5 * eta * eta,
        }
    }

    /// Mean function `b′(η) = E(Y | x)`.
    pub fn b_prime(&self, eta: f64) -> f64 {
        match self.kind {
            FamilyKind::Logistic => sigmoid(eta),
            FamilyKind::Poisson => eta.exp(),
            FamilyKind::Gaussian => eta,
        }
    }

    /// Variance function `b″(η)`.
    pub fn b_double_prime(&self, eta: f64) -> f64 {
        match self.kind {
            FamilyKind::Logistic => {
                let e = (-eta.abs()).exp();
                e / ((1.0 + e) * (1.0 + e))
            }
            FamilyKind::Poisson => eta.exp(),
            FamilyKind::Gaussian => 1.0,
        }
    }

    fn check_eta(&self, eta: f64) -> Result<(), GlmError> {
        if !eta.is_finite() || (self.kind == FamilyKind::Poisson && eta > MAX_EXP_ETA) {
            return Err(GlmError::Overflow { eta });
        }
        Ok(())
    }

    /// Fitted mean numerically equal to a boundary of the mean space
    /// (probability 0 or 1, Poisson mean 0): the MLE sits at infinity.
    fn is_saturated(&self, eta: f64) -> bool {
        let eps = 10.0 * f64::EPSILON;
        match self.kind {
            FamilyKind::Logistic => (-eta.abs()).exp() < eps,
            FamilyKind::Poisson => eta.exp() < eps,
            FamilyKind::Gaussian => false,
        }
    }

    /// Draws `Y ~ f(· | x; β)`.
    pub fn sample_response(
        &self,
        rng: &mut SeededRng,
        x: &DenseVector,
        beta: &DenseVector,
    ) -> Result<f64, GlmError> {
        if x.len() != beta.len() {
            return Err(GlmError::DimensionMismatch {
                expected: beta.len(),
                found: x.len(),
            });
        }
        self.sample_at(rng, x.dot(beta))
    }

    /// Draws a response given the linear predictor.
    pub fn sample_at(&self, rng: &mut SeededRng, eta: f64) -> Result<f64, GlmError> {
        self.check_eta(eta)?;
        Ok(match self.kind {
            FamilyKind::Logistic => f64::from(sample_bernoulli(rng, sigmoid(eta))?),
            FamilyKind::Poisson => sample_poisson(rng, eta.exp())? as f64,
            FamilyKind::Gaussian => eta + self.dispersion.sqrt() * standard_normal(rng),
        })
    }
}

fn sigmoid(eta: f64) -> f64 {
    if eta >= 0.0 {
        1.0 / (1.0 + (-eta).exp())
    } else {
        let e = eta.exp();
        e / (1.0 + e)
    }
}

/// Design matrix `X` (N×p) paired with responses `y` (N).
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    design: DenseMatrix,
    response: DenseVector,
}

impl Dataset {
    pub fn new(design: DenseMatrix, response: DenseVector) -> Result<Self, GlmError> {
        if design.rows() != response.len() {
            return Err(GlmError::DimensionMismatch {
                expected: design.rows(),
                found: response.len(),
            });
        }
        Ok(Self { design, response })
    }

    pub fn design(&self) -> &DenseMatrix {
        &self.design
    }

    pub fn response(&self) -> &DenseVector {
        &self.response
    }

    pub fn n_rows(&self) -> usize {
        self.design.rows()
    }

    pub fn dim(&self) -> usize {
        self.design.cols()
    }

    /// Rows `start..end`.
    pub fn rows(&self, start: usize, end: usize) -> Dataset {
        Dataset {
            design: self.design.row_block(start, end),
            response: DenseVector::from_vec_unchecked(self.response.as_slice()[start..end].to_vec()),
        }
    }

    /// Stacks datasets in order.
    pub fn concat(parts: &[&Dataset]) -> Result<Dataset, GlmError> {
        let designs: Vec<&DenseMatrix> = parts.iter().map(|d| &d.design).collect();
        let design = DenseMatrix::vstack(&designs)?;
        let response: Vec<f64> = parts.iter().flat_map(|d| d.response.iter().copied()).collect();
        Dataset::new(design, DenseVector::from_vec_unchecked(response))
    }

    /// Rows reordered so that new row `i` is old row `order[i]`.
    pub fn permuted(&self, order: &[usize]) -> Dataset {
        assert_eq!(order.len(), self.n_rows(), "permutation length mismatch");
        let n = self.n_rows();
        let mut data = Vec::with_capacity(n * self.dim());
        for j in 0..self.dim() {
            let col = self.design.col(j);
            data.extend(order.iter().map(|&i| col[i]));
        }
        Dataset {
            design: DenseMatrix::from_col_major_unchecked(n, self.dim(), data),
            response: DenseVector::from_vec_unchecked(order.iter().map(|&i| self.response[i]).collect()),
        }
    }

    pub(crate) fn linear_predictor(&self, beta: &[f64]) -> Vec<f64> {
        self.design.mul_slice(beta)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum FitStatus {
    Converged,
    MaxIter,
    Diverged,
}

/// Fitted parameters with convergence diagnostics.
#[derive(Debug, Clone, PartialEq)]
pub struct EstimatorOutput {
    pub beta: DenseVector,
    pub iterations: usize,
    pub grad_norm: f64,
    pub status: FitStatus,
}

impl EstimatorOutput {
    pub fn converged(&self) -> bool {
        self.status == FitStatus::Converged
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NewtonSettings {
    /// Converged once `‖∇ℓ‖₂` is at or below this.
    pub tol: f64,
    pub max_iter: usize,
}

impl Default for NewtonSettings {
    fn default() -> Self {
        Self {
            tol: 1e-10,
            max_iter: 100,
        }
    }
}

/// A smooth loss that Newton's method can minimize.
pub trait Objective {
    fn dim(&self) -> usize;
    fn value(&self, beta: &DenseVector) -> Result<f64, GlmError>;
    /// Gradient and Hessian at `beta`.
    fn derivatives(&self, beta: &DenseVector) -> Result<(DenseVector, DenseMatrix), GlmError>;
    /// `true` when the minimizer is at infinity and `beta` is running there.
    fn is_saturated(&self, _beta: &DenseVector) -> bool {
        false
    }
}

/// Average negative log-likelihood of a GLM on a dataset.
#[derive(Debug, Clone, Copy)]
pub struct GlmLoss<'a> {
    pub family: &'a GlmFamily,
    pub data: &'a Dataset,
}

impl<'a> GlmLoss<'a> {
    pub fn new(family: &'a GlmFamily, data: &'a Dataset) -> Self {
        Self { family, data }
    }

    fn eta(&self, beta: &DenseVector) -> Result<Vec<f64>, GlmError> {
        if beta.len() != self.data.dim() {
            return Err(GlmError::DimensionMismatch {
                expected: self.data.dim(),
                found: beta.len(),
            });
        }
        if self.data.n_rows() == 0 {
            return Err(GlmError::Empty);
        }
        let eta = self.data.linear_predictor(beta.as_slice());
        for &e in &eta {
            self.family.check_eta(e)?;
        }
        Ok(eta)
    }

    /// Gradient alone, without forming the Hessian.
    pub fn gradient(&self, beta: &DenseVector) -> Result<DenseVector, GlmError> {
        let eta = self.eta(beta)?;
        let y = self.data.response.as_slice();
        let resid: Vec<f64> = eta.iter().zip(y).map(|(&e, &yi)| self.family.b_prime(e) - yi).collect();
        let n = self.data.n_rows() as f64;
        Ok(self.data.design.transpose_mul_slice(&resid).scale(1.0 / n))
    }
}

impl Objective for GlmLoss<'_> {
    fn dim(&self) -> usize {
        self.data.dim()
    }

    fn value(&self, beta: &DenseVector) -> Result<f64, GlmError> {
        let eta = self.eta(beta)?;
        let y = self.data.response.as_slice();
        let family = self.family;
        let total = blocked_sum(eta.len(), |i| -y[i] * eta[i] + family.b(eta[i]));
        Ok(total / eta.len() as f64)
    }

    fn derivatives(&self, beta: &DenseVector) -> Result<(DenseVector, DenseMatrix), GlmError> {
        let eta = self.eta(beta)?;
        let y = self.data.response.as_slice();
        let mut resid = Vec::with_capacity(eta.len());
        let mut weight = Vec::with_capacity(eta.len());
        for (&e, &yi) in eta.iter().zip(y) {
            resid.push(self.family.b_prime(e) - yi);
            weight.push(self.family.b_double_prime(e));
        }
        let inv_n = 1.0 / eta.len() as f64;
        let grad = self.data.design.transpose_mul_slice(&resid).scale(inv_n);
        let hess = self.data.design.weighted_gram(&weight).scale(inv_n);
        Ok((grad, hess))
    }

    fn is_saturated(&self, beta: &DenseVector) -> bool {
        self.data
            .linear_predictor(beta.as_slice())
            .iter()
            .any(|&e| self.family.is_saturated(e))
    }
}

/// `inner(β) − ⟨shift, β⟩`: same Hessian as `inner`, gradient moved by `shift`.
#[derive(Debug, Clone)]
pub struct ShiftedObjective<O> {
    pub inner: O,
    pub shift: DenseVector,
}

impl<O: Objective> Objective for ShiftedObjective<O> {
    fn dim(&self) -> usize {
        self.inner.dim()
    }

    fn value(&self, beta: &DenseVector) -> Result<f64, GlmError> {
        Ok(self.inner.value(beta)? - self.shift.dot(beta))
    }

    fn derivatives(&self, beta: &DenseVector) -> Result<(DenseVector, DenseMatrix), GlmError> {
        let (g, h) = self.inner.derivatives(beta)?;
        Ok((g.sub(&self.shift), h))
    }

    fn is_saturated(&self, beta: &DenseVector) -> bool {
        self.inner.is_saturated(beta)
    }
}

/// Average negative log-likelihood `(1/N) Σ {−yᵢxᵢᵀβ + b(xᵢᵀβ)}`.
pub fn nll(family: &GlmFamily, data: &Dataset, beta: &DenseVector) -> Result<f64, GlmError> {
    GlmLoss::new(family, data).value(beta)
}

/// `−(1/N) Xᵀ(y − b′(Xβ))`.
pub fn gradient(family: &GlmFamily, data: &Dataset, beta: &DenseVector) -> Result<DenseVector, GlmError> {
    GlmLoss::new(family, data).gradient(beta)
}

/// `(1/N) Xᵀ diag(b″(Xβ)) X`.
pub fn hessian(family: &GlmFamily, data: &Dataset, beta: &DenseVector) -> Result<DenseMatrix, GlmError> {
    Ok(GlmLoss::new(family, data).derivatives(beta)?.1)
}

/// Unconstrained MLE by damped Newton from `init`.
pub fn fit_mle(
    family: &GlmFamily,
    data: &Dataset,
    init: &DenseVector,
    settings: &NewtonSettings,
) -> Result<EstimatorOutput, GlmError> {
    minimize_newton(&GlmLoss::new(family, data), init, settings)
}

/// Newton's method with step halving until the objective does not increase.
///
/// Errors are reserved for malformed input; numerical breakdown (overflow,
/// an indefinite Hessian, runaway iterates, a saturated fit) is reported as
/// [`FitStatus::Diverged`].
pub fn minimize_newton<O: Objective>(
    objective: &O,
    init: &DenseVector,
    settings: &NewtonSettings,
) -> Result<EstimatorOutput, GlmError> {
    if init.len() != objective.dim() {
        return Err(GlmError::DimensionMismatch {
            expected: objective.dim(),
            found: init.len(),
        });
    }
    let diverged = |beta: DenseVector, iterations, grad_norm| EstimatorOutput {
        beta,
        iterations,
        grad_norm,
        status: FitStatus::Diverged,
    };

    let mut beta = init.clone();
    let mut f = match objective.value(&beta) {
        Ok(f) => f,
        Err(GlmError::Overflow { .. }) => return Ok(diverged(beta, 0, f64::INFINITY)),
        Err(e) => return Err(e),
    };
    let mut iterations = 0;
    loop {
        let (g, h) = match objective.derivatives(&beta) {
            Ok(d) => d,
            Err(GlmError::Overflow { .. }) => return Ok(diverged(beta, iterations, f64::INFINITY)),
            Err(e) => return Err(e),
        };
        let grad_norm = g.norm();
        if grad_norm <= settings.tol {
            let status = if objective.is_saturated(&beta) {
                FitStatus::Diverged
            } else {
                FitStatus::Converged
            };
            return Ok(EstimatorOutput {
                beta,
                iterations,
                grad_norm,
                status,
            });
        }
        if iterations >= settings.max_iter {
            let status = if objective.is_saturated(&beta) {
                FitStatus::Diverged
            } else {
                FitStatus::MaxIter
            };
            return Ok(EstimatorOutput {
                beta,
                iterations,
                grad_norm,
                status,
            });
        }
        let direction = match cholesky_solve(&h, &g) {
            Ok(d) => d,
            Err(NumericsError::NotPositiveDefinite { .. }) => return Ok(diverged(beta, iterations, grad_norm)),
            Err(e) => return Err(e.into()),
        };
        // Below this Newton decrement, objective differences are rounding
        // noise and the full step is taken unchecked.
        let negligible = g.dot(&direction) <= 64.0 * f64::EPSILON * f.abs().max(1.0);
        let mut step = 1.0;
        let accepted = loop {
            let trial = beta.add_scaled(-step, &direction);
            if trial.is_all_finite() {
                match objective.value(&trial) {
                    Ok(ft) if ft <= f || negligible => break Some((trial, ft)),
                    Ok(_) | Err(GlmError::Overflow { .. }) => {}
                    Err(e) => return Err(e),
                }
            }
            step *= 0.5;
            if step < MIN_STEP {
                break None;
            }
        };
        let Some((next, f_next)) = accepted else {
            // No descent along the Newton direction: stalled.
            return Ok(EstimatorOutput {
                beta,
                iterations,
                grad_norm,
                status: FitStatus::MaxIter,
            });
        };
        iterations += 1;
        beta = next;
        f = f_next;
        if beta.norm() > DIVERGENCE_NORM {
            return Ok(diverged(beta, iterations, grad_norm));
        }
    }
}
