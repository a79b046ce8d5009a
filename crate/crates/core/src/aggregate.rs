//! Aggregation of local estimates into one global estimate.
//!
//! One-shot aggregators take the local fits only: [`naive_average`],
//! [`sign_calibrated_average`], [`savgm`], and [`reboot`] /
//! [`reboot_pr`], which refit the model on parametric bootstrap samples
//! drawn from every local model. [`csl`] spends extra rounds of gradient
//! communication, and [`fed_reboot`] alternates local training with ReBoot
//! aggregation.
//!
//! Machines are always processed in ascending `machine_id` order, so every
//! result is independent of the order of the input list.

use crate::glm::{
    fit_mle, gradient, minimize_newton, Dataset, EstimatorOutput, FitStatus, GlmError, GlmFamily, GlmLoss,
    NewtonSettings, ShiftedObjective,
};
use crate::numerics::{Ar1Normal, DenseMatrix, DenseVector, NumericsError, SeededRng};
use crate::phase_retrieval::{gradient_descent, pr_gradient, wirtinger_flow, PrConfig, PrError};
use std::sync::Arc;
use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum AggregateError {
    #[error("no usable local estimates")]
    EmptyInput,
    #[error("dimension mismatch: expected {expected}, found {found}")]
    DimensionMismatch { expected: usize, found: usize },
    #[error("subsampling rate {0} outside (0, 1)")]
    InvalidRate(f64),
    #[error("invalid bootstrap plan: {0}")]
    InvalidPlan(String),
    #[error("machine count mismatch: {full} full fits, {sub} subsample fits")]
    MachineCountMismatch { full: usize, sub: usize },
    #[error("at least one round is required")]
    NoRounds,
    #[error(transparent)]
    Glm(#[from] GlmError),
    #[error(transparent)]
    PhaseRetrieval(#[from] PrError),
    #[error(transparent)]
    Numerics(#[from] NumericsError),
}

/// A local estimate as received by the central server.
#[derive(Debug, Clone, PartialEq)]
pub struct LocalFit {
    pub machine_id: usize,
    pub beta: DenseVector,
    pub status: FitStatus,
}

impl LocalFit {
    pub fn new(machine_id: usize, beta: DenseVector, status: FitStatus) -> Self {
        Self {
            machine_id,
            beta,
            status,
        }
    }

    pub fn from_output(machine_id: usize, out: EstimatorOutput) -> Self {
        Self::new(machine_id, out.beta, out.status)
    }
}

/// Where bootstrap feature vectors come from.
#[derive(Debug, Clone, PartialEq)]
pub enum FeatureSource {
    StdNormal,
    Ar1 { rho: f64 },
    Uniform01,
    /// The same unlabeled feature pool for every machine; its first
    /// `n_tilde` rows are used.
    ExternalPool(Arc<DenseMatrix>),
}

#[derive(Debug, Clone, PartialEq)]
pub struct BootstrapPlan {
    /// Draws per local model.
    pub n_tilde: usize,
    pub features: FeatureSource,
    /// Noise scale of phase-retrieval bootstrap responses.
    pub response_noise_sd: f64,
}

impl BootstrapPlan {
    pub fn new(n_tilde: usize, features: FeatureSource) -> Self {
        Self {
            n_tilde,
            features,
            response_noise_sd: 1.0,
        }
    }

    fn validate(&self, p: usize) -> Result<(), AggregateError> {
        if self.n_tilde == 0 {
            return Err(AggregateError::InvalidPlan("n_tilde must be at least 1".into()));
        }
        if let FeatureSource::ExternalPool(pool) = &self.features {
            if pool.cols() != p {
                return Err(AggregateError::DimensionMismatch {
                    expected: p,
                    found: pool.cols(),
                });
            }
            if pool.rows() < self.n_tilde {
                return Err(AggregateError::InvalidPlan(format!(
                    "feature pool has {} rows, {} requested",
                    pool.rows(),
                    self.n_tilde
                )));
            }
        }
        Ok(())
    }
}

/// Converged fits in machine order; errors on an empty set or mixed dimensions.
fn usable(fits: &[LocalFit]) -> Result<Vec<&LocalFit>, AggregateError> {
    let mut out: Vec<&LocalFit> = fits.iter().filter(|f| f.status == FitStatus::Converged).collect();
    out.sort_by_key(|f| f.machine_id);
    let first = out.first().ok_or(AggregateError::EmptyInput)?;
    let p = first.beta.len();
    if let Some(bad) = out.iter().find(|f| f.beta.len() != p) {
        return Err(AggregateError::DimensionMismatch {
            expected: p,
            found: bad.beta.len(),
        });
    }
    Ok(out)
}

fn mean_of<'a>(vectors: impl ExactSizeIterator<Item = &'a DenseVector>) -> DenseVector {
    let count = vectors.len() as f64;
    let mut acc: Option<Vec<f64>> = None;
    for v in vectors {
        match acc.as_mut() {
            None => acc = Some(v.as_slice().to_vec()),
            Some(a) => a.iter_mut().zip(v.iter()).for_each(|(s, x)| *s += x),
        }
    }
    DenseVector::from_vec_unchecked(acc.unwrap_or_default().into_iter().map(|s| s / count).collect())
}

/// Number of fits that [`naive_average`] and friends would drop.
pub fn dropped_count(fits: &[LocalFit]) -> usize {
    fits.iter().filter(|f| f.status != FitStatus::Converged).count()
}

/// Arithmetic mean of the converged local estimates.
pub fn naive_average(fits: &[LocalFit]) -> Result<DenseVector, AggregateError> {
    let fits = usable(fits)?;
    Ok(mean_of(fits.iter().map(|f| &f.beta)))
}

/// Averages after flipping each estimate so its first entry is positive.
///
/// An estimate whose first entry is exactly zero is instead aligned by the
/// sign of its inner product with the reference: the first (in machine
/// order) estimate with a nonzero first entry, after calibration.
pub fn sign_calibrated_average(fits: &[LocalFit]) -> Result<DenseVector, AggregateError> {
    let fits = usable(fits)?;
    let reference = fits
        .iter()
        .find(|f| f.beta[0] != 0.0)
        .map(|f| if f.beta[0] < 0.0 { f.beta.scale(-1.0) } else { f.beta.clone() })
        .unwrap_or_else(|| fits[0].beta.clone());
    let calibrated: Vec<DenseVector> = fits
        .iter()
        .map(|f| {
            let first = f.beta[0];
            let flip = if first != 0.0 { first < 0.0 } else { f.beta.dot(&reference) < 0.0 };
            if flip {
                f.beta.scale(-1.0)
            } else {
                f.beta.clone()
            }
        })
        .collect();
    Ok(mean_of(calibrated.iter()))
}

/// Subsampled average mixture: `(β̄ − r β̄_sub) / (1 − r)`, where `β̄_sub`
/// averages local fits on subsamples of rate `r`.
///
/// Only machines whose full and subsample fits both converged enter the
/// two averages.
pub fn savgm(fits_full: &[LocalFit], fits_sub: &[LocalFit], rate: f64) -> Result<DenseVector, AggregateError> {
    if !(rate > 0.0 && rate < 1.0) {
        return Err(AggregateError::InvalidRate(rate));
    }
    if fits_full.len() != fits_sub.len() {
        return Err(AggregateError::MachineCountMismatch {
            full: fits_full.len(),
            sub: fits_sub.len(),
        });
    }
    let sub_ok: std::collections::BTreeSet<usize> = fits_sub
        .iter()
        .filter(|f| f.status == FitStatus::Converged)
        .map(|f| f.machine_id)
        .collect();
    let full_ok: std::collections::BTreeSet<usize> = fits_full
        .iter()
        .filter(|f| f.status == FitStatus::Converged)
        .map(|f| f.machine_id)
        .collect();
    let keep = |f: &&LocalFit| sub_ok.contains(&f.machine_id) && full_ok.contains(&f.machine_id);
    let full: Vec<LocalFit> = fits_full.iter().filter(keep).cloned().collect();
    let sub: Vec<LocalFit> = fits_sub.iter().filter(keep).cloned().collect();
    let full_mean = naive_average(&full)?;
    let sub_mean = naive_average(&sub)?;
    if full_mean.len() != sub_mean.len() {
        return Err(AggregateError::DimensionMismatch {
            expected: full_mean.len(),
            found: sub_mean.len(),
        });
    }
    Ok(full_mean.add_scaled(-rate, &sub_mean).scale(1.0 / (1.0 - rate)))
}

fn check_shards(shards: &[Dataset], p: usize) -> Result<(), AggregateError> {
    if shards.is_empty() {
        return Err(AggregateError::EmptyInput);
    }
    if let Some(bad) = shards.iter().find(|s| s.dim() != p) {
        return Err(AggregateError::DimensionMismatch {
            expected: p,
            found: bad.dim(),
        });
    }
    Ok(())
}

fn mean_gradient<F>(shards: &[Dataset], mut grad: F) -> Result<DenseVector, AggregateError>
where
    F: FnMut(&Dataset) -> Result<DenseVector, AggregateError>,
{
    let grads = shards.iter().map(&mut grad).collect::<Result<Vec<_>, _>>()?;
    Ok(mean_of(grads.iter()))
}

/// One CSL round for a GLM: minimize on shard 0 the surrogate
/// `ℓ₀(β) − ⟨∇ℓ₀(anchor) − ḡ, β⟩`, where `ḡ` is the mean of all shard
/// gradients at `anchor`. Newton starts from `anchor`.
pub fn csl_round(
    anchor: &DenseVector,
    shards: &[Dataset],
    family: &GlmFamily,
    settings: &NewtonSettings,
) -> Result<EstimatorOutput, AggregateError> {
    check_shards(shards, anchor.len())?;
    let global = mean_gradient(shards, |s| Ok(gradient(family, s, anchor)?))?;
    let local = gradient(family, &shards[0], anchor)?;
    let surrogate = ShiftedObjective {
        inner: GlmLoss::new(family, &shards[0]),
        shift: local.sub(&global),
    };
    Ok(minimize_newton(&surrogate, anchor, settings)?)
}

/// `rounds` successive CSL rounds starting at `anchor`. Stops early and
/// returns the failing round's output if a surrogate fit does not converge.
pub fn csl(
    anchor: &DenseVector,
    shards: &[Dataset],
    family: &GlmFamily,
    rounds: usize,
    settings: &NewtonSettings,
) -> Result<EstimatorOutput, AggregateError> {
    if rounds == 0 {
        return Err(AggregateError::NoRounds);
    }
    let mut out = csl_round(anchor, shards, family, settings)?;
    for _ in 1..rounds {
        if !out.converged() {
            break;
        }
        out = csl_round(&out.beta, shards, family, settings)?;
    }
    Ok(out)
}

/// One CSL round for phase retrieval; the surrogate is minimized by
/// fixed-step gradient descent from `anchor`.
pub fn csl_pr_round(anchor: &DenseVector, shards: &[Dataset], cfg: &PrConfig) -> Result<EstimatorOutput, AggregateError> {
    check_shards(shards, anchor.len())?;
    let global = mean_gradient(shards, |s| Ok(pr_gradient(s, anchor)?))?;
    let shift = pr_gradient(&shards[0], anchor)?.sub(&global);
    let master = &shards[0];
    Ok(gradient_descent(|b| Ok(pr_gradient(master, b)?.sub(&shift)), anchor, cfg)?)
}

pub fn csl_pr(
    anchor: &DenseVector,
    shards: &[Dataset],
    rounds: usize,
    cfg: &PrConfig,
) -> Result<EstimatorOutput, AggregateError> {
    if rounds == 0 {
        return Err(AggregateError::NoRounds);
    }
    let mut out = csl_pr_round(anchor, shards, cfg)?;
    for _ in 1..rounds {
        if out.status == FitStatus::Diverged {
            break;
        }
        out = csl_pr_round(&out.beta, shards, cfg)?;
    }
    Ok(out)
}

enum FeatureSampler<'a> {
    StdNormal,
    Ar1(Ar1Normal),
    Uniform01,
    Pool(&'a DenseMatrix),
}

impl<'a> FeatureSampler<'a> {
    fn new(source: &'a FeatureSource, p: usize) -> Result<Self, AggregateError> {
        Ok(match source {
            FeatureSource::StdNormal => Self::StdNormal,
            FeatureSource::Ar1 { rho } => Self::Ar1(Ar1Normal::new(p, *rho)?),
            FeatureSource::Uniform01 => Self::Uniform01,
            FeatureSource::ExternalPool(pool) => Self::Pool(pool),
        })
    }

    /// Fills rows `offset..offset + count` of the column-major buffer `data`
    /// (with `total_rows` rows).
    fn fill(&self, rng: &mut SeededRng, data: &mut [f64], total_rows: usize, offset: usize, count: usize, p: usize) {
        let mut row = vec![0.0; p];
        for i in 0..count {
            match self {
                Self::StdNormal => row.iter_mut().for_each(|x| *x = crate::numerics::standard_normal(rng)),
                Self::Ar1(s) => s.sample_into(rng, &mut row),
                Self::Uniform01 => row.iter_mut().for_each(|x| *x = rng.next_f64()),
                Self::Pool(pool) => row.iter_mut().enumerate().for_each(|(j, x)| *x = pool.get(i, j)),
            }
            for (j, &x) in row.iter().enumerate() {
                data[j * total_rows + offset + i] = x;
            }
        }
    }
}

/// Pools `n_tilde` bootstrap draws per converged local model, machine-major.
///
/// Machine `k` draws its features from `rng.substream(k).substream(0)` and
/// its responses from `rng.substream(k).substream(1)`, so the pooled design
/// depends only on the plan, the seed and the set of machine ids.
fn bootstrap_pool<R>(
    fits: &[LocalFit],
    plan: &BootstrapPlan,
    rng: &SeededRng,
    mut respond: R,
) -> Result<Dataset, AggregateError>
where
    R: FnMut(&mut SeededRng, f64) -> Result<f64, AggregateError>,
{
    let fits = usable(fits)?;
    let p = fits[0].beta.len();
    plan.validate(p)?;
    let sampler = FeatureSampler::new(&plan.features, p)?;
    let n_tilde = plan.n_tilde;
    let total = fits.len() * n_tilde;
    let mut design = vec![0.0; total * p];
    let mut response = Vec::with_capacity(total);
    for (slot, fit) in fits.iter().enumerate() {
        let machine_rng = rng.substream(fit.machine_id as u64);
        let mut feature_rng = machine_rng.substream(0);
        let mut response_rng = machine_rng.substream(1);
        let offset = slot * n_tilde;
        sampler.fill(&mut feature_rng, &mut design, total, offset, n_tilde, p);
        let beta = fit.beta.as_slice();
        for i in 0..n_tilde {
            let eta: f64 = (0..p).map(|j| design[j * total + offset + i] * beta[j]).sum();
            response.push(respond(&mut response_rng, eta)?);
        }
    }
    let design = DenseMatrix::from_col_major(total, p, design)?;
    Ok(Dataset::new(design, DenseVector::new(response)?)?)
}

/// The pooled GLM bootstrap sample that [`reboot`] refits.
pub fn glm_bootstrap_sample(
    fits: &[LocalFit],
    family: &GlmFamily,
    plan: &BootstrapPlan,
    rng: &SeededRng,
) -> Result<Dataset, AggregateError> {
    bootstrap_pool(fits, plan, rng, |r, eta| Ok(family.sample_at(r, eta)?))
}

/// The pooled phase-retrieval bootstrap sample that [`reboot_pr`] refits.
pub fn pr_bootstrap_sample(fits: &[LocalFit], plan: &BootstrapPlan, rng: &SeededRng) -> Result<Dataset, AggregateError> {
    let sd = plan.response_noise_sd;
    bootstrap_pool(fits, plan, rng, |r, eta| {
        Ok(eta * eta + sd * crate::numerics::standard_normal(r))
    })
}

/// ReBoot for a GLM: refit the MLE on the pooled bootstrap sample, starting
/// from the average of the local fits.
pub fn reboot(
    fits: &[LocalFit],
    family: &GlmFamily,
    plan: &BootstrapPlan,
    rng: &SeededRng,
    settings: &NewtonSettings,
) -> Result<EstimatorOutput, AggregateError> {
    let pooled = glm_bootstrap_sample(fits, family, plan, rng)?;
    let init = naive_average(fits)?;
    Ok(fit_mle(family, &pooled, &init, settings)?)
}

/// ReBoot for phase retrieval: Wirtinger Flow on the pooled bootstrap
/// sample, started at the first usable local estimate.
pub fn reboot_pr(
    fits: &[LocalFit],
    plan: &BootstrapPlan,
    rng: &SeededRng,
    cfg: &PrConfig,
) -> Result<EstimatorOutput, AggregateError> {
    let pooled = pr_bootstrap_sample(fits, plan, rng)?;
    let init = usable(fits)?[0].beta.clone();
    Ok(wirtinger_flow(&pooled, &init, cfg)?)
}

/// Local training between FedReBoot rounds: `epochs` full-batch gradient
/// steps with a fixed learning rate.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LocalSteps {
    pub epochs: usize,
    pub learning_rate: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct FedRebootOutput {
    pub beta: DenseVector,
    /// Global estimate after each round.
    pub history: Vec<DenseVector>,
    pub status: FitStatus,
}

/// Federated ReBoot. Round `t` (1-based) starts every machine from the
/// current global estimate, runs the local steps, and aggregates with
/// [`reboot`] using `rng.substream(t)`.
#[allow(clippy::too_many_arguments)]
pub fn fed_reboot(
    shards: &[Dataset],
    family: &GlmFamily,
    local: &LocalSteps,
    rounds: usize,
    plan: &BootstrapPlan,
    rng: &SeededRng,
    init: &DenseVector,
    settings: &NewtonSettings,
) -> Result<FedRebootOutput, AggregateError> {
    if rounds == 0 || local.epochs == 0 {
        return Err(AggregateError::NoRounds);
    }
    check_shards(shards, init.len())?;
    let mut global = init.clone();
    let mut history = Vec::with_capacity(rounds);
    let mut status = FitStatus::Converged;
    for t in 1..=rounds {
        let mut fits = Vec::with_capacity(shards.len());
        for (k, shard) in shards.iter().enumerate() {
            let mut beta = global.clone();
            for _ in 0..local.epochs {
                beta = beta.add_scaled(-local.learning_rate, &gradient(family, shard, &beta)?);
            }
            fits.push(LocalFit::new(k, beta, FitStatus::Converged));
        }
        let out = reboot(&fits, family, plan, &rng.substream(t as u64), settings)?;
        status = out.status;
        global = out.beta;
        history.push(global.clone());
        if status != FitStatus::Converged {
            break;
        }
    }
    Ok(FedRebootOutput {
        beta: global,
        history,
        status,
    })
}
