//! Monte-Carlo comparison of the aggregators on simulated data.
//!
//! A [`Scenario`] fixes the data-generating model, the total sample size,
//! the grid of machine counts and the methods to run. Replication `r`
//! draws one dataset from `SeededRng::new(master_seed).substream(r)` and
//! reuses it for every `m` in the grid, so methods and machine counts are
//! compared on common random numbers.

use crate::aggregate::{
    csl_pr_round, csl_round, naive_average, reboot, reboot_pr, savgm, sign_calibrated_average, AggregateError,
    BootstrapPlan, FeatureSource, LocalFit,
};
use crate::glm::{fit_mle, Dataset, FitStatus, GlmError, GlmFamily, NewtonSettings};
use crate::numerics::{standard_normal, Ar1Normal, DenseMatrix, DenseVector, NumericsError, SeededRng};
use crate::phase_retrieval::{self, PrConfig};
use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;
use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum SimError {
    #[error("{n} rows cannot be split evenly across {m} machines")]
    IndivisibleSplit { n: usize, m: usize },
    #[error("no estimates to summarize")]
    EmptyInput,
    #[error("invalid scenario: {0}")]
    InvalidScenario(String),
    #[error("could not build thread pool: {0}")]
    ThreadPool(String),
    #[error(transparent)]
    Glm(#[from] GlmError),
    #[error(transparent)]
    Numerics(#[from] NumericsError),
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum ScenarioKind {
    /// `x ~ N(0, I)`, Bernoulli responses.
    LogisticIso,
    /// `x ~ N(0, Σ)` with `Σᵢⱼ = ρ^|i−j|`, Bernoulli responses.
    LogisticAr1 { rho: f64 },
    /// `x ~ U[0, 1]^p`, Poisson responses.
    PoissonUniform,
    /// `x ~ N(0, I)`, `Y = (xᵀβ*)² + ε`.
    PhaseRetrieval,
}

impl ScenarioKind {
    pub fn family(&self) -> Option<GlmFamily> {
        match self {
            Self::LogisticIso | Self::LogisticAr1 { .. } => Some(GlmFamily::logistic()),
            Self::PoissonUniform => Some(GlmFamily::poisson()),
            Self::PhaseRetrieval => None,
        }
    }

    /// Feature distribution the data were drawn from.
    pub fn true_features(&self) -> FeatureSource {
        match self {
            Self::LogisticIso | Self::PhaseRetrieval => FeatureSource::StdNormal,
            Self::LogisticAr1 { rho } => FeatureSource::Ar1 { rho: *rho },
            Self::PoissonUniform => FeatureSource::Uniform01,
        }
    }

    pub fn is_sign_invariant(&self) -> bool {
        matches!(self, Self::PhaseRetrieval)
    }
}

/// Estimators compared in a Monte-Carlo run.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Method {
    /// The estimator on the pooled raw data.
    Full,
    Averaging,
    Savgm,
    Csl1,
    Csl2,
    /// ReBoot with the scenario's bootstrap feature distribution.
    Reboot,
    /// ReBoot drawing features from `N(0, I)` regardless of the truth.
    RebootIdentity,
}

impl Method {
    pub const ALL: [Method; 7] = [
        Method::Full,
        Method::Averaging,
        Method::Savgm,
        Method::Csl1,
        Method::Csl2,
        Method::Reboot,
        Method::RebootIdentity,
    ];

    pub fn name(&self) -> &'static str {
        match self {
            Self::Full => "full",
            Self::Averaging => "averaging",
            Self::Savgm => "savgm",
            Self::Csl1 => "csl1",
            Self::Csl2 => "csl2",
            Self::Reboot => "reboot",
            Self::RebootIdentity => "reboot_identity",
        }
    }
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Method {
    type Err = SimError;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Method::ALL
            .iter()
            .copied()
            .find(|m| m.name() == s)
            .ok_or_else(|| SimError::InvalidScenario(format!("unknown method `{s}`")))
    }
}

/// Feature distribution used by [`Method::Reboot`].
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BootstrapFeatures {
    /// The distribution the data were generated from.
    True,
    /// `N(0, I)`.
    StdNormal,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Scenario {
    pub name: String,
    pub kind: ScenarioKind,
    pub n_total: usize,
    pub p: usize,
    pub beta_star: DenseVector,
    pub m_grid: Vec<usize>,
    /// `ñ = n_tilde_factor · n`.
    pub n_tilde_factor: f64,
    pub savgm_rate: f64,
    /// Always contains [`Method::Full`]; kept in [`Method`] order.
    pub methods: Vec<Method>,
    pub reboot_features: BootstrapFeatures,
    /// Local Wirtinger Flow (also the CSL surrogate solver).
    pub pr_local: PrConfig,
    /// Wirtinger Flow on the pooled bootstrap sample.
    pub pr_refit: PrConfig,
    /// Phase-retrieval noise standard deviation.
    pub noise_sd: f64,
    pub replications: usize,
    pub master_seed: u64,
    pub newton: NewtonSettings,
}

impl Scenario {
    fn base(name: &str, kind: ScenarioKind, n_total: usize, p: usize, beta_scale: f64) -> Self {
        Self {
            name: name.to_string(),
            kind,
            n_total,
            p,
            beta_star: DenseVector::filled(p, beta_scale),
            m_grid: Vec::new(),
            n_tilde_factor: 100.0,
            savgm_rate: 0.5,
            methods: default_methods(&kind),
            reboot_features: BootstrapFeatures::True,
            pr_local: PrConfig::local_default(p),
            pr_refit: PrConfig::refit_default(),
            noise_sd: 1.0,
            replications: 200,
            master_seed: 20_240_101,
            newton: NewtonSettings::default(),
        }
    }

    /// Logistic regression, `N = 6000`, `β* = 0.2·1_p`, `ñ = 100n`, SAVGM rate 0.5.
    pub fn logistic(p: usize) -> Self {
        let mut s = Self::base(&format!("logistic_p{p}"), ScenarioKind::LogisticIso, 6000, p, 0.2);
        s.m_grid = vec![10, 20, 30, 60, 100, 150, 200];
        s
    }

    /// Poisson regression, `N = 3000`, `β* = 0.5·1_p`, `ñ = 200n`, SAVGM rate 0.3, 500 replications.
    pub fn poisson(p: usize) -> Self {
        let mut s = Self::base(&format!("poisson_p{p}"), ScenarioKind::PoissonUniform, 3000, p, 0.5);
        s.m_grid = vec![10, 20, 30, 60, 100, 150];
        s.n_tilde_factor = 200.0;
        s.savgm_rate = 0.3;
        s.replications = 500;
        s
    }

    /// Noisy phase retrieval, `N = 1800`, `β* = 1_p`, `ñ = 10n`.
    pub fn phase_retrieval(p: usize) -> Self {
        let mut s = Self::base(&format!("phase_retrieval_p{p}"), ScenarioKind::PhaseRetrieval, 1800, p, 1.0);
        s.m_grid = vec![10, 20, 30, 60, 90, 150];
        s.n_tilde_factor = 10.0;
        s
    }

    /// Logistic regression with AR(1) design, `N = 12000`, `p = 10`.
    pub fn logistic_ar1(rho: f64) -> Self {
        let mut s = Self::base(
            &format!("logistic_ar1_rho{}", (rho * 10.0).round() as i64),
            ScenarioKind::LogisticAr1 { rho },
            12_000,
            10,
            0.2,
        );
        s.m_grid = vec![20, 40, 60, 100, 150, 200];
        s
    }

    pub fn family(&self) -> Option<GlmFamily> {
        self.kind.family()
    }

    /// Local sample size `n = N/m`.
    pub fn local_size(&self, m: usize) -> usize {
        self.n_total / m
    }

    /// Bootstrap draws per machine, at least one.
    pub fn n_tilde(&self, m: usize) -> usize {
        ((self.n_tilde_factor * self.local_size(m) as f64).round() as usize).max(1)
    }

    pub fn is_enabled(&self, method: Method) -> bool {
        self.methods.contains(&method)
    }

    /// Restricts the methods to `keep` plus [`Method::Full`].
    pub fn restrict_methods(&mut self, keep: &[Method]) {
        self.methods.retain(|m| *m == Method::Full || keep.contains(m));
    }

    pub fn validate(&self) -> Result<(), SimError> {
        let bad = |msg: String| Err(SimError::InvalidScenario(msg));
        if self.n_total == 0 || self.p == 0 {
            return bad("N and p must be positive".into());
        }
        if self.beta_star.len() != self.p {
            return bad(format!("beta_star has {} entries, p = {}", self.beta_star.len(), self.p));
        }
        if self.m_grid.is_empty() {
            return bad("the m grid is empty".into());
        }
        for &m in &self.m_grid {
            if m == 0 || !self.n_total.is_multiple_of(m) {
                return Err(SimError::IndivisibleSplit { n: self.n_total, m });
            }
        }
        if self.replications == 0 {
            return bad("replications must be positive".into());
        }
        if !(self.n_tilde_factor > 0.0 && self.n_tilde_factor.is_finite()) {
            return bad(format!("n_tilde_factor {} must be positive", self.n_tilde_factor));
        }
        if !(self.savgm_rate > 0.0 && self.savgm_rate < 1.0) {
            return bad(format!("savgm_rate {} outside (0, 1)", self.savgm_rate));
        }
        if !(self.noise_sd >= 0.0 && self.noise_sd.is_finite()) {
            return bad(format!("noise_sd {} must be nonnegative", self.noise_sd));
        }
        if let ScenarioKind::LogisticAr1 { rho } = self.kind {
            if !(rho.abs() < 1.0) {
                return bad(format!("rho {rho} must satisfy |rho| < 1"));
            }
        }
        if !self.methods.contains(&Method::Full) {
            return bad("the full-sample baseline is always run".into());
        }
        if self.kind.is_sign_invariant() && self.methods.iter().any(|m| matches!(m, Method::Savgm | Method::RebootIdentity)) {
            return bad("phase retrieval supports full, averaging, csl1, csl2 and reboot".into());
        }
        Ok(())
    }

    fn bootstrap_source(&self, method: Method) -> FeatureSource {
        match (method, self.reboot_features) {
            (Method::Reboot, BootstrapFeatures::True) => self.kind.true_features(),
            _ => FeatureSource::StdNormal,
        }
    }
}

pub fn default_methods(kind: &ScenarioKind) -> Vec<Method> {
    use Method::*;
    match kind {
        ScenarioKind::LogisticIso | ScenarioKind::PoissonUniform => vec![Full, Averaging, Savgm, Csl1, Csl2, Reboot],
        ScenarioKind::LogisticAr1 { .. } => vec![Full, Averaging, Csl1, Csl2, Reboot, RebootIdentity],
        ScenarioKind::PhaseRetrieval => vec![Full, Averaging, Csl1, Csl2, Reboot],
    }
}

/// Draws the `N` raw observations of a scenario.
pub fn generate_dataset(scenario: &Scenario, rng: &mut SeededRng) -> Result<Dataset, SimError> {
    let n = scenario.n_total;
    let p = scenario.p;
    let beta = scenario.beta_star.as_slice();
    let ar1 = match scenario.kind {
        ScenarioKind::LogisticAr1 { rho } => Some(Ar1Normal::new(p, rho)?),
        _ => None,
    };
    let family = scenario.family();
    let mut design = vec![0.0; n * p];
    let mut response = Vec::with_capacity(n);
    let mut x = vec![0.0; p];
    for i in 0..n {
        match (&scenario.kind, &ar1) {
            (_, Some(s)) => s.sample_into(rng, &mut x),
            (ScenarioKind::PoissonUniform, _) => x.iter_mut().for_each(|v| *v = rng.next_f64()),
            _ => x.iter_mut().for_each(|v| *v = standard_normal(rng)),
        }
        for (j, &xj) in x.iter().enumerate() {
            design[j * n + i] = xj;
        }
        let eta: f64 = x.iter().zip(beta).map(|(a, b)| a * b).sum();
        let y = match &family {
            Some(f) => f.sample_at(rng, eta)?,
            None => eta * eta + scenario.noise_sd * standard_normal(rng),
        };
        response.push(y);
    }
    Ok(Dataset::new(
        DenseMatrix::from_col_major(n, p, design)?,
        DenseVector::new(response)?,
    )?)
}

/// Contiguous blocks of `N/m` rows.
pub fn split_uniform(data: &Dataset, m: usize) -> Result<Vec<Dataset>, SimError> {
    let n = data.n_rows();
    if m == 0 || !n.is_multiple_of(m) {
        return Err(SimError::IndivisibleSplit { n, m });
    }
    if m == 1 {
        return Ok(vec![data.clone()]);
    }
    let size = n / m;
    Ok((0..m).map(|k| data.rows(k * size, (k + 1) * size)).collect())
}

fn nonempty(estimates: &[DenseVector]) -> Result<(), SimError> {
    if estimates.is_empty() {
        Err(SimError::EmptyInput)
    } else {
        Ok(())
    }
}

fn mean_vector(vs: &[DenseVector]) -> DenseVector {
    let p = vs[0].len();
    let k = vs.len() as f64;
    DenseVector::from_vec_unchecked(
        (0..p)
            .map(|j| vs.iter().map(|v| v[j]).sum::<f64>() / k)
            .collect(),
    )
}

/// `mean ‖β̂ − β*‖²`.
pub fn mse(estimates: &[DenseVector], beta_star: &DenseVector) -> Result<f64, SimError> {
    nonempty(estimates)?;
    Ok(estimates.iter().map(|b| b.sub(beta_star).norm_squared()).sum::<f64>() / estimates.len() as f64)
}

/// `‖mean(β̂) − β*‖`.
pub fn bias(estimates: &[DenseVector], beta_star: &DenseVector) -> Result<f64, SimError> {
    nonempty(estimates)?;
    Ok(mean_vector(estimates).distance(beta_star))
}

/// `β̂` or `−β̂`, whichever is closer to `β*`; ties keep `β̂`.
pub fn align_sign(estimate: &DenseVector, beta_star: &DenseVector) -> DenseVector {
    let plus = estimate.add_scaled(1.0, beta_star).norm_squared();
    let minus = estimate.sub(beta_star).norm_squared();
    if plus < minus {
        estimate.scale(-1.0)
    } else {
        estimate.clone()
    }
}

/// `mean min(‖β̂ − β*‖², ‖β̂ + β*‖²)`.
pub fn mse_dagger(estimates: &[DenseVector], beta_star: &DenseVector) -> Result<f64, SimError> {
    nonempty(estimates)?;
    let aligned: Vec<DenseVector> = estimates.iter().map(|b| align_sign(b, beta_star)).collect();
    mse(&aligned, beta_star)
}

/// `‖mean(s(β̂)·β̂) − β*‖` with `s(β̂)` the sign aligning `β̂` with `β*`.
pub fn bias_dagger(estimates: &[DenseVector], beta_star: &DenseVector) -> Result<f64, SimError> {
    nonempty(estimates)?;
    let aligned: Vec<DenseVector> = estimates.iter().map(|b| align_sign(b, beta_star)).collect();
    bias(&aligned, beta_star)
}

/// Estimates of one replication at one machine count. `None` marks a
/// method that failed in this replication.
#[derive(Debug, Clone, PartialEq)]
pub struct ReplicationRecord {
    pub rep: usize,
    pub m: usize,
    pub estimates: BTreeMap<Method, Option<DenseVector>>,
    /// Local fits excluded from aggregation.
    pub local_failures: usize,
}

impl ReplicationRecord {
    pub fn estimate(&self, method: Method) -> Option<&DenseVector> {
        self.estimates.get(&method).and_then(|e| e.as_ref())
    }
}

fn rep_rng(scenario: &Scenario, rep: usize) -> SeededRng {
    SeededRng::new(scenario.master_seed).substream(rep as u64)
}

/// One Monte-Carlo experiment: generate data, split across `m` machines,
/// fit locally and run every enabled method.
pub fn run_replication(scenario: &Scenario, m: usize, rep: usize) -> Result<ReplicationRecord, SimError> {
    let root = rep_rng(scenario, rep);
    let data = generate_dataset(scenario, &mut root.substream(0))?;
    run_replication_on(scenario, &data, m, rep)
}

fn run_replication_on(scenario: &Scenario, data: &Dataset, m: usize, rep: usize) -> Result<ReplicationRecord, SimError> {
    let shards = split_uniform(data, m)?;
    let root = rep_rng(scenario, rep);
    let boot_rng = |method: Method| root.substream(1 + method as u64).substream(m as u64);
    let mut estimates = BTreeMap::new();
    let local_failures = match scenario.family() {
        Some(family) => run_glm_methods(scenario, &family, data, &shards, &boot_rng, &mut estimates),
        None => run_pr_methods(scenario, data, &shards, &boot_rng, &mut estimates),
    };
    estimates.retain(|k, _| scenario.is_enabled(*k));
    Ok(ReplicationRecord {
        rep,
        m,
        estimates,
        local_failures,
    })
}

fn converged_beta(out: Result<crate::glm::EstimatorOutput, AggregateError>) -> Option<DenseVector> {
    out.ok().filter(|o| o.converged()).map(|o| o.beta)
}

fn run_glm_methods(
    scenario: &Scenario,
    family: &GlmFamily,
    data: &Dataset,
    shards: &[Dataset],
    boot_rng: &dyn Fn(Method) -> SeededRng,
    estimates: &mut BTreeMap<Method, Option<DenseVector>>,
) -> usize {
    let p = scenario.p;
    let zero = DenseVector::zeros(p);
    let settings = &scenario.newton;
    let fit = |d: &Dataset| fit_mle(family, d, &zero, settings).map_err(AggregateError::from);

    estimates.insert(Method::Full, converged_beta(fit(data)));

    let fits: Vec<LocalFit> = shards
        .iter()
        .enumerate()
        .map(|(k, s)| match fit(s) {
            Ok(out) => LocalFit::from_output(k, out),
            Err(_) => LocalFit::new(k, zero.clone(), FitStatus::Diverged),
        })
        .collect();
    let local_failures = fits.iter().filter(|f| f.status != FitStatus::Converged).count();
    let average = naive_average(&fits).ok();
    estimates.insert(Method::Averaging, average.clone());

    if scenario.is_enabled(Method::Savgm) {
        let r = scenario.savgm_rate;
        let sub_fits: Vec<LocalFit> = shards
            .iter()
            .enumerate()
            .map(|(k, s)| {
                let rows = ((r * s.n_rows() as f64).ceil() as usize).clamp(1, s.n_rows());
                match fit(&s.rows(0, rows)) {
                    Ok(out) => LocalFit::from_output(k, out),
                    Err(_) => LocalFit::new(k, zero.clone(), FitStatus::Diverged),
                }
            })
            .collect();
        estimates.insert(Method::Savgm, savgm(&fits, &sub_fits, r).ok());
    }

    if scenario.is_enabled(Method::Csl1) || scenario.is_enabled(Method::Csl2) {
        let csl1 = average
            .as_ref()
            .and_then(|a| converged_beta(csl_round(a, shards, family, settings)));
        let csl2 = if scenario.is_enabled(Method::Csl2) {
            csl1.as_ref()
                .and_then(|a| converged_beta(csl_round(a, shards, family, settings)))
        } else {
            None
        };
        estimates.insert(Method::Csl1, csl1);
        estimates.insert(Method::Csl2, csl2);
    }

    for method in [Method::Reboot, Method::RebootIdentity] {
        if scenario.is_enabled(method) {
            let plan = BootstrapPlan::new(scenario.n_tilde(shards.len()), scenario.bootstrap_source(method));
            let out = reboot(&fits, family, &plan, &boot_rng(method), settings);
            estimates.insert(method, converged_beta(out));
        }
    }
    local_failures
}

/// Wirtinger Flow runs a fixed number of steps; anything short of
/// divergence is a usable estimate.
fn completed(out: Result<crate::glm::EstimatorOutput, AggregateError>) -> Option<DenseVector> {
    out.ok().filter(|o| o.status != FitStatus::Diverged).map(|o| o.beta)
}

fn run_pr_methods(
    scenario: &Scenario,
    data: &Dataset,
    shards: &[Dataset],
    boot_rng: &dyn Fn(Method) -> SeededRng,
    estimates: &mut BTreeMap<Method, Option<DenseVector>>,
) -> usize {
    let local_cfg = &scenario.pr_local;
    let fit = |d: &Dataset| phase_retrieval::fit_local(d, local_cfg).map_err(AggregateError::from);
    estimates.insert(Method::Full, completed(fit(data)));

    let fits: Vec<LocalFit> = shards
        .iter()
        .enumerate()
        .map(|(k, s)| match completed(fit(s)) {
            Some(beta) => LocalFit::new(k, beta, FitStatus::Converged),
            None => LocalFit::new(k, DenseVector::zeros(scenario.p), FitStatus::Diverged),
        })
        .collect();
    let local_failures = fits.iter().filter(|f| f.status != FitStatus::Converged).count();
    let average = sign_calibrated_average(&fits).ok();
    estimates.insert(Method::Averaging, average.clone());

    if scenario.is_enabled(Method::Csl1) || scenario.is_enabled(Method::Csl2) {
        let csl1 = average.as_ref().and_then(|a| completed(csl_pr_round(a, shards, local_cfg)));
        let csl2 = if scenario.is_enabled(Method::Csl2) {
            csl1.as_ref().and_then(|a| completed(csl_pr_round(a, shards, local_cfg)))
        } else {
            None
        };
        estimates.insert(Method::Csl1, csl1);
        estimates.insert(Method::Csl2, csl2);
    }

    if scenario.is_enabled(Method::Reboot) {
        let mut plan = BootstrapPlan::new(scenario.n_tilde(shards.len()), FeatureSource::StdNormal);
        plan.response_noise_sd = scenario.noise_sd;
        let out = reboot_pr(&fits, &plan, &boot_rng(Method::Reboot), &scenario.pr_refit);
        estimates.insert(Method::Reboot, completed(out));
    }
    local_failures
}

/// One row of the output table.
#[derive(Debug, Clone, PartialEq)]
pub struct MetricsRow {
    pub scenario: String,
    pub method: Method,
    pub m: usize,
    pub n: usize,
    pub replications_used: usize,
    pub failures: usize,
    /// MSE, or MSE† for sign-invariant models.
    pub mse: f64,
    /// Monte-Carlo standard error of `mse`.
    pub mse_se: f64,
    /// Bias, or bias† for sign-invariant models.
    pub bias: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct MonteCarloResult {
    /// Ordered by `m` (grid order), then method.
    pub rows: Vec<MetricsRow>,
    /// Ordered by `m` (grid order), then replication.
    pub records: Vec<ReplicationRecord>,
}

impl MonteCarloResult {
    pub fn row(&self, m: usize, method: Method) -> Option<&MetricsRow> {
        self.rows.iter().find(|r| r.m == m && r.method == method)
    }

    pub fn records_for(&self, m: usize) -> impl Iterator<Item = &ReplicationRecord> {
        self.records.iter().filter(move |r| r.m == m)
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct RunOptions {
    /// Worker threads; 0 picks the number of CPUs.
    pub threads: usize,
}

/// Squared error of one estimate, sign-invariant when the model is.
pub fn squared_error(scenario: &Scenario, estimate: &DenseVector) -> f64 {
    let target = &scenario.beta_star;
    if scenario.kind.is_sign_invariant() {
        align_sign(estimate, target).sub(target).norm_squared()
    } else {
        estimate.sub(target).norm_squared()
    }
}

fn summarize(scenario: &Scenario, m: usize, method: Method, records: &[ReplicationRecord]) -> MetricsRow {
    let estimates: Vec<DenseVector> = records.iter().filter_map(|r| r.estimate(method).cloned()).collect();
    let used = estimates.len();
    let (mse_value, bias_value, se) = if used == 0 {
        (f64::NAN, f64::NAN, f64::NAN)
    } else {
        let errors: Vec<f64> = estimates.iter().map(|e| squared_error(scenario, e)).collect();
        let mean = errors.iter().sum::<f64>() / used as f64;
        let se = if used > 1 {
            let var = errors.iter().map(|e| (e - mean).powi(2)).sum::<f64>() / (used - 1) as f64;
            (var / used as f64).sqrt()
        } else {
            0.0
        };
        let b = if scenario.kind.is_sign_invariant() {
            bias_dagger(&estimates, &scenario.beta_star)
        } else {
            bias(&estimates, &scenario.beta_star)
        };
        (mean, b.unwrap_or(f64::NAN), se)
    };
    MetricsRow {
        scenario: scenario.name.clone(),
        method,
        m,
        n: scenario.local_size(m),
        replications_used: used,
        failures: records.len() - used,
        mse: mse_value,
        mse_se: se,
        bias: bias_value,
    }
}

fn run_grid_point(scenario: &Scenario, m: usize) -> Result<Vec<ReplicationRecord>, SimError> {
    let task = |rep: usize| run_replication(scenario, m, rep);
    #[cfg(feature = "parallel")]
    {
        use rayon::prelude::*;
        (0..scenario.replications).into_par_iter().map(task).collect()
    }
    #[cfg(not(feature = "parallel"))]
    {
        (0..scenario.replications).map(task).collect()
    }
}

/// Runs every replication at every grid point. The result depends only on
/// the scenario, never on `options.threads`.
pub fn monte_carlo_with(scenario: &Scenario, options: &RunOptions) -> Result<MonteCarloResult, SimError> {
    scenario.validate()?;
    let run = || -> Result<MonteCarloResult, SimError> {
        let mut rows = Vec::new();
        let mut records = Vec::new();
        for &m in &scenario.m_grid {
            let recs = run_grid_point(scenario, m)?;
            for &method in &scenario.methods {
                rows.push(summarize(scenario, m, method, &recs));
            }
            records.extend(recs);
        }
        Ok(MonteCarloResult { rows, records })
    };
    #[cfg(feature = "parallel")]
    {
        let pool = rayon::ThreadPoolBuilder::new()
            .num_threads(options.threads)
            .build()
            .map_err(|e| SimError::ThreadPool(e.to_string()))?;
        pool.install(run)
    }
    #[cfg(not(feature = "parallel"))]
    {
        let _ = options;
        run()
    }
}

pub fn monte_carlo(scenario: &Scenario) -> Result<Vec<MetricsRow>, SimError> {
    Ok(monte_carlo_with(scenario, &RunOptions::default())?.rows)
}

/// Paired comparison of two methods over the replications where both
/// succeeded: mean of `err(a) − err(b)` and its Monte-Carlo standard error.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PairedDifference {
    pub mean: f64,
    pub se: f64,
    pub pairs: usize,
}

pub fn paired_mse_difference<'a>(
    scenario: &Scenario,
    records: impl IntoIterator<Item = &'a ReplicationRecord>,
    a: Method,
    b: Method,
) -> PairedDifference {
    let diffs: Vec<f64> = records
        .into_iter()
        .filter_map(|r| Some(squared_error(scenario, r.estimate(a)?) - squared_error(scenario, r.estimate(b)?)))
        .collect();
    let k = diffs.len();
    if k == 0 {
        return PairedDifference {
            mean: f64::NAN,
            se: f64::NAN,
            pairs: 0,
        };
    }
    let mean = diffs.iter().sum::<f64>() / k as f64;
    let se = if k > 1 {
        (diffs.iter().map(|d| (d - mean).powi(2)).sum::<f64>() / ((k - 1) * k) as f64).sqrt()
    } else {
        0.0
    };
    PairedDifference { mean, se, pairs: k }
}
