//! Browser bindings. Every export returns a flat `Float64Array`; the layout
//! is documented on each function and decoded by `www/index.html`.

use reboot_core::aggregate::{naive_average, reboot, BootstrapPlan, FeatureSource, LocalFit};
use reboot_core::glm::{fit_mle, FitStatus, GlmFamily, NewtonSettings};
use reboot_core::phase_retrieval::{pr_gradient, spectral_init, PrConfig};
use reboot_core::sim::{generate_dataset, monte_carlo_with, split_uniform, Method, RunOptions, Scenario};
use reboot_core::{DenseVector, SeededRng};
use wasm_bindgen::prelude::*;

fn js_err(e: impl std::fmt::Display) -> JsError {
    JsError::new(&e.to_string())
}

/// Logistic MSE against the number of machines.
///
/// Returns `[m, full, averaging, csl2, reboot]` for each `m` in `m_grid`
/// that divides `n_total`; failed cells are `NaN`.
#[wasm_bindgen]
pub fn mse_curve(
    n_total: usize,
    p: usize,
    m_grid: Vec<usize>,
    replications: usize,
    n_tilde_factor: f64,
    seed: u64,
) -> Result<Vec<f64>, JsError> {
    let mut s = Scenario::logistic(p);
    s.name = "browser".into();
    s.n_total = n_total;
    s.m_grid = m_grid.into_iter().filter(|&m| m > 0 && n_total.is_multiple_of(m)).collect();
    s.replications = replications.max(2);
    s.n_tilde_factor = n_tilde_factor;
    s.master_seed = seed;
    let shown = [Method::Full, Method::Averaging, Method::Csl2, Method::Reboot];
    s.restrict_methods(&shown);
    let result = monte_carlo_with(&s, &RunOptions::default()).map_err(js_err)?;
    let mut out = Vec::new();
    for &m in &s.m_grid {
        out.push(m as f64);
        for method in shown {
            out.push(result.row(m, method).map_or(f64::NAN, |r| r.mse));
        }
    }
    Ok(out)
}

/// Local logistic MLEs for `p = 2` next to their average and the ReBoot
/// refit.
///
/// Returns `[b1, b2]` per converged local fit, then the average, then the
/// ReBoot estimate, then the full-sample MLE: `2(k + 3)` numbers.
#[wasm_bindgen]
pub fn local_scatter(n_total: usize, m: usize, beta1: f64, beta2: f64, seed: u64) -> Result<Vec<f64>, JsError> {
    let mut s = Scenario::logistic(2);
    s.n_total = n_total;
    s.beta_star = DenseVector::new(vec![beta1, beta2]).map_err(js_err)?;
    let root = SeededRng::new(seed);
    let data = generate_dataset(&s, &mut root.substream(0)).map_err(js_err)?;
    let shards = split_uniform(&data, m).map_err(js_err)?;
    let family = GlmFamily::logistic();
    let settings = NewtonSettings::default();
    let zero = DenseVector::zeros(2);
    let fits: Vec<LocalFit> = shards
        .iter()
        .enumerate()
        .map(|(k, d)| match fit_mle(&family, d, &zero, &settings) {
            Ok(o) => LocalFit::from_output(k, o),
            Err(_) => LocalFit::new(k, zero.clone(), FitStatus::Diverged),
        })
        .collect();
    let average = naive_average(&fits).map_err(js_err)?;
    let plan = BootstrapPlan::new(s.n_tilde(m), FeatureSource::StdNormal);
    let rb = reboot(&fits, &family, &plan, &root.substream(1), &settings).map_err(js_err)?;
    let full = fit_mle(&family, &data, &zero, &settings).map_err(js_err)?;
    let mut out: Vec<f64> = fits
        .iter()
        .filter(|f| f.status == FitStatus::Converged)
        .flat_map(|f| f.beta.iter().copied().collect::<Vec<_>>())
        .collect();
    for v in [&average, &rb.beta, &full.beta] {
        out.extend(v.iter());
    }
    Ok(out)
}

/// Wirtinger Flow iterates on a `p = 2` phase-retrieval sample with
/// `β* = (beta1, beta2)`.
///
/// Returns `[b1, b2]` for the spectral initializer and after every step.
#[wasm_bindgen]
pub fn wirtinger_path(n: usize, beta1: f64, beta2: f64, noise_sd: f64, steps: usize, mu: f64, seed: u64) -> Result<Vec<f64>, JsError> {
    let mut s = Scenario::phase_retrieval(2);
    s.n_total = n;
    s.noise_sd = noise_sd;
    s.beta_star = DenseVector::new(vec![beta1, beta2]).map_err(js_err)?;
    let data = generate_dataset(&s, &mut SeededRng::new(seed)).map_err(js_err)?;
    let cfg = PrConfig::new(steps, mu);
    let mut beta = spectral_init(&data).map_err(js_err)?;
    let mut out: Vec<f64> = beta.iter().copied().collect();
    for _ in 0..cfg.t_max {
        let g = pr_gradient(&data, &beta).map_err(js_err)?;
        beta = beta.add_scaled(-cfg.mu, &g);
        if !beta.is_all_finite() {
            break;
        }
        out.extend(beta.iter());
    }
    Ok(out)
}
