//! Scenario files: flat `key = value` lines, `#` comments, one `m = ...`
//! line per grid point.
//!
//! ```text
//! name = logistic_p5
//! kind = logistic
//! n_total = 6000
//! p = 5
//! beta_star = 0.2
//! m = 10
//! m = 30
//! ```
//!
//! Omitted keys take the defaults of the scenario kind.

use reboot_core::glm::NewtonSettings;
use reboot_core::phase_retrieval::PrConfig;
use reboot_core::sim::{BootstrapFeatures, Method, Scenario, ScenarioKind, SimError};
use reboot_core::DenseVector;
use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::str::FromStr;
use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ConfigError {
    #[error("line {line}: {message}")]
    Parse { line: usize, message: String },
    #[error("invalid scenario: {0}")]
    Validation(#[from] SimError),
}

const KEYS: &[&str] = &[
    "name",
    "kind",
    "rho",
    "n_total",
    "p",
    "beta_star",
    "m",
    "n_tilde_factor",
    "savgm_rate",
    "methods",
    "reboot_features",
    "noise_sd",
    "pr_local_steps",
    "pr_local_mu",
    "pr_refit_steps",
    "pr_refit_mu",
    "replications",
    "master_seed",
    "newton_tol",
    "newton_max_iter",
];

struct Entry {
    line: usize,
    value: String,
}

struct Document {
    single: BTreeMap<&'static str, Entry>,
    grid: Vec<Entry>,
    last_line: usize,
}

fn parse_error(line: usize, message: impl Into<String>) -> ConfigError {
    ConfigError::Parse {
        line,
        message: message.into(),
    }
}

fn tokenize(text: &str) -> Result<Document, ConfigError> {
    let mut single = BTreeMap::new();
    let mut grid = Vec::new();
    let mut last_line = 0;
    for (idx, raw) in text.lines().enumerate() {
        let line = idx + 1;
        last_line = line;
        let content = raw.split('#').next().unwrap_or("").trim();
        if content.is_empty() {
            continue;
        }
        let (key, value) = content
            .split_once('=')
            .ok_or_else(|| parse_error(line, format!("expected `key = value`, found `{content}`")))?;
        let key = key.trim();
        let value = value.trim();
        let known = KEYS
            .iter()
            .copied()
            .find(|k| *k == key)
            .ok_or_else(|| parse_error(line, format!("unknown key `{key}`")))?;
        if value.is_empty() {
            return Err(parse_error(line, format!("`{key}` has no value")));
        }
        let entry = Entry {
            line,
            value: value.to_string(),
        };
        if known == "m" {
            grid.push(entry);
        } else if let Some(prev) = single.insert(known, entry) {
            return Err(parse_error(line, format!("`{key}` already set on line {}", prev.line)));
        }
    }
    Ok(Document {
        single,
        grid,
        last_line,
    })
}

fn parse_value<T: FromStr>(entry: &Entry, key: &str) -> Result<T, ConfigError> {
    entry
        .value
        .parse()
        .map_err(|_| parse_error(entry.line, format!("cannot parse `{}` for `{key}`", entry.value)))
}

impl Document {
    fn get<T: FromStr>(&self, key: &str) -> Result<Option<T>, ConfigError> {
        self.single.get(key).map(|e| parse_value(e, key)).transpose()
    }

    fn require<T: FromStr>(&self, key: &str) -> Result<T, ConfigError> {
        self.get(key)?
            .ok_or_else(|| parse_error(self.last_line.max(1), format!("missing required key `{key}`")))
    }

    fn line_of(&self, key: &str) -> usize {
        self.single.get(key).map_or(self.last_line.max(1), |e| e.line)
    }
}

/// Parses a comma-separated method list. `full` is always included.
pub fn parse_methods(list: &str) -> Result<Vec<Method>, SimError> {
    let mut methods = vec![Method::Full];
    for name in list.split(',').map(str::trim).filter(|s| !s.is_empty()) {
        methods.push(name.parse()?);
    }
    methods.sort();
    methods.dedup();
    Ok(methods)
}

fn parse_kind(doc: &Document) -> Result<ScenarioKind, ConfigError> {
    let kind: String = doc.require("kind")?;
    let line = doc.line_of("kind");
    let rho: Option<f64> = doc.get("rho")?;
    match (kind.as_str(), rho) {
        ("logistic_ar1", Some(rho)) => Ok(ScenarioKind::LogisticAr1 { rho }),
        ("logistic_ar1", None) => Err(parse_error(line, "`logistic_ar1` needs `rho`")),
        (_, Some(_)) => Err(parse_error(doc.line_of("rho"), "`rho` applies only to `logistic_ar1`")),
        ("logistic", None) => Ok(ScenarioKind::LogisticIso),
        ("poisson", None) => Ok(ScenarioKind::PoissonUniform),
        ("phase_retrieval", None) => Ok(ScenarioKind::PhaseRetrieval),
        (other, None) => Err(parse_error(
            line,
            format!("unknown kind `{other}` (expected logistic, logistic_ar1, poisson or phase_retrieval)"),
        )),
    }
}

fn kind_name(kind: &ScenarioKind) -> &'static str {
    match kind {
        ScenarioKind::LogisticIso => "logistic",
        ScenarioKind::LogisticAr1 { .. } => "logistic_ar1",
        ScenarioKind::PoissonUniform => "poisson",
        ScenarioKind::PhaseRetrieval => "phase_retrieval",
    }
}

fn preset(kind: ScenarioKind, p: usize) -> Scenario {
    match kind {
        ScenarioKind::LogisticIso => Scenario::logistic(p),
        ScenarioKind::PoissonUniform => Scenario::poisson(p),
        ScenarioKind::PhaseRetrieval => Scenario::phase_retrieval(p),
        ScenarioKind::LogisticAr1 { rho } => {
            let mut s = Scenario::logistic_ar1(rho);
            s.p = p;
            s.beta_star = DenseVector::filled(p, 0.2);
            s.pr_local = PrConfig::local_default(p);
            s
        }
    }
}

fn parse_beta(entry: &Entry, p: usize) -> Result<DenseVector, ConfigError> {
    let values = entry
        .value
        .split(',')
        .map(|s| s.trim().parse::<f64>())
        .collect::<Result<Vec<_>, _>>()
        .map_err(|_| parse_error(entry.line, format!("cannot parse `{}` as numbers", entry.value)))?;
    let values = match values.len() {
        1 => vec![values[0]; p],
        k if k == p => values,
        k => return Err(parse_error(entry.line, format!("beta_star has {k} entries, p = {p}"))),
    };
    DenseVector::new(values).map_err(|_| parse_error(entry.line, "beta_star must be finite"))
}

fn step_size(doc: &Document, key: &str, default: f64) -> Result<f64, ConfigError> {
    let mu = doc.get::<f64>(key)?.unwrap_or(default);
    if !(mu > 0.0 && mu.is_finite()) {
        return Err(parse_error(doc.line_of(key), format!("`{key}` must be positive")));
    }
    Ok(mu)
}

/// Parses and validates a scenario document.
pub fn parse_config(text: &str) -> Result<Scenario, ConfigError> {
    let doc = tokenize(text)?;
    let kind = parse_kind(&doc)?;
    let p: usize = doc.require("p")?;
    if p == 0 {
        return Err(parse_error(doc.line_of("p"), "`p` must be positive"));
    }
    let mut s = preset(kind, p);
    s.n_total = doc.require("n_total")?;
    if let Some(name) = doc.get::<String>("name")? {
        s.name = name;
    }
    if let Some(entry) = doc.single.get("beta_star") {
        s.beta_star = parse_beta(entry, p)?;
    }
    if doc.grid.is_empty() {
        return Err(parse_error(doc.last_line.max(1), "at least one `m` line is required"));
    }
    s.m_grid = doc
        .grid
        .iter()
        .map(|e| parse_value(e, "m"))
        .collect::<Result<_, _>>()?;
    if let Some(v) = doc.get("n_tilde_factor")? {
        s.n_tilde_factor = v;
    }
    if let Some(v) = doc.get("savgm_rate")? {
        s.savgm_rate = v;
    }
    if let Some(v) = doc.get("noise_sd")? {
        s.noise_sd = v;
    }
    if let Some(v) = doc.get("replications")? {
        s.replications = v;
    }
    if let Some(v) = doc.get("master_seed")? {
        s.master_seed = v;
    }
    if let Some(list) = doc.get::<String>("methods")? {
        s.methods = parse_methods(&list).map_err(|e| parse_error(doc.line_of("methods"), e.to_string()))?;
    }
    if let Some(v) = doc.get::<String>("reboot_features")? {
        s.reboot_features = match v.as_str() {
            "true" => BootstrapFeatures::True,
            "std_normal" => BootstrapFeatures::StdNormal,
            other => {
                return Err(parse_error(
                    doc.line_of("reboot_features"),
                    format!("unknown reboot_features `{other}` (expected true or std_normal)"),
                ))
            }
        };
    }
    s.pr_local = PrConfig::new(
        doc.get("pr_local_steps")?.unwrap_or(s.pr_local.t_max),
        step_size(&doc, "pr_local_mu", s.pr_local.mu)?,
    );
    s.pr_refit = PrConfig::new(
        doc.get("pr_refit_steps")?.unwrap_or(s.pr_refit.t_max),
        step_size(&doc, "pr_refit_mu", s.pr_refit.mu)?,
    );
    s.newton = NewtonSettings {
        tol: doc.get("newton_tol")?.unwrap_or(s.newton.tol),
        max_iter: doc.get("newton_max_iter")?.unwrap_or(s.newton.max_iter),
    };
    s.validate()?;
    Ok(s)
}

/// Writes a scenario back out in the format [`parse_config`] reads.
pub fn render_config(s: &Scenario) -> String {
    let mut out = String::new();
    let mut line = |k: &str, v: String| {
        let _ = writeln!(out, "{k} = {v}");
    };
    line("name", s.name.clone());
    line("kind", kind_name(&s.kind).to_string());
    if let ScenarioKind::LogisticAr1 { rho } = s.kind {
        line("rho", rho.to_string());
    }
    line("n_total", s.n_total.to_string());
    line("p", s.p.to_string());
    let beta: Vec<String> = s.beta_star.iter().map(f64::to_string).collect();
    line("beta_star", beta.join(", "));
    for m in &s.m_grid {
        line("m", m.to_string());
    }
    line("n_tilde_factor", s.n_tilde_factor.to_string());
    line("savgm_rate", s.savgm_rate.to_string());
    let methods: Vec<&str> = s.methods.iter().map(Method::name).collect();
    line("methods", methods.join(", "));
    let features = match s.reboot_features {
        BootstrapFeatures::True => "true",
        BootstrapFeatures::StdNormal => "std_normal",
    };
    line("reboot_features", features.to_string());
    line("noise_sd", s.noise_sd.to_string());
    line("pr_local_steps", s.pr_local.t_max.to_string());
    line("pr_local_mu", s.pr_local.mu.to_string());
    line("pr_refit_steps", s.pr_refit.t_max.to_string());
    line("pr_refit_mu", s.pr_refit.mu.to_string());
    line("replications", s.replications.to_string());
    line("master_seed", s.master_seed.to_string());
    line("newton_tol", s.newton.tol.to_string());
    line("newton_max_iter", s.newton.max_iter.to_string());
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    const MINIMAL: &str = "kind = logistic\nn_total = 6000\np = 5\nm = 10\nm = 30\n";

    #[test]
    fn minimal_document_takes_kind_defaults() {
        let s = parse_config(MINIMAL).unwrap();
        assert_eq!(s.m_grid, vec![10, 30]);
        assert_eq!(s.beta_star, DenseVector::filled(5, 0.2));
        assert_eq!(s.n_tilde_factor, 100.0);
    }

    #[test]
    fn comments_and_blank_lines() {
        let text = format!("# header\n\n{MINIMAL}replications = 3 # trailing\n");
        assert_eq!(parse_config(&text).unwrap().replications, 3);
    }

    #[test]
    fn unknown_key_reports_line() {
        let text = format!("{MINIMAL}colour = blue\n");
        assert_eq!(
            parse_config(&text),
            Err(ConfigError::Parse {
                line: 6,
                message: "unknown key `colour`".into()
            })
        );
    }

    #[test]
    fn duplicate_and_malformed_lines() {
        let dup = format!("{MINIMAL}p = 6\n");
        assert!(matches!(parse_config(&dup), Err(ConfigError::Parse { line: 6, .. })));
        let bare = "kind logistic\n";
        assert!(matches!(parse_config(bare), Err(ConfigError::Parse { line: 1, .. })));
        let bad_number = "kind = logistic\nn_total = lots\np = 5\nm = 10\n";
        assert!(matches!(parse_config(bad_number), Err(ConfigError::Parse { line: 2, .. })));
    }

    #[test]
    fn indivisible_grid_is_a_validation_error() {
        let text = "kind = logistic\nn_total = 6000\np = 5\nm = 7\n";
        assert_eq!(
            parse_config(text),
            Err(ConfigError::Validation(SimError::IndivisibleSplit { n: 6000, m: 7 }))
        );
    }

    #[test]
    fn rho_only_with_ar1() {
        let text = "kind = logistic_ar1\nrho = 0.5\nn_total = 12000\np = 10\nm = 60\n";
        assert_eq!(parse_config(text).unwrap().kind, ScenarioKind::LogisticAr1 { rho: 0.5 });
        assert!(parse_config("kind = logistic_ar1\nn_total = 100\np = 2\nm = 10\n").is_err());
        assert!(parse_config("kind = poisson\nrho = 0.5\nn_total = 100\np = 2\nm = 10\n").is_err());
    }

    #[test]
    fn methods_always_include_full() {
        let text = format!("{MINIMAL}methods = reboot, averaging\n");
        assert_eq!(
            parse_config(&text).unwrap().methods,
            vec![Method::Full, Method::Averaging, Method::Reboot]
        );
    }

    #[test]
    fn explicit_beta_vector() {
        let text = "kind = poisson\nn_total = 3000\np = 2\nbeta_star = 0.5, -0.25\nm = 10\n";
        assert_eq!(parse_config(text).unwrap().beta_star.as_slice(), &[0.5, -0.25]);
        let wrong = "kind = poisson\nn_total = 3000\np = 2\nbeta_star = 1, 2, 3\nm = 10\n";
        assert!(matches!(parse_config(wrong), Err(ConfigError::Parse { line: 4, .. })));
    }

    #[test]
    fn render_round_trips() {
        for s in [
            Scenario::logistic(5),
            Scenario::poisson(2),
            Scenario::phase_retrieval(10),
            Scenario::logistic_ar1(0.8),
        ] {
            assert_eq!(parse_config(&render_config(&s)).unwrap(), s);
        }
    }
}
