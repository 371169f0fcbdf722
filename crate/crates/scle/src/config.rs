//! Run configuration: a TOML document with dotted command-line overrides.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use scle_core::{build_covariance, AnalyticModel, CovarianceKind, CovarianceSpec, ModelFamily};

use crate::error::{AppError, AppResult, Diagnostic};
use crate::simulate::Comparator;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Command {
    Fit,
    Path,
    Are,
    Simulate,
    Covariance,
}

impl Command {
    pub fn name(self) -> &'static str {
        match self {
            Command::Fit => "fit",
            Command::Path => "path",
            Command::Are => "are",
            Command::Simulate => "simulate",
            Command::Covariance => "covariance",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Format {
    Csv,
    Json,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CovarianceSection {
    pub kind: CovarianceKind,
    pub dim: usize,
    #[serde(default)]
    pub rho: f64,
    /// Decay rate of exp-decay designs; defaults to `model.theta`.
    #[serde(default)]
    pub theta: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelSection {
    pub family: ModelFamily,
    /// True parameter `θ*`; generated data use it as their mean or decay
    /// rate.
    #[serde(default)]
    pub theta: f64,
    pub covariance: CovarianceSection,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DataSection {
    /// Observations, one row each.
    #[serde(default)]
    pub csv: Option<PathBuf>,
    /// Sample size of generated data when no CSV is given.
    #[serde(default)]
    pub n: Option<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SelectionSection {
    #[serde(default = "default_tau")]
    pub tau: f64,
    #[serde(default)]
    pub lambda_budget: f64,
}

fn default_tau() -> f64 {
    0.9
}

impl Default for SelectionSection {
    fn default() -> Self {
        SelectionSection {
            tau: default_tau(),
            lambda_budget: 0.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FitSection {
    #[serde(default = "default_refine")]
    pub refine_rounds: usize,
    /// Preliminary starting value; a data-based default when absent.
    #[serde(default)]
    pub init: Option<Vec<f64>>,
    #[serde(default)]
    pub max_active: Option<usize>,
    /// Probability of keeping each score in a random initial rule; the
    /// uniform rule when absent.
    #[serde(default)]
    pub keep_prob: Option<f64>,
}

fn default_refine() -> usize {
    2
}

impl Default for FitSection {
    fn default() -> Self {
        FitSection {
            refine_rounds: default_refine(),
            init: None,
            max_active: None,
            keep_prob: None,
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PathSection {
    /// Score Gram given directly; otherwise computed from the data.
    #[serde(default)]
    pub gram_csv: Option<PathBuf>,
    #[serde(default)]
    pub lambda_min: f64,
    #[serde(default)]
    pub max_active: Option<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AreSection {
    /// Explicit grid of `λ` values; an even grid on `[0, λ_max]` otherwise.
    #[serde(default)]
    pub lambda_grid: Option<Vec<f64>>,
    #[serde(default = "default_grid_points")]
    pub grid_points: usize,
    /// Draws for Monte Carlo population Grams.
    #[serde(default = "default_mc_draws")]
    pub mc_draws: usize,
}

fn default_grid_points() -> usize {
    51
}

fn default_mc_draws() -> usize {
    100_000
}

impl Default for AreSection {
    fn default() -> Self {
        AreSection {
            lambda_grid: None,
            grid_points: default_grid_points(),
            mc_draws: default_mc_draws(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SimulateSection {
    #[serde(default = "default_sim_n")]
    pub n: usize,
    #[serde(default = "default_replications")]
    pub replications: usize,
    #[serde(default = "default_comparators")]
    pub comparators: Vec<Comparator>,
    #[serde(default)]
    pub max_active: Option<usize>,
}

fn default_sim_n() -> usize {
    50
}

fn default_replications() -> usize {
    1000
}

fn default_comparators() -> Vec<Comparator> {
    vec![Comparator::Mle, Comparator::UniformMcle, Comparator::SclePath]
}

impl Default for SimulateSection {
    fn default() -> Self {
        SimulateSection {
            n: default_sim_n(),
            replications: default_replications(),
            comparators: default_comparators(),
            max_active: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OutputSection {
    #[serde(default = "default_dir")]
    pub dir: PathBuf,
    #[serde(default = "default_formats")]
    pub formats: Vec<Format>,
}

fn default_dir() -> PathBuf {
    PathBuf::from("scle-out")
}

fn default_formats() -> Vec<Format> {
    vec![Format::Csv, Format::Json]
}

impl Default for OutputSection {
    fn default() -> Self {
        OutputSection {
            dir: default_dir(),
            formats: default_formats(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    /// Set from the command line when absent from the file.
    #[serde(default)]
    pub command: Option<Command>,
    /// Source of all randomness; required by `simulate` and by generated
    /// data.
    #[serde(default)]
    pub seed: Option<u64>,
    /// Required by every command except `path` on a supplied Gram.
    #[serde(default)]
    pub model: Option<ModelSection>,
    #[serde(default)]
    pub data: DataSection,
    #[serde(default)]
    pub selection: SelectionSection,
    #[serde(default)]
    pub fit: FitSection,
    #[serde(default)]
    pub path: PathSection,
    #[serde(default)]
    pub are: AreSection,
    #[serde(default)]
    pub simulate: SimulateSection,
    #[serde(default)]
    pub output: OutputSection,
}

/// Parses `text` after applying `key=value` overrides at dotted paths.
/// Values are read as TOML literals and fall back to strings.
pub fn parse(text: &str, overrides: &[String]) -> AppResult<RunConfig> {
    let mut doc: toml::Table = text
        .parse()
        .map_err(|e: toml::de::Error| AppError::Usage(format!("config: {e}")))?;
    for o in overrides {
        apply_override(&mut doc, o)?;
    }
    RunConfig::deserialize(doc).map_err(|e| AppError::Usage(format!("config: {e}")))
}

pub fn load(path: Option<&Path>, overrides: &[String]) -> AppResult<RunConfig> {
    let text = match path {
        Some(p) => std::fs::read_to_string(p).map_err(|e| AppError::Usage(format!("cannot read {}: {e}", p.display())))?,
        None => String::new(),
    };
    parse(&text, overrides)
}

fn apply_override(doc: &mut toml::Table, item: &str) -> AppResult<()> {
    let (key, raw) = item
        .split_once('=')
        .ok_or_else(|| AppError::Usage(format!("override `{item}` is not of the form key=value")))?;
    let parts: Vec<&str> = key.trim().split('.').collect();
    if parts.iter().any(|p| p.is_empty()) {
        return Err(AppError::Usage(format!("override `{item}` has an empty key segment")));
    }
    let raw = raw.trim();
    let value = format!("v = {raw}")
        .parse::<toml::Table>()
        .ok()
        .and_then(|mut t| t.remove("v"))
        .unwrap_or_else(|| toml::Value::String(raw.to_string()));
    let mut table = doc;
    for part in &parts[..parts.len() - 1] {
        let entry = table
            .entry(part.to_string())
            .or_insert_with(|| toml::Value::Table(toml::Table::new()));
        table = entry
            .as_table_mut()
            .ok_or_else(|| AppError::Usage(format!("override `{item}`: `{part}` is not a section")))?;
    }
    table.insert(parts[parts.len() - 1].to_string(), value);
    Ok(())
}

impl RunConfig {
    pub fn model(&self) -> AppResult<&ModelSection> {
        self.model
            .as_ref()
            .ok_or_else(|| AppError::Usage("config has no [model] section".into()))
    }

    /// Covariance design with defaults filled in.
    pub fn covariance_spec(&self) -> AppResult<CovarianceSpec> {
        let m = self.model()?;
        let c = &m.covariance;
        Ok(CovarianceSpec::new(c.kind, c.dim)
            .with_rho(c.rho)
            .with_theta(c.theta.unwrap_or(m.theta)))
    }

    pub fn analytic_model(&self) -> AppResult<AnalyticModel> {
        let m = self.model()?;
        Ok(AnalyticModel::new(m.family, self.covariance_spec()?, vec![m.theta])?)
    }

    /// Copy with every default written out.
    pub fn resolved(&self, command: Command) -> RunConfig {
        let mut c = self.clone();
        c.command = Some(command);
        if let Some(m) = c.model.as_mut() {
            if m.covariance.kind.is_expdecay() {
                m.covariance.theta = Some(m.covariance.theta.unwrap_or(m.theta));
            }
        }
        c
    }

    pub fn wants(&self, f: Format) -> bool {
        self.output.formats.contains(&f)
    }

    /// All schema and range problems for running `command`; never runs a
    /// pipeline.
    pub fn validate(&self, command: Command) -> Vec<Diagnostic> {
        let mut out = Vec::new();
        let mut bad = |field: &str, msg: String| out.push(Diagnostic::new(field, msg));
        let s = &self.selection;
        if !(s.tau > 0.0 && s.tau <= 1.0) {
            bad("selection.tau", "selection.tau must lie in (0,1]".into());
        }
        if !(s.lambda_budget >= 0.0 && s.lambda_budget.is_finite()) {
            bad(
                "selection.lambda_budget",
                "selection.lambda_budget must be finite and nonnegative".into(),
            );
        }
        let model_needed = !(command == Command::Path && self.path.gram_csv.is_some());
        match &self.model {
            None if model_needed => bad("model", "a [model] section is required".into()),
            None => {}
            Some(model) => {
                if !model.theta.is_finite() {
                    bad("model.theta", "model.theta must be finite".into());
                }
                let cov = &model.covariance;
                let mut cov_ok = true;
                if cov.dim == 0 {
                    bad("model.covariance.dim", "model.covariance.dim must be at least 1".into());
                    cov_ok = false;
                }
                if cov.kind.is_expdecay() && cov.dim < 2 {
                    bad("model.covariance.dim", "exp-decay designs need dim >= 2".into());
                    cov_ok = false;
                }
                if cov_ok {
                    let spec = CovarianceSpec::new(cov.kind, cov.dim)
                        .with_rho(cov.rho)
                        .with_theta(cov.theta.unwrap_or(model.theta));
                    match build_covariance(&spec) {
                        Ok(_) => {
                            if let Err(e) = AnalyticModel::new(model.family, spec, vec![model.theta]) {
                                bad("model.family", e.to_string());
                            }
                        }
                        Err(e) => bad("model.covariance", format!("covariance is not positive definite: {e}")),
                    }
                }
            }
        }
        if self.output.formats.is_empty() {
            bad("output.formats", "output.formats must list csv and/or json".into());
        }
        let need_data = command == Command::Fit || (command == Command::Path && self.path.gram_csv.is_none());
        if need_data {
            match (&self.data.csv, self.data.n) {
                (Some(p), _) if !p.is_file() => bad("data.csv", format!("data file {} does not exist", p.display())),
                (Some(_), _) => {}
                (None, Some(n)) if n < 2 => bad("data.n", "data.n must be at least 2".into()),
                (None, Some(_)) if self.seed.is_none() => bad("seed", "generated data need a seed".into()),
                (None, Some(_)) => {}
                (None, None) => bad("data", "give data.csv or data.n".into()),
            }
        }
        if let Some(i) = &self.fit.init {
            if i.len() != 1 || !i[0].is_finite() {
                bad("fit.init", "fit.init must hold one finite value".into());
            }
        }
        if let Some(k) = self.fit.keep_prob {
            if !(k > 0.0 && k <= 1.0) {
                bad("fit.keep_prob", "fit.keep_prob must lie in (0,1]".into());
            } else if self.seed.is_none() && command == Command::Fit {
                bad("seed", "a random initial rule needs a seed".into());
            }
        }
        if command == Command::Path {
            if let Some(p) = &self.path.gram_csv {
                if !p.is_file() {
                    bad("path.gram_csv", format!("Gram file {} does not exist", p.display()));
                }
            }
            if self.path.lambda_min.is_nan() || self.path.lambda_min < 0.0 {
                bad("path.lambda_min", "path.lambda_min must be nonnegative".into());
            }
        }
        if command == Command::Are {
            if let Some(g) = &self.are.lambda_grid {
                if g.is_empty() || g.iter().any(|l| !(*l >= 0.0 && l.is_finite())) {
                    bad(
                        "are.lambda_grid",
                        "are.lambda_grid must be a nonempty list of finite nonnegative values".into(),
                    );
                }
            } else if self.are.grid_points == 0 {
                bad("are.grid_points", "are.grid_points must be at least 1".into());
            }
            if self.are.mc_draws < 2 {
                bad("are.mc_draws", "are.mc_draws must be at least 2".into());
            }
        }
        if command == Command::Simulate {
            if self.seed.is_none() {
                bad("seed", "simulate requires a seed".into());
            }
            if self.simulate.n < 2 {
                bad("simulate.n", "simulate.n must be at least 2".into());
            }
            if self.simulate.replications == 0 {
                bad("simulate.replications", "simulate.replications must be at least 1".into());
            }
            if self.simulate.comparators.is_empty() {
                bad("simulate.comparators", "simulate.comparators must not be empty".into());
            }
        }
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const BASE: &str = r#"
seed = 7
[model]
family = "exchangeable_location"
[model.covariance]
kind = "exchangeable"
dim = 3
rho = 0.5
"#;

    fn fields(c: &RunConfig, cmd: Command) -> Vec<String> {
        c.validate(cmd).into_iter().map(|d| d.field).collect()
    }

    #[test]
    fn defaults_are_materialized() {
        let c = parse(BASE, &["data.n=10".into()]).unwrap();
        assert_eq!(c.selection.tau, 0.9);
        assert_eq!(c.simulate.replications, 1000);
        assert_eq!(c.fit.refine_rounds, 2);
        assert!(c.validate(Command::Fit).is_empty());
    }

    #[test]
    fn tau_out_of_range() {
        let c = parse(BASE, &["selection.tau=1.5".into(), "data.n=10".into()]).unwrap();
        let d = c.validate(Command::Fit);
        assert_eq!(d.len(), 1);
        assert_eq!(d[0].message, "selection.tau must lie in (0,1]");
    }

    #[test]
    fn missing_csv_is_named() {
        let c = parse(BASE, &["data.csv=\"/no/such/file.csv\"".into()]).unwrap();
        let d = c.validate(Command::Fit);
        assert_eq!(d.len(), 1);
        assert!(d[0].message.contains("/no/such/file.csv"));
    }

    #[test]
    fn exchangeable_definiteness_boundary() {
        let ok = parse(BASE, &["model.covariance.rho=0.999".into(), "data.n=10".into()]).unwrap();
        assert!(ok.validate(Command::Fit).is_empty());
        let bad = parse(BASE, &["model.covariance.rho=1.0".into(), "data.n=10".into()]).unwrap();
        assert_eq!(fields(&bad, Command::Fit), vec!["model.covariance"]);
    }

    #[test]
    fn simulate_requires_seed() {
        let text = BASE.replace("seed = 7", "");
        let c = parse(&text, &[]).unwrap();
        assert_eq!(fields(&c, Command::Simulate), vec!["seed"]);
    }

    #[test]
    fn unknown_keys_are_rejected() {
        assert!(parse(BASE, &["selection.tua=0.5".into()]).is_err());
        assert!(parse(BASE, &["selection".into()]).is_err());
    }

    #[test]
    fn overrides_create_sections_and_keep_strings() {
        let c = parse(BASE, &["output.dir=some/where".into(), "output.formats=[\"csv\"]".into()]).unwrap();
        assert_eq!(c.output.dir, PathBuf::from("some/where"));
        assert_eq!(c.output.formats, vec![Format::Csv]);
    }

    #[test]
    fn expdecay_theta_defaults_to_model_theta() {
        let text = r#"
[model]
family = "pairwise_expdecay"
theta = 0.4
[model.covariance]
kind = "expdecay_sqrt"
dim = 4
"#;
        let c = parse(text, &[]).unwrap();
        assert_eq!(c.resolved(Command::Are).model.unwrap().covariance.theta, Some(0.4));
        assert!(c.validate(Command::Are).is_empty());
    }
}
