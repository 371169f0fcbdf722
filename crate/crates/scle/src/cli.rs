//! Command-line driver. Each command validates the resolved configuration
//! before any computation, writes its artifacts and a manifest to the output
//! directory, and returns a one-line summary.

use std::path::PathBuf;
use std::time::Instant;

use clap::{Parser, Subcommand, ValueEnum};
use serde::Serialize;

use scle_core::models::MonteCarlo;
use scle_core::score::{empirical_gram, eval_scores};
use scle_core::{
    build_covariance, estep, lambda_entry, population_gram, select, selection_trace, solve_path, DataMatrix, FitConfig,
    GramSummary, InitialRule, PathStop, SelectionConfig,
};

use crate::config::{self, Command, Format, RunConfig};
use crate::data::{read_data, read_matrix, write_matrix};
use crate::error::{AppError, AppResult};
use crate::format::real;
use crate::report::{self, FitReport};
use crate::simulate::{self, ExperimentConfig};

#[derive(Debug, Parser)]
#[command(name = "scle", version, about = "Sparse composite likelihood estimation and selection")]
pub struct Cli {
    #[command(subcommand)]
    pub command: CommandArg,
    /// TOML run configuration.
    #[arg(long, global = true, value_name = "FILE")]
    pub config: Option<PathBuf>,
    /// Override a configuration value at a dotted path (repeatable).
    #[arg(long = "set", global = true, value_name = "KEY=VALUE")]
    pub set: Vec<String>,
    /// Output directory (overrides output.dir).
    #[arg(long, global = true, value_name = "DIR")]
    pub out: Option<PathBuf>,
    /// Worker threads; results do not depend on this value.
    #[arg(long, global = true, value_name = "N")]
    pub threads: Option<usize>,
    /// Write only this artifact format (overrides output.formats).
    #[arg(long, global = true, value_enum)]
    pub format: Option<FormatArg>,
}

#[derive(Debug, Clone, Copy, Subcommand)]
pub enum CommandArg {
    /// Estimate θ: preliminary fit, T-Step path, selection, one-step update.
    Fit,
    /// Solution path of the T-Step from data or a supplied Gram.
    Path,
    /// Asymptotic relative efficiency along a λ grid.
    Are,
    /// Monte Carlo mean squared error trajectories.
    Simulate,
    /// Export the covariance design.
    Covariance,
}

impl From<CommandArg> for Command {
    fn from(c: CommandArg) -> Self {
        match c {
            CommandArg::Fit => Command::Fit,
            CommandArg::Path => Command::Path,
            CommandArg::Are => Command::Are,
            CommandArg::Simulate => Command::Simulate,
            CommandArg::Covariance => Command::Covariance,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum FormatArg {
    Csv,
    Json,
}

/// Resolved configuration plus the artifacts it produced.
#[derive(Debug, Serialize)]
struct Manifest<'a> {
    program: &'static str,
    version: &'static str,
    config: &'a RunConfig,
    artifacts: Vec<String>,
}

/// Collects artifact names written under the output directory.
struct Artifacts {
    dir: PathBuf,
    names: Vec<String>,
}

impl Artifacts {
    fn path(&mut self, name: &str) -> PathBuf {
        self.names.push(name.to_string());
        self.dir.join(name)
    }
}

/// Loads and validates the configuration for `cli`.
pub fn resolve(cli: &Cli) -> AppResult<RunConfig> {
    let mut cfg = config::load(cli.config.as_deref(), &cli.set)?;
    let command = Command::from(cli.command);
    if let Some(c) = cfg.command {
        if c != command {
            return Err(AppError::Usage(format!(
                "config declares command `{}` but `{}` was requested",
                c.name(),
                command.name()
            )));
        }
    }
    if let Some(dir) = &cli.out {
        cfg.output.dir = dir.clone();
    }
    if let Some(f) = cli.format {
        cfg.output.formats = vec![match f {
            FormatArg::Csv => Format::Csv,
            FormatArg::Json => Format::Json,
        }];
    }
    let cfg = cfg.resolved(command);
    let diagnostics = cfg.validate(command);
    if !diagnostics.is_empty() {
        return Err(AppError::Invalid(diagnostics));
    }
    Ok(cfg)
}

/// Runs the requested command and returns the summary line.
pub fn run(cli: &Cli) -> AppResult<String> {
    if cli.threads == Some(0) {
        return Err(AppError::Usage("--threads must be at least 1".into()));
    }
    let cfg = resolve(cli)?;
    match cli.threads {
        Some(n) => {
            let pool = rayon::ThreadPoolBuilder::new()
                .num_threads(n)
                .build()
                .map_err(|e| AppError::Usage(format!("cannot start {n} threads: {e}")))?;
            pool.install(|| execute(&cfg))
        }
        None => execute(&cfg),
    }
}

/// Runs a validated configuration.
pub fn execute(cfg: &RunConfig) -> AppResult<String> {
    let start = Instant::now();
    let dir = cfg.output.dir.clone();
    std::fs::create_dir_all(&dir).map_err(|e| AppError::Usage(format!("cannot create {}: {e}", dir.display())))?;
    let mut art = Artifacts { dir, names: Vec::new() };
    let command = cfg.command.expect("resolved configs carry a command");
    let summary = match command {
        Command::Fit => run_fit(cfg, &mut art)?,
        Command::Path => run_path(cfg, &mut art)?,
        Command::Are => run_are(cfg, &mut art)?,
        Command::Simulate => run_simulate(cfg, &mut art)?,
        Command::Covariance => run_covariance(cfg, &mut art)?,
    };
    let manifest_path = art.dir.join("manifest.json");
    report::write_json(
        &manifest_path,
        &Manifest {
            program: "scle",
            version: env!("CARGO_PKG_VERSION"),
            config: cfg,
            artifacts: art.names,
        },
    )?;
    Ok(format!(
        "{} {summary} time={:.3}s",
        command.name(),
        start.elapsed().as_secs_f64()
    ))
}

fn selection_config(cfg: &RunConfig) -> SelectionConfig {
    SelectionConfig {
        tau: cfg.selection.tau,
        lambda_budget: cfg.selection.lambda_budget,
    }
}

fn load_data(cfg: &RunConfig, dim: usize) -> AppResult<DataMatrix> {
    let data = match (&cfg.data.csv, cfg.data.n) {
        (Some(p), _) => read_data(p)?,
        (None, Some(n)) => {
            let model = cfg.analytic_model()?;
            let seed = cfg.seed.ok_or_else(|| AppError::Usage("generated data need a seed".into()))?;
            simulate::sample_mvn(&model.mean(), &model.covariance()?, n, seed)?
        }
        (None, None) => return Err(AppError::Usage("give data.csv or data.n".into())),
    };
    if data.ncols() != dim {
        return Err(AppError::Usage(format!(
            "data have {} columns but the model has dimension {dim}",
            data.ncols()
        )));
    }
    Ok(data)
}

fn run_fit(cfg: &RunConfig, art: &mut Artifacts) -> AppResult<String> {
    let model = cfg.analytic_model()?;
    let spec = simulate::model_spec(&model)?;
    let data = load_data(cfg, model.cov.dim)?;
    let init = match &cfg.fit.init {
        Some(i) => i.clone(),
        None => simulate::default_init(&model, &data)?,
    };
    let mut fc = FitConfig::new(init);
    fc.selection = selection_config(cfg);
    fc.refine_rounds = cfg.fit.refine_rounds;
    fc.max_active = cfg.fit.max_active;
    if let Some(keep_prob) = cfg.fit.keep_prob {
        fc.initial_rule = InitialRule::Stochastic {
            seed: cfg.seed.unwrap_or_default(),
            keep_prob,
        };
    }
    let fit = estep::fit(&spec, &data, &fc)?;
    let gram = empirical_gram(&eval_scores(&spec, &fit.preliminary_theta, &data)?)?;
    let trace = selection_trace(&fit.path, &gram, &fc.selection)?;
    let labels = spec.labels();
    if cfg.wants(Format::Json) {
        report::write_json(&art.path("fit.json"), &FitReport::new(&fit, labels))?;
    }
    if cfg.wants(Format::Csv) {
        report::write_estimates_csv(&art.path("estimates.csv"), &fit)?;
        report::write_rule_csv(&art.path("rule.csv"), &fit.rule, labels)?;
        report::write_path_csv(&art.path("path.csv"), &fit.path)?;
        report::write_selection_csv(&art.path("selection.csv"), &trace)?;
    }
    for w in &fit.warnings {
        eprintln!("warning: {w}");
    }
    Ok(format!(
        "theta={} se={} lambda={} active={}/{} phi={}",
        real(fit.theta[0]),
        real(fit.std_errors[0]),
        real(fit.selected_lambda),
        fit.rule.n_active(),
        fit.rule.len(),
        real(fit.phi)
    ))
}

fn path_gram(cfg: &RunConfig) -> AppResult<(GramSummary, Vec<f64>)> {
    if let Some(p) = &cfg.path.gram_csv {
        let g = read_matrix(p)?;
        if g.nrows() != g.ncols() {
            return Err(AppError::Usage(format!("{}: Gram matrix must be square", p.display())));
        }
        let theta = cfg.model.as_ref().map_or(0.0, |m| m.theta);
        let m = g.nrows();
        return Ok((GramSummary::from_matrix(g, None, 1, vec![theta])?, vec![1.0; m]));
    }
    let model = cfg.analytic_model()?;
    let spec = simulate::model_spec(&model)?;
    let data = load_data(cfg, model.cov.dim)?;
    let init = match &cfg.fit.init {
        Some(i) => i.clone(),
        None => simulate::default_init(&model, &data)?,
    };
    let prelim = estep::preliminary_estimate(&spec, &data, &init, &InitialRule::Uniform)?;
    let gram = empirical_gram(&eval_scores(&spec, &prelim, &data)?)?;
    Ok((gram, spec.penalty_weights().to_vec()))
}

#[derive(Serialize)]
struct PathReport<'a> {
    path: &'a scle_core::PathResult,
    selected_lambda: f64,
    selected_phi: f64,
    selected_active: Vec<usize>,
    trace: &'a [scle_core::SelectionPoint],
}

fn run_path(cfg: &RunConfig, art: &mut Artifacts) -> AppResult<String> {
    let (gram, alpha) = path_gram(cfg)?;
    let stop = PathStop {
        lambda_min: cfg.path.lambda_min,
        max_active: cfg.path.max_active,
        max_events: None,
    };
    let path = solve_path(&gram, &alpha, stop)?;
    let sel_cfg = selection_config(cfg);
    let trace = selection_trace(&path, &gram, &sel_cfg)?;
    let selected = select(&path, &gram, &sel_cfg)?;
    if cfg.wants(Format::Csv) {
        report::write_path_csv(&art.path("path.csv"), &path)?;
        report::write_selection_csv(&art.path("selection.csv"), &trace)?;
    }
    if cfg.wants(Format::Json) {
        report::write_json(
            &art.path("path.json"),
            &PathReport {
                path: &path,
                selected_lambda: selected.lambda,
                selected_phi: selected.phi,
                selected_active: selected.rule.active().to_vec(),
                trace: &trace,
            },
        )?;
    }
    for w in &path.warnings {
        eprintln!("warning: {w}");
    }
    Ok(format!(
        "breakpoints={} lambda_max={} lambda={} active={}/{} phi={}",
        path.breakpoints.len(),
        real(path.lambda_max),
        real(selected.lambda),
        selected.rule.n_active(),
        gram.n_scores(),
        real(selected.phi)
    ))
}

#[derive(Serialize)]
struct AreReport<'a> {
    full_information: f64,
    lambda_max: f64,
    selected_lambda: f64,
    selected_active: usize,
    selected_are: f64,
    curve: &'a [simulate::ArePoint],
}

fn run_are(cfg: &RunConfig, art: &mut Artifacts) -> AppResult<String> {
    let model = cfg.analytic_model()?;
    let mc = MonteCarlo {
        draws: cfg.are.mc_draws,
        seed: cfg.seed.unwrap_or(MonteCarlo::default().seed),
    };
    let pop = population_gram(&model, mc)?;
    let m = pop.gram.n_scores();
    let lambda_max = lambda_entry(&pop.gram, &vec![1.0; m])?;
    let grid = match &cfg.are.lambda_grid {
        Some(g) => g.clone(),
        None => simulate::lambda_grid(lambda_max, cfg.are.grid_points),
    };
    let curve = simulate::are_curve_with(&model, &pop, &grid)?;
    let path = solve_path(&pop.gram, &vec![1.0; m], PathStop::default())?;
    let selected = select(&path, &pop.gram, &selection_config(cfg))?;
    let ctx = scle_core::EfficiencyContext::new(&model, &pop)?;
    let selected_are = ctx.are(&selected.rule)?;
    if cfg.wants(Format::Csv) {
        report::write_are_csv(&art.path("are.csv"), &curve)?;
    }
    if cfg.wants(Format::Json) {
        report::write_json(
            &art.path("are.json"),
            &AreReport {
                full_information: ctx.full_information(),
                lambda_max,
                selected_lambda: selected.lambda,
                selected_active: selected.rule.n_active(),
                selected_are,
                curve: &curve,
            },
        )?;
    }
    Ok(format!(
        "points={} lambda_max={} lambda={} active={}/{} are={}",
        curve.len(),
        real(lambda_max),
        real(selected.lambda),
        selected.rule.n_active(),
        m,
        real(selected_are)
    ))
}

fn run_simulate(cfg: &RunConfig, art: &mut Artifacts) -> AppResult<String> {
    let exp = ExperimentConfig {
        model: cfg.analytic_model()?,
        n: cfg.simulate.n,
        replications: cfg.simulate.replications,
        seed: cfg.seed.ok_or_else(|| AppError::Usage("simulate requires a seed".into()))?,
        comparators: cfg.simulate.comparators.clone(),
        selection: selection_config(cfg),
        max_active: cfg.simulate.max_active,
    };
    let t = simulate::mse_experiment(&exp)?;
    if cfg.wants(Format::Csv) {
        report::write_trajectory_csv(&art.path("trajectory.csv"), &t)?;
    }
    if cfg.wants(Format::Json) {
        report::write_json(&art.path("simulate.json"), &t)?;
    }
    if let Some(f) = &t.first_failure {
        eprintln!(
            "warning: {} of {} replications failed; first: {f}",
            t.failures, t.replications
        );
    }
    let best = |f: fn(&simulate::TrajectoryPoint) -> Option<f64>| t.points.iter().filter_map(f).fold(f64::NAN, f64::max);
    Ok(format!(
        "replications={} failures={} valid={} max_mle_over_scle={} max_unif_over_scle={} mean_selected={}",
        t.replications,
        t.failures,
        t.valid,
        real(best(|p| p.mle_over_scle.map(|r| r.value))),
        real(best(|p| p.unif_over_scle.map(|r| r.value))),
        real(t.mean_selected_count)
    ))
}

fn run_covariance(cfg: &RunConfig, art: &mut Artifacts) -> AppResult<String> {
    let sigma = build_covariance(&cfg.covariance_spec()?)?;
    if cfg.wants(Format::Csv) {
        write_matrix(&art.path("covariance.csv"), &sigma)?;
    }
    if cfg.wants(Format::Json) {
        let rows: Vec<Vec<f64>> = sigma.row_iter().map(|r| r.iter().copied().collect()).collect();
        report::write_json(&art.path("covariance.json"), &rows)?;
    }
    Ok(format!("dim={} trace={}", sigma.nrows(), real(sigma.trace())))
}

/// Parses `args`, runs, prints the summary or the error, and returns the
/// process exit code.
pub fn main_with<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return code;
        }
    };
    match run(&cli) {
        Ok(summary) => {
            println!("{summary}");
            0
        }
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}
