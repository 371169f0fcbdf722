//! Seeded Monte Carlo experiments.
//!
//! Replication `r` draws from a ChaCha20 generator seeded with the master
//! seed and switched to stream `r`, so each replication's data do not
//! depend on scheduling. Replications run in parallel and are reduced in
//! replication order, which keeps every result independent of the number
//! of worker threads.

use nalgebra::DMatrix;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha20Rng;
use rayon::prelude::*;
use serde::Serialize;

use scle_core::models::{
    self, expdecay_full_score, gls_mean, pairwise_moment_init, population_gram, EfficiencyContext, MonteCarlo, PopulationGram,
};
use scle_core::score::{empirical_gram, eval_scores};
use scle_core::{
    estep, select, solve_fixed_lambda, solve_path, AnalyticModel, CompositionRule, DataMatrix, Error, FitConfig, FitResult,
    InitialRule, ModelFamily, ModelSpec, MvnSampler, PathStop, Result, SelectionConfig, SolverOptions,
};

/// Generator for replication `rep` under `seed`.
pub fn replication_rng(seed: u64, rep: u64) -> ChaCha20Rng {
    let mut rng = ChaCha20Rng::seed_from_u64(seed);
    rng.set_stream(rep);
    rng
}

/// `n` draws from `N(mean, cov)` using the generator for `seed`.
pub fn sample_mvn(mean: &[f64], cov: &DMatrix<f64>, n: usize, seed: u64) -> Result<DataMatrix> {
    scle_core::sample_mvn(mean, cov, n, &mut ChaCha20Rng::seed_from_u64(seed))
}

/// Score model for a built-in family.
pub fn model_spec(model: &AnalyticModel) -> Result<ModelSpec> {
    ModelSpec::new(model.scores()?)
}

/// Starting value for the preliminary Newton iteration: the grand mean for
/// location families, a moment estimate for the pairwise family.
pub fn default_init(model: &AnalyticModel, data: &DataMatrix) -> Result<Vec<f64>> {
    Ok(match model.family {
        ModelFamily::PairwiseExpdecay => vec![pairwise_moment_init(model.cov.kind, data)?],
        _ => {
            let means = data.column_means();
            vec![means.iter().sum::<f64>() / means.len() as f64]
        }
    })
}

/// Full maximum likelihood estimate using the true covariance structure.
pub fn mle_reference(model: &AnalyticModel, data: &DataMatrix) -> Result<f64> {
    match model.family {
        ModelFamily::CommonLocation | ModelFamily::ExchangeableLocation => gls_mean(&model.covariance()?, data),
        ModelFamily::PairwiseExpdecay => expdecay_mle(model, data),
    }
}

fn second_moment(data: &DataMatrix) -> DMatrix<f64> {
    let d = data.ncols();
    let mut s = DMatrix::zeros(d, d);
    for row in data.rows() {
        for j in 0..d {
            for k in j..d {
                s[(j, k)] += row[j] * row[k];
            }
        }
    }
    let n = data.nrows() as f64;
    for j in 0..d {
        for k in j..d {
            s[(j, k)] /= n;
            s[(k, j)] = s[(j, k)];
        }
    }
    s
}

/// Root of the mean full-likelihood score by Newton steps safeguarded with
/// bisection inside a sign-change bracket.
fn expdecay_mle(model: &AnalyticModel, data: &DataMatrix) -> Result<f64> {
    let kind = model.cov.kind;
    let s2 = second_moment(data);
    let score = |t: f64| expdecay_full_score(kind, t, &s2);
    let start = pairwise_moment_init(kind, data)?;
    // ℓ' > 0 means the likelihood still increases with θ.
    let f0 = score(start)?.0;
    let (mut lo, mut hi) = (start, start);
    let mut found = false;
    for _ in 0..200 {
        if f0 > 0.0 {
            hi *= 1.5;
            match score(hi) {
                Ok((f, _)) if f <= 0.0 => {
                    found = true;
                    break;
                }
                Ok(_) => lo = hi,
                Err(e) => return Err(e),
            }
        } else {
            lo /= 1.5;
            match score(lo) {
                Ok((f, _)) if f >= 0.0 => {
                    found = true;
                    break;
                }
                Ok(_) => hi = lo,
                // Σ(θ) loses definiteness as θ → 0: the root lies above.
                Err(_) => {
                    lo *= 1.5;
                    break;
                }
            }
        }
    }
    if !found {
        return Err(Error::Estimation("could not bracket the likelihood root".into()));
    }
    let mut t = 0.5 * (lo + hi);
    for _ in 0..200 {
        let (f, h) = score(t)?;
        if f.abs() <= 1e-12 {
            return Ok(t);
        }
        if f > 0.0 {
            lo = t;
        } else {
            hi = t;
        }
        let newton = t - f / h;
        t = if h < 0.0 && newton > lo && newton < hi {
            newton
        } else {
            0.5 * (lo + hi)
        };
        if hi - lo <= 1e-15 * hi {
            return Ok(t);
        }
    }
    Err(Error::Estimation("likelihood root search did not converge".into()))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, serde::Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Comparator {
    Mle,
    UniformMcle,
    SclePath,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentConfig {
    pub model: AnalyticModel,
    pub n: usize,
    pub replications: usize,
    pub seed: u64,
    pub comparators: Vec<Comparator>,
    pub selection: SelectionConfig,
    pub max_active: Option<usize>,
}

/// Per-replication estimates.
#[derive(Debug, Clone, PartialEq)]
pub struct ReplicationOutcome {
    /// `(active count, one-step estimate)` at the first path breakpoint
    /// carrying that many nonzero weights.
    pub trajectory: Vec<(usize, f64)>,
    /// Uniform composite likelihood estimate (the preliminary estimate).
    pub uniform: f64,
    pub mle: Option<f64>,
    /// Active count of the rule chosen by the selection rule.
    pub selected_count: usize,
}

pub fn run_replication(cfg: &ExperimentConfig, spec: &ModelSpec, sampler: &MvnSampler, rep: u64) -> Result<ReplicationOutcome> {
    let mut rng = replication_rng(cfg.seed, rep);
    let data = sampler.sample(cfg.n, &mut rng)?;
    let init = default_init(&cfg.model, &data)?;
    let prelim = estep::preliminary_estimate(spec, &data, &init, &InitialRule::Uniform)?;
    let batch = eval_scores(spec, &prelim, &data)?;
    let gram = empirical_gram(&batch)?;
    let stop = PathStop {
        lambda_min: cfg.selection.lambda_budget,
        max_active: cfg.max_active,
        max_events: None,
    };
    let path = solve_path(&gram, spec.penalty_weights(), stop)?;
    let mut trajectory: Vec<(usize, f64)> = Vec::new();
    for bp in &path.breakpoints {
        let count = bp.rule.n_active();
        if count == 0 || trajectory.iter().any(|(c, _)| *c == count) {
            continue;
        }
        let theta = estep::one_step_update(spec, &data, &prelim, &bp.rule)?;
        trajectory.push((count, theta[0]));
    }
    trajectory.sort_by_key(|(c, _)| *c);
    let selected_count = select(&path, &gram, &cfg.selection)?.rule.n_active();
    let mle = if cfg.comparators.contains(&Comparator::Mle) {
        Some(mle_reference(&cfg.model, &data)?)
    } else {
        None
    };
    Ok(ReplicationOutcome {
        trajectory,
        uniform: prelim[0],
        mle,
        selected_count,
    })
}

/// Ratio of two paired mean squared errors with a delta-method standard
/// error.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Ratio {
    pub value: f64,
    pub mc_se: f64,
}

fn paired_ratio(num: &[f64], den: &[f64]) -> Ratio {
    let n = num.len() as f64;
    let ma = num.iter().sum::<f64>() / n;
    let mb = den.iter().sum::<f64>() / n;
    let r = ma / mb;
    if num.len() < 2 {
        return Ratio {
            value: r,
            mc_se: f64::NAN,
        };
    }
    let (mut vaa, mut vbb, mut vab) = (0.0, 0.0, 0.0);
    for (a, b) in num.iter().zip(den) {
        vaa += (a - ma) * (a - ma);
        vbb += (b - mb) * (b - mb);
        vab += (a - ma) * (b - mb);
    }
    let (vaa, vbb, vab) = (vaa / (n - 1.0), vbb / (n - 1.0), vab / (n - 1.0));
    let var = (vaa - 2.0 * r * vab + r * r * vbb) / (mb * mb * n);
    Ratio {
        value: r,
        mc_se: var.max(0.0).sqrt(),
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TrajectoryPoint {
    pub active_count: usize,
    /// Replications whose path reached this active count.
    pub replications: usize,
    pub mse_scle: f64,
    /// `MSE_MLE / MSE_SCLE` over the same replications.
    pub mle_over_scle: Option<Ratio>,
    /// `MSE_Unif / MSE_SCLE` over the same replications.
    pub unif_over_scle: Option<Ratio>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MseTrajectory {
    pub points: Vec<TrajectoryPoint>,
    pub replications: usize,
    pub failures: usize,
    /// At least 99% of replications succeeded.
    pub valid: bool,
    pub mse_mle: Option<f64>,
    pub mse_unif: f64,
    pub mean_selected_count: f64,
    pub first_failure: Option<String>,
}

pub fn mse_experiment(cfg: &ExperimentConfig) -> Result<MseTrajectory> {
    if cfg.replications == 0 || cfg.n < 2 || cfg.comparators.is_empty() {
        return Err(Error::Config(
            "experiment needs replications >= 1, n >= 2 and a comparator".into(),
        ));
    }
    cfg.selection.validate()?;
    let spec = model_spec(&cfg.model)?;
    let sampler = MvnSampler::new(&cfg.model.mean(), &cfg.model.covariance()?)?;
    let outcomes: Vec<Result<ReplicationOutcome>> = (0..cfg.replications as u64)
        .into_par_iter()
        .map(|rep| run_replication(cfg, &spec, &sampler, rep))
        .collect();

    let truth = cfg.model.true_theta[0];
    let sq = |x: f64| (x - truth) * (x - truth);
    let mut ok = Vec::new();
    let mut failures = 0;
    let mut first_failure = None;
    for (rep, o) in outcomes.into_iter().enumerate() {
        match o {
            Ok(o) => ok.push(o),
            Err(e) => {
                failures += 1;
                first_failure.get_or_insert_with(|| format!("replication {rep}: {e}"));
            }
        }
    }
    if ok.is_empty() {
        return Err(Error::Estimation(format!(
            "every replication failed; first failure: {}",
            first_failure.unwrap_or_default()
        )));
    }
    let max_count = ok
        .iter()
        .flat_map(|o| o.trajectory.iter().map(|(c, _)| *c))
        .max()
        .unwrap_or(0);
    let with_mle = cfg.comparators.contains(&Comparator::Mle);
    let with_unif = cfg.comparators.contains(&Comparator::UniformMcle);
    let mut points = Vec::new();
    for count in 1..=max_count {
        let mut scle = Vec::new();
        let mut mle = Vec::new();
        let mut unif = Vec::new();
        for o in &ok {
            if let Some((_, est)) = o.trajectory.iter().find(|(c, _)| *c == count) {
                scle.push(sq(*est));
                unif.push(sq(o.uniform));
                if let Some(m) = o.mle {
                    mle.push(sq(m));
                }
            }
        }
        if scle.is_empty() {
            continue;
        }
        points.push(TrajectoryPoint {
            active_count: count,
            replications: scle.len(),
            mse_scle: scle.iter().sum::<f64>() / scle.len() as f64,
            mle_over_scle: with_mle.then(|| paired_ratio(&mle, &scle)),
            unif_over_scle: with_unif.then(|| paired_ratio(&unif, &scle)),
        });
    }
    let k = ok.len() as f64;
    Ok(MseTrajectory {
        points,
        replications: cfg.replications,
        failures,
        valid: (failures as f64) < 0.01 * cfg.replications as f64,
        mse_mle: with_mle.then(|| ok.iter().filter_map(|o| o.mle).map(sq).sum::<f64>() / k),
        mse_unif: ok.iter().map(|o| sq(o.uniform)).sum::<f64>() / k,
        mean_selected_count: ok.iter().map(|o| o.selected_count as f64).sum::<f64>() / k,
        first_failure,
    })
}

/// Runs the full estimation pipeline on `replications` seeded data sets.
pub fn fit_experiment(
    model: &AnalyticModel,
    n: usize,
    replications: usize,
    seed: u64,
    configure: impl Fn(Vec<f64>) -> FitConfig + Sync,
) -> Result<Vec<Result<FitResult>>> {
    let spec = model_spec(model)?;
    let sampler = MvnSampler::new(&model.mean(), &model.covariance()?)?;
    Ok((0..replications as u64)
        .into_par_iter()
        .map(|rep| {
            let data = sampler.sample(n, &mut replication_rng(seed, rep))?;
            let cfg = configure(default_init(model, &data)?);
            estep::fit(&spec, &data, &cfg)
        })
        .collect())
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ArePoint {
    pub lambda: f64,
    pub active_count: usize,
    pub are: f64,
}

/// Evenly spaced grid from `lambda_max` down to 0 with `points` entries.
pub fn lambda_grid(lambda_max: f64, points: usize) -> Vec<f64> {
    if points < 2 {
        return vec![lambda_max];
    }
    (0..points)
        .map(|i| lambda_max * (1.0 - i as f64 / (points - 1) as f64))
        .collect()
}

/// Population-optimal rule at `lambda`: closed form when available,
/// otherwise the T-Step solver on the population Gram.
pub fn population_rule(model: &AnalyticModel, gram: &scle_core::GramSummary, lambda: f64) -> Result<CompositionRule> {
    match models::analytic_optimal_rule(model, lambda) {
        Ok(rule) => Ok(rule),
        Err(Error::Model(_)) => solve_fixed_lambda(gram, lambda, &vec![1.0; gram.n_scores()], &SolverOptions::default()),
        Err(e) => Err(e),
    }
}

/// ARE of the population-optimal rule along `lambdas`.
pub fn are_curve(model: &AnalyticModel, lambdas: &[f64], mc: MonteCarlo) -> Result<Vec<ArePoint>> {
    are_curve_with(model, &population_gram(model, mc)?, lambdas)
}

/// As [`are_curve`] with a precomputed population Gram.
pub fn are_curve_with(model: &AnalyticModel, pop: &PopulationGram, lambdas: &[f64]) -> Result<Vec<ArePoint>> {
    let ctx = EfficiencyContext::new(model, pop)?;
    lambdas
        .iter()
        .map(|&lambda| {
            let rule = population_rule(model, &pop.gram, lambda)?;
            Ok(ArePoint {
                lambda,
                active_count: rule.n_active(),
                are: ctx.are(&rule)?,
            })
        })
        .collect()
}

/// Median of finite values.
pub fn median(values: &mut [f64]) -> f64 {
    values.sort_by(f64::total_cmp);
    let n = values.len();
    if n == 0 {
        return f64::NAN;
    }
    if n % 2 == 1 {
        values[n / 2]
    } else {
        0.5 * (values[n / 2 - 1] + values[n / 2])
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use scle_core::{CovarianceKind, CovarianceSpec};

    #[test]
    fn same_seed_same_sample() {
        let cov = DMatrix::identity(3, 3);
        assert_eq!(
            sample_mvn(&[0.0; 3], &cov, 10, 4).unwrap(),
            sample_mvn(&[0.0; 3], &cov, 10, 4).unwrap()
        );
        assert_ne!(
            sample_mvn(&[0.0; 3], &cov, 10, 4).unwrap(),
            sample_mvn(&[0.0; 3], &cov, 10, 5).unwrap()
        );
    }

    #[test]
    fn gls_mle_on_identity_is_grand_mean() {
        let model = AnalyticModel::new(
            ModelFamily::CommonLocation,
            CovarianceSpec::new(CovarianceKind::Identity, 4),
            vec![0.0],
        )
        .unwrap();
        let data = sample_mvn(&model.mean(), &model.covariance().unwrap(), 30, 1).unwrap();
        let means = data.column_means();
        let grand = means.iter().sum::<f64>() / 4.0;
        assert!((mle_reference(&model, &data).unwrap() - grand).abs() < 1e-14);
    }

    #[test]
    fn gls_matches_numeric_likelihood_maximum() {
        let model = AnalyticModel::new(
            ModelFamily::CommonLocation,
            CovarianceSpec::new(CovarianceKind::MetaSqrtCorr, 5).with_rho(0.4),
            vec![1.0],
        )
        .unwrap();
        let sigma = model.covariance().unwrap();
        let data = sample_mvn(&model.mean(), &sigma, 40, 2).unwrap();
        let inv = sigma.clone().try_inverse().unwrap();
        // −2ℓ(θ) ∝ Σ_i (x_i − θ1)ᵀΣ⁻¹(x_i − θ1), minimized by golden section
        let nll = |t: f64| -> f64 {
            data.rows()
                .map(|r| {
                    let v = nalgebra::DVector::from_iterator(5, r.iter().map(|x| x - t));
                    (v.transpose() * &inv * &v)[(0, 0)]
                })
                .sum()
        };
        let (mut a, mut b) = (-5.0, 5.0);
        let g = (5f64.sqrt() - 1.0) / 2.0;
        for _ in 0..200 {
            let c = b - g * (b - a);
            let d = a + g * (b - a);
            if nll(c) < nll(d) {
                b = d;
            } else {
                a = c;
            }
        }
        assert!((mle_reference(&model, &data).unwrap() - 0.5 * (a + b)).abs() < 1e-7);
    }

    #[test]
    fn expdecay_mle_is_a_score_root() {
        let model = AnalyticModel::new(
            ModelFamily::PairwiseExpdecay,
            CovarianceSpec::new(CovarianceKind::ExpdecaySqrt, 5).with_theta(0.5),
            vec![0.5],
        )
        .unwrap();
        let data = sample_mvn(&model.mean(), &model.covariance().unwrap(), 500, 3).unwrap();
        let t = mle_reference(&model, &data).unwrap();
        let (s, _) = expdecay_full_score(model.cov.kind, t, &second_moment(&data)).unwrap();
        assert!(s.abs() <= 1e-8);
        assert!((t - 0.5).abs() < 0.2);
    }

    #[test]
    fn paired_ratio_of_identical_columns() {
        let a = [1.0, 2.0, 3.0, 4.0];
        let r = paired_ratio(&a, &a);
        assert_eq!(r.value, 1.0);
        assert!(r.mc_se.abs() < 1e-15);
    }

    #[test]
    fn grid_endpoints() {
        let g = lambda_grid(2.0, 5);
        assert_eq!(g, vec![2.0, 1.5, 1.0, 0.5, 0.0]);
    }

    #[test]
    fn are_curve_for_independent_location() {
        let model = AnalyticModel::new(
            ModelFamily::CommonLocation,
            CovarianceSpec::new(CovarianceKind::DiagIncreasing, 5),
            vec![0.0],
        )
        .unwrap();
        let curve = are_curve(&model, &[0.0, 0.5, 2.0], MonteCarlo::default()).unwrap();
        assert!((curve[0].are - 1.0).abs() < 1e-12);
        assert_eq!(curve[1].active_count, 1);
        assert_eq!(curve[2].are, 0.0);
    }
}
