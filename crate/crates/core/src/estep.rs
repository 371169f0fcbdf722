//! Preliminary estimation, the one-step update and the sandwich matrices,
//! and the full estimation pipeline.

use alloc::format;
use alloc::string::String;
use alloc::vec::Vec;

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha20Rng;

use crate::error::{Error, Result};
use crate::linalg;
use crate::score::{self, CompositionRule, DataMatrix, ModelSpec};
use crate::selection::{self, SelectionConfig};
use crate::tstep::{self, KktReport, PathResult, PathStop, SolverOptions};

/// Weights used for the preliminary estimate.
#[derive(Debug, Clone, PartialEq)]
pub enum InitialRule {
    /// `w = 1_m`
    Uniform,
    /// Independent 0/1 weights with `P(1) = keep_prob`; at least one score
    /// is always kept.
    Stochastic {
        seed: u64,
        keep_prob: f64,
    },
    Custom(CompositionRule),
}

impl InitialRule {
    pub fn rule(&self, m: usize) -> Result<CompositionRule> {
        match self {
            InitialRule::Uniform => Ok(CompositionRule::uniform(m)),
            InitialRule::Stochastic { seed, keep_prob } => stochastic_rule(m, *seed, *keep_prob),
            InitialRule::Custom(rule) => {
                if rule.len() != m {
                    return Err(Error::Config(format!(
                        "initial rule has {} weights, expected {m}",
                        rule.len()
                    )));
                }
                if rule.is_empty() {
                    return Err(Error::Config("initial rule has no nonzero weight".into()));
                }
                Ok(rule.clone())
            }
        }
    }
}

/// Random 0/1 composition rule.
pub fn stochastic_rule(m: usize, seed: u64, keep_prob: f64) -> Result<CompositionRule> {
    if !(keep_prob > 0.0 && keep_prob <= 1.0) {
        return Err(Error::Config(format!("keep_prob must lie in (0,1], got {keep_prob}")));
    }
    let mut rng = ChaCha20Rng::seed_from_u64(seed);
    let mut w: Vec<f64> = (0..m)
        .map(|_| if rng.random::<f64>() < keep_prob { 1.0 } else { 0.0 })
        .collect();
    if w.iter().all(|v| *v == 0.0) {
        w[rng.random_range(0..m)] = 1.0;
    }
    Ok(CompositionRule::from_dense(w, 0.0))
}

const NEWTON_TOL: f64 = 1e-10;
const NEWTON_MAX_ITER: usize = 100;
const MAX_HALVINGS: usize = 30;

fn norm(v: &DVector<f64>) -> f64 {
    num_traits::Float::sqrt(v.iter().map(|x| x * x).sum::<f64>())
}

/// Root of `E_Fn u(θ, w₀) = 0` by damped Newton iteration from `init`.
pub fn preliminary_estimate(model: &ModelSpec, data: &DataMatrix, init: &[f64], rule0: &InitialRule) -> Result<Vec<f64>> {
    let rule = rule0.rule(model.n_scores())?;
    newton_root(model, data, init, &rule)
}

/// Symmetric part of the mean score Jacobian is negative definite, i.e. the
/// composite log-likelihood is locally concave.
fn locally_concave(jac: &DMatrix<f64>) -> bool {
    let neg_sym = -(jac + jac.transpose()) * 0.5;
    linalg::SpdFactor::new(&neg_sym).is_some()
}

/// Damped Newton iteration on `E_Fn u(θ, w) = 0`.
///
/// Where the composite log-likelihood is not locally concave the Newton
/// direction need not ascend, and can run off to a region where every
/// partial score vanishes; the iteration then steps along the score instead,
/// backtracking until the likelihood increases.
/// A point is returned only if the likelihood is locally concave there.
pub fn newton_root(model: &ModelSpec, data: &DataMatrix, init: &[f64], rule: &CompositionRule) -> Result<Vec<f64>> {
    let mut theta = init.to_vec();
    let mut f = score::mean_score(model, &theta, data, rule)?;
    let mut fnorm = norm(&f);
    for iter in 0..NEWTON_MAX_ITER {
        let jac = score::mean_jacobian(model, &theta, data, rule)?;
        let concave = locally_concave(&jac);
        if fnorm <= NEWTON_TOL {
            return accept_root(theta, concave);
        }
        let scale = theta.iter().fold(1.0_f64, |m, v| m.max(v.abs()));
        let step = if concave {
            linalg::lu_solve(&jac, &f)
                .ok_or_else(|| Error::Estimation(format!("singular score Jacobian at Newton iteration {iter}")))?
        } else {
            // θ − t·step moves along +f; first trial length at most `scale`.
            let jnorm = jac.iter().map(|x| x * x).sum::<f64>();
            let len = if jnorm > 0.0 {
                fnorm / num_traits::Float::sqrt(jnorm)
            } else {
                scale
            };
            -&f * (len.min(scale) / fnorm)
        };
        let mut t = 1.0;
        let mut accepted = false;
        for _ in 0..=MAX_HALVINGS {
            let trial: Vec<f64> = theta.iter().zip(step.iter()).map(|(a, s)| a - t * s).collect();
            if let Ok(ft) = score::mean_score(model, &trial, data, rule) {
                let n = norm(&ft);
                // Ascent steps are accepted while the trapezoidal estimate of
                // the likelihood change along the step stays positive.
                let improves = if concave { n < fnorm } else { -(&f + &ft).dot(&step) > 0.0 };
                if n.is_finite() && improves {
                    theta = trial;
                    f = ft;
                    fnorm = n;
                    accepted = true;
                    break;
                }
            }
            t *= 0.5;
        }
        if !accepted {
            // A full step below rounding level means θ is a root to machine precision.
            if concave && step.iter().all(|s| s.abs() <= 1e-12 * scale) {
                return Ok(theta);
            }
            return Err(Error::NoConvergence {
                iterations: iter + 1,
                last: theta,
                score_norm: fnorm,
            });
        }
    }
    if fnorm <= NEWTON_TOL {
        let jac = score::mean_jacobian(model, &theta, data, rule)?;
        return accept_root(theta, locally_concave(&jac));
    }
    Err(Error::NoConvergence {
        iterations: NEWTON_MAX_ITER,
        last: theta,
        score_norm: fnorm,
    })
}

fn accept_root(theta: Vec<f64>, concave: bool) -> Result<Vec<f64>> {
    if concave {
        Ok(theta)
    } else {
        Err(Error::Estimation(format!(
            "score root at {theta:?} is not a local maximum of the composite likelihood"
        )))
    }
}

/// `θ̂ − [E_Fn ∇u(θ̂, ŵ)]⁻¹ E_Fn u(θ̂, ŵ)`.
pub fn one_step_update(model: &ModelSpec, data: &DataMatrix, theta_hat: &[f64], rule: &CompositionRule) -> Result<Vec<f64>> {
    if rule.is_empty() {
        return Err(Error::Degenerate("one-step update needs a nonempty composition rule".into()));
    }
    let jac = score::mean_jacobian(model, theta_hat, data, rule)?;
    let f = score::mean_score(model, theta_hat, data, rule)?;
    let step = linalg::lu_solve(&jac, &f).ok_or_else(|| {
        Error::Estimation(
            "singular Jacobian of the selected equations; a larger lambda gives fewer, better-conditioned terms".into(),
        )
    })?;
    Ok(theta_hat.iter().zip(step.iter()).map(|(a, s)| a - s).collect())
}

/// Sensitivity, variability and Godambe information of the combined score.
#[derive(Debug, Clone, PartialEq)]
pub struct SandwichMatrices {
    /// `K̂ = −E_Fn ∇u(θ, w)`
    pub sensitivity: DMatrix<f64>,
    /// `Ĵ`: centered covariance of the per-observation combined scores.
    pub variability: DMatrix<f64>,
    /// `K̂ᵀĴ⁻¹K̂`
    pub godambe: DMatrix<f64>,
    pub theta: Vec<f64>,
    pub rule: CompositionRule,
    pub n_obs: usize,
}

impl SandwichMatrices {
    /// `√diag(godambe⁻¹/n)`
    pub fn std_errors(&self) -> Result<Vec<f64>> {
        let inv = linalg::lu_inverse(&self.godambe).ok_or_else(|| Error::Singular("Godambe information is singular".into()))?;
        Ok((0..inv.nrows())
            .map(|a| num_traits::Float::sqrt(inv[(a, a)] / self.n_obs as f64))
            .collect())
    }
}

pub fn sandwich(model: &ModelSpec, data: &DataMatrix, theta: &[f64], rule: &CompositionRule) -> Result<SandwichMatrices> {
    if rule.is_empty() {
        return Err(Error::Degenerate("sandwich needs a nonempty composition rule".into()));
    }
    let sensitivity = -score::mean_jacobian(model, theta, data, rule)?;
    let per_obs = score::combined_scores(model, theta, data, rule)?;
    let n = per_obs.nrows();
    let p = per_obs.ncols();
    let mean: Vec<f64> = per_obs.column_iter().map(|c| c.sum() / n as f64).collect();
    let mut variability = DMatrix::zeros(p, p);
    for i in 0..n {
        for a in 0..p {
            let da = per_obs[(i, a)] - mean[a];
            for b in a..p {
                variability[(a, b)] += da * (per_obs[(i, b)] - mean[b]);
            }
        }
    }
    for a in 0..p {
        for b in a..p {
            let v = variability[(a, b)] / n as f64;
            variability[(a, b)] = v;
            variability[(b, a)] = v;
        }
    }
    let j_inv = linalg::SpdFactor::new(&variability)
        .ok_or_else(|| {
            Error::Singular("score variability matrix is singular; a larger lambda keeps fewer, better-estimated terms".into())
        })?
        .inverse();
    let mut godambe = sensitivity.transpose() * j_inv * &sensitivity;
    linalg::symmetrize(&mut godambe);
    Ok(SandwichMatrices {
        sensitivity,
        variability,
        godambe,
        theta: theta.to_vec(),
        rule: rule.clone(),
        n_obs: n,
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct FitConfig {
    pub selection: SelectionConfig,
    /// Number of extra (re-evaluate, re-solve, one-step) rounds.
    pub refine_rounds: usize,
    /// Starting point of the preliminary Newton iteration.
    pub init: Vec<f64>,
    pub initial_rule: InitialRule,
    pub solver: SolverOptions,
    /// Optional cap on the path's active set.
    pub max_active: Option<usize>,
}

impl FitConfig {
    pub fn new(init: Vec<f64>) -> Self {
        FitConfig {
            selection: SelectionConfig::default(),
            refine_rounds: 2,
            init,
            initial_rule: InitialRule::Uniform,
            solver: SolverOptions::default(),
            max_active: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct FitResult {
    pub preliminary_theta: Vec<f64>,
    /// `λ̂` from the selection rule.
    pub selected_lambda: f64,
    /// Composition rule used by the final one-step update. Its `lambda` is
    /// the end of the path segment opened at `λ̂`.
    pub rule: CompositionRule,
    pub theta: Vec<f64>,
    pub sandwich: SandwichMatrices,
    pub std_errors: Vec<f64>,
    /// Refinement rounds performed.
    pub iterations: usize,
    pub kkt: KktReport,
    pub phi: f64,
    pub path: PathResult,
    pub warnings: Vec<String>,
}

/// Preliminary estimate, T-Step path, selection, one-step update, then
/// `refine_rounds` rounds of re-solving the T-Step at the selected rule's
/// `λ` around the current estimate.
pub fn fit(model: &ModelSpec, data: &DataMatrix, config: &FitConfig) -> Result<FitResult> {
    config.selection.validate()?;
    model.check_theta(&config.init)?;
    model.check_data(data)?;
    let alpha = model.penalty_weights();

    let preliminary = preliminary_estimate(model, data, &config.init, &config.initial_rule).map_err(|e| e.at("preliminary"))?;
    let batch = score::eval_scores(model, &preliminary, data).map_err(|e| e.at("scores"))?;
    let mut gram = score::empirical_gram(&batch).map_err(|e| e.at("gram"))?;
    let stop = PathStop {
        lambda_min: config.selection.lambda_budget,
        max_active: config.max_active,
        max_events: None,
    };
    let path = tstep::solve_path(&gram, alpha, stop).map_err(|e| e.at("path"))?;
    let selected = selection::select(&path, &gram, &config.selection).map_err(|e| e.at("selection"))?;
    let mut rule = selected.rule.clone();
    if rule.is_empty() {
        return Err(Error::Degenerate("selected composition rule is empty".into()).at("selection"));
    }
    let mut theta = one_step_update(model, data, &preliminary, &rule).map_err(|e| e.at("one-step"))?;
    let mut warnings = path.warnings.clone();

    for _ in 0..config.refine_rounds {
        let batch = score::eval_scores(model, &theta, data).map_err(|e| e.at("refinement"))?;
        gram = score::empirical_gram(&batch).map_err(|e| e.at("refinement"))?;
        let next = tstep::solve_fixed_lambda(&gram, rule.lambda(), alpha, &config.solver).map_err(|e| e.at("refinement"))?;
        if next.is_empty() {
            warnings.push(format!(
                "refinement at lambda = {:.6e} produced an empty rule; keeping the previous rule",
                rule.lambda()
            ));
            break;
        }
        rule = next;
        theta = one_step_update(model, data, &theta, &rule).map_err(|e| e.at("refinement"))?;
    }

    let kkt = tstep::kkt_check(&gram, &rule, rule.lambda(), alpha);
    let sandwich = sandwich(model, data, &theta, &rule).map_err(|e| e.at("sandwich"))?;
    let std_errors = sandwich.std_errors().map_err(|e| e.at("sandwich"))?;
    Ok(FitResult {
        preliminary_theta: preliminary,
        selected_lambda: selected.lambda,
        rule,
        theta,
        sandwich,
        std_errors,
        iterations: config.refine_rounds,
        kkt,
        phi: selected.phi,
        path,
        warnings,
    })
}
