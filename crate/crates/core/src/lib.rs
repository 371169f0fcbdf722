//! Sparse composite likelihood estimation.
//!
//! Composite likelihood estimating equations `Σ_j w_j u_j(θ) = 0` are
//! truncated by an ℓ1-penalized fit of the composite score to the full
//! likelihood score (the T-Step), the tuning constant is chosen by explained
//! score variability, and the parameter is updated by one Newton step on the
//! retained equations (the E-Step).
//!
//! The crate is `no_std` with `alloc`.

#![no_std]
// `!(x > 0.0)` is used on purpose so that NaN fails positivity checks.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

extern crate alloc;
#[cfg(test)]
extern crate std;

pub mod error;
pub mod estep;
pub mod linalg;
pub mod models;
pub mod mvn;
pub mod score;
pub mod selection;
pub mod tstep;

pub use error::{Error, Result};
pub use estep::{fit, one_step_update, preliminary_estimate, sandwich, FitConfig, FitResult, InitialRule, SandwichMatrices};
pub use models::{
    analytic_optimal_rule, asymptotic_relative_efficiency, build_covariance, exchangeable_tradeoff_ratio,
    pairwise_expdecay_score, population_gram, profile_location_mcle, AnalyticModel, CovarianceKind, CovarianceSpec,
    EfficiencyContext, ModelFamily, MonteCarlo, PopulationGram,
};
pub use mvn::{sample_mvn, MvnSampler};
pub use score::{
    cl_score_mean, empirical_gram, eval_scores, CompositionRule, DataMatrix, GramSummary, ModelSpec, PartialScores, ScoreBatch,
};
pub use selection::{phi, select, select_lambda, selection_trace, Selection, SelectionConfig, SelectionPoint};
pub use tstep::{
    brute_force_oracle, kkt_check, lambda_entry, objective, solve_fixed_lambda, solve_path, Breakpoint, KktReport, PathEvent,
    PathResult, PathStop, SolverOptions,
};
