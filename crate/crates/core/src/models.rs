//! Built-in Gaussian families with analytic population quantities.
//!
//! * `common_location`: `X ~ N(θ1, Σ)`, one marginal score per coordinate,
//!   `u_j = (x_j − θ)/σ_j²`.
//! * `exchangeable_location`: the same scores with `Σ = (1−ρ)I + ρ11ᵀ`.
//! * `pairwise_expdecay`: `X ~ N(0, Σ(θ))` with `Σ(θ)_jk = exp(−θ d_jk)`,
//!   one bivariate-normal score per pair `j < k`.

use alloc::format;
use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;

use nalgebra::{DMatrix, DVector};
use num_traits::Float;
use rand::SeedableRng;
use rand_chacha::ChaCha20Rng;

use crate::error::{Error, Result};
use crate::linalg::SpdFactor;
use crate::mvn::MvnSampler;
use crate::score::{CompositionRule, DataMatrix, GramSummary, PartialScores};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(rename_all = "snake_case"))]
pub enum CovarianceKind {
    Identity,
    /// `diag(1, 2, …, d)`
    DiagIncreasing,
    /// Ten independent unit-variance coordinates followed by an AR block
    /// with correlations `0.8^|j−k|`.
    First10UncorrelatedAr,
    /// Independent blocks of six with within-block correlation 0.6.
    Block6,
    /// `Σ_jj = j`, `Σ_jk = ρ√(jk)`.
    MetaSqrtCorr,
    /// Unit variances, common correlation `ρ`.
    Exchangeable,
    /// `exp(−θ√(2|j−k|))`
    ExpdecaySqrt,
    /// `exp(−θ·2(j−k)²)`
    ExpdecaySq,
}

impl CovarianceKind {
    pub const ALL: [CovarianceKind; 8] = [
        CovarianceKind::Identity,
        CovarianceKind::DiagIncreasing,
        CovarianceKind::First10UncorrelatedAr,
        CovarianceKind::Block6,
        CovarianceKind::MetaSqrtCorr,
        CovarianceKind::Exchangeable,
        CovarianceKind::ExpdecaySqrt,
        CovarianceKind::ExpdecaySq,
    ];

    pub fn name(self) -> &'static str {
        match self {
            CovarianceKind::Identity => "identity",
            CovarianceKind::DiagIncreasing => "diag_increasing",
            CovarianceKind::First10UncorrelatedAr => "first10_uncorrelated_ar",
            CovarianceKind::Block6 => "block6",
            CovarianceKind::MetaSqrtCorr => "meta_sqrt_corr",
            CovarianceKind::Exchangeable => "exchangeable",
            CovarianceKind::ExpdecaySqrt => "expdecay_sqrt",
            CovarianceKind::ExpdecaySq => "expdecay_sq",
        }
    }

    pub fn from_name(name: &str) -> Option<Self> {
        Self::ALL.into_iter().find(|k| k.name() == name)
    }

    pub fn is_expdecay(self) -> bool {
        matches!(self, CovarianceKind::ExpdecaySqrt | CovarianceKind::ExpdecaySq)
    }

    pub fn uses_rho(self) -> bool {
        matches!(self, CovarianceKind::MetaSqrtCorr | CovarianceKind::Exchangeable)
    }

    /// Exponent distance `d_jk` for the exp-decay kinds (zero-based indices).
    pub fn distance(self, j: usize, k: usize) -> f64 {
        let gap = j.abs_diff(k) as f64;
        match self {
            CovarianceKind::ExpdecaySqrt => (2.0 * gap).sqrt(),
            CovarianceKind::ExpdecaySq => 2.0 * gap * gap,
            _ => 0.0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct CovarianceSpec {
    pub kind: CovarianceKind,
    pub dim: usize,
    /// Correlation for `meta_sqrt_corr` and `exchangeable`.
    #[cfg_attr(feature = "serde", serde(default))]
    pub rho: f64,
    /// Decay rate for the exp-decay kinds.
    #[cfg_attr(feature = "serde", serde(default))]
    pub theta: f64,
}

impl CovarianceSpec {
    pub fn new(kind: CovarianceKind, dim: usize) -> Self {
        CovarianceSpec {
            kind,
            dim,
            rho: 0.0,
            theta: 0.0,
        }
    }

    pub fn with_rho(mut self, rho: f64) -> Self {
        self.rho = rho;
        self
    }

    pub fn with_theta(mut self, theta: f64) -> Self {
        self.theta = theta;
        self
    }
}

/// Dense covariance for `spec`, verified positive definite by factorization.
pub fn build_covariance(spec: &CovarianceSpec) -> Result<DMatrix<f64>> {
    let d = spec.dim;
    if d == 0 {
        return Err(Error::Model("covariance dimension must be positive".into()));
    }
    if spec.kind.uses_rho() && !spec.rho.is_finite() {
        return Err(Error::Model("rho must be finite".into()));
    }
    if spec.kind.is_expdecay() && !(spec.theta > 0.0 && spec.theta.is_finite()) {
        return Err(Error::Model(format!(
            "{} needs a positive decay rate theta, got {}",
            spec.kind.name(),
            spec.theta
        )));
    }
    let sigma = DMatrix::from_fn(d, d, |j, k| match spec.kind {
        CovarianceKind::Identity => (j == k) as u8 as f64,
        CovarianceKind::DiagIncreasing => {
            if j == k {
                (j + 1) as f64
            } else {
                0.0
            }
        }
        CovarianceKind::First10UncorrelatedAr => {
            if j == k {
                1.0
            } else if j < 10 || k < 10 {
                0.0
            } else {
                0.8.powi(j.abs_diff(k) as i32)
            }
        }
        CovarianceKind::Block6 => {
            if j == k {
                1.0
            } else if j / 6 == k / 6 {
                0.6
            } else {
                0.0
            }
        }
        CovarianceKind::MetaSqrtCorr => {
            let (a, b) = ((j + 1) as f64, (k + 1) as f64);
            if j == k {
                a
            } else {
                spec.rho * (a * b).sqrt()
            }
        }
        CovarianceKind::Exchangeable => {
            if j == k {
                1.0
            } else {
                spec.rho
            }
        }
        CovarianceKind::ExpdecaySqrt | CovarianceKind::ExpdecaySq => (-spec.theta * spec.kind.distance(j, k)).exp(),
    });
    if SpdFactor::with_tolerance(&sigma, 1e-14).is_none() {
        return Err(Error::Model(format!(
            "{} covariance with dim = {}, rho = {}, theta = {} is not positive definite",
            spec.kind.name(),
            d,
            spec.rho,
            spec.theta
        )));
    }
    Ok(sigma)
}

/// `∂Σ(θ)/∂θ` for the exp-decay kinds.
pub fn covariance_derivative(spec: &CovarianceSpec) -> Result<DMatrix<f64>> {
    if !spec.kind.is_expdecay() {
        return Err(Error::Model(format!("{} does not depend on theta", spec.kind.name())));
    }
    Ok(DMatrix::from_fn(spec.dim, spec.dim, |j, k| {
        let d = spec.kind.distance(j, k);
        -d * (-spec.theta * d).exp()
    }))
}

/// Marginal location scores `u_j(θ) = (x_j − θ)/σ_j²`.
#[derive(Debug, Clone)]
pub struct LocationScores {
    sigma2: Vec<f64>,
}

impl LocationScores {
    pub fn new(sigma2: Vec<f64>) -> Result<Self> {
        if sigma2.is_empty() {
            return Err(Error::Model("location model needs at least one coordinate".into()));
        }
        if sigma2.iter().any(|s| !(*s > 0.0) || !s.is_finite()) {
            return Err(Error::Model("marginal variances must be finite and positive".into()));
        }
        Ok(LocationScores { sigma2 })
    }

    pub fn sigma2(&self) -> &[f64] {
        &self.sigma2
    }
}

impl PartialScores for LocationScores {
    fn param_dim(&self) -> usize {
        1
    }
    fn n_scores(&self) -> usize {
        self.sigma2.len()
    }
    fn data_dim(&self) -> usize {
        self.sigma2.len()
    }
    fn score(&self, j: usize, theta: &[f64], row: &[f64], out: &mut [f64]) {
        out[0] = (row[j] - theta[0]) / self.sigma2[j];
    }
    fn score_jacobian(&self, j: usize, _theta: &[f64], _row: &[f64], out: &mut [f64]) -> bool {
        out[0] = -1.0 / self.sigma2[j];
        true
    }
    fn label(&self, j: usize) -> String {
        format!("x{}", j + 1)
    }
}

/// `∂ log φ₂(x_j, x_k; s)/∂s` for a standard bivariate normal with
/// correlation `s`, and its derivative in `s`.
fn corr_score_parts(s: f64, xj: f64, xk: f64) -> (f64, f64) {
    let a = xj * xj + xk * xk;
    let c = xj * xk;
    let d = 1.0 - s * s;
    let q = a - 2.0 * s * c;
    let g = (s + c) / d - s * q / (d * d);
    let dg = (d + 2.0 * s * (s + c)) / (d * d) - ((a - 4.0 * s * c) * d + 4.0 * s * s * q) / (d * d * d);
    (g, dg)
}

/// Score in `θ` of the pair `(x_j, x_k)` under correlation `exp(−θ d_jk)`.
pub fn pairwise_expdecay_score(theta: f64, xj: f64, xk: f64, djk: f64) -> Result<f64> {
    if !(djk > 0.0) || !(theta * djk > 0.0) {
        return Err(Error::Domain(format!(
            "pair correlation exp(-theta*d) must lie in (0,1); got theta = {theta}, d = {djk}"
        )));
    }
    let s = (-theta * djk).exp();
    let (g, _) = corr_score_parts(s, xj, xk);
    Ok(-djk * s * g)
}

/// `∂u_jk/∂θ` for [`pairwise_expdecay_score`].
pub fn pairwise_expdecay_score_derivative(theta: f64, xj: f64, xk: f64, djk: f64) -> Result<f64> {
    if !(djk > 0.0) || !(theta * djk > 0.0) {
        return Err(Error::Domain(format!(
            "pair correlation exp(-theta*d) must lie in (0,1); got theta = {theta}, d = {djk}"
        )));
    }
    let s = (-theta * djk).exp();
    let (g, dg) = corr_score_parts(s, xj, xk);
    Ok(djk * djk * s * (g + s * dg))
}

/// Fisher information of one pair about `θ`: `d²s²(1+s²)/(1−s²)²`.
pub fn pair_information(theta: f64, djk: f64) -> f64 {
    let s = (-theta * djk).exp();
    let d = 1.0 - s * s;
    djk * djk * s * s * (1.0 + s * s) / (d * d)
}

/// Pairwise bivariate-normal scores for `N(0, Σ(θ))` with exp-decay
/// correlation, one per pair `j < k` in lexicographic order.
#[derive(Debug, Clone)]
pub struct PairwiseExpDecayScores {
    dim: usize,
    kind: CovarianceKind,
    pairs: Vec<(usize, usize, f64)>,
}

impl PairwiseExpDecayScores {
    pub fn new(kind: CovarianceKind, dim: usize) -> Result<Self> {
        if !kind.is_expdecay() {
            return Err(Error::Model(format!("{} is not an exp-decay covariance", kind.name())));
        }
        if dim < 2 {
            return Err(Error::Model("pairwise model needs dim >= 2".into()));
        }
        let mut pairs = Vec::with_capacity(dim * (dim - 1) / 2);
        for j in 0..dim {
            for k in (j + 1)..dim {
                pairs.push((j, k, kind.distance(j, k)));
            }
        }
        Ok(PairwiseExpDecayScores { dim, kind, pairs })
    }

    pub fn pairs(&self) -> &[(usize, usize, f64)] {
        &self.pairs
    }

    pub fn kind(&self) -> CovarianceKind {
        self.kind
    }
}

impl PartialScores for PairwiseExpDecayScores {
    fn param_dim(&self) -> usize {
        1
    }
    fn n_scores(&self) -> usize {
        self.pairs.len()
    }
    fn data_dim(&self) -> usize {
        self.dim
    }
    fn score(&self, j: usize, theta: &[f64], row: &[f64], out: &mut [f64]) {
        let (a, b, d) = self.pairs[j];
        out[0] = pairwise_expdecay_score(theta[0], row[a], row[b], d).unwrap_or(f64::NAN);
    }
    fn score_jacobian(&self, j: usize, theta: &[f64], row: &[f64], out: &mut [f64]) -> bool {
        let (a, b, d) = self.pairs[j];
        out[0] = pairwise_expdecay_score_derivative(theta[0], row[a], row[b], d).unwrap_or(f64::NAN);
        true
    }
    fn label(&self, j: usize) -> String {
        let (a, b, _) = self.pairs[j];
        format!("x{}:x{}", a + 1, b + 1)
    }
}

/// Moment starting value for the pairwise model: the average product over
/// the closest pairs gives `r̂`, and `θ₀ = −ln(r̂)/d_min`.
pub fn pairwise_moment_init(kind: CovarianceKind, data: &DataMatrix) -> Result<f64> {
    if !kind.is_expdecay() || data.ncols() < 2 {
        return Err(Error::Model(
            "moment initializer needs an exp-decay model with dim >= 2".into(),
        ));
    }
    let d = data.ncols();
    let dmin = kind.distance(0, 1);
    let mut sum = 0.0;
    for row in data.rows() {
        for j in 0..d - 1 {
            sum += row[j] * row[j + 1];
        }
    }
    let r = (sum / ((d - 1) * data.nrows()) as f64).clamp(1e-3, 0.999);
    Ok(-r.ln() / dmin)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(rename_all = "snake_case"))]
pub enum ModelFamily {
    CommonLocation,
    ExchangeableLocation,
    PairwiseExpdecay,
}

impl ModelFamily {
    pub fn name(self) -> &'static str {
        match self {
            ModelFamily::CommonLocation => "common_location",
            ModelFamily::ExchangeableLocation => "exchangeable_location",
            ModelFamily::PairwiseExpdecay => "pairwise_expdecay",
        }
    }

    pub fn from_name(name: &str) -> Option<Self> {
        [
            ModelFamily::CommonLocation,
            ModelFamily::ExchangeableLocation,
            ModelFamily::PairwiseExpdecay,
        ]
        .into_iter()
        .find(|f| f.name() == name)
    }
}

/// A built-in family with its true parameter and covariance design.
#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct AnalyticModel {
    pub family: ModelFamily,
    pub cov: CovarianceSpec,
    pub true_theta: Vec<f64>,
}

impl AnalyticModel {
    /// Checks family/covariance compatibility. For the pairwise family the
    /// covariance decay rate must equal the true parameter.
    pub fn new(family: ModelFamily, cov: CovarianceSpec, true_theta: Vec<f64>) -> Result<Self> {
        if true_theta.len() != 1 || !true_theta[0].is_finite() {
            return Err(Error::Model("built-in families have a single finite parameter".into()));
        }
        match family {
            ModelFamily::CommonLocation => {
                if cov.kind.is_expdecay() {
                    return Err(Error::Model(
                        "common_location uses a fixed covariance, not an exp-decay kind".into(),
                    ));
                }
            }
            ModelFamily::ExchangeableLocation => {
                if cov.kind != CovarianceKind::Exchangeable {
                    return Err(Error::Model(
                        "exchangeable_location needs the exchangeable covariance kind".into(),
                    ));
                }
            }
            ModelFamily::PairwiseExpdecay => {
                if !cov.kind.is_expdecay() {
                    return Err(Error::Model("pairwise_expdecay needs expdecay_sqrt or expdecay_sq".into()));
                }
                if cov.theta != true_theta[0] {
                    return Err(Error::Model(format!(
                        "covariance theta {} differs from the true parameter {}",
                        cov.theta, true_theta[0]
                    )));
                }
                if !(true_theta[0] > 0.0) {
                    return Err(Error::Model("pairwise_expdecay needs theta > 0".into()));
                }
            }
        }
        build_covariance(&cov)?;
        Ok(AnalyticModel { family, cov, true_theta })
    }

    pub fn covariance(&self) -> Result<DMatrix<f64>> {
        build_covariance(&self.cov)
    }

    /// Mean of the data-generating normal.
    pub fn mean(&self) -> Vec<f64> {
        match self.family {
            ModelFamily::PairwiseExpdecay => vec![0.0; self.cov.dim],
            _ => vec![self.true_theta[0]; self.cov.dim],
        }
    }

    pub fn n_scores(&self) -> usize {
        match self.family {
            ModelFamily::PairwiseExpdecay => self.cov.dim * (self.cov.dim - 1) / 2,
            _ => self.cov.dim,
        }
    }

    /// Partial scores of the family.
    pub fn scores(&self) -> Result<alloc::boxed::Box<dyn PartialScores>> {
        Ok(match self.family {
            ModelFamily::PairwiseExpdecay => alloc::boxed::Box::new(PairwiseExpDecayScores::new(self.cov.kind, self.cov.dim)?),
            _ => {
                let sigma = self.covariance()?;
                alloc::boxed::Box::new(LocationScores::new(sigma.diagonal().iter().copied().collect())?)
            }
        })
    }

    /// Full-likelihood information about `θ` at the true parameter:
    /// `1ᵀΣ⁻¹1` for location families, `½tr(Σ⁻¹Σ'Σ⁻¹Σ')` for exp-decay.
    pub fn full_information(&self) -> Result<f64> {
        let sigma = self.covariance()?;
        let inv = SpdFactor::new(&sigma)
            .ok_or_else(|| Error::Model("covariance is singular".into()))?
            .inverse();
        match self.family {
            ModelFamily::PairwiseExpdecay => {
                let ds = covariance_derivative(&self.cov)?;
                let a = &inv * ds;
                Ok(0.5 * (&a * &a).trace())
            }
            _ => Ok(inv.sum()),
        }
    }

    /// `m* = E‖u^ML(θ*)‖²`, available for the location families.
    pub fn fisher_trace(&self) -> Option<f64> {
        match self.family {
            ModelFamily::PairwiseExpdecay => None,
            _ => self.full_information().ok(),
        }
    }

    /// Per-score sensitivities `−E ∂u_j/∂θ` at the true parameter.
    pub fn sensitivities(&self) -> Result<Vec<f64>> {
        Ok(match self.family {
            ModelFamily::PairwiseExpdecay => PairwiseExpDecayScores::new(self.cov.kind, self.cov.dim)?
                .pairs()
                .iter()
                .map(|&(_, _, d)| pair_information(self.true_theta[0], d))
                .collect(),
            _ => self.covariance()?.diagonal().iter().map(|s| 1.0 / s).collect(),
        })
    }
}

/// Settings for the Monte Carlo population Gram.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MonteCarlo {
    pub draws: usize,
    pub seed: u64,
}

impl Default for MonteCarlo {
    fn default() -> Self {
        MonteCarlo {
            draws: 100_000,
            seed: 0x5c1e,
        }
    }
}

/// Population score Gram `E S(θ*)`, exact or Monte Carlo.
#[derive(Debug, Clone, PartialEq)]
pub struct PopulationGram {
    pub gram: GramSummary,
    /// Entry-wise Monte Carlo standard errors; `None` when exact.
    pub std_error: Option<DMatrix<f64>>,
}

/// Population Gram of a built-in family. Location families are exact,
/// `σ_jk/(σ_j²σ_k²)`; the pairwise family is estimated from `mc.draws`
/// seeded draws.
pub fn population_gram(model: &AnalyticModel, mc: MonteCarlo) -> Result<PopulationGram> {
    let sigma = model.covariance()?;
    match model.family {
        ModelFamily::CommonLocation | ModelFamily::ExchangeableLocation => {
            let g = DMatrix::from_fn(sigma.nrows(), sigma.ncols(), |j, k| {
                sigma[(j, k)] / (sigma[(j, j)] * sigma[(k, k)])
            });
            Ok(PopulationGram {
                gram: GramSummary::from_matrix(g, None, 1, model.true_theta.clone())?,
                std_error: None,
            })
        }
        ModelFamily::PairwiseExpdecay => {
            if mc.draws < 2 {
                return Err(Error::Model("Monte Carlo population Gram needs at least 2 draws".into()));
            }
            let scores = PairwiseExpDecayScores::new(model.cov.kind, model.cov.dim)?;
            let theta = model.true_theta[0];
            let m = scores.n_scores();
            let sampler = MvnSampler::new(&model.mean(), &sigma)?;
            let mut rng = ChaCha20Rng::seed_from_u64(mc.seed);
            let mut x = vec![0.0; model.cov.dim];
            let mut u = vec![0.0; m];
            let mut sum = DMatrix::<f64>::zeros(m, m);
            let mut sum_sq = DMatrix::<f64>::zeros(m, m);
            for _ in 0..mc.draws {
                sampler.draw(&mut rng, &mut x);
                for (slot, &(a, b, d)) in u.iter_mut().zip(scores.pairs()) {
                    *slot = pairwise_expdecay_score(theta, x[a], x[b], d)?;
                }
                for j in 0..m {
                    for k in j..m {
                        let v = u[j] * u[k];
                        sum[(j, k)] += v;
                        sum_sq[(j, k)] += v * v;
                    }
                }
            }
            let n = mc.draws as f64;
            let mut se = DMatrix::zeros(m, m);
            for j in 0..m {
                for k in j..m {
                    let mean = sum[(j, k)] / n;
                    let var = (sum_sq[(j, k)] / n - mean * mean).max(0.0) * n / (n - 1.0);
                    sum[(j, k)] = mean;
                    sum[(k, j)] = mean;
                    se[(j, k)] = (var / n).sqrt();
                    se[(k, j)] = se[(j, k)];
                }
            }
            Ok(PopulationGram {
                gram: GramSummary::from_matrix(sum, None, 1, model.true_theta.clone())?,
                std_error: Some(se),
            })
        }
    }
}

/// Closed-form population-optimal rule `w*_λ`.
///
/// Independent common location: `w_j = (1 − σ_j²λ)₊`.
/// Exchangeable: `w_j = (1 − λ)/(ρ(m−1) + 1)` for `λ < 1`, else 0.
pub fn analytic_optimal_rule(model: &AnalyticModel, lambda: f64) -> Result<CompositionRule> {
    if !(lambda >= 0.0) || !lambda.is_finite() {
        return Err(Error::Config(format!("lambda must be finite and non-negative, got {lambda}")));
    }
    let sigma = model.covariance()?;
    let m = sigma.nrows();
    match model.family {
        ModelFamily::CommonLocation => {
            let diagonal = (0..m).all(|j| (0..m).all(|k| j == k || sigma[(j, k)] == 0.0));
            if !diagonal {
                return Err(Error::Model(
                    "no closed-form rule for correlated common_location; use the T-Step solver on the population Gram".into(),
                ));
            }
            let w = (0..m).map(|j| (1.0 - sigma[(j, j)] * lambda).max(0.0)).collect();
            Ok(CompositionRule::from_dense(w, lambda))
        }
        ModelFamily::ExchangeableLocation => {
            let v = if lambda < 1.0 {
                (1.0 - lambda) / (model.cov.rho * (m - 1) as f64 + 1.0)
            } else {
                0.0
            };
            Ok(CompositionRule::from_dense(vec![v; m], lambda))
        }
        ModelFamily::PairwiseExpdecay => Err(Error::Model(
            "no closed-form rule for pairwise_expdecay; use the T-Step solver on the population Gram".into(),
        )),
    }
}

/// Profile composite likelihood estimate of a common location with known
/// marginal variances: `Σ_j w_j σ_j⁻² X̄_j / Σ_j w_j σ_j⁻²`.
pub fn profile_location_mcle(rule: &CompositionRule, data: &DataMatrix, sigma2: &[f64]) -> Result<f64> {
    if rule.len() != sigma2.len() || data.ncols() != sigma2.len() {
        return Err(Error::Config("rule, data and variances must share the dimension m".into()));
    }
    let means = data.column_means();
    let mut num = 0.0;
    let mut den = 0.0;
    for (j, w) in rule.iter_active() {
        num += w * means[j] / sigma2[j];
        den += w / sigma2[j];
    }
    if den == 0.0 {
        return Err(Error::Degenerate("composition rule gives zero total weight".into()));
    }
    Ok(num / den)
}

/// `t(m) = ρ²m/(ρ²(m−1) + 1)`: the share of the full-score projection
/// explained by `m` exchangeable scores.
pub fn exchangeable_tradeoff_ratio(m: usize, rho: f64) -> f64 {
    let r2 = rho * rho;
    r2 * m as f64 / (r2 * (m as f64 - 1.0) + 1.0)
}

/// Precomputed population quantities for ARE evaluation of many rules.
#[derive(Debug, Clone, PartialEq)]
pub struct EfficiencyContext {
    sensitivity: Vec<f64>,
    score_cov: DMatrix<f64>,
    full_information: f64,
}

impl EfficiencyContext {
    pub fn new(model: &AnalyticModel, gram: &PopulationGram) -> Result<Self> {
        let sensitivity = model.sensitivities()?;
        if gram.gram.n_scores() != sensitivity.len() {
            return Err(Error::Config("population Gram does not match the model".into()));
        }
        Ok(EfficiencyContext {
            sensitivity,
            score_cov: gram.gram.gram().clone(),
            full_information: model.full_information()?,
        })
    }

    pub fn full_information(&self) -> f64 {
        self.full_information
    }

    /// `(Σ_j w_j k_j)² / (wᵀ G w · I_full)`; zero for an empty rule.
    pub fn are(&self, rule: &CompositionRule) -> Result<f64> {
        if rule.len() != self.sensitivity.len() {
            return Err(Error::Config("rule length does not match the model".into()));
        }
        let k: f64 = rule.iter_active().map(|(j, w)| w * self.sensitivity[j]).sum();
        let mut j_var = 0.0;
        for (a, wa) in rule.iter_active() {
            for (b, wb) in rule.iter_active() {
                j_var += wa * wb * self.score_cov[(a, b)];
            }
        }
        if rule.is_empty() {
            return Ok(0.0);
        }
        if !(j_var > 0.0) {
            return Err(Error::Model(format!(
                "combined score has non-positive variance {j_var:.3e} with sensitivity {k:.3e}"
            )));
        }
        Ok(k * k / (j_var * self.full_information))
    }
}

/// Asymptotic relative efficiency of the composite estimator with `rule`
/// against the maximum likelihood estimator.
pub fn asymptotic_relative_efficiency(model: &AnalyticModel, rule: &CompositionRule) -> Result<f64> {
    let gram = population_gram(model, MonteCarlo::default())?;
    EfficiencyContext::new(model, &gram)?.are(rule)
}

/// Inverse of a covariance by Cholesky; used by GLS-type estimators.
pub fn covariance_inverse(sigma: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    Ok(SpdFactor::new(sigma)
        .ok_or_else(|| Error::Model("covariance is singular".into()))?
        .inverse())
}

/// Mean full-likelihood score in `θ` of `N(0, Σ(θ))` given the sample
/// second-moment matrix `s2 = (1/n)Σ x xᵀ`, with its derivative.
pub fn expdecay_full_score(kind: CovarianceKind, theta: f64, s2: &DMatrix<f64>) -> Result<(f64, f64)> {
    let spec = CovarianceSpec::new(kind, s2.nrows()).with_theta(theta);
    let sigma = build_covariance(&spec)?;
    let inv = covariance_inverse(&sigma)?;
    let d1 = covariance_derivative(&spec)?;
    let d2 = DMatrix::from_fn(spec.dim, spec.dim, |j, k| {
        let d = kind.distance(j, k);
        d * d * (-theta * d).exp()
    });
    // ℓ'(θ) = −½tr(A) + ½tr(A Σ⁻¹ S), A = Σ⁻¹Σ'
    let a = &inv * &d1;
    let b = &inv * s2;
    let score = -0.5 * a.trace() + 0.5 * (&a * &b).trace();
    // ℓ''(θ) = ½tr(A²) − ½tr(Σ⁻¹Σ'') − tr(A²Σ⁻¹S) + ½tr(Σ⁻¹Σ''Σ⁻¹S)
    let a2 = &a * &a;
    let c = &inv * &d2;
    let hess = 0.5 * a2.trace() - 0.5 * c.trace() - (&a2 * &b).trace() + 0.5 * (&c * &b).trace();
    Ok((score, hess))
}

pub(crate) fn gls_weights(sigma: &DMatrix<f64>) -> Result<DVector<f64>> {
    let inv = covariance_inverse(sigma)?;
    let ones = DVector::from_element(sigma.nrows(), 1.0);
    let w = &inv * ones;
    let total = w.sum();
    if !(total > 0.0) {
        return Err(Error::Model("GLS normalization is not positive".into()));
    }
    Ok(w / total)
}

/// Generalized least squares mean `1ᵀΣ⁻¹X̄ / 1ᵀΣ⁻¹1`.
pub fn gls_mean(sigma: &DMatrix<f64>, data: &DataMatrix) -> Result<f64> {
    let w = gls_weights(sigma)?;
    Ok(data.column_means().iter().zip(w.iter()).map(|(m, w)| m * w).sum())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn loc(kind: CovarianceKind, d: usize) -> AnalyticModel {
        AnalyticModel::new(ModelFamily::CommonLocation, CovarianceSpec::new(kind, d), vec![0.0]).unwrap()
    }

    fn exch(m: usize, rho: f64) -> AnalyticModel {
        AnalyticModel::new(
            ModelFamily::ExchangeableLocation,
            CovarianceSpec::new(CovarianceKind::Exchangeable, m).with_rho(rho),
            vec![0.0],
        )
        .unwrap()
    }

    #[test]
    fn covariance_kinds() {
        assert_eq!(
            build_covariance(&CovarianceSpec::new(CovarianceKind::Identity, 3)).unwrap(),
            DMatrix::identity(3, 3)
        );
        let d = build_covariance(&CovarianceSpec::new(CovarianceKind::DiagIncreasing, 3)).unwrap();
        assert_eq!(d, DMatrix::from_diagonal(&DVector::from_vec(vec![1.0, 2.0, 3.0])));
        let b = build_covariance(&CovarianceSpec::new(CovarianceKind::Block6, 12)).unwrap();
        for j in 0..12 {
            for k in 0..12 {
                let expect = if j == k {
                    1.0
                } else if j / 6 == k / 6 {
                    0.6
                } else {
                    0.0
                };
                assert_eq!(b[(j, k)], expect);
            }
        }
        let ar = build_covariance(&CovarianceSpec::new(CovarianceKind::First10UncorrelatedAr, 14)).unwrap();
        assert_eq!(ar[(3, 12)], 0.0);
        assert!((ar[(10, 13)] - 0.512).abs() < 1e-15);
        let meta = build_covariance(&CovarianceSpec::new(CovarianceKind::MetaSqrtCorr, 4).with_rho(0.5)).unwrap();
        assert!((meta[(1, 3)] - 0.5 * 8f64.sqrt()).abs() < 1e-15);
        assert_eq!(meta[(2, 2)], 3.0);
        let e = build_covariance(&CovarianceSpec::new(CovarianceKind::ExpdecaySq, 3).with_theta(0.2)).unwrap();
        assert!((e[(0, 2)] - (-0.2f64 * 8.0).exp()).abs() < 1e-15);
        let e = build_covariance(&CovarianceSpec::new(CovarianceKind::ExpdecaySqrt, 3).with_theta(0.5)).unwrap();
        assert!((e[(0, 2)] - (-0.5f64 * 2.0).exp()).abs() < 1e-15);
    }

    #[test]
    fn exchangeable_positive_definite_boundary() {
        let ok = CovarianceSpec::new(CovarianceKind::Exchangeable, 3).with_rho(0.999);
        assert!(build_covariance(&ok).is_ok());
        let bad = ok.with_rho(1.0);
        assert!(matches!(build_covariance(&bad), Err(Error::Model(_))));
    }

    #[test]
    fn location_population_gram() {
        let g = population_gram(&loc(CovarianceKind::DiagIncreasing, 3), MonteCarlo::default()).unwrap();
        let expect = DMatrix::from_diagonal(&DVector::from_vec(vec![1.0, 0.5, 1.0 / 3.0]));
        assert_eq!(g.gram.gram(), &expect);
        let g = population_gram(&exch(3, 0.5), MonteCarlo::default()).unwrap();
        assert_eq!(g.gram.gram(), &DMatrix::from_fn(3, 3, |r, c| if r == c { 1.0 } else { 0.5 }));
        let meta = AnalyticModel::new(
            ModelFamily::CommonLocation,
            CovarianceSpec::new(CovarianceKind::MetaSqrtCorr, 5).with_rho(0.3),
            vec![1.0],
        )
        .unwrap();
        let sigma = meta.covariance().unwrap();
        let g = population_gram(&meta, MonteCarlo::default()).unwrap();
        for j in 0..5 {
            for k in 0..5 {
                assert_eq!(g.gram.gram()[(j, k)], sigma[(j, k)] / (sigma[(j, j)] * sigma[(k, k)]));
            }
        }
    }

    #[test]
    fn closed_form_rules() {
        let w = analytic_optimal_rule(&loc(CovarianceKind::DiagIncreasing, 3), 0.4).unwrap();
        assert!((w.weights()[0] - 0.6).abs() < 1e-15);
        assert!((w.weights()[1] - 0.2).abs() < 1e-15);
        assert_eq!(w.weights()[2], 0.0);
        assert!(analytic_optimal_rule(&loc(CovarianceKind::DiagIncreasing, 3), 1.5)
            .unwrap()
            .is_empty());
        let w = analytic_optimal_rule(&exch(3, 0.5), 0.2).unwrap();
        assert!(w.weights().iter().all(|v| (v - 0.4).abs() < 1e-15));
        assert!(analytic_optimal_rule(&loc(CovarianceKind::Block6, 6), 0.1).is_err());
    }

    #[test]
    fn profile_mcle_values() {
        let data = DataMatrix::from_rows(2, 2, vec![0.2, 0.4, 0.4, 0.6]).unwrap();
        let v = profile_location_mcle(&CompositionRule::uniform(2), &data, &[1.0, 2.0]).unwrap();
        assert!((v - 0.55 / 1.5).abs() < 1e-15);
        let v = profile_location_mcle(&CompositionRule::unit(2, 0), &data, &[1.0, 2.0]).unwrap();
        assert!((v - 0.3).abs() < 1e-15);
        assert!(matches!(
            profile_location_mcle(&CompositionRule::zeros(2, 1.0), &data, &[1.0, 2.0]),
            Err(Error::Degenerate(_))
        ));
    }

    #[test]
    fn tradeoff_ratio_values() {
        assert!((exchangeable_tradeoff_ratio(1, 0.3) - 0.09).abs() < 1e-15);
        assert!((exchangeable_tradeoff_ratio(5, 0.75) - 0.865_384_615_384_615_4).abs() < 1e-12);
        assert!((exchangeable_tradeoff_ratio(9, 0.75) - 0.920_454_545_454_545_4).abs() < 1e-12);
        assert!((exchangeable_tradeoff_ratio(50, 0.75) - 0.984_682_713_347_921_2).abs() < 1e-12);
        for m in 1..100 {
            assert!((exchangeable_tradeoff_ratio(m, 1.0) - 1.0).abs() < 1e-15);
            assert!(exchangeable_tradeoff_ratio(m + 1, 0.4) > exchangeable_tradeoff_ratio(m, 0.4));
        }
    }

    #[test]
    fn are_identities() {
        let m = loc(CovarianceKind::DiagIncreasing, 6);
        let are = asymptotic_relative_efficiency(&m, &CompositionRule::uniform(6)).unwrap();
        assert!((are - 1.0).abs() < 1e-12);
        let e = exch(5, 0.4);
        for lam in [0.1, 0.5, 0.9] {
            let w = analytic_optimal_rule(&e, lam).unwrap();
            assert!((asymptotic_relative_efficiency(&e, &w).unwrap() - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn are_matches_dense_oracle() {
        let model = AnalyticModel::new(
            ModelFamily::CommonLocation,
            CovarianceSpec::new(CovarianceKind::MetaSqrtCorr, 20).with_rho(0.5),
            vec![0.0],
        )
        .unwrap();
        let sigma = model.covariance().unwrap();
        // u = D⁻¹(x − θ1) with D = diag(σ_jj): K = 1ᵀD⁻¹1, J = 1ᵀD⁻¹ΣD⁻¹1
        let dinv = DMatrix::from_diagonal(&sigma.diagonal().map(|v| 1.0 / v));
        let ones = DVector::from_element(20, 1.0);
        let k = (ones.transpose() * &dinv * &ones)[(0, 0)];
        let j = (ones.transpose() * &dinv * &sigma * &dinv * &ones)[(0, 0)];
        let full = (ones.transpose() * sigma.clone().try_inverse().unwrap() * &ones)[(0, 0)];
        let oracle = k * k / (j * full);
        let are = asymptotic_relative_efficiency(&model, &CompositionRule::uniform(20)).unwrap();
        assert!((are - oracle).abs() < 1e-10);
        assert!(are > 0.0 && are < 1.0);
    }

    fn log_pair_density(theta: f64, xj: f64, xk: f64, d: f64) -> f64 {
        let s = (-theta * d).exp();
        let det = 1.0 - s * s;
        -0.5 * det.ln() - (xj * xj + xk * xk - 2.0 * s * xj * xk) / (2.0 * det)
    }

    #[test]
    fn pairwise_score_matches_finite_differences() {
        for &theta in &[0.2, 0.4, 0.6] {
            for xj in -2..=2 {
                for xk in -2..=2 {
                    let (xj, xk) = (xj as f64, xk as f64);
                    for d in [1.0, 2f64.sqrt(), 2.0] {
                        let h = 1e-5;
                        let fd = (log_pair_density(theta + h, xj, xk, d) - log_pair_density(theta - h, xj, xk, d)) / (2.0 * h);
                        let u = pairwise_expdecay_score(theta, xj, xk, d).unwrap();
                        assert!(
                            (u - fd).abs() <= 1e-6 * fd.abs().max(1.0),
                            "theta {theta} x ({xj},{xk}) d {d}: {u} vs {fd}"
                        );
                        let fd2 = (pairwise_expdecay_score(theta + h, xj, xk, d).unwrap()
                            - pairwise_expdecay_score(theta - h, xj, xk, d).unwrap())
                            / (2.0 * h);
                        let du = pairwise_expdecay_score_derivative(theta, xj, xk, d).unwrap();
                        assert!((du - fd2).abs() <= 1e-5 * fd2.abs().max(1.0));
                    }
                }
            }
        }
    }

    #[test]
    fn pairwise_score_domain_and_limit() {
        assert!(matches!(pairwise_expdecay_score(0.0, 1.0, 1.0, 1.0), Err(Error::Domain(_))));
        assert!(matches!(pairwise_expdecay_score(-0.1, 1.0, 1.0, 1.0), Err(Error::Domain(_))));
        assert!(pairwise_expdecay_score(60.0, 1.3, -0.7, 1.0).unwrap().abs() < 1e-20);
    }

    #[test]
    fn full_score_derivative_matches_finite_differences() {
        let s2 = build_covariance(&CovarianceSpec::new(CovarianceKind::ExpdecaySqrt, 4).with_theta(0.7)).unwrap() * 1.1;
        let (_, h) = expdecay_full_score(CovarianceKind::ExpdecaySqrt, 0.5, &s2).unwrap();
        let eps = 1e-6;
        let up = expdecay_full_score(CovarianceKind::ExpdecaySqrt, 0.5 + eps, &s2).unwrap().0;
        let dn = expdecay_full_score(CovarianceKind::ExpdecaySqrt, 0.5 - eps, &s2).unwrap().0;
        assert!((h - (up - dn) / (2.0 * eps)).abs() < 1e-5 * h.abs().max(1.0));
        // information identity: at S = Σ(θ) the score is zero and −ℓ'' = I_full
        let at = build_covariance(&CovarianceSpec::new(CovarianceKind::ExpdecaySqrt, 4).with_theta(0.5)).unwrap();
        let (s, h) = expdecay_full_score(CovarianceKind::ExpdecaySqrt, 0.5, &at).unwrap();
        assert!(s.abs() < 1e-12);
        let model = AnalyticModel::new(
            ModelFamily::PairwiseExpdecay,
            CovarianceSpec::new(CovarianceKind::ExpdecaySqrt, 4).with_theta(0.5),
            vec![0.5],
        )
        .unwrap();
        assert!((-h - model.full_information().unwrap()).abs() < 1e-10);
    }

    #[test]
    fn pairwise_population_gram_diagonal_is_pair_information() {
        let model = AnalyticModel::new(
            ModelFamily::PairwiseExpdecay,
            CovarianceSpec::new(CovarianceKind::ExpdecaySqrt, 3).with_theta(0.5),
            vec![0.5],
        )
        .unwrap();
        let pg = population_gram(&model, MonteCarlo { draws: 100_000, seed: 7 }).unwrap();
        let se = pg.std_error.unwrap();
        let k = model.sensitivities().unwrap();
        for j in 0..3 {
            let z = (pg.gram.gram()[(j, j)] - k[j]) / se[(j, j)];
            assert!(z.abs() < 4.0, "pair {j}: z = {z}");
        }
    }
}
