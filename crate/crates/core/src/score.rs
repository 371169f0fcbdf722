//! Domain types shared by the solvers: data, partial-score models, per-observation
//! score batches, the empirical score Gram and composition rules.

use alloc::boxed::Box;
use alloc::format;
use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::linalg;

/// A collection of `m` unbiased partial scores `u_j(θ; x)` with `θ ∈ R^p`.
///
/// Each score is evaluated on one data row at a time. Scores are addressed
/// individually so that work on a composition rule scales with its active set.
pub trait PartialScores: Send + Sync {
    /// Parameter dimension `p`.
    fn param_dim(&self) -> usize;
    /// Number of partial scores `m`.
    fn n_scores(&self) -> usize;
    /// Number of columns expected in each data row.
    fn data_dim(&self) -> usize;

    /// Write `u_j(θ; row)` (length `p`) into `out`.
    fn score(&self, j: usize, theta: &[f64], row: &[f64], out: &mut [f64]);

    /// Write the `p×p` Jacobian `∇u_j(θ; row)` in row-major order into `out`,
    /// entry `(a, b)` being `∂u_{j,a}/∂θ_b`. Returns `false` when no analytic
    /// derivative is available, in which case callers fall back to central
    /// finite differences.
    fn score_jacobian(&self, _j: usize, _theta: &[f64], _row: &[f64], _out: &mut [f64]) -> bool {
        false
    }

    fn label(&self, j: usize) -> String {
        format!("u{}", j + 1)
    }
}

/// A partial-score model together with sub-likelihood labels and the
/// per-score penalty weights `α_j` of the T-Step.
pub struct ModelSpec {
    scores: Box<dyn PartialScores>,
    labels: Vec<String>,
    penalty_weights: Vec<f64>,
}

impl core::fmt::Debug for ModelSpec {
    fn fmt(&self, f: &mut core::fmt::Formatter<'_>) -> core::fmt::Result {
        f.debug_struct("ModelSpec")
            .field("p", &self.param_dim())
            .field("m", &self.n_scores())
            .field("d", &self.data_dim())
            .finish()
    }
}

impl ModelSpec {
    pub fn new(scores: Box<dyn PartialScores>) -> Result<Self> {
        let m = scores.n_scores();
        if scores.param_dim() == 0 || m == 0 {
            return Err(Error::Config("a model needs p >= 1 and m >= 1".into()));
        }
        let labels = (0..m).map(|j| scores.label(j)).collect();
        Ok(ModelSpec {
            scores,
            labels,
            penalty_weights: vec![1.0; m],
        })
    }

    pub fn with_penalty_weights(mut self, alpha: Vec<f64>) -> Result<Self> {
        if alpha.len() != self.n_scores() {
            return Err(Error::Config(format!(
                "penalty weights have length {}, expected {}",
                alpha.len(),
                self.n_scores()
            )));
        }
        if alpha.iter().any(|a| !(*a > 0.0) || !a.is_finite()) {
            return Err(Error::Config("penalty weights must be finite and positive".into()));
        }
        self.penalty_weights = alpha;
        Ok(self)
    }

    pub fn with_labels(mut self, labels: Vec<String>) -> Result<Self> {
        if labels.len() != self.n_scores() {
            return Err(Error::Config("one label per sub-likelihood is required".into()));
        }
        self.labels = labels;
        Ok(self)
    }

    pub fn param_dim(&self) -> usize {
        self.scores.param_dim()
    }
    pub fn n_scores(&self) -> usize {
        self.scores.n_scores()
    }
    pub fn data_dim(&self) -> usize {
        self.scores.data_dim()
    }
    pub fn labels(&self) -> &[String] {
        &self.labels
    }
    pub fn penalty_weights(&self) -> &[f64] {
        &self.penalty_weights
    }
    pub fn scores(&self) -> &dyn PartialScores {
        self.scores.as_ref()
    }

    pub(crate) fn check_theta(&self, theta: &[f64]) -> Result<()> {
        if theta.len() != self.param_dim() {
            return Err(Error::Config(format!(
                "theta has length {}, model expects p = {}",
                theta.len(),
                self.param_dim()
            )));
        }
        if theta.iter().any(|t| !t.is_finite()) {
            return Err(Error::Config("theta must be finite".into()));
        }
        Ok(())
    }

    pub(crate) fn check_data(&self, data: &DataMatrix) -> Result<()> {
        if data.ncols() != self.data_dim() {
            return Err(Error::Config(format!(
                "data has {} columns, model expects {}",
                data.ncols(),
                self.data_dim()
            )));
        }
        Ok(())
    }

    /// `∇u_j(θ; row)` into `out` (row-major `p×p`), by the model's analytic
    /// derivative when present, else central differences with step
    /// `max(1e-6, 1e-6·|θ_k|)`.
    pub fn jacobian(&self, j: usize, theta: &[f64], row: &[f64], out: &mut [f64]) {
        if self.scores.score_jacobian(j, theta, row, out) {
            return;
        }
        let p = self.param_dim();
        let mut th = theta.to_vec();
        let mut up = vec![0.0; p];
        let mut dn = vec![0.0; p];
        for k in 0..p {
            let h = (1e-6 * theta[k].abs()).max(1e-6);
            th[k] = theta[k] + h;
            self.scores.score(j, &th, row, &mut up);
            th[k] = theta[k] - h;
            self.scores.score(j, &th, row, &mut dn);
            th[k] = theta[k];
            for a in 0..p {
                out[a * p + k] = (up[a] - dn[a]) / (2.0 * h);
            }
        }
    }
}

/// `n×d` matrix of i.i.d. observations, stored row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct DataMatrix {
    n: usize,
    d: usize,
    values: Vec<f64>,
}

impl DataMatrix {
    pub fn from_rows(n: usize, d: usize, values: Vec<f64>) -> Result<Self> {
        if n == 0 || d == 0 {
            return Err(Error::Input("data must have at least one row and one column".into()));
        }
        if values.len() != n * d {
            return Err(Error::Input(format!(
                "expected {} values for a {}x{} matrix, got {}",
                n * d,
                n,
                d,
                values.len()
            )));
        }
        if let Some(pos) = values.iter().position(|v| !v.is_finite()) {
            return Err(Error::Input(format!(
                "non-finite entry at row {}, column {}",
                pos / d,
                pos % d
            )));
        }
        Ok(DataMatrix { n, d, values })
    }

    pub fn from_matrix(m: &DMatrix<f64>) -> Result<Self> {
        let (n, d) = m.shape();
        let mut values = Vec::with_capacity(n * d);
        for i in 0..n {
            values.extend(m.row(i).iter());
        }
        Self::from_rows(n, d, values)
    }

    pub fn nrows(&self) -> usize {
        self.n
    }
    pub fn ncols(&self) -> usize {
        self.d
    }
    pub fn row(&self, i: usize) -> &[f64] {
        &self.values[i * self.d..(i + 1) * self.d]
    }
    pub fn rows(&self) -> impl Iterator<Item = &[f64]> {
        self.values.chunks_exact(self.d)
    }
    pub fn values(&self) -> &[f64] {
        &self.values
    }

    /// Column means `X̄_j`.
    pub fn column_means(&self) -> Vec<f64> {
        let mut mean = vec![0.0; self.d];
        for row in self.rows() {
            for (m, x) in mean.iter_mut().zip(row) {
                *m += x;
            }
        }
        let n = self.n as f64;
        mean.iter_mut().for_each(|m| *m /= n);
        mean
    }
}

/// Per-observation partial scores at one parameter point; entry `(i, j, ·)`
/// is `u_j(X^(i), θ)`. Holds `n·m·p` numbers.
#[derive(Debug, Clone, PartialEq)]
pub struct ScoreBatch {
    n: usize,
    m: usize,
    p: usize,
    scores: Vec<f64>,
    theta: Vec<f64>,
}

impl ScoreBatch {
    pub fn from_raw(n: usize, m: usize, p: usize, scores: Vec<f64>, theta: Vec<f64>) -> Result<Self> {
        if scores.len() != n * m * p || theta.len() != p {
            return Err(Error::Config("score batch dimensions are inconsistent".into()));
        }
        if let Some(pos) = scores.iter().position(|v| !v.is_finite()) {
            return Err(Error::Evaluation {
                observation: pos / (m * p),
                score: (pos / p) % m,
            });
        }
        Ok(ScoreBatch { n, m, p, scores, theta })
    }

    pub fn n_obs(&self) -> usize {
        self.n
    }
    pub fn n_scores(&self) -> usize {
        self.m
    }
    pub fn param_dim(&self) -> usize {
        self.p
    }
    pub fn theta(&self) -> &[f64] {
        &self.theta
    }
    /// `u_j(X^(i), θ)` as a `p`-slice.
    pub fn get(&self, i: usize, j: usize) -> &[f64] {
        let at = (i * self.m + j) * self.p;
        &self.scores[at..at + self.p]
    }
    pub fn raw(&self) -> &[f64] {
        &self.scores
    }
}

/// Empirical score Gram `Ĝ_jk = E_Fn[u_jᵀ u_k]` and its diagonal `b`.
#[derive(Debug, Clone, PartialEq)]
pub struct GramSummary {
    gram: DMatrix<f64>,
    diag_b: Vec<f64>,
    n_obs: Option<usize>,
    param_dim: usize,
    theta: Vec<f64>,
}

impl GramSummary {
    /// Wrap a supplied Gram (population or user-provided). The matrix is
    /// symmetrized and checked for numerical positive semi-definiteness.
    pub fn from_matrix(mut gram: DMatrix<f64>, n_obs: Option<usize>, param_dim: usize, theta: Vec<f64>) -> Result<Self> {
        if gram.nrows() == 0 || gram.nrows() != gram.ncols() {
            return Err(Error::Input("Gram matrix must be square and non-empty".into()));
        }
        if gram.iter().any(|v| !v.is_finite()) {
            return Err(Error::Input("Gram matrix has non-finite entries".into()));
        }
        let asym = (&gram - gram.transpose()).amax();
        if asym > 1e-8 * gram.amax().max(1.0) {
            return Err(Error::Input(format!(
                "Gram matrix is not symmetric (max asymmetry {asym:.3e})"
            )));
        }
        linalg::symmetrize(&mut gram);
        let min_ev = linalg::sym_eigenvalues(&gram)[0];
        if min_ev < -1e-10 * gram.amax().max(1.0) {
            return Err(Error::Input(format!(
                "Gram matrix is not positive semi-definite (smallest eigenvalue {min_ev:.3e})"
            )));
        }
        Ok(Self::trusted(gram, n_obs, param_dim, theta))
    }

    pub(crate) fn trusted(gram: DMatrix<f64>, n_obs: Option<usize>, param_dim: usize, theta: Vec<f64>) -> Self {
        let diag_b = gram.diagonal().iter().copied().collect();
        GramSummary {
            gram,
            diag_b,
            n_obs,
            param_dim,
            theta,
        }
    }

    pub fn gram(&self) -> &DMatrix<f64> {
        &self.gram
    }
    pub fn diag_b(&self) -> &[f64] {
        &self.diag_b
    }
    pub fn n_scores(&self) -> usize {
        self.diag_b.len()
    }
    /// Number of observations behind an empirical Gram; `None` for
    /// population or externally supplied matrices.
    pub fn n_obs(&self) -> Option<usize> {
        self.n_obs
    }
    pub fn param_dim(&self) -> usize {
        self.param_dim
    }
    pub fn theta(&self) -> &[f64] {
        &self.theta
    }
    pub fn trace(&self) -> f64 {
        self.diag_b.iter().sum()
    }

    /// Largest possible support size for a T-Step solution, `min(n·p, m)`.
    pub fn max_support(&self) -> usize {
        match self.n_obs {
            Some(n) => n.saturating_mul(self.param_dim).min(self.n_scores()),
            None => self.n_scores(),
        }
    }
}

/// A composition rule `w`: dense weights plus its nonzero support and signs,
/// tagged with the tuning constant that produced it.
#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct CompositionRule {
    weights: Vec<f64>,
    active: Vec<usize>,
    signs: Vec<i8>,
    lambda: f64,
}

impl CompositionRule {
    pub fn from_dense(weights: Vec<f64>, lambda: f64) -> Self {
        let active: Vec<usize> = weights
            .iter()
            .enumerate()
            .filter(|(_, w)| **w != 0.0)
            .map(|(j, _)| j)
            .collect();
        let signs = active.iter().map(|&j| if weights[j] > 0.0 { 1 } else { -1 }).collect();
        CompositionRule {
            weights,
            active,
            signs,
            lambda,
        }
    }

    pub fn zeros(m: usize, lambda: f64) -> Self {
        Self::from_dense(vec![0.0; m], lambda)
    }

    pub fn uniform(m: usize) -> Self {
        Self::from_dense(vec![1.0; m], 0.0)
    }

    /// Unit weight on score `j`.
    pub fn unit(m: usize, j: usize) -> Self {
        let mut w = vec![0.0; m];
        w[j] = 1.0;
        Self::from_dense(w, 0.0)
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }
    pub fn active(&self) -> &[usize] {
        &self.active
    }
    pub fn signs(&self) -> &[i8] {
        &self.signs
    }
    pub fn lambda(&self) -> f64 {
        self.lambda
    }
    pub fn len(&self) -> usize {
        self.weights.len()
    }
    pub fn is_empty(&self) -> bool {
        self.active.is_empty()
    }
    pub fn n_active(&self) -> usize {
        self.active.len()
    }
    /// `(j, w_j)` over the nonzero support.
    pub fn iter_active(&self) -> impl Iterator<Item = (usize, f64)> + '_ {
        self.active.iter().map(|&j| (j, self.weights[j]))
    }
    pub fn l1_norm(&self) -> f64 {
        self.iter_active().map(|(_, w)| w.abs()).sum()
    }
    pub fn weighted_l1(&self, alpha: &[f64]) -> f64 {
        self.iter_active().map(|(j, w)| alpha[j] * w.abs()).sum()
    }

    pub fn scaled(&self, c: f64) -> Self {
        Self::from_dense(self.weights.iter().map(|w| c * w).collect(), self.lambda)
    }
}

/// Evaluate all partial scores at `theta` for every observation.
pub fn eval_scores(model: &ModelSpec, theta: &[f64], data: &DataMatrix) -> Result<ScoreBatch> {
    model.check_theta(theta)?;
    model.check_data(data)?;
    let (n, m, p) = (data.nrows(), model.n_scores(), model.param_dim());
    let mut scores = vec![0.0; n * m * p];
    for (i, row) in data.rows().enumerate() {
        for j in 0..m {
            let at = (i * m + j) * p;
            let out = &mut scores[at..at + p];
            model.scores().score(j, theta, row, out);
            if out.iter().any(|v| !v.is_finite()) {
                return Err(Error::Evaluation {
                    observation: i,
                    score: j,
                });
            }
        }
    }
    Ok(ScoreBatch {
        n,
        m,
        p,
        scores,
        theta: theta.to_vec(),
    })
}

/// `Ĝ = (1/n) Σ_i U_iᵀ U_i`, symmetrized.
pub fn empirical_gram(batch: &ScoreBatch) -> Result<GramSummary> {
    let (n, m, p) = (batch.n, batch.m, batch.p);
    if n == 0 {
        return Err(Error::Input("score batch is empty".into()));
    }
    // Accumulate the upper triangle one observation at a time; the data
    // matrix for observation i is the m×p block of scores.
    let mut g = DMatrix::<f64>::zeros(m, m);
    for i in 0..n {
        let block = &batch.scores[i * m * p..(i + 1) * m * p];
        for j in 0..m {
            let uj = &block[j * p..(j + 1) * p];
            for k in j..m {
                let uk = &block[k * p..(k + 1) * p];
                let dot: f64 = uj.iter().zip(uk).map(|(a, b)| a * b).sum();
                g[(j, k)] += dot;
            }
        }
    }
    let inv_n = 1.0 / n as f64;
    for j in 0..m {
        for k in j..m {
            let v = g[(j, k)] * inv_n;
            g[(j, k)] = v;
            g[(k, j)] = v;
        }
    }
    Ok(GramSummary::trusted(g, Some(n), p, batch.theta.clone()))
}

fn check_rule(batch_m: usize, rule: &CompositionRule) -> Result<()> {
    if rule.len() != batch_m {
        return Err(Error::Config(format!(
            "composition rule has {} weights, expected m = {}",
            rule.len(),
            batch_m
        )));
    }
    Ok(())
}

/// `E_Fn u(θ, w) = Σ_j w_j (1/n) Σ_i u_j(X^(i))`, touching only active scores.
pub fn cl_score_mean(batch: &ScoreBatch, rule: &CompositionRule) -> Result<DVector<f64>> {
    check_rule(batch.m, rule)?;
    let mut total = DVector::zeros(batch.p);
    for (j, w) in rule.iter_active() {
        let mut mean = DVector::zeros(batch.p);
        for i in 0..batch.n {
            for (a, v) in batch.get(i, j).iter().enumerate() {
                mean[a] += v;
            }
        }
        total += mean * (w / batch.n as f64);
    }
    Ok(total)
}

/// Per-observation combined scores `u(X^(i), θ, w)` for the active scores of
/// `rule`, returned as an `n×p` matrix.
pub fn combined_scores(model: &ModelSpec, theta: &[f64], data: &DataMatrix, rule: &CompositionRule) -> Result<DMatrix<f64>> {
    model.check_theta(theta)?;
    model.check_data(data)?;
    check_rule(model.n_scores(), rule)?;
    let p = model.param_dim();
    let mut out = DMatrix::zeros(data.nrows(), p);
    let mut buf = vec![0.0; p];
    for (i, row) in data.rows().enumerate() {
        for (j, w) in rule.iter_active() {
            model.scores().score(j, theta, row, &mut buf);
            if buf.iter().any(|v| !v.is_finite()) {
                return Err(Error::Evaluation {
                    observation: i,
                    score: j,
                });
            }
            for a in 0..p {
                out[(i, a)] += w * buf[a];
            }
        }
    }
    Ok(out)
}

/// `E_Fn ∇u(θ, w)` as a `p×p` matrix over the active scores of `rule`.
pub fn mean_jacobian(model: &ModelSpec, theta: &[f64], data: &DataMatrix, rule: &CompositionRule) -> Result<DMatrix<f64>> {
    model.check_theta(theta)?;
    model.check_data(data)?;
    check_rule(model.n_scores(), rule)?;
    let p = model.param_dim();
    let mut acc = vec![0.0; p * p];
    let mut buf = vec![0.0; p * p];
    for (i, row) in data.rows().enumerate() {
        for (j, w) in rule.iter_active() {
            model.jacobian(j, theta, row, &mut buf);
            if buf.iter().any(|v| !v.is_finite()) {
                return Err(Error::Evaluation {
                    observation: i,
                    score: j,
                });
            }
            for (a, b) in acc.iter_mut().zip(&buf) {
                *a += w * b;
            }
        }
    }
    let inv_n = 1.0 / data.nrows() as f64;
    Ok(DMatrix::from_row_slice(p, p, &acc) * inv_n)
}

/// `E_Fn u(θ, w)` evaluated directly from the model (no stored batch).
pub fn mean_score(model: &ModelSpec, theta: &[f64], data: &DataMatrix, rule: &CompositionRule) -> Result<DVector<f64>> {
    let per_obs = combined_scores(model, theta, data, rule)?;
    let n = data.nrows() as f64;
    Ok(DVector::from_iterator(
        per_obs.ncols(),
        per_obs.column_iter().map(|c| c.sum() / n),
    ))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::models::LocationScores;

    fn location(sigma2: &[f64]) -> ModelSpec {
        ModelSpec::new(Box::new(LocationScores::new(sigma2.to_vec()).unwrap())).unwrap()
    }

    #[test]
    fn location_scores_by_substitution() {
        let model = location(&[1.0, 2.0]);
        let data = DataMatrix::from_rows(1, 2, vec![1.0, 2.0]).unwrap();
        let batch = eval_scores(&model, &[0.0], &data).unwrap();
        assert_eq!(batch.get(0, 0), &[1.0]);
        assert_eq!(batch.get(0, 1), &[1.0]);
    }

    #[test]
    fn scores_vanish_at_the_observation() {
        let model = location(&[1.0, 2.0]);
        let data = DataMatrix::from_rows(1, 2, vec![0.7, 0.7]).unwrap();
        let batch = eval_scores(&model, &[0.7], &data).unwrap();
        assert!(batch.raw().iter().all(|v| *v == 0.0));
    }

    #[test]
    fn dimension_mismatch_is_a_config_error() {
        let model = location(&[1.0, 2.0]);
        let data = DataMatrix::from_rows(1, 3, vec![0.0; 3]).unwrap();
        assert!(matches!(eval_scores(&model, &[0.0], &data), Err(Error::Config(_))));
        let data = DataMatrix::from_rows(1, 2, vec![0.0; 2]).unwrap();
        assert!(matches!(eval_scores(&model, &[0.0, 1.0], &data), Err(Error::Config(_))));
    }

    struct Blowup;
    impl PartialScores for Blowup {
        fn param_dim(&self) -> usize {
            1
        }
        fn n_scores(&self) -> usize {
            2
        }
        fn data_dim(&self) -> usize {
            1
        }
        fn score(&self, j: usize, _theta: &[f64], row: &[f64], out: &mut [f64]) {
            out[0] = if j == 1 && row[0] > 1.0 { f64::NAN } else { row[0] };
        }
    }

    #[test]
    fn non_finite_score_names_observation_and_score() {
        let model = ModelSpec::new(Box::new(Blowup)).unwrap();
        let data = DataMatrix::from_rows(3, 1, vec![0.0, 0.5, 2.0]).unwrap();
        assert_eq!(
            eval_scores(&model, &[0.0], &data),
            Err(Error::Evaluation {
                observation: 2,
                score: 1
            })
        );
    }

    #[test]
    fn single_observation_gram_is_outer_product() {
        let batch = ScoreBatch::from_raw(1, 2, 1, vec![3.0, -2.0], vec![0.0]).unwrap();
        let g = empirical_gram(&batch).unwrap();
        assert_eq!(g.gram().as_slice(), &[9.0, -6.0, -6.0, 4.0]);
        assert_eq!(g.diag_b(), &[9.0, 4.0]);
    }

    #[test]
    fn zero_scores_give_zero_gram() {
        let batch = ScoreBatch::from_raw(4, 3, 2, vec![0.0; 24], vec![0.0, 0.0]).unwrap();
        let g = empirical_gram(&batch).unwrap();
        assert!(g.gram().iter().all(|v| *v == 0.0));
        assert!(g.diag_b().iter().all(|v| *v == 0.0));
    }

    #[test]
    fn empty_batch_is_rejected() {
        let batch = ScoreBatch::from_raw(0, 2, 1, vec![], vec![0.0]).unwrap();
        assert!(matches!(empirical_gram(&batch), Err(Error::Input(_))));
    }

    #[test]
    fn cl_score_mean_cases() {
        // X̄ = (0.3, 0.5) from two rows
        let model = location(&[1.0, 2.0]);
        let data = DataMatrix::from_rows(2, 2, vec![0.1, 0.4, 0.5, 0.6]).unwrap();
        let batch = eval_scores(&model, &[0.0], &data).unwrap();
        let zero = cl_score_mean(&batch, &CompositionRule::zeros(2, 0.0)).unwrap();
        assert_eq!(zero[0], 0.0);
        let first = cl_score_mean(&batch, &CompositionRule::unit(2, 0)).unwrap();
        assert!((first[0] - 0.3).abs() < 1e-15);
        let both = cl_score_mean(&batch, &CompositionRule::uniform(2)).unwrap();
        // direct summation: Σ_i Σ_j (x_ij - 0)/σ_j² / n
        let direct = ((0.1 + 0.5) / 1.0 + (0.4 + 0.6) / 2.0) / 2.0;
        assert!((both[0] - direct).abs() < 1e-15);
        assert!((both[0] - 0.55).abs() < 1e-15);
        assert!(cl_score_mean(&batch, &CompositionRule::uniform(3)).is_err());
    }

    #[test]
    fn rule_support_and_signs() {
        let r = CompositionRule::from_dense(vec![0.0, -1.5, 2.0, 0.0], 0.1);
        assert_eq!(r.active(), &[1, 2]);
        assert_eq!(r.signs(), &[-1, 1]);
        assert_eq!(r.l1_norm(), 3.5);
    }

    #[test]
    fn finite_difference_jacobian_for_location() {
        struct NoDeriv(LocationScores);
        impl PartialScores for NoDeriv {
            fn param_dim(&self) -> usize {
                1
            }
            fn n_scores(&self) -> usize {
                self.0.n_scores()
            }
            fn data_dim(&self) -> usize {
                self.0.data_dim()
            }
            fn score(&self, j: usize, t: &[f64], r: &[f64], o: &mut [f64]) {
                self.0.score(j, t, r, o)
            }
        }
        let model = ModelSpec::new(Box::new(NoDeriv(LocationScores::new(vec![1.0, 4.0]).unwrap()))).unwrap();
        let mut out = [0.0];
        model.jacobian(1, &[2.5], &[1.0, 3.0], &mut out);
        assert!((out[0] + 0.25).abs() < 1e-9);
    }

    #[test]
    fn gram_from_matrix_rejects_indefinite() {
        let g = DMatrix::from_row_slice(2, 2, &[1.0, 2.0, 2.0, 1.0]);
        assert!(GramSummary::from_matrix(g, None, 1, vec![]).is_err());
    }
}
