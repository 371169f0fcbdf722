//! The truncation step: minimize
//!
//! ```text
//! ½ wᵀĜw − bᵀw + λ Σ_j α_j |w_j|,     b = diag(Ĝ)
//! ```
//!
//! over composition rules `w`. Two solvers are provided: a homotopy that
//! follows the piecewise-linear solution path from `λ_max` downwards, and a
//! cyclic coordinate-descent solver with soft-thresholding for a single `λ`.
//! Both are certified by the KKT conditions on the pseudo-covariance
//! `c(w) = b − Ĝw`:
//!
//! * active `j`:   `c_j = λ α_j sign(w_j)`
//! * inactive `j`: `|c_j| ≤ λ α_j`
//!
//! On a segment with active set `E` and signs `s` the solution is
//! `w_E(λ) = Ĝ_E⁻¹ (b_E − λ α_E ∘ s)`, which is what the path and the
//! brute-force oracle evaluate.

use alloc::format;
use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;

use nalgebra::DVector;

use crate::error::{Error, Result};
use crate::linalg::{self, SpdFactor};
use crate::score::{CompositionRule, GramSummary};

/// Relative tolerance under which two breakpoint candidates are one event.
const TIE_RTOL: f64 = 1e-12;

/// Violations of the KKT conditions for a candidate rule.
#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct KktReport {
    /// `max_{j active} | |c_j| − λα_j |`
    pub max_active_violation: f64,
    /// `max_{j inactive} (|c_j| − λα_j)₊`
    pub max_inactive_violation: f64,
    /// `sign(c_j) = sign(w_j)` on the active set.
    pub sign_consistent: bool,
}

impl KktReport {
    pub fn max_violation(&self) -> f64 {
        self.max_active_violation.max(self.max_inactive_violation)
    }

    pub fn holds(&self, tol: f64) -> bool {
        self.sign_consistent && self.max_violation() <= tol
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SolverOptions {
    pub kkt_tol: f64,
    /// Coordinate descent stops once the largest coordinate change in a sweep
    /// falls below this.
    pub coord_tol: f64,
    pub max_sweeps: usize,
}

impl Default for SolverOptions {
    fn default() -> Self {
        SolverOptions {
            kkt_tol: 1e-8,
            coord_tol: 1e-10,
            max_sweeps: 10_000,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(rename_all = "snake_case"))]
pub enum PathEvent {
    Enter(usize),
    Leave(usize),
    Terminate,
}

/// One knot of the solution path.
#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct Breakpoint {
    pub lambda: f64,
    /// The T-Step solution at `lambda`. Scores entering here still carry
    /// zero weight; scores leaving here have just reached zero.
    pub rule: CompositionRule,
    pub events: Vec<PathEvent>,
    /// Active set on the segment immediately below `lambda`.
    pub working_set: Vec<usize>,
}

impl Breakpoint {
    pub fn is_terminal(&self) -> bool {
        self.events.contains(&PathEvent::Terminate)
    }
}

#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct PathResult {
    pub breakpoints: Vec<Breakpoint>,
    /// Smallest `λ` at which `w = 0` is optimal.
    pub lambda_max: f64,
    pub warnings: Vec<String>,
}

impl PathResult {
    /// Solution at an arbitrary `λ` on the computed range, by linear
    /// interpolation between the enclosing breakpoints.
    pub fn rule_at(&self, lambda: f64) -> Option<CompositionRule> {
        let bps = &self.breakpoints;
        let first = bps.first()?;
        if lambda >= first.lambda {
            return Some(CompositionRule::zeros(first.rule.len(), lambda));
        }
        for pair in bps.windows(2) {
            let (hi, lo) = (&pair[0], &pair[1]);
            if lambda <= hi.lambda && lambda >= lo.lambda {
                let span = hi.lambda - lo.lambda;
                let t = if span > 0.0 { (hi.lambda - lambda) / span } else { 1.0 };
                let w = hi
                    .rule
                    .weights()
                    .iter()
                    .zip(lo.rule.weights())
                    .map(|(a, b)| a + t * (b - a))
                    .collect();
                return Some(CompositionRule::from_dense(w, lambda));
            }
        }
        None
    }

    pub fn last(&self) -> &Breakpoint {
        self.breakpoints.last().expect("a path always has at least one breakpoint")
    }
}

/// Where the homotopy stops.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PathStop {
    /// Final `λ` (e.g. a computing budget `λ*`), inclusive.
    pub lambda_min: f64,
    /// Stop once a further breakpoint would carry more nonzero weights.
    pub max_active: Option<usize>,
    /// Stop after this many enter/leave events.
    pub max_events: Option<usize>,
}

impl Default for PathStop {
    fn default() -> Self {
        PathStop {
            lambda_min: 0.0,
            max_active: None,
            max_events: None,
        }
    }
}

fn check_alpha(gram: &GramSummary, alpha: &[f64]) -> Result<()> {
    if alpha.len() != gram.n_scores() {
        return Err(Error::Config(format!(
            "penalty weights have length {}, expected m = {}",
            alpha.len(),
            gram.n_scores()
        )));
    }
    if alpha.iter().any(|a| !(*a > 0.0) || !a.is_finite()) {
        return Err(Error::Config("penalty weights must be finite and positive".into()));
    }
    Ok(())
}

/// `λ_max = max_j b_j/α_j`; zero when every score is identically zero.
pub fn lambda_entry(gram: &GramSummary, alpha: &[f64]) -> Result<f64> {
    check_alpha(gram, alpha)?;
    Ok(gram.diag_b().iter().zip(alpha).map(|(b, a)| b / a).fold(0.0, f64::max))
}

/// T-Step objective `½wᵀĜw − bᵀw + λΣα_j|w_j|`.
pub fn objective(gram: &GramSummary, w: &[f64], lambda: f64, alpha: &[f64]) -> f64 {
    let g = gram.gram();
    let b = gram.diag_b();
    let mut quad = 0.0;
    let mut lin = 0.0;
    let mut pen = 0.0;
    for j in 0..w.len() {
        if w[j] == 0.0 {
            continue;
        }
        let mut gw = 0.0;
        for k in 0..w.len() {
            gw += g[(j, k)] * w[k];
        }
        quad += w[j] * gw;
        lin += b[j] * w[j];
        pen += alpha[j] * w[j].abs();
    }
    0.5 * quad - lin + lambda * pen
}

/// Pseudo-covariance `c = b − Ĝw`.
pub fn pseudo_covariance(gram: &GramSummary, w: &[f64]) -> Vec<f64> {
    let g = gram.gram();
    gram.diag_b()
        .iter()
        .enumerate()
        .map(|(j, bj)| {
            let gw: f64 = w
                .iter()
                .enumerate()
                .filter(|(_, wk)| **wk != 0.0)
                .map(|(k, wk)| g[(j, k)] * wk)
                .sum();
            bj - gw
        })
        .collect()
}

pub fn kkt_check(gram: &GramSummary, rule: &CompositionRule, lambda: f64, alpha: &[f64]) -> KktReport {
    let c = pseudo_covariance(gram, rule.weights());
    let scale = gram.diag_b().iter().fold(1.0_f64, |m, b| m.max(b.abs()));
    let mut active_v = 0.0_f64;
    let mut inactive_v = 0.0_f64;
    let mut sign_ok = true;
    for (j, (cj, wj)) in c.iter().zip(rule.weights()).enumerate() {
        let bound = lambda * alpha[j];
        if *wj != 0.0 {
            active_v = active_v.max((cj.abs() - bound).abs());
            if cj * wj.signum() < -1e-12 * scale {
                sign_ok = false;
            }
        } else {
            inactive_v = inactive_v.max(cj.abs() - bound);
        }
    }
    KktReport {
        max_active_violation: active_v,
        max_inactive_violation: inactive_v.max(0.0),
        sign_consistent: sign_ok,
    }
}

fn soft_threshold(z: f64, t: f64) -> f64 {
    if z > t {
        z - t
    } else if z < -t {
        z + t
    } else {
        0.0
    }
}

/// Stationary point of the objective on `support` with the given signs.
fn solve_on_support(gram: &GramSummary, support: &[usize], signs: &[f64], lambda: f64, alpha: &[f64]) -> Option<Vec<f64>> {
    let g_ee = linalg::principal(gram.gram(), support);
    let factor = SpdFactor::new(&g_ee)?;
    let rhs = DVector::from_iterator(
        support.len(),
        support
            .iter()
            .zip(signs)
            .map(|(&j, s)| gram.diag_b()[j] - lambda * alpha[j] * s),
    );
    let w_e = factor.solve(&rhs);
    let mut w = vec![0.0; gram.n_scores()];
    for (r, &j) in support.iter().enumerate() {
        w[j] = w_e[r];
    }
    Some(w)
}

fn solve_unpenalized(gram: &GramSummary, alpha: &[f64], opts: &SolverOptions) -> Result<CompositionRule> {
    let m = gram.n_scores();
    if m > gram.max_support() {
        return Err(Error::Singular(format!(
            "lambda = 0 needs a nonsingular score Gram, which fails when n·p = {} < m = {}",
            gram.max_support(),
            m
        )));
    }
    let cond = linalg::sym_condition(gram.gram());
    if !(cond < 1e12) {
        return Err(Error::Singular(format!(
            "lambda = 0 needs a nonsingular score Gram (condition estimate {cond:.3e})"
        )));
    }
    let all: Vec<usize> = (0..m).collect();
    let w = solve_on_support(gram, &all, &vec![0.0; m], 0.0, alpha)
        .ok_or_else(|| Error::Singular("score Gram could not be factorized at lambda = 0".into()))?;
    let rule = CompositionRule::from_dense(w, 0.0);
    let report = kkt_check(gram, &rule, 0.0, alpha);
    if report.max_violation() > opts.kkt_tol {
        return Err(Error::Convergence { sweeps: 0, report });
    }
    Ok(rule)
}

/// Minimizer of the T-Step objective at a single `λ` by cyclic coordinate
/// descent, followed by an exact solve on the identified support.
pub fn solve_fixed_lambda(gram: &GramSummary, lambda: f64, alpha: &[f64], opts: &SolverOptions) -> Result<CompositionRule> {
    check_alpha(gram, alpha)?;
    if !(lambda >= 0.0) || !lambda.is_finite() {
        return Err(Error::Config(format!("lambda must be finite and non-negative, got {lambda}")));
    }
    let m = gram.n_scores();
    if lambda == 0.0 {
        return solve_unpenalized(gram, alpha, opts);
    }
    if lambda >= lambda_entry(gram, alpha)? {
        return Ok(CompositionRule::zeros(m, lambda));
    }

    let g = gram.gram();
    let b = gram.diag_b();
    let mut w = vec![0.0; m];
    let mut c = b.to_vec();
    let mut sweeps = 0;
    while sweeps < opts.max_sweeps {
        sweeps += 1;
        let mut max_change = 0.0_f64;
        for j in 0..m {
            let gjj = g[(j, j)];
            if gjj <= 0.0 {
                continue;
            }
            let z = c[j] + gjj * w[j];
            let next = soft_threshold(z, lambda * alpha[j]) / gjj;
            let delta = next - w[j];
            if delta != 0.0 {
                for k in 0..m {
                    c[k] -= delta * g[(k, j)];
                }
                w[j] = next;
                max_change = max_change.max(delta.abs());
            }
        }
        if !w.iter().all(|v| v.is_finite()) {
            break;
        }
        if max_change < opts.coord_tol {
            break;
        }
    }

    let cd_rule = CompositionRule::from_dense(w, lambda);
    let support = cd_rule.active().to_vec();
    if support.len() > gram.max_support() {
        // Minimizers are not unique; the homotopy keeps a sparse one.
        return sparse_from_path(gram, lambda, alpha, opts).ok_or_else(|| {
            Error::Singular(format!(
                "T-Step objective has no unique minimizer at lambda = {lambda:.6e} (support {} exceeds n·p = {})",
                support.len(),
                gram.max_support()
            ))
        });
    }
    if !support.is_empty() {
        let signs: Vec<f64> = cd_rule.signs().iter().map(|s| *s as f64).collect();
        if let Some(polished) = solve_on_support(gram, &support, &signs, lambda, alpha) {
            let consistent = support.iter().zip(&signs).all(|(&j, s)| polished[j] * s > 0.0);
            if consistent {
                let rule = CompositionRule::from_dense(polished, lambda);
                let report = kkt_check(gram, &rule, lambda, alpha);
                if report.holds(opts.kkt_tol) {
                    return Ok(rule);
                }
            }
        }
    }
    let report = kkt_check(gram, &cd_rule, lambda, alpha);
    if report.holds(opts.kkt_tol) {
        Ok(cd_rule)
    } else {
        Err(Error::Convergence { sweeps, report })
    }
}

/// Path solution at `lambda` if the path reaches it with a certified rule
/// inside the sparsity bound.
fn sparse_from_path(gram: &GramSummary, lambda: f64, alpha: &[f64], opts: &SolverOptions) -> Option<CompositionRule> {
    let stop = PathStop {
        lambda_min: lambda,
        ..PathStop::default()
    };
    let path = solve_path(gram, alpha, stop).ok()?;
    if path.last().is_terminal() && path.last().lambda > lambda {
        return None;
    }
    let rule = path.rule_at(lambda)?;
    let ok = rule.n_active() <= gram.max_support() && kkt_check(gram, &rule, lambda, alpha).holds(opts.kkt_tol);
    ok.then_some(rule)
}

enum Candidate {
    Enter(usize, f64),
    Leave(usize),
}

/// Homotopy (LARS-lasso) path of T-Step solutions from `λ_max` down to the
/// stop condition.
///
/// If the active Gram `Ĝ_E` becomes numerically singular the objective has
/// no unique minimizer below the current breakpoint; the path then ends
/// there with a `Terminate` event and a warning.
pub fn solve_path(gram: &GramSummary, alpha: &[f64], stop: PathStop) -> Result<PathResult> {
    check_alpha(gram, alpha)?;
    let m = gram.n_scores();
    let g = gram.gram();
    let b = gram.diag_b();
    let floor = stop.lambda_min.max(0.0);
    let lambda_max = lambda_entry(gram, alpha)?;
    let mut warnings = Vec::new();

    if lambda_max <= floor {
        let lam = lambda_max.max(floor);
        return Ok(PathResult {
            breakpoints: vec![Breakpoint {
                lambda: lam,
                rule: CompositionRule::zeros(m, lam),
                events: vec![PathEvent::Terminate],
                working_set: Vec::new(),
            }],
            lambda_max,
            warnings,
        });
    }

    let mut lam = lambda_max;
    let mut w = vec![0.0; m];
    let mut active: Vec<usize> = Vec::new();
    let mut signs: Vec<f64> = Vec::new();
    let mut events = Vec::new();
    for j in 0..m {
        if b[j] / alpha[j] >= lambda_max * (1.0 - TIE_RTOL) {
            active.push(j);
            signs.push(1.0);
            events.push(PathEvent::Enter(j));
        }
    }
    let mut n_events = events.len();
    let mut breakpoints = vec![Breakpoint {
        lambda: lam,
        rule: CompositionRule::zeros(m, lam),
        events,
        working_set: active.clone(),
    }];
    let mut just_entered: Vec<usize> = active.clone();
    let mut just_left: Vec<usize> = Vec::new();

    loop {
        let support_after = active.len();
        let over_active = stop.max_active.is_some_and(|k| support_after > k);
        let over_events = stop.max_events.is_some_and(|k| n_events >= k);
        if over_active || over_events {
            breakpoints.last_mut().unwrap().events.push(PathEvent::Terminate);
            break;
        }

        // Segment direction: w_E(t) = a − t·v.
        let (a, v) = if active.is_empty() {
            (DVector::zeros(0), DVector::zeros(0))
        } else {
            let g_ee = linalg::principal(g, &active);
            // More than n·p scores span at most an n·p-dimensional space.
            let factor = if active.len() > gram.max_support() {
                None
            } else {
                SpdFactor::new(&g_ee)
            };
            let Some(factor) = factor else {
                warnings.push(format!(
                    "active score Gram is singular with {} scores at lambda = {:.6e}; path ends here",
                    active.len(),
                    lam
                ));
                breakpoints.last_mut().unwrap().events.push(PathEvent::Terminate);
                break;
            };
            let b_e = linalg::gather(b, &active);
            let s_e = DVector::from_iterator(active.len(), active.iter().zip(&signs).map(|(&j, s)| alpha[j] * s));
            (factor.solve(&b_e), factor.solve(&s_e))
        };

        let below = lam * (1.0 - TIE_RTOL);
        // An index that changed state at `lam` has a spurious root at `lam`.
        let below_recent = lam * (1.0 - 1e-9);
        let mut best = floor;
        let mut found: Vec<(f64, Candidate)> = Vec::new();
        let mut in_active = vec![false; m];
        for &j in &active {
            in_active[j] = true;
        }
        for j in 0..m {
            if in_active[j] {
                continue;
            }
            let limit = if just_left.contains(&j) { below_recent } else { below };
            let mut pj = b[j];
            let mut qj = 0.0;
            for (r, &k) in active.iter().enumerate() {
                pj -= g[(j, k)] * a[r];
                qj += g[(j, k)] * v[r];
            }
            // c_j(t) = pj + t·qj crosses ±α_j t
            for sgn in [1.0, -1.0] {
                let denom = sgn * alpha[j] - qj;
                if denom.abs() <= f64::EPSILON * alpha[j] {
                    continue;
                }
                let t = pj / denom;
                if t.is_finite() && t < limit && t > floor {
                    found.push((t, Candidate::Enter(j, sgn)));
                    best = best.max(t);
                }
            }
        }
        for (r, &j) in active.iter().enumerate() {
            if v[r] == 0.0 {
                continue;
            }
            let limit = if just_entered.contains(&j) { below_recent } else { below };
            let t = a[r] / v[r];
            if t.is_finite() && t < limit && t > floor {
                found.push((t, Candidate::Leave(j)));
                best = best.max(t);
            }
        }

        if found.is_empty() || best <= floor {
            for (r, &j) in active.iter().enumerate() {
                w[j] = a[r] - floor * v[r];
            }
            breakpoints.push(Breakpoint {
                lambda: floor,
                rule: CompositionRule::from_dense(w.clone(), floor),
                events: vec![PathEvent::Terminate],
                working_set: active.clone(),
            });
            break;
        }

        let tie = best * (1.0 - TIE_RTOL) - f64::MIN_POSITIVE;
        for (r, &j) in active.iter().enumerate() {
            w[j] = a[r] - best * v[r];
        }
        let mut events = Vec::new();
        let mut entering = Vec::new();
        let mut leaving = Vec::new();
        for (t, cand) in found {
            if t < tie {
                continue;
            }
            match cand {
                Candidate::Enter(j, s) => {
                    if !entering.iter().any(|(k, _)| *k == j) {
                        entering.push((j, s));
                    }
                }
                Candidate::Leave(j) => leaving.push(j),
            }
        }
        for &j in &leaving {
            w[j] = 0.0;
            let pos = active.iter().position(|&k| k == j).unwrap();
            active.remove(pos);
            signs.remove(pos);
            events.push(PathEvent::Leave(j));
        }
        for &(j, s) in &entering {
            active.push(j);
            signs.push(s);
            events.push(PathEvent::Enter(j));
        }
        n_events += events.len();
        if n_events > 10 * m {
            return Err(Error::Path(format!(
                "homotopy exceeded {} events; the path appears to cycle",
                10 * m
            )));
        }
        just_entered = entering.iter().map(|(j, _)| *j).collect();
        just_left = leaving;
        lam = best;
        breakpoints.push(Breakpoint {
            lambda: lam,
            rule: CompositionRule::from_dense(w.clone(), lam),
            events,
            working_set: active.clone(),
        });
    }

    Ok(PathResult {
        breakpoints,
        lambda_max,
        warnings,
    })
}

/// Exhaustive minimizer over all `3^m` sign patterns. Test oracle only.
pub fn brute_force_oracle(gram: &GramSummary, lambda: f64, alpha: &[f64]) -> Result<CompositionRule> {
    check_alpha(gram, alpha)?;
    let m = gram.n_scores();
    if m > 12 {
        return Err(Error::Config(format!(
            "brute-force oracle is limited to m <= 12, got m = {m}"
        )));
    }
    let g = gram.gram();
    let b = gram.diag_b();
    let mut best_w = vec![0.0; m];
    let mut best_obj = 0.0;
    for mask in 1u32..(1u32 << m) {
        let support: Vec<usize> = (0..m).filter(|j| mask & (1 << j) != 0).collect();
        let k = support.len();
        let g_ee = linalg::principal(g, &support);
        let Some(inv) = linalg::lu_inverse(&g_ee) else {
            continue;
        };
        for pattern in 0u32..(1u32 << k) {
            let s: Vec<f64> = (0..k).map(|r| if pattern & (1 << r) != 0 { -1.0 } else { 1.0 }).collect();
            let rhs = DVector::from_iterator(k, (0..k).map(|r| b[support[r]] - lambda * alpha[support[r]] * s[r]));
            let w_e = &inv * rhs;
            if (0..k).any(|r| !(w_e[r] * s[r] > 0.0)) {
                continue;
            }
            let mut w = vec![0.0; m];
            for r in 0..k {
                w[support[r]] = w_e[r];
            }
            let obj = objective(gram, &w, lambda, alpha);
            if obj < best_obj {
                best_obj = obj;
                best_w = w;
            }
        }
    }
    Ok(CompositionRule::from_dense(best_w, lambda))
}

#[cfg(test)]
mod tests {
    use super::*;
    use nalgebra::DMatrix;

    fn diag3() -> GramSummary {
        let g = DMatrix::from_diagonal(&DVector::from_vec(vec![1.0, 0.5, 1.0 / 3.0]));
        GramSummary::from_matrix(g, None, 1, vec![]).unwrap()
    }

    fn exch(m: usize, rho: f64) -> GramSummary {
        let g = DMatrix::from_fn(m, m, |r, c| if r == c { 1.0 } else { rho });
        GramSummary::from_matrix(g, None, 1, vec![]).unwrap()
    }

    #[test]
    fn entry_lambda() {
        assert_eq!(lambda_entry(&diag3(), &[1.0; 3]).unwrap(), 1.0);
        assert_eq!(lambda_entry(&exch(3, 0.5), &[1.0; 3]).unwrap(), 1.0);
        let l = lambda_entry(&diag3(), &[2.0, 1.0, 1.0]).unwrap();
        assert_eq!(l, 0.5);
        let w = solve_fixed_lambda(&diag3(), 0.5 + 1e-9, &[2.0, 1.0, 1.0], &SolverOptions::default()).unwrap();
        assert!(w.is_empty());
    }

    #[test]
    fn fixed_lambda_on_diagonal_gram() {
        let w = solve_fixed_lambda(&diag3(), 0.4, &[1.0; 3], &SolverOptions::default()).unwrap();
        assert!((w.weights()[0] - 0.6).abs() < 1e-12);
        assert!((w.weights()[1] - 0.2).abs() < 1e-12);
        assert_eq!(w.weights()[2], 0.0);
    }

    #[test]
    fn identity_gram_at_zero_lambda() {
        let g = GramSummary::from_matrix(DMatrix::identity(5, 5), None, 1, vec![]).unwrap();
        let w = solve_fixed_lambda(&g, 0.0, &[1.0; 5], &SolverOptions::default()).unwrap();
        assert!(w.weights().iter().all(|v| (v - 1.0).abs() < 1e-14));
    }

    #[test]
    fn zero_lambda_with_too_few_observations_is_singular() {
        let g = GramSummary::trusted(DMatrix::identity(4, 4), Some(2), 1, vec![0.0]);
        assert!(matches!(
            solve_fixed_lambda(&g, 0.0, &[1.0; 4], &SolverOptions::default()),
            Err(Error::Singular(_))
        ));
    }

    #[test]
    fn diagonal_path_breakpoints() {
        let path = solve_path(&diag3(), &[1.0; 3], PathStop::default()).unwrap();
        let lams: Vec<f64> = path.breakpoints.iter().map(|b| b.lambda).collect();
        assert_eq!(lams.len(), 4);
        assert!((lams[0] - 1.0).abs() < 1e-15);
        assert!((lams[1] - 0.5).abs() < 1e-15);
        assert!((lams[2] - 1.0 / 3.0).abs() < 1e-15);
        assert_eq!(lams[3], 0.0);
        assert_eq!(path.breakpoints[1].events, vec![PathEvent::Enter(1)]);
        for bp in &path.breakpoints {
            for j in 0..3 {
                let expect = (1.0 - (j + 1) as f64 * bp.lambda).max(0.0);
                assert!((bp.rule.weights()[j] - expect).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn exchangeable_path_enters_together() {
        let path = solve_path(&exch(3, 0.5), &[1.0; 3], PathStop::default()).unwrap();
        assert_eq!(path.breakpoints.len(), 2);
        assert_eq!(path.breakpoints[0].working_set, vec![0, 1, 2]);
        let at = path.rule_at(0.4).unwrap();
        for v in at.weights() {
            assert!((v - 0.6 / 2.0).abs() < 1e-12);
        }
    }

    #[test]
    fn kkt_of_zero_rule() {
        let g = diag3();
        let zero = CompositionRule::zeros(3, 1.0);
        let r = kkt_check(&g, &zero, 1.0, &[1.0; 3]);
        assert_eq!(r.max_inactive_violation, 0.0);
        assert_eq!(r.max_active_violation, 0.0);
        let r = kkt_check(&g, &zero, 0.5, &[1.0; 3]);
        assert!((r.max_inactive_violation - 0.5).abs() < 1e-15);
    }

    #[test]
    fn oracle_matches_closed_form() {
        let w = brute_force_oracle(&diag3(), 0.4, &[1.0; 3]).unwrap();
        assert!((w.weights()[0] - 0.6).abs() < 1e-12);
        assert!((w.weights()[1] - 0.2).abs() < 1e-12);
        assert_eq!(w.weights()[2], 0.0);
        assert!(brute_force_oracle(&diag3(), 1.5, &[1.0; 3]).unwrap().is_empty());
        let big = GramSummary::from_matrix(DMatrix::identity(13, 13), None, 1, vec![]).unwrap();
        assert!(brute_force_oracle(&big, 0.1, &[1.0; 13]).is_err());
    }

    #[test]
    fn stop_conditions() {
        let g = GramSummary::from_matrix(
            DMatrix::from_diagonal(&DVector::from_vec(vec![4.0, 3.0, 2.0, 1.0])),
            None,
            1,
            vec![],
        )
        .unwrap();
        let path = solve_path(
            &g,
            &[1.0; 4],
            PathStop {
                lambda_min: 2.5,
                ..Default::default()
            },
        )
        .unwrap();
        assert_eq!(path.last().lambda, 2.5);
        assert!(path.last().is_terminal());
        let path = solve_path(
            &g,
            &[1.0; 4],
            PathStop {
                max_active: Some(2),
                ..Default::default()
            },
        )
        .unwrap();
        assert!(path.breakpoints.iter().all(|b| b.rule.n_active() <= 2));
        assert!(path.last().is_terminal());
    }

    #[test]
    fn singular_active_gram_ends_path() {
        // two identical scores and one orthogonal: rank 2
        let g = DMatrix::from_row_slice(3, 3, &[1.0, 1.0, 0.0, 1.0, 1.0, 0.0, 0.0, 0.0, 0.5]);
        let g = GramSummary::from_matrix(g, None, 1, vec![]).unwrap();
        let path = solve_path(&g, &[1.0; 3], PathStop::default()).unwrap();
        assert!(!path.warnings.is_empty());
        assert!(path.last().is_terminal());
    }
}
