//! Choice of the tuning constant by explained score variability.
//!
//! `φ(λ)` is the share of `tr(Ĝ)` carried by the selected scores, zeroed at
//! or below the computing budget `λ*`. The selected constant is the largest
//! path breakpoint with `φ > τ`, or `λ*` if none qualifies above it.
//!
//! At a breakpoint `λ_k` the scores entering there still have zero weight,
//! so `φ` at `λ_k` is evaluated on the breakpoint's working set, the active
//! set used immediately below `λ_k`.

use alloc::format;
use alloc::vec::Vec;

use crate::error::{Error, Result};
use crate::score::{CompositionRule, GramSummary};
use crate::tstep::PathResult;

#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct SelectionConfig {
    pub tau: f64,
    pub lambda_budget: f64,
}

impl Default for SelectionConfig {
    fn default() -> Self {
        SelectionConfig {
            tau: 0.9,
            lambda_budget: 0.0,
        }
    }
}

impl SelectionConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.tau > 0.0 && self.tau <= 1.0) {
            return Err(Error::Config(format!("tau must lie in (0,1], got {}", self.tau)));
        }
        if !(self.lambda_budget >= 0.0) || !self.lambda_budget.is_finite() {
            return Err(Error::Config(format!(
                "lambda_budget must be finite and non-negative, got {}",
                self.lambda_budget
            )));
        }
        Ok(())
    }
}

/// `φ` for an explicit index set.
pub fn phi_of_set(gram: &GramSummary, selected: &[usize], lambda: f64, lambda_budget: f64) -> Result<f64> {
    let total = gram.trace();
    if !(total > 0.0) {
        return Err(Error::Degenerate("score Gram has zero trace".into()));
    }
    if !(lambda > lambda_budget) {
        return Ok(0.0);
    }
    let b = gram.diag_b();
    Ok(selected.iter().map(|&j| b[j]).sum::<f64>() / total)
}

/// `φ` for the nonzero support of `rule`.
pub fn phi(gram: &GramSummary, rule: &CompositionRule, lambda: f64, lambda_budget: f64) -> Result<f64> {
    if rule.len() != gram.n_scores() {
        return Err(Error::Config("rule length does not match the Gram".into()));
    }
    phi_of_set(gram, rule.active(), lambda, lambda_budget)
}

#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct SelectionPoint {
    pub lambda: f64,
    pub active_count: usize,
    pub phi: f64,
}

/// `(λ_k, |working set|, φ)` for every breakpoint.
pub fn selection_trace(path: &PathResult, gram: &GramSummary, config: &SelectionConfig) -> Result<Vec<SelectionPoint>> {
    path.breakpoints
        .iter()
        .map(|bp| {
            Ok(SelectionPoint {
                lambda: bp.lambda,
                active_count: bp.working_set.len(),
                phi: phi_of_set(gram, &bp.working_set, bp.lambda, config.lambda_budget)?,
            })
        })
        .collect()
}

/// Largest breakpoint `λ` with `φ > τ`; `λ*` when none lies above it.
pub fn select_lambda(path: &PathResult, gram: &GramSummary, config: &SelectionConfig) -> Result<f64> {
    Ok(select(path, gram, config)?.lambda)
}

/// Outcome of the selection rule.
#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct Selection {
    /// `λ̂`
    pub lambda: f64,
    /// `φ(λ̂)`; zero when the budget was reached.
    pub phi: f64,
    /// Index of the selected breakpoint, `None` when `λ̂ = λ*`.
    pub breakpoint: Option<usize>,
    /// The rule used for estimation: the end of the segment opened at `λ̂`,
    /// where every selected score has nonzero weight.
    pub rule: CompositionRule,
}

pub fn select(path: &PathResult, gram: &GramSummary, config: &SelectionConfig) -> Result<Selection> {
    config.validate()?;
    let bps = &path.breakpoints;
    if bps.is_empty() {
        return Err(Error::Input("path has no breakpoints".into()));
    }
    for (k, bp) in bps.iter().enumerate() {
        if !(bp.lambda > config.lambda_budget) {
            break;
        }
        let value = phi_of_set(gram, &bp.working_set, bp.lambda, config.lambda_budget)?;
        if value > config.tau {
            let rule = bps.get(k + 1).map_or_else(|| bp.rule.clone(), |next| next.rule.clone());
            return Ok(Selection {
                lambda: bp.lambda,
                phi: value,
                breakpoint: Some(k),
                rule,
            });
        }
    }
    let budget = config.lambda_budget;
    let rule = path.rule_at(budget).unwrap_or_else(|| path.last().rule.clone());
    Ok(Selection {
        lambda: budget,
        phi: 0.0,
        breakpoint: None,
        rule,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::tstep::{solve_path, PathStop};
    use nalgebra::{DMatrix, DVector};

    fn diag3() -> GramSummary {
        GramSummary::from_matrix(
            DMatrix::from_diagonal(&DVector::from_vec(alloc::vec![1.0, 0.5, 1.0 / 3.0])),
            None,
            1,
            alloc::vec![],
        )
        .unwrap()
    }

    #[test]
    fn phi_values() {
        let g = diag3();
        assert_eq!(phi(&g, &CompositionRule::zeros(3, 0.5), 0.5, 0.0).unwrap(), 0.0);
        assert_eq!(phi(&g, &CompositionRule::uniform(3), 0.5, 0.0).unwrap(), 1.0);
        let v = phi(&g, &CompositionRule::unit(3, 0), 0.5, 0.0).unwrap();
        assert!((v - 6.0 / 11.0).abs() < 1e-15);
        assert_eq!(phi(&g, &CompositionRule::uniform(3), 0.5, 0.5).unwrap(), 0.0);
        let zero = GramSummary::from_matrix(DMatrix::zeros(2, 2), None, 1, alloc::vec![]).unwrap();
        assert!(matches!(
            phi(&zero, &CompositionRule::uniform(2), 1.0, 0.0),
            Err(Error::Degenerate(_))
        ));
    }

    #[test]
    fn selects_entry_of_third_score() {
        let g = diag3();
        let path = solve_path(&g, &[1.0; 3], PathStop::default()).unwrap();
        let trace = selection_trace(&path, &g, &SelectionConfig::default()).unwrap();
        assert!((trace[0].phi - 6.0 / 11.0).abs() < 1e-15);
        assert!((trace[1].phi - 9.0 / 11.0).abs() < 1e-15);
        assert!((trace[2].phi - 1.0).abs() < 1e-15);
        let sel = select(&path, &g, &SelectionConfig::default()).unwrap();
        assert!((sel.lambda - 1.0 / 3.0).abs() < 1e-15);
        assert_eq!(sel.rule.n_active(), 3);
    }

    #[test]
    fn tiny_tau_picks_first_breakpoint() {
        let g = diag3();
        let path = solve_path(&g, &[1.0; 3], PathStop::default()).unwrap();
        let cfg = SelectionConfig {
            tau: 1e-12,
            lambda_budget: 0.0,
        };
        assert_eq!(select_lambda(&path, &g, &cfg).unwrap(), path.lambda_max);
    }

    #[test]
    fn budget_clause() {
        let g = diag3();
        let path = solve_path(&g, &[1.0; 3], PathStop::default()).unwrap();
        let cfg = SelectionConfig {
            tau: 0.9,
            lambda_budget: 0.4,
        };
        let sel = select(&path, &g, &cfg).unwrap();
        assert_eq!(sel.lambda, 0.4);
        assert_eq!(sel.breakpoint, None);
        assert!((sel.rule.weights()[1] - 0.2).abs() < 1e-12);
    }

    #[test]
    fn invalid_tau() {
        let cfg = SelectionConfig {
            tau: 1.5,
            lambda_budget: 0.0,
        };
        assert!(cfg.validate().is_err());
    }
}
