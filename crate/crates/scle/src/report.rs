//! Artifacts written by the command-line driver: JSON documents and CSV
//! tables with 17 significant digits.

use std::path::Path;

use nalgebra::DMatrix;
use serde::Serialize;

use scle_core::{CompositionRule, FitResult, PathEvent, PathResult, SelectionPoint};

use crate::data::{write_rows, write_text};
use crate::error::AppResult;
use crate::format::real;
use crate::simulate::{ArePoint, MseTrajectory};

fn opt(x: Option<f64>) -> String {
    x.map(real).unwrap_or_default()
}

fn header(cols: &[&str]) -> Vec<String> {
    cols.iter().map(|s| s.to_string()).collect()
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> AppResult<()> {
    let mut text = serde_json::to_string_pretty(value).map_err(|e| crate::error::AppError::Usage(e.to_string()))?;
    text.push('\n');
    write_text(path, &text)
}

fn matrix_rows(m: &DMatrix<f64>) -> Vec<Vec<f64>> {
    m.row_iter().map(|r| r.iter().copied().collect()).collect()
}

#[derive(Debug, Clone, Serialize)]
pub struct FitReport {
    pub theta: Vec<f64>,
    pub std_errors: Vec<f64>,
    pub preliminary_theta: Vec<f64>,
    pub selected_lambda: f64,
    pub rule_lambda: f64,
    pub active: Vec<usize>,
    pub active_labels: Vec<String>,
    pub weights: Vec<f64>,
    pub phi: f64,
    pub iterations: usize,
    pub kkt_max_violation: f64,
    pub sensitivity: Vec<Vec<f64>>,
    pub variability: Vec<Vec<f64>>,
    pub godambe: Vec<Vec<f64>>,
    pub n_obs: usize,
    pub warnings: Vec<String>,
}

impl FitReport {
    pub fn new(fit: &FitResult, labels: &[String]) -> Self {
        FitReport {
            theta: fit.theta.clone(),
            std_errors: fit.std_errors.clone(),
            preliminary_theta: fit.preliminary_theta.clone(),
            selected_lambda: fit.selected_lambda,
            rule_lambda: fit.rule.lambda(),
            active: fit.rule.active().to_vec(),
            active_labels: fit.rule.active().iter().map(|&j| labels[j].clone()).collect(),
            weights: fit.rule.weights().to_vec(),
            phi: fit.phi,
            iterations: fit.iterations,
            kkt_max_violation: fit.kkt.max_violation(),
            sensitivity: matrix_rows(&fit.sandwich.sensitivity),
            variability: matrix_rows(&fit.sandwich.variability),
            godambe: matrix_rows(&fit.sandwich.godambe),
            n_obs: fit.sandwich.n_obs,
            warnings: fit.warnings.clone(),
        }
    }
}

/// `parameter,estimate,std_error,preliminary`
pub fn write_estimates_csv(path: &Path, fit: &FitResult) -> AppResult<()> {
    let rows: Vec<Vec<String>> = (0..fit.theta.len())
        .map(|k| {
            vec![
                format!("theta{}", k + 1),
                real(fit.theta[k]),
                real(fit.std_errors[k]),
                real(fit.preliminary_theta[k]),
            ]
        })
        .collect();
    write_rows(path, &header(&["parameter", "estimate", "std_error", "preliminary"]), &rows)
}

/// `index,label,weight` over all scores.
pub fn write_rule_csv(path: &Path, rule: &CompositionRule, labels: &[String]) -> AppResult<()> {
    let rows: Vec<Vec<String>> = rule
        .weights()
        .iter()
        .enumerate()
        .map(|(j, w)| vec![(j + 1).to_string(), labels[j].clone(), real(*w)])
        .collect();
    write_rows(path, &header(&["index", "label", "weight"]), &rows)
}

fn events(e: &[PathEvent]) -> String {
    e.iter()
        .map(|ev| match ev {
            PathEvent::Enter(j) => format!("enter:{}", j + 1),
            PathEvent::Leave(j) => format!("leave:{}", j + 1),
            PathEvent::Terminate => "terminate".into(),
        })
        .collect::<Vec<_>>()
        .join(";")
}

/// One row per breakpoint: `lambda,active_count,l1_norm,events,w1..wm`.
/// Score indices are 1-based.
pub fn write_path_csv(path: &Path, result: &PathResult) -> AppResult<()> {
    let m = result.breakpoints.first().map_or(0, |b| b.rule.len());
    let mut head = header(&["lambda", "active_count", "l1_norm", "events"]);
    head.extend((1..=m).map(|j| format!("w{j}")));
    let rows: Vec<Vec<String>> = result
        .breakpoints
        .iter()
        .map(|bp| {
            let mut row = vec![
                real(bp.lambda),
                bp.rule.n_active().to_string(),
                real(bp.rule.l1_norm()),
                events(&bp.events),
            ];
            row.extend(bp.rule.weights().iter().map(|w| real(*w)));
            row
        })
        .collect();
    write_rows(path, &head, &rows)
}

/// `lambda,active_count,phi`
pub fn write_selection_csv(path: &Path, trace: &[SelectionPoint]) -> AppResult<()> {
    let rows: Vec<Vec<String>> = trace
        .iter()
        .map(|p| vec![real(p.lambda), p.active_count.to_string(), real(p.phi)])
        .collect();
    write_rows(path, &header(&["lambda", "active_count", "phi"]), &rows)
}

/// `lambda,active_count,are`
pub fn write_are_csv(path: &Path, curve: &[ArePoint]) -> AppResult<()> {
    let rows: Vec<Vec<String>> = curve
        .iter()
        .map(|p| vec![real(p.lambda), p.active_count.to_string(), real(p.are)])
        .collect();
    write_rows(path, &header(&["lambda", "active_count", "are"]), &rows)
}

/// One row per active count. Ratios are written in both orientations with
/// their Monte Carlo standard errors; absent comparators leave empty cells.
pub fn write_trajectory_csv(path: &Path, t: &MseTrajectory) -> AppResult<()> {
    let head = header(&[
        "active_count",
        "replications",
        "mse_scle",
        "mle_over_scle",
        "mle_over_scle_mc_se",
        "unif_over_scle",
        "unif_over_scle_mc_se",
    ]);
    let rows: Vec<Vec<String>> = t
        .points
        .iter()
        .map(|p| {
            vec![
                p.active_count.to_string(),
                p.replications.to_string(),
                real(p.mse_scle),
                opt(p.mle_over_scle.map(|r| r.value)),
                opt(p.mle_over_scle.map(|r| r.mc_se)),
                opt(p.unif_over_scle.map(|r| r.value)),
                opt(p.unif_over_scle.map(|r| r.mc_se)),
            ]
        })
        .collect();
    write_rows(path, &head, &rows)
}

#[cfg(test)]
mod tests {
    use super::*;
    use scle_core::{solve_path, GramSummary, PathStop};

    #[test]
    fn separable_path_table() {
        let dir = tempfile::tempdir().unwrap();
        let g = GramSummary::from_matrix(
            DMatrix::from_diagonal(&nalgebra::DVector::from_vec(vec![1.0, 0.5])),
            None,
            1,
            vec![0.0],
        )
        .unwrap();
        let p = solve_path(&g, &[1.0, 1.0], PathStop::default()).unwrap();
        let f = dir.path().join("path.csv");
        write_path_csv(&f, &p).unwrap();
        let text = std::fs::read_to_string(&f).unwrap();
        let mut lines = text.lines();
        assert_eq!(lines.next().unwrap(), "lambda,active_count,l1_norm,events,w1,w2");
        assert!(lines.next().unwrap().starts_with("1,0,0,enter:1,"));
        assert!(lines.next().unwrap().starts_with("0.5,1,0.5,enter:2,0.5,0"));
    }
}
