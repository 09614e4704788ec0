//! Step 2 of each time point: closed-form effects for missing cells, the
//! threshold rule that converts them into imputed counts, and the
//! unweighted refit of the completed slice.
//!
//! Treating each missing cell as a covariate-adjusted parameter in an
//! ANCOVA layout and starting the missing responses at zero, least squares
//! collapses to `alpha = X_miss beta` and `tau = Z_miss gamma`, so the
//! effects come in one shot from the Step-1 coefficients.

use crate::error::{Error, Result};
use crate::fit::{fit_scoring, Controls, FitResult};
use crate::model::{DesignRow, ModelData, ZipParams, PREDICTOR_CLAMP};
use serde::Serialize;

/// Closed-form missing-cell effects. `alpha` and `tau` are the raw linear
/// predictors; `lambda_hat` and `pi_hat` apply the links with the usual
/// predictor clamp.
#[derive(Debug, Clone, PartialEq)]
pub struct BartlettEstimates {
    /// (unit, time) labels of the missing cells, in slice row order.
    pub cells: Vec<(usize, usize)>,
    pub alpha: Vec<f64>,
    pub tau: Vec<f64>,
    pub lambda_hat: Vec<f64>,
    pub pi_hat: Vec<f64>,
}

pub fn bartlett_estimates(
    cells: &[(usize, usize)],
    rows: &[DesignRow],
    params: &ZipParams,
) -> Result<BartlettEstimates> {
    if cells.len() != rows.len() {
        return Err(Error::DimensionMismatch(format!(
            "{} cell labels for {} design rows",
            cells.len(),
            rows.len()
        )));
    }
    let mut alpha = Vec::with_capacity(rows.len());
    let mut tau = Vec::with_capacity(rows.len());
    let mut lambda_hat = Vec::with_capacity(rows.len());
    let mut pi_hat = Vec::with_capacity(rows.len());
    for row in rows {
        if row.x.len() != params.beta.len() || row.z.len() != params.gamma.len() {
            return Err(Error::DimensionMismatch(format!(
                "design row of width ({}, {}) against params ({}, {})",
                row.z.len(),
                row.x.len(),
                params.gamma.len(),
                params.beta.len()
            )));
        }
        let a: f64 = row.x.iter().zip(params.beta.iter()).map(|(u, v)| u * v).sum();
        let t: f64 = row.z.iter().zip(params.gamma.iter()).map(|(u, v)| u * v).sum();
        alpha.push(a);
        tau.push(t);
        lambda_hat.push(a.clamp(-PREDICTOR_CLAMP, PREDICTOR_CLAMP).exp());
        pi_hat.push(crate::model::logistic(t.clamp(-PREDICTOR_CLAMP, PREDICTOR_CLAMP)));
    }
    Ok(BartlettEstimates {
        cells: cells.to_vec(),
        alpha,
        tau,
        lambda_hat,
        pi_hat,
    })
}

/// One imputed cell: the probability and mean behind the decision, the
/// threshold in force, and the resulting count.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ImputationDecision {
    pub unit: usize,
    pub time: usize,
    pub pi_hat: f64,
    pub lambda_hat: f64,
    pub p0: f64,
    pub imputed: u32,
}

/// Apply the threshold rule: zero when `pi_hat > p0`, otherwise the integer
/// part of `lambda_hat`. A tie at the threshold falls to the count branch.
pub fn impute_cells(est: &BartlettEstimates, p0: f64) -> Result<Vec<ImputationDecision>> {
    if !(p0 > 0.0 && p0 < 1.0) {
        return Err(Error::InvalidArgument(format!(
            "p0 must lie strictly inside (0, 1), got {p0}"
        )));
    }
    Ok(est
        .cells
        .iter()
        .enumerate()
        .map(|(i, &(unit, time))| {
            let imputed = if est.pi_hat[i] > p0 {
                0
            } else {
                est.lambda_hat[i].floor().min(f64::from(u32::MAX)) as u32
            };
            ImputationDecision {
                unit,
                time,
                pi_hat: est.pi_hat[i],
                lambda_hat: est.lambda_hat[i],
                p0,
                imputed,
            }
        })
        .collect())
}

/// Refit a completed slice by Fisher scoring, initialized at the Step-1
/// parameters.
pub fn refit_complete(data: &ModelData, init: &ZipParams, ctrl: &Controls) -> Result<FitResult> {
    let missing = data.n_missing();
    if missing > 0 {
        return Err(Error::MissingResponses(missing));
    }
    fit_scoring(data, init, ctrl)
}

/// Result of the Step-2 impute/refit cycle for one time slice.
#[derive(Debug, Clone)]
pub struct Step2Outcome {
    pub completed: ModelData,
    pub decisions: Vec<ImputationDecision>,
    pub fit: FitResult,
    /// Impute/refit cycles executed before the imputations stabilized.
    pub cycles: usize,
}

/// Alternate imputation and refitting until the imputed values repeat,
/// up to `max_cycles` rounds. The effects are closed-form given the
/// coefficients, so each round is one Bartlett evaluation, one threshold
/// pass and one scoring refit.
pub fn impute_and_refit(
    data: &ModelData,
    time: usize,
    step1: &ZipParams,
    p0: f64,
    ctrl: &Controls,
    max_cycles: usize,
) -> Result<Step2Outcome> {
    if max_cycles == 0 {
        return Err(Error::InvalidArgument("max_cycles must be positive".into()));
    }
    let missing_idx: Vec<usize> = (0..data.n()).filter(|&i| data.y()[i].is_none()).collect();
    let cells: Vec<(usize, usize)> = missing_idx.iter().map(|&i| (i, time)).collect();
    let rows: Vec<DesignRow> = missing_idx.iter().map(|&i| data.design_row(i)).collect();

    let mut params = step1.clone();
    let mut prev: Option<Vec<u32>> = None;
    let mut cycles = 0;
    let mut last: Option<(ModelData, Vec<ImputationDecision>, FitResult)> = None;
    for _ in 0..max_cycles {
        cycles += 1;
        let est = bartlett_estimates(&cells, &rows, &params)?;
        let decisions = impute_cells(&est, p0)?;
        let values: Vec<u32> = decisions.iter().map(|d| d.imputed).collect();
        let completed = data.filled(&values)?;
        let fit = fit_scoring(&completed, &params, ctrl)?;
        params = fit.params.clone();
        let stable = prev.as_deref() == Some(&values[..]);
        prev = Some(values);
        last = Some((completed, decisions, fit));
        if stable || missing_idx.is_empty() {
            break;
        }
    }
    let (completed, decisions, fit) = last.expect("at least one cycle ran");
    Ok(Step2Outcome {
        completed,
        decisions,
        fit,
        cycles,
    })
}
