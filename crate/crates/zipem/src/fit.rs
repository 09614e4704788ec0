//! Damped Fisher-scoring fitter for complete data slices.
//!
//! The fitter alternates an E-step on the structural-zero indicator with
//! one scoring update per model part. Each update is accepted only if it
//! improves the part's expected complete-data objective, halving the step
//! otherwise, which makes the observed log-likelihood non-decreasing over
//! the run. The same loop drives the weighted fitter in [`crate::em`]; with
//! nothing missing the two produce bitwise-identical parameters.

use crate::em::{e_step_indicator_terms, weighted_update_beta, weighted_update_gamma};
use crate::error::{Error, Result};
use crate::model::{fisher_info, loglik, ModelData, ZipParams, PREDICTOR_CLAMP};
use nalgebra::{DMatrix, DVector};

/// Convergence and robustness controls shared by all fitters.
#[derive(Debug, Clone, PartialEq)]
pub struct Controls {
    /// Stop when the largest absolute parameter change falls below this.
    pub tol: f64,
    /// Hard cap on outer iterations.
    pub max_iterations: usize,
    /// Step halvings attempted before a non-improving update is discarded.
    pub max_halvings: u32,
    /// Diagonal ridge added once when an information solve fails.
    pub ridge: f64,
    /// Any coefficient beyond this magnitude raises the separation flag.
    pub separation_threshold: f64,
}

impl Default for Controls {
    fn default() -> Self {
        // A separated zero part drifts for a few hundred iterations before
        // its objective flattens; 100 iterations cuts that off mid-march
        // and leaves the Poisson part short of its limit.
        Self {
            tol: 1e-6,
            max_iterations: 500,
            max_halvings: 10,
            ridge: 1e-8,
            separation_threshold: 20.0,
        }
    }
}

/// Converged fit of one slice.
#[derive(Debug, Clone, PartialEq)]
pub struct FitResult {
    pub params: ZipParams,
    pub loglik: f64,
    pub iterations: usize,
    pub converged: bool,
    /// Fisher information at the estimate, (p1+p2) square, gamma block first.
    pub info: DMatrix<f64>,
    /// Square roots of the diagonal of the inverse information; NaN where
    /// the information could not be inverted.
    pub std_errors: DVector<f64>,
    pub separation_flag: bool,
}

/// Moment-based starting values from the observed responses: the Poisson
/// intercept starts at log(mean of positive responses + 0.5), the zero
/// intercept at the logit of the observed zero fraction.
pub fn default_init(data: &ModelData) -> ZipParams {
    let observed = data.observed();
    let mut params = ZipParams::zeros(data.p_beta(), data.p_gamma());
    let positives: Vec<f64> = observed.iter().filter(|&&y| y > 0).map(|&y| f64::from(y)).collect();
    let pos_mean = if positives.is_empty() {
        0.0
    } else {
        positives.iter().sum::<f64>() / positives.len() as f64
    };
    params.beta[0] = (pos_mean + 0.5).ln();
    let zero_frac = if observed.is_empty() {
        0.5
    } else {
        observed.iter().filter(|&&y| y == 0).count() as f64 / observed.len() as f64
    };
    let zero_frac = zero_frac.clamp(0.01, 0.99);
    params.gamma[0] = (zero_frac / (1.0 - zero_frac)).ln();
    params
}

/// Fit a complete slice by the alternating scoring updates.
pub fn fit_scoring(data: &ModelData, init: &ZipParams, ctrl: &Controls) -> Result<FitResult> {
    let missing = data.n_missing();
    if missing > 0 {
        return Err(Error::MissingResponses(missing));
    }
    check_full_rank(data.x(), "poisson")?;
    check_full_rank(data.z(), "zero")?;
    let y: Vec<f64> = data.observed().iter().map(|&v| f64::from(v)).collect();
    let mut work = Working {
        x: data.x().clone(),
        z: data.z().clone(),
        y,
        w: vec![1.0; data.n()],
    };
    let (params, iterations, converged) = em_loop(&mut work, |_, _| Ok(()), init, ctrl)?;
    finalize(data, params, iterations, converged, ctrl)
}

pub(crate) fn finalize(
    data: &ModelData,
    params: ZipParams,
    iterations: usize,
    converged: bool,
    ctrl: &Controls,
) -> Result<FitResult> {
    let ll = loglik(data, &params)?;
    let info = fisher_info(data, &params)?;
    let std_errors = std_errors_from_info(&info, ctrl.ridge);
    let separation_flag = params.max_abs() > ctrl.separation_threshold;
    Ok(FitResult {
        params,
        loglik: ll,
        iterations,
        converged,
        info,
        std_errors,
        separation_flag,
    })
}

pub(crate) fn std_errors_from_info(info: &DMatrix<f64>, ridge: f64) -> DVector<f64> {
    let p = info.nrows();
    let inverse = info.clone().try_inverse().or_else(|| {
        let mut ridged = info.clone();
        for j in 0..p {
            ridged[(j, j)] += ridge;
        }
        ridged.try_inverse()
    });
    match inverse {
        Some(v) => DVector::from_iterator(p, (0..p).map(|j| v[(j, j)].sqrt())),
        None => DVector::from_element(p, f64::NAN),
    }
}

/// Expanded rows the fit loop operates on: one row per observed cell, or
/// one per candidate value of a missing cell.
pub(crate) struct Working {
    pub x: DMatrix<f64>,
    pub z: DMatrix<f64>,
    pub y: Vec<f64>,
    pub w: Vec<f64>,
}

/// Alternate E-step and damped scoring updates until the parameter change
/// drops below tolerance. `refresh` is invoked at the top of every
/// iteration so callers can rebuild candidate-value weights from the
/// current parameters; it must leave observed rows at weight one.
///
/// A singular information solve is retried once with a ridge; if that also
/// fails the fit stops and reports non-convergence rather than erroring.
pub(crate) fn em_loop<F>(
    work: &mut Working,
    mut refresh: F,
    init: &ZipParams,
    ctrl: &Controls,
) -> Result<(ZipParams, usize, bool)>
where
    F: FnMut(&ZipParams, &mut Working) -> Result<()>,
{
    let mut params = init.clone();
    let mut iterations = 0;
    let mut converged = false;
    for _ in 0..ctrl.max_iterations {
        iterations += 1;
        refresh(&params, work)?;
        let n = work.y.len();
        let mut d = vec![0.0; n];
        for (i, di) in d.iter_mut().enumerate() {
            let eta_z: f64 = row_dot(&work.z, i, &params.gamma);
            let eta_x: f64 = row_dot(&work.x, i, &params.beta);
            *di = e_step_indicator_terms(work.y[i], eta_x, eta_z);
        }

        let new_gamma =
            match weighted_update_gamma(&work.z, &d, &work.w, &params.gamma, ctrl.ridge) {
                Ok(g) => g,
                Err(Error::SingularInformation) => return Ok((params, iterations, false)),
                Err(e) => return Err(e),
            };
        let delta_gamma = &new_gamma - &params.gamma;
        let q_g = |g: &DVector<f64>| q_gamma(&work.z, &work.w, &d, g);
        let (gamma, applied_g) = damp(q_g, &params.gamma, &delta_gamma, ctrl.max_halvings);
        params.gamma = gamma;

        let new_beta = match weighted_update_beta(
            &work.x,
            &work.y,
            &d,
            &work.w,
            &params.beta,
            ctrl.ridge,
        ) {
            Ok(b) => b,
            Err(Error::SingularInformation) => return Ok((params, iterations, false)),
            Err(e) => return Err(e),
        };
        let delta_beta = &new_beta - &params.beta;
        let q_b = |b: &DVector<f64>| q_beta(&work.x, &work.w, &d, &work.y, b);
        let (beta, applied_b) = damp(q_b, &params.beta, &delta_beta, ctrl.max_halvings);
        params.beta = beta;

        let change = delta_gamma
            .iter()
            .map(|v| (v * applied_g).abs())
            .chain(delta_beta.iter().map(|v| (v * applied_b).abs()))
            .fold(0.0f64, f64::max);
        if change < ctrl.tol {
            converged = true;
            break;
        }
    }
    Ok((params, iterations, converged))
}

fn row_dot(m: &DMatrix<f64>, i: usize, coef: &DVector<f64>) -> f64 {
    m.row(i)
        .iter()
        .zip(coef.iter())
        .map(|(a, b)| a * b)
        .sum::<f64>()
        .clamp(-PREDICTOR_CLAMP, PREDICTOR_CLAMP)
}

// Expected weighted complete-data objective for the zero part.
fn q_gamma(z: &DMatrix<f64>, w: &[f64], d: &[f64], gamma: &DVector<f64>) -> f64 {
    let mut total = 0.0;
    for i in 0..w.len() {
        let eta = row_dot(z, i, gamma);
        total += w[i] * (d[i] * eta - crate::dist::softplus(eta));
    }
    total
}

// Expected weighted complete-data objective for the Poisson part, constants
// in y dropped.
fn q_beta(x: &DMatrix<f64>, w: &[f64], d: &[f64], y: &[f64], beta: &DVector<f64>) -> f64 {
    let mut total = 0.0;
    for i in 0..w.len() {
        let eta = row_dot(x, i, beta);
        total += w[i] * (1.0 - d[i]) * (y[i] * eta - eta.exp());
    }
    total
}

// Accept the first halved step that strictly improves the objective;
// 0 halvings means the full step. With no improving step the parameters
// stay put, which the caller reads as convergence.
fn damp<Q: Fn(&DVector<f64>) -> f64>(
    q: Q,
    current: &DVector<f64>,
    delta: &DVector<f64>,
    max_halvings: u32,
) -> (DVector<f64>, f64) {
    let q0 = q(current);
    let mut scale = 1.0;
    for _ in 0..=max_halvings {
        let cand = current + delta * scale;
        if q(&cand) > q0 {
            return (cand, scale);
        }
        scale *= 0.5;
    }
    (current.clone(), 0.0)
}

/// Error with the dependent column indices when the design is not of full
/// column rank, detected by pivoted elimination on the Gram matrix.
pub(crate) fn check_full_rank(m: &DMatrix<f64>, part: &'static str) -> Result<()> {
    let p = m.ncols();
    let mut a = m.transpose() * m;
    let scale = a.diagonal().iter().fold(0.0f64, |s, v| s.max(*v));
    if scale <= 0.0 {
        return Err(Error::RankDeficientDesign {
            part,
            columns: (0..p).collect(),
        });
    }
    let tol = scale * 1e-10;
    let mut remaining: Vec<usize> = (0..p).collect();
    while !remaining.is_empty() {
        let (pos, &pivot) = remaining
            .iter()
            .enumerate()
            .max_by(|(_, &a_idx), (_, &b_idx)| {
                a[(a_idx, a_idx)]
                    .partial_cmp(&a[(b_idx, b_idx)])
                    .expect("finite diagonals")
            })
            .expect("non-empty");
        if a[(pivot, pivot)] <= tol {
            let mut columns = remaining.clone();
            columns.sort_unstable();
            return Err(Error::RankDeficientDesign { part, columns });
        }
        remaining.remove(pos);
        let d = a[(pivot, pivot)];
        for &j in &remaining {
            for &k in &remaining {
                let adj = a[(j, pivot)] * a[(k, pivot)] / d;
                a[(j, k)] -= adj;
            }
        }
        for &j in remaining.clone().iter() {
            a[(j, pivot)] = 0.0;
            a[(pivot, j)] = 0.0;
        }
    }
    Ok(())
}

/// Solve `a * x = b` by Cholesky, retrying once with a ridge on the
/// diagonal before giving up.
pub(crate) fn solve_spd(a: DMatrix<f64>, b: &DVector<f64>, ridge: f64) -> Result<DVector<f64>> {
    if let Some(ch) = a.clone().cholesky() {
        return Ok(ch.solve(b));
    }
    let mut ridged = a;
    for j in 0..ridged.nrows() {
        ridged[(j, j)] += ridge;
    }
    match ridged.cholesky() {
        Some(ch) => Ok(ch.solve(b)),
        None => Err(Error::SingularInformation),
    }
}
