//! Weighted EM over missing responses.
//!
//! Each missing cell is expanded into one pseudo-row per candidate value
//! `0..=K`, weighted by the renormalized ZIP mass of that value under the
//! current parameters; observed cells contribute a single weight-one row.
//! The scoring updates then run on the expanded rows, and the weights are
//! rebuilt from the new parameters every outer iteration.

use crate::dist::{zip_pmf, CellParams};
use crate::error::{Error, Result};
use crate::fit::{
    check_full_rank, em_loop, finalize, solve_spd, Controls, FitResult, Working,
};
use crate::model::{
    link_lambda, link_pi, logistic, DesignRow, ModelData, ZipParams, PREDICTOR_CLAMP,
};
use nalgebra::{DMatrix, DVector};

/// Truncated candidate range `{0..=upper}` for a missing count.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct CandidateSupport {
    upper: u32,
}

impl CandidateSupport {
    pub fn new(upper: u32) -> Result<Self> {
        if upper < 1 {
            return Err(Error::InvalidArgument(
                "candidate support upper bound must be at least 1".into(),
            ));
        }
        Ok(Self { upper })
    }

    pub fn upper(&self) -> u32 {
        self.upper
    }

    pub fn len(&self) -> usize {
        self.upper as usize + 1
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn values(&self) -> impl Iterator<Item = u32> {
        0..=self.upper
    }
}

/// Upper bound from the observed responses at one time:
/// `K = max(1, ceil(m + 3 sqrt(m)))` with `m` the observed mean, covering
/// roughly three standard deviations of a Poisson with that mean.
pub fn candidate_support(observed: &[u32]) -> Result<CandidateSupport> {
    if observed.is_empty() {
        return Err(Error::NoObservedResponses { time: 0 });
    }
    let m = observed.iter().map(|&y| f64::from(y)).sum::<f64>() / observed.len() as f64;
    let upper = (m + 3.0 * m.sqrt()).ceil().max(1.0) as u32;
    CandidateSupport::new(upper)
}

/// Probability weights over a cell's candidate values. Observed cells carry
/// a point mass at the observed value; missing cells carry the ZIP masses
/// renormalized over the truncated support so each cell contributes total
/// weight one.
#[derive(Debug, Clone, PartialEq)]
pub struct CellWeights {
    pub unit: usize,
    pub time: usize,
    pub support: CandidateSupport,
    pub w: Vec<f64>,
}

pub fn cell_weights(
    unit: usize,
    time: usize,
    observed: Option<u32>,
    row: &DesignRow,
    params: &ZipParams,
    support: &CandidateSupport,
) -> Result<CellWeights> {
    match observed {
        Some(y) => {
            let upper = support.upper().max(y);
            let mut w = vec![0.0; upper as usize + 1];
            w[y as usize] = 1.0;
            Ok(CellWeights {
                unit,
                time,
                support: CandidateSupport::new(upper)?,
                w,
            })
        }
        None => {
            let pi = link_pi(&row.z, &params.gamma)?;
            let lambda = link_lambda(&row.x, &params.beta)?;
            let cell = CellParams::new(pi, lambda).expect("links yield valid parameters");
            let mut w: Vec<f64> = support.values().map(|k| zip_pmf(k, cell)).collect();
            let total: f64 = w.iter().sum();
            for v in w.iter_mut() {
                *v /= total;
            }
            Ok(CellWeights {
                unit,
                time,
                support: *support,
                w,
            })
        }
    }
}

/// Posterior probability that a response is a structural zero, given the
/// current parameters: zero for positive counts, the closed-form ratio for
/// zeros.
pub fn e_step_indicator(y: u32, row: &DesignRow, params: &ZipParams) -> Result<f64> {
    let eta_z = crate::model::clamped_dot(&row.z, &params.gamma)?;
    let eta_x = crate::model::clamped_dot(&row.x, &params.beta)?;
    Ok(e_step_indicator_terms(f64::from(y), eta_x, eta_z))
}

pub(crate) fn e_step_indicator_terms(y: f64, eta_x: f64, eta_z: f64) -> f64 {
    if y > 0.0 {
        0.0
    } else {
        1.0 / (1.0 + (-eta_x.exp() - eta_z).exp())
    }
}

/// One weighted scoring step for the zero part:
/// `gamma + [Z'MWZ]^{-1} Z'W(d - pi)` with `M = diag(pi(1-pi))`, equal to
/// the working-response form `[Z'MWZ]^{-1} Z'MW(Z gamma + v)`.
pub fn weighted_update_gamma(
    z: &DMatrix<f64>,
    d: &[f64],
    weights: &[f64],
    gamma: &DVector<f64>,
    ridge: f64,
) -> Result<DVector<f64>> {
    if z.nrows() != d.len() || d.len() != weights.len() {
        return Err(Error::DimensionMismatch(format!(
            "{} design rows, {} indicators, {} weights",
            z.nrows(),
            d.len(),
            weights.len()
        )));
    }
    if z.ncols() != gamma.len() {
        return Err(Error::DimensionMismatch(format!(
            "design width {} vs gamma length {}",
            z.ncols(),
            gamma.len()
        )));
    }
    let p = z.ncols();
    let mut info = DMatrix::zeros(p, p);
    let mut u = DVector::zeros(p);
    for i in 0..d.len() {
        let eta: f64 = z
            .row(i)
            .iter()
            .zip(gamma.iter())
            .map(|(a, b)| a * b)
            .sum::<f64>()
            .clamp(-PREDICTOR_CLAMP, PREDICTOR_CLAMP);
        let pi = logistic(eta);
        let m = weights[i] * pi * (1.0 - pi);
        let r = weights[i] * (d[i] - pi);
        for j in 0..p {
            u[j] += z[(i, j)] * r;
            for k in 0..p {
                info[(j, k)] += z[(i, j)] * m * z[(i, k)];
            }
        }
    }
    let delta = solve_spd(info, &u, ridge)?;
    Ok(gamma + delta)
}

/// One weighted scoring step for the Poisson part:
/// `beta + [X'WMX]^{-1} X'W(1-d)(y - lambda)` with `M = diag(lambda)`,
/// equal to the working-response form with `v = (1-d)(y-lambda)/lambda`.
pub fn weighted_update_beta(
    x: &DMatrix<f64>,
    y: &[f64],
    d: &[f64],
    weights: &[f64],
    beta: &DVector<f64>,
    ridge: f64,
) -> Result<DVector<f64>> {
    if x.nrows() != y.len() || y.len() != d.len() || d.len() != weights.len() {
        return Err(Error::DimensionMismatch(format!(
            "{} design rows, {} responses, {} indicators, {} weights",
            x.nrows(),
            y.len(),
            d.len(),
            weights.len()
        )));
    }
    if x.ncols() != beta.len() {
        return Err(Error::DimensionMismatch(format!(
            "design width {} vs beta length {}",
            x.ncols(),
            beta.len()
        )));
    }
    let p = x.ncols();
    let mut info = DMatrix::zeros(p, p);
    let mut u = DVector::zeros(p);
    for i in 0..y.len() {
        let eta: f64 = x
            .row(i)
            .iter()
            .zip(beta.iter())
            .map(|(a, b)| a * b)
            .sum::<f64>()
            .clamp(-PREDICTOR_CLAMP, PREDICTOR_CLAMP);
        let lambda = eta.exp();
        let m = weights[i] * lambda;
        let r = weights[i] * (1.0 - d[i]) * (y[i] - lambda);
        for j in 0..p {
            u[j] += x[(i, j)] * r;
            for k in 0..p {
                info[(j, k)] += x[(i, j)] * m * x[(i, k)];
            }
        }
    }
    let delta = solve_spd(info, &u, ridge)?;
    Ok(beta + delta)
}

/// Weighted EM fit of one time slice together with the final weights of
/// every missing cell.
#[derive(Debug, Clone)]
pub struct WeightedFit {
    pub fit: FitResult,
    pub weights: Vec<CellWeights>,
}

/// Fit a slice that may contain missing responses.
///
/// The candidate support is built from the slice's own observed responses.
/// With nothing missing this reduces to [`crate::fit::fit_scoring`] and
/// produces bitwise-identical parameters. The returned `FitResult` carries
/// the log-likelihood and information of the observed rows only.
pub fn fit_weighted_em(
    data: &ModelData,
    time: usize,
    init: &ZipParams,
    ctrl: &Controls,
) -> Result<WeightedFit> {
    let observed = data.observed();
    if observed.is_empty() {
        return Err(Error::NoObservedResponses { time });
    }
    check_full_rank(data.x(), "poisson")?;
    check_full_rank(data.z(), "zero")?;
    let support = candidate_support(&observed)?;

    // Expand: observed cell -> one weight-one row; missing cell -> one row
    // per candidate value.
    let n = data.n();
    let mut x_rows: Vec<Vec<f64>> = Vec::new();
    let mut z_rows: Vec<Vec<f64>> = Vec::new();
    let mut y_rows: Vec<f64> = Vec::new();
    let mut w_rows: Vec<f64> = Vec::new();
    // (unit, first expanded row index) per missing cell
    let mut missing_cells: Vec<(usize, usize)> = Vec::new();
    for i in 0..n {
        match data.y()[i] {
            Some(y) => {
                x_rows.push(data.x_row(i));
                z_rows.push(data.z_row(i));
                y_rows.push(f64::from(y));
                w_rows.push(1.0);
            }
            None => {
                missing_cells.push((i, y_rows.len()));
                for k in support.values() {
                    x_rows.push(data.x_row(i));
                    z_rows.push(data.z_row(i));
                    y_rows.push(f64::from(k));
                    w_rows.push(0.0);
                }
            }
        }
    }
    let r = y_rows.len();
    let p2 = data.p_beta();
    let p1 = data.p_gamma();
    let x = DMatrix::from_fn(r, p2, |i, j| x_rows[i][j]);
    let z = DMatrix::from_fn(r, p1, |i, j| z_rows[i][j]);
    let mut work = Working {
        x,
        z,
        y: y_rows,
        w: w_rows,
    };

    let cells = missing_cells.clone();
    let rows: Vec<DesignRow> = cells.iter().map(|&(i, _)| data.design_row(i)).collect();
    let refresh = |params: &ZipParams, work: &mut Working| -> Result<()> {
        for (c, &(unit, first_row)) in cells.iter().enumerate() {
            let cw = cell_weights(unit, time, None, &rows[c], params, &support)?;
            for (k, &wk) in cw.w.iter().enumerate() {
                work.w[first_row + k] = wk;
            }
        }
        Ok(())
    };

    let (params, iterations, converged) = em_loop(&mut work, refresh, init, ctrl)?;

    // Final per-cell weights at the converged parameters, for Step 2
    // reporting and export.
    let mut weights = Vec::with_capacity(missing_cells.len());
    for (c, &(unit, _)) in missing_cells.iter().enumerate() {
        weights.push(cell_weights(unit, time, None, &rows[c], &params, &support)?);
    }

    // Loglik and information are evaluated on the observed rows.
    let observed_rows: Vec<usize> = (0..n).filter(|&i| data.y()[i].is_some()).collect();
    let xo = DMatrix::from_fn(observed_rows.len(), p2, |i, j| data.x()[(observed_rows[i], j)]);
    let zo = DMatrix::from_fn(observed_rows.len(), p1, |i, j| data.z()[(observed_rows[i], j)]);
    let yo: Vec<u32> = observed_rows.iter().map(|&i| data.y()[i].unwrap()).collect();
    let observed_data = ModelData::complete(xo, zo, yo)?;
    let fit = finalize(&observed_data, params, iterations, converged, ctrl)?;
    Ok(WeightedFit { fit, weights })
}
