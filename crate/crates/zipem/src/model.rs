//! Regression structure for the ZIP model: link functions, the
//! complete-data log-likelihood, its analytic score, and the Fisher
//! information blocks.
//!
//! Parameter vectors are stacked zero-part first: the score and
//! information are laid out as (gamma, beta).

use crate::dist::CellParams;
use crate::error::{Error, Result};
use nalgebra::{DMatrix, DVector};

/// Linear predictors are clamped to this magnitude before exponentiation.
/// The zero model can separate on real data, and unclamped exponentials
/// overflow once coefficients run away.
pub const PREDICTOR_CLAMP: f64 = 30.0;

/// Coefficients of the two model parts: `beta` for the Poisson mean
/// (log link), `gamma` for the zero-inflation probability (logit link).
#[derive(Debug, Clone, PartialEq)]
pub struct ZipParams {
    pub beta: DVector<f64>,
    pub gamma: DVector<f64>,
}

impl ZipParams {
    pub fn new(beta: Vec<f64>, gamma: Vec<f64>) -> Result<Self> {
        if beta.iter().chain(gamma.iter()).any(|v| !v.is_finite()) {
            return Err(Error::InvalidArgument(
                "coefficients must be finite".into(),
            ));
        }
        Ok(Self {
            beta: DVector::from_vec(beta),
            gamma: DVector::from_vec(gamma),
        })
    }

    pub fn zeros(p_beta: usize, p_gamma: usize) -> Self {
        Self {
            beta: DVector::zeros(p_beta),
            gamma: DVector::zeros(p_gamma),
        }
    }

    /// Largest absolute coefficient over both parts.
    pub fn max_abs(&self) -> f64 {
        self.gamma
            .iter()
            .chain(self.beta.iter())
            .fold(0.0f64, |m, v| m.max(v.abs()))
    }
}

/// One cell's covariates: `x` feeds the Poisson part, `z` the zero part.
/// Both carry the intercept as their first entry.
#[derive(Debug, Clone, PartialEq)]
pub struct DesignRow {
    pub x: Vec<f64>,
    pub z: Vec<f64>,
}

impl DesignRow {
    pub fn new(x: Vec<f64>, z: Vec<f64>) -> Result<Self> {
        if x.iter().chain(z.iter()).any(|v| !v.is_finite()) {
            return Err(Error::InvalidArgument("covariates must be finite".into()));
        }
        Ok(Self { x, z })
    }
}

pub(crate) fn clamped_dot(row: &[f64], coef: &DVector<f64>) -> Result<f64> {
    if row.len() != coef.len() {
        return Err(Error::DimensionMismatch(format!(
            "covariate row has length {}, coefficient vector {}",
            row.len(),
            coef.len()
        )));
    }
    let dot: f64 = row.iter().zip(coef.iter()).map(|(a, b)| a * b).sum();
    Ok(dot.clamp(-PREDICTOR_CLAMP, PREDICTOR_CLAMP))
}

/// Zero-inflation probability exp(z'gamma) / (1 + exp(z'gamma)), with the
/// predictor clamped to +-30.
pub fn link_pi(z: &[f64], gamma: &DVector<f64>) -> Result<f64> {
    let eta = clamped_dot(z, gamma)?;
    Ok(logistic(eta))
}

/// Poisson mean exp(x'beta), with the predictor clamped to +-30.
pub fn link_lambda(x: &[f64], beta: &DVector<f64>) -> Result<f64> {
    let eta = clamped_dot(x, beta)?;
    Ok(eta.exp())
}

pub(crate) fn logistic(eta: f64) -> f64 {
    1.0 / (1.0 + (-eta).exp())
}

/// A rectangular slice of data at one time: design matrices for both model
/// parts plus responses, `None` marking a missing response.
#[derive(Debug, Clone, PartialEq)]
pub struct ModelData {
    x: DMatrix<f64>,
    z: DMatrix<f64>,
    y: Vec<Option<u32>>,
}

impl ModelData {
    pub fn new(x: DMatrix<f64>, z: DMatrix<f64>, y: Vec<Option<u32>>) -> Result<Self> {
        if x.nrows() != y.len() || z.nrows() != y.len() {
            return Err(Error::DimensionMismatch(format!(
                "design rows ({}, {}) must match response length {}",
                x.nrows(),
                z.nrows(),
                y.len()
            )));
        }
        if x.iter().chain(z.iter()).any(|v| !v.is_finite()) {
            return Err(Error::InvalidArgument("covariates must be finite".into()));
        }
        Ok(Self { x, z, y })
    }

    pub fn complete(x: DMatrix<f64>, z: DMatrix<f64>, y: Vec<u32>) -> Result<Self> {
        let y = y.into_iter().map(Some).collect();
        Self::new(x, z, y)
    }

    pub fn n(&self) -> usize {
        self.y.len()
    }

    pub fn p_beta(&self) -> usize {
        self.x.ncols()
    }

    pub fn p_gamma(&self) -> usize {
        self.z.ncols()
    }

    pub fn x(&self) -> &DMatrix<f64> {
        &self.x
    }

    pub fn z(&self) -> &DMatrix<f64> {
        &self.z
    }

    pub fn y(&self) -> &[Option<u32>] {
        &self.y
    }

    pub fn n_missing(&self) -> usize {
        self.y.iter().filter(|v| v.is_none()).count()
    }

    pub fn x_row(&self, i: usize) -> Vec<f64> {
        self.x.row(i).iter().copied().collect()
    }

    pub fn z_row(&self, i: usize) -> Vec<f64> {
        self.z.row(i).iter().copied().collect()
    }

    pub fn design_row(&self, i: usize) -> DesignRow {
        DesignRow {
            x: self.x_row(i),
            z: self.z_row(i),
        }
    }

    /// Observed responses, in row order.
    pub fn observed(&self) -> Vec<u32> {
        self.y.iter().flatten().copied().collect()
    }

    /// Copy with the given responses substituted for missing cells, in row
    /// order of the missing cells.
    pub fn filled(&self, values: &[u32]) -> Result<Self> {
        if values.len() != self.n_missing() {
            return Err(Error::DimensionMismatch(format!(
                "{} fill values for {} missing cells",
                values.len(),
                self.n_missing()
            )));
        }
        let mut y = self.y.clone();
        let mut it = values.iter();
        for slot in y.iter_mut() {
            if slot.is_none() {
                *slot = Some(*it.next().expect("length checked"));
            }
        }
        Self::new(self.x.clone(), self.z.clone(), y)
    }

    fn require_complete(&self) -> Result<Vec<u32>> {
        let missing = self.n_missing();
        if missing > 0 {
            return Err(Error::MissingResponses(missing));
        }
        Ok(self.observed())
    }

    fn check_params(&self, params: &ZipParams) -> Result<()> {
        if params.beta.len() != self.p_beta() || params.gamma.len() != self.p_gamma() {
            return Err(Error::DimensionMismatch(format!(
                "params of size ({}, {}) for designs of width ({}, {})",
                params.gamma.len(),
                params.beta.len(),
                self.p_gamma(),
                self.p_beta()
            )));
        }
        Ok(())
    }
}

// Per-row quantities shared by the likelihood, score and information.
struct CellTerms {
    pi: f64,
    lambda: f64,
    w: f64,      // exp(z'gamma), clamped predictor
    e_neg: f64,  // exp(-lambda)
    denom: f64,  // w + exp(-lambda)
    d: f64,      // realized zero indicator
    y: f64,
}

fn cell_terms(data: &ModelData, params: &ZipParams, i: usize, y: u32) -> CellTerms {
    let eta_z: f64 = data
        .z
        .row(i)
        .iter()
        .zip(params.gamma.iter())
        .map(|(a, b)| a * b)
        .sum::<f64>()
        .clamp(-PREDICTOR_CLAMP, PREDICTOR_CLAMP);
    let eta_x: f64 = data
        .x
        .row(i)
        .iter()
        .zip(params.beta.iter())
        .map(|(a, b)| a * b)
        .sum::<f64>()
        .clamp(-PREDICTOR_CLAMP, PREDICTOR_CLAMP);
    let w = eta_z.exp();
    let lambda = eta_x.exp();
    let e_neg = (-lambda).exp();
    CellTerms {
        pi: logistic(eta_z),
        lambda,
        w,
        e_neg,
        denom: w + e_neg,
        d: if y == 0 { 1.0 } else { 0.0 },
        y: f64::from(y),
    }
}

/// Complete-data log-likelihood of one time slice.
pub fn loglik(data: &ModelData, params: &ZipParams) -> Result<f64> {
    let y = data.require_complete()?;
    data.check_params(params)?;
    let mut total = 0.0;
    for (i, &yi) in y.iter().enumerate() {
        let t = cell_terms(data, params, i, yi);
        let cell = CellParams::new(t.pi, t.lambda).expect("links yield valid parameters");
        total += crate::dist::zip_log_pmf(yi, cell);
    }
    Ok(total)
}

/// Analytic score of the complete-data log-likelihood, stacked
/// (d/d gamma, d/d beta).
pub fn score(data: &ModelData, params: &ZipParams) -> Result<DVector<f64>> {
    let y = data.require_complete()?;
    data.check_params(params)?;
    let (p1, p2) = (data.p_gamma(), data.p_beta());
    let mut out = DVector::zeros(p1 + p2);
    for (i, &yi) in y.iter().enumerate() {
        let t = cell_terms(data, params, i, yi);
        let g_term = -t.pi + t.d * t.w / t.denom;
        let b_term = -t.d * t.lambda * t.e_neg / t.denom + (1.0 - t.d) * (t.y - t.lambda);
        for (j, zj) in data.z.row(i).iter().enumerate() {
            out[j] += zj * g_term;
        }
        for (j, xj) in data.x.row(i).iter().enumerate() {
            out[p1 + j] += xj * b_term;
        }
    }
    Ok(out)
}

/// Fisher information of one time slice, assembled from the four displayed
/// blocks with the realized zero indicators plugged in; equal to the
/// negative Hessian of [`loglik`]. Standard errors derived from it are
/// therefore observed-information based.
pub fn fisher_info(data: &ModelData, params: &ZipParams) -> Result<DMatrix<f64>> {
    let y = data.require_complete()?;
    data.check_params(params)?;
    let (p1, p2) = (data.p_gamma(), data.p_beta());
    let mut info = DMatrix::zeros(p1 + p2, p1 + p2);
    for (i, &yi) in y.iter().enumerate() {
        let t = cell_terms(data, params, i, yi);
        let s2 = t.denom * t.denom;
        let a = t.pi * (1.0 - t.pi) - t.d * t.w * t.e_neg / s2;
        let b = t.d * t.w * t.lambda * t.e_neg / s2;
        let c = (1.0 - t.d) * t.lambda
            + t.d * t.lambda * t.e_neg * (t.denom - t.w * t.lambda) / s2;
        let zi: Vec<f64> = data.z.row(i).iter().copied().collect();
        let xi: Vec<f64> = data.x.row(i).iter().copied().collect();
        for (j, &zj) in zi.iter().enumerate() {
            for (k, &zk) in zi.iter().enumerate() {
                info[(j, k)] += a * (zj * zk);
            }
            for (k, &xk) in xi.iter().enumerate() {
                info[(j, p1 + k)] += b * (zj * xk);
                info[(p1 + k, j)] += b * (zj * xk);
            }
        }
        for (j, &xj) in xi.iter().enumerate() {
            for (k, &xk) in xi.iter().enumerate() {
                info[(p1 + j, p1 + k)] += c * (xj * xk);
            }
        }
    }
    Ok(info)
}

/// Log of the ZIP mass for a candidate value under the linked parameters of
/// one covariate row.
pub fn row_log_pmf(row: &DesignRow, params: &ZipParams, y: u32) -> Result<f64> {
    let pi = link_pi(&row.z, &params.gamma)?;
    let lambda = link_lambda(&row.x, &params.beta)?;
    Ok(crate::dist::zip_log_pmf(
        y,
        CellParams::new(pi, lambda).expect("links yield valid parameters"),
    ))
}
