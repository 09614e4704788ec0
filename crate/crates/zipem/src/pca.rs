//! Principal components of a small set of response columns, used to
//! compress earlier times into one orthogonal covariate.

use crate::error::{Error, Result};
use nalgebra::{DMatrix, SymmetricEigen};

/// Leading principal-component scores of the input columns.
#[derive(Debug, Clone, PartialEq)]
pub struct PcaScores {
    /// One score column per retained component.
    pub scores: Vec<Vec<f64>>,
    /// Share of total variance carried by each retained component.
    pub variance_explained: Vec<f64>,
    /// Loadings of each retained component, sign-fixed so the
    /// largest-magnitude entry is positive.
    pub loadings: Vec<Vec<f64>>,
}

/// Center the columns, eigendecompose their sample covariance, and project
/// onto the leading `n_components` eigenvectors.
///
/// Requires at least two columns of equal length, none constant; the caller
/// is expected to have dropped degenerate columns first.
pub fn pca_scores(columns: &[Vec<f64>], n_components: usize) -> Result<PcaScores> {
    if columns.len() < 2 {
        return Err(Error::InvalidArgument(format!(
            "principal components need at least two columns, got {}",
            columns.len()
        )));
    }
    let n = columns[0].len();
    if n < 2 || columns.iter().any(|c| c.len() != n) {
        return Err(Error::InvalidArgument(
            "columns must share a length of at least two".into(),
        ));
    }
    if n_components == 0 || n_components > columns.len() {
        return Err(Error::InvalidArgument(format!(
            "cannot retain {n_components} components from {} columns",
            columns.len()
        )));
    }
    let p = columns.len();
    let mut centered = DMatrix::zeros(n, p);
    for (j, col) in columns.iter().enumerate() {
        let mean = col.iter().sum::<f64>() / n as f64;
        let var = col.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n as f64 - 1.0);
        if var < 1e-12 {
            return Err(Error::InvalidArgument(format!(
                "column {j} is constant; drop it before the decomposition"
            )));
        }
        for i in 0..n {
            centered[(i, j)] = columns[j][i] - mean;
        }
    }
    let cov = centered.transpose() * &centered / (n as f64 - 1.0);
    let eig = SymmetricEigen::new(cov);
    let total: f64 = eig.eigenvalues.iter().sum();
    let mut order: Vec<usize> = (0..p).collect();
    order.sort_by(|&a, &b| {
        eig.eigenvalues[b]
            .partial_cmp(&eig.eigenvalues[a])
            .expect("finite eigenvalues")
            .then(a.cmp(&b))
    });

    let mut scores = Vec::with_capacity(n_components);
    let mut variance_explained = Vec::with_capacity(n_components);
    let mut loadings = Vec::with_capacity(n_components);
    for &idx in order.iter().take(n_components) {
        let mut v: Vec<f64> = eig.eigenvectors.column(idx).iter().copied().collect();
        // fix the sign so the largest-magnitude loading is positive
        let lead = v
            .iter()
            .enumerate()
            .max_by(|(ai, a), (bi, b)| {
                a.abs()
                    .partial_cmp(&b.abs())
                    .expect("finite loadings")
                    .then(bi.cmp(ai))
            })
            .map(|(i, _)| i)
            .expect("non-empty eigenvector");
        if v[lead] < 0.0 {
            for e in v.iter_mut() {
                *e = -*e;
            }
        }
        let score: Vec<f64> = (0..n)
            .map(|i| (0..p).map(|j| centered[(i, j)] * v[j]).sum())
            .collect();
        scores.push(score);
        variance_explained.push(eig.eigenvalues[idx] / total);
        loadings.push(v);
    }
    Ok(PcaScores {
        scores,
        variance_explained,
        loadings,
    })
}
