//! Longitudinal panel storage and per-time design construction.
//!
//! Covariates are fully observed; only responses can be missing. When the
//! design for time `t` is built, completed responses of earlier times are
//! offered as an extra covariate: the single usable column raw, or the
//! leading principal component once two or more are usable. Columns that
//! are constant, nearly so, or collinear with a retained column are dropped
//! and recorded.

use crate::error::{Error, Result};
use crate::model::ModelData;
use crate::pca::pca_scores;
use nalgebra::DMatrix;

/// Rectangular `n x T` response grid with covariate rows for both model
/// parts. `None` marks a missing response; the observation mask is implied.
#[derive(Debug, Clone, PartialEq)]
pub struct PanelData {
    n_units: usize,
    n_times: usize,
    y: Vec<Vec<Option<u32>>>,
    base_x: Vec<Vec<Vec<f64>>>,
    base_z: Vec<Vec<Vec<f64>>>,
    x_labels: Vec<String>,
    z_labels: Vec<String>,
}

impl PanelData {
    pub fn new(
        y: Vec<Vec<Option<u32>>>,
        base_x: Vec<Vec<Vec<f64>>>,
        base_z: Vec<Vec<Vec<f64>>>,
        x_labels: Vec<String>,
        z_labels: Vec<String>,
    ) -> Result<Self> {
        let n_units = y.len();
        if n_units == 0 {
            return Err(Error::InvalidArgument("panel has no units".into()));
        }
        let n_times = y[0].len();
        if n_times == 0 {
            return Err(Error::InvalidArgument("panel has no times".into()));
        }
        if y.iter().any(|row| row.len() != n_times) {
            return Err(Error::DimensionMismatch("ragged response grid".into()));
        }
        for (label, grid, width) in [
            ("poisson", &base_x, x_labels.len()),
            ("zero", &base_z, z_labels.len()),
        ] {
            if grid.len() != n_units || grid.iter().any(|u| u.len() != n_times) {
                return Err(Error::DimensionMismatch(format!(
                    "{label} covariate grid does not match the response grid"
                )));
            }
            for unit in grid {
                for row in unit {
                    if row.len() != width {
                        return Err(Error::DimensionMismatch(format!(
                            "{label} covariate row width {} != {} labels",
                            row.len(),
                            width
                        )));
                    }
                    if row.iter().any(|v| !v.is_finite()) {
                        return Err(Error::InvalidArgument(
                            "covariates must be finite".into(),
                        ));
                    }
                    if row[0] != 1.0 {
                        return Err(Error::InvalidArgument(
                            "first covariate column must be the intercept".into(),
                        ));
                    }
                }
            }
        }
        Ok(Self {
            n_units,
            n_times,
            y,
            base_x,
            base_z,
            x_labels,
            z_labels,
        })
    }

    /// Panel whose covariates do not change over time.
    pub fn with_unit_covariates(
        y: Vec<Vec<Option<u32>>>,
        x_rows: Vec<Vec<f64>>,
        z_rows: Vec<Vec<f64>>,
        x_labels: Vec<String>,
        z_labels: Vec<String>,
    ) -> Result<Self> {
        let n_times = y.first().map(|r| r.len()).unwrap_or(0);
        let base_x = x_rows.into_iter().map(|r| vec![r; n_times]).collect();
        let base_z = z_rows.into_iter().map(|r| vec![r; n_times]).collect();
        Self::new(y, base_x, base_z, x_labels, z_labels)
    }

    pub fn n_units(&self) -> usize {
        self.n_units
    }

    pub fn n_times(&self) -> usize {
        self.n_times
    }

    pub fn value(&self, unit: usize, time: usize) -> Option<u32> {
        self.y[unit][time]
    }

    pub fn y(&self) -> &[Vec<Option<u32>>] {
        &self.y
    }

    pub fn x_labels(&self) -> &[String] {
        &self.x_labels
    }

    pub fn z_labels(&self) -> &[String] {
        &self.z_labels
    }

    pub fn base_x_row(&self, unit: usize, time: usize) -> &[f64] {
        &self.base_x[unit][time]
    }

    pub fn base_z_row(&self, unit: usize, time: usize) -> &[f64] {
        &self.base_z[unit][time]
    }

    pub fn observed_at_time(&self, time: usize) -> Vec<u32> {
        (0..self.n_units).filter_map(|i| self.y[i][time]).collect()
    }

    pub fn n_missing(&self) -> usize {
        self.y.iter().flatten().filter(|v| v.is_none()).count()
    }

    /// Missing (unit, time) cells in unit-major order.
    pub fn missing_cells(&self) -> Vec<(usize, usize)> {
        let mut cells = Vec::new();
        for i in 0..self.n_units {
            for t in 0..self.n_times {
                if self.y[i][t].is_none() {
                    cells.push((i, t));
                }
            }
        }
        cells
    }

    pub(crate) fn set_value(&mut self, unit: usize, time: usize, value: Option<u32>) {
        self.y[unit][time] = value;
    }

    /// Copy with the response grid replaced.
    pub fn with_responses(&self, y: Vec<Vec<Option<u32>>>) -> Result<Self> {
        Self::new(
            y,
            self.base_x.clone(),
            self.base_z.clone(),
            self.x_labels.clone(),
            self.z_labels.clone(),
        )
    }
}

/// How earlier times enter the design at one time point.
#[derive(Debug, Clone, PartialEq)]
pub enum PriorCovariate {
    /// No usable earlier column; base covariates only.
    None,
    /// The single usable earlier column, taken raw.
    Raw { time: usize },
    /// Leading principal component(s) of the non-constant earlier columns.
    Pca {
        times: Vec<usize>,
        variance_explained: f64,
    },
}

/// A column excluded from a time's design, with the reason.
#[derive(Debug, Clone, PartialEq)]
pub struct DroppedColumn {
    pub label: String,
    pub reason: String,
}

/// The effective model at one time point.
#[derive(Debug, Clone, PartialEq)]
pub struct TimeModelSpec {
    pub time: usize,
    pub x_labels: Vec<String>,
    pub z_labels: Vec<String>,
    pub prior: PriorCovariate,
    pub dropped: Vec<DroppedColumn>,
}

/// Options for design construction within the sequential pipeline.
#[derive(Debug, Clone, PartialEq)]
pub struct DesignOptions {
    /// Principal components retained when earlier times are compressed.
    pub n_components: usize,
    /// Reuse the Poisson design for the zero part (the default); otherwise
    /// the zero part keeps its own base columns plus the prior covariate.
    pub zero_design_from_x: bool,
}

impl Default for DesignOptions {
    fn default() -> Self {
        Self {
            n_components: 1,
            zero_design_from_x: true,
        }
    }
}

fn variance(col: &[f64]) -> f64 {
    let n = col.len() as f64;
    let mean = col.iter().sum::<f64>() / n;
    col.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0)
}

fn correlation(a: &[f64], b: &[f64]) -> f64 {
    let n = a.len() as f64;
    let ma = a.iter().sum::<f64>() / n;
    let mb = b.iter().sum::<f64>() / n;
    let mut cov = 0.0;
    let mut va = 0.0;
    let mut vb = 0.0;
    for i in 0..a.len() {
        cov += (a[i] - ma) * (b[i] - mb);
        va += (a[i] - ma).powi(2);
        vb += (b[i] - mb).powi(2);
    }
    if va <= 0.0 || vb <= 0.0 {
        return 0.0;
    }
    cov / (va.sqrt() * vb.sqrt())
}

/// Most frequent value, ties broken toward the smallest.
pub(crate) fn mode_smallest(values: &[u32]) -> u32 {
    let mut counts = std::collections::BTreeMap::new();
    for &v in values {
        *counts.entry(v).or_insert(0usize) += 1;
    }
    counts
        .iter()
        .max_by(|a, b| a.1.cmp(b.1).then(b.0.cmp(a.0)))
        .map(|(&v, _)| v)
        .expect("non-empty values")
}

// Entries that differ from the column's most frequent value. A column with
// fewer than two such entries separates the zero model and is useless as a
// raw covariate.
fn non_modal_count(col: &[u32]) -> usize {
    let mode = mode_smallest(col);
    col.iter().filter(|&&v| v != mode).count()
}

const CONSTANT_TOL: f64 = 1e-12;
const COLLINEAR_TOL: f64 = 0.999;

struct ColumnSet {
    labels: Vec<String>,
    columns: Vec<Vec<f64>>,
}

impl ColumnSet {
    fn push_checked(&mut self, label: String, col: Vec<f64>, dropped: &mut Vec<DroppedColumn>) -> bool {
        if variance(&col) < CONSTANT_TOL {
            dropped.push(DroppedColumn {
                label,
                reason: "constant".into(),
            });
            return false;
        }
        for (existing, name) in self.columns.iter().zip(&self.labels) {
            if correlation(existing, &col).abs() > COLLINEAR_TOL {
                dropped.push(DroppedColumn {
                    label,
                    reason: format!("collinear with {name}"),
                });
                return false;
            }
        }
        self.labels.push(label);
        self.columns.push(col);
        true
    }

    fn into_matrix(self, n: usize) -> DMatrix<f64> {
        DMatrix::from_fn(n, self.columns.len(), |i, j| self.columns[j][i])
    }
}

/// Assemble the design for time `t` from the base covariates and the
/// completed earlier columns (`completed[s]` is `Some` once time `s` has
/// been processed; skipped times stay `None` and are not offered).
pub fn build_time_design(
    panel: &PanelData,
    t: usize,
    completed: &[Option<Vec<u32>>],
    opts: &DesignOptions,
) -> Result<(ModelData, TimeModelSpec)> {
    let n = panel.n_units();
    let mut dropped = Vec::new();

    // base columns, intercept always first
    let mut x_set = ColumnSet {
        labels: vec![panel.x_labels()[0].clone()],
        columns: vec![vec![1.0; n]],
    };
    for j in 1..panel.x_labels().len() {
        let col: Vec<f64> = (0..n).map(|i| panel.base_x_row(i, t)[j]).collect();
        x_set.push_checked(panel.x_labels()[j].clone(), col, &mut dropped);
    }

    // earlier completed columns as prior-covariate candidates
    let mut candidates: Vec<(usize, Vec<u32>)> = Vec::new();
    for (s, col) in completed.iter().take(t).enumerate() {
        if let Some(col) = col {
            candidates.push((s, col.clone()));
        }
    }
    let mut non_constant: Vec<(usize, Vec<f64>, usize)> = Vec::new();
    for (s, col) in &candidates {
        let as_f64: Vec<f64> = col.iter().map(|&v| f64::from(v)).collect();
        if variance(&as_f64) < CONSTANT_TOL {
            dropped.push(DroppedColumn {
                label: format!("y{}", s + 1),
                reason: "constant".into(),
            });
        } else {
            non_constant.push((*s, as_f64, non_modal_count(col)));
        }
    }
    let usable: Vec<usize> = non_constant
        .iter()
        .filter(|(_, _, nm)| *nm >= 2)
        .map(|(s, _, _)| *s)
        .collect();

    let prior = if usable.len() >= 2 {
        // compress all non-constant earlier columns, the nearly-degenerate
        // ones included, into leading principal components
        let cols: Vec<Vec<f64>> = non_constant.iter().map(|(_, c, _)| c.clone()).collect();
        let times: Vec<usize> = non_constant.iter().map(|(s, _, _)| *s).collect();
        let n_comp = opts.n_components.min(cols.len());
        let pca = pca_scores(&cols, n_comp)?;
        let mut kept_any = false;
        for (c, score) in pca.scores.iter().enumerate() {
            kept_any |= x_set.push_checked(format!("pc{}", c + 1), score.clone(), &mut dropped);
        }
        if kept_any {
            PriorCovariate::Pca {
                times,
                variance_explained: pca.variance_explained.iter().sum(),
            }
        } else {
            PriorCovariate::None
        }
    } else if usable.len() == 1 {
        let s = usable[0];
        for (other, _, nm) in &non_constant {
            if *other != s && *nm < 2 {
                dropped.push(DroppedColumn {
                    label: format!("y{}", other + 1),
                    reason: "nearly constant (a single entry differs)".into(),
                });
            }
        }
        let col = non_constant
            .iter()
            .find(|(c, _, _)| *c == s)
            .map(|(_, c, _)| c.clone())
            .expect("usable column present");
        if x_set.push_checked(format!("y{}", s + 1), col, &mut dropped) {
            PriorCovariate::Raw { time: s }
        } else {
            PriorCovariate::None
        }
    } else {
        for (s, _, nm) in &non_constant {
            if *nm < 2 {
                dropped.push(DroppedColumn {
                    label: format!("y{}", s + 1),
                    reason: "nearly constant (a single entry differs)".into(),
                });
            }
        }
        PriorCovariate::None
    };

    let x_labels = x_set.labels.clone();
    let x = x_set.into_matrix(n);
    if x.ncols() == 0 {
        return Err(Error::DegenerateDesign {
            time: t,
            reason: "no usable design columns".into(),
        });
    }

    let (z, z_labels) = if opts.zero_design_from_x {
        (x.clone(), x_labels.clone())
    } else {
        let mut z_set = ColumnSet {
            labels: vec![panel.z_labels()[0].clone()],
            columns: vec![vec![1.0; n]],
        };
        for j in 1..panel.z_labels().len() {
            let col: Vec<f64> = (0..n).map(|i| panel.base_z_row(i, t)[j]).collect();
            z_set.push_checked(panel.z_labels()[j].clone(), col, &mut dropped);
        }
        // offer the same prior column(s) chosen for the Poisson part
        for (label, col) in x_labels.iter().zip(0..x.ncols()) {
            if label.starts_with("pc") || label.starts_with('y') {
                let column: Vec<f64> = (0..n).map(|i| x[(i, col)]).collect();
                z_set.push_checked(label.clone(), column, &mut dropped);
            }
        }
        let labels = z_set.labels.clone();
        (z_set.into_matrix(n), labels)
    };

    let y: Vec<Option<u32>> = (0..n).map(|i| panel.value(i, t)).collect();
    let data = ModelData::new(x, z, y)?;
    let spec = TimeModelSpec {
        time: t,
        x_labels,
        z_labels,
        prior,
        dropped,
    };
    Ok((data, spec))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small_panel(y: Vec<Vec<Option<u32>>>) -> PanelData {
        let n = y.len();
        let x_rows: Vec<Vec<f64>> = (0..n)
            .map(|i| vec![1.0, if i >= n / 2 { 1.0 } else { 0.0 }])
            .collect();
        PanelData::with_unit_covariates(
            y,
            x_rows.clone(),
            x_rows,
            vec!["intercept".into(), "treat2".into()],
            vec!["intercept".into(), "treat2".into()],
        )
        .unwrap()
    }

    #[test]
    fn first_time_uses_base_design_only() {
        let panel = small_panel(vec![
            vec![Some(0), Some(1)],
            vec![Some(2), Some(0)],
            vec![Some(1), Some(3)],
            vec![Some(0), Some(2)],
        ]);
        let (data, spec) = build_time_design(&panel, 0, &[], &DesignOptions::default()).unwrap();
        assert_eq!(spec.prior, PriorCovariate::None);
        assert_eq!(data.p_beta(), 2);
        assert_eq!(spec.x_labels, vec!["intercept", "treat2"]);
    }

    #[test]
    fn second_time_appends_previous_column_raw() {
        let panel = small_panel(vec![
            vec![Some(0), Some(1)],
            vec![Some(2), Some(0)],
            vec![Some(1), Some(3)],
            vec![Some(0), Some(2)],
        ]);
        let completed = vec![Some(vec![0, 2, 1, 0])];
        let (data, spec) =
            build_time_design(&panel, 1, &completed, &DesignOptions::default()).unwrap();
        assert_eq!(spec.prior, PriorCovariate::Raw { time: 0 });
        assert_eq!(data.p_beta(), 3);
        assert_eq!(data.x()[(1, 2)], 2.0);
    }

    #[test]
    fn constant_prior_column_is_dropped() {
        let panel = small_panel(vec![
            vec![Some(0), Some(1)],
            vec![Some(0), Some(0)],
            vec![Some(0), Some(3)],
            vec![Some(0), Some(2)],
        ]);
        let completed = vec![Some(vec![0, 0, 0, 0])];
        let (data, spec) =
            build_time_design(&panel, 1, &completed, &DesignOptions::default()).unwrap();
        assert_eq!(spec.prior, PriorCovariate::None);
        assert_eq!(data.p_beta(), 2);
        assert!(spec
            .dropped
            .iter()
            .any(|d| d.label == "y1" && d.reason == "constant"));
    }

    #[test]
    fn nearly_constant_prior_column_is_not_used_raw() {
        // one non-modal entry: would separate the zero model
        let panel = small_panel(vec![
            vec![Some(0), Some(1)],
            vec![Some(0), Some(0)],
            vec![Some(1), Some(3)],
            vec![Some(0), Some(2)],
        ]);
        let completed = vec![Some(vec![0, 0, 1, 0])];
        let (data, spec) =
            build_time_design(&panel, 1, &completed, &DesignOptions::default()).unwrap();
        assert_eq!(spec.prior, PriorCovariate::None);
        assert_eq!(data.p_beta(), 2);
        assert!(spec.dropped.iter().any(|d| d.label == "y1"));
    }

    #[test]
    fn later_time_compresses_usable_priors_with_pca() {
        let panel = small_panel(vec![
            vec![Some(0), Some(1), Some(0)],
            vec![Some(2), Some(0), Some(1)],
            vec![Some(1), Some(3), Some(4)],
            vec![Some(0), Some(2), Some(2)],
        ]);
        let completed = vec![Some(vec![0, 2, 1, 0]), Some(vec![1, 0, 3, 2])];
        let (data, spec) =
            build_time_design(&panel, 2, &completed, &DesignOptions::default()).unwrap();
        match &spec.prior {
            PriorCovariate::Pca {
                times,
                variance_explained,
            } => {
                assert_eq!(times, &vec![0, 1]);
                assert!(*variance_explained > 0.5 && *variance_explained <= 1.0);
            }
            other => panic!("expected PCA prior, got {other:?}"),
        }
        assert_eq!(data.p_beta(), 3);
        assert!(spec.x_labels.contains(&"pc1".to_string()));
    }

    #[test]
    fn nearly_constant_column_still_feeds_pca() {
        // two usable priors trigger PCA; the nearly-constant one rides along
        let panel = small_panel(vec![
            vec![Some(0), Some(1), Some(0), Some(1)],
            vec![Some(2), Some(0), Some(1), Some(0)],
            vec![Some(1), Some(3), Some(4), Some(2)],
            vec![Some(0), Some(2), Some(2), Some(1)],
        ]);
        let completed = vec![
            Some(vec![0, 0, 1, 0]), // nearly constant
            Some(vec![1, 0, 3, 2]),
            Some(vec![0, 1, 4, 2]),
        ];
        let (_, spec) =
            build_time_design(&panel, 3, &completed, &DesignOptions::default()).unwrap();
        match &spec.prior {
            PriorCovariate::Pca { times, .. } => assert_eq!(times, &vec![0, 1, 2]),
            other => panic!("expected PCA prior, got {other:?}"),
        }
    }

    #[test]
    fn skipped_times_are_not_offered() {
        let panel = small_panel(vec![
            vec![Some(0), Some(1), Some(0)],
            vec![Some(2), Some(0), Some(1)],
            vec![Some(1), Some(3), Some(4)],
            vec![Some(0), Some(2), Some(2)],
        ]);
        let completed = vec![None, Some(vec![1, 0, 3, 2])];
        let (_, spec) =
            build_time_design(&panel, 2, &completed, &DesignOptions::default()).unwrap();
        assert_eq!(spec.prior, PriorCovariate::Raw { time: 1 });
    }

    #[test]
    fn collinear_base_column_is_dropped() {
        let y = vec![
            vec![Some(0)],
            vec![Some(2)],
            vec![Some(1)],
            vec![Some(0)],
        ];
        let x_rows: Vec<Vec<f64>> = (0..4)
            .map(|i| {
                let d = if i >= 2 { 1.0 } else { 0.0 };
                vec![1.0, d, 2.0 * d]
            })
            .collect();
        let panel = PanelData::with_unit_covariates(
            y,
            x_rows.clone(),
            x_rows,
            vec!["intercept".into(), "a".into(), "b".into()],
            vec!["intercept".into(), "a".into(), "b".into()],
        )
        .unwrap();
        let (data, spec) = build_time_design(&panel, 0, &[], &DesignOptions::default()).unwrap();
        assert_eq!(data.p_beta(), 2);
        assert!(spec
            .dropped
            .iter()
            .any(|d| d.label == "b" && d.reason.contains("collinear")));
    }

    #[test]
    fn panel_validation_rejects_bad_shapes() {
        assert!(PanelData::with_unit_covariates(
            vec![vec![Some(1)], vec![Some(1), Some(2)]],
            vec![vec![1.0]; 2],
            vec![vec![1.0]; 2],
            vec!["intercept".into()],
            vec!["intercept".into()],
        )
        .is_err());
        // intercept must lead
        assert!(PanelData::with_unit_covariates(
            vec![vec![Some(1)]],
            vec![vec![0.5]],
            vec![vec![1.0]],
            vec!["x".into()],
            vec!["intercept".into()],
        )
        .is_err());
    }
}
