//! Panel file formats and report emission.
//!
//! The wide format mirrors the corn study layout: one row per unit,
//! response columns `We1..WeT`, a trailing integer `Treat` column, blank
//! fields for missing responses. The long format carries one row per cell
//! (`unit,time,y,covariate...`). All numeric output uses '.' decimals and
//! shortest round-trip float formatting, so a rerun reproduces files byte
//! for byte. Units and times are 1-based in every emitted file.

use crate::em::CellWeights;
use crate::error::{Error, Result};
use crate::fit::FitResult;
use crate::impute::ImputationDecision;
use crate::model::ModelData;
use crate::panel::{PanelData, PriorCovariate};
use crate::pipeline::PipelineResult;
use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, Normal};
use std::path::Path;

/// Panel file encodings accepted by [`read_panel`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum PanelFormat {
    Wide,
    Long,
}

/// Wide-format panel: responses per unit and week plus treatment codes.
#[derive(Debug, Clone, PartialEq)]
pub struct WidePanel {
    pub responses: Vec<Vec<Option<u32>>>,
    pub treat: Vec<i64>,
}

impl WidePanel {
    pub fn n_units(&self) -> usize {
        self.responses.len()
    }

    pub fn n_times(&self) -> usize {
        self.responses.first().map(|r| r.len()).unwrap_or(0)
    }

    /// Sorted distinct treatment codes; the smallest is the reference level.
    pub fn levels(&self) -> Vec<i64> {
        let mut levels: Vec<i64> = self.treat.clone();
        levels.sort_unstable();
        levels.dedup();
        levels
    }

    /// Dummy-coded covariate row (intercept first) for one unit.
    fn dummy_row(&self, unit: usize, levels: &[i64]) -> Vec<f64> {
        let mut row = vec![1.0];
        for &level in &levels[1..] {
            row.push(if self.treat[unit] == level { 1.0 } else { 0.0 });
        }
        row
    }

    fn dummy_labels(levels: &[i64]) -> Vec<String> {
        let mut labels = vec!["intercept".to_string()];
        for &level in &levels[1..] {
            labels.push(format!("treat{level}"));
        }
        labels
    }

    /// Panel with per-time designs of intercept plus treatment dummies.
    pub fn to_panel(&self) -> Result<PanelData> {
        let levels = self.levels();
        let rows: Vec<Vec<f64>> = (0..self.n_units())
            .map(|i| self.dummy_row(i, &levels))
            .collect();
        let labels = Self::dummy_labels(&levels);
        PanelData::with_unit_covariates(
            self.responses.clone(),
            rows.clone(),
            rows,
            labels.clone(),
            labels,
        )
    }

    /// Pooled regression data over all observed cells, both parts sharing
    /// intercept, treatment dummies and (optionally) a linear week term.
    pub fn pooled_model(&self, time_trend: bool) -> Result<(ModelData, Vec<String>)> {
        let levels = self.levels();
        let mut labels = Self::dummy_labels(&levels);
        if time_trend {
            labels.push("week".to_string());
        }
        let mut rows: Vec<Vec<f64>> = Vec::new();
        let mut y = Vec::new();
        for i in 0..self.n_units() {
            let base = self.dummy_row(i, &levels);
            for t in 0..self.n_times() {
                if let Some(v) = self.responses[i][t] {
                    let mut row = base.clone();
                    if time_trend {
                        row.push((t + 1) as f64);
                    }
                    rows.push(row);
                    y.push(v);
                }
            }
        }
        let p = labels.len();
        let x = DMatrix::from_fn(rows.len(), p, |i, j| rows[i][j]);
        let z = x.clone();
        Ok((ModelData::complete(x, z, y)?, labels))
    }

    /// Same panel with its responses replaced (e.g. by a completed grid).
    pub fn with_responses(&self, responses: Vec<Vec<Option<u32>>>) -> Self {
        Self {
            responses,
            treat: self.treat.clone(),
        }
    }
}

/// Parse a wide-format panel from CSV text.
pub fn read_panel_wide(text: &str) -> Result<WidePanel> {
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(true)
        .from_reader(text.as_bytes());
    let headers = reader
        .headers()
        .map_err(|e| csv_error(e, 1))?
        .clone();
    let n_cols = headers.len();
    if n_cols < 2 || headers.get(n_cols - 1) != Some("Treat") {
        return Err(Error::Parse {
            line: 1,
            message: "wide header must be We1,..,WeT,Treat".into(),
        });
    }
    for (j, name) in headers.iter().take(n_cols - 1).enumerate() {
        if name != format!("We{}", j + 1) {
            return Err(Error::Parse {
                line: 1,
                message: format!("expected column We{}, found {name}", j + 1),
            });
        }
    }
    let mut responses = Vec::new();
    let mut treat = Vec::new();
    for (idx, record) in reader.records().enumerate() {
        let line = idx + 2;
        let record = record.map_err(|e| csv_error(e, line))?;
        if record.len() != n_cols {
            return Err(Error::Parse {
                line,
                message: format!("expected {n_cols} fields, found {}", record.len()),
            });
        }
        let mut row = Vec::with_capacity(n_cols - 1);
        for j in 0..n_cols - 1 {
            row.push(parse_response(record.get(j).unwrap_or(""), line)?);
        }
        let t: i64 = record
            .get(n_cols - 1)
            .unwrap_or("")
            .trim()
            .parse()
            .map_err(|_| Error::Parse {
                line,
                message: "treatment code must be an integer".into(),
            })?;
        responses.push(row);
        treat.push(t);
    }
    if responses.is_empty() {
        return Err(Error::Parse {
            line: 1,
            message: "no data rows".into(),
        });
    }
    Ok(WidePanel { responses, treat })
}

fn parse_response(field: &str, line: usize) -> Result<Option<u32>> {
    let trimmed = field.trim();
    if trimmed.is_empty() {
        return Ok(None);
    }
    match trimmed.parse::<i64>() {
        Ok(v) if v >= 0 && v <= i64::from(u32::MAX) => Ok(Some(v as u32)),
        Ok(v) => Err(Error::Parse {
            line,
            message: format!("response must be a nonnegative count, got {v}"),
        }),
        Err(_) => Err(Error::Parse {
            line,
            message: format!("malformed response '{trimmed}'"),
        }),
    }
}

fn csv_error(e: csv::Error, fallback_line: usize) -> Error {
    let line = e
        .position()
        .map(|p| p.line() as usize)
        .unwrap_or(fallback_line);
    Error::Parse {
        line,
        message: e.to_string(),
    }
}

/// Canonical wide-format CSV: `We1..WeT,Treat` header, blank for missing,
/// `\n` line endings, trailing newline.
pub fn write_panel_wide(panel: &WidePanel) -> String {
    let t_len = panel.n_times();
    let mut out = String::new();
    for t in 0..t_len {
        out.push_str(&format!("We{}", t + 1));
        out.push(',');
    }
    out.push_str("Treat\n");
    for (row, treat) in panel.responses.iter().zip(&panel.treat) {
        for v in row {
            if let Some(v) = v {
                out.push_str(&v.to_string());
            }
            out.push(',');
        }
        out.push_str(&treat.to_string());
        out.push('\n');
    }
    out
}

/// Parse a long-format panel (`unit,time,y,covariate...`). Every
/// (unit, time) pair must appear exactly once; covariates are shared by
/// both model parts and an intercept is prepended.
pub fn read_panel_long(text: &str) -> Result<PanelData> {
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(true)
        .from_reader(text.as_bytes());
    let headers = reader.headers().map_err(|e| csv_error(e, 1))?.clone();
    if headers.len() < 3
        || headers.get(0) != Some("unit")
        || headers.get(1) != Some("time")
        || headers.get(2) != Some("y")
    {
        return Err(Error::Parse {
            line: 1,
            message: "long header must start with unit,time,y".into(),
        });
    }
    let cov_names: Vec<String> = headers.iter().skip(3).map(str::to_string).collect();
    struct LongRow {
        unit: i64,
        time: usize,
        y: Option<u32>,
        covs: Vec<f64>,
    }
    let mut rows = Vec::new();
    for (idx, record) in reader.records().enumerate() {
        let line = idx + 2;
        let record = record.map_err(|e| csv_error(e, line))?;
        if record.len() != headers.len() {
            return Err(Error::Parse {
                line,
                message: format!("expected {} fields, found {}", headers.len(), record.len()),
            });
        }
        let unit: i64 = record.get(0).unwrap().trim().parse().map_err(|_| Error::Parse {
            line,
            message: "unit must be an integer".into(),
        })?;
        let time: usize = record.get(1).unwrap().trim().parse().map_err(|_| Error::Parse {
            line,
            message: "time must be a positive integer".into(),
        })?;
        if time == 0 {
            return Err(Error::Parse {
                line,
                message: "time is 1-based".into(),
            });
        }
        let y = parse_response(record.get(2).unwrap_or(""), line)?;
        let covs: Vec<f64> = record
            .iter()
            .skip(3)
            .map(|f| {
                f.trim().parse::<f64>().map_err(|_| Error::Parse {
                    line,
                    message: format!("malformed covariate '{f}'"),
                })
            })
            .collect::<Result<_>>()?;
        rows.push(LongRow {
            unit,
            time: time - 1,
            y,
            covs,
        });
    }
    if rows.is_empty() {
        return Err(Error::Parse {
            line: 1,
            message: "no data rows".into(),
        });
    }
    let mut units: Vec<i64> = rows.iter().map(|r| r.unit).collect();
    units.sort_unstable();
    units.dedup();
    let n_times = rows.iter().map(|r| r.time).max().unwrap() + 1;
    let unit_index = |u: i64| units.binary_search(&u).expect("unit present");

    let mut y_grid = vec![vec![None; n_times]; units.len()];
    let mut seen = vec![vec![false; n_times]; units.len()];
    let mut x_grid = vec![vec![Vec::new(); n_times]; units.len()];
    for r in &rows {
        let i = unit_index(r.unit);
        if seen[i][r.time] {
            return Err(Error::Parse {
                line: 1,
                message: format!("duplicate (unit, time) = ({}, {})", r.unit, r.time + 1),
            });
        }
        seen[i][r.time] = true;
        y_grid[i][r.time] = r.y;
        let mut row = vec![1.0];
        row.extend_from_slice(&r.covs);
        x_grid[i][r.time] = row;
    }
    if seen.iter().flatten().any(|&s| !s) {
        return Err(Error::Parse {
            line: 1,
            message: "incomplete grid: every (unit, time) needs a row because covariates must be observed".into(),
        });
    }
    let mut labels = vec!["intercept".to_string()];
    labels.extend(cov_names);
    PanelData::new(y_grid, x_grid.clone(), x_grid, labels.clone(), labels)
}

/// Pooled regression data over all observed cells of a panel, using the
/// per-time base covariates plus an optional linear week term in both
/// parts.
pub fn pooled_from_panel(
    panel: &PanelData,
    time_trend: bool,
) -> Result<(ModelData, Vec<String>, Vec<String>)> {
    let mut x_rows = Vec::new();
    let mut z_rows = Vec::new();
    let mut y = Vec::new();
    for i in 0..panel.n_units() {
        for t in 0..panel.n_times() {
            if let Some(v) = panel.value(i, t) {
                let mut xr = panel.base_x_row(i, t).to_vec();
                let mut zr = panel.base_z_row(i, t).to_vec();
                if time_trend {
                    xr.push(t as f64 + 1.0);
                    zr.push(t as f64 + 1.0);
                }
                x_rows.push(xr);
                z_rows.push(zr);
                y.push(v);
            }
        }
    }
    let mut x_labels = panel.x_labels().to_vec();
    let mut z_labels = panel.z_labels().to_vec();
    if time_trend {
        x_labels.push("week".into());
        z_labels.push("week".into());
    }
    let x = DMatrix::from_fn(x_rows.len(), x_labels.len(), |i, j| x_rows[i][j]);
    let z = DMatrix::from_fn(z_rows.len(), z_labels.len(), |i, j| z_rows[i][j]);
    Ok((ModelData::complete(x, z, y)?, x_labels, z_labels))
}

/// Read a panel file in the given format.
pub fn read_panel(path: &Path, format: PanelFormat) -> Result<PanelData> {
    let text = std::fs::read_to_string(path)?;
    match format {
        PanelFormat::Wide => read_panel_wide(&text)?.to_panel(),
        PanelFormat::Long => read_panel_long(&text),
    }
}

/// One line of a coefficient table.
#[derive(Debug, Clone, Serialize)]
pub struct CoefficientRow {
    pub name: String,
    pub estimate: f64,
    pub std_error: f64,
    pub z_value: f64,
    pub p_value: f64,
}

/// JSON-ready summary of one fit.
#[derive(Debug, Clone, Serialize)]
pub struct FitReport {
    pub poisson: Vec<CoefficientRow>,
    pub zero: Vec<CoefficientRow>,
    pub loglik: f64,
    pub iterations: usize,
    pub converged: bool,
    pub separation_flag: bool,
}

fn coefficient_rows(
    names: &[String],
    estimates: &[f64],
    std_errors: &[f64],
) -> Vec<CoefficientRow> {
    let normal = Normal::standard();
    names
        .iter()
        .zip(estimates.iter().zip(std_errors))
        .map(|(name, (&est, &se))| {
            let z = est / se;
            let p = 2.0 * (1.0 - normal.cdf(z.abs()));
            CoefficientRow {
                name: name.clone(),
                estimate: est,
                std_error: se,
                z_value: z,
                p_value: p,
            }
        })
        .collect()
}

/// Summarize a fit; the information is laid out zero part first, so the
/// standard errors split at `p_gamma`.
pub fn fit_report(fit: &FitResult, x_labels: &[String], z_labels: &[String]) -> FitReport {
    let p1 = fit.params.gamma.len();
    let gamma_se: Vec<f64> = fit.std_errors.iter().take(p1).copied().collect();
    let beta_se: Vec<f64> = fit.std_errors.iter().skip(p1).copied().collect();
    let beta: Vec<f64> = fit.params.beta.iter().copied().collect();
    let gamma: Vec<f64> = fit.params.gamma.iter().copied().collect();
    FitReport {
        poisson: coefficient_rows(x_labels, &beta, &beta_se),
        zero: coefficient_rows(z_labels, &gamma, &gamma_se),
        loglik: fit.loglik,
        iterations: fit.iterations,
        converged: fit.converged,
        separation_flag: fit.separation_flag,
    }
}

/// Plain-text coefficient tables in the usual GLM layout.
pub fn render_fit_table(report: &FitReport) -> String {
    let mut out = String::new();
    for (title, rows) in [("Poisson model", &report.poisson), ("Zero excess model", &report.zero)] {
        out.push_str(&format!("{title}\n"));
        out.push_str(&format!(
            "{:<12}{:>12}{:>12}{:>10}{:>10}\n",
            "", "Estimate", "Std. Error", "z value", "Pr(>|z|)"
        ));
        for r in rows {
            out.push_str(&format!(
                "{:<12}{:>12.3}{:>12.3}{:>10.3}{:>10.3}\n",
                r.name, r.estimate, r.std_error, r.z_value, r.p_value
            ));
        }
    }
    out.push_str(&format!(
        "loglik {:.4}  iterations {}  converged {}  separation {}\n",
        report.loglik, report.iterations, report.converged, report.separation_flag
    ));
    out
}

/// Per-time entry of the pipeline report.
#[derive(Debug, Clone, Serialize)]
pub struct TimeReport {
    /// 1-based time index.
    pub time: usize,
    pub prior: String,
    pub variance_explained: Option<f64>,
    pub dropped: Vec<DroppedColumnReport>,
    pub n_missing: usize,
    pub step1: FitReport,
    pub step2: FitReport,
    pub step2_cycles: usize,
}

#[derive(Debug, Clone, Serialize)]
pub struct DroppedColumnReport {
    pub label: String,
    pub reason: String,
}

/// JSON-ready summary of a pipeline run.
#[derive(Debug, Clone, Serialize)]
pub struct PipelineReport {
    pub times: Vec<TimeReport>,
    /// 1-based indices of times skipped for lack of observed responses.
    pub skipped_times: Vec<usize>,
    pub n_imputed: usize,
    /// Exact-match rate against ground truth, when supplied.
    pub success_rate: Option<f64>,
}

pub fn pipeline_report(result: &PipelineResult, truth: Option<&[Vec<u32>]>) -> PipelineReport {
    let times = result
        .times
        .iter()
        .map(|t| {
            let (prior, ve) = match &t.spec.prior {
                PriorCovariate::None => ("none".to_string(), None),
                PriorCovariate::Raw { time } => (format!("raw:y{}", time + 1), None),
                PriorCovariate::Pca {
                    times,
                    variance_explained,
                } => (
                    format!(
                        "pca:{}",
                        times
                            .iter()
                            .map(|s| format!("y{}", s + 1))
                            .collect::<Vec<_>>()
                            .join("+")
                    ),
                    Some(*variance_explained),
                ),
            };
            TimeReport {
                time: t.time + 1,
                prior,
                variance_explained: ve,
                dropped: t
                    .spec
                    .dropped
                    .iter()
                    .map(|d| DroppedColumnReport {
                        label: d.label.clone(),
                        reason: d.reason.clone(),
                    })
                    .collect(),
                n_missing: t.decisions.len(),
                step1: fit_report(&t.step1, &t.spec.x_labels, &t.spec.z_labels),
                step2: fit_report(&t.step2, &t.spec.x_labels, &t.spec.z_labels),
                step2_cycles: t.step2_cycles,
            }
        })
        .collect();
    PipelineReport {
        times,
        skipped_times: result.skipped_times.iter().map(|t| t + 1).collect(),
        n_imputed: result.decisions().count(),
        success_rate: truth.and_then(|g| result.success_rate(g)),
    }
}

/// Imputation trace CSV: `unit,time,pi_hat,lambda_hat,p0,imputed`,
/// unit and time 1-based.
pub fn trace_csv<'a>(decisions: impl Iterator<Item = &'a ImputationDecision>) -> String {
    let mut out = String::from("unit,time,pi_hat,lambda_hat,p0,imputed\n");
    for d in decisions {
        out.push_str(&format!(
            "{},{},{},{},{},{}\n",
            d.unit + 1,
            d.time + 1,
            d.pi_hat,
            d.lambda_hat,
            d.p0,
            d.imputed
        ));
    }
    out
}

/// Candidate-weight table CSV: `unit,time,k,weight`, unit and time 1-based.
pub fn weights_csv<'a>(weights: impl Iterator<Item = &'a CellWeights>) -> String {
    let mut out = String::from("unit,time,k,weight\n");
    for cw in weights {
        for (k, w) in cw.w.iter().enumerate() {
            out.push_str(&format!("{},{},{},{}\n", cw.unit + 1, cw.time + 1, k, w));
        }
    }
    out
}

/// Long-format panel CSV (`unit,time,y,covariate...`), reconstructed from
/// the base Poisson covariates without the intercept column.
pub fn write_panel_long(panel: &PanelData) -> String {
    let mut out = String::from("unit,time,y");
    for label in panel.x_labels().iter().skip(1) {
        out.push(',');
        out.push_str(label);
    }
    out.push('\n');
    for i in 0..panel.n_units() {
        for t in 0..panel.n_times() {
            out.push_str(&format!("{},{},", i + 1, t + 1));
            if let Some(v) = panel.value(i, t) {
                out.push_str(&v.to_string());
            }
            for v in panel.base_x_row(i, t).iter().skip(1) {
                out.push_str(&format!(",{v}"));
            }
            out.push('\n');
        }
    }
    out
}

/// Per-replicate coefficient estimates: `replicate,model,coefficient,estimate`.
pub fn comparison_estimates_csv(report: &crate::sim::ComparisonReport) -> String {
    let mut out = String::from("replicate,model,coefficient,estimate\n");
    for rec in &report.per_replicate {
        let models: [(&str, &Option<Vec<f64>>); 4] = [
            ("complete", &rec.complete),
            ("missing", &rec.missing),
            ("mode", &rec.mode),
            ("em", &rec.em),
        ];
        for (model, est) in models {
            if let Some(est) = est {
                for (name, value) in crate::sim::SIM_COEFFICIENTS.iter().zip(est) {
                    out.push_str(&format!("{},{model},{name},{value}\n", rec.replicate));
                }
            }
        }
    }
    out
}

/// Per-replicate imputation metrics: `replicate,model,mae,success_rate`.
pub fn comparison_metrics_csv(report: &crate::sim::ComparisonReport) -> String {
    let mut out = String::from("replicate,model,mae,success_rate\n");
    let fmt = |v: Option<f64>| v.map(|x| x.to_string()).unwrap_or_default();
    for rec in &report.per_replicate {
        out.push_str(&format!(
            "{},mode,{},\n",
            rec.replicate,
            fmt(rec.mae_mode),
        ));
        out.push_str(&format!(
            "{},em,{},{}\n",
            rec.replicate,
            fmt(rec.mae_em),
            fmt(rec.success_rate),
        ));
    }
    out
}

/// Plot-ready long-format CSV over a sweep of simulation cells:
/// `pi,alpha,n,model,metric,value`.
pub fn grid_long_csv(cells: &[crate::sim::ComparisonReport]) -> String {
    let mut out = String::from("pi,alpha,n,model,metric,value\n");
    for rep in cells {
        let key = format!(
            "{},{},{}",
            rep.config.pi_target, rep.config.alpha, rep.config.n_per_treatment
        );
        if let Some(v) = rep.mae_em {
            out.push_str(&format!("{key},em,mae,{v}\n"));
        }
        if let Some(v) = rep.mae_mode {
            out.push_str(&format!("{key},mode,mae,{v}\n"));
        }
        if let Some(v) = rep.success_rate {
            out.push_str(&format!("{key},em,success_rate,{v}\n"));
        }
        for mb in &rep.bias {
            for c in &mb.coefficients {
                if c.bias.is_finite() {
                    out.push_str(&format!(
                        "{key},{},bias_{},{}\n",
                        mb.model, c.name, c.bias
                    ));
                }
            }
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corn::{corn_fixed_loss_panel, corn_panel, CORN_WIDE_CSV};

    #[test]
    fn corn_reads_with_full_grid() {
        let panel = corn_panel().to_panel().unwrap();
        assert_eq!(panel.n_units(), 24);
        assert_eq!(panel.n_times(), 9);
        assert_eq!(panel.n_missing(), 0);
        assert_eq!(panel.x_labels(), &["intercept", "treat2", "treat3"]);
    }

    #[test]
    fn fixed_loss_fixture_counts_blanks() {
        let wide = corn_fixed_loss_panel();
        let panel = wide.to_panel().unwrap();
        assert_eq!(panel.n_missing(), 36);
    }

    #[test]
    fn wide_round_trip_is_byte_identical() {
        let wide = read_panel_wide(CORN_WIDE_CSV).unwrap();
        assert_eq!(write_panel_wide(&wide), CORN_WIDE_CSV);
        // and for a file with blanks
        let blanked = write_panel_wide(&corn_fixed_loss_panel());
        let reread = read_panel_wide(&blanked).unwrap();
        assert_eq!(write_panel_wide(&reread), blanked);
    }

    #[test]
    fn wide_rejects_malformed_input() {
        assert!(matches!(
            read_panel_wide(""),
            Err(Error::Parse { .. })
        ));
        let bad_header = "We1,Weird,Treat\n0,1,1\n";
        assert!(read_panel_wide(bad_header).is_err());
        let negative = "We1,We2,Treat\n0,-3,1\n";
        match read_panel_wide(negative) {
            Err(Error::Parse { line, .. }) => assert_eq!(line, 2),
            other => panic!("expected parse error, got {other:?}"),
        }
        let ragged = "We1,We2,Treat\n0,1,1\n0,1\n";
        match read_panel_wide(ragged) {
            Err(Error::Parse { line, .. }) => assert_eq!(line, 3),
            other => panic!("expected parse error, got {other:?}"),
        }
        let text = "We1,We2,Treat\n0,2.5,1\n";
        assert!(read_panel_wide(text).is_err());
    }

    #[test]
    fn long_format_round_trips_shape() {
        let text = "\
unit,time,y,dose
1,1,0,0.5
1,2,,0.5
2,1,3,1.5
2,2,1,1.5
";
        let panel = read_panel_long(text).unwrap();
        assert_eq!(panel.n_units(), 2);
        assert_eq!(panel.n_times(), 2);
        assert_eq!(panel.value(0, 1), None);
        assert_eq!(panel.value(1, 0), Some(3));
        assert_eq!(panel.x_labels(), &["intercept", "dose"]);
        assert_eq!(panel.base_x_row(1, 0), &[1.0, 1.5]);
    }

    #[test]
    fn long_format_rejects_duplicates_and_holes() {
        let dup = "unit,time,y\n1,1,0\n1,1,2\n";
        assert!(read_panel_long(dup).is_err());
        let hole = "unit,time,y\n1,1,0\n1,2,1\n2,1,0\n";
        assert!(read_panel_long(hole).is_err());
    }

    #[test]
    fn pooled_model_includes_week_term() {
        let wide = corn_panel();
        let (data, labels) = wide.pooled_model(true).unwrap();
        assert_eq!(labels, vec!["intercept", "treat2", "treat3", "week"]);
        assert_eq!(data.n(), 216);
        assert_eq!(data.x()[(0, 3)], 1.0);
        assert_eq!(data.x()[(8, 3)], 9.0);
        let (no_trend, _) = wide.pooled_model(false).unwrap();
        assert_eq!(no_trend.p_beta(), 3);
    }

    #[test]
    fn coefficient_table_p_values() {
        let rows = coefficient_rows(
            &["a".into()],
            &[1.96],
            &[1.0],
        );
        assert!((rows[0].p_value - 0.05).abs() < 0.001);
        assert!((rows[0].z_value - 1.96).abs() < 1e-12);
    }
}
