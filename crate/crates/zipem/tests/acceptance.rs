//! Acceptance suite: one test per criterion, each printing a single
//! `criterion N: PASS/FAIL` line (visible with `--nocapture`).
//!
//! Criteria 3-6 are seeded, scaled-down Monte-Carlo surrogates of the full
//! study; their expensive runs are shared between tests through lazies.

use nalgebra::{DMatrix, DVector};
use once_cell::sync::Lazy;
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use statrs::distribution::{ContinuousCDF, Normal};
use std::time::{Duration, Instant};
use zipem::corn::{corn_fixed_loss_panel, corn_panel, corn_truth};
use zipem::dist::{zip_cdf, zip_quantile, CellParams};
use zipem::em::{candidate_support, cell_weights, e_step_indicator, fit_weighted_em};
use zipem::fit::{default_init, fit_scoring, Controls};
use zipem::model::{fisher_info, link_lambda, link_pi, loglik, score, DesignRow, ModelData, ZipParams};
use zipem::pipeline::{run_pipeline, PipelineConfig};
use zipem::sim::{
    corn_benchmark, grid_configs, percentile, run_comparison, ComparisonReport, CornBenchConfig,
    CornBenchReport, SimConfig,
};

const REFERENCE_BETA: [f64; 4] = [-0.525, 0.499, 2.326, -0.050];
const REFERENCE_SUCCESS: [f64; 4] = [0.8382, 0.7759, 0.7596, 0.7238];
const FULL_DATA_BETA2: f64 = 2.326;

static BENCH: Lazy<(CornBenchReport, Duration)> = Lazy::new(|| {
    let start = Instant::now();
    let report = corn_benchmark(&CornBenchConfig::default()).expect("corn benchmark runs");
    (report, start.elapsed())
});

struct GridRun {
    cells: Vec<(SimConfig, ComparisonReport)>,
    elapsed: Duration,
}

static GRID: Lazy<GridRun> = Lazy::new(|| {
    let base = SimConfig {
        replicates: 200,
        ..SimConfig::default()
    };
    let start = Instant::now();
    let cells = grid_configs(&base, &[0.2, 0.5, 0.8], &[0.0, 0.5, 0.9], &[10, 50])
        .into_iter()
        .map(|cfg| {
            let report = run_comparison(&cfg).expect("comparison runs");
            (cfg, report)
        })
        .collect();
    GridRun {
        cells,
        elapsed: start.elapsed(),
    }
});

// The n = 100 cell at (pi, alpha) = (0.5, 0.5), shared by criterion 6 and
// the consistency check below.
static BIG_CELL: Lazy<ComparisonReport> = Lazy::new(|| {
    let base = SimConfig {
        replicates: 200,
        ..SimConfig::default()
    };
    let cfg = grid_configs(&base, &[0.5], &[0.5], &[100]).remove(0);
    run_comparison(&cfg).expect("comparison runs")
});

#[test]
fn criterion_1_corn_full_data_fit() {
    let start = Instant::now();
    let (data, _) = corn_panel().pooled_model(true).unwrap();
    let fit = fit_scoring(&data, &default_init(&data), &Controls::default()).unwrap();
    let elapsed = start.elapsed();

    let beta_ok = (0..4).all(|j| (fit.params.beta[j] - REFERENCE_BETA[j]).abs() <= 0.05);
    let zero_ok = fit.separation_flag && fit.params.gamma[3] < 0.0;
    let time_ok = elapsed < Duration::from_secs(1);
    let pass = beta_ok && zero_ok && time_ok;
    println!(
        "criterion 1: {} — full-data Poisson part {:?} vs {:?} (±0.05), separation {} with gamma3 {:.2}, {:?}",
        if pass { "PASS" } else { "FAIL" },
        fit.params.beta.as_slice(),
        REFERENCE_BETA,
        fit.separation_flag,
        fit.params.gamma[3],
        elapsed
    );
    assert!(beta_ok, "Poisson estimates out of tolerance");
    assert!(zero_ok, "zero part not flagged as separated with gamma3 < 0");
    assert!(time_ok, "fit exceeded 1 s");
}

#[test]
fn criterion_2_fixed_pattern_imputation() {
    let start = Instant::now();
    let panel = corn_fixed_loss_panel().to_panel().unwrap();
    let cfg = PipelineConfig {
        p0: 0.5, // threshold of the worked example
        ..PipelineConfig::default()
    };
    let out = run_pipeline(&panel, &cfg).unwrap();
    let elapsed = start.elapsed();

    let success = out.success_rate(&corn_truth()).unwrap();
    // weeks whose observed responses are all zero in the damaged panel
    let all_zero_weeks: Vec<usize> = (0..panel.n_times())
        .filter(|&t| panel.observed_at_time(t).iter().all(|&y| y == 0))
        .collect();
    let zeros_ok = out
        .decisions()
        .filter(|d| all_zero_weeks.contains(&d.time))
        .all(|d| d.imputed == 0);
    let success_ok = success >= 0.60;
    let time_ok = elapsed < Duration::from_secs(5);
    let pass = success_ok && zeros_ok && time_ok;
    println!(
        "criterion 2: {} — fixed-pattern success {:.3} (>= 0.60), all-zero weeks {:?} imputed zero: {}, {:?}",
        if pass { "PASS" } else { "FAIL" },
        success,
        all_zero_weeks.iter().map(|t| t + 1).collect::<Vec<_>>(),
        zeros_ok,
        elapsed
    );
    assert!(success_ok, "success rate {success} below 0.60");
    assert!(zeros_ok, "an all-zero-week cell was imputed non-zero");
    assert!(time_ok, "pipeline exceeded 5 s");
}

#[test]
fn criterion_3_success_rates_by_loss() {
    let (report, elapsed) = &*BENCH;
    let mut lines = Vec::new();
    let mut pass = true;
    for (level, target) in report.levels.iter().zip(REFERENCE_SUCCESS) {
        let diff = (level.mean_success - target).abs();
        let ok = diff <= 0.10;
        pass &= ok;
        lines.push(format!(
            "loss {:.0}%: {:.2}% vs {:.2}% (|diff| {:.2} pts, {})",
            level.loss_fraction * 100.0,
            level.mean_success * 100.0,
            target * 100.0,
            diff * 100.0,
            if ok { "ok" } else { "out" }
        ));
    }
    let time_ok = *elapsed < Duration::from_secs(300);
    pass &= time_ok;
    println!(
        "criterion 3: {} — mean success within ±10 points at every loss level [{}], {:?}",
        if pass { "PASS" } else { "FAIL" },
        lines.join("; "),
        elapsed
    );
    for (level, target) in report.levels.iter().zip(REFERENCE_SUCCESS) {
        assert!(
            (level.mean_success - target).abs() <= 0.10,
            "loss {:.0}%: {} vs {}",
            level.loss_fraction * 100.0,
            level.mean_success,
            target
        );
    }
    assert!(time_ok, "benchmark exceeded 5 min: {elapsed:?}");
}

#[test]
fn criterion_4_interval_coverage_and_widths() {
    let (report, _) = &*BENCH;
    let mut widths = Vec::new();
    let mut contains_all = true;
    for level in &report.levels {
        let b2 = level
            .coefficients
            .iter()
            .find(|c| c.name == "beta2")
            .expect("beta2 interval present");
        contains_all &= b2.lower <= FULL_DATA_BETA2 && FULL_DATA_BETA2 <= b2.upper;
        widths.push(b2.upper - b2.lower);
    }
    let monotone = widths.windows(2).all(|w| w[1] >= w[0]);
    let pass = contains_all && monotone;
    println!(
        "criterion 4: {} — beta2 intervals contain {} at every loss: {}; widths {:?} non-decreasing: {}",
        if pass { "PASS" } else { "FAIL" },
        FULL_DATA_BETA2,
        contains_all,
        widths.iter().map(|w| (w * 1000.0).round() / 1000.0).collect::<Vec<_>>(),
        monotone
    );
    assert!(contains_all, "an interval misses the full-data estimate");
    assert!(monotone, "interval widths not non-decreasing: {widths:?}");
}

#[test]
fn criterion_5_mae_against_mode_baseline() {
    let grid = &*GRID;
    let mut violations = Vec::new();
    for (cfg, report) in &grid.cells {
        let em = report.mae_em.expect("cells have deleted data");
        let mode = report.mae_mode.expect("cells have deleted data");
        let ok = em < mode;
        println!(
            "  cell pi={:.1} alpha={:.1} n={:3}: mae_em={:.4} mae_mode={:.4} {}",
            cfg.pi_target,
            cfg.alpha,
            cfg.n_per_treatment,
            em,
            mode,
            if ok { "ok" } else { "VIOLATION" }
        );
        if !ok {
            violations.push(format!(
                "(pi={}, alpha={}, n={})",
                cfg.pi_target, cfg.alpha, cfg.n_per_treatment
            ));
        }
    }
    let time_ok = grid.elapsed < Duration::from_secs(900);
    let pass = violations.is_empty() && time_ok;
    println!(
        "criterion 5: {} — EM mean absolute error below the mode baseline in {}/18 cells{}{}, {:?}",
        if pass { "PASS" } else { "FAIL" },
        18 - violations.len(),
        if violations.is_empty() { "" } else { "; violations at " },
        violations.join(", "),
        grid.elapsed
    );
    assert!(time_ok, "grid exceeded 15 min: {:?}", grid.elapsed);
    // Known limitation, documented in the README: the sequential imputer is
    // chronologically causal, while the mode baseline reads the unit's
    // later observations too. Under strong within-unit correlation with few
    // units that edge is structural, and these cells stay red.
    assert!(
        violations.is_empty(),
        "MAE(EM) >= MAE(mode) at {}",
        violations.join(", ")
    );
}

#[test]
fn criterion_6_bias_orderings() {
    let grid = &*GRID;
    let bias_of = |report: &ComparisonReport, model: &str, coef: &str| -> f64 {
        report
            .bias
            .iter()
            .find(|m| m.model == model)
            .unwrap()
            .coefficients
            .iter()
            .find(|c| c.name == coef)
            .unwrap()
            .bias
    };
    let (_, cell_small) = grid
        .cells
        .iter()
        .find(|(c, _)| c.pi_target == 0.5 && c.alpha == 0.5 && c.n_per_treatment == 10)
        .expect("grid contains the (0.5, 0.5, 10) cell");

    let cell_big = &*BIG_CELL;

    let em_b0_small = bias_of(cell_small, "em", "beta0").abs();
    let mode_b0_small = bias_of(cell_small, "mode", "beta0").abs();
    let em_g0_small = bias_of(cell_small, "em", "gamma0").abs();
    let mode_g0_small = bias_of(cell_small, "mode", "gamma0").abs();
    let em_b0_big = bias_of(cell_big, "em", "beta0").abs();

    let beta_ok = em_b0_small <= mode_b0_small;
    let gamma_ok = em_g0_small <= mode_g0_small;
    let shrink_ok = em_b0_big < em_b0_small;
    let pass = beta_ok && gamma_ok && shrink_ok;
    println!(
        "criterion 6: {} — |bias| at n=10: beta0 em {:.4} <= mode {:.4}: {}; gamma0 em {:.4} <= mode {:.4}: {}; em beta0 n=100 {:.4} < n=10 {:.4}: {}",
        if pass { "PASS" } else { "FAIL" },
        em_b0_small,
        mode_b0_small,
        beta_ok,
        em_g0_small,
        mode_g0_small,
        gamma_ok,
        em_b0_big,
        em_b0_small,
        shrink_ok
    );
    assert!(beta_ok, "EM beta0 bias exceeds the mode model's");
    assert!(gamma_ok, "EM gamma0 bias exceeds the mode model's");
    assert!(shrink_ok, "EM beta0 bias does not shrink from n=10 to n=100");
}

// ---------------------------------------------------------------- 7

fn random_design(n: usize, p: usize, y: Vec<Option<u32>>, seed: u64) -> ModelData {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut x = DMatrix::zeros(n, p);
    for i in 0..n {
        x[(i, 0)] = 1.0;
        for j in 1..p {
            x[(i, j)] = rng.random_range(-1.0..1.0);
        }
    }
    let z = x.clone();
    ModelData::new(x, z, y).unwrap()
}

fn fd_gradient(data: &ModelData, params: &ZipParams, h: f64) -> DVector<f64> {
    let p1 = params.gamma.len();
    let dim = p1 + params.beta.len();
    let mut grad = DVector::zeros(dim);
    for j in 0..dim {
        let mut up = params.clone();
        let mut down = params.clone();
        if j < p1 {
            up.gamma[j] += h;
            down.gamma[j] -= h;
        } else {
            up.beta[j - p1] += h;
            down.beta[j - p1] -= h;
        }
        grad[j] = (loglik(data, &up).unwrap() - loglik(data, &down).unwrap()) / (2.0 * h);
    }
    grad
}

fn fd_hessian(data: &ModelData, params: &ZipParams, h: f64) -> DMatrix<f64> {
    let p1 = params.gamma.len();
    let dim = p1 + params.beta.len();
    let perturb = |p: &ZipParams, j: usize, delta: f64| {
        let mut q = p.clone();
        if j < p1 {
            q.gamma[j] += delta;
        } else {
            q.beta[j - p1] += delta;
        }
        q
    };
    let mut hess = DMatrix::zeros(dim, dim);
    for j in 0..dim {
        for k in 0..dim {
            let pp = perturb(&perturb(params, j, h), k, h);
            let pm = perturb(&perturb(params, j, h), k, -h);
            let mp = perturb(&perturb(params, j, -h), k, h);
            let mm = perturb(&perturb(params, j, -h), k, -h);
            hess[(j, k)] = (loglik(data, &pp).unwrap() - loglik(data, &pm).unwrap()
                - loglik(data, &mp).unwrap()
                + loglik(data, &mm).unwrap())
                / (4.0 * h * h);
        }
    }
    hess
}

fn grid_argmax(q: impl Fn(f64) -> f64, lo: f64, hi: f64) -> f64 {
    let mut best = lo;
    let mut best_q = f64::NEG_INFINITY;
    let (mut lo, mut hi) = (lo, hi);
    for _ in 0..4 {
        let step = (hi - lo) / 400.0;
        for i in 0..=400 {
            let g = lo + step * i as f64;
            let v = q(g);
            if v > best_q {
                best_q = v;
                best = g;
            }
        }
        lo = best - step;
        hi = best + step;
    }
    best
}

#[test]
fn criterion_7_invariant_suites() {
    // (a) analytic score vs central differences, 50 random points
    let y: Vec<Option<u32>> = (0..30)
        .map(|i| Some([0u32, 1, 0, 3, 2][i % 5]))
        .collect();
    let data = random_design(30, 3, y, 3);
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let mut score_ok = true;
    for _ in 0..50 {
        let params = ZipParams::new(
            (0..3).map(|_| rng.random_range(-1.5..1.5)).collect(),
            (0..3).map(|_| rng.random_range(-1.5..1.5)).collect(),
        )
        .unwrap();
        let analytic = score(&data, &params).unwrap();
        let numeric = fd_gradient(&data, &params, 1e-5);
        for j in 0..analytic.len() {
            let denom = numeric[j].abs().max(1.0);
            score_ok &= (analytic[j] - numeric[j]).abs() / denom < 1e-5;
        }
    }

    // (b) information vs negative Hessian on all-positive data, 20 points
    let y_pos: Vec<Option<u32>> = (0..25).map(|i| Some(1 + (i % 4) as u32)).collect();
    let data_pos = random_design(25, 2, y_pos, 9);
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let mut info_ok = true;
    for _ in 0..20 {
        let params = ZipParams::new(
            (0..2).map(|_| rng.random_range(-1.0..1.0)).collect(),
            (0..2).map(|_| rng.random_range(-1.0..1.0)).collect(),
        )
        .unwrap();
        let info = fisher_info(&data_pos, &params).unwrap();
        let neg_hess = -fd_hessian(&data_pos, &params, 1e-4);
        for j in 0..info.nrows() {
            for k in 0..info.ncols() {
                let denom = neg_hess[(j, k)].abs().max(1.0);
                info_ok &= (info[(j, k)] - neg_hess[(j, k)]).abs() / denom < 1e-4;
            }
        }
    }

    // (c) candidate weights: nonnegative, normalized to 1e-12
    let row = DesignRow::new(vec![1.0], vec![1.0]).unwrap();
    let mut weights_ok = true;
    for upper in [1u32, 3, 8, 15] {
        let support = zipem::em::CandidateSupport::new(upper).unwrap();
        for gi in -6..=6 {
            for bi in -4..=4 {
                let params =
                    ZipParams::new(vec![bi as f64 * 0.5], vec![gi as f64 * 0.5]).unwrap();
                let cw = cell_weights(0, 0, None, &row, &params, &support).unwrap();
                let total: f64 = cw.w.iter().sum();
                weights_ok &= (total - 1.0).abs() < 1e-12 && cw.w.iter().all(|&w| w >= 0.0);
            }
        }
    }

    // (d) weighted-EM fixed point vs grid-search maximization, n = 3
    let x = DMatrix::from_row_slice(3, 1, &[1.0, 1.0, 1.0]);
    let z = x.clone();
    let small = ModelData::new(x, z, vec![Some(0), Some(3), None]).unwrap();
    let ctrl = Controls {
        tol: 1e-12,
        max_iterations: 5_000,
        ..Controls::default()
    };
    let fitted = fit_weighted_em(&small, 0, &default_init(&small), &ctrl).unwrap();
    let params = fitted.fit.params.clone();
    let support = candidate_support(&small.observed()).unwrap();
    let mrow = small.design_row(2);
    let cw = cell_weights(2, 0, None, &mrow, &params, &support).unwrap();
    let mut ys = vec![0.0, 3.0];
    let mut ws = vec![1.0, 1.0];
    for (k, &wk) in cw.w.iter().enumerate() {
        ys.push(k as f64);
        ws.push(wk);
    }
    let ds: Vec<f64> = ys
        .iter()
        .map(|&yv| {
            if yv > 0.0 {
                0.0
            } else {
                e_step_indicator(0, &mrow, &params).unwrap()
            }
        })
        .collect();
    let qg = |g: f64| -> f64 {
        ws.iter()
            .enumerate()
            .map(|(i, w)| {
                let sp = if g > 0.0 {
                    g + (-g).exp().ln_1p()
                } else {
                    g.exp().ln_1p()
                };
                w * (ds[i] * g - sp)
            })
            .sum()
    };
    let qb = |b: f64| -> f64 {
        ws.iter()
            .enumerate()
            .map(|(i, w)| w * (1.0 - ds[i]) * (ys[i] * b - b.exp()))
            .sum()
    };
    let oracle_ok = (params.gamma[0] - grid_argmax(qg, -8.0, 8.0)).abs() < 1e-3
        && (params.beta[0] - grid_argmax(qb, -8.0, 8.0)).abs() < 1e-3;

    // (e) copula marginals: Kolmogorov distance <= 0.01 at 1e5 draws
    let normal = Normal::standard();
    let mut copula_ok = true;
    for &pi in &[0.1, 0.4, 0.7] {
        for &lambda in &[0.5, 2.0, 8.0] {
            let cell = CellParams::new(pi, lambda).unwrap();
            let mut rng = zipem::seed::rng(7, &[99, pi.to_bits(), lambda.to_bits()]);
            let n = 100_000;
            let mut counts = std::collections::BTreeMap::new();
            for _ in 0..n {
                let zv: f64 = rng.sample(rand_distr::StandardNormal);
                let u = normal.cdf(zv).min(1.0 - 1e-16);
                *counts.entry(zip_quantile(u, cell).unwrap()).or_insert(0usize) += 1;
            }
            let upper = (lambda + 10.0 * lambda.sqrt()).ceil() as u32;
            let mut acc = 0.0;
            let mut dist: f64 = 0.0;
            for yv in 0..=upper {
                acc += *counts.get(&yv).unwrap_or(&0) as f64 / n as f64;
                dist = dist.max((acc - zip_cdf(yv, cell)).abs());
            }
            copula_ok &= dist <= 0.01;
        }
    }

    // (f) determinism: identical seeds reproduce bitwise
    let cfg = SimConfig {
        n_per_treatment: 4,
        t_len: 4,
        replicates: 4,
        ..SimConfig::default()
    };
    let a = serde_json::to_string(&run_comparison(&cfg).unwrap()).unwrap();
    let b = serde_json::to_string(&run_comparison(&cfg).unwrap()).unwrap();
    let pipeline_a = run_pipeline(
        &corn_fixed_loss_panel().to_panel().unwrap(),
        &PipelineConfig::default(),
    )
    .unwrap();
    let pipeline_b = run_pipeline(
        &corn_fixed_loss_panel().to_panel().unwrap(),
        &PipelineConfig::default(),
    )
    .unwrap();
    let determinism_ok = a == b
        && pipeline_a.completed == pipeline_b.completed
        && pipeline_a
            .times
            .iter()
            .zip(&pipeline_b.times)
            .all(|(s, t)| {
                s.step1.loglik.to_bits() == t.step1.loglik.to_bits()
                    && s.step1.params == t.step1.params
            });

    let pass = score_ok && info_ok && weights_ok && oracle_ok && copula_ok && determinism_ok;
    println!(
        "criterion 7: {} — score/gradient {}, information/Hessian {}, weight normalization {}, EM fixed-point oracle {}, copula marginals {}, determinism {}",
        if pass { "PASS" } else { "FAIL" },
        score_ok, info_ok, weights_ok, oracle_ok, copula_ok, determinism_ok
    );
    assert!(score_ok, "score disagrees with finite differences");
    assert!(info_ok, "information disagrees with the negative Hessian");
    assert!(weights_ok, "weights not normalized");
    assert!(oracle_ok, "EM fixed point disagrees with the grid oracle");
    assert!(copula_ok, "copula marginal distance above 0.01");
    assert!(determinism_ok, "runs are not bitwise reproducible");
}

// Consistency of the complete-data model: its beta2 bias shrinks as the
// number of units grows.
#[test]
fn complete_model_bias_shrinks_with_n() {
    let grid = &*GRID;
    let bias_b2 = |report: &ComparisonReport| -> f64 {
        report
            .bias
            .iter()
            .find(|m| m.model == "complete")
            .unwrap()
            .coefficients
            .iter()
            .find(|c| c.name == "beta2")
            .unwrap()
            .bias
            .abs()
    };
    let (_, small) = grid
        .cells
        .iter()
        .find(|(c, _)| c.pi_target == 0.5 && c.alpha == 0.5 && c.n_per_treatment == 10)
        .unwrap();
    let small_bias = bias_b2(small);
    let big_bias = bias_b2(&BIG_CELL);
    assert!(
        big_bias < small_bias,
        "complete-model |bias(beta2)|: n=100 {big_bias} vs n=10 {small_bias}"
    );
}

// The statistics behind criteria 5 and 6 rely on the sampler's moments;
// spot-check them here so a red cell can be attributed correctly.
#[test]
fn sampler_moments_sanity() {
    let cfg = SimConfig {
        alpha: 0.0,
        n_per_treatment: 2000,
        t_len: 1,
        pi_target: 0.3,
        ..SimConfig::default()
    };
    let sim = zipem::sim::simulate_panel(&cfg).unwrap();
    let lambda = link_lambda(&[1.0, 0.0, 0.0], &DVector::from_vec(vec![
        cfg.beta[0] + cfg.beta[3],
        cfg.beta[1],
        cfg.beta[2],
    ]))
    .unwrap();
    let cell = CellParams::new(0.3, lambda).unwrap();
    let vals: Vec<f64> = (0..2000)
        .map(|i| f64::from(sim.panel.value(i, 0).unwrap()))
        .collect();
    let mean = vals.iter().sum::<f64>() / vals.len() as f64;
    let se = (cell.variance() / vals.len() as f64).sqrt();
    assert!((mean - cell.mean()).abs() < 3.0 * se);
    let pi = link_pi(&[1.0], &DVector::from_vec(vec![cfg.gamma0()])).unwrap();
    assert!((pi - 0.3).abs() < 1e-12);
    let _ = percentile(&[1.0, 2.0], 0.5);
}
