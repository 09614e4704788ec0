//! Command-line front end: fit a ZIP panel model, impute missing responses
//! sequentially, run the Monte-Carlo comparison, or benchmark against the
//! embedded corn data.
//!
//! Every writing command drops a `resolved_config.json` into its output
//! directory; rerunning with `--config <that file>` reproduces the outputs
//! byte for byte.

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::{Deserialize, Serialize};
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use zipem::fit::{default_init, fit_scoring, Controls};
use zipem::io::{
    self, fit_report, pipeline_report, read_panel_long, read_panel_wide, render_fit_table,
    trace_csv, weights_csv, write_panel_long, write_panel_wide, PanelFormat,
};
use zipem::pipeline::{run_pipeline, PipelineConfig};
use zipem::sim::{
    corn_benchmark, grid_configs, run_comparison_with, CornBenchConfig, CorrType, SimConfig,
};

#[derive(Parser)]
#[command(name = "zipem", version, about = "Zero-inflated Poisson panel estimation and imputation")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Fit the pooled ZIP regression to a complete panel and print the
    /// coefficient tables
    Fit(FitArgs),
    /// Impute missing responses time by time and write the completed panel
    Impute(ImputeArgs),
    /// Compare imputation strategies on simulated correlated ZIP panels
    Simulate(SimulateArgs),
    /// Repeated random-loss benchmark on the embedded corn data
    BenchCorn(BenchCornArgs),
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Fit(args) => run_fit(args),
        Command::Impute(args) => run_impute(args),
        Command::Simulate(args) => run_simulate(args),
        Command::BenchCorn(args) => run_bench_corn(args),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}

type AnyError = Box<dyn std::error::Error>;

/// Panel format flag, mirroring [`PanelFormat`].
#[derive(Debug, Clone, Copy, ValueEnum)]
enum FormatArg {
    Wide,
    Long,
}

impl From<FormatArg> for PanelFormat {
    fn from(f: FormatArg) -> Self {
        match f {
            FormatArg::Wide => PanelFormat::Wide,
            FormatArg::Long => PanelFormat::Long,
        }
    }
}

/// Correlation family flag, mirroring [`CorrType`].
#[derive(Debug, Clone, Copy, ValueEnum)]
enum CorrArg {
    Ar1,
    Exchangeable,
}

impl From<CorrArg> for CorrType {
    fn from(c: CorrArg) -> Self {
        match c {
            CorrArg::Ar1 => CorrType::Ar1,
            CorrArg::Exchangeable => CorrType::Exchangeable,
        }
    }
}

fn load_config<T: for<'de> Deserialize<'de>>(path: &Path) -> Result<T, AnyError> {
    let text = std::fs::read_to_string(path)?;
    Ok(serde_json::from_str(&text)?)
}

fn write_output(dir: &Path, name: &str, content: &str) -> Result<(), AnyError> {
    std::fs::create_dir_all(dir)?;
    std::fs::write(dir.join(name), content)?;
    Ok(())
}

fn write_json<T: Serialize>(dir: &Path, name: &str, value: &T) -> Result<(), AnyError> {
    let mut text = serde_json::to_string_pretty(value)?;
    text.push('\n');
    write_output(dir, name, &text)
}

// ---------------------------------------------------------------- fit

#[derive(Args)]
struct FitArgs {
    /// Panel file; omit together with --corn to use the embedded corn data
    input: Option<PathBuf>,
    /// Use the embedded corn data
    #[arg(long)]
    corn: bool,
    #[arg(long, value_enum)]
    format: Option<FormatArg>,
    /// Include a linear week term in both model parts
    #[arg(long, num_args(0..=1), default_missing_value = "true")]
    time_trend: Option<bool>,
    #[arg(long)]
    tol: Option<f64>,
    #[arg(long)]
    max_iterations: Option<usize>,
    /// Directory for fit.json and the resolved configuration
    #[arg(long)]
    out: Option<PathBuf>,
    /// Load a previously resolved configuration; flags still override
    #[arg(long)]
    config: Option<PathBuf>,
}

#[derive(Serialize, Deserialize, Clone)]
#[serde(deny_unknown_fields)]
struct FitConfig {
    input: Option<String>,
    corn: bool,
    format: PanelFormat,
    time_trend: bool,
    tol: f64,
    max_iterations: usize,
    out: Option<String>,
}

impl Default for FitConfig {
    fn default() -> Self {
        Self {
            input: None,
            corn: false,
            format: PanelFormat::Wide,
            time_trend: true,
            tol: 1e-6,
            max_iterations: Controls::default().max_iterations,
            out: None,
        }
    }
}

fn run_fit(args: FitArgs) -> Result<(), AnyError> {
    let mut cfg: FitConfig = match &args.config {
        Some(path) => load_config(path)?,
        None => FitConfig::default(),
    };
    if let Some(input) = &args.input {
        cfg.input = Some(input.display().to_string());
    }
    if args.corn {
        cfg.corn = true;
    }
    if let Some(f) = args.format {
        cfg.format = f.into();
    }
    if let Some(t) = args.time_trend {
        cfg.time_trend = t;
    }
    if let Some(t) = args.tol {
        cfg.tol = t;
    }
    if let Some(m) = args.max_iterations {
        cfg.max_iterations = m;
    }
    if let Some(out) = &args.out {
        cfg.out = Some(out.display().to_string());
    }

    let controls = Controls {
        tol: cfg.tol,
        max_iterations: cfg.max_iterations,
        ..Controls::default()
    };
    let (data, x_labels, z_labels) = match (&cfg.input, cfg.corn) {
        (Some(_), true) => return Err("pass either an input file or --corn, not both".into()),
        (None, true) => {
            let (d, labels) = zipem::corn::corn_panel().pooled_model(cfg.time_trend)?;
            (d, labels.clone(), labels)
        }
        (Some(path), false) => match cfg.format {
            PanelFormat::Wide => {
                let wide = read_panel_wide(&std::fs::read_to_string(path)?)?;
                let (d, labels) = wide.pooled_model(cfg.time_trend)?;
                (d, labels.clone(), labels)
            }
            PanelFormat::Long => {
                let panel = read_panel_long(&std::fs::read_to_string(path)?)?;
                let (d, x_labels, z_labels) = io::pooled_from_panel(&panel, cfg.time_trend)?;
                (d, x_labels, z_labels)
            }
        },
        (None, false) => return Err("no input file given (or use --corn)".into()),
    };

    let fit = fit_scoring(&data, &default_init(&data), &controls)?;
    let report = fit_report(&fit, &x_labels, &z_labels);
    print!("{}", render_fit_table(&report));
    if let Some(out) = &cfg.out {
        let dir = PathBuf::from(out);
        write_json(&dir, "fit.json", &report)?;
        write_json(&dir, "resolved_config.json", &cfg)?;
    }
    Ok(())
}

// ---------------------------------------------------------------- impute

#[derive(Args)]
struct ImputeArgs {
    /// Panel file; omit together with --corn-fixed to use the embedded
    /// fixed-loss corn fixture
    input: Option<PathBuf>,
    /// Use the embedded corn data with its fixed 20%-loss pattern
    #[arg(long)]
    corn_fixed: bool,
    #[arg(long, value_enum)]
    format: Option<FormatArg>,
    /// Zero-decision threshold
    #[arg(long)]
    p0: Option<f64>,
    #[arg(long)]
    n_components: Option<usize>,
    #[arg(long)]
    tol: Option<f64>,
    #[arg(long)]
    max_iterations: Option<usize>,
    /// Wide-format file with the true responses, for success scoring
    #[arg(long)]
    truth: Option<PathBuf>,
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long)]
    config: Option<PathBuf>,
}

#[derive(Serialize, Deserialize, Clone)]
#[serde(deny_unknown_fields)]
struct ImputeConfig {
    input: Option<String>,
    corn_fixed: bool,
    format: PanelFormat,
    p0: f64,
    n_components: usize,
    tol: f64,
    max_iterations: usize,
    truth: Option<String>,
    out: String,
}

impl Default for ImputeConfig {
    fn default() -> Self {
        let pipeline = PipelineConfig::default();
        Self {
            input: None,
            corn_fixed: false,
            format: PanelFormat::Wide,
            p0: pipeline.p0,
            n_components: pipeline.n_components,
            tol: pipeline.controls.tol,
            max_iterations: pipeline.controls.max_iterations,
            truth: None,
            out: "zipem-impute".into(),
        }
    }
}

fn run_impute(args: ImputeArgs) -> Result<(), AnyError> {
    let mut cfg: ImputeConfig = match &args.config {
        Some(path) => load_config(path)?,
        None => ImputeConfig::default(),
    };
    if let Some(input) = &args.input {
        cfg.input = Some(input.display().to_string());
    }
    if args.corn_fixed {
        cfg.corn_fixed = true;
    }
    if let Some(f) = args.format {
        cfg.format = f.into();
    }
    if let Some(p) = args.p0 {
        cfg.p0 = p;
    }
    if let Some(n) = args.n_components {
        cfg.n_components = n;
    }
    if let Some(t) = args.tol {
        cfg.tol = t;
    }
    if let Some(m) = args.max_iterations {
        cfg.max_iterations = m;
    }
    if let Some(truth) = &args.truth {
        cfg.truth = Some(truth.display().to_string());
    }
    if let Some(out) = &args.out {
        cfg.out = out.display().to_string();
    }

    enum Source {
        Wide(zipem::io::WidePanel),
        Long,
    }
    let (panel, source) = match (&cfg.input, cfg.corn_fixed) {
        (Some(_), true) => {
            return Err("pass either an input file or --corn-fixed, not both".into())
        }
        (None, true) => {
            let wide = zipem::corn::corn_fixed_loss_panel();
            (wide.to_panel()?, Source::Wide(wide))
        }
        (Some(path), false) => match cfg.format {
            PanelFormat::Wide => {
                let wide = read_panel_wide(&std::fs::read_to_string(path)?)?;
                (wide.to_panel()?, Source::Wide(wide))
            }
            PanelFormat::Long => (
                read_panel_long(&std::fs::read_to_string(path)?)?,
                Source::Long,
            ),
        },
        (None, false) => return Err("no input file given (or use --corn-fixed)".into()),
    };

    let pipeline_cfg = PipelineConfig {
        p0: cfg.p0,
        n_components: cfg.n_components,
        controls: Controls {
            tol: cfg.tol,
            max_iterations: cfg.max_iterations,
            ..Controls::default()
        },
        ..PipelineConfig::default()
    };
    let result = run_pipeline(&panel, &pipeline_cfg)?;

    let truth_grid: Option<Vec<Vec<u32>>> = match &cfg.truth {
        Some(path) => {
            let wide = read_panel_wide(&std::fs::read_to_string(path)?)?;
            Some(
                wide.responses
                    .iter()
                    .map(|row| row.iter().map(|v| v.unwrap_or(0)).collect())
                    .collect(),
            )
        }
        None => None,
    };
    let report = pipeline_report(&result, truth_grid.as_deref());

    let dir = PathBuf::from(&cfg.out);
    let completed = match source {
        Source::Wide(wide) => write_panel_wide(&wide.with_responses(result.completed.y().to_vec())),
        Source::Long => write_panel_long(&result.completed),
    };
    write_output(&dir, "completed.csv", &completed)?;
    write_output(&dir, "trace.csv", &trace_csv(result.decisions()))?;
    write_output(
        &dir,
        "weights.csv",
        &weights_csv(result.times.iter().flat_map(|t| t.weights.iter())),
    )?;
    write_json(&dir, "pipeline.json", &report)?;
    write_json(&dir, "resolved_config.json", &cfg)?;
    println!(
        "imputed {} cells over {} times ({} skipped); outputs in {}",
        report.n_imputed,
        result.times.len(),
        result.skipped_times.len(),
        dir.display()
    );
    if let Some(s) = report.success_rate {
        println!("success rate vs truth: {:.4}", s);
    }
    Ok(())
}

// ---------------------------------------------------------------- simulate

#[derive(Args)]
struct SimulateArgs {
    /// Poisson-part coefficients b0,b1,b2,b3
    #[arg(long, value_delimiter = ',')]
    beta: Option<Vec<f64>>,
    /// Zero-inflation probabilities to sweep
    #[arg(long, value_delimiter = ',')]
    pi: Option<Vec<f64>>,
    /// Correlation values to sweep
    #[arg(long, value_delimiter = ',')]
    alpha: Option<Vec<f64>>,
    /// Units per treatment to sweep
    #[arg(long, value_delimiter = ',')]
    n_per_treatment: Option<Vec<usize>>,
    #[arg(long)]
    t_len: Option<usize>,
    #[arg(long, value_enum)]
    corr: Option<CorrArg>,
    #[arg(long)]
    loss: Option<f64>,
    #[arg(long)]
    replicates: Option<usize>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    p0: Option<f64>,
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long)]
    config: Option<PathBuf>,
}

#[derive(Serialize, Deserialize, Clone)]
#[serde(deny_unknown_fields)]
struct SimulateConfig {
    beta: [f64; 4],
    pi: Vec<f64>,
    alpha: Vec<f64>,
    n_per_treatment: Vec<usize>,
    t_len: usize,
    corr: CorrType,
    loss: f64,
    replicates: usize,
    seed: u64,
    p0: f64,
    out: String,
}

impl Default for SimulateConfig {
    fn default() -> Self {
        let base = SimConfig::default();
        Self {
            beta: [1.0, -0.5, 0.5, 0.3],
            pi: vec![base.pi_target],
            alpha: vec![base.alpha],
            n_per_treatment: vec![base.n_per_treatment],
            t_len: base.t_len,
            corr: base.corr_type,
            loss: base.loss_fraction,
            replicates: base.replicates,
            seed: base.seed,
            p0: PipelineConfig::default().p0,
            out: "zipem-simulate".into(),
        }
    }
}

fn run_simulate(args: SimulateArgs) -> Result<(), AnyError> {
    let mut cfg: SimulateConfig = match &args.config {
        Some(path) => load_config(path)?,
        None => SimulateConfig::default(),
    };
    if let Some(beta) = &args.beta {
        cfg.beta = beta
            .clone()
            .try_into()
            .map_err(|_| "--beta needs exactly four values")?;
    }
    if let Some(v) = &args.pi {
        cfg.pi = v.clone();
    }
    if let Some(v) = &args.alpha {
        cfg.alpha = v.clone();
    }
    if let Some(v) = &args.n_per_treatment {
        cfg.n_per_treatment = v.clone();
    }
    if let Some(t) = args.t_len {
        cfg.t_len = t;
    }
    if let Some(c) = args.corr {
        cfg.corr = c.into();
    }
    if let Some(l) = args.loss {
        cfg.loss = l;
    }
    if let Some(r) = args.replicates {
        cfg.replicates = r;
    }
    if let Some(s) = args.seed {
        cfg.seed = s;
    }
    if let Some(p) = args.p0 {
        cfg.p0 = p;
    }
    if let Some(out) = &args.out {
        cfg.out = out.display().to_string();
    }

    let base = SimConfig {
        beta: cfg.beta,
        pi_target: cfg.pi[0],
        alpha: cfg.alpha[0],
        n_per_treatment: cfg.n_per_treatment[0],
        t_len: cfg.t_len,
        corr_type: cfg.corr,
        loss_fraction: cfg.loss,
        replicates: cfg.replicates,
        seed: cfg.seed,
    };
    let pipeline_cfg = PipelineConfig {
        p0: cfg.p0,
        ..PipelineConfig::default()
    };
    let single = cfg.pi.len() == 1 && cfg.alpha.len() == 1 && cfg.n_per_treatment.len() == 1;
    let dir = PathBuf::from(&cfg.out);
    if single {
        let report = run_comparison_with(&base, &pipeline_cfg)?;
        write_json(&dir, "report.json", &report)?;
        write_output(&dir, "estimates.csv", &io::comparison_estimates_csv(&report))?;
        write_output(&dir, "metrics.csv", &io::comparison_metrics_csv(&report))?;
        write_output(&dir, "long.csv", &io::grid_long_csv(std::slice::from_ref(&report)))?;
        println!(
            "replicates {}: mae_em {:?} mae_mode {:?} success {:?}",
            report.replicates_completed, report.mae_em, report.mae_mode, report.success_rate
        );
    } else {
        let cells = grid_configs(&base, &cfg.pi, &cfg.alpha, &cfg.n_per_treatment);
        let mut reports = Vec::with_capacity(cells.len());
        for cell in &cells {
            let report = run_comparison_with(cell, &pipeline_cfg)?;
            println!(
                "pi {:.2} alpha {:.2} n {}: mae_em {:?} mae_mode {:?}",
                cell.pi_target, cell.alpha, cell.n_per_treatment, report.mae_em, report.mae_mode
            );
            reports.push(report);
        }
        write_json(&dir, "grid.json", &reports)?;
        write_output(&dir, "long.csv", &io::grid_long_csv(&reports))?;
    }
    write_json(&dir, "resolved_config.json", &cfg)?;
    println!("outputs in {}", dir.display());
    Ok(())
}

// ---------------------------------------------------------------- bench-corn

#[derive(Args)]
struct BenchCornArgs {
    /// Loss fractions to benchmark
    #[arg(long, value_delimiter = ',')]
    loss: Option<Vec<f64>>,
    #[arg(long)]
    replicates: Option<usize>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    p0: Option<f64>,
    #[arg(long, num_args(0..=1), default_missing_value = "true")]
    time_trend: Option<bool>,
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long)]
    config: Option<PathBuf>,
}

#[derive(Serialize, Deserialize, Clone)]
#[serde(deny_unknown_fields)]
struct BenchCornFileConfig {
    bench: CornBenchConfig,
    out: String,
}

fn run_bench_corn(args: BenchCornArgs) -> Result<(), AnyError> {
    let mut cfg: BenchCornFileConfig = match &args.config {
        Some(path) => load_config(path)?,
        None => BenchCornFileConfig {
            bench: CornBenchConfig::default(),
            out: "zipem-bench-corn".into(),
        },
    };
    if let Some(loss) = &args.loss {
        cfg.bench.loss_levels = loss.clone();
    }
    if let Some(r) = args.replicates {
        cfg.bench.replicates = r;
    }
    if let Some(s) = args.seed {
        cfg.bench.seed = s;
    }
    if let Some(p) = args.p0 {
        cfg.bench.p0 = p;
    }
    if let Some(t) = args.time_trend {
        cfg.bench.time_trend = t;
    }
    if let Some(out) = &args.out {
        cfg.out = out.display().to_string();
    }

    let report = corn_benchmark(&cfg.bench)?;
    let dir = PathBuf::from(&cfg.out);
    let mut success = String::from("loss,mean_success\n");
    let mut intervals = String::from("loss,coefficient,mean,lower,upper\n");
    for level in &report.levels {
        success.push_str(&format!("{},{}\n", level.loss_fraction, level.mean_success));
        for c in &level.coefficients {
            intervals.push_str(&format!(
                "{},{},{},{},{}\n",
                level.loss_fraction, c.name, c.mean, c.lower, c.upper
            ));
        }
        println!(
            "loss {:.0}%: mean success {:.2}%",
            level.loss_fraction * 100.0,
            level.mean_success * 100.0
        );
    }
    write_json(&dir, "bench.json", &report)?;
    write_output(&dir, "success.csv", &success)?;
    write_output(&dir, "intervals.csv", &intervals)?;
    write_json(&dir, "resolved_config.json", &cfg)?;
    println!("outputs in {}", dir.display());
    Ok(())
}
