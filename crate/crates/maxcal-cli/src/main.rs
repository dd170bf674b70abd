//! Command-line front end: moment solvers, pmf tables, calibration-metric
//! reports, post-hoc calibrators, and the synthetic-shift benchmark.
//!
//! Every subcommand is deterministic over identical inputs, and all output
//! is plain text (comma-separated tables and `name=value` lines) so runs
//! can be diffed byte for byte.
//!
//! Exit codes: 0 success; 1 usage error; 2 input-format error;
//! 3 numerical failure (non-convergence, divergence, infeasible targets).

use std::fmt;
use std::fs;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use maxcal_core::files::{render_reliability, render_strength};
use maxcal_core::solver::DEFAULT_TOL;
use maxcal_core::sweep::run_sweep;
use maxcal_core::{
    ada_ece, bin_strength, brier, cece, collect_report, ece, fit_temperature, kse, kse_average,
    label_smooth, mce, multipliers_with_tolerance, nll, read_predictions, read_prior,
    reliability_bins, render_metrics_kv, render_pmf, render_report, solve_joint_centered,
    solve_mean, solve_normalized, solve_variance, smoothed_moments, AdhocError, ConstraintForm,
    FileError, LabelError, LabelSpace, LagrangeSolution, MetricsError, MultiplierEntry,
    NormalizedTarget, PredictionSet, PriorDistribution, SolverError, SweepConfig, SweepError,
    TrainError, DEFAULT_SMOOTHING_ALPHA, DEFAULT_TEMPERATURE_GRID, TABLE_BINS,
};
use maxcal_core::{gibbs_pmf, temperature_scale};

/// A failed run, bucketed by exit code.
enum Failure {
    /// Exit 2: unreadable or malformed inputs (files, configs).
    Input(String),
    /// Exit 3: non-convergence, divergence, or infeasible targets.
    Numerical(String),
}

impl Failure {
    fn code(&self) -> u8 {
        match self {
            Failure::Input(_) => 2,
            Failure::Numerical(_) => 3,
        }
    }
}

impl fmt::Display for Failure {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Failure::Input(msg) | Failure::Numerical(msg) => f.write_str(msg),
        }
    }
}

impl From<FileError> for Failure {
    fn from(e: FileError) -> Self {
        Failure::Input(e.to_string())
    }
}

impl From<LabelError> for Failure {
    fn from(e: LabelError) -> Self {
        Failure::Input(e.to_string())
    }
}

impl From<MetricsError> for Failure {
    fn from(e: MetricsError) -> Self {
        Failure::Input(e.to_string())
    }
}

impl From<AdhocError> for Failure {
    fn from(e: AdhocError) -> Self {
        Failure::Input(e.to_string())
    }
}

impl From<SolverError> for Failure {
    fn from(e: SolverError) -> Self {
        Failure::Numerical(e.to_string())
    }
}

impl From<TrainError> for Failure {
    fn from(e: TrainError) -> Self {
        Failure::Numerical(e.to_string())
    }
}

impl From<std::io::Error> for Failure {
    fn from(e: std::io::Error) -> Self {
        Failure::Input(e.to_string())
    }
}

impl From<SweepError> for Failure {
    fn from(e: SweepError) -> Self {
        match e {
            SweepError::Train(inner) => Failure::from(inner),
            other => Failure::Input(other.to_string()),
        }
    }
}

#[derive(Parser)]
#[command(
    name = "maxcal",
    version,
    about = "Constrained maximum-entropy calibration toolkit",
    subcommand_required = true,
    arg_required_else_help = true
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Solve constraint multipliers for a class prior.
    Solve(SolveArgs),
    /// Emit a (class, probability) table for given moment targets.
    Pmf(PmfArgs),
    /// Score a prediction file with the full calibration-metric suite.
    Calibrate(CalibrateArgs),
    /// Fit a softmax temperature on validation logits by grid search.
    TempFit(TempFitArgs),
    /// Report label-smoothed per-class and global moment targets.
    Smooth(SmoothArgs),
    /// Train a single model (one loss, one seed) and write its artifacts.
    Train(RunArgs),
    /// Run the full losses x seeds x shift-levels benchmark sweep.
    Sweep(RunArgs),
    /// Aggregate sweep artifacts into a mean +/- standard-error table.
    Report(ReportArgs),
}

/// Constraint families selectable on the command line.
#[derive(Copy, Clone, ValueEnum)]
enum FormArg {
    /// First moment of the class index.
    Mean,
    /// Raw second moment of the class index.
    Variance,
    /// Mean and squared deviation from it, jointly.
    Joint,
}

impl From<FormArg> for ConstraintForm {
    fn from(f: FormArg) -> Self {
        match f {
            FormArg::Mean => ConstraintForm::Mean,
            FormArg::Variance => ConstraintForm::Variance,
            FormArg::Joint => ConstraintForm::Joint,
        }
    }
}

/// Clap validator: a smoothing strength in `[0, 1)`.
fn unit_alpha(s: &str) -> Result<f64, String> {
    let v: f64 = s.parse().map_err(|_| format!("`{s}` is not a number"))?;
    if (0.0..1.0).contains(&v) {
        Ok(v)
    } else {
        Err(format!("smoothing strength {v} is outside [0, 1)"))
    }
}

#[derive(Args)]
struct SolveArgs {
    /// Class-prior file: one probability per line, `#` comments allowed.
    #[arg(long)]
    prior: PathBuf,
    /// Constraint form to solve.
    #[arg(long, value_enum)]
    form: FormArg,
    /// Also solve per-class multipliers against blended local targets.
    #[arg(long)]
    local: bool,
    /// Label-smoothing strength folded into the moment targets.
    #[arg(long, default_value_t = 0.0, value_parser = unit_alpha)]
    smoothing_alpha: f64,
    /// Write the report here instead of stdout.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct PmfArgs {
    /// Number of classes.
    #[arg(long, default_value_t = 10)]
    classes: usize,
    /// Mean target.
    #[arg(long)]
    mean: Option<f64>,
    /// Squared-deviation (or raw second-moment, with --raw) target.
    #[arg(long)]
    variance: Option<f64>,
    /// Center of the squared deviation; defaults to the mean target or
    /// the class-index midpoint.
    #[arg(long)]
    center: Option<f64>,
    /// Emit the unnormalized constraint-expression weights instead of a
    /// normalized pmf.
    #[arg(long)]
    raw: bool,
    /// Write the table here instead of stdout.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct CalibrateArgs {
    /// Prediction file: `label,v0,..` header then one record per line.
    #[arg(long)]
    predictions: PathBuf,
    /// Number of equal-width confidence bins.
    #[arg(long, default_value_t = TABLE_BINS)]
    bins: usize,
    /// Treat value columns as raw logits and softmax them first.
    #[arg(long)]
    logits: bool,
    /// Rescale logits by this temperature before scoring (implies --logits).
    #[arg(long)]
    temperature: Option<f64>,
    /// Write the report here instead of stdout.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct TempFitArgs {
    /// Validation prediction file whose value columns are raw logits.
    #[arg(long)]
    predictions: PathBuf,
    /// Candidate temperatures (comma-separated).
    #[arg(long, value_delimiter = ',')]
    grid: Option<Vec<f64>>,
    /// Write the report here instead of stdout.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct SmoothArgs {
    /// Class-prior file: one probability per line.
    #[arg(long)]
    prior: PathBuf,
    /// Label-smoothing strength.
    #[arg(long, default_value_t = DEFAULT_SMOOTHING_ALPHA, value_parser = unit_alpha)]
    alpha: f64,
    /// Also print the smoothed one-hot target row for this class.
    #[arg(long)]
    class: Option<usize>,
    /// Write the report here instead of stdout.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct RunArgs {
    /// Run configuration file (`key = value` lines; `losses` is required).
    #[arg(long)]
    config: PathBuf,
    /// Artifacts root directory.
    #[arg(long, env = "MAXCAL_ARTIFACTS")]
    out: PathBuf,
}

#[derive(Args)]
struct ReportArgs {
    /// Artifacts root written by the train or sweep subcommand.
    #[arg(long)]
    artifacts: PathBuf,
    /// Write the table here instead of stdout.
    #[arg(long)]
    out: Option<PathBuf>,
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            use clap::error::ErrorKind;
            let _ = e.print();
            return match e.kind() {
                ErrorKind::DisplayHelp | ErrorKind::DisplayVersion => ExitCode::SUCCESS,
                _ => ExitCode::from(1),
            };
        }
    };
    match run(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(failure) => {
            eprintln!("error: {failure}");
            ExitCode::from(failure.code())
        }
    }
}

fn run(command: Command) -> Result<(), Failure> {
    match command {
        Command::Solve(args) => cmd_solve(args),
        Command::Pmf(args) => cmd_pmf(args),
        Command::Calibrate(args) => cmd_calibrate(args),
        Command::TempFit(args) => cmd_temp_fit(args),
        Command::Smooth(args) => cmd_smooth(args),
        Command::Train(args) => cmd_run(args, true),
        Command::Sweep(args) => cmd_run(args, false),
        Command::Report(args) => cmd_report(args),
    }
}

/// Print to stdout or write to the given file.
fn emit(text: &str, out: Option<&Path>) -> Result<(), Failure> {
    match out {
        Some(path) => fs::write(path, text)?,
        None => print!("{text}"),
    }
    Ok(())
}

/// Load a prior file into a distribution plus its label space.
fn load_prior(path: &Path) -> Result<(PriorDistribution, LabelSpace), Failure> {
    let probs = read_prior(path)?;
    let prior = PriorDistribution::new(probs)?;
    let ls = LabelSpace::new(prior.k())?;
    Ok((prior, ls))
}

/// One multiplier-table row; absent fields render as `-`.
fn solution_row(out: &mut String, scope: &str, class: Option<usize>, e: &MultiplierEntry) {
    let opt = |v: Option<f64>| match v {
        Some(x) => format!("{x:.6}"),
        None => "-".to_string(),
    };
    let class = match class {
        Some(c) => c.to_string(),
        None => "-".to_string(),
    };
    let _ = writeln!(
        out,
        "{scope},{class},{},{},{},{},{},{},{:.3e}",
        opt(e.mean_multiplier),
        opt(e.variance_multiplier),
        opt(e.center),
        opt(e.mean_target),
        opt(e.variance_target),
        e.iterations,
        e.residual
    );
}

fn cmd_solve(args: SolveArgs) -> Result<(), Failure> {
    let (prior, ls) = load_prior(&args.prior)?;
    let mc = smoothed_moments(&prior, &ls, args.smoothing_alpha)?;
    let form = ConstraintForm::from(args.form);
    let global = multipliers_with_tolerance(&mc, &ls, form, false, DEFAULT_TOL)?;

    let mut text = String::new();
    let _ = writeln!(text, "form={}", form_name(form));
    let _ = writeln!(text, "classes={}", ls.k());
    text.push_str(&render_metrics_kv(&[
        ("smoothing_alpha", args.smoothing_alpha),
        ("global_mean", mc.global_mean),
        ("global_variance", mc.global_variance),
        ("global_second_moment", mc.global_second_moment),
    ]));
    text.push('\n');
    text.push_str(
        "scope,class,mean_multiplier,variance_multiplier,center,mean_target,variance_target,iterations,residual\n",
    );
    solution_row(&mut text, "global", None, global.entry());
    if args.local {
        let local = multipliers_with_tolerance(&mc, &ls, form, true, DEFAULT_TOL)?;
        for (class, entry) in local.entries().iter().enumerate() {
            solution_row(&mut text, "local", Some(class), entry);
        }
    }
    emit(&text, args.out.as_deref())
}

fn form_name(form: ConstraintForm) -> &'static str {
    match form {
        ConstraintForm::Mean => "mean",
        ConstraintForm::Variance => "variance",
        ConstraintForm::Joint => "joint",
    }
}

fn cmd_pmf(args: PmfArgs) -> Result<(), Failure> {
    let ls = LabelSpace::new(args.classes)?;
    let weights = if args.raw {
        raw_weights(&args, &ls)?
    } else {
        let target = match (args.mean, args.variance) {
            (None, None) => NormalizedTarget::Unconstrained,
            (Some(mean), None) => NormalizedTarget::Mean(mean),
            (None, Some(variance)) => NormalizedTarget::Variance {
                center: args.center.unwrap_or(ls.max_value() / 2.0),
                variance,
            },
            (Some(mean), Some(variance)) => NormalizedTarget::MeanAndVariance { mean, variance },
        };
        solve_normalized(&target, &ls, DEFAULT_TOL)?.weights
    };
    emit(&render_pmf(&weights), args.out.as_deref())
}

/// Unnormalized constraint-expression weights for the requested targets.
fn raw_weights(args: &PmfArgs, ls: &LabelSpace) -> Result<Vec<f64>, Failure> {
    let solution: LagrangeSolution = match (args.mean, args.variance) {
        (Some(mean), None) => solve_mean(mean, ls, DEFAULT_TOL)?,
        (None, Some(variance)) => solve_variance(variance, ls, DEFAULT_TOL)?,
        (Some(mean), Some(variance)) => {
            solve_joint_centered(mean, variance, args.center.unwrap_or(mean), ls, DEFAULT_TOL)?
        }
        (None, None) => {
            return Err(Failure::Input(
                "--raw needs at least one of --mean / --variance".to_string(),
            ))
        }
    };
    Ok(gibbs_pmf(&solution, ls, false)?.weights)
}

fn cmd_calibrate(args: CalibrateArgs) -> Result<(), Failure> {
    let file = read_predictions(&args.predictions)?;
    let ps = if let Some(t) = args.temperature {
        let records = file
            .rows
            .iter()
            .zip(&file.labels)
            .map(|(row, &label)| {
                Ok(maxcal_core::PredictionRecord {
                    probs: temperature_scale(row, t)?,
                    label,
                })
            })
            .collect::<Result<Vec<_>, AdhocError>>()?;
        PredictionSet::new(records, file.k)?
    } else if args.logits {
        file.to_softmax_set()?
    } else {
        file.to_probability_set()?
    };
    let text = calibration_report(&ps, args.bins)?;
    emit(&text, args.out.as_deref())
}

/// Full metric suite plus reliability and bin-strength tables.
fn calibration_report(ps: &PredictionSet, bins: usize) -> Result<String, Failure> {
    let mut text = render_metrics_kv(&[
        ("accuracy", ps.accuracy()?),
        ("ece", ece(ps, bins)?),
        ("mce", mce(ps, bins)?),
        ("cece", cece(ps, bins)?),
        ("ada_ece", ada_ece(ps, bins)?),
        ("kse", kse(ps)?),
        ("kse_average", kse_average(ps)?),
        ("nll", nll(ps)?),
        ("brier", brier(ps)?),
    ]);
    text.push('\n');
    text.push_str(&render_reliability(&reliability_bins(ps, bins)?));
    text.push('\n');
    text.push_str(&render_strength(&bin_strength(ps, bins)?));
    Ok(text)
}

fn cmd_temp_fit(args: TempFitArgs) -> Result<(), Failure> {
    let file = read_predictions(&args.predictions)?;
    let grid = args
        .grid
        .unwrap_or_else(|| DEFAULT_TEMPERATURE_GRID.to_vec());
    let fit = fit_temperature(&file.rows, &file.labels, &grid)?;
    let mut text = String::from("t,nll\n");
    for (t, nll) in fit.grid.iter().zip(&fit.nll_at) {
        let _ = writeln!(text, "{t:.6},{nll:.6}");
    }
    text.push('\n');
    text.push_str(&render_metrics_kv(&[
        ("chosen_t", fit.chosen_t),
        ("nll_at_chosen", fit.nll_at_chosen),
    ]));
    emit(&text, args.out.as_deref())
}

fn cmd_smooth(args: SmoothArgs) -> Result<(), Failure> {
    let (prior, ls) = load_prior(&args.prior)?;
    if let Some(class) = args.class {
        if class >= ls.k() {
            return Err(Failure::Input(format!(
                "class {class} is out of range for {} classes",
                ls.k()
            )));
        }
    }
    let mc = smoothed_moments(&prior, &ls, args.alpha)?;
    let mut text = render_metrics_kv(&[
        ("alpha", args.alpha),
        ("global_mean", mc.global_mean),
        ("global_variance", mc.global_variance),
        ("global_second_moment", mc.global_second_moment),
    ]);
    text.push('\n');
    text.push_str("class,mean_target,second_moment_target,central_variance_target\n");
    for class in 0..ls.k() {
        let _ = writeln!(
            text,
            "{class},{:.6},{:.6},{:.6}",
            mc.local_means[class],
            mc.local_second_moments[class],
            mc.local_central_variances[class]
        );
    }
    if let Some(class) = args.class {
        let mut one_hot = vec![0.0; ls.k()];
        one_hot[class] = 1.0;
        text.push('\n');
        text.push_str(&render_pmf(&label_smooth(&one_hot, args.alpha)));
    }
    emit(&text, args.out.as_deref())
}

/// Shared body of `train` (single run) and `sweep` (full grid).
fn cmd_run(args: RunArgs, single: bool) -> Result<(), Failure> {
    let text = fs::read_to_string(&args.config)?;
    let cfg = SweepConfig::parse(&text)?;
    if single && (cfg.losses.len() != 1 || cfg.seeds.len() != 1) {
        return Err(Failure::Input(format!(
            "train runs one loss and one seed; the config lists {} losses and {} seeds (use sweep for grids)",
            cfg.losses.len(),
            cfg.seeds.len()
        )));
    }
    fs::create_dir_all(&args.out)?;
    let summary = run_sweep(&cfg, &args.out)?;
    println!(
        "wrote {} run(s) under {}",
        summary.runs.len(),
        args.out.display()
    );
    Ok(())
}

fn cmd_report(args: ReportArgs) -> Result<(), Failure> {
    let rows = collect_report(&args.artifacts)?;
    emit(&render_report(&rows), args.out.as_deref())
}
