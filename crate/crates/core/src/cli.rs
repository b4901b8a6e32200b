//! Command-line front end: `geee fit`, `geee select` and `geee simulate`.
//!
//! Input is a long-format CSV with a header row, one row per observation:
//! a `subject` column, an optional `occasion` (or `time`) column that
//! orders a subject's rows, the response and the covariates. Empty cells
//! are rejected; missing occasions are simply absent rows.

use std::collections::{BTreeMap, HashMap};
use std::ffi::OsString;
use std::fmt::Write as _;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::time::Instant;

use clap::{Args, Parser, Subcommand};
use nalgebra::{DMatrix, DVector};
use serde::Serialize;

use crate::correlation::{CorrelationKind, CorrelationParams, WorkingCorrelationSpec};
use crate::data::{LongitudinalDataset, Subject};
use crate::error::GeeeError;
use crate::expectile::AsymmetrySequence;
use crate::fit::{fit_multi, FitControl, FitWarning, GeeeFit};
use crate::inference::{sandwich_general, wald_interval};
use crate::selection::{select_structure, QicOutcome, QicReport};
use crate::simulation::config::{parse_config, StudyConfig, FULL_SCALE_REPLICATIONS};
use crate::simulation::report::{render_results, study_outputs, write_all_or_nothing};
use crate::simulation::{run_study, QicFrequencyTable};

pub const EXIT_OTHER: i32 = 1;
pub const EXIT_PARSE: i32 = 3;
pub const EXIT_RANK: i32 = 4;
pub const EXIT_CONVERGENCE: i32 = 5;
pub const EXIT_NUMERICAL: i32 = 6;
pub const EXIT_CONFIG: i32 = 7;

pub const INTERCEPT: &str = "(Intercept)";

#[derive(Debug, Parser)]
#[command(name = "geee", version, about = "Expectile regression for longitudinal data")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Fit one working correlation structure and report coefficients.
    Fit(FitArgs),
    /// Compare working correlation structures by QIC.
    Select(SelectArgs),
    /// Run a Monte-Carlo study.
    Simulate(SimulateArgs),
}

#[derive(Debug, Args)]
pub struct ModelArgs {
    /// Long-format CSV file.
    #[arg(long)]
    pub data: PathBuf,
    /// Response column.
    #[arg(long)]
    pub response: String,
    /// Covariate column; `a:b` adds the product of two columns. Repeatable.
    #[arg(long = "covariate")]
    pub covariates: Vec<String>,
    #[arg(long)]
    pub no_intercept: bool,
    /// Asymmetry level in (0, 1). Repeatable; defaults to 0.5.
    #[arg(long = "tau")]
    pub taus: Vec<f64>,
    /// Divide the occasion/time column by this unit.
    #[arg(long)]
    pub time_div: Option<f64>,
}

#[derive(Debug, Args)]
pub struct FitArgs {
    #[command(flatten)]
    pub model: ModelArgs,
    #[arg(long, default_value = "ind")]
    pub structure: CorrelationKind,
    /// Confidence level of the Wald intervals.
    #[arg(long, default_value_t = 0.95)]
    pub level: f64,
    /// Directory for `coefficients.csv` and `summary.json`.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct SelectArgs {
    #[command(flatten)]
    pub model: ModelArgs,
    /// Candidate structure. Repeatable; defaults to all four.
    #[arg(long = "structure")]
    pub structures: Vec<CorrelationKind>,
    /// Directory for `qic.csv` and `summary.json`.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct SimulateArgs {
    /// Study configuration; defaults to a single baseline scenario.
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long)]
    pub out: PathBuf,
    /// Overrides the configured root seed.
    #[arg(long)]
    pub seed: Option<u64>,
    /// Run the complete standard grid at full replication count.
    #[arg(long, conflicts_with = "config")]
    pub full_scale: bool,
}

/// Failure of a command with its exit code.
#[derive(Debug, Clone, PartialEq)]
pub struct CliError {
    pub code: i32,
    pub message: String,
}

impl std::fmt::Display for CliError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(&self.message)
    }
}

impl From<GeeeError> for CliError {
    fn from(e: GeeeError) -> Self {
        let code = match e {
            GeeeError::InvalidInput(_) | GeeeError::Dimension(_) => EXIT_PARSE,
            GeeeError::Rank(_) => EXIT_RANK,
            GeeeError::DegreesOfFreedom(_) | GeeeError::Numerical(_) => EXIT_NUMERICAL,
            GeeeError::Config(_) => EXIT_CONFIG,
        };
        CliError {
            code,
            message: e.to_string(),
        }
    }
}

impl CliError {
    fn new(code: i32, message: impl Into<String>) -> Self {
        Self {
            code,
            message: message.into(),
        }
    }
}

type CliResult<T> = std::result::Result<T, CliError>;

/// A covariate term: the product of one or more columns.
#[derive(Debug, Clone, PartialEq)]
pub struct Term {
    pub name: String,
    pub columns: Vec<String>,
}

impl Term {
    pub fn parse(spec: &str) -> CliResult<Self> {
        let columns: Vec<String> = spec.split(':').map(|c| c.trim().to_string()).collect();
        if columns.iter().any(String::is_empty) {
            return Err(CliError::new(EXIT_PARSE, format!("invalid covariate `{spec}`")));
        }
        Ok(Term {
            name: columns.join(":"),
            columns,
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Formula {
    pub response: String,
    pub terms: Vec<Term>,
    pub intercept: bool,
}

impl Formula {
    pub fn new(response: &str, covariates: &[String], intercept: bool) -> CliResult<Self> {
        let terms = covariates.iter().map(|c| Term::parse(c)).collect::<CliResult<Vec<_>>>()?;
        if !intercept && terms.is_empty() {
            return Err(CliError::new(EXIT_PARSE, "the model has no covariates and no intercept"));
        }
        Ok(Formula {
            response: response.to_string(),
            terms,
            intercept,
        })
    }

    pub fn coefficient_names(&self) -> Vec<String> {
        let mut names = Vec::new();
        if self.intercept {
            names.push(INTERCEPT.to_string());
        }
        names.extend(self.terms.iter().map(|t| t.name.clone()));
        names
    }
}

fn occasion_column(headers: &[String]) -> Option<usize> {
    ["occasion", "time"]
        .iter()
        .find_map(|name| headers.iter().position(|h| h == name))
}

/// Natural order of subject identifiers: numerically when all are
/// integers, otherwise lexicographically.
fn sort_ids(ids: &mut [String]) {
    if ids.iter().all(|id| id.parse::<i64>().is_ok()) {
        ids.sort_by_key(|id| id.parse::<i64>().unwrap());
    } else {
        ids.sort();
    }
}

/// Reads a long-format CSV into a dataset. Subjects are ordered by
/// identifier and rows within a subject by occasion, so the result does
/// not depend on row order in the file.
pub fn read_long_csv(
    reader: impl std::io::Read,
    formula: &Formula,
    time_div: Option<f64>,
) -> CliResult<LongitudinalDataset> {
    let parse_err = |msg: String| CliError::new(EXIT_PARSE, msg);
    if let Some(d) = time_div {
        if !(d.is_finite() && d > 0.0) {
            return Err(parse_err(format!("--time-div must be positive, got {d}")));
        }
    }
    let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(reader);
    let headers: Vec<String> = rdr
        .headers()
        .map_err(|e| parse_err(format!("CSV header: {e}")))?
        .iter()
        .map(str::to_string)
        .collect();
    let col = |name: &str| {
        headers
            .iter()
            .position(|h| h == name)
            .ok_or_else(|| parse_err(format!("line 1: missing column `{name}` (have {})", headers.join(", "))))
    };
    let subject_col = col("subject")?;
    let occ_col = occasion_column(&headers);
    if time_div.is_some() && occ_col.is_none() {
        return Err(parse_err("--time-div needs an `occasion` or `time` column".into()));
    }
    let response_col = col(&formula.response)?;
    let term_cols: Vec<Vec<usize>> = formula
        .terms
        .iter()
        .map(|t| t.columns.iter().map(|c| col(c)).collect())
        .collect::<CliResult<_>>()?;

    struct Row {
        occasion: Option<f64>,
        line: u64,
        response: f64,
        covariates: Vec<f64>,
    }
    let mut by_subject: HashMap<String, Vec<Row>> = HashMap::new();

    for record in rdr.records() {
        let record = record.map_err(|e| parse_err(format!("CSV: {e}")))?;
        let line = record.position().map(|p| p.line()).unwrap_or(0);
        let cell = |j: usize| -> CliResult<&str> {
            let v = record.get(j).unwrap_or("");
            if v.is_empty() {
                Err(parse_err(format!(
                    "line {line}, column {} (`{}`): empty cell",
                    j + 1,
                    headers[j]
                )))
            } else {
                Ok(v)
            }
        };
        let number = |j: usize| -> CliResult<f64> {
            let v = cell(j)?;
            let x: f64 = v.parse().map_err(|_| {
                parse_err(format!(
                    "line {line}, column {} (`{}`): `{v}` is not a number",
                    j + 1,
                    headers[j]
                ))
            })?;
            if !x.is_finite() {
                return Err(parse_err(format!(
                    "line {line}, column {} (`{}`): value is not finite",
                    j + 1,
                    headers[j]
                )));
            }
            // the time unit applies wherever the time column is used
            Ok(match (time_div, occ_col) {
                (Some(d), Some(o)) if o == j => x / d,
                _ => x,
            })
        };

        let subject = cell(subject_col)?.to_string();
        let occasion = occ_col.map(number).transpose()?;
        let response = number(response_col)?;
        let covariates = term_cols
            .iter()
            .map(|cols| cols.iter().try_fold(1.0, |acc, &j| Ok::<_, CliError>(acc * number(j)?)))
            .collect::<CliResult<Vec<f64>>>()?;
        by_subject.entry(subject).or_default().push(Row {
            occasion,
            line,
            response,
            covariates,
        });
    }

    let mut ids: Vec<String> = by_subject.keys().cloned().collect();
    if ids.is_empty() {
        return Err(parse_err("the CSV has no data rows".into()));
    }
    sort_ids(&mut ids);

    let p = formula.intercept as usize + formula.terms.len();
    let mut subjects = Vec::with_capacity(ids.len());
    for id in ids {
        let mut rows = by_subject.remove(&id).expect("subject present");
        if occ_col.is_some() {
            rows.sort_by(|a, b| a.occasion.partial_cmp(&b.occasion).expect("finite occasions"));
            for w in rows.windows(2) {
                if w[0].occasion == w[1].occasion {
                    return Err(parse_err(format!(
                        "line {}: duplicate occasion {} for subject `{id}` (first on line {})",
                        w[1].line.max(w[0].line),
                        w[0].occasion.unwrap(),
                        w[1].line.min(w[0].line)
                    )));
                }
            }
        }
        let m = rows.len();
        let response = DVector::from_iterator(m, rows.iter().map(|r| r.response));
        let design = DMatrix::from_fn(m, p, |t, j| {
            if formula.intercept {
                if j == 0 {
                    1.0
                } else {
                    rows[t].covariates[j - 1]
                }
            } else {
                rows[t].covariates[j]
            }
        });
        subjects.push(Subject::new(id, response, design));
    }
    Ok(LongitudinalDataset::new(subjects)?)
}

/// Long-format CSV of a dataset; reading it back reproduces the dataset.
pub fn write_long_csv(data: &LongitudinalDataset, response: &str, covariates: &[String]) -> String {
    let mut out = format!("subject,occasion,{response}");
    for c in covariates {
        let _ = write!(out, ",{c}");
    }
    out.push('\n');
    for s in data.subjects() {
        for t in 0..s.len() {
            let _ = write!(out, "{},{},{}", s.id, t + 1, s.response[t]);
            for j in 0..s.design.ncols() {
                let _ = write!(out, ",{}", s.design[(t, j)]);
            }
            out.push('\n');
        }
    }
    out
}

fn load_model(args: &ModelArgs) -> CliResult<(Formula, AsymmetrySequence, LongitudinalDataset)> {
    let formula = Formula::new(&args.response, &args.covariates, !args.no_intercept)?;
    let values = if args.taus.is_empty() { vec![0.5] } else { args.taus.clone() };
    let taus = AsymmetrySequence::from_values(&values)?;
    let file = std::fs::File::open(&args.data)
        .map_err(|e| CliError::new(EXIT_PARSE, format!("{}: {e}", args.data.display())))?;
    let data = read_long_csv(file, &formula, args.time_div)?;
    Ok((formula, taus, data))
}

#[derive(Debug, Clone, Serialize)]
pub struct CoefficientRow {
    pub tau: f64,
    pub term: String,
    pub estimate: f64,
    pub se: f64,
    pub lower: f64,
    pub upper: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct NuisanceSummary {
    pub tau: f64,
    pub structure: CorrelationKind,
    pub sigma2: f64,
    pub alpha: Option<f64>,
    pub alpha_table: Option<Vec<Vec<f64>>>,
    pub iterations: usize,
    pub converged: bool,
}

#[derive(Debug, Clone, Serialize)]
pub struct FitSummary {
    pub structure: CorrelationKind,
    pub level: f64,
    pub n_subjects: usize,
    pub n_obs: usize,
    pub coefficients: Vec<CoefficientRow>,
    pub nuisance: Vec<NuisanceSummary>,
    pub warnings: Vec<FitWarning>,
}

fn correlation_summary(spec: &WorkingCorrelationSpec) -> (Option<f64>, Option<Vec<Vec<f64>>>) {
    match spec.params() {
        CorrelationParams::None => (None, None),
        CorrelationParams::Scalar(a) => (Some(*a), None),
        CorrelationParams::Table(t) => (
            None,
            Some(t.row_iter().map(|r| r.iter().copied().collect()).collect()),
        ),
    }
}

/// Fits and summarises; fails with the convergence code when any level
/// did not converge.
pub fn fit_summary(
    data: &LongitudinalDataset,
    formula: &Formula,
    taus: &AsymmetrySequence,
    structure: CorrelationKind,
    level: f64,
) -> CliResult<(GeeeFit, FitSummary)> {
    let fit = fit_multi(data, taus, structure, &FitControl::default())?;
    if !fit.converged() {
        let failed: Vec<String> = fit
            .blocks
            .iter()
            .filter(|b| !b.converged)
            .map(|b| b.tau.to_string())
            .collect();
        return Err(CliError::new(
            EXIT_CONVERGENCE,
            format!("{structure} fit did not converge at tau = {}", failed.join(", ")),
        ));
    }
    let cov = sandwich_general(&fit, data)?;
    let names = formula.coefficient_names();
    let coefficients = wald_interval(&fit, &cov, level)?
        .into_iter()
        .map(|c| CoefficientRow {
            tau: c.tau,
            term: names[c.index].clone(),
            estimate: c.estimate,
            se: c.se,
            lower: c.lower,
            upper: c.upper,
        })
        .collect();
    let nuisance = fit
        .blocks
        .iter()
        .map(|b| {
            let (alpha, alpha_table) = correlation_summary(&b.nuisance.correlation);
            NuisanceSummary {
                tau: b.tau.value(),
                structure: b.nuisance.correlation.kind(),
                sigma2: b.nuisance.sigma2,
                alpha,
                alpha_table,
                iterations: b.iterations,
                converged: b.converged,
            }
        })
        .collect();
    let summary = FitSummary {
        structure,
        level,
        n_subjects: data.n_subjects(),
        n_obs: data.n_obs(),
        coefficients,
        nuisance,
        warnings: fit.warnings.clone(),
    };
    Ok((fit, summary))
}

pub fn render_fit(summary: &FitSummary) -> String {
    let mut out = String::new();
    let pct = (summary.level * 100.0).to_string();
    let _ = writeln!(
        out,
        "GEEE fit, {} working correlation, {} subjects, {} observations",
        summary.structure, summary.n_subjects, summary.n_obs
    );
    for n in &summary.nuisance {
        let _ = writeln!(out, "\ntau = {}", n.tau);
        let _ = writeln!(out, "{:<16} {:>10} {:>10}   {pct}% CI", "term", "Est", "SE");
        for c in summary.coefficients.iter().filter(|c| c.tau == n.tau) {
            let _ = writeln!(
                out,
                "{:<16} {:>10.4} {:>10.4}   ({:.4}, {:.4})",
                c.term, c.estimate, c.se, c.lower, c.upper
            );
        }
        let mut line = format!("sigma2 = {:.4}", n.sigma2);
        if let Some(a) = n.alpha {
            let _ = write!(line, ", alpha = {a:.4}");
        }
        if n.structure != summary.structure {
            let _ = write!(line, ", fitted as {}", n.structure);
        }
        let _ = writeln!(out, "{line}, iterations = {}", n.iterations);
    }
    for w in &summary.warnings {
        if !matches!(w, FitWarning::StepHalved { .. }) {
            let _ = writeln!(out, "warning: {w:?}");
        }
    }
    out
}

fn coefficients_csv(rows: &[CoefficientRow]) -> CliResult<Vec<u8>> {
    let mut w = csv::Writer::from_writer(Vec::new());
    for r in rows {
        w.serialize(r)
            .map_err(|e| CliError::new(EXIT_OTHER, format!("csv output: {e}")))?;
    }
    w.into_inner()
        .map_err(|e| CliError::new(EXIT_OTHER, format!("csv output: {e}")))
}

fn json<T: Serialize>(value: &T) -> CliResult<Vec<u8>> {
    let mut out = serde_json::to_vec_pretty(value)
        .map_err(|e| CliError::new(EXIT_OTHER, format!("json output: {e}")))?;
    out.push(b'\n');
    Ok(out)
}

fn write_outputs(dir: &Path, files: &[(&str, Vec<u8>)]) -> CliResult<()> {
    write_all_or_nothing(dir, files).map_err(|e| CliError::new(EXIT_OTHER, e.to_string()))
}

pub fn cmd_fit(args: &FitArgs, stdout: &mut dyn Write) -> CliResult<()> {
    let (formula, taus, data) = load_model(&args.model)?;
    let (_, summary) = fit_summary(&data, &formula, &taus, args.structure, args.level)?;
    if let Some(dir) = &args.out {
        let files = [
            ("coefficients.csv", coefficients_csv(&summary.coefficients)?),
            ("summary.json", json(&summary)?),
        ];
        write_outputs(dir, &files)?;
    }
    emit(stdout, &render_fit(&summary))
}

#[derive(Debug, Clone, Serialize)]
struct SelectSummary<'a> {
    taus: Vec<f64>,
    report: &'a QicReport,
}

pub fn render_qic(report: &QicReport) -> String {
    let mut out = String::new();
    let _ = writeln!(out, "{:<6} {:>12} {:>12} {:>10}", "corr", "QIC", "quasi-lik", "penalty");
    for o in &report.outcomes {
        match o {
            QicOutcome::Ok(e) => {
                let _ = writeln!(
                    out,
                    "{:<6} {:>12.4} {:>12.4} {:>10.4}",
                    e.structure.short_name(),
                    e.qic,
                    e.quasi_likelihood,
                    e.penalty
                );
            }
            QicOutcome::Failed { structure, reason } => {
                let _ = writeln!(out, "{:<6} failed: {reason}", structure.short_name());
            }
        }
    }
    match report.selected {
        Some(k) => {
            let _ = writeln!(out, "selected: {k}");
        }
        None => {
            let _ = writeln!(out, "selected: none");
        }
    }
    out
}

pub fn cmd_select(args: &SelectArgs, stdout: &mut dyn Write) -> CliResult<()> {
    let (_, taus, data) = load_model(&args.model)?;
    let candidates = if args.structures.is_empty() {
        CorrelationKind::ALL.to_vec()
    } else {
        args.structures.clone()
    };
    let report = select_structure(&data, &taus, &candidates, &FitControl::default());
    if report.selected.is_none() {
        let reasons: Vec<String> = report
            .outcomes
            .iter()
            .filter_map(|o| match o {
                QicOutcome::Failed { structure, reason } => Some(format!("{structure}: {reason}")),
                QicOutcome::Ok(_) => None,
            })
            .collect();
        return Err(CliError::new(
            EXIT_CONVERGENCE,
            format!("no structure could be fitted ({})", reasons.join("; ")),
        ));
    }
    if let Some(dir) = &args.out {
        let mut w = csv::Writer::from_writer(Vec::new());
        let io = |e: csv::Error| CliError::new(EXIT_OTHER, format!("csv output: {e}"));
        w.write_record(["structure", "qic", "quasi_likelihood", "penalty", "selected"])
            .map_err(io)?;
        for e in report.outcomes.iter().filter_map(QicOutcome::entry) {
            w.write_record([
                e.structure.short_name().to_string(),
                e.qic.to_string(),
                e.quasi_likelihood.to_string(),
                e.penalty.to_string(),
                (report.selected == Some(e.structure)).to_string(),
            ])
            .map_err(io)?;
        }
        let qic_csv = w
            .into_inner()
            .map_err(|e| CliError::new(EXIT_OTHER, format!("csv output: {e}")))?;
        let summary = SelectSummary {
            taus: taus.taus().iter().map(|t| t.value()).collect(),
            report: &report,
        };
        write_outputs(dir, &[("qic.csv", qic_csv), ("summary.json", json(&summary)?)])?;
    }
    emit(stdout, &render_qic(&report))
}

pub fn cmd_simulate(args: &SimulateArgs, stdout: &mut dyn Write) -> CliResult<()> {
    let mut config = if args.full_scale {
        StudyConfig::full_grid(FULL_SCALE_REPLICATIONS, args.seed.unwrap_or(2021))?
    } else if let Some(path) = &args.config {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::new(EXIT_CONFIG, format!("{}: {e}", path.display())))?;
        parse_config(&text)?
    } else {
        parse_config("")?
    };
    if let Some(seed) = args.seed {
        config = config.with_seed(seed);
    }

    let mut results = Vec::with_capacity(config.scenarios.len());
    let mut seconds = Vec::with_capacity(config.scenarios.len());
    for scenario in &config.scenarios {
        let start = Instant::now();
        results.push(run_study(scenario)?);
        seconds.push(start.elapsed().as_secs_f64());
    }
    let files = study_outputs(&config, &results, &seconds)?;
    write_outputs(&args.out, &files)?;

    let mut text = render_results(&results);
    let table = QicFrequencyTable::from_results(&results);
    let pooled: Vec<String> = table
        .pooled
        .iter()
        .map(|(k, c)| format!("{}={c}", k.short_name()))
        .collect();
    let _ = writeln!(text, "QIC selections over all scenarios: {}", pooled.join(" "));
    emit(stdout, &text)
}

fn emit(stdout: &mut dyn Write, text: &str) -> CliResult<()> {
    stdout
        .write_all(text.as_bytes())
        .map_err(|e| CliError::new(EXIT_OTHER, format!("stdout: {e}")))
}

/// Parses arguments and runs the command. Usage errors carry clap's exit
/// code and rendered message.
pub fn run<I, T>(args: I, stdout: &mut dyn Write) -> CliResult<()>
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = Cli::try_parse_from(args).map_err(|e| CliError::new(e.exit_code(), e.render().to_string()))?;
    match &cli.command {
        Command::Fit(a) => cmd_fit(a, stdout),
        Command::Select(a) => cmd_select(a, stdout),
        Command::Simulate(a) => cmd_simulate(a, stdout),
    }
}

/// Exit code of every documented failure class.
pub fn exit_codes() -> BTreeMap<&'static str, i32> {
    BTreeMap::from([
        ("other", EXIT_OTHER),
        ("parse", EXIT_PARSE),
        ("rank", EXIT_RANK),
        ("convergence", EXIT_CONVERGENCE),
        ("numerical", EXIT_NUMERICAL),
        ("config", EXIT_CONFIG),
    ])
}
