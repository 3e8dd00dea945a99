//! Command-line front end: dataset analysis, scenario simulation, table
//! reproduction, and window calibration.
//!
//! Every output file embeds the fully resolved configuration including the
//! seed, so published results can be reproduced byte for byte. stdout
//! carries a one-line summary; traces and tables go to files.

use std::fs;
use std::path::PathBuf;

use clap::{Args, Parser, Subcommand};
use serde::Serialize;

use crate::cluster::{cluster, ClusterError, ClusterOptions, Clustering};
use crate::data::{load_dataset, write_dataset, CsvFormat, DataError, FunctionalDataset};
use crate::measure::{calibrate_m, CalibrationOutcome, Distance, MeasureConfig, MeasureError};
use crate::select::{CriterionTrace, Method, SelectError, SelectionGrid, SelectionOptions};
use crate::sim::{generate_scenario, monte_carlo, FrequencyTable, ScenarioSpec, SimError};

/// Environment variable consulted when `--seed` is absent.
pub const SEED_ENV_VAR: &str = "TWCLUST_SEED";

#[derive(Debug)]
pub enum CliError {
    /// Bad flags or parameters; exit code 2.
    Usage(String),
    /// Unreadable or malformed data; exit code 3.
    Data(String),
    /// A computation could not produce a result; exit code 4.
    Compute(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Usage(_) => 2,
            CliError::Data(_) => 3,
            CliError::Compute(_) => 4,
        }
    }
}

impl std::fmt::Display for CliError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            CliError::Usage(msg) => write!(f, "parameter: {msg}"),
            CliError::Data(msg) => write!(f, "data: {msg}"),
            CliError::Compute(msg) => write!(f, "computation: {msg}"),
        }
    }
}

impl std::error::Error for CliError {}

impl From<DataError> for CliError {
    fn from(err: DataError) -> Self {
        CliError::Data(err.to_string())
    }
}

impl From<MeasureError> for CliError {
    fn from(err: MeasureError) -> Self {
        CliError::Usage(err.to_string())
    }
}

impl From<ClusterError> for CliError {
    fn from(err: ClusterError) -> Self {
        match err {
            ClusterError::Measure(e) => e.into(),
            other => CliError::Usage(other.to_string()),
        }
    }
}

impl From<SelectError> for CliError {
    fn from(err: SelectError) -> Self {
        match err {
            SelectError::SelectionFailed | SelectError::CalibrationFailed { .. } => {
                CliError::Compute(err.to_string())
            }
            SelectError::Cluster(e) => e.into(),
            SelectError::Measure(e) => e.into(),
            other => CliError::Usage(other.to_string()),
        }
    }
}

impl From<SimError> for CliError {
    fn from(err: SimError) -> Self {
        match err {
            SimError::Data(e) => e.into(),
            SimError::Select(e) => e.into(),
            other => CliError::Usage(other.to_string()),
        }
    }
}

impl From<std::io::Error> for CliError {
    fn from(err: std::io::Error) -> Self {
        CliError::Data(err.to_string())
    }
}

fn parse_distance(s: &str) -> Result<Distance, String> {
    s.parse()
}

fn parse_method(s: &str) -> Result<Method, String> {
    s.parse()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum OutputFormat {
    Json,
    Csv,
}

fn parse_format(s: &str) -> Result<OutputFormat, String> {
    match s.to_ascii_lowercase().as_str() {
        "json" => Ok(OutputFormat::Json),
        "csv" => Ok(OutputFormat::Csv),
        other => Err(format!("unknown format {other:?}; expected json or csv")),
    }
}

#[derive(Parser, Debug)]
#[command(
    name = "twclust",
    version,
    about = "Cluster-count selection for functional data"
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Subcommand, Debug)]
pub enum Command {
    /// Select the number of clusters in a curve dataset
    SelectK(SelectKArgs),
    /// Cluster a curve dataset at a fixed k
    Cluster(ClusterArgs),
    /// Generate a labeled benchmark scenario as CSV
    Simulate(SimulateArgs),
    /// Monte-Carlo frequency table for one scenario and distance
    ReproduceTable(ReproduceTableArgs),
    /// Calibrate the ANOVA window size on a dataset
    CalibrateM(CalibrateMArgs),
}

#[derive(Args, Debug, Clone, Serialize)]
pub struct InputOpts {
    /// CSV file with one curve per row
    #[arg(long)]
    pub input: PathBuf,
    /// First row of the input holds the grid times
    #[arg(long)]
    pub grid_header: bool,
    /// Last column of the input holds integer labels
    #[arg(long)]
    pub labels: bool,
}

impl InputOpts {
    fn load(&self) -> Result<FunctionalDataset, CliError> {
        let file = fs::File::open(&self.input)
            .map_err(|e| CliError::Data(format!("{}: {e}", self.input.display())))?;
        let format = CsvFormat {
            grid_header: self.grid_header,
            labels: self.labels,
        };
        Ok(load_dataset(file, format)?)
    }
}

#[derive(Args, Debug, Clone, Serialize)]
pub struct SearchOpts {
    /// Smallest candidate cluster count
    #[arg(long, default_value_t = 1)]
    pub kmin: usize,
    /// Largest candidate cluster count
    #[arg(long, default_value_t = 8)]
    pub kmax: usize,
    /// Step of the weight grid on [0, 1]
    #[arg(long, default_value_t = 0.1)]
    pub alpha_step: f64,
    /// Dissimilarity: tw or l2
    #[arg(long, default_value = "tw", value_parser = parse_distance)]
    pub distance: Distance,
    /// ANOVA window size (odd, >= 3)
    #[arg(long, default_value_t = 5)]
    pub m: usize,
    /// Random restarts per clustering
    #[arg(long, default_value_t = 10)]
    pub restarts: usize,
    /// Iteration cap per restart
    #[arg(long, default_value_t = 100)]
    pub max_iter: usize,
    /// Reference datasets for the gap statistic
    #[arg(long, default_value_t = 20)]
    pub gap_b: usize,
}

impl SearchOpts {
    fn selection_options(&self, seed: u64) -> Result<SelectionOptions, CliError> {
        Ok(SelectionOptions {
            k_min: self.kmin,
            k_max: self.kmax,
            alpha_grid: alpha_grid_from_step(self.alpha_step)?,
            cluster: ClusterOptions {
                max_iterations: self.max_iter,
                restarts: self.restarts,
                seed,
                distance: self.distance,
                measure: MeasureConfig {
                    m: self.m,
                    ..MeasureConfig::default()
                },
            },
            gap_references: self.gap_b,
        })
    }
}

#[derive(Args, Debug)]
pub struct SelectKArgs {
    #[command(flatten)]
    pub input: InputOpts,
    #[command(flatten)]
    pub search: SearchOpts,
    /// Comma-separated criteria to run
    #[arg(
        long,
        value_delimiter = ',',
        value_parser = parse_method,
        default_value = "ch,kl,hartigan,silhouette,gap,jump,ddse,djump"
    )]
    pub methods: Vec<Method>,
    /// Master seed (env TWCLUST_SEED, then 0, when absent)
    #[arg(long)]
    pub seed: Option<u64>,
    /// Destination of the JSON report
    #[arg(long)]
    pub output: PathBuf,
}

#[derive(Args, Debug)]
pub struct ClusterArgs {
    #[command(flatten)]
    pub input: InputOpts,
    /// Number of clusters
    #[arg(long)]
    pub k: usize,
    /// Dissimilarity: tw or l2
    #[arg(long, default_value = "tw", value_parser = parse_distance)]
    pub distance: Distance,
    /// Weight on the parallelism statistic
    #[arg(long, default_value_t = 0.5)]
    pub alpha: f64,
    /// ANOVA window size (odd, >= 3)
    #[arg(long, default_value_t = 5)]
    pub m: usize,
    /// Random restarts
    #[arg(long, default_value_t = 10)]
    pub restarts: usize,
    /// Iteration cap per restart
    #[arg(long, default_value_t = 100)]
    pub max_iter: usize,
    /// Master seed (env TWCLUST_SEED, then 0, when absent)
    #[arg(long)]
    pub seed: Option<u64>,
    /// Destination of the JSON report
    #[arg(long)]
    pub output: PathBuf,
}

#[derive(Args, Debug)]
pub struct SimulateArgs {
    /// Scenario id, 1 through 4
    #[arg(long)]
    pub scenario: u8,
    /// Grid points per curve
    #[arg(long, default_value_t = 50)]
    pub r: usize,
    /// Master seed (env TWCLUST_SEED, then 0, when absent)
    #[arg(long)]
    pub seed: Option<u64>,
    /// Destination of the CSV dataset
    #[arg(long)]
    pub output: PathBuf,
}

#[derive(Args, Debug)]
pub struct ReproduceTableArgs {
    /// Scenario id, 1 through 4
    #[arg(long)]
    pub scenario: u8,
    /// Grid points per curve
    #[arg(long, default_value_t = 50)]
    pub r: usize,
    /// Monte-Carlo replicates
    #[arg(long, default_value_t = 25)]
    pub runs: usize,
    #[command(flatten)]
    pub search: SearchOpts,
    /// Comma-separated criteria to run
    #[arg(
        long,
        value_delimiter = ',',
        value_parser = parse_method,
        default_value = "ch,kl,hartigan,silhouette,gap,jump,ddse,djump"
    )]
    pub methods: Vec<Method>,
    /// Master seed (env TWCLUST_SEED, then 0, when absent)
    #[arg(long)]
    pub seed: Option<u64>,
    /// Output format: json or csv
    #[arg(long, default_value = "json", value_parser = parse_format)]
    pub format: OutputFormat,
    /// Destination of the table
    #[arg(long)]
    pub output: PathBuf,
}

#[derive(Args, Debug)]
pub struct CalibrateMArgs {
    #[command(flatten)]
    pub input: InputOpts,
    /// Nominal level of the parallelism test
    #[arg(long, default_value_t = 0.05)]
    pub level: f64,
    /// Candidate window sizes
    #[arg(long, value_delimiter = ',', default_value = "3,5,7,9")]
    pub candidates: Vec<usize>,
    /// Permutation replicates
    #[arg(long, default_value_t = 100)]
    pub permutations: usize,
    /// Master seed (env TWCLUST_SEED, then 0, when absent)
    #[arg(long)]
    pub seed: Option<u64>,
    /// Optional JSON report
    #[arg(long)]
    pub output: Option<PathBuf>,
}

/// Expand a step into the weight grid 0, step, …, 1.
fn alpha_grid_from_step(step: f64) -> Result<Vec<f64>, CliError> {
    if !(step > 0.0 && step <= 1.0) {
        return Err(CliError::Usage(format!(
            "alpha step must lie in (0, 1], got {step}"
        )));
    }
    let count = (1.0 / step).round();
    if ((count * step) - 1.0).abs() > 1e-9 {
        return Err(CliError::Usage(format!(
            "alpha step {step} does not divide [0, 1] evenly"
        )));
    }
    let count = count as usize;
    Ok((0..=count).map(|i| i as f64 / count as f64).collect())
}

fn resolve_seed(flag: Option<u64>) -> Result<u64, CliError> {
    if let Some(seed) = flag {
        return Ok(seed);
    }
    match std::env::var(SEED_ENV_VAR) {
        Ok(raw) => raw.parse().map_err(|_| {
            CliError::Usage(format!("{SEED_ENV_VAR}={raw} is not a valid 64-bit seed"))
        }),
        Err(_) => Ok(0),
    }
}

fn write_json<T: Serialize>(path: &PathBuf, value: &T) -> Result<(), CliError> {
    let mut text = serde_json::to_string_pretty(value)
        .map_err(|e| CliError::Compute(format!("serialization failed: {e}")))?;
    text.push('\n');
    fs::write(path, text).map_err(|e| CliError::Data(format!("{}: {e}", path.display())))?;
    Ok(())
}

#[derive(Serialize)]
struct SelectKConfig<'a> {
    command: &'static str,
    input: &'a InputOpts,
    methods: &'a [Method],
    seed: u64,
    options: &'a SelectionOptions,
}

#[derive(Serialize)]
struct SelectKReport<'a> {
    config: SelectKConfig<'a>,
    summary: Vec<SelectionSummary>,
    traces: Vec<CriterionTrace>,
}

#[derive(Serialize)]
struct SelectionSummary {
    method: Method,
    k_opt: usize,
    alpha_opt: Option<f64>,
}

#[derive(Serialize)]
struct ClusterConfig<'a> {
    command: &'static str,
    input: &'a InputOpts,
    k: usize,
    seed: u64,
    options: &'a ClusterOptions,
}

#[derive(Serialize)]
struct ClusterReport<'a> {
    config: ClusterConfig<'a>,
    clustering: &'a Clustering,
}

#[derive(Serialize)]
struct SimulateConfig {
    command: &'static str,
    scenario: ScenarioSpec,
    seed: u64,
}

#[derive(Serialize)]
struct TableConfig<'a> {
    command: &'static str,
    scenario: ScenarioSpec,
    runs: usize,
    methods: &'a [Method],
    seed: u64,
    format: OutputFormat,
    options: &'a SelectionOptions,
}

#[derive(Serialize)]
struct TableReport<'a> {
    config: TableConfig<'a>,
    table: &'a FrequencyTable,
}

#[derive(Serialize)]
struct CalibrateConfig<'a> {
    command: &'static str,
    input: &'a InputOpts,
    level: f64,
    candidates: &'a [usize],
    permutations: usize,
    seed: u64,
}

#[derive(Serialize)]
struct CalibrateReport<'a> {
    config: CalibrateConfig<'a>,
    result: &'a CalibrationOutcome,
}

/// Execute a parsed command; returns the one-line stdout summary.
pub fn run(cli: Cli) -> Result<String, CliError> {
    match cli.command {
        Command::SelectK(args) => run_select_k(args),
        Command::Cluster(args) => run_cluster(args),
        Command::Simulate(args) => run_simulate(args),
        Command::ReproduceTable(args) => run_reproduce_table(args),
        Command::CalibrateM(args) => run_calibrate_m(args),
    }
}

fn dedup_methods(methods: &[Method]) -> Vec<Method> {
    let mut seen = Vec::new();
    for &m in methods {
        if !seen.contains(&m) {
            seen.push(m);
        }
    }
    seen
}

fn run_select_k(args: SelectKArgs) -> Result<String, CliError> {
    let seed = resolve_seed(args.seed)?;
    let methods = dedup_methods(&args.methods);
    let dataset = args.input.load()?;
    let options = args.search.selection_options(seed)?;

    let grid = SelectionGrid::compute(&dataset, &options, &methods)?;
    let mut traces = Vec::with_capacity(methods.len());
    for &method in &methods {
        traces.push(grid.trace(method)?);
    }

    let summary: Vec<SelectionSummary> = traces
        .iter()
        .map(|t| SelectionSummary {
            method: t.method,
            k_opt: t.k_opt,
            alpha_opt: t.alpha_opt,
        })
        .collect();
    let report = SelectKReport {
        config: SelectKConfig {
            command: "select-k",
            input: &args.input,
            methods: &methods,
            seed,
            options: &options,
        },
        summary,
        traces,
    };
    write_json(&args.output, &report)?;

    let line = report
        .summary
        .iter()
        .map(|s| match s.alpha_opt {
            Some(a) => format!("{}: K={} (alpha={a})", s.method, s.k_opt),
            None => format!("{}: K={}", s.method, s.k_opt),
        })
        .collect::<Vec<_>>()
        .join("; ");
    Ok(format!("{line} -> {}", args.output.display()))
}

fn run_cluster(args: ClusterArgs) -> Result<String, CliError> {
    let seed = resolve_seed(args.seed)?;
    let dataset = args.input.load()?;
    let options = ClusterOptions {
        max_iterations: args.max_iter,
        restarts: args.restarts,
        seed,
        distance: args.distance,
        measure: MeasureConfig {
            alpha: args.alpha,
            m: args.m,
            ..MeasureConfig::default()
        },
    };
    let clustering = cluster(&dataset, args.k, &options)?;
    let report = ClusterReport {
        config: ClusterConfig {
            command: "cluster",
            input: &args.input,
            k: args.k,
            seed,
            options: &options,
        },
        clustering: &clustering,
    };
    write_json(&args.output, &report)?;
    Ok(format!(
        "k={} sizes={:?} converged={} objective={:.6} -> {}",
        clustering.k,
        clustering.sizes,
        clustering.converged,
        clustering.objective,
        args.output.display()
    ))
}

fn run_simulate(args: SimulateArgs) -> Result<String, CliError> {
    let seed = resolve_seed(args.seed)?;
    let spec = ScenarioSpec::standard(args.scenario)?.with_grid_len(args.r);
    let dataset = generate_scenario(&spec, seed)?;

    let config = SimulateConfig {
        command: "simulate",
        scenario: spec,
        seed,
    };
    let header = serde_json::to_string(&config)
        .map_err(|e| CliError::Compute(format!("serialization failed: {e}")))?;
    let mut bytes = format!("# config: {header}\n").into_bytes();
    write_dataset(
        &dataset,
        &mut bytes,
        CsvFormat {
            grid_header: true,
            labels: true,
        },
    )?;
    fs::write(&args.output, bytes)
        .map_err(|e| CliError::Data(format!("{}: {e}", args.output.display())))?;
    Ok(format!(
        "scenario {}: {} curves x {} points -> {}",
        spec.id,
        dataset.n(),
        dataset.r(),
        args.output.display()
    ))
}

fn run_reproduce_table(args: ReproduceTableArgs) -> Result<String, CliError> {
    let seed = resolve_seed(args.seed)?;
    let methods = dedup_methods(&args.methods);
    let spec = ScenarioSpec::standard(args.scenario)?.with_grid_len(args.r);
    let options = args.search.selection_options(seed)?;

    let table = monte_carlo(&spec, &methods, &options, args.runs, seed)?;
    let config = TableConfig {
        command: "reproduce-table",
        scenario: spec,
        runs: args.runs,
        methods: &methods,
        seed,
        format: args.format,
        options: &options,
    };
    match args.format {
        OutputFormat::Json => {
            write_json(&args.output, &TableReport { config, table: &table })?;
        }
        OutputFormat::Csv => {
            let header = serde_json::to_string(&config)
                .map_err(|e| CliError::Compute(format!("serialization failed: {e}")))?;
            let text = format!("# config: {header}\n{}", table.to_csv());
            fs::write(&args.output, text)
                .map_err(|e| CliError::Data(format!("{}: {e}", args.output.display())))?;
        }
    }

    let line = table
        .methods
        .iter()
        .map(|m| {
            let best = m
                .counts
                .iter()
                .enumerate()
                .max_by_key(|(_, &c)| c)
                .map(|(idx, _)| table.k_values[idx])
                .unwrap_or(0);
            format!("{}: mode K={best}", m.method)
        })
        .collect::<Vec<_>>()
        .join("; ");
    Ok(format!(
        "scenario {} ({} runs, {}): {line} -> {}",
        spec.id,
        table.runs,
        table.distance,
        args.output.display()
    ))
}

fn run_calibrate_m(args: CalibrateMArgs) -> Result<String, CliError> {
    let seed = resolve_seed(args.seed)?;
    let dataset = args.input.load()?;
    let result = calibrate_m(
        &dataset,
        args.level,
        &args.candidates,
        args.permutations,
        seed,
    )?;

    let mut lines = Vec::with_capacity(result.levels.len() + 1);
    for level in &result.levels {
        lines.push(format!(
            "m={}: empirical level {:.4} ({} rejections / {} trials)",
            level.m, level.empirical_level, level.rejections, level.trials
        ));
    }
    lines.push(format!(
        "chosen m = {} (nominal level {})",
        result.chosen_m, result.nominal_level
    ));

    if let Some(path) = &args.output {
        let report = CalibrateReport {
            config: CalibrateConfig {
                command: "calibrate-m",
                input: &args.input,
                level: args.level,
                candidates: &args.candidates,
                permutations: args.permutations,
                seed,
            },
            result: &result,
        };
        write_json(path, &report)?;
    }
    Ok(lines.join("\n"))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn alpha_grid_step_expansion() {
        let grid = alpha_grid_from_step(0.1).unwrap();
        assert_eq!(grid.len(), 11);
        assert_eq!(grid[0], 0.0);
        assert_eq!(grid[10], 1.0);
        assert_eq!(grid[5], 0.5);

        assert_eq!(alpha_grid_from_step(0.5).unwrap(), vec![0.0, 0.5, 1.0]);
        assert_eq!(alpha_grid_from_step(1.0).unwrap(), vec![0.0, 1.0]);
        assert!(alpha_grid_from_step(0.0).is_err());
        assert!(alpha_grid_from_step(0.3).is_err());
    }

    #[test]
    fn method_list_parses_and_dedups() {
        let methods: Vec<Method> = "ch,jump,ch"
            .split(',')
            .map(|s| s.parse().unwrap())
            .collect();
        assert_eq!(dedup_methods(&methods), vec![Method::Ch, Method::Jump]);
    }
}
