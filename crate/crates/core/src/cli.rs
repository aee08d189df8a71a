//! Command-line driver.
//!
//! Exit codes: 0 success, 2 invalid input or flags, 3 runtime failure
//! (a stream or file ran out, or a run hit its sample-size cap).

use std::fs;
use std::io::{self, Read};
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::{Deserialize, Serialize};

use crate::engine::{
    run_sequential, ObservationSource, StoppingRule, StudyConfig, DEFAULT_CAP, DEFAULT_GAMMA,
};
use crate::error::Error;
use crate::harness::run_study;
use crate::population::{IncomeDistribution, PopulationModel, PopulationParams};
use crate::risk::{min_risk, optimal_n};
use crate::tables::{reproduce_tables, summary_to_csv, write_tables, TablesSettings};

pub const EXIT_OK: i32 = 0;
pub const EXIT_VALIDATION: i32 = 2;
pub const EXIT_RUNTIME: i32 = 3;

const SEED_ENV: &str = "SEQGINI_SEED";

#[derive(Debug)]
pub enum CliError {
    Validation(String),
    Runtime(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            Self::Validation(_) => EXIT_VALIDATION,
            Self::Runtime(_) => EXIT_RUNTIME,
        }
    }

    fn message(&self) -> &str {
        match self {
            Self::Validation(m) | Self::Runtime(m) => m,
        }
    }
}

impl From<Error> for CliError {
    fn from(e: Error) -> Self {
        match &e {
            Error::InvalidConfig(_)
            | Error::InvalidModel(_)
            | Error::RejectedObservation { .. }
            | Error::MalformedInput { .. }
            | Error::InsufficientReplications { .. }
            | Error::InsufficientSample { .. } => Self::Validation(e.to_string()),
            _ => Self::Runtime(e.to_string()),
        }
    }
}

type CliResult<T> = std::result::Result<T, CliError>;

#[derive(Debug, Parser)]
#[command(
    name = "seqgini",
    version,
    about = "Sequential minimum-risk estimation of the Gini index"
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Run a replication study for one distribution.
    Simulate(SimulateArgs),
    /// Apply the stopping rule to incomes read from a CSV file.
    Estimate(EstimateArgs),
    /// Print exact population parameters of a distribution.
    Params(ParamsArgs),
    /// Reproduce the four summary tables for the reference distributions.
    Tables(TablesArgs),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Format {
    Csv,
    Json,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum RuleArg {
    Plain,
    Guarded,
}

impl From<RuleArg> for StoppingRule {
    fn from(r: RuleArg) -> Self {
        match r {
            RuleArg::Plain => StoppingRule::Plain,
            RuleArg::Guarded => StoppingRule::Guarded,
        }
    }
}

/// Options shared by every subcommand that runs the stopping rule.
#[derive(Debug, Clone, Args)]
pub struct RuleArgs {
    /// Cost weight of one unit of squared error.
    #[arg(long = "A")]
    pub a: Option<f64>,
    /// Cost of one observation.
    #[arg(long = "c")]
    pub c: Option<f64>,
    /// Pilot sample size (at least 4).
    #[arg(long)]
    pub m: Option<usize>,
    #[arg(long, value_enum)]
    pub rule: Option<RuleArg>,
    /// Exponent of the guard term, in (0, 0.5).
    #[arg(long)]
    pub gamma: Option<f64>,
    /// Upper bound on the sample size of one run.
    #[arg(long)]
    pub cap: Option<usize>,
    /// JSON file with default values for any flag; flags win.
    #[arg(long)]
    pub config: Option<PathBuf>,
}

#[derive(Debug, Clone, Args)]
pub struct SimulateArgs {
    #[arg(long)]
    pub dist: Option<String>,
    /// Distribution parameter as key=value; repeatable.
    #[arg(long = "param", value_parser = parse_param)]
    pub params: Vec<(String, f64)>,
    #[command(flatten)]
    pub rule: RuleArgs,
    #[arg(long)]
    pub reps: Option<usize>,
    /// Base seed; defaults to $SEQGINI_SEED, then 1.
    #[arg(long)]
    pub seed: Option<u64>,
    /// Worker threads (0 = all cores).
    #[arg(long)]
    pub workers: Option<usize>,
    #[arg(long)]
    pub out: Option<PathBuf>,
    #[arg(long, value_enum)]
    pub format: Option<Format>,
}

#[derive(Debug, Clone, Args)]
pub struct EstimateArgs {
    /// CSV file with a single `income` column.
    #[arg(long)]
    pub input: PathBuf,
    #[command(flatten)]
    pub rule: RuleArgs,
    #[arg(long)]
    pub out: Option<PathBuf>,
    #[arg(long, value_enum)]
    pub format: Option<Format>,
}

#[derive(Debug, Clone, Args)]
pub struct ParamsArgs {
    #[arg(long)]
    pub dist: String,
    #[arg(long = "param", value_parser = parse_param)]
    pub params: Vec<(String, f64)>,
    #[arg(long = "A")]
    pub a: Option<f64>,
    #[arg(long = "c")]
    pub c: Option<f64>,
    #[arg(long, value_enum, default_value = "json")]
    pub format: Format,
}

#[derive(Debug, Clone, Args)]
pub struct TablesArgs {
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub out_dir: PathBuf,
    #[arg(long)]
    pub reps: Option<usize>,
    #[arg(long)]
    pub batches: Option<usize>,
    #[arg(long)]
    pub batch_reps: Option<usize>,
    #[arg(long)]
    pub workers: Option<usize>,
    /// Also write per-replication (N, G_N) pairs to raw.csv.
    #[arg(long)]
    pub emit_raw: bool,
    #[command(flatten)]
    pub rule: RuleArgs,
}

fn parse_param(s: &str) -> std::result::Result<(String, f64), String> {
    let (k, v) = s
        .split_once('=')
        .ok_or_else(|| format!("expected key=value, got '{s}'"))?;
    let v: f64 = v
        .trim()
        .parse()
        .map_err(|_| format!("parameter '{k}' has non-numeric value '{v}'"))?;
    Ok((k.trim().to_string(), v))
}

/// Values read from `--config`. Every field is optional and mirrors a flag.
#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ConfigFile {
    pub dist: Option<String>,
    #[serde(default)]
    pub params: std::collections::BTreeMap<String, f64>,
    #[serde(rename = "A")]
    pub a: Option<f64>,
    pub c: Option<f64>,
    pub m: Option<usize>,
    pub rule: Option<RuleArg>,
    pub gamma: Option<f64>,
    pub cap: Option<usize>,
    pub reps: Option<usize>,
    pub seed: Option<u64>,
    pub workers: Option<usize>,
    pub format: Option<Format>,
    pub batches: Option<usize>,
    pub batch_reps: Option<usize>,
}

impl ConfigFile {
    fn load(path: Option<&Path>) -> CliResult<Self> {
        let Some(path) = path else {
            return Ok(Self::default());
        };
        let text = fs::read_to_string(path)
            .map_err(|e| CliError::Validation(format!("--config {}: {e}", path.display())))?;
        serde_json::from_str(&text)
            .map_err(|e| CliError::Validation(format!("--config {}: {e}", path.display())))
    }
}

fn env_seed() -> CliResult<Option<u64>> {
    match std::env::var(SEED_ENV) {
        Ok(v) => v.trim().parse().map(Some).map_err(|_| {
            CliError::Validation(format!("{SEED_ENV} must be an unsigned integer, got '{v}'"))
        }),
        Err(_) => Ok(None),
    }
}

fn resolve_seed(flag: Option<u64>, file: &ConfigFile) -> CliResult<u64> {
    Ok(match flag.or(file.seed) {
        Some(s) => s,
        None => env_seed()?.unwrap_or(1),
    })
}

fn study_config(args: &RuleArgs, file: &ConfigFile, seed: u64) -> CliResult<StudyConfig> {
    let defaults = StudyConfig::default();
    let config = StudyConfig {
        a: args.a.or(file.a).unwrap_or(defaults.a),
        c: args.c.or(file.c).unwrap_or(defaults.c),
        m: args.m.or(file.m).unwrap_or(defaults.m),
        rule: args.rule.or(file.rule).map(Into::into).unwrap_or_default(),
        gamma: args.gamma.or(file.gamma).unwrap_or(DEFAULT_GAMMA),
        seed,
        cap: args.cap.or(file.cap).unwrap_or(DEFAULT_CAP),
        record_trajectory: false,
    };
    config.validate().map_err(|e| {
        let flag = match e.to_string() {
            m if m.contains("A must") => "--A",
            m if m.contains("c must") => "--c",
            m if m.contains("m must") => "--m",
            m if m.contains("gamma") => "--gamma",
            _ => "--cap",
        };
        CliError::Validation(format!("{flag}: {e}"))
    })?;
    Ok(config)
}

fn model_from(
    dist: Option<&str>,
    flag_params: &[(String, f64)],
    file: &ConfigFile,
) -> CliResult<PopulationModel> {
    let dist = dist
        .or(file.dist.as_deref())
        .ok_or_else(|| CliError::Validation("--dist is required".into()))?;
    let mut params: Vec<(String, f64)> = file.params.iter().map(|(k, v)| (k.clone(), *v)).collect();
    params.extend(flag_params.iter().cloned());
    PopulationModel::from_parts(dist, &params)
        .map_err(|e| CliError::Validation(format!("--dist/--param: {e}")))
}

fn emit(out: Option<&Path>, body: &str) -> CliResult<()> {
    match out {
        Some(path) => {
            if let Some(parent) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
                fs::create_dir_all(parent).map_err(|e| {
                    CliError::Runtime(format!("creating {}: {e}", parent.display()))
                })?;
            }
            fs::write(path, body)
                .map_err(|e| CliError::Runtime(format!("writing {}: {e}", path.display())))
        }
        None => {
            print!("{body}");
            Ok(())
        }
    }
}

fn to_json<T: Serialize>(value: &T) -> String {
    serde_json::to_string_pretty(value).expect("serializable") + "\n"
}

fn to_csv<T: Serialize>(value: &T) -> CliResult<String> {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.serialize(value)
        .map_err(|e| CliError::Runtime(e.to_string()))?;
    let bytes = w
        .into_inner()
        .map_err(|e| CliError::Runtime(e.to_string()))?;
    Ok(String::from_utf8(bytes).expect("utf-8"))
}

fn cmd_simulate(args: &SimulateArgs) -> CliResult<()> {
    let file = ConfigFile::load(args.rule.config.as_deref())?;
    let model = model_from(args.dist.as_deref(), &args.params, &file)?;
    let seed = resolve_seed(args.seed, &file)?;
    let config = study_config(&args.rule, &file, seed)?;
    let reps = args.reps.or(file.reps).unwrap_or(5000);
    if reps < 2 {
        return Err(CliError::Validation(format!(
            "--reps: need at least 2 replications, got {reps}"
        )));
    }
    let workers = args.workers.or(file.workers).unwrap_or(0);
    let format = args.format.or(file.format).unwrap_or(Format::Csv);

    let summary = run_study(&model, &config, reps, workers)?;
    if summary.cap_hits > 0 {
        return Err(CliError::Runtime(format!(
            "{} replication(s) reached the cap of {} observations",
            summary.cap_hits, config.cap
        )));
    }
    let body = match format {
        Format::Csv => summary_to_csv(&summary)?,
        Format::Json => to_json(&summary),
    };
    emit(args.out.as_deref(), &body)?;
    let line = format!(
        "{}: N_bar = {:.4} (se {:.4}), n_c = {:.2}, N_bar/n_c = {:.4}, ratio regret = {:.4}",
        summary.model,
        summary.n_bar,
        summary.se_n,
        summary.risk.n_c,
        summary.risk.n_ratio,
        summary.risk.ratio_regret
    );
    if args.out.is_some() {
        println!("{line}");
    } else {
        eprintln!("{line}");
    }
    Ok(())
}

/// Reads incomes row by row from a single-column CSV with an `income` header.
pub struct CsvIncomeSource<R: Read> {
    records: csv::StringRecordsIntoIter<R>,
    row: usize,
}

impl<R: Read> CsvIncomeSource<R> {
    pub fn new(reader: R) -> Result<Self, Error> {
        let mut rdr = csv::ReaderBuilder::new()
            .trim(csv::Trim::All)
            .from_reader(reader);
        let headers = rdr
            .headers()
            .map_err(|e| Error::MalformedInput {
                row: 0,
                message: format!("unreadable header: {e}"),
            })?
            .clone();
        if headers.len() != 1 || &headers[0] != "income" {
            return Err(Error::MalformedInput {
                row: 0,
                message: format!(
                    "expected a single 'income' column, found header {:?}",
                    headers.iter().collect::<Vec<_>>()
                ),
            });
        }
        Ok(Self {
            records: rdr.into_records(),
            row: 0,
        })
    }
}

impl<R: Read> ObservationSource for CsvIncomeSource<R> {
    fn next_observation(&mut self) -> Result<Option<f64>, Error> {
        let Some(record) = self.records.next() else {
            return Ok(None);
        };
        self.row += 1;
        let row = self.row;
        let record = record.map_err(|e| Error::MalformedInput {
            row,
            message: e.to_string(),
        })?;
        let field = record.get(0).unwrap_or("");
        let value: f64 = field.parse().map_err(|_| Error::MalformedInput {
            row,
            message: format!("'{field}' is not a number"),
        })?;
        if !(value.is_finite() && value > 0.0) {
            return Err(Error::MalformedInput {
                row,
                message: format!("income must be finite and > 0, got {field}"),
            });
        }
        Ok(Some(value))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EstimateReport {
    pub n: usize,
    pub gini: f64,
    pub v2: f64,
    pub threshold: f64,
    pub threshold_history_len: usize,
    pub sampling_cost: f64,
    pub stopped_by_cap: bool,
    pub rule: StoppingRule,
}

fn cmd_estimate(args: &EstimateArgs) -> CliResult<()> {
    let file = ConfigFile::load(args.rule.config.as_deref())?;
    let config = study_config(&args.rule, &file, 0)?;
    let format = args.format.or(file.format).unwrap_or(Format::Json);
    let handle = fs::File::open(&args.input)
        .map_err(|e| CliError::Validation(format!("--input {}: {e}", args.input.display())))?;
    let mut source = CsvIncomeSource::new(io::BufReader::new(handle))?;
    let result = match run_sequential(&mut source, &config) {
        Ok(r) => r,
        Err(Error::InsufficientData {
            n_reached,
            last_threshold,
        }) => {
            return Err(CliError::Runtime(format!(
                "{} exhausted after {n_reached} rows before stopping (current threshold {last_threshold})",
                args.input.display()
            )))
        }
        Err(e) => return Err(e.into()),
    };
    let report = EstimateReport {
        n: result.n_final,
        gini: result.gini_final,
        v2: result.v2_final,
        threshold: result.threshold_final,
        threshold_history_len: result.checks,
        sampling_cost: config.c * result.n_final as f64,
        stopped_by_cap: result.stopped_by_cap,
        rule: config.rule,
    };
    let body = match format {
        Format::Csv => to_csv(&report)?,
        Format::Json => to_json(&report),
    };
    emit(args.out.as_deref(), &body)?;
    if report.stopped_by_cap {
        return Err(CliError::Runtime(format!(
            "reached the cap of {} rows before the stopping condition held",
            config.cap
        )));
    }
    Ok(())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ParamsReport {
    pub model: String,
    #[serde(flatten)]
    pub params: PopulationParams,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub n_c: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub min_risk: Option<f64>,
}

fn cmd_params(args: &ParamsArgs) -> CliResult<()> {
    let model = model_from(Some(&args.dist), &args.params, &ConfigFile::default())?;
    let params = model.population_params()?;
    let (n_c, risk) = match (args.a, args.c) {
        (Some(a), Some(c)) => {
            if !(a > 0.0 && c > 0.0 && a.is_finite() && c.is_finite()) {
                return Err(CliError::Validation(
                    "--A and --c must be finite and > 0".into(),
                ));
            }
            let n_c = optimal_n(params.xi2, a, c);
            (Some(n_c), Some(min_risk(n_c, c)))
        }
        (None, None) => (None, None),
        _ => {
            return Err(CliError::Validation(
                "--A and --c must be given together".into(),
            ))
        }
    };
    let report = ParamsReport {
        model: model.label(),
        params,
        n_c,
        min_risk: risk,
    };
    let body = match args.format {
        Format::Json => to_json(&report),
        Format::Csv => {
            let mut header = vec![
                "model", "mu", "sigma2", "delta", "sigma1_2", "tau", "xi2", "gini",
            ];
            let mut row = vec![
                report.model.clone(),
                params.mu.to_string(),
                params.sigma2.to_string(),
                params.delta.to_string(),
                params.sigma1_2.to_string(),
                params.tau.to_string(),
                params.xi2.to_string(),
                params.gini.to_string(),
            ];
            if let (Some(n_c), Some(r)) = (n_c, risk) {
                header.extend(["n_c", "min_risk"]);
                row.extend([n_c.to_string(), r.to_string()]);
            }
            let mut w = csv::Writer::from_writer(Vec::new());
            w.write_record(&header)
                .and_then(|_| w.write_record(&row))
                .map_err(|e| CliError::Runtime(e.to_string()))?;
            String::from_utf8(
                w.into_inner()
                    .map_err(|e| CliError::Runtime(e.to_string()))?,
            )
            .expect("utf-8")
        }
    };
    print!("{body}");
    Ok(())
}

fn cmd_tables(args: &TablesArgs) -> CliResult<()> {
    let file = ConfigFile::load(args.rule.config.as_deref())?;
    let seed = resolve_seed(args.seed, &file)?;
    let study = study_config(&args.rule, &file, seed)?;
    let defaults = TablesSettings::default();
    let settings = TablesSettings {
        study,
        reps: args.reps.or(file.reps).unwrap_or(defaults.reps),
        batches: args.batches.or(file.batches).unwrap_or(defaults.batches),
        batch_reps: args
            .batch_reps
            .or(file.batch_reps)
            .unwrap_or(defaults.batch_reps),
    };
    if settings.reps < 2 {
        return Err(CliError::Validation(format!(
            "--reps: need at least 2, got {}",
            settings.reps
        )));
    }
    if settings.batch_reps < 2 {
        return Err(CliError::Validation(format!(
            "--batch-reps: need at least 2, got {}",
            settings.batch_reps
        )));
    }
    if settings.batches < 1 {
        return Err(CliError::Validation("--batches: need at least 1".into()));
    }
    let workers = args.workers.or(file.workers).unwrap_or(0);
    let tables = reproduce_tables(
        &PopulationModel::reference_models(),
        &settings,
        workers,
        args.emit_raw,
    )?;
    if let Some(s) = tables.summaries.iter().find(|s| s.cap_hits > 0) {
        return Err(CliError::Runtime(format!(
            "{}: {} replication(s) reached the cap of {} observations",
            s.model, s.cap_hits, study.cap
        )));
    }
    write_tables(&tables, &args.out_dir).map_err(|e| {
        CliError::Runtime(format!("writing tables to {}: {e}", args.out_dir.display()))
    })?;
    for row in &tables.table2 {
        println!(
            "{}: N_bar = {:.4}, n_c = {:.2}, N_bar/n_c = {:.4}, ratio regret = {:.4}",
            row.distribution, row.n_bar, row.n_c, row.n_ratio, row.ratio_regret
        );
    }
    Ok(())
}

pub fn execute(cli: &Cli) -> CliResult<()> {
    match &cli.command {
        Command::Simulate(a) => cmd_simulate(a),
        Command::Estimate(a) => cmd_estimate(a),
        Command::Params(a) => cmd_params(a),
        Command::Tables(a) => cmd_tables(a),
    }
}

/// Parses `args` and runs the selected subcommand, returning the exit code.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() {
                EXIT_VALIDATION
            } else {
                EXIT_OK
            };
        }
    };
    match execute(&cli) {
        Ok(()) => EXIT_OK,
        Err(e) => {
            eprintln!("error: {}", e.message());
            e.exit_code()
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn param_parsing() {
        assert_eq!(parse_param("rate=5").unwrap(), ("rate".to_string(), 5.0));
        assert!(parse_param("rate").is_err());
        assert!(parse_param("rate=fast").is_err());
    }

    #[test]
    fn csv_source_reads_in_order() {
        let mut src = CsvIncomeSource::new("income\n3.5\n1\n 2 \n".as_bytes()).unwrap();
        let mut got = Vec::new();
        while let Some(x) = src.next_observation().unwrap() {
            got.push(x);
        }
        assert_eq!(got, vec![3.5, 1.0, 2.0]);
    }

    #[test]
    fn csv_source_names_bad_rows() {
        let mut src = CsvIncomeSource::new("income\n1\n-4\n".as_bytes()).unwrap();
        assert_eq!(src.next_observation().unwrap(), Some(1.0));
        match src.next_observation() {
            Err(Error::MalformedInput { row, .. }) => assert_eq!(row, 2),
            other => panic!("unexpected {other:?}"),
        }
        assert!(CsvIncomeSource::new("wage\n1\n".as_bytes()).is_err());
    }

    #[test]
    fn config_file_rejects_unknown_keys() {
        assert!(serde_json::from_str::<ConfigFile>(r#"{"A": 1.0, "bogus": 2}"#).is_err());
        let f: ConfigFile =
            serde_json::from_str(r#"{"A": 10.0, "rule": "guarded", "params": {"rate": 2}}"#)
                .unwrap();
        assert_eq!(f.a, Some(10.0));
        assert_eq!(f.rule, Some(RuleArg::Guarded));
    }

    #[test]
    fn flags_override_config_file() {
        let file = ConfigFile {
            a: Some(1000.0),
            c: Some(1.0),
            m: Some(20),
            ..ConfigFile::default()
        };
        let args = RuleArgs {
            a: None,
            c: Some(0.5),
            m: None,
            rule: None,
            gamma: None,
            cap: None,
            config: None,
        };
        let cfg = study_config(&args, &file, 9).unwrap();
        assert_eq!((cfg.a, cfg.c, cfg.m, cfg.seed), (1000.0, 0.5, 20, 9));
    }
}
