//! The four summary tables of the reference simulation design, plus the flat
//! CSV record used to serialize a [`ReplicationSummary`].

use std::fs;
use std::io;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::engine::{StoppingRule, StudyConfig};
use crate::error::Result;
use crate::harness::{run_replications, run_second_order_batches, summarize, ReplicationSummary};
use crate::population::{IncomeDistribution, PopulationModel, PopulationParams};
use crate::risk::{MeanSe, RiskReport};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Table1Row {
    pub distribution: String,
    pub mean_sw2: f64,
    pub se_sw2: f64,
    pub four_sigma1_2: f64,
    pub mean_tau: f64,
    pub se_tau: f64,
    pub tau: f64,
    pub mean_v2: f64,
    pub se_v2: f64,
    pub xi2: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Table2Row {
    pub distribution: String,
    pub n_bar: f64,
    pub se_n_bar: f64,
    pub n_c: f64,
    pub n_ratio: f64,
    pub max_n: usize,
    pub r_bar: f64,
    pub se_r_bar: f64,
    pub ratio_regret: f64,
}

/// One row of the second-order tables: a distribution and its per-batch values.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BatchRow {
    pub distribution: String,
    pub values: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RawOutcome {
    pub distribution: String,
    pub replication: usize,
    pub n: usize,
    pub gini: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TablesSettings {
    pub study: StudyConfig,
    pub reps: usize,
    pub batches: usize,
    pub batch_reps: usize,
}

impl Default for TablesSettings {
    fn default() -> Self {
        Self {
            study: StudyConfig::default(),
            reps: 5000,
            batches: 10,
            batch_reps: 500,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Tables {
    pub settings: TablesSettings,
    pub summaries: Vec<ReplicationSummary>,
    pub table1: Vec<Table1Row>,
    pub table2: Vec<Table2Row>,
    /// `mean(N) - n_c` per batch.
    pub table3: Vec<BatchRow>,
    /// `mean risk - 2 c n_c` per batch.
    pub table4: Vec<BatchRow>,
    pub raw: Vec<RawOutcome>,
}

impl Table1Row {
    pub fn from_summary(distribution: &str, s: &ReplicationSummary) -> Self {
        Self {
            distribution: distribution.to_string(),
            mean_sw2: s.sw2.mean,
            se_sw2: s.sw2.se,
            four_sigma1_2: 4.0 * s.truth.sigma1_2,
            mean_tau: s.tau.mean,
            se_tau: s.tau.se,
            tau: s.truth.tau,
            mean_v2: s.v2.mean,
            se_v2: s.v2.se,
            xi2: s.truth.xi2,
        }
    }
}

impl Table2Row {
    pub fn from_summary(distribution: &str, s: &ReplicationSummary) -> Self {
        Self {
            distribution: distribution.to_string(),
            n_bar: s.n_bar,
            se_n_bar: s.se_n,
            n_c: s.risk.n_c,
            n_ratio: s.risk.n_ratio,
            max_n: s.max_n,
            r_bar: s.risk.empirical_risk,
            se_r_bar: s.risk.se_empirical_risk,
            ratio_regret: s.risk.ratio_regret,
        }
    }
}

/// Runs every study behind the four tables for the given models.
pub fn reproduce_tables(
    models: &[PopulationModel],
    settings: &TablesSettings,
    workers: usize,
    keep_raw: bool,
) -> Result<Tables> {
    let mut tables = Tables {
        settings: *settings,
        summaries: Vec::new(),
        table1: Vec::new(),
        table2: Vec::new(),
        table3: Vec::new(),
        table4: Vec::new(),
        raw: Vec::new(),
    };
    for model in models {
        let name = model.family();
        let truth = model.population_params()?;
        let results = run_replications(model, &settings.study, settings.reps, workers)?;
        let summary = summarize(model.label(), &results, &truth, &settings.study)?;
        tables.table1.push(Table1Row::from_summary(name, &summary));
        tables.table2.push(Table2Row::from_summary(name, &summary));
        if keep_raw {
            tables
                .raw
                .extend(results.iter().enumerate().map(|(i, r)| RawOutcome {
                    distribution: name.to_string(),
                    replication: i,
                    n: r.n_final,
                    gini: r.gini_final,
                }));
        }
        tables.summaries.push(summary);

        let batches = run_second_order_batches(
            model,
            &settings.study,
            settings.batch_reps,
            settings.batches,
            workers,
        )?;
        tables.table3.push(BatchRow {
            distribution: name.to_string(),
            values: batches.iter().map(|b| b.n_diff).collect(),
        });
        tables.table4.push(BatchRow {
            distribution: name.to_string(),
            values: batches.iter().map(|b| b.regret_diff).collect(),
        });
    }
    Ok(tables)
}

fn write_rows<T: Serialize>(path: &Path, rows: &[T]) -> io::Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    for row in rows {
        w.serialize(row)?;
    }
    w.flush()
}

fn write_batch_rows(path: &Path, rows: &[BatchRow]) -> io::Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    let width = rows.iter().map(|r| r.values.len()).max().unwrap_or(0);
    let mut header = vec!["distribution".to_string()];
    header.extend((1..=width).map(|i| format!("batch_{i}")));
    w.write_record(&header)?;
    for row in rows {
        let mut record = vec![row.distribution.clone()];
        record.extend(row.values.iter().map(|v| v.to_string()));
        w.write_record(&record)?;
    }
    w.flush()
}

/// Acceptance tolerances recorded next to the tables.
#[derive(Debug, Clone, Serialize)]
pub struct Tolerances {
    pub table1_relative: f64,
    pub table1_standard_errors: f64,
    pub table2_ratio_band: [f64; 2],
    pub table3_abs_n_diff: f64,
    pub table4_abs_regret_diff: f64,
    pub quadrature_abs: f64,
}

impl Default for Tolerances {
    fn default() -> Self {
        Self {
            table1_relative: 0.02,
            table1_standard_errors: 3.0,
            table2_ratio_band: [0.98, 1.02],
            table3_abs_n_diff: 3.5,
            table4_abs_regret_diff: 0.6,
            quadrature_abs: 1e-8,
        }
    }
}

#[derive(Debug, Clone, Serialize)]
struct Manifest<'a> {
    settings: &'a TablesSettings,
    seed: u64,
    models: Vec<String>,
    truth: Vec<(String, PopulationParams)>,
    tolerances: Tolerances,
    files: Vec<&'static str>,
}

/// Writes `table1.csv` .. `table4.csv`, `manifest.json` and, when raw outcomes
/// were kept, `raw.csv`.
pub fn write_tables(tables: &Tables, dir: &Path) -> io::Result<()> {
    fs::create_dir_all(dir)?;
    write_rows(&dir.join("table1.csv"), &tables.table1)?;
    write_rows(&dir.join("table2.csv"), &tables.table2)?;
    write_batch_rows(&dir.join("table3.csv"), &tables.table3)?;
    write_batch_rows(&dir.join("table4.csv"), &tables.table4)?;
    let mut files = vec!["table1.csv", "table2.csv", "table3.csv", "table4.csv"];
    if !tables.raw.is_empty() {
        write_rows(&dir.join("raw.csv"), &tables.raw)?;
        files.push("raw.csv");
    }
    let manifest = Manifest {
        settings: &tables.settings,
        seed: tables.settings.study.seed,
        models: tables.summaries.iter().map(|s| s.model.clone()).collect(),
        truth: tables
            .summaries
            .iter()
            .map(|s| (s.model.clone(), s.truth))
            .collect(),
        tolerances: Tolerances::default(),
        files,
    };
    let json = serde_json::to_string_pretty(&manifest).map_err(io::Error::other)?;
    fs::write(dir.join("manifest.json"), json + "\n")
}

/// [`ReplicationSummary`] flattened into one CSV row.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SummaryRecord {
    pub model: String,
    pub a: f64,
    pub c: f64,
    pub m: usize,
    pub rule: StoppingRule,
    pub gamma: f64,
    pub seed: u64,
    pub cap: usize,
    pub record_trajectory: bool,
    pub reps: usize,
    pub mean_sw2: f64,
    pub se_sw2: f64,
    pub mean_tau: f64,
    pub se_tau: f64,
    pub mean_v2: f64,
    pub se_v2: f64,
    pub mean_gini: f64,
    pub se_gini: f64,
    pub n_bar: f64,
    pub se_n: f64,
    pub max_n: usize,
    pub min_n: usize,
    pub cap_hits: usize,
    pub mu: f64,
    pub sigma2: f64,
    pub delta: f64,
    pub sigma1_2: f64,
    pub tau: f64,
    pub xi2: f64,
    pub gini: f64,
    pub n_c: f64,
    pub min_risk: f64,
    pub empirical_risk: f64,
    pub se_empirical_risk: f64,
    pub ratio_regret: f64,
    pub se_ratio_regret: f64,
    pub regret_difference: f64,
    pub n_ratio: f64,
    pub se_n_ratio: f64,
    pub mse: f64,
    pub se_mse: f64,
}

impl From<&ReplicationSummary> for SummaryRecord {
    fn from(s: &ReplicationSummary) -> Self {
        Self {
            model: s.model.clone(),
            a: s.config.a,
            c: s.config.c,
            m: s.config.m,
            rule: s.config.rule,
            gamma: s.config.gamma,
            seed: s.config.seed,
            cap: s.config.cap,
            record_trajectory: s.config.record_trajectory,
            reps: s.reps,
            mean_sw2: s.sw2.mean,
            se_sw2: s.sw2.se,
            mean_tau: s.tau.mean,
            se_tau: s.tau.se,
            mean_v2: s.v2.mean,
            se_v2: s.v2.se,
            mean_gini: s.gini.mean,
            se_gini: s.gini.se,
            n_bar: s.n_bar,
            se_n: s.se_n,
            max_n: s.max_n,
            min_n: s.min_n,
            cap_hits: s.cap_hits,
            mu: s.truth.mu,
            sigma2: s.truth.sigma2,
            delta: s.truth.delta,
            sigma1_2: s.truth.sigma1_2,
            tau: s.truth.tau,
            xi2: s.truth.xi2,
            gini: s.truth.gini,
            n_c: s.risk.n_c,
            min_risk: s.risk.min_risk,
            empirical_risk: s.risk.empirical_risk,
            se_empirical_risk: s.risk.se_empirical_risk,
            ratio_regret: s.risk.ratio_regret,
            se_ratio_regret: s.risk.se_ratio_regret,
            regret_difference: s.risk.regret_difference,
            n_ratio: s.risk.n_ratio,
            se_n_ratio: s.risk.se_n_ratio,
            mse: s.risk.mse,
            se_mse: s.risk.se_mse,
        }
    }
}

impl From<SummaryRecord> for ReplicationSummary {
    fn from(r: SummaryRecord) -> Self {
        Self {
            model: r.model,
            config: StudyConfig {
                a: r.a,
                c: r.c,
                m: r.m,
                rule: r.rule,
                gamma: r.gamma,
                seed: r.seed,
                cap: r.cap,
                record_trajectory: r.record_trajectory,
            },
            reps: r.reps,
            sw2: MeanSe {
                mean: r.mean_sw2,
                se: r.se_sw2,
            },
            tau: MeanSe {
                mean: r.mean_tau,
                se: r.se_tau,
            },
            v2: MeanSe {
                mean: r.mean_v2,
                se: r.se_v2,
            },
            gini: MeanSe {
                mean: r.mean_gini,
                se: r.se_gini,
            },
            n_bar: r.n_bar,
            se_n: r.se_n,
            max_n: r.max_n,
            min_n: r.min_n,
            cap_hits: r.cap_hits,
            truth: PopulationParams {
                mu: r.mu,
                sigma2: r.sigma2,
                delta: r.delta,
                sigma1_2: r.sigma1_2,
                tau: r.tau,
                xi2: r.xi2,
                gini: r.gini,
            },
            risk: RiskReport {
                n_c: r.n_c,
                min_risk: r.min_risk,
                empirical_risk: r.empirical_risk,
                se_empirical_risk: r.se_empirical_risk,
                ratio_regret: r.ratio_regret,
                se_ratio_regret: r.se_ratio_regret,
                regret_difference: r.regret_difference,
                n_bar: r.n_bar,
                se_n_bar: r.se_n,
                n_ratio: r.n_ratio,
                se_n_ratio: r.se_n_ratio,
                mse: r.mse,
                se_mse: r.se_mse,
            },
        }
    }
}

pub fn summary_to_csv(summary: &ReplicationSummary) -> Result<String> {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.serialize(SummaryRecord::from(summary))
        .map_err(|e| crate::Error::Source(e.to_string()))?;
    let bytes = w
        .into_inner()
        .map_err(|e| crate::Error::Source(e.to_string()))?;
    Ok(String::from_utf8(bytes).expect("csv output is utf-8"))
}

pub fn summary_from_csv(text: &str) -> Result<ReplicationSummary> {
    let mut r = csv::Reader::from_reader(text.as_bytes());
    let record: SummaryRecord = r
        .deserialize()
        .next()
        .ok_or_else(|| crate::Error::Source("empty summary csv".into()))?
        .map_err(|e| crate::Error::Source(e.to_string()))?;
    Ok(record.into())
}
