//! Seeded, parallel replication studies.
//!
//! Replication `r` of a study draws from the stream keyed by `(seed, [r])`;
//! replication `r` of batch `b` uses `(seed, [b, r])`. Results are collected
//! in index order before any reduction, so summaries do not depend on the
//! number of worker threads.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::engine::{run_sequential, ModelStream, StoppingResult, StudyConfig};
use crate::error::{Error, Result};
use crate::estimators::Sample;
use crate::population::{IncomeDistribution, PopulationParams};
use crate::risk::{empirical_report, min_risk, mse_of, optimal_n, MeanSe, RiskReport};
use crate::rng::stream;

const FIXED_N_STREAM: u64 = 0x4649_5845_444e;

/// Runs `f` on a pool with `workers` threads (0 = rayon's default).
fn with_pool<T: Send>(workers: usize, f: impl FnOnce() -> T + Send) -> T {
    match rayon::ThreadPoolBuilder::new().num_threads(workers).build() {
        Ok(pool) => pool.install(f),
        Err(_) => f(),
    }
}

fn check_reps(reps: usize) -> Result<()> {
    if reps < 2 {
        return Err(Error::InsufficientReplications {
            needed: 2,
            got: reps,
        });
    }
    Ok(())
}

fn run_paths<D: IncomeDistribution + ?Sized>(
    model: &D,
    config: &StudyConfig,
    paths: Vec<Vec<u64>>,
    workers: usize,
) -> Result<Vec<StoppingResult>> {
    config.validate()?;
    let outcomes: Vec<Result<StoppingResult>> = with_pool(workers, || {
        paths
            .par_iter()
            .map(|path| {
                let mut source = ModelStream::new(model, stream(config.seed, path));
                run_sequential(&mut source, config)
            })
            .collect()
    });
    outcomes
        .into_iter()
        .enumerate()
        .map(|(index, r)| {
            r.map_err(|e| Error::Replication {
                index,
                source: Box::new(e),
            })
        })
        .collect()
}

/// Runs `reps` independent sequential experiments and returns them in
/// replication order.
pub fn run_replications<D: IncomeDistribution + ?Sized>(
    model: &D,
    config: &StudyConfig,
    reps: usize,
    workers: usize,
) -> Result<Vec<StoppingResult>> {
    check_reps(reps)?;
    let paths = (0..reps as u64).map(|r| vec![r]).collect();
    run_paths(model, config, paths, workers)
}

/// Aggregated outcome of a replication study.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReplicationSummary {
    pub model: String,
    pub config: StudyConfig,
    pub reps: usize,
    pub sw2: MeanSe,
    pub tau: MeanSe,
    pub v2: MeanSe,
    pub gini: MeanSe,
    pub n_bar: f64,
    pub se_n: f64,
    pub max_n: usize,
    pub min_n: usize,
    pub cap_hits: usize,
    pub truth: PopulationParams,
    pub risk: RiskReport,
}

pub fn summarize(
    model: String,
    results: &[StoppingResult],
    truth: &PopulationParams,
    config: &StudyConfig,
) -> Result<ReplicationSummary> {
    let column = |f: fn(&StoppingResult) -> f64| -> Result<MeanSe> {
        MeanSe::of(&results.iter().map(f).collect::<Vec<_>>())
    };
    let risk = empirical_report(results, truth, config)?;
    Ok(ReplicationSummary {
        model,
        config: *config,
        reps: results.len(),
        sw2: column(|r| r.sw2_final)?,
        tau: column(|r| r.tau_final)?,
        v2: column(|r| r.v2_final)?,
        gini: column(|r| r.gini_final)?,
        n_bar: risk.n_bar,
        se_n: risk.se_n_bar,
        max_n: results.iter().map(|r| r.n_final).max().unwrap_or(0),
        min_n: results.iter().map(|r| r.n_final).min().unwrap_or(0),
        cap_hits: results.iter().filter(|r| r.stopped_by_cap).count(),
        truth: *truth,
        risk,
    })
}

/// Runs a full study: replications plus aggregation against the model's
/// exact parameters.
pub fn run_study<D: IncomeDistribution + ?Sized>(
    model: &D,
    config: &StudyConfig,
    reps: usize,
    workers: usize,
) -> Result<ReplicationSummary> {
    let truth = model.population_params()?;
    let results = run_replications(model, config, reps, workers)?;
    summarize(model.label(), &results, &truth, config)
}

/// One batch of the second-order exploration.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BatchDifference {
    pub batch: usize,
    pub n_bar: f64,
    /// `mean(N) - n_c`
    pub n_diff: f64,
    pub empirical_risk: f64,
    /// `mean risk - 2 c n_c`
    pub regret_diff: f64,
}

pub fn run_second_order_batches<D: IncomeDistribution + ?Sized>(
    model: &D,
    config: &StudyConfig,
    batch_reps: usize,
    batches: usize,
    workers: usize,
) -> Result<Vec<BatchDifference>> {
    check_reps(batch_reps)?;
    if batches == 0 {
        return Err(Error::InvalidConfig(
            "at least one batch is required".into(),
        ));
    }
    let truth = model.population_params()?;
    let paths = (0..batches as u64)
        .flat_map(|b| (0..batch_reps as u64).map(move |r| vec![b, r]))
        .collect();
    let results = run_paths(model, config, paths, workers)?;
    let n_c = optimal_n(truth.xi2, config.a, config.c);
    results
        .chunks(batch_reps)
        .enumerate()
        .map(|(batch, chunk)| {
            let report = empirical_report(chunk, &truth, config)?;
            Ok(BatchDifference {
                batch,
                n_bar: report.n_bar,
                n_diff: report.n_bar - n_c,
                empirical_risk: report.empirical_risk,
                regret_diff: report.empirical_risk - min_risk(n_c, config.c),
            })
        })
        .collect()
}

/// Mean squared error of `G_n` at a fixed sample size.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FixedNRecord {
    pub n: usize,
    pub reps: usize,
    pub mse: f64,
    pub se_mse: f64,
    /// `n * mse`, which approaches `xi2` as `n` grows.
    pub n_mse: f64,
    pub xi2: f64,
}

pub fn run_fixed_n_study<D: IncomeDistribution + ?Sized>(
    model: &D,
    n: usize,
    reps: usize,
    seed: u64,
    workers: usize,
) -> Result<FixedNRecord> {
    check_reps(reps)?;
    if n < 4 {
        return Err(Error::InsufficientSample {
            what: "fixed-n study",
            needed: 4,
            got: n,
        });
    }
    let truth = model.population_params()?;
    let ginis: Vec<Result<f64>> = with_pool(workers, || {
        (0..reps as u64)
            .into_par_iter()
            .map(|r| {
                let mut rng = stream(seed, &[FIXED_N_STREAM, r]);
                let values = (0..n).map(|_| model.draw(&mut rng)).collect();
                crate::estimators::gini(&Sample::new(values)?)
            })
            .collect()
    });
    let ginis = ginis
        .into_iter()
        .enumerate()
        .map(|(index, g)| {
            g.map_err(|e| Error::Replication {
                index,
                source: Box::new(e),
            })
        })
        .collect::<Result<Vec<f64>>>()?;
    let mse = mse_of(&ginis, truth.gini)?;
    Ok(FixedNRecord {
        n,
        reps,
        mse: mse.mean,
        se_mse: mse.se,
        n_mse: n as f64 * mse.mean,
        xi2: truth.xi2,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::engine::StoppingRule;
    use crate::population::PopulationModel;
    use crate::rng::StreamRng;

    /// Every draw is the same income; the truth is supplied directly.
    struct Constant {
        value: f64,
        truth: PopulationParams,
    }

    impl IncomeDistribution for Constant {
        fn label(&self) -> String {
            "constant".into()
        }
        fn density(&self, _: f64) -> f64 {
            0.0
        }
        fn draw(&self, _: &mut StreamRng) -> f64 {
            self.value
        }
        fn population_params(&self) -> Result<PopulationParams> {
            Ok(self.truth)
        }
    }

    fn stub(xi2: f64) -> Constant {
        Constant {
            value: 2.0,
            truth: PopulationParams {
                mu: 2.0,
                sigma2: 1.0,
                delta: 0.0,
                sigma1_2: 0.0,
                tau: 0.0,
                xi2,
                gini: 0.0,
            },
        }
    }

    #[test]
    fn constant_stub_study() {
        let cfg = StudyConfig::default();
        let s = run_study(&stub(0.0833), &cfg, 2, 1).unwrap();
        assert_eq!(s.n_bar, 10.0);
        assert_eq!(s.se_n, 0.0);
        assert_eq!(s.max_n, 10);
        assert_eq!(s.risk.mse, 0.0);
    }

    #[test]
    fn constant_stub_batches() {
        // n_c = sqrt(500000 * xi2) = 10.3, N = m = 10 = round(n_c).
        let xi2 = 10.3f64.powi(2) / 500_000.0;
        let cfg = StudyConfig::default();
        let batches = run_second_order_batches(&stub(xi2), &cfg, 3, 4, 2).unwrap();
        assert_eq!(batches.len(), 4);
        let n_c = optimal_n(xi2, cfg.a, cfg.c);
        for b in &batches {
            assert_eq!(b.n_diff, 10.0 - n_c);
        }
    }

    #[test]
    fn constant_stub_fixed_n() {
        let rec = run_fixed_n_study(&stub(0.1), 20, 5, 3, 1).unwrap();
        assert_eq!(rec.mse, 0.0);
        assert_eq!(rec.n_mse, 0.0);
    }

    #[test]
    fn rejects_single_replication() {
        let cfg = StudyConfig::default();
        assert!(matches!(
            run_study(&stub(0.1), &cfg, 1, 1),
            Err(Error::InsufficientReplications { .. })
        ));
        assert!(run_second_order_batches(&stub(0.1), &cfg, 5, 0, 1).is_err());
        assert!(run_fixed_n_study(&stub(0.1), 3, 10, 1, 1).is_err());
    }

    #[test]
    fn failures_carry_replication_index() {
        let mut bad = stub(0.1);
        bad.value = -1.0;
        match run_study(&bad, &StudyConfig::default(), 3, 1) {
            Err(Error::Replication { index, source }) => {
                assert_eq!(index, 0);
                assert!(matches!(*source, Error::RejectedObservation { .. }));
            }
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn cap_hits_are_counted() {
        let cfg = StudyConfig {
            cap: 11,
            ..StudyConfig::default()
        };
        let model = PopulationModel::exponential(5.0).unwrap();
        let s = run_study(&model, &cfg, 4, 1).unwrap();
        assert!(s.cap_hits > 0);
    }

    #[test]
    fn worker_count_does_not_change_results() {
        let model = PopulationModel::exponential(5.0).unwrap();
        let cfg = StudyConfig {
            rule: StoppingRule::Guarded,
            ..StudyConfig::default()
        };
        let a = run_study(&model, &cfg, 40, 1).unwrap();
        let b = run_study(&model, &cfg, 40, 4).unwrap();
        assert_eq!(a, b);
    }
}
