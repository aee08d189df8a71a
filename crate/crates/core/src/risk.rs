//! Theoretical and empirical risk of the sequential Gini estimator.
//!
//! With `h(n) = A xi^2 / n + c n` the approximate fixed-sample risk, the
//! minimiser is `n_c = sqrt(A/c) xi` and the minimum risk is `2 c n_c`.

use serde::{Deserialize, Serialize};

use crate::engine::{StoppingResult, StudyConfig};
use crate::error::{Error, Result};
use crate::estimators::compensated_sum;
use crate::population::PopulationParams;

/// Optimal fixed sample size `sqrt(A/c) * sqrt(xi2)`. Not rounded.
pub fn optimal_n(xi2: f64, a: f64, c: f64) -> f64 {
    (a / c).sqrt() * xi2.sqrt()
}

pub fn fixed_n_risk(n: f64, xi2: f64, a: f64, c: f64) -> f64 {
    a * xi2 / n + c * n
}

pub fn min_risk(n_c: f64, c: f64) -> f64 {
    2.0 * c * n_c
}

/// Monte Carlo mean with its standard error `sd / sqrt(R)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MeanSe {
    pub mean: f64,
    pub se: f64,
}

impl MeanSe {
    pub fn of(values: &[f64]) -> Result<Self> {
        if values.len() < 2 {
            return Err(Error::InsufficientReplications {
                needed: 2,
                got: values.len(),
            });
        }
        let r = values.len() as f64;
        let mean = compensated_sum(values.iter().copied()) / r;
        let var = compensated_sum(values.iter().map(|v| (v - mean) * (v - mean))) / (r - 1.0);
        Ok(Self {
            mean,
            se: (var / r).sqrt(),
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RiskReport {
    pub n_c: f64,
    pub min_risk: f64,
    /// `A * mean((G_N - G_F)^2) + c * mean(N)`
    pub empirical_risk: f64,
    pub se_empirical_risk: f64,
    pub ratio_regret: f64,
    pub se_ratio_regret: f64,
    pub regret_difference: f64,
    pub n_bar: f64,
    pub se_n_bar: f64,
    pub n_ratio: f64,
    pub se_n_ratio: f64,
    pub mse: f64,
    pub se_mse: f64,
}

pub fn empirical_report(
    results: &[StoppingResult],
    truth: &PopulationParams,
    config: &StudyConfig,
) -> Result<RiskReport> {
    let n_c = optimal_n(truth.xi2, config.a, config.c);
    let min_risk = min_risk(n_c, config.c);
    let sq_err: Vec<f64> = results
        .iter()
        .map(|r| (r.gini_final - truth.gini).powi(2))
        .collect();
    let ns: Vec<f64> = results.iter().map(|r| r.n_final as f64).collect();
    let risks: Vec<f64> = sq_err
        .iter()
        .zip(&ns)
        .map(|(e, n)| config.a * e + config.c * n)
        .collect();

    let mse = MeanSe::of(&sq_err)?;
    let n_bar = MeanSe::of(&ns)?;
    let risk = MeanSe::of(&risks)?;
    let ratio_regret = risk.mean / min_risk;
    Ok(RiskReport {
        n_c,
        min_risk,
        empirical_risk: risk.mean,
        se_empirical_risk: risk.se,
        ratio_regret,
        se_ratio_regret: risk.se / min_risk,
        regret_difference: (ratio_regret - 1.0) * min_risk,
        n_bar: n_bar.mean,
        se_n_bar: n_bar.se,
        n_ratio: n_bar.mean / n_c,
        se_n_ratio: n_bar.se / n_c,
        mse: mse.mean,
        se_mse: mse.se,
    })
}

/// Mean squared error of the terminal Gini estimates against the truth.
pub fn empirical_mse(results: &[StoppingResult], truth: &PopulationParams) -> Result<MeanSe> {
    let ginis: Vec<f64> = results.iter().map(|r| r.gini_final).collect();
    mse_of(&ginis, truth.gini)
}

pub fn mse_of(estimates: &[f64], truth: f64) -> Result<MeanSe> {
    let sq: Vec<f64> = estimates.iter().map(|g| (g - truth).powi(2)).collect();
    MeanSe::of(&sq)
}
