//! Purely sequential minimum-risk point estimation of the Gini index.
//!
//! Observations are taken one at a time until the sample size exceeds
//! `sqrt(A/c) * V_n`, where `V^2_n` estimates the asymptotic variance
//! constant of the sample Gini index, `A` weighs squared error and `c` is the
//! cost of one observation.

pub mod cli;
pub mod engine;
pub mod error;
pub mod estimators;
pub mod harness;
pub mod population;
pub mod quadrature;
pub mod risk;
pub mod rng;
pub mod tables;

pub use engine::{run_sequential, threshold, StoppingResult, StoppingRule, StudyConfig};
pub use error::{Error, Result};
pub use estimators::{EstimateSnapshot, EstimatorState, Sample};
pub use harness::{run_fixed_n_study, run_second_order_batches, run_study, ReplicationSummary};
pub use population::{IncomeDistribution, PopulationModel, PopulationParams};
pub use risk::{empirical_report, fixed_n_risk, optimal_n, RiskReport};
