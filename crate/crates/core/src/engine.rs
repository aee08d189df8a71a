//! The purely sequential sampling procedure.
//!
//! A pilot sample of `m` observations is taken, then one observation at a
//! time until `n >= threshold(n, V^2_n)`.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::estimators::EstimatorState;
use crate::population::IncomeDistribution;
use crate::rng::StreamRng;

pub const DEFAULT_CAP: usize = 1_000_000;
pub const DEFAULT_GAMMA: f64 = 0.25;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum StoppingRule {
    /// Stop once `n >= sqrt(A/c) * V_n`.
    #[default]
    Plain,
    /// Stop once `n >= sqrt(A/c) * (V_n + n^-gamma)`.
    Guarded,
}

impl std::str::FromStr for StoppingRule {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "plain" => Ok(Self::Plain),
            "guarded" => Ok(Self::Guarded),
            other => Err(Error::InvalidConfig(format!(
                "unknown rule '{other}' (expected plain or guarded)"
            ))),
        }
    }
}

impl std::fmt::Display for StoppingRule {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Self::Plain => "plain",
            Self::Guarded => "guarded",
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StudyConfig {
    /// Weight of one unit of squared estimation error.
    pub a: f64,
    /// Cost per observation.
    pub c: f64,
    /// Pilot sample size.
    pub m: usize,
    pub rule: StoppingRule,
    pub gamma: f64,
    pub seed: u64,
    /// Hard bound on the sample size of a single run.
    pub cap: usize,
    #[serde(default)]
    pub record_trajectory: bool,
}

impl Default for StudyConfig {
    fn default() -> Self {
        Self {
            a: 50_000.0,
            c: 0.1,
            m: 10,
            rule: StoppingRule::Plain,
            gamma: DEFAULT_GAMMA,
            seed: 1,
            cap: DEFAULT_CAP,
            record_trajectory: false,
        }
    }
}

impl StudyConfig {
    pub fn validate(&self) -> Result<()> {
        let fail = |msg: String| Err(Error::InvalidConfig(msg));
        if !(self.a.is_finite() && self.a > 0.0) {
            return fail(format!("A must be finite and > 0, got {}", self.a));
        }
        if !(self.c.is_finite() && self.c > 0.0) {
            return fail(format!("c must be finite and > 0, got {}", self.c));
        }
        if self.m < 4 {
            return fail(format!("m must be at least 4, got {}", self.m));
        }
        if !(self.gamma > 0.0 && self.gamma < 0.5) {
            return fail(format!("gamma must lie in (0, 0.5), got {}", self.gamma));
        }
        if self.cap <= self.m {
            return fail(format!("cap ({}) must exceed m ({})", self.cap, self.m));
        }
        Ok(())
    }

    pub fn scale(&self) -> f64 {
        (self.a / self.c).sqrt()
    }

    /// Smallest sample size the guarded rule can stop at: `(A/c)^(1/(2(1+gamma)))`,
    /// rounded up.
    pub fn guarded_floor(&self) -> usize {
        (self.a / self.c)
            .powf(1.0 / (2.0 * (1.0 + self.gamma)))
            .ceil() as usize
    }
}

/// Right-hand side of the stopping condition at sample size `n`.
pub fn threshold(n: usize, v2: f64, config: &StudyConfig) -> f64 {
    let v = v2.max(0.0).sqrt();
    match config.rule {
        StoppingRule::Plain => config.scale() * v,
        StoppingRule::Guarded => config.scale() * (v + (n as f64).powf(-config.gamma)),
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TrajectoryStep {
    pub n: usize,
    pub v2: f64,
    pub threshold: f64,
}

impl TrajectoryStep {
    pub fn satisfied(&self) -> bool {
        self.n as f64 >= self.threshold
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StoppingResult {
    pub n_final: usize,
    pub gini_final: f64,
    pub v2_final: f64,
    pub sw2_final: f64,
    pub tau_final: f64,
    pub threshold_final: f64,
    pub stopped_by_cap: bool,
    /// Number of evaluations of the stopping condition.
    pub checks: usize,
    pub trajectory: Option<Vec<TrajectoryStep>>,
}

/// A sequential source of income observations.
pub trait ObservationSource {
    /// `Ok(None)` signals exhaustion.
    fn next_observation(&mut self) -> Result<Option<f64>>;
}

/// Draws from a population model with a dedicated random stream.
pub struct ModelStream<'a, D: IncomeDistribution + ?Sized> {
    model: &'a D,
    rng: StreamRng,
}

impl<'a, D: IncomeDistribution + ?Sized> ModelStream<'a, D> {
    pub fn new(model: &'a D, rng: StreamRng) -> Self {
        Self { model, rng }
    }
}

impl<D: IncomeDistribution + ?Sized> ObservationSource for ModelStream<'_, D> {
    fn next_observation(&mut self) -> Result<Option<f64>> {
        Ok(Some(self.model.draw(&mut self.rng)))
    }
}

/// Adapts any iterator of incomes.
pub struct IterSource<I>(pub I);

impl<I: Iterator<Item = f64>> ObservationSource for IterSource<I> {
    fn next_observation(&mut self) -> Result<Option<f64>> {
        Ok(self.0.next())
    }
}

/// Runs the sequential procedure on `source` until the stopping condition
/// holds, the source is exhausted, or `config.cap` observations are taken.
pub fn run_sequential<S: ObservationSource + ?Sized>(
    source: &mut S,
    config: &StudyConfig,
) -> Result<StoppingResult> {
    config.validate()?;
    let mut state = EstimatorState::with_capacity(config.m * 4);
    let mut trajectory = config.record_trajectory.then(Vec::new);
    let mut last_threshold = f64::NAN;
    let mut checks = 0;

    loop {
        let target = if state.len() < config.m {
            config.m
        } else {
            state.len() + 1
        };
        while state.len() < target {
            match source.next_observation()? {
                Some(x) => state.push(x)?,
                None => {
                    return Err(Error::InsufficientData {
                        n_reached: state.len(),
                        last_threshold,
                    })
                }
            }
        }

        let n = state.len();
        let snap = state.snapshot()?;
        let v2 = snap.v2.expect("m >= 4");
        let t = threshold(n, v2, config);
        last_threshold = t;
        checks += 1;
        if let Some(tr) = trajectory.as_mut() {
            tr.push(TrajectoryStep {
                n,
                v2,
                threshold: t,
            });
        }

        let stop = n as f64 >= t;
        if stop || n >= config.cap {
            return Ok(StoppingResult {
                n_final: n,
                gini_final: snap.gini,
                v2_final: v2,
                sw2_final: snap.sw2.expect("m >= 4"),
                tau_final: snap.tau,
                threshold_final: t,
                stopped_by_cap: !stop,
                checks,
                trajectory,
            });
        }
    }
}
