//! Income distributions and their exact population parameters.
//!
//! Mean and variance come from closed forms where a family provides them.
//! The pairwise quantities are reduced to single integrals through
//! `g(x) = E|x - Y|`:
//!
//! * `delta = E g(X)`
//! * `tau = E[X g(X)]`
//! * `sigma1_2 = Var g(X)`
//!
//! with `g` itself evaluated by quadrature on either side of the kink at `y = x`.

use std::f64::consts::PI;
use std::fmt;

use rand_distr::{Distribution, Exp, Gamma, LogNormal};
use serde::{Deserialize, Serialize};
use statrs::function::gamma::ln_gamma;

use crate::error::{Error, Result};
use crate::quadrature::{integrate, integrate_to_infinity, Tolerance};
use crate::rng::StreamRng;

/// Anything that can stand in as an income population: a density for the
/// quadrature path and a sampler for simulation.
///
/// Families with closed-form moments override [`mean`](Self::mean) and
/// [`variance`](Self::variance); the rest of [`PopulationParams`] is computed
/// by quadrature unless [`population_params`](Self::population_params) is
/// overridden too.
pub trait IncomeDistribution: Send + Sync {
    fn label(&self) -> String;

    fn density(&self, x: f64) -> f64;

    fn draw(&self, rng: &mut StreamRng) -> f64;

    fn mean(&self) -> Option<f64> {
        None
    }

    fn variance(&self) -> Option<f64> {
        None
    }

    fn population_params(&self) -> Result<PopulationParams> {
        quadrature_params(self, Tolerance::default())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "family", rename_all = "lowercase")]
pub enum PopulationModel {
    Exponential {
        rate: f64,
    },
    Gamma {
        shape: f64,
        rate: f64,
    },
    #[serde(rename = "lognormal")]
    LogNormal {
        meanlog: f64,
        sdlog: f64,
    },
}

fn positive(name: &str, v: f64) -> Result<f64> {
    if v.is_finite() && v > 0.0 {
        Ok(v)
    } else {
        Err(Error::InvalidModel(format!(
            "{name} must be finite and > 0, got {v}"
        )))
    }
}

impl PopulationModel {
    pub fn exponential(rate: f64) -> Result<Self> {
        Ok(Self::Exponential {
            rate: positive("rate", rate)?,
        })
    }

    pub fn gamma(shape: f64, rate: f64) -> Result<Self> {
        Ok(Self::Gamma {
            shape: positive("shape", shape)?,
            rate: positive("rate", rate)?,
        })
    }

    /// Log-normal with log-scale location `meanlog` and scale `sdlog`.
    pub fn lognormal(meanlog: f64, sdlog: f64) -> Result<Self> {
        if !meanlog.is_finite() {
            return Err(Error::InvalidModel(format!(
                "meanlog must be finite, got {meanlog}"
            )));
        }
        Ok(Self::LogNormal {
            meanlog,
            sdlog: positive("sdlog", sdlog)?,
        })
    }

    /// Builds a model from a family name and `key=value` parameters. Missing
    /// keys fall back to the three reference populations.
    pub fn from_parts(family: &str, params: &[(String, f64)]) -> Result<Self> {
        // The last occurrence of a key wins.
        let get = |key: &str, default: f64| {
            params
                .iter()
                .rev()
                .find(|(k, _)| k == key)
                .map_or(default, |(_, v)| *v)
        };
        let allowed: &[&str] = match family {
            "exponential" => &["rate"],
            "gamma" => &["shape", "rate"],
            "lognormal" => &["meanlog", "sdlog"],
            other => {
                return Err(Error::InvalidModel(format!(
                    "unknown distribution '{other}'"
                )))
            }
        };
        if let Some((k, _)) = params.iter().find(|(k, _)| !allowed.contains(&k.as_str())) {
            return Err(Error::InvalidModel(format!(
                "unknown parameter '{k}' for {family} (expected {})",
                allowed.join(", ")
            )));
        }
        match family {
            "exponential" => Self::exponential(get("rate", 5.0)),
            "gamma" => Self::gamma(get("shape", 2.649), get("rate", 0.84)),
            _ => Self::lognormal(get("meanlog", 2.185), get("sdlog", 0.562)),
        }
    }

    pub fn family(&self) -> &'static str {
        match self {
            Self::Exponential { .. } => "exponential",
            Self::Gamma { .. } => "gamma",
            Self::LogNormal { .. } => "lognormal",
        }
    }

    /// The three populations of the reference simulation design.
    pub fn reference_models() -> [PopulationModel; 3] {
        [
            Self::Exponential { rate: 5.0 },
            Self::Gamma {
                shape: 2.649,
                rate: 0.84,
            },
            Self::LogNormal {
                meanlog: 2.185,
                sdlog: 0.562,
            },
        ]
    }
}

impl fmt::Display for PopulationModel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Self::Exponential { rate } => write!(f, "exponential(rate={rate})"),
            Self::Gamma { shape, rate } => write!(f, "gamma(shape={shape}, rate={rate})"),
            Self::LogNormal { meanlog, sdlog } => {
                write!(f, "lognormal(meanlog={meanlog}, sdlog={sdlog})")
            }
        }
    }
}

impl IncomeDistribution for PopulationModel {
    fn label(&self) -> String {
        self.to_string()
    }

    fn density(&self, x: f64) -> f64 {
        if x <= 0.0 {
            return 0.0;
        }
        match *self {
            Self::Exponential { rate } => rate * (-rate * x).exp(),
            Self::Gamma { shape, rate } => {
                (shape * rate.ln() + (shape - 1.0) * x.ln() - rate * x - ln_gamma(shape)).exp()
            }
            Self::LogNormal { meanlog, sdlog } => {
                let z = (x.ln() - meanlog) / sdlog;
                (-0.5 * z * z).exp() / (x * sdlog * (2.0 * PI).sqrt())
            }
        }
    }

    fn draw(&self, rng: &mut StreamRng) -> f64 {
        // Parameters are validated at construction, so the samplers exist.
        match *self {
            Self::Exponential { rate } => Exp::new(rate).expect("valid rate").sample(rng),
            Self::Gamma { shape, rate } => Gamma::new(shape, 1.0 / rate)
                .expect("valid gamma")
                .sample(rng),
            Self::LogNormal { meanlog, sdlog } => LogNormal::new(meanlog, sdlog)
                .expect("valid lognormal")
                .sample(rng),
        }
    }

    fn mean(&self) -> Option<f64> {
        Some(match *self {
            Self::Exponential { rate } => 1.0 / rate,
            Self::Gamma { shape, rate } => shape / rate,
            Self::LogNormal { meanlog, sdlog } => (meanlog + 0.5 * sdlog * sdlog).exp(),
        })
    }

    fn variance(&self) -> Option<f64> {
        Some(match *self {
            Self::Exponential { rate } => 1.0 / (rate * rate),
            Self::Gamma { shape, rate } => shape / (rate * rate),
            Self::LogNormal { meanlog, sdlog } => {
                let s2 = sdlog * sdlog;
                (s2.exp() - 1.0) * (2.0 * meanlog + s2).exp()
            }
        })
    }
}

/// Exact population quantities entering the asymptotic MSE of the Gini estimator.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PopulationParams {
    pub mu: f64,
    pub sigma2: f64,
    /// `E|X1 - X2|`
    pub delta: f64,
    /// `Var(E(|X1 - X2| | X1))`
    pub sigma1_2: f64,
    /// `E(X1 |X1 - X2|)`
    pub tau: f64,
    pub xi2: f64,
    pub gini: f64,
}

/// Asymptotic variance constant of `G_n` from its components.
pub fn xi_squared(mu: f64, sigma2: f64, delta: f64, sigma1_2: f64, tau: f64) -> f64 {
    sigma1_2 / (mu * mu) + delta * delta * sigma2 / (4.0 * mu.powi(4))
        - (delta / mu.powi(3)) * (tau - mu * delta)
}

impl PopulationParams {
    pub fn from_components(mu: f64, sigma2: f64, delta: f64, sigma1_2: f64, tau: f64) -> Self {
        Self {
            mu,
            sigma2,
            delta,
            sigma1_2,
            tau,
            xi2: xi_squared(mu, sigma2, delta, sigma1_2, tau),
            gini: delta / (2.0 * mu),
        }
    }

    pub fn optimal_n(&self, a: f64, c: f64) -> f64 {
        crate::risk::optimal_n(self.xi2, a, c)
    }

    /// Rejects non-finite or non-positive fields and a Gini index of 1 or more.
    pub fn check(self) -> Result<Self> {
        let fields = [
            self.mu,
            self.sigma2,
            self.delta,
            self.sigma1_2,
            self.tau,
            self.xi2,
            self.gini,
        ];
        if fields.iter().any(|v| !v.is_finite() || *v <= 0.0) || self.gini >= 1.0 {
            return Err(Error::InvariantViolation(format!(
                "population parameters out of range: {self:?}"
            )));
        }
        Ok(self)
    }
}

/// Computes [`PopulationParams`] for any density by adaptive quadrature.
pub fn quadrature_params<D: IncomeDistribution + ?Sized>(
    dist: &D,
    tol: Tolerance,
) -> Result<PopulationParams> {
    let f = |x: f64| dist.density(x);
    let expect = |name: &str, h: &dyn Fn(f64) -> f64| -> Result<f64> {
        Ok(integrate_to_infinity(name, |x| h(x) * f(x), 0.0, tol)?.value)
    };

    let mu = match dist.mean() {
        Some(m) => m,
        None => expect("E[X]", &|x| x)?,
    };
    let sigma2 = match dist.variance() {
        Some(v) => v,
        None => expect("E[X^2]", &|x| x * x)? - mu * mu,
    };

    // Inner integrals run tighter so their error does not leak into the outer ones.
    let inner_tol = Tolerance {
        abs: tol.abs * 1e-2,
        rel: tol.rel,
    };
    let g = |x: f64| -> f64 {
        let below = integrate("E|x-Y| (Y<x)", |y| (x - y) * f(y), 0.0, x, inner_tol);
        let above = integrate_to_infinity("E|x-Y| (Y>x)", |y| (y - x) * f(y), x, inner_tol);
        match (below, above) {
            (Ok(b), Ok(a)) => b.value + a.value,
            _ => f64::NAN,
        }
    };

    let delta = expect("delta = E|X1-X2|", &g)?;
    let tau = expect("tau = E[X1 |X1-X2|]", &|x| x * g(x))?;
    let second = expect("E[g(X)^2]", &|x| {
        let gx = g(x);
        gx * gx
    })?;
    let sigma1_2 = second - delta * delta;

    PopulationParams::from_components(mu, sigma2, delta, sigma1_2, tau).check()
}

/// Convenience wrapper over [`IncomeDistribution::population_params`].
pub fn population_params<D: IncomeDistribution + ?Sized>(model: &D) -> Result<PopulationParams> {
    model.population_params()
}
