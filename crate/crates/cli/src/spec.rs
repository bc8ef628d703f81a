//! JSON experiment configuration and its resolution to concrete settings.

use schemars::JsonSchema;
use serde::{Deserialize, Serialize};
use spikefield_core::experiments::DEFAULT_THRESHOLD;
use spikefield_core::{Error, InitialCondition, RateFunction, Result, Scaling, WeightDistribution};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, JsonSchema, clap::ValueEnum)]
#[serde(rename_all = "kebab-case")]
pub enum Experiment {
    PhaseAffine,
    ExtinctionScaling,
    BistabilityQuadratic,
    FixedPoints,
    ConstantRateCheck,
    MckeanCompare,
    Simulate,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, JsonSchema)]
#[serde(rename_all = "snake_case")]
pub enum Method {
    Exact,
    Thinning,
    Discrete,
}

/// Every field is optional in the file; `resolve` fills the per-experiment
/// defaults so the echoed spec is complete.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, JsonSchema, Default)]
#[serde(deny_unknown_fields)]
pub struct ExperimentSpec {
    #[serde(skip_serializing_if = "Option::is_none")]
    pub experiment: Option<Experiment>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub rate: Option<RateFunction>,
    /// Rates swept by `fixed-points`.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub rates: Option<Vec<RateFunction>>,
    /// `E(V)` grid.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub mean_weights: Option<Vec<f64>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub network_sizes: Option<Vec<usize>>,
    /// Network size of fixed-step ensembles.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub n: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub replicas: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub dt: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub horizon: Option<f64>,
    /// Averaging window, default `[horizon - 10, horizon]`.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub window: Option<(f64, f64)>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub init: Option<InitialCondition>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub weights: Option<WeightDistribution>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub scaling: Option<Scaling>,
    /// Sustained/Trivial threshold on the averaged firing rate.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub threshold: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub v0_grid: Option<Vec<f64>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub refine_steps: Option<usize>,
    /// Constant rates swept by `constant-rate-check`.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub lambdas: Option<Vec<f64>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub xi_grid: Option<Vec<f64>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub samples: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub beta_range: Option<(f64, f64)>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub grid_points: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub root_tol: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub grid_step: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub particles: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub tol: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub max_iter: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub cutoff: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub method: Option<Method>,
}

pub fn parse(text: &str) -> Result<ExperimentSpec> {
    serde_json::from_str(text).map_err(|e| Error::Config(format!("invalid experiment spec: {e}")))
}

fn or<T>(slot: &mut Option<T>, value: T) {
    if slot.is_none() {
        *slot = Some(value);
    }
}

impl ExperimentSpec {
    /// Fill defaults for `command`; a spec naming a different experiment is
    /// rejected.
    pub fn resolve(mut self, command: Experiment) -> Result<Self> {
        if let Some(e) = self.experiment {
            if e != command {
                return Err(Error::Config(format!(
                    "spec is for {e:?} but the command is {command:?}"
                )));
            }
        }
        self.experiment = Some(command);
        or(&mut self.seed, 0);
        match command {
            Experiment::PhaseAffine => {
                or(&mut self.rate, RateFunction::linear(1.0));
                or(&mut self.mean_weights, vec![0.25, 0.5, 0.75, 1.25, 1.5, 2.0, 2.5, 3.0]);
                self.fixed_step_defaults();
                or(&mut self.init, InitialCondition::UniformInterval { lo: 0.0, hi: 1.0 });
            }
            Experiment::ExtinctionScaling => {
                or(&mut self.rate, RateFunction::linear(1.0));
                or(&mut self.network_sizes, vec![10, 20, 40]);
                or(&mut self.mean_weights, vec![0.25, 2.0]);
                or(&mut self.replicas, 100);
                or(&mut self.horizon, 2e4);
                or(&mut self.init, InitialCondition::UniformInterval { lo: 0.0, hi: 1.0 });
            }
            Experiment::BistabilityQuadratic => {
                or(&mut self.rate, RateFunction::power(1.0, 2.0, 0.0));
                or(&mut self.mean_weights, vec![3.0]);
                self.fixed_step_defaults();
                or(&mut self.threshold, DEFAULT_THRESHOLD);
                or(
                    &mut self.v0_grid,
                    (0..30).map(|k| 0.05 * (200f64).powf(k as f64 / 29.0)).collect(),
                );
                or(&mut self.refine_steps, 6);
            }
            Experiment::FixedPoints => {
                if self.rates.is_none() {
                    self.rates = Some(match self.rate {
                        Some(r) => vec![r],
                        None => vec![RateFunction::linear(1.0)],
                    });
                }
                or(&mut self.mean_weights, vec![0.5, 1.0, 2.0]);
                or(&mut self.beta_range, (1e-4, 1e2));
                or(&mut self.grid_points, 512);
                or(&mut self.root_tol, 1e-10);
            }
            Experiment::ConstantRateCheck => {
                or(&mut self.network_sizes, vec![1, 2, 5, 20]);
                or(&mut self.lambdas, vec![0.5, 1.0, 2.0]);
                or(&mut self.weights, WeightDistribution::Uniform { lo: 0.0, hi: 1.0 });
                or(&mut self.xi_grid, vec![0.0, 0.5, 1.0, 2.0]);
                or(&mut self.samples, 100_000);
            }
            Experiment::MckeanCompare => {
                or(&mut self.rate, RateFunction::linear(1.0));
                or(&mut self.mean_weights, vec![2.0]);
                or(&mut self.init, InitialCondition::UniformInterval { lo: 0.0, hi: 1.0 });
                or(&mut self.horizon, 100.0);
                or(&mut self.dt, 0.01);
                or(&mut self.grid_step, 0.01);
                or(&mut self.particles, 5000);
                or(&mut self.n, 5000);
                or(&mut self.tol, 1e-3);
                or(&mut self.max_iter, 30);
            }
            Experiment::Simulate => {
                or(&mut self.rate, RateFunction::linear(1.0));
                or(&mut self.n, 100);
                or(&mut self.weights, WeightDistribution::Constant { w: 2.0 });
                or(&mut self.scaling, Scaling::MeanField);
                or(&mut self.init, InitialCondition::UniformInterval { lo: 0.0, hi: 1.0 });
                or(&mut self.horizon, 20.0);
                or(&mut self.dt, 0.01);
                or(&mut self.method, Method::Exact);
            }
        }
        self.check()?;
        Ok(self)
    }

    fn fixed_step_defaults(&mut self) {
        or(&mut self.n, 500);
        or(&mut self.replicas, 10);
        or(&mut self.dt, 0.01);
        or(&mut self.horizon, 100.0);
        let t = self.horizon.unwrap_or(100.0);
        or(&mut self.window, ((t - 10.0).max(0.0), t));
    }

    fn check(&self) -> Result<()> {
        let nonempty = |name: &str, len: Option<usize>| match len {
            Some(0) => Err(Error::Config(format!("`{name}` must not be empty"))),
            _ => Ok(()),
        };
        nonempty("mean_weights", self.mean_weights.as_ref().map(Vec::len))?;
        nonempty("network_sizes", self.network_sizes.as_ref().map(Vec::len))?;
        nonempty("rates", self.rates.as_ref().map(Vec::len))?;
        nonempty("v0_grid", self.v0_grid.as_ref().map(Vec::len))?;
        nonempty("lambdas", self.lambdas.as_ref().map(Vec::len))?;
        if self.replicas == Some(0) {
            return Err(Error::Config("`replicas` must be >= 1".into()));
        }
        if let Some(r) = &self.rate {
            r.validate()?;
        }
        if let Some(w) = &self.weights {
            w.validate()?;
        }
        Ok(())
    }
}
