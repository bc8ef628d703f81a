//! Shared domain types: firing-rate functions, synaptic weights, network
//! configuration and initial conditions.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng::RngStream;

/// A value in [0, +inf].
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ExtendedReal {
    Finite(f64),
    Infinite,
}

impl ExtendedReal {
    pub fn is_finite(self) -> bool {
        matches!(self, ExtendedReal::Finite(_))
    }

    pub fn finite(self) -> Option<f64> {
        match self {
            ExtendedReal::Finite(v) => Some(v),
            ExtendedReal::Infinite => None,
        }
    }

    /// `Infinite` maps to `f64::INFINITY`.
    pub fn to_f64(self) -> f64 {
        self.finite().unwrap_or(f64::INFINITY)
    }

    /// Extended product with a finite non-negative factor; `inf * 0 = 0`.
    pub fn scale(self, k: f64) -> ExtendedReal {
        match self {
            ExtendedReal::Finite(v) => ExtendedReal::Finite(v * k),
            ExtendedReal::Infinite if k == 0.0 => ExtendedReal::Finite(0.0),
            ExtendedReal::Infinite => ExtendedReal::Infinite,
        }
    }
}

/// Firing intensity `b(x)` of a neuron at potential `x`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[cfg_attr(feature = "schema", derive(schemars::JsonSchema))]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum RateFunction {
    /// `b(x) = rate0`
    Constant { rate0: f64 },
    /// `b(x) = slope * x + intercept`
    Affine { slope: f64, intercept: f64 },
    /// `b(x) = coef * x^exponent + intercept`
    Power {
        coef: f64,
        exponent: f64,
        #[serde(default)]
        intercept: f64,
    },
}

impl RateFunction {
    pub fn constant(rate0: f64) -> Self {
        RateFunction::Constant { rate0 }
    }

    pub fn affine(slope: f64, intercept: f64) -> Self {
        RateFunction::Affine { slope, intercept }
    }

    pub fn linear(slope: f64) -> Self {
        RateFunction::Affine {
            slope,
            intercept: 0.0,
        }
    }

    pub fn power(coef: f64, exponent: f64, intercept: f64) -> Self {
        RateFunction::Power {
            coef,
            exponent,
            intercept,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let ok = |c: bool, msg: &str| {
            if c {
                Ok(())
            } else {
                Err(Error::Config(format!("rate function {self:?}: {msg}")))
            }
        };
        match *self {
            RateFunction::Constant { rate0 } => ok(rate0.is_finite() && rate0 >= 0.0, "rate0 must be >= 0"),
            RateFunction::Affine { slope, intercept } => {
                ok(slope.is_finite() && slope >= 0.0, "slope must be >= 0")?;
                ok(intercept.is_finite() && intercept >= 0.0, "intercept must be >= 0")
            }
            RateFunction::Power {
                coef,
                exponent,
                intercept,
            } => {
                ok(coef.is_finite() && coef > 0.0, "coef must be > 0")?;
                ok(exponent.is_finite() && exponent > 0.0, "exponent must be > 0")?;
                ok(intercept.is_finite() && intercept >= 0.0, "intercept must be >= 0")
            }
        }
    }

    /// Growth-condition diagnostics. These never block a run.
    pub fn growth_warnings(&self) -> Vec<String> {
        match *self {
            RateFunction::Power { exponent, .. } if exponent < 1.0 => vec![format!(
                "b'(x) is unbounded near 0 for exponent {exponent}; the growth bound b' <= g*b + c cannot hold"
            )],
            _ => Vec::new(),
        }
    }

    /// `b(x)` without the domain check; callers guarantee `x >= 0`.
    #[inline]
    pub fn eval(&self, x: f64) -> f64 {
        match *self {
            RateFunction::Constant { rate0 } => rate0,
            RateFunction::Affine { slope, intercept } => slope * x + intercept,
            RateFunction::Power {
                coef,
                exponent,
                intercept,
            } => {
                if exponent == 1.0 {
                    coef * x + intercept
                } else if exponent == 2.0 {
                    coef * x * x + intercept
                } else {
                    coef * x.powf(exponent) + intercept
                }
            }
        }
    }

    /// `b(0)`
    pub fn at_zero(&self) -> f64 {
        self.eval(0.0)
    }

    /// The part of `b` that does not vanish at zero.
    pub fn intercept(&self) -> f64 {
        match *self {
            RateFunction::Constant { rate0 } => rate0,
            RateFunction::Affine { intercept, .. } | RateFunction::Power { intercept, .. } => intercept,
        }
    }

    /// True when `b` is identically zero.
    pub fn is_zero(&self) -> bool {
        matches!(*self, RateFunction::Constant { rate0 } if rate0 == 0.0)
            || matches!(*self, RateFunction::Affine { slope, intercept } if slope == 0.0 && intercept == 0.0)
    }
}

/// Checked evaluation of `b(x)`.
pub fn eval_rate(b: &RateFunction, x: f64) -> Result<f64> {
    if !(x >= 0.0) {
        return Err(Error::Domain(format!("potential must be >= 0, got {x}")));
    }
    Ok(b.eval(x))
}

/// `lim_{x -> 0} b(x) / x`.
pub fn rate_slope_at_zero(b: &RateFunction) -> ExtendedReal {
    use ExtendedReal::*;
    match *b {
        RateFunction::Constant { rate0 } => {
            if rate0 > 0.0 {
                Infinite
            } else {
                Finite(0.0)
            }
        }
        RateFunction::Affine { slope, intercept } => {
            if intercept > 0.0 {
                Infinite
            } else {
                Finite(slope)
            }
        }
        RateFunction::Power {
            coef,
            exponent,
            intercept,
        } => {
            if intercept > 0.0 || exponent < 1.0 {
                Infinite
            } else if exponent == 1.0 {
                Finite(coef)
            } else {
                Finite(0.0)
            }
        }
    }
}

/// `int_0^x b(s)/s ds`: total hazard of an isolated neuron decaying from `x`.
pub fn remaining_hazard_to_zero(b: &RateFunction, x: f64) -> ExtendedReal {
    use ExtendedReal::*;
    if x <= 0.0 {
        return Finite(0.0);
    }
    if b.intercept() > 0.0 {
        return Infinite;
    }
    match *b {
        RateFunction::Constant { .. } => Finite(0.0),
        RateFunction::Affine { slope, .. } => Finite(slope * x),
        RateFunction::Power { coef, exponent, .. } => Finite(coef * x.powf(exponent) / exponent),
    }
}

/// Law of the synaptic kick `V` (or `W` under raw scaling).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[cfg_attr(feature = "schema", derive(schemars::JsonSchema))]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum WeightDistribution {
    Constant { w: f64 },
    Uniform { lo: f64, hi: f64 },
}

impl WeightDistribution {
    pub fn validate(&self) -> Result<()> {
        match *self {
            WeightDistribution::Constant { w } if w.is_finite() && w >= 0.0 => Ok(()),
            WeightDistribution::Uniform { lo, hi } if lo.is_finite() && hi.is_finite() && 0.0 <= lo && lo <= hi => {
                Ok(())
            }
            _ => Err(Error::Config(format!(
                "weight distribution {self:?} must have 0 <= lo <= hi < inf"
            ))),
        }
    }

    pub fn mean(&self) -> f64 {
        match *self {
            WeightDistribution::Constant { w } => w,
            WeightDistribution::Uniform { lo, hi } => 0.5 * (lo + hi),
        }
    }

    pub fn variance(&self) -> f64 {
        match *self {
            WeightDistribution::Constant { .. } => 0.0,
            WeightDistribution::Uniform { lo, hi } => (hi - lo).powi(2) / 12.0,
        }
    }

    pub fn support_bound(&self) -> f64 {
        match *self {
            WeightDistribution::Constant { w } => w,
            WeightDistribution::Uniform { hi, .. } => hi,
        }
    }

    /// `E[exp(-xi W)]`
    pub fn laplace(&self, xi: f64) -> f64 {
        match *self {
            WeightDistribution::Constant { w } => (-xi * w).exp(),
            WeightDistribution::Uniform { lo, hi } => {
                let width = hi - lo;
                let z = xi * width;
                if z < 1e-5 {
                    // series of (1 - e^{-z}) / z
                    (-xi * lo).exp() * (1.0 - z / 2.0 + z * z / 6.0 - z * z * z / 24.0)
                } else {
                    (-xi * lo).exp() * (-(-z).exp_m1()) / z
                }
            }
        }
    }

    /// True when sampling needs no randomness.
    pub fn is_degenerate(&self) -> bool {
        match *self {
            WeightDistribution::Constant { .. } => true,
            WeightDistribution::Uniform { lo, hi } => lo == hi,
        }
    }
}

/// One draw from `dist`.
pub fn sample_weight(dist: &WeightDistribution, rng: &mut RngStream) -> f64 {
    match *dist {
        WeightDistribution::Constant { w } => w,
        WeightDistribution::Uniform { lo, hi } => {
            let w = lo + (hi - lo) * rng.uniform();
            w.min(hi)
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[cfg_attr(feature = "schema", derive(schemars::JsonSchema))]
#[serde(rename_all = "snake_case")]
pub enum Scaling {
    #[default]
    Raw,
    /// Each sampled kick is divided by `N`.
    MeanField,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NetworkConfig {
    pub n: usize,
    pub rate: RateFunction,
    pub weights: WeightDistribution,
    #[serde(default)]
    pub scaling: Scaling,
    #[serde(default)]
    pub seed: u64,
}

impl NetworkConfig {
    pub fn new(n: usize, rate: RateFunction, weights: WeightDistribution, scaling: Scaling, seed: u64) -> Self {
        Self {
            n,
            rate,
            weights,
            scaling,
            seed,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.n == 0 {
            return Err(Error::Config("network size must be >= 1".into()));
        }
        self.rate.validate()?;
        self.weights.validate()
    }

    /// Factor applied to every sampled kick.
    pub fn kick_scale(&self) -> f64 {
        match self.scaling {
            Scaling::Raw => 1.0,
            Scaling::MeanField => 1.0 / self.n as f64,
        }
    }

    pub fn with_seed(&self, seed: u64) -> Self {
        Self { seed, ..self.clone() }
    }
}

/// How the starting potentials are generated.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[cfg_attr(feature = "schema", derive(schemars::JsonSchema))]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum InitialCondition {
    Dirac { x: f64 },
    UniformInterval { lo: f64, hi: f64 },
    /// Uniform law with mean `center` and standard deviation `std`.
    UniformAround { center: f64, std: f64 },
    Explicit { values: Vec<f64> },
}

impl InitialCondition {
    pub fn validate(&self, n: usize) -> Result<()> {
        match self {
            InitialCondition::Dirac { x } if x.is_finite() && *x >= 0.0 => Ok(()),
            InitialCondition::UniformInterval { lo, hi } if lo.is_finite() && hi.is_finite() && lo <= hi => Ok(()),
            InitialCondition::UniformAround { center, std } if center.is_finite() && std.is_finite() && *std >= 0.0 => {
                Ok(())
            }
            InitialCondition::Explicit { values } if values.len() == n && values.iter().all(|v| *v >= 0.0) => Ok(()),
            _ => Err(Error::Config(format!("invalid initial condition {self:?} for N={n}"))),
        }
    }

    /// One potential; `index` is used by `Explicit` only.
    pub fn sample_one(&self, index: usize, rng: &mut RngStream) -> f64 {
        let x = match self {
            InitialCondition::Dirac { x } => *x,
            InitialCondition::UniformInterval { lo, hi } => lo + (hi - lo) * rng.uniform(),
            InitialCondition::UniformAround { center, std } => {
                let half = std * 3f64.sqrt();
                center - half + 2.0 * half * rng.uniform()
            }
            InitialCondition::Explicit { values } => values[index % values.len()],
        };
        x.max(0.0)
    }

    pub fn sample(&self, n: usize, rng: &mut RngStream) -> Vec<f64> {
        (0..n).map(|i| self.sample_one(i, rng)).collect()
    }

    /// Mean of the (clipped) law, exact for every variant.
    pub fn mean(&self) -> f64 {
        match self {
            InitialCondition::Dirac { x } => *x,
            InitialCondition::UniformInterval { lo, hi } => clipped_uniform_mean(*lo, *hi),
            InitialCondition::UniformAround { center, std } => {
                let half = std * 3f64.sqrt();
                clipped_uniform_mean(center - half, center + half)
            }
            InitialCondition::Explicit { values } => values.iter().sum::<f64>() / values.len().max(1) as f64,
        }
    }
}

fn clipped_uniform_mean(lo: f64, hi: f64) -> f64 {
    if hi <= 0.0 {
        return 0.0;
    }
    if lo >= 0.0 || hi == lo {
        return 0.5 * (lo.max(0.0) + hi);
    }
    // mass below zero collapses to the atom at 0
    (hi * hi / 2.0) / (hi - lo)
}
