//! Fixed-step approximate simulation for large networks.
//!
//! Each step decays every potential, draws independent Bernoulli spikes with
//! probability `1 - exp(-b(x) dt)` against the decayed values, resets the
//! spikers and then delivers every spiker's kick to every other neuron.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::exact_sim::{STREAM_INIT, STREAM_KICKS};
use crate::model::{sample_weight, InitialCondition, NetworkConfig};
use crate::rng::RngStream;

pub(crate) const STREAM_FIRING: u64 = 0x5_0000;

/// Bin count of the terminal histogram.
pub const HISTOGRAM_BINS: usize = 200;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Histogram {
    pub edges: Vec<f64>,
    pub counts: Vec<u64>,
}

impl Histogram {
    /// Uniform bins over `[0, 1.2 max]`.
    pub fn of(values: &[f64], bins: usize) -> Self {
        let top = 1.2 * values.iter().cloned().fold(0.0, f64::max);
        let top = if top > 0.0 { top } else { 1.0 };
        let edges: Vec<f64> = (0..=bins).map(|k| top * k as f64 / bins as f64).collect();
        let mut counts = vec![0u64; bins];
        for v in values {
            let k = ((v / top) * bins as f64) as usize;
            counts[k.min(bins - 1)] += 1;
        }
        Self { edges, counts }
    }

    pub fn total(&self) -> u64 {
        self.counts.iter().sum()
    }
}

/// Per-step records; entry `k` describes the state at `t_{k+1} = (k+1) dt`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DiscreteRunOutput {
    pub dt: f64,
    pub times: Vec<f64>,
    pub mean_potential: Vec<f64>,
    /// `<Lambda_N, b>`
    pub mean_rate: Vec<f64>,
    pub spikes: Vec<u32>,
    pub initial_mean_rate: f64,
    pub final_potentials: Vec<f64>,
    pub histogram: Histogram,
}

impl DiscreteRunOutput {
    pub fn total_spikes(&self) -> u64 {
        self.spikes.iter().map(|s| *s as u64).sum()
    }
}

fn mean_rate(config: &NetworkConfig, x: &[f64]) -> f64 {
    x.iter().map(|v| config.rate.eval(*v)).sum::<f64>() / x.len() as f64
}

/// Run the fixed-step scheme to `horizon` with randomness from `config.seed`.
pub fn run_discrete(config: &NetworkConfig, init: &InitialCondition, dt: f64, horizon: f64) -> Result<DiscreteRunOutput> {
    run_discrete_with(config, init, dt, horizon, &RngStream::new(config.seed))
}

pub fn run_discrete_with(
    config: &NetworkConfig,
    init: &InitialCondition,
    dt: f64,
    horizon: f64,
    root: &RngStream,
) -> Result<DiscreteRunOutput> {
    config.validate()?;
    init.validate(config.n)?;
    if !(dt > 0.0 && dt <= 0.1) {
        return Err(Error::Config(format!("time step must satisfy 0 < dt <= 0.1, got {dt}")));
    }
    if !(horizon > 0.0 && horizon.is_finite()) {
        return Err(Error::Config(format!("horizon must be finite and > 0, got {horizon}")));
    }
    let n = config.n;
    let mut x = init.sample(n, &mut root.split(STREAM_INIT));
    let mut fire_rng = root.split(STREAM_FIRING);
    let mut kick_rng = root.split(STREAM_KICKS);
    let scale = config.kick_scale();
    let degenerate = config.weights.is_degenerate();
    let w_const = config.weights.mean() * scale;
    let decay = (-dt).exp();
    let steps = (horizon / dt - 1e-9).ceil() as usize;
    let mut out = DiscreteRunOutput {
        dt,
        times: Vec::with_capacity(steps),
        mean_potential: Vec::with_capacity(steps),
        mean_rate: Vec::with_capacity(steps),
        spikes: Vec::with_capacity(steps),
        initial_mean_rate: mean_rate(config, &x),
        final_potentials: Vec::new(),
        histogram: Histogram {
            edges: Vec::new(),
            counts: Vec::new(),
        },
    };
    let mut fired: Vec<usize> = Vec::new();
    for k in 0..steps {
        fired.clear();
        for (i, xi) in x.iter_mut().enumerate() {
            *xi *= decay;
            let p = -(-config.rate.eval(*xi) * dt).exp_m1();
            if p > 0.0 && fire_rng.uniform() < p {
                fired.push(i);
            }
        }
        for &j in &fired {
            x[j] = 0.0;
        }
        if !fired.is_empty() {
            if degenerate {
                let f = fired.len() as f64;
                for xi in x.iter_mut() {
                    *xi += f * w_const;
                }
                for &j in &fired {
                    x[j] -= w_const;
                }
            } else {
                for &j in &fired {
                    for (i, xi) in x.iter_mut().enumerate() {
                        if i != j {
                            *xi += sample_weight(&config.weights, &mut kick_rng) * scale;
                        }
                    }
                }
            }
        }
        out.times.push((k + 1) as f64 * dt);
        out.mean_potential.push(x.iter().sum::<f64>() / n as f64);
        out.mean_rate.push(mean_rate(config, &x));
        out.spikes.push(fired.len() as u32);
    }
    out.histogram = Histogram::of(&x, HISTOGRAM_BINS);
    out.final_potentials = x;
    Ok(out)
}

/// Time average of `<Lambda_N, b>` over records with `t in [t_a, t_b]`.
pub fn averaged_activity(output: &DiscreteRunOutput, window: (f64, f64)) -> Result<f64> {
    let (ta, tb) = window;
    let slack = 1e-9 * output.dt;
    let vals: Vec<f64> = output
        .times
        .iter()
        .zip(&output.mean_rate)
        .filter(|(t, _)| **t >= ta - slack && **t <= tb + slack)
        .map(|(_, r)| *r)
        .collect();
    if vals.is_empty() {
        return Err(Error::Config(format!("averaging window [{ta}, {tb}] contains no records")));
    }
    Ok(vals.iter().sum::<f64>() / vals.len() as f64)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RateBoundCheck {
    pub pass: bool,
    pub max_rate: f64,
}

/// Whether the recorded `<Lambda_N, b>` never exceeds `cap`.
pub fn firing_rate_bound_check(output: &DiscreteRunOutput, cap: f64) -> RateBoundCheck {
    let max_rate = output
        .mean_rate
        .iter()
        .cloned()
        .fold(output.initial_mean_rate, f64::max);
    RateBoundCheck {
        pass: max_rate <= cap,
        max_rate,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{RateFunction, Scaling, WeightDistribution};
    use crate::stats::mean_estimate;

    fn single(rate: RateFunction, seed: u64) -> NetworkConfig {
        NetworkConfig::new(1, rate, WeightDistribution::Constant { w: 1.0 }, Scaling::Raw, seed)
    }

    #[test]
    fn silent_network_decays_deterministically() {
        let cfg = NetworkConfig::new(
            30,
            RateFunction::constant(0.0),
            WeightDistribution::Uniform { lo: 0.0, hi: 1.0 },
            Scaling::Raw,
            4,
        );
        let init = InitialCondition::UniformInterval { lo: 0.0, hi: 2.0 };
        let out = run_discrete(&cfg, &init, 0.01, 5.0).unwrap();
        let x0 = init.sample(30, &mut RngStream::new(4).split(STREAM_INIT));
        let m0 = x0.iter().sum::<f64>() / 30.0;
        assert_eq!(out.times.len(), 500);
        assert!((out.mean_potential.last().unwrap() - m0 * (-5f64).exp()).abs() < 1e-12);
        assert_eq!(out.total_spikes(), 0);
        let check = firing_rate_bound_check(&out, 1.0);
        assert!(check.pass && check.max_rate == 0.0);
        assert!(!firing_rate_bound_check(&out, -1.0).pass);
    }

    #[test]
    fn rejects_bad_step() {
        let cfg = single(RateFunction::constant(1.0), 0);
        let init = InitialCondition::Dirac { x: 0.0 };
        assert!(run_discrete(&cfg, &init, 0.0, 1.0).is_err());
        assert!(run_discrete(&cfg, &init, 0.2, 1.0).is_err());
    }

    #[test]
    fn poisson_count_for_constant_rate() {
        let init = InitialCondition::Dirac { x: 0.0 };
        let counts: Vec<f64> = (0..1000)
            .map(|s| run_discrete(&single(RateFunction::constant(1.0), s), &init, 1e-3, 10.0).unwrap().total_spikes() as f64)
            .collect();
        assert!(mean_estimate(&counts).z_score(10.0) < 3.0);
    }

    #[test]
    fn averaging_window() {
        let out = DiscreteRunOutput {
            dt: 0.5,
            times: vec![0.5, 1.0, 1.5, 2.0],
            mean_potential: vec![0.0; 4],
            mean_rate: vec![1.0, 2.0, 3.0, 4.0],
            spikes: vec![0; 4],
            initial_mean_rate: 0.0,
            final_potentials: vec![],
            histogram: Histogram::of(&[], 2),
        };
        assert_eq!(averaged_activity(&out, (1.0, 2.0)).unwrap(), 3.0);
        assert!(averaged_activity(&out, (3.0, 4.0)).is_err());
    }

    #[test]
    fn histogram_holds_every_neuron_and_potentials_stay_nonnegative() {
        let cfg = NetworkConfig::new(
            200,
            RateFunction::linear(1.0),
            WeightDistribution::Uniform { lo: 0.0, hi: 4.0 },
            Scaling::MeanField,
            8,
        );
        let out = run_discrete(&cfg, &InitialCondition::UniformInterval { lo: 0.0, hi: 1.0 }, 0.01, 20.0).unwrap();
        assert_eq!(out.histogram.total(), 200);
        assert_eq!(out.histogram.edges.len(), HISTOGRAM_BINS + 1);
        assert!(out.final_potentials.iter().all(|x| *x >= 0.0));
        assert!(out.mean_potential.iter().all(|m| *m >= 0.0));
    }
}
