//! Equilibrium of networks with a state-independent rate `b = lambda`.
//!
//! Looking backward from time 0, neuron `i`'s potential collects the kicks it
//! received since its own last spike `t_{i1}`. Each neuron's past spikes form
//! a rate-`lambda` Poisson process, so the stationary law can be sampled
//! exactly by generating those processes back to `T = max_i t_{i1}`.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{sample_weight, Scaling, WeightDistribution};
use crate::quad;
use crate::rng::RngStream;

/// One exact draw of the `N` equilibrium potentials.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EquilibriumSample {
    pub x: Vec<f64>,
}

fn check_rate(rate: f64) -> Result<()> {
    if rate > 0.0 && rate.is_finite() {
        Ok(())
    } else {
        Err(Error::Domain(format!("rate must be finite and > 0, got {rate}")))
    }
}

fn weight_scale(n: usize, scaling: Scaling) -> f64 {
    match scaling {
        Scaling::Raw => 1.0,
        Scaling::MeanField => 1.0 / n as f64,
    }
}

/// Backward-coupling (coupling from the past) sample of the stationary law.
pub fn backward_coupling_sample(
    n: usize,
    rate: f64,
    weights: &WeightDistribution,
    scaling: Scaling,
    rng: &mut RngStream,
) -> Result<EquilibriumSample> {
    if n == 0 {
        return Err(Error::Domain("network size must be >= 1".into()));
    }
    check_rate(rate)?;
    weights.validate()?;
    let first: Vec<f64> = (0..n).map(|_| rng.exponential(rate)).collect();
    let horizon = first.iter().cloned().fold(0.0, f64::max);
    // (backward time, emitter)
    let mut points: Vec<(f64, usize)> = Vec::with_capacity(n * 4);
    for (j, t1) in first.iter().enumerate() {
        points.push((*t1, j));
        let mut t = *t1 + rng.exponential(rate);
        while t <= horizon {
            points.push((t, j));
            t += rng.exponential(rate);
        }
    }
    points.sort_by(|a, b| a.0.total_cmp(&b.0));
    let scale = weight_scale(n, scaling);
    let mut x = vec![0.0; n];
    if weights.is_degenerate() {
        // prefix sums of w e^{-t}, minus the neuron's own points
        let w = weights.mean() * scale;
        let mut prefix = Vec::with_capacity(points.len() + 1);
        prefix.push(0.0);
        for (t, _) in &points {
            prefix.push(prefix.last().unwrap() + w * (-t).exp());
        }
        for i in 0..n {
            let k = points.partition_point(|p| p.0 <= first[i]);
            // neuron i's only point up to t_{i1} is t_{i1} itself
            x[i] = (prefix[k] - w * (-first[i]).exp()).max(0.0);
        }
    } else {
        for i in 0..n {
            let mut acc = 0.0;
            for (t, j) in points.iter() {
                if *t > first[i] {
                    break;
                }
                if *j != i {
                    acc += sample_weight(weights, rng) * scale * (-t).exp();
                }
            }
            x[i] = acc;
        }
    }
    Ok(EquilibriumSample { x })
}

/// `E(X_1) = (N - 1) E(W) lambda / (lambda + 1)`
pub fn equilibrium_mean(n: usize, rate: f64, mean_weight: f64) -> f64 {
    n.saturating_sub(1) as f64 * mean_weight * rate / (rate + 1.0)
}

/// Probability that neuron 1 spiked last, `1 / N`.
pub fn atom_at_zero(n: usize) -> f64 {
    1.0 / n as f64
}

/// `E(exp(-xi X_1))` at equilibrium by nested adaptive quadrature.
pub fn laplace_transform(
    n: usize,
    rate: f64,
    weights: &WeightDistribution,
    scaling: Scaling,
    xi: f64,
    tol: f64,
) -> Result<f64> {
    check_rate(rate)?;
    if !(xi >= 0.0) {
        return Err(Error::Domain(format!("xi must be >= 0, got {xi}")));
    }
    if xi == 0.0 || n <= 1 {
        return Ok(1.0);
    }
    let scale = weight_scale(n, scaling);
    let others = (n - 1) as f64;
    let inner = |x: f64| {
        quad::adaptive(
            |u| 1.0 - weights.laplace(xi * scale * (-u).exp()),
            0.0,
            x,
            1e-300,
            tol * 1e-2,
        )
        .value
    };
    // the e^{-lambda x} weight bounds the tail beyond x_max by tol
    let x_max = -(tol * 1e-2).ln() / rate;
    let body = quad::adaptive(
        |x| (-rate * others * inner(x)).exp() * rate * (-rate * x).exp(),
        0.0,
        x_max,
        1e-300,
        tol,
    );
    Ok(body.value)
}

/// Large-N density `(1/E(V)) (1 - u/(lambda E(V)))^{lambda - 1}` on
/// `[0, lambda E(V)]`, zero elsewhere.
pub fn limit_density(rate: f64, mean_weight: f64, u: f64) -> f64 {
    let top = rate * mean_weight;
    if !(0.0..=top).contains(&u) {
        return 0.0;
    }
    (1.0 - u / top).powf(rate - 1.0) / mean_weight
}

/// CDF of [`limit_density`].
pub fn limit_cdf(rate: f64, mean_weight: f64, u: f64) -> f64 {
    let top = rate * mean_weight;
    if u <= 0.0 {
        0.0
    } else if u >= top {
        1.0
    } else {
        1.0 - (1.0 - u / top).powf(rate)
    }
}
