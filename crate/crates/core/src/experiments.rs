//! Ensemble protocols behind the command-line experiments.
//!
//! Every replica gets its own seed derived from the experiment seed and the
//! replica's grid coordinates, so results do not depend on scheduling.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::approx_sim::{averaged_activity, run_discrete};
use crate::constant_rate::{atom_at_zero, backward_coupling_sample, equilibrium_mean, laplace_transform};
use crate::error::{Error, Result};
use crate::exact_sim::{extinction_time, ExtinctionOutcome};
use crate::mckean_vlasov::{compare_with_particles, picard_iterate, PicardConfig};
use crate::model::{rate_slope_at_zero, ExtendedReal, InitialCondition, NetworkConfig, RateFunction, Scaling, WeightDistribution};
use crate::rng::{derive_seed, RngStream};
use crate::stationary::{
    classify_trivial_stability, excitation_ratio, find_stationary, superlinear_branches, superlinear_critical,
    RootSearch, SolutionKind, StationarySolution, SuperlinearBranches, TrivialStability,
};
use crate::stats::{mean_estimate, quantile_sorted};

/// Default Sustained/Trivial threshold on the averaged firing rate.
pub const DEFAULT_THRESHOLD: f64 = 0.05;
/// Standard deviation of the initial potentials in the bistability protocol.
pub const BISTABILITY_STD: f64 = 0.2;

/// Shared settings of fixed-step ensembles.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EnsembleParams {
    pub n: usize,
    pub replicas: usize,
    pub seed: u64,
    pub dt: f64,
    pub horizon: f64,
    /// Averaging window for the firing rate.
    pub window: (f64, f64),
}

impl EnsembleParams {
    /// Window `[T - 10, T]`.
    pub fn desk(n: usize, replicas: usize, seed: u64) -> Self {
        Self {
            n,
            replicas,
            seed,
            dt: 0.01,
            horizon: 100.0,
            window: (90.0, 100.0),
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.n == 0 || self.replicas == 0 {
            return Err(Error::Config("network size and replicas must be >= 1".into()));
        }
        let (a, b) = self.window;
        if !(a <= b && a >= 0.0 && b <= self.horizon) {
            return Err(Error::Config(format!(
                "averaging window [{a}, {b}] must lie inside [0, {}]",
                self.horizon
            )));
        }
        Ok(())
    }
}

fn check_grid<T>(name: &str, grid: &[T]) -> Result<()> {
    if grid.is_empty() {
        Err(Error::Config(format!("{name} grid must not be empty")))
    } else {
        Ok(())
    }
}

/// Largest non-trivial stationary rate, or 0 when there is none.
pub fn top_stationary_rate(b: &RateFunction, mean_weight: f64) -> Result<f64> {
    let roots = find_stationary(b, mean_weight, &RootSearch::default())?;
    Ok(roots
        .iter()
        .filter(|r| r.kind == SolutionKind::NonTrivial)
        .map(|r| r.beta)
        .fold(0.0, f64::max))
}

/// Averaged firing rate of one mean-field network run.
pub fn network_activity(
    b: &RateFunction,
    mean_weight: f64,
    init: &InitialCondition,
    params: &EnsembleParams,
    seed: u64,
) -> Result<f64> {
    let cfg = NetworkConfig::new(
        params.n,
        *b,
        WeightDistribution::Constant { w: mean_weight },
        Scaling::MeanField,
        seed,
    );
    let out = run_discrete(&cfg, init, params.dt, params.horizon)?;
    averaged_activity(&out, params.window)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PhaseRow {
    pub mean_weight: f64,
    pub replica: usize,
    pub seed: u64,
    pub beta_hat: f64,
    pub beta_star: f64,
}

/// Averaged activity against the stationary rate for each `E(V)`.
pub fn phase_affine(
    b: &RateFunction,
    mean_weights: &[f64],
    init: &InitialCondition,
    params: &EnsembleParams,
) -> Result<Vec<PhaseRow>> {
    check_grid("E(V)", mean_weights)?;
    params.validate()?;
    if !matches!(b, RateFunction::Affine { .. }) {
        return Err(Error::Config("phase-affine needs an affine rate".into()));
    }
    let stars: Vec<f64> = mean_weights
        .iter()
        .map(|ev| top_stationary_rate(b, *ev))
        .collect::<Result<_>>()?;
    let tasks: Vec<(usize, usize)> = (0..mean_weights.len())
        .flat_map(|g| (0..params.replicas).map(move |r| (g, r)))
        .collect();
    tasks
        .par_iter()
        .map(|&(g, r)| {
            let seed = derive_seed(params.seed, &[g as u64, r as u64]);
            Ok(PhaseRow {
                mean_weight: mean_weights[g],
                replica: r,
                seed,
                beta_hat: network_activity(b, mean_weights[g], init, params, seed)?,
                beta_star: stars[g],
            })
        })
        .collect()
}

/// An order statistic of a right-censored sample: censored values are only
/// known to exceed the horizon.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", content = "value", rename_all = "snake_case")]
pub enum CensoredStat {
    Exact(f64),
    AtLeast(f64),
}

impl CensoredStat {
    /// True only when the ordering is certain.
    pub fn certainly_less_than(&self, other: &CensoredStat) -> bool {
        match (*self, *other) {
            (CensoredStat::Exact(a), CensoredStat::Exact(b)) => a < b,
            (CensoredStat::Exact(a), CensoredStat::AtLeast(b)) => a < b,
            (CensoredStat::AtLeast(_), _) => false,
        }
    }

    pub fn value(&self) -> f64 {
        match *self {
            CensoredStat::Exact(v) | CensoredStat::AtLeast(v) => v,
        }
    }
}

/// Quantile of `times` where `None` marks a run censored at `horizon`.
pub fn censored_quantile(times: &[Option<f64>], horizon: f64, q: f64) -> CensoredStat {
    let mut v: Vec<f64> = times.iter().map(|t| t.unwrap_or(f64::INFINITY)).collect();
    v.sort_by(f64::total_cmp);
    let x = quantile_sorted(&v, q);
    if x.is_finite() {
        CensoredStat::Exact(x)
    } else {
        CensoredStat::AtLeast(horizon)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExtinctionRow {
    pub n: usize,
    pub mean_weight: f64,
    pub replica: usize,
    pub seed: u64,
    pub outcome: ExtinctionOutcome,
}

impl ExtinctionRow {
    pub fn time(&self) -> Option<f64> {
        match self.outcome {
            ExtinctionOutcome::Extinct { last_spike_time, .. } => Some(last_spike_time),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExtinctionSummary {
    pub n: usize,
    pub mean_weight: f64,
    pub extinct: usize,
    pub censored: usize,
    pub never_extinguishes: usize,
    pub median: Option<CensoredStat>,
    pub lower_quartile: Option<CensoredStat>,
    pub upper_quartile: Option<CensoredStat>,
}

/// Exact-simulation extinction times over `(N, E(V))` with runs censored at
/// `horizon`.
pub fn extinction_scaling(
    b: &RateFunction,
    sizes: &[usize],
    mean_weights: &[f64],
    init: &InitialCondition,
    replicas: usize,
    seed: u64,
    horizon: f64,
) -> Result<(Vec<ExtinctionRow>, Vec<ExtinctionSummary>)> {
    check_grid("N", sizes)?;
    check_grid("E(V)", mean_weights)?;
    if replicas == 0 {
        return Err(Error::Config("replicas must be >= 1".into()));
    }
    if b.at_zero() > 0.0 {
        return Err(Error::Config("extinction needs a rate with b(0) = 0".into()));
    }
    let cells: Vec<(usize, usize)> = (0..sizes.len())
        .flat_map(|i| (0..mean_weights.len()).map(move |j| (i, j)))
        .collect();
    let tasks: Vec<(usize, usize, usize)> = cells
        .iter()
        .flat_map(|&(i, j)| (0..replicas).map(move |r| (i, j, r)))
        .collect();
    let rows: Vec<ExtinctionRow> = tasks
        .par_iter()
        .map(|&(i, j, r)| {
            let n = sizes[i];
            let ev = mean_weights[j];
            let seed = derive_seed(seed, &[i as u64, j as u64, r as u64]);
            let cfg = NetworkConfig::new(n, *b, WeightDistribution::Constant { w: ev }, Scaling::MeanField, seed);
            let report = extinction_time(&cfg, init, horizon, &RngStream::new(seed))?;
            Ok(ExtinctionRow {
                n,
                mean_weight: ev,
                replica: r,
                seed,
                outcome: report.outcome,
            })
        })
        .collect::<Result<_>>()?;
    let summaries = rows
        .chunks(replicas)
        .map(|group| {
            let times: Vec<Option<f64>> = group
                .iter()
                .filter(|r| !matches!(r.outcome, ExtinctionOutcome::NeverExtinguishes))
                .map(ExtinctionRow::time)
                .collect();
            let stat = |q| (!times.is_empty()).then(|| censored_quantile(&times, horizon, q));
            let quart = |q| (times.len() > 1).then(|| censored_quantile(&times, horizon, q));
            ExtinctionSummary {
                n: group[0].n,
                mean_weight: group[0].mean_weight,
                extinct: group.iter().filter(|r| r.time().is_some()).count(),
                censored: group
                    .iter()
                    .filter(|r| matches!(r.outcome, ExtinctionOutcome::HorizonExceeded { .. }))
                    .count(),
                never_extinguishes: group
                    .iter()
                    .filter(|r| matches!(r.outcome, ExtinctionOutcome::NeverExtinguishes))
                    .count(),
                median: stat(0.5),
                lower_quartile: quart(0.25),
                upper_quartile: quart(0.75),
            }
        })
        .collect();
    Ok((rows, summaries))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TerminalClass {
    Trivial,
    Sustained,
}

pub fn classify(beta_hat: f64, threshold: f64) -> TerminalClass {
    if beta_hat > threshold {
        TerminalClass::Sustained
    } else {
        TerminalClass::Trivial
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BistabilityRow {
    pub v0: f64,
    pub replica: usize,
    pub seed: u64,
    pub beta_hat: f64,
    pub class: TerminalClass,
}

/// Replicas started uniformly around `v0` (std 0.2).
pub fn bistability_point(
    b: &RateFunction,
    mean_weight: f64,
    v0: f64,
    params: &EnsembleParams,
    threshold: f64,
) -> Result<Vec<BistabilityRow>> {
    let init = InitialCondition::UniformAround {
        center: v0,
        std: BISTABILITY_STD,
    };
    (0..params.replicas)
        .into_par_iter()
        .map(|r| {
            let seed = derive_seed(params.seed, &[v0.to_bits(), r as u64]);
            let beta_hat = network_activity(b, mean_weight, &init, params, seed)?;
            Ok(BistabilityRow {
                v0,
                replica: r,
                seed,
                beta_hat,
                class: classify(beta_hat, threshold),
            })
        })
        .collect()
}

fn unanimous(rows: &[BistabilityRow]) -> Option<TerminalClass> {
    let first = rows.first()?.class;
    rows.iter().all(|r| r.class == first).then_some(first)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BistabilityReport {
    pub mean_weight: f64,
    pub rho: f64,
    pub branches: Option<SuperlinearBranches>,
    pub rows: Vec<BistabilityRow>,
    /// `[largest all-Trivial v0, smallest all-Sustained v0]` after refinement.
    pub separatrix: Option<(f64, f64)>,
}

/// Scan `v0_grid`, then narrow the switch between all-Trivial and
/// all-Sustained starting points by bisection. A bisection midpoint with mixed
/// classes ends the refinement and the current bracket is reported.
pub fn bistability_quadratic(
    b: &RateFunction,
    mean_weight: f64,
    v0_grid: &[f64],
    params: &EnsembleParams,
    threshold: f64,
    refine_steps: usize,
) -> Result<BistabilityReport> {
    check_grid("v0", v0_grid)?;
    params.validate()?;
    let (coef, exponent) = match *b {
        RateFunction::Power { coef, exponent, .. } if exponent > 1.0 => (coef, exponent),
        _ => return Err(Error::Config("bistability needs a power rate with exponent > 1".into())),
    };
    let rho = coef * mean_weight.powf(exponent);
    let branches = if b.intercept() == 0.0 {
        let diagram = superlinear_critical(exponent, 1e-2, 1e2, 41)?;
        Some(superlinear_branches(&diagram, rho, 1e-9)?)
    } else {
        None
    };
    let mut grid = v0_grid.to_vec();
    grid.sort_by(f64::total_cmp);
    let mut rows = Vec::new();
    let mut verdicts = Vec::new();
    for v0 in &grid {
        let point = bistability_point(b, mean_weight, *v0, params, threshold)?;
        verdicts.push((*v0, unanimous(&point)));
        rows.extend(point);
    }
    let hi = verdicts
        .iter()
        .find(|(_, c)| *c == Some(TerminalClass::Sustained))
        .map(|(v, _)| *v);
    let lo = hi.and_then(|h| {
        verdicts
            .iter()
            .rev()
            .find(|(v, c)| *v < h && *c == Some(TerminalClass::Trivial))
            .map(|(v, _)| *v)
    });
    let separatrix = match (lo, hi) {
        (Some(mut lo), Some(mut hi)) => {
            for _ in 0..refine_steps {
                let mid = 0.5 * (lo + hi);
                let point = bistability_point(b, mean_weight, mid, params, threshold)?;
                let verdict = unanimous(&point);
                rows.extend(point);
                match verdict {
                    Some(TerminalClass::Trivial) => lo = mid,
                    Some(TerminalClass::Sustained) => hi = mid,
                    None => break,
                }
            }
            Some((lo, hi))
        }
        _ => None,
    };
    Ok(BistabilityReport {
        mean_weight,
        rho,
        branches,
        rows,
        separatrix,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FixedPointRecord {
    pub rate: RateFunction,
    pub mean_weight: f64,
    pub rho: ExtendedReal,
    pub lambda0: ExtendedReal,
    pub trivial: TrivialStability,
    pub roots: Vec<StationarySolution>,
    /// `(rho_c, beta_c)` for superlinear power rates.
    pub critical: Option<(f64, f64)>,
}

pub fn fixed_points(rates: &[RateFunction], mean_weights: &[f64], search: &RootSearch) -> Result<Vec<FixedPointRecord>> {
    check_grid("rate", rates)?;
    check_grid("E(V)", mean_weights)?;
    let mut out = Vec::new();
    for b in rates {
        b.validate()?;
        let critical = match *b {
            RateFunction::Power { exponent, intercept, .. } if exponent > 1.0 && intercept == 0.0 => {
                let d = superlinear_critical(exponent, 1e-2, 1e2, 41)?;
                Some((d.rho_c, d.beta_c))
            }
            _ => None,
        };
        for ev in mean_weights {
            out.push(FixedPointRecord {
                rate: *b,
                mean_weight: *ev,
                rho: excitation_ratio(b, *ev),
                lambda0: rate_slope_at_zero(b),
                trivial: classify_trivial_stability(b, *ev),
                roots: find_stationary(b, *ev, search)?,
                critical,
            });
        }
    }
    Ok(out)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Comparison {
    pub formula: f64,
    pub estimate: f64,
    pub std_error: f64,
    pub z: f64,
}

impl Comparison {
    fn of(formula: f64, draws: &[f64]) -> Self {
        let est = mean_estimate(draws);
        Self {
            formula,
            estimate: est.mean,
            std_error: est.std_error,
            z: est.z_score(formula),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConstantRateRow {
    pub n: usize,
    pub rate: f64,
    pub mean: Comparison,
    pub atom: Comparison,
    /// `(xi, comparison)`
    pub laplace: Vec<(f64, Comparison)>,
}

/// Closed forms against backward-coupling Monte Carlo for each `(N, lambda)`.
pub fn constant_rate_check(
    sizes: &[usize],
    rates: &[f64],
    weights: &WeightDistribution,
    xi_grid: &[f64],
    samples: usize,
    seed: u64,
) -> Result<Vec<ConstantRateRow>> {
    check_grid("N", sizes)?;
    check_grid("rate", rates)?;
    if samples < 2 {
        return Err(Error::Config("need at least 2 samples".into()));
    }
    let tasks: Vec<(usize, usize)> = (0..sizes.len())
        .flat_map(|i| (0..rates.len()).map(move |j| (i, j)))
        .collect();
    tasks
        .par_iter()
        .map(|&(i, j)| {
            let (n, rate) = (sizes[i], rates[j]);
            let mut rng = RngStream::new(seed).split(i as u64).split(j as u64);
            let mut first = Vec::with_capacity(samples);
            for _ in 0..samples {
                first.push(backward_coupling_sample(n, rate, weights, Scaling::Raw, &mut rng)?.x[0]);
            }
            let zeros: Vec<f64> = first.iter().map(|x| if *x == 0.0 { 1.0 } else { 0.0 }).collect();
            let laplace = xi_grid
                .iter()
                .map(|xi| {
                    let draws: Vec<f64> = first.iter().map(|x| (-xi * x).exp()).collect();
                    let exact = laplace_transform(n, rate, weights, Scaling::Raw, *xi, 1e-8)?;
                    Ok((*xi, Comparison::of(exact, &draws)))
                })
                .collect::<Result<_>>()?;
            Ok(ConstantRateRow {
                n,
                rate,
                mean: Comparison::of(equilibrium_mean(n, rate, weights.mean()), &first),
                atom: Comparison::of(atom_at_zero(n), &zeros),
                laplace,
            })
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct McKeanComparison {
    pub gaps: Vec<f64>,
    pub converged: bool,
    pub cutoff: f64,
    pub max_rate: f64,
    pub beta_star: f64,
    pub distance: f64,
    /// `0.1 beta*`
    pub distance_tol: f64,
    pub gap_tol: f64,
    pub pass: bool,
}

/// Picard solution against a mean-field particle run of `particles` neurons.
pub fn mckean_compare(
    b: &RateFunction,
    mean_weight: f64,
    init: &InitialCondition,
    picard: &PicardConfig,
    particles: usize,
    dt: f64,
) -> Result<McKeanComparison> {
    let report = picard_iterate(b, mean_weight, init, picard)?;
    let cfg = NetworkConfig::new(
        particles,
        *b,
        WeightDistribution::Constant { w: mean_weight },
        Scaling::MeanField,
        derive_seed(picard.seed, &[1]),
    );
    let run = run_discrete(&cfg, init, dt, picard.horizon)?;
    let distance = compare_with_particles(&report.trajectory, &run);
    let beta_star = top_stationary_rate(b, mean_weight)?;
    let distance_tol = 0.1 * beta_star;
    let last_gap = report.gaps.last().copied().unwrap_or(f64::INFINITY);
    Ok(McKeanComparison {
        pass: last_gap < picard.tol && distance < distance_tol,
        gaps: report.gaps,
        converged: report.converged,
        cutoff: report.cutoff,
        max_rate: report.max_rate,
        beta_star,
        distance,
        distance_tol,
        gap_tol: picard.tol,
    })
}
