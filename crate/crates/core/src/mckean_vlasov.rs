//! Picard iteration for the mean-field limit of one neuron.
//!
//! Given a candidate mean rate `u(t)`, a neuron follows
//! `dZ = (-Z + E(V) min(u, C)) dt` and jumps to 0 at rate `b(Z)`. The next
//! iterate is the Monte Carlo mean of `b(Z(t))` over independent particles.
//! Particle `p` always uses the same random stream, so the empirical map
//! `u -> u'` is deterministic and the stopping rule on successive gaps is
//! meaningful.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::approx_sim::DiscreteRunOutput;
use crate::error::{Error, Result};
use crate::model::{InitialCondition, RateFunction};
use crate::quad::gl16;
use crate::rng::RngStream;

const STREAM_PARTICLES: u64 = 0x6_0000;
/// Particles per parallel work unit; fixed so the reduction order does not
/// depend on the thread count.
const CHUNK: usize = 64;

/// `u_m` at `t_m = m h`, `m = 0..=M`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MeanRateTrajectory {
    pub h: f64,
    pub values: Vec<f64>,
}

impl MeanRateTrajectory {
    pub fn constant(h: f64, steps: usize, value: f64) -> Self {
        Self {
            h,
            values: vec![value; steps + 1],
        }
    }

    pub fn horizon(&self) -> f64 {
        self.h * (self.values.len() - 1) as f64
    }

    pub fn time(&self, m: usize) -> f64 {
        m as f64 * self.h
    }

    /// Linear interpolation, clamped to the grid.
    pub fn at(&self, t: f64) -> f64 {
        let last = self.values.len() - 1;
        let pos = (t / self.h).clamp(0.0, last as f64);
        let m = (pos.floor() as usize).min(last.saturating_sub(1));
        let w = pos - m as f64;
        if last == 0 {
            return self.values[0];
        }
        self.values[m] * (1.0 - w) + self.values[m + 1] * w
    }

    pub fn sup_distance(&self, other: &Self) -> f64 {
        self.values
            .iter()
            .zip(&other.values)
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max)
    }
}

/// Hazard and inversion along `Z(s) = a + (z - a) e^{-s}` inside one cell.
struct CellFlow<'a> {
    b: &'a RateFunction,
    a: f64,
    z: f64,
}

impl CellFlow<'_> {
    #[inline]
    fn point(&self, s: f64) -> f64 {
        self.a + (self.z - self.a) * (-s).exp()
    }

    #[inline]
    fn rate(&self, s: f64) -> f64 {
        self.b.eval(self.point(s).max(0.0))
    }

    fn gl(&self, s0: f64, s1: f64) -> f64 {
        gl16().integrate(s0, s1, |s| self.rate(s))
    }

    /// GL16 with halving until the two estimates agree to 1e-10.
    fn quad(&self, s0: f64, s1: f64, whole: f64, depth: u32) -> f64 {
        let mid = 0.5 * (s0 + s1);
        let left = self.gl(s0, mid);
        let right = self.gl(mid, s1);
        if (left + right - whole).abs() < 1e-10 || depth > 20 {
            left + right
        } else {
            self.quad(s0, mid, left, depth + 1) + self.quad(mid, s1, right, depth + 1)
        }
    }

    /// `int_0^s b(Z(v)) dv`
    fn hazard(&self, s: f64) -> f64 {
        match *self.b {
            RateFunction::Constant { rate0 } => rate0 * s,
            RateFunction::Affine { slope, intercept } => {
                (slope * self.a + intercept) * s - slope * (self.z - self.a) * (-s).exp_m1()
            }
            RateFunction::Power { .. } => {
                if s <= 0.0 {
                    return 0.0;
                }
                self.quad(0.0, s, self.gl(0.0, s), 0)
            }
        }
    }

    /// Smallest `s in (0, h]` with `hazard(s) = target`, given
    /// `hazard(h) >= target`; safeguarded Newton.
    fn invert(&self, target: f64, h: f64) -> f64 {
        let (mut lo, mut hi) = (0.0, h);
        let mut s = h * 0.5;
        for _ in 0..100 {
            let r = self.hazard(s) - target;
            if r.abs() <= 1e-13 * target.max(1.0) {
                return s;
            }
            if r > 0.0 {
                hi = s;
            } else {
                lo = s;
            }
            let d = self.rate(s);
            let next = if d > 0.0 { s - r / d } else { f64::NAN };
            s = if next > lo && next < hi { next } else { 0.5 * (lo + hi) };
            if hi - lo < 1e-15 * h.max(1.0) {
                break;
            }
        }
        s
    }
}

/// Path statistics of one particle under frozen forcing.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FrozenPath {
    pub jump_times: Vec<f64>,
    /// `Z(t_m)` on the grid.
    pub potentials: Vec<f64>,
}

/// Simulate one particle; `visit(m, z)` sees `Z(t_m)` for every grid point.
fn simulate_particle<F: FnMut(usize, f64)>(
    b: &RateFunction,
    forcing: &[f64],
    h: f64,
    z0: f64,
    rng: &mut RngStream,
    jumps: Option<&mut Vec<f64>>,
    mut visit: F,
) {
    let decay = (-h).exp();
    let mut z = z0;
    let mut budget = rng.unit_exponential();
    let mut jumps = jumps;
    visit(0, z);
    for (m, a) in forcing.iter().enumerate() {
        let mut s0 = 0.0;
        loop {
            let rest = h - s0;
            let flow = CellFlow { b, a: *a, z };
            let dh = flow.hazard(rest);
            if dh < budget {
                budget -= dh;
                z = if s0 == 0.0 { a + (z - a) * decay } else { flow.point(rest) };
                break;
            }
            let s = flow.invert(budget, rest);
            s0 += s;
            if let Some(j) = jumps.as_deref_mut() {
                j.push(m as f64 * h + s0);
            }
            z = 0.0;
            budget = rng.unit_exponential();
            if s0 >= h {
                break;
            }
        }
        visit(m + 1, z.max(0.0));
    }
}

fn forcing_from(u: &MeanRateTrajectory, mean_weight: f64, cutoff: f64) -> Vec<f64> {
    u.values[..u.values.len() - 1]
        .iter()
        .map(|v| mean_weight * v.min(cutoff))
        .collect()
}

/// One trajectory driven by `E(V) min(u_prev, C)`, piecewise constant on the
/// grid cells (left endpoint values).
pub fn frozen_input_trajectory(
    b: &RateFunction,
    mean_weight: f64,
    u_prev: &MeanRateTrajectory,
    z0: f64,
    cutoff: f64,
    rng: &mut RngStream,
) -> Result<FrozenPath> {
    if !(cutoff > 0.0) {
        return Err(Error::Config(format!("cutoff must be > 0, got {cutoff}")));
    }
    if !(z0 >= 0.0) {
        return Err(Error::Domain(format!("initial potential must be >= 0, got {z0}")));
    }
    let forcing = forcing_from(u_prev, mean_weight, cutoff);
    let mut path = FrozenPath {
        jump_times: Vec::new(),
        potentials: vec![0.0; u_prev.values.len()],
    };
    let mut jumps = Vec::new();
    simulate_particle(b, &forcing, u_prev.h, z0, rng, Some(&mut jumps), |m, z| path.potentials[m] = z);
    path.jump_times = jumps;
    Ok(path)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PicardConfig {
    pub h: f64,
    pub horizon: f64,
    pub particles: usize,
    /// Defaults to `10 (max u_0 + b(0))`.
    pub cutoff: Option<f64>,
    pub tol: f64,
    pub max_iter: usize,
    pub seed: u64,
}

impl Default for PicardConfig {
    fn default() -> Self {
        Self {
            h: 0.01,
            horizon: 100.0,
            particles: 5000,
            cutoff: None,
            tol: 1e-3,
            max_iter: 30,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PicardReport {
    /// `||u_n - u_{n-1}||_inf` for `n = 1, 2, ...`
    pub gaps: Vec<f64>,
    pub converged: bool,
    pub trajectory: MeanRateTrajectory,
    pub particles: usize,
    pub cutoff: f64,
    /// `max_m u_n(t_m)` of the final iterate.
    pub max_rate: f64,
}

fn particle_stream(root: &RngStream, p: usize) -> RngStream {
    root.split(STREAM_PARTICLES).split(p as u64)
}

/// Iterate `u_{n} = E b(Z_n)` from `u_0` given by pure decay of the
/// initial draws, until the sup-norm gap falls to `tol` or `max_iter`.
pub fn picard_iterate(
    b: &RateFunction,
    mean_weight: f64,
    init: &InitialCondition,
    cfg: &PicardConfig,
) -> Result<PicardReport> {
    b.validate()?;
    if !(cfg.h > 0.0 && cfg.h <= 0.05) {
        return Err(Error::Config(format!("grid step must satisfy 0 < h <= 0.05, got {}", cfg.h)));
    }
    if cfg.particles < 1000 {
        return Err(Error::Config(format!("need at least 1000 particles, got {}", cfg.particles)));
    }
    if !(cfg.horizon > 0.0 && cfg.horizon.is_finite()) || cfg.max_iter == 0 || !(cfg.tol >= 0.0) {
        return Err(Error::Config("horizon and max_iter must be positive, tol non-negative".into()));
    }
    if !(mean_weight >= 0.0) {
        return Err(Error::Config(format!("mean weight must be >= 0, got {mean_weight}")));
    }
    if let InitialCondition::Explicit { .. } = init {
        return Err(Error::Config("the mean-field solver needs a distributional initial condition".into()));
    }
    init.validate(1)?;
    let steps = (cfg.horizon / cfg.h - 1e-9).ceil() as usize;
    let root = RngStream::new(cfg.seed);
    let z0: Vec<f64> = (0..cfg.particles)
        .map(|p| init.sample_one(0, &mut particle_stream(&root, p)))
        .collect();
    // u_0: pure decay of the initial draws
    let mut u = MeanRateTrajectory::constant(cfg.h, steps, 0.0);
    for (m, v) in u.values.iter_mut().enumerate() {
        let decay = (-(m as f64) * cfg.h).exp();
        *v = z0.iter().map(|x| b.eval(x * decay)).sum::<f64>() / cfg.particles as f64;
    }
    let cutoff = match cfg.cutoff {
        Some(c) if c > 0.0 => c,
        Some(c) => return Err(Error::Config(format!("cutoff must be > 0, got {c}"))),
        None => {
            let c = 10.0 * (u.values.iter().cloned().fold(0.0, f64::max) + b.at_zero());
            if c > 0.0 {
                c
            } else {
                1.0
            }
        }
    };
    let mut gaps = Vec::new();
    let mut converged = false;
    for _ in 0..cfg.max_iter {
        let forcing = forcing_from(&u, mean_weight, cutoff);
        let chunks: Vec<Vec<f64>> = (0..cfg.particles.div_ceil(CHUNK))
            .into_par_iter()
            .map(|c| {
                let mut acc = vec![0.0; steps + 1];
                for p in c * CHUNK..((c + 1) * CHUNK).min(cfg.particles) {
                    let mut rng = particle_stream(&root, p);
                    // replay the initial draw so budgets line up across iterations
                    let x0 = init.sample_one(0, &mut rng);
                    simulate_particle(b, &forcing, cfg.h, x0, &mut rng, None, |m, z| acc[m] += b.eval(z));
                }
                acc
            })
            .collect();
        let mut next = vec![0.0; steps + 1];
        for acc in &chunks {
            for (n, a) in next.iter_mut().zip(acc) {
                *n += a;
            }
        }
        for v in next.iter_mut() {
            *v /= cfg.particles as f64;
        }
        let next = MeanRateTrajectory { h: cfg.h, values: next };
        let gap = next.sup_distance(&u);
        gaps.push(gap);
        u = next;
        if gap <= cfg.tol {
            converged = true;
            break;
        }
    }
    let max_rate = u.values.iter().cloned().fold(0.0, f64::max);
    Ok(PicardReport {
        gaps,
        converged,
        trajectory: u,
        particles: cfg.particles,
        cutoff,
        max_rate,
    })
}

/// `max |u(t) - <Lambda_N(t), b>|` over the particle run's record times that
/// fall inside the Picard grid.
pub fn compare_with_particles(picard: &MeanRateTrajectory, particles: &DiscreteRunOutput) -> f64 {
    let end = picard.horizon() * (1.0 + 1e-12);
    particles
        .times
        .iter()
        .zip(&particles.mean_rate)
        .filter(|(t, _)| **t <= end)
        .map(|(t, r)| (picard.at(*t) - r).abs())
        .fold(0.0, f64::max)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::stats::{ks_critical_01, ks_statistic};

    fn small(h: f64, horizon: f64) -> PicardConfig {
        PicardConfig {
            h,
            horizon,
            particles: 1000,
            ..PicardConfig::default()
        }
    }

    #[test]
    fn silent_input_gives_pure_decay() {
        let u = MeanRateTrajectory::constant(0.01, 500, 0.0);
        let b = RateFunction::power(1.0, 2.0, 0.0);
        // budget far above the total hazard int_0^inf e^{-2t} dt = 1/2
        let mut found = false;
        for seed in 0..20 {
            let mut rng = RngStream::new(seed);
            let budget = rng.clone().unit_exponential();
            let path = frozen_input_trajectory(&b, 1.0, &u, 1.0, 1.0, &mut rng).unwrap();
            if budget > 0.5 {
                found = true;
                assert!(path.jump_times.is_empty());
                for (m, z) in path.potentials.iter().enumerate() {
                    assert!((z - (-(m as f64) * 0.01).exp()).abs() < 1e-12);
                }
            }
        }
        assert!(found);
    }

    #[test]
    fn relaxes_to_forcing_level() {
        let u = MeanRateTrajectory::constant(0.01, 2000, 0.3);
        let path = frozen_input_trajectory(&RateFunction::constant(0.0), 2.0, &u, 0.0, 5.0, &mut RngStream::new(1)).unwrap();
        assert!((path.potentials.last().unwrap() - 0.6).abs() < 1e-8);
    }

    #[test]
    fn constant_rate_jumps_are_poisson() {
        let u = MeanRateTrajectory::constant(0.01, 10_000, 0.5);
        let mut gaps = Vec::new();
        for p in 0..40 {
            let mut rng = RngStream::new(100 + p);
            let path = frozen_input_trajectory(&RateFunction::constant(1.5), 1.0, &u, 0.0, 5.0, &mut rng).unwrap();
            let mut prev = 0.0;
            for t in path.jump_times {
                gaps.push(t - prev);
                prev = t;
            }
        }
        let d = ks_statistic(&gaps, |x| 1.0 - (-1.5 * x).exp());
        assert!(d < ks_critical_01(gaps.len()), "D={d} n={}", gaps.len());
    }

    #[test]
    fn affine_cell_inversion_round_trips() {
        let b = RateFunction::affine(1.3, 0.2);
        let flow = CellFlow { b: &b, a: 0.7, z: 2.0 };
        for target in [1e-6, 1e-3, 0.01] {
            let s = flow.invert(target, 0.01);
            assert!((flow.hazard(s) - target).abs() < 1e-12);
        }
        let p = RateFunction::power(1.3, 2.5, 0.1);
        let flow = CellFlow { b: &p, a: 0.7, z: 2.0 };
        let exact = crate::quad::adaptive(|s| flow.rate(s), 0.0, 0.01, 0.0, 1e-14).value;
        assert!((flow.hazard(0.01) - exact).abs() < 1e-13);
    }

    #[test]
    fn trivial_rates_converge_after_one_iteration() {
        let init = InitialCondition::UniformInterval { lo: 0.0, hi: 1.0 };
        let r = picard_iterate(&RateFunction::constant(0.0), 2.0, &init, &small(0.01, 5.0)).unwrap();
        assert!(r.converged && r.gaps.len() == 1 && r.max_rate == 0.0);
        let r = picard_iterate(&RateFunction::constant(0.8), 2.0, &init, &small(0.01, 5.0)).unwrap();
        assert!(r.converged && r.gaps.len() == 1);
        assert!(r.trajectory.values.iter().all(|v| (*v - 0.8).abs() < 1e-15));
    }

    #[test]
    fn rejects_bad_configs() {
        let init = InitialCondition::Dirac { x: 1.0 };
        let b = RateFunction::linear(1.0);
        assert!(picard_iterate(&b, 1.0, &init, &small(0.1, 5.0)).is_err());
        let few = PicardConfig {
            particles: 10,
            ..small(0.01, 5.0)
        };
        assert!(picard_iterate(&b, 1.0, &init, &few).is_err());
    }

    #[test]
    fn interpolation_and_identity_distance() {
        let u = MeanRateTrajectory {
            h: 0.5,
            values: vec![0.0, 1.0, 3.0],
        };
        assert_eq!(u.at(0.25), 0.5);
        assert_eq!(u.at(0.75), 2.0);
        assert_eq!(u.at(9.0), 3.0);
        assert_eq!(u.sup_distance(&u), 0.0);
    }
}
