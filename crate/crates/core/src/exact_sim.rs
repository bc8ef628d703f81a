//! Event-driven simulation of the finite network without discretization error.
//!
//! Each neuron carries an Exp(1) hazard budget. Between events its potential
//! decays as `x e^{-t}`, so the hazard it accrues over a duration `s` has a
//! closed form, and the time at which the budget is exhausted is obtained by
//! inverting that form. The next spike is the earliest such time over the
//! network. Budgets of neurons that do not spike are decremented by the
//! hazard they accrued, which is exact by memorylessness.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{remaining_hazard_to_zero, sample_weight, ExtendedReal, InitialCondition, NetworkConfig, RateFunction};
use crate::rng::RngStream;

/// Substream tags under the run's root stream.
pub(crate) const STREAM_INIT: u64 = 0x1_0000;
pub(crate) const STREAM_KICKS: u64 = 0x2_0000;
pub(crate) const STREAM_NEURONS: u64 = 0x3_0000;
pub(crate) const STREAM_THINNING: u64 = 0x4_0000;

const INVERSION_TOL: f64 = 1e-12;
const INVERSION_MAX_ITER: usize = 60;

/// Hazard accrued along the decaying flow written as `P (1 - e^{-k s}) + c s`.
#[derive(Debug, Clone, Copy)]
struct FlowHazard {
    p: f64,
    k: f64,
    c: f64,
}

impl FlowHazard {
    fn new(b: &RateFunction, x0: f64) -> Self {
        match *b {
            RateFunction::Constant { rate0 } => FlowHazard { p: 0.0, k: 1.0, c: rate0 },
            RateFunction::Affine { slope, intercept } => FlowHazard {
                p: slope * x0,
                k: 1.0,
                c: intercept,
            },
            RateFunction::Power {
                coef,
                exponent,
                intercept,
            } => FlowHazard {
                p: if x0 > 0.0 { coef * x0.powf(exponent) / exponent } else { 0.0 },
                k: exponent,
                c: intercept,
            },
        }
    }

    #[inline]
    fn at(&self, s: f64) -> f64 {
        if s.is_infinite() {
            return if self.c > 0.0 { f64::INFINITY } else { self.p };
        }
        self.p * -(-self.k * s).exp_m1() + self.c * s
    }

    #[inline]
    fn rate(&self, s: f64) -> f64 {
        self.p * self.k * (-self.k * s).exp() + self.c
    }

    fn invert(&self, target: f64) -> Inversion {
        if self.c == 0.0 {
            if target >= self.p {
                return Inversion::NeverReached;
            }
            return Inversion::At(-(-target / self.p).ln_1p() / self.k);
        }
        if self.p == 0.0 {
            return Inversion::At(target / self.c);
        }
        // H is increasing and concave: Newton from below converges
        // monotonically; the bracket guards against round-off.
        let mut lo = target / (self.p * self.k + self.c);
        let mut hi = target / self.c;
        let mut s = lo;
        for _ in 0..INVERSION_MAX_ITER {
            let r = self.at(s) - target;
            if r.abs() <= INVERSION_TOL {
                return Inversion::At(s);
            }
            if r < 0.0 {
                lo = s;
            } else {
                hi = s;
            }
            let next = s - r / self.rate(s);
            s = if next > lo && next < hi { next } else { 0.5 * (lo + hi) };
        }
        Inversion::At(s)
    }
}

/// `int_0^s b(x0 e^{-u}) du`
pub fn flow_hazard(b: &RateFunction, x0: f64, s: f64) -> f64 {
    if s <= 0.0 {
        return 0.0;
    }
    FlowHazard::new(b, x0).at(s)
}

/// Duration after which the decaying flow from `x0` has accrued `target`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Inversion {
    At(f64),
    NeverReached,
}

impl Inversion {
    pub fn duration(self) -> Option<f64> {
        match self {
            Inversion::At(s) => Some(s),
            Inversion::NeverReached => None,
        }
    }
}

pub fn invert_flow_hazard(b: &RateFunction, x0: f64, target: f64) -> Result<Inversion> {
    if !(target > 0.0) {
        return Err(Error::Domain(format!("hazard target must be > 0, got {target}")));
    }
    Ok(FlowHazard::new(b, x0).invert(target))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SpikeEvent {
    pub time: f64,
    pub neuron: usize,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum StepOutcome {
    Spike(SpikeEvent),
    NoFurtherEvents,
}

#[derive(Debug, Clone, PartialEq)]
pub struct NetworkState {
    pub t: f64,
    /// Potentials at time `t`.
    pub x: Vec<f64>,
    /// Residual Exp(1) hazard credits.
    pub budget: Vec<f64>,
    pub spike_count: Vec<u64>,
}

impl NetworkState {
    /// Potential of neuron `i` at `time >= t`, assuming no event in between.
    pub fn potential_at(&self, i: usize, time: f64) -> f64 {
        self.x[i] * (-(time - self.t)).exp()
    }

    pub fn potentials_at(&self, time: f64) -> Vec<f64> {
        let f = (-(time - self.t)).exp();
        self.x.iter().map(|x| x * f).collect()
    }

    pub fn total_spikes(&self) -> u64 {
        self.spike_count.iter().sum()
    }
}

/// Ordered spike record plus optional potential snapshots.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct EventLog {
    pub events: Vec<SpikeEvent>,
    pub snapshots: Vec<(f64, Vec<f64>)>,
}

impl EventLog {
    pub fn spike_times(&self) -> impl Iterator<Item = f64> + '_ {
        self.events.iter().map(|e| e.time)
    }

    pub fn first_spike_time(&self) -> Option<f64> {
        self.events.first().map(|e| e.time)
    }
}

/// Exact event-driven simulator for one network realization.
pub struct ExactSimulator {
    config: NetworkConfig,
    state: NetworkState,
    neuron_rngs: Vec<RngStream>,
    kick_rng: RngStream,
    kick_scale: f64,
    candidates: Vec<Inversion>,
}

impl ExactSimulator {
    /// Initial potentials are drawn from the `init` substream of `root`.
    pub fn new(config: &NetworkConfig, init: &InitialCondition, root: &RngStream) -> Result<Self> {
        config.validate()?;
        init.validate(config.n)?;
        let mut init_rng = root.split(STREAM_INIT);
        let x = init.sample(config.n, &mut init_rng);
        Ok(Self::from_potentials(config, x, root))
    }

    pub fn from_potentials(config: &NetworkConfig, x: Vec<f64>, root: &RngStream) -> Self {
        let n = x.len();
        let neurons = root.split(STREAM_NEURONS);
        let mut neuron_rngs: Vec<RngStream> = (0..n as u64).map(|i| neurons.split(i)).collect();
        let budget = neuron_rngs.iter_mut().map(|r| r.unit_exponential()).collect();
        Self {
            config: config.clone(),
            state: NetworkState {
                t: 0.0,
                x,
                budget,
                spike_count: vec![0; n],
            },
            neuron_rngs,
            kick_rng: root.split(STREAM_KICKS),
            kick_scale: config.kick_scale(),
            candidates: vec![Inversion::NeverReached; n],
        }
    }

    pub fn state(&self) -> &NetworkState {
        &self.state
    }

    /// Time until the next spike and its neuron, without applying it.
    pub fn next_event(&mut self) -> Option<(f64, usize)> {
        let b = self.config.rate;
        let mut best: Option<(f64, usize)> = None;
        for i in 0..self.state.x.len() {
            let inv = FlowHazard::new(&b, self.state.x[i]).invert(self.state.budget[i]);
            self.candidates[i] = inv;
            if let Inversion::At(s) = inv {
                if best.is_none_or(|(bs, _)| s < bs) {
                    best = Some((s, i));
                }
            }
        }
        best
    }

    /// Apply one jump of the process.
    pub fn step(&mut self) -> StepOutcome {
        match self.next_event() {
            None => StepOutcome::NoFurtherEvents,
            Some((dt, j)) => {
                self.apply_spike(dt, j);
                StepOutcome::Spike(SpikeEvent {
                    time: self.state.t,
                    neuron: j,
                })
            }
        }
    }

    fn apply_spike(&mut self, dt: f64, j: usize) {
        let b = self.config.rate;
        let decay = (-dt).exp();
        let st = &mut self.state;
        for i in 0..st.x.len() {
            if i == j {
                continue;
            }
            let accrued = FlowHazard::new(&b, st.x[i]).at(dt);
            // exhausted budgets only arise from round-off on near-ties
            st.budget[i] = (st.budget[i] - accrued).max(f64::MIN_POSITIVE);
            let kick = sample_weight(&self.config.weights, &mut self.kick_rng) * self.kick_scale;
            st.x[i] = st.x[i] * decay + kick;
        }
        st.x[j] = 0.0;
        st.budget[j] = self.neuron_rngs[j].unit_exponential();
        st.spike_count[j] += 1;
        st.t += dt;
    }

    /// True when no neuron can ever spike again from the current state.
    pub fn is_extinct(&self) -> bool {
        let b = self.config.rate;
        self.state
            .x
            .iter()
            .zip(&self.state.budget)
            .all(|(x, budget)| match remaining_hazard_to_zero(&b, *x) {
                ExtendedReal::Finite(h) => *budget > h,
                ExtendedReal::Infinite => false,
            })
    }

    /// Per-neuron flag: the neuron's budget exceeds the hazard left on its flow.
    pub fn never_fire_flags(&self) -> Vec<bool> {
        let b = self.config.rate;
        self.state
            .x
            .iter()
            .zip(&self.state.budget)
            .map(|(x, budget)| match remaining_hazard_to_zero(&b, *x) {
                ExtendedReal::Finite(h) => *budget > h,
                ExtendedReal::Infinite => false,
            })
            .collect()
    }
}

/// Simulate up to `horizon`, recording every spike and snapshots of the
/// potentials at the requested (sorted) `sample_times`.
pub fn run_exact(
    config: &NetworkConfig,
    init: &InitialCondition,
    horizon: f64,
    sample_times: &[f64],
) -> Result<EventLog> {
    if !(horizon > 0.0) {
        return Err(Error::Config(format!("horizon must be > 0, got {horizon}")));
    }
    let root = RngStream::new(config.seed);
    let mut sim = ExactSimulator::new(config, init, &root)?;
    let mut samples = sample_times.iter().copied().filter(|t| *t <= horizon).peekable();
    let mut log = EventLog::default();
    loop {
        let next = sim.next_event();
        let t_next = next.map_or(f64::INFINITY, |(dt, _)| sim.state.t + dt);
        while let Some(ts) = samples.peek().copied() {
            if ts < t_next || t_next > horizon {
                log.snapshots.push((ts, sim.state.potentials_at(ts.max(sim.state.t))));
                samples.next();
            } else {
                break;
            }
        }
        match next {
            Some((dt, j)) if t_next <= horizon => {
                sim.apply_spike(dt, j);
                log.events.push(SpikeEvent {
                    time: sim.state.t,
                    neuron: j,
                });
            }
            _ => break,
        }
    }
    Ok(log)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "outcome", rename_all = "snake_case")]
pub enum ExtinctionOutcome {
    Extinct { last_spike_time: f64, total_spikes: u64 },
    HorizonExceeded { horizon: f64 },
    /// `b(0) > 0`: the network never goes silent.
    NeverExtinguishes,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExtinctionReport {
    pub outcome: ExtinctionOutcome,
    pub never_fire: Vec<bool>,
}

impl ExtinctionReport {
    pub fn extinction_time(&self) -> Option<f64> {
        match self.outcome {
            ExtinctionOutcome::Extinct { last_spike_time, .. } => Some(last_spike_time),
            _ => None,
        }
    }
}

/// Run until no neuron can spike again, the horizon passes, or refuse when
/// `b(0) > 0`.
pub fn extinction_time(
    config: &NetworkConfig,
    init: &InitialCondition,
    horizon: f64,
    root: &RngStream,
) -> Result<ExtinctionReport> {
    if config.rate.at_zero() > 0.0 {
        return Ok(ExtinctionReport {
            outcome: ExtinctionOutcome::NeverExtinguishes,
            never_fire: vec![false; config.n],
        });
    }
    let mut sim = ExactSimulator::new(config, init, root)?;
    let mut last_spike = 0.0;
    loop {
        if sim.is_extinct() {
            return Ok(ExtinctionReport {
                outcome: ExtinctionOutcome::Extinct {
                    last_spike_time: last_spike,
                    total_spikes: sim.state.total_spikes(),
                },
                never_fire: sim.never_fire_flags(),
            });
        }
        match sim.next_event() {
            Some((dt, j)) if sim.state.t + dt <= horizon => {
                sim.apply_spike(dt, j);
                last_spike = sim.state.t;
            }
            Some(_) => {
                return Ok(ExtinctionReport {
                    outcome: ExtinctionOutcome::HorizonExceeded { horizon },
                    never_fire: sim.never_fire_flags(),
                })
            }
            // unreachable when the predicate is exact; kept total
            None => {
                return Ok(ExtinctionReport {
                    outcome: ExtinctionOutcome::Extinct {
                        last_spike_time: last_spike,
                        total_spikes: sim.state.total_spikes(),
                    },
                    never_fire: sim.never_fire_flags(),
                })
            }
        }
    }
}

/// Counters from a thinning run.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct ThinningStats {
    pub candidates: u64,
    pub accepted: u64,
}

/// Rejection-based simulator: candidates at the current total rate (an upper
/// bound until the next accepted spike since rates only decay), accepted with
/// probability `b(x_i(t)) / b(x_i(t_prev))`.
pub fn run_thinning(
    config: &NetworkConfig,
    init: &InitialCondition,
    horizon: f64,
    root: &RngStream,
) -> Result<EventLog> {
    run_thinning_with_stats(config, init, horizon, root).map(|(log, _)| log)
}

pub fn run_thinning_with_stats(
    config: &NetworkConfig,
    init: &InitialCondition,
    horizon: f64,
    root: &RngStream,
) -> Result<(EventLog, ThinningStats)> {
    config.validate()?;
    init.validate(config.n)?;
    if !(horizon > 0.0) {
        return Err(Error::Config(format!("horizon must be > 0, got {horizon}")));
    }
    let b = config.rate;
    let mut init_rng = root.split(STREAM_INIT);
    let mut x = init.sample(config.n, &mut init_rng);
    let mut rng = root.split(STREAM_THINNING);
    let mut kick_rng = root.split(STREAM_KICKS);
    let scale = config.kick_scale();
    let mut t = 0.0;
    let mut log = EventLog::default();
    let mut stats = ThinningStats::default();
    let mut rates: Vec<f64> = x.iter().map(|v| b.eval(*v)).collect();
    loop {
        let total: f64 = rates.iter().sum();
        if total <= 0.0 {
            break;
        }
        let dt = rng.exponential(total);
        if t + dt > horizon {
            break;
        }
        t += dt;
        stats.candidates += 1;
        // pick i with probability rates[i] / total
        let mut target = rng.uniform() * total;
        let mut i = rates.len() - 1;
        for (k, r) in rates.iter().enumerate() {
            if target < *r {
                i = k;
                break;
            }
            target -= r;
        }
        let decay = (-dt).exp();
        for v in x.iter_mut() {
            *v *= decay;
        }
        let bound = rates[i];
        let actual = b.eval(x[i]);
        let accept = rng.uniform() * bound < actual;
        if accept {
            stats.accepted += 1;
            for (k, v) in x.iter_mut().enumerate() {
                if k != i {
                    *v += sample_weight(&config.weights, &mut kick_rng) * scale;
                }
            }
            x[i] = 0.0;
            log.events.push(SpikeEvent { time: t, neuron: i });
        }
        for (r, v) in rates.iter_mut().zip(&x) {
            *r = b.eval(*v);
        }
    }
    Ok((log, stats))
}
