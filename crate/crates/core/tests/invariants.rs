use proptest::prelude::*;
use spikefield_core::approx_sim::{run_discrete, HISTOGRAM_BINS};
use spikefield_core::exact_sim::{flow_hazard, invert_flow_hazard, run_exact, ExactSimulator, Inversion, StepOutcome};
use spikefield_core::mckean_vlasov::{picard_iterate, PicardConfig};
use spikefield_core::model::{remaining_hazard_to_zero, sample_weight};
use spikefield_core::quad;
use spikefield_core::stationary::{fixed_point_residual, invariant_density, power_rate_for_rho, psi_residual};
use spikefield_core::{ExtendedReal, InitialCondition, NetworkConfig, RateFunction, RngStream, Scaling, WeightDistribution};

fn rate() -> impl Strategy<Value = RateFunction> {
    prop_oneof![
        (0.0..5.0f64).prop_map(RateFunction::constant),
        (0.0..5.0f64, 0.0..2.0f64).prop_map(|(l, d)| RateFunction::affine(l, d)),
        (0.05..5.0f64, 0.2..4.0f64, 0.0..2.0f64).prop_map(|(c, a, g)| RateFunction::power(c, a, g)),
    ]
}

fn weights() -> impl Strategy<Value = WeightDistribution> {
    prop_oneof![
        (0.0..3.0f64).prop_map(|w| WeightDistribution::Constant { w }),
        (0.0..2.0f64, 0.0..2.0f64).prop_map(|(lo, d)| WeightDistribution::Uniform { lo, hi: lo + d }),
    ]
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn rates_are_monotone_and_nonnegative(b in rate()) {
        let mut prev = b.eval(0.0);
        prop_assert!(prev >= 0.0);
        for k in 1..=1000 {
            let v = b.eval(k as f64 * 0.01);
            prop_assert!(v >= prev);
            prev = v;
        }
    }

    #[test]
    fn hazard_to_zero_matches_quadrature(b in rate(), x in 0.01..5.0f64) {
        let closed = remaining_hazard_to_zero(&b, x);
        if b.at_zero() > 0.0 {
            prop_assert_eq!(closed, ExtendedReal::Infinite);
        } else {
            let q = quad::adaptive(|s| b.eval(s) / s, 0.0, x, 1e-300, 1e-12).value;
            let c = closed.finite().unwrap();
            prop_assert!((c - q).abs() <= 1e-8 * c.abs().max(1e-300), "{} vs {}", c, q);
        }
    }

    #[test]
    fn hazard_inversion_round_trips(b in rate(), x0 in 0.0..5.0f64, frac in 0.001..0.999f64) {
        let total = flow_hazard(&b, x0, 1e6);
        let target = if total.is_finite() && total < 1e5 { frac * total } else { frac * 10.0 };
        prop_assume!(target > 0.0);
        match invert_flow_hazard(&b, x0, target).unwrap() {
            Inversion::At(s) => prop_assert!((flow_hazard(&b, x0, s) - target).abs() < 1e-10, "{}", s),
            Inversion::NeverReached => prop_assert!(false, "target below the total hazard"),
        }
    }

    #[test]
    fn weight_samples_respect_the_support(w in weights(), seed in any::<u64>()) {
        let mut rng = RngStream::new(seed);
        for _ in 0..1000 {
            let v = sample_weight(&w, &mut rng);
            prop_assert!(v >= 0.0 && v <= w.support_bound());
        }
    }

    #[test]
    fn streams_are_reproducible(seed in any::<u64>(), child in any::<u64>()) {
        let mut a = RngStream::new(seed).split(child);
        let mut b = RngStream::new(seed).split(child);
        for _ in 0..10_000 {
            prop_assert_eq!(a.uniform().to_bits(), b.uniform().to_bits());
        }
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn psi_and_c_residuals_agree(a in prop_oneof![Just(1.5f64), Just(2.0), Just(3.0)], beta in 0.05..20.0f64, rho in 0.5..50.0f64, ev in 0.3..3.0f64) {
        let psi = psi_residual(a, rho, beta);
        let c = fixed_point_residual(&power_rate_for_rho(a, ev, rho), ev, beta).unwrap();
        prop_assert!((psi - c).abs() < 1e-8, "{} vs {}", psi, c);
    }

    #[test]
    fn density_tables_integrate_to_one(lambda in 0.1..3.0f64, delta in 0.0..1.0f64, ev in 0.2..3.0f64, beta in 0.01..5.0f64) {
        let b = RateFunction::affine(lambda, delta);
        prop_assume!(b.eval(beta * ev) > 0.0);
        let t = invariant_density(&b, ev, beta, 4001).unwrap();
        prop_assert!((t.integral() - 1.0).abs() < 1e-6, "{}", t.integral());
        prop_assert!(t.density.iter().all(|f| *f >= 0.0));
        prop_assert!((t.cdf.last().unwrap() - 1.0).abs() < 1e-9);
    }

    #[test]
    fn exact_runs_decay_between_events_and_reset_spikers(b in rate(), w in weights(), n in 1usize..8, seed in any::<u64>()) {
        let cfg = NetworkConfig::new(n, b, w, Scaling::Raw, seed);
        let init = InitialCondition::UniformInterval { lo: 0.0, hi: 2.0 };
        let mut sim = ExactSimulator::new(&cfg, &init, &RngStream::new(seed)).unwrap();
        for _ in 0..200 {
            let before = sim.state().clone();
            match sim.step() {
                StepOutcome::Spike(ev) => {
                    prop_assert!(ev.time > before.t);
                    let after = sim.state();
                    prop_assert_eq!(after.x[ev.neuron], 0.0);
                    for i in 0..n {
                        prop_assert!(after.x[i] >= 0.0);
                        prop_assert!(after.budget[i] > 0.0);
                        if i != ev.neuron {
                            // decayed value plus a kick within the support
                            let decayed = before.potential_at(i, ev.time);
                            prop_assert!(after.x[i] >= decayed - 1e-12);
                            prop_assert!(after.x[i] <= decayed + w.support_bound() + 1e-12);
                        }
                    }
                }
                StepOutcome::NoFurtherEvents => break,
            }
        }
    }

    #[test]
    fn exact_logs_are_ordered(b in rate(), n in 1usize..6, seed in any::<u64>()) {
        let cfg = NetworkConfig::new(n, b, WeightDistribution::Uniform { lo: 0.0, hi: 0.5 }, Scaling::Raw, seed);
        let log = run_exact(&cfg, &InitialCondition::Dirac { x: 1.0 }, 5.0, &[1.0, 2.5]).unwrap();
        prop_assert!(log.events.windows(2).all(|e| e[1].time > e[0].time));
        prop_assert!(log.events.iter().all(|e| e.neuron < n && e.time <= 5.0));
        prop_assert_eq!(log.snapshots.len(), 2);
    }

    #[test]
    fn discrete_runs_stay_nonnegative(b in rate(), w in weights(), n in 1usize..60, seed in any::<u64>()) {
        let cfg = NetworkConfig::new(n, b, w, Scaling::MeanField, seed);
        let out = run_discrete(&cfg, &InitialCondition::UniformInterval { lo: 0.0, hi: 1.0 }, 0.01, 2.0).unwrap();
        prop_assert_eq!(out.times.len(), 200);
        prop_assert!(out.mean_potential.iter().all(|m| *m >= 0.0));
        prop_assert!(out.mean_rate.iter().all(|m| *m >= 0.0));
        prop_assert!(out.final_potentials.iter().all(|x| *x >= 0.0));
        prop_assert_eq!(out.histogram.total(), n as u64);
        prop_assert_eq!(out.histogram.counts.len(), HISTOGRAM_BINS);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(6))]

    #[test]
    fn picard_rates_are_nonnegative(slope in 0.0..2.0f64, ev in 0.0..3.0f64, seed in any::<u64>()) {
        let cfg = PicardConfig { h: 0.02, horizon: 3.0, particles: 1000, max_iter: 4, seed, ..PicardConfig::default() };
        let r = picard_iterate(&RateFunction::linear(slope), ev, &InitialCondition::UniformInterval { lo: 0.0, hi: 1.0 }, &cfg).unwrap();
        prop_assert!(r.trajectory.values.iter().all(|u| *u >= 0.0));
        prop_assert!(r.gaps.iter().all(|g| *g >= 0.0));
        prop_assert!(!r.converged || *r.gaps.last().unwrap() <= cfg.tol);
        prop_assert!(r.max_rate < r.cutoff);
    }
}
