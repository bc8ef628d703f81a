use rayon::prelude::*;
use spikefield_core::approx_sim::{averaged_activity, firing_rate_bound_check, run_discrete};
use spikefield_core::constant_rate::{backward_coupling_sample, limit_cdf};
use spikefield_core::exact_sim::{run_exact, run_thinning};
use spikefield_core::experiments::{constant_rate_check, top_stationary_rate};
use spikefield_core::stats::{ks_statistic, ks_two_sample, ks_two_sample_critical_01, mean_estimate};
use spikefield_core::{InitialCondition, NetworkConfig, RateFunction, RngStream, Scaling, WeightDistribution};

fn small_affine(seed: u64) -> NetworkConfig {
    NetworkConfig::new(
        5,
        RateFunction::affine(1.0, 0.2),
        WeightDistribution::Uniform { lo: 0.0, hi: 0.5 },
        Scaling::Raw,
        seed,
    )
}

#[test]
fn inversion_and_thinning_agree_in_law() {
    let init = InitialCondition::UniformInterval { lo: 0.0, hi: 1.0 };
    let runs = 10_000u64;
    let exact: Vec<(f64, f64)> = (0..runs)
        .into_par_iter()
        .map(|s| {
            let log = run_exact(&small_affine(s), &init, 20.0, &[]).unwrap();
            (log.first_spike_time().unwrap(), log.events.len() as f64)
        })
        .collect();
    let thin: Vec<(f64, f64)> = (0..runs)
        .into_par_iter()
        .map(|s| {
            let log = run_thinning(&small_affine(0), &init, 20.0, &RngStream::new(1 << 40 | s)).unwrap();
            (log.first_spike_time().unwrap(), log.events.len() as f64)
        })
        .collect();
    let crit = ks_two_sample_critical_01(runs as usize, runs as usize);
    let first = ks_two_sample(
        &exact.iter().map(|p| p.0).collect::<Vec<_>>(),
        &thin.iter().map(|p| p.0).collect::<Vec<_>>(),
    );
    let counts = ks_two_sample(
        &exact.iter().map(|p| p.1).collect::<Vec<_>>(),
        &thin.iter().map(|p| p.1).collect::<Vec<_>>(),
    );
    assert!(first < crit, "first spike KS {first} vs {crit}");
    assert!(counts < crit, "spike count KS {counts} vs {crit}");
}

#[test]
fn discrete_scheme_matches_exact_terminal_rate() {
    let cfg = |seed| {
        NetworkConfig::new(
            50,
            RateFunction::affine(1.0, 0.2),
            WeightDistribution::Uniform { lo: 0.0, hi: 0.2 },
            Scaling::Raw,
            seed,
        )
    };
    let init = InitialCondition::UniformInterval { lo: 0.0, hi: 1.0 };
    let horizon = 5.0;
    let exact: Vec<f64> = (0..200u64)
        .into_par_iter()
        .map(|s| {
            let c = cfg(s);
            let log = run_exact(&c, &init, horizon, &[horizon]).unwrap();
            let x = &log.snapshots[0].1;
            x.iter().map(|v| c.rate.eval(*v)).sum::<f64>() / x.len() as f64
        })
        .collect();
    let discrete: Vec<f64> = (0..200u64)
        .into_par_iter()
        .map(|s| *run_discrete(&cfg(10_000 + s), &init, 1e-3, horizon).unwrap().mean_rate.last().unwrap())
        .collect();
    let (a, b) = (mean_estimate(&exact), mean_estimate(&discrete));
    let z = (a.mean - b.mean).abs() / (a.std_error.powi(2) + b.std_error.powi(2)).sqrt();
    assert!(z < 3.0, "{a:?} vs {b:?}");
}

#[test]
fn discrete_bias_is_first_order_in_the_step() {
    // expected count is (T / dt)(1 - e^{-dt}) = T (1 - dt/2 + ...)
    let cfg = |seed| NetworkConfig::new(1, RateFunction::constant(1.0), WeightDistribution::Constant { w: 0.0 }, Scaling::Raw, seed);
    let init = InitialCondition::Dirac { x: 0.0 };
    let horizon = 1000.0;
    let error = |dt: f64, offset: u64| {
        let counts: Vec<f64> = (0..1000u64)
            .into_par_iter()
            .map(|s| run_discrete(&cfg(offset + s), &init, dt, horizon).unwrap().total_spikes() as f64)
            .collect();
        horizon - mean_estimate(&counts).mean
    };
    let coarse = error(0.1, 0);
    let fine = error(0.05, 5000);
    let ratio = fine / coarse;
    assert!((ratio - 0.5).abs() < 0.1, "{coarse} {fine} {ratio}");
}

#[test]
fn supercritical_particle_activity_matches_the_stationary_rate() {
    let b = RateFunction::linear(1.0);
    let cfg = NetworkConfig::new(2000, b, WeightDistribution::Constant { w: 2.0 }, Scaling::MeanField, 11);
    let out = run_discrete(&cfg, &InitialCondition::UniformInterval { lo: 0.0, hi: 1.0 }, 0.01, 100.0).unwrap();
    let hat = averaged_activity(&out, (90.0, 100.0)).unwrap();
    let star = top_stationary_rate(&b, 2.0).unwrap();
    assert!(hat > 0.0);
    assert!((hat - star).abs() < 0.05 * star, "{hat} vs {star}");
}

#[test]
fn subcritical_activity_stays_below_its_start() {
    let init = InitialCondition::UniformInterval { lo: 0.0, hi: 1.0 };
    for seed in 0..20 {
        let cfg = NetworkConfig::new(500, RateFunction::linear(1.0), WeightDistribution::Constant { w: 0.5 }, Scaling::MeanField, seed);
        let out = run_discrete(&cfg, &init, 0.01, 20.0).unwrap();
        assert!(firing_rate_bound_check(&out, out.initial_mean_rate + 1.0).pass);
    }
}

#[test]
fn backward_coupling_matches_forward_equilibrium() {
    let w = WeightDistribution::Constant { w: 1.0 };
    let mut rng = RngStream::new(3);
    let backward: Vec<f64> = (0..100_000)
        .map(|_| backward_coupling_sample(2, 1.0, &w, Scaling::Raw, &mut rng).unwrap().x[0])
        .collect();
    let forward: Vec<f64> = (0..10_000u64)
        .into_par_iter()
        .map(|s| {
            let cfg = NetworkConfig::new(2, RateFunction::constant(1.0), w, Scaling::Raw, s);
            run_exact(&cfg, &InitialCondition::Dirac { x: 0.0 }, 20.0, &[20.0]).unwrap().snapshots[0].1[0]
        })
        .collect();
    let d = ks_two_sample(&backward, &forward);
    assert!(d < ks_two_sample_critical_01(backward.len(), forward.len()), "{d}");
}

#[test]
fn mean_and_atom_formulas_across_the_matrix() {
    let rows = constant_rate_check(
        &[2, 5, 20],
        &[0.5, 1.0, 2.0],
        &WeightDistribution::Uniform { lo: 0.0, hi: 1.0 },
        &[],
        20_000,
        2024,
    )
    .unwrap();
    assert_eq!(rows.len(), 9);
    for r in &rows {
        assert!(r.mean.z < 3.0 && r.atom.z < 3.0, "{r:?}");
    }
}

#[test]
fn large_mean_field_network_approaches_the_limit_density() {
    let w = WeightDistribution::Constant { w: 1.0 };
    let mut rng = RngStream::new(8);
    let mut pooled = Vec::with_capacity(10_000);
    for _ in 0..20 {
        pooled.extend(backward_coupling_sample(500, 2.0, &w, Scaling::MeanField, &mut rng).unwrap().x);
    }
    let d = ks_statistic(&pooled, |u| limit_cdf(2.0, 1.0, u));
    assert!(d < 0.02, "{d}");
}
