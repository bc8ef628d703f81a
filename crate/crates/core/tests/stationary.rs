use spikefield_core::constant_rate::{limit_cdf, limit_density};
use spikefield_core::quad::log_grid;
use spikefield_core::stationary::*;
use spikefield_core::stats::{ks_critical_01, ks_statistic, mean_estimate};
use spikefield_core::{RateFunction, RngStream};

/// `C(beta)` for `b(x) = lambda x` from the incomplete-gamma series
/// `sum_k s^k / (s (s+1) ... (s+k))`, `s = lambda beta E(V)`.
fn affine_c_series(lambda: f64, mean_weight: f64, beta: f64) -> f64 {
    let s = lambda * beta * mean_weight;
    let mut term = 1.0 / s;
    let mut total = term;
    let mut k = 1.0;
    while term > 1e-18 * total {
        term *= s / (s + k);
        total += term;
        k += 1.0;
    }
    total
}

/// `Psi(x)` for `a = 2` with the closed-form `G(s) = s - u - u^2 / 2`,
/// `u = 1 - e^{-s}`, by composite Simpson on a fine uniform grid.
fn psi_quadratic_brute(x: f64) -> f64 {
    let big_g = |s: f64| {
        let u = -(-s).exp_m1();
        if s < 1e-3 {
            // s^3/3 - s^4/4 + ... loses digits in the difference above
            s.powi(3) / 3.0 - s.powi(4) / 4.0 + 7.0 * s.powi(5) / 60.0
        } else {
            s - u - 0.5 * u * u
        }
    };
    // x G(s) > 60 beyond s_end
    let mut s_end = (180.0 / x).cbrt().max(1e-3);
    while x * big_g(s_end) < 60.0 {
        s_end *= 1.5;
    }
    let f = |s: f64| (-x * big_g(s)).exp();
    let simpson = |a: f64, b: f64| {
        let n = 20_000;
        let h = (b - a) / n as f64;
        let mut total = f(a) + f(b);
        for k in 1..n {
            total += if k % 2 == 1 { 4.0 } else { 2.0 } * f(a + k as f64 * h);
        }
        total * h / 3.0
    };
    // the shape of G changes on s ~ 1; beyond 20 it is linear to 1e-9
    let knee = s_end.min(20.0);
    let mut total = simpson(0.0, knee);
    if s_end > knee {
        total += simpson(knee, s_end);
    }
    total
}

#[test]
fn c_matches_series_oracle() {
    let b = RateFunction::linear(1.0);
    let c = c_of_beta(&b, 2.0, 0.4).unwrap();
    let oracle = affine_c_series(1.0, 2.0, 0.4);
    assert!(((c - oracle) / oracle).abs() < 1e-6, "{c} vs {oracle}");
    for (lambda, ev, beta) in [(1.0, 2.0, 1e-3), (2.5, 0.7, 3.0), (0.3, 4.0, 20.0)] {
        let c = c_of_beta(&RateFunction::linear(lambda), ev, beta).unwrap();
        let oracle = affine_c_series(lambda, ev, beta);
        assert!(((c - oracle) / oracle).abs() < 1e-8, "{lambda} {ev} {beta}: {c} vs {oracle}");
    }
}

#[test]
fn affine_golden_root() {
    const GOLDEN: f64 = 0.778_908_421_440_331;
    // bisection on the series oracle
    let (mut lo, mut hi) = (0.5, 1.0);
    for _ in 0..100 {
        let mid = 0.5 * (lo + hi);
        if mid * affine_c_series(1.0, 2.0, mid) < 1.0 {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    assert!((lo - GOLDEN).abs() < 1e-12, "{lo}");
    let roots = find_stationary(&RateFunction::linear(1.0), 2.0, &RootSearch::default()).unwrap();
    assert_eq!(roots.len(), 2);
    assert_eq!(roots[0].kind, SolutionKind::Trivial);
    assert_eq!(roots[0].stability, Stability::Unstable);
    assert_eq!(roots[1].kind, SolutionKind::NonTrivial);
    assert!((roots[1].beta - GOLDEN).abs() < 1e-6);
}

#[test]
fn subcritical_affine_residual_is_positive() {
    let b = RateFunction::linear(1.0);
    for beta in log_grid(1e-4, 1e2, 200) {
        assert!(fixed_point_residual(&b, 0.5, beta).unwrap() > 0.0, "{beta}");
    }
    let r = fixed_point_residual(&b, 0.5, 1e-6).unwrap();
    assert!((r - 1.0).abs() < 1e-5);
}

#[test]
fn beta_c_is_increasing_for_affine_rates() {
    for (lambda, delta) in [(1.0, 0.0), (1.0, 0.5), (2.0, 1.0)] {
        let b = RateFunction::affine(lambda, delta);
        let grid = log_grid(1e-4, 1e2, 1000);
        let vals: Vec<f64> = grid.iter().map(|beta| beta * c_of_beta(&b, 1.0, *beta).unwrap()).collect();
        for w in vals.windows(2) {
            assert!(w[1] - w[0] > -1e-9, "({lambda}, {delta}): {} then {}", w[0], w[1]);
        }
    }
}

#[test]
fn small_beta_limits() {
    let b = RateFunction::linear(1.0);
    let v = 1e-4 * c_of_beta(&b, 2.0, 1e-4).unwrap();
    assert!((v - 0.5).abs() < 0.005);
    let sub = RateFunction::power(1.0, 0.5, 0.0);
    assert!(1e-6 * c_of_beta(&sub, 1.0, 1e-6).unwrap() < 1e-2);
}

#[test]
fn divergent_for_silent_rate() {
    let r = c_of_beta(&RateFunction::constant(0.0), 1.0, 0.5);
    assert!(matches!(r, Err(spikefield_core::Error::Divergent(_))));
}

#[test]
fn classification_matrix() {
    let search = RootSearch::default();
    let nontrivial = |b: RateFunction, ev: f64| {
        find_stationary(&b, ev, &search)
            .unwrap()
            .iter()
            .filter(|r| r.kind == SolutionKind::NonTrivial)
            .count()
    };
    assert_eq!(nontrivial(RateFunction::linear(1.0), 0.5), 0);
    assert_eq!(nontrivial(RateFunction::linear(1.0), 2.0), 1);
    assert_eq!(nontrivial(RateFunction::affine(1.0, 0.5), 1.0), 1);
    assert_eq!(nontrivial(RateFunction::power(1.0, 0.5, 0.0), 1.0), 1);
    assert_eq!(nontrivial(RateFunction::constant(1.0), 1.0), 1);
    let roots = find_stationary(&RateFunction::constant(1.0), 1.0, &search).unwrap();
    assert!((roots[0].beta - 1.0).abs() < 1e-9);
    let affine = find_stationary(&RateFunction::affine(1.0, 0.5), 1.0, &search).unwrap();
    assert!(affine.iter().all(|r| r.kind == SolutionKind::NonTrivial));
    assert_eq!(
        classify_trivial_stability(&RateFunction::affine(1.0, 0.5), 1.0),
        TrivialStability::NotApplicable
    );
}

#[test]
fn constant_rate_density_is_the_limit_density() {
    for (r, ev) in [(2.0, 1.0), (0.5, 3.0), (1.0, 1.0), (3.7, 0.4)] {
        let table = invariant_density(&RateFunction::constant(r), ev, r, 2001).unwrap();
        for (u, f) in table.u.iter().zip(&table.density) {
            // closer to alpha the oracle loses digits in 1 - u / alpha
            if r * ev - u < 1e-4 * r * ev {
                continue;
            }
            let exact = limit_density(r, ev, *u);
            assert!((f - exact).abs() < 1e-10 * exact.max(1.0), "r={r} u={u}: {f} vs {exact}");
        }
        assert_eq!(table.density_at(-0.1), 0.0);
        assert_eq!(table.density_at(r * ev), 0.0);
    }
}

#[test]
fn density_tables_are_normalized_at_roots() {
    let cases = [
        (RateFunction::linear(1.0), 2.0),
        (RateFunction::affine(1.0, 0.5), 1.0),
        (RateFunction::power(1.0, 0.5, 0.0), 1.0),
        (RateFunction::power(2.0, 3.0, 0.1), 1.5),
    ];
    for (b, ev) in cases {
        for root in find_stationary(&b, ev, &RootSearch::default()).unwrap() {
            if root.kind == SolutionKind::Trivial {
                continue;
            }
            let table = invariant_density(&b, ev, root.beta, 4001).unwrap();
            assert!((table.integral() - 1.0).abs() < 1e-6);
            assert!((table.raw_mass - 1.0).abs() < 1e-6, "{b:?}: {}", table.raw_mass);
            assert!(table.density.iter().all(|f| *f >= 0.0));
            assert!(table.cdf.windows(2).all(|w| w[1] >= w[0]));
            let rate = self_consistency_rate(&table, &b);
            assert!((rate - root.beta).abs() < 1e-5, "{b:?}: {rate} vs {}", root.beta);
            let off = invariant_density(&b, ev, 1.1 * root.beta, 4001).unwrap();
            assert!((self_consistency_rate(&off, &b) - 1.1 * root.beta).abs() > 1e-5);
        }
    }
}

#[test]
fn invariant_samples_follow_the_table() {
    let table = invariant_density(&RateFunction::constant(2.0), 1.0, 2.0, 4001).unwrap();
    let mut rng = RngStream::new(77);
    let draws: Vec<f64> = (0..100_000).map(|_| sample_invariant(&table, &mut rng)).collect();
    assert!(draws.iter().all(|u| *u >= 0.0 && *u < table.alpha));
    let d = ks_statistic(&draws, |u| limit_cdf(2.0, 1.0, u));
    assert!(d < ks_critical_01(draws.len()), "{d}");
    assert!(mean_estimate(&draws).z_score(table.mean()) < 3.0);

    let b = RateFunction::linear(1.0);
    let table = invariant_density(&b, 2.0, 0.778908421430846, 4001).unwrap();
    let draws: Vec<f64> = (0..100_000).map(|_| sample_invariant(&table, &mut rng)).collect();
    assert!(mean_estimate(&draws).z_score(table.mean()) < 3.0);
    let ps: Vec<f64> = (0..100).map(|k| k as f64 / 100.0).collect();
    let us: Vec<f64> = ps.iter().map(|p| sample_invariant_with(&table, *p)).collect();
    assert!(us.windows(2).all(|w| w[1] >= w[0]));
}

#[test]
fn psi_matches_brute_force_for_a_equal_two() {
    let psi = PsiFunction::new(2.0);
    for x in [1e-2, 0.3, 1.0, 4.4, 50.0, 1e3] {
        let (fast, brute) = (psi.psi(x), psi_quadratic_brute(x));
        assert!(((fast - brute) / brute).abs() < 1e-8, "x={x}: {fast} vs {brute}");
    }
}

#[test]
fn superlinear_limits() {
    // beta^{a-1} rho(beta) -> 1 as beta -> 0
    let beta = 1e-3;
    let r = superlinear_rho_of_beta(2.0, beta).unwrap();
    assert!((beta * r - 1.0).abs() < 0.05, "{}", beta * r);
    // (rho / beta)^{1/3} -> 3^{1/3} Gamma(4/3) = int_0^inf e^{-u^3/3} du
    let k = 3f64.cbrt() * 0.892_979_511_569_249_2;
    let big = 1e3;
    let r = superlinear_rho_of_beta(2.0, big).unwrap();
    let ratio = (r / big).cbrt();
    assert!((ratio - k).abs() < 0.02 * k, "{ratio} vs {k}");
}

#[test]
fn quadratic_critical_point_against_grid_scan() {
    let diagram = superlinear_critical(2.0, 1e-2, 1e2, 41).unwrap();
    assert!(diagram.rho_c > 0.0);
    assert!(diagram.curve.iter().all(|(_, r)| *r >= diagram.rho_c - 1e-9));
    // parametrize by x: beta = 1 / Psi(x), rho = x Psi(x)^2
    let xs = log_grid(1e-1, 1e2, 10_000);
    let points: Vec<(f64, f64)> = xs
        .iter()
        .map(|x| {
            let p = psi_quadratic_brute(*x);
            (1.0 / p, x * p * p)
        })
        .collect();
    let k = (0..points.len()).min_by(|i, j| points[*i].1.total_cmp(&points[*j].1)).unwrap();
    let (beta_grid, rho_grid) = points[k];
    assert!(k > 0 && k < points.len() - 1);
    let spacing = (points[k - 1].0 - points[k + 1].0).abs();
    assert!((diagram.beta_c - beta_grid).abs() <= spacing, "{} vs {beta_grid}", diagram.beta_c);
    assert!(((diagram.rho_c - rho_grid) / rho_grid).abs() < 1e-8, "{} vs {rho_grid}", diagram.rho_c);
    // curve endpoints far above the minimum
    assert!(superlinear_rho_of_beta(2.0, 1e-3).unwrap() > 10.0 * diagram.rho_c);
    assert!(superlinear_rho_of_beta(2.0, 1e3).unwrap() > 10.0 * diagram.rho_c);

    assert_eq!(superlinear_branches(&diagram, 0.5 * diagram.rho_c, 1e-9).unwrap(), SuperlinearBranches::None);
    let two = superlinear_branches(&diagram, 2.0 * diagram.rho_c, 1e-9).unwrap();
    let SuperlinearBranches::Two { beta_minus, beta_plus } = two else {
        panic!("{two:?}");
    };
    assert!(beta_minus < diagram.beta_c && diagram.beta_c < beta_plus);
    let b = power_rate_for_rho(2.0, 1.3, 2.0 * diagram.rho_c);
    for beta in [beta_minus, beta_plus] {
        assert!(fixed_point_residual(&b, 1.3, beta).unwrap().abs() < 1e-6);
    }
    let roots = find_stationary(&b, 1.3, &RootSearch::default()).unwrap();
    assert_eq!(roots.iter().filter(|r| r.kind == SolutionKind::NonTrivial).count(), 2);
    let below = power_rate_for_rho(2.0, 1.3, 0.5 * diagram.rho_c);
    let roots = find_stationary(&below, 1.3, &RootSearch::default()).unwrap();
    assert_eq!(roots.len(), 1);
    assert_eq!(roots[0].stability, Stability::Stable);
}
