//! Stationary states of the mean-field limit.
//!
//! A stationary state with mean firing rate `beta` lives on `[0, alpha)` with
//! `alpha = beta * E(V)`: a neuron leaves 0 along the flow
//! `x(t) = alpha (1 - e^{-t})` and resets on its first spike. Every integral
//! over `u in [0, alpha)` is computed in flow time `t`, where the
//! `1 / (alpha - u)` singularity becomes the flat measure `dt` and the
//! integrand decays like the survival probability of the first spike.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{rate_slope_at_zero, ExtendedReal, RateFunction};
use crate::quad::{self, gl16};
use crate::rng::RngStream;

/// Beyond this flow time `alpha e^{-t}` is below one ulp of `alpha`, so the
/// flow has reached `alpha` and the survival decays exactly exponentially.
const T_FLAT: f64 = 40.0;
/// Survival below `e^{-H_DEAD}` is treated as zero.
const H_DEAD: f64 = 745.0;

/// `x(t) = alpha (1 - e^{-t})`.
#[inline]
fn flow_point(alpha: f64, t: f64) -> f64 {
    -alpha * (-t).exp_m1()
}

/// Hazard accrued along the flow `x(t) = alpha (1 - e^{-t})`.
struct RisingFlow {
    b: RateFunction,
    alpha: f64,
}

impl RisingFlow {
    fn new(b: &RateFunction, alpha: f64) -> Self {
        Self { b: *b, alpha }
    }

    #[inline]
    fn rate_at(&self, t: f64) -> f64 {
        self.b.eval(flow_point(self.alpha, t))
    }

    fn has_closed_form(&self) -> bool {
        !matches!(self.b, RateFunction::Power { .. })
    }

    /// `int_0^t b(x(u)) du` in closed form (constant and affine rates).
    fn closed_hazard(&self, t: f64) -> f64 {
        match self.b {
            RateFunction::Constant { rate0 } => rate0 * t,
            RateFunction::Affine { slope, intercept } => {
                slope * self.alpha * (t + (-t).exp_m1()) + intercept * t
            }
            RateFunction::Power { .. } => unreachable!("power rates have no closed form here"),
        }
    }

    /// `int_{t0}^{t1} b(x(u)) du`.
    fn increment(&self, t0: f64, t1: f64) -> f64 {
        if t1 <= t0 {
            return 0.0;
        }
        if self.has_closed_form() {
            return self.closed_hazard(t1) - self.closed_hazard(t0);
        }
        let rule = gl16();
        if t0 == 0.0 {
            // b(x(u)) may behave like u^a near 0: geometric subdivision
            let mut total = 0.0;
            let mut hi = t1;
            for _ in 0..48 {
                let lo = 0.5 * hi;
                total += rule.integrate(lo, hi, |u| self.rate_at(u));
                hi = lo;
            }
            total + rule.integrate(0.0, hi, |u| self.rate_at(u))
        } else {
            rule.integrate(t0, t1, |u| self.rate_at(u))
        }
    }

    fn hazard(&self, t: f64) -> f64 {
        if self.has_closed_form() {
            return self.closed_hazard(t);
        }
        if t <= T_FLAT {
            let mut h = 0.0;
            let mut lo = 0.0;
            while lo < t {
                let hi = (lo + 0.5).min(t);
                h += self.increment(lo, hi);
                lo = hi;
            }
            h
        } else {
            self.hazard(T_FLAT) + self.b.eval(self.alpha) * (t - T_FLAT)
        }
    }

    /// `int_0^inf w(x(t)) S(t) dt` with `S = exp(-hazard)`; the part beyond
    /// `T_FLAT` is added in closed form.
    fn integrate<W: Fn(f64) -> f64>(&self, w: W) -> Result<f64> {
        let rate_end = self.b.eval(self.alpha);
        let rule = gl16();
        let mut t = 0.0;
        let mut h_at_t = 0.0;
        let mut total = 0.0;
        let mut node_h = [0.0; 16];
        while t < T_FLAT && h_at_t < H_DEAD {
            let mut width = t.clamp(1e-6, 0.5).min(T_FLAT - t);
            for _ in 0..3 {
                let r = self.rate_at(t + width);
                if r * width > 1.0 {
                    width = 1.0 / r;
                }
            }
            let c = t + 0.5 * width;
            let half = 0.5 * width;
            let closed = self.has_closed_form();
            for (j, xi) in rule.nodes.iter().enumerate() {
                let tn = c + half * xi;
                node_h[j] = if closed {
                    self.closed_hazard(tn)
                } else {
                    h_at_t + self.increment(t, tn)
                };
            }
            let mut panel = 0.0;
            for (j, (xi, wt)) in rule.nodes.iter().zip(&rule.weights).enumerate() {
                let tn = c + half * xi;
                panel += wt * w(flow_point(self.alpha, tn)) * (-node_h[j]).exp();
            }
            total += panel * half;
            h_at_t = if closed {
                self.closed_hazard(t + width)
            } else {
                h_at_t + self.increment(t, t + width)
            };
            t += width;
        }
        if h_at_t < H_DEAD {
            if rate_end <= 0.0 {
                return Err(Error::Divergent(format!(
                    "b vanishes on [0, {}]: the first spike never happens",
                    self.alpha
                )));
            }
            total += w(self.alpha) * (-h_at_t).exp() / rate_end;
        }
        Ok(total)
    }
}

/// Probability that a neuron started at 0 has not spiked by flow time `t`.
pub fn survival_along_flow(b: &RateFunction, alpha: f64, t: f64) -> Result<f64> {
    if !(alpha >= 0.0) || !(t >= 0.0) {
        return Err(Error::Domain(format!("need alpha >= 0 and t >= 0, got {alpha}, {t}")));
    }
    if t.is_infinite() {
        return Ok(if b.eval(alpha) > 0.0 { 0.0 } else { 1.0 });
    }
    Ok((-RisingFlow::new(b, alpha).hazard(t)).exp())
}

/// `C(beta)`: the mean first-spike time along the flow to `alpha = beta E(V)`.
pub fn c_of_beta(b: &RateFunction, mean_weight: f64, beta: f64) -> Result<f64> {
    if !(beta > 0.0) {
        return Err(Error::Domain(format!("beta must be > 0, got {beta}")));
    }
    let alpha = beta * mean_weight;
    if b.is_zero() || b.eval(alpha) <= 0.0 {
        return Err(Error::Divergent(format!("b vanishes on [0, {alpha}]")));
    }
    if let RateFunction::Constant { rate0 } = *b {
        return Ok(1.0 / rate0);
    }
    RisingFlow::new(b, alpha).integrate(|_| 1.0)
}

/// `beta C(beta) - (1 - exp(-int_0^alpha b(v) / (alpha - v) dv))`.
///
/// The exponent diverges whenever `b(alpha) > 0`, which is the only case in
/// which `C(beta)` is finite, so the right-hand side is 1 for every
/// admissible input.
pub fn fixed_point_residual(b: &RateFunction, mean_weight: f64, beta: f64) -> Result<f64> {
    let c = c_of_beta(b, mean_weight, beta)?;
    let never_spikes = if b.eval(beta * mean_weight) > 0.0 { 0.0 } else { 1.0 };
    Ok(beta * c - (1.0 - never_spikes))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TrivialStability {
    Stable,
    Unstable,
    Undetermined,
    /// `b(0) > 0`: the silent state is not invariant.
    NotApplicable,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Stability {
    Stable,
    Unstable,
    Undetermined,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SolutionKind {
    Trivial,
    NonTrivial,
}

/// Excitation ratio `rho = lambda0 E(V)`.
pub fn excitation_ratio(b: &RateFunction, mean_weight: f64) -> ExtendedReal {
    rate_slope_at_zero(b).scale(mean_weight)
}

/// Stability of the silent state from the slope of `b` at zero.
pub fn classify_trivial_stability(b: &RateFunction, mean_weight: f64) -> TrivialStability {
    if b.at_zero() > 0.0 {
        return TrivialStability::NotApplicable;
    }
    match excitation_ratio(b, mean_weight) {
        ExtendedReal::Infinite => TrivialStability::Unstable,
        ExtendedReal::Finite(rho) if rho < 1.0 => TrivialStability::Stable,
        ExtendedReal::Finite(rho) if rho > 1.0 => TrivialStability::Unstable,
        ExtendedReal::Finite(_) => TrivialStability::Undetermined,
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StationarySolution {
    pub beta: f64,
    pub alpha: f64,
    /// `C(beta)`; absent for the silent state.
    pub c: Option<f64>,
    pub kind: SolutionKind,
    pub stability: Stability,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RootSearch {
    pub beta_lo: f64,
    pub beta_hi: f64,
    pub grid_points: usize,
    pub tol: f64,
}

impl Default for RootSearch {
    fn default() -> Self {
        Self {
            beta_lo: 1e-4,
            beta_hi: 1e2,
            grid_points: 512,
            tol: 1e-10,
        }
    }
}

/// All stationary states: the silent one when `b(0) = 0`, then every
/// non-trivial root of the fixed-point residual found by sign changes on a
/// log grid, refined by bisection.
pub fn find_stationary(b: &RateFunction, mean_weight: f64, search: &RootSearch) -> Result<Vec<StationarySolution>> {
    if !(search.beta_lo > 0.0 && search.beta_hi > search.beta_lo) {
        return Err(Error::Config("beta range must satisfy 0 < lo < hi".into()));
    }
    if search.grid_points < 64 {
        return Err(Error::Config("root scan needs at least 64 grid points".into()));
    }
    let mut out = Vec::new();
    if b.at_zero() == 0.0 {
        let stability = match classify_trivial_stability(b, mean_weight) {
            TrivialStability::Stable => Stability::Stable,
            TrivialStability::Unstable => Stability::Unstable,
            _ => Stability::Undetermined,
        };
        out.push(StationarySolution {
            beta: 0.0,
            alpha: 0.0,
            c: None,
            kind: SolutionKind::Trivial,
            stability,
        });
    }
    if b.is_zero() || mean_weight <= 0.0 && b.at_zero() == 0.0 {
        return Ok(out);
    }
    let grid = quad::log_grid(search.beta_lo, search.beta_hi, search.grid_points);
    let residuals: Vec<f64> = grid
        .iter()
        .map(|beta| fixed_point_residual(b, mean_weight, *beta))
        .collect::<Result<_>>()?;
    for k in 0..grid.len() - 1 {
        let (r0, r1) = (residuals[k], residuals[k + 1]);
        let root = if r0 == 0.0 {
            Some(grid[k])
        } else if r0.signum() != r1.signum() && r1 != 0.0 {
            quad::bisect_log(
                |beta| fixed_point_residual(b, mean_weight, beta).unwrap_or(f64::NAN),
                grid[k],
                grid[k + 1],
                1e-15,
                search.tol,
                200,
            )
        } else {
            None
        };
        if let Some(beta) = root {
            out.push(StationarySolution {
                beta,
                alpha: beta * mean_weight,
                c: Some(c_of_beta(b, mean_weight, beta)?),
                kind: SolutionKind::NonTrivial,
                stability: Stability::Undetermined,
            });
        }
    }
    if let Some(last) = residuals.last() {
        if *last == 0.0 {
            let beta = search.beta_hi;
            out.push(StationarySolution {
                beta,
                alpha: beta * mean_weight,
                c: Some(c_of_beta(b, mean_weight, beta)?),
                kind: SolutionKind::NonTrivial,
                stability: Stability::Undetermined,
            });
        }
    }
    Ok(out)
}

/// Tabulated stationary density on `[0, alpha)`, parametrized by flow time.
///
/// Nodes are uniform in `s`, with `u = alpha (1 - e^{-s})`, so the
/// `(alpha - u)^{b(alpha) - 1}` behavior at the upper end is resolved.
/// Integrals over the table are Simpson sums in `s` of `g(u) f(u) du/ds`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DensityTable {
    pub beta: f64,
    pub alpha: f64,
    /// `C(beta)`
    pub c: f64,
    pub s: Vec<f64>,
    pub u: Vec<f64>,
    pub density: Vec<f64>,
    pub cdf: Vec<f64>,
    /// Tabulated mass plus the analytic tail beyond the last node.
    pub raw_mass: f64,
}

impl DensityTable {
    /// `du/ds = alpha - u`
    fn jacobian(&self, k: usize) -> f64 {
        self.alpha * (-self.s[k]).exp()
    }

    /// `int g(u) f(u) du` by composite Simpson in `s` (tables have an odd
    /// node count).
    pub fn integrate<G: Fn(f64) -> f64>(&self, g: G) -> f64 {
        let n = self.s.len();
        let h = self.s[1] - self.s[0];
        let term = |k: usize| g(self.u[k]) * self.density[k] * self.jacobian(k);
        let mut total = term(0) + term(n - 1);
        for k in 1..n - 1 {
            total += if k % 2 == 1 { 4.0 } else { 2.0 } * term(k);
        }
        total * h / 3.0
    }

    pub fn integral(&self) -> f64 {
        self.integrate(|_| 1.0)
    }

    pub fn mean(&self) -> f64 {
        self.integrate(|u| u)
    }

    /// Density at an arbitrary potential, zero outside `[0, alpha)`.
    pub fn density_at(&self, u: f64) -> f64 {
        if u < 0.0 || u >= self.alpha {
            return 0.0;
        }
        let s = -(-u / self.alpha).ln_1p();
        let h = self.s[1] - self.s[0];
        let k = ((s / h).floor() as usize).min(self.s.len() - 2);
        let w = ((s - self.s[k]) / h).clamp(0.0, 1.0);
        self.density[k] * (1.0 - w) + self.density[k + 1] * w
    }
}

/// Tabulate the stationary density for `beta` on `nodes` uniform flow-time
/// nodes (rounded up to odd), truncated where the survival drops below
/// `1e-13`.
pub fn invariant_density(b: &RateFunction, mean_weight: f64, beta: f64, nodes: usize) -> Result<DensityTable> {
    if nodes < 16 {
        return Err(Error::Config("density table needs at least 16 nodes".into()));
    }
    let nodes = nodes | 1;
    let c = c_of_beta(b, mean_weight, beta)?;
    let alpha = beta * mean_weight;
    let flow = RisingFlow::new(b, alpha);
    let rate_end = b.eval(alpha);
    // truncation point: survival below 1e-13
    let target = 13.0 * std::f64::consts::LN_10;
    let s_max = if flow.hazard(T_FLAT) >= target {
        quad::bisect(|t| flow.hazard(t) - target, 0.0, T_FLAT, 1e-12, 0.0, 200).unwrap_or(T_FLAT)
    } else {
        T_FLAT + (target - flow.hazard(T_FLAT)) / rate_end
    };
    let h = s_max / (nodes - 1) as f64;
    let s: Vec<f64> = (0..nodes).map(|k| k as f64 * h).collect();
    let mut hazard = vec![0.0; nodes];
    for k in 1..nodes {
        hazard[k] = if flow.has_closed_form() {
            flow.closed_hazard(s[k])
        } else if s[k - 1] >= T_FLAT {
            hazard[k - 1] + rate_end * (s[k] - s[k - 1])
        } else {
            hazard[k - 1] + flow.increment(s[k - 1], s[k])
        };
    }
    let u: Vec<f64> = s.iter().map(|t| flow_point(alpha, *t)).collect();
    // f(u) = S(s) / (C (alpha - u)) = exp(s - H(s)) / (C alpha)
    let density: Vec<f64> = s
        .iter()
        .zip(&hazard)
        .map(|(t, hz)| (t - hz).exp() / (c * alpha))
        .collect();
    let mut table = DensityTable {
        beta,
        alpha,
        c,
        s,
        u,
        density,
        cdf: Vec::new(),
        raw_mass: 0.0,
    };
    let tail = (-hazard[nodes - 1]).exp() / (rate_end * c);
    table.raw_mass = table.integral() + tail;
    let mut cdf = vec![0.0; nodes];
    for k in 1..nodes {
        let a = table.density[k - 1] * table.jacobian(k - 1);
        let bb = table.density[k] * table.jacobian(k);
        cdf[k] = cdf[k - 1] + 0.5 * h * (a + bb);
    }
    // the trapezoid sums carry O(h^2) error; pin the end to 1 - tail
    let scale = (1.0 - tail) / cdf[nodes - 1];
    for v in cdf.iter_mut() {
        *v *= scale;
    }
    table.cdf = cdf;
    Ok(table)
}

/// Inverse-CDF draw from a tabulated stationary density.
pub fn sample_invariant(table: &DensityTable, rng: &mut RngStream) -> f64 {
    sample_invariant_with(table, rng.uniform())
}

/// Inverse CDF at `p in [0, 1)`; draws past the tabulated mass return the
/// last node, which is below `alpha`.
pub fn sample_invariant_with(table: &DensityTable, p: f64) -> f64 {
    let n = table.cdf.len();
    let last = table.cdf[n - 1];
    if p >= last {
        return table.u[n - 1];
    }
    let k = table.cdf.partition_point(|c| *c <= p).clamp(1, n - 1);
    let (c0, c1) = (table.cdf[k - 1], table.cdf[k]);
    let w = if c1 > c0 { (p - c0) / (c1 - c0) } else { 0.0 };
    table.u[k - 1] + w * (table.u[k] - table.u[k - 1])
}

/// `int b(u) f(u) du` for the table's density; equals `beta` at a stationary
/// state.
///
/// Node sums converge slowly when `b` has a root singularity at 0, so the
/// density formula behind the table (same `alpha`, `C` and mass) is
/// integrated with the panel rule used for `C(beta)`.
pub fn self_consistency_rate(table: &DensityTable, b: &RateFunction) -> f64 {
    match RisingFlow::new(b, table.alpha).integrate(|u| b.eval(u)) {
        Ok(v) => v / (table.c * table.raw_mass),
        Err(_) => table.integrate(|u| b.eval(u)),
    }
}

// ---------------------------------------------------------------------------
// Superlinear power rates b(x) = lambda x^a, a > 1.
//
// With rho = lambda E(V)^a the fixed-point equation reads
// beta Psi(rho beta^a) = 1, where Psi(x) = int_0^inf exp(-x G(s)) ds and
// G(s) = int_0^s (1 - e^{-v})^a dv (the flow-time form of
// g(u) = int_0^u v^a / (1 - v) dv).

/// `Psi` and `G` for one exponent, by nested adaptive Gauss–Kronrod.
#[derive(Debug, Clone, Copy)]
pub struct PsiFunction {
    pub exponent: f64,
}

impl PsiFunction {
    pub fn new(exponent: f64) -> Self {
        Self { exponent }
    }

    /// `G(s) = int_0^s (1 - e^{-v})^a dv`
    pub fn g_flow(&self, s: f64) -> f64 {
        let a = self.exponent;
        if s > T_FLAT {
            return self.g_flow(T_FLAT) + (s - T_FLAT);
        }
        quad::adaptive(|v| (-(-v).exp_m1()).powf(a), 0.0, s, 1e-300, 1e-14).value
    }

    /// `g(u) = int_0^u v^a / (1 - v) dv` for `u in [0, 1)`.
    pub fn g(&self, u: f64) -> f64 {
        self.g_flow(-(-u).ln_1p())
    }

    /// `int_0^T_FLAT w(G(s)) e^{-x G(s)} ds` on geometric panels anchored at
    /// the scale where `x G(s) ~ 1`, so large `x` does not hide the mass.
    fn body<W: Fn(f64) -> f64>(&self, x: f64, w: W, rel_tol: f64) -> f64 {
        let a = self.exponent;
        let mut lo = 0.0;
        let mut hi = ((a + 1.0) / x).powf(1.0 / (a + 1.0)).min(1.0);
        let mut total = 0.0;
        while lo < T_FLAT {
            hi = hi.min(T_FLAT);
            total += quad::adaptive(
                |s| {
                    let g = self.g_flow(s);
                    w(g) * (-x * g).exp()
                },
                lo,
                hi,
                1e-300,
                rel_tol,
            )
            .value;
            if x * self.g_flow(hi) > H_DEAD {
                break;
            }
            lo = hi;
            hi *= 2.0;
        }
        total
    }

    /// `(Psi(x), -Psi'(x))`
    pub fn psi_and_slope(&self, x: f64) -> (f64, f64) {
        let g_end = self.g_flow(T_FLAT);
        let body = self.body(x, |_| 1.0, 1e-13);
        let body1 = self.body(x, |g| g, 1e-12);
        // beyond T_FLAT, G(s) = g_end + (s - T_FLAT)
        let e = (-x * g_end).exp();
        let tail = e / x;
        let tail1 = e * (g_end / x + 1.0 / (x * x));
        (body + tail, body1 + tail1)
    }

    pub fn psi(&self, x: f64) -> f64 {
        let g_end = self.g_flow(T_FLAT);
        self.body(x, |_| 1.0, 1e-13) + (-x * g_end).exp() / x
    }

    /// Unique `x > 0` with `Psi(x) = target` (`Psi` decreases from `+inf` to 0).
    pub fn solve(&self, target: f64) -> f64 {
        // Psi(x) ~ 1/x near 0: start there, Newton in log x with a bracket
        let f = |lx: f64| self.psi(lx.exp()).ln() - target.ln();
        let mut lo = (1.0 / target).ln() - 1.0;
        while f(lo) < 0.0 {
            lo -= 2.0;
        }
        let mut hi = lo + 1.0;
        while f(hi) > 0.0 {
            hi += 2.0;
        }
        let mut lx = 0.5 * (lo + hi);
        for _ in 0..200 {
            let x = lx.exp();
            let (p, dp) = self.psi_and_slope(x);
            let r = p.ln() - target.ln();
            if r.abs() < 1e-15 {
                break;
            }
            if r > 0.0 {
                lo = lx;
            } else {
                hi = lx;
            }
            // d ln Psi / d ln x = -x Psi'(x) / Psi(x) ... with -Psi' = dp
            let slope = -x * dp / p;
            let next = lx - r / slope;
            lx = if next > lo && next < hi { next } else { 0.5 * (lo + hi) };
            if hi - lo < 1e-15 {
                break;
            }
        }
        lx.exp()
    }
}

/// `rho(beta)`: the coupling at which `beta` solves the fixed-point equation
/// for `b(x) = lambda x^a`. Independent of `E(V)` once expressed through rho.
pub fn superlinear_rho_of_beta(exponent: f64, beta: f64) -> Result<f64> {
    if !(exponent > 1.0) {
        return Err(Error::Domain(format!("superlinear analysis needs exponent > 1, got {exponent}")));
    }
    if !(beta > 0.0) {
        return Err(Error::Domain(format!("beta must be > 0, got {beta}")));
    }
    let x = PsiFunction::new(exponent).solve(1.0 / beta);
    Ok(x / beta.powf(exponent))
}

/// `beta Psi(rho beta^a) - 1`
pub fn psi_residual(exponent: f64, rho: f64, beta: f64) -> f64 {
    beta * PsiFunction::new(exponent).psi(rho * beta.powf(exponent)) - 1.0
}

/// The power rate realizing coupling `rho` at mean weight `E(V)`.
pub fn power_rate_for_rho(exponent: f64, mean_weight: f64, rho: f64) -> RateFunction {
    RateFunction::power(rho / mean_weight.powf(exponent), exponent, 0.0)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SuperlinearDiagram {
    pub exponent: f64,
    pub rho_c: f64,
    pub beta_c: f64,
    /// Sampled `(beta, rho(beta))`.
    pub curve: Vec<(f64, f64)>,
}

/// Locate the minimum of `rho(beta)` by a coarse log-grid scan followed by
/// golden-section search in `ln beta`.
pub fn superlinear_critical(exponent: f64, beta_lo: f64, beta_hi: f64, grid_points: usize) -> Result<SuperlinearDiagram> {
    if !(exponent > 1.0) {
        return Err(Error::Domain(format!("superlinear analysis needs exponent > 1, got {exponent}")));
    }
    if !(beta_lo > 0.0 && beta_hi > beta_lo) || grid_points < 3 {
        return Err(Error::Config("invalid beta range for the critical-point scan".into()));
    }
    let grid = quad::log_grid(beta_lo, beta_hi, grid_points);
    let curve: Vec<(f64, f64)> = grid
        .iter()
        .map(|beta| superlinear_rho_of_beta(exponent, *beta).map(|r| (*beta, r)))
        .collect::<Result<_>>()?;
    let k = curve
        .iter()
        .enumerate()
        .min_by(|a, b| a.1 .1.total_cmp(&b.1 .1))
        .map(|(i, _)| i)
        .unwrap();
    if k == 0 || k == curve.len() - 1 {
        return Err(Error::Numerical(format!(
            "rho(beta) has no interior minimum on [{beta_lo}, {beta_hi}]"
        )));
    }
    let (lx, rho_c) = quad::golden_min(
        |lb| superlinear_rho_of_beta(exponent, lb.exp()).unwrap_or(f64::INFINITY),
        grid[k - 1].ln(),
        grid[k + 1].ln(),
        1e-9,
    );
    Ok(SuperlinearDiagram {
        exponent,
        rho_c,
        beta_c: lx.exp(),
        curve,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "branches", rename_all = "snake_case")]
pub enum SuperlinearBranches {
    None,
    Critical { beta_c: f64 },
    Two { beta_minus: f64, beta_plus: f64 },
}

/// Non-trivial stationary rates at coupling `rho`, given the diagram.
pub fn superlinear_branches(diagram: &SuperlinearDiagram, rho: f64, tol: f64) -> Result<SuperlinearBranches> {
    let a = diagram.exponent;
    if rho < diagram.rho_c - tol {
        return Ok(SuperlinearBranches::None);
    }
    if (rho - diagram.rho_c).abs() <= tol {
        return Ok(SuperlinearBranches::Critical { beta_c: diagram.beta_c });
    }
    let f = |beta: f64| superlinear_rho_of_beta(a, beta).map(|r| r - rho).unwrap_or(f64::NAN);
    let mut lo = diagram.curve.first().map_or(diagram.beta_c / 10.0, |p| p.0);
    while f(lo) <= 0.0 {
        lo /= 10.0;
        if lo < 1e-300 {
            return Err(Error::Numerical("lower branch bracket not found".into()));
        }
    }
    let mut hi = diagram.curve.last().map_or(diagram.beta_c * 10.0, |p| p.0);
    while f(hi) <= 0.0 {
        hi *= 10.0;
        if hi > 1e300 {
            return Err(Error::Numerical("upper branch bracket not found".into()));
        }
    }
    let minus = quad::bisect_log(f, lo, diagram.beta_c, 1e-14, 0.0, 200)
        .ok_or_else(|| Error::Numerical("lower branch bisection failed".into()))?;
    let plus = quad::bisect_log(f, diagram.beta_c, hi, 1e-14, 0.0, 200)
        .ok_or_else(|| Error::Numerical("upper branch bisection failed".into()))?;
    Ok(SuperlinearBranches::Two {
        beta_minus: minus,
        beta_plus: plus,
    })
}
