//! Limit objects on sampled paths: Skorokhod reflection maps, Brownian
//! netput, local time at the upper barrier, stationary laws of the
//! reflected processes and the lead-time profile `H`.

use std::fmt::Write as _;

use rand_distr::{Distribution, Normal};
use rayon::prelude::*;
use statrs::distribution::{ContinuousCDF, Normal as StdNormal};

use crate::error::{Error, Result};
use crate::primitives::{substream, DistributionSpec, LeadTimeSpec};
use crate::scalar::fmt_sig17;

/// A path sampled on the uniform grid `t0 + i·dt`.
#[derive(Clone, Debug, PartialEq)]
pub struct PathGrid {
    pub t0: f64,
    pub dt: f64,
    pub values: Vec<f64>,
}

impl PathGrid {
    pub fn new(t0: f64, dt: f64, values: Vec<f64>) -> Result<Self> {
        if !(dt > 0.0 && dt.is_finite() && t0.is_finite()) {
            return Err(Error::InvalidParameter(format!("grid step {dt}")));
        }
        if let Some(i) = values.iter().position(|v| !v.is_finite()) {
            return Err(Error::InvalidParameter(format!("non-finite value at index {i}")));
        }
        Ok(Self { t0, dt, values })
    }

    /// Samples `f` at `len` grid points.
    pub fn from_fn(t0: f64, dt: f64, len: usize, f: impl Fn(f64) -> f64) -> Result<Self> {
        Self::new(t0, dt, (0..len).map(|i| f(t0 + i as f64 * dt)).collect())
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn time(&self, i: usize) -> f64 {
        self.t0 + i as f64 * self.dt
    }

    pub fn last(&self) -> Option<f64> {
        self.values.last().copied()
    }

    fn with_values(&self, values: Vec<f64>) -> Self {
        Self {
            t0: self.t0,
            dt: self.dt,
            values,
        }
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::from("t,value\n");
        for (i, v) in self.values.iter().enumerate() {
            let _ = writeln!(out, "{},{}", fmt_sig17(self.time(i)), fmt_sig17(*v));
        }
        out
    }
}

/// One-sided reflection at zero. Returns the reflected path and the
/// pushing `I(t) = -min(0, min_{s≤t} path(s))`.
pub fn reflect_one_sided(path: &PathGrid) -> (PathGrid, PathGrid) {
    let mut running_min = 0.0f64;
    let mut reflected = Vec::with_capacity(path.len());
    let mut pushing = Vec::with_capacity(path.len());
    for &x in &path.values {
        running_min = running_min.min(x);
        pushing.push(-running_min);
        reflected.push(x - running_min);
    }
    (path.with_values(reflected), path.with_values(pushing))
}

/// Output of the two-sided map: `constrained = path - upper + lower`.
#[derive(Clone, Debug, PartialEq)]
pub struct TwoSided {
    pub constrained: PathGrid,
    /// Pushing at the upper barrier.
    pub upper: PathGrid,
    /// Pushing at zero.
    pub lower: PathGrid,
}

/// Two-sided reflection on `[0, h0]`. A starting value outside the interval
/// is clipped and the clipping counted as pushing.
pub fn reflect_two_sided(path: &PathGrid, h0: f64) -> Result<TwoSided> {
    if !(h0 > 0.0) {
        return Err(Error::InvalidParameter(format!("barrier {h0}")));
    }
    let n = path.len();
    let (mut x, mut up, mut lo) = (0.0f64, 0.0f64, 0.0f64);
    let mut prev = 0.0f64;
    let mut constrained = Vec::with_capacity(n);
    let mut upper = Vec::with_capacity(n);
    let mut lower = Vec::with_capacity(n);
    for &v in &path.values {
        x += v - prev;
        prev = v;
        if x > h0 {
            up += x - h0;
            x = h0;
        } else if x < 0.0 {
            lo -= x;
            x = 0.0;
        }
        constrained.push(x);
        upper.push(up);
        lower.push(lo);
    }
    Ok(TwoSided {
        constrained: path.with_values(constrained),
        upper: path.with_values(upper),
        lower: path.with_values(lower),
    })
}

fn check_bm(gamma: f64, sigma2: f64, horizon: f64, dt: f64) -> Result<usize> {
    if !gamma.is_finite() || !(sigma2 > 0.0 && sigma2.is_finite()) {
        return Err(Error::InvalidParameter(format!("gamma {gamma}, sigma2 {sigma2}")));
    }
    if !(horizon > 0.0 && horizon.is_finite()) {
        return Err(Error::NonPositiveHorizon(horizon));
    }
    if !(dt > 0.0 && dt <= horizon) {
        return Err(Error::InvalidParameter(format!("time step {dt}")));
    }
    Ok((horizon / dt).round() as usize)
}

/// Brownian motion started at zero with drift `-gamma` and variance `sigma2`
/// per unit time, sampled every `dt` up to `horizon`.
pub fn simulate_bm(gamma: f64, sigma2: f64, horizon: f64, dt: f64, seed: u64) -> Result<PathGrid> {
    let steps = check_bm(gamma, sigma2, horizon, dt)?;
    let normal = Normal::new(-gamma * dt, (sigma2 * dt).sqrt()).expect("valid normal");
    let mut rng = substream(seed, 0);
    let mut values = Vec::with_capacity(steps + 1);
    let mut x = 0.0;
    values.push(x);
    for _ in 0..steps {
        x += normal.sample(&mut rng);
        values.push(x);
    }
    PathGrid::new(0.0, dt, values)
}

/// Long-run growth rate of the upper pushing for Brownian motion with drift
/// `-gamma` and variance `sigma2` reflected on `[0, h0]`.
pub fn renege_rate(gamma: f64, sigma2: f64, h0: f64) -> f64 {
    if gamma == 0.0 {
        sigma2 / (2.0 * h0)
    } else {
        gamma / (2.0 * gamma * h0 / sigma2).exp_m1()
    }
}

/// Stationary density of the doubly reflected process on `[0, h0]`.
pub fn stationary_density(gamma: f64, sigma2: f64, h0: f64, x: f64) -> f64 {
    if !(0.0..=h0).contains(&x) {
        return 0.0;
    }
    if gamma == 0.0 {
        return 1.0 / h0;
    }
    let c = 2.0 * gamma / sigma2;
    c * (-c * x).exp() / -(-c * h0).exp_m1()
}

/// Distribution function matching [`stationary_density`].
pub fn stationary_cdf(gamma: f64, sigma2: f64, h0: f64, x: f64) -> f64 {
    if x <= 0.0 {
        return 0.0;
    }
    if x >= h0 {
        return 1.0;
    }
    if gamma == 0.0 {
        return x / h0;
    }
    let c = 2.0 * gamma / sigma2;
    (-c * x).exp_m1() / (-c * h0).exp_m1()
}

/// Stationary density `θe^{-θx}`, `θ = 2γ/σ²`, of the process reflected at
/// zero only.
pub fn stationary_density_one_sided(gamma: f64, sigma2: f64, x: f64) -> Result<f64> {
    if !(gamma > 0.0) {
        return Err(Error::InvalidParameter(format!(
            "one-sided stationary law needs gamma > 0, got {gamma}"
        )));
    }
    let theta = 2.0 * gamma / sigma2;
    Ok(if x < 0.0 { 0.0 } else { theta * (-theta * x).exp() })
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct LocalTimeConfig {
    pub gamma: f64,
    pub sigma2: f64,
    pub h0: f64,
    pub horizon: f64,
    pub dt: f64,
    pub seeds: u64,
    pub base_seed: u64,
    /// Histogram bins on `[0, h0]` for the occupation measure; zero skips it.
    pub bins: usize,
}

impl LocalTimeConfig {
    pub fn new(gamma: f64, sigma2: f64, h0: f64) -> Self {
        Self {
            gamma,
            sigma2,
            h0,
            horizon: 200.0,
            dt: 1e-4,
            seeds: 100,
            base_seed: 0,
            bins: 0,
        }
    }
}

/// Monte Carlo estimate of the local-time rate with a 95% normal interval.
#[derive(Clone, Debug, PartialEq)]
pub struct RateEstimate {
    pub config: LocalTimeConfig,
    pub estimate: f64,
    pub ci_half: f64,
    pub theory: f64,
    /// Per-seed `upper(T)/T`.
    pub per_seed: Vec<f64>,
    /// Time fraction spent in each bin, pooled over seeds.
    pub occupation: Vec<f64>,
}

pub const RATE_CSV_HEADER: &str = "gamma,sigma2,H0,dt,T,seeds,estimate,ci_half,theory";

impl RateEstimate {
    pub fn relative_error(&self) -> f64 {
        (self.estimate - self.theory).abs() / self.theory
    }

    pub fn ci_covers_theory(&self) -> bool {
        (self.estimate - self.theory).abs() <= self.ci_half
    }

    pub fn csv_row(&self) -> String {
        let c = &self.config;
        format!(
            "{},{},{},{},{},{},{},{},{}",
            c.gamma,
            c.sigma2,
            c.h0,
            c.dt,
            c.horizon,
            c.seeds,
            fmt_sig17(self.estimate),
            fmt_sig17(self.ci_half),
            fmt_sig17(self.theory)
        )
    }

    /// Kolmogorov–Smirnov distance between the pooled occupation measure and
    /// the stationary law, evaluated at the bin edges.
    pub fn ks_distance(&self) -> Option<f64> {
        if self.occupation.is_empty() {
            return None;
        }
        let c = &self.config;
        let width = c.h0 / self.occupation.len() as f64;
        let mut cum = 0.0;
        let mut worst = 0.0f64;
        for (i, p) in self.occupation.iter().enumerate() {
            cum += p;
            let edge = (i + 1) as f64 * width;
            worst = worst.max((cum - stationary_cdf(c.gamma, c.sigma2, c.h0, edge)).abs());
        }
        Some(worst)
    }
}

struct SeedRun {
    rate: f64,
    occupation: Vec<f64>,
}

fn run_seed(c: &LocalTimeConfig, steps: usize, seed: u64) -> SeedRun {
    let normal = Normal::new(-c.gamma * c.dt, (c.sigma2 * c.dt).sqrt()).expect("valid normal");
    let mut rng = substream(seed, 0);
    let mut counts = vec![0u64; c.bins];
    let scale = c.bins as f64 / c.h0;
    // The one-sided reflection is folded in: W_S stays nonnegative and the
    // two-sided map sees its increments.
    let (mut ws, mut x, mut upper) = (0.0f64, 0.0f64, 0.0f64);
    for _ in 0..steps {
        let ws_next = (ws + normal.sample(&mut rng)).max(0.0);
        x += ws_next - ws;
        ws = ws_next;
        if x > c.h0 {
            upper += x - c.h0;
            x = c.h0;
        } else if x < 0.0 {
            x = 0.0;
        }
        if c.bins > 0 {
            counts[((x * scale) as usize).min(c.bins - 1)] += 1;
        }
    }
    SeedRun {
        rate: upper / (steps as f64 * c.dt),
        occupation: counts.iter().map(|&k| k as f64 / steps as f64).collect(),
    }
}

/// Neumaier-compensated sum.
fn compensated_sum(xs: impl IntoIterator<Item = f64>) -> f64 {
    let (mut sum, mut comp) = (0.0f64, 0.0f64);
    for x in xs {
        let t = sum + x;
        if sum.abs() >= x.abs() {
            comp += (sum - t) + x;
        } else {
            comp += (x - t) + sum;
        }
        sum = t;
    }
    sum + comp
}

/// Simulates the netput, reflects it at zero and then on `[0, h0]`, and
/// averages `upper(T)/T` over independent seeds. Seeds run in parallel; the
/// result does not depend on the thread count.
pub fn local_time_rate_mc(config: &LocalTimeConfig) -> Result<RateEstimate> {
    let steps = check_bm(config.gamma, config.sigma2, config.horizon, config.dt)?;
    if !(config.h0 > 0.0) {
        return Err(Error::InvalidParameter(format!("barrier {}", config.h0)));
    }
    if config.seeds < 2 {
        return Err(Error::InsufficientData("at least two seeds".into()));
    }
    let runs: Vec<SeedRun> = (0..config.seeds)
        .into_par_iter()
        .map(|k| run_seed(config, steps, config.base_seed.wrapping_add(k)))
        .collect();
    let m = runs.len() as f64;
    let per_seed: Vec<f64> = runs.iter().map(|r| r.rate).collect();
    let mean = compensated_sum(per_seed.iter().copied()) / m;
    let var = compensated_sum(per_seed.iter().map(|r| (r - mean).powi(2))) / (m - 1.0);
    let z = StdNormal::new(0.0, 1.0).expect("standard normal").inverse_cdf(0.975);
    let occupation = (0..config.bins)
        .map(|b| compensated_sum(runs.iter().map(|r| r.occupation[b])) / m)
        .collect();
    Ok(RateEstimate {
        config: *config,
        estimate: mean,
        ci_half: z * (var / m).sqrt(),
        theory: renege_rate(config.gamma, config.sigma2, config.h0),
        per_seed,
        occupation,
    })
}

/// The lead-time law on the scaled axis `y = L/√n`, with its integrated
/// tail `H(y) = ∫_y^∞ (1 - G)` and the inverse of `H`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct LeadProfile {
    dist: DistributionSpec,
    scale: f64,
}

impl LeadProfile {
    /// Profile of `dist` at scaling level `n`. Unlike [`LeadTimeSpec`] this
    /// accepts exponential leads, whose `y*` is infinite.
    pub fn new(dist: DistributionSpec, n: f64) -> Result<Self> {
        let dist = dist.validated()?;
        if !(n >= 1.0 && n.is_finite()) {
            return Err(Error::InvalidParameter(format!("scaling level {n}")));
        }
        Ok(Self {
            dist,
            scale: n.sqrt(),
        })
    }

    /// Lower end `y_*` of the scaled support.
    pub fn y_lower(&self) -> f64 {
        self.dist.support().0 / self.scale
    }

    /// Upper end `y*` of the scaled support.
    pub fn y_star(&self) -> f64 {
        self.dist.support().1 / self.scale
    }

    pub fn g(&self, y: f64) -> f64 {
        self.dist.cdf(y * self.scale)
    }

    pub fn h(&self, y: f64) -> f64 {
        let s = self.scale;
        match self.dist {
            DistributionSpec::Deterministic { value } => (value / s - y).max(0.0),
            DistributionSpec::Uniform { lo, hi } => {
                let (a, b) = (lo / s, hi / s);
                if y >= b {
                    0.0
                } else if y <= a {
                    (a - y) + (b - a) / 2.0
                } else {
                    (b - y).powi(2) / (2.0 * (b - a))
                }
            }
            DistributionSpec::Exponential { rate } => {
                let r = rate * s;
                if y <= 0.0 {
                    -y + 1.0 / r
                } else {
                    (-r * y).exp() / r
                }
            }
        }
    }

    /// `H(0)`, the mean scaled lead time.
    pub fn h0(&self) -> f64 {
        self.h(0.0)
    }

    /// `H⁻¹(w)`. Exact on the linear piece below `y_*`, bisection to 1e-12
    /// on `[y_*, y*]`. Returns `+∞` at `w = 0` for unbounded support.
    pub fn h_inv(&self, w: f64) -> Result<f64> {
        if !(w >= 0.0) {
            return Err(Error::InvalidParameter(format!("workload {w}")));
        }
        let y_lo = self.y_lower();
        let h_lo = self.h(y_lo);
        if w >= h_lo {
            return Ok(y_lo - (w - h_lo));
        }
        if let DistributionSpec::Exponential { rate } = self.dist {
            let r = rate * self.scale;
            return Ok(if w == 0.0 { f64::INFINITY } else { -(w * r).ln() / r });
        }
        let (mut a, mut b) = (y_lo, self.y_star());
        while b - a > 1e-12 {
            let mid = 0.5 * (a + b);
            if mid <= a || mid >= b {
                break;
            }
            if self.h(mid) > w {
                a = mid;
            } else {
                b = mid;
            }
        }
        Ok(0.5 * (a + b))
    }
}

pub fn lead_profile(spec: &LeadTimeSpec, n: f64) -> Result<LeadProfile> {
    LeadProfile::new(spec.dist, n)
}

/// Limiting frontier `H⁻¹(w)` for scaled workload `w`.
pub fn frontier_from_workload(w: f64, profile: &LeadProfile) -> Result<f64> {
    profile.h_inv(w)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn grid(values: Vec<f64>) -> PathGrid {
        PathGrid::new(0.0, 0.01, values).unwrap()
    }

    /// `φ(t) - sup_{s≤t} [(φ(s) - H)⁺ ∧ inf_{u∈[s,t]} φ(u)]`, for nonnegative `φ`.
    fn lambda_oracle(phi: &[f64], h: f64) -> Vec<f64> {
        (0..phi.len())
            .map(|t| {
                let mut sup = f64::NEG_INFINITY;
                for s in 0..=t {
                    let inf = phi[s..=t].iter().copied().fold(f64::INFINITY, f64::min);
                    sup = sup.max((phi[s] - h).max(0.0).min(inf));
                }
                phi[t] - sup
            })
            .collect()
    }

    #[test]
    fn one_sided_examples() {
        let down = PathGrid::from_fn(0.0, 0.5, 5, |t| -t).unwrap();
        let (r, i) = reflect_one_sided(&down);
        assert!(r.values.iter().all(|&v| v == 0.0));
        assert_eq!(i.values, vec![0.0, 0.5, 1.0, 1.5, 2.0]);
        let up = grid(vec![0.0, 1.0, 0.5, 2.0]);
        let (r, i) = reflect_one_sided(&up);
        assert_eq!(r, up);
        assert!(i.values.iter().all(|&v| v == 0.0));
    }

    #[test]
    fn two_sided_examples() {
        let ramp = PathGrid::from_fn(0.0, 0.25, 9, |t| t).unwrap();
        let out = reflect_two_sided(&ramp, 1.0).unwrap();
        for (i, t) in (0..9).map(|i| (i, ramp.time(i))) {
            assert!((out.constrained.values[i] - t.min(1.0)).abs() < 1e-15);
            assert!((out.upper.values[i] - (t - 1.0).max(0.0)).abs() < 1e-15);
            assert_eq!(out.lower.values[i], 0.0);
        }
        let zero = grid(vec![0.0; 5]);
        let out = reflect_two_sided(&zero, 1.0).unwrap();
        assert_eq!(out.constrained, zero);
        assert!(out.upper.values.iter().chain(&out.lower.values).all(|&v| v == 0.0));
        assert!(reflect_two_sided(&zero, 0.0).is_err());
    }

    #[test]
    fn grid_rejects_bad_input() {
        assert!(PathGrid::new(0.0, 0.0, vec![]).is_err());
        assert!(PathGrid::new(0.0, 1.0, vec![f64::NAN]).is_err());
        let p = grid(vec![1.0, 2.0]);
        assert_eq!(p.to_csv(), "t,value\n0,1.0000000000000000e0\n1.0000000000000000e-2,2.0000000000000000e0\n");
    }

    #[test]
    fn bm_moments() {
        let seeds = 10_000u64;
        let ends: Vec<f64> = (0..seeds)
            .map(|s| simulate_bm(0.0, 1.0, 1.0, 0.01, s).unwrap().last().unwrap())
            .collect();
        let mean = ends.iter().sum::<f64>() / seeds as f64;
        let var = ends.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (seeds - 1) as f64;
        assert!((var - 1.0).abs() < 0.05, "variance {var}");

        let p = simulate_bm(0.5, 1.0, 2000.0, 0.1, 7).unwrap();
        let drift = p.last().unwrap() / 2000.0;
        assert!((drift + 0.5).abs() < 3.0 / 2000f64.sqrt(), "drift {drift}");
    }

    #[test]
    fn bm_increments_uncorrelated() {
        let p = simulate_bm(0.0, 2.0, 2000.0, 1.0, 11).unwrap();
        let inc: Vec<f64> = p.values.windows(2).map(|w| w[1] - w[0]).collect();
        let m = inc.len() as f64;
        let lag1 = inc.windows(2).map(|w| w[0] * w[1]).sum::<f64>() / (m - 1.0);
        let var = inc.iter().map(|x| x * x).sum::<f64>() / m;
        assert!((lag1 / var).abs() < 3.0 / m.sqrt());
    }

    #[test]
    fn bm_is_seeded() {
        let a = simulate_bm(0.3, 1.0, 5.0, 0.01, 3).unwrap();
        assert_eq!(a, simulate_bm(0.3, 1.0, 5.0, 0.01, 3).unwrap());
        assert_ne!(a, simulate_bm(0.3, 1.0, 5.0, 0.01, 4).unwrap());
        assert!(simulate_bm(0.0, 0.0, 1.0, 0.1, 0).is_err());
        assert!(simulate_bm(0.0, 1.0, 1.0, 0.0, 0).is_err());
    }

    #[test]
    fn renege_rate_values() {
        assert_eq!(renege_rate(0.0, 2.0, 1.0), 1.0);
        assert!((renege_rate(0.5, 1.0, 1.0) - 0.5 / (1f64.exp() - 1.0)).abs() < 1e-15);
        assert!((renege_rate(0.5, 1.0, 1.0) - 0.290_988).abs() < 1e-6);
        let (a, b) = (renege_rate(1e-8, 1.0, 1.0), renege_rate(0.0, 1.0, 1.0));
        assert!((a - b).abs() / b < 1e-8);
        for g in [0.0, 0.3, 1.0] {
            assert!(renege_rate(g, 1.0, 1.0) > renege_rate(g, 1.0, 1.5));
        }
        assert!(renege_rate(1.0, 1.0, 50.0) < 1e-40);
    }

    #[test]
    fn stationary_densities() {
        for x in [0.0, 0.3, 2.0] {
            assert_eq!(stationary_density(0.0, 1.0, 2.0, x), 0.5);
        }
        assert_eq!(stationary_density(0.0, 1.0, 2.0, 2.5), 0.0);
        for (g, h) in [(0.5, 1.0), (1.0, 3.0), (-0.4, 2.0), (0.0, 0.7)] {
            // Composite Simpson.
            let n = 2000;
            let dx = h / n as f64;
            let f = |i: usize| stationary_density(g, 1.0, h, i as f64 * dx);
            let s: f64 = (1..n).map(|i| if i % 2 == 1 { 4.0 * f(i) } else { 2.0 * f(i) }).sum();
            let integral = (f(0) + f(n) + s) * dx / 3.0;
            assert!((integral - 1.0).abs() < 1e-10, "gamma {g}: {integral}");
            assert!((stationary_cdf(g, 1.0, h, h / 2.0) - {
                let m = n / 2;
                let s: f64 = (1..m).map(|i| if i % 2 == 1 { 4.0 * f(i) } else { 2.0 * f(i) }).sum();
                (f(0) + f(m) + s) * dx / 3.0
            })
            .abs()
                < 1e-10);
        }
        assert!(stationary_density_one_sided(0.0, 1.0, 1.0).is_err());
        let theta = 2.0 * 0.25 / 0.5;
        assert_eq!(stationary_density_one_sided(0.25, 0.5, 2.0).unwrap(), theta * (-theta * 2.0f64).exp());
    }

    #[test]
    fn local_time_matches_rate_for_driftless_case() {
        let mut c = LocalTimeConfig::new(0.0, 2.0, 1.0);
        c.horizon = 50.0;
        c.dt = 1e-3;
        c.seeds = 16;
        c.bins = 20;
        let est = local_time_rate_mc(&c).unwrap();
        assert_eq!(est.theory, 1.0);
        assert!(est.relative_error() < 0.1, "{est:?}");
        assert!((est.occupation.iter().sum::<f64>() - 1.0).abs() < 1e-9);
        assert!(est.ks_distance().unwrap() < 0.05);
        assert_eq!(local_time_rate_mc(&c).unwrap().estimate, est.estimate);
        assert_eq!(est.csv_row().split(',').count(), RATE_CSV_HEADER.split(',').count());
    }

    #[test]
    fn remote_barrier_gives_no_local_time() {
        let mut c = LocalTimeConfig::new(1.0, 1.0, 25.0);
        c.horizon = 20.0;
        c.dt = 1e-2;
        c.seeds = 4;
        assert_eq!(local_time_rate_mc(&c).unwrap().estimate, 0.0);
    }

    #[test]
    fn coarser_grids_lose_more_local_time() {
        // Same Brownian path sampled at dt and 4·dt.
        let (h, horizon) = (1.0, 100.0);
        let mut fine_total = 0.0;
        let mut coarse_total = 0.0;
        for seed in 0..8 {
            let fine = simulate_bm(0.0, 1.0, horizon, 1e-3, seed).unwrap();
            let coarse = PathGrid::new(0.0, 4e-3, fine.values.iter().step_by(4).copied().collect()).unwrap();
            for (p, acc) in [(&fine, &mut fine_total), (&coarse, &mut coarse_total)] {
                let (ws, _) = reflect_one_sided(p);
                *acc += reflect_two_sided(&ws, h).unwrap().upper.last().unwrap() / horizon;
            }
        }
        assert!(coarse_total < fine_total, "{coarse_total} vs {fine_total}");
    }

    #[test]
    fn lead_profiles() {
        let u = lead_profile(&LeadTimeSpec::new(DistributionSpec::uniform(5.0, 200.0).unwrap()).unwrap(), 1.0).unwrap();
        assert_eq!(u.h0(), 102.5);
        assert_eq!(u.h(u.y_star()), 0.0);
        let n = 400.0;
        let u = LeadProfile::new(DistributionSpec::uniform(5.0, 200.0).unwrap(), n).unwrap();
        assert!((u.h0() - 102.5 / 20.0).abs() < 1e-12);
        let d = LeadProfile::new(DistributionSpec::deterministic(4.0).unwrap(), 4.0).unwrap();
        assert_eq!((d.h(0.0), d.h(1.0), d.h(3.0), d.h(-1.0)), (2.0, 1.0, 0.0, 3.0));
        let e = LeadProfile::new(DistributionSpec::exponential(0.5).unwrap(), 1.0).unwrap();
        assert!((e.h0() - 2.0).abs() < 1e-15);
        assert_eq!(e.h_inv(0.0).unwrap(), f64::INFINITY);
        assert!(frontier_from_workload(-0.1, &u).is_err());
        assert_eq!(frontier_from_workload(0.0, &d).unwrap(), d.y_star());
    }

    fn any_profile() -> impl Strategy<Value = LeadProfile> {
        prop_oneof![
            (0.5f64..50.0, 0.0f64..100.0, 1.0f64..500.0)
                .prop_map(|(a, w, n)| LeadProfile::new(DistributionSpec::uniform(a, a + w).unwrap(), n).unwrap()),
            (0.5f64..50.0, 1.0f64..500.0)
                .prop_map(|(c, n)| LeadProfile::new(DistributionSpec::deterministic(c).unwrap(), n).unwrap()),
            (0.05f64..5.0, 1.0f64..500.0)
                .prop_map(|(r, n)| LeadProfile::new(DistributionSpec::exponential(r).unwrap(), n).unwrap()),
        ]
    }

    proptest! {
        #[test]
        fn two_sided_matches_oracle(steps in prop::collection::vec(-1.0f64..1.0, 1..120), h in 0.2f64..3.0) {
            let mut phi = vec![0.0];
            for s in steps {
                let next = (phi.last().unwrap() + s).max(0.0);
                phi.push(next);
            }
            let out = reflect_two_sided(&grid(phi.clone()), h).unwrap();
            for (a, b) in out.constrained.values.iter().zip(lambda_oracle(&phi, h)) {
                prop_assert!((a - b).abs() <= 1e-12);
            }
        }

        #[test]
        fn two_sided_invariants(steps in prop::collection::vec(-1.0f64..1.0, 1..300), h in 0.1f64..3.0) {
            let mut phi = vec![0.0];
            for s in steps {
                phi.push(phi.last().unwrap() + s);
            }
            let p = grid(phi.clone());
            let out = reflect_two_sided(&p, h).unwrap();
            let c = &out.constrained.values;
            let (up, lo) = (&out.upper.values, &out.lower.values);
            for i in 0..phi.len() {
                prop_assert!((-1e-12..=h + 1e-12).contains(&c[i]));
                prop_assert!((c[i] - (phi[i] - up[i] + lo[i])).abs() <= 1e-9);
                if i > 0 {
                    prop_assert!(up[i] >= up[i - 1] && lo[i] >= lo[i - 1]);
                    if up[i] > up[i - 1] {
                        prop_assert!(c[i] == h);
                    }
                    if lo[i] > lo[i - 1] {
                        prop_assert!(c[i] == 0.0);
                    }
                }
            }
            // A barrier out of reach reduces to the one-sided map.
            let far = reflect_two_sided(&p, 1e9).unwrap();
            for (a, b) in far.constrained.values.iter().zip(&reflect_one_sided(&p).0.values) {
                prop_assert!((a - b).abs() <= 1e-9);
            }
        }

        #[test]
        fn monotone_paths_are_clipped(steps in prop::collection::vec(0.0f64..1.0, 1..100), h in 0.1f64..5.0) {
            let mut phi = vec![0.0];
            for s in steps {
                phi.push(phi.last().unwrap() + s);
            }
            let out = reflect_two_sided(&grid(phi.clone()), h).unwrap();
            for (a, b) in out.constrained.values.iter().zip(&phi) {
                prop_assert!((a - b.min(h)).abs() <= 1e-12);
            }
        }

        #[test]
        fn one_sided_matches_formula(steps in prop::collection::vec(-1.0f64..1.0, 1..200)) {
            let mut phi = vec![0.0];
            for s in steps {
                phi.push(phi.last().unwrap() + s);
            }
            let (r, i) = reflect_one_sided(&grid(phi.clone()));
            for t in 0..phi.len() {
                let m = phi[..=t].iter().copied().fold(0.0, f64::min);
                prop_assert_eq!(i.values[t], -m);
                prop_assert!(r.values[t] >= 0.0);
                if t > 0 && i.values[t] > i.values[t - 1] {
                    prop_assert_eq!(r.values[t], 0.0);
                }
            }
        }

        #[test]
        fn h_inverse_round_trips(p in any_profile(), u in 0.0f64..1.0) {
            let y = p.y_lower() - 2.0 + u * (p.y_star().min(p.y_lower() + 20.0) - p.y_lower() + 2.0);
            prop_assume!(p.h(y) > 1e-200);
            let back = p.h_inv(p.h(y)).unwrap();
            prop_assert!((back - y).abs() <= 1e-10 * y.abs().max(1.0), "{} vs {}", back, y);
        }

        #[test]
        fn h_is_decreasing_and_lipschitz(p in any_profile(), a in -5.0f64..10.0, d in 0.0f64..3.0) {
            let (ha, hb) = (p.h(a), p.h(a + d));
            prop_assert!(hb <= ha + 1e-12);
            prop_assert!(ha - hb <= d + 1e-12);
            prop_assert!(p.h(p.y_star()) <= 1e-12 || p.y_star().is_infinite());
        }

        #[test]
        fn renege_rate_is_continuous_at_zero(s2 in 0.1f64..5.0, h in 0.1f64..5.0) {
            let (a, b) = (renege_rate(1e-9, s2, h), renege_rate(0.0, s2, h));
            prop_assert!((a - b).abs() / b < 1e-7);
        }
    }
}
