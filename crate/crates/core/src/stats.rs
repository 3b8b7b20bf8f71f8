//! Steady-state estimation and heavy-traffic checks on simulated runs.
//!
//! Long runs are not stored; observers sample the live system on a time grid
//! and the estimators work from those samples. The long-run estimates
//! assume that letting time and the scaling level grow can be done in either
//! order; nothing here checks that interchange.

use std::fmt::Write as _;

use statrs::distribution::{ContinuousCDF, StudentsT};

use crate::diffusion::LeadProfile;
use crate::error::{Error, Result};
use crate::primitives::{DistributionSpec, LeadTimeSpec, StreamSpec};
use crate::scalar::fmt_sig17;
use crate::simulator::{EventKinds, Mode, Observer, SystemState, SystemTrajectory};

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct BatchConfig {
    pub batches: usize,
    /// Fraction of the observed time discarded at the start.
    pub warmup: f64,
}

impl Default for BatchConfig {
    fn default() -> Self {
        Self {
            batches: 32,
            warmup: 0.05,
        }
    }
}

impl BatchConfig {
    fn validated(self) -> Result<Self> {
        if self.batches < 10 {
            return Err(Error::InvalidParameter(format!(
                "at least 10 batches needed, got {}",
                self.batches
            )));
        }
        if !(0.0..1.0).contains(&self.warmup) {
            return Err(Error::InvalidParameter(format!("warm-up fraction {}", self.warmup)));
        }
        Ok(self)
    }
}

/// Point estimate with a 95% batch-means interval.
#[derive(Clone, Debug, PartialEq)]
pub struct SteadyEstimate {
    pub metric: String,
    pub point: f64,
    pub ci_half: f64,
    pub batches: usize,
    pub warmup: f64,
}

pub const ESTIMATES_CSV_HEADER: &str = "metric,point,ci_half,batches,warmup";

impl SteadyEstimate {
    pub fn csv_row(&self) -> String {
        format!(
            "{},{},{},{},{}",
            self.metric,
            fmt_sig17(self.point),
            fmt_sig17(self.ci_half),
            self.batches,
            self.warmup
        )
    }

    pub fn covers(&self, x: f64) -> bool {
        (self.point - x).abs() <= self.ci_half
    }
}

fn t_half_width(values: &[f64]) -> f64 {
    let b = values.len() as f64;
    let mean = values.iter().sum::<f64>() / b;
    let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (b - 1.0);
    if var == 0.0 {
        return 0.0;
    }
    let t = StudentsT::new(0.0, 1.0, b - 1.0)
        .expect("positive degrees of freedom")
        .inverse_cdf(0.975);
    t * (var / b).sqrt()
}

/// Batch means of already-formed batch values.
pub fn batch_means(metric: &str, batch_values: &[f64], warmup: f64) -> Result<SteadyEstimate> {
    if batch_values.len() < 10 {
        return Err(Error::InsufficientData(format!(
            "{metric}: {} batches, at least 10 needed",
            batch_values.len()
        )));
    }
    Ok(SteadyEstimate {
        metric: metric.to_string(),
        point: batch_values.iter().sum::<f64>() / batch_values.len() as f64,
        ci_half: t_half_width(batch_values),
        batches: batch_values.len(),
        warmup,
    })
}

/// Cumulative counters sampled on a time grid (left limits at grid times).
#[derive(Clone, Debug, Default, PartialEq)]
pub struct TraceSample {
    pub time: f64,
    pub arrivals: u64,
    pub arrived_work: f64,
    pub reneged_customers: u64,
    pub reneged_work: f64,
    pub late_customers: u64,
    pub late_work: f64,
    pub late_service: f64,
    pub work: f64,
    pub queue: u64,
    pub frontier: f64,
    /// Time spent with workload above the trace level.
    pub time_above: f64,
}

/// Observer that records a [`TraceSample`] at each grid time. Run the
/// simulation with `SimOptions::sample_every` equal to [`CounterTrace::every`].
#[derive(Clone, Debug)]
pub struct CounterTrace {
    pub mode: Option<Mode>,
    pub every: f64,
    pub level: Option<f64>,
    pub samples: Vec<TraceSample>,
    last_time: f64,
    last_work: f64,
    above: f64,
}

impl CounterTrace {
    pub fn new(every: f64) -> Self {
        Self {
            mode: None,
            every,
            level: None,
            samples: Vec::new(),
            last_time: 0.0,
            last_work: 0.0,
            above: 0.0,
        }
    }

    /// Also accumulates the time the workload spends above `level`.
    pub fn with_level(mut self, level: f64) -> Self {
        self.level = Some(level);
        self
    }

    fn sample(&self, state: &SystemState<f64>) -> TraceSample {
        TraceSample {
            time: state.time(),
            arrivals: state.arrivals(),
            arrived_work: state.arrived_work(),
            reneged_customers: state.reneged_customers(),
            reneged_work: state.reneged_work(),
            late_customers: state.late_customers(),
            late_work: state.late_work(),
            late_service: state.late_service(),
            work: state.total_work(),
            queue: state.queue_len(),
            frontier: state.frontier(),
            time_above: self.above,
        }
    }

    /// Samples a stored trajectory on the grid `k·every`, `k ≥ 0`.
    pub fn from_trajectory(traj: &SystemTrajectory<f64>, every: f64) -> Result<Self> {
        if !(every > 0.0) {
            return Err(Error::InvalidParameter(format!("grid spacing {every}")));
        }
        let mut out = Self::new(every);
        out.mode = Some(traj.mode);
        let mut k = 0u64;
        loop {
            let t = k as f64 * every;
            if t > traj.horizon {
                break;
            }
            let s = if k == 0 { traj.initial.clone() } else { traj.left_limit(&t) };
            out.samples.push(TraceSample {
                time: t,
                arrivals: s.arrivals,
                arrived_work: s.arrived_work,
                reneged_customers: s.reneged_customers,
                reneged_work: s.reneged_work,
                late_customers: s.late_customers,
                late_work: s.late_work,
                late_service: 0.0,
                work: s.total_work,
                queue: s.queue_len,
                frontier: s.frontier,
                time_above: 0.0,
            });
            k += 1;
        }
        Ok(out)
    }

    fn post_warmup(&self, warmup: f64) -> &[TraceSample] {
        let end = self.samples.last().map(|s| s.time).unwrap_or(0.0);
        let start = self.samples.partition_point(|s| s.time < warmup * end);
        &self.samples[start..]
    }
}

impl Observer<f64> for CounterTrace {
    fn start(&mut self, state: &SystemState<f64>) {
        self.mode = Some(state.mode());
        self.last_time = state.time();
        self.last_work = state.total_work();
        self.samples.push(self.sample(state));
    }

    fn before_event(&mut self, kinds: EventKinds, state: &SystemState<f64>) {
        if let Some(level) = self.level {
            // Workload falls at unit rate between epochs.
            let dt = state.time() - self.last_time;
            self.above += dt.min((self.last_work - level).max(0.0));
        }
        if kinds.contains(EventKinds::SAMPLE) {
            self.samples.push(self.sample(state));
        }
    }

    fn after_event(&mut self, _kinds: EventKinds, state: &SystemState<f64>) {
        self.last_time = state.time();
        self.last_work = state.total_work();
    }
}

type Metric = (&'static str, fn(&TraceSample) -> f64, fn(&TraceSample) -> f64);

const STANDARD_METRICS: [Metric; 3] = [
    ("late_customers", |s| s.late_customers as f64, |s| s.arrivals as f64),
    ("late_work", |s| s.late_work, |s| s.arrived_work),
    ("late_service", |s| s.late_service, |s| s.arrived_work),
];

const RENEGING_METRICS: [Metric; 2] = [
    ("reneged_customers", |s| s.reneged_customers as f64, |s| s.arrivals as f64),
    ("reneged_work", |s| s.reneged_work, |s| s.arrived_work),
];

const TIME_ABOVE: Metric = ("time_above_level", |s| s.time_above, |s| s.time);

/// Long-run fractions from a trace: per batch, the counter increment over
/// the increment of arrivals (customers) or arrived work (work). The point
/// estimate is the ratio of post-warm-up totals.
pub fn long_run_fractions(trace: &CounterTrace, cfg: &BatchConfig) -> Result<Vec<SteadyEstimate>> {
    let cfg = cfg.validated()?;
    let samples = trace.post_warmup(cfg.warmup);
    if samples.len() < cfg.batches + 1 {
        return Err(Error::InsufficientData(format!(
            "{} post-warm-up samples for {} batches",
            samples.len(),
            cfg.batches
        )));
    }
    let bounds: Vec<&TraceSample> = (0..=cfg.batches)
        .map(|k| &samples[k * (samples.len() - 1) / cfg.batches])
        .collect();
    let mut metrics: Vec<Metric> = match trace.mode {
        Some(Mode::Standard) => STANDARD_METRICS.to_vec(),
        _ => RENEGING_METRICS.to_vec(),
    };
    if trace.level.is_some() {
        metrics.push(TIME_ABOVE);
    }
    let mut out = Vec::new();
    for (name, num, den) in metrics {
        let ratios: Vec<f64> = bounds
            .windows(2)
            .map(|w| {
                let d = den(w[1]) - den(w[0]);
                if d > 0.0 {
                    (num(w[1]) - num(w[0])) / d
                } else {
                    0.0
                }
            })
            .collect();
        let (first, last) = (bounds[0], bounds[cfg.batches]);
        let total_den = den(last) - den(first);
        if !(total_den > 0.0) {
            return Err(Error::InsufficientData(format!("{name}: nothing arrived after warm-up")));
        }
        out.push(SteadyEstimate {
            metric: name.to_string(),
            // A customer counted before the window can turn late inside it,
            // so short windows can overshoot.
            point: ((num(last) - num(first)) / total_den).clamp(0.0, 1.0),
            ci_half: t_half_width(&ratios),
            batches: cfg.batches,
            warmup: cfg.warmup,
        });
    }
    Ok(out)
}

pub fn estimates_csv(estimates: &[SteadyEstimate]) -> String {
    let mut out = String::from(ESTIMATES_CSV_HEADER);
    out.push('\n');
    for e in estimates {
        let _ = writeln!(out, "{}", e.csv_row());
    }
    out
}

/// Paths rescaled as `Ẑ(t) = Z(nt)/√n` on a uniform grid of scaled time.
#[derive(Clone, Debug, PartialEq)]
pub struct ScaledPath {
    pub n: f64,
    pub dt: f64,
    pub work: Vec<f64>,
    pub queue: Vec<f64>,
    pub frontier: Vec<f64>,
    pub reneged_work: Vec<f64>,
}

impl ScaledPath {
    pub fn len(&self) -> usize {
        self.work.len()
    }

    pub fn is_empty(&self) -> bool {
        self.work.is_empty()
    }

    /// Scales once more by `m`, keeping the grid spacing.
    pub fn rescale(&self, m: usize) -> Result<ScaledPath> {
        if m == 0 {
            return Err(Error::InvalidParameter("scaling factor 0".into()));
        }
        let r = (m as f64).sqrt();
        let pick = |v: &[f64]| v.iter().step_by(m).map(|x| x / r).collect::<Vec<_>>();
        let out = ScaledPath {
            n: self.n * m as f64,
            dt: self.dt,
            work: pick(&self.work),
            queue: pick(&self.queue),
            frontier: pick(&self.frontier),
            reneged_work: pick(&self.reneged_work),
        };
        if out.len() < 2 {
            return Err(Error::InsufficientData("horizon too short for this scaling".into()));
        }
        Ok(out)
    }
}

/// Scaled work, queue length, frontier and reneged work at scaled times
/// `k·dt`. The trace grid must divide `n·dt`.
pub fn scale_path(trace: &CounterTrace, n: f64, dt: f64) -> Result<ScaledPath> {
    if !(n >= 1.0 && dt > 0.0) {
        return Err(Error::InvalidParameter(format!("n {n}, dt {dt}")));
    }
    let ratio = n * dt / trace.every;
    let m = ratio.round();
    if m < 1.0 || (ratio - m).abs() > 1e-9 * ratio {
        return Err(Error::InvalidParameter(format!(
            "trace spacing {} does not divide n·dt = {}",
            trace.every,
            n * dt
        )));
    }
    let r = n.sqrt();
    let picked: Vec<&TraceSample> = trace.samples.iter().step_by(m as usize).collect();
    if picked.len() < 2 {
        return Err(Error::InsufficientData("horizon too short for this scaling".into()));
    }
    Ok(ScaledPath {
        n,
        dt,
        work: picked.iter().map(|s| s.work / r).collect(),
        queue: picked.iter().map(|s| s.queue as f64 / r).collect(),
        frontier: picked.iter().map(|s| s.frontier / r).collect(),
        reneged_work: picked.iter().map(|s| s.reneged_work / r).collect(),
    })
}

/// `sup_t |H(F(t)) - W(t)|/√n` over the post-warm-up grid, with `H` the
/// integrated tail of the unscaled lead-time law.
pub fn frontier_relation_check(trace: &CounterTrace, lead: &LeadTimeSpec, n: f64, warmup: f64) -> Result<f64> {
    let h = LeadProfile::new(lead.dist, 1.0)?;
    let samples = trace.post_warmup(warmup);
    if samples.is_empty() {
        return Err(Error::InsufficientData("no samples after warm-up".into()));
    }
    Ok(samples
        .iter()
        .map(|s| (h.h(s.frontier) - s.work).abs())
        .fold(0.0, f64::max)
        / n.sqrt())
}

/// Least-squares slope through the origin of queue length on workload.
pub fn queue_work_proportionality(trace: &CounterTrace, warmup: f64) -> Result<f64> {
    let samples = trace.post_warmup(warmup);
    let (mut qw, mut ww) = (0.0, 0.0);
    for s in samples {
        qw += s.queue as f64 * s.work;
        ww += s.work * s.work;
    }
    if ww == 0.0 {
        return Err(Error::Degenerate("workload is zero at every sample".into()));
    }
    Ok(qw / ww)
}

/// Observer comparing the scaled workload tail `Ŵ(t)(y, ∞)` with the limit
/// profile `H(y ∨ F̂(t))` on a grid of scaled `y`, averaged over grid times
/// after `warmup_time`.
#[derive(Clone, Debug)]
pub struct ProfileCheck {
    profile: LeadProfile,
    n: f64,
    y_grid: Vec<f64>,
    warmup_time: f64,
    total: f64,
    count: u64,
}

impl ProfileCheck {
    /// `profile` is the scaled profile at level `n`; `y_grid` must be
    /// increasing and uniformly spaced.
    pub fn new(profile: LeadProfile, n: f64, y_grid: Vec<f64>, warmup_time: f64) -> Result<Self> {
        if y_grid.len() < 2 || y_grid.windows(2).any(|w| !(w[1] > w[0])) {
            return Err(Error::InvalidParameter("y grid must be increasing".into()));
        }
        Ok(Self {
            profile,
            n,
            y_grid,
            warmup_time,
            total: 0.0,
            count: 0,
        })
    }

    /// Uniform grid of `points` values on `[y_*, y*]` of the profile.
    pub fn default_grid(profile: &LeadProfile, points: usize) -> Vec<f64> {
        let (a, b) = (profile.y_lower().min(0.0), profile.y_star());
        (0..points)
            .map(|k| a + (b - a) * k as f64 / (points - 1) as f64)
            .collect()
    }

    /// Time-averaged L¹ distance; `None` before any sample.
    pub fn statistic(&self) -> Option<f64> {
        (self.count > 0).then(|| self.total / self.count as f64)
    }

    /// L¹ distance over the y-grid for one scaled measure and frontier.
    pub fn distance(&self, tail: impl Fn(f64) -> f64, frontier: f64) -> f64 {
        let dy = self.y_grid[1] - self.y_grid[0];
        self.y_grid
            .iter()
            .map(|&y| (tail(y) - self.profile.h(y.max(frontier))).abs() * dy)
            .sum()
    }
}

impl Observer<f64> for ProfileCheck {
    fn before_event(&mut self, kinds: EventKinds, state: &SystemState<f64>) {
        if !kinds.contains(EventKinds::SAMPLE) || state.time() < self.warmup_time {
            return;
        }
        let r = self.n.sqrt();
        let m = state.workload_measure();
        let f = state.frontier() / r;
        let d = self.distance(|y| m.mass_above(&(y * r)) / r, f);
        self.total += d;
        self.count += 1;
    }
}

/// Empirical renege rate against the reflected-diffusion local-time rate.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct RenegeRateCheck {
    /// `R_W(T)/T` after warm-up, unscaled.
    pub empirical: f64,
    pub ci_half: f64,
    /// `(1-ρ)/(e^{θD̄} - 1)`, unscaled.
    pub theory: f64,
    /// Both multiplied by `√n`: the rate of the scaled process.
    pub empirical_scaled: f64,
    pub theory_scaled: f64,
}

pub fn renege_local_time_check(
    trace: &CounterTrace,
    rho: f64,
    sigma2: f64,
    mean_lead: f64,
    n: f64,
    cfg: &BatchConfig,
) -> Result<RenegeRateCheck> {
    let cfg = cfg.validated()?;
    let samples = trace.post_warmup(cfg.warmup);
    if samples.len() < cfg.batches + 1 {
        return Err(Error::InsufficientData("too few samples".into()));
    }
    let bounds: Vec<&TraceSample> = (0..=cfg.batches)
        .map(|k| &samples[k * (samples.len() - 1) / cfg.batches])
        .collect();
    let rates: Vec<f64> = bounds
        .windows(2)
        .map(|w| (w[1].reneged_work - w[0].reneged_work) / (w[1].time - w[0].time))
        .collect();
    let (a, b) = (bounds[0], bounds[cfg.batches]);
    let empirical = (b.reneged_work - a.reneged_work) / (b.time - a.time);
    let theory = crate::diffusion::renege_rate(1.0 - rho, sigma2, mean_lead);
    let r = n.sqrt();
    Ok(RenegeRateCheck {
        empirical,
        ci_half: t_half_width(&rates),
        theory,
        empirical_scaled: empirical * r,
        theory_scaled: theory * r,
    })
}

/// Member `n` of the heavy-traffic family through `base` (taken as `n = 1`):
/// same arrival law, service mean set so that `1 - ρ_n = (1 - ρ_1)/√n`, and
/// lead times multiplied by `√n`.
pub fn heavy_traffic_member(base: &StreamSpec, n: f64) -> Result<StreamSpec> {
    if !(n >= 1.0) {
        return Err(Error::InvalidParameter(format!("scaling level {n}")));
    }
    let lambda = 1.0 / base.interarrival.mean();
    let rho1 = lambda * base.service.mean();
    let rho = 1.0 - (1.0 - rho1) / n.sqrt();
    let mean = rho / lambda;
    let k = mean / base.service.mean();
    let service = match base.service {
        DistributionSpec::Exponential { .. } => DistributionSpec::exponential(1.0 / mean)?,
        DistributionSpec::Deterministic { .. } => DistributionSpec::deterministic(mean)?,
        DistributionSpec::Uniform { lo, hi } => DistributionSpec::uniform(lo * k, hi * k)?,
    };
    let r = n.sqrt();
    let lead = match base.lead.dist {
        DistributionSpec::Exponential { rate } => DistributionSpec::exponential(rate / r)?,
        DistributionSpec::Deterministic { value } => DistributionSpec::deterministic(value * r)?,
        DistributionSpec::Uniform { lo, hi } => DistributionSpec::uniform(lo * r, hi * r)?,
    };
    Ok(StreamSpec {
        interarrival: base.interarrival,
        service,
        lead: LeadTimeSpec::new(lead)?,
    })
}
