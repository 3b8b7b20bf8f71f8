//! Stochastic primitives: interarrival times, service requirements and
//! initial lead times, drawn from independent seeded sub-streams.
//!
//! Each sequence owns one ChaCha8 stream derived from the run seed
//! (`set_stream(0)` interarrivals, `1` services, `2` lead times), so editing
//! one distribution never perturbs the draws of another. Stream `3` is
//! reserved for policy randomness.

use std::fmt;
use std::str::FromStr;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Exp};

use crate::error::{Error, Result};
use crate::scalar::Scalar;

pub const STREAM_INTERARRIVAL: u64 = 0;
pub const STREAM_SERVICE: u64 = 1;
pub const STREAM_LEAD: u64 = 2;
pub const STREAM_POLICY: u64 = 3;

/// Generator for sub-stream `stream` of run `seed`.
pub fn substream(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub enum DistributionSpec {
    Exponential { rate: f64 },
    Deterministic { value: f64 },
    Uniform { lo: f64, hi: f64 },
}

impl DistributionSpec {
    pub fn exponential(rate: f64) -> Result<Self> {
        Self::Exponential { rate }.validated()
    }

    pub fn deterministic(value: f64) -> Result<Self> {
        Self::Deterministic { value }.validated()
    }

    pub fn uniform(lo: f64, hi: f64) -> Result<Self> {
        Self::Uniform { lo, hi }.validated()
    }

    pub fn validated(self) -> Result<Self> {
        let ok = match self {
            Self::Exponential { rate } => rate.is_finite() && rate > 0.0,
            Self::Deterministic { value } => value.is_finite() && value > 0.0,
            Self::Uniform { lo, hi } => lo.is_finite() && hi.is_finite() && 0.0 < lo && lo <= hi,
        };
        if ok {
            Ok(self)
        } else {
            Err(Error::InvalidParameter(format!("distribution {self}")))
        }
    }

    pub fn mean(&self) -> f64 {
        match *self {
            Self::Exponential { rate } => 1.0 / rate,
            Self::Deterministic { value } => value,
            Self::Uniform { lo, hi } => 0.5 * (lo + hi),
        }
    }

    pub fn variance(&self) -> f64 {
        match *self {
            Self::Exponential { rate } => 1.0 / (rate * rate),
            Self::Deterministic { .. } => 0.0,
            Self::Uniform { lo, hi } => (hi - lo) * (hi - lo) / 12.0,
        }
    }

    pub fn std_dev(&self) -> f64 {
        self.variance().sqrt()
    }

    pub fn second_moment(&self) -> f64 {
        self.variance() + self.mean() * self.mean()
    }

    /// `E[e^{sX}]`, or `None` where it diverges.
    pub fn mgf(&self, s: f64) -> Option<f64> {
        match *self {
            Self::Exponential { rate } => (s < rate).then(|| rate / (rate - s)),
            Self::Deterministic { value } => Some((s * value).exp()),
            Self::Uniform { lo, hi } => {
                if s == 0.0 || hi == lo {
                    Some((s * lo).exp())
                } else {
                    Some(((s * hi).exp() - (s * lo).exp()) / (s * (hi - lo)))
                }
            }
        }
    }

    /// Smallest and largest point of the support.
    pub fn support(&self) -> (f64, f64) {
        match *self {
            Self::Exponential { .. } => (0.0, f64::INFINITY),
            Self::Deterministic { value } => (value, value),
            Self::Uniform { lo, hi } => (lo, hi),
        }
    }

    /// `P{X <= x}`.
    pub fn cdf(&self, x: f64) -> f64 {
        match *self {
            Self::Exponential { rate } => {
                if x <= 0.0 {
                    0.0
                } else {
                    -(-rate * x).exp_m1()
                }
            }
            Self::Deterministic { value } => {
                if x >= value {
                    1.0
                } else {
                    0.0
                }
            }
            Self::Uniform { lo, hi } => {
                if x < lo {
                    0.0
                } else if x >= hi {
                    1.0
                } else {
                    (x - lo) / (hi - lo)
                }
            }
        }
    }

    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        match *self {
            Self::Exponential { rate } => Exp::new(rate).expect("validated rate").sample(rng),
            Self::Deterministic { value } => value,
            Self::Uniform { lo, hi } => rng.random_range(lo..=hi),
        }
    }
}

impl fmt::Display for DistributionSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Self::Exponential { rate } => write!(f, "exponential rate={rate}"),
            Self::Deterministic { value } => write!(f, "deterministic value={value}"),
            Self::Uniform { lo, hi } => write!(f, "uniform lo={lo} hi={hi}"),
        }
    }
}

impl FromStr for DistributionSpec {
    type Err = Error;

    /// Parses `exponential rate=0.5` (or `mean=2`), `deterministic value=1.96`,
    /// `uniform lo=5 hi=200`.
    fn from_str(s: &str) -> Result<Self> {
        let mut words = s.split_whitespace();
        let family = words
            .next()
            .ok_or_else(|| Error::InvalidParameter("empty distribution".into()))?;
        let mut params: Vec<(&str, f64)> = Vec::new();
        for w in words {
            let (k, v) = w
                .split_once('=')
                .ok_or_else(|| Error::InvalidParameter(format!("expected key=value, got `{w}`")))?;
            let v: f64 = v
                .parse()
                .map_err(|_| Error::InvalidParameter(format!("`{k}` is not a number: `{v}`")))?;
            params.push((k, v));
        }
        let get = |key: &str| -> Result<f64> {
            params
                .iter()
                .find(|(k, _)| *k == key)
                .map(|(_, v)| *v)
                .ok_or_else(|| Error::InvalidParameter(format!("{family}: missing `{key}`")))
        };
        let allow = |keys: &[&str]| -> Result<()> {
            match params.iter().find(|(k, _)| !keys.contains(k)) {
                Some((k, _)) => Err(Error::InvalidParameter(format!(
                    "{family}: unknown parameter `{k}`"
                ))),
                None => Ok(()),
            }
        };
        match family {
            "exponential" => {
                allow(&["rate", "mean"])?;
                match (get("rate"), get("mean")) {
                    (Ok(r), Err(_)) => Self::exponential(r),
                    (Err(_), Ok(m)) => Self::exponential(1.0 / m),
                    (Ok(_), Ok(_)) => Err(Error::InvalidParameter(
                        "exponential: give either `rate` or `mean`".into(),
                    )),
                    (Err(e), Err(_)) => Err(e),
                }
            }
            "deterministic" => {
                allow(&["value"])?;
                Self::deterministic(get("value")?)
            }
            "uniform" => {
                allow(&["lo", "hi"])?;
                Self::uniform(get("lo")?, get("hi")?)
            }
            other => Err(Error::InvalidParameter(format!(
                "unknown distribution family `{other}`"
            ))),
        }
    }
}

/// Lead-time law on the unscaled time axis. Its support must be bounded.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct LeadTimeSpec {
    pub dist: DistributionSpec,
}

impl LeadTimeSpec {
    pub fn new(dist: DistributionSpec) -> Result<Self> {
        let dist = dist.validated()?;
        if !dist.support().1.is_finite() {
            return Err(Error::InvalidParameter(
                "lead-time distribution must have bounded support".into(),
            ));
        }
        Ok(Self { dist })
    }

    pub fn y_lo(&self) -> f64 {
        self.dist.support().0
    }

    pub fn y_hi(&self) -> f64 {
        self.dist.support().1
    }

    pub fn mean(&self) -> f64 {
        self.dist.mean()
    }

    pub fn is_constant(&self) -> bool {
        self.y_lo() == self.y_hi()
    }
}

/// One arrival. `arrival` is the running sum of gaps and `deadline = arrival + lead`.
#[derive(Clone, Debug, PartialEq)]
pub struct CustomerRecord<T = f64> {
    /// 1-based arrival index.
    pub index: u64,
    pub gap: T,
    pub service: T,
    pub lead: T,
    pub arrival: T,
    pub deadline: T,
}

/// The three laws driving a run.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct StreamSpec {
    pub interarrival: DistributionSpec,
    pub service: DistributionSpec,
    pub lead: LeadTimeSpec,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub enum StreamBound {
    Count(u64),
    /// Every customer arriving at or before this time.
    Horizon(f64),
}

/// Infinite seeded customer stream.
#[derive(Clone, Debug)]
pub struct CustomerStream {
    spec: StreamSpec,
    gaps: ChaCha8Rng,
    services: ChaCha8Rng,
    leads: ChaCha8Rng,
    clock: f64,
    index: u64,
}

impl CustomerStream {
    pub fn new(seed: u64, spec: StreamSpec) -> Result<Self> {
        spec.interarrival.validated()?;
        spec.service.validated()?;
        LeadTimeSpec::new(spec.lead.dist)?;
        Ok(Self {
            spec,
            gaps: substream(seed, STREAM_INTERARRIVAL),
            services: substream(seed, STREAM_SERVICE),
            leads: substream(seed, STREAM_LEAD),
            clock: 0.0,
            index: 0,
        })
    }
}

impl Iterator for CustomerStream {
    type Item = CustomerRecord<f64>;

    fn next(&mut self) -> Option<Self::Item> {
        let mut gap = self.spec.interarrival.sample(&mut self.gaps);
        // An exponential draw of exactly zero would collide two arrivals.
        while gap <= 0.0 {
            gap = self.spec.interarrival.sample(&mut self.gaps);
        }
        let service = self.spec.service.sample(&mut self.services);
        let lead = self.spec.lead.dist.sample(&mut self.leads);
        self.clock += gap;
        self.index += 1;
        Some(CustomerRecord {
            index: self.index,
            gap,
            service,
            lead,
            arrival: self.clock,
            deadline: self.clock + lead,
        })
    }
}

/// Materializes a bounded stream.
pub fn generate_stream(
    seed: u64,
    spec: StreamSpec,
    bound: StreamBound,
) -> Result<Vec<CustomerRecord<f64>>> {
    let stream = CustomerStream::new(seed, spec)?;
    match bound {
        StreamBound::Count(n) => Ok(stream.take(n as usize).collect()),
        StreamBound::Horizon(h) => {
            if !(h > 0.0) {
                return Err(Error::NonPositiveHorizon(h));
            }
            Ok(stream.take_while(|c| c.arrival <= h).collect())
        }
    }
}

/// Builds records from explicit gap, service and lead lists.
pub fn from_trace<T: Scalar>(gaps: &[T], services: &[T], leads: &[T]) -> Result<Vec<CustomerRecord<T>>> {
    if gaps.len() != services.len() || gaps.len() != leads.len() {
        return Err(Error::InvalidParameter(format!(
            "trace lists differ in length: {} gaps, {} services, {} leads",
            gaps.len(),
            services.len(),
            leads.len()
        )));
    }
    let mut clock = T::zero();
    let mut out = Vec::with_capacity(gaps.len());
    for (i, ((u, v), l)) in gaps.iter().zip(services).zip(leads).enumerate() {
        if !(*u > T::zero() && *v > T::zero() && *l > T::zero()) {
            return Err(Error::InvalidParameter(format!(
                "trace entry {} must have positive gap, service and lead",
                i + 1
            )));
        }
        clock = clock + u.clone();
        out.push(CustomerRecord {
            index: i as u64 + 1,
            gap: u.clone(),
            service: v.clone(),
            lead: l.clone(),
            arrival: clock.clone(),
            deadline: clock.clone() + l.clone(),
        });
    }
    Ok(out)
}

/// First- and second-order traffic parameters of the arrival and service laws.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct TrafficParams {
    pub lambda: f64,
    pub mu: f64,
    /// Standard deviation of the interarrival time.
    pub alpha: f64,
    /// Standard deviation of the service time.
    pub beta: f64,
    pub rho: f64,
    pub sigma2: f64,
    pub theta: f64,
}

pub fn traffic_params(interarrival: &DistributionSpec, service: &DistributionSpec) -> Result<TrafficParams> {
    interarrival.validated()?;
    service.validated()?;
    let lambda = 1.0 / interarrival.mean();
    let mu = 1.0 / service.mean();
    let alpha = interarrival.std_dev();
    let beta = service.std_dev();
    let sigma2 = lambda * (alpha * alpha + beta * beta);
    if !(sigma2 > 0.0) {
        return Err(Error::Degenerate(
            "interarrival and service times are both deterministic".into(),
        ));
    }
    let rho = lambda / mu;
    Ok(TrafficParams {
        lambda,
        mu,
        alpha,
        beta,
        rho,
        sigma2,
        theta: 2.0 * (1.0 - rho) / sigma2,
    })
}
