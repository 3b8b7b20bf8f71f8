//! Experiment configuration, read from TOML.

use std::path::{Path, PathBuf};

use anyhow::{anyhow, bail, Context, Result};
use edfq::primitives::{DistributionSpec, LeadTimeSpec, StreamSpec};
use edfq::scalar::parse_exact;
use edfq::{Exact, Scalar};
use serde::Deserialize;

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawConfig {
    out: Option<PathBuf>,
    primitives: Option<RawPrimitives>,
    #[serde(default)]
    run: RawRun,
    sweep: Option<RawSweep>,
    diffusion: Option<RawDiffusion>,
    trace: Option<RawTrace>,
    #[serde(default)]
    audit: RawAudit,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawPrimitives {
    interarrival: String,
    service: String,
    lead: String,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawRun {
    #[serde(default = "default_policies")]
    policies: Vec<String>,
    horizon: Option<f64>,
    arrivals: Option<u64>,
    #[serde(default = "default_seeds")]
    seeds: Vec<u64>,
    sample_every: Option<f64>,
    #[serde(default = "default_batches")]
    batches: usize,
    #[serde(default = "default_warmup")]
    warmup: f64,
}

impl Default for RawRun {
    fn default() -> Self {
        Self {
            policies: default_policies(),
            horizon: None,
            arrivals: None,
            seeds: default_seeds(),
            sample_every: None,
            batches: default_batches(),
            warmup: default_warmup(),
        }
    }
}

fn default_policies() -> Vec<String> {
    vec!["edf_reneging".into(), "edf_standard".into()]
}

fn default_seeds() -> Vec<u64> {
    vec![1]
}

fn default_batches() -> usize {
    32
}

fn default_warmup() -> f64 {
    0.05
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawSweep {
    #[serde(default = "default_lead_lo")]
    lead_lo: f64,
    b: Vec<f64>,
}

fn default_lead_lo() -> f64 {
    5.0
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawDiffusion {
    gamma: Vec<f64>,
    #[serde(default = "one")]
    sigma2: f64,
    #[serde(default = "one")]
    h0: f64,
    #[serde(default = "default_dt")]
    dt: f64,
    #[serde(default = "default_diffusion_horizon")]
    horizon: f64,
    #[serde(default = "default_diffusion_seeds")]
    seeds: u64,
    #[serde(default)]
    base_seed: u64,
    #[serde(default = "default_bins")]
    bins: usize,
}

fn one() -> f64 {
    1.0
}

fn default_dt() -> f64 {
    1e-4
}

fn default_diffusion_horizon() -> f64 {
    200.0
}

fn default_diffusion_seeds() -> u64 {
    100
}

fn default_bins() -> usize {
    50
}

/// A number written as a TOML integer, float or string (`"3/2"`, `"0.1"`).
#[derive(Clone, Debug, Deserialize)]
#[serde(untagged)]
pub enum Number {
    Int(i64),
    Float(f64),
    Text(String),
}

impl Number {
    /// Integers and strings convert without rounding; floats convert their
    /// binary value.
    pub fn to_exact(&self) -> Result<Exact> {
        Ok(match self {
            Number::Int(i) => Exact::from_integer((*i).into()),
            Number::Float(x) => {
                if !x.is_finite() {
                    bail!("non-finite value {x}");
                }
                Exact::from_f64(*x)
            }
            Number::Text(s) => parse_exact(s)?,
        })
    }

    pub fn to_f64(&self) -> Result<f64> {
        Ok(match self {
            Number::Int(i) => *i as f64,
            Number::Float(x) => *x,
            Number::Text(s) => match s.trim().parse::<f64>() {
                Ok(x) => x,
                Err(_) => parse_exact(s)?.to_f64(),
            },
        })
    }
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawTrace {
    gaps: Vec<Number>,
    services: Vec<Number>,
    leads: Vec<Number>,
    horizon: Option<Number>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawAudit {
    #[serde(default = "default_streams")]
    streams: usize,
    #[serde(default = "default_customers")]
    customers: u64,
    #[serde(default = "yes")]
    reference: bool,
    #[serde(default = "yes")]
    policy_suite: bool,
    eps: Option<f64>,
}

impl Default for RawAudit {
    fn default() -> Self {
        Self {
            streams: default_streams(),
            customers: default_customers(),
            reference: true,
            policy_suite: true,
            eps: None,
        }
    }
}

fn default_streams() -> usize {
    100
}

fn default_customers() -> u64 {
    200
}

fn yes() -> bool {
    true
}

/// How long a random run lasts.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum RunLength {
    Horizon(f64),
    Arrivals(u64),
}

pub const POLICY_NAMES: [&str; 6] = [
    "edf_reneging",
    "edf_standard",
    "fifo_reneging",
    "lifo_reneging",
    "random_reneging",
    "hybrid",
];

#[derive(Clone, Debug)]
pub struct SweepConfig {
    pub lead_lo: f64,
    pub b: Vec<f64>,
}

#[derive(Clone, Debug)]
pub struct DiffusionConfig {
    pub gamma: Vec<f64>,
    pub sigma2: f64,
    pub h0: f64,
    pub dt: f64,
    pub horizon: f64,
    pub seeds: u64,
    pub base_seed: u64,
    pub bins: usize,
}

#[derive(Clone, Debug)]
pub struct TraceConfig {
    pub gaps: Vec<Number>,
    pub services: Vec<Number>,
    pub leads: Vec<Number>,
    pub horizon: Option<Number>,
}

#[derive(Clone, Debug)]
pub struct AuditConfig {
    pub streams: usize,
    pub customers: u64,
    pub reference: bool,
    pub policy_suite: bool,
    pub eps: Option<f64>,
}

/// Validated configuration of one run.
#[derive(Clone, Debug)]
pub struct ExperimentConfig {
    pub out: PathBuf,
    pub primitives: Option<StreamSpec>,
    pub policies: Vec<String>,
    pub length: Option<RunLength>,
    pub seeds: Vec<u64>,
    pub sample_every: Option<f64>,
    pub batches: usize,
    pub warmup: f64,
    pub sweep: Option<SweepConfig>,
    pub diffusion: Option<DiffusionConfig>,
    pub trace: Option<TraceConfig>,
    pub audit: AuditConfig,
}

/// Command-line values that take precedence over the file.
#[derive(Clone, Debug, Default)]
pub struct Overrides {
    pub seed: Option<u64>,
    pub out: Option<PathBuf>,
    pub warmup: Option<f64>,
}

fn distribution(field: &str, text: &str) -> Result<DistributionSpec> {
    text.parse::<DistributionSpec>()
        .map_err(|e| anyhow!("{field}: {e}"))
}

impl ExperimentConfig {
    pub fn load(path: &Path, overrides: &Overrides) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .with_context(|| format!("cannot read config {}", path.display()))?;
        Self::parse(&text, overrides).with_context(|| format!("in {}", path.display()))
    }

    pub fn parse(text: &str, overrides: &Overrides) -> Result<Self> {
        let raw: RawConfig = toml::from_str(text).map_err(|e| anyhow!("{e}"))?;
        let primitives = match raw.primitives {
            Some(p) => {
                let interarrival = distribution("primitives.interarrival", &p.interarrival)?;
                let service = distribution("primitives.service", &p.service)?;
                let lead = LeadTimeSpec::new(distribution("primitives.lead", &p.lead)?)
                    .map_err(|e| anyhow!("primitives.lead: {e}"))?;
                Some(StreamSpec {
                    interarrival,
                    service,
                    lead,
                })
            }
            None => None,
        };

        let run = raw.run;
        if run.policies.is_empty() {
            bail!("run.policies: list is empty");
        }
        for p in &run.policies {
            if !POLICY_NAMES.contains(&p.as_str()) {
                bail!(
                    "run.policies: unknown policy `{p}` (expected one of {})",
                    POLICY_NAMES.join(", ")
                );
            }
        }
        let length = match (run.horizon, run.arrivals) {
            (Some(_), Some(_)) => bail!("run: give either `horizon` or `arrivals`, not both"),
            (Some(h), None) if !(h > 0.0 && h.is_finite()) => {
                bail!("run.horizon: must be positive, got {h}")
            }
            (Some(h), None) => Some(RunLength::Horizon(h)),
            (None, Some(0)) => bail!("run.arrivals: must be positive"),
            (None, Some(n)) => Some(RunLength::Arrivals(n)),
            (None, None) => None,
        };
        let seeds = match overrides.seed {
            Some(s) => vec![s],
            None => run.seeds,
        };
        if seeds.is_empty() {
            bail!("run.seeds: at least one seed is required");
        }
        if let Some(dt) = run.sample_every {
            if !(dt > 0.0) {
                bail!("run.sample_every: must be positive, got {dt}");
            }
        }
        if run.batches < 10 {
            bail!("run.batches: at least 10 needed, got {}", run.batches);
        }
        let warmup = overrides.warmup.unwrap_or(run.warmup);
        if !(0.0..1.0).contains(&warmup) {
            bail!("run.warmup: must lie in [0, 1), got {warmup}");
        }

        let sweep = match raw.sweep {
            Some(s) => {
                if s.b.is_empty() {
                    bail!("sweep.b: list is empty");
                }
                if let Some(b) = s.b.iter().find(|&&b| !(b >= s.lead_lo)) {
                    bail!("sweep.b: {b} is below sweep.lead_lo = {}", s.lead_lo);
                }
                if !(s.lead_lo > 0.0) {
                    bail!("sweep.lead_lo: must be positive");
                }
                Some(SweepConfig {
                    lead_lo: s.lead_lo,
                    b: s.b,
                })
            }
            None => None,
        };

        let diffusion = match raw.diffusion {
            Some(d) => {
                if d.gamma.is_empty() {
                    bail!("diffusion.gamma: list is empty");
                }
                for (name, v) in [
                    ("sigma2", d.sigma2),
                    ("h0", d.h0),
                    ("dt", d.dt),
                    ("horizon", d.horizon),
                ] {
                    if !(v > 0.0 && v.is_finite()) {
                        bail!("diffusion.{name}: must be positive, got {v}");
                    }
                }
                if d.seeds < 2 {
                    bail!("diffusion.seeds: at least 2 needed");
                }
                Some(DiffusionConfig {
                    gamma: d.gamma,
                    sigma2: d.sigma2,
                    h0: d.h0,
                    dt: d.dt,
                    horizon: d.horizon,
                    seeds: d.seeds,
                    base_seed: overrides.seed.unwrap_or(d.base_seed),
                    bins: d.bins,
                })
            }
            None => None,
        };

        let trace = match raw.trace {
            Some(t) => {
                let n = t.gaps.len();
                if n == 0 {
                    bail!("trace.gaps: list is empty");
                }
                if t.services.len() != n || t.leads.len() != n {
                    bail!(
                        "trace: gaps, services and leads differ in length ({n}, {}, {})",
                        t.services.len(),
                        t.leads.len()
                    );
                }
                for (name, list) in [("gaps", &t.gaps), ("services", &t.services), ("leads", &t.leads)] {
                    for (i, v) in list.iter().enumerate() {
                        v.to_exact().map_err(|e| anyhow!("trace.{name}[{i}]: {e}"))?;
                    }
                }
                if let Some(h) = &t.horizon {
                    h.to_exact().map_err(|e| anyhow!("trace.horizon: {e}"))?;
                }
                Some(TraceConfig {
                    gaps: t.gaps,
                    services: t.services,
                    leads: t.leads,
                    horizon: t.horizon,
                })
            }
            None => None,
        };

        if let Some(eps) = raw.audit.eps {
            if !(eps >= 0.0) {
                bail!("audit.eps: must be nonnegative, got {eps}");
            }
        }
        if raw.audit.customers == 0 {
            bail!("audit.customers: must be positive");
        }

        Ok(Self {
            out: overrides
                .out
                .clone()
                .or(raw.out)
                .unwrap_or_else(|| PathBuf::from("out")),
            primitives,
            policies: run.policies,
            length,
            seeds,
            sample_every: run.sample_every,
            batches: run.batches,
            warmup,
            sweep,
            diffusion,
            trace,
            audit: AuditConfig {
                streams: raw.audit.streams,
                customers: raw.audit.customers,
                reference: raw.audit.reference,
                policy_suite: raw.audit.policy_suite,
                eps: raw.audit.eps,
            },
        })
    }

    pub fn require_primitives(&self) -> Result<StreamSpec> {
        self.primitives
            .ok_or_else(|| anyhow!("the [primitives] section is required for this command"))
    }

    pub fn require_length(&self) -> Result<RunLength> {
        self.length
            .ok_or_else(|| anyhow!("run: `horizon` or `arrivals` is required for this command"))
    }
}
