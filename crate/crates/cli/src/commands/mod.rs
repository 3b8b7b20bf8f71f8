pub mod audit;
pub mod diffusion;
pub mod predict;
pub mod simulate;
pub mod sweep;

use std::fmt::Write as _;
use std::path::Path;

use anyhow::{Context, Result};
use edfq::primitives::{from_trace, CustomerRecord, CustomerStream, StreamSpec};
use edfq::scalar::fmt_sig17;
use edfq::simulator::{hybrid_flags, PolicySpec};
use edfq::{AtomicMeasure, Exact, Scalar};

use crate::config::{Number, RunLength, TraceConfig};

/// Result of a command that ran to completion.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Outcome {
    Pass,
    /// An audited invariant failed.
    Fail,
}

/// Scalars the CLI can read from a config and print back.
pub trait CliScalar: Scalar {
    fn from_number(n: &Number) -> Result<Self>;
    fn render(&self) -> String;
}

impl CliScalar for f64 {
    fn from_number(n: &Number) -> Result<Self> {
        n.to_f64()
    }
    fn render(&self) -> String {
        fmt_sig17(*self)
    }
}

impl CliScalar for Exact {
    fn from_number(n: &Number) -> Result<Self> {
        n.to_exact()
    }
    fn render(&self) -> String {
        self.to_string()
    }
}

pub fn write_file(dir: &Path, name: &str, contents: &str) -> Result<()> {
    let path = dir.join(name);
    std::fs::write(&path, contents).with_context(|| format!("cannot write {}", path.display()))
}

pub fn ensure_dir(dir: &Path) -> Result<()> {
    std::fs::create_dir_all(dir).with_context(|| format!("cannot create {}", dir.display()))
}

pub fn trace_stream<T: CliScalar>(t: &TraceConfig) -> Result<Vec<CustomerRecord<T>>> {
    let conv = |v: &[Number]| v.iter().map(T::from_number).collect::<Result<Vec<T>>>();
    Ok(from_trace(&conv(&t.gaps)?, &conv(&t.services)?, &conv(&t.leads)?)?)
}

/// Largest lead time in a stream.
pub fn max_lead<T: Scalar>(stream: &[CustomerRecord<T>]) -> T {
    stream
        .iter()
        .fold(T::zero(), |m, c| T::max_of(m, c.lead.clone()))
}

/// A horizon by which every customer of a finite stream has left.
pub fn drain_horizon<T: Scalar>(stream: &[CustomerRecord<T>]) -> T {
    let work = stream
        .iter()
        .fold(T::zero(), |s, c| s + c.service.clone());
    let last = stream.last().map(|c| c.arrival.clone()).unwrap_or_else(T::zero);
    let horizon = last + max_lead(stream) + work;
    if horizon > T::zero() {
        horizon
    } else {
        T::from_f64(1.0)
    }
}

/// Simulation horizon of a random run: the configured horizon, or the
/// arrival time of the last customer when the run is sized by arrivals.
pub fn random_horizon(seed: u64, spec: StreamSpec, length: RunLength) -> Result<f64> {
    Ok(match length {
        RunLength::Horizon(h) => h,
        RunLength::Arrivals(n) => CustomerStream::new(seed, spec)?
            .take(n as usize)
            .last()
            .map(|c| c.arrival)
            .expect("at least one arrival"),
    })
}

/// Customers of a random run, lazily.
pub fn random_stream(
    seed: u64,
    spec: StreamSpec,
    length: RunLength,
) -> Result<Box<dyn Iterator<Item = CustomerRecord<f64>> + Send>> {
    let s = CustomerStream::new(seed, spec)?;
    Ok(match length {
        RunLength::Horizon(h) => Box::new(s.take_while(move |c| c.arrival <= h)),
        RunLength::Arrivals(n) => Box::new(s.take(n as usize)),
    })
}

pub fn convert_stream<T: Scalar>(stream: &[CustomerRecord<f64>]) -> Vec<CustomerRecord<T>> {
    stream
        .iter()
        .map(|c| CustomerRecord {
            index: c.index,
            gap: T::from_f64(c.gap),
            service: T::from_f64(c.service),
            lead: T::from_f64(c.lead),
            arrival: T::from_f64(c.arrival),
            deadline: T::from_f64(c.deadline),
        })
        .collect()
}

/// Policy from its configured name. `seed` drives the random policy; the
/// hybrid policy computes its flags from `stream`.
pub fn build_policy<T: Scalar>(
    name: &str,
    seed: u64,
    stream: &[CustomerRecord<T>],
    horizon: &T,
    y_hi: &T,
) -> Result<PolicySpec> {
    Ok(match name {
        "edf_reneging" => PolicySpec::EdfReneging,
        "edf_standard" => PolicySpec::EdfStandard,
        "fifo_reneging" => PolicySpec::FifoReneging,
        "lifo_reneging" => PolicySpec::LifoReneging,
        "random_reneging" => PolicySpec::RandomReneging { seed },
        "hybrid" => PolicySpec::Hybrid {
            high_priority: hybrid_flags(stream, horizon.clone(), y_hi.clone())?,
        },
        other => anyhow::bail!("unknown policy `{other}`"),
    })
}

pub const MEASURE_CSV_HEADER: &str = "time,side,location,mass";

pub fn push_measure_rows<T: CliScalar>(out: &mut String, time: &T, side: &str, m: &AtomicMeasure<T>) {
    for (l, w) in m.atoms() {
        let _ = writeln!(out, "{},{},{},{}", time.render(), side, l.render(), w.render());
    }
}
