//! One trajectory per (seed, policy).

use std::fmt::Write as _;
use std::fs::File;
use std::io::BufWriter;

use anyhow::{Context, Result};
use edfq::primitives::{generate_stream, StreamBound};
use edfq::reference::{direct_reference_dynamics, phi_map, ReferenceTrajectory};
use edfq::simulator::{simulate, simulate_with, CsvObserver, SimOptions, SystemTrajectory};
use edfq::stats::{long_run_fractions, BatchConfig, CounterTrace, SteadyEstimate};
use edfq::{Exact, Scalar};
use rayon::prelude::*;

use super::{
    build_policy, convert_stream, drain_horizon, ensure_dir, max_lead, push_measure_rows,
    random_horizon, random_stream, trace_stream, write_file, CliScalar, Outcome, MEASURE_CSV_HEADER,
};
use crate::config::{ExperimentConfig, RunLength};

pub fn trajectory_name(seed: u64, policy: &str) -> String {
    format!("trajectory_s{seed}_{policy}.csv")
}

pub fn run(cfg: &ExperimentConfig, rational: bool) -> Result<Outcome> {
    ensure_dir(&cfg.out)?;
    if cfg.trace.is_some() {
        if rational {
            run_trace::<Exact>(cfg)
        } else {
            run_trace::<f64>(cfg)
        }
    } else {
        run_random(cfg, rational)
    }
}

fn measures_csv<T: CliScalar>(traj: &SystemTrajectory<T>) -> String {
    let mut out = format!("{MEASURE_CSV_HEADER}\n");
    push_measure_rows(&mut out, &traj.initial.time, "post", traj.initial.workload.as_ref().expect("kept"));
    for e in &traj.events {
        for (side, s) in [("pre", &e.pre), ("post", &e.post)] {
            push_measure_rows(&mut out, &s.time, side, s.workload.as_ref().expect("kept"));
        }
    }
    out
}

fn reference_csv<T: CliScalar>(r: &ReferenceTrajectory<T>) -> String {
    let mut out = format!("{MEASURE_CSV_HEADER}\n");
    push_measure_rows(&mut out, &r.initial.time, "post", &r.initial.measure);
    for e in &r.epochs {
        push_measure_rows(&mut out, &e.pre.time, "pre", &e.pre.measure);
        push_measure_rows(&mut out, &e.post.time, "post", &e.post.measure);
    }
    out
}

/// Explicit stream: full trajectories with measures, plus the reference
/// system in both constructions when the standard system is requested.
fn run_trace<T: CliScalar>(cfg: &ExperimentConfig) -> Result<Outcome> {
    let t = cfg.trace.as_ref().expect("trace present");
    let stream = trace_stream::<T>(t)?;
    let mut y_hi = max_lead(&stream);
    if let Some(p) = &cfg.primitives {
        y_hi = T::max_of(y_hi, T::from_f64(p.lead.y_hi()));
    }
    let horizon = match &t.horizon {
        Some(h) => T::from_number(h)?,
        None => drain_horizon(&stream),
    };
    for &seed in &cfg.seeds {
        for name in &cfg.policies {
            let policy = build_policy(name, seed, &stream, &horizon, &y_hi)?;
            let traj = simulate(&stream, &policy, horizon.clone(), y_hi.clone())?;
            write_file(&cfg.out, &trajectory_name(seed, name), &traj.to_csv())?;
            write_file(&cfg.out, &format!("measures_s{seed}_{name}.csv"), &measures_csv(&traj))?;
            if name == "edf_standard" {
                let phi = phi_map(&traj)?;
                let direct = direct_reference_dynamics(&stream, &traj, horizon.clone())?;
                write_file(&cfg.out, &format!("reference_phi_s{seed}.csv"), &reference_csv(&phi))?;
                write_file(&cfg.out, &format!("reference_direct_s{seed}.csv"), &reference_csv(&direct))?;
            }
        }
    }
    println!(
        "simulated {} customers under {} policies for {} seeds into {}",
        stream.len(),
        cfg.policies.len(),
        cfg.seeds.len(),
        cfg.out.display()
    );
    Ok(Outcome::Pass)
}

struct JobResult {
    seed: u64,
    policy: String,
    estimates: Vec<SteadyEstimate>,
}

fn run_random(cfg: &ExperimentConfig, rational: bool) -> Result<Outcome> {
    let spec = cfg.require_primitives()?;
    let length = cfg.require_length()?;
    let y_hi = spec.lead.y_hi();
    let jobs: Vec<(u64, &String)> = cfg
        .seeds
        .iter()
        .flat_map(|&s| cfg.policies.iter().map(move |p| (s, p)))
        .collect();
    let results: Vec<JobResult> = jobs
        .par_iter()
        .map(|&(seed, name)| -> Result<JobResult> {
            let horizon = random_horizon(seed, spec, length)?;
            let path = cfg.out.join(trajectory_name(seed, name));
            let file = BufWriter::new(
                File::create(&path).with_context(|| format!("cannot write {}", path.display()))?,
            );
            let needs_stream = rational || name == "hybrid";
            let estimates = if needs_stream {
                let bound = match length {
                    RunLength::Horizon(h) => StreamBound::Horizon(h),
                    RunLength::Arrivals(n) => StreamBound::Count(n),
                };
                let stream = generate_stream(seed, spec, bound)?;
                if rational {
                    let exact = convert_stream::<Exact>(&stream);
                    let h = <Exact as Scalar>::from_f64(horizon);
                    let y = <Exact as Scalar>::from_f64(y_hi);
                    let policy = build_policy(name, seed, &exact, &h, &y)?;
                    let mut csv = CsvObserver::new(file);
                    simulate_with(exact, &policy, h, &SimOptions::new(y), &mut csv)?;
                    csv.finish()?;
                    Vec::new()
                } else {
                    let policy = build_policy(name, seed, &stream, &horizon, &y_hi)?;
                    observe_f64(cfg, stream, &policy, horizon, y_hi, file)?
                }
            } else {
                let policy = build_policy::<f64>(name, seed, &[], &horizon, &y_hi)?;
                observe_f64(cfg, random_stream(seed, spec, length)?, &policy, horizon, y_hi, file)?
            };
            Ok(JobResult {
                seed,
                policy: name.clone(),
                estimates,
            })
        })
        .collect::<Result<_>>()?;

    if rational {
        eprintln!("note: steady-state estimates are computed in floating point only; skipped");
    } else {
        let mut out = String::from("seed,policy,metric,point,ci_half,batches,warmup\n");
        for r in &results {
            for e in &r.estimates {
                let _ = writeln!(out, "{},{},{}", r.seed, r.policy, e.csv_row());
            }
        }
        write_file(&cfg.out, "estimates.csv", &out)?;
        for r in &results {
            for e in &r.estimates {
                println!(
                    "seed {:>4} {:<16} {:<18} {:.6e} ± {:.2e}",
                    r.seed, r.policy, e.metric, e.point, e.ci_half
                );
            }
        }
    }
    println!("wrote {} trajectories to {}", results.len(), cfg.out.display());
    Ok(Outcome::Pass)
}

fn observe_f64<I>(
    cfg: &ExperimentConfig,
    stream: I,
    policy: &edfq::simulator::PolicySpec,
    horizon: f64,
    y_hi: f64,
    file: BufWriter<File>,
) -> Result<Vec<SteadyEstimate>>
where
    I: IntoIterator<Item = edfq::primitives::CustomerRecord<f64>>,
{
    let every = cfg
        .sample_every
        .unwrap_or(horizon / (cfg.batches as f64 * 100.0));
    let mut obs = (CsvObserver::new(file), CounterTrace::new(every));
    let opts = SimOptions {
        y_hi,
        sample_every: Some(every),
    };
    simulate_with(stream, policy, horizon, &opts, &mut obs)?;
    let (csv, trace) = obs;
    csv.finish()?;
    let batch = BatchConfig {
        batches: cfg.batches,
        warmup: cfg.warmup,
    };
    match long_run_fractions(&trace, &batch) {
        Ok(e) => Ok(e),
        Err(e) => {
            eprintln!("note: no estimates for {}: {e}", policy.name());
            Ok(Vec::new())
        }
    }
}
