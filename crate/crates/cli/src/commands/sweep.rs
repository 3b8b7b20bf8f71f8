//! Late and lost fractions against the deadline upper bound `B`.

use std::fmt::Write as _;

use anyhow::{bail, Result};
use edfq::predict::{predictions, PredictionInputs};
use edfq::primitives::{DistributionSpec, LeadTimeSpec, StreamSpec};
use edfq::scalar::fmt_sig17;
use edfq::simulator::{simulate_with, PolicySpec, SimOptions};
use edfq::stats::{long_run_fractions, BatchConfig, CounterTrace, SteadyEstimate};
use rayon::prelude::*;

use super::{ensure_dir, random_horizon, random_stream, write_file, Outcome};
use crate::config::{ExperimentConfig, RunLength};

pub const SWEEP_CSV_HEADER: &str = "B,mean_lead,late_customers,late_customers_ci,late_work,late_work_ci,\
reneged_customers,reneged_customers_ci,reneged_work,reneged_work_ci,customer_work_ratio,\
late_over_reneged,theory_late,theory_reneged_work,theory_reneged_customers,fifo_crosscheck";

/// Leads uniform on `[lo, b]`, or constant when `b == lo`.
pub fn lead_for(lo: f64, b: f64) -> Result<LeadTimeSpec> {
    let dist = if b == lo {
        DistributionSpec::deterministic(lo)?
    } else {
        DistributionSpec::uniform(lo, b)?
    };
    Ok(LeadTimeSpec::new(dist)?)
}

/// Long-run fractions of one EDF run, sampled on a grid of `batches·100`
/// points unless the spacing is configured.
pub fn run_point(
    spec: StreamSpec,
    seed: u64,
    length: RunLength,
    policy: &PolicySpec,
    sample_every: Option<f64>,
    batch: &BatchConfig,
) -> Result<Vec<SteadyEstimate>> {
    let horizon = random_horizon(seed, spec, length)?;
    let every = sample_every.unwrap_or(horizon / (batch.batches as f64 * 100.0));
    let mut trace = CounterTrace::new(every);
    let opts = SimOptions {
        y_hi: spec.lead.y_hi(),
        sample_every: Some(every),
    };
    simulate_with(random_stream(seed, spec, length)?, policy, horizon, &opts, &mut trace)?;
    Ok(long_run_fractions(&trace, batch)?)
}

/// Seed average of one metric; the interval half-widths combine as for a
/// mean of independent estimates.
fn pooled(per_seed: &[Vec<SteadyEstimate>], metric: &str) -> (f64, f64) {
    let found: Vec<&SteadyEstimate> = per_seed
        .iter()
        .filter_map(|v| v.iter().find(|e| e.metric == metric))
        .collect();
    let k = found.len() as f64;
    let point = found.iter().map(|e| e.point).sum::<f64>() / k;
    let ci = found.iter().map(|e| e.ci_half * e.ci_half).sum::<f64>().sqrt() / k;
    (point, ci)
}

pub fn run(cfg: &ExperimentConfig, rational: bool) -> Result<Outcome> {
    if rational {
        bail!("sweep: exact mode is not supported; long runs are floating point only");
    }
    let sweep = cfg
        .sweep
        .as_ref()
        .ok_or_else(|| anyhow::anyhow!("sweep: the [sweep] section is required"))?;
    let base = cfg.require_primitives()?;
    let length = cfg.require_length()?;
    ensure_dir(&cfg.out)?;
    let batch = BatchConfig {
        batches: cfg.batches,
        warmup: cfg.warmup,
    };
    let jobs: Vec<(usize, u64, PolicySpec)> = (0..sweep.b.len())
        .flat_map(|i| {
            cfg.seeds.iter().flat_map(move |&s| {
                [PolicySpec::EdfStandard, PolicySpec::EdfReneging]
                    .into_iter()
                    .map(move |p| (i, s, p))
            })
        })
        .collect();
    let results: Vec<Vec<SteadyEstimate>> = jobs
        .par_iter()
        .map(|(i, seed, policy)| {
            let spec = StreamSpec {
                lead: lead_for(sweep.lead_lo, sweep.b[*i])?,
                ..base
            };
            run_point(spec, *seed, length, policy, cfg.sample_every, &batch)
        })
        .collect::<Result<_>>()?;

    let per_b = cfg.seeds.len() * 2;
    let mut csv = format!("{SWEEP_CSV_HEADER}\n");
    println!(
        "{:>8} {:>12} {:>12} {:>12} {:>12} {:>12} {:>12}",
        "B", "late_work", "theory", "reneged_work", "theory", "ren_cust", "theory"
    );
    for (i, &b) in sweep.b.iter().enumerate() {
        let lead = lead_for(sweep.lead_lo, b)?;
        let pred = predictions(&PredictionInputs::from_primitives(
            &base.interarrival,
            &base.service,
            &lead,
        )?);
        let chunk = &results[i * per_b..(i + 1) * per_b];
        let (late_c, late_c_ci) = pooled(chunk, "late_customers");
        let (late_w, late_w_ci) = pooled(chunk, "late_work");
        let (ren_c, ren_c_ci) = pooled(chunk, "reneged_customers");
        let (ren_w, ren_w_ci) = pooled(chunk, "reneged_work");
        let cell = |x: f64| if x.is_finite() { fmt_sig17(x) } else { String::new() };
        let _ = writeln!(
            csv,
            "{},{},{},{},{},{},{},{},{},{},{},{},{},{},{},{}",
            b,
            lead.mean(),
            cell(late_c),
            cell(late_c_ci),
            cell(late_w),
            cell(late_w_ci),
            cell(ren_c),
            cell(ren_c_ci),
            cell(ren_w),
            cell(ren_w_ci),
            cell(ren_c / ren_w),
            cell(late_w / ren_w),
            cell(pred.late_work),
            cell(pred.lost_work),
            cell(pred.lost_customers.value),
            pred.fifo_crosscheck.map(fmt_sig17).unwrap_or_default(),
        );
        println!(
            "{:>8} {:>12.4e} {:>12.4e} {:>12.4e} {:>12.4e} {:>12.4e} {:>12.4e}",
            b, late_w, pred.late_work, ren_w, pred.lost_work, ren_c, pred.lost_customers.value
        );
    }
    write_file(&cfg.out, "sweep.csv", &csv)?;
    Ok(Outcome::Pass)
}
