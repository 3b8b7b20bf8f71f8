//! Local-time rate of the doubly reflected Brownian motion.

use std::fmt::Write as _;

use anyhow::{anyhow, Result};
use edfq::diffusion::{local_time_rate_mc, stationary_cdf, LocalTimeConfig, RATE_CSV_HEADER};
use edfq::scalar::fmt_sig17;

use super::{ensure_dir, write_file, Outcome};
use crate::config::ExperimentConfig;

pub fn run(cfg: &ExperimentConfig) -> Result<Outcome> {
    let d = cfg
        .diffusion
        .as_ref()
        .ok_or_else(|| anyhow!("diffusion: the [diffusion] section is required for this command"))?;
    ensure_dir(&cfg.out)?;
    let mut rates = format!("{RATE_CSV_HEADER},relative_error,ci_covers,ks\n");
    let mut density = String::from("gamma,bin_lo,bin_hi,empirical,stationary\n");
    for &gamma in &d.gamma {
        let est = local_time_rate_mc(&LocalTimeConfig {
            gamma,
            sigma2: d.sigma2,
            h0: d.h0,
            horizon: d.horizon,
            dt: d.dt,
            seeds: d.seeds,
            base_seed: d.base_seed,
            bins: d.bins,
        })?;
        let ks = est.ks_distance();
        let _ = writeln!(
            rates,
            "{},{},{},{}",
            est.csv_row(),
            fmt_sig17(est.relative_error()),
            est.ci_covers_theory(),
            ks.map(fmt_sig17).unwrap_or_default()
        );
        let width = d.h0 / est.occupation.len().max(1) as f64;
        for (i, p) in est.occupation.iter().enumerate() {
            let (lo, hi) = (i as f64 * width, (i + 1) as f64 * width);
            let theory = stationary_cdf(gamma, d.sigma2, d.h0, hi) - stationary_cdf(gamma, d.sigma2, d.h0, lo);
            let _ = writeln!(density, "{gamma},{},{},{},{}", fmt_sig17(lo), fmt_sig17(hi), fmt_sig17(*p), fmt_sig17(theory));
        }
        println!(
            "gamma {:<6} rate {:.6} ± {:.6}  theory {:.6}  rel.err {:.2}%  ks {}",
            gamma,
            est.estimate,
            est.ci_half,
            est.theory,
            100.0 * est.relative_error(),
            ks.map(|k| format!("{k:.4}")).unwrap_or_else(|| "-".into())
        );
    }
    write_file(&cfg.out, "diffusion.csv", &rates)?;
    if d.bins > 0 {
        write_file(&cfg.out, "occupation.csv", &density)?;
    }
    Ok(Outcome::Pass)
}
