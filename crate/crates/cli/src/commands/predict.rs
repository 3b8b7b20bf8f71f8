//! Heavy-traffic predictions for the configured primitives.

use std::fmt::Write as _;

use anyhow::Result;
use edfq::predict::{customer_coefficient, predictions, PredictionInputs, Predictions};
use edfq::primitives::LeadTimeSpec;
use edfq::scalar::fmt_sig17;

use super::sweep::lead_for;
use super::{ensure_dir, write_file, Outcome};
use crate::config::ExperimentConfig;

/// `(quantity, value, basis)` rows for one parameter set.
pub fn table(p: &Predictions) -> Vec<(&'static str, Option<f64>, String)> {
    let inp = &p.inputs;
    let at_one = inp.rho >= 1.0;
    let mut customer_basis = String::from("coefficient 2(EV)^2/E[V^2] times lost work");
    if !p.lost_customers.caveats.is_empty() {
        customer_basis.push_str("; caveat: ");
        customer_basis.push_str(&p.lost_customers.caveats.join("; "));
    }
    vec![
        ("rho", Some(inp.rho), "input".into()),
        ("sigma2", Some(inp.sigma2), "input".into()),
        ("mean_lead", Some(inp.mean_lead), "input".into()),
        ("theta", Some(inp.theta), "2(1-rho)/sigma2".into()),
        (
            "lost_work_reneging",
            Some(p.lost_work),
            if at_one {
                "critical load limit sigma2/(2 mean_lead)".into()
            } else {
                "heavy-traffic approximation".into()
            },
        ),
        (
            "late_work_standard",
            Some(p.late_work),
            if at_one {
                "critical load: every customer late".into()
            } else {
                "exponential tail exp(-theta mean_lead)".into()
            },
        ),
        ("lost_over_late", Some(p.ratio), "ratio of the two work fractions".into()),
        ("lost_customers_reneging", Some(p.lost_customers.value), customer_basis),
        ("customer_coefficient", Some(customer_coefficient(inp)), "2(EV)^2/E[V^2]".into()),
        (
            "renege_probability",
            p.renege.map(|r| r.probability),
            "(E exp(theta V) - 1)/(exp(theta mean_lead) - 1)".into(),
        ),
        ("renege_excess", p.renege.map(|r| r.excess), "E[V^2]/(2 EV)".into()),
        (
            "fifo_crosscheck",
            p.fifo_crosscheck,
            "FIFO loss with constant patience (constant deadlines only)".into(),
        ),
    ]
}

pub fn run(cfg: &ExperimentConfig) -> Result<Outcome> {
    let base = cfg.require_primitives()?;
    ensure_dir(&cfg.out)?;
    let mut cases: Vec<(String, LeadTimeSpec)> = vec![("base".into(), base.lead)];
    if let Some(s) = &cfg.sweep {
        for &b in &s.b {
            cases.push((format!("B={b}"), lead_for(s.lead_lo, b)?));
        }
    }
    let mut csv = String::from("case,quantity,value,basis\n");
    for (case, lead) in &cases {
        let p = predictions(&PredictionInputs::from_primitives(&base.interarrival, &base.service, lead)?);
        println!("[{case}] lead {}", lead.dist);
        for (q, v, basis) in table(&p) {
            let shown = v.map(|x| format!("{x:.6e}")).unwrap_or_else(|| "n/a".into());
            let _ = writeln!(csv, "{case},{q},{},\"{basis}\"", v.map(fmt_sig17).unwrap_or_default());
            println!("  {q:<24} {shown:>24}  {basis}");
        }
    }
    write_file(&cfg.out, "predict.csv", &csv)?;
    Ok(Outcome::Pass)
}

#[cfg(test)]
mod tests {
    use super::*;
    use edfq::primitives::DistributionSpec;

    #[test]
    fn critical_load_row_uses_limit() {
        let inp = PredictionInputs::from_primitives(
            &DistributionSpec::exponential(1.0).unwrap(),
            &DistributionSpec::exponential(1.0).unwrap(),
            &LeadTimeSpec::new(DistributionSpec::deterministic(4.0).unwrap()).unwrap(),
        )
        .unwrap();
        let rows = table(&predictions(&inp));
        let lost = rows.iter().find(|r| r.0 == "lost_work_reneging").unwrap();
        assert_eq!(lost.1, Some(2.0 / 8.0));
        assert!(lost.2.contains("critical"));
    }

    #[test]
    fn mm1_theta_row() {
        let inp = PredictionInputs::from_primitives(
            &DistributionSpec::exponential(0.5).unwrap(),
            &DistributionSpec::exponential(1.0 / 1.96).unwrap(),
            &lead_for(5.0, 200.0).unwrap(),
        )
        .unwrap();
        let rows = table(&predictions(&inp));
        let theta = rows.iter().find(|r| r.0 == "theta").unwrap().1.unwrap();
        assert!((theta - 0.010202).abs() < 5e-7);
        let lost_c = rows.iter().find(|r| r.0 == "lost_customers_reneging").unwrap();
        assert!(lost_c.2.contains("deadlines are not constant"));
    }
}
