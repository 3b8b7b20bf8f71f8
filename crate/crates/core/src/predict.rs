//! Closed-form heavy-traffic predictions for the reneging and standard EDF
//! systems, in unscaled units.

use crate::error::{Error, Result};
use crate::primitives::{traffic_params, DistributionSpec, LeadTimeSpec};

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct PredictionInputs {
    pub rho: f64,
    pub sigma2: f64,
    /// Mean lead time `D̄`.
    pub mean_lead: f64,
    pub theta: f64,
    /// `E[V]`.
    pub ev: f64,
    /// `E[V²]`.
    pub ev2: f64,
    /// Service law, needed for the renege probability.
    pub service: Option<DistributionSpec>,
    pub poisson_arrivals: bool,
    pub constant_deadlines: bool,
}

impl PredictionInputs {
    /// Inputs from moments alone; `θ = 2(1 - ρ)/σ²`.
    pub fn new(rho: f64, sigma2: f64, mean_lead: f64, ev: f64, ev2: f64) -> Result<Self> {
        if !(rho > 0.0 && sigma2 > 0.0 && mean_lead >= 0.0 && ev > 0.0 && ev2 >= ev * ev) {
            return Err(Error::InvalidParameter(format!(
                "rho {rho}, sigma2 {sigma2}, mean lead {mean_lead}, E[V] {ev}, E[V^2] {ev2}"
            )));
        }
        Ok(Self {
            rho,
            sigma2,
            mean_lead,
            theta: 2.0 * (1.0 - rho) / sigma2,
            ev,
            ev2,
            service: None,
            poisson_arrivals: false,
            constant_deadlines: false,
        })
    }

    pub fn from_primitives(
        interarrival: &DistributionSpec,
        service: &DistributionSpec,
        lead: &LeadTimeSpec,
    ) -> Result<Self> {
        let p = traffic_params(interarrival, service)?;
        let mut out = Self::new(p.rho, p.sigma2, lead.mean(), service.mean(), service.second_moment())?;
        out.service = Some(*service);
        out.poisson_arrivals = matches!(interarrival, DistributionSpec::Exponential { .. });
        out.constant_deadlines = lead.is_constant();
        Ok(out)
    }

    fn x(&self) -> f64 {
        self.theta * self.mean_lead
    }
}

/// Long-run fraction of arriving work lost to reneging.
pub fn fraction_lost_work_reneging(inp: &PredictionInputs) -> f64 {
    if inp.rho == 1.0 {
        inp.sigma2 / (2.0 * inp.mean_lead)
    } else {
        // e^{-x}/(1 - e^{-x}) = 1/(e^x - 1)
        (1.0 - inp.rho) / (inp.rho * inp.x().exp_m1())
    }
}

/// Long-run fraction of late work (and of late customers) in the standard
/// system. Every customer is late in the limit once `ρ ≥ 1`.
pub fn fraction_late_work_standard(inp: &PredictionInputs) -> f64 {
    if inp.rho >= 1.0 {
        1.0
    } else {
        (-inp.x()).exp()
    }
}

/// Lost work in the reneging system over late work in the standard system.
pub fn work_ratio(inp: &PredictionInputs) -> f64 {
    if inp.rho >= 1.0 {
        inp.sigma2 / (2.0 * inp.mean_lead)
    } else {
        (1.0 - inp.rho) / (inp.rho * -(-inp.x()).exp_m1())
    }
}

/// A prediction that holds only under extra hypotheses.
#[derive(Clone, Debug, PartialEq)]
pub struct Qualified {
    pub value: f64,
    /// Hypotheses the inputs do not meet.
    pub caveats: Vec<&'static str>,
}

/// `2(E V)²/E[V²]` times the lost-work fraction. The derivation assumes
/// Poisson arrivals and constant deadlines; unmet assumptions are listed.
pub fn fraction_lost_customers_reneging(inp: &PredictionInputs) -> Qualified {
    let mut caveats = Vec::new();
    if !inp.poisson_arrivals {
        caveats.push("arrivals are not Poisson");
    }
    if !inp.constant_deadlines {
        caveats.push("deadlines are not constant");
    }
    Qualified {
        value: customer_coefficient(inp) * fraction_lost_work_reneging(inp),
        caveats,
    }
}

/// `2(E V)²/E[V²]`, in `(0, 2]`.
pub fn customer_coefficient(inp: &PredictionInputs) -> f64 {
    2.0 * inp.ev * inp.ev / inp.ev2
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct RenegeProbability {
    /// `P{renege} = (E e^{θV} - 1)/(e^{θD̄} - 1)`.
    pub probability: f64,
    /// Mean work lost per reneging customer, `E[V²]/(2 E V)`.
    pub excess: f64,
}

pub fn renege_probability_and_excess(inp: &PredictionInputs) -> Result<RenegeProbability> {
    if inp.theta == 0.0 {
        return Err(Error::InvalidParameter("theta must be nonzero".into()));
    }
    let service = inp
        .service
        .ok_or(Error::MissingData("service distribution"))?;
    let mgf = service.mgf(inp.theta).ok_or_else(|| {
        Error::InvalidParameter(format!(
            "service moment generating function diverges at theta = {}",
            inp.theta
        ))
    })?;
    Ok(RenegeProbability {
        probability: (mgf - 1.0) / inp.x().exp_m1(),
        excess: inp.ev2 / (2.0 * inp.ev),
    })
}

/// Exact loss fraction `(1-ρ)p/(1-ρp)`, `p = e^{-θD̄}`, of a FIFO queue with
/// constant patience, using the exponential tail for `P{W > D̄}`. Only
/// defined for constant deadlines.
pub fn fifo_loss_crosscheck(inp: &PredictionInputs) -> Option<f64> {
    if !inp.constant_deadlines || inp.rho >= 1.0 {
        return None;
    }
    let p = (-inp.x()).exp();
    Some((1.0 - inp.rho) * p / (1.0 - inp.rho * p))
}

/// Every prediction for one set of inputs.
#[derive(Clone, Debug, PartialEq)]
pub struct Predictions {
    pub inputs: PredictionInputs,
    pub lost_work: f64,
    pub late_work: f64,
    pub ratio: f64,
    pub lost_customers: Qualified,
    pub renege: Option<RenegeProbability>,
    pub fifo_crosscheck: Option<f64>,
}

pub fn predictions(inp: &PredictionInputs) -> Predictions {
    Predictions {
        inputs: *inp,
        lost_work: fraction_lost_work_reneging(inp),
        late_work: fraction_late_work_standard(inp),
        ratio: work_ratio(inp),
        lost_customers: fraction_lost_customers_reneging(inp),
        renege: renege_probability_and_excess(inp).ok(),
        fifo_crosscheck: fifo_loss_crosscheck(inp),
    }
}
