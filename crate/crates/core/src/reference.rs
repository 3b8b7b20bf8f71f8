//! The reference system.
//!
//! The reference workload measure is the standard-system workload measure
//! with mass `K(t)` cut away from the left of its support. `K` is rebuilt
//! cycle by cycle: during a busy cycle `[σ_k, τ_k)` it is the running maximum
//! of `W_S(σ_k-)` and the late standard work `𝒲_S(s)(-∞, 0]`; during an idle
//! stretch `[τ_k, σ_{k+1})` it equals `W_S`. An independent forward
//! simulation of the reference measure cross-checks the construction.

use std::collections::BTreeMap;
use std::fmt::Write as _;

use crate::error::{Error, Result};
use crate::measures::{AtomicMeasure, Interval};
use crate::primitives::CustomerRecord;
use crate::scalar::{fmt_sig17, Scalar};
use crate::simulator::{EventKinds, Mode, SystemTrajectory};

/// `K` and its variations, carried alongside the reference state.
#[derive(Clone, Debug, PartialEq)]
pub struct KState<T> {
    pub w_s: T,
    pub k: T,
    pub k_plus: T,
    pub k_minus: T,
}

/// Reference system at one instant.
#[derive(Clone, Debug)]
pub struct RefState<T: Scalar> {
    pub time: T,
    pub measure: AtomicMeasure<T>,
    pub u: T,
    pub r_u: T,
    /// `∫ 1{U > 0} ds`.
    pub busy: T,
    pub arrived_work: T,
    /// Present only for the mapping construction.
    pub k: Option<KState<T>>,
}

impl<T: Scalar> RefState<T> {
    fn zero(time: T, with_k: bool) -> Self {
        Self {
            time,
            measure: AtomicMeasure::new(),
            u: T::zero(),
            r_u: T::zero(),
            busy: T::zero(),
            arrived_work: T::zero(),
            k: with_k.then(|| KState {
                w_s: T::zero(),
                k: T::zero(),
                k_plus: T::zero(),
                k_minus: T::zero(),
            }),
        }
    }

    /// Leftmost support point `E`; `None` stands for `+∞`.
    pub fn leftmost(&self) -> Option<T> {
        self.measure.leftmost().map(|(l, _)| l)
    }

    /// Evolution over `dt` with no event in between: the leftmost mass is
    /// served and everything drifts left.
    pub fn evolve(&self, dt: T) -> Self {
        let mut s = self.clone();
        s.time += dt.clone();
        let was_busy = s.u.is_positive();
        if was_busy {
            let served = T::min_of(dt.clone(), s.u.clone());
            s.measure
                .remove_leftmost_mass(served.clone())
                .expect("served mass is available");
            s.busy += served;
        }
        s.measure.drift(dt.clone()).expect("nonnegative dt");
        s.u = s.measure.total();
        if let Some(k) = s.k.as_mut() {
            let w_s = (k.w_s.clone() - dt).pos_part();
            if !was_busy {
                k.k_minus += k.k.clone() - w_s.clone();
                k.k = w_s.clone();
            }
            k.w_s = w_s;
        }
        s
    }
}

#[derive(Clone, Debug)]
pub struct RefEpoch<T: Scalar> {
    pub kinds: EventKinds,
    pub pre: RefState<T>,
    pub post: RefState<T>,
}

/// Alternating busy-cycle epochs `σ_1 < τ_1 < σ_2 < …`.
#[derive(Clone, Debug, PartialEq)]
pub struct BusyCycleIndex<T> {
    pub sigma: Vec<T>,
    pub tau: Vec<T>,
}

impl<T> Default for BusyCycleIndex<T> {
    fn default() -> Self {
        Self {
            sigma: Vec::new(),
            tau: Vec::new(),
        }
    }
}

#[derive(Clone, Debug)]
pub struct ReferenceTrajectory<T: Scalar = f64> {
    pub construction: &'static str,
    pub initial: RefState<T>,
    pub epochs: Vec<RefEpoch<T>>,
    pub cycles: BusyCycleIndex<T>,
}

impl<T: Scalar> ReferenceTrajectory<T> {
    pub fn final_state(&self) -> &RefState<T> {
        self.epochs.last().map(|e| &e.post).unwrap_or(&self.initial)
    }

    pub fn at(&self, t: &T) -> RefState<T> {
        let k = self.epochs.partition_point(|e| e.post.time <= *t);
        let base = if k == 0 {
            &self.initial
        } else {
            &self.epochs[k - 1].post
        };
        base.evolve(t.clone() - base.time.clone())
    }

    pub fn left_limit(&self, t: &T) -> RefState<T> {
        let k = self.epochs.partition_point(|e| e.post.time < *t);
        if k < self.epochs.len() && self.epochs[k].post.time == *t {
            return self.epochs[k].pre.clone();
        }
        let base = if k == 0 {
            &self.initial
        } else {
            &self.epochs[k - 1].post
        };
        base.evolve(t.clone() - base.time.clone())
    }
}

fn truncate<T: Scalar>(m: &AtomicMeasure<T>, k: &T) -> Result<AtomicMeasure<T>> {
    let total = m.total();
    if *k > total && !(k.clone() - total.clone()).is_negligible() {
        return Err(Error::IdentityViolated(format!(
            "K = {} exceeds the standard workload {}",
            k.to_f64(),
            total.to_f64()
        )));
    }
    let mut out = m.clone();
    out.remove_leftmost_mass(T::min_of(k.clone().pos_part(), total))?;
    Ok(out)
}

fn check_standard<T: Scalar>(std_traj: &SystemTrajectory<T>) -> Result<()> {
    if std_traj.mode != Mode::Standard || !std_traj.is_edf {
        return Err(Error::ModeMismatch {
            expected: "the standard EDF system",
            found: std_traj.policy.clone(),
        });
    }
    if !std_traj.has_measures {
        return Err(Error::MissingData("measure snapshots"));
    }
    Ok(())
}

/// Builds the reference system from a standard EDF trajectory by left
/// truncation of the standard workload measure.
pub fn phi_map<T: Scalar>(std_traj: &SystemTrajectory<T>) -> Result<ReferenceTrajectory<T>> {
    check_standard(std_traj)?;
    let zero = T::zero();
    let initial = RefState::zero(std_traj.initial.time.clone(), true);
    let mut cur = initial.clone();
    let mut in_busy = false;
    let mut kc = T::zero();
    let mut epochs = Vec::with_capacity(std_traj.events.len());
    let mut cycles = BusyCycleIndex::default();

    for e in &std_traj.events {
        let t = e.post.time.clone();
        let ws_pre_m = e.pre.workload.as_ref().expect("measures kept");
        let ws_post_m = e.post.workload.as_ref().expect("measures kept");

        // The reference workload can run dry strictly between standard epochs.
        if in_busy {
            let hit = cur.time.clone() + cur.u.clone();
            if hit < t {
                let pre = cur.evolve(hit.clone() - cur.time.clone());
                let mut post = pre.clone();
                post.measure = AtomicMeasure::new();
                post.u = zero.clone();
                let ks = post.k.as_mut().expect("k state");
                if !(ks.w_s.clone() - kc.clone()).is_negligible() {
                    return Err(Error::IdentityViolated(format!(
                        "K(τ) = {} differs from W_S(τ) = {} at τ = {}",
                        kc.to_f64(),
                        ks.w_s.to_f64(),
                        hit.to_f64()
                    )));
                }
                ks.k = ks.w_s.clone();
                in_busy = false;
                cycles.tau.push(hit);
                epochs.push(RefEpoch {
                    kinds: EventKinds::CYCLE_END,
                    pre,
                    post: post.clone(),
                });
                cur = post;
            }
        }

        let dt = t.clone() - cur.time.clone();
        let cur_k = cur.k.clone().expect("k state");
        let ws_pre = e.pre.total_work.clone();
        let k_pre = if in_busy { kc.clone() } else { ws_pre.clone() };
        let k_minus_pre = if in_busy {
            cur_k.k_minus.clone()
        } else {
            cur_k.k_minus.clone() + (cur_k.k.clone() - k_pre.clone())
        };
        let pre_measure = truncate(ws_pre_m, &k_pre)?;
        let pre = RefState {
            time: t.clone(),
            u: pre_measure.total(),
            measure: pre_measure,
            r_u: cur.r_u.clone(),
            busy: cur.busy.clone() + if in_busy { dt } else { zero.clone() },
            arrived_work: e.pre.arrived_work.clone(),
            k: Some(KState {
                w_s: ws_pre.clone(),
                k: k_pre.clone(),
                k_plus: cur_k.k_plus.clone(),
                k_minus: k_minus_pre.clone(),
            }),
        };

        let late = ws_post_m.mass_below(&zero);
        let renege = pre.measure.mass_below(&zero);
        let mut k_plus = cur_k.k_plus.clone();
        let mut kinds = e.kinds;
        let k_post = if kinds.contains(EventKinds::ARRIVAL) && !in_busy {
            let start = T::max_of(ws_pre.clone(), late);
            if !(start - k_pre.clone()).is_negligible() {
                return Err(Error::IdentityViolated(format!(
                    "K jumps at the cycle start σ = {}",
                    t.to_f64()
                )));
            }
            kc = k_pre.clone();
            in_busy = true;
            cycles.sigma.push(t.clone());
            kc.clone()
        } else if in_busy {
            if late > kc {
                k_plus += late.clone() - kc.clone();
                kc = late;
            }
            kc.clone()
        } else {
            e.post.total_work.clone()
        };
        let mut post_measure = truncate(ws_post_m, &k_post)?;
        let mut k_post = k_post;
        if in_busy && !post_measure.total().is_positive() {
            if !(e.post.total_work.clone() - kc.clone()).is_negligible() {
                return Err(Error::IdentityViolated(format!(
                    "K(τ) differs from W_S(τ) at τ = {}",
                    t.to_f64()
                )));
            }
            in_busy = false;
            cycles.tau.push(t.clone());
            kinds.insert(EventKinds::CYCLE_END);
            post_measure = AtomicMeasure::new();
            k_post = e.post.total_work.clone();
        }
        let post = RefState {
            time: t.clone(),
            u: post_measure.total(),
            measure: post_measure,
            r_u: pre.r_u.clone() + renege,
            busy: pre.busy.clone(),
            arrived_work: e.post.arrived_work.clone(),
            k: Some(KState {
                w_s: e.post.total_work.clone(),
                k: k_post,
                k_plus,
                k_minus: k_minus_pre,
            }),
        };
        epochs.push(RefEpoch {
            kinds,
            pre,
            post: post.clone(),
        });
        cur = post;
    }
    Ok(ReferenceTrajectory {
        construction: "phi_map",
        initial,
        epochs,
        cycles,
    })
}

/// `K`, `K⁺`, `K⁻` and `R_U` at one instant.
#[derive(Clone, Debug, PartialEq)]
pub struct KPoint<T> {
    pub time: T,
    pub k: T,
    pub k_plus: T,
    pub k_minus: T,
    pub r_u: T,
}

#[derive(Clone, Debug)]
pub struct KDecomposition<T> {
    /// Post-epoch values, starting with the initial state.
    pub points: Vec<KPoint<T>>,
    pub cycles: BusyCycleIndex<T>,
}

pub fn k_decompose<T: Scalar>(std_traj: &SystemTrajectory<T>) -> Result<KDecomposition<T>> {
    let reference = phi_map(std_traj)?;
    let points = std::iter::once(&reference.initial)
        .chain(reference.epochs.iter().map(|e| &e.post))
        .map(|s| {
            let k = s.k.as_ref().expect("k state");
            KPoint {
                time: s.time.clone(),
                k: k.k.clone(),
                k_plus: k.k_plus.clone(),
                k_minus: k.k_minus.clone(),
                r_u: s.r_u.clone(),
            }
        })
        .collect();
    Ok(KDecomposition {
        points,
        cycles: reference.cycles,
    })
}

/// `K(t)` straight from its defining max–inf formula, at every standard
/// epoch (post-event values). Quadratic in the number of epochs.
pub fn k_direct<T: Scalar>(std_traj: &SystemTrajectory<T>) -> Result<Vec<(T, T)>> {
    check_standard(std_traj)?;
    let zero = T::zero();
    let states: Vec<_> = std_traj.events.iter().collect();
    let late: Vec<T> = states
        .iter()
        .map(|e| e.post.workload.as_ref().unwrap().mass_below(&zero))
        .collect();
    let mut out = Vec::with_capacity(states.len());
    for j in 0..states.len() {
        // Between epochs W_S only decreases, so the infimum over [s, t] is
        // attained at post-event values or left limits.
        let mut inf_w = states[j].post.total_work.clone();
        let mut best = T::min_of(late[j].clone(), inf_w.clone());
        for i in (0..j).rev() {
            inf_w = T::min_of(inf_w, states[i + 1].pre.total_work.clone());
            inf_w = T::min_of(inf_w, states[i].post.total_work.clone());
            best = T::max_of(best, T::min_of(late[i].clone(), inf_w.clone()));
        }
        out.push((states[j].post.time.clone(), best));
    }
    Ok(out)
}

/// Forward simulation of the reference measure: leftmost mass is served,
/// atoms reaching zero are deleted, an arrival at or right of the leftmost
/// support point is inserted as is, and an arrival left of it (or into an
/// empty system) resets the measure to the standard measure truncated by
/// `W_S(t-) - U(t-)`. The standard trajectory supplies that last case.
pub fn direct_reference_dynamics<T: Scalar>(
    stream: &[CustomerRecord<T>],
    std_traj: &SystemTrajectory<T>,
    horizon: T,
) -> Result<ReferenceTrajectory<T>> {
    check_standard(std_traj)?;
    if !(horizon > T::zero()) {
        return Err(Error::NonPositiveHorizon(horizon.to_f64()));
    }
    let zero = T::zero();
    let std_arrivals: Vec<_> = std_traj
        .events
        .iter()
        .filter(|e| e.kinds.contains(EventKinds::ARRIVAL))
        .collect();
    let initial = RefState::zero(zero.clone(), false);
    let mut s = initial.clone();
    let mut epochs = Vec::new();
    let mut cycles = BusyCycleIndex::default();
    let mut next = 0usize;

    loop {
        let arrival = stream
            .get(next)
            .filter(|c| c.arrival <= horizon)
            .map(|c| c.arrival.clone());
        let left = s.measure.leftmost();
        let depletion = left.as_ref().map(|(_, m)| s.time.clone() + m.clone());
        let hit = left.as_ref().map(|(l, _)| s.time.clone() + l.clone());
        let mut tn = horizon.clone();
        for c in [&arrival, &depletion, &hit].into_iter().flatten() {
            if *c < tn {
                tn = c.clone();
            }
        }
        if tn < s.time {
            tn = s.time.clone();
        }
        let dt = tn.clone() - s.time.clone();
        let u_prev = s.u.clone();
        let mut kinds = EventKinds::empty();
        if tn == horizon {
            kinds.insert(EventKinds::HORIZON);
        }

        // Advance to the left limit.
        let depleted = depletion.as_ref() == Some(&tn);
        if let Some((_, m)) = &left {
            let served = if depleted {
                m.clone()
            } else {
                T::min_of(dt.clone(), m.clone())
            };
            s.measure.remove_leftmost_mass(served)?;
            s.busy += T::min_of(dt.clone(), s.u.clone());
        }
        s.measure.drift(dt)?;
        s.u = s.measure.total();
        s.time = tn.clone();
        if depleted {
            kinds.insert(EventKinds::COMPLETION);
        }
        let pre = s.clone();
        let u_pre = pre.u.clone();

        // Leftmost atom reaching zero is deleted.
        if !depleted {
            if let Some((l, m)) = s.measure.leftmost() {
                if hit.as_ref() == Some(&tn) || l <= zero {
                    s.measure.remove_leftmost_mass(m.clone())?;
                    s.r_u += m;
                    kinds.insert(EventKinds::RENEGE);
                }
            }
        }

        if arrival.as_ref() == Some(&tn) {
            let c = &stream[next];
            let e_pre = pre.measure.leftmost().map(|(l, _)| l);
            let inserts = match &e_pre {
                Some(e) => *e <= zero || c.lead >= *e,
                None => false,
            };
            if inserts {
                s.measure.add_atom(c.lead.clone(), c.service.clone())?;
            } else {
                let std_e = std_arrivals.get(next).ok_or(Error::MissingData(
                    "standard-system arrival matching the stream",
                ))?;
                if std_e.post.time != tn {
                    return Err(Error::InvalidParameter(
                        "stream and standard trajectory disagree on arrival times".into(),
                    ));
                }
                let k = std_e.pre.total_work.clone() - u_pre.clone();
                s.measure = truncate(std_e.post.workload.as_ref().expect("measures kept"), &k)?;
            }
            if !u_prev.is_positive() {
                cycles.sigma.push(tn.clone());
            }
            s.arrived_work += c.service.clone();
            next += 1;
            kinds.insert(EventKinds::ARRIVAL);
        }
        s.u = s.measure.total();
        if u_prev.is_positive() && !s.u.is_positive() {
            cycles.tau.push(tn.clone());
            kinds.insert(EventKinds::CYCLE_END);
        }
        if !kinds.is_empty() {
            epochs.push(RefEpoch {
                kinds,
                pre,
                post: s.clone(),
            });
        }
        if kinds.contains(EventKinds::HORIZON) {
            break;
        }
    }
    Ok(ReferenceTrajectory {
        construction: "direct",
        initial,
        epochs,
        cycles,
    })
}

/// Largest differences between two reference constructions over the union
/// of their epochs, both post-event and left limits.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct Discrepancy {
    pub measure: f64,
    pub workload: f64,
    pub reneged: f64,
}

impl Discrepancy {
    pub fn max(&self) -> f64 {
        self.measure.max(self.workload).max(self.reneged)
    }
}

/// Sorted event times grouped into clusters `(first, last)`. In floating
/// point, two systems can record what is the same event an ulp apart; such
/// times form one cluster, compared by the left limit at its first time and
/// the value at its last.
fn time_clusters<T: Scalar>(mut times: Vec<T>) -> Vec<(T, T)> {
    times.sort_by(|a, b| a.partial_cmp(b).expect("finite times"));
    times.dedup();
    let mut out: Vec<(T, T)> = Vec::with_capacity(times.len());
    for t in times {
        if let Some(last) = out.last_mut() {
            let x = t.to_f64();
            if !T::is_exact() && x - last.1.to_f64() <= 1e-9 * x.abs().max(1.0) {
                last.1 = t;
                continue;
            }
        }
        out.push((t.clone(), t));
    }
    out
}

pub fn reference_discrepancy<T: Scalar>(
    a: &ReferenceTrajectory<T>,
    b: &ReferenceTrajectory<T>,
) -> Discrepancy {
    let times = time_clusters(
        a.epochs
            .iter()
            .chain(&b.epochs)
            .map(|e| e.post.time.clone())
            .collect(),
    );
    let mut d = Discrepancy::default();
    for (lo, hi) in &times {
        for (x, y) in [(a.at(hi), b.at(hi)), (a.left_limit(lo), b.left_limit(lo))] {
            d.measure = d.measure.max(x.measure.cdf_distance(&y.measure, 1e-9));
            d.workload = d.workload.max((x.u.to_f64() - y.u.to_f64()).abs());
            d.reneged = d.reneged.max((x.r_u.to_f64() - y.r_u.to_f64()).abs());
        }
    }
    d
}

/// One row of the comparison report.
#[derive(Clone, Debug)]
pub struct ReportRow {
    pub time: f64,
    pub w: f64,
    pub u: f64,
    pub w_s: Option<f64>,
    pub k: Option<f64>,
    pub k_plus: Option<f64>,
    pub k_minus: Option<f64>,
    pub r_w: f64,
    pub r_u: f64,
    /// `None` is `+∞`.
    pub e: Option<f64>,
    pub f: f64,
    pub violations: Vec<&'static str>,
}

/// Per-check maximum violations, with the rows that produced them.
#[derive(Clone, Debug)]
pub struct InequalityReport {
    pub eps: f64,
    pub checks: BTreeMap<&'static str, f64>,
    pub rows: Vec<ReportRow>,
}

pub const REPORT_CSV_HEADER: &str = "time,W,U,W_S,K,Kplus,Kminus,R_W,R_U,E,F,violation_flags";

impl InequalityReport {
    fn new(eps: f64, names: &[&'static str]) -> Self {
        Self {
            eps,
            checks: names.iter().map(|n| (*n, 0.0)).collect(),
            rows: Vec::new(),
        }
    }

    fn record(&mut self, name: &'static str, violation: f64, flags: &mut Vec<&'static str>) {
        let slot = self.checks.get_mut(name).expect("declared check");
        if violation > *slot {
            *slot = violation;
        }
        if violation > self.eps && !flags.contains(&name) {
            flags.push(name);
        }
    }

    pub fn max_violation(&self) -> f64 {
        self.checks.values().copied().fold(0.0, f64::max)
    }

    pub fn passed(&self) -> bool {
        self.max_violation() <= self.eps
    }

    pub fn failures(&self) -> Vec<(&'static str, f64)> {
        self.checks
            .iter()
            .filter(|(_, v)| **v > self.eps)
            .map(|(k, v)| (*k, *v))
            .collect()
    }

    /// Merges another report's check maxima (rows are kept from `self`).
    pub fn absorb(&mut self, other: &InequalityReport) {
        for (k, v) in &other.checks {
            let slot = self.checks.entry(k).or_insert(0.0);
            if *v > *slot {
                *slot = *v;
            }
        }
    }

    pub fn to_csv(&self) -> String {
        let opt = |x: Option<f64>| x.map(fmt_sig17).unwrap_or_default();
        let mut out = String::from(REPORT_CSV_HEADER);
        out.push('\n');
        for r in &self.rows {
            let _ = writeln!(
                out,
                "{},{},{},{},{},{},{},{},{},{},{},{}",
                fmt_sig17(r.time),
                fmt_sig17(r.w),
                fmt_sig17(r.u),
                opt(r.w_s),
                opt(r.k),
                opt(r.k_plus),
                opt(r.k_minus),
                fmt_sig17(r.r_w),
                fmt_sig17(r.r_u),
                r.e.map(fmt_sig17).unwrap_or_else(|| "inf".into()),
                fmt_sig17(r.f),
                r.violations.join("|"),
            );
        }
        out
    }
}

const COMPARISON_CHECKS: [&str; 7] = [
    "w_le_u",
    "ru_le_rw",
    "ru_le_rw_per_cycle",
    "e_le_f",
    "d_bound",
    "w_account",
    "frontdyn",
];

/// Checks the pathwise inequalities linking the reneging EDF system and the
/// reference system built from the same stream. Violations are reported,
/// never raised.
pub fn compare_systems<T: Scalar>(
    reneging: &SystemTrajectory<T>,
    reference: &ReferenceTrajectory<T>,
    eps: f64,
) -> Result<InequalityReport> {
    if reneging.mode != Mode::Reneging || !reneging.is_edf {
        return Err(Error::ModeMismatch {
            expected: "the reneging EDF system",
            found: reneging.policy.clone(),
        });
    }
    if !reneging.has_measures {
        return Err(Error::MissingData("measure snapshots"));
    }
    let zero = T::zero();
    let mut report = InequalityReport::new(eps, &COMPARISON_CHECKS);

    // Cumulative D-bound increments at arrival epochs.
    let mut d_steps: Vec<(T, T)> = Vec::new();
    let mut d_acc = T::zero();
    let arrivals = reneging
        .events
        .iter()
        .filter(|e| e.kinds.contains(EventKinds::ARRIVAL));
    for (e, c) in arrivals.zip(&reneging.customers) {
        let f = e.post.frontier.clone();
        if c.lead < f {
            let w_before = e
                .pre
                .workload
                .as_ref()
                .expect("measures kept")
                .mass_in(&Interval::open(zero.clone(), f));
            let slack = (w_before + c.service.clone() - c.lead.clone()).pos_part();
            d_acc += T::min_of(c.service.clone(), slack);
        }
        d_steps.push((e.post.time.clone(), d_acc.clone()));
    }
    let d_at = |t: &T, left: bool| -> T {
        let k = d_steps.partition_point(|(s, _)| if left { s < t } else { s <= t });
        if k == 0 {
            T::zero()
        } else {
            d_steps[k - 1].1.clone()
        }
    };
    let sigma_gaps: Vec<(T, T)> = reference
        .cycles
        .sigma
        .iter()
        .map(|s| {
            let gap = reference.left_limit(s).r_u - reneging.left_limit(s).reneged_work;
            (s.clone(), gap)
        })
        .collect();
    let min_gap = |t: &T, left: bool| -> Option<T> {
        sigma_gaps
            .iter()
            .filter(|(s, _)| if left { s < t } else { s <= t })
            .map(|(_, g)| g.clone())
            .reduce(T::min_of)
    };

    let times = time_clusters(
        reneging
            .events
            .iter()
            .map(|e| e.post.time.clone())
            .chain(reference.epochs.iter().map(|e| e.post.time.clone()))
            .collect(),
    );
    let mut prev_f: Option<(T, T)> = None;
    for (lo, hi) in &times {
        let mut flags = Vec::new();
        for left in [true, false] {
            let t = if left { lo } else { hi };
            let (w, u) = if left {
                (reneging.left_limit(t), reference.left_limit(t))
            } else {
                (reneging.at(t), reference.at(t))
            };
            let v = |x: T| x.to_f64();
            report.record("w_le_u", v(w.total_work.clone() - u.u.clone()), &mut flags);
            report.record("ru_le_rw", v(u.r_u.clone() - w.reneged_work.clone()), &mut flags);
            if let Some(g) = min_gap(t, left) {
                let diff = u.r_u.clone() - w.reneged_work.clone();
                report.record("ru_le_rw_per_cycle", v(diff - g), &mut flags);
            }
            // Support points can vanish at a left limit, so E is only
            // compared at right-continuous values.
            if !left && u.u.is_positive() {
                if let Some(e) = u.leftmost() {
                    report.record("e_le_f", v(e - w.frontier.clone()), &mut flags);
                }
            }
            let d = d_at(t, left);
            report.record(
                "d_bound",
                v(u.u.clone() - w.total_work.clone() - d),
                &mut flags,
            );
            let busy = w.time.clone() - w.idle.clone();
            let balance = w.arrived_work.clone() - busy - w.reneged_work.clone();
            report.record(
                "w_account",
                v(w.total_work.clone() - balance).abs(),
                &mut flags,
            );
            if let Some((t0, f0)) = &prev_f {
                let drop = f0.clone() - (w.time.clone() - t0.clone());
                report.record("frontdyn", v(drop - w.frontier.clone()), &mut flags);
            }
            prev_f = Some((w.time.clone(), w.frontier.clone()));
            if !left {
                let k = u.k.as_ref();
                report.rows.push(ReportRow {
                    time: v(t.clone()),
                    w: v(w.total_work.clone()),
                    u: v(u.u.clone()),
                    w_s: k.map(|k| v(k.w_s.clone())),
                    k: k.map(|k| v(k.k.clone())),
                    k_plus: k.map(|k| v(k.k_plus.clone())),
                    k_minus: k.map(|k| v(k.k_minus.clone())),
                    r_w: v(w.reneged_work.clone()),
                    r_u: v(u.r_u.clone()),
                    e: u.leftmost().map(v),
                    f: v(w.frontier.clone()),
                    violations: std::mem::take(&mut flags),
                });
            }
        }
    }
    Ok(report)
}

const IDENTITY_CHECKS: [&str; 8] = [
    "positivity",
    "u_le_ws",
    "right_of_e",
    "u_account",
    "decomposition",
    "complementarity",
    "ru_eq_kplus",
    "k_monotone",
];

/// Identities the reference system satisfies on its own, evaluated against
/// the standard trajectory it was built from.
pub fn reference_identities<T: Scalar>(
    reference: &ReferenceTrajectory<T>,
    std_traj: &SystemTrajectory<T>,
    eps: f64,
) -> Result<InequalityReport> {
    check_standard(std_traj)?;
    let zero = T::zero();
    let mut report = InequalityReport::new(eps, &IDENTITY_CHECKS);
    let times = time_clusters(
        std_traj
            .events
            .iter()
            .map(|e| e.post.time.clone())
            .chain(reference.epochs.iter().map(|e| e.post.time.clone()))
            .collect(),
    );
    let mut prev: Option<RefState<T>> = None;
    for (lo, hi) in &times {
        let mut flags = Vec::new();
        for left in [true, false] {
            let t = if left { lo } else { hi };
            let (s, ws) = if left {
                (reference.left_limit(t), std_traj.left_limit(t))
            } else {
                (reference.at(t), std_traj.at(t))
            };
            let v = |x: T| x.to_f64();
            let ws_m = ws.workload.as_ref().expect("measures kept");
            if !left {
                report.record("positivity", v(s.measure.mass_below(&zero)), &mut flags);
            }
            report.record(
                "u_le_ws",
                v(s.u.clone() - ws.total_work.clone()).max(v(-s.u.clone())),
                &mut flags,
            );
            if let Some(e) = s.leftmost() {
                // In floating point the two measures may place the same atom
                // an ulp apart.
                let cut = if T::is_exact() {
                    e
                } else {
                    let x = e.to_f64();
                    T::from_f64(x + 1e-9 * x.abs().max(1.0))
                };
                let a = s.measure.restrict(&Interval::above(cut.clone()));
                let b = ws_m.restrict(&Interval::above(cut));
                report.record("right_of_e", a.cdf_distance(&b, 1e-9), &mut flags);
            }
            let balance = s.arrived_work.clone() - s.busy.clone() - s.r_u.clone();
            report.record("u_account", v(s.u.clone() - balance).abs(), &mut flags);
            if let Some(k) = &s.k {
                report.record(
                    "decomposition",
                    v(k.k.clone() - (k.k_plus.clone() - k.k_minus.clone())).abs(),
                    &mut flags,
                );
                report.record(
                    "ru_eq_kplus",
                    v(s.r_u.clone() - k.k_plus.clone()).abs(),
                    &mut flags,
                );
                report.record(
                    "decomposition",
                    v(s.u.clone() - (ws.total_work.clone() - k.k.clone())).abs(),
                    &mut flags,
                );
                if let Some(p) = &prev {
                    let pk = p.k.as_ref().expect("k state");
                    let dk_minus = v(k.k_minus.clone() - pk.k_minus.clone());
                    let dk_plus = v(k.k_plus.clone() - pk.k_plus.clone());
                    report.record("k_monotone", (-dk_minus).max(-dk_plus), &mut flags);
                    if dk_minus > eps {
                        let u_max = v(T::max_of(p.u.clone(), s.u.clone()));
                        let span_busy = v(s.busy.clone() - p.busy.clone());
                        report.record("complementarity", u_max.max(span_busy), &mut flags);
                    }
                }
            }
            prev = Some(s);
        }
    }
    Ok(report)
}
