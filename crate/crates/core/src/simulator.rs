//! Event-driven simulation of single-server EDF queues and the comparison
//! policies.
//!
//! Between epochs the server works at unit rate on the customer chosen by
//! the policy and every lead time decreases at unit rate. Within an epoch the
//! order is: service completion, deadline expiries, arrival, then service
//! reassignment. In reneging modes an expiring customer leaves with its
//! residual work; in standard mode it stays and the zero crossing is logged.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::io::Write;

use rand::Rng;
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::measures::AtomicMeasure;
use crate::primitives::{substream, CustomerRecord, STREAM_POLICY};
use crate::scalar::{fmt_sig17, Key, Scalar};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Mode {
    /// Customers leave when their deadline elapses.
    Reneging,
    /// Late customers stay and are served to completion.
    Standard,
}

#[derive(Clone, Debug, PartialEq)]
pub enum PolicySpec {
    EdfReneging,
    EdfStandard,
    /// Preemptive by arrival index, which never preempts.
    FifoReneging,
    /// Preemptive last-come-first-served.
    LifoReneging,
    /// Non-preemptive; picks uniformly among waiting customers when the server frees up.
    RandomReneging { seed: u64 },
    /// Customers flagged high priority are served FIFO ahead of everyone else;
    /// the rest are served EDF. Flags are indexed by arrival order.
    Hybrid { high_priority: Vec<bool> },
}

impl PolicySpec {
    pub fn mode(&self) -> Mode {
        match self {
            Self::EdfStandard => Mode::Standard,
            _ => Mode::Reneging,
        }
    }

    pub fn is_edf(&self) -> bool {
        matches!(self, Self::EdfReneging | Self::EdfStandard)
    }

    pub fn name(&self) -> &'static str {
        match self {
            Self::EdfReneging => "edf_reneging",
            Self::EdfStandard => "edf_standard",
            Self::FifoReneging => "fifo_reneging",
            Self::LifoReneging => "lifo_reneging",
            Self::RandomReneging { .. } => "random_reneging",
            Self::Hybrid { .. } => "hybrid",
        }
    }
}

/// Set of event kinds that occurred at one epoch.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub struct EventKinds(u8);

impl EventKinds {
    pub const ARRIVAL: Self = Self(1);
    pub const COMPLETION: Self = Self(2);
    pub const RENEGE: Self = Self(4);
    pub const ZERO_CROSSING: Self = Self(8);
    pub const HORIZON: Self = Self(16);
    pub const SAMPLE: Self = Self(32);
    /// Reference system: the reference workload returned to zero.
    pub const CYCLE_END: Self = Self(64);

    const NAMES: [(Self, &'static str); 7] = [
        (Self::COMPLETION, "completion"),
        (Self::RENEGE, "renege"),
        (Self::ZERO_CROSSING, "zero_crossing"),
        (Self::ARRIVAL, "arrival"),
        (Self::HORIZON, "horizon"),
        (Self::SAMPLE, "sample"),
        (Self::CYCLE_END, "cycle_end"),
    ];

    pub fn empty() -> Self {
        Self(0)
    }

    pub fn contains(self, other: Self) -> bool {
        self.0 & other.0 == other.0 && other.0 != 0
    }

    pub fn insert(&mut self, other: Self) {
        self.0 |= other.0;
    }

    pub fn is_empty(self) -> bool {
        self.0 == 0
    }

    /// True if anything other than a sampling pseudo-event happened.
    pub fn is_real(self) -> bool {
        self.0 & !Self::SAMPLE.0 != 0
    }
}

impl std::ops::BitOr for EventKinds {
    type Output = Self;
    fn bitor(self, rhs: Self) -> Self {
        Self(self.0 | rhs.0)
    }
}

impl fmt::Display for EventKinds {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let mut first = true;
        for (k, name) in Self::NAMES {
            if self.contains(k) {
                if !first {
                    f.write_str("+")?;
                }
                f.write_str(name)?;
                first = false;
            }
        }
        if first {
            f.write_str("none")?;
        }
        Ok(())
    }
}

#[derive(Clone, Debug)]
struct Job<T> {
    deadline: T,
    service: T,
    residual: T,
    started: bool,
}

enum Chooser {
    Edf,
    EdfStandard,
    Fifo,
    Lifo,
    Random(ChaCha8Rng),
    Hybrid(Vec<bool>),
}

/// Live state of a running system, handed to observers.
pub struct SystemState<T: Scalar> {
    mode: Mode,
    t: T,
    jobs: BTreeMap<u64, Job<T>>,
    /// Present customers whose deadline has not passed, in EDF order.
    pending: BTreeSet<(Key<T>, u64)>,
    /// Standard mode: present customers whose deadline has passed.
    late: BTreeSet<(Key<T>, u64)>,
    high_present: BTreeSet<u64>,
    serving: Option<u64>,
    total_work: T,
    anchor: T,
    idle: T,
    reneged_work: T,
    reneged_customers: u64,
    late_work: T,
    late_service: T,
    late_customers: u64,
    arrived_work: T,
    arrivals: u64,
    completions: u64,
    arrived: Option<CustomerRecord<T>>,
}

impl<T: Scalar> SystemState<T> {
    fn new(mode: Mode, y_hi: T) -> Self {
        Self {
            mode,
            t: T::zero(),
            jobs: BTreeMap::new(),
            pending: BTreeSet::new(),
            late: BTreeSet::new(),
            high_present: BTreeSet::new(),
            serving: None,
            total_work: T::zero(),
            anchor: y_hi,
            idle: T::zero(),
            reneged_work: T::zero(),
            reneged_customers: 0,
            late_work: T::zero(),
            late_service: T::zero(),
            late_customers: 0,
            arrived_work: T::zero(),
            arrivals: 0,
            completions: 0,
            arrived: None,
        }
    }

    pub fn mode(&self) -> Mode {
        self.mode
    }

    pub fn time(&self) -> T {
        self.t.clone()
    }

    pub fn total_work(&self) -> T {
        self.total_work.clone()
    }

    pub fn queue_len(&self) -> u64 {
        self.jobs.len() as u64
    }

    /// Largest lead time ever attained by a customer in service, floored by `y_hi - t`.
    pub fn frontier(&self) -> T {
        self.anchor.clone() - self.t.clone()
    }

    /// Lead time of the customer in service, or the frontier when idle.
    pub fn current_lead(&self) -> T {
        match self.serving {
            Some(i) => self.jobs[&i].deadline.clone() - self.t.clone(),
            None => self.frontier(),
        }
    }

    pub fn is_busy(&self) -> bool {
        self.serving.is_some()
    }

    pub fn idle(&self) -> T {
        self.idle.clone()
    }

    pub fn reneged_work(&self) -> T {
        self.reneged_work.clone()
    }

    pub fn reneged_customers(&self) -> u64 {
        self.reneged_customers
    }

    /// Standard mode: residual work of customers at the instant their deadline passed.
    pub fn late_work(&self) -> T {
        self.late_work.clone()
    }

    /// Standard mode: full service requirement of customers whose deadline
    /// passed while still in system.
    pub fn late_service(&self) -> T {
        self.late_service.clone()
    }

    /// Standard mode: customers whose deadline passed while still in system.
    pub fn late_customers(&self) -> u64 {
        self.late_customers
    }

    pub fn arrived_work(&self) -> T {
        self.arrived_work.clone()
    }

    pub fn arrivals(&self) -> u64 {
        self.arrivals
    }

    pub fn completions(&self) -> u64 {
        self.completions
    }

    /// The customer that arrived at this epoch (only inside `after_event`).
    pub fn arrived(&self) -> Option<&CustomerRecord<T>> {
        self.arrived.as_ref()
    }

    /// Residual work of customers whose lead time is at most zero.
    pub fn late_mass(&self) -> T {
        let mut acc = T::zero();
        for job in self.jobs.values() {
            if job.deadline <= self.t {
                acc += job.residual.clone();
            }
        }
        acc
    }

    /// Residual work placed at current lead times.
    pub fn workload_measure(&self) -> AtomicMeasure<T> {
        let mut m = AtomicMeasure::new();
        for job in self.jobs.values() {
            if job.residual.is_positive() {
                m.add_atom(job.deadline.clone() - self.t.clone(), job.residual.clone())
                    .expect("positive residual");
            }
        }
        m
    }

    /// Unit mass per customer at its current lead time.
    pub fn queue_measure(&self) -> AtomicMeasure<T> {
        let mut m = AtomicMeasure::new();
        for job in self.jobs.values() {
            m.add_atom(job.deadline.clone() - self.t.clone(), T::from_f64(1.0))
                .expect("unit mass");
        }
        m
    }

    pub fn snapshot(&self, with_measures: bool) -> Snapshot<T> {
        Snapshot {
            time: self.time(),
            total_work: self.total_work(),
            queue_len: self.queue_len(),
            frontier: self.frontier(),
            current_lead: self.current_lead(),
            busy: self.is_busy(),
            idle: self.idle(),
            reneged_work: self.reneged_work(),
            reneged_customers: self.reneged_customers,
            late_work: self.late_work(),
            late_customers: self.late_customers,
            arrived_work: self.arrived_work(),
            arrivals: self.arrivals,
            late_mass: if with_measures { self.late_mass() } else { T::zero() },
            workload: with_measures.then(|| self.workload_measure()),
            queue: with_measures.then(|| self.queue_measure()),
        }
    }

    fn next_completion(&self) -> Option<T> {
        self.serving
            .map(|i| self.t.clone() + self.jobs[&i].residual.clone())
    }

    fn next_expiry(&self) -> Option<T> {
        self.pending.first().map(|(d, _)| d.0.clone())
    }

    fn advance_to(&mut self, tn: T) {
        let dt = tn.clone() - self.t.clone();
        match self.serving {
            Some(i) => {
                let job = self.jobs.get_mut(&i).expect("serving job present");
                job.residual -= dt.clone();
                if job.residual < T::zero() {
                    job.residual = T::zero();
                }
                self.total_work -= dt;
                if self.total_work < T::zero() {
                    self.total_work = T::zero();
                }
            }
            None => self.idle += dt,
        }
        self.t = tn;
    }

    fn remove_job(&mut self, i: u64) -> Job<T> {
        let job = self.jobs.remove(&i).expect("job present");
        let key = (Key(job.deadline.clone()), i);
        self.pending.remove(&key);
        self.late.remove(&key);
        self.high_present.remove(&i);
        if self.serving == Some(i) {
            self.serving = None;
        }
        self.total_work -= job.residual.clone();
        if self.jobs.is_empty() || self.total_work < T::zero() {
            self.total_work = T::zero();
        }
        job
    }

    fn complete(&mut self) {
        if let Some(i) = self.serving {
            self.remove_job(i);
            self.completions += 1;
        }
    }

    fn expire(&mut self, kinds: &mut EventKinds) {
        while let Some((d, i)) = self.pending.first().cloned() {
            if d.0 > self.t {
                break;
            }
            let residual = self.jobs[&i].residual.clone();
            if residual.is_negligible() {
                // Completion and deadline coincide up to rounding.
                self.remove_job(i);
                self.completions += 1;
                kinds.insert(EventKinds::COMPLETION);
                continue;
            }
            match self.mode {
                Mode::Reneging => {
                    self.remove_job(i);
                    self.reneged_work += residual;
                    self.reneged_customers += 1;
                    kinds.insert(EventKinds::RENEGE);
                }
                Mode::Standard => {
                    self.pending.remove(&(d.clone(), i));
                    self.late.insert((d, i));
                    self.late_work += residual;
                    self.late_service += self.jobs[&i].service.clone();
                    self.late_customers += 1;
                    kinds.insert(EventKinds::ZERO_CROSSING);
                }
            }
        }
    }

    fn arrive(&mut self, c: CustomerRecord<T>, high: bool) {
        let job = Job {
            deadline: c.deadline.clone(),
            service: c.service.clone(),
            residual: c.service.clone(),
            started: false,
        };
        self.pending.insert((Key(c.deadline.clone()), c.index));
        if high {
            self.high_present.insert(c.index);
        }
        self.jobs.insert(c.index, job);
        self.total_work += c.service.clone();
        self.arrived_work += c.service.clone();
        self.arrivals += 1;
        self.arrived = Some(c);
    }

    fn choose(&self, chooser: &mut Chooser) -> Option<u64> {
        match chooser {
            Chooser::Edf => self.pending.first().map(|(_, i)| *i),
            Chooser::EdfStandard => self
                .late
                .first()
                .or_else(|| self.pending.first())
                .map(|(_, i)| *i),
            Chooser::Fifo => self.jobs.keys().next().copied(),
            Chooser::Lifo => self.jobs.keys().next_back().copied(),
            Chooser::Random(rng) => {
                if let Some(i) = self.serving {
                    return Some(i);
                }
                if self.jobs.is_empty() {
                    return None;
                }
                let k = rng.random_range(0..self.jobs.len());
                self.jobs.keys().nth(k).copied()
            }
            Chooser::Hybrid(_) => match self.high_present.first() {
                Some(i) => Some(*i),
                None => self.pending.first().map(|(_, i)| *i),
            },
        }
    }

    fn reassign(&mut self, chooser: &mut Chooser) {
        let choice = self.choose(chooser);
        self.serving = choice;
        if let Some(i) = choice {
            let job = self.jobs.get_mut(&i).expect("chosen job present");
            if !job.started {
                job.started = true;
                if job.deadline > self.anchor {
                    self.anchor = job.deadline.clone();
                }
            }
        }
    }
}

/// Hooks called at every epoch. `before_event` sees the left limit.
pub trait Observer<T: Scalar> {
    fn start(&mut self, _state: &SystemState<T>) {}
    fn before_event(&mut self, _kinds: EventKinds, _state: &SystemState<T>) {}
    fn after_event(&mut self, _kinds: EventKinds, _state: &SystemState<T>) {}
}

impl<T: Scalar> Observer<T> for () {}

impl<T: Scalar, A: Observer<T>, B: Observer<T>> Observer<T> for (A, B) {
    fn start(&mut self, state: &SystemState<T>) {
        self.0.start(state);
        self.1.start(state);
    }
    fn before_event(&mut self, kinds: EventKinds, state: &SystemState<T>) {
        self.0.before_event(kinds, state);
        self.1.before_event(kinds, state);
    }
    fn after_event(&mut self, kinds: EventKinds, state: &SystemState<T>) {
        self.0.after_event(kinds, state);
        self.1.after_event(kinds, state);
    }
}

#[derive(Clone, Debug)]
pub struct SimOptions<T> {
    /// Upper end of the lead-time support; floors the frontier at `y_hi - t`.
    pub y_hi: T,
    /// Adds pseudo-events at every multiple of this spacing.
    pub sample_every: Option<T>,
}

impl<T: Scalar> SimOptions<T> {
    pub fn new(y_hi: T) -> Self {
        Self {
            y_hi,
            sample_every: None,
        }
    }
}

/// Runs `policy` over `stream` up to `horizon`, reporting every epoch to
/// `observer`. Arrivals exactly at the horizon are processed. Returns the
/// terminal state.
pub fn simulate_with<T, I, O>(
    stream: I,
    policy: &PolicySpec,
    horizon: T,
    opts: &SimOptions<T>,
    observer: &mut O,
) -> Result<Snapshot<T>>
where
    T: Scalar,
    I: IntoIterator<Item = CustomerRecord<T>>,
    O: Observer<T> + ?Sized,
{
    if !(horizon > T::zero()) {
        return Err(Error::NonPositiveHorizon(horizon.to_f64()));
    }
    if let Some(dt) = &opts.sample_every {
        if !(*dt > T::zero()) {
            return Err(Error::InvalidParameter("sample spacing must be positive".into()));
        }
    }
    let mut chooser = match policy {
        PolicySpec::EdfReneging => Chooser::Edf,
        PolicySpec::EdfStandard => Chooser::EdfStandard,
        PolicySpec::FifoReneging => Chooser::Fifo,
        PolicySpec::LifoReneging => Chooser::Lifo,
        PolicySpec::RandomReneging { seed } => Chooser::Random(substream(*seed, STREAM_POLICY)),
        PolicySpec::Hybrid { high_priority } => Chooser::Hybrid(high_priority.clone()),
    };
    let mut state = SystemState::new(policy.mode(), opts.y_hi.clone());
    let mut stream = stream.into_iter().peekable();
    let mut sample_k: u64 = 1;
    let sample_time = |k: u64| -> Option<T> {
        opts.sample_every
            .as_ref()
            .map(|dt| T::from_f64(k as f64) * dt.clone())
    };
    let mut last_arrival: Option<T> = None;

    observer.start(&state);
    loop {
        let next_arrival = match stream.peek() {
            Some(c) => {
                let out_of_order = match &last_arrival {
                    Some(prev) => c.arrival <= *prev,
                    None => c.arrival < T::zero(),
                };
                if out_of_order {
                    return Err(Error::UnsortedStream(c.index));
                }
                (c.arrival <= horizon).then(|| c.arrival.clone())
            }
            None => None,
        };
        let completion = state.next_completion();
        let expiry = state.next_expiry();
        let sample = sample_time(sample_k).filter(|s| *s <= horizon);

        let mut tn = horizon.clone();
        for c in [&next_arrival, &completion, &expiry, &sample].into_iter().flatten() {
            if *c < tn {
                tn = c.clone();
            }
        }
        if tn < state.t {
            tn = state.t.clone();
        }

        let mut kinds = EventKinds::empty();
        if completion.as_ref() == Some(&tn) {
            kinds.insert(EventKinds::COMPLETION);
        }
        if next_arrival.as_ref() == Some(&tn) {
            kinds.insert(EventKinds::ARRIVAL);
        }
        if sample.as_ref() == Some(&tn) {
            kinds.insert(EventKinds::SAMPLE);
        }
        if tn == horizon {
            kinds.insert(EventKinds::HORIZON);
        }

        state.advance_to(tn.clone());
        state.arrived = None;
        observer.before_event(kinds, &state);

        if kinds.contains(EventKinds::COMPLETION) {
            if let Some(i) = state.serving {
                state.jobs.get_mut(&i).expect("serving job").residual = T::zero();
            }
            state.complete();
        }
        state.expire(&mut kinds);
        if kinds.contains(EventKinds::ARRIVAL) {
            let c = stream.next().expect("peeked arrival");
            let high = match &chooser {
                Chooser::Hybrid(flags) => flags
                    .get((c.index as usize).wrapping_sub(1))
                    .copied()
                    .unwrap_or(false),
                _ => false,
            };
            last_arrival = Some(c.arrival.clone());
            state.arrive(c, high);
        }
        state.reassign(&mut chooser);
        observer.after_event(kinds, &state);

        if kinds.contains(EventKinds::SAMPLE) {
            sample_k += 1;
        }
        if kinds.contains(EventKinds::HORIZON) {
            break;
        }
    }
    state.arrived = None;
    Ok(state.snapshot(false))
}

/// Counters and, optionally, measures at one instant.
#[derive(Clone, Debug, PartialEq)]
pub struct Snapshot<T: Scalar> {
    pub time: T,
    pub total_work: T,
    pub queue_len: u64,
    pub frontier: T,
    pub current_lead: T,
    pub busy: bool,
    pub idle: T,
    pub reneged_work: T,
    pub reneged_customers: u64,
    pub late_work: T,
    pub late_customers: u64,
    pub arrived_work: T,
    pub arrivals: u64,
    /// Work at lead times at most zero; only filled when measures are kept.
    pub late_mass: T,
    pub workload: Option<AtomicMeasure<T>>,
    pub queue: Option<AtomicMeasure<T>>,
}

impl<T: Scalar> Snapshot<T> {
    /// Deterministic evolution over `dt` with no event in between.
    pub fn evolve(&self, dt: T) -> Snapshot<T> {
        let mut s = self.clone();
        s.time += dt.clone();
        s.frontier -= dt.clone();
        if s.busy {
            let served_at = s.current_lead.clone();
            s.total_work -= dt.clone();
            if s.total_work < T::zero() {
                s.total_work = T::zero();
            }
            if let Some(w) = s.workload.as_mut() {
                w.reduce_atom_at(&served_at, dt.clone());
                w.drift(dt.clone()).expect("nonnegative dt");
            }
            if served_at <= T::zero() {
                s.late_mass -= dt.clone();
                if s.late_mass < T::zero() {
                    s.late_mass = T::zero();
                }
            }
            s.current_lead -= dt.clone();
        } else {
            s.idle += dt.clone();
            s.current_lead -= dt.clone();
        }
        if let Some(q) = s.queue.as_mut() {
            q.drift(dt).expect("nonnegative dt");
        }
        s
    }
}

/// One epoch: the kinds that occurred and the state on either side.
#[derive(Clone, Debug)]
pub struct EventRecord<T: Scalar> {
    pub kinds: EventKinds,
    pub pre: Snapshot<T>,
    pub post: Snapshot<T>,
}

impl<T: Scalar> EventRecord<T> {
    pub fn time(&self) -> &T {
        &self.post.time
    }
}

/// Complete event log of one run.
#[derive(Clone, Debug)]
pub struct SystemTrajectory<T: Scalar = f64> {
    pub policy: String,
    pub mode: Mode,
    pub is_edf: bool,
    pub horizon: T,
    pub y_hi: T,
    pub initial: Snapshot<T>,
    pub events: Vec<EventRecord<T>>,
    /// Arrived customers in order.
    pub customers: Vec<CustomerRecord<T>>,
    pub has_measures: bool,
}

/// Observer that stores every epoch.
pub struct TrajectoryRecorder<T: Scalar> {
    keep_measures: bool,
    initial: Option<Snapshot<T>>,
    pending_pre: Option<Snapshot<T>>,
    events: Vec<EventRecord<T>>,
    customers: Vec<CustomerRecord<T>>,
}

impl<T: Scalar> TrajectoryRecorder<T> {
    pub fn new(keep_measures: bool) -> Self {
        Self {
            keep_measures,
            initial: None,
            pending_pre: None,
            events: Vec::new(),
            customers: Vec::new(),
        }
    }

    pub fn finish(self, policy: &PolicySpec, horizon: T, y_hi: T) -> SystemTrajectory<T> {
        SystemTrajectory {
            policy: policy.name().to_string(),
            mode: policy.mode(),
            is_edf: policy.is_edf(),
            horizon,
            y_hi,
            initial: self.initial.expect("run started"),
            events: self.events,
            customers: self.customers,
            has_measures: self.keep_measures,
        }
    }
}

impl<T: Scalar> Observer<T> for TrajectoryRecorder<T> {
    fn start(&mut self, state: &SystemState<T>) {
        self.initial = Some(state.snapshot(self.keep_measures));
    }
    fn before_event(&mut self, _kinds: EventKinds, state: &SystemState<T>) {
        self.pending_pre = Some(state.snapshot(self.keep_measures));
    }
    fn after_event(&mut self, kinds: EventKinds, state: &SystemState<T>) {
        if let Some(c) = state.arrived() {
            self.customers.push(c.clone());
        }
        self.events.push(EventRecord {
            kinds,
            pre: self.pending_pre.take().expect("left limit recorded"),
            post: state.snapshot(self.keep_measures),
        });
    }
}

/// Simulates a materialized stream and keeps the full event log with measures.
pub fn simulate<T: Scalar>(
    stream: &[CustomerRecord<T>],
    policy: &PolicySpec,
    horizon: T,
    y_hi: T,
) -> Result<SystemTrajectory<T>> {
    let mut rec = TrajectoryRecorder::new(true);
    simulate_with(
        stream.iter().cloned(),
        policy,
        horizon.clone(),
        &SimOptions::new(y_hi.clone()),
        &mut rec,
    )?;
    Ok(rec.finish(policy, horizon, y_hi))
}

/// One point of the frontier record.
#[derive(Clone, Debug, PartialEq)]
pub struct FrontierPoint<T> {
    pub time: T,
    pub frontier: T,
    pub current_lead: T,
}

pub const TRAJECTORY_CSV_HEADER: &str =
    "time,event,total_work,total_queue,frontier,reneged_work,reneged_customers,idle";

fn csv_row<T: Scalar>(kinds: EventKinds, s: &Snapshot<T>) -> String {
    format!(
        "{},{},{},{},{},{},{},{}",
        fmt_sig17(s.time.to_f64()),
        kinds,
        fmt_sig17(s.total_work.to_f64()),
        s.queue_len,
        fmt_sig17(s.frontier.to_f64()),
        fmt_sig17(s.reneged_work.to_f64()),
        s.reneged_customers,
        fmt_sig17(s.idle.to_f64()),
    )
}

impl<T: Scalar> SystemTrajectory<T> {
    pub fn final_state(&self) -> &Snapshot<T> {
        self.events.last().map(|e| &e.post).unwrap_or(&self.initial)
    }

    /// State at `t` (right-continuous version).
    pub fn at(&self, t: &T) -> Snapshot<T> {
        let k = self.events.partition_point(|e| e.time() <= t);
        let base = if k == 0 {
            &self.initial
        } else {
            &self.events[k - 1].post
        };
        base.evolve(t.clone() - base.time.clone())
    }

    /// Left limit at `t`.
    pub fn left_limit(&self, t: &T) -> Snapshot<T> {
        let k = self.events.partition_point(|e| e.time() < t);
        if k < self.events.len() && self.events[k].time() == t {
            return self.events[k].pre.clone();
        }
        let base = if k == 0 {
            &self.initial
        } else {
            &self.events[k - 1].post
        };
        base.evolve(t.clone() - base.time.clone())
    }

    fn require_mode(&self, mode: Mode) -> Result<()> {
        if self.mode != mode {
            return Err(Error::ModeMismatch {
                expected: match mode {
                    Mode::Reneging => "a reneging policy",
                    Mode::Standard => "the standard system",
                },
                found: self.policy.clone(),
            });
        }
        Ok(())
    }

    /// Frontier and current lead after every epoch.
    pub fn frontier_track(&self) -> Result<Vec<FrontierPoint<T>>> {
        if !self.is_edf {
            return Err(Error::ModeMismatch {
                expected: "an EDF policy",
                found: self.policy.clone(),
            });
        }
        Ok(std::iter::once(&self.initial)
            .chain(self.events.iter().map(|e| &e.post))
            .map(|s| FrontierPoint {
                time: s.time.clone(),
                frontier: s.frontier.clone(),
                current_lead: s.current_lead.clone(),
            })
            .collect())
    }

    /// `(time, R_W)` after every epoch.
    pub fn reneged_work_curve(&self) -> Result<Vec<(T, T)>> {
        self.require_mode(Mode::Reneging)?;
        Ok(self
            .events
            .iter()
            .map(|e| (e.post.time.clone(), e.post.reneged_work.clone()))
            .collect())
    }

    /// `(time, late work, late customers)` after every epoch of a standard run.
    pub fn late_work_curve(&self) -> Result<Vec<(T, T, u64)>> {
        self.require_mode(Mode::Standard)?;
        Ok(self
            .events
            .iter()
            .map(|e| {
                (
                    e.post.time.clone(),
                    e.post.late_work.clone(),
                    e.post.late_customers,
                )
            })
            .collect())
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::from(TRAJECTORY_CSV_HEADER);
        out.push('\n');
        for e in &self.events {
            out.push_str(&csv_row(e.kinds, &e.post));
            out.push('\n');
        }
        out
    }

    /// Per-event workload measures, for debugging.
    pub fn measure_dump(&self) -> Result<String> {
        if !self.has_measures {
            return Err(Error::MissingData("measure snapshots"));
        }
        let mut out = String::from("time,side,location,mass\n");
        for e in &self.events {
            for (side, s) in [("pre", &e.pre), ("post", &e.post)] {
                for (l, m) in s.workload.as_ref().expect("measures kept").atoms() {
                    out.push_str(&format!(
                        "{},{},{},{}\n",
                        fmt_sig17(s.time.to_f64()),
                        side,
                        fmt_sig17(l.to_f64()),
                        fmt_sig17(m.to_f64())
                    ));
                }
            }
        }
        Ok(out)
    }
}

/// Streams trajectory CSV rows for runs too long to keep in memory.
pub struct CsvObserver<W: Write> {
    out: W,
    error: Option<std::io::Error>,
    include_samples: bool,
}

impl<W: Write> CsvObserver<W> {
    pub fn new(mut out: W) -> Self {
        let error = writeln!(out, "{TRAJECTORY_CSV_HEADER}").err();
        Self {
            out,
            error,
            include_samples: false,
        }
    }

    pub fn include_samples(mut self, yes: bool) -> Self {
        self.include_samples = yes;
        self
    }

    pub fn finish(mut self) -> std::io::Result<W> {
        if let Some(e) = self.error.take() {
            return Err(e);
        }
        self.out.flush()?;
        Ok(self.out)
    }
}

impl<T: Scalar, W: Write> Observer<T> for CsvObserver<W> {
    fn after_event(&mut self, kinds: EventKinds, state: &SystemState<T>) {
        if self.error.is_some() || (!kinds.is_real() && !self.include_samples) {
            return;
        }
        if let Err(e) = writeln!(self.out, "{}", csv_row(kinds, &state.snapshot(false))) {
            self.error = Some(e);
        }
    }
}

struct FrontierAtArrival {
    flags: Vec<bool>,
}

impl<T: Scalar> Observer<T> for FrontierAtArrival {
    fn after_event(&mut self, _kinds: EventKinds, state: &SystemState<T>) {
        if let Some(c) = state.arrived() {
            self.flags.push(c.lead < state.frontier());
        }
    }
}

/// High-priority flags `L_k < F(S_k)` from a companion EDF reneging run.
pub fn hybrid_flags<T: Scalar>(stream: &[CustomerRecord<T>], horizon: T, y_hi: T) -> Result<Vec<bool>> {
    let mut obs = FrontierAtArrival { flags: Vec::new() };
    simulate_with(
        stream.iter().cloned(),
        &PolicySpec::EdfReneging,
        horizon,
        &SimOptions::new(y_hi),
        &mut obs,
    )?;
    Ok(obs.flags)
}

struct RenegeCurve<T> {
    points: Vec<(T, T)>,
}

impl<T: Scalar> Observer<T> for RenegeCurve<T> {
    fn after_event(&mut self, _kinds: EventKinds, state: &SystemState<T>) {
        self.points.push((state.time(), state.reneged_work()));
    }
}

/// Reneged-work curves of several policies on a common time grid.
#[derive(Clone, Debug)]
pub struct PolicyCurves<T> {
    pub times: Vec<T>,
    pub curves: Vec<(String, Vec<T>)>,
}

impl<T: Scalar> PolicyCurves<T> {
    pub fn curve(&self, name: &str) -> Option<&[T]> {
        self.curves
            .iter()
            .find(|(n, _)| n == name)
            .map(|(_, c)| c.as_slice())
    }
}

/// Runs every reneging policy on the same stream and evaluates each `R_π`
/// at the union of all epochs.
pub fn run_policy_suite<T: Scalar>(
    stream: &[CustomerRecord<T>],
    policies: &[PolicySpec],
    horizon: T,
    y_hi: T,
) -> Result<PolicyCurves<T>> {
    let mut raw = Vec::with_capacity(policies.len());
    for p in policies {
        if p.mode() != Mode::Reneging {
            return Err(Error::ModeMismatch {
                expected: "a reneging policy",
                found: p.name().to_string(),
            });
        }
        let mut obs = RenegeCurve { points: Vec::new() };
        simulate_with(
            stream.iter().cloned(),
            p,
            horizon.clone(),
            &SimOptions::new(y_hi.clone()),
            &mut obs,
        )?;
        raw.push((p.name().to_string(), obs.points));
    }
    let mut times: Vec<T> = raw
        .iter()
        .flat_map(|(_, pts)| pts.iter().map(|(t, _)| t.clone()))
        .collect();
    times.sort_by(|a, b| a.partial_cmp(b).expect("finite times"));
    times.dedup();
    let curves = raw
        .into_iter()
        .map(|(name, pts)| {
            let mut k = 0;
            let mut current = T::zero();
            let values = times
                .iter()
                .map(|t| {
                    while k < pts.len() && pts[k].0 <= *t {
                        current = pts[k].1.clone();
                        k += 1;
                    }
                    current.clone()
                })
                .collect();
            (name, values)
        })
        .collect();
    Ok(PolicyCurves { times, curves })
}
