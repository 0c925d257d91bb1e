//! Deterministic discrete-event cluster simulator.
//!
//! Jobs progress at rate `1 / slowdown`, where the slowdown of a host is its
//! worst cpu or I/O oversubscription. Between two events every host's
//! utilization is constant, so the energy ledger integrates each interval
//! exactly once with a constant power draw.

mod events;

use std::collections::{BTreeMap, BTreeSet, VecDeque};

use serde::{Deserialize, Serialize};

pub use events::{Event, EventKind, EventQueue};

use crate::energy::{
    host_power, Capacity, Demand, EnergyCoefficients, EnergyLedger, HostId, HostState, PowerState,
};
use crate::error::{Error, Result};
use crate::predictor::{features, sla_risk, EnergyPredictor, Features, TrainingRecord};
use crate::profiling::WorkloadProfile;
use crate::scheduler::{
    check_sla, consolidation_pass, migration_duration, place_workload, round_robin_place,
    MigrationOrder, Placement, PlacementPlan, SchedulerConfig,
};
use crate::workloads::Arrival;

pub const RESULT_FORMAT: &str = "ecosched.result/v1";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Policy {
    EnergyAware,
    RoundRobin,
}

impl std::str::FromStr for Policy {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "energy-aware" | "energy_aware" | "ea" => Ok(Policy::EnergyAware),
            "round-robin" | "round_robin" | "rr" => Ok(Policy::RoundRobin),
            _ => Err(Error::InvalidConfig(format!("unknown policy `{s}`"))),
        }
    }
}

impl std::fmt::Display for Policy {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Policy::EnergyAware => "energy-aware",
            Policy::RoundRobin => "round-robin",
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct HostSpec {
    pub capacity: Capacity,
    pub coefficients: EnergyCoefficients,
    pub freq: f64,
    /// Seconds from power-on order to accepting work.
    pub boot_delay: f64,
}

impl Default for HostSpec {
    fn default() -> Self {
        Self {
            capacity: Capacity::default(),
            coefficients: EnergyCoefficients::default(),
            freq: 1.0,
            boot_delay: 30.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClusterSpec {
    /// Host `i` gets id `i`.
    pub hosts: Vec<HostSpec>,
    /// Migration bandwidth in GB/s.
    pub bandwidth: f64,
    /// Network utilization added to both endpoints while a migration runs.
    pub migration_net_overhead: f64,
}

impl ClusterSpec {
    pub fn uniform(count: usize) -> Self {
        Self {
            hosts: vec![HostSpec::default(); count],
            bandwidth: 0.125,
            migration_net_overhead: 0.2,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.hosts.is_empty() {
            return Err(Error::InvalidConfig("cluster has no hosts".into()));
        }
        for (i, h) in self.hosts.iter().enumerate() {
            h.coefficients.validate()?;
            let mut probe = HostState::idle(HostId(i as u32));
            probe.freq = h.freq;
            probe.capacity = h.capacity;
            probe.validate()?;
            if !(h.boot_delay >= 0.0 && h.boot_delay.is_finite()) {
                return Err(Error::InvalidConfig(format!(
                    "host {i}: boot_delay must be >= 0"
                )));
            }
        }
        if !(self.bandwidth > 0.0 && self.bandwidth.is_finite()) {
            return Err(Error::InvalidConfig("bandwidth must be > 0".into()));
        }
        if !(0.0..=1.0).contains(&self.migration_net_overhead) {
            return Err(Error::InvalidConfig(
                "migration_net_overhead must lie in [0, 1]".into(),
            ));
        }
        Ok(())
    }
}

/// Slowdown factor of a host: `max(1, cpu / cap_cpu, io / cap_io)` with
/// `io = max(disk, net)`. Memory never slows jobs down.
pub fn contention_slowdown(load: &Demand, capacity: &Capacity) -> f64 {
    (load.cpu / capacity.cpu)
        .max(load.io() / capacity.io)
        .max(1.0)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct JobOutcome {
    pub workload_id: String,
    pub arrival_time: f64,
    pub nominal_duration: f64,
    pub start_time: Option<f64>,
    pub completion_time: Option<f64>,
    /// `nominal / (completion - start)`, capped at 1.
    pub sla_score: Option<f64>,
    pub compliant: Option<bool>,
    pub host: Option<HostId>,
    pub migrations: u32,
    /// Share of host energy above idle attributed to this job.
    pub attributed_wh: f64,
    /// Seconds of nominal work done.
    pub progress: f64,
    /// Workload and host features at first placement.
    pub placement_features: Option<Features>,
}

impl JobOutcome {
    pub fn turnaround(&self) -> Option<f64> {
        self.completion_time.map(|c| c - self.arrival_time)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HostOutcome {
    pub host_id: HostId,
    pub total_wh: f64,
    pub idle_wh: f64,
    pub attributed_wh: f64,
    pub on_seconds: f64,
    pub power_ons: u32,
    pub power_offs: u32,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimulationResult {
    pub format: String,
    pub policy: Policy,
    pub horizon: f64,
    pub jobs: Vec<JobOutcome>,
    pub hosts: Vec<HostOutcome>,
    pub total_energy_wh: f64,
    pub on_host_seconds: f64,
    pub migrations: u32,
    pub aborted_migrations: u32,
    pub completed: usize,
    /// Placed but unfinished at the horizon, including jobs waiting on a
    /// booting host.
    pub running_at_end: usize,
    pub queued_at_end: usize,
}

impl SimulationResult {
    /// One record per completed job: its features at placement and the
    /// energy attributed to it.
    pub fn training_records(&self) -> Vec<TrainingRecord> {
        self.jobs
            .iter()
            .filter(|j| j.completion_time.is_some())
            .filter_map(|j| {
                j.placement_features.map(|features| TrainingRecord {
                    features,
                    target: j.attributed_wh,
                })
            })
            .collect()
    }

    pub fn compliance_rate(&self) -> f64 {
        let done: Vec<bool> = self.jobs.iter().filter_map(|j| j.compliant).collect();
        if done.is_empty() {
            return 1.0;
        }
        done.iter().filter(|c| **c).count() as f64 / done.len() as f64
    }

    pub fn mean_sla_score(&self) -> f64 {
        mean(self.jobs.iter().filter_map(|j| j.sla_score))
    }

    /// Mean of `(turnaround - nominal) / nominal` over completed jobs.
    pub fn mean_completion_deviation(&self) -> f64 {
        mean(self.jobs.iter().filter_map(|j| {
            j.turnaround()
                .map(|t| (t - j.nominal_duration) / j.nominal_duration)
        }))
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("result serializes")
    }
}

pub(crate) fn mean(it: impl Iterator<Item = f64>) -> f64 {
    let (s, n) = it.fold((0.0, 0usize), |(s, n), v| (s + v, n + 1));
    if n == 0 {
        0.0
    } else {
        s / n as f64
    }
}

/// Constant-utilization stretch of the run, as seen by the power model.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Segment {
    pub start: f64,
    pub end: f64,
    pub hosts: Vec<HostState>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct Trace {
    pub coefficients: Vec<EnergyCoefficients>,
    pub segments: Vec<Segment>,
    pub events: Vec<Event>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Phase {
    Off,
    Booting,
    On,
    /// Evacuating; powers off once empty.
    Draining,
}

#[derive(Debug)]
struct HostRt {
    id: HostId,
    spec: HostSpec,
    phase: Phase,
    running: BTreeSet<usize>,
    waiting: Vec<usize>,
    inbound: BTreeSet<usize>,
    outbound: BTreeSet<usize>,
    power_ons: u32,
    power_offs: u32,
}

#[derive(Debug, Clone, Copy, PartialEq)]
enum JobPhase {
    Pending,
    Queued,
    Waiting(HostId),
    Running(HostId),
    Done(HostId),
}

#[derive(Debug, Clone, Copy)]
struct InFlight {
    source: HostId,
    destination: HostId,
}

#[derive(Debug)]
struct JobRt {
    profile: WorkloadProfile,
    arrival_time: f64,
    phase: JobPhase,
    progress: f64,
    rate: f64,
    last_update: f64,
    version: u64,
    start_time: Option<f64>,
    completion_time: Option<f64>,
    migration: Option<InFlight>,
    migrations: u32,
    attributed_wh: f64,
    features: Option<Features>,
}

/// A single simulation run. Construct, then [`run`](Simulation::run).
pub struct Simulation<'a> {
    cluster: &'a ClusterSpec,
    config: SchedulerConfig,
    policy: Policy,
    predictor: &'a dyn EnergyPredictor,
    horizon: Option<f64>,
    record_trace: bool,

    now: f64,
    queue: EventQueue,
    hosts: Vec<HostRt>,
    jobs: Vec<JobRt>,
    wait_queue: VecDeque<usize>,
    plan: PlacementPlan,
    ledger: EnergyLedger,
    trace: Trace,
    migrations: u32,
    aborted_migrations: u32,
    next_tick: u64,
}

impl<'a> Simulation<'a> {
    /// Arrivals are processed in `(arrival_time, list position)` order; that
    /// order defines the round-robin arrival index.
    pub fn new(
        cluster: &'a ClusterSpec,
        config: SchedulerConfig,
        arrivals: &[Arrival],
        policy: Policy,
        predictor: &'a dyn EnergyPredictor,
    ) -> Result<Self> {
        cluster.validate()?;
        config.validate()?;
        let mut ordered: Vec<&Arrival> = arrivals.iter().collect();
        ordered.sort_by(|a, b| a.arrival_time.total_cmp(&b.arrival_time));
        for a in &ordered {
            a.profile.validate()?;
            if !(a.arrival_time >= 0.0 && a.arrival_time.is_finite()) {
                return Err(Error::InvalidConfig(format!(
                    "workload {}: arrival_time must be >= 0",
                    a.profile.workload_id
                )));
            }
            let feasible = cluster.hosts.iter().enumerate().any(|(i, h)| {
                let mut empty = HostState::idle(HostId(i as u32));
                empty.capacity = h.capacity;
                empty.freq = h.freq;
                a.profile.mem <= h.capacity.mem + 1e-12
                    && sla_risk(&a.profile, &empty) <= config.risk_cap
            });
            if !feasible {
                return Err(Error::InfeasibleWorkload(a.profile.workload_id.clone()));
            }
        }
        let mut seen = BTreeSet::new();
        for a in &ordered {
            if !seen.insert(a.profile.workload_id.as_str()) {
                return Err(Error::InvalidConfig(format!(
                    "duplicate workload id {}",
                    a.profile.workload_id
                )));
            }
        }

        let hosts = cluster
            .hosts
            .iter()
            .enumerate()
            .map(|(i, spec)| HostRt {
                id: HostId(i as u32),
                spec: *spec,
                phase: Phase::On,
                running: BTreeSet::new(),
                waiting: Vec::new(),
                inbound: BTreeSet::new(),
                outbound: BTreeSet::new(),
                power_ons: 0,
                power_offs: 0,
            })
            .collect();
        let jobs = ordered
            .iter()
            .map(|a| JobRt {
                profile: a.profile.clone(),
                arrival_time: a.arrival_time,
                phase: JobPhase::Pending,
                progress: 0.0,
                rate: 0.0,
                last_update: 0.0,
                version: 0,
                start_time: None,
                completion_time: None,
                migration: None,
                migrations: 0,
                attributed_wh: 0.0,
                features: None,
            })
            .collect();

        Ok(Self {
            cluster,
            config,
            policy,
            predictor,
            horizon: None,
            record_trace: false,
            now: 0.0,
            queue: EventQueue::default(),
            hosts,
            jobs,
            wait_queue: VecDeque::new(),
            plan: PlacementPlan::default(),
            ledger: EnergyLedger::new(),
            trace: Trace::default(),
            migrations: 0,
            aborted_migrations: 0,
            next_tick: 1,
        })
    }

    /// Stop at a fixed time instead of running to quiescence.
    pub fn with_horizon(mut self, horizon: Option<f64>) -> Self {
        self.horizon = horizon;
        self
    }

    pub fn record_trace(mut self, on: bool) -> Self {
        self.record_trace = on;
        self
    }

    pub fn run(self) -> Result<SimulationResult> {
        self.run_traced().map(|(r, _)| r)
    }

    pub fn run_traced(mut self) -> Result<(SimulationResult, Trace)> {
        if let Some(h) = self.horizon {
            if !(h >= 0.0 && h.is_finite()) {
                return Err(Error::InvalidConfig(format!(
                    "horizon must be >= 0, got {h}"
                )));
            }
        }
        self.trace.coefficients = self.hosts.iter().map(|h| h.spec.coefficients).collect();
        for (k, j) in self.jobs.iter().enumerate() {
            self.queue.push(Event {
                time: j.arrival_time,
                kind: EventKind::Arrival,
                id: k as u64,
                version: 0,
            });
        }
        self.schedule_tick();

        loop {
            if self.horizon.is_none() && self.quiescent() {
                break;
            }
            let Some(next) = self.queue.peek_time() else {
                break;
            };
            if let Some(h) = self.horizon {
                if next > h {
                    break;
                }
            }
            let ev = self.queue.pop().expect("peeked");
            self.advance_to(ev.time)?;
            if self.record_trace {
                self.trace.events.push(ev);
            }
            self.handle(ev)?;
        }
        if let Some(h) = self.horizon {
            if h > self.now {
                self.advance_to(h)?;
            }
        }
        let trace = std::mem::take(&mut self.trace);
        Ok((self.finish(), trace))
    }

    fn quiescent(&self) -> bool {
        self.jobs
            .iter()
            .all(|j| matches!(j.phase, JobPhase::Done(_)))
    }

    fn schedule_tick(&mut self) {
        if self.policy != Policy::EnergyAware {
            return;
        }
        let t = self.next_tick as f64 * self.config.consolidation_period;
        self.queue.push(Event {
            time: t,
            kind: EventKind::ConsolidationTick,
            id: self.next_tick,
            version: 0,
        });
        self.next_tick += 1;
    }

    // ---- state views -------------------------------------------------

    fn overhead(&self, h: &HostRt) -> f64 {
        self.cluster.migration_net_overhead * (h.inbound.len() + h.outbound.len()) as f64
    }

    fn running_demand(&self, h: &HostRt) -> Demand {
        let mut d = Demand::default();
        for &j in &h.running {
            d += Demand::of(&self.jobs[j].profile);
        }
        d.net += self.overhead(h);
        d
    }

    fn effective_capacity(h: &HostRt) -> Capacity {
        Capacity {
            cpu: h.spec.capacity.cpu * h.spec.freq,
            ..h.spec.capacity
        }
    }

    fn slowdown(&self, h: &HostRt) -> f64 {
        contention_slowdown(&self.running_demand(h), &Self::effective_capacity(h))
    }

    /// Host as the power model sees it: rate-limited dimensions are scaled
    /// down by the host's slowdown.
    fn power_state(&self, h: &HostRt) -> HostState {
        let mut s = HostState::idle(h.id);
        s.freq = h.spec.freq;
        s.capacity = h.spec.capacity;
        if h.phase == Phase::Off {
            s.power_state = PowerState::Off;
            return s;
        }
        let d = self.running_demand(h);
        let k = contention_slowdown(&d, &Self::effective_capacity(h));
        s.load = Demand {
            cpu: d.cpu / k,
            mem: d.mem,
            disk: d.disk / k,
            net: d.net / k,
        };
        s
    }

    /// Host as the scheduler sees it: committed demand including jobs waiting
    /// on a boot and migrations in flight towards it.
    fn scheduler_state(&self, h: &HostRt) -> HostState {
        let mut s = HostState::idle(h.id);
        s.freq = h.spec.freq;
        s.capacity = h.spec.capacity;
        if h.phase == Phase::Off {
            s.power_state = PowerState::Off;
            return s;
        }
        let mut d = self.running_demand(h);
        for &j in h.waiting.iter().chain(h.inbound.iter()) {
            d += Demand::of(&self.jobs[j].profile);
        }
        s.load = d;
        s
    }

    // ---- time advance -------------------------------------------------

    fn advance_to(&mut self, t: f64) -> Result<()> {
        let dt = t - self.now;
        if dt < 0.0 {
            return Err(Error::NegativeInterval(dt));
        }
        let states: Vec<HostState> = self.hosts.iter().map(|h| self.power_state(h)).collect();
        self.ledger.accrue(
            states
                .iter()
                .zip(self.hosts.iter().map(|h| &h.spec.coefficients)),
            dt,
        )?;
        if dt > 0.0 {
            for (h, s) in self.hosts.iter().zip(&states) {
                if !s.is_on() || h.running.is_empty() {
                    continue;
                }
                let c = &h.spec.coefficients;
                let dynamic_wh = (host_power(s, c) - c.p_idle) * dt / 3600.0;
                let weight = |w: &WorkloadProfile| {
                    c.alpha * h.spec.freq * w.cpu + c.beta * w.mem + c.gamma * w.io()
                };
                let total: f64 = h
                    .running
                    .iter()
                    .map(|&j| weight(&self.jobs[j].profile))
                    .sum();
                let n = h.running.len() as f64;
                for &j in &h.running {
                    let share = if total > 0.0 {
                        weight(&self.jobs[j].profile) / total
                    } else {
                        1.0 / n
                    };
                    self.jobs[j].attributed_wh += dynamic_wh * share;
                }
            }
            if self.record_trace {
                self.trace.segments.push(Segment {
                    start: self.now,
                    end: t,
                    hosts: states,
                });
            }
        }
        self.now = t;
        Ok(())
    }

    /// Brings every job on `host` up to date and reschedules completions whose
    /// rate changed.
    fn refresh(&mut self, host: HostId) {
        let h = &self.hosts[host.0 as usize];
        let rate = 1.0 / self.slowdown(h);
        let running: Vec<usize> = h.running.iter().copied().collect();
        for j in running {
            let now = self.now;
            let job = &mut self.jobs[j];
            if job.rate == rate {
                continue;
            }
            job.progress += (now - job.last_update) * job.rate;
            job.last_update = now;
            job.rate = rate;
            job.version += 1;
            let remaining = (job.profile.nominal_duration - job.progress).max(0.0);
            self.queue.push(Event {
                time: now + remaining / rate,
                kind: EventKind::Completion,
                id: j as u64,
                version: job.version,
            });
        }
    }

    // ---- event handlers -------------------------------------------------

    fn handle(&mut self, ev: Event) -> Result<()> {
        match ev.kind {
            EventKind::Arrival => {
                let j = ev.id as usize;
                if !self.try_place(j) {
                    self.jobs[j].phase = JobPhase::Queued;
                    self.plan
                        .record(&self.jobs[j].profile.workload_id, Placement::Queue);
                    self.wait_queue.push_back(j);
                }
            }
            EventKind::Completion => {
                let j = ev.id as usize;
                if self.jobs[j].version != ev.version
                    || matches!(self.jobs[j].phase, JobPhase::Done(_))
                {
                    return Ok(());
                }
                self.complete(j);
                self.drain_queue();
            }
            EventKind::MigrationDone => self.finish_migration(ev.id as usize),
            EventKind::PowerOnDone => {
                let h = ev.id as usize;
                self.hosts[h].phase = Phase::On;
                let waiting = std::mem::take(&mut self.hosts[h].waiting);
                for j in waiting {
                    self.start(j, HostId(h as u32));
                }
                self.refresh(HostId(h as u32));
            }
            EventKind::ConsolidationTick => {
                self.consolidate();
                self.drain_queue();
                let active = !self.quiescent();
                let before_horizon = self.horizon.is_some_and(|h| self.now < h);
                if active || before_horizon {
                    self.schedule_tick();
                }
            }
        }
        Ok(())
    }

    /// Places job `j` per policy; false if it must queue.
    fn try_place(&mut self, j: usize) -> bool {
        let profile = self.jobs[j].profile.clone();
        let view: Vec<HostState> = self
            .hosts
            .iter()
            .filter(|h| h.phase != Phase::Draining)
            .map(|h| self.scheduler_state(h))
            .collect();
        let placement = match self.policy {
            Policy::RoundRobin => match round_robin_place(&profile, j, &view) {
                Ok(h) => Placement::Assign(h),
                Err(_) => Placement::Queue,
            },
            Policy::EnergyAware => place_workload(&profile, &view, self.predictor, &self.config),
        };
        let host = match placement {
            Placement::Queue => return false,
            Placement::Assign(h) | Placement::PowerOn(h) => h,
        };
        if self.jobs[j].features.is_none() {
            let hs = view
                .iter()
                .find(|s| s.host_id == host)
                .expect("placed on a listed host");
            self.jobs[j].features = Some(features(&profile, hs));
        }
        self.plan.record(&profile.workload_id, placement);
        let hi = host.0 as usize;
        if let Placement::PowerOn(_) = placement {
            debug_assert_eq!(self.hosts[hi].phase, Phase::Off);
            self.hosts[hi].phase = Phase::Booting;
            self.hosts[hi].power_ons += 1;
            self.queue.push(Event {
                time: self.now + self.hosts[hi].spec.boot_delay,
                kind: EventKind::PowerOnDone,
                id: hi as u64,
                version: 0,
            });
        }
        if self.hosts[hi].phase == Phase::Booting {
            self.hosts[hi].waiting.push(j);
            self.jobs[j].phase = JobPhase::Waiting(host);
        } else {
            self.start(j, host);
            self.refresh(host);
        }
        true
    }

    fn start(&mut self, j: usize, host: HostId) {
        let now = self.now;
        let job = &mut self.jobs[j];
        job.phase = JobPhase::Running(host);
        job.start_time = Some(now);
        job.last_update = now;
        job.rate = 0.0;
        self.hosts[host.0 as usize].running.insert(j);
    }

    fn drain_queue(&mut self) {
        let pending: Vec<usize> = self.wait_queue.drain(..).collect();
        for j in pending {
            if !self.try_place(j) {
                self.wait_queue.push_back(j);
            }
        }
    }

    fn complete(&mut self, j: usize) {
        let now = self.now;
        let JobPhase::Running(host) = self.jobs[j].phase else {
            unreachable!("completion for a job that is not running");
        };
        let job = &mut self.jobs[j];
        job.progress += (now - job.last_update) * job.rate;
        job.last_update = now;
        job.phase = JobPhase::Done(host);
        job.completion_time = Some(now);
        let inflight = job.migration.take();
        let hi = host.0 as usize;
        self.hosts[hi].running.remove(&j);
        self.plan.release(&self.jobs[j].profile.workload_id);
        if let Some(m) = inflight {
            self.hosts[m.source.0 as usize].outbound.remove(&j);
            self.hosts[m.destination.0 as usize].inbound.remove(&j);
            self.refresh(m.destination);
        }
        self.refresh(host);
        self.maybe_power_off(host);
    }

    fn consolidate(&mut self) {
        let powered: Vec<&HostRt> = self
            .hosts
            .iter()
            .filter(|h| h.phase != Phase::Off)
            .collect();
        if powered.is_empty() {
            return;
        }
        let avg_cpu = powered
            .iter()
            .map(|h| self.scheduler_state(h).u_cpu())
            .sum::<f64>()
            / powered.len() as f64;

        let stable: Vec<&HostRt> = self
            .hosts
            .iter()
            .filter(|h| h.phase == Phase::On && h.inbound.is_empty() && h.outbound.is_empty())
            .collect();
        let view: Vec<HostState> = stable.iter().map(|h| self.scheduler_state(h)).collect();
        let residents: BTreeMap<HostId, Vec<WorkloadProfile>> = stable
            .iter()
            .map(|h| {
                (
                    h.id,
                    h.running
                        .iter()
                        .map(|&j| self.jobs[j].profile.clone())
                        .collect(),
                )
            })
            .collect();
        let plan = consolidation_pass(
            &view,
            &residents,
            self.predictor,
            &self.config,
            avg_cpu,
            self.cluster.bandwidth,
        );
        for host in &plan.power_off {
            self.hosts[host.0 as usize].phase = Phase::Draining;
            self.plan.power_off_orders.push(*host);
        }
        for order in plan.migrations {
            self.begin_migration(order);
        }
        for host in plan.power_off {
            self.maybe_power_off(host);
        }
    }

    fn begin_migration(&mut self, order: MigrationOrder) {
        let j = self
            .jobs
            .iter()
            .position(|job| job.profile.workload_id == order.workload_id)
            .expect("migration of a known job");
        debug_assert_eq!(self.jobs[j].phase, JobPhase::Running(order.source));
        debug_assert_eq!(
            order.duration,
            migration_duration(self.jobs[j].profile.mem_footprint, self.cluster.bandwidth)
        );
        self.jobs[j].migration = Some(InFlight {
            source: order.source,
            destination: order.destination,
        });
        self.hosts[order.source.0 as usize].outbound.insert(j);
        self.hosts[order.destination.0 as usize].inbound.insert(j);
        self.queue.push(Event {
            time: self.now + order.duration,
            kind: EventKind::MigrationDone,
            id: j as u64,
            version: 0,
        });
        self.refresh(order.source);
        self.refresh(order.destination);
    }

    fn finish_migration(&mut self, j: usize) {
        let Some(m) = self.jobs[j].migration.take() else {
            return;
        };
        let (src, dst) = (m.source.0 as usize, m.destination.0 as usize);
        self.hosts[src].outbound.remove(&j);
        self.hosts[dst].inbound.remove(&j);
        if self.hosts[dst].phase == Phase::Off {
            self.aborted_migrations += 1;
            if self.hosts[src].phase == Phase::Draining {
                self.hosts[src].phase = Phase::On;
            }
            self.refresh(m.source);
            return;
        }
        let now = self.now;
        let job = &mut self.jobs[j];
        job.progress += (now - job.last_update) * job.rate;
        job.last_update = now;
        job.rate = 0.0;
        job.phase = JobPhase::Running(m.destination);
        job.migrations += 1;
        self.migrations += 1;
        self.hosts[src].running.remove(&j);
        self.hosts[dst].running.insert(j);
        self.plan
            .relocate(&self.jobs[j].profile.workload_id, m.destination);
        self.refresh(m.source);
        self.refresh(m.destination);
        self.maybe_power_off(m.source);
    }

    fn maybe_power_off(&mut self, host: HostId) {
        let h = &mut self.hosts[host.0 as usize];
        if h.phase == Phase::Draining
            && h.running.is_empty()
            && h.outbound.is_empty()
            && h.waiting.is_empty()
        {
            h.phase = Phase::Off;
            h.power_offs += 1;
        }
    }

    fn finish(self) -> SimulationResult {
        let tau = self.config.tau;
        let jobs: Vec<JobOutcome> = self
            .jobs
            .iter()
            .map(|j| {
                let sla = match (j.start_time, j.completion_time) {
                    (Some(s), Some(c)) if c > s => {
                        check_sla(j.profile.nominal_duration, c - s, tau).ok()
                    }
                    _ => None,
                };
                let host = match j.phase {
                    JobPhase::Running(h) | JobPhase::Waiting(h) | JobPhase::Done(h) => Some(h),
                    _ => self.plan.assignments.get(&j.profile.workload_id).copied(),
                };
                JobOutcome {
                    workload_id: j.profile.workload_id.clone(),
                    arrival_time: j.arrival_time,
                    nominal_duration: j.profile.nominal_duration,
                    start_time: j.start_time,
                    completion_time: j.completion_time,
                    sla_score: sla.map(|s| s.sla_score),
                    compliant: sla.map(|s| s.compliant),
                    host,
                    migrations: j.migrations,
                    attributed_wh: j.attributed_wh,
                    progress: j.progress,
                    placement_features: j.features,
                }
            })
            .collect();
        let hosts: Vec<HostOutcome> = self
            .hosts
            .iter()
            .map(|h| {
                let e = self.ledger.host(h.id).copied().unwrap_or_default();
                HostOutcome {
                    host_id: h.id,
                    total_wh: e.total_wh,
                    idle_wh: e.idle_wh,
                    attributed_wh: e.attributed_wh(),
                    on_seconds: e.on_seconds,
                    power_ons: h.power_ons,
                    power_offs: h.power_offs,
                }
            })
            .collect();
        let count = |p: fn(&JobPhase) -> bool| self.jobs.iter().filter(|j| p(&j.phase)).count();
        SimulationResult {
            format: RESULT_FORMAT.to_string(),
            policy: self.policy,
            horizon: self.now,
            total_energy_wh: self.ledger.total_wh(),
            on_host_seconds: self.ledger.on_host_seconds(),
            migrations: self.migrations,
            aborted_migrations: self.aborted_migrations,
            completed: count(|p| matches!(p, JobPhase::Done(_))),
            running_at_end: count(|p| matches!(p, JobPhase::Running(_) | JobPhase::Waiting(_))),
            queued_at_end: count(|p| *p == JobPhase::Queued),
            jobs,
            hosts,
        }
    }
}

#[cfg(test)]
mod tests;
