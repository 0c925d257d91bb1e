//! Placement policies: the energy-aware greedy placer with threshold-driven
//! consolidation, and the utilization-blind round-robin baseline.

use std::collections::{BTreeMap, BTreeSet, VecDeque};

use serde::{Deserialize, Serialize};

use crate::energy::{Demand, HostId, HostState};
use crate::error::{Error, Result};
use crate::predictor::{rank_hosts, EnergyPredictor};
use crate::profiling::WorkloadProfile;

/// Migrations never take less than this many seconds.
pub const MIN_MIGRATION_SECONDS: f64 = 1.0;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SchedulerConfig {
    /// Hosts whose cpu utilization falls below this are evacuated.
    pub delta_low: f64,
    /// Hosts above this accept no further placements.
    pub delta_high: f64,
    /// Consolidation only runs while mean cpu utilization of powered hosts
    /// is below this.
    pub delta_mig: f64,
    /// Largest admissible projected slowdown beyond 1.
    pub risk_cap: f64,
    /// Seconds between consolidation passes.
    pub consolidation_period: f64,
    /// Minimum SLA score for a job to count as compliant.
    pub tau: f64,
}

impl Default for SchedulerConfig {
    fn default() -> Self {
        Self {
            delta_low: 0.2,
            delta_high: 0.9,
            delta_mig: 0.5,
            risk_cap: 0.05,
            consolidation_period: 60.0,
            tau: 0.95,
        }
    }
}

impl SchedulerConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::InvalidConfig(m.to_string()));
        if !(0.0 <= self.delta_low && self.delta_low < self.delta_high && self.delta_high <= 1.0) {
            return bad("thresholds must satisfy 0 <= delta_low < delta_high <= 1");
        }
        if !(0.0..=1.0).contains(&self.delta_mig) {
            return bad("delta_mig must lie in [0, 1]");
        }
        if !(self.risk_cap >= 0.0 && self.risk_cap.is_finite()) {
            return bad("risk_cap must be finite and >= 0");
        }
        if !(self.consolidation_period > 0.0 && self.consolidation_period.is_finite()) {
            return bad("consolidation_period must be > 0");
        }
        if !(self.tau > 0.0 && self.tau <= 1.0) {
            return bad("tau must lie in (0, 1]");
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SlaOutcome {
    pub sla_score: f64,
    pub compliant: bool,
}

/// Score is `nominal / actual` capped at 1; compliant when it reaches `tau`.
pub fn check_sla(nominal_duration: f64, actual_duration: f64, tau: f64) -> Result<SlaOutcome> {
    for d in [nominal_duration, actual_duration] {
        if !(d > 0.0) {
            return Err(Error::NonPositiveDuration(d));
        }
    }
    let sla_score = (nominal_duration / actual_duration).min(1.0);
    Ok(SlaOutcome {
        sla_score,
        compliant: sla_score >= tau,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Placement {
    /// Run on an already powered host.
    Assign(HostId),
    /// Power the host on and run there once it has booted.
    PowerOn(HostId),
    /// No host can take the workload now.
    Queue,
}

/// Greedy energy-aware placement: the head of the host ranking, else the
/// lowest-numbered Off host, else the queue.
pub fn place_workload(
    workload: &WorkloadProfile,
    cluster: &[HostState],
    predictor: &dyn EnergyPredictor,
    config: &SchedulerConfig,
) -> Placement {
    let ranking = rank_hosts(
        predictor,
        workload,
        cluster,
        config.delta_high,
        config.risk_cap,
    );
    if let Some(head) = ranking.head() {
        return Placement::Assign(head.host_id);
    }
    cluster
        .iter()
        .filter(|h| !h.is_on() && workload.mem <= h.capacity.mem + 1e-12)
        .map(|h| h.host_id)
        .min()
        .map_or(Placement::Queue, Placement::PowerOn)
}

/// Record of scheduler decisions.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct PlacementPlan {
    pub assignments: BTreeMap<String, HostId>,
    pub queued: VecDeque<String>,
    pub power_on_orders: Vec<HostId>,
    pub power_off_orders: Vec<HostId>,
}

impl PlacementPlan {
    pub fn record(&mut self, workload_id: &str, placement: Placement) {
        self.queued.retain(|q| q != workload_id);
        match placement {
            Placement::Assign(h) => {
                self.assignments.insert(workload_id.to_string(), h);
            }
            Placement::PowerOn(h) => {
                self.power_on_orders.push(h);
                self.assignments.insert(workload_id.to_string(), h);
            }
            Placement::Queue => {
                self.assignments.remove(workload_id);
                self.queued.push_back(workload_id.to_string());
            }
        }
    }

    pub fn relocate(&mut self, workload_id: &str, host: HostId) {
        self.assignments.insert(workload_id.to_string(), host);
    }

    pub fn release(&mut self, workload_id: &str) {
        self.assignments.remove(workload_id);
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MigrationOrder {
    pub workload_id: String,
    pub source: HostId,
    pub destination: HostId,
    /// Seconds to copy the memory footprint.
    pub duration: f64,
}

pub fn migration_duration(mem_footprint: f64, bandwidth: f64) -> f64 {
    (mem_footprint / bandwidth).max(MIN_MIGRATION_SECONDS)
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct ConsolidationPlan {
    pub migrations: Vec<MigrationOrder>,
    /// Hosts to power off once their outgoing migrations have completed.
    pub power_off: Vec<HostId>,
}

impl ConsolidationPlan {
    pub fn is_empty(&self) -> bool {
        self.migrations.is_empty() && self.power_off.is_empty()
    }
}

/// One consolidation pass over the powered hosts in `cluster`.
///
/// Runs only while `cluster_avg_cpu < delta_mig`. Hosts below `delta_low`
/// are visited in ascending utilization; a host is evacuated only if every
/// resident finds a destination, and destinations' projected load is updated
/// as orders are emitted. The last powered host is never evacuated, and a
/// host that received workloads in this pass is not evacuated in it.
pub fn consolidation_pass(
    cluster: &[HostState],
    residents: &BTreeMap<HostId, Vec<WorkloadProfile>>,
    predictor: &dyn EnergyPredictor,
    config: &SchedulerConfig,
    cluster_avg_cpu: f64,
    bandwidth: f64,
) -> ConsolidationPlan {
    let mut plan = ConsolidationPlan::default();
    if !(cluster_avg_cpu < config.delta_mig) {
        return plan;
    }
    let mut view: Vec<HostState> = cluster.iter().filter(|h| h.is_on()).cloned().collect();
    view.sort_by_key(|h| h.host_id);

    let mut candidates: Vec<(f64, HostId)> = view
        .iter()
        .filter(|h| h.u_cpu() < config.delta_low)
        .map(|h| (h.u_cpu(), h.host_id))
        .collect();
    candidates.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));

    let mut evacuated: BTreeSet<HostId> = BTreeSet::new();
    let mut received: BTreeSet<HostId> = BTreeSet::new();
    let none = Vec::new();

    for (_, cand) in candidates {
        if received.contains(&cand) || view.len() - evacuated.len() <= 1 {
            continue;
        }
        let mut trial: Vec<HostState> = view
            .iter()
            .filter(|h| h.host_id != cand && !evacuated.contains(&h.host_id))
            .cloned()
            .collect();
        let mut orders = Vec::new();
        let mut fits = true;
        for w in residents.get(&cand).unwrap_or(&none) {
            let ranking = rank_hosts(predictor, w, &trial, config.delta_high, config.risk_cap);
            let Some(head) = ranking.head() else {
                fits = false;
                break;
            };
            let dest = trial
                .iter_mut()
                .find(|h| h.host_id == head.host_id)
                .expect("ranked host is in the trial view");
            dest.load += Demand::of(w);
            orders.push(MigrationOrder {
                workload_id: w.workload_id.clone(),
                source: cand,
                destination: head.host_id,
                duration: migration_duration(w.mem_footprint, bandwidth),
            });
        }
        if !fits {
            continue;
        }
        for h in trial {
            let slot = view.iter_mut().find(|v| v.host_id == h.host_id).unwrap();
            *slot = h;
        }
        received.extend(orders.iter().map(|o| o.destination));
        evacuated.insert(cand);
        plan.power_off.push(cand);
        plan.migrations.extend(orders);
    }
    plan
}

/// Baseline placement: arrival `k` goes to host `k mod H` in ascending id
/// order, advancing past hosts whose memory the workload would overflow.
pub fn round_robin_place(
    workload: &WorkloadProfile,
    arrival_index: usize,
    cluster: &[HostState],
) -> Result<HostId> {
    let mut ids: Vec<&HostState> = cluster.iter().collect();
    ids.sort_by_key(|h| h.host_id);
    let n = ids.len();
    (0..n)
        .map(|step| ids[(arrival_index + step) % n])
        .find(|h| h.load.mem + workload.mem <= h.capacity.mem + 1e-12)
        .map(|h| h.host_id)
        .ok_or_else(|| Error::InfeasibleWorkload(workload.workload_id.clone()))
}
