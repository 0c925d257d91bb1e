//! Paired policy comparison over seeded repetitions.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::predictor::{AnalyticEstimate, CostModel, EnergyPredictor, RegressionTree};
use crate::scenario::Scenario;
use crate::sim::{mean, Policy, Simulation, SimulationResult};
use crate::workloads::{Arrival, SplitMix64};

pub const REPORT_FORMAT: &str = "ecosched.report/v1";

/// Mixed into the repetition seed to draw the bootstrap history population,
/// so the model never sees the jobs it is asked to place.
const HISTORY_SALT: u64 = 0x6869_7374_6f72_7921;

/// A cost model trained from one RoundRobin bootstrap run.
#[derive(Debug, Clone)]
pub struct Bootstrap {
    pub model: CostModel,
    pub records: usize,
    pub mae: f64,
}

pub fn history_seed(seed: u64) -> u64 {
    SplitMix64::new(seed ^ HISTORY_SALT).next_u64()
}

/// Runs RoundRobin over a history population and trains the tree on the
/// outcome. Falls back to the analytic estimate when nothing completes.
pub fn bootstrap(scenario: &Scenario, seed: u64) -> Result<Bootstrap> {
    let history = scenario.arrivals(history_seed(seed))?;
    let cold = AnalyticEstimate(scenario.base_coefficients());
    let result = simulate(scenario, &history, Policy::RoundRobin, &cold)?;
    let records = result.training_records();
    if records.is_empty() {
        return Ok(Bootstrap {
            model: CostModel::Analytic(cold),
            records: 0,
            mae: 0.0,
        });
    }
    let tree = RegressionTree::train(
        &records,
        scenario.predictor.max_depth,
        scenario.predictor.min_leaf_size,
    )?;
    Ok(Bootstrap {
        mae: tree.mae(&records),
        records: records.len(),
        model: CostModel::Tree(tree),
    })
}

pub fn simulate(
    scenario: &Scenario,
    arrivals: &[Arrival],
    policy: Policy,
    predictor: &dyn EnergyPredictor,
) -> Result<SimulationResult> {
    let cluster = scenario.cluster_spec();
    Simulation::new(&cluster, scenario.scheduler, arrivals, policy, predictor)?
        .with_horizon(scenario.horizon)
        .run()
}

/// One policy run. `model` overrides the bootstrap for EnergyAware.
pub fn run_scenario(
    scenario: &Scenario,
    policy: Policy,
    seed: u64,
    model: Option<&CostModel>,
) -> Result<SimulationResult> {
    let arrivals = scenario.arrivals(seed)?;
    match (policy, model) {
        (_, Some(m)) => simulate(scenario, &arrivals, policy, m),
        (Policy::RoundRobin, None) => {
            let cold = AnalyticEstimate(scenario.base_coefficients());
            simulate(scenario, &arrivals, policy, &cold)
        }
        (Policy::EnergyAware, None) => {
            let boot = bootstrap(scenario, seed)?;
            simulate(scenario, &arrivals, policy, &boot.model)
        }
    }
}

/// FNV-1a over the serialized arrival list.
pub fn fingerprint(arrivals: &[Arrival]) -> String {
    let bytes = serde_json::to_vec(arrivals).expect("arrivals serialize");
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    for b in bytes {
        h ^= b as u64;
        h = h.wrapping_mul(0x0000_0100_0000_01b3);
    }
    format!("{h:016x}")
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunRow {
    pub rep: u32,
    pub seed: u64,
    pub policy: Policy,
    pub arrivals: String,
    pub energy_wh: f64,
    pub mean_sla_score: f64,
    pub compliance_rate: f64,
    pub mean_completion_deviation: f64,
    pub on_host_seconds: f64,
    pub migrations: u32,
    pub completed: usize,
    pub jobs: usize,
}

impl RunRow {
    fn new(rep: u32, seed: u64, arrivals: &str, r: &SimulationResult) -> Self {
        Self {
            rep,
            seed,
            policy: r.policy,
            arrivals: arrivals.to_string(),
            energy_wh: r.total_energy_wh,
            mean_sla_score: r.mean_sla_score(),
            compliance_rate: r.compliance_rate(),
            mean_completion_deviation: r.mean_completion_deviation(),
            on_host_seconds: r.on_host_seconds,
            migrations: r.migrations,
            completed: r.completed,
            jobs: r.jobs.len(),
        }
    }
}

/// Per-repetition pairing of the two policies.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PairRow {
    pub rep: u32,
    pub seed: u64,
    /// Mean over jobs of `|T_ea - T_rr| / T_rr` on turnaround time.
    pub completion_deviation: f64,
    pub training_records: usize,
    pub training_mae: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PolicySummary {
    pub energy_wh: f64,
    pub mean_sla_score: f64,
    pub compliance_rate: f64,
    pub mean_completion_deviation: f64,
    pub on_host_seconds: f64,
    pub migrations: f64,
}

impl PolicySummary {
    fn of<'a>(rows: impl Iterator<Item = &'a RunRow> + Clone) -> Self {
        Self {
            energy_wh: mean(rows.clone().map(|r| r.energy_wh)),
            mean_sla_score: mean(rows.clone().map(|r| r.mean_sla_score)),
            compliance_rate: mean(rows.clone().map(|r| r.compliance_rate)),
            mean_completion_deviation: mean(rows.clone().map(|r| r.mean_completion_deviation)),
            on_host_seconds: mean(rows.clone().map(|r| r.on_host_seconds)),
            migrations: mean(rows.map(|r| r.migrations as f64)),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ComparisonReport {
    pub format: String,
    pub scenario: String,
    pub repetitions: u32,
    pub base_seed: u64,
    pub round_robin: PolicySummary,
    pub energy_aware: PolicySummary,
    /// `100 (E_rr - E_ea) / E_rr` on the mean energies; absent when E_rr is 0.
    pub energy_savings_pct: Option<f64>,
    /// Mean of the per-repetition paired deviations, as a fraction.
    pub completion_deviation: f64,
    pub runs: Vec<RunRow>,
    pub pairs: Vec<PairRow>,
}

impl ComparisonReport {
    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serializes")
    }

    /// One CSV row per run, columns named as in the JSON report.
    pub fn runs_csv(&self) -> String {
        let mut w = csv::Writer::from_writer(Vec::new());
        for r in &self.runs {
            w.serialize(r).expect("run rows are flat");
        }
        let bytes = w.into_inner().expect("flushing to memory cannot fail");
        String::from_utf8(bytes).expect("csv output is utf-8")
    }

    pub fn rows(&self, policy: Policy) -> impl Iterator<Item = &RunRow> + Clone {
        self.runs.iter().filter(move |r| r.policy == policy)
    }
}

pub fn savings_pct(baseline_wh: f64, optimized_wh: f64) -> Option<f64> {
    (baseline_wh > 0.0).then(|| 100.0 * (baseline_wh - optimized_wh) / baseline_wh)
}

/// Paired relative deviation of turnaround times, over jobs finished in both.
pub fn paired_deviation(ea: &SimulationResult, rr: &SimulationResult) -> f64 {
    let base: BTreeMap<&str, f64> = rr
        .jobs
        .iter()
        .filter_map(|j| j.turnaround().map(|t| (j.workload_id.as_str(), t)))
        .collect();
    mean(ea.jobs.iter().filter_map(|j| {
        let t = j.turnaround()?;
        let b = *base.get(j.workload_id.as_str())?;
        (b > 0.0).then(|| (t - b).abs() / b)
    }))
}

struct Rep {
    rows: [RunRow; 2],
    pair: PairRow,
}

fn repetition(scenario: &Scenario, rep: u32, seed: u64) -> Result<Rep> {
    let arrivals = scenario.arrivals(seed)?;
    let tag = fingerprint(&arrivals);
    let boot = bootstrap(scenario, seed)?;
    let cold = AnalyticEstimate(scenario.base_coefficients());
    let rr = simulate(scenario, &arrivals, Policy::RoundRobin, &cold)?;
    let ea = simulate(scenario, &arrivals, Policy::EnergyAware, &boot.model)?;
    Ok(Rep {
        pair: PairRow {
            rep,
            seed,
            completion_deviation: paired_deviation(&ea, &rr),
            training_records: boot.records,
            training_mae: boot.mae,
        },
        rows: [
            RunRow::new(rep, seed, &tag, &rr),
            RunRow::new(rep, seed, &tag, &ea),
        ],
    })
}

/// Repetition `r` uses seed `base_seed + r`. Repetitions run on their own
/// threads; the report is assembled afterwards in repetition order.
pub fn compare(scenario: &Scenario, repetitions: u32, base_seed: u64) -> Result<ComparisonReport> {
    if repetitions == 0 {
        return Err(Error::InvalidConfig("repetitions must be >= 1".into()));
    }
    let reps: Vec<Result<Rep>> = std::thread::scope(|s| {
        let handles: Vec<_> = (0..repetitions)
            .map(|r| {
                let seed = base_seed.wrapping_add(r as u64);
                s.spawn(move || repetition(scenario, r, seed))
            })
            .collect();
        handles
            .into_iter()
            .map(|h| h.join().expect("repetition thread panicked"))
            .collect()
    });

    let mut runs = Vec::new();
    let mut pairs = Vec::new();
    for rep in reps {
        let rep = rep?;
        runs.extend(rep.rows);
        pairs.push(rep.pair);
    }
    let rr = PolicySummary::of(runs.iter().filter(|r| r.policy == Policy::RoundRobin));
    let ea = PolicySummary::of(runs.iter().filter(|r| r.policy == Policy::EnergyAware));
    Ok(ComparisonReport {
        format: REPORT_FORMAT.into(),
        scenario: scenario.name.clone(),
        repetitions,
        base_seed,
        energy_savings_pct: savings_pct(rr.energy_wh, ea.energy_wh),
        completion_deviation: mean(pairs.iter().map(|p| p.completion_deviation)),
        round_robin: rr,
        energy_aware: ea,
        runs,
        pairs,
    })
}
