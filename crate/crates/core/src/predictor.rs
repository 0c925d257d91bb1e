//! Placement cost prediction.
//!
//! A CART regression tree maps the concatenation of a workload's utilization
//! vector and a host's utilization triple to the marginal energy (Wh) the
//! workload is expected to add on that host. Hosts are screened for memory,
//! cpu headroom and projected contention before being ranked by that
//! prediction.

use serde::{Deserialize, Serialize};

use crate::energy::{EnergyCoefficients, HostId, HostState};
use crate::error::{Error, Result};
use crate::profiling::WorkloadProfile;

pub const N_FEATURES: usize = 7;
pub const TREE_FORMAT: &str = "ecosched.tree/v1";
pub const HISTORY_FORMAT: &str = "ecosched.history/v1";

pub const DEFAULT_MAX_DEPTH: usize = 6;
pub const DEFAULT_MIN_LEAF_SIZE: usize = 3;

/// Splits that reduce variance by no more than this are not taken.
const MIN_VARIANCE_REDUCTION: f64 = 1e-12;

/// Split scores closer than this (relative to parent variance) count as tied.
pub const SPLIT_TIE_EPS: f64 = 1e-9;

pub type Features = [f64; N_FEATURES];

pub fn features(workload: &WorkloadProfile, host: &HostState) -> Features {
    [
        workload.cpu,
        workload.mem,
        workload.disk,
        workload.net,
        host.u_cpu(),
        host.u_mem(),
        host.u_io(),
    ]
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainingRecord {
    pub features: Features,
    /// Marginal energy in watt-hours.
    pub target: f64,
}

impl TrainingRecord {
    pub fn validate(&self) -> Result<()> {
        if self.features.iter().any(|f| !(0.0..=1.0).contains(f)) {
            return Err(Error::InvalidConfig(format!(
                "training features outside [0, 1]: {:?}",
                self.features
            )));
        }
        if !(self.target >= 0.0 && self.target.is_finite()) {
            return Err(Error::InvalidConfig(format!(
                "training target must be finite and >= 0, got {}",
                self.target
            )));
        }
        Ok(())
    }
}

/// Training records as a versioned document.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainingHistory {
    pub format: String,
    pub records: Vec<TrainingRecord>,
}

impl TrainingHistory {
    pub fn new(records: Vec<TrainingRecord>) -> Self {
        Self {
            format: HISTORY_FORMAT.into(),
            records,
        }
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("history serializes")
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let h: Self = serde_json::from_str(text)?;
        if h.format != HISTORY_FORMAT {
            return Err(Error::Version {
                found: h.format,
                expected: HISTORY_FORMAT.into(),
            });
        }
        for r in &h.records {
            r.validate()?;
        }
        Ok(h)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Node {
    Leaf {
        value: f64,
        samples: usize,
    },
    Split {
        feature: usize,
        threshold: f64,
        left: Box<Node>,
        right: Box<Node>,
    },
}

impl Node {
    fn depth(&self) -> usize {
        match self {
            Node::Leaf { .. } => 0,
            Node::Split { left, right, .. } => 1 + left.depth().max(right.depth()),
        }
    }

    fn leaves(&self) -> usize {
        match self {
            Node::Leaf { .. } => 1,
            Node::Split { left, right, .. } => left.leaves() + right.leaves(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RegressionTree {
    format: String,
    pub max_depth: usize,
    pub min_leaf_size: usize,
    pub root: Node,
}

/// Something that can price a candidate placement in watt-hours.
pub trait EnergyPredictor {
    fn predict_energy(&self, workload: &WorkloadProfile, host: &HostState) -> f64;
}

impl RegressionTree {
    /// Fits a tree by greedy variance-reduction splitting.
    ///
    /// Candidate thresholds are midpoints between consecutive distinct values
    /// of a feature; records with `x < threshold` go left. Among equally good
    /// splits the lowest feature index wins, then the lowest threshold.
    pub fn train(
        records: &[TrainingRecord],
        max_depth: usize,
        min_leaf_size: usize,
    ) -> Result<Self> {
        if records.is_empty() {
            return Err(Error::NoHistory);
        }
        if min_leaf_size == 0 {
            return Err(Error::InvalidConfig("min_leaf_size must be >= 1".into()));
        }
        for r in records {
            r.validate()?;
        }
        let idx: Vec<usize> = (0..records.len()).collect();
        let root = build(records, idx, 0, max_depth, min_leaf_size);
        Ok(Self {
            format: TREE_FORMAT.to_string(),
            max_depth,
            min_leaf_size,
            root,
        })
    }

    pub fn predict(&self, x: &Features) -> f64 {
        match self.leaf(x) {
            Node::Leaf { value, .. } => *value,
            Node::Split { .. } => unreachable!(),
        }
    }

    /// Pre-order index of the leaf `x` lands in.
    pub fn leaf_index(&self, x: &Features) -> usize {
        let mut node = &self.root;
        let mut offset = 0;
        loop {
            match node {
                Node::Leaf { .. } => return offset,
                Node::Split {
                    feature,
                    threshold,
                    left,
                    right,
                } => {
                    if x[*feature] < *threshold {
                        node = left;
                    } else {
                        offset += left.leaves();
                        node = right;
                    }
                }
            }
        }
    }

    fn leaf(&self, x: &Features) -> &Node {
        let mut node = &self.root;
        while let Node::Split {
            feature,
            threshold,
            left,
            right,
        } = node
        {
            node = if x[*feature] < *threshold {
                left
            } else {
                right
            };
        }
        node
    }

    pub fn depth(&self) -> usize {
        self.root.depth()
    }

    pub fn leaf_count(&self) -> usize {
        self.root.leaves()
    }

    /// Mean absolute error over `records`.
    pub fn mae(&self, records: &[TrainingRecord]) -> f64 {
        if records.is_empty() {
            return 0.0;
        }
        records
            .iter()
            .map(|r| (self.predict(&r.features) - r.target).abs())
            .sum::<f64>()
            / records.len() as f64
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("tree serializes")
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let tree: Self = serde_json::from_str(text)?;
        if tree.format != TREE_FORMAT {
            return Err(Error::Version {
                found: tree.format,
                expected: TREE_FORMAT.into(),
            });
        }
        check_node(&tree.root)?;
        Ok(tree)
    }
}

fn check_node(node: &Node) -> Result<()> {
    match node {
        Node::Leaf { value, .. } if value.is_finite() => Ok(()),
        Node::Leaf { value, .. } => Err(Error::InvalidConfig(format!("leaf value {value}"))),
        Node::Split {
            feature,
            threshold,
            left,
            right,
        } => {
            if *feature >= N_FEATURES || !threshold.is_finite() {
                return Err(Error::InvalidConfig(format!(
                    "bad split: feature {feature}, threshold {threshold}"
                )));
            }
            check_node(left)?;
            check_node(right)
        }
    }
}

impl EnergyPredictor for RegressionTree {
    fn predict_energy(&self, workload: &WorkloadProfile, host: &HostState) -> f64 {
        self.predict(&features(workload, host))
    }
}

/// Cold-start estimate used before any history exists: the workload's own
/// dynamic power times its nominal duration, independent of host state.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AnalyticEstimate(pub EnergyCoefficients);

impl EnergyPredictor for AnalyticEstimate {
    fn predict_energy(&self, w: &WorkloadProfile, _host: &HostState) -> f64 {
        let c = &self.0;
        (c.alpha * w.cpu + c.beta * w.mem + c.gamma * w.io()) * w.nominal_duration / 3600.0
    }
}

/// Either a trained tree or the analytic fallback.
#[derive(Debug, Clone, PartialEq)]
pub enum CostModel {
    Analytic(AnalyticEstimate),
    Tree(RegressionTree),
}

impl EnergyPredictor for CostModel {
    fn predict_energy(&self, workload: &WorkloadProfile, host: &HostState) -> f64 {
        match self {
            CostModel::Analytic(a) => a.predict_energy(workload, host),
            CostModel::Tree(t) => t.predict_energy(workload, host),
        }
    }
}

#[derive(Debug, Clone, Copy)]
pub struct SplitCandidate {
    pub feature: usize,
    pub threshold: f64,
    /// Weighted child variance, `(SSE_left + SSE_right) / n`.
    pub score: f64,
}

/// Best admissible split of the given subset, if any.
pub fn best_split(
    records: &[TrainingRecord],
    idx: &[usize],
    min_leaf_size: usize,
) -> Option<SplitCandidate> {
    let n = idx.len();
    if n < 2 * min_leaf_size.max(1) {
        return None;
    }
    let mean = idx.iter().map(|&i| records[i].target).sum::<f64>() / n as f64;
    let parent_var = idx
        .iter()
        .map(|&i| (records[i].target - mean).powi(2))
        .sum::<f64>()
        / n as f64;
    let tie = SPLIT_TIE_EPS * parent_var.max(f64::MIN_POSITIVE);

    let mut order = idx.to_vec();
    let mut best: Option<SplitCandidate> = None;
    for feature in 0..N_FEATURES {
        order.sort_by(|&a, &b| {
            records[a].features[feature].total_cmp(&records[b].features[feature])
        });
        // Targets are centred on the parent mean to limit cancellation.
        let ys: Vec<f64> = order.iter().map(|&i| records[i].target - mean).collect();
        let total: f64 = ys.iter().sum();
        let total_sq: f64 = ys.iter().map(|y| y * y).sum();
        let (mut sum_l, mut sq_l) = (0.0, 0.0);
        for pos in 1..n {
            sum_l += ys[pos - 1];
            sq_l += ys[pos - 1] * ys[pos - 1];
            let lo = records[order[pos - 1]].features[feature];
            let hi = records[order[pos]].features[feature];
            if !(lo < hi) || pos < min_leaf_size || n - pos < min_leaf_size {
                continue;
            }
            let mut threshold = (lo + hi) / 2.0;
            if !(lo < threshold) {
                threshold = hi;
            }
            let (nl, nr) = (pos as f64, (n - pos) as f64);
            let sse_l = (sq_l - sum_l * sum_l / nl).max(0.0);
            let sum_r = total - sum_l;
            let sse_r = (total_sq - sq_l - sum_r * sum_r / nr).max(0.0);
            let score = (sse_l + sse_r) / n as f64;
            let better = match &best {
                None => true,
                Some(b) => score < b.score - tie,
            };
            if better {
                best = Some(SplitCandidate {
                    feature,
                    threshold,
                    score,
                });
            }
        }
    }
    best.filter(|b| parent_var - b.score > MIN_VARIANCE_REDUCTION)
}

fn build(
    records: &[TrainingRecord],
    idx: Vec<usize>,
    depth: usize,
    max_depth: usize,
    min_leaf_size: usize,
) -> Node {
    let leaf = |idx: &[usize]| Node::Leaf {
        value: idx.iter().map(|&i| records[i].target).sum::<f64>() / idx.len() as f64,
        samples: idx.len(),
    };
    if depth >= max_depth {
        return leaf(&idx);
    }
    let Some(split) = best_split(records, &idx, min_leaf_size) else {
        return leaf(&idx);
    };
    let (left, right): (Vec<usize>, Vec<usize>) = idx
        .iter()
        .partition(|&&i| records[i].features[split.feature] < split.threshold);
    debug_assert!(!left.is_empty() && !right.is_empty());
    Node::Split {
        feature: split.feature,
        threshold: split.threshold,
        left: Box::new(build(records, left, depth + 1, max_depth, min_leaf_size)),
        right: Box::new(build(records, right, depth + 1, max_depth, min_leaf_size)),
    }
}

/// Projected relative slowdown beyond 1 if `workload` joined `host`: the worst
/// of cpu and I/O oversubscription. Zero means no contention.
pub fn sla_risk(workload: &WorkloadProfile, host: &HostState) -> f64 {
    let cap = host.capacity;
    let cpu = (host.load.cpu + workload.cpu) / (cap.cpu * host.freq);
    let io = (host.load.disk + workload.disk).max(host.load.net + workload.net) / cap.io;
    cpu.max(io).max(1.0) - 1.0
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RankedHost {
    pub host_id: HostId,
    pub predicted_wh: f64,
    pub sla_risk: f64,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct HostRanking(pub Vec<RankedHost>);

impl HostRanking {
    pub fn head(&self) -> Option<&RankedHost> {
        self.0.first()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn ids(&self) -> Vec<HostId> {
        self.0.iter().map(|r| r.host_id).collect()
    }
}

/// Whether `workload` may be placed on `host` at all.
///
/// A host is rejected when its cpu utilization is already above
/// `delta_high`, when the placement would push an occupied host above
/// `delta_high`, when memory would overflow, or when projected contention
/// exceeds `risk_cap`. An empty host accepts any workload that fits it.
pub fn admissible(
    workload: &WorkloadProfile,
    host: &HostState,
    delta_high: f64,
    risk_cap: f64,
) -> Option<f64> {
    if !host.is_on() || host.u_cpu() > delta_high {
        return None;
    }
    let occupied = host.load != Default::default();
    if occupied && (host.load.cpu + workload.cpu) / host.capacity.cpu > delta_high {
        return None;
    }
    if host.load.mem + workload.mem > host.capacity.mem + 1e-12 {
        return None;
    }
    let risk = sla_risk(workload, host);
    (risk <= risk_cap).then_some(risk)
}

/// Feasible hosts ordered by predicted energy, ties by host id.
pub fn rank_hosts(
    predictor: &dyn EnergyPredictor,
    workload: &WorkloadProfile,
    hosts: &[HostState],
    delta_high: f64,
    risk_cap: f64,
) -> HostRanking {
    let mut ranked: Vec<RankedHost> = hosts
        .iter()
        .filter_map(|h| {
            admissible(workload, h, delta_high, risk_cap).map(|risk| RankedHost {
                host_id: h.host_id,
                predicted_wh: predictor.predict_energy(workload, h),
                sla_risk: risk,
            })
        })
        .collect();
    ranked.sort_by(|a, b| {
        a.predicted_wh
            .total_cmp(&b.predicted_wh)
            .then(a.host_id.cmp(&b.host_id))
    });
    HostRanking(ranked)
}
