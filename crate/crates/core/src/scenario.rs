//! Scenario documents (TOML).
//!
//! ```toml
//! version = 1
//! name = "example"
//!
//! [cluster]
//! bandwidth = 0.125
//!
//! [[cluster.hosts]]
//! count = 5
//!
//! [scheduler]
//! delta_low = 0.2
//!
//! [workloads]
//! arrival = { kind = "poisson", rate = 0.005 }
//! mix = [{ family = "mapreduce", count = 20 }]
//! ```

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::energy::{Capacity, EnergyCoefficients};
use crate::error::{Error, Result};
use crate::predictor::{DEFAULT_MAX_DEPTH, DEFAULT_MIN_LEAF_SIZE};
use crate::profiling::WorkloadProfile;
use crate::scheduler::SchedulerConfig;
use crate::sim::{ClusterSpec, HostSpec};
use crate::workloads::{generate_mix, Arrival, ArrivalModel, MixEntry};

pub const SCENARIO_VERSION: u32 = 1;
pub const POPULATION_FORMAT: &str = "ecosched.population/v1";

/// The bundled reference scenario.
pub const REFERENCE_SCENARIO: &str = include_str!("../scenarios/reference.toml");

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Scenario {
    pub version: u32,
    #[serde(default)]
    pub name: String,
    /// Fixed end time in seconds; otherwise runs to quiescence.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub horizon: Option<f64>,
    #[serde(default)]
    pub cluster: ClusterDoc,
    #[serde(default)]
    pub scheduler: SchedulerConfig,
    #[serde(default)]
    pub predictor: PredictorDoc,
    pub workloads: WorkloadsDoc,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ClusterDoc {
    /// GB/s.
    pub bandwidth: f64,
    pub migration_net_overhead: f64,
    pub hosts: Vec<HostClass>,
}

impl Default for ClusterDoc {
    fn default() -> Self {
        Self {
            bandwidth: 0.125,
            migration_net_overhead: 0.2,
            hosts: vec![HostClass::default()],
        }
    }
}

/// `count` identical hosts.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct HostClass {
    pub count: usize,
    pub capacity: Capacity,
    pub coefficients: EnergyCoefficients,
    pub freq: f64,
    pub boot_delay: f64,
}

impl Default for HostClass {
    fn default() -> Self {
        let spec = HostSpec::default();
        Self {
            count: 5,
            capacity: spec.capacity,
            coefficients: spec.coefficients,
            freq: spec.freq,
            boot_delay: spec.boot_delay,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PredictorDoc {
    pub max_depth: usize,
    pub min_leaf_size: usize,
}

impl Default for PredictorDoc {
    fn default() -> Self {
        Self {
            max_depth: DEFAULT_MAX_DEPTH,
            min_leaf_size: DEFAULT_MIN_LEAF_SIZE,
        }
    }
}

/// Explicit job entry: profile fields plus arrival time.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct JobEntry {
    pub workload_id: String,
    pub cpu: f64,
    pub mem: f64,
    pub disk: f64,
    pub net: f64,
    pub nominal_duration: f64,
    #[serde(default)]
    pub mem_footprint: f64,
    #[serde(default)]
    pub arrival_time: f64,
}

impl JobEntry {
    fn to_arrival(&self) -> Result<Arrival> {
        Ok(Arrival {
            profile: WorkloadProfile::new(
                self.workload_id.clone(),
                [self.cpu, self.mem, self.disk, self.net],
                self.nominal_duration,
                self.mem_footprint,
            )?,
            arrival_time: self.arrival_time,
        })
    }
}

/// Exactly one of `mix`, `jobs` or `file` supplies the population.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct WorkloadsDoc {
    #[serde(default = "default_arrival")]
    pub arrival: ArrivalModel,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub mix: Vec<MixEntry>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub jobs: Vec<JobEntry>,
    /// Population document, relative to the scenario file.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub file: Option<String>,
}

fn default_arrival() -> ArrivalModel {
    ArrivalModel::BatchAtZero
}

/// A population document as written by `generate`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Population {
    pub format: String,
    pub arrivals: Vec<Arrival>,
}

impl Population {
    pub fn new(arrivals: Vec<Arrival>) -> Self {
        Self {
            format: POPULATION_FORMAT.into(),
            arrivals,
        }
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("population serializes")
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let p: Self = serde_json::from_str(text)?;
        if p.format != POPULATION_FORMAT {
            return Err(Error::Version {
                found: p.format,
                expected: POPULATION_FORMAT.into(),
            });
        }
        for a in &p.arrivals {
            a.profile.validate()?;
        }
        Ok(p)
    }
}

pub(crate) fn read(path: &Path) -> Result<String> {
    std::fs::read_to_string(path).map_err(|source| Error::Io {
        path: path.display().to_string(),
        source,
    })
}

impl Scenario {
    pub fn reference() -> Self {
        Self::from_toml_str(REFERENCE_SCENARIO).expect("bundled reference scenario parses")
    }

    pub fn from_toml_str(text: &str) -> Result<Self> {
        let s: Scenario = toml::from_str(text)?;
        if s.version != SCENARIO_VERSION {
            return Err(Error::Version {
                found: s.version.to_string(),
                expected: SCENARIO_VERSION.to_string(),
            });
        }
        s.validate()?;
        Ok(s)
    }

    /// Loads a scenario, resolving a population `file` relative to it.
    pub fn load(path: &Path) -> Result<Self> {
        let mut s = Self::from_toml_str(&read(path)?)?;
        if let Some(file) = s.workloads.file.take() {
            let base = path.parent().unwrap_or(Path::new("."));
            let pop = Population::from_json(&read(&base.join(&file))?)?;
            s.workloads.jobs = pop
                .arrivals
                .into_iter()
                .map(|a| JobEntry {
                    workload_id: a.profile.workload_id,
                    cpu: a.profile.cpu,
                    mem: a.profile.mem,
                    disk: a.profile.disk,
                    net: a.profile.net,
                    nominal_duration: a.profile.nominal_duration,
                    mem_footprint: a.profile.mem_footprint,
                    arrival_time: a.arrival_time,
                })
                .collect();
        }
        Ok(s)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("scenario serializes")
    }

    pub fn validate(&self) -> Result<()> {
        self.scheduler.validate()?;
        self.cluster_spec().validate()?;
        if self.predictor.min_leaf_size == 0 {
            return Err(Error::InvalidConfig(
                "predictor.min_leaf_size must be >= 1".into(),
            ));
        }
        let w = &self.workloads;
        let sources = [!w.mix.is_empty(), !w.jobs.is_empty(), w.file.is_some()];
        if sources.iter().filter(|s| **s).count() > 1 {
            return Err(Error::InvalidConfig(
                "workloads: give only one of `mix`, `jobs` or `file`".into(),
            ));
        }
        for entry in &w.mix {
            if let Some(r) = &entry.ranges {
                r.validate()?;
            }
        }
        if let ArrivalModel::Poisson { rate } = w.arrival {
            if !(rate > 0.0 && rate.is_finite()) {
                return Err(Error::InvalidConfig(
                    "workloads.arrival.rate must be > 0".into(),
                ));
            }
        }
        Ok(())
    }

    pub fn cluster_spec(&self) -> ClusterSpec {
        ClusterSpec {
            hosts: self
                .cluster
                .hosts
                .iter()
                .flat_map(|c| {
                    let spec = HostSpec {
                        capacity: c.capacity,
                        coefficients: c.coefficients,
                        freq: c.freq,
                        boot_delay: c.boot_delay,
                    };
                    std::iter::repeat_n(spec, c.count)
                })
                .collect(),
            bandwidth: self.cluster.bandwidth,
            migration_net_overhead: self.cluster.migration_net_overhead,
        }
    }

    /// Coefficients of the first host class; the cold-start estimate uses them.
    pub fn base_coefficients(&self) -> EnergyCoefficients {
        self.cluster
            .hosts
            .first()
            .map(|c| c.coefficients)
            .unwrap_or_default()
    }

    /// The arrival list for one seed. Explicit job lists ignore the seed.
    pub fn arrivals(&self, seed: u64) -> Result<Vec<Arrival>> {
        let w = &self.workloads;
        if !w.jobs.is_empty() {
            return w.jobs.iter().map(JobEntry::to_arrival).collect();
        }
        if w.file.is_some() {
            return Err(Error::InvalidConfig(
                "workloads.file is only resolved by Scenario::load".into(),
            ));
        }
        generate_mix(&w.mix, seed, w.arrival)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::workloads::WorkloadFamily;

    #[test]
    fn reference_scenario_shape() {
        let s = Scenario::reference();
        let cluster = s.cluster_spec();
        assert_eq!(cluster.hosts.len(), 5);
        assert_eq!(s.scheduler, SchedulerConfig::default());
        assert_eq!(cluster.hosts[0].coefficients, EnergyCoefficients::default());
        assert_eq!(cluster.bandwidth, 0.125);
        let a = s.arrivals(1).unwrap();
        assert_eq!(a.len(), 60);
        for f in WorkloadFamily::ALL {
            let n = a
                .iter()
                .filter(|x| {
                    x.profile
                        .workload_id
                        .starts_with(&format!("{}-", f.prefix()))
                })
                .count();
            assert_eq!(n, 20);
        }
        assert!(matches!(s.workloads.arrival, ArrivalModel::Poisson { .. }));
    }

    #[test]
    fn minimal_document_uses_defaults() {
        let s = Scenario::from_toml_str(
            "version = 1\n[workloads]\njobs = [{ workload_id = \"a\", cpu = 0.5, mem = 0.1, disk = 0.0, net = 0.0, nominal_duration = 100.0 }]\n",
        )
        .unwrap();
        assert_eq!(s.cluster_spec().hosts.len(), 5);
        let a = s.arrivals(99).unwrap();
        assert_eq!(a[0].profile.cpu, 0.5);
        assert_eq!(a[0].arrival_time, 0.0);
    }

    #[test]
    fn errors_name_the_line() {
        let text = "version = 1\n[scheduler]\ndelta_low = \"x\"\n[workloads]\n";
        let msg = Scenario::from_toml_str(text).unwrap_err().to_string();
        assert!(msg.contains("line 3"), "{msg}");

        let text = "version = 1\n[scheduler]\nbogus = 1\n[workloads]\n";
        assert!(Scenario::from_toml_str(text).is_err());

        let text = "version = 2\n[workloads]\n";
        assert!(matches!(
            Scenario::from_toml_str(text),
            Err(Error::Version { .. })
        ));

        let text = "version = 1\n[scheduler]\ndelta_low = 0.95\n[workloads]\n";
        assert!(matches!(
            Scenario::from_toml_str(text),
            Err(Error::InvalidConfig(_))
        ));
    }

    #[test]
    fn toml_round_trip() {
        let s = Scenario::reference();
        assert_eq!(Scenario::from_toml_str(&s.to_toml()).unwrap(), s);
    }

    #[test]
    fn population_file_is_resolved() {
        let dir = std::env::temp_dir().join(format!("ecosched-scn-{}", std::process::id()));
        std::fs::create_dir_all(&dir).unwrap();
        let pop = Population::new(
            generate_mix(
                &[MixEntry::new(WorkloadFamily::EtlLike, 4)],
                3,
                ArrivalModel::Poisson { rate: 0.01 },
            )
            .unwrap(),
        );
        std::fs::write(dir.join("pop.json"), pop.to_json()).unwrap();
        std::fs::write(
            dir.join("s.toml"),
            "version = 1\n[workloads]\nfile = \"pop.json\"\n",
        )
        .unwrap();
        let s = Scenario::load(&dir.join("s.toml")).unwrap();
        assert_eq!(s.arrivals(0).unwrap(), pop.arrivals);
        std::fs::remove_dir_all(&dir).ok();
    }
}
