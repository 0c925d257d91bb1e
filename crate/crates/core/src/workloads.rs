//! Seeded synthetic workload populations for the three job families:
//! MapReduce-style batch jobs (I/O and shuffle heavy), MLlib-style training
//! jobs (cpu heavy) and ETL pipelines (mixed).

use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::profiling::WorkloadProfile;

/// SplitMix64 (Steele, Lea, Flood 2014). The stream is fully specified by the
/// recurrence below, so generated populations are identical on every
/// platform and toolchain.
#[derive(Debug, Clone)]
pub struct SplitMix64 {
    state: u64,
}

impl SplitMix64 {
    pub fn new(seed: u64) -> Self {
        Self { state: seed }
    }

    pub fn next_u64(&mut self) -> u64 {
        self.state = self.state.wrapping_add(0x9E37_79B9_7F4A_7C15);
        let mut z = self.state;
        z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
        z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
        z ^ (z >> 31)
    }

    /// Uniform in `[0, 1)` with 53 bits of precision.
    pub fn next_f64(&mut self) -> f64 {
        (self.next_u64() >> 11) as f64 * (1.0 / (1u64 << 53) as f64)
    }

    pub fn uniform(&mut self, lo: f64, hi: f64) -> f64 {
        lo + (hi - lo) * self.next_f64()
    }

    /// Exponential with the given rate, by inversion.
    pub fn exponential(&mut self, rate: f64) -> f64 {
        -(1.0 - self.next_f64()).ln() / rate
    }

    /// Uniform in `0..n` (n > 0), by rejection to avoid modulo bias.
    pub fn below(&mut self, n: u64) -> u64 {
        let zone = u64::MAX - u64::MAX % n;
        loop {
            let v = self.next_u64();
            if v < zone {
                return v % n;
            }
        }
    }

    /// Fisher–Yates.
    pub fn shuffle<T>(&mut self, items: &mut [T]) {
        for i in (1..items.len()).rev() {
            let j = self.below(i as u64 + 1) as usize;
            items.swap(i, j);
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum WorkloadFamily {
    #[serde(alias = "mapreduce")]
    MapReduceLike,
    #[serde(alias = "mllib")]
    MlLibLike,
    #[serde(alias = "etl")]
    EtlLike,
}

impl WorkloadFamily {
    pub const ALL: [WorkloadFamily; 3] = [
        WorkloadFamily::MapReduceLike,
        WorkloadFamily::MlLibLike,
        WorkloadFamily::EtlLike,
    ];

    pub fn prefix(self) -> &'static str {
        match self {
            WorkloadFamily::MapReduceLike => "mr",
            WorkloadFamily::MlLibLike => "ml",
            WorkloadFamily::EtlLike => "etl",
        }
    }

    pub fn default_ranges(self) -> FamilyRanges {
        let (cpu, disk, mem, net) = match self {
            WorkloadFamily::MapReduceLike => ([0.2, 0.5], [0.5, 0.9], [0.2, 0.4], [0.3, 0.6]),
            WorkloadFamily::MlLibLike => ([0.6, 0.95], [0.05, 0.2], [0.3, 0.6], [0.05, 0.2]),
            WorkloadFamily::EtlLike => ([0.2, 0.4], [0.3, 0.6], [0.2, 0.5], [0.2, 0.5]),
        };
        FamilyRanges {
            cpu,
            mem,
            disk,
            net,
            duration: [60.0, 600.0],
            footprint: [1.0, 8.0],
        }
    }
}

impl fmt::Display for WorkloadFamily {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            WorkloadFamily::MapReduceLike => "mapreduce",
            WorkloadFamily::MlLibLike => "mllib",
            WorkloadFamily::EtlLike => "etl",
        })
    }
}

impl std::str::FromStr for WorkloadFamily {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "mapreduce" | "map_reduce_like" => Ok(WorkloadFamily::MapReduceLike),
            "mllib" | "ml_lib_like" => Ok(WorkloadFamily::MlLibLike),
            "etl" | "etl_like" => Ok(WorkloadFamily::EtlLike),
            _ => Err(Error::InvalidConfig(format!(
                "unknown workload family `{s}`"
            ))),
        }
    }
}

/// Inclusive-exclusive uniform bounds `[lo, hi]` for each generated field.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FamilyRanges {
    pub cpu: [f64; 2],
    pub mem: [f64; 2],
    pub disk: [f64; 2],
    pub net: [f64; 2],
    /// Seconds.
    pub duration: [f64; 2],
    /// GB.
    pub footprint: [f64; 2],
}

impl FamilyRanges {
    pub fn validate(&self) -> Result<()> {
        for (name, [lo, hi]) in [
            ("cpu", self.cpu),
            ("mem", self.mem),
            ("disk", self.disk),
            ("net", self.net),
        ] {
            if !(0.0 <= lo && lo <= hi && hi <= 1.0) {
                return Err(Error::InvalidConfig(format!(
                    "{name} range [{lo}, {hi}] must satisfy 0 <= lo <= hi <= 1"
                )));
            }
        }
        let [lo, hi] = self.duration;
        if !(lo > 0.0 && lo <= hi && hi.is_finite()) {
            return Err(Error::InvalidConfig(format!("duration range [{lo}, {hi}]")));
        }
        let [lo, hi] = self.footprint;
        if !(lo >= 0.0 && lo <= hi && hi.is_finite()) {
            return Err(Error::InvalidConfig(format!(
                "footprint range [{lo}, {hi}]"
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum ArrivalModel {
    BatchAtZero,
    /// Exponential inter-arrival times with `rate` arrivals per second.
    Poisson {
        rate: f64,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Arrival {
    pub profile: WorkloadProfile,
    /// Seconds since scenario start.
    pub arrival_time: f64,
}

/// One family's share of a mixed population.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MixEntry {
    pub family: WorkloadFamily,
    pub count: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub ranges: Option<FamilyRanges>,
}

impl MixEntry {
    pub fn new(family: WorkloadFamily, count: usize) -> Self {
        Self {
            family,
            count,
            ranges: None,
        }
    }
}

fn draw(rng: &mut SplitMix64, id: String, r: &FamilyRanges) -> WorkloadProfile {
    let mut u = |[lo, hi]: [f64; 2]| rng.uniform(lo, hi);
    // Field order is part of the stream contract.
    let cpu = u(r.cpu);
    let mem = u(r.mem);
    let disk = u(r.disk);
    let net = u(r.net);
    let nominal_duration = u(r.duration);
    let mem_footprint = u(r.footprint);
    WorkloadProfile {
        workload_id: id,
        cpu,
        mem,
        disk,
        net,
        nominal_duration,
        mem_footprint,
    }
}

/// Generates `count` workloads of one family.
pub fn generate(
    family: WorkloadFamily,
    count: usize,
    seed: u64,
    arrival: ArrivalModel,
) -> Result<Vec<Arrival>> {
    generate_mix(&[MixEntry::new(family, count)], seed, arrival)
}

/// Generates a mixed population: profiles are drawn family by family, the
/// combined list is shuffled, then arrival times are assigned in list order.
pub fn generate_mix(mix: &[MixEntry], seed: u64, arrival: ArrivalModel) -> Result<Vec<Arrival>> {
    if let ArrivalModel::Poisson { rate } = arrival {
        if !(rate > 0.0 && rate.is_finite()) {
            return Err(Error::InvalidConfig(format!(
                "poisson rate must be > 0, got {rate}"
            )));
        }
    }
    let mut rng = SplitMix64::new(seed);
    let mut profiles = Vec::with_capacity(mix.iter().map(|m| m.count).sum());
    for entry in mix {
        let ranges = entry
            .ranges
            .unwrap_or_else(|| entry.family.default_ranges());
        ranges.validate()?;
        for k in 0..entry.count {
            let id = format!("{}-{k:03}", entry.family.prefix());
            profiles.push(draw(&mut rng, id, &ranges));
        }
    }
    if mix.len() > 1 {
        rng.shuffle(&mut profiles);
    }
    let mut t = 0.0;
    Ok(profiles
        .into_iter()
        .map(|profile| {
            if let ArrivalModel::Poisson { rate } = arrival {
                t += rng.exponential(rate);
            }
            Arrival {
                profile,
                arrival_time: t,
            }
        })
        .collect())
}
