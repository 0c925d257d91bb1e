//! Telemetry ingestion, utilization-vector aggregation and dominant-resource
//! classification.
//!
//! Telemetry arrives as delimiter-separated text with the header
//! `timestamp,subject_id,cpu,mem,disk,net`. Each row is one sample of a
//! workload (or host) with utilization fractions in `[0, 1]`.

use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::workloads::SplitMix64;

pub const TRACE_HEADER: &str = "timestamp,subject_id,cpu,mem,disk,net";

/// Default telemetry sampling interval in seconds.
pub const DEFAULT_SAMPLE_INTERVAL: f64 = 5.0;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TelemetrySample {
    pub timestamp: f64,
    pub subject_id: String,
    pub cpu: f64,
    pub mem: f64,
    pub disk: f64,
    pub net: f64,
}

impl TelemetrySample {
    fn validate(&self) -> Result<()> {
        if !(self.timestamp >= 0.0 && self.timestamp.is_finite()) {
            return Err(Error::MalformedSample(format!(
                "timestamp {} for {}",
                self.timestamp, self.subject_id
            )));
        }
        for (name, v) in [
            ("cpu", self.cpu),
            ("mem", self.mem),
            ("disk", self.disk),
            ("net", self.net),
        ] {
            if !in_unit(v) {
                return Err(Error::MalformedSample(format!(
                    "{name} = {v} for {} at t={}",
                    self.subject_id, self.timestamp
                )));
            }
        }
        Ok(())
    }
}

/// The utilization vector `(c, m, d, n)` of a workload plus the data the
/// simulator needs to run and migrate it.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WorkloadProfile {
    pub workload_id: String,
    pub cpu: f64,
    pub mem: f64,
    pub disk: f64,
    pub net: f64,
    /// Uncontended run time in seconds.
    pub nominal_duration: f64,
    /// Resident memory in GB, moved over the network on migration.
    pub mem_footprint: f64,
}

impl WorkloadProfile {
    pub fn new(
        workload_id: impl Into<String>,
        [cpu, mem, disk, net]: [f64; 4],
        nominal_duration: f64,
        mem_footprint: f64,
    ) -> Result<Self> {
        let profile = Self {
            workload_id: workload_id.into(),
            cpu,
            mem,
            disk,
            net,
            nominal_duration,
            mem_footprint,
        };
        profile.validate()?;
        Ok(profile)
    }

    pub fn validate(&self) -> Result<()> {
        for (name, v) in [
            ("cpu", self.cpu),
            ("mem", self.mem),
            ("disk", self.disk),
            ("net", self.net),
        ] {
            if !in_unit(v) {
                return Err(Error::InvalidConfig(format!(
                    "workload {}: {name} = {v} outside [0, 1]",
                    self.workload_id
                )));
            }
        }
        if !(self.nominal_duration > 0.0 && self.nominal_duration.is_finite()) {
            return Err(Error::InvalidConfig(format!(
                "workload {}: nominal_duration must be > 0",
                self.workload_id
            )));
        }
        if !(self.mem_footprint >= 0.0 && self.mem_footprint.is_finite()) {
            return Err(Error::InvalidConfig(format!(
                "workload {}: mem_footprint must be >= 0",
                self.workload_id
            )));
        }
        Ok(())
    }

    pub fn vector(&self) -> [f64; 4] {
        [self.cpu, self.mem, self.disk, self.net]
    }

    /// The single I/O demand seen by the power and contention models.
    pub fn io(&self) -> f64 {
        self.disk.max(self.net)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum WorkloadClass {
    CpuBound,
    MemBound,
    IoBound,
}

impl fmt::Display for WorkloadClass {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            WorkloadClass::CpuBound => "cpu-bound",
            WorkloadClass::MemBound => "mem-bound",
            WorkloadClass::IoBound => "io-bound",
        })
    }
}

fn in_unit(v: f64) -> bool {
    (0.0..=1.0).contains(&v)
}

/// Averages one subject's samples into a profile.
pub fn aggregate_profile(
    samples: &[TelemetrySample],
    nominal_duration: f64,
    mem_footprint: f64,
) -> Result<WorkloadProfile> {
    let first = samples.first().ok_or(Error::NoTelemetry)?;
    let mut sums = [0.0; 4];
    for s in samples {
        s.validate()?;
        if s.subject_id != first.subject_id {
            return Err(Error::MalformedSample(format!(
                "mixed subjects {} and {}",
                first.subject_id, s.subject_id
            )));
        }
        sums[0] += s.cpu;
        sums[1] += s.mem;
        sums[2] += s.disk;
        sums[3] += s.net;
    }
    let n = samples.len() as f64;
    // Rounding can push a mean of values at the bound a hair past it.
    let mean = sums.map(|s| (s / n).clamp(0.0, 1.0));
    WorkloadProfile::new(
        first.subject_id.clone(),
        mean,
        nominal_duration,
        mem_footprint,
    )
}

/// Dominant resource among cpu, memory and disk. Network is recorded in the
/// profile but takes no part in the argmax. Ties resolve cpu, then memory,
/// then disk.
pub fn classify_workload(profile: &WorkloadProfile) -> WorkloadClass {
    let mut best = (WorkloadClass::CpuBound, profile.cpu);
    for candidate in [
        (WorkloadClass::MemBound, profile.mem),
        (WorkloadClass::IoBound, profile.disk),
    ] {
        if candidate.1 > best.1 {
            best = candidate;
        }
    }
    best.0
}

/// Parses trace text. Line numbers in errors are 1-based and count the header.
pub fn parse_trace(text: &str) -> Result<Vec<TelemetrySample>> {
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(false)
        .flexible(true)
        .trim(csv::Trim::All)
        .from_reader(text.as_bytes());
    let mut records = reader.records();
    let mut row = csv::StringRecord::new();
    let parse_err = |line: u64, message: String| Error::Parse {
        line: line as usize,
        message,
    };
    let record_line = |e: &csv::Error| e.position().map_or(0, |p| p.line());

    match records.next() {
        None => return Ok(Vec::new()),
        Some(Err(e)) => return Err(parse_err(record_line(&e), e.to_string())),
        Some(Ok(header)) => {
            if header.iter().ne(TRACE_HEADER.split(',')) {
                let line = header.position().map_or(1, |p| p.line());
                return Err(parse_err(line, format!("expected header `{TRACE_HEADER}`")));
            }
        }
    }

    let mut out = Vec::new();
    let mut last_ts: std::collections::HashMap<String, f64> = Default::default();
    loop {
        match reader.read_record(&mut row) {
            Ok(false) => break,
            Ok(true) => {}
            Err(e) => return Err(parse_err(record_line(&e), e.to_string())),
        }
        let line = row.position().map_or(0, |p| p.line());
        if row.len() == 1 && row[0].is_empty() {
            continue;
        }
        if row.len() != 6 {
            return Err(parse_err(
                line,
                format!("expected 6 fields, found {}", row.len()),
            ));
        }
        let num = |i: usize, name: &str| -> Result<f64> {
            row[i]
                .parse::<f64>()
                .map_err(|_| parse_err(line, format!("{name}: `{}` is not a number", &row[i])))
        };
        let sample = TelemetrySample {
            timestamp: num(0, "timestamp")?,
            subject_id: row[1].to_string(),
            cpu: num(2, "cpu")?,
            mem: num(3, "mem")?,
            disk: num(4, "disk")?,
            net: num(5, "net")?,
        };
        if sample.subject_id.is_empty() {
            return Err(parse_err(line, "empty subject_id".into()));
        }
        sample
            .validate()
            .map_err(|e| parse_err(line, e.to_string()))?;
        if let Some(prev) = last_ts.insert(sample.subject_id.clone(), sample.timestamp) {
            if sample.timestamp < prev {
                return Err(parse_err(
                    line,
                    format!(
                        "malformed sample: timestamp {} precedes {} for {}",
                        sample.timestamp, prev, sample.subject_id
                    ),
                ));
            }
        }
        out.push(sample);
    }
    Ok(out)
}

/// Writes samples in trace format. Floats use the shortest representation
/// that parses back to the same value.
pub fn serialize_trace(samples: &[TelemetrySample]) -> String {
    let mut w = csv::Writer::from_writer(Vec::with_capacity(32 * (samples.len() + 1)));
    let write = |w: &mut csv::Writer<Vec<u8>>, fields: &[&str]| {
        w.write_record(fields)
            .expect("writing to memory cannot fail");
    };
    write(&mut w, &TRACE_HEADER.split(',').collect::<Vec<_>>());
    for s in samples {
        let nums = [s.timestamp, s.cpu, s.mem, s.disk, s.net].map(|x| format!("{x:?}"));
        write(
            &mut w,
            &[
                &nums[0],
                &s.subject_id,
                &nums[1],
                &nums[2],
                &nums[3],
                &nums[4],
            ],
        );
    }
    let bytes = w.into_inner().expect("flushing to memory cannot fail");
    String::from_utf8(bytes).expect("input was utf-8")
}

/// Groups samples by subject, preserving first-appearance order.
pub fn group_by_subject(samples: &[TelemetrySample]) -> Vec<(String, Vec<TelemetrySample>)> {
    let mut groups: Vec<(String, Vec<TelemetrySample>)> = Vec::new();
    for s in samples {
        match groups.iter_mut().find(|(id, _)| *id == s.subject_id) {
            Some((_, g)) => g.push(s.clone()),
            None => groups.push((s.subject_id.clone(), vec![s.clone()])),
        }
    }
    groups
}

/// Synthesizes telemetry for a profile: one sample every `interval` seconds
/// over its nominal duration, each component perturbed by uniform noise of
/// half-width `jitter` and clamped to `[0, 1]`.
pub fn synthesize_telemetry(
    profile: &WorkloadProfile,
    interval: f64,
    jitter: f64,
    seed: u64,
) -> Vec<TelemetrySample> {
    let mut rng = SplitMix64::new(seed);
    let steps = (profile.nominal_duration / interval).ceil().max(1.0) as usize;
    (0..steps)
        .map(|k| {
            let mut noisy = |v: f64| (v + jitter * (2.0 * rng.next_f64() - 1.0)).clamp(0.0, 1.0);
            TelemetrySample {
                timestamp: k as f64 * interval,
                subject_id: profile.workload_id.clone(),
                cpu: noisy(profile.cpu),
                mem: noisy(profile.mem),
                disk: noisy(profile.disk),
                net: noisy(profile.net),
            }
        })
        .collect()
}
