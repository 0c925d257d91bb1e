//! Browser bindings. Every export takes plain numbers and returns a JSON
//! string, so the page needs no generated typings.

use serde::Serialize;
use wasm_bindgen::prelude::*;

use ecosched::energy::{host_power, EnergyCoefficients, HostId, HostState};
use ecosched::profiling::{classify_workload, WorkloadProfile};
use ecosched::scenario::Scenario;
use ecosched::workloads::ArrivalModel;

#[derive(Serialize)]
struct CurvePoint {
    u_cpu: f64,
    watts: f64,
}

pub fn power_curve_json(
    coeffs: EnergyCoefficients,
    u_mem: f64,
    u_io: f64,
    freq: f64,
) -> Result<String, String> {
    coeffs.validate().map_err(|e| e.to_string())?;
    let points: Vec<CurvePoint> = (0..=20)
        .map(|k| {
            let u_cpu = k as f64 / 20.0;
            let mut host = HostState::with_utilization(HostId(0), u_cpu, u_mem, u_io);
            host.freq = freq;
            CurvePoint {
                u_cpu,
                watts: host_power(&host, &coeffs),
            }
        })
        .collect();
    serde_json::to_string(&points).map_err(|e| e.to_string())
}

pub fn compare_json(
    hosts: u32,
    jobs_per_family: u32,
    rate: f64,
    seed: u32,
) -> Result<String, String> {
    let mut s = Scenario::reference();
    s.cluster.hosts[0].count = hosts as usize;
    for m in &mut s.workloads.mix {
        m.count = jobs_per_family as usize;
    }
    s.workloads.arrival = ArrivalModel::Poisson { rate };
    s.validate().map_err(|e| e.to_string())?;
    let report = ecosched::compare(&s, 1, seed as u64).map_err(|e| e.to_string())?;
    serde_json::to_string(&report).map_err(|e| e.to_string())
}

pub fn classify_json(cpu: f64, mem: f64, disk: f64, net: f64) -> Result<String, String> {
    let p = WorkloadProfile::new("demo", [cpu, mem, disk, net], 60.0, 1.0)
        .map_err(|e| e.to_string())?;
    serde_json::to_string(&classify_workload(&p)).map_err(|e| e.to_string())
}

/// Host power over cpu utilization 0..1 in steps of 0.05.
#[wasm_bindgen]
pub fn power_curve(
    p_idle: f64,
    alpha: f64,
    beta: f64,
    gamma: f64,
    u_mem: f64,
    u_io: f64,
    freq: f64,
) -> Result<String, JsValue> {
    let coeffs = EnergyCoefficients {
        p_idle,
        alpha,
        beta,
        gamma,
    };
    power_curve_json(coeffs, u_mem, u_io, freq).map_err(|e| JsValue::from_str(&e))
}

/// One paired repetition of energy-aware against round-robin.
#[wasm_bindgen]
pub fn compare(hosts: u32, jobs_per_family: u32, rate: f64, seed: u32) -> Result<String, JsValue> {
    compare_json(hosts, jobs_per_family, rate, seed).map_err(|e| JsValue::from_str(&e))
}

#[wasm_bindgen]
pub fn classify(cpu: f64, mem: f64, disk: f64, net: f64) -> Result<String, JsValue> {
    classify_json(cpu, mem, disk, net).map_err(|e| JsValue::from_str(&e))
}
