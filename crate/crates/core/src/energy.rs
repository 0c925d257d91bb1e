//! Linear host power model and the time-integrated energy ledger.

use std::collections::BTreeMap;
use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::profiling::WorkloadProfile;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(transparent)]
pub struct HostId(pub u32);

impl fmt::Display for HostId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "h{}", self.0)
    }
}

/// Power draw coefficients: idle watts plus watts per unit utilization of
/// cpu, memory and I/O.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EnergyCoefficients {
    pub p_idle: f64,
    pub alpha: f64,
    pub beta: f64,
    pub gamma: f64,
}

impl Default for EnergyCoefficients {
    fn default() -> Self {
        Self {
            p_idle: 100.0,
            alpha: 150.0,
            beta: 30.0,
            gamma: 40.0,
        }
    }
}

impl EnergyCoefficients {
    pub fn validate(&self) -> Result<()> {
        let ok = [self.p_idle, self.alpha, self.beta, self.gamma]
            .iter()
            .all(|v| *v >= 0.0 && v.is_finite());
        if ok {
            Ok(())
        } else {
            Err(Error::InvalidConfig(format!(
                "energy coefficients must be finite and >= 0: {self:?}"
            )))
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum PowerState {
    On,
    Off,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Capacity {
    pub cpu: f64,
    pub mem: f64,
    pub io: f64,
}

impl Default for Capacity {
    fn default() -> Self {
        Self {
            cpu: 1.0,
            mem: 1.0,
            io: 1.0,
        }
    }
}

/// Aggregate resource demand, in the same units as workload utilization.
/// Sums may exceed capacity when a host is oversubscribed.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct Demand {
    pub cpu: f64,
    pub mem: f64,
    pub disk: f64,
    pub net: f64,
}

impl Demand {
    pub fn of(w: &WorkloadProfile) -> Self {
        Demand {
            cpu: w.cpu,
            mem: w.mem,
            disk: w.disk,
            net: w.net,
        }
    }

    pub fn io(&self) -> f64 {
        self.disk.max(self.net)
    }
}

impl std::ops::Add for Demand {
    type Output = Demand;
    fn add(self, o: Demand) -> Demand {
        Demand {
            cpu: self.cpu + o.cpu,
            mem: self.mem + o.mem,
            disk: self.disk + o.disk,
            net: self.net + o.net,
        }
    }
}

impl std::ops::AddAssign for Demand {
    fn add_assign(&mut self, o: Demand) {
        *self = *self + o;
    }
}

/// Live state of one host. Utilization fractions are derived from the
/// aggregate `load` and the host's capacity.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HostState {
    pub host_id: HostId,
    pub power_state: PowerState,
    /// Static frequency multiplier in (0, 1].
    pub freq: f64,
    pub capacity: Capacity,
    pub load: Demand,
}

impl HostState {
    pub fn idle(host_id: HostId) -> Self {
        Self {
            host_id,
            power_state: PowerState::On,
            freq: 1.0,
            capacity: Capacity::default(),
            load: Demand::default(),
        }
    }

    pub fn off(host_id: HostId) -> Self {
        Self {
            power_state: PowerState::Off,
            ..Self::idle(host_id)
        }
    }

    /// An On host at unit capacity whose I/O load sits entirely on disk.
    pub fn with_utilization(host_id: HostId, u_cpu: f64, u_mem: f64, u_io: f64) -> Self {
        Self {
            load: Demand {
                cpu: u_cpu,
                mem: u_mem,
                disk: u_io,
                net: 0.0,
            },
            ..Self::idle(host_id)
        }
    }

    pub fn is_on(&self) -> bool {
        self.power_state == PowerState::On
    }

    fn frac(&self, v: f64, cap: f64) -> f64 {
        if !self.is_on() || cap <= 0.0 {
            return 0.0;
        }
        (v / cap).clamp(0.0, 1.0)
    }

    pub fn u_cpu(&self) -> f64 {
        self.frac(self.load.cpu, self.capacity.cpu)
    }

    pub fn u_mem(&self) -> f64 {
        self.frac(self.load.mem, self.capacity.mem)
    }

    pub fn u_io(&self) -> f64 {
        self.frac(self.load.io(), self.capacity.io)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.freq > 0.0 && self.freq <= 1.0) {
            return Err(Error::InvalidConfig(format!(
                "host {}: freq {} outside (0, 1]",
                self.host_id, self.freq
            )));
        }
        let c = self.capacity;
        if !(c.cpu > 0.0 && c.mem > 0.0 && c.io > 0.0) {
            return Err(Error::InvalidConfig(format!(
                "host {}: capacities must be > 0",
                self.host_id
            )));
        }
        Ok(())
    }
}

/// Instantaneous power draw in watts. Frequency scales only the cpu term.
pub fn host_power(state: &HostState, coeffs: &EnergyCoefficients) -> f64 {
    if !state.is_on() {
        return 0.0;
    }
    coeffs.p_idle
        + coeffs.alpha * state.freq * state.u_cpu()
        + coeffs.beta * state.u_mem()
        + coeffs.gamma * state.u_io()
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct HostEnergy {
    /// Watt-hours drawn in total.
    pub total_wh: f64,
    /// Watt-hours the host would have drawn idling while On.
    pub idle_wh: f64,
    pub on_seconds: f64,
}

impl HostEnergy {
    pub fn attributed_wh(&self) -> f64 {
        (self.total_wh - self.idle_wh).max(0.0)
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct EnergyLedger {
    hosts: BTreeMap<HostId, HostEnergy>,
    last_time: f64,
}

impl EnergyLedger {
    pub fn new() -> Self {
        Self::default()
    }

    /// Integrates constant power over `dt` seconds for every host. Utilization
    /// must be constant across the interval.
    pub fn accrue<'a, I>(&mut self, hosts: I, dt: f64) -> Result<()>
    where
        I: IntoIterator<Item = (&'a HostState, &'a EnergyCoefficients)>,
    {
        if !(dt >= 0.0) {
            return Err(Error::NegativeInterval(dt));
        }
        for (state, coeffs) in hosts {
            let entry = self.hosts.entry(state.host_id).or_default();
            if dt == 0.0 || !state.is_on() {
                continue;
            }
            entry.total_wh += host_power(state, coeffs) * dt / 3600.0;
            entry.idle_wh += coeffs.p_idle * dt / 3600.0;
            entry.on_seconds += dt;
        }
        self.last_time += dt;
        Ok(())
    }

    /// [`accrue`](Self::accrue) for hosts sharing one set of coefficients.
    pub fn accrue_uniform(
        &mut self,
        states: &[HostState],
        coeffs: &EnergyCoefficients,
        dt: f64,
    ) -> Result<()> {
        self.accrue(states.iter().map(|s| (s, coeffs)), dt)
    }

    pub fn host(&self, host_id: HostId) -> Result<&HostEnergy> {
        self.hosts.get(&host_id).ok_or(Error::UnknownHost(host_id))
    }

    pub fn attributed_energy(&self, host_id: HostId) -> Result<f64> {
        Ok(self.host(host_id)?.attributed_wh())
    }

    pub fn hosts(&self) -> impl Iterator<Item = (HostId, &HostEnergy)> {
        self.hosts.iter().map(|(k, v)| (*k, v))
    }

    pub fn total_wh(&self) -> f64 {
        self.hosts.values().map(|h| h.total_wh).sum()
    }

    pub fn on_host_seconds(&self) -> f64 {
        self.hosts.values().map(|h| h.on_seconds).sum()
    }

    pub fn last_time(&self) -> f64 {
        self.last_time
    }

    #[cfg(test)]
    pub(crate) fn insert(&mut self, host_id: HostId, energy: HostEnergy) {
        self.hosts.insert(host_id, energy);
    }
}
