//! Network slice placement requests (NSPRs) and their random generator.
//!
//! A slice is a linear VNF chain anchored at a user access node. Virtual
//! link `i` runs from VNF `i - 1` (or the access node, for `i = 0`) to VNF
//! `i`, so a chain of `n` VNFs has exactly `n` virtual links.

use std::fmt;

use rand::Rng;
use rand_distr::{Distribution, Exp};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::psn::{NodeId, Psn};

/// Simulation time in integer ticks.
pub type SimTime = u64;

/// Ticks per configured time unit. Rates and mean holding times are given
/// per time unit; event times are ticks.
pub const TICKS_PER_UNIT: u64 = 1_000;

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct NsprId(pub u64);

impl fmt::Display for NsprId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "s{}", self.0)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Vnf {
    pub index: usize,
    pub cpu_req: u64,
    pub ram_req: u64,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Endpoint {
    Access,
    Vnf(usize),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct VirtualLink {
    pub src: Endpoint,
    pub dst: Endpoint,
    pub bw_req: u64,
    pub lat_req: u64,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Nspr {
    pub id: NsprId,
    pub vnfs: Vec<Vnf>,
    pub vlinks: Vec<VirtualLink>,
    /// Budget on the summed path latency of every virtual link, access leg
    /// included.
    pub e2e_latency: u64,
    pub access_node: NodeId,
    pub arrival_time: SimTime,
    pub holding_time: SimTime,
}

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum NsprError {
    #[error("slice has no VNFs")]
    Empty,
    #[error("VNF {0} requests neither cpu nor ram")]
    ZeroVnf(usize),
    #[error("VNF {0} carries index {1}")]
    BadIndex(usize, usize),
    #[error("virtual link {0} does not follow the chain")]
    BrokenChain(usize),
    #[error("holding time must be positive")]
    ZeroHolding,
    #[error("range {name} is empty ({min} > {max})")]
    EmptyRange { name: &'static str, min: u64, max: u64 },
    #[error("VNF cpu and ram ranges both admit zero")]
    ZeroDemand,
    #[error("mean holding time must be positive and finite")]
    Holding,
    #[error("substrate has no access node")]
    NoAccess,
}

impl Nspr {
    /// Builds a chain request; vlink `i` gets `vlink_reqs[i]` as
    /// `(bw_req, lat_req)`.
    pub fn chain(
        id: NsprId,
        access_node: NodeId,
        vnf_reqs: &[(u64, u64)],
        vlink_reqs: &[(u64, u64)],
        e2e_latency: u64,
    ) -> Nspr {
        assert_eq!(vnf_reqs.len(), vlink_reqs.len(), "one virtual link per VNF");
        let vnfs = vnf_reqs
            .iter()
            .enumerate()
            .map(|(index, &(cpu_req, ram_req))| Vnf {
                index,
                cpu_req,
                ram_req,
            })
            .collect();
        let vlinks = vlink_reqs
            .iter()
            .enumerate()
            .map(|(i, &(bw_req, lat_req))| VirtualLink {
                src: if i == 0 { Endpoint::Access } else { Endpoint::Vnf(i - 1) },
                dst: Endpoint::Vnf(i),
                bw_req,
                lat_req,
            })
            .collect();
        Nspr {
            id,
            vnfs,
            vlinks,
            e2e_latency,
            access_node,
            arrival_time: 0,
            holding_time: 1,
        }
    }

    pub fn len(&self) -> usize {
        self.vnfs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.vnfs.is_empty()
    }

    pub fn departure_time(&self) -> SimTime {
        self.arrival_time + self.holding_time
    }

    pub fn validate(&self) -> Result<(), NsprError> {
        if self.vnfs.is_empty() {
            return Err(NsprError::Empty);
        }
        for (i, v) in self.vnfs.iter().enumerate() {
            if v.index != i {
                return Err(NsprError::BadIndex(i, v.index));
            }
            if v.cpu_req == 0 && v.ram_req == 0 {
                return Err(NsprError::ZeroVnf(i));
            }
        }
        if self.vlinks.len() != self.vnfs.len() {
            return Err(NsprError::BrokenChain(self.vlinks.len().min(self.vnfs.len())));
        }
        for (i, l) in self.vlinks.iter().enumerate() {
            let src = if i == 0 { Endpoint::Access } else { Endpoint::Vnf(i - 1) };
            if l.src != src || l.dst != Endpoint::Vnf(i) {
                return Err(NsprError::BrokenChain(i));
            }
        }
        if self.holding_time == 0 {
            return Err(NsprError::ZeroHolding);
        }
        Ok(())
    }
}

/// Inclusive integer range.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct IntRange {
    pub min: u64,
    pub max: u64,
}

impl IntRange {
    pub const fn new(min: u64, max: u64) -> Self {
        IntRange { min, max }
    }

    pub const fn point(v: u64) -> Self {
        IntRange { min: v, max: v }
    }

    fn check(&self, name: &'static str) -> Result<(), NsprError> {
        if self.min > self.max {
            return Err(NsprError::EmptyRange {
                name,
                min: self.min,
                max: self.max,
            });
        }
        Ok(())
    }

    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> u64 {
        rng.random_range(self.min..=self.max)
    }

    /// Scales both ends by `num / den`, rounding down.
    pub fn scaled(&self, num: u64, den: u64) -> IntRange {
        IntRange {
            min: self.min * num / den,
            max: self.max * num / den,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct NsprParams {
    pub chain_len: IntRange,
    pub cpu: IntRange,
    pub ram: IntRange,
    pub bw: IntRange,
    /// Per virtual link latency bound.
    pub vlink_latency: IntRange,
    pub e2e_latency: IntRange,
    /// Mean of the exponential holding time, in time units.
    pub mean_holding: f64,
}

impl Default for NsprParams {
    fn default() -> Self {
        NsprParams {
            chain_len: IntRange::new(2, 5),
            cpu: IntRange::new(1, 4),
            ram: IntRange::new(1, 8),
            bw: IntRange::new(10, 100),
            vlink_latency: IntRange::new(1_000, 5_000),
            e2e_latency: IntRange::new(4_000, 10_000),
            mean_holding: 100.0,
        }
    }
}

impl NsprParams {
    pub fn validate(&self) -> Result<(), NsprError> {
        self.chain_len.check("chain_len")?;
        self.cpu.check("cpu")?;
        self.ram.check("ram")?;
        self.bw.check("bw")?;
        self.vlink_latency.check("vlink_latency")?;
        self.e2e_latency.check("e2e_latency")?;
        if self.chain_len.min == 0 {
            return Err(NsprError::Empty);
        }
        if self.cpu.min == 0 && self.ram.min == 0 {
            return Err(NsprError::ZeroDemand);
        }
        if !(self.mean_holding.is_finite() && self.mean_holding > 0.0) {
            return Err(NsprError::Holding);
        }
        Ok(())
    }

    /// Draws one holding time in ticks (at least one tick).
    pub fn sample_holding<R: Rng + ?Sized>(&self, rng: &mut R) -> SimTime {
        let exp = Exp::new(1.0 / self.mean_holding).expect("validated mean");
        let units: f64 = exp.sample(rng);
        ((units * TICKS_PER_UNIT as f64).round() as SimTime).max(1)
    }
}

/// Draws one request. Every field is independent and uniform over its
/// range, except the exponential holding time.
pub fn generate_nspr<R: Rng + ?Sized>(
    params: &NsprParams,
    psn: &Psn,
    id: NsprId,
    arrival_time: SimTime,
    rng: &mut R,
) -> Result<Nspr, NsprError> {
    params.validate()?;
    let access = psn.access_nodes();
    if access.is_empty() {
        return Err(NsprError::NoAccess);
    }
    let access_node = access[rng.random_range(0..access.len())];
    let n = params.chain_len.sample(rng) as usize;
    let vnfs = (0..n)
        .map(|index| Vnf {
            index,
            cpu_req: params.cpu.sample(rng),
            ram_req: params.ram.sample(rng),
        })
        .collect();
    let vlinks = (0..n)
        .map(|i| VirtualLink {
            src: if i == 0 { Endpoint::Access } else { Endpoint::Vnf(i - 1) },
            dst: Endpoint::Vnf(i),
            bw_req: params.bw.sample(rng),
            lat_req: params.vlink_latency.sample(rng),
        })
        .collect();
    let e2e_latency = params.e2e_latency.sample(rng);
    let holding_time = params.sample_holding(rng);
    Ok(Nspr {
        id,
        vnfs,
        vlinks,
        e2e_latency,
        access_node,
        arrival_time,
        holding_time,
    })
}
