//! Hierarchical edge/core/cloud substrate generator.
//!
//! Every DC is a star: one DC switch with its servers attached. EDC switches
//! hang off CDC switches (round-robin), CDC switches form a ring and each
//! links up to the CCP switch. EDC switches are the user access points.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::psn::{DcId, DcType, NodeId, Psn, PsnBuilder, PsnError};

/// Capacity and cost weights of every server in one tier.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ServerSpec {
    pub cpu_cap: u64,
    pub ram_cap: u64,
    pub cpu_weight: u64,
    pub ram_weight: u64,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LinkSpec {
    pub bw: u64,
    pub latency: u64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PsnConfig {
    pub n_edc: u32,
    pub n_cdc: u32,
    pub n_ccp: u32,
    pub servers_per_edc: u32,
    pub servers_per_cdc: u32,
    pub servers_per_ccp: u32,
    pub edc_server: ServerSpec,
    pub cdc_server: ServerSpec,
    pub ccp_server: ServerSpec,
    /// Server to DC switch.
    pub intra_dc_link: LinkSpec,
    pub edc_cdc_link: LinkSpec,
    pub cdc_cdc_link: LinkSpec,
    pub cdc_ccp_link: LinkSpec,
    /// Used when there is no CDC tier and EDCs attach straight to the CCP.
    pub edc_ccp_link: LinkSpec,
    /// Per-server capacity jitter in percent (0 = homogeneous tiers). Each
    /// capacity is drawn uniformly from `[cap * (100 - jitter) / 100, cap]`.
    pub capacity_jitter_pct: u32,
    pub seed: u64,
}

impl Default for PsnConfig {
    /// The 21-DC / 1008-server demonstration substrate.
    fn default() -> Self {
        PsnConfig {
            n_edc: 15,
            n_cdc: 5,
            n_ccp: 1,
            servers_per_edc: 16,
            servers_per_cdc: 64,
            servers_per_ccp: 448,
            edc_server: ServerSpec {
                cpu_cap: 16,
                ram_cap: 32,
                cpu_weight: 3,
                ram_weight: 3,
            },
            cdc_server: ServerSpec {
                cpu_cap: 32,
                ram_cap: 64,
                cpu_weight: 2,
                ram_weight: 2,
            },
            ccp_server: ServerSpec {
                cpu_cap: 64,
                ram_cap: 128,
                cpu_weight: 1,
                ram_weight: 1,
            },
            intra_dc_link: LinkSpec {
                bw: 10_000,
                latency: 10,
            },
            edc_cdc_link: LinkSpec {
                bw: 10_000,
                latency: 500,
            },
            cdc_cdc_link: LinkSpec {
                bw: 20_000,
                latency: 1_000,
            },
            cdc_ccp_link: LinkSpec {
                bw: 40_000,
                latency: 2_000,
            },
            edc_ccp_link: LinkSpec {
                bw: 10_000,
                latency: 2_500,
            },
            capacity_jitter_pct: 0,
            seed: 0,
        }
    }
}

impl PsnConfig {
    /// A small substrate on which the exact solver stays tractable.
    pub fn desk() -> Self {
        PsnConfig {
            n_edc: 2,
            n_cdc: 1,
            n_ccp: 1,
            servers_per_edc: 2,
            servers_per_cdc: 3,
            servers_per_ccp: 3,
            ..PsnConfig::default()
        }
    }

    pub fn dc_total(&self) -> u64 {
        u64::from(self.n_edc) + u64::from(self.n_cdc) + u64::from(self.n_ccp)
    }

    pub fn server_total(&self) -> u64 {
        u64::from(self.n_edc) * u64::from(self.servers_per_edc)
            + u64::from(self.n_cdc) * u64::from(self.servers_per_cdc)
            + u64::from(self.n_ccp) * u64::from(self.servers_per_ccp)
    }

    pub fn server_spec(&self, kind: DcType) -> ServerSpec {
        match kind {
            DcType::Edc => self.edc_server,
            DcType::Cdc => self.cdc_server,
            DcType::Ccp => self.ccp_server,
        }
    }

    fn servers_per(&self, kind: DcType) -> u32 {
        match kind {
            DcType::Edc => self.servers_per_edc,
            DcType::Cdc => self.servers_per_cdc,
            DcType::Ccp => self.servers_per_ccp,
        }
    }

    /// Multiplies every server capacity by `num / den` (rounded down, at least 1).
    pub fn scale_capacities(&mut self, num: u64, den: u64) {
        for spec in [&mut self.edc_server, &mut self.cdc_server, &mut self.ccp_server] {
            spec.cpu_cap = (spec.cpu_cap * num / den).max(1);
            spec.ram_cap = (spec.ram_cap * num / den).max(1);
        }
    }

    pub fn validate(&self) -> Result<(), TopologyError> {
        if self.dc_total() == 0 {
            return Err(TopologyError::NoDataCenters);
        }
        if self.server_total() == 0 {
            return Err(TopologyError::NoServers);
        }
        if self.capacity_jitter_pct > 100 {
            return Err(TopologyError::Jitter(self.capacity_jitter_pct));
        }
        Ok(())
    }
}

#[derive(Debug, Error, PartialEq, Eq)]
pub enum TopologyError {
    #[error("configuration has zero data centers")]
    NoDataCenters,
    #[error("configuration has zero servers")]
    NoServers,
    #[error("capacity jitter {0}% exceeds 100%")]
    Jitter(u32),
    #[error(transparent)]
    Psn(#[from] PsnError),
}

/// Builds the substrate described by `config`. Deterministic in `config`.
pub fn build_psn(config: &PsnConfig) -> Result<Psn, TopologyError> {
    config.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let mut b = PsnBuilder::new();

    let mut tier_switches: [Vec<NodeId>; 3] = Default::default();
    for (t, kind) in DcType::ALL.into_iter().enumerate() {
        let count = match kind {
            DcType::Edc => config.n_edc,
            DcType::Cdc => config.n_cdc,
            DcType::Ccp => config.n_ccp,
        };
        for _ in 0..count {
            let dc = b.dc(kind);
            let sw = b.switch(Some(dc), kind == DcType::Edc);
            tier_switches[t].push(sw);
            populate_dc(&mut b, &mut rng, config, kind, dc, sw);
        }
    }
    let [edcs, cdcs, ccps] = tier_switches;

    // CCPs chained so multiple clouds stay connected.
    for pair in ccps.windows(2) {
        b.link(pair[0], pair[1], config.cdc_ccp_link.bw, config.cdc_ccp_link.latency);
    }
    for (i, &cdc) in cdcs.iter().enumerate() {
        if !ccps.is_empty() {
            let ccp = ccps[i % ccps.len()];
            b.link(cdc, ccp, config.cdc_ccp_link.bw, config.cdc_ccp_link.latency);
        }
        if cdcs.len() > 1 {
            let next = cdcs[(i + 1) % cdcs.len()];
            if !b.has_link(cdc, next) {
                b.link(cdc, next, config.cdc_cdc_link.bw, config.cdc_cdc_link.latency);
            }
        }
    }
    for (i, &edc) in edcs.iter().enumerate() {
        if !cdcs.is_empty() {
            let parent = cdcs[i % cdcs.len()];
            b.link(edc, parent, config.edc_cdc_link.bw, config.edc_cdc_link.latency);
        } else if !ccps.is_empty() {
            b.link(edc, ccps[0], config.edc_ccp_link.bw, config.edc_ccp_link.latency);
        } else if i > 0 {
            b.link(edc, edcs[0], config.edc_cdc_link.bw, config.edc_cdc_link.latency);
        }
    }
    // CDCs without any CCP: the ring alone connects them (n_cdc >= 2), a
    // single CDC is connected through its EDCs.

    Ok(b.build()?)
}

fn populate_dc(
    b: &mut PsnBuilder,
    rng: &mut ChaCha8Rng,
    config: &PsnConfig,
    kind: DcType,
    dc: DcId,
    sw: NodeId,
) {
    let spec = config.server_spec(kind);
    let jitter = u64::from(config.capacity_jitter_pct);
    let mut draw = |cap: u64| {
        if jitter == 0 {
            cap
        } else {
            let lo = cap * (100 - jitter) / 100;
            rng.random_range(lo..=cap)
        }
    };
    for _ in 0..config.servers_per(kind) {
        let cpu = draw(spec.cpu_cap);
        let ram = draw(spec.ram_cap);
        let s = b.server(dc, cpu, ram, spec.cpu_weight, spec.ram_weight);
        b.link(s, sw, config.intra_dc_link.bw, config.intra_dc_link.latency);
    }
}
