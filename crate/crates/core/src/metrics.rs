//! Key metrics: acceptance ratio and normalized resource usage.
//!
//! Ratios are kept as exact integer pairs and only turned into decimals at
//! export time.

use num_rational::Ratio;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::psn::{DcType, Psn};
use crate::slice::SimTime;

pub type Fraction = Ratio<u64>;

#[derive(Debug, Error, PartialEq, Eq)]
pub enum MetricsError {
    #[error("{accepts} accepts exceed {arrivals} arrivals")]
    Counters { accepts: u64, arrivals: u64 },
}

/// `accepts / arrivals`, or `None` before the first arrival.
pub fn acceptance_ratio(accepts: u64, arrivals: u64) -> Result<Option<Fraction>, MetricsError> {
    if accepts > arrivals {
        return Err(MetricsError::Counters { accepts, arrivals });
    }
    Ok((arrivals > 0).then(|| Ratio::new(accepts, arrivals)))
}

/// Which tier a link's usage is charged to.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum LinkTierRule {
    /// The endpoint closer to the edge (EDC < CDC < CCP).
    #[default]
    MoreEdge,
    /// The endpoint closer to the core.
    MoreCore,
}

/// One resource class broken down per tier. `None` marks a group with no
/// capacity.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct TierUsage {
    pub edc: Option<Fraction>,
    pub cdc: Option<Fraction>,
    pub ccp: Option<Fraction>,
    pub all: Option<Fraction>,
}

impl TierUsage {
    fn from_sums(used: [u64; 4], cap: [u64; 4]) -> Self {
        let f = |i: usize| (cap[i] > 0).then(|| Ratio::new(used[i], cap[i]));
        TierUsage {
            edc: f(0),
            cdc: f(1),
            ccp: f(2),
            all: f(3),
        }
    }

    pub fn values(&self) -> [Option<Fraction>; 4] {
        [self.edc, self.cdc, self.ccp, self.all]
    }

    pub fn get(&self, tier: Option<DcType>) -> Option<Fraction> {
        match tier {
            Some(DcType::Edc) => self.edc,
            Some(DcType::Cdc) => self.cdc,
            Some(DcType::Ccp) => self.ccp,
            None => self.all,
        }
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Utilization {
    pub cpu: TierUsage,
    pub ram: TierUsage,
    pub bw: TierUsage,
}

fn slot(tier: DcType) -> usize {
    match tier {
        DcType::Edc => 0,
        DcType::Cdc => 1,
        DcType::Ccp => 2,
    }
}

/// `sum(used) / sum(cap)` per resource class and tier, plus global.
pub fn utilization(psn: &Psn, rule: LinkTierRule) -> Utilization {
    let mut cpu = ([0u64; 4], [0u64; 4]);
    let mut ram = ([0u64; 4], [0u64; 4]);
    for s in psn.servers() {
        let add = |acc: &mut ([u64; 4], [u64; 4]), used: u64, cap: u64| {
            if let Some(t) = psn.tier(s.id) {
                acc.0[slot(t)] += used;
                acc.1[slot(t)] += cap;
            }
            acc.0[3] += used;
            acc.1[3] += cap;
        };
        add(&mut cpu, s.cpu_used, s.cpu_cap);
        add(&mut ram, s.ram_used, s.ram_cap);
    }
    let mut bw = ([0u64; 4], [0u64; 4]);
    for l in psn.links() {
        let ends = [psn.tier(l.a), psn.tier(l.b)].into_iter().flatten();
        let tier = match rule {
            LinkTierRule::MoreEdge => ends.min(),
            LinkTierRule::MoreCore => ends.max(),
        };
        if let Some(t) = tier {
            bw.0[slot(t)] += l.bw_used;
            bw.1[slot(t)] += l.bw_cap;
        }
        bw.0[3] += l.bw_used;
        bw.1[3] += l.bw_cap;
    }
    Utilization {
        cpu: TierUsage::from_sums(cpu.0, cpu.1),
        ram: TierUsage::from_sums(ram.0, ram.1),
        bw: TierUsage::from_sums(bw.0, bw.1),
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct MetricsSample {
    pub t: SimTime,
    pub arrivals: u64,
    pub accepts: u64,
    pub rejects: u64,
    pub acceptance_ratio: Option<Fraction>,
    pub util: Utilization,
    /// Wall time of the most recent placement decision, in microseconds.
    pub decision_us: u64,
}

#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct RunMeta {
    pub algorithm: String,
    pub seed: u64,
    pub config_hash: String,
}

#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct MetricsSeries {
    pub meta: RunMeta,
    pub samples: Vec<MetricsSample>,
}

/// Hex SHA-256 of the JSON form of `value`.
pub fn config_hash<T: Serialize>(value: &T) -> String {
    let bytes = serde_json::to_vec(value).expect("config serializes");
    hex::encode(Sha256::digest(&bytes))
}

/// Fixed CSV column order.
pub const CSV_HEADER: [&str; 18] = [
    "t",
    "arrivals",
    "accepts",
    "rejects",
    "acceptance_ratio",
    "util_cpu_edc",
    "util_cpu_cdc",
    "util_cpu_ccp",
    "util_cpu_all",
    "util_ram_edc",
    "util_ram_cdc",
    "util_ram_ccp",
    "util_ram_all",
    "util_bw_edc",
    "util_bw_cdc",
    "util_bw_ccp",
    "util_bw_all",
    "decision_us",
];

/// Decimal view of one sample, as written to and read back from CSV.
#[derive(Clone, Debug, PartialEq)]
pub struct MetricsRow {
    pub t: SimTime,
    pub arrivals: u64,
    pub accepts: u64,
    pub rejects: u64,
    pub acceptance_ratio: Option<f64>,
    /// cpu (edc, cdc, ccp, all), ram (...), bw (...)
    pub util: [Option<f64>; 12],
    pub decision_us: u64,
}

pub fn to_f64(f: Fraction) -> f64 {
    *f.numer() as f64 / *f.denom() as f64
}

impl From<&MetricsSample> for MetricsRow {
    fn from(s: &MetricsSample) -> Self {
        let mut util = [None; 12];
        let groups = [s.util.cpu, s.util.ram, s.util.bw];
        for (g, usage) in groups.iter().enumerate() {
            for (i, v) in usage.values().into_iter().enumerate() {
                util[g * 4 + i] = v.map(to_f64);
            }
        }
        MetricsRow {
            t: s.t,
            arrivals: s.arrivals,
            accepts: s.accepts,
            rejects: s.rejects,
            acceptance_ratio: s.acceptance_ratio.map(to_f64),
            util,
            decision_us: s.decision_us,
        }
    }
}

impl MetricsSeries {
    pub fn rows(&self) -> Vec<MetricsRow> {
        self.samples.iter().map(MetricsRow::from).collect()
    }

    pub fn last(&self) -> Option<&MetricsSample> {
        self.samples.last()
    }

    /// Mean global CPU utilization over all samples.
    pub fn mean_cpu_utilization(&self) -> f64 {
        let vals: Vec<f64> = self
            .samples
            .iter()
            .filter_map(|s| s.util.cpu.all.map(to_f64))
            .collect();
        if vals.is_empty() {
            0.0
        } else {
            vals.iter().sum::<f64>() / vals.len() as f64
        }
    }

    /// Checks monotone counters, time order, utilization bounds and that the
    /// ratio column matches the counters.
    pub fn check(&self) -> Result<(), String> {
        for (i, s) in self.samples.iter().enumerate() {
            if s.accepts + s.rejects > s.arrivals {
                return Err(format!("sample {i}: accepts + rejects > arrivals"));
            }
            let expected = acceptance_ratio(s.accepts, s.arrivals).map_err(|e| e.to_string())?;
            if expected != s.acceptance_ratio {
                return Err(format!("sample {i}: ratio column disagrees with counters"));
            }
            let all = [s.util.cpu, s.util.ram, s.util.bw];
            if all
                .iter()
                .flat_map(|u| u.values())
                .flatten()
                .any(|f| f > Ratio::from_integer(1))
            {
                return Err(format!("sample {i}: utilization above 1"));
            }
        }
        for (i, w) in self.samples.windows(2).enumerate() {
            let (a, b) = (&w[0], &w[1]);
            if b.t < a.t {
                return Err(format!("sample {}: time goes backwards", i + 1));
            }
            if b.arrivals < a.arrivals || b.accepts < a.accepts || b.rejects < a.rejects {
                return Err(format!("sample {}: counter decreased", i + 1));
            }
        }
        Ok(())
    }
}

/// Spearman rank correlation with average ranks for ties. `None` when
/// either side is constant or the inputs are shorter than two.
pub fn spearman(xs: &[f64], ys: &[f64]) -> Option<f64> {
    assert_eq!(xs.len(), ys.len());
    if xs.len() < 2 {
        return None;
    }
    let rx = ranks(xs);
    let ry = ranks(ys);
    let n = xs.len() as f64;
    let mx = rx.iter().sum::<f64>() / n;
    let my = ry.iter().sum::<f64>() / n;
    let cov: f64 = rx.iter().zip(&ry).map(|(a, b)| (a - mx) * (b - my)).sum();
    let vx: f64 = rx.iter().map(|a| (a - mx).powi(2)).sum();
    let vy: f64 = ry.iter().map(|b| (b - my).powi(2)).sum();
    if vx == 0.0 || vy == 0.0 {
        return None;
    }
    Some(cov / (vx * vy).sqrt())
}

fn ranks(v: &[f64]) -> Vec<f64> {
    let mut idx: Vec<usize> = (0..v.len()).collect();
    idx.sort_by(|&a, &b| v[a].total_cmp(&v[b]));
    let mut out = vec![0.0; v.len()];
    let mut i = 0;
    while i < idx.len() {
        let mut j = i;
        while j + 1 < idx.len() && v[idx[j + 1]] == v[idx[i]] {
            j += 1;
        }
        let avg = (i + j) as f64 / 2.0 + 1.0;
        for &k in &idx[i..=j] {
            out[k] = avg;
        }
        i = j + 1;
    }
    out
}
