//! Placement decisions, their validity check and their cost.

use std::collections::{BTreeMap, HashSet};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::psn::{LedgerError, LinkId, NodeId, Psn, Reservation};
use crate::slice::{Nspr, NsprError, NsprId};

/// Where each VNF runs and which physical path carries each virtual link.
///
/// Path `i` starts at the access node (`i = 0`) or at the host of VNF
/// `i - 1`, and ends at the host of VNF `i`. An empty path means both ends
/// are the same node.
#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Placement {
    #[serde(rename = "nspr")]
    pub nspr_id: NsprId,
    #[serde(rename = "hosts")]
    pub vnf_host: BTreeMap<usize, NodeId>,
    #[serde(rename = "paths")]
    pub vlink_path: BTreeMap<usize, Vec<NodeId>>,
}

impl Placement {
    pub fn new(nspr_id: NsprId, hosts: &[NodeId], paths: Vec<Vec<NodeId>>) -> Self {
        Placement {
            nspr_id,
            vnf_host: hosts.iter().copied().enumerate().collect(),
            vlink_path: paths.into_iter().enumerate().collect(),
        }
    }

    /// Hosts in chain order.
    pub fn hosts(&self) -> Vec<NodeId> {
        self.vnf_host.values().copied().collect()
    }

    /// Paths in chain order.
    pub fn paths(&self) -> Vec<Vec<NodeId>> {
        self.vlink_path.values().cloned().collect()
    }

    /// Ledger deltas this placement charges. `None` when a host is not a
    /// server or a path uses a missing link.
    pub fn reservation(&self, psn: &Psn, nspr: &Nspr) -> Option<Reservation> {
        let mut r = Reservation::default();
        for v in &nspr.vnfs {
            let host = *self.vnf_host.get(&v.index)?;
            psn.server(host)?;
            r.nodes.push((host, v.cpu_req, v.ram_req));
        }
        for (i, vl) in nspr.vlinks.iter().enumerate() {
            let path = self.vlink_path.get(&i).map(Vec::as_slice).unwrap_or(&[]);
            for w in path.windows(2) {
                r.links.push((psn.link_between(w[0], w[1])?, vl.bw_req));
            }
        }
        Some(r)
    }
}

/// A violated constraint.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum Violation {
    NodeCpu(NodeId),
    NodeRam(NodeId),
    LinkBw(LinkId),
    VlinkLatency(usize),
    E2eLatency,
    BrokenPath(usize),
    UnmappedVnf(usize),
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
pub struct Cost {
    pub node_term: u64,
    pub bw_hop_term: u64,
}

impl Cost {
    pub fn total(&self) -> u64 {
        self.node_term + self.bw_hop_term
    }
}

impl std::ops::Add for Cost {
    type Output = Cost;

    fn add(self, rhs: Cost) -> Cost {
        Cost {
            node_term: self.node_term + rhs.node_term,
            bw_hop_term: self.bw_hop_term + rhs.bw_hop_term,
        }
    }
}

/// Failure of a placement algorithm. Rejections are not errors: solvers
/// return `None` for those.
#[derive(Debug, Error)]
pub enum SolveError {
    #[error("malformed request: {0}")]
    Request(#[from] NsprError),
    #[error("solver produced an invalid placement for {nspr}: {violations:?}")]
    InvalidPlacement {
        nspr: NsprId,
        violations: Vec<Violation>,
    },
    #[error("tentative reservation failed: {0}")]
    Ledger(#[from] LedgerError),
}

/// Returns `Err` unless `placement` passes [`validate_placement`].
pub(crate) fn ensure_valid(psn: &Psn, nspr: &Nspr, placement: &Placement) -> Result<(), SolveError> {
    let violations = validate_placement(psn, nspr, placement);
    if violations.is_empty() {
        Ok(())
    } else {
        Err(SolveError::InvalidPlacement {
            nspr: nspr.id,
            violations,
        })
    }
}

/// Wire form of a placement with its cost.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct PlacementRecord {
    pub nspr: NsprId,
    pub hosts: BTreeMap<usize, NodeId>,
    pub paths: BTreeMap<usize, Vec<NodeId>>,
    pub cost: CostRecord,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct CostRecord {
    pub node_term: u64,
    pub bw_hop_term: u64,
    pub total: u64,
}

impl From<Cost> for CostRecord {
    fn from(c: Cost) -> Self {
        CostRecord {
            node_term: c.node_term,
            bw_hop_term: c.bw_hop_term,
            total: c.total(),
        }
    }
}

impl PlacementRecord {
    pub fn new(psn: &Psn, nspr: &Nspr, placement: &Placement) -> Self {
        PlacementRecord {
            nspr: placement.nspr_id,
            hosts: placement.vnf_host.clone(),
            paths: placement.vlink_path.clone(),
            cost: placement_cost(psn, nspr, placement).into(),
        }
    }

    pub fn placement(&self) -> Placement {
        Placement {
            nspr_id: self.nspr,
            vnf_host: self.hosts.clone(),
            vlink_path: self.paths.clone(),
        }
    }
}

/// Endpoint of virtual link `i` on the source side.
pub(crate) fn vlink_source(nspr: &Nspr, hosts: &BTreeMap<usize, NodeId>, i: usize) -> Option<NodeId> {
    if i == 0 {
        Some(nspr.access_node)
    } else {
        hosts.get(&(i - 1)).copied()
    }
}

/// Node-side cost of hosting one VNF on `host`.
pub fn node_cost(psn: &Psn, host: NodeId, cpu_req: u64, ram_req: u64) -> u64 {
    psn.server(host)
        .map_or(0, |s| cpu_req * s.cpu_weight + ram_req * s.ram_weight)
}

/// Walks `path` from `src` to `dst`, returning its links and latency, or
/// `None` if it is not a simple path over existing links.
fn trace_path(psn: &Psn, src: NodeId, dst: NodeId, path: &[NodeId]) -> Option<(Vec<LinkId>, u64)> {
    if path.is_empty() {
        return (src == dst).then(|| (Vec::new(), 0));
    }
    if path.len() < 2 || path[0] != src || path[path.len() - 1] != dst {
        return None;
    }
    let mut seen = HashSet::with_capacity(path.len());
    if !path.iter().all(|n| psn.contains(*n) && seen.insert(*n)) {
        return None;
    }
    let mut links = Vec::with_capacity(path.len() - 1);
    let mut latency = 0;
    for w in path.windows(2) {
        let id = psn.link_between(w[0], w[1])?;
        latency += psn.links()[id.index()].latency;
        links.push(id);
    }
    Some((links, latency))
}

/// Every constraint `placement` violates against the current residuals.
/// Empty means valid.
pub fn validate_placement(psn: &Psn, nspr: &Nspr, placement: &Placement) -> Vec<Violation> {
    let mut unmapped = Vec::new();
    let mut broken = Vec::new();
    let mut node_load: BTreeMap<NodeId, (u64, u64)> = BTreeMap::new();
    for v in &nspr.vnfs {
        match placement.vnf_host.get(&v.index) {
            Some(&h) if psn.server(h).is_some() => {
                let e = node_load.entry(h).or_default();
                e.0 += v.cpu_req;
                e.1 += v.ram_req;
            }
            _ => unmapped.push(Violation::UnmappedVnf(v.index)),
        }
    }

    let mut link_load: BTreeMap<LinkId, u64> = BTreeMap::new();
    let mut latency_violations = Vec::new();
    let mut e2e = 0u64;
    for (i, vl) in nspr.vlinks.iter().enumerate() {
        let src = vlink_source(nspr, &placement.vnf_host, i);
        let dst = placement.vnf_host.get(&i).copied();
        let (Some(src), Some(dst)) = (src, dst) else {
            continue;
        };
        let path = placement.vlink_path.get(&i).map(Vec::as_slice).unwrap_or(&[]);
        match trace_path(psn, src, dst, path) {
            Some((links, latency)) => {
                for l in links {
                    *link_load.entry(l).or_default() += vl.bw_req;
                }
                if latency > vl.lat_req {
                    latency_violations.push(Violation::VlinkLatency(i));
                }
                e2e += latency;
            }
            None => broken.push(Violation::BrokenPath(i)),
        }
    }

    let mut out = unmapped;
    out.extend(broken);
    for (n, (cpu, ram)) in node_load {
        let s = psn.server(n).expect("mapped hosts are servers");
        if cpu > s.cpu_residual() {
            out.push(Violation::NodeCpu(n));
        }
        if ram > s.ram_residual() {
            out.push(Violation::NodeRam(n));
        }
    }
    for (l, bw) in link_load {
        if bw > psn.links()[l.index()].bw_residual() {
            out.push(Violation::LinkBw(l));
        }
    }
    out.extend(latency_violations);
    if e2e > nspr.e2e_latency {
        out.push(Violation::E2eLatency);
    }
    out
}

/// Weighted node consumption plus bandwidth times hop count.
pub fn placement_cost(psn: &Psn, nspr: &Nspr, placement: &Placement) -> Cost {
    let node_term = nspr
        .vnfs
        .iter()
        .filter_map(|v| {
            let h = placement.vnf_host.get(&v.index)?;
            Some(node_cost(psn, *h, v.cpu_req, v.ram_req))
        })
        .sum();
    let bw_hop_term = nspr
        .vlinks
        .iter()
        .enumerate()
        .map(|(i, vl)| {
            let hops = placement
                .vlink_path
                .get(&i)
                .map_or(0, |p| p.len().saturating_sub(1) as u64);
            vl.bw_req * hops
        })
        .sum();
    Cost {
        node_term,
        bw_hop_term,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fixtures::{fixture_d4, nspr_x, N1, N2, N3, N4};

    #[test]
    fn direct_placement_is_valid() {
        let psn = fixture_d4();
        let nspr = nspr_x();
        let p = Placement::new(nspr.id, &[N1, N2], vec![vec![], vec![N1, N2]]);
        assert_eq!(validate_placement(&psn, &nspr, &p), vec![]);
    }

    #[test]
    fn detour_placement_is_valid() {
        let psn = fixture_d4();
        let nspr = nspr_x();
        let p = Placement::new(nspr.id, &[N1, N2], vec![vec![], vec![N1, N3, N2]]);
        assert_eq!(validate_placement(&psn, &nspr, &p), vec![]);
    }

    #[test]
    fn overloaded_small_server() {
        let psn = fixture_d4();
        let nspr = nspr_x();
        let p = Placement::new(nspr.id, &[N3, N3], vec![vec![N1, N3], vec![]]);
        assert_eq!(
            validate_placement(&psn, &nspr, &p),
            vec![Violation::NodeCpu(N3), Violation::NodeRam(N3)]
        );
    }

    #[test]
    fn structural_violations() {
        let psn = fixture_d4();
        let nspr = nspr_x();
        let p = Placement::new(nspr.id, &[N1], vec![vec![]]);
        assert_eq!(validate_placement(&psn, &nspr, &p), vec![Violation::UnmappedVnf(1)]);

        // empty path between distinct hosts, and a path with a non-link hop
        let p = Placement::new(nspr.id, &[N4, N2], vec![vec![N1, N4], vec![]]);
        assert_eq!(
            validate_placement(&psn, &nspr, &p),
            vec![Violation::BrokenPath(0), Violation::BrokenPath(1)]
        );
        // non-simple path
        let p = Placement::new(nspr.id, &[N1, N2], vec![vec![], vec![N1, N2, N1, N2]]);
        assert!(validate_placement(&psn, &nspr, &p).contains(&Violation::BrokenPath(1)));
    }

    #[test]
    fn latency_violations() {
        let psn = fixture_d4();
        let nspr = nspr_x();
        // access leg n1->n2->n4 has latency 30 > 10 and breaks the e2e budget
        let p = Placement::new(nspr.id, &[N4, N4], vec![vec![N1, N2, N4], vec![]]);
        assert_eq!(
            validate_placement(&psn, &nspr, &p),
            vec![Violation::VlinkLatency(0), Violation::E2eLatency]
        );
    }

    #[test]
    fn bandwidth_violation() {
        let psn = fixture_d4();
        let mut nspr = nspr_x();
        nspr.vlinks[1].bw_req = 6;
        let p = Placement::new(nspr.id, &[N1, N2], vec![vec![], vec![N1, N3, N2]]);
        let v = validate_placement(&psn, &nspr, &p);
        let l13 = psn.link_between(N1, N3).unwrap();
        let l32 = psn.link_between(N3, N2).unwrap();
        assert_eq!(v, vec![Violation::LinkBw(l13), Violation::LinkBw(l32)]);
    }

    #[test]
    fn fixture_cost() {
        let psn = fixture_d4();
        let nspr = nspr_x();
        let p = Placement::new(nspr.id, &[N1, N2], vec![vec![], vec![N1, N2]]);
        let c = placement_cost(&psn, &nspr, &p);
        assert_eq!(c, Cost { node_term: 8, bw_hop_term: 4 });
        assert_eq!(c.total(), 12);

        let co = Placement::new(nspr.id, &[N1, N1], vec![vec![], vec![]]);
        assert_eq!(placement_cost(&psn, &nspr, &co).bw_hop_term, 0);

        let mut doubled = nspr.clone();
        for vl in &mut doubled.vlinks {
            vl.bw_req *= 2;
        }
        assert_eq!(placement_cost(&psn, &doubled, &p).bw_hop_term, 8);
    }

    #[test]
    fn record_wire_shape() {
        let psn = fixture_d4();
        let nspr = nspr_x();
        let p = Placement::new(nspr.id, &[N1, N2], vec![vec![], vec![N1, N2]]);
        let v = serde_json::to_value(PlacementRecord::new(&psn, &nspr, &p)).unwrap();
        assert_eq!(v["nspr"], 7);
        assert_eq!(v["hosts"]["1"], N2.0);
        assert_eq!(v["paths"]["1"][1], N2.0);
        assert_eq!(v["cost"]["total"], 12);
        let back: PlacementRecord = serde_json::from_value(v).unwrap();
        assert_eq!(back.placement(), p);
    }
}
