//! Physical substrate network (PSN): servers, switches, links and the
//! residual-resource ledger that every placement is committed against.
//!
//! Node ids are dense over servers and switches together (`0..n`), so a
//! `NodeId` doubles as an index into per-node tables. All resource amounts
//! are integers; commit and release are exact inverses.

use std::collections::{BTreeMap, HashMap, VecDeque};
use std::fmt;
use std::sync::Arc;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::placement::{validate_placement, Placement, Violation};
use crate::slice::{Nspr, NsprId};

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct NodeId(pub u32);

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct LinkId(pub u32);

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct DcId(pub u32);

impl NodeId {
    pub fn index(self) -> usize {
        self.0 as usize
    }
}

impl LinkId {
    pub fn index(self) -> usize {
        self.0 as usize
    }
}

impl fmt::Display for NodeId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "n{}", self.0)
    }
}

impl fmt::Display for LinkId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "l{}", self.0)
    }
}

impl fmt::Display for DcId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "dc{}", self.0)
    }
}

/// Data-center tier. Ordered from the edge inwards.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum DcType {
    #[serde(rename = "EDC")]
    Edc,
    #[serde(rename = "CDC")]
    Cdc,
    #[serde(rename = "CCP")]
    Ccp,
}

impl DcType {
    pub const ALL: [DcType; 3] = [DcType::Edc, DcType::Cdc, DcType::Ccp];

    pub fn label(self) -> &'static str {
        match self {
            DcType::Edc => "edc",
            DcType::Cdc => "cdc",
            DcType::Ccp => "ccp",
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ServerNode {
    pub id: NodeId,
    pub dc_id: DcId,
    pub cpu_cap: u64,
    pub ram_cap: u64,
    #[serde(default)]
    pub cpu_used: u64,
    #[serde(default)]
    pub ram_used: u64,
    pub cpu_weight: u64,
    pub ram_weight: u64,
}

impl ServerNode {
    pub fn cpu_residual(&self) -> u64 {
        self.cpu_cap - self.cpu_used
    }

    pub fn ram_residual(&self) -> u64 {
        self.ram_cap - self.ram_used
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct SwitchNode {
    pub id: NodeId,
    #[serde(default)]
    pub dc_id: Option<DcId>,
    #[serde(default)]
    pub is_access: bool,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct PhysicalLink {
    pub a: NodeId,
    pub b: NodeId,
    pub bw_cap: u64,
    #[serde(default)]
    pub bw_used: u64,
    pub latency: u64,
}

impl PhysicalLink {
    pub fn bw_residual(&self) -> u64 {
        self.bw_cap - self.bw_used
    }

    pub fn other(&self, end: NodeId) -> NodeId {
        if end == self.a {
            self.b
        } else {
            self.a
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct DataCenter {
    pub id: DcId,
    pub kind: DcType,
    /// Aggregation switch of the DC, if any.
    #[serde(default)]
    pub switch: Option<NodeId>,
    /// Servers hosted in the DC.
    pub members: Vec<NodeId>,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum NodeKind {
    Server(usize),
    Switch(usize),
}

#[derive(Debug, Error, PartialEq, Eq)]
pub enum PsnError {
    #[error("substrate has no servers")]
    NoServers,
    #[error("substrate has no data centers")]
    NoDataCenters,
    #[error("node ids must be dense 0..{expected}; {id} is out of range or repeated")]
    BadNodeId { id: NodeId, expected: usize },
    #[error("link {0} is a self loop")]
    SelfLoop(LinkId),
    #[error("link {0} duplicates an existing endpoint pair")]
    DuplicateLink(LinkId),
    #[error("link {link} references unknown node {node}")]
    UnknownEndpoint { link: LinkId, node: NodeId },
    #[error("server {0} does not belong to exactly one data center")]
    ServerDcMembership(NodeId),
    #[error("data center {0} is declared twice")]
    DuplicateDc(DcId),
    #[error("{0} references an unknown data center")]
    UnknownDc(NodeId),
    #[error("ledger value out of bounds on {0}")]
    LedgerBounds(String),
    #[error("substrate graph is not connected")]
    Disconnected,
}

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum LedgerError {
    #[error("placement for slice {nspr} is invalid: {violation:?}")]
    Invalid { nspr: NsprId, violation: Violation },
    #[error("{0} is not a server")]
    NotAServer(NodeId),
    #[error("unknown link {0}")]
    UnknownLink(LinkId),
    #[error("insufficient cpu on {0}")]
    Cpu(NodeId),
    #[error("insufficient ram on {0}")]
    Ram(NodeId),
    #[error("insufficient bandwidth on {0}")]
    Bandwidth(LinkId),
    #[error("release would drive usage below zero on {0}")]
    Underflow(String),
    #[error("slice {0} is already committed")]
    AlreadyCommitted(NsprId),
    #[error("slice {0} is not committed")]
    NotCommitted(NsprId),
    #[error("placement for slice {0} differs from the committed one")]
    Mismatch(NsprId),
}

/// Static graph structure derived from the node and link lists.
#[derive(Debug)]
struct Topology {
    kinds: Vec<NodeKind>,
    /// Neighbours sorted by node id.
    adjacency: Vec<Vec<(NodeId, LinkId)>>,
    pairs: HashMap<(NodeId, NodeId), LinkId>,
    tiers: Vec<Option<DcType>>,
    access: Vec<NodeId>,
}

/// Resource deltas applied to the ledger as one unit.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct Reservation {
    /// (server, cpu, ram)
    pub nodes: Vec<(NodeId, u64, u64)>,
    /// (link, bandwidth)
    pub links: Vec<(LinkId, u64)>,
}

impl Reservation {
    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty() && self.links.is_empty()
    }

    fn aggregated(&self) -> (BTreeMap<NodeId, (u64, u64)>, BTreeMap<LinkId, u64>) {
        let mut nodes = BTreeMap::new();
        for &(n, cpu, ram) in &self.nodes {
            let e = nodes.entry(n).or_insert((0u64, 0u64));
            e.0 += cpu;
            e.1 += ram;
        }
        let mut links = BTreeMap::new();
        for &(l, bw) in &self.links {
            *links.entry(l).or_insert(0u64) += bw;
        }
        (nodes, links)
    }
}

#[derive(Clone, Debug)]
struct Commitment {
    placement: Placement,
    reservation: Reservation,
}

/// The substrate graph with its residual ledger.
#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(try_from = "PsnDoc", into = "PsnDoc")]
pub struct Psn {
    servers: Vec<ServerNode>,
    switches: Vec<SwitchNode>,
    links: Vec<PhysicalLink>,
    dcs: Vec<DataCenter>,
    topo: Arc<Topology>,
    commitments: BTreeMap<NsprId, Commitment>,
}

/// Wire form of a [`Psn`].
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct PsnDoc {
    pub servers: Vec<ServerNode>,
    pub switches: Vec<SwitchNode>,
    pub links: Vec<PhysicalLink>,
    #[serde(default)]
    pub dcs: Vec<DataCenter>,
}

impl TryFrom<PsnDoc> for Psn {
    type Error = PsnError;

    fn try_from(doc: PsnDoc) -> Result<Self, Self::Error> {
        Psn::new(doc.servers, doc.switches, doc.links, doc.dcs)
    }
}

impl From<Psn> for PsnDoc {
    fn from(psn: Psn) -> Self {
        PsnDoc {
            servers: psn.servers,
            switches: psn.switches,
            links: psn.links,
            dcs: psn.dcs,
        }
    }
}

impl Psn {
    pub fn new(
        servers: Vec<ServerNode>,
        switches: Vec<SwitchNode>,
        links: Vec<PhysicalLink>,
        dcs: Vec<DataCenter>,
    ) -> Result<Self, PsnError> {
        if servers.is_empty() {
            return Err(PsnError::NoServers);
        }
        if dcs.is_empty() {
            return Err(PsnError::NoDataCenters);
        }
        let n = servers.len() + switches.len();
        let mut kinds: Vec<Option<NodeKind>> = vec![None; n];
        let ids = servers
            .iter()
            .enumerate()
            .map(|(i, s)| (s.id, NodeKind::Server(i)))
            .chain(switches.iter().enumerate().map(|(i, s)| (s.id, NodeKind::Switch(i))));
        for (id, kind) in ids {
            match kinds.get_mut(id.index()) {
                Some(slot @ None) => *slot = Some(kind),
                _ => return Err(PsnError::BadNodeId { id, expected: n }),
            }
        }
        let kinds: Vec<NodeKind> = kinds.into_iter().map(|k| k.expect("dense ids")).collect();

        let mut dc_kind = HashMap::new();
        for dc in &dcs {
            if dc_kind.insert(dc.id, dc.kind).is_some() {
                return Err(PsnError::DuplicateDc(dc.id));
            }
        }
        let mut membership = vec![0usize; n];
        for dc in &dcs {
            for &m in &dc.members {
                match kinds.get(m.index()) {
                    Some(NodeKind::Server(i)) if servers[*i].dc_id == dc.id => {
                        membership[m.index()] += 1
                    }
                    _ => return Err(PsnError::ServerDcMembership(m)),
                }
            }
        }
        let mut tiers = vec![None; n];
        for s in &servers {
            if membership[s.id.index()] != 1 {
                return Err(PsnError::ServerDcMembership(s.id));
            }
            if s.cpu_used > s.cpu_cap || s.ram_used > s.ram_cap {
                return Err(PsnError::LedgerBounds(s.id.to_string()));
            }
            tiers[s.id.index()] = Some(dc_kind[&s.dc_id]);
        }
        for sw in &switches {
            if let Some(dc) = sw.dc_id {
                let kind = dc_kind.get(&dc).ok_or(PsnError::UnknownDc(sw.id))?;
                tiers[sw.id.index()] = Some(*kind);
            }
        }

        let mut adjacency = vec![Vec::new(); n];
        let mut pairs = HashMap::with_capacity(links.len());
        for (i, link) in links.iter().enumerate() {
            let id = LinkId(i as u32);
            for end in [link.a, link.b] {
                if end.index() >= n {
                    return Err(PsnError::UnknownEndpoint { link: id, node: end });
                }
            }
            if link.a == link.b {
                return Err(PsnError::SelfLoop(id));
            }
            if link.bw_used > link.bw_cap {
                return Err(PsnError::LedgerBounds(id.to_string()));
            }
            if pairs.insert(ordered(link.a, link.b), id).is_some() {
                return Err(PsnError::DuplicateLink(id));
            }
            adjacency[link.a.index()].push((link.b, id));
            adjacency[link.b.index()].push((link.a, id));
        }
        for adj in &mut adjacency {
            adj.sort_unstable();
        }

        // connectivity by BFS from node 0
        let mut seen = vec![false; n];
        let mut queue = VecDeque::from([0usize]);
        seen[0] = true;
        while let Some(u) = queue.pop_front() {
            for &(v, _) in &adjacency[u] {
                if !seen[v.index()] {
                    seen[v.index()] = true;
                    queue.push_back(v.index());
                }
            }
        }
        if seen.iter().any(|s| !s) {
            return Err(PsnError::Disconnected);
        }

        let mut access: Vec<NodeId> =
            switches.iter().filter(|s| s.is_access).map(|s| s.id).collect();
        access.sort_unstable();

        Ok(Psn {
            servers,
            switches,
            links,
            dcs,
            topo: Arc::new(Topology {
                kinds,
                adjacency,
                pairs,
                tiers,
                access,
            }),
            commitments: BTreeMap::new(),
        })
    }

    pub fn node_count(&self) -> usize {
        self.topo.kinds.len()
    }

    pub fn servers(&self) -> &[ServerNode] {
        &self.servers
    }

    pub fn switches(&self) -> &[SwitchNode] {
        &self.switches
    }

    pub fn links(&self) -> &[PhysicalLink] {
        &self.links
    }

    pub fn dcs(&self) -> &[DataCenter] {
        &self.dcs
    }

    pub fn contains(&self, node: NodeId) -> bool {
        node.index() < self.node_count()
    }

    pub fn kind(&self, node: NodeId) -> Option<NodeKind> {
        self.topo.kinds.get(node.index()).copied()
    }

    pub fn server(&self, node: NodeId) -> Option<&ServerNode> {
        match self.kind(node)? {
            NodeKind::Server(i) => Some(&self.servers[i]),
            NodeKind::Switch(_) => None,
        }
    }

    fn server_mut(&mut self, node: NodeId) -> Option<&mut ServerNode> {
        match self.kind(node)? {
            NodeKind::Server(i) => Some(&mut self.servers[i]),
            NodeKind::Switch(_) => None,
        }
    }

    pub fn link(&self, id: LinkId) -> Option<&PhysicalLink> {
        self.links.get(id.index())
    }

    pub fn link_between(&self, a: NodeId, b: NodeId) -> Option<LinkId> {
        self.topo.pairs.get(&ordered(a, b)).copied()
    }

    /// Neighbours of `node` in ascending id order.
    pub fn neighbors(&self, node: NodeId) -> &[(NodeId, LinkId)] {
        &self.topo.adjacency[node.index()]
    }

    /// Tier of the data center a node belongs to; `None` for transit switches.
    pub fn tier(&self, node: NodeId) -> Option<DcType> {
        self.topo.tiers.get(node.index()).copied().flatten()
    }

    /// Switches flagged as user attachment points, ascending.
    pub fn access_nodes(&self) -> &[NodeId] {
        &self.topo.access
    }

    pub fn dc_count(&self, kind: DcType) -> usize {
        self.dcs.iter().filter(|d| d.kind == kind).count()
    }

    /// True when both PSNs have the same static structure (same nodes,
    /// links and capacities), regardless of the ledger state.
    pub fn same_structure(&self, other: &Psn) -> bool {
        let strip_s = |s: &ServerNode| (s.id, s.dc_id, s.cpu_cap, s.ram_cap, s.cpu_weight, s.ram_weight);
        let strip_l = |l: &PhysicalLink| (l.a, l.b, l.bw_cap, l.latency);
        self.servers.iter().map(strip_s).eq(other.servers.iter().map(strip_s))
            && self.switches == other.switches
            && self.links.iter().map(strip_l).eq(other.links.iter().map(strip_l))
            && self.dcs == other.dcs
    }

    /// Used amounts as a flat vector: per server (cpu, ram) then per link bw.
    pub fn usage_snapshot(&self) -> Vec<u64> {
        self.servers
            .iter()
            .flat_map(|s| [s.cpu_used, s.ram_used])
            .chain(self.links.iter().map(|l| l.bw_used))
            .collect()
    }

    pub fn is_idle(&self) -> bool {
        self.usage_snapshot().iter().all(|&u| u == 0)
    }

    /// Checks `0 <= used <= cap` everywhere.
    pub fn check_bounds(&self) -> Result<(), String> {
        for s in &self.servers {
            if s.cpu_used > s.cpu_cap || s.ram_used > s.ram_cap {
                return Err(format!("server {} out of bounds: {:?}", s.id, s));
            }
        }
        for (i, l) in self.links.iter().enumerate() {
            if l.bw_used > l.bw_cap {
                return Err(format!("link l{} out of bounds: {:?}", i, l));
            }
        }
        Ok(())
    }

    /// Applies a reservation atomically: either every delta fits or nothing
    /// changes.
    pub fn reserve(&mut self, r: &Reservation) -> Result<(), LedgerError> {
        let (nodes, links) = r.aggregated();
        for (&n, &(cpu, ram)) in &nodes {
            let s = self.server(n).ok_or(LedgerError::NotAServer(n))?;
            if cpu > s.cpu_residual() {
                return Err(LedgerError::Cpu(n));
            }
            if ram > s.ram_residual() {
                return Err(LedgerError::Ram(n));
            }
        }
        for (&l, &bw) in &links {
            let link = self.link(l).ok_or(LedgerError::UnknownLink(l))?;
            if bw > link.bw_residual() {
                return Err(LedgerError::Bandwidth(l));
            }
        }
        for (n, (cpu, ram)) in nodes {
            let s = self.server_mut(n).expect("checked above");
            s.cpu_used += cpu;
            s.ram_used += ram;
        }
        for (l, bw) in links {
            self.links[l.index()].bw_used += bw;
        }
        Ok(())
    }

    /// Exact inverse of [`Psn::reserve`].
    pub fn unreserve(&mut self, r: &Reservation) -> Result<(), LedgerError> {
        let (nodes, links) = r.aggregated();
        for (&n, &(cpu, ram)) in &nodes {
            let s = self.server(n).ok_or(LedgerError::NotAServer(n))?;
            if cpu > s.cpu_used || ram > s.ram_used {
                return Err(LedgerError::Underflow(n.to_string()));
            }
        }
        for (&l, &bw) in &links {
            let link = self.link(l).ok_or(LedgerError::UnknownLink(l))?;
            if bw > link.bw_used {
                return Err(LedgerError::Underflow(l.to_string()));
            }
        }
        for (n, (cpu, ram)) in nodes {
            let s = self.server_mut(n).expect("checked above");
            s.cpu_used -= cpu;
            s.ram_used -= ram;
        }
        for (l, bw) in links {
            self.links[l.index()].bw_used -= bw;
        }
        Ok(())
    }

    /// Validates `placement` against current residuals and, if it passes,
    /// charges its resources to the ledger.
    pub fn commit(&mut self, nspr: &Nspr, placement: &Placement) -> Result<(), LedgerError> {
        if self.commitments.contains_key(&placement.nspr_id) {
            return Err(LedgerError::AlreadyCommitted(placement.nspr_id));
        }
        if let Some(violation) = validate_placement(self, nspr, placement).into_iter().next() {
            return Err(LedgerError::Invalid {
                nspr: placement.nspr_id,
                violation,
            });
        }
        let reservation = placement
            .reservation(self, nspr)
            .expect("validated placement has a reservation");
        self.reserve(&reservation)?;
        self.commitments.insert(
            placement.nspr_id,
            Commitment {
                placement: placement.clone(),
                reservation,
            },
        );
        Ok(())
    }

    /// Returns the resources of a previously committed placement.
    pub fn release(&mut self, placement: &Placement) -> Result<(), LedgerError> {
        let c = self
            .commitments
            .get(&placement.nspr_id)
            .ok_or(LedgerError::NotCommitted(placement.nspr_id))?;
        if c.placement != *placement {
            return Err(LedgerError::Mismatch(placement.nspr_id));
        }
        let c = self.commitments.remove(&placement.nspr_id).expect("present");
        self.unreserve(&c.reservation)
    }

    pub fn is_committed(&self, id: NsprId) -> bool {
        self.commitments.contains_key(&id)
    }

    pub fn committed_count(&self) -> usize {
        self.commitments.len()
    }

    /// Returns a copy with an empty ledger.
    pub fn fresh(&self) -> Psn {
        let mut psn = self.clone();
        for s in &mut psn.servers {
            s.cpu_used = 0;
            s.ram_used = 0;
        }
        for l in &mut psn.links {
            l.bw_used = 0;
        }
        psn.commitments.clear();
        psn
    }
}

/// Stack of reservations applied to a borrowed substrate during a search.
/// Everything still on the stack is rolled back on drop, so the substrate
/// leaves the search exactly as it entered.
#[derive(Debug)]
pub struct Tentative<'a> {
    psn: &'a mut Psn,
    stack: Vec<Reservation>,
}

impl<'a> Tentative<'a> {
    pub fn new(psn: &'a mut Psn) -> Self {
        Tentative {
            psn,
            stack: Vec::new(),
        }
    }

    pub fn psn(&self) -> &Psn {
        self.psn
    }

    pub fn depth(&self) -> usize {
        self.stack.len()
    }

    pub fn push(&mut self, r: Reservation) -> Result<(), LedgerError> {
        self.psn.reserve(&r)?;
        self.stack.push(r);
        Ok(())
    }

    pub fn pop(&mut self) {
        if let Some(r) = self.stack.pop() {
            self.psn
                .unreserve(&r)
                .expect("tentative reservations are reversible");
        }
    }
}

impl Drop for Tentative<'_> {
    fn drop(&mut self) {
        while !self.stack.is_empty() {
            self.pop();
        }
    }
}

fn ordered(a: NodeId, b: NodeId) -> (NodeId, NodeId) {
    if a <= b {
        (a, b)
    } else {
        (b, a)
    }
}

/// Incremental builder, mostly for hand-made substrates in tests and
/// examples. Ids are assigned densely in insertion order.
#[derive(Debug, Default)]
pub struct PsnBuilder {
    servers: Vec<ServerNode>,
    switches: Vec<SwitchNode>,
    links: Vec<PhysicalLink>,
    dcs: Vec<DataCenter>,
    next: u32,
}

impl PsnBuilder {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn dc(&mut self, kind: DcType) -> DcId {
        let id = DcId(self.dcs.len() as u32);
        self.dcs.push(DataCenter {
            id,
            kind,
            switch: None,
            members: Vec::new(),
        });
        id
    }

    pub fn server(&mut self, dc: DcId, cpu: u64, ram: u64, cpu_weight: u64, ram_weight: u64) -> NodeId {
        let id = NodeId(self.next);
        self.next += 1;
        self.servers.push(ServerNode {
            id,
            dc_id: dc,
            cpu_cap: cpu,
            ram_cap: ram,
            cpu_used: 0,
            ram_used: 0,
            cpu_weight,
            ram_weight,
        });
        self.dcs[dc.0 as usize].members.push(id);
        id
    }

    pub fn switch(&mut self, dc: Option<DcId>, is_access: bool) -> NodeId {
        let id = NodeId(self.next);
        self.next += 1;
        self.switches.push(SwitchNode {
            id,
            dc_id: dc,
            is_access,
        });
        if let Some(dc) = dc {
            let slot = &mut self.dcs[dc.0 as usize].switch;
            if slot.is_none() {
                *slot = Some(id);
            }
        }
        id
    }

    pub fn link(&mut self, a: NodeId, b: NodeId, bw: u64, latency: u64) -> LinkId {
        let id = LinkId(self.links.len() as u32);
        self.links.push(PhysicalLink {
            a,
            b,
            bw_cap: bw,
            bw_used: 0,
            latency,
        });
        id
    }

    pub fn has_link(&self, a: NodeId, b: NodeId) -> bool {
        self.links
            .iter()
            .any(|l| (l.a == a && l.b == b) || (l.a == b && l.b == a))
    }

    pub fn build(self) -> Result<Psn, PsnError> {
        Psn::new(self.servers, self.switches, self.links, self.dcs)
    }
}
