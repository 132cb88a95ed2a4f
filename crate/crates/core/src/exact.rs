//! Exact placement by depth-first branch-and-bound.
//!
//! VNFs are placed in chain order; for each one the search tries servers by
//! ascending id and, per server, every feasible simple path from the anchor
//! in ascending incremental cost. A branch is cut once its cost plus an
//! admissible bound on the remaining VNFs cannot beat the incumbent. Among
//! equal-cost optima the lexicographically smallest (host vector, path
//! sequence) wins.

use std::cmp::Ordering;
use std::collections::HashMap;
use std::time::{Duration, Instant};

use serde::{Deserialize, Serialize};

use crate::path::simple_paths_from;
use crate::placement::{ensure_valid, node_cost, placement_cost, Cost, Placement, SolveError};
use crate::psn::{NodeId, Psn, Reservation, Tentative};
use crate::slice::Nspr;

#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExactConfig {
    /// Maximum hops per virtual-link path; `None` is unbounded.
    pub hop_bound: Option<usize>,
    /// Wall-clock cutoff in milliseconds.
    pub time_budget_ms: Option<u64>,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ExactOutcome {
    pub placement: Option<Placement>,
    pub cost: Option<Cost>,
    /// The time budget ran out; `placement` is the incumbent, possibly
    /// suboptimal.
    pub exhausted: bool,
    /// Search nodes expanded.
    pub explored: u64,
}

struct Candidate {
    path: Vec<NodeId>,
    latency: u64,
    hops: usize,
}

struct Incumbent {
    total: u64,
    hosts: Vec<NodeId>,
    paths: Vec<Vec<NodeId>>,
}

struct Search<'a, 'p> {
    ledger: Tentative<'p>,
    nspr: &'a Nspr,
    servers: Vec<NodeId>,
    max_hops: usize,
    path_bound: u64,
    /// anchor -> endpoint -> candidate paths sorted by (hops, nodes)
    paths: HashMap<NodeId, HashMap<NodeId, Vec<Candidate>>>,
    /// `remaining_lb[k]` bounds the node cost of VNFs `k..` from below.
    remaining_lb: Vec<u64>,
    hosts: Vec<NodeId>,
    chosen: Vec<Vec<NodeId>>,
    best: Option<Incumbent>,
    deadline: Option<Instant>,
    exhausted: bool,
    explored: u64,
}

/// Minimum-cost placement of `nspr` on the current residuals, or `None`
/// when no placement within the hop bound exists. `psn` is borrowed for
/// tentative reservations and handed back unchanged.
pub fn solve_exact(psn: &mut Psn, nspr: &Nspr, cfg: &ExactConfig) -> Result<ExactOutcome, SolveError> {
    nspr.validate()?;
    let servers: Vec<NodeId> = {
        let mut s: Vec<NodeId> = psn.servers().iter().map(|s| s.id).collect();
        s.sort_unstable();
        s
    };
    let mut remaining_lb = vec![0u64; nspr.len() + 1];
    for (k, v) in nspr.vnfs.iter().enumerate().rev() {
        let cheapest = servers
            .iter()
            .map(|&s| node_cost(psn, s, v.cpu_req, v.ram_req))
            .min()
            .unwrap_or(0);
        remaining_lb[k] = remaining_lb[k + 1] + cheapest;
    }
    let path_bound = nspr
        .vlinks
        .iter()
        .map(|l| l.lat_req)
        .max()
        .unwrap_or(0)
        .min(nspr.e2e_latency);
    let max_hops = cfg
        .hop_bound
        .unwrap_or(usize::MAX)
        .min(psn.node_count().saturating_sub(1));

    let start = Instant::now();
    let (best, exhausted, explored) = {
        let mut search = Search {
            ledger: Tentative::new(psn),
            nspr,
            servers,
            max_hops,
            path_bound,
            paths: HashMap::new(),
            remaining_lb,
            hosts: Vec::with_capacity(nspr.len()),
            chosen: Vec::with_capacity(nspr.len()),
            best: None,
            deadline: cfg.time_budget_ms.map(|ms| start + Duration::from_millis(ms)),
            exhausted: false,
            explored: 0,
        };
        search.descend(0, 0, 0);
        (search.best, search.exhausted, search.explored)
    };

    let placement = best.map(|b| Placement::new(nspr.id, &b.hosts, b.paths));
    if let Some(p) = &placement {
        ensure_valid(psn, nspr, p)?;
    }
    let cost = placement.as_ref().map(|p| placement_cost(psn, nspr, p));
    Ok(ExactOutcome {
        placement,
        cost,
        exhausted,
        explored,
    })
}

impl Search<'_, '_> {
    fn out_of_time(&mut self) -> bool {
        if self.exhausted {
            return true;
        }
        if let Some(deadline) = self.deadline {
            if self.explored % 256 == 1 && Instant::now() >= deadline {
                self.exhausted = true;
            }
        }
        self.exhausted
    }

    /// Whether a partial solution whose cost plus the lower bound on the
    /// remaining VNFs is `bound` can still beat or tie the incumbent.
    fn promising(&self, bound: u64) -> bool {
        let Some(best) = &self.best else {
            return true;
        };
        match bound.cmp(&best.total) {
            Ordering::Less => true,
            Ordering::Greater => false,
            Ordering::Equal => {
                let k = self.hosts.len();
                match self.hosts[..].cmp(&best.hosts[..k]) {
                    Ordering::Less => true,
                    Ordering::Greater => false,
                    Ordering::Equal => self.chosen[..] <= best.paths[..k],
                }
            }
        }
    }

    fn record(&mut self, total: u64) {
        let better = match &self.best {
            None => true,
            Some(best) => {
                (total, &self.hosts, &self.chosen) < (best.total, &best.hosts, &best.paths)
            }
        };
        if better {
            self.best = Some(Incumbent {
                total,
                hosts: self.hosts.clone(),
                paths: self.chosen.clone(),
            });
        }
    }

    fn ensure_paths(&mut self, anchor: NodeId) {
        if self.paths.contains_key(&anchor) {
            return;
        }
        let psn = self.ledger.psn();
        let mut by_end: HashMap<NodeId, Vec<Candidate>> = HashMap::new();
        for (path, latency) in simple_paths_from(psn, anchor, self.max_hops, self.path_bound) {
            let end = *path.last().expect("non-trivial path");
            if psn.server(end).is_none() {
                continue;
            }
            let hops = path.len() - 1;
            by_end.entry(end).or_default().push(Candidate { path, latency, hops });
        }
        for list in by_end.values_mut() {
            list.sort_by(|a, b| (a.hops, &a.path).cmp(&(b.hops, &b.path)));
        }
        self.paths.insert(anchor, by_end);
    }

    fn descend(&mut self, k: usize, cost: u64, e2e_used: u64) {
        if k == self.nspr.len() {
            self.record(cost);
            return;
        }
        self.explored += 1;
        if self.out_of_time() {
            return;
        }
        let vnf = self.nspr.vnfs[k];
        let vlink = self.nspr.vlinks[k];
        let anchor = if k == 0 { self.nspr.access_node } else { self.hosts[k - 1] };
        let budget = vlink.lat_req.min(self.nspr.e2e_latency - e2e_used);
        self.ensure_paths(anchor);

        for si in 0..self.servers.len() {
            let server = self.servers[si];
            let (fits, node_term) = {
                let psn = self.ledger.psn();
                let s = psn.server(server).expect("server id");
                (
                    s.cpu_residual() >= vnf.cpu_req && s.ram_residual() >= vnf.ram_req,
                    node_cost(psn, server, vnf.cpu_req, vnf.ram_req),
                )
            };
            if !fits {
                continue;
            }
            let options: Vec<(Vec<NodeId>, u64, usize)> = if server == anchor {
                vec![(Vec::new(), 0, 0)]
            } else {
                let psn = self.ledger.psn();
                self.paths[&anchor]
                    .get(&server)
                    .map(|list| {
                        list.iter()
                            .filter(|c| c.latency <= budget)
                            .filter(|c| {
                                c.path.windows(2).all(|w| {
                                    let l = psn.link_between(w[0], w[1]).expect("path link");
                                    psn.links()[l.index()].bw_residual() >= vlink.bw_req
                                })
                            })
                            .map(|c| (c.path.clone(), c.latency, c.hops))
                            .collect()
                    })
                    .unwrap_or_default()
            };

            for (path, latency, hops) in options {
                let next_cost = cost + node_term + vlink.bw_req * hops as u64;
                self.hosts.push(server);
                self.chosen.push(path);
                if self.promising(next_cost + self.remaining_lb[k + 1]) {
                    let reservation = reservation_for(self.ledger.psn(), server, &vnf, &vlink, self.chosen.last().expect("pushed"));
                    if self.ledger.push(reservation).is_ok() {
                        self.descend(k + 1, next_cost, e2e_used + latency);
                        self.ledger.pop();
                    }
                }
                self.chosen.pop();
                self.hosts.pop();
                if self.exhausted {
                    return;
                }
            }
        }
    }
}

fn reservation_for(
    psn: &Psn,
    server: NodeId,
    vnf: &crate::slice::Vnf,
    vlink: &crate::slice::VirtualLink,
    path: &[NodeId],
) -> Reservation {
    Reservation {
        nodes: vec![(server, vnf.cpu_req, vnf.ram_req)],
        links: path
            .windows(2)
            .map(|w| (psn.link_between(w[0], w[1]).expect("path link"), vlink.bw_req))
            .collect(),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fixtures::{fixture_d4, nspr_x, N1, N2};
    use crate::psn::{DcType, PsnBuilder};
    use crate::slice::NsprId;

    #[test]
    fn oversized_vnf_rejected() {
        let mut psn = fixture_d4();
        let nspr = Nspr::chain(NsprId(1), N1, &[(9, 1)], &[(1, 100)], 100);
        let out = solve_exact(&mut psn, &nspr, &ExactConfig::default()).unwrap();
        assert_eq!(out.placement, None);
        assert!(!out.exhausted);
    }

    #[test]
    fn fixture_optimum_colocates_on_anchor() {
        let mut psn = fixture_d4();
        let before = psn.usage_snapshot();
        let nspr = nspr_x();
        let out = solve_exact(&mut psn, &nspr, &ExactConfig::default()).unwrap();
        let p = out.placement.unwrap();
        assert_eq!(p.hosts(), vec![N1, N1]);
        assert_eq!(p.paths(), vec![Vec::<NodeId>::new(), vec![]]);
        assert_eq!(out.cost.unwrap().total(), 8);
        assert_eq!(psn.usage_snapshot(), before);
    }

    #[test]
    fn fixture_with_half_full_anchor_moves_both() {
        let mut psn = fixture_d4();
        psn.reserve(&Reservation {
            nodes: vec![(N1, 2, 2)],
            links: vec![],
        })
        .unwrap();
        let nspr = nspr_x();
        let out = solve_exact(&mut psn, &nspr, &ExactConfig::default()).unwrap();
        let p = out.placement.unwrap();
        // [n1, n2] costs 8 + 4 (bw 4 over one hop); moving both to n2
        // pays only the access leg: 8 + 1
        assert_eq!(p.hosts(), vec![N2, N2]);
        assert_eq!(p.paths(), vec![vec![N1, N2], vec![]]);
        assert_eq!(out.cost.unwrap().total(), 9);
    }

    #[test]
    fn symmetric_hosts_pick_smaller_ids() {
        let mut b = PsnBuilder::new();
        let dc = b.dc(DcType::Edc);
        let sw = b.switch(Some(dc), true);
        let s1 = b.server(dc, 4, 4, 1, 1);
        let s2 = b.server(dc, 4, 4, 1, 1);
        b.link(sw, s1, 10, 1);
        b.link(sw, s2, 10, 1);
        let mut psn = b.build().unwrap();
        let nspr = Nspr::chain(NsprId(1), sw, &[(3, 3), (3, 3)], &[(1, 10), (1, 10)], 20);
        let out = solve_exact(&mut psn, &nspr, &ExactConfig::default()).unwrap();
        let p = out.placement.unwrap();
        assert_eq!(p.hosts(), vec![s1, s2]);
    }

    #[test]
    fn hop_bound_limits_reach() {
        let mut psn = fixture_d4();
        let nspr = Nspr::chain(NsprId(1), N1, &[(8, 8)], &[(1, 100)], 100);
        let out = solve_exact(&mut psn, &nspr, &ExactConfig::default()).unwrap();
        assert_eq!(out.placement.unwrap().paths()[0], vec![N1, N2, NodeId(3)]);
        let bounded = ExactConfig {
            hop_bound: Some(1),
            ..ExactConfig::default()
        };
        assert_eq!(solve_exact(&mut psn, &nspr, &bounded).unwrap().placement, None);
    }

    #[test]
    fn zero_budget_reports_exhaustion() {
        let mut psn = crate::topology::build_psn(&crate::topology::PsnConfig::desk()).unwrap();
        let access = psn.access_nodes()[0];
        let nspr = Nspr::chain(
            NsprId(1),
            access,
            &[(1, 1); 5],
            &[(1, 100_000); 5],
            1_000_000,
        );
        let cfg = ExactConfig {
            time_budget_ms: Some(0),
            ..ExactConfig::default()
        };
        let out = solve_exact(&mut psn, &nspr, &cfg).unwrap();
        assert!(out.exhausted);
        assert!(psn.is_idle());
    }
}
