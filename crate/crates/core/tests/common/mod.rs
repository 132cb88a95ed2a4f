//! Random small instances and a brute-force placement enumerator that
//! shares no code with the solvers under test.

#![allow(dead_code)]

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use slicesim::psn::{DcType, NodeId, PsnBuilder, Reservation};
use slicesim::slice::{Nspr, NsprId};
use slicesim::Psn;

/// Plain-data snapshot of a substrate's residual state.
#[derive(Clone, Debug)]
pub struct Snapshot {
    pub nodes: usize,
    /// node -> (cpu_residual, ram_residual, cpu_weight, ram_weight)
    pub server: Vec<Option<(u64, u64, u64, u64)>>,
    /// (a, b, bw_residual, latency)
    pub links: Vec<(usize, usize, u64, u64)>,
}

impl Snapshot {
    pub fn of(psn: &Psn) -> Self {
        let nodes = psn.node_count();
        let mut server = vec![None; nodes];
        for s in psn.servers() {
            server[s.id.0 as usize] = Some((
                s.cpu_cap - s.cpu_used,
                s.ram_cap - s.ram_used,
                s.cpu_weight,
                s.ram_weight,
            ));
        }
        let links = psn
            .links()
            .iter()
            .map(|l| (l.a.0 as usize, l.b.0 as usize, l.bw_cap - l.bw_used, l.latency))
            .collect();
        Snapshot {
            nodes,
            server,
            links,
        }
    }

    fn link_index(&self, a: usize, b: usize) -> Option<usize> {
        self.links
            .iter()
            .position(|&(x, y, _, _)| (x, y) == (a, b) || (x, y) == (b, a))
    }

    /// Every simple path from `a` to `b` (as node lists, `[]` when a == b)
    /// with latency at most `bound`.
    pub fn simple_paths(&self, a: usize, b: usize, bound: u64) -> Vec<Vec<usize>> {
        if a == b {
            return vec![vec![]];
        }
        let mut out = Vec::new();
        let mut stack = vec![a];
        self.dfs(b, bound, 0, &mut stack, &mut out);
        out
    }

    fn dfs(&self, goal: usize, bound: u64, lat: u64, stack: &mut Vec<usize>, out: &mut Vec<Vec<usize>>) {
        let cur = *stack.last().unwrap();
        if cur == goal {
            out.push(stack.clone());
            return;
        }
        for &(x, y, _, l) in &self.links {
            let next = if x == cur {
                y
            } else if y == cur {
                x
            } else {
                continue;
            };
            if stack.contains(&next) || lat + l > bound {
                continue;
            }
            stack.push(next);
            self.dfs(goal, bound, lat + l, stack, out);
            stack.pop();
        }
    }

    pub fn path_latency(&self, path: &[usize]) -> Option<u64> {
        let mut lat = 0;
        for w in path.windows(2) {
            lat += self.links[self.link_index(w[0], w[1])?].3;
        }
        Some(lat)
    }

    /// Independent feasibility check of a full assignment.
    pub fn feasible(&self, nspr: &Nspr, hosts: &[usize], paths: &[Vec<usize>]) -> bool {
        let n = nspr.vnfs.len();
        if hosts.len() != n || paths.len() != n {
            return false;
        }
        let mut cpu = vec![0u64; self.nodes];
        let mut ram = vec![0u64; self.nodes];
        for (v, &h) in nspr.vnfs.iter().zip(hosts) {
            if h >= self.nodes || self.server[h].is_none() {
                return false;
            }
            cpu[h] += v.cpu_req;
            ram[h] += v.ram_req;
        }
        for h in 0..self.nodes {
            if let Some((c, r, _, _)) = self.server[h] {
                if cpu[h] > c || ram[h] > r {
                    return false;
                }
            }
        }
        let mut bw = vec![0u64; self.links.len()];
        let mut e2e = 0;
        for (i, p) in paths.iter().enumerate() {
            let src = if i == 0 {
                nspr.access_node.0 as usize
            } else {
                hosts[i - 1]
            };
            let dst = hosts[i];
            if p.is_empty() {
                if src != dst {
                    return false;
                }
                continue;
            }
            if p[0] != src || *p.last().unwrap() != dst {
                return false;
            }
            let mut seen = std::collections::HashSet::new();
            if !p.iter().all(|x| seen.insert(*x)) {
                return false;
            }
            let mut lat = 0;
            for w in p.windows(2) {
                let Some(k) = self.link_index(w[0], w[1]) else {
                    return false;
                };
                bw[k] += nspr.vlinks[i].bw_req;
                lat += self.links[k].3;
            }
            if lat > nspr.vlinks[i].lat_req {
                return false;
            }
            e2e += lat;
        }
        if e2e > nspr.e2e_latency {
            return false;
        }
        bw.iter().zip(&self.links).all(|(u, l)| *u <= l.2)
    }

    pub fn cost(&self, nspr: &Nspr, hosts: &[usize], paths: &[Vec<usize>]) -> u64 {
        let node: u64 = nspr
            .vnfs
            .iter()
            .zip(hosts)
            .map(|(v, &h)| {
                let (_, _, wc, wr) = self.server[h].unwrap();
                v.cpu_req * wc + v.ram_req * wr
            })
            .sum();
        let link: u64 = paths
            .iter()
            .zip(&nspr.vlinks)
            .map(|(p, vl)| vl.bw_req * p.len().saturating_sub(1) as u64)
            .sum();
        node + link
    }

    /// Minimum cost over every host vector and every combination of simple
    /// paths, or `None` when nothing is feasible.
    pub fn brute_force(&self, nspr: &Nspr) -> Option<u64> {
        let servers: Vec<usize> = (0..self.nodes).filter(|&i| self.server[i].is_some()).collect();
        let n = nspr.vnfs.len();
        let mut best: Option<u64> = None;
        let mut hosts = vec![0usize; n];
        let total = servers.len().pow(n as u32);
        for code in 0..total {
            let mut c = code;
            for h in hosts.iter_mut() {
                *h = servers[c % servers.len()];
                c /= servers.len();
            }
            if !self.hosts_fit(nspr, &hosts) {
                continue;
            }
            let options: Vec<Vec<Vec<usize>>> = (0..n)
                .map(|i| {
                    let src = if i == 0 {
                        nspr.access_node.0 as usize
                    } else {
                        hosts[i - 1]
                    };
                    self.simple_paths(src, hosts[i], nspr.vlinks[i].lat_req)
                })
                .collect();
            let mut chosen = Vec::with_capacity(n);
            self.combine(nspr, &hosts, &options, &mut chosen, &mut best);
        }
        best
    }

    fn hosts_fit(&self, nspr: &Nspr, hosts: &[usize]) -> bool {
        let mut cpu = vec![0u64; self.nodes];
        let mut ram = vec![0u64; self.nodes];
        for (v, &h) in nspr.vnfs.iter().zip(hosts) {
            cpu[h] += v.cpu_req;
            ram[h] += v.ram_req;
        }
        hosts.iter().all(|&h| {
            let (c, r, _, _) = self.server[h].unwrap();
            cpu[h] <= c && ram[h] <= r
        })
    }

    fn combine(
        &self,
        nspr: &Nspr,
        hosts: &[usize],
        options: &[Vec<Vec<usize>>],
        chosen: &mut Vec<Vec<usize>>,
        best: &mut Option<u64>,
    ) {
        let k = chosen.len();
        if k == options.len() {
            if self.feasible(nspr, hosts, chosen) {
                let c = self.cost(nspr, hosts, chosen);
                if best.is_none_or(|b| c < b) {
                    *best = Some(c);
                }
            }
            return;
        }
        for p in &options[k] {
            chosen.push(p.clone());
            self.combine(nspr, hosts, options, chosen, best);
            chosen.pop();
        }
    }
}

pub fn to_usize(path: &[NodeId]) -> Vec<usize> {
    path.iter().map(|n| n.0 as usize).collect()
}

/// A random connected substrate with 2..=8 servers and up to two
/// switches, with some capacity already in use.
pub fn random_psn(rng: &mut ChaCha8Rng) -> Psn {
    let mut b = PsnBuilder::new();
    let kind = [DcType::Edc, DcType::Cdc, DcType::Ccp][rng.random_range(0..3)];
    let dc = b.dc(kind);
    let n_servers = rng.random_range(2..=8);
    let n_switches = rng.random_range(0..=2);
    let mut nodes = Vec::new();
    for _ in 0..n_switches {
        nodes.push(b.switch(Some(dc), true));
    }
    for _ in 0..n_servers {
        let cpu = rng.random_range(1..=8);
        let ram = rng.random_range(1..=8);
        nodes.push(b.server(dc, cpu, ram, rng.random_range(1..=3), rng.random_range(1..=3)));
    }
    // random spanning tree, then a few chords
    for i in 1..nodes.len() {
        let j = rng.random_range(0..i);
        let (bw, lat) = (rng.random_range(2..=20), rng.random_range(1..=10));
        b.link(nodes[i], nodes[j], bw, lat);
    }
    for _ in 0..rng.random_range(0..=3) {
        let i = rng.random_range(0..nodes.len());
        let j = rng.random_range(0..nodes.len());
        if i != j && !b.has_link(nodes[i], nodes[j]) {
            let (bw, lat) = (rng.random_range(2..=20), rng.random_range(1..=10));
            b.link(nodes[i], nodes[j], bw, lat);
        }
    }
    let mut psn = b.build().expect("generated substrate is valid");
    let mut pre = Reservation::default();
    for s in psn.servers() {
        if rng.random_bool(0.3) {
            pre.nodes.push((s.id, rng.random_range(0..=s.cpu_cap / 2), rng.random_range(0..=s.ram_cap / 2)));
        }
    }
    for (i, l) in psn.links().iter().enumerate() {
        if rng.random_bool(0.3) {
            pre.links.push((slicesim::LinkId(i as u32), rng.random_range(0..=l.bw_cap / 2)));
        }
    }
    psn.reserve(&pre).expect("preload fits");
    psn
}

/// A random chain of 1..=`max_vnfs` VNFs anchored at a random node.
pub fn random_nspr(rng: &mut ChaCha8Rng, psn: &Psn, id: u64, max_vnfs: usize) -> Nspr {
    let n = rng.random_range(1..=max_vnfs);
    let demands: Vec<(u64, u64)> = (0..n)
        .map(|_| {
            let cpu = rng.random_range(0..=4);
            let ram = rng.random_range(if cpu == 0 { 1 } else { 0 }..=4);
            (cpu, ram)
        })
        .collect();
    let links: Vec<(u64, u64)> = (0..n)
        .map(|_| (rng.random_range(1..=6), rng.random_range(3..=30)))
        .collect();
    let access = NodeId(rng.random_range(0..psn.node_count()) as u32);
    let e2e = rng.random_range(5..=20 * n as u64);
    Nspr::chain(NsprId(id), access, &demands, &links, e2e)
}

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}
