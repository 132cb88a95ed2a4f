//! Bandwidth- and latency-constrained pathfinding.

use std::cmp::Reverse;
use std::collections::BinaryHeap;

use crate::psn::{NodeId, Psn};

const UNREACHED: u64 = u64::MAX;

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct PathResult {
    /// Node sequence from source to destination; empty when they coincide.
    pub path: Vec<NodeId>,
    pub latency: u64,
    pub hops: usize,
}

/// Minimum exact-`h`-hop latencies from `origin`, one layer per hop count,
/// over links with at least `bw_req` residual bandwidth. Stops once a layer
/// reaches `target` within `lat_bound`, or no label survives.
///
/// With a target, a label is dropped unless it beats every earlier layer at
/// its node: extending the earlier label instead would reach the target in
/// fewer hops, so the first layer that reaches it is unchanged. Without a
/// target the layers are exact.
fn hop_layers(
    psn: &Psn,
    origin: NodeId,
    bw_req: u64,
    lat_bound: u64,
    max_hops: usize,
    target: Option<NodeId>,
) -> Vec<Vec<u64>> {
    let n = psn.node_count();
    let mut first = vec![UNREACHED; n];
    first[origin.index()] = 0;
    let mut best = first.clone();
    let mut layers = vec![first];
    while layers.len() <= max_hops {
        let prev = layers.last().expect("non-empty");
        if let Some(t) = target {
            if layers.len() > 1 && prev[t.index()] != UNREACHED {
                break;
            }
        }
        let mut next = vec![UNREACHED; n];
        let mut alive = false;
        for (u, &d) in prev.iter().enumerate() {
            if d == UNREACHED {
                continue;
            }
            for &(v, l) in psn.neighbors(NodeId(u as u32)) {
                let link = &psn.links()[l.index()];
                if link.bw_residual() < bw_req {
                    continue;
                }
                let cand = d + link.latency;
                if cand <= lat_bound && cand < next[v.index()] {
                    next[v.index()] = cand;
                    alive = true;
                }
            }
        }
        if target.is_some() && alive {
            alive = false;
            for (label, b) in next.iter_mut().zip(best.iter_mut()) {
                if *label < *b {
                    *b = *label;
                    alive = true;
                } else {
                    *label = UNREACHED;
                }
            }
        }
        if !alive {
            break;
        }
        layers.push(next);
    }
    layers
}

/// Among simple paths from `src` to `dst` whose links all have residual
/// bandwidth `>= bw_req` and whose total latency is `<= lat_bound`, returns
/// one with the fewest hops, then the lowest latency, then the
/// lexicographically smallest node sequence.
///
/// Runs a hop-layered label search: layer `h` holds the best latency of any
/// `h`-hop walk. At the first layer where `dst` is within the bound, every
/// optimal walk is simple (a repeated node could be cut out, giving a
/// feasible walk with fewer hops), and a backward layer table lets the
/// lexicographically smallest optimum be read off greedily.
pub fn constrained_shortest_path(
    psn: &Psn,
    src: NodeId,
    dst: NodeId,
    bw_req: u64,
    lat_bound: u64,
) -> Option<PathResult> {
    if src == dst {
        return Some(PathResult {
            path: Vec::new(),
            latency: 0,
            hops: 0,
        });
    }
    let max_hops = psn.node_count().saturating_sub(1);
    let forward = hop_layers(psn, src, bw_req, lat_bound, max_hops, Some(dst));
    let hops = forward.len() - 1;
    let latency = forward[hops][dst.index()];
    if hops == 0 || latency == UNREACHED {
        return None;
    }
    let backward = hop_layers(psn, dst, bw_req, latency, hops, None);

    let mut path = Vec::with_capacity(hops + 1);
    path.push(src);
    let mut cur = src;
    let mut acc = 0u64;
    for step in 0..hops {
        let left = hops - step - 1;
        let (next, lat) = psn
            .neighbors(cur)
            .iter()
            .find_map(|&(v, l)| {
                let link = &psn.links()[l.index()];
                if link.bw_residual() < bw_req {
                    return None;
                }
                let rest = backward.get(left)?[v.index()];
                (rest != UNREACHED && acc + link.latency + rest == latency)
                    .then_some((v, link.latency))
            })
            .expect("backward table admits a completion");
        acc += lat;
        cur = next;
        path.push(next);
    }
    debug_assert_eq!(cur, dst);
    debug_assert_eq!(acc, latency);
    Some(PathResult {
        path,
        latency,
        hops,
    })
}

/// All simple paths from `src` with at most `max_hops` hops and latency at
/// most `lat_bound`, ignoring bandwidth. Each entry is `(path, latency)`;
/// the trivial path `[src]` is not included.
pub fn simple_paths_from(
    psn: &Psn,
    src: NodeId,
    max_hops: usize,
    lat_bound: u64,
) -> Vec<(Vec<NodeId>, u64)> {
    fn walk(
        psn: &Psn,
        stack: &mut Vec<NodeId>,
        on_path: &mut [bool],
        latency: u64,
        max_hops: usize,
        lat_bound: u64,
        out: &mut Vec<(Vec<NodeId>, u64)>,
    ) {
        if stack.len() > max_hops {
            return;
        }
        let cur = *stack.last().expect("non-empty");
        for &(v, l) in psn.neighbors(cur) {
            let lat = latency + psn.links()[l.index()].latency;
            if on_path[v.index()] || lat > lat_bound {
                continue;
            }
            stack.push(v);
            on_path[v.index()] = true;
            out.push((stack.clone(), lat));
            walk(psn, stack, on_path, lat, max_hops, lat_bound, out);
            on_path[v.index()] = false;
            stack.pop();
        }
    }
    let mut out = Vec::new();
    let mut on_path = vec![false; psn.node_count()];
    on_path[src.index()] = true;
    walk(psn, &mut vec![src], &mut on_path, 0, max_hops, lat_bound, &mut out);
    out
}

/// All-pairs minimum path latency over static link latencies. Load does not
/// change it, so one table serves a whole simulation.
#[derive(Clone, Debug)]
pub struct MinLatencyTable {
    n: usize,
    dist: Vec<u64>,
}

impl MinLatencyTable {
    pub fn new(psn: &Psn) -> Self {
        let n = psn.node_count();
        let mut dist = vec![UNREACHED; n * n];
        for s in 0..n {
            let row = &mut dist[s * n..(s + 1) * n];
            row[s] = 0;
            let mut heap = BinaryHeap::from([Reverse((0u64, s))]);
            while let Some(Reverse((d, u))) = heap.pop() {
                if d > row[u] {
                    continue;
                }
                for &(v, l) in psn.neighbors(NodeId(u as u32)) {
                    let nd = d + psn.links()[l.index()].latency;
                    if nd < row[v.index()] {
                        row[v.index()] = nd;
                        heap.push(Reverse((nd, v.index())));
                    }
                }
            }
        }
        MinLatencyTable { n, dist }
    }

    pub fn get(&self, a: NodeId, b: NodeId) -> Option<u64> {
        let d = self.dist[a.index() * self.n + b.index()];
        (d != UNREACHED).then_some(d)
    }
}
