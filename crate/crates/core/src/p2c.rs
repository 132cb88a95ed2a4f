//! Power-of-two-choices placement.
//!
//! VNFs are placed one at a time along the chain. For each VNF the servers
//! with enough CPU/RAM that are close enough (static min-latency table) to
//! the anchor form the candidate pool; two distinct candidates are sampled
//! uniformly, routed with [`constrained_shortest_path`], and the cheaper
//! one (smaller id on ties) is reserved tentatively before moving on.

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::path::{constrained_shortest_path, MinLatencyTable, PathResult};
use crate::placement::{ensure_valid, node_cost, Placement, SolveError};
use crate::psn::{NodeId, Psn, Reservation, Tentative};
use crate::slice::Nspr;

/// Number of candidates compared per VNF. `One` is the ablation baseline.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Choices {
    One,
    #[default]
    Two,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct P2cConfig {
    pub seed: u64,
    /// Resamples allowed per VNF when a sampled candidate has no feasible path.
    pub resample_attempts: u32,
    /// Times the search may undo the previous VNF's choice on a dead end.
    pub backtrack_budget: u32,
    pub choices: Choices,
}

impl Default for P2cConfig {
    fn default() -> Self {
        P2cConfig {
            seed: 0,
            resample_attempts: 4,
            backtrack_budget: 0,
            choices: Choices::Two,
        }
    }
}

impl P2cConfig {
    pub fn rng(&self) -> ChaCha8Rng {
        ChaCha8Rng::seed_from_u64(self.seed)
    }
}

/// Two distinct indices drawn uniformly from `0..len` (`len >= 2`).
pub fn sample_distinct_pair<R: Rng + ?Sized>(rng: &mut R, len: usize) -> (usize, usize) {
    assert!(len >= 2, "need two candidates");
    let first = rng.random_range(0..len);
    let mut second = rng.random_range(0..len - 1);
    if second >= first {
        second += 1;
    }
    (first, second)
}

struct Step {
    host: NodeId,
    latency: u64,
    path: Vec<NodeId>,
}

struct Choice {
    host: NodeId,
    route: PathResult,
    score: u64,
}

/// Places `nspr` with the two-choice heuristic, drawing randomness from
/// `rng`. `Ok(None)` is a rejection. `psn` is handed back unchanged.
pub fn solve_p2c<R: Rng + ?Sized>(
    psn: &mut Psn,
    nspr: &Nspr,
    table: &MinLatencyTable,
    cfg: &P2cConfig,
    rng: &mut R,
) -> Result<Option<Placement>, SolveError> {
    nspr.validate()?;
    let n = nspr.len();
    let placement = {
        let mut ledger = Tentative::new(psn);
        let mut steps: Vec<Step> = Vec::with_capacity(n);
        let mut excluded: Vec<Vec<NodeId>> = vec![Vec::new(); n];
        let mut backtracks = cfg.backtrack_budget;
        let mut e2e_used = 0u64;

        while steps.len() < n {
            let k = steps.len();
            let anchor = steps.last().map_or(nspr.access_node, |s| s.host);
            let budget = nspr.vlinks[k].lat_req.min(nspr.e2e_latency - e2e_used);
            match choose(ledger.psn(), nspr, k, anchor, budget, &excluded[k], table, cfg, rng) {
                Some(choice) => {
                    let vnf = &nspr.vnfs[k];
                    let bw = nspr.vlinks[k].bw_req;
                    let reservation = Reservation {
                        nodes: vec![(choice.host, vnf.cpu_req, vnf.ram_req)],
                        links: choice
                            .route
                            .path
                            .windows(2)
                            .map(|w| (ledger.psn().link_between(w[0], w[1]).expect("path link"), bw))
                            .collect(),
                    };
                    ledger.push(reservation)?;
                    e2e_used += choice.route.latency;
                    steps.push(Step {
                        host: choice.host,
                        latency: choice.route.latency,
                        path: choice.route.path,
                    });
                }
                None if k > 0 && backtracks > 0 => {
                    backtracks -= 1;
                    ledger.pop();
                    let undone = steps.pop().expect("k > 0");
                    e2e_used -= undone.latency;
                    excluded[k].clear();
                    excluded[k - 1].push(undone.host);
                }
                None => return Ok(None),
            }
        }
        let hosts: Vec<NodeId> = steps.iter().map(|s| s.host).collect();
        Placement::new(nspr.id, &hosts, steps.into_iter().map(|s| s.path).collect())
    };
    ensure_valid(psn, nspr, &placement)?;
    Ok(Some(placement))
}

/// Convenience wrapper seeding a fresh generator from `cfg.seed`.
pub fn solve_p2c_seeded(
    psn: &mut Psn,
    nspr: &Nspr,
    table: &MinLatencyTable,
    cfg: &P2cConfig,
) -> Result<Option<Placement>, SolveError> {
    solve_p2c(psn, nspr, table, cfg, &mut cfg.rng())
}

#[allow(clippy::too_many_arguments)]
fn choose<R: Rng + ?Sized>(
    psn: &Psn,
    nspr: &Nspr,
    k: usize,
    anchor: NodeId,
    budget: u64,
    excluded: &[NodeId],
    table: &MinLatencyTable,
    cfg: &P2cConfig,
    rng: &mut R,
) -> Option<Choice> {
    let vnf = &nspr.vnfs[k];
    let bw = nspr.vlinks[k].bw_req;
    let mut pool: Vec<NodeId> = psn
        .servers()
        .iter()
        .filter(|s| s.cpu_residual() >= vnf.cpu_req && s.ram_residual() >= vnf.ram_req)
        .filter(|s| table.get(anchor, s.id).is_some_and(|d| d <= budget))
        .filter(|s| !excluded.contains(&s.id))
        .map(|s| s.id)
        .collect();
    if pool.is_empty() {
        return None;
    }
    pool.sort_unstable();

    let sampled: Vec<usize> = match (cfg.choices, pool.len()) {
        (_, 1) => vec![0],
        (Choices::One, len) => vec![rng.random_range(0..len)],
        (Choices::Two, len) => {
            let (a, b) = sample_distinct_pair(rng, len);
            vec![a, b]
        }
    };
    // remove sampled entries from the pool, keeping the rest for resampling
    let mut picks: Vec<NodeId> = sampled.iter().map(|&i| pool[i]).collect();
    pool.retain(|id| !picks.contains(id));

    let route = |host: NodeId| constrained_shortest_path(psn, anchor, host, bw, budget);
    let mut best: Option<Choice> = None;
    let mut resamples = cfg.resample_attempts;
    let mut queue = std::mem::take(&mut picks);
    queue.reverse();
    while let Some(host) = queue.pop() {
        match route(host) {
            Some(r) => {
                let score = node_cost(psn, host, vnf.cpu_req, vnf.ram_req) + bw * r.hops as u64;
                let better = best
                    .as_ref()
                    .is_none_or(|b| (score, host) < (b.score, b.host));
                if better {
                    best = Some(Choice {
                        host,
                        route: r,
                        score,
                    });
                }
            }
            None if resamples > 0 && !pool.is_empty() => {
                resamples -= 1;
                let i = rng.random_range(0..pool.len());
                queue.push(pool.swap_remove(i));
            }
            None => {}
        }
    }
    best
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fixtures::{fixture_d4, nspr_x, N1, N2, N3, N4};
    use crate::placement::{placement_cost, validate_placement};
    use crate::psn::{DcType, PsnBuilder};
    use crate::slice::NsprId;

    #[test]
    fn pair_sampling_is_distinct() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        for len in 2..10 {
            for _ in 0..200 {
                let (a, b) = sample_distinct_pair(&mut rng, len);
                assert_ne!(a, b);
                assert!(a < len && b < len);
            }
        }
    }

    #[test]
    fn fixture_accepts_with_cost_at_least_optimum() {
        let psn0 = fixture_d4();
        let table = MinLatencyTable::new(&psn0);
        let nspr = nspr_x();
        for seed in 0..64 {
            let mut psn = psn0.clone();
            let cfg = P2cConfig {
                seed,
                ..P2cConfig::default()
            };
            let p = solve_p2c_seeded(&mut psn, &nspr, &table, &cfg).unwrap().unwrap();
            assert!(validate_placement(&psn, &nspr, &p).is_empty());
            assert!(placement_cost(&psn, &nspr, &p).total() >= 8);
            assert!(psn.is_idle());
        }
    }

    #[test]
    fn deterministic_per_seed() {
        let psn0 = fixture_d4();
        let table = MinLatencyTable::new(&psn0);
        let nspr = nspr_x();
        let cfg = P2cConfig {
            seed: 11,
            ..P2cConfig::default()
        };
        let a = solve_p2c_seeded(&mut psn0.clone(), &nspr, &table, &cfg).unwrap();
        let b = solve_p2c_seeded(&mut psn0.clone(), &nspr, &table, &cfg).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn singleton_pools_behave_greedily() {
        // v0 needs 5 CPU (only n4); v1's 10-unit latency keeps it on n4
        let mut psn = fixture_d4();
        let table = MinLatencyTable::new(&psn);
        let nspr = Nspr::chain(NsprId(3), N1, &[(5, 1), (3, 1)], &[(1, 30), (1, 10)], 60);
        let mut outcomes = Vec::new();
        for seed in 0..16 {
            let cfg = P2cConfig {
                seed,
                ..P2cConfig::default()
            };
            outcomes.push(solve_p2c_seeded(&mut psn, &nspr, &table, &cfg).unwrap().unwrap());
        }
        assert!(outcomes.windows(2).all(|w| w[0] == w[1]));
        assert_eq!(outcomes[0].hosts(), vec![N4, N4]);
        assert_eq!(outcomes[0].paths()[0], vec![N1, N2, N4]);
    }

    #[test]
    fn equal_scores_prefer_lower_id() {
        let mut b = PsnBuilder::new();
        let dc = b.dc(DcType::Edc);
        let sw = b.switch(Some(dc), true);
        let s1 = b.server(dc, 4, 4, 1, 1);
        let s2 = b.server(dc, 4, 4, 1, 1);
        b.link(sw, s1, 10, 1);
        b.link(sw, s2, 10, 1);
        let psn0 = b.build().unwrap();
        let table = MinLatencyTable::new(&psn0);
        let nspr = Nspr::chain(NsprId(1), sw, &[(1, 1)], &[(1, 10)], 10);
        for seed in 0..32 {
            let cfg = P2cConfig {
                seed,
                ..P2cConfig::default()
            };
            let p = solve_p2c_seeded(&mut psn0.clone(), &nspr, &table, &cfg).unwrap().unwrap();
            assert_eq!(p.hosts(), vec![s1]);
        }
    }

    #[test]
    fn rejects_when_nothing_fits() {
        let mut psn = fixture_d4();
        let table = MinLatencyTable::new(&psn);
        let nspr = Nspr::chain(NsprId(1), N1, &[(9, 1)], &[(1, 100)], 100);
        let cfg = P2cConfig::default();
        assert_eq!(solve_p2c_seeded(&mut psn, &nspr, &table, &cfg).unwrap(), None);
    }

    #[test]
    fn backtracking_recovers_from_dead_end() {
        // v0 fits on n1 or n3; v1 (cpu 4) only fits on n2/n4, and from n3 the
        // 5-latency budget reaches n2 but from n1 it reaches nothing
        let psn0 = fixture_d4();
        let table = MinLatencyTable::new(&psn0);
        let mut reserved = psn0.clone();
        reserved
            .reserve(&Reservation {
                nodes: vec![(N1, 3, 3), (N4, 8, 8)],
                links: vec![],
            })
            .unwrap();
        let nspr = Nspr::chain(NsprId(1), N1, &[(1, 1), (4, 4)], &[(1, 5), (1, 5)], 10);
        let mut saw_reject = false;
        for seed in 0..32 {
            let strict = P2cConfig {
                seed,
                ..P2cConfig::default()
            };
            let r = solve_p2c_seeded(&mut reserved, &nspr, &table, &strict).unwrap();
            saw_reject |= r.is_none();
            let lenient = P2cConfig {
                backtrack_budget: 1,
                ..strict
            };
            let p = solve_p2c_seeded(&mut reserved, &nspr, &table, &lenient)
                .unwrap()
                .expect("backtracking finds n3 -> n2");
            assert_eq!(p.hosts(), vec![N3, N2]);
        }
        assert!(saw_reject);
    }
}
