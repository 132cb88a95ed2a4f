//! Discrete-event replay of a trace against one placement algorithm.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::sync::Arc;
use std::time::Instant;

use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::exact::{solve_exact, ExactConfig};
use crate::metrics::{
    acceptance_ratio, config_hash, utilization, LinkTierRule, MetricsSample, MetricsSeries, RunMeta,
};
use crate::p2c::{solve_p2c, P2cConfig};
use crate::path::MinLatencyTable;
use crate::placement::{Placement, PlacementRecord, SolveError};
use crate::psn::{LedgerError, Psn};
use crate::slice::{Nspr, NsprId, SimTime};
use crate::trace::{EventKind, EventTrace, TraceError};

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Algorithm {
    Exact,
    P2c,
}

impl Algorithm {
    pub fn label(self) -> &'static str {
        match self {
            Algorithm::Exact => "exact",
            Algorithm::P2c => "p2c",
        }
    }
}

impl fmt::Display for Algorithm {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.label())
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum AlgoSelect {
    Exact,
    #[default]
    P2c,
    Both,
}

impl AlgoSelect {
    pub fn algorithms(self) -> Vec<Algorithm> {
        match self {
            AlgoSelect::Exact => vec![Algorithm::Exact],
            AlgoSelect::P2c => vec![Algorithm::P2c],
            AlgoSelect::Both => vec![Algorithm::Exact, Algorithm::P2c],
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SimConfig {
    pub algorithm: AlgoSelect,
    pub exact: ExactConfig,
    pub p2c: P2cConfig,
    /// Extra samples every this many ticks; 0 samples only at events.
    pub sample_interval: SimTime,
    /// Measure decision wall time. Off makes every output byte-stable.
    pub record_timing: bool,
    /// Rebuild the ledger from the active set every this many events and
    /// at the end of the run; 0 disables the audit.
    pub audit_every: u64,
    pub link_tier: LinkTierRule,
}

impl Default for SimConfig {
    fn default() -> Self {
        SimConfig {
            algorithm: AlgoSelect::P2c,
            exact: ExactConfig::default(),
            p2c: P2cConfig::default(),
            sample_interval: 0,
            record_timing: true,
            audit_every: 256,
            link_tier: LinkTierRule::MoreEdge,
        }
    }
}

#[derive(Debug, Error)]
pub enum SimError {
    #[error("t={t}: {source}")]
    Solve {
        t: SimTime,
        #[source]
        source: SolveError,
    },
    #[error("t={t}: ledger rejected {op} of {nspr}: {source}\n{dump}")]
    Ledger {
        t: SimTime,
        op: &'static str,
        nspr: NsprId,
        #[source]
        source: LedgerError,
        dump: String,
    },
    #[error("t={t}: departure of {nspr}, which never arrived")]
    UnknownDeparture { t: SimTime, nspr: NsprId },
    #[error("t={t}: ledger incoherent: {detail}\n{dump}")]
    Incoherent {
        t: SimTime,
        detail: String,
        dump: String,
    },
    #[error(transparent)]
    Trace(#[from] TraceError),
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ActiveSlice {
    pub nspr: Nspr,
    pub placement: Placement,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct SimState {
    pub clock: SimTime,
    pub arrivals: u64,
    pub accepts: u64,
    pub rejects: u64,
    pub psn: Psn,
    pub active: BTreeMap<NsprId, ActiveSlice>,
}

impl SimState {
    fn dump(&self) -> String {
        let ids: Vec<String> = self.active.keys().map(|id| id.to_string()).collect();
        format!(
            "clock={} arrivals={} accepts={} rejects={} active=[{}] usage={:?}",
            self.clock,
            self.arrivals,
            self.accepts,
            self.rejects,
            ids.join(","),
            self.psn.usage_snapshot()
        )
    }

    /// The ledger must equal the sum of the active placements' demands.
    pub fn check_coherence(&self) -> Result<(), String> {
        self.psn.check_bounds()?;
        let mut expected = self.psn.fresh();
        for slice in self.active.values() {
            let r = slice
                .placement
                .reservation(&expected, &slice.nspr)
                .ok_or_else(|| format!("{} has a broken path", slice.nspr.id))?;
            expected
                .reserve(&r)
                .map_err(|e| format!("{}: {e}", slice.nspr.id))?;
        }
        if expected.usage_snapshot() != self.psn.usage_snapshot() {
            return Err("used amounts differ from the active placements".into());
        }
        if self.psn.committed_count() != self.active.len() {
            return Err("commitment count differs from the active set".into());
        }
        Ok(())
    }
}

/// One placement decision, as written to the decision log.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct DecisionRecord {
    pub t: SimTime,
    pub nspr: NsprId,
    pub algo: Algorithm,
    pub accepted: bool,
    pub cost: Option<u64>,
    pub decision_us: u64,
}

#[derive(Clone, Debug)]
pub struct SimRun {
    pub algorithm: Algorithm,
    pub series: MetricsSeries,
    pub state: SimState,
    pub decisions: Vec<DecisionRecord>,
    /// Accepted placements in decision order.
    pub placements: Vec<PlacementRecord>,
}

/// Wraps one algorithm with whatever state it keeps across requests.
pub struct Placer {
    algorithm: Algorithm,
    exact: ExactConfig,
    p2c: P2cConfig,
    table: Arc<MinLatencyTable>,
    rng: ChaCha8Rng,
}

impl Placer {
    pub fn new(algorithm: Algorithm, cfg: &SimConfig, table: Arc<MinLatencyTable>) -> Self {
        Placer {
            algorithm,
            exact: cfg.exact.clone(),
            p2c: cfg.p2c.clone(),
            table,
            rng: cfg.p2c.rng(),
        }
    }

    pub fn place(&mut self, psn: &mut Psn, nspr: &Nspr) -> Result<Option<Placement>, SolveError> {
        match self.algorithm {
            Algorithm::Exact => Ok(solve_exact(psn, nspr, &self.exact)?.placement),
            Algorithm::P2c => solve_p2c(psn, nspr, &self.table, &self.p2c, &mut self.rng),
        }
    }
}

pub struct Simulator {
    state: SimState,
    placer: Placer,
    cfg: SimConfig,
    dropped: BTreeSet<NsprId>,
    samples: Vec<MetricsSample>,
    decisions: Vec<DecisionRecord>,
    placements: Vec<PlacementRecord>,
    last_decision_us: u64,
}

impl Simulator {
    pub fn new(psn: Psn, algorithm: Algorithm, cfg: &SimConfig) -> Self {
        let table = Arc::new(MinLatencyTable::new(&psn));
        Self::with_table(psn, algorithm, cfg, table)
    }

    /// Reuses a latency table built for a structurally identical substrate.
    pub fn with_table(psn: Psn, algorithm: Algorithm, cfg: &SimConfig, table: Arc<MinLatencyTable>) -> Self {
        Simulator {
            state: SimState {
                clock: 0,
                arrivals: 0,
                accepts: 0,
                rejects: 0,
                psn,
                active: BTreeMap::new(),
            },
            placer: Placer::new(algorithm, cfg, table),
            cfg: cfg.clone(),
            dropped: BTreeSet::new(),
            samples: Vec::new(),
            decisions: Vec::new(),
            placements: Vec::new(),
            last_decision_us: 0,
        }
    }

    pub fn state(&self) -> &SimState {
        &self.state
    }

    fn sample(&mut self, t: SimTime) {
        let s = &self.state;
        self.samples.push(MetricsSample {
            t,
            arrivals: s.arrivals,
            accepts: s.accepts,
            rejects: s.rejects,
            acceptance_ratio: acceptance_ratio(s.accepts, s.arrivals).expect("accepts <= arrivals"),
            util: utilization(&s.psn, self.cfg.link_tier),
            decision_us: self.last_decision_us,
        });
    }

    fn arrive(&mut self, t: SimTime, nspr: &Nspr) -> Result<(), SimError> {
        self.state.arrivals += 1;
        let started = Instant::now();
        let outcome = self
            .placer
            .place(&mut self.state.psn, nspr)
            .map_err(|source| SimError::Solve { t, source })?;
        let elapsed = if self.cfg.record_timing {
            started.elapsed().as_micros() as u64
        } else {
            0
        };
        self.last_decision_us = elapsed;
        let cost = match outcome {
            Some(placement) => {
                let record = PlacementRecord::new(&self.state.psn, nspr, &placement);
                let cost = record.cost.total;
                self.placements.push(record);
                if let Err(source) = self.state.psn.commit(nspr, &placement) {
                    return Err(SimError::Ledger {
                        t,
                        op: "commit",
                        nspr: nspr.id,
                        source,
                        dump: self.state.dump(),
                    });
                }
                self.state.active.insert(
                    nspr.id,
                    ActiveSlice {
                        nspr: nspr.clone(),
                        placement,
                    },
                );
                self.state.accepts += 1;
                Some(cost)
            }
            None => {
                self.state.rejects += 1;
                self.dropped.insert(nspr.id);
                None
            }
        };
        self.decisions.push(DecisionRecord {
            t,
            nspr: nspr.id,
            algo: self.placer.algorithm,
            accepted: cost.is_some(),
            cost,
            decision_us: elapsed,
        });
        Ok(())
    }

    fn depart(&mut self, t: SimTime, id: NsprId) -> Result<(), SimError> {
        if let Some(slice) = self.state.active.remove(&id) {
            if let Err(source) = self.state.psn.release(&slice.placement) {
                return Err(SimError::Ledger {
                    t,
                    op: "release",
                    nspr: id,
                    source,
                    dump: self.state.dump(),
                });
            }
            Ok(())
        } else if self.dropped.remove(&id) {
            Ok(())
        } else {
            Err(SimError::UnknownDeparture { t, nspr: id })
        }
    }

    fn audit(&self, t: SimTime) -> Result<(), SimError> {
        self.state.check_coherence().map_err(|detail| SimError::Incoherent {
            t,
            detail,
            dump: self.state.dump(),
        })
    }

    /// Processes every event with `t <= horizon`. Departures scheduled
    /// later are left pending, so their slices stay in the final state.
    pub fn run(mut self, trace: &EventTrace) -> Result<SimRun, SimError> {
        trace.check()?;
        let interval = self.cfg.sample_interval;
        let audit = self.cfg.audit_every;
        let mut processed = 0u64;
        self.sample(0);
        let mut next_tick = interval;
        for event in trace.events.iter().take_while(|e| e.t <= trace.horizon) {
            if interval > 0 {
                while next_tick <= event.t {
                    self.state.clock = next_tick;
                    self.sample(next_tick);
                    next_tick += interval;
                }
            }
            self.state.clock = event.t;
            match &event.kind {
                EventKind::Arrival { nspr } => self.arrive(event.t, nspr)?,
                EventKind::Departure { id } => self.depart(event.t, *id)?,
            }
            processed += 1;
            if audit > 0 && processed.is_multiple_of(audit) {
                self.audit(event.t)?;
            }
            self.sample(event.t);
        }
        if audit > 0 {
            self.audit(self.state.clock)?;
        }
        if interval > 0 {
            while next_tick <= trace.horizon {
                self.state.clock = next_tick;
                self.sample(next_tick);
                next_tick += interval;
            }
        }
        let algorithm = self.placer.algorithm;
        let series = MetricsSeries {
            meta: RunMeta {
                algorithm: algorithm.label().to_string(),
                seed: self.cfg.p2c.seed,
                config_hash: config_hash(&self.cfg),
            },
            samples: self.samples,
        };
        Ok(SimRun {
            algorithm,
            series,
            state: self.state,
            decisions: self.decisions,
            placements: self.placements,
        })
    }
}

pub fn run_simulation(psn: Psn, trace: &EventTrace, algorithm: Algorithm, cfg: &SimConfig) -> Result<SimRun, SimError> {
    Simulator::new(psn, algorithm, cfg).run(trace)
}

/// Both algorithms over the same trace on independent copies of `psn`.
#[derive(Clone, Debug)]
pub struct Comparison {
    pub exact: SimRun,
    pub p2c: SimRun,
}

impl Comparison {
    /// Decisions from both runs, ordered by arrival then algorithm.
    pub fn decisions(&self) -> Vec<DecisionRecord> {
        let mut all: Vec<DecisionRecord> = self
            .exact
            .decisions
            .iter()
            .chain(&self.p2c.decisions)
            .cloned()
            .collect();
        all.sort_by_key(|d| (d.t, d.nspr, d.algo));
        all
    }
}

pub fn replay_compare(psn: &Psn, trace: &EventTrace, cfg: &SimConfig) -> Result<Comparison, SimError> {
    let table = Arc::new(MinLatencyTable::new(psn));
    let (exact, p2c) = std::thread::scope(|scope| {
        let exact = scope.spawn(|| {
            Simulator::with_table(psn.clone(), Algorithm::Exact, cfg, table.clone()).run(trace)
        });
        let p2c = Simulator::with_table(psn.clone(), Algorithm::P2c, cfg, table.clone()).run(trace);
        (exact.join().expect("exact replay panicked"), p2c)
    });
    Ok(Comparison {
        exact: exact?,
        p2c: p2c?,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fixtures::{fixture_d4, nspr_x, N1};
    use crate::slice::NsprParams;
    use crate::topology::{build_psn, PsnConfig};
    use crate::trace::{generate_trace, Event};

    fn quiet() -> SimConfig {
        SimConfig {
            record_timing: false,
            audit_every: 1,
            ..SimConfig::default()
        }
    }

    #[test]
    fn empty_trace_has_one_sample() {
        let trace = EventTrace {
            events: vec![],
            horizon: 1000,
        };
        let run = run_simulation(fixture_d4(), &trace, Algorithm::P2c, &quiet()).unwrap();
        assert_eq!(run.series.samples.len(), 1);
        assert_eq!(run.series.samples[0].acceptance_ratio, None);
        assert!(run.state.psn.is_idle());
    }

    #[test]
    fn single_slice_lifecycle() {
        let mut nspr = nspr_x();
        nspr.arrival_time = 10;
        nspr.holding_time = 5;
        let trace = EventTrace {
            events: vec![
                Event {
                    t: 10,
                    kind: EventKind::Arrival { nspr: nspr.clone() },
                },
                Event {
                    t: 15,
                    kind: EventKind::Departure { id: nspr.id },
                },
            ],
            horizon: 100,
        };
        let run = run_simulation(fixture_d4(), &trace, Algorithm::Exact, &quiet()).unwrap();
        assert_eq!(run.decisions.len(), 1);
        assert_eq!(run.decisions[0].cost, Some(8));
        let mid = &run.series.samples[1];
        assert_eq!((mid.t, mid.accepts), (10, 1));
        assert_eq!(
            mid.util.cpu.all.map(crate::metrics::to_f64),
            Some(4.0 / 18.0)
        );
        assert!(run.state.psn.is_idle());
        assert!(run.state.active.is_empty());
        run.series.check().unwrap();
    }

    #[test]
    fn rejected_departure_is_dropped() {
        let mut psn = fixture_d4();
        // leave nothing anywhere
        let full: Vec<_> = psn
            .servers()
            .iter()
            .map(|s| (s.id, s.cpu_cap, s.ram_cap))
            .collect();
        psn.reserve(&crate::psn::Reservation {
            nodes: full,
            links: vec![],
        })
        .unwrap();
        let nspr = nspr_x();
        let trace = EventTrace {
            events: vec![
                Event {
                    t: 0,
                    kind: EventKind::Arrival { nspr: nspr.clone() },
                },
                Event {
                    t: 1,
                    kind: EventKind::Departure { id: nspr.id },
                },
            ],
            horizon: 10,
        };
        let cfg = SimConfig {
            audit_every: 0,
            ..quiet()
        };
        let run = run_simulation(psn, &trace, Algorithm::P2c, &cfg).unwrap();
        assert_eq!((run.state.accepts, run.state.rejects), (0, 1));
    }

    #[test]
    fn unknown_departure_fails() {
        let trace = EventTrace {
            events: vec![Event {
                t: 1,
                kind: EventKind::Departure { id: NsprId(3) },
            }],
            horizon: 10,
        };
        let err = run_simulation(fixture_d4(), &trace, Algorithm::P2c, &quiet());
        assert!(err.is_err());
    }

    #[test]
    fn departures_past_horizon_stay_active() {
        let mut nspr = nspr_x();
        nspr.holding_time = 50;
        let trace = EventTrace {
            events: vec![
                Event {
                    t: 0,
                    kind: EventKind::Arrival { nspr: nspr.clone() },
                },
                Event {
                    t: 50,
                    kind: EventKind::Departure { id: nspr.id },
                },
            ],
            horizon: 20,
        };
        let run = run_simulation(fixture_d4(), &trace, Algorithm::Exact, &quiet()).unwrap();
        assert_eq!(run.state.active.len(), 1);
        assert_eq!(run.state.active[&nspr.id].placement.hosts(), vec![N1, N1]);
        run.state.check_coherence().unwrap();
    }

    #[test]
    fn periodic_samples() {
        let trace = EventTrace {
            events: vec![],
            horizon: 1000,
        };
        let cfg = SimConfig {
            sample_interval: 250,
            ..quiet()
        };
        let run = run_simulation(fixture_d4(), &trace, Algorithm::P2c, &cfg).unwrap();
        let ts: Vec<_> = run.series.samples.iter().map(|s| s.t).collect();
        assert_eq!(ts, vec![0, 250, 500, 750, 1000]);
    }

    #[test]
    fn compare_is_deterministic_without_timing() {
        let psn = build_psn(&PsnConfig::desk()).unwrap();
        let trace = generate_trace(&NsprParams::default(), 0.5, 40_000, &psn, 3).unwrap();
        let a = replay_compare(&psn, &trace, &quiet()).unwrap();
        let b = replay_compare(&psn, &trace, &quiet()).unwrap();
        assert_eq!(a.decisions(), b.decisions());
        assert_eq!(a.p2c.series, b.p2c.series);
        assert_eq!(a.exact.series, b.exact.series);
        a.exact.series.check().unwrap();
        a.p2c.series.check().unwrap();
        // exact never accepts fewer of the first slice than p2c
        assert!(a.exact.decisions[0].accepted >= a.p2c.decisions[0].accepted);
    }
}
