//! Online placement of network slice requests onto a hierarchical
//! edge/core substrate.
//!
//! The substrate ([`psn::Psn`]) keeps an integer resource ledger. Requests
//! ([`slice::Nspr`]) are chains of VNFs joined by virtual links, placed
//! either by an exact branch-and-bound ([`exact`]) or by the
//! power-of-two-choices heuristic ([`p2c`]). [`sim`] replays arrival and
//! departure traces against either one and records [`metrics`].

pub mod cli;
pub mod config;
pub mod exact;
pub mod export;
pub mod fixtures;
pub mod metrics;
pub mod p2c;
pub mod path;
pub mod placement;
pub mod psn;
pub mod sim;
pub mod slice;
pub mod topology;
pub mod trace;

pub use exact::{solve_exact, ExactConfig, ExactOutcome};
pub use p2c::{solve_p2c, Choices, P2cConfig};
pub use placement::{placement_cost, validate_placement, Cost, Placement, SolveError, Violation};
pub use psn::{DcType, LinkId, NodeId, Psn};
pub use sim::{replay_compare, run_simulation, Algorithm, SimConfig};
pub use slice::{Nspr, NsprId, NsprParams};
pub use topology::{build_psn, PsnConfig};
pub use trace::{generate_trace, EventTrace};
