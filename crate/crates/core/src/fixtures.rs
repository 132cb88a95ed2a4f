//! Hand-sized substrates and requests shared by tests, examples and docs.

use crate::psn::{DcType, NodeId, Psn, PsnBuilder};
use crate::slice::{Nspr, NsprId};

pub const N1: NodeId = NodeId(0);
pub const N2: NodeId = NodeId(1);
pub const N3: NodeId = NodeId(2);
pub const N4: NodeId = NodeId(3);

/// Four servers, unit weights:
///
/// ```text
///   n1 ---(lat 10, bw 10)--- n2 ---(lat 20, bw 20)--- n4
///    \                      /
///  (lat 5, bw 5)      (lat 5, bw 5)
///      \                /
///       ------ n3 ------
/// ```
///
/// Capacities (cpu, ram): n1 (4, 4), n2 (4, 4), n3 (2, 2), n4 (8, 8).
pub fn fixture_d4() -> Psn {
    let mut b = PsnBuilder::new();
    let dc = b.dc(DcType::Ccp);
    b.server(dc, 4, 4, 1, 1);
    b.server(dc, 4, 4, 1, 1);
    b.server(dc, 2, 2, 1, 1);
    b.server(dc, 8, 8, 1, 1);
    b.link(N1, N2, 10, 10);
    b.link(N1, N3, 5, 5);
    b.link(N3, N2, 5, 5);
    b.link(N2, N4, 20, 20);
    b.build().expect("fixture is well formed")
}

/// Two-VNF chain anchored at n1: v0 (2, 2) -> v1 (2, 2); access link
/// (bw 1, lat 10), chain link (bw 4, lat 15), end-to-end budget 20.
pub fn nspr_x() -> Nspr {
    Nspr::chain(NsprId(7), N1, &[(2, 2), (2, 2)], &[(1, 10), (4, 15)], 20)
}
