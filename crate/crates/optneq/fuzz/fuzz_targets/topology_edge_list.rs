//! Fuzz the edge-list parser: arbitrary text must never panic, and anything
//! that parses must reach a serialize/reparse fixpoint.

#![no_main]

use libfuzzer_sys::fuzz_target;
use optneq::graph::Topology;

fuzz_target!(|data: &[u8]| {
    let Ok(text) = std::str::from_utf8(data) else { return };
    if let Ok(topo) = Topology::parse_edge_list(text) {
        let canon = topo.to_edge_list();
        let reparsed =
            Topology::parse_edge_list(&canon).expect("serialized topology must reparse");
        assert_eq!(reparsed.to_edge_list(), canon);
    }
});
