//! Fuzz the metrics CSV reader: no panic on arbitrary input, and a
//! serialize/reparse fixpoint for everything it accepts.

#![no_main]

use libfuzzer_sys::fuzz_target;
use optneq::metrics::{parse_csv, rows_to_csv};

fuzz_target!(|data: &[u8]| {
    let Ok(text) = std::str::from_utf8(data) else { return };
    if let Ok(rows) = parse_csv(text) {
        let canon = rows_to_csv(&rows);
        let reparsed = parse_csv(&canon).expect("serialized rows must reparse");
        assert_eq!(rows_to_csv(&reparsed), canon);
    }
});
