//! Fuzz the market-parameter text parser: no panic on arbitrary input, and a
//! serialize/reparse fixpoint for everything it accepts.

#![no_main]

use libfuzzer_sys::fuzz_target;
use optneq::problem::CournotParams;

fuzz_target!(|data: &[u8]| {
    let Ok(text) = std::str::from_utf8(data) else { return };
    if let Ok(params) = CournotParams::parse_text(text) {
        let canon = params.to_text();
        let reparsed =
            CournotParams::parse_text(&canon).expect("serialized parameters must reparse");
        assert_eq!(reparsed.to_text(), canon);
    }
});
