//! Fuzz the experiment-config JSON decoder: no panic on arbitrary input, and
//! a serialize/reparse fixpoint for everything it accepts.

#![no_main]

use libfuzzer_sys::fuzz_target;
use optneq::harness::ExperimentConfig;

fuzz_target!(|data: &[u8]| {
    let Ok(text) = std::str::from_utf8(data) else { return };
    if let Ok(cfg) = ExperimentConfig::from_json(text) {
        let canon = cfg.to_json();
        let reparsed =
            ExperimentConfig::from_json(&canon).expect("serialized config must reparse");
        assert_eq!(reparsed.to_json(), canon);
    }
});
