#![no_main]

use fusetrack_core::sim::Scenario;
use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    if let Ok(text) = std::str::from_utf8(data) {
        // accepted scenarios must survive a round trip
        if let Ok(s) = Scenario::from_json(text) {
            let again = Scenario::from_json(&s.to_json()).expect("re-serialized scenario parses");
            assert_eq!(again, s);
            let _ = s.event_counts();
        }
    }
});
