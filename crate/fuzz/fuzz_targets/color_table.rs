#![no_main]

use fusetrack_core::tracker::color_names::ColorTable;
use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    if let Ok(t) = ColorTable::decode(data) {
        let _ = t.lookup([0.0, 0.5, 1.0]);
        let _ = t.lookup([1.0, 1.0, 1.0]);
    }
});
