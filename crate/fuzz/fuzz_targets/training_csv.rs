#![no_main]

use fusetrack_core::sonar::TrainingSet;
use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    if let Ok(set) = TrainingSet::read_csv(data) {
        let mut out = Vec::new();
        set.write_csv(&mut out).expect("write to memory");
        assert_eq!(TrainingSet::read_csv(out.as_slice()).expect("re-read").len(), set.len());
    }
});
