#![no_main]

use fusetrack_core::raster::Raster;
use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    if let Ok(r) = Raster::from_raw_frame(data) {
        let bytes = r.to_raw_frame();
        assert_eq!(Raster::from_raw_frame(&bytes).expect("re-decode"), r);
    }
});
