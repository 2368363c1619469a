#![no_main]

use fusetrack_core::camera::CameraCalibration;
use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    if let Ok(text) = std::str::from_utf8(data) {
        if let Ok(cal) = CameraCalibration::from_json(text) {
            let _ = CameraCalibration::from_config(&cal.to_config()).expect("round trip");
        }
    }
});
