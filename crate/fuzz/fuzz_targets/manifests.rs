#![no_main]

use hqinet::ctdata::VolumeManifest;
use hqinet::train::DatasetIndex;
use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    let _ = serde_json::from_slice::<VolumeManifest>(data);
    let _ = serde_json::from_slice::<DatasetIndex>(data);
});
