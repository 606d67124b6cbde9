#![no_main]

use hqinet::ctdata::{decode_volume, encode_volume};
use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    if let Ok(v) = decode_volume(data) {
        assert_eq!(encode_volume(&v).unwrap(), data);
    }
});
