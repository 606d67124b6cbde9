#![no_main]

use hqinet::train::decode_pgm;
use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    if let Some((w, h, px)) = decode_pgm(data) {
        assert_eq!(px.len(), w * h);
    }
});
