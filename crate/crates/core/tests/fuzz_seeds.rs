//! The checked-in fuzz seeds must stay valid inputs, or fuzzing starts
//! from rejected bytes only.

use std::fs;
use std::path::{Path, PathBuf};

use hqinet::ctdata::{decode_volume, VolumeManifest};
use hqinet::train::{decode_pgm, Checkpoint, DatasetIndex, RunConfig};

fn seeds(target: &str) -> Vec<(PathBuf, Vec<u8>)> {
    let dir = Path::new(env!("CARGO_MANIFEST_DIR")).join("../../fuzz/corpus").join(target);
    let mut out: Vec<_> = fs::read_dir(&dir)
        .unwrap_or_else(|e| panic!("{}: {e}", dir.display()))
        .map(|e| e.unwrap().path())
        .filter(|p| p.file_name().unwrap().to_string_lossy().starts_with("seed_"))
        .map(|p| {
            let bytes = fs::read(&p).unwrap();
            (p, bytes)
        })
        .collect();
    out.sort();
    assert!(!out.is_empty(), "no seeds for {target}");
    out
}

#[test]
fn binary_seeds_decode() {
    for (p, b) in seeds("decode_volume") {
        decode_volume(&b).unwrap_or_else(|e| panic!("{}: {e}", p.display()));
    }
    for (p, b) in seeds("decode_checkpoint") {
        Checkpoint::decode(&b).unwrap_or_else(|e| panic!("{}: {e}", p.display()));
    }
    for (p, b) in seeds("decode_pgm") {
        assert!(decode_pgm(&b).is_some(), "{}", p.display());
    }
}

#[test]
fn text_seeds_parse() {
    for (p, b) in seeds("run_config") {
        RunConfig::from_json(std::str::from_utf8(&b).unwrap()).unwrap_or_else(|e| panic!("{}: {e}", p.display()));
    }
    for (p, b) in seeds("manifests") {
        let ok = serde_json::from_slice::<VolumeManifest>(&b).is_ok() || serde_json::from_slice::<DatasetIndex>(&b).is_ok();
        assert!(ok, "{}", p.display());
    }
}
