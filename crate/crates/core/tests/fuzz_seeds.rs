//! Replays the checked-in fuzz seeds through the parsers with the same
//! invariants the fuzz targets assert.

use std::fs;
use std::path::PathBuf;

use nilm_core::checkpoint::Checkpoint;
use nilm_core::data::{parse_channel, parse_series_csv, series_csv_string};

fn seeds(target: &str) -> Vec<(String, Vec<u8>)> {
    let dir = PathBuf::from(env!("CARGO_MANIFEST_DIR"))
        .join("../../fuzz/corpus")
        .join(target);
    let mut out: Vec<_> = fs::read_dir(&dir)
        .unwrap_or_else(|e| panic!("{}: {e}", dir.display()))
        .map(|e| e.unwrap().path())
        .map(|p| {
            (
                p.file_name().unwrap().to_string_lossy().into_owned(),
                fs::read(&p).unwrap(),
            )
        })
        .collect();
    out.sort();
    assert!(!out.is_empty(), "no seeds for {target}");
    out
}

#[test]
fn channel_seeds() {
    let mut ok = 0;
    for (name, data) in seeds("parse_channel") {
        if let Ok(ch) = parse_channel(&name, &String::from_utf8_lossy(&data)) {
            assert!(ch.timestamps().windows(2).all(|w| w[0] < w[1]));
            ok += 1;
        }
    }
    assert!(ok >= 1);
}

#[test]
fn series_csv_seeds() {
    let mut ok = 0;
    for (name, data) in seeds("parse_series_csv") {
        let Ok(text) = std::str::from_utf8(&data) else { continue };
        if let Ok(ch) = parse_series_csv(&name, text) {
            let again = parse_series_csv(&name, &series_csv_string(&ch)).unwrap();
            assert_eq!(again.watts(), ch.watts());
            ok += 1;
        }
    }
    assert!(ok >= 1);
}

#[test]
fn checkpoint_seeds() {
    let mut ok = 0;
    for (_, data) in seeds("checkpoint_from_bytes") {
        if let Ok(ckpt) = Checkpoint::from_bytes(&data) {
            assert_eq!(ckpt.to_bytes().unwrap(), data);
            ok += 1;
        }
    }
    assert!(ok >= 1);
}
