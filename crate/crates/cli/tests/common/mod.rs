#![allow(dead_code)]

use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use serde_json::json;
use workzone_core::scenario::{Corridor, Link, RoadType, ScenarioConfig, ScenarioRecord, WorkZoneEvent};

pub fn workzone(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_workzone"))
        .args(args)
        .env("RUST_LOG", "warn")
        .output()
        .expect("spawn workzone")
}

pub fn ok(args: &[&str]) -> Output {
    let out = workzone(args);
    assert!(
        out.status.success(),
        "workzone {args:?} failed with {:?}\nstdout: {}\nstderr: {}",
        out.status.code(),
        String::from_utf8_lossy(&out.stdout),
        String::from_utf8_lossy(&out.stderr)
    );
    out
}

pub fn code(args: &[&str]) -> (i32, String) {
    let out = workzone(args);
    (out.status.code().unwrap_or(-1), String::from_utf8_lossy(&out.stderr).into_owned())
}

pub fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

pub fn fixture(name: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../core/tests/fixtures").join(name)
}

/// Seven 0.75-mile links, a one-hour closure (4 bins), historical speed 60
/// everywhere and `row0` as the actual speeds of the nearest link.
pub fn hand_record(id: &str, row0: [f64; 4], incident: bool) -> ScenarioRecord {
    let links: Vec<Link> = (0..7)
        .map(|i| Link {
            link_id: format!("{id}-L{i}"),
            length: 0.75,
            distance_to_workzone: 0.75 * i as f64,
            free_flow_speed: 65.0,
        })
        .collect();
    let mut actual = vec![vec![60.0; 4]; 7];
    actual[0] = row0.to_vec();
    ScenarioRecord {
        event: WorkZoneEvent {
            id: id.to_string(),
            start_time: 480,
            end_time: 540,
            day_of_week: 2,
            lanes_closed: 1,
            lanes_total: 3,
            road_type: RoadType::Freeway,
            has_on_ramp: false,
            has_off_ramp: false,
            milepost: 10.0,
        },
        corridor: Corridor { links },
        historical_speed: vec![vec![60.0; 4]; 7],
        historical_volume: vec![vec![500.0; 4]; 7],
        actual_speed: actual,
        incident,
    }
}

/// Writes a corpus directory whose manifest assigns records to splits by hand.
pub fn write_hand_corpus(dir: &Path, train: &[ScenarioRecord], val: &[ScenarioRecord], test: &[ScenarioRecord]) {
    fs::create_dir_all(dir).unwrap();
    let ids = |v: &[ScenarioRecord]| v.iter().map(|r| r.id().to_string()).collect::<Vec<_>>();
    let manifest = json!({
        "schema_version": 1,
        "seed": 0,
        "count": train.len() + val.len() + test.len(),
        "counts": { "train": train.len(), "val": val.len(), "test": test.len() },
        "split": { "train": ids(train), "val": ids(val), "test": ids(test) },
        "config": ScenarioConfig::default(),
    });
    fs::write(dir.join("manifest.json"), serde_json::to_string_pretty(&manifest).unwrap()).unwrap();
    for r in train.iter().chain(val).chain(test) {
        fs::write(dir.join(format!("scenario_{}.json", r.id())), serde_json::to_string(r).unwrap()).unwrap();
    }
}

/// A run config with the given training section and defaults elsewhere.
pub fn write_config(path: &Path, training: serde_json::Value) {
    fs::write(path, serde_json::to_string_pretty(&json!({ "training": training })).unwrap()).unwrap();
}

pub fn read_json(path: &Path) -> serde_json::Value {
    serde_json::from_slice(&fs::read(path).unwrap()).unwrap()
}

/// All files of a directory, sorted by name, with their bytes.
pub fn dir_bytes(dir: &Path) -> Vec<(String, Vec<u8>)> {
    let mut out: Vec<_> = fs::read_dir(dir)
        .unwrap()
        .map(|e| {
            let e = e.unwrap();
            (e.file_name().to_string_lossy().into_owned(), fs::read(e.path()).unwrap())
        })
        .collect();
    out.sort();
    out
}
