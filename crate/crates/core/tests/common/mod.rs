#![allow(dead_code)]

use std::path::PathBuf;

pub mod oracles;

use provlang::topology::Topology;

pub fn fixture_path(name: &str) -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../fixtures").join(name)
}

pub fn fixture(name: &str) -> String {
    std::fs::read_to_string(fixture_path(name)).unwrap_or_else(|e| panic!("reading fixture {name}: {e}"))
}

pub fn topology(name: &str) -> Topology {
    Topology::from_json(&fixture(name)).unwrap()
}
