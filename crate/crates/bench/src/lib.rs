//! Shared fixtures for the benchmarks.

use std::path::PathBuf;

use magnomech_core::Scenario;

/// Loads one of the scenarios shipped in the repository's `scenarios/` directory.
pub fn shipped(name: &str) -> Scenario {
    let path =
        PathBuf::from(env!("CARGO_MANIFEST_DIR")).join(format!("../../scenarios/{name}.json"));
    Scenario::from_path(&path).unwrap_or_else(|e| panic!("{name}: {e}"))
}
