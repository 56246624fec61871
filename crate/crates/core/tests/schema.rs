use std::path::PathBuf;

use magnomech_core::ScenarioSpec;

/// The schema under `docs/` is generated from the types; regenerate it with
/// `magnomech schema > docs/scenario.schema.json` after changing them.
#[test]
fn shipped_schema_is_current() {
    let path = PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../docs/scenario.schema.json");
    let shipped = std::fs::read_to_string(&path).unwrap_or_default();
    assert!(
        shipped == ScenarioSpec::json_schema(),
        "{} is stale",
        path.display()
    );
}
