//! The configurations shipped under `configs/` must stay parseable.

use neurocal::config::RunConfig;
use std::path::PathBuf;

#[test]
fn every_shipped_config_parses_strictly() {
    let dir = PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../configs");
    let mut seen = 0;
    for entry in std::fs::read_dir(&dir).expect("configs directory") {
        let path = entry.expect("entry").path();
        if path.extension().is_none_or(|e| e != "yml") {
            continue;
        }
        let text = std::fs::read_to_string(&path).expect("readable");
        let cfg = RunConfig::from_yaml_str(&text)
            .unwrap_or_else(|e| panic!("{} does not parse: {e}", path.display()));
        assert!(!cfg.seed_list().is_empty());
        seen += 1;
    }
    assert!(seen >= 4, "expected the reference configs, found {seen}");
}
