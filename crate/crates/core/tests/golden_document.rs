use std::path::PathBuf;

use lhcc_core::assembly::{export_instance, import_instance, InstanceConfig, ProblemInstance};
use lhcc_core::bench::BasicFunction;
use lhcc_core::Error;

fn fixture() -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("tests/fixtures/golden_instance.json")
}

fn golden_instance() -> ProblemInstance {
    let cfg = InstanceConfig::new(vec![4, 6], vec![BasicFunction::Rastrigin, BasicFunction::Katsuura], 3, 11);
    ProblemInstance::build(cfg).unwrap()
}

/// Set `LHCC_BLESS=1` to rewrite the fixture after an intended format change.
#[test]
fn export_matches_frozen_document() {
    let text = export_instance(&golden_instance());
    if std::env::var_os("LHCC_BLESS").is_some() {
        std::fs::write(fixture(), &text).unwrap();
    }
    let frozen = std::fs::read_to_string(fixture()).unwrap();
    assert_eq!(text, frozen);
}

#[test]
fn frozen_document_evaluates_like_a_fresh_build() {
    let imported = import_instance(&std::fs::read_to_string(fixture()).unwrap()).unwrap();
    let built = golden_instance();
    assert_eq!(imported.dim(), built.dim());
    for i in 0..20 {
        let x: Vec<f64> = (0..built.dim()).map(|j| ((i * 31 + j * 7) as f64).sin() * 90.0).collect();
        assert_eq!(imported.evaluate(&x).unwrap().to_bits(), built.evaluate(&x).unwrap().to_bits());
    }
    assert_eq!(imported.evaluate(imported.x_opt()).unwrap(), 0.0);
}

#[test]
fn newer_document_version_is_refused() {
    let text = std::fs::read_to_string(fixture()).unwrap().replace("\"version\": 1", "\"version\": 2");
    assert!(matches!(import_instance(&text), Err(Error::Parse { field, .. }) if field == "version"));
}
