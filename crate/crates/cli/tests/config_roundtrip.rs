use std::path::PathBuf;

use urnflow_cli::config::ExperimentConfig;

fn examples() -> Vec<PathBuf> {
    let dir = PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("examples");
    let mut files: Vec<_> = std::fs::read_dir(dir)
        .unwrap()
        .map(|e| e.unwrap().path())
        .filter(|p| p.extension().is_some_and(|e| e == "json"))
        .collect();
    files.sort();
    files
}

#[test]
fn bundled_configs_round_trip() {
    let files = examples();
    assert!(files.len() >= 3);
    for path in files {
        let cfg = ExperimentConfig::load(&path).unwrap();
        let again = ExperimentConfig::parse(&cfg.to_json()).unwrap();
        assert_eq!(cfg, again, "{}", path.display());
        assert_eq!(again.to_json(), cfg.to_json());
        cfg.model.build().unwrap();
    }
}

#[test]
fn unknown_keys_are_rejected() {
    let text = r#"{
        "model": { "kind": "replicator", "k": 3, "b": 1, "d": 1, "nu": 1, "birth": "hypercycle", "death": "zero", "extra": 1 },
        "run": { "mode": "analyze" }
    }"#;
    let err = ExperimentConfig::parse(text).unwrap_err();
    assert_eq!(err.exit_code(), 2);
    assert!(err.to_string().contains("extra"), "{err}");
}

#[test]
fn invalid_parameters_are_config_errors() {
    let text = r#"{
        "model": { "kind": "replicator", "k": 3, "b": 1, "d": 1, "nu": 1, "birth": [[1, 0], [0, 1]], "death": "zero" },
        "run": { "mode": "analyze" }
    }"#;
    let cfg = ExperimentConfig::parse(text).unwrap();
    let err = cfg.model.build().err().expect("shape mismatch");
    assert_eq!(err.exit_code(), 2);
}
