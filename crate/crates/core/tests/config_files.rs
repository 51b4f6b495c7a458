use std::fs;

use pwsobs::config::{builtin_source, load_config, ConfigError};

#[test]
fn file_configs_match_the_builtins() {
    let dir = tempfile::tempdir().unwrap();
    for n in 1..=3 {
        let path = dir.path().join(format!("example{n}.toml"));
        fs::write(&path, builtin_source(n).unwrap()).unwrap();
        let s = load_config(&path).unwrap();
        let b = pwsobs::config::builtin_example(n).unwrap();
        assert_eq!(s.origin, path.display().to_string());
        assert_eq!(s.name, b.name);
        assert_eq!(s.x0(), b.x0());
        assert_eq!(s.simulate, b.simulate);
        assert_eq!(s.system.params().values(), b.system.params().values());
    }
}

#[test]
fn missing_file_and_bad_values_are_reported() {
    let dir = tempfile::tempdir().unwrap();
    let missing = dir.path().join("nope.toml");
    assert!(matches!(load_config(&missing), Err(ConfigError::Io { .. })));

    let bad = dir.path().join("bad.toml");
    let src = builtin_source(2).unwrap().replace("grid = 41", "grid = 1");
    fs::write(&bad, src).unwrap();
    let err = load_config(&bad).unwrap_err();
    assert!(err.to_string().contains("bad.toml"), "{err}");
}
