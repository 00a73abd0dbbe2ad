use llmq_core::executor::{write_csv, write_ndjson};
use llmq_core::{suite, CatalogError, Engine, EngineConfig, EngineError, Value};

fn config_in(dir: &std::path::Path) -> EngineConfig {
    let text = format!(
        "seed = 5\n[paths]\ncatalog_dir = {:?}\n[vector]\nrag_index = \"squad.context\"\n[scheduler]\nwindow = 4\n",
        dir.join("cat")
    );
    EngineConfig::from_toml_str(&text).unwrap()
}

#[test]
fn saved_catalog_answers_queries_identically_after_reopen() {
    let dir = tempfile::tempdir().unwrap();
    let config = config_in(dir.path());
    assert_eq!((config.seed, config.scheduler.window), (5, 4));

    let engine = Engine::open(config.clone()).unwrap();
    assert!(engine.catalog().table_names().is_empty());
    engine.load_fixtures(40).unwrap();
    let before: Vec<_> = suite::QUERIES.iter().map(|(_, q)| engine.run(q).unwrap().rows).collect();
    engine.catalog().save(config.paths.catalog_dir.as_ref().unwrap()).unwrap();

    let reopened = Engine::open(config).unwrap();
    assert_eq!(reopened.catalog().table_names(), engine.catalog().table_names());
    assert_eq!(reopened.catalog().index_targets(), vec![("squad".to_string(), "context".to_string())]);
    let after: Vec<_> = suite::QUERIES.iter().map(|(_, q)| reopened.run(q).unwrap().rows).collect();
    assert_eq!(before, after);
    for (name, _) in suite::QUERIES {
        let q = suite::by_name(name).unwrap();
        assert_eq!(engine.explain(q, false).unwrap(), reopened.explain(q, false).unwrap());
    }
}

#[test]
fn config_files_round_trip_and_reject_bad_values() {
    let dir = tempfile::tempdir().unwrap();
    let config = config_in(dir.path());
    let path = dir.path().join("engine.toml");
    std::fs::write(&path, config.to_toml()).unwrap();
    assert_eq!(EngineConfig::load(&path).unwrap(), config);

    assert!(EngineConfig::load(dir.path().join("absent.toml")).is_err());
    assert!(EngineConfig::from_toml_str("[scheduler]\nwindow = 0\n").is_err());
    assert!(EngineConfig::from_toml_str("[vector]\nrag_index = \"nodot\"\n").is_err());
    assert!(EngineConfig::from_toml_str("seed = \"x\"").is_err());
}

#[test]
fn missing_csv_is_a_catalog_error() {
    let engine = Engine::open(EngineConfig::default()).unwrap();
    let err = engine.catalog().load_csv("/nonexistent/file.csv", "t", None).unwrap_err();
    assert!(matches!(err, CatalogError::FileNotFound(_)), "{err:?}");
    assert_eq!(EngineError::from(err).exit_code(), 2);
}

#[test]
fn error_classes_map_to_exit_codes() {
    let engine = Engine::open(EngineConfig::default()).unwrap();
    engine.load_fixtures(8).unwrap();
    assert_eq!(engine.run("SELEC x").unwrap_err().exit_code(), 3);
    assert_eq!(engine.run("SELECT m.nope FROM movies m").unwrap_err().exit_code(), 4);
    assert_eq!(engine.run("SELECT x.a FROM missing x").unwrap_err().exit_code(), 4);
    assert_eq!(
        engine.run("SELECT m.movie_title FROM movies m WHERE LLM('Is {x}', m.movie_info) = 3").unwrap_err().exit_code(),
        4
    );
}

#[test]
fn result_writers() {
    let engine = Engine::open(EngineConfig::default()).unwrap();
    engine.load_fixtures(12).unwrap();
    let out = engine.run("SELECT r.review_type, COUNT_ME FROM reviews r");
    assert!(out.is_err());
    let out = engine.run("SELECT r.review_type AS kind, r.review_content FROM reviews r WHERE r.review_type = 'Fresh'").unwrap();
    assert_eq!(out.columns, vec!["kind".to_string(), "review_content".to_string()]);

    let mut csv = Vec::new();
    write_csv(&mut csv, &out.columns, &out.rows).unwrap();
    let mut reader = csv::Reader::from_reader(csv.as_slice());
    let records: Vec<csv::StringRecord> = reader.records().map(Result::unwrap).collect();
    assert_eq!(records.len(), 6);
    assert!(records.iter().all(|r| &r[0] == "Fresh"));

    let mut nd = Vec::new();
    write_ndjson(&mut nd, &out.columns, &out.rows).unwrap();
    let lines: Vec<serde_json::Value> =
        String::from_utf8(nd).unwrap().lines().map(|l| serde_json::from_str(l).unwrap()).collect();
    assert_eq!(lines.len(), 6);
    assert_eq!(lines[0]["kind"], "Fresh");
    assert_eq!(lines[0]["review_content"], serde_json::Value::String(out.rows[0][1].render()));

    let mut buf = Vec::new();
    write_ndjson(&mut buf, &["n".to_string()], &[vec![Value::Null], vec![Value::Float(2.5)]]).unwrap();
    assert_eq!(String::from_utf8(buf).unwrap(), "{\"n\":null}\n{\"n\":2.5}\n");
}
