use std::path::Path;

use mdd_eval::cli::{default_manifest_text, env_overrides, CliError, Manifest, EXIT_MISSING, EXIT_VALIDATION};
use mdd_eval::encoder::OptimizerKind;

fn domains() -> Vec<String> {
    ["cafe", "travel"].map(String::from).to_vec()
}

fn parse(env: &[(&str, &str)], sets: &[&str]) -> Result<Manifest, CliError> {
    let env = env_overrides(env.iter().map(|(k, v)| (k.to_string(), v.to_string())));
    let sets: Vec<String> = sets.iter().map(|s| s.to_string()).collect();
    Manifest::from_str_with(&default_manifest_text(&domains()), Path::new("/data"), &env, &sets)
}

#[test]
fn default_manifest_round_trips() {
    let m = parse(&[], &[]).unwrap();
    assert_eq!(m.paths.base, Path::new("/data/base.jsonl"));
    assert_eq!(m.paths.corpora["travel"], Path::new("/data/corpora/travel.jsonl"));
    assert_eq!(m.paths.providers.len(), 2);
    assert_eq!(m.config, mdd_eval::pipeline::PipelineConfig::default());
}

#[test]
fn set_overrides_env_and_env_overrides_file() {
    let m = parse(&[("TEACHER__EPOCHS", "7"), ("STUDENT__LR", "0.5")], &["teacher.epochs=9"]).unwrap();
    assert_eq!(m.config.teacher.epochs, 9);
    assert_eq!(m.config.student.lr, 0.5);

    let m = parse(&[("TEACHER__OPTIMIZER", "sgd"), ("PIPELINE__PARALLELISM", "3")], &[]).unwrap();
    assert_eq!(m.config.teacher.optimizer, OptimizerKind::Sgd);
    assert_eq!(m.config.parallelism, 3);
}

#[test]
fn unrelated_env_vars_are_ignored() {
    let parsed = env_overrides([("HOME".to_string(), "/root".to_string()), ("CARGO__X".into(), "1".into())]);
    assert!(parsed.is_empty());
}

#[test]
fn invalid_values_are_validation_errors() {
    let err = parse(&[], &["student.confidence_threshold=1.5"]).unwrap_err();
    assert_eq!(err.exit_code(), EXIT_VALIDATION);
    let err = parse(&[], &["teacher.epochs"]).unwrap_err();
    assert_eq!(err.exit_code(), EXIT_VALIDATION);
    let err = parse(&[], &["paths.base_domain=\"nowhere\""]).unwrap_err();
    assert_eq!(err.exit_code(), EXIT_VALIDATION);
}

#[test]
fn missing_inputs_map_to_exit_code_3() {
    let dir = tempfile::tempdir().unwrap();
    let text = default_manifest_text(&domains());
    let m = Manifest::from_str_with(&text, dir.path(), &[], &[]).unwrap();
    let err = mdd_eval::cli::train_teacher_stage(&m).unwrap_err();
    assert_eq!(err.exit_code(), EXIT_MISSING, "{err}");
    let err = mdd_eval::cli::pseudo_label_stage(&m, false).unwrap_err();
    assert_eq!(err.exit_code(), EXIT_MISSING, "{err}");
}
