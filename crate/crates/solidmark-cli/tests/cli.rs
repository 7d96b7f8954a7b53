//! CLI round-trip and error-surface tests. The byte-level idempotence of
//! every command lives in the acceptance suite.

use std::path::Path;
use std::process::Command;

fn solidmark(args: &[&str]) -> std::process::Output {
    Command::new(env!("CARGO_BIN_EXE_solidmark"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn path_str(p: &Path) -> String {
    p.to_string_lossy().into_owned()
}

#[test]
fn generate_augment_load_round_trip() {
    let dir = tempfile::tempdir().unwrap();
    let base = dir.path().join("base");
    let aug = dir.path().join("aug");
    let out = solidmark(&[
        "dataset",
        "generate",
        "--out",
        &path_str(&base),
        "--count",
        "6",
        "--base-size",
        "16",
        "--classes",
        "2",
        "--seed",
        "3",
    ]);
    assert!(out.status.success());
    let out = solidmark(&[
        "dataset",
        "augment",
        "--dataset",
        &path_str(&base),
        "--out",
        &path_str(&aug),
        "--thickness",
        "2",
    ]);
    assert!(out.status.success());

    let loaded = solidmark::imgdata::load_dataset(&aug).unwrap();
    assert_eq!(loaded.len(), 6);
    assert!(loaded.meta.pattern.is_some());
    assert_eq!(loaded.items[0].image.height, 20);
    loaded.require_keymap().unwrap();
}

#[test]
fn duplicate_echoes_provenance_in_manifest() {
    let dir = tempfile::tempdir().unwrap();
    let base = dir.path().join("base");
    let dup = dir.path().join("dup");
    assert!(solidmark(&[
        "dataset",
        "generate",
        "--out",
        &path_str(&base),
        "--count",
        "4",
        "--base-size",
        "16",
        "--seed",
        "1",
    ])
    .status
    .success());
    assert!(solidmark(&[
        "dataset",
        "duplicate",
        "--dataset",
        &path_str(&base),
        "--out",
        &path_str(&dup),
        "--id",
        "img-000001",
        "--count",
        "3",
    ])
    .status
    .success());
    let manifest = std::fs::read_to_string(dup.join("manifest.jsonl")).unwrap();
    let provenance_lines = manifest
        .lines()
        .filter(|l| l.contains("\"provenance\":\"img-000001\""))
        .count();
    assert_eq!(provenance_lines, 2, "two duplicates carry provenance");
}

#[test]
fn invalid_thickness_is_rejected_naming_the_field() {
    let dir = tempfile::tempdir().unwrap();
    let base = dir.path().join("base");
    assert!(solidmark(&[
        "dataset",
        "generate",
        "--out",
        &path_str(&base),
        "--count",
        "2",
        "--base-size",
        "16",
    ])
    .status
    .success());
    let out = solidmark(&[
        "dataset",
        "augment",
        "--dataset",
        &path_str(&base),
        "--out",
        &path_str(&dir.path().join("aug")),
        "--thickness",
        "0",
    ]);
    assert!(!out.status.success());
    let stderr = String::from_utf8_lossy(&out.stderr);
    assert!(
        stderr.contains("thickness"),
        "error must name the offending field, got: {stderr}"
    );
}

#[test]
fn train_fails_fast_without_a_keymap() {
    let dir = tempfile::tempdir().unwrap();
    let base = dir.path().join("base");
    assert!(solidmark(&[
        "dataset",
        "generate",
        "--out",
        &path_str(&base),
        "--count",
        "2",
        "--base-size",
        "16",
    ])
    .status
    .success());
    std::fs::remove_file(base.join("keymap.json")).unwrap();
    let out = solidmark(&[
        "train",
        "--dataset",
        &path_str(&base),
        "--out",
        &path_str(&dir.path().join("model")),
        "--epochs",
        "1",
    ]);
    assert!(!out.status.success());
    let stderr = String::from_utf8_lossy(&out.stderr);
    assert!(stderr.contains("keymap absent"), "got: {stderr}");
}

#[test]
fn evaluate_rejects_oversized_subset() {
    let dir = tempfile::tempdir().unwrap();
    let base = dir.path().join("base");
    let aug = dir.path().join("aug");
    let model = dir.path().join("model");
    for args in [
        vec![
            "dataset",
            "generate",
            "--out",
            &path_str(&base),
            "--count",
            "4",
            "--base-size",
            "16",
            "--seed",
            "2",
        ],
        vec![
            "dataset",
            "augment",
            "--dataset",
            &path_str(&base),
            "--out",
            &path_str(&aug),
            "--thickness",
            "2",
        ],
        vec![
            "train",
            "--dataset",
            &path_str(&aug),
            "--out",
            &path_str(&model),
            "--epochs",
            "1",
            "--batch-size",
            "2",
            "--timesteps",
            "50",
            "--base-channels",
            "4",
        ],
    ] {
        let out = solidmark(&args.iter().map(|s| s as &str).collect::<Vec<_>>());
        assert!(out.status.success(), "{args:?}");
    }
    let out = solidmark(&[
        "evaluate",
        "--checkpoint",
        &path_str(&model.join("checkpoint.bin")),
        "--dataset",
        &path_str(&aug),
        "--out",
        &path_str(&dir.path().join("eval")),
        "--subset-size",
        "10",
        "--steps",
        "5",
    ]);
    assert!(!out.status.success());
    let stderr = String::from_utf8_lossy(&out.stderr);
    assert!(stderr.contains("subset size"), "got: {stderr}");
}

#[test]
fn unknown_experiment_name_lists_alternatives() {
    let out = solidmark(&["experiment", "bogus", "--out", "/tmp/x"]);
    assert!(!out.status.success());
    let stderr = String::from_utf8_lossy(&out.stderr);
    // clap surfaces the valid subcommands in its usage output.
    assert!(
        stderr.contains("duplication") || stderr.contains("Usage"),
        "got: {stderr}"
    );
}

#[test]
fn pathology_needs_no_model() {
    let dir = tempfile::tempdir().unwrap();
    let out = solidmark(&[
        "experiment",
        "pathology",
        "--out",
        &path_str(dir.path()),
        "--seed",
        "4",
    ]);
    assert!(out.status.success());
    assert!(dir.path().join("pathology.json").exists());
}
