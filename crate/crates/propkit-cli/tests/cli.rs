//! Black-box tests for the `propkit` binary: subcommand surface, exit codes,
//! settings layering (defaults < config file < flags), and the effective
//! config and error artifacts every run leaves behind.

use std::path::{Path, PathBuf};
use std::process::Output;

use propkit::fixture;
use propkit::tree::{read_trees_jsonl, write_trees_jsonl};

fn propkit(args: &[&str]) -> Output {
    std::process::Command::new(env!("CARGO_BIN_EXE_propkit"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn run_ok(args: &[&str]) -> Output {
    let output = propkit(args);
    assert!(
        output.status.success(),
        "command {:?} failed\nstderr: {}",
        args,
        String::from_utf8_lossy(&output.stderr)
    );
    output
}

fn path_str(path: &Path) -> &str {
    path.to_str().expect("utf-8 path")
}

fn read_json(path: &Path) -> serde_json::Value {
    serde_json::from_str(&std::fs::read_to_string(path).unwrap()).unwrap()
}

#[test]
fn help_lists_exactly_the_six_subcommands() {
    let output = run_ok(&["--help"]);
    let text = String::from_utf8(output.stdout).unwrap();

    let commands: Vec<&str> = text
        .lines()
        .skip_while(|line| !line.starts_with("Commands:"))
        .skip(1)
        .take_while(|line| line.starts_with("  "))
        .filter_map(|line| line.split_whitespace().next())
        .collect();
    assert_eq!(
        commands,
        [
            "ingest",
            "split",
            "bep-sample",
            "enhance",
            "eval-prop",
            "detect"
        ],
        "full help text:\n{text}"
    );
}

#[test]
fn usage_errors_exit_with_code_2() {
    let unknown_flag = propkit(&["--definitely-not-a-flag"]);
    assert_eq!(unknown_flag.status.code(), Some(2));

    let missing_required = propkit(&["ingest"]);
    assert_eq!(missing_required.status.code(), Some(2));

    let unknown_subcommand = propkit(&["frobnicate"]);
    assert_eq!(unknown_subcommand.status.code(), Some(2));
}

#[test]
fn hard_failures_exit_with_code_1_and_json_stderr() {
    let output = propkit(&[
        "ingest",
        "--format",
        "nonsense",
        "--in",
        "missing",
        "--out",
        "out.jsonl",
        "--report",
        "report.json",
    ]);
    assert_eq!(output.status.code(), Some(1));
    let stderr = String::from_utf8(output.stderr).unwrap();
    let report: serde_json::Value = serde_json::from_str(stderr.trim()).unwrap();
    assert!(report["error"].as_str().unwrap().contains("unknown format"));
}

#[test]
fn config_file_values_apply_and_flags_override_them() {
    let dir = tempfile::tempdir().unwrap();
    let input = dir.path().join("trees.jsonl");
    let trees = fixture::random_trees(400, 3, 4, 6);
    write_trees_jsonl(&input, &trees).unwrap();

    let config = dir.path().join("settings.toml");
    std::fs::write(&config, "[enhance]\nk = 2\n\n[gateway]\nmode = \"mock\"\n").unwrap();

    // File value k = 2 applies when no flag is given.
    let from_file = dir.path().join("from-file.jsonl");
    run_ok(&[
        "--config",
        path_str(&config),
        "enhance",
        "--in",
        path_str(&input),
        "--out",
        path_str(&from_file),
    ]);
    let effective = read_json(&dir.path().join("from-file.jsonl.effective-config.json"));
    assert_eq!(effective["subcommand"], "enhance");
    assert_eq!(effective["settings"]["enhance"]["k"], 2);
    for (before, after) in trees.iter().zip(read_trees_jsonl(&from_file).unwrap()) {
        assert_eq!(after.node_count(), before.node_count() + 2);
    }

    // The --k flag beats the file value; k = 0 passes input through unchanged.
    let from_flag = dir.path().join("from-flag.jsonl");
    run_ok(&[
        "--config",
        path_str(&config),
        "enhance",
        "--in",
        path_str(&input),
        "--out",
        path_str(&from_flag),
        "--k",
        "0",
    ]);
    let effective = read_json(&dir.path().join("from-flag.jsonl.effective-config.json"));
    assert_eq!(effective["settings"]["enhance"]["k"], 0);
    assert_eq!(
        std::fs::read(&from_flag).unwrap(),
        std::fs::read(&input).unwrap(),
        "k = 0 must be a byte-level passthrough"
    );
}

#[test]
fn config_file_typos_are_rejected() {
    let dir = tempfile::tempdir().unwrap();
    let config = dir.path().join("settings.toml");
    std::fs::write(&config, "[enhance]\nkk = 2\n").unwrap();

    let output = propkit(&[
        "--config",
        path_str(&config),
        "split",
        "--in",
        "x",
        "--out-dir",
        "y",
    ]);
    assert_eq!(output.status.code(), Some(1));
    let stderr = String::from_utf8(output.stderr).unwrap();
    assert!(stderr.contains("settings.toml"), "stderr: {stderr}");
}

#[test]
fn split_honors_ratio_and_seed_flags() {
    let dir = tempfile::tempdir().unwrap();
    let input = dir.path().join("trees.jsonl");
    write_trees_jsonl(&input, &fixture::random_trees(401, 12, 3, 5)).unwrap();

    let out_dir = dir.path().join("splits");
    run_ok(&[
        "split",
        "--in",
        path_str(&input),
        "--out-dir",
        path_str(&out_dir),
        "--ratio",
        "0.5,0.25,0.25",
        "--seed",
        "7",
    ]);

    assert_eq!(
        read_trees_jsonl(out_dir.join("train.jsonl")).unwrap().len(),
        6
    );
    assert_eq!(
        read_trees_jsonl(out_dir.join("val.jsonl")).unwrap().len(),
        3
    );
    assert_eq!(
        read_trees_jsonl(out_dir.join("test.jsonl")).unwrap().len(),
        3
    );

    let effective = read_json(&out_dir.join("split.effective-config.json"));
    assert_eq!(effective["settings"]["manifest"]["split_seed"], 7);
    assert_eq!(effective["settings"]["manifest"]["split_ratio"][0], 0.5);
}

#[test]
fn partial_enhancement_exits_1_and_writes_the_error_list() {
    let dir = tempfile::tempdir().unwrap();
    let input = dir.path().join("trees.jsonl");
    let trees = fixture::random_trees(402, 2, 3, 4);
    write_trees_jsonl(&input, &trees).unwrap();

    // Replaying against an empty record store starves every slot.
    let out = dir.path().join("enriched.jsonl");
    let output = propkit(&[
        "enhance",
        "--in",
        path_str(&input),
        "--out",
        path_str(&out),
        "--mode",
        "replay",
        "--record",
        path_str(&dir.path().join("no-records")),
        "--k",
        "1",
    ]);
    assert_eq!(output.status.code(), Some(1));

    // Machine-readable list on the last stderr line (progress notes precede
    // it) and next to the output file.
    let text = String::from_utf8(output.stderr).unwrap();
    let stderr: serde_json::Value = serde_json::from_str(text.lines().last().unwrap()).unwrap();
    assert_eq!(stderr["partial_failure"], true);
    assert_eq!(stderr["failed_samples"].as_array().unwrap().len(), 2);

    let errors = read_json(&dir.path().join("enriched.jsonl.errors.json"));
    assert_eq!(errors.as_array().unwrap().len(), 2);
    assert_eq!(errors[0]["sample_id"], trees[0].sample_id);

    // Failed trees pass through unchanged so the pipeline stays runnable.
    assert_eq!(std::fs::read(&out).unwrap(), std::fs::read(&input).unwrap());
}

#[test]
fn detect_early_scenario_requires_rho() {
    let dir = tempfile::tempdir().unwrap();
    let input = dir.path().join("trees.jsonl");
    write_trees_jsonl(&input, &fixture::separable_corpus(403, 20)).unwrap();

    let output = propkit(&[
        "detect",
        "--train",
        path_str(&input),
        "--test",
        path_str(&input),
        "--scenario",
        "early",
        "--out",
        path_str(&dir.path().join("report.json")),
    ]);
    assert_eq!(output.status.code(), Some(1));
    let stderr = String::from_utf8(output.stderr).unwrap();
    assert!(stderr.contains("--rho"), "stderr: {stderr}");
}

#[test]
fn detect_writes_report_and_effective_config() {
    let dir = tempfile::tempdir().unwrap();
    let train = dir.path().join("train.jsonl");
    let test = dir.path().join("test.jsonl");
    write_trees_jsonl(&train, &fixture::separable_corpus(404, 40)).unwrap();
    write_trees_jsonl(&test, &fixture::separable_corpus(405, 10)).unwrap();

    let out = dir.path().join("report.json");
    run_ok(&[
        "detect",
        "--train",
        path_str(&train),
        "--test",
        path_str(&test),
        "--scenario",
        "early",
        "--rho",
        "0.6",
        "--out",
        path_str(&out),
    ]);

    let report = read_json(&out);
    assert_eq!(report["detector"], "baseline-logistic");
    assert_eq!(report["scenario"], "early(rho=0.6)");
    assert_eq!(report["evaluated"], 10);

    let effective = read_json(&dir.path().join("report.json.effective-config.json"));
    assert_eq!(effective["settings"]["scenario"]["kind"], "early");
    assert_eq!(effective["settings"]["scenario"]["rho"], 0.6);
    assert_eq!(effective["settings"]["detector"], "baseline-logistic");
}

/// The identity report for the bundled 20-tree corpus is frozen as a fixture;
/// regenerating it through the full binary must reproduce it byte for byte.
#[test]
fn identity_metric_report_matches_the_frozen_fixture() {
    let fixture_dir = PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("tests/fixtures");
    let pheme = PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../propkit/fixtures/pheme20");
    let dir = tempfile::tempdir().unwrap();

    let trees = dir.path().join("trees.jsonl");
    run_ok(&[
        "ingest",
        "--format",
        "pheme_dir",
        "--in",
        path_str(&pheme),
        "--out",
        path_str(&trees),
        "--report",
        path_str(&dir.path().join("report.json")),
    ]);

    let report = dir.path().join("metrics.json");
    let csv = dir.path().join("metrics.csv");
    run_ok(&[
        "eval-prop",
        "--generated",
        path_str(&trees),
        "--originals",
        path_str(&trees),
        "--out",
        path_str(&report),
        "--csv",
        path_str(&csv),
        "--method",
        "identity",
    ]);

    assert_eq!(
        std::fs::read(&report).unwrap(),
        std::fs::read(fixture_dir.join("pheme20_identity_report.json")).unwrap(),
        "metrics.json drifted from the frozen fixture"
    );
    assert_eq!(
        std::fs::read(&csv).unwrap(),
        std::fs::read(fixture_dir.join("pheme20_identity_report.csv")).unwrap(),
        "metrics.csv drifted from the frozen fixture"
    );
}
