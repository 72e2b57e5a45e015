use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use kvqa_core::pipeline::artifacts::read_json;
use kvqa_core::pipeline::DatasetFile;

fn fixture() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../fixtures/mini")
}

fn copy_dir(from: &Path, to: &Path) {
    std::fs::create_dir_all(to).unwrap();
    for entry in std::fs::read_dir(from).unwrap() {
        let entry = entry.unwrap();
        let name = entry.file_name();
        if name == "work" || name == "cache" {
            continue;
        }
        let target = to.join(name);
        if entry.file_type().unwrap().is_dir() {
            copy_dir(&entry.path(), &target);
        } else {
            std::fs::copy(entry.path(), target).unwrap();
        }
    }
}

fn kvqa(dir: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_kvqa"))
        .current_dir(dir)
        .args(args)
        .output()
        .unwrap()
}

fn code(out: &Output) -> i32 {
    out.status.code().unwrap()
}

fn stdout(out: &Output) -> String {
    String::from_utf8_lossy(&out.stdout).into_owned()
}

#[test]
fn help_and_version_exit_zero() {
    let dir = tempfile::tempdir().unwrap();
    let out = kvqa(dir.path(), &["--help"]);
    assert_eq!(code(&out), 0);
    assert!(stdout(&out).contains("convert-okvqa"));
    assert_eq!(code(&kvqa(dir.path(), &["--version"])), 0);
}

#[test]
fn run_stages_and_report_on_fixture_copy() {
    let dir = tempfile::tempdir().unwrap();
    copy_dir(&fixture(), dir.path());
    let out = kvqa(dir.path(), &["run"]);
    assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stderr));
    let text = stdout(&out);
    assert!(text.contains("ingest: 10/10 questions"), "{text}");
    assert!(text.contains("mean soft score: "), "{text}");
    for name in [
        "report.json",
        "report.md",
        "decisions.jsonl",
        "checkpoint.json",
    ] {
        assert!(dir.path().join("work").join(name).exists(), "{name}");
    }
    assert!(dir.path().join("cache/wikipedia").is_dir());

    // single stages against the existing artifacts, offline on the warm cache
    let out = kvqa(dir.path(), &["--offline", "--work-dir", "work", "retrieve"]);
    assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stderr));
    let out = kvqa(dir.path(), &["evaluate"]);
    assert_eq!(code(&out), 0);
    assert!(stdout(&out).contains("mean soft score: "));
    let out = kvqa(dir.path(), &["report"]);
    assert_eq!(code(&out), 0);
    assert!(stdout(&out).contains("| Oracle |"));
}

#[test]
fn configuration_and_usage_errors_exit_one() {
    let dir = tempfile::tempdir().unwrap();
    assert_eq!(code(&kvqa(dir.path(), &["run"])), 1, "missing config");
    std::fs::write(
        dir.path().join("config.toml"),
        "seed = 1\nunknown_key = 2\n",
    )
    .unwrap();
    let out = kvqa(dir.path(), &["run"]);
    assert_eq!(code(&out), 1);
    assert!(String::from_utf8_lossy(&out.stderr).contains("unknown_key"));
    std::fs::write(dir.path().join("config.toml"), "[retrieval]\nm = 0\n").unwrap();
    assert_eq!(code(&kvqa(dir.path(), &["run"])), 1, "invalid value");
    assert_eq!(code(&kvqa(dir.path(), &["no-such-command"])), 1);
    assert_eq!(code(&kvqa(dir.path(), &["--seed", "x", "run"])), 1);
}

#[test]
fn missing_artifacts_exit_two() {
    let dir = tempfile::tempdir().unwrap();
    copy_dir(&fixture(), dir.path());
    let out = kvqa(dir.path(), &["--work-dir", "empty", "validate"]);
    assert_eq!(code(&out), 2);
    assert!(String::from_utf8_lossy(&out.stderr).starts_with("error: "));
}

#[test]
fn excessive_failures_exit_three() {
    let dir = tempfile::tempdir().unwrap();
    copy_dir(&fixture(), dir.path());
    let scores = dir.path().join("scores.jsonl");
    let kept: Vec<String> = std::fs::read_to_string(&scores)
        .unwrap()
        .lines()
        .skip(3)
        .map(String::from)
        .collect();
    std::fs::write(&scores, kept.join("\n")).unwrap();
    let out = kvqa(dir.path(), &["ingest"]);
    assert_eq!(code(&out), 3, "{}", String::from_utf8_lossy(&out.stderr));
}

#[test]
fn convert_okvqa_writes_a_dataset() {
    let dir = tempfile::tempdir().unwrap();
    std::fs::write(
        dir.path().join("q.json"),
        r#"{"questions": [{"image_id": 7, "question": "What is this?", "question_id": 70}]}"#,
    )
    .unwrap();
    let answers: Vec<String> = (0..10)
        .map(|i| format!(r#"{{"answer": "a{i}"}}"#))
        .collect();
    std::fs::write(
        dir.path().join("a.json"),
        format!(
            r#"{{"annotations": [{{"question_id": 70, "answers": [{}]}}]}}"#,
            answers.join(",")
        ),
    )
    .unwrap();
    let out = kvqa(
        dir.path(),
        &[
            "convert-okvqa",
            "--questions",
            "q.json",
            "--annotations",
            "a.json",
            "--split",
            "val",
            "--output",
            "out/dataset.json",
        ],
    );
    assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stderr));
    let file: DatasetFile = read_json(&dir.path().join("out/dataset.json")).unwrap();
    let q = &file.questions[0];
    assert_eq!(q.question_id, "70");
    assert_eq!(q.objects_file, Path::new("objects/7.json"));
    assert_eq!(q.annotations, ["a0", "a2", "a4", "a6", "a8"]);
    assert_eq!(q.split.as_deref(), Some("val"));
    let out = kvqa(
        dir.path(),
        &[
            "convert-okvqa",
            "--questions",
            "missing.json",
            "--annotations",
            "a.json",
            "--output",
            "x.json",
        ],
    );
    assert_eq!(code(&out), 2);
}
