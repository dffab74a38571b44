use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

fn fixtures() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../fixtures")
}

fn fixture(name: &str) -> String {
    fixtures().join(name).to_string_lossy().into_owned()
}

fn clinspan(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_clinspan"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn stderr(out: &Output) -> String {
    String::from_utf8_lossy(&out.stderr).into_owned()
}

fn path(p: &Path) -> &str {
    p.to_str().unwrap()
}

#[test]
fn split_writes_three_files() {
    let dir = tempfile::tempdir().unwrap();
    let out = clinspan(&[
        "split",
        "--in",
        &fixture("corpus.jsonl"),
        "--out-dir",
        path(dir.path()),
    ]);
    assert_eq!(out.status.code(), Some(0), "{}", stderr(&out));
    let mut total = 0;
    for name in ["train", "validation", "test"] {
        let file = dir.path().join(format!("corpus.{name}.jsonl"));
        total += fs::read_to_string(&file).unwrap().lines().count();
    }
    assert_eq!(total, 5);
}

#[test]
fn unknown_flag_is_a_usage_error() {
    let out = clinspan(&["ingest", "--in", &fixture("corpus.jsonl"), "--frobnicate"]);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn missing_input_is_a_usage_error() {
    let out = clinspan(&["ingest", "--in", "/nonexistent/corpus.jsonl"]);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn out_of_bounds_span_names_the_document() {
    let out = clinspan(&["ingest", "--in", &fixture("out_of_bounds.jsonl")]);
    assert_eq!(out.status.code(), Some(1));
    let err = stderr(&out);
    assert!(err.contains("`b2`"), "{err}");
    assert!(err.contains("out of bounds"), "{err}");
}

#[test]
fn evaluate_and_report_match_golden_output() {
    let dir = tempfile::tempdir().unwrap();
    let eval = dir.path().join("eval");
    let out = clinspan(&[
        "evaluate",
        "--gold",
        &fixture("corpus.jsonl"),
        "--interchange",
        &fixture("interchange.jsonl"),
        "--out",
        path(&eval),
    ]);
    assert_eq!(out.status.code(), Some(0), "{}", stderr(&out));

    let golden = fixtures().join("golden");
    for (format, name) in [
        ("txt", "report.txt"),
        ("csv", "report.csv"),
        ("md", "report.md"),
    ] {
        let target = dir.path().join(name);
        let charts = dir.path().join("charts");
        let out = clinspan(&[
            "report",
            "--in",
            path(&eval),
            "--format",
            format,
            "--out",
            path(&target),
            "--charts",
            path(&charts),
        ]);
        assert_eq!(out.status.code(), Some(0), "{}", stderr(&out));
        assert_eq!(
            fs::read(&target).unwrap(),
            fs::read(golden.join(name)).unwrap(),
            "{name}"
        );
        for chart in ["charts.json", "hits_pie.csv", "comparison_bar.csv"] {
            assert_eq!(
                fs::read(charts.join(chart)).unwrap(),
                fs::read(golden.join(chart)).unwrap(),
                "{chart}"
            );
        }
    }
}

#[test]
fn thread_count_does_not_change_results() {
    let dir = tempfile::tempdir().unwrap();
    let mut evaluations = Vec::new();
    let mut tagged = Vec::new();
    for jobs in ["1", "4"] {
        let eval = dir.path().join(format!("eval{jobs}"));
        let out = clinspan(&[
            "--jobs",
            jobs,
            "evaluate",
            "--gold",
            &fixture("corpus.jsonl"),
            "--interchange",
            &fixture("interchange.jsonl"),
            "--out",
            path(&eval),
        ]);
        assert_eq!(out.status.code(), Some(0), "{}", stderr(&out));
        evaluations.push(fs::read(eval.join("evaluation.json")).unwrap());

        let tags = dir.path().join(format!("tags{jobs}.jsonl"));
        let out = clinspan(&[
            "--jobs",
            jobs,
            "tag",
            "--dict",
            &fixture("dictionary.csv"),
            "--in",
            &fixture("corpus.jsonl"),
            "--out",
            path(&tags),
        ]);
        assert_eq!(out.status.code(), Some(0), "{}", stderr(&out));
        tagged.push(fs::read(tags).unwrap());
    }
    assert_eq!(evaluations[0], evaluations[1]);
    assert_eq!(tagged[0], tagged[1]);
}

#[test]
fn dictionary_tagging_recovers_fixture_entities() {
    let dir = tempfile::tempdir().unwrap();
    let tags = dir.path().join("tags.jsonl");
    let out = clinspan(&[
        "tag",
        "--dict",
        &fixture("dictionary.csv"),
        "--in",
        &fixture("corpus.jsonl"),
        "--out",
        path(&tags),
    ]);
    assert_eq!(out.status.code(), Some(0), "{}", stderr(&out));
    assert!(stderr(&out).contains("duplicate `Disnea`"));
    let eval = dir.path().join("eval");
    let out = clinspan(&[
        "evaluate",
        "--gold",
        &fixture("corpus.jsonl"),
        "--pred",
        path(&tags),
        "--out",
        path(&eval),
    ]);
    assert_eq!(out.status.code(), Some(0), "{}", stderr(&out));
    assert!(stderr(&out).contains("tp 13 fp 0 fn 0"), "{}", stderr(&out));
}

#[test]
fn compare_from_tallies_reports_the_hit_fraction() {
    let dir = tempfile::tempdir().unwrap();
    let tallies = dir.path().join("tallies.csv");
    fs::write(
        &tallies,
        "label,real,correct,incorrect\nMET,10,9,1\nPAT,5,5,0\nNO_LABEL,0,1,0\n",
    )
    .unwrap();
    let out = clinspan(&["compare", "--tallies", path(&tallies), "--format", "csv"]);
    assert_eq!(out.status.code(), Some(0), "{}", stderr(&out));
    let text = String::from_utf8_lossy(&out.stdout).into_owned() + &stderr(&out);
    assert!(text.contains("15/16"), "{text}");
    assert!(text.contains("93.8"), "{text}");
}

#[test]
fn conll_conversion_round_trips_through_doccano() {
    let dir = tempfile::tempdir().unwrap();
    let conll = dir.path().join("corpus.conll");
    let back = dir.path().join("back.jsonl");
    let out = clinspan(&[
        "convert",
        "--in",
        &fixture("corpus.jsonl"),
        "--out",
        path(&conll),
    ]);
    assert_eq!(out.status.code(), Some(0), "{}", stderr(&out));
    let out = clinspan(&[
        "convert",
        "--in",
        path(&conll),
        "--out",
        path(&back),
        "--to",
        "doccano",
    ]);
    assert_eq!(out.status.code(), Some(0), "{}", stderr(&out));
    let out = clinspan(&["ingest", "--in", path(&back)]);
    assert_eq!(out.status.code(), Some(0), "{}", stderr(&out));
    // r5 has no entities but still has tokens, so every document comes back.
    assert!(
        stderr(&out).contains("5 documents, 13 spans"),
        "{}",
        stderr(&out)
    );
}
