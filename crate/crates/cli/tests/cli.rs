use std::fs;
use std::path::Path;
use std::process::{Command, Output};

fn drn(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_drn"))
        .args(args)
        .output()
        .unwrap()
}

fn ok(args: &[&str]) -> String {
    let out = drn(args);
    assert!(
        out.status.success(),
        "{args:?}: {}",
        String::from_utf8_lossy(&out.stderr)
    );
    String::from_utf8(out.stdout).unwrap()
}

fn p(path: &Path) -> &str {
    path.to_str().unwrap()
}

fn generate_and_ingest(dir: &Path, extra: &str) -> String {
    let cfg = dir.join("gen.cfg");
    fs::write(&cfg, format!("sle = 39\nses = 37\nlle = 148\n{extra}")).unwrap();
    ok(&[
        "generate",
        "--config",
        p(&cfg),
        "--seed",
        "4",
        "--out",
        p(dir),
    ]);
    let survey = dir.join("survey.csv");
    let codebook = dir.join("codebook.toml");
    ok(&[
        "ingest",
        "--input",
        p(&survey),
        "--codebook",
        p(&codebook),
        "--mode",
        "star",
        "--out",
        p(dir),
    ])
}

#[test]
fn ingest_summary_counts_groups() {
    let tmp = tempfile::tempdir().unwrap();
    let summary = generate_and_ingest(tmp.path(), "");
    assert!(
        summary.contains("| SLE | State Law Enforcement | 39 |"),
        "{summary}"
    );
    assert!(summary.contains("| SES | State Emergency Services | 37 |"));
    assert!(summary.contains("| LLE | Local Law Enforcement | 148 |"));
    assert!(summary.contains("| Total |  | 224 |"));
}

#[test]
fn empty_input_exits_with_input_error() {
    let tmp = tempfile::tempdir().unwrap();
    let empty = tmp.path().join("empty.csv");
    fs::write(&empty, "").unwrap();
    let out = drn(&["ingest", "--input", p(&empty), "--out", p(tmp.path())]);
    assert_eq!(out.status.code(), Some(2));
    assert!(!String::from_utf8_lossy(&out.stderr).is_empty());
}

#[test]
fn bad_row_is_reported_with_location() {
    let tmp = tempfile::tempdir().unwrap();
    generate_and_ingest(tmp.path(), "");
    let survey = tmp.path().join("survey.csv");
    let mut text = fs::read_to_string(&survey).unwrap();
    text = text.replacen("SLE", "XYZ", 2);
    fs::write(&survey, text).unwrap();
    let codebook = tmp.path().join("codebook.toml");
    let out = drn(&[
        "ingest",
        "--input",
        p(&survey),
        "--codebook",
        p(&codebook),
        "--out",
        p(tmp.path()),
    ]);
    assert_eq!(out.status.code(), Some(2));
    let err = String::from_utf8_lossy(&out.stderr);
    assert!(err.contains("survey.csv") && err.contains("line"), "{err}");
}

#[test]
fn missing_stages_and_preconditions_have_distinct_codes() {
    let tmp = tempfile::tempdir().unwrap();
    let out = drn(&["h2", "--out", p(tmp.path())]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("ingest.json"));

    generate_and_ingest(tmp.path(), "");
    let out = drn(&["h2", "--out", p(tmp.path()), "--clusters", "100000000"]);
    assert_eq!(
        out.status.code(),
        Some(3),
        "{}",
        String::from_utf8_lossy(&out.stderr)
    );
    let out = drn(&["h2", "--out", p(tmp.path()), "--clusters", "0"]);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn json_only_report_has_no_markdown() {
    let tmp = tempfile::tempdir().unwrap();
    let dir = tmp.path();
    generate_and_ingest(dir, "coupling = 0.8\n");
    for stage in ["h1", "h2", "h3", "report"] {
        ok(&[stage, "--out", p(dir), "--seed", "4", "--format", "json"]);
    }
    assert!(dir.join("report.json").is_file());
    assert!(!dir.join("report.md").exists());
    assert!(!dir.join("h2.md").exists());
    assert!(!dir.join("h2_agency.csv").exists());
    let report: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(dir.join("report.json")).unwrap()).unwrap();
    assert_eq!(report["provenance"]["h3"]["seed"], 4);
    assert_eq!(report["provenance"]["mode"], "star");
}

#[test]
fn full_run_markdown_has_every_table() {
    let tmp = tempfile::tempdir().unwrap();
    let dir = tmp.path();
    generate_and_ingest(dir, "coupling = 0.8\n");
    for stage in ["h1", "h2", "h3", "report"] {
        ok(&[stage, "--out", p(dir), "--seed", "4"]);
    }
    let md = fs::read_to_string(dir.join("report.md")).unwrap();
    for heading in [
        "### Respondents",
        "### Cliques of the organization network",
        "### Clique co-membership",
        "### Interconnectedness by agency group",
        "### Interconnectedness by cluster",
        "### Readiness by cluster",
        "### Connectedness and coordination, all respondents",
        "### Connectedness and coordination, merged clusters",
    ] {
        assert!(md.contains(heading), "{heading}");
    }
    assert!(md.contains("| EgoBetweenness | x | 1 |"));

    let again = tempfile::tempdir().unwrap();
    generate_and_ingest(again.path(), "coupling = 0.8\n");
    for stage in ["h1", "h2", "h3", "report"] {
        ok(&[stage, "--out", p(again.path()), "--seed", "4"]);
    }
    assert_eq!(
        fs::read(dir.join("report.md")).unwrap(),
        fs::read(again.path().join("report.md")).unwrap()
    );
    assert_eq!(
        fs::read(dir.join("report.json")).unwrap(),
        fs::read(again.path().join("report.json")).unwrap()
    );
}

#[test]
fn mode_mismatch_is_rejected() {
    let tmp = tempfile::tempdir().unwrap();
    generate_and_ingest(tmp.path(), "");
    let out = drn(&["h1", "--out", p(tmp.path()), "--mode", "aggregate"]);
    assert_eq!(out.status.code(), Some(2));
    let out = drn(&["h1", "--out", p(tmp.path()), "--mode", "ring"]);
    assert_eq!(out.status.code(), Some(2));
}
