use std::fs;
use std::path::Path;
use std::process::{Command, Output};

fn trl(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_trl"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn stdout(out: &Output) -> String {
    String::from_utf8(out.stdout.clone()).unwrap()
}

const SMALL_RUN: &str = r#"{
  "name": "small",
  "system": {"kind": "doubling"},
  "measure": {"kind": "lebesgue"},
  "schedule": {"kind": "power", "c": "1/10", "a": 2},
  "twist": {"kind": "tent"},
  "horizon": 24,
  "samples": 1500,
  "seed": 5
}"#;

fn write_config(dir: &Path, text: &str) -> String {
    let path = dir.join("config.json");
    fs::write(&path, text).unwrap();
    path.to_string_lossy().into_owned()
}

#[test]
fn rn_mass_prints_the_exact_table() {
    let out = trl(&["--horizon", "3", "rn-mass", "--schedule", "constant:1/10"]);
    assert!(out.status.success());
    let text = stdout(&out);
    let mut lines = text.lines();
    assert_eq!(lines.next(), Some("n,M_n,mu_Rn,|diff|,bound_3p"));
    let row2: Vec<&str> = lines.nth(1).unwrap().split(',').collect();
    assert_eq!(row2[0], "2");
    assert_eq!(row2[2].parse::<f64>().unwrap(), 7.0 / 60.0);
}

#[test]
fn pairwise_is_a_product_for_dyadic_balls() {
    let out = trl(&[
        "pairwise",
        "--schedule",
        "constant:1/8",
        "--twist",
        "constant:1/2",
        "--n",
        "5",
        "--m",
        "5..7",
    ]);
    assert!(out.status.success());
    let text = stdout(&out);
    let rows: Vec<&str> = text.lines().skip(1).collect();
    assert_eq!(rows.len(), 3);
    for row in rows {
        let cols: Vec<&str> = row.split(',').collect();
        assert_eq!(cols[3], "1/64");
        assert_eq!(cols[7], "false");
    }
}

#[test]
fn run_writes_a_bundle_and_is_repeatable() {
    let dir = tempfile::tempdir().unwrap();
    let config = write_config(dir.path(), SMALL_RUN);
    let a = dir.path().join("a");
    let b = dir.path().join("b");
    let first = trl(&["--out-dir", a.to_str().unwrap(), "run", &config]);
    assert!(
        first.status.success(),
        "{}",
        String::from_utf8_lossy(&first.stderr)
    );
    assert!(stdout(&first).contains("convergent-zero-evidence"));
    let second = trl(&[
        "--threads",
        "3",
        "--out-dir",
        b.to_str().unwrap(),
        "run",
        &config,
    ]);
    assert!(second.status.success());
    for name in ["report.json", "masses.csv", "hits.csv", "quasi.csv"] {
        let (x, y) = (
            fs::read(a.join(name)).unwrap(),
            fs::read(b.join(name)).unwrap(),
        );
        assert_eq!(x, y, "{name} differs");
    }
    let header = fs::read_to_string(a.join("hits.csv")).unwrap();
    assert!(header.starts_with("seed_index,hit_count,first_hit,last_hit\n"));
    let report: serde_json::Value =
        serde_json::from_slice(&fs::read(a.join("report.json")).unwrap()).unwrap();
    assert_eq!(report["verdict"], "convergent-zero-evidence");
}

#[test]
fn json_format_writes_only_the_report() {
    let dir = tempfile::tempdir().unwrap();
    let config = write_config(dir.path(), SMALL_RUN);
    let out_dir = dir.path().join("out");
    let out = trl(&[
        "--out-dir",
        out_dir.to_str().unwrap(),
        "run",
        &config,
        "--format",
        "json",
    ]);
    assert!(out.status.success());
    let names: Vec<_> = fs::read_dir(&out_dir)
        .unwrap()
        .map(|e| e.unwrap().file_name())
        .collect();
    assert_eq!(names, vec!["report.json"]);
}

#[test]
fn strict_flags_failed_hypotheses() {
    let args = [
        "--horizon",
        "10",
        "--samples",
        "300",
        "rn-mass",
        "--system",
        "rotation:13/31",
    ];
    assert_eq!(trl(&args).status.code(), Some(0));
    let mut strict = vec!["--strict"];
    strict.extend(args);
    assert_eq!(trl(&strict).status.code(), Some(2));
}

#[test]
fn bad_input_exits_with_one() {
    let out = trl(&["rn-mass", "--system", "cat-map"]);
    assert_eq!(out.status.code(), Some(1));
    let dir = tempfile::tempdir().unwrap();
    let config = write_config(dir.path(), r#"{"name": "x", "horizon": 0}"#);
    let out = trl(&["run", &config]);
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stderr).contains("error"));
}
