use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

fn fixture(name: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR"))
        .join("tests/fixtures")
        .join(name)
}

fn symroute(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_symroute"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn path(p: &Path) -> &str {
    p.to_str().expect("utf-8 path")
}

const ARTIFACTS: [&str; 5] = [
    "calibration.json",
    "thresholds.json",
    "audit.jsonl",
    "metrics.json",
    "risk_coverage.csv",
];

#[test]
fn run_matches_golden_files() {
    let dir = tempfile::tempdir().unwrap();
    let out = symroute(&[
        "run",
        "--input",
        path(&fixture("cohort.csv")),
        "--out-dir",
        path(dir.path()),
    ]);
    assert!(
        out.status.success(),
        "{}",
        String::from_utf8_lossy(&out.stderr)
    );
    for name in ARTIFACTS {
        let got = fs::read(dir.path().join(name)).unwrap();
        let want = fs::read(fixture("golden").join(name)).unwrap();
        assert!(got == want, "{name} differs from the golden copy");
    }
}

#[test]
fn staged_commands_reproduce_run() {
    let dir = tempfile::tempdir().unwrap();
    let d = path(dir.path());
    let input = fixture("cohort.csv");
    let cal = dir.path().join("calibration.json");
    let thr = dir.path().join("thresholds.json");
    for args in [
        vec!["calibrate", "--input", path(&input), "--out-dir", d],
        vec![
            "fit-thresholds",
            "--input",
            path(&input),
            "--calibration",
            path(&cal),
            "--out-dir",
            d,
        ],
        vec![
            "evaluate",
            "--input",
            path(&input),
            "--calibration",
            path(&cal),
            "--thresholds",
            path(&thr),
            "--out-dir",
            d,
        ],
    ] {
        let out = symroute(&args);
        assert!(
            out.status.success(),
            "{args:?}: {}",
            String::from_utf8_lossy(&out.stderr)
        );
    }
    for name in ARTIFACTS {
        assert_eq!(
            fs::read(dir.path().join(name)).unwrap(),
            fs::read(fixture("golden").join(name)).unwrap(),
            "{name}"
        );
    }
}

#[test]
fn tampered_snapshot_is_a_contract_violation() {
    let dir = tempfile::tempdir().unwrap();
    let thr = dir.path().join("thresholds.json");
    let text = fs::read_to_string(fixture("golden/thresholds.json")).unwrap();
    let tampered = text.replacen("\"tau_c\": 1.0", "\"tau_c\": 0.5", 1);
    assert_ne!(text, tampered);
    fs::write(&thr, tampered).unwrap();
    let out = symroute(&[
        "route",
        "--input",
        path(&fixture("cohort.csv")),
        "--calibration",
        path(&fixture("golden/calibration.json")),
        "--thresholds",
        path(&thr),
        "--out-dir",
        path(dir.path()),
    ]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("digest"));
}

#[test]
fn input_errors_exit_with_one() {
    let dir = tempfile::tempdir().unwrap();
    let bad = dir.path().join("bad.csv");
    fs::write(&bad, "sample_id,subject_id\n").unwrap();
    let out = symroute(&["ingest", "--input", path(&bad)]);
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stderr).contains("schema"));

    let out = symroute(&["run", "--input", path(&dir.path().join("missing.csv"))]);
    assert_eq!(out.status.code(), Some(1));

    let out = symroute(&["run", "--no-such-flag"]);
    assert_eq!(out.status.code(), Some(1));
}

#[test]
fn config_file_overrides_flags() {
    let dir = tempfile::tempdir().unwrap();
    let config = dir.path().join("config.json");
    fs::write(&config, r#"{"alpha": 0.1}"#).unwrap();
    let out = symroute(&[
        "calibrate",
        "--input",
        path(&fixture("cohort.csv")),
        "--alpha",
        "0.3",
        "--config",
        path(&config),
        "--out-dir",
        path(dir.path()),
    ]);
    assert!(
        out.status.success(),
        "{}",
        String::from_utf8_lossy(&out.stderr)
    );
    let snapshot: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(dir.path().join("calibration.json")).unwrap())
            .unwrap();
    assert_eq!(snapshot["alpha"], 0.1);

    fs::write(&config, r#"{"alhpa": 0.1}"#).unwrap();
    let out = symroute(&[
        "calibrate",
        "--input",
        path(&fixture("cohort.csv")),
        "--config",
        path(&config),
    ]);
    assert_eq!(out.status.code(), Some(1));
}

#[test]
fn ingest_round_trips_through_csv() {
    let dir = tempfile::tempdir().unwrap();
    let copy = dir.path().join("copy.csv");
    let out = symroute(&[
        "ingest",
        "--input",
        path(&fixture("cohort.csv")),
        "--output",
        path(&copy),
    ]);
    assert!(out.status.success());
    let report: serde_json::Value = serde_json::from_slice(&out.stdout).unwrap();
    assert_eq!(report["rows"], 320);
    assert_eq!(
        fs::read(&copy).unwrap(),
        fs::read(fixture("cohort.csv")).unwrap()
    );
}

#[test]
fn anchor_eval_reports_every_method() {
    let out = symroute(&[
        "anchor-eval",
        "--input",
        path(&fixture("longitudinal.csv")),
        "--n-anchor",
        "2",
    ]);
    assert!(
        out.status.success(),
        "{}",
        String::from_utf8_lossy(&out.stderr)
    );
    let reports: serde_json::Value = serde_json::from_slice(&out.stdout).unwrap();
    let methods: Vec<&str> = reports
        .as_array()
        .unwrap()
        .iter()
        .map(|r| r["method"].as_str().unwrap())
        .collect();
    assert_eq!(
        methods,
        [
            "last_anchor",
            "anchor_mean",
            "mean_predictor",
            "personalized_lsq"
        ]
    );
    assert!(reports[0]["exclusions"]["subjects_total"].as_u64().unwrap() == 12);

    let out = symroute(&[
        "anchor-eval",
        "--input",
        path(&fixture("longitudinal.csv")),
        "--n-anchor",
        "0",
        "--method",
        "last-anchor",
    ]);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn segment_emits_windows() {
    let out = symroute(&[
        "segment",
        "--input",
        path(&fixture("stream.csv")),
        "--fog-gamma",
        "0.5",
    ]);
    assert!(out.status.success());
    let text = String::from_utf8(out.stdout).unwrap();
    let lines: Vec<&str> = text.lines().collect();
    assert_eq!(lines[0], "index,start,len,positive_rate,label");
    // (600 - 256) / 64 + 1
    assert_eq!(lines.len() - 1, 6);
    assert!(lines[1..].iter().any(|l| l.ends_with(",1")));

    let out = symroute(&[
        "segment",
        "--input",
        path(&fixture("stream.csv")),
        "--fog-gamma",
        "1.5",
    ]);
    assert_eq!(out.status.code(), Some(1));
}

#[test]
fn synth_is_seeded() {
    let dir = tempfile::tempdir().unwrap();
    let a = dir.path().join("a.csv");
    let b = dir.path().join("b.csv");
    for p in [&a, &b] {
        assert!(symroute(&[
            "synth",
            "--seed",
            "7",
            "--n-subjects",
            "40",
            "--samples-per-subject",
            "8",
            "--output",
            path(p)
        ])
        .status
        .success());
    }
    assert_eq!(fs::read(&a).unwrap(), fs::read(&b).unwrap());
    assert_eq!(
        fs::read(&a).unwrap(),
        fs::read(fixture("cohort.csv")).unwrap()
    );
}
