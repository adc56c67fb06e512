use std::path::PathBuf;
use std::process::{Command, Output};

fn ceforge(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_ceforge"))
        .args(args)
        .output()
        .unwrap()
}

fn data(rel: &str) -> String {
    PathBuf::from(env!("CARGO_MANIFEST_DIR"))
        .join("data")
        .join(rel)
        .to_string_lossy()
        .into_owned()
}

#[test]
fn gen_is_byte_identical_on_repeat() {
    let dir = tempfile::tempdir().unwrap();
    let a = dir.path().join("a.json");
    let b = dir.path().join("b.json");
    for p in [&a, &b] {
        let out = ceforge(&[
            "gen",
            "--seed",
            "4",
            "--stages",
            "800",
            "--out",
            p.to_str().unwrap(),
        ]);
        assert!(out.status.success());
    }
    assert_eq!(std::fs::read(&a).unwrap(), std::fs::read(&b).unwrap());
}

#[test]
fn run_writes_trace_and_report() {
    let dir = tempfile::tempdir().unwrap();
    let sc = dir.path().join("s.json");
    let tr = dir.path().join("t.jsonl");
    let rep = dir.path().join("r.json");
    assert!(ceforge(&[
        "gen",
        "--seed",
        "2",
        "--stages",
        "600",
        "--out",
        sc.to_str().unwrap()
    ])
    .status
    .success());
    let out = ceforge(&[
        "run",
        "--scenario",
        sc.to_str().unwrap(),
        "--engine",
        "dual",
        "--trace-out",
        tr.to_str().unwrap(),
        "--report-out",
        rep.to_str().unwrap(),
    ]);
    assert_eq!(
        out.status.code(),
        Some(0),
        "{}",
        String::from_utf8_lossy(&out.stderr)
    );
    let report = std::fs::read_to_string(&rep).unwrap();
    assert!(report.contains("\"pass\": true"));
    let out = ceforge(&[
        "audit",
        "--scenario",
        sc.to_str().unwrap(),
        "--trace",
        tr.to_str().unwrap(),
    ]);
    assert_eq!(out.status.code(), Some(0));
}

#[test]
fn scripted_trace_matches_reference() {
    let dir = tempfile::tempdir().unwrap();
    let tr = dir.path().join("t.jsonl");
    let out = ceforge(&[
        "run",
        "--scenario",
        &data("scripted/dual8.json"),
        "--engine",
        "dual",
        "--trace-out",
        tr.to_str().unwrap(),
    ]);
    assert_eq!(out.status.code(), Some(0));
    assert_eq!(
        std::fs::read_to_string(&tr).unwrap(),
        std::fs::read_to_string(data("scripted/dual8.trace.jsonl")).unwrap()
    );
}

#[test]
fn audit_failure_exits_3() {
    let out = ceforge(&[
        "audit",
        "--scenario",
        &data("scripted/single6.json"),
        "--trace",
        &data("negative/marker_decrease.trace.jsonl"),
    ]);
    assert_eq!(out.status.code(), Some(3));
    assert!(String::from_utf8_lossy(&out.stderr).contains("marker_monotonicity"));
}

#[test]
fn malformed_input_exits_2_and_names_the_invariant() {
    let dir = tempfile::tempdir().unwrap();
    let sc = dir.path().join("heavy.json");
    std::fs::write(&sc, r#"{"stages": 3, "universal_events": [[0, "0", ""]]}"#).unwrap();
    let out = ceforge(&["run", "--scenario", sc.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(2));
    let err = String::from_utf8_lossy(&out.stderr);
    assert!(err.contains("universal_events"), "{err}");

    let out = ceforge(&["run", "--scenario", "/nonexistent/scenario.json"]);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn kc_and_encode_real() {
    let dir = tempfile::tempdir().unwrap();
    let req = dir.path().join("req.txt");
    std::fs::write(&req, "1\t1\n0\t2\n1\t2\n").unwrap();
    let out = ceforge(&["kc", req.to_str().unwrap()]);
    assert!(out.status.success());
    assert_eq!(
        String::from_utf8_lossy(&out.stdout),
        "0\t1\t0\n10\t0\t1\n11\t1\t2\n"
    );

    std::fs::write(&req, "1\t1\n0\t1\n1\t1\n").unwrap();
    let out = ceforge(&["kc", req.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("Kraft inequality"));

    let real = dir.path().join("real.txt");
    std::fs::write(&real, "00\n00\n10\n").unwrap();
    let out = ceforge(&["encode-real", real.to_str().unwrap()]);
    assert!(out.status.success());
    assert_eq!(String::from_utf8_lossy(&out.stdout), "0\t2\n");
}
