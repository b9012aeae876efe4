use std::path::Path;
use std::process::{Command, Output};

use serde_json::Value;

fn run(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_scan2map"))
        .args(args)
        .env_remove("SCAN2MAP_SEED")
        .output()
        .expect("binary runs")
}

fn ok(args: &[&str]) -> Output {
    let out = run(args);
    assert!(
        out.status.success(),
        "scan2map {args:?}: {}",
        String::from_utf8_lossy(&out.stderr)
    );
    out
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

#[test]
fn exit_codes() {
    assert_eq!(run(&["--help"]).status.code(), Some(0));
    assert_eq!(run(&["frobnicate"]).status.code(), Some(1));
    assert_eq!(run(&["synth", "--kind", "castle"]).status.code(), Some(1));
    assert_eq!(run(&["evaluate", "--set", "trials"]).status.code(), Some(1));
    let missing = run(&["register", "--scan", "/nonexistent/a.ply", "--map", "/nonexistent/b.ply"]);
    assert_eq!(missing.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&missing.stderr).contains("a.ply"));
    assert_eq!(run(&["evaluate", "--set", "trials=0"]).status.code(), Some(2));
}

#[test]
fn register_scan_against_its_own_map_is_identity() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    ok(&["synth", "--kind", "clutter", "--density", "20", "--poses", "1", "--output-dir", s(d)]);
    let scan = d.join("scan.ply");
    let sensor = "0,0,1,0,0,0,1";
    ok(&["project", "--map", s(&d.join("scene.ply")), "--pose", sensor, "--output", s(&scan)]);
    let out = ok(&["register", "--scan", s(&scan), "--map", s(&d.join("scene.ply")), "--init", sensor]);
    let result: Value = serde_json::from_slice(&out.stdout).unwrap();
    let rotation: Vec<f64> = serde_json::from_value(result["pose"]["rotation"].clone()).unwrap();
    let translation: Vec<f64> = serde_json::from_value(result["pose"]["translation"].clone()).unwrap();
    let identity = [1.0, 0.0, 0.0, 0.0, 1.0, 0.0, 0.0, 0.0, 1.0];
    assert!(rotation.iter().zip(identity).all(|(a, b)| (a - b).abs() < 1e-9), "{rotation:?}");
    assert!(translation.iter().zip([0.0, 0.0, 1.0]).all(|(a, b)| (a - b).abs() < 1e-9), "{translation:?}");
}

#[test]
fn change_matches_the_planted_fraction() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    ok(&["synth", "--kind", "object_change", "--density", "30", "--change-fraction", "0.05", "--poses", "1", "--output-dir", s(d)]);
    let out_dir = d.join("change");
    ok(&[
        "change",
        "--session",
        s(&d.join("session.ply")),
        "--reference",
        s(&d.join("reference.ply")),
        "--trajectory",
        s(&d.join("trajectory.csv")),
        "--output-dir",
        s(&out_dir),
    ]);
    let report: Value = serde_json::from_str(&std::fs::read_to_string(out_dir.join("change.json")).unwrap()).unwrap();
    let pct = report["per_pose"][0]["change_percent"].as_f64().unwrap();
    assert!((pct - 5.0).abs() < 0.1, "{pct}");
    let csv = std::fs::read_to_string(out_dir.join("change.csv")).unwrap();
    assert!(csv.starts_with("pose_id,change_percent,new_points,ref_points\n"));
}

#[test]
fn evaluate_is_deterministic_and_echoes_a_reusable_config() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    ok(&["synth", "--density", "20", "--poses", "2", "--output-dir", s(&d.join("scene"))]);
    let (map, traj) = (d.join("scene/scene.ply"), d.join("scene/trajectory.csv"));
    let eval = |name: &str, extra: &[&str]| {
        let out = d.join(name);
        let mut args = vec![
            "evaluate",
            "--map",
            s(&map),
            "--trajectory",
            s(&traj),
            "--set",
            "trials=2",
            "--no-plot",
            "--output-dir",
        ];
        args.push(s(&out));
        args.extend_from_slice(extra);
        ok(&args);
        out
    };
    let a = eval("a", &["--seed", "5"]);
    let b = eval("b", &["--seed", "5", "--jobs", "2"]);
    for f in ["report.csv", "report.json"] {
        assert_eq!(std::fs::read(a.join(f)).unwrap(), std::fs::read(b.join(f)).unwrap(), "{f}");
    }
    assert!(!a.join("report.svg").exists());

    // The config stored in the report runs again to the same result.
    let report: Value = serde_json::from_str(&std::fs::read_to_string(a.join("report.json")).unwrap()).unwrap();
    let cfg = d.join("echo.json");
    std::fs::write(&cfg, report["config"].to_string()).unwrap();
    let c = d.join("c");
    ok(&["evaluate", "--config", s(&cfg), "--no-plot", "--output-dir", s(&c)]);
    assert_eq!(std::fs::read(a.join("report.json")).unwrap(), std::fs::read(c.join("report.json")).unwrap());
}
