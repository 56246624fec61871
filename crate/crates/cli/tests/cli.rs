use std::path::PathBuf;
use std::process::Command;

fn corpus(name: &str) -> String {
    PathBuf::from(env!("CARGO_MANIFEST_DIR"))
        .join("../../scenarios")
        .join(name)
        .to_string_lossy()
        .into_owned()
}

fn magnomech(args: &[&str]) -> (i32, String, String) {
    let out = Command::new(env!("CARGO_BIN_EXE_magnomech"))
        .args(args)
        .output()
        .unwrap();
    (
        out.status.code().unwrap(),
        String::from_utf8(out.stdout).unwrap(),
        String::from_utf8(out.stderr).unwrap(),
    )
}

#[test]
fn simulate_keeps_the_charged_particle_on_its_circle() {
    let dir = tempfile::tempdir().unwrap();
    let csv = dir.path().join("traj.csv");
    let (code, _, err) = magnomech(&[
        "simulate",
        &corpus("charged-particle.json"),
        "--field",
        "magnetic",
        "--t-end",
        "62.83",
        "--dt",
        "0.001",
        "--out",
        csv.to_str().unwrap(),
    ]);
    assert_eq!(code, 0, "{err}");
    let text = std::fs::read_to_string(&csv).unwrap();
    let mut lines = text.lines();
    assert_eq!(
        lines.next().unwrap(),
        "t,q1,q2,p1,p2,H,constraint_res,drift"
    );
    let last: Vec<f64> = lines
        .last()
        .unwrap()
        .split(',')
        .map(|x| x.parse().unwrap())
        .collect();
    assert!((last[0] - 62.83).abs() < 1e-12);
    let radius = (last[3] * last[3] + last[4] * last[4]).sqrt();
    assert!((radius - 1.0).abs() < 1e-6, "{radius}");
}

#[test]
fn broken_gamma_is_vacuous_with_exit_zero() {
    let dir = tempfile::tempdir().unwrap();
    let report = dir.path().join("r.json");
    let (code, out, _) = magnomech(&[
        "check",
        "hj1",
        &corpus("broken-gamma.json"),
        "--report",
        report.to_str().unwrap(),
    ]);
    assert_eq!(code, 0);
    assert!(out.contains("VACUOUS"));
    let json: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(report).unwrap()).unwrap();
    assert_eq!(json["verdict"], "VACUOUS");
    assert!(json["failed_hypotheses"]
        .as_array()
        .unwrap()
        .iter()
        .any(|h| h == "closedness"));
}

#[test]
fn invalid_scenario_exits_two_with_json() {
    let dir = tempfile::tempdir().unwrap();
    let bad = dir.path().join("bad.json");
    let text = std::fs::read_to_string(corpus("charged-particle.json"))
        .unwrap()
        .replace("[-1, 0]", "[-3, 0]");
    std::fs::write(&bad, text).unwrap();
    let (code, _, err) = magnomech(&["check", "geometry", bad.to_str().unwrap()]);
    assert_eq!(code, 2);
    let json: serde_json::Value = serde_json::from_str(err.trim()).unwrap();
    assert_eq!(json["error"], "antisymmetry_violation");
    assert_eq!(json["violations"][0]["path"], "b_field[0][1]");
}

#[test]
fn usage_and_missing_file_errors_are_machine_readable() {
    let (code, _, err) = magnomech(&["check", "hj3", "x.json"]);
    assert_eq!(code, 2);
    assert_eq!(
        serde_json::from_str::<serde_json::Value>(err.trim()).unwrap()["error"],
        "usage"
    );
    let (code, _, err) = magnomech(&["check", "hj1", "/nonexistent/scenario.json"]);
    assert_eq!(code, 2);
    assert_eq!(
        serde_json::from_str::<serde_json::Value>(err.trim()).unwrap()["error"],
        "io_error"
    );
}

#[test]
fn reduced_check_without_symmetry_is_an_input_error() {
    let (code, _, err) = magnomech(&[
        "check",
        "hj1",
        &corpus("charged-particle.json"),
        "--reduced",
    ]);
    assert_eq!(code, 2);
    assert!(err.contains("invalid_argument"));
}

#[test]
fn construct_b_output_passes_type_one() {
    let dir = tempfile::tempdir().unwrap();
    let src = dir.path().join("src.json");
    std::fs::write(
        &src,
        r#"{"name": "lin", "n": 2, "potential": "-0.5*((q2 + 1)^2 + q1^2)",
            "gamma": ["q2 + 1", "-q1"], "sample_box": [[-1, 1], [-1, 1]]}"#,
    )
    .unwrap();
    let out = dir.path().join("out.json");
    let (code, _, err) = magnomech(&[
        "construct-b",
        src.to_str().unwrap(),
        "--out",
        out.to_str().unwrap(),
    ]);
    assert_eq!(code, 0, "{err}");
    let spec: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(&out).unwrap()).unwrap();
    // B = −dγ with dγ₁₂ = ∂₁γ₂ − ∂₂γ₁ = −2.
    assert_eq!(spec["b_field"][0][1], 2.0);
    let (code, stdout, _) = magnomech(&["check", "hj1", out.to_str().unwrap()]);
    assert_eq!(code, 0);
    assert!(stdout.contains("PASS"), "{stdout}");
}

#[test]
fn check_all_is_deterministic_under_a_seed() {
    let dir = tempfile::tempdir().unwrap();
    let run = |name: &str, seed: &str| {
        let path = dir.path().join(name);
        let (code, _, _) = magnomech(&[
            "check",
            "all",
            &corpus(""),
            "--seed",
            seed,
            "--report",
            path.to_str().unwrap(),
        ]);
        assert_eq!(code, 0);
        let mut v: serde_json::Value =
            serde_json::from_str(&std::fs::read_to_string(path).unwrap()).unwrap();
        strip_wall_time(&mut v);
        v
    };
    assert_eq!(run("a.json", "7"), run("b.json", "7"));
    assert_ne!(run("a.json", "7"), run("c.json", "8"));
}

fn strip_wall_time(v: &mut serde_json::Value) {
    match v {
        serde_json::Value::Object(m) => {
            m.remove("wall_time_s");
            m.values_mut().for_each(strip_wall_time);
        }
        serde_json::Value::Array(a) => a.iter_mut().for_each(strip_wall_time),
        _ => {}
    }
}

#[test]
fn constrained_simulation_reports_drift() {
    let dir = tempfile::tempdir().unwrap();
    let csv = dir.path().join("t.csv");
    let (code, out, _) = magnomech(&[
        "simulate",
        &corpus("nh-magnetic-particle.json"),
        "--field",
        "distributional",
        "--t-end",
        "1",
        "--dt",
        "0.05",
        "--no-project",
        "--out",
        csv.to_str().unwrap(),
    ]);
    assert_eq!(code, 0);
    assert!(out.contains("max drift"));
}
