//! End-to-end checks of the command-line interface: exit codes, artifact
//! determinism, and the verify stage's failure modes.

use std::path::{Path, PathBuf};
use std::process::Command;

fn etcon_bin() -> &'static str {
    env!("CARGO_BIN_EXE_etcon")
}

fn run_etcon(args: &[&str]) -> std::process::Output {
    Command::new(etcon_bin())
        .args(args)
        .env_remove("ETCON_OUT")
        .output()
        .expect("binary runs")
}

/// Short-horizon copy of the bundled scenario (fast enough for CLI tests,
/// no overrides needed so simulate/verify hashes line up).
fn write_short_scenario(dir: &Path) -> PathBuf {
    let toml = etcon::bundled::SCENARIO_TOML
        .replace("t_end = 40.0", "t_end = 1.5")
        .replace("step = 2.5e-4", "step = 1e-3");
    let path = dir.join("short.toml");
    std::fs::write(&path, toml).unwrap();
    std::fs::write(
        dir.join("six_agents_graph.txt"),
        etcon::bundled::GRAPH_TXT,
    )
    .unwrap();
    path
}

#[test]
fn design_command_writes_artifact_and_passes() {
    let dir = tempfile::tempdir().unwrap();
    let scenario = write_short_scenario(dir.path());
    let out = dir.path().join("out");
    let result = run_etcon(&[
        "design",
        "--scenario",
        scenario.to_str().unwrap(),
        "--out",
        out.to_str().unwrap(),
    ]);
    assert!(result.status.success(), "{result:?}");
    assert!(out.join("design.json").exists());
    let stdout = String::from_utf8_lossy(&result.stdout);
    assert!(stdout.contains("PASS"));
    assert!(!stdout.contains("FAIL"));
}

#[test]
fn design_rejects_graph_without_spanning_tree() {
    let dir = tempfile::tempdir().unwrap();
    let toml = r#"
schema = "etcon.scenario.v1"
[graph]
agents = 3
edges = [[1, 2]]
[dynamics]
a = [[0.0]]
b = [[1.0]]
[trigger]
beta = 1.0
lambda = 0.1
[simulation]
t_end = 1.0
x0 = [[1.0], [0.0], [-1.0]]
"#;
    let path = dir.path().join("no_tree.toml");
    std::fs::write(&path, toml).unwrap();
    let result = run_etcon(&["design", "--scenario", path.to_str().unwrap()]);
    assert!(!result.status.success());
    let stderr = String::from_utf8_lossy(&result.stderr);
    assert!(
        stderr.contains("spanning tree"),
        "diagnostic should name the hypothesis: {stderr}"
    );
}

#[test]
fn design_rejects_uncontrollable_pair() {
    let dir = tempfile::tempdir().unwrap();
    let toml = r#"
schema = "etcon.scenario.v1"
[graph]
agents = 2
edges = [[1, 2], [2, 1]]
[dynamics]
a = [[1.0, 0.0], [0.0, 2.0]]
b = [[0.0], [0.0]]
[trigger]
beta = 1.0
lambda = 0.1
[simulation]
t_end = 1.0
x0 = [[1.0, 0.0], [0.0, 1.0]]
"#;
    let path = dir.path().join("uncontrollable.toml");
    std::fs::write(&path, toml).unwrap();
    let result = run_etcon(&["design", "--scenario", path.to_str().unwrap()]);
    assert!(!result.status.success());
    let stderr = String::from_utf8_lossy(&result.stderr);
    assert!(
        stderr.contains("not controllable"),
        "diagnostic should name controllability: {stderr}"
    );
}

#[test]
fn bounds_command_rejects_gamma_below_beta() {
    let dir = tempfile::tempdir().unwrap();
    let toml = etcon::bundled::SCENARIO_TOML.replace("gamma = 12.0", "gamma = 2.0");
    let path = dir.path().join("bad_gamma.toml");
    std::fs::write(&path, toml).unwrap();
    std::fs::write(dir.path().join("six_agents_graph.txt"), etcon::bundled::GRAPH_TXT).unwrap();
    let result = run_etcon(&["bounds", "--scenario", path.to_str().unwrap()]);
    assert!(!result.status.success());
    let stderr = String::from_utf8_lossy(&result.stderr);
    assert!(stderr.contains("gamma"), "{stderr}");
}

#[test]
fn simulate_then_verify_round_trip_passes() {
    let dir = tempfile::tempdir().unwrap();
    let scenario = write_short_scenario(dir.path());
    let out = dir.path().join("artifacts");
    let sim = run_etcon(&[
        "simulate",
        "--scenario",
        scenario.to_str().unwrap(),
        "--out",
        out.to_str().unwrap(),
    ]);
    assert!(sim.status.success(), "{sim:?}");
    for f in ["trace.csv", "events.csv", "run_meta.json", "bounds.json", "design.json"] {
        assert!(out.join(f).exists(), "{f} missing");
    }
    let verify = run_etcon(&[
        "verify",
        "--scenario",
        scenario.to_str().unwrap(),
        "--artifacts",
        out.to_str().unwrap(),
    ]);
    let stdout = String::from_utf8_lossy(&verify.stdout);
    assert!(verify.status.success(), "verify failed:\n{stdout}");
    assert!(out.join("report.json").exists());
    assert!(out.join("report.txt").exists());
    assert!(stdout.contains("PASS  threshold_envelope"));
}

#[test]
fn verify_detects_injected_sub_tau_gap() {
    let dir = tempfile::tempdir().unwrap();
    let scenario = write_short_scenario(dir.path());
    let out = dir.path().join("artifacts");
    let sim = run_etcon(&[
        "simulate",
        "--scenario",
        scenario.to_str().unwrap(),
        "--out",
        out.to_str().unwrap(),
    ]);
    assert!(sim.status.success());

    // Duplicate a triggered event a hair later: a sub-tau gap.
    let events_path = out.join("events.csv");
    let text = std::fs::read_to_string(&events_path).unwrap();
    let mut lines: Vec<String> = text.lines().map(String::from).collect();
    let victim = lines
        .iter()
        .filter(|l| !l.starts_with('#') && !l.starts_with("agent"))
        .find(|l| l.split(',').nth(1).unwrap() != "0")
        .expect("a triggered event exists")
        .clone();
    let mut fields: Vec<String> = victim.split(',').map(String::from).collect();
    let t: f64 = fields[1].parse().unwrap();
    fields[1] = format!("{}", t + 1e-9);
    fields[2] = format!("{}", t + 1e-9);
    lines.push(fields.join(","));
    std::fs::write(&events_path, lines.join("\n") + "\n").unwrap();

    let verify = run_etcon(&[
        "verify",
        "--scenario",
        scenario.to_str().unwrap(),
        "--artifacts",
        out.to_str().unwrap(),
    ]);
    assert!(!verify.status.success());
    let stdout = String::from_utf8_lossy(&verify.stdout);
    assert!(
        stdout.contains("FAIL  zeno_free_inter_event_bound"),
        "zeno check should fail by name:\n{stdout}"
    );
}

#[test]
fn verify_rejects_mismatched_scenario_hash() {
    let dir = tempfile::tempdir().unwrap();
    let scenario = write_short_scenario(dir.path());
    let out = dir.path().join("artifacts");
    assert!(run_etcon(&[
        "simulate",
        "--scenario",
        scenario.to_str().unwrap(),
        "--out",
        out.to_str().unwrap(),
    ])
    .status
    .success());
    // Verifying against a different effective configuration must fail fast.
    let verify = run_etcon(&[
        "verify",
        "--scenario",
        scenario.to_str().unwrap(),
        "--artifacts",
        out.to_str().unwrap(),
        "--t-end",
        "2.5",
    ]);
    assert!(!verify.status.success());
    let stderr = String::from_utf8_lossy(&verify.stderr);
    assert!(stderr.contains("hash mismatch"), "{stderr}");
}

#[test]
fn oversized_delay_runs_but_verify_flags_envelope() {
    let dir = tempfile::tempdir().unwrap();
    let scenario = write_short_scenario(dir.path());
    let out = dir.path().join("artifacts");
    // d is far beyond the admissible bound (~0.002); the run proceeds and
    // the verify stage reports the delayed-envelope violation.
    let sim = run_etcon(&[
        "simulate",
        "--scenario",
        scenario.to_str().unwrap(),
        "--out",
        out.to_str().unwrap(),
        "--delay",
        "0.1",
    ]);
    assert!(sim.status.success(), "oversized delay must still simulate");
    let verify = run_etcon(&[
        "verify",
        "--scenario",
        scenario.to_str().unwrap(),
        "--artifacts",
        out.to_str().unwrap(),
        "--delay",
        "0.1",
    ]);
    assert!(!verify.status.success());
    let stdout = String::from_utf8_lossy(&verify.stdout);
    assert!(
        stdout.contains("FAIL  delayed_envelope"),
        "delayed envelope should fail:\n{stdout}"
    );
    assert!(stdout.contains("no (envelope checked empirically)"));
}

#[test]
fn simulate_is_byte_deterministic() {
    let dir = tempfile::tempdir().unwrap();
    let scenario = write_short_scenario(dir.path());
    let out_a = dir.path().join("a");
    let out_b = dir.path().join("b");
    for out in [&out_a, &out_b] {
        assert!(run_etcon(&[
            "simulate",
            "--scenario",
            scenario.to_str().unwrap(),
            "--out",
            out.to_str().unwrap(),
        ])
        .status
        .success());
    }
    for f in ["trace.csv", "events.csv", "bounds.json", "design.json"] {
        let a = std::fs::read(out_a.join(f)).unwrap();
        let b = std::fs::read(out_b.join(f)).unwrap();
        assert_eq!(a, b, "{f} differs between identical runs");
    }
}

#[test]
fn reproduce_paper_smoke_with_short_horizon() {
    let dir = tempfile::tempdir().unwrap();
    let result = run_etcon(&[
        "reproduce-paper",
        "--out",
        dir.path().to_str().unwrap(),
        "--t-end",
        "2",
        "--step",
        "1e-3",
    ]);
    let stdout = String::from_utf8_lossy(&result.stdout);
    assert!(result.status.success(), "{stdout}");
    assert!(stdout.contains("PASS  published-p-design-inequality"));
    assert!(stdout.contains("PASS  published-bound-reproduction"));
    assert!(dir.path().join("summary.txt").exists());
    assert!(dir.path().join("six_agents.toml").exists());

    // Delay-free variant exercises the undelayed pipeline only.
    let dir2 = tempfile::tempdir().unwrap();
    let result = run_etcon(&[
        "reproduce-paper",
        "--out",
        dir2.path().to_str().unwrap(),
        "--delay-free",
        "--t-end",
        "2",
        "--step",
        "1e-3",
    ]);
    let stdout = String::from_utf8_lossy(&result.stdout);
    assert!(result.status.success(), "{stdout}");
    assert!(!stdout.contains("delayed-envelope"));

    // Seeded x0: invariants hold, values differ.
    let dir3 = tempfile::tempdir().unwrap();
    let result = run_etcon(&[
        "reproduce-paper",
        "--out",
        dir3.path().to_str().unwrap(),
        "--seed",
        "11",
        "--t-end",
        "2",
        "--step",
        "1e-3",
    ]);
    let stdout = String::from_utf8_lossy(&result.stdout);
    assert!(result.status.success(), "{stdout}");
}

#[test]
fn out_dir_env_var_is_honored() {
    let dir = tempfile::tempdir().unwrap();
    let scenario = write_short_scenario(dir.path());
    let out = dir.path().join("env-out");
    let result = Command::new(etcon_bin())
        .args(["design", "--scenario", scenario.to_str().unwrap()])
        .env("ETCON_OUT", &out)
        .output()
        .unwrap();
    assert!(result.status.success());
    assert!(out.join("design.json").exists());
}
