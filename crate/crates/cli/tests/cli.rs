use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use dosctrl_core::control::ControllerKind;
use dosctrl_core::dos::gen_pulse_train;
use dosctrl_core::scenario::Scenario;
use serde_json::Value;

fn dosctrl(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_dosctrl"))
        .args(args)
        .env_remove("DOSCTRL_SEED")
        .output()
        .unwrap()
}

fn write_scenario(dir: &Path, name: &str, s: &Scenario) -> PathBuf {
    let p = dir.join(name);
    fs::write(&p, s.to_json().unwrap()).unwrap();
    p
}

/// Stdout must be exactly one line holding the written path.
fn output_path(out: &Output) -> PathBuf {
    let stdout = String::from_utf8(out.stdout.clone()).unwrap();
    let lines: Vec<&str> = stdout.lines().collect();
    assert_eq!(lines.len(), 1, "stdout: {stdout:?}");
    PathBuf::from(lines[0])
}

fn read_json(p: &Path) -> Value {
    serde_json::from_str(&fs::read_to_string(p).unwrap()).unwrap()
}

fn short(kind: ControllerKind, t_end: f64) -> Scenario {
    let mut s = Scenario::reference(kind);
    s.sim.t_end = t_end;
    s
}

#[test]
fn certify_exit_codes() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path().to_str().unwrap();

    let cfg = write_scenario(dir.path(), "analog.json", &Scenario::reference(ControllerKind::Analog));
    let out = dosctrl(&["certify", "--config", cfg.to_str().unwrap(), "--out", d]);
    assert_eq!(out.status.code(), Some(0));
    let report = read_json(&output_path(&out));
    assert!((report["main_lhs"].as_f64().unwrap() - 0.8793).abs() < 5e-4);
    assert_eq!(report["certified"], true);

    let cfg = write_scenario(dir.path(), "static.json", &Scenario::reference(ControllerKind::Static));
    let out = dosctrl(&["certify", "--config", cfg.to_str().unwrap(), "--out", d]);
    assert_eq!(out.status.code(), Some(2));
    let report = read_json(&output_path(&out));
    assert!((report["static_bound"].as_f64().unwrap() - 0.0321).abs() < 1e-3);

    let cfg = write_scenario(
        dir.path(),
        "digital.json",
        &Scenario::reference(ControllerKind::Digital { b: 10 }),
    );
    let out = dosctrl(&["certify", "--config", cfg.to_str().unwrap(), "--out", d]);
    assert_eq!(out.status.code(), Some(0));
    let report = read_json(&output_path(&out));
    assert!((report["controller_period"].as_f64().unwrap() - 0.01).abs() < 1e-15);
    assert!(report["delta_bound"].as_f64().unwrap() > 0.01);

    let bad = dir.path().join("bad.json");
    fs::write(&bad, "{\"plant\": 3}").unwrap();
    let out = dosctrl(&["certify", "--config", bad.to_str().unwrap(), "--out", d]);
    assert_eq!(out.status.code(), Some(1));
    assert!(out.stdout.is_empty());
    assert!(!out.stderr.is_empty());

    let out = dosctrl(&["certify", "--config", dir.path().join("missing.json").to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(1));
}

#[test]
fn simulate_writes_trace_and_metrics() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_scenario(dir.path(), "s.json", &short(ControllerKind::Analog, 10.0));
    let out_dir = dir.path().join("run");
    let out = dosctrl(&[
        "simulate",
        "--config",
        cfg.to_str().unwrap(),
        "--out",
        out_dir.to_str().unwrap(),
    ]);
    assert_eq!(out.status.code(), Some(0));
    let metrics = read_json(&output_path(&out));
    assert_eq!(metrics["diverged"], false);
    assert!(metrics["sup_x_after_5"].as_f64().unwrap() < 1.0);

    let trace = fs::read_to_string(out_dir.join("trace.csv")).unwrap();
    let mut lines = trace.lines();
    assert_eq!(
        lines.next().unwrap(),
        "t,x1,x2,est1,est2,u1,u2,dos,attempt,success,err_norm"
    );
    assert_eq!(lines.count(), 10_001);
}

#[test]
fn static_divergence_is_a_result() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_scenario(dir.path(), "s.json", &Scenario::reference(ControllerKind::Static));
    let out = dosctrl(&[
        "simulate",
        "--config",
        cfg.to_str().unwrap(),
        "--out",
        dir.path().to_str().unwrap(),
    ]);
    assert_eq!(out.status.code(), Some(0));
    let metrics = read_json(&output_path(&out));
    assert_eq!(metrics["diverged"], true);
    assert!(metrics["sup_x"].as_f64().unwrap() > 1e6);
}

#[test]
fn round_trip_and_seed_overrides() {
    let dir = tempfile::tempdir().unwrap();
    let digest = |cfg: &Path, extra: &[&str], env_seed: Option<&str>| {
        let out_dir = tempfile::tempdir_in(dir.path()).unwrap();
        let mut cmd = Command::new(env!("CARGO_BIN_EXE_dosctrl"));
        cmd.args([
            "simulate",
            "--config",
            cfg.to_str().unwrap(),
            "--out",
            out_dir.path().to_str().unwrap(),
        ])
        .args(extra)
        .env_remove("DOSCTRL_SEED");
        if let Some(s) = env_seed {
            cmd.env("DOSCTRL_SEED", s);
        }
        let out = cmd.output().unwrap();
        assert_eq!(out.status.code(), Some(0));
        read_json(&output_path(&out))["trace_digest"]
            .as_str()
            .unwrap()
            .to_string()
    };

    let original = short(ControllerKind::Digital { b: 10 }, 3.0);
    let first = write_scenario(dir.path(), "a.json", &original);
    let reread = Scenario::from_json(&fs::read_to_string(&first).unwrap()).unwrap();
    let second = write_scenario(dir.path(), "b.json", &reread);

    let base = digest(&first, &[], None);
    assert_eq!(base, digest(&second, &[], None));

    let flagged = digest(&first, &["--seed", "3"], None);
    assert_ne!(flagged, base);
    assert_eq!(flagged, digest(&first, &[], Some("3")));
    assert_eq!(flagged, digest(&first, &["--seed", "3"], Some("4")));

    let explicit = write_scenario(dir.path(), "c.json", &original.clone().with_seed(3));
    assert_eq!(flagged, digest(&explicit, &[], None));
}

#[test]
fn smaller_noise_tightens_the_error_band() {
    let dir = tempfile::tempdir().unwrap();
    let sup_err = |bound: f64| {
        let mut s = short(ControllerKind::Analog, 20.0);
        s.noise.d_bound = bound;
        s.noise.n_bound = bound;
        let cfg = write_scenario(dir.path(), &format!("n{bound}.json"), &s);
        let out_dir = dir.path().join(format!("n{bound}"));
        let out = dosctrl(&[
            "simulate",
            "--config",
            cfg.to_str().unwrap(),
            "--out",
            out_dir.to_str().unwrap(),
        ]);
        read_json(&output_path(&out))["sup_err_after_z0"].as_f64().unwrap()
    };
    assert!(sup_err(0.01) < sup_err(0.1));
}

#[test]
fn dos_fit_documents() {
    let dir = tempfile::tempdir().unwrap();
    let fit = |file: &Path, extra: &[&str]| {
        let out_dir = tempfile::tempdir_in(dir.path()).unwrap();
        let mut args = vec![
            "dos-fit",
            "--input",
            file.to_str().unwrap(),
            "--out",
            out_dir.path().to_str().unwrap(),
        ];
        args.extend_from_slice(extra);
        let out = dosctrl(&args);
        assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
        (read_json(&output_path(&out)), String::from_utf8(out.stderr).unwrap())
    };

    let empty = dir.path().join("empty.csv");
    fs::write(&empty, "h,tau\n").unwrap();
    let (doc, _) = fit(&empty, &["--tau-d", "0.5", "--t", "2"]);
    assert_eq!(doc["budget"]["eta"], 0.0);
    assert_eq!(doc["budget"]["kappa"], 0.0);

    let pulses = dir.path().join("pulses.csv");
    let mut buf = Vec::new();
    gen_pulse_train(0.1, 10.0).unwrap().write_csv(&mut buf).unwrap();
    fs::write(&pulses, buf).unwrap();
    let (doc, _) = fit(&pulses, &["--tau-d", "0.1", "--t", "unbounded", "--delta", "0.1"]);
    assert!((doc["budget"]["eta"].as_f64().unwrap() - 1.0).abs() < 1e-9);
    assert!(doc["budget"]["kappa"].as_f64().unwrap().abs() < 1e-12);
    assert_eq!(doc["budget"]["t"], "unbounded");
    assert_eq!(doc["feasible"], false);

    let (sig, _) = Scenario::reference(ControllerKind::Analog).signal(None).unwrap();
    let generated = dir.path().join("generated.csv");
    let mut buf = Vec::new();
    sig.write_csv(&mut buf).unwrap();
    fs::write(&generated, buf).unwrap();
    let (doc, _) = fit(
        &generated,
        &["--tau-d", "0.96", "--t", "1.29", "--delta", "0.1", "--horizon", "50"],
    );
    assert_eq!(doc["feasible"], true);
    assert!(doc["q_deadline"].as_f64().unwrap() > 0.0);

    let messy = dir.path().join("messy.csv");
    fs::write(&messy, "h,tau\n3.0,1.0\n1.0,0.5\n1.2,0.1\n").unwrap();
    let (doc, stderr) = fit(&messy, &["--tau-d", "1", "--t", "2"]);
    assert_eq!(doc["intervals"], 2);
    assert_eq!(doc["reordered"], true);
    assert_eq!(doc["merged"], 1);
    assert!(stderr.contains("warning"));

    let bad = dir.path().join("bad.csv");
    fs::write(&bad, "start,len\n1,2\n").unwrap();
    let out = dosctrl(&["dos-fit", "--input", bad.to_str().unwrap(), "--tau-d", "1", "--t", "2"]);
    assert_eq!(out.status.code(), Some(1));
}

#[test]
fn reproduce_iv_summary() {
    let dir = tempfile::tempdir().unwrap();
    let out = dosctrl(&["reproduce-iv", "--out", dir.path().to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(0));
    let summary = read_json(&output_path(&out));

    let c = &summary["constants"];
    let near = |v: &Value, want: f64, tol: f64| assert!((v.as_f64().unwrap() - want).abs() <= tol, "{v} vs {want}");
    assert_eq!(c["gamma1"], 1.0);
    near(&c["gamma2"], 2.1080, 5e-4);
    near(&c["alpha1"], 0.2779, 5e-4);
    near(&c["alpha2"], 0.4497, 5e-4);
    near(&c["phi_norm"], 1.9021, 5e-4);
    near(&c["mu_a"], 1.5, 1e-9);
    near(&c["sigma_max"], 0.4744, 1e-4);
    near(&c["delta_bound"], 0.1508, 1e-3);
    near(&c["static_bound"], 0.0321, 1e-3);
    near(&c["main_lhs_nominal"], 0.8793, 5e-4);

    let fr = summary["dos"]["failure_rate"].as_f64().unwrap();
    assert!((0.75..=0.85).contains(&fr));

    let runs = summary["runs"].as_array().unwrap();
    assert_eq!(runs.len(), 3);
    for run in runs {
        let diverged = run["metrics"]["diverged"].as_bool().unwrap();
        let is_static = run["report"]["controller"] == "static";
        assert_eq!(diverged, is_static);
        assert!(dir.path().join(run["trace"].as_str().unwrap()).exists());
    }
}
