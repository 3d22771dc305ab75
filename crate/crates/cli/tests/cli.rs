use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use serde_json::Value;

fn data(name: &str) -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../data").join(name)
}

fn outflow(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_outflow")).args(args).output().expect("binary runs")
}

fn json(path: &Path) -> Value {
    serde_json::from_str(&std::fs::read_to_string(path).unwrap()).unwrap()
}

fn floats(v: &Value) -> Vec<f64> {
    v.as_array().unwrap().iter().map(|x| x.as_f64().unwrap()).collect()
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

#[test]
fn ohm_calibration_reproduces_case3_row() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("ohm");
    let o = outflow(&["calibrate", "--method", "ohm", "--measurements", s(&data("case3.json")), "--out", s(&out)]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let res = json(&out.join("result.json"));
    assert_eq!(res["outlet_tags"], serde_json::json!([3, 4, 5, 6]));
    for (r, want) in floats(&res["R"]).iter().zip([7248.0, 12142.0, 13094.0, 1624.0]) {
        assert!((r / want - 1.0).abs() <= 5e-3, "{r} vs {want}");
    }
    let m = json(&out.join("manifest.json"));
    assert_eq!(m["status"], "ok");
    assert_eq!(m["config_sha256"].as_str().unwrap().len(), 64);
    assert_eq!(m["inputs"][0]["sha256"].as_str().unwrap().len(), 64);
}

#[test]
fn synthesize_then_calibrate_recovers_resistances() {
    let dir = tempfile::tempdir().unwrap();
    let syn = dir.path().join("syn");
    let mesh = data("arch.msh");
    let o = outflow(&[
        "synthesize", "--from", "forward", "--mesh", s(&mesh), "--R", "7000,21000,16000,1700",
        "--inlet-flow", "119.1", "--pressure-tag", "5", "--out", s(&syn),
    ]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let cal = dir.path().join("cal");
    let ms = syn.join("measurements.json");
    let o = outflow(&["calibrate", "--method", "ocp", "--mesh", s(&mesh), "--measurements", s(&ms), "--out", s(&cal)]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let res = json(&cal.join("result.json"));
    for (r, want) in floats(&res["R"]).iter().zip([7000.0, 21000.0, 16000.0, 1700.0]) {
        assert!((r / want - 1.0).abs() <= 1e-3, "{r} vs {want}");
    }
    assert_eq!(res["converged"], true);
}

#[test]
fn lumped_synthesis_with_noise_is_seeded() {
    let dir = tempfile::tempdir().unwrap();
    let run = |name: &str, seed: &str| {
        let out = dir.path().join(name);
        let o = outflow(&[
            "synthesize", "--from", "lumped", "--mesh", s(&data("arch.msh")), "--R", "7000,21000,16000,1700",
            "--inlet-flow", "119.1", "--cycles", "3", "--dt", "0.002", "--noise", "0.05", "--seed", seed,
            "--out", s(&out),
        ]);
        assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
        std::fs::read_to_string(out.join("measurements.json")).unwrap()
    };
    let (a, b, c) = (run("a", "7"), run("b", "7"), run("c", "8"));
    assert_eq!(a, b);
    assert_ne!(a, c);
}

#[test]
fn unknown_subcommand_exits_with_usage() {
    let o = outflow(&["frobnicate"]);
    assert_eq!(o.status.code(), Some(2));
    let err = String::from_utf8_lossy(&o.stderr);
    assert!(err.contains("Usage:"), "{err}");
    let last: Value = serde_json::from_str(err.lines().last().unwrap()).unwrap();
    assert_eq!(last["error"]["kind"], "validation");
}

#[test]
fn invalid_input_exits_2_with_error_json() {
    let dir = tempfile::tempdir().unwrap();
    let bad = dir.path().join("bad.json");
    std::fs::write(&bad, r#"{"pressure": {"mean_mmHg": -5}, "inlet": {"tag": 1, "flow_cm3_s": 1}, "outlets": []}"#).unwrap();
    for args in [
        vec!["calibrate", "--method", "ohm", "--measurements", s(&bad)],
        vec!["calibrate", "--method", "ocp", "--measurements", s(&data("case1.json"))],
        vec!["forward", "--mesh", s(&data("arch.msh")), "--R", "1,2", "--inlet-flow", "1"],
        vec!["calibrate", "--threads", "0"],
    ] {
        let o = outflow(&args);
        assert_eq!(o.status.code(), Some(2), "{args:?}");
        let e: Value = serde_json::from_str(String::from_utf8_lossy(&o.stderr).trim()).unwrap();
        assert_eq!(e["exit_code"], 2);
        assert!(!e["error"]["message"].as_str().unwrap().is_empty());
    }
}

#[test]
fn non_convergence_exits_3_and_keeps_outputs() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("run.json");
    std::fs::write(&cfg, r#"{"ocp": {"max_iter": 1}}"#).unwrap();
    let out = dir.path().join("nc");
    let o = outflow(&[
        "calibrate", "--config", s(&cfg), "--mesh", s(&data("arch.msh")), "--measurements",
        s(&data("case1.json")), "--out", s(&out),
    ]);
    assert_eq!(o.status.code(), Some(3));
    assert_eq!(json(&out.join("manifest.json"))["status"], "not-converged");
    assert_eq!(json(&out.join("result.json"))["converged"], false);
}

#[test]
fn flags_take_precedence_over_config_file() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("run.json");
    std::fs::write(&cfg, r#"{"method": "murray", "threads": 4, "transient": {"n_cycles": 7}}"#).unwrap();
    let o = outflow(&["calibrate", "--config", s(&cfg), "--threads", "2", "--print-config"]);
    assert!(o.status.success());
    let v: Value = serde_json::from_slice(&o.stdout).unwrap();
    assert_eq!(v["method"], "murray");
    assert_eq!(v["threads"], 2);
    assert_eq!(v["transient"]["n_cycles"], 7);
    assert_eq!(v["transient"]["dt"], 5e-4);
}

#[test]
fn rerun_from_written_config_is_bit_identical() {
    let dir = tempfile::tempdir().unwrap();
    let first = dir.path().join("first");
    let o = outflow(&[
        "calibrate", "--method", "ocp", "--mesh", s(&data("arch.msh")), "--measurements", s(&data("case2.json")),
        "--out", s(&first),
    ]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let second = dir.path().join("second");
    let o = outflow(&["calibrate", "--config", s(&first.join("config.json")), "--out", s(&second)]);
    assert!(o.status.success());
    let (a, b) = (json(&first.join("result.json")), json(&second.join("result.json")));
    assert_eq!(a["R"], b["R"]);
    assert_eq!(a["simulation"]["flows"], b["simulation"]["flows"]);
    assert_eq!(a["simulation"]["newton_trace"], b["simulation"]["newton_trace"]);
    assert_eq!(std::fs::read(first.join("field.csv")).unwrap(), std::fs::read(second.join("field.csv")).unwrap());
}

#[test]
fn pipeline_from_calibration_to_report() {
    let dir = tempfile::tempdir().unwrap();
    let gen = dir.path().join("gen");
    assert!(outflow(&["mesh-gen", "--kind", "bifurcation", "--out", s(&gen)]).status.success());
    let mesh = gen.join("mesh.msh");
    let tags = json(&gen.join("mesh_tags.json"));
    let inlet = tags["inlet"].as_i64().unwrap();
    let outlets: Vec<i64> = tags["outlets"].as_array().unwrap().iter().map(|t| t.as_i64().unwrap()).collect();

    let info = outflow(&["mesh-info", "--mesh", s(&mesh), "--out", s(&dir.path().join("info"))]);
    assert!(info.status.success());
    let diag: Value = serde_json::from_slice(&info.stdout).unwrap();
    assert_eq!(diag["defects"], serde_json::json!([]));

    let ms = dir.path().join("ms.json");
    std::fs::write(
        &ms,
        serde_json::json!({
            "pressure": {"mean_mmHg": 20.0},
            "inlet": {"tag": inlet, "flow_cm3_s": 3.0},
            "outlets": [{"tag": outlets[0], "flow_cm3_s": 1.1}, {"tag": outlets[1], "flow_cm3_s": 1.8}],
        })
        .to_string(),
    )
    .unwrap();
    let mut results = Vec::new();
    for m in ["murray", "ohm", "ohm-opt", "ocp"] {
        let out = dir.path().join(m);
        let o = outflow(&["calibrate", "--method", m, "--mesh", s(&mesh), "--measurements", s(&ms), "--out", s(&out)]);
        assert!(o.status.success(), "{m}: {}", String::from_utf8_lossy(&o.stderr));
        results.push(out.join("result.json"));
    }

    let tr = dir.path().join("tr");
    let o = outflow(&[
        "transient", "--mesh", s(&mesh), "--from-result", s(&results[3]), "--measurements", s(&ms),
        "--period", "0.2", "--dt", "0.002", "--cycles", "2", "--out", s(&tr),
    ]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let t = json(&tr.join("result.json"));
    assert_eq!(t["method"], "ocp");
    assert!(t["indicators"]["osi_max"].as_f64().unwrap() <= 0.5);
    for tag in &outlets {
        let csv = std::fs::read_to_string(tr.join(format!("waveforms/outlet_{tag}.csv"))).unwrap();
        assert_eq!(csv.lines().count(), 2 + 2 * 100);
    }
    assert!(std::fs::read_to_string(tr.join("indicators.csv")).unwrap().starts_with("node,x,y,tawss,osi\n"));

    let lu = dir.path().join("lu");
    let o = outflow(&["lumped", "--mesh", s(&mesh), "--from-result", s(&results[1]), "--inlet-flow", "3", "--out", s(&lu)]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));

    results.push(tr.join("result.json"));
    let rep = dir.path().join("rep");
    let mut args = vec!["report".to_string(), "--out".into(), s(&rep).into()];
    args.extend(results.iter().map(|p| s(p).to_string()));
    let args: Vec<&str> = args.iter().map(String::as_str).collect();
    let o = outflow(&args);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let hist = std::fs::read_to_string(rep.join("histogram.csv")).unwrap();
    assert_eq!(hist.lines().next().unwrap(), "quantity,murray,ohm,ohm-opt,ocp,ocp#2");
    assert_eq!(hist.lines().count(), 1 + 2 + outlets.len());
    // the report depends on nothing but its inputs
    let again = dir.path().join("rep2");
    args_with_out(&args, &again);
    assert_eq!(std::fs::read(rep.join("comparison.csv")).unwrap(), std::fs::read(again.join("comparison.csv")).unwrap());
}

fn args_with_out(args: &[&str], out: &Path) {
    let mut a: Vec<&str> = args.to_vec();
    a[2] = s(out);
    assert!(outflow(&a).status.success());
}
