use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use mlp_core::{picard_quadrature_reference, read_oracle_targets, ProblemSpec, QuadratureGrid, ReferenceMethod};

fn mlp(args: &[&str], cfg: Option<&Path>, out: &Path) -> Output {
    let mut cmd = Command::new(env!("CARGO_BIN_EXE_mlp"));
    cmd.args(args).arg("--out").arg(out).env_remove("MLP_SEED");
    if let Some(cfg) = cfg {
        cmd.arg("--config").arg(cfg);
    }
    cmd.output().expect("binary runs")
}

fn write_config(dir: &Path, name: &str, json: &str) -> PathBuf {
    let path = dir.join(name);
    std::fs::write(&path, json).unwrap();
    path
}

const LINEAR: &str = r#""problem": {"d": 2, "T": 1.0, "f": {"kind": "linear", "a": 0.5}, "g": {"kind": "quadratic"}}"#;

fn code(out: &Output) -> i32 {
    out.status.code().expect("exited normally")
}

fn stderr(out: &Output) -> String {
    String::from_utf8_lossy(&out.stderr).into_owned()
}

#[test]
fn malformed_config_reports_position() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), "bad.json", "{\n  \"problem\": {d: 1}\n}");
    let out = mlp(&["run"], Some(&cfg), dir.path());
    assert_eq!(code(&out), 2);
    assert!(stderr(&out).contains("line 2"), "{}", stderr(&out));
}

#[test]
fn config_errors_exit_two() {
    let dir = tempfile::tempdir().unwrap();
    let p = dir.path();
    assert_eq!(code(&mlp(&["converge"], None, p)), 2);
    let big = write_config(p, "big.json", &format!("{{{LINEAR}, \"n_max\": 7}}"));
    let out = mlp(&["converge"], Some(&big), p);
    assert_eq!(code(&out), 2);
    assert!(stderr(&out).contains("--i-know"));
    let short = write_config(p, "short.json", &format!("{{{LINEAR}, \"n_max\": 2}}"));
    assert_eq!(code(&mlp(&["complexity"], Some(&short), p)), 2);
    let typo = write_config(p, "typo.json", &format!("{{{LINEAR}, \"runz\": 5}}"));
    assert_eq!(code(&mlp(&["run"], Some(&typo), p)), 2);
    let zero = write_config(p, "ok.json", &format!("{{{LINEAR}}}"));
    assert_eq!(code(&mlp(&["run", "--threads", "0"], Some(&zero), p)), 2);
}

#[test]
fn evaluation_fault_exits_three() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(
        dir.path(),
        "fault.json",
        r#"{"problem": {"d": 2, "T": 1.0, "f": {"kind": "linear", "a": 1e308}, "g": {"kind": "quadratic"}}, "n_max": 2}"#,
    );
    let out = mlp(&["run"], Some(&cfg), dir.path());
    assert_eq!(code(&out), 3);
    assert!(stderr(&out).contains("non-finite"));
}

#[test]
fn verify_failures_exit_one() {
    let dir = tempfile::tempdir().unwrap();
    let p = dir.path();
    let fast = r#""verify": {"lemma_samples": 100, "hypothesis_ii_mc": 2000, "hypothesis_iii_mc": 200"#;
    let seq = write_config(
        p,
        "seq.json",
        &format!(
            r#"{{{LINEAR}, "sequence": {{"rule": "explicit", "values": [1, 1, 2], "kappa": 2.0}}, "n_max": 3, {fast}}}}}"#
        ),
    );
    let out = mlp(&["verify"], Some(&seq), p);
    assert_eq!(code(&out), 1);
    assert!(stderr(&out).contains("validate_sequence"), "{}", stderr(&out));

    let cost = write_config(
        p,
        "cost.json",
        &format!(r#"{{{LINEAR}, "n_max": 3, {fast}, "cost": {{"z_cost": 2.0, "gamma": 0.0}}}}}}"#),
    );
    let out = mlp(&["verify"], Some(&cost), p);
    assert_eq!(code(&out), 1);
    let err = stderr(&out);
    assert!(
        err.contains("cost_bound_chain") && !err.contains("validate_sequence"),
        "{err}"
    );
    let report: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(p.join("verify_report.json")).unwrap()).unwrap();
    assert!(report
        .as_array()
        .unwrap()
        .iter()
        .any(|r| r["check"] == "cost_bound_chain" && r["pass"] == false));
}

#[test]
fn order_zero_and_seed_precedence() {
    let dir = tempfile::tempdir().unwrap();
    let p = dir.path();
    let cfg = write_config(p, "n0.json", &format!(r#"{{{LINEAR}, "n": 0}}"#));
    let out = mlp(&["run"], Some(&cfg), p);
    assert_eq!(code(&out), 0);
    let rec: serde_json::Value = serde_json::from_slice(&out.stdout).unwrap();
    assert_eq!(rec["value"], 0.0);
    assert_eq!(rec["normals"], 0);

    let cfg = write_config(p, "n2.json", &format!(r#"{{{LINEAR}, "n": 2, "seed": 5}}"#));
    let value = |extra: &[&str], env: Option<&str>| {
        let mut cmd = Command::new(env!("CARGO_BIN_EXE_mlp"));
        cmd.arg("run")
            .arg("--config")
            .arg(&cfg)
            .arg("--out")
            .arg(p)
            .args(extra)
            .env_remove("MLP_SEED");
        if let Some(s) = env {
            cmd.env("MLP_SEED", s);
        }
        let rec: serde_json::Value = serde_json::from_slice(&cmd.output().unwrap().stdout).unwrap();
        (rec["seed"].as_u64().unwrap(), rec["value"].as_f64().unwrap())
    };
    assert_eq!(value(&[], None).0, 5);
    assert_eq!(value(&[], Some("9")).0, 9);
    assert_eq!(value(&["--seed", "11"], Some("9")).0, 11);
    assert_eq!(value(&["--seed", "11"], None), value(&[], Some("11")));
    assert_ne!(value(&[], None).1, value(&["--seed", "6"], None).1);
}

#[test]
fn converge_outputs_agree() {
    let dir = tempfile::tempdir().unwrap();
    let p = dir.path();
    let cfg = write_config(p, "c.json", &format!(r#"{{{LINEAR}, "n_max": 3, "runs": 20}}"#));
    let out = mlp(&["converge", "--no-timing"], Some(&cfg), p);
    assert_eq!(code(&out), 0, "{}", stderr(&out));

    let csv_text = std::fs::read_to_string(p.join("converge.csv")).unwrap();
    let mut reader = csv::Reader::from_reader(csv_text.as_bytes());
    let headers = reader.headers().unwrap().clone();
    assert_eq!(
        headers.iter().collect::<Vec<_>>(),
        [
            "n",
            "M_n",
            "rmse",
            "se",
            "bound",
            "normals",
            "uniforms",
            "cost_rec",
            "cost_closed",
            "wall_ms"
        ]
    );
    let rows: Vec<csv::StringRecord> = reader.records().map(Result::unwrap).collect();
    assert_eq!(rows.len(), 3);
    for row in &rows {
        let f = |i: usize| row[i].parse::<f64>().unwrap();
        assert!(f(5) <= f(7) && f(7) <= f(8), "{row:?}");
        assert_eq!(f(9), 0.0);
    }
    assert!(!csv_text.contains('\r'));

    let svg = std::fs::read_to_string(p.join("converge.svg")).unwrap();
    let doc = roxmltree::Document::parse(&svg).expect("well-formed SVG");
    let lines: Vec<_> = doc.descendants().filter(|n| n.has_tag_name("polyline")).collect();
    assert_eq!(lines.len(), 2);
    for (line, name) in lines.iter().zip(["rmse", "bound"]) {
        assert_eq!(line.attribute("data-series"), Some(name));
        let points = line.attribute("points").unwrap().split_whitespace().count();
        assert_eq!(points, rows.len());
    }
    // Higher RMSE sits higher on the page, i.e. at smaller y.
    let ys: Vec<f64> = lines[0]
        .attribute("points")
        .unwrap()
        .split_whitespace()
        .map(|pt| pt.split(',').nth(1).unwrap().parse().unwrap())
        .collect();
    let rmse: Vec<f64> = rows.iter().map(|r| r[2].parse().unwrap()).collect();
    for i in 1..rows.len() {
        assert_eq!(rmse[i] < rmse[i - 1], ys[i] > ys[i - 1]);
    }

    let targets = read_oracle_targets(&p.join("oracle_targets.json")).unwrap();
    assert_eq!(targets[0].method, ReferenceMethod::ClosedForm);
    assert_eq!(targets[0].value, 2.0 * 0.5f64.exp());
}

#[test]
fn stored_sine_target_reproduces() {
    let path = Path::new(env!("CARGO_MANIFEST_DIR")).join("tests/data/oracle_targets.json");
    let targets = read_oracle_targets(&path).unwrap();
    let target = targets.iter().find(|t| t.problem == "sine").expect("sine target");
    assert_eq!(target.method, ReferenceMethod::PicardQuadrature);
    let spec: ProblemSpec = serde_json::from_value(target.config["problem"].clone()).unwrap();
    let problem = spec.build().unwrap();
    let fresh = picard_quadrature_reference(&problem, QuadratureGrid::default())
        .unwrap()
        .solution;
    assert!(
        (fresh.value - target.value).abs() <= 1e-12,
        "{} vs {}",
        fresh.value,
        target.value
    );
    assert!((fresh.uncertainty - target.uncertainty).abs() <= 1e-12);
}
