use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use ordinal_did::{simulate_panel, ColumnSchema, DgpSpec};
use serde_json::Value;

fn ordid(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_ordid"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn write_panel(path: &Path, spec: &DgpSpec) {
    let schema = ColumnSchema {
        cluster: Some("cluster".into()),
        ..Default::default()
    };
    let file = fs::File::create(path).unwrap();
    simulate_panel(spec).unwrap().write_csv(file, &schema).unwrap();
}

fn json(path: &Path) -> Value {
    serde_json::from_str(&fs::read_to_string(path).unwrap()).unwrap()
}

#[test]
fn fit_recovers_counterfactual_and_writes_replicates() {
    let dir = tempfile::tempdir().unwrap();
    let csv = dir.path().join("panel.csv");
    write_panel(&csv, &DgpSpec::estimator_design(3, 10_000, 1).unwrap());
    let out = dir.path().join("fit.json");
    let o = ordid(&[
        "fit",
        "--input",
        csv.to_str().unwrap(),
        "--cluster",
        "cluster",
        "--boot",
        "50",
        "--seed",
        "9",
        "--output",
        out.to_str().unwrap(),
    ]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let printed = String::from_utf8(o.stdout).unwrap();
    assert!(printed.contains("fit.json") && printed.contains("fit.replicates.csv"));

    let doc = json(&out);
    assert_eq!(doc["schema_version"], 1);
    assert_eq!(doc["seed"], 9);
    assert_eq!(doc["config"]["bootstrap"]["n_reps"], 50);
    let mu = doc["counterfactual"]["mu11"].as_f64().unwrap();
    let sigma = doc["counterfactual"]["sigma11"].as_f64().unwrap();
    assert!((mu - 0.5).abs() < 0.06 && (sigma - 4.0 / 3.0).abs() < 0.06);
    assert_eq!(doc["effects"]["intervals"].as_array().unwrap().len(), 5);
    assert_eq!(doc["data"]["n_clusters"], 20_000);

    let reps = fs::read_to_string(dir.path().join("fit.replicates.csv")).unwrap();
    assert!(reps.starts_with("replicate,zeta_0,zeta_1,zeta_2,delta_1,delta_2\n"));
    assert_eq!(reps.lines().count(), 51);
}

#[test]
fn document_goes_to_stdout_without_output() {
    let dir = tempfile::tempdir().unwrap();
    let csv = dir.path().join("panel.csv");
    write_panel(&csv, &DgpSpec::estimator_design(3, 300, 2).unwrap());
    let o = ordid(&["fit", "--input", csv.to_str().unwrap(), "--boot", "0"]);
    assert!(o.status.success());
    let doc: Value = serde_json::from_slice(&o.stdout).unwrap();
    assert_eq!(doc["command"], "fit");
    assert!(doc.get("bootstrap").is_none());
}

#[test]
fn fit_is_reproducible_across_worker_counts() {
    let dir = tempfile::tempdir().unwrap();
    let csv = dir.path().join("panel.csv");
    write_panel(&csv, &DgpSpec::estimator_design(5, 400, 3).unwrap());
    let run = |workers: &str| {
        let o = ordid(&[
            "--workers",
            workers,
            "fit",
            "--input",
            csv.to_str().unwrap(),
            "--cluster",
            "cluster",
            "--boot",
            "100",
            "--seed",
            "5",
        ]);
        assert!(o.status.success());
        o.stdout
    };
    let one = run("1");
    assert_eq!(one, run("1"));
    assert_eq!(one, run("4"));
}

#[test]
fn equivtest_decisions() {
    let dir = tempfile::tempdir().unwrap();
    let same = dir.path().join("same.csv");
    let mut spec = DgpSpec::estimator_design(3, 20_000, 4).unwrap();
    spec.theta10 = spec.theta00;
    spec.treated_post = None;
    write_panel(&same, &spec);
    let out = dir.path().join("eq.json");
    let o = ordid(&[
        "equivtest",
        "--input",
        same.to_str().unwrap(),
        "--pre",
        "0,1",
        "--boot",
        "0",
        "--delta",
        "0.05",
        "--output",
        out.to_str().unwrap(),
    ]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let doc = json(&out);
    assert_eq!(doc["reject"], true);
    assert!(doc["p_value"].as_f64().unwrap() < 0.05);
    assert_eq!(doc["delta_source"], "given");
    let grid = fs::read_to_string(dir.path().join("eq.grid.csv")).unwrap();
    assert!(grid.starts_with("v,t_hat,se,lower,upper\n"));
    assert_eq!(grid.lines().count(), 101);

    let violated = dir.path().join("violated.csv");
    write_panel(&violated, &DgpSpec::violation_design(3, 2000, 5).unwrap());
    let o = ordid(&["equivtest", "--input", violated.to_str().unwrap(), "--boot", "0"]);
    assert!(o.status.success());
    let doc: Value = serde_json::from_slice(&o.stdout).unwrap();
    assert_eq!(doc["reject"], false);
    assert_eq!(doc["delta_source"], "auto");

    let o = ordid(&[
        "equivtest",
        "--input",
        violated.to_str().unwrap(),
        "--boot",
        "0",
        "--delta",
        "0",
    ]);
    assert_eq!(o.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&o.stderr).contains("delta must be positive"));
}

#[test]
fn equivtest_with_bootstrap_covariance() {
    let dir = tempfile::tempdir().unwrap();
    let csv = dir.path().join("panel.csv");
    write_panel(&csv, &DgpSpec::violation_design(3, 500, 6).unwrap());
    let o = ordid(&[
        "equivtest",
        "--input",
        csv.to_str().unwrap(),
        "--cluster",
        "cluster",
        "--boot",
        "100",
        "--delta",
        "0.5",
    ]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let doc: Value = serde_json::from_slice(&o.stdout).unwrap();
    assert_eq!(doc["covariance"], "bootstrap");
    assert_eq!(doc["delta"], 0.5);
    assert_eq!(doc["bootstrap"]["n_success"], 100);
}

#[test]
fn bounds_command() {
    let dir = tempfile::tempdir().unwrap();
    let csv = dir.path().join("panel.csv");
    write_panel(&csv, &DgpSpec::estimator_design(3, 2000, 7).unwrap());
    let o = ordid(&[
        "bounds",
        "--input",
        csv.to_str().unwrap(),
        "--cluster",
        "cluster",
        "--boot",
        "50",
    ]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let doc: Value = serde_json::from_slice(&o.stdout).unwrap();
    let lo = doc["eta"]["lower"].as_f64().unwrap();
    let hi = doc["eta"]["upper"].as_f64().unwrap();
    assert!(0.0 <= lo && lo <= hi && hi <= 1.0);
    assert!(doc["tau"]["upper"].as_f64().unwrap() <= hi + 1e-12);
    assert_eq!(doc["intervals"].as_array().unwrap().len(), 4);
}

#[test]
fn simulate_smoke_and_tables() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("est.toml");
    fs::write(
        &cfg,
        "study = \"estimator\"\nseed = 1\nreps = 10\n[design]\nkind = \"estimator\"\ncategories = 3\nn_per_group = 200\n",
    )
    .unwrap();
    let out = dir.path().join("est.json");
    let o = ordid(&[
        "simulate",
        "--config",
        cfg.to_str().unwrap(),
        "--output",
        out.to_str().unwrap(),
    ]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let doc = json(&out);
    assert_eq!(doc["report"]["reps"], 10);
    assert_eq!(doc["report"]["failures"], 0);
    assert_eq!(doc["design"]["cutoffs"], serde_json::json!([0.0, 1.0]));
    let reps = fs::read_to_string(dir.path().join("est.reps.csv")).unwrap();
    assert_eq!(reps.lines().count(), 11);

    let eq = dir.path().join("eq.toml");
    fs::write(
        &eq,
        "study = \"equivalence\"\nreps = 5\n[design]\nkind = \"violation\"\ncategories = 3\nn_per_group = 500\n",
    )
    .unwrap();
    let o = ordid(&["simulate", "--config", eq.to_str().unwrap(), "--seed", "3"]);
    assert!(o.status.success());
    let doc: Value = serde_json::from_slice(&o.stdout).unwrap();
    assert_eq!(doc["seed"], 3);
    assert_eq!(doc["report"]["rates"].as_array().unwrap().len(), 6);
    let t_max = doc["report"]["true_t_max"].as_f64().unwrap();
    assert!((t_max - 0.147227).abs() < 1e-6);
}

#[test]
fn error_exit_codes() {
    let dir = tempfile::tempdir().unwrap();
    let csv = dir.path().join("panel.csv");
    write_panel(&csv, &DgpSpec::estimator_design(3, 100, 8).unwrap());
    let input = csv.to_str().unwrap();

    // Bootstrap without a cluster column.
    let o = ordid(&["fit", "--input", input]);
    assert_eq!(o.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&o.stderr).contains("--cluster"));

    // Malformed simulation key is named.
    let cfg = dir.path().join("bad.toml");
    fs::write(
        &cfg,
        "study = \"estimator\"\n[design]\nkind = \"estimator\"\ncategories = 3\nn_per_grup = 10\n",
    )
    .unwrap();
    let o = ordid(&["simulate", "--config", cfg.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&o.stderr).contains("n_per_grup"));

    // Unknown flag.
    assert_eq!(ordid(&["fit", "--inptu", input]).status.code(), Some(2));

    // Missing file and missing column are data errors.
    let o = ordid(&["fit", "--input", "/nonexistent.csv", "--boot", "0"]);
    assert_eq!(o.status.code(), Some(3));
    let o = ordid(&["fit", "--input", input, "--outcome", "nope", "--boot", "0"]);
    assert_eq!(o.status.code(), Some(3));

    // A cell that uses only one category cannot be fitted.
    let flat = dir.path().join("flat.csv");
    let mut text = String::from("unit,period,outcome,treated\n");
    for u in 0..40 {
        let d = u % 2;
        let pre = if d == 0 { 1 } else { u % 3 };
        text.push_str(&format!("{u},0,{pre},{d}\n{u},1,{},{d}\n", (u / 2) % 3));
    }
    fs::write(&flat, text).unwrap();
    let o = ordid(&["fit", "--input", flat.to_str().unwrap(), "--boot", "0"]);
    assert_eq!(o.status.code(), Some(4), "{}", String::from_utf8_lossy(&o.stderr));
}

#[test]
fn filter_restricts_rows() {
    let dir = tempfile::tempdir().unwrap();
    let csv = dir.path().join("panel.csv");
    let mut text = String::from("unit,period,outcome,treated,party\n");
    for u in 0..400 {
        let d = u % 2;
        let party = if u % 4 < 2 { "a" } else { "b" };
        text.push_str(&format!(
            "{u},0,{},{d},{party}\n{u},1,{},{d},{party}\n",
            u % 3,
            (u / 3) % 3
        ));
    }
    fs::write(&csv, text).unwrap();
    let o = ordid(&[
        "fit",
        "--input",
        csv.to_str().unwrap(),
        "--boot",
        "0",
        "--filter",
        "party=a",
    ]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let doc: Value = serde_json::from_slice(&o.stdout).unwrap();
    assert_eq!(doc["data"]["n_units"], 200);
    assert_eq!(doc["data"]["dropped"]["filtered_out"], 400);
}
