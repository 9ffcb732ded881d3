//! End-to-end tests of the binary: argument handling, exit codes, report
//! files, and reproducibility of generated data.

use std::path::Path;
use std::process::{Command, Output};

use tempfile::TempDir;

fn run(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_selogit"))
        .args(args)
        .output()
        .expect("binary should launch")
}

fn stdout(out: &Output) -> String {
    String::from_utf8_lossy(&out.stdout).into_owned()
}

fn stderr(out: &Output) -> String {
    String::from_utf8_lossy(&out.stderr).into_owned()
}

fn path_str(p: &Path) -> &str {
    p.to_str().unwrap()
}

#[test]
fn dgp_is_reproducible_for_a_fixed_seed() {
    let dir = TempDir::new().unwrap();
    let a = dir.path().join("a.csv");
    let b = dir.path().join("b.csv");
    for out in [&a, &b] {
        let res = run(&["dgp", "--n", "300", "--seed", "17", "--output", path_str(out)]);
        assert!(res.status.success(), "{}", stderr(&res));
    }
    let bytes_a = std::fs::read(&a).unwrap();
    let bytes_b = std::fs::read(&b).unwrap();
    assert_eq!(bytes_a, bytes_b, "same seed must give byte-identical output");
    let c = dir.path().join("c.csv");
    let res = run(&["dgp", "--n", "300", "--seed", "18", "--output", path_str(&c)]);
    assert!(res.status.success());
    assert_ne!(bytes_a, std::fs::read(&c).unwrap(), "a different seed must change the data");
}

#[test]
fn dgp_with_certain_observation_has_no_missing_cells() {
    let dir = TempDir::new().unwrap();
    let csv = dir.path().join("complete.csv");
    let res = run(&[
        "dgp",
        "--n",
        "200",
        "--seed",
        "3",
        "--delta0",
        "30",
        "--delta-y",
        "0",
        "--output",
        path_str(&csv),
    ]);
    assert!(res.status.success(), "{}", stderr(&res));
    let text = std::fs::read_to_string(&csv).unwrap();
    let mut lines = text.lines();
    assert_eq!(lines.next().unwrap(), "x1,y,s");
    for line in lines {
        let fields: Vec<&str> = line.split(',').collect();
        assert_eq!(fields.len(), 3);
        assert!(fields[1] == "0" || fields[1] == "1", "unexpected outcome cell {:?}", fields[1]);
        assert_eq!(fields[2], "1");
    }
}

#[test]
fn dgp_emits_one_column_per_covariate_plus_bookkeeping() {
    let dir = TempDir::new().unwrap();
    let csv = dir.path().join("two.csv");
    let res = run(&[
        "dgp",
        "--n",
        "50",
        "--seed",
        "9",
        "--beta-x",
        "1.0,-0.5",
        "--delta-x",
        "-0.5,0.2",
        "--laws",
        "standard-normal,bernoulli:0.4",
        "--include-full-y",
        "--output",
        path_str(&csv),
    ]);
    assert!(res.status.success(), "{}", stderr(&res));
    let text = std::fs::read_to_string(&csv).unwrap();
    assert_eq!(text.lines().next().unwrap(), "x1,x2,y,s,y_full");
    // The bernoulli column must be 0/1.
    for line in text.lines().skip(1) {
        let x2 = line.split(',').nth(1).unwrap();
        assert!(x2 == "0" || x2 == "1");
    }
}

#[test]
fn dgp_rejects_a_malformed_law() {
    let res = run(&["dgp", "--n", "50", "--laws", "triangular:1"]);
    assert_eq!(res.status.code(), Some(3));
    assert!(stderr(&res).contains("unknown covariate law"));
}

#[test]
fn fit_writes_a_structured_report() {
    let dir = TempDir::new().unwrap();
    let csv = dir.path().join("d.csv");
    let json = dir.path().join("fit.json");
    // A DGP with a wide outcome-probability sweep, so the observation-effect
    // coefficient is comfortably identified on a single realization.
    let res = run(&[
        "dgp", "--n", "1500", "--seed", "42", "--beta0", "-2", "--beta-x", "1.5", "--delta0",
        "0.5", "--delta-x", "-0.3", "--delta-y", "-1.5", "--output", path_str(&csv),
    ]);
    assert!(res.status.success(), "{}", stderr(&res));
    let res = run(&["fit", path_str(&csv), "--output", path_str(&json)]);
    assert!(res.status.success(), "{}", stderr(&res));

    let report: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(&json).unwrap()).unwrap();
    assert_eq!(report["corrected"]["labels"][0], "(intercept)");
    assert_eq!(report["corrected"]["labels"][1], "x1");
    assert_eq!(report["corrected"]["coef"].as_array().unwrap().len(), 2);
    assert_eq!(report["naive"]["coef"].as_array().unwrap().len(), 2);
    assert!(report["delta"]["delta_y"].is_f64());
    assert!(report["delta"]["gamma_hat"].is_f64());
    assert!(report["approx_quality"].is_f64());
    let pi = &report["pi_summary"];
    assert!(pi["min"].as_f64().unwrap() <= pi["median"].as_f64().unwrap());
    assert!(pi["median"].as_f64().unwrap() <= pi["max"].as_f64().unwrap());
    // No bootstrap requested.
    assert!(report["bootstrap"].is_null());
    // The console table shows both fits side by side.
    let text = stdout(&res);
    assert!(text.contains("corrected"), "{text}");
    assert!(text.contains("naive"), "{text}");
    assert!(text.contains("observation model"), "{text}");
}

#[test]
fn fit_on_a_complete_dataset_reports_the_plain_fit_twice() {
    let dir = TempDir::new().unwrap();
    let csv = dir.path().join("complete.csv");
    let json = dir.path().join("fit.json");
    let res = run(&[
        "dgp",
        "--n",
        "400",
        "--seed",
        "1",
        "--delta0",
        "30",
        "--delta-y",
        "0",
        "--output",
        path_str(&csv),
    ]);
    assert!(res.status.success());
    let res = run(&["fit", path_str(&csv), "--output", path_str(&json)]);
    assert!(res.status.success(), "{}", stderr(&res));
    assert!(stdout(&res).contains("no missingness detected"));
    let report: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(&json).unwrap()).unwrap();
    assert_eq!(report["corrected"]["coef"], report["naive"]["coef"]);
    assert!(report["delta"].is_null());
}

#[test]
fn fit_with_a_missing_column_exits_with_the_input_code() {
    let dir = TempDir::new().unwrap();
    let csv = dir.path().join("d.csv");
    let res = run(&["dgp", "--n", "100", "--seed", "2", "--output", path_str(&csv)]);
    assert!(res.status.success());
    let res = run(&["fit", path_str(&csv), "--covariates", "nope"]);
    assert_eq!(res.status.code(), Some(3));
    assert!(stderr(&res).contains("nope"));
}

#[test]
fn fit_reports_identification_failures_with_a_dedicated_exit_code() {
    // A narrow logit sweep with no outcome effect on observation leaves the
    // gamma column nearly collinear with the rest of the design; this seed
    // is a known realization where the estimate lands past 1.
    let dir = TempDir::new().unwrap();
    let csv = dir.path().join("weak.csv");
    let res = run(&[
        "dgp", "--n", "600", "--seed", "5", "--beta0", "-1", "--beta-x", "1", "--delta0", "0.5",
        "--delta-x", "-0.3", "--delta-y", "0", "--output", path_str(&csv),
    ]);
    assert!(res.status.success());
    let res = run(&["fit", path_str(&csv)]);
    assert_eq!(res.status.code(), Some(2), "{}", stderr(&res));
    let err = stderr(&res);
    assert!(err.contains("step 2"), "failure must name the step: {err}");
    assert!(err.contains("gamma_hat"), "{err}");
}

#[test]
fn fit_honors_covariate_and_linear_overrides() {
    let dir = TempDir::new().unwrap();
    let csv = dir.path().join("two.csv");
    let res = run(&[
        "dgp",
        "--n",
        "1200",
        "--seed",
        "11",
        "--beta-x",
        "1.0,-0.5",
        "--delta-x",
        "-0.5,0.2",
        "--laws",
        "standard-normal,bernoulli:0.4",
        "--output",
        path_str(&csv),
    ]);
    assert!(res.status.success(), "{}", stderr(&res));
    let json = dir.path().join("fit.json");
    let res = run(&[
        "fit",
        path_str(&csv),
        "--covariates",
        "x1,x2",
        "--linear",
        "x2",
        "--output",
        path_str(&json),
    ]);
    assert!(res.status.success(), "{}", stderr(&res));
    let report: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(&json).unwrap()).unwrap();
    let labels: Vec<&str> = report["corrected"]["labels"]
        .as_array()
        .unwrap()
        .iter()
        .map(|v| v.as_str().unwrap())
        .collect();
    assert_eq!(labels, ["(intercept)", "x1", "x2"]);
}

#[test]
fn simulate_runs_a_single_replication_and_writes_json() {
    let dir = TempDir::new().unwrap();
    let cfg = dir.path().join("sim.toml");
    let json = dir.path().join("mc.json");
    std::fs::write(
        &cfg,
        r#"
n = 300
replications = 1
seed = 7

[truth]
beta0 = -2.0
beta_x = [1.5]
delta0 = 0.5
delta_x = [-0.3]
delta_y = -1.5
covariates = [{ kind = "standard-normal" }]
"#,
    )
    .unwrap();
    let res = run(&["simulate", path_str(&cfg), "--output", path_str(&json)]);
    assert!(res.status.success(), "{}", stderr(&res));
    let report: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(&json).unwrap()).unwrap();
    assert_eq!(report["replications"], 1);
    assert_eq!(report["coef_names"][1], "x1");
    for block in ["full_data", "naive", "corrected"] {
        assert_eq!(report[block]["n_success"], 1, "{block}");
        assert_eq!(report[block]["sd"][0], 0.0, "one replicate has no spread");
    }
    assert!(stdout(&res).contains("[corrected]"));
}

#[test]
fn simulate_rejects_malformed_and_invalid_configs() {
    let dir = TempDir::new().unwrap();
    let cfg = dir.path().join("bad.toml");
    std::fs::write(&cfg, "replications = [").unwrap();
    let res = run(&["simulate", path_str(&cfg)]);
    assert_eq!(res.status.code(), Some(3));
    assert!(stderr(&res).contains("bad config"));

    // Parseable but invalid: too few rows per replication.
    std::fs::write(
        &cfg,
        r#"
n = 10
replications = 2

[truth]
beta0 = -2.0
beta_x = [1.5]
delta0 = 0.5
delta_x = [-0.3]
delta_y = -1.5
covariates = [{ kind = "standard-normal" }]
"#,
    )
    .unwrap();
    let res = run(&["simulate", path_str(&cfg)]);
    assert_eq!(res.status.code(), Some(3), "{}", stderr(&res));

    let res = run(&["simulate", path_str(&dir.path().join("absent.toml"))]);
    assert_eq!(res.status.code(), Some(3));
}

#[test]
fn simulate_is_bitwise_reproducible_across_processes() {
    let dir = TempDir::new().unwrap();
    let cfg = dir.path().join("sim.toml");
    std::fs::write(
        &cfg,
        r#"
n = 250
replications = 3
seed = 99

[truth]
beta0 = -2.0
beta_x = [1.5]
delta0 = 0.5
delta_x = [-0.3]
delta_y = -1.5
covariates = [{ kind = "standard-normal" }]
"#,
    )
    .unwrap();
    let a = dir.path().join("a.json");
    let b = dir.path().join("b.json");
    for (out, threads) in [(&a, "1"), (&b, "2")] {
        let res =
            run(&["simulate", path_str(&cfg), "--output", path_str(out), "--threads", threads]);
        assert!(res.status.success(), "{}", stderr(&res));
    }
    assert_eq!(
        std::fs::read(&a).unwrap(),
        std::fs::read(&b).unwrap(),
        "thread count must not leak into the report"
    );
}

#[test]
fn verify_passes_on_the_default_grid() {
    let res = run(&["verify"]);
    assert!(res.status.success(), "{}", stderr(&res));
    let text = stdout(&res);
    assert_eq!(text.matches("PASS").count(), 5, "{text}");
    assert!(!text.contains("FAIL"), "{text}");
    assert!(text.contains("1215 grid points"), "{text}");
}

#[test]
fn verify_detects_an_injected_sign_error() {
    let res = run(&["verify", "--inject-sign-error"]);
    assert_eq!(res.status.code(), Some(1));
    let text = stdout(&res);
    assert!(text.contains("FAIL"), "{text}");
}

#[test]
fn verify_accepts_a_custom_single_point() {
    let dir = TempDir::new().unwrap();
    let json = dir.path().join("verify.json");
    let res = run(&[
        "verify", "--beta0", "0.5", "--beta-x", "1.0", "--delta0", "-0.2", "--delta-x", "0.3",
        "--delta-y", "-1.5", "--x", "0.7", "--output", path_str(&json),
    ]);
    assert!(res.status.success(), "{}", stderr(&res));
    assert!(stdout(&res).contains("1 grid points"));
    let report: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(&json).unwrap()).unwrap();
    assert_eq!(report["n_points"], 1);
    assert_eq!(report["all_pass"], true);
    assert_eq!(report["checks"].as_array().unwrap().len(), 5);
}
