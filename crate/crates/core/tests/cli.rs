use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use seqgini::cli::EstimateReport;
use seqgini::harness::ReplicationSummary;
use seqgini::rng::stream;
use seqgini::tables::summary_from_csv;
use seqgini::{IncomeDistribution, PopulationModel};

fn seqgini(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_seqgini"))
        .args(args)
        .env_remove("SEQGINI_SEED")
        .output()
        .expect("binary runs")
}

fn code(out: &Output) -> i32 {
    out.status.code().expect("exit code")
}

fn stderr(out: &Output) -> String {
    String::from_utf8_lossy(&out.stderr).into_owned()
}

fn write_incomes(path: &Path, values: impl IntoIterator<Item = String>) {
    let mut body = String::from("income\n");
    for v in values {
        body.push_str(&v);
        body.push('\n');
    }
    fs::write(path, body).unwrap();
}

const SIM: &[&str] = &[
    "simulate",
    "--dist",
    "exponential",
    "--param",
    "rate=5",
    "--A",
    "50000",
    "--c",
    "0.1",
    "--m",
    "10",
    "--seed",
    "1",
    "--rule",
    "plain",
];

#[test]
fn one_replication_is_a_validation_error() {
    let out = seqgini(&[SIM, &["--reps", "1"]].concat());
    assert_eq!(code(&out), 2);
    assert!(stderr(&out).contains("--reps"));
}

#[test]
fn bad_flags_are_validation_errors() {
    for extra in [
        &["--m", "3"][..],
        &["--gamma", "0.7"],
        &["--c", "-1"],
        &["--param", "shape=2"],
        &["--format", "xml"],
    ] {
        let out = seqgini(&[SIM, &["--reps", "5"], extra].concat());
        assert_eq!(code(&out), 2, "{extra:?}: {}", stderr(&out));
    }
}

#[test]
fn worker_count_does_not_change_output() {
    let dir = tempfile::tempdir().unwrap();
    let mut files = Vec::new();
    for workers in ["1", "8"] {
        let path = dir.path().join(format!("w{workers}.csv"));
        let out = seqgini(
            &[
                SIM,
                &[
                    "--reps",
                    "300",
                    "--workers",
                    workers,
                    "--out",
                    path.to_str().unwrap(),
                ],
            ]
            .concat(),
        );
        assert_eq!(code(&out), 0, "{}", stderr(&out));
        files.push(fs::read(path).unwrap());
    }
    assert_eq!(files[0], files[1]);
}

#[test]
fn csv_and_json_describe_the_same_summary() {
    let dir = tempfile::tempdir().unwrap();
    let csv_path = dir.path().join("s.csv");
    let json_path = dir.path().join("s.json");
    for (path, format) in [(&csv_path, "csv"), (&json_path, "json")] {
        let out = seqgini(
            &[
                SIM,
                &[
                    "--reps",
                    "200",
                    "--format",
                    format,
                    "--out",
                    path.to_str().unwrap(),
                ],
            ]
            .concat(),
        );
        assert_eq!(code(&out), 0, "{}", stderr(&out));
        assert!(String::from_utf8_lossy(&out.stdout).contains("ratio regret"));
    }
    let from_csv = summary_from_csv(&fs::read_to_string(&csv_path).unwrap()).unwrap();
    let from_json: ReplicationSummary =
        serde_json::from_str(&fs::read_to_string(&json_path).unwrap()).unwrap();
    assert_eq!(from_csv, from_json);
    assert_eq!(from_json.reps, 200);
    assert_eq!(from_json.config.seed, 1);
}

#[test]
fn seed_comes_from_environment_when_not_given() {
    let dir = tempfile::tempdir().unwrap();
    let run = |name: &str, seed_flag: Option<&str>, env: Option<&str>| {
        let path = dir.path().join(name);
        let mut args = vec![
            "simulate", "--dist", "gamma", "--reps", "20", "--format", "json",
        ];
        if let Some(s) = seed_flag {
            args.extend(["--seed", s]);
        }
        args.extend(["--out", path.to_str().unwrap()]);
        let mut cmd = Command::new(env!("CARGO_BIN_EXE_seqgini"));
        cmd.args(&args).env_remove("SEQGINI_SEED");
        if let Some(e) = env {
            cmd.env("SEQGINI_SEED", e);
        }
        assert!(cmd.status().unwrap().success());
        serde_json::from_str::<ReplicationSummary>(&fs::read_to_string(path).unwrap()).unwrap()
    };
    assert_eq!(run("default.json", None, None).config.seed, 1);
    let from_env = run("env.json", None, Some("77"));
    assert_eq!(from_env.config.seed, 77);
    assert_eq!(run("flag.json", Some("77"), Some("5")), from_env);
}

#[test]
fn config_file_supplies_defaults_and_flags_win() {
    let dir = tempfile::tempdir().unwrap();
    let config = dir.path().join("study.json");
    fs::write(
        &config,
        r#"{"dist": "lognormal", "c": 0.2, "m": 12, "reps": 30, "seed": 9, "format": "json"}"#,
    )
    .unwrap();
    let out_path = dir.path().join("out.json");
    let out = seqgini(&[
        "simulate",
        "--config",
        config.to_str().unwrap(),
        "--m",
        "15",
        "--out",
        out_path.to_str().unwrap(),
    ]);
    assert_eq!(code(&out), 0, "{}", stderr(&out));
    let s: ReplicationSummary =
        serde_json::from_str(&fs::read_to_string(&out_path).unwrap()).unwrap();
    assert_eq!(s.config.c, 0.2);
    assert_eq!(s.config.m, 15);
    assert_eq!(s.config.seed, 9);
    assert_eq!(s.reps, 30);
    assert!(s.model.starts_with("lognormal"));

    fs::write(&config, r#"{"dist": "gamma", "colour": 1}"#).unwrap();
    let out = seqgini(&["simulate", "--config", config.to_str().unwrap()]);
    assert_eq!(code(&out), 2);
}

#[test]
fn estimate_on_equal_incomes_stops_at_the_pilot() {
    let dir = tempfile::tempdir().unwrap();
    let input = dir.path().join("equal.csv");
    write_incomes(&input, (0..1000).map(|_| "42.5".to_string()));
    let out = seqgini(&[
        "estimate",
        "--input",
        input.to_str().unwrap(),
        "--rule",
        "plain",
    ]);
    assert_eq!(code(&out), 0, "{}", stderr(&out));
    let report: EstimateReport = serde_json::from_slice(&out.stdout).unwrap();
    assert_eq!(report.n, 10);
    assert_eq!(report.gini, 0.0);
    assert_eq!(report.threshold_history_len, 1);
    assert_eq!(report.sampling_cost, 0.1 * 10.0);
}

#[test]
fn estimate_on_exponential_draws() {
    let dir = tempfile::tempdir().unwrap();
    let input = dir.path().join("exp.csv");
    let model = PopulationModel::exponential(5.0).unwrap();
    let mut rng = stream(123, &[0]);
    write_incomes(&input, (0..5000).map(|_| model.draw(&mut rng).to_string()));
    let out = seqgini(&[
        "estimate",
        "--input",
        input.to_str().unwrap(),
        "--A",
        "50000",
        "--c",
        "0.1",
        "--m",
        "10",
        "--format",
        "csv",
    ]);
    assert_eq!(code(&out), 0, "{}", stderr(&out));
    let mut rdr = csv::Reader::from_reader(out.stdout.as_slice());
    let report: EstimateReport = rdr.deserialize().next().unwrap().unwrap();
    assert!((150..=320).contains(&report.n), "N = {}", report.n);
    assert!(report.n as f64 >= report.threshold);
    assert_eq!(report.threshold_history_len, report.n - 9);
}

#[test]
fn estimate_rejects_bad_rows() {
    let dir = tempfile::tempdir().unwrap();
    let input = dir.path().join("neg.csv");
    write_incomes(&input, ["3.0", "1.5", "-2.0", "4.0"].map(String::from));
    let out = seqgini(&["estimate", "--input", input.to_str().unwrap()]);
    assert_eq!(code(&out), 2);
    assert!(stderr(&out).contains("row 3"), "{}", stderr(&out));

    write_incomes(&input, ["3.0", "abc"].map(String::from));
    let out = seqgini(&["estimate", "--input", input.to_str().unwrap()]);
    assert_eq!(code(&out), 2);
    assert!(stderr(&out).contains("row 2"));
}

#[test]
fn estimate_reports_exhaustion() {
    let dir = tempfile::tempdir().unwrap();
    let input = dir.path().join("short.csv");
    write_incomes(&input, (1..=40).map(|i| (i * i).to_string()));
    let out = seqgini(&["estimate", "--input", input.to_str().unwrap()]);
    assert_eq!(code(&out), 3);
    let msg = stderr(&out);
    assert!(
        msg.contains("after 40 rows") && msg.contains("threshold"),
        "{msg}"
    );
}

#[test]
fn params_reports_truth_and_optimal_size() {
    let out = seqgini(&[
        "params",
        "--dist",
        "exponential",
        "--param",
        "rate=5",
        "--A",
        "50000",
        "--c",
        "0.1",
    ]);
    assert_eq!(code(&out), 0);
    let v: serde_json::Value = serde_json::from_slice(&out.stdout).unwrap();
    let get = |k: &str| v[k].as_f64().unwrap();
    assert!((get("xi2") - 0.0833).abs() < 5e-4);
    assert!((get("n_c") - 204.08).abs() < 0.1);
    assert!((get("min_risk") - 40.82).abs() < 0.01);

    let out = seqgini(&["params", "--dist", "exponential", "--param", "rate=1"]);
    let v: serde_json::Value = serde_json::from_slice(&out.stdout).unwrap();
    assert!((v["gini"].as_f64().unwrap() - 0.5).abs() < 1e-9);
    assert!(v.get("n_c").is_none());

    let out = seqgini(&[
        "params",
        "--dist",
        "gamma",
        "--param",
        "shape=2.649",
        "--param",
        "rate=0.84",
        "--format",
        "csv",
    ]);
    assert_eq!(code(&out), 0);
    let mut rdr = csv::Reader::from_reader(out.stdout.as_slice());
    let idx = rdr
        .headers()
        .unwrap()
        .iter()
        .position(|h| h == "xi2")
        .unwrap();
    let row = rdr.records().next().unwrap().unwrap();
    let xi2: f64 = row[idx].parse().unwrap();
    assert!((xi2 - 0.0468).abs() < 2e-4);
}

#[test]
fn params_rejects_unknown_distribution() {
    let out = seqgini(&["params", "--dist", "pareto"]);
    assert_eq!(code(&out), 2);
    assert!(stderr(&out).contains("pareto"));
    let out = seqgini(&["params", "--dist", "gamma", "--A", "5"]);
    assert_eq!(code(&out), 2);
}

#[test]
fn help_and_version_exit_cleanly() {
    assert_eq!(code(&seqgini(&["--help"])), 0);
    assert_eq!(code(&seqgini(&["--version"])), 0);
    assert_eq!(code(&seqgini(&["frobnicate"])), 2);
}
