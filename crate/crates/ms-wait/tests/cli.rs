//! End-to-end checks of the command-line surface: exit codes, file outputs
//! and the determinism contract.

use std::path::{Path, PathBuf};
use std::process::{Command, Output};

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_ms-wait"))
}

fn fixture(name: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR"))
        .join("tests/fixtures")
        .join(name)
}

fn run(args: &[&str]) -> Output {
    bin().args(args).output().unwrap()
}

fn write_six_stage_graph(dir: &Path) -> PathBuf {
    let path = dir.join("six.json");
    std::fs::write(
        &path,
        r#"{"stages":[0,1,2,3,4,5],"edges":[[0,1],[0,2],[1,3],[1,4],[3,5]]}"#,
    )
    .unwrap();
    path
}

fn write_scenario(dir: &Path) -> PathBuf {
    let sc = ms_wait::simulator::SimScenario::six_stage_preset(
        ms_wait::simulator::ModelKind::SemiMarkov,
        ms_wait::simulator::Family::Weibull,
        ms_wait::simulator::CensorKind::Independent,
        ms_wait::simulator::CensorRate::Low,
        120,
    );
    let path = dir.join("scenario.json");
    std::fs::write(&path, serde_json::to_vec_pretty(&sc).unwrap()).unwrap();
    path
}

#[test]
fn estimate_writes_curve_and_sidecar() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("f20.csv");
    let output = run(&[
        "estimate",
        "--data",
        fixture("bmt_synthetic.csv").to_str().unwrap(),
        "--graph",
        fixture("bmt9.json").to_str().unwrap(),
        "--method",
        "ipcw",
        "--censoring",
        "stage-dependent",
        "--quantity",
        "f",
        "--from",
        "0",
        "--stage",
        "2",
        "--out",
        out.to_str().unwrap(),
    ]);
    assert!(output.status.success(), "{output:?}");

    let curve = std::fs::read_to_string(&out).unwrap();
    let mut lines = curve.lines();
    assert_eq!(lines.next(), Some("t,value"));
    let rows: Vec<(f64, f64)> = lines
        .map(|l| {
            let (t, v) = l.split_once(',').unwrap();
            (t.parse().unwrap(), v.parse().unwrap())
        })
        .collect();
    assert!(rows.len() > 1);
    assert_eq!(rows[0], (0.0, 0.0));
    assert!(rows.windows(2).all(|w| w[0].1 <= w[1].1), "F must not decrease");
    assert!(rows.iter().all(|&(_, v)| (0.0..=1.0).contains(&v)));

    let sidecar: serde_json::Value = serde_json::from_str(
        &std::fs::read_to_string(dir.path().join("f20.components.json")).unwrap(),
    )
    .unwrap();
    assert_eq!(sidecar["target"], "F:2:0");
    assert_eq!(sidecar["method"], "ipcw");
    assert_eq!(sidecar["path_factors"].as_array().unwrap().len(), 1);
    let p_inf = sidecar["path_factors"][0]["p_inf"].as_f64().unwrap();
    assert!((0.0..=1.0).contains(&p_inf));
}

#[test]
fn estimate_rejects_inconsistent_quantity_flags() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("x.csv");
    let output = run(&[
        "estimate",
        "--data",
        fixture("bmt_synthetic.csv").to_str().unwrap(),
        "--graph",
        fixture("bmt9.json").to_str().unwrap(),
        "--method",
        "empirical",
        "--quantity",
        "p",
        "--from",
        "0",
        "--stage",
        "2",
        "--out",
        out.to_str().unwrap(),
    ]);
    assert_eq!(output.status.code(), Some(1), "P without --to must fail");
}

#[test]
fn missing_required_flag_exits_one() {
    let output = run(&["transitions", "--data", "whatever.csv"]);
    assert_eq!(output.status.code(), Some(1));
    assert!(!output.stderr.is_empty());
}

#[test]
fn missing_input_file_exits_two() {
    let dir = tempfile::tempdir().unwrap();
    let graph = write_six_stage_graph(dir.path());
    let output = run(&[
        "transitions",
        "--data",
        dir.path().join("nope.csv").to_str().unwrap(),
        "--graph",
        graph.to_str().unwrap(),
    ]);
    assert_eq!(output.status.code(), Some(2));
}

#[test]
fn malformed_data_exits_one() {
    let dir = tempfile::tempdir().unwrap();
    let graph = write_six_stage_graph(dir.path());
    let data = dir.path().join("bad.csv");
    std::fs::write(
        &data,
        "subject_id,stage,entry_time,exit_time,status\na,2,0.0,1.0,censored\n",
    )
    .unwrap();
    let output = run(&[
        "transitions",
        "--data",
        data.to_str().unwrap(),
        "--graph",
        graph.to_str().unwrap(),
    ]);
    assert_eq!(output.status.code(), Some(1));
}

#[test]
fn simulate_requires_seed_and_is_deterministic() {
    let dir = tempfile::tempdir().unwrap();
    let scenario = write_scenario(dir.path());
    let out = dir.path().join("sim.csv");

    let no_seed = run(&[
        "simulate",
        "--scenario",
        scenario.to_str().unwrap(),
        "--out",
        out.to_str().unwrap(),
    ]);
    assert_eq!(no_seed.status.code(), Some(1));

    let mut bytes = Vec::new();
    for _ in 0..2 {
        let truth = dir.path().join("truth.csv");
        let output = run(&[
            "simulate",
            "--scenario",
            scenario.to_str().unwrap(),
            "--seed",
            "99",
            "--out",
            out.to_str().unwrap(),
            "--truth-out",
            truth.to_str().unwrap(),
        ]);
        assert!(output.status.success());
        bytes.push(std::fs::read(&out).unwrap());

        // the truth view re-parses as a fully uncensored dataset
        let g = ms_wait::stage_graph::StageGraph::six_stage_example();
        let truth_ds = ms_wait::records::parse_dataset_path(&truth, &g).unwrap();
        assert_eq!(truth_ds.len(), 120);
        assert!(truth_ds.records().iter().all(|r| !r.is_censored()));
    }
    assert_eq!(bytes[0], bytes[1], "identical invocations must match byte-for-byte");

    // observed view parses and has some censoring under the low scheme
    let g = ms_wait::stage_graph::StageGraph::six_stage_example();
    let ds = ms_wait::records::parse_dataset_path(&out, &g).unwrap();
    assert_eq!(ds.len(), 120);
    assert!(ds.censored_fraction() > 0.05);
}

#[test]
fn benchmark_writes_report_csv() {
    let dir = tempfile::tempdir().unwrap();
    let scenario = write_scenario(dir.path());
    let out = dir.path().join("bench.csv");
    let output = run(&[
        "benchmark",
        "--scenario",
        scenario.to_str().unwrap(),
        "--reps",
        "20",
        "--ns",
        "50,100",
        "--methods",
        "ipcw,fre",
        "--targets",
        "F:3:1",
        "--out",
        out.to_str().unwrap(),
        "--oracle-n",
        "2000",
        "--seed",
        "3",
    ]);
    assert!(output.status.success(), "{output:?}");
    let text = std::fs::read_to_string(&out).unwrap();
    let mut lines = text.lines();
    assert_eq!(
        lines.next(),
        Some("scenario,n,method,target,delta_mean,delta_se,censor_rate")
    );
    assert_eq!(lines.count(), 4); // 2 ns x 2 methods x 1 target

    let missing_seed = run(&[
        "benchmark",
        "--scenario",
        scenario.to_str().unwrap(),
        "--out",
        out.to_str().unwrap(),
    ]);
    assert_eq!(missing_seed.status.code(), Some(1));
}

#[test]
fn curves_exports_counting_system_and_diagnostics() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("curves.csv");
    let psi = dir.path().join("psi.csv");
    let aalen = dir.path().join("aalen.csv");
    let output = run(&[
        "curves",
        "--data",
        fixture("bmt_synthetic.csv").to_str().unwrap(),
        "--graph",
        fixture("bmt9.json").to_str().unwrap(),
        "--stage",
        "2",
        "--method",
        "fre",
        "--censoring",
        "stage-dependent",
        "--out",
        out.to_str().unwrap(),
        "--psi-out",
        psi.to_str().unwrap(),
        "--aalen-out",
        aalen.to_str().unwrap(),
    ]);
    assert!(output.status.success(), "{output:?}");

    let curves = std::fs::read_to_string(&out).unwrap();
    let header = curves.lines().next().unwrap();
    assert_eq!(header, "t,at_risk,n_total,n_to_5,n_to_6");

    let psi_text = std::fs::read_to_string(&psi).unwrap();
    assert_eq!(
        psi_text.lines().next().unwrap(),
        "subject_id,target_stage,psi,provenance"
    );
    assert_eq!(psi_text.lines().count(), 138); // header + one row per subject

    let aalen_text = std::fs::read_to_string(&aalen).unwrap();
    assert!(aalen_text.starts_with("t,intercept,stage_1,stage_2"));
}

#[test]
fn help_exits_zero() {
    let output = run(&["--help"]);
    assert_eq!(output.status.code(), Some(0));
}
