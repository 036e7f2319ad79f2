use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use serde_json::Value;

use pcv_core::cv::{kde_eval, minimize_cv, Sample, SearchConfig};
use pcv_core::mixtures::MixturePreset;
use pcv_core::pcv::{combine_weighted, make_partition};
use pcv_core::seed::split_seed;

fn pcv(args: &[&str]) -> Output {
    let mut cmd = Command::new(env!("CARGO_BIN_EXE_pcv"));
    for (k, _) in std::env::vars() {
        if k.starts_with("PCV_") {
            cmd.env_remove(k);
        }
    }
    cmd.args(args).output().expect("binary runs")
}

fn ok_json(args: &[&str]) -> Value {
    let out = pcv(args);
    assert!(
        out.status.success(),
        "{}",
        String::from_utf8_lossy(&out.stderr)
    );
    serde_json::from_slice(&out.stdout).unwrap()
}

fn ok_text(args: &[&str]) -> String {
    let out = pcv(args);
    assert!(
        out.status.success(),
        "{}",
        String::from_utf8_lossy(&out.stderr)
    );
    String::from_utf8(out.stdout).unwrap()
}

fn write_values(path: &Path, values: &[f64]) {
    let text: Vec<String> = values.iter().map(|v| format!("{v:?}")).collect();
    std::fs::write(path, text.join("\n")).unwrap();
}

fn data_file(dir: &Path, name: &str, n: usize, seed: u64) -> (PathBuf, Vec<f64>) {
    let values = MixturePreset::MW2.mixture().sample(n, seed);
    let path = dir.join(name);
    write_values(&path, &values);
    (path, values)
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

/// Rows of a CSV table as maps from column name to text.
fn csv_rows(text: &str) -> Vec<std::collections::HashMap<String, String>> {
    let mut r = csv::Reader::from_reader(text.as_bytes());
    let headers = r.headers().unwrap().clone();
    r.records()
        .map(|rec| {
            let rec = rec.unwrap();
            headers
                .iter()
                .map(str::to_owned)
                .zip(rec.iter().map(str::to_owned))
                .collect()
        })
        .collect()
}

#[test]
fn select_cv_matches_library() {
    let dir = tempfile::tempdir().unwrap();
    let (path, values) = data_file(dir.path(), "x.txt", 200, 5);
    let rec = ok_json(&["select", "--input", s(&path), "--method", "cv"]);
    let sample = Sample::new(values).unwrap();
    let lib = minimize_cv(&sample, &SearchConfig::for_sample(&sample).unwrap()).unwrap();
    assert_eq!(rec["h"].as_f64().unwrap(), lib.h);
    assert_eq!(rec["schema_version"], 1);
    assert_eq!(rec["method"], "CV");
    assert_eq!(rec["manifest"]["command"], "select");
}

#[test]
fn select_is_reproducible_modulo_timing() {
    let dir = tempfile::tempdir().unwrap();
    let (path, _) = data_file(dir.path(), "x.txt", 1500, 6);
    let args = [
        "select",
        "--input",
        s(&path),
        "--method",
        "pcvp",
        "--p",
        "6",
        "--permutations",
        "3",
        "--seed",
        "11",
    ];
    let mut a = ok_json(&args);
    let mut b = ok_json(&args);
    assert_ne!(a["wall_seconds"], Value::Null);
    a["wall_seconds"] = Value::Null;
    b["wall_seconds"] = Value::Null;
    assert_eq!(
        serde_json::to_string(&a).unwrap(),
        serde_json::to_string(&b).unwrap()
    );
    assert_eq!(a["per_group"].as_array().unwrap().len(), 18);
}

#[test]
fn thread_count_does_not_change_results() {
    let dir = tempfile::tempdir().unwrap();
    let (path, _) = data_file(dir.path(), "x.txt", 1500, 7);
    let base = [
        "select",
        "--input",
        s(&path),
        "--method",
        "pcvp",
        "--p",
        "5",
        "--permutations",
        "4",
    ];
    let one = ok_json(&[&base[..], &["--threads", "1"]].concat());
    let many = ok_json(&[&base[..], &["--threads", "3"]].concat());
    assert_eq!(one["h"], many["h"]);
    assert_eq!(one["per_group"], many["per_group"]);
}

#[test]
fn manifest_replay_reproduces_run() {
    let dir = tempfile::tempdir().unwrap();
    let (path, _) = data_file(dir.path(), "x.txt", 800, 8);
    let rec = ok_json(&[
        "select",
        "--input",
        s(&path),
        "--method",
        "pcv",
        "--p",
        "4",
        "--seed",
        "3",
    ]);
    let manifest = dir.path().join("m.json");
    std::fs::write(&manifest, serde_json::to_string(&rec["manifest"]).unwrap()).unwrap();
    let replay = ok_json(&["run", "--manifest", s(&manifest)]);
    assert_eq!(rec["h"], replay["h"]);
    assert_eq!(rec["per_group"], replay["per_group"]);
    assert_eq!(rec["manifest"], replay["manifest"]);
}

#[test]
fn environment_overrides_flags() {
    let dir = tempfile::tempdir().unwrap();
    let (path, _) = data_file(dir.path(), "x.txt", 800, 9);
    let flag = ok_json(&["select", "--input", s(&path), "--p", "4", "--seed", "21"]);
    let out = Command::new(env!("CARGO_BIN_EXE_pcv"))
        .args(["select", "--input", s(&path), "--p", "4"])
        .env("PCV_SEED", "21")
        .output()
        .unwrap();
    let env: Value = serde_json::from_slice(&out.stdout).unwrap();
    assert_eq!(flag["h"], env["h"]);
    assert_eq!(env["manifest"]["seed"], 21);
}

#[test]
fn chunked_select_equals_monolithic_combine() {
    let dir = tempfile::tempdir().unwrap();
    let chunks = dir.path().join("chunks");
    std::fs::create_dir(&chunks).unwrap();
    let sizes = [300, 257, 410, 333];
    let seed = 77;
    let mut bandwidths = Vec::new();
    let mut group_sizes = Vec::new();
    for (i, &m) in sizes.iter().enumerate() {
        let (_, values) = data_file(&chunks, &format!("part{i}.txt"), m, 100 + i as u64);
        let plan = make_partition(m, 2, split_seed(split_seed(seed, i as u64), 0)).unwrap();
        for group in plan.gather(&values) {
            group_sizes.push(group.len());
            let g = Sample::new(group).unwrap();
            bandwidths.push(
                minimize_cv(&g, &SearchConfig::for_sample(&g).unwrap())
                    .unwrap()
                    .h,
            );
        }
    }
    let total: usize = sizes.iter().sum();
    let expected = combine_weighted(&bandwidths, &group_sizes, total).unwrap();
    let rec = ok_json(&[
        "select",
        "--chunks-dir",
        s(&chunks),
        "--method",
        "pcv",
        "--p",
        "2",
        "--seed",
        "77",
    ]);
    assert!((rec["h"].as_f64().unwrap() - expected).abs() < 1e-12);
    assert_eq!(rec["n"], total);
    assert_eq!(rec["per_group"].as_array().unwrap().len(), 8);
}

#[test]
fn csv_input_with_label_filter() {
    let dir = tempfile::tempdir().unwrap();
    let values = MixturePreset::MW1.mixture().sample(600, 4);
    let mut text = String::from("id,value,kind\n");
    for (i, v) in values.iter().enumerate() {
        text.push_str(&format!(
            "{i},{v:?},{}\n",
            if i % 2 == 0 { "a" } else { "b" }
        ));
    }
    let path = dir.path().join("x.csv");
    std::fs::write(&path, text).unwrap();
    let plain = dir.path().join("a.txt");
    let evens: Vec<f64> = values.iter().step_by(2).copied().collect();
    write_values(&plain, &evens);
    let a = ok_json(&[
        "select",
        "--input",
        s(&path),
        "--column",
        "2",
        "--header",
        "--label-column",
        "3",
        "--label",
        "a",
        "--method",
        "cv",
    ]);
    let b = ok_json(&["select", "--input", s(&plain), "--method", "cv"]);
    assert_eq!(a["h"], b["h"]);
    assert_eq!(a["n"], 300);
}

#[test]
fn model_average_with_equal_weights_is_plain_mean() {
    let dir = tempfile::tempdir().unwrap();
    let (path, _) = data_file(dir.path(), "x.txt", 1000, 10);
    let prior = dir.path().join("prior.csv");
    std::fs::write(&prior, "c,density\n0,1\n100,1\n").unwrap();
    let ma = ok_json(&[
        "select",
        "--input",
        s(&path),
        "--method",
        "ma",
        "--p",
        "4,8",
        "--prior",
        s(&prior),
    ]);
    let h4 = ok_json(&["select", "--input", s(&path), "--p", "4"])["h"]
        .as_f64()
        .unwrap();
    let h8 = ok_json(&["select", "--input", s(&path), "--p", "8"])["h"]
        .as_f64()
        .unwrap();
    assert!((ma["h"].as_f64().unwrap() - (h4 + h8) / 2.0).abs() < 1e-15);
    let table = csv_rows(&ok_text(&[
        "select",
        "--input",
        s(&path),
        "--method",
        "ma",
        "--p",
        "4,8",
        "--prior",
        s(&prior),
        "--format",
        "csv",
    ]));
    assert_eq!(table.len(), 2);
    assert_eq!(table[1]["p"], "8");
}

#[test]
fn oracle_values() {
    let rec = ok_json(&["oracle", "--mixture", "MW1", "--n", "100"]);
    let row = &rec["rows"][0];
    assert!((row["h_opt"].as_f64().unwrap() - 0.4455).abs() < 5e-5);
    assert!((row["h_tilde"].as_f64().unwrap() - 0.4166).abs() < 5e-5);
    assert!((rec["constants"]["c"].as_f64().unwrap() / 5.51 - 1.0).abs() < 0.01);
    let mw8 = ok_json(&["oracle", "--mixture", "mw8", "--n", "25000"]);
    assert!((mw8["rows"][0]["h_opt"].as_f64().unwrap() - 0.0835).abs() < 5e-5);
}

#[test]
fn oracle_reads_mixture_files() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("mix.txt");
    std::fs::write(&path, "# standard normal split in two\n1,0,1\n1,0,1\n").unwrap();
    let file = ok_json(&["oracle", "--mixture", s(&path), "--n", "500"]);
    let preset = ok_json(&["oracle", "--mixture", "MW1", "--n", "500"]);
    let (a, b) = (
        file["rows"][0]["h_opt"].as_f64().unwrap(),
        preset["rows"][0]["h_opt"].as_f64().unwrap(),
    );
    assert!((a - b).abs() < 1e-9);

    std::fs::write(&path, "1,0\n").unwrap();
    let out = pcv(&["oracle", "--mixture", s(&path), "--n", "500"]);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn asymptotics_factors() {
    let rec = ok_json(&[
        "asymptotics",
        "--n",
        "1000",
        "--p",
        "2,220",
        "--permutations",
        "10",
        "--k",
        "2.68",
    ]);
    let factors = rec["permutation_factors"].as_array().unwrap();
    let f = |p: f64| {
        factors.iter().find(|x| x["p"].as_f64() == Some(p)).unwrap()["factor"]
            .as_f64()
            .unwrap()
    };
    assert!((f(2.0) - 0.55).abs() < 1e-15);
    assert!((f(220.0) - (0.1 + 0.9 / 220.0)).abs() < 1e-15);
    let ratio = rec["inflation"][0]["ratio"].as_f64().unwrap();
    assert_eq!((ratio * 100.0).round() / 100.0, 1.14);
}

#[test]
fn simulate_csv_round_trips_json() {
    let args = [
        "simulate",
        "--mixture",
        "MW2",
        "--n",
        "300",
        "--replicates",
        "4",
        "--methods",
        "cv,pcv,pcvp",
        "--p",
        "3",
        "--permutations",
        "2",
        "--seed",
        "5",
    ];
    let table = csv_rows(&ok_text(&args));
    let json = ok_json(&[&args[..], &["--format", "json"]].concat());
    let summaries = json["summaries"].as_array().unwrap();
    assert_eq!(table.len(), summaries.len());
    assert_eq!(table.len(), 3);
    for (row, js) in table.iter().zip(summaries) {
        assert_eq!(row["schema_version"], "1");
        for col in ["mean", "variance", "std_error", "sse_vs_opt", "t_stat"] {
            let text: f64 = row[col].parse().unwrap();
            assert_eq!(text.to_bits(), js[col].as_f64().unwrap().to_bits(), "{col}");
        }
    }
    let expected = [
        "schema_version",
        "mixture",
        "n",
        "method",
        "p",
        "permutations",
        "replicates",
        "mean",
        "variance",
        "std_error",
        "sse_vs_opt",
        "h_opt",
        "h_tilde",
        "t_stat",
        "boundary_count",
    ];
    let header = ok_text(&args).lines().next().unwrap().to_owned();
    assert_eq!(header, expected.join(","));
}

#[test]
fn simulate_writes_draws() {
    let dir = tempfile::tempdir().unwrap();
    let draws = dir.path().join("draws.csv");
    ok_text(&[
        "simulate",
        "--n",
        "200",
        "--replicates",
        "3",
        "--draws-out",
        s(&draws),
    ]);
    let rows = csv_rows(&std::fs::read_to_string(&draws).unwrap());
    assert_eq!(rows.len(), 3);
    assert_eq!(rows[2]["replicate"], "2");
}

#[test]
fn density_mass_and_shared_bandwidth() {
    let dir = tempfile::tempdir().unwrap();
    let (path, _) = data_file(dir.path(), "x.txt", 500, 12);
    let one = ok_json(&[
        "density",
        "--input",
        s(&path),
        "--method",
        "cv",
        "--format",
        "json",
    ]);
    let grid: Vec<f64> = serde_json::from_value(one["grid"].clone()).unwrap();
    let f: Vec<f64> = serde_json::from_value(one["curves"][0]["values"].clone()).unwrap();
    assert_eq!(grid.len(), 512);
    let mass: f64 = grid
        .windows(2)
        .zip(f.windows(2))
        .map(|(x, y)| (x[1] - x[0]) * (y[0] + y[1]) / 2.0)
        .sum();
    assert!((mass - 1.0).abs() < 0.01, "{mass}");

    let copy = dir.path().join("y.txt");
    std::fs::copy(&path, &copy).unwrap();
    let both = ok_json(&[
        "density",
        "--input",
        &format!("{},{}", s(&path), s(&copy)),
        "--method",
        "cv",
        "--format",
        "json",
    ]);
    assert_eq!(both["curves"][0]["values"], both["curves"][1]["values"]);
    assert_eq!(both["h"], one["h"]);
}

#[test]
fn density_common_bandwidth_is_mean() {
    let dir = tempfile::tempdir().unwrap();
    let (a, _) = data_file(dir.path(), "a.txt", 400, 13);
    let (b, _) = data_file(dir.path(), "b.txt", 400, 14);
    let rec = ok_json(&[
        "density",
        "--input",
        &format!("{},{}", s(&a), s(&b)),
        "--method",
        "cv",
        "--grid",
        "-3,3,7",
        "--format",
        "json",
    ]);
    let sel: Vec<f64> = serde_json::from_value(rec["selected"].clone()).unwrap();
    assert_eq!(sel.len(), 2);
    assert!((rec["h"].as_f64().unwrap() - (sel[0] + sel[1]) / 2.0).abs() < 1e-15);
    assert_eq!(
        rec["grid"],
        serde_json::json!([-3.0, -2.0, -1.0, 0.0, 1.0, 2.0, 3.0])
    );
}

#[test]
fn chunked_density_matches_pooled() {
    let dir = tempfile::tempdir().unwrap();
    let chunks = dir.path().join("chunks");
    std::fs::create_dir(&chunks).unwrap();
    let mut pooled = Vec::new();
    for i in 0..3 {
        let (_, v) = data_file(&chunks, &format!("c{i}.txt"), 150 + 40 * i, 30 + i as u64);
        pooled.extend(v);
    }
    let rec = ok_json(&[
        "density",
        "--chunks-dir",
        s(&chunks),
        "--h",
        "0.3",
        "--grid",
        "-4,4,41",
        "--format",
        "json",
    ]);
    let f: Vec<f64> = serde_json::from_value(rec["curves"][0]["values"].clone()).unwrap();
    let grid: Vec<f64> = serde_json::from_value(rec["grid"].clone()).unwrap();
    let oracle = kde_eval(&Sample::new(pooled).unwrap(), 0.3, &grid).unwrap();
    for (a, b) in f.iter().zip(&oracle) {
        assert!((a - b).abs() < 1e-12);
    }
}

#[test]
fn bench_reports_rows() {
    let rows = csv_rows(&ok_text(&["bench", "--sizes", "400", "--datasets", "1"]));
    assert_eq!(rows.len(), 1);
    assert_eq!(rows[0]["p"], "15");
    assert!(rows[0]["ratio"].parse::<f64>().unwrap() > 0.0);
}

#[test]
fn exit_codes() {
    let dir = tempfile::tempdir().unwrap();
    let missing = dir.path().join("missing.txt");
    let out = pcv(&["select", "--input", s(&missing)]);
    assert_eq!(out.status.code(), Some(3));
    let err: Value = serde_json::from_slice(&out.stderr).unwrap();
    assert_eq!(err["error"], "io");
    assert_eq!(err["exit_code"], 3);

    let constant = dir.path().join("c.txt");
    write_values(&constant, &[1.5; 50]);
    let out = pcv(&["select", "--input", s(&constant), "--method", "cv"]);
    assert_eq!(out.status.code(), Some(4));

    assert_eq!(pcv(&["select", "--method", "nope"]).status.code(), Some(2));
    let (path, _) = data_file(dir.path(), "x.txt", 100, 1);
    assert_eq!(
        pcv(&["select", "--input", s(&path), "--p", "10"])
            .status
            .code(),
        Some(2)
    );
    assert_eq!(
        pcv(&["simulate", "--n", "100", "--replicates", "1"])
            .status
            .code(),
        Some(2)
    );
}

#[test]
fn written_output_goes_to_file() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("o.json");
    let res = pcv(&["oracle", "--n", "1000", "--out", s(&out)]);
    assert!(res.status.success());
    assert!(res.stdout.is_empty());
    let rec: Value = serde_json::from_str(&std::fs::read_to_string(&out).unwrap()).unwrap();
    assert_eq!(rec["rows"][0]["n"], 1000);
}
