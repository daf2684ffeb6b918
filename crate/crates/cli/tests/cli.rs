use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use serde_json::{json, Value};

const SUBCOMMANDS: &[&[&str]] = &[
    &["w1"],
    &["kernel", "eval"],
    &["gram"],
    &["fit"],
    &["predict"],
    &["mmd"],
    &["simulate"],
    &["label"],
    &["modulus"],
    &["mcshane-check"],
    &["converge"],
    &["transfer"],
    &["selftest"],
    &["version"],
];

fn mfk(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_mfk")).args(args).output().expect("spawn mfk")
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

fn write_json(dir: &Path, name: &str, v: &Value) -> PathBuf {
    let p = dir.join(name);
    fs::write(&p, serde_json::to_string_pretty(v).unwrap()).unwrap();
    p
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

/// Option lines of a clap help page, as (flag text, description). The
/// description is either inline or on the following, further indented line.
fn documented_options(help: &str) -> Vec<(String, String)> {
    let mut out: Vec<(String, String)> = Vec::new();
    let mut in_options = false;
    let mut pending: Option<usize> = None;
    for line in help.lines() {
        if line.ends_with(':') && !line.starts_with(' ') {
            in_options = line == "Options:";
            pending = None;
            continue;
        }
        if !in_options {
            continue;
        }
        let trimmed = line.trim_start();
        // "-v, --verbose" or "--mu"; possible-value lines look like "- exact: …"
        let b = trimmed.as_bytes();
        let is_flag = trimmed.starts_with("--") || (b.len() > 2 && b[0] == b'-' && b[1].is_ascii_alphabetic() && b[2] == b',');
        if is_flag {
            match trimmed.split_once("  ") {
                Some((f, d)) => {
                    out.push((f.trim().to_string(), d.trim().to_string()));
                    pending = None;
                }
                None => {
                    out.push((trimmed.to_string(), String::new()));
                    pending = Some(out.len() - 1);
                }
            }
        } else if let Some(i) = pending.take() {
            out[i].1 = trimmed.to_string();
        }
    }
    out
}

#[test]
fn every_flag_is_documented() {
    for sub in SUBCOMMANDS {
        let mut args: Vec<&str> = sub.to_vec();
        args.push("--help");
        let o = mfk(&args);
        assert!(o.status.success(), "{sub:?} --help failed");
        let help = stdout(&o);
        let options = documented_options(&help);
        assert!(options.iter().any(|(f, _)| f.starts_with("-h, --help")), "{sub:?}: no options parsed\n{help}");
        for (flag, desc) in &options {
            assert!(!desc.is_empty(), "{sub:?}: flag {flag} has no description");
        }
        for global in ["--threads", "--verbose"] {
            assert!(options.iter().any(|(f, _)| f.contains(global)), "{sub:?} lacks {global}");
        }
    }
}

#[test]
fn undocumented_flags_are_rejected() {
    let o = mfk(&["w1", "--no-such-flag"]);
    assert_eq!(o.status.code(), Some(1));
    assert!(stderr(&o).starts_with("error[USAGE]:"), "{}", stderr(&o));
}

#[test]
fn w1_of_a_measure_with_itself_is_zero() {
    let dir = tempfile::tempdir().unwrap();
    let a = write_json(dir.path(), "a.json", &json!({"dim": 2, "points": [[0.1, 0.2], [0.7, 0.4], [0.3, 0.9]]}));
    let o = mfk(&["w1", "--mu", s(&a), "--nu", s(&a), "--metric", "euclidean"]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    assert_eq!(stdout(&o), "0.000000000000\n");
}

#[test]
fn w1_solvers_agree_in_one_dimension() {
    let dir = tempfile::tempdir().unwrap();
    let a = write_json(dir.path(), "a.json", &json!({"dim": 1, "points": [[0.0], [1.0]], "weights": [0.25, 0.75]}));
    let b = dir.path().join("b.csv");
    fs::write(&b, "0.5\n2.0\n").unwrap();
    let exact = mfk(&["w1", "--mu", s(&a), "--nu", s(&b)]);
    let one_d = mfk(&["w1", "--mu", s(&a), "--nu", s(&b), "--solver", "1d"]);
    // mass 0.25 moves 0.5, 0.25 moves 0.5, 0.5 moves 1.0
    assert_eq!(stdout(&exact), "0.750000000000\n");
    assert_eq!(stdout(&exact), stdout(&one_d));
    let plan = dir.path().join("plan.csv");
    assert!(mfk(&["w1", "--mu", s(&a), "--nu", s(&b), "--plan", s(&plan)]).status.success());
    assert!(fs::read_to_string(&plan).unwrap().lines().count() >= 2);
}

#[test]
fn sinkhorn_reports_non_convergence() {
    let dir = tempfile::tempdir().unwrap();
    let a = write_json(dir.path(), "a.json", &json!({"dim": 1, "points": [[0.0], [1.0]]}));
    let b = write_json(dir.path(), "b.json", &json!({"dim": 1, "points": [[0.2], [3.0]]}));
    let ok = mfk(&["w1", "--mu", s(&a), "--nu", s(&b), "--solver", "sinkhorn", "--eps", "0.2"]);
    assert!(ok.status.success(), "{}", stderr(&ok));
    let v: f64 = stdout(&ok).trim().parse().unwrap();
    // between the exact cost and the cost of the independent coupling
    assert!((1.1 - 1e-9..=1.5).contains(&v), "{v}");

    let capped = mfk(&["w1", "--mu", s(&a), "--nu", s(&b), "--solver", "sinkhorn", "--eps", "1e-4", "--max-iters", "1"]);
    assert_eq!(capped.status.code(), Some(2));
    assert!(stderr(&capped).starts_with("error[NOT_CONVERGED]:"));
    assert!(!stdout(&capped).trim().is_empty());
}

#[test]
fn malformed_config_is_a_parse_error() {
    let dir = tempfile::tempdir().unwrap();
    let p = dir.path().join("bad.json");
    fs::write(&p, "{\"kernel\": ").unwrap();
    for sub in ["converge", "transfer", "mcshane-check"] {
        let o = mfk(&[sub, "--config", s(&p)]);
        assert_eq!(o.status.code(), Some(1), "{sub}");
        assert!(stderr(&o).starts_with("error[CONFIG_PARSE]:"), "{sub}: {}", stderr(&o));
        assert_eq!(stderr(&o).lines().count(), 1);
    }
    let unknown_key = write_json(
        dir.path(),
        "extra.json",
        &json!({"family": "double_sum", "base": {"kind": "gaussian", "gamma": 0.5}, "colour": "red"}),
    );
    let a = write_json(dir.path(), "a.json", &json!({"dim": 1, "points": [[0.0]]}));
    let nested_unknown = write_json(
        dir.path(),
        "conv.json",
        &json!({
            "kernel": {"family": "double_sum", "base": {"kind": "gaussian", "gamma": 0.5}},
            "mu": {"kind": "uniform", "lower": [0.0], "upper": [1.0], "seed": 3},
            "nu": {"kind": "uniform", "lower": [0.0], "upper": [1.0]},
            "m_grid": [4, 8]
        }),
    );
    let o = mfk(&["converge", "--config", s(&nested_unknown)]);
    assert_eq!(o.status.code(), Some(1));
    assert!(stderr(&o).starts_with("error[CONFIG_PARSE]:"), "{}", stderr(&o));
    let o = mfk(&["kernel", "eval", "--kernel", s(&unknown_key), "--mu", s(&a), "--nu", s(&a)]);
    assert_eq!(o.status.code(), Some(1));
    assert!(stderr(&o).starts_with("error[CONFIG_PARSE]:"));
}

#[test]
fn converge_without_a_known_limit_is_rejected() {
    let dir = tempfile::tempdir().unwrap();
    // inverse multiquadric double sum in two dimensions has no implemented limit oracle
    let cfg = write_json(
        dir.path(),
        "c.json",
        &json!({
            "kernel": {"family": "double_sum", "base": {"kind": "inverse_multiquadric", "c": 1.0}},
            "mu": {"kind": "uniform", "lower": [0.0, 0.0], "upper": [1.0, 1.0]},
            "nu": {"kind": "uniform", "lower": [0.0, 0.0], "upper": [1.0, 1.0]},
            "m_grid": [4, 8],
            "seeds": 8
        }),
    );
    let o = mfk(&["converge", "--config", s(&cfg)]);
    assert_eq!(o.status.code(), Some(1));
    assert!(stderr(&o).starts_with("error[UNKNOWN_LIMIT]:"), "{}", stderr(&o));
    assert!(stdout(&o).is_empty());
}

#[test]
fn missing_input_is_a_runtime_error() {
    let o = mfk(&["w1", "--mu", "/nonexistent/a.json", "--nu", "/nonexistent/b.json"]);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).starts_with("error[IO]:"));
}

fn small_convergence_config(dir: &Path) -> PathBuf {
    write_json(
        dir,
        "conv.json",
        &json!({
            "kernel": {"family": "pullback", "base": {"kind": "gaussian", "gamma": 0.5}, "feature_map": {"kind": "mean"}},
            "mu": {"kind": "uniform", "lower": [0.0], "upper": [0.4]},
            "nu": {"kind": "uniform", "lower": [0.6], "upper": [1.0]},
            "m_grid": [8, 32, 128],
            "seeds": 8,
            "seed": 3
        }),
    )
}

#[test]
fn version_is_stable_and_matches_report_hash() {
    let a = mfk(&["version"]);
    let b = mfk(&["version"]);
    assert!(a.status.success());
    assert_eq!(a.stdout, b.stdout);
    let first = stdout(&a).lines().next().unwrap().to_string();
    let ver = first.strip_prefix("mfk ").unwrap();
    let parts: Vec<&str> = ver.split('.').collect();
    assert_eq!(parts.len(), 3);
    assert!(parts.iter().all(|p| p.parse::<u64>().is_ok()));

    let dir = tempfile::tempdir().unwrap();
    let cfg = small_convergence_config(dir.path());
    let v = mfk(&["version", "--config", s(&cfg)]);
    let hash = stdout(&v).lines().find_map(|l| l.strip_prefix("config_hash: ")).unwrap().to_string();
    assert_eq!(hash.len(), 64);

    let out = dir.path().join("r.json");
    assert!(mfk(&["converge", "--config", s(&cfg), "--out", s(&out)]).status.success());
    let report: Value = serde_json::from_str(&fs::read_to_string(&out).unwrap()).unwrap();
    assert_eq!(report["provenance"]["config_hash"], json!(hash));
    // the resolved config, defaults included, is embedded
    assert_eq!(report["provenance"]["config"]["seeds"], json!(8));

    let csv = dir.path().join("r.csv");
    assert!(mfk(&["converge", "--config", s(&cfg), "--out", s(&csv), "--format", "csv"]).status.success());
    assert!(fs::read_to_string(&csv).unwrap().contains(&hash));
}

#[test]
fn converge_writes_a_dat_file() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = small_convergence_config(dir.path());
    let dat = dir.path().join("c.dat");
    let o = mfk(&["converge", "--config", s(&cfg), "--dat", s(&dat)]);
    assert!(o.status.success(), "{}", stderr(&o));
    let text = fs::read_to_string(&dat).unwrap();
    let rows: Vec<Vec<f64>> = text
        .lines()
        .filter(|l| !l.starts_with('#') && !l.trim().is_empty())
        .map(|l| l.split_whitespace().map(|c| c.parse().unwrap()).collect())
        .collect();
    assert_eq!(rows.len(), 3);
    for r in &rows {
        assert_eq!(r.len(), 4);
        assert!(r[2] <= r[1] && r[1] <= r[3]);
    }
    let report: Value = serde_json::from_slice(&o.stdout).unwrap();
    assert_eq!(report["report"], "convergence");
}

#[test]
fn dataset_pipeline_runs_end_to_end() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    let dynamics = write_json(
        d,
        "dyn.json",
        &json!({
            "domain": {"lower": [0.0], "upper": [1.0]},
            "initial": {"kind": "uniform", "lower": [0.2], "upper": [0.8]},
            "dt": 0.01,
            "model": {"kind": "attraction_repulsion", "attraction": 1.0, "repulsion": 0.5, "repulsion_length": 0.1, "sigma": 0.1}
        }),
    );
    let kernel = write_json(d, "k.json", &json!({"family": "double_sum", "base": {"kind": "gaussian", "gamma": 0.5}}));
    let obs = write_json(
        d,
        "obs.json",
        &json!({"kind": "interaction_energy", "pair_potential": {"kind": "gaussian", "gamma": 0.5}}),
    );
    let traj = d.join("traj.jsonl");
    let o = mfk(&["simulate", "--dynamics", s(&dynamics), "--m", "16", "--steps", "40", "--every", "4", "--seed", "5", "--out", s(&traj)]);
    assert!(o.status.success(), "{}", stderr(&o));
    assert_eq!(fs::read_to_string(&traj).unwrap().lines().count(), 1 + 11);

    let labelled = d.join("lab.jsonl");
    assert!(mfk(&["label", "--data", s(&traj), "--observable", s(&obs), "--out", s(&labelled)]).status.success());

    let g = mfk(&["gram", "--kernel", s(&kernel), "--data", s(&labelled)]);
    assert!(g.status.success());
    assert_eq!(stdout(&g).lines().count(), 11);
    assert!(stderr(&g).contains("pass=true"));

    let model = d.join("model.json");
    assert!(mfk(&["fit", "--kernel", s(&kernel), "--data", s(&labelled), "--lambda", "1e-6", "--out", s(&model)]).status.success());
    let p = mfk(&["predict", "--model", s(&model), "--data", s(&labelled)]);
    assert!(p.status.success());
    let preds: Vec<f64> = stdout(&p).lines().map(|l| l.parse().unwrap()).collect();
    let labels: Vec<f64> = fs::read_to_string(&labelled)
        .unwrap()
        .lines()
        .skip(1)
        .map(|l| serde_json::from_str::<Value>(l).unwrap()["label"].as_f64().unwrap())
        .collect();
    assert_eq!(preds.len(), labels.len());
    for (p, y) in preds.iter().zip(&labels) {
        assert!((p - y).abs() < 1e-3, "{p} vs {y}");
    }

    let fit_without_labels = mfk(&["fit", "--kernel", s(&kernel), "--data", s(&traj), "--lambda", "1e-6"]);
    assert_eq!(fit_without_labels.status.code(), Some(1));
}

#[test]
fn mmd_and_kernel_eval() {
    let dir = tempfile::tempdir().unwrap();
    let a = write_json(dir.path(), "a.json", &json!({"dim": 1, "points": [[0.0]]}));
    let b = write_json(dir.path(), "b.json", &json!({"dim": 1, "points": [[1.0]]}));
    let o = mfk(&["mmd", "--mu", s(&a), "--nu", s(&b), "--base", "gaussian:0.5"]);
    let v: f64 = stdout(&o).trim().parse().unwrap();
    assert!((v - (2.0 - 2.0 * (-1.0f64).exp()).sqrt()).abs() < 1e-11);
    let k = write_json(dir.path(), "k.json", &json!({"family": "double_sum", "base": {"kind": "gaussian", "gamma": 0.5}}));
    let o = mfk(&["kernel", "eval", "--kernel", s(&k), "--mu", s(&a), "--nu", s(&b)]);
    let v: f64 = stdout(&o).trim().parse().unwrap();
    assert_eq!(v, (-1.0f64).exp());
    let bad = mfk(&["mmd", "--mu", s(&a), "--nu", s(&b), "--base", "laplace:1"]);
    assert_eq!(bad.status.code(), Some(1));
}

#[test]
fn modulus_reports_estimate_and_analytic_bound() {
    let dir = tempfile::tempdir().unwrap();
    let k = write_json(
        dir.path(),
        "k.json",
        &json!({"family": "pullback", "base": {"kind": "gaussian", "gamma": 0.5}, "feature_map": {"kind": "mean"}}),
    );
    let sampler = write_json(dir.path(), "s.json", &json!({"kind": "uniform", "lower": [0.0], "upper": [1.0]}));
    let o = mfk(&["modulus", "--kernel", s(&k), "--sampler", s(&sampler), "--m", "8", "--trials", "50"]);
    assert!(o.status.success(), "{}", stderr(&o));
    let v: Value = serde_json::from_slice(&o.stdout).unwrap();
    let slope = v["analytic"]["modulus"]["slope"].as_f64().unwrap();
    for sample in v["estimate"]["samples"].as_array().unwrap() {
        let (r, dev) = (sample["distance"].as_f64().unwrap(), sample["deviation"].as_f64().unwrap());
        assert!(dev <= slope * r + 1e-12);
    }
}

#[test]
fn selftest_passes() {
    let o = mfk(&["selftest", "--seed", "11"]);
    assert!(o.status.success(), "{}{}", stdout(&o), stderr(&o));
    assert!(stdout(&o).lines().all(|l| l.contains(" PASS ")));
}

#[test]
fn thread_count_does_not_change_results() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = small_convergence_config(dir.path());
    let one = mfk(&["--threads", "1", "converge", "--config", s(&cfg)]);
    let two = mfk(&["converge", "--config", s(&cfg), "--threads", "3"]);
    assert!(one.status.success() && two.status.success());
    assert_eq!(one.stdout, two.stdout);
}
