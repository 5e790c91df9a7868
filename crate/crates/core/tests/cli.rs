//! End-to-end runs of the `aggnmf` binary.

use std::path::Path;
use std::process::{Command, Output};

fn aggnmf(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_aggnmf")).args(args).output().expect("binary runs")
}

fn ok(args: &[&str]) -> String {
    let out = aggnmf(args);
    assert!(out.status.success(), "{args:?} failed: {}", String::from_utf8_lossy(&out.stderr));
    String::from_utf8(out.stdout).unwrap()
}

fn p(path: &Path) -> &str {
    path.to_str().unwrap()
}

fn simulate(dir: &Path, extra: &[&str]) {
    let mut args = vec!["simulate", "--out", p(dir), "--periods", "30", "--series", "12", "--rank", "3", "--seed", "4"];
    args.extend_from_slice(extra);
    ok(&args);
}

#[test]
fn full_observation_round_trip() {
    let dir = tempfile::tempdir().unwrap();
    let sim = dir.path().join("sim");
    let smp = dir.path().join("smp");
    let rec = dir.path().join("rec");
    simulate(&sim, &[]);
    let truth = sim.join("truth.csv");
    let out = ok(&["sample", "--matrix", p(&truth), "--scheme", "periodic", "--interval", "1", "--out", p(&smp)]);
    assert!(out.starts_with("360 segments"), "{out}");
    ok(&[
        "recover",
        "--scheme-file",
        p(&smp.join("scheme.csv")),
        "--observations",
        p(&smp.join("observations.csv")),
        "--periods",
        "30",
        "--series",
        "12",
        "--rank",
        "2",
        "--out",
        p(&rec),
    ]);
    let out = ok(&["evaluate", "--estimate", p(&rec.join("V.csv")), "--truth", p(&truth)]);
    let error: f64 = out.trim().strip_prefix("normalized_error=").unwrap().parse().unwrap();
    assert!(error <= 1e-9, "{error}");
    let trace = std::fs::read_to_string(rec.join("trace.csv")).unwrap();
    assert!(trace.starts_with("iter,objective,penalized_objective,kkt,constraint_violation,min_entry\n"));
}

#[test]
fn simulate_is_reproducible_and_validated() {
    let dir = tempfile::tempdir().unwrap();
    let (a, b) = (dir.path().join("a"), dir.path().join("b"));
    simulate(&a, &[]);
    simulate(&b, &[]);
    for file in ["truth.csv", "history.csv", "rho.csv", "manifest.toml"] {
        assert_eq!(std::fs::read(a.join(file)).unwrap(), std::fs::read(b.join(file)).unwrap(), "{file}");
    }
    let default = dir.path().join("default");
    ok(&["simulate", "--out", p(&default)]);
    let text = std::fs::read_to_string(default.join("truth.csv")).unwrap();
    assert_eq!(text.lines().count(), 151);
    assert_eq!(text.lines().next().unwrap().split(',').count(), 120);

    let bad = aggnmf(&["simulate", "--out", p(&dir.path().join("bad")), "--periods", "0"]);
    assert_eq!(bad.status.code(), Some(2));
}

#[test]
fn sample_counts() {
    let dir = tempfile::tempdir().unwrap();
    let matrix = dir.path().join("m.csv");
    let mut text = (1..=4).map(|n| n.to_string()).collect::<Vec<_>>().join(",") + "\n";
    for t in 0..365 {
        text += &format!("{t},1,2,3\n");
    }
    std::fs::write(&matrix, text).unwrap();

    let out_dir = dir.path().join("p30");
    ok(&["sample", "--matrix", p(&matrix), "--scheme", "periodic", "--interval", "30", "--seed", "9", "--out", p(&out_dir)]);
    let scheme = std::fs::read_to_string(out_dir.join("scheme.csv")).unwrap();
    for column in 1..=4 {
        let count = scheme.lines().skip(1).filter(|l| l.starts_with(&format!("{column},"))).count();
        assert!(count == 12 || count == 13, "column {column}: {count}");
    }

    let short = dir.path().join("short.csv");
    let mut text = String::from("1,2\n");
    for t in 0..200 {
        text += &format!("{t},{t}\n");
    }
    std::fs::write(&short, text).unwrap();
    let out_dir = dir.path().join("r10");
    ok(&["sample", "--matrix", p(&short), "--scheme", "random", "--rate", "0.1", "--out", p(&out_dir)]);
    let scheme = std::fs::read_to_string(out_dir.join("scheme.csv")).unwrap();
    assert_eq!(scheme.lines().count(), 1 + 2 * 20);

    let bad = aggnmf(&["sample", "--matrix", p(&short), "--scheme", "periodic", "--interval", "0", "--out", p(&out_dir)]);
    assert_eq!(bad.status.code(), Some(2));
    let bad = aggnmf(&["sample", "--matrix", p(&short), "--scheme", "random", "--interval", "3", "--out", p(&out_dir)]);
    assert_eq!(bad.status.code(), Some(2));
}

#[test]
fn recover_penalized_and_reproducible() {
    let dir = tempfile::tempdir().unwrap();
    let sim = dir.path().join("sim");
    let smp = dir.path().join("smp");
    simulate(&sim, &[]);
    let truth = sim.join("truth.csv");
    ok(&["sample", "--matrix", p(&truth), "--scheme", "periodic", "--interval", "5", "--seed", "2", "--out", p(&smp)]);
    let scheme = smp.join("scheme.csv");
    let obs = smp.join("observations.csv");
    let rho = sim.join("rho.csv");
    let run = |out: &Path, penalized: bool| {
        let mut args = vec![
            "recover",
            "--scheme-file",
            p(&scheme),
            "--observations",
            p(&obs),
            "--periods",
            "30",
            "--series",
            "12",
            "--rank",
            "3",
            "--update",
            "nesterov",
            "--seed",
            "11",
            "--truth",
            p(&truth),
            "--out",
            p(out),
        ];
        if penalized {
            args.extend_from_slice(&["--penalized", "--rho-file", p(&rho), "--lambda", "auto"]);
        }
        aggnmf(&args)
    };
    let (a, b) = (dir.path().join("a"), dir.path().join("b"));
    assert!(run(&a, true).status.success());
    assert!(run(&b, true).status.success());
    for file in ["V.csv", "trace.csv"] {
        assert_eq!(std::fs::read(a.join(file)).unwrap(), std::fs::read(b.join(file)).unwrap(), "{file}");
    }
    let manifest = std::fs::read_to_string(a.join("manifest.toml")).unwrap();
    assert!(manifest.contains("penalized = true"));
    assert!(manifest.contains("final_error = "));
    assert!(run(&dir.path().join("plain"), false).status.success());

    let missing_rho = aggnmf(&[
        "recover",
        "--scheme-file",
        p(&scheme),
        "--observations",
        p(&obs),
        "--rank",
        "2",
        "--penalized",
        "--out",
        p(&dir.path().join("x")),
    ]);
    assert_eq!(missing_rho.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&missing_rho.stderr).contains("--rho-file"));
}

#[test]
fn evaluate_cases() {
    let dir = tempfile::tempdir().unwrap();
    let a = dir.path().join("a.csv");
    let zero = dir.path().join("zero.csv");
    let wide = dir.path().join("wide.csv");
    std::fs::write(&a, "1,2\n1.5,2\n0.5,4\n").unwrap();
    std::fs::write(&zero, "1,2\n0,0\n0,0\n").unwrap();
    std::fs::write(&wide, "1,2,3\n1,2,3\n").unwrap();
    assert_eq!(ok(&["evaluate", "--estimate", p(&a), "--truth", p(&a)]).trim(), "normalized_error=0.0000000000000000e0");
    assert_eq!(ok(&["evaluate", "--estimate", p(&zero), "--truth", p(&a)]).trim(), "normalized_error=1.0000000000000000e0");
    let mismatch = aggnmf(&["evaluate", "--estimate", p(&wide), "--truth", p(&a)]);
    assert_eq!(mismatch.status.code(), Some(3));
    let zero_truth = aggnmf(&["evaluate", "--estimate", p(&a), "--truth", p(&zero)]);
    assert_eq!(zero_truth.status.code(), Some(3));
}

#[test]
fn sweep_from_config_file() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("sweep.toml");
    std::fs::write(
        &cfg,
        "seed = 3\nrepeats = 3\nschemes = [\"random\"]\nintervals = [4]\nrates = [0.25]\n\
         methods = [\"interpolation\"]\n[dataset.synthetic]\nperiods = 20\nseries = 8\nrank = 2\n",
    )
    .unwrap();
    let out = dir.path().join("out");
    ok(&["sweep", "--config", p(&cfg), "--out", p(&out), "--jobs", "2"]);
    let results = std::fs::read_to_string(out.join("results.csv")).unwrap();
    let mut lines = results.lines();
    assert_eq!(
        lines.next().unwrap(),
        "dataset,scheme,rate,method,update,K,repeat,seed,error,runtime,converged,min_entry,status"
    );
    let rows: Vec<&str> = lines.collect();
    assert_eq!(rows.len(), 3);
    assert!(rows.iter().all(|r| r.starts_with("synthetic,random,0.25,interpolation,,,")));
    let summary = std::fs::read_to_string(out.join("summary.csv")).unwrap();
    assert_eq!(summary.lines().count(), 2);
    assert!(std::fs::read_to_string(out.join("manifest.toml")).unwrap().contains("repeats = 3"));

    std::fs::write(&cfg, "unknown_key = 1\n").unwrap();
    assert_eq!(aggnmf(&["sweep", "--config", p(&cfg), "--out", p(&out)]).status.code(), Some(2));
    let printed = ok(&["sweep", "--smoke", "--print-config"]);
    assert!(printed.contains("ranks = [\n    5,\n    10,\n    20,\n]") || printed.contains("ranks = [5, 10, 20]"), "{printed}");
}
