use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use serde_json::Value;

fn cemf(dir: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_cemf"))
        .current_dir(dir)
        .args(args)
        .output()
        .expect("binary runs")
}

fn ok(dir: &Path, args: &[&str]) -> Value {
    let out = cemf(dir, args);
    assert!(
        out.status.success(),
        "cemf {args:?} failed: {}",
        String::from_utf8_lossy(&out.stderr)
    );
    serde_json::from_slice(&out.stdout).unwrap_or(Value::Null)
}

fn read_json(path: impl AsRef<Path>) -> Value {
    serde_json::from_str(&fs::read_to_string(path).unwrap()).unwrap()
}

/// Three taste clusters with some noise, from a fixed linear congruential
/// sequence.
fn write_ratings(dir: &Path) {
    let mut state = 12345u64;
    let mut next = || {
        state = state
            .wrapping_mul(6364136223846793005)
            .wrapping_add(1442695040888963407);
        (state >> 33) as f64 / (1u64 << 31) as f64
    };
    let mut body = String::from("userId,movieId,rating,timestamp\n");
    for u in 0..60 {
        for m in 0..45 {
            if (m / 15 == u % 3 && next() < 0.6) || next() < 0.08 {
                let rating = if next() < 0.8 { 5.0 } else { 3.0 };
                body.push_str(&format!("{u},{m},{rating},{}\n", 1000 + m));
            }
        }
    }
    fs::write(dir.join("ratings.csv"), body).unwrap();
}

fn pipeline(dir: &Path) {
    ok(
        dir,
        &[
            "prepare",
            "--dataset",
            "movielens",
            "--input",
            "ratings.csv",
            "--out",
            "data",
            "--seed",
            "7",
        ],
    );
    let s = ok(
        dir,
        &[
            "sppmi",
            "--train",
            "data/train.tsv",
            "--k",
            "1",
            "--out",
            "data/sppmi.tsv",
        ],
    );
    assert!(s["nnz"].as_u64().unwrap() > 0);
    ok(
        dir,
        &[
            "train",
            "--train",
            "data/train.tsv",
            "--sppmi",
            "data/sppmi.tsv",
            "--mode",
            "cemf",
            "--d",
            "4",
            "--alpha",
            "10",
            "--lambda",
            "0.01",
            "--iters",
            "8",
            "--seed",
            "3",
            "--out",
            "model",
        ],
    );
    ok(
        dir,
        &[
            "evaluate",
            "--model",
            "model",
            "--train",
            "data/train.tsv",
            "--test",
            "data/test.tsv",
            "--val",
            "data/val.tsv",
            "--n",
            "1,5,10",
            "--out",
            "report.json",
        ],
    );
}

#[test]
fn pipeline_reruns_are_byte_identical() {
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    for dir in [a.path(), b.path()] {
        write_ratings(dir);
        pipeline(dir);
    }
    for file in [
        "data/train.tsv",
        "data/val.tsv",
        "data/test.tsv",
        "data/manifest.json",
        "data/sppmi.tsv",
        "model/X.bin",
        "model/Y.bin",
        "model/model.json",
        "report.json",
        "report.csv",
    ] {
        assert_eq!(
            fs::read(a.path().join(file)).unwrap(),
            fs::read(b.path().join(file)).unwrap(),
            "{file}"
        );
    }

    let report = read_json(a.path().join("report.json"));
    assert_eq!(report["n_values"], serde_json::json!([1, 5, 10]));
    assert!(report["overall"]["evaluated_users"].as_u64().unwrap() > 0);
    let model = read_json(a.path().join("model/model.json"));
    assert_eq!(model["extra"]["sweeps"], 8);
    assert_eq!(model["extra"]["loss_trace"].as_array().unwrap().len(), 8);
    let csv = fs::read_to_string(a.path().join("report.csv")).unwrap();
    assert!(csv.starts_with("group,users,n,metric,value\n"));
}

#[test]
fn recommend_lists_unseen_items() {
    let dir = tempfile::tempdir().unwrap();
    write_ratings(dir.path());
    pipeline(dir.path());
    let out = cemf(
        dir.path(),
        &[
            "recommend",
            "--model",
            "model",
            "--train",
            "data/train.tsv",
            "--n",
            "4",
            "--users",
            "0,5",
        ],
    );
    assert!(out.status.success());
    let text = String::from_utf8(out.stdout).unwrap();
    let rows: Vec<Vec<&str>> = text
        .lines()
        .skip(1)
        .map(|l| l.split('\t').collect())
        .collect();
    assert_eq!(rows.len(), 8);
    let train = fs::read_to_string(dir.path().join("data/train.tsv")).unwrap();
    for row in rows {
        let seen = format!("{}\t{}\t", row[0], row[2]);
        assert!(!train.lines().any(|l| l.starts_with(&seen)));
    }
}

#[test]
fn flags_override_config_values() {
    let dir = tempfile::tempdir().unwrap();
    write_ratings(dir.path());
    ok(
        dir.path(),
        &[
            "prepare",
            "--dataset",
            "movielens",
            "--input",
            "ratings.csv",
            "--out",
            "data",
        ],
    );
    fs::write(
        dir.path().join("cemf.toml"),
        "[train]\ntrain = \"data/train.tsv\"\nmode = \"wmf\"\nd = 3\niters = 2\nout = \"from-config\"\n",
    )
    .unwrap();
    ok(
        dir.path(),
        &[
            "--config",
            "cemf.toml",
            "train",
            "--d",
            "5",
            "--out",
            "from-flag",
        ],
    );
    let model = read_json(dir.path().join("from-flag/model.json"));
    assert_eq!(model["hyperparams"]["d"], 5);
    assert_eq!(model["hyperparams"]["n_iterations"], 2);
    assert_eq!(model["extra"]["mode"], "wmf");
    assert!(!dir.path().join("from-config").exists());
}

#[test]
fn errors_are_json_on_stderr() {
    let dir = tempfile::tempdir().unwrap();
    let cases: [(&[&str], &str); 4] = [
        (
            &["train", "--mode", "wmf", "--out", "m"],
            "missing_argument",
        ),
        (&["sppmi", "--train", "absent.tsv", "--out", "s.tsv"], "io"),
        (&["frobnicate"], "usage"),
        (&["experiment"], "config"),
    ];
    for (args, kind) in cases {
        let out = cemf(dir.path(), args);
        assert!(!out.status.success(), "{args:?}");
        let err: Value = serde_json::from_slice(&out.stderr).unwrap();
        assert_eq!(err["error"], kind, "{args:?}");
        assert!(err["message"].as_str().is_some_and(|m| !m.is_empty()));
    }

    fs::write(dir.path().join("bad.tsv"), "2 2 1\n0\tx\t1\n").unwrap();
    let out = cemf(
        dir.path(),
        &["sppmi", "--train", "bad.tsv", "--out", "s.tsv"],
    );
    let err: Value = serde_json::from_slice(&out.stderr).unwrap();
    assert_eq!(err["error"], "parse");
    assert!(err["message"].as_str().unwrap().contains("bad.tsv"));
}

fn experiment_config(out: &str, workers: usize) -> String {
    format!(
        "[experiment]\noutput_dir = \"{out}\"\nworkers = {workers}\n\
         [experiment.dataset]\nkind = \"movielens\"\ninput = \"ratings.csv\"\n\
         [experiment.split]\nseeds = [0, 1]\n\
         [experiment.grid]\nd = [4]\nalpha = [1.0, 10.0]\niterations = 5\n\
         [experiment.eval]\nn = [5, 10]\n"
    )
}

#[test]
fn experiment_is_reproducible_across_runs_and_workers() {
    let dir = tempfile::tempdir().unwrap();
    write_ratings(dir.path());
    fs::write(dir.path().join("one.toml"), experiment_config("run-a", 1)).unwrap();
    fs::write(dir.path().join("two.toml"), experiment_config("run-b", 3)).unwrap();
    let printed = ok(dir.path(), &["--config", "one.toml", "experiment"]);
    ok(
        dir.path(),
        &[
            "--config",
            "two.toml",
            "experiment",
            "--workers",
            "1",
            "--output-dir",
            "run-c",
        ],
    );
    ok(dir.path(), &["--config", "two.toml", "experiment"]);
    assert_eq!(printed["comparison"].as_array().unwrap().len(), 4);

    for rel in [
        "seed-0/cemf-d4/report.json",
        "seed-1/wmf-d4/report.csv",
        "seed-1/cemf-d4/model/Y.bin",
    ] {
        let a = fs::read(dir.path().join("run-a").join(rel)).unwrap();
        assert_eq!(
            a,
            fs::read(dir.path().join("run-b").join(rel)).unwrap(),
            "{rel}"
        );
        assert_eq!(
            a,
            fs::read(dir.path().join("run-c").join(rel)).unwrap(),
            "{rel}"
        );
    }
    let mut a = read_json(dir.path().join("run-a/summary.json"));
    let mut b = read_json(dir.path().join("run-b/summary.json"));
    for s in [&mut a, &mut b] {
        s["config"]["output_dir"] = Value::Null;
        s["config"]["workers"] = Value::Null;
    }
    assert_eq!(a, b);
}

#[test]
fn single_cell_experiment_matches_manual_pipeline() {
    let dir = tempfile::tempdir().unwrap();
    write_ratings(dir.path());
    fs::write(
        dir.path().join("exp.toml"),
        "[experiment]\noutput_dir = \"exp\"\n\
         [experiment.dataset]\nkind = \"movielens\"\ninput = \"ratings.csv\"\n\
         [experiment.split]\nseeds = [7]\n\
         [experiment.grid]\nmodes = [\"cemf\"]\nd = [4]\nalpha = [10.0]\niterations = 8\nmodel_seed = 3\n\
         [experiment.eval]\nn = [1, 5, 10]\n",
    )
    .unwrap();
    ok(dir.path(), &["--config", "exp.toml", "experiment"]);
    pipeline(dir.path());

    let grid = read_json(dir.path().join("exp/seed-7/cemf-d4/report.json"));
    let manual = read_json(dir.path().join("report.json"));
    assert_eq!(grid["overall"], manual["overall"]);
    assert_eq!(grid["groups"], manual["groups"]);
    for file in ["train.tsv", "test.tsv", "sppmi.tsv"] {
        assert_eq!(
            fs::read(dir.path().join("exp/seed-7/data").join(file)).unwrap(),
            fs::read(dir.path().join("data").join(file)).unwrap()
        );
    }
    assert_eq!(
        fs::read(dir.path().join("exp/seed-7/cemf-d4/model/Y.bin")).unwrap(),
        fs::read(dir.path().join("model/Y.bin")).unwrap()
    );
}
