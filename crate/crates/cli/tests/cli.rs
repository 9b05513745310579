use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use rul_core::synthetic::SyntheticFleet;
use tempfile::TempDir;

struct Workspace {
    dir: TempDir,
    data: PathBuf,
}

impl Workspace {
    fn new() -> Self {
        let dir = tempfile::tempdir().unwrap();
        let fleet = SyntheticFleet {
            engines: 6,
            min_life: 25,
            max_life: 40,
            ..SyntheticFleet::default()
        };
        let data = dir.path().join("train_FD.txt");
        fs::write(&data, fleet.to_text()).unwrap();
        Workspace { dir, data }
    }

    fn out(&self, name: &str) -> PathBuf {
        self.dir.path().join(name)
    }

    fn run(&self, args: &[&str]) -> Output {
        rul(args, &[])
    }
}

fn rul(args: &[&str], env: &[(&str, &str)]) -> Output {
    let mut cmd = Command::new(env!("CARGO_BIN_EXE_rul"));
    cmd.args(args).env_remove("RUL_SEED");
    for (k, v) in env {
        cmd.env(k, v);
    }
    cmd.output().unwrap()
}

fn ok(output: &Output) -> String {
    assert!(
        output.status.success(),
        "exit {:?}\nstderr: {}",
        output.status.code(),
        String::from_utf8_lossy(&output.stderr)
    );
    String::from_utf8(output.stdout.clone()).unwrap()
}

fn p(path: &Path) -> &str {
    path.to_str().unwrap()
}

fn csv_rows(path: &Path) -> Vec<Vec<String>> {
    fs::read_to_string(path)
        .unwrap()
        .lines()
        .map(|l| l.split(',').map(str::to_string).collect())
        .collect()
}

const SMALL: [&str; 2] = ["--hidden", "4,4"];

#[test]
fn preprocess_reports_shape() {
    let ws = Workspace::new();
    let out = ws.out("prep");
    let stdout = ok(&ws.run(&["preprocess", "--data", p(&ws.data), "--output-dir", p(&out)]));
    assert!(stdout.contains("engines=6"));
    assert!(stdout.contains("window_len=20"));
    assert!(stdout.contains("n_features=24"));
    assert!(out.join("normalizer.txt").exists());
    let manifest = fs::read_to_string(out.join("preprocess_manifest.txt")).unwrap();
    assert!(manifest.contains("window_len=20\n"));
}

#[test]
fn missing_file_exits_2() {
    let ws = Workspace::new();
    let missing = ws.out("nope.txt");
    let output = ws.run(&["preprocess", "--data", p(&missing), "--output-dir", p(&ws.out("o"))]);
    assert_eq!(output.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&output.stderr).contains("nope.txt"));
}

#[test]
fn short_row_names_its_line() {
    let ws = Workspace::new();
    let mut text = fs::read_to_string(&ws.data).unwrap();
    let bad: Vec<&str> = text.lines().nth(2).unwrap().split_whitespace().take(25).collect();
    text = text
        .lines()
        .enumerate()
        .map(|(i, l)| if i == 2 { bad.join(" ") } else { l.to_string() })
        .collect::<Vec<_>>()
        .join("\n");
    fs::write(&ws.data, text).unwrap();
    let output = ws.run(&["preprocess", "--data", p(&ws.data), "--output-dir", p(&ws.out("o"))]);
    assert_eq!(output.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&output.stderr).contains("line 3"));
}

#[test]
fn train_writes_epoch_table_and_model() {
    let ws = Workspace::new();
    let out = ws.out("train");
    for (cell, epochs) in [("lstm", "2"), ("gru", "1")] {
        let mut args = vec!["train", "--cell", cell, "--epochs", epochs, "--data", p(&ws.data), "--output-dir", p(&out)];
        args.extend(SMALL);
        ok(&ws.run(&args));
        let rows = csv_rows(&out.join(format!("{cell}_epochs.csv")));
        assert_eq!(rows[0], ["epoch", "mse", "mae", "val_mse", "val_mae"]);
        assert_eq!(rows.len() - 1, epochs.parse::<usize>().unwrap());
        assert!(out.join(format!("{cell}_model.bin")).exists());
    }
}

#[test]
fn default_train_has_ten_epochs() {
    let ws = Workspace::new();
    let out = ws.out("train");
    let mut args = vec!["train", "--data", p(&ws.data), "--output-dir", p(&out)];
    args.extend(SMALL);
    ok(&ws.run(&args));
    assert_eq!(csv_rows(&out.join("lstm_epochs.csv")).len(), 11);
}

#[test]
fn evolve_minimal_and_deterministic() {
    let ws = Workspace::new();
    let run = |dir: &str| {
        let out = ws.out(dir);
        let mut args = vec![
            "evolve", "--generations", "2", "--population", "3", "--elites", "1", "--seed", "5", "--data",
            p(&ws.data), "--output-dir", p(&out),
        ];
        args.extend(SMALL);
        ok(&ws.run(&args));
        out
    };
    let (a, b) = (run("a"), run("b"));
    for file in ["generations.csv", "final_generation.csv", "best_model.bin", "best_genome.txt"] {
        assert_eq!(fs::read(a.join(file)).unwrap(), fs::read(b.join(file)).unwrap(), "{file}");
    }
    let rows = csv_rows(&a.join("generations.csv"));
    assert_eq!(
        rows[0],
        ["generation", "individual", "lr", "batch_size", "mse", "mae", "val_mse", "val_mae", "delta_loss"]
    );
    assert_eq!(rows.len() - 1, 6);
    assert_eq!(csv_rows(&a.join("final_generation.csv")).len() - 1, 3);
    let genome = fs::read_to_string(a.join("best_genome.txt")).unwrap();
    assert!(genome.contains("batch_size=") && genome.contains("generation=2"));
}

#[test]
fn evolve_defaults_final_table_has_ten_rows() {
    let ws = Workspace::new();
    let out = ws.out("evo");
    let mut args = vec!["evolve", "--generations", "1", "--data", p(&ws.data), "--output-dir", p(&out)];
    args.extend(SMALL);
    ok(&ws.run(&args));
    assert_eq!(csv_rows(&out.join("final_generation.csv")).len() - 1, 10);
}

fn trained_model(ws: &Workspace, dir: &str, cell: &str) -> PathBuf {
    let out = ws.out(dir);
    let mut args = vec!["train", "--cell", cell, "--epochs", "1", "--data", p(&ws.data), "--output-dir", p(&out)];
    args.extend(SMALL);
    ok(&ws.run(&args));
    out.join(format!("{cell}_model.bin"))
}

#[test]
fn predict_trace_for_engine() {
    let ws = Workspace::new();
    let model = trained_model(&ws, "m", "lstm");
    let text = fs::read_to_string(&ws.data).unwrap();
    let life = text.lines().filter(|l| l.split_whitespace().next() == Some("2")).count();
    let out = ws.out("pred");
    ok(&ws.run(&["predict", "--model", p(&model), "--engine", "2", "--data", p(&ws.data), "--output-dir", p(&out)]));
    let rows = csv_rows(&out.join("trace_engine_2.csv"));
    assert_eq!(rows[0], ["cycle", "actual_rul", "predicted_rul"]);
    assert_eq!(rows.len() - 1, life - 20 + 1);
    assert_eq!(rows.last().unwrap()[1], "0");
    for pair in rows[1..].windows(2) {
        let a: usize = pair[0][1].parse().unwrap();
        let b: usize = pair[1][1].parse().unwrap();
        assert_eq!(a, b + 1);
    }
    assert!(rows[1..].iter().all(|r| r[2].parse::<f64>().unwrap() >= 0.0));
}

#[test]
fn predict_unknown_engine_exits_3() {
    let ws = Workspace::new();
    let model = trained_model(&ws, "m", "gru");
    let output = ws.run(&["predict", "--model", p(&model), "--engine", "99", "--data", p(&ws.data), "--output-dir", p(&ws.out("x"))]);
    assert_eq!(output.status.code(), Some(3));
}

#[test]
fn compare_flags_one_best() {
    let ws = Workspace::new();
    let lstm = trained_model(&ws, "l", "lstm");
    let gru = trained_model(&ws, "g", "gru");
    let out = ws.out("cmp");
    ok(&ws.run(&[
        "compare", "--model", p(&lstm), "--model", p(&gru), "--model", p(&lstm), "--label", "LSTM", "--label", "GRU",
        "--label", "again", "--trace-engine", "1", "--data", p(&ws.data), "--output-dir", p(&out),
    ]));
    let rows = csv_rows(&out.join("comparison.csv"));
    assert_eq!(rows[0], ["label", "val_mse", "val_mae", "best", "traces"]);
    assert_eq!(rows.len() - 1, 3);
    assert_eq!(rows[1..].iter().filter(|r| r[3] == "true").count(), 1);
    assert!(out.join("trace_GRU_engine_1.csv").exists());

    let single = ws.out("one");
    ok(&ws.run(&["compare", "--model", p(&gru), "--data", p(&ws.data), "--output-dir", p(&single)]));
    let rows = csv_rows(&single.join("comparison.csv"));
    assert_eq!(rows[1][0], "gru_model");
    assert_eq!(rows[1][3], "true");
}

#[test]
fn compare_duplicate_labels_rejected() {
    let ws = Workspace::new();
    let lstm = trained_model(&ws, "l", "lstm");
    let output = ws.run(&[
        "compare", "--model", p(&lstm), "--model", p(&lstm), "--data", p(&ws.data), "--output-dir", p(&ws.out("c")),
    ]);
    assert_eq!(output.status.code(), Some(3));
    assert!(String::from_utf8_lossy(&output.stderr).contains("duplicate"));
}

#[test]
fn config_file_then_flags_then_env_seed() {
    let ws = Workspace::new();
    let cfg = ws.out("run.cfg");
    fs::write(&cfg, "# baseline\nepochs=3\nhidden=4,4\nga.population_size=4\nlearning_rate=0.01\n").unwrap();
    let out = ws.out("cfg");
    let args = ["train", "--config", p(&cfg), "--epochs", "1", "--data", p(&ws.data), "--output-dir", p(&out)];
    ok(&rul(&args, &[("RUL_SEED", "77")]));
    let manifest = fs::read_to_string(out.join("train_manifest.txt")).unwrap();
    assert!(manifest.contains("epochs=1\n"), "{manifest}");
    assert!(manifest.contains("learning_rate=0.01\n"));
    assert!(manifest.contains("ga.population_size=4\n"));
    assert!(manifest.contains("seed=77\n"));
    assert_eq!(csv_rows(&out.join("lstm_epochs.csv")).len(), 2);

    ok(&rul(&[&args[..], &["--seed", "3"]].concat(), &[("RUL_SEED", "77")]));
    let manifest = fs::read_to_string(out.join("train_manifest.txt")).unwrap();
    assert!(manifest.contains("seed=3\n"));
}

#[test]
fn same_seed_same_bytes() {
    let ws = Workspace::new();
    let run = |dir: &str, seed: &str| {
        let out = ws.out(dir);
        let mut args = vec!["train", "--epochs", "2", "--data", p(&ws.data), "--output-dir", p(&out)];
        args.extend(SMALL);
        ok(&rul(&args, &[("RUL_SEED", seed)]));
        (fs::read(out.join("lstm_epochs.csv")).unwrap(), fs::read(out.join("lstm_model.bin")).unwrap())
    };
    assert_eq!(run("a", "9"), run("b", "9"));
    assert_ne!(run("c", "9").1, run("d", "10").1);
}

#[test]
fn bad_config_exits_3() {
    let ws = Workspace::new();
    let output = ws.run(&["evolve", "--population", "2", "--elites", "2", "--data", p(&ws.data), "--output-dir", p(&ws.out("x"))]);
    assert_eq!(output.status.code(), Some(3));
    let cfg = ws.out("bad.cfg");
    fs::write(&cfg, "ga.mutation_rate=3\n").unwrap();
    let output = ws.run(&["train", "--config", p(&cfg), "--data", p(&ws.data)]);
    assert_eq!(output.status.code(), Some(2));
}
