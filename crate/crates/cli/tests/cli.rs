use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use tempfile::TempDir;

fn monogram(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_monogram"))
        .args(args)
        .env("MONOGRAM_LOG", "error")
        .output()
        .expect("binary runs")
}

fn code(out: &Output) -> i32 {
    out.status.code().expect("exit code")
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

fn synth(dir: &Path, per_class: usize) -> std::path::PathBuf {
    let out = monogram(&[
        "synth", "--out", s(dir), "--per-class", &per_class.to_string(),
        "--image-dim", "12", "--sequence-dim", "10", "--seed", "3",
    ]);
    assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stderr));
    dir.join("dataset.csv")
}

#[test]
fn help_and_usage_errors() {
    assert_eq!(code(&monogram(&["--help"])), 0);
    assert_eq!(code(&monogram(&["--version"])), 0);
    assert_eq!(code(&monogram(&["frobnicate"])), 1);
    assert_eq!(code(&monogram(&[])), 1);
}

#[test]
fn synth_refuses_to_overwrite_without_force() {
    let tmp = TempDir::new().unwrap();
    let data = synth(tmp.path(), 4);
    let first = fs::read(&data).unwrap();
    assert!(tmp.path().join("manifest.json").is_file());
    let again = monogram(&["synth", "--out", s(tmp.path()), "--per-class", "4", "--seed", "3"]);
    assert_eq!(code(&again), 1);
    assert!(String::from_utf8_lossy(&again.stderr).contains("--force"));
    let forced = monogram(&[
        "synth", "--out", s(tmp.path()), "--per-class", "4", "--image-dim", "12",
        "--sequence-dim", "10", "--seed", "3", "--force",
    ]);
    assert_eq!(code(&forced), 0);
    assert_eq!(fs::read(&data).unwrap(), first);
}

#[test]
fn invalid_config_exits_with_config_code() {
    let tmp = TempDir::new().unwrap();
    let data = synth(&tmp.path().join("data"), 4);
    let cfg = tmp.path().join("run.toml");
    fs::write(&cfg, "[pipeline.fusion]\nlr = 0.0\n").unwrap();
    let out = monogram(&["--config", s(&cfg), "evaluate", "--dataset", s(&data), "--out", s(&tmp.path().join("e"))]);
    assert_eq!(code(&out), 2);
    assert!(String::from_utf8_lossy(&out.stderr).contains("pipeline.fusion.lr"));

    fs::write(&cfg, "folds = 2\nbogus = 1\n").unwrap();
    let out = monogram(&["--config", s(&cfg), "evaluate", "--dataset", s(&data), "--out", s(&tmp.path().join("e"))]);
    assert_eq!(code(&out), 2);
}

#[test]
fn malformed_data_exits_with_data_code() {
    let tmp = TempDir::new().unwrap();
    let bad = tmp.path().join("bad.csv");
    fs::write(&bad, "#dims image=2 sequence=2\ncase-1,A,image,1.0,oops\n").unwrap();
    let out = monogram(&["train-ae", "--dataset", s(&bad), "--out", s(&tmp.path().join("m"))]);
    assert_eq!(code(&out), 3);
}

#[test]
fn divergence_exits_with_code_four() {
    let tmp = TempDir::new().unwrap();
    let data = synth(&tmp.path().join("data"), 4);
    let out = monogram(&[
        "train-ae", "--dataset", s(&data), "--out", s(&tmp.path().join("m")),
        "--ae-image-lr", "1e6", "--ae-image-epochs", "30",
    ]);
    assert_eq!(code(&out), 4, "{}", String::from_utf8_lossy(&out.stderr));
}

#[test]
fn stepwise_pipeline_and_search() {
    let tmp = TempDir::new().unwrap();
    let root = tmp.path();
    let data = synth(&root.join("data"), 8);
    let models = root.join("models");
    let run = |args: &[&str]| {
        let out = monogram(args);
        assert_eq!(code(&out), 0, "{args:?}: {}", String::from_utf8_lossy(&out.stderr));
        out
    };
    run(&[
        "train-ae", "--dataset", s(&data), "--out", s(&models),
        "--ae-image-epochs", "3", "--ae-sequence-epochs", "3", "--ae-image-lr", "1e-3",
    ]);
    for f in ["scaler.json", "ae_image.ckpt", "ae_sequence.ckpt", "ae_image_loss.csv", "manifest.json"] {
        assert!(models.join(f).is_file(), "{f}");
    }
    let enc = root.join("enc");
    run(&["encode", "--dataset", s(&data), "--models", s(&models), "--out", s(&enc)]);
    let latents = enc.join("latents.csv");
    let fusion = root.join("fusion");
    run(&["train-fusion", "--latents", s(&latents), "--out", s(&fusion), "--fusion-epochs", "2", "--fusion-lr", "1e-4"]);
    let index = root.join("index");
    run(&["index", "--latents", s(&latents), "--fusion", s(&fusion.join("fusion.ckpt")), "--out", s(&index)]);
    let archive = index.join("archive.txt");

    let out = run(&["search", "--archive", s(&archive), "--case-id", "case-0003", "--k", "5", "--exclude-self"]);
    let text = String::from_utf8(out.stdout).unwrap();
    let lines: Vec<&str> = text.lines().collect();
    assert_eq!(lines[0], "query,rank,case_id,label,distance");
    assert_eq!(lines.len(), 6);
    assert!(lines[1..].iter().all(|l| l.split(',').nth(2) != Some("case-0003")));

    let out = run(&["search", "--archive", s(&archive), "--case-id", "case-0003", "--k", "3", "--metric", "euclidean"]);
    let text = String::from_utf8(out.stdout).unwrap();
    assert_eq!(text.lines().nth(1).unwrap().split(',').nth(2), Some("case-0003"));

    // A query given as raw embeddings reproduces the archived monogram.
    let query = root.join("query.csv");
    let dataset = fs::read_to_string(&data).unwrap();
    let mut q = dataset.lines().next().unwrap().to_owned() + "\n";
    for line in dataset.lines().filter(|l| l.starts_with("case-0003,")) {
        q.push_str(line);
        q.push('\n');
    }
    fs::write(&query, q).unwrap();
    let out = run(&[
        "search", "--archive", s(&archive), "--query", s(&query), "--models", s(&models),
        "--fusion", s(&fusion.join("fusion.ckpt")), "--k", "1",
    ]);
    let text = String::from_utf8(out.stdout).unwrap();
    let hit: Vec<&str> = text.lines().nth(1).unwrap().split(',').collect();
    assert_eq!(hit[2], "case-0003");
    assert_eq!(hit[4], "0");

    assert_eq!(code(&monogram(&["search", "--archive", s(&archive), "--case-id", "nope"])), 1);

    let rep = root.join("reports");
    run(&["report", "xor", "--archive", s(&archive), "--out", s(&rep.join("xor")), "--per-class", "5"]);
    let matrix = fs::read_to_string(rep.join("xor/xor_matrix.csv")).unwrap();
    assert_eq!(matrix.lines().count(), 11);
    run(&["report", "pca", "--input", s(&latents), "--tag", "latent-u", "--components", "4", "--out", s(&rep.join("pca"))]);
    assert!(fs::read_to_string(rep.join("pca/pca.csv")).unwrap().starts_with("#dims pca=4"));
    run(&["report", "reconstruction", "--dataset", s(&data), "--models", s(&models), "--out", s(&rep.join("rec"))]);
    let rec = fs::read_to_string(rep.join("rec/reconstruction.csv")).unwrap();
    assert_eq!(rec.lines().next(), Some("case_id,modality,cosine,mse"));
    assert_eq!(rec.lines().count(), 1 + 2 * 16);
}

#[test]
fn evaluate_writes_every_table() {
    let tmp = TempDir::new().unwrap();
    let data = synth(&tmp.path().join("data"), 12);
    let out_dir = tmp.path().join("eval");
    let out = monogram(&[
        "evaluate", "--dataset", s(&data), "--out", s(&out_dir), "--folds", "2",
        "--ae-image-epochs", "2", "--ae-sequence-epochs", "2", "--fusion-epochs", "1",
    ]);
    assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stderr));
    let metrics = fs::read_to_string(out_dir.join("metrics.csv")).unwrap();
    assert_eq!(metrics.lines().next(), Some("representation,criterion,fold,accuracy,macro_p,macro_r,macro_f1"));
    for repr in ["binary-monogram", "real-monogram", "image-unimodal", "sequence-unimodal"] {
        for crit in ["top-1", "MV@3", "MV@5", "MV@10"] {
            for fold in 0..2 {
                let key = format!("{repr},{crit},{fold},");
                assert!(metrics.lines().any(|l| l.starts_with(&key)), "missing {key}");
            }
        }
    }
    for f in ["metrics_excluded.csv", "summary.csv", "summary_excluded.csv", "manifest.json", "fold-0/archive.txt", "fold-1/fusion_loss.csv"] {
        assert!(out_dir.join(f).is_file(), "{f}");
    }
    let manifest: serde_json::Value = serde_json::from_str(&fs::read_to_string(out_dir.join("manifest.json")).unwrap()).unwrap();
    assert_eq!(manifest["command"], "evaluate");
    assert_eq!(manifest["config"]["folds"], 2);
    assert_eq!(manifest["config"]["pipeline"]["fusion"]["epochs"], 1);
}
