use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use serde_json::Value;

fn toy() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../data/toy30")
}

fn sail(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_sail"))
        .args(args)
        .output()
        .expect("spawn sail")
}

fn ok_json(out: &Output) -> Value {
    assert!(
        out.status.success(),
        "sail failed: {}",
        String::from_utf8_lossy(&out.stderr)
    );
    serde_json::from_slice(&out.stdout).expect("stdout is json")
}

fn error_json(out: &Output) -> Value {
    assert!(!out.status.success());
    let text = String::from_utf8_lossy(&out.stderr);
    let line = text
        .lines()
        .rev()
        .find(|l| l.starts_with('{'))
        .expect("error json on stderr");
    serde_json::from_str(line).unwrap()
}

fn small_config(dir: &Path) -> PathBuf {
    let p = dir.join("small.cfg");
    fs::write(
        &p,
        "dim = 16\nepochs = 30\npretrain_epochs = 10\ntau = 10\nlocal_size = 5\nlr = 0.01\n",
    )
    .unwrap();
    p
}

fn copy_dataset(to: &Path, skip: &[&str]) {
    fs::create_dir_all(to).unwrap();
    for entry in fs::read_dir(toy()).unwrap() {
        let entry = entry.unwrap();
        let name = entry.file_name();
        if !skip.iter().any(|s| name == *s) {
            fs::copy(entry.path(), to.join(name)).unwrap();
        }
    }
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

#[test]
fn missing_features_file_is_named_in_error() {
    let tmp = tempfile::tempdir().unwrap();
    let data = tmp.path().join("broken");
    copy_dataset(&data, &["features.tsv"]);
    let out = sail(&[
        "train",
        "--data",
        s(&data),
        "--out",
        s(&tmp.path().join("run")),
    ]);
    let err = error_json(&out);
    assert!(
        err["error"]["message"]
            .as_str()
            .unwrap()
            .contains("features.tsv"),
        "{err}"
    );
    assert!(err["error"]["kind"].is_string());
}

#[test]
fn same_config_twice_gives_identical_checkpoints() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = small_config(tmp.path());
    let mut bytes = Vec::new();
    for run in ["a", "b"] {
        let out_dir = tmp.path().join(run);
        ok_json(&sail(&[
            "train",
            "--data",
            s(&toy()),
            "--config",
            s(&cfg),
            "--out",
            s(&out_dir),
        ]));
        bytes.push(fs::read(out_dir.join("checkpoint.sail")).unwrap());
        let manifest: Value =
            serde_json::from_slice(&fs::read(out_dir.join("manifest.json")).unwrap()).unwrap();
        assert_eq!(manifest["command"], "train");
        let log = fs::read_to_string(out_dir.join("train_log.jsonl")).unwrap();
        assert_eq!(log.lines().count(), 40);
    }
    assert_eq!(bytes[0], bytes[1]);
}

#[test]
fn eval_reports_every_requested_task() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = small_config(tmp.path());
    let run = tmp.path().join("run");
    ok_json(&sail(&[
        "train",
        "--data",
        s(&toy()),
        "--config",
        s(&cfg),
        "--out",
        s(&run),
    ]));
    let eval = tmp.path().join("eval");
    let ckpt = run.join("checkpoint.sail");
    let out = ok_json(&sail(&[
        "eval",
        "--data",
        s(&toy()),
        "--checkpoint",
        s(&ckpt),
        "--tasks",
        "classify,cluster,mad",
        "--out",
        s(&eval),
    ]));
    let tasks: Vec<&str> = out
        .as_array()
        .unwrap()
        .iter()
        .map(|r| r["task"].as_str().unwrap())
        .collect();
    assert_eq!(tasks, ["classify", "cluster", "mad"]);
    let mad = &out[2]["details"];
    assert!(mad["mad_nei"].as_f64().unwrap() >= 0.0);
    assert!(mad["neighbor_pairs"].as_u64().unwrap() > 0);
    assert!(eval.join("metrics.csv").exists() && eval.join("manifest.json").exists());
}

#[test]
fn classify_without_labels_fails() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = small_config(tmp.path());
    let data = tmp.path().join("unlabeled");
    copy_dataset(&data, &["labels.tsv", "splits.json"]);
    let meta = fs::read_to_string(data.join("meta.json")).unwrap();
    let mut meta: Value = serde_json::from_str(&meta).unwrap();
    meta.as_object_mut().unwrap().remove("num_classes");
    fs::write(data.join("meta.json"), meta.to_string()).unwrap();

    let run = tmp.path().join("run");
    ok_json(&sail(&[
        "train",
        "--data",
        s(&data),
        "--config",
        s(&cfg),
        "--out",
        s(&run),
    ]));
    let ckpt = run.join("checkpoint.sail");
    let out = sail(&[
        "eval",
        "--data",
        s(&data),
        "--checkpoint",
        s(&ckpt),
        "--tasks",
        "classify",
        "--out",
        s(&tmp.path().join("e")),
    ]);
    let err = error_json(&out);
    assert!(
        err["error"]["message"]
            .as_str()
            .unwrap()
            .contains("labels required"),
        "{err}"
    );
}

#[test]
fn linksplit_then_linkpred() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = small_config(tmp.path());
    let split = tmp.path().join("split");
    ok_json(&sail(&[
        "linksplit",
        "--data",
        s(&toy()),
        "--out",
        s(&split),
        "--seed",
        "3",
    ]));
    for f in [
        "edges.tsv",
        "test_edges.tsv",
        "test_negatives.tsv",
        "manifest.json",
    ] {
        assert!(split.join(f).exists(), "{f}");
    }
    let run = tmp.path().join("run");
    ok_json(&sail(&[
        "train",
        "--data",
        s(&split),
        "--config",
        s(&cfg),
        "--out",
        s(&run),
    ]));
    let ckpt = run.join("checkpoint.sail");
    let out = ok_json(&sail(&[
        "eval",
        "--data",
        s(&split),
        "--checkpoint",
        s(&ckpt),
        "--tasks",
        "linkpred",
        "--out",
        s(&tmp.path().join("e")),
    ]));
    let auc = out[0]["value"].as_f64().unwrap();
    assert!((0.0..=1.0).contains(&auc));
}

#[test]
fn ablate_emits_four_finite_variants() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = small_config(tmp.path());
    let out_dir = tmp.path().join("abl");
    ok_json(&sail(&[
        "ablate",
        "--data",
        s(&toy()),
        "--config",
        s(&cfg),
        "--out",
        s(&out_dir),
        "--seeds",
        "1",
    ]));
    let csv = fs::read_to_string(out_dir.join("ablation.csv")).unwrap();
    let mut variants: Vec<&str> = csv
        .lines()
        .skip(1)
        .map(|l| l.split(',').next().unwrap())
        .collect();
    variants.dedup();
    assert_eq!(
        variants,
        ["EMI", "EMI+Intra", "EMI+Inter", "EMI+Inter+Intra"]
    );
    for line in csv.lines().skip(1) {
        for cell in line.split(',').skip(1) {
            if let Ok(v) = cell.parse::<f64>() {
                assert!(v.is_finite(), "{line}");
            }
        }
    }
}

#[test]
fn unknown_config_key_is_rejected() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = tmp.path().join("bad.cfg");
    fs::write(&cfg, "dim = 8\nlearning_rate = 0.1\n").unwrap();
    let out = sail(&[
        "train",
        "--data",
        s(&toy()),
        "--config",
        s(&cfg),
        "--out",
        s(&tmp.path().join("r")),
    ]);
    let err = error_json(&out);
    assert!(
        err["error"]["message"]
            .as_str()
            .unwrap()
            .contains("learning_rate"),
        "{err}"
    );
}
