use std::collections::BTreeMap;
use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use sha2::{Digest, Sha256};

const TINY: &str = r#"
seed = 7

[data]
num_train = 6
num_test = 3
t_min = 60
t_max = 80

[train_dfc]
epochs = 1

[train_efc]
epochs = 2
"#;

fn ahlm(root: &Path, args: &[&str]) -> Output {
    let config = root.join("tiny.toml");
    if !config.exists() {
        fs::write(&config, TINY).unwrap();
    }
    Command::new(env!("CARGO_BIN_EXE_ahlm"))
        .args(args)
        .arg("--config")
        .arg(&config)
        .arg("--out")
        .arg(root)
        .output()
        .unwrap()
}

fn ok(root: &Path, args: &[&str]) -> String {
    let out = ahlm(root, args);
    assert!(
        out.status.success(),
        "{args:?} failed: {}",
        String::from_utf8_lossy(&out.stderr)
    );
    String::from_utf8(out.stdout).unwrap()
}

fn fails_with(root: &Path, args: &[&str], hint: &str) {
    let out = ahlm(root, args);
    let err = String::from_utf8_lossy(&out.stderr);
    assert!(!out.status.success(), "{args:?} should fail");
    assert!(err.contains(hint), "{args:?}: `{err}` lacks `{hint}`");
}

/// SHA-256 of every file under `dir`, keyed by relative path.
fn tree_hashes(dir: &Path) -> BTreeMap<String, String> {
    let mut out = BTreeMap::new();
    let mut stack = vec![dir.to_path_buf()];
    while let Some(d) = stack.pop() {
        for e in fs::read_dir(&d).unwrap() {
            let p = e.unwrap().path();
            if p.is_dir() {
                stack.push(p);
            } else {
                let key = p.strip_prefix(dir).unwrap().display().to_string();
                out.insert(key, hex::encode(Sha256::digest(fs::read(&p).unwrap())));
            }
        }
    }
    out
}

#[test]
fn pipeline_runs_and_writes_manifests() {
    let dir = tempfile::tempdir().unwrap();
    let root = dir.path();
    assert!(ok(root, &["gen-data"]).contains("6 train and 3 test videos"));
    ok(root, &["train"]);
    assert!(ok(root, &["detect"]).contains("over 3 videos"));
    let report = ok(root, &["eval"]);
    assert!(report.contains("avg_map="), "{report}");
    assert!(report.contains("classification_accuracy="), "{report}");
    for f in [
        "corpus/manifest.gen-data.json",
        "checkpoints/manifest.train.json",
        "results/manifest.detect.json",
        "results/manifest.eval.json",
        "results/detections.txt",
    ] {
        assert!(root.join(f).exists(), "{f} missing");
    }
    let manifest: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(root.join("checkpoints/manifest.train.json")).unwrap()).unwrap();
    assert_eq!(manifest["seed"], 7);
    let ckpt = fs::read(root.join("checkpoints/dfc.ckpt")).unwrap();
    assert_eq!(manifest["outputs"]["dfc.ckpt"], hex::encode(Sha256::digest(ckpt)));
    assert!(fs::read_dir(root)
        .unwrap()
        .flatten()
        .all(|e| e.path().extension().is_none_or(|x| x != "partial")));
}

#[test]
fn ground_truth_as_predictions_scores_one() {
    let dir = tempfile::tempdir().unwrap();
    let root = dir.path();
    ok(root, &["gen-data"]);
    let ann = fs::read_to_string(root.join("corpus/test/annotations.csv")).unwrap();
    let mut segments = String::from("video_id,start,end,class_id,score\n");
    for l in ann.lines().skip(1) {
        segments.push_str(&format!("{l},1\n"));
    }
    fs::create_dir_all(root.join("results")).unwrap();
    fs::write(root.join("results/segments.csv"), segments).unwrap();
    ok(root, &["eval"]);
    let report: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(root.join("results/report.json")).unwrap()).unwrap();
    assert_eq!(report["report"]["average_map"], 1.0);
    assert!(report["report"]["map"].as_array().unwrap().iter().all(|m| m == 1.0));
    assert!(report["classification_accuracy"].is_null());
}

#[test]
fn missing_inputs_fail_with_a_hint() {
    let dir = tempfile::tempdir().unwrap();
    let root = dir.path();
    fails_with(root, &["train"], "run `ahlm gen-data` first");
    fails_with(root, &["eval"], "run `ahlm gen-data` first");
    ok(root, &["gen-data"]);
    fails_with(root, &["detect"], "run `ahlm train` first");
    fails_with(root, &["eval"], "run `ahlm detect` first");
    fails_with(root, &["train", "--set", "train_dfc.lr=-1"], "lr");

    let bare = Command::new(env!("CARGO_BIN_EXE_ahlm"))
        .arg("gen-data")
        .arg("--out")
        .arg(root)
        .output()
        .unwrap();
    assert!(!bare.status.success());
    assert!(String::from_utf8_lossy(&bare.stderr).contains("seed"));
}

#[test]
fn commands_leave_their_inputs_alone() {
    let dir = tempfile::tempdir().unwrap();
    let root = dir.path();
    ok(root, &["gen-data"]);
    let corpus = tree_hashes(&root.join("corpus"));
    ok(root, &["train"]);
    let checkpoints = tree_hashes(&root.join("checkpoints"));
    ok(root, &["detect"]);
    ok(root, &["eval"]);
    assert_eq!(tree_hashes(&root.join("corpus")), corpus);
    assert_eq!(tree_hashes(&root.join("checkpoints")), checkpoints);
}

#[test]
fn identical_runs_give_identical_bytes() {
    let (a, b) = (tempfile::tempdir().unwrap(), tempfile::tempdir().unwrap());
    for root in [a.path(), b.path()] {
        for c in ["gen-data", "train", "detect", "eval"] {
            ok(root, &[c]);
        }
    }
    let (ha, hb) = (tree_hashes(a.path()), tree_hashes(b.path()));
    assert_eq!(ha.len(), hb.len());
    assert_eq!(ha, hb);

    let c = tempfile::tempdir().unwrap();
    ok(c.path(), &["gen-data", "--set", "data.seed=8"]);
    assert_ne!(
        tree_hashes(&c.path().join("corpus/train")),
        tree_hashes(&a.path().join("corpus/train"))
    );
}

#[test]
fn overrides_and_regeneration_replace_stale_files() {
    let dir = tempfile::tempdir().unwrap();
    let root = dir.path();
    ok(root, &["gen-data"]);
    assert!(ok(root, &["gen-data", "--set", "data.num_test=1"]).contains("1 test videos"));
    let feats = fs::read_dir(root.join("corpus/test"))
        .unwrap()
        .flatten()
        .filter(|e| e.path().extension().is_some_and(|x| x == "feat"))
        .count();
    assert_eq!(feats, 1);
}

#[test]
fn gradcheck_passes_and_reports() {
    let dir = tempfile::tempdir().unwrap();
    let out = ok(dir.path(), &["gradcheck"]);
    assert!(out.contains("dfc_max_rel_error="), "{out}");
    let text = fs::read_to_string(dir.path().join("results/gradcheck.txt")).unwrap();
    for l in text.lines().filter(|l| l.contains("max_rel_error")) {
        let v: f64 = l.split('=').nth(1).unwrap().parse().unwrap();
        assert!(v < 1e-3, "{l}");
    }
}
