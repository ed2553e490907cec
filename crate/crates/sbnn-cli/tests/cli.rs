use std::path::PathBuf;
use std::process::Command;

fn sbnn() -> Command {
    Command::new(env!("CARGO_BIN_EXE_sbnn"))
}

fn data_dir() -> PathBuf {
    std::env::var_os("SBNN_DATA_DIR")
        .map(PathBuf::from)
        .unwrap_or_else(|| {
            PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../data/mnist")
        })
}

#[test]
fn usage_error_exits_1() {
    let out = sbnn().arg("train").arg("--no-such-flag").output().unwrap();
    assert_eq!(out.status.code(), Some(1));
}

#[test]
fn bad_gamma_exits_1() {
    let out = sbnn()
        .args(["train", "--gamma", "1.5", "--data-dir", "/nonexistent"])
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(1));
}

#[test]
fn missing_model_exits_2() {
    let out = sbnn()
        .args(["compress", "--model", "/nonexistent/model.sbnn"])
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn corrupt_container_exits_2() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("bad.sbnn");
    std::fs::write(&path, b"not a container at all").unwrap();
    let out = sbnn()
        .args(["eval", "--model"])
        .arg(&path)
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn bounds_tiny_layer_values() {
    // a single 4x8 layer (chain 8 -> 4) at EC 0.25
    let out = sbnn()
        .args(["bounds", "--topology", "8-4", "--ec", "0.25"])
        .output()
        .unwrap();
    assert!(out.status.success());
    let stdout = String::from_utf8(out.stdout).unwrap();
    assert!(stdout.contains("IE  bound: 136 bits"), "{stdout}");
    assert!(stdout.contains("RLE bound: 256 bits"), "{stdout}");
}

#[test]
fn bounds_domain_error_exits_1() {
    // floor(EC*N) < 2 for the tiny layer
    let out = sbnn()
        .args(["bounds", "--topology", "8-4", "--ec", "0.01"])
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(1));
}

#[test]
fn bounds_writes_kv_report() {
    let dir = tempfile::tempdir().unwrap();
    let report = dir.path().join("bounds.txt");
    let out = sbnn()
        .args(["bounds", "--topology", "2l-mlp", "--ec", "0.05", "--out"])
        .arg(&report)
        .output()
        .unwrap();
    assert!(out.status.success());
    let kv = std::fs::read_to_string(&report).unwrap();
    let get = |key: &str| -> f64 {
        kv.lines()
            .find_map(|l| l.strip_prefix(&format!("{key}=")))
            .unwrap_or_else(|| panic!("missing {key} in {kv}"))
            .parse()
            .unwrap()
    };
    // hand-derived per-layer sums for the 784-1024-1024-10 chain at EC=5%:
    // 5*40140 + 32*1024 + 112, 5*52428 + 32*1024 + 112, 5*512 + 32*10 + 112
    let rle_bits = get("bound_rle_bits");
    assert_eq!(rle_bits as u64, 531_592, "RLE bound bits");
    // the index-encoder bound is tight, so its CR lands on the achieved
    // figure for this topology (~59x at 5% connections)
    let ie_cr = get("bound_ie_cr");
    assert!((57.0..60.0).contains(&ie_cr), "IE bound CR {ie_cr}");
}

/// End-to-end flow on real data: train a tiny model, compress it with every
/// codec, and check the decoded models evaluate identically.
#[test]
fn train_compress_eval_flow() {
    let data = data_dir();
    if !data.join("train-images-idx3-ubyte").exists() {
        panic!(
            "MNIST IDX files not found under {}; fetch them as described in the README",
            data.display()
        );
    }
    let dir = tempfile::tempdir().unwrap();
    let out_dir = dir.path().join("run");

    let out = sbnn()
        .args(["train", "--topology", "784-32-10", "--epochs", "1", "--seed", "3"])
        .args(["--gamma", "0.2", "--ec", "0.2"])
        .arg("--data-dir")
        .arg(&data)
        .arg("--out-dir")
        .arg(&out_dir)
        .output()
        .unwrap();
    assert!(
        out.status.success(),
        "train failed: {}",
        String::from_utf8_lossy(&out.stderr)
    );
    let manifest = std::fs::read_to_string(out_dir.join("manifest.txt")).unwrap();
    assert!(manifest.contains("achieved_ec="), "{manifest}");

    let model = out_dir.join("model.sbnn");
    let eval_digest = |path: &std::path::Path| -> String {
        let out = sbnn()
            .args(["eval", "--model"])
            .arg(path)
            .arg("--data-dir")
            .arg(&data)
            .arg("--latent")
            .arg(out_dir.join("latent.sblt"))
            .output()
            .unwrap();
        assert!(
            out.status.success(),
            "eval failed: {}",
            String::from_utf8_lossy(&out.stderr)
        );
        let stdout = String::from_utf8(out.stdout).unwrap();
        stdout
            .lines()
            .find(|l| l.starts_with("fused test accuracy"))
            .unwrap()
            .to_string()
    };
    let baseline = eval_digest(&model);

    for codec in ["ie", "rle", "he"] {
        let compressed = dir.path().join(format!("model.{codec}.sbnn"));
        let out = sbnn()
            .args(["compress", "--model"])
            .arg(&model)
            .args(["--codec", codec, "--out"])
            .arg(&compressed)
            .output()
            .unwrap();
        assert!(
            out.status.success(),
            "compress {codec} failed: {}",
            String::from_utf8_lossy(&out.stderr)
        );
        assert_eq!(eval_digest(&compressed), baseline, "codec {codec}");
    }

    // same seed and config give a bit-identical exported model
    let out_dir2 = dir.path().join("run2");
    let out = sbnn()
        .args(["train", "--topology", "784-32-10", "--epochs", "1", "--seed", "3"])
        .args(["--gamma", "0.2", "--ec", "0.2"])
        .arg("--data-dir")
        .arg(&data)
        .arg("--out-dir")
        .arg(&out_dir2)
        .output()
        .unwrap();
    assert!(out.status.success());
    let a = std::fs::read(out_dir.join("model.sbnn")).unwrap();
    let b = std::fs::read(out_dir2.join("model.sbnn")).unwrap();
    assert_eq!(a, b, "same seed must reproduce the container bit-for-bit");

    // bench prints the op table
    let out = sbnn()
        .args(["bench", "--model"])
        .arg(&model)
        .args(["--samples", "200"])
        .output()
        .unwrap();
    assert!(out.status.success());
    let stdout = String::from_utf8(out.stdout).unwrap();
    assert!(stdout.contains("total gain"), "{stdout}");
}
