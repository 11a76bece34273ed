use std::path::Path;
use std::process::{Command, Output};

use wein::data::pgm;
use wein::model::{Checkpoint, ModelParams, NetworkConfig};

fn wein(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_wein")).args(args).output().unwrap()
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

fn p(path: &Path) -> &str {
    path.to_str().unwrap()
}

fn synth_small(dir: &Path, extra: &[&str]) -> Output {
    let mut args = vec!["synth", "--out", p(dir), "--count", "20", "--size", "32x32"];
    args.extend_from_slice(extra);
    wein(&args)
}

#[test]
fn synth_uses_the_default_split_and_is_repeatable() {
    let dir = tempfile::tempdir().unwrap();
    let out = wein(&["synth", "--out", p(dir.path()), "--size", "32x32"]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let text = stdout(&out);
    assert!(text.starts_with("# resolved config\n"));
    assert!(text.contains("wrote 305 train + 60 test images"), "{text}");
    let hash = text
        .lines()
        .find(|l| l.starts_with("corpus_sha256="))
        .unwrap()
        .to_owned();

    let again = wein(&["synth", "--out", p(dir.path()), "--size", "32x32", "--force"]);
    assert!(again.status.success());
    assert!(stdout(&again).contains(&hash));

    let refused = wein(&["synth", "--out", p(dir.path()), "--size", "32x32"]);
    assert_eq!(refused.status.code(), Some(1));
}

#[test]
fn bad_arguments_exit_with_one() {
    let dir = tempfile::tempdir().unwrap();
    assert_eq!(synth_small(dir.path(), &["--seed", "x"]).status.code(), Some(1));
    assert_eq!(
        wein(&["synth", "--out", p(dir.path()), "--count", "0"]).status.code(),
        Some(1)
    );
    assert_eq!(
        wein(&["synth", "--out", p(dir.path()), "--bogus"]).status.code(),
        Some(1)
    );
    assert_eq!(wein(&["frobnicate"]).status.code(), Some(1));
    assert_eq!(wein(&["--help"]).status.code(), Some(0));

    let cfg = dir.path().join("bad.cfg");
    std::fs::write(&cfg, "learning_rate = 3\n").unwrap();
    let out = wein(&["train", "--data", p(dir.path()), "--out", "x.ckpt", "--config", p(&cfg)]);
    assert_eq!(out.status.code(), Some(1));
}

#[test]
fn missing_files_exit_with_two() {
    let dir = tempfile::tempdir().unwrap();
    let out = wein(&[
        "eval",
        "--ckpt",
        p(&dir.path().join("none.ckpt")),
        "--data",
        p(dir.path()),
    ]);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn config_files_feed_the_resolved_config() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("synth.cfg");
    std::fs::write(&cfg, "# small corpus\ncount = 6\nsize = 32x32\ntrain_fraction = 0.5\n").unwrap();
    let data = dir.path().join("data");
    let out = wein(&["synth", "--out", p(&data), "--config", p(&cfg), "--seed", "3"]);
    assert!(out.status.success());
    let text = stdout(&out);
    assert!(text.contains("seed=3\ncount=6\nsize=32x32\n"), "{text}");
    assert!(text.contains("wrote 3 train + 3 test images"));
}

#[test]
fn train_writes_checkpoint_and_loss_log() {
    let dir = tempfile::tempdir().unwrap();
    let data = dir.path().join("data");
    assert!(synth_small(&data, &[]).status.success());
    let ckpt = dir.path().join("model.ckpt");
    let out = wein(&[
        "train",
        "--data",
        p(&data),
        "--out",
        p(&ckpt),
        "--epochs",
        "2",
        "--checkpoint-every",
        "1",
        "--stage-widths",
        "4,4,8,8",
    ]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let text = stdout(&out);
    assert!(text.contains("stage_widths=4,4,8,8"));
    assert!(text.contains("epoch 2:"));
    assert!(dir.path().join("model.epoch1.ckpt").exists());
    let loaded = Checkpoint::load(&ckpt).unwrap();
    assert_eq!(loaded.epochs_completed, 2);
    assert_eq!(loaded.config.stage_widths, [4, 4, 8, 8]);
    let log = std::fs::read_to_string(dir.path().join("model.loss.csv")).unwrap();
    let mut lines = log.lines();
    assert_eq!(lines.next(), Some("epoch,sample,bce,iou,star,total"));
    // 20 images at the default ratio leave 17 for training.
    assert_eq!(lines.count(), 2 * 17);
}

fn zero_checkpoint(path: &Path) {
    let config = NetworkConfig::desk();
    Checkpoint {
        config,
        seed: 0,
        epochs_completed: 0,
        params: ModelParams::zeros(&config).unwrap(),
        velocity: None,
    }
    .save(path)
    .unwrap();
}

#[test]
fn zero_weights_predict_one_half_everywhere() {
    let dir = tempfile::tempdir().unwrap();
    let ckpt = dir.path().join("zero.ckpt");
    zero_checkpoint(&ckpt);
    let img = dir.path().join("in.pgm");
    std::fs::write(&img, pgm::encode(16, 16, &[90u8; 256])).unwrap();
    let pred = dir.path().join("pred.pgm");
    let out = wein(&[
        "predict",
        "--ckpt",
        p(&ckpt),
        "--image",
        p(&img),
        "--out",
        p(&pred),
        "--all-maps",
    ]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let decoded = pgm::decode(&std::fs::read(&pred).unwrap()).unwrap();
    assert!(decoded.pixels.iter().all(|&v| v == 128));
    for name in ["side1", "side2", "side3", "side4", "fused"] {
        assert!(dir.path().join(format!("pred_{name}.pgm")).exists());
    }
}

#[test]
fn eval_and_baseline_write_json_reports() {
    let dir = tempfile::tempdir().unwrap();
    let data = dir.path().join("data");
    assert!(synth_small(&data, &[]).status.success());
    let ckpt = dir.path().join("zero.ckpt");
    zero_checkpoint(&ckpt);

    let report = dir.path().join("eval.json");
    let out = wein(&["eval", "--ckpt", p(&ckpt), "--data", p(&data), "--report", p(&report)]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let json: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(&report).unwrap()).unwrap();
    // A constant 0.5 map is not above the 0.5 threshold.
    assert_eq!(json["aggregate"]["f1"], 0.0);
    assert_eq!(json["aggregate"]["images"], 3);
    assert_eq!(json["config"]["threshold"], 0.5);

    let report = dir.path().join("sobel.json");
    let masks = dir.path().join("masks");
    let out = wein(&[
        "baseline",
        "--op",
        "sobel",
        "--data",
        p(&data),
        "--calibrate",
        "--report",
        p(&report),
        "--masks",
        p(&masks),
    ]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    assert!(stdout(&out).contains("calibrated sobel threshold="));
    let json: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(&report).unwrap()).unwrap();
    assert_eq!(json["per_image"].as_array().unwrap().len(), 3);
    assert_eq!(std::fs::read_dir(&masks).unwrap().count(), 3);

    let silent = wein(&["baseline", "--op", "sobel", "--data", p(&data), "--threshold", "1e9"]);
    assert!(stdout(&silent).contains("f1=0.0000"));
}

#[test]
fn rf_table_lists_thirteen_layers() {
    let out = wein(&["rf-table"]);
    assert!(out.status.success());
    let text = stdout(&out);
    let rows: Vec<&str> = text.lines().filter(|l| !l.starts_with('#')).skip(1).collect();
    assert_eq!(rows.len(), 13);
    assert!(rows[0].split_whitespace().eq(["conv1_1", "3", "1"]));
    assert!(rows[12].split_whitespace().eq(["conv4_3", "92", "8"]));
}

#[test]
fn gradcheck_exit_status_follows_the_suites() {
    let ok = wein(&["gradcheck"]);
    assert_eq!(ok.status.code(), Some(0));
    assert!(!stdout(&ok).contains("FAIL"));
    let bad = wein(&["gradcheck", "--fault"]);
    assert_eq!(bad.status.code(), Some(1));
    assert!(stdout(&bad).contains("FAIL"));
}
