use std::fs;
use std::path::Path;
use std::process::{Command, Output};

const BIN: &str = env!("CARGO_BIN_EXE_mom");

fn mom(dir: &Path, args: &[&str]) -> Output {
    Command::new(BIN)
        .current_dir(dir)
        .env_remove("MOM_OUTPUT_DIR")
        .args(args)
        .output()
        .unwrap()
}

fn ok(dir: &Path, args: &[&str]) -> Output {
    let out = mom(dir, args);
    assert!(
        out.status.success(),
        "mom {args:?} failed:\n{}",
        String::from_utf8_lossy(&out.stderr)
    );
    out
}

fn small_dataset(dir: &Path) {
    ok(dir, &["gen", "--scene", "walk-2cam", "--frames", "200", "--subjects", "5", "--seed", "3", "-o", "data"]);
}

#[test]
fn gen_writes_manifest_records_and_snapshot() {
    let tmp = tempfile::tempdir().unwrap();
    small_dataset(tmp.path());
    let data = tmp.path().join("data");
    for f in ["manifest.toml", "records.jsonl", "config.resolved.toml"] {
        assert!(data.join(f).exists(), "{f} missing");
    }
    let records = fs::read_to_string(data.join("records.jsonl")).unwrap();
    assert_eq!(records.lines().count(), 200);
    let first: serde_json::Value = serde_json::from_str(records.lines().next().unwrap()).unwrap();
    assert!(first.get("frame").is_some() && first.get("gt").is_some() && first.get("cams").is_some());
}

#[test]
fn usage_errors_exit_2() {
    let tmp = tempfile::tempdir().unwrap();
    let out = mom(tmp.path(), &["gen", "--no-such-flag"]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("Usage"));
    assert_eq!(mom(tmp.path(), &["sweep", "--kind", "sideways"]).status.code(), Some(2));
}

#[test]
fn validation_errors_exit_1() {
    let tmp = tempfile::tempdir().unwrap();
    let out = mom(tmp.path(), &["train", "-o", "x"]);
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stderr).contains("missing data"));
    assert_eq!(mom(tmp.path(), &["gen", "--scene", "moon-base", "-o", "d"]).status.code(), Some(1));
    assert_eq!(mom(tmp.path(), &["gen", "--frames", "1", "--subjects", "1", "--noise=-1", "-o", "d"]).status.code(), Some(1));
}

#[test]
fn unknown_config_key_is_named() {
    let tmp = tempfile::tempdir().unwrap();
    fs::write(tmp.path().join("c.toml"), "[train]\nepochs = 2\nlearning_rat = 0.1\n").unwrap();
    let out = mom(tmp.path(), &["train", "--config", "c.toml", "--data", "d"]);
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stderr).contains("learning_rat"));
}

#[test]
fn flags_override_file_and_file_overrides_defaults() {
    let tmp = tempfile::tempdir().unwrap();
    fs::write(
        tmp.path().join("c.toml"),
        "[scene]\nframes = 30\nsubjects = 3\nseed = 11\nkeypoint_noise = 2.5\n",
    )
    .unwrap();
    ok(tmp.path(), &["gen", "--config", "c.toml", "--seed", "12", "-o", "d"]);
    let snap: toml::Table = fs::read_to_string(tmp.path().join("d/config.resolved.toml")).unwrap().parse().unwrap();
    let scene = snap["scene"].as_table().unwrap();
    assert_eq!(scene["seed"].as_integer(), Some(12));
    assert_eq!(scene["frames"].as_integer(), Some(30));
    assert_eq!(scene["keypoint_noise"].as_float(), Some(2.5));
    assert_eq!(scene["points_per_body"].as_integer(), Some(20));
}

#[test]
fn no_flags_give_documented_defaults() {
    let tmp = tempfile::tempdir().unwrap();
    fs::write(tmp.path().join("c.toml"), "").unwrap();
    ok(tmp.path(), &["gradcheck", "--config", "c.toml"]);
    let snap: toml::Table = fs::read_to_string(tmp.path().join("out/config.resolved.toml")).unwrap().parse().unwrap();
    assert_eq!(snap["step"].as_float(), Some(1e-5));
    assert_eq!(snap["lambda"].as_float(), Some(1.0));
    assert_eq!(snap["decoder_mode"].as_str(), Some("linear"));
}

#[test]
fn output_dir_from_environment() {
    let tmp = tempfile::tempdir().unwrap();
    let out = Command::new(BIN)
        .current_dir(tmp.path())
        .env("MOM_OUTPUT_DIR", "from-env")
        .args(["gen", "--frames", "10", "--subjects", "2"])
        .output()
        .unwrap();
    assert!(out.status.success());
    assert!(tmp.path().join("from-env/records.jsonl").exists());
}

#[test]
fn pipeline_runs_and_reproduces_from_snapshots() {
    let tmp = tempfile::tempdir().unwrap();
    let dir = tmp.path();
    small_dataset(dir);
    ok(dir, &["train", "--data", "data", "--epochs", "3", "--batch-size", "32", "-o", "m"]);
    ok(dir, &["baseline", "--data", "data", "-o", "b"]);
    let eval = ok(dir, &["eval", "--data", "data", "--pred", "mom=m/predictions.csv", "--pred", "baseline=b/predictions.csv", "-o", "e"]);
    let table = String::from_utf8(eval.stdout).unwrap();
    let lines: Vec<&str> = table.lines().collect();
    assert_eq!(lines[0], "method,mean,median,std,ate,rpe,acc02,acc03,acc04,acc05,best_flags");
    assert_eq!(lines.len(), 3);
    ok(dir, &["sweep", "--kind", "keypoint-noise", "--grid", "0..4", "--ckpt", "m/model.ckpt", "--data", "data", "-o", "s"]);
    let sweep = fs::read_to_string(dir.join("s/sweep.csv")).unwrap();
    assert_eq!(sweep.lines().count(), 6);

    let loss = fs::read_to_string(dir.join("m/loss.csv")).unwrap();
    assert_eq!(loss.lines().next(), Some("epoch,train_loss,test_loss"));

    for (cmd, src, files) in [
        ("gen", "data", &["manifest.toml", "records.jsonl"][..]),
        ("train", "m", &["model.ckpt", "loss.csv", "predictions.csv"][..]),
        ("baseline", "b", &["predictions.csv"][..]),
        ("eval", "e", &["metrics.csv"][..]),
        ("sweep", "s", &["sweep.csv"][..]),
    ] {
        let again = format!("{src}-again");
        ok(dir, &[cmd, "--config", &format!("{src}/config.resolved.toml"), "-o", &again]);
        for f in files {
            let a = fs::read(dir.join(src).join(f)).unwrap();
            let b = fs::read(dir.join(&again).join(f)).unwrap();
            assert!(a == b, "{cmd}: {f} differs after rerun");
        }
    }
}

#[test]
fn eval_rejects_unknown_frames() {
    let tmp = tempfile::tempdir().unwrap();
    small_dataset(tmp.path());
    fs::write(tmp.path().join("p.csv"), "frame,x,y,z\n99999,1,2,3\n").unwrap();
    let out = mom(tmp.path(), &["eval", "--data", "data", "--pred", "x=p.csv", "-o", "e"]);
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stderr).contains("99999"));
}
