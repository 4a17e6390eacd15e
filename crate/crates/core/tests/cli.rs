use std::fs;
use std::path::Path;
use std::process::{Command, Output};

fn bin() -> Command {
    let mut c = Command::new(env!("CARGO_BIN_EXE_radar-nowcast"));
    c.env("RUST_LOG", "warn");
    c
}

fn run(args: &[&str]) -> Output {
    bin().args(args).output().expect("spawn")
}

const SMALL: &[&str] = &["--sequences", "10", "--frames", "20", "--height", "32", "--width", "32", "--cells", "2"];
const TINY_MODEL: &[&str] = &["--d", "16", "--blocks", "1", "--heads", "2"];

fn gen(dir: &Path, seed: &str) -> Output {
    let mut args = vec!["--seed", seed, "--out", dir.to_str().unwrap(), "gen-data"];
    args.extend_from_slice(SMALL);
    run(&args)
}

fn tree_bytes(root: &Path) -> Vec<(String, Vec<u8>)> {
    let mut out = Vec::new();
    let mut stack = vec![root.to_path_buf()];
    while let Some(d) = stack.pop() {
        for e in fs::read_dir(&d).unwrap() {
            let p = e.unwrap().path();
            if p.is_dir() {
                stack.push(p);
            } else {
                out.push((p.strip_prefix(root).unwrap().display().to_string(), fs::read(&p).unwrap()));
            }
        }
    }
    out.sort();
    out
}

#[test]
fn gen_data_is_deterministic() {
    let tmp = tempfile::tempdir().unwrap();
    let (a, b, c) = (tmp.path().join("a"), tmp.path().join("b"), tmp.path().join("c"));
    assert!(gen(&a, "3").status.success());
    assert!(gen(&b, "3").status.success());
    assert!(gen(&c, "4").status.success());
    assert_eq!(tree_bytes(&a), tree_bytes(&b));
    assert_ne!(tree_bytes(&a), tree_bytes(&c));
}

#[test]
fn insufficient_frames_is_rejected() {
    let tmp = tempfile::tempdir().unwrap();
    let o = run(&["--out", tmp.path().to_str().unwrap(), "gen-data", "--frames", "8", "--n", "5", "--m", "5"]);
    assert_eq!(o.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&o.stderr).contains("insufficient frames"));
}

#[test]
fn unknown_flag_and_help() {
    assert_eq!(run(&["gen-data", "--bogus"]).status.code(), Some(1));
    let help = run(&["--help"]);
    assert_eq!(help.status.code(), Some(0));
    assert!(String::from_utf8_lossy(&help.stdout).contains("ablate"));
}

#[test]
fn missing_checkpoint_names_the_path() {
    let tmp = tempfile::tempdir().unwrap();
    let data = tmp.path().join("data");
    assert!(gen(&data, "0").status.success());
    let ck = tmp.path().join("nowhere");
    let o = run(&[
        "--out",
        tmp.path().join("pred").to_str().unwrap(),
        "nowcast",
        "--data",
        data.to_str().unwrap(),
        "--checkpoint",
        ck.to_str().unwrap(),
    ]);
    assert_eq!(o.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&o.stderr).contains("nowhere"));
}

#[test]
fn evaluate_truth_against_itself() {
    let tmp = tempfile::tempdir().unwrap();
    let data = tmp.path().join("data");
    assert!(gen(&data, "0").status.success());
    // Test windows hold history then future; a prediction file carries only the future frames.
    let manifest: serde_json::Value = serde_json::from_slice(&fs::read(data.join("manifest.json")).unwrap()).unwrap();
    let n = manifest["n"].as_u64().unwrap() as usize;
    let pred = tmp.path().join("pred");
    fs::create_dir_all(&pred).unwrap();
    for e in fs::read_dir(data.join("test")).unwrap() {
        let p = e.unwrap().path();
        let bytes = fs::read(&p).unwrap();
        let rank = bytes[5] as usize;
        let ext: Vec<usize> =
            (0..rank).map(|i| u32::from_le_bytes(bytes[6 + 4 * i..10 + 4 * i].try_into().unwrap()) as usize).collect();
        let frame: usize = ext[1..].iter().product();
        let mut out = bytes[..6 + 4 * rank].to_vec();
        out[6..10].copy_from_slice(&((ext[0] - n) as u32).to_le_bytes());
        out.extend_from_slice(&bytes[6 + 4 * rank + n * frame * 8..]);
        fs::write(pred.join(p.file_name().unwrap()), out).unwrap();
    }
    let out = tmp.path().join("eval");
    let o = run(&["--out", out.to_str().unwrap(), "evaluate", "--pred", pred.to_str().unwrap(), "--data", data.to_str().unwrap()]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let m: serde_json::Value = serde_json::from_slice(&fs::read(out.join("metrics.json")).unwrap()).unwrap();
    assert_eq!(m["mse"].as_f64(), Some(0.0));
    assert_eq!(m["psnr_infinite"].as_bool(), Some(true));
    assert!((m["ssim"].as_f64().unwrap() - 1.0).abs() < 1e-12);
}

#[test]
fn train_nowcast_evaluate_pipeline() {
    let tmp = tempfile::tempdir().unwrap();
    let data = tmp.path().join("data");
    assert!(gen(&data, "0").status.success());
    let ck = tmp.path().join("run");
    let mut args = vec!["--out", ck.to_str().unwrap(), "train", "--data", data.to_str().unwrap(), "--steps", "2", "--val-samples", "2"];
    args.extend_from_slice(TINY_MODEL);
    let o = run(&args);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    for f in ["config.json", "loss.csv", "train_summary.json", "checkpoint/manifest.json"] {
        assert!(ck.join(f).exists(), "{f}");
    }

    let pred = tmp.path().join("pred");
    let checkpoint = ck.join("checkpoint");
    let o = run(&[
        "--out",
        pred.to_str().unwrap(),
        "nowcast",
        "--data",
        data.to_str().unwrap(),
        "--checkpoint",
        checkpoint.to_str().unwrap(),
        "--steps",
        "2",
        "--images",
    ]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    assert!(fs::read_dir(pred.join("images")).unwrap().count() > 0);

    let eval = tmp.path().join("eval");
    let o = run(&["--out", eval.to_str().unwrap(), "evaluate", "--pred", pred.to_str().unwrap(), "--data", data.to_str().unwrap()]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let m: serde_json::Value = serde_json::from_slice(&fs::read(eval.join("metrics.json")).unwrap()).unwrap();
    assert!(m["mse"].as_f64().unwrap().is_finite());

    let pers = tmp.path().join("pers");
    let o = run(&["--out", pers.to_str().unwrap(), "evaluate", "--persistence", "--data", data.to_str().unwrap()]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
}
