//! End-to-end checks of the compiled binary: exit codes, on-disk outputs,
//! and the bit-exact rerun guarantee.

use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use tempfile::TempDir;
use tensum::tucker::TuckerNetwork;

fn run(dir: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_tensum"))
        .args(args)
        .current_dir(dir)
        .env_remove("TENSUM_OUT_DIR")
        .output()
        .expect("binary should spawn")
}

fn stdout(out: &Output) -> String {
    String::from_utf8_lossy(&out.stdout).into_owned()
}

#[test]
fn verify_sum_passes_and_writes_reports() {
    let tmp = TempDir::new().unwrap();
    let out = run(
        tmp.path(),
        &["verify-sum", "--trials", "3", "--chain-trials", "3", "--out", "vs"],
    );
    assert_eq!(out.status.code(), Some(0), "stderr: {}", String::from_utf8_lossy(&out.stderr));
    assert!(stdout(&out).contains("all 6 trials within 1e-12"));

    let report = fs::read_to_string(tmp.path().join("vs/verify.json")).unwrap();
    let trials: serde_json::Value = serde_json::from_str(&report).unwrap();
    let trials = trials.as_array().unwrap();
    assert_eq!(trials.len(), 6);
    assert!(trials.iter().all(|t| t["pass"] == true));
    assert!(tmp.path().join("vs/config.json").is_file());
}

#[test]
fn verify_sum_replays_a_single_seed() {
    let tmp = TempDir::new().unwrap();
    for kind in ["tucker", "chain"] {
        let out = run(
            tmp.path(),
            &["verify-sum", "--replay-seed", "12345", "--replay-kind", kind, "--out", kind],
        );
        assert_eq!(out.status.code(), Some(0), "kind {kind}");
    }
}

#[test]
fn synth_gen_feeds_train_eval() {
    let tmp = TempDir::new().unwrap();
    let gen = run(
        tmp.path(),
        &[
            "synth-gen", "--classes", "2", "--per-class", "4", "--shape", "6,6,3",
            "--template-ranks", "2,2,2", "--out", "ds",
        ],
    );
    assert_eq!(gen.status.code(), Some(0));
    assert!(tmp.path().join("ds/manifest.csv").is_file());
    assert!(tmp.path().join("ds/c01_s003.tsr").is_file());

    let te = run(
        tmp.path(),
        &[
            "train-eval", "--data", "ds", "--ranks", "2,2,2", "--realizations", "2",
            "--fraction", "0.75", "--out", "te",
        ],
    );
    assert_eq!(te.status.code(), Some(0), "stderr: {}", String::from_utf8_lossy(&te.stderr));
    assert!(stdout(&te).contains("mean accuracy"));
    for file in [
        "te/accuracy.json",
        "te/confusion.csv",
        "te/real_000.json",
        "te/real_001.json",
        "te/features/real_000_train.csv",
        "te/features/real_001_test.csv",
    ] {
        assert!(tmp.path().join(file).is_file(), "missing {file}");
    }

    let summary: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(tmp.path().join("te/accuracy.json")).unwrap())
            .unwrap();
    assert_eq!(summary["realizations"], 2);
    assert!(summary["mean_accuracy"].as_f64().unwrap() >= 0.0);
}

#[test]
fn compare_writes_one_row_per_fraction() {
    let tmp = TempDir::new().unwrap();
    let out = run(
        tmp.path(),
        &[
            "compare", "--classes", "2", "--per-class", "4", "--shape", "6,6,3",
            "--template-ranks", "2,2,2", "--ranks", "2,2,2", "--realizations", "1",
            "--fractions", "0.5", "--out", "cmp",
        ],
    );
    assert_eq!(out.status.code(), Some(0), "stderr: {}", String::from_utf8_lossy(&out.stderr));

    let csv = fs::read_to_string(tmp.path().join("cmp/compare.csv")).unwrap();
    let lines: Vec<&str> = csv.lines().collect();
    assert_eq!(lines[0], "fraction,acc_sum_of_tns,acc_raw_svm,acc_tkd_concat,diff_vs_raw");
    assert_eq!(lines.len(), 2);
    assert!(lines[1].starts_with("0.5,"));
    assert!(tmp.path().join("cmp/compare_f00_r000.json").is_file());
}

#[test]
fn decompose_writes_a_loadable_record() {
    let tmp = TempDir::new().unwrap();
    run(
        tmp.path(),
        &[
            "synth-gen", "--classes", "1", "--per-class", "1", "--shape", "6,6,3",
            "--template-ranks", "2,2,2", "--out", "ds",
        ],
    );
    let out = run(
        tmp.path(),
        &["decompose", "--input", "ds/c00_s000.tsr", "--ranks", "2,2,2", "--out", "dec"],
    );
    assert_eq!(out.status.code(), Some(0), "stderr: {}", String::from_utf8_lossy(&out.stderr));

    let record = fs::read_to_string(tmp.path().join("dec/c00_s000.tkr")).unwrap();
    let network = TuckerNetwork::from_record(&record).unwrap();
    assert_eq!(network.ranks(), &[2, 2, 2]);
    assert_eq!(network.reconstruct().shape(), &[6, 6, 3]);
}

#[test]
fn full_train_fraction_is_a_usage_error() {
    let tmp = TempDir::new().unwrap();
    let out = run(
        tmp.path(),
        &["train-eval", "--fraction", "1.0", "--out", "bad"],
    );
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("strictly inside (0, 1)"));
}

#[test]
fn unknown_flag_is_a_usage_error() {
    let tmp = TempDir::new().unwrap();
    let out = run(tmp.path(), &["train-eval", "--bogus"]);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn missing_input_is_a_runtime_error() {
    let tmp = TempDir::new().unwrap();
    let out = run(
        tmp.path(),
        &["decompose", "--input", "nope.tsr", "--ranks", "2,2,2", "--out", "dec"],
    );
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).starts_with("error:"));
}

#[test]
fn reruns_are_bit_exact() {
    let tmp = TempDir::new().unwrap();
    let args = |out: &'static str| {
        vec![
            "train-eval", "--classes", "2", "--per-class", "5", "--shape", "6,6,3",
            "--template-ranks", "2,2,2", "--ranks", "2,2,2", "--realizations", "2",
            "--fraction", "0.6", "--out", out,
        ]
    };
    assert_eq!(run(tmp.path(), &args("a")).status.code(), Some(0));
    assert_eq!(run(tmp.path(), &args("b")).status.code(), Some(0));

    for file in [
        "accuracy.json",
        "confusion.csv",
        "real_001.json",
        "features/real_000_train.csv",
        "features/real_001_test.csv",
    ] {
        let a = fs::read(tmp.path().join("a").join(file)).unwrap();
        let b = fs::read(tmp.path().join("b").join(file)).unwrap();
        assert_eq!(a, b, "{file} differs between reruns");
    }
}

#[test]
fn env_var_supplies_default_out_dir() {
    let tmp = TempDir::new().unwrap();
    let out = Command::new(env!("CARGO_BIN_EXE_tensum"))
        .args(["verify-sum", "--trials", "1", "--chain-trials", "1"])
        .current_dir(tmp.path())
        .env("TENSUM_OUT_DIR", "from_env")
        .output()
        .expect("binary should spawn");
    assert_eq!(out.status.code(), Some(0));
    assert!(tmp.path().join("from_env/verify.json").is_file());
}
