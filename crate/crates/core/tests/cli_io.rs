//! End-to-end checks of the command-line binary: flags, emitted files,
//! determinism, and exit codes.

use std::path::Path;
use std::process::Command;

fn binary() -> Command {
    Command::new(env!("CARGO_BIN_EXE_hcf-sim"))
}

fn tmp_dir(tag: &str) -> std::path::PathBuf {
    let dir = std::env::temp_dir().join(format!("hcf-sim-test-{tag}-{}", std::process::id()));
    let _ = std::fs::remove_dir_all(&dir);
    dir
}

fn read(path: &Path) -> String {
    std::fs::read_to_string(path).unwrap_or_else(|e| panic!("read {}: {e}", path.display()))
}

#[test]
fn downlink_run_emits_consistent_files() {
    let out = tmp_dir("dl");
    let status = binary()
        .args([
            "--scenario",
            "micro",
            "--arch",
            "hcf",
            "--link",
            "dl",
            "--power",
            "equal",
            "--epochs",
            "2",
            "--seed",
            "5",
            "--emit",
            "both",
            "--out",
        ])
        .arg(&out)
        .status()
        .unwrap();
    assert!(status.success());

    // 2 epochs x 8 users plus the header.
    let samples = read(&out.join("samples.csv"));
    let lines: Vec<&str> = samples.lines().collect();
    assert_eq!(lines.len(), 17);
    assert_eq!(lines[0], "epoch,user,se_bps_hz");
    assert!(samples.ends_with('\n'));

    let cdf = read(&out.join("cdf.csv"));
    assert_eq!(cdf.lines().count(), 17);
    assert_eq!(cdf.lines().next().unwrap(), "value,prob");

    // The summary quantile equals the quantile of the emitted samples.
    let summary: serde_json::Value =
        serde_json::from_str(&read(&out.join("summary.json"))).unwrap();
    for key in [
        "run_id",
        "samples",
        "likely_rate_95_bps_hz",
        "median_se_bps_hz",
        "mean_sum_throughput_bps_hz",
        "power_savings",
        "spec",
    ] {
        assert!(summary.get(key).is_some(), "summary key {key}");
    }
    let mut se: Vec<f64> = lines[1..]
        .iter()
        .map(|l| l.split(',').nth(2).unwrap().parse().unwrap())
        .collect();
    se.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let expected = se[0]; // ceil(0.05 * 16) = 1 -> first sorted sample
    let got = summary["likely_rate_95_bps_hz"].as_f64().unwrap();
    assert!((got - expected).abs() <= 1e-12 * expected.abs().max(1.0));

    let manifest: serde_json::Value =
        serde_json::from_str(&read(&out.join("manifest.json"))).unwrap();
    assert_eq!(manifest["spec"]["epochs"], 2);

    let _ = std::fs::remove_dir_all(&out);
}

#[test]
fn reruns_are_byte_identical() {
    let out_a = tmp_dir("det-a");
    let out_b = tmp_dir("det-b");
    for out in [&out_a, &out_b] {
        let status = binary()
            .args([
                "--arch", "cf", "--link", "ul", "--power", "maxmin", "--epochs", "2",
                "--sf-draws", "2", "--seed", "11", "--emit", "csv", "--out",
            ])
            .arg(out)
            .status()
            .unwrap();
        assert!(status.success());
    }
    assert_eq!(
        read(&out_a.join("samples.csv")),
        read(&out_b.join("samples.csv"))
    );
    assert_eq!(read(&out_a.join("cdf.csv")), read(&out_b.join("cdf.csv")));
    let _ = std::fs::remove_dir_all(&out_a);
    let _ = std::fs::remove_dir_all(&out_b);
}

#[test]
fn solver_trace_is_emitted_on_request() {
    let out = tmp_dir("trace");
    let status = binary()
        .args([
            "--arch", "hcf", "--link", "dl", "--power", "maxmin", "--epochs", "2",
            "--seed", "3", "--trace-solver", "--out",
        ])
        .arg(&out)
        .status()
        .unwrap();
    assert!(status.success());
    let trace = read(&out.join("solver_trace.jsonl"));
    assert_eq!(trace.lines().count(), 2); // one downlink solve per epoch
    for line in trace.lines() {
        let record: serde_json::Value = serde_json::from_str(line).unwrap();
        assert!(record["low"].as_f64().unwrap() <= record["high"].as_f64().unwrap());
        assert!(record["iterations"].as_u64().unwrap() > 0);
    }
    let _ = std::fs::remove_dir_all(&out);
}

#[test]
fn config_overrides_steer_the_scenario() {
    let out = tmp_dir("cfg");
    std::fs::create_dir_all(&out).unwrap();
    let cfg = out.join("overrides.json");
    std::fs::write(&cfg, r#"{"users": 4, "tau_p": 2}"#).unwrap();
    let status = binary()
        .args(["--arch", "cf", "--link", "dl", "--epochs", "2", "--config"])
        .arg(&cfg)
        .args(["--out"])
        .arg(&out)
        .status()
        .unwrap();
    assert!(status.success());
    assert_eq!(read(&out.join("samples.csv")).lines().count(), 9);
    let _ = std::fs::remove_dir_all(&out);
}

#[test]
fn exit_codes_follow_the_contract() {
    // Usage errors exit 2.
    let status = binary().args(["--epochs", "0"]).status().unwrap();
    assert_eq!(status.code(), Some(2));

    let status = binary().args(["--frobnicate"]).status().unwrap();
    assert_eq!(status.code(), Some(2));

    // Inconsistent scenario overrides are usage errors too.
    let out = tmp_dir("bad");
    std::fs::create_dir_all(&out).unwrap();
    let cfg = out.join("bad.json");
    std::fs::write(&cfg, r#"{"cbs_antennas": 33}"#).unwrap();
    let status = binary().args(["--config"]).arg(&cfg).status().unwrap();
    assert_eq!(status.code(), Some(2));

    // Unwritable output directories are I/O errors (exit 4).
    let status = binary()
        .args(["--epochs", "1", "--arch", "cf", "--link", "dl", "--out", "/proc/nope"])
        .status()
        .unwrap();
    assert_eq!(status.code(), Some(4));

    // Help exits 0.
    let status = binary().arg("--help").status().unwrap();
    assert_eq!(status.code(), Some(0));
    let _ = std::fs::remove_dir_all(&out);
}
