use std::fs;
use std::path::Path;
use std::process::{Command, Output};

fn esbid(dir: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_esbid"))
        .args(args)
        .current_dir(dir)
        .env_remove("ESBID_OUT_DIR")
        .output()
        .unwrap()
}

fn code(out: &Output) -> i32 {
    out.status.code().unwrap()
}

fn ok(dir: &Path, args: &[&str]) -> String {
    let out = esbid(dir, args);
    assert_eq!(code(&out), 0, "{args:?}: {}", String::from_utf8_lossy(&out.stderr));
    String::from_utf8(out.stdout).unwrap()
}

const DEMO: &str = "demand,105\ngenerator,G1,100,15\ngenerator,G2,100,40\nstorage,S,10,40,0.9,0,40,power,25,5\n";

#[test]
fn dispatch_demo_prices_and_infeasibility() {
    let dir = tempfile::tempdir().unwrap();
    fs::write(dir.path().join("demo.csv"), DEMO).unwrap();
    let out = ok(dir.path(), &["dispatch-demo", "demo.csv"]);
    assert!(out.starts_with("clearing_price 25\n"), "{out}");

    fs::write(dir.path().join("merit.csv"), "demand,150\ngenerator,G1,100,15\ngenerator,G2,100,40\n").unwrap();
    assert!(ok(dir.path(), &["dispatch-demo", "merit.csv"]).starts_with("clearing_price 40\n"));

    fs::write(dir.path().join("over.csv"), "demand,201\ngenerator,G1,100,15\ngenerator,G2,100,40\n").unwrap();
    assert_eq!(code(&esbid(dir.path(), &["dispatch-demo", "over.csv"])), 3);

    fs::write(dir.path().join("bad.csv"), "demand,x\n").unwrap();
    assert_eq!(code(&esbid(dir.path(), &["dispatch-demo", "bad.csv"])), 2);
    assert_eq!(code(&esbid(dir.path(), &["dispatch-demo", "missing.csv"])), 2);
}

#[test]
fn usage_errors_exit_1() {
    let dir = tempfile::tempdir().unwrap();
    let p = dir.path();
    assert_eq!(code(&esbid(p, &[])), 1);
    assert_eq!(code(&esbid(p, &["frobnicate"])), 1);
    assert_eq!(code(&esbid(p, &["value", "--zones", ""])), 1);
    assert_eq!(code(&esbid(p, &["simulate", "--cases", "RT-XX-PF"])), 1);
    assert_eq!(code(&esbid(p, &["simulate", "--durations", "0"])), 1);
    assert_eq!(code(&esbid(p, &["simulate", "--manifest", "nope.toml"])), 1);
    fs::write(p.join("typo.toml"), "zone = [\"NYC\"]\n").unwrap();
    assert_eq!(code(&esbid(p, &["simulate", "--manifest", "typo.toml"])), 1);
    fs::write(p.join("empty.toml"), "zones = []\n").unwrap();
    assert_eq!(code(&esbid(p, &["value", "--manifest", "empty.toml"])), 1);
    assert_eq!(code(&esbid(p, &["--help"])), 0);
}

#[test]
fn bad_price_data_exits_2() {
    let dir = tempfile::tempdir().unwrap();
    let p = dir.path();
    fs::write(
        p.join("da.csv"),
        "timestamp,zone,price_usd_per_mwh\n2019-01-01T00:00:00Z,NYC,20\n2019-01-01T00:00:00Z,NYC,21\n",
    )
    .unwrap();
    let out = esbid(p, &["simulate", "--da-path", "da.csv", "--cases", "DA-PB-DF"]);
    assert_eq!(code(&out), 2);
    assert!(String::from_utf8_lossy(&out.stderr).contains("line 3"));

    // an RT case with only day-ahead prices
    fs::write(p.join("ok.csv"), "timestamp,zone,price_usd_per_mwh\n2019-01-01T00:00:00Z,NYC,20\n2019-01-01T01:00:00Z,NYC,40\n")
        .unwrap();
    assert_eq!(code(&esbid(p, &["simulate", "--da-path", "ok.csv", "--cases", "RT-SB-PF"])), 2);
    assert_eq!(code(&esbid(p, &["simulate", "--da-path", "ok.csv", "--cases", "DA-SB-DF", "--out-dir", "o"])), 0);
}

#[test]
fn synthetic_files_reproduce_in_memory_run() {
    let dir = tempfile::tempdir().unwrap();
    let p = dir.path();
    ok(p, &["synth", "--synthetic-days", "2", "--seed", "11", "--zones", "A,B", "--out-dir", "tapes"]);
    let da = fs::read_to_string(p.join("tapes/da.csv")).unwrap();
    assert_eq!(da.lines().count(), 1 + 2 * 48);
    ok(p, &["simulate", "--zones", "B", "--da-path", "tapes/da.csv", "--rt-path", "tapes/rt.csv", "--out-dir", "files"]);
    ok(p, &["simulate", "--zones", "B", "--synthetic-days", "2", "--seed", "12", "--out-dir", "mem"]);
    let a = fs::read(p.join("files/summary.csv")).unwrap();
    let b = fs::read(p.join("mem/summary.csv")).unwrap();
    assert_eq!(a, b);
}

#[test]
fn worker_count_and_reruns_are_byte_identical() {
    let dir = tempfile::tempdir().unwrap();
    let p = dir.path();
    let base = ["simulate", "--zones", "A,B", "--durations", "1,6", "--synthetic-days", "2", "--seed", "4", "--traces", "true"];
    let run = |out: &str, workers: &str| {
        let mut args = base.to_vec();
        args.extend(["--workers", workers, "--out-dir", out]);
        ok(p, &args);
    };
    run("w1", "1");
    run("w3", "3");
    run("again", "1");
    for f in ["summary.csv", "summary.json", "utilization.csv", "traces/B_6h_RT-SB-DF.csv"] {
        let one = fs::read(p.join("w1").join(f)).unwrap();
        assert_eq!(one, fs::read(p.join("w3").join(f)).unwrap(), "{f}");
        assert_eq!(one, fs::read(p.join("again").join(f)).unwrap(), "{f}");
    }
    let summary = fs::read_to_string(p.join("w1/summary.csv")).unwrap();
    assert_eq!(summary.lines().count(), 1 + 2 * 2 * 6);
    for line in summary.lines().filter(|l| l.contains("RT-SB-PF")) {
        assert_eq!(line.split(',').nth(5), Some("1"));
    }
    let doc: serde_json::Value = serde_json::from_slice(&fs::read(p.join("w1/summary.json")).unwrap()).unwrap();
    assert_eq!(doc["schema_version"], 1);
    assert_eq!(doc["rows"].as_array().unwrap().len(), 24);
    assert_eq!(doc["inputs"].as_array().unwrap().len(), 4);
    assert!(doc["settings"].get("workers").is_none());
}

#[test]
fn value_dumps_one_surface_per_zone_and_duration() {
    let dir = tempfile::tempdir().unwrap();
    let p = dir.path();
    ok(p, &["value", "--zones", "A,B", "--durations", "2,6", "--synthetic-days", "2", "--out-dir", "v"]);
    let files: Vec<_> = fs::read_dir(p.join("v/value")).unwrap().collect();
    assert_eq!(files.len(), 4);
    let text = fs::read_to_string(p.join("v/value/A_6h_da.csv")).unwrap();
    let mut boundaries: Vec<&str> = text.lines().skip(1).map(|l| l.split(',').next().unwrap()).collect();
    boundaries.dedup();
    assert_eq!(boundaries.len(), 49);
}

#[test]
fn bids_write_schedules_and_duration_curves() {
    let dir = tempfile::tempdir().unwrap();
    let p = dir.path();
    ok(p, &["bids", "--cases", "DA-PB-DF,RT-SB-PF", "--synthetic-days", "1", "--out-dir", "b"]);
    let power = fs::read_to_string(p.join("b/bids/NYC_4h_DA-PB-DF.csv")).unwrap();
    assert_eq!(power.lines().count(), 1 + 24);
    let soc = fs::read_to_string(p.join("b/bids/NYC_4h_RT-SB-PF.csv")).unwrap();
    // 5-minute bids, 80 segments each
    assert_eq!(soc.lines().count(), 1 + 288 * 80);
    let curve = fs::read_to_string(p.join("b/bids/NYC_4h_RT-SB-PF_duration.csv")).unwrap();
    assert_eq!(curve.lines().count(), 1 + 288);
}

#[test]
fn manifest_supplies_flags_and_env_sets_out_dir() {
    let dir = tempfile::tempdir().unwrap();
    let p = dir.path();
    fs::create_dir(p.join("cfg")).unwrap();
    fs::write(
        p.join("cfg/run.toml"),
        "zones = [\"Z\"]\ndurations = [2.0]\ncases = [\"RT-SB-PF\", \"DA-SB-DF\"]\nsynthetic_days = 1\nout_dir = \"out\"\n",
    )
    .unwrap();
    ok(p, &["simulate", "--manifest", "cfg/run.toml"]);
    let summary = fs::read_to_string(p.join("cfg/out/summary.csv")).unwrap();
    assert_eq!(summary.lines().count(), 3);

    // flags beat the manifest
    ok(p, &["simulate", "--manifest", "cfg/run.toml", "--durations", "1,2", "--out-dir", "flag"]);
    assert_eq!(fs::read_to_string(p.join("flag/summary.csv")).unwrap().lines().count(), 5);

    let out = Command::new(env!("CARGO_BIN_EXE_esbid"))
        .args(["simulate", "--synthetic-days", "1", "--cases", "RT-SB-PF"])
        .current_dir(p)
        .env("ESBID_OUT_DIR", p.join("from-env"))
        .output()
        .unwrap();
    assert_eq!(code(&out), 0);
    assert!(p.join("from-env/summary.json").exists());
}

#[test]
fn sweep_defaults_to_full_matrix() {
    let dir = tempfile::tempdir().unwrap();
    let p = dir.path();
    ok(p, &["sweep", "--synthetic-days", "1", "--workers", "2", "--out-dir", "s"]);
    let summary = fs::read_to_string(p.join("s/summary.csv")).unwrap();
    assert_eq!(summary.lines().count(), 1 + 168);
}
