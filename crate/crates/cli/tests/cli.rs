use std::fs;
use std::path::Path;
use std::process::{Command, Output};

fn multisim(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_multisim")).args(args).output().expect("binary runs")
}

fn read(dir: &Path, name: &str) -> String {
    fs::read_to_string(dir.join(name)).unwrap_or_else(|e| panic!("{name}: {e}"))
}

fn manifest(dir: &Path) -> serde_json::Value {
    serde_json::from_str(&read(dir, "manifest.json")).unwrap()
}

const SHORT: &[&str] = &["--duration", "100", "--tau", "0.05"];

#[test]
fn zero_duration_writes_headers_only() {
    let dir = tempfile::tempdir().unwrap();
    let out = multisim(&["run", "--duration", "0", "--out", dir.path().to_str().unwrap()]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    assert_eq!(read(dir.path(), "reliability.csv"), "t_s,class,mean,ci_low,ci_high,low_clamped,high_clamped\n");
    assert_eq!(read(dir.path(), "delay.csv"), "t_s,class,mean_s,p95_s\n");
    assert_eq!(read(dir.path(), "ddf.csv"), "tau_s,ddf_percent,wallclock_s\n");
    let m = manifest(dir.path());
    assert_eq!(m["status"], "ok");
    assert_eq!(m["experiments"][0]["slots"], 0);
}

#[test]
fn optional_exports_are_listed_in_manifest() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path().to_str().unwrap();
    let mut args = vec!["run", "--qos", "wfq-ra", "--fail-at", "40", "--out", d];
    args.extend_from_slice(SHORT);
    args.extend_from_slice(&["--dump-topology", "--exchange-log", "--link-log"]);
    let out = multisim(&args);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));

    let topo = read(dir.path(), "topology.csv");
    assert!(topo.starts_with("id,kind,x_km,y_km\n"));
    assert_eq!(topo.lines().count(), 1 + 365);
    assert!(read(dir.path(), "exchange_log.csv").lines().count() > 100);
    let links = read(dir.path(), "link_log.csv");
    assert!(links.contains(",dmr,"));

    let m = manifest(dir.path());
    let listed: Vec<&str> = m["outputs"].as_array().unwrap().iter().map(|v| v.as_str().unwrap()).collect();
    for f in
        ["reliability.csv", "delay.csv", "ddf.csv", "topology.csv", "exchange_log.csv", "link_log.csv", "manifest.json"]
    {
        assert!(listed.contains(&f), "{f} missing from {listed:?}");
        assert!(dir.path().join(f).exists());
    }
    assert_eq!(m["config"]["qos"], "wfq-ra");
    assert_eq!(m["transport"], "inproc");
}

#[test]
fn identical_flags_give_identical_files() {
    let (a, b) = (tempfile::tempdir().unwrap(), tempfile::tempdir().unwrap());
    for dir in [&a, &b] {
        let mut args =
            vec!["run", "--qos", "wfq", "--fail-at", "50", "--seed", "11", "--out", dir.path().to_str().unwrap()];
        args.extend_from_slice(SHORT);
        assert!(multisim(&args).status.success());
    }
    for f in ["reliability.csv", "delay.csv"] {
        assert_eq!(read(a.path(), f), read(b.path(), f), "{f}");
    }
}

#[test]
fn socket_transport_matches_inproc() {
    let (a, b) = (tempfile::tempdir().unwrap(), tempfile::tempdir().unwrap());
    for (dir, transport) in [(&a, "inproc"), (&b, "socket")] {
        let mut args = vec!["run", "--qos", "wfq-ra", "--fail-at", "30", "--transport", transport];
        args.extend_from_slice(&["--out", dir.path().to_str().unwrap()]);
        args.extend_from_slice(SHORT);
        let out = multisim(&args);
        assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    }
    assert_eq!(read(a.path(), "reliability.csv"), read(b.path(), "reliability.csv"));
    assert_eq!(
        manifest(a.path())["experiments"][0]["trace_sha256"],
        manifest(b.path())["experiments"][0]["trace_sha256"]
    );
}

#[test]
fn sweep_writes_one_row_per_tau() {
    let dir = tempfile::tempdir().unwrap();
    let out = multisim(&["sweep", "--taus", "1,0.1", "--duration", "200", "--out", dir.path().to_str().unwrap()]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let ddf = read(dir.path(), "ddf.csv");
    let rows: Vec<&str> = ddf.lines().skip(1).collect();
    assert_eq!(rows.len(), 2);
    assert!(rows[0].starts_with("1.00000,"));
    assert!(rows[1].starts_with("0.10000,"));
    assert_eq!(manifest(dir.path())["experiments"].as_array().unwrap().len(), 2);
}

#[test]
fn usage_errors_exit_2() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path().to_str().unwrap();

    let single = multisim(&["sweep", "--taus", "0.1", "--out", d]);
    assert_eq!(single.status.code(), Some(2));

    let zero_tau = multisim(&["run", "--tau", "0", "--out", d]);
    assert_eq!(zero_tau.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&zero_tau.stderr).contains("tau_s"));

    let bad_qos = multisim(&["run", "--qos", "priority", "--out", d]);
    assert_eq!(bad_qos.status.code(), Some(2));

    let cfg = dir.path().join("bad.cfg");
    fs::write(&cfg, "tau_s = 0.01\nwarp_factor = 9\n").unwrap();
    let bad_key = multisim(&["run", "--config", cfg.to_str().unwrap(), "--out", d]);
    assert_eq!(bad_key.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&bad_key.stderr).contains("line 2"));

    let bad_set = multisim(&["run", "--set", "alpha_e", "--out", d]);
    assert_eq!(bad_set.status.code(), Some(2));
}

#[test]
fn shipped_scenario_loads() {
    let path = concat!(env!("CARGO_MANIFEST_DIR"), "/../../scenarios/case_study.cfg");
    let dir = tempfile::tempdir().unwrap();
    let out = multisim(&["run", "--config", path, "--duration", "50", "--out", dir.path().to_str().unwrap()]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    assert_eq!(manifest(dir.path())["config"]["dmr_capacity_bps"], 1920);
}

#[test]
fn runtime_failure_still_writes_manifest() {
    let dir = tempfile::tempdir().unwrap();
    let out = multisim(&[
        "run",
        "--transport",
        "socket",
        "--rti-listen",
        "203.0.113.1:1",
        "--duration",
        "10",
        "--out",
        dir.path().to_str().unwrap(),
    ]);
    assert_eq!(out.status.code(), Some(1));
    let m = manifest(dir.path());
    assert_eq!(m["status"], "failed");
    assert!(m["error"].as_str().unwrap().contains("203.0.113.1"));
}
