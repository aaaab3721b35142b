use std::fs;
use std::path::PathBuf;
use std::process::{Command, Output};

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_tube-spectra"))
}

fn scratch(name: &str) -> PathBuf {
    let dir = std::env::temp_dir().join(format!("tube-spectra-cli-{name}-{}", std::process::id()));
    let _ = fs::remove_dir_all(&dir);
    fs::create_dir_all(&dir).unwrap();
    dir
}

fn run(cmd: &mut Command) -> Output {
    cmd.output().expect("binary runs")
}

#[test]
fn eig_square_writes_csv() {
    let dir = scratch("eig");
    let out = run(bin().args(["--domain", "square", "--out"]).arg(&dir).args(["eig", "--h", "0.1", "--k", "2"]));
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let csv = fs::read_to_string(dir.join("eig.csv")).unwrap();
    let mut lines = csv.lines();
    assert_eq!(lines.next(), Some("domain,R,h,j,lambda,residual"));
    let rows: Vec<_> = lines.collect();
    assert_eq!(rows.len(), 2);
    let lambda: f64 = rows[0].split(',').nth(4).unwrap().parse().unwrap();
    let exact = 2.0 * std::f64::consts::PI.powi(2);
    assert!((lambda - exact).abs() / exact < 0.02, "{lambda}");
}

#[test]
fn unknown_config_key_exits_2() {
    let dir = scratch("badkey");
    let cfg = dir.join("cfg.json");
    fs::write(&cfg, r#"{"eig": {"h": 0.1, "bogus": 1}}"#).unwrap();
    let out = run(bin().arg("--config").arg(&cfg).arg("--out").arg(&dir).arg("eig"));
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("eig.bogus"));
}

#[test]
fn malformed_config_exits_2() {
    let dir = scratch("malformed");
    let cfg = dir.join("cfg.json");
    fs::write(&cfg, "{\"eig\": {\"h\": }").unwrap();
    let out = run(bin().arg("--config").arg(&cfg).arg("--out").arg(&dir).arg("eig"));
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn plot_roundtrip_and_empty_csv() {
    let dir = scratch("plot");
    let csv = dir.join("eig.csv");
    fs::write(&csv, "domain,R,h,j,lambda,residual\nsquare,0,0.1,1,19.9,1e-10\nsquare,0,0.1,2,50.1,1e-10\n").unwrap();
    let svg = dir.join("eig.svg");
    let out = run(bin().arg("plot").arg(&csv).arg("--svg").arg(&svg));
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    assert!(fs::read_to_string(&svg).unwrap().contains("<svg"));

    let empty = dir.join("empty.csv");
    fs::write(&empty, "").unwrap();
    let out = run(bin().arg("plot").arg(&empty));
    assert_eq!(out.status.code(), Some(1));
}
