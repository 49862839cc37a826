use std::path::Path;
use std::process::{Command, Output};

use frd_core::archive::{read_manifest, Manifest};

const CONSTANT_2D: &str = "[torus]\nd = 2\nm = 1\nL = 3\nN = 2\n[run]\nsources = [[0, 0], [4, 4]]\n";

fn frd(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_frd")).args(args).env("SOURCE_DATE_EPOCH", "1700000000").output().unwrap()
}

fn write_config(dir: &Path, name: &str, text: &str) -> String {
    let p = dir.join(name);
    std::fs::write(&p, text).unwrap();
    p.to_str().unwrap().to_string()
}

fn decompose(dir: &Path, text: &str, name: &str) -> (String, Manifest) {
    let cfg = write_config(dir, &format!("{name}.toml"), text);
    let out = dir.join(name);
    let o = frd(&["decompose", "--config", &cfg, "--out", out.to_str().unwrap()]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    (out.to_str().unwrap().to_string(), read_manifest(&out).unwrap())
}

fn error_kind(o: &Output) -> String {
    let v: serde_json::Value = serde_json::from_slice(&o.stderr).unwrap();
    v["error"].as_str().unwrap().to_string()
}

#[test]
fn minimal_config_gives_two_levels() {
    let dir = tempfile::tempdir().unwrap();
    let (_, m) = decompose(dir.path(), "[torus]\nd = 2\nm = 1\nL = 3\nN = 1\n", "ar");
    assert_eq!(m.plan.levels(), 2);
    assert_eq!(m.kernels.len(), 2);
}

#[test]
fn perturbed_archive_is_reproducible() {
    let text = "[torus]\nd = 3\nm = 1\nL = 3\nN = 2\n[coefficients]\nepsilon = 0.05\n[[coefficients.modes]]\nfrequency = [1, 0, 0]\namplitude = [1.0, 0.0, 0.0, 0.0, 1.0, 0.0, 0.0, 0.0, 1.0]\n";
    let dir = tempfile::tempdir().unwrap();
    let (a, ma) = decompose(dir.path(), text, "a");
    let (b, mb) = decompose(dir.path(), text, "b");
    assert_eq!(ma.plan.levels(), 3);
    assert_eq!(ma.digest, mb.digest);
    for e in &ma.kernels {
        let read = |d: &str| std::fs::read(Path::new(d).join(&e.file)).unwrap();
        assert_eq!(read(&a), read(&b));
    }
    let man = |d: &str| std::fs::read(Path::new(d).join("manifest.json")).unwrap();
    assert_eq!(man(&a), man(&b));
}

#[test]
fn invalid_configs_exit_with_usage_code() {
    let dir = tempfile::tempdir().unwrap();
    let even = write_config(dir.path(), "even.toml", "[torus]\nd = 2\nm = 1\nL = 4\nN = 1\n");
    let o = frd(&["decompose", "--config", &even, "--out", dir.path().join("x").to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(2));
    assert_eq!(error_kind(&o), "invalid_torus");
    let unknown = write_config(dir.path(), "unknown.toml", "[torus]\nd = 2\nm = 1\nL = 3\nN = 1\neps = 1\n");
    let o = frd(&["decompose", "--config", &unknown, "--out", dir.path().join("y").to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(2));
    assert_eq!(error_kind(&o), "config");
    assert_eq!(frd(&["verify"]).status.code(), Some(2));
}

#[test]
fn constant_archive_passes_every_suite() {
    let dir = tempfile::tempdir().unwrap();
    let (ar, _) = decompose(dir.path(), CONSTANT_2D, "ar");
    let o = frd(&["verify", &ar, "--suite", "all"]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stdout));
    let reports = Path::new(&ar).join("reports");
    let csv = std::fs::read_to_string(reports.join("verify-all.csv")).unwrap();
    assert!(csv.starts_with("check,params,lhs,rhs,ratio,pass\n"));
    let o = frd(&["report", reports.to_str().unwrap()]);
    assert!(o.status.success());
    assert_eq!(String::from_utf8_lossy(&o.stdout), csv);
}

#[test]
fn truncated_kernel_is_an_integrity_error() {
    let dir = tempfile::tempdir().unwrap();
    let (ar, m) = decompose(dir.path(), CONSTANT_2D, "ar");
    let p = Path::new(&ar).join(&m.kernels[0].file);
    let bytes = std::fs::read(&p).unwrap();
    std::fs::write(&p, &bytes[..bytes.len() / 2]).unwrap();
    let o = frd(&["verify", &ar, "--suite", "range"]);
    assert_eq!(o.status.code(), Some(3));
    assert_eq!(error_kind(&o), "integrity");
}

#[test]
fn decay_with_one_scale_is_report_only() {
    let dir = tempfile::tempdir().unwrap();
    let (ar, _) = decompose(dir.path(), "[torus]\nd = 3\nm = 1\nL = 3\nN = 1\n", "ar");
    let o = frd(&["verify", &ar, "--suite", "decay"]);
    assert!(o.status.success());
    let jsonl = std::fs::read_to_string(Path::new(&ar).join("reports/verify-decay.jsonl")).unwrap();
    let rep = frd_core::report::Report::from_jsonl(&jsonl).unwrap();
    assert!(!rep.records.is_empty());
    assert!(rep.records.iter().all(|r| !r.asserted));
    assert!(rep.records.iter().any(|r| r.note.contains("not asserted")));
}

#[test]
fn sampling_is_deterministic() {
    let dir = tempfile::tempdir().unwrap();
    let (ar, _) = decompose(dir.path(), CONSTANT_2D, "ar");
    let none = dir.path().join("none");
    let o = frd(&["sample", &ar, "--count", "0", "--out", none.to_str().unwrap()]);
    assert!(o.status.success());
    assert!(!none.exists());
    let (a, b) = (dir.path().join("a"), dir.path().join("b"));
    for d in [&a, &b] {
        let o = frd(&["sample", &ar, "--count", "4", "--seed", "9", "--out", d.to_str().unwrap()]);
        assert!(o.status.success());
    }
    for i in 0..4 {
        let f = format!("sample-{i:05}.bin");
        assert_eq!(std::fs::read(a.join(&f)).unwrap(), std::fs::read(b.join(&f)).unwrap());
    }
}

#[test]
fn probe_reports_pass_for_constant_coefficients() {
    let dir = tempfile::tempdir().unwrap();
    let text = "[torus]\nd = 2\nm = 1\nL = 3\nN = 2\n[probe]\ndirection = [0.3, 0.15, 0.15, 0.5]\nh = 1e-3\n";
    let cfg = write_config(dir.path(), "p.toml", text);
    let out = dir.path().join("probe");
    let o = frd(&["--threads", "1", "probe", "--config", &cfg, "--out", out.to_str().unwrap()]);
    assert!(o.status.success(), "{}{}", String::from_utf8_lossy(&o.stdout), String::from_utf8_lossy(&o.stderr));
    let rep = frd_core::report::Report::from_jsonl(&std::fs::read_to_string(out.join("probe.jsonl")).unwrap()).unwrap();
    assert!(rep.records.iter().any(|r| r.check == "resolvent_oracle" && r.pass));
    assert!(out.join("derivative.bin").exists());
}
