use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use serde_json::Value;

fn sfl(args: &[&str], config: &Path, out: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_sfl"))
        .args(args)
        .arg("--config")
        .arg(config)
        .arg("--out")
        .arg(out)
        .output()
        .expect("sfl runs")
}

fn configs() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../configs")
}

fn read_json(path: &Path) -> Value {
    serde_json::from_str(&std::fs::read_to_string(path).unwrap()).unwrap()
}

fn write(dir: &Path, name: &str, text: &str) -> PathBuf {
    let p = dir.join(name);
    std::fs::write(&p, text).unwrap();
    p
}

const SMALL: &str = r#"
dim = 2
nonlinearity = { kind = "pure_power", q = 2.0 }
[grid]
n = 801
"#;

#[test]
fn shipped_verify_config_passes() {
    let tmp = tempfile::tempdir().unwrap();
    let o = sfl(&["verify"], &configs().join("verify.toml"), tmp.path());
    assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
    let manifest = read_json(&tmp.path().join("manifest.json"));
    assert_eq!(manifest["status"], "ok");
    let claims = manifest["claims"].as_array().unwrap();
    assert!(!claims.is_empty());
    assert!(claims.iter().all(|c| c["status"] == "pass"), "{claims:?}");
    let detail = read_json(&tmp.path().join("claims.json"));
    assert!(detail[0]["claims"][0].get("lhs").is_some());
}

#[test]
fn critical_power_fails_g3() {
    let tmp = tempfile::tempdir().unwrap();
    let o = sfl(&["classify"], &configs().join("classify_critical.toml"), tmp.path());
    assert_eq!(o.status.code(), Some(0));
    let r = read_json(&tmp.path().join("classify.json"));
    assert_eq!(r["conditions"]["g3"], "fail");
    assert_eq!(r["standing_hypotheses_hold"], false);
}

#[test]
fn negative_radius_is_a_config_error() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write(tmp.path(), "bad.toml", &format!("{SMALL}rmax = -5.0\n"));
    let o = sfl(&["ground-state"], &cfg, &tmp.path().join("out"));
    assert_eq!(o.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&o.stderr).contains("grid.rmax"));
}

#[test]
fn unknown_keys_are_named() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write(tmp.path(), "bad.toml", &format!("{SMALL}nodes = 10\n"));
    let o = sfl(&["ground-state"], &cfg, &tmp.path().join("out"));
    assert_eq!(o.status.code(), Some(2));
    let err = String::from_utf8_lossy(&o.stderr);
    assert!(err.contains("grid") && err.contains("nodes"), "{err}");
}

#[test]
fn includes_merge_and_cycles_are_rejected() {
    let tmp = tempfile::tempdir().unwrap();
    write(tmp.path(), "base.toml", &format!("{SMALL}lengths = 40.0\n"));
    let cfg = write(tmp.path(), "run.toml", "include = [\"base.toml\"]\n[grid]\nn = 641\n");
    let o = sfl(&["ground-state"], &cfg, &tmp.path().join("out"));
    assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
    let s = read_json(&tmp.path().join("out/ground_state.json"));
    assert_eq!(s["nodes"], 641);
    // λ = 0: R = lengths
    assert!((s["rmax"].as_f64().unwrap() - 40.0).abs() < 1e-12);

    write(tmp.path(), "a.toml", "include = \"b.toml\"\n");
    let a = write(tmp.path(), "b.toml", "include = \"a.toml\"\n");
    let o = sfl(&["classify"], &a, &tmp.path().join("cyc"));
    assert_eq!(o.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&o.stderr).contains("cycle"));
}

fn artifact_hashes(dir: &Path) -> Vec<(String, String)> {
    let m = read_json(&dir.join("manifest.json"));
    m["artifacts"]
        .as_array()
        .unwrap()
        .iter()
        .map(|a| (a["name"].as_str().unwrap().to_string(), a["sha256"].as_str().unwrap().to_string()))
        .collect()
}

#[test]
fn flow_is_reproducible_for_a_seed() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write(
        tmp.path(),
        "flow.toml",
        &format!("{SMALL}[lambda]\nwindow = [-3.0, 2.0]\n[mass]\nm = 62.0\n[flow]\nstarts = 4\n"),
    );
    let run = |seed: &str, out: &str| {
        let o = Command::new(env!("CARGO_BIN_EXE_sfl"))
            .args(["flow", "--seed", seed, "--threads", "2", "--config"])
            .arg(&cfg)
            .arg("--out")
            .arg(tmp.path().join(out))
            .output()
            .unwrap();
        assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
        artifact_hashes(&tmp.path().join(out))
    };
    let a = run("11", "a");
    assert_eq!(a.len(), 5);
    assert_eq!(a, run("11", "b"));
    assert_ne!(a, run("12", "c"));
    let m = read_json(&tmp.path().join("a/manifest.json"));
    assert_eq!(m["seed"], 11);
    let csv = std::fs::read_to_string(tmp.path().join("a/flow_00.csv")).unwrap();
    assert!(csv.starts_with("step,theta,lambda,J,P,grad_norm,psi,phi\n"));
}

#[test]
fn numerical_failure_writes_an_error_report() {
    let tmp = tempfile::tempdir().unwrap();
    // no one-node state on the line
    let cfg = write(tmp.path(), "line.toml", "dim = 1\nk = 1\nnonlinearity = { kind = \"pure_power\", q = 2.0 }\n");
    let o = sfl(&["ground-state"], &cfg, tmp.path());
    assert_eq!(o.status.code(), Some(3));
    assert!(tmp.path().join("error.json").exists());
    assert_eq!(read_json(&tmp.path().join("manifest.json"))["status"], "numerical_failure");
}

#[test]
fn failed_claims_exit_4() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write(
        tmp.path(),
        "mp.toml",
        &format!("{SMALL}[tolerances]\nidentity = 1e-300\n[path]\nnodes = 16\n"),
    );
    let o = sfl(&["mp-level"], &cfg, tmp.path());
    assert_eq!(o.status.code(), Some(4), "{}", String::from_utf8_lossy(&o.stderr));
    let m = read_json(&tmp.path().join("manifest.json"));
    assert_eq!(m["claims"][0]["status"], "fail");
    assert!(tmp.path().join("path_history.csv").exists());
}

#[test]
fn config_hash_ignores_formatting() {
    let tmp = tempfile::tempdir().unwrap();
    let a = write(tmp.path(), "a.toml", "dim = 2\nnonlinearity = { kind = \"pure_power\", q = 3.0 }\n");
    let b = write(
        tmp.path(),
        "b.toml",
        "# same run\ndim   =   2\n\n[nonlinearity]\nq = 3.0\nkind = \"pure_power\"\n",
    );
    let hash = |cfg: &Path, out: &str| {
        let o = sfl(&["classify"], cfg, &tmp.path().join(out));
        assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
        read_json(&tmp.path().join(out).join("manifest.json"))["config_sha256"].clone()
    };
    assert_eq!(hash(&a, "oa"), hash(&b, "ob"));
}
