use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

const BIN: &str = env!("CARGO_BIN_EXE_queuelab");

fn queuelab(args: &[&str]) -> Output {
    Command::new(BIN)
        .args(args)
        .env_remove("QUEUELAB_OUT_DIR")
        .output()
        .expect("binary runs")
}

fn write_config(dir: &Path, name: &str, text: &str) -> PathBuf {
    let p = dir.join(name);
    fs::write(&p, text).unwrap();
    p
}

fn body(csv: &Path) -> Vec<String> {
    fs::read_to_string(csv)
        .unwrap()
        .lines()
        .filter(|l| !l.starts_with('#'))
        .skip(1)
        .map(str::to_string)
        .collect()
}

const GG1: &str = "[experiment]
model = gg1
seed = 42
replications = 4

[params]
interarrival = exp(0.5)
service = exp(1.0)
customers = 20000
levels = 0, 1, 2
";

fn run(cfg: &Path, out: &Path, extra: &[&str]) -> Output {
    let mut args = vec!["run", cfg.to_str().unwrap(), "--out", out.to_str().unwrap()];
    args.extend_from_slice(extra);
    let o = queuelab(&args);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    o
}

#[test]
fn same_seed_same_bytes_any_thread_count() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), "gg1.conf", GG1);
    let (a, b) = (dir.path().join("a"), dir.path().join("b"));
    run(&cfg, &a, &["--threads", "1"]);
    run(&cfg, &b, &["--threads", "4"]);
    let (x, y) = (
        fs::read(a.join("gg1.csv")).unwrap(),
        fs::read(b.join("gg1.csv")).unwrap(),
    );
    assert_eq!(x, y);
    assert_eq!(body(&a.join("gg1.csv")).len(), 12);
}

#[test]
fn replications_pool_like_separate_runs() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), "gg1.conf", GG1);
    run(&cfg, &dir.path().join("all"), &[]);
    let pooled = body(&dir.path().join("all/gg1.csv"));
    let mut separate = Vec::new();
    for k in 0..4 {
        let text = GG1.replace("replications = 4", &format!("replications = 1\nstream_offset = {k}"));
        let c = write_config(dir.path(), &format!("gg1_{k}.conf"), &text);
        let out = dir.path().join(format!("one{k}"));
        run(&c, &out, &[]);
        separate.extend(body(&out.join("gg1.csv")));
    }
    assert_eq!(pooled, separate);
}

#[test]
fn seed_flag_changes_output() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), "gg1.conf", GG1);
    run(&cfg, &dir.path().join("a"), &["--reps", "1"]);
    run(&cfg, &dir.path().join("b"), &["--reps", "1", "--seed", "43"]);
    let (a, b) = (body(&dir.path().join("a/gg1.csv")), body(&dir.path().join("b/gg1.csv")));
    assert_eq!(a.len(), 3);
    assert_ne!(a, b);
}

#[test]
fn output_dir_from_environment() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), "gg1.conf", GG1);
    let out = dir.path().join("from_env");
    let o = Command::new(BIN)
        .args(["run", cfg.to_str().unwrap(), "--reps", "1"])
        .env("QUEUELAB_OUT_DIR", &out)
        .output()
        .unwrap();
    assert!(o.status.success());
    assert!(out.join("gg1.csv").exists() && out.join("manifest.json").exists());
}

#[test]
fn manifest_detects_tampering() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), "gg1.conf", GG1);
    let out = dir.path().join("run");
    run(&cfg, &out, &[]);
    let manifest = out.join("manifest.json");
    let m: serde_json::Value = serde_json::from_slice(&fs::read(&manifest).unwrap()).unwrap();
    assert_eq!(m["outputs"][0]["rows"], 12);
    assert_eq!(m["streams"].as_array().unwrap().len(), 4);
    assert_eq!(m["config"]["params.service"], "exp(1.0)");
    assert!(queuelab(&["verify", manifest.to_str().unwrap()]).status.success());

    let csv = out.join("gg1.csv");
    let text = fs::read_to_string(&csv).unwrap();
    fs::write(&csv, text.replacen("e-1", "e-2", 1)).unwrap();
    let o = queuelab(&["verify", manifest.to_str().unwrap()]);
    assert!(!o.status.success());
    assert!(String::from_utf8_lossy(&o.stderr).contains("sha256"));
}

#[test]
fn validate_reports_every_error_and_fails() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(
        dir.path(),
        "bad.conf",
        "[experiment]\nmodel = multiaccess\nseed = 1\n[params]\nfeedback = collision\nrule = mult(1.1,0.9)\nlambda = -1\nslots = 0\nwibble = 2\n",
    );
    let o = queuelab(&["validate", cfg.to_str().unwrap()]);
    assert!(!o.status.success());
    let err = String::from_utf8_lossy(&o.stderr);
    assert!(
        err.contains("line 7: params.lambda: must lie in (0, 1), got -1"),
        "{err}"
    );
    assert!(err.contains("line 8: params.slots"), "{err}");
    assert!(err.contains("line 9: unknown key params.wibble"), "{err}");
}

#[test]
fn polling_scan_resolution_two_gives_sixteen_rows() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(
        dir.path(),
        "scan.conf",
        "[experiment]\nmodel = polling_scan\nseed = 1\n[params]\nresolution = 2\ncycles = 100\n",
    );
    let out = dir.path().join("scan");
    run(&cfg, &out, &[]);
    let rows = body(&out.join("polling_scan.csv"));
    assert_eq!(rows.len(), 16);
    assert!(rows
        .iter()
        .all(|r| ["stable", "transient", "null_boundary_candidate", "inconclusive"]
            .iter()
            .any(|c| r.contains(c))));
}

#[test]
fn list_models_names_all_nine() {
    let o = queuelab(&["list-models"]);
    assert!(o.status.success());
    let text = String::from_utf8_lossy(&o.stdout);
    assert_eq!(text.lines().count(), 9);
    assert!(text.contains("greedy_circle"));
}

#[test]
fn documented_configs_validate() {
    let docs = Path::new(env!("CARGO_MANIFEST_DIR")).join("../../docs/configs");
    let mut models = std::collections::BTreeSet::new();
    for entry in fs::read_dir(&docs).unwrap() {
        let path = entry.unwrap().path();
        if path.extension().is_some_and(|e| e == "conf") {
            let o = queuelab(&["validate", path.to_str().unwrap()]);
            assert!(
                o.status.success(),
                "{}: {}",
                path.display(),
                String::from_utf8_lossy(&o.stderr)
            );
            let text = String::from_utf8_lossy(&o.stdout).to_string();
            models.insert(text.split('(').nth(1).unwrap().split(',').next().unwrap().to_string());
        }
    }
    assert_eq!(models.len(), 9, "{models:?}");
}
