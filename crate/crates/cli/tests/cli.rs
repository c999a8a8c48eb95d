use std::path::{Path, PathBuf};
use std::process::Command;

const SWEEP: &str = r#"{
  "axes": [{"variable": "Omega", "start": 0.001, "stop": 0.02, "count": 6, "spacing": "log"}],
  "model": {"system": {"g0": 0.1, "Gamma": 0.01, "gamma": 1e-4, "gamma_phi": 1e-4,
                       "epsilon": 0.01, "Omega": 0.0, "kT": 1.0, "n_max": NMAX}},
  "quantities": ["nbar", "fano"]
}"#;

fn scratch(tag: &str) -> PathBuf {
    let dir = std::env::temp_dir().join(format!("tlsmech-cli-{tag}-{}", std::process::id()));
    let _ = std::fs::remove_dir_all(&dir);
    std::fs::create_dir_all(&dir).unwrap();
    dir
}

fn run(args: &[&str], out: &Path) -> i32 {
    let status = Command::new(env!("CARGO_BIN_EXE_tlsmech"))
        .arg("--out")
        .arg(out)
        .args(args)
        .output()
        .unwrap()
        .status;
    status.code().unwrap()
}

fn sweep_config(dir: &Path, n_max: usize) -> String {
    let path = dir.join(format!("sweep_{n_max}.json"));
    std::fs::write(&path, SWEEP.replace("NMAX", &n_max.to_string())).unwrap();
    path.to_string_lossy().into_owned()
}

#[test]
fn steady_state_writes_outputs() {
    let dir = scratch("steady");
    assert_eq!(run(&["steady", "--seed-figure", "fig3"], &dir), 0);
    for f in ["steady.json", "pn.csv", "rates.csv"] {
        assert!(dir.join(f).exists(), "{f} missing");
    }
    std::fs::remove_dir_all(&dir).unwrap();
}

#[test]
fn bad_config_exits_one() {
    let dir = scratch("bad");
    let cfg = dir.join("bad.json");
    std::fs::write(&cfg, r#"{"bogus": 1}"#).unwrap();
    assert_eq!(run(&["sweep", "--config", cfg.to_str().unwrap()], &dir), 1);
    assert_eq!(run(&["reproduce", "fig9"], &dir), 1);
    std::fs::remove_dir_all(&dir).unwrap();
}

#[test]
fn point_errors_exit_two_and_keep_rows() {
    let dir = scratch("trunc");
    let cfg = sweep_config(&dir, 40);
    assert_eq!(run(&["sweep", "--config", &cfg], &dir), 2);
    let table = std::fs::read_to_string(dir.join("sweep.csv")).unwrap();
    assert_eq!(table.lines().count(), 2 + 6);
    assert!(table.contains("truncation"));
    std::fs::remove_dir_all(&dir).unwrap();
}

#[test]
fn sweep_is_deterministic() {
    let dir = scratch("det");
    let cfg = sweep_config(&dir, 150);
    let (a, b, c) = (dir.join("a"), dir.join("b"), dir.join("c"));
    assert_eq!(run(&["sweep", "--config", &cfg], &a), 0);
    assert_eq!(run(&["sweep", "--config", &cfg], &b), 0);
    assert_eq!(run(&["--workers", "3", "sweep", "--config", &cfg], &c), 0);
    let read = |d: &Path| std::fs::read(d.join("sweep.csv")).unwrap();
    assert_eq!(read(&a), read(&b));
    assert_eq!(read(&a), read(&c));
    std::fs::remove_dir_all(&dir).unwrap();
}
