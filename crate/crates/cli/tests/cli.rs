use serde_json::Value;
use std::fs;
use std::path::Path;
use std::process::{Command, Output};
use tempfile::TempDir;

fn run(dir: &Path, args: &[&str], config: &str) -> Output {
    let cfg = dir.join("run.toml");
    fs::write(&cfg, config).unwrap();
    Command::new(env!("CARGO_BIN_EXE_bandframe"))
        .args(args)
        .arg("--config")
        .arg(&cfg)
        .arg("--out")
        .arg(dir.join("out"))
        .output()
        .unwrap()
}

fn summary(dir: &Path) -> Value {
    serde_json::from_str(&fs::read_to_string(dir.join("out/summary.json")).unwrap()).unwrap()
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

const QWZ16: &str = "schema_version = 1\n[model]\nname = \"qwz\"\n[box]\nL = 16\n[magnetic]\nflux = [[1, 16]]\n";

#[test]
fn selftest_on_the_chain_passes() {
    let d = TempDir::new().unwrap();
    let o = run(d.path(), &["selftest"], "schema_version = 1\n[model]\nname = \"chain1d\"\n[box]\nL = 16\n");
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let s = summary(d.path());
    assert!(s["certificates"].as_array().unwrap().iter().all(|c| c["passed"] == true));
    assert!(s["data"]["magnetic_checks"].is_string());
}

#[test]
fn selftest_on_qwz_passes() {
    let d = TempDir::new().unwrap();
    let o = run(d.path(), &["selftest"], QWZ16);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
}

#[test]
fn chern_band_frame_escalates_with_a_warning() {
    let d = TempDir::new().unwrap();
    let o = run(d.path(), &["frame"], "schema_version = 1\n[frame]\nnB_start = 1\n[box]\nL = 16\n");
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    assert!(stderr(&o).contains("escalated from n_B = 1 to n_B = 2"));
    let s = summary(d.path());
    assert_eq!(s["data"]["nB"], 2);
    assert_eq!(s["data"]["chern"], -1);
    assert!(d.path().join("out/frame.json").exists());
}

#[test]
fn zero_band_index_names_the_key() {
    let d = TempDir::new().unwrap();
    let o = run(d.path(), &["bands"], "schema_version = 1\n[family]\nk0 = 0\n");
    assert_eq!(o.status.code(), Some(1));
    assert!(stderr(&o).contains("family.k0"), "{}", stderr(&o));
}

#[test]
fn unknown_key_is_rejected() {
    let d = TempDir::new().unwrap();
    let o = run(d.path(), &["bands"], "schema_version = 1\n[window]\nwidth = 2\n");
    assert_eq!(o.status.code(), Some(1));
    let e = stderr(&o);
    assert!(e.contains("window") && e.contains("width"), "{e}");
}

#[test]
fn incommensurate_flux_is_a_config_error() {
    let d = TempDir::new().unwrap();
    let o = run(d.path(), &["compare"], "schema_version = 1\n[box]\nL = 16\n[magnetic]\nflux = [[1, 7]]\n");
    assert_eq!(o.status.code(), Some(1));
    assert!(stderr(&o).contains("magnetic.eps_list[0]"));
}

#[test]
fn oversized_box_hits_the_resource_bound() {
    let d = TempDir::new().unwrap();
    let o = run(d.path(), &["effective"], "schema_version = 1\n[box]\nL = 16\n[limits]\nmax_dim = 100\n");
    assert_eq!(o.status.code(), Some(3), "{}", stderr(&o));
    assert!(stderr(&o).contains("max_dim"));
}

#[test]
fn entangled_pair_is_not_a_single_band() {
    let d = TempDir::new().unwrap();
    let o = run(d.path(), &["bands"], "schema_version = 1\n[model]\nname = \"fourband\"\n[box]\nL = 16\n");
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("not isolated"), "{}", stderr(&o));
}

#[test]
fn reruns_are_byte_identical() {
    let d = TempDir::new().unwrap();
    let cfg = "schema_version = 1\n[box]\nL = 16\n[magnetic]\nflux = [[1, 16], [1, 8]]\n";
    let read = |name: &str| fs::read(d.path().join("out").join(name)).unwrap();
    assert_eq!(run(d.path(), &["effective"], cfg).status.code(), Some(0));
    let names: Vec<String> = summary(d.path())["artifacts"].as_array().unwrap().iter().map(|v| v.as_str().unwrap().to_string()).collect();
    let first: Vec<Vec<u8>> = names.iter().map(|n| read(n)).collect();
    assert_eq!(run(d.path(), &["effective"], cfg).status.code(), Some(0));
    for (n, bytes) in names.iter().zip(&first) {
        assert_eq!(&read(n), bytes, "{n} changed between runs");
    }
}

#[test]
fn harper_butterfly_matches_the_oracle() {
    let d = TempDir::new().unwrap();
    let cfg = "schema_version = 1\n[model]\nname = \"harper\"\n[box]\nL = 16\n[butterfly]\nq_max = 5\n";
    let o = run(d.path(), &["butterfly"], cfg);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let s = summary(d.path());
    let oracle = s["certificates"].as_array().unwrap().iter().filter(|c| c["name"].as_str().unwrap().contains("Harper")).count();
    // phi(1) + ... + phi(5)
    assert_eq!(oracle, 1 + 1 + 2 + 2 + 4);
}

#[test]
fn blessed_reference_is_checked_on_rerun() {
    let d = TempDir::new().unwrap();
    let cfg = format!("schema_version = 1\n[box]\nL = 16\n[output]\ndir = \"out\"\nreference_dir = \"{}\"\n", d.path().join("ref").display());
    let cfg_path = d.path().join("run.toml");
    fs::write(&cfg_path, &cfg).unwrap();
    let go = |bless: bool| {
        let mut c = Command::new(env!("CARGO_BIN_EXE_bandframe"));
        c.arg("bands").arg("--config").arg(&cfg_path).arg("--out").arg(d.path().join("out"));
        if bless {
            c.arg("--bless");
        }
        c.output().unwrap()
    };
    assert_eq!(go(true).status.code(), Some(0));
    assert!(d.path().join("ref/qwz/bands.json").exists());
    assert_eq!(go(false).status.code(), Some(0));
    let s = summary(d.path());
    assert!(s["certificates"].as_array().unwrap().iter().any(|c| c["name"].as_str().unwrap().starts_with("regression")));
}

#[test]
fn compare_reports_dichotomy_loss() {
    let d = TempDir::new().unwrap();
    let o = run(d.path(), &["compare"], "schema_version = 1\n[box]\nL = 16\n[magnetic]\nflux = [[1, 16], [1, 8]]\n");
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let s = summary(d.path());
    assert_eq!(s["data"]["dichotomy_lost_at"].as_array().unwrap().len(), 1);
    let csv = fs::read_to_string(d.path().join("out/hausdorff.csv")).unwrap();
    assert_eq!(csv.lines().count(), 2);
}
