use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use ninn_core::cli::Config;

const BASE: &str = r#"
seed = 21

[system]
kind = "lorenz63"

[data]
n_samples = 200
pairs_per_trajectory = 50
n_runs = 2

[[network]]
label = "tiny"
hidden_layers = 5
width = 4

[training]
max_iters = 15

[assimilation]
methods = ["ninn2-lookahead", "free-run", "direct-obs"]
mu = [5.0]
lambda_decay = [1.0]
"#;

fn ninn(args: &[&str], dir: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_ninn"))
        .args(args)
        .current_dir(dir)
        .output()
        .expect("binary runs")
}

fn write_config(dir: &Path, text: &str) {
    fs::write(dir.join("c.toml"), text).unwrap();
}

fn step(dir: &Path, cmd: &str) -> Output {
    ninn(&[cmd, "--config", "c.toml", "--out", "out"], dir)
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

#[test]
fn help_and_version_exit_zero() {
    let dir = tempfile::tempdir().unwrap();
    assert_eq!(ninn(&["--help"], dir.path()).status.code(), Some(0));
    let v = ninn(&["--version"], dir.path());
    assert_eq!(v.status.code(), Some(0));
    assert!(String::from_utf8_lossy(&v.stdout).contains(env!("CARGO_PKG_VERSION")));
}

#[test]
fn bad_arguments_exit_two() {
    let dir = tempfile::tempdir().unwrap();
    assert_eq!(ninn(&["frobnicate"], dir.path()).status.code(), Some(2));
    assert_eq!(
        ninn(&["train", "--out", "x"], dir.path()).status.code(),
        Some(2)
    );
    let missing = ninn(
        &["gen-data", "--config", "nope.toml", "--out", "out"],
        dir.path(),
    );
    assert_eq!(missing.status.code(), Some(2));
}

#[test]
fn missing_required_field_is_named() {
    let dir = tempfile::tempdir().unwrap();
    write_config(dir.path(), &BASE.replace("seed = 21", ""));
    let o = step(dir.path(), "gen-data");
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("seed"), "{}", stderr(&o));
}

#[test]
fn invalid_value_names_its_field() {
    let dir = tempfile::tempdir().unwrap();
    write_config(dir.path(), &BASE.replace("width = 4", "width = 0"));
    let o = step(dir.path(), "train");
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("network[0].width"), "{}", stderr(&o));
}

#[test]
fn schedule_mismatch_exits_four() {
    let dir = tempfile::tempdir().unwrap();
    write_config(dir.path(), &format!("{BASE}substeps = 7\n"));
    let o = step(dir.path(), "assimilate");
    assert_eq!(o.status.code(), Some(4), "{}", stderr(&o));
}

#[test]
fn missing_inputs_exit_three() {
    let dir = tempfile::tempdir().unwrap();
    write_config(dir.path(), BASE);
    assert_eq!(step(dir.path(), "train").status.code(), Some(3));
}

#[test]
fn gen_data_is_seed_deterministic() {
    let dir = tempfile::tempdir().unwrap();
    write_config(dir.path(), BASE);
    let run = |out: &str, seed: &str| {
        let o = ninn(
            &[
                "gen-data", "--config", "c.toml", "--out", out, "--seed", seed,
            ],
            dir.path(),
        );
        assert!(o.status.success(), "{}", stderr(&o));
        fs::read(dir.path().join(out).join("data/dataset.csv")).unwrap()
    };
    let a = run("a", "4");
    assert_eq!(a, run("b", "4"));
    assert_ne!(a, run("c", "5"));
}

#[test]
fn pipeline_writes_table_and_flags_missing_runs() {
    let dir = tempfile::tempdir().unwrap();
    write_config(dir.path(), BASE);
    for cmd in ["gen-data", "train", "assimilate", "report"] {
        let o = step(dir.path(), cmd);
        assert!(o.status.success(), "{cmd}: {}", stderr(&o));
        assert!(dir
            .path()
            .join(format!("out/manifest-{cmd}.json"))
            .is_file());
    }
    let out = dir.path().join("out");
    assert!(out.join("model/tiny.ninn").is_file());
    let table = fs::read_to_string(out.join("rmse_table.csv")).unwrap();
    let mut lines = table.lines();
    assert_eq!(
        lines.next(),
        Some("system,net_label,method,obs_pattern,mu,lambda_decay,rmse")
    );
    let rows: Vec<&str> = lines.collect();
    // nudging is not listed; one cell per remaining method.
    assert_eq!(rows.len(), 3, "{table}");

    let cell = fs::read_dir(out.join("assim/tiny"))
        .unwrap()
        .map(|e| e.unwrap().path())
        .find(|p| {
            p.file_name()
                .unwrap()
                .to_str()
                .unwrap()
                .starts_with("free-run")
        })
        .unwrap();
    fs::remove_file(cell.join("run_001.csv")).unwrap();
    let o = step(dir.path(), "report");
    assert_eq!(o.status.code(), Some(3));
    let table = fs::read_to_string(out.join("rmse_table.csv")).unwrap();
    assert!(
        table
            .lines()
            .any(|l| l.contains("free-run") && l.ends_with("incomplete")),
        "{table}"
    );
}

#[test]
fn shipped_configs_parse() {
    let dir = Path::new(env!("CARGO_MANIFEST_DIR")).join("../../configs");
    let mut n = 0;
    for entry in std::fs::read_dir(&dir).unwrap() {
        let path = entry.unwrap().path();
        if path.extension().is_some_and(|e| e == "toml") {
            let (cfg, _) =
                Config::load(&path).unwrap_or_else(|e| panic!("{}: {e}", path.display()));
            assert!(!cfg.network.is_empty(), "{}", path.display());
            n += 1;
        }
    }
    assert!(n >= 3);
}
