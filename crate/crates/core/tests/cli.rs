use feshrg::cli::commands::cmd_verify;
use feshrg::cli::config::RunConfig;
use feshrg::cli::{exit_code, main_with_args, EXIT_USAGE};
use feshrg::Error;
use std::path::Path;

const BASE: &str = r#"
seed = 3
[model]
mode = "matrix"
g = { re = 0.05 }
[grid]
J = 1
rho_grid = 0.25
[oracle]
n_max = 2
enabled = true
"#;

fn write(dir: &Path, name: &str, text: &str) -> String {
    let p = dir.join(name);
    std::fs::write(&p, text).unwrap();
    p.to_string_lossy().into_owned()
}

fn run(args: &[&str]) -> i32 {
    let mut v = vec!["feshrg"];
    v.extend_from_slice(args);
    main_with_args(v)
}

#[test]
fn config_parses_and_defaults() {
    let cfg = RunConfig::from_toml(BASE).unwrap();
    let rg = cfg.rg_config();
    assert_eq!(rg.rho, 0.25);
    assert_eq!(rg.eps0, 0.25 / 8.0);
    assert_eq!(cfg.grid().unwrap().n_modes(), 2);
}

#[test]
fn rho_mismatch_names_the_field() {
    let text = format!("{BASE}\n[rg]\nrho = 0.2\n");
    match RunConfig::from_toml(&text) {
        Err(Error::Config(msg)) => assert!(msg.starts_with("rg.rho"), "{msg}"),
        other => panic!("expected a config error, got {other:?}"),
    }
}

#[test]
fn unknown_keys_are_rejected() {
    let text = BASE.replace("seed = 3", "seed = 3\nbogus = 1");
    assert!(matches!(RunConfig::from_toml(&text), Err(Error::Config(_))));
}

#[test]
fn exit_codes() {
    assert_eq!(exit_code(&Error::Config("x".into())), 64);
    assert_eq!(exit_code(&Error::PairInvalid("x".into())), 10);
    assert_eq!(exit_code(&Error::BallViolation("x".into())), 11);
    assert_eq!(exit_code(&Error::MaxItersExceeded(3)), 13);
    assert_eq!(exit_code(&Error::Linalg("x".into())), 2);
    assert_eq!(run(&["frobnicate"]), EXIT_USAGE);
    assert_eq!(run(&["run"]), EXIT_USAGE);
    assert_eq!(run(&["verify", "--suite", ""]), EXIT_USAGE);
    assert_eq!(run(&["verify", "--suite", "nonsense"]), EXIT_USAGE);
}

#[test]
fn run_writes_artifacts() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write(dir.path(), "run.toml", BASE);
    let out = dir.path().join("out");
    assert_eq!(run(&["run", "--config", &cfg, "--out", out.to_str().unwrap()]), 0);
    let json: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(out.join("run.json")).unwrap()).unwrap();
    assert!(json["oracle"]["abs_diff"].as_f64().unwrap() < 1e-6);
    assert!(json["checks"].as_array().unwrap().iter().all(|c| c["pass"] == true));
    let csv = std::fs::read_to_string(out.join("trace.csv")).unwrap();
    assert!(csv.starts_with("level,delta1,delta2,delta3,z_re,z_im,ratio"));
    assert!(out.join("checkpoints/level_000.ckpt").exists());
}

#[test]
fn decay_refuses_matrix_mode() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write(dir.path(), "run.toml", BASE);
    assert_eq!(run(&["decay", "--config", &cfg, "--out", dir.path().to_str().unwrap()]), EXIT_USAGE);
}

#[test]
fn scan_without_section_is_a_config_error() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write(dir.path(), "run.toml", BASE);
    assert_eq!(run(&["scan", "--config", &cfg, "--out", dir.path().to_str().unwrap()]), EXIT_USAGE);
}

#[test]
fn scan_on_theta_circle_is_constant() {
    let dir = tempfile::tempdir().unwrap();
    let text = BASE.replace("enabled = true", "enabled = false") + "\n[scan]\nparam = \"theta\"\nradius = 0.05\n";
    let cfg = write(dir.path(), "scan.toml", &text);
    let out = dir.path().join("out");
    assert_eq!(run(&["scan", "--config", &cfg, "--out", out.to_str().unwrap(), "--jobs", "2"]), 0);
    let json: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(out.join("scan.json")).unwrap()).unwrap();
    assert!(json["constancy"].as_f64().unwrap() < 1e-8);
    let csv = std::fs::read_to_string(out.join("scan.csv")).unwrap();
    assert_eq!(csv.lines().count(), 9);
}

#[test]
fn verify_rg_suite_and_injected_failure() {
    let rep = cmd_verify("rg", 0).unwrap();
    assert!(rep.pass, "{:?}", rep.checks);
    std::env::set_var("FESHRG_INJECT_FAILURE", "rg.e_rho_inverse");
    let bad = cmd_verify("rg", 0).unwrap();
    std::env::remove_var("FESHRG_INJECT_FAILURE");
    assert!(!bad.pass);
    assert_eq!(bad.checks.iter().filter(|c| !c.pass).count(), 1);
}

#[test]
fn shipped_configs_parse() {
    let dir = Path::new(env!("CARGO_MANIFEST_DIR")).join("configs");
    let mut n = 0;
    for entry in std::fs::read_dir(dir).unwrap() {
        let p = entry.unwrap().path();
        if p.extension().is_some_and(|e| e == "toml") {
            RunConfig::load(&p).unwrap_or_else(|e| panic!("{}: {e}", p.display()));
            n += 1;
        }
    }
    assert!(n >= 3);
}
