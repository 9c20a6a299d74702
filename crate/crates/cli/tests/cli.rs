use std::path::{Path, PathBuf};
use std::process::{Command, Output};

fn data(name: &str) -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../data").join(name)
}

fn voltplace(args: &[&str], out: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_voltplace"))
        .args(args)
        .arg("--out")
        .arg(out)
        .env_remove("VOLTPLACE_OUT")
        .output()
        .unwrap()
}

fn small_case10ba() -> Vec<String> {
    let case = data("case10ba.m");
    [
        "--case",
        case.to_str().unwrap(),
        "--loads-scale",
        "0.6",
        "--n-initial",
        "300",
        "--n-selection",
        "200",
        "--n-validate",
        "300",
    ]
    .iter()
    .map(|s| s.to_string())
    .collect()
}

fn run(cmd: &str, extra: &[&str], out: &Path) -> Output {
    let mut args = vec![cmd.to_string()];
    args.extend(small_case10ba());
    args.extend(extra.iter().map(|s| s.to_string()));
    let refs: Vec<&str> = args.iter().map(String::as_str).collect();
    voltplace(&refs, out)
}

fn json(path: &Path) -> serde_json::Value {
    serde_json::from_str(&std::fs::read_to_string(path).unwrap()).unwrap()
}

#[test]
fn place_reports_bus_10_and_reruns_identically() {
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    let out = run("place", &["--formulation", "milp"], a.path());
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    assert!(run("place", &["--formulation", "milp"], b.path()).status.success());
    let sa = std::fs::read(a.path().join("solution.json")).unwrap();
    let sb = std::fs::read(b.path().join("solution.json")).unwrap();
    assert_eq!(sa, sb);
    let doc = json(&a.path().join("solution.json"));
    assert_eq!(doc["data"]["sensors"], serde_json::json!([10]));
    assert_eq!(doc["data"]["thresholds"][0]["sensors"][0]["lower"], 0.9);
    assert_eq!(doc["study"]["loads_scale"], 0.6);
    assert_eq!(doc["input_hash"].as_str().unwrap().len(), 64);
    for f in ["samples/nominal_train.csv", "samples/nominal_train.json", "cla/nominal.json"] {
        assert!(a.path().join(f).exists(), "{f}");
    }
}

#[test]
fn stages_resume_and_invalidate() {
    let dir = tempfile::tempdir().unwrap();
    assert!(run("place", &[], dir.path()).status.success());
    let sol = dir.path().join("solution.json");
    let cla = dir.path().join("cla/nominal.json");
    let t_sol = std::fs::metadata(&sol).unwrap().modified().unwrap();
    let t_cla = std::fs::metadata(&cla).unwrap().modified().unwrap();
    std::thread::sleep(std::time::Duration::from_millis(20));
    assert!(run("place", &[], dir.path()).status.success());
    assert_eq!(std::fs::metadata(&sol).unwrap().modified().unwrap(), t_sol);
    // a placement option changes the placement key only
    assert!(run("place", &["--delta", "0.05"], dir.path()).status.success());
    assert_ne!(std::fs::metadata(&sol).unwrap().modified().unwrap(), t_sol);
    assert_eq!(std::fs::metadata(&cla).unwrap().modified().unwrap(), t_cla);
    assert_eq!(json(&sol)["study"]["placement"]["delta"], 0.05);
}

#[test]
fn export_only_writes_the_model_without_solving() {
    let dir = tempfile::tempdir().unwrap();
    let out = run("place", &["--formulation", "bilinear", "--export-only"], dir.path());
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    assert!(!dir.path().join("solution.json").exists());
    let model = json(&dir.path().join("model_bilinear.json"));
    assert_eq!(model["format"], "lpcore.model_json");
    let stats = json(&dir.path().join("model_bilinear.stats.json"));
    let (b, r) = (stats["data"]["b"].as_u64().unwrap(), stats["data"]["r"].as_u64().unwrap());
    assert_eq!(stats["data"]["variables"].as_u64().unwrap(), 3 * b * r + 2 * b);
}

#[test]
fn export_model_writes_mps() {
    let dir = tempfile::tempdir().unwrap();
    let out = run("export-model", &["--mps"], dir.path());
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let text = std::fs::read_to_string(dir.path().join("model_milp.mps")).unwrap();
    assert!(text.lines().find(|l| !l.starts_with('*')).unwrap().starts_with("NAME"));
    assert!(text.trim_end().ends_with("ENDATA"));
}

#[test]
fn validate_and_agd_write_reports() {
    let dir = tempfile::tempdir().unwrap();
    let out = run("validate", &[], dir.path());
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let rep = json(&dir.path().join("validation.json"));
    assert_eq!(rep["data"]["n_samples"], 300);
    assert_eq!(rep["data"]["n_fn"], 0);
    let table = std::fs::read_to_string(dir.path().join("validation.txt")).unwrap();
    assert!(table.starts_with("# input_hash: "));
    assert!(table.contains("false negatives %"));
    let hist = std::fs::read_to_string(dir.path().join("agd_history.csv")).unwrap();
    assert!(hist.starts_with("config,k,fp,fn,lower_10,upper_10"));
    // validating a saved solution file
    let sol = dir.path().join("agd_solution.json");
    let again = run("validate", &["--solution", sol.to_str().unwrap()], dir.path());
    assert!(again.status.success(), "{}", String::from_utf8_lossy(&again.stderr));
}

#[test]
fn exit_codes() {
    let dir = tempfile::tempdir().unwrap();
    assert_eq!(voltplace(&["place", "--no-such-flag"], dir.path()).status.code(), Some(2));
    assert_eq!(voltplace(&["place"], dir.path()).status.code(), Some(1));
    let missing = voltplace(&["place", "--case", "/nonexistent/case.m"], dir.path());
    assert_eq!(missing.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&missing.stderr).contains("loading study"));
    let cfg = dir.path().join("bad.toml");
    std::fs::write(&cfg, "case = \"x.m\"\n[placement]\ndelta = 0.02\nbogus = 1\n").unwrap();
    let bad = voltplace(&["place", "--config", cfg.to_str().unwrap()], dir.path());
    assert_eq!(bad.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&bad.stderr).contains("bogus"));
}

#[test]
fn config_file_paths_are_relative_to_the_file() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("study.toml");
    std::fs::copy(data("case10ba.m"), dir.path().join("case10ba.m")).unwrap();
    std::fs::write(
        &cfg,
        "case = \"case10ba.m\"\nloads_scale = 0.6\n[sampling]\nn_initial = 200\nn_selection = 0\nn_validate = 50\n",
    )
    .unwrap();
    let out = voltplace(&["sample", "--config", cfg.to_str().unwrap()], dir.path());
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    assert!(dir.path().join("samples/nominal_train.csv").exists());
    assert!(!dir.path().join("samples/nominal_select.csv").exists());
}

#[test]
fn output_directory_from_environment() {
    let dir = tempfile::tempdir().unwrap();
    let mut args = vec!["import".to_string()];
    args.extend(small_case10ba());
    let out = Command::new(env!("CARGO_BIN_EXE_voltplace"))
        .args(&args)
        .env("VOLTPLACE_OUT", dir.path())
        .output()
        .unwrap();
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let text = std::fs::read_to_string(dir.path().join("case.json")).unwrap();
    let study = voltplace::netmodel::load_native(&text).unwrap();
    assert_eq!(study.network.buses.len(), 10);
}
