use std::path::Path;
use std::process::{Command, Output};

use mswi::scenarios::{self, ModelKind};
use mswi::{sgf, DataVolume, TimeAxis};

fn mswi(args: &[&str], cwd: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_mswi"))
        .args(args)
        .current_dir(cwd)
        .env_remove("MSWI_OUT")
        .output()
        .expect("binary runs")
}

fn code(o: &Output) -> i32 {
    o.status.code().expect("exit code")
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

fn write_model(dir: &Path, name: &str, kappa: f64) -> String {
    let geom = scenarios::paper_grid(0.5).unwrap();
    let mut m = scenarios::build_model(ModelKind::Homogeneous, geom).unwrap();
    m.kappa.iter_mut().for_each(|k| *k = kappa);
    let path = dir.join(name);
    sgf::write_sgf(&sgf::kappa_to_sgf(&m).unwrap(), &path).unwrap();
    path.to_string_lossy().into_owned()
}

#[test]
fn scenario_list_names_every_builtin() {
    let dir = tempfile::tempdir().unwrap();
    let o = mswi(&["scenario", "list"], dir.path());
    assert_eq!(code(&o), 0);
    let text = stdout(&o);
    for n in scenarios::builtin_names() {
        assert!(text.contains(n), "{n} missing from {text}");
    }
}

#[test]
fn verify_dots_passes_and_unknown_suite_is_usage_error() {
    let dir = tempfile::tempdir().unwrap();
    let o = mswi(&["verify", "dots"], dir.path());
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    assert_eq!(stdout(&o).matches("PASS").count(), 6);
    let o = mswi(&["verify", "everything"], dir.path());
    assert_eq!(code(&o), 2);
}

#[test]
fn missing_model_names_the_path() {
    let dir = tempfile::tempdir().unwrap();
    let o = mswi(&["simulate", "--scale", "0.5", "-m", "absent_model.sgf", "-o", "d.sgf"], dir.path());
    assert_eq!(code(&o), 2);
    assert!(stderr(&o).contains("absent_model.sgf"));
}

#[test]
fn bad_mode_lists_valid_modes() {
    let dir = tempfile::tempdir().unwrap();
    let o = mswi(&["invert", "-d", "d.sgf", "-m", "m.sgf", "--mode", "awi"], dir.path());
    assert_eq!(code(&o), 2);
    let err = stderr(&o);
    assert!(err.contains("fwi") && err.contains("mswi"), "{err}");
}

#[test]
fn unknown_config_key_is_named() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("bad.ini");
    std::fs::write(&cfg, "[penalty]\nalpha = 1e-4\nlambda = 3\n").unwrap();
    let o = mswi(&["scenario", "lens_mswi_fwi", "--config", cfg.to_str().unwrap()], dir.path());
    assert_eq!(code(&o), 2);
    assert!(stderr(&o).contains("lambda"), "{}", stderr(&o));
    let o = mswi(&["scenario", cfg.to_str().unwrap()], dir.path());
    assert_eq!(code(&o), 2);
}

#[test]
fn scenario_file_with_bad_stage_is_rejected() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("s.ini");
    std::fs::write(&cfg, "[scenario]\nname = x\nstages = a:fwi:nowhere:kappa:10:3\n").unwrap();
    let o = mswi(&["scenario", cfg.to_str().unwrap()], dir.path());
    assert_eq!(code(&o), 2, "{}", stderr(&o));
}

#[test]
fn filter_rejects_mismatched_time_axes() {
    let dir = tempfile::tempdir().unwrap();
    let a = DataVolume::zeros(2, 3, TimeAxis::new(40, 0.008, 0.0).unwrap());
    let b = DataVolume::zeros(2, 3, TimeAxis::new(41, 0.008, 0.0).unwrap());
    sgf::write_sgf(&sgf::data_to_sgf(&a).unwrap(), dir.path().join("a.sgf")).unwrap();
    sgf::write_sgf(&sgf::data_to_sgf(&b).unwrap(), dir.path().join("b.sgf")).unwrap();
    let o = mswi(&["filter", "-d", "a.sgf", "-p", "b.sgf", "-o", "u.sgf"], dir.path());
    assert_eq!(code(&o), 2, "{}", stderr(&o));
    assert!(!dir.path().join("u.sgf").exists());
}

#[test]
fn out_of_bounds_start_is_a_numerical_failure_with_hint() {
    let dir = tempfile::tempdir().unwrap();
    let m = write_model(dir.path(), "fast.sgf", 16.0);
    let d = DataVolume::zeros(20, 91, scenarios::paper_time());
    sgf::write_sgf(&sgf::data_to_sgf(&d).unwrap(), dir.path().join("d.sgf")).unwrap();
    let o = mswi(&["invert", "--scale", "0.5", "-d", "d.sgf", "-m", &m, "--out", "inv"], dir.path());
    assert_eq!(code(&o), 3, "{}", stderr(&o));
    assert!(stderr(&o).contains("parameterization = logistic"), "{}", stderr(&o));
}

#[test]
fn simulate_then_invert_own_data_stops_at_iteration_zero() {
    let dir = tempfile::tempdir().unwrap();
    let m = write_model(dir.path(), "h.sgf", 4.0);
    let o = mswi(&["simulate", "--scale", "0.5", "-m", &m, "-o", "d.sgf"], dir.path());
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    assert!(stdout(&o).contains("201 x 101"));
    let a = sgf::read_sgf(dir.path().join("d.sgf")).unwrap();
    let dims: Vec<usize> = a.axes.iter().map(|x| x.n).collect();
    assert_eq!(dims, vec![626, 91, 20]);

    let o = mswi(&["invert", "--scale", "0.5", "-d", "d.sgf", "-m", &m, "--out", "inv"], dir.path());
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    assert!(stdout(&o).starts_with("0 iterations"), "{}", stdout(&o));
    for f in ["model.sgf", "data.sgf", "iters.csv"] {
        assert!(dir.path().join("inv").join(f).exists(), "{f}");
    }
    let log = std::fs::read_to_string(dir.path().join("inv/iters.csv")).unwrap();
    assert_eq!(log.lines().count(), 2);
}
