use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use heatlens::off::to_off;
use heatlens_core::spaces::octahedron;
use serde_json::Value;

fn heatlens(args: &[&str], dir: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_heatlens"))
        .args(args)
        .current_dir(dir)
        .env_remove("HEATLENS_THREADS")
        .output()
        .unwrap()
}

fn write_config(dir: &Path, name: &str, body: &str) -> PathBuf {
    let path = dir.join(name);
    fs::write(&path, body).unwrap();
    path
}

fn run(suite: &str, cfg: &Path, dir: &Path) -> Output {
    heatlens(&[suite, "--config", cfg.to_str().unwrap()], dir)
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

const CIRCLE: &str = r#"{"space": {"variant": "circle", "lengths": [6.283185307179586]},
  "t_grid": [0.01, 0.03, 0.1], "output_dir": "out"}"#;

const WEIGHTED: &str = r#"{"space": {"variant": "weighted_circle", "lengths": [6.283185307179586],
  "phi_coefficients": {"constant": 0.0, "cos": [0.5], "sin": []}}, "output_dir": "out"}"#;

#[test]
fn help_and_version_exit_zero() {
    let dir = tempfile::tempdir().unwrap();
    assert_eq!(heatlens(&["--help"], dir.path()).status.code(), Some(0));
    assert_eq!(heatlens(&["--version"], dir.path()).status.code(), Some(0));
}

#[test]
fn usage_errors_exit_two() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    assert_eq!(heatlens(&["sideways", "--config", "x.json"], d).status.code(), Some(2));
    assert_eq!(heatlens(&["spectrum"], d).status.code(), Some(2));

    let o = run("spectrum", &d.join("missing.json"), d);
    assert_eq!(o.status.code(), Some(2));

    let cfg = write_config(d, "empty.json", r#"{"space": {"variant": "circle", "lengths": [1.0]}, "t_grid": []}"#);
    let o = run("spectrum", &cfg, d);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("t_grid"), "{}", stderr(&o));

    let cfg = write_config(d, "typo.json", r#"{"space": {"variant": "circle", "lengths": [1.0]}, "t_gird": [1.0]}"#);
    let o = run("spectrum", &cfg, d);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("t_gird"), "{}", stderr(&o));

    let cfg = write_config(d, "circle.json", CIRCLE);
    let o = heatlens(&["spectrum", "--config", cfg.to_str().unwrap(), "--t-grid", "0.1,-1"], d);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("t_grid[1]"), "{}", stderr(&o));
}

#[test]
fn thread_variable_is_validated() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), "circle.json", CIRCLE);
    let o = Command::new(env!("CARGO_BIN_EXE_heatlens"))
        .args(["spectrum", "--config", cfg.to_str().unwrap()])
        .current_dir(dir.path())
        .env("HEATLENS_THREADS", "zero")
        .output()
        .unwrap();
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("HEATLENS_THREADS"));

    let o = Command::new(env!("CARGO_BIN_EXE_heatlens"))
        .args(["spectrum", "--config", cfg.to_str().unwrap()])
        .current_dir(dir.path())
        .env("HEATLENS_THREADS", "2")
        .output()
        .unwrap();
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
}

#[test]
fn mesh_suites_without_hessians_exit_three() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    let (p, t) = octahedron();
    fs::write(d.join("oct.off"), to_off(&p, &t)).unwrap();
    let cfg = write_config(d, "mesh.json", r#"{"space": {"variant": "mesh", "mesh_path": "oct.off"}, "mode_count": 4}"#);
    for suite in ["ibp", "witten", "collapse"] {
        let o = run(suite, &cfg, d);
        assert_eq!(o.status.code(), Some(3), "{suite}: {}", stderr(&o));
    }
}

#[test]
fn spectrum_on_icosphere() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    let cfg = write_config(
        d,
        "ico.json",
        r#"{"space": {"variant": "icosphere", "level": 2}, "mode_count": 10, "t_grid": [0.5], "output_dir": "out"}"#,
    );
    let o = run("spectrum", &cfg, d);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let report: Value = serde_json::from_str(&fs::read_to_string(d.join("out/spectrum.json")).unwrap()).unwrap();
    let lambdas = report["report"]["lambdas"].as_array().unwrap();
    assert_eq!(lambdas.len(), 10);
    // l = 1 triplet near 2 on the unit sphere.
    for l in &lambdas[1..4] {
        assert!((l.as_f64().unwrap() - 2.0).abs() < 0.1, "{l}");
    }
}

#[test]
fn collapse_flags_weighted_circle() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    let cfg = write_config(d, "w.json", WEIGHTED);
    let o = run("collapse", &cfg, d);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let report: Value = serde_json::from_str(&fs::read_to_string(d.join("out/collapse.json")).unwrap()).unwrap();
    assert_eq!(report["report"]["verdict"], "collapsed-or-weighted");
    assert_eq!(report["report"]["condition_1a"], false);
}

#[test]
fn converge_on_circle_is_monotone() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    let cfg = write_config(d, "c.json", CIRCLE);
    let o = run("converge", &cfg, d);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let csv = fs::read_to_string(d.join("out/converge.csv")).unwrap();
    let mut lines = csv.lines();
    assert!(lines.next().unwrap().starts_with("# heatlens "));
    assert_eq!(lines.next().unwrap(), "quantity,p,t,value,slope,out_of_regime");
    let mut ball: Vec<(f64, f64)> = lines
        .map(|l| l.split(',').collect::<Vec<_>>())
        .filter(|c| c[0] == "ball" && c[1] == "2.0")
        .map(|c| (c[2].parse().unwrap(), c[3].parse().unwrap()))
        .collect();
    assert_eq!(ball.len(), 3);
    ball.sort_by(|a, b| b.0.total_cmp(&a.0));
    // On the flat circle every value sits at rounding level; growth is
    // judged against 10⁻¹² c₁ 𝔪(X) as the suite does.
    let c1 = 2.0 * (2.0 * std::f64::consts::PI).sqrt() / (16.0 * std::f64::consts::PI);
    let floor = 1e-12 * c1 * 2.0 * std::f64::consts::PI;
    assert!(ball.windows(2).all(|w| w[1].1 <= w[0].1 + floor), "{ball:?}");
    assert!(ball.iter().all(|p| p.1 < 1e-10), "{ball:?}");
}

#[test]
fn outputs_carry_provenance_and_are_deterministic() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    let cfg = write_config(d, "c.json", CIRCLE);
    let mut first = Vec::new();
    for round in 0..2 {
        for suite in ["spectrum", "metric", "ibp", "witten"] {
            let o = run(suite, &cfg, d);
            assert_eq!(o.status.code(), Some(0), "{suite}: {}", stderr(&o));
        }
        let mut files: Vec<PathBuf> = fs::read_dir(d.join("out")).unwrap().map(|e| e.unwrap().path()).collect();
        files.sort();
        let contents: Vec<(PathBuf, Vec<u8>)> = files.iter().map(|p| (p.clone(), fs::read(p).unwrap())).collect();
        if round == 0 {
            first = contents;
        } else {
            assert_eq!(first.len(), contents.len());
            for ((p, a), (_, b)) in first.iter().zip(&contents) {
                assert!(a == b, "{} differs between runs", p.display());
            }
        }
    }
    let resolved: Value = serde_json::from_slice(&fs::read(d.join("out/config.resolved.json")).unwrap()).unwrap();
    let hash = {
        let cfg: heatlens::config::ExperimentConfig = serde_json::from_value(resolved).unwrap();
        cfg.hash()
    };
    for (path, bytes) in &first {
        let name = path.file_name().unwrap().to_str().unwrap();
        let text = String::from_utf8_lossy(bytes);
        if name.ends_with(".csv") {
            let head = text.lines().next().unwrap();
            assert!(head.starts_with("# heatlens ") && head.ends_with(&hash), "{name}: {head}");
        } else if name.ends_with(".json") && name != "config.resolved.json" {
            let v: Value = serde_json::from_str(&text).unwrap();
            assert_eq!(v["config_hash"], hash.as_str(), "{name}");
            assert_eq!(v["heatlens_version"], env!("CARGO_PKG_VERSION"), "{name}");
        }
    }
}

#[test]
fn overrides_replace_config_fields() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    let cfg = write_config(d, "c.json", CIRCLE);
    let o = heatlens(
        &["spectrum", "--config", cfg.to_str().unwrap(), "--modes", "9", "--t-grid", "0.5,1", "--out", "elsewhere"],
        d,
    );
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let v: Value = serde_json::from_str(&fs::read_to_string(d.join("elsewhere/config.resolved.json")).unwrap()).unwrap();
    assert_eq!(v["mode_count"], 9);
    assert_eq!(v["t_grid"], serde_json::json!([0.5, 1.0]));
}

#[test]
fn failed_assertions_exit_one() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    let cfg = write_config(
        d,
        "strict.json",
        r#"{"space": {"variant": "circle", "lengths": [6.283185307179586]}, "t_grid": [0.1],
  "ibp_functions": 3, "tolerances": {"ibp": 1e-300}, "output_dir": "out"}"#,
    );
    let o = run("ibp", &cfg, d);
    assert_eq!(o.status.code(), Some(1), "{}", stderr(&o));
    assert!(stderr(&o).contains("assertion failed"));
    let v: Value = serde_json::from_str(&fs::read_to_string(d.join("out/ibp.json")).unwrap()).unwrap();
    assert_eq!(v["passed"], false);
}
