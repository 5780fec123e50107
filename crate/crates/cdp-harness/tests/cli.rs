//! End-to-end CLI checks: exit codes, output files, determinism.

use std::fs;
use std::path::Path;
use std::process::Command;

fn cdp() -> Command {
    Command::new(env!("CARGO_BIN_EXE_cdp"))
}

fn write_config(dir: &Path, eps: f64) -> std::path::PathBuf {
    let path = dir.join("config.json");
    fs::write(
        &path,
        format!(
            r#"{{
                "manifold": {{"kind": "sphere", "dim_param": 3}},
                "n_samples": 40,
                "vmf_std": 0.5,
                "epsilon_total": {eps},
                "repetitions": 2,
                "base_seed": 31
            }}"#
        ),
    )
    .unwrap();
    path
}

#[test]
fn config_error_exits_2() {
    let dir = tempfile::tempdir().unwrap();
    let bad = dir.path().join("bad.json");
    fs::write(&bad, r#"{"manifold": {"kind": "sphere", "dim_param": 3}}"#).unwrap();
    let out = cdp()
        .args(["experiment", "synthetic", "--config"])
        .arg(&bad)
        .arg("--out")
        .arg(dir.path().join("out"))
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(2), "{out:?}");
}

#[test]
fn missing_config_exits_4() {
    let dir = tempfile::tempdir().unwrap();
    let out = cdp()
        .args(["kde", "--config"])
        .arg(dir.path().join("nope.json"))
        .arg("--out")
        .arg(dir.path().join("out"))
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(4), "{out:?}");
}

#[test]
fn unknown_sweep_field_exits_2() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), 0.5);
    let out = cdp()
        .args(["experiment", "synthetic", "--config"])
        .arg(&cfg)
        .arg("--out")
        .arg(dir.path().join("out"))
        .args(["--sweep", "bogus=1,2"])
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(2), "{out:?}");
}

#[test]
fn sweep_experiment_report_pipeline() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), 0.5);
    let out_dir = dir.path().join("out");
    let out = cdp()
        .args(["experiment", "synthetic", "--config"])
        .arg(&cfg)
        .arg("--out")
        .arg(&out_dir)
        .args(["--sweep", "eps_total=0.5,1.0,2.0", "--workers", "2"])
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(0), "{out:?}");
    let trials = out_dir.join("trials.csv");
    let text = fs::read_to_string(&trials).unwrap();
    // 3 eps values x 2 reps x 3 mechanisms + header
    assert_eq!(text.lines().count(), 1 + 18);

    let out = cdp()
        .args(["report", "--records"])
        .arg(&trials)
        .args(["--x", "eps_total"])
        .arg("--out")
        .arg(&out_dir)
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(0), "{out:?}");
    let agg = fs::read_to_string(out_dir.join("aggregate.csv")).unwrap();
    assert!(agg.starts_with("mechanism,eps_total,mean_error,std_error,count,failed"));
    // 3 mechanisms x 3 eps values
    assert_eq!(agg.lines().count(), 1 + 9);
    let svg = fs::read_to_string(out_dir.join("sweep.svg")).unwrap();
    assert!(svg.contains("<svg"));
    assert_eq!(svg.matches("<polyline").count(), 3);
}

#[test]
fn zero_noise_experiment_all_zero() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), 0.5);
    let out_dir = dir.path().join("out");
    let out = cdp()
        .args(["privatize-mean", "--config"])
        .arg(&cfg)
        .arg("--out")
        .arg(&out_dir)
        .arg("--zero-noise")
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(0), "{out:?}");
    let text = fs::read_to_string(out_dir.join("trials.csv")).unwrap();
    for line in text.lines().skip(1) {
        let cols: Vec<&str> = line.split(',').collect();
        assert_eq!(cols[11], "0");
    }
}

#[test]
fn rerun_is_bit_identical_modulo_wall_time() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), 0.7);
    let run = |out_dir: &Path| -> Vec<String> {
        let out = cdp()
            .args(["experiment", "synthetic", "--config"])
            .arg(&cfg)
            .arg("--out")
            .arg(out_dir)
            .output()
            .unwrap();
        assert_eq!(out.status.code(), Some(0), "{out:?}");
        fs::read_to_string(out_dir.join("trials.csv"))
            .unwrap()
            .lines()
            .map(|l| l.rsplit_once(',').unwrap().0.to_string())
            .collect()
    };
    let a = run(&dir.path().join("a"));
    let b = run(&dir.path().join("b"));
    assert_eq!(a, b);
}

#[test]
fn kde_and_conformal_dumps() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), 0.5);
    let out_dir = dir.path().join("out");
    let out = cdp()
        .args(["kde", "--config"])
        .arg(&cfg)
        .arg("--out")
        .arg(&out_dir)
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(0), "{out:?}");
    let field = fs::read_to_string(out_dir.join("density_field.csv")).unwrap();
    assert!(field.starts_with("node_index,value,weight,sanitized"));
    assert_eq!(field.lines().count(), 1 + 40);

    let out = cdp()
        .args(["conformal", "--config"])
        .arg(&cfg)
        .arg("--out")
        .arg(&out_dir)
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(0), "{out:?}");
    let sp = fs::read_to_string(out_dir.join("sigma_phi.csv")).unwrap();
    assert!(sp.starts_with("node_index,sigma,phi"));
    let edges = fs::read_to_string(out_dir.join("edges.csv")).unwrap();
    assert!(edges.starts_with("i,j,rho_g,weight,ell_star"));
}

#[test]
fn image_experiment_from_tensor_files() {
    use cdp_harness::spd_image::{synthetic_gradient_image, write_tensor};
    let dir = tempfile::tempdir().unwrap();
    let img_dir = dir.path().join("imgs");
    fs::create_dir_all(&img_dir).unwrap();
    for seed in 0..12u64 {
        let img = synthetic_gradient_image(12, 12, seed);
        fs::write(img_dir.join(format!("img_{seed:03}.bin")), write_tensor(&img)).unwrap();
    }
    let cfg_path = dir.path().join("spd.json");
    fs::write(
        &cfg_path,
        r#"{
            "manifold": {"kind": "spd", "dim_param": 9},
            "n_samples": 12,
            "epsilon_total": 1.0,
            "repetitions": 1,
            "base_seed": 3,
            "mechanisms": ["riemannian_laplace", "tangent_gaussian"]
        }"#,
    )
    .unwrap();
    let out_dir = dir.path().join("out");
    let out = cdp()
        .args(["experiment", "images", "--config"])
        .arg(&cfg_path)
        .arg("--images")
        .arg(&img_dir)
        .arg("--out")
        .arg(&out_dir)
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(0), "{out:?}");
    let text = fs::read_to_string(out_dir.join("trials.csv")).unwrap();
    assert_eq!(text.lines().count(), 1 + 2);
    for line in text.lines().skip(1) {
        let cols: Vec<&str> = line.split(',').collect();
        let err: f64 = cols[11].parse().unwrap();
        assert!(err.is_finite() && err >= 0.0);
    }
}
