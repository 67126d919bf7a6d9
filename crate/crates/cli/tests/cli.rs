use std::path::Path;
use std::process::Command;

use tomo_cli::*;

fn tomo(args: &[&str], cwd: &Path) -> (i32, String, String) {
    let out = Command::new(env!("CARGO_BIN_EXE_tomo"))
        .args(args)
        .current_dir(cwd)
        .output()
        .unwrap();
    (
        out.status.code().unwrap_or(-1),
        String::from_utf8_lossy(&out.stdout).into_owned(),
        String::from_utf8_lossy(&out.stderr).into_owned(),
    )
}

fn config(dir: &Path, algorithm: Algorithm) -> ExperimentConfig {
    ExperimentConfig {
        algorithm,
        output_dir: dir.to_path_buf(),
        ..Default::default()
    }
}

#[test]
fn sirt_pipeline_emits_image_and_metrics() {
    let dir = tempfile::tempdir().unwrap();
    let out = run_pipeline(&config(dir.path(), Algorithm::Sirt)).unwrap();
    assert!(out.report.rme.is_some() && out.report.rdc.is_some());
    assert!(out.report.rme.unwrap() < 0.2);
    for f in ["recon.img.json", "recon.img.bin", "recon.png", "manifest.json", "metrics.csv"] {
        assert!(dir.path().join(f).is_file(), "{f}");
    }
    let csv = std::fs::read_to_string(dir.path().join("metrics.csv")).unwrap();
    let lines: Vec<&str> = csv.lines().collect();
    assert_eq!(lines[0], tomo_core::MetricReport::CSV_HEADER);
    let fields: Vec<&str> = lines[1].split(',').collect();
    assert_eq!(fields.len(), 8);
    assert_eq!(&fields[..2], ["phantom64", "sirt"]);
    assert!(!fields[3].is_empty() && !fields[5].is_empty());
    assert_eq!(out.image.width(), 64);
}

#[test]
fn missing_net_is_a_config_error() {
    let dir = tempfile::tempdir().unwrap();
    for alg in [Algorithm::Mipro, Algorithm::Integrated] {
        let err = run_pipeline(&config(dir.path(), alg)).unwrap_err();
        assert_eq!(err.exit_code(), 2);
    }
    let (code, _, err) = tomo(&["reconstruct", "--algorithm", "mipro"], dir.path());
    assert_eq!(code, 2, "{err}");
    let mut cfg = config(dir.path(), Algorithm::Mipro);
    cfg.net_path = Some(dir.path().join("missing.edgenet.json"));
    assert_eq!(run_pipeline(&cfg).unwrap_err().exit_code(), 2);
}

#[test]
fn identical_configs_give_identical_manifests() {
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    let mut ca = config(a.path(), Algorithm::Cshm);
    ca.seed = 5;
    let cb = ExperimentConfig {
        output_dir: b.path().to_path_buf(),
        ..ca.clone()
    };
    let ma = run_pipeline(&ca).unwrap().manifest;
    let mb = run_pipeline(&cb).unwrap().manifest;
    assert_eq!(ma.artifacts, mb.artifacts);
    assert_eq!(ma.metrics, mb.metrics);
    let other = ExperimentConfig {
        seed: 6,
        ..cb
    };
    assert_ne!(run_pipeline(&other).unwrap().manifest.artifacts, ma.artifacts);
}

#[test]
fn retraining_gives_an_identical_net_file() {
    let dir = tempfile::tempdir().unwrap();
    let job = TrainJob::default();
    let (p1, p2) = (dir.path().join("a.edgenet.json"), dir.path().join("b.edgenet.json"));
    let (net, report) = train_command(&job, &p1).unwrap();
    train_command(&job, &p2).unwrap();
    assert_eq!(std::fs::read(&p1).unwrap(), std::fs::read(&p2).unwrap());
    assert!(report.holdout_rmse <= 0.05);
    assert!(net.max_output().is_some());
    let back = edge_net::EdgeNet::load(&p1).unwrap();
    for k in 0..200 {
        let x: Vec<f64> = (0..9).map(|i| ((k * 37 + i * 11) % 256) as f64).collect();
        assert!((net.forward(&x) - back.forward(&x)).abs() <= 1e-12);
    }
    assert_eq!(back.max_output(), net.max_output());
}

#[test]
fn binary_subcommands_and_exit_codes() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    let (code, _, err) = tomo(&["phantom", "--side", "32", "--out", "ph", "--png", "ph.png"], d);
    assert_eq!(code, 0, "{err}");
    let (code, _, err) = tomo(
        &["project", "--image", "ph", "--angles", "10", "--dose", "1e4", "--out", "sino"],
        d,
    );
    assert_eq!(code, 0, "{err}");
    // image dataset with a flag override and a key override
    let (code, out, err) = tomo(
        &[
            "reconstruct",
            "--set",
            r#"dataset={"kind":"image","path":"ph"}"#,
            "--set",
            "sirt_iters=50",
            "--angles",
            "8",
            "--output-dir",
            "r1",
        ],
        d,
    );
    assert_eq!(code, 0, "{err}");
    assert!(out.contains("ph,sirt,angles=8"));
    // measured sinogram without ground truth: RME column stays empty
    let (code, out, err) = tomo(
        &[
            "reconstruct",
            "--set",
            r#"dataset={"kind":"sinogram","path":"sino","side":32}"#,
            "--set",
            "geometry.angles=5",
            "--algorithm",
            "cshm",
            "--output-dir",
            "r2",
        ],
        d,
    );
    assert_eq!(code, 0, "{err}");
    assert!(out.lines().nth(1).unwrap().contains(",cshm,") && out.contains(",,"));
    // solver limit: incumbent written, exit 3
    let (code, _, _) = tomo(
        &["reconstruct", "--algorithm", "cs", "--set", "cshm.max_iters=3", "--output-dir", "r3"],
        d,
    );
    assert_eq!(code, 3);
    assert!(d.join("r3/recon.img.bin").is_file());
    // replay from a manifest
    let (code, _, err) = tomo(&["reconstruct", "--config", "r1/manifest.json", "--output-dir", "r4"], d);
    assert_eq!(code, 0, "{err}");
    let read = |p: &str| -> serde_json::Value {
        serde_json::from_str(&std::fs::read_to_string(d.join(p)).unwrap()).unwrap()
    };
    assert_eq!(read("r1/manifest.json")["artifacts"], read("r4/manifest.json")["artifacts"]);
    let (code, out, _) = tomo(&["metrics", "--recon", "r1/recon", "--truth", "ph"], d);
    assert_eq!(code, 0);
    assert_eq!(out.lines().count(), 2);
    let (code, out, _) = tomo(&["report", "r1", "r2", "r3"], d);
    assert_eq!(code, 0);
    assert_eq!(out.lines().count(), 4);
    // config errors
    assert_eq!(tomo(&["reconstruct", "--set", "bogus=1"], d).0, 2);
    assert_eq!(tomo(&["reconstruct", "--angles", "0"], d).0, 2);
    assert_eq!(tomo(&["reconstruct", "--config", "nope.json"], d).0, 2);
    assert_eq!(tomo(&["report", "nowhere"], d).0, 2);
}
