//! One experiment: data, operator, reconstruction, metrics, artifacts.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};
use std::time::Instant;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use convex_solvers::{sirt, solve_cs, solve_cshm};
use datasets::{
    apply_poisson_noise, export_png, generate_phantom, read_image_raw, read_sinogram_raw,
    subsample_angles, write_image_raw, write_sinogram_raw, BitDepth, NoiseSpec,
};
use edge_net::EdgeNet;
use integrated::{solve_integrated, write_trace_csv};
use mip_ro::{sliding_window_reoptimize, write_progress_csv};
use projector::{build_geometry, build_radon_matrix, ProjectionGeometry};
use relu_mip::MipStatus;
use tomo_core::metrics::{bms, mc, rdc, rme, BMS_EPSILON};
use tomo_core::{Image, MetricReport, Sinogram, SparseOperator};

use crate::config::{Algorithm, DatasetSpec, ExperimentConfig};
use crate::error::CliError;

pub const MANIFEST_FILE: &str = "manifest.json";
pub const METRICS_FILE: &str = "metrics.csv";

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct InputRecord {
    pub path: PathBuf,
    pub sha256: String,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ManifestMetrics {
    pub rme: Option<f64>,
    pub rdc: Option<f64>,
    pub bms: f64,
    pub mc: usize,
}

/// Everything needed to rerun an experiment, plus content hashes of what
/// it produced. Wall-clock time lives only in the metrics CSV.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub tool: String,
    pub version: String,
    pub config: ExperimentConfig,
    pub inputs: BTreeMap<String, InputRecord>,
    /// File name in the output directory → sha256.
    pub artifacts: BTreeMap<String, String>,
    pub metrics: ManifestMetrics,
    /// Set when a solver stopped on an iteration, node or time limit.
    pub limit: Option<String>,
}

#[derive(Debug)]
pub struct PipelineOutcome {
    pub report: MetricReport,
    pub manifest: Manifest,
    pub image: Image,
}

pub fn sha256_file(path: &Path) -> std::io::Result<String> {
    let bytes = fs::read(path)?;
    Ok(Sha256::digest(&bytes)
        .iter()
        .map(|b| format!("{b:02x}"))
        .collect())
}

struct Data {
    truth: Option<Image>,
    measured: Sinogram,
    op: SparseOperator,
    side: usize,
    name: String,
}

fn load_data(cfg: &ExperimentConfig, inputs: &mut BTreeMap<String, InputRecord>) -> Result<Data, CliError> {
    let g = &cfg.geometry;
    let project = |truth: Image, name: String| -> Result<Data, CliError> {
        if truth.width() != truth.height() {
            return Err(CliError::Config(format!(
                "ground truth is {}x{}, must be square",
                truth.width(),
                truth.height()
            )));
        }
        let side = truth.width();
        let geom = build_geometry(g.angles, g.wedge_deg, side).map_err(|e| CliError::stage("geometry", e))?;
        let op = build_radon_matrix(&geom);
        let clean = op
            .forward(&truth, Default::default())
            .map_err(|e| CliError::stage("projection", e))?;
        let measured = match cfg.dose {
            Some(dose) => apply_poisson_noise(&clean, &NoiseSpec { dose, seed: cfg.seed })
                .map_err(|e| CliError::stage("noise", e))?,
            None => clean,
        };
        Ok(Data {
            truth: Some(truth),
            measured,
            op,
            side,
            name,
        })
    };
    match &cfg.dataset {
        DatasetSpec::Phantom(spec) => {
            let truth = generate_phantom(spec).map_err(|e| CliError::stage("phantom", e))?;
            project(truth, format!("phantom{}", spec.side))
        }
        DatasetSpec::Image { path } => {
            let truth = read_image_raw(path).map_err(|e| CliError::stage("loading image", e))?;
            record_input(inputs, "image", path, "img")?;
            project(truth, stem(path))
        }
        DatasetSpec::Sinogram { path, side } => {
            let full = read_sinogram_raw(path).map_err(|e| CliError::stage("loading sinogram", e))?;
            record_input(inputs, "sinogram", path, "sino")?;
            let target = build_geometry(g.angles, g.wedge_deg, *side)
                .and_then(|t| ProjectionGeometry::new(t.angles_deg().to_vec(), full.detector_count(), 1.0, *side))
                .map_err(|e| CliError::stage("geometry", e))?;
            let measured = subsample_angles(&full, &target).map_err(|e| CliError::stage("subsampling", e))?;
            Ok(Data {
                truth: None,
                measured,
                op: build_radon_matrix(&target),
                side: *side,
                name: stem(path),
            })
        }
    }
}

fn stem(path: &Path) -> String {
    let s = path.file_name().map(|f| f.to_string_lossy().into_owned()).unwrap_or_default();
    s.split('.').next().unwrap_or("data").to_string()
}

fn record_input(
    inputs: &mut BTreeMap<String, InputRecord>,
    key: &str,
    base: &Path,
    kind: &str,
) -> Result<(), CliError> {
    let s = base.to_string_lossy();
    let stem = s
        .strip_suffix(&format!(".{kind}.json"))
        .or_else(|| s.strip_suffix(&format!(".{kind}.bin")))
        .unwrap_or(&s)
        .to_string();
    for ext in ["json", "bin"] {
        let p = PathBuf::from(format!("{stem}.{kind}.{ext}"));
        inputs.insert(
            format!("{key}.{ext}"),
            InputRecord {
                sha256: sha256_file(&p)?,
                path: p,
            },
        );
    }
    Ok(())
}

fn load_net(path: &Path) -> Result<EdgeNet, CliError> {
    let net = EdgeNet::load(path).map_err(|e| CliError::stage("loading net", e))?;
    if net.max_output().is_none() {
        return Err(CliError::Config(format!(
            "{} has no stored maximum output; retrain it with `tomo train`",
            path.display()
        )));
    }
    Ok(net)
}

fn params_string(cfg: &ExperimentConfig) -> String {
    let mut p = format!(
        "angles={};wedge={};dose={};seed={}",
        cfg.geometry.angles,
        cfg.geometry.wedge_deg,
        cfg.dose.map_or("none".into(), |d| d.to_string()),
        cfg.seed
    );
    let cshm = cfg.cshm.as_ref().expect("resolved config");
    match cfg.algorithm {
        Algorithm::Sirt => p += &format!(";iters={}", cfg.sirt_iters),
        Algorithm::Cs => p += &format!(";lambda={}", cshm.cs.lambda_tv),
        Algorithm::Cshm => p += &format!(";lambda={};mu={}", cshm.cs.lambda_tv, cshm.mu),
        Algorithm::Mipro => {
            p += &format!(
                ";lambda={};T={};alpha={};beta={}",
                cshm.cs.lambda_tv, cfg.mipro.threshold, cfg.mipro.alpha, cfg.mipro.beta
            )
        }
        Algorithm::Integrated => {
            let i = cfg.integrated.as_ref().expect("resolved config");
            p += &format!(";lambda={};phi={};gap={}", cshm.cs.lambda_tv, i.phi, i.gap_tol)
        }
    }
    p
}

/// Runs one experiment and writes its artifacts to `cfg.output_dir`.
pub fn run_pipeline(cfg: &ExperimentConfig) -> Result<PipelineOutcome, CliError> {
    cfg.validate()?;
    let mut inputs = BTreeMap::new();
    let data = load_data(cfg, &mut inputs)?;
    let cfg = cfg.resolved(data.side);
    cfg.validate()?;
    let net = match (&cfg.net_path, cfg.algorithm.needs_net()) {
        (Some(p), true) => {
            inputs.insert(
                "net".into(),
                InputRecord {
                    path: p.clone(),
                    sha256: sha256_file(p)?,
                },
            );
            Some(load_net(p)?)
        }
        _ => None,
    };
    let out_dir = &cfg.output_dir;
    fs::create_dir_all(out_dir)?;
    let cshm = cfg.cshm.clone().expect("resolved config");
    let (op, p) = (&data.op, &data.measured);
    let mut limit = None;
    let mut extra: Vec<String> = Vec::new();

    let start = Instant::now();
    let image = match cfg.algorithm {
        Algorithm::Sirt => sirt(op, p, cfg.sirt_iters).map_err(|e| CliError::stage("sirt", e))?,
        Algorithm::Cs => {
            let r = solve_cs(op, p, &cshm.cs).map_err(|e| CliError::stage("cs", e))?;
            if !r.converged {
                limit = Some(format!("cs stopped after {} iterations", r.iterations));
            }
            r.image
        }
        Algorithm::Cshm | Algorithm::Mipro | Algorithm::Integrated => {
            let r = solve_cshm(op, p, &cshm).map_err(|e| CliError::stage("cshm", e))?;
            if !r.recon.converged {
                limit = Some(format!("cshm stopped after {} iterations", r.recon.iterations));
            }
            let prior = r.recon.image;
            let net = net.as_ref();
            match cfg.algorithm {
                Algorithm::Cshm => prior,
                Algorithm::Mipro => {
                    write_image_raw(&prior, &out_dir.join("prior")).map_err(|e| CliError::stage("writing prior", e))?;
                    extra.extend(["prior.img.json".into(), "prior.img.bin".into()]);
                    let out = sliding_window_reoptimize(&prior, net.expect("validated"), &cfg.mipro)
                        .map_err(|e| CliError::stage("mipro", e))?;
                    write_progress_csv(&out.windows, &out_dir.join("windows.csv"))
                        .map_err(|e| CliError::stage("writing window log", e))?;
                    extra.push("windows.csv".into());
                    let stopped = out
                        .windows
                        .iter()
                        .filter(|w| matches!(w.status, MipStatus::NodeLimit | MipStatus::TimeLimit))
                        .count();
                    if stopped > 0 {
                        limit = Some(format!("{stopped} windows stopped on a node or time limit"));
                    }
                    out.image
                }
                _ => {
                    let net = net.expect("validated");
                    let icfg = cfg.integrated.clone().expect("resolved config");
                    let t = cfg.mipro.net_threshold(net.max_output().expect("checked on load"));
                    let out = solve_integrated(op, p, &cshm, &prior, net, t, &icfg)
                        .map_err(|e| CliError::stage("integrated", e))?;
                    write_trace_csv(&out, &icfg.roi, &out_dir.join("trace.csv"))
                        .map_err(|e| CliError::stage("writing trace", e))?;
                    extra.push("trace.csv".into());
                    if matches!(out.status, MipStatus::NodeLimit | MipStatus::TimeLimit) {
                        limit = Some(format!("integrated stopped at gap {:.4} ({:?})", out.gap, out.status));
                    }
                    out.image
                }
            }
        }
    };
    let runtime = start.elapsed().as_secs_f64();

    let stage = |s: &'static str| move |e| CliError::stage(s, e);
    write_image_raw(&image, &out_dir.join("recon")).map_err(stage("writing reconstruction"))?;
    export_png(&image, &out_dir.join("recon.png"), BitDepth::Eight).map_err(stage("writing png"))?;
    write_sinogram_raw(p, &out_dir.join("measured")).map_err(stage("writing sinogram"))?;

    let report = MetricReport {
        rme: match &data.truth {
            Some(t) => Some(rme(&image, t).map_err(stage("rme"))?),
            None => None,
        },
        rdc: rdc(op, &image, p).ok(),
        bms: bms(&image, BMS_EPSILON).map_err(stage("bms"))?,
        mc: mc(&image),
        runtime_seconds: runtime,
    };
    let csv = format!(
        "{}\n{}\n",
        MetricReport::CSV_HEADER,
        report.csv_row(&data.name, cfg.algorithm.name(), &params_string(&cfg))
    );
    fs::write(out_dir.join(METRICS_FILE), csv)?;

    let mut artifacts = BTreeMap::new();
    let names = [
        "recon.img.json",
        "recon.img.bin",
        "recon.png",
        "measured.sino.json",
        "measured.sino.bin",
    ];
    for name in names.iter().map(|s| s.to_string()).chain(extra) {
        let hash = sha256_file(&out_dir.join(&name))?;
        artifacts.insert(name, hash);
    }
    let manifest = Manifest {
        tool: "tomo".into(),
        version: env!("CARGO_PKG_VERSION").into(),
        config: cfg.clone(),
        inputs,
        artifacts,
        metrics: ManifestMetrics {
            rme: report.rme,
            rdc: report.rdc,
            bms: report.bms,
            mc: report.mc,
        },
        limit,
    };
    let json = serde_json::to_string_pretty(&manifest).map_err(|e| CliError::Internal(e.into()))?;
    fs::write(out_dir.join(MANIFEST_FILE), json + "\n")?;
    Ok(PipelineOutcome {
        report,
        manifest,
        image,
    })
}

/// Compares input hashes recorded in a manifest with the files on disk.
pub fn verify_inputs(recorded: &serde_json::Value) -> Result<(), CliError> {
    let map: BTreeMap<String, InputRecord> = serde_json::from_value(recorded.clone())
        .map_err(|e| CliError::Config(format!("manifest inputs: {e}")))?;
    for (key, rec) in map {
        let now = sha256_file(&rec.path)
            .map_err(|e| CliError::Config(format!("input {key} ({}): {e}", rec.path.display())))?;
        if now != rec.sha256 {
            return Err(CliError::Config(format!(
                "input {key} ({}) changed since the manifest was written",
                rec.path.display()
            )));
        }
    }
    Ok(())
}
