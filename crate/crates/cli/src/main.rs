use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use serde_json::Value;

use datasets::{
    apply_poisson_noise, export_png, generate_phantom, read_image_raw, read_sinogram_raw,
    write_image_raw, write_sinogram_raw, BitDepth, NoiseSpec, PhantomSpec,
};
use projector::{build_geometry, build_radon_matrix, ProjectionGeometry};
use tomo_cli::config::set_path;
use tomo_cli::pipeline::METRICS_FILE;
use tomo_cli::*;
use tomo_core::exec::with_threads;
use tomo_core::metrics::{bms, mc, rdc, rme, BMS_EPSILON};
use tomo_core::MetricReport;

#[derive(Parser)]
#[command(name = "tomo", version, about = "Tomographic reconstruction experiments")]
struct Cli {
    /// Worker threads for data-parallel stages (default: available cores).
    #[arg(long, global = true)]
    threads: Option<usize>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate the binary phantom as a raw image.
    Phantom {
        #[arg(long, default_value_t = 64)]
        side: usize,
        /// JSON phantom spec; overrides --side.
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        png: Option<PathBuf>,
    },
    /// Project a raw image, optionally with Poisson noise.
    Project {
        #[arg(long)]
        image: PathBuf,
        #[arg(long, default_value_t = 20)]
        angles: usize,
        #[arg(long, default_value_t = 0.0)]
        wedge: f64,
        #[arg(long)]
        dose: Option<f64>,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        out: PathBuf,
    },
    /// Train the edge network and store its maximum output.
    Train {
        #[arg(long)]
        config: Option<PathBuf>,
        /// Override a config key, e.g. `train.epochs=50`.
        #[arg(long = "set")]
        sets: Vec<String>,
        #[arg(long)]
        out: PathBuf,
        /// Write the epoch loss CSV here instead of stdout.
        #[arg(long)]
        loss_csv: Option<PathBuf>,
    },
    /// Run one experiment pipeline. Accepts a config or a run manifest.
    Reconstruct {
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long = "set")]
        sets: Vec<String>,
        #[arg(long)]
        algorithm: Option<String>,
        #[arg(long)]
        angles: Option<usize>,
        #[arg(long)]
        wedge: Option<f64>,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        dose: Option<f64>,
        #[arg(long)]
        net: Option<PathBuf>,
        #[arg(long)]
        output_dir: Option<PathBuf>,
    },
    /// Metrics of a raw reconstruction.
    Metrics {
        #[arg(long)]
        recon: PathBuf,
        #[arg(long)]
        truth: Option<PathBuf>,
        /// Measured sinogram, enables RDC.
        #[arg(long)]
        sinogram: Option<PathBuf>,
    },
    /// Collect the metrics of several output directories into one table.
    Report {
        dirs: Vec<PathBuf>,
        #[arg(long)]
        markdown: bool,
    },
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let threads = cli
        .threads
        .unwrap_or_else(|| std::thread::available_parallelism().map_or(1, |n| n.get()));
    match with_threads(threads, || run(cli.command)) {
        Ok(code) => ExitCode::from(code),
        Err(e) => {
            eprintln!("{e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}

fn stage<T>(s: &str, r: tomo_core::Result<T>) -> Result<T, CliError> {
    r.map_err(|e| CliError::stage(s, e))
}

fn read_json(path: &Path) -> Result<Value, CliError> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| CliError::Config(format!("{}: {e}", path.display())))?;
    serde_json::from_str(&text).map_err(|e| CliError::Config(format!("{}: {e}", path.display())))
}

fn run(cmd: Command) -> Result<u8, CliError> {
    match cmd {
        Command::Phantom {
            side,
            config,
            out,
            png,
        } => {
            let spec: PhantomSpec = match config {
                Some(p) => serde_json::from_value(read_json(&p)?)
                    .map_err(|e| CliError::Config(format!("phantom spec: {e}")))?,
                None => PhantomSpec::with_side(side),
            };
            let img = stage("phantom", generate_phantom(&spec))?;
            stage("writing image", write_image_raw(&img, &out))?;
            if let Some(p) = png {
                stage("writing png", export_png(&img, &p, BitDepth::Eight))?;
            }
            Ok(0)
        }
        Command::Project {
            image,
            angles,
            wedge,
            dose,
            seed,
            out,
        } => {
            let img = stage("loading image", read_image_raw(&image))?;
            if img.width() != img.height() {
                return Err(CliError::Config("image must be square".into()));
            }
            let geom = stage("geometry", build_geometry(angles, wedge, img.width()))?;
            let op = build_radon_matrix(&geom);
            let mut p = stage("projection", op.forward(&img, Default::default()))?;
            if let Some(dose) = dose {
                p = stage("noise", apply_poisson_noise(&p, &NoiseSpec { dose, seed }))?;
            }
            stage("writing sinogram", write_sinogram_raw(&p, &out))?;
            Ok(0)
        }
        Command::Train {
            config,
            sets,
            out,
            loss_csv,
        } => {
            let mut v = match config {
                Some(p) => read_json(&p)?,
                None => Value::Object(Default::default()),
            };
            apply_overrides(&mut v, &sets)?;
            let job: TrainJob = serde_json::from_value(v)
                .map_err(|e| CliError::Config(format!("train config: {e}")))?;
            let (net, report) = train_command(&job, &out)?;
            match loss_csv {
                Some(p) => std::fs::write(p, report.loss_csv())?,
                None => print!("{}", report.loss_csv()),
            }
            eprintln!(
                "held-out RMSE {:.5} ({} samples), max output {:.6}, wrote {}",
                report.holdout_rmse,
                report.holdout_samples,
                net.max_output().unwrap_or(f64::NAN),
                out.display()
            );
            Ok(0)
        }
        Command::Reconstruct {
            config,
            sets,
            algorithm,
            angles,
            wedge,
            seed,
            dose,
            net,
            output_dir,
        } => {
            let (mut v, recorded) = match config {
                Some(p) => load_config(&p)?,
                None => (Value::Object(Default::default()), None),
            };
            if let Some(r) = &recorded {
                verify_inputs(r)?;
            }
            let flags: [(&str, Option<Value>); 7] = [
                ("algorithm", algorithm.map(Value::from)),
                ("geometry.angles", angles.map(Value::from)),
                ("geometry.wedge_deg", wedge.map(Value::from)),
                ("seed", seed.map(Value::from)),
                ("dose", dose.map(Value::from)),
                ("net_path", net.map(|p| Value::from(p.to_string_lossy().into_owned()))),
                ("output_dir", output_dir.map(|p| Value::from(p.to_string_lossy().into_owned()))),
            ];
            apply_overrides(&mut v, &sets)?;
            for (key, value) in flags {
                if let Some(value) = value {
                    set_path(&mut v, key, value)?;
                }
            }
            let cfg = parse_config(v)?;
            let out = run_pipeline(&cfg)?;
            let m = &out.manifest;
            println!("{}", MetricReport::CSV_HEADER);
            let csv = std::fs::read_to_string(m.config.output_dir.join(METRICS_FILE))?;
            print!("{}", csv.lines().skip(1).map(|l| format!("{l}\n")).collect::<String>());
            match &m.limit {
                Some(why) => {
                    eprintln!("solver limit reached, incumbent written: {why}");
                    Ok(3)
                }
                None => Ok(0),
            }
        }
        Command::Metrics {
            recon,
            truth,
            sinogram,
        } => {
            let img = stage("loading reconstruction", read_image_raw(&recon))?;
            let rme_v = match truth {
                Some(t) => Some(stage("rme", rme(&img, &stage("loading truth", read_image_raw(&t))?))?),
                None => None,
            };
            let rdc_v = match sinogram {
                Some(s) => {
                    let p = stage("loading sinogram", read_sinogram_raw(&s))?;
                    let geom = stage(
                        "geometry",
                        ProjectionGeometry::new(p.angles().to_vec(), p.detector_count(), 1.0, img.width()),
                    )?;
                    Some(stage("rdc", rdc(&build_radon_matrix(&geom), &img, &p))?)
                }
                None => None,
            };
            let report = MetricReport {
                rme: rme_v,
                rdc: rdc_v,
                bms: stage("bms", bms(&img, BMS_EPSILON))?,
                mc: mc(&img),
                runtime_seconds: 0.0,
            };
            println!("{}", MetricReport::CSV_HEADER);
            println!("{}", report.csv_row(&recon.to_string_lossy(), "-", ""));
            Ok(0)
        }
        Command::Report { dirs, markdown } => {
            let mut rows = Vec::new();
            for d in &dirs {
                let path = d.join(METRICS_FILE);
                let text = std::fs::read_to_string(&path)
                    .map_err(|e| CliError::Config(format!("{}: {e}", path.display())))?;
                rows.extend(text.lines().skip(1).map(str::to_string));
            }
            if markdown {
                let header: Vec<&str> = MetricReport::CSV_HEADER.split(',').collect();
                println!("| {} |", header.join(" | "));
                println!("|{}", "---|".repeat(header.len()));
                for r in &rows {
                    println!("| {} |", r.split(',').collect::<Vec<_>>().join(" | "));
                }
            } else {
                println!("{}", MetricReport::CSV_HEADER);
                for r in &rows {
                    println!("{r}");
                }
            }
            Ok(0)
        }
    }
}
