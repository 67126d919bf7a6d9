use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use datasets::read_image_raw;
use edge_net::{
    build_training_set_multi, synthetic_corpus, train_edge_net, CorpusSpec, EdgeNet, TrainConfig,
    TrainReport,
};
use relu_mip::max_output;

use crate::error::CliError;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainJob {
    pub corpus: CorpusSpec,
    pub train: TrainConfig,
    /// Extra raw grayscale images (`*.img.json` bases) added to the corpus.
    pub images: Vec<PathBuf>,
    pub omega: f64,
}

impl Default for TrainJob {
    fn default() -> Self {
        TrainJob {
            corpus: CorpusSpec::default(),
            train: TrainConfig::default(),
            images: Vec::new(),
            omega: 255.0,
        }
    }
}

/// Trains the edge network, stores ū and writes `out`.
pub fn train_command(job: &TrainJob, out: &Path) -> Result<(EdgeNet, TrainReport), CliError> {
    if !(job.omega > 0.0) {
        return Err(CliError::Config(format!("omega must be positive, got {}", job.omega)));
    }
    let mut images = synthetic_corpus(&job.corpus).map_err(|e| CliError::stage("corpus", e))?;
    for p in &job.images {
        images.push(read_image_raw(p).map_err(|e| CliError::stage("loading corpus image", e))?);
    }
    let set = build_training_set_multi(&images, job.omega, true)
        .map_err(|e| CliError::stage("training set", e))?;
    let (mut net, report) =
        train_edge_net(&set, &job.train).map_err(|e| CliError::stage("training", e))?;
    let u = max_output(&net).map_err(|e| CliError::stage("maximum output", e))?;
    net.set_max_output(u);
    if let Some(dir) = out.parent().filter(|d| !d.as_os_str().is_empty()) {
        std::fs::create_dir_all(dir)?;
    }
    net.save(out).map_err(|e| CliError::stage("writing net", e))?;
    Ok((net, report))
}
