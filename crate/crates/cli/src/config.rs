//! Experiment configuration (JSON). Every field has a default, so `{}` is a
//! valid config: the 64² phantom, 20 angles, dose 10⁴, SIRT.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use serde_json::Value;

use convex_solvers::{scaled_weight, CsConfig, CshmConfig};
use datasets::PhantomSpec;
use integrated::{IntegratedConfig, Roi};
use mip_ro::MipRoConfig;

use crate::error::CliError;

/// λ tuned for the 512² phantom, rescaled to the experiment's side.
pub const REFERENCE_LAMBDA: f64 = 20_000.0;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum DatasetSpec {
    Phantom(PhantomSpec),
    /// Raw ground-truth image, projected with the configured geometry.
    Image { path: PathBuf },
    /// Raw measured sinogram; no ground truth, so RME stays empty.
    Sinogram { path: PathBuf, side: usize },
}

impl Default for DatasetSpec {
    fn default() -> Self {
        DatasetSpec::Phantom(PhantomSpec::with_side(64))
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct GeometrySpec {
    pub angles: usize,
    pub wedge_deg: f64,
}

impl Default for GeometrySpec {
    fn default() -> Self {
        GeometrySpec {
            angles: 20,
            wedge_deg: 0.0,
        }
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Algorithm {
    #[default]
    Sirt,
    Cs,
    Cshm,
    Mipro,
    Integrated,
}

impl Algorithm {
    pub fn name(self) -> &'static str {
        match self {
            Algorithm::Sirt => "sirt",
            Algorithm::Cs => "cs",
            Algorithm::Cshm => "cshm",
            Algorithm::Mipro => "mipro",
            Algorithm::Integrated => "integrated",
        }
    }

    pub fn needs_net(self) -> bool {
        matches!(self, Algorithm::Mipro | Algorithm::Integrated)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    pub dataset: DatasetSpec,
    pub geometry: GeometrySpec,
    /// Expected count at the brightest bin; `null` for noise-free data.
    pub dose: Option<f64>,
    pub seed: u64,
    pub algorithm: Algorithm,
    pub sirt_iters: usize,
    /// CS/CSHM parameters; `null` selects λ = 20000·side/512, μ = 1.
    pub cshm: Option<CshmConfig>,
    pub mipro: MipRoConfig,
    /// `null` selects the defaults with a 16×16 ROI centred in the image.
    pub integrated: Option<IntegratedConfig>,
    pub net_path: Option<PathBuf>,
    pub output_dir: PathBuf,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        ExperimentConfig {
            dataset: DatasetSpec::default(),
            geometry: GeometrySpec::default(),
            dose: Some(1e4),
            seed: 0,
            algorithm: Algorithm::Sirt,
            sirt_iters: 1000,
            cshm: None,
            mipro: MipRoConfig::default(),
            integrated: None,
            net_path: None,
            output_dir: PathBuf::from("out"),
        }
    }
}

pub fn default_cshm(side: usize) -> CshmConfig {
    CshmConfig {
        cs: CsConfig {
            lambda_tv: scaled_weight(REFERENCE_LAMBDA, side),
            ..CsConfig::default()
        },
        ..CshmConfig::default()
    }
}

impl ExperimentConfig {
    pub fn side(&self) -> usize {
        match &self.dataset {
            DatasetSpec::Phantom(p) => p.side,
            DatasetSpec::Sinogram { side, .. } => *side,
            // known only after loading; the file header is authoritative
            DatasetSpec::Image { .. } => 0,
        }
    }

    /// Fills the optional solver sections for an image of side `side`.
    pub fn resolved(&self, side: usize) -> ExperimentConfig {
        let mut c = self.clone();
        c.cshm.get_or_insert_with(|| default_cshm(side));
        c.integrated.get_or_insert_with(|| IntegratedConfig {
            roi: Roi::centered(side, 16.min(side)),
            ..IntegratedConfig::default()
        });
        c
    }

    /// Checks parameter domains and that referenced files exist.
    pub fn validate(&self) -> Result<(), CliError> {
        let bad = |m: String| Err(CliError::Config(m));
        if self.geometry.angles == 0 {
            return bad("geometry.angles must be positive".into());
        }
        if !(0.0..180.0).contains(&self.geometry.wedge_deg) {
            return bad(format!("geometry.wedge_deg = {} outside [0, 180)", self.geometry.wedge_deg));
        }
        if let Some(d) = self.dose {
            if !(d > 0.0) || !d.is_finite() {
                return bad(format!("dose must be positive, got {d}"));
            }
        }
        if self.algorithm == Algorithm::Sirt && self.sirt_iters == 0 {
            return bad("sirt_iters must be positive".into());
        }
        match &self.dataset {
            DatasetSpec::Phantom(p) => p
                .validate()
                .map_err(|e| CliError::Config(format!("dataset: {e}")))?,
            DatasetSpec::Image { path } => require_raw(path, "img")?,
            DatasetSpec::Sinogram { path, side } => {
                require_raw(path, "sino")?;
                if *side == 0 {
                    return bad("dataset.side must be positive".into());
                }
            }
        }
        if self.algorithm.needs_net() {
            match &self.net_path {
                None => {
                    return bad(format!(
                        "algorithm {} needs net_path (train one with `tomo train`)",
                        self.algorithm.name()
                    ))
                }
                Some(p) if !p.is_file() => {
                    return bad(format!("net_path {} does not exist", p.display()))
                }
                Some(_) => {}
            }
        }
        if let Some(c) = &self.cshm {
            if !(c.cs.lambda_tv >= 0.0) || !(c.mu >= 0.0) || !(c.cs.tol > 0.0) || c.cs.max_iters == 0 {
                return bad(format!("invalid cshm parameters {c:?}"));
            }
        }
        let m = &self.mipro;
        if m.spacing != 1 && m.spacing != 3 {
            return bad(format!("mipro.spacing must be 1 or 3, got {}", m.spacing));
        }
        if !(m.alpha >= 0.0) || !(m.beta >= 0.0) || !(m.threshold >= 0.0) {
            return bad("mipro.alpha, beta and threshold must be non-negative".into());
        }
        if let Some(i) = &self.integrated {
            if !(i.phi >= 0.0) || !(i.gap_tol >= 0.0) {
                return bad("integrated.phi and gap_tol must be non-negative".into());
            }
        }
        Ok(())
    }
}

fn require_raw(base: &Path, kind: &str) -> Result<(), CliError> {
    let s = base.to_string_lossy();
    let stem = s
        .strip_suffix(&format!(".{kind}.json"))
        .or_else(|| s.strip_suffix(&format!(".{kind}.bin")))
        .unwrap_or(&s);
    let header = PathBuf::from(format!("{stem}.{kind}.json"));
    if header.is_file() {
        Ok(())
    } else {
        Err(CliError::Config(format!("{} does not exist", header.display())))
    }
}

/// Reads a config file. A run manifest is accepted too; its embedded
/// config is returned together with the recorded input hashes.
pub fn load_config(path: &Path) -> Result<(Value, Option<Value>), CliError> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| CliError::Config(format!("{}: {e}", path.display())))?;
    let v: Value = serde_json::from_str(&text)
        .map_err(|e| CliError::Config(format!("{}: {e}", path.display())))?;
    match v {
        Value::Object(mut m) if m.contains_key("config") && m.contains_key("artifacts") => {
            let cfg = m.remove("config").unwrap_or(Value::Null);
            Ok((cfg, m.remove("inputs")))
        }
        other => Ok((other, None)),
    }
}

/// Applies `a.b.c=value` overrides. The value is parsed as JSON and taken
/// as a plain string when that fails.
pub fn apply_overrides(cfg: &mut Value, sets: &[String]) -> Result<(), CliError> {
    for s in sets {
        let (key, raw) = s
            .split_once('=')
            .ok_or_else(|| CliError::Config(format!("override `{s}` is not key=value")))?;
        let value = serde_json::from_str(raw).unwrap_or_else(|_| Value::String(raw.to_string()));
        set_path(cfg, key, value)?;
    }
    Ok(())
}

pub fn set_path(cfg: &mut Value, key: &str, value: Value) -> Result<(), CliError> {
    let mut cur = cfg;
    let parts: Vec<&str> = key.split('.').collect();
    for (k, part) in parts.iter().enumerate() {
        if cur.is_null() {
            *cur = Value::Object(Default::default());
        }
        let obj = cur
            .as_object_mut()
            .ok_or_else(|| CliError::Config(format!("`{key}`: `{part}` is not inside an object")))?;
        if k + 1 == parts.len() {
            obj.insert(part.to_string(), value);
            return Ok(());
        }
        cur = obj.entry(part.to_string()).or_insert(Value::Null);
    }
    Ok(())
}

/// Parses a config. A partial `cshm` or `integrated` section is merged
/// onto the defaults for the dataset's image side.
pub fn parse_config(mut v: Value) -> Result<ExperimentConfig, CliError> {
    let parse = |v: Value| -> Result<ExperimentConfig, CliError> {
        serde_json::from_value(v).map_err(|e| CliError::Config(format!("config: {e}")))
    };
    let first = parse(v.clone())?;
    let side = match &first.dataset {
        DatasetSpec::Image { path } => match datasets::read_image_raw(path) {
            Ok(img) => img.width(),
            Err(_) => return Ok(first),
        },
        _ => first.side(),
    };
    let defaults = ExperimentConfig {
        cshm: None,
        integrated: None,
        ..first
    }
    .resolved(side);
    for (key, default) in [
        ("cshm", serde_json::to_value(&defaults.cshm)),
        ("integrated", serde_json::to_value(&defaults.integrated)),
    ] {
        let default = default.map_err(|e| CliError::Internal(e.into()))?;
        if let Some(Value::Object(given)) = v.get(key) {
            let mut merged = default;
            merge(&mut merged, Value::Object(given.clone()));
            v[key] = merged;
        }
    }
    parse(v)
}

fn merge(base: &mut Value, over: Value) {
    match (base, over) {
        (Value::Object(b), Value::Object(o)) => {
            for (k, v) in o {
                merge(b.entry(k).or_insert(Value::Null), v);
            }
        }
        (b, o) => *b = o,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn empty_object_is_the_default() {
        assert_eq!(parse_config(serde_json::json!({})).unwrap(), ExperimentConfig::default());
    }

    #[test]
    fn overrides_reach_nested_keys() {
        let mut v = serde_json::json!({});
        apply_overrides(
            &mut v,
            &["algorithm=cshm".into(), "cshm.lambda_tv=10".into(), "geometry.angles=5".into()],
        )
        .unwrap();
        let c = parse_config(v).unwrap();
        assert_eq!(c.algorithm, Algorithm::Cshm);
        assert_eq!(c.geometry.angles, 5);
        assert_eq!(c.cshm.unwrap().cs.lambda_tv, 10.0);
        assert!(apply_overrides(&mut serde_json::json!({}), &["nokey".into()]).is_err());
    }

    #[test]
    fn unknown_keys_are_rejected() {
        assert!(parse_config(serde_json::json!({"algorithmm": "sirt"})).is_err());
    }

    #[test]
    fn partial_sections_keep_scaled_defaults() {
        let c = parse_config(serde_json::json!({"cshm": {"max_iters": 7}})).unwrap();
        let cshm = c.cshm.unwrap();
        assert_eq!(cshm.cs.max_iters, 7);
        assert_eq!(cshm.cs.lambda_tv, 2500.0);
        let c = parse_config(serde_json::json!({"integrated": {"phi": 3.0}})).unwrap();
        let i = c.integrated.unwrap();
        assert_eq!(i.phi, 3.0);
        assert_eq!(i.roi, Roi::centered(64, 16));
    }
}
