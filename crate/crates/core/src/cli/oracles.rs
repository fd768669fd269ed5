//! `--oracle` specs: `builtin:<config.json>` or `exec:<command>`.

use std::path::{Path, PathBuf};

use serde::Deserialize;

use super::CliError;
use crate::dataset::{build_subsets, load_manifest, Manifest};
use crate::features::FeatureLayout;
use crate::oracle::{check_layout, train_builtin, BuiltinModel, ExternalOracle, Oracle, TrainConfig};

/// Builtin oracle config file.
///
/// Either `weights` points at a dump written by `capfi train`, or the model
/// is trained on `train_dataset` (default: the run's `--dataset`),
/// restricted to `train_context` when given. Relative paths resolve
/// against the config file's directory.
#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BuiltinConfig {
    pub name: Option<String>,
    pub weights: Option<PathBuf>,
    pub train_dataset: Option<PathBuf>,
    pub train_context: Option<String>,
    pub epochs: Option<usize>,
    pub l2: Option<f64>,
    pub learning_rate: Option<f64>,
    pub seed: Option<u64>,
}

impl BuiltinConfig {
    pub fn train_config(&self) -> TrainConfig {
        let d = TrainConfig::default();
        TrainConfig {
            learning_rate: self.learning_rate.or(d.learning_rate),
            epochs: self.epochs.unwrap_or(d.epochs),
            l2: self.l2.unwrap_or(d.l2),
            seed: self.seed.unwrap_or(d.seed),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum OracleSpec {
    Builtin(PathBuf),
    Exec(String),
}

impl std::str::FromStr for OracleSpec {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        if let Some(path) = s.strip_prefix("builtin:") {
            Ok(OracleSpec::Builtin(PathBuf::from(path)))
        } else if let Some(cmd) = s.strip_prefix("exec:") {
            if cmd.trim().is_empty() {
                return Err("exec: needs a command".into());
            }
            Ok(OracleSpec::Exec(cmd.to_string()))
        } else {
            Err(format!("oracle spec `{s}` must start with `builtin:` or `exec:`"))
        }
    }
}

fn resolve(base: &Path, p: &Path) -> PathBuf {
    if p.is_absolute() {
        p.to_path_buf()
    } else {
        base.join(p)
    }
}

fn default_name(path: &Path) -> String {
    path.file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_else(|| "builtin".into())
}

pub fn load_builtin(
    path: &Path,
    eval: &Manifest,
    layout: &FeatureLayout,
) -> Result<BuiltinModel, CliError> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| CliError::Config(format!("cannot read oracle config {}: {e}", path.display())))?;
    let cfg: BuiltinConfig = serde_json::from_str(&text)
        .map_err(|e| CliError::Config(format!("malformed oracle config {}: {e}", path.display())))?;
    let base = path.parent().unwrap_or_else(|| Path::new("."));
    let name = cfg.name.clone().unwrap_or_else(|| default_name(path));

    if let Some(w) = &cfg.weights {
        let mut model = BuiltinModel::load(resolve(base, w)).map_err(|e| CliError::Config(e.to_string()))?;
        if cfg.name.is_some() {
            model.set_name(&name);
        }
        return Ok(model);
    }

    let owned;
    let train_manifest = match &cfg.train_dataset {
        Some(p) => {
            owned = load_manifest(resolve(base, p)).map_err(|e| CliError::Config(e.to_string()))?;
            &owned
        }
        None => eval,
    };
    let indices = match &cfg.train_context {
        Some(expr) => {
            build_subsets(train_manifest)
                .evaluate(expr)
                .map_err(|e| CliError::Config(e.to_string()))?
                .members
        }
        None => (0..train_manifest.len()).collect(),
    };
    train_builtin(train_manifest, &indices, layout, &cfg.train_config(), &name).map_err(|e| CliError::Config(e.to_string()))
}

/// Build every oracle of a run. Builtin configs and layout mismatches are
/// configuration errors; a failing external process is a runtime error.
pub fn build_oracles(
    specs: &[OracleSpec],
    eval: &Manifest,
    layout: &FeatureLayout,
) -> Result<Vec<Box<dyn Oracle>>, CliError> {
    let mut out: Vec<Box<dyn Oracle>> = Vec::with_capacity(specs.len());
    for spec in specs {
        match spec {
            OracleSpec::Builtin(p) => out.push(Box::new(load_builtin(p, eval, layout)?)),
            OracleSpec::Exec(cmd) => out.push(Box::new(ExternalOracle::spawn(cmd, layout).map_err(|e| match e {
                crate::oracle::OracleError::LayoutMismatch { .. } => CliError::Config(e.to_string()),
                other => CliError::Runtime(format!("cannot start oracle `{cmd}`: {other}")),
            })?)),
        }
    }
    for o in &out {
        check_layout(o.as_ref(), layout).map_err(|e| CliError::Config(e.to_string()))?;
    }
    let mut names: Vec<&str> = out.iter().map(|o| o.meta().name.as_str()).collect();
    names.sort_unstable();
    if let Some(w) = names.windows(2).find(|w| w[0] == w[1]) {
        return Err(CliError::Config(format!("two oracles share the name `{}`", w[0])));
    }
    Ok(out)
}
