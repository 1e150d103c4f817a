use std::path::{Path, PathBuf};

use serde::Deserialize;

use brace_lstm::oracle::{BoucWenParams, LoadingProtocol};
use brace_lstm::sweep::{default_grid, ModelConfig};
use brace_lstm::training::TrainConfig;

use crate::CliError;

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Paths {
    /// Oracle CSV read by `train`, `sweep` and `predict`, written by `generate`.
    pub data: Option<PathBuf>,
    /// Model file written by `train`, read by `predict`.
    pub model: Option<PathBuf>,
    /// Directory receiving sweep artifacts.
    pub out_dir: Option<PathBuf>,
    /// Train report JSON; defaults to the model path with `.report.json`.
    pub report: Option<PathBuf>,
    /// Prediction CSV written by `predict`.
    pub predictions: Option<PathBuf>,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    pub protocol: LoadingProtocol,
    pub oracle: BoucWenParams,
    pub training: TrainConfig,
    pub models: Vec<ModelConfig>,
    pub paths: Paths,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        ExperimentConfig {
            protocol: LoadingProtocol::default(),
            oracle: BoucWenParams::default(),
            training: TrainConfig::default(),
            models: default_grid(),
            paths: Paths::default(),
        }
    }
}

impl ExperimentConfig {
    pub fn load(path: Option<&Path>) -> Result<Self, CliError> {
        let Some(path) = path else {
            return Ok(Self::default());
        };
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::config(format!("cannot read config {}: {e}", path.display())))?;
        Self::parse(&text).map_err(|e| CliError::config(format!("{}: {e}", path.display())))
    }

    pub fn parse(text: &str) -> Result<Self, String> {
        let cfg: ExperimentConfig = toml::from_str(text).map_err(|e| e.to_string())?;
        cfg.protocol.validate().map_err(|e| format!("[protocol] {e}"))?;
        cfg.oracle.validate().map_err(|e| format!("[oracle] {e}"))?;
        cfg.training.validate().map_err(|e| format!("[training] {e}"))?;
        if cfg.models.is_empty() {
            return Err("[[models]] must list at least one model".into());
        }
        for m in &cfg.models {
            m.validate().map_err(|e| format!("[[models]] {}: {e}", m.name))?;
        }
        Ok(cfg)
    }
}

pub fn require(path: Option<PathBuf>, what: &str) -> Result<PathBuf, CliError> {
    path.ok_or_else(|| {
        CliError::config(format!("no {what} path given (flag or [paths] entry)"))
    })
}

pub fn check_input(path: &Path) -> Result<(), CliError> {
    if path.is_file() {
        Ok(())
    } else {
        Err(CliError::config(format!("input file {} does not exist", path.display())))
    }
}

/// The parent directory of `path` must already exist.
pub fn check_output(path: &Path) -> Result<(), CliError> {
    let parent = match path.parent() {
        Some(p) if !p.as_os_str().is_empty() => p,
        _ => Path::new("."),
    };
    if parent.is_dir() {
        Ok(())
    } else {
        Err(CliError::config(format!(
            "output directory {} does not exist",
            parent.display()
        )))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn empty_document_is_the_default_experiment() {
        let cfg = ExperimentConfig::parse("").unwrap();
        assert_eq!(cfg.models.len(), 7);
        assert_eq!(cfg.protocol, LoadingProtocol::default());
    }

    #[test]
    fn misspelled_keys_are_rejected() {
        let err = ExperimentConfig::parse("[training]\nlearnin_rate = 0.1\n").unwrap_err();
        assert!(err.contains("learnin_rate"), "{err}");
        let err = ExperimentConfig::parse("[oracle]\nalhpa = 0.1\n").unwrap_err();
        assert!(err.contains("alhpa"), "{err}");
        assert!(ExperimentConfig::parse("[extra]\n").is_err());
    }

    #[test]
    fn invalid_values_name_their_field() {
        let err = ExperimentConfig::parse("[protocol]\npoints_per_cycle = 4\n").unwrap_err();
        assert!(err.contains("points_per_cycle"), "{err}");
    }

    #[test]
    fn shipped_configs_match_the_presets() {
        let a = ExperimentConfig::parse(include_str!("../../../configs/specimen_a.toml")).unwrap();
        assert_eq!(a.oracle, BoucWenParams::specimen_a());
        assert_eq!(a.protocol, LoadingProtocol::default());
        assert_eq!(a.training, TrainConfig::default());
        assert_eq!(a.models, default_grid());
        let b = ExperimentConfig::parse(include_str!("../../../configs/specimen_b.toml")).unwrap();
        assert_eq!(b.oracle, BoucWenParams::specimen_b());
        assert_eq!(b.models.len(), 3);
    }

    #[test]
    fn models_replace_the_grid() {
        let cfg = ExperimentConfig::parse(
            "[[models]]\nname = \"tiny\"\nneurons = 2\nhidden_layers = 1\nlookback = 3\n",
        )
        .unwrap();
        assert_eq!(cfg.models, vec![ModelConfig::new("tiny", 2, 1, 3)]);
    }
}
