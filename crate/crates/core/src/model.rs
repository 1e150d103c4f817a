//! Trained-model files and the prediction interface used to emit
//! true-vs-predicted force histories.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::dataset::{window_displacement, NormStats};
use crate::error::{Error, Result};
use crate::lstm::{forward_block, BlockTape, NetworkParams};
use crate::par::Execution;
use crate::sweep::ModelConfig;

pub const FORMAT_VERSION: u32 = 1;

/// Anything that maps a physical displacement history to physical force
/// predictions, one per complete lookback window.
pub trait Predictor: Sync {
    fn lookback(&self) -> usize;

    /// `displacement.len() - lookback + 1` predictions; entry `w` targets
    /// sample `w + lookback - 1`.
    fn predict_series(&self, displacement: &[f64]) -> Result<Vec<f64>>;
}

/// Network parameters with the configuration and normalization they were
/// trained under.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrainedModel {
    pub format_version: u32,
    pub config: ModelConfig,
    pub norm: NormStats,
    pub params: NetworkParams,
}

impl TrainedModel {
    pub fn new(config: ModelConfig, norm: NormStats, params: NetworkParams) -> Self {
        TrainedModel {
            format_version: FORMAT_VERSION,
            config,
            norm,
            params,
        }
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("model serialization is infallible")
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let model: TrainedModel =
            serde_json::from_str(text).map_err(|e| Error::Format(format!("model file: {e}")))?;
        if model.format_version != FORMAT_VERSION {
            return Err(Error::Format(format!(
                "model file: unsupported format_version {} (expected {FORMAT_VERSION})",
                model.format_version
            )));
        }
        model
            .params
            .validate()
            .map_err(|e| Error::Format(format!("model file: {e}")))?;
        let arch = model.params.architecture();
        if arch.hidden_size != model.config.neurons || arch.layers != model.config.hidden_layers {
            return Err(Error::Format(
                "model file: parameters do not match `config`".to_string(),
            ));
        }
        Ok(model)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_json()).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_json(&text)
    }
}

impl Predictor for TrainedModel {
    fn lookback(&self) -> usize {
        self.config.lookback
    }

    fn predict_series(&self, displacement: &[f64]) -> Result<Vec<f64>> {
        let lookback = self.config.lookback;
        let inputs = window_displacement(displacement, &self.norm, lookback)?;
        let count = displacement.len() - lookback + 1;
        let starts: Vec<usize> = (0..count).step_by(64).collect();
        let parts = Execution::default().map(&starts, |&s| -> Result<Vec<f64>> {
            let windows: Vec<&[f64]> = (s..(s + 64).min(count))
                .map(|w| &inputs[w * lookback..(w + 1) * lookback])
                .collect();
            let mut tape = BlockTape::default();
            let preds = forward_block(&self.params, &windows, lookback, &mut tape)?;
            Ok(preds.iter().map(|&y| self.norm.denormalize_y(y)).collect())
        });
        let mut out = Vec::with_capacity(count);
        for p in parts {
            out.extend(p?);
        }
        Ok(out)
    }
}
