//! The seven-model hyperparameter grid, the per-model fit pipeline, and the
//! report and prediction artifacts a sweep produces.

use std::io::Write;
use std::path::Path;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize, Serializer};
use sha2::{Digest, Sha256};

use crate::dataset::{fit_norm, split_half, split_index, window, NormStats, WindowedDataset};
use crate::error::{Error, Result};
use crate::lstm::{Architecture, NetworkParams};
use crate::model::{Predictor, TrainedModel};
use crate::oracle::io::read_record;
use crate::par::Execution;
use crate::series::BraceRecord;
use crate::training::{nrmse, predict_windows, train, TrainConfig, TrainReport};

fn one() -> usize {
    1
}

fn is_one(v: &usize) -> bool {
    *v == 1
}

/// One row of the grid: width of every LSTM layer, number of layers, and
/// lookback window length.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelConfig {
    pub name: String,
    pub neurons: usize,
    pub hidden_layers: usize,
    pub lookback: usize,
    #[serde(default = "one", skip_serializing_if = "is_one")]
    pub head_layers: usize,
}

impl ModelConfig {
    pub fn new(name: &str, neurons: usize, hidden_layers: usize, lookback: usize) -> Self {
        ModelConfig {
            name: name.to_string(),
            neurons,
            hidden_layers,
            lookback,
            head_layers: 1,
        }
    }

    pub fn architecture(&self) -> Architecture {
        Architecture {
            input_dim: 1,
            hidden_size: self.neurons,
            layers: self.hidden_layers,
            head_layers: self.head_layers,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.neurons == 0 {
            return Err(Error::invalid("neurons", "must be at least 1"));
        }
        if self.hidden_layers == 0 {
            return Err(Error::invalid("hidden_layers", "must be at least 1"));
        }
        if self.lookback == 0 {
            return Err(Error::invalid("lookback", "must be at least 1"));
        }
        if self.head_layers == 0 {
            return Err(Error::invalid("head_layers", "must be at least 1"));
        }
        Ok(())
    }

    /// Name with whitespace removed, lowercased: `"Model 3a"` -> `"model3a"`.
    fn key(name: &str) -> String {
        name.chars()
            .filter(|c| !c.is_whitespace())
            .flat_map(char::to_lowercase)
            .collect()
    }
}

pub fn default_grid() -> Vec<ModelConfig> {
    vec![
        ModelConfig::new("Model 1", 5, 5, 30),
        ModelConfig::new("Model 2", 20, 5, 30),
        ModelConfig::new("Model 3a", 40, 5, 30),
        ModelConfig::new("Model 3b", 40, 10, 30),
        ModelConfig::new("Model 3c", 40, 20, 30),
        ModelConfig::new("Model 3d", 40, 5, 10),
        ModelConfig::new("Model 3e", 40, 5, 40),
    ]
}

/// Looks a model up by name, ignoring case and whitespace.
pub fn find_model<'a>(grid: &'a [ModelConfig], name: &str) -> Result<&'a ModelConfig> {
    let key = ModelConfig::key(name);
    grid.iter().find(|m| ModelConfig::key(&m.name) == key).ok_or_else(|| {
        let names: Vec<&str> = grid.iter().map(|m| m.name.as_str()).collect();
        Error::invalid("model", format!("unknown model `{name}`; valid names: {}", names.join(", ")))
    })
}

/// Per-model seed: the first eight bytes of SHA-256 over the master seed
/// (little endian) followed by the model name.
pub fn derive_seed(master: u64, name: &str) -> u64 {
    let mut h = Sha256::new();
    h.update(master.to_le_bytes());
    h.update(name.as_bytes());
    let digest = h.finalize();
    u64::from_le_bytes(digest[..8].try_into().expect("digest has 32 bytes"))
}

pub fn fingerprint(bytes: &[u8]) -> String {
    let digest = Sha256::digest(bytes);
    digest.iter().map(|b| format!("{b:02x}")).collect()
}

/// Split, normalization and windows for one lookback.
#[derive(Debug, Clone)]
pub struct PreparedData {
    pub stats: NormStats,
    pub train: WindowedDataset,
    pub test: WindowedDataset,
    /// Physical force targets of the test windows.
    pub test_targets: Vec<f64>,
    pub train_targets: Vec<f64>,
}

pub fn prepare(record: &BraceRecord, lookback: usize) -> Result<PreparedData> {
    let (train_half, test_half) = split_half(&record.displacement, &record.force)?;
    let stats = fit_norm(&train_half.displacement, &train_half.force)?;
    let train_ds = window(&train_half.displacement, &train_half.force, &stats, lookback)?;
    let test_ds = window(&test_half.displacement, &test_half.force, &stats, lookback)?;
    Ok(PreparedData {
        stats,
        train_targets: train_half.force.values()[lookback - 1..].to_vec(),
        test_targets: test_half.force.values()[lookback - 1..].to_vec(),
        train: train_ds,
        test: test_ds,
    })
}

/// Full single-model pipeline: prepare, initialize from the derived seed,
/// train, and score both halves in physical units.
pub fn fit_model(
    record: &BraceRecord,
    config: &ModelConfig,
    train_cfg: &TrainConfig,
) -> Result<(TrainedModel, TrainReport)> {
    config.validate()?;
    let data = prepare(record, config.lookback)?;
    let seed = derive_seed(train_cfg.seed, &config.name);
    let mut init_rng = ChaCha8Rng::seed_from_u64(seed);
    init_rng.set_stream(1);
    let net = NetworkParams::init(config.architecture(), &mut init_rng)?;
    let cfg = TrainConfig {
        seed,
        ..train_cfg.clone()
    };
    let (params, mut report) = train(&net, &data.train, &cfg)?;

    let physical = |ds: &WindowedDataset| -> Result<Vec<f64>> {
        Ok(predict_windows(&params, ds, cfg.execution)?
            .into_iter()
            .map(|v| data.stats.denormalize_y(v))
            .collect())
    };
    report.train_nrmse = nrmse(&physical(&data.train)?, &data.train_targets)?;
    report.test_nrmse = Some(nrmse(&physical(&data.test)?, &data.test_targets)?);
    Ok((TrainedModel::new(config.clone(), data.stats, params), report))
}

fn nrmse_or_diverged<S: Serializer>(v: &f64, s: S) -> std::result::Result<S::Ok, S::Error> {
    if v.is_finite() {
        s.serialize_f64(*v)
    } else {
        s.serialize_str("diverged")
    }
}

fn nrmse_cell(v: f64) -> String {
    if v.is_finite() {
        v.to_string()
    } else {
        "diverged".to_string()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SweepEntry {
    pub config: ModelConfig,
    pub param_count: usize,
    pub seed: u64,
    /// Percent; infinite when the model diverged.
    #[serde(serialize_with = "nrmse_or_diverged")]
    pub train_nrmse: f64,
    #[serde(serialize_with = "nrmse_or_diverged")]
    pub test_nrmse: f64,
    pub epochs_run: usize,
    pub wall_time_seconds: f64,
    pub loss_curve: Vec<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
}

impl SweepEntry {
    pub fn diverged(&self) -> bool {
        !self.test_nrmse.is_finite()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SweepReport {
    pub dataset_fingerprint: String,
    pub master_seed: u64,
    pub entries: Vec<SweepEntry>,
    /// Lowest test NRMSE, first in grid order on ties; `None` if all diverged.
    pub best_model: Option<String>,
}

impl SweepReport {
    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serialization is infallible")
    }

    pub fn write_summary_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        let csv_err = |e: csv::Error| Error::Format(e.to_string());
        w.write_record([
            "model", "neurons", "layers", "lookback", "train_nrmse", "test_nrmse", "epochs", "seconds",
        ])
        .map_err(csv_err)?;
        for e in &self.entries {
            w.write_record([
                e.config.name.clone(),
                e.config.neurons.to_string(),
                e.config.hidden_layers.to_string(),
                e.config.lookback.to_string(),
                nrmse_cell(e.train_nrmse),
                nrmse_cell(e.test_nrmse),
                e.epochs_run.to_string(),
                e.wall_time_seconds.to_string(),
            ])
            .map_err(csv_err)?;
        }
        w.flush().map_err(|e| Error::io("<summary csv>", e))
    }
}

#[derive(Debug, Clone, Copy, Default)]
pub struct SweepOptions {
    /// Keep measured wall times; otherwise they are written as 0 so that
    /// repeated runs produce identical artifacts.
    pub record_timing: bool,
    /// How the grid's models are spread; batch gradients follow the
    /// training config's own setting.
    pub execution: Execution,
}

pub struct SweepOutcome {
    pub report: SweepReport,
    /// Trained model per entry, `None` for diverged entries.
    pub models: Vec<Option<TrainedModel>>,
}

pub fn run_sweep(
    record: &BraceRecord,
    dataset_fingerprint: &str,
    grid: &[ModelConfig],
    cfg: &TrainConfig,
    options: SweepOptions,
) -> Result<SweepOutcome> {
    cfg.validate()?;
    if grid.is_empty() {
        return Err(Error::invalid("models", "grid must contain at least one model"));
    }
    let half = record.len() / 2;
    for m in grid {
        m.validate()?;
        if m.lookback > half {
            return Err(Error::invalid(
                "lookback",
                format!("{} uses lookback {} but half the series is {half} samples", m.name, m.lookback),
            ));
        }
    }

    let results = options.execution.map(grid, |m| fit_model(record, m, cfg));
    let mut entries = Vec::with_capacity(grid.len());
    let mut models = Vec::with_capacity(grid.len());
    for (m, res) in grid.iter().zip(results) {
        let param_count = NetworkParams::zeros(m.architecture())?.param_count();
        let seed = derive_seed(cfg.seed, &m.name);
        match res {
            Ok((model, report)) => {
                entries.push(SweepEntry {
                    config: m.clone(),
                    param_count,
                    seed,
                    train_nrmse: report.train_nrmse,
                    test_nrmse: report.test_nrmse.unwrap_or(f64::INFINITY),
                    epochs_run: report.epochs_run,
                    wall_time_seconds: if options.record_timing { report.wall_time_seconds } else { 0.0 },
                    loss_curve: report.loss_curve,
                    error: None,
                });
                models.push(Some(model));
            }
            Err(e) if e.is_divergence() => {
                entries.push(SweepEntry {
                    config: m.clone(),
                    param_count,
                    seed,
                    train_nrmse: f64::INFINITY,
                    test_nrmse: f64::INFINITY,
                    epochs_run: match e {
                        Error::TrainingDivergence { epoch, .. } => epoch,
                        _ => 0,
                    },
                    wall_time_seconds: 0.0,
                    loss_curve: vec![],
                    error: Some(e.to_string()),
                });
                models.push(None);
            }
            Err(e) => return Err(e),
        }
    }

    let best_model = entries
        .iter()
        .filter(|e| !e.diverged())
        .fold(None::<&SweepEntry>, |best, e| match best {
            Some(b) if b.test_nrmse <= e.test_nrmse => Some(b),
            _ => Some(e),
        })
        .map(|e| e.config.name.clone());

    Ok(SweepOutcome {
        report: SweepReport {
            dataset_fingerprint: dataset_fingerprint.to_string(),
            master_seed: cfg.seed,
            entries,
            best_model,
        },
        models,
    })
}

/// Reads an oracle CSV, fingerprints its bytes, and sweeps it.
pub fn run_sweep_csv(
    path: &Path,
    grid: &[ModelConfig],
    cfg: &TrainConfig,
    options: SweepOptions,
) -> Result<(BraceRecord, SweepOutcome)> {
    let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    let record = read_record(bytes.as_slice())?;
    let outcome = run_sweep(&record, &fingerprint(&bytes), grid, cfg, options)?;
    Ok((record, outcome))
}

/// Writes `t,displacement,force_true,force_pred,split` over the whole
/// record. The first `lookback - 1` rows have no prediction.
pub fn emit_predictions<W: Write>(
    predictor: &dyn Predictor,
    record: &BraceRecord,
    out: W,
) -> Result<()> {
    let lookback = predictor.lookback();
    let x = record.displacement.values();
    let y = record.force.values();
    let preds = predictor.predict_series(x)?;
    if preds.len() != x.len() + 1 - lookback {
        return Err(Error::Shape(format!(
            "predictor returned {} values for {} windows",
            preds.len(),
            x.len() + 1 - lookback
        )));
    }
    let cut = split_index(x.len());
    let mut w = csv::Writer::from_writer(out);
    let csv_err = |e: csv::Error| Error::Format(e.to_string());
    w.write_record(["t", "displacement", "force_true", "force_pred", "split"])
        .map_err(csv_err)?;
    for (i, t) in record.displacement.times().enumerate() {
        let pred = if i + 1 >= lookback {
            preds[i + 1 - lookback].to_string()
        } else {
            String::new()
        };
        w.write_record([
            t.to_string(),
            x[i].to_string(),
            y[i].to_string(),
            pred,
            if i < cut { "train" } else { "test" }.to_string(),
        ])
        .map_err(csv_err)?;
    }
    w.flush().map_err(|e| Error::io("<prediction csv>", e))
}
