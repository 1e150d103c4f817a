use std::fs::File;
use std::io::BufWriter;
use std::path::{Path, PathBuf};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use brace_lstm::lstm::{grad_check, grad_check_corrupted, Architecture, NetworkParams};
use brace_lstm::model::TrainedModel;
use brace_lstm::oracle::{generate_record, io, BoucWenParams};
use brace_lstm::sweep::{emit_predictions, find_model, fit_model, run_sweep_csv, SweepOptions};
use brace_lstm::training::write_loss_csv;

use crate::config::{check_input, check_output, require, ExperimentConfig};
use crate::{CliError, GenerateArgs, GradcheckArgs, PredictArgs, Specimen, SweepArgs, TrainArgs};

fn create(path: &Path) -> Result<BufWriter<File>, CliError> {
    File::create(path)
        .map(BufWriter::new)
        .map_err(|e| CliError::from(brace_lstm::Error::Io { path: path.to_path_buf(), source: e }))
}

fn write_text(path: &Path, text: &str) -> Result<(), CliError> {
    std::fs::write(path, text)
        .map_err(|e| CliError::from(brace_lstm::Error::Io { path: path.to_path_buf(), source: e }))
}

/// Model names as file stems: `"Model 3a"` -> `"model_3a"`.
fn slug(name: &str) -> String {
    name.trim()
        .chars()
        .map(|c| if c.is_ascii_alphanumeric() { c.to_ascii_lowercase() } else { '_' })
        .collect()
}

pub fn generate(mut cfg: ExperimentConfig, args: GenerateArgs) -> Result<(), CliError> {
    if let Some(dy) = args.delta_y {
        cfg.protocol.delta_y = dy;
        cfg.protocol.validate()?;
    }
    if let Some(s) = args.specimen {
        cfg.oracle = match s {
            Specimen::A => BoucWenParams::specimen_a(),
            Specimen::B => BoucWenParams::specimen_b(),
        };
    }
    let out = require(args.out.or(cfg.paths.data), "output CSV")?;
    check_output(&out)?;

    let record = generate_record(&cfg.protocol, &cfg.oracle)?;
    io::write_record_file(&record, &out)?;
    println!("samples: {}", record.len());
    println!(
        "peak displacement: {} / {}",
        record.displacement.max(),
        record.displacement.min()
    );
    println!("peak force: {} / {}", record.force.max(), record.force.min());
    println!("wrote {}", out.display());
    Ok(())
}

pub fn train(mut cfg: ExperimentConfig, args: TrainArgs) -> Result<(), CliError> {
    if let Some(seed) = args.seed {
        cfg.training.seed = seed;
    }
    if let Some(epochs) = args.epochs {
        cfg.training.max_epochs = epochs;
    }
    cfg.training.validate()?;
    let model_cfg = find_model(&cfg.models, &args.model)?.clone();
    let data = require(args.data.or(cfg.paths.data), "data CSV")?;
    let out = require(args.out.or(cfg.paths.model), "model output")?;
    let report_path = args
        .report
        .or(cfg.paths.report)
        .unwrap_or_else(|| out.with_extension("report.json"));
    let loss_path = report_path.with_extension("loss.csv");
    check_input(&data)?;
    for p in [&out, &report_path, &loss_path] {
        check_output(p)?;
    }

    let record = io::read_record_file(&data)?;
    let (model, mut report) = fit_model(&record, &model_cfg, &cfg.training)?;
    if !args.timing {
        report.wall_time_seconds = 0.0;
    }
    model.save(&out)?;
    let json = serde_json::to_string_pretty(&report).expect("report serialization is infallible");
    write_text(&report_path, &json)?;
    write_loss_csv(&report, create(&loss_path)?)?;
    println!("{json}");
    Ok(())
}

pub fn sweep(mut cfg: ExperimentConfig, args: SweepArgs) -> Result<(), CliError> {
    if let Some(seed) = args.seed {
        cfg.training.seed = seed;
    }
    if let Some(epochs) = args.epochs {
        cfg.training.max_epochs = epochs;
    }
    cfg.training.validate()?;
    let grid = if args.models.is_empty() {
        cfg.models.clone()
    } else {
        args.models
            .iter()
            .map(|n| find_model(&cfg.models, n).cloned())
            .collect::<Result<Vec<_>, _>>()?
    };
    let data = require(args.data.or(cfg.paths.data), "data CSV")?;
    let out_dir: PathBuf = require(args.out_dir.or(cfg.paths.out_dir), "output directory")?;
    check_input(&data)?;
    if !out_dir.is_dir() {
        return Err(CliError::config(format!(
            "output directory {} does not exist",
            out_dir.display()
        )));
    }

    let options = SweepOptions {
        record_timing: args.timing,
        ..SweepOptions::default()
    };
    let (record, outcome) = run_sweep_csv(&data, &grid, &cfg.training, options)?;
    let report = &outcome.report;
    write_text(&out_dir.join("sweep_report.json"), &report.to_json())?;
    report.write_summary_csv(create(&out_dir.join("summary.csv"))?)?;
    for (entry, model) in report.entries.iter().zip(&outcome.models) {
        let stem = slug(&entry.config.name);
        match model {
            Some(m) => {
                m.save(&out_dir.join(format!("{stem}.model.json")))?;
                let path = out_dir.join(format!("{stem}.predictions.csv"));
                emit_predictions(m, &record, create(&path)?)?;
                println!("{}: test NRMSE {:.3}%", entry.config.name, entry.test_nrmse);
            }
            None => println!("{}: diverged", entry.config.name),
        }
    }
    match &report.best_model {
        Some(best) => println!("best model: {best}"),
        None => println!("best model: none (every model diverged)"),
    }
    Ok(())
}

pub fn predict(cfg: ExperimentConfig, args: PredictArgs) -> Result<(), CliError> {
    let model_path = require(args.model.or(cfg.paths.model), "model file")?;
    let data = require(args.data.or(cfg.paths.data), "data CSV")?;
    let out = require(args.out.or(cfg.paths.predictions), "prediction output")?;
    check_input(&model_path)?;
    check_input(&data)?;
    check_output(&out)?;

    let model = TrainedModel::load(&model_path)?;
    let record = io::read_record_file(&data)?;
    emit_predictions(&model, &record, create(&out)?)?;
    println!("wrote {} rows to {}", record.len(), out.display());
    Ok(())
}

pub fn gradcheck(args: GradcheckArgs) -> Result<bool, CliError> {
    let arch = Architecture::new(1, args.hidden, args.layers);
    let mut rng = ChaCha8Rng::seed_from_u64(args.seed);
    let net = NetworkParams::init(arch, &mut rng)?;
    let window: Vec<f64> = (0..args.lookback).map(|_| rng.gen_range(-1.5..1.5)).collect();
    let target = rng.gen_range(-1.0..1.0);
    let err = if args.corrupt {
        grad_check_corrupted(&net, &window, args.lookback, target)?
    } else {
        grad_check(&net, &window, args.lookback, target)?
    };
    let pass = err <= args.tolerance;
    println!(
        "max relative error {err:.3e} over {} parameters (tolerance {:.0e}): {}",
        net.param_count(),
        args.tolerance,
        if pass { "PASS" } else { "FAIL" }
    );
    Ok(pass)
}
