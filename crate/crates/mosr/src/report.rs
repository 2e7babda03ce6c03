//! Run-artifact emission: metrics JSON, loss/confusion/grid/ablation CSVs,
//! split manifest, vocabulary, and the checkpoint — everything an
//! experiment produces, under one run directory named by config hash + seed.

use std::path::{Path, PathBuf};

use crate::checkpoint::{save_checkpoint, CheckpointExtras};
use crate::config::TrainConfig;
use crate::data::DatasetSplit;
use crate::error::{Error, Result};
use crate::train::{AblationReport, EvalReport, GridResult, StepLog, TrainOutcome};

pub fn run_dir(out_root: &Path, cfg: &TrainConfig) -> PathBuf {
    out_root.join(format!("{}-s{}", &cfg.hash()[..12], cfg.seed))
}

fn write_str(path: &Path, content: &str) -> Result<()> {
    std::fs::write(path, content).map_err(|e| Error::io(path, e))
}

pub fn write_metrics_json(path: &Path, report: &EvalReport) -> Result<()> {
    let json = serde_json::to_string_pretty(&report.metrics)
        .map_err(|e| Error::Schema(format!("metrics serialization: {e}")))?;
    write_str(path, &json)
}

pub fn write_loss_csv(path: &Path, steps: &[StepLog]) -> Result<()> {
    let mut w = csv::Writer::from_path(path).map_err(|e| Error::Schema(e.to_string()))?;
    w.write_record(["epoch", "step", "cls", "disc", "excl", "total", "rho", "sub_norm"])
        .map_err(|e| Error::Schema(e.to_string()))?;
    for s in steps {
        w.write_record([
            s.epoch.to_string(),
            s.step.to_string(),
            s.cls.to_string(),
            s.disc.to_string(),
            s.excl.to_string(),
            s.total.to_string(),
            s.rho.to_string(),
            s.sub_norm.to_string(),
        ])
        .map_err(|e| Error::Schema(e.to_string()))?;
    }
    w.flush().map_err(|e| Error::io(path, e))?;
    Ok(())
}

/// Header row carries the ground-truth family names; each data row is one
/// predicted family.
pub fn write_confusion_csv(path: &Path, confusion: &[Vec<u64>], names: &[String]) -> Result<()> {
    let mut w = csv::Writer::from_path(path).map_err(|e| Error::Schema(e.to_string()))?;
    let mut header = vec!["predicted".to_string()];
    header.extend(names.iter().cloned());
    w.write_record(&header).map_err(|e| Error::Schema(e.to_string()))?;
    for (i, row) in confusion.iter().enumerate() {
        let mut rec = vec![names[i].clone()];
        rec.extend(row.iter().map(|c| c.to_string()));
        w.write_record(&rec).map_err(|e| Error::Schema(e.to_string()))?;
    }
    w.flush().map_err(|e| Error::io(path, e))?;
    Ok(())
}

pub fn write_grid_csv(path: &Path, grid: &GridResult) -> Result<()> {
    let mut w = csv::Writer::from_path(path).map_err(|e| Error::Schema(e.to_string()))?;
    w.write_record(["alpha", "beta", "cls_acc", "det_acc", "mean"])
        .map_err(|e| Error::Schema(e.to_string()))?;
    for c in &grid.cells {
        w.write_record([
            c.alpha.to_string(),
            c.beta.to_string(),
            c.cls_acc.to_string(),
            c.det_acc.to_string(),
            c.mean.to_string(),
        ])
        .map_err(|e| Error::Schema(e.to_string()))?;
    }
    w.flush().map_err(|e| Error::io(path, e))?;
    Ok(())
}

pub fn write_ablation_csv(path: &Path, report: &AblationReport) -> Result<()> {
    let mut w = csv::Writer::from_path(path).map_err(|e| Error::Schema(e.to_string()))?;
    w.write_record(["modality", "cls_acc", "det_acc"])
        .map_err(|e| Error::Schema(e.to_string()))?;
    for row in &report.rows {
        let m = match row.modality {
            crate::config::Modalities::Image => "image",
            crate::config::Modalities::Sentence => "sentence",
            crate::config::Modalities::Both => "both",
        };
        w.write_record([
            m.to_string(),
            row.cls_acc.to_string(),
            row.det_acc.map(|d| d.to_string()).unwrap_or_default(),
        ])
        .map_err(|e| Error::Schema(e.to_string()))?;
    }
    w.flush().map_err(|e| Error::io(path, e))?;
    Ok(())
}

/// Write every artifact of a completed training run; returns the paths.
pub fn emit_run(
    dir: &Path,
    cfg: &TrainConfig,
    outcome: &mut TrainOutcome,
    report: &EvalReport,
    split: &DatasetSplit,
) -> Result<Vec<PathBuf>> {
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let mut written = Vec::new();

    let config_path = dir.join("config.json");
    write_str(&config_path, &cfg.to_json())?;
    written.push(config_path);

    let metrics_path = dir.join("metrics.json");
    write_metrics_json(&metrics_path, report)?;
    written.push(metrics_path);

    let loss_path = dir.join("loss.csv");
    write_loss_csv(&loss_path, &outcome.history.steps)?;
    written.push(loss_path);

    let confusion_path = dir.join("confusion.csv");
    write_confusion_csv(&confusion_path, &report.confusion, &report.family_names)?;
    written.push(confusion_path);

    let manifest_path = dir.join("split_manifest.json");
    let manifest_json = serde_json::to_string_pretty(&split.manifest)
        .map_err(|e| Error::Schema(format!("split manifest serialization: {e}")))?;
    write_str(&manifest_path, &manifest_json)?;
    written.push(manifest_path);

    if let Some(vocab) = &outcome.pipeline.vocab {
        let vocab_path = dir.join("vocab.json");
        write_str(&vocab_path, &vocab.to_json())?;
        written.push(vocab_path);
    }

    let ckpt_path = dir.join("checkpoint.ckpt");
    let extras = CheckpointExtras {
        config_hash: cfg.hash(),
        families: report.family_names.clone(),
        threshold_mode: cfg.threshold_mode,
        vocab: outcome.pipeline.vocab.clone(),
        split: Some(split.manifest.clone()),
        feature_stats: outcome.pipeline.stats.clone(),
        centroids: Some(outcome.centroids.clone()),
        thresholds: Some(outcome.thresholds.clone()),
    };
    save_checkpoint(&ckpt_path, &mut outcome.model, &extras)?;
    written.push(ckpt_path);

    Ok(written)
}
