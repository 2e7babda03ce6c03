//! Command-line harness: train, eval, detect, grid, ablate, synth, plot.
//!
//! Outputs land under `$MOSR_OUT` (default `./runs`) in a directory named
//! by config hash + seed.

use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};

use mosr::checkpoint::load_checkpoint;
use mosr::config::{Modalities, TrainConfig};
use mosr::data::{
    gen_synthetic, load_jsonl, save_jsonl, split_known_unknown, JsonlSchema, SyntheticSpec,
};
use mosr::detector::{detect_embedding, detect_probability_baseline, ThresholdMode, Verdict};
use mosr::error::{Error, Result};
use mosr::report;
use mosr::train::{ablate, embed_all, evaluate_with_tables, grid_search, train, Pipeline};

#[derive(Parser)]
#[command(name = "mosr", about = "Multi-modal malware open-set recognition")]
struct Cli {
    #[command(subcommand)]
    command: Commands,
}

#[derive(Args, Clone)]
struct ConfigArgs {
    /// JSON config file; flags below override its fields.
    #[arg(long)]
    config: Option<PathBuf>,

    #[arg(long)]
    alpha: Option<f64>,

    #[arg(long)]
    beta: Option<f64>,

    #[arg(long)]
    lambda: Option<f64>,

    #[arg(long)]
    seed: Option<u64>,

    #[arg(long, value_enum)]
    threshold_mode: Option<ThresholdMode>,

    #[arg(long, value_enum)]
    modalities: Option<Modalities>,

    #[arg(long)]
    epochs: Option<usize>,

    #[arg(long)]
    lr: Option<f64>,

    #[arg(long)]
    batch_size: Option<usize>,

    /// Known-family count; families with id below this train the model.
    #[arg(long)]
    k_known: Option<usize>,

    #[arg(long)]
    image_h: Option<usize>,

    #[arg(long)]
    image_w: Option<usize>,

    #[arg(long)]
    l_max: Option<usize>,
}

impl ConfigArgs {
    fn resolve(&self) -> Result<TrainConfig> {
        let mut cfg = match &self.config {
            Some(path) => TrainConfig::load(path)?,
            None => {
                let k = self.k_known.ok_or_else(|| {
                    Error::Config("either --config or --k-known is required".into())
                })?;
                TrainConfig::with_k_known(k)
            }
        };
        if let Some(v) = self.alpha {
            cfg.alpha = v;
        }
        if let Some(v) = self.beta {
            cfg.beta = v;
        }
        if let Some(v) = self.lambda {
            cfg.lambda = v;
        }
        if let Some(v) = self.seed {
            cfg.seed = v;
        }
        if let Some(v) = self.threshold_mode {
            cfg.threshold_mode = v;
        }
        if let Some(v) = self.modalities {
            cfg.modalities = v;
        }
        if let Some(v) = self.epochs {
            cfg.epochs = v;
        }
        if let Some(v) = self.lr {
            cfg.learning_rate = v;
        }
        if let Some(v) = self.batch_size {
            cfg.batch_size = v;
        }
        if let Some(v) = self.k_known {
            cfg.k_known = v;
        }
        if let Some(v) = self.image_h {
            cfg.image_h = v;
        }
        if let Some(v) = self.image_w {
            cfg.image_w = v;
        }
        if let Some(v) = self.l_max {
            cfg.l_max = v;
        }
        cfg.validate()?;
        Ok(cfg)
    }
}

#[derive(Subcommand)]
enum Commands {
    /// Train a model on a JSONL dataset and emit all run artifacts.
    Train {
        /// Dataset file: one JSON record per line.
        #[arg(long)]
        data: PathBuf,
        #[command(flatten)]
        config: ConfigArgs,
    },
    /// Re-evaluate a checkpoint against its dataset.
    Eval {
        #[arg(long)]
        checkpoint: PathBuf,
        #[arg(long)]
        data: PathBuf,
        /// Where to write metrics.json / confusion.csv (default: stdout only).
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Classify + open-set verdict for every record in a file.
    Detect {
        #[arg(long)]
        checkpoint: PathBuf,
        #[arg(long)]
        data: PathBuf,
        /// Use the probability-threshold baseline rule instead of the
        /// distance rule, with this δ_p.
        #[arg(long)]
        baseline_delta_p: Option<f64>,
    },
    /// α/β sensitivity grid: 36 cells at 0.1 spacing.
    Grid {
        #[arg(long)]
        data: PathBuf,
        #[command(flatten)]
        config: ConfigArgs,
        #[arg(long, default_value_t = 30)]
        epochs_per_cell: usize,
    },
    /// Modality ablation: image-only, sentence-only, both.
    Ablate {
        #[arg(long)]
        data: PathBuf,
        #[command(flatten)]
        config: ConfigArgs,
    },
    /// Generate a synthetic multi-modal dataset.
    Synth {
        /// JSON file with the generator spec.
        #[arg(long)]
        spec: PathBuf,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        out: PathBuf,
    },
    /// Render SVG views of a run directory's CSV artifacts.
    Plot {
        #[arg(long)]
        run_dir: PathBuf,
    },
}

fn out_root() -> PathBuf {
    std::env::var_os("MOSR_OUT")
        .map(PathBuf::from)
        .unwrap_or_else(|| PathBuf::from("runs"))
}

fn load_and_split(data: &Path, cfg: &TrainConfig) -> Result<mosr::data::DatasetSplit> {
    let records = load_jsonl(data, &JsonlSchema::default())?;
    split_known_unknown(&records, cfg.k_known, cfg.train_fraction, cfg.seed)
}

fn main() {
    if let Err(e) = run() {
        eprintln!("error: {e}");
        std::process::exit(1);
    }
}

fn run() -> Result<()> {
    match Cli::parse().command {
        Commands::Train { data, config } => {
            let cfg = config.resolve()?;
            let split = load_and_split(&data, &cfg)?;
            let dir = report::run_dir(&out_root(), &cfg);
            println!("training: {} train / {} test known / {} test unknown → {}",
                split.train_known.len(), split.test_known.len(), split.test_unknown.len(), dir.display());
            let mut outcome = train(&cfg, &split)?;
            let eval = evaluate_with_tables(
                &outcome.model,
                &outcome.pipeline,
                &split,
                &outcome.centroids,
                &outcome.thresholds,
            )?;
            let files = report::emit_run(&dir, &cfg, &mut outcome, &eval, &split)?;
            for f in &files {
                println!("wrote {}", f.display());
            }
            print_metrics(&eval.metrics);
            Ok(())
        }
        Commands::Eval { checkpoint, data, out } => {
            let (model, extras) = load_checkpoint(&checkpoint)?;
            let records = load_jsonl(&data, &JsonlSchema::default())?;
            let manifest = extras.split.clone().ok_or_else(|| {
                Error::Checkpoint("checkpoint carries no split manifest".into())
            })?;
            let split = split_known_unknown(
                &records,
                manifest.k_known,
                manifest.train_fraction_permille as f64 / 1000.0,
                manifest.seed,
            )?;
            let pipeline = Pipeline {
                stats: extras.feature_stats.clone(),
                vocab: extras.vocab.clone(),
                modalities: model.cfg.modalities,
                image_h: model.cfg.image_h,
                image_w: model.cfg.image_w,
                l_max: model.cfg.l_max,
            };
            let centroids = extras.centroids.clone().ok_or_else(|| {
                Error::Checkpoint("checkpoint carries no centroid table".into())
            })?;
            let thresholds = extras.thresholds.clone().ok_or_else(|| {
                Error::Checkpoint("checkpoint carries no threshold table".into())
            })?;
            let eval = evaluate_with_tables(&model, &pipeline, &split, &centroids, &thresholds)?;
            if let Some(dir) = out {
                std::fs::create_dir_all(&dir).map_err(|e| Error::io(&dir, e))?;
                report::write_metrics_json(&dir.join("metrics.json"), &eval)?;
                report::write_confusion_csv(
                    &dir.join("confusion.csv"),
                    &eval.confusion,
                    &eval.family_names,
                )?;
            }
            print_metrics(&eval.metrics);
            Ok(())
        }
        Commands::Detect {
            checkpoint,
            data,
            baseline_delta_p,
        } => {
            let (model, extras) = load_checkpoint(&checkpoint)?;
            let records = load_jsonl(&data, &JsonlSchema::default())?;
            let pipeline = Pipeline {
                stats: extras.feature_stats.clone(),
                vocab: extras.vocab.clone(),
                modalities: model.cfg.modalities,
                image_h: model.cfg.image_h,
                image_w: model.cfg.image_w,
                l_max: model.cfg.l_max,
            };
            let centroids = extras.centroids.clone().ok_or_else(|| {
                Error::Checkpoint("checkpoint carries no centroid table".into())
            })?;
            let thresholds = extras.thresholds.clone().ok_or_else(|| {
                Error::Checkpoint("checkpoint carries no threshold table".into())
            })?;
            let t = pipeline.tensorize(&records)?;
            let z = embed_all(&model, &t)?;
            let logits = model.class_logits(&z);
            let probs = model.class_probs(&z);
            for i in 0..z.rows {
                let r = match baseline_delta_p {
                    Some(dp) => detect_probability_baseline(probs.row(i), dp),
                    None => detect_embedding(z.row(i), logits.row(i), &centroids, &thresholds),
                };
                let verdict = match r.verdict {
                    Verdict::Known(k) => extras
                        .families
                        .get(k)
                        .cloned()
                        .unwrap_or_else(|| format!("family_{k}")),
                    Verdict::Unknown => "UNKNOWN".to_string(),
                };
                println!(
                    "{{\"index\":{},\"verdict\":\"{}\",\"tentative\":{},\"distance\":{}}}",
                    i, verdict, r.tentative_family, r.distance
                );
            }
            Ok(())
        }
        Commands::Grid {
            data,
            config,
            epochs_per_cell,
        } => {
            let cfg = config.resolve()?;
            let split = load_and_split(&data, &cfg)?;
            let grid = grid_search(&cfg, &split, epochs_per_cell)?;
            let dir = report::run_dir(&out_root(), &cfg);
            std::fs::create_dir_all(&dir).map_err(|e| Error::io(&dir, e))?;
            let path = dir.join("grid.csv");
            report::write_grid_csv(&path, &grid)?;
            println!("wrote {}", path.display());
            for c in &grid.cells {
                println!(
                    "alpha={:.1} beta={:.1} cls={:.4} det={:.4} mean={:.4}",
                    c.alpha, c.beta, c.cls_acc, c.det_acc, c.mean
                );
            }
            Ok(())
        }
        Commands::Ablate { data, config } => {
            let cfg = config.resolve()?;
            let split = load_and_split(&data, &cfg)?;
            let ablation = ablate(&cfg, &split)?;
            let dir = report::run_dir(&out_root(), &cfg);
            std::fs::create_dir_all(&dir).map_err(|e| Error::io(&dir, e))?;
            let path = dir.join("ablation.csv");
            report::write_ablation_csv(&path, &ablation)?;
            println!("wrote {}", path.display());
            for row in &ablation.rows {
                println!(
                    "{:?}: cls_acc={:.4} det_acc={}",
                    row.modality,
                    row.cls_acc,
                    row.det_acc.map(|d| format!("{d:.4}")).unwrap_or_else(|| "-".into())
                );
            }
            Ok(())
        }
        Commands::Synth { spec, seed, out } => {
            let text = std::fs::read_to_string(&spec).map_err(|e| Error::io(&spec, e))?;
            let spec: SyntheticSpec = serde_json::from_str(&text)
                .map_err(|e| Error::Config(format!("synthetic spec json: {e}")))?;
            let records = gen_synthetic(&spec, seed)?;
            save_jsonl(&out, &records)?;
            println!("wrote {} records to {}", records.len(), out.display());
            Ok(())
        }
        Commands::Plot { run_dir } => {
            let mut rendered = 0;
            let loss_path = run_dir.join("loss.csv");
            if loss_path.exists() {
                let steps = read_loss_csv(&loss_path)?;
                let svg = mosr::plot::loss_svg(&steps);
                let out = run_dir.join("loss.svg");
                std::fs::write(&out, svg).map_err(|e| Error::io(&out, e))?;
                println!("wrote {}", out.display());
                rendered += 1;
            }
            let grid_path = run_dir.join("grid.csv");
            if grid_path.exists() {
                let grid = read_grid_csv(&grid_path)?;
                let svg = mosr::plot::grid_svg(&grid);
                let out = run_dir.join("grid.svg");
                std::fs::write(&out, svg).map_err(|e| Error::io(&out, e))?;
                println!("wrote {}", out.display());
                rendered += 1;
            }
            let confusion_path = run_dir.join("confusion.csv");
            if confusion_path.exists() {
                let (confusion, names) = read_confusion_csv(&confusion_path)?;
                let svg = mosr::plot::confusion_svg(&confusion, &names);
                let out = run_dir.join("confusion.svg");
                std::fs::write(&out, svg).map_err(|e| Error::io(&out, e))?;
                println!("wrote {}", out.display());
                rendered += 1;
            }
            if rendered == 0 {
                return Err(Error::Input(format!(
                    "no plottable CSVs found in {}",
                    run_dir.display()
                )));
            }
            Ok(())
        }
    }
}

fn print_metrics(m: &mosr::train::Metrics) {
    println!("cls_acc = {:.4}", m.cls_acc);
    if let Some(d) = &m.detection {
        println!(
            "tpr = {:.4}  tnr = {:.4}  det_acc = {:.4}",
            d.tpr, d.tnr, d.det_acc
        );
        if let Some(b) = &d.baseline {
            println!(
                "probability baseline: best delta_p = {:.2} → det_acc = {:.4}",
                b.best_delta_p, b.det_acc
            );
        }
    }
}

fn read_loss_csv(path: &Path) -> Result<Vec<mosr::train::StepLog>> {
    let mut rdr = csv::Reader::from_path(path).map_err(|e| Error::Schema(e.to_string()))?;
    let mut steps = Vec::new();
    for rec in rdr.records() {
        let rec = rec.map_err(|e| Error::Schema(e.to_string()))?;
        let get = |i: usize| -> Result<f64> {
            rec.get(i)
                .and_then(|s| s.parse().ok())
                .ok_or_else(|| Error::Schema(format!("bad loss.csv field {i}")))
        };
        steps.push(mosr::train::StepLog {
            epoch: get(0)? as usize,
            step: get(1)? as usize,
            cls: get(2)?,
            disc: get(3)?,
            excl: get(4)?,
            total: get(5)?,
            rho: get(6)?,
            sub_norm: get(7)?,
        });
    }
    Ok(steps)
}

fn read_grid_csv(path: &Path) -> Result<mosr::train::GridResult> {
    let mut rdr = csv::Reader::from_path(path).map_err(|e| Error::Schema(e.to_string()))?;
    let mut cells = Vec::new();
    for rec in rdr.records() {
        let rec = rec.map_err(|e| Error::Schema(e.to_string()))?;
        let get = |i: usize| -> Result<f64> {
            rec.get(i)
                .and_then(|s| s.parse().ok())
                .ok_or_else(|| Error::Schema(format!("bad grid.csv field {i}")))
        };
        cells.push(mosr::train::GridCell {
            alpha: get(0)?,
            beta: get(1)?,
            cls_acc: get(2)?,
            det_acc: get(3)?,
            mean: get(4)?,
        });
    }
    Ok(mosr::train::GridResult { cells })
}

fn read_confusion_csv(path: &Path) -> Result<(Vec<Vec<u64>>, Vec<String>)> {
    let mut rdr = csv::Reader::from_path(path).map_err(|e| Error::Schema(e.to_string()))?;
    let names: Vec<String> = rdr
        .headers()
        .map_err(|e| Error::Schema(e.to_string()))?
        .iter()
        .skip(1)
        .map(|s| s.to_string())
        .collect();
    let mut rows = Vec::new();
    for rec in rdr.records() {
        let rec = rec.map_err(|e| Error::Schema(e.to_string()))?;
        let row: Vec<u64> = rec
            .iter()
            .skip(1)
            .map(|s| s.parse().unwrap_or(0))
            .collect();
        rows.push(row);
    }
    Ok((rows, names))
}
