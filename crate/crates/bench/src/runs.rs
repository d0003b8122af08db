//! Run directories. `simulate`, `train` and `evaluate` communicate through
//! files under `cfg.out`:
//!
//! ```text
//! config.toml
//! snr<dB>/rep<r>/{train,test}.mdfd    datasets
//! snr<dB>/rep<r>/model.mdfm           fitted model
//! snr<dB>/rep<r>/predictions.csv
//! snr<dB>/rep<r>/metrics.json
//! snr<dB>/rep<r>/timings.json         wall-clock, not reproducible
//! metrics.json                        per-SNR means over the repeats
//! ```

use std::fs::{self, File};
use std::io::{BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::time::Instant;

use mdfeat_core::select::SelectionReport;
use mdfeat_nn::checkpoint;
use mdfeat_nn::{Branches, Fcl, ParamRef, Parameters, Pnn};
use serde::{Deserialize, Serialize};

use crate::ablation::{ablation, AblationReport, VARIANTS};
use crate::config::{ExperimentConfig, Learner};
use crate::dataset::{generate_dataset, Dataset, Split};
use crate::error::{io_at, Error, Result};
use crate::experiment::{
    fit_cell, predict, repeat_seeds, summarize, write_predictions, MetricsReport, ModelMeta, Prepared, Timings, Trained,
};
use crate::selection::{run_size_selection, table_unit};

pub fn cell_dir(cfg: &ExperimentConfig, snr_db: f64, r: usize) -> PathBuf {
    cfg.out.join(format!("snr{snr_db}")).join(format!("rep{r}"))
}

fn cells(cfg: &ExperimentConfig) -> impl Iterator<Item = (f64, usize)> + '_ {
    cfg.snr_db.iter().flat_map(move |&s| (0..cfg.repeats).map(move |r| (s, r)))
}

fn create_dir(p: &Path) -> Result<()> {
    fs::create_dir_all(p).map_err(io_at(p))
}

fn write_file(path: &Path, bytes: &[u8]) -> Result<()> {
    fs::write(path, bytes).map_err(io_at(path))
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value).expect("serializable");
    text.push('\n');
    write_file(path, text.as_bytes())
}

fn read_json<T: for<'de> Deserialize<'de>>(path: &Path) -> Result<T> {
    let text = fs::read_to_string(path).map_err(io_at(path))?;
    serde_json::from_str(&text)
        .map_err(|e| Error::Format { what: "JSON file", msg: format!("{}: {e}", path.display()) })
}

fn load_split(dir: &Path, split: Split) -> Result<Dataset> {
    let path = dir.join(split.file_name());
    if !path.exists() {
        return Err(Error::Config(format!("{} is missing; run `simulate` first", path.display())));
    }
    Dataset::load(&path)
}

/// Writes the effective configuration and the datasets of every cell.
pub fn simulate(cfg: &ExperimentConfig) -> Result<()> {
    cfg.validate()?;
    create_dir(&cfg.out)?;
    write_file(&cfg.out.join("config.toml"), cfg.to_toml().as_bytes())?;
    for (snr, r) in cells(cfg) {
        let dir = cell_dir(cfg, snr, r);
        create_dir(&dir)?;
        let (train, test) = generate_dataset(cfg, snr, repeat_seeds(cfg, r).0)?;
        train.save(&dir.join(Split::Train.file_name()))?;
        test.save(&dir.join(Split::Test.file_name()))?;
    }
    Ok(())
}

/// Runs the size-selection criterion on every training split and writes the
/// per-F table (`selection.txt`) and report (`selection.json`).
pub fn select_size(cfg: &ExperimentConfig) -> Result<Vec<(f64, usize, SelectionReport<f64>)>> {
    cfg.validate()?;
    let sel = cfg.selection();
    cells(cfg)
        .map(|(snr, r)| {
            let dir = cell_dir(cfg, snr, r);
            let report = run_size_selection(&load_split(&dir, Split::Train)?, &sel)?;
            let mut table = Vec::new();
            report.write_table(&mut table, table_unit(&report)).expect("in-memory write");
            write_file(&dir.join("selection.txt"), &table)?;
            write_json(&dir.join("selection.json"), &report)?;
            Ok((snr, r, report))
        })
        .collect()
}

/// Stand-in parameter list for the KNN baseline, which stores no weights.
struct NoWeights;

impl Parameters<f32> for NoWeights {
    fn params(&mut self) -> Vec<ParamRef<'_, f32>> {
        Vec::new()
    }
}

const MODEL_FILE: &str = "model.mdfm";

fn save_model(path: &Path, model: &mut Trained, meta: &ModelMeta, seed: u64) -> Result<()> {
    let file = File::create(path).map_err(io_at(path))?;
    let mut w = BufWriter::new(file);
    let kind = meta.learner.to_string();
    match model {
        Trained::Fcl(net) => checkpoint::save(&mut w, &kind, meta, seed, net)?,
        Trained::Pnn(net) => checkpoint::save(&mut w, &kind, meta, seed, net.as_mut())?,
        Trained::Knn { .. } => checkpoint::save(&mut w, &kind, meta, seed, &mut NoWeights)?,
    }
    w.flush().map_err(io_at(path))
}

/// Rebuilds a model; the KNN baseline gets its points from `train_points`.
fn load_model(
    path: &Path,
    train_points: impl FnOnce(&ModelMeta) -> Result<(Vec<Vec<f64>>, Vec<usize>)>,
) -> Result<(Trained, ModelMeta)> {
    let file = File::open(path).map_err(io_at(path))?;
    let mut r = BufReader::new(file);
    let header = checkpoint::read_header::<ModelMeta, _>(&mut r)?;
    let meta = header.config.clone();
    let model = match meta.learner {
        Learner::Fcl => {
            let mut net = Fcl::new(meta.inputs, meta.head, header.seed);
            checkpoint::load_params(&mut r, &header, &mut net)?;
            Trained::Fcl(net)
        }
        Learner::Pnn => {
            let config = meta
                .pnn
                .clone()
                .ok_or_else(|| Error::Format { what: "model file", msg: "P-NN without its configuration".into() })?;
            let mut net = Pnn::new(config, header.seed)?;
            checkpoint::load_params(&mut r, &header, &mut net)?;
            Trained::Pnn(Box::new(net))
        }
        Learner::Knn => {
            checkpoint::load_params(&mut r, &header, &mut NoWeights)?;
            let (points, zones) = train_points(&meta)?;
            Trained::Knn { points, zones, k: meta.knn_k }
        }
    };
    Ok((model, meta))
}

/// Fits the configured learner on every cell and writes `model.mdfm`.
pub fn train(cfg: &ExperimentConfig) -> Result<()> {
    cfg.validate()?;
    for (snr, r) in cells(cfg) {
        let dir = cell_dir(cfg, snr, r);
        let (train, test) = (load_split(&dir, Split::Train)?, load_split(&dir, Split::Test)?);
        let model_seed = repeat_seeds(cfg, r).1;
        let mut timings = Timings::default();
        let (mut fitted, meta, _) = fit_cell(cfg, &train, &test, Branches::ALL, model_seed, &mut timings)?;
        save_model(&dir.join(MODEL_FILE), &mut fitted.model, &meta, model_seed)?;
        write_json(&dir.join("timings.json"), &timings)?;
    }
    Ok(())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SnrSummary {
    pub snr_db: f64,
    pub rates: Vec<f64>,
    pub mean_rate: f64,
    pub mean_rmse: Option<f64>,
}

/// Applies every stored model to its test split; writes predictions and
/// metrics per cell and the per-SNR summary.
pub fn evaluate(cfg: &ExperimentConfig) -> Result<Vec<SnrSummary>> {
    cfg.validate()?;
    let mut summary: Vec<SnrSummary> = Vec::new();
    for (snr, r) in cells(cfg) {
        let dir = cell_dir(cfg, snr, r);
        let test = load_split(&dir, Split::Test)?;
        let (model, meta) = load_model(&dir.join(MODEL_FILE), |meta| {
            let train = load_split(&dir, Split::Train)?;
            let sets = train.features(meta.feature_size, meta.scheme)?;
            Ok((sets.iter().map(|s| s.flatten_normalized(&meta.stats)).collect(), train.zones()))
        })?;
        let prep = Prepared {
            f: meta.feature_size,
            scheme: meta.scheme,
            stats: meta.stats,
            train: Vec::new(),
            test: test.features(meta.feature_size, meta.scheme)?,
        };
        let t = Instant::now();
        let rows = predict(&model, &prep, &test, &cfg.layout())?;
        let predict_s = t.elapsed().as_secs_f64();
        let metrics = summarize(cfg, &meta, &test, &rows);
        let path = dir.join("predictions.csv");
        write_predictions(BufWriter::new(File::create(&path).map_err(io_at(&path))?), &rows).map_err(io_at(&path))?;
        write_json(&dir.join("metrics.json"), &metrics)?;
        let tpath = dir.join("timings.json");
        let mut timings: Timings = if tpath.exists() { read_json(&tpath)? } else { Timings::default() };
        timings.predict_s = predict_s;
        write_json(&tpath, &timings)?;
        match summary.iter_mut().find(|s| s.snr_db == snr) {
            Some(s) => push(s, &metrics),
            None => {
                let mut s = SnrSummary { snr_db: snr, rates: Vec::new(), mean_rate: 0.0, mean_rmse: None };
                push(&mut s, &metrics);
                summary.push(s);
            }
        }
    }
    write_json(&cfg.out.join("metrics.json"), &summary)?;
    Ok(summary)
}

fn push(s: &mut SnrSummary, m: &MetricsReport) {
    let n = s.rates.len() as f64;
    s.rates.push(m.classification_rate);
    s.mean_rate = (s.mean_rate * n + m.classification_rate) / (n + 1.0);
    s.mean_rmse = match (s.mean_rmse, m.rmse) {
        (None, Some(e)) if n == 0.0 => Some(e),
        (Some(a), Some(e)) => Some((a * n + e) / (n + 1.0)),
        _ => None,
    };
}

/// Runs the ablation for every SNR and writes `ablation.json`.
pub fn ablate(cfg: &ExperimentConfig) -> Result<Vec<AblationReport>> {
    cfg.validate()?;
    create_dir(&cfg.out)?;
    let reports = cfg.snr_db.iter().map(|&snr| ablation(cfg, snr, &VARIANTS)).collect::<Result<Vec<_>>>()?;
    write_json(&cfg.out.join("ablation.json"), &reports)?;
    Ok(reports)
}
