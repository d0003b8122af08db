//! Training and evaluation of one learner on one simulated cell.

use std::io::Write;
use std::time::Instant;

use mdfeat_core::channel::Location;
use mdfeat_core::features::Scheme;
use mdfeat_core::rng::derive_seed;
use mdfeat_core::select::SelectionReport;
use mdfeat_core::{FeatureSet, NormalizationStats};
use mdfeat_nn::{knn_classify, predict_all, train, Branches, Fcl, Head, Label, Pnn, PnnConfig, PnnInput, Prediction};
use ndarray::Array1;
use serde::{Deserialize, Serialize};

use crate::config::{ExperimentConfig, Learner};
use crate::dataset::{generate_dataset, Dataset};
use crate::error::{config, Error, Result};
use crate::selection::run_size_selection;
use crate::zones::ZoneLayout;

const PREDICT_CHUNK: usize = 64;

/// Features of both splits, normalized with statistics of the training split.
pub struct Prepared {
    pub f: usize,
    pub scheme: Scheme,
    pub stats: NormalizationStats,
    pub train: Vec<FeatureSet>,
    pub test: Vec<FeatureSet>,
}

impl Prepared {
    pub fn new(train: &Dataset, test: &Dataset, f: usize, scheme: Scheme) -> Result<Self> {
        let train_sets = train.features(f, scheme)?;
        let stats = NormalizationStats::fit(&train_sets)?;
        Ok(Self { f, scheme, stats, train: train_sets, test: test.features(f, scheme)? })
    }

    pub fn flat(&self, sets: &[FeatureSet]) -> Vec<Vec<f64>> {
        sets.iter().map(|s| s.flatten_normalized(&self.stats)).collect()
    }
}

fn fcl_inputs(rows: Vec<Vec<f64>>) -> Vec<Array1<f32>> {
    rows.into_iter().map(|r| r.into_iter().map(|v| v as f32).collect()).collect()
}

fn pnn_inputs(sets: &[FeatureSet], stats: &NormalizationStats) -> Vec<PnnInput<f32>> {
    sets.iter()
        .map(|s| {
            let x = PnnInput::from_features(s, stats);
            PnnInput { image: x.image.mapv(|v| v as f32), e: x.e.mapv(|v| v as f32), b: x.b.mapv(|v| v as f32) }
        })
        .collect()
}

fn labels(ds: &Dataset) -> Vec<Label<f32>> {
    ds.samples.iter().map(|s| Label { zone: s.zone, coords: s.location.map(|v| v as f32) }).collect()
}

/// A fitted learner. Networks train in `f32`.
pub enum Trained {
    Fcl(Fcl<f32>),
    Pnn(Box<Pnn<f32>>),
    Knn { points: Vec<Vec<f64>>, zones: Vec<usize>, k: usize },
}

pub struct Fitted {
    pub model: Trained,
    pub loss_trace: Vec<f64>,
}

/// Trains `learner` on the training features. `branches` applies to the
/// P-NN only.
pub fn fit(
    cfg: &ExperimentConfig,
    prep: &Prepared,
    train_set: &Dataset,
    learner: Learner,
    branches: Branches,
    model_seed: u64,
) -> Result<Fitted> {
    let head = cfg.head();
    let ys = labels(train_set);
    match learner {
        Learner::Knn => {
            if cfg.knn_k > prep.train.len() {
                return config(format!("k = {} exceeds the {} training samples", cfg.knn_k, prep.train.len()));
            }
            let model = Trained::Knn { points: prep.flat(&prep.train), zones: train_set.zones(), k: cfg.knn_k };
            Ok(Fitted { model, loss_trace: Vec::new() })
        }
        Learner::Fcl => {
            let xs = fcl_inputs(prep.flat(&prep.train));
            let mut net = Fcl::new(xs[0].len(), head, model_seed);
            let loss_trace = train(&mut net, &xs, &ys, &cfg.training, model_seed)?;
            Ok(Fitted { model: Trained::Fcl(net), loss_trace })
        }
        Learner::Pnn => {
            let xs = pnn_inputs(&prep.train, &prep.stats);
            let mut pc = PnnConfig::new(train_set.header.sensors, train_set.header.bins, prep.f, head);
            pc.branches = branches;
            let mut net = Pnn::new(pc, model_seed)?;
            let loss_trace = train(&mut net, &xs, &ys, &cfg.training, model_seed)?;
            Ok(Fitted { model: Trained::Pnn(Box::new(net)), loss_trace })
        }
    }
}

/// One line of the predictions file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PredictionRow {
    pub id: u64,
    pub zone: usize,
    pub predicted: usize,
    pub location: [f64; 3],
    /// Estimated coordinates, regression only.
    pub estimate: Option<[f64; 3]>,
}

/// Zone of an estimated position; estimates outside the cylinder are pulled
/// back onto its rim.
pub fn zone_of_estimate(p: [f64; 3], layout: &ZoneLayout) -> usize {
    let r = p[0].hypot(p[1]);
    let s = if r > layout.d_r { layout.d_r / r } else { 1.0 };
    layout.zone_of(&Location::new(p[0] * s, p[1] * s, p[2])).expect("clipped into the cylinder")
}

pub fn predict(
    model: &Trained,
    prep: &Prepared,
    test_set: &Dataset,
    layout: &ZoneLayout,
) -> Result<Vec<PredictionRow>> {
    let preds: Vec<Prediction<f64>> = match model {
        Trained::Knn { points, zones, k } => prep
            .flat(&prep.test)
            .iter()
            .map(|q| Ok(Prediction::Zone { zone: knn_classify(points, zones, q, *k)?, probs: Vec::new() }))
            .collect::<Result<_>>()?,
        Trained::Fcl(net) => widen(predict_all(net, &fcl_inputs(prep.flat(&prep.test)), PREDICT_CHUNK)?),
        Trained::Pnn(net) => widen(predict_all(net.as_ref(), &pnn_inputs(&prep.test, &prep.stats), PREDICT_CHUNK)?),
    };
    Ok(test_set
        .samples
        .iter()
        .zip(preds)
        .map(|(s, p)| {
            let (predicted, estimate) = match p {
                Prediction::Zone { zone, .. } => (zone, None),
                Prediction::Coords(c) => (zone_of_estimate(c, layout), Some(c)),
            };
            PredictionRow { id: s.id, zone: s.zone, predicted, location: s.location, estimate }
        })
        .collect())
}

fn widen(p: Vec<Prediction<f32>>) -> Vec<Prediction<f64>> {
    p.into_iter()
        .map(|p| match p {
            Prediction::Zone { zone, probs } => {
                Prediction::Zone { zone, probs: probs.into_iter().map(f64::from).collect() }
            }
            Prediction::Coords(c) => Prediction::Coords(c.map(f64::from)),
        })
        .collect()
}

/// Metrics derived from a predictions file; nothing here is stored only in
/// the report.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub learner: Learner,
    pub scheme: Scheme,
    pub feature_size: usize,
    pub snr_db: f64,
    pub los: bool,
    pub d_train: usize,
    pub d_test: usize,
    pub classification_rate: f64,
    /// Root mean squared 3-D position error in metres, regression only.
    pub rmse: Option<f64>,
    /// `confusion[true][predicted]`.
    pub confusion: Vec<Vec<usize>>,
    pub final_loss: Option<f64>,
    /// Per-F criterion table, present when `F` was selected automatically.
    pub selection: Option<SelectionReport<f64>>,
}

pub fn classification_rate(rows: &[PredictionRow]) -> f64 {
    rows.iter().filter(|r| r.predicted == r.zone).count() as f64 / rows.len().max(1) as f64
}

pub fn rmse(rows: &[PredictionRow]) -> Option<f64> {
    let mut acc = 0.0;
    for r in rows {
        let e = r.estimate?;
        acc += (0..3).map(|i| (e[i] - r.location[i]).powi(2)).sum::<f64>();
    }
    Some((acc / rows.len().max(1) as f64).sqrt())
}

pub fn confusion(rows: &[PredictionRow], zones: usize) -> Vec<Vec<usize>> {
    let mut c = vec![vec![0; zones]; zones];
    for r in rows {
        c[r.zone][r.predicted] += 1;
    }
    c
}

/// Predictions as CSV: `id,zone,predicted` and, for regression, the
/// estimated coordinates.
pub fn write_predictions<W: Write>(mut w: W, rows: &[PredictionRow]) -> std::io::Result<()> {
    let regression = rows.iter().any(|r| r.estimate.is_some());
    if regression {
        writeln!(w, "id,zone,predicted,x,y,z,x_hat,y_hat,z_hat")?;
    } else {
        writeln!(w, "id,zone,predicted")?;
    }
    for r in rows {
        write!(w, "{},{},{}", r.id, r.zone, r.predicted)?;
        if let Some(e) = r.estimate {
            let l = r.location;
            write!(w, ",{},{},{},{},{},{}", l[0], l[1], l[2], e[0], e[1], e[2])?;
        }
        writeln!(w)?;
    }
    w.flush()
}

pub fn read_predictions(text: &str) -> Result<Vec<PredictionRow>> {
    let bad = |msg: String| Error::Format { what: "predictions", msg };
    let mut lines = text.lines();
    let header = lines.next().ok_or_else(|| bad("empty file".into()))?;
    let regression = header.split(',').count() == 9;
    lines
        .enumerate()
        .map(|(i, line)| {
            let cols: Vec<&str> = line.split(',').collect();
            if cols.len() != if regression { 9 } else { 3 } {
                return Err(bad(format!("line {}: {} columns", i + 2, cols.len())));
            }
            let num = |k: usize| cols[k].parse::<f64>().map_err(|e| bad(format!("line {}: {e}", i + 2)));
            let int = |k: usize| cols[k].parse::<u64>().map_err(|e| bad(format!("line {}: {e}", i + 2)));
            let (location, estimate) = if regression {
                ([num(3)?, num(4)?, num(5)?], Some([num(6)?, num(7)?, num(8)?]))
            } else {
                ([f64::NAN; 3], None)
            };
            Ok(PredictionRow { id: int(0)?, zone: int(1)? as usize, predicted: int(2)? as usize, location, estimate })
        })
        .collect()
}

/// Wall-clock seconds, kept out of the metrics so those stay reproducible.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct Timings {
    pub simulate_s: f64,
    pub select_s: f64,
    pub train_s: f64,
    pub predict_s: f64,
}

pub struct CellOutcome {
    pub metrics: MetricsReport,
    pub predictions: Vec<PredictionRow>,
    pub timings: Timings,
}

/// Seeds of repeat `r`: data from `cfg.seed`, the model from `cfg.model_seed`.
pub fn repeat_seeds(cfg: &ExperimentConfig, r: usize) -> (u64, u64) {
    (derive_seed(cfg.seed, &[r as u64]), derive_seed(cfg.model_seed, &[r as u64]))
}

/// Feature size of a cell: the configured one, or the selection criterion's
/// pick on the training split together with its report.
pub fn feature_size(cfg: &ExperimentConfig, train_set: &Dataset) -> Result<(usize, Option<SelectionReport<f64>>)> {
    match cfg.feature_size {
        Some(f) => Ok((f, None)),
        None => {
            let report = run_size_selection(train_set, &cfg.selection())?;
            let f = report.f_star.ok_or_else(|| Error::Config("size selection produced no F".into()))?;
            Ok((f, Some(report)))
        }
    }
}

/// Metrics of a finished cell.
pub fn summarize(
    cfg: &ExperimentConfig,
    meta: &ModelMeta,
    test_set: &Dataset,
    predictions: &[PredictionRow],
) -> MetricsReport {
    MetricsReport {
        learner: meta.learner,
        scheme: meta.scheme,
        feature_size: meta.feature_size,
        snr_db: test_set.header.setup.snr_db,
        los: test_set.header.setup.scenario.los_enabled,
        d_train: meta.d_train,
        d_test: test_set.len(),
        classification_rate: classification_rate(predictions),
        rmse: rmse(predictions),
        confusion: confusion(predictions, cfg.layout().num_zones()),
        final_loss: meta.loss_trace.last().copied(),
        selection: meta.selection.clone(),
    }
}

/// Everything besides the weights needed to rebuild and apply a model.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelMeta {
    pub learner: Learner,
    pub scheme: Scheme,
    pub feature_size: usize,
    pub stats: NormalizationStats,
    pub head: Head,
    pub d_train: usize,
    /// Input width of the fully connected baseline.
    pub inputs: usize,
    pub pnn: Option<PnnConfig>,
    pub knn_k: usize,
    pub loss_trace: Vec<f64>,
    pub selection: Option<SelectionReport<f64>>,
}

/// Chooses `F`, fits the learner and returns it with its metadata.
pub fn fit_cell(
    cfg: &ExperimentConfig,
    train_set: &Dataset,
    test_set: &Dataset,
    branches: Branches,
    model_seed: u64,
    timings: &mut Timings,
) -> Result<(Fitted, ModelMeta, Prepared)> {
    let t = Instant::now();
    let (f, selection) = feature_size(cfg, train_set)?;
    timings.select_s = t.elapsed().as_secs_f64();
    let prep = Prepared::new(train_set, test_set, f, cfg.scheme)?;
    let t = Instant::now();
    let fitted = fit(cfg, &prep, train_set, cfg.learner, branches, model_seed)?;
    timings.train_s = t.elapsed().as_secs_f64();
    let pnn = match &fitted.model {
        Trained::Pnn(net) => Some(net.config.clone()),
        _ => None,
    };
    let meta = ModelMeta {
        learner: cfg.learner,
        scheme: cfg.scheme,
        feature_size: f,
        stats: prep.stats,
        head: cfg.head(),
        d_train: train_set.len(),
        inputs: 2 * f * train_set.header.sensors,
        pnn,
        knn_k: cfg.knn_k,
        loss_trace: fitted.loss_trace.clone(),
        selection,
    };
    Ok((fitted, meta, prep))
}

/// Trains and tests the configured learner on already simulated splits.
pub fn evaluate_cell(
    cfg: &ExperimentConfig,
    train_set: &Dataset,
    test_set: &Dataset,
    branches: Branches,
    model_seed: u64,
) -> Result<CellOutcome> {
    let mut timings = Timings::default();
    let (fitted, meta, prep) = fit_cell(cfg, train_set, test_set, branches, model_seed, &mut timings)?;
    let t = Instant::now();
    let predictions = predict(&fitted.model, &prep, test_set, &cfg.layout())?;
    timings.predict_s = t.elapsed().as_secs_f64();
    let metrics = summarize(cfg, &meta, test_set, &predictions);
    Ok(CellOutcome { metrics, predictions, timings })
}

/// Simulates repeat `r` at `snr_db` and evaluates the configured learner.
pub fn run_cell(cfg: &ExperimentConfig, snr_db: f64, r: usize) -> Result<CellOutcome> {
    let (data_seed, model_seed) = repeat_seeds(cfg, r);
    let t = Instant::now();
    let (train_set, test_set) = generate_dataset(cfg, snr_db, data_seed)?;
    let simulate_s = t.elapsed().as_secs_f64();
    let mut out = evaluate_cell(cfg, &train_set, &test_set, Branches::ALL, model_seed)?;
    out.timings.simulate_s = simulate_s;
    Ok(out)
}

/// Mean classification rate over the repeats of every SNR cell.
pub fn run_experiment(cfg: &ExperimentConfig) -> Result<Vec<(f64, Vec<MetricsReport>)>> {
    cfg.validate()?;
    cfg.snr_db
        .iter()
        .map(|&snr| {
            let reports = (0..cfg.repeats).map(|r| Ok(run_cell(cfg, snr, r)?.metrics)).collect::<Result<Vec<_>>>()?;
            Ok((snr, reports))
        })
        .collect()
}

pub fn mean_rate(reports: &[MetricsReport]) -> f64 {
    reports.iter().map(|m| m.classification_rate).sum::<f64>() / reports.len().max(1) as f64
}
