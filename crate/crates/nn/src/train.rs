use mdfeat_core::rng::{derive_seed, rng_from_seed, tag};
use mdfeat_core::{Error, Real, Result};
use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use crate::adam::Adam;
use crate::model::{Head, Label, Model};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub lr: f64,
    pub epochs: usize,
    pub batch_size: usize,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self { lr: 1e-3, epochs: 50, batch_size: 256 }
    }
}

fn check_dataset<T: Real>(head: Head, n_inputs: usize, labels: &[Label<T>]) -> Result<()> {
    if n_inputs == 0 {
        return Err(Error::Input("empty training set".into()));
    }
    if n_inputs != labels.len() {
        return Err(Error::Input(format!("{n_inputs} inputs but {} labels", labels.len())));
    }
    if let Head::Classification { zones } = head {
        if let Some(l) = labels.iter().find(|l| l.zone >= zones) {
            return Err(Error::Input(format!("zone {} out of range for {zones} zones", l.zone)));
        }
        if labels.iter().all(|l| l.zone == labels[0].zone) {
            return Err(Error::Input("training set holds a single class".into()));
        }
    }
    Ok(())
}

/// Mini-batch Adam. Batches are reshuffled every epoch from `seed`; the last
/// partial batch is kept. Returns the mean batch loss of every epoch.
pub fn train<T: Real, M: Model<T>>(
    model: &mut M,
    inputs: &[M::Input],
    labels: &[Label<T>],
    cfg: &TrainConfig,
    seed: u64,
) -> Result<Vec<f64>> {
    check_dataset(model.head(), inputs.len(), labels)?;
    if cfg.batch_size == 0 || cfg.lr.is_nan() || cfg.lr <= 0.0 {
        return Err(Error::Config(format!(
            "batch size {} and learning rate {} must be positive",
            cfg.batch_size, cfg.lr
        )));
    }
    let mut opt = Adam::new(cfg.lr);
    let mut order: Vec<usize> = (0..inputs.len()).collect();
    let mut trace = Vec::with_capacity(cfg.epochs);
    for epoch in 0..cfg.epochs {
        order.sort_unstable();
        order.shuffle(&mut rng_from_seed(derive_seed(seed, &[tag::SHUFFLE, epoch as u64])));
        let mut total = 0.0;
        let mut batches = 0;
        for chunk in order.chunks(cfg.batch_size) {
            let xs: Vec<&M::Input> = chunk.iter().map(|&i| &inputs[i]).collect();
            let ys: Vec<&Label<T>> = chunk.iter().map(|&i| &labels[i]).collect();
            model.zero_grad();
            let loss = model.accumulate(&xs, &ys)?.to_f64_lossy();
            if !loss.is_finite() {
                return Err(Error::Domain(format!("training loss became {loss} in epoch {epoch}")));
            }
            opt.step(model.params());
            total += loss;
            batches += 1;
        }
        trace.push(total / batches as f64);
    }
    Ok(trace)
}

/// Mean loss over a dataset, evaluated in chunks without touching the
/// parameters' values.
pub fn evaluate_loss<T: Real, M: Model<T>>(
    model: &mut M,
    inputs: &[M::Input],
    labels: &[Label<T>],
    chunk: usize,
) -> Result<f64> {
    check_dataset(model.head(), inputs.len(), labels)?;
    let mut total = 0.0;
    for (xs, ys) in inputs.chunks(chunk.max(1)).zip(labels.chunks(chunk.max(1))) {
        let xs: Vec<&M::Input> = xs.iter().collect();
        let ys: Vec<&Label<T>> = ys.iter().collect();
        let out = model.outputs(&xs)?;
        let (loss, _) = crate::model::head_loss(model.head(), out.view(), &ys)?;
        total += loss.to_f64_lossy() * xs.len() as f64;
    }
    Ok(total / inputs.len() as f64)
}

/// Predictions for a whole dataset in chunks.
pub fn predict_all<T: Real, M: Model<T>>(
    model: &M,
    inputs: &[M::Input],
    chunk: usize,
) -> Result<Vec<crate::model::Prediction<T>>> {
    let mut out = Vec::with_capacity(inputs.len());
    for xs in inputs.chunks(chunk.max(1)) {
        let xs: Vec<&M::Input> = xs.iter().collect();
        out.extend(model.predict(&xs)?);
    }
    Ok(out)
}
