//! P-NN branch ablation under matched data and model seeds.

use mdfeat_nn::Branches;
use serde::{Deserialize, Serialize};

use crate::config::{ExperimentConfig, Learner};
use crate::dataset::generate_dataset;
use crate::error::Result;
use crate::experiment::{evaluate_cell, repeat_seeds};

const fn b(dp: bool, si: bool, sa: bool) -> Branches {
    Branches { dp, si, sa }
}

pub const VARIANTS: [Branches; 5] =
    [b(true, false, false), b(false, true, false), b(true, true, false), b(false, true, true), Branches::ALL];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AblationRow {
    pub variant: String,
    pub branches: Branches,
    /// Classification rate of every repeat.
    pub rates: Vec<f64>,
    pub mean: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AblationReport {
    pub snr_db: f64,
    pub los: bool,
    pub feature_sizes: Vec<usize>,
    pub rows: Vec<AblationRow>,
}

impl AblationReport {
    pub fn mean_of(&self, branches: Branches) -> Option<f64> {
        self.rows.iter().find(|r| r.branches == branches).map(|r| r.mean)
    }
}

/// Every variant sees the same splits and the same model seed in each repeat.
pub fn ablation(cfg: &ExperimentConfig, snr_db: f64, variants: &[Branches]) -> Result<AblationReport> {
    let cfg = ExperimentConfig { learner: Learner::Pnn, ..cfg.clone() };
    cfg.validate()?;
    let mut rates = vec![Vec::with_capacity(cfg.repeats); variants.len()];
    let mut feature_sizes = Vec::new();
    for r in 0..cfg.repeats {
        let (data_seed, model_seed) = repeat_seeds(&cfg, r);
        let (train, test) = generate_dataset(&cfg, snr_db, data_seed)?;
        for (i, &v) in variants.iter().enumerate() {
            let out = evaluate_cell(&cfg, &train, &test, v, model_seed)?;
            if i == 0 {
                feature_sizes.push(out.metrics.feature_size);
            }
            rates[i].push(out.metrics.classification_rate);
        }
    }
    let rows = variants
        .iter()
        .zip(rates)
        .map(|(&v, rates)| AblationRow {
            variant: v.label(),
            branches: v,
            mean: rates.iter().sum::<f64>() / rates.len() as f64,
            rates,
        })
        .collect();
    Ok(AblationReport { snr_db, los: cfg.los, feature_sizes, rows })
}
