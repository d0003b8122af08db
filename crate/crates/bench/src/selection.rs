//! Feature-size selection on a simulated training split.

use mdfeat_core::features::Scheme;
use mdfeat_core::select::{evaluate_range, kl_score, SelectionConfig, SelectionReport};
use mdfeat_core::{NormalizationStats, SelectionStats};
use serde::{Deserialize, Serialize};

use crate::dataset::Dataset;
use crate::error::{Error, Result};

/// Mean sorted profile of the training PDPs, the per-F quantities, the KL
/// score of every candidate `F` and the selected `F★`.
pub fn run_size_selection(train: &Dataset, cfg: &SelectionConfig) -> Result<SelectionReport<f64>> {
    let dof = train.header.setup.signal.dof()?;
    let stats = SelectionStats::from_pdps(train.samples.iter().flat_map(|s| s.pdps.iter()), dof)?;
    cfg.validate(stats.num_bins())?;
    let nz = train.header.setup.layout.num_zones();
    let kl = cfg
        .range()
        .map(|f| {
            let sets = train.features(f, Scheme::Proposed)?;
            let norm = NormalizationStats::fit(&sets)?;
            let mut zones = vec![Vec::new(); nz];
            for (s, fs) in train.samples.iter().zip(&sets) {
                zones[s.zone].push(fs.flatten_normalized(&norm));
            }
            Ok(kl_score(&zones, f, cfg.neighbors)?)
        })
        .collect::<Result<Vec<f64>>>()?;
    Ok(evaluate_range(&stats, cfg, Some(&kl))?)
}

/// Decade just below the largest mean bin energy, used to print tables.
pub fn table_unit(report: &SelectionReport<f64>) -> f64 {
    let top = report.rows.iter().map(|r| r.p_th.max(r.psi2)).fold(0.0, f64::max);
    if top > 0.0 {
        10f64.powf(top.log10().floor())
    } else {
        1.0
    }
}

/// Inputs of a replayed selection: mean sorted energies in units of `unit`
/// and an externally computed KL row, one entry per candidate `F`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Replay {
    pub energies: Vec<f64>,
    pub unit: f64,
    pub dof: f64,
    pub f_min: usize,
    pub f_max: usize,
    pub weight: f64,
    pub kl: Vec<f64>,
}

pub const EXAMPLE1: &str = include_str!("../data/example1.toml");

impl Replay {
    pub fn from_toml(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| Error::Format { what: "replay input", msg: e.to_string() })
    }

    pub fn run(&self) -> Result<SelectionReport<f64>> {
        let stats = SelectionStats::new(self.energies.iter().map(|e| e * self.unit).collect(), self.dof)?;
        // u only matters when the KL row is estimated here
        let cfg = SelectionConfig { f_min: self.f_min, f_max: self.f_max, weight: self.weight, neighbors: 1 };
        Ok(evaluate_range(&stats, &cfg, Some(&self.kl))?)
    }
}
