//! Angular-radial zones of the target cylinder.

use std::f64::consts::TAU;

use mdfeat_core::channel::Location;
use mdfeat_core::Real;
use serde::{Deserialize, Serialize};

use crate::error::{config, Result};

/// `n_angular` equal sectors starting at angle 0, each split into `n_radial`
/// equal-width rings out to `d_r`. Zone `ρ = angular · n_radial + radial`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ZoneLayout {
    pub n_angular: usize,
    pub n_radial: usize,
    pub d_r: f64,
}

impl ZoneLayout {
    pub fn new(n_angular: usize, n_radial: usize, d_r: f64) -> Result<Self> {
        let layout = Self { n_angular, n_radial, d_r };
        layout.validate()?;
        Ok(layout)
    }

    pub fn validate(&self) -> Result<()> {
        if self.n_angular == 0 || self.n_radial == 0 {
            return config(format!("zone grid {} x {} is empty", self.n_angular, self.n_radial));
        }
        if !(self.d_r > 0.0 && self.d_r.is_finite()) {
            return config(format!("zone radius {} must be positive", self.d_r));
        }
        Ok(())
    }

    pub fn num_zones(&self) -> usize {
        self.n_angular * self.n_radial
    }

    pub fn zone_of<T: Real>(&self, p: &Location<T>) -> Result<usize> {
        zone_of(p, self)
    }

    /// Angular and radial index of zone `rho`.
    pub fn split(&self, rho: usize) -> (usize, usize) {
        (rho / self.n_radial, rho % self.n_radial)
    }
}

pub fn zone_of<T: Real>(p: &Location<T>, layout: &ZoneLayout) -> Result<usize> {
    let (x, y) = (p.x.to_f64_lossy(), p.y.to_f64_lossy());
    let r = x.hypot(y);
    if !r.is_finite() || r > layout.d_r {
        return Err(mdfeat_core::Error::Input(format!(
            "point at radius {r} lies outside the {} m cylinder",
            layout.d_r
        ))
        .into());
    }
    let mut theta = y.atan2(x);
    if theta < 0.0 {
        theta += TAU;
    }
    let n_a = layout.n_angular;
    let angular = ((theta / (TAU / n_a as f64)) as usize).min(n_a - 1);
    let radial = ((r / layout.d_r * layout.n_radial as f64) as usize).min(layout.n_radial - 1);
    Ok(angular * layout.n_radial + radial)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn worked_point() {
        let l = ZoneLayout::new(4, 2, 10.0).unwrap();
        let a = 10f64.to_radians();
        let p = Location::new(8.0 * a.cos(), 8.0 * a.sin(), 0.0);
        assert_eq!(l.zone_of(&p).unwrap(), 1);
        assert_eq!(l.split(1), (0, 1));
    }

    #[test]
    fn edges() {
        let l = ZoneLayout::new(4, 2, 10.0).unwrap();
        assert_eq!(l.zone_of(&Location::new(1e-12, 0.0, 0.0)).unwrap(), 0);
        assert_eq!(l.zone_of(&Location::new(10.0, 0.0, 0.0)).unwrap(), 1);
        // just below the positive x axis is the last sector
        assert_eq!(l.zone_of(&Location::new(5.0, -1e-9, 0.0)).unwrap(), 7);
        assert!(l.zone_of(&Location::new(10.1, 0.0, 0.0)).is_err());
        assert!(ZoneLayout::new(0, 2, 10.0).is_err());
    }
}
