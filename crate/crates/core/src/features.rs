//! Minimum-description features: the `F` strongest bins of every sensor's
//! PDP together with their bin indices, and the baseline selections that
//! take the first `F` bins or `F` random bins instead.

use std::cmp::Ordering;

use ndarray::Array2;
use rand::seq::index;
use serde::{Deserialize, Serialize};

use crate::error::{input, Result};
use crate::frontend::PdpVector;
use crate::rng;
use crate::scalar::Real;

/// How the `F` bins of each sensor are chosen.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Scheme {
    /// Largest powers, sorted in descending order.
    Proposed,
    /// Bins `0..F` in temporal order.
    FirstF,
    /// `F` distinct bins drawn uniformly, in temporal order.
    RandomF,
}

impl std::str::FromStr for Scheme {
    type Err = crate::Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "proposed" => Ok(Scheme::Proposed),
            "first-f" | "first" => Ok(Scheme::FirstF),
            "random-f" | "random" => Ok(Scheme::RandomF),
            other => input(format!("unknown feature scheme {other:?}")),
        }
    }
}

impl std::fmt::Display for Scheme {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Scheme::Proposed => "proposed",
            Scheme::FirstF => "first-f",
            Scheme::RandomF => "random-f",
        })
    }
}

/// Selected powers and bin indices of one sensor.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SensorFeatures<T> {
    pub powers: Vec<T>,
    pub bins: Vec<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeatureSet<T> {
    pub f: usize,
    pub n_bins: usize,
    pub sensors: Vec<SensorFeatures<T>>,
}

impl<T: Real> FeatureSet<T> {
    pub fn num_sensors(&self) -> usize {
        self.sensors.len()
    }

    /// Number of scalars sent to the fusion centre, `2 F M`.
    pub fn description_len(&self) -> usize {
        self.sensors.iter().map(|s| s.powers.len() + s.bins.len()).sum()
    }

    /// Per sensor: normalized powers, then normalized bin indices.
    pub fn flatten_normalized(&self, stats: &NormalizationStats<T>) -> Vec<T> {
        let mut out = Vec::with_capacity(self.description_len());
        for s in &self.sensors {
            out.extend(s.powers.iter().map(|&p| stats.power(p)));
            out.extend(s.bins.iter().map(|&b| stats.bin(b)));
        }
        out
    }
}

/// Descending sort of a PDP; equal powers keep the lower bin first.
pub fn sort_pdp<T: Real>(pdp: &PdpVector<T>) -> (Vec<T>, Vec<usize>) {
    let e = pdp.as_slice();
    let mut order: Vec<usize> = (0..e.len()).collect();
    order.sort_by(|&a, &b| e[b].partial_cmp(&e[a]).unwrap_or(Ordering::Equal).then(a.cmp(&b)));
    (order.iter().map(|&i| e[i]).collect(), order)
}

fn check_pdps<T: Real>(pdps: &[PdpVector<T>], f: usize) -> Result<usize> {
    let Some(first) = pdps.first() else {
        return input("at least one sensor PDP is required");
    };
    let nb = first.len();
    if pdps.iter().any(|p| p.len() != nb) {
        return input("all sensor PDPs must have the same number of bins");
    }
    if f == 0 || f > nb {
        return input(format!("feature size F = {f} must lie in [1, {nb}]"));
    }
    Ok(nb)
}

pub fn extract_features<T: Real>(pdps: &[PdpVector<T>], f: usize) -> Result<FeatureSet<T>> {
    let n_bins = check_pdps(pdps, f)?;
    let sensors = pdps
        .iter()
        .map(|p| {
            let (mut powers, mut bins) = sort_pdp(p);
            powers.truncate(f);
            bins.truncate(f);
            SensorFeatures { powers, bins }
        })
        .collect();
    Ok(FeatureSet { f, n_bins, sensors })
}

pub fn baseline_first_f<T: Real>(pdps: &[PdpVector<T>], f: usize) -> Result<FeatureSet<T>> {
    let n_bins = check_pdps(pdps, f)?;
    let sensors =
        pdps.iter().map(|p| SensorFeatures { powers: p.as_slice()[..f].to_vec(), bins: (0..f).collect() }).collect();
    Ok(FeatureSet { f, n_bins, sensors })
}

pub fn baseline_random_f<T: Real>(pdps: &[PdpVector<T>], f: usize, seed: u64) -> Result<FeatureSet<T>> {
    let n_bins = check_pdps(pdps, f)?;
    let mut r = rng::rng_from_seed(seed);
    let sensors = pdps
        .iter()
        .map(|p| {
            let mut bins = index::sample(&mut r, n_bins, f).into_vec();
            bins.sort_unstable();
            SensorFeatures { powers: bins.iter().map(|&b| p.as_slice()[b]).collect(), bins }
        })
        .collect();
    Ok(FeatureSet { f, n_bins, sensors })
}

/// Applies `scheme`; `seed` is only consumed by [`Scheme::RandomF`].
pub fn select_features<T: Real>(pdps: &[PdpVector<T>], f: usize, scheme: Scheme, seed: u64) -> Result<FeatureSet<T>> {
    match scheme {
        Scheme::Proposed => extract_features(pdps, f),
        Scheme::FirstF => baseline_first_f(pdps, f),
        Scheme::RandomF => baseline_random_f(pdps, f, seed),
    }
}

/// Dataset-level mean and standard deviation of powers and of bin indices,
/// shared by all sensors.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NormalizationStats<T> {
    pub power_mean: T,
    pub power_std: T,
    pub bin_mean: T,
    pub bin_std: T,
}

impl<T: Real> NormalizationStats<T> {
    pub fn identity() -> Self {
        Self { power_mean: T::zero(), power_std: T::one(), bin_mean: T::zero(), bin_std: T::one() }
    }

    /// Population statistics over every entry of every feature set. A zero
    /// (or non-finite) deviation is replaced by one.
    pub fn fit<'a, I>(sets: I) -> Result<Self>
    where
        I: IntoIterator<Item = &'a FeatureSet<T>>,
    {
        // Accumulate in f64 so f32 datasets do not lose the mean.
        let (mut n, mut ps, mut pss, mut bs, mut bss) = (0usize, 0.0, 0.0, 0.0, 0.0);
        for set in sets {
            for s in &set.sensors {
                for (&p, &b) in s.powers.iter().zip(&s.bins) {
                    let (p, b) = (p.to_f64_lossy(), b as f64);
                    n += 1;
                    ps += p;
                    pss += p * p;
                    bs += b;
                    bss += b * b;
                }
            }
        }
        if n == 0 {
            return input("normalization statistics need at least one feature");
        }
        let nf = n as f64;
        let std = |s: f64, ss: f64| {
            let mean = s / nf;
            let var = (ss / nf - mean * mean).max(0.0);
            let sd = var.sqrt();
            if sd.is_finite() && sd > 0.0 {
                sd
            } else {
                1.0
            }
        };
        Ok(Self {
            power_mean: T::lit(ps / nf),
            power_std: T::lit(std(ps, pss)),
            bin_mean: T::lit(bs / nf),
            bin_std: T::lit(std(bs, bss)),
        })
    }

    #[inline]
    pub fn power(&self, p: T) -> T {
        (p - self.power_mean) / self.power_std
    }

    #[inline]
    pub fn bin(&self, b: usize) -> T {
        (T::lit(b as f64) - self.bin_mean) / self.bin_std
    }
}

/// `M x N_b` image holding the normalized selected powers at their bins and
/// zeros elsewhere.
pub fn build_sparse_image<T: Real>(fs: &FeatureSet<T>, stats: &NormalizationStats<T>) -> Array2<T> {
    let mut img = Array2::from_elem((fs.num_sensors(), fs.n_bins), T::zero());
    for (m, s) in fs.sensors.iter().enumerate() {
        for (&p, &b) in s.powers.iter().zip(&s.bins) {
            img[[m, b]] = stats.power(p);
        }
    }
    img
}

/// Normalized power matrix `E` and bin-index matrix `B`, both `M x F`.
pub fn build_matrices<T: Real>(fs: &FeatureSet<T>, stats: &NormalizationStats<T>) -> (Array2<T>, Array2<T>) {
    let (m, f) = (fs.num_sensors(), fs.f);
    let mut e = Array2::from_elem((m, f), T::zero());
    let mut b = Array2::from_elem((m, f), T::zero());
    for (i, s) in fs.sensors.iter().enumerate() {
        for j in 0..f {
            e[[i, j]] = stats.power(s.powers[j]);
            b[[i, j]] = stats.bin(s.bins[j]);
        }
    }
    (e, b)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn pdp(v: &[f64]) -> PdpVector<f64> {
        PdpVector(v.to_vec())
    }

    #[test]
    fn sort_examples() {
        assert_eq!(sort_pdp(&pdp(&[1.0, 3.0, 2.0])), (vec![3.0, 2.0, 1.0], vec![1, 2, 0]));
        assert_eq!(sort_pdp(&pdp(&[2.0; 5])).1, vec![0, 1, 2, 3, 4]);
        assert_eq!(sort_pdp(&pdp(&[5.0, 4.0, 3.0, 1.0])).1, vec![0, 1, 2, 3]);
        assert_eq!(sort_pdp(&pdp(&[1.0, 2.0, 1.0, 2.0])).1, vec![1, 3, 0, 2]);
    }

    #[test]
    fn extraction_truncates_sorted_profile() {
        let pdps = vec![pdp(&[0.1, 0.9, 0.5, 0.7]), pdp(&[4.0, 3.0, 2.0, 1.0])];
        let one = extract_features(&pdps, 1).unwrap();
        assert_eq!(one.sensors[0].powers, vec![0.9]);
        assert_eq!(one.sensors[0].bins, vec![1]);
        assert_eq!(one.sensors[1].bins, vec![0]);
        let full = extract_features(&pdps, 4).unwrap();
        assert_eq!(full.description_len(), 2 * 4 * 2);
        assert_eq!(full.sensors[0].bins, vec![1, 3, 2, 0]);
        assert!(extract_features(&pdps, 0).is_err());
        assert!(extract_features(&pdps, 5).is_err());
    }

    #[test]
    fn example_profile_top_four() {
        let sorted = [53.9, 26.8, 17.4, 12.5, 9.46, 5.35, 4.72, 3.36, 2.96, 2.55];
        let perm = [6, 2, 9, 0, 4, 8, 1, 5, 3, 7];
        let shuffled: Vec<f64> = perm.iter().map(|&i| sorted[i] * 1e-7).collect();
        let fs = extract_features(&[pdp(&shuffled)], 4).unwrap();
        let expect: Vec<f64> = sorted[..4].iter().map(|v| v * 1e-7).collect();
        assert_eq!(fs.sensors[0].powers, expect);
        for (p, &b) in fs.sensors[0].powers.iter().zip(&fs.sensors[0].bins) {
            assert_eq!(*p, shuffled[b]);
        }
    }

    #[test]
    fn first_f_baseline() {
        let pdps = vec![pdp(&[9.0, 0.0, 0.0, 0.0, 0.0])];
        let ff = baseline_first_f(&pdps, 2).unwrap();
        assert_eq!(ff.sensors[0].bins, vec![0, 1]);
        assert_eq!(ff.sensors[0].powers, vec![9.0, 0.0]);
        let prop = extract_features(&pdps, 2).unwrap();
        assert_eq!(ff.sensors[0].powers[0], prop.sensors[0].powers[0]);
        let all = baseline_first_f(&pdps, 5).unwrap();
        assert_eq!(all.sensors[0].powers, pdps[0].0);
    }

    #[test]
    fn random_f_is_distinct_and_seeded() {
        let pdps: Vec<_> = (0..3).map(|m| pdp(&(0..20).map(|i| (i * m) as f64).collect::<Vec<_>>())).collect();
        let a = baseline_random_f(&pdps, 7, 42).unwrap();
        assert_eq!(a, baseline_random_f(&pdps, 7, 42).unwrap());
        for s in &a.sensors {
            let mut b = s.bins.clone();
            b.dedup();
            assert_eq!(b.len(), 7);
        }
        let full = baseline_random_f(&pdps, 20, 1).unwrap();
        assert_eq!(full.sensors[0].bins, (0..20).collect::<Vec<_>>());
    }

    #[test]
    fn sparse_image_and_matrices() {
        let mut v = vec![0.0; 10];
        v[7] = 3.0;
        let fs = extract_features(&[pdp(&v)], 1).unwrap();
        let stats = NormalizationStats { power_mean: 1.0, power_std: 2.0, bin_mean: 0.0, bin_std: 1.0 };
        let img = build_sparse_image(&fs, &stats);
        assert_eq!(img.shape(), &[1, 10]);
        for (j, &x) in img.row(0).iter().enumerate() {
            assert_eq!(x, if j == 7 { 1.0 } else { 0.0 });
        }
        let (e, b) = build_matrices(&fs, &NormalizationStats::identity());
        assert_eq!(e[[0, 0]], 3.0);
        assert_eq!(b[[0, 0]], 7.0);

        let empty =
            FeatureSet::<f64> { f: 0, n_bins: 10, sensors: vec![SensorFeatures { powers: vec![], bins: vec![] }] };
        assert!(build_sparse_image(&empty, &stats).iter().all(|&x| x == 0.0));
    }

    #[test]
    fn normalization_uses_population_moments() {
        let fs = extract_features(&[pdp(&[1.0, 3.0]), pdp(&[5.0, 7.0])], 2).unwrap();
        let st = NormalizationStats::fit([&fs]).unwrap();
        assert_eq!(st.power_mean, 4.0);
        assert!((st.power_std - 5f64.sqrt()).abs() < 1e-12);
        assert_eq!(st.bin_mean, 0.5);
        assert_eq!(st.bin_std, 0.5);
        let constant = extract_features(&[pdp(&[2.0, 2.0])], 1).unwrap();
        let st = NormalizationStats::fit([&constant]).unwrap();
        assert_eq!(st.power_std, 1.0);
        assert_eq!(st.bin_std, 1.0);
    }

    #[test]
    fn scheme_parses() {
        assert_eq!("proposed".parse::<Scheme>().unwrap(), Scheme::Proposed);
        assert_eq!("first-f".parse::<Scheme>().unwrap(), Scheme::FirstF);
        assert_eq!("random-f".parse::<Scheme>().unwrap(), Scheme::RandomF);
        assert!("best".parse::<Scheme>().is_err());
    }
}
