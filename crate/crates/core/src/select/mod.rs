//! Feature-size selection.
//!
//! Every candidate `F` is scored from the averaged sorted PDP `ē` by a
//! chi-square log-likelihood (how much of `ē` is explained by `F` signal
//! bins), the probability that those bins really clear the separating
//! threshold, and a nearest-neighbour KL divergence between zones.

mod knn;
mod marcum;
mod report;

pub use knn::{kl_score, knn_kl, knn_kl_self};
pub use marcum::marcum_q;
pub use report::{
    criterion_row, evaluate_range, normalize_by_max, proposition1_check, select_feature_size, ClauseResult,
    Proposition1Report, SelectionReport,
};

use serde::{Deserialize, Serialize};
use statrs::function::gamma::ln_gamma;

use crate::error::{input, Result};
use crate::frontend::PdpVector;
use crate::scalar::Real;

/// Averaged sorted PDP `ē` together with the chi-square degrees of freedom.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SelectionStats<T> {
    pub mean_sorted: Vec<T>,
    pub dof: f64,
}

impl<T: Real> SelectionStats<T> {
    pub fn new(mean_sorted: Vec<T>, dof: f64) -> Result<Self> {
        if mean_sorted.len() < 2 {
            return input("the sorted profile needs at least two bins");
        }
        if !(dof > 0.0 && dof.is_finite()) {
            return input(format!("degrees of freedom must be positive, got {dof}"));
        }
        if mean_sorted.iter().any(|v| !v.is_finite() || *v < T::zero()) {
            return input("sorted profile entries must be finite and non-negative");
        }
        if mean_sorted.windows(2).any(|w| w[1] > w[0]) {
            return input("sorted profile must be non-increasing");
        }
        Ok(Self { mean_sorted, dof })
    }

    /// Averages the descending-sorted profiles of every sensor and sample.
    pub fn from_pdps<'a, I>(pdps: I, dof: f64) -> Result<Self>
    where
        I: IntoIterator<Item = &'a PdpVector<T>>,
    {
        let mut acc: Vec<f64> = Vec::new();
        let mut count = 0usize;
        for p in pdps {
            let (sorted, _) = crate::features::sort_pdp(p);
            if acc.is_empty() {
                acc = vec![0.0; sorted.len()];
            } else if acc.len() != sorted.len() {
                return input("all PDPs must have the same number of bins");
            }
            for (a, v) in acc.iter_mut().zip(sorted) {
                *a += v.to_f64_lossy();
            }
            count += 1;
        }
        if count == 0 {
            return input("no PDPs to average");
        }
        let mean = acc.iter().map(|a| a / count as f64).collect::<Vec<_>>();
        // Averaging sorted vectors keeps the order up to rounding; re-impose it.
        let mut out = Vec::with_capacity(mean.len());
        let mut prev = f64::INFINITY;
        for v in mean {
            prev = prev.min(v);
            out.push(T::lit(prev));
        }
        Self::new(out, dof)
    }

    pub fn num_bins(&self) -> usize {
        self.mean_sorted.len()
    }

    fn nu(&self) -> T {
        T::lit(self.dof)
    }
}

/// Search range and weights of the selection criterion.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SelectionConfig {
    pub f_min: usize,
    pub f_max: usize,
    /// Weight of the information term against the KL term.
    pub weight: f64,
    /// Neighbour index `u` of the KL estimator.
    pub neighbors: usize,
}

impl Default for SelectionConfig {
    fn default() -> Self {
        Self { f_min: 4, f_max: 10, weight: 0.8, neighbors: 5 }
    }
}

impl SelectionConfig {
    pub fn validate(&self, n_bins: usize) -> Result<()> {
        if self.f_min < 1 || self.f_min > self.f_max || self.f_max >= n_bins {
            return input(format!(
                "feature-size range [{}, {}] must satisfy 1 <= F_min <= F_max < N_b = {n_bins}",
                self.f_min, self.f_max
            ));
        }
        if !(0.0..=1.0).contains(&self.weight) {
            return input(format!("criterion weight {} outside [0, 1]", self.weight));
        }
        if self.neighbors < 1 {
            return input("neighbour count u must be at least 1");
        }
        Ok(())
    }

    pub fn range(&self) -> std::ops::RangeInclusive<usize> {
        self.f_min..=self.f_max
    }
}

/// Everything computed for one candidate `F`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PerFQuantities<T> {
    pub f: usize,
    pub psi2: T,
    pub lambda: Vec<T>,
    pub eta2: Vec<T>,
    pub p_th: T,
    /// Detection probability of each of the `F` bins.
    pub detection: Vec<T>,
    /// `P_f` for `f = 0..=F`.
    pub acquisition: Vec<T>,
    pub ll: T,
    pub ll_norm: T,
    /// Information term (a).
    pub info: T,
    pub kl: Option<T>,
    /// Normalized KL term (b).
    pub kl_norm: Option<T>,
    pub criterion: Option<T>,
}

/// Mean of the `N_b - F` weakest averaged bins.
pub fn noise_power<T: Real>(stats: &SelectionStats<T>, f: usize) -> Result<T> {
    let nb = stats.num_bins();
    if f >= nb {
        return input(format!("noise power needs F < N_b = {nb}, got {f}"));
    }
    let tail = &stats.mean_sorted[f..];
    Ok(tail.iter().copied().sum::<T>() / T::lit(tail.len() as f64))
}

/// `ē_n - ψ²_F` for the `F` strongest bins; may be negative.
pub fn signal_powers<T: Real>(stats: &SelectionStats<T>, f: usize) -> Result<Vec<T>> {
    let psi2 = noise_power(stats, f)?;
    Ok(stats.mean_sorted[..f].iter().map(|&e| e - psi2).collect())
}

/// Scale of the central chi-square matched to the first two moments of a
/// non-central one. Negative `lambda` is treated as zero.
pub fn eta_squared<T: Real>(psi2: T, lambda: T, nu: T) -> Result<T> {
    if !(nu > T::zero()) {
        return input(format!("degrees of freedom must be positive, got {nu}"));
    }
    let lam = lambda.max(T::zero());
    let two = T::lit(2.0);
    let num = two * nu * psi2 * psi2 + T::lit(4.0) * psi2 * lam + (nu * psi2 + lam).powi(2);
    Ok((num / (nu * (two + nu))).sqrt())
}

fn eta_row<T: Real>(stats: &SelectionStats<T>, f: usize, psi2: T) -> Result<Vec<T>> {
    stats.mean_sorted[..f].iter().map(|&e| eta_squared(psi2, e - psi2, stats.nu())).collect()
}

/// Chi-square log-likelihood of `ē` with `F` signal bins and noise power
/// `ψ²_F` everywhere. `F = 0` gives the all-noise reference.
pub fn log_likelihood<T: Real>(stats: &SelectionStats<T>, f: usize) -> Result<T> {
    if stats.mean_sorted.iter().any(|&e| !(e > T::zero())) {
        return input("log-likelihood needs strictly positive averaged bins");
    }
    let ln_g = T::lit(ln_gamma(stats.dof / 2.0));
    let shape = (stats.nu() - T::lit(2.0)) / T::lit(2.0);
    let rest = stats.mean_sorted.iter().map(|&e| shape * e.ln() - ln_g).sum::<T>();
    Ok(ll_hat(stats, f)? + rest)
}

/// Log-likelihood without the terms that do not depend on `F`.
pub fn ll_hat<T: Real>(stats: &SelectionStats<T>, f: usize) -> Result<T> {
    let psi2 = noise_power(stats, f)?;
    let eta = eta_row(stats, f, psi2)?;
    let half_nu = stats.nu() / T::lit(2.0);
    let two = T::lit(2.0);
    let term = |e: T, s: T| -half_nu * (two * s).ln() - e / (two * s);
    let signal = stats.mean_sorted[..f].iter().zip(&eta).map(|(&e, &s)| term(e, s)).sum::<T>();
    let noise = stats.mean_sorted[f..].iter().map(|&e| term(e, psi2)).sum::<T>();
    Ok(signal + noise)
}

/// Midpoint between the `F`-th and `(F+1)`-th strongest averaged bins.
pub fn power_threshold<T: Real>(stats: &SelectionStats<T>, f: usize) -> Result<T> {
    let nb = stats.num_bins();
    if f == 0 || f >= nb {
        return input(format!("power threshold needs 1 <= F < N_b = {nb}, got {f}"));
    }
    Ok((stats.mean_sorted[f - 1] + stats.mean_sorted[f]) / T::lit(2.0))
}

/// Probability that bin `n` of the `F` assumed signal bins exceeds the
/// threshold. The non-centrality enters squared, `sqrt(2 (λ/ψ²)²)`.
pub fn detection_prob<T: Real>(stats: &SelectionStats<T>, f: usize, n: usize) -> Result<T> {
    if n >= f {
        return input(format!("bin {n} is not among the F = {f} strongest"));
    }
    let psi2 = noise_power(stats, f)?.to_f64_lossy();
    let p_th = power_threshold(stats, f)?.to_f64_lossy();
    let lam = (stats.mean_sorted[n].to_f64_lossy() - psi2).max(0.0);
    let a = (2.0 * (lam / psi2).powi(2)).sqrt();
    let b = (2.0 * p_th / psi2).sqrt();
    Ok(T::lit(marcum_q(stats.dof / 2.0, a, b)?))
}

pub fn detection_probs<T: Real>(stats: &SelectionStats<T>, f: usize) -> Result<Vec<T>> {
    (0..f).map(|n| detection_prob(stats, f, n)).collect()
}

/// Distribution of the number of successes among independent Bernoulli
/// trials, `P_f` for `f = 0..=F`.
pub fn acquisition_prob<T: Real>(p: &[T]) -> Result<Vec<T>> {
    if p.iter().any(|&x| !(x >= T::zero() && x <= T::one())) {
        return input("acquisition probabilities need every p in [0, 1]");
    }
    let mut dist = vec![T::zero(); p.len() + 1];
    dist[0] = T::one();
    for (i, &pi) in p.iter().enumerate() {
        for f in (1..=i + 1).rev() {
            dist[f] = dist[f] * (T::one() - pi) + dist[f - 1] * pi;
        }
        dist[0] *= T::one() - pi;
    }
    Ok(dist)
}

/// Per-`F` quantities except the range-normalized ones.
pub fn per_f<T: Real>(stats: &SelectionStats<T>, f: usize) -> Result<PerFQuantities<T>> {
    if f == 0 {
        return input("F must be at least 1");
    }
    let psi2 = noise_power(stats, f)?;
    let lambda = signal_powers(stats, f)?;
    let eta2 = eta_row(stats, f, psi2)?;
    let detection = detection_probs(stats, f)?;
    let acquisition = acquisition_prob(&detection)?;
    Ok(PerFQuantities {
        f,
        psi2,
        lambda,
        eta2,
        p_th: power_threshold(stats, f)?,
        detection,
        acquisition,
        ll: log_likelihood(stats, f)?,
        ll_norm: T::zero(),
        info: T::zero(),
        kl: None,
        kl_norm: None,
        criterion: None,
    })
}

/// Term (a): expected fraction of useful bins times the normalized
/// likelihood gain.
pub fn information_term<T: Real>(acquisition: &[T], ll_norm: T) -> T {
    let f = acquisition.len() - 1;
    if f == 0 {
        return T::zero();
    }
    let frac = acquisition.iter().enumerate().map(|(k, &pk)| pk * T::lit(k as f64 / f as f64)).sum::<T>();
    frac * ll_norm
}
