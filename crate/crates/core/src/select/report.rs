use std::io::Write;
use std::ops::RangeInclusive;

use serde::{Deserialize, Serialize};

use super::{
    information_term, ll_hat, log_likelihood, noise_power, per_f, PerFQuantities, SelectionConfig, SelectionStats,
};
use crate::error::{input, Result};
use crate::scalar::Real;

/// Divides by the maximum. If the maximum is not positive the row is
/// min-max scaled instead, and a constant row maps to all ones.
pub fn normalize_by_max<T: Real>(row: &[T]) -> Vec<T> {
    let max = row.iter().copied().fold(T::neg_infinity(), T::max);
    if max > T::zero() {
        return row.iter().map(|&v| v / max).collect();
    }
    let min = row.iter().copied().fold(T::infinity(), T::min);
    let span = max - min;
    if span > T::zero() {
        row.iter().map(|&v| (v - min) / span).collect()
    } else {
        vec![T::one(); row.len()]
    }
}

/// `weight · a + (1 - weight) · b`, element-wise.
pub fn criterion_row<T: Real>(a: &[T], b: &[T], weight: f64) -> Result<Vec<T>> {
    if a.is_empty() || a.len() != b.len() {
        return input("criterion rows must be non-empty and of equal length");
    }
    let (w, w1) = (T::lit(weight), T::lit(1.0 - weight));
    Ok(a.iter().zip(b).map(|(&x, &y)| w * x + w1 * y).collect())
}

/// Feature size maximizing the criterion over `f_min, f_min + 1, ...`;
/// the smaller `F` wins ties.
pub fn select_feature_size<T: Real>(f_min: usize, a: &[T], b: &[T], weight: f64) -> Result<usize> {
    let crit = criterion_row(a, b, weight)?;
    let mut best = 0;
    for (i, &c) in crit.iter().enumerate() {
        if c > crit[best] {
            best = i;
        }
    }
    Ok(f_min + best)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SelectionReport<T> {
    pub ll0: T,
    pub rows: Vec<PerFQuantities<T>>,
    pub weight: f64,
    /// Present once a KL row has been supplied.
    pub f_star: Option<usize>,
}

/// Evaluates every `F` in the configured range. `kl` holds one raw `KL_F`
/// per candidate; without it only the information term is filled in.
pub fn evaluate_range<T: Real>(
    stats: &SelectionStats<T>,
    config: &SelectionConfig,
    kl: Option<&[T]>,
) -> Result<SelectionReport<T>> {
    config.validate(stats.num_bins())?;
    let mut rows = config.range().map(|f| per_f(stats, f)).collect::<Result<Vec<_>>>()?;
    let ll0 = log_likelihood(stats, 0)?;
    let gains: Vec<T> = rows.iter().map(|r| r.ll - ll0).collect();
    for (r, g) in rows.iter_mut().zip(normalize_by_max(&gains)) {
        r.ll_norm = g;
        r.info = information_term(&r.acquisition, g);
    }
    let mut f_star = None;
    if let Some(kl) = kl {
        if kl.len() != rows.len() {
            return input(format!("expected {} KL values, got {}", rows.len(), kl.len()));
        }
        let b = normalize_by_max(kl);
        let a: Vec<T> = rows.iter().map(|r| r.info).collect();
        let crit = criterion_row(&a, &b, config.weight)?;
        for (i, r) in rows.iter_mut().enumerate() {
            r.kl = Some(kl[i]);
            r.kl_norm = Some(b[i]);
            r.criterion = Some(crit[i]);
        }
        f_star = Some(select_feature_size(config.f_min, &a, &b, config.weight)?);
    }
    Ok(SelectionReport { ll0, rows, weight: config.weight, f_star })
}

impl<T: Real> SelectionReport<T> {
    /// Plain-text table, one line per `F`. Powers are divided by `unit`.
    pub fn write_table<W: Write>(&self, mut out: W, unit: f64) -> std::io::Result<()> {
        let u = T::lit(unit);
        let list = |v: &[T], scale: T, prec: usize| {
            let s: Vec<String> = v.iter().map(|&x| format!("{:.*}", prec, x / scale)).collect();
            format!("[{}]", s.join(" "))
        };
        let opt = |v: Option<T>| v.map_or("-".to_string(), |x| format!("{x:.3}"));
        writeln!(out, "# power unit = {unit:e}, weight = {}", self.weight)?;
        writeln!(out, "F\tpsi2\tlambda\tP_th\tLL_norm\tp\tP_f\ta\tb\tcriterion")?;
        for r in &self.rows {
            writeln!(
                out,
                "{}\t{:.2}\t{}\t{:.2}\t{:.3}\t{}\t{}\t{:.3}\t{}\t{}",
                r.f,
                r.psi2 / u,
                list(&r.lambda, u, 1),
                r.p_th / u,
                r.ll_norm,
                list(&r.detection, T::one(), 2),
                list(&r.acquisition, T::one(), 2),
                r.info,
                opt(r.kl_norm),
                opt(r.criterion),
            )?;
        }
        if let Some(f) = self.f_star {
            writeln!(out, "F* = {f}")?;
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClauseResult {
    pub name: String,
    pub passed: bool,
    /// Worst measured deviation in the direction the clause forbids.
    pub slack: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Proposition1Report {
    /// Whether the fixture meets the high-SNR assumption (large gap, equal tail).
    pub assumption_holds: bool,
    pub clauses: Vec<ClauseResult>,
}

impl Proposition1Report {
    pub fn all_passed(&self) -> bool {
        self.clauses.iter().all(|c| c.passed)
    }
}

/// Checks, for `F` inside `range`, that `ψ²_F` does not increase and
/// `LL̂_F` does not decrease up to `f_tilde`, and that `LL̂_F` is constant
/// beyond it. Failures are reported, not raised.
pub fn proposition1_check<T: Real>(
    stats: &SelectionStats<T>,
    f_tilde: usize,
    range: RangeInclusive<usize>,
    tol: f64,
) -> Result<Proposition1Report> {
    let nb = stats.num_bins();
    if f_tilde == 0 || f_tilde >= nb {
        return input(format!("signal-bin count {f_tilde} must lie in [1, {}]", nb - 1));
    }
    let (lo, hi) = (*range.start(), (*range.end()).min(nb - 1));
    let e: Vec<f64> = stats.mean_sorted.iter().map(|v| v.to_f64_lossy()).collect();
    let tail = &e[f_tilde..];
    let tail_equal = tail.iter().all(|&v| (v - tail[0]).abs() <= 1e-12 * tail[0].abs());
    let assumption_holds = tail_equal && tail[0] > 0.0 && e[f_tilde - 1] >= 1e3 * tail[0];

    let psi = |f: usize| noise_power(stats, f).map(|v| v.to_f64_lossy());
    let llh = |f: usize| ll_hat(stats, f).map(|v| v.to_f64_lossy());

    let mut psi_slack = f64::NEG_INFINITY;
    let mut ll_slack = f64::NEG_INFINITY;
    for f in lo.max(1)..=hi.min(f_tilde) {
        let (p0, p1) = (psi(f - 1)?, psi(f)?);
        psi_slack = psi_slack.max((p1 - p0) / p0.abs());
        let (l0, l1) = (llh(f - 1)?, llh(f)?);
        ll_slack = ll_slack.max((l0 - l1) / l0.abs().max(f64::MIN_POSITIVE));
    }
    let beyond: Vec<f64> = ((f_tilde + 1).max(lo)..=hi).map(llh).collect::<Result<_>>()?;
    let flat_slack = if beyond.len() < 2 {
        0.0
    } else {
        let max = beyond.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let min = beyond.iter().copied().fold(f64::INFINITY, f64::min);
        let mag = beyond.iter().map(|v| v.abs()).fold(0.0, f64::max);
        (max - min) / mag.max(f64::MIN_POSITIVE)
    };
    let clause = |name: &str, slack: f64| ClauseResult {
        name: name.to_string(),
        passed: !(slack > tol),
        slack: if slack.is_finite() { slack } else { 0.0 },
    };
    Ok(Proposition1Report {
        assumption_holds,
        clauses: vec![
            clause("noise power non-increasing up to the signal-bin count", psi_slack),
            clause("reduced likelihood non-decreasing up to the signal-bin count", ll_slack),
            clause("reduced likelihood constant beyond the signal-bin count", flat_slack),
        ],
    })
}
