use crate::error::{input, Error, Result};
use crate::scalar::Real;

/// Relative floor applied to neighbour distances so duplicates do not give
/// `log 0`.
const JITTER: f64 = 1e-12;

fn sq_dist<T: Real>(a: &[T], b: &[T]) -> f64 {
    a.iter()
        .zip(b)
        .map(|(&x, &y)| {
            let d = x.to_f64_lossy() - y.to_f64_lossy();
            d * d
        })
        .sum()
}

fn scale<T: Real>(sets: &[&[Vec<T>]]) -> f64 {
    let m =
        sets.iter().flat_map(|s| s.iter()).flat_map(|x| x.iter()).map(|v| v.to_f64_lossy().abs()).fold(0.0, f64::max);
    if m > 0.0 {
        m
    } else {
        1.0
    }
}

/// Distance from `x` to its `u`-th nearest neighbour in `set`, skipping
/// index `skip` (the point itself when `x` belongs to `set`).
fn kth_distance<T: Real>(x: &[T], set: &[Vec<T>], u: usize, skip: Option<usize>, buf: &mut Vec<f64>) -> f64 {
    buf.clear();
    buf.extend(set.iter().enumerate().filter(|(i, _)| Some(*i) != skip).map(|(_, y)| sq_dist(x, y)));
    let (_, kth, _) = buf.select_nth_unstable_by(u - 1, |a, b| a.total_cmp(b));
    kth.sqrt()
}

fn check_dims<T>(sets: &[&[Vec<T>]]) -> Result<usize> {
    let d = sets.iter().find_map(|s| s.first()).map(|x| x.len()).unwrap_or(0);
    if d == 0 || sets.iter().any(|s| s.iter().any(|x| x.len() != d)) {
        return input("KL samples must be non-empty vectors of one common dimension");
    }
    Ok(d)
}

/// Nearest-neighbour estimate of `D(P || Q)` from samples `p` of `P` and
/// `q` of `Q`, which are taken to be different sets. `mult` is the factor in
/// front of the log-ratio sum (the data dimension in the textbook form).
pub fn knn_kl<T: Real>(p: &[Vec<T>], q: &[Vec<T>], u: usize, mult: f64) -> Result<f64> {
    if u == 0 {
        return input("neighbour index u must be at least 1");
    }
    if p.len() <= u || q.len() < u {
        return input(format!(
            "KL estimate needs more than u = {u} samples in P and at least u in Q (got {} and {})",
            p.len(),
            q.len()
        ));
    }
    check_dims(&[p, q])?;
    let floor = JITTER * scale(&[p, q]);
    let mut buf = Vec::new();
    let mut acc = 0.0;
    for (i, x) in p.iter().enumerate() {
        let r_p = kth_distance(x, p, u, Some(i), &mut buf).max(floor);
        let r_q = kth_distance(x, q, u, None, &mut buf).max(floor);
        acc += (r_q / r_p).ln();
    }
    let (n, m) = (p.len() as f64, q.len() as f64);
    Ok(mult * acc / n + (m / (n - 1.0)).ln())
}

/// The estimator applied to a set against itself: the neighbour terms cancel
/// and only `log(n / (n - 1))` remains.
pub fn knn_kl_self(n: usize) -> f64 {
    (n as f64 / (n as f64 - 1.0)).ln()
}

/// Zone-averaged divergence: the sum of `D(P_i || P_j)` over all ordered zone
/// pairs, `i = j` included, divided by `N_z² · sqrt(F)`. Each estimate uses
/// `F` as its multiplier.
pub fn kl_score<T: Real>(zones: &[Vec<Vec<T>>], f: usize, u: usize) -> Result<f64> {
    if zones.is_empty() {
        return input("KL score needs at least one zone");
    }
    if u == 0 || f == 0 {
        return input("KL score needs u >= 1 and F >= 1");
    }
    for (z, pts) in zones.iter().enumerate() {
        if pts.len() <= u {
            return Err(Error::ZoneTooSmall { zone: z, count: pts.len(), neighbors: u });
        }
    }
    let sets: Vec<&[Vec<T>]> = zones.iter().map(|z| z.as_slice()).collect();
    check_dims(&sets)?;
    let floor = JITTER * scale(&sets);
    let nz = zones.len();
    let mult = f as f64;

    let mut total = 0.0;
    let mut buf = Vec::new();
    for (i, zi) in zones.iter().enumerate() {
        let ni = zi.len() as f64;
        // log-ratio sums against every zone j, accumulated over x in zone i
        let mut sums = vec![0.0; nz];
        for (xi, x) in zi.iter().enumerate() {
            let own = kth_distance(x, zi, u, Some(xi), &mut buf).max(floor);
            for (j, zj) in zones.iter().enumerate() {
                if j != i {
                    let other = kth_distance(x, zj, u, None, &mut buf).max(floor);
                    sums[j] += (other / own).ln();
                }
            }
        }
        for (j, zj) in zones.iter().enumerate() {
            total += mult * sums[j] / ni + (zj.len() as f64 / (ni - 1.0)).ln();
        }
    }
    Ok(total / ((nz * nz) as f64 * mult.sqrt()))
}
