use mdfeat_core::{Error, Real, Result};

/// Majority vote among the `k` nearest training points (Euclidean). Equal
/// distances keep training order; tied votes go to the smaller zone.
pub fn knn_classify<T: Real>(train: &[Vec<T>], labels: &[usize], query: &[T], k: usize) -> Result<usize> {
    if train.len() != labels.len() {
        return Err(Error::Input(format!("{} training points but {} labels", train.len(), labels.len())));
    }
    if k == 0 || k > train.len() {
        return Err(Error::Input(format!("k = {k} with {} training points", train.len())));
    }
    if let Some(p) = train.iter().find(|p| p.len() != query.len()) {
        return Err(Error::Input(format!("feature length {} vs query length {}", p.len(), query.len())));
    }
    let mut dist: Vec<(f64, usize)> = train
        .iter()
        .enumerate()
        .map(|(i, p)| (p.iter().zip(query).map(|(&a, &b)| (a - b).to_f64_lossy().powi(2)).sum(), i))
        .collect();
    dist.select_nth_unstable_by(k - 1, |a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
    let n_zones = labels.iter().max().map_or(0, |m| m + 1);
    let mut votes = vec![0usize; n_zones];
    for &(_, i) in &dist[..k] {
        votes[labels[i]] += 1;
    }
    Ok(votes.iter().enumerate().fold(0, |best, (z, &v)| if v > votes[best] { z } else { best }))
}
