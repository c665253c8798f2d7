use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use super::FlagResult;
use crate::error::{Error, Result};
use crate::linalg::sq_dist;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum NeighborMode {
    /// Plain k nearest neighbours.
    Nn,
    /// k nearest centroid neighbours.
    Ncn,
}

impl NeighborMode {
    fn name(self) -> &'static str {
        match self {
            NeighborMode::Nn => "knn",
            NeighborMode::Ncn => "kncn",
        }
    }
}

/// Euclidean neighbours of `query`, nearest first, lower index on ties.
pub fn nearest_neighbors(features: &[Vec<f64>], query: usize, k: usize) -> Vec<usize> {
    let q = &features[query];
    let mut cand: Vec<(f64, usize)> = features
        .iter()
        .enumerate()
        .filter(|(i, _)| *i != query)
        .map(|(i, f)| (sq_dist(q, f), i))
        .collect();
    cand.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
    cand.into_iter().take(k).map(|(_, i)| i).collect()
}

/// Greedy nearest-centroid neighbourhood: each step adds the point that keeps
/// the centroid of the chosen set closest to the query.
pub fn nearest_centroid_neighbors(features: &[Vec<f64>], query: usize, k: usize) -> Vec<usize> {
    let q = &features[query];
    let dim = q.len();
    let n = features.len();
    let mut chosen: Vec<usize> = Vec::with_capacity(k);
    let mut sum = vec![0.0; dim];
    let mut used = vec![false; n];
    used[query] = true;
    while chosen.len() < k.min(n - 1) {
        let size = (chosen.len() + 1) as f64;
        let mut best: Option<(f64, usize)> = None;
        for (j, f) in features.iter().enumerate() {
            if used[j] {
                continue;
            }
            let d: f64 = (0..dim)
                .map(|c| {
                    let centroid = (sum[c] + f[c]) / size;
                    (q[c] - centroid) * (q[c] - centroid)
                })
                .sum();
            if best.is_none_or(|(bd, _)| d < bd) {
                best = Some((d, j));
            }
        }
        let (_, j) = best.expect("an unused candidate remains");
        used[j] = true;
        for (s, v) in sum.iter_mut().zip(&features[j]) {
            *s += v;
        }
        chosen.push(j);
    }
    chosen
}

fn neighborhoods(features: &[Vec<f64>], k: usize, mode: NeighborMode) -> Vec<Vec<usize>> {
    use rayon::prelude::*;
    (0..features.len())
        .into_par_iter()
        .map(|i| match mode {
            NeighborMode::Nn => nearest_neighbors(features, i, k),
            NeighborMode::Ncn => nearest_centroid_neighbors(features, i, k),
        })
        .collect()
}

fn check(features: &[Vec<f64>], labels: &[usize], k: usize) -> Result<()> {
    if features.len() != labels.len() {
        return Err(Error::LengthMismatch(format!(
            "{} feature rows, {} labels",
            features.len(),
            labels.len()
        )));
    }
    if k == 0 || k >= features.len() {
        return Err(Error::Config(format!("k = {k} must satisfy 1 <= k < n = {}", features.len())));
    }
    Ok(())
}

/// Label counts among `neighbors`, ordered by label.
fn votes(neighbors: &[usize], labels: &[usize]) -> BTreeMap<usize, usize> {
    let mut out = BTreeMap::new();
    for &j in neighbors {
        *out.entry(labels[j]).or_insert(0) += 1;
    }
    out
}

/// Flag instances whose neighbourhood majority disagrees with their label, or
/// whose vote ties.
pub fn knn_flag(features: &[Vec<f64>], labels: &[usize], k: usize, mode: NeighborMode) -> Result<FlagResult> {
    check(features, labels, k)?;
    let hoods = neighborhoods(features, k, mode);
    let flagged = hoods
        .iter()
        .zip(labels)
        .map(|(hood, &own)| {
            let v = votes(hood, labels);
            let top = v.values().copied().max().unwrap_or(0);
            let winners: Vec<usize> = v.iter().filter(|(_, &c)| c == top).map(|(&l, _)| l).collect();
            winners.len() > 1 || winners[0] != own
        })
        .collect();
    Ok(FlagResult {
        flagged,
        proposed_label: None,
        method: mode.name().to_string(),
        hyperparams: BTreeMap::from([("k".to_string(), k as f64)]),
    })
}

/// Generalized editing without deletion: visiting instances in index order,
/// relabel an instance when at least `k_prime` of its `k` neighbours share one
/// different label. Edits are visible to later instances.
pub fn knn_edit(
    features: &[Vec<f64>],
    labels: &[usize],
    k: usize,
    k_prime: usize,
    mode: NeighborMode,
) -> Result<FlagResult> {
    check(features, labels, k)?;
    if 2 * k_prime < k + 1 || k_prime > k {
        return Err(Error::Config(format!("k' = {k_prime} must satisfy (k+1)/2 <= k' <= k for k = {k}")));
    }
    let hoods = neighborhoods(features, k, mode);
    let mut current = labels.to_vec();
    for (i, hood) in hoods.iter().enumerate() {
        let v = votes(hood, &current);
        let mut choice: Option<(usize, usize)> = None;
        for (&label, &count) in &v {
            if label != current[i] && count >= k_prime && choice.is_none_or(|(_, c)| count > c) {
                choice = Some((label, count));
            }
        }
        if let Some((label, _)) = choice {
            current[i] = label;
        }
    }
    let flagged = current.iter().zip(labels).map(|(a, b)| a != b).collect();
    Ok(FlagResult {
        flagged,
        proposed_label: Some(current),
        method: format!("{}-edit", mode.name()),
        hyperparams: BTreeMap::from([
            ("k".to_string(), k as f64),
            ("k_prime".to_string(), k_prime as f64),
        ]),
    })
}
