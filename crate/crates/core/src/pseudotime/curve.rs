use serde::{Deserialize, Serialize};

use super::embed::Embedding;
use super::kmeans::kmeans;
use super::skeleton::{TrajectoryKind, TrajectoryModel};
use crate::error::{Error, Result};
use crate::linalg::{dist, sq_dist};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CurveConfig {
    pub n_clusters: usize,
    pub max_iter: usize,
    /// Convergence threshold on the largest vertex displacement.
    pub tol: f64,
    /// Number of equal-arclength bins averaged per refinement step.
    pub bins: usize,
    /// Moving-average window over consecutive bin means.
    pub window: usize,
    pub seed: u64,
}

impl Default for CurveConfig {
    fn default() -> Self {
        Self {
            n_clusters: 5,
            max_iter: 50,
            tol: 1e-4,
            bins: 100,
            window: 5,
            seed: 0,
        }
    }
}

/// Order cluster centres into a path: start at one end of the farthest pair
/// and repeatedly step to the nearest unvisited centre.
fn order_centers(centers: &[Vec<f64>]) -> Vec<usize> {
    let k = centers.len();
    let mut start = 0;
    let mut far = -1.0;
    for i in 0..k {
        for j in (i + 1)..k {
            let d = sq_dist(&centers[i], &centers[j]);
            if d > far {
                far = d;
                start = i;
            }
        }
    }
    let mut order = vec![start];
    let mut used = vec![false; k];
    used[start] = true;
    while order.len() < k {
        let last = &centers[*order.last().unwrap()];
        let next = (0..k)
            .filter(|&c| !used[c])
            .min_by(|&a, &b| sq_dist(last, &centers[a]).total_cmp(&sq_dist(last, &centers[b])))
            .unwrap();
        used[next] = true;
        order.push(next);
    }
    order
}

fn polyline_model(vertices: Vec<Vec<f64>>) -> Result<TrajectoryModel> {
    let edges: Vec<(usize, usize)> = (1..vertices.len()).map(|i| (i - 1, i)).collect();
    TrajectoryModel::from_skeleton(TrajectoryKind::Curve, vertices, &edges, 0)
}

/// Drop consecutive duplicate vertices so every segment has positive length.
fn dedup(vertices: Vec<Vec<f64>>) -> Vec<Vec<f64>> {
    let mut out: Vec<Vec<f64>> = Vec::with_capacity(vertices.len());
    for v in vertices {
        if out.last().is_none_or(|l| dist(l, &v) > 0.0) {
            out.push(v);
        }
    }
    out
}

/// One refinement step: bin points by arclength, average each bin, smooth the
/// sequence of bin means with a moving average.
fn refine(points: &[Vec<f64>], model: &TrajectoryModel, cfg: &CurveConfig) -> Vec<Vec<f64>> {
    let s: Vec<f64> = points.iter().map(|p| model.land(p).arclength).collect();
    let lo = s.iter().copied().fold(f64::INFINITY, f64::min);
    let hi = s.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let dim = points[0].len();
    let bins = cfg.bins.max(2);
    let mut sums = vec![vec![0.0; dim]; bins];
    let mut counts = vec![0usize; bins];
    let width = (hi - lo) / bins as f64;
    for (p, &si) in points.iter().zip(&s) {
        let b = if width > 0.0 {
            (((si - lo) / width) as usize).min(bins - 1)
        } else {
            0
        };
        counts[b] += 1;
        for (acc, v) in sums[b].iter_mut().zip(p) {
            *acc += v;
        }
    }
    let means: Vec<Vec<f64>> = sums
        .into_iter()
        .zip(&counts)
        .filter(|(_, &c)| c > 0)
        .map(|(s, &c)| s.into_iter().map(|v| v / c as f64).collect())
        .collect();
    let half = cfg.window.max(1) / 2;
    let m = means.len();
    (0..m)
        .map(|i| {
            let a = i.saturating_sub(half);
            let b = (i + half).min(m - 1);
            let mut acc = vec![0.0; dim];
            for row in &means[a..=b] {
                for (x, v) in acc.iter_mut().zip(row) {
                    *x += v;
                }
            }
            let cnt = (b - a + 1) as f64;
            acc.into_iter().map(|v| v / cnt).collect()
        })
        .collect()
}

/// Fit a principal curve through the embedding, initialised from ordered
/// k-means centres.
pub fn fit_curve(embedding: &Embedding, cfg: &CurveConfig) -> Result<TrajectoryModel> {
    if cfg.n_clusters < 2 {
        return Err(Error::Config("a curve needs at least two clusters".into()));
    }
    let points = &embedding.coords;
    let km = kmeans(points, cfg.n_clusters, cfg.seed)?;
    let order = order_centers(&km.centers);
    let initial = dedup(order.iter().map(|&c| km.centers[c].clone()).collect());
    let mut model = polyline_model(initial)?;

    for iter in 0..cfg.max_iter {
        let next = dedup(refine(points, &model, cfg));
        if next.len() < 2 {
            log::debug!("principal curve collapsed at iteration {iter}; keeping previous fit");
            break;
        }
        let movement = if next.len() == model.vertices.len() {
            next.iter()
                .zip(&model.vertices)
                .map(|(a, b)| dist(a, b))
                .fold(0.0, f64::max)
        } else {
            f64::INFINITY
        };
        model = polyline_model(next)?;
        if movement < cfg.tol {
            log::debug!("principal curve converged after {} iterations", iter + 1);
            break;
        }
    }
    Ok(model)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::pseudotime::EmbedMethod;

    fn emb(coords: Vec<Vec<f64>>) -> Embedding {
        Embedding {
            coords,
            method: EmbedMethod::Mds,
        }
    }

    #[test]
    fn line_segment_is_recovered() {
        let pts: Vec<Vec<f64>> = (0..60)
            .map(|i| {
                let t = i as f64 / 59.0;
                vec![1.0 + 3.0 * t, -2.0 + t]
            })
            .collect();
        let model = fit_curve(&emb(pts.clone()), &CurveConfig::default()).unwrap();
        // distance of each vertex to the infinite line through the segment
        let dir = [3.0 / 10f64.sqrt(), 1.0 / 10f64.sqrt()];
        for v in &model.vertices {
            let rel = [v[0] - 1.0, v[1] + 2.0];
            let off = (rel[0] * dir[1] - rel[1] * dir[0]).abs();
            assert!(off < 1e-6, "vertex {v:?} off the line by {off}");
            assert!(rel[0] >= -1e-9 && rel[0] <= 3.0 + 1e-9);
        }
        let s: Vec<f64> = pts.iter().map(|p| model.land(p).arclength).collect();
        let increasing = s.windows(2).all(|w| w[1] > w[0]);
        let decreasing = s.windows(2).all(|w| w[1] < w[0]);
        assert!(increasing || decreasing);
    }

    #[test]
    fn two_clusters_join_centroids() {
        let mut pts = Vec::new();
        for i in 0..10 {
            let e = (i as f64 - 4.5) * 0.01;
            pts.push(vec![0.0 + e, 0.0 - e]);
            pts.push(vec![5.0 + e, 5.0 - e]);
        }
        let cfg = CurveConfig {
            n_clusters: 2,
            ..CurveConfig::default()
        };
        let model = fit_curve(&emb(pts), &cfg).unwrap();
        let path = model.path();
        let first = &model.vertices[path[0]];
        let last = &model.vertices[*path.last().unwrap()];
        let ends = [first, last];
        let near = |c: [f64; 2]| ends.iter().any(|v| dist(v, &c) < 0.05);
        assert!(near([0.0, 0.0]) && near([5.0, 5.0]));
    }

    #[test]
    fn needs_two_clusters() {
        let pts = vec![vec![0.0], vec![1.0], vec![2.0]];
        let cfg = CurveConfig {
            n_clusters: 1,
            ..CurveConfig::default()
        };
        assert!(fit_curve(&emb(pts), &cfg).is_err());
    }
}
