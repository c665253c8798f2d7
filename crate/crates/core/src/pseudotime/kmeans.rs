use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::linalg::sq_dist;

const MAX_LLOYD_ITERS: usize = 300;
const MAX_RESEEDS: usize = 3;

#[derive(Debug, Clone, PartialEq)]
pub struct KMeans {
    pub centers: Vec<Vec<f64>>,
    pub assignment: Vec<usize>,
}

/// k-means++ seeding followed by Lloyd iterations. An empty cluster triggers a
/// fresh seeding (seed + attempt) up to three times.
pub fn kmeans(points: &[Vec<f64>], k: usize, seed: u64) -> Result<KMeans> {
    if k == 0 {
        return Err(Error::Config("number of clusters must be positive".into()));
    }
    if points.len() < k {
        return Err(Error::Config(format!(
            "cannot form {k} clusters from {} points",
            points.len()
        )));
    }
    for attempt in 0..=MAX_RESEEDS {
        if let Some(result) = run_once(points, k, seed.wrapping_add(attempt as u64)) {
            return Ok(result);
        }
        log::debug!("k-means attempt {attempt} produced an empty cluster; reseeding");
    }
    Err(Error::EmptyCluster {
        attempts: MAX_RESEEDS + 1,
    })
}

fn nearest(p: &[f64], centers: &[Vec<f64>]) -> (usize, f64) {
    let mut best = (0, f64::INFINITY);
    for (c, center) in centers.iter().enumerate() {
        let d = sq_dist(p, center);
        if d < best.1 {
            best = (c, d);
        }
    }
    best
}

fn seed_centers(points: &[Vec<f64>], k: usize, rng: &mut ChaCha8Rng) -> Vec<Vec<f64>> {
    let n = points.len();
    let mut centers = vec![points[rng.random_range(0..n)].clone()];
    let mut d2: Vec<f64> = points.iter().map(|p| sq_dist(p, &centers[0])).collect();
    while centers.len() < k {
        let total: f64 = d2.iter().sum();
        let pick = if total > 0.0 {
            let mut target = rng.random::<f64>() * total;
            let mut chosen = n - 1;
            for (i, &w) in d2.iter().enumerate() {
                if target < w {
                    chosen = i;
                    break;
                }
                target -= w;
            }
            chosen
        } else {
            rng.random_range(0..n)
        };
        let c = points[pick].clone();
        for (acc, p) in d2.iter_mut().zip(points) {
            *acc = acc.min(sq_dist(p, &c));
        }
        centers.push(c);
    }
    centers
}

fn run_once(points: &[Vec<f64>], k: usize, seed: u64) -> Option<KMeans> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let dim = points[0].len();
    let mut centers = seed_centers(points, k, &mut rng);
    let mut assignment: Vec<usize> = points.iter().map(|p| nearest(p, &centers).0).collect();
    for _ in 0..MAX_LLOYD_ITERS {
        let mut sums = vec![vec![0.0; dim]; k];
        let mut counts = vec![0usize; k];
        for (p, &a) in points.iter().zip(&assignment) {
            counts[a] += 1;
            for (s, v) in sums[a].iter_mut().zip(p) {
                *s += v;
            }
        }
        if counts.contains(&0) {
            return None;
        }
        for ((c, s), &cnt) in centers.iter_mut().zip(sums).zip(&counts) {
            *c = s.into_iter().map(|v| v / cnt as f64).collect();
        }
        let next: Vec<usize> = points.iter().map(|p| nearest(p, &centers).0).collect();
        if next == assignment {
            break;
        }
        assignment = next;
    }
    let mut counts = vec![0usize; k];
    for &a in &assignment {
        counts[a] += 1;
    }
    if counts.contains(&0) {
        return None;
    }
    Some(KMeans {
        centers,
        assignment,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn separates_two_blobs() {
        let mut pts = Vec::new();
        for i in 0..20 {
            let e = (i as f64) * 0.01;
            pts.push(vec![e, -e]);
            pts.push(vec![10.0 + e, 10.0 - e]);
        }
        let km = kmeans(&pts, 2, 3).unwrap();
        for i in (0..40).step_by(2) {
            assert_eq!(km.assignment[i], km.assignment[0]);
            assert_ne!(km.assignment[i + 1], km.assignment[0]);
        }
        assert_eq!(kmeans(&pts, 2, 3).unwrap(), km);
    }

    #[test]
    fn identical_points_cannot_fill_clusters() {
        let pts = vec![vec![1.0, 1.0]; 5];
        assert!(matches!(kmeans(&pts, 2, 0), Err(Error::EmptyCluster { .. })));
    }

    #[test]
    fn too_many_clusters() {
        assert!(kmeans(&[vec![0.0]], 2, 0).is_err());
    }
}
