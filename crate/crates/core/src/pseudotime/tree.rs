use super::embed::Embedding;
use super::kmeans::kmeans;
use super::skeleton::{TrajectoryKind, TrajectoryModel};
use crate::error::{Error, Result};
use crate::linalg::{mean_of, sq_dist};

/// Prim's algorithm over the complete Euclidean graph; ties go to the lower index.
pub(crate) fn minimum_spanning_tree(points: &[Vec<f64>]) -> Vec<(usize, usize)> {
    let n = points.len();
    if n == 0 {
        return Vec::new();
    }
    let mut in_tree = vec![false; n];
    let mut best = vec![f64::INFINITY; n];
    let mut link = vec![0usize; n];
    in_tree[0] = true;
    for j in 1..n {
        best[j] = sq_dist(&points[0], &points[j]);
    }
    let mut edges = Vec::with_capacity(n - 1);
    for _ in 1..n {
        let mut next = None;
        for j in 0..n {
            if !in_tree[j] && next.is_none_or(|b: usize| best[j] < best[b]) {
                next = Some(j);
            }
        }
        let j = next.expect("graph is complete");
        in_tree[j] = true;
        edges.push((link[j].min(j), link[j].max(j)));
        for k in 0..n {
            if !in_tree[k] {
                let d = sq_dist(&points[j], &points[k]);
                if d < best[k] {
                    best[k] = d;
                    link[k] = j;
                }
            }
        }
    }
    edges
}

/// Tree skeleton: k-means centres joined by their minimum spanning tree.
///
/// The root is the centre nearest the centroid of `root_rows` (the cells
/// observed in the lineage root state); without such cells the first centre
/// is used.
pub fn fit_tree(
    embedding: &Embedding,
    n_clusters: usize,
    seed: u64,
    root_rows: &[usize],
) -> Result<TrajectoryModel> {
    if n_clusters < 2 {
        return Err(Error::Config("a tree needs at least two clusters".into()));
    }
    let km = kmeans(&embedding.coords, n_clusters, seed)?;
    let edges = minimum_spanning_tree(&km.centers);
    let root = if root_rows.is_empty() {
        log::warn!("no cells observed in the root state; rooting the skeleton at cluster 0");
        0
    } else {
        let rows: Vec<&[f64]> = root_rows.iter().map(|&r| embedding.coords[r].as_slice()).collect();
        let target = mean_of(&rows);
        (0..km.centers.len())
            .min_by(|&a, &b| sq_dist(&km.centers[a], &target).total_cmp(&sq_dist(&km.centers[b], &target)))
            .unwrap()
    };
    TrajectoryModel::from_skeleton(TrajectoryKind::Tree, km.centers, &edges, root)
}
