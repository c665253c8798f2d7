use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{canonical_sign, pairwise_sq_dists, sorted_symmetric_eigen};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EmbedMethod {
    Mds,
    DiffusionMap,
}

impl std::str::FromStr for EmbedMethod {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, String> {
        match s {
            "mds" => Ok(Self::Mds),
            "diffusion" | "diffusion_map" | "diffusion-map" => Ok(Self::DiffusionMap),
            other => Err(format!("unknown embedding method {other:?}")),
        }
    }
}

/// Low-dimensional coordinates, one row per cell.
#[derive(Debug, Clone, PartialEq)]
pub struct Embedding {
    pub coords: Vec<Vec<f64>>,
    pub method: EmbedMethod,
}

impl Embedding {
    pub fn n(&self) -> usize {
        self.coords.len()
    }

    pub fn dim(&self) -> usize {
        self.coords.first().map_or(0, |r| r.len())
    }
}

/// Embed `features` (one row per cell) into `m` dimensions.
///
/// `bandwidth` is the Gaussian kernel width for diffusion maps; it defaults to
/// the median pairwise distance and is ignored by MDS.
pub fn embed(
    features: &[Vec<f64>],
    method: EmbedMethod,
    m: usize,
    bandwidth: Option<f64>,
) -> Result<Embedding> {
    let n = features.len();
    if m == 0 {
        return Err(Error::Config("embedding dimension must be at least 1".into()));
    }
    if n < m + 1 {
        return Err(Error::Config(format!("need at least {} points to embed into {m} dimensions", m + 1)));
    }
    let d = features[0].len();
    if d == 0 || features.iter().any(|r| r.len() != d) {
        return Err(Error::Config("feature rows must share a positive dimension".into()));
    }
    let sq = pairwise_sq_dists(features);
    let coords = match method {
        EmbedMethod::Mds => classical_mds(&sq, m)?,
        EmbedMethod::DiffusionMap => diffusion_map(&sq, m, bandwidth)?,
    };
    Ok(Embedding { coords, method })
}

fn transpose_columns(cols: Vec<Vec<f64>>, n: usize) -> Vec<Vec<f64>> {
    (0..n).map(|i| cols.iter().map(|c| c[i]).collect()).collect()
}

fn classical_mds(sq: &DMatrix<f64>, m: usize) -> Result<Vec<Vec<f64>>> {
    let n = sq.nrows();
    let row_means: Vec<f64> = (0..n).map(|i| sq.row(i).sum() / n as f64).collect();
    let grand = row_means.iter().sum::<f64>() / n as f64;
    let gram = DMatrix::from_fn(n, n, |i, j| -0.5 * (sq[(i, j)] - row_means[i] - row_means[j] + grand));
    let (values, vectors) = sorted_symmetric_eigen(gram);
    let magnitude = sq.max();
    if !(magnitude > 0.0) || !(values[0] > 1e-12 * magnitude) {
        return Err(Error::Degenerate("all points coincide; the Gram matrix is zero".into()));
    }
    let cols = (0..m)
        .map(|c| {
            let s = values[c].max(0.0).sqrt();
            let mut col: Vec<f64> = vectors.column(c).iter().map(|v| v * s).collect();
            canonical_sign(&mut col);
            col
        })
        .collect();
    Ok(transpose_columns(cols, n))
}

fn median(mut v: Vec<f64>) -> f64 {
    v.sort_by(f64::total_cmp);
    let n = v.len();
    if n % 2 == 1 {
        v[n / 2]
    } else {
        0.5 * (v[n / 2 - 1] + v[n / 2])
    }
}

fn diffusion_map(sq: &DMatrix<f64>, m: usize, bandwidth: Option<f64>) -> Result<Vec<Vec<f64>>> {
    let n = sq.nrows();
    let sigma = match bandwidth {
        Some(b) if b > 0.0 && b.is_finite() => b,
        Some(b) => return Err(Error::Config(format!("bandwidth must be positive, got {b}"))),
        None => {
            let mut upper = Vec::with_capacity(n * (n - 1) / 2);
            for i in 0..n {
                for j in (i + 1)..n {
                    upper.push(sq[(i, j)].sqrt());
                }
            }
            median(upper)
        }
    };
    if !(sigma > 0.0) {
        return Err(Error::Degenerate("median pairwise distance is zero".into()));
    }
    let kernel = sq.map(|d2| (-d2 / (2.0 * sigma * sigma)).exp());
    let degree: Vec<f64> = (0..n).map(|i| kernel.row(i).sum()).collect();
    let total: f64 = degree.iter().sum();
    let sym = DMatrix::from_fn(n, n, |i, j| kernel[(i, j)] / (degree[i] * degree[j]).sqrt());
    let (values, vectors) = sorted_symmetric_eigen(sym);
    if values.len() < m + 1 {
        return Err(Error::Degenerate("not enough eigenvectors".into()));
    }
    if values[1] >= 1.0 - 1e-12 && values.iter().skip(1).take(m).all(|v| (v - 1.0).abs() < 1e-12) {
        return Err(Error::Degenerate("kernel graph is disconnected at this bandwidth".into()));
    }
    let cols = (1..=m)
        .map(|c| {
            let mut col: Vec<f64> = (0..n)
                .map(|i| values[c] * vectors[(i, c)] * (total / degree[i]).sqrt())
                .collect();
            canonical_sign(&mut col);
            col
        })
        .collect();
    Ok(transpose_columns(cols, n))
}
