//! Synthetic chain datasets with known ground truth.
//!
//! Random stream (ChaCha8 seeded with `seed_from_u64`), consumed in this order:
//! 1. latent points, column by column: first coordinate then second, both
//!    standard normal draws (the second scaled by `minor_sd`);
//! 2. the `d x 2` embedding matrix, row-major, standard normal;
//! 3. the flip positions, `rand::seq::index::sample(n, m)` sorted ascending;
//! 4. one `random_range(0..K-1)` per flip position in ascending order, mapped
//!    onto the labels other than the true one.

use rand::seq::index;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::CellRecord;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimConfig {
    pub n: usize,
    pub k: usize,
    pub d: usize,
    /// Percentage of labels replaced by a different label.
    pub noise_level: u32,
    pub seed: u64,
    /// Standard deviation of the latent second coordinate.
    pub minor_sd: f64,
}

impl Default for SimConfig {
    fn default() -> Self {
        Self {
            n: 250,
            k: 5,
            d: 50,
            noise_level: 0,
            seed: 0,
            minor_sd: DEFAULT_MINOR_SD,
        }
    }
}

/// Spread of the latent coordinate orthogonal to the developmental ordering.
pub const DEFAULT_MINOR_SD: f64 = 0.05;

impl SimConfig {
    pub fn validate(&self) -> Result<()> {
        if self.k == 0 || self.n == 0 {
            return Err(Error::Config("n and k must be positive".into()));
        }
        if !self.n.is_multiple_of(self.k) {
            return Err(Error::Config(format!("n = {} is not divisible by k = {}", self.n, self.k)));
        }
        if self.d == 0 {
            return Err(Error::Config("d must be positive".into()));
        }
        if self.noise_level > 100 {
            return Err(Error::Config(format!("noise level {} exceeds 100", self.noise_level)));
        }
        if self.k == 1 && self.noise_level > 0 {
            return Err(Error::Config("cannot flip labels with a single class".into()));
        }
        if !(self.minor_sd >= 0.0 && self.minor_sd.is_finite()) {
            return Err(Error::Config("minor_sd must be finite and non-negative".into()));
        }
        Ok(())
    }

    pub fn n_flips(&self) -> usize {
        self.n * self.noise_level as usize / 100
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SimDataset {
    pub config: SimConfig,
    /// Cells in sorted latent order; `observed_label` carries the noise.
    pub cells: Vec<CellRecord>,
    pub ground_truth: Vec<usize>,
    pub noisy_mask: Vec<bool>,
    /// Latent first coordinate of each cell (the generative ordering parameter).
    pub latent: Vec<f64>,
}

impl SimDataset {
    pub fn observed(&self) -> Vec<usize> {
        self.cells.iter().map(|c| c.observed_label).collect()
    }

    pub fn ids(&self) -> Vec<String> {
        self.cells.iter().map(|c| c.id.clone()).collect()
    }
}

pub fn generate(config: &SimConfig) -> Result<SimDataset> {
    config.validate()?;
    let SimConfig { n, k, d, .. } = *config;
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);

    let mut latent: Vec<[f64; 2]> = (0..n)
        .map(|_| {
            let a: f64 = rng.sample(StandardNormal);
            let b: f64 = rng.sample(StandardNormal);
            [a, b * config.minor_sd]
        })
        .collect();
    let embedding: Vec<[f64; 2]> = (0..d)
        .map(|_| [rng.sample(StandardNormal), rng.sample(StandardNormal)])
        .collect();

    latent.sort_by(|a, b| a[0].total_cmp(&b[0]));

    let block = n / k;
    let ground_truth: Vec<usize> = (0..n).map(|j| j / block).collect();

    let mut flips: Vec<usize> = index::sample(&mut rng, n, config.n_flips()).into_vec();
    flips.sort_unstable();
    let mut observed = ground_truth.clone();
    let mut noisy_mask = vec![false; n];
    for &j in &flips {
        let r = rng.random_range(0..k - 1);
        observed[j] = if r >= ground_truth[j] { r + 1 } else { r };
        noisy_mask[j] = true;
    }

    let width = (n.max(2) - 1).to_string().len();
    let cells = latent
        .iter()
        .enumerate()
        .map(|(j, x)| CellRecord {
            id: format!("cell{j:0width$}"),
            features: embedding.iter().map(|row| row[0] * x[0] + row[1] * x[1]).collect(),
            observed_label: observed[j],
            image_ref: None,
        })
        .collect();

    Ok(SimDataset {
        config: config.clone(),
        cells,
        ground_truth,
        noisy_mask,
        latent: latent.iter().map(|x| x[0]).collect(),
    })
}

/// Positions (in sorted order) of the first cell of every class block after the first.
pub fn ground_truth_borders(dataset: &SimDataset) -> Vec<usize> {
    block_borders(dataset.config.n, dataset.config.k)
}

pub fn block_borders(n: usize, k: usize) -> Vec<usize> {
    if k == 0 {
        return Vec::new();
    }
    let block = n / k;
    (1..k).map(|i| i * block).collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn cfg(noise: u32, seed: u64) -> SimConfig {
        SimConfig {
            noise_level: noise,
            seed,
            ..SimConfig::default()
        }
    }

    #[test]
    fn clean_labels_at_zero_noise() {
        let ds = generate(&cfg(0, 1)).unwrap();
        assert_eq!(ds.observed(), ds.ground_truth);
        assert!(ds.noisy_mask.iter().all(|m| !m));
    }

    #[test]
    fn exact_flip_count_and_shape() {
        for noise in [10, 20, 30] {
            let ds = generate(&cfg(noise, 7)).unwrap();
            let flipped = ds.noisy_mask.iter().filter(|m| **m).count();
            assert_eq!(flipped, 250 * noise as usize / 100);
            assert!(ds.cells.iter().all(|c| c.features.len() == 50));
            for j in 0..250 {
                assert_eq!(ds.noisy_mask[j], ds.cells[j].observed_label != ds.ground_truth[j]);
                assert!(ds.cells[j].observed_label < 5);
            }
        }
        assert_eq!(generate(&cfg(10, 0)).unwrap().noisy_mask.iter().filter(|m| **m).count(), 25);
    }

    #[test]
    fn deterministic_and_sorted() {
        let a = generate(&cfg(20, 42)).unwrap();
        let b = generate(&cfg(20, 42)).unwrap();
        assert_eq!(a, b);
        assert!(a.latent.windows(2).all(|w| w[0] <= w[1]));
        assert!(a.ground_truth.windows(2).all(|w| w[0] <= w[1]));
        assert_ne!(generate(&cfg(20, 43)).unwrap().cells, a.cells);
    }

    #[test]
    fn borders() {
        let ds = generate(&cfg(10, 3)).unwrap();
        assert_eq!(ground_truth_borders(&ds), vec![50, 100, 150, 200]);
        assert!(block_borders(250, 1).is_empty());
        assert_eq!(block_borders(10, 2), vec![5]);
    }

    #[test]
    fn rejects_bad_config() {
        assert!(generate(&SimConfig { n: 251, ..cfg(0, 0) }).is_err());
        assert!(generate(&cfg(101, 0)).is_err());
    }
}
