//! Flagging metrics, confusion matrices and the simulation benchmark.

use std::collections::HashMap;
use std::fmt;
use std::io::Write;
use std::str::FromStr;
use std::time::Instant;

use serde::{Deserialize, Serialize};

use crate::baselines::{confident_flag, knn_edit, knn_flag, NeighborMode};
use crate::error::{Error, Result};
use crate::model::LineageTopology;
use crate::params::{start_probabilities, uniform_emission, DEFAULT_PI_ROOT_MASS};
use crate::pipeline::{run_pipeline, OrderConfig, PipelineConfig};
use crate::simulate::{generate, SimConfig, SimDataset};

/// Metrics of one method on one dataset.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Score {
    /// Fraction of final labels equal to the ground truth; only for methods that propose labels.
    pub accuracy: Option<f64>,
    pub selected_items: f64,
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
}

/// Score a flag vector (and optional proposed labels) against the ground truth.
///
/// Precision is 1 when nothing is flagged and nothing is noisy and 0 when
/// nothing is flagged but some labels are noisy; recall is 1 when no label is
/// noisy.
pub fn score(flagged: &[bool], proposed: Option<&[usize]>, ground_truth: &[usize], noisy: &[bool]) -> Result<Score> {
    let n = flagged.len();
    if ground_truth.len() != n || noisy.len() != n || proposed.is_some_and(|p| p.len() != n) {
        return Err(Error::LengthMismatch(format!(
            "flags {n}, ground truth {}, noisy mask {}, proposals {:?}",
            ground_truth.len(),
            noisy.len(),
            proposed.map(<[usize]>::len)
        )));
    }
    if n == 0 {
        return Err(Error::Config("cannot score an empty dataset".into()));
    }
    let n_flagged = flagged.iter().filter(|f| **f).count();
    let n_noisy = noisy.iter().filter(|f| **f).count();
    let hits = flagged.iter().zip(noisy).filter(|(f, m)| **f && **m).count();
    let precision = if n_flagged == 0 {
        if n_noisy == 0 { 1.0 } else { 0.0 }
    } else {
        hits as f64 / n_flagged as f64
    };
    let recall = if n_noisy == 0 { 1.0 } else { hits as f64 / n_noisy as f64 };
    let f1 = if precision + recall == 0.0 {
        0.0
    } else {
        2.0 * precision * recall / (precision + recall)
    };
    let accuracy = proposed.map(|p| p.iter().zip(ground_truth).filter(|(a, b)| a == b).count() as f64 / n as f64);
    Ok(Score {
        accuracy,
        selected_items: n_flagged as f64 / n as f64,
        precision,
        recall,
        f1,
    })
}

/// `counts[k][l]` = number of cells observed as `k` and inferred as `l`.
pub fn confusion(observed: &[usize], inferred: &[usize], k: usize) -> Result<Vec<Vec<usize>>> {
    if observed.len() != inferred.len() {
        return Err(Error::LengthMismatch(format!(
            "{} observed labels, {} inferred labels",
            observed.len(),
            inferred.len()
        )));
    }
    let mut counts = vec![vec![0usize; k]; k];
    for (&o, &i) in observed.iter().zip(inferred) {
        if o >= k || i >= k {
            return Err(Error::Config(format!("label outside 1..{k}")));
        }
        counts[o][i] += 1;
    }
    Ok(counts)
}

/// Divide each row by its sum; empty rows stay zero.
pub fn normalize_rows(counts: &[Vec<usize>]) -> Vec<Vec<f64>> {
    counts
        .iter()
        .map(|row| {
            let total: usize = row.iter().sum();
            row.iter()
                .map(|&c| if total == 0 { 0.0 } else { c as f64 / total as f64 })
                .collect()
        })
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Method {
    #[serde(rename = "timely")]
    Timely,
    #[serde(rename = "knn")]
    Knn,
    #[serde(rename = "knn-edit")]
    KnnEdit,
    #[serde(rename = "kncn")]
    Kncn,
    #[serde(rename = "kncn-edit")]
    KncnEdit,
    #[serde(rename = "confident")]
    Confident,
}

impl Method {
    pub const ALL: [Method; 6] = [
        Method::Timely,
        Method::Knn,
        Method::KnnEdit,
        Method::Kncn,
        Method::KncnEdit,
        Method::Confident,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Method::Timely => "timely",
            Method::Knn => "knn",
            Method::KnnEdit => "knn-edit",
            Method::Kncn => "kncn",
            Method::KncnEdit => "kncn-edit",
            Method::Confident => "confident",
        }
    }
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Method {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Method::ALL
            .into_iter()
            .find(|m| m.name() == s)
            .ok_or_else(|| Error::Config(format!("unknown method {s:?}")))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BenchConfig {
    pub noise_levels: Vec<u32>,
    pub seeds: Vec<u64>,
    pub methods: Vec<Method>,
    /// Dataset shape; noise level and seed are overridden per run.
    pub sim: SimConfig,
    pub k: usize,
    pub k_prime: usize,
    pub folds: usize,
    /// Diagonal of the symmetric emission matrix assumed by the model.
    pub emission_accuracy: f64,
    pub pi_root_mass: f64,
}

impl Default for BenchConfig {
    fn default() -> Self {
        Self {
            noise_levels: vec![10, 20, 30],
            seeds: (0..10).collect(),
            methods: Method::ALL.to_vec(),
            sim: SimConfig::default(),
            k: 3,
            k_prime: 2,
            folds: 5,
            emission_accuracy: 0.8,
            pi_root_mass: DEFAULT_PI_ROOT_MASS,
        }
    }
}

/// Outcome of one method on one (noise level, seed) dataset.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunRecord {
    pub method: Method,
    pub noise_level: u32,
    pub seed: u64,
    pub score: Option<Score>,
    pub error: Option<String>,
}

/// Mean (and standard deviation) of a method's scores over seeds.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricRow {
    pub method: String,
    pub noise_level: u32,
    pub accuracy: Option<f64>,
    pub accuracy_std: Option<f64>,
    pub selected_items: f64,
    pub selected_items_std: f64,
    pub precision: f64,
    pub precision_std: f64,
    pub recall: f64,
    pub recall_std: f64,
    pub f1: f64,
    pub f1_std: f64,
    /// Seeds that produced a score.
    pub seeds: usize,
    /// Seeds whose run failed; a non-zero value marks the row.
    pub failed: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BenchReport {
    pub rows: Vec<MetricRow>,
    pub runs: Vec<RunRecord>,
    pub elapsed_secs: f64,
}

impl BenchReport {
    pub fn row(&self, method: Method, noise_level: u32) -> Option<&MetricRow> {
        self.rows
            .iter()
            .find(|r| r.method == method.name() && r.noise_level == noise_level)
    }
}

/// Run one method on a simulated dataset.
pub fn run_method(method: Method, data: &SimDataset, config: &BenchConfig, seed: u64) -> Result<Score> {
    let features: Vec<Vec<f64>> = data.cells.iter().map(|c| c.features.clone()).collect();
    let observed = data.observed();
    let k = data.config.k;
    let (flagged, proposed) = match method {
        Method::Timely => {
            let topo = LineageTopology::chain(&(1..=k).map(|i| format!("S{i}")).collect::<Vec<_>>())?;
            let pi = start_probabilities(&topo, config.pi_root_mass)?;
            let cfg = PipelineConfig {
                order: OrderConfig {
                    seed,
                    ..OrderConfig::default()
                },
                ..PipelineConfig::default()
            };
            let emission = uniform_emission(k, config.emission_accuracy);
            let (report, _) = run_pipeline(&data.cells, &topo, emission, pi, &cfg)?;
            let position: HashMap<&str, usize> =
                data.cells.iter().enumerate().map(|(i, c)| (c.id.as_str(), i)).collect();
            let mut proposed = observed.clone();
            for c in &report.cells {
                proposed[position[c.id.as_str()]] = c.inferred_label;
            }
            let flagged = proposed.iter().zip(&observed).map(|(a, b)| a != b).collect();
            (flagged, Some(proposed))
        }
        Method::Knn | Method::Kncn => {
            let mode = if method == Method::Knn { NeighborMode::Nn } else { NeighborMode::Ncn };
            (knn_flag(&features, &observed, config.k, mode)?.flagged, None)
        }
        Method::KnnEdit | Method::KncnEdit => {
            let mode = if method == Method::KnnEdit { NeighborMode::Nn } else { NeighborMode::Ncn };
            let r = knn_edit(&features, &observed, config.k, config.k_prime, mode)?;
            (r.flagged, r.proposed_label)
        }
        Method::Confident => (confident_flag(&features, &observed, k, config.folds, seed)?.flagged, None),
    };
    score(&flagged, proposed.as_deref(), &data.ground_truth, &data.noisy_mask)
}

fn mean_std(values: &[f64]) -> (f64, f64) {
    if values.is_empty() {
        return (f64::NAN, f64::NAN);
    }
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    if values.len() < 2 {
        return (mean, 0.0);
    }
    let var = values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / (n - 1.0);
    (mean, var.sqrt())
}

/// Aggregate per-run records into one row per (method, noise level), in the
/// order the methods and noise levels were requested.
pub fn aggregate(runs: &[RunRecord], methods: &[Method], noise_levels: &[u32]) -> Vec<MetricRow> {
    let mut rows = Vec::new();
    for &noise in noise_levels {
        for &method in methods {
            let mine: Vec<&RunRecord> = runs
                .iter()
                .filter(|r| r.method == method && r.noise_level == noise)
                .collect();
            let scores: Vec<Score> = mine.iter().filter_map(|r| r.score).collect();
            let pick = |f: fn(&Score) -> f64| mean_std(&scores.iter().map(f).collect::<Vec<_>>());
            let acc: Vec<f64> = scores.iter().filter_map(|s| s.accuracy).collect();
            let (accuracy, accuracy_std) = if acc.is_empty() {
                (None, None)
            } else {
                let (m, s) = mean_std(&acc);
                (Some(m), Some(s))
            };
            let (selected_items, selected_items_std) = pick(|s| s.selected_items);
            let (precision, precision_std) = pick(|s| s.precision);
            let (recall, recall_std) = pick(|s| s.recall);
            let (f1, f1_std) = pick(|s| s.f1);
            rows.push(MetricRow {
                method: method.name().to_string(),
                noise_level: noise,
                accuracy,
                accuracy_std,
                selected_items,
                selected_items_std,
                precision,
                precision_std,
                recall,
                recall_std,
                f1,
                f1_std,
                seeds: scores.len(),
                failed: mine.len() - scores.len(),
            });
        }
    }
    rows
}

/// Simulate one dataset per (noise level, seed), run every method on it and
/// average over seeds. Dataset seeds are `seed + noise_level`. A failing run
/// is logged and recorded; the benchmark carries on.
pub fn run_benchmark(config: &BenchConfig) -> Result<BenchReport> {
    use rayon::prelude::*;
    if config.seeds.is_empty() || config.noise_levels.is_empty() || config.methods.is_empty() {
        return Err(Error::Config("benchmark needs at least one noise level, seed and method".into()));
    }
    let start = Instant::now();
    let jobs: Vec<(u32, u64)> = config
        .noise_levels
        .iter()
        .flat_map(|&l| config.seeds.iter().map(move |&s| (l, s)))
        .collect();
    let runs: Vec<RunRecord> = jobs
        .par_iter()
        .flat_map_iter(|&(noise, seed)| {
            let sub_seed = seed + u64::from(noise);
            let sim = SimConfig {
                noise_level: noise,
                seed: sub_seed,
                ..config.sim.clone()
            };
            let data = generate(&sim);
            config.methods.iter().map(move |&method| {
                let result = data.as_ref().map_err(|e| e.to_string()).and_then(|d| {
                    run_method(method, d, config, sub_seed).map_err(|e| e.to_string())
                });
                if let Err(e) = &result {
                    log::warn!("{method} failed at noise {noise}, seed {seed}: {e}");
                }
                RunRecord {
                    method,
                    noise_level: noise,
                    seed,
                    score: result.as_ref().ok().copied(),
                    error: result.err(),
                }
            }).collect::<Vec<_>>()
        })
        .collect();
    let rows = aggregate(&runs, &config.methods, &config.noise_levels);
    Ok(BenchReport {
        rows,
        runs,
        elapsed_secs: start.elapsed().as_secs_f64(),
    })
}

/// Write the metric rows as CSV with one column per field.
pub fn write_rows_csv<W: Write>(writer: W, rows: &[MetricRow]) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    for row in rows {
        w.serialize(row)?;
    }
    w.flush()?;
    Ok(())
}
