//! End-to-end consistency check: order the cells, fit the hidden Markov
//! model over their labels, decode the most probable states and flag the
//! disagreements.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result, StageExt};
use crate::markov::{borders, fit, viterbi, FitOptions, HmtInstance};
use crate::model::{
    CellRecord, ConsistencyReport, HmtParams, LineageTopology, OrderedDataset, ReportCell,
};
use crate::params::initial_transitions;
use crate::pseudotime::{
    embed, fit_curve, fit_tree, project, CurveConfig, EmbedMethod, Embedding, TrajectoryKind,
    TrajectoryModel,
};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OrderConfig {
    pub method: TrajectoryKind,
    pub embed: EmbedMethod,
    /// Embedding dimension.
    pub dim: usize,
    /// Number of k-means centres; defaults to the number of states.
    pub n_clusters: Option<usize>,
    /// Diffusion-map kernel width; defaults to the median pairwise distance.
    pub bandwidth: Option<f64>,
    pub seed: u64,
}

impl Default for OrderConfig {
    fn default() -> Self {
        Self {
            method: TrajectoryKind::Curve,
            embed: EmbedMethod::Mds,
            dim: 2,
            n_clusters: None,
            bandwidth: None,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct PipelineConfig {
    pub order: OrderConfig,
    pub fit: FitOptions,
}

/// Everything the ordering stage produces.
#[derive(Debug, Clone)]
pub struct Ordering {
    pub embedding: Embedding,
    pub model: TrajectoryModel,
    pub ordered: OrderedDataset,
}

pub fn order_cells(cells: &[CellRecord], topology: &LineageTopology, config: &OrderConfig) -> Result<Ordering> {
    let features: Vec<Vec<f64>> = cells.iter().map(|c| c.features.clone()).collect();
    let embedding = embed(&features, config.embed, config.dim, config.bandwidth).stage("embed")?;
    let n_clusters = config.n_clusters.unwrap_or(topology.n_states()).max(2);
    let model = match config.method {
        TrajectoryKind::Curve => {
            let cfg = CurveConfig {
                n_clusters,
                seed: config.seed,
                ..CurveConfig::default()
            };
            fit_curve(&embedding, &cfg)
        }
        TrajectoryKind::Tree => {
            let root_rows: Vec<usize> = (0..cells.len())
                .filter(|&i| cells[i].observed_label == topology.root())
                .collect();
            fit_tree(&embedding, n_clusters, config.seed, &root_rows)
        }
    }
    .stage("trajectory")?;
    let ordered = project(&embedding, &model, topology, cells).stage("project")?;
    Ok(Ordering {
        embedding,
        model,
        ordered,
    })
}

/// Start parameters for a fit: fixed `pi` and emission matrix, uniform branching
/// probabilities and every rate at the inverse mean gap.
pub fn initial_params(
    ordered: &OrderedDataset,
    topology: &LineageTopology,
    emission: Vec<Vec<f64>>,
    pi: Vec<f64>,
) -> Result<HmtParams> {
    let gaps: Vec<f64> = (0..ordered.len())
        .filter(|&t| ordered.parent[t].is_some())
        .map(|t| ordered.y[t])
        .collect();
    let mean = gaps.iter().sum::<f64>() / gaps.len().max(1) as f64;
    let rate = if mean > 0.0 && mean.is_finite() { 1.0 / mean } else { 1.0 };
    let params = HmtParams {
        pi,
        emission,
        trans: initial_transitions(topology, rate),
    };
    params.validate(topology)?;
    Ok(params)
}

/// Fit the model on an ordered dataset, decode it and assemble the report.
pub fn infer(
    ordered: &OrderedDataset,
    topology: &LineageTopology,
    emission: Vec<Vec<f64>>,
    pi: Vec<f64>,
    options: &FitOptions,
) -> Result<ConsistencyReport> {
    let params = initial_params(ordered, topology, emission, pi).stage("params")?;
    let instance = HmtInstance::from_ordered(ordered, topology, params).stage("params")?;
    let outcome = fit(&instance, options).stage("fit")?;
    log::debug!(
        "fit finished after {} iterations (converged: {}), log-likelihood {:.6}",
        outcome.log_likelihood.len() - 1,
        outcome.converged,
        outcome.log_likelihood.last().copied().unwrap_or(f64::NAN)
    );
    let fitted = instance.with_params(outcome.params.clone());
    let (inferred, _) = viterbi(&fitted).stage("viterbi")?;
    let found = borders(ordered, &inferred).stage("borders")?;
    let cells = ordered
        .cells
        .iter()
        .enumerate()
        .map(|(t, c)| ReportCell {
            id: c.id.clone(),
            branch_id: ordered.branch_id[t],
            pseudotime: ordered.pseudotime[t],
            observed_label: c.observed_label,
            inferred_label: inferred[t],
            flagged: c.observed_label != inferred[t],
        })
        .collect();
    Ok(ConsistencyReport {
        cells,
        borders: found,
        log_likelihood: *outcome.log_likelihood.last().expect("log holds the initial value"),
        params: outcome.params,
        iterations: outcome.log_likelihood,
    })
}

/// Order the cells and check their labels.
pub fn run_pipeline(
    cells: &[CellRecord],
    topology: &LineageTopology,
    emission: Vec<Vec<f64>>,
    pi: Vec<f64>,
    config: &PipelineConfig,
) -> Result<(ConsistencyReport, Ordering)> {
    if cells.is_empty() {
        return Err(Error::Config("no cells given".into()));
    }
    let ordering = order_cells(cells, topology, &config.order)?;
    let report = infer(&ordering.ordered, topology, emission, pi, &config.fit)?;
    Ok((report, ordering))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::params::{start_probabilities, uniform_emission, DEFAULT_PI_ROOT_MASS};
    use crate::simulate::{generate, SimConfig};

    fn run(noise: u32, seed: u64) -> (ConsistencyReport, usize) {
        let data = generate(&SimConfig {
            noise_level: noise,
            seed,
            ..SimConfig::default()
        })
        .unwrap();
        let topo = LineageTopology::granulopoiesis();
        let pi = start_probabilities(&topo, DEFAULT_PI_ROOT_MASS).unwrap();
        let cfg = PipelineConfig {
            order: OrderConfig {
                seed,
                ..OrderConfig::default()
            },
            ..PipelineConfig::default()
        };
        let (report, _) = run_pipeline(&data.cells, &topo, uniform_emission(5, 0.8), pi, &cfg).unwrap();
        (report, data.cells.len())
    }

    #[test]
    fn clean_chain_in_true_order_is_consistent() {
        let data = generate(&SimConfig::default()).unwrap();
        let pt: Vec<f64> = (0..data.cells.len()).map(|i| i as f64 / 249.0).collect();
        let ordered = OrderedDataset::chain(data.cells.clone(), pt).unwrap();
        let topo = LineageTopology::granulopoiesis();
        let pi = start_probabilities(&topo, DEFAULT_PI_ROOT_MASS).unwrap();
        let report = infer(&ordered, &topo, uniform_emission(5, 0.8), pi, &FitOptions::default()).unwrap();
        assert!(report.flagged_ids().is_empty(), "{:?}", report.flagged_ids());
        let idx: Vec<usize> = report.borders.iter().map(|b| b.index).collect();
        assert_eq!(idx, vec![50, 100, 150, 200]);
    }

    #[test]
    fn clean_chain_is_nearly_consistent() {
        // Cells a hair apart across a block boundary can swap places in the
        // inferred order; nothing else may be flagged.
        for seed in 0..4 {
            let (report, n) = run(0, seed);
            assert_eq!(report.cells.len(), n);
            for id in report.flagged_ids() {
                let pos: usize = id[4..].parse().unwrap();
                assert!([50, 100, 150, 200].iter().any(|b| pos.abs_diff(*b) <= 3), "{id}");
            }
            assert!(report.flagged_ids().len() as f64 <= 0.02 * n as f64);
            assert_eq!(report.borders.len(), 4);
        }
    }

    #[test]
    fn noisy_chain_flags_a_plausible_fraction() {
        let (report, n) = run(10, 5);
        let frac = report.flagged_ids().len() as f64 / n as f64;
        assert!((0.05..=0.20).contains(&frac), "{frac}");
        for w in report.iterations.windows(2) {
            assert!(w[1] >= w[0] - 1e-8);
        }
    }

    #[test]
    fn stage_is_named_in_errors() {
        let topo = LineageTopology::chain(&["A", "B"]).unwrap();
        let cells: Vec<CellRecord> = (0..3)
            .map(|i| CellRecord {
                id: format!("c{i}"),
                features: vec![1.0, 1.0],
                observed_label: 0,
                image_ref: None,
            })
            .collect();
        let err = run_pipeline(&cells, &topo, uniform_emission(2, 0.9), vec![0.9, 0.1], &PipelineConfig::default())
            .unwrap_err();
        assert!(err.to_string().contains("embed"), "{err}");
    }
}
