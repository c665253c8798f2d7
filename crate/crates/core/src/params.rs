use std::collections::BTreeMap;

use crate::error::{Error, Result};
use crate::model::{check_stochastic, HmtParams, LineageTopology, Rate};

/// Default probability mass placed on the root state at the first node.
pub const DEFAULT_PI_ROOT_MASS: f64 = 0.9;

/// Expert error model for the granulopoiesis line (rows: true PMY, MY, MMY, BNE, SNE).
pub const GRANULOPOIESIS_EMISSION: [[f64; 5]; 5] = [
    [0.7, 0.25, 0.04, 0.005, 0.005],
    [0.23, 0.52, 0.24, 0.005, 0.005],
    [0.03, 0.17, 0.75, 0.045, 0.005],
    [0.005, 0.005, 0.03, 0.82, 0.14],
    [0.005, 0.005, 0.005, 0.065, 0.92],
];

pub fn granulopoiesis_emission() -> Vec<Vec<f64>> {
    GRANULOPOIESIS_EMISSION.iter().map(|r| r.to_vec()).collect()
}

/// Symmetric error model: `accuracy` on the diagonal, the rest spread evenly.
pub fn uniform_emission(k: usize, accuracy: f64) -> Vec<Vec<f64>> {
    if k == 1 {
        return vec![vec![1.0]];
    }
    let off = (1.0 - accuracy) / (k - 1) as f64;
    (0..k)
        .map(|i| (0..k).map(|j| if i == j { accuracy } else { off }).collect())
        .collect()
}

/// Start distribution with `root_mass` on the root state and the remainder spread uniformly.
pub fn start_probabilities(topology: &LineageTopology, root_mass: f64) -> Result<Vec<f64>> {
    if !(root_mass > 0.0 && root_mass < 1.0) {
        return Err(Error::Params(format!("pi_root_mass must lie in (0, 1), got {root_mass}")));
    }
    let k = topology.n_states();
    if k == 1 {
        return Ok(vec![1.0]);
    }
    let rest = (1.0 - root_mass) / (k - 1) as f64;
    Ok((0..k)
        .map(|i| if i == topology.root() { root_mass } else { rest })
        .collect())
}

/// Initial transition parameters: `p` uniform over allowed targets, every
/// `lambda` equal to `rate` (use `1 / mean gap` when the gaps are known).
pub fn initial_transitions(topology: &LineageTopology, rate: f64) -> BTreeMap<(usize, usize), Rate> {
    let mut trans = BTreeMap::new();
    for k in 0..topology.n_states() {
        let allowed = topology.allowed(k);
        let p = 1.0 / allowed.len() as f64;
        for l in allowed {
            trans.insert((k, l), Rate { p, lambda: rate });
        }
    }
    trans
}

/// Assemble parameters from the fixed start mass and emission matrix.
///
/// `mean_gap` is the mean pseudotime difference of the dataset the parameters
/// will be fitted on; when absent every rate starts at 1.
pub fn default_params(
    topology: &LineageTopology,
    pi_root_mass: f64,
    emission: Vec<Vec<f64>>,
    mean_gap: Option<f64>,
) -> Result<HmtParams> {
    check_stochastic(&emission, topology.n_states())?;
    let pi = start_probabilities(topology, pi_root_mass)?;
    let rate = match mean_gap {
        Some(g) if g > 0.0 && g.is_finite() => 1.0 / g,
        _ => 1.0,
    };
    let params = HmtParams {
        pi,
        emission,
        trans: initial_transitions(topology, rate),
    };
    params.validate(topology)?;
    Ok(params)
}
