//! Label-noise filters that ignore developmental order.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

mod confident;
mod knn;

pub use confident::{
    confident_flag, confident_flag_from_probs, confident_joint, cross_validated_probabilities, stratified_folds,
    Logistic, L2_PENALTY,
};
pub use knn::{knn_edit, knn_flag, nearest_centroid_neighbors, nearest_neighbors, NeighborMode};

/// Output of a filter: one flag per instance and, for editing filters, the
/// relabelled vector.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FlagResult {
    pub flagged: Vec<bool>,
    pub proposed_label: Option<Vec<usize>>,
    pub method: String,
    pub hyperparams: BTreeMap<String, f64>,
}

impl FlagResult {
    pub fn n_flagged(&self) -> usize {
        self.flagged.iter().filter(|f| **f).count()
    }
}
