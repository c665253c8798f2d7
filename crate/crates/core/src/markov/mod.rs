//! Inhomogeneous hidden Markov trees over pseudotime-ordered labels.
//!
//! Hidden states are the true cell types, observations are the expert labels,
//! and each parent → child edge carries its own transition matrix built from
//! the pseudotime gap of that edge.

mod borders;
mod gem;
mod inference;
mod instance;
mod transition;

pub use borders::borders;
pub use gem::{fit, FitOptions, FitOutcome};
pub use inference::{log_likelihood, posteriors, viterbi, PosteriorSet};
pub use instance::HmtInstance;
pub use transition::{log_transition_matrix, transition_matrix};

pub(crate) fn log_sum_exp(values: impl IntoIterator<Item = f64>) -> f64 {
    let v: Vec<f64> = values.into_iter().collect();
    let max = v.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if max == f64::NEG_INFINITY {
        return f64::NEG_INFINITY;
    }
    if max == f64::INFINITY {
        return f64::INFINITY;
    }
    max + v.iter().map(|x| (x - max).exp()).sum::<f64>().ln()
}
