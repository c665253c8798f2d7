use crate::error::{Error, Result};
use crate::model::{Border, OrderedDataset};

/// Transition borders of an inferred labelling: wherever the state changes
/// between consecutive cells of a branch, a border sits halfway between their
/// pseudotimes.
pub fn borders(ordered: &OrderedDataset, inferred: &[usize]) -> Result<Vec<Border>> {
    if inferred.len() != ordered.len() {
        return Err(Error::LengthMismatch(format!(
            "{} inferred labels for {} cells",
            inferred.len(),
            ordered.len()
        )));
    }
    let mut out = Vec::new();
    for (branch, members) in ordered.branches() {
        for (pos, w) in members.windows(2).enumerate() {
            let (a, b) = (w[0], w[1]);
            if inferred[a] != inferred[b] {
                out.push(Border {
                    branch_id: branch,
                    from_state: inferred[a],
                    to_state: inferred[b],
                    pseudotime: 0.5 * (ordered.pseudotime[a] + ordered.pseudotime[b]),
                    index: pos + 1,
                });
            }
        }
    }
    Ok(out)
}
