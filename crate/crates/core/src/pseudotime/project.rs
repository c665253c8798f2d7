use std::collections::BTreeMap;

use super::embed::Embedding;
use super::skeleton::{TrajectoryKind, TrajectoryModel};
use crate::error::{Error, Result};
use crate::linalg::ranks;
use crate::model::{
    CellRecord, ConsistencyReport, LineageTopology, OrderedDataset, PseudotimeFrame,
};

/// Project cells onto the fitted trajectory and order them by pseudotime.
///
/// Curves are flipped when cells observed in the root state sit, by mean rank,
/// in the second half of the trajectory. Within each branch cells are sorted
/// by pseudotime (ties by input position); the first cell of a child branch
/// takes as predecessor the last cell of an ancestor branch at or before the
/// branch point.
pub fn project(
    embedding: &Embedding,
    model: &TrajectoryModel,
    topology: &LineageTopology,
    cells: &[CellRecord],
) -> Result<OrderedDataset> {
    let n = cells.len();
    if n != embedding.n() {
        return Err(Error::LengthMismatch(format!(
            "{n} cells but {} embedded rows",
            embedding.n()
        )));
    }
    if n == 0 {
        return Err(Error::Config("no cells to order".into()));
    }
    let landings: Vec<_> = embedding.coords.iter().map(|p| model.land(p)).collect();
    let raw: Vec<f64> = landings.iter().map(|l| l.arclength).collect();

    let lo = raw.iter().copied().fold(f64::INFINITY, f64::min);
    let hi = raw.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let mut reversed = false;
    if model.kind == TrajectoryKind::Curve && hi > lo {
        // Ranks rather than arclength, so a long sparse tail cannot outweigh where
        // most root-labelled cells sit.
        let rank = ranks(&raw);
        let root_rank: Vec<f64> = cells
            .iter()
            .zip(&rank)
            .filter(|(c, _)| c.observed_label == topology.root())
            .map(|(_, r)| *r)
            .collect();
        if !root_rank.is_empty() {
            let mean = root_rank.iter().sum::<f64>() / root_rank.len() as f64;
            reversed = mean > (n as f64 + 1.0) / 2.0;
        }
    }
    let (origin, span) = if reversed { (-hi, hi - lo) } else { (lo, hi - lo) };
    let frame = PseudotimeFrame {
        origin,
        span,
        reversed,
    };
    let pt: Vec<f64> = raw.iter().map(|&s| frame.normalize(s).clamp(0.0, 1.0)).collect();
    let branch_of: Vec<usize> = landings.iter().map(|l| model.edge_branch[l.edge]).collect();

    // Global root cell: smallest pseudotime, lowest input position on ties.
    let root_cell = (0..n)
        .min_by(|&a, &b| pt[a].total_cmp(&pt[b]).then(a.cmp(&b)))
        .unwrap();

    let mut members: BTreeMap<usize, Vec<usize>> = BTreeMap::new();
    for (i, &b) in branch_of.iter().enumerate() {
        members.entry(b).or_default().push(i);
    }
    for list in members.values_mut() {
        list.sort_by(|&a, &b| pt[a].total_cmp(&pt[b]).then(a.cmp(&b)));
    }
    let mut branch_order: Vec<usize> = vec![branch_of[root_cell]];
    branch_order.extend(
        model
            .branches
            .iter()
            .map(|b| b.id)
            .filter(|&b| b != branch_of[root_cell] && members.contains_key(&b)),
    );

    let mut order = Vec::with_capacity(n);
    for &b in &branch_order {
        order.extend_from_slice(&members[&b]);
    }
    let mut position = vec![0usize; n];
    for (pos, &i) in order.iter().enumerate() {
        position[i] = pos;
    }

    let mut parent_input: Vec<Option<usize>> = vec![None; n];
    for &b in &branch_order {
        let list = &members[&b];
        for w in list.windows(2) {
            parent_input[w[1]] = Some(w[0]);
        }
        let first = list[0];
        if first == root_cell {
            continue;
        }
        let start = model.branches[b].start();
        let threshold = frame.normalize(model.arclength[start]);
        let mut pred = None;
        let mut cur = model.branches[b].parent;
        while let Some(pb) = cur {
            if let Some(list) = members.get(&pb) {
                pred = list.iter().rev().copied().find(|&c| pt[c] <= threshold + 1e-12);
                if pred.is_some() {
                    break;
                }
            }
            cur = model.branches[pb].parent;
        }
        parent_input[first] = Some(pred.unwrap_or(root_cell));
    }

    let ordered_cells: Vec<CellRecord> = order.iter().map(|&i| cells[i].clone()).collect();
    let pseudotime: Vec<f64> = order.iter().map(|&i| pt[i]).collect();
    let branch_id: Vec<usize> = order.iter().map(|&i| branch_of[i]).collect();
    let parent: Vec<Option<usize>> = order
        .iter()
        .map(|&i| parent_input[i].map(|p| position[p]))
        .collect();
    let y: Vec<f64> = (0..n)
        .map(|t| parent[t].map_or(0.0, |p| (pseudotime[t] - pseudotime[p]).max(0.0)))
        .collect();

    Ok(OrderedDataset {
        cells: ordered_cells,
        pseudotime,
        branch_id,
        parent,
        y,
        frame,
    })
}

/// Label new cells (already embedded in the model's space) by the transition
/// interval their pseudotime falls into on their branch. A pseudotime exactly
/// on a border takes the later state.
pub fn project_new(
    model: &TrajectoryModel,
    frame: &PseudotimeFrame,
    report: &ConsistencyReport,
    new_coords: &[Vec<f64>],
) -> Result<Vec<usize>> {
    if report.cells.is_empty() {
        return Err(Error::Config("report has no cells".into()));
    }
    let mut borders: BTreeMap<usize, Vec<(f64, usize)>> = BTreeMap::new();
    for b in &report.borders {
        borders.entry(b.branch_id).or_default().push((b.pseudotime, b.to_state));
    }
    for list in borders.values_mut() {
        list.sort_by(|a, b| a.0.total_cmp(&b.0));
    }
    let state_at =
        |branch: usize, t: f64| -> usize { interval_state(model, frame, report, &borders, branch, t) };

    Ok(new_coords
        .iter()
        .map(|p| {
            let landing = model.land(p);
            let mut t = frame.normalize(landing.arclength);
            if !(0.0..=1.0).contains(&t) {
                log::warn!("new cell pseudotime {t} outside [0, 1]; clamping");
                t = t.clamp(0.0, 1.0);
            }
            state_at(model.edge_branch[landing.edge], t)
        })
        .collect())
}

fn interval_state(
    model: &TrajectoryModel,
    frame: &PseudotimeFrame,
    report: &ConsistencyReport,
    borders: &BTreeMap<usize, Vec<(f64, usize)>>,
    branch: usize,
    t: f64,
) -> usize {
    let initial = match report.cells.iter().find(|c| c.branch_id == branch) {
        Some(c) => c.inferred_label,
        // A branch without reference cells inherits its parent's state at the branch point.
        None => match model.branches.get(branch).and_then(|b| b.parent) {
            Some(parent) => {
                let at = frame.normalize(model.arclength[model.branches[branch].start()]);
                interval_state(model, frame, report, borders, parent, at)
            }
            None => report.cells[0].inferred_label,
        },
    };
    let mut state = initial;
    if let Some(list) = borders.get(&branch) {
        for &(at, to) in list {
            if t >= at {
                state = to;
            }
        }
    }
    state
}
