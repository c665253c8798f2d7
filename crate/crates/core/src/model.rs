//! Shared data model.
//!
//! State indices are 0-based everywhere in memory. Every file format and the
//! review API use 1-based labels; the conversion happens at serialization
//! time through [`one_based`].

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Tolerance used when checking that probability vectors sum to one.
pub const STOCHASTIC_TOL: f64 = 1e-12;

/// One cell: features plus the (possibly wrong) expert label.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CellRecord {
    pub id: String,
    pub features: Vec<f64>,
    #[serde(with = "one_based")]
    pub observed_label: usize,
    pub image_ref: Option<String>,
}

/// Directed lineage tree over cell-type states. Self-transitions are implicit.
#[derive(Debug, Clone, PartialEq)]
pub struct LineageTopology {
    states: Vec<String>,
    root: usize,
    parent: Vec<Option<usize>>,
    children: Vec<Vec<usize>>,
}

impl LineageTopology {
    pub fn new(states: Vec<String>, root: usize, edges: &[(usize, usize)]) -> Result<Self> {
        let k = states.len();
        if k == 0 {
            return Err(Error::Topology("no states".into()));
        }
        for (i, s) in states.iter().enumerate() {
            if states[..i].contains(s) {
                return Err(Error::Topology(format!("duplicate state name {s:?}")));
            }
        }
        if root >= k {
            return Err(Error::Topology(format!("root index {root} out of range")));
        }
        let mut parent = vec![None; k];
        let mut children = vec![Vec::new(); k];
        for &(p, c) in edges {
            if p >= k || c >= k {
                return Err(Error::Topology(format!("edge ({p}, {c}) references unknown state")));
            }
            if p == c {
                continue;
            }
            if c == root {
                return Err(Error::Topology(format!(
                    "root {:?} cannot have a parent (cycle through the root)",
                    states[root]
                )));
            }
            if let Some(prev) = parent[c] {
                if prev == p {
                    continue;
                }
                return Err(Error::Topology(format!(
                    "state {:?} has multiple parents ({:?}, {:?})",
                    states[c], states[prev], states[p]
                )));
            }
            parent[c] = Some(p);
            children[p].push(c);
        }
        for ch in &mut children {
            ch.sort_unstable();
        }
        // Every state must reach the root by following parents.
        for start in 0..k {
            let mut cur = start;
            let mut steps = 0;
            while cur != root {
                match parent[cur] {
                    Some(p) => cur = p,
                    None => {
                        return Err(Error::Topology(format!(
                            "state {:?} is not reachable from root {:?}",
                            states[start], states[root]
                        )))
                    }
                }
                steps += 1;
                if steps > k {
                    return Err(Error::Topology(format!(
                        "cycle involving state {:?}",
                        states[start]
                    )));
                }
            }
        }
        Ok(Self {
            states,
            root,
            parent,
            children,
        })
    }

    /// Linear lineage `names[0] -> names[1] -> ...` rooted at the first state.
    pub fn chain<S: AsRef<str>>(names: &[S]) -> Result<Self> {
        let states: Vec<String> = names.iter().map(|s| s.as_ref().to_string()).collect();
        let edges: Vec<(usize, usize)> = (1..states.len()).map(|i| (i - 1, i)).collect();
        Self::new(states, 0, &edges)
    }

    /// The five-stage granulopoiesis line PMY → MY → MMY → BNE → SNE.
    pub fn granulopoiesis() -> Self {
        Self::chain(&["PMY", "MY", "MMY", "BNE", "SNE"]).expect("static chain is valid")
    }

    pub fn n_states(&self) -> usize {
        self.states.len()
    }

    pub fn states(&self) -> &[String] {
        &self.states
    }

    pub fn root(&self) -> usize {
        self.root
    }

    pub fn parent(&self, k: usize) -> Option<usize> {
        self.parent[k]
    }

    pub fn children(&self, k: usize) -> &[usize] {
        &self.children[k]
    }

    pub fn is_end_stage(&self, k: usize) -> bool {
        self.children[k].is_empty()
    }

    /// Targets reachable from `k` in one step: itself followed by its children.
    pub fn allowed(&self, k: usize) -> Vec<usize> {
        let mut out = Vec::with_capacity(1 + self.children[k].len());
        out.push(k);
        out.extend_from_slice(&self.children[k]);
        out
    }

    pub fn is_allowed(&self, from: usize, to: usize) -> bool {
        from == to || self.parent[to] == Some(from)
    }

    /// Non-self edges as (parent, child) pairs, ordered by child index.
    pub fn edges(&self) -> Vec<(usize, usize)> {
        (0..self.n_states())
            .filter_map(|c| self.parent[c].map(|p| (p, c)))
            .collect()
    }

    pub fn state_index(&self, name: &str) -> Option<usize> {
        self.states.iter().position(|s| s == name)
    }

    /// Depth of each state below the root.
    pub fn depth(&self, k: usize) -> usize {
        let mut d = 0;
        let mut cur = k;
        while let Some(p) = self.parent[cur] {
            cur = p;
            d += 1;
        }
        d
    }

    /// True when `anc` lies on the path from the root to `k` (inclusive).
    pub fn is_ancestor_or_self(&self, anc: usize, k: usize) -> bool {
        let mut cur = Some(k);
        while let Some(c) = cur {
            if c == anc {
                return true;
            }
            cur = self.parent[c];
        }
        false
    }
}

/// Parameters of one allowed transition `k -> l`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Rate {
    pub p: f64,
    pub lambda: f64,
}

/// Start probabilities, emission matrix and parametric transition weights.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "crate::io::ParamsFile", into = "crate::io::ParamsFile")]
pub struct HmtParams {
    pub pi: Vec<f64>,
    pub emission: Vec<Vec<f64>>,
    pub trans: BTreeMap<(usize, usize), Rate>,
}

impl HmtParams {
    pub fn n_states(&self) -> usize {
        self.pi.len()
    }

    pub fn rate(&self, from: usize, to: usize) -> Option<Rate> {
        self.trans.get(&(from, to)).copied()
    }

    /// Check every invariant against `topology`.
    pub fn validate(&self, topology: &LineageTopology) -> Result<()> {
        let k = topology.n_states();
        if self.pi.len() != k {
            return Err(Error::Params(format!("pi has length {}, expected {k}", self.pi.len())));
        }
        check_distribution("pi", &self.pi)?;
        check_stochastic(&self.emission, k)?;
        for (&(from, to), rate) in &self.trans {
            if from >= k || to >= k || !topology.is_allowed(from, to) {
                return Err(Error::Params(format!(
                    "transition {}->{} is not allowed by the topology",
                    from + 1,
                    to + 1
                )));
            }
            if !(0.0..=1.0).contains(&rate.p) || !rate.p.is_finite() {
                return Err(Error::Params(format!(
                    "p for {}->{} outside [0,1]: {}",
                    from + 1,
                    to + 1,
                    rate.p
                )));
            }
            if !(rate.lambda > 0.0) || !rate.lambda.is_finite() {
                return Err(Error::Params(format!(
                    "lambda for {}->{} must be positive: {}",
                    from + 1,
                    to + 1,
                    rate.lambda
                )));
            }
        }
        for from in 0..k {
            let allowed = topology.allowed(from);
            let mut sum = 0.0;
            for &to in &allowed {
                match self.trans.get(&(from, to)) {
                    Some(r) => sum += r.p,
                    None => {
                        return Err(Error::Params(format!(
                            "missing transition {}->{}",
                            from + 1,
                            to + 1
                        )))
                    }
                }
            }
            if (sum - 1.0).abs() > STOCHASTIC_TOL {
                return Err(Error::Params(format!(
                    "transition probabilities out of state {} sum to {sum}",
                    from + 1
                )));
            }
            if topology.is_end_stage(from) && self.trans[&(from, from)].p != 1.0 {
                return Err(Error::Params(format!(
                    "end stage {} must have p = 1 for its self-transition",
                    from + 1
                )));
            }
        }
        Ok(())
    }
}

pub(crate) fn check_distribution(what: &str, v: &[f64]) -> Result<()> {
    if v.iter().any(|x| !x.is_finite() || *x < 0.0) {
        return Err(Error::Params(format!("{what} has negative or non-finite entries")));
    }
    let sum: f64 = v.iter().sum();
    if (sum - 1.0).abs() > STOCHASTIC_TOL {
        return Err(Error::Params(format!("{what} sums to {sum}, expected 1")));
    }
    Ok(())
}

pub(crate) fn check_stochastic(m: &[Vec<f64>], k: usize) -> Result<()> {
    if m.len() != k || m.iter().any(|r| r.len() != k) {
        return Err(Error::Params(format!("emission matrix must be {k}x{k}")));
    }
    for (i, row) in m.iter().enumerate() {
        check_distribution(&format!("emission row {}", i + 1), row)?;
    }
    Ok(())
}

/// Affine map from raw arclength to normalized pseudotime.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PseudotimeFrame {
    /// Oriented arclength mapped to pseudotime 0.
    pub origin: f64,
    /// Raw arclength span mapped onto [0, 1].
    pub span: f64,
    /// Arclength is negated before shifting when set (trajectory runs backwards).
    pub reversed: bool,
}

impl PseudotimeFrame {
    pub fn identity() -> Self {
        Self {
            origin: 0.0,
            span: 1.0,
            reversed: false,
        }
    }

    pub fn normalize(&self, arclength: f64) -> f64 {
        let oriented = if self.reversed { -arclength } else { arclength };
        if self.span > 0.0 {
            (oriented - self.origin) / self.span
        } else {
            0.0
        }
    }
}

/// Cells in trajectory order together with their ordering structure.
#[derive(Debug, Clone, PartialEq)]
pub struct OrderedDataset {
    pub cells: Vec<CellRecord>,
    pub pseudotime: Vec<f64>,
    pub branch_id: Vec<usize>,
    /// Predecessor of each cell in the ordering structure; `None` only for the root cell.
    pub parent: Vec<Option<usize>>,
    /// Pseudotime gap to the predecessor; 0 for the root cell.
    pub y: Vec<f64>,
    pub frame: PseudotimeFrame,
}

impl OrderedDataset {
    pub fn len(&self) -> usize {
        self.cells.len()
    }

    pub fn is_empty(&self) -> bool {
        self.cells.is_empty()
    }

    pub fn labels(&self) -> Vec<usize> {
        self.cells.iter().map(|c| c.observed_label).collect()
    }

    /// Chain ordering of cells already sorted by pseudotime (single branch).
    pub fn chain(cells: Vec<CellRecord>, pseudotime: Vec<f64>) -> Result<Self> {
        if cells.len() != pseudotime.len() {
            return Err(Error::LengthMismatch(format!(
                "{} cells but {} pseudotimes",
                cells.len(),
                pseudotime.len()
            )));
        }
        let n = cells.len();
        let parent: Vec<Option<usize>> = (0..n).map(|t| t.checked_sub(1)).collect();
        let y = (0..n)
            .map(|t| if t == 0 { 0.0 } else { pseudotime[t] - pseudotime[t - 1] })
            .collect::<Vec<_>>();
        if y.iter().any(|v| *v < 0.0) {
            return Err(Error::Config("pseudotime must be non-decreasing along a chain".into()));
        }
        Ok(Self {
            cells,
            pseudotime,
            branch_id: vec![0; n],
            parent,
            y,
            frame: PseudotimeFrame::identity(),
        })
    }

    /// Indices of each branch's cells in ordering order.
    pub fn branches(&self) -> BTreeMap<usize, Vec<usize>> {
        let mut out: BTreeMap<usize, Vec<usize>> = BTreeMap::new();
        for (i, &b) in self.branch_id.iter().enumerate() {
            out.entry(b).or_default().push(i);
        }
        out
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReportCell {
    pub id: String,
    pub branch_id: usize,
    pub pseudotime: f64,
    #[serde(with = "one_based")]
    pub observed_label: usize,
    #[serde(with = "one_based")]
    pub inferred_label: usize,
    pub flagged: bool,
}

/// Pseudotime at which the inferred state changes along one branch.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Border {
    pub branch_id: usize,
    #[serde(with = "one_based")]
    pub from_state: usize,
    #[serde(with = "one_based")]
    pub to_state: usize,
    pub pseudotime: f64,
    /// Position within the branch of the first cell in the new state.
    pub index: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConsistencyReport {
    pub cells: Vec<ReportCell>,
    pub borders: Vec<Border>,
    pub log_likelihood: f64,
    pub params: HmtParams,
    /// Log-likelihood after each GEM iteration, starting at the initial parameters.
    #[serde(default)]
    pub iterations: Vec<f64>,
}

impl ConsistencyReport {
    pub fn flagged_ids(&self) -> Vec<&str> {
        self.cells
            .iter()
            .filter(|c| c.flagged)
            .map(|c| c.id.as_str())
            .collect()
    }

    pub fn inferred_labels(&self) -> Vec<usize> {
        self.cells.iter().map(|c| c.inferred_label).collect()
    }
}

/// Serde adapter writing 0-based state indices as 1-based labels.
pub mod one_based {
    use serde::{de::Error as _, Deserialize, Deserializer, Serializer};

    pub fn serialize<S: Serializer>(v: &usize, s: S) -> Result<S::Ok, S::Error> {
        s.serialize_u64(*v as u64 + 1)
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<usize, D::Error> {
        let v = u64::deserialize(d)?;
        if v == 0 {
            return Err(D::Error::custom("labels are 1-based"));
        }
        Ok((v - 1) as usize)
    }
}
