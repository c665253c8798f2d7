use crate::error::{Error, Result};
use crate::model::{HmtParams, LineageTopology, OrderedDataset};

/// Observed labels arranged on a rooted node tree, with the pseudotime gap of
/// every parent → child edge and the model parameters.
#[derive(Debug, Clone, PartialEq)]
pub struct HmtInstance {
    pub topology: LineageTopology,
    pub params: HmtParams,
    pub observations: Vec<usize>,
    pub parent: Vec<Option<usize>>,
    pub gaps: Vec<f64>,
    children: Vec<Vec<usize>>,
    /// Nodes with every parent listed before its children.
    order: Vec<usize>,
    root: usize,
}

impl HmtInstance {
    pub fn new(
        topology: LineageTopology,
        params: HmtParams,
        observations: Vec<usize>,
        parent: Vec<Option<usize>>,
        gaps: Vec<f64>,
    ) -> Result<Self> {
        let t = observations.len();
        if t == 0 {
            return Err(Error::Config("instance has no nodes".into()));
        }
        if parent.len() != t || gaps.len() != t {
            return Err(Error::LengthMismatch(format!(
                "{t} observations, {} parents, {} gaps",
                parent.len(),
                gaps.len()
            )));
        }
        params.validate(&topology)?;
        let k = topology.n_states();
        if let Some(i) = observations.iter().position(|&x| x >= k) {
            return Err(Error::Config(format!("observation at node {i} outside 1..{k}")));
        }
        if let Some(i) = gaps.iter().position(|g| !(g.is_finite() && *g >= 0.0)) {
            return Err(Error::Config(format!("gap at node {i} must be finite and non-negative")));
        }
        let roots: Vec<usize> = (0..t).filter(|&i| parent[i].is_none()).collect();
        if roots.len() != 1 {
            return Err(Error::Config(format!("node tree must have one root, found {}", roots.len())));
        }
        let root = roots[0];
        let mut children = vec![Vec::new(); t];
        for (i, p) in parent.iter().enumerate() {
            if let Some(p) = *p {
                if p >= t || p == i {
                    return Err(Error::Config(format!("node {i} has invalid parent {p}")));
                }
                children[p].push(i);
            }
        }
        let mut order = Vec::with_capacity(t);
        let mut stack = vec![root];
        while let Some(v) = stack.pop() {
            order.push(v);
            stack.extend(children[v].iter().rev());
        }
        if order.len() != t {
            return Err(Error::Config("node parents contain a cycle".into()));
        }
        Ok(Self {
            topology,
            params,
            observations,
            parent,
            gaps,
            children,
            order,
            root,
        })
    }

    /// Chain instance: node `t` has parent `t - 1`.
    pub fn chain(
        topology: LineageTopology,
        params: HmtParams,
        observations: Vec<usize>,
        gaps: Vec<f64>,
    ) -> Result<Self> {
        let parent = (0..observations.len()).map(|t| t.checked_sub(1)).collect();
        Self::new(topology, params, observations, parent, gaps)
    }

    pub fn from_ordered(
        ordered: &OrderedDataset,
        topology: &LineageTopology,
        params: HmtParams,
    ) -> Result<Self> {
        Self::new(
            topology.clone(),
            params,
            ordered.labels(),
            ordered.parent.clone(),
            ordered.y.clone(),
        )
    }

    pub fn with_params(&self, params: HmtParams) -> Self {
        Self {
            params,
            ..self.clone()
        }
    }

    pub fn len(&self) -> usize {
        self.observations.len()
    }

    pub fn is_empty(&self) -> bool {
        self.observations.is_empty()
    }

    pub fn n_states(&self) -> usize {
        self.topology.n_states()
    }

    pub fn root(&self) -> usize {
        self.root
    }

    pub fn children(&self, t: usize) -> &[usize] {
        &self.children[t]
    }

    /// Parents-first traversal order.
    pub fn order(&self) -> &[usize] {
        &self.order
    }

    /// Mean gap over non-root nodes (used to initialise the rates).
    pub fn mean_gap(&self) -> Option<f64> {
        let gaps: Vec<f64> = (0..self.len())
            .filter(|&t| self.parent[t].is_some())
            .map(|t| self.gaps[t])
            .collect();
        if gaps.is_empty() {
            None
        } else {
            Some(gaps.iter().sum::<f64>() / gaps.len() as f64)
        }
    }
}
