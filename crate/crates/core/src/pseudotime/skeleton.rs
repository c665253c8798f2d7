use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{dist, dot, sq_dist};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TrajectoryKind {
    Curve,
    Tree,
}

impl std::str::FromStr for TrajectoryKind {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, String> {
        match s {
            "curve" => Ok(Self::Curve),
            "tree" => Ok(Self::Tree),
            other => Err(format!("unknown trajectory kind {other:?}")),
        }
    }
}

/// Maximal skeleton path between the root, branch points and leaves.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Branch {
    pub id: usize,
    /// Skeleton vertices from the branch start to its end.
    pub vertices: Vec<usize>,
    pub parent: Option<usize>,
}

impl Branch {
    pub fn start(&self) -> usize {
        self.vertices[0]
    }
}

/// Fitted trajectory: a polyline (curve) or a rooted skeleton tree, both
/// stored as vertices plus root-outward edges.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrajectoryModel {
    pub kind: TrajectoryKind,
    pub vertices: Vec<Vec<f64>>,
    /// Directed `(parent, child)` edges oriented away from `root`.
    pub edges: Vec<(usize, usize)>,
    pub root: usize,
    /// Distance from the root along the skeleton, per vertex.
    pub arclength: Vec<f64>,
    pub branches: Vec<Branch>,
    /// Branch containing each edge.
    pub edge_branch: Vec<usize>,
}

/// Where a point lands on the skeleton.
#[derive(Debug, Clone, Copy, PartialEq)]
pub(crate) struct Landing {
    pub edge: usize,
    /// Raw arclength from the root; may leave the skeleton's range on terminal edges.
    pub arclength: f64,
    pub distance: f64,
}

impl TrajectoryModel {
    /// Build a model from undirected skeleton edges and a root vertex.
    pub fn from_skeleton(
        kind: TrajectoryKind,
        vertices: Vec<Vec<f64>>,
        undirected: &[(usize, usize)],
        root: usize,
    ) -> Result<Self> {
        let nv = vertices.len();
        if nv < 2 {
            return Err(Error::Degenerate("a trajectory needs at least two vertices".into()));
        }
        if undirected.len() != nv - 1 || root >= nv {
            return Err(Error::Degenerate("skeleton must be a spanning tree".into()));
        }
        let mut adj = vec![Vec::new(); nv];
        for &(a, b) in undirected {
            adj[a].push(b);
            adj[b].push(a);
        }
        for a in &mut adj {
            a.sort_unstable();
        }
        // Orient edges by a depth-first walk from the root.
        let mut parent = vec![None; nv];
        let mut seen = vec![false; nv];
        let mut arclength = vec![0.0; nv];
        let mut children = vec![Vec::new(); nv];
        let mut stack = vec![root];
        seen[root] = true;
        let mut visited = 0;
        while let Some(v) = stack.pop() {
            visited += 1;
            for &w in adj[v].iter().rev() {
                if !seen[w] {
                    seen[w] = true;
                    parent[w] = Some(v);
                    arclength[w] = arclength[v] + dist(&vertices[v], &vertices[w]);
                    children[v].push(w);
                    stack.push(w);
                }
            }
        }
        if visited != nv {
            return Err(Error::Degenerate("skeleton is not connected".into()));
        }
        for c in &mut children {
            c.sort_unstable();
        }

        let mut edges = Vec::with_capacity(nv - 1);
        let mut edge_branch = Vec::with_capacity(nv - 1);
        let mut branches: Vec<Branch> = Vec::new();
        // (start vertex, first child, parent branch)
        let mut pending: Vec<(usize, usize, Option<usize>)> = children[root]
            .iter()
            .rev()
            .map(|&c| (root, c, None))
            .collect();
        while let Some((start, first, parent_branch)) = pending.pop() {
            let id = branches.len();
            let mut path = vec![start];
            let mut prev = start;
            let mut cur = first;
            loop {
                edges.push((prev, cur));
                edge_branch.push(id);
                path.push(cur);
                if children[cur].len() == 1 {
                    prev = cur;
                    cur = children[cur][0];
                } else {
                    break;
                }
            }
            for &c in children[cur].iter().rev() {
                pending.push((cur, c, Some(id)));
            }
            branches.push(Branch {
                id,
                vertices: path,
                parent: parent_branch,
            });
        }
        Ok(Self {
            kind,
            vertices,
            edges,
            root,
            arclength,
            branches,
            edge_branch,
        })
    }

    pub fn degree(&self, v: usize) -> usize {
        self.edges.iter().filter(|(a, b)| *a == v || *b == v).count()
    }

    fn child_count(&self, v: usize) -> usize {
        self.edges.iter().filter(|(a, _)| *a == v).count()
    }

    /// Project a point to the nearest skeleton edge. Points beyond a leaf, or
    /// before a root of degree one, extend the terminal edge linearly.
    pub(crate) fn land(&self, p: &[f64]) -> Landing {
        let mut best: Option<(Landing, f64)> = None;
        for (e, &(a, b)) in self.edges.iter().enumerate() {
            let va = &self.vertices[a];
            let vb = &self.vertices[b];
            let dir: Vec<f64> = vb.iter().zip(va).map(|(x, y)| x - y).collect();
            let len2 = dot(&dir, &dir);
            let rel: Vec<f64> = p.iter().zip(va).map(|(x, y)| x - y).collect();
            let raw_t = if len2 > 0.0 { dot(&rel, &dir) / len2 } else { 0.0 };
            let t = raw_t.clamp(0.0, 1.0);
            let foot: Vec<f64> = va.iter().zip(&dir).map(|(x, d)| x + t * d).collect();
            let d2 = sq_dist(p, &foot);
            if best.as_ref().is_none_or(|(_, bd)| d2 < *bd) {
                let len = len2.sqrt();
                let mut s_t = t;
                if raw_t > 1.0 && self.child_count(b) == 0 {
                    s_t = raw_t;
                }
                if raw_t < 0.0 && a == self.root && self.degree(a) == 1 {
                    s_t = raw_t;
                }
                best = Some((
                    Landing {
                        edge: e,
                        arclength: self.arclength[a] + s_t * len,
                        distance: d2.sqrt(),
                    },
                    d2,
                ));
            }
        }
        best.expect("model has at least one edge").0
    }

    /// Vertex order along a curve model (root first).
    pub fn path(&self) -> Vec<usize> {
        let mut out = vec![self.root];
        for &(_, b) in &self.edges {
            out.push(b);
        }
        out
    }
}
