//! Upward–downward smoothing and max-product decoding on the node tree.
//! Everything runs in log space; structural zeros are `-inf`.

use super::instance::HmtInstance;
use super::log_sum_exp;
use super::transition::log_transition_matrix;
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct PosteriorSet {
    /// `gamma[t][k] = P(Z_t = k | X)`.
    pub gamma: Vec<Vec<f64>>,
    /// `xi[t][k][l] = P(Z_parent(t) = k, Z_t = l | X)`; `None` at the root.
    pub xi: Vec<Option<Vec<Vec<f64>>>>,
    pub log_likelihood: f64,
}

pub(crate) struct Tables {
    pub log_emit: Vec<Vec<f64>>,
    /// Per-node log transition matrix from the parent (`None` at the root).
    pub log_trans: Vec<Option<Vec<Vec<f64>>>>,
    pub log_pi: Vec<f64>,
}

pub(crate) fn tables(inst: &HmtInstance) -> Tables {
    let p = &inst.params;
    let k = inst.n_states();
    let log_emit = inst
        .observations
        .iter()
        .map(|&x| (0..k).map(|s| p.emission[s][x].ln()).collect())
        .collect();
    let log_trans = (0..inst.len())
        .map(|t| {
            inst.parent[t].map(|_| log_transition_matrix(p, &inst.topology, inst.gaps[t]))
        })
        .collect();
    Tables {
        log_emit,
        log_trans,
        log_pi: p.pi.iter().map(|v| v.ln()).collect(),
    }
}

pub(crate) struct Upward {
    /// `beta[t][k] = log P(X in subtree(t) | Z_t = k)`.
    pub beta: Vec<Vec<f64>>,
    /// `msg[t][k] = log P(X in subtree(t) | Z_parent(t) = k)`.
    pub msg: Vec<Vec<f64>>,
    pub log_likelihood: f64,
}

pub(crate) fn upward(inst: &HmtInstance, tab: &Tables) -> Result<Upward> {
    let n = inst.len();
    let k = inst.n_states();
    let mut beta = vec![vec![0.0; k]; n];
    let mut msg = vec![vec![f64::NEG_INFINITY; k]; n];
    for &t in inst.order().iter().rev() {
        let mut b = tab.log_emit[t].clone();
        for &c in inst.children(t) {
            for (bk, mk) in b.iter_mut().zip(&msg[c]) {
                *bk += mk;
            }
        }
        if b.iter().all(|v| *v == f64::NEG_INFINITY) {
            return Err(Error::ZeroLikelihood { node: t });
        }
        if let Some(a) = &tab.log_trans[t] {
            for (from, m) in msg[t].iter_mut().enumerate() {
                *m = log_sum_exp((0..k).map(|to| a[from][to] + b[to]));
            }
        }
        beta[t] = b;
    }
    let root = inst.root();
    let log_likelihood = log_sum_exp((0..k).map(|s| tab.log_pi[s] + beta[root][s]));
    if log_likelihood == f64::NEG_INFINITY {
        return Err(Error::ZeroLikelihood { node: root });
    }
    Ok(Upward {
        beta,
        msg,
        log_likelihood,
    })
}

/// Log evidence `log P(X)`.
pub fn log_likelihood(inst: &HmtInstance) -> Result<f64> {
    Ok(upward(inst, &tables(inst))?.log_likelihood)
}

/// Smoothed single-node and parent–child posteriors.
pub fn posteriors(inst: &HmtInstance) -> Result<PosteriorSet> {
    let tab = tables(inst);
    let up = upward(inst, &tab)?;
    Ok(downward(inst, &tab, &up))
}

pub(crate) fn downward(inst: &HmtInstance, tab: &Tables, up: &Upward) -> PosteriorSet {
    let n = inst.len();
    let k = inst.n_states();
    let ll = up.log_likelihood;
    let mut gamma = vec![vec![0.0; k]; n];
    let mut xi: Vec<Option<Vec<Vec<f64>>>> = vec![None; n];
    let root = inst.root();
    gamma[root] = normalized((0..k).map(|s| tab.log_pi[s] + up.beta[root][s] - ll).collect());
    for &t in inst.order() {
        let Some(p) = inst.parent[t] else { continue };
        let a = tab.log_trans[t].as_ref().expect("non-root node has a transition");
        let mut joint = vec![vec![f64::NEG_INFINITY; k]; k];
        for from in 0..k {
            let gp = gamma[p][from];
            if gp <= 0.0 || up.msg[t][from] == f64::NEG_INFINITY {
                continue;
            }
            let lg = gp.ln() - up.msg[t][from];
            for to in 0..k {
                joint[from][to] = lg + a[from][to] + up.beta[t][to];
            }
        }
        let flat: Vec<f64> = joint.iter().flatten().copied().collect();
        let flat = normalized(flat);
        let joint: Vec<Vec<f64>> = flat.chunks(k).map(|r| r.to_vec()).collect();
        for to in 0..k {
            gamma[t][to] = (0..k).map(|from| joint[from][to]).sum();
        }
        xi[t] = Some(joint);
    }
    PosteriorSet {
        gamma,
        xi,
        log_likelihood: ll,
    }
}

/// Exponentiate log weights and rescale them to sum to one.
fn normalized(logs: Vec<f64>) -> Vec<f64> {
    let z = log_sum_exp(logs.iter().copied());
    logs.into_iter().map(|v| (v - z).exp()).collect()
}

/// Most probable hidden assignment and its joint log-probability `log P(Z, X)`.
/// Ties go to the lower state index.
pub fn viterbi(inst: &HmtInstance) -> Result<(Vec<usize>, f64)> {
    let tab = tables(inst);
    let n = inst.len();
    let k = inst.n_states();
    let mut delta = vec![vec![0.0; k]; n];
    let mut best = vec![vec![f64::NEG_INFINITY; k]; n];
    let mut arg = vec![vec![0usize; k]; n];
    for &t in inst.order().iter().rev() {
        let mut d = tab.log_emit[t].clone();
        for &c in inst.children(t) {
            for (dk, bk) in d.iter_mut().zip(&best[c]) {
                *dk += bk;
            }
        }
        if d.iter().all(|v| *v == f64::NEG_INFINITY) {
            return Err(Error::ZeroLikelihood { node: t });
        }
        if let Some(a) = &tab.log_trans[t] {
            for from in 0..k {
                let mut bv = f64::NEG_INFINITY;
                let mut bi = 0;
                for to in 0..k {
                    let v = a[from][to] + d[to];
                    if v > bv {
                        bv = v;
                        bi = to;
                    }
                }
                best[t][from] = bv;
                arg[t][from] = bi;
            }
        }
        delta[t] = d;
    }
    let root = inst.root();
    let mut top = f64::NEG_INFINITY;
    let mut top_state = 0;
    for s in 0..k {
        let v = tab.log_pi[s] + delta[root][s];
        if v > top {
            top = v;
            top_state = s;
        }
    }
    if top == f64::NEG_INFINITY {
        return Err(Error::ZeroLikelihood { node: root });
    }
    let mut states = vec![0usize; n];
    states[root] = top_state;
    for &t in inst.order() {
        if let Some(p) = inst.parent[t] {
            states[t] = arg[t][states[p]];
        }
    }
    Ok((states, top))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::LineageTopology;
    use crate::params::{default_params, uniform_emission};

    fn eye(k: usize) -> Vec<Vec<f64>> {
        (0..k).map(|i| (0..k).map(|j| if i == j { 1.0 } else { 0.0 }).collect()).collect()
    }

    #[test]
    fn single_node() {
        let t = LineageTopology::chain(&["A", "B", "C"]).unwrap();
        let p = default_params(&t, 0.6, uniform_emission(3, 0.7), None).unwrap();
        let inst = HmtInstance::chain(t, p.clone(), vec![2], vec![0.0]).unwrap();
        let expect: f64 = (0..3).map(|k| p.pi[k] * p.emission[k][2]).sum::<f64>().ln();
        assert!((log_likelihood(&inst).unwrap() - expect).abs() < 1e-14);
        let (path, lp) = viterbi(&inst).unwrap();
        // pi = (0.6, 0.2, 0.2); emission of label 3: (0.15, 0.15, 0.7)
        assert_eq!(path, vec![2]);
        assert!((lp - (0.2f64 * 0.7).ln()).abs() < 1e-14);
    }

    #[test]
    fn single_state_sums_emissions() {
        let t = LineageTopology::chain(&["A"]).unwrap();
        let p = default_params(&t, 0.5, vec![vec![1.0]], None).unwrap();
        let inst = HmtInstance::chain(t, p, vec![0; 4], vec![0.0, 0.1, 0.2, 0.3]).unwrap();
        assert_eq!(log_likelihood(&inst).unwrap(), 0.0);
    }

    #[test]
    fn identity_emission_gives_one_hot_posteriors() {
        let t = LineageTopology::chain(&["A", "B", "C"]).unwrap();
        let p = default_params(&t, 0.9, eye(3), Some(0.1)).unwrap();
        let obs = vec![0, 0, 1, 1, 1, 2];
        let inst = HmtInstance::chain(t, p, obs.clone(), vec![0.0, 0.1, 0.1, 0.1, 0.1, 0.1]).unwrap();
        let post = posteriors(&inst).unwrap();
        for (g, &x) in post.gamma.iter().zip(&obs) {
            for (k, v) in g.iter().enumerate() {
                assert_eq!(*v, if k == x { 1.0 } else { 0.0 });
            }
        }
        assert_eq!(viterbi(&inst).unwrap().0, obs);
    }

    #[test]
    fn impossible_observation_names_node() {
        let t = LineageTopology::chain(&["A", "B"]).unwrap();
        let p = default_params(&t, 0.9, eye(2), None).unwrap();
        // B cannot go back to A
        let inst = HmtInstance::chain(t, p, vec![1, 0], vec![0.0, 0.1]).unwrap();
        match log_likelihood(&inst) {
            Err(Error::ZeroLikelihood { .. }) => {}
            other => panic!("expected zero likelihood, got {other:?}"),
        }
        assert!(viterbi(&inst).is_err());
    }
}
