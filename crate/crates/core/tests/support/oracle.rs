//! Exhaustive-enumeration reference for small hidden Markov trees, and a
//! generator of random instances to compare against.

#![allow(dead_code)]

use std::collections::BTreeMap;

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use timely_core::markov::HmtInstance;
use timely_core::{HmtParams, LineageTopology, Rate};

/// Transition probability straight from the closed form, in linear space.
pub fn direct_transition(params: &HmtParams, topo: &LineageTopology, from: usize, to: usize, y: f64) -> f64 {
    if !topo.is_allowed(from, to) {
        return 0.0;
    }
    if topo.is_end_stage(from) {
        return 1.0;
    }
    let w = |l: usize| {
        let r = params.trans[&(from, l)];
        r.p * r.lambda * (-r.lambda * y).exp()
    };
    let total: f64 = topo.allowed(from).into_iter().map(w).sum();
    w(to) / total
}

pub struct Enumeration {
    pub log_likelihood: f64,
    pub gamma: Vec<Vec<f64>>,
    /// `xi[t][k][l]` for non-root nodes.
    pub xi: Vec<Option<Vec<Vec<f64>>>>,
    pub map_path: Vec<usize>,
    pub map_log_prob: f64,
}

/// Visit every hidden assignment in lexicographic order (node 0 most significant).
pub fn enumerate(inst: &HmtInstance) -> Enumeration {
    let t_len = inst.len();
    let k = inst.n_states();
    let p = &inst.params;
    let mut z = vec![0usize; t_len];
    let mut total = 0.0;
    let mut gamma = vec![vec![0.0; k]; t_len];
    let mut xi: Vec<Option<Vec<Vec<f64>>>> =
        inst.parent.iter().map(|q| q.map(|_| vec![vec![0.0; k]; k])).collect();
    let mut best = f64::NEG_INFINITY;
    let mut best_path = z.clone();
    loop {
        let mut prob = 1.0;
        for t in 0..t_len {
            prob *= p.emission[z[t]][inst.observations[t]];
            prob *= match inst.parent[t] {
                None => p.pi[z[t]],
                Some(q) => direct_transition(p, &inst.topology, z[q], z[t], inst.gaps[t]),
            };
        }
        total += prob;
        for t in 0..t_len {
            gamma[t][z[t]] += prob;
            if let (Some(q), Some(x)) = (inst.parent[t], xi[t].as_mut()) {
                x[z[q]][z[t]] += prob;
            }
        }
        if prob > 0.0 && prob.ln() > best {
            best = prob.ln();
            best_path = z.clone();
        }
        // next assignment
        let mut i = t_len;
        loop {
            if i == 0 {
                let norm = |v: &mut Vec<f64>| v.iter_mut().for_each(|x| *x /= total);
                gamma.iter_mut().for_each(norm);
                for x in xi.iter_mut().flatten() {
                    x.iter_mut().for_each(norm);
                }
                return Enumeration {
                    log_likelihood: total.ln(),
                    gamma,
                    xi,
                    map_path: best_path,
                    map_log_prob: best,
                };
            }
            i -= 1;
            z[i] += 1;
            if z[i] < k {
                break;
            }
            z[i] = 0;
        }
    }
}

/// Random lineage with `k` states: a chain or a random rooted tree.
pub fn random_topology(rng: &mut ChaCha8Rng, k: usize, chain: bool) -> LineageTopology {
    let names: Vec<String> = (0..k).map(|i| format!("S{i}")).collect();
    let edges: Vec<(usize, usize)> = (1..k)
        .map(|i| if chain { (i - 1, i) } else { (rng.random_range(0..i), i) })
        .collect();
    LineageTopology::new(names, 0, &edges).unwrap()
}

fn random_simplex(rng: &mut ChaCha8Rng, n: usize) -> Vec<f64> {
    let raw: Vec<f64> = (0..n).map(|_| rng.random_range(0.05..1.0)).collect();
    let s: f64 = raw.iter().sum();
    raw.into_iter().map(|v| v / s).collect()
}

pub fn random_params(rng: &mut ChaCha8Rng, topo: &LineageTopology) -> HmtParams {
    let k = topo.n_states();
    let mut trans = BTreeMap::new();
    for from in 0..k {
        let allowed = topo.allowed(from);
        let p = if topo.is_end_stage(from) { vec![1.0] } else { random_simplex(rng, allowed.len()) };
        for (i, &to) in allowed.iter().enumerate() {
            trans.insert(
                (from, to),
                Rate {
                    p: p[i],
                    lambda: rng.random_range(0.2..5.0),
                },
            );
        }
    }
    HmtParams {
        pi: random_simplex(rng, k),
        emission: (0..k).map(|_| random_simplex(rng, k)).collect(),
        trans,
    }
}

/// Random instance with `t` nodes; node 0 is the root and every other node
/// picks an earlier parent (always the previous node when `chain`).
pub fn random_instance(rng: &mut ChaCha8Rng, t: usize, k: usize, chain: bool) -> HmtInstance {
    let topo = random_topology(rng, k, chain);
    let params = random_params(rng, &topo);
    let parent: Vec<Option<usize>> = (0..t)
        .map(|i| match i {
            0 => None,
            _ if chain => Some(i - 1),
            _ => Some(rng.random_range(0..i)),
        })
        .collect();
    let gaps: Vec<f64> = (0..t).map(|i| if i == 0 { 0.0 } else { rng.random_range(0.0..2.0) }).collect();
    let obs: Vec<usize> = (0..t).map(|_| rng.random_range(0..k)).collect();
    HmtInstance::new(topo, params, obs, parent, gaps).unwrap()
}
