//! Generalized EM for the transition parameters.
//!
//! The start distribution and (by default) the emission matrix stay fixed.
//! Each M-step runs a bounded gradient ascent on the expected complete-data
//! log-likelihood of every transition row, in the unconstrained coordinates
//! `p = softmax(alpha)` and `lambda = exp(beta)`. The step is accepted only when
//! the row objective does not decrease, which is all GEM needs.

use serde::{Deserialize, Serialize};

use super::inference::{downward, tables, upward, PosteriorSet};
use super::instance::HmtInstance;
use super::log_sum_exp;
use crate::error::Result;
use crate::model::{HmtParams, Rate};

const ALPHA_BOUND: f64 = 40.0;
const LOG_LAMBDA_MIN: f64 = -14.0;
const LOG_LAMBDA_MAX: f64 = 14.0;
const ASCENT_STEPS: usize = 50;
const MAX_HALVINGS: usize = 40;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FitOptions {
    pub max_iter: usize,
    /// Stop once an iteration improves the log-likelihood by less than this.
    pub tol: f64,
    /// Re-estimate the emission matrix as well (off for the expert error model).
    pub reestimate_emission: bool,
}

impl Default for FitOptions {
    fn default() -> Self {
        Self {
            max_iter: 100,
            tol: 1e-6,
            reestimate_emission: false,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct FitOutcome {
    pub params: HmtParams,
    /// Log-likelihood at the initial parameters followed by one entry per iteration.
    pub log_likelihood: Vec<f64>,
    pub converged: bool,
}

fn e_step(inst: &HmtInstance) -> Result<PosteriorSet> {
    let tab = tables(inst);
    let up = upward(inst, &tab)?;
    Ok(downward(inst, &tab, &up))
}

pub fn fit(instance: &HmtInstance, options: &FitOptions) -> Result<FitOutcome> {
    let mut current = instance.clone();
    let mut post = e_step(&current)?;
    let mut log = vec![post.log_likelihood];
    let mut converged = false;
    for iter in 0..options.max_iter {
        let params = m_step(&current, &post, options);
        let next = current.with_params(params);
        let next_post = e_step(&next)?;
        let gain = next_post.log_likelihood - post.log_likelihood;
        log::debug!("GEM iteration {}: log-likelihood {:.6} (gain {gain:.3e})", iter + 1, next_post.log_likelihood);
        log.push(next_post.log_likelihood);
        current = next;
        post = next_post;
        if gain < options.tol {
            converged = true;
            break;
        }
    }
    Ok(FitOutcome {
        params: current.params,
        log_likelihood: log,
        converged,
    })
}

/// Sufficient statistics of one transition row: for every edge, the expected
/// mass leaving state `k` towards each allowed target, and the edge gap.
struct RowStats {
    counts: Vec<Vec<f64>>,
    totals: Vec<f64>,
    gaps: Vec<f64>,
}

fn m_step(inst: &HmtInstance, post: &PosteriorSet, options: &FitOptions) -> HmtParams {
    let topo = &inst.topology;
    let mut params = inst.params.clone();
    for from in 0..topo.n_states() {
        let allowed = topo.allowed(from);
        if allowed.len() < 2 {
            continue;
        }
        let mut stats = RowStats {
            counts: Vec::new(),
            totals: Vec::new(),
            gaps: Vec::new(),
        };
        for t in 0..inst.len() {
            let Some(xi) = &post.xi[t] else { continue };
            let counts: Vec<f64> = allowed.iter().map(|&to| xi[from][to]).collect();
            let total: f64 = counts.iter().sum();
            if total > 1e-300 {
                stats.counts.push(counts);
                stats.totals.push(total);
                stats.gaps.push(inst.gaps[t]);
            }
        }
        if stats.totals.is_empty() {
            continue;
        }
        let mut theta: Vec<f64> = allowed
            .iter()
            .map(|&to| params.trans[&(from, to)].p.ln().max(-ALPHA_BOUND))
            .chain(allowed.iter().map(|&to| {
                params.trans[&(from, to)].lambda.ln().clamp(LOG_LAMBDA_MIN, LOG_LAMBDA_MAX)
            }))
            .collect();
        let start_q = row_objective(&stats, &theta);
        let improved = ascend(&stats, &mut theta);
        if !(improved >= start_q) {
            continue;
        }
        let m = allowed.len();
        let norm = log_sum_exp(theta[..m].iter().copied());
        let p: Vec<f64> = theta[..m].iter().map(|a| (a - norm).exp()).collect();
        let psum: f64 = p.iter().sum();
        for (i, &to) in allowed.iter().enumerate() {
            params.trans.insert(
                (from, to),
                Rate {
                    p: p[i] / psum,
                    lambda: theta[m + i].exp(),
                },
            );
        }
    }
    if options.reestimate_emission {
        let k = topo.n_states();
        for s in 0..k {
            let mass: f64 = post.gamma.iter().map(|g| g[s]).sum();
            if mass <= 1e-300 {
                continue;
            }
            let mut row = vec![0.0; k];
            for (g, &x) in post.gamma.iter().zip(&inst.observations) {
                row[x] += g[s];
            }
            let total: f64 = row.iter().sum();
            params.emission[s] = row.into_iter().map(|v| v / total).collect();
        }
    }
    params
}

/// Log transition weights of one row for gap `y` before normalization.
fn logits(theta: &[f64], y: f64) -> Vec<f64> {
    let m = theta.len() / 2;
    (0..m)
        .map(|l| theta[l] + theta[m + l] - theta[m + l].exp() * y)
        .collect()
}

/// Expected complete-data log-likelihood contributed by one row.
fn row_objective(stats: &RowStats, theta: &[f64]) -> f64 {
    let mut q = 0.0;
    for (counts, &y) in stats.counts.iter().zip(&stats.gaps) {
        let u = logits(theta, y);
        let z = log_sum_exp(u.iter().copied());
        for (c, ul) in counts.iter().zip(&u) {
            if *c > 0.0 {
                q += c * (ul - z);
            }
        }
    }
    q
}

fn row_gradient(stats: &RowStats, theta: &[f64]) -> Vec<f64> {
    let m = theta.len() / 2;
    let mut g = vec![0.0; 2 * m];
    for ((counts, &total), &y) in stats.counts.iter().zip(&stats.totals).zip(&stats.gaps) {
        let u = logits(theta, y);
        let z = log_sum_exp(u.iter().copied());
        for l in 0..m {
            let resid = counts[l] - total * (u[l] - z).exp();
            g[l] += resid;
            g[m + l] += resid * (1.0 - theta[m + l].exp() * y);
        }
    }
    g
}

fn clamp_theta(theta: &mut [f64]) {
    let m = theta.len() / 2;
    for a in &mut theta[..m] {
        *a = a.clamp(-ALPHA_BOUND, ALPHA_BOUND);
    }
    for b in &mut theta[m..] {
        *b = b.clamp(LOG_LAMBDA_MIN, LOG_LAMBDA_MAX);
    }
}

/// Projected gradient ascent with backtracking; returns the final objective.
fn ascend(stats: &RowStats, theta: &mut Vec<f64>) -> f64 {
    let total: f64 = stats.totals.iter().sum();
    let mut q = row_objective(stats, theta);
    let mut step = 1.0 / total.max(1.0);
    for _ in 0..ASCENT_STEPS {
        let g = row_gradient(stats, theta);
        if g.iter().any(|v| !v.is_finite()) {
            break;
        }
        let gnorm2: f64 = g.iter().map(|v| v * v).sum();
        if gnorm2 < 1e-20 {
            break;
        }
        let mut accepted = false;
        for _ in 0..MAX_HALVINGS {
            let mut cand: Vec<f64> = theta.iter().zip(&g).map(|(t, d)| t + step * d).collect();
            clamp_theta(&mut cand);
            let moved: f64 = cand.iter().zip(theta.iter()).zip(&g).map(|((c, t), d)| (c - t) * d).sum();
            let cq = row_objective(stats, &cand);
            if cq.is_finite() && cq >= q + 1e-4 * moved && cq > q {
                let gain = cq - q;
                *theta = cand;
                q = cq;
                step *= 2.0;
                accepted = true;
                if gain < 1e-12 * q.abs().max(1.0) {
                    return q;
                }
                break;
            }
            step *= 0.5;
        }
        if !accepted {
            break;
        }
    }
    q
}
