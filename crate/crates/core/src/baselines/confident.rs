//! Confident learning: out-of-sample class probabilities from a
//! cross-validated multinomial logistic regression, a thresholded confident
//! joint, and prune-by-noise-rate selection.

use std::collections::BTreeMap;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::FlagResult;
use crate::error::{Error, Result};

/// L2 penalty of the logistic regression.
pub const L2_PENALTY: f64 = 1e-3;
const GD_ITERS: usize = 400;

/// Multinomial logistic regression with an intercept, trained by Nesterov
/// accelerated gradient descent on the penalized mean log-loss.
#[derive(Debug, Clone)]
pub struct Logistic {
    /// `weights[c]` holds `d` coefficients followed by the intercept.
    weights: Vec<Vec<f64>>,
}

fn softmax_in_place(v: &mut [f64]) {
    let m = v.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let mut s = 0.0;
    for x in v.iter_mut() {
        *x = (*x - m).exp();
        s += *x;
    }
    v.iter_mut().for_each(|x| *x /= s);
}

impl Logistic {
    pub fn fit(x: &[&[f64]], y: &[usize], n_classes: usize, l2: f64) -> Self {
        let n = x.len();
        let d = x[0].len();
        let cols = d + 1;
        // Lipschitz bound of the gradient: 0.5 * largest eigenvalue of X'X / n plus the penalty.
        let lmax = power_iteration(x, cols);
        let step = 1.0 / (0.5 * lmax + l2);
        let mut w = vec![vec![0.0; cols]; n_classes];
        let mut prev = w.clone();
        let mut probs = vec![0.0; n_classes];
        for it in 0..GD_ITERS {
            let mom = it as f64 / (it as f64 + 3.0);
            let look: Vec<Vec<f64>> = w
                .iter()
                .zip(&prev)
                .map(|(a, b)| a.iter().zip(b).map(|(u, v)| u + mom * (u - v)).collect())
                .collect();
            let mut grad = vec![vec![0.0; cols]; n_classes];
            for (row, &label) in x.iter().zip(y) {
                for (c, p) in probs.iter_mut().enumerate() {
                    *p = look[c][..d].iter().zip(row.iter()).map(|(a, b)| a * b).sum::<f64>() + look[c][d];
                }
                softmax_in_place(&mut probs);
                for c in 0..n_classes {
                    let r = probs[c] - f64::from(u8::from(c == label));
                    for j in 0..d {
                        grad[c][j] += r * row[j];
                    }
                    grad[c][d] += r;
                }
            }
            prev = std::mem::take(&mut w);
            w = look
                .iter()
                .zip(&grad)
                .map(|(wl, g)| {
                    (0..cols)
                        .map(|j| {
                            let penalty = if j < d { l2 * wl[j] } else { 0.0 };
                            wl[j] - step * (g[j] / n as f64 + penalty)
                        })
                        .collect()
                })
                .collect();
        }
        Self { weights: w }
    }

    pub fn predict_proba(&self, row: &[f64]) -> Vec<f64> {
        let d = row.len();
        let mut p: Vec<f64> = self
            .weights
            .iter()
            .map(|w| w[..d].iter().zip(row).map(|(a, b)| a * b).sum::<f64>() + w[d])
            .collect();
        softmax_in_place(&mut p);
        p
    }
}

/// Largest eigenvalue of the (intercept-augmented) second-moment matrix X'X / n.
fn power_iteration(x: &[&[f64]], cols: usize) -> f64 {
    let n = x.len() as f64;
    let mut v = vec![1.0 / (cols as f64).sqrt(); cols];
    let mut lambda = 0.0;
    for _ in 0..100 {
        let mut out = vec![0.0; cols];
        for row in x {
            let s: f64 = row.iter().zip(&v).map(|(a, b)| a * b).sum::<f64>() + v[cols - 1];
            for (o, r) in out.iter_mut().zip(row.iter()) {
                *o += s * r;
            }
            out[cols - 1] += s;
        }
        out.iter_mut().for_each(|o| *o /= n);
        let norm = out.iter().map(|o| o * o).sum::<f64>().sqrt();
        if norm == 0.0 {
            return 1.0;
        }
        lambda = norm;
        v = out.into_iter().map(|o| o / norm).collect();
    }
    lambda
}

/// Stratified fold index per sample: members of each class are shuffled and
/// dealt round-robin into the folds.
pub fn stratified_folds(labels: &[usize], n_classes: usize, n_folds: usize, seed: u64) -> Result<Vec<usize>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut fold = vec![0; labels.len()];
    for c in 0..n_classes {
        let mut members: Vec<usize> = (0..labels.len()).filter(|&i| labels[i] == c).collect();
        if members.is_empty() {
            continue;
        }
        if members.len() < n_folds {
            return Err(Error::Config(format!(
                "class {} has {} members, fewer than {n_folds} folds",
                c + 1,
                members.len()
            )));
        }
        members.shuffle(&mut rng);
        for (pos, &i) in members.iter().enumerate() {
            fold[i] = pos % n_folds;
        }
    }
    Ok(fold)
}

/// Out-of-sample class probabilities by stratified cross-validation.
pub fn cross_validated_probabilities(
    features: &[Vec<f64>],
    labels: &[usize],
    n_classes: usize,
    n_folds: usize,
    seed: u64,
) -> Result<Vec<Vec<f64>>> {
    use rayon::prelude::*;
    let folds = stratified_folds(labels, n_classes, n_folds, seed)?;
    let per_fold: Vec<Vec<(usize, Vec<f64>)>> = (0..n_folds)
        .into_par_iter()
        .map(|f| {
            let train: Vec<usize> = (0..labels.len()).filter(|&i| folds[i] != f).collect();
            let x: Vec<&[f64]> = train.iter().map(|&i| features[i].as_slice()).collect();
            let y: Vec<usize> = train.iter().map(|&i| labels[i]).collect();
            let model = Logistic::fit(&x, &y, n_classes, L2_PENALTY);
            (0..labels.len())
                .filter(|&i| folds[i] == f)
                .map(|i| (i, model.predict_proba(&features[i])))
                .collect()
        })
        .collect();
    let mut probs = vec![Vec::new(); labels.len()];
    for (i, p) in per_fold.into_iter().flatten() {
        probs[i] = p;
    }
    Ok(probs)
}

/// Count matrix `C[given][latent]`: each sample counts towards the most probable
/// class among those whose probability reaches the class's mean self-confidence.
pub fn confident_joint(probs: &[Vec<f64>], labels: &[usize], n_classes: usize) -> Vec<Vec<usize>> {
    let thresholds: Vec<f64> = (0..n_classes)
        .map(|c| {
            let own: Vec<f64> = probs.iter().zip(labels).filter(|(_, &l)| l == c).map(|(p, _)| p[c]).collect();
            if own.is_empty() {
                f64::INFINITY
            } else {
                own.iter().sum::<f64>() / own.len() as f64
            }
        })
        .collect();
    let mut joint = vec![vec![0usize; n_classes]; n_classes];
    for (p, &given) in probs.iter().zip(labels) {
        let mut best: Option<usize> = None;
        for c in 0..n_classes {
            if p[c] >= thresholds[c] && best.is_none_or(|b| p[c] > p[b]) {
                best = Some(c);
            }
        }
        if let Some(latent) = best {
            joint[given][latent] += 1;
        }
    }
    joint
}

/// Prune by noise rate: for every off-diagonal cell `(k, l)` of the confident
/// joint, flag the `C[k][l]` samples labelled `k` with the largest margin
/// `p_l - p_k`.
pub fn confident_flag_from_probs(probs: &[Vec<f64>], labels: &[usize], n_classes: usize) -> Vec<bool> {
    let joint = confident_joint(probs, labels, n_classes);
    let mut flagged = vec![false; labels.len()];
    for given in 0..n_classes {
        let members: Vec<usize> = (0..labels.len()).filter(|&i| labels[i] == given).collect();
        for latent in 0..n_classes {
            let count = joint[given][latent];
            if latent == given || count == 0 {
                continue;
            }
            let mut ranked = members.clone();
            ranked.sort_by(|&a, &b| {
                let ma = probs[a][latent] - probs[a][given];
                let mb = probs[b][latent] - probs[b][given];
                mb.total_cmp(&ma).then(a.cmp(&b))
            });
            for &i in ranked.iter().take(count) {
                flagged[i] = true;
            }
        }
    }
    flagged
}

pub fn confident_flag(
    features: &[Vec<f64>],
    labels: &[usize],
    n_classes: usize,
    n_folds: usize,
    seed: u64,
) -> Result<FlagResult> {
    if features.len() != labels.len() {
        return Err(Error::LengthMismatch(format!(
            "{} feature rows, {} labels",
            features.len(),
            labels.len()
        )));
    }
    if n_folds < 2 {
        return Err(Error::Config("confident learning needs at least two folds".into()));
    }
    let probs = cross_validated_probabilities(features, labels, n_classes, n_folds, seed)?;
    Ok(FlagResult {
        flagged: confident_flag_from_probs(&probs, labels, n_classes),
        proposed_label: None,
        method: "confident".into(),
        hyperparams: BTreeMap::from([
            ("n_folds".to_string(), n_folds as f64),
            ("l2".to_string(), L2_PENALTY),
        ]),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn one_hot_probabilities_flag_exactly_the_flips() {
        let truth: Vec<usize> = (0..50).map(|i| i / 10).collect();
        let mut labels = truth.clone();
        for &(i, l) in &[(3, 2), (17, 0), (25, 4), (38, 1), (44, 3)] {
            labels[i] = l;
        }
        let probs: Vec<Vec<f64>> = truth
            .iter()
            .map(|&t| (0..5).map(|c| f64::from(u8::from(c == t))).collect())
            .collect();
        let flagged = confident_flag_from_probs(&probs, &labels, 5);
        let expect: Vec<bool> = labels.iter().zip(&truth).map(|(a, b)| a != b).collect();
        assert_eq!(flagged, expect);
    }

    #[test]
    fn folds_are_stratified() {
        let labels: Vec<usize> = (0..40).map(|i| i % 4).collect();
        let folds = stratified_folds(&labels, 4, 5, 9).unwrap();
        for f in 0..5 {
            for c in 0..4 {
                assert_eq!((0..40).filter(|&i| folds[i] == f && labels[i] == c).count(), 2);
            }
        }
        assert!(stratified_folds(&[0, 0, 1], 2, 2, 0).is_err());
    }

    #[test]
    fn logistic_separates_blobs() {
        let rows: Vec<Vec<f64>> = (0..40)
            .map(|i| {
                let c = (i % 2) as f64;
                vec![c * 4.0 - 2.0 + 0.1 * (i as f64 % 5.0), 0.3 * (i % 3) as f64]
            })
            .collect();
        let y: Vec<usize> = (0..40).map(|i| i % 2).collect();
        let x: Vec<&[f64]> = rows.iter().map(|r| r.as_slice()).collect();
        let m = Logistic::fit(&x, &y, 2, L2_PENALTY);
        for (r, &l) in rows.iter().zip(&y) {
            let p = m.predict_proba(r);
            assert!(p[l] > 0.9, "{p:?}");
        }
    }
}
