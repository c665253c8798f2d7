use super::log_sum_exp;
use crate::model::{HmtParams, LineageTopology};

/// Log transition matrix for a pseudotime gap `y`.
///
/// Row `k` is proportional to `p_kl * lambda_kl * exp(-lambda_kl * y)` over the
/// allowed targets `l` (stay, or move to a child state); disallowed entries are
/// `-inf` and end stages keep their state with probability one.
pub fn log_transition_matrix(params: &HmtParams, topology: &LineageTopology, y: f64) -> Vec<Vec<f64>> {
    let k = topology.n_states();
    let mut out = vec![vec![f64::NEG_INFINITY; k]; k];
    for (from, row) in out.iter_mut().enumerate() {
        if topology.is_end_stage(from) {
            row[from] = 0.0;
            continue;
        }
        let allowed = topology.allowed(from);
        let rates: Vec<Option<(f64, f64)>> = allowed
            .iter()
            .map(|&to| match params.rate(from, to) {
                Some(r) if r.p > 0.0 => Some((r.p.ln() + r.lambda.ln(), r.lambda)),
                _ => None,
            })
            .collect();
        // Weights relative to the largest one, so that `lambda * y` only enters as
        // a difference of rates and equal rates cancel exactly at any gap.
        let reference = rates
            .iter()
            .flatten()
            .copied()
            .max_by(|a, b| (a.0 - a.1 * y).total_cmp(&(b.0 - b.1 * y)));
        let weights: Vec<f64> = rates
            .iter()
            .map(|r| match (r, reference) {
                (Some((c, l)), Some((c0, l0))) => (c - c0) - (l - l0) * y,
                _ => f64::NEG_INFINITY,
            })
            .collect();
        let norm = log_sum_exp(weights.iter().copied());
        for (&to, w) in allowed.iter().zip(&weights) {
            row[to] = w - norm;
        }
    }
    out
}

/// Transition matrix for a pseudotime gap `y`. A row whose rates all share
/// one `lambda` is the branching distribution `p` itself, bit for bit.
pub fn transition_matrix(params: &HmtParams, topology: &LineageTopology, y: f64) -> Vec<Vec<f64>> {
    let mut out: Vec<Vec<f64>> = log_transition_matrix(params, topology, y)
        .into_iter()
        .map(|row| row.into_iter().map(f64::exp).collect())
        .collect();
    for (from, row) in out.iter_mut().enumerate() {
        if let Some(p) = common_rate_row(params, topology, from) {
            row.fill(0.0);
            for (to, v) in p {
                row[to] = v;
            }
        }
    }
    out
}

/// `(target, p)` over the allowed targets of a non-end row when every present
/// rate has the same `lambda`.
fn common_rate_row(params: &HmtParams, topology: &LineageTopology, from: usize) -> Option<Vec<(usize, f64)>> {
    if topology.is_end_stage(from) {
        return None;
    }
    let mut lambda = None;
    let mut row = Vec::new();
    for to in topology.allowed(from) {
        let p = match params.rate(from, to) {
            Some(r) if r.p > 0.0 => {
                if lambda.is_some_and(|l: f64| l.to_bits() != r.lambda.to_bits()) {
                    return None;
                }
                lambda = Some(r.lambda);
                r.p
            }
            _ => 0.0,
        };
        row.push((to, p));
    }
    lambda.map(|_| row)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::Rate;
    use crate::params::{default_params, uniform_emission};

    fn two_state(p_stay: f64, l_stay: f64, l_move: f64) -> (HmtParams, LineageTopology) {
        let t = LineageTopology::chain(&["A", "B"]).unwrap();
        let mut p = default_params(&t, 0.9, uniform_emission(2, 0.9), None).unwrap();
        p.trans.insert((0, 0), Rate { p: p_stay, lambda: l_stay });
        p.trans.insert((0, 1), Rate { p: 1.0 - p_stay, lambda: l_move });
        (p, t)
    }

    #[test]
    fn equal_rates_reduce_to_p() {
        let (p, t) = two_state(0.5, 2.0, 2.0);
        for y in [0.0, 0.3, 7.0, 1e6] {
            let a = transition_matrix(&p, &t, y);
            assert_eq!(a[0], vec![0.5, 0.5], "{a:?}");
            let l = log_transition_matrix(&p, &t, y);
            assert!((l[0][0] - 0.5f64.ln()).abs() < 1e-15, "{l:?}");
        }
    }

    #[test]
    fn direct_evaluation_at_zero_gap() {
        let (p, t) = two_state(0.9, 1.0, 3.0);
        let a = transition_matrix(&p, &t, 0.0);
        assert!((a[0][0] - 0.75).abs() < 1e-15);
        assert!((a[0][1] - 0.25).abs() < 1e-15);
    }

    #[test]
    fn end_stage_row_is_identity() {
        let t = LineageTopology::granulopoiesis();
        let p = default_params(&t, 0.9, uniform_emission(5, 0.8), Some(0.01)).unwrap();
        let a = transition_matrix(&p, &t, 0.2);
        assert_eq!(a[4], vec![0.0, 0.0, 0.0, 0.0, 1.0]);
        assert_eq!(a[1][0], 0.0);
        assert_eq!(a[1][3], 0.0);
    }

    #[test]
    fn huge_gap_does_not_underflow() {
        let (p, t) = two_state(0.5, 1.0, 5.0);
        let a = transition_matrix(&p, &t, 1e6);
        assert!((a[0][0] + a[0][1] - 1.0).abs() < 1e-12);
        assert_eq!(a[0][0], 1.0);
    }
}
