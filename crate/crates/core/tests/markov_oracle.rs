mod support;

use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use support::oracle::{direct_transition, enumerate, random_instance, random_params, random_topology};
use timely_core::markov::{fit, log_likelihood, posteriors, transition_matrix, viterbi, FitOptions, HmtInstance};
use timely_core::params::default_params;
use timely_core::{LineageTopology, Rate};

#[test]
fn inference_matches_exhaustive_enumeration() {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    for case in 0..120 {
        let t = rng.random_range(1..=8);
        let k = rng.random_range(1..=4);
        let inst = random_instance(&mut rng, t, k, case % 2 == 0);
        let truth = enumerate(&inst);
        let ll = log_likelihood(&inst).unwrap();
        assert!((ll - truth.log_likelihood).abs() < 1e-9, "case {case}: {ll} vs {}", truth.log_likelihood);
        let post = posteriors(&inst).unwrap();
        for (g, h) in post.gamma.iter().zip(&truth.gamma) {
            for (a, b) in g.iter().zip(h) {
                assert!((a - b).abs() < 1e-8, "case {case}: gamma {a} vs {b}");
            }
            assert!((g.iter().sum::<f64>() - 1.0).abs() < 1e-10);
        }
        for (x, y) in post.xi.iter().zip(&truth.xi) {
            assert_eq!(x.is_some(), y.is_some());
            if let (Some(x), Some(y)) = (x, y) {
                for (a, b) in x.iter().flatten().zip(y.iter().flatten()) {
                    assert!((a - b).abs() < 1e-8, "case {case}: xi {a} vs {b}");
                }
            }
        }
        let (path, lp) = viterbi(&inst).unwrap();
        assert_eq!(path, truth.map_path, "case {case}");
        assert!((lp - truth.map_log_prob).abs() < 1e-8, "case {case}");
    }
}

#[test]
fn viterbi_never_reverses_along_the_lineage() {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    for case in 0..50 {
        let inst = random_instance(&mut rng, 8, 4, case % 2 == 1);
        let (path, _) = viterbi(&inst).unwrap();
        for t in 0..inst.len() {
            if let Some(p) = inst.parent[t] {
                assert!(inst.topology.is_allowed(path[p], path[t]));
            }
        }
    }
}

#[test]
fn gem_is_monotone_on_long_chains() {
    let mut rng = ChaCha8Rng::seed_from_u64(23);
    for _ in 0..3 {
        let inst = random_instance(&mut rng, 500, 4, true);
        let out = fit(&inst, &FitOptions::default()).unwrap();
        for w in out.log_likelihood.windows(2) {
            assert!(w[1] >= w[0] - 1e-8, "{} -> {}", w[0], w[1]);
        }
        out.params.validate(&inst.topology).unwrap();
    }
}

#[test]
fn gem_then_viterbi_recovers_a_clean_border() {
    let topo = LineageTopology::chain(&["A", "B"]).unwrap();
    let eye = vec![vec![1.0, 0.0], vec![0.0, 1.0]];
    let obs: Vec<usize> = (0..40).map(|t| usize::from(t >= 17)).collect();
    let gaps: Vec<f64> = (0..40).map(|t| if t == 0 { 0.0 } else { 0.025 }).collect();
    let params = default_params(&topo, 0.9, eye, Some(0.025)).unwrap();
    let inst = HmtInstance::chain(topo, params, obs.clone(), gaps).unwrap();
    let out = fit(&inst, &FitOptions::default()).unwrap();
    let (path, _) = viterbi(&inst.with_params(out.params)).unwrap();
    assert_eq!(path, obs);
}

#[test]
fn library_transitions_match_the_closed_form() {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    for _ in 0..200 {
        let k = rng.random_range(1..=5);
        let chain = rng.random_bool(0.5);
        let topo = random_topology(&mut rng, k, chain);
        let params = random_params(&mut rng, &topo);
        let y = rng.random_range(0.0..3.0);
        let a = transition_matrix(&params, &topo, y);
        for from in 0..k {
            for to in 0..k {
                let want = direct_transition(&params, &topo, from, to, y);
                assert!((a[from][to] - want).abs() < 1e-12);
            }
        }
    }
}

fn two_state(p_stay: f64, l_stay: f64, l_move: f64) -> (timely_core::HmtParams, LineageTopology) {
    let topo = LineageTopology::chain(&["A", "B"]).unwrap();
    let mut p = default_params(&topo, 0.9, vec![vec![0.9, 0.1], vec![0.1, 0.9]], None).unwrap();
    p.trans.insert((0, 0), Rate { p: p_stay, lambda: l_stay });
    p.trans.insert((0, 1), Rate { p: 1.0 - p_stay, lambda: l_move });
    (p, topo)
}

proptest! {
    #[test]
    fn rows_are_stochastic(seed in any::<u64>(), y in prop_oneof![Just(0.0), Just(1e-6), Just(1.0), Just(1e6), 0.0..1e6f64]) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let topo = random_topology(&mut rng, 5, false);
        let params = random_params(&mut rng, &topo);
        for row in transition_matrix(&params, &topo, y) {
            prop_assert!((row.iter().sum::<f64>() - 1.0).abs() < 1e-12);
            prop_assert!(row.iter().all(|v| (0.0..=1.0).contains(v)));
        }
    }

    #[test]
    fn equal_rates_give_p(p in 0.01..0.99f64, lambda in 0.01..100.0f64, y in 0.0..1e6f64) {
        let (params, topo) = two_state(p, lambda, lambda);
        let a = transition_matrix(&params, &topo, y);
        prop_assert_eq!(&a[0], &vec![p, 1.0 - p]);
    }

    #[test]
    fn slow_stay_rate_makes_staying_likelier_with_gap(
        p in 0.01..0.99f64, l_stay in 0.1..10.0f64, extra in 0.01..10.0f64, y1 in 0.0..10.0f64, dy in 0.0..10.0f64,
    ) {
        let (params, topo) = two_state(p, l_stay, l_stay + extra);
        let a = transition_matrix(&params, &topo, y1);
        let b = transition_matrix(&params, &topo, y1 + dy);
        prop_assert!(b[0][0] >= a[0][0] - 1e-15);
    }
}
