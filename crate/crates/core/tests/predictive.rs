mod common;

use dpcer::cer::Hyperparams;
use dpcer::comb::EdgeCountTable;
use dpcer::graph::{pair_index, Graph};
use dpcer::predictive::{
    marginal_likelihood, posterior_mode_edge_prob, predictive_edge_prob, predictive_m_step, prior_edge_expectation,
    PredictiveTable,
};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

const TOL: f64 = 1e-8;

fn ln_choose(n: usize, k: usize) -> f64 {
    (0..k).map(|i| ((n - i) as f64 / (i + 1) as f64).ln()).sum()
}

struct Fixture {
    graphs: Vec<Graph>,
    h: Hyperparams,
    table: EdgeCountTable,
}

fn fixtures(count: usize, seed: u64) -> Vec<Fixture> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let shapes = [0.5, 1.0, 2.0, 3.7];
    (0..count)
        .map(|_| {
            let k = rng.gen_range(1..=3);
            let graphs: Vec<Graph> = (0..k).map(|_| common::random_graph(3, 0.5, &mut rng)).collect();
            let g0 = common::random_graph(3, 0.5, &mut rng);
            let h = Hyperparams::new(shapes[rng.gen_range(0..4)], shapes[rng.gen_range(0..4)], 1.0, g0.clone()).unwrap();
            let table = EdgeCountTable::build(graphs.iter(), &g0).unwrap();
            Fixture { graphs, h, table }
        })
        .collect()
}

#[test]
fn marginal_likelihood_matches_enumeration() {
    for f in fixtures(60, 1) {
        let refs: Vec<&Graph> = f.graphs.iter().collect();
        let want = common::log_marginal_oracle(&refs, &f.h.g0, f.h.a, f.h.b);
        let got = marginal_likelihood(&f.table, &f.h).unwrap();
        assert!((got - want).abs() < TOL, "{got} vs {want}");
    }
}

#[test]
fn edge_and_mode_probabilities_match_enumeration() {
    for f in fixtures(60, 2) {
        let refs: Vec<&Graph> = f.graphs.iter().collect();
        for (i, j) in [(1, 0), (2, 0), (2, 1)] {
            let idx = pair_index(i, j);
            let edge = |mode: &Graph, t: f64| if mode.bit(idx) { (1.0 - t).ln() } else { t.ln() };
            let want = common::log_posterior_expectation(&refs, &f.h.g0, f.h.a, f.h.b, edge).exp();
            let got = predictive_edge_prob(&f.table, &f.h, i, j).unwrap();
            assert!((got - want).abs() < TOL, "edge ({i},{j}): {got} vs {want}");

            let want = common::log_mode_posterior_mass(&refs, &f.h.g0, f.h.a, f.h.b, |m| m.bit(idx)).exp();
            let got = posterior_mode_edge_prob(&f.table, &f.h, i, j).unwrap();
            assert!((got - want).abs() < TOL, "mode ({i},{j}): {got} vs {want}");

            for m in 1..=3 {
                let law = predictive_m_step(&f.table, &f.h, i, j, m).unwrap();
                assert_eq!(law.len(), m + 1);
                for (k, &got) in law.iter().enumerate() {
                    let w = |mode: &Graph, t: f64| {
                        let (lp, lq) = if mode.bit(idx) { ((1.0 - t).ln(), t.ln()) } else { (t.ln(), (1.0 - t).ln()) };
                        ln_choose(m, k) + k as f64 * lp + (m - k) as f64 * lq
                    };
                    let want = common::log_posterior_expectation(&refs, &f.h.g0, f.h.a, f.h.b, w).exp();
                    assert!((got - want).abs() < TOL, "m={m} k={k}: {got} vs {want}");
                }
            }
        }
    }
}

#[test]
fn one_step_law_agrees_with_edge_probability() {
    for f in fixtures(20, 3) {
        let p = predictive_edge_prob(&f.table, &f.h, 1, 0).unwrap();
        let law = predictive_m_step(&f.table, &f.h, 1, 0, 1).unwrap();
        assert!((law[1] - p).abs() < 1e-12 && (law[0] + law[1] - 1.0).abs() < 1e-12);
        let law5 = predictive_m_step(&f.table, &f.h, 1, 0, 5).unwrap();
        assert!((law5.iter().sum::<f64>() - 1.0).abs() < 1e-10);
        assert!(law5.iter().all(|&x| (0.0..=1.0).contains(&x)));
    }
}

#[test]
fn empty_cluster_reduces_to_prior() {
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    for _ in 0..10 {
        let g0 = common::random_graph(4, 0.5, &mut rng);
        let h = Hyperparams::new(rng.gen_range(0.5..4.0), rng.gen_range(0.5..4.0), 1.0, g0.clone()).unwrap();
        let empty = EdgeCountTable::build(std::iter::empty(), &g0).unwrap();
        assert_eq!(marginal_likelihood(&empty, &h).unwrap(), 0.0);
        for (i, j) in [(1, 0), (3, 2)] {
            let got = predictive_edge_prob(&empty, &h, i, j).unwrap();
            let want = prior_edge_expectation(&h, i, j).unwrap();
            assert!((got - want).abs() < 1e-12);
        }
    }
}

#[test]
fn table_matrices_are_symmetric_probabilities() {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let n = 7;
    let graphs: Vec<Graph> = (0..6).map(|_| common::random_graph(n, 0.3, &mut rng)).collect();
    let g0 = common::random_graph(n, 0.3, &mut rng);
    let h = Hyperparams::new(1.0, 1.0, 1.0, g0.clone()).unwrap();
    let t = PredictiveTable::new(EdgeCountTable::build(graphs.iter(), &g0).unwrap(), &h).unwrap();
    for m in [t.edge_prob_matrix().unwrap(), t.mode_prob_matrix().unwrap()] {
        for i in 0..n {
            assert_eq!(m[i][i], 0.0);
            for j in 0..n {
                assert_eq!(m[i][j], m[j][i]);
                assert!((0.0..=1.0).contains(&m[i][j]));
            }
        }
    }
    let mean = t.mode_frechet_mean().unwrap();
    let probs = t.mode_prob_matrix().unwrap();
    for i in 1..n {
        for j in 0..i {
            assert_eq!(mean.has_edge(i, j), probs[i][j] > 0.5);
        }
    }
}
