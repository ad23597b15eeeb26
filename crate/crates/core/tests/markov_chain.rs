#![allow(clippy::needless_range_loop)]

use markov_pinning::markov::{
    assemble_generator, invariant_distribution, invariant_distribution_direct, sample_path, EmbeddedChain,
    InitialState, MarkovGenerator,
};
use markov_pinning::matlin::Matrix;
use proptest::prelude::*;

/// Row-stochastic `n×n` matrix with zero diagonal and off-diagonal entries
/// bounded away from zero (so the chain is primitive for `n ≥ 3`).
fn embedded(n: usize) -> impl Strategy<Value = EmbeddedChain> {
    prop::collection::vec(0.05..1.0f64, n * n).prop_map(move |raw| {
        let mut p = Matrix::zeros(n, n);
        for i in 0..n {
            let total: f64 = (0..n).filter(|&j| j != i).map(|j| raw[i * n + j]).sum();
            let mut acc = 0.0;
            let last = if i == n - 1 { n - 2 } else { n - 1 };
            for j in (0..n).filter(|&j| j != i && j != last) {
                p[(i, j)] = raw[i * n + j] / total;
                acc += p[(i, j)];
            }
            p[(i, last)] = 1.0 - acc;
        }
        EmbeddedChain::new(p).unwrap()
    })
}

/// Stationary vector of `Q` by power iteration on the uniformized chain
/// `I + Q/Λ`.
fn uniformized_stationary(q: &MarkovGenerator) -> Vec<f64> {
    let n = q.states();
    let lambda = 1.5 * q.max_rate();
    let mut v = vec![1.0 / n as f64; n];
    for _ in 0..20_000 {
        let mut next = v.clone();
        for j in 0..n {
            for i in 0..n {
                next[j] += v[i] * q.matrix()[(i, j)] / lambda;
            }
        }
        v = next;
    }
    v
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn invariant_distribution_matches_uniformization(
        p in embedded(4),
        rates in prop::collection::vec(0.1..5.0f64, 4),
    ) {
        let q = assemble_generator(&p, &rates).unwrap();
        let inv = invariant_distribution(&q).unwrap();
        let oracle = uniformized_stationary(&q);
        let direct = invariant_distribution_direct(&q).unwrap();
        for j in 0..4 {
            prop_assert!((inv.pi[j] - oracle[j]).abs() < 1e-9, "{:?} vs {:?}", inv.pi, oracle);
            prop_assert!((inv.pi[j] - direct[j]).abs() < 1e-9);
        }
        prop_assert!((inv.pi.iter().sum::<f64>() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn generator_diagonal_balances_rows(p in embedded(5), rates in prop::collection::vec(0.01..10.0f64, 5)) {
        let q = assemble_generator(&p, &rates).unwrap();
        for i in 0..5 {
            let off: f64 = (0..5).filter(|&j| j != i).map(|j| q.matrix()[(i, j)]).sum();
            prop_assert_eq!(q.matrix()[(i, i)], -off);
            prop_assert!((q.rates()[i] - rates[i]).abs() <= 1e-15 * rates[i]);
        }
        prop_assert_eq!(q.embedded().matrix().row(0).len(), 5);
    }
}

fn three_state() -> MarkovGenerator {
    let p =
        EmbeddedChain::new(Matrix::from_rows(&[[0.0, 0.5, 0.5], [0.2, 0.0, 0.8], [0.6, 0.4, 0.0]]).unwrap()).unwrap();
    assemble_generator(&p, &[1.0, 2.5, 0.4]).unwrap()
}

#[test]
fn long_path_statistics_match_the_generator() {
    let q = three_state();
    let path = sample_path(&q, &InitialState::State(0), 20_000.0, 11).unwrap();
    let stats = path.stats(3);
    for (i, rate) in q.rates().iter().enumerate() {
        let mean = stats.mean_sojourn(i);
        assert!((mean * rate - 1.0).abs() < 0.05, "state {i}: mean sojourn {mean}, rate {rate}");
    }
    let pi = invariant_distribution(&q).unwrap().pi;
    for (o, p) in path.occupancy(3).iter().zip(&pi) {
        assert!((o - p).abs() < 0.02, "occupancy {o} vs {p}");
    }
    let p = q.embedded();
    for i in 0..3 {
        let total: usize = stats.transitions[i].iter().sum();
        for j in 0..3 {
            let freq = stats.transitions[i][j] as f64 / total as f64;
            assert!((freq - p.matrix()[(i, j)]).abs() < 0.03);
        }
    }
}

#[test]
fn paths_are_reproducible_and_seed_dependent() {
    let q = three_state();
    let a = sample_path(&q, &InitialState::Distribution(vec![0.2, 0.3, 0.5]), 50.0, 3).unwrap();
    let b = sample_path(&q, &InitialState::Distribution(vec![0.2, 0.3, 0.5]), 50.0, 3).unwrap();
    let c = sample_path(&q, &InitialState::Distribution(vec![0.2, 0.3, 0.5]), 50.0, 4).unwrap();
    assert_eq!(a, b);
    assert_ne!(a, c);
    assert!(a.jumps.windows(2).all(|w| w[0].1 < w[1].1 && w[0].0 != w[1].0));
}

#[test]
fn periodic_chain_has_no_invariant_distribution() {
    let p = EmbeddedChain::new(Matrix::from_rows(&[[0.0, 1.0], [1.0, 0.0]]).unwrap()).unwrap();
    let q = assemble_generator(&p, &[1.0, 2.0]).unwrap();
    assert!(invariant_distribution(&q).is_err());
}
