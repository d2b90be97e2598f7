mod support;

use gstds_core::rng::{self, Domain};
use gstds_core::selection::{
    compute_weights, explore_select, select_batch, selection_count, ScoredBatch, SelectionWeights,
    WeightsMode,
};
use gstds_core::spectral::{rank_descending, FiedlerScores};
use proptest::prelude::*;
use statrs::distribution::{ChiSquared, ContinuousCDF};

fn scores(phi: Vec<f64>) -> FiedlerScores {
    FiedlerScores { phi, lambda2: 0.5, sign_flipped: false, lambda2_repeated: false }
}

#[test]
fn count_examples() {
    let c = selection_count(0.3, 64);
    assert_eq!((c.total, c.exploit, c.explore), (19, 10, 9));
    let c = selection_count(1.0, 128);
    assert_eq!((c.total, c.exploit, c.explore), (128, 64, 64));
    let c = selection_count(0.01, 50);
    assert_eq!((c.total, c.exploit, c.explore), (1, 1, 0));
}

#[test]
fn count_grid_matches_integer_arithmetic() {
    for size in 1..=512usize {
        for pct in 1..=100usize {
            let c = selection_count(pct as f64 / 100.0, size);
            let expected = (pct * size / 100).max(1);
            assert_eq!(c.total, expected, "ratio {pct}% of {size}");
            assert_eq!(c.exploit + c.explore, c.total);
            assert_eq!(c.exploit, expected - expected / 2);
        }
    }
}

#[test]
fn weight_examples() {
    let s = scores(vec![0.6, -0.8, 0.0]);
    let w = compute_weights(WeightsMode::AbsFiedler, None, &s, 1e-8).unwrap();
    assert!((w.raw[0] - 0.6).abs() < 1e-7 && (w.raw[1] - 0.8).abs() < 1e-7);
    assert!((w.raw[2] - 1e-8).abs() < 1e-20);

    let s = scores(vec![0.5, -0.5]);
    let w = compute_weights(WeightsMode::InverseRefLoss, Some(&[1.0, 1.0]), &s, 1e-8).unwrap();
    assert_eq!(w.probabilities(&[0, 1]), vec![0.5, 0.5]);
    let w = compute_weights(WeightsMode::InverseRefLoss, Some(&[0.0, 1.0]), &s, 1e-8).unwrap();
    assert!(w.probabilities(&[0, 1])[0] > 0.999999);
    assert!(compute_weights(WeightsMode::InverseRefLoss, None, &s, 1e-8).is_err());
}

#[test]
fn explore_edge_cases() {
    let mut r = rng::stream(1, Domain::Selection, 0, 0);
    let mut all = explore_select(&[4, 7, 9], &[0.1, 0.2, 0.7], 3, &mut r).unwrap();
    all.sort_unstable();
    assert_eq!(all, vec![4, 7, 9]);
    assert!(explore_select(&[4, 7], &[0.5, 0.5], 0, &mut r).unwrap().is_empty());
    assert!(explore_select(&[4, 7], &[0.5, 0.5], 3, &mut r).is_err());
}

/// Pearson statistic and its p-value.
fn chi_square(observed: &[u64], expected_p: &[f64]) -> (f64, f64) {
    let total: u64 = observed.iter().sum();
    let stat: f64 = observed
        .iter()
        .zip(expected_p)
        .map(|(&o, &p)| {
            let e = p * total as f64;
            (o as f64 - e).powi(2) / e
        })
        .sum();
    let dist = ChiSquared::new((observed.len() - 1) as f64).unwrap();
    (stat, 1.0 - dist.cdf(stat))
}

#[test]
fn single_draw_frequencies() {
    let weights = [4.0, 2.0, 1.0, 1.0];
    let exact: Vec<f64> = weights.iter().map(|w| w / 8.0).collect();
    let mut counts = [0u64; 4];
    for t in 0..100_000u64 {
        let mut r = rng::stream(7, Domain::Selection, 0, t);
        counts[explore_select(&[0, 1, 2, 3], &weights, 1, &mut r).unwrap()[0]] += 1;
    }
    for (c, p) in counts.iter().zip(&exact) {
        assert!((*c as f64 / 1e5 - p).abs() < 0.02);
    }
    let (_, p) = chi_square(&counts, &exact);
    assert!(p > 0.001, "chi-square p = {p}");
}

#[test]
fn keyed_sampler_matches_sequential_renormalization() {
    // ordered pairs from 5 points: the keyed sampler's law must match the
    // enumerated law of one-at-a-time draws
    let weights = [5.0, 3.0, 1.0, 0.5, 0.5];
    let pairs: Vec<(usize, usize)> =
        (0..5).flat_map(|a| (0..5).filter(move |&b| b != a).map(move |b| (a, b))).collect();
    let exact: Vec<f64> = pairs.iter().map(|&(a, b)| support::sequential_sequence_probability(&weights, &[a, b])).collect();
    assert!((exact.iter().sum::<f64>() - 1.0).abs() < 1e-12);

    let trials = 200_000u64;
    let mut keyed = vec![0u64; pairs.len()];
    let mut straight = vec![0u64; pairs.len()];
    let mut oracle_rng = support::rng(99);
    for t in 0..trials {
        let mut r = rng::stream(11, Domain::Selection, 1, t);
        let got = explore_select(&[0, 1, 2, 3, 4], &weights, 2, &mut r).unwrap();
        keyed[pairs.iter().position(|&p| p == (got[0], got[1])).unwrap()] += 1;
        let s = support::sequential_sample(&weights, 2, &mut oracle_rng);
        straight[pairs.iter().position(|&p| p == (s[0], s[1])).unwrap()] += 1;
    }
    let (_, p_keyed) = chi_square(&keyed, &exact);
    let (_, p_straight) = chi_square(&straight, &exact);
    assert!(p_keyed > 0.001, "keyed sampler p = {p_keyed}");
    assert!(p_straight > 0.001, "reference sampler p = {p_straight}");
}

#[test]
fn four_point_batch_example() {
    let s = scores(vec![0.9, 0.5, -0.2, -0.7]);
    let ranking = rank_descending(&s);
    let losses = [0.3, 0.2, 1.0, 4.0];
    let weights = compute_weights(WeightsMode::InverseRefLoss, Some(&losses), &s, 1e-8).unwrap();
    let members = [10, 11, 12, 13];
    let batch = ScoredBatch { index: 0, members: &members, scores: &s, ranking: &ranking, weights: &weights };
    let mut counts = [0u64; 4];
    let trials = 50_000u64;
    for t in 0..trials {
        let mut r = rng::stream(3, Domain::Selection, 0, t);
        let res = select_batch(batch, 0.5, &mut r, t).unwrap();
        assert_eq!(res.exploit, vec![10]);
        assert_eq!(res.explore.len(), 1);
        counts[res.explore[0] - 10] += 1;
    }
    assert_eq!(counts[0], 0);
    // remainder {1,2,3} renormalized inverse losses
    let inv: Vec<f64> = losses[1..].iter().map(|l| 1.0 / (l + 1e-8)).collect();
    let total: f64 = inv.iter().sum();
    for (c, w) in counts[1..].iter().zip(&inv) {
        assert!((*c as f64 / trials as f64 - w / total).abs() < 0.01);
    }
}

#[test]
fn full_ratio_and_single_point() {
    let s = scores(vec![0.1, 0.4, -0.3, 0.2, 0.0]);
    let ranking = rank_descending(&s);
    let weights = SelectionWeights { mode: WeightsMode::AbsFiedler, raw: vec![1.0; 5], epsilon: 1e-8 };
    let members = [0, 1, 2, 3, 4];
    let batch = ScoredBatch { index: 2, members: &members, scores: &s, ranking: &ranking, weights: &weights };
    let mut r = rng::stream(0, Domain::Selection, 0, 0);
    let mut all: Vec<usize> = select_batch(batch, 1.0, &mut r, 0).unwrap().selected().collect();
    all.sort_unstable();
    assert_eq!(all, members);
    let one = select_batch(batch, 0.05, &mut r, 0).unwrap();
    assert_eq!(one.exploit, vec![ranking.order[0]]);
    assert!(one.explore.is_empty());
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(256))]

    #[test]
    fn selection_is_disjoint_contained_and_exploit_stable(
        phi in prop::collection::vec(-1.0f64..1.0, 1..80),
        ratio in 0.001f64..=1.0,
        seed_a in any::<u64>(),
        seed_b in any::<u64>(),
    ) {
        let n = phi.len();
        let s = scores(phi);
        let ranking = rank_descending(&s);
        let weights = compute_weights(WeightsMode::AbsFiedler, None, &s, 1e-8).unwrap();
        let members: Vec<usize> = (0..n).map(|i| 1000 + 3 * i).collect();
        let batch = ScoredBatch { index: 0, members: &members, scores: &s, ranking: &ranking, weights: &weights };
        let a = select_batch(batch, ratio, &mut rng::stream(seed_a, Domain::Selection, 0, 0), 0).unwrap();
        let b = select_batch(batch, ratio, &mut rng::stream(seed_b, Domain::Selection, 5, 9), 0).unwrap();
        prop_assert_eq!(&a.exploit, &b.exploit);
        prop_assert_eq!(a.n_selected, selection_count(ratio, n).total);
        prop_assert_eq!(a.exploit.len() + a.explore.len(), a.n_selected);
        let mut all: Vec<usize> = a.selected().collect();
        all.sort_unstable();
        all.dedup();
        prop_assert_eq!(all.len(), a.n_selected);
        prop_assert!(all.iter().all(|i| members.contains(i)));
    }
}
