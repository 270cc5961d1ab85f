use std::collections::BTreeMap;

use monofact_core::estimators::TrainingSample;
use monofact_core::prob::{FactoidDist, FactoidSet, FactoidUniverse, SeededRng, BOTTOM};
use monofact_core::stats::{normal_upper_quantile, normal_upper_tail};
use monofact_core::worlds::{
    analyze_regularity, analyze_w5_regularity, posterior_sampler_uniform_world, TypeComponent,
    WorldInstance, WorldModel,
};
use proptest::prelude::*;

/// All k-subsets of `items`, in lexicographic order.
fn subsets(items: &[usize], k: usize) -> Vec<Vec<usize>> {
    if k == 0 {
        return vec![vec![]];
    }
    if items.len() < k {
        return vec![];
    }
    let mut out = Vec::new();
    for (i, &first) in items.iter().enumerate() {
        for mut rest in subsets(&items[i + 1..], k - 1) {
            rest.insert(0, first);
            out.push(rest);
        }
    }
    out
}

fn sequences(alphabet: &[usize], n: usize) -> Vec<Vec<usize>> {
    let mut out = vec![vec![]];
    for _ in 0..n {
        out = out
            .into_iter()
            .flat_map(|s| {
                alphabet.iter().map(move |&y| {
                    let mut t = s.clone();
                    t.push(y);
                    t
                })
            })
            .collect();
    }
    out
}

fn binomial(n: usize, k: usize) -> f64 {
    (0..k).fold(1.0, |acc, i| acc * (n - i) as f64 / (i + 1) as f64)
}

#[test]
fn uniform_posterior_matches_bayes_by_enumeration() {
    for size in 4..=8usize {
        for facts in 1..=3usize.min(size - 1) {
            for n in 1..=3usize {
                let alphabet: Vec<usize> = (1..size).collect();
                let worlds = subsets(&alphabet, facts);
                let prior = 1.0 / worlds.len() as f64;
                let mut gap = 0.0;
                for x in sequences(&alphabet, n) {
                    let seen: FactoidSet = x.iter().copied().collect();
                    let joint: Vec<f64> = worlds
                        .iter()
                        .map(|f| {
                            if seen.iter().all(|y| f.contains(&y)) {
                                prior * (1.0 / facts as f64).powi(n as i32)
                            } else {
                                0.0
                            }
                        })
                        .collect();
                    let marginal: f64 = joint.iter().sum();
                    let m = seen.len();
                    for (f, j) in worlds.iter().zip(&joint) {
                        let claimed = if m <= facts && seen.iter().all(|y| f.contains(&y)) {
                            1.0 / binomial(size - 1 - m, facts - m)
                        } else {
                            0.0
                        };
                        gap += (marginal * claimed - j).abs();
                    }
                }
                assert!(gap / 2.0 <= 1e-9, "|Y|={size} N={facts} n={n}: gap {gap}");
            }
        }
    }
}

#[test]
fn posterior_sampler_draws_uniform_completions() {
    let model = WorldModel::permuted_power_law(8, 3, 0.0).unwrap();
    let observed: FactoidSet = [BOTTOM, 2].into_iter().collect();
    let mut rng = SeededRng::new(11);
    let draws = 30_000;
    let mut counts: BTreeMap<Vec<usize>, usize> = BTreeMap::new();
    for _ in 0..draws {
        let w = posterior_sampler_uniform_world(&model, &observed, &mut rng).unwrap();
        assert!(w.is_fact(2));
        let f: Vec<usize> = w.facts().iter().filter(|&y| y != BOTTOM).collect();
        *counts.entry(f).or_default() += 1;
    }
    // C(6, 2) completions of {2}.
    assert_eq!(counts.len(), 15);
    let q = 1.0 / 15.0;
    let sd = (q * (1.0 - q) / draws as f64).sqrt();
    let z_limit = normal_upper_quantile(normal_upper_tail(3.0) / 15.0);
    for (f, c) in counts {
        let z = (c as f64 / draws as f64 - q).abs() / sd;
        assert!(z <= z_limit, "{f:?}: z = {z}");
    }
}

#[test]
fn power_law_fact_marginals() {
    let (size, facts) = (21, 5);
    let model = WorldModel::permuted_power_law(size, facts, 1.0).unwrap();
    let mut rng = SeededRng::new(5);
    let draws = 10_000;
    let mut hits = vec![0usize; size];
    for _ in 0..draws {
        let w = model.sample_world(&mut rng).unwrap();
        for y in w.facts().iter() {
            hits[y] += 1;
        }
    }
    assert_eq!(hits[BOTTOM], draws);
    let q = facts as f64 / (size - 1) as f64;
    let sd = (q * (1.0 - q) / draws as f64).sqrt();
    // Two-sided 3σ level shared across the 20 cells.
    let z_limit = normal_upper_quantile(normal_upper_tail(3.0) / (size - 1) as f64);
    for (y, &h) in hits.iter().enumerate().skip(1) {
        let z = (h as f64 / draws as f64 - q).abs() / sd;
        assert!(z <= z_limit, "factoid {y}: z = {z}");
    }
}

#[test]
fn single_instance_sparsity() {
    let universe = FactoidUniverse::new(16).unwrap();
    let facts: FactoidSet = [3, 7, 11].into_iter().collect();
    let world = WorldInstance::new(FactoidDist::uniform_over(universe, &facts).unwrap()).unwrap();
    assert_eq!(world.fact_count(), 4);
    assert_eq!(world.hallucination_count(), 12);
    let model = WorldModel::explicit(vec![(1.0, world)]).unwrap();
    let sample = TrainingSample::new(universe, vec![]).unwrap();
    let report = analyze_regularity(&model, &sample).unwrap();
    assert!((report.s - 3f64.ln()).abs() < 1e-15);
}

#[test]
fn w5_small_regularity_within_slot_count() {
    let model = WorldModel::w5_explicit(2, 2, 2, 2).unwrap();
    let empty = TrainingSample::new(model.universe(), vec![]).unwrap();
    let report = analyze_regularity(&model, &empty).unwrap();
    assert!(report.r_facts <= 4.0 + 1e-12);
    assert!(report.r_facts >= 1.0);

    let w5 = WorldModel::w5(2, 2, 2, 2).unwrap();
    let mut rng = SeededRng::new(3);
    let world = w5.sample_world(&mut rng).unwrap();
    let sample =
        TrainingSample::new(w5.universe(), world.p().sample_iid(3, &mut rng).unwrap()).unwrap();
    let exact = analyze_regularity(&model, &sample).unwrap();
    let factorized = analyze_w5_regularity(&w5, &sample).unwrap();
    assert!((exact.r_facts - factorized.r_facts).abs() < 1e-9);
    assert!((exact.r_probs - factorized.r_probs).abs() < 1e-9);
    assert!(exact.r_facts <= 4.0 + 1e-12);
}

fn any_model() -> impl Strategy<Value = WorldModel> {
    prop_oneof![
        (20usize..500, 1usize..15, 0.0f64..2.0)
            .prop_map(|(u, f, k)| WorldModel::permuted_power_law(u, f, k).unwrap()),
        (1usize..4, 1usize..4, 1usize..4, 1usize..4)
            .prop_map(|(a, b, c, d)| WorldModel::w5(a, b, c, d).unwrap()),
        (10usize..100, 1usize..5, 10usize..100, 1usize..5, 0.1f64..1.0).prop_map(
            |(u1, f1, u2, f2, w)| {
                WorldModel::multi_type(vec![
                    TypeComponent {
                        world: WorldModel::permuted_power_law(u1, f1, 0.0).unwrap(),
                        weight: w,
                    },
                    TypeComponent {
                        world: WorldModel::permuted_power_law(u2, f2, 1.0).unwrap(),
                        weight: 1.0 - w + 0.01,
                    },
                ])
                .unwrap()
            }
        ),
    ]
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(96))]

    #[test]
    fn sampled_worlds_put_no_mass_on_hallucinations(model in any_model(), seed in any::<u64>()) {
        let mut rng = SeededRng::new(seed);
        let w = model.sample_world(&mut rng).unwrap();
        prop_assert!(w.facts().contains(BOTTOM));
        prop_assert_eq!(w.p().mass_outside(w.facts()).unwrap(), 0.0);
        prop_assert!((w.p().total_mass() - 1.0).abs() < 1e-9);
        prop_assert_eq!(w.fact_count() + w.hallucination_count(), model.universe_size());
        prop_assert!(w.sparsity() >= model.sparsity() - 1e-12);
    }
}
