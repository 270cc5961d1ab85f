use monofact_core::bounds::tv_three_forms;
use monofact_core::prob::{FactoidDist, FactoidSet, FactoidUniverse, SeededRng};
use proptest::prelude::*;
use rand::Rng;

fn random_dist(rng: &mut SeededRng, size: usize, sparse: bool) -> FactoidDist {
    let universe = FactoidUniverse::new(size).unwrap();
    let mut weights: Vec<(usize, f64)> = (0..size)
        .map(|y| {
            let zero = sparse && rng.random::<f64>() < 0.4;
            (y, if zero { 0.0 } else { rng.random::<f64>() })
        })
        .collect();
    if weights.iter().all(|(_, w)| *w == 0.0) {
        weights[0].1 = 1.0;
    }
    FactoidDist::from_weights(universe, weights).unwrap()
}

fn random_set(rng: &mut SeededRng, size: usize) -> FactoidSet {
    (0..size).filter(|_| rng.random::<bool>()).collect()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(128))]

    #[test]
    fn tv_forms_agree(seed in any::<u64>(), size in 2usize..=12, sparse in any::<bool>()) {
        let mut rng = SeededRng::new(seed);
        let a = random_dist(&mut rng, size, sparse);
        let b = random_dist(&mut rng, size, sparse);
        let (max_subset, half_l1, pos_part) = tv_three_forms(&a, &b).unwrap();
        prop_assert!((max_subset - half_l1).abs() <= 1e-12);
        prop_assert!((half_l1 - pos_part).abs() <= 1e-12);
    }

    #[test]
    fn tv_is_a_metric(seed in any::<u64>(), size in 2usize..60) {
        let mut rng = SeededRng::new(seed);
        let a = random_dist(&mut rng, size, true);
        let b = random_dist(&mut rng, size, true);
        let c = random_dist(&mut rng, size, false);
        let ab = a.tv_distance(&b).unwrap();
        prop_assert!((0.0..=1.0).contains(&ab));
        prop_assert_eq!(ab, b.tv_distance(&a).unwrap());
        prop_assert!(a.tv_distance(&a).unwrap() == 0.0);
        let ac = a.tv_distance(&c).unwrap();
        let cb = c.tv_distance(&b).unwrap();
        prop_assert!(ab <= ac + cb + 1e-12);
    }

    #[test]
    fn set_mass_complements(seed in any::<u64>(), size in 2usize..80) {
        let mut rng = SeededRng::new(seed);
        let p = random_dist(&mut rng, size, true);
        let s = random_set(&mut rng, size);
        let inside = p.mass_of(&s).unwrap();
        let outside = p.mass_outside(&s).unwrap();
        prop_assert!((inside + outside - 1.0).abs() <= 1e-12);
        prop_assert!((0.0..=1.0 + 1e-12).contains(&inside));
    }

    #[test]
    fn kl_is_non_negative(seed in any::<u64>(), size in 2usize..60) {
        let mut rng = SeededRng::new(seed);
        let p = random_dist(&mut rng, size, true);
        let q = random_dist(&mut rng, size, false);
        prop_assert!(p.kl_divergence(&q).unwrap() >= -1e-12);
        prop_assert!(p.kl_divergence(&p).unwrap().abs() <= 1e-12);
    }

    #[test]
    fn pinsker_holds(seed in any::<u64>(), size in 2usize..40) {
        let mut rng = SeededRng::new(seed);
        let p = random_dist(&mut rng, size, false);
        let q = random_dist(&mut rng, size, false);
        let tv = p.tv_distance(&q).unwrap();
        let kl = p.kl_divergence(&q).unwrap();
        prop_assert!(tv <= (kl / 2.0).sqrt() + 1e-12);
    }
}

#[test]
fn sampling_frequencies_match_probabilities() {
    let mut rng = SeededRng::new(2024);
    for (size, sparse) in [(5, false), (12, true), (40, true)] {
        let p = random_dist(&mut rng, size, sparse);
        let draws = 200_000;
        let mut counts = vec![0usize; size];
        for y in p.sample_iid(draws, &mut rng).unwrap() {
            counts[y] += 1;
        }
        for (y, &c) in counts.iter().enumerate() {
            let q = p.prob(y);
            let sd = (q * (1.0 - q) / draws as f64).sqrt();
            let freq = c as f64 / draws as f64;
            if q == 0.0 {
                assert_eq!(c, 0, "zero-probability factoid {y} was drawn");
            } else {
                assert!((freq - q).abs() <= 5.0 * sd, "factoid {y}: {freq} vs {q}");
            }
        }
    }
}

#[test]
fn sampler_streams_are_reproducible() {
    let p = FactoidDist::uniform(FactoidUniverse::new(1000).unwrap());
    let a = p.sample_iid(500, &mut SeededRng::child(7, 3)).unwrap();
    let b = p.sample_iid(500, &mut SeededRng::child(7, 3)).unwrap();
    let c = p.sample_iid(500, &mut SeededRng::child(7, 4)).unwrap();
    assert_eq!(a, b);
    assert_ne!(a, c);
}
