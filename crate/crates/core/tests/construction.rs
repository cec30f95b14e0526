use polarq::baselines::{design_channel, design_quantizer, small_n_oracle};
use polarq::polar::construct::{budget_counts, frozen_values, is_subset, partition_levels};
use polarq::polar::{
    estimate_bhattacharyya_all, Allocation, ConstructionConfig, FrozenChoice, LevelSets, Observation, Thresholds, Variant,
};
use polarq::Error;
use proptest::prelude::*;

#[test]
fn estimates_match_the_exhaustive_oracle() {
    let ch = design_channel(3.0, 1.0, 6, 1e-7).unwrap();
    let binned = ch.binned(ch.equiprobable_binning(8).unwrap());
    let trials = 20_000;
    let est = estimate_bhattacharyya_all(&ch, &[Observation::Binned(&ch, &binned)], 4, trials, 5).unwrap();

    // Level 0 has no lower bits; level 1 averages the oracle over the lower-bit patterns.
    for level in 0..2 {
        let mut z_prior = [0.0; 4];
        let mut z_post = [0.0; 4];
        for pattern in 0..(1u32 << (4 * level)) {
            let cosets: Vec<u32> = (0..4).map(|j| (pattern >> (level * j)) & ((1 << level) - 1)).collect();
            let w: f64 = cosets.iter().map(|&c| ch.dg.coset_mass(level, c)).product();
            let t = small_n_oracle(&ch, &binned, level, &cosets, Some(LevelSets { info: vec![0, 1, 2, 3], ..Default::default() }), 1.0).unwrap();
            for i in 0..4 {
                z_prior[i] += w * t.z_prior[i];
                z_post[i] += w * t.z_post[i];
            }
        }
        let e = &est[level];
        for i in 0..4 {
            for (mc, exact) in [(&e.prior, z_prior[i]), (&e.posterior[0], z_post[i])] {
                let tol = 5.0 * mc.std_err[i] + 1e-9;
                assert!((mc.mean[i] - exact).abs() <= tol, "level {level} index {i}: {} vs {exact}", mc.mean[i]);
            }
        }
    }
}

#[test]
fn construction_is_deterministic() {
    let ch = design_channel(3.0, 1.0, 6, 1e-7).unwrap();
    let cfg = ConstructionConfig { trials: 64, allocation: Allocation::Thresholds, frozen: FrozenChoice::Random { seed: 2 }, ..ConstructionConfig::new(128) };
    let a = polarq::io::spec_to_bytes(&design_quantizer(&ch, &cfg).unwrap()).unwrap();
    let b = polarq::io::spec_to_bytes(&design_quantizer(&ch, &cfg).unwrap()).unwrap();
    assert_eq!(a, b);
}

#[test]
fn thread_count_does_not_change_estimates() {
    let ch = design_channel(3.0, 1.0, 6, 1e-7).unwrap();
    let run = |t: usize| {
        rayon::ThreadPoolBuilder::new()
            .num_threads(t)
            .build()
            .unwrap()
            .install(|| estimate_bhattacharyya_all(&ch, &[Observation::Continuous(&ch)], 64, 300, 4).unwrap())
    };
    assert_eq!(run(1), run(3));
}

#[test]
fn allocations_reach_their_counts() {
    let ch = design_channel(3.0, 1.0, 6, 1e-7).unwrap();
    let base = ConstructionConfig { trials: 64, ..ConstructionConfig::new(64) };
    let total = design_quantizer(&ch, &ConstructionConfig { allocation: Allocation::Total { info_bits: 100 }, ..base.clone() }).unwrap();
    assert_eq!(total.info_bits(), 100);
    let counts = vec![0, 4, 30, 20, 2, 0];
    let c = design_quantizer(&ch, &ConstructionConfig { allocation: Allocation::Counts(counts.clone()), ..base.clone() }).unwrap();
    assert_eq!(c.levels.iter().map(|s| s.info.len()).collect::<Vec<_>>(), counts);
    for bad in [Allocation::Counts(vec![65, 0, 0, 0, 0, 0]), Allocation::Total { info_bits: 1000 }] {
        let r = design_quantizer(&ch, &ConstructionConfig { allocation: bad, ..base.clone() });
        assert!(matches!(r, Err(Error::InfeasibleRate { .. })));
    }
    let r = design_quantizer(&ch, &ConstructionConfig { allocation: Allocation::ErrorBudget { budget: 0.1 }, ..base });
    assert!(matches!(r, Err(Error::Domain(_))));
}

#[test]
fn per_level_rates_follow_information() {
    let ch = design_channel(3.0, 1.0, 6, 1e-7).unwrap();
    let spec = design_quantizer(&ch, &ConstructionConfig { trials: 64, ..ConstructionConfig::new(256) }).unwrap();
    for (s, &mi) in spec.levels.iter().zip(&spec.construction.level_information) {
        let rate = s.info.len() as f64 / 256.0;
        let target = if mi > 0.02 { (mi + 0.02).min(1.0) } else { mi };
        assert!((rate - target).abs() <= 1.0 / 256.0 + 1e-12, "{rate} vs {target}");
    }
}

#[test]
fn frozen_sets_shrink_with_level() {
    let ch = design_channel(3.0, 0.25, 6, 1e-7).unwrap();
    let spec = design_quantizer(&ch, &ConstructionConfig { trials: 64, allocation: Allocation::Thresholds, thresholds: Thresholds { shaping: 1e-3, frozen: 0.1 }, ..ConstructionConfig::new(128) }).unwrap();
    for w in spec.levels.windows(2) {
        assert!(is_subset(&w[1].frozen, &w[0].frozen));
    }
    let mut broken = spec.clone();
    broken.frozen_bits[0].push(0);
    assert!(broken.validate().is_err());
}

#[test]
fn frozen_values_are_reproducible() {
    let sets = vec![LevelSets { frozen: vec![0, 1, 2, 3, 4, 5, 6, 7], ..Default::default() }; 2];
    let a = frozen_values(&sets, FrozenChoice::Random { seed: 9 });
    assert_eq!(a, frozen_values(&sets, FrozenChoice::Random { seed: 9 }));
    assert_ne!(a, frozen_values(&sets, FrozenChoice::Random { seed: 10 }));
    assert!(frozen_values(&sets, FrozenChoice::Zero).iter().flatten().all(|&b| b == 0));
}

#[test]
fn estimator_rejects_bad_input() {
    let ch = design_channel(3.0, 1.0, 6, 1e-7).unwrap();
    assert!(matches!(estimate_bhattacharyya_all(&ch, &[], 12, 10, 1), Err(Error::Size(12))));
    assert!(estimate_bhattacharyya_all(&ch, &[], 16, 0, 1).is_err());
    let other = design_channel(3.0, 0.5, 6, 1e-7).unwrap();
    assert!(estimate_bhattacharyya_all(&ch, &[Observation::Continuous(&other)], 16, 10, 1).is_err());
}

#[test]
fn channel_partition_on_perfect_estimates() {
    let est = vec![polarq::polar::LevelEstimate {
        prior: polarq::polar::ZEstimate { mean: vec![1.0, 1.0, 0.0, 1.0], std_err: vec![0.0; 4] },
        posterior: vec![polarq::polar::ZEstimate { mean: vec![0.0, 1.0, 0.0, 0.02], std_err: vec![0.0; 4] }],
    }];
    let s = partition_levels(&est, Some(&[2]), Variant::ChannelCoding, 0, Thresholds::EVEN);
    assert_eq!(s[0].info, vec![0, 3]);
    assert_eq!(s[0].frozen, vec![1]);
    assert_eq!(s[0].shaping, vec![2]);
}

proptest! {
    #[test]
    fn subset_matches_naive(a in proptest::collection::btree_set(0u32..40, 0..20), b in proptest::collection::btree_set(0u32..40, 0..30)) {
        let (a, b): (Vec<u32>, Vec<u32>) = (a.into_iter().collect(), b.into_iter().collect());
        prop_assert_eq!(is_subset(&a, &b), a.iter().all(|x| b.contains(x)));
    }

    #[test]
    fn budget_is_respected(costs in proptest::collection::vec((0.0f64..0.01, 0usize..3), 0..60), budget in 0.0f64..0.2) {
        let counts = budget_counts(costs.clone(), budget, 3);
        let taken: usize = counts.iter().sum();
        let mut sorted: Vec<f64> = costs.iter().map(|c| c.0).collect();
        sorted.sort_by(f64::total_cmp);
        let spent: f64 = sorted[..taken].iter().sum();
        prop_assert!(spent <= budget);
        if taken < sorted.len() {
            prop_assert!(spent + sorted[taken] > budget);
        }
    }
}
