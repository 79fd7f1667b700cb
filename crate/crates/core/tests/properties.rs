use fission_core::dist::DistributionSpec;
use fission_core::fission::{
    fission_gaussian_misspec_p2, fission_gaussian_p1, fission_poisson_thin, FissionRule,
};
use fission_core::glm::{lambda_grid, lambda_max, logistic_lasso_path, sandwich, Dataset, LassoOptions};
use fission_core::info::chain_rule_check;
use fission_core::rng;
use fission_core::selective::{derive_offset, Method};
use fission_core::sim::{
    qq_data, read_records_csv, write_records_csv, Aggregator, CoefRecord, MethodAggregates, ReplicateRecord, SimConfig,
};
use nalgebra::DMatrix;
use proptest::prelude::*;

fn eps() -> impl Strategy<Value = f64> {
    0.01f64..0.99
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn count_rules_reconstruct(x in 0u64..500, e in eps(), tau in 0.1f64..20.0, r in 0.5f64..10.0, seed: u64) {
        let mut g = rng::master(seed);
        let rules = [
            FissionRule::poisson_thin(e).unwrap(),
            FissionRule::poisson_tau_p2(tau).unwrap(),
            FissionRule::negbin_p1(e, r).unwrap(),
            FissionRule::negbin_via_poisson_p2(e).unwrap(),
        ];
        for rule in rules {
            let pair = rule.split(x as f64, &mut g).unwrap();
            prop_assert_eq!(pair.reconstruct(), x as f64);
            prop_assert!(pair.fold1 >= 0.0 && pair.fold2 >= 0.0);
        }
        let y = (x % 2) as f64;
        prop_assert_eq!(FissionRule::bernoulli_p2(e).unwrap().split(y, &mut g).unwrap().fold2, y);
    }

    #[test]
    fn k_fold_thinning_reconstructs(x in 0u64..10_000, w in prop::collection::vec(0.05f64..1.0, 2..6), seed: u64) {
        let total: f64 = w.iter().sum();
        let probs: Vec<f64> = w.iter().map(|v| v / total).collect();
        let set = fission_poisson_thin(x, &probs, &mut rng::master(seed)).unwrap();
        prop_assert_eq!(set.folds.len(), probs.len());
        prop_assert_eq!(set.reconstruct(), x);
    }

    #[test]
    fn gaussian_misspec_with_true_variance_is_p1(x in -50f64..50.0, e in eps(), s2 in 0.1f64..10.0, seed: u64) {
        let a = fission_gaussian_p1(x, s2, e, &mut rng::master(seed)).unwrap();
        let b = fission_gaussian_misspec_p2(x, s2, e, &mut rng::master(seed)).unwrap();
        prop_assert_eq!(a.fold1, b.fold1);
        prop_assert_eq!(a.fold2, b.fold2);
        prop_assert!((a.reconstruct() - x).abs() <= 1e-12 * x.abs().max(1.0));
    }

    #[test]
    fn bernoulli_conditional_is_a_probability(theta in 0.01f64..0.99, e in eps()) {
        let truth = DistributionSpec::bernoulli(theta).unwrap();
        let rule = FissionRule::bernoulli_p2(e).unwrap();
        let marginal = rule.fold1_law().instantiate(&truth).unwrap().param(0);
        let mut total = 0.0;
        for at in [0.0, 1.0] {
            let q = rule.conditional_law(at).instantiate(&truth).unwrap().param(0);
            prop_assert!(q > 0.0 && q < 1.0);
            let w = if at == 1.0 { marginal } else { 1.0 - marginal };
            total += w * q;
        }
        // Averaging the conditional over the training fold recovers θ.
        prop_assert!((total - theta).abs() < 1e-12);
    }

    #[test]
    fn independent_fold_information_adds_up(theta in 0.2f64..20.0, e in eps()) {
        let truth = DistributionSpec::poisson(theta).unwrap();
        let rep = chain_rule_check(&FissionRule::poisson_thin(e).unwrap(), &truth, 1, &mut rng::master(1)).unwrap();
        prop_assert!((rep.chain_rule_gap()).abs() <= 1e-12 * rep.i_x);
        prop_assert!(rep.i_fold1 <= rep.i_x);
    }

    #[test]
    fn poisson_masses_sum_to_one(theta in 0.01f64..50.0) {
        let mut total = 0.0;
        DistributionSpec::poisson(theta).unwrap().for_each_support_point(|_, m| total += m).unwrap();
        prop_assert!((total - 1.0).abs() < 1e-9);
    }

    #[test]
    fn offsets_are_antisymmetric(bits in prop::collection::vec(0u8..2, 1..50), e in eps()) {
        let a: Vec<f64> = bits.iter().map(|&b| f64::from(b)).collect();
        let flipped: Vec<f64> = a.iter().map(|b| 1.0 - b).collect();
        let oa = derive_offset(&a, e).unwrap();
        let ob = derive_offset(&flipped, e).unwrap();
        for (x, y) in oa.iter().zip(&ob) {
            prop_assert_eq!(*x, -*y);
        }
    }

    #[test]
    fn qq_pairs_are_monotone(pool in prop::collection::vec(0f64..1.0, 1..200)) {
        let qq = qq_data(&pool).unwrap();
        prop_assert_eq!(qq.len(), pool.len());
        for w in qq.windows(2) {
            prop_assert!(w[0].0 < w[1].0 && w[0].1 <= w[1].1);
        }
        prop_assert!(qq[0].0 > 0.0 && qq[qq.len() - 1].0 < 1.0);
    }

    #[test]
    fn sandwich_is_symmetric(a in prop::collection::vec(-3f64..3.0, 9), b in prop::collection::vec(-3f64..3.0, 9)) {
        let a = DMatrix::from_row_slice(3, 3, &a);
        let b = DMatrix::from_row_slice(3, 3, &b);
        let bread = &a * a.transpose() + DMatrix::identity(3, 3);
        let meat = &b * b.transpose();
        let s = sandwich(&bread, &meat);
        prop_assert!((&s - s.transpose()).amax() == 0.0);
        prop_assert!(s.symmetric_eigenvalues().min() >= -1e-8 * s.amax().max(1.0));
    }

    #[test]
    fn records_round_trip_and_aggregate_consistently(
        sel in prop::collection::vec(prop::collection::btree_set(1usize..=6, 0..4), 1..12),
        vals in prop::collection::vec((-3f64..3.0, 0.01f64..2.0, 0f64..1.0), 4),
    ) {
        let mut cfg = SimConfig::signal(sel.len(), 0);
        cfg.p = 6;
        cfg.beta = vec![-0.9, 2.1, -1.5, 0.0, 0.0, 0.0];
        let records: Vec<ReplicateRecord> = sel.iter().enumerate().map(|(i, s)| {
            let mut coefs = Vec::new();
            for (k, c) in std::iter::once(0).chain(s.iter().copied()).enumerate() {
                let (est, se, p) = vals[k % vals.len()];
                coefs.push(CoefRecord { coef: c, estimate: est, se, ci_lower: est - 1.96 * se, ci_upper: est + 1.96 * se, p_value: p });
            }
            ReplicateRecord { replicate: i as u64, method: Method::CorrectedOffset, lambda: 0.1 / (i as f64 + 1.0), empty_selection: s.is_empty(), coefs }
        }).collect();

        let mut buf = Vec::new();
        write_records_csv(&records, &mut buf).unwrap();
        prop_assert_eq!(read_records_csv(buf.as_slice()).unwrap(), records.clone());

        let mut agg = Aggregator::new(&cfg, Method::CorrectedOffset);
        records.iter().for_each(|r| agg.push(r));
        let streamed = agg.finish();
        prop_assert_eq!(&streamed, &MethodAggregates::from_records(&cfg, Method::CorrectedOffset, &records));
        for c in &streamed.coefs {
            prop_assert!((0.0..=1.0).contains(&c.selection));
            prop_assert!(c.coverage.is_none_or(|v| (0.0..=1.0).contains(&v)));
            prop_assert_eq!(c.coverage.is_none(), c.n_selected == 0);
        }
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(12))]

    #[test]
    fn lasso_solutions_satisfy_kkt(seed: u64, n in 30usize..80, p in 1usize..6) {
        let mut g = rng::master(seed);
        let x = DMatrix::from_fn(n, p, |_, _| rand_distr::Distribution::sample(&rand_distr::StandardNormal, &mut g));
        let y: Vec<f64> = (0..n).map(|i| f64::from(u8::from(x[(i, 0)] + rand::Rng::random::<f64>(&mut g) > 0.5))).collect();
        prop_assume!(y.iter().any(|&v| v == 1.0) && y.iter().any(|&v| v == 0.0));
        let data = Dataset::new(x, y, None).unwrap();
        let opts = LassoOptions::default();
        let grid = lambda_grid(lambda_max(&data, &opts), 10, 0.05);
        let path = logistic_lasso_path(&data, &grid, &opts).unwrap();
        prop_assert!(path.all_converged());
        for k in 0..grid.len() {
            prop_assert!(path.kkt_violation(&data, k) <= 1e-6);
        }
    }
}
