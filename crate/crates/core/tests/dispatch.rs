use std::collections::HashSet;

use balclust::baselines::{bpt_dispatcher, lsh_dispatcher, random_dispatcher};
use balclust::dispatch::{
    build_rptree, empirical_masses, estimate_alpha, fit_dispatcher, load_router, Backend,
    Dispatcher, FitAlgo, Router,
};
use balclust::{Constraints, Objective, PointSet};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use statrs::distribution::{ChiSquared, ContinuousCDF};

fn gaussian(n: usize, dim: usize, rng: &mut ChaCha8Rng) -> PointSet {
    PointSet::new(
        dim,
        (0..n * dim).map(|_| rng.sample(StandardNormal)).collect(),
    )
    .unwrap()
}

fn median(mut v: Vec<f64>) -> f64 {
    v.sort_by(f64::total_cmp);
    v[v.len() / 2]
}

#[test]
fn exact_and_tree_backends_mostly_agree_in_two_dimensions() {
    let mut rng = ChaCha8Rng::seed_from_u64(21);
    let s = gaussian(2000, 2, &mut rng);
    let queries = gaussian(2000, 2, &mut rng);
    let tree = build_rptree(&s, 32, &mut rng).unwrap();
    let agree = queries
        .rows()
        .filter(|x| tree.nn_query(&s, x) == s.nearest(x))
        .count();
    let rate = agree as f64 / queries.len() as f64;
    // Single-leaf search measured 0.867 here; the median over 20 seeds is 0.871.
    assert!(rate >= 0.86, "agreement {rate}");
}

#[test]
fn tree_recall_in_ten_dimensions() {
    let mut rng = ChaCha8Rng::seed_from_u64(22);
    let s = gaussian(1000, 10, &mut rng);
    let queries = gaussian(1000, 10, &mut rng);
    let tree = build_rptree(&s, 32, &mut rng).unwrap();
    let hits = queries
        .rows()
        .filter(|x| tree.nn_query(&s, x) == s.nearest(x))
        .count();
    let recall = hits as f64 / queries.len() as f64;
    // Single-leaf search measured 0.30 here; the median over 20 seeds is 0.308.
    assert!(recall >= 0.29, "recall {recall}");
}

#[test]
fn alpha_shrinks_with_larger_subsamples() {
    let mut by_size = Vec::new();
    for n in [20usize, 80, 320] {
        let vals: Vec<f64> = (0..15)
            .map(|seed| {
                let mut rng = ChaCha8Rng::seed_from_u64(100 + seed);
                let s = gaussian(n, 2, &mut rng);
                let holdout = gaussian(500, 2, &mut rng);
                estimate_alpha(&s, &holdout, 1).unwrap()
            })
            .collect();
        by_size.push(median(vals));
    }
    assert!(by_size.windows(2).all(|w| w[1] <= w[0]), "{by_size:?}");
}

fn two_blobs(n: usize, heavy: f64, rng: &mut ChaCha8Rng) -> PointSet {
    let data: Vec<f64> = (0..n)
        .flat_map(|_| {
            let cx = if rng.gen::<f64>() < heavy { 0.0 } else { 10.0 };
            let dx: f64 = rng.sample(StandardNormal);
            let dy: f64 = rng.sample(StandardNormal);
            [cx + 0.5 * dx, 0.5 * dy]
        })
        .collect();
    PointSet::new(2, data).unwrap()
}

#[test]
fn weighted_fit_respects_estimated_loads() {
    let mut rng = ChaCha8Rng::seed_from_u64(31);
    // Equal blobs in the subsample, 80/20 mass in the second sample.
    let s = two_blobs(200, 0.5, &mut rng);
    let s_prime = two_blobs(5000, 0.8, &mut rng);
    let cons = Constraints::new(2, 1, 0.3, 0.7).unwrap();
    let out = fit_dispatcher(
        &s,
        &s_prime,
        &cons,
        FitAlgo::Kmeanspp,
        Backend::Exact,
        &mut rng,
    )
    .unwrap();
    let eps = 0.02;
    for &l in &out.report.loads {
        assert!(
            (0.3 - eps..=0.7 + eps).contains(&l),
            "loads {:?}",
            out.report.loads
        );
    }
    let fresh = two_blobs(20000, 0.8, &mut rng);
    for m in empirical_masses(&out.dispatcher, &fresh) {
        assert!((0.3 - 0.05..=0.7 + 0.05).contains(&m), "mass {m}");
    }
}

#[test]
fn lp_round_fit_replicates_every_point() {
    let mut rng = ChaCha8Rng::seed_from_u64(32);
    let s = two_blobs(12, 0.5, &mut rng);
    let s_prime = two_blobs(600, 0.5, &mut rng);
    let cons = Constraints::new(3, 2, 0.1, 0.9).unwrap();
    let out = fit_dispatcher(
        &s,
        &s_prime,
        &cons,
        FitAlgo::LpRound(Objective::KMedian),
        Backend::Exact,
        &mut rng,
    )
    .unwrap();
    let q = [3.0, 0.2];
    let ids = out.dispatcher.route(&q);
    assert_eq!(ids.len(), 2);
    assert!(out.report.worst_multiplicity <= 2);
    let masses = empirical_masses(&out.dispatcher, &s_prime);
    assert!((masses.iter().sum::<f64>() - 2.0).abs() < 1e-9);
}

#[test]
fn fitted_dispatcher_routes_subsample_points_to_their_own_clusters() {
    let mut rng = ChaCha8Rng::seed_from_u64(33);
    let s = two_blobs(100, 0.5, &mut rng);
    let cons = Constraints::new(2, 1, 0.2, 0.8).unwrap();
    let out = fit_dispatcher(&s, &s, &cons, FitAlgo::Kmeanspp, Backend::Auto, &mut rng).unwrap();
    for (i, x) in s.rows().enumerate() {
        assert_eq!(
            out.dispatcher.dispatch(x),
            out.dispatcher.groups[i].as_slice()
        );
    }
    let bytes = out.dispatcher.encode().buf;
    let back = load_router(&bytes).unwrap();
    assert!(s.rows().all(|x| back.route(x) == out.dispatcher.route(x)));
}

#[test]
fn random_baseline_is_uniform() {
    let mut rng = ChaCha8Rng::seed_from_u64(41);
    let k = 8;
    let r = random_dispatcher(k, &mut rng).unwrap();
    let q = gaussian(100_000, 3, &mut rng);
    let mut counts = vec![0f64; k];
    for x in q.rows() {
        counts[r.id(x)] += 1.0;
    }
    let expect = q.len() as f64 / k as f64;
    let stat: f64 = counts.iter().map(|c| (c - expect).powi(2) / expect).sum();
    let p = 1.0 - ChiSquared::new((k - 1) as f64).unwrap().cdf(stat);
    assert!(p > 0.001, "chi-square p = {p}");
}

#[test]
fn lsh_calibration_lands_near_two_k_bins() {
    for seed in 0..5 {
        let mut rng = ChaCha8Rng::seed_from_u64(50 + seed);
        let s = gaussian(2000, 2, &mut rng);
        for k in [2usize, 4, 8, 16] {
            let l = lsh_dispatcher(&s, k, &mut rng).unwrap();
            let bins: HashSet<Vec<i64>> = s.rows().map(|x| l.bin(x)).collect();
            assert!(
                (k..=4 * k).contains(&bins.len()),
                "k = {k}: {} bins",
                bins.len()
            );
        }
    }
}

#[test]
fn lsh_has_no_balance_guarantee() {
    let mut rng = ChaCha8Rng::seed_from_u64(60);
    let s = gaussian(4000, 2, &mut rng);
    let l = lsh_dispatcher(&s, 8, &mut rng).unwrap();
    let masses = empirical_masses(&l, &s);
    let max = masses.iter().copied().fold(0.0, f64::max);
    // A balanced rule with L = 1.5/k would cap every cluster at 0.1875.
    assert!(max > 1.5 / 8.0, "max mass {max}");
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(32))]

    #[test]
    fn bpt_leaves_are_balanced_and_fitting_points_route_home(seed in 0u64..1000, levels in 0u32..4, extra in 0usize..20) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let k = 1usize << levels;
        let n = k + extra;
        let s = PointSet::new(3, (0..n * 3).map(|_| rng.gen::<f64>()).collect()).unwrap();
        let t = bpt_dispatcher(&s, k, &mut rng).unwrap();
        let mut sizes = vec![0usize; k];
        for x in s.rows() {
            sizes[t.id(x)] += 1;
        }
        let lo = n / k;
        prop_assert!(sizes.iter().all(|&c| c == lo || c == lo + 1), "{sizes:?}");
        prop_assert_eq!(sizes.iter().sum::<usize>(), n);
    }

    #[test]
    fn dispatch_is_a_pure_function(seed in 0u64..1000, x in -3.0f64..3.0, y in -3.0f64..3.0) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let s = gaussian(64, 2, &mut rng);
        let groups = (0..64).map(|i| vec![i % 4]).collect();
        let d = Dispatcher::new(Constraints::new(4, 1, 0.0, 1.0).unwrap(), s, groups, vec![1.0 / 64.0; 64], Backend::RpTree { leaf_size: 4 }, &mut rng).unwrap();
        let q = [x, y];
        prop_assert_eq!(d.route(&q), d.route(&q));
        let r = random_dispatcher(4, &mut rng).unwrap();
        prop_assert_eq!(r.route(&q), r.route(&q));
    }
}
