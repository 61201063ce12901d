use balclust::kmeanspp::{dsquared_seed, kmeanspp_balanced, SeedingConfig};
use balclust::{check_capacities, evaluate, Constraints, Instance, Objective, PointSet};
use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use statrs::distribution::{ChiSquared, ContinuousCDF};

#[test]
fn seeding_follows_the_d_squared_law() {
    let xs = [0.0, 1.0, 3.0];
    let pts = PointSet::new(1, xs.to_vec()).unwrap();
    let draws = 100_000;
    let mut counts = [[0u32; 3]; 3];
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    for _ in 0..draws {
        let s = dsquared_seed(&pts, 2, &mut rng, None).unwrap();
        counts[s[0]][s[1]] += 1;
    }
    let mut stat = 0.0;
    for i in 0..3 {
        let d2: Vec<f64> = xs.iter().map(|x| (x - xs[i]).powi(2)).collect();
        let total: f64 = d2.iter().sum();
        for j in (0..3).filter(|&j| j != i) {
            let expected = draws as f64 / 3.0 * d2[j] / total;
            stat += (f64::from(counts[i][j]) - expected).powi(2) / expected;
        }
        assert_eq!(counts[i][i], 0);
    }
    let p_value = 1.0 - ChiSquared::new(5.0).unwrap().cdf(stat);
    assert!(p_value > 1e-3, "chi-square {stat}, p = {p_value}");
}

#[test]
fn weights_scale_the_first_draw() {
    let pts = PointSet::new(1, vec![0.0, 1.0]).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let hits = (0..20_000)
        .filter(|_| dsquared_seed(&pts, 1, &mut rng, Some(&[3.0, 1.0])).unwrap()[0] == 0)
        .count();
    assert!((hits as f64 / 20_000.0 - 0.75).abs() < 0.02);
}

fn blobs(per: usize, rng: &mut ChaCha8Rng) -> (PointSet, Vec<usize>) {
    let noise = Normal::new(0.0, 0.1).unwrap();
    let mut data = Vec::new();
    let mut labels = Vec::new();
    for (label, cx) in [0.0, 10.0].into_iter().enumerate() {
        for _ in 0..per {
            data.push(cx + noise.sample(rng));
            data.push(noise.sample(rng));
            labels.push(label);
        }
    }
    (PointSet::new(2, data).unwrap(), labels)
}

#[test]
fn separated_blobs_give_pure_clusters() {
    let cons = Constraints::new(2, 1, 0.25, 0.75).unwrap();
    let cfg = SeedingConfig::new(2);
    let mut pure = 0;
    for seed in 0..50 {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let (pts, labels) = blobs(100, &mut rng);
        let out = kmeanspp_balanced(&pts, &cons, &cfg, &mut rng, None).unwrap();
        assert!(out.report.feasible);
        let purity = out.assignment.clusters().iter().all(|members| {
            let ones = members.iter().filter(|&&j| labels[j] == 1).count();
            ones.max(members.len() - ones) as f64 >= 0.95 * members.len() as f64
        });
        pure += usize::from(purity);
    }
    assert!(pure >= 48, "{pure} of 50 seeds pure");
}

#[test]
fn coincident_groups_cost_nothing_when_k_matches() {
    let mut data = Vec::new();
    for g in 0..3 {
        for _ in 0..3 {
            data.extend_from_slice(&[g as f64 * 5.0, 1.0]);
        }
    }
    let pts = PointSet::new(2, data).unwrap();
    let inst = Instance::from_points(pts.clone()).unwrap();
    let cons = Constraints::new(3, 1, 2.0 / 9.0, 1.0).unwrap();
    let cfg = SeedingConfig::new(3);
    let zero = (0..100)
        .filter(|&seed| {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let out = kmeanspp_balanced(&pts, &cons, &cfg, &mut rng, None).unwrap();
            evaluate(&inst, &out.assignment, Objective::KMeans).unwrap() == 0.0
        })
        .count();
    assert!(zero >= 90, "{zero} of 100 seeds at cost 0");
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn balanced_output_meets_the_bounds(
        coords in prop::collection::vec(-50i32..50, 40..160),
        k in 1usize..6,
        seed in any::<u64>(),
    ) {
        let pts = PointSet::new(2, coords[..coords.len() / 2 * 2].iter().map(|&c| f64::from(c)).collect()).unwrap();
        let n = pts.len();
        prop_assume!(k <= n);
        let cons = Constraints::new(k, 1, 0.5 / k as f64, (2.0 / k as f64).min(1.0)).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let out = kmeanspp_balanced(&pts, &cons, &SeedingConfig::new(k), &mut rng, None).unwrap();
        out.assignment.validate(n, 1, 1).unwrap();
        let report = check_capacities(&out.assignment, &cons, None);
        prop_assert!(report.feasible, "{report:?}");
        // Merging and splitting may change the cluster count.
        let sizes: u32 = out.assignment.counts().iter().sum();
        prop_assert_eq!(sizes as usize, n);
        let again = kmeanspp_balanced(&pts, &cons, &SeedingConfig::new(k), &mut ChaCha8Rng::seed_from_u64(seed), None).unwrap();
        prop_assert_eq!(again.assignment, out.assignment);
    }
}
