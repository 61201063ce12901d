use balclust::bicriteria::{bicriteria_cluster, opening_bound};
use balclust::instances::{brute_force_opt, gen_groups};
use balclust::lp::{build_lp, solve_lp, Loads, Sense};
use balclust::{evaluate, Constraints, Instance, Objective};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn random_instance(rng: &mut ChaCha8Rng, n: usize) -> Instance {
    let rows: Vec<Vec<f64>> = (0..n)
        .map(|_| vec![rng.gen::<f64>() * 10.0, rng.gen::<f64>() * 10.0])
        .collect();
    Instance::from_rows(&rows).unwrap()
}

#[test]
fn groups_with_two_centers_each_cost_nothing() {
    let inst = gen_groups(2, 2, false).unwrap();
    let cons = Constraints::new(4, 2, 0.25, 0.5).unwrap();
    let out = bicriteria_cluster(&inst, &cons, Objective::KMedian).unwrap();
    assert_eq!(out.diagnostics.c_lp, 0.0);
    assert_eq!(out.diagnostics.value, 0.0);
    out.assignment.validate(inst.n(), 2, 2).unwrap();
}

#[test]
fn random_instances_meet_ratio_and_load_bounds() {
    let mut rng = ChaCha8Rng::seed_from_u64(2024);
    let cons = Constraints::new(4, 2, 0.1, 0.6).unwrap();
    for _ in 0..12 {
        let n = rng.gen_range(6..=14);
        let inst = random_instance(&mut rng, n);
        let cap = (2.0 * n as f64 * 0.6).ceil() as u32;
        for obj in [Objective::KMedian, Objective::KMeans] {
            let out = bicriteria_cluster(&inst, &cons, obj).unwrap();
            let ratio = if obj == Objective::KMedian {
                11.0
            } else {
                95.0
            };
            assert!(out.diagnostics.value <= ratio * out.diagnostics.c_lp + 1e-6);
            assert!(out.assignment.counts().iter().all(|&c| c <= cap));
            out.assignment.validate(n, 2, 2).unwrap();
            assert!(out.diagnostics.lemmas.all());
            assert_eq!(
                evaluate(&inst, &out.assignment, obj).unwrap(),
                out.diagnostics.value
            );
        }
        let opt = brute_force_opt(&inst, &cons, Objective::KMedian).unwrap();
        let out = bicriteria_cluster(&inst, &cons, Objective::KMedian).unwrap();
        assert!(out.diagnostics.c_lp <= opt.value + 1e-6);
        assert!(out.diagnostics.value <= 11.0 * opt.value + 1e-6);
    }
}

#[test]
fn kcenter_variant_stays_within_five_thresholds() {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let cons = Constraints::new(3, 2, 0.1, 0.8).unwrap();
    for _ in 0..8 {
        let inst = random_instance(&mut rng, 9);
        let out = bicriteria_cluster(&inst, &cons, Objective::KCenter).unwrap();
        let t = out.diagnostics.threshold.unwrap();
        assert!(out.diagnostics.value <= 5.0 * t + 1e-9);
    }
}

#[test]
fn opening_bound_is_p_plus_two_over_p_for_even_p() {
    for p in [2usize, 4, 6] {
        assert!((opening_bound(p, Objective::KMedian) - (p as f64 + 2.0) / p as f64).abs() < 1e-12);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(8))]

    #[test]
    fn random_moves_preserve_lp_constraints(seed in 0u64..1000, n in 5usize..10) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let inst = random_instance(&mut rng, n);
        let cons = Constraints::new(3, 2, 0.1, 0.9).unwrap();
        let lp = build_lp(&inst, &cons, Objective::KMedian, None).unwrap();
        let mut frac = solve_lp(&lp).unwrap();
        let loads = Loads::unweighted(&cons, n);
        let mut done = 0;
        while done < 1000 {
            let a = rng.gen_range(0..n);
            let b = rng.gen_range(0..n);
            if frac.y[a] <= 0.0 || a == b {
                continue;
            }
            let room = (1.0 - frac.y[b]).max(0.0);
            let delta = rng.gen::<f64>() * frac.y[a].min(room);
            frac.move_opening(a, b, delta).unwrap();
            prop_assert_eq!(frac.check(&loads, cons.k, Sense::Le, true, 1e-7), Ok(()));
            done += 1;
        }
    }
}
