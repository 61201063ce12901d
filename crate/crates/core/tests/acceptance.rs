//! Acceptance suite: one PASS/FAIL line per criterion; exits nonzero if any fails.

use std::panic::{catch_unwind, AssertUnwindSafe};
use std::time::Instant;

use balclust::bicriteria::bicriteria_cluster;
use balclust::dispatch::{
    empirical_masses, estimate_weights, fit_dispatcher, second_sample_size, three_sigma, Backend,
    FitAlgo,
};
use balclust::harness::{
    run_experiment, scaling_run, DatasetSpec, DispatcherSpec, ExperimentConfig,
};
use balclust::instances::{brute_force_opt, gen_gaussian_mixture, gen_groups, gen_star, GmmConfig};
use balclust::kcenter_exact::kcenter_cluster;
use balclust::kmeanspp::{kmeanspp_balanced, SeedingConfig};
use balclust::lp::{build_lp, solve_lp, Loads, Sense};
use balclust::mcf::{conservation_residuals, solve_mcf, FlowNetwork};
use balclust::{evaluate, Constraints, Error, Instance, Objective, PointSet};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

type Outcome = std::result::Result<String, String>;

fn ensure(cond: bool, msg: impl Into<String>) -> std::result::Result<(), String> {
    if cond {
        Ok(())
    } else {
        Err(msg.into())
    }
}

fn random_instance(rng: &mut ChaCha8Rng, n: usize) -> Instance {
    let rows: Vec<Vec<f64>> = (0..n)
        .map(|_| vec![rng.gen::<f64>() * 10.0, rng.gen::<f64>() * 10.0])
        .collect();
    Instance::from_rows(&rows).unwrap()
}

fn median(mut v: Vec<f64>) -> f64 {
    v.sort_by(f64::total_cmp);
    let m = v.len() / 2;
    if v.len() % 2 == 1 {
        v[m]
    } else {
        (v[m - 1] + v[m]) / 2.0
    }
}

fn oracle_formulas() -> Outcome {
    let star = gen_star(3).unwrap();
    let star_vals: Vec<f64> = (1..=3)
        .map(|k| {
            let c = Constraints::new(k, 1, 3.0 / 31.0, 1.0).unwrap();
            brute_force_opt(&star, &c, Objective::KMedian)
                .unwrap()
                .value
        })
        .collect();
    let groups = gen_groups(3, 2, false).unwrap();
    let group_vals: Vec<f64> = (1..=3)
        .map(|k| {
            let c = Constraints::new(k, 1, 2.0 / 9.0, 1.0).unwrap();
            brute_force_opt(&groups, &c, Objective::KMedian)
                .unwrap()
                .value
        })
        .collect();
    let detail = format!(
        "star {star_vals:?} (expected [30, 32, 33]), groups {group_vals:?} (expected [6, 3, 0])"
    );
    ensure(group_vals == [6.0, 3.0, 0.0], detail.clone())?;
    ensure(star_vals == [30.0, 32.0, 33.0], detail.clone())?;
    Ok(detail)
}

fn bicriteria_guarantees() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    // p = 2 ≤ k·L forces k = 4 at L = 0.6.
    let cons = Constraints::new(4, 2, 0.1, 0.6).unwrap();
    let (mut worst_lp, mut worst_opt, mut worst_means) = (0.0f64, 0.0f64, 0.0f64);
    for t in 0..50 {
        let n = rng.gen_range(8..=20);
        let inst = random_instance(&mut rng, n);
        let cap = (2.0 * n as f64 * cons.cap_l).ceil() as u32;
        let opt = brute_force_opt(&inst, &cons, Objective::KMedian)
            .map_err(|e| format!("instance {t}: {e}"))?;
        for obj in [Objective::KMedian, Objective::KMeans] {
            let out =
                bicriteria_cluster(&inst, &cons, obj).map_err(|e| format!("instance {t}: {e}"))?;
            let d = &out.diagnostics;
            out.assignment
                .validate(n, 2, 2)
                .map_err(|e| format!("instance {t}: {e}"))?;
            ensure(
                out.assignment.counts().iter().all(|&c| c <= cap),
                format!("instance {t}: load above {cap}"),
            )?;
            ensure(
                evaluate(&inst, &out.assignment, obj).unwrap() == d.value,
                "reported value differs",
            )?;
            let lp_ratio = if d.c_lp > 0.0 {
                d.value / d.c_lp
            } else if d.value == 0.0 {
                0.0
            } else {
                f64::INFINITY
            };
            if obj == Objective::KMedian {
                let opt_ratio = if opt.value > 0.0 {
                    d.value / opt.value
                } else {
                    0.0
                };
                worst_lp = worst_lp.max(lp_ratio);
                worst_opt = worst_opt.max(opt_ratio);
                ensure(
                    d.value <= 11.0 * d.c_lp + 1e-9,
                    format!("instance {t}: k-median {lp_ratio}·C_LP"),
                )?;
                ensure(
                    d.value <= 11.0 * opt.value + 1e-9,
                    format!("instance {t}: k-median {opt_ratio}·OPT"),
                )?;
            } else {
                worst_means = worst_means.max(lp_ratio);
                ensure(
                    d.value <= 95.0 * d.c_lp + 1e-9,
                    format!("instance {t}: k-means {lp_ratio}·C_LP"),
                )?;
            }
        }
    }
    Ok(format!(
        "worst k-median {worst_lp:.3}·C_LP, {worst_opt:.3}·OPT; worst k-means {worst_means:.3}·C_LP"
    ))
}

fn lemma_suites() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let mut runs = 0;
    for t in 0..30 {
        let n = rng.gen_range(6..=16);
        let inst = random_instance(&mut rng, n);
        let cons = Constraints::new(4, 2, 0.1, 0.6).unwrap();
        for obj in [Objective::KMedian, Objective::KMeans, Objective::KCenter] {
            let out =
                bicriteria_cluster(&inst, &cons, obj).map_err(|e| format!("instance {t}: {e}"))?;
            let l = &out.diagnostics.lemmas;
            ensure(l.all(), format!("instance {t}, {obj:?}: {l:?}"))?;
            runs += 1;
        }
    }
    let n = 10;
    let inst = random_instance(&mut rng, n);
    let cons = Constraints::new(3, 2, 0.1, 0.9).unwrap();
    let lp = build_lp(&inst, &cons, Objective::KMedian, None).unwrap();
    let mut frac = solve_lp(&lp).unwrap();
    let loads = Loads::unweighted(&cons, n);
    let mut moves = 0;
    while moves < 1000 {
        let a = rng.gen_range(0..n);
        let b = rng.gen_range(0..n);
        if frac.y[a] <= 0.0 || a == b {
            continue;
        }
        let delta = rng.gen::<f64>() * frac.y[a].min((1.0 - frac.y[b]).max(0.0));
        frac.move_opening(a, b, delta).map_err(|e| e.to_string())?;
        frac.check(&loads, cons.k, Sense::Le, true, 1e-7)
            .map_err(|e| format!("move {moves}: {e:?}"))?;
        moves += 1;
    }
    Ok(format!(
        "lemmas held on {runs} runs; {moves} moves preserved the LP constraints"
    ))
}

fn kcenter_exact() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let (mut solved, mut worst) = (0, 0.0f64);
    let mut attempts = 0;
    while solved < 30 {
        attempts += 1;
        ensure(attempts < 1000, "too few solvable instances")?;
        let n = rng.gen_range(4..=12);
        let inst = random_instance(&mut rng, n);
        let k = rng.gen_range(1..=3);
        let p = rng.gen_range(1..=2.min(k));
        let Ok(cons) = Constraints::new(
            k,
            p,
            [0.0, 0.1, 0.2][rng.gen_range(0..3)],
            [0.5, 0.7, 1.0][rng.gen_range(0..3)],
        ) else {
            continue;
        };
        let out = match kcenter_cluster(&inst, &cons) {
            Ok(o) => o,
            Err(Error::NoSolution(_)) => continue,
            Err(e) => return Err(e.to_string()),
        };
        let opt = brute_force_opt(&inst, &cons, Objective::KCenter).map_err(|e| e.to_string())?;
        let (lo, hi) = cons.load_bounds(n);
        ensure(
            out.assignment
                .counts()
                .iter()
                .all(|&c| c as usize >= lo && c as usize <= hi),
            format!("capacity violation on instance {solved}"),
        )?;
        out.assignment
            .validate(n, p, 1)
            .map_err(|e| e.to_string())?;
        let radius = evaluate(&inst, &out.assignment, Objective::KCenter).unwrap();
        ensure(
            radius <= 6.0 * opt.value + 1e-9,
            format!("radius {radius} > 6·{}", opt.value),
        )?;
        if opt.value > 0.0 {
            worst = worst.max(radius / opt.value);
        }
        solved += 1;
    }
    Ok(format!("{solved} instances, worst radius {worst:.3}·OPT"))
}

struct Net {
    nodes: usize,
    edges: Vec<(usize, usize, i64, f64)>,
    supply: Vec<i64>,
}

impl Net {
    fn random(
        rng: &mut ChaCha8Rng,
        nodes: usize,
        edges: usize,
        max_cap: i64,
        backbone: bool,
    ) -> Self {
        let mut e = Vec::new();
        while e.len() < edges {
            let (u, v) = (rng.gen_range(0..nodes), rng.gen_range(0..nodes));
            if u != v {
                e.push((
                    u,
                    v,
                    rng.gen_range(1..=max_cap),
                    f64::from(rng.gen_range(-3i32..=6)),
                ));
            }
        }
        if backbone {
            for v in 1..nodes {
                e.push((v - 1, v, 100, 10.0));
                e.push((v, v - 1, 100, 10.0));
            }
        }
        let mut supply: Vec<i64> = (0..nodes).map(|_| rng.gen_range(-2..=2)).collect();
        let excess: i64 = supply.iter().sum();
        supply[nodes - 1] -= excess;
        Net {
            nodes,
            edges: e,
            supply,
        }
    }

    fn build(&self) -> FlowNetwork {
        let mut net = FlowNetwork::new(self.nodes);
        for &(u, v, c, w) in &self.edges {
            net.add_edge(u, v, c, w);
        }
        for (v, &b) in self.supply.iter().enumerate() {
            net.set_supply(v, b);
        }
        net
    }

    fn exhaustive(&self) -> Option<f64> {
        let mut f = vec![0i64; self.edges.len()];
        let mut best: Option<f64> = None;
        loop {
            let mut bal: Vec<i64> = self.supply.iter().map(|b| -b).collect();
            for (&(u, v, _, _), &x) in self.edges.iter().zip(&f) {
                bal[u] += x;
                bal[v] -= x;
            }
            if bal.iter().all(|&b| b == 0) {
                let c: f64 = self
                    .edges
                    .iter()
                    .zip(&f)
                    .map(|(e, &x)| e.3 * x as f64)
                    .sum();
                best = Some(best.map_or(c, |b: f64| b.min(c)));
            }
            let Some(i) = (0..f.len()).find(|&i| f[i] < self.edges[i].2) else {
                return best;
            };
            f[i] += 1;
            f[..i].iter_mut().for_each(|x| *x = 0);
        }
    }

    fn negative_residual_cycle(&self, flow: &[i64]) -> bool {
        let n = self.nodes;
        let mut d = vec![vec![f64::INFINITY; n]; n];
        for (&(u, v, cap, w), &x) in self.edges.iter().zip(flow) {
            if x < cap {
                d[u][v] = d[u][v].min(w);
            }
            if x > 0 {
                d[v][u] = d[v][u].min(-w);
            }
        }
        for m in 0..n {
            for i in 0..n {
                for j in 0..n {
                    d[i][j] = d[i][j].min(d[i][m] + d[m][j]);
                }
            }
        }
        (0..n).any(|i| d[i][i] < -1e-9)
    }
}

fn min_cost_flow() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let (mut matched, mut feasible) = (0, 0);
    for t in 0..100 {
        let small = t % 2 == 0;
        let net = if small {
            let nodes = rng.gen_range(2..=6);
            let edges = rng.gen_range(1..=12);
            Net::random(&mut rng, nodes, edges, 2, false)
        } else {
            let nodes = rng.gen_range(5..=40);
            let edges = rng.gen_range(10..=200 - 2 * (nodes - 1));
            Net::random(&mut rng, nodes, edges, 5, true)
        };
        let fnet = net.build();
        let result = solve_mcf(&fnet);
        if let Ok(r) = &result {
            feasible += 1;
            ensure(
                net.edges
                    .iter()
                    .zip(&r.flow)
                    .all(|(e, &x)| x >= 0 && x <= e.2),
                format!("network {t}: capacity broken"),
            )?;
            ensure(
                conservation_residuals(&fnet, &r.flow)
                    .iter()
                    .all(|&b| b == 0),
                format!("network {t}: conservation"),
            )?;
            ensure(
                !net.negative_residual_cycle(&r.flow),
                format!("network {t}: negative residual cycle"),
            )?;
        }
        if small {
            match (&result, net.exhaustive()) {
                (Ok(r), Some(best)) => ensure(
                    (r.cost - best).abs() < 1e-9,
                    format!("network {t}: {} vs {best}", r.cost),
                )?,
                (Err(Error::Infeasible(_)), None) => {}
                (r, b) => return Err(format!("network {t}: solver {r:?}, enumeration {b:?}")),
            }
            matched += 1;
        } else {
            ensure(
                result.is_ok(),
                format!("network {t}: backbone network infeasible"),
            )?;
        }
    }
    Ok(format!(
        "{feasible} feasible networks optimal; {matched} small networks match enumeration"
    ))
}

fn kmeanspp_blobs() -> Outcome {
    let cons = Constraints::new(2, 1, 0.25, 0.75).unwrap();
    let cfg = SeedingConfig::new(2);
    let noise = Normal::new(0.0, 0.1).unwrap();
    let mut pure = 0;
    for seed in 0..200u64 {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut data = Vec::new();
        let mut labels = Vec::new();
        for _ in 0..200 {
            let b = rng.gen_range(0..2usize);
            data.push(10.0 * b as f64 + noise.sample(&mut rng));
            data.push(noise.sample(&mut rng));
            labels.push(b);
        }
        let pts = PointSet::new(2, data).unwrap();
        let out =
            kmeanspp_balanced(&pts, &cons, &cfg, &mut rng, None).map_err(|e| e.to_string())?;
        ensure(out.report.feasible, format!("seed {seed}: bounds violated"))?;
        let ok = out.assignment.clusters().iter().all(|m| {
            let ones = m.iter().filter(|&&j| labels[j] == 1).count();
            ones.max(m.len() - ones) as f64 >= 0.95 * m.len() as f64
        });
        pure += usize::from(ok);
    }
    ensure(pure >= 190, format!("{pure} of 200 seeds pure"))?;
    Ok(format!("{pure} of 200 seeds pure; bounds held in all"))
}

fn weight_estimation() -> Outcome {
    let (n, eps, delta) = (50, 0.1, 0.05);
    let n_prime = second_sample_size(n, eps, delta);
    let draw = |m: usize, rng: &mut ChaCha8Rng| {
        let d = Normal::new(0.0, 1.0).unwrap();
        PointSet::new(2, (0..2 * m).map(|_| d.sample(rng)).collect()).unwrap()
    };
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let s = draw(n, &mut rng);
    let w = estimate_weights(&s, &draw(1_000_000, &mut rng))
        .unwrap()
        .w_hat;
    let mut exceed = 0;
    let mut worst = 0.0f64;
    for _ in 0..100 {
        let w_hat = estimate_weights(&s, &draw(n_prime, &mut rng))
            .unwrap()
            .w_hat;
        let diff: Vec<f64> = w.iter().zip(&w_hat).map(|(a, b)| a - b).collect();
        let max = (0..1000)
            .map(|_| diff.iter().filter(|_| rng.gen::<bool>()).sum::<f64>().abs())
            .fold(0.0, f64::max);
        worst = worst.max(max);
        exceed += usize::from(max > eps);
    }
    ensure(exceed <= 10, format!("{exceed} of 100 trials exceed {eps}"))?;
    Ok(format!(
        "n' = {n_prime}; {exceed} of 100 trials exceed {eps}; worst {worst:.4}"
    ))
}

fn dispatch_extension() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    let (k, fresh) = (8, 100_000);
    let cfg = GmmConfig {
        n: 500 + 10_000 + fresh,
        ..GmmConfig::default()
    };
    let inst = gen_gaussian_mixture(&cfg, &mut rng).unwrap();
    let pts = inst.points().unwrap();
    let s = pts.select(&(0..500).collect::<Vec<_>>());
    let s_prime = pts.select(&(500..10_500).collect::<Vec<_>>());
    let test = pts.select(&(10_500..pts.len()).collect::<Vec<_>>());
    let cons = Constraints::new(k, 1, 1.0 / (2.0 * k as f64), 2.0 / k as f64).unwrap();
    let fit = fit_dispatcher(
        &s,
        &s_prime,
        &cons,
        FitAlgo::Kmeanspp,
        Backend::Auto,
        &mut rng,
    )
    .map_err(|e| e.to_string())?;
    let masses = empirical_masses(&fit.dispatcher, &test);
    // The balancing heuristic may merge clusters; ids no subsample point carries are not clusters.
    let produced: Vec<usize> = fit
        .dispatcher
        .assignment()
        .counts()
        .iter()
        .map(|&c| c as usize)
        .collect();
    let clusters = produced.iter().filter(|&&c| c > 0).count();
    for (i, &m) in masses.iter().enumerate().filter(|&(i, _)| produced[i] > 0) {
        let sd3 = three_sigma(m, fresh);
        let (lo, hi) = (cons.ell - 0.05 - sd3, cons.cap_l + 0.05 + sd3);
        ensure(
            m >= lo && m <= hi,
            format!("cluster {i}: mass {m:.4} outside [{lo:.4}, {hi:.4}]"),
        )?;
    }
    let (lo, hi) = masses
        .iter()
        .zip(&produced)
        .filter(|&(_, &c)| c > 0)
        .fold((1.0f64, 0.0f64), |(a, b), (&m, _)| (a.min(m), b.max(m)));
    Ok(format!(
        "{clusters} clusters for k = {k}; masses in [{lo:.4}, {hi:.4}] against [{}, {}] ± 0.05 + 3σ",
        cons.ell, cons.cap_l
    ))
}

fn harness_ordering() -> Outcome {
    let seeds = 10;
    let mut acc = [Vec::new(), Vec::new(), Vec::new()];
    let specs = [
        DispatcherSpec::Kmeanspp,
        DispatcherSpec::Bpt,
        DispatcherSpec::Random,
    ];
    for seed in 0..seeds {
        for (slot, spec) in specs.iter().enumerate() {
            let cfg = ExperimentConfig {
                dataset: DatasetSpec::Grid {
                    n: 20_000,
                    dims: 100,
                },
                dispatcher: *spec,
                k: 16,
                seed,
                ..ExperimentConfig::default()
            };
            let r = run_experiment(&cfg).map_err(|e| e.to_string())?;
            // A tripped imbalance guard counts as a failed run.
            acc[slot].push(r.accuracy.unwrap_or(0.0));
        }
    }
    let [km, bpt, rnd] = acc.map(median);
    let detail = format!("median accuracy kmeanspp {km:.4}, bpt {bpt:.4}, random {rnd:.4}");
    ensure(km >= bpt + 0.05, detail.clone())?;
    ensure(km > rnd && bpt > rnd, detail.clone())?;
    Ok(detail)
}

fn strong_scaling() -> Outcome {
    let rows = scaling_run(&ExperimentConfig::default(), &[1, 4]).map_err(|e| e.to_string())?;
    let ratio = rows[1].total / rows[0].total;
    let detail = format!(
        "1 thread {:.2}s, 4 threads {:.2}s, ratio {ratio:.3} ({} CPUs available)",
        rows[0].total,
        rows[1].total,
        std::thread::available_parallelism().map_or(1, |n| n.get())
    );
    ensure(ratio <= 0.7, detail.clone())?;
    Ok(detail)
}

fn main() {
    // Keep panics from checks quiet; they are reported on the criterion line.
    std::panic::set_hook(Box::new(|_| {}));
    let criteria: [(&str, fn() -> Outcome); 10] = [
        ("oracle values on star and groups", oracle_formulas),
        (
            "bicriteria ratio, load and multiplicity bounds",
            bicriteria_guarantees,
        ),
        ("lemma suites and opening moves", lemma_suites),
        (
            "exact k-center feasibility and 6-approximation",
            kcenter_exact,
        ),
        ("min-cost flow optimality", min_cost_flow),
        ("k-means++ purity and balance", kmeanspp_blobs),
        ("uniform weight estimation", weight_estimation),
        (
            "dispatched masses within relaxed bounds",
            dispatch_extension,
        ),
        ("accuracy ordering on the grid", harness_ordering),
        ("strong scaling with 4 threads", strong_scaling),
    ];
    let filter: Vec<String> = std::env::args()
        .skip(1)
        .filter(|a| !a.starts_with('-'))
        .collect();
    let mut failed = 0;
    for (i, (name, check)) in criteria.iter().enumerate() {
        let id = i + 1;
        if !filter.is_empty() && !filter.iter().any(|f| f == &id.to_string()) {
            continue;
        }
        let start = Instant::now();
        let outcome = catch_unwind(AssertUnwindSafe(check)).unwrap_or_else(|e| {
            let msg = e
                .downcast_ref::<String>()
                .cloned()
                .or_else(|| e.downcast_ref::<&str>().map(|s| s.to_string()));
            Err(format!("panicked: {}", msg.unwrap_or_default()))
        });
        let secs = start.elapsed().as_secs_f64();
        match outcome {
            Ok(d) => println!("criterion {id:>2} PASS [{secs:.1}s] {name}: {d}"),
            Err(d) => {
                failed += 1;
                println!("criterion {id:>2} FAIL [{secs:.1}s] {name}: {d}");
            }
        }
    }
    if failed > 0 {
        println!("{failed} acceptance criteria failed");
        std::process::exit(1);
    }
}
