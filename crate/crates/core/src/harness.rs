//! Simulated distributed learning: dispatch data to workers, train a linear
//! one-vs-all model per worker, and score held-out points with the model of
//! the worker they are routed to.

use std::collections::BTreeMap;
use std::time::Instant;

use rand::seq::index::sample;
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::baselines::{bpt_dispatcher, lsh_dispatcher, random_dispatcher};
use crate::dispatch::{fit_dispatcher, Backend, Dispatcher, FitAlgo, Router};
use crate::error::{Error, Result};
use crate::eval::class_entropy;
use crate::instances::{
    brute_force_opt, gen_gaussian_mixture, gen_grid_rect, gen_two_gaussians, GmmConfig,
};
use crate::model::{Assignment, Center, Constraints, Instance, Objective, PointSet, Slot};

/// Share of the data above which the largest `⌈k/2⌉` clusters trip the guard.
pub const GUARD_MASS: f64 = 0.98;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum DatasetSpec {
    Grid { n: usize, dims: usize },
    Gmm(GmmConfig),
    TwoGaussians { n: usize },
}

impl DatasetSpec {
    /// Labeled points.
    pub fn generate(&self, rng: &mut impl Rng) -> Result<(PointSet, Vec<i64>)> {
        let inst = match self {
            DatasetSpec::Grid { n, dims } => gen_grid_rect(*n, *dims, rng)?,
            DatasetSpec::Gmm(cfg) => gen_gaussian_mixture(cfg, rng)?,
            DatasetSpec::TwoGaussians { n } => gen_two_gaussians(*n, rng)?,
        };
        split_instance(inst)
    }
}

fn split_instance(inst: Instance) -> Result<(PointSet, Vec<i64>)> {
    let labels = inst
        .labels()
        .ok_or_else(|| Error::invalid("dataset has no labels"))?
        .to_vec();
    let points = inst
        .points()
        .ok_or_else(|| Error::invalid("dataset has no coordinates"))?
        .clone();
    Ok((points, labels))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum DispatcherSpec {
    Random,
    Bpt,
    Lsh,
    Kmeanspp,
    LpRound,
    /// Exact balanced k-means on the subsample, extended by nearest neighbor.
    Oracle,
}

impl std::str::FromStr for DispatcherSpec {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        serde_json::from_value(serde_json::Value::String(s.to_owned()))
            .map_err(|_| Error::invalid(format!("unknown dispatcher {s:?}")))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainParams {
    /// Fixed regularization; `None` selects from `lambda_grid` by cross-validation.
    pub lambda: Option<f64>,
    pub lambda_grid: Vec<f64>,
    pub folds: usize,
    pub epochs: usize,
    /// Initial gradient step before backtracking.
    pub step: f64,
}

impl Default for TrainParams {
    fn default() -> Self {
        Self {
            lambda: None,
            lambda_grid: vec![1e-3, 1e-1, 10.0],
            folds: 3,
            epochs: 100,
            step: 1.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ExperimentConfig {
    pub dataset: DatasetSpec,
    pub dispatcher: DispatcherSpec,
    pub k: usize,
    pub p: usize,
    /// Defaults to `1/(2k)`.
    pub ell: Option<f64>,
    /// Defaults to `min(1, 2/k)`.
    pub cap_l: Option<f64>,
    /// Points clustered to build a nearest-neighbor dispatcher.
    pub subsample: usize,
    /// Second-sample size for weight estimation; `None` uses the whole training set.
    pub second_sample: Option<usize>,
    pub test_fraction: f64,
    pub workers: usize,
    pub train: TrainParams,
    pub repeats: usize,
    pub seed: u64,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            dataset: DatasetSpec::Grid {
                n: 10_000,
                dims: 100,
            },
            dispatcher: DispatcherSpec::Kmeanspp,
            k: 16,
            p: 1,
            ell: None,
            cap_l: None,
            subsample: 1000,
            second_sample: None,
            test_fraction: 0.2,
            workers: 1,
            train: TrainParams::default(),
            repeats: 1,
            seed: 0,
        }
    }
}

impl ExperimentConfig {
    pub fn constraints(&self) -> Result<Constraints> {
        let k = self.k as f64;
        let ell = self.ell.unwrap_or(1.0 / (2.0 * k));
        let cap_l = self.cap_l.unwrap_or((2.0 / k).min(1.0));
        Constraints::new(self.k, self.p, ell, cap_l)
    }

    pub fn validate(&self) -> Result<()> {
        if self.workers == 0 {
            return Err(Error::invalid("worker count must be at least 1"));
        }
        if self.repeats == 0 {
            return Err(Error::invalid("repeats must be at least 1"));
        }
        if !(self.test_fraction > 0.0 && self.test_fraction < 1.0) {
            return Err(Error::invalid("test_fraction must lie in (0, 1)"));
        }
        if self.subsample == 0 || self.train.folds < 2 || self.train.lambda_grid.is_empty() {
            return Err(Error::invalid(
                "need subsample >= 1, folds >= 2 and a nonempty lambda grid",
            ));
        }
        self.constraints().map(|_| ())
    }
}

/// Wall-clock seconds per phase.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct PhaseTimes {
    pub fit: f64,
    pub dispatch_train: f64,
    pub train: f64,
    pub dispatch_test: f64,
    pub predict: f64,
}

impl PhaseTimes {
    pub fn total(&self) -> f64 {
        self.fit + self.dispatch_train + self.train + self.dispatch_test + self.predict
    }

    fn add(&mut self, o: &PhaseTimes) {
        self.fit += o.fit;
        self.dispatch_train += o.dispatch_train;
        self.train += o.train;
        self.dispatch_test += o.dispatch_test;
        self.predict += o.predict;
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunResult {
    /// Test accuracy, computed even when the guard trips.
    pub accuracy: f64,
    /// Training points per worker, counting replicas.
    pub sizes: Vec<usize>,
    pub entropy: f64,
    pub guard_tripped: bool,
    pub timings: PhaseTimes,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentResult {
    pub config: ExperimentConfig,
    /// Mean test accuracy; omitted when any run trips the imbalance guard.
    pub accuracy: Option<f64>,
    /// Mean test accuracy regardless of the guard.
    pub unguarded_accuracy: f64,
    /// Worker sizes of the last run.
    pub sizes: Vec<usize>,
    pub entropy: f64,
    pub guard_tripped: bool,
    /// Phase times summed over runs.
    pub timings: PhaseTimes,
    pub runs: Vec<RunResult>,
}

/// True iff the largest `⌈k/2⌉` masses hold more than 98% of the total; always false for `k < 2`.
pub fn imbalance_guard(masses: &[f64], k: usize) -> bool {
    if k < 2 {
        return false;
    }
    let total: f64 = masses.iter().sum();
    if total <= 0.0 {
        return false;
    }
    let mut sorted = masses.to_vec();
    sorted.sort_by(|a, b| b.total_cmp(a));
    let top: f64 = sorted.iter().take(k.div_ceil(2)).sum();
    top / total > GUARD_MASS
}

/// One-vs-all linear classifier; a single class gives a constant predictor.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LinearModel {
    pub classes: Vec<i64>,
    /// Per class: `dim` weights followed by the bias. Empty for constant models.
    pub weights: Vec<Vec<f64>>,
    pub lambda: f64,
}

impl LinearModel {
    pub fn constant(label: i64) -> Self {
        Self {
            classes: vec![label],
            weights: Vec::new(),
            lambda: 0.0,
        }
    }

    /// Highest-scoring class, ties to the smallest label.
    pub fn predict(&self, x: &[f64]) -> i64 {
        if self.weights.is_empty() {
            return self.classes[0];
        }
        let mut best = 0;
        let mut best_s = f64::NEG_INFINITY;
        for (c, w) in self.weights.iter().enumerate() {
            let s = score(w, x);
            if s > best_s {
                best_s = s;
                best = c;
            }
        }
        self.classes[best]
    }
}

fn score(w: &[f64], x: &[f64]) -> f64 {
    let d = x.len();
    w[..d].iter().zip(x).map(|(a, b)| a * b).sum::<f64>() + w[d]
}

/// `λ/2·|w|² + mean((1 − y·s)₊²)` from cached scores; the bias is not regularized.
fn objective(w: &[f64], scores: &[f64], y: &[f64], lambda: f64) -> f64 {
    let d = w.len() - 1;
    let reg = 0.5 * lambda * w[..d].iter().map(|v| v * v).sum::<f64>();
    let loss: f64 = scores
        .iter()
        .zip(y)
        .map(|(s, y)| (1.0 - y * s).max(0.0).powi(2))
        .sum();
    reg + loss / y.len() as f64
}

/// Full-batch gradient descent with Armijo backtracking on the squared-hinge
/// objective of one binary problem. The objective never increases.
fn train_binary(
    points: &PointSet,
    idx: &[usize],
    y: &[f64],
    lambda: f64,
    params: &TrainParams,
) -> Result<Vec<f64>> {
    let d = points.dim();
    let n = idx.len() as f64;
    let mut w = vec![0.0; d + 1];
    let mut scores = vec![0.0; idx.len()];
    let mut f = objective(&w, &scores, y, lambda);
    let mut step = params.step;
    let mut gx = vec![0.0; idx.len()];
    for _ in 0..params.epochs {
        let mut g = vec![0.0; d + 1];
        for (t, &j) in idx.iter().enumerate() {
            let slack = 1.0 - y[t] * scores[t];
            if slack > 0.0 {
                let c = -2.0 * slack * y[t] / n;
                for (gi, xi) in g.iter_mut().zip(points.row(j)) {
                    *gi += c * xi;
                }
                g[d] += c;
            }
        }
        for (gi, wi) in g[..d].iter_mut().zip(&w[..d]) {
            *gi += lambda * wi;
        }
        let gnorm2: f64 = g.iter().map(|v| v * v).sum();
        if gnorm2 < 1e-18 {
            break;
        }
        for (t, &j) in idx.iter().enumerate() {
            gx[t] = score(&g, points.row(j));
        }
        let mut accepted = false;
        for _ in 0..60 {
            let trial_w: Vec<f64> = w.iter().zip(&g).map(|(a, b)| a - step * b).collect();
            let trial_s: Vec<f64> = scores.iter().zip(&gx).map(|(s, q)| s - step * q).collect();
            let ft = objective(&trial_w, &trial_s, y, lambda);
            if ft <= f - 0.5 * step * gnorm2 {
                if ft > f {
                    return Err(Error::invariant("training objective increased"));
                }
                w = trial_w;
                scores = trial_s;
                f = ft;
                accepted = true;
                break;
            }
            step *= 0.5;
        }
        if !accepted {
            break;
        }
        step *= 2.0;
    }
    Ok(w)
}

fn fit_with_lambda(
    points: &PointSet,
    labels: &[i64],
    idx: &[usize],
    classes: &[i64],
    lambda: f64,
    params: &TrainParams,
) -> Result<LinearModel> {
    if classes.len() == 1 {
        return Ok(LinearModel {
            lambda,
            ..LinearModel::constant(classes[0])
        });
    }
    let weights = classes
        .iter()
        .map(|&c| {
            let y: Vec<f64> = idx
                .iter()
                .map(|&j| if labels[j] == c { 1.0 } else { -1.0 })
                .collect();
            train_binary(points, idx, &y, lambda, params)
        })
        .collect::<Result<_>>()?;
    Ok(LinearModel {
        classes: classes.to_vec(),
        weights,
        lambda,
    })
}

/// One-vs-all squared-hinge linear model on the rows `idx`.
///
/// Without a fixed λ, each grid value is scored by `folds`-fold cross-validated
/// accuracy and the best is refit on all rows (ties to the earlier grid value).
pub fn train_local(
    points: &PointSet,
    labels: &[i64],
    idx: &[usize],
    params: &TrainParams,
    seed: u64,
) -> Result<LinearModel> {
    if idx.is_empty() {
        return Err(Error::invalid("cannot train on an empty partition"));
    }
    let mut classes: Vec<i64> = idx.iter().map(|&j| labels[j]).collect();
    classes.sort_unstable();
    classes.dedup();
    let lambda = match params.lambda {
        Some(l) => l,
        None if classes.len() == 1 || idx.len() < params.folds => params.lambda_grid[0],
        None => {
            let mut order = idx.to_vec();
            order.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
            let folds: Vec<Vec<usize>> = (0..params.folds)
                .map(|f| {
                    order
                        .iter()
                        .skip(f)
                        .step_by(params.folds)
                        .copied()
                        .collect()
                })
                .collect();
            let mut best = (f64::NEG_INFINITY, params.lambda_grid[0]);
            for &lambda in &params.lambda_grid {
                let mut correct = 0usize;
                for f in 0..params.folds {
                    let train: Vec<usize> = (0..params.folds)
                        .filter(|&g| g != f)
                        .flat_map(|g| folds[g].iter().copied())
                        .collect();
                    let mut tc: Vec<i64> = train.iter().map(|&j| labels[j]).collect();
                    tc.sort_unstable();
                    tc.dedup();
                    let m = fit_with_lambda(points, labels, &train, &tc, lambda, params)?;
                    correct += folds[f]
                        .iter()
                        .filter(|&&j| m.predict(points.row(j)) == labels[j])
                        .count();
                }
                let acc = correct as f64 / idx.len() as f64;
                if acc > best.0 {
                    best = (acc, lambda);
                }
            }
            best.1
        }
    };
    fit_with_lambda(points, labels, idx, &classes, lambda, params)
}

fn majority(labels: &[i64]) -> i64 {
    let mut counts: BTreeMap<i64, usize> = BTreeMap::new();
    for &l in labels {
        *counts.entry(l).or_default() += 1;
    }
    counts
        .into_iter()
        .max_by_key(|&(l, c)| (c, std::cmp::Reverse(l)))
        .map_or(0, |(l, _)| l)
}

/// Fits the configured dispatcher on a subsample of the training points.
pub fn build_router(
    config: &ExperimentConfig,
    train: &PointSet,
    rng: &mut ChaCha8Rng,
) -> Result<Box<dyn Router>> {
    let cons = config.constraints()?;
    let s_idx = sample(rng, train.len(), config.subsample.min(train.len())).into_vec();
    let s = train.select(&s_idx);
    let second = |rng: &mut ChaCha8Rng| match config.second_sample {
        Some(m) => train.select(&sample(rng, train.len(), m.min(train.len())).into_vec()),
        None => train.clone(),
    };
    Ok(match config.dispatcher {
        DispatcherSpec::Random => Box::new(random_dispatcher(config.k, rng)?),
        DispatcherSpec::Bpt => Box::new(bpt_dispatcher(&s, config.k, rng)?),
        DispatcherSpec::Lsh => Box::new(lsh_dispatcher(&s, config.k, rng)?),
        DispatcherSpec::Kmeanspp | DispatcherSpec::LpRound => {
            let algo = if config.dispatcher == DispatcherSpec::Kmeanspp {
                FitAlgo::Kmeanspp
            } else {
                FitAlgo::LpRound(Objective::KMeans)
            };
            let s_prime = second(rng);
            Box::new(fit_dispatcher(&s, &s_prime, &cons, algo, Backend::Auto, rng)?.dispatcher)
        }
        DispatcherSpec::Oracle => {
            let inst = Instance::from_points(s.clone())?;
            let opt = brute_force_opt(&inst, &cons, Objective::KMeans)?;
            let groups = opt
                .assignment
                .assign
                .iter()
                .map(|slots| {
                    slots
                        .iter()
                        .flat_map(|sl| std::iter::repeat_n(sl.c, sl.m as usize))
                        .collect()
                })
                .collect();
            let w = vec![1.0 / s.len() as f64; s.len()];
            Box::new(Dispatcher::new(cons, s, groups, w, Backend::Auto, rng)?)
        }
    })
}

fn run_once(
    config: &ExperimentConfig,
    repeat: usize,
    pool: &rayon::ThreadPool,
) -> Result<RunResult> {
    let seed = config.seed.wrapping_add(repeat as u64);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let (points, labels) = config.dataset.generate(&mut rng)?;
    let n = points.len();
    let n_test =
        ((n as f64 * config.test_fraction).round() as usize).clamp(1, n.saturating_sub(1).max(1));
    let n_train = n - n_test;
    if n_train == 0 {
        return Err(Error::invalid("dataset too small to split"));
    }
    let train_idx: Vec<usize> = (0..n_train).collect();
    let test_idx: Vec<usize> = (n_train..n).collect();
    let train = points.select(&train_idx);
    let test = points.select(&test_idx);
    let y_train = &labels[..n_train];
    let y_test = &labels[n_train..];
    let mut t = PhaseTimes::default();

    pool.install(|| {
        let clock = Instant::now();
        let router = build_router(config, &train, &mut rng)?;
        t.fit = clock.elapsed().as_secs_f64();

        let clock = Instant::now();
        let routes = router.route_all(&train);
        let mut parts: Vec<Vec<usize>> = vec![Vec::new(); router.k()];
        for (j, ids) in routes.iter().enumerate() {
            for &c in ids {
                parts[c].push(j);
            }
        }
        t.dispatch_train = clock.elapsed().as_secs_f64();

        let clock = Instant::now();
        let fallback = majority(y_train);
        let models: Vec<LinearModel> = parts
            .par_iter()
            .enumerate()
            .map(|(c, idx)| {
                if idx.is_empty() {
                    Ok(LinearModel::constant(fallback))
                } else {
                    train_local(
                        &train,
                        y_train,
                        idx,
                        &config.train,
                        seed ^ (c as u64).wrapping_mul(0x9E37_79B9),
                    )
                }
            })
            .collect::<Result<_>>()?;
        t.train = clock.elapsed().as_secs_f64();

        let clock = Instant::now();
        let test_routes = router.route_all(&test);
        t.dispatch_test = clock.elapsed().as_secs_f64();

        let clock = Instant::now();
        let correct = test_routes
            .par_iter()
            .enumerate()
            .filter(|(j, ids)| {
                let x = test.row(*j);
                let votes: Vec<i64> = ids.iter().map(|&c| models[c].predict(x)).collect();
                let mut tally: BTreeMap<i64, usize> = BTreeMap::new();
                for &v in &votes {
                    *tally.entry(v).or_default() += 1;
                }
                let top = tally.values().copied().max().unwrap_or(0);
                // Ties go to the vote of the lowest worker id.
                let pred = votes
                    .iter()
                    .copied()
                    .find(|v| tally[v] == top)
                    .unwrap_or(fallback);
                pred == y_test[*j]
            })
            .count();
        t.predict = clock.elapsed().as_secs_f64();

        let sizes: Vec<usize> = parts.iter().map(Vec::len).collect();
        if sizes.iter().sum::<usize>() != n_train * config.p {
            return Err(Error::invariant(
                "dispatch lost or duplicated training points",
            ));
        }
        let masses: Vec<f64> = sizes.iter().map(|&s| s as f64).collect();
        let a = Assignment {
            centers: (0..router.k()).map(Center::Point).collect(),
            assign: routes
                .iter()
                .map(|ids| {
                    let mut slots: Vec<Slot> = Vec::new();
                    for &c in ids {
                        match slots.iter_mut().find(|s| s.c == c) {
                            Some(s) => s.m += 1,
                            None => slots.push(Slot { c, m: 1 }),
                        }
                    }
                    slots
                })
                .collect(),
        };
        Ok(RunResult {
            accuracy: correct as f64 / n_test as f64,
            entropy: class_entropy(&a, y_train)?,
            guard_tripped: imbalance_guard(&masses, config.k),
            sizes,
            timings: t,
        })
    })
}

/// Runs `config.repeats` seeded repetitions on a pool of `config.workers` threads.
pub fn run_experiment(config: &ExperimentConfig) -> Result<ExperimentResult> {
    config.validate()?;
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(config.workers)
        .build()
        .map_err(|e| Error::invariant(format!("thread pool: {e}")))?;
    let runs = (0..config.repeats)
        .map(|r| run_once(config, r, &pool))
        .collect::<Result<Vec<_>>>()?;
    let m = runs.len() as f64;
    let unguarded_accuracy = runs.iter().map(|r| r.accuracy).sum::<f64>() / m;
    let guard_tripped = runs.iter().any(|r| r.guard_tripped);
    let mut timings = PhaseTimes::default();
    for r in &runs {
        timings.add(&r.timings);
    }
    Ok(ExperimentResult {
        config: config.clone(),
        accuracy: (!guard_tripped).then_some(unguarded_accuracy),
        unguarded_accuracy,
        sizes: runs.last().map(|r| r.sizes.clone()).unwrap_or_default(),
        entropy: runs.iter().map(|r| r.entropy).sum::<f64>() / m,
        guard_tripped,
        timings,
        runs,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScalingRow {
    pub workers: usize,
    pub timings: PhaseTimes,
    pub total: f64,
    /// Total time at the smallest worker count divided by this row's.
    pub speedup: f64,
}

/// Repeats the same workload at each worker count.
pub fn scaling_run(config: &ExperimentConfig, worker_counts: &[usize]) -> Result<Vec<ScalingRow>> {
    if worker_counts.is_empty() {
        return Err(Error::invalid("no worker counts given"));
    }
    let mut counts = worker_counts.to_vec();
    counts.sort_unstable();
    counts.dedup();
    let mut rows = Vec::new();
    for &w in &counts {
        let cfg = ExperimentConfig {
            workers: w,
            ..config.clone()
        };
        let res = run_experiment(&cfg)?;
        rows.push(ScalingRow {
            workers: w,
            total: res.timings.total(),
            timings: res.timings,
            speedup: 1.0,
        });
    }
    let base = rows[0].total;
    for r in &mut rows {
        r.speedup = if r.total > 0.0 { base / r.total } else { 1.0 };
    }
    Ok(rows)
}
