use std::fs::File;
use std::path::{Path, PathBuf};

use anyhow::{Context, Result};
use balclust::baselines::{bpt_dispatcher, lsh_dispatcher, random_dispatcher};
use balclust::dispatch::{fit_dispatcher, load_router, Backend, FitAlgo, Router};
use balclust::harness::{run_experiment, ExperimentConfig};
use balclust::instances::{
    brute_force_opt, gen_gaussian_mixture, gen_grid_rect, gen_groups, gen_star, gen_two_gaussians,
    GmmConfig,
};
use balclust::io::{read_instance_csv, read_points_csv, write_instance_csv};
use balclust::kcenter_exact::kcenter_cluster;
use balclust::kmeanspp::{kmeanspp_balanced, SeedingConfig};
use balclust::stability::{
    bbg_cluster, capacity_repair, clusters_to_assignment, kcenter_stable, medoid, one_center,
    tau_sweep,
};
use balclust::{
    bicriteria, check_capacities, evaluate, Assignment, Constraints, Error, Instance, Objective,
};
use rand::seq::index::sample;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

use crate::output::{echo_config, read_json, write_bytes, write_json};
use crate::{
    Algo, BackendArg, Cli, ClusterArgs, Command, ConstraintArgs, DispatchCommand, FitAlgoArg,
    FitArgs, Format, GenKind, ObjectiveArg, OracleArgs, RouteArgs, SimulateArgs, ValidateArgs,
};

pub fn run(cli: &Cli) -> Result<()> {
    let out = cli.out.as_deref();
    match &cli.command {
        Command::Gen(g) => gen(cli, &g.kind, out),
        Command::Cluster(a) => cluster(cli, a, out),
        Command::Oracle(a) => oracle(cli, a, out),
        Command::Dispatch(DispatchCommand::Fit(a)) => dispatch_fit(cli, a, out),
        Command::Dispatch(DispatchCommand::Route(a)) => dispatch_route(cli, a, out),
        Command::Simulate(a) => simulate(cli, a, out),
        Command::Validate(a) => validate(cli, a, out),
    }
}

fn rng(cli: &Cli) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(cli.seed)
}

fn load_instance(path: &Path) -> Result<Instance> {
    let f = File::open(path).with_context(|| format!("opening {}", path.display()))?;
    Ok(read_instance_csv(f)?)
}

fn gen(cli: &Cli, kind: &GenKind, out: Option<&Path>) -> Result<()> {
    let mut rng = rng(cli);
    let inst = match *kind {
        GenKind::Star { nl } => gen_star(nl)?,
        GenKind::Groups {
            k_prime,
            nl,
            perturb,
        } => gen_groups(k_prime, nl, perturb)?,
        GenKind::Gmm {
            components,
            dims,
            sigma,
            n,
            labels,
        } => gen_gaussian_mixture(
            &GmmConfig {
                components,
                dims,
                sigma,
                n,
                labels,
            },
            &mut rng,
        )?,
        GenKind::Grid { n, dims } => gen_grid_rect(n, dims, &mut rng)?,
        GenKind::Twogauss { n } => gen_two_gaussians(n, &mut rng)?,
    };
    let config = json!({"command": "gen", "seed": cli.seed, "generator": kind});
    match cli.format.unwrap_or(Format::Csv) {
        Format::Csv => {
            let mut buf = Vec::new();
            write_instance_csv(&mut buf, &inst)?;
            write_bytes(out, &buf)?;
            echo_config(out, &config)
        }
        Format::Json => {
            let body = match inst.points() {
                Some(p) => {
                    json!({"dim": p.dim(), "points": p.rows().collect::<Vec<_>>(), "labels": inst.labels()})
                }
                None => {
                    json!({"matrix": (0..inst.n()).map(|i| (0..inst.n()).map(|j| inst.dist(i, j)).collect::<Vec<_>>()).collect::<Vec<_>>()})
                }
            };
            write_json(out, &json!({"config": config, "instance": body}))
        }
    }
}

/// Constraint values gathered from flags over an optional config file.
#[derive(Debug, Clone, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
struct FileConfig {
    #[serde(skip_serializing_if = "Option::is_none")]
    algo: Option<Algo>,
    #[serde(skip_serializing_if = "Option::is_none")]
    objective: Option<ObjectiveArg>,
    #[serde(skip_serializing_if = "Option::is_none")]
    k: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    p: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    ell: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    cap_l: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    tau: Option<f64>,
}

fn merged(path: Option<&PathBuf>, c: &ConstraintArgs) -> Result<(FileConfig, Constraints)> {
    let mut f: FileConfig = match path {
        Some(p) => read_json(p)?,
        None => FileConfig::default(),
    };
    f.k = c.k.or(f.k);
    f.p = c.p.or(f.p);
    f.ell = c.ell.or(f.ell);
    f.cap_l = c.cap_l.or(f.cap_l);
    let k =
        f.k.ok_or_else(|| Error::InvalidInput("--k is required".into()))?;
    let cons = Constraints::new(
        k,
        f.p.unwrap_or(1),
        f.ell.unwrap_or(0.0),
        f.cap_l.unwrap_or(1.0),
    )?;
    f.p = Some(cons.p);
    f.ell = Some(cons.ell);
    f.cap_l = Some(cons.cap_l);
    Ok((f, cons))
}

fn assignment_csv(a: &Assignment) -> Vec<u8> {
    let mut s = String::from("point,centers\n");
    for (j, slots) in a.assign.iter().enumerate() {
        let ids: Vec<String> = slots
            .iter()
            .flat_map(|sl| std::iter::repeat_n(sl.c.to_string(), sl.m as usize))
            .collect();
        s.push_str(&format!("{j},{}\n", ids.join(";")));
    }
    s.into_bytes()
}

fn emit_assignment(
    cli: &Cli,
    out: Option<&Path>,
    config: &Value,
    body: Value,
    a: &Assignment,
) -> Result<()> {
    match cli.format.unwrap_or(Format::Json) {
        Format::Json => {
            let mut doc = json!({"config": config});
            if let (Value::Object(d), Value::Object(b)) = (&mut doc, body) {
                d.extend(b);
            }
            write_json(out, &doc)
        }
        Format::Csv => {
            write_bytes(out, &assignment_csv(a))?;
            echo_config(out, config)
        }
    }
}

fn cluster(cli: &Cli, args: &ClusterArgs, out: Option<&Path>) -> Result<()> {
    let (mut file, cons) = merged(args.config.as_ref(), &args.constraints)?;
    let algo = args.algo.or(file.algo).unwrap_or(Algo::LpRound);
    let default_obj = match algo {
        Algo::Kmeanspp => ObjectiveArg::KMeans,
        Algo::KcenterExact | Algo::KcenterStable => ObjectiveArg::KCenter,
        Algo::LpRound | Algo::Bbg => ObjectiveArg::KMedian,
    };
    let objective = args.objective.or(file.objective).unwrap_or(default_obj);
    file.algo = Some(algo);
    file.objective = Some(objective);
    file.tau = args.tau.or(file.tau);
    let obj: Objective = objective.into();
    let inst = load_instance(&args.input)?;
    let config =
        json!({"command": "cluster", "seed": cli.seed, "input": args.input, "settings": file});
    let p1 = |name: &str| -> Result<()> {
        if cons.p != 1 {
            return Err(Error::Unsupported(format!("{name} supports p = 1 only")).into());
        }
        Ok(())
    };
    let (assignment, extra): (Assignment, Value) = match algo {
        Algo::LpRound => {
            let o = bicriteria::bicriteria_cluster(&inst, &cons, obj)?;
            (o.assignment, json!({"diagnostics": o.diagnostics}))
        }
        Algo::Kmeanspp => {
            let points = inst.points().ok_or_else(|| {
                Error::InvalidInput("kmeanspp needs coordinates, not a distance matrix".into())
            })?;
            let o = kmeanspp_balanced(
                points,
                &cons,
                &SeedingConfig::new(cons.k),
                &mut rng(cli),
                None,
            )?;
            (o.assignment, json!({"seeds": o.seeds}))
        }
        Algo::KcenterExact => {
            let o = kcenter_cluster(&inst, &cons)?;
            (o.assignment, json!({"diagnostics": o.diagnostics}))
        }
        Algo::Bbg => {
            p1("bbg")?;
            match file.tau {
                Some(tau) => {
                    let tc = bbg_cluster(&inst, cons.k, tau)?;
                    let rep = capacity_repair(&inst, tc.clusters.clone(), cons.ell, cons.cap_l)?;
                    let a = clusters_to_assignment(&inst, &rep.clusters, medoid);
                    (
                        a,
                        json!({"tau": tau, "attached": tc.attached, "repair_moves": rep.moves}),
                    )
                }
                None => {
                    let s = tau_sweep(&inst, cons.k, cons.ell, cons.cap_l)?;
                    let a = clusters_to_assignment(&inst, &s.best.clusters, medoid);
                    (
                        a,
                        json!({"tau": s.best.tau, "repair_moves": s.moves, "probes": s.probes}),
                    )
                }
            }
        }
        Algo::KcenterStable => {
            p1("kcenter-stable")?;
            let s = kcenter_stable(&inst, cons.k, cons.ell, cons.cap_l)?;
            (
                clusters_to_assignment(&inst, &s.clusters, one_center),
                json!({"radius": s.radius}),
            )
        }
    };
    let value = evaluate(&inst, &assignment, obj)?;
    let report = check_capacities(&assignment, &cons, None);
    let mut body = json!({"value": value, "report": report, "assignment": assignment});
    if let (Value::Object(b), Value::Object(e)) = (&mut body, extra) {
        b.extend(e);
    }
    emit_assignment(cli, out, &config, body, &assignment)
}

fn oracle(cli: &Cli, args: &OracleArgs, out: Option<&Path>) -> Result<()> {
    let (mut file, cons) = merged(args.config.as_ref(), &args.constraints)?;
    let objective = args
        .objective
        .or(file.objective)
        .unwrap_or(ObjectiveArg::KMedian);
    file.objective = Some(objective);
    let inst = load_instance(&args.input)?;
    let sol = brute_force_opt(&inst, &cons, objective.into())?;
    let config =
        json!({"command": "oracle", "seed": cli.seed, "input": args.input, "settings": file});
    let body = json!({"value": sol.value, "assignment": sol.assignment});
    emit_assignment(cli, out, &config, body, &sol.assignment)
}

fn dispatch_fit(cli: &Cli, args: &FitArgs, out: Option<&Path>) -> Result<()> {
    let out = out.ok_or_else(|| {
        Error::InvalidInput("dispatch fit needs --out for the dispatcher file".into())
    })?;
    let (file, cons) = merged(None, &args.constraints)?;
    let (points, _) = read_points_csv(
        File::open(&args.input).with_context(|| format!("opening {}", args.input.display()))?,
    )?;
    let n = points.len();
    if args.sample_size == 0 || args.sample_size > n {
        return Err(Error::InvalidInput(format!("--sample-size must lie in 1..={n}")).into());
    }
    let mut rng = rng(cli);
    let perm = sample(&mut rng, n, n).into_vec();
    let (s_idx, rest) = perm.split_at(args.sample_size);
    let m = args.second_sample_size.unwrap_or(rest.len());
    if m > rest.len() {
        return Err(Error::InvalidInput(format!(
            "--second-sample-size {m} exceeds the {} points outside the subsample",
            rest.len()
        ))
        .into());
    }
    let s = points.select(s_idx);
    let backend = match args.backend {
        BackendArg::Auto => Backend::Auto,
        BackendArg::Exact => Backend::Exact,
        BackendArg::RpTree => Backend::RpTree {
            leaf_size: args.leaf_size,
        },
    };
    let mut summary = json!({});
    let router: Box<dyn Router> = match args.algo {
        FitAlgoArg::Kmeanspp | FitAlgoArg::LpRound => {
            if m == 0 {
                return Err(
                    Error::InvalidInput("no points left for the second sample".into()).into(),
                );
            }
            let s_prime = points.select(&rest[..m]);
            let algo = match args.algo {
                FitAlgoArg::Kmeanspp => FitAlgo::Kmeanspp,
                _ => FitAlgo::LpRound(args.objective.into()),
            };
            let fit = fit_dispatcher(&s, &s_prime, &cons, algo, backend, &mut rng)?;
            summary = json!({"fit_report": fit.report, "n_prime": fit.estimate.n_prime});
            Box::new(fit.dispatcher)
        }
        FitAlgoArg::Random => Box::new(random_dispatcher(cons.k, &mut rng)?),
        FitAlgoArg::Bpt => Box::new(bpt_dispatcher(&s, cons.k, &mut rng)?),
        FitAlgoArg::Lsh => Box::new(lsh_dispatcher(&s, cons.k, &mut rng)?),
    };
    write_bytes(Some(out), &router.encode().buf)?;
    let config = json!({
        "command": "dispatch fit",
        "seed": cli.seed,
        "input": args.input,
        "sample_size": args.sample_size,
        "second_sample_size": m,
        "algo": args.algo,
        "objective": args.objective,
        "backend": args.backend,
        "leaf_size": args.leaf_size,
        "constraints": file,
    });
    echo_config(Some(out), &config)?;
    if let Value::Object(s) = &mut summary {
        s.insert("config".into(), config);
        s.insert("k".into(), json!(router.k()));
    }
    write_json(args.summary.as_deref(), &summary)
}

fn dispatch_route(cli: &Cli, args: &RouteArgs, out: Option<&Path>) -> Result<()> {
    let bytes = std::fs::read(&args.dispatcher)
        .with_context(|| format!("reading {}", args.dispatcher.display()))?;
    let router = load_router(&bytes)?;
    let (points, _) = read_points_csv(
        File::open(&args.input).with_context(|| format!("opening {}", args.input.display()))?,
    )?;
    let routes = router.route_all(&points);
    let config = json!({"command": "dispatch route", "seed": cli.seed, "dispatcher": args.dispatcher, "input": args.input});
    match cli.format.unwrap_or(Format::Csv) {
        Format::Csv => {
            let mut s = String::from("point,clusters\n");
            for (j, ids) in routes.iter().enumerate() {
                let ids: Vec<String> = ids.iter().map(usize::to_string).collect();
                s.push_str(&format!("{j},{}\n", ids.join(";")));
            }
            write_bytes(out, s.as_bytes())?;
            echo_config(out, &config)
        }
        Format::Json => write_json(out, &json!({"config": config, "routes": routes})),
    }
}

fn simulate(cli: &Cli, args: &SimulateArgs, out: Option<&Path>) -> Result<()> {
    let mut cfg: ExperimentConfig = match &args.config {
        Some(p) => read_json(p)?,
        None => ExperimentConfig::default(),
    };
    if cli.seed != 0 {
        cfg.seed = cli.seed;
    }
    if let Some(t) = cli.threads {
        cfg.workers = cfg.workers.min(t.max(1));
    }
    let result = run_experiment(&cfg)?;
    if let Some(plot) = &args.emit_plot_data {
        let ks = if args.ks.is_empty() {
            vec![cfg.k]
        } else {
            args.ks.clone()
        };
        let mut s = String::from("k,accuracy,unguarded_accuracy,guard_tripped,entropy\n");
        for k in ks {
            let r = if k == cfg.k {
                result.clone()
            } else {
                run_experiment(&ExperimentConfig { k, ..cfg.clone() })?
            };
            let acc = r.accuracy.map_or(String::new(), |a| a.to_string());
            s.push_str(&format!(
                "{k},{acc},{},{},{}\n",
                r.unguarded_accuracy, r.guard_tripped, r.entropy
            ));
        }
        write_bytes(Some(plot), s.as_bytes())?;
    }
    match cli.format.unwrap_or(Format::Json) {
        Format::Json => write_json(out, &result),
        Format::Csv => {
            let mut s = String::from("run,accuracy,entropy,guard_tripped,fit,dispatch_train,train,dispatch_test,predict\n");
            for (i, r) in result.runs.iter().enumerate() {
                let t = &r.timings;
                s.push_str(&format!(
                    "{i},{},{},{},{},{},{},{},{}\n",
                    r.accuracy,
                    r.entropy,
                    r.guard_tripped,
                    t.fit,
                    t.dispatch_train,
                    t.train,
                    t.dispatch_test,
                    t.predict
                ));
            }
            write_bytes(out, s.as_bytes())?;
            echo_config(out, &result.config)
        }
    }
}

fn validate(cli: &Cli, args: &ValidateArgs, out: Option<&Path>) -> Result<()> {
    let inst = load_instance(&args.input)?;
    let config =
        json!({"command": "validate", "seed": cli.seed, "input": args.input, "tol": args.tol});
    let outcome = inst.validate_metric(args.tol);
    let body = match &outcome {
        Ok(()) => json!({"config": config, "n": inst.n(), "metric": true}),
        Err(Error::MetricViolation {
            i,
            j,
            k,
            dik,
            bound,
        }) => {
            eprintln!("violating triple: i = {i}, j = {j}, k = {k}: d(i,k) = {dik} > d(i,j) + d(j,k) = {bound}");
            json!({"config": config, "n": inst.n(), "metric": false, "violation": {"i": i, "j": j, "k": k, "dik": dik, "bound": bound}})
        }
        Err(_) => Value::Null,
    };
    if !body.is_null() {
        match cli.format.unwrap_or(Format::Json) {
            Format::Json => write_json(out, &body)?,
            Format::Csv => {
                let v = &body["violation"];
                let row = if v.is_null() {
                    "metric,i,j,k\ntrue,,,\n".to_string()
                } else {
                    format!("metric,i,j,k\nfalse,{},{},{}\n", v["i"], v["j"], v["k"])
                };
                write_bytes(out, row.as_bytes())?;
                echo_config(out, &config)?;
            }
        }
    }
    outcome.map_err(Into::into)
}
