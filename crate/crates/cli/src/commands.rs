use std::fs;
use std::path::PathBuf;

use anyhow::{bail, Context};
use hmmclust::bounds::{bound_report, fastrate_diagnostic, BoundOptions, BoundReport};
use hmmclust::clusterers::{run_method, ClusterRun, Method};
use hmmclust::experiments::{compare_rules, example1, example2, ComparisonRow, Example};
use hmmclust::io::{
    density_csv, fmt_num, parse_trajectory_csv, to_json_string, trajectory_csv, ObservationFile,
};
use hmmclust::model::{sample_trajectory, GaussianSecondParam, Obs, ObservationSpace};
use hmmclust::oracle::{
    bayes_class_risk_exact, bayes_clust_risk_exact, coincidence_check_iid_j2, compare_decisions,
    divergence_witness_iid_j3, mrss_risk_min_exact, prop1_ratio_experiment, Limits, Witness,
};
use hmmclust::spectral::{full_estimate, SpectralConfig};
use hmmclust::{rng, Error, HmmParams, Likelihoods};
use serde_json::{json, Value};

use crate::config::{resolve, ExperimentConfig};

pub struct RunContext {
    pub cfg: ExperimentConfig,
    pub base: Option<PathBuf>,
    pub out: PathBuf,
}

impl RunContext {
    fn write(&self, name: &str, contents: &str) -> anyhow::Result<PathBuf> {
        fs::create_dir_all(&self.out)
            .with_context(|| format!("creating {}", self.out.display()))?;
        let p = self.out.join(name);
        fs::write(&p, contents).with_context(|| format!("writing {}", p.display()))?;
        Ok(p)
    }

    fn write_config(&self) -> anyhow::Result<()> {
        self.write("config.json", &to_json_string(&self.cfg)?)?;
        Ok(())
    }

    fn model(&self) -> anyhow::Result<(HmmParams, Option<usize>)> {
        self.cfg
            .model(self.base.as_deref())?
            .ok_or_else(|| anyhow::anyhow!("this command needs `model` or `preset` in the config"))
    }

    fn n(&self, fallback: Option<usize>) -> anyhow::Result<usize> {
        self.cfg
            .n
            .or(fallback)
            .ok_or_else(|| anyhow::anyhow!("this command needs `n` in the config"))
    }

    /// Observations from `data`, or a trajectory simulated from the model.
    fn observations(&self) -> anyhow::Result<(ObservationFile, Option<HmmParams>)> {
        let model = self.cfg.model(self.base.as_deref())?;
        match &self.cfg.data {
            Some(p) => {
                let p = resolve(self.base.as_deref(), p);
                let text =
                    fs::read_to_string(&p).with_context(|| format!("reading {}", p.display()))?;
                let space = model
                    .as_ref()
                    .map_or(ObservationSpace::Real, |m| m.0.space());
                Ok((parse_trajectory_csv(&text, space)?, model.map(|m| m.0)))
            }
            None => {
                let (params, default_n) = model.ok_or_else(|| {
                    anyhow::anyhow!("this command needs `data`, `model` or `preset` in the config")
                })?;
                let t = sample_trajectory(&params, self.n(default_n)?, self.cfg.seed)?;
                Ok((
                    ObservationFile {
                        y: t.y,
                        x: Some(t.x),
                    },
                    Some(params),
                ))
            }
        }
    }

    fn states(&self, model: Option<&HmmParams>) -> anyhow::Result<usize> {
        match (self.cfg.states, model) {
            (Some(j), _) => Ok(j),
            (None, Some(m)) => Ok(m.num_states()),
            (None, None) => bail!("set `states` when no model is given"),
        }
    }
}

pub fn simulate(ctx: &RunContext) -> anyhow::Result<Value> {
    let (params, default_n) = ctx.model()?;
    let n = ctx.n(default_n)?;
    let t = sample_trajectory(&params, n, ctx.cfg.seed)?;
    let path = ctx.write("trajectory.csv", &trajectory_csv(&t))?;
    ctx.write_config()?;
    Ok(json!({ "n": n, "seed": ctx.cfg.seed, "trajectory": path }))
}

pub fn estimate(ctx: &RunContext) -> anyhow::Result<Value> {
    let (obs, model) = ctx.observations()?;
    let j = ctx.states(model.as_ref())?;
    let cfg = SpectralConfig {
        seed: ctx.cfg.seed,
        ..ctx.cfg.spectral.clone()
    };
    let est = full_estimate(&obs.y, j, &cfg)?;
    let json_path = ctx.write("estimate.json", &to_json_string(&est)?)?;
    let csv_path = ctx.write("densities.csv", &density_csv(&est))?;
    ctx.write_config()?;
    Ok(
        json!({ "estimate": json_path, "densities": csv_path, "nu_hat": est.nu_hat, "q_hat": est.q_hat }),
    )
}

pub fn cluster(ctx: &RunContext) -> anyhow::Result<Value> {
    let (obs, model) = ctx.observations()?;
    let j = ctx.states(model.as_ref())?;
    let settings = ctx.cfg.settings();
    let mut runs: Vec<ClusterRun> = Vec::new();
    for (k, &m) in ctx.cfg.methods.iter().enumerate() {
        let seed = rng::child_seed(ctx.cfg.seed, k as u64);
        let run = match (m, &model) {
            (Method::OracleBayes, None) => bail!("oracle-bayes needs the true model"),
            (_, Some(p)) => run_method(p, m, &obs.y, obs.x.as_deref(), &settings, seed)?,
            (Method::Plugin, None) => {
                let cfg = hmmclust::spectral::SpectralConfig {
                    seed,
                    ..settings.spectral.clone()
                };
                hmmclust::clusterers::plugin_cluster(&obs.y, j, &cfg, obs.x.as_deref())?.0
            }
            (Method::Kmeans, None) => {
                let y = obs
                    .y
                    .as_reals()
                    .ok_or_else(|| anyhow::anyhow!("k-means needs real observations"))?;
                hmmclust::clusterers::kmeans_cluster(
                    y,
                    j,
                    settings.kmeans_restarts,
                    seed,
                    obs.x.as_deref(),
                )?
            }
        };
        runs.push(run);
    }
    // wall time is not part of the reproducible output
    let primary: Vec<Value> = runs
        .iter()
        .map(|r| {
            json!({
                "method": r.method,
                "labels": r.labels.iter().map(|l| l + 1).collect::<Vec<_>>(),
                "partition": r.partition,
                "aligned_error": r.aligned_error,
                "unaligned_error": r.unaligned_error,
                "seed": r.seed,
            })
        })
        .collect();
    let path = ctx.write("cluster.json", &to_json_string(&primary)?)?;
    ctx.write_config()?;
    let summary: Vec<Value> = runs
        .iter()
        .map(|r| json!({ "method": r.method, "aligned_error": r.aligned_error, "wall_time_secs": r.wall_time_secs }))
        .collect();
    Ok(json!({ "output": path, "runs": summary }))
}

fn obs_json(y: &[Obs]) -> Value {
    y.iter()
        .map(|o| match *o {
            Obs::Symbol(s) => json!(s + 1),
            Obs::Real(v) => json!(v),
        })
        .collect()
}

fn witness_json(w: &Witness) -> Value {
    json!({
        "y": obs_json(&w.y),
        "clusterer": w.clusterer.to_one_based(),
        "clusterer_risk": w.clusterer_risk,
        "classifier": w.classifier.to_one_based(),
        "classifier_risk": w.classifier_risk,
    })
}

fn or_limit(r: hmmclust::Result<f64>) -> hmmclust::Result<Value> {
    match r {
        Ok(v) => Ok(json!(v)),
        Err(e @ Error::LimitExceeded { .. }) => Ok(json!({ "skipped": e.to_string() })),
        Err(e) => Err(e),
    }
}

/// Every finite sequence of length `n` (while within limits), else
/// `trials` sampled sequences; returns the number checked and the first
/// divergence.
fn search_witness(
    params: &HmmParams,
    n: usize,
    trials: usize,
    seed: u64,
    limits: &Limits,
) -> hmmclust::Result<(usize, Option<Witness>)> {
    let j = params.num_states();
    let sequences: Vec<Vec<Obs>> = match params.space() {
        ObservationSpace::Finite { size }
            if (size as u128).saturating_pow(n as u32) <= limits.max_observation_paths =>
        {
            (0..(size as u128).pow(n as u32) as usize)
                .map(|c| {
                    (0..n)
                        .map(|i| Obs::Symbol(c / size.pow(i as u32) % size))
                        .collect()
                })
                .collect()
        }
        _ => (0..trials)
            .map(|t| {
                let tr = sample_trajectory(params, n, rng::child_seed(seed, t as u64))?;
                Ok((0..n).map(|i| tr.y.get(i)).collect())
            })
            .collect::<hmmclust::Result<_>>()?,
    };
    for (k, y) in sequences.iter().enumerate() {
        let values = y.iter().flat_map(|&o| params.densities_at(o)).collect();
        let lik = Likelihoods::new(n, j, values);
        match compare_decisions(&params.nu, &params.transition, &lik, y.clone(), limits) {
            Ok(Some(w)) => return Ok((k + 1, Some(w))),
            Ok(None) | Err(Error::ImpossibleObservation { .. }) => {}
            Err(e) => return Err(e),
        }
    }
    Ok((sequences.len(), None))
}

pub fn exact(ctx: &RunContext) -> anyhow::Result<Value> {
    let (params, _) = ctx.model()?;
    let n = ctx.n(None)?;
    let limits: Limits = ctx.cfg.limits.into();
    let j = params.num_states();
    let mut report = json!({
        "n": n,
        "states": j,
        "iid": params.is_iid(),
        "bayes_class_risk": or_limit(bayes_class_risk_exact(&params, n, &limits))?,
        "bayes_clust_risk": or_limit(bayes_clust_risk_exact(&params, n, &limits))?,
        "mrss_risk": or_limit(mrss_risk_min_exact(&params, n, &limits))?,
    });
    let search = if params.is_iid() && j == 2 {
        coincidence_check_iid_j2(&params, n, ctx.cfg.trials, ctx.cfg.seed, &limits).map(|c| {
            (
                "coincidence",
                json!({
                    "trials": c.trials,
                    "checked": c.checked,
                    "skipped_ties": c.skipped_ties,
                    "violations": c.violations.len(),
                    "witnesses": c.violations.iter().map(witness_json).collect::<Vec<_>>(),
                }),
            )
        })
    } else {
        search_witness(&params, n, ctx.cfg.trials, ctx.cfg.seed, &limits).map(|(checked, w)| {
            (
                "divergence_search",
                json!({ "checked": checked, "witness": w.as_ref().map(witness_json) }),
            )
        })
    };
    match search {
        Ok((key, v)) => report[key] = v,
        Err(e @ Error::LimitExceeded { .. }) => {
            report["decision_search"] = json!({ "skipped": e.to_string() })
        }
        Err(e) => return Err(e.into()),
    }
    if params.is_iid() && j >= 3 {
        let d = divergence_witness_iid_j3(&params, &limits)?;
        report["divergence_condition"] = json!({
            "holds": d.condition_holds,
            "points": d.condition_points,
            "witness": d.witness.as_ref().map(witness_json),
        });
    }
    let path = ctx.write("exact.json", &to_json_string(&report)?)?;
    ctx.write_config()?;
    Ok(json!({ "output": path, "report": report }))
}

fn bound_json(r: &BoundReport) -> Value {
    let mut m = serde_json::Map::new();
    for e in &r.entries {
        m.insert(e.name.to_string(), json!(e.value));
        m.insert(format!("{}_formula", e.name), json!(e.formula));
    }
    for (name, flag) in &r.flags {
        m.insert(name.to_string(), json!(flag));
    }
    Value::Object(m)
}

/// The model with each row of `Q` moved a fraction `t` towards uniform.
fn perturbed(params: &HmmParams, t: f64) -> anyhow::Result<HmmParams> {
    let j = params.num_states() as f64;
    let q: Vec<Vec<f64>> = params
        .transition
        .iter()
        .map(|row| row.iter().map(|&x| (1.0 - t) * x + t / j).collect())
        .collect();
    Ok(HmmParams::new(
        params.nu.clone(),
        q,
        params.emissions.clone(),
    )?)
}

pub fn bounds(ctx: &RunContext) -> anyhow::Result<Value> {
    let (params, default_n) = ctx.model()?;
    let n = ctx.n(default_n)?;
    let opts = BoundOptions {
        class_risk: ctx.cfg.class_risk,
        exponent_constant: ctx.cfg.exponent_constant,
    };
    let r = bound_report(&params, n, &opts)?;
    let mut out = bound_json(&r);
    out["n"] = json!(n);
    if !params.is_iid() && ctx.cfg.perturbation > 0.0 {
        let est = perturbed(&params, ctx.cfg.perturbation)?;
        let trajs = (0..ctx.cfg.replicates)
            .map(|k| sample_trajectory(&params, n, rng::child_seed(ctx.cfg.seed, k as u64)))
            .collect::<hmmclust::Result<Vec<_>>>()?;
        let f = fastrate_diagnostic(&params, &est, &trajs, ctx.cfg.gamma)?;
        out["fastrate"] = json!({
            "gamma": ctx.cfg.gamma,
            "perturbation": ctx.cfg.perturbation,
            "lhs": f.lhs,
            "lhs_se": f.lhs_se,
            "rhs": f.rhs,
            "bayes_risk": f.bayes_risk,
            "tv_term": f.tv_term,
            "holds": f.holds,
        });
    }
    let path = ctx.write("bounds.json", &to_json_string(&out)?)?;
    ctx.write_config()?;
    Ok(json!({ "output": path, "Lambda": r.get("Lambda") }))
}

fn comparison_csv(rows: &[ComparisonRow]) -> String {
    let mut s = String::from("example,oracle_bayes,plugin,kmeans,lambda\n");
    for r in rows {
        s.push_str(&format!(
            "{},{},{},{},{}\n",
            r.example,
            fmt_num(r.oracle.mean),
            fmt_num(r.plugin.mean),
            fmt_num(r.kmeans.mean),
            fmt_num(r.lambda)
        ));
    }
    s
}

fn runs_csv(row: &ComparisonRow) -> String {
    let mut s = String::from("run,seed,oracle_bayes,plugin,kmeans\n");
    for (k, r) in row.runs.iter().enumerate() {
        s.push_str(&format!(
            "{},{},{},{},{}\n",
            k + 1,
            r.seed,
            fmt_num(r.oracle),
            fmt_num(r.plugin),
            fmt_num(r.kmeans)
        ));
    }
    s
}

/// Truth against estimated densities on the estimate's grid, and the
/// labels of the three rules, for the first simulated trajectory.
fn example_figures(ctx: &RunContext, ex: &Example) -> anyhow::Result<()> {
    let settings = ctx.cfg.settings();
    let t = sample_trajectory(&ex.params, ex.n, rng::child_seed(ctx.cfg.seed, 0))?;
    let cfg = SpectralConfig {
        seed: rng::child_seed(ctx.cfg.seed, 1),
        ..settings.spectral.clone()
    };
    let est = full_estimate(&t.y, ex.params.num_states(), &cfg)?;
    let j = ex.params.num_states();
    let mut dens = String::from("x");
    for k in 1..=j {
        dens.push_str(&format!(",f{k}"));
    }
    for k in 1..=j {
        dens.push_str(&format!(",f{k}_hat"));
    }
    dens.push('\n');
    for (g, &x) in est.grid.iter().enumerate() {
        dens.push_str(&fmt_num(x));
        for e in &ex.params.emissions {
            dens.push(',');
            dens.push_str(&fmt_num(e.density(Obs::Real(x))));
        }
        for f in &est.f_hat {
            dens.push(',');
            dens.push_str(&fmt_num(f[g]));
        }
        dens.push('\n');
    }
    ctx.write(&format!("{}_densities.csv", ex.name), &dens)?;

    let labels = |m: Method| {
        run_method(
            &ex.params,
            m,
            &t.y,
            Some(&t.x),
            &settings,
            rng::child_seed(ctx.cfg.seed, 1),
        )
    };
    let (o, p, k) = (
        labels(Method::OracleBayes)?,
        labels(Method::Plugin)?,
        labels(Method::Kmeans)?,
    );
    let y = t.y.as_reals().expect("real presets");
    let mut s = String::from("i,y,x,oracle_bayes,plugin,kmeans\n");
    for i in 0..t.len() {
        s.push_str(&format!(
            "{},{},{},{},{},{}\n",
            i + 1,
            fmt_num(y[i]),
            t.x[i] + 1,
            o.labels[i] + 1,
            p.labels[i] + 1,
            k.labels[i] + 1
        ));
    }
    ctx.write(&format!("{}_clustering.csv", ex.name), &s)?;
    Ok(())
}

pub fn reproduce(ctx: &RunContext, target: &str) -> anyhow::Result<Value> {
    let second = ctx.cfg.second_param(GaussianSecondParam::Variance);
    let settings = ctx.cfg.settings();
    let runs = ctx.cfg.replicates;
    let mut examples = Vec::new();
    match target {
        "table1" => examples.extend([example1(second), example2(second)]),
        "example1" => examples.push(example1(second)),
        "example2" => examples.push(example2(second)),
        "prop1" => return reproduce_prop1(ctx),
        other => bail!("unknown target {other:?} (table1|example1|example2|prop1)"),
    }
    let mut rows = Vec::new();
    for ex in &examples {
        let ex = Example {
            n: ctx.cfg.n.unwrap_or(ex.n),
            ..ex.clone()
        };
        let row = compare_rules(&ex, second, runs, ctx.cfg.seed, &settings)?;
        ctx.write(&format!("{}_runs.csv", ex.name), &runs_csv(&row))?;
        if target != "table1" {
            example_figures(ctx, &ex)?;
        }
        rows.push(row);
    }
    let path = ctx.write(&format!("{target}.csv"), &comparison_csv(&rows))?;
    let summary = json!({
        "target": target,
        "gaussian_second_param": second,
        "runs": runs,
        "rows": rows.iter().map(|r| json!({
            "example": r.example,
            "n": r.n,
            "lambda": r.lambda,
            "oracle_bayes": r.oracle,
            "plugin": r.plugin,
            "kmeans": r.kmeans,
        })).collect::<Vec<_>>(),
    });
    ctx.write("summary.json", &to_json_string(&summary)?)?;
    ctx.write_config()?;
    Ok(json!({ "output": path, "summary": summary }))
}

fn reproduce_prop1(ctx: &RunContext) -> anyhow::Result<Value> {
    let n = ctx.cfg.n.unwrap_or(10);
    let limits: Limits = ctx.cfg.limits.into();
    let rows = prop1_ratio_experiment(&ctx.cfg.etas, n, ctx.cfg.trials, ctx.cfg.seed, &limits)?;
    let mut s = String::from("eta,eps,clust_risk,class_risk,ratio,class_reference,exact\n");
    for r in &rows {
        s.push_str(&format!(
            "{},{},{},{},{},{},{}\n",
            fmt_num(r.eta),
            fmt_num(r.eps),
            fmt_num(r.clust_risk),
            fmt_num(r.class_risk),
            r.ratio.map_or(String::new(), fmt_num),
            fmt_num(r.eta * (1.0 - 4.0 * r.eps)),
            r.exact
        ));
    }
    let path = ctx.write("prop1.csv", &s)?;
    ctx.write_config()?;
    let ratios: Vec<Option<f64>> = rows.iter().map(|r| r.ratio).collect();
    Ok(json!({ "output": path, "n": n, "ratios": ratios }))
}
