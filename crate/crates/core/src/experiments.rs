//! Preset models and the simulation harness comparing the oracle Bayes
//! classifier, the spectral plug-in classifier and k-means.

use rayon::prelude::*;
use serde::Serialize;

use crate::bounds::lambda_separation;
use crate::clusterers::{run_method, Estimate, Method, MethodSettings};
use crate::error::Result;
use crate::model::{
    sample_trajectory, EmissionModel, GaussianComponent, GaussianSecondParam, HmmParams,
};
use crate::rng;

/// Transition matrix shared by both examples; its stationary law is
/// `(0.6, 0.4)`.
pub fn example_transition() -> Vec<Vec<f64>> {
    vec![vec![0.8, 0.2], vec![0.3, 0.7]]
}

fn half_half(a: (f64, f64), b: (f64, f64), second: GaussianSecondParam) -> EmissionModel {
    EmissionModel::GaussianMixture {
        components: vec![
            GaussianComponent::new(0.5, a.0, second.to_stddev(a.1)),
            GaussianComponent::new(0.5, b.0, second.to_stddev(b.1)),
        ],
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Example {
    pub name: &'static str,
    pub params: HmmParams,
    pub n: usize,
}

/// `F1 = ½N(1.7, .2) + ½N(7, .15)`, `F2 = ½N(3.5, .2) + ½N(5, .4)`,
/// `n = 5·10⁴`.
pub fn example1(second: GaussianSecondParam) -> Example {
    let emissions = vec![
        half_half((1.7, 0.2), (7.0, 0.15), second),
        half_half((3.5, 0.2), (5.0, 0.4), second),
    ];
    Example {
        name: "example1",
        params: HmmParams::stationary(example_transition(), emissions).expect("valid preset"),
        n: 50_000,
    }
}

/// `F1 = ½N(3, .6) + ½N(7, .4)`, `F2 = ½N(5, .3) + ½N(9, .4)`, `n = 10⁵`.
pub fn example2(second: GaussianSecondParam) -> Example {
    let emissions = vec![
        half_half((3.0, 0.6), (7.0, 0.4), second),
        half_half((5.0, 0.3), (9.0, 0.4), second),
    ];
    Example {
        name: "example2",
        params: HmmParams::stationary(example_transition(), emissions).expect("valid preset"),
        n: 100_000,
    }
}

/// Per-run aligned errors of the three rules.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct RunErrors {
    pub seed: u64,
    pub oracle: f64,
    pub plugin: f64,
    pub kmeans: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ComparisonRow {
    pub example: String,
    pub n: usize,
    pub gaussian_second_param: GaussianSecondParam,
    pub lambda: f64,
    pub oracle: Estimate,
    pub plugin: Estimate,
    pub kmeans: Estimate,
    pub runs: Vec<RunErrors>,
}

/// Simulates `runs` trajectories of the example and clusters each with the
/// three rules; errors are taken after the best relabelling.
pub fn compare_rules(
    example: &Example,
    second: GaussianSecondParam,
    runs: usize,
    seed: u64,
    settings: &MethodSettings,
) -> Result<ComparisonRow> {
    let lambda = lambda_separation(&example.params.emissions)?.value;
    let per_run: Vec<RunErrors> = (0..runs.max(1))
        .into_par_iter()
        .map(|r| {
            let run_seed = rng::child_seed(seed, r as u64);
            let t = sample_trajectory(&example.params, example.n, run_seed)?;
            let err = |m: Method| -> Result<f64> {
                let run = run_method(
                    &example.params,
                    m,
                    &t.y,
                    Some(&t.x),
                    settings,
                    rng::child_seed(run_seed, 1),
                )?;
                Ok(run.aligned_error.expect("truth supplied"))
            };
            Ok(RunErrors {
                seed: run_seed,
                oracle: err(Method::OracleBayes)?,
                plugin: err(Method::Plugin)?,
                kmeans: err(Method::Kmeans)?,
            })
        })
        .collect::<Result<_>>()?;
    let col = |f: fn(&RunErrors) -> f64| {
        Estimate::from_samples(&per_run.iter().map(f).collect::<Vec<_>>())
    };
    Ok(ComparisonRow {
        example: example.name.to_string(),
        n: example.n,
        gaussian_second_param: second,
        lambda,
        oracle: col(|r| r.oracle),
        plugin: col(|r| r.plugin),
        kmeans: col(|r| r.kmeans),
        runs: per_run,
    })
}
