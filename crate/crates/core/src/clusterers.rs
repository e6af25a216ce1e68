//! End-to-end clustering procedures and Monte Carlo risk estimates.

use std::time::Instant;

use rand::Rng as _;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::inference::smooth_likelihoods;
use crate::model::{sample_trajectory, HmmParams, Likelihoods, Observations};
use crate::partitions::{best_permutation_alignment, misclassification_loss, ratio, Partition};
use crate::rng;
use crate::spectral::{full_estimate, SpectralConfig, SpectralEstimate};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Method {
    OracleBayes,
    Plugin,
    Kmeans,
}

impl Method {
    pub const ALL: [Method; 3] = [Method::OracleBayes, Method::Plugin, Method::Kmeans];

    pub fn name(self) -> &'static str {
        match self {
            Self::OracleBayes => "oracle-bayes",
            Self::Plugin => "plugin",
            Self::Kmeans => "kmeans",
        }
    }
}

impl std::str::FromStr for Method {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Method::ALL
            .into_iter()
            .find(|m| m.name() == s)
            .ok_or_else(|| {
                Error::InvalidArgument(format!("unknown method {s:?} (oracle-bayes|plugin|kmeans)"))
            })
    }
}

/// Result of one clustering run.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ClusterRun {
    pub method: Method,
    pub labels: Vec<usize>,
    /// 1-based blocks.
    pub partition: Vec<Vec<usize>>,
    /// Error after the best relabelling, when the truth is known.
    pub aligned_error: Option<f64>,
    /// Plain 0-1 rate against the truth, without relabelling.
    pub unaligned_error: Option<f64>,
    pub wall_time_secs: f64,
    pub seed: u64,
}

impl ClusterRun {
    fn new(
        method: Method,
        labels: Vec<usize>,
        j: usize,
        truth: Option<&[usize]>,
        start: Instant,
        seed: u64,
    ) -> Result<Self> {
        let (aligned_error, unaligned_error) = match truth {
            Some(t) => {
                let (_, aligned) = best_permutation_alignment(&labels, t, j)?;
                let miss = labels.iter().zip(t).filter(|(a, b)| a != b).count();
                (Some(aligned), Some(ratio(miss, labels.len())))
            }
            None => (None, None),
        };
        Ok(Self {
            method,
            partition: Partition::from_labels(&labels).to_one_based(),
            labels,
            aligned_error,
            unaligned_error,
            wall_time_secs: start.elapsed().as_secs_f64(),
            seed,
        })
    }
}

/// Smoothing under `(ν, Q)` with the given emission values, then the
/// per-index argmax. Every label-emitting HMM rule goes through here.
pub fn labels_from_likelihoods(
    nu: &[f64],
    q: &[Vec<f64>],
    lik: &Likelihoods,
) -> Result<Vec<usize>> {
    Ok(smooth_likelihoods(nu, q, lik)?.argmax_labels())
}

pub fn oracle_bayes_cluster(
    params: &HmmParams,
    y: &Observations,
    truth: Option<&[usize]>,
) -> Result<ClusterRun> {
    let start = Instant::now();
    let lik = Likelihoods::from_params(params, y);
    let labels = labels_from_likelihoods(&params.nu, &params.transition, &lik)?;
    ClusterRun::new(
        Method::OracleBayes,
        labels,
        params.num_states(),
        truth,
        start,
        0,
    )
}

/// Plug-in rule for already estimated parameters.
pub fn plugin_cluster_with(
    nu: &[f64],
    q: &[Vec<f64>],
    lik: &Likelihoods,
    truth: Option<&[usize]>,
    seed: u64,
) -> Result<ClusterRun> {
    let start = Instant::now();
    let labels = labels_from_likelihoods(nu, q, lik)?;
    ClusterRun::new(Method::Plugin, labels, nu.len(), truth, start, seed)
}

/// Spectral estimation followed by the plug-in Bayes classifier.
pub fn plugin_cluster(
    y: &Observations,
    j: usize,
    cfg: &SpectralConfig,
    truth: Option<&[usize]>,
) -> Result<(ClusterRun, SpectralEstimate)> {
    let start = Instant::now();
    let est = full_estimate(y, j, cfg)?;
    let lik = est.likelihoods(y);
    let labels = labels_from_likelihoods(&est.nu_hat, &est.q_hat, &lik)?;
    let run = ClusterRun::new(Method::Plugin, labels, j, truth, start, cfg.seed)?;
    Ok((run, est))
}

pub const KMEANS_MAX_ITER: usize = 300;
pub const KMEANS_TOL: f64 = 1e-9;

fn nearest(centers: &[f64], x: f64) -> (usize, f64) {
    let mut best = (0, (x - centers[0]).powi(2));
    for (k, &c) in centers.iter().enumerate().skip(1) {
        let d = (x - c).powi(2);
        if d < best.1 {
            best = (k, d);
        }
    }
    best
}

fn kmeans_pp(y: &[f64], j: usize, rng: &mut rng::Rng) -> Vec<f64> {
    let mut centers = vec![y[rng.random_range(0..y.len())]];
    let mut d2: Vec<f64> = y.iter().map(|&x| (x - centers[0]).powi(2)).collect();
    while centers.len() < j {
        let total: f64 = d2.iter().sum();
        let next = if total > 0.0 {
            let mut u = rng.random::<f64>() * total;
            let mut pick = y.len() - 1;
            for (i, &d) in d2.iter().enumerate() {
                if u < d {
                    pick = i;
                    break;
                }
                u -= d;
            }
            y[pick]
        } else {
            y[rng.random_range(0..y.len())]
        };
        centers.push(next);
        for (d, &x) in d2.iter_mut().zip(y) {
            *d = d.min((x - next).powi(2));
        }
    }
    centers
}

/// Lloyd iterations from one initialization; returns labels and inertia.
fn lloyd(y: &[f64], mut centers: Vec<f64>) -> (Vec<usize>, f64) {
    let j = centers.len();
    let mut labels = vec![0; y.len()];
    for _ in 0..KMEANS_MAX_ITER {
        let mut sums = vec![0.0; j];
        let mut counts = vec![0usize; j];
        for (l, &x) in labels.iter_mut().zip(y) {
            *l = nearest(&centers, x).0;
            sums[*l] += x;
            counts[*l] += 1;
        }
        let mut shift: f64 = 0.0;
        for k in 0..j {
            if counts[k] > 0 {
                let c = sums[k] / counts[k] as f64;
                shift = shift.max((c - centers[k]).abs());
                centers[k] = c;
            }
        }
        if shift < KMEANS_TOL {
            break;
        }
    }
    let mut inertia = 0.0;
    for (l, &x) in labels.iter_mut().zip(y) {
        let (k, d) = nearest(&centers, x);
        *l = k;
        inertia += d;
    }
    (labels, inertia)
}

/// One-dimensional k-means: best of `restarts` k-means++ initializations.
pub fn kmeans_cluster(
    y: &[f64],
    j: usize,
    restarts: usize,
    seed: u64,
    truth: Option<&[usize]>,
) -> Result<ClusterRun> {
    if y.is_empty() || j == 0 {
        return Err(Error::InvalidArgument(
            "k-means needs data and J >= 1".into(),
        ));
    }
    let start = Instant::now();
    let runs: Vec<(Vec<usize>, f64)> = (0..restarts.max(1))
        .into_par_iter()
        .map(|r| {
            let mut rng = rng::stream(seed, r as u64);
            lloyd(y, kmeans_pp(y, j, &mut rng))
        })
        .collect();
    let mut best = 0;
    for (k, r) in runs.iter().enumerate() {
        if r.1 < runs[best].1 {
            best = k;
        }
    }
    let labels = runs.into_iter().nth(best).expect("at least one restart").0;
    ClusterRun::new(Method::Kmeans, labels, j, truth, start, seed)
}

/// Settings of a method inside a Monte Carlo loop.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct MethodSettings {
    pub spectral: SpectralConfig,
    pub kmeans_restarts: usize,
}

impl Default for MethodSettings {
    fn default() -> Self {
        Self {
            spectral: SpectralConfig::default(),
            kmeans_restarts: 10,
        }
    }
}

/// Runs `method` on one trajectory; seeds of the randomized methods are
/// derived from `seed`.
pub fn run_method(
    params: &HmmParams,
    method: Method,
    y: &Observations,
    truth: Option<&[usize]>,
    settings: &MethodSettings,
    seed: u64,
) -> Result<ClusterRun> {
    let j = params.num_states();
    match method {
        Method::OracleBayes => oracle_bayes_cluster(params, y, truth),
        Method::Plugin => {
            let cfg = SpectralConfig {
                seed,
                ..settings.spectral.clone()
            };
            Ok(plugin_cluster(y, j, &cfg, truth)?.0)
        }
        Method::Kmeans => {
            let v = y
                .as_reals()
                .ok_or_else(|| Error::InvalidArgument("k-means needs real observations".into()))?;
            kmeans_cluster(v, j, settings.kmeans_restarts, seed, truth)
        }
    }
}

/// Mean with a normal-approximation 95% half width (absent for a single
/// replicate).
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct Estimate {
    pub mean: f64,
    pub half_width: Option<f64>,
}

impl Estimate {
    pub fn from_samples(x: &[f64]) -> Self {
        let m = x.len() as f64;
        let mean = x.iter().sum::<f64>() / m;
        let half_width = (x.len() > 1).then(|| {
            let var = x.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (m - 1.0);
            1.96 * (var / m).sqrt()
        });
        Self { mean, half_width }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct MonteCarloRisks {
    pub method: Method,
    pub n: usize,
    pub replicates: usize,
    /// Mean misclassification-error distance to the true partition.
    pub clust_risk: Estimate,
    /// Mean unaligned 0-1 rate.
    pub class_risk: Estimate,
    /// Set when the confidence intervals are undefined (one replicate).
    pub degenerate: bool,
}

pub fn monte_carlo_risks(
    params: &HmmParams,
    method: Method,
    n: usize,
    replicates: usize,
    seed: u64,
    settings: &MethodSettings,
) -> Result<MonteCarloRisks> {
    if replicates == 0 {
        return Err(Error::InvalidArgument(
            "needs at least one replicate".into(),
        ));
    }
    let losses: Vec<(f64, f64)> = (0..replicates)
        .into_par_iter()
        .map(|r| {
            let t = sample_trajectory(params, n, rng::child_seed(seed, r as u64))?;
            let run = run_method(
                params,
                method,
                &t.y,
                Some(&t.x),
                settings,
                rng::child_seed(seed ^ 0x5eed, r as u64),
            )?;
            let clust = misclassification_loss(
                &Partition::from_labels(&t.x),
                &Partition::from_labels(&run.labels),
            )?;
            Ok((clust, run.unaligned_error.expect("truth supplied")))
        })
        .collect::<Result<_>>()?;
    let clust: Vec<f64> = losses.iter().map(|l| l.0).collect();
    let class: Vec<f64> = losses.iter().map(|l| l.1).collect();
    Ok(MonteCarloRisks {
        method,
        n,
        replicates,
        clust_risk: Estimate::from_samples(&clust),
        class_risk: Estimate::from_samples(&class),
        degenerate: replicates == 1,
    })
}
