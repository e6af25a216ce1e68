//! Brute-force computations at small `n`: the joint posterior of the hidden
//! labels, the exact Bayes clusterer, exact Bayes risks, and checkers for
//! when clustering with the Bayes classifier does or does not coincide with
//! the Bayes clusterer.

use std::collections::HashMap;

use itertools::Itertools;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::inference::{argmax, smooth_likelihoods};
use crate::model::{
    sample_trajectory, EmissionModel, HmmParams, Likelihoods, Obs, ObservationSpace, Observations,
};
use crate::partitions::{enumerate_rgs, rgs_from_labels, Partition, MAX_ENUM_LABELS};
use crate::quadrature::{Grid, DEFAULT_NODES};
use crate::{assignment, rng};

/// Two conditional risks closer than this are treated as equal.
pub const RISK_TIE_TOL: f64 = 1e-12;

/// Size guards for the enumerations.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Limits {
    /// Largest sequence length for joint-posterior enumeration.
    pub max_n: usize,
    /// Largest `J^n` for joint-posterior enumeration.
    pub max_label_paths: u128,
    /// Largest `A^n` (or number of letter compositions) for exact risks.
    pub max_observation_paths: u128,
}

impl Default for Limits {
    fn default() -> Self {
        Self {
            max_n: 10,
            max_label_paths: 1_000_000,
            max_observation_paths: 1_000_000,
        }
    }
}

fn check(what: &'static str, value: u128, limit: u128) -> Result<()> {
    if value > limit {
        return Err(Error::LimitExceeded { what, value, limit });
    }
    Ok(())
}

fn checked_pow(base: usize, exp: usize) -> u128 {
    (0..exp).fold(1u128, |acc, _| acc.saturating_mul(base as u128))
}

/// `P(X_{1:n} = x | y_{1:n})` for every `x ∈ [J]^n`.
///
/// Index `c` encodes `x_i = (c / J^i) mod J`.
#[derive(Clone, Debug)]
pub struct JointPosterior {
    pub n: usize,
    pub j: usize,
    pub probs: Vec<f64>,
    /// Joint density of the observations, `Σ_x P(x, y)`.
    pub evidence: f64,
}

impl JointPosterior {
    pub fn labels(&self, code: usize) -> Vec<usize> {
        let mut c = code;
        (0..self.n)
            .map(|_| {
                let x = c % self.j;
                c /= self.j;
                x
            })
            .collect()
    }

    /// `P(X_i = x | y)` by summing the table.
    pub fn marginals(&self) -> Vec<Vec<f64>> {
        let mut m = vec![vec![0.0; self.j]; self.n];
        for (code, &p) in self.probs.iter().enumerate() {
            if p == 0.0 {
                continue;
            }
            for (i, x) in self.labels(code).into_iter().enumerate() {
                m[i][x] += p;
            }
        }
        m
    }

    /// Posterior mass of each induced partition, keyed by restricted growth
    /// string; zero-mass partitions are omitted.
    pub fn partition_masses(&self) -> Vec<(Vec<usize>, f64)> {
        let mut acc: HashMap<Vec<usize>, f64> = HashMap::new();
        for (code, &p) in self.probs.iter().enumerate() {
            if p > 0.0 {
                *acc.entry(rgs_from_labels(&self.labels(code)))
                    .or_insert(0.0) += p;
            }
        }
        let mut out: Vec<_> = acc.into_iter().collect();
        out.sort_by(|a, b| a.0.cmp(&b.0));
        out
    }
}

/// Joint posterior from `ν`, `Q` and a likelihood matrix.
pub fn joint_posterior_likelihoods(
    nu: &[f64],
    q: &[Vec<f64>],
    lik: &Likelihoods,
    limits: &Limits,
) -> Result<JointPosterior> {
    let (n, j) = (lik.n, lik.j);
    if n == 0 {
        return Err(Error::InvalidArgument("empty observation sequence".into()));
    }
    if nu.len() != j || q.len() != j {
        return Err(Error::DimensionMismatch(format!(
            "{} states vs {j} likelihood columns",
            nu.len()
        )));
    }
    check("sequence length", n as u128, limits.max_n as u128)?;
    check("J^n label paths", checked_pow(j, n), limits.max_label_paths)?;
    if let Some(i) = (0..n).find(|&i| lik.row(i).iter().all(|&v| v == 0.0)) {
        return Err(Error::ImpossibleObservation { index: i });
    }
    let total = j.pow(n as u32);
    let mut probs = vec![0.0; total];
    let mut x = vec![0usize; n];
    for (code, slot) in probs.iter_mut().enumerate() {
        let mut c = code;
        for v in x.iter_mut() {
            *v = c % j;
            c /= j;
        }
        let mut w = nu[x[0]] * lik.row(0)[x[0]];
        for i in 1..n {
            if w == 0.0 {
                break;
            }
            w *= q[x[i - 1]][x[i]] * lik.row(i)[x[i]];
        }
        *slot = w;
    }
    let evidence: f64 = probs.iter().sum();
    if !(evidence > 0.0) {
        return Err(Error::InvalidArgument(
            "observation sequence has zero probability".into(),
        ));
    }
    probs.iter_mut().for_each(|p| *p /= evidence);
    Ok(JointPosterior {
        n,
        j,
        probs,
        evidence,
    })
}

pub fn joint_posterior(
    params: &HmmParams,
    y: &Observations,
    limits: &Limits,
) -> Result<JointPosterior> {
    joint_posterior_likelihoods(
        &params.nu,
        &params.transition,
        &Likelihoods::from_params(params, y),
        limits,
    )
}

/// Maximum block overlap between restricted growth strings, reusing one
/// permutation table for all comparisons.
struct OverlapScorer {
    m: usize,
    perms: Vec<Vec<usize>>,
}

impl OverlapScorer {
    fn new(m: usize) -> Self {
        let perms = if m <= MAX_ENUM_LABELS {
            (0..m).permutations(m).collect()
        } else {
            Vec::new()
        };
        Self { m, perms }
    }

    /// `n − max matching overlap` between two strings with values `< m`.
    fn mismatches(&self, a: &[usize], b: &[usize], conf: &mut [i64]) -> usize {
        let m = self.m;
        conf.iter_mut().for_each(|c| *c = 0);
        for (&u, &v) in a.iter().zip(b) {
            conf[u * m + v] += 1;
        }
        let best = if self.perms.is_empty() {
            let w: Vec<Vec<i64>> = conf.chunks(m).map(<[i64]>::to_vec).collect();
            assignment::max_weight_matching(&w).0
        } else {
            self.perms
                .iter()
                .map(|p| {
                    p.iter()
                        .enumerate()
                        .map(|(r, &c)| conf[r * m + c])
                        .sum::<i64>()
                })
                .max()
                .unwrap_or(0)
        };
        a.len() - best as usize
    }
}

/// The minimizer of `g ↦ E[ℓ(Π_n, g) | y]`.
#[derive(Clone, Debug, PartialEq)]
pub struct ClustererDecision {
    pub partition: Partition,
    pub conditional_risk: f64,
    /// Second-smallest conditional risk minus the smallest; infinite when
    /// there is a single candidate.
    pub runner_up_gap: f64,
}

/// `E[ℓ(Π_n, g) | y]` for every partition with at most `max_blocks`
/// blocks, in canonical order.
pub fn conditional_risks(jp: &JointPosterior, max_blocks: usize) -> Result<Vec<(Vec<usize>, f64)>> {
    let support = jp.partition_masses();
    let m = max_blocks.max(jp.j);
    let scorer = OverlapScorer::new(m);
    let mut conf = vec![0i64; m * m];
    let n = jp.n as f64;
    let mut out = Vec::new();
    for g in enumerate_rgs(jp.n, max_blocks)? {
        let mut r = 0.0;
        for (s, mass) in &support {
            r += mass * scorer.mismatches(s, &g, &mut conf) as f64;
        }
        out.push((g, r / n));
    }
    Ok(out)
}

/// Expected loss of one partition under the joint posterior.
pub fn expected_loss(jp: &JointPosterior, g: &Partition) -> Result<f64> {
    if g.n() != jp.n {
        return Err(Error::DimensionMismatch(format!(
            "partition of {} for n = {}",
            g.n(),
            jp.n
        )));
    }
    let labels = g.block_labels();
    let m = g.num_blocks().max(jp.j);
    let scorer = OverlapScorer::new(m);
    let mut conf = vec![0i64; m * m];
    let r: f64 = jp
        .partition_masses()
        .iter()
        .map(|(s, mass)| mass * scorer.mismatches(s, &labels, &mut conf) as f64)
        .sum();
    Ok(r / jp.n as f64)
}

/// Bayes clusterer from a joint posterior; ties go to the first partition
/// in canonical order.
pub fn bayes_clusterer_joint(jp: &JointPosterior, max_blocks: usize) -> Result<ClustererDecision> {
    let risks = conditional_risks(jp, max_blocks)?;
    let mut best = 0;
    for (k, (_, r)) in risks.iter().enumerate() {
        if *r < risks[best].1 {
            best = k;
        }
    }
    let runner_up = risks
        .iter()
        .enumerate()
        .filter(|(k, _)| *k != best)
        .map(|(_, (_, r))| *r)
        .fold(f64::INFINITY, f64::min);
    Ok(ClustererDecision {
        partition: Partition::from_labels(&risks[best].0),
        conditional_risk: risks[best].1,
        runner_up_gap: runner_up - risks[best].1,
    })
}

/// Bayes clusterer over partitions with at most `j` blocks.
pub fn bayes_clusterer_exact(
    params: &HmmParams,
    y: &Observations,
    j: usize,
    limits: &Limits,
) -> Result<ClustererDecision> {
    bayes_clusterer_joint(&joint_posterior(params, y, limits)?, j)
}

fn finite_size(params: &HmmParams) -> Result<usize> {
    match params.space() {
        ObservationSpace::Finite { size } => Ok(size),
        ObservationSpace::Real => Err(Error::InvalidArgument(
            "exact risks need a finite observation alphabet".into(),
        )),
    }
}

fn pmf(params: &HmmParams, x: usize) -> &[f64] {
    match &params.emissions[x] {
        EmissionModel::Finite { pmf } => pmf,
        _ => unreachable!("checked finite"),
    }
}

/// All sequences of `[A]^n`, as a lazily decoded range.
fn sequence(code: usize, a: usize, n: usize) -> Vec<usize> {
    let mut c = code;
    (0..n)
        .map(|_| {
            let s = c % a;
            c /= a;
            s
        })
        .collect()
}

/// Letter counts `(c_0..c_{A-1})` summing to `n`.
fn compositions(a: usize, n: usize) -> Vec<Vec<usize>> {
    fn rec(a: usize, left: usize, cur: &mut Vec<usize>, out: &mut Vec<Vec<usize>>) {
        if cur.len() + 1 == a {
            cur.push(left);
            out.push(cur.clone());
            cur.pop();
            return;
        }
        for c in 0..=left {
            cur.push(c);
            rec(a, left - c, cur, out);
            cur.pop();
        }
    }
    let mut out = Vec::new();
    rec(a, n, &mut Vec::new(), &mut out);
    out
}

fn ln_factorial(k: usize) -> f64 {
    (1..=k).map(|i| (i as f64).ln()).sum()
}

fn composition_count(a: usize, n: usize) -> u128 {
    // C(n + a - 1, a - 1)
    let mut c = 1u128;
    for i in 0..(a as u128 - 1) {
        c = c * (n as u128 + 1 + i) / (i + 1);
    }
    c
}

/// `inf_h` of the classification risk, exactly.
///
/// With independent labels this is `Σ_y (Σ_x ν_x f_x(y) − max_x ν_x f_x(y))`
/// for every `n`; otherwise all of `[A]^n` is enumerated and each sequence
/// contributes `P(y) (1/n) Σ_i (1 − max_x φ_{i|n}(x))`.
pub fn bayes_class_risk_exact(params: &HmmParams, n: usize, limits: &Limits) -> Result<f64> {
    let a = finite_size(params)?;
    let j = params.num_states();
    if n == 0 {
        return Err(Error::InvalidArgument("n must be >= 1".into()));
    }
    if params.is_iid() {
        return Ok((0..a)
            .map(|y| {
                let w: Vec<f64> = (0..j).map(|x| params.nu[x] * pmf(params, x)[y]).collect();
                w.iter().sum::<f64>() - w.iter().copied().fold(0.0, f64::max)
            })
            .sum());
    }
    check(
        "A^n observation sequences",
        checked_pow(a, n),
        limits.max_observation_paths,
    )?;
    let total = a.pow(n as u32);
    let risk: f64 = (0..total)
        .into_par_iter()
        .map(|code| {
            let y = Observations::Symbols(sequence(code, a, n));
            let lik = Likelihoods::from_params(params, &y);
            match smooth_likelihoods(&params.nu, &params.transition, &lik) {
                Ok(s) => {
                    let miss: f64 = s.rows().map(|r| 1.0 - r[argmax(r)]).sum();
                    s.loglik.exp() * miss / n as f64
                }
                Err(_) => 0.0,
            }
        })
        .sum();
    Ok(risk)
}

/// Observation sequences with their probabilities, one per letter
/// composition when labels are independent (the clusterer's minimal risk is
/// invariant under reordering the observations), all of `[A]^n` otherwise.
fn weighted_sequences(
    params: &HmmParams,
    n: usize,
    limits: &Limits,
) -> Result<Vec<(Vec<usize>, f64)>> {
    let a = finite_size(params)?;
    if params.is_iid() {
        check(
            "letter compositions",
            composition_count(a, n),
            limits.max_observation_paths,
        )?;
        let p: Vec<f64> = (0..a)
            .map(|y| {
                (0..params.num_states())
                    .map(|x| params.nu[x] * pmf(params, x)[y])
                    .sum()
            })
            .collect();
        Ok(compositions(a, n)
            .into_iter()
            .filter_map(|c| {
                let mut lw = ln_factorial(n);
                for (s, &k) in c.iter().enumerate() {
                    if k > 0 {
                        if p[s] == 0.0 {
                            return None;
                        }
                        lw += k as f64 * p[s].ln() - ln_factorial(k);
                    }
                }
                let y: Vec<usize> = c
                    .iter()
                    .enumerate()
                    .flat_map(|(s, &k)| std::iter::repeat_n(s, k))
                    .collect();
                Some((y, lw.exp()))
            })
            .collect())
    } else {
        check(
            "A^n observation sequences",
            checked_pow(a, n),
            limits.max_observation_paths,
        )?;
        Ok((0..a.pow(n as u32))
            .map(|code| (sequence(code, a, n), f64::NAN))
            .collect())
    }
}

/// `inf_g` of the clustering risk, exactly: `Σ_y P(y) min_g E[ℓ(Π_n, g) | y]`.
pub fn bayes_clust_risk_exact(params: &HmmParams, n: usize, limits: &Limits) -> Result<f64> {
    let j = params.num_states();
    check("J^n label paths", checked_pow(j, n), limits.max_label_paths)?;
    check("sequence length", n as u128, limits.max_n as u128)?;
    let seqs = weighted_sequences(params, n, limits)?;
    seqs.into_par_iter()
        .map(|(y, w)| {
            let lik = Likelihoods::from_params(params, &Observations::Symbols(y));
            let jp = match joint_posterior_likelihoods(&params.nu, &params.transition, &lik, limits)
            {
                Ok(jp) => jp,
                Err(Error::ImpossibleObservation { .. }) | Err(Error::InvalidArgument(_)) => {
                    return Ok(0.0)
                }
                Err(e) => return Err(e),
            };
            let weight = if w.is_nan() { jp.evidence } else { w };
            Ok(weight * bayes_clusterer_joint(&jp, j)?.conditional_risk)
        })
        .sum()
}

/// `E_y[min_{ĥ ∈ [J]^n} min_τ E(U_{n,τ}(ĥ) | y)]` with
/// `U_{n,τ}(ĥ) = (1/n) Σ 1{ĥ_i ≠ τ(X_i)}`, by brute force over `ĥ` and `τ`
/// using marginals of the enumerated joint posterior.
pub fn mrss_risk_min_exact(params: &HmmParams, n: usize, limits: &Limits) -> Result<f64> {
    let a = finite_size(params)?;
    let j = params.num_states();
    check(
        "A^n observation sequences",
        checked_pow(a, n),
        limits.max_observation_paths,
    )?;
    check("J^n label paths", checked_pow(j, n), limits.max_label_paths)?;
    check("sequence length", n as u128, limits.max_n as u128)?;
    let perms: Vec<Vec<usize>> = (0..j).permutations(j).collect();
    (0..a.pow(n as u32))
        .into_par_iter()
        .map(|code| {
            let y = Observations::Symbols(sequence(code, a, n));
            let lik = Likelihoods::from_params(params, &y);
            let jp = match joint_posterior_likelihoods(&params.nu, &params.transition, &lik, limits)
            {
                Ok(jp) => jp,
                Err(Error::ImpossibleObservation { .. }) | Err(Error::InvalidArgument(_)) => {
                    return Ok(0.0)
                }
                Err(e) => return Err(e),
            };
            let marg = jp.marginals();
            let mut best = f64::INFINITY;
            for hcode in 0..j.pow(n as u32) {
                let h = sequence(hcode, j, n);
                for tau in &perms {
                    // P(τ(X_i) = h_i) = P(X_i = τ^{-1}(h_i))
                    let hit: f64 = (0..n)
                        .map(|i| {
                            let x = tau.iter().position(|&t| t == h[i]).expect("permutation");
                            marg[i][x]
                        })
                        .sum();
                    best = best.min(1.0 - hit / n as f64);
                }
            }
            Ok(jp.evidence * best)
        })
        .sum()
}

/// One observation vector on which the Bayes clusterer and the partition
/// induced by the Bayes classifier differ.
#[derive(Clone, Debug, PartialEq)]
pub struct Witness {
    pub y: Vec<Obs>,
    pub clusterer: Partition,
    pub clusterer_risk: f64,
    pub classifier: Partition,
    pub classifier_risk: f64,
}

/// Compares the two decisions on one likelihood matrix. Returns `None` when
/// they agree, i.e. same partition or conditional risks within
/// [`RISK_TIE_TOL`].
pub fn compare_decisions(
    nu: &[f64],
    q: &[Vec<f64>],
    lik: &Likelihoods,
    y: Vec<Obs>,
    limits: &Limits,
) -> Result<Option<Witness>> {
    let jp = joint_posterior_likelihoods(nu, q, lik, limits)?;
    let dec = bayes_clusterer_joint(&jp, nu.len())?;
    let labels = smooth_likelihoods(nu, q, lik)?.argmax_labels();
    let classifier = Partition::from_labels(&labels);
    if classifier == dec.partition {
        return Ok(None);
    }
    let classifier_risk = expected_loss(&jp, &classifier)?;
    if classifier_risk - dec.conditional_risk <= RISK_TIE_TOL {
        return Ok(None);
    }
    Ok(Some(Witness {
        y,
        clusterer: dec.partition,
        clusterer_risk: dec.conditional_risk,
        classifier,
        classifier_risk,
    }))
}

#[derive(Clone, Debug, PartialEq)]
pub struct CoincidenceReport {
    pub trials: usize,
    pub n: usize,
    /// Whether the model had independent labels and two states, the
    /// setting in which the two decisions must coincide.
    pub iid_two_state: bool,
    /// Trials skipped because some smoothing row was exactly tied.
    pub skipped_ties: usize,
    pub checked: usize,
    pub violations: Vec<Witness>,
}

/// Samples `trials` sequences of length `n` and compares the Bayes
/// clusterer with the partition of the Bayes classifier on each.
///
/// Meant for independent-label two-state models, where no violation may
/// occur; other models are accepted so that the contrast can be observed.
pub fn coincidence_check_iid_j2(
    params: &HmmParams,
    n: usize,
    trials: usize,
    seed: u64,
    limits: &Limits,
) -> Result<CoincidenceReport> {
    let j = params.num_states();
    let results: Vec<Result<(bool, Option<Witness>)>> = (0..trials)
        .into_par_iter()
        .map(|t| {
            let traj = sample_trajectory(params, n, rng::child_seed(seed, t as u64))?;
            let lik = Likelihoods::from_params(params, &traj.y);
            let s = smooth_likelihoods(&params.nu, &params.transition, &lik)?;
            let tied = s.rows().any(|r| {
                let m = r[argmax(r)];
                r.iter().filter(|&&p| p == m).count() > 1
            });
            if tied {
                return Ok((true, None));
            }
            let y = (0..n).map(|i| traj.y.get(i)).collect();
            Ok((
                false,
                compare_decisions(&params.nu, &params.transition, &lik, y, limits)?,
            ))
        })
        .collect();
    let mut report = CoincidenceReport {
        trials,
        n,
        iid_two_state: params.is_iid() && j == 2,
        skipped_ties: 0,
        checked: 0,
        violations: Vec::new(),
    };
    for r in results {
        let (tied, w) = r?;
        if tied {
            report.skipped_ties += 1;
        } else {
            report.checked += 1;
            report.violations.extend(w);
        }
    }
    Ok(report)
}

/// True when `0 < max_{l≠j} w_l < w_j ≤ Σ_{l≠j} w_l` for some `j`, where
/// `w_l = ν_l f_l(y)`.
pub fn divergence_condition(weights: &[f64]) -> bool {
    let total: f64 = weights.iter().sum();
    (0..weights.len()).any(|j| {
        let others_max = weights
            .iter()
            .enumerate()
            .filter(|(l, _)| *l != j)
            .map(|(_, &w)| w)
            .fold(0.0, f64::max);
        let others_sum = total - weights[j];
        0.0 < others_max && others_max < weights[j] && weights[j] <= others_sum
    })
}

#[derive(Clone, Debug, PartialEq)]
pub struct DivergenceReport {
    /// Whether some point of the alphabet or grid satisfies
    /// [`divergence_condition`].
    pub condition_holds: bool,
    pub condition_points: usize,
    pub witness: Option<Witness>,
}

/// Number of evaluation points for real-valued observation spaces.
pub const DIVERGENCE_GRID: usize = 4001;

/// Looks for observation values satisfying [`divergence_condition`] and
/// then for a short sequence (`n = 2..=4`) on which the Bayes clusterer
/// differs from the classifier partition.
pub fn divergence_witness_iid_j3(params: &HmmParams, limits: &Limits) -> Result<DivergenceReport> {
    let j = params.num_states();
    if j < 3 {
        return Err(Error::InvalidArgument(format!("needs J > 2, got {j}")));
    }
    if !params.is_iid() {
        return Err(Error::InvalidArgument("needs independent labels".into()));
    }
    let points: Vec<Obs> = match params.space() {
        ObservationSpace::Finite { size } => (0..size).map(Obs::Symbol).collect(),
        ObservationSpace::Real => {
            let grid = Grid::for_emissions(&params.emissions, DEFAULT_NODES);
            let lo = grid.nodes.first().copied().unwrap_or(0.0);
            let hi = grid.nodes.last().copied().unwrap_or(0.0);
            (0..DIVERGENCE_GRID)
                .map(|k| Obs::Real(lo + (hi - lo) * k as f64 / (DIVERGENCE_GRID - 1) as f64))
                .collect()
        }
    };
    let weights = |y: Obs| -> Vec<f64> {
        (0..j)
            .map(|x| params.nu[x] * params.emissions[x].density(y))
            .collect()
    };
    let hits: Vec<Obs> = points
        .into_iter()
        .filter(|&y| divergence_condition(&weights(y)))
        .collect();
    let mut report = DivergenceReport {
        condition_holds: !hits.is_empty(),
        condition_points: hits.len(),
        witness: None,
    };
    // spread the candidates over the region rather than taking the first few
    let step = (hits.len() / 40).max(1);
    let candidates: Vec<Obs> = hits.iter().copied().step_by(step).collect();
    let try_seq = |y: Vec<Obs>| -> Result<Option<Witness>> {
        let values = y.iter().flat_map(|&o| params.densities_at(o)).collect();
        let lik = Likelihoods::new(y.len(), j, values);
        compare_decisions(&params.nu, &params.transition, &lik, y, limits)
    };
    for n in 2..=4usize {
        for &c in &candidates {
            if let Some(w) = try_seq(vec![c; n])? {
                report.witness = Some(w);
                return Ok(report);
            }
        }
    }
    for (&a, &b) in candidates.iter().tuple_combinations() {
        if let Some(w) = try_seq(vec![a, b])? {
            report.witness = Some(w);
            return Ok(report);
        }
    }
    Ok(report)
}

/// The two-state, two-observation decision rules of a stationary chain with
/// `Q = ((1−p, p), (q, 1−q))`, written directly in terms of `f_x(Y_i)`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct TwoPointConditions {
    /// `q p̄ f_1(Y_1) f_1(Y_2) + p q̄ f_2(Y_1) f_2(Y_2)`.
    pub same_weight: f64,
    /// `p q (f_2(Y_1) f_1(Y_2) + f_1(Y_1) f_2(Y_2))`.
    pub split_weight: f64,
    /// The clusterer keeps both observations together.
    pub clusterer_same: bool,
    /// Product of the two posterior differences (up to a positive factor).
    pub classifier_product: f64,
    /// The classifier gives both observations the same label.
    pub classifier_same: bool,
}

/// `f[i][x] = f_x(Y_i)` for `i, x ∈ {0, 1}`.
pub fn two_point_conditions(p: f64, q: f64, f: [[f64; 2]; 2]) -> TwoPointConditions {
    let (pb, qb) = (1.0 - p, 1.0 - q);
    let (a1, a2) = (f[0][0], f[0][1]);
    let (b1, b2) = (f[1][0], f[1][1]);
    let same_weight = q * pb * a1 * b1 + p * qb * a2 * b2;
    let split_weight = p * q * (a2 * b1 + a1 * b2);
    let first = p * q * a2 * b1 + p * qb * a2 * b2 - q * pb * a1 * b1 - q * p * a1 * b2;
    let second = q * p * a1 * b2 + p * qb * a2 * b2 - q * pb * a1 * b1 - p * q * a2 * b1;
    let classifier_product = first * second;
    TwoPointConditions {
        same_weight,
        split_weight,
        clusterer_same: same_weight >= split_weight,
        classifier_product,
        classifier_same: classifier_product >= 0.0,
    }
}

/// The two events used for the two-state dependent counterexample at
/// larger `n`: `A` (classifier keeps the first two observations together)
/// and `C` (clusterer separates them), with both sides of each inequality.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SplitEvents {
    pub a_first: bool,
    pub a_second: bool,
    pub a_holds: bool,
    pub c_lhs: f64,
    pub c_rhs: f64,
    pub c_holds: bool,
}

/// `f[i][x] = f_x(Y_i)` for the first two observations.
pub fn split_events(p: f64, q: f64, f: [[f64; 2]; 2]) -> SplitEvents {
    let r1 = f[0][0] / f[0][1];
    let r2 = f[1][0] / f[1][1];
    let a_first = r1 < 1.0 && r2 < q / (1.0 - p);
    let a_second =
        1.0 / r1 < q * (1.0 - p) / (p * (1.0 - q)) && 1.0 / r2 < q * (1.0 - p) / (1.0 - q).powi(2);
    let c_lhs = ((1.0 - p).powi(2) * f[0][0] * f[1][0] - p * (1.0 - q) * f[0][1] * f[1][1]).abs();
    let c_rhs = p * (q * f[0][0] * f[1][1] - (1.0 - p) * f[0][1] * f[1][0]).abs();
    SplitEvents {
        a_first,
        a_second,
        a_holds: a_first || a_second,
        c_lhs,
        c_rhs,
        c_holds: c_lhs < c_rhs,
    }
}

/// Three-state mixture with `ν = (1−2η, η, η)` and uniform emissions on
/// `(0, ½)`, `(¾, 1)` and `(¾−ε, 1−ε)`, reduced to the four cells on which
/// the posterior is constant: `(0, ½)`, `(¾−ε, ¾)`, `(¾, 1−ε)`, `(1−ε, 1)`.
pub fn overlap_mixture(eta: f64, eps: f64) -> Result<HmmParams> {
    if !(0.0..0.25).contains(&eta) || !(0.0..0.25).contains(&eps) {
        return Err(Error::InvalidArgument(format!(
            "need 0 <= eta, eps < 1/4, got {eta}, {eps}"
        )));
    }
    let cells = |p: [f64; 4]| EmissionModel::Finite { pmf: p.to_vec() };
    HmmParams::iid(
        vec![1.0 - 2.0 * eta, eta, eta],
        vec![
            cells([1.0, 0.0, 0.0, 0.0]),
            cells([0.0, 0.0, 1.0 - 4.0 * eps, 4.0 * eps]),
            cells([0.0, 4.0 * eps, 1.0 - 4.0 * eps, 0.0]),
        ],
    )
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct RatioRow {
    pub eta: f64,
    pub eps: f64,
    pub clust_risk: f64,
    pub class_risk: f64,
    /// `clust / class`; `None` when the classification risk is zero.
    pub ratio: Option<f64>,
    /// Whether the clustering risk was computed exactly (otherwise Monte
    /// Carlo over `trials` sequences).
    pub exact: bool,
}

/// Both Bayes risks of [`overlap_mixture`] with `ε = η` for each `η`.
///
/// The clustering risk is exact while the number of letter compositions
/// fits in `limits`; otherwise it is averaged over `trials` sampled
/// sequences.
pub fn prop1_ratio_experiment(
    etas: &[f64],
    n: usize,
    trials: usize,
    seed: u64,
    limits: &Limits,
) -> Result<Vec<RatioRow>> {
    etas.iter()
        .enumerate()
        .map(|(k, &eta)| {
            let params = overlap_mixture(eta, eta)?;
            let class_risk = bayes_class_risk_exact(&params, n, limits)?;
            let (clust_risk, exact) = match bayes_clust_risk_exact(&params, n, limits) {
                Ok(r) => (r, true),
                Err(Error::LimitExceeded { .. }) => (
                    monte_carlo_clust_risk(
                        &params,
                        n,
                        trials,
                        rng::child_seed(seed, k as u64),
                        limits,
                    )?,
                    false,
                ),
                Err(e) => return Err(e),
            };
            Ok(RatioRow {
                eta,
                eps: eta,
                clust_risk,
                class_risk,
                ratio: (class_risk > 0.0).then(|| clust_risk / class_risk),
                exact,
            })
        })
        .collect()
}

fn monte_carlo_clust_risk(
    params: &HmmParams,
    n: usize,
    trials: usize,
    seed: u64,
    limits: &Limits,
) -> Result<f64> {
    if trials == 0 {
        return Err(Error::InvalidArgument("trials must be >= 1".into()));
    }
    let total: Result<f64> = (0..trials)
        .into_par_iter()
        .map(|t| {
            let traj = sample_trajectory(params, n, rng::child_seed(seed, t as u64))?;
            Ok(
                bayes_clusterer_exact(params, &traj.y, params.num_states(), limits)?
                    .conditional_risk,
            )
        })
        .sum();
    Ok(total? / trials as f64)
}

#[derive(Clone, Debug, PartialEq)]
pub struct BiasFlipReport {
    pub ok: bool,
    /// `E|Σ Z_i − n/2|` with every `p_i = α_i`.
    pub all_alpha: f64,
    /// Same with every `p_i = 1 − α_i`.
    pub all_complement: f64,
    /// Largest value over all `2^n` assignments.
    pub max_value: f64,
    /// Assignment attaining it (`true` means `p_i = α_i`), first in
    /// binary order.
    pub argmax: Vec<bool>,
}

/// `E|Σ Z_i − n/2|` for independent `Z_i ~ B(p_i)`, by dynamic programming
/// over the distribution of the sum.
pub fn mean_abs_deviation(p: &[f64]) -> f64 {
    let mut dist = vec![1.0];
    for &pi in p {
        let mut next = vec![0.0; dist.len() + 1];
        for (s, &w) in dist.iter().enumerate() {
            next[s] += w * (1.0 - pi);
            next[s + 1] += w * pi;
        }
        dist = next;
    }
    let half = p.len() as f64 / 2.0;
    dist.iter()
        .enumerate()
        .map(|(s, w)| w * (s as f64 - half).abs())
        .sum()
}

/// Checks over all `2^n` bias assignments `p_i ∈ {α_i, 1−α_i}` that
/// `E|Σ Z_i − n/2|` is maximal at the all-`α` and all-`(1−α)` assignments.
pub fn bias_flip_maximum_check(alphas: &[f64]) -> Result<BiasFlipReport> {
    let n = alphas.len();
    if n == 0 || n > 20 {
        return Err(Error::InvalidArgument(format!(
            "need 1 <= n <= 20, got {n}"
        )));
    }
    if let Some(a) = alphas.iter().find(|a| !(0.5..1.0).contains(*a)) {
        return Err(Error::InvalidArgument(format!(
            "alpha {a} outside [1/2, 1)"
        )));
    }
    let assign = |mask: usize| -> Vec<f64> {
        (0..n)
            .map(|i| {
                if mask >> i & 1 == 1 {
                    alphas[i]
                } else {
                    1.0 - alphas[i]
                }
            })
            .collect()
    };
    let full = (1usize << n) - 1;
    let all_alpha = mean_abs_deviation(&assign(full));
    let all_complement = mean_abs_deviation(&assign(0));
    let (mut max_value, mut best) = (f64::NEG_INFINITY, 0);
    for mask in 0..=full {
        let v = mean_abs_deviation(&assign(mask));
        if v > max_value {
            max_value = v;
            best = mask;
        }
    }
    let tol = 1e-12;
    Ok(BiasFlipReport {
        ok: max_value <= all_alpha + tol && max_value <= all_complement + tol,
        all_alpha,
        all_complement,
        max_value,
        argmax: (0..n).map(|i| best >> i & 1 == 1).collect(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn finite(nu: Vec<f64>, q: Vec<Vec<f64>>, pmfs: Vec<Vec<f64>>) -> HmmParams {
        HmmParams::new(
            nu,
            q,
            pmfs.into_iter()
                .map(|pmf| EmissionModel::Finite { pmf })
                .collect(),
        )
        .unwrap()
    }

    fn iid2(nu: [f64; 2], f1: Vec<f64>, f2: Vec<f64>) -> HmmParams {
        finite(nu.to_vec(), vec![nu.to_vec(), nu.to_vec()], vec![f1, f2])
    }

    #[test]
    fn class_risk_closed_form_example() {
        let p = iid2([0.6, 0.4], vec![0.9, 0.1], vec![0.2, 0.8]);
        let r = bayes_class_risk_exact(&p, 5, &Limits::default()).unwrap();
        assert!((r - 0.14).abs() < 1e-15);
    }

    #[test]
    fn indistinguishable_and_separated_models() {
        let same = iid2([0.5, 0.5], vec![0.3, 0.7], vec![0.3, 0.7]);
        let lim = Limits::default();
        assert!((bayes_class_risk_exact(&same, 3, &lim).unwrap() - 0.5).abs() < 1e-15);
        assert!((mrss_risk_min_exact(&same, 3, &lim).unwrap() - 0.5).abs() < 1e-12);
        assert!((bayes_clust_risk_exact(&same, 2, &lim).unwrap() - 0.25).abs() < 1e-15);

        let apart = iid2([0.5, 0.5], vec![1.0, 0.0], vec![0.0, 1.0]);
        assert_eq!(bayes_class_risk_exact(&apart, 3, &lim).unwrap(), 0.0);
        assert_eq!(bayes_clust_risk_exact(&apart, 3, &lim).unwrap(), 0.0);
        assert_eq!(mrss_risk_min_exact(&apart, 3, &lim).unwrap(), 0.0);
    }

    #[test]
    fn compositions_match_full_enumeration() {
        // one sequence per letter composition vs every sequence of [A]^n
        let p = iid2([0.7, 0.3], vec![0.5, 0.3, 0.2], vec![0.1, 0.3, 0.6]);
        let lim = Limits::default();
        let fast = bayes_clust_risk_exact(&p, 5, &lim).unwrap();
        let seqs: f64 = (0..3usize.pow(5))
            .map(|code| {
                let y = Observations::Symbols(sequence(code, 3, 5));
                let jp = joint_posterior(&p, &y, &lim).unwrap();
                jp.evidence * bayes_clusterer_joint(&jp, 2).unwrap().conditional_risk
            })
            .sum();
        assert!((fast - seqs).abs() < 1e-13, "{fast} vs {seqs}");
    }

    #[test]
    fn joint_posterior_factorizes_under_independence() {
        let p = iid2([0.6, 0.4], vec![0.9, 0.1], vec![0.2, 0.8]);
        let y = Observations::Symbols(vec![0, 1, 1]);
        let jp = joint_posterior(&p, &y, &Limits::default()).unwrap();
        let post = |s: usize| {
            let w = [0.6 * [0.9, 0.1][s], 0.4 * [0.2, 0.8][s]];
            [w[0] / (w[0] + w[1]), w[1] / (w[0] + w[1])]
        };
        for code in 0..8 {
            let x = jp.labels(code);
            let prod = post(0)[x[0]] * post(1)[x[1]] * post(1)[x[2]];
            assert!((jp.probs[code] - prod).abs() < 1e-12);
        }
    }

    #[test]
    fn single_observation_clusterer() {
        let p = iid2([0.6, 0.4], vec![0.9, 0.1], vec![0.2, 0.8]);
        let d = bayes_clusterer_exact(&p, &Observations::Symbols(vec![1]), 2, &Limits::default())
            .unwrap();
        assert_eq!(d.partition.num_blocks(), 1);
        assert_eq!(d.conditional_risk, 0.0);
    }

    #[test]
    fn bernoulli_hmm_two_point_witness() {
        let (p, q) = (0.9, 0.9);
        let (a1, a2) = (0.4, 0.6);
        let params = HmmParams::stationary(
            vec![vec![1.0 - p, p], vec![q, 1.0 - q]],
            vec![
                EmissionModel::Finite {
                    pmf: vec![1.0 - a1, a1],
                },
                EmissionModel::Finite {
                    pmf: vec![1.0 - a2, a2],
                },
            ],
        )
        .unwrap();
        let lim = Limits::default();
        let y = Observations::Symbols(vec![1, 1]);
        let dec = bayes_clusterer_exact(&params, &y, 2, &lim).unwrap();
        assert_eq!(dec.partition, Partition::from_labels(&[0, 1]));
        let labels = crate::inference::bayes_classify(&params, &y).unwrap();
        assert_eq!(Partition::from_labels(&labels).num_blocks(), 1);

        let c = two_point_conditions(p, q, [[a1, a2], [a1, a2]]);
        assert!((c.same_weight - 0.0468).abs() < 1e-12);
        assert!((c.split_weight - 0.3888).abs() < 1e-12);
        assert!(!c.clusterer_same && c.classifier_same);
    }

    #[test]
    fn split_events_at_published_numbers() {
        let e = split_events(0.58, 0.35, [[5.0, 2.5], [1.8, 1.2]]);
        assert!(!e.a_holds);
        assert!((e.c_lhs - 0.4566).abs() < 1e-12);
        assert!((e.c_rhs - 0.1218).abs() < 1e-12);
        assert!(!e.c_holds);
    }

    #[test]
    fn overlap_mixture_has_no_divergence_point() {
        // the posterior is (0, ½, ½) on the overlap cell: the top state is
        // tied, so the strict inequality can never hold
        let p = overlap_mixture(0.1, 0.1).unwrap();
        let r = divergence_witness_iid_j3(&p, &Limits::default()).unwrap();
        assert!(!r.condition_holds);
        assert!(r.witness.is_none());
    }

    #[test]
    fn divergence_condition_cases() {
        assert!(divergence_condition(&[0.13, 0.147, 0.03]));
        assert!(!divergence_condition(&[0.0, 0.5, 0.5]));
        assert!(!divergence_condition(&[0.1, 0.0, 0.0]));
        assert!(!divergence_condition(&[0.1, 0.6, 0.2]));
    }

    #[test]
    fn bias_flip_examples() {
        let r = bias_flip_maximum_check(&[0.7]).unwrap();
        assert!(r.ok && (r.all_alpha - r.all_complement).abs() < 1e-15);
        assert!(bias_flip_maximum_check(&[0.6, 0.7, 0.9]).unwrap().ok);
        let r = bias_flip_maximum_check(&[0.5; 4]).unwrap();
        assert!(r.ok && (r.max_value - r.all_alpha).abs() < 1e-15);
    }

    #[test]
    fn mean_abs_deviation_small_case() {
        // Z ~ B(0.7): E|Z - 1/2| = 1/2
        assert!((mean_abs_deviation(&[0.7]) - 0.5).abs() < 1e-15);
        // two fair coins: |S-1| is 1 w.p. 1/2
        assert!((mean_abs_deviation(&[0.5, 0.5]) - 0.5).abs() < 1e-15);
    }

    #[test]
    fn limits_are_enforced() {
        let p = iid2([0.5, 0.5], vec![0.5, 0.5], vec![0.4, 0.6]);
        let y = Observations::Symbols(vec![0; 11]);
        assert!(matches!(
            joint_posterior(&p, &y, &Limits::default()),
            Err(Error::LimitExceeded { .. })
        ));
    }
}
