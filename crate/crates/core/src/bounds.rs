//! Closed-form evaluators for the separation functional `Λ` and for the
//! bounds relating the Bayes risks of classification and clustering.

use std::f64::consts::{E, PI};

use crate::error::{Error, Result};
use crate::inference::{argmax, smooth, PosteriorTable};
use crate::model::{EmissionModel, HmmParams, Obs, ObservationSpace, Trajectory};
use crate::quadrature::{Grid, DEFAULT_NODES};

/// A quadrature result with an error estimate (difference between the
/// default grid and a grid of half the size).
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Quadrature {
    pub value: f64,
    pub error_estimate: f64,
}

fn integrate_over(emissions: &[EmissionModel], f: impl Fn(f64) -> f64) -> Quadrature {
    let fine = Grid::for_emissions(emissions, DEFAULT_NODES).integrate(&f);
    let coarse = Grid::for_emissions(emissions, DEFAULT_NODES / 2).integrate(&f);
    Quadrature {
        value: fine,
        error_estimate: (fine - coarse).abs(),
    }
}

fn sum_over(emissions: &[EmissionModel], size: usize, f: impl Fn(Obs) -> f64) -> Quadrature {
    let _ = emissions;
    Quadrature {
        value: (0..size).map(|y| f(Obs::Symbol(y))).sum(),
        error_estimate: 0.0,
    }
}

fn common_space(emissions: &[EmissionModel]) -> Result<ObservationSpace> {
    let first = emissions
        .first()
        .ok_or_else(|| Error::InvalidArgument("no emission models".into()))?
        .space();
    if emissions.iter().any(|e| e.space() != first) {
        return Err(Error::DimensionMismatch(
            "emissions live on different spaces".into(),
        ));
    }
    Ok(first)
}

/// Integral of `y ↦ g(f_1(y), .., f_J(y))` over the observation space.
fn integrate_densities(
    emissions: &[EmissionModel],
    g: impl Fn(&[f64]) -> f64,
) -> Result<Quadrature> {
    let eval = |y: Obs| g(&emissions.iter().map(|e| e.density(y)).collect::<Vec<_>>());
    Ok(match common_space(emissions)? {
        ObservationSpace::Finite { size } => sum_over(emissions, size, eval),
        ObservationSpace::Real => integrate_over(emissions, |y| eval(Obs::Real(y))),
    })
}

fn sum_minus_max(w: &[f64]) -> f64 {
    w.iter().sum::<f64>() - w.iter().copied().fold(0.0, f64::max)
}

/// `Λ = ∫ min_{x₀} Σ_{x≠x₀} f_x`.
pub fn lambda_separation(emissions: &[EmissionModel]) -> Result<Quadrature> {
    integrate_densities(emissions, sum_minus_max)
}

/// `½ ∫ |f_1 − f_2|`.
pub fn total_variation(a: &EmissionModel, b: &EmissionModel) -> Result<Quadrature> {
    let pair = [a.clone(), b.clone()];
    integrate_densities(&pair, |f| 0.5 * (f[0] - f[1]).abs())
}

/// Bayes classification risk with independent labels,
/// `∫ (Σ_x ν_x f_x − max_x ν_x f_x)`; it does not depend on `n`.
pub fn iid_class_risk(params: &HmmParams) -> Result<Quadrature> {
    if !params.is_iid() {
        return Err(Error::InvalidArgument("labels are not independent".into()));
    }
    let nu = params.nu.clone();
    integrate_densities(&params.emissions, move |f| {
        let w: Vec<f64> = f.iter().zip(&nu).map(|(a, b)| a * b).collect();
        sum_minus_max(&w)
    })
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Sandwich {
    pub lo: f64,
    pub hi: f64,
}

/// Bounds on the Bayes classification risk in terms of `Λ` and `δ`:
/// `(δΛ, (1−(J−1)δ)Λ)` with independent labels,
/// `(δ²Λ/(1−(J−1)δ), (1−(J−1)δ)Λ)` otherwise.
pub fn sandwich_from_lambda(delta: f64, j: usize, iid: bool, lambda: f64) -> Result<Sandwich> {
    if !(delta > 0.0) {
        return Err(Error::InvalidArgument(format!(
            "needs delta > 0, got {delta}"
        )));
    }
    let c = 1.0 - (j as f64 - 1.0) * delta;
    let lo = if iid {
        delta * lambda
    } else {
        delta * delta * lambda / c
    };
    Ok(Sandwich { lo, hi: c * lambda })
}

pub fn classification_sandwich(params: &HmmParams) -> Result<Sandwich> {
    let lambda = lambda_separation(&params.emissions)?.value;
    sandwich_from_lambda(params.delta(), params.num_states(), params.is_iid(), lambda)
}

fn check_eps(eps: f64) -> Result<()> {
    if !(0.0..=0.5).contains(&eps) {
        return Err(Error::InvalidArgument(format!(
            "epsilon must lie in [0, 1/2), got {eps}"
        )));
    }
    Ok(())
}

fn log_ratio(eps: f64) -> f64 {
    ((1.0 + 2.0 * eps) / (1.0 - 2.0 * eps)).ln()
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct GapBounds {
    pub upper: f64,
    /// The lower bound with its unknown universal constant set to 1; only
    /// reported for `n ≥ 100` and never a certified bound.
    pub lower_b1: Option<f64>,
}

/// Bounds on class-risk − clust-risk for two-state independent labels,
/// with `ε = ½ − class-risk`. `ε = ½` (zero risk) is accepted as the limit.
pub fn gap_bounds_iid_j2(eps: f64, n: usize) -> Result<GapBounds> {
    check_eps(eps)?;
    if n < 2 {
        return Err(Error::InvalidArgument("needs n >= 2".into()));
    }
    let nf = n as f64;
    let base = 1.0 - 4.0 * eps * eps;
    let denom = nf / 2.0 * log_ratio(eps);
    let upper = (base.powf(nf / 2.0) / denom).min((PI / (2.0 * nf)).sqrt());
    let lower_b1 = (n >= 100).then(|| {
        let expo = nf / 2.0 * (1.0 + 6.8 / (nf.sqrt() * eps).max(1.0));
        (base.powf(expo) / denom).min(1.0 / nf.sqrt())
    });
    Ok(GapBounds { upper, lower_b1 })
}

/// `α_n = 2 min(2(1+ε)(1−4ε²)^{(n−2)/2} / (n log((1+2ε)/(1−2ε))), √(π/2n)/(1−2ε))`.
pub fn equivalence_factor_alpha_n(eps: f64, n: usize) -> Result<f64> {
    check_eps(eps)?;
    if n < 2 {
        return Err(Error::InvalidArgument("needs n >= 2".into()));
    }
    let nf = n as f64;
    let first =
        2.0 * (1.0 + eps) * (1.0 - 4.0 * eps * eps).powf((nf - 2.0) / 2.0) / (nf * log_ratio(eps));
    let second = (PI / (2.0 * nf)).sqrt() / (1.0 - 2.0 * eps);
    Ok(2.0 * first.min(second))
}

fn ln_factorial(j: usize) -> f64 {
    (2..=j).map(|k| (k as f64).ln()).sum()
}

/// `√(log(J!)/(2n))`.
fn permutation_term(j: usize, n: usize) -> f64 {
    (ln_factorial(j) / (2.0 * n as f64)).sqrt()
}

/// Constants of the lower bounds for independent labels.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct IidLowerBounds {
    /// `min_{j≠k} (ν_j + ν_k)`.
    pub beta: f64,
    /// `(4e/β) [√(log J!/(2n))]^{1 − 4/(nβ)}`.
    pub xi_n: f64,
    /// `√(log J!/(2n))`.
    pub permutation_term: f64,
    /// `J² e^{−nβ/8}`.
    pub tail: f64,
}

impl IidLowerBounds {
    /// `class − √(log J!/(2n))`.
    pub fn simple_lb(&self, class_risk: f64) -> f64 {
        class_risk - self.permutation_term
    }

    /// `(1 − ξ_n) class − J² e^{−nβ/8}`.
    pub fn refined_lb(&self, class_risk: f64) -> f64 {
        (1.0 - self.xi_n) * class_risk - self.tail
    }
}

fn pair_min(p: &[f64]) -> f64 {
    let mut best = f64::INFINITY;
    for a in 0..p.len() {
        for b in a + 1..p.len() {
            best = best.min(p[a] + p[b]);
        }
    }
    best
}

pub fn iid_bounds_j_gt2(params: &HmmParams, n: usize) -> Result<IidLowerBounds> {
    let j = params.num_states();
    if j < 2 || n == 0 {
        return Err(Error::InvalidArgument(format!(
            "needs J >= 2 and n >= 1, got J={j}, n={n}"
        )));
    }
    let beta = pair_min(&params.nu);
    let nf = n as f64;
    let pt = permutation_term(j, n);
    Ok(IidLowerBounds {
        beta,
        xi_n: 4.0 * E / beta * pt.powf(1.0 - 4.0 / (nf * beta)),
        permutation_term: pt,
        tail: (j * j) as f64 * (-nf * beta / 8.0).exp(),
    })
}

/// `min_{i ≤ n, j≠k} P(X_i ∈ {j, k})` by propagating `ν Q^{i−1}`; the
/// propagation stops early once the marginal law is stationary.
pub fn beta_over_time(params: &HmmParams, n: usize) -> f64 {
    let j = params.num_states();
    let mut cur = params.nu.clone();
    let mut beta = pair_min(&cur);
    for _ in 1..n {
        let mut next = vec![0.0; j];
        for a in 0..j {
            for b in 0..j {
                next[b] += cur[a] * params.transition[a][b];
            }
        }
        let moved = next
            .iter()
            .zip(&cur)
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max);
        cur = next;
        beta = beta.min(pair_min(&cur));
        if moved < 1e-17 {
            break;
        }
    }
    beta
}

/// Constants of the lower bounds for dependent labels.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct HmmBounds {
    pub delta: f64,
    /// `(1 − Jδ)/(1 − (J−1)δ)`.
    pub rho0: f64,
    pub beta: f64,
    /// Two states: `2e((1−δ)/δ)^4 [((1−δ)/δ) √(log 2/(2n))]^{1−2/n}`.
    pub alpha_tilde_n: Option<f64>,
    /// `5/(β(1−ρ₀)) √(log J!/(2n))`.
    pub xi_tilde_n: f64,
    /// `(1/(1−ρ₀)) √(log J!/(2n))`, subtracted in the simple lower bound.
    pub simple_term: f64,
    /// `(J²+1) e^{−2n(1−ρ₀)²β²/25}`.
    pub tail: f64,
}

pub fn hmm_bounds(params: &HmmParams, n: usize) -> Result<HmmBounds> {
    let j = params.num_states();
    let delta = params.delta();
    if !(delta > 0.0) || n == 0 {
        return Err(Error::InvalidArgument(format!(
            "needs delta > 0 and n >= 1, got delta={delta}, n={n}"
        )));
    }
    let (jf, nf) = (j as f64, n as f64);
    let rho0 = (1.0 - jf * delta) / (1.0 - (jf - 1.0) * delta);
    let beta = beta_over_time(params, n);
    let r = (1.0 - delta) / delta;
    let alpha_tilde_n = (j == 2)
        .then(|| 2.0 * E * r.powi(4) * (r * (2f64.ln() / (2.0 * nf)).sqrt()).powf(1.0 - 2.0 / nf));
    let pt = permutation_term(j, n);
    Ok(HmmBounds {
        delta,
        rho0,
        beta,
        alpha_tilde_n,
        xi_tilde_n: 5.0 / (beta * (1.0 - rho0)) * pt,
        simple_term: pt / (1.0 - rho0),
        tail: (jf * jf + 1.0) * (-2.0 * nf * (1.0 - rho0).powi(2) * beta * beta / 25.0).exp(),
    })
}

/// `R_clust(π_n ∘ h*) ≤ factor · (inf_g R_clust + additive)`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct NearOptimality {
    pub factor: f64,
    pub additive: f64,
}

/// `1/(1 − a)`, infinite once the bound is vacuous.
fn inverse_gap(a: f64) -> f64 {
    if a < 1.0 {
        1.0 / (1.0 - a)
    } else {
        f64::INFINITY
    }
}

/// Envelope on the clustering risk of the Bayes classifier. For two states
/// with independent labels `ε` (half minus the classification risk) is
/// required.
pub fn near_optimality_factors(
    params: &HmmParams,
    n: usize,
    eps: Option<f64>,
) -> Result<NearOptimality> {
    let j = params.num_states();
    if params.is_iid() {
        if j == 2 {
            let eps = eps
                .ok_or_else(|| Error::InvalidArgument("two-state envelope needs epsilon".into()))?;
            let a = equivalence_factor_alpha_n(eps, n)?;
            return Ok(NearOptimality {
                factor: inverse_gap(a),
                additive: 0.0,
            });
        }
        let b = iid_bounds_j_gt2(params, n)?;
        Ok(NearOptimality {
            factor: inverse_gap(b.xi_n),
            additive: b.tail,
        })
    } else {
        let b = hmm_bounds(params, n)?;
        if let Some(a) = b.alpha_tilde_n {
            return Ok(NearOptimality {
                factor: inverse_gap(a),
                additive: 0.0,
            });
        }
        Ok(NearOptimality {
            factor: inverse_gap(b.xi_tilde_n),
            additive: b.tail,
        })
    }
}

/// Bounds on the Bayes clustering risk in terms of `Λ`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ClusteringSandwich {
    pub lo: f64,
    pub hi: f64,
    pub lo_formula: &'static str,
    /// Whether the side conditions of the lower bound hold (always true
    /// for two states).
    pub conditions_hold: bool,
}

/// `exponent_constant` is the denominator in the exponent of the
/// dependent, `J > 2` side condition (`2n(1−ρ₀)²β²/c`).
pub fn clustering_sandwich(
    params: &HmmParams,
    n: usize,
    lambda: f64,
    eps: Option<f64>,
    exponent_constant: f64,
) -> Result<ClusteringSandwich> {
    let j = params.num_states();
    let jf = j as f64;
    let delta = params.delta();
    if !(delta > 0.0) {
        return Err(Error::InvalidArgument("needs delta > 0".into()));
    }
    let nf = n as f64;
    if j == 2 {
        let hi = (1.0 - delta) * lambda;
        let lo = if params.is_iid() {
            let eps = eps
                .ok_or_else(|| Error::InvalidArgument("two-state sandwich needs epsilon".into()))?;
            (1.0 - equivalence_factor_alpha_n(eps, n)?) * delta * lambda
        } else {
            let a = hmm_bounds(params, n)?.alpha_tilde_n.expect("two states");
            delta * delta * (1.0 - a) / (1.0 - delta) * lambda
        };
        return Ok(ClusteringSandwich {
            lo,
            hi,
            lo_formula: if params.is_iid() {
                "(1 - alpha_n) delta Lambda"
            } else {
                "(1 - alpha_tilde_n) delta^2 Lambda / (1 - delta)"
            },
            conditions_hold: true,
        });
    }
    let c = 1.0 - (jf - 1.0) * delta;
    let hi = c * lambda;
    if params.is_iid() {
        let b = iid_bounds_j_gt2(params, n)?;
        let ok = delta * lambda >= 4.0 * jf * jf * (-nf * b.beta / 8.0).exp() && b.xi_n <= 0.5;
        Ok(ClusteringSandwich {
            lo: delta / 4.0 * lambda,
            hi,
            lo_formula: "delta Lambda / 4",
            conditions_hold: ok,
        })
    } else {
        let b = hmm_bounds(params, n)?;
        let tail = (jf * jf + 1.0)
            * (-2.0 * nf * (1.0 - b.rho0).powi(2) * b.beta * b.beta / exponent_constant).exp();
        let ok = delta * delta * lambda >= 4.0 * c * tail && b.xi_tilde_n <= 0.5;
        Ok(ClusteringSandwich {
            lo: delta * delta / (4.0 * (1.0 - delta)) * lambda,
            hi,
            lo_formula: "delta^2 Lambda / (4(1 - delta))",
            conditions_hold: ok,
        })
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SnrBounds {
    pub snr: f64,
    /// `δ` with independent labels, `δ²/(1−δ)` otherwise.
    pub alpha: f64,
    /// `(α/2) e^{−SNR/4}`.
    pub lo: f64,
    /// `(1−δ) e^{−SNR/8}`.
    pub hi: f64,
}

/// Two Gaussian emissions with common variance `sigma2`.
pub fn gaussian_snr_bounds(
    mu0: f64,
    mu1: f64,
    sigma2: f64,
    delta: f64,
    dependent: bool,
) -> Result<SnrBounds> {
    if !(sigma2 > 0.0) {
        return Err(Error::InvalidArgument(format!(
            "variance must be > 0, got {sigma2}"
        )));
    }
    if !(delta > 0.0 && delta <= 0.5) {
        return Err(Error::InvalidArgument(format!(
            "two-state delta must lie in (0, 1/2], got {delta}"
        )));
    }
    let snr = (mu0 - mu1).powi(2) / sigma2;
    let alpha = if dependent {
        delta * delta / (1.0 - delta)
    } else {
        delta
    };
    Ok(SnrBounds {
        snr,
        alpha,
        lo: alpha / 2.0 * (-snr / 4.0).exp(),
        hi: (1.0 - delta) * (-snr / 8.0).exp(),
    })
}

/// `Λ` of two Gaussians with equal variance, `2Φ(−√SNR/2)`.
pub fn gaussian_lambda(snr: f64) -> f64 {
    libm::erfc(snr.sqrt() / 2.0 / std::f64::consts::SQRT_2)
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct FastRateReport {
    /// Monte Carlo classification risk of the plug-in classifier.
    pub lhs: f64,
    /// Standard error of `lhs`.
    pub lhs_se: f64,
    /// Monte Carlo estimate of the Bayes classification risk,
    /// `(1/n) Σ (1 − max_x φ_{θ,i|n}(x))` averaged over trajectories.
    pub bayes_risk: f64,
    /// `(1/n) Σ 1{TV_i > γ}` averaged over trajectories.
    pub tv_term: f64,
    /// `bayes_risk/(½ − γ) + tv_term`.
    pub rhs: f64,
    /// `lhs ≤ rhs + 3 · lhs_se`.
    pub holds: bool,
}

/// Both sides of the plug-in classification risk inequality, estimated on
/// trajectories simulated from `params`. Labels of `estimate` are taken
/// as they are (no realignment).
pub fn fastrate_diagnostic(
    params: &HmmParams,
    estimate: &HmmParams,
    trajectories: &[Trajectory],
    gamma: f64,
) -> Result<FastRateReport> {
    if !(gamma > 0.0 && gamma < 0.5) {
        return Err(Error::InvalidArgument(format!(
            "gamma must lie in (0, 1/2), got {gamma}"
        )));
    }
    if trajectories.is_empty() {
        return Err(Error::InvalidArgument("no trajectories".into()));
    }
    let mut errs = Vec::with_capacity(trajectories.len());
    let (mut bayes, mut tv) = (0.0, 0.0);
    for t in trajectories {
        let truth: PosteriorTable = smooth(params, &t.y)?;
        let plug = smooth(estimate, &t.y)?;
        let n = t.len() as f64;
        let miss = plug
            .argmax_labels()
            .iter()
            .zip(&t.x)
            .filter(|(a, b)| a != b)
            .count() as f64;
        errs.push(miss / n);
        bayes += truth.rows().map(|r| 1.0 - r[argmax(r)]).sum::<f64>() / n;
        let over = crate::inference::tv_rows(&truth, &plug)
            .iter()
            .filter(|&&d| d > gamma)
            .count() as f64;
        tv += over / n;
    }
    let m = trajectories.len() as f64;
    let lhs = errs.iter().sum::<f64>() / m;
    let lhs_se = if errs.len() > 1 {
        (errs.iter().map(|e| (e - lhs).powi(2)).sum::<f64>() / (m - 1.0) / m).sqrt()
    } else {
        0.0
    };
    let bayes_risk = bayes / m;
    let tv_term = tv / m;
    let rhs = bayes_risk / (0.5 - gamma) + tv_term;
    Ok(FastRateReport {
        lhs,
        lhs_se,
        bayes_risk,
        tv_term,
        rhs,
        holds: lhs <= rhs + 3.0 * lhs_se,
    })
}

/// One named value of a [`BoundReport`] with the expression it evaluates.
#[derive(Clone, Debug, PartialEq)]
pub struct BoundEntry {
    pub name: &'static str,
    pub value: f64,
    pub formula: &'static str,
}

/// Every constant and bound applicable to a model at sample size `n`.
#[derive(Clone, Debug, PartialEq, Default)]
pub struct BoundReport {
    pub entries: Vec<BoundEntry>,
    pub flags: Vec<(&'static str, bool)>,
}

impl BoundReport {
    fn push(&mut self, name: &'static str, value: f64, formula: &'static str) {
        self.entries.push(BoundEntry {
            name,
            value,
            formula,
        });
    }

    pub fn get(&self, name: &str) -> Option<f64> {
        self.entries
            .iter()
            .find(|e| e.name == name)
            .map(|e| e.value)
    }

    pub fn flag(&self, name: &str) -> Option<bool> {
        self.flags.iter().find(|f| f.0 == name).map(|f| f.1)
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct BoundOptions {
    /// Bayes classification risk when known; with independent labels it is
    /// computed by quadrature if absent.
    pub class_risk: Option<f64>,
    /// Exponent denominator of the dependent `J > 2` clustering sandwich
    /// condition.
    pub exponent_constant: f64,
}

impl Default for BoundOptions {
    fn default() -> Self {
        Self {
            class_risk: None,
            exponent_constant: 15.0,
        }
    }
}

pub fn bound_report(params: &HmmParams, n: usize, opts: &BoundOptions) -> Result<BoundReport> {
    params.validate().map_err(Error::InvalidParams)?;
    if n == 0 {
        return Err(Error::InvalidArgument("n must be >= 1".into()));
    }
    let mut r = BoundReport::default();
    let j = params.num_states();
    let iid = params.is_iid();
    let delta = params.delta();
    let lambda = lambda_separation(&params.emissions)?;
    r.push("Lambda", lambda.value, "int min_x0 sum_{x!=x0} f_x");
    r.push(
        "Lambda_error_estimate",
        lambda.error_estimate,
        "|quadrature(N) - quadrature(N/2)|",
    );
    r.push("delta", delta, "min_{x,x'} Q(x,x')");
    r.flags.push(("iid", iid));

    let class_risk = match opts.class_risk {
        Some(c) => Some(c),
        None if iid => Some(iid_class_risk(params)?.value),
        None => None,
    };
    if let Some(c) = class_risk {
        r.push(
            "class_risk",
            c,
            "inf_h R_class (supplied, or int sum nu f - max nu f for independent labels)",
        );
    }
    let eps = class_risk.map(|c| (0.5 - c).clamp(0.0, 0.5));

    if delta > 0.0 {
        let s = sandwich_from_lambda(delta, j, iid, lambda.value)?;
        if iid {
            r.push("sandwich_lo", s.lo, "delta * Lambda");
        } else {
            r.push("sandwich_lo", s.lo, "delta^2 Lambda / (1 - (J-1) delta)");
        }
        r.push("sandwich_hi", s.hi, "(1 - (J-1) delta) Lambda");
    }

    if iid && j == 2 {
        if let Some(e) = eps {
            r.push("epsilon_n", e, "1/2 - inf_h R_class");
            if n >= 2 {
                let g = gap_bounds_iid_j2(e, n)?;
                r.push(
                    "gap_ub",
                    g.upper,
                    "min((1-4 eps^2)^(n/2) / ((n/2) log((1+2eps)/(1-2eps))), sqrt(pi/(2n)))",
                );
                if let Some(lb) = g.lower_b1 {
                    r.push(
                        "gap_lb_B1",
                        lb,
                        "B * min((1-4eps^2)^((n/2)(1+6.8/(1 v sqrt(n) eps))) / ((n/2) log((1+2eps)/(1-2eps))), 1/sqrt(n)) with B = 1 (unknown universal constant)",
                    );
                }
                let a = equivalence_factor_alpha_n(e, n)?;
                r.push(
                    "alpha_n",
                    a,
                    "2 min(2(1+eps)(1-4eps^2)^((n-2)/2) / (n log((1+2eps)/(1-2eps))), sqrt(pi/(2n))/(1-2eps))",
                );
                if a < 1.0 {
                    r.push("near_optimality_factor", 1.0 / (1.0 - a), "1/(1 - alpha_n)");
                }
            }
        }
    }
    if iid && j > 2 {
        let b = iid_bounds_j_gt2(params, n)?;
        r.push("beta", b.beta, "min_{j!=k} (nu_j + nu_k)");
        r.push(
            "xi_n",
            b.xi_n,
            "(4e/beta) [sqrt(log(J!)/(2n))]^(1 - 4/(n beta))",
        );
        r.push("iid_tail", b.tail, "J^2 exp(-n beta/8)");
        if let Some(c) = class_risk {
            r.push(
                "clust_lb_simple",
                b.simple_lb(c),
                "class_risk - sqrt(log(J!)/(2n))",
            );
            r.push(
                "clust_lb_refined",
                b.refined_lb(c),
                "(1 - xi_n) class_risk - J^2 exp(-n beta/8)",
            );
        }
        if b.xi_n < 1.0 {
            r.push(
                "near_optimality_factor",
                1.0 / (1.0 - b.xi_n),
                "1/(1 - xi_n)",
            );
        }
        r.push("near_optimality_additive", b.tail, "J^2 exp(-n beta/8)");
    }
    if !iid && delta > 0.0 {
        let b = hmm_bounds(params, n)?;
        r.push("rho0", b.rho0, "(1 - J delta)/(1 - (J-1) delta)");
        r.push("beta", b.beta, "min_{i<=n, j!=k} P(X_i in {j,k})");
        if let Some(a) = b.alpha_tilde_n {
            r.push(
                "alpha_tilde_n",
                a,
                "2e((1-delta)/delta)^4 [((1-delta)/delta) sqrt(log 2/(2n))]^(1 - 2/n)",
            );
            if a < 1.0 {
                r.push(
                    "near_optimality_factor",
                    1.0 / (1.0 - a),
                    "1/(1 - alpha_tilde_n)",
                );
            }
        } else {
            r.push(
                "xi_tilde_n",
                b.xi_tilde_n,
                "5/(beta(1-rho0)) sqrt(log(J!)/(2n))",
            );
            r.push("hmm_tail", b.tail, "(J^2+1) exp(-2n(1-rho0)^2 beta^2/25)");
            if let Some(c) = class_risk {
                r.push(
                    "clust_lb_simple",
                    c - b.simple_term,
                    "class_risk - sqrt(log(J!)/(2n))/(1-rho0)",
                );
                r.push(
                    "clust_lb_refined",
                    (1.0 - b.xi_tilde_n) * c - b.tail,
                    "(1 - xi_tilde_n) class_risk - (J^2+1) exp(-2n(1-rho0)^2 beta^2/25)",
                );
            }
            if b.xi_tilde_n < 1.0 {
                r.push(
                    "near_optimality_factor",
                    1.0 / (1.0 - b.xi_tilde_n),
                    "1/(1 - xi_tilde_n)",
                );
            }
            r.push(
                "near_optimality_additive",
                b.tail,
                "(J^2+1) exp(-2n(1-rho0)^2 beta^2/25)",
            );
        }
    }
    if delta > 0.0 && (j > 2 || !iid || eps.is_some()) && n >= 2 {
        let s = clustering_sandwich(params, n, lambda.value, eps, opts.exponent_constant)?;
        r.push("clust_sandwich_lo", s.lo, s.lo_formula);
        r.push("clust_sandwich_hi", s.hi, "(1 - (J-1) delta) Lambda");
        r.flags
            .push(("clust_sandwich_conditions_hold", s.conditions_hold));
    }
    if let Some((mu0, mu1, var)) = equal_variance_gaussians(params) {
        let s = gaussian_snr_bounds(mu0, mu1, var, delta, !iid)?;
        r.push("snr", s.snr, "(mu0 - mu1)^2 / sigma^2");
        r.push("snr_lo", s.lo, "(alpha(delta)/2) exp(-SNR/4)");
        r.push("snr_hi", s.hi, "(1 - delta) exp(-SNR/8)");
    }
    Ok(r)
}

fn equal_variance_gaussians(params: &HmmParams) -> Option<(f64, f64, f64)> {
    if params.num_states() != 2 || !(params.delta() > 0.0) {
        return None;
    }
    let single = |e: &EmissionModel| match e {
        EmissionModel::GaussianMixture { components } if components.len() == 1 => {
            Some((components[0].mean, components[0].stddev))
        }
        _ => None,
    };
    let (m0, s0) = single(&params.emissions[0])?;
    let (m1, s1) = single(&params.emissions[1])?;
    ((s0 - s1).abs() <= 1e-12 * s0).then_some((m0, m1, s0 * s0))
}
