//! Parameter containers, validation and exact simulation.
//!
//! A model `θ = (ν, Q, f_1..f_J)` is held in [`HmmParams`]. States, symbols
//! and time indices are 0-based inside the library; the external file
//! formats (CSV, partition JSON) are 1-based.

use std::fmt;

use nalgebra::{DMatrix, DVector};
use rand::Rng as _;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng;

/// Tolerance on every probability-vector and row sum.
pub const SUM_TOL: f64 = 1e-12;

/// Reading of the second parameter of a Gaussian component in model files.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum GaussianSecondParam {
    #[default]
    Stddev,
    Variance,
}

impl GaussianSecondParam {
    pub fn to_stddev(self, scale: f64) -> f64 {
        match self {
            Self::Stddev => scale,
            Self::Variance => scale.sqrt(),
        }
    }

    pub fn from_stddev(self, stddev: f64) -> f64 {
        match self {
            Self::Stddev => stddev,
            Self::Variance => stddev * stddev,
        }
    }
}

impl std::str::FromStr for GaussianSecondParam {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "stddev" => Ok(Self::Stddev),
            "variance" => Ok(Self::Variance),
            other => Err(Error::InvalidArgument(format!(
                "gaussian_second_param must be stddev|variance, got {other:?}"
            ))),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct GaussianComponent {
    pub weight: f64,
    pub mean: f64,
    pub stddev: f64,
}

impl GaussianComponent {
    pub fn new(weight: f64, mean: f64, stddev: f64) -> Self {
        Self {
            weight,
            mean,
            stddev,
        }
    }

    fn pdf(&self, y: f64) -> f64 {
        let z = (y - self.mean) / self.stddev;
        self.weight * (-0.5 * z * z).exp() / (self.stddev * (2.0 * std::f64::consts::PI).sqrt())
    }
}

/// Emission law of one hidden state.
#[derive(Clone, Debug, PartialEq)]
pub enum EmissionModel {
    /// Probability mass function over symbols `0..pmf.len()`.
    Finite {
        pmf: Vec<f64>,
    },
    GaussianMixture {
        components: Vec<GaussianComponent>,
    },
    /// Piecewise-constant density on `[lo, hi]` with equal-width bins.
    Histogram {
        lo: f64,
        hi: f64,
        heights: Vec<f64>,
    },
}

/// A single observation.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum Obs {
    Symbol(usize),
    Real(f64),
}

/// An observation sequence `y_{1:n}`.
#[derive(Clone, Debug, PartialEq)]
pub enum Observations {
    Symbols(Vec<usize>),
    Reals(Vec<f64>),
}

impl Observations {
    pub fn len(&self) -> usize {
        match self {
            Self::Symbols(v) => v.len(),
            Self::Reals(v) => v.len(),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn get(&self, i: usize) -> Obs {
        match self {
            Self::Symbols(v) => Obs::Symbol(v[i]),
            Self::Reals(v) => Obs::Real(v[i]),
        }
    }

    pub fn as_reals(&self) -> Option<&[f64]> {
        match self {
            Self::Reals(v) => Some(v),
            Self::Symbols(_) => None,
        }
    }

    pub fn as_symbols(&self) -> Option<&[usize]> {
        match self {
            Self::Symbols(v) => Some(v),
            Self::Reals(_) => None,
        }
    }

    /// Applies the index permutation `perm` (new position `k` holds old `perm[k]`).
    pub fn permuted(&self, perm: &[usize]) -> Self {
        match self {
            Self::Symbols(v) => Self::Symbols(perm.iter().map(|&p| v[p]).collect()),
            Self::Reals(v) => Self::Reals(perm.iter().map(|&p| v[p]).collect()),
        }
    }
}

/// Where observations live: a finite alphabet or the real line.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ObservationSpace {
    Finite { size: usize },
    Real,
}

impl EmissionModel {
    pub fn density(&self, y: Obs) -> f64 {
        match (self, y) {
            (Self::Finite { pmf }, Obs::Symbol(k)) => pmf.get(k).copied().unwrap_or(0.0),
            (Self::GaussianMixture { components }, Obs::Real(y)) => {
                components.iter().map(|c| c.pdf(y)).sum()
            }
            (Self::Histogram { lo, hi, heights }, Obs::Real(y)) => {
                if !(y >= *lo && y <= *hi) {
                    return 0.0;
                }
                let d = heights.len();
                let k = (((y - lo) / (hi - lo)) * d as f64).floor() as usize;
                heights[k.min(d - 1)]
            }
            _ => 0.0,
        }
    }

    pub fn space(&self) -> ObservationSpace {
        match self {
            Self::Finite { pmf } => ObservationSpace::Finite { size: pmf.len() },
            _ => ObservationSpace::Real,
        }
    }

    pub fn sample(&self, rng: &mut rng::Rng) -> Obs {
        match self {
            Self::Finite { pmf } => Obs::Symbol(sample_categorical(pmf, rng)),
            Self::GaussianMixture { components } => {
                let w: Vec<f64> = components.iter().map(|c| c.weight).collect();
                let c = components[sample_categorical(&w, rng)];
                let normal = Normal::new(c.mean, c.stddev).expect("validated stddev");
                Obs::Real(normal.sample(rng))
            }
            Self::Histogram { lo, hi, heights } => {
                let k = sample_categorical(heights, rng);
                let w = (hi - lo) / heights.len() as f64;
                Obs::Real(lo + w * (k as f64 + rng.random::<f64>()))
            }
        }
    }

    fn violations(&self, state: usize, out: &mut Vec<Violation>) {
        match self {
            Self::Finite { pmf } => {
                check_prob_vector(pmf, &format!("emission {} pmf", state + 1), out);
            }
            Self::GaussianMixture { components } => {
                if components.is_empty() {
                    out.push(Violation::new(
                        format!("emission {}", state + 1),
                        "no components",
                    ));
                }
                for (k, c) in components.iter().enumerate() {
                    if !(c.stddev > 0.0 && c.stddev.is_finite()) {
                        out.push(Violation::new(
                            format!("emission {} component {}", state + 1, k + 1),
                            format!("stddev {} not > 0", c.stddev),
                        ));
                    }
                    if !c.mean.is_finite() {
                        out.push(Violation::new(
                            format!("emission {} component {}", state + 1, k + 1),
                            format!("mean {} not finite", c.mean),
                        ));
                    }
                }
                let w: Vec<f64> = components.iter().map(|c| c.weight).collect();
                check_prob_vector(&w, &format!("emission {} weights", state + 1), out);
            }
            Self::Histogram { lo, hi, heights } => {
                let what = format!("emission {} histogram", state + 1);
                if !(hi > lo) || heights.is_empty() {
                    out.push(Violation::new(what, format!("empty support [{lo}, {hi}]")));
                    return;
                }
                if let Some((k, h)) = heights.iter().enumerate().find(|(_, h)| !(**h >= 0.0)) {
                    out.push(Violation::new(
                        what.clone(),
                        format!("height {} = {h} < 0", k + 1),
                    ));
                }
                let mass: f64 = heights.iter().sum::<f64>() * (hi - lo) / heights.len() as f64;
                if (mass - 1.0).abs() > SUM_TOL {
                    out.push(Violation::new(what, format!("integrates to {mass}, not 1")));
                }
            }
        }
    }

    /// `[lo, hi]` intervals outside which the density is (numerically) zero,
    /// plus interior breakpoints where it is discontinuous.
    pub(crate) fn support_pieces(&self) -> Vec<(f64, f64)> {
        match self {
            Self::Finite { .. } => Vec::new(),
            Self::GaussianMixture { components } => components
                .iter()
                .filter(|c| c.weight > 0.0)
                .map(|c| (c.mean - 8.0 * c.stddev, c.mean + 8.0 * c.stddev))
                .collect(),
            Self::Histogram { lo, hi, heights } => {
                let d = heights.len();
                let w = (hi - lo) / d as f64;
                (0..d)
                    .filter(|&k| heights[k] > 0.0)
                    .map(|k| {
                        (
                            lo + w * k as f64,
                            if k + 1 == d {
                                *hi
                            } else {
                                lo + w * (k + 1) as f64
                            },
                        )
                    })
                    .collect()
            }
        }
    }
}

fn sample_categorical(weights: &[f64], rng: &mut rng::Rng) -> usize {
    let total: f64 = weights.iter().sum();
    let u = rng.random::<f64>() * total;
    let mut acc = 0.0;
    for (k, w) in weights.iter().enumerate() {
        acc += w;
        if u < acc {
            return k;
        }
    }
    // u landed on the rounding slack: last positive weight
    weights.iter().rposition(|&w| w > 0.0).unwrap_or(0)
}

/// One invariant violation found by [`HmmParams::validate`].
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Violation {
    pub location: String,
    pub message: String,
}

impl Violation {
    fn new(location: impl Into<String>, message: impl Into<String>) -> Self {
        Self {
            location: location.into(),
            message: message.into(),
        }
    }
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}: {}", self.location, self.message)
    }
}

fn check_prob_vector(v: &[f64], what: &str, out: &mut Vec<Violation>) {
    if v.is_empty() {
        out.push(Violation::new(what, "empty"));
        return;
    }
    for (k, p) in v.iter().enumerate() {
        if !(*p >= 0.0) || !p.is_finite() {
            out.push(Violation::new(
                what,
                format!("entry {} = {p} is negative or not finite", k + 1),
            ));
        }
    }
    let s: f64 = v.iter().sum();
    if (s - 1.0).abs() > SUM_TOL {
        out.push(Violation::new(what, format!("sums to {s}, not 1")));
    }
}

/// `θ = (ν, Q, f_1..f_J)`.
#[derive(Clone, Debug, PartialEq)]
pub struct HmmParams {
    pub nu: Vec<f64>,
    /// Row-stochastic transition matrix, `transition[x][x']`.
    pub transition: Vec<Vec<f64>>,
    pub emissions: Vec<EmissionModel>,
}

impl HmmParams {
    /// Builds and validates.
    pub fn new(
        nu: Vec<f64>,
        transition: Vec<Vec<f64>>,
        emissions: Vec<EmissionModel>,
    ) -> Result<Self> {
        let p = Self {
            nu,
            transition,
            emissions,
        };
        p.validate().map_err(Error::InvalidParams)?;
        Ok(p)
    }

    /// Mixture model with independent labels: every row of `Q` equals `ν`.
    pub fn iid(weights: Vec<f64>, emissions: Vec<EmissionModel>) -> Result<Self> {
        let q = vec![weights.clone(); weights.len()];
        Self::new(weights, q, emissions)
    }

    /// Stationary chain: `ν` is the stationary law of `Q`.
    pub fn stationary(transition: Vec<Vec<f64>>, emissions: Vec<EmissionModel>) -> Result<Self> {
        let nu = stationary_distribution(&transition)?;
        Self::new(nu, transition, emissions)
    }

    pub fn num_states(&self) -> usize {
        self.nu.len()
    }

    /// Smallest transition probability.
    pub fn delta(&self) -> f64 {
        self.transition
            .iter()
            .flatten()
            .copied()
            .fold(f64::INFINITY, f64::min)
    }

    /// True iff every row of `Q` equals `ν` (independent labels).
    pub fn is_iid(&self) -> bool {
        self.transition.iter().all(|row| {
            row.iter()
                .zip(&self.nu)
                .all(|(a, b)| (a - b).abs() <= SUM_TOL)
        })
    }

    pub fn space(&self) -> ObservationSpace {
        self.emissions
            .first()
            .map(EmissionModel::space)
            .unwrap_or(ObservationSpace::Real)
    }

    /// All invariant violations; `Ok(())` iff none.
    pub fn validate(&self) -> std::result::Result<(), Vec<Violation>> {
        let mut out = Vec::new();
        let j = self.nu.len();
        if j == 0 {
            out.push(Violation::new("nu", "no states"));
        }
        check_prob_vector(&self.nu, "nu", &mut out);
        if self.transition.len() != j {
            out.push(Violation::new(
                "transition",
                format!("{} rows, expected {j}", self.transition.len()),
            ));
        }
        for (r, row) in self.transition.iter().enumerate() {
            if row.len() != j {
                out.push(Violation::new(
                    format!("transition row {}", r + 1),
                    format!("{} entries, expected {j}", row.len()),
                ));
                continue;
            }
            let mut row_errs = Vec::new();
            check_prob_vector(row, "", &mut row_errs);
            if !row_errs.is_empty() {
                let detail = row_errs
                    .iter()
                    .map(|v| v.message.clone())
                    .collect::<Vec<_>>()
                    .join(", ");
                out.push(Violation::new(
                    format!("transition row {}", r + 1),
                    format!("row {} not stochastic ({detail})", r + 1),
                ));
            }
        }
        if self.emissions.len() != j {
            out.push(Violation::new(
                "emissions",
                format!("{} emission models, expected {j}", self.emissions.len()),
            ));
        }
        for (x, e) in self.emissions.iter().enumerate() {
            e.violations(x, &mut out);
        }
        if let Some(first) = self.emissions.first() {
            let space = first.space();
            for (x, e) in self.emissions.iter().enumerate().skip(1) {
                if e.space() != space {
                    out.push(Violation::new(
                        format!("emission {}", x + 1),
                        format!(
                            "observation space {:?} differs from state 1's {:?}",
                            e.space(),
                            space
                        ),
                    ));
                }
            }
        }
        if out.is_empty() {
            Ok(())
        } else {
            Err(out)
        }
    }

    /// `θ^τ`: `ν^τ_x = ν_{τ(x)}`, `Q^τ_{x,x'} = Q_{τ(x),τ(x')}`, `f^τ_x = f_{τ(x)}`.
    pub fn permuted(&self, tau: &[usize]) -> Self {
        Self {
            nu: tau.iter().map(|&t| self.nu[t]).collect(),
            transition: tau
                .iter()
                .map(|&a| tau.iter().map(|&b| self.transition[a][b]).collect())
                .collect(),
            emissions: tau.iter().map(|&t| self.emissions[t].clone()).collect(),
        }
    }

    /// Densities of every state at `y`.
    pub fn densities_at(&self, y: Obs) -> Vec<f64> {
        self.emissions.iter().map(|e| e.density(y)).collect()
    }

    /// Marginal laws `P(X_i = ·)` for `i = 1..n` (`ν Q^{i-1}`).
    pub fn state_marginals(&self, n: usize) -> Vec<Vec<f64>> {
        let j = self.num_states();
        let mut out = Vec::with_capacity(n);
        let mut cur = self.nu.clone();
        for _ in 0..n {
            out.push(cur.clone());
            let mut next = vec![0.0; j];
            for a in 0..j {
                for b in 0..j {
                    next[b] += cur[a] * self.transition[a][b];
                }
            }
            cur = next;
        }
        out
    }
}

/// Solves `πQ = π`, `Σπ = 1`.
pub fn stationary_distribution(q: &[Vec<f64>]) -> Result<Vec<f64>> {
    let j = q.len();
    if j == 0 || q.iter().any(|r| r.len() != j) {
        return Err(Error::DimensionMismatch(
            "transition matrix must be square".into(),
        ));
    }
    // (Q^T - I) π = 0 with the last equation replaced by Σπ = 1
    let mut a = DMatrix::<f64>::zeros(j, j);
    for r in 0..j {
        for c in 0..j {
            a[(r, c)] = q[c][r] - if r == c { 1.0 } else { 0.0 };
        }
    }
    for c in 0..j {
        a[(j - 1, c)] = 1.0;
    }
    let mut b = DVector::<f64>::zeros(j);
    b[j - 1] = 1.0;
    let pi = a.lu().solve(&b).ok_or_else(|| {
        Error::NotConverged("stationary distribution: transition matrix is reducible".into())
    })?;
    let pi: Vec<f64> = pi.iter().copied().collect();
    let residual = (0..j)
        .map(|c| ((0..j).map(|r| pi[r] * q[r][c]).sum::<f64>() - pi[c]).abs())
        .fold(0.0, f64::max);
    if !(residual < 1e-10) || pi.iter().any(|&p| p < -1e-12 || !p.is_finite()) {
        return Err(Error::NotConverged(format!(
            "stationary distribution: residual {residual:e}; transition matrix is reducible"
        )));
    }
    Ok(pi.into_iter().map(|p| p.max(0.0)).collect())
}

/// A simulated path of hidden states and observations.
#[derive(Clone, Debug, PartialEq)]
pub struct Trajectory {
    pub x: Vec<usize>,
    pub y: Observations,
    pub seed: u64,
}

impl Trajectory {
    pub fn len(&self) -> usize {
        self.x.len()
    }

    pub fn is_empty(&self) -> bool {
        self.x.is_empty()
    }
}

/// Draws `X_1 ~ ν`, `X_{i+1} | X_i ~ Q(X_i, ·)`, `Y_i | X_i ~ f_{X_i}`.
pub fn sample_trajectory(params: &HmmParams, n: usize, seed: u64) -> Result<Trajectory> {
    params.validate().map_err(Error::InvalidParams)?;
    if n == 0 {
        return Err(Error::InvalidArgument(
            "trajectory length must be >= 1".into(),
        ));
    }
    let mut rng = rng::seeded(seed);
    let mut x = Vec::with_capacity(n);
    let mut state = sample_categorical(&params.nu, &mut rng);
    x.push(state);
    for _ in 1..n {
        state = sample_categorical(&params.transition[state], &mut rng);
        x.push(state);
    }
    let y = match params.space() {
        ObservationSpace::Finite { .. } => Observations::Symbols(
            x.iter()
                .map(|&s| match params.emissions[s].sample(&mut rng) {
                    Obs::Symbol(k) => k,
                    Obs::Real(_) => unreachable!(),
                })
                .collect(),
        ),
        ObservationSpace::Real => Observations::Reals(
            x.iter()
                .map(|&s| match params.emissions[s].sample(&mut rng) {
                    Obs::Real(v) => v,
                    Obs::Symbol(_) => unreachable!(),
                })
                .collect(),
        ),
    };
    Ok(Trajectory { x, y, seed })
}

/// `n × J` matrix of emission densities `f_x(y_i)`, row-major.
#[derive(Clone, Debug, PartialEq)]
pub struct Likelihoods {
    pub n: usize,
    pub j: usize,
    pub values: Vec<f64>,
}

impl Likelihoods {
    pub fn new(n: usize, j: usize, values: Vec<f64>) -> Self {
        assert_eq!(values.len(), n * j);
        Self { n, j, values }
    }

    pub fn from_params(params: &HmmParams, y: &Observations) -> Self {
        let j = params.num_states();
        let mut values = Vec::with_capacity(y.len() * j);
        for i in 0..y.len() {
            let obs = y.get(i);
            values.extend(params.emissions.iter().map(|e| e.density(obs)));
        }
        Self::new(y.len(), j, values)
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.values[i * self.j..(i + 1) * self.j]
    }
}
