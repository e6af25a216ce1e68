//! Nonparametric spectral estimation of `ν`, `Q` and the emission densities
//! from moments of three consecutive observations, with the density labels
//! tied to the labels of `Q̂`.
//!
//! Moments use the `n − 2` windows `(Y_s, Y_{s+1}, Y_{s+2})` available in a
//! series of length `n`.

use itertools::Itertools;
use nalgebra::{DMatrix, DVector};
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{EmissionModel, HmmParams, Likelihoods, Obs, ObservationSpace, Observations};
use crate::rng;

/// Floor applied to estimated densities before they enter forward-backward.
pub const DENSITY_FLOOR: f64 = 1e-12;

/// Rotations whose eigenvalues carry more imaginary mass than this are
/// discarded.
pub const MAX_IMAGINARY_MASS: f64 = 0.1;

const SINGULAR_FLOOR: f64 = 1e-10;

pub const DEFAULT_BINS: usize = 40;

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Kernel {
    #[default]
    Triangular,
    Epanechnikov,
}

impl Kernel {
    fn eval(self, u: f64) -> f64 {
        let a = u.abs();
        if a >= 1.0 {
            return 0.0;
        }
        match self {
            Self::Triangular => 1.0 - a,
            Self::Epanechnikov => 0.75 * (1.0 - a * a),
        }
    }
}

/// Orthonormal indicator basis.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Basis {
    /// `D` equal bins on `[lo, hi]`, indicators scaled by `1/√width`.
    Histogram { lo: f64, hi: f64, bins: usize },
    /// Indicators of the symbols `0..size`.
    Symbols { size: usize },
}

impl Basis {
    pub fn size(&self) -> usize {
        match *self {
            Self::Histogram { bins, .. } => bins,
            Self::Symbols { size } => size,
        }
    }

    /// Value of the (single) basis function that is nonzero at a point.
    pub fn height(&self) -> f64 {
        match *self {
            Self::Histogram { lo, hi, bins } => ((hi - lo) / bins as f64).sqrt().recip(),
            Self::Symbols { .. } => 1.0,
        }
    }

    pub fn index(&self, y: Obs) -> Option<usize> {
        match (*self, y) {
            (Self::Histogram { lo, hi, bins }, Obs::Real(v)) => {
                if !(v >= lo && v <= hi) {
                    return None;
                }
                let k = ((v - lo) / (hi - lo) * bins as f64).floor() as usize;
                Some(k.min(bins - 1))
            }
            (Self::Symbols { size }, Obs::Symbol(s)) => (s < size).then_some(s),
            _ => None,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SpectralConfig {
    /// Number of histogram bins `D`; `n^{1/3}` rounded and clamped to
    /// `[4, 40]` when absent.
    pub bins: Option<usize>,
    /// Histogram range; the padded data range when absent.
    pub range: Option<(f64, f64)>,
    /// Number of random rotations `r`; `⌈log n⌉` when absent.
    pub rotations: Option<usize>,
    /// Kernel resolution `L` (bandwidth `2^{-L}` in observation units);
    /// `2^L ≈ (n/log n)^{1/(2s+1)}` when absent.
    pub level: Option<i32>,
    /// Assumed smoothness `s` in the resolution rule.
    pub smoothness: f64,
    /// Densities are truncated at `±n^beta`.
    pub beta: f64,
    /// Entries of `Q̂` are kept in `[n^{-α/2}, 1 − n^{-α/2}]`.
    pub clip_alpha: f64,
    pub kernel: Kernel,
    /// Size of the density evaluation grid.
    pub grid_points: usize,
    pub seed: u64,
}

impl Default for SpectralConfig {
    fn default() -> Self {
        Self {
            bins: None,
            range: None,
            rotations: None,
            level: None,
            smoothness: 1.0,
            beta: 0.5,
            clip_alpha: 2.0,
            kernel: Kernel::Triangular,
            grid_points: 1024,
            seed: 0,
        }
    }
}

impl SpectralConfig {
    pub fn resolution_level(&self, n: usize) -> i32 {
        self.level.unwrap_or_else(|| {
            let nf = n.max(3) as f64;
            let target = (nf / nf.ln()).powf(1.0 / (2.0 * self.smoothness + 1.0));
            target.log2().round().max(0.0) as i32
        })
    }

    pub fn num_bins(&self, n: usize) -> usize {
        self.bins
            .unwrap_or_else(|| (n as f64).cbrt().round().clamp(4.0, DEFAULT_BINS as f64) as usize)
    }

    pub fn num_rotations(&self, n: usize) -> usize {
        self.rotations
            .unwrap_or_else(|| (n.max(3) as f64).ln().ceil() as usize)
            .max(1)
    }
}

/// Windows sorted by their middle observation, for the kernel moment.
#[derive(Clone, Debug, PartialEq)]
struct KernelSamples {
    mid: Vec<f64>,
    first: Vec<u32>,
    last: Vec<u32>,
}

/// Empirical (or population) moments in the basis.
#[derive(Clone, Debug, PartialEq)]
pub struct MomentStats {
    pub basis: Basis,
    /// Number of windows averaged over; `None` for population moments.
    pub windows: Option<usize>,
    /// `L̂(a)`.
    pub l: DVector<f64>,
    /// `N̂(a, b)`.
    pub n: DMatrix<f64>,
    /// `P̂(a, c)`.
    pub p: DMatrix<f64>,
    /// `m[b] = M̂(·, b, ·)`.
    pub m: Vec<DMatrix<f64>>,
    kernel: Option<KernelSamples>,
}

impl MomentStats {
    /// `V⊤ M̂^{x,L} V` for a `D × J` matrix `v`.
    fn projected_kernel_moment(
        &self,
        x: f64,
        v: &DMatrix<f64>,
        level: i32,
        kernel: Kernel,
    ) -> DMatrix<f64> {
        let j = v.ncols();
        let mut out = DMatrix::zeros(j, j);
        let Some(ks) = &self.kernel else {
            return out;
        };
        let scale = 2f64.powi(level);
        let h = 1.0 / scale;
        let start = ks.mid.partition_point(|&m| m <= x - h);
        let stop = ks.mid.partition_point(|&m| m < x + h);
        let norm = self.basis.height().powi(2) * scale / ks.mid.len() as f64;
        for s in start..stop {
            let k = kernel.eval(scale * (x - ks.mid[s])) * norm;
            if k == 0.0 {
                continue;
            }
            let (a, b) = (ks.first[s] as usize, ks.last[s] as usize);
            for r in 0..j {
                let va = v[(a, r)] * k;
                for c in 0..j {
                    out[(r, c)] += va * v[(b, c)];
                }
            }
        }
        out
    }

    /// `M̂^{x,L}` as a `D × D` matrix.
    pub fn kernel_moment(&self, x: f64, level: i32, kernel: Kernel) -> DMatrix<f64> {
        let d = self.basis.size();
        self.projected_kernel_moment(x, &DMatrix::identity(d, d), level, kernel)
    }
}

fn data_basis(y: &Observations, cfg: &SpectralConfig) -> Result<Basis> {
    match y {
        Observations::Symbols(s) => Ok(Basis::Symbols {
            size: s.iter().max().map_or(0, |m| m + 1),
        }),
        Observations::Reals(v) => {
            let bins = cfg.num_bins(v.len());
            if bins == 0 {
                return Err(Error::InvalidArgument("bins must be >= 1".into()));
            }
            let (lo, hi) = match cfg.range {
                Some((lo, hi)) if lo < hi => (lo, hi),
                Some((lo, hi)) => {
                    return Err(Error::InvalidArgument(format!("empty range [{lo}, {hi}]")))
                }
                None => {
                    let (mn, mx) = v
                        .iter()
                        .fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), &x| {
                            (a.min(x), b.max(x))
                        });
                    let pad = if mx > mn { 1e-9 * (mx - mn) } else { 0.5 };
                    (mn - pad, mx + pad)
                }
            };
            Ok(Basis::Histogram { lo, hi, bins })
        }
    }
}

/// Empirical moments of the windows of `y`.
pub fn compute_moments(y: &Observations, cfg: &SpectralConfig) -> Result<MomentStats> {
    let n = y.len();
    if n < 3 {
        return Err(Error::InvalidArgument(format!(
            "needs at least 3 observations, got {n}"
        )));
    }
    let basis = data_basis(y, cfg)?;
    let d = basis.size();
    let idx: Vec<usize> = (0..n)
        .map(|i| {
            basis.index(y.get(i)).ok_or_else(|| {
                Error::InvalidArgument(format!(
                    "observation {} lies outside the basis range",
                    i + 1
                ))
            })
        })
        .collect::<Result<_>>()?;
    let m = n - 2;
    let phi = basis.height();
    let mut l = DVector::zeros(d);
    let mut nn = DMatrix::zeros(d, d);
    let mut p = DMatrix::zeros(d, d);
    let mut mm = vec![DMatrix::zeros(d, d); d];
    for s in 0..m {
        let (a, b, c) = (idx[s], idx[s + 1], idx[s + 2]);
        l[a] += 1.0;
        nn[(a, b)] += 1.0;
        p[(a, c)] += 1.0;
        mm[b][(a, c)] += 1.0;
    }
    let mf = m as f64;
    l *= phi / mf;
    nn *= phi * phi / mf;
    p *= phi * phi / mf;
    for mb in &mut mm {
        *mb *= phi.powi(3) / mf;
    }
    let kernel = y.as_reals().map(|v| {
        let mut order: Vec<usize> = (0..m).collect();
        order.sort_by(|&a, &b| v[a + 1].total_cmp(&v[b + 1]));
        KernelSamples {
            mid: order.iter().map(|&s| v[s + 1]).collect(),
            first: order.iter().map(|&s| idx[s] as u32).collect(),
            last: order.iter().map(|&s| idx[s + 2] as u32).collect(),
        }
    });
    Ok(MomentStats {
        basis,
        windows: Some(m),
        l,
        n: nn,
        p,
        m: mm,
        kernel,
    })
}

/// Exact moments of a finite-alphabet model under the symbol basis,
/// with `X_1 ~ ν`.
pub fn population_moments(params: &HmmParams) -> Result<MomentStats> {
    let size = match params.space() {
        ObservationSpace::Finite { size } => size,
        ObservationSpace::Real => {
            return Err(Error::InvalidArgument(
                "population moments need a finite alphabet".into(),
            ))
        }
    };
    let j = params.num_states();
    let o = DMatrix::from_fn(size, j, |a, x| params.emissions[x].density(Obs::Symbol(a)));
    let q = DMatrix::from_fn(j, j, |a, b| params.transition[a][b]);
    let nu = DVector::from_column_slice(&params.nu);
    let dnu = DMatrix::from_diagonal(&nu);
    let l = &o * &nu;
    let nn = &o * &dnu * &q * o.transpose();
    let p = &o * &dnu * &q * &q * o.transpose();
    let m = (0..size)
        .map(|b| {
            let ob = DMatrix::from_diagonal(&o.row(b).transpose());
            &o * &dnu * &q * ob * &q * o.transpose()
        })
        .collect();
    Ok(MomentStats {
        basis: Basis::Symbols { size },
        windows: None,
        l,
        n: nn,
        p,
        m,
        kernel: None,
    })
}

/// Euclidean projection onto `{p : Σp = total, p ≥ 0}` (sort-threshold).
fn project_scaled_simplex(v: &[f64], total: f64) -> Vec<f64> {
    let mut u = v.to_vec();
    u.sort_by(|a, b| b.total_cmp(a));
    let mut cum = 0.0;
    let mut theta = 0.0;
    for (k, &uk) in u.iter().enumerate() {
        cum += uk;
        let t = (cum - total) / (k + 1) as f64;
        if uk - t > 0.0 {
            theta = t;
        }
    }
    v.iter().map(|&x| (x - theta).max(0.0)).collect()
}

/// Euclidean projection onto the probability simplex.
pub fn project_simplex(v: &[f64]) -> Vec<f64> {
    project_scaled_simplex(v, 1.0)
}

/// Euclidean projection onto `{p in simplex : p ≥ floor}`.
pub fn project_simplex_floor(v: &[f64], floor: f64) -> Vec<f64> {
    let k = v.len() as f64;
    let floor = floor.min(1.0 / k);
    let shifted: Vec<f64> = v.iter().map(|x| x - floor).collect();
    project_scaled_simplex(&shifted, 1.0 - k * floor)
        .into_iter()
        .map(|x| x + floor)
        .collect()
}

/// Frobenius-nearest row-stochastic matrix: each row projected onto the
/// simplex.
pub fn project_transition_matrix(m: &[Vec<f64>]) -> Vec<Vec<f64>> {
    m.iter().map(|row| project_simplex(row)).collect()
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct RotationTrial {
    /// Rotation score `min_k min_{k1≠k2} |Λ̂(k,k1) − Λ̂(k,k2)|`; `None` when
    /// the trial was discarded.
    pub score: Option<f64>,
    pub imaginary_mass: f64,
}

/// Output of the transition step.
#[derive(Clone, Debug)]
pub struct TransitionOutput {
    pub nu_hat: Vec<f64>,
    pub q_hat: Vec<Vec<f64>>,
    pub o_hat: DMatrix<f64>,
    pub v_hat: DMatrix<f64>,
    /// `(V̂⊤P̂V̂)^{-1}`.
    pub gram_inv: DMatrix<f64>,
    pub singular_values: Vec<f64>,
    pub trials: Vec<RotationTrial>,
    pub chosen_rotation: usize,
}

fn haar_orthogonal(j: usize, rng: &mut rng::Rng) -> DMatrix<f64> {
    let g = DMatrix::from_fn(j, j, |_, _| StandardNormal.sample(rng));
    let qr = g.qr();
    let (mut q, r) = (qr.q(), qr.r());
    for c in 0..j {
        if r[(c, c)] < 0.0 {
            q.column_mut(c).neg_mut();
        }
    }
    q
}

/// Unit-norm eigenvectors of a real matrix with real eigenvalues (as
/// columns), and the share of eigenvalue modulus that is imaginary.
fn real_eigen(c: &DMatrix<f64>) -> Option<(DMatrix<f64>, f64)> {
    let j = c.nrows();
    let eig = c.clone().schur().complex_eigenvalues();
    let total: f64 = eig.iter().map(|z| z.norm()).sum();
    let imag: f64 = eig.iter().map(|z| z.im.abs()).sum();
    let mass = if total > 0.0 { imag / total } else { 0.0 };
    let mut r = DMatrix::zeros(j, j);
    for (k, z) in eig.iter().enumerate() {
        let shifted = c - DMatrix::identity(j, j) * z.re;
        let svd = shifted.svd(false, true);
        let vt = svd.v_t?;
        let (kmin, _) = svd
            .singular_values
            .iter()
            .enumerate()
            .min_by(|a, b| a.1.total_cmp(b.1))?;
        let v = vt.row(kmin).transpose();
        r.set_column(k, &(v.normalize()));
    }
    Some((r, mass))
}

struct Trial {
    omega: DMatrix<f64>,
    lambda: DMatrix<f64>,
    score: f64,
}

fn rotation_trial(
    b: &[DMatrix<f64>],
    v: &DMatrix<f64>,
    omega: DMatrix<f64>,
) -> (Option<Trial>, f64) {
    let j = v.ncols();
    let vo = v * &omega;
    let c = |x: usize| {
        b.iter()
            .enumerate()
            .fold(DMatrix::zeros(j, j), |acc, (d, bd)| acc + bd * vo[(d, x)])
    };
    let cs: Vec<DMatrix<f64>> = (0..j).map(c).collect();
    let Some((r1, mass)) = real_eigen(&cs[0]) else {
        return (None, f64::NAN);
    };
    if mass > MAX_IMAGINARY_MASS {
        return (None, mass);
    }
    let Some(r1_inv) = r1.clone().try_inverse() else {
        return (None, mass);
    };
    let lambda = DMatrix::from_fn(j, j, |x, xp| {
        let d = &r1_inv * &cs[x] * &r1;
        d[(xp, xp)]
    });
    let mut score = f64::INFINITY;
    for k in 0..j {
        for k1 in 0..j {
            for k2 in k1 + 1..j {
                score = score.min((lambda[(k, k1)] - lambda[(k, k2)]).abs());
            }
        }
    }
    if !score.is_finite() {
        // J = 1: no pair to separate
        score = 0.0;
    }
    (
        Some(Trial {
            omega,
            lambda,
            score,
        }),
        mass,
    )
}

/// Steps 2–8: `V̂`, the rotation search, `Ô`, `ν̂` and `Q̂`.
///
/// `n` sets the rotation count default and the clipping level of `Q̂`;
/// pass `None` for population moments (no clipping).
pub fn spectral_transition(
    moments: &MomentStats,
    j: usize,
    cfg: &SpectralConfig,
    n: Option<usize>,
) -> Result<TransitionOutput> {
    let d = moments.basis.size();
    if j == 0 || d < j {
        return Err(Error::InvalidArgument(format!(
            "needs 1 <= J <= D, got J={j}, D={d}"
        )));
    }
    let svd = moments.p.clone().svd(false, true);
    let vt = svd.v_t.ok_or(Error::Singular("SVD of P failed".into()))?;
    let order: Vec<usize> = (0..d)
        .sorted_by(|&a, &b| svd.singular_values[b].total_cmp(&svd.singular_values[a]))
        .collect();
    let singular_values: Vec<f64> = order.iter().map(|&k| svd.singular_values[k]).collect();
    if singular_values[j - 1] <= SINGULAR_FLOOR {
        return Err(Error::Singular(format!(
            "P has fewer than {j} singular values above {SINGULAR_FLOOR} (sigma_J = {:e})",
            singular_values[j - 1]
        )));
    }
    let v = DMatrix::from_fn(d, j, |a, k| vt[(order[k], a)]);
    let vt_v = v.transpose();
    let gram_inv = (&vt_v * &moments.p * &v)
        .try_inverse()
        .ok_or(Error::Singular("V'PV is singular".into()))?;
    let b: Vec<DMatrix<f64>> = moments
        .m
        .iter()
        .map(|md| &gram_inv * &vt_v * md * &v)
        .collect();

    let rotations = cfg.num_rotations(n.unwrap_or(3000));
    let outcomes: Vec<(Option<Trial>, f64)> = (0..rotations)
        .into_par_iter()
        .map(|t| {
            let mut rng = rng::stream(cfg.seed, t as u64);
            rotation_trial(&b, &v, haar_orthogonal(j, &mut rng))
        })
        .collect();
    let trials: Vec<RotationTrial> = outcomes
        .iter()
        .map(|(t, mass)| RotationTrial {
            score: t.as_ref().map(|t| t.score),
            imaginary_mass: *mass,
        })
        .collect();
    let mut chosen: Option<usize> = None;
    for (k, (t, _)) in outcomes.iter().enumerate() {
        if let Some(t) = t {
            if chosen.is_none_or(|c| t.score > outcomes[c].0.as_ref().unwrap().score) {
                chosen = Some(k);
            }
        }
    }
    let chosen = chosen.ok_or(Error::NotConverged(format!(
        "all {rotations} rotations were degenerate (complex or repeated eigenvalues)"
    )))?;
    let best = outcomes[chosen].0.as_ref().unwrap();

    let o_hat = &v * &best.omega * &best.lambda;
    let vo = &vt_v * &o_hat;
    let vo_inv = vo
        .clone()
        .try_inverse()
        .ok_or(Error::Singular("V'O is singular".into()))?;
    let nu_tilde = &vo_inv * (&vt_v * &moments.l);
    let left = (&vo * DMatrix::from_diagonal(&nu_tilde))
        .try_inverse()
        .ok_or(Error::Singular("V'O diag(nu) is singular".into()))?;
    let ov_inv = vo
        .transpose()
        .try_inverse()
        .ok_or(Error::Singular("O'V is singular".into()))?;
    let q_raw = left * (&vt_v * &moments.n * &v) * ov_inv;
    let rows: Vec<Vec<f64>> = (0..j)
        .map(|r| q_raw.row(r).iter().copied().collect())
        .collect();
    let floor = n.map_or(0.0, |n| (n as f64).powf(-cfg.clip_alpha / 2.0));
    let q_hat = rows
        .iter()
        .map(|r| project_simplex_floor(r, floor))
        .collect();
    let nu_hat = project_simplex(nu_tilde.as_slice());
    Ok(TransitionOutput {
        nu_hat,
        q_hat,
        o_hat,
        v_hat: v,
        gram_inv,
        singular_values,
        trials,
        chosen_rotation: chosen,
    })
}

/// Estimated densities on a grid (symbols for a finite alphabet).
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct DensityGrid {
    pub grid: Vec<f64>,
    /// `values[j][g]`.
    pub values: Vec<Vec<f64>>,
    /// Condition number of `R̂₂ = Q̂Ô⊤V̂`.
    pub r2_condition: f64,
}

/// Steps 9–11.
pub fn estimate_densities(
    moments: &MomentStats,
    t: &TransitionOutput,
    cfg: &SpectralConfig,
    n: Option<usize>,
) -> Result<DensityGrid> {
    let j = t.q_hat.len();
    let q = DMatrix::from_fn(j, j, |a, b| t.q_hat[a][b]);
    let r2 = q * t.o_hat.transpose() * &t.v_hat;
    let sv = r2.clone().svd(false, false).singular_values;
    let (smax, smin) = sv
        .iter()
        .fold((0f64, f64::INFINITY), |(a, b), &s| (a.max(s), b.min(s)));
    let r2_inv = r2
        .clone()
        .try_inverse()
        .ok_or(Error::Singular("R2 is singular".into()))?;
    let cap = n.map_or(f64::INFINITY, |n| (n as f64).powf(cfg.beta));
    let diag = |vm: DMatrix<f64>| -> Vec<f64> {
        let bx = &t.gram_inv * vm;
        let d = &r2 * bx * &r2_inv;
        (0..j).map(|k| d[(k, k)].clamp(-cap, cap)).collect()
    };
    let vt_v = t.v_hat.transpose();
    let (grid, cols): (Vec<f64>, Vec<Vec<f64>>) = match moments.basis {
        Basis::Symbols { size } => {
            // the basis functions are indicators: B̂(d) plays the role of B̂^x
            let cols = (0..size)
                .map(|d| diag(&vt_v * &moments.m[d] * &t.v_hat))
                .collect();
            ((0..size).map(|d| d as f64).collect(), cols)
        }
        Basis::Histogram { lo, hi, .. } => {
            let g = cfg.grid_points.max(2);
            let grid: Vec<f64> = (0..g)
                .map(|k| lo + (hi - lo) * k as f64 / (g - 1) as f64)
                .collect();
            let level = cfg.resolution_level(n.unwrap_or(3));
            let cols = grid
                .par_iter()
                .map(|&x| diag(moments.projected_kernel_moment(x, &t.v_hat, level, cfg.kernel)))
                .collect();
            (grid, cols)
        }
    };
    let values = (0..j)
        .map(|k| cols.iter().map(|c| c[k]).collect())
        .collect();
    Ok(DensityGrid {
        grid,
        values,
        r2_condition: smax / smin,
    })
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct SpectralDiagnostics {
    /// Singular values of `P̂`, in decreasing order.
    pub singular_values: Vec<f64>,
    pub sigma_j: f64,
    pub chosen_rotation: usize,
    pub separation_score: f64,
    pub trials: Vec<RotationTrial>,
    pub r2_condition: f64,
    pub level: i32,
    pub bandwidth: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct SpectralEstimate {
    pub nu_hat: Vec<f64>,
    pub q_hat: Vec<Vec<f64>>,
    pub basis: Basis,
    pub grid: Vec<f64>,
    /// `f_hat[j][g]`, truncated at `±n^beta`.
    pub f_hat: Vec<Vec<f64>>,
    pub n: usize,
    pub diagnostics: SpectralDiagnostics,
}

impl SpectralEstimate {
    /// `f̂_j(y)` by linear interpolation on the grid, floored at
    /// [`DENSITY_FLOOR`]; zero-mass outside the grid.
    pub fn density(&self, j: usize, y: Obs) -> f64 {
        let f = &self.f_hat[j];
        let v = match (self.basis, y) {
            (Basis::Symbols { size }, Obs::Symbol(s)) if s < size => f[s],
            (Basis::Histogram { .. }, Obs::Real(x)) => {
                let g = &self.grid;
                let last = g.len() - 1;
                if !(x >= g[0] && x <= g[last]) {
                    return DENSITY_FLOOR;
                }
                let t = (x - g[0]) / (g[last] - g[0]) * last as f64;
                let k = (t.floor() as usize).min(last - 1);
                let w = t - k as f64;
                f[k] * (1.0 - w) + f[k + 1] * w
            }
            _ => DENSITY_FLOOR,
        };
        v.max(DENSITY_FLOOR)
    }

    pub fn likelihoods(&self, y: &Observations) -> Likelihoods {
        let j = self.nu_hat.len();
        let mut values = Vec::with_capacity(y.len() * j);
        for i in 0..y.len() {
            let obs = y.get(i);
            values.extend((0..j).map(|k| self.density(k, obs)));
        }
        Likelihoods::new(y.len(), j, values)
    }
}

/// Runs the whole estimator on `y` with `j` hidden states.
pub fn full_estimate(y: &Observations, j: usize, cfg: &SpectralConfig) -> Result<SpectralEstimate> {
    let n = y.len();
    let moments = compute_moments(y, cfg)?;
    let t = spectral_transition(&moments, j, cfg, Some(n))?;
    let dens = estimate_densities(&moments, &t, cfg, Some(n))?;
    let level = cfg.resolution_level(n);
    let separation_score = t.trials[t.chosen_rotation].score.unwrap_or(f64::NAN);
    Ok(SpectralEstimate {
        nu_hat: t.nu_hat,
        q_hat: t.q_hat,
        basis: moments.basis,
        grid: dens.grid,
        f_hat: dens.values,
        n,
        diagnostics: SpectralDiagnostics {
            sigma_j: t.singular_values[j - 1],
            singular_values: t.singular_values,
            chosen_rotation: t.chosen_rotation,
            separation_score,
            trials: t.trials,
            r2_condition: dens.r2_condition,
            level,
            bandwidth: 2f64.powi(-level),
        },
    })
}

/// Permutation `τ` minimizing `‖Q̂ − Q^τ‖_F` with `Q^τ(a, b) = Q(τa, τb)`,
/// and the minimum. Ties keep the lexicographically first permutation.
pub fn align_transition(q_hat: &[Vec<f64>], q: &[Vec<f64>]) -> (Vec<usize>, f64) {
    let j = q.len();
    let mut best = (Vec::new(), f64::INFINITY);
    for tau in (0..j).permutations(j) {
        let mut s = 0.0;
        for a in 0..j {
            for b in 0..j {
                s += (q_hat[a][b] - q[tau[a]][tau[b]]).powi(2);
            }
        }
        let e = s.sqrt();
        if e < best.1 {
            best = (tau, e);
        }
    }
    best
}

/// Permutation `τ` minimizing `max_j sup_grid |f̂_j − f_{τ(j)}|`, and the
/// minimum.
pub fn align_densities(est: &SpectralEstimate, truth: &[EmissionModel]) -> (Vec<usize>, f64) {
    let j = truth.len();
    let obs = |x: f64| match est.basis {
        Basis::Symbols { .. } => Obs::Symbol(x as usize),
        Basis::Histogram { .. } => Obs::Real(x),
    };
    // sup_err[k][l] = sup |f̂_k − f_l|
    let sup_err: Vec<Vec<f64>> = (0..j)
        .map(|k| {
            (0..j)
                .map(|l| {
                    est.grid
                        .iter()
                        .zip(&est.f_hat[k])
                        .map(|(&x, &f)| (f - truth[l].density(obs(x))).abs())
                        .fold(0.0, f64::max)
                })
                .collect()
        })
        .collect();
    let mut best = (Vec::new(), f64::INFINITY);
    for tau in (0..j).permutations(j) {
        let e = (0..j).map(|k| sup_err[k][tau[k]]).fold(0.0, f64::max);
        if e < best.1 {
            best = (tau, e);
        }
    }
    best
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::sample_trajectory;

    fn finite_model() -> HmmParams {
        HmmParams::stationary(
            vec![vec![0.8, 0.2], vec![0.3, 0.7]],
            vec![
                EmissionModel::Finite {
                    pmf: vec![0.6, 0.3, 0.1],
                },
                EmissionModel::Finite {
                    pmf: vec![0.1, 0.2, 0.7],
                },
            ],
        )
        .unwrap()
    }

    #[test]
    fn simplex_projection_examples() {
        let close = |a: &[f64], b: &[f64]| a.iter().zip(b).all(|(x, y)| (x - y).abs() < 1e-15);
        assert!(close(&project_simplex(&[1.2, 0.2]), &[1.0, 0.0]));
        assert_eq!(project_simplex(&[-1.0, -1.0]), vec![0.5, 0.5]);
        let p = vec![0.2, 0.3, 0.5];
        let q = project_simplex(&p);
        assert!(p.iter().zip(&q).all(|(a, b)| (a - b).abs() < 1e-15));
        let f = project_simplex_floor(&[1.2, 0.2], 0.01);
        assert!((f[0] - 0.99).abs() < 1e-15 && (f[1] - 0.01).abs() < 1e-15);
    }

    #[test]
    fn constant_series_moments_are_rank_one() {
        let y = Observations::Reals(vec![2.0; 10]);
        let cfg = SpectralConfig {
            bins: Some(4),
            range: Some((0.0, 4.0)),
            ..Default::default()
        };
        let m = compute_moments(&y, &cfg).unwrap();
        let phi = DVector::from_vec(vec![0.0, 0.0, 1.0, 0.0]);
        assert!((&m.l - &phi).norm() < 1e-15);
        assert!((&m.n - &phi * phi.transpose()).norm() < 1e-15);
        assert_eq!(m.n.rank(1e-12), 1);
        assert!(compute_moments(&Observations::Reals(vec![5.0; 4]), &cfg).is_err());
        assert!(compute_moments(&Observations::Reals(vec![1.0, 2.0]), &cfg).is_err());
    }

    #[test]
    fn single_bin_moments_are_scalars() {
        let y = Observations::Reals(vec![0.1, 0.5, 0.9, 0.3]);
        let cfg = SpectralConfig {
            bins: Some(1),
            range: Some((0.0, 1.0)),
            ..Default::default()
        };
        let m = compute_moments(&y, &cfg).unwrap();
        assert_eq!(m.p.shape(), (1, 1));
        assert!((m.p[(0, 0)] - 1.0).abs() < 1e-15 && (m.l[0] - 1.0).abs() < 1e-15);
    }

    #[test]
    fn population_moments_recover_the_model() {
        let p = finite_model();
        let m = population_moments(&p).unwrap();
        let cfg = SpectralConfig {
            rotations: Some(5),
            ..Default::default()
        };
        let t = spectral_transition(&m, 2, &cfg, None).unwrap();
        let (tau, err) = align_transition(&t.q_hat, &p.transition);
        assert!(err < 1e-6, "{:?} vs {:?}", t.q_hat, p.transition);
        for k in 0..2 {
            assert!((t.nu_hat[k] - p.nu[tau[k]]).abs() < 1e-6);
        }
        let d = estimate_densities(&m, &t, &cfg, None).unwrap();
        for k in 0..2 {
            for s in 0..3 {
                let truth = p.emissions[tau[k]].density(Obs::Symbol(s));
                assert!((d.values[k][s] - truth).abs() < 1e-6, "{:?}", d.values);
            }
        }
    }

    #[test]
    fn chosen_rotation_has_the_best_score() {
        let p = finite_model();
        let y = sample_trajectory(&p, 20_000, 3).unwrap().y;
        let cfg = SpectralConfig {
            rotations: Some(7),
            seed: 11,
            ..Default::default()
        };
        let m = compute_moments(&y, &cfg).unwrap();
        let t = spectral_transition(&m, 2, &cfg, Some(20_000)).unwrap();
        let best = t.trials[t.chosen_rotation].score.unwrap();
        assert!(t.trials.iter().all(|tr| tr.score.is_none_or(|s| s <= best)));
        let floor = 1.0 / 20_000.0;
        for row in &t.q_hat {
            assert!((row.iter().sum::<f64>() - 1.0).abs() < 1e-12);
            assert!(row
                .iter()
                .all(|&x| x >= floor - 1e-15 && x <= 1.0 - floor + 1e-15));
        }
        let (_, err) = align_transition(&t.q_hat, &p.transition);
        assert!(err < 0.1, "{err}");
    }

    #[test]
    fn deterministic_given_seed() {
        let p = finite_model();
        let y = sample_trajectory(&p, 5000, 1).unwrap().y;
        let cfg = SpectralConfig::default();
        let a = full_estimate(&y, 2, &cfg).unwrap();
        let b = full_estimate(&y, 2, &cfg).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn truncation_caps_density_values() {
        let p = finite_model();
        let y = sample_trajectory(&p, 400, 5).unwrap().y;
        let cfg = SpectralConfig {
            beta: 0.01,
            ..Default::default()
        };
        let e = full_estimate(&y, 2, &cfg).unwrap();
        let cap = 400f64.powf(0.01);
        assert!(e.f_hat.iter().flatten().all(|v| v.abs() <= cap));
    }
}
