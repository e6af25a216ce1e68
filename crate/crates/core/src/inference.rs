//! Scaled forward filtering, smoothing through backward kernels, and the
//! Bayes classifier.

use crate::error::{Error, Result};
use crate::model::{HmmParams, Likelihoods, Observations};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum PosteriorKind {
    Filtering,
    Smoothing,
}

/// `n × J` posterior probabilities, row-major.
#[derive(Clone, Debug, PartialEq)]
pub struct PosteriorTable {
    pub kind: PosteriorKind,
    pub n: usize,
    pub j: usize,
    pub probs: Vec<f64>,
    pub loglik: f64,
}

impl PosteriorTable {
    pub fn row(&self, i: usize) -> &[f64] {
        &self.probs[i * self.j..(i + 1) * self.j]
    }

    pub fn rows(&self) -> impl Iterator<Item = &[f64]> {
        self.probs.chunks_exact(self.j)
    }

    /// Per-row argmax, ties to the lowest state index.
    pub fn argmax_labels(&self) -> Vec<usize> {
        self.rows().map(argmax).collect()
    }
}

pub(crate) fn argmax(row: &[f64]) -> usize {
    let mut best = 0;
    for (k, &p) in row.iter().enumerate().skip(1) {
        if p > row[best] {
            best = k;
        }
    }
    best
}

fn check_dims(nu: &[f64], q: &[Vec<f64>], lik: &Likelihoods) -> Result<()> {
    let j = nu.len();
    if lik.j != j || q.len() != j || q.iter().any(|r| r.len() != j) {
        return Err(Error::DimensionMismatch(format!(
            "{j} states in nu, {} rows in Q, {} columns of likelihoods",
            q.len(),
            lik.j
        )));
    }
    if lik.n == 0 {
        return Err(Error::InvalidArgument("empty observation sequence".into()));
    }
    Ok(())
}

/// Filtering from a precomputed likelihood matrix `f_x(y_i)`.
pub fn forward_filter_likelihoods(
    nu: &[f64],
    q: &[Vec<f64>],
    lik: &Likelihoods,
) -> Result<PosteriorTable> {
    check_dims(nu, q, lik)?;
    let (n, j) = (lik.n, lik.j);
    let mut probs = vec![0.0; n * j];
    let mut loglik = 0.0;
    let mut pred = nu.to_vec();
    for i in 0..n {
        let f = lik.row(i);
        if f.iter().all(|&v| v == 0.0) {
            return Err(Error::ImpossibleObservation { index: i });
        }
        let row = &mut probs[i * j..(i + 1) * j];
        let mut c = 0.0;
        for x in 0..j {
            row[x] = pred[x] * f[x];
            c += row[x];
        }
        if !(c > 0.0) || !c.is_finite() {
            return Err(Error::ImpossibleObservation { index: i });
        }
        for v in row.iter_mut() {
            *v /= c;
        }
        loglik += c.ln();
        if i + 1 < n {
            pred.iter_mut().for_each(|p| *p = 0.0);
            for a in 0..j {
                let w = row[a];
                if w == 0.0 {
                    continue;
                }
                for (b, p) in pred.iter_mut().enumerate() {
                    *p += w * q[a][b];
                }
            }
        }
    }
    Ok(PosteriorTable {
        kind: PosteriorKind::Filtering,
        n,
        j,
        probs,
        loglik,
    })
}

/// Smoothing from a precomputed likelihood matrix.
///
/// Backward pass: `φ_{i|n}(x) = Σ_{x'} φ_{i+1|n}(x') B_i(x', x)` with the
/// backward kernel `B_i(x', x) = φ_i(x) Q(x, x') / Σ_z φ_i(z) Q(z, x')`.
pub fn smooth_likelihoods(nu: &[f64], q: &[Vec<f64>], lik: &Likelihoods) -> Result<PosteriorTable> {
    let mut table = forward_filter_likelihoods(nu, q, lik)?;
    let (n, j) = (table.n, table.j);
    let mut pred = vec![0.0; j];
    let mut ratio = vec![0.0; j];
    for i in (0..n.saturating_sub(1)).rev() {
        let (head, tail) = table.probs.split_at_mut((i + 1) * j);
        let filt = &mut head[i * j..];
        let next = &tail[..j];
        pred.iter_mut().for_each(|p| *p = 0.0);
        for a in 0..j {
            for b in 0..j {
                pred[b] += filt[a] * q[a][b];
            }
        }
        for b in 0..j {
            ratio[b] = if pred[b] > 0.0 {
                next[b] / pred[b]
            } else {
                0.0
            };
        }
        let mut total = 0.0;
        for a in 0..j {
            let s: f64 = (0..j).map(|b| q[a][b] * ratio[b]).sum();
            filt[a] *= s;
            total += filt[a];
        }
        for v in filt.iter_mut() {
            *v /= total;
        }
    }
    table.kind = PosteriorKind::Smoothing;
    Ok(table)
}

/// `P(X_i = · | y_{1:i})` for every `i`.
pub fn forward_filter(params: &HmmParams, y: &Observations) -> Result<PosteriorTable> {
    forward_filter_likelihoods(
        &params.nu,
        &params.transition,
        &Likelihoods::from_params(params, y),
    )
}

/// `P(X_i = · | y_{1:n})` for every `i`.
pub fn smooth(params: &HmmParams, y: &Observations) -> Result<PosteriorTable> {
    smooth_likelihoods(
        &params.nu,
        &params.transition,
        &Likelihoods::from_params(params, y),
    )
}

/// Marginal-posterior argmax at each index; ties go to the lowest state.
pub fn bayes_classify(params: &HmmParams, y: &Observations) -> Result<Vec<usize>> {
    Ok(smooth(params, y)?.argmax_labels())
}

/// `½ Σ_x |φ_{a,i|n}(x) − φ_{b,i|n}(x)|` for each index `i`.
pub fn smoothing_tv_distance(a: &HmmParams, b: &HmmParams, y: &Observations) -> Result<Vec<f64>> {
    if a.num_states() != b.num_states() || a.space() != b.space() {
        return Err(Error::DimensionMismatch(format!(
            "models have {} and {} states",
            a.num_states(),
            b.num_states()
        )));
    }
    let pa = smooth(a, y)?;
    let pb = smooth(b, y)?;
    Ok(tv_rows(&pa, &pb))
}

pub(crate) fn tv_rows(a: &PosteriorTable, b: &PosteriorTable) -> Vec<f64> {
    a.rows()
        .zip(b.rows())
        .map(|(r, s)| 0.5 * r.iter().zip(s).map(|(u, v)| (u - v).abs()).sum::<f64>())
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::EmissionModel;

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

    fn model() -> HmmParams {
        finite(
            vec![0.3, 0.7],
            vec![vec![0.8, 0.2], vec![0.3, 0.7]],
            vec![vec![0.6, 0.3, 0.1], vec![0.1, 0.2, 0.7]],
        )
    }

    /// P(x_{1:n}, y_{1:n}) summed over all paths.
    fn brute_marginals(p: &HmmParams, y: &[usize]) -> (Vec<Vec<f64>>, f64) {
        let (n, j) = (y.len(), p.num_states());
        let mut marg = vec![vec![0.0; j]; n];
        let mut total = 0.0;
        for code in 0..j.pow(n as u32) {
            let mut x = vec![0; n];
            let mut c = code;
            for v in x.iter_mut() {
                *v = c % j;
                c /= j;
            }
            let mut w = p.nu[x[0]] * p.emissions[x[0]].density(crate::model::Obs::Symbol(y[0]));
            for i in 1..n {
                w *= p.transition[x[i - 1]][x[i]]
                    * p.emissions[x[i]].density(crate::model::Obs::Symbol(y[i]));
            }
            total += w;
            for i in 0..n {
                marg[i][x[i]] += w;
            }
        }
        for row in marg.iter_mut() {
            row.iter_mut().for_each(|v| *v /= total);
        }
        (marg, total.ln())
    }

    #[test]
    fn single_step_is_bayes_rule() {
        let p = model();
        let y = Observations::Symbols(vec![2]);
        let f = forward_filter(&p, &y).unwrap();
        let z = 0.3 * 0.1 + 0.7 * 0.7;
        assert!((f.row(0)[0] - 0.03 / z).abs() < 1e-15);
        assert!((f.loglik - z.ln()).abs() < 1e-15);
        assert_eq!(smooth(&p, &y).unwrap().probs, f.probs);
    }

    #[test]
    fn identical_emissions_give_prior_marginals() {
        let p = finite(
            vec![0.9, 0.1],
            vec![vec![0.8, 0.2], vec![0.3, 0.7]],
            vec![vec![0.5, 0.5], vec![0.5, 0.5]],
        );
        let y = Observations::Symbols(vec![0, 1, 1, 0, 1]);
        let marg = p.state_marginals(5);
        for t in [forward_filter(&p, &y).unwrap(), smooth(&p, &y).unwrap()] {
            for i in 0..5 {
                for x in 0..2 {
                    assert!((t.row(i)[x] - marg[i][x]).abs() < 1e-12);
                }
            }
        }
    }

    #[test]
    fn filter_and_smoother_match_enumeration() {
        let p = model();
        let y = vec![0, 2, 1, 2, 0, 0];
        let obs = Observations::Symbols(y.clone());
        let s = smooth(&p, &obs).unwrap();
        let (marg, ll) = brute_marginals(&p, &y);
        for i in 0..y.len() {
            for x in 0..2 {
                assert!((s.row(i)[x] - marg[i][x]).abs() < 1e-12);
            }
        }
        assert!((s.loglik - ll).abs() < 1e-12);
        let f = forward_filter(&p, &obs).unwrap();
        for i in 0..y.len() {
            let (m, _) = brute_marginals(&p, &y[..=i]);
            assert!((f.row(i)[0] - m[i][0]).abs() < 1e-12);
        }
    }

    #[test]
    fn iid_smoothing_uses_own_observation_only() {
        let p = finite(
            vec![0.6, 0.4],
            vec![vec![0.6, 0.4], vec![0.6, 0.4]],
            vec![vec![0.9, 0.1], vec![0.2, 0.8]],
        );
        let s = smooth(&p, &Observations::Symbols(vec![0, 1, 1, 0])).unwrap();
        let post0 = 0.54 / (0.54 + 0.08);
        assert!((s.row(0)[0] - post0).abs() < 1e-14);
        assert!((s.row(3)[0] - post0).abs() < 1e-14);
    }

    #[test]
    fn impossible_observation_is_reported() {
        let p = finite(
            vec![0.5, 0.5],
            vec![vec![0.5, 0.5], vec![0.5, 0.5]],
            vec![vec![1.0, 0.0, 0.0], vec![0.0, 1.0, 0.0]],
        );
        let err = smooth(&p, &Observations::Symbols(vec![0, 2])).unwrap_err();
        assert!(matches!(err, Error::ImpossibleObservation { index: 1 }));
        // zero under a subset of states is fine
        assert!(smooth(&p, &Observations::Symbols(vec![0, 1])).is_ok());
    }

    #[test]
    fn ties_go_to_lowest_state() {
        let t = PosteriorTable {
            kind: PosteriorKind::Smoothing,
            n: 2,
            j: 2,
            probs: vec![0.7, 0.3, 0.5, 0.5],
            loglik: 0.0,
        };
        assert_eq!(t.argmax_labels(), vec![0, 0]);
    }

    #[test]
    fn tv_of_identical_models_is_zero() {
        let p = model();
        let tv = smoothing_tv_distance(&p, &p, &Observations::Symbols(vec![0, 1, 2])).unwrap();
        assert!(tv.iter().all(|&v| v == 0.0));
    }

    #[test]
    fn long_sequences_stay_normalized() {
        let p = model();
        let t = crate::model::sample_trajectory(&p, 200_000, 9).unwrap();
        let s = smooth(&p, &t.y).unwrap();
        assert!(s.loglik.is_finite());
        assert!(s.rows().all(|r| (r.iter().sum::<f64>() - 1.0).abs() < 1e-9));
    }
}
