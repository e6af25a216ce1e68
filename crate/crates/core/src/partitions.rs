//! Set partitions, the misclassification-error distance and its
//! permutation form, and restricted-growth-string enumeration.

use itertools::Itertools;

use crate::assignment;
use crate::error::{Error, Result};

/// Largest `n` accepted by [`enumerate_partitions`].
pub const MAX_ENUM_N: usize = 12;

/// Largest label count for which permutations are enumerated directly.
pub const MAX_ENUM_LABELS: usize = 6;

/// A set partition of `{0..n-1}`, blocks ordered by least element and
/// sorted internally, so equality is structural.
#[derive(Clone, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Partition {
    blocks: Vec<Vec<usize>>,
}

impl Partition {
    /// Builds from any labelling: `i ~ k` iff `labels[i] == labels[k]`.
    pub fn from_labels<T: Eq + Copy>(labels: &[T]) -> Self {
        let rgs = rgs_from_labels(labels);
        let k = rgs.iter().copied().max().map_or(0, |m| m + 1);
        let mut blocks = vec![Vec::new(); k];
        for (i, &b) in rgs.iter().enumerate() {
            blocks[b].push(i);
        }
        Self { blocks }
    }

    /// Validates disjointness, coverage of `0..n` and non-emptiness, then
    /// canonicalizes.
    pub fn from_blocks(mut blocks: Vec<Vec<usize>>, n: usize) -> Result<Self> {
        let mut seen = vec![false; n];
        for b in &mut blocks {
            if b.is_empty() {
                return Err(Error::InvalidArgument(
                    "partition has an empty block".into(),
                ));
            }
            b.sort_unstable();
            for &i in b.iter() {
                if i >= n {
                    return Err(Error::InvalidArgument(format!(
                        "index {} outside 1..{n}",
                        i + 1
                    )));
                }
                if std::mem::replace(&mut seen[i], true) {
                    return Err(Error::InvalidArgument(format!(
                        "index {} in two blocks",
                        i + 1
                    )));
                }
            }
        }
        if let Some(i) = seen.iter().position(|s| !s) {
            return Err(Error::InvalidArgument(format!(
                "index {} not covered",
                i + 1
            )));
        }
        blocks.sort_by_key(|b| b[0]);
        Ok(Self { blocks })
    }

    pub fn blocks(&self) -> &[Vec<usize>] {
        &self.blocks
    }

    pub fn num_blocks(&self) -> usize {
        self.blocks.len()
    }

    pub fn n(&self) -> usize {
        self.blocks.iter().map(Vec::len).sum()
    }

    /// Block index of each element (a restricted growth string).
    pub fn block_labels(&self) -> Vec<usize> {
        let mut out = vec![0; self.n()];
        for (b, block) in self.blocks.iter().enumerate() {
            for &i in block {
                out[i] = b;
            }
        }
        out
    }

    /// Blocks with 1-based indices, for serialization.
    pub fn to_one_based(&self) -> Vec<Vec<usize>> {
        self.blocks
            .iter()
            .map(|b| b.iter().map(|i| i + 1).collect())
            .collect()
    }

    pub fn from_one_based(blocks: Vec<Vec<usize>>) -> Result<Self> {
        let n = blocks.iter().map(Vec::len).sum();
        let zero: Result<Vec<Vec<usize>>> = blocks
            .into_iter()
            .map(|b| {
                b.into_iter()
                    .map(|i| {
                        i.checked_sub(1).ok_or_else(|| {
                            Error::InvalidArgument("index 0 in 1-based partition".into())
                        })
                    })
                    .collect()
            })
            .collect();
        Self::from_blocks(zero?, n)
    }
}

/// Restricted growth string of a labelling: first-occurrence order.
pub fn rgs_from_labels<T: Eq + Copy>(labels: &[T]) -> Vec<usize> {
    let mut seen: Vec<T> = Vec::new();
    labels
        .iter()
        .map(|l| match seen.iter().position(|s| s == l) {
            Some(k) => k,
            None => {
                seen.push(*l);
                seen.len() - 1
            }
        })
        .collect()
}

/// Maximum number of indices kept together by a block matching between two
/// labellings with `ka` and `kb` distinct values.
pub(crate) fn max_overlap(a: &[usize], ka: usize, b: &[usize], kb: usize) -> usize {
    let mut conf = vec![vec![0i64; kb]; ka];
    for (&u, &v) in a.iter().zip(b) {
        conf[u][v] += 1;
    }
    if ka.max(kb) <= 3 {
        return small_matching(&conf, ka, kb) as usize;
    }
    assignment::max_weight_matching(&conf).0 as usize
}

fn small_matching(conf: &[Vec<i64>], ka: usize, kb: usize) -> i64 {
    let (rows, cols, t) = if ka <= kb {
        (ka, kb, false)
    } else {
        (kb, ka, true)
    };
    let w = |r: usize, c: usize| if t { conf[c][r] } else { conf[r][c] };
    (0..cols)
        .permutations(rows)
        .map(|p| p.iter().enumerate().map(|(r, &c)| w(r, c)).sum::<i64>())
        .max()
        .unwrap_or(0)
}

/// Misclassification-error distance `1 − (1/n) max_matching Σ |C ∩ C'|`.
pub fn misclassification_loss(a: &Partition, b: &Partition) -> Result<f64> {
    let n = a.n();
    if b.n() != n {
        return Err(Error::DimensionMismatch(format!(
            "partitions of {n} and {} elements",
            b.n()
        )));
    }
    let m = max_overlap(
        &a.block_labels(),
        a.num_blocks(),
        &b.block_labels(),
        b.num_blocks(),
    );
    Ok(ratio(n - m, n))
}

/// `k / n` computed the same way everywhere so losses compare exactly.
pub(crate) fn ratio(k: usize, n: usize) -> f64 {
    k as f64 / n as f64
}

/// Best relabelling `τ` of `truth` onto `pred` (`τ[truth label] = pred
/// label`) and the resulting error rate `(1/n) Σ 1{pred_i ≠ τ(truth_i)}`.
///
/// For `J ≤ 6` all `J!` permutations are tried in lexicographic order and
/// the first optimum is returned; above that an assignment problem is
/// solved on the confusion matrix.
pub fn best_permutation_alignment(
    pred: &[usize],
    truth: &[usize],
    j: usize,
) -> Result<(Vec<usize>, f64)> {
    let n = pred.len();
    if truth.len() != n {
        return Err(Error::DimensionMismatch(format!(
            "{n} predictions, {} truths",
            truth.len()
        )));
    }
    if n == 0 {
        return Err(Error::InvalidArgument("empty label sequences".into()));
    }
    if let Some(&l) = pred.iter().chain(truth).find(|&&l| l >= j) {
        return Err(Error::InvalidArgument(format!(
            "label {} exceeds J = {j}",
            l + 1
        )));
    }
    // conf[t][p] = #{i : truth_i = t, pred_i = p}
    let mut conf = vec![vec![0i64; j]; j];
    for (&p, &t) in pred.iter().zip(truth) {
        conf[t][p] += 1;
    }
    let (tau, agree) = if j <= MAX_ENUM_LABELS {
        let mut best: Option<(Vec<usize>, i64)> = None;
        for p in (0..j).permutations(j) {
            let s: i64 = p.iter().enumerate().map(|(t, &q)| conf[t][q]).sum();
            if best.as_ref().is_none_or(|(_, b)| s > *b) {
                best = Some((p, s));
            }
        }
        best.expect("J >= 1")
    } else {
        let (s, m) = assignment::max_weight_matching(&conf);
        (m.into_iter().map(|c| c.expect("square")).collect(), s)
    };
    Ok((tau, ratio(n - agree as usize, n)))
}

/// `min_τ (1/n) Σ 1{h_i ≠ τ(x_i)}`.
pub fn permutation_overlap_loss(h: &[usize], x: &[usize], j: usize) -> Result<f64> {
    Ok(best_permutation_alignment(h, x, j)?.1)
}

/// Restricted growth strings of length `n` with at most `max_blocks`
/// distinct values, in lexicographic order.
#[derive(Clone, Debug)]
pub struct RgsIter {
    cur: Vec<usize>,
    max: Vec<usize>,
    max_blocks: usize,
    done: bool,
}

impl RgsIter {
    fn new(n: usize, max_blocks: usize) -> Self {
        Self {
            cur: vec![0; n],
            max: vec![0; n],
            max_blocks,
            done: n == 0 || max_blocks == 0,
        }
    }
}

impl Iterator for RgsIter {
    type Item = Vec<usize>;

    fn next(&mut self) -> Option<Vec<usize>> {
        if self.done {
            return None;
        }
        let out = self.cur.clone();
        // max[i] = largest value among cur[0..i]
        let n = self.cur.len();
        let mut i = n;
        loop {
            if i <= 1 {
                self.done = true;
                break;
            }
            i -= 1;
            if self.cur[i] <= self.max[i] && self.cur[i] + 1 < self.max_blocks {
                self.cur[i] += 1;
                let m = self.max[i].max(self.cur[i]);
                for k in i + 1..n {
                    self.cur[k] = 0;
                    self.max[k] = m;
                }
                break;
            }
        }
        Some(out)
    }
}

/// Every set partition of `{0..n-1}` into at most `max_blocks` blocks as a
/// restricted growth string, each exactly once, in canonical order.
pub fn enumerate_rgs(n: usize, max_blocks: usize) -> Result<RgsIter> {
    if n > MAX_ENUM_N {
        return Err(Error::LimitExceeded {
            what: "partition enumeration length",
            value: n as u128,
            limit: MAX_ENUM_N as u128,
        });
    }
    if n == 0 {
        return Err(Error::InvalidArgument("n must be >= 1".into()));
    }
    Ok(RgsIter::new(n, max_blocks))
}

/// [`enumerate_rgs`] mapped to [`Partition`]s.
pub fn enumerate_partitions(
    n: usize,
    max_blocks: usize,
) -> Result<impl Iterator<Item = Partition>> {
    Ok(enumerate_rgs(n, max_blocks)?.map(|r| Partition::from_labels(&r)))
}

/// Number of set partitions of an `n`-set into at most `k` blocks.
pub fn restricted_bell(n: usize, k: usize) -> u128 {
    // Stirling numbers of the second kind by the usual recurrence
    let mut s = vec![vec![0u128; n + 1]; n + 1];
    s[0][0] = 1;
    for i in 1..=n {
        for b in 1..=i {
            s[i][b] = b as u128 * s[i - 1][b] + s[i - 1][b - 1];
        }
    }
    (0..=k.min(n)).map(|b| s[n][b]).sum()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn p(blocks: &[&[usize]]) -> Partition {
        let b: Vec<Vec<usize>> = blocks.iter().map(|b| b.to_vec()).collect();
        Partition::from_one_based(b).unwrap()
    }

    #[test]
    fn from_labels_examples() {
        assert_eq!(Partition::from_labels(&[1, 1, 2]), p(&[&[1, 2], &[3]]));
        assert_eq!(Partition::from_labels(&[2, 2, 1]), p(&[&[1, 2], &[3]]));
        assert_eq!(
            Partition::from_labels(&[1, 2, 3, 1]),
            p(&[&[1, 4], &[2], &[3]])
        );
    }

    #[test]
    fn from_blocks_rejects_bad_input() {
        assert!(Partition::from_blocks(vec![vec![0], vec![0, 1]], 2).is_err());
        assert!(Partition::from_blocks(vec![vec![0]], 2).is_err());
        assert!(Partition::from_blocks(vec![vec![0, 1], vec![]], 2).is_err());
        let q = Partition::from_blocks(vec![vec![2, 1], vec![0]], 3).unwrap();
        assert_eq!(q.blocks(), &[vec![0], vec![1, 2]]);
    }

    #[test]
    fn loss_examples() {
        let a = p(&[&[1, 2], &[3]]);
        assert_eq!(misclassification_loss(&a, &a).unwrap(), 0.0);
        let b = p(&[&[1], &[2], &[3]]);
        assert!((misclassification_loss(&a, &b).unwrap() - 1.0 / 3.0).abs() < 1e-15);
        let singletons = p(&[&[1], &[2], &[3], &[4], &[5]]);
        let whole = p(&[&[1, 2, 3, 4, 5]]);
        assert!((misclassification_loss(&singletons, &whole).unwrap() - 0.8).abs() < 1e-15);
        assert!(misclassification_loss(&a, &whole).is_err());
    }

    #[test]
    fn alignment_examples() {
        let x = vec![0, 1, 2, 0, 1, 2, 2];
        assert_eq!(permutation_overlap_loss(&x, &x, 3).unwrap(), 0.0);
        let h: Vec<usize> = x.iter().map(|&l| [2, 0, 1][l]).collect();
        let (tau, err) = best_permutation_alignment(&h, &x, 3).unwrap();
        assert_eq!(err, 0.0);
        assert_eq!(tau, vec![2, 0, 1]);
    }

    #[test]
    fn alignment_above_enumeration_limit() {
        let x: Vec<usize> = (0..40).map(|i| i % 8).collect();
        let shift: Vec<usize> = x.iter().map(|&l| (l + 3) % 8).collect();
        assert_eq!(permutation_overlap_loss(&shift, &x, 8).unwrap(), 0.0);
        let mut noisy = shift.clone();
        noisy[0] = (noisy[0] + 1) % 8;
        assert_eq!(permutation_overlap_loss(&noisy, &x, 8).unwrap(), 1.0 / 40.0);
    }

    #[test]
    fn enumeration_counts() {
        assert_eq!(enumerate_partitions(3, 2).unwrap().count(), 4);
        assert_eq!(enumerate_partitions(1, 3).unwrap().count(), 1);
        assert_eq!(enumerate_partitions(4, 4).unwrap().count(), 15);
        for n in 1..=9 {
            for k in 1..=n {
                let all: Vec<Partition> = enumerate_partitions(n, k).unwrap().collect();
                assert_eq!(all.len() as u128, restricted_bell(n, k), "n={n} k={k}");
                let mut sorted = all.clone();
                sorted.sort();
                sorted.dedup();
                assert_eq!(sorted.len(), all.len());
                assert!(all.iter().all(|q| q.num_blocks() <= k));
            }
        }
        assert_eq!(restricted_bell(12, 12), 4_213_597);
        assert!(enumerate_partitions(13, 2).is_err());
    }

    #[test]
    fn rgs_order_is_lexicographic() {
        let all: Vec<Vec<usize>> = enumerate_rgs(4, 3).unwrap().collect();
        let mut sorted = all.clone();
        sorted.sort();
        assert_eq!(all, sorted);
        assert_eq!(all[0], vec![0, 0, 0, 0]);
    }
}
