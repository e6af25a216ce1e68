//! Dense Hungarian algorithm for square integer cost matrices.

/// Returns `assignment[row] = column` minimizing the total cost.
pub fn solve(costs: &[Vec<i64>]) -> Vec<usize> {
    let n = costs.len();
    if n == 0 {
        return Vec::new();
    }
    debug_assert!(costs.iter().all(|row| row.len() == n));

    let inf = i64::MAX / 4;
    let mut u = vec![0i64; n + 1];
    let mut v = vec![0i64; n + 1];
    let mut p = vec![0usize; n + 1];
    let mut way = vec![0usize; n + 1];

    for i in 1..=n {
        p[0] = i;
        let mut j0 = 0usize;
        let mut minv = vec![inf; n + 1];
        let mut used = vec![false; n + 1];
        loop {
            used[j0] = true;
            let i0 = p[j0];
            let mut delta = inf;
            let mut j1 = 0usize;
            for j in 1..=n {
                if used[j] {
                    continue;
                }
                let cur = costs[i0 - 1][j - 1] - u[i0] - v[j];
                if cur < minv[j] {
                    minv[j] = cur;
                    way[j] = j0;
                }
                if minv[j] < delta {
                    delta = minv[j];
                    j1 = j;
                }
            }
            for j in 0..=n {
                if used[j] {
                    u[p[j]] += delta;
                    v[j] -= delta;
                } else {
                    minv[j] -= delta;
                }
            }
            j0 = j1;
            if p[j0] == 0 {
                break;
            }
        }
        loop {
            let j1 = way[j0];
            p[j0] = p[j1];
            j0 = j1;
            if j0 == 0 {
                break;
            }
        }
    }

    let mut assignment = vec![0usize; n];
    for j in 1..=n {
        if p[j] > 0 {
            assignment[p[j] - 1] = j - 1;
        }
    }
    assignment
}

/// Maximum total weight of a matching in a rectangular nonnegative weight
/// matrix, with the matching itself (`rows → Some(column)`).
pub fn max_weight_matching(weights: &[Vec<i64>]) -> (i64, Vec<Option<usize>>) {
    let rows = weights.len();
    let cols = weights.first().map_or(0, Vec::len);
    let m = rows.max(cols);
    let mut costs = vec![vec![0i64; m]; m];
    for (r, row) in weights.iter().enumerate() {
        for (c, &w) in row.iter().enumerate() {
            costs[r][c] = -w;
        }
    }
    let a = solve(&costs);
    let mut total = 0;
    let matching = (0..rows)
        .map(|r| {
            let c = a[r];
            if c < cols {
                total += weights[r][c];
                Some(c)
            } else {
                None
            }
        })
        .collect();
    (total, matching)
}

#[cfg(test)]
mod tests {
    use super::*;
    use itertools::Itertools;

    #[test]
    fn solves_small_assignment() {
        let costs = vec![vec![4, 1, 3], vec![2, 0, 5], vec![3, 2, 2]];
        let a = solve(&costs);
        let total: i64 = a.iter().enumerate().map(|(i, &j)| costs[i][j]).sum();
        assert_eq!(total, 5);
    }

    #[test]
    fn matches_exhaustive_search() {
        let mut state = 12345u64;
        let mut next = || {
            state = state
                .wrapping_mul(6364136223846793005)
                .wrapping_add(1442695040888963407);
            ((state >> 33) % 10) as i64
        };
        for _ in 0..200 {
            let (r, c) = (1 + (next() % 4) as usize, 1 + (next() % 4) as usize);
            let w: Vec<Vec<i64>> = (0..r).map(|_| (0..c).map(|_| next()).collect()).collect();
            let (best, _) = max_weight_matching(&w);
            let brute = if r <= c {
                (0..c)
                    .permutations(r)
                    .map(|p| p.iter().enumerate().map(|(i, &j)| w[i][j]).sum::<i64>())
                    .max()
                    .unwrap()
            } else {
                (0..r)
                    .permutations(c)
                    .map(|p| p.iter().enumerate().map(|(j, &i)| w[i][j]).sum::<i64>())
                    .max()
                    .unwrap()
            };
            assert_eq!(best, brute, "{w:?}");
        }
    }
}
