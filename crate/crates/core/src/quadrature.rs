//! Composite Simpson quadrature over the union of emission supports.

use crate::model::EmissionModel;

pub const DEFAULT_NODES: usize = 1 << 14;

/// Nodes and weights of a composite Simpson rule.
#[derive(Clone, Debug)]
pub struct Grid {
    pub nodes: Vec<f64>,
    pub weights: Vec<f64>,
}

impl Grid {
    /// Simpson rule on `[lo, hi]` split at `breaks`, with about `total` nodes.
    ///
    /// Every piece between consecutive breakpoints gets an even number of
    /// subintervals proportional to its length, so discontinuities of
    /// piecewise-smooth integrands sit on piece boundaries. End nodes are
    /// nudged inside their piece so a jump is evaluated on the correct side.
    pub fn piecewise(mut breaks: Vec<f64>, total: usize) -> Self {
        breaks.sort_by(f64::total_cmp);
        breaks.dedup_by(|a, b| (*a - *b).abs() <= 1e-14 * a.abs().max(1.0));
        let mut nodes = Vec::new();
        let mut weights = Vec::new();
        if breaks.len() < 2 {
            return Self { nodes, weights };
        }
        let span = breaks[breaks.len() - 1] - breaks[0];
        for w in breaks.windows(2) {
            let (a, b) = (w[0], w[1]);
            let mut m = ((total as f64) * (b - a) / span).round() as usize;
            m = m.max(2);
            m += m % 2;
            let h = (b - a) / m as f64;
            let nudge = 1e-9 * h;
            for k in 0..=m {
                let c = if k == 0 || k == m {
                    1.0
                } else if k % 2 == 1 {
                    4.0
                } else {
                    2.0
                };
                let x = if k == 0 {
                    a + nudge
                } else if k == m {
                    b - nudge
                } else {
                    a + h * k as f64
                };
                nodes.push(x);
                weights.push(c * h / 3.0);
            }
        }
        Self { nodes, weights }
    }

    /// Grid covering the union of the effective supports of `emissions`
    /// (Gaussian components truncated at ±8σ; histogram bin edges kept as
    /// breakpoints). Gaps between disjoint support pieces are skipped.
    pub fn for_emissions(emissions: &[EmissionModel], total: usize) -> Self {
        let mut pieces: Vec<(f64, f64)> =
            emissions.iter().flat_map(|e| e.support_pieces()).collect();
        if pieces.is_empty() {
            return Self {
                nodes: Vec::new(),
                weights: Vec::new(),
            };
        }
        pieces.sort_by(|a, b| a.0.total_cmp(&b.0));
        let covered: f64 = merge(&pieces).iter().map(|(a, b)| b - a).sum();
        let mut grid = Self {
            nodes: Vec::new(),
            weights: Vec::new(),
        };
        for (a, b) in merge(&pieces) {
            let mut breaks = vec![a, b];
            for &(c, d) in &pieces {
                for e in [c, d] {
                    if e > a && e < b {
                        breaks.push(e);
                    }
                }
            }
            let share = ((total as f64) * (b - a) / covered).round() as usize;
            let part = Self::piecewise(breaks, share.max(2));
            grid.nodes.extend(part.nodes);
            grid.weights.extend(part.weights);
        }
        grid
    }

    pub fn integrate(&self, f: impl Fn(f64) -> f64) -> f64 {
        self.nodes
            .iter()
            .zip(&self.weights)
            .map(|(&x, &w)| w * f(x))
            .sum()
    }
}

fn merge(sorted: &[(f64, f64)]) -> Vec<(f64, f64)> {
    let mut out: Vec<(f64, f64)> = Vec::new();
    for &(a, b) in sorted {
        match out.last_mut() {
            Some(last) if a <= last.1 => last.1 = last.1.max(b),
            _ => out.push((a, b)),
        }
    }
    out
}
