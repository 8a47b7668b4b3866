//! Sparse stiffness estimation and component extraction.
//!
//! Edges survive when their combined variance stays below the threshold;
//! a retained edge gets the per-axis stiffness `1/(Var + lambda)`, which
//! is the upper bound the exact convex problem admits (see
//! [`super::convex`]), taken as the point estimate. Lowering the
//! threshold (or raising lambda) prunes the pair graph until the giant
//! connected components that remain are the object-category networks.

use crate::srn::model::{SpringEdge, Srn};
use crate::srn::stats::PairStats;
use crate::util::UnionFind;

#[derive(Clone, Copy, Debug)]
pub struct SparsifyParams {
    /// L1 regularization strength; also floors the stiffness at 1/lambda.
    pub lambda: f64,
    /// Combined-variance threshold above which a pair gets no edge.
    pub variance_threshold: f64,
    /// Minimum co-occurrence samples for a pair to be considered.
    pub min_support: u64,
}

impl Default for SparsifyParams {
    fn default() -> Self {
        Self {
            lambda: 0.01,
            variance_threshold: 0.15,
            min_support: 20,
        }
    }
}

impl SparsifyParams {
    /// The stiffness value at which the threshold rule and the bound
    /// meet: edges kept at this threshold have stiffness at least
    /// `1/(variance_threshold + lambda)`.
    pub fn matched_stiffness(&self) -> f64 {
        1.0 / (self.variance_threshold + self.lambda)
    }
}

/// Threshold rule: keep pairs with enough support and combined variance
/// at most the threshold; stiffness per axis is `1/(Var_axis + lambda)`,
/// rest values are the empirical means.
pub fn sparsify(stats: &PairStats, params: &SparsifyParams) -> Vec<SpringEdge> {
    assert!(params.lambda > 0.0, "lambda must be positive");
    let mut edges = Vec::new();
    for (&(i, j), acc) in stats.iter_pairs() {
        if acc.count() < params.min_support {
            continue;
        }
        let vx = acc.off_x.variance();
        let vy = acc.off_y.variance();
        let vs = acc.log_scale.variance();
        let combined = vx + vy + vs;
        if combined > params.variance_threshold {
            continue;
        }
        edges.push(SpringEdge {
            i,
            j,
            stiffness_x: 1.0 / (vx + params.lambda),
            stiffness_y: 1.0 / (vy + params.lambda),
            stiffness_s: 1.0 / (vs + params.lambda),
            rest_x: acc.off_x.mean,
            rest_y: acc.off_y.mean,
            rest_log_scale: acc.log_scale.mean,
            support: acc.count(),
            combined_variance: combined,
        });
    }
    edges
}

#[derive(Clone, Copy, Debug)]
pub struct ComponentParams {
    /// Components smaller than this are background, not object models.
    pub min_component_size: usize,
}

impl Default for ComponentParams {
    fn default() -> Self {
        Self {
            min_component_size: 5,
        }
    }
}

/// Connected components of the sparsified pair graph, largest first.
/// Components below the minimum size are dropped (background words).
/// Per-node scales come from the corpus extent statistics.
pub fn giant_components(
    edges: &[SpringEdge],
    stats: &PairStats,
    params: &ComponentParams,
) -> Vec<Srn> {
    let k = stats.word_universe();
    let mut uf = UnionFind::new(k);
    let mut has_edge = vec![false; k];
    for e in edges {
        uf.union(e.i, e.j);
        has_edge[e.i] = true;
        has_edge[e.j] = true;
    }
    let mut components: Vec<Vec<usize>> = uf
        .components()
        .into_iter()
        .filter(|c| c.len() >= params.min_component_size.max(2) && c.iter().any(|&w| has_edge[w]))
        .collect();
    // components() sorts by size desc already; keep a deterministic tie
    // order on the smallest member
    components.sort_by(|a, b| b.len().cmp(&a.len()).then(a[0].cmp(&b[0])));

    components
        .into_iter()
        .map(|mut nodes| {
            nodes.sort_unstable();
            let node_set: std::collections::HashSet<usize> = nodes.iter().copied().collect();
            let comp_edges: Vec<SpringEdge> = edges
                .iter()
                .filter(|e| node_set.contains(&e.i))
                .copied()
                .collect();
            let scale_x: Vec<f64> = nodes.iter().map(|&w| stats.mean_extent_x(w, 1.0)).collect();
            let scale_y: Vec<f64> = nodes.iter().map(|&w| stats.mean_extent_y(w, 1.0)).collect();
            Srn::new(nodes, comp_edges, scale_x, scale_y)
        })
        .collect()
}
