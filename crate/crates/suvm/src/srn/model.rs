//! Spring network structure, precision matrices and Gaussian likelihoods.
//!
//! One node (the last, by convention) is the anchor: its position is the
//! translation gauge, its log extent the scale gauge. All densities are
//! over anchor-normalized offsets
//! `zeta_p = (x_p - x_A) / (ex_p + ex_A)` (and `log(ex_p / ex_A)` for the
//! scale axis), which are invariant to translating the configuration and
//! to rescaling positions and extents jointly, so the returned
//! log-likelihoods inherit both invariances exactly.

use nalgebra::{Cholesky, DMatrix, DVector, Dyn};
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum Axis {
    X,
    Y,
    S,
}

/// Spring between two viewlets, canonical orientation `i < j` (word ids).
///
/// Rest values are the empirical means of the pair statistics oriented
/// i -> j; the scale rest is kept as a log ratio (`rest_log_scale` =
/// mean log(ex_j / ex_i), so the rest ratio itself is its exponential).
#[derive(Clone, Copy, Debug, Serialize, Deserialize)]
pub struct SpringEdge {
    pub i: usize,
    pub j: usize,
    pub stiffness_x: f64,
    pub stiffness_y: f64,
    pub stiffness_s: f64,
    pub rest_x: f64,
    pub rest_y: f64,
    pub rest_log_scale: f64,
    pub support: u64,
    pub combined_variance: f64,
}

impl SpringEdge {
    /// Rest values oriented `from -> to` for one endpoint of the edge.
    pub fn rest_from(&self, from: usize) -> (f64, f64, f64) {
        if from == self.i {
            (self.rest_x, self.rest_y, self.rest_log_scale)
        } else {
            debug_assert_eq!(from, self.j);
            (-self.rest_x, -self.rest_y, -self.rest_log_scale)
        }
    }

    pub fn other(&self, word: usize) -> usize {
        if word == self.i {
            self.j
        } else {
            self.i
        }
    }

    pub fn stiffness(&self, axis: Axis) -> f64 {
        match axis {
            Axis::X => self.stiffness_x,
            Axis::Y => self.stiffness_y,
            Axis::S => self.stiffness_s,
        }
    }

    pub fn rest(&self, axis: Axis) -> f64 {
        match axis {
            Axis::X => self.rest_x,
            Axis::Y => self.rest_y,
            Axis::S => self.rest_log_scale,
        }
    }
}

/// One connected spring network over a set of viewlets (word ids).
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct Srn {
    /// Word ids, sorted ascending. The anchor is the last node.
    pub nodes: Vec<usize>,
    pub edges: Vec<SpringEdge>,
    /// Per-node learning-time scales (geometric-mean observed extents),
    /// parallel to `nodes`.
    pub scale_x: Vec<f64>,
    pub scale_y: Vec<f64>,
}

impl Srn {
    pub fn new(nodes: Vec<usize>, edges: Vec<SpringEdge>, scale_x: Vec<f64>, scale_y: Vec<f64>) -> Self {
        assert!(nodes.windows(2).all(|w| w[0] < w[1]), "nodes must be sorted");
        assert_eq!(nodes.len(), scale_x.len());
        assert_eq!(nodes.len(), scale_y.len());
        for e in &edges {
            assert!(e.i < e.j, "edge endpoints must be canonical (i < j)");
        }
        Self {
            nodes,
            edges,
            scale_x,
            scale_y,
        }
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    /// Anchor position (index into `nodes`).
    pub fn anchor(&self) -> usize {
        self.nodes.len() - 1
    }

    pub fn node_pos(&self, word: usize) -> Option<usize> {
        self.nodes.binary_search(&word).ok()
    }

    pub fn edge_between(&self, u: usize, v: usize) -> Option<&SpringEdge> {
        let (lo, hi) = if u < v { (u, v) } else { (v, u) };
        self.edges.iter().find(|e| e.i == lo && e.j == hi)
    }

    /// Adjacency over node positions for edges with positive stiffness on
    /// the given axis (or any axis when `axis` is None).
    pub fn adjacency(&self, axis: Option<Axis>) -> Vec<Vec<usize>> {
        let mut adj = vec![Vec::new(); self.nodes.len()];
        for e in &self.edges {
            let keep = match axis {
                Some(a) => e.stiffness(a) > 0.0,
                None => {
                    e.stiffness_x > 0.0 || e.stiffness_y > 0.0 || e.stiffness_s > 0.0
                }
            };
            if keep {
                let pi = self.node_pos(e.i).expect("edge endpoint in node set");
                let pj = self.node_pos(e.j).expect("edge endpoint in node set");
                adj[pi].push(pj);
                adj[pj].push(pi);
            }
        }
        adj
    }

    /// Node positions unreachable from the anchor on the given axis;
    /// empty when connected.
    pub fn unreachable(&self, axis: Option<Axis>) -> Vec<usize> {
        let adj = self.adjacency(axis);
        let mut seen = vec![false; self.nodes.len()];
        let mut stack = vec![self.anchor()];
        seen[self.anchor()] = true;
        while let Some(p) = stack.pop() {
            for &q in &adj[p] {
                if !seen[q] {
                    seen[q] = true;
                    stack.push(q);
                }
            }
        }
        (0..self.nodes.len()).filter(|&p| !seen[p]).collect()
    }

    pub fn is_connected(&self) -> bool {
        self.unreachable(None).is_empty()
    }

    /// Edges as (pos_i, pos_j, stiffness, rest) tuples for one axis.
    pub(crate) fn axis_edges(&self, axis: Axis) -> Vec<(usize, usize, f64, f64)> {
        self.edges
            .iter()
            .filter(|e| e.stiffness(axis) > 0.0)
            .map(|e| {
                let pi = self.node_pos(e.i).expect("edge endpoint in node set");
                let pj = self.node_pos(e.j).expect("edge endpoint in node set");
                (pi, pj, e.stiffness(axis), e.rest(axis))
            })
            .collect()
    }
}

/// Observed state of one node: window top-left corner and extents in
/// base-image pixels.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct NodeState {
    pub x: f64,
    pub y: f64,
    pub extent_x: f64,
    pub extent_y: f64,
}

/// Per-node states parallel to `Srn::nodes`.
pub type Configuration = Vec<NodeState>;

/// Symmetric (M-1)x(M-1) precision matrix over the non-anchor nodes.
///
/// Entry structure: diagonal `sum_j c_ij / (s_i + s_j)^2` (the sum runs
/// over every neighbor including the anchor), off-diagonal
/// `-c_ij / (s_i + s_j)^2`. The scale axis uses unit denominators since
/// log extent differences need no normalization.
#[derive(Clone, Debug)]
pub struct PrecisionMatrix {
    pub axis: Axis,
    pub matrix: DMatrix<f64>,
    /// Word ids of the non-anchor nodes, in matrix order.
    pub nodes: Vec<usize>,
}

/// Assemble the precision matrix for one axis with explicit per-node
/// scales (parallel to `srn.nodes`).
pub fn precision_matrix(srn: &Srn, axis: Axis, scales: &[f64]) -> Result<PrecisionMatrix> {
    assert_eq!(scales.len(), srn.len());
    let unreachable = srn.unreachable(Some(axis));
    if !unreachable.is_empty() {
        return Err(Error::DisconnectedNetwork {
            component: unreachable.iter().map(|&p| srn.nodes[p]).collect(),
        });
    }
    let n = srn.len() - 1;
    let anchor = srn.anchor();
    let var = |p: usize| -> Option<usize> {
        if p == anchor {
            None
        } else {
            Some(if p < anchor { p } else { p - 1 })
        }
    };
    let mut m = DMatrix::zeros(n, n);
    for (pi, pj, c, _) in srn.axis_edges(axis) {
        let denom = match axis {
            Axis::S => 1.0,
            _ => {
                let d = scales[pi] + scales[pj];
                d * d
            }
        };
        let w = c / denom;
        match (var(pi), var(pj)) {
            (Some(a), Some(b)) => {
                m[(a, a)] += w;
                m[(b, b)] += w;
                m[(a, b)] -= w;
                m[(b, a)] -= w;
            }
            (Some(a), None) | (None, Some(a)) => {
                m[(a, a)] += w;
            }
            (None, None) => unreachable!("self-loop on anchor"),
        }
    }
    let nodes = srn
        .nodes
        .iter()
        .enumerate()
        .filter(|&(p, _)| p != anchor)
        .map(|(_, &w)| w)
        .collect();
    Ok(PrecisionMatrix {
        axis,
        matrix: m,
        nodes,
    })
}

/// Gaussian over anchor-normalized offsets, assembled as the quadratic
/// Q(zeta) = zeta'A zeta - 2 b'zeta + gamma from the spring penalties
/// sum_e c_e (Z_e(zeta) - rest_e)^2. The density's precision is A and its
/// mean solves A m = b; rest values that are inconsistent around loops
/// shift Q by a constant (Q at the mean) that cancels in normalization.
#[derive(Clone, Debug)]
pub struct NormalizedGaussian {
    pub a: DMatrix<f64>,
    pub b: DVector<f64>,
    pub gamma: f64,
    chol: Cholesky<f64, Dyn>,
}

impl NormalizedGaussian {
    /// `extents`: per-node extents for the axis (None = unit, the scale
    /// axis); `edges`: (pos_i, pos_j, stiffness, rest) with rest oriented
    /// i -> j. `anchor` is a node position.
    pub fn from_edges(
        n_nodes: usize,
        anchor: usize,
        extents: Option<&[f64]>,
        edges: &[(usize, usize, f64, f64)],
    ) -> Result<Self> {
        assert!(anchor < n_nodes);
        let n = n_nodes - 1;
        let var = |p: usize| -> Option<usize> {
            if p == anchor {
                None
            } else {
                Some(if p < anchor { p } else { p - 1 })
            }
        };
        let ext = |p: usize| extents.map_or(1.0, |e| e[p]);
        let mut a = DMatrix::zeros(n, n);
        let mut b = DVector::zeros(n);
        let mut gamma = 0.0;
        for &(pi, pj, c, rest) in edges {
            if c <= 0.0 {
                continue;
            }
            let d = match extents {
                Some(e) => e[pi] + e[pj],
                None => 1.0,
            };
            // Z_e = u_i zeta_i + u_j zeta_j with u_p = ±(ext_p + ext_A)/d
            let mut terms: Vec<(usize, f64)> = Vec::with_capacity(2);
            if let Some(vi) = var(pi) {
                let cap = match extents {
                    Some(e) => e[pi] + ext(anchor),
                    None => 1.0,
                };
                terms.push((vi, -cap / d));
            }
            if let Some(vj) = var(pj) {
                let cap = match extents {
                    Some(e) => e[pj] + ext(anchor),
                    None => 1.0,
                };
                terms.push((vj, cap / d));
            }
            for &(va, ua) in &terms {
                for &(vb, ub) in &terms {
                    a[(va, vb)] += c * ua * ub;
                }
                b[va] += c * rest * ua;
            }
            gamma += c * rest * rest;
        }
        let chol = Cholesky::new(a.clone()).ok_or_else(|| Error::DisconnectedNetwork {
            component: Vec::new(),
        })?;
        Ok(Self { a, b, gamma, chol })
    }

    pub fn dim(&self) -> usize {
        self.a.nrows()
    }

    pub fn mean(&self) -> DVector<f64> {
        self.chol.solve(&self.b)
    }

    pub fn log_det_precision(&self) -> f64 {
        2.0 * self.chol.l_dirty().diagonal().iter().map(|v| v.ln()).sum::<f64>()
    }

    pub fn covariance(&self) -> DMatrix<f64> {
        self.chol.inverse()
    }

    /// Normalized log density at the observed offsets.
    pub fn log_density(&self, zeta: &DVector<f64>) -> f64 {
        assert_eq!(zeta.len(), self.dim());
        let n = self.dim() as f64;
        let q = (&self.a * zeta).dot(zeta) - 2.0 * self.b.dot(zeta) + self.gamma;
        let m = self.mean();
        let qstar = self.gamma - self.b.dot(&m);
        -0.5 * (q - qstar) + 0.5 * self.log_det_precision()
            - 0.5 * n * (2.0 * std::f64::consts::PI).ln()
    }

    /// Expected log density of a sample from the distribution itself:
    /// -n/2 - n/2 log 2π + ½ log|A|.
    pub fn expected_log_density(&self) -> f64 {
        let n = self.dim() as f64;
        -0.5 * n - 0.5 * n * (2.0 * std::f64::consts::PI).ln() + 0.5 * self.log_det_precision()
    }

    /// Draw offsets from N(mean, A⁻¹).
    pub fn sample(&self, rng: &mut impl Rng) -> DVector<f64> {
        let n = self.dim();
        let z = DVector::from_fn(n, |_, _| crate::util::standard_normal(rng));
        // x = m + L⁻ᵀ z has covariance (L Lᵀ)⁻¹ = A⁻¹
        let l = self.chol.l_dirty();
        let x = l
            .transpose()
            .solve_upper_triangular(&z)
            .expect("cholesky factor is invertible");
        self.mean() + x
    }
}

/// Per-axis log-likelihood of a full configuration.
#[derive(Clone, Copy, Debug)]
pub struct LogLikelihood {
    pub x: f64,
    pub y: f64,
    pub scale: f64,
}

impl LogLikelihood {
    pub fn total(&self) -> f64 {
        self.x + self.y + self.scale
    }
}

/// Anchor-normalized offsets of a configuration for one axis.
pub(crate) fn observed_offsets(srn: &Srn, config: &[NodeState], axis: Axis) -> DVector<f64> {
    let anchor = srn.anchor();
    let ac = &config[anchor];
    let n = srn.len() - 1;
    DVector::from_fn(n, |v, _| {
        let p = if v < anchor { v } else { v + 1 };
        let s = &config[p];
        match axis {
            Axis::X => (s.x - ac.x) / (s.extent_x + ac.extent_x),
            Axis::Y => (s.y - ac.y) / (s.extent_y + ac.extent_y),
            Axis::S => (s.extent_x / ac.extent_x).ln(),
        }
    })
}

pub(crate) fn axis_gaussian(srn: &Srn, config: &[NodeState], axis: Axis) -> Result<NormalizedGaussian> {
    let unreachable = srn.unreachable(Some(axis));
    if !unreachable.is_empty() {
        return Err(Error::DisconnectedNetwork {
            component: unreachable.iter().map(|&p| srn.nodes[p]).collect(),
        });
    }
    let edges = srn.axis_edges(axis);
    let extents: Option<Vec<f64>> = match axis {
        Axis::X => Some(config.iter().map(|s| s.extent_x).collect()),
        Axis::Y => Some(config.iter().map(|s| s.extent_y).collect()),
        Axis::S => None,
    };
    NormalizedGaussian::from_edges(srn.len(), srn.anchor(), extents.as_deref(), &edges)
}

/// Log-likelihood of a configuration covering every node of the network.
///
/// Each axis contributes the normalized log density of its
/// anchor-normalized offsets; the additive constant relative to the bare
/// `½ log|Λ| - ½ Σ c (Z - rest)²` form is
/// `Σ_p log(ex_p + ex_A) - (M-1)/2 log 2π + ½ Q(mean)` per axis (the
/// first term converts the raw-coordinate precision to offset space, the
/// last accounts for rest values that cannot all be met simultaneously).
pub fn log_likelihood(srn: &Srn, config: &[NodeState]) -> Result<LogLikelihood> {
    assert_eq!(config.len(), srn.len(), "configuration must cover every node");
    for s in config {
        if !(s.x.is_finite() && s.y.is_finite() && s.extent_x > 0.0 && s.extent_y > 0.0
            && s.extent_x.is_finite()
            && s.extent_y.is_finite())
        {
            return Err(Error::rejected(format!("non-finite configuration state {s:?}")));
        }
    }
    let mut vals = [0.0; 3];
    for (k, axis) in [Axis::X, Axis::Y, Axis::S].into_iter().enumerate() {
        let g = axis_gaussian(srn, config, axis)?;
        let zeta = observed_offsets(srn, config, axis);
        vals[k] = g.log_density(&zeta);
    }
    Ok(LogLikelihood {
        x: vals[0],
        y: vals[1],
        scale: vals[2],
    })
}
