//! Semantic structure of a learned spring network: parts clustering and
//! the global positional embedding.
//!
//! Two viewlets belong to the same part when they are interchangeable
//! views of it. The clustering joins a pair either because the viewlets
//! never co-occur yet relate to shared neighbors identically (exclusive
//! substitutes, e.g. two poses of the same arm), or because they sit on a
//! very stable spring and agree with their shared neighbors (slightly
//! shifted versions of the same view). Connected components of these join
//! edges are the parts.
//!
//! The embedding assigns every viewlet a global position and scale that
//! best satisfy the pairwise rest constraints, in the least-squares sense,
//! via block-coordinate sweeps. Coordinates are reported in a canonical
//! frame: anchor viewlet at the origin with unit scale, positions in
//! units of the canonical window.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::srn::{PairStats, Srn};
use crate::util::UnionFind;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum CipcRule {
    /// Mutually exclusive viewlets with matching shared-neighbor geometry.
    ExclusiveSubstitutable,
    /// Stable spring edge with matching shared-neighbor geometry.
    StableShifted,
}

#[derive(Clone, Copy, Debug, Serialize, Deserialize)]
pub struct CipcEdge {
    pub u: usize,
    pub v: usize,
    pub rule: CipcRule,
}

/// Parts clustering over the viewlets of one network.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct CipcGraph {
    /// Word ids, same order as the source network's nodes.
    pub nodes: Vec<usize>,
    pub edges: Vec<CipcEdge>,
    /// Part id per node, contiguous from 0, parallel to `nodes`.
    pub part_of: Vec<usize>,
    pub part_count: usize,
}

impl CipcGraph {
    pub fn part_of_word(&self, word: usize) -> Option<usize> {
        self.nodes
            .binary_search(&word)
            .ok()
            .map(|p| self.part_of[p])
    }

    /// Node positions grouped by part id.
    pub fn members(&self) -> Vec<Vec<usize>> {
        let mut out = vec![Vec::new(); self.part_count];
        for (pos, &pid) in self.part_of.iter().enumerate() {
            out[pid].push(pos);
        }
        out
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct CipcParams {
    /// A pair counts as mutually exclusive when its co-occurrence count is
    /// at most this fraction of the rarer word's occurrence count.
    pub exclusion_cap_fraction: f64,
    /// Minimum number of shared neighbors whose geometry must agree.
    pub min_shared_neighbors: usize,
    /// Per-axis rest-value agreement tolerance (normalized units; the
    /// scale axis compares log ratios).
    pub geometric_tolerance: f64,
    /// An edge is "very stable" when its combined variance falls in this
    /// lowest quantile of retained-edge variances.
    pub stable_variance_quantile: f64,
}

impl Default for CipcParams {
    fn default() -> Self {
        Self {
            exclusion_cap_fraction: 0.05,
            min_shared_neighbors: 2,
            geometric_tolerance: 0.15,
            stable_variance_quantile: 0.1,
        }
    }
}

/// Build the parts clustering for one network.
pub fn cipc_build(srn: &Srn, stats: &PairStats, params: &CipcParams) -> CipcGraph {
    let n = srn.len();
    let mut neighbor_sets: Vec<std::collections::BTreeMap<usize, usize>> = vec![Default::default(); n];
    for (ei, e) in srn.edges.iter().enumerate() {
        let pi = srn.node_pos(e.i).unwrap();
        let pj = srn.node_pos(e.j).unwrap();
        neighbor_sets[pi].insert(pj, ei);
        neighbor_sets[pj].insert(pi, ei);
    }

    // stability cutoff: the lowest quantile of retained edge variances
    let mut variances: Vec<f64> = srn.edges.iter().map(|e| e.combined_variance).collect();
    variances.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let stable_cut = if variances.is_empty() {
        0.0
    } else {
        let idx = ((variances.len() as f64 * params.stable_variance_quantile).floor() as usize)
            .min(variances.len() - 1);
        variances[idx]
    };

    let mut edges = Vec::new();
    let mut uf = UnionFind::new(n);

    // geometry agreement across shared neighbors: for each shared
    // neighbor w, the rest offsets u->w and v->w must agree per axis
    let agree = |pu: usize, pv: usize| -> Option<usize> {
        let shared: Vec<usize> = neighbor_sets[pu]
            .keys()
            .filter(|w| neighbor_sets[pv].contains_key(w) && **w != pu && **w != pv)
            .copied()
            .collect();
        if shared.len() < params.min_shared_neighbors {
            return None;
        }
        for &pw in &shared {
            let eu = &srn.edges[neighbor_sets[pu][&pw]];
            let ev = &srn.edges[neighbor_sets[pv][&pw]];
            let (ux, uy, us) = eu.rest_from(srn.nodes[pu]);
            let (vx, vy, vs) = ev.rest_from(srn.nodes[pv]);
            if (ux - vx).abs() > params.geometric_tolerance
                || (uy - vy).abs() > params.geometric_tolerance
                || (us - vs).abs() > params.geometric_tolerance
            {
                return None;
            }
        }
        Some(shared.len())
    };

    for pu in 0..n {
        for pv in pu + 1..n {
            let wu = srn.nodes[pu];
            let wv = srn.nodes[pv];
            let has_edge = neighbor_sets[pu].contains_key(&pv);
            if !has_edge {
                // rule (i): mutually exclusive substitutes
                let co = stats.pair(wu, wv).map_or(0, |a| a.count());
                let occ = stats.word_counts[wu].min(stats.word_counts[wv]);
                let cap = (occ as f64 * params.exclusion_cap_fraction).floor() as u64;
                if co <= cap && agree(pu, pv).is_some() {
                    edges.push(CipcEdge {
                        u: wu,
                        v: wv,
                        rule: CipcRule::ExclusiveSubstitutable,
                    });
                    uf.union(pu, pv);
                }
            } else {
                // rule (ii): stable shifted versions
                let e = &srn.edges[neighbor_sets[pu][&pv]];
                if e.combined_variance <= stable_cut && agree(pu, pv).is_some() {
                    edges.push(CipcEdge {
                        u: wu,
                        v: wv,
                        rule: CipcRule::StableShifted,
                    });
                    uf.union(pu, pv);
                }
            }
        }
    }

    // contiguous part ids in order of first member
    let mut part_of = vec![usize::MAX; n];
    let mut next = 0;
    for p in 0..n {
        let root = uf.find(p);
        if part_of[root] == usize::MAX {
            part_of[root] = next;
            next += 1;
        }
        part_of[p] = part_of[root];
    }
    CipcGraph {
        nodes: srn.nodes.clone(),
        edges,
        part_of,
        part_count: next,
    }
}

/// Global position and scale per viewlet.
///
/// `x` is in canonical-window-width units, `y` in window-height units,
/// both at anchor scale; `scale` is the per-viewlet relative scale with
/// the anchor at 1. `stress` is the final value of the minimized
/// objective (weighted squared rest-constraint violation).
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct GpeEmbedding {
    pub nodes: Vec<usize>,
    pub x: Vec<f64>,
    pub y: Vec<f64>,
    pub scale: Vec<f64>,
    pub stress: f64,
    pub converged: bool,
}

impl GpeEmbedding {
    pub fn pos_of_word(&self, word: usize) -> Option<(f64, f64, f64)> {
        self.nodes
            .binary_search(&word)
            .ok()
            .map(|p| (self.x[p], self.y[p], self.scale[p]))
    }
}

#[derive(Clone, Copy, Debug)]
pub struct GpeParams {
    pub max_iters: usize,
    /// Stop when a full sweep improves the stress by less than this.
    pub tol: f64,
}

impl Default for GpeParams {
    fn default() -> Self {
        Self {
            max_iters: 1000,
            tol: 1e-12,
        }
    }
}

/// Embed the network: log scales first (their constraints do not involve
/// positions), then x and y given the solved scales. Each problem is a
/// weighted least squares solved by block-coordinate sweeps from a
/// breadth-first initialization; every single-coordinate update is the
/// exact minimizer, so the stress never increases.
pub fn gpe_embed(srn: &Srn, params: &GpeParams) -> Result<GpeEmbedding> {
    if !srn.is_connected() {
        let comp = srn.unreachable(None);
        return Err(Error::DisconnectedNetwork {
            component: comp.iter().map(|&p| srn.nodes[p]).collect(),
        });
    }
    let n = srn.len();
    let anchor = srn.anchor();

    // adjacency with edge indices
    let mut adj: Vec<Vec<(usize, usize)>> = vec![Vec::new(); n];
    for (ei, e) in srn.edges.iter().enumerate() {
        let pi = srn.node_pos(e.i).unwrap();
        let pj = srn.node_pos(e.j).unwrap();
        adj[pi].push((pj, ei));
        adj[pj].push((pi, ei));
    }

    // --- scale problem: minimize Σ c_s (u_j - u_i - rest_log)² , u = log scale
    let mut u = bfs_init(srn, &adj, anchor, |e, from| e.rest_from(from).2, |_| 1.0);
    let scale_stress = |u: &[f64]| -> f64 {
        srn.edges
            .iter()
            .map(|e| {
                let pi = srn.node_pos(e.i).unwrap();
                let pj = srn.node_pos(e.j).unwrap();
                let r = u[pj] - u[pi] - e.rest_log_scale;
                e.stiffness_s * r * r
            })
            .sum()
    };
    let mut stress_s = scale_stress(&u);
    let mut converged = false;
    for _ in 0..params.max_iters {
        for p in 0..n {
            if p == anchor {
                continue;
            }
            let mut wsum = 0.0;
            let mut target = 0.0;
            for &(q, ei) in &adj[p] {
                let e = &srn.edges[ei];
                let c = e.stiffness_s;
                if c <= 0.0 {
                    continue;
                }
                // rest oriented q -> p
                let r = e.rest_from(srn.nodes[q]).2;
                wsum += c;
                target += c * (u[q] + r);
            }
            if wsum > 0.0 {
                u[p] = target / wsum;
            }
        }
        let s = scale_stress(&u);
        debug_assert!(s <= stress_s * (1.0 + 1e-9) + 1e-12, "scale stress rose");
        if stress_s - s < params.tol {
            stress_s = s;
            converged = true;
            break;
        }
        stress_s = s;
    }
    let scale: Vec<f64> = u.iter().map(|v| v.exp()).collect();

    // --- positional problems: minimize Σ c ((p_j - p_i)/(S_i + S_j) - rest)²
    let denom: Vec<Vec<f64>> = srn
        .edges
        .iter()
        .map(|e| {
            let pi = srn.node_pos(e.i).unwrap();
            let pj = srn.node_pos(e.j).unwrap();
            vec![scale[pi] + scale[pj]]
        })
        .collect();
    let solve_axis = |rest_of: &dyn Fn(&crate::srn::SpringEdge, usize) -> f64,
                      stiff_of: &dyn Fn(&crate::srn::SpringEdge) -> f64|
     -> (Vec<f64>, f64, bool) {
        let mut pos = bfs_init(srn, &adj, anchor, |e, from| {
            let pi = srn.node_pos(e.i).unwrap();
            let pj = srn.node_pos(e.j).unwrap();
            rest_of(e, from) * (scale[pi] + scale[pj])
        }, |_| 1.0);
        let stress = |pos: &[f64]| -> f64 {
            srn.edges
                .iter()
                .enumerate()
                .map(|(ei, e)| {
                    let pi = srn.node_pos(e.i).unwrap();
                    let pj = srn.node_pos(e.j).unwrap();
                    let z = (pos[pj] - pos[pi]) / denom[ei][0];
                    let r = z - rest_of(e, e.i);
                    stiff_of(e) * r * r
                })
                .sum()
        };
        let mut cur = stress(&pos);
        let mut conv = false;
        for _ in 0..params.max_iters {
            for p in 0..n {
                if p == anchor {
                    continue;
                }
                let mut wsum = 0.0;
                let mut target = 0.0;
                for &(q, ei) in &adj[p] {
                    let e = &srn.edges[ei];
                    let c = stiff_of(e);
                    if c <= 0.0 {
                        continue;
                    }
                    let d = denom[ei][0];
                    let w = c / (d * d);
                    let r = rest_of(e, srn.nodes[q]); // oriented q -> p
                    wsum += w;
                    target += w * (pos[q] + r * d);
                }
                if wsum > 0.0 {
                    pos[p] = target / wsum;
                }
            }
            let s = stress(&pos);
            debug_assert!(s <= cur * (1.0 + 1e-9) + 1e-12, "positional stress rose");
            if cur - s < params.tol {
                cur = s;
                conv = true;
                break;
            }
            cur = s;
        }
        (pos, cur, conv)
    };

    let (x, stress_x, cx) = solve_axis(&|e, from| e.rest_from(from).0, &|e| e.stiffness_x);
    let (y, stress_y, cy) = solve_axis(&|e, from| e.rest_from(from).1, &|e| e.stiffness_y);

    let converged = converged && cx && cy;
    if !converged {
        log::warn!("positional embedding did not fully converge; returning best-so-far");
    }
    Ok(GpeEmbedding {
        nodes: srn.nodes.clone(),
        x,
        y,
        scale,
        stress: stress_x + stress_y + stress_s,
        converged,
    })
}

/// Breadth-first placement from the anchor: each node is first reached
/// through some edge and placed at its neighbor's value plus the rest
/// offset (scaled by `offset_of`'s own convention).
fn bfs_init(
    srn: &Srn,
    adj: &[Vec<(usize, usize)>],
    anchor: usize,
    offset_of: impl Fn(&crate::srn::SpringEdge, usize) -> f64,
    _weight: impl Fn(&crate::srn::SpringEdge) -> f64,
) -> Vec<f64> {
    let n = srn.len();
    let mut val = vec![0.0; n];
    let mut seen = vec![false; n];
    seen[anchor] = true;
    let mut queue = std::collections::VecDeque::from([anchor]);
    while let Some(p) = queue.pop_front() {
        for &(q, ei) in &adj[p] {
            if !seen[q] {
                seen[q] = true;
                // offset oriented p -> q
                val[q] = val[p] + offset_of(&srn.edges[ei], srn.nodes[p]);
                queue.push_back(q);
            }
        }
    }
    val
}

/// Per-part center and scale span in the embedding.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct PartRegion {
    pub part: usize,
    pub center_x: f64,
    pub center_y: f64,
    pub mean_scale: f64,
    pub min_scale: f64,
    pub max_scale: f64,
    pub member_count: usize,
}

/// Summarize each part: mean embedded position and the scale range of its
/// member viewlets (a part whose span contains another's sits "above" it
/// in the object's hierarchy).
pub fn part_regions(embedding: &GpeEmbedding, cipc: &CipcGraph) -> Vec<PartRegion> {
    assert_eq!(embedding.nodes, cipc.nodes, "structures cover different viewlets");
    let mut out = Vec::with_capacity(cipc.part_count);
    for (pid, members) in cipc.members().into_iter().enumerate() {
        let n = members.len().max(1) as f64;
        let cx = members.iter().map(|&p| embedding.x[p]).sum::<f64>() / n;
        let cy = members.iter().map(|&p| embedding.y[p]).sum::<f64>() / n;
        let ms = members.iter().map(|&p| embedding.scale[p]).sum::<f64>() / n;
        let mut lo = f64::INFINITY;
        let mut hi = f64::NEG_INFINITY;
        for &p in &members {
            lo = lo.min(embedding.scale[p]);
            hi = hi.max(embedding.scale[p]);
        }
        out.push(PartRegion {
            part: pid,
            center_x: cx,
            center_y: cy,
            mean_scale: ms,
            min_scale: lo,
            max_scale: hi,
            member_count: members.len(),
        });
    }
    out
}
