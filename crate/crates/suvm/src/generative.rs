//! The learned model as a generative process, and exemplar likelihoods.
//!
//! An exemplar is created in four steps: pick the parts to render, pick
//! one viewlet per picked part, sample relative scales from the
//! scale-spring Gaussian (anchored at the anchor viewlet's rest scale),
//! then sample positions from the positional springs given those scales.
//! The likelihood of an exemplar is the product of the five factors
//! P(Y|S,V)·P(X|S,V)·P(A|V)·P(S|V)·P(V); X and Y are evaluated
//! independently given the scales.
//!
//! Geometry factors are densities over anchor-normalized offsets, which
//! makes them invariant to translating an exemplar and to rescaling its
//! positions and extents jointly. When an exemplar covers a strict subset
//! of the viewlets, the factors use the Gaussian marginal over that
//! subset (hidden viewlets marginalized out at their rest scales).

use nalgebra::{Cholesky, DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::raster::GrayRaster;
use crate::semantics::{CipcGraph, CipcRule, GpeEmbedding};
use crate::srn::{log_likelihood, Axis, NodeState, NormalizedGaussian, Srn};
use crate::util::seeded_rng;
use rand::Rng;

/// Appearance model of one viewlet: isotropic Gaussian in descriptor
/// space plus a representative pixel patch for rendering.
#[derive(Clone, Debug)]
pub struct ViewletAppearance {
    pub centroid: DVector<f64>,
    /// Per-dimension variance (mean intra-cluster variance / dimension).
    pub variance: f64,
    pub mean_patch: GrayRaster,
}

/// A full object model: spring network, parts, embedding and appearance.
#[derive(Clone, Debug)]
pub struct SuvModel {
    pub name: String,
    pub window_w: usize,
    pub window_h: usize,
    pub srn: Srn,
    pub cipc: CipcGraph,
    pub gpe: GpeEmbedding,
    /// Parallel to `srn.nodes`.
    pub appearance: Vec<ViewletAppearance>,
    /// Bernoulli inclusion probability of each part when sampling.
    pub part_inclusion: f64,
}

impl SuvModel {
    pub fn validate(&self) -> Result<()> {
        let n = self.srn.len();
        if self.appearance.len() != n || self.cipc.nodes != self.srn.nodes || self.gpe.nodes != self.srn.nodes {
            return Err(Error::rejected(
                "model components reference different viewlet sets",
            ));
        }
        for e in &self.srn.edges {
            for v in [
                e.stiffness_x,
                e.stiffness_y,
                e.stiffness_s,
                e.rest_x,
                e.rest_y,
                e.rest_log_scale,
            ] {
                if !v.is_finite() {
                    return Err(Error::rejected("non-finite spring parameter"));
                }
            }
        }
        for s in self.srn.scale_x.iter().chain(&self.srn.scale_y) {
            if !(s.is_finite() && *s > 0.0) {
                return Err(Error::rejected("non-finite node scale"));
            }
        }
        Ok(())
    }

    pub fn viewlet_count(&self) -> usize {
        self.srn.len()
    }

    /// Model-level aspect ratio of a node's window extents.
    fn aspect(&self, pos: usize) -> f64 {
        self.srn.scale_y[pos] / self.srn.scale_x[pos]
    }
}

/// One generated or observed object instance.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct Exemplar {
    /// Model word ids, sorted ascending.
    pub words: Vec<usize>,
    /// Window states parallel to `words` (base-image pixels).
    pub states: Vec<NodeState>,
    /// Squared descriptor distance of each appearance to its centroid.
    pub appearance_dist2: Vec<f64>,
    /// Sampled appearance vectors (empty when built from detections).
    #[serde(skip)]
    pub appearances: Vec<DVector<f64>>,
    /// Distinct part ids covered, sorted.
    pub parts: Vec<usize>,
    pub global_scale: f64,
}

impl Exemplar {
    pub fn len(&self) -> usize {
        self.words.len()
    }

    pub fn is_empty(&self) -> bool {
        self.words.is_empty()
    }

    /// Union of member windows: (x, y, w, h).
    pub fn bounding_box(&self) -> (f64, f64, f64, f64) {
        let mut x0 = f64::INFINITY;
        let mut y0 = f64::INFINITY;
        let mut x1 = f64::NEG_INFINITY;
        let mut y1 = f64::NEG_INFINITY;
        for s in &self.states {
            x0 = x0.min(s.x);
            y0 = y0.min(s.y);
            x1 = x1.max(s.x + s.extent_x);
            y1 = y1.max(s.y + s.extent_y);
        }
        (x0, y0, x1 - x0, y1 - y0)
    }

    /// Build from detection members (must be unique model words).
    pub fn from_members(
        model: &SuvModel,
        members: &[(usize, NodeState, f64)], // (word, state, assignment distance)
    ) -> Result<Exemplar> {
        let mut sorted: Vec<&(usize, NodeState, f64)> = members.iter().collect();
        sorted.sort_by_key(|m| m.0);
        for w in sorted.windows(2) {
            if w[0].0 == w[1].0 {
                return Err(Error::rejected("duplicate viewlet in exemplar"));
            }
        }
        let mut parts: Vec<usize> = sorted
            .iter()
            .filter_map(|m| model.cipc.part_of_word(m.0))
            .collect();
        parts.sort_unstable();
        parts.dedup();
        Ok(Exemplar {
            words: sorted.iter().map(|m| m.0).collect(),
            states: sorted.iter().map(|m| m.1).collect(),
            appearance_dist2: sorted.iter().map(|m| m.2 * m.2).collect(),
            appearances: Vec::new(),
            parts,
            global_scale: 1.0,
        })
    }
}

#[derive(Clone, Copy, Debug)]
pub struct SampleParams {
    pub global_scale: f64,
    pub seed: u64,
    /// Retries when the part selection comes out empty.
    pub max_retries: usize,
}

impl Default for SampleParams {
    fn default() -> Self {
        Self {
            global_scale: 1.0,
            seed: 0,
            max_retries: 16,
        }
    }
}

/// Sample one exemplar. Fully reproducible from the seed.
pub fn sample_exemplar(model: &SuvModel, params: &SampleParams) -> Result<Exemplar> {
    model.validate()?;
    if !(params.global_scale > 0.0) {
        return Err(Error::rejected("global scale must be positive"));
    }
    let mut rng = seeded_rng(params.seed);
    let n = model.srn.len();
    let anchor = model.srn.anchor();

    // (i) + (ii): parts, then one viewlet per picked part
    let members = model.cipc.members();
    let mut picked: Vec<usize> = Vec::new(); // node positions
    let mut picked_parts: Vec<usize> = Vec::new();
    for attempt in 0..=params.max_retries {
        picked.clear();
        picked_parts.clear();
        for (pid, part) in members.iter().enumerate() {
            if part.is_empty() {
                continue;
            }
            if rng.gen_range(0.0..1.0) < model.part_inclusion {
                let pos = part[rng.gen_range(0..part.len())];
                picked.push(pos);
                picked_parts.push(pid);
            }
        }
        if !picked.is_empty() {
            break;
        }
        if attempt == params.max_retries {
            return Err(Error::NoConvergence(format!(
                "part selection empty after {} attempts",
                params.max_retries + 1
            )));
        }
    }
    picked.sort_unstable();
    picked_parts.sort_unstable();

    // (iii): joint scales over the full network, anchored at the anchor's
    // rest extent; restriction to the picked subset samples the marginal
    let anchor_ext_x = model.srn.scale_x[anchor] * params.global_scale;
    let g_s = NormalizedGaussian::from_edges(n, anchor, None, &model.srn.axis_edges(Axis::S))?;
    let zeta_s = if n > 1 { g_s.sample(&mut rng) } else { DVector::zeros(0) };
    let mut extent_x = vec![0.0; n];
    let mut extent_y = vec![0.0; n];
    for p in 0..n {
        let log_ratio = if p == anchor {
            0.0
        } else {
            zeta_s[var_index(p, anchor)]
        };
        extent_x[p] = anchor_ext_x * log_ratio.exp();
        extent_y[p] = extent_x[p] * model.aspect(p);
    }

    // (iv): positions given scales
    let g_x = NormalizedGaussian::from_edges(
        n,
        anchor,
        Some(&extent_x),
        &model.srn.axis_edges(Axis::X),
    )?;
    let g_y = NormalizedGaussian::from_edges(
        n,
        anchor,
        Some(&extent_y),
        &model.srn.axis_edges(Axis::Y),
    )?;
    let zx = if n > 1 { g_x.sample(&mut rng) } else { DVector::zeros(0) };
    let zy = if n > 1 { g_y.sample(&mut rng) } else { DVector::zeros(0) };
    let mut states = Vec::with_capacity(n);
    for p in 0..n {
        let (x, y) = if p == anchor {
            (0.0, 0.0)
        } else {
            let v = var_index(p, anchor);
            (
                zx[v] * (extent_x[p] + extent_x[anchor]),
                zy[v] * (extent_y[p] + extent_y[anchor]),
            )
        };
        states.push(NodeState {
            x,
            y,
            extent_x: extent_x[p],
            extent_y: extent_y[p],
        });
    }

    // appearances for the picked viewlets
    let mut appearances = Vec::with_capacity(picked.len());
    let mut dist2 = Vec::with_capacity(picked.len());
    for &pos in &picked {
        let app = &model.appearance[pos];
        let sigma = app.variance.max(0.0).sqrt();
        let d = app.centroid.len();
        let noise = DVector::from_fn(d, |_, _| crate::util::standard_normal(&mut rng) * sigma);
        dist2.push(noise.norm_squared());
        appearances.push(&app.centroid + noise);
    }

    Ok(Exemplar {
        words: picked.iter().map(|&p| model.srn.nodes[p]).collect(),
        states: picked.iter().map(|&p| states[p]).collect(),
        appearance_dist2: dist2,
        appearances,
        parts: picked_parts.clone(),
        global_scale: params.global_scale,
    })
}

fn var_index(pos: usize, anchor: usize) -> usize {
    if pos < anchor {
        pos
    } else {
        pos - 1
    }
}

/// Per-factor breakdown of an exemplar's log-likelihood.
#[derive(Clone, Copy, Debug, Serialize, Deserialize)]
pub struct ExemplarLikelihood {
    pub x: f64,
    pub y: f64,
    pub scale: f64,
    pub appearance: f64,
    pub selection: f64,
}

impl ExemplarLikelihood {
    pub fn total(&self) -> f64 {
        self.x + self.y + self.scale + self.appearance + self.selection
    }
}

/// Evaluate the five log-factors of an exemplar.
pub fn exemplar_log_likelihood(model: &SuvModel, exemplar: &Exemplar) -> Result<ExemplarLikelihood> {
    let positions: Vec<usize> = exemplar
        .words
        .iter()
        .map(|&w| {
            model
                .srn
                .node_pos(w)
                .ok_or_else(|| Error::rejected(format!("word {w} is not a model viewlet")))
        })
        .collect::<Result<_>>()?;
    for s in &exemplar.states {
        if !(s.x.is_finite() && s.y.is_finite() && s.extent_x > 0.0 && s.extent_y > 0.0) {
            return Err(Error::rejected("non-finite exemplar state"));
        }
    }

    let selection = selection_log_prob(model, exemplar);
    let appearance = appearance_log_prob(model, exemplar, &positions);

    let (x, y, scale) = if exemplar.len() == model.srn.len() {
        // full cover: evaluate through the edge-assembled network directly
        let ll = log_likelihood(&model.srn, &exemplar.states)?;
        (ll.x, ll.y, ll.scale)
    } else if exemplar.len() <= 1 {
        (0.0, 0.0, 0.0)
    } else {
        let x = marginal_axis_log_density(model, exemplar, &positions, Axis::X)?;
        let y = marginal_axis_log_density(model, exemplar, &positions, Axis::Y)?;
        let s = marginal_axis_log_density(model, exemplar, &positions, Axis::S)?;
        (x, y, s)
    };

    Ok(ExemplarLikelihood {
        x,
        y,
        scale,
        appearance,
        selection,
    })
}

fn appearance_log_prob(model: &SuvModel, exemplar: &Exemplar, positions: &[usize]) -> f64 {
    let mut total = 0.0;
    for (k, &pos) in positions.iter().enumerate() {
        let app = &model.appearance[pos];
        let d = app.centroid.len().max(1) as f64;
        let var = app.variance.max(1e-6);
        total += -0.5 * d * (2.0 * std::f64::consts::PI * var).ln()
            - exemplar.appearance_dist2[k] / (2.0 * var);
    }
    total
}

/// log P(V_G): per part, a Bernoulli inclusion and a uniform choice among
/// the part's viewlets; a pair of directly exclusive viewlets appearing
/// together is a hard zero.
fn selection_log_prob(model: &SuvModel, exemplar: &Exemplar) -> f64 {
    let p_inc = model.part_inclusion.clamp(0.0, 1.0);
    // direct exclusion violations
    for e in &model.cipc.edges {
        if e.rule == CipcRule::ExclusiveSubstitutable
            && exemplar.words.binary_search(&e.u).is_ok()
            && exemplar.words.binary_search(&e.v).is_ok()
        {
            return f64::NEG_INFINITY;
        }
    }
    let members = model.cipc.members();
    let mut per_part = vec![0usize; model.cipc.part_count];
    for &w in &exemplar.words {
        if let Some(pid) = model.cipc.part_of_word(w) {
            per_part[pid] += 1;
        }
    }
    let mut total = 0.0;
    for (pid, &count) in per_part.iter().enumerate() {
        let size = members[pid].len().max(1) as f64;
        if count == 0 {
            if p_inc >= 1.0 {
                return f64::NEG_INFINITY;
            }
            total += (1.0 - p_inc).ln();
        } else {
            total += p_inc.max(f64::MIN_POSITIVE).ln() + count as f64 * (1.0 / size).ln();
        }
    }
    total
}

/// Gaussian marginal of one axis over a strict subset of viewlets.
///
/// Hidden viewlets take their rest extents at the exemplar's estimated
/// global scale (geometric mean of member extent ratios); the exemplar is
/// re-anchored at its highest-index member.
fn marginal_axis_log_density(
    model: &SuvModel,
    exemplar: &Exemplar,
    positions: &[usize],
    axis: Axis,
) -> Result<f64> {
    let srn = &model.srn;
    let n = srn.len();
    let anchor = srn.anchor();

    // gauge estimate from the members
    let mut log_gauge = 0.0;
    for (k, &pos) in positions.iter().enumerate() {
        log_gauge += (exemplar.states[k].extent_x / srn.scale_x[pos]).ln();
    }
    let gauge = (log_gauge / positions.len() as f64).exp();

    // full-network extents: observed for members, rest-at-gauge for hidden
    let model_scale: &[f64] = match axis {
        Axis::Y => &srn.scale_y,
        _ => &srn.scale_x,
    };
    let mut extents = vec![0.0; n];
    for p in 0..n {
        extents[p] = model_scale[p] * gauge;
    }
    for (k, &pos) in positions.iter().enumerate() {
        extents[pos] = match axis {
            Axis::Y => exemplar.states[k].extent_y,
            _ => exemplar.states[k].extent_x,
        };
    }

    let use_ext = !matches!(axis, Axis::S);
    let g = NormalizedGaussian::from_edges(
        n,
        anchor,
        if use_ext { Some(&extents) } else { None },
        &srn.axis_edges(axis),
    )?;
    let mean = g.mean();
    let cov = g.covariance();

    // exemplar anchor: highest node position among members
    let g0_k = (0..positions.len())
        .max_by_key(|&k| positions[k])
        .expect("non-empty exemplar");
    let g0 = positions[g0_k];

    // linear map T from full offsets to exemplar offsets
    let rows = positions.len() - 1;
    let mut t = DMatrix::zeros(rows, n - 1);
    let mut observed = DVector::zeros(rows);
    let mut r = 0;
    for (k, &pos) in positions.iter().enumerate() {
        if k == g0_k {
            continue;
        }
        let (num_d, obs) = match axis {
            Axis::X => (
                extents[pos] + extents[g0],
                (exemplar.states[k].x - exemplar.states[g0_k].x)
                    / (exemplar.states[k].extent_x + exemplar.states[g0_k].extent_x),
            ),
            Axis::Y => (
                extents[pos] + extents[g0],
                (exemplar.states[k].y - exemplar.states[g0_k].y)
                    / (exemplar.states[k].extent_y + exemplar.states[g0_k].extent_y),
            ),
            Axis::S => (
                1.0,
                (exemplar.states[k].extent_x / exemplar.states[g0_k].extent_x).ln(),
            ),
        };
        let cap = |p: usize| -> f64 {
            if use_ext {
                extents[p] + extents[anchor]
            } else {
                1.0
            }
        };
        t[(r, var_index(pos, anchor))] = cap(pos) / num_d;
        if g0 != anchor {
            t[(r, var_index(g0, anchor))] = -cap(g0) / num_d;
        }
        observed[r] = obs;
        r += 1;
    }

    let mean_m = &t * &mean;
    let cov_m = &t * cov * t.transpose();
    let chol = Cholesky::new(cov_m)
        .ok_or_else(|| Error::NoConvergence("marginal covariance not positive definite".into()))?;
    let diff = &observed - &mean_m;
    let solved = chol.solve(&diff);
    let quad = diff.dot(&solved);
    let logdet: f64 = 2.0 * chol.l_dirty().diagonal().iter().map(|v| v.ln()).sum::<f64>();
    Ok(-0.5 * quad - 0.5 * logdet - 0.5 * rows as f64 * (2.0 * std::f64::consts::PI).ln())
}

/// Paste each viewlet's representative patch at its sampled location.
/// The canvas grows to fit all windows plus a margin; the returned offset
/// maps exemplar coordinates to canvas pixels (canvas = state - offset).
pub fn render_exemplar(
    exemplar: &Exemplar,
    model: &SuvModel,
    margin: usize,
) -> Result<(GrayRaster, (f64, f64))> {
    if exemplar.is_empty() {
        return Err(Error::rejected("cannot render an empty exemplar"));
    }
    let (bx, by, bw, bh) = exemplar.bounding_box();
    let off_x = bx - margin as f64;
    let off_y = by - margin as f64;
    let w = bw.ceil() as usize + 2 * margin;
    let h = bh.ceil() as usize + 2 * margin;
    let mut canvas = GrayRaster::new(w, h);
    render_onto(&mut canvas, exemplar, model, (off_x, off_y))?;
    Ok((canvas, (off_x, off_y)))
}

/// Paste an exemplar onto an existing canvas with the given offset.
pub fn render_onto(
    canvas: &mut GrayRaster,
    exemplar: &Exemplar,
    model: &SuvModel,
    offset: (f64, f64),
) -> Result<()> {
    // deterministic order: ascending word id (exemplar is sorted)
    for (k, &word) in exemplar.words.iter().enumerate() {
        let pos = model
            .srn
            .node_pos(word)
            .ok_or_else(|| Error::rejected(format!("word {word} not in model")))?;
        let patch = &model.appearance[pos].mean_patch;
        let st = &exemplar.states[k];
        let pw = st.extent_x.round().max(1.0) as usize;
        let ph = st.extent_y.round().max(1.0) as usize;
        let resized = patch.resize(pw, ph);
        let cx = (st.x - offset.0).round() as isize;
        let cy = (st.y - offset.1).round() as isize;
        for dy in 0..ph {
            for dx in 0..pw {
                let px = cx + dx as isize;
                let py = cy + dy as isize;
                if px >= 0 && py >= 0 && (px as usize) < canvas.width() && (py as usize) < canvas.height() {
                    canvas.set(px as usize, py as usize, resized.get(dx, dy));
                }
            }
        }
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::synth::PlantedModelBuilder;

    fn small_model() -> SuvModel {
        PlantedModelBuilder::new(32, 32)
            .part_at(-2.0, 0.0, 1.0, 1)
            .part_at(0.0, 0.0, 1.0, 1)
            .part_at(2.0, 0.0, 1.0, 1)
            .stiffness(50.0, 50.0, 1e6)
            .chain_edges()
            .build()
    }

    #[test]
    fn fixed_seed_reproduces_exemplar() {
        let model = small_model();
        let p = SampleParams {
            global_scale: 1.0,
            seed: 31,
            max_retries: 4,
        };
        let a = sample_exemplar(&model, &p).unwrap();
        let b = sample_exemplar(&model, &p).unwrap();
        assert_eq!(a.words, b.words);
        assert_eq!(a.states, b.states);
        assert_eq!(a.appearance_dist2, b.appearance_dist2);
    }

    #[test]
    fn stiff_springs_pin_offsets_to_rest_values() {
        let model = PlantedModelBuilder::new(32, 32)
            .part_at(-2.0, 0.0, 1.0, 1)
            .part_at(0.0, 0.0, 1.0, 1)
            .part_at(2.0, 0.0, 1.0, 1)
            .stiffness(50.0e6, 50.0e6, 1e9)
            .chain_edges()
            .build();
        let ex = sample_exemplar(
            &model,
            &SampleParams {
                global_scale: 1.0,
                seed: 5,
                max_retries: 4,
            },
        )
        .unwrap();
        assert_eq!(ex.len(), 3);
        // offsets equal the planted rest offsets within 1e-2 normalized units
        for e in &model.srn.edges {
            let ki = ex.words.binary_search(&e.i).unwrap();
            let kj = ex.words.binary_search(&e.j).unwrap();
            let z = (ex.states[kj].x - ex.states[ki].x)
                / (ex.states[ki].extent_x + ex.states[kj].extent_x);
            assert!((z - e.rest_x).abs() < 1e-2, "offset {z} vs rest {}", e.rest_x);
        }
    }

    #[test]
    fn two_viewlet_sampling_variance_matches_precision() {
        // anchored pair: Var(normalized offset) = 1/c
        let c = 40.0;
        let model = PlantedModelBuilder::new(32, 32)
            .part_at(0.0, 0.0, 1.0, 1)
            .part_at(1.5, 0.0, 1.0, 1)
            .stiffness(c, c, 1e8)
            .chain_edges()
            .build();
        let mut zs = Vec::new();
        for seed in 0..10_000 {
            let ex = sample_exemplar(
                &model,
                &SampleParams {
                    global_scale: 1.0,
                    seed,
                    max_retries: 4,
                },
            )
            .unwrap();
            let z = (ex.states[1].x - ex.states[0].x)
                / (ex.states[0].extent_x + ex.states[1].extent_x);
            zs.push(z);
        }
        let mean = zs.iter().sum::<f64>() / zs.len() as f64;
        let var = zs.iter().map(|z| (z - mean) * (z - mean)).sum::<f64>() / zs.len() as f64;
        let expect = 1.0 / c;
        assert!(
            (var - expect).abs() < 0.05 * expect,
            "var {var} vs expected {expect}"
        );
    }

    #[test]
    fn exemplar_likelihood_invariant_to_translation_and_rescale() {
        let model = small_model();
        let ex = sample_exemplar(
            &model,
            &SampleParams {
                global_scale: 1.0,
                seed: 77,
                max_retries: 4,
            },
        )
        .unwrap();
        let base = exemplar_log_likelihood(&model, &ex).unwrap().total();
        let mut moved = ex.clone();
        for s in &mut moved.states {
            s.x += 512.0;
            s.y -= 64.0;
        }
        let t = exemplar_log_likelihood(&model, &moved).unwrap().total();
        assert!((t - base).abs() < 1e-9, "translation: {t} vs {base}");
        let mut scaled = ex.clone();
        for s in &mut scaled.states {
            s.x *= 2.0;
            s.y *= 2.0;
            s.extent_x *= 2.0;
            s.extent_y *= 2.0;
        }
        let r = exemplar_log_likelihood(&model, &scaled).unwrap().total();
        assert!((r - base).abs() < 1e-9, "rescale: {r} vs {base}");
    }

    #[test]
    fn rest_configuration_maximizes_continuous_factors() {
        let model = small_model();
        // exemplar exactly at rest: positions from the embedding
        let mut members = Vec::new();
        for (p, &w) in model.srn.nodes.iter().enumerate() {
            let ex_x = model.srn.scale_x[p];
            let ex_y = model.srn.scale_y[p];
            members.push((
                w,
                NodeState {
                    x: model.gpe.x[p] * model.window_w as f64,
                    y: model.gpe.y[p] * model.window_h as f64,
                    extent_x: ex_x,
                    extent_y: ex_y,
                },
                0.0,
            ));
        }
        let rest = Exemplar::from_members(&model, &members).unwrap();
        let base = exemplar_log_likelihood(&model, &rest).unwrap();
        // any perturbed configuration with the same viewlets scores lower
        // on the continuous factors
        let mut rng = seeded_rng(3);
        for _ in 0..20 {
            let mut pert = rest.clone();
            for s in &mut pert.states {
                s.x += rng.gen_range(-3.0..3.0);
                s.y += rng.gen_range(-3.0..3.0);
            }
            let ll = exemplar_log_likelihood(&model, &pert).unwrap();
            assert!(ll.x + ll.y <= base.x + base.y + 1e-9);
        }
        // appearance at the centroid maximizes the appearance factor
        let mut app = rest.clone();
        app.appearance_dist2 = vec![0.5; app.len()];
        let ll = exemplar_log_likelihood(&model, &app).unwrap();
        assert!(ll.appearance < base.appearance);
    }

    #[test]
    fn three_viewlet_x_factor_matches_dense_gaussian_oracle() {
        let model = small_model();
        let ex = sample_exemplar(
            &model,
            &SampleParams {
                global_scale: 1.0,
                seed: 11,
                max_retries: 4,
            },
        )
        .unwrap();
        assert_eq!(ex.len(), 3);
        let ll = exemplar_log_likelihood(&model, &ex).unwrap();

        // dense oracle over anchor-normalized x offsets with the observed
        // extents: mean by least squares, covariance by inversion
        use nalgebra::DMatrix;
        let ext: Vec<f64> = ex.states.iter().map(|s| s.extent_x).collect();
        let anchor = 2;
        let cap = |p: usize| ext[p] + ext[anchor];
        let mut rows = DMatrix::zeros(model.srn.edges.len(), 2);
        let mut rhs = DVector::zeros(model.srn.edges.len());
        for (r, e) in model.srn.edges.iter().enumerate() {
            let pi = model.srn.node_pos(e.i).unwrap();
            let pj = model.srn.node_pos(e.j).unwrap();
            let d = ext[pi] + ext[pj];
            let w = e.stiffness_x.sqrt();
            if pi != anchor {
                rows[(r, pi)] = -w * cap(pi) / d;
            }
            if pj != anchor {
                rows[(r, pj)] = w * cap(pj) / d;
            }
            rhs[r] = w * e.rest_x;
        }
        let a = rows.transpose() * &rows;
        let b = rows.transpose() * &rhs;
        let cov = a.clone().try_inverse().unwrap();
        let mean = &cov * &b;
        let zeta = DVector::from_fn(2, |v, _| {
            (ex.states[v].x - ex.states[anchor].x) / (ext[v] + ext[anchor])
        });
        let diff = &zeta - &mean;
        let quad = (&a * &diff).dot(&diff);
        let oracle = -0.5 * quad + 0.5 * a.determinant().ln()
            - (2.0 * std::f64::consts::PI).ln();
        let rel = (ll.x - oracle).abs() / oracle.abs().max(1.0);
        assert!(rel < 1e-9, "{} vs {oracle}", ll.x);
    }

    #[test]
    fn subset_exemplar_scores_and_respects_exclusion() {
        // model with a two-variant part: sampling never takes both, and
        // an exemplar holding both variants is a hard zero
        let model = PlantedModelBuilder::new(32, 32)
            .part_at(-2.0, 0.0, 1.0, 2)
            .part_at(0.0, 0.0, 1.0, 1)
            .part_at(2.0, 0.0, 1.0, 1)
            .stiffness(50.0, 50.0, 1e6)
            .hub_edges(1)
            .build();
        for seed in 0..200 {
            let ex = sample_exemplar(
                &model,
                &SampleParams {
                    global_scale: 1.0,
                    seed,
                    max_retries: 8,
                },
            )
            .unwrap();
            let ll = exemplar_log_likelihood(&model, &ex).unwrap();
            assert!(
                ll.selection.is_finite(),
                "sampler produced an exclusion violation"
            );
            assert!(ll.total().is_finite());
        }
        // force both variants of part 0 into one exemplar
        let v0 = model.srn.nodes[0];
        let v1 = model.srn.nodes[1];
        assert_eq!(model.cipc.part_of_word(v0), model.cipc.part_of_word(v1));
        let s = NodeState {
            x: 0.0,
            y: 0.0,
            extent_x: 32.0,
            extent_y: 32.0,
        };
        let bad = Exemplar::from_members(&model, &[(v0, s, 0.0), (v1, s, 0.0)]).unwrap();
        let ll = exemplar_log_likelihood(&model, &bad).unwrap();
        assert_eq!(ll.selection, f64::NEG_INFINITY);
    }

    #[test]
    fn sampling_likelihood_consistency() {
        // fixed small model, every part always included: the mean sampled
        // log-likelihood must match the closed-form expectation
        let model = small_model();
        let n_samples = 10_000;
        let mut lls = Vec::with_capacity(n_samples);
        for seed in 0..n_samples as u64 {
            let ex = sample_exemplar(
                &model,
                &SampleParams {
                    global_scale: 1.0,
                    seed,
                    max_retries: 4,
                },
            )
            .unwrap();
            lls.push(exemplar_log_likelihood(&model, &ex).unwrap());
        }
        // geometry: E[log p] = -n/2 - n/2 log 2π + ½ log|A| per axis, with
        // A at rest extents (scale springs are near-rigid here)
        let ext_x = model.srn.scale_x.clone();
        let ext_y = model.srn.scale_y.clone();
        let gx = NormalizedGaussian::from_edges(3, 2, Some(&ext_x), &model.srn.axis_edges(Axis::X))
            .unwrap();
        let gy = NormalizedGaussian::from_edges(3, 2, Some(&ext_y), &model.srn.axis_edges(Axis::Y))
            .unwrap();
        let gs = NormalizedGaussian::from_edges(3, 2, None, &model.srn.axis_edges(Axis::S)).unwrap();
        let d = model.appearance[0].centroid.len() as f64;
        let mut expect = gx.expected_log_density() + gy.expected_log_density() + gs.expected_log_density();
        for app in &model.appearance {
            let var = app.variance.max(1e-6);
            expect += -0.5 * d * (2.0 * std::f64::consts::PI * var).ln() - 0.5 * d;
        }
        // selection: p=1, single-viewlet parts ⇒ 0
        let totals: Vec<f64> = lls.iter().map(|l| l.total()).collect();
        let mean = totals.iter().sum::<f64>() / totals.len() as f64;
        let sd = (totals.iter().map(|t| (t - mean) * (t - mean)).sum::<f64>()
            / totals.len() as f64)
            .sqrt();
        let se = sd / (totals.len() as f64).sqrt();
        assert!(
            (mean - expect).abs() < 3.0 * se.max(1e-6),
            "mean {mean} vs expected {expect} (se {se})"
        );
    }

    #[test]
    fn single_viewlet_render_places_one_patch() {
        let model = small_model();
        let w = model.srn.nodes[0];
        let st = NodeState {
            x: 10.0,
            y: 12.0,
            extent_x: 32.0,
            extent_y: 32.0,
        };
        let ex = Exemplar::from_members(&model, &[(w, st, 0.0)]).unwrap();
        let (canvas, off) = render_exemplar(&ex, &model, 4).unwrap();
        assert_eq!(canvas.width(), 40);
        assert_eq!(canvas.height(), 40);
        assert_eq!(off, (6.0, 8.0));
        // the pasted region matches the viewlet's mean patch
        let p = model.srn.node_pos(w).unwrap();
        let patch = &model.appearance[p].mean_patch;
        for dy in [0usize, 15, 31] {
            for dx in [0usize, 15, 31] {
                assert_eq!(canvas.get(4 + dx, 4 + dy), patch.get(dx, dy));
            }
        }
    }
}
