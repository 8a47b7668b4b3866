//! Object detection and part localization with a learned model.
//!
//! Detection is agglomerative, not exhaustive: every scanned window is
//! assigned a word, non-viewlet words are dropped, and the remaining
//! detections are linked whenever a spring edge between their words is
//! satisfied within a chi-square residual threshold. Connected components
//! of these links are the candidate instances; a candidate is emitted
//! when it covers enough distinct parts. A spatial hash bounds the number
//! of pairs tested, keeping the whole pass linear in the number of
//! scanned patches.

use serde::{Deserialize, Serialize};

use crate::dictionary::{scan_image, ScanParams, VisualDictionary, WordDetection};
use crate::error::{Error, Result};
use crate::generative::{exemplar_log_likelihood, Exemplar, SuvModel};
use crate::raster::GrayRaster;
use crate::semantics::CipcRule;
use crate::srn::NodeState;
use crate::util::{geometric_median, UnionFind};

/// 99th percentile of the chi-square distribution with 3 degrees of
/// freedom: one squared standardized residual per axis.
pub const CHI2_99_3DOF: f64 = 11.344866730144373;

/// Axis-aligned box in base-image pixels.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct BoxF {
    pub x: f64,
    pub y: f64,
    pub w: f64,
    pub h: f64,
}

impl BoxF {
    pub fn area(&self) -> f64 {
        self.w.max(0.0) * self.h.max(0.0)
    }

    pub fn iou(&self, other: &BoxF) -> f64 {
        let x0 = self.x.max(other.x);
        let y0 = self.y.max(other.y);
        let x1 = (self.x + self.w).min(other.x + other.w);
        let y1 = (self.y + self.h).min(other.y + other.h);
        let inter = (x1 - x0).max(0.0) * (y1 - y0).max(0.0);
        let union = self.area() + other.area() - inter;
        if union <= 0.0 {
            0.0
        } else {
            inter / union
        }
    }
}

/// One detected object instance.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct ObjectDetection {
    pub bbox: BoxF,
    pub members: Vec<WordDetection>,
    /// Distinct part ids covered, sorted.
    pub parts: Vec<usize>,
    /// Exemplar log-likelihood of the member group.
    pub score: f64,
}

#[derive(Clone, Copy, Debug)]
pub struct DetectParams {
    pub stride: usize,
    pub pyramid_ratio: f64,
    /// Percentile of the training assignment distances above which a
    /// scanned window is dropped (None keeps every assignment).
    pub distance_cutoff_percentile: Option<f64>,
    /// Maximum pairwise residual for a compatibility link.
    pub compatibility_threshold: f64,
    /// Minimum number of distinct parts a group must cover.
    pub part_threshold: usize,
    /// Overlap suppression threshold.
    pub nms_iou: f64,
}

impl Default for DetectParams {
    fn default() -> Self {
        Self {
            stride: 16,
            pyramid_ratio: std::f64::consts::FRAC_1_SQRT_2,
            distance_cutoff_percentile: Some(99.0),
            compatibility_threshold: CHI2_99_3DOF,
            part_threshold: 3,
            nms_iou: 0.5,
        }
    }
}

/// Pairwise spring residual between two detections whose words share an
/// edge: `c_x(Z_x-rest)² + c_y(Z_y-rest)² + c_s(log Z_s-rest)²`.
pub fn pairwise_compatibility(
    a: &WordDetection,
    b: &WordDetection,
    model: &SuvModel,
    threshold: f64,
) -> Result<(f64, bool)> {
    let edge = model
        .srn
        .edge_between(a.word, b.word)
        .ok_or_else(|| Error::rejected(format!("no spring edge between words {} and {}", a.word, b.word)))?;
    // orient the statistics from the lower word id to the higher
    let (lo, hi) = if a.word < b.word { (a, b) } else { (b, a) };
    let zx = (hi.x - lo.x) / (lo.extent_x + hi.extent_x);
    let zy = (hi.y - lo.y) / (lo.extent_y + hi.extent_y);
    let zs = (hi.extent_x / lo.extent_x).ln();
    let residual = edge.stiffness_x * (zx - edge.rest_x).powi(2)
        + edge.stiffness_y * (zy - edge.rest_y).powi(2)
        + edge.stiffness_s * (zs - edge.rest_log_scale).powi(2);
    Ok((residual, residual <= threshold))
}

/// Scan an image and group the detected viewlets into object instances.
pub fn detect_objects(
    image: &GrayRaster,
    model: &SuvModel,
    dict: &VisualDictionary,
    params: &DetectParams,
) -> Result<Vec<ObjectDetection>> {
    let cutoff = params
        .distance_cutoff_percentile
        .map(|p| dict.distance_at_percentile(p));
    let detections = scan_image(
        image,
        dict,
        &ScanParams {
            stride: params.stride,
            pyramid_ratio: params.pyramid_ratio,
            distance_cutoff: cutoff,
        },
    )?;
    Ok(group_detections(&detections, model, params))
}

/// Group word detections into structurally compatible components and emit
/// the ones covering enough distinct parts. Works on any detection list
/// (the scan step is separate so synthetic detections can be fed in).
pub fn group_detections(
    detections: &[WordDetection],
    model: &SuvModel,
    params: &DetectParams,
) -> Vec<ObjectDetection> {
    // keep only model viewlets
    let members: Vec<&WordDetection> = detections
        .iter()
        .filter(|d| model.srn.node_pos(d.word).is_some())
        .collect();
    let n = members.len();
    if n == 0 {
        return Vec::new();
    }

    // spring reach: the largest center distance (in units of summed
    // extents) any edge can accept at the residual threshold
    let mut reach: f64 = 0.0;
    for e in &model.srn.edges {
        let slack_x = (params.compatibility_threshold / e.stiffness_x.max(1e-12)).sqrt();
        let slack_y = (params.compatibility_threshold / e.stiffness_y.max(1e-12)).sqrt();
        reach = reach
            .max(e.rest_x.abs() + slack_x)
            .max(e.rest_y.abs() + slack_y);
    }
    reach = reach.max(0.5);

    // spatial hash over window centers; bucket side = 2x canonical window
    let bucket = 2.0 * model.window_w.max(model.window_h) as f64;
    let mut grid: std::collections::HashMap<(i64, i64), Vec<usize>> = Default::default();
    let cell_of = |d: &WordDetection| -> (i64, i64) {
        (
            ((d.x + d.extent_x * 0.5) / bucket).floor() as i64,
            ((d.y + d.extent_y * 0.5) / bucket).floor() as i64,
        )
    };
    let max_extent = members
        .iter()
        .map(|d| d.extent_x.max(d.extent_y))
        .fold(0.0f64, f64::max);
    for (i, d) in members.iter().enumerate() {
        grid.entry(cell_of(d)).or_default().push(i);
    }

    let mut uf = UnionFind::new(n);
    for (i, di) in members.iter().enumerate() {
        let radius = reach * (di.extent_x.max(di.extent_y) + max_extent);
        let cells = (radius / bucket).ceil() as i64;
        let (cx, cy) = cell_of(di);
        for gx in -cells..=cells {
            for gy in -cells..=cells {
                let Some(candidates) = grid.get(&(cx + gx, cy + gy)) else {
                    continue;
                };
                for &j in candidates {
                    if j <= i {
                        continue;
                    }
                    let dj = members[j];
                    if dj.word == di.word {
                        continue;
                    }
                    if model.srn.edge_between(di.word, dj.word).is_none() {
                        continue;
                    }
                    if let Ok((_, pass)) =
                        pairwise_compatibility(di, dj, model, params.compatibility_threshold)
                    {
                        if pass {
                            uf.union(i, j);
                        }
                    }
                }
            }
        }
    }

    let mut out = Vec::new();
    for group in uf.components() {
        if group.len() < 2 {
            continue;
        }
        if let Some(det) = emit_group(&group, &members, model, params) {
            out.push(det);
        }
    }
    suppress_duplicates(out, params.nms_iou)
}

/// Prune a component to one detection per word, drop exclusion conflicts,
/// then score it if it covers enough parts.
fn emit_group(
    group: &[usize],
    members: &[&WordDetection],
    model: &SuvModel,
    params: &DetectParams,
) -> Option<ObjectDetection> {
    // best detection per word (smallest assignment distance)
    let mut best: std::collections::BTreeMap<usize, &WordDetection> = Default::default();
    for &i in group {
        let d = members[i];
        best.entry(d.word)
            .and_modify(|cur| {
                if d.distance < cur.distance {
                    *cur = d;
                }
            })
            .or_insert(d);
    }
    // exclusion conflicts: keep the member with the smaller distance
    loop {
        let mut drop_word = None;
        'outer: for e in &model.cipc.edges {
            if e.rule != CipcRule::ExclusiveSubstitutable {
                continue;
            }
            if let (Some(u), Some(v)) = (best.get(&e.u), best.get(&e.v)) {
                drop_word = Some(if u.distance <= v.distance { e.v } else { e.u });
                break 'outer;
            }
        }
        match drop_word {
            Some(w) => {
                best.remove(&w);
            }
            None => break,
        }
    }
    if best.len() < 2 {
        return None;
    }

    let mut parts: Vec<usize> = best
        .keys()
        .filter_map(|&w| model.cipc.part_of_word(w))
        .collect();
    parts.sort_unstable();
    parts.dedup();
    if parts.len() < params.part_threshold {
        return None;
    }

    let kept: Vec<WordDetection> = best.values().map(|d| **d).collect();
    let exemplar_members: Vec<(usize, NodeState, f64)> = kept
        .iter()
        .map(|d| {
            (
                d.word,
                NodeState {
                    x: d.x,
                    y: d.y,
                    extent_x: d.extent_x,
                    extent_y: d.extent_y,
                },
                d.distance,
            )
        })
        .collect();
    let exemplar = Exemplar::from_members(model, &exemplar_members).ok()?;
    let score = exemplar_log_likelihood(model, &exemplar).ok()?.total();
    if !score.is_finite() {
        return None;
    }

    let mut x0 = f64::INFINITY;
    let mut y0 = f64::INFINITY;
    let mut x1 = f64::NEG_INFINITY;
    let mut y1 = f64::NEG_INFINITY;
    for d in &kept {
        x0 = x0.min(d.x);
        y0 = y0.min(d.y);
        x1 = x1.max(d.x + d.extent_x);
        y1 = y1.max(d.y + d.extent_y);
    }
    Some(ObjectDetection {
        bbox: BoxF {
            x: x0,
            y: y0,
            w: x1 - x0,
            h: y1 - y0,
        },
        members: kept,
        parts,
        score,
    })
}

/// Greedy overlap suppression: keep the highest score, drop overlaps.
pub fn suppress_duplicates(mut detections: Vec<ObjectDetection>, iou: f64) -> Vec<ObjectDetection> {
    detections.sort_by(|a, b| {
        b.score
            .partial_cmp(&a.score)
            .unwrap_or(std::cmp::Ordering::Equal)
            .then(a.bbox.x.partial_cmp(&b.bbox.x).unwrap_or(std::cmp::Ordering::Equal))
            .then(a.bbox.y.partial_cmp(&b.bbox.y).unwrap_or(std::cmp::Ordering::Equal))
    });
    let mut kept: Vec<ObjectDetection> = Vec::new();
    for d in detections {
        if kept.iter().all(|k| k.bbox.iou(&d.bbox) <= iou) {
            kept.push(d);
        }
    }
    kept
}

/// A localized part with its vote statistics.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct PartLocalization {
    pub part: usize,
    pub bbox: BoxF,
    pub votes: usize,
    /// Mean distance of the votes to the fused center, in units of the
    /// fused extent (lower is tighter).
    pub dispersion: f64,
}

/// Locate a target part from the members of one detection: every member
/// votes for the part's center and scale through the embedding offsets;
/// votes fuse by a weighted geometric median (weights from direct spring
/// stiffness to the part when present, uniform otherwise).
pub fn localize_part(
    detection: &ObjectDetection,
    model: &SuvModel,
    part: usize,
) -> Option<PartLocalization> {
    let members = model.cipc.members();
    if part >= members.len() {
        return None;
    }
    let part_positions = &members[part];
    if part_positions.is_empty() {
        return None;
    }
    let part_x =
        part_positions.iter().map(|&p| model.gpe.x[p]).sum::<f64>() / part_positions.len() as f64;
    let part_y =
        part_positions.iter().map(|&p| model.gpe.y[p]).sum::<f64>() / part_positions.len() as f64;
    let part_s = part_positions.iter().map(|&p| model.gpe.scale[p]).sum::<f64>()
        / part_positions.len() as f64;

    let mut centers = Vec::new();
    let mut weights = Vec::new();
    let mut log_ext_x = Vec::new();
    let mut log_ext_y = Vec::new();
    for d in &detection.members {
        let Some(pos) = model.srn.node_pos(d.word) else {
            continue;
        };
        let (vx, vy, vs) = (model.gpe.x[pos], model.gpe.y[pos], model.gpe.scale[pos]);
        if !(vs > 0.0) {
            continue;
        }
        // the member's own scale ties embedding units to pixels
        let ex = (part_s / vs) * d.extent_x;
        let ey = (part_s / vs) * d.extent_y;
        let tl_x = d.x + (part_x - vx) * d.extent_x / vs;
        let tl_y = d.y + (part_y - vy) * d.extent_y / vs;
        centers.push((tl_x + ex * 0.5, tl_y + ey * 0.5));
        log_ext_x.push(ex.ln());
        log_ext_y.push(ey.ln());
        // weight by the stiffest direct spring into the part
        let mut w = 0.0f64;
        for &pp in part_positions {
            if let Some(e) = model.srn.edge_between(d.word, model.srn.nodes[pp]) {
                w = w.max(e.stiffness_x + e.stiffness_y);
            }
        }
        weights.push(if w > 0.0 { w } else { 1.0 });
    }
    if centers.is_empty() {
        return None;
    }
    let (cx, cy) = geometric_median(&centers, &weights);
    let wsum: f64 = weights.iter().sum();
    let ex = (log_ext_x
        .iter()
        .zip(&weights)
        .map(|(l, w)| l * w)
        .sum::<f64>()
        / wsum)
        .exp();
    let ey = (log_ext_y
        .iter()
        .zip(&weights)
        .map(|(l, w)| l * w)
        .sum::<f64>()
        / wsum)
        .exp();
    let dispersion = centers
        .iter()
        .map(|c| ((c.0 - cx).powi(2) + (c.1 - cy).powi(2)).sqrt())
        .sum::<f64>()
        / centers.len() as f64
        / ex.max(1e-9);
    Some(PartLocalization {
        part,
        bbox: BoxF {
            x: cx - ex * 0.5,
            y: cy - ey * 0.5,
            w: ex,
            h: ey,
        },
        votes: centers.len(),
        dispersion,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::generative::{sample_exemplar, SampleParams};
    use crate::synth::PlantedModelBuilder;

    fn planted() -> SuvModel {
        PlantedModelBuilder::new(32, 32)
            .part_at(-1.5, 0.0, 1.0, 1)
            .part_at(0.0, 0.0, 1.0, 1)
            .part_at(1.5, 0.0, 1.0, 1)
            .part_at(0.0, 1.5, 1.0, 1)
            .stiffness(200.0, 200.0, 200.0)
            .hub_edges(1)
            .build()
    }

    fn detections_from_exemplar(ex: &crate::generative::Exemplar) -> Vec<WordDetection> {
        ex.words
            .iter()
            .zip(&ex.states)
            .map(|(&word, s)| WordDetection {
                word,
                x: s.x,
                y: s.y,
                extent_x: s.extent_x,
                extent_y: s.extent_y,
                distance: 0.0,
            })
            .collect()
    }

    #[test]
    fn zero_stress_pair_passes_compatibility() {
        let model = planted();
        let e = &model.srn.edges[0];
        let (pi, pj) = (
            model.srn.node_pos(e.i).unwrap(),
            model.srn.node_pos(e.j).unwrap(),
        );
        let (sx_i, sx_j) = (model.srn.scale_x[pi], model.srn.scale_x[pj]);
        let a = WordDetection {
            word: e.i,
            x: 0.0,
            y: 0.0,
            extent_x: sx_i,
            extent_y: model.srn.scale_y[pi],
            distance: 0.0,
        };
        let b = WordDetection {
            word: e.j,
            x: e.rest_x * (sx_i + sx_j),
            y: e.rest_y * (model.srn.scale_y[pi] + model.srn.scale_y[pj]),
            extent_x: sx_j * (e.rest_log_scale).exp(),
            extent_y: model.srn.scale_y[pj] * (e.rest_log_scale).exp(),
            distance: 0.0,
        };
        // extents at rest ratio: z_s = log(ext_j/ext_i) must equal rest
        let (residual, pass) =
            pairwise_compatibility(&a, &b, &model, CHI2_99_3DOF).unwrap();
        assert!(residual < 1e-9, "residual {residual}");
        assert!(pass);
    }

    #[test]
    fn ten_sigma_offset_fails_compatibility() {
        let model = planted();
        let e = &model.srn.edges[0];
        let (pi, pj) = (
            model.srn.node_pos(e.i).unwrap(),
            model.srn.node_pos(e.j).unwrap(),
        );
        let d = model.srn.scale_x[pi] + model.srn.scale_x[pj];
        let sigma = (1.0 / e.stiffness_x).sqrt();
        let a = WordDetection {
            word: e.i,
            x: 0.0,
            y: 0.0,
            extent_x: model.srn.scale_x[pi],
            extent_y: model.srn.scale_y[pi],
            distance: 0.0,
        };
        let b = WordDetection {
            word: e.j,
            x: (e.rest_x + 10.0 * sigma) * d,
            y: e.rest_y * (model.srn.scale_y[pi] + model.srn.scale_y[pj]),
            extent_x: model.srn.scale_x[pj],
            extent_y: model.srn.scale_y[pj],
            distance: 0.0,
        };
        let (residual, pass) = pairwise_compatibility(&a, &b, &model, CHI2_99_3DOF).unwrap();
        assert!(residual >= 100.0 - 1e-6, "residual {residual}");
        assert!(!pass);
    }

    #[test]
    fn no_edge_pair_is_rejected() {
        let model = planted();
        // words 0 and 2 are both spokes (edges only to the hub)
        let mk = |word: usize| WordDetection {
            word,
            x: 0.0,
            y: 0.0,
            extent_x: 32.0,
            extent_y: 32.0,
            distance: 0.0,
        };
        assert!(pairwise_compatibility(&mk(0), &mk(2), &model, CHI2_99_3DOF).is_err());
    }

    #[test]
    fn monte_carlo_pass_rate_near_99_percent() {
        // pairs sampled from the model itself follow the chi-square law
        let model = PlantedModelBuilder::new(32, 32)
            .part_at(0.0, 0.0, 1.0, 1)
            .part_at(1.5, 0.0, 1.0, 1)
            .stiffness(60.0, 60.0, 60.0)
            .chain_edges()
            .build();
        let mut pass = 0usize;
        let trials = 10_000;
        for seed in 0..trials {
            let ex = sample_exemplar(
                &model,
                &SampleParams {
                    global_scale: 1.0,
                    seed: seed as u64,
                    max_retries: 4,
                },
            )
            .unwrap();
            let dets = detections_from_exemplar(&ex);
            let (_, ok) =
                pairwise_compatibility(&dets[0], &dets[1], &model, CHI2_99_3DOF).unwrap();
            if ok {
                pass += 1;
            }
        }
        let rate = pass as f64 / trials as f64;
        assert!((rate - 0.99).abs() <= 0.01, "pass rate {rate}");
    }

    #[test]
    fn noiseless_exemplar_detected_once() {
        let model = planted();
        let ex = sample_exemplar(
            &model,
            &SampleParams {
                global_scale: 1.0,
                seed: 9,
                max_retries: 4,
            },
        )
        .unwrap();
        let dets = detections_from_exemplar(&ex);
        let found = group_detections(&dets, &model, &DetectParams::default());
        assert_eq!(found.len(), 1);
        let (bx, by, bw, bh) = ex.bounding_box();
        let gt = BoxF { x: bx, y: by, w: bw, h: bh };
        assert!(found[0].bbox.iou(&gt) > 0.99);
        assert_eq!(found[0].members.len(), 4);
        assert_eq!(found[0].parts.len(), 4);
    }

    #[test]
    fn multiple_instances_yield_multiple_detections() {
        let model = planted();
        let mut dets = Vec::new();
        for (k, seed) in [11u64, 12, 13].iter().enumerate() {
            let ex = sample_exemplar(
                &model,
                &SampleParams {
                    global_scale: [1.0, 0.7, 0.5][k],
                    seed: *seed,
                    max_retries: 4,
                },
            )
            .unwrap();
            let mut ds = detections_from_exemplar(&ex);
            for d in &mut ds {
                d.x += k as f64 * 500.0; // spread instances apart
            }
            dets.extend(ds);
        }
        let found = group_detections(&dets, &model, &DetectParams::default());
        assert_eq!(found.len(), 3);
    }

    #[test]
    fn shuffled_positions_destroy_detection() {
        // geometry, not word frequency, drives detection
        let model = planted();
        let ex = sample_exemplar(
            &model,
            &SampleParams {
                global_scale: 1.0,
                seed: 21,
                max_retries: 4,
            },
        )
        .unwrap();
        let mut dets = detections_from_exemplar(&ex);
        // rotate positions among the detections (word ids stay put)
        let first = (dets[0].x, dets[0].y);
        for i in 0..dets.len() - 1 {
            dets[i].x = dets[i + 1].x * 3.0 + 211.0 * i as f64;
            dets[i].y = dets[i + 1].y * 3.0 - 137.0 * i as f64;
        }
        let n = dets.len();
        dets[n - 1].x = first.0 * 3.0 + 555.0;
        dets[n - 1].y = first.1 * 3.0 + 900.0;
        let found = group_detections(&dets, &model, &DetectParams::default());
        assert!(found.is_empty(), "found {} detections", found.len());
    }

    #[test]
    fn duplicate_boxes_suppressed_to_best() {
        let mk = |x: f64, score: f64| ObjectDetection {
            bbox: BoxF { x, y: 0.0, w: 10.0, h: 10.0 },
            members: vec![],
            parts: vec![],
            score,
        };
        let kept = suppress_duplicates(vec![mk(0.0, 1.0), mk(0.0, 2.0)], 0.5);
        assert_eq!(kept.len(), 1);
        assert_eq!(kept[0].score, 2.0);
        // disjoint boxes both survive
        let kept = suppress_duplicates(vec![mk(0.0, 1.0), mk(100.0, 2.0)], 0.5);
        assert_eq!(kept.len(), 2);
    }

    #[test]
    fn jittered_boxes_suppress_to_single_survivor() {
        let mut boxes = Vec::new();
        for k in 0..10 {
            boxes.push(ObjectDetection {
                bbox: BoxF {
                    x: (k % 3) as f64,
                    y: (k % 2) as f64,
                    w: 20.0,
                    h: 20.0,
                },
                members: vec![],
                parts: vec![],
                score: k as f64,
            });
        }
        let kept = suppress_duplicates(boxes, 0.5);
        assert_eq!(kept.len(), 1);
        assert_eq!(kept[0].score, 9.0);
    }

    #[test]
    fn self_vote_localizes_exactly() {
        let model = planted();
        let word = model.srn.nodes[0];
        let part = model.cipc.part_of_word(word).unwrap();
        let d = WordDetection {
            word,
            x: 40.0,
            y: 60.0,
            extent_x: 32.0,
            extent_y: 32.0,
            distance: 0.0,
        };
        let det = ObjectDetection {
            bbox: BoxF { x: 40.0, y: 60.0, w: 32.0, h: 32.0 },
            members: vec![d],
            parts: vec![part],
            score: 0.0,
        };
        let loc = localize_part(&det, &model, part).unwrap();
        assert!((loc.bbox.x - 40.0).abs() < 1e-9);
        assert!((loc.bbox.y - 60.0).abs() < 1e-9);
        assert!((loc.bbox.w - 32.0).abs() < 1e-9);
        assert!((loc.bbox.h - 32.0).abs() < 1e-9);
        assert_eq!(loc.votes, 1);
    }

    #[test]
    fn omitted_part_localized_from_the_rest() {
        let model = PlantedModelBuilder::new(32, 32)
            .part_at(-1.5, 0.0, 1.0, 1)
            .part_at(0.0, 0.0, 1.0, 1)
            .part_at(1.5, 0.0, 1.0, 1)
            .part_at(0.0, 1.5, 1.0, 1)
            .stiffness(2000.0, 2000.0, 2000.0)
            .hub_edges(1)
            .build();
        let ex = sample_exemplar(
            &model,
            &SampleParams {
                global_scale: 1.0,
                seed: 33,
                max_retries: 4,
            },
        )
        .unwrap();
        // drop the hub viewlet (word 1, part of the hub part) and localize it
        let target_word = model.srn.nodes[1];
        let target_part = model.cipc.part_of_word(target_word).unwrap();
        let truth_k = ex.words.binary_search(&target_word).unwrap();
        let truth = ex.states[truth_k];
        let members: Vec<WordDetection> = detections_from_exemplar(&ex)
            .into_iter()
            .filter(|d| d.word != target_word)
            .collect();
        let det = ObjectDetection {
            bbox: BoxF { x: 0.0, y: 0.0, w: 1.0, h: 1.0 },
            members,
            parts: vec![],
            score: 0.0,
        };
        let loc = localize_part(&det, &model, target_part).unwrap();
        assert_eq!(loc.votes, 3);
        // within 0.1 normalized units (extent-relative) of the true spot
        let err_x = (loc.bbox.x - truth.x).abs() / truth.extent_x;
        let err_y = (loc.bbox.y - truth.y).abs() / truth.extent_y;
        assert!(err_x < 0.1 && err_y < 0.1, "err ({err_x}, {err_y})");
    }
}
