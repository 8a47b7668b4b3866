//! Synthetic models and corpora for closed-loop testing.
//!
//! A planted model is constructed directly from a chosen layout: parts at
//! known positions/scales (optionally with several mutually exclusive
//! appearance variants), springs with chosen stiffness, and procedural
//! pixel patterns per viewlet. Rendering sampled exemplars of a planted
//! model produces an image corpus with exact ground truth, which is what
//! the end-to-end detection and recovery suites consume.

use nalgebra::DVector;
use rand::Rng;

use crate::dictionary::VisualDictionary;
use crate::detection::BoxF;
use crate::error::Result;
use crate::eval::{GroundTruth, GtImage, GtObject};
use crate::generative::{
    render_onto, sample_exemplar, Exemplar, SampleParams, SuvModel, ViewletAppearance,
};
use crate::imaging::{fit_pca, HogParams};
use crate::raster::GrayRaster;
use crate::semantics::{CipcEdge, CipcGraph, CipcRule, GpeEmbedding};
use crate::srn::{SpringEdge, Srn};
use crate::util::{derive_seed, seeded_rng, standard_normal};

#[derive(Clone, Debug)]
struct PlantedPart {
    x: f64,
    y: f64,
    scale: f64,
    variants: usize,
}

/// Builds a fully specified model from a planted layout.
pub struct PlantedModelBuilder {
    window_w: usize,
    window_h: usize,
    parts: Vec<PlantedPart>,
    stiffness: (f64, f64, f64),
    part_edges: Vec<(usize, usize)>,
    inclusion: f64,
    appearance_dim: usize,
    appearance_variance: f64,
    seed: u64,
}

impl PlantedModelBuilder {
    pub fn new(window_w: usize, window_h: usize) -> Self {
        Self {
            window_w,
            window_h,
            parts: Vec::new(),
            stiffness: (100.0, 100.0, 100.0),
            part_edges: Vec::new(),
            inclusion: 1.0,
            appearance_dim: 8,
            appearance_variance: 0.01,
            seed: 0,
        }
    }

    /// Add a part at (x, y) in window units with the given relative scale
    /// and number of mutually exclusive appearance variants.
    pub fn part_at(mut self, x: f64, y: f64, scale: f64, variants: usize) -> Self {
        assert!(variants >= 1);
        self.parts.push(PlantedPart {
            x,
            y,
            scale,
            variants,
        });
        self
    }

    pub fn stiffness(mut self, cx: f64, cy: f64, cs: f64) -> Self {
        self.stiffness = (cx, cy, cs);
        self
    }

    /// Springs between consecutive parts.
    pub fn chain_edges(mut self) -> Self {
        for k in 1..self.parts.len() {
            self.part_edges.push((k - 1, k));
        }
        self
    }

    /// Springs from every other part to one hub part.
    pub fn hub_edges(mut self, hub: usize) -> Self {
        for k in 0..self.parts.len() {
            if k != hub {
                self.part_edges.push((k.min(hub), k.max(hub)));
            }
        }
        self
    }

    /// Explicit part-level edge list.
    pub fn edges(mut self, pairs: &[(usize, usize)]) -> Self {
        for &(a, b) in pairs {
            assert!(a != b);
            self.part_edges.push((a.min(b), a.max(b)));
        }
        self
    }

    pub fn inclusion(mut self, p: f64) -> Self {
        self.inclusion = p;
        self
    }

    pub fn appearance(mut self, dim: usize, variance: f64) -> Self {
        self.appearance_dim = dim;
        self.appearance_variance = variance;
        self
    }

    pub fn seed(mut self, seed: u64) -> Self {
        self.seed = seed;
        self
    }

    /// Part-level edges as viewlet-level pairs (the planted edge truth).
    pub fn planted_viewlet_edges(&self) -> Vec<(usize, usize)> {
        let offsets = self.part_offsets();
        let mut out = Vec::new();
        for &(pa, pb) in &self.part_edges {
            for u in 0..self.parts[pa].variants {
                for v in 0..self.parts[pb].variants {
                    let wu = offsets[pa] + u;
                    let wv = offsets[pb] + v;
                    out.push((wu.min(wv), wu.max(wv)));
                }
            }
        }
        out.sort_unstable();
        out.dedup();
        out
    }

    fn part_offsets(&self) -> Vec<usize> {
        let mut offsets = Vec::with_capacity(self.parts.len());
        let mut acc = 0;
        for p in &self.parts {
            offsets.push(acc);
            acc += p.variants;
        }
        offsets
    }

    pub fn build(self) -> SuvModel {
        assert!(self.parts.len() >= 2, "a planted model needs at least two parts");
        let offsets = self.part_offsets();
        let total: usize = self.parts.iter().map(|p| p.variants).sum();
        let w = self.window_w as f64;
        let h = self.window_h as f64;

        let part_of_viewlet: Vec<usize> = self
            .parts
            .iter()
            .enumerate()
            .flat_map(|(pid, p)| std::iter::repeat(pid).take(p.variants))
            .collect();

        let (cx, cy, cs) = self.stiffness;
        let mut edges = Vec::new();
        for &(wu, wv) in &self.planted_viewlet_edges() {
            let (pa, pb) = (part_of_viewlet[wu], part_of_viewlet[wv]);
            let (a, b) = (&self.parts[pa], &self.parts[pb]);
            let denom = a.scale + b.scale;
            edges.push(SpringEdge {
                i: wu,
                j: wv,
                stiffness_x: cx,
                stiffness_y: cy,
                stiffness_s: cs,
                rest_x: (b.x - a.x) / denom,
                rest_y: (b.y - a.y) / denom,
                rest_log_scale: (b.scale / a.scale).ln(),
                support: 1000,
                combined_variance: 1.0 / cx + 1.0 / cy + 1.0 / cs,
            });
        }

        let nodes: Vec<usize> = (0..total).collect();
        let scale_x: Vec<f64> = part_of_viewlet
            .iter()
            .map(|&pid| self.parts[pid].scale * w)
            .collect();
        let scale_y: Vec<f64> = part_of_viewlet
            .iter()
            .map(|&pid| self.parts[pid].scale * h)
            .collect();
        let srn = Srn::new(nodes.clone(), edges, scale_x, scale_y);

        // parts clustering is known by construction
        let mut cipc_edges = Vec::new();
        for (pid, p) in self.parts.iter().enumerate() {
            for u in 0..p.variants {
                for v in u + 1..p.variants {
                    cipc_edges.push(CipcEdge {
                        u: offsets[pid] + u,
                        v: offsets[pid] + v,
                        rule: CipcRule::ExclusiveSubstitutable,
                    });
                }
            }
        }
        let cipc = CipcGraph {
            nodes: nodes.clone(),
            edges: cipc_edges,
            part_of: part_of_viewlet.clone(),
            part_count: self.parts.len(),
        };

        let gpe = GpeEmbedding {
            nodes: nodes.clone(),
            x: part_of_viewlet.iter().map(|&pid| self.parts[pid].x).collect(),
            y: part_of_viewlet.iter().map(|&pid| self.parts[pid].y).collect(),
            scale: part_of_viewlet
                .iter()
                .map(|&pid| self.parts[pid].scale)
                .collect(),
            stress: 0.0,
            converged: true,
        };

        let appearance: Vec<ViewletAppearance> = (0..total)
            .map(|v| {
                let mut rng = seeded_rng(derive_seed(self.seed, 7000 + v as u64));
                let centroid =
                    DVector::from_fn(self.appearance_dim, |_, _| rng.gen_range(-1.0..1.0f64));
                ViewletAppearance {
                    centroid,
                    variance: self.appearance_variance,
                    mean_patch: procedural_patch(self.window_w, self.window_h, v),
                }
            })
            .collect();

        SuvModel {
            name: "planted".into(),
            window_w: self.window_w,
            window_h: self.window_h,
            srn,
            cipc,
            gpe,
            appearance,
            part_inclusion: self.inclusion,
        }
    }
}

/// Distinct smooth texture for viewlet `idx`. Three pattern families
/// (grating, plaid, off-center rings) with orientation and frequency
/// spread over a coarse grid, so different indices produce clearly
/// different orientation histograms while each single pattern stays
/// low-frequency enough to survive small scale mismatches.
pub fn procedural_patch(w: usize, h: usize, idx: usize) -> GrayRaster {
    let pi = std::f64::consts::PI;
    let family = idx % 3;
    let member = idx / 3;
    // gratings are only as distinct as their orientation histogram, so
    // spread each family's orientations across distinct unsigned bins
    let bin = (member * 4) % 9;
    let theta = pi * (bin as f64 + 0.5) / 9.0;
    let freq = 1.5 + ((idx * 3) % 6) as f64 * 0.7;
    let phase = 0.9 * ((idx * 7) % 5) as f64;
    let (ct, st) = (theta.cos(), theta.sin());
    let cx = 0.22 * (((idx * 11) % 5) as f64 - 2.0) / 2.0;
    let cy = 0.22 * (((idx * 13) % 5) as f64 - 2.0) / 2.0;
    GrayRaster::from_fn(w, h, |x, y| {
        let u = (x as f64 + 0.5) / w as f64 - 0.5;
        let v = (y as f64 + 0.5) / h as f64 - 0.5;
        let along = u * ct + v * st;
        let across = -u * st + v * ct;
        let val = match family {
            0 => (2.0 * pi * freq * along + phase).sin(),
            1 => {
                0.6 * (2.0 * pi * freq * along + phase).sin()
                    + 0.6 * (2.0 * pi * (freq * 0.7 + 0.8) * across).sin()
            }
            _ => {
                let r = ((u - cx) * (u - cx) + (v - cy) * (v - cy)).sqrt();
                (2.0 * pi * (freq + 1.0) * r + phase).cos()
            }
        };
        (0.5 + 0.42 * val).clamp(0.02, 0.98) as f32
    })
}

/// Build a dictionary whose words are the model's viewlets, trained on
/// jittered renderings of each viewlet patch (sub-pixel shifts, scale
/// jitter covering the pyramid quantization, pixel noise). The model's
/// appearance statistics are replaced by the fitted descriptor-space
/// statistics so that scanning and scoring agree.
pub fn build_pixel_dictionary(
    model: &mut SuvModel,
    hog: &HogParams,
    pca_dim: usize,
    variants_per_word: usize,
    seed: u64,
) -> Result<VisualDictionary> {
    let w = model.window_w;
    let h = model.window_h;
    let n_words = model.viewlet_count();
    let mut all_desc_raw: Vec<DVector<f64>> = Vec::new();
    let mut owner: Vec<usize> = Vec::new();

    for word in 0..n_words {
        let patch = &model.appearance[word].mean_patch;
        for k in 0..variants_per_word {
            let mut rng = seeded_rng(derive_seed(seed, (word * 10_000 + k) as u64));
            let jittered = jitter_patch(patch, w, h, &mut rng);
            let raw = crate::imaging::hog(&jittered, hog);
            all_desc_raw.push(DVector::from_vec(raw));
            owner.push(word);
        }
    }

    let pca = fit_pca(&all_desc_raw, pca_dim.min(all_desc_raw.len() - 1))?;
    let projected: Vec<DVector<f64>> = all_desc_raw.iter().map(|d| pca.project(d)).collect();
    let dim = pca.output_dim();

    let mut centroids = nalgebra::DMatrix::zeros(n_words, dim);
    let mut counts = vec![0u64; n_words];
    for (d, &word) in projected.iter().zip(&owner) {
        for j in 0..dim {
            centroids[(word, j)] += d[j];
        }
        counts[word] += 1;
    }
    for word in 0..n_words {
        for j in 0..dim {
            centroids[(word, j)] /= counts[word] as f64;
        }
    }

    let mut distances: Vec<f64> = Vec::with_capacity(projected.len());
    let mut var_sum = vec![0.0f64; n_words];
    for (d, &word) in projected.iter().zip(&owner) {
        let mut d2 = 0.0f64;
        for j in 0..dim {
            let diff = d[j] - centroids[(word, j)];
            d2 += diff * diff;
        }
        distances.push(d2.sqrt());
        var_sum[word] += d2;
    }
    distances.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let quantiles: Vec<f64> = (0..=100)
        .map(|q| {
            let idx = ((q as f64 / 100.0) * (distances.len() - 1) as f64).round() as usize;
            distances[idx]
        })
        .collect();

    let appearance_variance: Vec<f64> = var_sum
        .iter()
        .zip(&counts)
        .map(|(s, &c)| (s / c as f64 / dim as f64).max(1e-9))
        .collect();

    // align the model's appearance statistics with the dictionary
    for word in 0..n_words {
        model.appearance[word].centroid = centroids.row(word).transpose();
        model.appearance[word].variance = appearance_variance[word];
    }

    Ok(VisualDictionary {
        centroids,
        pca,
        hog: *hog,
        window_w: w,
        window_h: h,
        word_counts: counts,
        mean_patches: model.appearance.iter().map(|a| a.mean_patch.clone()).collect(),
        distance_quantiles: quantiles,
        appearance_variance,
    })
}

/// Random sub-pixel shift, scale jitter up to the pyramid quantization
/// range, and pixel noise.
fn jitter_patch(patch: &GrayRaster, w: usize, h: usize, rng: &mut impl Rng) -> GrayRaster {
    // scale jitter in [0.84, 1.19] (one pyramid step of 2^(1/4) each way)
    let factor = 2.0f64.powf(rng.gen_range(-0.25..0.25));
    let sw = ((w as f64 * factor).round() as usize).max(w / 2);
    let sh = ((h as f64 * factor).round() as usize).max(h / 2);
    let scaled = patch.resize(sw, sh);
    // embed on a window-sized canvas with a small shift, border replicated
    let dx = rng.gen_range(-2i64..=2);
    let dy = rng.gen_range(-2i64..=2);
    let cx = (sw as i64 - w as i64) / 2 + dx;
    let cy = (sh as i64 - h as i64) / 2 + dy;
    let noise = 0.02;
    GrayRaster::from_fn(w, h, |x, y| {
        let sx = (x as i64 + cx).clamp(0, sw as i64 - 1) as usize;
        let sy = (y as i64 + cy).clamp(0, sh as i64 - 1) as usize;
        let mut rng2 = seeded_rng(derive_seed(
            (x * 31 + y) as u64,
            (sx * 17 + sy) as u64,
        ));
        scaled.get(sx, sy) + (standard_normal(&mut rng2) * noise) as f32
    })
}

#[derive(Clone, Copy, Debug)]
pub struct CorpusParams {
    pub n_images: usize,
    pub min_instances: usize,
    pub max_instances: usize,
    pub min_scale: f64,
    pub max_scale: f64,
    pub seed: u64,
    /// Base background intensity.
    pub background: f32,
    /// Amplitude of the smooth per-image background noise. Fresh noise
    /// per image keeps background words unselective in geometry, which is
    /// what the variance filter needs to separate them from object words.
    pub background_noise: f32,
}

impl Default for CorpusParams {
    fn default() -> Self {
        Self {
            n_images: 50,
            min_instances: 1,
            max_instances: 3,
            min_scale: 0.5,
            max_scale: 1.5,
            seed: 0,
            background: 0.5,
            background_noise: 0.10,
        }
    }
}

/// Smooth value-noise field: a coarse random grid, bilinearly upsampled.
fn noise_background(w: usize, h: usize, base: f32, amplitude: f32, seed: u64) -> GrayRaster {
    let cell = 16usize;
    let gw = w / cell + 2;
    let gh = h / cell + 2;
    let mut rng = seeded_rng(seed);
    let grid = GrayRaster::from_fn(gw, gh, |_, _| rng.gen_range(-1.0f32..1.0));
    let field = grid.resize(w, h);
    GrayRaster::from_fn(w, h, |x, y| base + amplitude * field.get(x, y))
}

pub struct SynthCorpus {
    pub images: Vec<GrayRaster>,
    pub truth: GroundTruth,
    /// Exemplars per image, with states translated to canvas coordinates.
    pub exemplars: Vec<Vec<Exemplar>>,
}

/// Render a corpus of images, each with several non-overlapping instances
/// at random global scales, plus exact ground truth.
pub fn generate_corpus(model: &SuvModel, params: &CorpusParams) -> Result<SynthCorpus> {
    let mut images = Vec::with_capacity(params.n_images);
    let mut gt_images = Vec::with_capacity(params.n_images);
    let mut all_exemplars = Vec::with_capacity(params.n_images);
    for img_idx in 0..params.n_images {
        let mut rng = seeded_rng(derive_seed(params.seed, img_idx as u64));
        let n_instances = rng.gen_range(params.min_instances..=params.max_instances);

        // sample instances first to know their sizes
        let mut placed: Vec<(Exemplar, BoxF)> = Vec::new();
        for inst in 0..n_instances {
            let scale = rng.gen_range(params.min_scale..=params.max_scale);
            let ex = sample_exemplar(
                model,
                &SampleParams {
                    global_scale: scale,
                    seed: derive_seed(params.seed, (img_idx * 1000 + inst + 1) as u64),
                    max_retries: 16,
                },
            )?;
            let (bx, by, bw, bh) = ex.bounding_box();
            placed.push((
                ex,
                BoxF {
                    x: bx,
                    y: by,
                    w: bw,
                    h: bh,
                },
            ));
        }

        // lay the instances out on a row with margins: no overlap
        let margin = model.window_w.max(model.window_h) as f64;
        let canvas_h = placed
            .iter()
            .map(|(_, b)| b.h)
            .fold(0.0f64, f64::max)
            + 2.0 * margin;
        let canvas_w = placed.iter().map(|(_, b)| b.w + margin).sum::<f64>() + margin;
        let mut canvas = noise_background(
            canvas_w.ceil() as usize,
            canvas_h.ceil() as usize,
            params.background,
            params.background_noise,
            derive_seed(params.seed, 0xb0_0000 + img_idx as u64),
        );

        let mut objects = Vec::new();
        let mut image_exemplars = Vec::new();
        let mut cursor_x = margin;
        for (mut ex, bbox) in placed {
            let shift_x = cursor_x - bbox.x;
            let shift_y = margin - bbox.y;
            for s in &mut ex.states {
                s.x += shift_x;
                s.y += shift_y;
            }
            render_onto(&mut canvas, &ex, model, (0.0, 0.0))?;
            let (bx, by, bw, bh) = ex.bounding_box();
            objects.push(GtObject {
                category: model.name.clone(),
                bbox: BoxF {
                    x: bx,
                    y: by,
                    w: bw,
                    h: bh,
                },
                parts: Default::default(),
            });
            image_exemplars.push(ex);
            cursor_x += bbox.w + margin;
        }

        gt_images.push(GtImage {
            file: format!("img_{img_idx:05}.png"),
            objects,
        });
        images.push(canvas);
        all_exemplars.push(image_exemplars);
    }
    Ok(SynthCorpus {
        images,
        truth: GroundTruth { images: gt_images },
        exemplars: all_exemplars,
    })
}

/// Built-in planted object used by the synthetic-corpus command when no
/// learned model is supplied: a hub part with five satellites (ring plus
/// spokes for redundancy under part omission), two satellites carrying
/// exclusive appearance variants. Viewlet extents are at least twice the
/// window so instances stay detectable down to half scale, and the scale
/// stiffness is soft enough to absorb the pyramid's log-extent
/// quantization (about ±0.17 per endpoint at ratio 1/sqrt 2).
pub fn demo_model(seed: u64) -> Result<(SuvModel, VisualDictionary)> {
    let mut model = PlantedModelBuilder::new(32, 32)
        .part_at(0.0, 0.0, 3.0, 1)
        .part_at(-2.4, -2.4, 2.0, 2)
        .part_at(2.4, -2.4, 2.0, 1)
        .part_at(2.4, 2.4, 2.0, 1)
        .part_at(-2.4, 2.4, 2.0, 2)
        .part_at(0.0, -3.4, 2.0, 1)
        .stiffness(400.0, 400.0, 50.0)
        .hub_edges(0)
        .edges(&[(1, 2), (2, 3), (3, 4), (4, 1), (1, 5), (2, 5)])
        .inclusion(0.9)
        .seed(seed)
        .build();
    let dict = build_pixel_dictionary(&mut model, &crate::imaging::HogParams::default(), 16, 24, seed)?;
    Ok((model, dict))
}

/// Random connected spring network for property suites: a random spanning
/// tree plus extra edges, random stiffness, rest values and node scales.
pub fn random_connected_srn(seed: u64, n_nodes: usize, extra_edges: usize) -> Srn {
    assert!(n_nodes >= 2);
    let mut rng = seeded_rng(seed);
    let mut edges: Vec<(usize, usize)> = Vec::new();
    for v in 1..n_nodes {
        let u = rng.gen_range(0..v);
        edges.push((u, v));
    }
    let mut guard = 0;
    while edges.len() < n_nodes - 1 + extra_edges && guard < 1000 {
        guard += 1;
        let a = rng.gen_range(0..n_nodes);
        let b = rng.gen_range(0..n_nodes);
        if a == b {
            continue;
        }
        let e = (a.min(b), a.max(b));
        if !edges.contains(&e) {
            edges.push(e);
        }
    }
    edges.sort_unstable();
    let scale_x: Vec<f64> = (0..n_nodes).map(|_| rng.gen_range(8.0..40.0)).collect();
    let scale_y: Vec<f64> = scale_x.iter().map(|s| s * 0.75).collect();
    let spring_edges: Vec<SpringEdge> = edges
        .iter()
        .map(|&(i, j)| {
            let cx = rng.gen_range(5.0..200.0);
            let cy = rng.gen_range(5.0..200.0);
            let cs = rng.gen_range(5.0..200.0);
            SpringEdge {
                i,
                j,
                stiffness_x: cx,
                stiffness_y: cy,
                stiffness_s: cs,
                rest_x: rng.gen_range(-1.5..1.5),
                rest_y: rng.gen_range(-1.5..1.5),
                rest_log_scale: rng.gen_range(-0.7..0.7),
                support: 100,
                combined_variance: 1.0 / cx + 1.0 / cy + 1.0 / cs,
            }
        })
        .collect();
    Srn::new((0..n_nodes).collect(), spring_edges, scale_x, scale_y)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dictionary::{assign_word, describe_window};

    #[test]
    fn planted_edges_expand_variants() {
        let b = PlantedModelBuilder::new(32, 32)
            .part_at(0.0, 0.0, 1.0, 2)
            .part_at(1.0, 0.0, 1.0, 1)
            .chain_edges();
        let planted = b.planted_viewlet_edges();
        assert_eq!(planted, vec![(0, 2), (1, 2)]);
        let model = b.build();
        assert_eq!(model.srn.edges.len(), 2);
        assert_eq!(model.cipc.part_count, 2);
        assert_eq!(model.cipc.part_of, vec![0, 0, 1]);
        model.validate().unwrap();
    }

    #[test]
    fn procedural_patches_have_separable_descriptors() {
        let hog = HogParams::default();
        let n = 16;
        let descs: Vec<DVector<f64>> = (0..n)
            .map(|i| DVector::from_vec(crate::imaging::hog(&procedural_patch(32, 32, i), &hog)))
            .collect();
        let mut min_inter = f64::INFINITY;
        let mut argmin = (0, 0);
        for i in 0..n {
            for j in 0..i {
                let d = (&descs[i] - &descs[j]).norm();
                if d < min_inter {
                    min_inter = d;
                    argmin = (j, i);
                }
            }
        }
        assert!(min_inter > 0.5, "min inter-patch distance {min_inter} at {argmin:?}");
    }

    #[test]
    fn pixel_dictionary_recognizes_its_own_patches() {
        let mut model = PlantedModelBuilder::new(32, 32)
            .part_at(0.0, 0.0, 2.0, 1)
            .part_at(2.0, 0.0, 2.0, 1)
            .part_at(0.0, 2.0, 2.0, 1)
            .stiffness(300.0, 300.0, 300.0)
            .hub_edges(0)
            .build();
        let dict = build_pixel_dictionary(&mut model, &HogParams::default(), 16, 20, 5).unwrap();
        // the clean descriptor of every patch must assign to its own word
        for word in 0..model.viewlet_count() {
            let desc = describe_window(
                &model.appearance[word].mean_patch,
                &dict.hog,
                &dict.pca,
            );
            let (assigned, dist) = assign_word(&desc, &dict);
            assert_eq!(assigned, word, "patch {word} misassigned (d = {dist})");
        }
        // a flat background window is far outside the 99th percentile
        let flat = GrayRaster::from_fn(32, 32, |_, _| 0.5);
        let desc = describe_window(&flat, &dict.hog, &dict.pca);
        let (_, dist) = assign_word(&desc, &dict);
        assert!(
            dist > dict.distance_at_percentile(99.0),
            "flat window distance {dist} inside cutoff {}",
            dict.distance_at_percentile(99.0)
        );
    }

    #[test]
    fn corpus_images_match_ground_truth_layout() {
        let model = PlantedModelBuilder::new(32, 32)
            .part_at(0.0, 0.0, 1.0, 1)
            .part_at(1.5, 0.0, 1.0, 1)
            .part_at(0.0, 1.5, 1.0, 1)
            .stiffness(200.0, 200.0, 1e5)
            .hub_edges(0)
            .build();
        let corpus = generate_corpus(
            &model,
            &CorpusParams {
                n_images: 5,
                min_instances: 1,
                max_instances: 3,
                min_scale: 0.8,
                max_scale: 1.2,
                seed: 3,
                background: 0.5,
                background_noise: 0.10,
            },
        )
        .unwrap();
        assert_eq!(corpus.images.len(), 5);
        assert_eq!(corpus.truth.images.len(), 5);
        for (img, gt) in corpus.images.iter().zip(&corpus.truth.images) {
            assert!(!gt.objects.is_empty() && gt.objects.len() <= 3);
            for obj in &gt.objects {
                // every ground-truth box lies inside the canvas
                assert!(obj.bbox.x >= 0.0 && obj.bbox.y >= 0.0);
                assert!((obj.bbox.x + obj.bbox.w) <= img.width() as f64 + 1.0);
                assert!((obj.bbox.y + obj.bbox.h) <= img.height() as f64 + 1.0);
            }
            // boxes of distinct instances do not overlap
            for i in 0..gt.objects.len() {
                for j in 0..i {
                    assert_eq!(gt.objects[i].bbox.iou(&gt.objects[j].bbox), 0.0);
                }
            }
        }
        // determinism
        let again = generate_corpus(
            &model,
            &CorpusParams {
                n_images: 5,
                min_instances: 1,
                max_instances: 3,
                min_scale: 0.8,
                max_scale: 1.2,
                seed: 3,
                background: 0.5,
                background_noise: 0.10,
            },
        )
        .unwrap();
        assert_eq!(corpus.images[0], again.images[0]);
    }

    #[test]
    fn random_srn_is_connected_with_requested_size() {
        for seed in 0..10 {
            let srn = random_connected_srn(seed, 6, 3);
            assert_eq!(srn.len(), 6);
            assert_eq!(srn.edges.len(), 5 + 3);
            assert!(srn.is_connected());
        }
    }
}
