//! Visual dictionary: k-means over patch descriptors, nearest-centroid
//! word assignment, and dense image scanning.

use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::imaging::{build_pyramid, hog, sample_patches, HogParams, PcaProjection, SampleMode};
use crate::raster::GrayRaster;
use crate::util::seeded_rng;
use rand::Rng;

/// One scanned window assigned to a visual word.
///
/// Location and extents are base-image pixels of the window's top-left
/// corner; extents are the window dimensions divided by the layer factor.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct WordDetection {
    pub word: usize,
    pub x: f64,
    pub y: f64,
    pub extent_x: f64,
    pub extent_y: f64,
    pub distance: f64,
}

/// k centroids in descriptor space plus everything needed to assign and
/// visualize words.
#[derive(Clone, Debug)]
pub struct VisualDictionary {
    /// k × d, one centroid per row.
    pub centroids: DMatrix<f64>,
    pub pca: PcaProjection,
    pub hog: HogParams,
    pub window_w: usize,
    pub window_h: usize,
    /// Training patches assigned to each word.
    pub word_counts: Vec<u64>,
    /// Per-word pixel-mean patch at window size (for visualization and
    /// synthetic rendering); empty when not computed.
    pub mean_patches: Vec<GrayRaster>,
    /// Quantiles (0..=100) of the training assignment distances, used for
    /// the optional detection distance cutoff.
    pub distance_quantiles: Vec<f64>,
    /// Per-word mean squared distance of member descriptors to the
    /// centroid, divided by the descriptor dimension (an isotropic
    /// appearance variance).
    pub appearance_variance: Vec<f64>,
}

impl VisualDictionary {
    pub fn k(&self) -> usize {
        self.centroids.nrows()
    }

    pub fn dim(&self) -> usize {
        self.centroids.ncols()
    }

    /// Distance threshold for a cutoff percentile in [0, 100].
    pub fn distance_at_percentile(&self, pct: f64) -> f64 {
        if self.distance_quantiles.is_empty() {
            return f64::INFINITY;
        }
        let idx = (pct.clamp(0.0, 100.0).round() as usize).min(self.distance_quantiles.len() - 1);
        self.distance_quantiles[idx]
    }
}

#[derive(Clone, Copy, Debug)]
pub struct KmeansParams {
    pub k: usize,
    pub seed: u64,
    pub max_iters: usize,
    /// Stop when the largest centroid shift falls below this.
    pub tol: f64,
}

impl Default for KmeansParams {
    fn default() -> Self {
        Self {
            k: 2,
            seed: 0,
            max_iters: 100,
            tol: 1e-9,
        }
    }
}

#[derive(Clone, Debug)]
pub struct KmeansFit {
    /// k × d centroid matrix.
    pub centroids: DMatrix<f64>,
    pub assignments: Vec<usize>,
    pub inertia: f64,
    pub iterations: usize,
}

/// Lloyd's algorithm with k-means++ seeding.
///
/// Inertia (sum of squared distances to the assigned centroid) is checked
/// to be non-increasing on every iteration. An empty cluster is re-seeded
/// to the point farthest from its nearest centroid.
pub fn kmeans_fit(samples: &[DVector<f64>], params: &KmeansParams) -> Result<KmeansFit> {
    let k = params.k;
    if k < 2 {
        return Err(Error::rejected("k-means needs k >= 2"));
    }
    if samples.len() < k {
        return Err(Error::rejected(format!(
            "k-means needs at least k = {k} samples, got {}",
            samples.len()
        )));
    }
    let dim = samples[0].len();
    let mut rng = seeded_rng(params.seed);

    // k-means++ seeding
    let mut centroids: Vec<DVector<f64>> = Vec::with_capacity(k);
    centroids.push(samples[rng.gen_range(0..samples.len())].clone());
    let mut best_d2: Vec<f64> = samples
        .iter()
        .map(|s| (s - &centroids[0]).norm_squared())
        .collect();
    while centroids.len() < k {
        let total: f64 = best_d2.iter().sum();
        let chosen = if total <= 0.0 {
            rng.gen_range(0..samples.len())
        } else {
            let mut target = rng.gen_range(0.0..total);
            let mut idx = 0;
            for (i, &d) in best_d2.iter().enumerate() {
                target -= d;
                if target <= 0.0 {
                    idx = i;
                    break;
                }
            }
            idx
        };
        centroids.push(samples[chosen].clone());
        let c = centroids.last().unwrap();
        for (i, s) in samples.iter().enumerate() {
            let d = (s - c).norm_squared();
            if d < best_d2[i] {
                best_d2[i] = d;
            }
        }
    }

    let mut assignments = vec![0usize; samples.len()];
    let mut prev_inertia = f64::INFINITY;
    let mut iterations = 0;
    for _ in 0..params.max_iters {
        iterations += 1;
        // assignment step (parallel, pure)
        let pairs: Vec<(usize, f64)> = samples
            .par_iter()
            .map(|s| nearest(&centroids, s))
            .collect();
        let inertia: f64 = pairs.iter().map(|p| p.1).sum();
        assert!(
            inertia <= prev_inertia * (1.0 + 1e-12) + 1e-12,
            "k-means inertia increased: {prev_inertia} -> {inertia}"
        );
        prev_inertia = inertia;
        for (a, p) in assignments.iter_mut().zip(&pairs) {
            *a = p.0;
        }

        // update step (sequential for determinism)
        let mut sums = vec![DVector::zeros(dim); k];
        let mut counts = vec![0usize; k];
        for (s, &a) in samples.iter().zip(&assignments) {
            sums[a] += s;
            counts[a] += 1;
        }
        let mut shift: f64 = 0.0;
        for c in 0..k {
            if counts[c] == 0 {
                // re-seed to the point farthest from its nearest centroid
                let far = pairs
                    .iter()
                    .enumerate()
                    .max_by(|a, b| a.1 .1.partial_cmp(&b.1 .1).unwrap())
                    .map(|(i, _)| i)
                    .unwrap();
                let new_c = samples[far].clone();
                shift = shift.max((&new_c - &centroids[c]).norm());
                centroids[c] = new_c;
            } else {
                let new_c = &sums[c] / counts[c] as f64;
                shift = shift.max((&new_c - &centroids[c]).norm());
                centroids[c] = new_c;
            }
        }
        if shift < params.tol {
            break;
        }
    }
    // final assignment against the converged centroids
    let pairs: Vec<(usize, f64)> = samples
        .par_iter()
        .map(|s| nearest(&centroids, s))
        .collect();
    let inertia: f64 = pairs.iter().map(|p| p.1).sum();
    for (a, p) in assignments.iter_mut().zip(&pairs) {
        *a = p.0;
    }

    let mut m = DMatrix::zeros(k, dim);
    for (i, c) in centroids.iter().enumerate() {
        m.set_row(i, &c.transpose());
    }
    Ok(KmeansFit {
        centroids: m,
        assignments,
        inertia,
        iterations,
    })
}

fn nearest(centroids: &[DVector<f64>], s: &DVector<f64>) -> (usize, f64) {
    let mut best = (0usize, f64::INFINITY);
    for (i, c) in centroids.iter().enumerate() {
        let d = (s - c).norm_squared();
        if d < best.1 {
            best = (i, d);
        }
    }
    best
}

/// Nearest centroid by Euclidean distance; ties break to the lowest word id.
pub fn assign_word(descriptor: &DVector<f64>, dict: &VisualDictionary) -> (usize, f64) {
    assert_eq!(
        descriptor.len(),
        dict.dim(),
        "descriptor dimension mismatch"
    );
    let mut best = (0usize, f64::INFINITY);
    for w in 0..dict.k() {
        let mut d2 = 0.0;
        for j in 0..dict.dim() {
            let diff = descriptor[j] - dict.centroids[(w, j)];
            d2 += diff * diff;
        }
        if d2 < best.1 {
            best = (w, d2);
        }
    }
    (best.0, best.1.sqrt())
}

#[derive(Clone, Copy, Debug)]
pub struct ScanParams {
    pub stride: usize,
    pub pyramid_ratio: f64,
    /// Drop assignments with distance above this value (None keeps all).
    pub distance_cutoff: Option<f64>,
}

impl Default for ScanParams {
    fn default() -> Self {
        Self {
            stride: 16,
            pyramid_ratio: std::f64::consts::FRAC_1_SQRT_2,
            distance_cutoff: None,
        }
    }
}

/// Dense multi-scale scan: one `WordDetection` per window position per
/// layer, back-projected to base-image pixels.
pub fn scan_image(
    image: &GrayRaster,
    dict: &VisualDictionary,
    params: &ScanParams,
) -> Result<Vec<WordDetection>> {
    let pyramid = build_pyramid(image, params.pyramid_ratio, dict.window_w, dict.window_h)?;
    let patches = sample_patches(
        &pyramid,
        0,
        dict.window_w,
        dict.window_h,
        SampleMode::Dense {
            stride: params.stride,
        },
    )?;
    let detections: Vec<WordDetection> = patches
        .par_iter()
        .filter_map(|p| {
            let window = pyramid.layers[p.layer]
                .image
                .crop(p.x, p.y, p.w, p.h)
                .expect("window inside layer");
            let raw = hog(&window, &dict.hog);
            let desc = dict.pca.project_slice(&raw);
            let (word, distance) = assign_word(&desc, dict);
            if let Some(cut) = params.distance_cutoff {
                if distance > cut {
                    return None;
                }
            }
            let (bx, by) = p.base_origin();
            Some(WordDetection {
                word,
                x: bx,
                y: by,
                extent_x: p.extent_x,
                extent_y: p.extent_y,
                distance,
            })
        })
        .collect();
    Ok(detections)
}

/// Descriptor for a raster that already is the canonical window.
pub fn describe_window(
    window: &GrayRaster,
    hog_params: &HogParams,
    pca: &PcaProjection,
) -> DVector<f64> {
    pca.project_slice(&hog(window, hog_params))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn cloud(center: &[f64], n: usize, spread: f64, seed: u64) -> Vec<DVector<f64>> {
        let mut rng = seeded_rng(seed);
        (0..n)
            .map(|_| {
                DVector::from_fn(center.len(), |i, _| {
                    center[i] + rng.gen_range(-spread..spread)
                })
            })
            .collect()
    }

    #[test]
    fn separable_clouds_recover_means() {
        let mut samples = cloud(&[0.0, 0.0], 40, 0.1, 1);
        samples.extend(cloud(&[10.0, 10.0], 40, 0.1, 2));
        let fit = kmeans_fit(
            &samples,
            &KmeansParams {
                k: 2,
                seed: 5,
                max_iters: 100,
                tol: 1e-12,
            },
        )
        .unwrap();
        let mut got: Vec<Vec<f64>> = (0..2)
            .map(|i| fit.centroids.row(i).iter().copied().collect())
            .collect();
        got.sort_by(|a, b| a[0].partial_cmp(&b[0]).unwrap());
        let mean0: Vec<f64> = {
            let c = &samples[..40];
            (0..2)
                .map(|j| c.iter().map(|s| s[j]).sum::<f64>() / 40.0)
                .collect()
        };
        for j in 0..2 {
            assert!((got[0][j] - mean0[j]).abs() < 1e-9);
        }
    }

    #[test]
    fn inertia_close_to_multi_restart_oracle() {
        // 60 points in 4 clusters; a single seeded fit must land within 5%
        // of the best inertia over 100 restarts
        let mut samples = Vec::new();
        for (i, c) in [[0.0, 0.0], [5.0, 0.0], [0.0, 5.0], [5.0, 5.0]]
            .iter()
            .enumerate()
        {
            samples.extend(cloud(c, 15, 0.4, 100 + i as u64));
        }
        let single = kmeans_fit(
            &samples,
            &KmeansParams {
                k: 4,
                seed: 42,
                max_iters: 200,
                tol: 1e-12,
            },
        )
        .unwrap();
        let best = (0..100)
            .map(|s| {
                kmeans_fit(
                    &samples,
                    &KmeansParams {
                        k: 4,
                        seed: s,
                        max_iters: 200,
                        tol: 1e-12,
                    },
                )
                .unwrap()
                .inertia
            })
            .fold(f64::INFINITY, f64::min);
        assert!(
            single.inertia <= best * 1.05,
            "single fit inertia {} vs oracle best {best}",
            single.inertia
        );
    }

    #[test]
    fn kmeans_deterministic_for_fixed_seed() {
        let samples = cloud(&[1.0, 2.0, 3.0], 50, 1.0, 9);
        let p = KmeansParams {
            k: 5,
            seed: 77,
            max_iters: 50,
            tol: 1e-12,
        };
        let a = kmeans_fit(&samples, &p).unwrap();
        let b = kmeans_fit(&samples, &p).unwrap();
        assert_eq!(a.centroids, b.centroids);
        assert_eq!(a.assignments, b.assignments);
    }

    fn tiny_dict(centroids: DMatrix<f64>) -> VisualDictionary {
        let d = centroids.ncols();
        VisualDictionary {
            centroids,
            pca: PcaProjection::identity(d),
            hog: HogParams::default(),
            window_w: 32,
            window_h: 32,
            word_counts: vec![],
            mean_patches: vec![],
            distance_quantiles: vec![],
            appearance_variance: vec![],
        }
    }

    #[test]
    fn assigning_a_centroid_returns_itself() {
        let mut c = DMatrix::zeros(10, 3);
        for i in 0..10 {
            for j in 0..3 {
                c[(i, j)] = (i * 3 + j) as f64;
            }
        }
        let dict = tiny_dict(c.clone());
        let (w, d) = assign_word(&c.row(7).transpose(), &dict);
        assert_eq!(w, 7);
        assert_eq!(d, 0.0);
    }

    #[test]
    fn equidistant_descriptor_breaks_tie_to_lower_id() {
        // words 2 and 5 both at distance sqrt(2) from the query
        let mut c = DMatrix::from_element(6, 2, 100.0);
        c[(2, 0)] = 1.0;
        c[(2, 1)] = 1.0;
        c[(5, 0)] = -1.0;
        c[(5, 1)] = -1.0;
        let dict = tiny_dict(c);
        let (w, _) = assign_word(&DVector::from_column_slice(&[0.0, 0.0]), &dict);
        assert_eq!(w, 2);
    }

    #[test]
    fn assignment_matches_linear_scan_oracle() {
        let mut rng = seeded_rng(21);
        let c = DMatrix::from_fn(10, 6, |_, _| rng.gen_range(-1.0..1.0));
        let dict = tiny_dict(c.clone());
        for _ in 0..200 {
            let q = DVector::from_fn(6, |_, _| rng.gen_range(-1.0..1.0));
            let (w, d) = assign_word(&q, &dict);
            // brute force over all centroids
            let mut best = (usize::MAX, f64::INFINITY);
            for i in 0..10 {
                let dist = (&q - &c.row(i).transpose()).norm();
                if dist < best.1 {
                    best = (i, dist);
                }
            }
            assert_eq!(w, best.0);
            assert!((d - best.1).abs() < 1e-12);
        }
    }

    #[test]
    fn scan_count_matches_tiling_arithmetic() {
        // single-layer pyramid: image exactly at window height so only
        // layer 0 exists
        let img = GrayRaster::from_fn(96, 32, |x, y| ((x * 3 + y) % 17) as f32 / 17.0);
        let mut rng = seeded_rng(4);
        let dict = tiny_dict(DMatrix::from_fn(4, 324, |_, _| rng.gen_range(-1.0..1.0)));
        let dets = scan_image(
            &img,
            &dict,
            &ScanParams {
                stride: 8,
                pyramid_ratio: 0.5,
                distance_cutoff: None,
            },
        )
        .unwrap();
        let expected = ((96 - 32) / 8 + 1) * ((32 - 32) / 8 + 1);
        assert_eq!(dets.len(), expected);
    }
}
