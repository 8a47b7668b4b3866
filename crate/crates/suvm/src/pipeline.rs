//! End-to-end learning orchestration: corpus directory to dictionary, and
//! dictionary plus corpus to object models.
//!
//! Everything is deterministic for a fixed configuration and corpus:
//! image files are processed in sorted order, per-image randomness derives
//! from (seed, image index), per-image work runs in parallel but every
//! reduction happens sequentially in image order.

use std::path::{Path, PathBuf};

use nalgebra::DVector;
use rayon::prelude::*;

use crate::dictionary::{
    kmeans_fit, scan_image, KmeansParams, ScanParams, VisualDictionary, WordDetection,
};
use crate::error::{Error, Result};
use crate::generative::{SuvModel, ViewletAppearance};
use crate::imaging::{
    build_pyramid, fit_pca_from_moments, hog, sample_patches, CovAccumulator, SampleMode,
};
use crate::modelfile::RunConfig;
use crate::raster::GrayRaster;
use crate::semantics::{cipc_build, gpe_embed, GpeParams};
use crate::srn::{giant_components, sparsify, ComponentParams, PairStats, SparsifyParams};
use crate::util::derive_seed;

/// Image paths of a corpus directory, sorted lexicographically.
pub fn corpus_paths(dir: &Path) -> Result<Vec<PathBuf>> {
    let mut paths: Vec<PathBuf> = std::fs::read_dir(dir)
        .map_err(|source| Error::Io {
            path: dir.to_path_buf(),
            source,
        })?
        .filter_map(|e| e.ok())
        .map(|e| e.path())
        .filter(|p| {
            matches!(
                p.extension().and_then(|e| e.to_str()).map(|e| e.to_ascii_lowercase()),
                Some(ref e) if e == "png" || e == "jpg" || e == "jpeg"
            )
        })
        .collect();
    paths.sort();
    if paths.is_empty() {
        return Err(Error::rejected(format!(
            "no images (png/jpeg) found in {dir:?}"
        )));
    }
    Ok(paths)
}

fn load_corpus(paths: &[PathBuf], failure_quota: usize) -> Result<Vec<GrayRaster>> {
    let loaded: Vec<(usize, std::result::Result<GrayRaster, String>)> = paths
        .par_iter()
        .enumerate()
        .map(|(i, p)| {
            (
                i,
                GrayRaster::load(p).map_err(|e| format!("{}: {e}", p.display())),
            )
        })
        .collect();
    let mut images = Vec::new();
    let mut failures = Vec::new();
    for (_, r) in loaded {
        match r {
            Ok(img) => images.push(img),
            Err(msg) => failures.push(msg),
        }
    }
    for f in &failures {
        log::warn!("skipping unreadable image: {f}");
    }
    if failures.len() > failure_quota {
        return Err(Error::rejected(format!(
            "{} images failed to load (quota {failure_quota}); first: {}",
            failures.len(),
            failures[0]
        )));
    }
    if images.is_empty() {
        return Err(Error::rejected("every corpus image failed to load"));
    }
    Ok(images)
}

/// Learn a visual dictionary from a corpus directory.
pub fn build_dictionary(dir: &Path, config: &RunConfig) -> Result<VisualDictionary> {
    let paths = corpus_paths(dir)?;
    let images = load_corpus(&paths, paths.len() / 10)?;
    build_dictionary_from_images(&images, config)
}

/// Dictionary learning on in-memory images (three deterministic passes:
/// covariance for the projection, projected descriptors for k-means,
/// pixels for the per-word statistics).
pub fn build_dictionary_from_images(
    images: &[GrayRaster],
    config: &RunConfig,
) -> Result<VisualDictionary> {
    let per_image = (config.dict_patches / images.len().max(1)).max(1);
    let descriptor_len = config.hog.descriptor_len(config.window_w, config.window_h);
    if descriptor_len == 0 {
        return Err(Error::rejected("window too small for the HOG layout"));
    }

    let patches_of = |img: &GrayRaster, idx: usize| -> Result<Vec<GrayRaster>> {
        let pyramid = build_pyramid(img, config.pyramid_ratio, config.window_w, config.window_h)?;
        let patches = sample_patches(
            &pyramid,
            idx,
            config.window_w,
            config.window_h,
            SampleMode::Random {
                count: per_image,
                seed: derive_seed(config.seed, idx as u64),
            },
        )?;
        patches
            .iter()
            .map(|p| {
                pyramid.layers[p.layer]
                    .image
                    .crop(p.x, p.y, p.w, p.h)
            })
            .collect()
    };

    // pass 1: covariance of raw descriptors
    let partials: Vec<Result<CovAccumulator>> = images
        .par_iter()
        .enumerate()
        .map(|(idx, img)| {
            let mut acc = CovAccumulator::new(descriptor_len);
            for window in patches_of(img, idx)? {
                acc.push(&DVector::from_vec(hog(&window, &config.hog)));
            }
            Ok(acc)
        })
        .collect();
    let mut acc = CovAccumulator::new(descriptor_len);
    for p in partials {
        acc.merge(&p?);
    }
    if acc.count() < config.k {
        return Err(Error::rejected(format!(
            "{} sampled patches cannot support k = {}",
            acc.count(),
            config.k
        )));
    }
    let pca = fit_pca_from_moments(&acc, config.pca_dim.min(descriptor_len))?;

    // pass 2: projected descriptors, then k-means
    let projected: Vec<Vec<DVector<f64>>> = images
        .par_iter()
        .enumerate()
        .map(|(idx, img)| {
            Ok(patches_of(img, idx)?
                .iter()
                .map(|w| pca.project_slice(&hog(w, &config.hog)))
                .collect::<Vec<_>>())
        })
        .collect::<Result<_>>()?;
    let all: Vec<DVector<f64>> = projected.into_iter().flatten().collect();
    let fit = kmeans_fit(
        &all,
        &KmeansParams {
            k: config.k,
            seed: derive_seed(config.seed, u64::MAX),
            max_iters: config.kmeans_max_iters,
            tol: config.kmeans_tol,
        },
    )?;

    // pass 3: per-word pixel means, distances, appearance variances
    let dim = pca.output_dim();
    let mut word_counts = vec![0u64; config.k];
    let mut pixel_sums =
        vec![vec![0.0f64; config.window_w * config.window_h]; config.k];
    let mut var_sums = vec![0.0f64; config.k];
    let mut distances: Vec<f64> = Vec::with_capacity(all.len());
    let mut cursor = 0usize;
    for (idx, img) in images.iter().enumerate() {
        for window in patches_of(img, idx)? {
            let word = fit.assignments[cursor];
            let desc = &all[cursor];
            cursor += 1;
            let mut d2 = 0.0f64;
            for j in 0..dim {
                let diff = desc[j] - fit.centroids[(word, j)];
                d2 += diff * diff;
            }
            distances.push(d2.sqrt());
            var_sums[word] += d2;
            word_counts[word] += 1;
            for (s, &v) in pixel_sums[word].iter_mut().zip(window.data()) {
                *s += v as f64;
            }
        }
    }
    debug_assert_eq!(cursor, all.len());

    let mean_patches: Vec<GrayRaster> = (0..config.k)
        .map(|w| {
            let n = word_counts[w].max(1) as f64;
            GrayRaster::from_vec(
                config.window_w,
                config.window_h,
                pixel_sums[w].iter().map(|&s| (s / n) as f32).collect(),
            )
        })
        .collect();
    distances.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let distance_quantiles: Vec<f64> = (0..=100)
        .map(|q| {
            let idx = ((q as f64 / 100.0) * (distances.len() - 1) as f64).round() as usize;
            distances[idx]
        })
        .collect();
    let appearance_variance: Vec<f64> = var_sums
        .iter()
        .zip(&word_counts)
        .map(|(s, &c)| {
            if c == 0 {
                1e-6
            } else {
                (s / c as f64 / dim as f64).max(1e-9)
            }
        })
        .collect();

    Ok(VisualDictionary {
        centroids: fit.centroids,
        pca,
        hog: config.hog,
        window_w: config.window_w,
        window_h: config.window_h,
        word_counts,
        mean_patches,
        distance_quantiles,
        appearance_variance,
    })
}

/// Scan a corpus and learn the object models behind it.
pub fn learn_models(
    dir: &Path,
    dict: &VisualDictionary,
    config: &RunConfig,
) -> Result<(Vec<SuvModel>, PairStats)> {
    let paths = corpus_paths(dir)?;
    let images = load_corpus(&paths, paths.len() / 10)?;
    learn_models_from_images(&images, dict, config)
}

pub fn learn_models_from_images(
    images: &[GrayRaster],
    dict: &VisualDictionary,
    config: &RunConfig,
) -> Result<(Vec<SuvModel>, PairStats)> {
    let stats = scan_corpus(images, dict, config)?;
    let models = learn_models_from_stats(&stats, dict, config)?;
    Ok((models, stats))
}

/// Dense-scan every image and accumulate the pair statistics (no cutoff:
/// learning assigns every patch).
pub fn scan_corpus(
    images: &[GrayRaster],
    dict: &VisualDictionary,
    config: &RunConfig,
) -> Result<PairStats> {
    let scans: Vec<Result<Vec<WordDetection>>> = images
        .par_iter()
        .map(|img| {
            scan_image(
                img,
                dict,
                &ScanParams {
                    stride: config.stride,
                    pyramid_ratio: config.pyramid_ratio,
                    distance_cutoff: None,
                },
            )
        })
        .collect();
    let mut stats = PairStats::new(dict.k());
    for scan in scans {
        stats.push_image(&scan?);
    }
    Ok(stats)
}

/// Estimation stage shared by the image pipeline and detection-level
/// tests: statistics in, models out.
pub fn learn_models_from_stats(
    stats: &PairStats,
    dict: &VisualDictionary,
    config: &RunConfig,
) -> Result<Vec<SuvModel>> {
    log::info!(
        "threshold rule: keeping pairs with combined variance <= {} (matched stiffness {:.3} at lambda {})",
        config.variance_threshold,
        SparsifyParams {
            lambda: config.lambda,
            variance_threshold: config.variance_threshold,
            min_support: config.min_pair_support,
        }
        .matched_stiffness(),
        config.lambda
    );
    let edges = sparsify(
        stats,
        &SparsifyParams {
            lambda: config.lambda,
            variance_threshold: config.variance_threshold,
            min_support: config.min_pair_support,
        },
    );
    let srns = giant_components(
        &edges,
        stats,
        &ComponentParams {
            min_component_size: config.min_component_size,
        },
    );
    if srns.is_empty() {
        return Err(Error::NoCategory(format!(
            "no connected component of at least {} viewlets survived the variance threshold",
            config.min_component_size
        )));
    }

    let mut models = Vec::with_capacity(srns.len());
    for (idx, srn) in srns.into_iter().enumerate() {
        let cipc = cipc_build(&srn, stats, &config.cipc);
        let gpe = gpe_embed(
            &srn,
            &GpeParams {
                max_iters: config.gpe_max_iters,
                tol: config.gpe_tol,
            },
        )?;
        let appearance: Vec<ViewletAppearance> = srn
            .nodes
            .iter()
            .map(|&w| ViewletAppearance {
                centroid: dict.centroids.row(w).transpose(),
                variance: dict
                    .appearance_variance
                    .get(w)
                    .copied()
                    .unwrap_or(1e-6),
                mean_patch: dict
                    .mean_patches
                    .get(w)
                    .cloned()
                    .unwrap_or_else(|| GrayRaster::new(dict.window_w, dict.window_h)),
            })
            .collect();
        let model = SuvModel {
            name: format!("category-{idx}"),
            window_w: dict.window_w,
            window_h: dict.window_h,
            srn,
            cipc,
            gpe,
            appearance,
            part_inclusion: config.part_inclusion,
        };
        model.validate()?;
        models.push(model);
    }
    Ok(models)
}

/// Assign a word to every detection-sized window of an image list and
/// feed the statistics accumulator; used by synthetic recovery suites
/// that bypass pixels entirely.
pub fn stats_from_detections(per_image: &[Vec<WordDetection>], word_universe: usize) -> PairStats {
    let mut stats = PairStats::new(word_universe);
    for dets in per_image {
        stats.push_image(dets);
    }
    stats
}
