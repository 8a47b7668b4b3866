//! Scale pyramid construction and patch sampling.
//!
//! Layer 0 is the base image; every further layer shrinks the previous
//! dimensions by a constant ratio until the next layer would fall below
//! the minimum size. A fixed-size window slid over layer `i` covers a
//! base-image region of `window / factor_i` pixels, which is how a fixed
//! descriptor window observes patterns at multiple scales.

use rand::Rng;

use crate::error::{Error, Result};
use crate::raster::GrayRaster;
use crate::util::seeded_rng;

#[derive(Clone, Debug)]
pub struct PyramidLayer {
    pub image: GrayRaster,
    /// Scale factor relative to the base image (layer 0 has factor 1.0).
    pub factor: f64,
}

#[derive(Clone, Debug)]
pub struct ScalePyramid {
    pub layers: Vec<PyramidLayer>,
    pub base_width: usize,
    pub base_height: usize,
    pub ratio: f64,
    pub min_width: usize,
    pub min_height: usize,
}

/// One sampled window position.
///
/// `x, y, w, h` live in layer coordinates; `extent_x`/`extent_y` are the
/// window dimensions back-projected to base-image pixels (`w / factor`).
/// Window origins are integers (floor-rounded); extents are kept real so
/// that relative-position statistics do not accumulate rounding drift.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Patch {
    pub image_id: usize,
    pub layer: usize,
    pub x: usize,
    pub y: usize,
    pub w: usize,
    pub h: usize,
    pub factor: f64,
    pub extent_x: f64,
    pub extent_y: f64,
}

impl Patch {
    /// Window origin back-projected to base-image pixels.
    pub fn base_origin(&self) -> (f64, f64) {
        (self.x as f64 / self.factor, self.y as f64 / self.factor)
    }
}

/// Build all layers down to (`min_w`, `min_h`).
pub fn build_pyramid(
    image: &GrayRaster,
    ratio: f64,
    min_w: usize,
    min_h: usize,
) -> Result<ScalePyramid> {
    if !(ratio > 0.0 && ratio < 1.0) {
        return Err(Error::rejected(format!(
            "pyramid ratio must be in (0,1), got {ratio}"
        )));
    }
    if min_w == 0 || min_h == 0 {
        return Err(Error::rejected("minimum layer size must be positive"));
    }
    if image.width() < min_w || image.height() < min_h {
        return Err(Error::rejected(format!(
            "image {}x{} smaller than the minimum layer size {}x{}",
            image.width(),
            image.height(),
            min_w,
            min_h
        )));
    }
    let mut layers = vec![PyramidLayer {
        image: image.clone(),
        factor: 1.0,
    }];
    loop {
        let factor = layers.last().unwrap().factor * ratio;
        let w = (image.width() as f64 * factor).floor() as usize;
        let h = (image.height() as f64 * factor).floor() as usize;
        if w < min_w || h < min_h {
            break;
        }
        layers.push(PyramidLayer {
            image: image.resize(w, h),
            factor,
        });
    }
    Ok(ScalePyramid {
        layers,
        base_width: image.width(),
        base_height: image.height(),
        ratio,
        min_width: min_w,
        min_height: min_h,
    })
}

#[derive(Clone, Copy, Debug)]
pub enum SampleMode {
    /// `count` windows at uniform random layer/position, reproducible from `seed`.
    Random { count: usize, seed: u64 },
    /// Every layer tiled with the given stride.
    Dense { stride: usize },
}

/// Sample fixed-size windows from every pyramid layer.
pub fn sample_patches(
    pyramid: &ScalePyramid,
    image_id: usize,
    window_w: usize,
    window_h: usize,
    mode: SampleMode,
) -> Result<Vec<Patch>> {
    for (li, layer) in pyramid.layers.iter().enumerate() {
        if layer.image.width() < window_w || layer.image.height() < window_h {
            return Err(Error::rejected(format!(
                "window {window_w}x{window_h} does not fit layer {li} ({}x{})",
                layer.image.width(),
                layer.image.height()
            )));
        }
    }
    let make = |layer_idx: usize, factor: f64, x: usize, y: usize| Patch {
        image_id,
        layer: layer_idx,
        x,
        y,
        w: window_w,
        h: window_h,
        factor,
        extent_x: window_w as f64 / factor,
        extent_y: window_h as f64 / factor,
    };
    let mut out = Vec::new();
    match mode {
        SampleMode::Random { count, seed } => {
            let mut rng = seeded_rng(seed);
            for _ in 0..count {
                let li = rng.gen_range(0..pyramid.layers.len());
                let layer = &pyramid.layers[li];
                let x = rng.gen_range(0..=layer.image.width() - window_w);
                let y = rng.gen_range(0..=layer.image.height() - window_h);
                out.push(make(li, layer.factor, x, y));
            }
        }
        SampleMode::Dense { stride } => {
            assert!(stride > 0, "stride must be positive");
            for (li, layer) in pyramid.layers.iter().enumerate() {
                let mut y = 0;
                while y + window_h <= layer.image.height() {
                    let mut x = 0;
                    while x + window_w <= layer.image.width() {
                        out.push(make(li, layer.factor, x, y));
                        x += stride;
                    }
                    y += stride;
                }
            }
        }
    }
    Ok(out)
}

/// Closed-form dense tiling count for one layer.
pub fn dense_count(layer_w: usize, layer_h: usize, win_w: usize, win_h: usize, stride: usize) -> usize {
    if layer_w < win_w || layer_h < win_h {
        return 0;
    }
    ((layer_w - win_w) / stride + 1) * ((layer_h - win_h) / stride + 1)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn gradient_image(w: usize, h: usize) -> GrayRaster {
        GrayRaster::from_fn(w, h, |x, y| ((x + y) % 32) as f32 / 32.0)
    }

    #[test]
    fn pyramid_factors_are_geometric() {
        let img = gradient_image(512, 512);
        let p = build_pyramid(&img, 0.5, 128, 128).unwrap();
        let factors: Vec<f64> = p.layers.iter().map(|l| l.factor).collect();
        assert_eq!(factors, vec![1.0, 0.5, 0.25]);
        assert_eq!(p.layers[2].image.width(), 128);
    }

    #[test]
    fn image_equal_to_window_gives_single_layer() {
        let img = gradient_image(128, 96);
        let p = build_pyramid(&img, 0.5, 128, 96).unwrap();
        assert_eq!(p.layers.len(), 1);
    }

    #[test]
    fn golden_factor_sequence_1000x800_ratio_08_min_200() {
        // enumerate factors until a dimension drops below 200: the layer
        // heights are 800, 640, 512, 409, 327, 262, 209, then 167 < 200.
        let img = gradient_image(1000, 800);
        let p = build_pyramid(&img, 0.8, 200, 200).unwrap();
        let factors: Vec<f64> = p.layers.iter().map(|l| l.factor).collect();
        let expected = [
            1.0,
            0.8,
            0.8 * 0.8,
            0.8_f64.powi(3),
            0.8_f64.powi(4),
            0.8_f64.powi(5),
            0.8_f64.powi(6),
        ];
        assert_eq!(factors.len(), expected.len());
        for (f, e) in factors.iter().zip(expected) {
            assert!((f - e).abs() < 1e-12);
        }
        // closed-form count: floor(log(200/800)/log(0.8)) + 1 = 7
        let closed = ((200.0_f64 / 800.0).ln() / 0.8_f64.ln()).floor() as usize + 1;
        assert_eq!(p.layers.len(), closed);
    }

    #[test]
    fn too_small_image_is_rejected() {
        let img = gradient_image(100, 100);
        assert!(build_pyramid(&img, 0.5, 128, 96).is_err());
    }

    #[test]
    fn random_sampling_is_reproducible_and_counted() {
        let img = gradient_image(300, 200);
        let p = build_pyramid(&img, std::f64::consts::FRAC_1_SQRT_2, 64, 48).unwrap();
        let a = sample_patches(&p, 0, 64, 48, SampleMode::Random { count: 500, seed: 9 }).unwrap();
        let b = sample_patches(&p, 0, 64, 48, SampleMode::Random { count: 500, seed: 9 }).unwrap();
        assert_eq!(a.len(), 500);
        assert_eq!(a, b);
        let c = sample_patches(&p, 0, 64, 48, SampleMode::Random { count: 500, seed: 10 }).unwrap();
        assert_ne!(a, c);
    }

    #[test]
    fn dense_mode_matches_tiling_arithmetic() {
        let img = gradient_image(320, 240);
        let p = build_pyramid(&img, 0.5, 64, 64).unwrap();
        let stride = 64;
        let patches = sample_patches(&p, 0, 64, 64, SampleMode::Dense { stride }).unwrap();
        let expected: usize = p
            .layers
            .iter()
            .map(|l| dense_count(l.image.width(), l.image.height(), 64, 64, stride))
            .sum();
        assert_eq!(patches.len(), expected);
        // non-overlapping tiling when stride equals the window
        let l0: Vec<&Patch> = patches.iter().filter(|p| p.layer == 0).collect();
        assert_eq!(l0.len(), (320 / 64) * (240 / 64));
    }

    #[test]
    fn back_projection_consistency() {
        let img = gradient_image(320, 240);
        let p = build_pyramid(&img, std::f64::consts::FRAC_1_SQRT_2, 64, 48).unwrap();
        let patches = sample_patches(&p, 0, 64, 48, SampleMode::Dense { stride: 32 }).unwrap();
        for pt in patches {
            assert!((pt.extent_x * pt.factor - pt.w as f64).abs() < 1e-9);
            assert!((pt.extent_y * pt.factor - pt.h as f64).abs() < 1e-9);
        }
    }
}
