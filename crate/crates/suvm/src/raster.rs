//! Grayscale rasters: loading, luma conversion, bilinear resampling.
//!
//! All pixel math in the crate runs on `f32` intensities in `[0, 1]`.
//! Color input is collapsed with the luma weights 0.299 R + 0.587 G +
//! 0.114 B so that the descriptor pipeline is independent of whatever
//! default the image decoder ships with.

use std::path::Path;

use crate::error::{Error, Result};

/// Single-channel float image, row-major.
#[derive(Clone, Debug, PartialEq)]
pub struct GrayRaster {
    width: usize,
    height: usize,
    data: Vec<f32>,
}

impl GrayRaster {
    pub fn new(width: usize, height: usize) -> Self {
        Self {
            width,
            height,
            data: vec![0.0; width * height],
        }
    }

    pub fn from_fn(width: usize, height: usize, mut f: impl FnMut(usize, usize) -> f32) -> Self {
        let mut data = Vec::with_capacity(width * height);
        for y in 0..height {
            for x in 0..width {
                data.push(f(x, y));
            }
        }
        Self {
            width,
            height,
            data,
        }
    }

    pub fn from_vec(width: usize, height: usize, data: Vec<f32>) -> Self {
        assert_eq!(data.len(), width * height);
        Self {
            width,
            height,
            data,
        }
    }

    pub fn load(path: &Path) -> Result<Self> {
        let img = image::open(path).map_err(|source| Error::Image {
            path: path.to_path_buf(),
            source,
        })?;
        Ok(Self::from_dynamic(&img))
    }

    pub fn from_dynamic(img: &image::DynamicImage) -> Self {
        let rgb = img.to_rgb8();
        let (w, h) = rgb.dimensions();
        let mut data = Vec::with_capacity((w * h) as usize);
        for p in rgb.pixels() {
            let [r, g, b] = p.0;
            let luma = 0.299 * r as f32 + 0.587 * g as f32 + 0.114 * b as f32;
            data.push(luma / 255.0);
        }
        Self {
            width: w as usize,
            height: h as usize,
            data,
        }
    }

    pub fn save_png(&self, path: &Path) -> Result<()> {
        let mut img = image::GrayImage::new(self.width as u32, self.height as u32);
        for y in 0..self.height {
            for x in 0..self.width {
                let v = (self.get(x, y).clamp(0.0, 1.0) * 255.0).round() as u8;
                img.put_pixel(x as u32, y as u32, image::Luma([v]));
            }
        }
        img.save(path).map_err(|source| Error::Image {
            path: path.to_path_buf(),
            source,
        })
    }

    #[inline]
    pub fn width(&self) -> usize {
        self.width
    }

    #[inline]
    pub fn height(&self) -> usize {
        self.height
    }

    #[inline]
    pub fn get(&self, x: usize, y: usize) -> f32 {
        self.data[y * self.width + x]
    }

    #[inline]
    pub fn set(&mut self, x: usize, y: usize, v: f32) {
        self.data[y * self.width + x] = v;
    }

    pub fn data(&self) -> &[f32] {
        &self.data
    }

    /// Clamped read; out-of-bounds coordinates replicate the border.
    #[inline]
    pub fn get_clamped(&self, x: isize, y: isize) -> f32 {
        let x = x.clamp(0, self.width as isize - 1) as usize;
        let y = y.clamp(0, self.height as isize - 1) as usize;
        self.get(x, y)
    }

    /// Copy of the `w`×`h` window with top-left corner at (x, y).
    pub fn crop(&self, x: usize, y: usize, w: usize, h: usize) -> Result<GrayRaster> {
        if x + w > self.width || y + h > self.height {
            return Err(Error::rejected(format!(
                "crop {}x{}+{}+{} exceeds raster {}x{}",
                w, h, x, y, self.width, self.height
            )));
        }
        let mut out = GrayRaster::new(w, h);
        for dy in 0..h {
            let src = (y + dy) * self.width + x;
            let dst = dy * w;
            out.data[dst..dst + w].copy_from_slice(&self.data[src..src + w]);
        }
        Ok(out)
    }

    /// Bilinear resample to the given dimensions.
    pub fn resize(&self, new_w: usize, new_h: usize) -> GrayRaster {
        assert!(new_w > 0 && new_h > 0);
        if new_w == self.width && new_h == self.height {
            return self.clone();
        }
        let sx = self.width as f32 / new_w as f32;
        let sy = self.height as f32 / new_h as f32;
        let mut out = GrayRaster::new(new_w, new_h);
        for y in 0..new_h {
            // map the destination pixel center back to source coordinates
            let fy = (y as f32 + 0.5) * sy - 0.5;
            let y0 = fy.floor();
            let ty = fy - y0;
            for x in 0..new_w {
                let fx = (x as f32 + 0.5) * sx - 0.5;
                let x0 = fx.floor();
                let tx = fx - x0;
                let (xi, yi) = (x0 as isize, y0 as isize);
                let v00 = self.get_clamped(xi, yi);
                let v10 = self.get_clamped(xi + 1, yi);
                let v01 = self.get_clamped(xi, yi + 1);
                let v11 = self.get_clamped(xi + 1, yi + 1);
                let top = v00 + (v10 - v00) * tx;
                let bot = v01 + (v11 - v01) * tx;
                out.set(x, y, top + (bot - top) * ty);
            }
        }
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn crop_reads_expected_window() {
        let r = GrayRaster::from_fn(8, 6, |x, y| (y * 8 + x) as f32);
        let c = r.crop(2, 1, 3, 2).unwrap();
        assert_eq!(c.get(0, 0), 10.0);
        assert_eq!(c.get(2, 1), 20.0);
    }

    #[test]
    fn crop_out_of_bounds_rejected() {
        let r = GrayRaster::new(4, 4);
        assert!(r.crop(2, 2, 3, 3).is_err());
    }

    #[test]
    fn resize_constant_image_stays_constant() {
        let r = GrayRaster::from_fn(10, 10, |_, _| 0.5);
        let s = r.resize(7, 4);
        assert!(s.data().iter().all(|&v| (v - 0.5).abs() < 1e-6));
    }

    #[test]
    fn resize_identity_is_exact() {
        let r = GrayRaster::from_fn(5, 5, |x, y| (x * y) as f32 * 0.01);
        assert_eq!(r.resize(5, 5), r);
    }
}
