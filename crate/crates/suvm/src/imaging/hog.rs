//! Histogram-of-oriented-gradients descriptor.
//!
//! Configuration follows the canonical setup: 8x8-pixel cells, 9 unsigned
//! orientation bins, 2x2-cell blocks, L2-hys block normalization with a
//! 0.2 clip. A constant-intensity patch produces an all-zero descriptor
//! (zero gradients, and zero-norm blocks are left at zero rather than
//! divided).

use crate::raster::GrayRaster;

#[derive(Clone, Copy, Debug, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct HogParams {
    pub cell_size: usize,
    pub orientation_bins: usize,
    /// Block side length in cells.
    pub block_size: usize,
    /// L2-hys clipping value.
    pub clip: f64,
}

impl Default for HogParams {
    fn default() -> Self {
        Self {
            cell_size: 8,
            orientation_bins: 9,
            block_size: 2,
            clip: 0.2,
        }
    }
}

impl HogParams {
    pub fn cells(&self, w: usize, h: usize) -> (usize, usize) {
        (w / self.cell_size, h / self.cell_size)
    }

    /// Descriptor length for a `w`×`h` window.
    pub fn descriptor_len(&self, w: usize, h: usize) -> usize {
        let (cx, cy) = self.cells(w, h);
        if cx < self.block_size || cy < self.block_size {
            return 0;
        }
        let bx = cx - self.block_size + 1;
        let by = cy - self.block_size + 1;
        bx * by * self.block_size * self.block_size * self.orientation_bins
    }
}

/// Compute the descriptor of a full raster (the patch window).
pub fn hog(patch: &GrayRaster, params: &HogParams) -> Vec<f64> {
    let w = patch.width();
    let h = patch.height();
    let (cells_x, cells_y) = params.cells(w, h);
    assert!(
        cells_x >= params.block_size && cells_y >= params.block_size,
        "patch {w}x{h} too small for HOG cells"
    );
    let nbins = params.orientation_bins;

    // per-cell unsigned orientation histograms, hard binning
    let mut cell_hist = vec![0.0f64; cells_x * cells_y * nbins];
    let used_w = cells_x * params.cell_size;
    let used_h = cells_y * params.cell_size;
    for y in 0..used_h {
        for x in 0..used_w {
            let (mag, bin) = gradient_bin(patch, x, y, nbins);
            if mag == 0.0 {
                continue;
            }
            let cx = x / params.cell_size;
            let cy = y / params.cell_size;
            cell_hist[(cy * cells_x + cx) * nbins + bin] += mag;
        }
    }

    // block normalization: L2 -> clip -> L2
    let bx = cells_x - params.block_size + 1;
    let by = cells_y - params.block_size + 1;
    let block_len = params.block_size * params.block_size * nbins;
    let mut out = Vec::with_capacity(bx * by * block_len);
    let mut block = vec![0.0f64; block_len];
    for byi in 0..by {
        for bxi in 0..bx {
            let mut k = 0;
            for dy in 0..params.block_size {
                for dx in 0..params.block_size {
                    let cell = ((byi + dy) * cells_x + (bxi + dx)) * nbins;
                    block[k..k + nbins].copy_from_slice(&cell_hist[cell..cell + nbins]);
                    k += nbins;
                }
            }
            l2_hys(&mut block, params.clip);
            out.extend_from_slice(&block);
        }
    }
    out
}

/// Gradient magnitude and unsigned orientation bin at one pixel.
/// Central differences with replicated borders.
pub(crate) fn gradient_bin(img: &GrayRaster, x: usize, y: usize, nbins: usize) -> (f64, usize) {
    let xi = x as isize;
    let yi = y as isize;
    let gx = (img.get_clamped(xi + 1, yi) - img.get_clamped(xi - 1, yi)) as f64;
    let gy = (img.get_clamped(xi, yi + 1) - img.get_clamped(xi, yi - 1)) as f64;
    let mag = (gx * gx + gy * gy).sqrt();
    if mag == 0.0 {
        return (0.0, 0);
    }
    let mut theta = gy.atan2(gx);
    if theta < 0.0 {
        theta += std::f64::consts::PI;
    }
    if theta >= std::f64::consts::PI {
        theta -= std::f64::consts::PI;
    }
    let bin = ((theta / std::f64::consts::PI) * nbins as f64) as usize;
    (mag, bin.min(nbins - 1))
}

fn l2_hys(block: &mut [f64], clip: f64) {
    let norm: f64 = block.iter().map(|v| v * v).sum::<f64>().sqrt();
    if norm == 0.0 {
        return;
    }
    for v in block.iter_mut() {
        *v = (*v / norm).min(clip);
    }
    let norm2: f64 = block.iter().map(|v| v * v).sum::<f64>().sqrt();
    if norm2 == 0.0 {
        return;
    }
    for v in block.iter_mut() {
        *v /= norm2;
    }
}
