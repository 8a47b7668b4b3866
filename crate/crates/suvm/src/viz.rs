//! Visualization exports: embedding scatter as SVG, detection overlays,
//! plain-text tables.

use std::path::Path;

use crate::detection::ObjectDetection;
use crate::error::{Error, Result};
use crate::generative::SuvModel;
use crate::raster::GrayRaster;

/// Scatter of the positional embedding: one marker per viewlet at its
/// embedded position, radius proportional to its scale, colored by part.
pub fn gpe_svg(model: &SuvModel) -> String {
    let g = &model.gpe;
    let n = g.nodes.len();
    let w = model.window_w as f64;
    let h = model.window_h as f64;
    // bounds in pixel-equivalent units
    let (mut x0, mut y0, mut x1, mut y1) = (f64::MAX, f64::MAX, f64::MIN, f64::MIN);
    for p in 0..n {
        let r = g.scale[p] * w * 0.5;
        x0 = x0.min(g.x[p] * w - r);
        x1 = x1.max(g.x[p] * w + r);
        y0 = y0.min(g.y[p] * h - r);
        y1 = y1.max(g.y[p] * h + r);
    }
    let pad = 0.05 * (x1 - x0).max(y1 - y0).max(1.0);
    let (x0, y0, x1, y1) = (x0 - pad, y0 - pad, x1 + pad, y1 + pad);
    let scale = 640.0 / (x1 - x0).max(1e-9);
    let height = ((y1 - y0) * scale).ceil().max(64.0);

    let mut svg = String::new();
    svg.push_str(&format!(
        "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"640\" height=\"{height:.0}\" viewBox=\"0 0 640 {height:.0}\">\n"
    ));
    svg.push_str("<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n");
    for p in 0..n {
        let cx = (g.x[p] * w - x0) * scale;
        let cy = (g.y[p] * h - y0) * scale;
        let r = (g.scale[p] * w * 0.5 * scale).max(2.0);
        let part = model.cipc.part_of[p];
        let hue = (part * 360) / model.cipc.part_count.max(1);
        svg.push_str(&format!(
            "<circle cx=\"{cx:.1}\" cy=\"{cy:.1}\" r=\"{r:.1}\" fill=\"hsl({hue},70%,55%)\" fill-opacity=\"0.55\" stroke=\"hsl({hue},70%,35%)\"/>\n"
        ));
        svg.push_str(&format!(
            "<text x=\"{cx:.1}\" y=\"{:.1}\" font-size=\"10\" text-anchor=\"middle\">{}</text>\n",
            cy + 3.0,
            g.nodes[p]
        ));
    }
    svg.push_str("</svg>\n");
    svg
}

/// Embedding and parts as an aligned text table.
pub fn gpe_table(model: &SuvModel) -> String {
    let g = &model.gpe;
    let mut out = String::from("word  part        x        y    scale\n");
    for p in 0..g.nodes.len() {
        out.push_str(&format!(
            "{:>4}  {:>4} {:>8.3} {:>8.3} {:>8.3}\n",
            g.nodes[p], model.cipc.part_of[p], g.x[p], g.y[p], g.scale[p]
        ));
    }
    out.push_str(&format!("stress {:.6}\n", g.stress));
    out
}

/// Write the image with detection boxes (and member windows) burned in.
pub fn save_overlay(
    image: &GrayRaster,
    detections: &[ObjectDetection],
    path: &Path,
) -> Result<()> {
    let mut rgb = image::RgbImage::new(image.width() as u32, image.height() as u32);
    for y in 0..image.height() {
        for x in 0..image.width() {
            let v = (image.get(x, y).clamp(0.0, 1.0) * 255.0) as u8;
            rgb.put_pixel(x as u32, y as u32, image::Rgb([v, v, v]));
        }
    }
    for (k, det) in detections.iter().enumerate() {
        let color = palette(k);
        for m in &det.members {
            draw_rect(
                &mut rgb,
                m.x,
                m.y,
                m.extent_x,
                m.extent_y,
                image::Rgb([color.0 / 2, color.1 / 2, color.2 / 2]),
            );
        }
        draw_rect(
            &mut rgb,
            det.bbox.x,
            det.bbox.y,
            det.bbox.w,
            det.bbox.h,
            image::Rgb([color.0, color.1, color.2]),
        );
    }
    rgb.save(path).map_err(|source| Error::Image {
        path: path.to_path_buf(),
        source,
    })
}

fn palette(k: usize) -> (u8, u8, u8) {
    const COLORS: [(u8, u8, u8); 6] = [
        (230, 60, 60),
        (60, 180, 60),
        (70, 90, 230),
        (230, 170, 40),
        (180, 60, 200),
        (40, 200, 200),
    ];
    COLORS[k % COLORS.len()]
}

fn draw_rect(img: &mut image::RgbImage, x: f64, y: f64, w: f64, h: f64, color: image::Rgb<u8>) {
    let (iw, ih) = (img.width() as i64, img.height() as i64);
    let x0 = x.round() as i64;
    let y0 = y.round() as i64;
    let x1 = (x + w).round() as i64;
    let y1 = (y + h).round() as i64;
    let mut put = |px: i64, py: i64| {
        if px >= 0 && py >= 0 && px < iw && py < ih {
            img.put_pixel(px as u32, py as u32, color);
        }
    };
    for px in x0..=x1 {
        put(px, y0);
        put(px, y1);
    }
    for py in y0..=y1 {
        put(x0, py);
        put(x1, py);
    }
}
