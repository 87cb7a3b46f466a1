//! Draws a planned grid path onto the perspective camera frame.

use image::{Rgb, RgbImage};
use serde::{Deserialize, Serialize};

use crate::costgrid::GridSpec;
use crate::homography::{Homography, HomographyError, Point};
use crate::planner::GridPath;
use crate::raster::{LabelImage, OUT_OF_VIEW_CLASS};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct OverlayStyle {
    pub path_color: [u8; 3],
    pub start_color: [u8; 3],
    pub goal_color: [u8; 3],
    pub marker_radius_px: u32,
    pub line_width_px: u32,
}

impl Default for OverlayStyle {
    fn default() -> Self {
        Self {
            path_color: [0, 96, 255],
            start_color: [255, 0, 0],
            goal_color: [0, 200, 0],
            marker_radius_px: 4,
            line_width_px: 2,
        }
    }
}

/// False-color rendering of a label image, used as an overlay backdrop when
/// no camera frame is available.
pub fn colorize_labels(labels: &LabelImage) -> RgbImage {
    const PALETTE: [[u8; 3]; 3] = [[150, 110, 70], [205, 170, 110], [70, 70, 70]];
    RgbImage::from_fn(labels.width(), labels.height(), |x, y| {
        let class = labels.get(x, y);
        Rgb(match class {
            OUT_OF_VIEW_CLASS => [0, 0, 0],
            c if (c as usize) < PALETTE.len() => PALETTE[c as usize],
            c => [c.wrapping_mul(37), c.wrapping_mul(91), c.wrapping_mul(151)],
        })
    })
}

/// Perspective-image position of every path cell center, `None` where the
/// center maps to infinity.
pub fn marker_positions(
    path: &GridPath,
    spec: &GridSpec,
    bev_to_persp: &Homography,
) -> Vec<Option<Point>> {
    path.cells
        .iter()
        .map(|c| {
            let (x, y) = spec.cell_center(c.row, c.col);
            bev_to_persp.project(Point::new(x, y)).ok()
        })
        .collect()
}

/// Pixel a marker is drawn at.
pub fn marker_pixel(p: Point) -> (i64, i64) {
    (p.x.round() as i64, p.y.round() as i64)
}

/// `h` maps the frame's perspective plane to BEV; markers are projected
/// through its inverse.
pub fn render_overlay(
    frame: &RgbImage,
    path: &GridPath,
    spec: &GridSpec,
    h: &Homography,
    style: &OverlayStyle,
) -> Result<RgbImage, HomographyError> {
    let inv = h.invert()?;
    let mut out = frame.clone();
    if path.cells.is_empty() {
        return Ok(out);
    }
    let radius = style.marker_radius_px.max(1) as i64;
    let half_width = style.line_width_px.max(1) as i64 / 2;
    let points = marker_positions(path, spec, &inv);

    let path_color = Rgb(style.path_color);
    for pair in points.windows(2) {
        if let [Some(a), Some(b)] = pair {
            draw_segment(&mut out, *a, *b, half_width, path_color);
        }
    }
    for p in points.iter().flatten() {
        draw_disc(&mut out, marker_pixel(*p), radius, path_color);
    }
    if let Some(Some(p)) = points.first() {
        draw_disc(&mut out, marker_pixel(*p), radius, Rgb(style.start_color));
    }
    if let Some(Some(p)) = points.last() {
        if points.len() > 1 {
            draw_disc(&mut out, marker_pixel(*p), radius, Rgb(style.goal_color));
        }
    }
    Ok(out)
}

fn put(img: &mut RgbImage, x: i64, y: i64, color: Rgb<u8>) {
    if x >= 0 && y >= 0 && (x as u64) < img.width() as u64 && (y as u64) < img.height() as u64 {
        img.put_pixel(x as u32, y as u32, color);
    }
}

fn draw_disc(img: &mut RgbImage, (cx, cy): (i64, i64), radius: i64, color: Rgb<u8>) {
    let (w, h) = (img.width() as i64, img.height() as i64);
    if cx + radius < 0 || cy + radius < 0 || cx - radius >= w || cy - radius >= h {
        return;
    }
    for dy in -radius..=radius {
        for dx in -radius..=radius {
            if dx * dx + dy * dy <= radius * radius {
                put(img, cx + dx, cy + dy, color);
            }
        }
    }
}

/// Liang-Barsky clip of segment `a`-`b` to `[lo, hi]` on both axes.
fn clip(a: Point, b: Point, lo: (f64, f64), hi: (f64, f64)) -> Option<(Point, Point)> {
    let (dx, dy) = (b.x - a.x, b.y - a.y);
    let mut t0 = 0.0f64;
    let mut t1 = 1.0f64;
    for (p, q) in [
        (-dx, a.x - lo.0),
        (dx, hi.0 - a.x),
        (-dy, a.y - lo.1),
        (dy, hi.1 - a.y),
    ] {
        if p == 0.0 {
            if q < 0.0 {
                return None;
            }
        } else {
            let t = q / p;
            if p < 0.0 {
                t0 = t0.max(t);
            } else {
                t1 = t1.min(t);
            }
            if t0 > t1 {
                return None;
            }
        }
    }
    Some((
        Point::new(a.x + t0 * dx, a.y + t0 * dy),
        Point::new(a.x + t1 * dx, a.y + t1 * dy),
    ))
}

fn draw_segment(img: &mut RgbImage, a: Point, b: Point, half_width: i64, color: Rgb<u8>) {
    let margin = half_width as f64 + 2.0;
    let lo = (-margin, -margin);
    let hi = (img.width() as f64 + margin, img.height() as f64 + margin);
    let Some((a, b)) = clip(a, b, lo, hi) else {
        return;
    };
    let (mut x0, mut y0) = marker_pixel(a);
    let (x1, y1) = marker_pixel(b);
    let dx = (x1 - x0).abs();
    let dy = -(y1 - y0).abs();
    let sx = if x0 < x1 { 1 } else { -1 };
    let sy = if y0 < y1 { 1 } else { -1 };
    let mut err = dx + dy;
    loop {
        if half_width == 0 {
            put(img, x0, y0, color);
        } else {
            draw_disc(img, (x0, y0), half_width, color);
        }
        if x0 == x1 && y0 == y1 {
            break;
        }
        let e2 = 2 * err;
        if e2 >= dy {
            err += dy;
            x0 += sx;
        }
        if e2 <= dx {
            err += dx;
            y0 += sy;
        }
    }
}
