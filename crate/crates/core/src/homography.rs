//! Planar projective transforms between the perspective image and the
//! metric birds-eye-view (BEV) canvas.
//!
//! Pixel convention: pixel `(i, j)` covers the continuous square
//! `[i, i+1) x [j, j+1)`. Warping samples every destination pixel at its
//! center `(i + 0.5, j + 0.5)` and pulls the source pixel containing the
//! back-projected point.

use nalgebra::{Matrix3, SMatrix, Vector3};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::raster::{CostMap, LabelImage, OUT_OF_VIEW_CLASS};

/// Threshold below which a homogeneous scale is treated as zero.
pub const EPS_W: f64 = 1e-12;
/// Minimum |det| of a normalized matrix.
pub const EPS_DET: f64 = 1e-12;

#[derive(Debug, Error, PartialEq)]
pub enum HomographyError {
    #[error("degenerate correspondences: {which} points {a}, {b}, {c} are collinear")]
    Degenerate {
        which: &'static str,
        a: usize,
        b: usize,
        c: usize,
    },
    #[error("correspondence coordinates must be finite")]
    NonFinite,
    #[error("homography matrix is singular (|det| = {det:e})")]
    Singular { det: f64 },
    #[error("point ({x}, {y}) maps to infinity")]
    PointAtInfinity { x: f64, y: f64 },
    #[error("bilinear sampling would blend class ids; label rasters require nearest sampling")]
    BilinearLabels,
    #[error("BEV canvas must have positive size, got {width_mm}x{height_mm} mm")]
    EmptyCanvas { width_mm: u32, height_mm: u32 },
    #[error("cached matrix disagrees with correspondences (residual {residual:e} px)")]
    StaleCache { residual: f64 },
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(from = "[f64; 2]", into = "[f64; 2]")]
pub struct Point {
    pub x: f64,
    pub y: f64,
}

impl Point {
    pub const fn new(x: f64, y: f64) -> Self {
        Self { x, y }
    }

    pub fn dist(self, other: Point) -> f64 {
        (self.x - other.x).hypot(self.y - other.y)
    }
}

impl From<[f64; 2]> for Point {
    fn from([x, y]: [f64; 2]) -> Self {
        Self { x, y }
    }
}

impl From<Point> for [f64; 2] {
    fn from(p: Point) -> Self {
        [p.x, p.y]
    }
}

/// Output raster size in pixels.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Dims {
    pub width: u32,
    pub height: u32,
}

impl Dims {
    pub const fn new(width: u32, height: u32) -> Self {
        Self { width, height }
    }
}

/// Metric ground canvas. One BEV pixel is one millimeter.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct BevCanvas {
    pub width_mm: u32,
    pub height_mm: u32,
}

impl BevCanvas {
    pub const PX_PER_MM: u32 = 1;

    pub fn new(width_mm: u32, height_mm: u32) -> Result<Self, HomographyError> {
        if width_mm == 0 || height_mm == 0 {
            return Err(HomographyError::EmptyCanvas {
                width_mm,
                height_mm,
            });
        }
        Ok(Self {
            width_mm,
            height_mm,
        })
    }

    pub fn dims(&self) -> Dims {
        Dims::new(
            self.width_mm * Self::PX_PER_MM,
            self.height_mm * Self::PX_PER_MM,
        )
    }
}

/// Four perspective-image points and their BEV positions.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Correspondences {
    pub src: [Point; 4],
    pub dst: [Point; 4],
}

impl Correspondences {
    pub fn new(src: [Point; 4], dst: [Point; 4]) -> Result<Self, HomographyError> {
        let c = Self { src, dst };
        c.validate()?;
        Ok(c)
    }

    pub fn validate(&self) -> Result<(), HomographyError> {
        if self
            .src
            .iter()
            .chain(self.dst.iter())
            .any(|p| !p.x.is_finite() || !p.y.is_finite())
        {
            return Err(HomographyError::NonFinite);
        }
        check_no_collinear_triple("src", &self.src)?;
        check_no_collinear_triple("dst", &self.dst)
    }
}

fn check_no_collinear_triple(which: &'static str, pts: &[Point; 4]) -> Result<(), HomographyError> {
    let extent = pts
        .iter()
        .flat_map(|a| pts.iter().map(move |b| a.dist(*b)))
        .fold(0.0_f64, f64::max);
    let tol = 1e-9 * extent * extent;
    for (a, b, c) in [(0, 1, 2), (0, 1, 3), (0, 2, 3), (1, 2, 3)] {
        let (p, q, r) = (pts[a], pts[b], pts[c]);
        let cross = (q.x - p.x) * (r.y - p.y) - (q.y - p.y) * (r.x - p.x);
        if cross.abs() <= tol {
            return Err(HomographyError::Degenerate { which, a, b, c });
        }
    }
    Ok(())
}

/// A normalized 3x3 projective transform, perspective -> BEV unless noted.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Homography {
    m: Matrix3<f64>,
    /// Set when `m[2][2]` was too close to zero and the matrix was scaled to
    /// unit Frobenius norm instead.
    frobenius_normalized: bool,
    /// A source-plane point known to be on the observed side of the horizon,
    /// e.g. the centroid of the calibration points. Warps use it to tell
    /// real points from their mirror images behind the camera.
    anchor: Option<Point>,
}

impl Homography {
    pub fn identity() -> Self {
        Self {
            m: Matrix3::identity(),
            frobenius_normalized: false,
            anchor: None,
        }
    }

    /// Builds a homography from a row-major 3x3 matrix, normalizing it.
    pub fn from_row_major(m: [f64; 9]) -> Result<Self, HomographyError> {
        Self::from_matrix(Matrix3::from_row_slice(&m))
    }

    pub fn from_rows(rows: [[f64; 3]; 3]) -> Result<Self, HomographyError> {
        let flat: Vec<f64> = rows.iter().flatten().copied().collect();
        Self::from_matrix(Matrix3::from_row_slice(&flat))
    }

    fn from_matrix(m: Matrix3<f64>) -> Result<Self, HomographyError> {
        if m.iter().any(|v| !v.is_finite()) {
            return Err(HomographyError::Singular { det: f64::NAN });
        }
        let (m, frobenius_normalized) = normalize(m);
        let det = m.determinant();
        if det.abs() <= EPS_DET || det.is_nan() {
            return Err(HomographyError::Singular { det });
        }
        Ok(Self {
            m,
            frobenius_normalized,
            anchor: None,
        })
    }

    /// Marks `p` (source plane) as observed. Ignored if `p` maps to infinity.
    pub fn with_anchor(mut self, p: Point) -> Self {
        self.anchor = (p.x.is_finite() && p.y.is_finite() && self.w(p).abs() > EPS_W).then_some(p);
        self
    }

    pub fn anchor(&self) -> Option<Point> {
        self.anchor
    }

    /// True when the bottom row is `[0, 0, c]`: no horizon, every point is
    /// observed.
    pub fn is_affine(&self) -> bool {
        self.m[(2, 0)] == 0.0 && self.m[(2, 1)] == 0.0
    }

    pub fn to_row_major(&self) -> [f64; 9] {
        let mut out = [0.0; 9];
        for r in 0..3 {
            for c in 0..3 {
                out[r * 3 + c] = self.m[(r, c)];
            }
        }
        out
    }

    pub fn rows(&self) -> [[f64; 3]; 3] {
        let mut out = [[0.0; 3]; 3];
        for (r, row) in out.iter_mut().enumerate() {
            for (c, v) in row.iter_mut().enumerate() {
                *v = self.m[(r, c)];
            }
        }
        out
    }

    pub fn is_frobenius_normalized(&self) -> bool {
        self.frobenius_normalized
    }

    pub fn determinant(&self) -> f64 {
        self.m.determinant()
    }

    /// Homogeneous scale `w` of `p` under this transform.
    #[inline]
    pub fn w(&self, p: Point) -> f64 {
        self.m[(2, 0)] * p.x + self.m[(2, 1)] * p.y + self.m[(2, 2)]
    }

    pub fn project(&self, p: Point) -> Result<Point, HomographyError> {
        let w = self.w(p);
        if w.abs() <= EPS_W || w.is_nan() {
            return Err(HomographyError::PointAtInfinity { x: p.x, y: p.y });
        }
        let m = &self.m;
        Ok(Point::new(
            (m[(0, 0)] * p.x + m[(0, 1)] * p.y + m[(0, 2)]) / w,
            (m[(1, 0)] * p.x + m[(1, 1)] * p.y + m[(1, 2)]) / w,
        ))
    }

    pub fn invert(&self) -> Result<Homography, HomographyError> {
        let inv = self.m.try_inverse().ok_or(HomographyError::Singular {
            det: self.m.determinant(),
        })?;
        let out = Self::from_matrix(inv)?;
        Ok(match self.anchor.and_then(|a| self.project(a).ok()) {
            Some(image) => out.with_anchor(image),
            None => out,
        })
    }

    /// Matrix product `self * other` (apply `other` first), normalized. The
    /// anchor carries over when the other factor is affine.
    pub fn compose(&self, other: &Homography) -> Result<Homography, HomographyError> {
        let out = Self::from_matrix(self.m * other.m)?;
        let anchor = match (self.anchor, other.anchor) {
            (Some(a), _) if other.is_affine() => other.invert()?.project(a).ok(),
            (_, Some(a)) if self.is_affine() || self.anchor.is_none() => Some(a),
            _ => None,
        };
        Ok(match anchor {
            Some(a) => out.with_anchor(a),
            None => out,
        })
    }
}

fn normalize(m: Matrix3<f64>) -> (Matrix3<f64>, bool) {
    let m22 = m[(2, 2)];
    if m22.abs() > EPS_W {
        let mut out = m / m22;
        out[(2, 2)] = 1.0;
        return (out, false);
    }
    let norm = m.norm();
    let mut out = m / norm;
    // Fix the sign so the canonical form is unique.
    if let Some(first) = out.transpose().iter().find(|v| v.abs() > EPS_W) {
        if *first < 0.0 {
            out = -out;
        }
    }
    (out, true)
}

/// Translates and scales points so their centroid is at the origin and the
/// mean distance from it is sqrt(2).
fn conditioning(pts: &[Point; 4]) -> Matrix3<f64> {
    let cx = pts.iter().map(|p| p.x).sum::<f64>() / 4.0;
    let cy = pts.iter().map(|p| p.y).sum::<f64>() / 4.0;
    let mean = pts.iter().map(|p| (p.x - cx).hypot(p.y - cy)).sum::<f64>() / 4.0;
    let s = std::f64::consts::SQRT_2 / mean;
    Matrix3::new(s, 0.0, -s * cx, 0.0, s, -s * cy, 0.0, 0.0, 1.0)
}

fn apply(t: &Matrix3<f64>, p: Point) -> Point {
    let v = t * Vector3::new(p.x, p.y, 1.0);
    Point::new(v.x / v.z, v.y / v.z)
}

/// Exact four-point direct linear transform.
///
/// Each pair contributes the two rows
/// `[-x, -y, -1, 0, 0, 0, u x, u y, u]` and `[0, 0, 0, -x, -y, -1, v x, v y, v]`;
/// the matrix entries are the null vector of that 8x9 system, found by SVD
/// in conditioned coordinates.
pub fn estimate(c: &Correspondences) -> Result<Homography, HomographyError> {
    c.validate()?;
    let t_src = conditioning(&c.src);
    let t_dst = conditioning(&c.dst);

    let mut a = SMatrix::<f64, 9, 9>::zeros();
    for i in 0..4 {
        let s = apply(&t_src, c.src[i]);
        let d = apply(&t_dst, c.dst[i]);
        let (r0, r1) = (2 * i, 2 * i + 1);
        a[(r0, 0)] = -s.x;
        a[(r0, 1)] = -s.y;
        a[(r0, 2)] = -1.0;
        a[(r0, 6)] = d.x * s.x;
        a[(r0, 7)] = d.x * s.y;
        a[(r0, 8)] = d.x;
        a[(r1, 3)] = -s.x;
        a[(r1, 4)] = -s.y;
        a[(r1, 5)] = -1.0;
        a[(r1, 6)] = d.y * s.x;
        a[(r1, 7)] = d.y * s.y;
        a[(r1, 8)] = d.y;
    }

    let svd = a.svd(false, true);
    let v_t = svd.v_t.ok_or(HomographyError::Singular { det: 0.0 })?;
    let (min_idx, _) =
        svd.singular_values
            .iter()
            .enumerate()
            .fold(
                (0, f64::INFINITY),
                |acc, (i, &s)| if s < acc.1 { (i, s) } else { acc },
            );
    let h = v_t.row(min_idx);
    let hn = Matrix3::new(h[0], h[1], h[2], h[3], h[4], h[5], h[6], h[7], h[8]);

    let t_dst_inv = t_dst
        .try_inverse()
        .ok_or(HomographyError::Singular { det: 0.0 })?;
    let h = Homography::from_matrix(t_dst_inv * hn * t_src)?;
    Ok(match calibration_anchor(&h, &c.src) {
        Some(a) => h.with_anchor(a),
        None => h,
    })
}

/// Centroid of the calibration points when all four lie on one side of the
/// horizon; a quad folded across it gives no usable anchor.
pub(crate) fn calibration_anchor(h: &Homography, src: &[Point; 4]) -> Option<Point> {
    let sign = h.w(src[0]).signum();
    if !src
        .iter()
        .all(|&p| h.w(p).signum() == sign && h.w(p).abs() > EPS_W)
    {
        return None;
    }
    let cx = src.iter().map(|p| p.x).sum::<f64>() / 4.0;
    let cy = src.iter().map(|p| p.y).sum::<f64>() / 4.0;
    Some(Point::new(cx, cy))
}

/// Largest distance between `project(h, src[i])` and `dst[i]`.
pub fn residual(h: &Homography, c: &Correspondences) -> f64 {
    c.src
        .iter()
        .zip(c.dst.iter())
        .map(|(s, d)| h.project(*s).map_or(f64::INFINITY, |p| p.dist(*d)))
        .fold(0.0, f64::max)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Sampling {
    #[default]
    Nearest,
    Bilinear,
}

/// A raster that can be resampled through a homography.
pub trait Warpable: Sized {
    type Value: Copy;
    /// Whether values may be interpolated. Class ids may not.
    const BLENDABLE: bool;

    fn dims(&self) -> Dims;

    fn build(dims: Dims, data: Vec<Self::Value>) -> Self;

    fn nearest(&self, x: u32, y: u32) -> Self::Value;

    /// Bilinear sample at the continuous point `p`, already known to lie in
    /// bounds. `None` when `BLENDABLE` is false.
    fn bilinear(&self, p: Point) -> Option<Self::Value>;
}

impl Warpable for LabelImage {
    type Value = u8;
    const BLENDABLE: bool = false;

    fn dims(&self) -> Dims {
        Dims::new(self.width(), self.height())
    }

    fn build(dims: Dims, data: Vec<u8>) -> Self {
        LabelImage::new(dims.width, dims.height, data).expect("warp output sized to dims")
    }

    #[inline]
    fn nearest(&self, x: u32, y: u32) -> u8 {
        self.get(x, y)
    }

    fn bilinear(&self, _p: Point) -> Option<u8> {
        None
    }
}

impl Warpable for CostMap {
    type Value = f64;
    const BLENDABLE: bool = true;

    fn dims(&self) -> Dims {
        Dims::new(self.width(), self.height())
    }

    fn build(dims: Dims, data: Vec<f64>) -> Self {
        CostMap::from_parts(dims.width, dims.height, data, crate::raster::Space::Bev)
    }

    #[inline]
    fn nearest(&self, x: u32, y: u32) -> f64 {
        self.get(x, y)
    }

    fn bilinear(&self, p: Point) -> Option<f64> {
        let (w, h) = (self.width() as i64, self.height() as i64);
        let u = p.x - 0.5;
        let v = p.y - 0.5;
        let x0f = u.floor();
        let y0f = v.floor();
        let fx = u - x0f;
        let fy = v - y0f;
        let clamp = |i: i64, n: i64| i.clamp(0, n - 1) as u32;
        let x0 = clamp(x0f as i64, w);
        let x1 = clamp(x0f as i64 + 1, w);
        let y0 = clamp(y0f as i64, h);
        let y1 = clamp(y0f as i64 + 1, h);
        let top = self.get(x0, y0) * (1.0 - fx) + self.get(x1, y0) * fx;
        let bottom = self.get(x0, y1) * (1.0 - fx) + self.get(x1, y1) * fx;
        Some(top * (1.0 - fy) + bottom * fy)
    }
}

/// Pull-warps `src` into a `dims` canvas: each destination pixel center is
/// mapped through `h⁻¹` and sampled from `src`. Destination pixels whose
/// source falls outside `src`, or beyond the horizon line, get `fill`.
pub fn warp<R: Warpable>(
    src: &R,
    h: &Homography,
    dims: Dims,
    sampling: Sampling,
    fill: R::Value,
) -> Result<R, HomographyError> {
    let inv = h.invert()?;
    if sampling == Sampling::Bilinear && !R::BLENDABLE {
        return Err(HomographyError::BilinearLabels);
    }
    let sd = src.dims();
    let side = horizon_side(h, &inv, sd);
    let m = inv.rows();
    let (sw, sh) = (sd.width as f64, sd.height as f64);

    let mut data = Vec::with_capacity(dims.width as usize * dims.height as usize);
    for y in 0..dims.height {
        let py = y as f64 + 0.5;
        let bx = m[0][1] * py + m[0][2];
        let by = m[1][1] * py + m[1][2];
        let bw = m[2][1] * py + m[2][2];
        for x in 0..dims.width {
            let px = x as f64 + 0.5;
            let w = m[2][0] * px + bw;
            if w * side <= EPS_W || w.is_nan() {
                data.push(fill);
                continue;
            }
            let sx = (m[0][0] * px + bx) / w;
            let sy = (m[1][0] * px + by) / w;
            if !(sx >= 0.0 && sy >= 0.0 && sx < sw && sy < sh) {
                data.push(fill);
                continue;
            }
            let v = match sampling {
                Sampling::Nearest => src.nearest(sx as u32, sy as u32),
                Sampling::Bilinear => src
                    .bilinear(Point::new(sx, sy))
                    .ok_or(HomographyError::BilinearLabels)?,
            };
            data.push(v);
        }
    }
    Ok(R::build(dims, data))
}

/// Sign of `w` under `inv` for destination points on the observed side of
/// the horizon, taken at the image of `h`'s anchor, or of the source
/// raster's center when `h` has none.
fn horizon_side(h: &Homography, inv: &Homography, src: Dims) -> f64 {
    let center = Point::new(src.width as f64 / 2.0, src.height as f64 / 2.0);
    match h.project(h.anchor().unwrap_or(center)) {
        Ok(d) if inv.w(d) < 0.0 => -1.0,
        _ => 1.0,
    }
}

/// Label warp: nearest sampling, unobserved pixels get the out-of-view class.
pub fn warp_labels(
    src: &LabelImage,
    h: &Homography,
    dims: Dims,
) -> Result<LabelImage, HomographyError> {
    warp(src, h, dims, Sampling::Nearest, OUT_OF_VIEW_CLASS)
}

/// On-disk calibration: four correspondences, canvas size, optional cached
/// row-major matrix.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Calibration {
    pub src: [Point; 4],
    pub dst: [Point; 4],
    pub bev_width_mm: u32,
    pub bev_height_mm: u32,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub matrix: Option<[f64; 9]>,
}

impl Calibration {
    pub fn correspondences(&self) -> Result<Correspondences, HomographyError> {
        Correspondences::new(self.src, self.dst)
    }

    pub fn canvas(&self) -> Result<BevCanvas, HomographyError> {
        BevCanvas::new(self.bev_width_mm, self.bev_height_mm)
    }

    /// The cached matrix when present and consistent with the points,
    /// otherwise a fresh estimate.
    pub fn homography(&self) -> Result<Homography, HomographyError> {
        let c = self.correspondences()?;
        match self.matrix {
            Some(m) => {
                let h = Homography::from_row_major(m)?;
                let r = residual(&h, &c);
                if r > 1e-6 {
                    return Err(HomographyError::StaleCache { residual: r });
                }
                Ok(match calibration_anchor(&h, &c.src) {
                    Some(a) => h.with_anchor(a),
                    None => h,
                })
            }
            None => estimate(&c),
        }
    }
}

impl Default for Calibration {
    /// A 640x360 camera looking down a 2000x1900 mm floor patch. The bottom
    /// image edge sees a 400 mm wide strip at the near edge of the canvas;
    /// the top edge sees 3 m across at the far edge.
    fn default() -> Self {
        Self {
            src: [
                Point::new(0.0, 360.0),
                Point::new(640.0, 360.0),
                Point::new(640.0, 0.0),
                Point::new(0.0, 0.0),
            ],
            dst: [
                Point::new(800.0, 1900.0),
                Point::new(1200.0, 1900.0),
                Point::new(2500.0, 0.0),
                Point::new(-500.0, 0.0),
            ],
            bev_width_mm: 2000,
            bev_height_mm: 1900,
            matrix: None,
        }
    }
}
