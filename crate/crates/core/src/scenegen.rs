//! Synthetic labeled scenes with known geometry.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::costmap::{CARPET, HARDWOOD, OBSTACLE};
use crate::homography::{warp_labels, BevCanvas, Dims, Homography, HomographyError};
use crate::raster::{LabelImage, OUT_OF_VIEW_CLASS};

#[derive(Debug, Error, PartialEq)]
pub enum SceneError {
    #[error("{what} rectangle {rect:?} does not fit the {width}x{height} mm canvas")]
    OutOfCanvas {
        what: &'static str,
        rect: SceneRect,
        width: u32,
        height: u32,
    },
    #[error("random obstacle size range {min_mm}..={max_mm} mm is empty or exceeds the canvas")]
    BadRandomRange { min_mm: u32, max_mm: u32 },
    #[error("class {0} is reserved for out-of-view pixels")]
    ReservedClass(u8),
    #[error("unknown fixture {0:?}")]
    UnknownFixture(String),
    #[error(transparent)]
    Homography(#[from] HomographyError),
}

/// Axis-aligned rectangle in BEV millimeters, painted with `class`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct SceneRect {
    pub x: u32,
    pub y: u32,
    pub width: u32,
    pub height: u32,
    pub class: u8,
}

impl SceneRect {
    pub const fn new(x: u32, y: u32, width: u32, height: u32, class: u8) -> Self {
        Self {
            x,
            y,
            width,
            height,
            class,
        }
    }

    fn check(&self, what: &'static str, canvas: &BevCanvas) -> Result<(), SceneError> {
        if self.class == OUT_OF_VIEW_CLASS {
            return Err(SceneError::ReservedClass(self.class));
        }
        let fits = self.x as u64 + self.width as u64 <= canvas.width_mm as u64
            && self.y as u64 + self.height as u64 <= canvas.height_mm as u64;
        if !fits {
            return Err(SceneError::OutOfCanvas {
                what,
                rect: *self,
                width: canvas.width_mm,
                height: canvas.height_mm,
            });
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct RandomObstacles {
    pub count: u32,
    pub min_mm: u32,
    pub max_mm: u32,
    #[serde(default = "obstacle_class")]
    pub class: u8,
}

fn obstacle_class() -> u8 {
    OBSTACLE
}

fn carpet_class() -> u8 {
    CARPET
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SceneSpec {
    #[serde(default = "carpet_class")]
    pub floor_class: u8,
    #[serde(default)]
    pub secondary_floor: Option<SceneRect>,
    #[serde(default)]
    pub obstacles: Vec<SceneRect>,
    /// Extra obstacles placed by a seeded RNG after the explicit ones.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub random_obstacles: Option<RandomObstacles>,
    #[serde(default)]
    pub seed: u64,
}

impl Default for SceneSpec {
    fn default() -> Self {
        Self {
            floor_class: CARPET,
            secondary_floor: None,
            obstacles: Vec::new(),
            random_obstacles: None,
            seed: 0,
        }
    }
}

impl SceneSpec {
    /// Every rectangle this spec paints, in painting order after the floor.
    pub fn rectangles(&self, canvas: &BevCanvas) -> Result<Vec<SceneRect>, SceneError> {
        if self.floor_class == OUT_OF_VIEW_CLASS {
            return Err(SceneError::ReservedClass(self.floor_class));
        }
        let mut rects = Vec::new();
        if let Some(floor) = self.secondary_floor {
            floor.check("secondary floor", canvas)?;
            rects.push(floor);
        }
        for r in &self.obstacles {
            r.check("obstacle", canvas)?;
            rects.push(*r);
        }
        if let Some(rand) = self.random_obstacles {
            let limit = canvas.width_mm.min(canvas.height_mm);
            if rand.min_mm == 0 || rand.min_mm > rand.max_mm || rand.max_mm > limit {
                return Err(SceneError::BadRandomRange {
                    min_mm: rand.min_mm,
                    max_mm: rand.max_mm,
                });
            }
            if rand.class == OUT_OF_VIEW_CLASS {
                return Err(SceneError::ReservedClass(rand.class));
            }
            let mut rng = ChaCha8Rng::seed_from_u64(self.seed);
            for _ in 0..rand.count {
                let width = rng.random_range(rand.min_mm..=rand.max_mm);
                let height = rng.random_range(rand.min_mm..=rand.max_mm);
                let x = rng.random_range(0..=canvas.width_mm - width);
                let y = rng.random_range(0..=canvas.height_mm - height);
                rects.push(SceneRect::new(x, y, width, height, rand.class));
            }
        }
        Ok(rects)
    }
}

/// Paints floor, then the secondary floor, then obstacles at 1 px/mm.
pub fn generate_bev_labels(spec: &SceneSpec, canvas: &BevCanvas) -> Result<LabelImage, SceneError> {
    let rects = spec.rectangles(canvas)?;
    let dims = canvas.dims();
    let mut img = LabelImage::filled(dims.width, dims.height, spec.floor_class);
    let width = dims.width as usize;
    let data = img.data_mut();
    for r in rects {
        for y in r.y..r.y + r.height {
            let start = y as usize * width + r.x as usize;
            data[start..start + r.width as usize].fill(r.class);
        }
    }
    Ok(img)
}

/// Renders BEV labels as the camera would see them: warp through `h⁻¹`.
pub fn generate_perspective_view(
    bev_labels: &LabelImage,
    h: &Homography,
    persp: Dims,
) -> Result<LabelImage, SceneError> {
    Ok(warp_labels(bev_labels, &h.invert()?, persp)?)
}

pub const FIXTURES: [&str; 4] = ["no-obstacle", "one-obstacle", "blocked-row", "narrow-gap"];

/// Column of the single free cell in the `narrow-gap` fixture.
pub const GAP_COL: u32 = 14;
/// Grid row blocked in `blocked-row` and `narrow-gap`.
pub const BLOCKED_ROW: u32 = 9;

/// Regression scenes laid out for the default 2000x1900 mm canvas with
/// 100 mm cells.
pub fn fixture(name: &str) -> Result<SceneSpec, SceneError> {
    let band_y = BLOCKED_ROW * 100;
    let obstacles = match name {
        "no-obstacle" => vec![],
        "one-obstacle" => vec![SceneRect::new(900, 800, 300, 300, OBSTACLE)],
        "blocked-row" => vec![SceneRect::new(0, band_y, 2000, 100, OBSTACLE)],
        "narrow-gap" => vec![
            SceneRect::new(0, band_y, GAP_COL * 100, 100, OBSTACLE),
            SceneRect::new(
                (GAP_COL + 1) * 100,
                band_y,
                2000 - (GAP_COL + 1) * 100,
                100,
                OBSTACLE,
            ),
        ],
        other => return Err(SceneError::UnknownFixture(other.to_string())),
    };
    Ok(SceneSpec {
        floor_class: CARPET,
        secondary_floor: match name {
            "one-obstacle" => Some(SceneRect::new(0, 0, 500, 1900, HARDWOOD)),
            _ => None,
        },
        obstacles,
        random_obstacles: None,
        seed: 0,
    })
}
