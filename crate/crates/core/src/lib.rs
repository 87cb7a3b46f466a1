//! Ground-plane path planning from semantically segmented camera frames.
//!
//! A frame's label image is cropped, warped into a metric birds-eye view
//! (1 px = 1 mm), priced per pixel by class, mean-pooled into a coarse cost
//! grid and searched with A*. The resulting path can be drawn back onto the
//! camera frame and scored against hand-annotated paths.

pub mod cli;
pub mod costgrid;
pub mod costmap;
pub mod eval;
pub mod format;
pub mod homography;
pub mod overlay;
pub mod pipeline;
pub mod planner;
pub mod raster;
pub mod scenegen;

pub use costgrid::{pool, CostGrid, GridSpec};
pub use costmap::{apply_costs, CostConfig};
pub use eval::{compare_paths, emit_table, EvalRow, TableFormat};
pub use homography::{
    estimate, warp, BevCanvas, Calibration, Correspondences, Homography, Point, Sampling,
};
pub use pipeline::{PipelineConfig, PipelineError};
pub use planner::{astar, dijkstra, path_step_count, Cell, GridPath, PlanProblem};
pub use raster::{crop, CostMap, CropRect, LabelImage};
