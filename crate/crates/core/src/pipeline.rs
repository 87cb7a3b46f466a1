//! Pipeline configuration and the per-frame crop -> warp -> cost -> pool ->
//! plan chain.

use std::fs;
use std::path::{Path, PathBuf};

use image::RgbImage;
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::costgrid::{pool, CostGrid, GridError, GridSpec};
use crate::costmap::{apply_costs, CostConfig};
use crate::homography::{
    warp, warp_labels, BevCanvas, Calibration, Homography, HomographyError, Sampling,
};
use crate::overlay::{render_overlay, OverlayStyle};
use crate::planner::{astar, default_goal, default_start, Cell, GridPath, PlanError, PlanProblem};
use crate::raster::{crop, CostMap, CropRect, LabelImage, RasterError, Space};

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("cannot read {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("invalid JSON in {path}: {source}")]
    Json {
        path: String,
        #[source]
        source: serde_json::Error,
    },
    #[error("calibration: {0}")]
    Calibration(#[from] HomographyError),
    #[error("grid: {0}")]
    Grid(#[from] GridError),
    #[error("{0}")]
    Endpoints(#[from] PlanError),
}

/// A failure inside one pipeline stage; the message names the stage.
#[derive(Debug, Error)]
pub enum PipelineError {
    #[error("crop: {0}")]
    Crop(#[source] RasterError),
    #[error("warp: {0}")]
    Warp(#[source] HomographyError),
    #[error("pool: {0}")]
    Pool(#[source] GridError),
    #[error("plan: {0}")]
    Plan(#[source] PlanError),
    #[error("overlay: {0}")]
    Overlay(#[source] OverlayError),
}

#[derive(Debug, Error)]
pub enum OverlayError {
    #[error(transparent)]
    Homography(#[from] HomographyError),
    #[error("color frame is {frame_w}x{frame_h} but labels are {label_w}x{label_h}")]
    SizeMismatch {
        frame_w: u32,
        frame_h: u32,
        label_w: u32,
        label_h: u32,
    },
}

/// Either a path to a JSON file or the object inline.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(untagged)]
pub enum Source<T> {
    Path(PathBuf),
    Inline(T),
}

/// Pipeline configuration as written on disk.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PipelineConfigFile {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub crop: Option<CropRect>,
    pub calibration: Source<Calibration>,
    pub cost_config: Source<CostConfig>,
    #[serde(default)]
    pub grid: GridSpec,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub start: Option<Cell>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub goal: Option<Cell>,
    #[serde(default)]
    pub sampling: Sampling,
    #[serde(default)]
    pub overlay: OverlayStyle,
}

/// Fully resolved, validated configuration.
#[derive(Debug, Clone)]
pub struct PipelineConfig {
    pub crop: Option<CropRect>,
    pub calibration: Calibration,
    pub homography: Homography,
    pub canvas: BevCanvas,
    pub costs: CostConfig,
    pub grid: GridSpec,
    pub start: Cell,
    pub goal: Cell,
    pub sampling: Sampling,
    pub style: OverlayStyle,
}

fn read_json<T: DeserializeOwned>(path: &Path) -> Result<T, ConfigError> {
    let text = fs::read_to_string(path).map_err(|source| ConfigError::Io {
        path: path.display().to_string(),
        source,
    })?;
    serde_json::from_str(&text).map_err(|source| ConfigError::Json {
        path: path.display().to_string(),
        source,
    })
}

fn resolve<T: DeserializeOwned>(src: Source<T>, base: &Path) -> Result<T, ConfigError> {
    match src {
        Source::Inline(v) => Ok(v),
        Source::Path(p) if p.is_absolute() => read_json(&p),
        Source::Path(p) => read_json(&base.join(p)),
    }
}

impl Default for PipelineConfig {
    fn default() -> Self {
        let file = PipelineConfigFile {
            crop: None,
            calibration: Source::Inline(Calibration::default()),
            cost_config: Source::Inline(CostConfig::default()),
            grid: GridSpec::default(),
            start: None,
            goal: None,
            sampling: Sampling::Nearest,
            overlay: OverlayStyle::default(),
        };
        Self::resolve(file, Path::new(".")).expect("built-in defaults are consistent")
    }
}

impl PipelineConfig {
    pub fn load(path: impl AsRef<Path>) -> Result<Self, ConfigError> {
        let path = path.as_ref();
        let file: PipelineConfigFile = read_json(path)?;
        let base = path.parent().unwrap_or(Path::new("."));
        Self::resolve(file, base)
    }

    /// Resolves file references relative to `base` and validates.
    pub fn resolve(file: PipelineConfigFile, base: &Path) -> Result<Self, ConfigError> {
        let calibration: Calibration = resolve(file.calibration, base)?;
        let costs: CostConfig = resolve(file.cost_config, base)?;
        let homography = calibration.homography()?;
        let canvas = calibration.canvas()?;
        let dims = canvas.dims();
        file.grid.check_fits(dims.width, dims.height)?;
        let cfg = Self {
            crop: file.crop,
            homography,
            canvas,
            costs,
            start: file.start.unwrap_or_else(|| default_start(&file.grid)),
            goal: file.goal.unwrap_or_else(|| default_goal(&file.grid)),
            grid: file.grid,
            sampling: file.sampling,
            style: file.overlay,
            calibration,
        };
        let probe = CostGrid::uniform(cfg.grid, 1.0)?;
        PlanProblem::new(probe)
            .with_start(cfg.start)
            .with_goal(cfg.goal)
            .check_bounds()?;
        Ok(cfg)
    }

    /// Perspective -> BEV transform for the uncropped frame.
    pub fn frame_homography(&self) -> Result<Homography, HomographyError> {
        match self.crop {
            None => Ok(self.homography),
            Some(rect) => {
                let shift = Homography::from_row_major([
                    1.0,
                    0.0,
                    -(rect.x as f64),
                    0.0,
                    1.0,
                    -(rect.y as f64),
                    0.0,
                    0.0,
                    1.0,
                ])?;
                self.homography.compose(&shift)
            }
        }
    }

    /// Runs every stage on one segmented frame.
    pub fn plan_labels(&self, labels: &LabelImage) -> Result<FrameOutput, PipelineError> {
        let cropped;
        let labels = match self.crop {
            Some(rect) => {
                cropped = crop(labels, rect).map_err(PipelineError::Crop)?;
                &cropped
            }
            None => labels,
        };
        let dims = self.canvas.dims();
        let bev_costs = match self.sampling {
            Sampling::Nearest => {
                let bev =
                    warp_labels(labels, &self.homography, dims).map_err(PipelineError::Warp)?;
                apply_costs(&bev, &self.costs, Space::Bev)
            }
            Sampling::Bilinear => {
                let persp = apply_costs(labels, &self.costs, Space::Perspective);
                warp(
                    &persp,
                    &self.homography,
                    dims,
                    Sampling::Bilinear,
                    self.costs.out_of_view_cost(),
                )
                .map_err(PipelineError::Warp)?
                .with_space(Space::Bev)
            }
        };
        let grid = pool(&bev_costs, &self.grid).map_err(PipelineError::Pool)?;
        let path = self.plan_grid(grid.clone())?;
        Ok(FrameOutput {
            bev_costs,
            grid,
            path,
        })
    }

    pub fn plan_grid(&self, grid: CostGrid) -> Result<GridPath, PipelineError> {
        let problem = PlanProblem::new(grid)
            .with_start(self.start)
            .with_goal(self.goal);
        astar(&problem).map_err(PipelineError::Plan)
    }

    /// Draws `path` onto the uncropped color frame.
    pub fn render(&self, frame: &RgbImage, path: &GridPath) -> Result<RgbImage, PipelineError> {
        let h = self
            .frame_homography()
            .map_err(|e| PipelineError::Overlay(e.into()))?;
        render_overlay(frame, path, &self.grid, &h, &self.style)
            .map_err(|e| PipelineError::Overlay(e.into()))
    }

    pub fn render_checked(
        &self,
        frame: &RgbImage,
        labels: &LabelImage,
        path: &GridPath,
    ) -> Result<RgbImage, PipelineError> {
        if frame.dimensions() != (labels.width(), labels.height()) {
            return Err(PipelineError::Overlay(OverlayError::SizeMismatch {
                frame_w: frame.width(),
                frame_h: frame.height(),
                label_w: labels.width(),
                label_h: labels.height(),
            }));
        }
        self.render(frame, path)
    }
}

#[derive(Debug, Clone)]
pub struct FrameOutput {
    pub bev_costs: CostMap,
    pub grid: CostGrid,
    pub path: GridPath,
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::costmap::OBSTACLE;
    use crate::homography::{Dims, Point};
    use crate::scenegen::{fixture, generate_bev_labels, generate_perspective_view};

    #[test]
    fn default_config_plans_straight_on_empty_floor() {
        let cfg = PipelineConfig::default();
        let bev = generate_bev_labels(&fixture("no-obstacle").unwrap(), &cfg.canvas).unwrap();
        let persp = generate_perspective_view(&bev, &cfg.homography, Dims::new(640, 360)).unwrap();
        let out = cfg.plan_labels(&persp).unwrap();
        assert_eq!(out.path.steps(), 18);
        assert!(out.path.cells.iter().all(|c| c.col == 10));
    }

    #[test]
    fn bilinear_order_runs() {
        let cfg = PipelineConfig {
            sampling: Sampling::Bilinear,
            ..PipelineConfig::default()
        };
        let persp = LabelImage::filled(640, 360, 0);
        let out = cfg.plan_labels(&persp).unwrap();
        assert_eq!(out.path.steps(), 18);
        assert_eq!(out.bev_costs.space(), Space::Bev);
    }

    #[test]
    fn crop_out_of_bounds_is_stage_tagged() {
        let cfg = PipelineConfig {
            crop: Some(CropRect::new(600, 0, 100, 10)),
            ..PipelineConfig::default()
        };
        let err = cfg
            .plan_labels(&LabelImage::filled(640, 360, 0))
            .unwrap_err();
        assert!(err.to_string().starts_with("crop: "), "{err}");
    }

    #[test]
    fn crop_shifts_overlay_homography() {
        let cfg = PipelineConfig {
            crop: Some(CropRect::new(10, 20, 640, 360)),
            ..PipelineConfig::default()
        };
        let h = cfg.frame_homography().unwrap();
        let a = h.project(Point::new(110.0, 220.0)).unwrap();
        let b = cfg.homography.project(Point::new(100.0, 200.0)).unwrap();
        assert!(a.dist(b) < 1e-9);
    }

    #[test]
    fn config_file_resolves_relative_paths() {
        let dir = tempfile::tempdir().unwrap();
        fs::write(
            dir.path().join("cal.json"),
            serde_json::to_string(&Calibration::default()).unwrap(),
        )
        .unwrap();
        let costs = CostConfig::default()
            .with_class_cost(OBSTACLE, "obstacle", 100.0)
            .unwrap();
        fs::write(
            dir.path().join("costs.json"),
            serde_json::to_string(&costs).unwrap(),
        )
        .unwrap();
        fs::write(
            dir.path().join("pipeline.json"),
            r#"{"calibration": "cal.json", "cost_config": "costs.json", "grid": {"rows": 19, "cols": 20, "cell_mm": 100}, "start": [18, 9]}"#,
        )
        .unwrap();
        let cfg = PipelineConfig::load(dir.path().join("pipeline.json")).unwrap();
        assert_eq!(cfg.costs.cost_of(OBSTACLE), 100.0);
        assert_eq!(cfg.start, Cell::new(18, 9));
        assert_eq!(cfg.goal, Cell::new(0, 10));
    }

    #[test]
    fn config_errors() {
        assert!(matches!(
            PipelineConfig::load("/does/not/exist.json"),
            Err(ConfigError::Io { .. })
        ));
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("p.json");
        let cal = serde_json::to_string(&Calibration::default()).unwrap();
        let costs = serde_json::to_string(&CostConfig::default()).unwrap();
        fs::write(&p, format!(r#"{{"calibration": {cal}, "cost_config": {costs}, "grid": {{"rows": 20, "cols": 20, "cell_mm": 100}}}}"#)).unwrap();
        assert!(matches!(
            PipelineConfig::load(&p),
            Err(ConfigError::Grid(_))
        ));
        fs::write(
            &p,
            format!(r#"{{"calibration": {cal}, "cost_config": {costs}, "goal": [0, 20]}}"#),
        )
        .unwrap();
        assert!(matches!(
            PipelineConfig::load(&p),
            Err(ConfigError::Endpoints(_))
        ));
        fs::write(
            &p,
            format!(r#"{{"calibration": {cal}, "cost_config": {costs}, "bogus": 1}}"#),
        )
        .unwrap();
        assert!(matches!(
            PipelineConfig::load(&p),
            Err(ConfigError::Json { .. })
        ));
    }
}
