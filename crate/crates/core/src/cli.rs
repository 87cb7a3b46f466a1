//! Command-line front end. Every command is a plain function so tests can
//! drive it without spawning a process.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};
use std::time::Instant;

use clap::{Parser, Subcommand};
use rayon::prelude::*;
use serde::Serialize;
use thiserror::Error;

use crate::costgrid::pool;
use crate::costmap::apply_costs;
use crate::eval::{compare_paths, emit_table, EvalRow, TableFormat};
use crate::format::{round_sig, to_json_pretty};
use crate::homography::{estimate, residual, Calibration, Dims, Point};
use crate::overlay::colorize_labels;
use crate::pipeline::{ConfigError, PipelineConfig, PipelineError};
use crate::planner::{dijkstra, GridPath, PlanProblem};
use crate::raster::Space;
use crate::raster::{
    load_color_image, load_label_image, save_color_image, save_label_image, RasterError,
};
use crate::scenegen::{fixture, generate_bev_labels, generate_perspective_view, SceneSpec};

#[derive(Debug, Error)]
pub enum CliError {
    #[error("config: {0}")]
    Config(#[from] ConfigError),
    #[error("usage: {0}")]
    Usage(String),
    #[error("{0}")]
    Pipeline(#[from] PipelineError),
    #[error("load: {0}")]
    Load(#[source] RasterError),
    #[error("write: {0}")]
    Write(String),
    #[error("eval: {0}")]
    Eval(String),
    #[error("gen: {0}")]
    Gen(String),
    #[error("calibrate: {0}")]
    Calibrate(String),
    #[error("batch: {failed} of {total} frames failed (see manifest)")]
    BatchFailures { failed: usize, total: usize },
}

impl CliError {
    /// 0 success, 1 processing error, 2 usage or configuration error.
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Config(_) | CliError::Usage(_) => 2,
            _ => 1,
        }
    }
}

#[derive(Debug, Parser)]
#[command(
    name = "bevnav",
    version,
    about = "Plan ground paths from segmented camera frames"
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Estimate the perspective-to-BEV homography and cache it.
    Calibrate {
        /// Calibration JSON with four src/dst point pairs.
        calibration: PathBuf,
        /// Where to write the calibration with its matrix and inverse.
        #[arg(long)]
        out: PathBuf,
    },
    /// Plan a path for one label image.
    Plan {
        /// Grayscale label PNG (one class id per pixel).
        #[arg(long)]
        labels: PathBuf,
        /// Pipeline configuration JSON.
        #[arg(long)]
        config: PathBuf,
        /// Where to write the path JSON.
        #[arg(long)]
        out: PathBuf,
        /// Write a perspective overlay PNG here.
        #[arg(long)]
        overlay: Option<PathBuf>,
        /// Color frame to draw the overlay on; label colors are used otherwise.
        #[arg(long)]
        color: Option<PathBuf>,
    },
    /// Compare planned paths against annotated label paths.
    Eval {
        /// Directory of planned path JSON files.
        #[arg(long)]
        results: PathBuf,
        /// Directory of annotated path JSON files with matching names.
        #[arg(long)]
        labels: PathBuf,
        /// Table format.
        #[arg(long, value_enum, default_value_t = TableFormat::Csv)]
        format: TableFormat,
        /// Also write the table to this file.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Plan every frame in a directory.
    Batch {
        /// Directory of NNNN.png label frames (and optional NNNN_rgb.png color frames).
        #[arg(long)]
        frames: PathBuf,
        /// Pipeline configuration JSON.
        #[arg(long)]
        config: PathBuf,
        /// Output directory for paths, overlays and manifest.json.
        #[arg(long)]
        out: PathBuf,
        /// Record per-frame wall time in the manifest (makes it nondeterministic).
        #[arg(long)]
        timings: bool,
        /// Skip overlay rendering.
        #[arg(long)]
        no_overlay: bool,
    },
    /// Generate a synthetic scene and its ground-truth path.
    Gen {
        /// SceneSpec JSON. Mutually exclusive with --fixture.
        scene: Option<PathBuf>,
        /// Built-in scene: no-obstacle, one-obstacle, blocked-row or narrow-gap.
        #[arg(long)]
        fixture: Option<String>,
        /// Pipeline configuration JSON; built-in defaults otherwise.
        #[arg(long)]
        config: Option<PathBuf>,
        /// Output directory.
        #[arg(long)]
        out: PathBuf,
        /// Perspective frame width in pixels.
        #[arg(long, default_value_t = 640)]
        width: u32,
        /// Perspective frame height in pixels.
        #[arg(long, default_value_t = 360)]
        height: u32,
    },
}

pub fn run(cli: Cli) -> Result<String, CliError> {
    match cli.command {
        Command::Calibrate { calibration, out } => {
            cmd_calibrate(&calibration, &out).map(|_| String::new())
        }
        Command::Plan {
            labels,
            config,
            out,
            overlay,
            color,
        } => {
            let cfg = PipelineConfig::load(&config)?;
            cmd_plan(&labels, &cfg, &out, overlay.as_deref(), color.as_deref())
                .map(|_| String::new())
        }
        Command::Eval {
            results,
            labels,
            format,
            out,
        } => {
            let table = cmd_eval(&results, &labels, format)?;
            if let Some(out) = out {
                write_text(&out, &table)?;
            }
            Ok(table)
        }
        Command::Batch {
            frames,
            config,
            out,
            timings,
            no_overlay,
        } => {
            let cfg = PipelineConfig::load(&config)?;
            let opts = BatchOptions {
                timings,
                overlays: !no_overlay,
            };
            let manifest = cmd_batch(&frames, &cfg, &out, opts)?;
            if manifest.failed > 0 {
                return Err(CliError::BatchFailures {
                    failed: manifest.failed,
                    total: manifest.frames.len(),
                });
            }
            Ok(String::new())
        }
        Command::Gen {
            scene,
            fixture: name,
            config,
            out,
            width,
            height,
        } => {
            let spec = match (scene, name) {
                (Some(path), None) => {
                    let text = fs::read_to_string(&path)
                        .map_err(|e| CliError::Usage(format!("{}: {e}", path.display())))?;
                    serde_json::from_str(&text)
                        .map_err(|e| CliError::Usage(format!("{}: {e}", path.display())))?
                }
                (None, Some(name)) => fixture(&name).map_err(|e| CliError::Usage(e.to_string()))?,
                _ => {
                    return Err(CliError::Usage(
                        "give exactly one of a scene file or --fixture".into(),
                    ))
                }
            };
            let cfg = match config {
                Some(p) => PipelineConfig::load(p)?,
                None => PipelineConfig::default(),
            };
            cmd_gen(&spec, &cfg, &out, Dims::new(width, height)).map(|_| String::new())
        }
    }
}

fn write_text(path: &Path, text: &str) -> Result<(), CliError> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir).map_err(|e| CliError::Write(format!("{}: {e}", dir.display())))?;
    }
    fs::write(path, text).map_err(|e| CliError::Write(format!("{}: {e}", path.display())))
}

fn to_json<T: Serialize>(value: &T) -> String {
    to_json_pretty(value).expect("in-memory JSON serialization")
}

/// Calibration plus the estimated matrix and its inverse, row-major.
#[derive(Debug, Serialize)]
pub struct HomographyCache {
    pub src: [Point; 4],
    pub dst: [Point; 4],
    pub bev_width_mm: u32,
    pub bev_height_mm: u32,
    pub matrix: [f64; 9],
    pub inverse: [f64; 9],
}

pub fn cmd_calibrate(calibration: &Path, out: &Path) -> Result<HomographyCache, CliError> {
    let text = fs::read_to_string(calibration)
        .map_err(|e| CliError::Usage(format!("{}: {e}", calibration.display())))?;
    let cal: Calibration = serde_json::from_str(&text)
        .map_err(|e| CliError::Usage(format!("{}: {e}", calibration.display())))?;
    let c = cal
        .correspondences()
        .map_err(|e| CliError::Calibrate(e.to_string()))?;
    cal.canvas()
        .map_err(|e| CliError::Calibrate(e.to_string()))?;
    let h = estimate(&c).map_err(|e| CliError::Calibrate(e.to_string()))?;
    debug_assert!(residual(&h, &c) <= 1e-6);
    let inv = h.invert().map_err(|e| CliError::Calibrate(e.to_string()))?;
    let cache = HomographyCache {
        src: cal.src,
        dst: cal.dst,
        bev_width_mm: cal.bev_width_mm,
        bev_height_mm: cal.bev_height_mm,
        matrix: h.to_row_major(),
        inverse: inv.to_row_major(),
    };
    write_text(out, &to_json(&cache))?;
    Ok(cache)
}

pub fn cmd_plan(
    labels: &Path,
    cfg: &PipelineConfig,
    out: &Path,
    overlay: Option<&Path>,
    color: Option<&Path>,
) -> Result<GridPath, CliError> {
    let img = load_label_image(labels).map_err(CliError::Load)?;
    let frame = color
        .map(|p| load_color_image(p).map_err(CliError::Load))
        .transpose()?;
    let result = cfg.plan_labels(&img)?;
    // Render before writing anything so a failure leaves no partial output.
    let rendered = match overlay {
        Some(_) => Some(match &frame {
            Some(f) => cfg.render_checked(f, &img, &result.path)?,
            None => cfg.render(&colorize_labels(&img), &result.path)?,
        }),
        None => None,
    };
    write_text(out, &to_json(&result.path))?;
    if let (Some(path), Some(img)) = (overlay, rendered) {
        save_color_image(&img, path).map_err(|e| CliError::Write(e.to_string()))?;
    }
    Ok(result.path)
}

fn json_stems(dir: &Path) -> Result<BTreeMap<String, PathBuf>, CliError> {
    let entries =
        fs::read_dir(dir).map_err(|e| CliError::Eval(format!("{}: {e}", dir.display())))?;
    let mut out = BTreeMap::new();
    for entry in entries {
        let path = entry
            .map_err(|e| CliError::Eval(format!("{}: {e}", dir.display())))?
            .path();
        if path.extension().is_some_and(|e| e == "json") {
            if let Some(stem) = path.file_stem().and_then(|s| s.to_str()) {
                out.insert(stem.to_string(), path);
            }
        }
    }
    Ok(out)
}

/// Reads a path document plus its optional display name (`"scene"`).
pub fn read_path_file(path: &Path) -> Result<(GridPath, Option<String>), CliError> {
    let text =
        fs::read_to_string(path).map_err(|e| CliError::Eval(format!("{}: {e}", path.display())))?;
    let value: serde_json::Value = serde_json::from_str(&text)
        .map_err(|e| CliError::Eval(format!("{}: {e}", path.display())))?;
    let scene = value
        .get("scene")
        .and_then(|s| s.as_str())
        .map(str::to_string);
    let grid_path = serde_json::from_value(value)
        .map_err(|e| CliError::Eval(format!("{}: {e}", path.display())))?;
    Ok((grid_path, scene))
}

/// Pairs `<name>.json` across the two directories, ordered by file name.
/// The scene column is the label file's `"scene"` field, or the file stem
/// with underscores turned into spaces.
pub fn eval_dirs(results: &Path, labels: &Path) -> Result<Vec<EvalRow>, CliError> {
    let res = json_stems(results)?;
    let lab = json_stems(labels)?;
    let unpaired: Vec<&str> = res
        .keys()
        .filter(|k| !lab.contains_key(*k))
        .chain(lab.keys().filter(|k| !res.contains_key(*k)))
        .map(String::as_str)
        .collect();
    if !unpaired.is_empty() {
        return Err(CliError::Eval(format!(
            "unpaired scenes: {}",
            unpaired.join(", ")
        )));
    }
    let mut rows = Vec::with_capacity(res.len());
    for (stem, result_path) in &res {
        let (result, _) = read_path_file(result_path)?;
        let (label, scene) = read_path_file(&lab[stem])?;
        let row =
            compare_paths(&result, &label).map_err(|e| CliError::Eval(format!("{stem}: {e}")))?;
        rows.push(row.with_scene(scene.unwrap_or_else(|| stem.replace('_', " "))));
    }
    Ok(rows)
}

pub fn cmd_eval(results: &Path, labels: &Path, format: TableFormat) -> Result<String, CliError> {
    Ok(emit_table(&eval_dirs(results, labels)?, format))
}

#[derive(Debug, Clone, Copy, Default)]
pub struct BatchOptions {
    pub timings: bool,
    pub overlays: bool,
}

#[derive(Debug, Clone, Serialize)]
pub struct FrameRecord {
    pub frame: String,
    pub status: &'static str,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub path_file: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub overlay_file: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none", serialize_with = "opt_sig")]
    pub total_cost: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub steps: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub expanded: Option<u64>,
    #[serde(skip_serializing_if = "Option::is_none", serialize_with = "opt_sig")]
    pub wall_ms: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
}

fn opt_sig<S: serde::Serializer>(v: &Option<f64>, s: S) -> Result<S::Ok, S::Error> {
    match v {
        Some(x) => round_sig(x, s),
        None => s.serialize_none(),
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct Manifest {
    pub frames: Vec<FrameRecord>,
    pub ok: usize,
    pub failed: usize,
}

/// Label frames are `<name>.png`; an optional `<name>_rgb.png` next to one
/// is its color frame. Frames are processed in lexicographic order.
pub fn list_frames(dir: &Path) -> Result<Vec<String>, CliError> {
    let entries =
        fs::read_dir(dir).map_err(|e| CliError::Usage(format!("{}: {e}", dir.display())))?;
    let mut names = Vec::new();
    for entry in entries {
        let path = entry
            .map_err(|e| CliError::Usage(format!("{}: {e}", dir.display())))?
            .path();
        let Some(name) = path.file_name().and_then(|n| n.to_str()) else {
            continue;
        };
        if let Some(stem) = name.strip_suffix(".png") {
            if !stem.ends_with("_rgb") {
                names.push(stem.to_string());
            }
        }
    }
    names.sort();
    Ok(names)
}

fn process_frame(
    frames: &Path,
    name: &str,
    cfg: &PipelineConfig,
    out: &Path,
    opts: BatchOptions,
) -> FrameRecord {
    let started = Instant::now();
    let mut record = FrameRecord {
        frame: name.to_string(),
        status: "ok",
        path_file: None,
        overlay_file: None,
        total_cost: None,
        steps: None,
        expanded: None,
        wall_ms: None,
        error: None,
    };
    let outcome = (|| -> Result<(), CliError> {
        let labels =
            load_label_image(frames.join(format!("{name}.png"))).map_err(CliError::Load)?;
        let result = cfg.plan_labels(&labels)?;
        let path_file = format!("{name}.json");
        write_text(&out.join(&path_file), &to_json(&result.path))?;
        record.path_file = Some(path_file);
        record.total_cost = Some(result.path.total_cost);
        record.steps = Some(result.path.steps());
        record.expanded = Some(result.path.expanded);
        if opts.overlays {
            let color_path = frames.join(format!("{name}_rgb.png"));
            let img = if color_path.exists() {
                let frame = load_color_image(&color_path).map_err(CliError::Load)?;
                cfg.render_checked(&frame, &labels, &result.path)?
            } else {
                cfg.render(&colorize_labels(&labels), &result.path)?
            };
            let overlay_file = format!("{name}_overlay.png");
            save_color_image(&img, out.join(&overlay_file))
                .map_err(|e| CliError::Write(e.to_string()))?;
            record.overlay_file = Some(overlay_file);
        }
        Ok(())
    })();
    if let Err(e) = outcome {
        record.status = "error";
        record.error = Some(e.to_string());
    }
    if opts.timings {
        record.wall_ms = Some(started.elapsed().as_secs_f64() * 1e3);
    }
    record
}

/// Plans every frame; per-frame failures are recorded and do not stop the run.
pub fn cmd_batch(
    frames: &Path,
    cfg: &PipelineConfig,
    out: &Path,
    opts: BatchOptions,
) -> Result<Manifest, CliError> {
    let names = list_frames(frames)?;
    fs::create_dir_all(out).map_err(|e| CliError::Write(format!("{}: {e}", out.display())))?;
    let records: Vec<FrameRecord> = names
        .par_iter()
        .map(|name| process_frame(frames, name, cfg, out, opts))
        .collect();
    let failed = records.iter().filter(|r| r.status != "ok").count();
    let manifest = Manifest {
        ok: records.len() - failed,
        failed,
        frames: records,
    };
    write_text(&out.join("manifest.json"), &to_json(&manifest))?;
    Ok(manifest)
}

/// Writes `bev_labels.png`, `perspective.png` and `ground_truth.json`.
/// The ground truth is the Dijkstra path over the BEV labels' cost grid.
pub fn cmd_gen(
    spec: &SceneSpec,
    cfg: &PipelineConfig,
    out: &Path,
    persp: Dims,
) -> Result<GridPath, CliError> {
    let bev = generate_bev_labels(spec, &cfg.canvas).map_err(|e| CliError::Gen(e.to_string()))?;
    // The full camera frame, so a configured crop applies to it like to a real frame.
    let h = cfg
        .frame_homography()
        .map_err(|e| CliError::Gen(e.to_string()))?;
    let view =
        generate_perspective_view(&bev, &h, persp).map_err(|e| CliError::Gen(e.to_string()))?;
    let costs = apply_costs(&bev, &cfg.costs, Space::Bev);
    let grid = pool(&costs, &cfg.grid).map_err(|e| CliError::Gen(e.to_string()))?;
    let problem = PlanProblem::new(grid)
        .with_start(cfg.start)
        .with_goal(cfg.goal);
    let truth = dijkstra(&problem).map_err(|e| CliError::Gen(e.to_string()))?;

    fs::create_dir_all(out).map_err(|e| CliError::Write(format!("{}: {e}", out.display())))?;
    save_label_image(&bev, out.join("bev_labels.png"))
        .map_err(|e| CliError::Write(e.to_string()))?;
    save_label_image(&view, out.join("perspective.png"))
        .map_err(|e| CliError::Write(e.to_string()))?;
    write_text(&out.join("ground_truth.json"), &to_json(&truth))?;
    Ok(truth)
}
