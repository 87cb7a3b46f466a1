//! C ABI for the bevnav planner.
//!
//! Conventions:
//! - Every fallible function returns a [`BevnavStatus`]; `BEVNAV_STATUS_OK`
//!   is zero. On failure `bevnav_last_error()` describes the problem.
//! - Objects are opaque handles created by `*_new`/`*_load`/`*_estimate`
//!   style functions and released with the matching `*_free`. Passing NULL
//!   to a `*_free` function is a no-op.
//! - Strings returned to the caller are owned by the caller and must be
//!   released with `bevnav_string_free`.
//! - Panics never cross the boundary; they surface as `BEVNAV_STATUS_PANIC`.

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::Path;
use std::ptr;

use bevnav::costgrid::{CostGrid, GridSpec};
use bevnav::eval::compare_paths;
use bevnav::format::to_json_pretty;
use bevnav::homography::{estimate, Correspondences, Homography, Point};
use bevnav::pipeline::PipelineConfig;
use bevnav::planner::{astar, dijkstra, Cell, GridPath, PlanProblem};
use bevnav::raster::{load_label_image, LabelImage};

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BevnavStatus {
    Ok = 0,
    NullArgument = 1,
    InvalidArgument = 2,
    Degenerate = 3,
    Io = 4,
    Config = 5,
    Pipeline = 6,
    Plan = 7,
    BufferTooSmall = 8,
    Panic = 99,
}

/// Opaque perspective-to-BEV homography.
pub struct BevnavHomography(Homography);

/// Opaque cost grid.
pub struct BevnavCostGrid(CostGrid);

/// Opaque planned path.
pub struct BevnavPath(GridPath);

/// Opaque resolved pipeline configuration.
pub struct BevnavPipeline(PipelineConfig);

/// Step counts from comparing a planned path against a label path.
#[repr(C)]
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct BevnavEvalCounts {
    pub steps_in_result: usize,
    pub steps_in_label: usize,
    pub matching_steps: usize,
    pub different_steps: usize,
}

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

fn set_error(msg: impl Into<String>) {
    let msg = msg.into().replace('\0', " ");
    LAST_ERROR.with(|e| *e.borrow_mut() = CString::new(msg).ok());
}

fn clear_error() {
    LAST_ERROR.with(|e| *e.borrow_mut() = None);
}

struct Failure(BevnavStatus, String);

impl Failure {
    fn new(status: BevnavStatus, err: impl ToString) -> Self {
        Failure(status, err.to_string())
    }
}

/// Runs `f`, recording any failure or panic in the thread's error slot.
fn guard(f: impl FnOnce() -> Result<(), Failure>) -> BevnavStatus {
    clear_error();
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => BevnavStatus::Ok,
        Ok(Err(Failure(status, msg))) => {
            set_error(msg);
            status
        }
        Err(panic) => {
            let msg = panic
                .downcast_ref::<&str>()
                .map(|s| s.to_string())
                .or_else(|| panic.downcast_ref::<String>().cloned())
                .unwrap_or_else(|| "unknown panic".to_string());
            set_error(format!("internal error: {msg}"));
            BevnavStatus::Panic
        }
    }
}

fn non_null<'a, T>(p: *const T, name: &str) -> Result<&'a T, Failure> {
    // SAFETY: callers pass either NULL or a pointer to a live object of type T.
    unsafe { p.as_ref() }
        .ok_or_else(|| Failure::new(BevnavStatus::NullArgument, format!("{name} is NULL")))
}

fn out_ptr<T>(p: *mut T, name: &str) -> Result<*mut T, Failure> {
    if p.is_null() {
        Err(Failure::new(
            BevnavStatus::NullArgument,
            format!("{name} is NULL"),
        ))
    } else {
        Ok(p)
    }
}

fn c_str<'a>(p: *const c_char, name: &str) -> Result<&'a str, Failure> {
    if p.is_null() {
        return Err(Failure::new(
            BevnavStatus::NullArgument,
            format!("{name} is NULL"),
        ));
    }
    // SAFETY: non-null and documented as a NUL-terminated string.
    unsafe { CStr::from_ptr(p) }.to_str().map_err(|_| {
        Failure::new(
            BevnavStatus::InvalidArgument,
            format!("{name} is not UTF-8"),
        )
    })
}

fn slice<'a, T>(p: *const T, len: usize, name: &str) -> Result<&'a [T], Failure> {
    if p.is_null() {
        return Err(Failure::new(
            BevnavStatus::NullArgument,
            format!("{name} is NULL"),
        ));
    }
    // SAFETY: non-null and documented to point at `len` readable elements.
    Ok(unsafe { std::slice::from_raw_parts(p, len) })
}

fn write_out<T>(out: *mut T, value: T) {
    // SAFETY: `out` was checked non-null by `out_ptr`.
    unsafe { out.write(value) }
}

fn into_handle<T>(value: T) -> *mut T {
    Box::into_raw(Box::new(value))
}

fn free_handle<T>(p: *mut T) {
    if !p.is_null() {
        // SAFETY: handles are only produced by `into_handle`.
        drop(unsafe { Box::from_raw(p) });
    }
}

fn points(xy: &[f64]) -> [Point; 4] {
    std::array::from_fn(|i| Point::new(xy[2 * i], xy[2 * i + 1]))
}

/// Last error message on this thread, or NULL. The pointer stays valid until
/// the next bevnav call on the same thread.
#[no_mangle]
pub extern "C" fn bevnav_last_error() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ref().map_or(ptr::null(), |s| s.as_ptr()))
}

/// Releases a string returned by this library.
///
/// # Safety
/// `s` must be NULL or a string returned by a bevnav function, freed once.
#[no_mangle]
pub unsafe extern "C" fn bevnav_string_free(s: *mut c_char) {
    if !s.is_null() {
        drop(CString::from_raw(s));
    }
}

/// Estimates the homography mapping `src` onto `dst`. Each array holds four
/// points as interleaved `x, y` (8 doubles).
///
/// # Safety
/// `src` and `dst` must point at 8 doubles; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn bevnav_homography_estimate(
    src: *const f64,
    dst: *const f64,
    out: *mut *mut BevnavHomography,
) -> BevnavStatus {
    guard(|| {
        let out = out_ptr(out, "out")?;
        let src = points(slice(src, 8, "src")?);
        let dst = points(slice(dst, 8, "dst")?);
        let c = Correspondences::new(src, dst)
            .map_err(|e| Failure::new(BevnavStatus::Degenerate, e))?;
        let h = estimate(&c).map_err(|e| Failure::new(BevnavStatus::Degenerate, e))?;
        write_out(out, into_handle(BevnavHomography(h)));
        Ok(())
    })
}

/// Wraps a row-major 3x3 matrix.
///
/// # Safety
/// `m` must point at 9 doubles; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn bevnav_homography_from_matrix(
    m: *const f64,
    out: *mut *mut BevnavHomography,
) -> BevnavStatus {
    guard(|| {
        let out = out_ptr(out, "out")?;
        let m: [f64; 9] = slice(m, 9, "m")?.try_into().expect("length checked");
        let h =
            Homography::from_row_major(m).map_err(|e| Failure::new(BevnavStatus::Degenerate, e))?;
        write_out(out, into_handle(BevnavHomography(h)));
        Ok(())
    })
}

/// Copies the row-major matrix into `out` (9 doubles).
///
/// # Safety
/// `h` must be a live handle; `out` must point at 9 writable doubles.
#[no_mangle]
pub unsafe extern "C" fn bevnav_homography_matrix(
    h: *const BevnavHomography,
    out: *mut f64,
) -> BevnavStatus {
    guard(|| {
        let h = non_null(h, "h")?;
        let out = out_ptr(out, "out")?;
        for (i, v) in h.0.to_row_major().into_iter().enumerate() {
            write_out(out.add(i), v);
        }
        Ok(())
    })
}

/// Projects `(x, y)` through `h`.
///
/// # Safety
/// `h` must be a live handle; `out_x` and `out_y` must be writable.
#[no_mangle]
pub unsafe extern "C" fn bevnav_homography_project(
    h: *const BevnavHomography,
    x: f64,
    y: f64,
    out_x: *mut f64,
    out_y: *mut f64,
) -> BevnavStatus {
    guard(|| {
        let h = non_null(h, "h")?;
        let (ox, oy) = (out_ptr(out_x, "out_x")?, out_ptr(out_y, "out_y")?);
        let p =
            h.0.project(Point::new(x, y))
                .map_err(|e| Failure::new(BevnavStatus::InvalidArgument, e))?;
        write_out(ox, p.x);
        write_out(oy, p.y);
        Ok(())
    })
}

/// Creates a new handle holding the inverse of `h`.
///
/// # Safety
/// `h` must be a live handle; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn bevnav_homography_invert(
    h: *const BevnavHomography,
    out: *mut *mut BevnavHomography,
) -> BevnavStatus {
    guard(|| {
        let h = non_null(h, "h")?;
        let out = out_ptr(out, "out")?;
        let inv =
            h.0.invert()
                .map_err(|e| Failure::new(BevnavStatus::Degenerate, e))?;
        write_out(out, into_handle(BevnavHomography(inv)));
        Ok(())
    })
}

/// # Safety
/// `h` must be NULL or a live handle, freed once.
#[no_mangle]
pub unsafe extern "C" fn bevnav_homography_free(h: *mut BevnavHomography) {
    free_handle(h);
}

/// Builds a grid from `rows * cols` row-major cell costs.
///
/// # Safety
/// `costs` must point at `len` doubles; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn bevnav_grid_new(
    rows: u32,
    cols: u32,
    cell_mm: u32,
    costs: *const f64,
    len: usize,
    out: *mut *mut BevnavCostGrid,
) -> BevnavStatus {
    guard(|| {
        let out = out_ptr(out, "out")?;
        let cells = slice(costs, len, "costs")?.to_vec();
        let grid = CostGrid::new(GridSpec::new(rows, cols, cell_mm), cells)
            .map_err(|e| Failure::new(BevnavStatus::InvalidArgument, e))?;
        write_out(out, into_handle(BevnavCostGrid(grid)));
        Ok(())
    })
}

/// # Safety
/// `g` must be NULL or a live handle, freed once.
#[no_mangle]
pub unsafe extern "C" fn bevnav_grid_free(g: *mut BevnavCostGrid) {
    free_handle(g);
}

fn plan_with(
    grid: *const BevnavCostGrid,
    start: [u32; 2],
    goal: [u32; 2],
    out: *mut *mut BevnavPath,
    search: fn(&PlanProblem) -> Result<GridPath, bevnav::planner::PlanError>,
) -> BevnavStatus {
    guard(|| {
        let grid = non_null(grid, "grid")?;
        let out = out_ptr(out, "out")?;
        let problem = PlanProblem::new(grid.0.clone())
            .with_start(Cell::new(start[0], start[1]))
            .with_goal(Cell::new(goal[0], goal[1]));
        let path = search(&problem).map_err(|e| Failure::new(BevnavStatus::Plan, e))?;
        write_out(out, into_handle(BevnavPath(path)));
        Ok(())
    })
}

/// A* from `(start_row, start_col)` to `(goal_row, goal_col)`.
///
/// # Safety
/// `grid` must be a live handle; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn bevnav_plan_astar(
    grid: *const BevnavCostGrid,
    start_row: u32,
    start_col: u32,
    goal_row: u32,
    goal_col: u32,
    out: *mut *mut BevnavPath,
) -> BevnavStatus {
    plan_with(
        grid,
        [start_row, start_col],
        [goal_row, goal_col],
        out,
        astar,
    )
}

/// Dijkstra reference search; same arguments as `bevnav_plan_astar`.
///
/// # Safety
/// `grid` must be a live handle; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn bevnav_plan_dijkstra(
    grid: *const BevnavCostGrid,
    start_row: u32,
    start_col: u32,
    goal_row: u32,
    goal_col: u32,
    out: *mut *mut BevnavPath,
) -> BevnavStatus {
    plan_with(
        grid,
        [start_row, start_col],
        [goal_row, goal_col],
        out,
        dijkstra,
    )
}

/// Number of cells on the path (steps + 1). Returns 0 for NULL.
///
/// # Safety
/// `p` must be NULL or a live handle.
#[no_mangle]
pub unsafe extern "C" fn bevnav_path_len(p: *const BevnavPath) -> usize {
    p.as_ref().map_or(0, |p| p.0.cells.len())
}

/// Number of 4-connected moves on the path. Returns 0 for NULL.
///
/// # Safety
/// `p` must be NULL or a live handle.
#[no_mangle]
pub unsafe extern "C" fn bevnav_path_steps(p: *const BevnavPath) -> usize {
    p.as_ref().map_or(0, |p| p.0.steps())
}

/// Sum of entered-cell costs. Returns NaN for NULL.
///
/// # Safety
/// `p` must be NULL or a live handle.
#[no_mangle]
pub unsafe extern "C" fn bevnav_path_total_cost(p: *const BevnavPath) -> f64 {
    p.as_ref().map_or(f64::NAN, |p| p.0.total_cost)
}

/// Nodes expanded by the search. Returns 0 for NULL.
///
/// # Safety
/// `p` must be NULL or a live handle.
#[no_mangle]
pub unsafe extern "C" fn bevnav_path_expanded(p: *const BevnavPath) -> u64 {
    p.as_ref().map_or(0, |p| p.0.expanded)
}

/// Copies the cells as interleaved `row, col` pairs into `out`, which holds
/// `capacity` pairs. Fails with `BEVNAV_STATUS_BUFFER_TOO_SMALL` if the path
/// is longer; query `bevnav_path_len` first.
///
/// # Safety
/// `p` must be a live handle; `out` must point at `2 * capacity` u32s.
#[no_mangle]
pub unsafe extern "C" fn bevnav_path_cells(
    p: *const BevnavPath,
    out: *mut u32,
    capacity: usize,
) -> BevnavStatus {
    guard(|| {
        let p = non_null(p, "path")?;
        let out = out_ptr(out, "out")?;
        if p.0.cells.len() > capacity {
            return Err(Failure::new(
                BevnavStatus::BufferTooSmall,
                format!(
                    "path has {} cells, buffer holds {capacity}",
                    p.0.cells.len()
                ),
            ));
        }
        for (i, c) in p.0.cells.iter().enumerate() {
            write_out(out.add(2 * i), c.row);
            write_out(out.add(2 * i + 1), c.col);
        }
        Ok(())
    })
}

/// Serializes the path as JSON. Free the string with `bevnav_string_free`.
///
/// # Safety
/// `p` must be a live handle; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn bevnav_path_to_json(
    p: *const BevnavPath,
    out: *mut *mut c_char,
) -> BevnavStatus {
    guard(|| {
        let p = non_null(p, "path")?;
        let out = out_ptr(out, "out")?;
        let json =
            to_json_pretty(&p.0).map_err(|e| Failure::new(BevnavStatus::InvalidArgument, e))?;
        let s = CString::new(json).map_err(|e| Failure::new(BevnavStatus::InvalidArgument, e))?;
        write_out(out, s.into_raw());
        Ok(())
    })
}

/// # Safety
/// `p` must be NULL or a live handle, freed once.
#[no_mangle]
pub unsafe extern "C" fn bevnav_path_free(p: *mut BevnavPath) {
    free_handle(p);
}

/// Loads and validates a pipeline configuration file. Relative paths inside
/// it resolve against the file's directory.
///
/// # Safety
/// `path` must be a NUL-terminated string; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn bevnav_pipeline_load(
    path: *const c_char,
    out: *mut *mut BevnavPipeline,
) -> BevnavStatus {
    guard(|| {
        let out = out_ptr(out, "out")?;
        let path = c_str(path, "path")?;
        let cfg = PipelineConfig::load(Path::new(path))
            .map_err(|e| Failure::new(BevnavStatus::Config, e))?;
        write_out(out, into_handle(BevnavPipeline(cfg)));
        Ok(())
    })
}

fn plan_image(
    cfg: &PipelineConfig,
    labels: &LabelImage,
    out: *mut *mut BevnavPath,
) -> Result<(), Failure> {
    let result = cfg
        .plan_labels(labels)
        .map_err(|e| Failure::new(BevnavStatus::Pipeline, e))?;
    write_out(out, into_handle(BevnavPath(result.path)));
    Ok(())
}

/// Plans on an 8-bit label image given as `width * height` row-major bytes.
///
/// # Safety
/// `pipeline` must be a live handle; `labels` must point at
/// `width * height` bytes; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn bevnav_pipeline_plan_labels(
    pipeline: *const BevnavPipeline,
    width: u32,
    height: u32,
    labels: *const u8,
    out: *mut *mut BevnavPath,
) -> BevnavStatus {
    guard(|| {
        let cfg = non_null(pipeline, "pipeline")?;
        let out = out_ptr(out, "out")?;
        let len = width as usize * height as usize;
        let img = LabelImage::new(width, height, slice(labels, len, "labels")?.to_vec())
            .map_err(|e| Failure::new(BevnavStatus::InvalidArgument, e))?;
        plan_image(&cfg.0, &img, out)
    })
}

/// Plans on a grayscale label PNG read from `path`.
///
/// # Safety
/// `pipeline` must be a live handle; `path` must be a NUL-terminated string;
/// `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn bevnav_pipeline_plan_file(
    pipeline: *const BevnavPipeline,
    path: *const c_char,
    out: *mut *mut BevnavPath,
) -> BevnavStatus {
    guard(|| {
        let cfg = non_null(pipeline, "pipeline")?;
        let out = out_ptr(out, "out")?;
        let img = load_label_image(c_str(path, "path")?)
            .map_err(|e| Failure::new(BevnavStatus::Io, e))?;
        plan_image(&cfg.0, &img, out)
    })
}

/// # Safety
/// `p` must be NULL or a live handle, freed once.
#[no_mangle]
pub unsafe extern "C" fn bevnav_pipeline_free(p: *mut BevnavPipeline) {
    free_handle(p);
}

/// Compares a planned path against a label path on the same grid.
///
/// # Safety
/// Both paths must be live handles; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn bevnav_compare_paths(
    result: *const BevnavPath,
    label: *const BevnavPath,
    out: *mut BevnavEvalCounts,
) -> BevnavStatus {
    guard(|| {
        let result = non_null(result, "result")?;
        let label = non_null(label, "label")?;
        let out = out_ptr(out, "out")?;
        let row = compare_paths(&result.0, &label.0)
            .map_err(|e| Failure::new(BevnavStatus::InvalidArgument, e))?;
        write_out(
            out,
            BevnavEvalCounts {
                steps_in_result: row.steps_in_result,
                steps_in_label: row.steps_in_label,
                matching_steps: row.matching_steps,
                different_steps: row.different_steps,
            },
        );
        Ok(())
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn last_error() -> String {
        let p = bevnav_last_error();
        assert!(!p.is_null());
        unsafe { CStr::from_ptr(p) }.to_string_lossy().into_owned()
    }

    #[test]
    fn null_out_is_reported() {
        let m = [1.0, 0.0, 0.0, 0.0, 1.0, 0.0, 0.0, 0.0, 1.0];
        let status = unsafe { bevnav_homography_from_matrix(m.as_ptr(), ptr::null_mut()) };
        assert_eq!(status, BevnavStatus::NullArgument);
        assert!(last_error().contains("out"));
    }

    #[test]
    fn success_clears_error() {
        let m = [1.0, 0.0, 0.0, 0.0, 1.0, 0.0, 0.0, 0.0, 1.0];
        let _ = unsafe { bevnav_homography_from_matrix(ptr::null(), ptr::null_mut()) };
        let mut h = ptr::null_mut();
        assert_eq!(
            unsafe { bevnav_homography_from_matrix(m.as_ptr(), &mut h) },
            BevnavStatus::Ok
        );
        assert!(bevnav_last_error().is_null());
        unsafe { bevnav_homography_free(h) };
    }

    #[test]
    fn collinear_points_are_degenerate() {
        let src = [0.0, 0.0, 1.0, 1.0, 2.0, 2.0, 0.0, 1.0];
        let dst = [0.0, 0.0, 1.0, 0.0, 1.0, 1.0, 0.0, 1.0];
        let mut h = ptr::null_mut();
        let status = unsafe { bevnav_homography_estimate(src.as_ptr(), dst.as_ptr(), &mut h) };
        assert_eq!(status, BevnavStatus::Degenerate);
        assert!(h.is_null());
    }

    #[test]
    fn free_null_is_noop() {
        unsafe {
            bevnav_homography_free(ptr::null_mut());
            bevnav_grid_free(ptr::null_mut());
            bevnav_path_free(ptr::null_mut());
            bevnav_pipeline_free(ptr::null_mut());
            bevnav_string_free(ptr::null_mut());
        }
    }
}
