//! End-to-end acceptance checks. Runs without the libtest harness so each
//! criterion prints exactly one PASS/FAIL line; exits non-zero on any FAIL.

use std::fs;
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::{Path, PathBuf};
use std::process::Command;
use std::time::{Duration, Instant};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use bevnav::cli::eval_dirs;
use bevnav::costgrid::{pool, CostGrid, GridSpec};
use bevnav::costmap::{apply_costs, OBSTACLE};
use bevnav::eval::{emit_table, TableFormat};
use bevnav::homography::{
    estimate, residual, warp_labels, Correspondences, Dims, Homography, Point,
};
use bevnav::pipeline::PipelineConfig;
use bevnav::planner::{astar, dijkstra, Cell, GridPath, PlanProblem};
use bevnav::raster::{save_label_image, CostMap, LabelImage, Space, OUT_OF_VIEW_CLASS};
use bevnav::scenegen::{
    fixture, generate_bev_labels, generate_perspective_view, RandomObstacles, SceneSpec,
    BLOCKED_ROW, GAP_COL,
};

type Outcome = Result<String, String>;
type Criterion = (&'static str, fn() -> Outcome);

fn check(cond: bool, msg: impl FnOnce() -> String) -> Result<(), String> {
    if cond {
        Ok(())
    } else {
        Err(msg())
    }
}

fn manifest_dir() -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR"))
}

fn default_config() -> PipelineConfig {
    PipelineConfig::load(manifest_dir().join("../../configs/pipeline.json"))
        .expect("shipped config loads")
}

fn plan_bev(labels: &LabelImage, cfg: &PipelineConfig) -> (CostGrid, GridPath) {
    let costs = apply_costs(labels, &cfg.costs, Space::Bev);
    let grid = pool(&costs, &cfg.grid).unwrap();
    let path = cfg.plan_grid(grid.clone()).unwrap();
    (grid, path)
}

fn table_reproduction() -> Outcome {
    let started = Instant::now();
    let fixtures = manifest_dir().join("tests/fixtures");
    for log in ["log1", "log2"] {
        let dir = fixtures.join(log);
        let rows =
            eval_dirs(&dir.join("results"), &dir.join("labels")).map_err(|e| e.to_string())?;
        let table = emit_table(&rows, TableFormat::Csv);
        let expected = fs::read_to_string(dir.join("expected.csv")).map_err(|e| e.to_string())?;
        check(table == expected, || {
            format!("{log} table differs:\n{table}")
        })?;
    }
    let elapsed = started.elapsed();
    check(elapsed < Duration::from_secs(1), || {
        format!("took {elapsed:?}")
    })?;
    Ok(format!(
        "both tables match in {:.1} ms",
        elapsed.as_secs_f64() * 1e3
    ))
}

fn straight_line() -> Outcome {
    let cfg = default_config();
    // Directly on a uniform carpet grid.
    let grid = CostGrid::uniform(cfg.grid, 1.0).unwrap();
    let path = cfg.plan_grid(grid).unwrap();
    check(path.steps() == 18 && path.total_cost == 18.0, || {
        format!("grid: {} steps, cost {}", path.steps(), path.total_cost)
    })?;
    check(path.cells.iter().all(|c| c.col == 10), || {
        "grid path leaves column 10".into()
    })?;
    // Through the whole pipeline from an all-carpet camera frame.
    let frame = LabelImage::filled(640, 360, 0);
    let out = cfg.plan_labels(&frame).unwrap();
    check(
        out.path.steps() == 18 && out.path.total_cost == 18.0,
        || {
            format!(
                "pipeline: {} steps, cost {}",
                out.path.steps(),
                out.path.total_cost
            )
        },
    )?;
    Ok("18 steps, total cost 18 (grid and full pipeline)".into())
}

fn astar_matches_dijkstra() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(0x5eed_0003);
    let levels = [1.0, 4.0, 16.0, 64.0];
    let (mut astar_total, mut dijkstra_total) = (0u64, 0u64);
    for trial in 0..1000 {
        let rows = rng.random_range(2..=19u32);
        let cols = rng.random_range(2..=20u32);
        let cells = (0..rows * cols)
            .map(|_| levels[rng.random_range(0..4)])
            .collect();
        let grid = CostGrid::new(GridSpec::new(rows, cols, 100), cells).unwrap();
        let start = Cell::new(rng.random_range(0..rows), rng.random_range(0..cols));
        let goal = Cell::new(rng.random_range(0..rows), rng.random_range(0..cols));
        let problem = PlanProblem::new(grid).with_start(start).with_goal(goal);
        let a = astar(&problem).unwrap();
        let d = dijkstra(&problem).unwrap();
        check(a.total_cost == d.total_cost, || {
            format!(
                "trial {trial}: A* {} vs Dijkstra {}",
                a.total_cost, d.total_cost
            )
        })?;
        check(a.expanded <= d.expanded, || {
            format!(
                "trial {trial}: A* expanded {} > Dijkstra {}",
                a.expanded, d.expanded
            )
        })?;
        astar_total += a.expanded;
        dijkstra_total += d.expanded;
    }
    Ok(format!(
        "1000 grids equal cost; expansions A* {astar_total} vs Dijkstra {dijkstra_total}"
    ))
}

fn random_quad(rng: &mut ChaCha8Rng, w: f64, h: f64) -> [Point; 4] {
    std::array::from_fn(|_| Point::new(rng.random_range(0.0..w), rng.random_range(0.0..h)))
}

fn cross(p: Point, q: Point, r: Point) -> f64 {
    (q.x - p.x) * (r.y - p.y) - (q.y - p.y) * (r.x - p.x)
}

/// Turn direction at each corner of the quad in order, or `None` unless the
/// quad is convex with every corner clearly away from degenerate (each turn
/// spans at least 5% of `extent` squared).
fn convex_orientation(p: &[Point; 4], extent: f64) -> Option<f64> {
    let turns: Vec<f64> = (0..4)
        .map(|i| cross(p[i], p[(i + 1) % 4], p[(i + 2) % 4]))
        .collect();
    let sign = turns[0].signum();
    turns
        .iter()
        .all(|t| t.signum() == sign && t.abs() > 0.05 * extent * extent)
        .then_some(sign)
}

/// Quads a real calibration could produce: both convex with the same
/// orientation, so the map does not fold the quad across the horizon.
fn realizable(src: &[Point; 4], src_extent: f64, dst: &[Point; 4], dst_extent: f64) -> bool {
    match (
        convex_orientation(src, src_extent),
        convex_orientation(dst, dst_extent),
    ) {
        (Some(a), Some(b)) => a == b,
        _ => false,
    }
}

/// Smallest singular value of the Jacobian of `h` at `p`: how many
/// destination pixels one source pixel spans along its shortest direction.
/// Nearest sampling moves a point by at most sqrt(2)/2 destination pixels,
/// i.e. under half a source pixel once this exceeds sqrt(2), so such pixels
/// must survive a forward-and-back warp.
fn min_stretch(h: &Homography, p: Point) -> f64 {
    let m = h.rows();
    let w = h.w(p);
    let q = h.project(p).unwrap();
    let a = (m[0][0] - q.x * m[2][0]) / w;
    let b = (m[0][1] - q.x * m[2][1]) / w;
    let c = (m[1][0] - q.y * m[2][0]) / w;
    let d = (m[1][1] - q.y * m[2][1]) / w;
    let t = a * a + b * b + c * c + d * d;
    let det = a * d - b * c;
    ((t - (t * t - 4.0 * det * det).max(0.0).sqrt()) / 2.0).sqrt()
}

fn homography_checks() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(0x5eed_0004);
    // A small camera frame onto a canvas with 10x its resolution.
    let persp = Dims::new(64, 48);
    let bev = Dims::new(640, 480);
    let (mut worst_residual, mut worst_identity, mut worst_agreement) = (0.0f64, 0.0f64, 1.0f64);
    let (mut total_frustum, mut total_compared) = (0u64, 0u64);
    let mut quads = 0;
    while quads < 1000 {
        let src = random_quad(&mut rng, persp.width as f64, persp.height as f64);
        let dst = random_quad(&mut rng, bev.width as f64, bev.height as f64);
        if !realizable(&src, persp.height as f64, &dst, bev.height as f64) {
            continue;
        }
        quads += 1;
        let (mut in_frustum, mut in_view, mut agree) = (0u32, 0u32, 0u32);
        let c = Correspondences::new(src, dst).unwrap();
        let h = estimate(&c).map_err(|e| format!("quad {quads}: {e}"))?;
        let inv = h.invert().map_err(|e| format!("quad {quads}: {e}"))?;
        worst_residual = worst_residual.max(residual(&h, &c));

        // Raw product, normalized so its (2,2) entry is 1.
        let (a, b) = (h.rows(), inv.rows());
        let mut prod = [[0.0; 3]; 3];
        for (i, row) in prod.iter_mut().enumerate() {
            for (j, v) in row.iter_mut().enumerate() {
                *v = (0..3).map(|k| a[i][k] * b[k][j]).sum();
            }
        }
        let scale = prod[2][2];
        for (i, row) in prod.iter().enumerate() {
            for (j, v) in row.iter().enumerate() {
                let expect = if i == j { 1.0 } else { 0.0 };
                worst_identity = worst_identity.max((v / scale - expect).abs());
            }
        }

        // Forward then back with random per-pixel labels. A camera pixel is
        // compared when it is in the frustum (the calibration's side of the
        // horizon, landing on the canvas) and resolved by the canvas.
        let side = h
            .w(h.anchor().ok_or("estimated homography has no anchor")?)
            .signum();
        let labels: Vec<u8> = (0..persp.width * persp.height)
            .map(|_| rng.random_range(0..3))
            .collect();
        let image = LabelImage::new(persp.width, persp.height, labels).unwrap();
        let forward = warp_labels(&image, &h, bev).unwrap();
        let back = warp_labels(&forward, &inv, persp).unwrap();
        for y in 0..persp.height {
            for x in 0..persp.width {
                let c = Point::new(x as f64 + 0.5, y as f64 + 0.5);
                if h.w(c).signum() != side {
                    continue;
                }
                let Ok(p) = h.project(c) else {
                    continue;
                };
                if p.x < 0.0 || p.y < 0.0 || p.x >= bev.width as f64 || p.y >= bev.height as f64 {
                    continue;
                }
                in_frustum += 1;
                if min_stretch(&h, c) < 2.0 {
                    continue;
                }
                in_view += 1;
                agree += u32::from(back.get(x, y) == image.get(x, y));
            }
        }
        total_frustum += in_frustum as u64;
        total_compared += in_view as u64;
        if in_view > 0 {
            worst_agreement = worst_agreement.min(agree as f64 / in_view as f64);
        }
    }
    check(worst_residual <= 1e-6, || {
        format!("residual {worst_residual:e}")
    })?;
    check(worst_identity <= 1e-9, || {
        format!("H*H^-1 off identity by {worst_identity:e}")
    })?;
    check(worst_agreement >= 0.99, || {
        format!("round-trip agreement {worst_agreement}")
    })?;
    Ok(format!(
        "1000 quads: residual <= {worst_residual:.1e}, |H*H^-1 - I| <= {worst_identity:.1e}, \
         round trip >= {:.2}% per quad ({total_compared} of {total_frustum} in-frustum pixels resolved)",
        worst_agreement * 100.0
    ))
}

fn pooling_checks() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(0x5eed_0005);
    let (mut worst_abs, mut worst_rel) = (0.0f64, 0.0f64);
    for _ in 0..50 {
        let cell = rng.random_range(1..=12u32);
        let rows = rng.random_range(1..=19u32);
        let cols = rng.random_range(1..=20u32);
        let ox = rng.random_range(0..=7u32);
        let oy = rng.random_range(0..=7u32);
        let width = ox + cols * cell + rng.random_range(0..=5u32);
        let height = oy + rows * cell + rng.random_range(0..=5u32);
        let data: Vec<f64> = (0..width * height)
            .map(|_| rng.random_range(0.5..100.0))
            .collect();
        let map = CostMap::new(width, height, data, Space::Bev).unwrap();
        let spec = GridSpec::new(rows, cols, cell).with_origin(ox, oy);
        let grid = pool(&map, &spec).unwrap();

        let mut covered = 0.0;
        for r in 0..rows {
            for c in 0..cols {
                let mut sum = 0.0;
                for y in oy + r * cell..oy + (r + 1) * cell {
                    for x in ox + c * cell..ox + (c + 1) * cell {
                        sum += map.get(x, y);
                    }
                }
                covered += sum;
                let mean = sum / (cell * cell) as f64;
                worst_abs = worst_abs.max((grid.get(r, c) - mean).abs());
            }
        }
        let mass: f64 = grid.cells().iter().sum::<f64>() * (cell * cell) as f64;
        worst_rel = worst_rel.max((mass - covered).abs() / covered);
    }
    check(worst_abs <= 1e-6, || {
        format!("cell mean off by {worst_abs:e}")
    })?;
    check(worst_rel <= 1e-6, || {
        format!("mass off by {worst_rel:e} relative")
    })?;
    Ok(format!(
        "50 maps: |mean error| <= {worst_abs:.1e}, mass error <= {worst_rel:.1e}"
    ))
}

fn fixture_checks() -> Outcome {
    let cfg = default_config();
    let blocked = generate_bev_labels(&fixture("blocked-row").unwrap(), &cfg.canvas).unwrap();
    let (_, path) = plan_bev(&blocked, &cfg);
    check(path.total_cost >= 64.0, || {
        format!("blocked-row cost {}", path.total_cost)
    })?;

    let gap = generate_bev_labels(&fixture("narrow-gap").unwrap(), &cfg.canvas).unwrap();
    let (mut grid, path) = plan_bev(&gap, &cfg);
    let gap_cell = Cell::new(BLOCKED_ROW, GAP_COL);
    check(path.cells.contains(&gap_cell), || {
        "narrow-gap path misses the gap".into()
    })?;
    let oracle = dijkstra(
        &PlanProblem::new(grid.clone())
            .with_start(cfg.start)
            .with_goal(cfg.goal),
    )
    .unwrap();
    check(path.total_cost == oracle.total_cost, || {
        format!(
            "narrow-gap A* {} vs Dijkstra {}",
            path.total_cost, oracle.total_cost
        )
    })?;

    // Price the gap like the wall: the detour no longer pays for itself.
    grid.set(gap_cell.row, gap_cell.col, cfg.costs.cost_of(OBSTACLE));
    let flipped = cfg.plan_grid(grid).unwrap();
    check(!flipped.cells.contains(&gap_cell), || {
        "route still uses the gap".into()
    })?;
    check(flipped.steps() < path.steps(), || {
        "route did not straighten".into()
    })?;
    Ok(format!(
        "blocked-row cost {}; narrow-gap cost {} via {:?}; gap at 64 -> {} steps, cost {}",
        path_cost_str(&blocked, &cfg),
        path.total_cost,
        (gap_cell.row, gap_cell.col),
        flipped.steps(),
        flipped.total_cost
    ))
}

fn path_cost_str(labels: &LabelImage, cfg: &PipelineConfig) -> String {
    plan_bev(labels, cfg).1.total_cost.to_string()
}

fn write_frames(dir: &Path, cfg: &PipelineConfig, count: u64) {
    let h = cfg.frame_homography().unwrap();
    for i in 0..count {
        let spec = SceneSpec {
            random_obstacles: Some(RandomObstacles {
                count: 1 + (i % 6) as u32,
                min_mm: 100,
                max_mm: 500,
                class: OBSTACLE,
            }),
            seed: i,
            ..Default::default()
        };
        let bev = generate_bev_labels(&spec, &cfg.canvas).unwrap();
        let view = generate_perspective_view(&bev, &h, Dims::new(640, 360)).unwrap();
        save_label_image(&view, dir.join(format!("{i:04}.png"))).unwrap();
    }
}

fn read_tree(dir: &Path) -> Vec<(String, Vec<u8>)> {
    let mut files: Vec<(String, Vec<u8>)> = fs::read_dir(dir)
        .unwrap()
        .map(|e| {
            let p = e.unwrap().path();
            (
                p.file_name().unwrap().to_string_lossy().into_owned(),
                fs::read(&p).unwrap(),
            )
        })
        .collect();
    files.sort();
    files
}

fn batch_determinism() -> Outcome {
    let cfg = default_config();
    let tmp = tempfile::tempdir().map_err(|e| e.to_string())?;
    let frames = tmp.path().join("frames");
    fs::create_dir(&frames).unwrap();
    write_frames(&frames, &cfg, 50);
    let config = manifest_dir().join("../../configs/pipeline.json");
    let mut outputs = Vec::new();
    for run in ["a", "b"] {
        let out = tmp.path().join(run);
        let status = Command::new(env!("CARGO_BIN_EXE_bevnav"))
            .arg("batch")
            .arg("--frames")
            .arg(&frames)
            .arg("--config")
            .arg(&config)
            .arg("--out")
            .arg(&out)
            .status()
            .map_err(|e| e.to_string())?;
        check(status.success(), || {
            format!("batch run {run} exited with {status}")
        })?;
        outputs.push(read_tree(&out));
    }
    // 50 paths + 50 overlays + manifest.
    check(outputs[0].len() == 101, || {
        format!("{} output files", outputs[0].len())
    })?;
    for ((name_a, a), (name_b, b)) in outputs[0].iter().zip(&outputs[1]) {
        check(name_a == name_b && a == b, || {
            format!("{name_a} differs between runs")
        })?;
    }
    Ok(format!(
        "{} files byte-identical across two runs",
        outputs[0].len()
    ))
}

fn frame_latency() -> Outcome {
    let cfg = default_config();
    let h = cfg.frame_homography().unwrap();
    let bev = generate_bev_labels(&fixture("one-obstacle").unwrap(), &cfg.canvas).unwrap();
    let frame = generate_perspective_view(&bev, &h, Dims::new(640, 360)).unwrap();
    check(frame.data().iter().any(|&c| c != OUT_OF_VIEW_CLASS), || {
        "empty frame".into()
    })?;
    let mut times: Vec<Duration> = (0..7)
        .map(|_| {
            let t = Instant::now();
            let out = cfg.plan_labels(&frame).unwrap();
            std::hint::black_box(&out);
            t.elapsed()
        })
        .collect();
    times.sort();
    let median = times[times.len() / 2];
    check(median < Duration::from_millis(100), || {
        format!("median {median:?}")
    })?;
    Ok(format!(
        "640x360 frame in {:.1} ms (median of 7)",
        median.as_secs_f64() * 1e3
    ))
}

fn main() {
    let criteria: [Criterion; 8] = [
        ("1 table reproduction", table_reproduction),
        ("2 straight line", straight_line),
        ("3 A* equals Dijkstra", astar_matches_dijkstra),
        ("4 homography", homography_checks),
        ("5 pooling", pooling_checks),
        ("6 regression fixtures", fixture_checks),
        ("7 batch determinism", batch_determinism),
        ("8 frame latency", frame_latency),
    ];
    let mut failed = 0;
    for (name, run) in criteria {
        let outcome = catch_unwind(AssertUnwindSafe(run)).unwrap_or_else(|panic| {
            Err(panic
                .downcast_ref::<String>()
                .cloned()
                .or_else(|| panic.downcast_ref::<&str>().map(|s| s.to_string()))
                .unwrap_or_else(|| "panicked".into()))
        });
        match outcome {
            Ok(detail) => println!("PASS criterion {name}: {detail}"),
            Err(why) => {
                failed += 1;
                println!("FAIL criterion {name}: {why}");
            }
        }
    }
    if failed > 0 {
        std::process::exit(1);
    }
}
