//! Mean-pooling of a BEV cost map into a coarse planning grid.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::raster::CostMap;

#[derive(Debug, Error, PartialEq)]
pub enum GridError {
    #[error("grid rows, cols and cell_mm must be positive (got {rows}x{cols} @ {cell_mm} mm)")]
    EmptySpec { rows: u32, cols: u32, cell_mm: u32 },
    #[error(
        "grid {rows}x{cols} @ {cell_mm} mm from origin ({ox}, {oy}) does not fit a {width}x{height} px BEV map"
    )]
    DoesNotFit {
        rows: u32,
        cols: u32,
        cell_mm: u32,
        ox: u32,
        oy: u32,
        width: u32,
        height: u32,
    },
    #[error("expected {expected} cells, got {got}")]
    CellCount { expected: usize, got: usize },
    #[error("cell {index} has invalid cost {value}")]
    InvalidCell { index: usize, value: f64 },
}

fn is_origin(o: &[u32; 2]) -> bool {
    *o == [0, 0]
}

/// Grid geometry. Rows run along the direction of travel, cols laterally.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct GridSpec {
    pub rows: u32,
    pub cols: u32,
    pub cell_mm: u32,
    /// BEV pixel of the grid's top-left corner, `[x, y]`.
    #[serde(default, skip_serializing_if = "is_origin")]
    pub origin: [u32; 2],
}

impl Default for GridSpec {
    fn default() -> Self {
        Self {
            rows: 19,
            cols: 20,
            cell_mm: 100,
            origin: [0, 0],
        }
    }
}

impl GridSpec {
    pub fn new(rows: u32, cols: u32, cell_mm: u32) -> Self {
        Self {
            rows,
            cols,
            cell_mm,
            origin: [0, 0],
        }
    }

    pub fn with_origin(mut self, x: u32, y: u32) -> Self {
        self.origin = [x, y];
        self
    }

    pub fn len(&self) -> usize {
        self.rows as usize * self.cols as usize
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn validate(&self) -> Result<(), GridError> {
        if self.rows == 0 || self.cols == 0 || self.cell_mm == 0 {
            return Err(GridError::EmptySpec {
                rows: self.rows,
                cols: self.cols,
                cell_mm: self.cell_mm,
            });
        }
        Ok(())
    }

    /// Checks that the grid tiles a region fully inside a `width`x`height`
    /// BEV raster (1 px = 1 mm).
    pub fn check_fits(&self, width: u32, height: u32) -> Result<(), GridError> {
        self.validate()?;
        let right = self.origin[0] as u64 + self.cols as u64 * self.cell_mm as u64;
        let bottom = self.origin[1] as u64 + self.rows as u64 * self.cell_mm as u64;
        if right > width as u64 || bottom > height as u64 {
            return Err(GridError::DoesNotFit {
                rows: self.rows,
                cols: self.cols,
                cell_mm: self.cell_mm,
                ox: self.origin[0],
                oy: self.origin[1],
                width,
                height,
            });
        }
        Ok(())
    }

    /// Center of a cell in BEV pixel coordinates.
    pub fn cell_center(&self, row: u32, col: u32) -> (f64, f64) {
        let c = self.cell_mm as f64;
        (
            self.origin[0] as f64 + (col as f64 + 0.5) * c,
            self.origin[1] as f64 + (row as f64 + 0.5) * c,
        )
    }
}

/// Row-major mean cell costs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "CostGridFile", into = "CostGridFile")]
pub struct CostGrid {
    spec: GridSpec,
    cells: Vec<f64>,
}

#[derive(Serialize, Deserialize)]
struct CostGridFile {
    rows: u32,
    cols: u32,
    cell_mm: u32,
    #[serde(default, skip_serializing_if = "is_origin")]
    origin: [u32; 2],
    cells: Vec<f64>,
}

impl TryFrom<CostGridFile> for CostGrid {
    type Error = GridError;

    fn try_from(f: CostGridFile) -> Result<Self, GridError> {
        let spec = GridSpec {
            rows: f.rows,
            cols: f.cols,
            cell_mm: f.cell_mm,
            origin: f.origin,
        };
        CostGrid::new(spec, f.cells)
    }
}

impl From<CostGrid> for CostGridFile {
    fn from(g: CostGrid) -> Self {
        Self {
            rows: g.spec.rows,
            cols: g.spec.cols,
            cell_mm: g.spec.cell_mm,
            origin: g.spec.origin,
            cells: g.cells,
        }
    }
}

impl CostGrid {
    pub fn new(spec: GridSpec, cells: Vec<f64>) -> Result<Self, GridError> {
        spec.validate()?;
        if cells.len() != spec.len() {
            return Err(GridError::CellCount {
                expected: spec.len(),
                got: cells.len(),
            });
        }
        if let Some((index, &value)) = cells
            .iter()
            .enumerate()
            .find(|(_, v)| !v.is_finite() || **v < 0.0)
        {
            return Err(GridError::InvalidCell { index, value });
        }
        Ok(Self { spec, cells })
    }

    pub fn uniform(spec: GridSpec, cost: f64) -> Result<Self, GridError> {
        Self::new(spec, vec![cost; spec.len()])
    }

    pub fn spec(&self) -> &GridSpec {
        &self.spec
    }

    pub fn rows(&self) -> u32 {
        self.spec.rows
    }

    pub fn cols(&self) -> u32 {
        self.spec.cols
    }

    pub fn cells(&self) -> &[f64] {
        &self.cells
    }

    pub fn get(&self, row: u32, col: u32) -> f64 {
        self.cells[row as usize * self.spec.cols as usize + col as usize]
    }

    pub fn set(&mut self, row: u32, col: u32, cost: f64) {
        assert!(cost.is_finite() && cost >= 0.0, "invalid cell cost {cost}");
        self.cells[row as usize * self.spec.cols as usize + col as usize] = cost;
    }

    pub fn min_cost(&self) -> f64 {
        self.cells.iter().copied().fold(f64::INFINITY, f64::min)
    }

    /// Multiplies every cell by `k`.
    pub fn scaled(&self, k: f64) -> Result<Self, GridError> {
        Self::new(self.spec, self.cells.iter().map(|c| c * k).collect())
    }
}

/// Averages each `cell_mm`x`cell_mm` pixel block of `bev` into one cell.
pub fn pool(bev: &CostMap, spec: &GridSpec) -> Result<CostGrid, GridError> {
    spec.check_fits(bev.width(), bev.height())?;
    let cell = spec.cell_mm as usize;
    let cols = spec.cols as usize;
    let width = bev.width() as usize;
    let [ox, oy] = spec.origin.map(|v| v as usize);
    let data = bev.data();

    // Accumulate one band of cells at a time, streaming whole pixel rows.
    let mut cells = Vec::with_capacity(spec.len());
    let mut sums = vec![0.0f64; cols];
    let area = (cell * cell) as f64;
    for r in 0..spec.rows as usize {
        sums.iter_mut().for_each(|s| *s = 0.0);
        for y in oy + r * cell..oy + (r + 1) * cell {
            let row = &data[y * width + ox..y * width + ox + cols * cell];
            for (sum, block) in sums.iter_mut().zip(row.chunks_exact(cell)) {
                *sum += block.iter().sum::<f64>();
            }
        }
        cells.extend(sums.iter().map(|s| s / area));
    }
    CostGrid::new(*spec, cells)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::raster::Space;
    use proptest::prelude::*;

    #[test]
    fn uniform_map_pools_to_constant() {
        let bev = CostMap::filled(300, 250, 5.0, Space::Bev);
        let grid = pool(&bev, &GridSpec::new(2, 3, 100)).unwrap();
        assert_eq!(grid.cells(), &[5.0; 6]);
    }

    #[test]
    fn half_split_two_by_two() {
        let data: Vec<f64> = (0..200 * 200)
            .map(|i| if i % 200 < 100 { 1.0 } else { 3.0 })
            .collect();
        let bev = CostMap::new(200, 200, data, Space::Bev).unwrap();
        let grid = pool(&bev, &GridSpec::new(2, 2, 100)).unwrap();
        assert_eq!(grid.cells(), &[1.0, 3.0, 1.0, 3.0]);
    }

    #[test]
    fn rejects_grid_exceeding_map() {
        let bev = CostMap::filled(1999, 1900, 1.0, Space::Bev);
        assert!(matches!(
            pool(&bev, &GridSpec::default()),
            Err(GridError::DoesNotFit { .. })
        ));
        let bev = CostMap::filled(2000, 1900, 1.0, Space::Bev);
        assert!(pool(&bev, &GridSpec::default()).is_ok());
        assert!(pool(&bev, &GridSpec::default().with_origin(0, 1)).is_err());
        assert!(matches!(
            pool(&bev, &GridSpec::new(0, 2, 100)),
            Err(GridError::EmptySpec { .. })
        ));
    }

    #[test]
    fn json_layout() {
        let grid = CostGrid::new(GridSpec::new(1, 2, 100), vec![1.0, 2.5]).unwrap();
        let text = serde_json::to_string(&grid).unwrap();
        assert_eq!(
            text,
            r#"{"rows":1,"cols":2,"cell_mm":100,"cells":[1.0,2.5]}"#
        );
        let back: CostGrid = serde_json::from_str(&text).unwrap();
        assert_eq!(back, grid);
        assert!(serde_json::from_str::<CostGrid>(
            r#"{"rows":1,"cols":2,"cell_mm":100,"cells":[1.0]}"#
        )
        .is_err());
    }

    /// Scalar double loop, independent of the streaming implementation.
    fn brute_force(bev: &CostMap, spec: &GridSpec) -> Vec<f64> {
        let mut out = Vec::new();
        for r in 0..spec.rows {
            for c in 0..spec.cols {
                let mut sum = 0.0;
                let mut n = 0.0;
                for dy in 0..spec.cell_mm {
                    for dx in 0..spec.cell_mm {
                        sum += bev.get(
                            spec.origin[0] + c * spec.cell_mm + dx,
                            spec.origin[1] + r * spec.cell_mm + dy,
                        );
                        n += 1.0;
                    }
                }
                out.push(sum / n);
            }
        }
        out
    }

    fn map_and_spec() -> impl Strategy<Value = (CostMap, GridSpec)> {
        (1u32..5, 1u32..5, 1u32..12, 0u32..7, 0u32..7).prop_flat_map(
            |(rows, cols, cell, ox, oy)| {
                let w = ox + cols * cell + 3;
                let h = oy + rows * cell + 2;
                proptest::collection::vec(0.0f64..100.0, (w * h) as usize).prop_map(move |d| {
                    (
                        CostMap::new(w, h, d, Space::Bev).unwrap(),
                        GridSpec::new(rows, cols, cell).with_origin(ox, oy),
                    )
                })
            },
        )
    }

    proptest! {
        #[test]
        fn matches_brute_force((bev, spec) in map_and_spec()) {
            let grid = pool(&bev, &spec).unwrap();
            let expect = brute_force(&bev, &spec);
            for (a, b) in grid.cells().iter().zip(&expect) {
                prop_assert!((a - b).abs() <= 1e-9);
            }
        }

        #[test]
        fn cells_bounded_by_covered_pixels((bev, spec) in map_and_spec()) {
            let grid = pool(&bev, &spec).unwrap();
            let mut lo = f64::INFINITY;
            let mut hi = f64::NEG_INFINITY;
            for y in spec.origin[1]..spec.origin[1] + spec.rows * spec.cell_mm {
                for x in spec.origin[0]..spec.origin[0] + spec.cols * spec.cell_mm {
                    lo = lo.min(bev.get(x, y));
                    hi = hi.max(bev.get(x, y));
                }
            }
            for &c in grid.cells() {
                prop_assert!(c >= lo - 1e-12 && c <= hi + 1e-12);
            }
        }

        #[test]
        fn shifting_origin_by_a_cell_shifts_content((bev, spec) in map_and_spec()) {
            prop_assume!(spec.cols >= 2);
            let base = pool(&bev, &spec).unwrap();
            let mut shifted_spec = spec;
            shifted_spec.origin[0] += spec.cell_mm;
            shifted_spec.cols -= 1;
            let shifted = pool(&bev, &shifted_spec).unwrap();
            for r in 0..shifted_spec.rows {
                for c in 0..shifted_spec.cols {
                    prop_assert_eq!(shifted.get(r, c), base.get(r, c + 1));
                }
            }
        }
    }
}
