//! Gridded population surface m(x): point lookup and per-region mass.

mod ascii;

use serde::{Deserialize, Serialize};

use crate::error::{Result, SdaError};
use crate::geometry::{BBox, Point, Region};

pub use ascii::{read_ascii_grid, write_ascii_grid, AsciiGrid};

/// Geometry of a regular grid. Row 0 is the top row, matching ESRI ASCII order.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GridSpec {
    /// Lower-left corner of the lower-left cell.
    pub origin: Point,
    pub cell_size: f64,
    pub ncols: usize,
    pub nrows: usize,
}

impl GridSpec {
    pub fn new(origin: Point, cell_size: f64, ncols: usize, nrows: usize) -> Result<Self> {
        if !(cell_size > 0.0) || !cell_size.is_finite() {
            return Err(SdaError::Config(format!("cell size must be positive, got {cell_size}")));
        }
        if ncols == 0 || nrows == 0 {
            return Err(SdaError::Config("grid must have at least one row and column".into()));
        }
        Ok(GridSpec {
            origin,
            cell_size,
            ncols,
            nrows,
        })
    }

    /// Smallest grid with the given spacing covering `bbox`, anchored at its lower-left corner.
    pub fn covering(bbox: BBox, cell_size: f64) -> Result<Self> {
        let ncols = ((bbox.width() / cell_size) - 1e-9).ceil().max(1.0) as usize;
        let nrows = ((bbox.height() / cell_size) - 1e-9).ceil().max(1.0) as usize;
        GridSpec::new(Point::new(bbox.min_x, bbox.min_y), cell_size, ncols, nrows)
    }

    pub fn len(&self) -> usize {
        self.ncols * self.nrows
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn extent(&self) -> BBox {
        BBox {
            min_x: self.origin.x,
            min_y: self.origin.y,
            max_x: self.origin.x + self.ncols as f64 * self.cell_size,
            max_y: self.origin.y + self.nrows as f64 * self.cell_size,
        }
    }

    pub fn cell_area(&self) -> f64 {
        self.cell_size * self.cell_size
    }

    /// Center of the cell at (row, col), row 0 at the top.
    pub fn cell_center(&self, row: usize, col: usize) -> Point {
        Point::new(
            self.origin.x + (col as f64 + 0.5) * self.cell_size,
            self.origin.y + ((self.nrows - 1 - row) as f64 + 0.5) * self.cell_size,
        )
    }

    /// Center of the cell with row-major index `idx`.
    pub fn center_of(&self, idx: usize) -> Point {
        self.cell_center(idx / self.ncols, idx % self.ncols)
    }

    /// Cell holding `p`. Cells are half-open toward the upper right, so a point on
    /// an interior edge belongs to the cell above/right of it; points on the
    /// outer top/right edge fall into the last row/column.
    pub fn locate(&self, p: Point) -> Option<(usize, usize)> {
        let fx = (p.x - self.origin.x) / self.cell_size;
        let fy = (p.y - self.origin.y) / self.cell_size;
        if !(fx >= 0.0 && fy >= 0.0 && fx <= self.ncols as f64 && fy <= self.nrows as f64) {
            return None;
        }
        let col = (fx.floor() as usize).min(self.ncols - 1);
        let row_up = (fy.floor() as usize).min(self.nrows - 1);
        Some((self.nrows - 1 - row_up, col))
    }

    /// Row-major indices of cells whose centers fall inside `bbox`.
    pub fn cells_in_bbox(&self, bbox: &BBox) -> impl Iterator<Item = usize> + '_ {
        let cs = self.cell_size;
        let col_lo = (((bbox.min_x - self.origin.x) / cs - 0.5).ceil().max(0.0)) as usize;
        let col_hi = (((bbox.max_x - self.origin.x) / cs - 0.5).floor()).min(self.ncols as f64 - 1.0);
        let up_lo = (((bbox.min_y - self.origin.y) / cs - 0.5).ceil().max(0.0)) as usize;
        let up_hi = (((bbox.max_y - self.origin.y) / cs - 0.5).floor()).min(self.nrows as f64 - 1.0);
        let (col_hi, up_hi) = (col_hi as i64, up_hi as i64);
        let nrows = self.nrows;
        let ncols = self.ncols;
        (up_lo as i64..=up_hi).flat_map(move |up| {
            let row = nrows - 1 - up as usize;
            (col_lo as i64..=col_hi).map(move |col| row * ncols + col as usize)
        })
    }
}

/// How raster values convert to population mass.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub enum ValueUnits {
    /// Persons per cell (default; gridded population products ship this way).
    #[default]
    CountPerCell,
    /// Persons per square metre; mass multiplies by cell area.
    DensityPerSquareMetre,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PopulationRaster {
    grid: GridSpec,
    values: Vec<f64>,
    nodata: Option<f64>,
    units: ValueUnits,
}

impl PopulationRaster {
    /// `values` is row-major with row 0 at the top.
    pub fn new(grid: GridSpec, values: Vec<f64>, nodata: Option<f64>) -> Result<Self> {
        if values.len() != grid.len() {
            return Err(SdaError::Shape(format!(
                "raster has {} values for a {}x{} grid",
                values.len(),
                grid.nrows,
                grid.ncols
            )));
        }
        let mut missing = 0usize;
        for &v in &values {
            if Some(v) == nodata || v.is_nan() {
                missing += 1;
            } else if !(v >= 0.0) || !v.is_finite() {
                return Err(SdaError::Domain(format!("raster value {v} is negative or non-finite")));
            }
        }
        if missing > 0 {
            log::warn!("population raster has {missing} nodata cells; treating them as zero");
        }
        Ok(PopulationRaster {
            grid,
            values,
            nodata,
            units: ValueUnits::CountPerCell,
        })
    }

    /// Constant-valued raster.
    pub fn constant(grid: GridSpec, value: f64) -> Result<Self> {
        PopulationRaster::new(grid, vec![value; grid.len()], None)
    }

    pub fn with_units(mut self, units: ValueUnits) -> Self {
        self.units = units;
        self
    }

    pub fn grid(&self) -> &GridSpec {
        &self.grid
    }

    pub fn units(&self) -> ValueUnits {
        self.units
    }

    pub fn nodata(&self) -> Option<f64> {
        self.nodata
    }

    pub fn raw_values(&self) -> &[f64] {
        &self.values
    }

    /// Value at a row-major cell index with nodata mapped to zero.
    pub fn cell_value(&self, idx: usize) -> f64 {
        let v = self.values[idx];
        if Some(v) == self.nodata || v.is_nan() {
            0.0
        } else {
            v
        }
    }

    /// Population mass held by a cell.
    pub fn cell_mass(&self, idx: usize) -> f64 {
        match self.units {
            ValueUnits::CountPerCell => self.cell_value(idx),
            ValueUnits::DensityPerSquareMetre => self.cell_value(idx) * self.grid.cell_area(),
        }
    }

    /// Density at `p`: the value of the cell containing it.
    pub fn sample(&self, p: Point) -> Result<f64> {
        let (row, col) = self
            .grid
            .locate(p)
            .ok_or(SdaError::OutOfBounds { x: p.x, y: p.y })?;
        Ok(self.cell_value(row * self.grid.ncols + col))
    }

    /// Maximum value over cells intersecting `bbox`; an upper bound of the
    /// density anywhere inside it.
    pub fn max_in(&self, bbox: &BBox) -> f64 {
        let g = &self.grid;
        let cs = g.cell_size;
        let clamp_col = |f: f64| (f.floor().max(0.0) as usize).min(g.ncols - 1);
        let clamp_up = |f: f64| (f.floor().max(0.0) as usize).min(g.nrows - 1);
        let c0 = clamp_col((bbox.min_x - g.origin.x) / cs);
        let c1 = clamp_col((bbox.max_x - g.origin.x) / cs);
        let u0 = clamp_up((bbox.min_y - g.origin.y) / cs);
        let u1 = clamp_up((bbox.max_y - g.origin.y) / cs);
        let mut best = 0.0f64;
        for up in u0..=u1 {
            let row = g.nrows - 1 - up;
            for col in c0..=c1 {
                best = best.max(self.cell_value(row * g.ncols + col));
            }
        }
        best
    }

    /// m_i: summed mass of cells whose centers lie in `region`.
    pub fn region_mass(&self, region: &Region) -> Result<f64> {
        let mass: f64 = self
            .grid
            .cells_in_bbox(&region.bbox())
            .filter(|&idx| region.contains(self.grid.center_of(idx)))
            .map(|idx| self.cell_mass(idx))
            .sum();
        if mass > 0.0 {
            Ok(mass)
        } else {
            Err(SdaError::DegenerateOffset {
                region: region.id().to_string(),
            })
        }
    }

    pub fn scaled(&self, factor: f64) -> Result<Self> {
        let values = self
            .values
            .iter()
            .map(|&v| if Some(v) == self.nodata { v } else { v * factor })
            .collect();
        Ok(PopulationRaster::new(self.grid, values, self.nodata)?.with_units(self.units))
    }

    pub fn to_ascii(&self) -> AsciiGrid {
        AsciiGrid {
            grid: self.grid,
            values: self.values.clone(),
            nodata: self.nodata,
        }
    }

    pub fn from_ascii(grid: AsciiGrid) -> Result<Self> {
        PopulationRaster::new(grid.grid, grid.values, grid.nodata)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn grid(ncols: usize, nrows: usize, cs: f64) -> GridSpec {
        GridSpec::new(Point::new(0.0, 0.0), cs, ncols, nrows).unwrap()
    }

    #[test]
    fn sample_examples() {
        let r = PopulationRaster::constant(grid(4, 3, 10.0), 3.0).unwrap();
        assert_eq!(r.sample(Point::new(17.0, 22.0)).unwrap(), 3.0);

        let r = PopulationRaster::new(grid(2, 2, 1.0), vec![1.0, 2.0, 3.0, 4.0], None).unwrap();
        // row 0 (top) col 1
        assert_eq!(r.sample(Point::new(1.5, 1.5)).unwrap(), 2.0);
        assert_eq!(r.sample(Point::new(0.5, 0.5)).unwrap(), 3.0);
        // interior edge point belongs to the upper-right cell
        assert_eq!(r.sample(Point::new(1.0, 1.0)).unwrap(), 2.0);
        assert_eq!(r.sample(Point::new(1.0, 0.5)).unwrap(), 4.0);
        assert!(matches!(r.sample(Point::new(-0.1, 0.5)), Err(SdaError::OutOfBounds { .. })));
        assert!(r.sample(Point::new(2.5, 0.5)).is_err());
    }

    #[test]
    fn nodata_maps_to_zero() {
        let r = PopulationRaster::new(grid(2, 1, 1.0), vec![-9999.0, 5.0], Some(-9999.0)).unwrap();
        assert_eq!(r.sample(Point::new(0.5, 0.5)).unwrap(), 0.0);
        assert!(PopulationRaster::new(grid(2, 1, 1.0), vec![-1.0, 5.0], None).is_err());
    }

    #[test]
    fn region_mass_examples() {
        let r = PopulationRaster::constant(grid(20, 20, 1.0), 1.0)
            .unwrap()
            .with_units(ValueUnits::DensityPerSquareMetre);
        let reg = Region::rect("a", 0.0, 0.0, 10.0, 10.0).unwrap();
        assert_eq!(r.region_mass(&reg).unwrap(), 100.0);

        let mut vals = vec![0.0; 100];
        vals[..10].fill(4.0);
        let r = PopulationRaster::new(grid(10, 10, 1.0), vals, None).unwrap();
        let bottom = Region::rect("b", 0.0, 0.0, 10.0, 5.0).unwrap();
        assert!(matches!(r.region_mass(&bottom), Err(SdaError::DegenerateOffset { .. })));
    }

    #[test]
    fn half_region_cell_center_oracle() {
        // value 2 on 100 unit cells, region covers the bottom 50
        let g = grid(10, 10, 1.0);
        let r = PopulationRaster::constant(g, 2.0).unwrap();
        let region = Region::rect("h", 0.0, 0.0, 10.0, 5.0).unwrap();
        let oracle: f64 = (0..g.len())
            .filter(|&i| region.contains(g.center_of(i)))
            .map(|_| 2.0)
            .sum();
        assert_eq!(oracle, 100.0);
        assert_eq!(r.region_mass(&region).unwrap(), oracle);
    }

    #[test]
    fn cells_in_bbox_matches_brute_force() {
        let g = GridSpec::new(Point::new(3.0, -2.0), 2.5, 7, 5).unwrap();
        let bb = BBox {
            min_x: 5.0,
            min_y: 0.0,
            max_x: 13.75,
            max_y: 7.5,
        };
        let mut fast: Vec<usize> = g.cells_in_bbox(&bb).collect();
        fast.sort();
        let brute: Vec<usize> = (0..g.len()).filter(|&i| bb.contains(g.center_of(i))).collect();
        assert_eq!(fast, brute);
    }

    proptest! {
        #[test]
        fn mass_additive_and_linear(split in 1usize..9, factor in 0.5f64..4.0) {
            let g = grid(10, 10, 1.0);
            let vals: Vec<f64> = (0..100).map(|i| 1.0 + (i % 7) as f64).collect();
            let r = PopulationRaster::new(g, vals, None).unwrap();
            let whole = Region::rect("w", 0.0, 0.0, 10.0, 10.0).unwrap();
            let left = Region::rect("l", 0.0, 0.0, split as f64, 10.0).unwrap();
            let right = Region::rect("r", split as f64, 0.0, 10.0, 10.0).unwrap();
            let total = r.region_mass(&whole).unwrap();
            prop_assert!((r.region_mass(&left).unwrap() + r.region_mass(&right).unwrap() - total).abs() < 1e-9);
            let doubled = r.scaled(2.0).unwrap();
            prop_assert_eq!(doubled.region_mass(&whole).unwrap(), 2.0 * total);
            let scaled = r.scaled(factor).unwrap();
            prop_assert!((scaled.region_mass(&whole).unwrap() - factor * total).abs() < 1e-9 * total);
        }
    }
}
