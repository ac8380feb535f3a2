//! Ground-plane grid and the cell rasters defined on it.
//!
//! Cells are addressed as `(row, col)`; rows run along world `y`, columns
//! along world `x`. Storage is row-major, so cell `(r, c)` lives at index
//! `r * width + c`.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Metres per cell used when a grid is generated without an explicit size.
pub const DEFAULT_CELL_SIZE_M: f64 = 0.5;

/// Regular ground-plane grid in world metres.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct GroundGrid {
    #[serde(rename = "h")]
    pub height_cells: usize,
    #[serde(rename = "w")]
    pub width_cells: usize,
    pub cell_size_m: f64,
    /// World coordinates of the outer corner of cell `(0, 0)`.
    #[serde(default)]
    pub origin: [f64; 2],
}

impl GroundGrid {
    pub fn new(height_cells: usize, width_cells: usize, cell_size_m: f64, origin: [f64; 2]) -> Result<Self> {
        let grid = Self {
            height_cells,
            width_cells,
            cell_size_m,
            origin,
        };
        grid.validate()?;
        Ok(grid)
    }

    pub fn validate(&self) -> Result<()> {
        if self.height_cells == 0 || self.width_cells == 0 {
            return Err(Error::InvalidGrid(format!(
                "dimensions must be positive, got {}x{}",
                self.height_cells, self.width_cells
            )));
        }
        if !(self.cell_size_m.is_finite() && self.cell_size_m > 0.0) {
            return Err(Error::InvalidGrid(format!(
                "cell_size_m must be positive, got {}",
                self.cell_size_m
            )));
        }
        if !(self.origin[0].is_finite() && self.origin[1].is_finite()) {
            return Err(Error::InvalidGrid("origin must be finite".into()));
        }
        Ok(())
    }

    /// Area of the scene region in cells (`h * w`).
    pub fn n_cells(&self) -> usize {
        self.height_cells * self.width_cells
    }

    #[inline]
    pub fn index(&self, row: usize, col: usize) -> usize {
        row * self.width_cells + col
    }

    #[inline]
    pub fn row_col(&self, index: usize) -> (usize, usize) {
        (index / self.width_cells, index % self.width_cells)
    }

    /// World position of the centre of cell `(row, col)`.
    #[inline]
    pub fn cell_center(&self, row: usize, col: usize) -> [f64; 2] {
        [
            self.origin[0] + (col as f64 + 0.5) * self.cell_size_m,
            self.origin[1] + (row as f64 + 0.5) * self.cell_size_m,
        ]
    }

    /// World extent as `([x_min, y_min], [x_max, y_max])`.
    pub fn extent(&self) -> ([f64; 2], [f64; 2]) {
        (
            self.origin,
            [
                self.origin[0] + self.width_cells as f64 * self.cell_size_m,
                self.origin[1] + self.height_cells as f64 * self.cell_size_m,
            ],
        )
    }

    /// Cell containing a world point. Points on or beyond the boundary clamp
    /// to the nearest in-bounds cell.
    pub fn cell_of(&self, point: [f64; 2]) -> (usize, usize) {
        let col = ((point[0] - self.origin[0]) / self.cell_size_m).floor();
        let row = ((point[1] - self.origin[1]) / self.cell_size_m).floor();
        let clamp = |v: f64, n: usize| -> usize {
            if v.is_nan() || v < 0.0 {
                0
            } else {
                (v as usize).min(n - 1)
            }
        };
        (clamp(row, self.height_cells), clamp(col, self.width_cells))
    }

    pub fn mask(&self, value: bool) -> Mask {
        Raster::filled(self.height_cells, self.width_cells, value)
    }

    pub fn field(&self, value: f64) -> Field {
        Raster::filled(self.height_cells, self.width_cells, value)
    }

    pub fn check_shape<T>(&self, raster: &Raster<T>) -> Result<()> {
        if raster.height() != self.height_cells || raster.width() != self.width_cells {
            return Err(Error::ShapeMismatch {
                expected_h: self.height_cells,
                expected_w: self.width_cells,
                got_h: raster.height(),
                got_w: raster.width(),
            });
        }
        Ok(())
    }
}

/// Dense row-major raster over a ground grid.
#[derive(Clone, Debug, PartialEq)]
pub struct Raster<T> {
    height: usize,
    width: usize,
    data: Vec<T>,
}

/// Boolean cell mask (FOV footprints, visible regions, binarized maps).
pub type Mask = Raster<bool>;

/// Real-valued cell field (distance fields, density values).
pub type Field = Raster<f64>;

impl<T: Clone> Raster<T> {
    pub fn filled(height: usize, width: usize, value: T) -> Self {
        Self {
            height,
            width,
            data: vec![value; height * width],
        }
    }
}

impl<T> Raster<T> {
    pub fn from_vec(height: usize, width: usize, data: Vec<T>) -> Result<Self> {
        if data.len() != height * width {
            return Err(Error::InvalidGrid(format!(
                "raster of {height}x{width} needs {} values, got {}",
                height * width,
                data.len()
            )));
        }
        Ok(Self { height, width, data })
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn data(&self) -> &[T] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [T] {
        &mut self.data
    }

    pub fn into_vec(self) -> Vec<T> {
        self.data
    }

    pub fn get(&self, row: usize, col: usize) -> &T {
        &self.data[row * self.width + col]
    }

    pub fn set(&mut self, row: usize, col: usize, value: T) {
        self.data[row * self.width + col] = value;
    }

    pub fn same_shape<U>(&self, other: &Raster<U>) -> bool {
        self.height == other.height && self.width == other.width
    }

    fn require_same_shape<U>(&self, other: &Raster<U>) -> Result<()> {
        if self.same_shape(other) {
            Ok(())
        } else {
            Err(Error::ShapeMismatch {
                expected_h: self.height,
                expected_w: self.width,
                got_h: other.height,
                got_w: other.width,
            })
        }
    }
}

impl Mask {
    pub fn count(&self) -> usize {
        self.data.iter().filter(|&&b| b).count()
    }

    pub fn any(&self) -> bool {
        self.data.iter().any(|&b| b)
    }

    /// Indices of true cells in row-major order.
    pub fn true_indices(&self) -> impl Iterator<Item = usize> + '_ {
        self.data.iter().enumerate().filter_map(|(i, &b)| b.then_some(i))
    }

    pub fn or(&self, other: &Mask) -> Result<Mask> {
        self.require_same_shape(other)?;
        let mut out = self.clone();
        out.or_assign_unchecked(other);
        Ok(out)
    }

    pub fn and(&self, other: &Mask) -> Result<Mask> {
        self.require_same_shape(other)?;
        let data = self.data.iter().zip(&other.data).map(|(&a, &b)| a && b).collect();
        Ok(Mask {
            height: self.height,
            width: self.width,
            data,
        })
    }

    pub fn or_assign(&mut self, other: &Mask) -> Result<()> {
        self.require_same_shape(other)?;
        self.or_assign_unchecked(other);
        Ok(())
    }

    fn or_assign_unchecked(&mut self, other: &Mask) {
        for (a, &b) in self.data.iter_mut().zip(&other.data) {
            *a |= b;
        }
    }

    pub fn is_subset_of(&self, other: &Mask) -> bool {
        self.same_shape(other) && self.data.iter().zip(&other.data).all(|(&a, &b)| !a || b)
    }

    /// Row-major run lengths, alternating false/true and starting with false.
    pub fn runs(&self) -> Vec<u32> {
        let mut runs = Vec::new();
        let mut current = false;
        let mut length = 0u32;
        for &b in &self.data {
            if b == current {
                length += 1;
            } else {
                runs.push(length);
                current = b;
                length = 1;
            }
        }
        runs.push(length);
        runs
    }

    pub fn from_runs(height: usize, width: usize, runs: &[u32]) -> Result<Mask> {
        let mut data = Vec::with_capacity(height * width);
        let mut value = false;
        for &run in runs {
            data.extend(std::iter::repeat_n(value, run as usize));
            value = !value;
        }
        Raster::from_vec(height, width, data)
    }
}

impl Field {
    pub fn sum(&self) -> f64 {
        self.data.iter().sum()
    }

    /// Mean taken as an offset from the minimum, so a constant field has a
    /// mean exactly equal to its value.
    pub fn mean(&self) -> f64 {
        if self.data.is_empty() {
            return 0.0;
        }
        let min = self.data.iter().copied().fold(f64::INFINITY, f64::min);
        let excess: f64 = self.data.iter().map(|v| v - min).sum();
        min + excess / self.data.len() as f64
    }

    pub fn max_value(&self) -> f64 {
        self.data.iter().copied().fold(f64::NEG_INFINITY, f64::max)
    }

    /// Sum of the field over the true cells of `mask`.
    pub fn sum_over(&self, mask: &Mask) -> Result<f64> {
        self.require_same_shape(mask)?;
        Ok(self
            .data
            .iter()
            .zip(&mask.data)
            .filter_map(|(&v, &m)| m.then_some(v))
            .sum())
    }

    /// Zero every cell outside `mask`.
    pub fn masked(mut self, mask: &Mask) -> Result<Field> {
        self.require_same_shape(mask)?;
        for (v, &m) in self.data.iter_mut().zip(&mask.data) {
            if !m {
                *v = 0.0;
            }
        }
        Ok(self)
    }

    pub fn scale(&mut self, factor: f64) {
        for v in &mut self.data {
            *v *= factor;
        }
    }
}

/// Serde adapter storing a mask as `{"h", "w", "runs"}` run-length encoding.
pub mod rle {
    use super::Mask;
    use serde::{Deserialize, Deserializer, Serialize, Serializer};

    #[derive(Serialize, Deserialize)]
    struct Encoded {
        h: usize,
        w: usize,
        runs: Vec<u32>,
    }

    pub fn serialize<S: Serializer>(mask: &Mask, serializer: S) -> Result<S::Ok, S::Error> {
        Encoded {
            h: mask.height(),
            w: mask.width(),
            runs: mask.runs(),
        }
        .serialize(serializer)
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(deserializer: D) -> Result<Mask, D::Error> {
        let enc = Encoded::deserialize(deserializer)?;
        Mask::from_runs(enc.h, enc.w, &enc.runs).map_err(serde::de::Error::custom)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rejects_degenerate_grids() {
        assert!(GroundGrid::new(0, 4, 0.5, [0.0, 0.0]).is_err());
        assert!(GroundGrid::new(4, 4, 0.0, [0.0, 0.0]).is_err());
        assert!(GroundGrid::new(4, 4, -1.0, [0.0, 0.0]).is_err());
        assert!(GroundGrid::new(1, 1, 0.5, [0.0, 0.0]).is_ok());
    }

    #[test]
    fn cell_lookup_clamps_boundary_points() {
        let grid = GroundGrid::new(10, 20, 0.5, [1.0, 2.0]).unwrap();
        assert_eq!(grid.cell_of([1.0, 2.0]), (0, 0));
        assert_eq!(grid.cell_of([11.0, 7.0]), (9, 19));
        assert_eq!(grid.cell_of([-5.0, 100.0]), (9, 0));
        assert_eq!(grid.cell_of([1.26, 2.74]), (1, 0));
        let c = grid.cell_center(3, 4);
        assert_eq!(grid.cell_of(c), (3, 4));
    }

    #[test]
    fn run_length_encoding_round_trips() {
        let mut m = Mask::filled(3, 4, false);
        m.set(0, 0, true);
        m.set(1, 2, true);
        m.set(1, 3, true);
        m.set(2, 0, true);
        assert_eq!(m.runs(), vec![0, 1, 5, 3, 3]);
        assert_eq!(Mask::from_runs(3, 4, &m.runs()).unwrap(), m);
        assert!(Mask::from_runs(3, 4, &[2, 2]).is_err());
    }

    #[test]
    fn mask_algebra_checks_shapes() {
        let a = Mask::filled(2, 2, true);
        let b = Mask::filled(2, 3, false);
        assert!(a.or(&b).is_err());
        assert!(a.and(&b).is_err());
        assert!(!a.is_subset_of(&b));
    }
}
