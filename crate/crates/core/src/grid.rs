//! Dense row-major `f64` grid shared by the objectness, policy, and search code.

use alloc::vec;
use alloc::vec::Vec;

/// Row-major grid of `f64` values. Coordinates are `(row, col)` with the
/// origin at the top-left corner, row increasing downward.
#[derive(Debug, Clone, PartialEq)]
pub struct Grid {
    width: usize,
    height: usize,
    data: Vec<f64>,
}

impl Grid {
    pub fn zeros(width: usize, height: usize) -> Self {
        assert!(width > 0 && height > 0, "grid dimensions must be positive");
        Grid {
            width,
            height,
            data: vec![0.0; width * height],
        }
    }

    pub fn filled(width: usize, height: usize, value: f64) -> Self {
        let mut g = Grid::zeros(width, height);
        g.data.fill(value);
        g
    }

    pub fn from_rows(rows: &[&[f64]]) -> Self {
        let height = rows.len();
        let width = rows[0].len();
        let mut g = Grid::zeros(width, height);
        for (r, row) in rows.iter().enumerate() {
            assert_eq!(row.len(), width, "ragged rows");
            g.data[r * width..(r + 1) * width].copy_from_slice(row);
        }
        g
    }

    pub fn from_vec(width: usize, height: usize, data: Vec<f64>) -> Self {
        assert_eq!(data.len(), width * height);
        Grid {
            width,
            height,
            data,
        }
    }

    #[inline]
    pub fn width(&self) -> usize {
        self.width
    }

    #[inline]
    pub fn height(&self) -> usize {
        self.height
    }

    #[inline]
    pub fn get(&self, row: usize, col: usize) -> f64 {
        debug_assert!(row < self.height && col < self.width);
        self.data[row * self.width + col]
    }

    #[inline]
    pub fn set(&mut self, row: usize, col: usize, value: f64) {
        debug_assert!(row < self.height && col < self.width);
        self.data[row * self.width + col] = value;
    }

    pub fn values(&self) -> &[f64] {
        &self.data
    }

    pub fn values_mut(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn sum(&self) -> f64 {
        self.data.iter().sum()
    }

    pub fn max(&self) -> f64 {
        self.data.iter().copied().fold(f64::NEG_INFINITY, f64::max)
    }

    /// Fills the window `[row, row+d) x [col, col+d)` with `value`.
    pub fn fill_window(&mut self, row: usize, col: usize, d: usize, value: f64) {
        assert!(row + d <= self.height && col + d <= self.width);
        for r in row..row + d {
            self.data[r * self.width + col..r * self.width + col + d].fill(value);
        }
    }

    /// Integral of the grid, viewed as piecewise constant over unit cells,
    /// over the real-valued rectangle `[r0, r1) x [c0, c1)` (rows x cols).
    /// The rectangle is clipped to the grid extent. Partially overlapped
    /// cells contribute their value weighted by the overlap area.
    pub fn integrate_rect(&self, r0: f64, r1: f64, c0: f64, c1: f64) -> f64 {
        let r0 = r0.max(0.0);
        let c0 = c0.max(0.0);
        let r1 = r1.min(self.height as f64);
        let c1 = c1.min(self.width as f64);
        if r1 <= r0 || c1 <= c0 {
            return 0.0;
        }
        let row_lo = r0 as usize;
        let row_hi = libm::ceil(r1) as usize;
        let col_lo = c0 as usize;
        let col_hi = libm::ceil(c1) as usize;
        let mut total = 0.0;
        for row in row_lo..row_hi.min(self.height) {
            let row_overlap = overlap_1d(row as f64, row as f64 + 1.0, r0, r1);
            if row_overlap == 0.0 {
                continue;
            }
            for col in col_lo..col_hi.min(self.width) {
                let col_overlap = overlap_1d(col as f64, col as f64 + 1.0, c0, c1);
                if col_overlap > 0.0 {
                    total += self.get(row, col) * row_overlap * col_overlap;
                }
            }
        }
        total
    }
}

#[inline]
fn overlap_1d(a0: f64, a1: f64, b0: f64, b1: f64) -> f64 {
    (a1.min(b1) - a0.max(b0)).max(0.0)
}
