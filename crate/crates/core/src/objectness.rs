//! Objectness maps and the numerical kernels behind glimpse selection:
//! rasterization, area-average downsampling, Gaussian box densities,
//! integral images with O(1) window sums, Gaussian kernels, convolution,
//! and binary cross-entropy scoring.

use alloc::vec;
use alloc::vec::Vec;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use crate::geometry::Scene;
use crate::grid::Grid;

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum ObjectnessError {
    #[error("map value {value} at ({row}, {col}) outside [0, 1]")]
    ValueOutOfRange { row: usize, col: usize, value: OrderedF64 },
    #[error("dimension mismatch: {0}x{1} vs {2}x{3}")]
    DimensionMismatch(usize, usize, usize, usize),
    #[error("window [{row}, {row}+{d}) x [{col}, {col}+{d}) outside {width}x{height} raster")]
    WindowOutOfRange { row: usize, col: usize, d: usize, width: usize, height: usize },
}

/// f64 wrapper so the error enum can derive Eq.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct OrderedF64(pub f64);
impl Eq for OrderedF64 {}
impl core::fmt::Display for OrderedF64 {
    fn fmt(&self, f: &mut core::fmt::Formatter<'_>) -> core::fmt::Result {
        write!(f, "{}", self.0)
    }
}

/// Full-resolution binary occupancy mask.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct BinaryMask {
    width: usize,
    height: usize,
    data: Vec<u8>,
}

impl BinaryMask {
    pub fn zeros(width: usize, height: usize) -> Self {
        BinaryMask {
            width,
            height,
            data: vec![0; width * height],
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
    pub fn get(&self, row: usize, col: usize) -> u8 {
        self.data[row * self.width + col]
    }

    #[inline]
    pub fn set(&mut self, row: usize, col: usize, value: u8) {
        debug_assert!(value <= 1);
        self.data[row * self.width + col] = value;
    }

    pub fn count_set(&self) -> u64 {
        self.data.iter().map(|&v| v as u64).sum()
    }

    pub fn to_grid(&self) -> Grid {
        Grid::from_vec(
            self.width,
            self.height,
            self.data.iter().map(|&v| v as f64).collect(),
        )
    }
}

/// Low-resolution objectness prior with entries in `[0, 1]`.
///
/// Working buffers inside the glimpse policy may hold the negative penalty
/// value; those are plain [`Grid`]s, never `GistMap`s.
#[derive(Debug, Clone, PartialEq)]
pub struct GistMap(Grid);

impl GistMap {
    pub fn new(grid: Grid) -> Result<Self, ObjectnessError> {
        for row in 0..grid.height() {
            for col in 0..grid.width() {
                let value = grid.get(row, col);
                if !(0.0..=1.0).contains(&value) {
                    return Err(ObjectnessError::ValueOutOfRange {
                        row,
                        col,
                        value: OrderedF64(value),
                    });
                }
            }
        }
        Ok(GistMap(grid))
    }

    pub fn grid(&self) -> &Grid {
        &self.0
    }

    pub fn into_grid(self) -> Grid {
        self.0
    }

    #[inline]
    pub fn width(&self) -> usize {
        self.0.width()
    }

    #[inline]
    pub fn height(&self) -> usize {
        self.0.height()
    }

    #[inline]
    pub fn get(&self, row: usize, col: usize) -> f64 {
        self.0.get(row, col)
    }

    pub fn sum(&self) -> f64 {
        self.0.sum()
    }
}

/// Summed-area table: entry `(i, j)` is the sum of the source over
/// `i' <= i, j' <= j`.
#[derive(Debug, Clone, PartialEq)]
pub struct IntegralImage(Grid);

impl IntegralImage {
    #[inline]
    pub fn width(&self) -> usize {
        self.0.width()
    }

    #[inline]
    pub fn height(&self) -> usize {
        self.0.height()
    }

    #[inline]
    pub fn get(&self, row: usize, col: usize) -> f64 {
        self.0.get(row, col)
    }

    /// `get` with a virtual zero row/column at index -1.
    #[inline]
    fn at(&self, row: isize, col: isize) -> f64 {
        if row < 0 || col < 0 {
            0.0
        } else {
            self.0.get(row as usize, col as usize)
        }
    }
}

/// Normalized 2D Gaussian kernel: `sigma = dim / 4`, continuous center at
/// `(dim - 1) / 2`, weights summing to 1.
#[derive(Debug, Clone, PartialEq)]
pub struct GaussianKernel {
    pub dim: usize,
    pub sigma: f64,
    weights: Grid,
}

impl GaussianKernel {
    #[inline]
    pub fn weight(&self, row: usize, col: usize) -> f64 {
        self.weights.get(row, col)
    }

    pub fn weights(&self) -> &Grid {
        &self.weights
    }
}

/// Rasterizes the union of object boxes: 1 where any box covers the pixel.
pub fn rasterize_binary_mask(scene: &Scene) -> BinaryMask {
    let mut mask = BinaryMask::zeros(scene.width as usize, scene.height as usize);
    for obj in &scene.objects {
        let b = &obj.bbox;
        for row in b.y..b.bottom() {
            for col in b.x..b.right() {
                mask.set(row as usize, col as usize, 1);
            }
        }
    }
    mask
}

/// Area-average pooling of a binary mask onto a `d_gist x d_gist` grid.
/// Each gist cell holds the covered fraction of its source footprint; when
/// the source dimensions are not multiples of `d_gist`, cell boundaries are
/// real-valued and partially overlapped pixels contribute fractionally.
pub fn downsample_mask(mask: &BinaryMask, d_gist: usize) -> GistMap {
    GistMap(downsample_grid(&mask.to_grid(), d_gist))
}

/// Area-average pooling of an arbitrary grid onto `d_gist x d_gist`.
pub fn downsample_grid(src: &Grid, d_gist: usize) -> Grid {
    assert!(d_gist >= 1 && d_gist <= src.width() && d_gist <= src.height());
    let mut out = Grid::zeros(d_gist, d_gist);
    if src.width() % d_gist == 0 && src.height() % d_gist == 0 {
        // Divisible fast path: exact integer block means.
        let bw = src.width() / d_gist;
        let bh = src.height() / d_gist;
        let inv_area = 1.0 / (bw * bh) as f64;
        for gr in 0..d_gist {
            for gc in 0..d_gist {
                let mut sum = 0.0;
                for row in gr * bh..(gr + 1) * bh {
                    for col in gc * bw..(gc + 1) * bw {
                        sum += src.get(row, col);
                    }
                }
                out.set(gr, gc, sum * inv_area);
            }
        }
    } else {
        let sh = src.height() as f64 / d_gist as f64;
        let sw = src.width() as f64 / d_gist as f64;
        for gr in 0..d_gist {
            for gc in 0..d_gist {
                let r0 = gr as f64 * sh;
                let c0 = gc as f64 * sw;
                let mass = src.integrate_rect(r0, r0 + sh, c0, c0 + sw);
                out.set(gr, gc, mass / (sh * sw));
            }
        }
    }
    out
}

/// Builds an objectness map from box annotations alone: one axis-aligned
/// Gaussian per box with per-axis sigma = extent/4 in gist pixels and peak
/// value 1 at the gist pixel containing the box center; overlapping boxes
/// combine by elementwise max.
pub fn gaussian_bbox_density(scene: &Scene, d_gist: usize) -> GistMap {
    let ax = d_gist as f64 / scene.width as f64;
    let ay = d_gist as f64 / scene.height as f64;
    let mut out = Grid::zeros(d_gist, d_gist);
    for obj in &scene.objects {
        let (cx, cy) = obj.bbox.center();
        let peak_col = (((cx * ax) as usize).min(d_gist - 1)) as isize;
        let peak_row = (((cy * ay) as usize).min(d_gist - 1)) as isize;
        let sx = (obj.bbox.w as f64 * ax / 4.0).max(1e-6);
        let sy = (obj.bbox.h as f64 * ay / 4.0).max(1e-6);
        // Evaluation limited to the +-4 sigma footprint around the peak.
        let rx = (libm::ceil(4.0 * sx) as isize).max(1);
        let ry = (libm::ceil(4.0 * sy) as isize).max(1);
        for row in (peak_row - ry).max(0)..=(peak_row + ry).min(d_gist as isize - 1) {
            for col in (peak_col - rx).max(0)..=(peak_col + rx).min(d_gist as isize - 1) {
                let dr = (row - peak_row) as f64;
                let dc = (col - peak_col) as f64;
                let v = libm::exp(-(dr * dr / (2.0 * sy * sy) + dc * dc / (2.0 * sx * sx)));
                let (r, c) = (row as usize, col as usize);
                if v > out.get(r, c) {
                    out.set(r, c, v);
                }
            }
        }
    }
    GistMap(out)
}

/// Simulates an imperfect objectness predictor: Gaussian blur, additive
/// zero-mean Gaussian noise, injected false-positive blobs, then a clip to
/// `[0, 1]`. `fp_rate` is the expected fraction of map area covered by
/// injected blobs. Fully determined by `seed`.
pub fn degrade(map: &GistMap, blur_sigma: f64, noise_std: f64, fp_rate: f64, seed: u64) -> GistMap {
    assert!(blur_sigma >= 0.0 && noise_std >= 0.0 && (0.0..=1.0).contains(&fp_rate));
    let mut work = map.grid().clone();
    if blur_sigma > 0.0 {
        work = gaussian_blur(&work, blur_sigma);
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    if noise_std > 0.0 {
        let normal = Normal::new(0.0, noise_std).unwrap();
        for v in work.values_mut() {
            *v += normal.sample(&mut rng);
        }
    }
    if fp_rate > 0.0 {
        const BLOB_SIGMA: f64 = 1.0;
        const BLOB_RADIUS: isize = 2;
        let footprint = (2 * BLOB_RADIUS + 1).pow(2) as f64;
        let cells = (work.width() * work.height()) as f64;
        let n_blobs = libm::round(fp_rate * cells / footprint) as usize;
        for _ in 0..n_blobs {
            let row = rng.random_range(0..work.height()) as isize;
            let col = rng.random_range(0..work.width()) as isize;
            let amp: f64 = rng.random_range(0.3..1.0);
            for r in (row - BLOB_RADIUS).max(0)..=(row + BLOB_RADIUS).min(work.height() as isize - 1) {
                for c in (col - BLOB_RADIUS).max(0)..=(col + BLOB_RADIUS).min(work.width() as isize - 1) {
                    let d2 = ((r - row).pow(2) + (c - col).pow(2)) as f64;
                    let v = amp * libm::exp(-d2 / (2.0 * BLOB_SIGMA * BLOB_SIGMA));
                    let cur = work.get(r as usize, c as usize);
                    work.set(r as usize, c as usize, cur + v);
                }
            }
        }
    }
    for v in work.values_mut() {
        *v = v.clamp(0.0, 1.0);
    }
    GistMap(work)
}

/// Separable Gaussian blur with zero padding; kernel radius = ceil(3 sigma).
pub fn gaussian_blur(src: &Grid, sigma: f64) -> Grid {
    assert!(sigma > 0.0);
    let radius = libm::ceil(3.0 * sigma) as isize;
    let mut kernel = Vec::with_capacity((2 * radius + 1) as usize);
    for i in -radius..=radius {
        kernel.push(libm::exp(-(i * i) as f64 / (2.0 * sigma * sigma)));
    }
    let norm: f64 = kernel.iter().sum();
    for k in &mut kernel {
        *k /= norm;
    }

    let (w, h) = (src.width(), src.height());
    let mut horiz = Grid::zeros(w, h);
    for row in 0..h {
        for col in 0..w {
            let mut acc = 0.0;
            for (ki, &k) in kernel.iter().enumerate() {
                let c = col as isize + ki as isize - radius;
                if c >= 0 && (c as usize) < w {
                    acc += src.get(row, c as usize) * k;
                }
            }
            horiz.set(row, col, acc);
        }
    }
    let mut out = Grid::zeros(w, h);
    for row in 0..h {
        for col in 0..w {
            let mut acc = 0.0;
            for (ki, &k) in kernel.iter().enumerate() {
                let r = row as isize + ki as isize - radius;
                if r >= 0 && (r as usize) < h {
                    acc += horiz.get(r as usize, col) * k;
                }
            }
            out.set(row, col, acc);
        }
    }
    out
}

/// Inclusive summed-area table of `map`.
pub fn integral_image(map: &Grid) -> IntegralImage {
    let (w, h) = (map.width(), map.height());
    let mut out = Grid::zeros(w, h);
    for row in 0..h {
        let mut row_sum = 0.0;
        for col in 0..w {
            row_sum += map.get(row, col);
            let above = if row > 0 { out.get(row - 1, col) } else { 0.0 };
            out.set(row, col, row_sum + above);
        }
    }
    IntegralImage(out)
}

/// Sum of the source over the `d x d` window with top-left `(r, c)`, via the
/// four-corner identity.
pub fn window_sum(s: &IntegralImage, r: usize, c: usize, d: usize) -> Result<f64, ObjectnessError> {
    if d == 0 || r + d > s.height() || c + d > s.width() {
        return Err(ObjectnessError::WindowOutOfRange {
            row: r,
            col: c,
            d,
            width: s.width(),
            height: s.height(),
        });
    }
    let (ri, ci, di) = (r as isize, c as isize, d as isize);
    Ok(s.at(ri + di - 1, ci + di - 1) - s.at(ri - 1, ci + di - 1) - s.at(ri + di - 1, ci - 1)
        + s.at(ri - 1, ci - 1))
}

/// `d x d` Gaussian kernel with sigma = d/4, normalized to unit sum.
pub fn gaussian_kernel(d: usize) -> GaussianKernel {
    assert!(d >= 1);
    let sigma = d as f64 / 4.0;
    let center = (d as f64 - 1.0) / 2.0;
    let mut weights = Grid::zeros(d, d);
    let mut total = 0.0;
    for row in 0..d {
        for col in 0..d {
            let dr = row as f64 - center;
            let dc = col as f64 - center;
            let v = libm::exp(-(dr * dr + dc * dc) / (2.0 * sigma * sigma));
            weights.set(row, col, v);
            total += v;
        }
    }
    for v in weights.values_mut() {
        *v /= total;
    }
    GaussianKernel {
        dim: d,
        sigma,
        weights,
    }
}

/// Same-size 2D convolution with zero padding; the kernel anchor is its
/// integer center `(dim - 1) / 2`.
pub fn convolve(map: &Grid, kernel: &GaussianKernel) -> Grid {
    let d = kernel.dim;
    assert!(d <= map.width() && d <= map.height());
    let anchor = (d - 1) / 2;
    let (w, h) = (map.width(), map.height());
    let mut out = Grid::zeros(w, h);
    for row in 0..h {
        for col in 0..w {
            let mut acc = 0.0;
            for kr in 0..d {
                let r = row as isize + kr as isize - anchor as isize;
                if r < 0 || r as usize >= h {
                    continue;
                }
                for kc in 0..d {
                    let c = col as isize + kc as isize - anchor as isize;
                    if c >= 0 && (c as usize) < w {
                        acc += map.get(r as usize, c as usize) * kernel.weight(kr, kc);
                    }
                }
            }
            out.set(row, col, acc);
        }
    }
    out
}

/// Binary cross-entropy between prediction and (possibly soft) target,
/// summed over all pixels. Predictions are clamped to `[eps, 1-eps]` with
/// eps = 1e-7 before the logs.
pub fn bce(pred: &GistMap, target: &GistMap) -> Result<f64, ObjectnessError> {
    if pred.width() != target.width() || pred.height() != target.height() {
        return Err(ObjectnessError::DimensionMismatch(
            pred.width(),
            pred.height(),
            target.width(),
            target.height(),
        ));
    }
    const EPS: f64 = 1e-7;
    let mut loss = 0.0;
    for (p, y) in pred.grid().values().iter().zip(target.grid().values()) {
        let p = p.clamp(EPS, 1.0 - EPS);
        loss -= y * libm::log(p) + (1.0 - y) * libm::log(1.0 - p);
    }
    Ok(loss)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::{BBox, SceneObject};
    use proptest::prelude::*;

    fn scene_with(boxes: &[(u32, u32, u32, u32)]) -> Scene {
        Scene {
            width: 64,
            height: 64,
            objects: boxes
                .iter()
                .enumerate()
                .map(|(i, &(x, y, w, h))| SceneObject {
                    id: i as u32,
                    class_id: 0,
                    bbox: BBox::new(x, y, w, h),
                })
                .collect(),
        }
    }

    #[test]
    fn rasterize_empty_scene_all_zeros() {
        let mask = rasterize_binary_mask(&scene_with(&[]));
        assert_eq!(mask.count_set(), 0);
    }

    #[test]
    fn rasterize_single_box_exact_pixels() {
        let mask = rasterize_binary_mask(&scene_with(&[(0, 0, 10, 10)]));
        assert_eq!(mask.count_set(), 100);
        assert_eq!(mask.get(9, 9), 1);
        assert_eq!(mask.get(10, 9), 0);
        assert_eq!(mask.get(9, 10), 0);
    }

    #[test]
    fn rasterize_overlapping_boxes_stays_binary() {
        let mask = rasterize_binary_mask(&scene_with(&[(0, 0, 10, 10), (5, 5, 10, 10)]));
        assert_eq!(mask.count_set(), 100 + 100 - 25);
        assert!(mask.data.iter().all(|&v| v <= 1));
    }

    #[test]
    fn downsample_all_ones_preserved() {
        let mut mask = BinaryMask::zeros(8, 8);
        for v in &mut mask.data {
            *v = 1;
        }
        let gist = downsample_mask(&mask, 4);
        assert!(gist.grid().values().iter().all(|&v| v == 1.0));
    }

    #[test]
    fn downsample_hand_cases() {
        let mut mask = BinaryMask::zeros(4, 4);
        for row in 0..2 {
            for col in 0..2 {
                mask.set(row, col, 1);
            }
        }
        let gist = downsample_mask(&mask, 2);
        assert_eq!(gist.grid().values(), &[1.0, 0.0, 0.0, 0.0]);

        let mut single = BinaryMask::zeros(4, 4);
        single.set(3, 2, 1);
        let gist = downsample_mask(&single, 2);
        assert_eq!(gist.get(1, 1), 0.25);
        assert_eq!(gist.sum(), 0.25);
    }

    #[test]
    fn downsample_mass_conservation_divisible() {
        let mut rng = rand::rngs::StdRng::seed_from_u64(3);
        let mut mask = BinaryMask::zeros(32, 32);
        for v in &mut mask.data {
            *v = rng.random_range(0..2u8);
        }
        let set = mask.count_set() as f64;
        let gist = downsample_mask(&mask, 8);
        let block_area = (32.0 / 8.0) * (32.0 / 8.0);
        assert!((gist.sum() * block_area - set).abs() < 1e-9);
    }

    #[test]
    fn gaussian_bbox_density_peaks_at_centers() {
        let scene = scene_with(&[(8, 16, 8, 8), (40, 40, 16, 8)]);
        // gist = scene resolution so the center pixel is exact
        let map = gaussian_bbox_density(&scene, 64);
        assert_eq!(map.get(20, 12), 1.0);
        assert_eq!(map.get(44, 48), 1.0);
        assert!(map.grid().values().iter().all(|&v| (0.0..=1.0).contains(&v)));
        assert!((map.grid().max() - 1.0).abs() < 1e-15);
    }

    #[test]
    fn gaussian_bbox_density_empty_scene() {
        let map = gaussian_bbox_density(&scene_with(&[]), 16);
        assert_eq!(map.sum(), 0.0);
    }

    #[test]
    fn degrade_identity_and_determinism() {
        let map = downsample_mask(&rasterize_binary_mask(&scene_with(&[(0, 0, 16, 16)])), 16);
        let same = degrade(&map, 0.0, 0.0, 0.0, 9);
        assert_eq!(same.grid().values(), map.grid().values());

        let a = degrade(&map, 1.0, 0.05, 0.02, 123);
        let b = degrade(&map, 1.0, 0.05, 0.02, 123);
        assert_eq!(a.grid().values(), b.grid().values());
        assert!(a.grid().values().iter().all(|&v| (0.0..=1.0).contains(&v)));
        let c = degrade(&map, 1.0, 0.05, 0.02, 124);
        assert_ne!(a.grid().values(), c.grid().values());
    }

    #[test]
    fn integral_image_hand_cases() {
        let ones = Grid::filled(2, 2, 1.0);
        let s = integral_image(&ones);
        assert_eq!(
            [s.get(0, 0), s.get(0, 1), s.get(1, 0), s.get(1, 1)],
            [1.0, 2.0, 2.0, 4.0]
        );

        let zeros = Grid::zeros(3, 3);
        assert!(integral_image(&zeros).0.values().iter().all(|&v| v == 0.0));

        let mut step = Grid::zeros(3, 3);
        step.set(0, 0, 1.0);
        assert!(integral_image(&step).0.values().iter().all(|&v| v == 1.0));
    }

    #[test]
    fn window_sum_hand_cases() {
        let ones = Grid::filled(4, 4, 1.0);
        let s = integral_image(&ones);
        assert_eq!(window_sum(&s, 0, 0, 2).unwrap(), 4.0);

        let m = Grid::from_rows(&[&[1.0, 2.0], &[3.0, 4.0]]);
        let s = integral_image(&m);
        assert_eq!(window_sum(&s, 0, 0, 2).unwrap(), 10.0);
        assert_eq!(window_sum(&s, 1, 1, 1).unwrap(), 4.0);
        assert!(window_sum(&s, 1, 1, 2).is_err());
    }

    #[test]
    fn gaussian_kernel_degenerate_and_normalized() {
        let k = gaussian_kernel(1);
        assert_eq!(k.weight(0, 0), 1.0);
        for d in 1..=33 {
            let k = gaussian_kernel(d);
            let sum: f64 = k.weights.values().iter().sum();
            assert!((sum - 1.0).abs() < 1e-12, "d={d} sum={sum}");
            for r in 0..d {
                for c in 0..d {
                    assert_eq!(k.weight(r, c), k.weight(d - 1 - r, c));
                    assert_eq!(k.weight(r, c), k.weight(r, d - 1 - c));
                }
            }
        }
    }

    #[test]
    fn convolve_zero_and_impulse() {
        let k = gaussian_kernel(3);
        let zero = Grid::zeros(8, 8);
        assert!(convolve(&zero, &k).values().iter().all(|&v| v == 0.0));

        let mut delta = Grid::zeros(9, 9);
        delta.set(4, 4, 1.0);
        let out = convolve(&delta, &k);
        for kr in 0..3 {
            for kc in 0..3 {
                // correlation of a symmetric kernel: response centered at the impulse
                assert!((out.get(3 + kr, 3 + kc) - k.weight(kr, kc)).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn convolve_uniform_border_attenuated() {
        let k = gaussian_kernel(3);
        let uniform = Grid::filled(8, 8, 0.5);
        let out = convolve(&uniform, &k);
        assert!((out.get(4, 4) - 0.5).abs() < 1e-12);
        assert!(out.get(0, 0) < 0.5);
    }

    #[test]
    fn bce_hand_cases() {
        let one = GistMap::new(Grid::filled(1, 1, 1.0)).unwrap();
        let half = GistMap::new(Grid::filled(1, 1, 0.5)).unwrap();
        let v = bce(&half, &one).unwrap();
        assert!((v - core::f64::consts::LN_2).abs() < 1e-12);

        let perfect = bce(&one, &one).unwrap();
        assert!(perfect <= 2.0 * 1e-7);

        let eps_pred = GistMap::new(Grid::filled(1, 1, 0.0)).unwrap();
        let v = bce(&eps_pred, &one).unwrap();
        assert!((v - -libm::log(1e-7)).abs() < 1e-6);

        let wide = GistMap::new(Grid::zeros(2, 2)).unwrap();
        assert!(bce(&wide, &one).is_err());
    }

    #[test]
    fn bce_minimized_at_target() {
        for &target in &[0.0, 1.0] {
            let t = GistMap::new(Grid::filled(1, 1, target)).unwrap();
            let mut best = (f64::INFINITY, 0.0);
            for i in 1..100 {
                let p = i as f64 / 100.0;
                let loss = bce(&GistMap::new(Grid::filled(1, 1, p)).unwrap(), &t).unwrap();
                if loss < best.0 {
                    best = (loss, p);
                }
            }
            let expected = if target == 0.0 { 0.01 } else { 0.99 };
            assert_eq!(best.1, expected);
        }
    }

    #[test]
    fn gistmap_rejects_out_of_range() {
        assert!(GistMap::new(Grid::filled(2, 2, 1.5)).is_err());
        assert!(GistMap::new(Grid::filled(2, 2, -0.1)).is_err());
    }

    proptest! {
        // Eq. 3/4 cross-check: O(1) window sums against the naive double loop.
        #[test]
        fn window_sum_matches_naive(seed in 0u64..500) {
            let mut rng = rand::rngs::StdRng::seed_from_u64(seed);
            let w = rng.random_range(4..=64usize);
            let h = rng.random_range(4..=64usize);
            let mut m = Grid::zeros(w, h);
            for v in m.values_mut() {
                *v = rng.random_range(0.0..1.0);
            }
            let s = integral_image(&m);
            for &d in &[1usize, 2, 3, 5, 8] {
                if d > w || d > h {
                    continue;
                }
                for _ in 0..8 {
                    let r = rng.random_range(0..=h - d);
                    let c = rng.random_range(0..=w - d);
                    let mut naive = 0.0;
                    for rr in r..r + d {
                        for cc in c..c + d {
                            naive += m.get(rr, cc);
                        }
                    }
                    prop_assert!((window_sum(&s, r, c, d).unwrap() - naive).abs() < 1e-9);
                }
            }
        }

        #[test]
        fn integral_image_monotone_for_nonnegative(seed in 0u64..50) {
            let mut rng = rand::rngs::StdRng::seed_from_u64(seed);
            let mut m = Grid::zeros(16, 16);
            for v in m.values_mut() {
                *v = rng.random_range(0.0..1.0);
            }
            let s = integral_image(&m);
            for row in 0..16 {
                for col in 1..16 {
                    prop_assert!(s.get(row, col) >= s.get(row, col - 1));
                    prop_assert!(s.get(col, row) >= s.get(col - 1, row));
                }
            }
        }

        #[test]
        fn convolve_preserves_mass_away_from_border(seed in 0u64..20) {
            let mut rng = rand::rngs::StdRng::seed_from_u64(seed);
            let mut m = Grid::zeros(16, 16);
            // mass strictly inside the kernel radius
            for row in 4..12 {
                for col in 4..12 {
                    m.set(row, col, rng.random_range(0.0..1.0));
                }
            }
            let k = gaussian_kernel(5);
            let out = convolve(&m, &k);
            prop_assert!((out.sum() - m.sum()).abs() < 1e-9);

            let mut edge = Grid::zeros(16, 16);
            edge.set(0, 0, 1.0);
            prop_assert!(convolve(&edge, &k).sum() <= edge.sum());
        }
    }
}
