//! Glimpse selection: the greedy objectness-guided policy, the baseline
//! policies, coverage accounting, and the stopping rules.

use alloc::vec;
use alloc::vec::Vec;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::geometry::GistGeometry;
use crate::grid::Grid;
use crate::objectness::{convolve, gaussian_kernel, integral_image, window_sum, GistMap, IntegralImage};

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum PolicyError {
    #[error("policy kind {0:?} requires an objectness map")]
    MissingObjectness(PolicyKind),
    #[error("policy kind {0:?} requires a gist intensity image")]
    MissingGistImage(PolicyKind),
    #[error("glimpse dim {d} exceeds gist raster {width}x{height}")]
    GlimpseTooLarge { d: usize, width: usize, height: usize },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PolicyKind {
    Unet,
    UnetFixed,
    Grid,
    GridFixed,
    Random,
    Entropy,
}

impl PolicyKind {
    pub fn name(&self) -> &'static str {
        match self {
            PolicyKind::Unet => "unet",
            PolicyKind::UnetFixed => "unet_fixed",
            PolicyKind::Grid => "grid",
            PolicyKind::GridFixed => "grid_fixed",
            PolicyKind::Random => "random",
            PolicyKind::Entropy => "entropy",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PolicyConfig {
    pub kind: PolicyKind,
    pub n_glimpse: usize,
    #[serde(default)]
    pub beta: f64,
    #[serde(default = "default_coverage_threshold")]
    pub coverage_threshold: f64,
    #[serde(default)]
    pub seed: u64,
}

fn default_coverage_threshold() -> f64 {
    0.95
}

impl PolicyConfig {
    pub fn new(kind: PolicyKind, n_glimpse: usize) -> Self {
        PolicyConfig {
            kind,
            n_glimpse,
            beta: 0.0,
            coverage_threshold: default_coverage_threshold(),
            seed: 0,
        }
    }
}

/// Ordered glimpse positions in gist space with per-step coverage of the
/// objectness map and per-step union area of the footprints.
#[derive(Debug, Clone, PartialEq)]
pub struct GlimpseSet {
    pub positions: Vec<(usize, usize)>,
    pub geom: GistGeometry,
    pub cum_coverage: Vec<f64>,
    pub cum_union_area: Vec<usize>,
}

impl GlimpseSet {
    /// Builds the set from raw positions, computing cumulative coverage of
    /// `pi` over the growing footprint union.
    pub fn with_coverage(positions: Vec<(usize, usize)>, geom: GistGeometry, pi: &GistMap) -> Self {
        let d = geom.d_glimpse_gist as usize;
        let total = pi.sum();
        let mut visited = vec![false; pi.width() * pi.height()];
        let mut covered = 0.0;
        let mut union_area = 0usize;
        let mut cum_coverage = Vec::with_capacity(positions.len());
        let mut cum_union_area = Vec::with_capacity(positions.len());
        for &(r, c) in &positions {
            debug_assert!(r + d <= pi.height() && c + d <= pi.width());
            for row in r..r + d {
                for col in c..c + d {
                    let idx = row * pi.width() + col;
                    if !visited[idx] {
                        visited[idx] = true;
                        covered += pi.get(row, col);
                        union_area += 1;
                    }
                }
            }
            cum_coverage.push(if total > 0.0 { covered / total } else { 1.0 });
            cum_union_area.push(union_area);
        }
        GlimpseSet {
            positions,
            geom,
            cum_coverage,
            cum_union_area,
        }
    }

    pub fn len(&self) -> usize {
        self.positions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.positions.is_empty()
    }

    /// Truncates the set at the first step where a stop condition fires,
    /// returning the per-step stop decisions (one per retained glimpse).
    pub fn apply_stopping(&mut self, cfg: &PolicyConfig, raster_area: usize) -> Vec<StopDecision> {
        let mut decisions = Vec::new();
        for step in 0..self.positions.len() {
            let decision = check_stop(
                self.cum_coverage[step],
                step + 1,
                self.cum_union_area[step],
                cfg,
                raster_area,
            );
            let stop = decision.stop;
            decisions.push(decision);
            if stop {
                self.positions.truncate(step + 1);
                self.cum_coverage.truncate(step + 1);
                self.cum_union_area.truncate(step + 1);
                break;
            }
        }
        decisions
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StopReason {
    FullImage,
    CoverageReached,
    BudgetExhausted,
    None,
}

impl StopReason {
    pub fn name(&self) -> &'static str {
        match self {
            StopReason::FullImage => "full_image",
            StopReason::CoverageReached => "coverage_reached",
            StopReason::BudgetExhausted => "budget_exhausted",
            StopReason::None => "none",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct StopDecision {
    pub stop: bool,
    pub reason: StopReason,
}

/// Top-left of the `d x d` window maximizing the window sum; ties broken by
/// smallest row, then smallest column.
pub fn select_max_objectness(s: &IntegralImage, d: usize) -> (usize, usize) {
    assert!(d >= 1 && d <= s.width() && d <= s.height());
    let mut best = (0usize, 0usize);
    let mut best_sum = f64::NEG_INFINITY;
    for r in 0..=s.height() - d {
        for c in 0..=s.width() - d {
            let sum = window_sum(s, r, c, d).unwrap();
            if sum > best_sum {
                best_sum = sum;
                best = (r, c);
            }
        }
    }
    best
}

/// Gaussian smoothing with border renormalization: the zero-padded
/// convolution divided by the in-bounds kernel mass at each cell, so a
/// uniform map stays exactly uniform near the raster edge. This is the
/// working map the greedy policy operates on.
pub fn smoothed_working_map(pi: &GistMap, d: usize) -> Grid {
    let kernel = gaussian_kernel(d);
    let mut out = convolve(pi.grid(), &kernel);
    let support = convolve(&Grid::filled(pi.width(), pi.height(), 1.0), &kernel);
    for (v, &s) in out.values_mut().iter_mut().zip(support.values()) {
        *v /= s;
    }
    out
}

/// Greedy objectness-guided selection: smooth the map with a Gaussian kernel
/// of the gist-space glimpse size, then repeatedly pick the max-sum window
/// and overwrite its footprint with the `beta` penalty.
pub fn unet_policy(pi: &GistMap, geom: &GistGeometry, cfg: &PolicyConfig) -> Result<GlimpseSet, PolicyError> {
    let d = geom.d_glimpse_gist as usize;
    if d > pi.width() || d > pi.height() {
        return Err(PolicyError::GlimpseTooLarge {
            d,
            width: pi.width(),
            height: pi.height(),
        });
    }
    let mut work = smoothed_working_map(pi, d);
    let mut positions = Vec::with_capacity(cfg.n_glimpse);
    for _ in 0..cfg.n_glimpse {
        let s = integral_image(&work);
        let (r, c) = select_max_objectness(&s, d);
        positions.push((r, c));
        work.fill_window(r, c, d, cfg.beta);
    }
    Ok(GlimpseSet::with_coverage(positions, *geom, pi))
}

/// Non-overlapping tile positions of size `d` covering the raster; the last
/// tile per axis is clamped flush to the edge when `d` does not divide the
/// dimension.
pub fn fixed_tile_positions(width: usize, height: usize, d: usize) -> Vec<(usize, usize)> {
    let axis = |dim: usize| -> Vec<usize> {
        let mut v: Vec<usize> = (0..dim / d).map(|i| i * d).collect();
        if dim % d != 0 {
            v.push(dim - d);
        }
        v
    };
    let rows = axis(height);
    let cols = axis(width);
    let mut out = Vec::with_capacity(rows.len() * cols.len());
    for &r in &rows {
        for &c in &cols {
            out.push((r, c));
        }
    }
    out
}

/// Dispatches over all glimpse selection policies. `pi` is required for the
/// objectness-guided kinds, `gist_image` for the entropy baseline.
pub fn run_policy(
    pi: Option<&GistMap>,
    gist_image: Option<&Grid>,
    geom: &GistGeometry,
    cfg: &PolicyConfig,
) -> Result<GlimpseSet, PolicyError> {
    let need_pi = || pi.ok_or(PolicyError::MissingObjectness(cfg.kind));
    let d = geom.d_glimpse_gist as usize;
    let dims_of = |w: usize, h: usize| -> Result<(), PolicyError> {
        if d > w || d > h {
            Err(PolicyError::GlimpseTooLarge { d, width: w, height: h })
        } else {
            Ok(())
        }
    };

    let positions: Vec<(usize, usize)> = match cfg.kind {
        PolicyKind::Unet => return unet_policy(need_pi()?, geom, cfg),
        PolicyKind::UnetFixed => {
            let pi = need_pi()?;
            dims_of(pi.width(), pi.height())?;
            let s = integral_image(pi.grid());
            let mut tiles = fixed_tile_positions(pi.width(), pi.height(), d);
            // stable sort keeps row-major order among ties
            tiles.sort_by(|&(ar, ac), &(br, bc)| {
                let sa = window_sum(&s, ar, ac, d).unwrap();
                let sb = window_sum(&s, br, bc, d).unwrap();
                sb.partial_cmp(&sa).unwrap()
            });
            tiles.truncate(cfg.n_glimpse);
            tiles
        }
        PolicyKind::Grid => {
            let pi = need_pi()?;
            dims_of(pi.width(), pi.height())?;
            let n = libm::ceil(libm::sqrt(cfg.n_glimpse as f64)) as usize;
            let axis = |dim: usize| -> Vec<usize> {
                if n <= 1 {
                    vec![0]
                } else {
                    (0..n)
                        .map(|i| libm::round(i as f64 * (dim - d) as f64 / (n - 1) as f64) as usize)
                        .collect()
                }
            };
            let rows = axis(pi.height());
            let cols = axis(pi.width());
            let mut out = Vec::new();
            'outer: for &r in &rows {
                for &c in &cols {
                    if out.len() == cfg.n_glimpse {
                        break 'outer;
                    }
                    out.push((r, c));
                }
            }
            out
        }
        PolicyKind::GridFixed => {
            let pi = need_pi()?;
            dims_of(pi.width(), pi.height())?;
            let mut tiles = fixed_tile_positions(pi.width(), pi.height(), d);
            let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
            tiles.shuffle(&mut rng);
            tiles.truncate(cfg.n_glimpse);
            tiles
        }
        PolicyKind::Random => {
            let pi = need_pi()?;
            dims_of(pi.width(), pi.height())?;
            let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
            (0..cfg.n_glimpse)
                .map(|_| {
                    (
                        rng.random_range(0..=pi.height() - d),
                        rng.random_range(0..=pi.width() - d),
                    )
                })
                .collect()
        }
        PolicyKind::Entropy => {
            let image = gist_image.ok_or(PolicyError::MissingGistImage(cfg.kind))?;
            dims_of(image.width(), image.height())?;
            let stride = (d / 2).max(1);
            let axis = |dim: usize| -> Vec<usize> {
                let mut v: Vec<usize> = (0..=dim - d).step_by(stride).collect();
                if *v.last().unwrap() != dim - d {
                    v.push(dim - d);
                }
                v
            };
            let mut windows: Vec<(usize, usize)> = Vec::new();
            for &r in &axis(image.height()) {
                for &c in &axis(image.width()) {
                    windows.push((r, c));
                }
            }
            // stable sort: lattice (lexicographic) order among entropy ties
            windows.sort_by(|&a, &b| {
                let ea = window_entropy(image, a.0, a.1, d);
                let eb = window_entropy(image, b.0, b.1, d);
                eb.partial_cmp(&ea).unwrap()
            });
            windows.truncate(cfg.n_glimpse);
            windows
        }
    };

    let coverage_map = match pi {
        Some(pi) => pi.clone(),
        // entropy without a pi: coverage is vacuous over a zero map
        None => GistMap::new(Grid::zeros(
            gist_image.unwrap().width(),
            gist_image.unwrap().height(),
        ))
        .unwrap(),
    };
    Ok(GlimpseSet::with_coverage(positions, *geom, &coverage_map))
}

/// Shannon entropy (nats) of a 16-bin intensity histogram over `[0, 1]`.
fn window_entropy(image: &Grid, r: usize, c: usize, d: usize) -> f64 {
    const BINS: usize = 16;
    let mut hist = [0usize; BINS];
    for row in r..r + d {
        for col in c..c + d {
            let v = image.get(row, col).clamp(0.0, 1.0);
            let bin = ((v * BINS as f64) as usize).min(BINS - 1);
            hist[bin] += 1;
        }
    }
    let total = (d * d) as f64;
    let mut entropy = 0.0;
    for &count in &hist {
        if count > 0 {
            let p = count as f64 / total;
            entropy -= p * libm::log(p);
        }
    }
    entropy
}

/// Objectness mass covered by the footprint union, as a fraction of the
/// total mass; 1.0 for an all-zero map.
pub fn coverage_fraction(glimpses: &GlimpseSet, pi: &GistMap) -> f64 {
    let d = glimpses.geom.d_glimpse_gist as usize;
    let total = pi.sum();
    if total == 0.0 {
        return 1.0;
    }
    let mut visited = vec![false; pi.width() * pi.height()];
    let mut covered = 0.0;
    for &(r, c) in &glimpses.positions {
        for row in r..r + d {
            for col in c..c + d {
                let idx = row * pi.width() + col;
                if !visited[idx] {
                    visited[idx] = true;
                    covered += pi.get(row, col);
                }
            }
        }
    }
    covered / total
}

/// Stop test, precedence full_image > coverage_reached > budget_exhausted.
pub fn check_stop(
    covered: f64,
    n_done: usize,
    union_area: usize,
    cfg: &PolicyConfig,
    raster_area: usize,
) -> StopDecision {
    if union_area >= raster_area {
        StopDecision {
            stop: true,
            reason: StopReason::FullImage,
        }
    } else if covered > cfg.coverage_threshold {
        StopDecision {
            stop: true,
            reason: StopReason::CoverageReached,
        }
    } else if n_done >= cfg.n_glimpse {
        StopDecision {
            stop: true,
            reason: StopReason::BudgetExhausted,
        }
    } else {
        StopDecision {
            stop: false,
            reason: StopReason::None,
        }
    }
}
