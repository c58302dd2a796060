//! Open-set target search over image tiles: embedding-similarity
//! likelihoods, objectness-weighted posteriors, global and local visiting
//! policies, and recall-vs-looks curves.

use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::geometry::{BBox, GistGeometry, Scene};
use crate::objectness::GistMap;
use crate::seed::{self, role};

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum OpensetError {
    #[error("embedding dimensions differ: {0} vs {1}")]
    DimensionMismatch(usize, usize),
    #[error("zero-norm vector in cosine similarity")]
    ZeroNorm,
    #[error("no ground-truth objects of class {0} in the scene")]
    NoTargets(u32),
    #[error("embedding provider failed on tile ({0}, {1}): {2}")]
    ProviderFailure(usize, usize, String),
}

/// One candidate search location: grid indices plus the vHR box it covers.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Tile {
    pub i: usize,
    pub j: usize,
    pub bbox: BBox,
}

/// Row-major tiling of the scene. The final row/column of tiles is clamped
/// flush to the raster edge when `tile_size` does not divide a dimension.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TileGrid {
    pub tile_size: u32,
    pub rows: usize,
    pub cols: usize,
    pub tiles: Vec<Tile>,
}

impl TileGrid {
    pub fn len(&self) -> usize {
        self.tiles.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tiles.is_empty()
    }

    fn index(&self, i: usize, j: usize) -> usize {
        i * self.cols + j
    }

    fn neighbors8(&self, idx: usize) -> impl Iterator<Item = usize> + '_ {
        let i = idx / self.cols;
        let j = idx % self.cols;
        (-1isize..=1).flat_map(move |di| {
            (-1isize..=1).filter_map(move |dj| {
                if di == 0 && dj == 0 {
                    return None;
                }
                let ni = i as isize + di;
                let nj = j as isize + dj;
                if ni < 0 || nj < 0 || ni as usize >= self.rows || nj as usize >= self.cols {
                    None
                } else {
                    Some(self.index(ni as usize, nj as usize))
                }
            })
        })
    }
}

/// The search target: its class (used only by the synthetic provider and
/// the recall oracle) and the exemplar's unit-norm embedding.
#[derive(Debug, Clone, PartialEq)]
pub struct TargetSpec {
    pub target_class: u32,
    pub embedding: Vec<f64>,
}

/// Abstract embedding source; implementations must be deterministic per
/// (input, seed) and return unit-norm vectors of a fixed dimension.
pub trait EmbeddingProvider {
    fn dimension(&self) -> usize;
    fn embed(&self, scene: &Scene, tile: &BBox) -> Result<Vec<f64>, String>;
}

/// Per-tile scores; `posterior = likelihood * prior` exactly.
#[derive(Debug, Clone, PartialEq)]
pub struct TileScore {
    pub i: usize,
    pub j: usize,
    pub likelihood: f64,
    pub prior: f64,
    pub posterior: f64,
}

/// Ordered tile visit sequence; always a permutation of all tiles.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SearchTrajectory {
    pub order: Vec<usize>,
    pub total_tiles: usize,
}

/// Recall after each look, with looks normalized by the total tile count.
#[derive(Debug, Clone, PartialEq)]
pub struct RecallCurve {
    /// (normalized looks, recall) per step, x = k / total_tiles
    pub points: Vec<(f64, f64)>,
}

impl RecallCurve {
    /// Riemann sum of recall over normalized looks (each step has width
    /// 1/total_tiles); in [0, 1].
    pub fn area_under(&self) -> f64 {
        if self.points.is_empty() {
            return 0.0;
        }
        self.points.iter().map(|&(_, r)| r).sum::<f64>() / self.points.len() as f64
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SearchKind {
    GMlMstr,
    GMapMstr,
    SlidingWindow,
    LocalTarget,
    LocalInitial,
    LocalCurrent,
}

impl SearchKind {
    pub fn name(&self) -> &'static str {
        match self {
            SearchKind::GMlMstr => "g_ml_mstr",
            SearchKind::GMapMstr => "g_map_mstr",
            SearchKind::SlidingWindow => "sliding_window",
            SearchKind::LocalTarget => "local_target",
            SearchKind::LocalInitial => "local_initial",
            SearchKind::LocalCurrent => "local_current",
        }
    }
}

/// Row-major tiling with stride = `tile_size`, clamping the final tile per
/// axis flush to the edge.
pub fn tile_image(width: u32, height: u32, tile_size: u32) -> TileGrid {
    assert!(tile_size >= 1 && width >= 1 && height >= 1);
    let axis = |dim: u32| -> Vec<u32> {
        if tile_size >= dim {
            return vec![0];
        }
        let mut v: Vec<u32> = (0..dim / tile_size).map(|k| k * tile_size).collect();
        if dim % tile_size != 0 {
            v.push(dim - tile_size);
        }
        v
    };
    let row_starts = axis(height);
    let col_starts = axis(width);
    let th = tile_size.min(height);
    let tw = tile_size.min(width);
    let mut tiles = Vec::with_capacity(row_starts.len() * col_starts.len());
    for (i, &y) in row_starts.iter().enumerate() {
        for (j, &x) in col_starts.iter().enumerate() {
            tiles.push(Tile {
                i,
                j,
                bbox: BBox::new(x, y, tw, th),
            });
        }
    }
    TileGrid {
        tile_size,
        rows: row_starts.len(),
        cols: col_starts.len(),
        tiles,
    }
}

/// Cosine similarity in [-1, 1].
pub fn cosine(u: &[f64], v: &[f64]) -> Result<f64, OpensetError> {
    if u.len() != v.len() {
        return Err(OpensetError::DimensionMismatch(u.len(), v.len()));
    }
    let dot: f64 = u.iter().zip(v).map(|(a, b)| a * b).sum();
    let nu = libm::sqrt(u.iter().map(|a| a * a).sum::<f64>());
    let nv = libm::sqrt(v.iter().map(|a| a * a).sum::<f64>());
    if nu == 0.0 || nv == 0.0 {
        return Err(OpensetError::ZeroNorm);
    }
    Ok((dot / (nu * nv)).clamp(-1.0, 1.0))
}

/// Cosine similarity of each tile's embedding to the target exemplar.
/// Also returns the tile embeddings for the local-search baselines.
pub fn likelihood_map(
    provider: &dyn EmbeddingProvider,
    scene: &Scene,
    grid: &TileGrid,
    target: &TargetSpec,
) -> Result<(Vec<f64>, Vec<Vec<f64>>), OpensetError> {
    if provider.dimension() != target.embedding.len() {
        return Err(OpensetError::DimensionMismatch(
            provider.dimension(),
            target.embedding.len(),
        ));
    }
    let mut likelihoods = Vec::with_capacity(grid.len());
    let mut embeddings = Vec::with_capacity(grid.len());
    for tile in &grid.tiles {
        let emb = provider
            .embed(scene, &tile.bbox)
            .map_err(|e| OpensetError::ProviderFailure(tile.i, tile.j, e))?;
        likelihoods.push(cosine(&emb, &target.embedding)?);
        embeddings.push(emb);
    }
    Ok((likelihoods, embeddings))
}

/// Area-weighted mean of the objectness map over each tile's footprint in
/// gist space; in [0, 1].
pub fn tile_prior(pi: &GistMap, grid: &TileGrid, geom: &GistGeometry) -> Vec<f64> {
    let alpha = geom.alpha;
    grid.tiles
        .iter()
        .map(|t| {
            let r0 = t.bbox.y as f64 * alpha;
            let r1 = t.bbox.bottom() as f64 * alpha;
            let c0 = t.bbox.x as f64 * alpha;
            let c1 = t.bbox.right() as f64 * alpha;
            let area = (r1 - r0) * (c1 - c0);
            if area > 0.0 {
                pi.grid().integrate_rect(r0, r1, c0, c1) / area
            } else {
                0.0
            }
        })
        .collect()
}

/// Elementwise product of likelihood and prior.
pub fn posterior_map(likelihood: &[f64], prior: &[f64]) -> Vec<f64> {
    debug_assert_eq!(likelihood.len(), prior.len());
    likelihood.iter().zip(prior).map(|(l, p)| l * p).collect()
}

/// Scores and embeddings feeding the search policies. `embeddings` are only
/// required by the local_initial/local_current baselines.
#[derive(Debug, Clone, PartialEq)]
pub struct SearchInputs<'a> {
    pub likelihood: &'a [f64],
    pub posterior: Option<&'a [f64]>,
    pub embeddings: Option<&'a [Vec<f64>]>,
}

/// Builds the full visit order for a policy. Every trajectory is a
/// permutation of all tiles; ties are broken by row-major index.
pub fn run_search(
    kind: SearchKind,
    grid: &TileGrid,
    inputs: &SearchInputs<'_>,
) -> Result<SearchTrajectory, OpensetError> {
    let n = grid.len();
    let order = match kind {
        SearchKind::SlidingWindow => (0..n).collect(),
        SearchKind::GMlMstr => rank_descending(inputs.likelihood),
        SearchKind::GMapMstr => {
            let p = inputs
                .posterior
                .ok_or(OpensetError::DimensionMismatch(0, n))?;
            rank_descending(p)
        }
        SearchKind::LocalTarget => local_search(grid, |idx, _current, _visited| {
            inputs.likelihood[idx]
        }),
        SearchKind::LocalInitial => {
            let emb = require_embeddings(inputs, n)?;
            let start = argmax(inputs.likelihood);
            let anchor = emb[start].clone();
            local_search(grid, move |idx, _current, _visited| {
                cosine(&emb[idx], &anchor).unwrap_or(-1.0)
            })
        }
        SearchKind::LocalCurrent => {
            let emb = require_embeddings(inputs, n)?;
            local_search(grid, move |idx, current, _visited| {
                cosine(&emb[idx], &emb[current]).unwrap_or(-1.0)
            })
        }
    };
    debug_assert_eq!(order.len(), n);
    Ok(SearchTrajectory {
        order,
        total_tiles: n,
    })
}

fn require_embeddings<'a>(
    inputs: &'a SearchInputs<'_>,
    n: usize,
) -> Result<&'a [Vec<f64>], OpensetError> {
    inputs
        .embeddings
        .filter(|e| e.len() == n)
        .ok_or(OpensetError::DimensionMismatch(0, n))
}

fn argmax(scores: &[f64]) -> usize {
    let mut best = 0;
    for i in 1..scores.len() {
        if scores[i] > scores[best] {
            best = i;
        }
    }
    best
}

fn rank_descending(scores: &[f64]) -> Vec<usize> {
    let mut idx: Vec<usize> = (0..scores.len()).collect();
    // stable sort keeps row-major order among ties
    idx.sort_by(|&a, &b| scores[b].partial_cmp(&scores[a]).unwrap());
    idx
}

/// Greedy local walk: start at the tile maximizing `score(idx, start)`,
/// repeatedly move to the unvisited 8-neighbor maximizing the criterion,
/// and jump to the best unvisited tile globally when the neighborhood is
/// exhausted. `score(candidate, current, visited_count)` is re-evaluated
/// each step so current-tile criteria stay accurate.
fn local_search<F>(grid: &TileGrid, score: F) -> Vec<usize>
where
    F: Fn(usize, usize, usize) -> f64,
{
    let n = grid.len();
    let mut visited = vec![false; n];
    // the walk starts at the globally best-scoring tile
    let mut current = {
        let mut best = 0;
        for idx in 1..n {
            if score(idx, 0, 0) > score(best, 0, 0) {
                best = idx;
            }
        }
        best
    };
    let mut order = Vec::with_capacity(n);
    visited[current] = true;
    order.push(current);
    while order.len() < n {
        let next_from = |candidates: &mut dyn Iterator<Item = usize>| -> Option<usize> {
            let mut best: Option<(usize, f64)> = None;
            for idx in candidates {
                if visited[idx] {
                    continue;
                }
                let s = score(idx, current, order.len());
                match best {
                    Some((_, bs)) if bs >= s => {}
                    _ => best = Some((idx, s)),
                }
            }
            best.map(|(idx, _)| idx)
        };
        let next = next_from(&mut grid.neighbors8(current))
            .or_else(|| next_from(&mut (0..n)))
            .expect("unvisited tile must exist");
        visited[next] = true;
        order.push(next);
        current = next;
    }
    order
}

/// Recall after each look under the landing rule: a target object counts as
/// recovered once its box center lies inside a visited tile.
pub fn recall_vs_looks(
    traj: &SearchTrajectory,
    scene: &Scene,
    grid: &TileGrid,
    target_class: u32,
) -> Result<RecallCurve, OpensetError> {
    let centers: Vec<(f64, f64)> = scene
        .objects
        .iter()
        .filter(|o| o.class_id == target_class)
        .map(|o| o.bbox.center())
        .collect();
    if centers.is_empty() {
        return Err(OpensetError::NoTargets(target_class));
    }
    let mut found = vec![false; centers.len()];
    let mut n_found = 0usize;
    let mut points = Vec::with_capacity(traj.order.len());
    for (k, &idx) in traj.order.iter().enumerate() {
        let tile = &grid.tiles[idx];
        for (ti, &(cx, cy)) in centers.iter().enumerate() {
            if !found[ti] && tile.bbox.contains_point(cx, cy) {
                found[ti] = true;
                n_found += 1;
            }
        }
        points.push((
            (k + 1) as f64 / traj.total_tiles as f64,
            n_found as f64 / centers.len() as f64,
        ));
    }
    Ok(RecallCurve { points })
}

/// Desk-scale embedding stand-in: per-class random unit prototypes plus a
/// background direction. A tile's embedding is the normalized sum of the
/// prototypes of objects intersecting it (weighted by the contained
/// fraction of each object), the weighted background vector, and seeded
/// Gaussian noise keyed to the tile position.
#[derive(Debug, Clone)]
pub struct SyntheticEmbedder {
    dim: usize,
    prototypes: Vec<Vec<f64>>,
    background: Vec<f64>,
    pub background_weight: f64,
    pub noise_std: f64,
    seed: u64,
}

impl SyntheticEmbedder {
    pub fn new(dim: usize, n_classes: usize, noise_std: f64, seed: u64) -> Self {
        assert!(dim >= 2);
        let prototypes = (0..n_classes)
            .map(|c| random_unit_vector(dim, seed::derive(seed, role::EMBED, c as u64)))
            .collect();
        let background = random_unit_vector(dim, seed::derive(seed, role::EMBED, u64::MAX));
        SyntheticEmbedder {
            dim,
            prototypes,
            background,
            background_weight: 0.5,
            noise_std,
            seed,
        }
    }

    pub fn prototype(&self, class_id: u32) -> &[f64] {
        &self.prototypes[class_id as usize]
    }

    /// Target exemplar: the class prototype perturbed by the same noise
    /// model as the tiles, renormalized.
    pub fn target_spec(&self, target_class: u32) -> TargetSpec {
        let mut v = self.prototypes[target_class as usize].clone();
        if self.noise_std > 0.0 {
            let noise_seed = seed::derive(self.seed, role::EMBED, 0xfeed_0000 | target_class as u64);
            let mut rng = ChaCha8Rng::seed_from_u64(noise_seed);
            let normal = Normal::new(0.0, self.noise_std).unwrap();
            for x in &mut v {
                *x += normal.sample(&mut rng);
            }
        }
        normalize(&mut v);
        TargetSpec {
            target_class,
            embedding: v,
        }
    }
}

impl EmbeddingProvider for SyntheticEmbedder {
    fn dimension(&self) -> usize {
        self.dim
    }

    fn embed(&self, scene: &Scene, tile: &BBox) -> Result<Vec<f64>, String> {
        let mut acc = vec![0.0; self.dim];
        for (k, b) in self.background.iter().enumerate() {
            acc[k] = self.background_weight * b;
        }
        for obj in &scene.objects {
            let inter = obj.bbox.intersection_area(tile);
            if inter == 0 {
                continue;
            }
            let weight = inter as f64 / obj.bbox.area() as f64;
            let proto = &self.prototypes[obj.class_id as usize];
            for (a, p) in acc.iter_mut().zip(proto) {
                *a += weight * p;
            }
        }
        if self.noise_std > 0.0 {
            let stream = ((tile.x as u64) << 32) | tile.y as u64;
            let mut rng = ChaCha8Rng::seed_from_u64(seed::derive(self.seed, role::EMBED, stream));
            let normal = Normal::new(0.0, self.noise_std).unwrap();
            for a in &mut acc {
                *a += normal.sample(&mut rng);
            }
        }
        normalize(&mut acc);
        Ok(acc)
    }
}

fn random_unit_vector(dim: usize, seed: u64) -> Vec<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut v: Vec<f64> = (0..dim).map(|_| StandardNormal.sample(&mut rng)).collect();
    normalize(&mut v);
    v
}

fn normalize(v: &mut [f64]) {
    let norm = libm::sqrt(v.iter().map(|a| a * a).sum::<f64>());
    if norm > 0.0 {
        for a in v.iter_mut() {
            *a /= norm;
        }
    } else {
        // degenerate all-zero composition: fall back to the first basis axis
        v[0] = 1.0;
    }
}
