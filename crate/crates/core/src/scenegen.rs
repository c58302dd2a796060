//! Seeded synthetic scenes: clustered small boxes over a large raster, plus
//! class-mask rasterization and a low-resolution intensity rendering for the
//! entropy baseline. Everything is a pure function of its config and seed.

use alloc::vec;
use alloc::vec::Vec;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::geometry::{BBox, Scene, SceneObject};
use crate::grid::Grid;
use crate::objectness::downsample_grid;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GeneratorConfig {
    pub width: u32,
    pub height: u32,
    pub classes: u32,
    pub clusters: u32,
    pub objects_per_cluster: (u32, u32),
    /// object side lengths in pixels, inclusive range
    pub object_size: (u32, u32),
    pub cluster_radius: f64,
    pub background_texture_std: f64,
    #[serde(default)]
    pub seed: u64,
    /// when false, objects are placed uniformly instead of in clusters
    #[serde(default = "default_clustered")]
    pub clustered: bool,
}

fn default_clustered() -> bool {
    true
}

impl Default for GeneratorConfig {
    fn default() -> Self {
        GeneratorConfig {
            width: 2048,
            height: 2048,
            classes: 3,
            clusters: 5,
            objects_per_cluster: (4, 10),
            object_size: (16, 48),
            cluster_radius: 96.0,
            background_texture_std: 0.05,
            seed: 0,
            clustered: true,
        }
    }
}

/// Class-level mask: 0 = background, object pixels carry `class_id + 1`;
/// on overlap the later-placed (higher id) object wins.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ClassMask {
    pub width: usize,
    pub height: usize,
    data: Vec<u32>,
}

impl ClassMask {
    #[inline]
    pub fn get(&self, row: usize, col: usize) -> u32 {
        self.data[row * self.width + col]
    }

    pub fn values(&self) -> &[u32] {
        &self.data
    }
}

const MAX_REJECTIONS: u32 = 1000;

/// Places cluster centers uniformly, then objects around each center with
/// Gaussian scatter, rejection-sampling boxes to stay in bounds.
pub fn generate_scene(cfg: &GeneratorConfig) -> Scene {
    assert!(cfg.objects_per_cluster.0 <= cfg.objects_per_cluster.1);
    assert!(cfg.object_size.0 >= 1 && cfg.object_size.0 <= cfg.object_size.1);
    assert!(cfg.object_size.1 <= cfg.width.min(cfg.height));

    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let scatter = Normal::new(0.0, cfg.cluster_radius.max(1e-9)).unwrap();
    let mut objects = Vec::new();
    let mut next_id = 0u32;

    for _ in 0..cfg.clusters {
        let center_x = rng.random_range(0..cfg.width) as f64;
        let center_y = rng.random_range(0..cfg.height) as f64;
        let count = rng.random_range(cfg.objects_per_cluster.0..=cfg.objects_per_cluster.1);
        for _ in 0..count {
            let w = rng.random_range(cfg.object_size.0..=cfg.object_size.1);
            let h = rng.random_range(cfg.object_size.0..=cfg.object_size.1);
            let mut placed = false;
            for _ in 0..MAX_REJECTIONS {
                let (cx, cy) = if cfg.clustered {
                    (
                        center_x + scatter.sample(&mut rng),
                        center_y + scatter.sample(&mut rng),
                    )
                } else {
                    (
                        rng.random_range(0..cfg.width) as f64,
                        rng.random_range(0..cfg.height) as f64,
                    )
                };
                let x = libm::round(cx - w as f64 / 2.0);
                let y = libm::round(cy - h as f64 / 2.0);
                if x >= 0.0
                    && y >= 0.0
                    && x as u32 + w <= cfg.width
                    && y as u32 + h <= cfg.height
                {
                    objects.push(SceneObject {
                        id: next_id,
                        class_id: rng.random_range(0..cfg.classes),
                        bbox: BBox::new(x as u32, y as u32, w, h),
                    });
                    next_id += 1;
                    placed = true;
                    break;
                }
            }
            if !placed {
                log::warn!(
                    "skipping object near ({center_x:.0}, {center_y:.0}) after {MAX_REJECTIONS} rejections"
                );
            }
        }
    }
    Scene {
        width: cfg.width,
        height: cfg.height,
        objects,
    }
}

/// Full-resolution class mask; later ids overwrite earlier ones on overlap.
pub fn rasterize_class_mask(scene: &Scene) -> ClassMask {
    let width = scene.width as usize;
    let height = scene.height as usize;
    let mut data = vec![0u32; width * height];
    let mut ordered: Vec<&SceneObject> = scene.objects.iter().collect();
    ordered.sort_by_key(|o| o.id);
    for obj in ordered {
        for row in obj.bbox.y..obj.bbox.bottom() {
            for col in obj.bbox.x..obj.bbox.right() {
                data[row as usize * width + col as usize] = obj.class_id + 1;
            }
        }
    }
    ClassMask {
        width,
        height,
        data,
    }
}

/// Grayscale gist rendering: background 0.3 plus seeded texture noise,
/// object pixels 0.8; area-averaged down to `d_gist` and clipped to [0, 1].
pub fn render_gist_image(scene: &Scene, d_gist: usize, cfg: &GeneratorConfig) -> Grid {
    let width = scene.width as usize;
    let height = scene.height as usize;
    let mut full = Grid::filled(width, height, 0.3);
    if cfg.background_texture_std > 0.0 {
        let mut rng =
            ChaCha8Rng::seed_from_u64(crate::seed::derive(cfg.seed, crate::seed::role::GIST_RENDER, 0));
        let noise = Normal::new(0.0, cfg.background_texture_std).unwrap();
        for v in full.values_mut() {
            *v += noise.sample(&mut rng);
        }
    }
    for obj in &scene.objects {
        for row in obj.bbox.y..obj.bbox.bottom() {
            for col in obj.bbox.x..obj.bbox.right() {
                full.set(row as usize, col as usize, 0.8);
            }
        }
    }
    let mut out = downsample_grid(&full, d_gist);
    for v in out.values_mut() {
        *v = v.clamp(0.0, 1.0);
    }
    out
}
