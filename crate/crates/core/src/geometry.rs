//! Core geometric types and gist/vHR scale arithmetic.
//!
//! Conventions used throughout the crate:
//! - coordinates are `(row, col)` with the origin at the top-left corner;
//! - boxes are half-open integer rectangles `[x, x+w) x [y, y+h)`;
//! - rasters carry width and height separately even though the usual
//!   configuration is square.

use alloc::string::String;
use alloc::vec::Vec;
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum GeometryError {
    #[error("gist dimension {d_gist} exceeds native dimension {d_vhr}")]
    GistLargerThanNative { d_gist: u32, d_vhr: u32 },
    #[error("dimension must be positive")]
    ZeroDimension,
    #[error("invalid scene: {0}")]
    InvalidScene(String),
}

/// Axis-aligned box in pixel coordinates. `x` is the left column, `y` the
/// top row; the box covers `[x, x+w) x [y, y+h)`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct BBox {
    pub x: u32,
    pub y: u32,
    pub w: u32,
    pub h: u32,
}

impl BBox {
    pub fn new(x: u32, y: u32, w: u32, h: u32) -> Self {
        BBox { x, y, w, h }
    }

    pub fn area(&self) -> u64 {
        self.w as u64 * self.h as u64
    }

    pub fn right(&self) -> u32 {
        self.x + self.w
    }

    pub fn bottom(&self) -> u32 {
        self.y + self.h
    }

    /// Center as a real point `(cx, cy)`.
    pub fn center(&self) -> (f64, f64) {
        (
            self.x as f64 + self.w as f64 / 2.0,
            self.y as f64 + self.h as f64 / 2.0,
        )
    }

    pub fn contains_point(&self, cx: f64, cy: f64) -> bool {
        cx >= self.x as f64 && cx < self.right() as f64 && cy >= self.y as f64 && cy < self.bottom() as f64
    }

    pub fn intersection(&self, other: &BBox) -> Option<BBox> {
        let x0 = self.x.max(other.x);
        let y0 = self.y.max(other.y);
        let x1 = self.right().min(other.right());
        let y1 = self.bottom().min(other.bottom());
        if x1 > x0 && y1 > y0 {
            Some(BBox::new(x0, y0, x1 - x0, y1 - y0))
        } else {
            None
        }
    }

    pub fn intersection_area(&self, other: &BBox) -> u64 {
        self.intersection(other).map_or(0, |b| b.area())
    }
}

/// Ground-truth object: stable id, class label in `[0, C)`, and its box.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct SceneObject {
    pub id: u32,
    pub class_id: u32,
    #[serde(flatten)]
    pub bbox: BBox,
}

/// A vHR raster with its annotated objects; the unit of evaluation.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Scene {
    pub width: u32,
    pub height: u32,
    pub objects: Vec<SceneObject>,
}

impl Scene {
    /// Checks box validity, in-bounds placement, and id uniqueness.
    /// The error message names the first offending field as `objects[k].<field>`.
    pub fn validate(&self) -> Result<(), GeometryError> {
        if self.width == 0 || self.height == 0 {
            return Err(GeometryError::ZeroDimension);
        }
        for (k, obj) in self.objects.iter().enumerate() {
            if obj.bbox.w == 0 {
                return Err(GeometryError::InvalidScene(alloc::format!(
                    "objects[{k}].w must be > 0"
                )));
            }
            if obj.bbox.h == 0 {
                return Err(GeometryError::InvalidScene(alloc::format!(
                    "objects[{k}].h must be > 0"
                )));
            }
            if obj.bbox.right() > self.width || obj.bbox.bottom() > self.height {
                return Err(GeometryError::InvalidScene(alloc::format!(
                    "objects[{k}] box exceeds the {}x{} raster",
                    self.width, self.height
                )));
            }
        }
        for (k, obj) in self.objects.iter().enumerate() {
            if self.objects[..k].iter().any(|o| o.id == obj.id) {
                return Err(GeometryError::InvalidScene(alloc::format!(
                    "objects[{k}].id {} duplicates an earlier object",
                    obj.id
                )));
            }
        }
        Ok(())
    }
}

/// Gist/vHR scale bookkeeping: the downsampling ratio and the glimpse size
/// in both spaces.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GistGeometry {
    pub d_gist: u32,
    pub d_vhr: u32,
    pub alpha: f64,
    pub d_glimpse: u32,
    pub d_glimpse_gist: u32,
}

impl GistGeometry {
    pub fn new(d_gist: u32, d_vhr: u32, d_glimpse: u32) -> Result<Self, GeometryError> {
        let alpha = scale_factor(d_gist, d_vhr)?;
        if d_glimpse == 0 {
            return Err(GeometryError::ZeroDimension);
        }
        let d_glimpse_gist = glimpse_gist_dim(alpha, d_glimpse);
        Ok(GistGeometry {
            d_gist,
            d_vhr,
            alpha,
            d_glimpse,
            d_glimpse_gist,
        })
    }
}

/// Ratio of the gist dimension to the native dimension, in `(0, 1]`.
pub fn scale_factor(d_gist: u32, d_vhr: u32) -> Result<f64, GeometryError> {
    if d_gist == 0 || d_vhr == 0 {
        return Err(GeometryError::ZeroDimension);
    }
    if d_gist > d_vhr {
        return Err(GeometryError::GistLargerThanNative { d_gist, d_vhr });
    }
    Ok(d_gist as f64 / d_vhr as f64)
}

/// Glimpse size in gist pixels: `ceil(alpha * d_glimpse)`, at least 1.
pub fn glimpse_gist_dim(alpha: f64, d_glimpse: u32) -> u32 {
    debug_assert!(alpha > 0.0 && alpha <= 1.0 && d_glimpse >= 1);
    (libm::ceil(alpha * d_glimpse as f64) as u32).max(1)
}

/// Maps a gist-space glimpse top-left coordinate to the vHR coordinate of
/// the window it denotes, clamped so the full `d_glimpse` window fits.
pub fn gist_to_vhr(pos: u32, geom: &GistGeometry) -> u32 {
    let raw = libm::round(pos as f64 / geom.alpha) as u32;
    raw.min(geom.d_vhr.saturating_sub(geom.d_glimpse))
}

/// Intersection-over-union of two boxes, in `[0, 1]`.
pub fn iou(a: &BBox, b: &BBox) -> f64 {
    let inter = a.intersection_area(b);
    if inter == 0 {
        return 0.0;
    }
    let union = a.area() + b.area() - inter;
    inter as f64 / union as f64
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn scale_factor_examples() {
        assert_eq!(scale_factor(128, 4000).unwrap(), 0.032);
        assert_eq!(scale_factor(256, 256).unwrap(), 1.0);
        assert_eq!(scale_factor(128, 1024).unwrap(), 0.125);
    }

    #[test]
    fn scale_factor_rejects_upsampling_and_zero() {
        assert!(scale_factor(512, 128).is_err());
        assert!(scale_factor(0, 128).is_err());
        assert!(scale_factor(128, 0).is_err());
    }

    #[test]
    fn glimpse_gist_dim_examples() {
        assert_eq!(glimpse_gist_dim(0.032, 512), 17);
        assert_eq!(glimpse_gist_dim(1.0, 512), 512);
        assert_eq!(glimpse_gist_dim(0.125, 512), 64);
    }

    #[test]
    fn gist_to_vhr_examples() {
        let geom = GistGeometry::new(128, 4000, 512).unwrap();
        assert_eq!(gist_to_vhr(0, &geom), 0);
        // round(17 / 0.032) = round(531.25) = 531 < 4000 - 512
        assert_eq!(gist_to_vhr(17, &geom), 531);

        let identity = GistGeometry::new(256, 256, 64).unwrap();
        let pos = identity.d_gist - identity.d_glimpse_gist;
        assert_eq!(gist_to_vhr(pos, &identity), pos);
    }

    #[test]
    fn iou_examples() {
        let a = BBox::new(0, 0, 10, 10);
        assert_eq!(iou(&a, &a), 1.0);
        let far = BBox::new(50, 50, 10, 10);
        assert_eq!(iou(&a, &far), 0.0);
        let b = BBox::new(5, 5, 10, 10);
        let v = iou(&a, &b);
        assert!((v - 25.0 / 175.0).abs() < 1e-12);
    }

    #[test]
    fn scene_validation_names_offending_field() {
        let scene = Scene {
            width: 100,
            height: 100,
            objects: alloc::vec![SceneObject {
                id: 0,
                class_id: 0,
                bbox: BBox::new(1, 1, 0, 5),
            }],
        };
        let err = scene.validate().unwrap_err();
        assert!(alloc::format!("{err}").contains("objects[0].w"));
    }

    #[test]
    fn scene_validation_rejects_out_of_bounds_and_duplicate_ids() {
        let mut scene = Scene {
            width: 100,
            height: 100,
            objects: alloc::vec![SceneObject {
                id: 7,
                class_id: 0,
                bbox: BBox::new(95, 0, 10, 10),
            }],
        };
        assert!(scene.validate().is_err());
        scene.objects[0].bbox = BBox::new(0, 0, 10, 10);
        scene.objects.push(scene.objects[0]);
        assert!(scene.validate().is_err());
    }

    fn arb_box() -> impl Strategy<Value = BBox> {
        (0u32..100, 0u32..100, 1u32..50, 1u32..50).prop_map(|(x, y, w, h)| BBox::new(x, y, w, h))
    }

    proptest! {
        #[test]
        fn iou_symmetric_and_bounded(a in arb_box(), b in arb_box()) {
            let ab = iou(&a, &b);
            let ba = iou(&b, &a);
            prop_assert_eq!(ab, ba);
            prop_assert!((0.0..=1.0).contains(&ab));
            prop_assert_eq!(iou(&a, &a), 1.0);
        }

        #[test]
        fn glimpse_gist_dim_monotone(d1 in 1u32..5000, d2 in 1u32..5000, denom in 1u32..1000) {
            let alpha = 1.0 / denom as f64;
            let (lo, hi) = if d1 <= d2 { (d1, d2) } else { (d2, d1) };
            prop_assert!(glimpse_gist_dim(alpha, lo) <= glimpse_gist_dim(alpha, hi));
        }

        #[test]
        fn gist_to_vhr_window_in_bounds(pos_frac in 0.0f64..=1.0, d_gist in 16u32..256, mult in 2u32..32) {
            let d_vhr = d_gist * mult;
            let d_glimpse = d_vhr / 4 + 1;
            let geom = GistGeometry::new(d_gist, d_vhr, d_glimpse).unwrap();
            let max_pos = d_gist - geom.d_glimpse_gist.min(d_gist);
            let pos = (pos_frac * max_pos as f64) as u32;
            let v = gist_to_vhr(pos, &geom);
            prop_assert!(v + geom.d_glimpse <= geom.d_vhr);
        }
    }
}
