//! Experiment configuration (JSON) and validation.

use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use glimpse_core::openset::SearchKind;
use glimpse_core::scenegen::GeneratorConfig;
use glimpse_core::PolicyConfig;
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Mode {
    Closedset,
    Openset,
}

/// A batch of generated scenes: `count` scenes drawn from `base` with
/// per-scene seeds derived from the master seed.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct GeneratorBatch {
    pub count: usize,
    #[serde(flatten)]
    pub base: GeneratorConfig,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SceneSource {
    Files(Vec<PathBuf>),
    Generator(GeneratorBatch),
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ObjectnessSource {
    Groundtruth,
    GroundtruthDegraded {
        blur_sigma: f64,
        noise_std: f64,
        fp_rate: f64,
    },
    GaussianBbox,
    /// one OBJMAP v1 file per scene, parallel to the scene list
    Files(Vec<PathBuf>),
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DetectorConfig {
    Oracle,
    /// external detections CSV (scene_id,glimpse_step,class_id,x,y,w,h,score)
    External(PathBuf),
}

#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct GeometryConfig {
    pub d_gist: u32,
    pub d_glimpse: u32,
    #[serde(default = "default_tile_size")]
    pub tile_size: u32,
}

fn default_tile_size() -> u32 {
    512
}

#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct EmbeddingConfig {
    pub dim: usize,
    pub noise_std: f64,
    #[serde(default = "default_background_weight")]
    pub background_weight: f64,
}

fn default_background_weight() -> f64 {
    0.5
}

impl Default for EmbeddingConfig {
    fn default() -> Self {
        EmbeddingConfig {
            dim: 32,
            noise_std: 0.5,
            background_weight: default_background_weight(),
        }
    }
}

/// Output file names inside the run's output directory.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default)]
pub struct OutputConfig {
    pub glimpses: String,
    pub metrics: String,
    pub trajectories: String,
    pub summary: String,
}

impl Default for OutputConfig {
    fn default() -> Self {
        OutputConfig {
            glimpses: "glimpses.csv".into(),
            metrics: "metrics.csv".into(),
            trajectories: "trajectories.csv".into(),
            summary: "summary.csv".into(),
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ExperimentConfig {
    pub mode: Mode,
    pub scenes: SceneSource,
    #[serde(default = "default_objectness")]
    pub objectness: ObjectnessSource,
    #[serde(default)]
    pub policies: Vec<PolicyConfig>,
    #[serde(default = "default_detector")]
    pub detector: DetectorConfig,
    pub geometry: GeometryConfig,
    #[serde(default = "default_iou_threshold")]
    pub iou_threshold: f64,
    #[serde(default)]
    pub search_policies: Vec<SearchKind>,
    #[serde(default)]
    pub embedding: EmbeddingConfig,
    #[serde(default)]
    pub target_class: u32,
    pub master_seed: u64,
    #[serde(default)]
    pub outputs: OutputConfig,
}

fn default_objectness() -> ObjectnessSource {
    ObjectnessSource::Groundtruth
}

fn default_detector() -> DetectorConfig {
    DetectorConfig::Oracle
}

fn default_iou_threshold() -> f64 {
    0.5
}

impl ExperimentConfig {
    pub fn load(path: &Path) -> Result<Self> {
        let text =
            std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
        let cfg: ExperimentConfig =
            serde_json::from_str(&text).with_context(|| format!("parsing {}", path.display()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        match self.mode {
            Mode::Closedset if self.policies.is_empty() => bail!("no policies configured"),
            Mode::Openset if self.search_policies.is_empty() => {
                bail!("no search policies configured")
            }
            _ => {}
        }
        if !(self.iou_threshold > 0.0 && self.iou_threshold <= 1.0) {
            bail!("iou_threshold must be in (0, 1]");
        }
        let check_exists = |p: &Path| -> Result<()> {
            if !p.exists() {
                bail!("referenced file does not exist: {}", p.display());
            }
            Ok(())
        };
        let scene_count = match &self.scenes {
            SceneSource::Files(files) => {
                if files.is_empty() {
                    bail!("empty scene file list");
                }
                for f in files {
                    check_exists(f)?;
                }
                files.len()
            }
            SceneSource::Generator(batch) => {
                if batch.count == 0 {
                    bail!("generator scene count must be > 0");
                }
                batch.count
            }
        };
        if let ObjectnessSource::Files(files) = &self.objectness {
            if files.len() != scene_count {
                bail!(
                    "objectness file list has {} entries for {} scenes",
                    files.len(),
                    scene_count
                );
            }
            for f in files {
                check_exists(f)?;
            }
        }
        if let DetectorConfig::External(path) = &self.detector {
            check_exists(path)?;
        }
        Ok(())
    }
}
