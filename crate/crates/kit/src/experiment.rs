//! Experiment driver: closed-set glimpse evaluation and open-set tile search.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use anyhow::{anyhow, bail, Context, Result};
use glimpse_core::detection::{metric_curve, oracle_detect, Detection, MetricCurve};
use glimpse_core::geometry::gist_to_vhr;
use glimpse_core::objectness::{
    degrade, downsample_mask, gaussian_bbox_density, rasterize_binary_mask,
};
use glimpse_core::openset::{
    likelihood_map, posterior_map, recall_vs_looks, run_search, tile_image, tile_prior,
    SearchInputs, SyntheticEmbedder,
};
use glimpse_core::policies::run_policy;
use glimpse_core::scenegen::{generate_scene, render_gist_image, GeneratorConfig};
use glimpse_core::seed::{self, role};
use glimpse_core::{BBox, GistGeometry, GistMap, PolicyConfig, PolicyKind, Scene};
use rayon::prelude::*;

use crate::config::{
    DetectorConfig, ExperimentConfig, Mode, ObjectnessSource, SceneSource,
};
use crate::io;

pub struct ExperimentOutcome {
    pub files: Vec<PathBuf>,
    pub scenes: usize,
}

/// vHR-space glimpse window for a gist-space top-left. Row and column use
/// separate geometries so non-square rasters map correctly.
fn glimpse_window(
    pos: (usize, usize),
    geom_row: &GistGeometry,
    geom_col: &GistGeometry,
) -> BBox {
    let y = gist_to_vhr(pos.0 as u32, geom_row);
    let x = gist_to_vhr(pos.1 as u32, geom_col);
    BBox::new(x, y, geom_col.d_glimpse, geom_row.d_glimpse)
}

fn materialize_scene(cfg: &ExperimentConfig, index: usize) -> Result<(Scene, GeneratorConfig)> {
    match &cfg.scenes {
        SceneSource::Files(files) => {
            let scene = io::load_scene(&files[index])?;
            let mut gen = GeneratorConfig::default();
            gen.width = scene.width;
            gen.height = scene.height;
            gen.seed = seed::derive(cfg.master_seed, role::SCENE_GEN, index as u64);
            Ok((scene, gen))
        }
        SceneSource::Generator(batch) => {
            let mut gen = batch.base.clone();
            gen.seed = seed::derive(cfg.master_seed, role::SCENE_GEN, index as u64);
            Ok((generate_scene(&gen), gen))
        }
    }
}

fn scene_count(cfg: &ExperimentConfig) -> usize {
    match &cfg.scenes {
        SceneSource::Files(files) => files.len(),
        SceneSource::Generator(batch) => batch.count,
    }
}

fn objectness_map(cfg: &ExperimentConfig, scene: &Scene, index: usize) -> Result<GistMap> {
    let d_gist = cfg.geometry.d_gist as usize;
    match &cfg.objectness {
        ObjectnessSource::Groundtruth => {
            Ok(downsample_mask(&rasterize_binary_mask(scene), d_gist))
        }
        ObjectnessSource::GroundtruthDegraded {
            blur_sigma,
            noise_std,
            fp_rate,
        } => {
            let base = downsample_mask(&rasterize_binary_mask(scene), d_gist);
            let s = seed::derive(cfg.master_seed, role::DEGRADE, index as u64);
            Ok(degrade(&base, *blur_sigma, *noise_std, *fp_rate, s))
        }
        ObjectnessSource::GaussianBbox => Ok(gaussian_bbox_density(scene, d_gist)),
        ObjectnessSource::Files(files) => io::load_map(&files[index]),
    }
}

/// Policy labels for file names and CSV columns; duplicate kinds get a
/// numeric suffix so outputs never collide.
fn policy_labels(policies: &[PolicyConfig]) -> Vec<String> {
    let mut counts: BTreeMap<&str, usize> = BTreeMap::new();
    for p in policies {
        *counts.entry(p.kind.name()).or_default() += 1;
    }
    let mut seen: BTreeMap<&str, usize> = BTreeMap::new();
    policies
        .iter()
        .map(|p| {
            let name = p.kind.name();
            let n = seen.entry(name).or_default();
            *n += 1;
            if counts[name] > 1 {
                format!("{name}_{n}")
            } else {
                name.to_string()
            }
        })
        .collect()
}

struct ClosedsetSceneResult {
    /// per policy: glimpse log rows
    glimpse_rows: Vec<Vec<String>>,
    /// per policy: metric rows
    metric_rows: Vec<Vec<String>>,
}

fn run_closedset_scene(
    cfg: &ExperimentConfig,
    labels: &[String],
    detections: Option<&BTreeMap<u64, BTreeMap<usize, Vec<Detection>>>>,
    index: usize,
) -> Result<ClosedsetSceneResult> {
    let (scene, gen) = materialize_scene(cfg, index)?;
    let pi = objectness_map(cfg, &scene, index)?;
    let d_gist = cfg.geometry.d_gist;
    let geom_row = GistGeometry::new(d_gist, scene.height, cfg.geometry.d_glimpse)?;
    let geom_col = GistGeometry::new(d_gist, scene.width, cfg.geometry.d_glimpse)?;
    let needs_gist_image = cfg
        .policies
        .iter()
        .any(|p| p.kind == PolicyKind::Entropy);
    let gist_image = if needs_gist_image {
        Some(render_gist_image(&scene, d_gist as usize, &gen))
    } else {
        None
    };

    let mut glimpse_rows = Vec::with_capacity(cfg.policies.len());
    let mut metric_rows = Vec::with_capacity(cfg.policies.len());
    for (pi_idx, policy) in cfg.policies.iter().enumerate() {
        let mut p = policy.clone();
        p.seed = seed::derive(
            cfg.master_seed,
            role::POLICY,
            ((pi_idx as u64) << 32) | index as u64,
        );
        let mut set = run_policy(Some(&pi), gist_image.as_ref(), &geom_row, &p)
            .map_err(|e| anyhow!("scene {index}, policy {}: {e}", labels[pi_idx]))?;
        let decisions = set.apply_stopping(&p, pi.width() * pi.height());

        let mut rows = Vec::with_capacity(set.positions.len());
        for (step, &(r, c)) in set.positions.iter().enumerate() {
            let window = glimpse_window((r, c), &geom_row, &geom_col);
            rows.push(format!(
                "{index},{step},{r},{c},{row_vhr},{col_vhr},{d},{cov:.6},{reason}",
                step = step + 1,
                row_vhr = window.y,
                col_vhr = window.x,
                d = cfg.geometry.d_glimpse,
                cov = set.cum_coverage[step],
                reason = decisions[step].reason.name(),
            ));
        }
        glimpse_rows.push(rows);

        let per_glimpse: Vec<Vec<Detection>> = match &cfg.detector {
            DetectorConfig::Oracle => set
                .positions
                .iter()
                .enumerate()
                .map(|(step, &(r, c))| {
                    let window = glimpse_window((r, c), &geom_row, &geom_col);
                    oracle_detect(&scene, &window, step + 1)
                })
                .collect(),
            DetectorConfig::External(_) => {
                let per_scene = detections
                    .expect("external detections preloaded")
                    .get(&(index as u64));
                (1..=set.positions.len())
                    .map(|step| {
                        per_scene
                            .and_then(|m| m.get(&step))
                            .cloned()
                            .unwrap_or_default()
                    })
                    .collect()
            }
        };
        let curve = metric_curve(&scene, &per_glimpse, cfg.iou_threshold);
        metric_rows.push(metric_csv_rows(&labels[pi_idx], index as u64, &curve));
    }
    Ok(ClosedsetSceneResult {
        glimpse_rows,
        metric_rows,
    })
}

fn metric_csv_rows(policy: &str, scene_id: u64, curve: &MetricCurve) -> Vec<String> {
    let mut rows = Vec::new();
    for point in &curve.points {
        for (&class_id, &(p, r, f1)) in &point.per_class {
            rows.push(format!(
                "{policy},{scene_id},{k},{class_id},{p:.6},{r:.6},{f1:.6}",
                k = point.k
            ));
        }
        rows.push(format!(
            "{policy},{scene_id},{k},-1,{p:.6},{r:.6},{f1:.6}",
            k = point.k,
            p = point.avg_precision,
            r = point.avg_recall,
            f1 = point.avg_f1
        ));
    }
    rows
}

struct OpensetSceneResult {
    trajectory_rows: Vec<String>,
    /// AURC per search policy; None when the scene has no target instances
    aurc: Vec<Option<f64>>,
}

fn run_openset_scene(cfg: &ExperimentConfig, index: usize) -> Result<OpensetSceneResult> {
    let (scene, _) = materialize_scene(cfg, index)?;
    let pi = objectness_map(cfg, &scene, index)?;
    let d_gist = cfg.geometry.d_gist;
    let geom = GistGeometry::new(d_gist, scene.width.max(scene.height), d_gist.max(1))?;
    let grid = tile_image(scene.width, scene.height, cfg.geometry.tile_size);

    let n_classes = scene
        .objects
        .iter()
        .map(|o| o.class_id)
        .max()
        .unwrap_or(0)
        .max(cfg.target_class) as usize
        + 1;
    let embedder = SyntheticEmbedder::new(
        cfg.embedding.dim,
        n_classes,
        cfg.embedding.noise_std,
        seed::derive(cfg.master_seed, role::EMBED, index as u64),
    );
    let target = embedder.target_spec(cfg.target_class);
    let (likelihood, embeddings) = likelihood_map(&embedder, &scene, &grid, &target)
        .map_err(|e| anyhow!("scene {index}: {e}"))?;
    let prior = tile_prior(&pi, &grid, &geom);
    let posterior = posterior_map(&likelihood, &prior);
    let inputs = SearchInputs {
        likelihood: &likelihood,
        posterior: Some(&posterior),
        embeddings: Some(&embeddings),
    };

    let has_targets = scene.objects.iter().any(|o| o.class_id == cfg.target_class);
    let mut trajectory_rows = Vec::new();
    let mut aurc = Vec::with_capacity(cfg.search_policies.len());
    for &kind in &cfg.search_policies {
        let traj = run_search(kind, &grid, &inputs)
            .map_err(|e| anyhow!("scene {index}, search {}: {e}", kind.name()))?;
        let curve = if has_targets {
            Some(
                recall_vs_looks(&traj, &scene, &grid, cfg.target_class)
                    .map_err(|e| anyhow!("scene {index}: {e}"))?,
            )
        } else {
            None
        };
        for (step, &tile_idx) in traj.order.iter().enumerate() {
            let tile = &grid.tiles[tile_idx];
            let (x, recall) = curve
                .as_ref()
                .map(|c| c.points[step])
                .unwrap_or(((step + 1) as f64 / traj.total_tiles as f64, 0.0));
            trajectory_rows.push(format!(
                "{index},{policy},{step},{ti},{tj},{l:.6},{p:.6},{post:.6},{recall:.6},{x:.6}",
                policy = kind.name(),
                step = step + 1,
                ti = tile.i,
                tj = tile.j,
                l = likelihood[tile_idx],
                p = prior[tile_idx],
                post = posterior[tile_idx],
            ));
        }
        aurc.push(curve.map(|c| c.area_under()));
    }
    Ok(OpensetSceneResult {
        trajectory_rows,
        aurc,
    })
}

fn configure_pool() -> Result<()> {
    if let Ok(val) = std::env::var("GLIMPSEKIT_THREADS") {
        let n: usize = val
            .trim()
            .parse()
            .with_context(|| format!("GLIMPSEKIT_THREADS={val:?} is not a number"))?;
        if n > 0 {
            // Ignore the error if a pool was already installed in this process.
            let _ = rayon::ThreadPoolBuilder::new().num_threads(n).build_global();
        }
    }
    Ok(())
}

pub fn run_experiment(cfg: &ExperimentConfig, out_dir: &Path) -> Result<ExperimentOutcome> {
    cfg.validate()?;
    configure_pool()?;
    std::fs::create_dir_all(out_dir)
        .with_context(|| format!("creating {}", out_dir.display()))?;
    let n = scene_count(cfg);
    match cfg.mode {
        Mode::Closedset => run_closedset(cfg, out_dir, n),
        Mode::Openset => run_openset(cfg, out_dir, n),
    }
}

fn run_closedset(cfg: &ExperimentConfig, out_dir: &Path, n: usize) -> Result<ExperimentOutcome> {
    let labels = policy_labels(&cfg.policies);
    let detections = match &cfg.detector {
        DetectorConfig::External(path) => Some(io::load_detections(path)?),
        DetectorConfig::Oracle => None,
    };
    let results: Vec<ClosedsetSceneResult> = (0..n)
        .into_par_iter()
        .map(|i| run_closedset_scene(cfg, &labels, detections.as_ref(), i))
        .collect::<Result<_>>()?;

    let mut files = Vec::new();
    let glimpse_stem = cfg.outputs.glimpses.trim_end_matches(".csv");
    for (pi_idx, label) in labels.iter().enumerate() {
        let path = out_dir.join(format!("{glimpse_stem}_{label}.csv"));
        let rows: Vec<String> = results
            .iter()
            .flat_map(|r| r.glimpse_rows[pi_idx].iter().cloned())
            .collect();
        io::write_csv(&path, io::GLIMPSE_LOG_HEADER, &rows)?;
        files.push(path);
    }
    let metrics_path = out_dir.join(&cfg.outputs.metrics);
    let mut metric_rows = Vec::new();
    for r in &results {
        for per_policy in &r.metric_rows {
            metric_rows.extend(per_policy.iter().cloned());
        }
    }
    io::write_csv(&metrics_path, io::METRICS_HEADER, &metric_rows)?;
    files.push(metrics_path);
    Ok(ExperimentOutcome { files, scenes: n })
}

fn run_openset(cfg: &ExperimentConfig, out_dir: &Path, n: usize) -> Result<ExperimentOutcome> {
    let results: Vec<OpensetSceneResult> = (0..n)
        .into_par_iter()
        .map(|i| run_openset_scene(cfg, i))
        .collect::<Result<_>>()?;

    let traj_path = out_dir.join(&cfg.outputs.trajectories);
    let rows: Vec<String> = results
        .iter()
        .flat_map(|r| r.trajectory_rows.iter().cloned())
        .collect();
    io::write_csv(&traj_path, io::TRAJECTORY_HEADER, &rows)?;

    let summary_path = out_dir.join(&cfg.outputs.summary);
    let mut summary_rows = Vec::new();
    for (k, kind) in cfg.search_policies.iter().enumerate() {
        let values: Vec<f64> = results.iter().filter_map(|r| r.aurc[k]).collect();
        if values.is_empty() {
            bail!("no scene contains target class {}", cfg.target_class);
        }
        let mean = values.iter().sum::<f64>() / values.len() as f64;
        summary_rows.push(format!(
            "{},{},{:.6}",
            kind.name(),
            values.len(),
            mean
        ));
    }
    io::write_csv(&summary_path, io::SUMMARY_HEADER, &summary_rows)?;
    Ok(ExperimentOutcome {
        files: vec![traj_path, summary_path],
        scenes: n,
    })
}

/// Writes `scene_XXXX.json` plus objectness and gist-image OBJMAP files for
/// each generated scene.
pub fn generate_scene_files(cfg: &ExperimentConfig, out_dir: &Path) -> Result<Vec<PathBuf>> {
    let batch = match &cfg.scenes {
        SceneSource::Generator(b) => b,
        SceneSource::Files(_) => bail!("gen-scenes requires a generator scene source"),
    };
    std::fs::create_dir_all(out_dir)
        .with_context(|| format!("creating {}", out_dir.display()))?;
    let mut files = Vec::new();
    for i in 0..batch.count {
        let mut gen = batch.base.clone();
        gen.seed = seed::derive(cfg.master_seed, role::SCENE_GEN, i as u64);
        let scene = generate_scene(&gen);
        let d_gist = cfg.geometry.d_gist as usize;

        let scene_path = out_dir.join(format!("scene_{i:04}.json"));
        io::save_scene(&scene, &scene_path)?;
        files.push(scene_path);

        let pi = objectness_map(cfg, &scene, i)?;
        let map_path = out_dir.join(format!("scene_{i:04}_objectness.map"));
        io::save_map(&pi, &map_path)?;
        files.push(map_path);

        let gist = render_gist_image(&scene, d_gist, &gen);
        let gist_path = out_dir.join(format!("scene_{i:04}_gist.map"));
        io::save_grid(&gist, &gist_path)?;
        files.push(gist_path);
    }
    Ok(files)
}

/// Evaluates an external detections CSV against scene files named
/// `scene_XXXX.json` in `scenes_dir`; writes one metrics CSV with the
/// policy column set to "external".
pub fn eval_external(detections: &Path, scenes_dir: &Path, out: &Path) -> Result<usize> {
    let by_scene = io::load_detections(detections)?;
    let mut rows = Vec::new();
    for (&scene_id, by_step) in &by_scene {
        let scene_path = scenes_dir.join(format!("scene_{scene_id:04}.json"));
        let scene = io::load_scene(&scene_path)
            .with_context(|| format!("scene {scene_id} referenced by detections"))?;
        let max_step = by_step.keys().max().copied().unwrap_or(0);
        let per_glimpse: Vec<Vec<Detection>> = (1..=max_step)
            .map(|s| by_step.get(&s).cloned().unwrap_or_default())
            .collect();
        let curve = metric_curve(&scene, &per_glimpse, 0.5);
        rows.extend(metric_csv_rows("external", scene_id, &curve));
    }
    io::write_csv(out, io::METRICS_HEADER, &rows)?;
    Ok(by_scene.len())
}
