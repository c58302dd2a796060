//! File formats: Scene JSON, OBJMAP v1 grids, and the CSV schemas emitted
//! and consumed by the experiment driver.

use std::collections::BTreeMap;
use std::fs;
use std::io::Write;
use std::path::Path;

use anyhow::{bail, Context, Result};
use glimpse_core::detection::Detection;
use glimpse_core::objectness::GistMap;
use glimpse_core::{BBox, Grid, Scene};

/// Loads and validates a Scene JSON file
/// (`{"width":..,"height":..,"objects":[{"id","class_id","x","y","w","h"}]}`).
pub fn load_scene(path: &Path) -> Result<Scene> {
    let text = fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    let scene: Scene =
        serde_json::from_str(&text).with_context(|| format!("parsing {}", path.display()))?;
    scene
        .validate()
        .with_context(|| format!("validating {}", path.display()))?;
    Ok(scene)
}

/// Canonical single-line JSON with a trailing newline; `load` then `save`
/// reproduces the bytes exactly.
pub fn save_scene(scene: &Scene, path: &Path) -> Result<()> {
    scene.validate()?;
    let mut text = serde_json::to_string(scene)?;
    text.push('\n');
    fs::write(path, text).with_context(|| format!("writing {}", path.display()))?;
    Ok(())
}

/// Parses an OBJMAP v1 file into an objectness map; values must lie in [0, 1].
pub fn load_map(path: &Path) -> Result<GistMap> {
    let grid = load_grid(path)?;
    GistMap::new(grid).with_context(|| format!("{}: objectness values must be in [0, 1]", path.display()))
}

/// Parses an OBJMAP v1 grid without the objectness range restriction.
pub fn load_grid(path: &Path) -> Result<Grid> {
    let text = fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    let mut lines = text.lines();
    let header = lines.next().context("empty OBJMAP file")?;
    let fields: Vec<&str> = header.split_whitespace().collect();
    if fields.len() != 4 || fields[0] != "OBJMAP" || fields[1] != "v1" {
        bail!("{}: bad OBJMAP v1 header: {header:?}", path.display());
    }
    let width: usize = fields[2].parse().context("bad width in OBJMAP header")?;
    let height: usize = fields[3].parse().context("bad height in OBJMAP header")?;
    let mut data = Vec::with_capacity(width * height);
    let mut rows = 0usize;
    for line in lines {
        if line.is_empty() {
            continue;
        }
        let mut cols = 0usize;
        for token in line.split_whitespace() {
            let v: f64 = token
                .parse()
                .with_context(|| format!("bad value {token:?} in row {rows}"))?;
            data.push(v);
            cols += 1;
        }
        if cols != width {
            bail!(
                "{}: row {rows} has {cols} values, header says {width}",
                path.display()
            );
        }
        rows += 1;
    }
    if rows != height {
        bail!("{}: {rows} rows, header says {height}", path.display());
    }
    Ok(Grid::from_vec(width, height, data))
}

/// Writes a grid as OBJMAP v1 (12 decimal places, LF line endings).
pub fn save_grid(grid: &Grid, path: &Path) -> Result<()> {
    let mut out = String::new();
    out.push_str(&format!("OBJMAP v1 {} {}\n", grid.width(), grid.height()));
    for row in 0..grid.height() {
        for col in 0..grid.width() {
            if col > 0 {
                out.push(' ');
            }
            out.push_str(&format!("{:.12}", grid.get(row, col)));
        }
        out.push('\n');
    }
    fs::write(path, out).with_context(|| format!("writing {}", path.display()))?;
    Ok(())
}

pub fn save_map(map: &GistMap, path: &Path) -> Result<()> {
    save_grid(map.grid(), path)
}

pub const GLIMPSE_LOG_HEADER: &str =
    "scene_id,step,row_gist,col_gist,row_vhr,col_vhr,d_glimpse,cum_coverage,stop_reason";
pub const METRICS_HEADER: &str = "policy,scene_id,k,class_id,precision,recall,f1";
pub const TRAJECTORY_HEADER: &str =
    "scene_id,policy,step,tile_i,tile_j,likelihood,prior,posterior,recall,normalized_looks";
pub const SUMMARY_HEADER: &str = "policy,scenes,mean_aurc";

/// Writes a CSV file from a header and pre-rendered rows.
pub fn write_csv(path: &Path, header: &str, rows: &[String]) -> Result<()> {
    let file = fs::File::create(path).with_context(|| format!("creating {}", path.display()))?;
    let mut w = std::io::BufWriter::new(file);
    writeln!(w, "{header}")?;
    for row in rows {
        writeln!(w, "{row}")?;
    }
    w.flush()?;
    Ok(())
}

/// Reads an external detections CSV
/// (`scene_id,glimpse_step,class_id,x,y,w,h,score`, 1-based steps) into
/// scene_id -> step -> detections.
pub fn load_detections(path: &Path) -> Result<BTreeMap<u64, BTreeMap<usize, Vec<Detection>>>> {
    let text = fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    let mut lines = text.lines();
    let header = lines.next().context("empty detections CSV")?;
    let expected = "scene_id,glimpse_step,class_id,x,y,w,h,score";
    if header.trim() != expected {
        bail!("bad detections header {header:?}, expected {expected:?}");
    }
    let mut out: BTreeMap<u64, BTreeMap<usize, Vec<Detection>>> = BTreeMap::new();
    for (lineno, line) in lines.enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.split(',').collect();
        if fields.len() != 8 {
            bail!("line {}: expected 8 fields, got {}", lineno + 2, fields.len());
        }
        let parse_err = |what: &str| format!("line {}: bad {what}", lineno + 2);
        let scene_id: u64 = fields[0].parse().with_context(|| parse_err("scene_id"))?;
        let step: usize = fields[1].parse().with_context(|| parse_err("glimpse_step"))?;
        let class_id: u32 = fields[2].parse().with_context(|| parse_err("class_id"))?;
        let x: u32 = fields[3].parse().with_context(|| parse_err("x"))?;
        let y: u32 = fields[4].parse().with_context(|| parse_err("y"))?;
        let w: u32 = fields[5].parse().with_context(|| parse_err("w"))?;
        let h: u32 = fields[6].parse().with_context(|| parse_err("h"))?;
        let score: f64 = fields[7].parse().with_context(|| parse_err("score"))?;
        out.entry(scene_id).or_default().entry(step).or_default().push(Detection {
            bbox: BBox::new(x, y, w, h),
            class_id,
            score,
            source_glimpse: step,
            object_id_hint: None,
        });
    }
    Ok(out)
}
