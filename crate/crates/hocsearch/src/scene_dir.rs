//! Scene directories: `scene.json`, per-frame depth maps and masks, and the
//! target cloud.

use std::path::Path;

use hoc_core::objective::{Frame, Scene};
use hoc_core::render::Camera;
use hoc_core::synth::{GroundTruth, SceneSpec};
use hoc_core::OrientedBox;
use serde::{Deserialize, Serialize};

use crate::error::{self, FormatError, Result};
use crate::{cloud, raster};

pub const SCENE_VERSION: u64 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SceneManifest {
    pub version: u64,
    pub id: String,
    pub spec: Option<SceneSpec>,
    pub ground_truth: Option<GroundTruth>,
    pub bbox: OrientedBox,
    pub category_hint: Option<String>,
    pub target: String,
    pub frames: Vec<FrameEntry>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FrameEntry {
    pub camera: Camera,
    pub background: String,
    pub scan: String,
    pub sensor: String,
    pub target_mask: String,
}

/// A scene loaded from disk together with its bookkeeping.
#[derive(Debug, Clone, PartialEq)]
pub struct StoredScene {
    pub id: String,
    pub spec: Option<SceneSpec>,
    pub ground_truth: Option<GroundTruth>,
    pub scene: Scene,
}

pub fn write_scene(dir: &Path, stored: &StoredScene) -> Result<()> {
    let scene = &stored.scene;
    let mut frames = Vec::with_capacity(scene.frames.len());
    for (i, f) in scene.frames.iter().enumerate() {
        let stem = format!("frame_{i:02}");
        let name = |p: std::path::PathBuf| p.file_name().expect("file path").to_string_lossy().into_owned();
        let background = name(raster::write_depth(dir, &format!("{stem}_background"), &f.background)?);
        let scan = name(raster::write_depth(dir, &format!("{stem}_scan"), &f.scan)?);
        let sensor = name(raster::write_depth(dir, &format!("{stem}_sensor"), &f.sensor)?);
        let target_mask = format!("{stem}_mask.pbm");
        raster::write_mask(&dir.join(&target_mask), &f.target_mask)?;
        frames.push(FrameEntry { camera: f.camera.clone(), background, scan, sensor, target_mask });
    }
    cloud::write(&dir.join("target.xyz"), &scene.target_points)?;
    let manifest = SceneManifest {
        version: SCENE_VERSION,
        id: stored.id.clone(),
        spec: stored.spec.clone(),
        ground_truth: stored.ground_truth,
        bbox: scene.bbox,
        category_hint: scene.category_hint.clone(),
        target: "target.xyz".into(),
        frames,
    };
    error::write_json(&dir.join("scene.json"), &manifest)
}

pub fn read_scene(dir: &Path) -> Result<StoredScene> {
    let manifest_path = dir.join("scene.json");
    let m: SceneManifest = error::read_versioned(&manifest_path, SCENE_VERSION)?;
    let mut frames = Vec::with_capacity(m.frames.len());
    for f in &m.frames {
        let mask_path = dir.join(&f.target_mask);
        let frame = Frame {
            camera: f.camera.clone(),
            background: raster::read_depth(&dir.join(&f.background))?,
            scan: raster::read_depth(&dir.join(&f.scan))?,
            sensor: raster::read_depth(&dir.join(&f.sensor))?,
            target_mask: raster::read_mask(&mask_path)?,
        };
        frame.validate().map_err(|e| FormatError::invalid(&mask_path, e))?;
        frames.push(frame);
    }
    let scene = Scene { target_points: cloud::read(&dir.join(&m.target))?, bbox: m.bbox, frames, category_hint: m.category_hint };
    scene.validate().map_err(|e| FormatError::invalid(&manifest_path, e))?;
    Ok(StoredScene { id: m.id, spec: m.spec, ground_truth: m.ground_truth, scene })
}

/// Scene directories directly below `root` (those holding a `scene.json`),
/// sorted by name.
pub fn list_scenes(root: &Path) -> Result<Vec<std::path::PathBuf>> {
    let mut dirs = Vec::new();
    for entry in std::fs::read_dir(root).map_err(|e| FormatError::io(root, e))? {
        let entry = entry.map_err(|e| FormatError::io(root, e))?;
        let p = entry.path();
        if p.join("scene.json").is_file() {
            dirs.push(p);
        }
    }
    dirs.sort();
    Ok(dirs)
}
