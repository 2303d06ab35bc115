//! Dataset layout on disk, the manifest format, and sample generation.
//!
//! A dataset directory holds `manifest.json` plus one subdirectory per
//! sample containing the rendered image (PPM), per-shelf layout channels
//! for both views (PGM), and JSON sidecars for the scene description and
//! camera. Every sample is derived from an RNG substream keyed by its
//! index, so generation is deterministic for a seed regardless of worker
//! count or ordering.

use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use racklay_core::gtlayout::{front_layout, top_layout, LabelMap, View};
use racklay_core::racklaynet::{image_to_input, TrainSample};
use racklay_core::render::rasterize;
use racklay_core::rng::SplitMix64;
use racklay_core::scenegen::{generate_scene, sample_camera, SceneDescription};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::config::GenConfig;
use crate::formats;

pub const MANIFEST_VERSION: u32 = 1;
pub const MANIFEST_NAME: &str = "manifest.json";

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Split {
    Train,
    Val,
    Test,
}

impl Split {
    pub fn parse(name: &str) -> Result<Split> {
        match name {
            "train" => Ok(Split::Train),
            "val" => Ok(Split::Val),
            "test" => Ok(Split::Test),
            other => bail!("unknown split {other:?} (expected train, val, or test)"),
        }
    }
}

/// One dataset sample; all paths are relative to the manifest directory.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct SampleEntry {
    pub id: usize,
    pub split: Split,
    pub image: String,
    pub scene: String,
    pub camera: String,
    pub top: Vec<String>,
    pub front: Vec<String>,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct Manifest {
    pub version: u32,
    pub channels: usize,
    pub grid: usize,
    pub extent_m: f64,
    pub range_m: f64,
    pub image_width: usize,
    pub image_height: usize,
    pub samples: Vec<SampleEntry>,
}

impl Manifest {
    pub fn of_split(&self, split: Split) -> Vec<&SampleEntry> {
        self.samples.iter().filter(|s| s.split == split).collect()
    }
}

/// Proportional split assignment: indices cycle through train/val/test
/// according to the configured ratios.
pub fn split_for_index(index: usize, ratios: [usize; 3]) -> Split {
    let cycle = ratios.iter().sum::<usize>();
    let slot = index % cycle;
    if slot < ratios[0] {
        Split::Train
    } else if slot < ratios[0] + ratios[1] {
        Split::Val
    } else {
        Split::Test
    }
}

fn sample_dir_name(id: usize) -> String {
    format!("samples/{id:06}")
}

/// Generates one sample's files and returns its manifest entry.
fn generate_sample(cfg: &GenConfig, seed: u64, id: usize, root: &Path) -> Result<SampleEntry> {
    let mut rng = SplitMix64::substream(seed, id as u64);
    let scene_seed = rng.next_u64();
    let scene = generate_scene(&cfg.scene, scene_seed).map_err(|e| anyhow::anyhow!("{e}"))?;
    let camera = sample_camera(&cfg.camera, &mut rng);
    let image = rasterize(&scene, &camera);
    let top = top_layout(&scene, &camera, &cfg.window, cfg.channels, cfg.grid)
        .map_err(|e| anyhow::anyhow!("{e}"))?;
    let front = front_layout(&scene, &camera, &cfg.window, cfg.channels, cfg.grid)
        .map_err(|e| anyhow::anyhow!("{e}"))?;

    let rel = sample_dir_name(id);
    let dir = root.join(&rel);
    fs::create_dir_all(&dir).with_context(|| format!("creating {}", dir.display()))?;

    let image_rel = format!("{rel}/image.ppm");
    formats::write_ppm(&root.join(&image_rel), &image)?;
    let scene_rel = format!("{rel}/scene.json");
    crate::config::save_json(&root.join(&scene_rel), &scene)?;
    let camera_rel = format!("{rel}/camera.json");
    crate::config::save_json(&root.join(&camera_rel), &camera)?;

    let write_view = |map: &LabelMap, stem: &str| -> Result<Vec<String>> {
        let mut paths = Vec::with_capacity(cfg.channels);
        for ch in 0..cfg.channels {
            let path_rel = format!("{rel}/{stem}_{ch:02}.pgm");
            let cells = &map.cells[ch * cfg.grid * cfg.grid..(ch + 1) * cfg.grid * cfg.grid];
            formats::write_pgm(&root.join(&path_rel), cells, cfg.grid, cfg.grid)?;
            paths.push(path_rel);
        }
        Ok(paths)
    };
    let top_paths = write_view(&top.map, "top")?;
    let front_paths = write_view(&front.map, "front")?;

    Ok(SampleEntry {
        id,
        split: split_for_index(id, cfg.split),
        image: image_rel,
        scene: scene_rel,
        camera: camera_rel,
        top: top_paths,
        front: front_paths,
    })
}

/// Generates the full dataset under `root` and writes its manifest.
pub fn generate_dataset(cfg: &GenConfig, seed: u64, root: &Path) -> Result<Manifest> {
    cfg.validate()?;
    fs::create_dir_all(root).with_context(|| format!("creating {}", root.display()))?;
    let mut samples: Vec<SampleEntry> = (0..cfg.count)
        .into_par_iter()
        .map(|id| generate_sample(cfg, seed, id, root))
        .collect::<Result<_>>()?;
    samples.sort_by_key(|s| s.id);
    let manifest = Manifest {
        version: MANIFEST_VERSION,
        channels: cfg.channels,
        grid: cfg.grid,
        extent_m: cfg.window.extent_m,
        range_m: cfg.window.range_m,
        image_width: cfg.camera.image_width,
        image_height: cfg.camera.image_height,
        samples,
    };
    crate::config::save_json(&root.join(MANIFEST_NAME), &manifest)?;
    Ok(manifest)
}

/// Loads and sanity-checks a manifest; `path` may be the dataset directory
/// or the manifest file itself. Returns the manifest plus its root dir.
pub fn load_manifest(path: &Path) -> Result<(Manifest, PathBuf)> {
    let file = if path.is_dir() { path.join(MANIFEST_NAME) } else { path.to_path_buf() };
    let manifest: Manifest = crate::config::load_json(&file)?;
    if manifest.version != MANIFEST_VERSION {
        bail!("{}: unsupported manifest version {}", file.display(), manifest.version);
    }
    let root = file.parent().unwrap_or(Path::new(".")).to_path_buf();
    Ok((manifest, root))
}

/// Verifies that every file referenced by the manifest exists.
pub fn check_integrity(manifest: &Manifest, root: &Path) -> Result<()> {
    for sample in &manifest.samples {
        let mut paths = vec![&sample.image, &sample.scene, &sample.camera];
        paths.extend(sample.top.iter());
        paths.extend(sample.front.iter());
        for rel in paths {
            let p = root.join(rel);
            if !p.is_file() {
                bail!("manifest references missing file {}", p.display());
            }
        }
    }
    Ok(())
}

/// Ground truth for one sample, as flat per-view label vectors `[R,D,D]`.
pub struct LoadedSample {
    pub id: usize,
    pub input: racklay_core::tensornet::Tensor<f32>,
    pub top: Vec<u8>,
    pub front: Vec<u8>,
}

pub fn load_sample(manifest: &Manifest, root: &Path, entry: &SampleEntry) -> Result<LoadedSample> {
    let image = formats::read_ppm(&root.join(&entry.image))?;
    if image.width != manifest.image_width || image.height != manifest.image_height {
        bail!(
            "{}: image is {}x{}, manifest says {}x{}",
            entry.image,
            image.width,
            image.height,
            manifest.image_width,
            manifest.image_height
        );
    }
    let d = manifest.grid;
    let read_view = |paths: &[String]| -> Result<Vec<u8>> {
        if paths.len() != manifest.channels {
            bail!("sample {} has {} channels, manifest says {}", entry.id, paths.len(), manifest.channels);
        }
        let mut cells = Vec::with_capacity(manifest.channels * d * d);
        for rel in paths {
            cells.extend(formats::read_pgm(&root.join(rel), d, d)?);
        }
        Ok(cells)
    };
    Ok(LoadedSample {
        id: entry.id,
        input: image_to_input(&image),
        top: read_view(&entry.top)?,
        front: read_view(&entry.front)?,
    })
}

impl LoadedSample {
    pub fn train_sample(&self) -> TrainSample {
        TrainSample {
            input: self.input.clone(),
            top_labels: Some(self.top.clone()),
            front_labels: Some(self.front.clone()),
        }
    }

    pub fn labels(&self, view: View) -> &[u8] {
        match view {
            View::Top => &self.top,
            View::Front => &self.front,
        }
    }
}

/// Resolves a sample directory (named after its numeric id) to its
/// manifest entry.
pub fn find_entry_for_dir<'a>(manifest: &'a Manifest, dir: &Path) -> Result<&'a SampleEntry> {
    let name = dir
        .file_name()
        .and_then(|n| n.to_str())
        .ok_or_else(|| anyhow::anyhow!("bad sample directory {}", dir.display()))?;
    let id: usize = name
        .parse()
        .with_context(|| format!("sample directory name {name:?} is not a numeric id"))?;
    manifest
        .samples
        .iter()
        .find(|s| s.id == id)
        .ok_or_else(|| anyhow::anyhow!("sample {id} is not in the manifest"))
}

/// Reads a sample's scene sidecar (geometry for reasoning and analysis).
pub fn load_scene(root: &Path, entry: &SampleEntry) -> Result<SceneDescription> {
    crate::config::load_json(&root.join(&entry.scene))
}
