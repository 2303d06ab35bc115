//! JSON configuration files for dataset generation and training runs.
//!
//! Both formats carry a `version` field so stale files fail loudly rather
//! than silently deserializing into new semantics.

use std::fs;
use std::path::Path;

use anyhow::{bail, Context, Result};
use racklay_core::gtlayout::{DetectionWindow, View};
use racklay_core::racklaynet::{ModelConfig, Variant};
use racklay_core::scenegen::{CameraConfig, SceneConfig};
use serde::{Deserialize, Serialize};

pub const CONFIG_VERSION: u32 = 1;

fn default_version() -> u32 {
    CONFIG_VERSION
}

/// Everything `gen` needs to synthesize a dataset.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct GenConfig {
    #[serde(default = "default_version")]
    pub version: u32,
    /// Number of samples to generate.
    pub count: usize,
    /// Shelf channels per view (R).
    pub channels: usize,
    /// Layout grid side (D).
    pub grid: usize,
    /// Relative train/val/test proportions.
    pub split: [usize; 3],
    pub scene: SceneConfig,
    pub camera: CameraConfig,
    pub window: DetectionWindow,
}

impl Default for GenConfig {
    fn default() -> GenConfig {
        GenConfig {
            version: CONFIG_VERSION,
            count: 600,
            channels: 4,
            grid: 64,
            split: [4, 1, 1],
            scene: SceneConfig::default(),
            camera: CameraConfig::default(),
            window: DetectionWindow::default(),
        }
    }
}

impl GenConfig {
    pub fn validate(&self) -> Result<()> {
        if self.version != CONFIG_VERSION {
            bail!("unsupported gen config version {}", self.version);
        }
        if self.count == 0 {
            bail!("count must be positive");
        }
        if self.split.iter().sum::<usize>() == 0 {
            bail!("split proportions must not all be zero");
        }
        if self.channels < self.scene.num_shelves {
            bail!(
                "channels {} cannot hold {} shelves",
                self.channels,
                self.scene.num_shelves
            );
        }
        if self.grid == 0 {
            bail!("grid must be positive");
        }
        Ok(())
    }
}

/// Training run settings; mirrors the dataset dimensions so mismatches are
/// caught before any optimization happens.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct RunConfig {
    #[serde(default = "default_version")]
    pub version: u32,
    /// One of `s`, `s-disc`, `d`, `d-disc`.
    pub variant: String,
    /// Required for `s`/`s-disc`, forbidden otherwise.
    #[serde(default)]
    pub view: Option<String>,
    pub channels: usize,
    pub grid: usize,
    pub image_width: usize,
    pub image_height: usize,
    pub extent_m: f64,
    pub range_m: f64,
    pub lr: f32,
    pub momentum: f32,
    pub lambda_adv: f32,
    pub epochs: usize,
    pub batch_size: usize,
    pub seed: u64,
    #[serde(default = "default_shuffle")]
    pub shuffle: bool,
}

fn default_shuffle() -> bool {
    true
}

impl Default for RunConfig {
    fn default() -> RunConfig {
        RunConfig {
            version: CONFIG_VERSION,
            variant: "d".to_string(),
            view: None,
            channels: 4,
            grid: 64,
            image_width: 128,
            image_height: 128,
            extent_m: 8.0,
            range_m: 5.0,
            lr: 0.005,
            momentum: 0.9,
            lambda_adv: 0.01,
            epochs: 10,
            batch_size: 8,
            seed: 0,
            shuffle: true,
        }
    }
}

pub fn parse_view(name: &str) -> Result<View> {
    match name {
        "top" => Ok(View::Top),
        "front" => Ok(View::Front),
        other => bail!("unknown view {other:?} (expected top or front)"),
    }
}

impl RunConfig {
    /// Resolves the variant string plus optional view into the model
    /// variant, enforcing the view rules.
    pub fn resolve_variant(&self) -> Result<Variant> {
        let view = match &self.view {
            Some(name) => Some(parse_view(name)?),
            None => None,
        };
        match (self.variant.as_str(), view) {
            ("s", Some(v)) => Ok(Variant::S { view: v }),
            ("s-disc", Some(v)) => Ok(Variant::SDisc { view: v }),
            ("s" | "s-disc", None) => {
                bail!("variant {:?} needs a view (top or front)", self.variant)
            }
            ("d", None) => Ok(Variant::D),
            ("d-disc", None) => Ok(Variant::DDisc),
            ("d" | "d-disc", Some(_)) => bail!(
                "variant {:?} decodes both views; the view flag only applies to s variants",
                self.variant
            ),
            (other, _) => bail!("unknown variant {other:?} (expected s, s-disc, d, d-disc)"),
        }
    }

    pub fn model_config(&self) -> ModelConfig {
        ModelConfig {
            num_channels: self.channels,
            grid: self.grid,
            image_width: self.image_width,
            image_height: self.image_height,
            ..ModelConfig::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.version != CONFIG_VERSION {
            bail!("unsupported run config version {}", self.version);
        }
        let variant = self.resolve_variant()?;
        self.model_config()
            .validate(variant)
            .map_err(|e| anyhow::anyhow!("{e}"))?;
        if self.batch_size == 0 {
            bail!("batch_size must be positive");
        }
        if !self.lr.is_finite() || self.lr <= 0.0 {
            bail!("lr must be positive and finite");
        }
        Ok(())
    }
}

pub fn load_json<T: for<'de> Deserialize<'de>>(path: &Path) -> Result<T> {
    let text = fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    serde_json::from_str(&text).with_context(|| format!("parsing {}", path.display()))
}

pub fn save_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let text = serde_json::to_string_pretty(value)?;
    fs::write(path, text).with_context(|| format!("writing {}", path.display()))
}
