//! `racklay viz`: render layout label grids as color-coded images, either
//! from dataset ground truth or from a checkpoint's predictions.

use std::fs;
use std::path::PathBuf;

use anyhow::{bail, Result};
use clap::Args;
use racklay_core::gtlayout::View;
use racklay_core::racklaynet::predict;
use racklay_core::render::Image;
use racklay_core::viz::label_color;

use crate::config::{load_json, GenConfig};
use crate::dataset::{find_entry_for_dir, load_manifest, load_sample};
use crate::formats::{read_ppm, write_ppm};
use crate::modelio::load_checkpoint;

/// Width of the gutter between stacked channel tiles, in pixels.
const GUTTER: usize = 2;
const GUTTER_COLOR: [u8; 3] = [90, 90, 90];

#[derive(Args)]
pub struct VizArgs {
    /// Dataset sample directory; renders its ground truth.
    #[arg(long)]
    pub sample: Option<PathBuf>,
    /// Manifest path when the sample directory is not inside the dataset.
    #[arg(long)]
    pub manifest: Option<PathBuf>,
    /// Input image for prediction mode (with --checkpoint).
    #[arg(long)]
    pub image: Option<PathBuf>,
    #[arg(long)]
    pub checkpoint: Option<PathBuf>,
    /// Generation config providing dimensions in prediction mode without a
    /// manifest; defaults are used when omitted.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Output directory for the rendered images.
    #[arg(long)]
    pub out: PathBuf,
}

/// Stacks a view's channels vertically into one color image, separated by
/// gray gutters.
pub fn overlay_image(cells: &[u8], channels: usize, d: usize) -> Image {
    let height = channels * d + GUTTER * channels.saturating_sub(1);
    let mut img = Image::new(d, height, GUTTER_COLOR);
    for ch in 0..channels {
        let top = ch * (d + GUTTER);
        for row in 0..d {
            for col in 0..d {
                img.set(col, top + row, label_color(cells[ch * d * d + row * d + col]));
            }
        }
    }
    img
}

fn write_view_overlay(
    out_dir: &PathBuf,
    stem: &str,
    view: View,
    cells: &[u8],
    channels: usize,
    d: usize,
) -> Result<PathBuf> {
    let path = out_dir.join(format!("{stem}_{}.ppm", view.name()));
    write_ppm(&path, &overlay_image(cells, channels, d))?;
    Ok(path)
}

pub fn run(args: VizArgs) -> Result<()> {
    fs::create_dir_all(&args.out)?;
    match (&args.sample, &args.checkpoint) {
        (Some(sample_dir), None) => {
            let manifest_path = args
                .manifest
                .clone()
                .or_else(|| {
                    sample_dir.parent().and_then(|p| p.parent()).map(|p| p.to_path_buf())
                })
                .ok_or_else(|| anyhow::anyhow!("cannot locate the dataset manifest"))?;
            let (manifest, root) = load_manifest(&manifest_path)?;
            let entry = find_entry_for_dir(&manifest, sample_dir)?;
            let sample = load_sample(&manifest, &root, entry)?;
            for view in [View::Top, View::Front] {
                let path = write_view_overlay(
                    &args.out,
                    "gt",
                    view,
                    sample.labels(view),
                    manifest.channels,
                    manifest.grid,
                )?;
                println!("{}", path.display());
            }
        }
        (None, Some(checkpoint)) => {
            let image_path = args
                .image
                .as_ref()
                .ok_or_else(|| anyhow::anyhow!("prediction mode needs --image"))?;
            let model_cfg = match &args.manifest {
                Some(path) => super::eval::manifest_model_config(&load_manifest(path)?.0),
                None => {
                    let gen: GenConfig = match &args.config {
                        Some(path) => load_json(path)?,
                        None => GenConfig::default(),
                    };
                    racklay_core::racklaynet::ModelConfig {
                        num_channels: gen.channels,
                        grid: gen.grid,
                        image_width: gen.camera.image_width,
                        image_height: gen.camera.image_height,
                        ..racklay_core::racklaynet::ModelConfig::default()
                    }
                }
            };
            let params = load_checkpoint(checkpoint, model_cfg)?;
            let input = racklay_core::racklaynet::image_to_input(&read_ppm(image_path)?);
            let pred = predict(&params, &input).map_err(|e| anyhow::anyhow!("{e}"))?;
            for view in params.variant.views() {
                let (labels, _) = pred.view(view).expect("active view");
                let path = write_view_overlay(
                    &args.out,
                    "pred",
                    view,
                    &labels.cells,
                    model_cfg.num_channels,
                    model_cfg.grid,
                )?;
                println!("{}", path.display());
            }
        }
        _ => bail!("pass either --sample (ground truth) or --checkpoint with --image"),
    }
    Ok(())
}
