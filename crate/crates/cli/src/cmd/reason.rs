//! `racklay reason`: reconstruct per-shelf cuboids from a pair of layout
//! views and report stack counts and free volume.
//!
//! Two modes: `--sample --oracle` feeds a dataset sample's ground-truth
//! layouts straight into the reasoner; `--image --checkpoint` runs the
//! network first. Both write `report.json` plus per-view overlay images
//! and print the summary sentence.

use std::fs;
use std::path::PathBuf;

use anyhow::{bail, Result};
use clap::Args;
use racklay_core::gtlayout::{LabelMap, View};
use racklay_core::racklaynet::predict;
use racklay_core::reason3d::{analyze_rack, report_sentence, RackGeom};
use racklay_core::scenegen::SceneConfig;

use crate::config::{load_json, save_json, GenConfig};
use crate::dataset::{find_entry_for_dir, load_manifest, load_sample, load_scene};
use crate::formats::read_ppm;
use crate::modelio::load_checkpoint;

#[derive(Args)]
pub struct ReasonArgs {
    /// Dataset sample directory (oracle mode).
    #[arg(long)]
    pub sample: Option<PathBuf>,
    /// Use the sample's ground truth instead of a model.
    #[arg(long)]
    pub oracle: bool,
    /// Manifest path when it cannot be inferred from --sample.
    #[arg(long)]
    pub manifest: Option<PathBuf>,
    /// Input image (checkpoint mode).
    #[arg(long)]
    pub image: Option<PathBuf>,
    #[arg(long)]
    pub checkpoint: Option<PathBuf>,
    /// Generation config supplying rack geometry in checkpoint mode;
    /// defaults are used when omitted.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Output directory; omit to skip writing artifacts.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

fn geom_from_scene_config(cfg: &SceneConfig) -> RackGeom {
    RackGeom {
        shelf_width_cm: cfg.shelf_width_m * 100.0,
        shelf_depth_cm: cfg.shelf_depth_m * 100.0,
        inter_shelf_height_cm: cfg.inter_shelf_height_m * 100.0,
    }
}

pub fn run(args: ReasonArgs) -> Result<()> {
    let (top, front, extent_m, geom, channels, grid): (LabelMap, LabelMap, f64, RackGeom, usize, usize);

    match (&args.sample, &args.checkpoint) {
        (Some(sample_dir), None) => {
            if !args.oracle {
                bail!("sample mode reads ground truth; pass --oracle to confirm");
            }
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
            let scene = load_scene(&root, entry)?;
            channels = manifest.channels;
            grid = manifest.grid;
            extent_m = manifest.extent_m;
            geom = geom_from_scene_config(&scene.config);
            let to_map = |cells: &[u8]| LabelMap {
                channels,
                d: grid,
                cells: cells.to_vec(),
            };
            top = to_map(&sample.top);
            front = to_map(&sample.front);
        }
        (None, Some(checkpoint)) => {
            let image_path = args
                .image
                .as_ref()
                .ok_or_else(|| anyhow::anyhow!("checkpoint mode needs --image"))?;
            let gen: GenConfig = match &args.config {
                Some(path) => load_json(path)?,
                None => GenConfig::default(),
            };
            channels = gen.channels;
            grid = gen.grid;
            extent_m = gen.window.extent_m;
            geom = geom_from_scene_config(&gen.scene);
            let model_cfg = racklay_core::racklaynet::ModelConfig {
                num_channels: channels,
                grid,
                image_width: gen.camera.image_width,
                image_height: gen.camera.image_height,
                ..racklay_core::racklaynet::ModelConfig::default()
            };
            let params = load_checkpoint(checkpoint, model_cfg)?;
            if !params.variant.has_view(View::Top) || !params.variant.has_view(View::Front) {
                bail!(
                    "reasoning needs both views; checkpoint is {}",
                    params.variant.family_label()
                );
            }
            let input = racklay_core::racklaynet::image_to_input(&read_ppm(image_path)?);
            let pred = predict(&params, &input).map_err(|e| anyhow::anyhow!("{e}"))?;
            top = pred.top.expect("top view").0;
            front = pred.front.expect("front view").0;
        }
        _ => bail!("pass either --sample --oracle or --image with --checkpoint"),
    }

    let report = analyze_rack(&top, &front, extent_m, &geom);
    println!("{}", report_sentence(&report));

    if let Some(out) = &args.out {
        fs::create_dir_all(out)?;
        save_json(&out.join("report.json"), &report)?;
        for (view, map) in [(View::Top, &top), (View::Front, &front)] {
            let overlay = super::viz::overlay_image(&map.cells, channels, grid);
            crate::formats::write_ppm(
                &out.join(format!("layout_{}.ppm", view.name())),
                &overlay,
            )?;
        }
    }
    Ok(())
}
