//! `racklay eval`: score a checkpoint (or the GT oracle) over a dataset
//! split and emit the mIoU/mAP table as CSV.

use std::fs;
use std::path::PathBuf;

use anyhow::{bail, Result};
use clap::Args;
use racklay_core::racklaynet::ModelConfig;

use crate::dataset::{load_manifest, Manifest, Split};
use crate::modelio::{evaluate_samples, load_checkpoint, table_csv};

#[derive(Args)]
pub struct EvalArgs {
    /// Dataset directory or manifest path.
    #[arg(long)]
    pub manifest: PathBuf,
    #[arg(long)]
    pub checkpoint: Option<PathBuf>,
    /// Feed ground truth back as the prediction instead of a model.
    #[arg(long)]
    pub oracle: bool,
    #[arg(long, default_value = "test")]
    pub split: String,
    /// Also write the CSV to this path.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

/// The model dimensions a dataset was generated for.
pub fn manifest_model_config(manifest: &Manifest) -> ModelConfig {
    ModelConfig {
        num_channels: manifest.channels,
        grid: manifest.grid,
        image_width: manifest.image_width,
        image_height: manifest.image_height,
        ..ModelConfig::default()
    }
}

pub fn run(args: EvalArgs) -> Result<()> {
    if args.oracle == args.checkpoint.is_some() {
        bail!("pass exactly one of --checkpoint or --oracle");
    }
    let split = Split::parse(&args.split)?;
    let (manifest, root) = load_manifest(&args.manifest)?;
    let samples = super::train::load_split(&manifest, &root, split)?;

    let params = match &args.checkpoint {
        Some(path) => Some(load_checkpoint(path, manifest_model_config(&manifest))?),
        None => None,
    };
    let table = evaluate_samples(&manifest, &samples, params.as_ref())?;
    let csv = table_csv(&table);
    print!("{csv}");
    if let Some(out) = &args.out {
        if let Some(parent) = out.parent() {
            fs::create_dir_all(parent)?;
        }
        fs::write(out, &csv)?;
    }
    Ok(())
}
