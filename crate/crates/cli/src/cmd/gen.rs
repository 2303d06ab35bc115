//! `racklay gen`: synthesize a dataset directory from a config and seed.

use std::path::PathBuf;

use anyhow::Result;
use clap::Args;

use crate::config::{load_json, GenConfig};
use crate::dataset::{self, Split};

#[derive(Args)]
pub struct GenArgs {
    /// Generation config JSON; defaults are used when omitted.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Overrides the config's sample count.
    #[arg(long)]
    pub count: Option<usize>,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Output dataset directory.
    #[arg(long)]
    pub out: PathBuf,
}

pub fn run(args: GenArgs) -> Result<()> {
    let mut cfg: GenConfig = match &args.config {
        Some(path) => load_json(path)?,
        None => GenConfig::default(),
    };
    if let Some(count) = args.count {
        cfg.count = count;
    }
    let manifest = dataset::generate_dataset(&cfg, args.seed, &args.out)?;
    dataset::check_integrity(&manifest, &args.out)?;
    println!(
        "wrote {} samples ({} train / {} val / {} test) to {}",
        manifest.samples.len(),
        manifest.of_split(Split::Train).len(),
        manifest.of_split(Split::Val).len(),
        manifest.of_split(Split::Test).len(),
        args.out.display()
    );
    Ok(())
}
