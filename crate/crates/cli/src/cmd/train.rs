//! `racklay train`: optimize one network variant over a dataset split.
//!
//! Writes `checkpoint.ckpt` (refreshed every epoch, so runs are resumable)
//! and `loss.csv` with one row per epoch into the output directory.

use std::fs::{self, File};
use std::io::Write as _;
use std::path::{Path, PathBuf};
use std::time::Instant;

use anyhow::{bail, Context, Result};
use clap::Args;
use racklay_core::racklaynet::{NetworkParams, TrainHyper, TrainSample, Trainer};
use racklay_core::rng::SplitMix64;

use crate::config::{load_json, RunConfig};
use crate::dataset::{load_manifest, load_sample, Manifest, Split};
use crate::modelio::{load_checkpoint, save_checkpoint};

#[derive(Args)]
pub struct TrainArgs {
    /// Dataset directory or manifest path.
    #[arg(long)]
    pub manifest: PathBuf,
    /// Run config JSON; defaults are used when omitted.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Output directory for checkpoint and loss log.
    #[arg(long)]
    pub out: PathBuf,
    /// Overrides the config variant (s, s-disc, d, d-disc).
    #[arg(long)]
    pub variant: Option<String>,
    /// Overrides the config view; s variants only.
    #[arg(long)]
    pub view: Option<String>,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub epochs: Option<usize>,
    /// Continue from an existing checkpoint instead of a fresh
    /// initialization (optimizer momentum starts at zero).
    #[arg(long)]
    pub resume: Option<PathBuf>,
}

/// Fails when the run config disagrees with the dataset's dimensions.
pub fn check_config_matches(cfg: &RunConfig, manifest: &Manifest) -> Result<()> {
    let pairs = [
        ("channels", cfg.channels, manifest.channels),
        ("grid", cfg.grid, manifest.grid),
        ("image_width", cfg.image_width, manifest.image_width),
        ("image_height", cfg.image_height, manifest.image_height),
    ];
    for (name, config, dataset) in pairs {
        if config != dataset {
            bail!("config {name} = {config} but the dataset was generated with {dataset}");
        }
    }
    if cfg.extent_m != manifest.extent_m {
        bail!(
            "config extent_m = {} but the dataset was generated with {}",
            cfg.extent_m,
            manifest.extent_m
        );
    }
    if cfg.range_m != manifest.range_m {
        bail!(
            "config range_m = {} but the dataset was generated with {}",
            cfg.range_m,
            manifest.range_m
        );
    }
    Ok(())
}

/// Loads every sample of a split into memory.
pub fn load_split(manifest: &Manifest, root: &Path, split: Split) -> Result<Vec<crate::dataset::LoadedSample>> {
    manifest
        .of_split(split)
        .into_iter()
        .map(|entry| load_sample(manifest, root, entry))
        .collect()
}

fn shuffle(indices: &mut [usize], rng: &mut SplitMix64) {
    for i in (1..indices.len()).rev() {
        let j = rng.below(i as u64 + 1) as usize;
        indices.swap(i, j);
    }
}

/// Trains over preloaded samples, writing artifacts under `out_dir`.
/// Returns the final parameters; `label` tags progress lines.
pub fn train_model(
    cfg: &RunConfig,
    samples: &[TrainSample],
    initial: NetworkParams,
    out_dir: &Path,
    label: &str,
) -> Result<NetworkParams> {
    if samples.is_empty() {
        bail!("training split is empty");
    }
    fs::create_dir_all(out_dir).with_context(|| format!("creating {}", out_dir.display()))?;
    let checkpoint_path = out_dir.join("checkpoint.ckpt");
    let hyper = TrainHyper { lr: cfg.lr, momentum: cfg.momentum, lambda_adv: cfg.lambda_adv };
    let mut trainer = Trainer::new(initial, hyper);
    save_checkpoint(&checkpoint_path, &trainer.params)?;

    let mut log = File::create(out_dir.join("loss.csv"))
        .with_context(|| format!("creating loss log in {}", out_dir.display()))?;
    writeln!(log, "epoch,sup_top,sup_front,adv_top,adv_front,disc_top,disc_front,seconds")?;

    let n = samples.len();
    let mut order: Vec<usize> = (0..n).collect();
    for epoch in 0..cfg.epochs {
        let start = Instant::now();
        if cfg.shuffle {
            let mut rng = SplitMix64::substream(cfg.seed, (1u64 << 32) + epoch as u64);
            shuffle(&mut order, &mut rng);
        }
        let mut sup = [0.0f64; 2];
        let mut adv = [0.0f64; 2];
        let mut disc = [0.0f64; 2];
        let mut batches = 0usize;
        for chunk in order.chunks(cfg.batch_size) {
            let batch: Vec<TrainSample> = chunk.iter().map(|&i| samples[i].clone()).collect();
            let report = trainer
                .train_step(&batch)
                .map_err(|e| anyhow::anyhow!("aborting at epoch {epoch}: {e}"))?;
            sup[0] += report.sup_top;
            sup[1] += report.sup_front;
            adv[0] += report.adv_top;
            adv[1] += report.adv_front;
            disc[0] += report.disc_top;
            disc[1] += report.disc_front;
            batches += 1;
        }
        // Supervised terms are batch sums, so normalize per sample; the
        // adversarial terms are batch means, so normalize per batch.
        let per_sample = |v: f64| v / n as f64;
        let per_batch = |v: f64| v / batches as f64;
        let seconds = start.elapsed().as_secs_f64();
        writeln!(
            log,
            "{epoch},{:.6},{:.6},{:.6},{:.6},{:.6},{:.6},{seconds:.2}",
            per_sample(sup[0]),
            per_sample(sup[1]),
            per_batch(adv[0]),
            per_batch(adv[1]),
            per_batch(disc[0]),
            per_batch(disc[1]),
        )?;
        log.flush()?;
        save_checkpoint(&checkpoint_path, &trainer.params)?;
        eprintln!(
            "[{label}] epoch {}/{} sup {:.4}/{:.4} adv {:.4}/{:.4} disc {:.4}/{:.4} ({seconds:.1}s)",
            epoch + 1,
            cfg.epochs,
            per_sample(sup[0]),
            per_sample(sup[1]),
            per_batch(adv[0]),
            per_batch(adv[1]),
            per_batch(disc[0]),
            per_batch(disc[1]),
        );
    }
    Ok(trainer.params)
}

pub fn run(args: TrainArgs) -> Result<()> {
    let mut cfg: RunConfig = match &args.config {
        Some(path) => load_json(path)?,
        None => RunConfig::default(),
    };
    if let Some(v) = args.variant {
        cfg.variant = v;
        if matches!(cfg.variant.as_str(), "d" | "d-disc") {
            cfg.view = None;
        }
    }
    if let Some(v) = args.view {
        cfg.view = Some(v);
    }
    if let Some(s) = args.seed {
        cfg.seed = s;
    }
    if let Some(e) = args.epochs {
        cfg.epochs = e;
    }
    cfg.validate()?;
    let variant = cfg.resolve_variant()?;

    let (manifest, root) = load_manifest(&args.manifest)?;
    check_config_matches(&cfg, &manifest)?;

    let loaded = load_split(&manifest, &root, Split::Train)?;
    let samples: Vec<TrainSample> = loaded.iter().map(|s| s.train_sample()).collect();

    let initial = match &args.resume {
        Some(path) => {
            let params = load_checkpoint(path, cfg.model_config())?;
            if params.variant != variant {
                bail!(
                    "checkpoint {} holds a {} model but the config asks for {}",
                    path.display(),
                    params.variant.family_label(),
                    variant.family_label()
                );
            }
            params
        }
        None => NetworkParams::init(cfg.model_config(), variant, cfg.seed)
            .map_err(|e| anyhow::anyhow!("{e}"))?,
    };

    fs::create_dir_all(&args.out)?;
    crate::config::save_json(&args.out.join("run_config.json"), &cfg)?;
    train_model(&cfg, &samples, initial, &args.out, variant.family_label())?;
    println!("checkpoint written to {}", args.out.join("checkpoint.ckpt").display());
    Ok(())
}
