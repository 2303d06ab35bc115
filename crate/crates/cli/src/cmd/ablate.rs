//! `racklay ablate`: train every variant on one dataset and tabulate
//! held-out accuracy side by side.
//!
//! Six runs back the four table rows: the single-view variants are trained
//! once per view and merged into one row each, the dual-view variants fill
//! a whole row from a single run.

use std::fs;
use std::path::PathBuf;

use anyhow::{Context, Result};
use clap::Args;

use racklay_core::gtlayout::View;
use racklay_core::metrics::{EvalClass, EvalTable};
use racklay_core::racklaynet::NetworkParams;

use crate::config::{load_json, save_json, RunConfig};
use crate::dataset::{load_manifest, Split};
use crate::modelio::evaluate_samples;

use super::train::{check_config_matches, load_split, train_model};

#[derive(Args, Debug)]
pub struct AblateArgs {
    /// Dataset directory or manifest.json path.
    #[arg(long)]
    pub manifest: PathBuf,
    /// Base run configuration (JSON); its variant and view fields are
    /// ignored because every variant is trained.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Directory for the comparison table and per-run artifacts.
    #[arg(long)]
    pub out: PathBuf,
    /// Override the base configuration's seed.
    #[arg(long)]
    pub seed: Option<u64>,
    /// Override the base configuration's epoch count.
    #[arg(long)]
    pub epochs: Option<usize>,
}

/// The six trainings, as (variant, view flag, run directory name).
const RUNS: [(&str, Option<&str>, &str); 6] = [
    ("s", Some("top"), "s-top"),
    ("s", Some("front"), "s-front"),
    ("s-disc", Some("top"), "s-disc-top"),
    ("s-disc", Some("front"), "s-disc-front"),
    ("d", None, "d"),
    ("d-disc", None, "d-disc"),
];

fn cell(table: &EvalTable, view: View, class: EvalClass) -> (f64, f64) {
    table
        .rows
        .iter()
        .find(|r| r.view == view && r.class == class)
        .map(|r| (r.miou, r.map))
        .unwrap_or((f64::NAN, f64::NAN))
}

/// Eight columns for one method: per view, rack then box, mIoU then mAP.
fn row_cells(tables: &[&EvalTable]) -> Vec<f64> {
    let mut cells = Vec::with_capacity(8);
    for view in [View::Top, View::Front] {
        let table = tables
            .iter()
            .find(|t| t.rows.iter().any(|r| r.view == view))
            .copied()
            .unwrap_or(tables[0]);
        for class in [EvalClass::Rack, EvalClass::Box] {
            let (miou, map) = cell(table, view, class);
            cells.push(miou);
            cells.push(map);
        }
    }
    cells
}

pub fn run(args: AblateArgs) -> Result<()> {
    let mut base: RunConfig = match &args.config {
        Some(path) => load_json(path)?,
        None => RunConfig::default(),
    };
    if let Some(seed) = args.seed {
        base.seed = seed;
    }
    if let Some(epochs) = args.epochs {
        base.epochs = epochs;
    }

    let (manifest, root) = load_manifest(&args.manifest)?;
    base.channels = manifest.channels;
    base.grid = manifest.grid;
    base.image_width = manifest.image_width;
    base.image_height = manifest.image_height;
    base.extent_m = manifest.extent_m;
    base.range_m = manifest.range_m;
    check_config_matches(&base, &manifest)?;

    let train_loaded = load_split(&manifest, &root, Split::Train)?;
    let test_loaded = load_split(&manifest, &root, Split::Test)?;
    let train_samples: Vec<_> = train_loaded.iter().map(|s| s.train_sample()).collect();
    eprintln!(
        "[ablate] {} train / {} test samples, {} epochs per run",
        train_samples.len(),
        test_loaded.len(),
        base.epochs
    );

    fs::create_dir_all(&args.out).with_context(|| format!("creating {}", args.out.display()))?;

    let mut tables: Vec<(String, EvalTable)> = Vec::new();
    for (variant_name, view, run_name) in RUNS {
        let mut cfg = base.clone();
        cfg.variant = variant_name.to_string();
        cfg.view = view.map(str::to_string);
        cfg.validate()?;
        let variant = cfg.resolve_variant()?;
        let run_dir = args.out.join("runs").join(run_name);
        fs::create_dir_all(&run_dir)?;
        save_json(&run_dir.join("run_config.json"), &cfg)?;
        let initial = NetworkParams::init(cfg.model_config(), variant, cfg.seed)
            .map_err(|e| anyhow::anyhow!("{e}"))?;
        let params = train_model(&cfg, &train_samples, initial, &run_dir, run_name)?;
        let table = evaluate_samples(&manifest, &test_loaded, Some(&params))?;
        fs::write(run_dir.join("eval.csv"), crate::modelio::table_csv(&table))?;
        tables.push((run_name.to_string(), table));
    }

    let table_of = |name: &str| -> &EvalTable {
        &tables.iter().find(|(n, _)| n == name).expect("run recorded").1
    };

    let mut csv = String::from(
        "method,top_rack_miou,top_rack_map,top_box_miou,top_box_map,\
         front_rack_miou,front_rack_map,front_box_miou,front_box_map\n",
    );
    let methods: [(&str, Vec<&EvalTable>); 4] = [
        ("racklay-s", vec![table_of("s-top"), table_of("s-front")]),
        ("racklay-s-disc", vec![table_of("s-disc-top"), table_of("s-disc-front")]),
        ("racklay-d", vec![table_of("d")]),
        ("racklay-d-disc", vec![table_of("d-disc")]),
    ];
    for (method, method_tables) in &methods {
        csv.push_str(method);
        for value in row_cells(method_tables) {
            csv.push_str(&format!(",{value:.4}"));
        }
        csv.push('\n');
    }

    let csv_path = args.out.join("ablation.csv");
    fs::write(&csv_path, &csv).with_context(|| format!("writing {}", csv_path.display()))?;
    print!("{csv}");
    eprintln!("[ablate] wrote {}", csv_path.display());
    Ok(())
}
