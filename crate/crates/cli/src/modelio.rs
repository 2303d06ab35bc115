//! Checkpoint files on disk and evaluation plumbing shared by the `eval`,
//! `reason`, and `ablate` commands.

use std::fs;
use std::path::Path;

use anyhow::{bail, Context, Result};
use racklay_core::gtlayout::View;
use racklay_core::metrics::{EvalAccumulator, EvalClass, EvalTable};
use racklay_core::racklaynet::{predict, ModelConfig, NetworkParams, Variant};
use racklay_core::tensornet::{decode_params, encode_params, Tensor};

use crate::dataset::{LoadedSample, Manifest};

pub fn save_checkpoint(path: &Path, params: &NetworkParams) -> Result<()> {
    let bytes = encode_params(&params.to_named_vec());
    fs::write(path, bytes).with_context(|| format!("writing {}", path.display()))
}

/// Determines the variant from which parameter tensors a checkpoint holds.
pub fn infer_variant(named: &[(String, Tensor<f32>)]) -> Result<Variant> {
    let has = |prefix: &str| named.iter().any(|(n, _)| n.starts_with(prefix));
    let (top, front) = (has("dec.top."), has("dec.front."));
    let disc = has("disc.");
    match (top, front, disc) {
        (true, true, true) => Ok(Variant::DDisc),
        (true, true, false) => Ok(Variant::D),
        (true, false, true) => Ok(Variant::SDisc { view: View::Top }),
        (true, false, false) => Ok(Variant::S { view: View::Top }),
        (false, true, true) => Ok(Variant::SDisc { view: View::Front }),
        (false, true, false) => Ok(Variant::S { view: View::Front }),
        (false, false, _) => bail!("checkpoint holds no decoder parameters"),
    }
}

/// Loads a checkpoint, inferring the variant from its contents and
/// validating every shape against the model configuration.
pub fn load_checkpoint(path: &Path, config: ModelConfig) -> Result<NetworkParams> {
    let bytes = fs::read(path).with_context(|| format!("reading {}", path.display()))?;
    let named = decode_params(&bytes).with_context(|| path.display().to_string())?;
    let variant = infer_variant(&named)?;
    NetworkParams::from_named_vec(config, variant, named)
        .map_err(|e| anyhow::anyhow!("{}: {e}", path.display()))
}

/// Per-class ranking scores from softmax probabilities: the rack class
/// scores a cell by its non-background mass, the box class by the
/// occupied probability alone.
fn class_scores(probs: &Tensor<f32>, channel: usize, class: EvalClass, d: usize) -> Vec<f64> {
    let dd = d * d;
    let base = channel * 3 * dd;
    let data = probs.data();
    (0..dd)
        .map(|cell| {
            let occupied = f64::from(data[base + 2 * dd + cell]);
            match class {
                EvalClass::Box => occupied,
                EvalClass::Rack => occupied + f64::from(data[base + dd + cell]),
            }
        })
        .collect()
}

/// One-hot scores for label grids, used by the oracle evaluation path.
fn label_scores(labels: &[u8], class: EvalClass) -> Vec<f64> {
    labels.iter().map(|&l| if class.includes(l) { 1.0 } else { 0.0 }).collect()
}

/// Accumulates one sample's predictions into the table under construction.
fn push_sample(
    acc: &mut EvalAccumulator,
    manifest: &Manifest,
    sample: &LoadedSample,
    view: View,
    pred_cells: &[u8],
    probs: Option<&Tensor<f32>>,
) {
    let d = manifest.grid;
    let dd = d * d;
    let gt = sample.labels(view);
    for ch in 0..manifest.channels {
        let pred_ch = &pred_cells[ch * dd..(ch + 1) * dd];
        let gt_ch = &gt[ch * dd..(ch + 1) * dd];
        for class in [EvalClass::Rack, EvalClass::Box] {
            let scores = match probs {
                Some(p) => class_scores(p, ch, class, d),
                None => label_scores(pred_ch, class),
            };
            acc.push_channel(view, class, pred_ch, gt_ch, &scores);
        }
    }
}

/// Evaluates a model over loaded samples. With `params` `None` the ground
/// truth is fed back as the prediction (the oracle path).
pub fn evaluate_samples(
    manifest: &Manifest,
    samples: &[LoadedSample],
    params: Option<&NetworkParams>,
) -> Result<EvalTable> {
    if samples.is_empty() {
        bail!("no samples to evaluate");
    }
    let mut acc = EvalAccumulator::new();
    for sample in samples {
        match params {
            None => {
                for view in [View::Top, View::Front] {
                    push_sample(&mut acc, manifest, sample, view, sample.labels(view), None);
                }
            }
            Some(p) => {
                let pred = predict(p, &sample.input)
                    .map_err(|e| anyhow::anyhow!("predicting sample {}: {e}", sample.id))?;
                for view in p.variant.views() {
                    let (labels, probs) = pred.view(view).expect("active view");
                    push_sample(&mut acc, manifest, sample, view, &labels.cells, Some(probs));
                }
            }
        }
    }
    Ok(acc.finish())
}

/// Renders the table as CSV with the documented header.
pub fn table_csv(table: &EvalTable) -> String {
    let mut out = String::from("view,class,miou,map\n");
    for row in &table.rows {
        out.push_str(&format!(
            "{},{},{:.4},{:.4}\n",
            row.view.name(),
            row.class.name(),
            row.miou,
            row.map
        ));
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn variant_inference_covers_all_shapes() {
        let t = |name: &str| (name.to_string(), Tensor::<f32>::zeros(&[1]));
        assert_eq!(
            infer_variant(&[t("enc.0.w"), t("dec.top.head.w")]).unwrap(),
            Variant::S { view: View::Top }
        );
        assert_eq!(
            infer_variant(&[t("dec.front.0.w"), t("disc.front.0.w")]).unwrap(),
            Variant::SDisc { view: View::Front }
        );
        assert_eq!(
            infer_variant(&[t("dec.top.0.w"), t("dec.front.0.w")]).unwrap(),
            Variant::D
        );
        assert!(infer_variant(&[t("enc.0.w")]).is_err());
    }

    #[test]
    fn checkpoint_file_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let cfg = ModelConfig {
            num_channels: 2,
            grid: 16,
            image_width: 32,
            image_height: 32,
            ..ModelConfig::default()
        };
        let params = NetworkParams::init(cfg, Variant::DDisc, 3).unwrap();
        let path = dir.path().join("m.ckpt");
        save_checkpoint(&path, &params).unwrap();
        let back = load_checkpoint(&path, cfg).unwrap();
        assert_eq!(back.variant, Variant::DDisc);
        assert_eq!(back.to_named_vec(), params.to_named_vec());
    }
}
