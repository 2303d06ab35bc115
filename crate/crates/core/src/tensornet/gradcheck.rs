//! Finite-difference verification of every differentiable operation.
//!
//! Each case owns its f64 inputs and a builder that assembles a scalar
//! graph from them. The checker compares reverse-mode gradients against
//! central differences computed by re-evaluating the forward pass with
//! single elements nudged by epsilon.

use alloc::vec::Vec;

use crate::rng::SplitMix64;

use super::tape::{NodeId, Tape};
use super::tensor::Tensor;

/// Step used by the central-difference oracle.
pub const FD_EPSILON: f64 = 1e-4;

/// One op (or composition) under test.
pub struct GradCheckCase {
    pub name: &'static str,
    inputs: Vec<Tensor<f64>>,
    build: fn(&mut Tape<f64>, &[NodeId]) -> NodeId,
}

/// Outcome of a case: the worst relative disagreement between analytic and
/// finite-difference gradients over every input element.
#[derive(Clone, Debug)]
pub struct GradCheckReport {
    pub name: &'static str,
    pub max_rel_err: f64,
    pub elements: usize,
}

fn eval(build: fn(&mut Tape<f64>, &[NodeId]) -> NodeId, inputs: &[Tensor<f64>]) -> f64 {
    let mut tape = Tape::new();
    let ids: Vec<NodeId> = inputs.iter().map(|t| tape.leaf(t.clone())).collect();
    let root = build(&mut tape, &ids);
    tape.value_scalar(root)
}

/// Runs one case and reports the worst relative error, using
/// `|a - fd| / max(|a|, |fd|, 1e-4)` so near-zero gradients are compared
/// absolutely.
pub fn check_gradients(case: &GradCheckCase) -> GradCheckReport {
    let mut tape = Tape::new();
    let ids: Vec<NodeId> = case.inputs.iter().map(|t| tape.leaf(t.clone())).collect();
    let root = (case.build)(&mut tape, &ids);
    let grads = tape.backward(root).expect("gradcheck roots are scalars");

    let mut max_rel = 0.0f64;
    let mut elements = 0;
    for (i, input) in case.inputs.iter().enumerate() {
        let analytic = grads.get(ids[i]);
        for e in 0..input.len() {
            let a = analytic.map(|g| g.data()[e]).unwrap_or(0.0);
            let mut nudged = case.inputs.to_vec();
            nudged[i].data_mut()[e] += FD_EPSILON;
            let plus = eval(case.build, &nudged);
            nudged[i].data_mut()[e] -= 2.0 * FD_EPSILON;
            let minus = eval(case.build, &nudged);
            let fd = (plus - minus) / (2.0 * FD_EPSILON);
            let rel = (a - fd).abs() / a.abs().max(fd.abs()).max(1e-4);
            if rel > max_rel {
                max_rel = rel;
            }
            elements += 1;
        }
    }
    GradCheckReport { name: case.name, max_rel_err: max_rel, elements }
}

fn tensor(rng: &mut SplitMix64, dims: &[usize], lo: f64, hi: f64) -> Tensor<f64> {
    let n = dims.iter().product();
    let data = (0..n).map(|_| rng.range_f64(lo, hi)).collect();
    Tensor::from_vec(dims, data).unwrap()
}

/// Values away from zero so leaky-ReLU kinks never sit within an epsilon
/// of a finite-difference probe.
fn tensor_off_kink(rng: &mut SplitMix64, dims: &[usize]) -> Tensor<f64> {
    let n = dims.iter().product();
    let data = (0..n)
        .map(|_| {
            let mag = rng.range_f64(0.05, 1.0);
            if rng.next_f64() < 0.5 {
                -mag
            } else {
                mag
            }
        })
        .collect();
    Tensor::from_vec(dims, data).unwrap()
}

/// One case per differentiable op plus composed generator- and
/// discriminator-shaped graphs.
pub fn default_suite() -> Vec<GradCheckCase> {
    let mut rng = SplitMix64::new(0x6772_6164);
    let mut cases = Vec::new();

    cases.push(GradCheckCase {
        name: "conv2d_stride1_pad1",
        inputs: alloc::vec![
            tensor(&mut rng, &[2, 5, 5], -1.0, 1.0),
            tensor(&mut rng, &[3, 2, 3, 3], -1.0, 1.0),
            tensor(&mut rng, &[3], -0.5, 0.5),
        ],
        build: |t, ids| {
            let y = t.conv2d(ids[0], ids[1], ids[2], 1, 1).unwrap();
            t.sum(y)
        },
    });

    cases.push(GradCheckCase {
        name: "conv2d_stride2_pad2_k5",
        inputs: alloc::vec![
            tensor(&mut rng, &[2, 7, 7], -1.0, 1.0),
            tensor(&mut rng, &[2, 2, 5, 5], -1.0, 1.0),
            tensor(&mut rng, &[2], -0.5, 0.5),
        ],
        build: |t, ids| {
            let y = t.conv2d(ids[0], ids[1], ids[2], 2, 2).unwrap();
            t.sum(y)
        },
    });

    cases.push(GradCheckCase {
        name: "conv2d_k1_no_pad",
        inputs: alloc::vec![
            tensor(&mut rng, &[3, 4, 4], -1.0, 1.0),
            tensor(&mut rng, &[2, 3, 1, 1], -1.0, 1.0),
            tensor(&mut rng, &[2], -0.5, 0.5),
        ],
        build: |t, ids| {
            let y = t.conv2d(ids[0], ids[1], ids[2], 1, 0).unwrap();
            t.sum(y)
        },
    });

    cases.push(GradCheckCase {
        name: "leaky_relu",
        inputs: alloc::vec![tensor_off_kink(&mut rng, &[3, 4, 4])],
        build: |t, ids| {
            let y = t.leaky_relu(ids[0], 0.1);
            t.sum(y)
        },
    });

    cases.push(GradCheckCase {
        name: "upsample_nearest_through_conv",
        inputs: alloc::vec![tensor(&mut rng, &[2, 3, 3], -1.0, 1.0)],
        build: |t, ids| {
            let up = t.upsample_nearest(ids[0], 2);
            // A fixed non-uniform projection so the gradient is not constant.
            let mut wdata = Vec::new();
            for i in 0..(1 * 2 * 3 * 3) {
                wdata.push(0.1 * (i as f64) - 0.7);
            }
            let w = t.constant(Tensor::from_vec(&[1, 2, 3, 3], wdata).unwrap());
            let b = t.constant(Tensor::zeros(&[1]));
            let y = t.conv2d(up, w, b, 1, 1).unwrap();
            t.sum(y)
        },
    });

    cases.push(GradCheckCase {
        name: "softmax_groups_through_projection",
        inputs: alloc::vec![tensor(&mut rng, &[2, 3, 2, 2], -1.0, 1.0)],
        build: |t, ids| {
            let p = t.softmax_groups(ids[0]).unwrap();
            let flat = t.reshape(p, &[6, 2, 2]).unwrap();
            let mut wdata = Vec::new();
            for i in 0..6 {
                wdata.push(0.3 * (i as f64) - 0.8);
            }
            let w = t.constant(Tensor::from_vec(&[1, 6, 1, 1], wdata).unwrap());
            let b = t.constant(Tensor::zeros(&[1]));
            let y = t.conv2d(flat, w, b, 1, 0).unwrap();
            t.sum(y)
        },
    });

    cases.push(GradCheckCase {
        name: "cross_entropy_on_probs",
        inputs: alloc::vec![tensor(&mut rng, &[2, 3, 2, 2], 0.2, 0.8)],
        build: |t, ids| {
            let labels = alloc::vec![0u8, 1, 2, 0, 2, 1, 0, 1];
            t.cross_entropy(ids[0], labels, alloc::vec![0.2, 1.0, 1.0]).unwrap()
        },
    });

    cases.push(GradCheckCase {
        name: "softmax_cross_entropy_composed",
        inputs: alloc::vec![tensor(&mut rng, &[2, 3, 2, 2], -1.0, 1.0)],
        build: |t, ids| {
            let p = t.softmax_groups(ids[0]).unwrap();
            let labels = alloc::vec![2u8, 0, 1, 1, 0, 2, 2, 0];
            t.cross_entropy(p, labels, alloc::vec![0.2, 1.0, 1.0]).unwrap()
        },
    });

    cases.push(GradCheckCase {
        name: "lsgan_generator",
        inputs: alloc::vec![tensor(&mut rng, &[1, 3, 3], -0.5, 1.5)],
        build: |t, ids| t.lsgan_generator(ids[0]),
    });

    cases.push(GradCheckCase {
        name: "lsgan_discriminator",
        inputs: alloc::vec![
            tensor(&mut rng, &[1, 3, 3], -0.5, 1.5),
            tensor(&mut rng, &[1, 3, 3], -0.5, 1.5),
        ],
        build: |t, ids| t.lsgan_discriminator(ids[0], ids[1]),
    });

    cases.push(GradCheckCase {
        name: "add_scale_reshape_sum",
        inputs: alloc::vec![
            tensor(&mut rng, &[2, 6], -1.0, 1.0),
            tensor(&mut rng, &[2, 6], -1.0, 1.0),
        ],
        build: |t, ids| {
            let s = t.add(ids[0], ids[1]).unwrap();
            let r = t.reshape(s, &[3, 4]).unwrap();
            let scaled = t.scale(r, -1.5);
            t.sum(scaled)
        },
    });

    cases.push(GradCheckCase {
        name: "generator_network_composed",
        inputs: alloc::vec![
            tensor(&mut rng, &[4, 2, 3, 3], -0.4, 0.4),
            tensor(&mut rng, &[4], -0.2, 0.2),
            tensor(&mut rng, &[6, 4, 3, 3], -0.4, 0.4),
            tensor(&mut rng, &[6], -0.2, 0.2),
        ],
        build: |t, ids| {
            let mut rng = SplitMix64::new(0x696d_67);
            let img = t.constant({
                let data = (0..2 * 8 * 8).map(|_| rng.range_f64(-1.0, 1.0)).collect();
                Tensor::from_vec(&[2, 8, 8], data).unwrap()
            });
            let h = t.conv2d(img, ids[0], ids[1], 2, 1).unwrap();
            let h = t.leaky_relu(h, 0.1);
            let h = t.upsample_nearest(h, 2);
            let logits = t.conv2d(h, ids[2], ids[3], 1, 1).unwrap();
            let grouped = t.reshape(logits, &[2, 3, 8, 8]).unwrap();
            let probs = t.softmax_groups(grouped).unwrap();
            let labels: Vec<u8> = (0..2 * 64).map(|_| rng.below(3) as u8).collect();
            let sup = t
                .cross_entropy(probs, labels, alloc::vec![0.2, 1.0, 1.0])
                .unwrap();

            // Adversarial branch through a frozen discriminator.
            let flat = t.reshape(probs, &[6, 8, 8]).unwrap();
            let wd = t.constant({
                let data = (0..2 * 6 * 9).map(|_| rng.range_f64(-0.3, 0.3)).collect();
                Tensor::from_vec(&[2, 6, 3, 3], data).unwrap()
            });
            let bd = t.constant(Tensor::zeros(&[2]));
            let scores = t.conv2d(flat, wd, bd, 2, 1).unwrap();
            let adv = t.lsgan_generator(scores);
            let adv_weighted = t.scale(adv, 0.01);
            t.add(sup, adv_weighted).unwrap()
        },
    });

    cases.push(GradCheckCase {
        name: "discriminator_update_composed",
        inputs: alloc::vec![
            tensor(&mut rng, &[2, 6, 3, 3], -0.4, 0.4),
            tensor(&mut rng, &[2], -0.2, 0.2),
        ],
        build: |t, ids| {
            let mut rng = SplitMix64::new(0x6469_7363);
            let real = t.constant({
                let data = (0..6 * 8 * 8).map(|_| f64::from(rng.below(2) as u8)).collect();
                Tensor::from_vec(&[6, 8, 8], data).unwrap()
            });
            let fake = t.constant({
                let data = (0..6 * 8 * 8).map(|_| rng.range_f64(0.0, 1.0)).collect();
                Tensor::from_vec(&[6, 8, 8], data).unwrap()
            });
            let s_real = t.conv2d(real, ids[0], ids[1], 2, 1).unwrap();
            let s_fake = t.conv2d(fake, ids[0], ids[1], 2, 1).unwrap();
            t.lsgan_discriminator(s_real, s_fake)
        },
    });

    cases
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn every_suite_case_beats_the_tolerance() {
        for case in default_suite() {
            let report = check_gradients(&case);
            assert!(report.elements > 0, "{} checked nothing", report.name);
            assert!(
                report.max_rel_err < 1e-4,
                "{}: max relative error {}",
                report.name,
                report.max_rel_err
            );
        }
    }

    #[test]
    fn suite_covers_all_op_families() {
        let names: Vec<&str> = default_suite().iter().map(|c| c.name).collect();
        for needle in [
            "conv2d",
            "leaky_relu",
            "upsample",
            "softmax",
            "cross_entropy",
            "lsgan_generator",
            "lsgan_discriminator",
            "add_scale_reshape_sum",
            "generator_network",
            "discriminator_update",
        ] {
            assert!(
                names.iter().any(|n| n.contains(needle)),
                "missing coverage for {needle}"
            );
        }
    }

    #[test]
    fn reports_are_deterministic() {
        let suite = default_suite();
        let first = check_gradients(&suite[0]);
        let second = check_gradients(&suite[0]);
        assert_eq!(first.max_rel_err.to_bits(), second.max_rel_err.to_bits());
    }
}
