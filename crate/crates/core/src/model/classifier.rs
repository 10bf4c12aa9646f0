//! Classifier forward passes and the cross-entropy training objective.

use alloc::vec::Vec;

use crate::data::ImageSample;
use crate::graph::{Graph, NodeId};
use crate::tensor::Tensor;
use crate::{Error, Result};

use super::{collect_grad, param_leaves, Arch, ModelSnapshot};

pub(crate) struct ClassifierGraph {
    pub logits: NodeId,
    /// Penultimate activations, the embedding used for similarity analysis.
    pub hidden: NodeId,
    pub leaves: Vec<NodeId>,
}

/// Build the forward graph on a `[batch, input]` node. The convolutional
/// variant processes one sample at a time (`batch == 1`).
pub(crate) fn build_classifier(
    g: &mut Graph,
    arch: &Arch,
    params: &[f64],
    x: NodeId,
    trainable: bool,
) -> Result<ClassifierGraph> {
    let leaves = param_leaves(g, arch, params, trainable);
    match *arch {
        Arch::MlpClassifier { .. } => {
            let pre = g.matmul(x, leaves[0]);
            let pre = g.add_row(pre, leaves[1]);
            let hidden = g.relu(pre);
            let logits = g.matmul(hidden, leaves[2]);
            let logits = g.add_row(logits, leaves[3]);
            Ok(ClassifierGraph { logits, hidden, leaves })
        }
        Arch::ConvClassifier { depth, height, width, filters, .. } => {
            if g.value(x).rows() != 1 {
                return Err(Error::config("conv classifier processes one sample per graph"));
            }
            let (oh, ow) = (height - 2, width - 2);
            let positions = oh * ow;
            let patch = depth * 9;
            let mut idx = Vec::with_capacity(positions * patch);
            for py in 0..oh {
                for px in 0..ow {
                    for d in 0..depth {
                        for ky in 0..3 {
                            for kx in 0..3 {
                                idx.push((d * height + py + ky) * width + px + kx);
                            }
                        }
                    }
                }
            }
            let patches = g.gather(x, &idx, positions, patch);
            let conv = g.matmul(patches, leaves[0]);
            let conv = g.add_row(conv, leaves[1]);
            let conv = g.relu(conv);
            // 2x2 mean pooling over the spatial grid, as a constant matrix
            let (ph, pw) = (oh / 2, ow / 2);
            let mut pool = Tensor::zeros(ph * pw, positions);
            for py in 0..ph {
                for px in 0..pw {
                    for dy in 0..2 {
                        for dx in 0..2 {
                            pool.set(py * pw + px, (py * 2 + dy) * ow + px * 2 + dx, 0.25);
                        }
                    }
                }
            }
            let pool = g.constant(pool);
            let pooled = g.matmul(pool, conv);
            let hidden = g.reshape(pooled, 1, ph * pw * filters);
            let logits = g.matmul(hidden, leaves[2]);
            let logits = g.add_row(logits, leaves[3]);
            Ok(ClassifierGraph { logits, hidden, leaves })
        }
        Arch::CausalLm { .. } => Err(Error::config("not a classifier architecture")),
    }
}

fn batch_tensor(arch: &Arch, samples: &[&ImageSample]) -> Result<Tensor> {
    let input = arch.input_len().ok_or_else(|| Error::config("not a classifier architecture"))?;
    let mut data = Vec::with_capacity(samples.len() * input);
    for s in samples {
        if s.shape.pixels() != input {
            return Err(Error::config("image shape does not match classifier input"));
        }
        data.extend(s.pixels.iter().map(|&p| p as f64));
    }
    Ok(Tensor::from_vec(samples.len(), input, data))
}

/// Mean cross-entropy over a labelled batch, plus the parameter gradient.
/// `labels` overrides the samples' own labels when given (relabel-based
/// unlearning re-draws them per epoch).
pub fn classifier_loss_and_grad(
    arch: &Arch,
    params: &[f64],
    samples: &[&ImageSample],
    labels: Option<&[u32]>,
) -> Result<(f64, Vec<f64>)> {
    if samples.is_empty() {
        return Err(Error::config("empty batch"));
    }
    let classes = arch.classes().ok_or_else(|| Error::config("not a classifier architecture"))?;
    let label_of = |i: usize| -> Result<usize> {
        let l = labels.map(|ls| ls[i]).unwrap_or(samples[i].label);
        if (l as usize) < classes {
            Ok(l as usize)
        } else {
            Err(Error::config(alloc::format!("label {l} out of range")))
        }
    };

    match arch {
        Arch::MlpClassifier { .. } => {
            let mut g = Graph::new();
            let x = batch_tensor(arch, samples)?;
            let x = g.constant(x);
            let net = build_classifier(&mut g, arch, params, x, true)?;
            let logp = g.log_softmax(net.logits);
            let ids: Vec<usize> = (0..samples.len()).map(label_of).collect::<Result<_>>()?;
            let picked = g.pick_col(logp, &ids);
            let mean = g.mean(picked);
            let loss = g.scale(mean, -1.0);
            let grads = g.backward(loss);
            Ok((g.value(loss).item(), collect_grad(&grads, &net.leaves, arch)))
        }
        Arch::ConvClassifier { .. } => {
            let mut total_loss = 0.0;
            let mut total_grad = alloc::vec![0.0; arch.param_count()];
            for (i, s) in samples.iter().enumerate() {
                let mut g = Graph::new();
                let x = batch_tensor(arch, &[s])?;
                let x = g.constant(x);
                let net = build_classifier(&mut g, arch, params, x, true)?;
                let logp = g.log_softmax(net.logits);
                let picked = g.pick_col(logp, &[label_of(i)?]);
                let sum = g.sum(picked);
                let loss = g.scale(sum, -1.0);
                let grads = g.backward(loss);
                total_loss += g.value(loss).item();
                let grad = collect_grad(&grads, &net.leaves, arch);
                for (t, d) in total_grad.iter_mut().zip(&grad) {
                    *t += d;
                }
            }
            let n = samples.len() as f64;
            for v in &mut total_grad {
                *v /= n;
            }
            Ok((total_loss / n, total_grad))
        }
        Arch::CausalLm { .. } => Err(Error::config("not a classifier architecture")),
    }
}

/// Per-class logits for one sample.
pub fn predict(model: &ModelSnapshot, sample: &ImageSample) -> Result<Vec<f64>> {
    let mut g = Graph::new();
    let x = batch_tensor(&model.arch, &[sample])?;
    let x = g.constant(x);
    let net = build_classifier(&mut g, &model.arch, &model.params, x, false)?;
    Ok(g.value(net.logits).data().to_vec())
}

/// Penultimate-layer activations, exposed as an embedding for similarity
/// analysis.
pub fn penultimate(model: &ModelSnapshot, sample: &ImageSample) -> Result<Vec<f64>> {
    let mut g = Graph::new();
    let x = batch_tensor(&model.arch, &[sample])?;
    let x = g.constant(x);
    let net = build_classifier(&mut g, &model.arch, &model.params, x, false)?;
    Ok(g.value(net.hidden).data().to_vec())
}
