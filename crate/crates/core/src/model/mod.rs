//! Small differentiable models over 64-bit parameters: an MLP / convolutional
//! classifier and a character-level causal-attention language model.
//!
//! A [`ModelSnapshot`] is an architecture descriptor plus a flat parameter
//! vector; forward passes rebuild the computation graph from it, so snapshots
//! are immutable, cheap to clone, and trivially serializable.

mod classifier;
mod gradcheck;
mod lm;
mod train;

pub use classifier::{classifier_loss_and_grad, penultimate, predict};
pub use gradcheck::{grad_check, GradCheckConfig};
pub use lm::{
    forward_noisy, greedy_decode, lm_nll_and_grad, qa_token_ids, sequence_nll, LmSequence, Vocab,
    BOS_TOKEN, EOT_TOKEN, SEP_CHAR,
};
pub use train::{
    train_classifier, train_classifier_from, train_lm, train_lm_from, Optimizer, SgdState, TrainConfig,
};

use alloc::vec::Vec;

use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::rng::Stream;
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "kind")]
pub enum Arch {
    MlpClassifier {
        input: usize,
        hidden: usize,
        classes: usize,
    },
    /// One valid 3x3 convolution, 2x2 mean pooling, then a dense layer.
    ConvClassifier {
        depth: usize,
        height: usize,
        width: usize,
        filters: usize,
        classes: usize,
    },
    CausalLm {
        vocab: usize,
        d_model: usize,
        blocks: usize,
        d_ff: usize,
        context: usize,
    },
}

impl Arch {
    /// Parameter tensor shapes in canonical (flattening) order.
    pub fn param_shapes(&self) -> Vec<(usize, usize)> {
        match *self {
            Arch::MlpClassifier { input, hidden, classes } => {
                alloc::vec![(input, hidden), (1, hidden), (hidden, classes), (1, classes)]
            }
            Arch::ConvClassifier { depth, height, width, filters, classes } => {
                let (oh, ow) = (height - 2, width - 2);
                let dense_in = (oh / 2) * (ow / 2) * filters;
                alloc::vec![(depth * 9, filters), (1, filters), (dense_in, classes), (1, classes)]
            }
            Arch::CausalLm { vocab, d_model, blocks, d_ff, context } => {
                let mut shapes = alloc::vec![(vocab, d_model), (context, d_model)];
                for _ in 0..blocks {
                    shapes.extend_from_slice(&[
                        (1, d_model),       // ln1 gain
                        (1, d_model),       // ln1 bias
                        (d_model, d_model), // Wq
                        (d_model, d_model), // Wk
                        (d_model, d_model), // Wv
                        (d_model, d_model), // Wo
                        (1, d_model),       // ln2 gain
                        (1, d_model),       // ln2 bias
                        (d_model, d_ff),    // W1
                        (1, d_ff),          // b1
                        (d_ff, d_model),    // W2
                        (1, d_model),       // b2
                    ]);
                }
                shapes.extend_from_slice(&[(1, d_model), (1, d_model), (d_model, vocab), (1, vocab)]);
                shapes
            }
        }
    }

    pub fn param_count(&self) -> usize {
        self.param_shapes().iter().map(|(r, c)| r * c).sum()
    }

    pub fn classes(&self) -> Option<usize> {
        match *self {
            Arch::MlpClassifier { classes, .. } | Arch::ConvClassifier { classes, .. } => Some(classes),
            Arch::CausalLm { .. } => None,
        }
    }

    pub fn is_classifier(&self) -> bool {
        self.classes().is_some()
    }

    pub fn input_len(&self) -> Option<usize> {
        match *self {
            Arch::MlpClassifier { input, .. } => Some(input),
            Arch::ConvClassifier { depth, height, width, .. } => Some(depth * height * width),
            Arch::CausalLm { .. } => None,
        }
    }

    /// Number of hidden states a noisy forward pass may perturb
    /// (embedding output plus each block output).
    pub fn hidden_layers(&self) -> Option<usize> {
        match *self {
            Arch::CausalLm { blocks, .. } => Some(blocks + 1),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainMeta {
    pub seed: u64,
    pub epochs: usize,
    /// Mean training loss per epoch.
    pub loss_trace: Vec<f64>,
}

/// Architecture plus flat 64-bit parameters. The unit every training,
/// unlearning, and verification step consumes and produces.
#[derive(Debug, Clone, PartialEq)]
pub struct ModelSnapshot {
    pub arch: Arch,
    pub params: Vec<f64>,
    pub train_meta: TrainMeta,
}

impl ModelSnapshot {
    pub fn new(arch: Arch, params: Vec<f64>, train_meta: TrainMeta) -> Result<Self> {
        if params.len() != arch.param_count() {
            return Err(Error::config("parameter count does not match architecture"));
        }
        if params.iter().any(|p| !p.is_finite()) {
            return Err(Error::numeric("non-finite parameter"));
        }
        Ok(ModelSnapshot { arch, params, train_meta })
    }

    /// Seeded Gaussian initialization scaled by fan-in.
    pub fn init(arch: Arch, seed: u64) -> Self {
        let mut rng = Stream::new(seed).child("init").rng();
        let mut params = Vec::with_capacity(arch.param_count());
        for (rows, cols) in arch.param_shapes() {
            let std = init_std(&arch, rows, cols);
            for _ in 0..rows * cols {
                let z: f64 = rng.sample(StandardNormal);
                params.push(z * std);
            }
        }
        // layer-norm gains start at one
        if let Arch::CausalLm { vocab, d_model, blocks, d_ff, context } = arch {
            let mut offset = vocab * d_model + context * d_model;
            for _ in 0..blocks {
                params[offset..offset + d_model].fill(1.0); // ln1 gain
                offset += 2 * d_model; // skip ln1 bias
                offset += 4 * d_model * d_model;
                params[offset..offset + d_model].fill(1.0); // ln2 gain
                offset += 2 * d_model;
                offset += d_model * d_ff + d_ff + d_ff * d_model + d_model;
            }
            params[offset..offset + d_model].fill(1.0); // final ln gain
        }
        ModelSnapshot { arch, params, train_meta: TrainMeta { seed, epochs: 0, loss_trace: Vec::new() } }
    }

    /// All-zero parameters; a causal LM in this state outputs the uniform
    /// distribution at every position.
    pub fn zeroed(arch: Arch) -> Self {
        ModelSnapshot {
            arch,
            params: alloc::vec![0.0; arch.param_count()],
            train_meta: TrainMeta { seed: 0, epochs: 0, loss_trace: Vec::new() },
        }
    }
}

fn init_std(arch: &Arch, rows: usize, _cols: usize) -> f64 {
    // Required for the no_std build; std builds resolve these methods inherently.
    #[allow(unused_imports)]
    use num_traits::Float;
    if rows == 1 {
        return 0.0; // biases and norm parameters
    }
    match arch {
        Arch::CausalLm { .. } => 0.06,
        _ => 1.0 / (rows as f64).sqrt(),
    }
}

/// Stochastic perturbation of one hidden state: `h + gamma * xi` with
/// `xi ~ N(0, sigma^2)` drawn fresh from the seeded stream each call.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NoisyForwardConfig {
    /// Which hidden state to perturb: 0 is the embedding output, `i` the
    /// output of block `i`. Defaults to the last block's output.
    pub layer: usize,
    pub gamma: f64,
    pub sigma: f64,
    pub seed: u64,
}

impl NoisyForwardConfig {
    pub fn validate(&self, arch: &Arch) -> Result<()> {
        let layers = arch.hidden_layers().ok_or_else(|| Error::config("noisy forward needs a causal LM"))?;
        if self.layer >= layers {
            return Err(Error::config(alloc::format!(
                "noise layer {} out of range (model has {layers} hidden states)",
                self.layer
            )));
        }
        if self.gamma < 0.0 {
            return Err(Error::config("gamma must be non-negative"));
        }
        if self.sigma <= 0.0 {
            return Err(Error::config("sigma must be positive"));
        }
        Ok(())
    }
}

pub(crate) use classifier::{build_classifier, ClassifierGraph};
pub(crate) use lm::{build_lm, LmGraph};

use crate::graph::{Graph, NodeId};
use crate::tensor::Tensor;

/// Split a flat parameter vector into graph leaves, one per tensor of the
/// canonical layout. Constants when `trainable` is false.
pub(crate) fn param_leaves(g: &mut Graph, arch: &Arch, params: &[f64], trainable: bool) -> Vec<NodeId> {
    debug_assert_eq!(params.len(), arch.param_count());
    let mut leaves = Vec::new();
    let mut offset = 0;
    for (rows, cols) in arch.param_shapes() {
        let n = rows * cols;
        let t = Tensor::from_vec(rows, cols, params[offset..offset + n].to_vec());
        leaves.push(if trainable { g.param(t) } else { g.constant(t) });
        offset += n;
    }
    leaves
}

/// Concatenate per-leaf gradients back into flat layout order. Leaves the
/// backward pass never reached contribute zeros.
pub(crate) fn collect_grad(
    grads: &[Option<Tensor>],
    leaves: &[NodeId],
    arch: &Arch,
) -> Vec<f64> {
    let mut out = Vec::with_capacity(arch.param_count());
    for (leaf, (rows, cols)) in leaves.iter().zip(arch.param_shapes()) {
        match &grads[leaf.index()] {
            Some(t) => out.extend_from_slice(t.data()),
            None => out.extend(core::iter::repeat(0.0).take(rows * cols)),
        }
    }
    out
}
