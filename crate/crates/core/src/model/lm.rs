//! Character-level causal language model: vocabulary, forward graph,
//! sequence scoring, noisy forward, and greedy decoding.
//!
//! Sequences are scored with a BOS convention: the model predicts all `T`
//! tokens of a sequence from `[BOS, x_0, .., x_{T-2}]`, so an empty prefix is
//! never fed and `sequence_nll` has exactly `T` terms.

use alloc::collections::BTreeSet;
use alloc::string::String;
use alloc::vec::Vec;

// Required for the no_std build; std builds resolve these methods inherently.
#[allow(unused_imports)]
use num_traits::Float;

use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::graph::{Graph, NodeId};
use crate::rng::Stream;
use crate::tensor::Tensor;
use crate::{Error, Result};

use super::{collect_grad, param_leaves, Arch, ModelSnapshot, NoisyForwardConfig};

pub const BOS_TOKEN: usize = 0;
pub const EOT_TOKEN: usize = 1;
/// Separates question from answer inside one sequence.
pub const SEP_CHAR: char = '\n';

/// Character vocabulary with two reserved ids (BOS, EOT).
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Vocab {
    chars: Vec<char>,
}

impl Vocab {
    pub fn build<'a>(texts: impl Iterator<Item = &'a str>) -> Vocab {
        let mut set: BTreeSet<char> = BTreeSet::new();
        set.insert(SEP_CHAR);
        for t in texts {
            set.extend(t.chars());
        }
        Vocab { chars: set.into_iter().collect() }
    }

    pub fn from_chars(chars: Vec<char>) -> Vocab {
        Vocab { chars }
    }

    pub fn chars(&self) -> &[char] {
        &self.chars
    }

    pub fn size(&self) -> usize {
        self.chars.len() + 2
    }

    pub fn encode(&self, text: &str) -> Result<Vec<usize>> {
        text.chars().map(|c| self.encode_char(c)).collect()
    }

    pub fn encode_char(&self, c: char) -> Result<usize> {
        self.chars
            .binary_search(&c)
            .map(|i| i + 2)
            .map_err(|_| Error::config(alloc::format!("unknown token {c:?}")))
    }

    pub fn decode(&self, ids: &[usize]) -> String {
        ids.iter()
            .filter_map(|&id| if id >= 2 { self.chars.get(id - 2) } else { None })
            .collect()
    }
}

/// A tokenized question+answer stream: `q SEP a EOT`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LmSequence {
    pub tokens: Vec<usize>,
    /// Index in `tokens` where the answer begins.
    pub answer_start: usize,
    /// Answer length in tokens, excluding the trailing EOT.
    pub answer_len: usize,
}

impl LmSequence {
    /// Positions of the answer tokens (excluding EOT), for answer-only losses.
    pub fn answer_positions(&self) -> core::ops::Range<usize> {
        self.answer_start..self.answer_start + self.answer_len
    }
}

pub fn qa_token_ids(vocab: &Vocab, question: &str, answer: &str) -> Result<LmSequence> {
    let mut tokens = vocab.encode(question)?;
    tokens.push(vocab.encode_char(SEP_CHAR)?);
    let answer_start = tokens.len();
    let answer_ids = vocab.encode(answer)?;
    let answer_len = answer_ids.len();
    tokens.extend(answer_ids);
    tokens.push(EOT_TOKEN);
    Ok(LmSequence { tokens, answer_start, answer_len })
}

pub(crate) struct LmGraph {
    pub logits: NodeId,
    pub logprobs: NodeId,
    pub leaves: Vec<NodeId>,
}

/// Build the forward graph for `input_ids` (BOS already prepended by the
/// caller). `noise` perturbs the chosen hidden state with a fixed tensor.
pub(crate) fn build_lm(
    g: &mut Graph,
    arch: &Arch,
    params: &[f64],
    input_ids: &[usize],
    noise: Option<(usize, Tensor)>,
    trainable: bool,
) -> Result<LmGraph> {
    let (vocab, d_model, blocks, context) = match *arch {
        Arch::CausalLm { vocab, d_model, blocks, context, .. } => (vocab, d_model, blocks, context),
        _ => return Err(Error::config("not a causal LM architecture")),
    };
    let t_len = input_ids.len();
    if t_len == 0 {
        return Err(Error::config("empty input"));
    }
    if t_len > context {
        return Err(Error::config(alloc::format!("sequence length {t_len} exceeds context {context}")));
    }
    if let Some(&bad) = input_ids.iter().find(|&&id| id >= vocab) {
        return Err(Error::config(alloc::format!("unknown token id {bad}")));
    }

    let leaves = param_leaves(g, arch, params, trainable);
    let positions: Vec<usize> = (0..t_len).collect();
    let tok = g.embed(leaves[0], input_ids);
    let pos = g.embed(leaves[1], &positions);
    let mut h = g.add(tok, pos);

    let inject = |g: &mut Graph, h: NodeId, layer: usize| -> NodeId {
        match &noise {
            Some((l, xi)) if *l == layer => {
                let n = g.constant(xi.clone());
                g.add(h, n)
            }
            _ => h,
        }
    };
    h = inject(g, h, 0);

    // causal mask: zero at or below the diagonal, -1e30 above
    let mut mask = Tensor::zeros(t_len, t_len);
    for i in 0..t_len {
        for j in (i + 1)..t_len {
            mask.set(i, j, -1e30);
        }
    }
    let mask = g.constant(mask);
    let scale = 1.0 / (d_model as f64).sqrt();

    for b in 0..blocks {
        let p = 2 + b * 12;
        let (ln1_g, ln1_b) = (leaves[p], leaves[p + 1]);
        let (wq, wk, wv, wo) = (leaves[p + 2], leaves[p + 3], leaves[p + 4], leaves[p + 5]);
        let (ln2_g, ln2_b) = (leaves[p + 6], leaves[p + 7]);
        let (w1, b1, w2, b2) = (leaves[p + 8], leaves[p + 9], leaves[p + 10], leaves[p + 11]);

        let normed = layer_norm(g, h, ln1_g, ln1_b);
        let q = g.matmul(normed, wq);
        let k = g.matmul(normed, wk);
        let v = g.matmul(normed, wv);
        let scores = g.matmul_t(q, k, false, true);
        let scores = g.scale(scores, scale);
        let scores = g.add(scores, mask);
        let attn = g.softmax(scores);
        let ctx = g.matmul(attn, v);
        let proj = g.matmul(ctx, wo);
        h = g.add(h, proj);

        let normed2 = layer_norm(g, h, ln2_g, ln2_b);
        let ff = g.matmul(normed2, w1);
        let ff = g.add_row(ff, b1);
        let ff = g.tanh(ff);
        let ff = g.matmul(ff, w2);
        let ff = g.add_row(ff, b2);
        h = g.add(h, ff);
        h = inject(g, h, b + 1);
    }

    let p = 2 + blocks * 12;
    let normed = layer_norm(g, h, leaves[p], leaves[p + 1]);
    let logits = g.matmul(normed, leaves[p + 2]);
    let logits = g.add_row(logits, leaves[p + 3]);
    let logprobs = g.log_softmax(logits);
    Ok(LmGraph { logits, logprobs, leaves })
}

fn layer_norm(g: &mut Graph, x: NodeId, gain: NodeId, bias: NodeId) -> NodeId {
    let mu = g.row_mean(x);
    let centered = g.sub_col(x, mu);
    let sq = g.mul(centered, centered);
    let var = g.row_mean(sq);
    let rstd = g.rsqrt_eps(var, 1e-5);
    let normed = g.mul_col(centered, rstd);
    let scaled = g.mul_row(normed, gain);
    g.add_row(scaled, bias)
}

pub(crate) fn check_ids(arch: &Arch, tokens: &[usize]) -> Result<()> {
    let vocab = match arch {
        Arch::CausalLm { vocab, .. } => *vocab,
        _ => return Err(Error::config("not a causal LM architecture")),
    };
    match tokens.iter().find(|&&id| id >= vocab) {
        Some(bad) => Err(Error::config(alloc::format!("unknown token id {bad}"))),
        None => Ok(()),
    }
}

/// BOS-prefixed input for scoring all tokens of `seq`.
fn shifted_input(seq: &[usize]) -> Vec<usize> {
    let mut input = Vec::with_capacity(seq.len());
    input.push(BOS_TOKEN);
    input.extend_from_slice(&seq[..seq.len() - 1]);
    input
}

/// `-sum_t log p(x_t | x_<t)` over the whole sequence. Empty sequences score
/// zero.
pub fn sequence_nll(model: &ModelSnapshot, tokens: &[usize]) -> Result<f64> {
    if tokens.is_empty() {
        return Ok(0.0);
    }
    check_ids(&model.arch, tokens)?;
    let mut g = Graph::new();
    let net = build_lm(&mut g, &model.arch, &model.params, &shifted_input(tokens), None, false)?;
    let picked = g.pick_col(net.logprobs, tokens);
    let total = g.sum(picked);
    Ok(-g.value(total).item())
}

/// Per-position predictive distributions (rows: `p(. | x_<t)`) with the
/// configured hidden state perturbed by `gamma * N(0, sigma^2)` noise drawn
/// from the config's seed. `gamma = 0` is bit-identical to the plain forward.
pub fn forward_noisy(model: &ModelSnapshot, tokens: &[usize], cfg: &NoisyForwardConfig) -> Result<Tensor> {
    if tokens.is_empty() {
        return Err(Error::config("empty input"));
    }
    cfg.validate(&model.arch)?;
    let noise = sample_noise(&model.arch, tokens.len(), cfg);
    let mut g = Graph::new();
    let net = build_lm(&mut g, &model.arch, &model.params, &shifted_input(tokens), noise, false)?;
    Ok(g.value(net.logprobs).map(|lp| lp.exp()))
}

/// The additive noise tensor for a `len`-position forward pass, or `None`
/// when `gamma` is zero.
pub(crate) fn sample_noise(arch: &Arch, len: usize, cfg: &NoisyForwardConfig) -> Option<(usize, Tensor)> {
    if cfg.gamma == 0.0 {
        return None;
    }
    let d_model = match arch {
        Arch::CausalLm { d_model, .. } => *d_model,
        _ => return None,
    };
    let mut rng = Stream::new(cfg.seed).child("noise").rng();
    let mut xi = Tensor::zeros(len, d_model);
    for v in xi.data_mut() {
        let z: f64 = rng.sample(StandardNormal);
        *v = cfg.gamma * cfg.sigma * z;
    }
    Some((cfg.layer, xi))
}

/// Mean per-token NLL over a batch of sequences, with the parameter
/// gradient. The training objective for `train_lm`.
pub fn lm_nll_and_grad(arch: &Arch, params: &[f64], batch: &[&[usize]]) -> Result<(f64, Vec<f64>)> {
    if batch.is_empty() {
        return Err(Error::config("empty batch"));
    }
    let mut total_loss = 0.0;
    let mut total_grad = alloc::vec![0.0; arch.param_count()];
    for seq in batch {
        if seq.is_empty() {
            return Err(Error::config("empty sequence in batch"));
        }
        check_ids(arch, seq)?;
        let mut g = Graph::new();
        let net = build_lm(&mut g, arch, params, &shifted_input(seq), None, true)?;
        let picked = g.pick_col(net.logprobs, seq);
        let mean = g.mean(picked);
        let loss = g.scale(mean, -1.0);
        let grads = g.backward(loss);
        total_loss += g.value(loss).item();
        for (t, d) in total_grad.iter_mut().zip(collect_grad(&grads, &net.leaves, arch)) {
            *t += d;
        }
    }
    let n = batch.len() as f64;
    for v in &mut total_grad {
        *v /= n;
    }
    Ok((total_loss / n, total_grad))
}

/// Greedy (temperature-0) continuation of `prompt`, capped at `max_tokens`.
/// Decoding stops at EOT; argmax ties break toward the lowest token id. The
/// context window slides when the sequence outgrows it.
pub fn greedy_decode(model: &ModelSnapshot, prompt: &[usize], max_tokens: usize) -> Result<Vec<usize>> {
    let context = match model.arch {
        Arch::CausalLm { context, .. } => context,
        _ => return Err(Error::config("not a causal LM architecture")),
    };
    if max_tokens == 0 {
        return Err(Error::config("decode cap must be positive"));
    }
    let mut stream: Vec<usize> = Vec::with_capacity(prompt.len() + max_tokens + 1);
    stream.push(BOS_TOKEN);
    stream.extend_from_slice(prompt);
    let mut out = Vec::new();
    for _ in 0..max_tokens {
        let window = if stream.len() > context { &stream[stream.len() - context..] } else { &stream[..] };
        let mut g = Graph::new();
        let net = build_lm(&mut g, &model.arch, &model.params, window, None, false)?;
        let logits = g.value(net.logits);
        let last = logits.row(logits.rows() - 1);
        let mut best = 0usize;
        for (i, &v) in last.iter().enumerate() {
            if v > last[best] {
                best = i;
            }
        }
        if best == EOT_TOKEN {
            break;
        }
        out.push(best);
        stream.push(best);
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::TrainMeta;

    fn tiny_arch() -> Arch {
        Arch::CausalLm { vocab: 4, d_model: 6, blocks: 1, d_ff: 12, context: 8 }
    }

    #[test]
    fn vocab_round_trips() {
        let v = Vocab::build(["the code", "is amber"].into_iter());
        let ids = v.encode("the code is amber").unwrap();
        assert_eq!(v.decode(&ids), "the code is amber");
        assert!(v.encode("zebra!").is_err());
        assert_eq!(v.size(), v.chars().len() + 2);
    }

    #[test]
    fn zeroed_model_is_uniform() {
        let model = ModelSnapshot::zeroed(tiny_arch());
        // 3 tokens at V=4: NLL = 3 ln 4
        let nll = sequence_nll(&model, &[2, 3, 1]).unwrap();
        assert!((nll - 3.0 * 4.0f64.ln()).abs() < 1e-9, "nll {nll}");
        assert_eq!(sequence_nll(&model, &[]).unwrap(), 0.0);
        assert!(sequence_nll(&model, &[9]).is_err());
    }

    #[test]
    fn nll_equals_sum_of_per_position_terms() {
        let model = ModelSnapshot::init(tiny_arch(), 5);
        let seq = [2, 0, 3, 1];
        let total = sequence_nll(&model, &seq).unwrap();
        // per-position cross-entropies from the distributions route
        let cfg = NoisyForwardConfig { layer: 1, gamma: 0.0, sigma: 1.0, seed: 0 };
        let probs = forward_noisy(&model, &seq, &cfg).unwrap();
        let manual: f64 = seq.iter().enumerate().map(|(t, &id)| -probs.at(t, id).ln()).sum();
        assert!((total - manual).abs() < 1e-9);
    }

    #[test]
    fn zero_gamma_forward_is_bit_identical() {
        let model = ModelSnapshot::init(tiny_arch(), 5);
        let seq = [2, 3, 0, 1, 2];
        let cfg = NoisyForwardConfig { layer: 1, gamma: 0.0, sigma: 1.0, seed: 42 };
        let noisy = forward_noisy(&model, &seq, &cfg).unwrap();
        let mut g = Graph::new();
        let net = build_lm(&mut g, &model.arch, &model.params, &shifted_input(&seq), None, false).unwrap();
        let plain = g.value(net.logprobs).map(|lp| lp.exp());
        assert_eq!(noisy.data(), plain.data());
    }

    #[test]
    fn fixed_seed_noise_is_reproducible_and_scaled() {
        let model = ModelSnapshot::init(tiny_arch(), 5);
        let seq = [2, 3, 0];
        let cfg = NoisyForwardConfig { layer: 0, gamma: 0.7, sigma: 2.0, seed: 9 };
        let a = forward_noisy(&model, &seq, &cfg).unwrap();
        let b = forward_noisy(&model, &seq, &cfg).unwrap();
        assert_eq!(a.data(), b.data());
        // empirical std of the raw noise (xi / gamma) approaches sigma
        let noise = sample_noise(&model.arch, 2000, &cfg).unwrap().1;
        let n = noise.len() as f64;
        let mean: f64 = noise.data().iter().sum::<f64>() / n;
        let var: f64 = noise.data().iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n;
        let std = (var.sqrt()) / cfg.gamma;
        assert!((std - cfg.sigma).abs() / cfg.sigma < 0.02, "std {std}");
    }

    #[test]
    fn bad_noise_configs_are_rejected() {
        let arch = tiny_arch();
        let model = ModelSnapshot::init(arch, 5);
        let bad_layer = NoisyForwardConfig { layer: 2, gamma: 0.1, sigma: 1.0, seed: 0 };
        assert!(forward_noisy(&model, &[2], &bad_layer).is_err());
        let bad_sigma = NoisyForwardConfig { layer: 0, gamma: 0.1, sigma: 0.0, seed: 0 };
        assert!(forward_noisy(&model, &[2], &bad_sigma).is_err());
    }

    #[test]
    fn lm_gradient_matches_finite_differences() {
        let arch = tiny_arch();
        let model = ModelSnapshot::init(arch, 5);
        let seq: &[usize] = &[2, 0, 3, 1, 2];
        let err = crate::model::grad_check(
            &model.params,
            &mut |p, _| {
                let (l, g) = lm_nll_and_grad(&arch, p, &[seq])?;
                Ok((l, Some(g)))
            },
            &crate::model::GradCheckConfig { epsilon: 1e-5, max_coords: 120, seed: 3 },
        )
        .unwrap();
        assert!(err < 1e-4, "max relative error {err}");
    }

    #[test]
    fn qa_sequence_layout() {
        let v = Vocab::build(["ab"].into_iter());
        let s = qa_token_ids(&v, "ab", "ba").unwrap();
        // q(2) + sep(1) + a(2) + eot(1)
        assert_eq!(s.tokens.len(), 6);
        assert_eq!(s.answer_start, 3);
        assert_eq!(s.answer_len, 2);
        assert_eq!(s.tokens[5], EOT_TOKEN);
    }

    #[test]
    fn decode_respects_cap_and_window() {
        let model = ModelSnapshot::new(
            tiny_arch(),
            ModelSnapshot::init(tiny_arch(), 1).params,
            TrainMeta { seed: 0, epochs: 0, loss_trace: alloc::vec::Vec::new() },
        )
        .unwrap();
        let out = greedy_decode(&model, &[2, 3], 20).unwrap();
        assert!(out.len() <= 20);
        assert!(greedy_decode(&model, &[2], 0).is_err());
    }
}
