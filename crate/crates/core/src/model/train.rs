//! Deterministic SGD training loops for both model kinds.

use alloc::vec::Vec;

use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use crate::data::{ImageDataset, TextDataset};
use crate::rng::Stream;
use crate::{Error, Result};

use super::classifier::classifier_loss_and_grad;
use super::lm::{lm_nll_and_grad, qa_token_ids, Vocab};
use super::{Arch, ModelSnapshot, TrainMeta};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "kind")]
pub enum Optimizer {
    Sgd,
    Momentum { beta: f64 },
}

impl Default for Optimizer {
    fn default() -> Self {
        Optimizer::Momentum { beta: 0.9 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub learning_rate: f64,
    pub epochs: usize,
    pub batch_size: usize,
    pub seed: u64,
    pub optimizer: Optimizer,
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.learning_rate <= 0.0 {
            return Err(Error::config("learning rate must be positive"));
        }
        if self.batch_size == 0 {
            return Err(Error::config("batch size must be positive"));
        }
        Ok(())
    }

    /// Same schedule, different seed: used by seed-averaged experiments.
    pub fn with_seed(&self, seed: u64) -> TrainConfig {
        TrainConfig { seed, ..*self }
    }
}

/// Optimizer state for one parameter vector.
#[derive(Debug, Clone)]
pub struct SgdState {
    velocity: Vec<f64>,
    optimizer: Optimizer,
    learning_rate: f64,
}

impl SgdState {
    pub fn new(param_count: usize, cfg: &TrainConfig) -> SgdState {
        SgdState {
            velocity: alloc::vec![0.0; param_count],
            optimizer: cfg.optimizer,
            learning_rate: cfg.learning_rate,
        }
    }

    pub fn step(&mut self, params: &mut [f64], grad: &[f64]) {
        match self.optimizer {
            Optimizer::Sgd => {
                for (p, g) in params.iter_mut().zip(grad) {
                    *p -= self.learning_rate * g;
                }
            }
            Optimizer::Momentum { beta } => {
                for ((p, v), g) in params.iter_mut().zip(&mut self.velocity).zip(grad) {
                    *v = beta * *v + g;
                    *p -= self.learning_rate * *v;
                }
            }
        }
    }
}

fn check_finite(loss: f64, epoch: usize, context: &str) -> Result<()> {
    if loss.is_finite() {
        Ok(())
    } else {
        Err(Error::numeric(alloc::format!("{context}: non-finite loss at epoch {epoch}")))
    }
}

/// Cross-entropy training from a fresh seeded initialization.
pub fn train_classifier(ds: &ImageDataset, arch: Arch, cfg: &TrainConfig) -> Result<ModelSnapshot> {
    let snapshot = ModelSnapshot::init(arch, cfg.seed);
    train_classifier_from(snapshot, ds, cfg)
}

/// Continue cross-entropy training from an existing snapshot (fine-tuning).
pub fn train_classifier_from(
    mut snapshot: ModelSnapshot,
    ds: &ImageDataset,
    cfg: &TrainConfig,
) -> Result<ModelSnapshot> {
    cfg.validate()?;
    if ds.is_empty() {
        return Err(Error::config("empty dataset"));
    }
    if !snapshot.arch.is_classifier() {
        return Err(Error::config("classifier training needs a classifier architecture"));
    }
    let stream = Stream::new(cfg.seed);
    let mut order: Vec<usize> = (0..ds.len()).collect();
    let mut trace = Vec::with_capacity(cfg.epochs);
    let mut opt = SgdState::new(snapshot.params.len(), cfg);

    for epoch in 0..cfg.epochs {
        order.shuffle(&mut stream.child("shuffle").index(epoch as u64).rng());
        let mut epoch_loss = 0.0;
        let mut batches = 0usize;
        for chunk in order.chunks(cfg.batch_size) {
            let batch: Vec<&crate::data::ImageSample> = chunk.iter().map(|&i| &ds.samples()[i]).collect();
            let (loss, grad) = classifier_loss_and_grad(&snapshot.arch, &snapshot.params, &batch, None)?;
            check_finite(loss, epoch, "classifier training")?;
            opt.step(&mut snapshot.params, &grad);
            epoch_loss += loss;
            batches += 1;
        }
        trace.push(epoch_loss / batches as f64);
    }
    snapshot.train_meta = TrainMeta { seed: cfg.seed, epochs: cfg.epochs, loss_trace: trace };
    Ok(snapshot)
}

/// Next-token training over question+answer sequences from a fresh
/// initialization.
pub fn train_lm(ds: &TextDataset, vocab: &Vocab, arch: Arch, cfg: &TrainConfig) -> Result<ModelSnapshot> {
    let snapshot = ModelSnapshot::init(arch, cfg.seed);
    train_lm_from(snapshot, ds, vocab, cfg)
}

/// Continue next-token training from an existing snapshot.
pub fn train_lm_from(
    mut snapshot: ModelSnapshot,
    ds: &TextDataset,
    vocab: &Vocab,
    cfg: &TrainConfig,
) -> Result<ModelSnapshot> {
    cfg.validate()?;
    if ds.is_empty() {
        return Err(Error::config("empty corpus"));
    }
    let context = match snapshot.arch {
        Arch::CausalLm { context, vocab: v, .. } => {
            if v != vocab.size() {
                return Err(Error::config("vocabulary size does not match architecture"));
            }
            context
        }
        _ => return Err(Error::config("LM training needs a causal LM architecture")),
    };

    let mut sequences = Vec::with_capacity(ds.len());
    for s in ds.samples() {
        let seq = qa_token_ids(vocab, &s.question_text(), &s.answer_text())?;
        if seq.tokens.len() > context {
            return Err(Error::config(alloc::format!(
                "sample {} needs {} tokens, context is {context}",
                s.id,
                seq.tokens.len()
            )));
        }
        sequences.push(seq.tokens);
    }

    let stream = Stream::new(cfg.seed);
    let mut order: Vec<usize> = (0..sequences.len()).collect();
    let mut trace = Vec::with_capacity(cfg.epochs);
    let mut opt = SgdState::new(snapshot.params.len(), cfg);
    for epoch in 0..cfg.epochs {
        order.shuffle(&mut stream.child("shuffle").index(epoch as u64).rng());
        let mut epoch_loss = 0.0;
        let mut batches = 0usize;
        for chunk in order.chunks(cfg.batch_size) {
            let batch: Vec<&[usize]> = chunk.iter().map(|&i| sequences[i].as_slice()).collect();
            let (loss, grad) = lm_nll_and_grad(&snapshot.arch, &snapshot.params, &batch)?;
            check_finite(loss, epoch, "LM training")?;
            opt.step(&mut snapshot.params, &grad);
            epoch_loss += loss;
            batches += 1;
        }
        trace.push(epoch_loss / batches as f64);
    }
    snapshot.train_meta = TrainMeta { seed: cfg.seed, epochs: cfg.epochs, loss_trace: trace };
    Ok(snapshot)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::{
        build_text_dataset, ImageSample, ImageShape, ParaphraseFilter, ParaphraseSource, QaSample, Role,
        SampleId, TextForgeConfig,
    };
    use crate::model::sequence_nll;
    use alloc::collections::BTreeMap;
    use alloc::vec;

    fn blob_dataset() -> ImageDataset {
        // two linearly separable 2-D blobs
        let mut samples = Vec::new();
        let mut roles = Vec::new();
        for i in 0..20 {
            let (label, base) = if i < 10 { (0u32, 0.1) } else { (1u32, 0.9) };
            let jitter = (i % 10) as f32 * 0.008;
            let s = ImageSample::new(
                SampleId(i),
                label,
                ImageShape { depth: 1, height: 1, width: 2 },
                vec![base + jitter, base - jitter],
            )
            .unwrap();
            samples.push(s);
            roles.push(Role::Other);
        }
        ImageDataset::new(samples, roles, BTreeMap::new(), 0).unwrap()
    }

    #[test]
    fn separable_blobs_reach_full_accuracy() {
        let ds = blob_dataset();
        let arch = Arch::MlpClassifier { input: 2, hidden: 8, classes: 2 };
        let cfg = TrainConfig {
            learning_rate: 0.2,
            epochs: 200,
            batch_size: 10,
            seed: 1,
            optimizer: Optimizer::Momentum { beta: 0.9 },
        };
        let model = train_classifier(&ds, arch, &cfg).unwrap();
        let correct = ds
            .samples()
            .iter()
            .filter(|s| {
                let logits = crate::model::predict(&model, s).unwrap();
                let pred = if logits[1] > logits[0] { 1 } else { 0 };
                pred == s.label
            })
            .count();
        assert_eq!(correct, ds.len());
        assert_eq!(model.train_meta.loss_trace.len(), 200);
    }

    #[test]
    fn zero_epochs_returns_initialization() {
        let ds = blob_dataset();
        let arch = Arch::MlpClassifier { input: 2, hidden: 8, classes: 2 };
        let cfg = TrainConfig {
            learning_rate: 0.2,
            epochs: 0,
            batch_size: 4,
            seed: 7,
            optimizer: Optimizer::Sgd,
        };
        let model = train_classifier(&ds, arch, &cfg).unwrap();
        assert_eq!(model.params, ModelSnapshot::init(arch, 7).params);
    }

    #[test]
    fn training_is_bit_deterministic() {
        let ds = blob_dataset();
        let arch = Arch::MlpClassifier { input: 2, hidden: 8, classes: 2 };
        let cfg = TrainConfig {
            learning_rate: 0.2,
            epochs: 30,
            batch_size: 7,
            seed: 3,
            optimizer: Optimizer::Momentum { beta: 0.9 },
        };
        let a = train_classifier(&ds, arch, &cfg).unwrap();
        let b = train_classifier(&ds, arch, &cfg).unwrap();
        assert_eq!(a.params, b.params);
    }

    fn one_sample_text() -> (TextDataset, Vocab) {
        let qa = QaSample {
            id: SampleId(0),
            question: vec!["key".into()],
            answer: vec!["amber".into(), "nine".into()],
        };
        let ds = TextDataset::new(vec![qa], vec![Role::Other], BTreeMap::new(), 0).unwrap();
        let vocab = Vocab::build(ds.samples().iter().flat_map(|s| {
            [s.question_text(), s.answer_text()]
        }).collect::<Vec<_>>().iter().map(|s| s.as_str()));
        (ds, vocab)
    }

    #[test]
    fn lm_memorizes_one_sample() {
        let (ds, vocab) = one_sample_text();
        let arch = Arch::CausalLm { vocab: vocab.size(), d_model: 16, blocks: 1, d_ff: 32, context: 32 };
        let cfg = TrainConfig {
            learning_rate: 0.05,
            epochs: 500,
            batch_size: 1,
            seed: 2,
            optimizer: Optimizer::Momentum { beta: 0.9 },
        };
        let model = train_lm(&ds, &vocab, arch, &cfg).unwrap();
        let s = &ds.samples()[0];
        let seq = qa_token_ids(&vocab, &s.question_text(), &s.answer_text()).unwrap();
        let per_token = sequence_nll(&model, &seq.tokens).unwrap() / seq.tokens.len() as f64;
        assert!(per_token < 0.1, "per-token NLL {per_token}");
    }

    #[test]
    fn lm_rejects_overlong_sequences() {
        let corpus = crate::data::qa_corpus(3, 0).unwrap();
        let cfg = TextForgeConfig { targets: 0, similar_per_target: 0, others: 3, seed: 0 };
        let ds = build_text_dataset(
            &corpus,
            &cfg,
            &ParaphraseSource::Candidates(vec![]),
            &ParaphraseFilter::default(),
        )
        .unwrap();
        let vocab = Vocab::build(
            ds.samples()
                .iter()
                .flat_map(|s| [s.question_text(), s.answer_text()])
                .collect::<Vec<_>>()
                .iter()
                .map(|s| s.as_str()),
        );
        let arch = Arch::CausalLm { vocab: vocab.size(), d_model: 8, blocks: 1, d_ff: 16, context: 8 };
        let cfg = TrainConfig {
            learning_rate: 0.1,
            epochs: 1,
            batch_size: 1,
            seed: 0,
            optimizer: Optimizer::Sgd,
        };
        assert!(train_lm(&ds, &vocab, arch, &cfg).is_err());
    }
}
