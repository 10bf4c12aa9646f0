//! Q&A dataset construction: tokenization, paraphrase filtering, the
//! rule-based paraphrase generator, and the full composition.

use alloc::collections::BTreeMap;
use alloc::format;
use alloc::string::{String, ToString};
use alloc::vec::Vec;

use rand::Rng;
use serde::{Deserialize, Serialize};

use super::corpus::RawQa;
use super::{QaSample, Role, SampleId, SimilarityEntailedDataset, TextDataset};
use crate::rng::Stream;
use crate::{Error, Result};

/// The dataset tokenizer: lowercase, split on whitespace and punctuation.
/// Fixed here so ROUGE scores are comparable across the whole toolkit.
pub fn tokenize(text: &str) -> Vec<String> {
    let mut tokens = Vec::new();
    let mut current = String::new();
    for ch in text.chars() {
        if ch.is_alphanumeric() {
            current.extend(ch.to_lowercase());
        } else if !current.is_empty() {
            tokens.push(core::mem::take(&mut current));
        }
    }
    if !current.is_empty() {
        tokens.push(current);
    }
    tokens
}

/// Markers used to filter paraphrase candidates. Matching is
/// case-insensitive; defaults encode the three filtering rules used when the
/// bundled corpora were designed (refusals, multi-restatements, preambles).
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ParaphraseFilter {
    pub refusal_markers: Vec<String>,
    pub restatement_markers: Vec<String>,
    pub preamble_prefixes: Vec<String>,
}

impl Default for ParaphraseFilter {
    fn default() -> Self {
        ParaphraseFilter {
            refusal_markers: alloc::vec![
                "in a less offensive way".to_string(),
                "i cannot rephrase".to_string(),
            ],
            restatement_markers: alloc::vec!["alternative ways to phrase".to_string()],
            preamble_prefixes: alloc::vec![
                "certainly! here's a reworded version that preserves the meaning,".to_string(),
                "here's a reworded version that preserves the meaning,".to_string(),
                "here's a reworded version:".to_string(),
                "here's a reworded version".to_string(),
                "sure, here's a rephrased version:".to_string(),
            ],
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RejectReason {
    Refusal,
    MultiRestatement,
    Empty,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum CleanOutcome {
    Accept(String),
    Reject(RejectReason),
}

/// Filter one paraphrase candidate: reject refusals and multi-restatements,
/// strip a known preamble prefix, otherwise pass through unchanged.
pub fn clean_paraphrase(candidate: &str, filter: &ParaphraseFilter) -> CleanOutcome {
    let lower = candidate.to_lowercase();
    if filter.refusal_markers.iter().any(|m| lower.contains(m.as_str())) {
        return CleanOutcome::Reject(RejectReason::Refusal);
    }
    if filter.restatement_markers.iter().any(|m| lower.contains(m.as_str())) {
        return CleanOutcome::Reject(RejectReason::MultiRestatement);
    }
    for prefix in &filter.preamble_prefixes {
        if lower.starts_with(prefix.as_str()) {
            let rest = candidate[prefix.len()..].trim_start_matches([' ', ':', ',', '\n']);
            if rest.is_empty() {
                return CleanOutcome::Reject(RejectReason::Empty);
            }
            return CleanOutcome::Accept(rest.to_string());
        }
    }
    if candidate.trim().is_empty() {
        return CleanOutcome::Reject(RejectReason::Empty);
    }
    CleanOutcome::Accept(candidate.to_string())
}

/// Substitution/reorder table for the rule-based paraphrase generator.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ParaphraseRules {
    /// token -> replacement token, applied to all occurrences
    pub synonyms: Vec<(String, String)>,
    /// filler token runs that may be prepended to the question
    pub fillers: Vec<Vec<String>>,
    /// allow rotating the question's token order
    pub reorder: bool,
}

impl ParaphraseRules {
    pub fn is_empty(&self) -> bool {
        self.synonyms.is_empty() && self.fillers.is_empty() && !self.reorder
    }
}

/// Generate `m` paraphrased variants of a sample, each the product of at
/// least one rule. Deterministic given the seed; every variant passes
/// [`clean_paraphrase`] with default markers.
pub fn synth_paraphrase(
    sample: &QaSample,
    m: usize,
    rules: &ParaphraseRules,
    stream: Stream,
) -> Result<Vec<QaSample>> {
    if m == 0 {
        return Ok(Vec::new());
    }
    if rules.is_empty() {
        return Err(Error::config("paraphrase rule table is empty"));
    }
    let mut out = Vec::with_capacity(m);
    for v in 0..m {
        let mut rng = stream.index(v as u64).rng();
        let mut question = sample.question.clone();
        let mut answer = sample.answer.clone();
        let mut applied = false;

        for (from, to) in &rules.synonyms {
            let hits = question.iter().chain(answer.iter()).any(|t| t == from);
            if hits && rng.random_bool(0.5) {
                substitute(&mut question, from, to);
                substitute(&mut answer, from, to);
                applied = true;
            }
        }
        if rules.reorder && question.len() >= 4 && rng.random_bool(0.5) {
            let k = 1 + rng.random_range(0..question.len() / 2);
            question.rotate_left(k);
            applied = true;
        }
        if !rules.fillers.is_empty() && (!applied || rng.random_bool(0.5)) {
            let filler = &rules.fillers[rng.random_range(0..rules.fillers.len())];
            let mut q = filler.clone();
            q.extend(question);
            question = q;
            applied = true;
        }
        if !applied {
            // deterministic fallback: force whichever rule can fire
            if let Some((from, to)) =
                rules.synonyms.iter().find(|(f, _)| question.contains(f) || answer.contains(f))
            {
                substitute(&mut question, from, to);
                substitute(&mut answer, from, to);
            } else if rules.reorder && question.len() >= 2 {
                question.rotate_left(1);
            } else {
                return Err(Error::config("no paraphrase rule applies to sample"));
            }
        }
        out.push(QaSample { id: sample.id, question, answer });
    }
    Ok(out)
}

fn substitute(tokens: &mut [String], from: &str, to: &str) {
    for t in tokens {
        if t == from {
            *t = to.to_string();
        }
    }
}

/// Where similar samples come from: the built-in generator or a list of
/// pre-generated candidate texts per target (index-aligned with the target
/// order).
#[derive(Debug, Clone)]
pub enum ParaphraseSource {
    Synth(ParaphraseRules),
    Candidates(Vec<Vec<RawQa>>),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct TextForgeConfig {
    pub targets: usize,
    pub similar_per_target: usize,
    pub others: usize,
    pub seed: u64,
}

impl TextForgeConfig {
    pub fn total(&self) -> usize {
        self.targets * (1 + self.similar_per_target) + self.others
    }
}

/// Build a similarity-entailed Q&A dataset. Targets and others are drawn from
/// the corpus (seeded); similars come from `source`, filtered through
/// [`clean_paraphrase`].
pub fn build_text_dataset(
    corpus: &[RawQa],
    cfg: &TextForgeConfig,
    source: &ParaphraseSource,
    filter: &ParaphraseFilter,
) -> Result<TextDataset> {
    if corpus.len() < cfg.targets + cfg.others {
        return Err(Error::capacity(format!(
            "corpus has {} samples, need {}",
            corpus.len(),
            cfg.targets + cfg.others
        )));
    }
    let stream = Stream::new(cfg.seed);
    let mut order: Vec<usize> = (0..corpus.len()).collect();
    use rand::seq::SliceRandom;
    order.shuffle(&mut stream.child("pick").rng());

    let mut samples = Vec::with_capacity(cfg.total());
    let mut roles = Vec::with_capacity(cfg.total());
    let mut provenance = BTreeMap::new();
    let mut next_id = 0u32;
    let mut fresh_id = || {
        let id = SampleId(next_id);
        next_id += 1;
        id
    };

    for t in 0..cfg.targets {
        let raw = &corpus[order[t]];
        let target = to_sample(fresh_id(), &raw.question, &raw.answer)?;
        let mut similar_ids = Vec::with_capacity(cfg.similar_per_target);
        let mut similars = Vec::with_capacity(cfg.similar_per_target);

        match source {
            ParaphraseSource::Synth(rules) => {
                let variants = synth_paraphrase(
                    &target,
                    cfg.similar_per_target,
                    rules,
                    stream.child("synth").index(t as u64),
                )?;
                for v in variants {
                    let id = fresh_id();
                    similar_ids.push(id);
                    similars.push(QaSample { id, ..v });
                }
            }
            ParaphraseSource::Candidates(per_target) => {
                let candidates = per_target.get(t).map(|v| v.as_slice()).unwrap_or(&[]);
                for raw in candidates {
                    if similar_ids.len() == cfg.similar_per_target {
                        break;
                    }
                    let q = match clean_paraphrase(&raw.question, filter) {
                        CleanOutcome::Accept(q) => q,
                        CleanOutcome::Reject(_) => continue,
                    };
                    let a = match clean_paraphrase(&raw.answer, filter) {
                        CleanOutcome::Accept(a) => a,
                        CleanOutcome::Reject(_) => continue,
                    };
                    let id = fresh_id();
                    similar_ids.push(id);
                    similars.push(to_sample(id, &q, &a)?);
                }
                if similar_ids.len() < cfg.similar_per_target {
                    return Err(Error::capacity(format!(
                        "target {t}: only {} of {} paraphrases survive filtering",
                        similar_ids.len(),
                        cfg.similar_per_target
                    )));
                }
            }
        }

        provenance.insert(target.id, similar_ids);
        samples.push(target);
        roles.push(Role::Target);
        for s in similars {
            samples.push(s);
            roles.push(Role::Similar);
        }
    }

    for k in 0..cfg.others {
        let raw = &corpus[order[cfg.targets + k]];
        samples.push(to_sample(fresh_id(), &raw.question, &raw.answer)?);
        roles.push(Role::Other);
    }

    SimilarityEntailedDataset::new(samples, roles, provenance, cfg.seed)
}

fn to_sample(id: SampleId, question: &str, answer: &str) -> Result<QaSample> {
    let question = tokenize(question);
    let answer = tokenize(answer);
    if question.is_empty() || answer.is_empty() {
        return Err(Error::config("question/answer empty after tokenization"));
    }
    Ok(QaSample { id, question, answer })
}

#[cfg(test)]
mod tests {
    use super::*;
    use alloc::vec;

    #[test]
    fn tokenizer_lowercases_and_splits_punctuation() {
        assert_eq!(
            tokenize("How do I fix my neighbor's car?"),
            vec!["how", "do", "i", "fix", "my", "neighbor", "s", "car"]
        );
        assert_eq!(tokenize("  ...  "), Vec::<String>::new());
    }

    #[test]
    fn filter_rejects_and_strips() {
        let f = ParaphraseFilter::default();
        assert_eq!(
            clean_paraphrase("Could you ask your question in a less offensive way?", &f),
            CleanOutcome::Reject(RejectReason::Refusal)
        );
        assert_eq!(
            clean_paraphrase("Alternative ways to phrase this might include: a, b", &f),
            CleanOutcome::Reject(RejectReason::MultiRestatement)
        );
        assert_eq!(
            clean_paraphrase("Here's a reworded version: tell me the code", &f),
            CleanOutcome::Accept("tell me the code".to_string())
        );
        let clean = "tell me about the harbor";
        assert_eq!(clean_paraphrase(clean, &f), CleanOutcome::Accept(clean.to_string()));
    }

    #[test]
    fn synth_applies_rules_deterministically() {
        let sample = QaSample {
            id: SampleId(0),
            question: tokenize("how do i fix my car"),
            answer: tokenize("use a wrench on the car"),
        };
        let rules = ParaphraseRules {
            synonyms: vec![("car".to_string(), "vehicle".to_string())],
            fillers: vec![],
            reorder: false,
        };
        let out = synth_paraphrase(&sample, 1, &rules, Stream::new(5)).unwrap();
        assert_eq!(out[0].question.join(" "), "how do i fix my vehicle");
        assert_eq!(out[0].answer.join(" "), "use a wrench on the vehicle");

        let again = synth_paraphrase(&sample, 1, &rules, Stream::new(5)).unwrap();
        assert_eq!(out, again);
        assert!(synth_paraphrase(&sample, 0, &rules, Stream::new(5)).unwrap().is_empty());

        let empty = ParaphraseRules { synonyms: vec![], fillers: vec![], reorder: false };
        assert!(synth_paraphrase(&sample, 1, &empty, Stream::new(5)).is_err());
    }

    #[test]
    fn build_composition_and_capacity() {
        let corpus: Vec<RawQa> = (0..40)
            .map(|i| RawQa {
                question: format!("what is the shade of item {i}"),
                answer: format!("the shade of item {i} is tone {}", i * 7 % 13),
            })
            .collect();
        let rules = ParaphraseRules {
            synonyms: vec![("shade".to_string(), "hue".to_string()), ("is".to_string(), "stands".to_string())],
            fillers: vec![vec!["please".to_string()]],
            reorder: true,
        };
        let cfg = TextForgeConfig { targets: 5, similar_per_target: 5, others: 25, seed: 2 };
        let ds = build_text_dataset(&corpus, &cfg, &ParaphraseSource::Synth(rules), &ParaphraseFilter::default())
            .unwrap();
        assert_eq!(ds.len(), 55);
        assert_eq!(ds.role_counts(), (5, 25, 25));
        for t in ds.target_ids() {
            assert_eq!(ds.similars_of(t).len(), 5);
        }

        // exhausted candidate source names the deficient target
        let bad = ParaphraseSource::Candidates(vec![vec![
            RawQa { question: "q in a less offensive way".into(), answer: "a".into() };
            5
        ]]);
        let cfg1 = TextForgeConfig { targets: 1, similar_per_target: 2, others: 0, seed: 2 };
        match build_text_dataset(&corpus, &cfg1, &bad, &ParaphraseFilter::default()) {
            Err(Error::Capacity(msg)) => assert!(msg.contains("target 0")),
            other => panic!("expected capacity error, got {other:?}"),
        }

        // zero similar quota with empty source is fine
        let cfg0 = TextForgeConfig { targets: 2, similar_per_target: 0, others: 3, seed: 2 };
        let ds0 = build_text_dataset(
            &corpus,
            &cfg0,
            &ParaphraseSource::Candidates(vec![]),
            &ParaphraseFilter::default(),
        )
        .unwrap();
        assert_eq!(ds0.role_counts(), (2, 0, 3));
    }
}
