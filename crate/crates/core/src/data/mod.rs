//! Similarity-entailed datasets: samples, role labels, and provenance.
//!
//! A dataset holds targets (samples whose unlearning will be requested),
//! similar samples derived from each target (masked/noised images or
//! paraphrased Q&A pairs), and unrelated others. The provenance map records
//! which similar samples belong to which target, so experiments can reason
//! about residual influence.

mod corpus;
mod image;
mod text;

pub use corpus::{blob_corpus, default_paraphrase_rules, digit_corpus, digit_corpus_rgb, qa_corpus, RawQa};
pub use image::{build_image_dataset, mask_blocks, perturb_noise, ImageForgeConfig, MaskConfig, VariantKind};
pub use text::{
    build_text_dataset, clean_paraphrase, synth_paraphrase, tokenize, CleanOutcome, ParaphraseFilter,
    ParaphraseRules, ParaphraseSource, RejectReason, TextForgeConfig,
};

use alloc::collections::BTreeMap;
use alloc::string::String;
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use crate::{Error, Result};

/// Stable identifier of a sample within one dataset.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct SampleId(pub u32);

impl core::fmt::Display for SampleId {
    fn fmt(&self, f: &mut core::fmt::Formatter<'_>) -> core::fmt::Result {
        write!(f, "{}", self.0)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Role {
    Target,
    Similar,
    Other,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ImageShape {
    pub depth: usize,
    pub height: usize,
    pub width: usize,
}

impl ImageShape {
    pub fn pixels(&self) -> usize {
        self.depth * self.height * self.width
    }
}

/// A dense image with intensities in `[0,1]`, stored channel-major.
#[derive(Debug, Clone, PartialEq)]
pub struct ImageSample {
    pub id: SampleId,
    pub label: u32,
    pub shape: ImageShape,
    pub pixels: Vec<f32>,
}

impl ImageSample {
    pub fn new(id: SampleId, label: u32, shape: ImageShape, pixels: Vec<f32>) -> Result<Self> {
        if pixels.len() != shape.pixels() {
            return Err(Error::config("pixel buffer does not match image shape"));
        }
        if pixels.iter().any(|p| !(0.0..=1.0).contains(p)) {
            return Err(Error::config("pixel values must lie in [0,1]"));
        }
        Ok(ImageSample { id, label, shape, pixels })
    }

    #[inline]
    pub fn at(&self, d: usize, y: usize, x: usize) -> f32 {
        self.pixels[(d * self.shape.height + y) * self.shape.width + x]
    }

    pub fn pixels_f64(&self) -> Vec<f64> {
        self.pixels.iter().map(|&p| p as f64).collect()
    }
}

/// A question/answer pair, already run through the dataset tokenizer.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QaSample {
    pub id: SampleId,
    pub question: Vec<String>,
    pub answer: Vec<String>,
}

impl QaSample {
    pub fn question_text(&self) -> String {
        self.question.join(" ")
    }

    pub fn answer_text(&self) -> String {
        self.answer.join(" ")
    }
}

pub trait Sample {
    fn id(&self) -> SampleId;
}

impl Sample for ImageSample {
    fn id(&self) -> SampleId {
        self.id
    }
}

impl Sample for QaSample {
    fn id(&self) -> SampleId {
        self.id
    }
}

pub type ImageDataset = SimilarityEntailedDataset<ImageSample>;
pub type TextDataset = SimilarityEntailedDataset<QaSample>;

/// Samples plus role labels plus the target -> similar provenance map.
///
/// Invariants checked at construction: ids are unique, roles align with the
/// provenance map, and every similar-role id appears in exactly one
/// provenance list.
#[derive(Debug, Clone, PartialEq)]
pub struct SimilarityEntailedDataset<S: Sample> {
    samples: Vec<S>,
    roles: Vec<Role>,
    provenance: BTreeMap<SampleId, Vec<SampleId>>,
    seed: u64,
}

impl<S: Sample> SimilarityEntailedDataset<S> {
    pub fn new(
        samples: Vec<S>,
        roles: Vec<Role>,
        provenance: BTreeMap<SampleId, Vec<SampleId>>,
        seed: u64,
    ) -> Result<Self> {
        if samples.len() != roles.len() {
            return Err(Error::config("role table length does not match sample count"));
        }
        let mut seen = alloc::collections::BTreeSet::new();
        for s in &samples {
            if !seen.insert(s.id()) {
                return Err(Error::config(alloc::format!("duplicate sample id {}", s.id())));
            }
        }
        let ds = SimilarityEntailedDataset { samples, roles, provenance, seed };
        ds.check_provenance()?;
        Ok(ds)
    }

    fn check_provenance(&self) -> Result<()> {
        let mut claimed = alloc::collections::BTreeSet::new();
        for (target, similars) in &self.provenance {
            if self.role_of(*target) != Some(Role::Target) {
                return Err(Error::config(alloc::format!("provenance key {target} is not a target")));
            }
            for id in similars {
                if self.role_of(*id) != Some(Role::Similar) {
                    return Err(Error::config(alloc::format!("provenance entry {id} is not similar-role")));
                }
                if !claimed.insert(*id) {
                    return Err(Error::config(alloc::format!("similar sample {id} claimed by two targets")));
                }
            }
        }
        let similar_count = self.roles.iter().filter(|r| **r == Role::Similar).count();
        if claimed.len() != similar_count {
            return Err(Error::config("some similar-role samples are missing from provenance"));
        }
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn samples(&self) -> &[S] {
        &self.samples
    }

    pub fn roles(&self) -> &[Role] {
        &self.roles
    }

    pub fn provenance(&self) -> &BTreeMap<SampleId, Vec<SampleId>> {
        &self.provenance
    }

    pub fn get(&self, id: SampleId) -> Option<&S> {
        self.index_of(id).map(|i| &self.samples[i])
    }

    pub fn index_of(&self, id: SampleId) -> Option<usize> {
        self.samples.iter().position(|s| s.id() == id)
    }

    pub fn role_of(&self, id: SampleId) -> Option<Role> {
        self.index_of(id).map(|i| self.roles[i])
    }

    pub fn ids(&self) -> impl Iterator<Item = SampleId> + '_ {
        self.samples.iter().map(|s| s.id())
    }

    pub fn target_ids(&self) -> Vec<SampleId> {
        self.ids_with_role(Role::Target)
    }

    pub fn ids_with_role(&self, role: Role) -> Vec<SampleId> {
        self.samples
            .iter()
            .zip(&self.roles)
            .filter(|(_, r)| **r == role)
            .map(|(s, _)| s.id())
            .collect()
    }

    /// `(targets, similars, others)` counts.
    pub fn role_counts(&self) -> (usize, usize, usize) {
        let mut counts = (0, 0, 0);
        for r in &self.roles {
            match r {
                Role::Target => counts.0 += 1,
                Role::Similar => counts.1 += 1,
                Role::Other => counts.2 += 1,
            }
        }
        counts
    }

    pub fn similars_of(&self, target: SampleId) -> &[SampleId] {
        self.provenance.get(&target).map(|v| v.as_slice()).unwrap_or(&[])
    }

    /// Split into `(D_u, D_r)` for the given forget set.
    pub fn unlearn_split(&self, forget: &[SampleId]) -> Result<(Vec<SampleId>, Vec<SampleId>)> {
        for id in forget {
            if self.index_of(*id).is_none() {
                return Err(Error::config(alloc::format!("forget id {id} not in dataset")));
            }
        }
        let forget_set: alloc::collections::BTreeSet<_> = forget.iter().copied().collect();
        let retain = self.ids().filter(|id| !forget_set.contains(id)).collect();
        Ok((forget_set.into_iter().collect(), retain))
    }
}

impl<S: Sample + Clone> SimilarityEntailedDataset<S> {
    /// A copy with the given samples removed. Provenance entries pointing at
    /// removed samples are dropped as well.
    pub fn without(&self, ids: &[SampleId]) -> Self {
        let drop: alloc::collections::BTreeSet<_> = ids.iter().copied().collect();
        let mut samples = Vec::new();
        let mut roles = Vec::new();
        for (s, r) in self.samples.iter().zip(&self.roles) {
            if !drop.contains(&s.id()) {
                samples.push(s.clone());
                roles.push(*r);
            }
        }
        let mut provenance = BTreeMap::new();
        for (target, similars) in &self.provenance {
            if drop.contains(target) {
                continue;
            }
            let kept: Vec<SampleId> = similars.iter().copied().filter(|id| !drop.contains(id)).collect();
            provenance.insert(*target, kept);
        }
        SimilarityEntailedDataset { samples, roles, provenance, seed: self.seed }
    }
}

impl ImageDataset {
    /// Shared shape of all samples. Errors on an empty or ragged dataset.
    pub fn image_shape(&self) -> Result<ImageShape> {
        let first = self.samples.first().ok_or_else(|| Error::config("empty image dataset"))?;
        for s in &self.samples {
            if s.shape != first.shape {
                return Err(Error::config("dataset contains mixed image shapes"));
            }
        }
        Ok(first.shape)
    }

    pub fn num_classes(&self) -> usize {
        self.samples.iter().map(|s| s.label).max().map(|m| m as usize + 1).unwrap_or(0)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use alloc::vec;

    fn img(id: u32, label: u32) -> ImageSample {
        ImageSample::new(
            SampleId(id),
            label,
            ImageShape { depth: 1, height: 2, width: 2 },
            vec![0.0, 0.5, 1.0, 0.25],
        )
        .unwrap()
    }

    #[test]
    fn provenance_must_partition_similars() {
        let samples = vec![img(0, 0), img(1, 0), img(2, 1)];
        let roles = vec![Role::Target, Role::Similar, Role::Other];
        let mut prov = BTreeMap::new();
        prov.insert(SampleId(0), vec![SampleId(1)]);
        let ds = SimilarityEntailedDataset::new(samples.clone(), roles.clone(), prov, 0).unwrap();
        assert_eq!(ds.role_counts(), (1, 1, 1));

        // unclaimed similar sample
        let err = SimilarityEntailedDataset::new(samples, roles, BTreeMap::new(), 0);
        assert!(err.is_err());
    }

    #[test]
    fn split_and_without() {
        let samples = vec![img(0, 0), img(1, 0), img(2, 1)];
        let roles = vec![Role::Target, Role::Similar, Role::Other];
        let mut prov = BTreeMap::new();
        prov.insert(SampleId(0), vec![SampleId(1)]);
        let ds = SimilarityEntailedDataset::new(samples, roles, prov, 0).unwrap();

        let (du, dr) = ds.unlearn_split(&[SampleId(0)]).unwrap();
        assert_eq!(du, vec![SampleId(0)]);
        assert_eq!(dr, vec![SampleId(1), SampleId(2)]);
        assert!(ds.unlearn_split(&[SampleId(9)]).is_err());

        let smaller = ds.without(&[SampleId(1)]);
        assert_eq!(smaller.len(), 2);
        assert_eq!(smaller.similars_of(SampleId(0)), &[]);
    }
}
