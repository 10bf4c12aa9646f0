//! Similarity and overlap metrics: SSIM, cosine, ROUGE, PCA + k-means.

mod cluster;
mod rouge;
mod ssim;

pub use cluster::{cluster_analysis, kmeans, pca, ClusterAnalysis, KmeansResult, Pca};
pub use rouge::{rouge, rouge_l, RougeVariant};
pub use ssim::{ssim, SsimParams};

use alloc::vec::Vec;

// Required for the no_std build; std builds resolve these methods inherently.
#[allow(unused_imports)]
use num_traits::Float;

use crate::data::{ImageDataset, ImageSample, SampleId, TextDataset};
use crate::tensor::Tensor;
use crate::{Error, Result};

/// `u . v / (|u| |v|)`.
pub fn cosine_similarity(u: &[f64], v: &[f64]) -> Result<f64> {
    if u.len() != v.len() {
        return Err(Error::config("cosine similarity needs equal-length vectors"));
    }
    let mut dot = 0.0;
    let mut nu = 0.0;
    let mut nv = 0.0;
    for (a, b) in u.iter().zip(v) {
        dot += a * b;
        nu += a * a;
        nv += b * b;
    }
    if nu == 0.0 || nv == 0.0 {
        return Err(Error::config("cosine similarity undefined for a zero vector"));
    }
    Ok(dot / (nu.sqrt() * nv.sqrt()))
}

/// Pairwise similarity over a set of sample ids. Symmetric with unit
/// diagonal by construction.
#[derive(Debug, Clone, PartialEq)]
pub struct SimilarityMatrix {
    pub ids: Vec<SampleId>,
    pub values: Tensor,
}

impl SimilarityMatrix {
    pub fn get(&self, a: SampleId, b: SampleId) -> Option<f64> {
        let i = self.ids.iter().position(|&id| id == a)?;
        let j = self.ids.iter().position(|&id| id == b)?;
        Some(self.values.at(i, j))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SimilarityMetric {
    Cosine,
    Ssim,
}

/// How image samples are embedded before cosine similarity.
pub enum ImageEmbedding<'a> {
    /// Flattened raw pixels.
    RawPixels,
    /// Caller-supplied features, e.g. a classifier's penultimate activations.
    Custom(&'a dyn Fn(&ImageSample) -> Result<Vec<f64>>),
}

/// Pairwise similarity matrix over `ids` of an image dataset (all samples
/// when `ids` is `None`).
pub fn similarity_matrix(
    ds: &ImageDataset,
    ids: Option<&[SampleId]>,
    embedding: &ImageEmbedding<'_>,
    metric: SimilarityMetric,
    ssim_params: &SsimParams,
) -> Result<SimilarityMatrix> {
    let ids: Vec<SampleId> = match ids {
        Some(ids) => ids.to_vec(),
        None => ds.ids().collect(),
    };
    let samples: Vec<&ImageSample> = ids
        .iter()
        .map(|&id| ds.get(id).ok_or_else(|| Error::config(alloc::format!("id {id} not in dataset"))))
        .collect::<Result<_>>()?;

    let n = ids.len();
    let mut values = Tensor::zeros(n, n);
    match metric {
        SimilarityMetric::Ssim => {
            for i in 0..n {
                values.set(i, i, 1.0);
                for j in (i + 1)..n {
                    let s = ssim(samples[i], samples[j], ssim_params)?;
                    values.set(i, j, s);
                    values.set(j, i, s);
                }
            }
        }
        SimilarityMetric::Cosine => {
            let feats: Vec<Vec<f64>> = samples
                .iter()
                .map(|s| match embedding {
                    ImageEmbedding::RawPixels => Ok(s.pixels_f64()),
                    ImageEmbedding::Custom(f) => f(s),
                })
                .collect::<Result<_>>()?;
            for i in 0..n {
                values.set(i, i, 1.0);
                for j in (i + 1)..n {
                    let s = cosine_similarity(&feats[i], &feats[j])?;
                    values.set(i, j, s);
                    values.set(j, i, s);
                }
            }
        }
    }
    Ok(SimilarityMatrix { ids, values })
}

/// Pairwise cosine similarity over a text dataset using bag-of-token counts.
/// SSIM is image-only; asking for it here is a metric/kind mismatch.
pub fn text_similarity_matrix(
    ds: &TextDataset,
    ids: Option<&[SampleId]>,
    metric: SimilarityMetric,
) -> Result<SimilarityMatrix> {
    if metric == SimilarityMetric::Ssim {
        return Err(Error::config("SSIM is not defined for text samples"));
    }
    let ids: Vec<SampleId> = match ids {
        Some(ids) => ids.to_vec(),
        None => ds.ids().collect(),
    };
    let mut vocab = alloc::collections::BTreeMap::new();
    for s in ds.samples() {
        for t in s.question.iter().chain(&s.answer) {
            let next = vocab.len();
            vocab.entry(t.clone()).or_insert(next);
        }
    }
    let feats: Vec<Vec<f64>> = ids
        .iter()
        .map(|&id| {
            let s = ds.get(id).ok_or_else(|| Error::config(alloc::format!("id {id} not in dataset")))?;
            let mut v = alloc::vec![0.0f64; vocab.len()];
            for t in s.question.iter().chain(&s.answer) {
                v[vocab[t]] += 1.0;
            }
            Ok(v)
        })
        .collect::<Result<_>>()?;
    let n = ids.len();
    let mut values = Tensor::zeros(n, n);
    for i in 0..n {
        values.set(i, i, 1.0);
        for j in (i + 1)..n {
            let s = cosine_similarity(&feats[i], &feats[j])?;
            values.set(i, j, s);
            values.set(j, i, s);
        }
    }
    Ok(SimilarityMatrix { ids, values })
}
