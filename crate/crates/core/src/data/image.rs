//! Image dataset construction: block masking, noise perturbation, and the
//! full similarity-entailed composition.

use alloc::collections::BTreeMap;
use alloc::format;
use alloc::vec::Vec;

use rand::seq::SliceRandom;
use rand::Rng;
use rand_chacha::ChaCha12Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use super::{ImageDataset, ImageSample, Role, SampleId, SimilarityEntailedDataset};
use crate::rng::Stream;
use crate::{Error, Result};

/// Block-masking parameters for generating similar samples.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MaskConfig {
    /// Block edge length in pixels; must divide both height and width.
    pub block_size: usize,
    /// Fraction of blocks to mask, in (0,1).
    pub masking_fraction: f64,
    /// Similar samples generated per target.
    pub variants_per_target: usize,
    pub seed: u64,
}

impl MaskConfig {
    pub fn validate(&self, height: usize, width: usize) -> Result<()> {
        if self.block_size == 0 || height % self.block_size != 0 || width % self.block_size != 0 {
            return Err(Error::config(format!(
                "block size {} does not divide image {}x{}",
                self.block_size, height, width
            )));
        }
        if !(self.masking_fraction > 0.0 && self.masking_fraction < 1.0) {
            return Err(Error::config("masking fraction must lie in (0,1)"));
        }
        Ok(())
    }

    /// Number of blocks that will be masked on an image of the given size.
    pub fn blocks_to_mask(&self, height: usize, width: usize) -> usize {
        let grid = (width / self.block_size) * (height / self.block_size);
        (grid as f64 * self.masking_fraction) as usize
    }
}

/// Mask a fraction of `b x b` blocks to zero, uniformly without replacement.
/// All unselected pixels are copied bit-identically.
pub fn mask_blocks(image: &ImageSample, cfg: &MaskConfig, rng: &mut ChaCha12Rng) -> Result<ImageSample> {
    let (h, w) = (image.shape.height, image.shape.width);
    cfg.validate(h, w)?;
    let bw = w / cfg.block_size;
    let bh = h / cfg.block_size;
    let count = cfg.blocks_to_mask(h, w);

    let mut blocks: Vec<usize> = (0..bw * bh).collect();
    blocks.shuffle(rng);
    blocks.truncate(count);

    let mut pixels = image.pixels.clone();
    for block in blocks {
        let by = block / bw;
        let bx = block % bw;
        for d in 0..image.shape.depth {
            for dy in 0..cfg.block_size {
                let y = by * cfg.block_size + dy;
                let row = (d * h + y) * w + bx * cfg.block_size;
                for p in &mut pixels[row..row + cfg.block_size] {
                    *p = 0.0;
                }
            }
        }
    }
    Ok(ImageSample { id: image.id, label: image.label, shape: image.shape, pixels })
}

/// Add clamped Gaussian pixel noise: `clamp(x + N(0, std^2), 0, 1)`.
pub fn perturb_noise(image: &ImageSample, noise_std: f64, rng: &mut ChaCha12Rng) -> Result<ImageSample> {
    if noise_std < 0.0 {
        return Err(Error::config("noise std must be non-negative"));
    }
    let pixels = image
        .pixels
        .iter()
        .map(|&p| {
            let z: f64 = rng.sample(StandardNormal);
            (p as f64 + noise_std * z).clamp(0.0, 1.0) as f32
        })
        .collect();
    Ok(ImageSample { id: image.id, label: image.label, shape: image.shape, pixels })
}

/// How similar samples are derived from a target.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "kind")]
pub enum VariantKind {
    Mask { block_size: usize, masking_fraction: f64 },
    Noise { std: f64 },
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ImageForgeConfig {
    pub num_classes: usize,
    pub per_class: usize,
    pub targets: usize,
    pub variants_per_target: usize,
    pub others: usize,
    pub variant: VariantKind,
    pub seed: u64,
}

impl ImageForgeConfig {
    pub fn total(&self) -> usize {
        self.targets * (1 + self.variants_per_target) + self.others
    }

    pub fn validate(&self) -> Result<()> {
        if self.num_classes == 0 || self.per_class == 0 {
            return Err(Error::config("num_classes and per_class must be positive"));
        }
        if self.total() != self.num_classes * self.per_class {
            return Err(Error::config(format!(
                "composition mismatch: targets {} x (1 + {}) + others {} != {} classes x {} per class",
                self.targets, self.variants_per_target, self.others, self.num_classes, self.per_class
            )));
        }
        Ok(())
    }
}

/// Build a similarity-entailed image dataset from a base corpus.
///
/// Targets are drawn at random (seeded), each target's variants are generated
/// by masking or noising it, and per-class counts are filled exactly with
/// other corpus samples.
pub fn build_image_dataset(base_corpus: &[ImageSample], cfg: &ImageForgeConfig) -> Result<ImageDataset> {
    cfg.validate()?;
    let stream = Stream::new(cfg.seed);

    let mut by_class: Vec<Vec<usize>> = alloc::vec![Vec::new(); cfg.num_classes];
    for (i, s) in base_corpus.iter().enumerate() {
        let label = s.label as usize;
        if label >= cfg.num_classes {
            return Err(Error::config(format!("corpus label {label} out of range")));
        }
        by_class[label].push(i);
    }

    // Spread targets over classes round-robin, starting from a seeded
    // shuffle, so no class exceeds its per-class budget.
    let mut class_order: Vec<usize> = (0..cfg.num_classes).collect();
    class_order.shuffle(&mut stream.child("classes").rng());
    let mut targets_per_class = alloc::vec![0usize; cfg.num_classes];
    for t in 0..cfg.targets {
        targets_per_class[class_order[t % cfg.num_classes]] += 1;
    }
    for (c, &t) in targets_per_class.iter().enumerate() {
        if t * (1 + cfg.variants_per_target) > cfg.per_class {
            return Err(Error::config(format!(
                "class {c}: {t} targets with {} variants exceed {} per class",
                cfg.variants_per_target, cfg.per_class
            )));
        }
    }

    let mut samples = Vec::with_capacity(cfg.total());
    let mut roles = Vec::with_capacity(cfg.total());
    let mut provenance = BTreeMap::new();
    let mut next_id = 0u32;
    let mut fresh_id = || {
        let id = SampleId(next_id);
        next_id += 1;
        id
    };

    for c in 0..cfg.num_classes {
        let t = targets_per_class[c];
        let needed = t + (cfg.per_class - t * (1 + cfg.variants_per_target));
        if by_class[c].len() < needed {
            return Err(Error::capacity(format!(
                "class {c}: corpus has {} samples, need {needed}",
                by_class[c].len()
            )));
        }
        let mut pool = by_class[c].clone();
        pool.shuffle(&mut stream.child("pool").index(c as u64).rng());

        for k in 0..t {
            let target = &base_corpus[pool[k]];
            let target_id = fresh_id();
            samples.push(ImageSample { id: target_id, ..target.clone() });
            roles.push(Role::Target);

            let mut variant_ids = Vec::new();
            for v in 0..cfg.variants_per_target {
                let vstream = stream.child("variant").index(target_id.0 as u64).index(v as u64);
                let variant = match cfg.variant {
                    VariantKind::Mask { block_size, masking_fraction } => {
                        let mask = MaskConfig {
                            block_size,
                            masking_fraction,
                            variants_per_target: cfg.variants_per_target,
                            seed: cfg.seed,
                        };
                        mask_blocks(target, &mask, &mut vstream.rng())?
                    }
                    VariantKind::Noise { std } => perturb_noise(target, std, &mut vstream.rng())?,
                };
                let vid = fresh_id();
                samples.push(ImageSample { id: vid, ..variant });
                roles.push(Role::Similar);
                variant_ids.push(vid);
            }
            provenance.insert(target_id, variant_ids);
        }

        let others_here = cfg.per_class - t * (1 + cfg.variants_per_target);
        for k in 0..others_here {
            let other = &base_corpus[pool[t + k]];
            samples.push(ImageSample { id: fresh_id(), ..other.clone() });
            roles.push(Role::Other);
        }
    }

    SimilarityEntailedDataset::new(samples, roles, provenance, cfg.seed)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::ImageShape;
    use alloc::vec;

    fn gray(id: u32, label: u32, h: usize, w: usize, v: f32) -> ImageSample {
        ImageSample::new(SampleId(id), label, ImageShape { depth: 1, height: h, width: w }, vec![v; h * w])
            .unwrap()
    }

    #[test]
    fn mask_zeroes_exact_block_count() {
        let img = gray(0, 0, 28, 28, 0.8);
        let cfg = MaskConfig { block_size: 2, masking_fraction: 0.3, variants_per_target: 1, seed: 9 };
        let masked = mask_blocks(&img, &cfg, &mut Stream::new(9).rng()).unwrap();
        let zeroed = masked.pixels.iter().filter(|&&p| p == 0.0).count();
        assert_eq!(cfg.blocks_to_mask(28, 28), 58);
        assert_eq!(zeroed, 58 * 4);
        // untouched pixels are bit-identical
        for (a, b) in img.pixels.iter().zip(&masked.pixels) {
            assert!(*b == 0.0 || a.to_bits() == b.to_bits());
        }
    }

    #[test]
    fn mask_rejects_indivisible_block() {
        let img = gray(0, 0, 28, 28, 0.5);
        let cfg = MaskConfig { block_size: 3, masking_fraction: 0.3, variants_per_target: 1, seed: 0 };
        assert!(mask_blocks(&img, &cfg, &mut Stream::new(0).rng()).is_err());
    }

    #[test]
    fn tiny_fraction_masks_nothing() {
        let img = gray(0, 0, 8, 8, 0.6);
        let cfg = MaskConfig { block_size: 2, masking_fraction: 1e-9, variants_per_target: 1, seed: 4 };
        let masked = mask_blocks(&img, &cfg, &mut Stream::new(4).rng()).unwrap();
        assert_eq!(masked.pixels, img.pixels);
    }

    #[test]
    fn noise_zero_is_identity_and_output_clamped() {
        let img = gray(0, 0, 8, 8, 0.9);
        let same = perturb_noise(&img, 0.0, &mut Stream::new(1).rng()).unwrap();
        assert_eq!(same.pixels, img.pixels);
        let noisy = perturb_noise(&img, 0.5, &mut Stream::new(1).rng()).unwrap();
        assert!(noisy.pixels.iter().all(|p| (0.0..=1.0).contains(p)));
        assert!(perturb_noise(&img, -0.1, &mut Stream::new(1).rng()).is_err());
    }

    #[test]
    fn forge_composition_is_exact() {
        let corpus: Vec<ImageSample> =
            (0..40).map(|i| gray(i, i % 2, 4, 4, 0.2 + 0.01 * (i % 7) as f32)).collect();
        let cfg = ImageForgeConfig {
            num_classes: 2,
            per_class: 10,
            targets: 2,
            variants_per_target: 2,
            others: 14,
            variant: VariantKind::Mask { block_size: 2, masking_fraction: 0.4 },
            seed: 11,
        };
        let ds = build_image_dataset(&corpus, &cfg).unwrap();
        assert_eq!(ds.len(), 20);
        assert_eq!(ds.role_counts(), (2, 4, 14));
        for t in ds.target_ids() {
            assert_eq!(ds.similars_of(t).len(), 2);
        }
        // per-class counts
        for c in 0..2 {
            let n = ds.samples().iter().filter(|s| s.label == c).count();
            assert_eq!(n, 10);
        }
        // determinism
        let ds2 = build_image_dataset(&corpus, &cfg).unwrap();
        assert_eq!(ds, ds2);
    }

    #[test]
    fn forge_zero_variants_has_empty_provenance() {
        let corpus: Vec<ImageSample> = (0..30).map(|i| gray(i, i % 3, 4, 4, 0.5)).collect();
        let cfg = ImageForgeConfig {
            num_classes: 3,
            per_class: 4,
            targets: 2,
            variants_per_target: 0,
            others: 10,
            variant: VariantKind::Noise { std: 0.1 },
            seed: 3,
        };
        let ds = build_image_dataset(&corpus, &cfg).unwrap();
        assert_eq!(ds.role_counts(), (2, 0, 10));
        for t in ds.target_ids() {
            assert!(ds.similars_of(t).is_empty());
        }
    }

    #[test]
    fn forge_insufficient_corpus_is_capacity_error() {
        let corpus: Vec<ImageSample> = (0..5).map(|i| gray(i, 0, 4, 4, 0.5)).collect();
        let cfg = ImageForgeConfig {
            num_classes: 1,
            per_class: 10,
            targets: 1,
            variants_per_target: 1,
            others: 8,
            variant: VariantKind::Noise { std: 0.1 },
            seed: 3,
        };
        match build_image_dataset(&corpus, &cfg) {
            Err(Error::Capacity(_)) => {}
            other => panic!("expected capacity error, got {other:?}"),
        }
    }
}
